"""Short q-learning run for the Gaussian-policy experiment.

A scaled-down version of the first preset (fewer iterations and paths) so the
parameter drift toward the environment truth is visible in seconds. The full
preset is `regime-q run --preset emv_p1`.

Run:  python demos/04_q_learning_gaussian.py
"""

from dataclasses import replace

import numpy as np

from regime_q.config import preset_emv_p1
from regime_q.learn import run_algorithm1

cfg = replace(preset_emv_p1(seed=1), n_iters=400, n_paths=60)
print("environment truth:", np.array(cfg.theta_true).round(4))
trace = run_algorithm1(cfg)
print("start:   ", trace.params[0].round(4))
for mark in (100, 200, 300, 400):
    print(f"iter {mark:4d}:", trace.params[mark - 1].round(4))
print("mean |G| over the last 50 iterations:",
      float(np.nanmean(trace.mean_abs_G[-50:])).__round__(4))
