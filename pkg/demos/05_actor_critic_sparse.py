"""Short actor-critic run for the sparse-entropy experiment.

Scaled-down version of the second preset: the critic updates the shared
4-vector through martingale residuals, the actor through the closed-form
action integral of the score term plus the consistency penalty, with Adam
after the warm-up. Full preset: `regime-q run --preset emv_p2`.

Run:  python demos/05_actor_critic_sparse.py
"""

from dataclasses import replace

import numpy as np

from regime_q.config import preset_emv_p2
from regime_q.learn import run_algorithm2

cfg = replace(preset_emv_p2(seed=1), n_iters=100, n_paths=24)
print("environment truth:", np.array(cfg.theta_true).round(4))
trace = run_algorithm2(cfg)
print("start:   ", trace.params[0].round(4))
for mark in (50, 100):
    print(f"iter {mark:4d}:", trace.params[mark - 1].round(4))
print("policy-clip activations in the last iteration:", int(trace.clamps[-1]))
