"""Experiment configuration: learning-run descriptors, presets, file round-trip.

Configs serialize to a flat sectioned key-value format ([market], [learning],
[schedules.rho1], ...) so experiment records diff cleanly.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ConfigError
from .market import EULER_FORMS, MarketParams
from .policies import ActionInterval

COORDS = ("rho1", "rho2", "sigma1", "sigma2")
ALGORITHMS = ("alg1", "alg2", "alg3")


@dataclass(frozen=True)
class ScheduleSpec:
    """Learning-rate schedule: constant through ``constant_until`` then stepped decay."""

    rate: float
    constant_until: int

    def __post_init__(self):
        if not self.rate >= 0.0:
            raise ConfigError(f"schedule rate must be nonnegative, got {self.rate}")
        if self.constant_until < 0:
            raise ConfigError("schedule breakpoint must be nonnegative")


@dataclass(frozen=True)
class LearningConfig:
    """Complete description of one training run.

    ``euler_form`` selects the wealth scheme: "amount_invested" treats the
    action as a dollar amount (the form whose compensator the value model
    matches; training converges under it), "as_printed" multiplies the action
    terms by current wealth.
    """

    market: MarketParams
    T: float = 1.0
    K: int = 25
    n_paths: int = 100
    n_iters: int = 6000
    gamma: float = 0.5
    x0: float = 1.0
    z: float = 1.4
    seed: int = 0
    entropy_order: int = 1
    algorithm: str = "alg1"
    euler_form: str = "amount_invested"
    interval: ActionInterval = field(default_factory=lambda: ActionInterval(-5.0, 5.0))
    schedules: dict = field(default_factory=dict)  # coord -> ScheduleSpec
    w1_weight: float = 0.0
    w2_weight: float = 0.0
    adam: tuple[float, float, float] = (0.9, 0.999, 1e-8)
    init_ranges: dict = field(default_factory=dict)  # coord -> (lo, hi)
    theta_true: tuple[float, float, float, float] | None = None
    substeps: int = 10
    clamp_actions: bool = True  # clamp Gaussian action draws into the interval
    env_substeps: int = 1  # internal environment refinements per trajectory step
    max_update: float = 0.02  # per-coordinate cap on one update application

    def __post_init__(self):
        if self.algorithm not in ALGORITHMS:
            raise ConfigError(f"algorithm must be one of {ALGORITHMS}, got {self.algorithm!r}")
        if self.entropy_order not in (1, 2):
            raise ConfigError(f"entropy_order must be 1 or 2, got {self.entropy_order}")
        if self.euler_form not in EULER_FORMS:
            raise ConfigError(f"euler_form must be one of {EULER_FORMS}")
        if self.n_paths < 1 or self.n_iters < 1 or self.K < 1:
            raise ConfigError("n_paths, n_iters, K must all be >= 1")
        if abs(self.K * (self.T / self.K) - self.T) > 1e-12:
            raise ConfigError("grid must tile the horizon exactly")
        for c in COORDS:
            if c not in self.schedules:
                raise ConfigError(f"missing schedule for coordinate {c!r}")
            if c not in self.init_ranges:
                raise ConfigError(f"missing init range for coordinate {c!r}")

    @property
    def dt(self) -> float:
        return self.T / self.K

    def with_overrides(self, seed: int | None = None, n_iters: int | None = None) -> "LearningConfig":
        out = self
        if seed is not None:
            out = replace(out, seed=int(seed))
        if n_iters is not None:
            out = replace(out, n_iters=int(n_iters))
        return out


def preset_emv_p1(seed: int = 0) -> LearningConfig:
    """Two-regime Gaussian-policy experiment, one-year horizon, 25 steps."""
    market = MarketParams(
        mu=(0.2, -0.2), sigma=(0.2, 0.3), r=(0.01, 0.05),
        generator=((-1.0, 1.0), (1.0, -1.0)))
    rho = market.rho
    return LearningConfig(
        market=market, T=1.0, K=25, n_paths=100, n_iters=6000, gamma=0.5,
        x0=1.0, z=1.4, seed=seed, entropy_order=1, algorithm="alg1",
        schedules={
            "rho1": ScheduleSpec(3.5e-3, 1500),
            "rho2": ScheduleSpec(2.6e-3, 1500),
            "sigma1": ScheduleSpec(3.0e-3, 1000),
            "sigma2": ScheduleSpec(2.0e-3, 1000),
        },
        init_ranges={
            "rho1": (0.2, 0.5),
            "rho2": (-0.4, -0.1),
            "sigma1": (0.15, 0.3),
            "sigma2": (0.15, 0.3),
        },
        theta_true=(float(rho[0]), float(rho[1]), 0.2, 0.3),
    )


def preset_emv_p2(seed: int = 0) -> LearningConfig:
    """Two-regime sparse-entropy experiment with actor penalties and Adam."""
    market = MarketParams(
        mu=(0.12, -0.10), sigma=(0.15, 0.35), r=(0.02, 0.025),
        generator=((-1.8, 1.8), (2.0, -2.0)),
        sharpe=(0.733, -0.428))
    return LearningConfig(
        market=market, T=1.0, K=25, n_paths=50, n_iters=5000, gamma=0.5,
        x0=1.0, z=1.4, seed=seed, entropy_order=2, algorithm="alg2",
        w1_weight=0.1, w2_weight=0.5, adam=(0.9, 0.999, 1e-8),
        schedules={
            "rho1": ScheduleSpec(6.5e-3, 2000),
            "rho2": ScheduleSpec(6.5e-3, 2000),
            "sigma1": ScheduleSpec(6.0e-4, 1500),
            "sigma2": ScheduleSpec(3.0e-4, 1500),
        },
        init_ranges={
            "rho1": (0.1, 0.25),
            "rho2": (-0.05, 0.1),
            "sigma1": (0.2, 0.3),
            "sigma2": (0.2, 0.3),
        },
        theta_true=(0.733, -0.428, 0.15, 0.35),
        substeps=2,
    )


PRESETS = {"emv_p1": preset_emv_p1, "emv_p2": preset_emv_p2}


def get_preset(name: str, seed: int = 0) -> LearningConfig:
    if name not in PRESETS:
        raise ConfigError(f"unknown preset {name!r}; available: {sorted(PRESETS)}")
    return PRESETS[name](seed=seed)


# ---------------------------------------------------------------------------
# flat sectioned key-value serialization
# ---------------------------------------------------------------------------

def _fmt(v) -> str:
    if isinstance(v, (list, tuple, np.ndarray)):
        return ", ".join(_fmt(x) for x in v)
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return str(v)


def serialize_config(cfg: LearningConfig) -> str:
    m = cfg.market
    lines = ["[market]"]
    lines.append(f"mu = {_fmt(m.mu)}")
    lines.append(f"sigma = {_fmt(m.sigma)}")
    lines.append(f"r = {_fmt(m.r)}")
    gen = np.asarray(m.generator, dtype=float).ravel()
    lines.append(f"generator = {_fmt(gen)}")
    if m.sharpe is not None:
        lines.append(f"sharpe = {_fmt(m.sharpe)}")
    lines.append("")
    lines.append("[learning]")
    for key in ("T", "K", "n_paths", "n_iters", "gamma", "x0", "z", "seed",
                "entropy_order", "algorithm", "euler_form", "w1_weight", "w2_weight",
                "substeps", "clamp_actions", "env_substeps", "max_update"):
        lines.append(f"{key} = {_fmt(getattr(cfg, key))}")
    lines.append(f"a_min = {_fmt(cfg.interval.a_min)}")
    lines.append(f"a_max = {_fmt(cfg.interval.a_max)}")
    lines.append(f"adam = {_fmt(cfg.adam)}")
    if cfg.theta_true is not None:
        lines.append(f"theta_true = {_fmt(cfg.theta_true)}")
    for c in COORDS:
        lines.append(f"init_{c} = {_fmt(cfg.init_ranges[c])}")
    for c in COORDS:
        lines.append("")
        lines.append(f"[schedules.{c}]")
        lines.append(f"rate = {_fmt(cfg.schedules[c].rate)}")
        lines.append(f"constant_until = {cfg.schedules[c].constant_until}")
    return "\n".join(lines) + "\n"


def _parse_value(raw: str):
    parts = [p.strip() for p in raw.split(",")] if "," in raw else [raw.strip()]
    vals = []
    for p in parts:
        try:
            vals.append(int(p))
        except ValueError:
            try:
                vals.append(float(p))
            except ValueError:
                vals.append(p)
    return vals if len(vals) > 1 else vals[0]


def parse_config_text(text: str) -> LearningConfig:
    sections: dict[str, dict] = {}
    current = None
    for lineno, line in enumerate(text.splitlines(), 1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        if body.startswith("[") and body.endswith("]"):
            current = body[1:-1].strip()
            sections.setdefault(current, {})
            continue
        if "=" not in body or current is None:
            raise ConfigError(f"malformed config line {lineno}: {line.strip()!r}")
        key, raw = body.split("=", 1)
        sections[current][key.strip()] = _parse_value(raw)

    if "market" not in sections or "learning" not in sections:
        raise ConfigError("config needs [market] and [learning] sections")
    mk = dict(sections["market"])
    ln = dict(sections["learning"])

    def need(table, key, where):
        if key not in table:
            raise ConfigError(f"missing key {key!r} in [{where}]")
        return table.pop(key)

    def as_tuple(v, n, key):
        seq = v if isinstance(v, list) else [v]
        if len(seq) != n:
            raise ConfigError(f"key {key!r} needs {n} values, got {len(seq)}")
        return tuple(float(x) for x in seq)

    gen_flat = as_tuple(need(mk, "generator", "market"), 4, "generator")
    market = MarketParams(
        mu=as_tuple(need(mk, "mu", "market"), 2, "mu"),
        sigma=as_tuple(need(mk, "sigma", "market"), 2, "sigma"),
        r=as_tuple(need(mk, "r", "market"), 2, "r"),
        generator=((gen_flat[0], gen_flat[1]), (gen_flat[2], gen_flat[3])),
        sharpe=as_tuple(mk.pop("sharpe"), 2, "sharpe") if "sharpe" in mk else None,
    )
    if mk:
        raise ConfigError(f"unknown keys in [market]: {sorted(mk)}")

    schedules = {}
    for c in COORDS:
        sec = sections.get(f"schedules.{c}")
        if sec is None:
            raise ConfigError(f"missing section [schedules.{c}]")
        schedules[c] = ScheduleSpec(float(need(sec, "rate", f"schedules.{c}")),
                                    int(need(sec, "constant_until", f"schedules.{c}")))
        if sec:
            raise ConfigError(f"unknown keys in [schedules.{c}]: {sorted(sec)}")

    init_ranges = {}
    for c in COORDS:
        init_ranges[c] = as_tuple(need(ln, f"init_{c}", "learning"), 2, f"init_{c}")

    interval = ActionInterval(float(need(ln, "a_min", "learning")),
                              float(need(ln, "a_max", "learning")))
    adam = as_tuple(need(ln, "adam", "learning"), 3, "adam")
    theta_true = as_tuple(ln.pop("theta_true"), 4, "theta_true") if "theta_true" in ln else None

    kwargs = dict(
        market=market, interval=interval, schedules=schedules, init_ranges=init_ranges,
        adam=adam, theta_true=theta_true,
        T=float(need(ln, "T", "learning")), K=int(need(ln, "K", "learning")),
        n_paths=int(need(ln, "n_paths", "learning")),
        n_iters=int(need(ln, "n_iters", "learning")),
        gamma=float(need(ln, "gamma", "learning")), x0=float(need(ln, "x0", "learning")),
        z=float(need(ln, "z", "learning")), seed=int(need(ln, "seed", "learning")),
        entropy_order=int(need(ln, "entropy_order", "learning")),
        algorithm=str(need(ln, "algorithm", "learning")),
        euler_form=str(need(ln, "euler_form", "learning")),
        w1_weight=float(need(ln, "w1_weight", "learning")),
        w2_weight=float(need(ln, "w2_weight", "learning")),
        substeps=int(need(ln, "substeps", "learning")),
        clamp_actions=str(need(ln, "clamp_actions", "learning")) in ("True", "true", "1"),
        env_substeps=int(need(ln, "env_substeps", "learning")),
        max_update=float(need(ln, "max_update", "learning")),
    )
    if ln:
        raise ConfigError(f"unknown keys in [learning]: {sorted(ln)}")
    return LearningConfig(**kwargs)


def load_config(path: str | os.PathLike) -> LearningConfig:
    """Parse and validate a config file into a LearningConfig."""
    with open(path, "r", encoding="utf-8") as f:
        return parse_config_text(f.read())


def save_config(cfg: LearningConfig, path: str | os.PathLike) -> None:
    with open(path, "w", encoding="utf-8") as f:
        f.write(serialize_config(cfg))
