"""Experiment definition, multi-seed execution, and CSV persistence.

A config is flat key=value text. Each (H, seed) cell builds its fleet,
runs the multitask loop, and reports the first agent's regret sampled on
a fixed t-grid (epoch boundaries plus 32 interior points per epoch). A
single-task baseline runs once per seed on the same first system and is
reported as the sentinel curve H = 1. Cells execute on a thread pool;
all reductions iterate cells in fixed order, so output bytes do not
depend on the worker count.
"""

import logging
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, ExperimentError, FleetLqrError
from .fleet import build_cartpole_fleet, build_synthetic_fleet
from .matkit import random_basis_at_distance
from .orchestrator import (
    FLEET_STREAM,
    PHI0_STREAM,
    EpochSchedule,
    ExplorationSchedule,
    run_multitask,
    run_singletask_baseline,
    write_diagnostics_csv,
)

log = logging.getLogger("fleetlqr")

WORKERS_ENV_VAR = "FLEETLQR_WORKERS"
INTERIOR_GRID_POINTS = 32
BASELINE_SENTINEL = 1


@dataclass(frozen=True)
class ExperimentConfig:
    fleet_kind: str = "cartpole"
    h_values: tuple = (25, 100)
    seeds: tuple = tuple(range(1, 31))
    tau1: int = 30
    k_fin: int = 10
    n_rounds: int = 1000  # DFW iterations per epoch (config key: N)
    eta: float = 0.25
    x_b: float = 25.0
    k_b: float = 15.0  # config key: K_b
    sigma_mode: str = "empirical"
    sigma1_sq: float = 1.0
    rho_pow: float = 0.5
    d0: float = 0.0
    dfw_mode: str = "full_data"
    phi0_distance: float = 0.99
    output_dir: str = "results"
    worker_count: int = 0  # 0 = auto (env var, then cpu count)
    # synthetic-fleet knobs, ignored for cartpole
    d_x: int = 4
    d_u: int = 2
    d_theta: int = 3
    stability_margin: float = 0.2
    noise_var: float = 0.01
    perturb_high: float = 0.1

    def __post_init__(self):
        if self.fleet_kind not in ("cartpole", "synthetic"):
            raise ConfigError(f"fleet_kind must be cartpole or synthetic, got {self.fleet_kind!r}")
        if not self.h_values:
            raise ConfigError("H_values must be nonempty")
        if any(h < 1 for h in self.h_values):
            raise ConfigError("H_values must be positive")
        if not self.seeds:
            raise ConfigError("seeds must be nonempty")
        if len(set(self.seeds)) != len(self.seeds):
            raise ConfigError("seeds must be distinct")
        if any(s < 0 for s in self.seeds):
            raise ConfigError("seeds must be nonnegative")
        positives = (
            ("tau1", self.tau1), ("k_fin", self.k_fin), ("N", self.n_rounds),
            ("eta", self.eta), ("x_b", self.x_b), ("K_b", self.k_b),
            ("sigma1_sq", self.sigma1_sq), ("rho_pow", self.rho_pow),
            ("phi0_distance", self.phi0_distance),
            ("d_x", self.d_x), ("d_u", self.d_u), ("d_theta", self.d_theta),
            ("stability_margin", self.stability_margin),
            ("noise_var", self.noise_var),
        )
        for name, val in positives:
            if val <= 0:
                raise ConfigError(f"{name} must be positive, got {val}")
        if self.phi0_distance >= 1.0:
            raise ConfigError("phi0_distance must lie in (0, 1)")
        if self.d0 < 0 or self.perturb_high < 0 or self.worker_count < 0:
            raise ConfigError("d0, perturb_high, worker_count must be nonnegative")
        if self.sigma_mode not in ("hard", "easy", "empirical"):
            raise ConfigError(f"unknown sigma_mode {self.sigma_mode!r}")
        if self.dfw_mode not in ("split", "full_data"):
            raise ConfigError(f"unknown dfw_mode {self.dfw_mode!r}")


# config-file key -> (dataclass field, parser)
def _int_list(text):
    return tuple(int(v) for v in text.split(",") if v.strip() != "")


_CONFIG_KEYS = {
    "fleet_kind": ("fleet_kind", str),
    "H_values": ("h_values", _int_list),
    "seeds": ("seeds", _int_list),
    "tau1": ("tau1", int),
    "k_fin": ("k_fin", int),
    "N": ("n_rounds", int),
    "eta": ("eta", float),
    "x_b": ("x_b", float),
    "K_b": ("k_b", float),
    "sigma_mode": ("sigma_mode", str),
    "sigma1_sq": ("sigma1_sq", float),
    "rho_pow": ("rho_pow", float),
    "d0": ("d0", float),
    "dfw_mode": ("dfw_mode", str),
    "phi0_distance": ("phi0_distance", float),
    "output_dir": ("output_dir", str),
    "worker_count": ("worker_count", int),
    "d_x": ("d_x", int),
    "d_u": ("d_u", int),
    "d_theta": ("d_theta", int),
    "stability_margin": ("stability_margin", float),
    "noise_var": ("noise_var", float),
    "perturb_high": ("perturb_high", float),
}


def parse_config(path):
    """Flat key=value config; '#' starts a comment; unknown keys rejected."""
    if not os.path.isfile(path):
        raise ConfigError(f"config file not found: {path}")
    overrides = {}
    with open(path) as f:
        for lineno, raw in enumerate(f, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected key=value, got {raw.strip()!r}")
            key, _, val = line.partition("=")
            key, val = key.strip(), val.strip()
            if key not in _CONFIG_KEYS:
                raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
            field_name, parser = _CONFIG_KEYS[key]
            try:
                overrides[field_name] = parser(val)
            except ValueError as exc:
                raise ConfigError(f"{path}:{lineno}: bad value for {key}: {exc}") from None
    try:
        return ExperimentConfig(**overrides)
    except ConfigError as exc:
        raise ConfigError(f"{path}: {exc}") from None


@dataclass(frozen=True)
class RegretCurve:
    h: int
    t: np.ndarray
    mean: np.ndarray
    stderr: np.ndarray
    n_seeds: int

    def __post_init__(self):
        if not (len(self.t) == len(self.mean) == len(self.stderr)):
            raise ExperimentError("curve arrays must have equal length")
        if len(self.t) > 1 and not np.all(np.diff(self.t) > 0):
            raise ExperimentError("curve t-grid must be strictly increasing")


def time_grid(es):
    """Epoch boundaries plus 32 interior integer times per epoch, deduped."""
    pts = set()
    for k in range(1, es.k_fin + 1):
        lo, hi = es.boundary(k - 1), es.boundary(k)
        pts.add(hi)
        interior = np.linspace(lo, hi, INTERIOR_GRID_POINTS + 2)[1:-1]
        for v in np.rint(interior).astype(int):
            if lo < v < hi:
                pts.add(int(v))
    return np.array(sorted(pts), dtype=np.int64)


def _fleet_rng(seed):
    return np.random.default_rng(np.random.SeedSequence(entropy=(seed, FLEET_STREAM)))


def _phi0_rng(seed):
    return np.random.default_rng(np.random.SeedSequence(entropy=(seed, PHI0_STREAM)))


def build_fleet_for(cfg, n_agents, seed):
    rng = _fleet_rng(seed)
    if cfg.fleet_kind == "cartpole":
        return build_cartpole_fleet(
            n_agents, rng, perturb_high=cfg.perturb_high, noise_var=cfg.noise_var
        )
    return build_synthetic_fleet(
        cfg.d_x, cfg.d_u, cfg.d_theta, n_agents, cfg.stability_margin, rng,
        noise_var=cfg.noise_var,
    )


def _schedules(cfg):
    es = EpochSchedule(cfg.tau1, cfg.k_fin)
    xs = ExplorationSchedule(
        mode=cfg.sigma_mode, rho_pow=cfg.rho_pow, sigma1_sq=cfg.sigma1_sq, d0=cfg.d0
    )
    return es, xs


def _run_cell(cfg, n_agents, seed, grid):
    fleet = build_fleet_for(cfg, n_agents, seed)
    es, xs = _schedules(cfg)
    phi0 = random_basis_at_distance(fleet.basis.phi, cfg.phi0_distance, _phi0_rng(seed))
    ledger, diags = run_multitask(
        fleet, es, xs, cfg.x_b, cfg.k_b, phi0, cfg.n_rounds, cfg.eta,
        cfg.dfw_mode, seed,
    )
    times, regret = ledger.samples(0)
    return regret[np.searchsorted(times, grid)], diags


def _run_baseline_cell(cfg, seed, grid):
    fleet = build_fleet_for(cfg, cfg.h_values[0], seed)
    es, xs = _schedules(cfg)
    ledger = run_singletask_baseline(fleet, 0, es, xs, cfg.x_b, cfg.k_b, seed)
    times, regret = ledger.samples(0)
    return regret[np.searchsorted(times, grid)]


def _aggregate(h, grid, rows, n_attempted):
    if not rows:
        raise ExperimentError(f"H={h}: all {n_attempted} seeds failed")
    stack = np.vstack(rows)
    mean = stack.mean(axis=0)
    if stack.shape[0] > 1:
        stderr = stack.std(axis=0, ddof=1) / math.sqrt(stack.shape[0])
    else:
        stderr = np.zeros_like(mean)
    return RegretCurve(h=h, t=grid, mean=mean, stderr=stderr, n_seeds=stack.shape[0])


def resolve_workers(cfg, flag=None):
    """Precedence: CLI flag, then config, then env var, then cpu count."""
    if flag is not None:
        if flag < 1:
            raise ConfigError("worker count must be >= 1")
        return flag
    if cfg.worker_count > 0:
        return cfg.worker_count
    env = os.environ.get(WORKERS_ENV_VAR)
    if env:
        try:
            val = int(env)
        except ValueError:
            raise ConfigError(f"{WORKERS_ENV_VAR} must be an integer, got {env!r}") from None
        if val < 1:
            raise ConfigError(f"{WORKERS_ENV_VAR} must be >= 1")
        return val
    return os.cpu_count() or 1


def run_experiment(cfg, workers=None):
    """Run all (H, seed) cells plus the per-seed baseline cells.

    Returns the list of RegretCurve, multitask curves in H_values order
    and the baseline curve (H = 1 sentinel) last. Writes regret.csv and
    diagnostics.csv under cfg.output_dir before returning. A failed seed
    is logged and dropped; an H with zero surviving seeds is an error.
    """
    n_workers = resolve_workers(cfg, workers)
    es, _ = _schedules(cfg)
    grid = time_grid(es)

    jobs = {}
    with ThreadPoolExecutor(max_workers=n_workers) as pool:
        for h in cfg.h_values:
            for seed in cfg.seeds:
                jobs[("multi", h, seed)] = pool.submit(_run_cell, cfg, h, seed, grid)
        for seed in cfg.seeds:
            jobs[("base", seed)] = pool.submit(_run_baseline_cell, cfg, seed, grid)

    curves = []
    diag_rows = []
    for h in cfg.h_values:
        rows = []
        for seed in cfg.seeds:
            try:
                regret, diags = jobs[("multi", h, seed)].result()
            except (FleetLqrError, np.linalg.LinAlgError) as exc:
                log.error("cell H=%d seed=%d failed: %s", h, seed, exc)
                continue
            rows.append(regret)
            diag_rows.append(((h, seed), diags))
        curves.append(_aggregate(h, grid, rows, len(cfg.seeds)))
    base_rows = []
    for seed in cfg.seeds:
        try:
            base_rows.append(jobs[("base", seed)].result())
        except (FleetLqrError, np.linalg.LinAlgError) as exc:
            log.error("baseline seed=%d failed: %s", seed, exc)
    curves.append(_aggregate(BASELINE_SENTINEL, grid, base_rows, len(cfg.seeds)))

    os.makedirs(cfg.output_dir, exist_ok=True)
    write_regret_csv(curves, os.path.join(cfg.output_dir, "regret.csv"))
    write_diagnostics_csv(diag_rows, os.path.join(cfg.output_dir, "diagnostics.csv"))
    return curves


def fit_growth_exponent(curve, window=0.5):
    """Log-log slope of mean regret over the trailing window of the grid.

    Returns None (a flagged non-estimate) when the windowed regret is not
    strictly positive, since a log slope is meaningless there.
    """
    if not 0 < window <= 1:
        raise ExperimentError("window must lie in (0, 1]")
    n = len(curve.t)
    start = int(math.floor(n * (1.0 - window)))
    t_win = np.asarray(curve.t[start:], dtype=float)
    r_win = np.asarray(curve.mean[start:], dtype=float)
    if len(t_win) < 5:
        raise ExperimentError(f"window holds {len(t_win)} points, need at least 5")
    if np.any(r_win <= 0):
        log.warning("nonpositive regret in trailing window; exponent not estimable")
        return None
    slope = np.polyfit(np.log(t_win), np.log(r_win), 1)[0]
    return float(slope)


def write_regret_csv(curves, path):
    """One row per (curve, grid point), 9 significant digits, LF endings."""
    with open(path, "w", newline="\n") as f:
        f.write("H,t,mean_regret,stderr,n_seeds\n")
        for c in curves:
            for i in range(len(c.t)):
                f.write(
                    f"{c.h},{int(c.t[i])},{c.mean[i]:.9g},{c.stderr[i]:.9g},{c.n_seeds}\n"
                )


def read_regret_csv(path):
    """Parse a regret CSV back into RegretCurve objects (grid-point order)."""
    by_h = {}
    with open(path) as f:
        header = f.readline().strip()
        if header != "H,t,mean_regret,stderr,n_seeds":
            raise ExperimentError(f"unexpected header {header!r}")
        for line in f:
            h, t, m, s, n = line.strip().split(",")
            by_h.setdefault(int(h), []).append((int(t), float(m), float(s), int(n)))
    curves = []
    for h, rows in by_h.items():
        t, m, s, n = zip(*rows)
        curves.append(
            RegretCurve(
                h=h,
                t=np.array(t, dtype=np.int64),
                mean=np.array(m),
                stderr=np.array(s),
                n_seeds=n[0],
            )
        )
    return curves
