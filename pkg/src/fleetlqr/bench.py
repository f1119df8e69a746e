"""Timing comparison of the jitted kernels against their fallback twins.

Both implementations are importable in one process, so the benchmark
times them side by side regardless of which one the package selected at
import time.
"""

import time

import numpy as np

from . import _kernels
from .matkit import thin_qr


def _time(fn, args, repeats):
    fn(*args)  # warmup; compiles the jitted path outside the timed region
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best


def _rollout_args(steps, rng):
    a = rng.standard_normal((4, 4))
    a *= 0.9 / max(np.abs(np.linalg.eigvals(a)))
    b = rng.standard_normal((4, 1))
    k = np.zeros((1, 4))
    w = 0.1 * rng.standard_normal((steps, 4))
    g = rng.standard_normal((steps, 1))
    return (a, b, k, np.zeros(4), w, g, 0.5, 1e9, 0.0, 1e9, True)


def _dfw_args(n_agents, rng):
    d_x, d_u, r = 4, 1, 5
    p = d_x * (d_x + d_u)
    z_dim = d_x + d_u
    phi = thin_qr(rng.standard_normal((p, r)))[0]
    z_covs = np.empty((n_agents, z_dim, z_dim))
    crosses = rng.standard_normal((n_agents, z_dim, d_x))
    for h in range(n_agents):
        m = rng.standard_normal((4 * z_dim, z_dim))
        z_covs[h] = m.T @ m / (4 * z_dim)
    return (phi, z_covs, crosses, 0.25)


def run_bench(rollout_steps=200000, dfw_agents=100, dfw_calls=200, repeats=3):
    """Returns a list of (kernel, jit_seconds_or_None, fallback_seconds)."""
    rng = np.random.default_rng(0)
    rows = []

    args = _rollout_args(rollout_steps, rng)
    fb = _time(_kernels._rollout_loop, args, repeats)
    jt = _time(_kernels.rollout_kernel, args, repeats) if _kernels.NUMBA_ACTIVE else None
    rows.append((f"rollout ({rollout_steps} steps)", jt, fb))

    args = _dfw_args(dfw_agents, rng)

    def many_numpy():
        for _ in range(dfw_calls):
            _kernels._dfw_accumulate_numpy(*args)

    def many_jit():
        for _ in range(dfw_calls):
            _kernels.dfw_accumulate(*args)

    fb = _time(many_numpy, (), repeats)
    jt = _time(many_jit, (), repeats) if _kernels.NUMBA_ACTIVE else None
    rows.append((f"dfw step ({dfw_calls}x{dfw_agents} agents)", jt, fb))

    a = rng.standard_normal((6, 6))
    a *= 0.95 / max(np.abs(np.linalg.eigvals(a)))
    b = rng.standard_normal((6, 2))
    dare_args = (a, b, np.eye(6), np.eye(2), 1e-12, 10**6)
    fb = _time(_kernels._dare_vi_loop, dare_args, repeats)
    jt = _time(_kernels.dare_vi, dare_args, repeats) if _kernels.NUMBA_ACTIVE else None
    rows.append(("dare value iteration (6x6)", jt, fb))
    return rows


def format_bench(rows):
    lines = [f"active backend: {_kernels.backend_name()}"]
    lines.append(f"{'kernel':<34} {'jit (s)':>10} {'fallback (s)':>13} {'speedup':>8}")
    for name, jt, fb in rows:
        if jt is None:
            lines.append(f"{name:<34} {'n/a':>10} {fb:>13.4f} {'n/a':>8}")
        else:
            lines.append(f"{name:<34} {jt:>10.4f} {fb:>13.4f} {fb / jt:>7.1f}x")
    if not _kernels.NUMBA_ACTIVE:
        lines.append("jit column unavailable: numba disabled or not installed")
    return "\n".join(lines)
