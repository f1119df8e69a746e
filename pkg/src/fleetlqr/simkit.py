"""Trajectory simulation, abort monitoring, cost and regret accounting.

rollout drives the state recursion through the compiled kernel; noise is
pre-drawn (process noise first, then exploration noise) so abort timing
never shifts the random stream consumed, and both kernel backends see
identical draws.
"""

from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import _kernels
from .errors import DimensionError, LedgerOrderError, NumericBlowupError

REASONS = {_kernels.STATE_BOUND: "state_bound", _kernels.GAIN_BOUND: "gain_bound"}


@dataclass(frozen=True)
class Trajectory:
    """states has length+1 rows, inputs has length rows."""

    states: np.ndarray
    inputs: np.ndarray

    def __post_init__(self):
        if self.states.shape[0] != self.inputs.shape[0] + 1:
            raise DimensionError("states must have exactly one more row than inputs")
        if not (np.all(np.isfinite(self.states)) and np.all(np.isfinite(self.inputs))):
            raise DimensionError("non-finite trajectory entries")

    @property
    def length(self):
        return self.inputs.shape[0]


@dataclass(frozen=True)
class AbortState:
    aborted: bool
    abort_time: Optional[int] = None
    reason: Optional[str] = None

    def __post_init__(self):
        if self.aborted != (self.abort_time is not None):
            raise DimensionError("aborted flag and abort_time must agree")


class GaussianNoise:
    """Gaussian process noise with a fixed covariance (PSD, may be singular)."""

    def __init__(self, cov):
        cov = np.atleast_2d(np.asarray(cov, dtype=float))
        if np.max(np.abs(cov - cov.T)) > 1e-10:
            raise DimensionError("covariance must be symmetric")
        eigval, eigvec = np.linalg.eigh(cov)
        if eigval[0] < -1e-10:
            raise DimensionError("covariance must be PSD")
        self.cov = cov
        self._factor = eigvec * np.sqrt(np.clip(eigval, 0.0, None))

    @property
    def dim(self):
        return self.cov.shape[0]

    def draw(self, rng, steps):
        return rng.standard_normal((steps, self.dim)) @ self._factor.T


class ZeroNoise:
    """Noiseless dynamics."""

    def __init__(self, dim):
        self.dim = dim
        self.cov = np.zeros((dim, dim))

    def draw(self, rng, steps):
        # still burns the stream so noiseless runs stay aligned with noisy ones
        rng.standard_normal((steps, self.dim))
        return np.zeros((steps, self.dim))


def rollout(sys, k, sigma_u, steps, x_init, noise, bounds, rng):
    """Simulate steps of u = K x + sigma_u g under the given noise model.

    bounds is (x_b, k_b, horizon) activating the abort monitor: before
    each step the state norm is checked against x_b^2 log(horizon) and
    the gain norm against k_b. Pass bounds=None to disable. Returns
    (Trajectory, AbortState); an aborted trajectory ends at the abort
    time. Non-finite states raise NumericBlowupError instead of aborting.
    """
    if steps < 1:
        raise DimensionError("steps must be >= 1")
    k = np.atleast_2d(np.asarray(k, dtype=float))
    x_init = np.asarray(x_init, dtype=float).reshape(-1)
    if x_init.size != sys.d_x or k.shape != (sys.d_u, sys.d_x):
        raise DimensionError("x_init or gain shape does not match the system")
    w = noise.draw(rng, steps)
    g = rng.standard_normal((steps, sys.d_u))
    if bounds is None:
        check, x_bound_sq, k_b, gain_norm = False, np.inf, np.inf, 0.0
    else:
        x_b, k_b, horizon = bounds
        x_bound_sq = x_b * x_b * np.log(horizon)
        gain_norm = float(np.linalg.norm(k, 2))
        check = True
    states, inputs, n_steps, code = _kernels.rollout_kernel(
        sys.a, sys.b, k, x_init, w, g, float(sigma_u), x_bound_sq, gain_norm, k_b, check
    )
    if code == _kernels.NONFINITE:
        raise NumericBlowupError(f"state became non-finite at step {n_steps}")
    traj = Trajectory(np.array(states), np.array(inputs))
    if code == _kernels.COMPLETED:
        return traj, AbortState(False)
    return traj, AbortState(True, n_steps, REASONS[code])


def stage_costs(traj, cost):
    """Per-step costs x_t' q x_t + u_t' r u_t, one per trajectory step."""
    x = traj.states[:-1]
    u = traj.inputs
    return np.einsum("ti,ij,tj->t", x, cost.q, x) + np.einsum(
        "ti,ij,tj->t", u, cost.r, u
    )


def accumulate_cost(traj, cost):
    """Total quadratic cost over the trajectory's steps."""
    if traj.length == 0:
        return 0.0
    return float(np.sum(stage_costs(traj, cost)))


class RegretLedger:
    """Per-agent cumulative cost and regret samples against j_star."""

    def __init__(self, j_star):
        self.j_star = np.asarray(j_star, dtype=float).reshape(-1)
        n = self.j_star.size
        self.cum_cost = np.zeros(n)
        self._last_t = np.zeros(n, dtype=np.int64)
        self._times = [[] for _ in range(n)]
        self._regret = [[] for _ in range(n)]

    @property
    def n_agents(self):
        return self.j_star.size

    def samples(self, agent):
        """(times, regrets) arrays for one agent."""
        return (
            np.concatenate(self._times[agent]) if self._times[agent] else np.empty(0, np.int64),
            np.concatenate(self._regret[agent]) if self._regret[agent] else np.empty(0),
        )


def record_regret(ledger, agent, t, cum_cost):
    """Append the regret sample cum_cost - t * j_star for one agent at time t."""
    if t <= ledger._last_t[agent]:
        raise LedgerOrderError(
            f"agent {agent}: time {t} not after last recorded {ledger._last_t[agent]}"
        )
    ledger._times[agent].append(np.array([t], dtype=np.int64))
    ledger._regret[agent].append(np.array([cum_cost - t * ledger.j_star[agent]]))
    ledger._last_t[agent] = t
    ledger.cum_cost[agent] = cum_cost
    return ledger


def record_regret_block(ledger, agent, costs):
    """Append one regret sample per stage cost, continuing the agent's clock."""
    costs = np.asarray(costs, dtype=float)
    t0 = ledger._last_t[agent]
    ts = t0 + 1 + np.arange(costs.size, dtype=np.int64)
    cums = ledger.cum_cost[agent] + np.cumsum(costs)
    ledger._times[agent].append(ts)
    ledger._regret[agent].append(cums - ts * ledger.j_star[agent])
    if costs.size:
        ledger._last_t[agent] = int(ts[-1])
        ledger.cum_cost[agent] = float(cums[-1])
    return ledger


def write_trajectory_text(traj, path):
    """One row per step: t, state entries, input entries."""
    with open(path, "w", newline="\n") as f:
        for t in range(traj.length):
            vals = [f"{t}"]
            vals += [f"{v:.17g}" for v in traj.states[t]]
            vals += [f"{v:.17g}" for v in traj.inputs[t]]
            f.write(" ".join(vals) + "\n")
