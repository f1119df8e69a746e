"""Discrete-time LQR machinery.

Riccati and Lyapunov solvers, optimal gain synthesis, average cost of a
fixed gain, and the certainty-equivalence suboptimality bound. The DARE
is solved by plain value iteration (stopping at 1e-12 relative change,
capped at 1e6 sweeps); the Lyapunov equation by doubling accumulation.
"""

from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .errors import (
    ConvergenceError,
    DimensionError,
    InstabilityError,
    NonStabilizableError,
)

DARE_REL_CHANGE = 1e-12
DARE_MAX_ITER = 10**6
DARE_REL_RESID = 1e-8
DLYAP_REL_INC = 1e-14
DLYAP_MAX_DOUBLINGS = 128


@dataclass(frozen=True)
class StateSpace:
    """Linear dynamics x_{t+1} = a x_t + b u_t (+ noise)."""

    a: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.a, dtype=float)
        b = np.asarray(self.b, dtype=float)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise DimensionError(f"a must be square, got {a.shape}")
        if b.ndim != 2 or b.shape[0] != a.shape[0]:
            raise DimensionError(f"b shape {b.shape} incompatible with a {a.shape}")
        if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b))):
            raise DimensionError("non-finite entries in system matrices")
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)

    @property
    def d_x(self):
        return self.a.shape[0]

    @property
    def d_u(self):
        return self.b.shape[1]


@dataclass(frozen=True)
class CostParams:
    """Quadratic stage cost x'qx + u'ru plus the process-noise covariance.

    The analysis needs q >= I and r = I; both are enforced here. w_cov is
    free (the cartpole experiment uses 0.01 I).
    """

    q: np.ndarray
    r: np.ndarray
    w_cov: np.ndarray

    def __post_init__(self):
        q = np.asarray(self.q, dtype=float)
        r = np.asarray(self.r, dtype=float)
        w = np.asarray(self.w_cov, dtype=float)
        if np.max(np.abs(q - q.T)) > 1e-10:
            raise DimensionError("q must be symmetric")
        if np.min(np.linalg.eigvalsh(q)) < 1.0 - 1e-10:
            raise DimensionError("q must satisfy q >= I")
        if r.shape[0] != r.shape[1] or np.max(np.abs(r - np.eye(r.shape[0]))) > 0:
            raise DimensionError("r must be the identity")
        if np.max(np.abs(w - w.T)) > 1e-10 or np.min(np.linalg.eigvalsh(w)) < -1e-10:
            raise DimensionError("w_cov must be symmetric PSD")
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "r", r)
        object.__setattr__(self, "w_cov", w)

    @staticmethod
    def identity(d_x, d_u, noise_var=1.0):
        return CostParams(np.eye(d_x), np.eye(d_u), noise_var * np.eye(d_x))


def spectral_radius(m):
    """Largest eigenvalue modulus of a square matrix."""
    m = np.asarray(m, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise DimensionError(f"expected square matrix, got {m.shape}")
    return float(np.max(np.abs(np.linalg.eigvals(m))))


def dlyap_solve(a_cl, q):
    """Solve P = a_cl' P a_cl + q by doubling accumulation.

    Requires spectral_radius(a_cl) < 1. Doubling squares the transition
    each sweep, so the geometric series closes in O(log) sweeps.
    """
    a_cl = np.asarray(a_cl, dtype=float)
    q = np.asarray(q, dtype=float)
    if spectral_radius(a_cl) >= 1.0:
        raise InstabilityError("closed loop is not Schur stable")
    p = q.copy()
    m = a_cl.copy()
    for _ in range(DLYAP_MAX_DOUBLINGS):
        inc = m.T @ p @ m
        p = p + inc
        if np.linalg.norm(inc) < DLYAP_REL_INC * np.linalg.norm(p):
            break
        m = m @ m
    else:
        raise ConvergenceError("dlyap doubling exhausted 128 sweeps")
    p = 0.5 * (p + p.T)
    resid = np.max(np.abs(a_cl.T @ p @ a_cl + q - p))
    if resid > 1e-9 * (1.0 + np.max(np.abs(p))):
        raise ConvergenceError(f"dlyap residual {resid:.2e} out of tolerance")
    return p


def dare_solve(sys, cost):
    """Stabilizing DARE solution P by value iteration from P0 = q."""
    p, _, converged = _kernels.dare_vi(
        sys.a, sys.b, cost.q, cost.r, DARE_REL_CHANGE, DARE_MAX_ITER
    )
    if not converged:
        raise NonStabilizableError("Riccati value iteration did not converge")
    k = _gain_from_p(sys, cost, p)
    if spectral_radius(sys.a + sys.b @ k) >= 1.0:
        raise NonStabilizableError("converged Riccati solution does not stabilize")
    pb = p @ sys.b
    bpa = pb.T @ sys.a
    corr = bpa.T @ np.linalg.solve(cost.r + sys.b.T @ pb, bpa)
    resid = sys.a.T @ p @ sys.a - corr + cost.q - p
    rel = np.linalg.norm(resid) / np.linalg.norm(p)
    if rel > DARE_REL_RESID:
        raise NonStabilizableError(f"DARE residual {rel:.2e} exceeds 1e-8 relative")
    return p


def _gain_from_p(sys, cost, p):
    pb = p @ sys.b
    return -np.linalg.solve(cost.r + sys.b.T @ pb, pb.T @ sys.a)


def lqr_gain(sys, cost):
    """Optimal gain K = -(B'PB + R)^{-1} B'PA from the DARE solution."""
    p = dare_solve(sys, cost)
    k = _gain_from_p(sys, cost, p)
    if spectral_radius(sys.a + sys.b @ k) >= 1.0:
        raise NonStabilizableError("synthesized gain does not stabilize")
    return k


def avg_cost(sys, cost, k):
    """Steady-state average cost trace(P_K w_cov) of a fixed gain."""
    k = np.asarray(k, dtype=float)
    a_cl = sys.a + sys.b @ k
    p_k = dlyap_solve(a_cl, cost.q + k.T @ cost.r @ k)
    return float(np.trace(p_k @ cost.w_cov))


def ce_suboptimality_bound(p_star, est_err_sq):
    """Certainty-equivalence excess-cost bound for a model error.

    Returns (threshold, bound): the bound 142 ||P*||^8 err^2 on
    J(K_hat) - J(K*) is only claimed when est_err_sq <= threshold
    = ||P*||^{-10} / 3000 (the caller compares).
    """
    p_star = np.asarray(p_star, dtype=float)
    if est_err_sq < 0:
        raise DimensionError("est_err_sq must be nonnegative")
    nrm = float(np.linalg.norm(p_star, 2))
    threshold = nrm ** (-10) / 3000.0
    bound = 142.0 * nrm**8 * est_err_sq
    return threshold, bound
