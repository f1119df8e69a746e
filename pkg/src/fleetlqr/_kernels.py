"""Hot numeric kernels with a numba fast path and a pure-numpy fallback.

The three inner loops that dominate wall time live here: the per-step
trajectory recursion, one round of the federated representation update,
and Riccati value iteration. Set FLEETLQR_DISABLE_NUMBA=1 before import
to force the numpy path (it is also taken automatically when numba is
not importable). `fleetlqr bench` times the two paths against each other.

Kernels never draw randomness; callers pre-generate all noise so both
backends consume identical streams.
"""

import os

import numpy as np

_env = os.environ.get("FLEETLQR_DISABLE_NUMBA", "").strip().lower()
_DISABLED = _env in ("1", "true", "yes", "on")

try:
    if _DISABLED:
        raise ImportError("numba disabled by FLEETLQR_DISABLE_NUMBA")
    from numba import njit as _njit

    NUMBA_ACTIVE = True
except ImportError:
    NUMBA_ACTIVE = False


def backend_name():
    return "numba" if NUMBA_ACTIVE else "numpy"


# abort codes shared with simkit
COMPLETED = 0
STATE_BOUND = 1
GAIN_BOUND = 2
NONFINITE = 3


def _rollout_loop(a, b, k, x0, w, g, sigma_u, x_bound_sq, gain_norm, k_b, check_bounds):
    """Simulate x_{t+1} = A x_t + B u_t + w_t with u_t = K x_t + sigma_u g_t.

    w is (steps, d_x) pre-drawn process noise, g is (steps, d_u) pre-drawn
    exploration noise. Bound checks run before the input at each step is
    applied. Returns (states, inputs, n_steps, code); states holds
    n_steps + 1 rows, inputs n_steps rows.
    """
    steps = w.shape[0]
    d_x = a.shape[0]
    d_u = b.shape[1]
    states = np.empty((steps + 1, d_x))
    inputs = np.empty((steps, d_u))
    x = x0.copy()
    states[0] = x
    for t in range(steps):
        if check_bounds:
            if gain_norm >= k_b:
                return states[: t + 1], inputs[:t], t, GAIN_BOUND
            nrm = 0.0
            for i in range(d_x):
                nrm += x[i] * x[i]
            if nrm >= x_bound_sq:
                return states[: t + 1], inputs[:t], t, STATE_BOUND
        u = k @ x + sigma_u * g[t]
        xn = a @ x + b @ u + w[t]
        for i in range(d_x):
            if not np.isfinite(xn[i]):
                return states[: t + 1], inputs[:t], t, NONFINITE
        inputs[t] = u
        states[t + 1] = xn
        x = xn
    return states, inputs, steps, COMPLETED


def _dfw_accumulate_loop(phi, z_covs, crosses, eta):
    """One de-biased, feature-whitened update per agent, averaged. No QR.

    phi: (p, r) basis with p = d_x * m, m = d_x + d_u.
    z_covs: (H, m, m) per-agent sums of z z^T over the agent's data slice.
    crosses: (H, m, d_x) per-agent sums of z x_next^T.

    Per agent: theta solves the projected normal equations; the update
    subtracts eta times the covariance-whitened gradient, which collapses
    to (phi theta - vec(LS fit)) theta^T. Returns the agent average.
    """
    p, r = phi.shape
    n_agents, m, _ = z_covs.shape
    d_x = p // m
    # unpack basis columns into their d_x x m matrix form:
    # column i has entries mats[i, a, c] = phi[c * d_x + a, i]
    mats = np.empty((r, d_x, m))
    for i in range(r):
        for c in range(m):
            for a_row in range(d_x):
                mats[i, a_row, c] = phi[c * d_x + a_row, i]
    acc = np.zeros((p, r))
    lam = np.empty((r, r))
    rhs = np.empty((r, 1))
    for h in range(n_agents):
        sig = z_covs[h]
        crs = crosses[h]
        for j in range(r):
            y = mats[j] @ sig
            for i in range(r):
                s = 0.0
                for a_row in range(d_x):
                    for c in range(m):
                        s += mats[i, a_row, c] * y[a_row, c]
                lam[i, j] = s
        for i in range(r):
            s = 0.0
            for a_row in range(d_x):
                for c in range(m):
                    s += mats[i, a_row, c] * crs[c, a_row]
            rhs[i, 0] = s
        theta = np.linalg.solve(lam, rhs)[:, 0]
        fit = np.linalg.solve(sig, crs)  # (m, d_x), rows indexed by z coord
        pt = phi @ theta
        for c in range(m):
            for a_row in range(d_x):
                res = pt[c * d_x + a_row] - fit[c, a_row]
                for j in range(r):
                    acc[c * d_x + a_row, j] += (
                        phi[c * d_x + a_row, j] - eta * res * theta[j]
                    )
    return acc / n_agents


def _dfw_accumulate_numpy(phi, z_covs, crosses, eta):
    """Vectorized twin of _dfw_accumulate_loop (same contract)."""
    p, r = phi.shape
    n_agents, m, _ = z_covs.shape
    d_x = p // m
    mats = phi.T.reshape(r, m, d_x).transpose(0, 2, 1)  # (r, d_x, m)
    lam = np.einsum("iac,jae,hec->hij", mats, mats, z_covs, optimize=True)
    rhs = np.einsum("iac,hca->hi", mats, crosses, optimize=True)
    theta = np.linalg.solve(lam, rhs[:, :, None])[:, :, 0]  # (H, r)
    fits = np.linalg.solve(z_covs, crosses)  # (H, m, d_x)
    resid = theta @ phi.T - fits.reshape(n_agents, p)  # (H, p)
    return phi - (eta / n_agents) * (resid.T @ theta)


def _dare_vi_loop(a, b, q, r, rel_tol, max_iter):
    """Riccati value iteration from P0 = q.

    Stops when the successive Frobenius change drops below rel_tol
    relative to ||P||, bails out early on divergence. Returns
    (p, iterations, converged).
    """
    d_x = a.shape[0]
    p = q.copy()
    for it in range(max_iter):
        pb = p @ b
        m = r + b.T @ pb
        bpa = pb.T @ a
        s = np.linalg.solve(m, bpa)
        p_next = a.T @ (p @ a) - bpa.T @ s + q
        p_next = 0.5 * (p_next + p_next.T)
        num = 0.0
        den = 0.0
        for i in range(d_x):
            for j in range(d_x):
                diff = p_next[i, j] - p[i, j]
                num += diff * diff
                den += p_next[i, j] * p_next[i, j]
        p = p_next
        if not np.isfinite(den) or den > 1e250:
            return p, it + 1, False  # diverging, stabilizability is hopeless
        if num <= rel_tol * rel_tol * den:
            return p, it + 1, True
    return p, max_iter, False


if NUMBA_ACTIVE:
    # nogil lets the experiment harness run (H, seed) cells on real threads
    rollout_kernel = _njit(cache=True, nogil=True)(_rollout_loop)
    dfw_accumulate = _njit(cache=True, nogil=True)(_dfw_accumulate_loop)
    dare_vi = _njit(cache=True, nogil=True)(_dare_vi_loop)
else:
    rollout_kernel = _rollout_loop
    dfw_accumulate = _dfw_accumulate_numpy
    dare_vi = _dare_vi_loop
