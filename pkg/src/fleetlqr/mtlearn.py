"""Estimation subroutines: basis-constrained least squares and the
federated de-bias / feature-whiten representation update.

Everything consumes sufficient statistics (CovStats): the regressor
covariance sum_s z_s z_s^T and the cross moment sum_s z_s x_{s+1}^T with
z = (x, u). The Kronecker structure of the lifted problem is exploited
throughout, so no p x p matrix (p = d_x (d_x + d_u)) is ever formed.
"""

from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import _kernels
from .errors import DataBudgetError, DimensionError, ExcitationError
from .matkit import pinv, subspace_distance, thin_qr, vec_inv

EXCITATION_RTOL = 1e-12


@dataclass(frozen=True)
class CovStats:
    """Sufficient statistics of (z, x_next) pairs: z_cov = sum z z^T,
    cross = sum z x_next^T, count = number of pairs."""

    z_cov: np.ndarray
    cross: np.ndarray
    count: int

    def __post_init__(self):
        if self.count < 1:
            raise DimensionError("count must be >= 1")
        if np.max(np.abs(self.z_cov - self.z_cov.T)) > 1e-8 * (
            1.0 + np.max(np.abs(self.z_cov))
        ):
            raise DimensionError("z_cov must be symmetric")

    @staticmethod
    def from_trajectory(traj_or_states, inputs=None, start=0, stop=None):
        """Accumulate stats over steps [start, stop) of a trajectory."""
        if inputs is None:
            states, inputs = traj_or_states.states, traj_or_states.inputs
        else:
            states = traj_or_states
        if stop is None:
            stop = inputs.shape[0]
        if not 0 <= start < stop <= inputs.shape[0]:
            raise DimensionError(f"bad slice [{start}, {stop})")
        z = np.hstack([states[start:stop], inputs[start:stop]])
        x_next = states[start + 1 : stop + 1]
        return CovStats(z.T @ z, z.T @ x_next, stop - start)

    def excitation_ok(self):
        eigs = np.linalg.eigvalsh(self.z_cov)
        return eigs[0] > EXCITATION_RTOL * max(eigs[-1], 0.0)


@dataclass(frozen=True)
class DfwReport:
    """iterates holds the distance to the reference basis per iteration
    (N+1 values including the start) when a reference was supplied."""

    iterates: Optional[np.ndarray]
    final_phi: np.ndarray
    mode: str


def _coerce_stats(data):
    if isinstance(data, CovStats):
        return data
    if hasattr(data, "states"):
        return CovStats.from_trajectory(data)
    return CovStats.from_trajectory(*_as_arrays(data))


def _basis_blocks(phi, z_dim):
    """Basis columns unstacked to their d_x x (d_x + d_u) matrix form."""
    p, r = phi.shape
    d_x = p // z_dim
    if d_x * z_dim != p:
        raise DimensionError(f"basis rows {p} not divisible by z dim {z_dim}")
    return phi.T.reshape(r, z_dim, d_x).transpose(0, 2, 1)


def ls_weights(phi, data):
    """Least-squares task weights through a fixed representation.

    theta = Lambda^+ (sum_s phi^T (z_s kron I) x_{s+1}) with
    Lambda = sum_s phi^T (z_s z_s^T kron I) phi, assembled blockwise from
    the sufficient statistics.
    """
    stats = _coerce_stats(data)
    mats = _basis_blocks(np.asarray(phi, dtype=float), stats.z_cov.shape[0])
    lam = np.einsum("iac,jae,ec->ij", mats, mats, stats.z_cov, optimize=True)
    rhs = np.einsum("iac,ca->i", mats, stats.cross, optimize=True)
    return pinv(lam) @ rhs


def full_ls(data):
    """Unstructured least squares: [A B] = cross^T pinv(z_cov)."""
    stats = _coerce_stats(data)
    return stats.cross.T @ pinv(stats.z_cov)


def dfw_gradient_raw(phi, theta, data):
    """Unpreconditioned gradient of the half squared prediction loss.

    grad = sum_t (z_t z_t^T kron I) phi theta theta^T
         - sum_t (z_t kron I) x_{t+1} theta^T, shape (p, d_theta).
    """
    stats = _coerce_stats(data)
    phi = np.asarray(phi, dtype=float)
    theta = np.asarray(theta, dtype=float).reshape(-1)
    d_x = phi.shape[0] // stats.z_cov.shape[0]
    model = vec_inv(phi @ theta, d_x)  # d_x x (d_x + d_u)
    lead = (model @ stats.z_cov - stats.cross.T).reshape(-1, order="F")
    return np.outer(lead, theta)


def dfw_gradient(phi, theta, data):
    """Covariance-whitened gradient (z_cov kron I)^{-1} grad.

    Only a (d_x + d_u)-sized solve occurs; with invertible z_cov this
    equals (phi theta - vec of the unstructured LS fit) theta^T.
    """
    stats = _coerce_stats(data)
    if not stats.excitation_ok():
        raise ExcitationError("z covariance numerically singular")
    phi = np.asarray(phi, dtype=float)
    theta = np.asarray(theta, dtype=float).reshape(-1)
    fit = np.linalg.solve(stats.z_cov, stats.cross)  # (d_x+d_u, d_x)
    lead = phi @ theta - fit.reshape(-1)  # C-order ravel == column-major vec of fit^T
    return np.outer(lead, theta)


def dfw_round(phi, per_agent_data, eta):
    """One communication round: per-agent whitened update, average, re-orthonormalize."""
    phi = np.asarray(phi, dtype=float)
    if eta < 0:
        raise DimensionError("eta must be nonnegative")
    acc = np.zeros_like(phi)
    for h, (ls_part, grad_part) in enumerate(per_agent_data):
        try:
            theta = ls_weights(phi, ls_part)
            acc += phi - eta * dfw_gradient(phi, theta, grad_part)
        except (ExcitationError, DimensionError) as exc:
            raise ExcitationError(str(exc), agent=h) from exc
    return thin_qr(acc / len(per_agent_data))[0]


def _slice_stats(trajs, start, stop):
    return [CovStats.from_trajectory(t, start=start, stop=stop) for t in trajs]


def dfw_run(phi0, fleet_data, n_iters, eta, mode="full_data", phi_star=None):
    """Iterate dfw_round n_iters times over per-agent trajectories.

    full_data mode reuses every agent's whole trajectory each iteration;
    split mode gives iteration n its own disjoint subtrajectory, first
    half for the weights and second half for the gradient. Distances to
    phi_star are recorded per iteration when it is provided.
    """
    if n_iters < 1:
        raise DimensionError("n_iters must be >= 1")
    if mode not in ("full_data", "split"):
        raise DimensionError(f"unknown mode {mode!r}")
    phi = np.asarray(phi0, dtype=float)
    pairs = [_as_arrays(t) for t in fleet_data]
    shortest = min(u.shape[0] for _, u in pairs)
    dists = [subspace_distance(phi_star, phi)] if phi_star is not None else None

    if mode == "split":
        t_half = shortest // (2 * n_iters)
        if t_half < 1:
            raise DataBudgetError(
                f"split mode needs >= {2 * n_iters} steps per agent, shortest is {shortest}"
            )
    else:
        stats = [CovStats.from_trajectory(s, u) for s, u in pairs]
        z_covs = np.ascontiguousarray(np.stack([st.z_cov for st in stats]))
        crosses = np.ascontiguousarray(np.stack([st.cross for st in stats]))
        _guard_excitation(z_covs)

    for n in range(n_iters):
        if mode == "split":
            base = n * 2 * t_half
            agent_data = [
                (
                    CovStats.from_trajectory(s, u, start=base, stop=base + t_half),
                    CovStats.from_trajectory(s, u, start=base + t_half, stop=base + 2 * t_half),
                )
                for s, u in pairs
            ]
            phi = dfw_round(phi, agent_data, eta)
        else:
            phi = thin_qr(_kernels.dfw_accumulate(phi, z_covs, crosses, eta))[0]
        if dists is not None:
            dists.append(subspace_distance(phi_star, phi))
    return DfwReport(np.array(dists) if dists is not None else None, phi, mode)


def _as_arrays(t):
    if hasattr(t, "states"):
        return t.states, t.inputs
    states, inputs = t
    return np.asarray(states, dtype=float), np.asarray(inputs, dtype=float)


def _guard_excitation(z_covs):
    for h in range(z_covs.shape[0]):
        eigs = np.linalg.eigvalsh(z_covs[h])
        if eigs[0] <= EXCITATION_RTOL * max(eigs[-1], 0.0):
            raise ExcitationError("z covariance numerically singular", agent=h)


def theory_step_size(thetas):
    """Step size bound 0.956 / lambda_max(mean theta Gram) from the analysis."""
    thetas = np.atleast_2d(np.asarray(thetas, dtype=float))
    gram = thetas.T @ thetas / thetas.shape[0]
    return 0.956 / float(np.linalg.eigvalsh(gram)[-1])


def write_dfw_report(report, path):
    """One line per iteration: n subspace_distance."""
    if report.iterates is None:
        raise DimensionError("report has no recorded distances")
    with open(path, "w", newline="\n") as f:
        for n, d in enumerate(report.iterates):
            f.write(f"{n} {d:.17g}\n")
