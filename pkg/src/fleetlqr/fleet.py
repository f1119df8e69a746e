"""Fleets of linear systems sharing a low-dimensional dynamics basis.

Two builders: Euler-discretized cartpole linearizations with per-slot
parameter perturbations, and exact synthetic fleets generated from a
random orthonormal basis. Both return a Fleet carrying the systems, the
shared basis with per-system weights, stabilizing initial gains, and the
cost/noise parameters. excitation_level computes the persistence-of-
excitation constant of a (basis, gain) pair.
"""

from dataclasses import dataclass

import numpy as np

from .errors import DimensionError, FleetConstructionError
from .lqrcore import CostParams, StateSpace, lqr_gain, spectral_radius
from .matkit import ORTHO_TOL, thin_qr, vec, vec_inv

# nominal (cart mass, pole mass, pole length) tuples; slots cycle these
CARTPOLE_NOMINALS = (
    (0.4, 1.0, 1.0),
    (1.6, 1.3, 0.3),
    (1.3, 0.7, 0.65),
    (0.2, 0.055, 1.36),
    (0.2, 0.47, 1.825),
)


@dataclass(frozen=True)
class CartpoleParams:
    cart_mass: float
    pole_mass: float
    pole_length: float

    def __post_init__(self):
        for name in ("cart_mass", "pole_mass", "pole_length"):
            v = getattr(self, name)
            if not (np.isfinite(v) and v > 0):
                raise DimensionError(f"{name} must be positive and finite, got {v}")


@dataclass(frozen=True)
class SharedBasis:
    """Column-orthonormal phi plus one weight vector per system."""

    phi: np.ndarray
    thetas: np.ndarray  # (H, d_theta)

    def __post_init__(self):
        phi = np.asarray(self.phi, dtype=float)
        thetas = np.atleast_2d(np.asarray(self.thetas, dtype=float))
        if np.max(np.abs(phi.T @ phi - np.eye(phi.shape[1]))) > ORTHO_TOL:
            raise DimensionError("phi is not column-orthonormal")
        if thetas.shape[1] != phi.shape[1]:
            raise DimensionError("theta dimension does not match basis rank")
        object.__setattr__(self, "phi", phi)
        object.__setattr__(self, "thetas", thetas)

    @property
    def d_theta(self):
        return self.phi.shape[1]

    def theta_gram(self):
        """sum_h theta_h theta_h^T, the task-diversity Gram matrix."""
        return self.thetas.T @ self.thetas

    def reconstruct(self, h, d_x):
        """[A B] of system h as encoded by the basis."""
        return vec_inv(self.phi @ self.thetas[h], d_x)


@dataclass(frozen=True)
class Fleet:
    systems: tuple
    basis: SharedBasis
    k0: tuple
    cost: CostParams

    def __post_init__(self):
        for h, (sys, k) in enumerate(zip(self.systems, self.k0)):
            if spectral_radius(sys.a + sys.b @ k) >= 1.0:
                raise FleetConstructionError(f"k0 of system {h} does not stabilize")

    @property
    def n_agents(self):
        return len(self.systems)

    @property
    def d_x(self):
        return self.systems[0].d_x

    @property
    def d_u(self):
        return self.systems[0].d_u


def linearize_cartpole(params, gravity=1.0, dt=0.25):
    """Euler-discretized linearization of the cartpole about the origin.

    State order [position, velocity, angle, angular rate]; the linearized
    accelerations are pdd = -(m/M) g th + u/M and
    thdd = ((M+m) g / (M l)) th - u/(M l).
    """
    if dt <= 0:
        raise DimensionError("dt must be positive")
    big_m, small_m, length = params.cart_mass, params.pole_mass, params.pole_length
    a_c = np.zeros((4, 4))
    a_c[0, 1] = 1.0
    a_c[1, 2] = -(small_m / big_m) * gravity
    a_c[2, 3] = 1.0
    a_c[3, 2] = (big_m + small_m) * gravity / (big_m * length)
    b_c = np.zeros((4, 1))
    b_c[1, 0] = 1.0 / big_m
    b_c[3, 0] = -1.0 / (big_m * length)
    return StateSpace(np.eye(4) + dt * a_c, dt * b_c)


def extract_shared_basis(systems, rel_rank_tol=1e-8):
    """Shared basis of a list of systems by SVD of the stacked vec([A B]).

    Keeps singular directions with sigma > rel_rank_tol * sigma_max. Each
    retained column is sign-fixed to load nonnegatively on the data column
    it explains most strongly, so a single system yields its normalized
    vectorization with a positive weight.
    """
    if len(systems) == 0:
        raise DimensionError("need at least one system")
    d_x = systems[0].d_x
    data = np.column_stack([vec(np.hstack([s.a, s.b])) for s in systems])
    u, sv, vt = np.linalg.svd(data, full_matrices=False)
    keep = sv > rel_rank_tol * sv[0]
    u, vt = u[:, keep], vt[keep]
    for i in range(u.shape[1]):
        j = int(np.argmax(np.abs(vt[i])))
        if vt[i, j] < 0:
            u[:, i] = -u[:, i]
    thetas = data.T @ u  # (H, d_theta)
    basis = SharedBasis(u, thetas)
    worst = max(
        np.max(np.abs(basis.reconstruct(h, d_x) - np.hstack([s.a, s.b])))
        for h, s in enumerate(systems)
    )
    if worst > 1e-8:
        raise FleetConstructionError(f"basis reconstruction error {worst:.2e}")
    return basis


def build_cartpole_fleet(
    n_agents,
    rng,
    gravity=1.0,
    dt=0.25,
    perturb_high=0.1,
    noise_var=0.01,
    max_resample=100,
):
    """Fleet of perturbed cartpole linearizations.

    Slot h cycles the five nominal parameter tuples; each of the three
    parameters gets an independent additive U(0, perturb_high) offset.
    K0 for the slot is the LQR gain of the unperturbed nominal, and the
    perturbation is resampled (up to max_resample times) until that gain
    also stabilizes the perturbed system. Pass perturb_high=0 to get the
    unperturbed nominals themselves.
    """
    if n_agents < 1:
        raise DimensionError("need at least one agent")
    cost = CostParams.identity(4, 1, noise_var=noise_var)
    nominal_gains = [
        lqr_gain(linearize_cartpole(CartpoleParams(*c), gravity, dt), cost)
        for c in CARTPOLE_NOMINALS
    ]
    systems, gains = [], []
    for h in range(n_agents):
        slot = h % len(CARTPOLE_NOMINALS)
        base = CARTPOLE_NOMINALS[slot]
        k0 = nominal_gains[slot]
        for _ in range(max_resample):
            delta = rng.uniform(0.0, perturb_high, size=3) if perturb_high > 0 else np.zeros(3)
            sys = linearize_cartpole(
                CartpoleParams(base[0] + delta[0], base[1] + delta[1], base[2] + delta[2]),
                gravity,
                dt,
            )
            if spectral_radius(sys.a + sys.b @ k0) < 1.0:
                break
        else:
            raise FleetConstructionError(
                f"slot {h}: no stabilizable perturbation in {max_resample} draws"
            )
        systems.append(sys)
        gains.append(k0)
    basis = extract_shared_basis(systems)
    _check_task_diversity(basis)
    return Fleet(tuple(systems), basis, tuple(gains), cost)


def build_synthetic_fleet(d_x, d_u, d_theta, n_agents, stability_margin, rng, noise_var=1.0):
    """Exact generative fleet: [A B] = vec_inv(phi theta) with random phi.

    theta draws are standard normal; any system whose A exceeds the
    stability margin is scaled down (the whole theta is scaled, so the
    decomposition stays exact). All A end up stable, so K0 = 0.
    """
    p = d_x * (d_x + d_u)
    if d_theta > p:
        raise DimensionError(f"d_theta={d_theta} exceeds p={p}")
    if n_agents < d_theta:
        raise DimensionError("need H >= d_theta for an identifiable task Gram")
    for _ in range(20):
        phi = thin_qr(rng.standard_normal((p, d_theta)))[0]
        thetas = rng.standard_normal((n_agents, d_theta))
        systems = []
        for h in range(n_agents):
            ab = vec_inv(phi @ thetas[h], d_x)
            rho = spectral_radius(ab[:, :d_x])
            if rho > 1.0 - stability_margin:
                thetas[h] *= (1.0 - stability_margin) / rho
                ab = vec_inv(phi @ thetas[h], d_x)
            systems.append(StateSpace(ab[:, :d_x], ab[:, d_x:]))
        basis = SharedBasis(phi, thetas)
        gram_eigs = np.linalg.eigvalsh(basis.theta_gram())
        if gram_eigs[0] > 1e-10 * gram_eigs[-1]:
            break
    else:
        raise FleetConstructionError("task Gram stayed rank-deficient over 20 draws")
    cost = CostParams.identity(d_x, d_u, noise_var=noise_var)
    if all(spectral_radius(s.a) < 1.0 for s in systems):
        gains = tuple(np.zeros((d_u, d_x)) for _ in systems)
    else:  # unreachable under the rescaling above, kept for safety
        gains = tuple(lqr_gain(s, cost) for s in systems)
    return Fleet(tuple(systems), basis, gains, cost)


def _check_task_diversity(basis):
    eigs = np.linalg.eigvalsh(basis.theta_gram())
    if eigs[0] <= 1e-10 * eigs[-1]:
        raise FleetConstructionError("task Gram matrix is rank-deficient")


def excitation_level(phi, k):
    """Persistence-of-excitation constant of a basis under a fixed gain.

    lambda_min of phi^T ([I;K][I;K]^T kron I_dx) phi, assembled without
    the p x p Kronecker product: column i of phi unstacks to [Ai Bi] and
    the Gram entry is <Ai + Bi K, Aj + Bj K>_F.
    """
    phi = np.asarray(phi, dtype=float)
    k = np.atleast_2d(np.asarray(k, dtype=float))
    d_u, d_x = k.shape
    if phi.shape[0] != d_x * (d_x + d_u):
        raise DimensionError(
            f"basis rows {phi.shape[0]} incompatible with gain shape {k.shape}"
        )
    closed = np.empty((phi.shape[1], d_x, d_x))
    for i in range(phi.shape[1]):
        mat = vec_inv(phi[:, i], d_x)
        closed[i] = mat[:, :d_x] + mat[:, d_x:] @ k
    gram = np.einsum("iab,jab->ij", closed, closed)
    return float(np.linalg.eigvalsh(gram)[0])


def save_fleet_text(fleet, path):
    """Plain-text fleet dump: header `H d_x d_u d_theta`, then labeled blocks."""
    lines = [f"{fleet.n_agents} {fleet.d_x} {fleet.d_u} {fleet.basis.d_theta}"]

    def emit(tag, mat):
        mat = np.atleast_2d(mat)
        lines.append(f"# {tag} {mat.shape[0]} {mat.shape[1]}")
        for row in mat:
            lines.append(" ".join(f"{v:.17g}" for v in row))

    for h, sys in enumerate(fleet.systems):
        emit(f"a {h}", sys.a)
        emit(f"b {h}", sys.b)
        emit(f"k0 {h}", fleet.k0[h])
    emit("phi", fleet.basis.phi)
    emit("thetas", fleet.basis.thetas)
    emit("q", fleet.cost.q)
    emit("r", fleet.cost.r)
    emit("w_cov", fleet.cost.w_cov)
    with open(path, "w", newline="\n") as f:
        f.write("\n".join(lines) + "\n")


def load_fleet_text(path):
    """Read back a save_fleet_text dump."""
    with open(path) as f:
        raw = [ln.strip() for ln in f if ln.strip()]
    n_agents, d_x, d_u, _ = (int(v) for v in raw[0].split())
    blocks = {}
    i = 1
    while i < len(raw):
        assert raw[i].startswith("#"), f"expected block header at line {i + 1}"
        parts = raw[i].split()
        tag, rows = " ".join(parts[1:-2]), int(parts[-2])
        blocks[tag] = np.array(
            [[float(v) for v in raw[i + 1 + rr].split()] for rr in range(rows)]
        )
        i += 1 + rows
    systems = tuple(
        StateSpace(blocks[f"a {h}"], blocks[f"b {h}"]) for h in range(n_agents)
    )
    gains = tuple(blocks[f"k0 {h}"] for h in range(n_agents))
    basis = SharedBasis(blocks["phi"], blocks["thetas"])
    cost = CostParams(blocks["q"], blocks["r"], blocks["w_cov"])
    return Fleet(systems, basis, gains, cost)
