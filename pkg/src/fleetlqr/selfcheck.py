"""Fast built-in invariant and oracle checks behind `fleetlqr check`.

Each check is a small, seeded replica of the core test suite, sized to
finish in seconds. run_all returns (name, ok, detail) triples.
"""

import math
import os
import tempfile

import numpy as np

from . import _kernels
from .fleet import build_synthetic_fleet
from .harness import RegretCurve, read_regret_csv, write_regret_csv
from .lqrcore import (
    CostParams,
    StateSpace,
    avg_cost,
    ce_suboptimality_bound,
    dare_solve,
    lqr_gain,
    spectral_radius,
)
from .matkit import perturbed_basis, subspace_distance, thin_qr, vec_inv
from .mtlearn import CovStats, dfw_gradient, dfw_run, ls_weights
from .orchestrator import EpochSchedule, ExplorationSchedule, run_multitask
from .simkit import GaussianNoise, rollout


def _random_stable_system(rng, d_x, d_u):
    a = rng.standard_normal((d_x, d_x))
    a *= 0.9 / max(spectral_radius(a), 1e-12)
    b = rng.standard_normal((d_x, d_u))
    return StateSpace(a, b)


def _check_dare_golden():
    sys = StateSpace(np.array([[1.0]]), np.array([[1.0]]))
    cost = CostParams.identity(1, 1)
    p = dare_solve(sys, cost)
    want = (1.0 + math.sqrt(5.0)) / 2.0
    assert abs(p[0, 0] - want) < 1e-9, f"p={p[0,0]:.12f} want {want:.12f}"


def _check_dare_residuals():
    rng = np.random.default_rng(11)
    for _ in range(20):
        d_x = int(rng.integers(1, 5))
        d_u = int(rng.integers(1, 4))
        sys = _random_stable_system(rng, d_x, d_u)
        dare_solve(sys, CostParams.identity(d_x, d_u))  # raises if residual high


def _check_ce_bound():
    rng = np.random.default_rng(23)
    for _ in range(10):
        sys = _random_stable_system(rng, 3, 2)
        cost = CostParams.identity(3, 2)
        p_star = dare_solve(sys, cost)
        k_star = lqr_gain(sys, cost)
        thr, _ = ce_suboptimality_bound(p_star, 0.0)
        err = rng.standard_normal((3, 5))
        err *= math.sqrt(0.5 * thr) / np.linalg.norm(err)
        err_sq = float(np.linalg.norm(err) ** 2)
        ab = np.hstack([sys.a, sys.b]) + err
        k_hat = lqr_gain(StateSpace(ab[:, :3], ab[:, 3:]), cost)
        gap = avg_cost(sys, cost, k_hat) - avg_cost(sys, cost, k_star)
        _, bound = ce_suboptimality_bound(p_star, err_sq)
        assert gap <= bound + 1e-12, f"gap {gap:.3e} exceeds bound {bound:.3e}"


def _check_ls_identity():
    rng = np.random.default_rng(37)
    d_x, d_u, steps = 3, 2, 400
    p = d_x * (d_x + d_u)
    sys = _random_stable_system(rng, d_x, d_u)
    states = np.zeros((steps + 1, d_x))
    inputs = rng.standard_normal((steps, d_u))
    for t in range(steps):
        states[t + 1] = sys.a @ states[t] + sys.b @ inputs[t] + 0.1 * rng.standard_normal(d_x)
    stats = CovStats.from_trajectory(states, inputs)
    theta = ls_weights(np.eye(p), stats)
    brute = (stats.cross.T @ np.linalg.pinv(stats.z_cov)).reshape(-1, order="F")
    assert np.max(np.abs(theta - brute)) < 1e-8


def _check_dfw_gradient_fd():
    rng = np.random.default_rng(41)
    d_x, d_u, r = 2, 1, 2
    p = d_x * (d_x + d_u)
    for _ in range(3):
        phi = thin_qr(rng.standard_normal((p, r)))[0]
        theta = rng.standard_normal(r)
        z = rng.standard_normal((40, p // d_x))
        zc = z.T @ z / 40
        cross = rng.standard_normal((p // d_x, d_x))
        stats = CovStats(zc, cross, 40)
        grad = dfw_gradient(phi, theta, stats)

        def loss(mat):
            fit = np.linalg.solve(zc, cross).reshape(-1)
            lead = mat @ theta - fit
            return 0.5 * float(lead @ lead)

        eps = 1e-6
        num = np.zeros_like(phi)
        for i in range(p):
            for j in range(r):
                up = phi.copy(); up[i, j] += eps
                dn = phi.copy(); dn[i, j] -= eps
                num[i, j] = (loss(up) - loss(dn)) / (2 * eps)
        rel = np.linalg.norm(grad - num) / max(np.linalg.norm(num), 1e-12)
        assert rel < 1e-5, f"gradient relative error {rel:.2e}"


def _check_dfw_contraction():
    rng = np.random.default_rng(53)
    fleet = build_synthetic_fleet(4, 2, 3, 8, 0.2, rng, noise_var=1.0)
    phi0 = perturbed_basis(fleet.basis.phi, 0.5, rng)
    data = []
    for h in range(fleet.n_agents):
        sys = fleet.systems[h]
        states = np.zeros((81, 4))
        inputs = rng.standard_normal((80, 2))
        for t in range(80):
            states[t + 1] = sys.a @ states[t] + sys.b @ inputs[t]
        data.append((states, inputs))
    rep = dfw_run(phi0, data, 500, 0.25, mode="full_data", phi_star=fleet.basis.phi)
    dists = np.asarray(rep.iterates)
    assert dists[-1] < 1e-6, f"final distance {dists[-1]:.2e}"
    assert np.all(np.diff(dists) <= 1e-12), "distance not monotone"


def _check_backend_agreement():
    rng = np.random.default_rng(67)
    sys = _random_stable_system(rng, 4, 2)
    k = np.zeros((2, 4))
    x0 = rng.standard_normal(4)
    w = 0.05 * rng.standard_normal((50, 4))
    g = rng.standard_normal((50, 2))
    args = (sys.a, sys.b, k, x0, w, g, 0.3, 1e9, 0.0, 1e9, True)
    sa, ia, na, ca = _kernels.rollout_kernel(*args)
    sb, ib, nb, cb = _kernels._rollout_loop(*args)
    assert na == nb and ca == cb
    assert np.array_equal(sa, sb) and np.array_equal(ia, ib)

    n_agents, p, r = 3, 6, 2
    phi = thin_qr(rng.standard_normal((p, r)))[0]
    zc = np.empty((n_agents, 3, 3))
    cr = rng.standard_normal((n_agents, 3, 2))
    for h in range(n_agents):
        m = rng.standard_normal((8, 3))
        zc[h] = m.T @ m / 8 + 0.1 * np.eye(3)
    out_a = _kernels.dfw_accumulate(phi, zc, cr, 0.25)
    out_b = _kernels._dfw_accumulate_numpy(phi, zc, cr, 0.25)
    assert np.max(np.abs(out_a - out_b)) < 1e-10


def _check_loop_accounting():
    rng = np.random.default_rng(71)
    fleet = build_synthetic_fleet(2, 1, 2, 3, 0.3, rng, noise_var=0.1)
    es = EpochSchedule(4, 3)
    xs = ExplorationSchedule(mode="empirical", sigma1_sq=0.5)
    phi0 = perturbed_basis(fleet.basis.phi, 0.3, rng)
    ledger, diags = run_multitask(fleet, es, xs, 25.0, 15.0, phi0, 10, 0.25, "full_data", 5)
    for h in range(fleet.n_agents):
        times, regret = ledger.samples(h)
        assert times.size == es.total_steps
        assert np.array_equal(times, np.arange(1, es.total_steps + 1))
    assert len(diags) == es.k_fin


def _check_csv_roundtrip():
    t = np.array([10, 20, 40], dtype=np.int64)
    curve = RegretCurve(h=5, t=t, mean=np.array([1.5, 2.25, 3.125]),
                        stderr=np.array([0.1, 0.2, 0.3]), n_seeds=4)
    with tempfile.TemporaryDirectory() as d:
        path = os.path.join(d, "r.csv")
        write_regret_csv([curve], path)
        back = read_regret_csv(path)
    assert len(back) == 1 and back[0].h == 5
    assert np.allclose(back[0].mean, curve.mean, rtol=1e-8)


CHECKS = (
    ("dare-golden-scalar", _check_dare_golden),
    ("dare-random-residuals", _check_dare_residuals),
    ("ce-suboptimality-bound", _check_ce_bound),
    ("ls-identity-basis", _check_ls_identity),
    ("dfw-gradient-fd", _check_dfw_gradient_fd),
    ("dfw-noiseless-contraction", _check_dfw_contraction),
    ("kernel-backend-agreement", _check_backend_agreement),
    ("epoch-loop-accounting", _check_loop_accounting),
    ("regret-csv-roundtrip", _check_csv_roundtrip),
)


def run_all():
    results = []
    for name, fn in CHECKS:
        try:
            fn()
            results.append((name, True, ""))
        except Exception as exc:  # noqa: BLE001  (report, don't crash the CLI)
            results.append((name, False, f"{type(exc).__name__}: {exc}"))
    return results
