"""Riccati/Lyapunov solver tests against closed forms and residuals."""

import numpy as np
import pytest

from fleetlqr.errors import DimensionError, InstabilityError, NonStabilizableError
from fleetlqr.lqrcore import (
    CostParams,
    StateSpace,
    avg_cost,
    ce_suboptimality_bound,
    dare_solve,
    dlyap_solve,
    lqr_gain,
    spectral_radius,
)

GOLDEN = (1.0 + np.sqrt(5.0)) / 2.0


def random_stable(rng, d, rho=0.8):
    m = rng.standard_normal((d, d))
    return m * (rho / max(spectral_radius(m), 1e-12))


def random_stabilizable(rng, d_x, d_u):
    a = rng.standard_normal((d_x, d_x)) * (1.2 / np.sqrt(d_x))
    b = rng.standard_normal((d_x, d_u))
    return StateSpace(a, b)


def test_spectral_radius_examples():
    assert spectral_radius(np.zeros((3, 3))) == 0.0
    assert abs(spectral_radius(np.diag([0.5, -2.0])) - 2.0) < 1e-12
    rot = np.array([[0.0, -1.0], [1.0, 0.0]])
    assert abs(spectral_radius(3.0 * rot) - 3.0) < 1e-12


def test_dlyap_zero_dynamics_returns_q():
    q = np.diag([2.0, 5.0])
    p = dlyap_solve(np.zeros((2, 2)), q)
    assert np.max(np.abs(p - q)) < 1e-12


def test_dlyap_scalar_geometric_series():
    p = dlyap_solve(np.array([[0.5]]), np.array([[1.0]]))
    assert abs(p[0, 0] - 4.0 / 3.0) < 1e-10


def test_dlyap_residual_random_stable():
    rng = np.random.default_rng(20)
    for _ in range(50):
        d = int(rng.integers(1, 6))
        a = random_stable(rng, d, rho=float(rng.uniform(0.3, 0.95)))
        q = np.eye(d) + 0.1 * np.diag(rng.uniform(0, 1, d))
        p = dlyap_solve(a, q)
        resid = a.T @ p @ a - p + q
        assert np.max(np.abs(resid)) < 1e-8 * max(np.max(np.abs(p)), 1.0)
        assert np.min(np.linalg.eigvalsh(p)) > 0


def test_dlyap_rejects_unstable():
    with pytest.raises(InstabilityError):
        dlyap_solve(np.array([[1.01]]), np.array([[1.0]]))


def test_dare_scalar_golden_ratio():
    sys = StateSpace(np.array([[1.0]]), np.array([[1.0]]))
    p = dare_solve(sys, CostParams.identity(1, 1))
    assert abs(p[0, 0] - GOLDEN) < 1e-9


def test_dare_zero_dynamics_returns_q():
    sys = StateSpace(np.zeros((3, 3)), np.ones((3, 1)))
    cost = CostParams.identity(3, 1)
    p = dare_solve(sys, cost)
    assert np.max(np.abs(p - np.eye(3))) < 1e-9


def test_dare_residual_random_stabilizable():
    rng = np.random.default_rng(21)
    count = 0
    while count < 60:
        d_x = int(rng.integers(1, 7))
        d_u = int(rng.integers(1, d_x + 1))
        sys = random_stabilizable(rng, d_x, d_u)
        cost = CostParams.identity(d_x, d_u)
        try:
            p = dare_solve(sys, cost)
        except NonStabilizableError:
            continue
        a, b = sys.a, sys.b
        gain_term = a.T @ p @ b @ np.linalg.solve(np.eye(d_u) + b.T @ p @ b, b.T @ p @ a)
        resid = a.T @ p @ a - p - gain_term + np.eye(d_x)
        assert np.max(np.abs(resid)) < 1e-8 * max(np.max(np.abs(p)), 1.0)
        count += 1


def test_dare_reduces_to_dlyap_when_input_useless():
    # with b = 0 the optimal-cost equation is the lyapunov equation
    rng = np.random.default_rng(22)
    for _ in range(10):
        a = random_stable(rng, 3, rho=0.7)
        sys = StateSpace(a, np.zeros((3, 2)))
        p_dare = dare_solve(sys, CostParams.identity(3, 2))
        p_lyap = dlyap_solve(a, np.eye(3))
        assert np.max(np.abs(p_dare - p_lyap)) < 1e-8 * max(np.max(np.abs(p_lyap)), 1.0)


def test_dare_rejects_nonstabilizable():
    sys = StateSpace(np.array([[2.0]]), np.array([[0.0]]))
    with pytest.raises(NonStabilizableError):
        dare_solve(sys, CostParams.identity(1, 1))


def test_lqr_gain_zero_dynamics():
    sys = StateSpace(np.zeros((2, 2)), np.eye(2))
    k = lqr_gain(sys, CostParams.identity(2, 2))
    assert np.max(np.abs(k)) < 1e-10


def test_lqr_gain_scalar_closed_loop():
    sys = StateSpace(np.array([[1.0]]), np.array([[1.0]]))
    k = lqr_gain(sys, CostParams.identity(1, 1))
    assert abs(k[0, 0] + 1.0 / GOLDEN) < 1e-8
    closed = sys.a + sys.b @ k
    assert abs(closed[0, 0] - (2.0 - GOLDEN)) < 1e-8


def test_lqr_gain_zero_input_matrix():
    a = random_stable(np.random.default_rng(23), 3, rho=0.5)
    k = lqr_gain(StateSpace(a, np.zeros((3, 1))), CostParams.identity(3, 1))
    assert np.max(np.abs(k)) == 0.0


def test_lqr_gain_stabilizes_and_is_optimal_among_perturbations():
    rng = np.random.default_rng(24)
    for _ in range(15):
        sys = random_stabilizable(rng, 3, 2)
        cost = CostParams.identity(3, 2)
        try:
            k = lqr_gain(sys, cost)
        except NonStabilizableError:
            continue
        assert spectral_radius(sys.a + sys.b @ k) < 1.0
        j_star = avg_cost(sys, cost, k)
        for _ in range(8):
            k_alt = k + 0.05 * rng.standard_normal(k.shape)
            if spectral_radius(sys.a + sys.b @ k_alt) >= 1.0:
                continue
            assert avg_cost(sys, cost, k_alt) >= j_star - 1e-9


def test_avg_cost_scalar_example():
    sys = StateSpace(np.array([[0.0]]), np.array([[1.0]]))
    cost = CostParams.identity(1, 1)
    # closed loop is a + b k = k; with k = 0 the cost is trace(P W) = 1
    assert abs(avg_cost(sys, cost, np.zeros((1, 1))) - 1.0) < 1e-10


def test_avg_cost_scales_linearly_in_noise():
    rng = np.random.default_rng(25)
    sys = random_stabilizable(rng, 3, 1)
    cost1 = CostParams.identity(3, 1, noise_var=1.0)
    cost3 = CostParams.identity(3, 1, noise_var=3.0)
    k = lqr_gain(sys, cost1)
    assert abs(avg_cost(sys, cost3, k) - 3.0 * avg_cost(sys, cost1, k)) < 1e-8


def test_ce_bound_worked_example():
    threshold, bound = ce_suboptimality_bound(np.eye(1), 1e-4)
    assert abs(threshold - 1.0 / 3000.0) < 1e-15
    assert abs(bound - 0.0142) < 1e-15


def test_ce_bound_scales_with_p_norm():
    threshold, bound = ce_suboptimality_bound(2.0 * np.eye(3), 1e-6)
    assert abs(threshold - 2.0**-10 / 3000.0) < 1e-18
    assert abs(bound - 142.0 * 2.0**8 * 1e-6) < 1e-12


def test_ce_bound_holds_on_perturbed_systems():
    rng = np.random.default_rng(26)
    checked = 0
    while checked < 40:
        sys = random_stabilizable(rng, 3, 2)
        cost = CostParams.identity(3, 2)
        try:
            p = dare_solve(sys, cost)
            k_star = lqr_gain(sys, cost)
        except NonStabilizableError:
            continue
        threshold, _ = ce_suboptimality_bound(p, 0.0)
        err = np.sqrt(0.5 * threshold)
        da = rng.standard_normal(sys.a.shape)
        db = rng.standard_normal(sys.b.shape)
        scale = err / np.linalg.norm(np.hstack([da, db]), 2)
        sys_hat = StateSpace(sys.a + scale * da, sys.b + scale * db)
        k_hat = lqr_gain(sys_hat, cost)
        actual_sq = np.linalg.norm(
            np.hstack([sys_hat.a - sys.a, sys_hat.b - sys.b]), 2
        ) ** 2
        assert actual_sq <= threshold
        _, bound = ce_suboptimality_bound(p, actual_sq)
        gap = avg_cost(sys, cost, k_hat) - avg_cost(sys, cost, k_star)
        assert -1e-10 <= gap <= bound + 1e-12
        checked += 1


def test_cost_params_validation():
    with pytest.raises(DimensionError):
        CostParams(q=np.eye(3) * 0.5, r=np.eye(1), w_cov=np.eye(3))  # q below identity
    with pytest.raises(DimensionError):
        CostParams(q=np.eye(3), r=2.0 * np.eye(1), w_cov=np.eye(3))  # r must be identity
    with pytest.raises(DimensionError):
        CostParams(q=np.eye(3), r=np.eye(1), w_cov=-np.eye(3))  # w_cov must be psd
    c = CostParams.identity(4, 2, noise_var=0.25)
    assert np.array_equal(c.w_cov, 0.25 * np.eye(4))


def test_state_space_validation():
    with pytest.raises(DimensionError):
        StateSpace(np.zeros((2, 3)), np.zeros((2, 1)))
    with pytest.raises(DimensionError):
        StateSpace(np.zeros((2, 2)), np.zeros((3, 1)))
    sys = StateSpace(np.zeros((2, 2)), np.zeros((2, 1)))
    assert sys.d_x == 2 and sys.d_u == 1
