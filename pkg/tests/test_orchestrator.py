"""Epoch-loop tests: schedules, time accounting, abort handling, exactness."""

import numpy as np
import pytest

from fleetlqr.errors import SetupError
from fleetlqr.fleet import build_cartpole_fleet, build_synthetic_fleet
from fleetlqr.lqrcore import avg_cost, lqr_gain
from fleetlqr.matkit import random_basis_at_distance
from fleetlqr.orchestrator import (
    EpochDiagnostics,
    EpochSchedule,
    ExplorationSchedule,
    agent_rng,
    run_multitask,
    run_singletask_baseline,
    sigma_schedule,
    write_diagnostics_csv,
)


def small_synthetic(seed=80, n_agents=4, noise_var=0.01):
    rng = np.random.default_rng(seed)
    return build_synthetic_fleet(2, 1, 2, n_agents, 0.3, rng, noise_var=noise_var)


def test_epoch_schedule_arithmetic():
    es = EpochSchedule(30, 10)
    assert es.boundary(0) == 0
    assert es.boundary(1) == 30
    assert es.boundary(2) == 60
    assert es.boundary(10) == 30 * 512
    assert es.total_steps == 15360
    assert es.length(1) == 30 and es.length(2) == 30 and es.length(3) == 60
    assert sum(es.length(k) for k in range(1, 11)) == es.total_steps


def test_epoch_schedule_validation():
    with pytest.raises(SetupError):
        EpochSchedule(1, 5)
    with pytest.raises(SetupError):
        EpochSchedule(10, 0)


def test_sigma_schedule_halving_decay():
    xs = ExplorationSchedule(mode="empirical", sigma1_sq=1.0)
    assert sigma_schedule(xs, 1, 30, 25, 5, 1) == 1.0
    assert abs(sigma_schedule(xs, 2, 60, 25, 5, 1) - 2.0 ** -0.5) < 1e-15
    assert abs(sigma_schedule(xs, 3, 120, 25, 5, 1) - 0.5) < 1e-15


def test_sigma_schedule_low_noise_mode():
    xs = ExplorationSchedule(mode="easy")
    assert abs(sigma_schedule(xs, 4, 10**4, 100, 5, 1) - 1e-3) < 1e-15


def test_sigma_schedule_high_noise_mode_takes_max():
    xs = ExplorationSchedule(mode="hard")
    got = sigma_schedule(xs, 1, 16, 1, 1, 1)
    assert abs(got - max(16**-0.25, (1 / 16) ** 0.5)) < 1e-15


def test_sigma_schedule_clamps_to_one(caplog):
    xs = ExplorationSchedule(mode="empirical", sigma1_sq=3.0)
    with caplog.at_level("WARNING", logger="fleetlqr"):
        assert sigma_schedule(xs, 1, 30, 5, 3, 1) == 1.0
    assert any("clamped" in rec.message for rec in caplog.records)


def test_sigma_schedule_rejects_epoch_zero():
    with pytest.raises(SetupError):
        sigma_schedule(ExplorationSchedule(), 0, 30, 5, 3, 1)


def test_exploration_schedule_validation():
    with pytest.raises(SetupError):
        ExplorationSchedule(mode="wild")
    with pytest.raises(SetupError):
        ExplorationSchedule(rho_pow=1.0)
    with pytest.raises(SetupError):
        ExplorationSchedule(sigma1_sq=0.0)
    with pytest.raises(SetupError):
        ExplorationSchedule(d0=-0.1)


def test_agent_rng_streams_are_reproducible_and_distinct():
    a = agent_rng(7, 2, 3).standard_normal(4)
    b = agent_rng(7, 2, 3).standard_normal(4)
    assert np.array_equal(a, b)
    c = agent_rng(7, 2, 4).standard_normal(4)
    d = agent_rng(7, 3, 3).standard_normal(4)
    assert not np.array_equal(a, c) and not np.array_equal(a, d)


def test_multitask_records_every_step():
    fleet = small_synthetic()
    es = EpochSchedule(6, 4)
    xs = ExplorationSchedule()
    ledger, diags = run_multitask(
        fleet, es, xs, 25.0, 50.0, fleet.basis.phi, 3, 0.25, "full_data", 11
    )
    assert len(diags) == es.k_fin
    for h in range(fleet.n_agents):
        times, regrets = ledger.samples(h)
        assert np.array_equal(times, np.arange(1, es.total_steps + 1))
        assert np.all(np.isfinite(regrets))
    for k, d in enumerate(diags, start=1):
        assert d.epoch == k
        assert d.tau_k == es.boundary(k)
        assert abs(d.sigma_sq - sigma_schedule(xs, k, d.tau_k, fleet.n_agents, 2, 1)) < 1e-15


def test_multitask_covers_horizon_despite_forced_aborts():
    fleet = small_synthetic(noise_var=0.05)
    es = EpochSchedule(4, 4)
    xs = ExplorationSchedule()
    # state bound so tight the first noise kick breaches it
    ledger, diags = run_multitask(
        fleet, es, xs, 0.01, 50.0, fleet.basis.phi, 3, 0.25, "full_data", 12
    )
    assert diags[-1].aborts == fleet.n_agents
    for h in range(fleet.n_agents):
        times, _ = ledger.samples(h)
        assert np.array_equal(times, np.arange(1, es.total_steps + 1))


def test_multitask_noiseless_exact_identification():
    # noiseless dynamics with the true representation: the weights fit is
    # exact from the first nonempty window and the representation stays put
    fleet = small_synthetic(noise_var=1e-12)
    es = EpochSchedule(12, 4)
    xs = ExplorationSchedule()
    ledger, diags = run_multitask(
        fleet, es, xs, 25.0, 50.0, fleet.basis.phi, 5, 0.25, "full_data", 13
    )
    assert np.isnan(diags[0].mean_param_err)  # epoch 1 has no weights window
    for d in diags[1:]:
        assert d.mean_param_err < 1e-4
    for d in diags:
        assert d.rep_distance < 1e-4
        assert d.aborts == 0


def test_multitask_aborted_agents_still_drive_representation():
    # every agent aborts in epoch 1, yet the shared update keeps moving
    # the representation toward the truth because exploration continues
    fleet = small_synthetic(seed=81, n_agents=6, noise_var=0.05)
    rng = np.random.default_rng(82)
    phi0 = random_basis_at_distance(fleet.basis.phi, 0.5, rng)
    es = EpochSchedule(16, 3)
    xs = ExplorationSchedule()
    _, diags = run_multitask(
        fleet, es, xs, 0.01, 50.0, phi0, 50, 0.25, "full_data", 14
    )
    assert all(d.aborts == fleet.n_agents for d in diags)
    assert abs(diags[0].rep_distance - 0.5) < 1e-8
    assert diags[-1].rep_distance < 0.8 * diags[0].rep_distance


def test_multitask_split_mode_runs():
    fleet = small_synthetic()
    es = EpochSchedule(8, 3)
    ledger, diags = run_multitask(
        fleet, es, ExplorationSchedule(), 25.0, 50.0, fleet.basis.phi, 2, 0.2,
        "split", 15,
    )
    times, _ = ledger.samples(0)
    assert times[-1] == es.total_steps
    assert len(diags) == 3


def test_multitask_deterministic():
    fleet = small_synthetic()
    es = EpochSchedule(6, 3)
    xs = ExplorationSchedule()
    out = []
    for _ in range(2):
        ledger, diags = run_multitask(
            fleet, es, xs, 25.0, 50.0, fleet.basis.phi, 3, 0.25, "full_data", 16
        )
        out.append((ledger, diags))
    for h in range(fleet.n_agents):
        r0 = out[0][0].samples(h)[1]
        r1 = out[1][0].samples(h)[1]
        assert np.array_equal(r0, r1)
    for d0, d1 in zip(out[0][1], out[1][1]):
        assert (d0.epoch, d0.tau_k, d0.sigma_sq, d0.aborts) == (
            d1.epoch, d1.tau_k, d1.sigma_sq, d1.aborts
        )
        assert np.array_equal(d0.rep_distance, d1.rep_distance)
        assert np.array_equal(d0.mean_param_err, d1.mean_param_err, equal_nan=True)


def test_multitask_setup_errors():
    fleet = small_synthetic()
    es = EpochSchedule(6, 2)
    xs = ExplorationSchedule()
    with pytest.raises(SetupError):
        run_multitask(fleet, es, xs, 25.0, 50.0, np.eye(6)[:, :3], 3, 0.25,
                      "full_data", 1)
    with pytest.raises(SetupError):
        run_multitask(fleet, es, xs, 0.0, 50.0, fleet.basis.phi, 3, 0.25,
                      "full_data", 1)
    with pytest.raises(SetupError):
        run_multitask(fleet, es, xs, 25.0, -1.0, fleet.basis.phi, 3, 0.25,
                      "full_data", 1)


def test_baseline_records_every_step_and_true_reference():
    fleet = build_cartpole_fleet(3, np.random.default_rng(83))
    es = EpochSchedule(8, 4)
    ledger = run_singletask_baseline(fleet, 0, es, ExplorationSchedule(), 25.0,
                                     15.0, 17)
    times, regrets = ledger.samples(0)
    assert np.array_equal(times, np.arange(1, es.total_steps + 1))
    k_star = lqr_gain(fleet.systems[0], fleet.cost)
    assert abs(ledger.j_star[0] - avg_cost(fleet.systems[0], fleet.cost, k_star)) < 1e-12


def test_baseline_covers_horizon_after_abort():
    fleet = small_synthetic(noise_var=0.05)
    es = EpochSchedule(4, 3)
    ledger = run_singletask_baseline(fleet, 1, es, ExplorationSchedule(), 0.01,
                                     50.0, 18)
    times, _ = ledger.samples(0)
    assert np.array_equal(times, np.arange(1, es.total_steps + 1))


def test_baseline_deterministic():
    fleet = small_synthetic()
    es = EpochSchedule(6, 3)
    a = run_singletask_baseline(fleet, 0, es, ExplorationSchedule(), 25.0, 50.0, 19)
    b = run_singletask_baseline(fleet, 0, es, ExplorationSchedule(), 25.0, 50.0, 19)
    assert np.array_equal(a.samples(0)[1], b.samples(0)[1])


def test_baseline_setup_errors():
    fleet = small_synthetic()
    es = EpochSchedule(6, 2)
    with pytest.raises(SetupError):
        run_singletask_baseline(fleet, 9, es, ExplorationSchedule(), 25.0, 50.0, 1)
    with pytest.raises(SetupError):
        run_singletask_baseline(fleet, 0, es, ExplorationSchedule(), -1.0, 50.0, 1)


def test_write_diagnostics_csv_format(tmp_path):
    rows = [
        (
            (25, 3),
            [
                EpochDiagnostics(1, 30, 1.0, 0.99, float("nan"), 0),
                EpochDiagnostics(2, 60, 2**-0.5, 0.8, 0.25, 1),
            ],
        )
    ]
    path = tmp_path / "diag.csv"
    write_diagnostics_csv(rows, path)
    lines = path.read_text().strip().split("\n")
    assert lines[0] == "H,seed,k,tau_k,sigma_k_sq,subspace_distance,mean_param_err,aborts"
    assert len(lines) == 3
    first = lines[1].split(",")
    assert first[0] == "25" and first[1] == "3" and first[2] == "1"
    assert first[3] == "30" and first[7] == "0"
    second = lines[2].split(",")
    assert abs(float(second[6]) - 0.25) < 1e-12 and second[7] == "1"
