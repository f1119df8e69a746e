"""The certainty-equivalent control loop with doubling epochs.

Every agent lives on one continuous trajectory of exactly T steps; all
data windows are absolute time ranges into it. In epoch k the task
weights are fit on [tau_{k-1}, ceil(3 tau_{k-1} / 2)) and the next gain
is synthesized from the fitted model; the window is empty in epoch 1
(tau_0 = 0), so the initial stabilizing gains carry into epoch 2 and the
whole warmup epoch feeds the representation. The representation update
runs after each epoch: in full_data mode over the entire history so far
[0, tau_k), in split mode over the epoch remainder
[ceil(3 tau_{k-1} / 2), tau_k) disjoint from the weights window.

Aborted agents (state or gain bound breached) play their initial
stabilizing gain for all remaining time. They keep the scheduled
exploration and keep contributing data to the shared updates; only their
controller is pinned.

The single-task baseline runs the same epoch loop for one agent with
unstructured least squares over its entire epoch data and no
representation machinery.
"""

import logging
import math
from dataclasses import dataclass

import numpy as np

from .errors import DataBudgetError, ExcitationError, NonStabilizableError, SetupError
from .fleet import excitation_level  # noqa: F401  (re-export for fleet-info)
from .lqrcore import StateSpace, avg_cost, lqr_gain
from .matkit import subspace_distance, vec_inv
from .mtlearn import CovStats, dfw_run, full_ls, ls_weights
from .simkit import (
    GaussianNoise,
    RegretLedger,
    record_regret_block,
    rollout,
    stage_costs,
)

log = logging.getLogger("fleetlqr")

# stream tags keep the independent randomness sources of one master seed apart
ROLLOUT_STREAM = 1
FLEET_STREAM = 2
PHI0_STREAM = 3


@dataclass(frozen=True)
class EpochSchedule:
    """Doubling epoch boundaries tau_k = 2^{k-1} tau1, epochs half-open
    [tau_{k-1}, tau_k), total horizon T = tau1 2^{k_fin - 1}."""

    tau1: int
    k_fin: int

    def __post_init__(self):
        if self.tau1 < 2:
            raise SetupError("tau1 must be >= 2")
        if self.k_fin < 1:
            raise SetupError("k_fin must be >= 1")

    def boundary(self, k):
        """tau_k; tau_0 = 0."""
        if k == 0:
            return 0
        return self.tau1 * 2 ** (k - 1)

    def length(self, k):
        return self.boundary(k) - self.boundary(k - 1)

    @property
    def total_steps(self):
        return self.tau1 * 2 ** (self.k_fin - 1)


@dataclass(frozen=True)
class ExplorationSchedule:
    """Exploration-variance schedule parameters.

    mode 'hard' and 'easy' follow the two theory schedules with rho_pow
    standing in for the unknowable contraction factor rho^N; 'empirical'
    is the experiment's sigma1_sq * 2^{-(k-1)/2} decay.
    """

    mode: str = "empirical"
    rho_pow: float = 0.5
    sigma1_sq: float = 1.0
    d0: float = 0.0

    def __post_init__(self):
        if self.mode not in ("hard", "easy", "empirical"):
            raise SetupError(f"unknown exploration mode {self.mode!r}")
        if not 0.0 < self.rho_pow < 1.0:
            raise SetupError("rho_pow must lie in (0, 1)")
        if self.sigma1_sq <= 0:
            raise SetupError("sigma1_sq must be positive")
        if self.d0 < 0:
            raise SetupError("d0 must be nonnegative")


def sigma_schedule(sched, k, tau_k, n_agents, d_theta, d_u):
    """Exploration variance sigma_k^2 for epoch k, clamped to at most 1."""
    if k < 1:
        raise SetupError("epoch index starts at 1")
    decay = sched.rho_pow ** (k - 1) * sched.d0
    if sched.mode == "hard":
        sig = max(
            tau_k ** (-0.25) * n_agents ** (-0.2),
            math.sqrt(d_theta / (d_u * tau_k)),
            decay,
        )
    elif sched.mode == "easy":
        sig = max(1.0 / math.sqrt(tau_k * n_agents), decay)
    else:
        sig = sched.sigma1_sq * 2.0 ** (-(k - 1) / 2.0)
    if sig > 1.0:
        log.warning("epoch %d: sigma_k^2 = %.3g clamped to 1", k, sig)
        sig = 1.0
    return sig


@dataclass(frozen=True)
class EpochDiagnostics:
    epoch: int
    tau_k: int
    sigma_sq: float
    rep_distance: float  # distance of the representation used this epoch
    mean_param_err: float  # mean ||[A B] est - true||_F over active agents
    aborts: int  # agents in the aborted state at epoch end


def agent_rng(master_seed, agent, epoch):
    """Independent stream per (seed, agent, epoch); schedule-order free."""
    return np.random.default_rng(
        np.random.SeedSequence(entropy=(master_seed, ROLLOUT_STREAM, agent, epoch))
    )


def _optimal_costs(fleet):
    k_star = [lqr_gain(sys, fleet.cost) for sys in fleet.systems]
    j_star = [avg_cost(sys, fleet.cost, k) for sys, k in zip(fleet.systems, k_star)]
    return k_star, j_star


def run_multitask(
    fleet, es, xs, x_b, k_b, phi0, n_iters, eta, dfw_mode, master_seed
):
    """Run the full multi-task loop; returns (RegretLedger, diagnostics)."""
    phi = np.asarray(phi0, dtype=float)
    if phi.shape != fleet.basis.phi.shape:
        raise SetupError(
            f"phi0 shape {phi.shape} does not match fleet basis {fleet.basis.phi.shape}"
        )
    if x_b <= 0 or k_b <= 0:
        raise SetupError("x_b and k_b must be positive")
    n_agents = fleet.n_agents
    d_x = fleet.d_x
    horizon = es.total_steps
    noise = GaussianNoise(fleet.cost.w_cov)
    _, j_star = _optimal_costs(fleet)
    ledger = RegretLedger(j_star)
    bounds = (x_b, k_b, horizon)

    gains = list(fleet.k0)
    aborted = [False] * n_agents
    hist_x = np.zeros((n_agents, horizon + 1, d_x))
    hist_u = np.zeros((n_agents, horizon, fleet.d_u))
    diagnostics = []

    for k in range(1, es.k_fin + 1):
        t0, t1 = es.boundary(k - 1), es.boundary(k)
        sig_sq = sigma_schedule(xs, k, t1, n_agents, fleet.basis.d_theta, fleet.d_u)
        sigma = math.sqrt(sig_sq)

        for h in range(n_agents):
            rng = agent_rng(master_seed, h, k)
            sys = fleet.systems[h]
            if aborted[h]:
                traj, _ = rollout(
                    sys, fleet.k0[h], sigma, t1 - t0, hist_x[h, t0], noise, None, rng
                )
                blocks = [traj]
            else:
                traj, ab = rollout(
                    sys, gains[h], sigma, t1 - t0, hist_x[h, t0], noise, bounds, rng
                )
                blocks = [traj]
                if ab.aborted:
                    log.info(
                        "epoch %d agent %d aborted at local step %d (%s)",
                        k, h, ab.abort_time, ab.reason,
                    )
                    aborted[h] = True
                    gains[h] = fleet.k0[h]
                    remaining = t1 - t0 - traj.length
                    if remaining > 0:
                        tail, _ = rollout(
                            sys, fleet.k0[h], sigma, remaining,
                            traj.states[-1], noise, None, rng,
                        )
                        blocks.append(tail)
            t_fill = t0
            for b in blocks:
                record_regret_block(ledger, h, stage_costs(b, fleet.cost))
                hist_x[h, t_fill : t_fill + b.length + 1] = b.states
                hist_u[h, t_fill : t_fill + b.length] = b.inputs
                t_fill += b.length

        # weights window [tau_{k-1}, ceil(3 tau_{k-1} / 2)), empty in epoch 1
        ls_hi = t0 + (t0 + 1) // 2
        param_errs = []
        for h in range(n_agents) if ls_hi > t0 else []:
            sys = fleet.systems[h]
            try:
                theta_h = ls_weights(
                    phi,
                    CovStats.from_trajectory(hist_x[h], hist_u[h], start=t0, stop=ls_hi),
                )
                ab_hat = vec_inv(phi @ theta_h, d_x)
                param_errs.append(
                    float(np.linalg.norm(ab_hat - np.hstack([sys.a, sys.b])))
                )
                if not aborted[h]:
                    gains[h] = lqr_gain(
                        StateSpace(ab_hat[:, :d_x], ab_hat[:, d_x:]), fleet.cost
                    )
            except (NonStabilizableError, ExcitationError, np.linalg.LinAlgError) as exc:
                if not aborted[h]:
                    log.info(
                        "epoch %d agent %d: synthesis fallback to k0 (%s)", k, h, exc
                    )
                    gains[h] = fleet.k0[h]

        rep_dist = subspace_distance(fleet.basis.phi, phi)
        dfw_lo = 0 if dfw_mode == "full_data" else ls_hi
        dfw_agents = [
            h
            for h in range(n_agents)
            if CovStats.from_trajectory(
                hist_x[h], hist_u[h], start=dfw_lo, stop=t1
            ).excitation_ok()
        ]
        if len(dfw_agents) < n_agents:
            log.info(
                "epoch %d: %d agents excluded from the representation update",
                k, n_agents - len(dfw_agents),
            )
        # split mode burns 2 fresh sub-blocks per iteration; cap the count
        n_eff = n_iters if dfw_mode == "full_data" else min(n_iters, (t1 - dfw_lo) // 2)
        if n_eff < n_iters:
            log.info("epoch %d: split budget caps dfw iterations at %d", k, n_eff)
        if dfw_agents and t1 - dfw_lo >= 2:
            slices = [
                (hist_x[h, dfw_lo : t1 + 1], hist_u[h, dfw_lo:t1]) for h in dfw_agents
            ]
            try:
                phi = dfw_run(phi, slices, n_eff, eta, mode=dfw_mode).final_phi
            except (ExcitationError, DataBudgetError) as exc:
                log.info("epoch %d: representation frozen (%s)", k, exc)
        else:
            log.info("epoch %d: representation frozen (no usable agents)", k)

        diagnostics.append(
            EpochDiagnostics(
                epoch=k,
                tau_k=t1,
                sigma_sq=sig_sq,
                rep_distance=rep_dist,
                mean_param_err=float(np.mean(param_errs)) if param_errs else float("nan"),
                aborts=sum(aborted),
            )
        )
    return ledger, diagnostics


def run_singletask_baseline(fleet, agent, es, xs, x_b, k_b, master_seed):
    """Single-agent loop with unstructured LS over whole epochs."""
    if not 0 <= agent < fleet.n_agents:
        raise SetupError(f"agent index {agent} out of range")
    if x_b <= 0 or k_b <= 0:
        raise SetupError("x_b and k_b must be positive")
    sys = fleet.systems[agent]
    d_x = fleet.d_x
    horizon = es.total_steps
    noise = GaussianNoise(fleet.cost.w_cov)
    k_star = lqr_gain(sys, fleet.cost)
    ledger = RegretLedger([avg_cost(sys, fleet.cost, k_star)])
    bounds = (x_b, k_b, horizon)

    gain = fleet.k0[agent]
    aborted = False
    x_now = np.zeros(d_x)

    for k in range(1, es.k_fin + 1):
        ep_len = es.length(k)
        sig_sq = sigma_schedule(xs, k, es.boundary(k), 1, fleet.basis.d_theta, fleet.d_u)
        rng = agent_rng(master_seed, agent, k)
        if aborted:
            traj, _ = rollout(sys, fleet.k0[agent], 0.0, ep_len, x_now, noise, None, rng)
            record_regret_block(ledger, 0, stage_costs(traj, fleet.cost))
            x_now = traj.states[-1]
            continue
        traj, ab = rollout(
            sys, gain, math.sqrt(sig_sq), ep_len, x_now, noise, bounds, rng
        )
        record_regret_block(ledger, 0, stage_costs(traj, fleet.cost))
        x_now = traj.states[-1]
        if ab.aborted:
            log.info("baseline agent %d aborted in epoch %d (%s)", agent, k, ab.reason)
            aborted = True
            gain = fleet.k0[agent]
            remaining = ep_len - traj.length
            if remaining > 0:
                tail, _ = rollout(
                    sys, fleet.k0[agent], 0.0, remaining, x_now, noise, None, rng
                )
                record_regret_block(ledger, 0, stage_costs(tail, fleet.cost))
                x_now = tail.states[-1]
            continue
        try:
            ab_hat = full_ls(CovStats.from_trajectory(traj))
            gain = lqr_gain(StateSpace(ab_hat[:, :d_x], ab_hat[:, d_x:]), fleet.cost)
        except (NonStabilizableError, np.linalg.LinAlgError) as exc:
            log.info("baseline epoch %d: synthesis fallback to k0 (%s)", k, exc)
            gain = fleet.k0[agent]
    return ledger


def write_diagnostics_csv(rows_by_cell, path):
    """Per-epoch diagnostics stream, one row per (H, seed, epoch)."""
    with open(path, "w", newline="\n") as f:
        f.write("H,seed,k,tau_k,sigma_k_sq,subspace_distance,mean_param_err,aborts\n")
        for (n_agents, seed), rows in rows_by_cell:
            for d in rows:
                f.write(
                    f"{n_agents},{seed},{d.epoch},{d.tau_k},{d.sigma_sq:.9g},"
                    f"{d.rep_distance:.9g},{d.mean_param_err:.9g},{d.aborts}\n"
                )
