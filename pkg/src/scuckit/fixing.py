"""Confidence rounding and the logic-driven successive variable fixing loop.

A relaxed binary rounds to 1 above 1 - tau, to 0 below tau (boundaries
inclusive), and to -1 (undecided) in between.  Per generator, periods are
scanned in order; the commitment triple of a period is fixed only when all
four neighbouring rounded values are decided and consistent with the
status-transition logic (u_t - u_{t-1} = v_t - w_t, v_t + w_t <= 1); the
scan stops at the first undecided or inconsistent period, so fixings form
a prefix of the horizon.  Period 1 is checked against the instance's
initial status.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

import numpy as np

from .formulation import MilpModel, VariableMap
from .presolve import InfeasibleModelError, lp_presolve, milp_presolve, uncrush

log = logging.getLogger(__name__)


@dataclass
class FixingConfig:
    tau: float = 0.1
    rounds: int = 2

    def __post_init__(self):
        if not 0.0 <= self.tau < 0.5:
            raise ValueError("tau must lie in [0, 0.5)")
        if self.rounds < 1:
            raise ValueError("at least one fixing round is required")


@dataclass
class RelaxedBinaries:
    """Relaxed commitment values per (generator, period), clamped to [0, 1]."""

    u: np.ndarray
    v: np.ndarray
    w: np.ndarray

    @classmethod
    def from_solution(cls, x: np.ndarray, vmap: VariableMap) -> "RelaxedBinaries":
        x = np.asarray(x, dtype=np.float64)
        return cls(u=np.clip(x[vmap.u], 0.0, 1.0),
                   v=np.clip(x[vmap.v], 0.0, 1.0),
                   w=np.clip(x[vmap.w], 0.0, 1.0))


def confidence_round(s: float, tau: float) -> int:
    """Round a relaxed value in [0, 1]: 1 if s >= 1 - tau, 0 if s <= tau,
    else -1 (insufficient confidence).  Boundaries are inclusive."""
    if s >= 1.0 - tau:
        return 1
    if 0.0 <= s <= tau:
        return 0
    return -1


@dataclass
class FixingRoundStats:
    round_index: int
    rounded_integral: dict = field(default_factory=lambda: {"u": 0, "v": 0, "w": 0})
    fixed_triples: int = 0
    break_confidence: int = 0      # generators stopped by an undecided value
    break_consistency: int = 0     # generators stopped by a logic mismatch
    free_binaries_after: int = 0
    lp_status: str = ""
    lp_objective: float = float("nan")
    lp_seconds: float = 0.0


def plan_fixes(relaxed: RelaxedBinaries, initial_on: np.ndarray, tau: float,
               stats: FixingRoundStats | None = None) -> list:
    """The per-generator consistency scan; returns (g, t, u, v, w) fixings.

    Pure planning step so it can be compared against an independent
    pseudocode transcription in tests; apply with `fixing_strategy`.
    """
    n_g, n_t = relaxed.u.shape
    vec_round = np.vectorize(confidence_round, otypes=[np.int64])
    r_u = vec_round(relaxed.u, tau)
    r_v = vec_round(relaxed.v, tau)
    r_w = vec_round(relaxed.w, tau)
    if stats is not None:
        stats.rounded_integral["u"] += int(np.count_nonzero(r_u >= 0))
        stats.rounded_integral["v"] += int(np.count_nonzero(r_v >= 0))
        stats.rounded_integral["w"] += int(np.count_nonzero(r_w >= 0))

    fixes = []
    for g in range(n_g):
        prev_u = int(initial_on[g])
        for t in range(n_t):
            if -1 in (r_u[g, t], prev_u, r_v[g, t], r_w[g, t]):
                if stats is not None:
                    stats.break_confidence += 1
                break
            if (r_u[g, t] - prev_u == r_v[g, t] - r_w[g, t]
                    and r_v[g, t] + r_w[g, t] <= 1):
                fixes.append((g, t, int(r_u[g, t]), int(r_v[g, t]), int(r_w[g, t])))
            else:
                if stats is not None:
                    stats.break_consistency += 1
                break
            prev_u = int(r_u[g, t])
    if stats is not None:
        stats.fixed_triples += len(fixes)
    return fixes


def fixing_strategy(relaxed: RelaxedBinaries, model: MilpModel, tau: float,
                    provenance: str = "fixing",
                    stats: FixingRoundStats | None = None) -> MilpModel:
    """Fix consistent confident commitment triples in `model` (mutating it)."""
    vmap = model.vmap
    if vmap is None:
        raise ValueError("fixing requires a model with an attached variable map")
    if relaxed.u.shape != (vmap.n_gens, vmap.n_periods):
        raise ValueError("relaxed values do not match the model's variable map")
    for g, t, u_val, v_val, w_val in plan_fixes(relaxed, vmap.initial_on, tau, stats):
        model.fix_column(int(vmap.u[g, t]), float(u_val), provenance)
        model.fix_column(int(vmap.v[g, t]), float(v_val), provenance)
        model.fix_column(int(vmap.w[g, t]), float(w_val), provenance)
    return model


def extract_relaxed_binaries(x_reduced: np.ndarray, milp_log, lp_log,
                             vmap: VariableMap) -> RelaxedBinaries:
    """Lift a presolved-LP solution to the original column space and pull
    out the commitment values (columns eliminated by presolve contribute
    their fixed values, which round to themselves)."""
    x_milp_space = uncrush(x_reduced, lp_log) if lp_log is not None else x_reduced
    x_full = uncrush(x_milp_space, milp_log)
    return RelaxedBinaries.from_solution(x_full, vmap)


def successive_fixing(model: MilpModel, rounds: int, lp_solver, tau: float,
                      stats_out: list | None = None) -> MilpModel:
    """Run `rounds` of presolve / relax / LP-solve / fix on `model`.

    `lp_solver(lp)` must return an object with `.x` (primal solution in the
    LP's column space), `.status` and `.converged`.  Fixings accumulate on
    the running model; presolved copies are discarded each round.  An LP
    failure skips the round's fixing; presolve infeasibility aborts.
    """
    for round_idx in range(1, rounds + 1):
        stats = FixingRoundStats(round_index=round_idx)
        reduced, milp_log = milp_presolve(model)
        if not milp_log.feasible:
            raise InfeasibleModelError(
                f"infeasible after fixing (round {round_idx}): {milp_log.infeasible}")
        lp = reduced.relax()
        lp, lp_log = lp_presolve(lp)
        if not lp_log.feasible:
            raise InfeasibleModelError(
                f"infeasible after fixing (round {round_idx}): {lp_log.infeasible}")

        t0 = time.perf_counter()
        result = lp_solver(lp)
        stats.lp_seconds = time.perf_counter() - t0
        stats.lp_status = str(getattr(result, "status", ""))
        if not getattr(result, "converged", True):
            log.warning("round %d: LP solve did not converge (%s); skipping fixing",
                        round_idx, stats.lp_status)
            if stats_out is not None:
                stats.free_binaries_after = len(model.free_binary_columns())
                stats_out.append(stats)
            continue
        stats.lp_objective = float(getattr(result, "objective", float("nan")))

        relaxed = extract_relaxed_binaries(result.x, milp_log, lp_log, model.vmap)
        fixing_strategy(relaxed, model, tau, provenance=f"round {round_idx}", stats=stats)
        free_after = len(model.free_binary_columns())
        stats.free_binaries_after = free_after
        log.info("fixing round %d: %d triples fixed, %d free binaries remain",
                 round_idx, stats.fixed_triples, free_after)
        if stats_out is not None:
            stats_out.append(stats)
        if free_after == 0:
            break
    return model
