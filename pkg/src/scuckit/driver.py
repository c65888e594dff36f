"""End-to-end orchestration: transmission-filtered two-stage solve.

Stage 1 solves to a 1% gap with 2 fixing rounds; once no security
violations remain, stage 2 re-solves to 0.1% with 4 rounds, inheriting the
monitored set and the stage-1 solution as a warm incumbent.  Within a
stage, every pass rebuilds the model on the current monitored set, runs
the successive-fixing loop, finishes with branch and bound, and screens
all (line, period, contingency) flows of the candidate schedule; violated
triples join the monitored set and the pass repeats.
"""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field

import numpy as np

from . import lp_backends
from .fixing import successive_fixing
from .formulation import (MilpModel, ScalingInfo, VariableMap,
                          apply_instance_scaling, build_model, unscale_solution)
from .hprlp import SolverConfig
from .instance import BASE_CASE, PtdfTable, ScucInstance, compute_ptdf
from .lp_kernel import Precision
from .milp_bb import (GAP_REACHED, INFEASIBLE, BbConfig, Incumbent, MilpResult,
                      solve_milp)
from .presolve import InfeasibleModelError

log = logging.getLogger(__name__)

EXIT_SOLVED = 0
EXIT_LIMIT = 2
EXIT_INFEASIBLE = 3
EXIT_INPUT_ERROR = 4


@dataclass
class DriverConfig:
    tau: float = 0.1
    tau2: float = 0.1              # stage-2 confidence threshold
    rounds1: int = 2
    rounds2: int = 4
    gap1: float = 0.01
    gap2: float = 0.001
    precision: Precision = Precision.FP64
    instance_scaling: bool = True
    fixing: bool = True
    lp_backend: str = lp_backends.HPR
    time_limit: float | None = None
    seed: int = 0
    fixing_lp_tolerance: float = 1e-4
    node_lp_tolerance: float = 1e-6
    violation_tol: float = 1e-4    # relative to the line limit
    max_filter_passes: int = 25
    log_solver_residuals: bool = False
    iter_log_path: str | None = None  # CSV of fixing-loop LP residual trajectories

    def solver_config(self, tolerance: float) -> SolverConfig:
        return SolverConfig(tolerance=tolerance, precision=self.precision,
                            seed=self.seed,
                            ruiz=not self.instance_scaling,
                            log_residuals=self.log_solver_residuals)


@dataclass
class Violation:
    line: str
    period: int
    contingency: str
    flow: float
    limit: float
    excess: float
    already_monitored: bool = False

    @property
    def triple(self) -> tuple:
        return (self.line, self.period, self.contingency)


@dataclass
class FilterState:
    monitored: set = field(default_factory=set)
    violations: list = field(default_factory=list)
    stage: int = 1
    passes: int = 0


@dataclass
class PassReport:
    stage: int
    index: int
    monitored_rows: int
    fixing_rounds: list
    free_binaries: int
    milp: MilpResult
    violations_found: int


@dataclass
class RunReport:
    objective: float
    status: str
    exit_code: int
    passes: list
    monitored: list
    lp_time: float
    other_time: float
    total_time: float
    fixing_summary: dict
    nodes_total: int
    solution: np.ndarray | None = None
    commitment: np.ndarray | None = None
    reference_objective: float | None = None

    @property
    def rel_gap_percent(self) -> float | None:
        if self.reference_objective is None:
            return None
        return rel_gap(self.objective, self.reference_objective)

    def to_json_dict(self) -> dict:
        doc = {
            "objective": self.objective,
            "status": self.status,
            "exit_code": self.exit_code,
            "timings": {"lp_relaxations": self.lp_time, "other": self.other_time,
                        "total": self.total_time},
            "monitored": [list(t) for t in sorted(self.monitored)],
            "nodes_total": self.nodes_total,
            "fixing": self.fixing_summary,
            "passes": [{
                "stage": p.stage, "index": p.index,
                "monitored_rows": p.monitored_rows,
                "free_binaries": p.free_binaries,
                "milp_status": p.milp.status, "milp_gap": p.milp.gap,
                "milp_nodes": p.milp.nodes, "violations_found": p.violations_found,
            } for p in self.passes],
        }
        if self.commitment is not None:
            doc["commitment"] = self.commitment.astype(int).tolist()
        if self.reference_objective is not None:
            doc["reference_objective"] = self.reference_objective
            doc["rel_gap_percent"] = self.rel_gap_percent
        return doc


def sgm10(times) -> float:
    """Shifted (by 10 seconds) geometric mean of runtimes."""
    times = list(times)
    if not times:
        raise ValueError("sgm10 requires at least one time")
    if any(t < 0 for t in times):
        raise ValueError("times must be nonnegative")
    return math.exp(sum(math.log(t + 10.0) for t in times) / len(times)) - 10.0


def rel_gap(objective: float, reference: float) -> float:
    """Percentage gap of an objective against a reference value."""
    return (objective - reference) / reference * 100.0


def screen_violations(point: np.ndarray, instance: ScucInstance, ptdf: PtdfTable,
                      monitored=(), tol: float = 1e-4) -> list:
    """Flow check of a primal vector over every (line, period, contingency).

    Net injections are rebuilt per bus and period from the point; a triple
    is reported when |flow| exceeds the limit by more than tol * limit.
    Results are sorted by excess, largest first.
    """
    vmap = VariableMap(instance)
    point = np.asarray(point, dtype=np.float64)
    if point.shape[0] != vmap.n_cols:
        raise ValueError("point length does not match the instance's model")
    monitored = set(monitored)
    demand = instance.demand_matrix()

    bus_idx = instance.network.bus_index()
    power = point[vmap.pprime] + np.array([[g.p_min] for g in instance.generators]) * point[vmap.u]
    injections = -(demand - point[vmap.penalty])
    for gi, gen in enumerate(instance.generators):
        injections[bus_idx[gen.bus], :] += power[gi, :]

    out = []
    for key in instance.contingency_keys():
        table = ptdf.table(key)
        flows = table @ injections  # (n_lines, n_periods)
        for li, line in enumerate(instance.lines):
            limit = line.limit_for(key)
            for t in range(instance.n_periods):
                excess = abs(flows[li, t]) - limit
                if excess > tol * limit:
                    out.append(Violation(
                        line=line.lid, period=t, contingency=key,
                        flow=float(flows[li, t]), limit=limit, excess=float(excess),
                        already_monitored=(line.lid, t, key) in monitored))
    out.sort(key=lambda v: (-v.excess, v.line, v.period, v.contingency))
    return out


def run(instance: ScucInstance, config: DriverConfig | None = None,
        reference_objective: float | None = None) -> RunReport:
    """Solve an instance end to end and report the unscaled solution."""
    config = config or DriverConfig()
    t_start = time.perf_counter()
    deadline = None if config.time_limit is None else t_start + config.time_limit

    ptdf = instance.ptdf or compute_ptdf(instance.network)
    if config.instance_scaling:
        work_instance, sinfo = apply_instance_scaling(instance)
    else:
        work_instance, sinfo = instance, ScalingInfo()

    state = FilterState()
    passes: list = []
    lp_time = 0.0
    nodes_total = 0
    best_point = None
    best_objective = float("nan")
    status = "solved"
    exit_code = EXIT_SOLVED
    prev_incumbent: Incumbent | None = None
    vmap: VariableMap | None = None

    def time_left() -> float | None:
        if deadline is None:
            return None
        return deadline - time.perf_counter()

    try:
        for stage, (gap, rounds, tau) in enumerate(
                [(config.gap1, config.rounds1, config.tau),
                 (config.gap2, config.rounds2, config.tau2)], start=1):
            state.stage = stage
            while True:
                left = time_left()
                if left is not None and left <= 0:
                    status = "time-limit"
                    exit_code = EXIT_LIMIT
                    raise _StopRun()
                state.passes += 1
                if state.passes > config.max_filter_passes:
                    status = "filter-pass-limit"
                    exit_code = EXIT_LIMIT
                    raise _StopRun()

                model, vmap = build_model(work_instance, monitored=state.monitored,
                                          ptdf=ptdf)
                fixing_stats: list = []
                if config.fixing:
                    fix_cfg = config.solver_config(config.fixing_lp_tolerance)
                    current_pass = state.passes

                    def fixing_solver(lp, _cfg=fix_cfg, _pass=current_pass):
                        res = lp_backends.solve_lp(lp, backend=config.lp_backend,
                                                   config=_cfg)
                        if config.iter_log_path and res.residual_log:
                            _append_iter_log(config.iter_log_path,
                                             f"pass{_pass}", res.residual_log)
                        return res

                    model = successive_fixing(model, rounds, fixing_solver, tau,
                                              stats_out=fixing_stats)
                    lp_time += sum(getattr(s, "lp_seconds", 0.0) for s in fixing_stats)

                bb_cfg = BbConfig(lp_backend=config.lp_backend,
                                  lp_config=config.solver_config(config.node_lp_tolerance))
                warm = prev_incumbent
                milp = solve_milp(model, gap=gap, time_limit=time_left(),
                                  config=bb_cfg, initial_incumbent=warm)
                lp_time += milp.lp_time
                nodes_total += milp.nodes
                if milp.incumbent is None:
                    status = "infeasible" if milp.status == INFEASIBLE else "no-incumbent"
                    exit_code = EXIT_INFEASIBLE if milp.status == INFEASIBLE else EXIT_LIMIT
                    raise _StopRun()

                point_scaled = milp.incumbent.x
                point = unscale_solution(point_scaled, sinfo, vmap)
                best_point = point
                best_objective = milp.incumbent.objective * (sinfo.cost_scale if sinfo.applied else 1.0)
                prev_incumbent = Incumbent(x=point_scaled.copy(),
                                           objective=milp.incumbent.objective,
                                           source="warm-start")

                viols = screen_violations(point, instance, ptdf,
                                          monitored=state.monitored,
                                          tol=config.violation_tol)
                passes.append(PassReport(stage=stage, index=state.passes,
                                         monitored_rows=len(state.monitored),
                                         fixing_rounds=fixing_stats,
                                         free_binaries=len(model.free_binary_columns()),
                                         milp=milp, violations_found=len(viols)))
                if milp.status != GAP_REACHED and status == "solved":
                    status = "milp-limit"
                    exit_code = EXIT_LIMIT
                state.violations = viols
                if not viols:
                    break
                for v in viols:
                    state.monitored.add(v.triple)
                log.info("stage %d pass %d: %d violations, monitored now %d",
                         stage, state.passes, len(viols), len(state.monitored))
    except _StopRun:
        pass
    except InfeasibleModelError as exc:
        log.error("aborting: %s", exc)
        status = "infeasible"
        exit_code = EXIT_INFEASIBLE

    total = time.perf_counter() - t_start
    fixing_summary = _fixing_summary(passes)
    commitment = None
    if best_point is not None and vmap is not None:
        commitment = np.rint(best_point[vmap.u])
    return RunReport(objective=best_objective, status=status, exit_code=exit_code,
                     passes=passes, monitored=sorted(state.monitored),
                     lp_time=lp_time, other_time=max(total - lp_time, 0.0),
                     total_time=total, fixing_summary=fixing_summary,
                     nodes_total=nodes_total, solution=best_point,
                     commitment=commitment,
                     reference_objective=reference_objective)


class _StopRun(Exception):
    pass


def _append_iter_log(path, solve_id: str, records) -> None:
    import csv
    import os
    new = not os.path.exists(path)
    with open(path, "a", newline="") as fh:
        writer = csv.writer(fh)
        if new:
            writer.writerow(["solve_id", "iteration", "epoch", "rel_primal",
                             "rel_dual", "rel_box", "rel_gap", "sigma"])
        for rec in records:
            writer.writerow([solve_id, rec["iteration"], rec["epoch"],
                             rec["rel_primal"], rec["rel_dual"], rec["rel_box"],
                             rec["rel_gap"], rec["sigma"]])


def _fixing_summary(passes) -> dict:
    rounds = []
    for p in passes:
        for s in p.fixing_rounds:
            rounds.append({
                "pass": p.index, "round": s.round_index,
                "rounded_integral": dict(s.rounded_integral),
                "fixed_triples": s.fixed_triples,
                "break_confidence": s.break_confidence,
                "break_consistency": s.break_consistency,
                "free_binaries_after": s.free_binaries_after,
            })
    return {"rounds": rounds,
            "total_fixed_triples": sum(r["fixed_triples"] for r in rounds)}
