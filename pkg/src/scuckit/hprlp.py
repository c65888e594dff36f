"""First-order LP solver: Halpern-anchored Peaceman-Rachford iterations.

Solves  min mu^T x  s.t.  A x (= | >=) theta,  lower <= x <= upper  using
only matrix-vector products.  Each iteration performs a box-projected
primal step, an orthant-projected dual step with step 1/(lambda*sigma), an
auxiliary update through (Pi_K - I), a Peaceman-Rachford reflection, and
Halpern averaging against the epoch anchor with weights 1/(k+2) and
(k+1)/(k+2).  Termination is by relative KKT residual and duality gap,
always evaluated on the original (unscaled, 64-bit) problem data.
"""

from __future__ import annotations

import enum
import logging
import time
from dataclasses import dataclass, field

import numpy as np

from .lp_kernel import (Precision, SparseMatrix, StandardFormLp, dot64, norm64,
                        power_method, project_box)

log = logging.getLogger(__name__)


class SolveStatus(enum.Enum):
    OPTIMAL = "optimal-tolerance"
    ITERATION_LIMIT = "iteration-limit"
    TIME_LIMIT = "time-limit"
    NUMERICAL_FAILURE = "numerical-failure"


@dataclass
class SolverConfig:
    tolerance: float = 1e-6
    max_iterations: int = 400_000
    time_limit: float | None = None
    precision: Precision = Precision.FP64
    sigma0: float | None = None          # default ||theta|| / ||mu|| on scaled data
    restart_beta: float = 0.2            # sufficient-decay restart factor
    restart_stall: int = 500             # iterations without epoch improvement
    sigma_damping: float = 0.5
    ruiz: bool = True
    ruiz_iters: int = 10
    pock_chambolle: bool = True
    normalize_rhs_objective: bool = True
    check_every: int = 16
    power_tol: float = 1e-4
    power_inflation: float = 1.01
    power_max_iter: int = 5000
    seed: int = 0
    log_residuals: bool = False          # one record per convergence check
    log_every_iteration: bool = False    # per-iteration residuals (rate tests)

    def __post_init__(self):
        if self.tolerance <= 0:
            raise ValueError("tolerance must be positive")
        if not 0.0 < self.restart_beta < 1.0:
            raise ValueError("restart_beta must lie in (0, 1)")


@dataclass
class KktResidual:
    """The three components of the optimality mapping plus objective data.

    primal:  || y - Pi_D(y - Ax + theta) ||   (row residual on equalities)
    box:     || x - Pi_K(x - z) ||
    dual:    || mu - A^T y - z ||
    Relative values divide by 1 + ||theta|| + ||mu||; the gap is relative to
    1 + |primal obj| + |dual obj|.  All components vanish exactly at a KKT
    point.
    """

    primal: float
    box: float
    dual: float
    rel_primal: float
    rel_box: float
    rel_dual: float
    primal_objective: float
    dual_objective: float
    gap: float
    rel_gap: float

    @property
    def combined(self) -> float:
        return float(np.sqrt(self.primal ** 2 + self.box ** 2 + self.dual ** 2))

    @property
    def max_rel(self) -> float:
        return max(self.rel_primal, self.rel_box, self.rel_dual, self.rel_gap)

    def converged(self, tolerance: float) -> bool:
        return self.max_rel <= tolerance


def _dual_objective(lp: StandardFormLp, y: np.ndarray, z: np.ndarray) -> float:
    """theta^T y plus the box support terms of the reduced costs.

    Contributions at infinite bounds with wrong-sign reduced cost are
    dropped (clamped to zero) so the value stays finite; with finite bounds
    and z = mu - A^T y this is an exact lower bound on the LP optimum.
    """
    val = dot64(lp.rhs, y)
    z64 = np.asarray(z, dtype=np.float64)
    zp = np.maximum(z64, 0.0)
    zm = np.minimum(z64, 0.0)
    lo = np.asarray(lp.lower, dtype=np.float64)
    up = np.asarray(lp.upper, dtype=np.float64)
    lo_terms = np.where(np.isfinite(lo), lo * zp, 0.0)
    up_terms = np.where(np.isfinite(up), up * zm, 0.0)
    return val + float(lo_terms.sum() + up_terms.sum()) + lp.offset


def kkt_residual(x: np.ndarray, y: np.ndarray, z: np.ndarray,
                 lp: StandardFormLp) -> KktResidual:
    """Evaluate the KKT residual mapping of a primal-dual-auxiliary triple."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    z = np.asarray(z, dtype=np.float64)
    ax = lp.matrix.matvec(x)
    primal_vec = y - lp.project_dual(y - ax + lp.rhs)
    box_vec = x - project_box(x - z, lp.lower, lp.upper)
    dual_vec = lp.cost - lp.matrix.matvec_t(y) - z

    denom = 1.0 + norm64(lp.rhs) + norm64(lp.cost)
    primal = norm64(primal_vec)
    box = norm64(box_vec)
    dual = norm64(dual_vec)
    pobj = lp.objective(x)
    dobj = _dual_objective(lp, y, z)
    gap = abs(pobj - dobj)
    return KktResidual(
        primal=primal, box=box, dual=dual,
        rel_primal=primal / denom, rel_box=box / denom, rel_dual=dual / denom,
        primal_objective=pobj, dual_objective=dobj, gap=gap,
        rel_gap=gap / (1.0 + abs(pobj) + abs(dobj)),
    )


@dataclass
class HprState:
    """Mutable iteration state: current and anchor triples, the bar triple
    of the latest iteration, penalty sigma, spectral bound lam, and the
    in-epoch counter k (Halpern weights use k)."""

    x: np.ndarray
    y: np.ndarray
    z: np.ndarray
    anchor_x: np.ndarray
    anchor_y: np.ndarray
    anchor_z: np.ndarray
    bar_x: np.ndarray | None = None
    bar_y: np.ndarray | None = None
    bar_z: np.ndarray | None = None
    sigma: float = 1.0
    lam: float = 1.0
    k: int = 0
    total_iterations: int = 0
    epoch: int = 0
    last_restart_residual: float | None = None

    @classmethod
    def from_point(cls, x, y, z, sigma=1.0, lam=1.0, dtype=np.float64) -> "HprState":
        x = np.array(x, dtype=dtype)
        y = np.array(y, dtype=dtype)
        z = np.array(z, dtype=dtype)
        return cls(x=x, y=y, z=z, anchor_x=x.copy(), anchor_y=y.copy(),
                   anchor_z=z.copy(), sigma=sigma, lam=lam)

    def restart(self) -> None:
        """Move the Halpern anchor (and current point) to the bar iterate."""
        self.anchor_x = self.bar_x.copy()
        self.anchor_y = self.bar_y.copy()
        self.anchor_z = self.bar_z.copy()
        self.x = self.bar_x.copy()
        self.y = self.bar_y.copy()
        self.z = self.bar_z.copy()
        self.k = 0
        self.epoch += 1


def hpr_iterate(state: HprState, lp: StandardFormLp) -> HprState:
    """One iteration: bar updates, Peaceman-Rachford reflection, Halpern
    averaging against the epoch anchor.  Mutates and returns `state`."""
    sigma = state.sigma
    inv_step = 1.0 / (state.lam * sigma)

    grad_point = state.x + sigma * (lp.matrix.matvec_t(state.y) - lp.cost)
    bar_x = project_box(grad_point, lp.lower, lp.upper)
    bar_z = (bar_x - grad_point) / sigma
    ax = lp.matrix.matvec(2.0 * bar_x - state.x)
    bar_y = lp.project_dual(state.y + inv_step * (lp.rhs - ax))

    hat_x = 2.0 * bar_x - state.x
    hat_y = 2.0 * bar_y - state.y
    hat_z = 2.0 * bar_z - state.z

    t = 1.0 / (state.k + 2.0)
    state.x = t * state.anchor_x + (1.0 - t) * hat_x
    state.y = t * state.anchor_y + (1.0 - t) * hat_y
    state.z = t * state.anchor_z + (1.0 - t) * hat_z
    state.bar_x, state.bar_y, state.bar_z = bar_x, bar_y, bar_z
    state.k += 1
    state.total_iterations += 1
    return state


class _ScaleMaps:
    """Composite diagonal scaling plus rhs/objective normalization."""

    def __init__(self, lp: StandardFormLp, config: SolverConfig):
        matrix = lp.matrix.astype(Precision.FP64)
        m, n = matrix.shape
        row_scale = np.ones(m)
        col_scale = np.ones(n)

        if config.ruiz:
            work = matrix
            for _ in range(config.ruiz_iters):
                r = work.row_norms(ord=np.inf)
                c = work.col_norms(ord=np.inf)
                r = 1.0 / np.sqrt(np.where(r > 0, r, 1.0))
                c = 1.0 / np.sqrt(np.where(c > 0, c, 1.0))
                row_scale *= r
                col_scale *= c
                work = work.scaled(r, c)
                if max(np.abs(1.0 - r).max(initial=0.0),
                       np.abs(1.0 - c).max(initial=0.0)) < 1e-6:
                    break
            matrix = work

        if config.pock_chambolle:
            r = matrix.row_norms(ord=1)
            c = matrix.col_norms(ord=1)
            r = 1.0 / np.sqrt(np.where(r > 0, r, 1.0))
            c = 1.0 / np.sqrt(np.where(c > 0, c, 1.0))
            row_scale *= r
            col_scale *= c
            matrix = matrix.scaled(r, c)

        rhs = lp.rhs * row_scale
        cost = lp.cost * col_scale  # note: mu_hat = C mu with C = diag(col_scale)
        lower = np.where(np.isfinite(lp.lower), lp.lower / col_scale, lp.lower)
        upper = np.where(np.isfinite(lp.upper), lp.upper / col_scale, lp.upper)

        if config.normalize_rhs_objective:
            finite_rhs = rhs[np.isfinite(rhs)]
            self.b_scale = 1.0 + float(np.linalg.norm(finite_rhs))
            self.c_scale = 1.0 + float(np.linalg.norm(cost))
        else:
            self.b_scale = 1.0
            self.c_scale = 1.0

        rhs = rhs / self.b_scale
        cost = cost / self.c_scale
        lower = np.where(np.isfinite(lower), lower / self.b_scale, lower)
        upper = np.where(np.isfinite(upper), upper / self.b_scale, upper)

        self.row_scale = row_scale
        self.col_scale = col_scale
        self.work = StandardFormLp(matrix=matrix, rhs=rhs, cost=cost,
                                   lower=lower, upper=upper, n_eq=lp.n_eq)

    def to_work(self, x, y, z) -> tuple:
        xw = x / (self.col_scale * self.b_scale)
        yw = y / (self.row_scale * self.c_scale)
        zw = z * self.col_scale / self.c_scale
        return xw, yw, zw

    def to_master(self, x, y, z) -> tuple:
        xm = np.asarray(x, dtype=np.float64) * self.col_scale * self.b_scale
        ym = np.asarray(y, dtype=np.float64) * self.row_scale * self.c_scale
        zm = np.asarray(z, dtype=np.float64) * self.c_scale / self.col_scale
        return xm, ym, zm


@dataclass
class SolveResult:
    x: np.ndarray
    y: np.ndarray
    z: np.ndarray
    status: SolveStatus
    objective: float
    kkt: KktResidual
    iterations: int
    restarts: int
    solve_time: float
    sigma_final: float
    lam: float
    residual_log: list = field(default_factory=list)
    # per-iteration (epoch, k_epoch, ||R(bar)||) triples when enabled
    rate_log: list = field(default_factory=list)
    precision_used: Precision = Precision.FP64
    fp64_fallback: bool = False

    @property
    def converged(self) -> bool:
        return self.status is SolveStatus.OPTIMAL


def write_iteration_log(path, result: SolveResult, solve_id: str = "solve") -> None:
    """Append the per-check residual trajectory as CSV."""
    import csv
    import os
    new = not os.path.exists(path)
    with open(path, "a", newline="") as fh:
        writer = csv.writer(fh)
        if new:
            writer.writerow(["solve_id", "iteration", "epoch", "rel_primal",
                             "rel_dual", "rel_box", "rel_gap", "sigma"])
        for rec in result.residual_log:
            writer.writerow([solve_id, rec["iteration"], rec["epoch"],
                             rec["rel_primal"], rec["rel_dual"], rec["rel_box"],
                             rec["rel_gap"], rec["sigma"]])


def solve(lp: StandardFormLp, config: SolverConfig | None = None,
          start: tuple | None = None) -> SolveResult:
    """Solve the LP, falling back to FP64 if an FP32 run loses finiteness."""
    config = config or SolverConfig()
    result = _solve_once(lp, config, start)
    if result.status is SolveStatus.NUMERICAL_FAILURE and config.precision is Precision.FP32:
        log.warning("FP32 solve failed numerically; retrying in FP64")
        cfg64 = SolverConfig(**{**config.__dict__, "precision": Precision.FP64})
        result = _solve_once(lp, cfg64, start)
        result.fp64_fallback = True
    return result


def _solve_once(lp: StandardFormLp, config: SolverConfig,
                start: tuple | None) -> SolveResult:
    t_start = time.perf_counter()
    maps = _ScaleMaps(lp, config)
    work = maps.work
    dtype = config.precision.dtype
    if config.precision is Precision.FP32:
        work = StandardFormLp(
            matrix=work.matrix.astype(Precision.FP32),
            rhs=work.rhs.astype(dtype), cost=work.cost.astype(dtype),
            lower=work.lower.astype(dtype), upper=work.upper.astype(dtype),
            n_eq=work.n_eq)

    lam = power_method(maps.work.matrix, tol=config.power_tol,
                       max_iter=config.power_max_iter, seed=config.seed,
                       inflation=config.power_inflation)
    rhs_norm = norm64(maps.work.rhs)
    cost_norm = norm64(maps.work.cost)
    if config.sigma0 is not None:
        sigma = config.sigma0
    elif rhs_norm > 1e-12 and cost_norm > 1e-12:
        sigma = rhs_norm / cost_norm
    else:
        sigma = 1.0

    if start is None:
        x0 = np.zeros(work.n_cols)
        y0 = np.zeros(work.n_rows)
        z0 = np.zeros(work.n_cols)
    else:
        x0, y0, z0 = maps.to_work(*[np.asarray(v, dtype=np.float64) for v in start])
    x0 = project_box(x0, maps.work.lower, maps.work.upper)

    state = HprState.from_point(x0, y0, z0, sigma=sigma, lam=lam, dtype=dtype)

    def master_residual(xw, yw, zw):
        xm, ym, zm = maps.to_master(xw, yw, zw)
        return kkt_residual(xm, ym, zm, lp), (xm, ym, zm)

    res0, triple0 = master_residual(state.x, state.y, state.z)
    best_res = res0
    best_triple = triple0
    state.last_restart_residual = res0.max_rel
    epoch_min = res0.max_rel
    last_improvement = 0
    norm_a = float(np.sqrt(lam))

    residual_log: list = []
    rate_log: list = []
    restarts = 0
    status = SolveStatus.ITERATION_LIMIT
    check_every = 1 if config.log_every_iteration else max(1, config.check_every)

    if res0.converged(config.tolerance):
        status = SolveStatus.OPTIMAL
        return SolveResult(x=triple0[0], y=triple0[1], z=triple0[2], status=status,
                           objective=res0.primal_objective, kkt=res0, iterations=0,
                           restarts=0, solve_time=time.perf_counter() - t_start,
                           sigma_final=sigma, lam=lam, residual_log=residual_log,
                           rate_log=rate_log, precision_used=config.precision)

    while True:
        if state.total_iterations >= config.max_iterations:
            status = SolveStatus.ITERATION_LIMIT
            break
        if config.time_limit is not None and time.perf_counter() - t_start > config.time_limit:
            status = SolveStatus.TIME_LIMIT
            break

        hpr_iterate(state, work)

        if state.total_iterations % check_every != 0:
            continue

        if not (np.isfinite(state.bar_x).all() and np.isfinite(state.bar_y).all()
                and np.isfinite(state.bar_z).all()):
            status = SolveStatus.NUMERICAL_FAILURE
            break

        res, triple = master_residual(state.bar_x, state.bar_y, state.bar_z)
        if config.log_every_iteration:
            rate_log.append((state.epoch, state.k, res.combined))
        if config.log_residuals or config.log_every_iteration:
            residual_log.append({
                "iteration": state.total_iterations, "epoch": state.epoch,
                "rel_primal": res.rel_primal, "rel_dual": res.rel_dual,
                "rel_box": res.rel_box, "rel_gap": res.rel_gap,
                "sigma": state.sigma,
            })

        if res.max_rel < best_res.max_rel:
            best_res = res
            best_triple = triple
        if res.max_rel < epoch_min * (1.0 - 1e-12):
            epoch_min = res.max_rel
            last_improvement = state.total_iterations

        if res.converged(config.tolerance):
            best_res, best_triple = res, triple
            status = SolveStatus.OPTIMAL
            break

        sufficient = res.max_rel <= config.restart_beta * state.last_restart_residual
        stalled = state.total_iterations - last_improvement >= config.restart_stall
        if sufficient or stalled:
            dx = norm64(state.bar_x - state.anchor_x)
            dy = norm64(state.bar_y - state.anchor_y)
            if dx > 1e-14 and dy > 1e-14 and norm_a > 0:
                ratio = dx / (norm_a * dy * state.sigma)
                state.sigma *= float(np.clip(ratio ** config.sigma_damping, 0.25, 4.0))
            state.restart()
            restarts += 1
            state.last_restart_residual = res.max_rel
            epoch_min = res.max_rel
            last_improvement = state.total_iterations

    xm, ym, zm = best_triple
    return SolveResult(x=xm, y=ym, z=zm, status=status,
                       objective=lp.objective(xm), kkt=best_res,
                       iterations=state.total_iterations, restarts=restarts,
                       solve_time=time.perf_counter() - t_start,
                       sigma_final=state.sigma, lam=lam,
                       residual_log=residual_log, rate_log=rate_log,
                       precision_used=config.precision)
