"""Branch-and-bound over the remaining free binaries of a reduced model.

Node relaxations are solved with the first-order LP solver (warm-started
from the parent); node lower bounds come from the Lagrangian box bound of
the node's dual vector, which is valid for any dual-feasible y when all
variable bounds are finite, minus an extra residual-based safety margin.
Incumbents are produced by fixing binaries and re-solving the continuous
restriction with the simplex backend, which keeps them feasible to tight
absolute tolerances.  Search is best-first with depth-first plunging until
the first incumbent exists; runs are deterministic.
"""

from __future__ import annotations

import heapq
import logging
import time
from dataclasses import dataclass, field

import numpy as np

from . import lp_backends
from .formulation import MilpModel
from .hprlp import SolverConfig, kkt_residual
from .lp_kernel import StandardFormLp, dot64
from .presolve import lp_presolve, milp_presolve, uncrush

log = logging.getLogger(__name__)

GAP_REACHED = "gap-reached"
LIMIT_HIT = "limit-hit"
INFEASIBLE = "infeasible"

_FEAS_TOL = 1e-6


@dataclass
class BbConfig:
    lp_backend: str = lp_backends.HPR
    lp_config: SolverConfig | None = None   # node LP settings (tolerance 1e-6)
    kappa: float = 10.0                     # residual slack multiplier on bounds
    integrality_tol: float = 1e-5
    node_limit: int | None = None

    def node_lp_config(self) -> SolverConfig:
        return self.lp_config or SolverConfig(tolerance=1e-6)


@dataclass(order=True)
class BbNode:
    sort_bound: float
    seq: int
    fixes: tuple = field(compare=False)        # ((column, value), ...)
    bound: float = field(compare=False, default=-np.inf)
    depth: int = field(compare=False, default=0)
    warm: tuple | None = field(compare=False, default=None)  # full-space (x, y, z)


@dataclass
class Incumbent:
    x: np.ndarray
    objective: float
    source: str  # "rounding-repair" | "leaf" | "warm-start"


@dataclass
class MilpResult:
    incumbent: Incumbent | None
    bound: float
    status: str
    gap: float
    nodes: int
    lp_time: float
    lp_solves: int
    node_log: list = field(default_factory=list)

    @property
    def objective(self) -> float:
        return self.incumbent.objective if self.incumbent else float("nan")


def lagrangian_bound(lp: StandardFormLp, y: np.ndarray) -> float:
    """Lower bound on the LP optimum from a dual vector: theta^T y plus the
    box support of the exact reduced costs z = mu - A^T y.  Requires finite
    variable bounds."""
    yy = lp.project_dual(np.asarray(y, dtype=np.float64))
    z = lp.cost - lp.matrix.matvec_t(yy)
    val = dot64(lp.rhs, yy) + lp.offset
    val += float(np.sum(lp.lower * np.maximum(z, 0.0)))
    val += float(np.sum(lp.upper * np.minimum(z, 0.0)))
    return val


def _feasible_point(model: MilpModel, x: np.ndarray, tol: float = _FEAS_TOL) -> bool:
    if np.max(np.abs(x[model.integrality] - np.rint(x[model.integrality])),
              initial=0.0) > tol:
        return False
    return model.lp.max_violation(x) <= tol


class _Search:
    def __init__(self, model: MilpModel, gap: float, time_limit: float | None,
                 config: BbConfig):
        if not (np.isfinite(model.lp.lower).all() and np.isfinite(model.lp.upper).all()):
            raise ValueError("branch and bound requires finite variable bounds")
        self.base = model
        self.gap = gap
        self.deadline = None if time_limit is None else time.perf_counter() + time_limit
        self.config = config
        self.lp_cfg = config.node_lp_config()
        self.binary_cols = np.flatnonzero(model.integrality)
        self.u_cols = set(model.vmap.u.ravel().tolist()) if model.vmap else set()
        self.v_cols = set(model.vmap.v.ravel().tolist()) if model.vmap else set()
        self.incumbent: Incumbent | None = None
        self.prune_floor = np.inf   # min bound over resolved regions
        self.heap: list = []
        self.seq = 0
        self.nodes = 0
        self.lp_time = 0.0
        self.lp_solves = 0
        self.node_log: list = []

    # ---- helpers ---------------------------------------------------------

    def _time_left(self) -> float | None:
        if self.deadline is None:
            return None
        return self.deadline - time.perf_counter()

    def _out_of_time(self) -> bool:
        left = self._time_left()
        return left is not None and left <= 0.0

    def _cutoff(self) -> float:
        if self.incumbent is None:
            return np.inf
        return self.incumbent.objective - self.gap * abs(self.incumbent.objective)

    def _update_incumbent(self, x: np.ndarray, objective: float, source: str) -> bool:
        if self.incumbent is None or objective < self.incumbent.objective - 1e-12:
            self.incumbent = Incumbent(x=x, objective=objective, source=source)
            log.info("incumbent %.8g (%s)", objective, source)
            return True
        return False

    def _polish(self, binary_values: np.ndarray, source: str) -> bool:
        """Fix every binary to the given 0/1 values and solve the continuous
        restriction exactly; adopt as incumbent if feasible."""
        restricted = self.base.lp.copy()
        restricted.lower[self.binary_cols] = binary_values
        restricted.upper[self.binary_cols] = binary_values
        t0 = time.perf_counter()
        sol = lp_backends.solve_lp_simplex(restricted)
        self.lp_time += time.perf_counter() - t0
        self.lp_solves += 1
        if not sol.converged:
            return False
        x = sol.x.copy()
        x[self.binary_cols] = binary_values
        if not _feasible_point(self.base, x):
            return False
        return self._update_incumbent(x, self.base.lp.objective(x), source)

    def _rounding_incumbent(self, x_full: np.ndarray) -> None:
        """Round-all-binaries (ties to 0) then LP-repair; falls back to
        logic-consistent startup/shutdown values derived from rounded u."""
        vals = (x_full[self.binary_cols] > 0.5).astype(np.float64)
        if self._polish(vals, "rounding-repair"):
            return
        vmap = self.base.vmap
        if vmap is None:
            return
        u = (x_full[vmap.u] > 0.5).astype(np.float64)
        prev = np.concatenate([vmap.initial_on.reshape(-1, 1).astype(np.float64),
                               u[:, :-1]], axis=1)
        v = np.maximum(u - prev, 0.0)
        w = np.maximum(prev - u, 0.0)
        vals = np.zeros(self.base.n_cols)
        vals[vmap.u] = u
        vals[vmap.v] = v
        vals[vmap.w] = w
        self._polish(vals[self.binary_cols], "rounding-repair")

    def _warm_restrict(self, warm, mlog, llog):
        if warm is None:
            return None
        x_full, y_full, z_full = warm
        x = x_full[mlog.kept_cols]
        z = z_full[mlog.kept_cols]
        y = y_full[mlog.kept_rows][llog.kept_rows]
        return (x, y, z)

    def _warm_full(self, x_red, y_red, z_red, mlog, llog):
        x_full = uncrush(uncrush(x_red, llog), mlog)
        y_mid = np.zeros(mlog.kept_rows.shape[0])
        y_mid[llog.kept_rows] = y_red
        y_full = np.zeros(self.base.n_rows)
        y_full[mlog.kept_rows] = y_mid
        z_full = self.base.lp.cost - self.base.lp.matrix.matvec_t(y_full)
        return x_full, y_full, z_full

    # ---- node evaluation -------------------------------------------------

    def _evaluate(self, node: BbNode):
        """Returns (bound, x_full, warm_triple, feasible) for the node."""
        self.nodes += 1
        nodem = self.base.copy()
        for col, val in node.fixes:
            nodem.lp.lower[col] = val
            nodem.lp.upper[col] = val

        reduced, mlog = milp_presolve(nodem)
        if not mlog.feasible:
            self.node_log.append({"node": self.nodes, "depth": node.depth,
                                  "bound": None, "incumbent": self._inc_obj(),
                                  "action": "pruned-infeasible"})
            return None
        lp1 = reduced.relax()
        lp2, llog = lp_presolve(lp1)
        if not llog.feasible:
            self.node_log.append({"node": self.nodes, "depth": node.depth,
                                  "bound": None, "incumbent": self._inc_obj(),
                                  "action": "pruned-infeasible"})
            return None

        if lp2.n_rows == 0:
            # presolve resolved all constraints; the box argmin is optimal
            x_red = np.where(lp2.cost > 0, lp2.lower, lp2.upper)
            x_full = uncrush(uncrush(x_red, llog), mlog)
            bound = lp2.objective(x_red)
            return bound, x_full, None, nodem

        warm = self._warm_restrict(node.warm, mlog, llog)
        cfg = self.lp_cfg
        left = self._time_left()
        if left is not None:
            cfg = SolverConfig(**{**cfg.__dict__,
                                  "time_limit": max(0.1, left) if cfg.time_limit is None
                                  else min(cfg.time_limit, max(0.1, left))})
        t0 = time.perf_counter()
        sol = lp_backends.solve_lp(lp2, backend=self.config.lp_backend,
                                   config=cfg, start=warm)
        self.lp_time += time.perf_counter() - t0
        self.lp_solves += 1
        if not np.isfinite(sol.x).all():
            return node.bound, None, None, nodem

        res = kkt_residual(sol.x, sol.y, sol.z, lp2)
        bound = lagrangian_bound(lp2, sol.y) - self.config.kappa * res.combined
        bound = max(bound, node.bound)  # bounds are monotone down the tree
        x_full = uncrush(uncrush(sol.x, llog), mlog)
        warm_full = self._warm_full(sol.x, sol.y, sol.z, mlog, llog)
        return bound, x_full, warm_full, nodem

    def _inc_obj(self):
        return self.incumbent.objective if self.incumbent else None

    def _branch_column(self, nodem: MilpModel, x_full: np.ndarray) -> int | None:
        free = nodem.free_binary_columns()
        if free.size == 0:
            return None
        vals = x_full[free]
        frac = np.abs(vals - np.rint(vals))
        classes = np.array([0 if c in self.u_cols else (1 if c in self.v_cols else 2)
                            for c in free])
        best = None
        for cls in (0, 1, 2):
            mask = (classes == cls) & (frac > self.config.integrality_tol)
            if mask.any():
                cand = free[mask]
                cand_frac = frac[mask]
                order = np.lexsort((cand, -cand_frac))  # max fraction, then lowest col
                best = int(cand[order[0]])
                break
        return best

    # ---- main loop -------------------------------------------------------

    def run(self, initial_incumbent: Incumbent | None) -> MilpResult:
        if initial_incumbent is not None and _feasible_point(self.base, initial_incumbent.x):
            self._update_incumbent(initial_incumbent.x,
                                   self.base.lp.objective(initial_incumbent.x),
                                   "warm-start")

        root = BbNode(sort_bound=-np.inf, seq=self.seq, fixes=(), bound=-np.inf, depth=0)
        self.seq += 1
        heapq.heappush(self.heap, root)
        status = GAP_REACHED
        first_node = True

        while self.heap:
            if self._out_of_time():
                status = LIMIT_HIT
                break
            if self.config.node_limit is not None and self.nodes >= self.config.node_limit:
                status = LIMIT_HIT
                break
            node = heapq.heappop(self.heap)
            dive: BbNode | None = node
            while dive is not None:
                if self._out_of_time() or (self.config.node_limit is not None
                                           and self.nodes >= self.config.node_limit):
                    heapq.heappush(self.heap, dive)
                    break
                dive = self._process(dive, first_node)
                first_node = False
            if self._gap_closed():
                break

        if self._out_of_time() and self.heap:
            status = LIMIT_HIT
        bound = self._global_bound()
        if self.incumbent is None:
            return MilpResult(incumbent=None, bound=bound,
                              status=INFEASIBLE if not self.heap and np.isinf(self.prune_floor)
                              else LIMIT_HIT,
                              gap=np.inf, nodes=self.nodes, lp_time=self.lp_time,
                              lp_solves=self.lp_solves, node_log=self.node_log)
        gap = self._current_gap()
        if status != LIMIT_HIT:
            status = GAP_REACHED if gap <= self.gap + 1e-12 else LIMIT_HIT
        return MilpResult(incumbent=self.incumbent, bound=bound, status=status,
                          gap=gap, nodes=self.nodes, lp_time=self.lp_time,
                          lp_solves=self.lp_solves, node_log=self.node_log)

    def _global_bound(self) -> float:
        vals = [n.bound for n in self.heap]
        vals.append(self.prune_floor)
        if self.incumbent is not None:
            vals.append(self.incumbent.objective)
        vals = [v for v in vals if np.isfinite(v)]
        return min(vals) if vals else -np.inf

    def _current_gap(self) -> float:
        if self.incumbent is None:
            return np.inf
        bound = self._global_bound()
        if not np.isfinite(bound):
            return np.inf
        return max(0.0, (self.incumbent.objective - bound)
                   / max(abs(self.incumbent.objective), 1e-12))

    def _gap_closed(self) -> bool:
        return self.incumbent is not None and self._current_gap() <= self.gap

    def _process(self, node: BbNode, is_root: bool) -> BbNode | None:
        """Evaluate one node; returns the plunge child, if any."""
        if node.bound >= self._cutoff():
            self.prune_floor = min(self.prune_floor, node.bound)
            self.node_log.append({"node": self.nodes, "depth": node.depth,
                                  "bound": node.bound, "incumbent": self._inc_obj(),
                                  "action": "pruned-bound"})
            return None
        out = self._evaluate(node)
        if out is None:
            return None
        bound, x_full, warm_full, nodem = out

        if bound >= self._cutoff():
            self.prune_floor = min(self.prune_floor, bound)
            self.node_log.append({"node": self.nodes, "depth": node.depth,
                                  "bound": bound, "incumbent": self._inc_obj(),
                                  "action": "pruned-bound"})
            return None
        if x_full is None:  # LP failed; keep the node honest but do not recurse
            self.prune_floor = min(self.prune_floor, bound)
            self.node_log.append({"node": self.nodes, "depth": node.depth,
                                  "bound": bound, "incumbent": self._inc_obj(),
                                  "action": "lp-failure"})
            return None

        if is_root:
            self._rounding_incumbent(x_full)

        branch_col = self._branch_column(nodem, x_full)
        if branch_col is None:
            # integral relaxation: polish and record the leaf's bound
            bin_vals = np.rint(x_full[self.binary_cols])
            self._polish(bin_vals, "leaf")
            self.prune_floor = min(self.prune_floor, bound)
            self.node_log.append({"node": self.nodes, "depth": node.depth,
                                  "bound": bound, "incumbent": self._inc_obj(),
                                  "action": "leaf"})
            return None

        frac = x_full[branch_col]
        preferred = 1.0 if frac > 0.5 else 0.0
        children = []
        for val in (preferred, 1.0 - preferred):
            child = BbNode(sort_bound=bound, seq=self.seq,
                           fixes=node.fixes + ((branch_col, val),),
                           bound=bound, depth=node.depth + 1, warm=warm_full)
            self.seq += 1
            children.append(child)
        self.node_log.append({"node": self.nodes, "depth": node.depth,
                              "bound": bound, "incumbent": self._inc_obj(),
                              "action": f"branch col {branch_col}"})
        plunge = self.incumbent is None
        if plunge:
            heapq.heappush(self.heap, children[1])
            return children[0]
        heapq.heappush(self.heap, children[0])
        heapq.heappush(self.heap, children[1])
        return None


def solve_milp(model: MilpModel, gap: float = 1e-3, time_limit: float | None = None,
               config: BbConfig | None = None,
               initial_incumbent: Incumbent | None = None) -> MilpResult:
    """Best-first branch and bound to the requested relative gap."""
    search = _Search(model, gap, time_limit, config or BbConfig())
    return search.run(initial_incumbent)
