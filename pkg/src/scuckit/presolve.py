"""Model reductions: fixed-column substitution, activity-based bound
tightening, redundant-row removal, and a reversible reduction ledger.

`milp_presolve` runs all rules to a fixpoint (integral bound rounding
included); `lp_presolve` runs the integrality-free subset (tightening,
redundancy, singleton rows).  Binary implications of the commitment logic
(status/startup/shutdown equations and the min-up/down windows) are
realized by activity tightening on those structured rows, so no dedicated
propagation pass is needed.  `uncrush` replays a log to lift reduced-space
points back to the original space.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .formulation import MilpModel
from .lp_kernel import SparseMatrix, StandardFormLp

_IMPROVE_TOL = 1e-9   # minimum bound improvement before recording a change
_FEAS_TOL = 1e-9
_FIXED_TOL = 1e-10


class InfeasibleModelError(RuntimeError):
    """Presolve proved the model empty (used by callers that cannot carry
    an infeasible status forward)."""


@dataclass
class ReductionLog:
    """Reversible record of one presolve run."""

    n_cols_full: int
    n_rows_full: int
    kept_cols: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=np.int64))
    kept_rows: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=np.int64))
    fixed_values: dict = field(default_factory=dict)     # original col -> value
    removed_rows: list = field(default_factory=list)     # (original row, reason)
    bound_changes: list = field(default_factory=list)    # (col, old_lb, old_ub, new_lb, new_ub)
    objective_delta: float = 0.0
    infeasible: str | None = None                        # certificate description

    @property
    def feasible(self) -> bool:
        return self.infeasible is None


def uncrush(point: np.ndarray, log: ReductionLog) -> np.ndarray:
    """Lift a reduced-space vector to the original space, re-inserting the
    values of substituted columns."""
    point = np.asarray(point, dtype=np.float64)
    if point.shape[0] != log.kept_cols.shape[0]:
        raise ValueError(f"point has {point.shape[0]} entries; log expects "
                         f"{log.kept_cols.shape[0]}")
    full = np.zeros(log.n_cols_full)
    full[log.kept_cols] = point
    for col, val in log.fixed_values.items():
        full[col] = val
    return full


class _Reducer:
    """Shared machinery for the MILP and LP presolve entry points."""

    def __init__(self, lp: StandardFormLp, integrality: np.ndarray | None):
        self.csr = lp.matrix.csr.astype(np.float64)
        self.csc = lp.matrix.csc.astype(np.float64)
        self.rhs = lp.rhs.astype(np.float64).copy()
        self.cost = lp.cost.astype(np.float64)
        self.lower = lp.lower.astype(np.float64).copy()
        self.upper = lp.upper.astype(np.float64).copy()
        self.n_eq = lp.n_eq
        self.m, self.n = self.csr.shape
        self.integrality = (np.zeros(self.n, dtype=bool) if integrality is None
                            else integrality.astype(bool))
        self.alive_row = np.ones(self.m, dtype=bool)
        self.removed: list = []
        self.changes: list = []
        self.infeasible: str | None = None
        self.row_tags = lp.row_tags or [f"row {i}" for i in range(self.m)]
        self.col_tags = lp.col_tags or [f"col {j}" for j in range(self.n)]

    def _row(self, i: int):
        sl = slice(self.csr.indptr[i], self.csr.indptr[i + 1])
        return self.csr.indices[sl], self.csr.data[sl]

    def _col_rows(self, j: int):
        sl = slice(self.csc.indptr[j], self.csc.indptr[j + 1])
        return self.csc.indices[sl]

    def _activity(self, cols, vals):
        """(min, max) activity of a row under current bounds."""
        lo = self.lower[cols]
        up = self.upper[cols]
        min_act = float(np.sum(np.where(vals > 0, vals * lo, vals * up)))
        max_act = float(np.sum(np.where(vals > 0, vals * up, vals * lo)))
        return min_act, max_act

    def _set_bounds(self, j: int, new_lo: float, new_up: float, queue, in_queue) -> bool:
        old_lo, old_up = self.lower[j], self.upper[j]
        changed = False
        if new_lo > old_lo + _IMPROVE_TOL:
            self.lower[j] = new_lo
            changed = True
        if new_up < old_up - _IMPROVE_TOL:
            self.upper[j] = new_up
            changed = True
        if not changed:
            return False
        if self.integrality[j]:
            self.lower[j] = np.ceil(self.lower[j] - _FEAS_TOL)
            self.upper[j] = np.floor(self.upper[j] + _FEAS_TOL)
        if self.lower[j] > self.upper[j] + _FEAS_TOL:
            self.infeasible = (f"column {j} ({self.col_tags[j]}) has empty domain "
                               f"[{self.lower[j]}, {self.upper[j]}]")
            return True
        self.changes.append((j, float(old_lo), float(old_up),
                             float(self.lower[j]), float(self.upper[j])))
        for i in self._col_rows(j):
            if self.alive_row[i] and not in_queue[i]:
                in_queue[i] = True
                queue.append(i)
        return True

    def _process_row(self, i: int, queue, in_queue) -> None:
        cols, vals = self._row(i)
        is_eq = i < self.n_eq
        theta = self.rhs[i]
        if cols.size == 0:
            if (is_eq and abs(theta) > _FEAS_TOL) or (not is_eq and theta > _FEAS_TOL):
                self.infeasible = f"row {i} ({self.row_tags[i]}) is empty with rhs {theta}"
            else:
                self.alive_row[i] = False
                self.removed.append((i, "empty"))
            return

        min_act, max_act = self._activity(cols, vals)

        if max_act < theta - _FEAS_TOL:
            self.infeasible = (f"row {i} ({self.row_tags[i]}): max activity {max_act} "
                               f"cannot reach rhs {theta}")
            return
        if is_eq and min_act > theta + _FEAS_TOL:
            self.infeasible = (f"row {i} ({self.row_tags[i]}): min activity {min_act} "
                               f"exceeds rhs {theta}")
            return
        redundant_ge = min_act >= theta - _FEAS_TOL
        if redundant_ge and (not is_eq or max_act <= theta + _FEAS_TOL):
            self.alive_row[i] = False
            self.removed.append((i, "redundant"))
            return

        # per-variable tightening; contributions split to keep inf-arithmetic safe
        lo = self.lower[cols]
        up = self.upper[cols]
        max_contrib = np.where(vals > 0, vals * up, vals * lo)
        min_contrib = np.where(vals > 0, vals * lo, vals * up)
        finite_max = np.where(np.isfinite(max_contrib), max_contrib, 0.0).sum()
        inf_max = int(np.count_nonzero(~np.isfinite(max_contrib)))
        finite_min = np.where(np.isfinite(min_contrib), min_contrib, 0.0).sum()
        inf_min = int(np.count_nonzero(~np.isfinite(min_contrib)))

        for idx in range(cols.size):
            j = int(cols[idx])
            a = float(vals[idx])
            if abs(a) < 1e-12:
                continue
            # >= direction: a_j x_j >= theta - max(others)
            own_inf = not np.isfinite(max_contrib[idx])
            if inf_max - own_inf == 0:
                others_max = finite_max - (0.0 if own_inf else float(max_contrib[idx]))
                resid = theta - others_max
                if a > 0:
                    self._set_bounds(j, resid / a, np.inf, queue, in_queue)
                else:
                    self._set_bounds(j, -np.inf, resid / a, queue, in_queue)
                if self.infeasible:
                    return
            if is_eq:
                # <= direction: a_j x_j <= theta - min(others)
                own_inf = not np.isfinite(min_contrib[idx])
                if inf_min - own_inf == 0:
                    others_min = finite_min - (0.0 if own_inf else float(min_contrib[idx]))
                    resid = theta - others_min
                    if a > 0:
                        self._set_bounds(j, -np.inf, resid / a, queue, in_queue)
                    else:
                        self._set_bounds(j, resid / a, np.inf, queue, in_queue)
                    if self.infeasible:
                        return

    def run(self, max_passes: int = 100) -> None:
        from collections import deque
        queue = deque(range(self.m))
        in_queue = np.ones(self.m, dtype=bool)
        visits = 0
        budget = max_passes * self.m
        while queue and visits < budget:
            i = int(queue.popleft())
            in_queue[i] = False
            if not self.alive_row[i]:
                continue
            self._process_row(i, queue, in_queue)
            if self.infeasible:
                return
            visits += 1


def milp_presolve(model: MilpModel) -> tuple[MilpModel, ReductionLog]:
    """Reduce a MILP: substitute fixed columns into rhs/objective, tighten
    bounds (with integral rounding), drop redundant rows.  Returns the
    reduced model and a reversible log; the input model is not modified.
    """
    lp = model.lp
    red = _Reducer(lp, model.integrality)
    red.run()

    log = ReductionLog(n_cols_full=lp.n_cols, n_rows_full=lp.n_rows)
    log.bound_changes = red.changes
    log.removed_rows = red.removed
    if red.infeasible:
        log.infeasible = red.infeasible
        log.kept_cols = np.arange(lp.n_cols, dtype=np.int64)
        log.kept_rows = np.arange(lp.n_rows, dtype=np.int64)
        return model, log

    fixed_mask = (red.upper - red.lower) <= _FIXED_TOL
    fixed_vals = 0.5 * (red.upper + red.lower)
    keep_cols = np.flatnonzero(~fixed_mask)
    keep_rows = np.flatnonzero(red.alive_row)
    log.kept_cols = keep_cols.astype(np.int64)
    log.kept_rows = keep_rows.astype(np.int64)
    log.fixed_values = {int(j): float(fixed_vals[j]) for j in np.flatnonzero(fixed_mask)}
    log.objective_delta = float(red.cost[fixed_mask] @ fixed_vals[fixed_mask])

    # substitute fixed columns into the rhs, then slice the matrix
    if fixed_mask.any():
        shift = red.csr @ np.where(fixed_mask, fixed_vals, 0.0)
    else:
        shift = np.zeros(lp.n_rows)
    sub = red.csr[keep_rows][:, keep_cols]
    new_lp = StandardFormLp(
        matrix=SparseMatrix(sub),
        rhs=(red.rhs - shift)[keep_rows],
        cost=red.cost[keep_cols].copy(),
        lower=red.lower[keep_cols],
        upper=red.upper[keep_cols],
        n_eq=int(np.count_nonzero(keep_rows < lp.n_eq)),
        offset=lp.offset + log.objective_delta,
        row_tags=[red.row_tags[i] for i in keep_rows],
        col_tags=[red.col_tags[j] for j in keep_cols],
    )
    reduced = MilpModel(new_lp, model.integrality[keep_cols], vmap=None)
    return reduced, log


def lp_presolve(lp: StandardFormLp) -> tuple[StandardFormLp, ReductionLog]:
    """LP-only reduction: bound tightening, redundant-row removal, and
    singleton-row conversion to bounds.  Columns are never removed."""
    red = _Reducer(lp, integrality=None)
    red.run()

    log = ReductionLog(n_cols_full=lp.n_cols, n_rows_full=lp.n_rows)
    log.kept_cols = np.arange(lp.n_cols, dtype=np.int64)
    log.bound_changes = red.changes
    log.removed_rows = red.removed
    if red.infeasible:
        log.infeasible = red.infeasible
        log.kept_rows = np.arange(lp.n_rows, dtype=np.int64)
        return lp, log

    keep_rows = np.flatnonzero(red.alive_row)
    log.kept_rows = keep_rows.astype(np.int64)
    new_lp = StandardFormLp(
        matrix=SparseMatrix(red.csr[keep_rows]),
        rhs=red.rhs[keep_rows],
        cost=red.cost.copy(),
        lower=red.lower,
        upper=red.upper,
        n_eq=int(np.count_nonzero(keep_rows < lp.n_eq)),
        offset=lp.offset,
        row_tags=[red.row_tags[i] for i in keep_rows],
        col_tags=list(red.col_tags),
    )
    return new_lp, log
