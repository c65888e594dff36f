"""SCUC MILP construction in standard form, plus instance-aware scaling.

The model uses the three-binary commitment encoding (status u, startup v,
shutdown w per generator-period), power-above-minimum p', piecewise segment
power, a per-period cost variable, and per-bus unserved-demand slacks.
Equality rows come first in the standard form; inequality rows (A x >= rhs)
follow.  Flow rows are added only for explicitly monitored
(line, period, contingency) triples.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, replace

import numpy as np

from .instance import BASE_CASE, Generator, PtdfTable, ScucInstance, compute_ptdf
from .lp_kernel import SparseMatrix, StandardFormLp

log = logging.getLogger(__name__)

_FLOW_COEFF_DROP = 1e-10


class ModelError(ValueError):
    pass


class InternalInconsistencyError(RuntimeError):
    """A fixing request contradicts an earlier fixing or bound; indicates a
    bug or an invalid rounding interaction upstream."""


class VariableMap:
    """Column indices of every SCUC variable in the standard-form model.

    Layout: u, v, w blocks first (all binaries), then p', segment powers,
    per-period cost variables, and unserved-demand slacks.
    """

    def __init__(self, instance: ScucInstance):
        n_g = len(instance.generators)
        n_t = instance.n_periods
        n_b = len(instance.buses)
        self.gen_ids = [g.gid for g in instance.generators]
        self.bus_ids = [b.bid for b in instance.buses]
        self.n_gens = n_g
        self.n_periods = n_t
        self.n_buses = n_b
        self.initial_on = np.array([g.initial_on for g in instance.generators], dtype=np.int64)

        def block(start):
            return start + np.arange(n_g * n_t, dtype=np.int64).reshape(n_g, n_t)

        self.u = block(0)
        self.v = block(n_g * n_t)
        self.w = block(2 * n_g * n_t)
        self.pprime = block(3 * n_g * n_t)
        col = 4 * n_g * n_t
        self.segments = []
        for g in instance.generators:
            h = g.n_segments
            self.segments.append(col + np.arange(n_t * h, dtype=np.int64).reshape(n_t, h))
            col += n_t * h
        self.cost = col + np.arange(n_g * n_t, dtype=np.int64).reshape(n_g, n_t)
        col += n_g * n_t
        self.penalty = col + np.arange(n_b * n_t, dtype=np.int64).reshape(n_b, n_t)
        col += n_b * n_t
        self.n_cols = col

        self.binary_mask = np.zeros(col, dtype=bool)
        self.binary_mask[: 3 * n_g * n_t] = True
        self.production_mask = np.zeros(col, dtype=bool)
        self.production_mask[self.pprime.ravel()] = True
        for seg in self.segments:
            self.production_mask[seg.ravel()] = True
        self.production_mask[self.penalty.ravel()] = True
        self.cost_mask = np.zeros(col, dtype=bool)
        self.cost_mask[self.cost.ravel()] = True


@dataclass(frozen=True)
class ScalingInfo:
    """Scaling divisors: production quantities by power_scale (MW), cost
    coefficients by cost_scale ($/MWh).  Objective values of the scaled
    model multiply by cost_scale to recover original dollars."""

    power_scale: float = 1.0
    cost_scale: float = 1.0
    applied: bool = False


@dataclass
class FixedVariable:
    value: float
    provenance: str  # e.g. "round 1", "branch", "incumbent-rounding"


class MilpModel:
    """Standard-form LP plus integrality marks and a fixed-variable ledger."""

    def __init__(self, lp: StandardFormLp, integrality: np.ndarray,
                 vmap: VariableMap | None = None):
        self.lp = lp
        self.integrality = np.asarray(integrality, dtype=bool)
        self.vmap = vmap
        self.fixed: dict[int, FixedVariable] = {}

    @property
    def n_rows(self) -> int:
        return self.lp.n_rows

    @property
    def n_cols(self) -> int:
        return self.lp.n_cols

    def copy(self) -> "MilpModel":
        dup = MilpModel(self.lp.copy(), self.integrality.copy(), self.vmap)
        dup.fixed = dict(self.fixed)
        return dup

    def fix_column(self, col: int, value: float, provenance: str) -> None:
        prior = self.fixed.get(col)
        if prior is not None:
            if abs(prior.value - value) > 1e-9:
                raise InternalInconsistencyError(
                    f"column {col} ({self.lp.col_tags[col]}) already fixed to "
                    f"{prior.value} ({prior.provenance}); refusing {value} ({provenance})")
            return
        if value < self.lp.lower[col] - 1e-9 or value > self.lp.upper[col] + 1e-9:
            raise InternalInconsistencyError(
                f"column {col} ({self.lp.col_tags[col]}) cannot be fixed to {value}: "
                f"bounds [{self.lp.lower[col]}, {self.lp.upper[col]}]")
        self.lp.lower[col] = value
        self.lp.upper[col] = value
        self.fixed[col] = FixedVariable(value=value, provenance=provenance)

    def free_binary_columns(self) -> np.ndarray:
        free = self.integrality & (self.lp.upper - self.lp.lower > 1e-9)
        return np.flatnonzero(free)

    def relax(self) -> StandardFormLp:
        """LP relaxation: the standard-form data with integrality dropped."""
        return self.lp.copy()


def apply_instance_scaling(instance: ScucInstance) -> tuple[ScucInstance, ScalingInfo]:
    """Divide all MW quantities by the largest minimum-power level and all
    $/MWh coefficients by the largest segment cost.

    Falls back to the largest maximum power when every p_min is zero; if no
    positive scale exists the instance is returned unchanged with a warning.
    """
    power_scale = max((g.p_min for g in instance.generators), default=0.0)
    if power_scale <= 0.0:
        power_scale = max((g.p_max for g in instance.generators), default=0.0)
    cost_scale = max((max(g.segment_costs) for g in instance.generators), default=0.0)
    if power_scale <= 0.0:
        log.warning("degenerate instance (no positive power level); scaling skipped")
        return instance, ScalingInfo()
    if cost_scale <= 0.0:
        log.warning("degenerate costs (no positive segment cost); cost scaling skipped")
        cost_scale = 1.0

    cost_factor = power_scale / cost_scale
    gens = tuple(
        replace(
            g,
            p_min=g.p_min / power_scale,
            p_max=g.p_max / power_scale,
            segment_caps=tuple(c / power_scale for c in g.segment_caps),
            segment_costs=tuple(c * cost_factor for c in g.segment_costs),
            min_output_cost=g.min_output_cost / cost_scale,
            ramp_up=g.ramp_up / power_scale,
            ramp_down=g.ramp_down / power_scale,
            startup_limit=g.startup_limit / power_scale,
            shutdown_limit=g.shutdown_limit / power_scale,
            initial_power=g.initial_power / power_scale,
        )
        for g in instance.generators
    )
    buses = tuple(replace(b, demand=tuple(d / power_scale for d in b.demand))
                  for b in instance.buses)
    lines = tuple(replace(l, limit=l.limit / power_scale,
                          emergency_limit=l.emergency_limit / power_scale)
                  for l in instance.lines)
    network = replace(instance.network, buses=buses, lines=lines)
    scaled = replace(instance, generators=gens, network=network,
                     penalty_cost=instance.penalty_cost * cost_factor)
    return scaled, ScalingInfo(power_scale=power_scale, cost_scale=cost_scale, applied=True)


def unscale_solution(x: np.ndarray, info: ScalingInfo, vmap: VariableMap) -> np.ndarray:
    """Map a scaled-model primal vector back to physical units.

    Production-type columns multiply by the power scale, cost columns by the
    cost scale; binary columns are unchanged.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.shape[0] != vmap.n_cols:
        raise ModelError(f"solution length {x.shape[0]} does not match map ({vmap.n_cols} columns)")
    if not info.applied:
        return x.copy()
    out = x.copy()
    out[vmap.production_mask] *= info.power_scale
    out[vmap.cost_mask] *= info.cost_scale
    return out


def _initial_power_above_min(gen: Generator) -> float:
    return gen.initial_power - gen.p_min * gen.initial_on


def build_model(instance: ScucInstance, monitored=(), ptdf: PtdfTable | None = None
                ) -> tuple[MilpModel, VariableMap]:
    """Assemble the SCUC MILP over the given monitored flow triples.

    `monitored` holds (line_id, period, contingency_key) triples with
    0-based periods and contingency key "base" for the intact topology.
    Two flow rows (upper and lower limit) are emitted per triple.
    """
    vmap = VariableMap(instance)
    n_t = instance.n_periods
    demand = instance.demand_matrix()

    monitored = sorted(set(monitored))
    if monitored:
        valid_keys = set(instance.contingency_keys())
        line_pos = instance.network.line_index()
        for lid, t, key in monitored:
            if lid not in line_pos or not (0 <= t < n_t) or key not in valid_keys:
                raise ModelError(f"monitored triple ({lid}, {t}, {key}) is out of range")
        if ptdf is None:
            ptdf = instance.ptdf or compute_ptdf(instance.network)

    rows_i: list[int] = []
    cols_j: list[int] = []
    vals: list[float] = []
    rhs: list[float] = []
    row_tags: list[str] = []

    def add_row(tag: str, entries, theta: float) -> None:
        r = len(rhs)
        for col, coeff in entries:
            if coeff != 0.0:
                rows_i.append(r)
                cols_j.append(int(col))
                vals.append(float(coeff))
        rhs.append(float(theta))
        row_tags.append(tag)

    # ---- equality block -------------------------------------------------
    for gi, gen in enumerate(instance.generators):
        for t in range(n_t):
            # u_t - u_{t-1} - v_t + w_t = [u_0 at t=0]
            entries = [(vmap.u[gi, t], 1.0), (vmap.v[gi, t], -1.0), (vmap.w[gi, t], 1.0)]
            if t == 0:
                theta = float(gen.initial_on)
            else:
                entries.append((vmap.u[gi, t - 1], -1.0))
                theta = 0.0
            add_row(f"logic-eq g={gen.gid} t={t}", entries, theta)

    for gi, gen in enumerate(instance.generators):
        for t in range(n_t):
            entries = [(vmap.segments[gi][t, h], 1.0) for h in range(gen.n_segments)]
            entries.append((vmap.pprime[gi, t], -1.0))
            add_row(f"seg-sum g={gen.gid} t={t}", entries, 0.0)

    for gi, gen in enumerate(instance.generators):
        for t in range(n_t):
            entries = [(vmap.segments[gi][t, h], gen.segment_costs[h])
                       for h in range(gen.n_segments)]
            entries.append((vmap.cost[gi, t], -1.0))
            add_row(f"cost-def g={gen.gid} t={t}", entries, 0.0)

    for t in range(n_t):
        entries = []
        for gi, gen in enumerate(instance.generators):
            entries.append((vmap.pprime[gi, t], 1.0))
            entries.append((vmap.u[gi, t], gen.p_min))
        for bi in range(vmap.n_buses):
            entries.append((vmap.penalty[bi, t], 1.0))
        add_row(f"balance t={t}", entries, float(demand[:, t].sum()))

    n_eq = len(rhs)

    # ---- inequality block (rows are A x >= theta) ------------------------
    for gi, gen in enumerate(instance.generators):
        for t in range(n_t):
            add_row(f"logic-ineq g={gen.gid} t={t}",
                    [(vmap.v[gi, t], -1.0), (vmap.w[gi, t], -1.0)], -1.0)

    for gi, gen in enumerate(instance.generators):
        for t in range(n_t):
            first = max(0, t - gen.min_up + 1)
            entries = [(vmap.u[gi, t], 1.0)]
            entries += [(vmap.v[gi, tau], -1.0) for tau in range(first, t + 1)]
            add_row(f"min-up g={gen.gid} t={t}", entries, 0.0)

    for gi, gen in enumerate(instance.generators):
        for t in range(n_t):
            first = max(0, t - gen.min_down + 1)
            entries = [(vmap.u[gi, t], -1.0)]
            entries += [(vmap.w[gi, tau], -1.0) for tau in range(first, t + 1)]
            add_row(f"min-down g={gen.gid} t={t}", entries, -1.0)

    for gi, gen in enumerate(instance.generators):
        span = gen.p_max - gen.p_min
        for t in range(n_t):
            add_row(f"prod-limit g={gen.gid} t={t}",
                    [(vmap.u[gi, t], span), (vmap.pprime[gi, t], -1.0)], 0.0)

    for gi, gen in enumerate(instance.generators):
        for t in range(n_t):
            # ramp-up: RU u_{t-1} + SU v_t - (p'_t + PL u_t) + (p'_{t-1} + PL u_{t-1}) >= 0
            entries = [(vmap.v[gi, t], gen.startup_limit),
                       (vmap.pprime[gi, t], -1.0),
                       (vmap.u[gi, t], -gen.p_min)]
            if t == 0:
                theta = -(gen.ramp_up * gen.initial_on + gen.initial_power)
            else:
                entries.append((vmap.u[gi, t - 1], gen.ramp_up + gen.p_min))
                entries.append((vmap.pprime[gi, t - 1], 1.0))
                theta = 0.0
            add_row(f"ramp-up g={gen.gid} t={t}", entries, theta)

    for gi, gen in enumerate(instance.generators):
        for t in range(n_t):
            # ramp-down: RD u_t + SD w_t + (p'_t + PL u_t) - (p'_{t-1} + PL u_{t-1}) >= 0
            entries = [(vmap.u[gi, t], gen.ramp_down + gen.p_min),
                       (vmap.w[gi, t], gen.shutdown_limit),
                       (vmap.pprime[gi, t], 1.0)]
            if t == 0:
                theta = gen.initial_power
            else:
                entries.append((vmap.u[gi, t - 1], -gen.p_min))
                entries.append((vmap.pprime[gi, t - 1], -1.0))
                theta = 0.0
            add_row(f"ramp-down g={gen.gid} t={t}", entries, theta)

    for gi, gen in enumerate(instance.generators):
        widths = gen.segment_widths
        for t in range(n_t):
            for h in range(gen.n_segments):
                add_row(f"seg-cap g={gen.gid} t={t} h={h}",
                        [(vmap.u[gi, t], widths[h]), (vmap.segments[gi][t, h], -1.0)],
                        0.0)

    line_pos = instance.network.line_index()
    gen_bus = [instance.network.bus_index()[g.bus] for g in instance.generators]
    for lid, t, key in monitored:
        delta = ptdf.table(key)[line_pos[lid], :]
        limit = instance.lines[line_pos[lid]].limit_for(key)
        base = float(delta @ demand[:, t])
        entries = []
        for gi, gen in enumerate(instance.generators):
            coeff = delta[gen_bus[gi]]
            if abs(coeff) > _FLOW_COEFF_DROP:
                entries.append((vmap.pprime[gi, t], coeff))
                entries.append((vmap.u[gi, t], coeff * gen.p_min))
        for bi in range(vmap.n_buses):
            if abs(delta[bi]) > _FLOW_COEFF_DROP:
                entries.append((vmap.penalty[bi, t], delta[bi]))
        # flow = entries - base;  lower: flow >= -F;  upper: -flow >= -F
        add_row(f"flow-lo l={lid} t={t} c={key}", entries, -limit + base)
        add_row(f"flow-hi l={lid} t={t} c={key}",
                [(col, -coeff) for col, coeff in entries], -limit - base)

    # ---- bounds, objective, tags -----------------------------------------
    n = vmap.n_cols
    lower = np.zeros(n)
    upper = np.zeros(n)
    cost = np.zeros(n)
    col_tags = [""] * n

    for gi, gen in enumerate(instance.generators):
        on_win = gen.forced_on_window(n_t)
        off_win = gen.forced_off_window(n_t)
        widths = gen.segment_widths
        for t in range(n_t):
            for arr, label in ((vmap.u, "u"), (vmap.v, "v"), (vmap.w, "w")):
                col_tags[arr[gi, t]] = f"{label} g={gen.gid} t={t}"
                upper[arr[gi, t]] = 1.0
            if t < on_win:
                lower[vmap.u[gi, t]] = 1.0
            if t < off_win:
                upper[vmap.u[gi, t]] = 0.0
            col_tags[vmap.pprime[gi, t]] = f"pprime g={gen.gid} t={t}"
            upper[vmap.pprime[gi, t]] = gen.p_max - gen.p_min
            for h in range(gen.n_segments):
                col_tags[vmap.segments[gi][t, h]] = f"seg g={gen.gid} t={t} h={h}"
                upper[vmap.segments[gi][t, h]] = widths[h]
            col_tags[vmap.cost[gi, t]] = f"cost g={gen.gid} t={t}"
            lower[vmap.cost[gi, t]] = sum(min(0.0, c) * w for c, w in zip(gen.segment_costs, widths))
            upper[vmap.cost[gi, t]] = sum(max(0.0, c) * w for c, w in zip(gen.segment_costs, widths))
            cost[vmap.cost[gi, t]] = 1.0
            cost[vmap.u[gi, t]] = gen.min_output_cost

    for bi, bus in enumerate(instance.buses):
        for t in range(n_t):
            col = vmap.penalty[bi, t]
            col_tags[col] = f"dpen b={bus.bid} t={t}"
            upper[col] = demand[bi, t]
            cost[col] = instance.penalty_cost

    matrix = SparseMatrix.from_coo(rows_i, cols_j, vals, shape=(len(rhs), n))
    lp = StandardFormLp(matrix=matrix, rhs=np.array(rhs), cost=cost,
                        lower=lower, upper=upper, n_eq=n_eq,
                        row_tags=row_tags, col_tags=col_tags)
    model = MilpModel(lp, vmap.binary_mask.copy(), vmap)
    return model, vmap
