"""Independent reference implementations used to verify the package.

Everything here is deliberately written from first principles against the
problem statement (dense linear algebra, scipy's HiGHS LP solver, explicit
enumeration) and shares no code paths with the package internals it checks.
"""

from __future__ import annotations

import itertools

import numpy as np
from scipy.optimize import linprog


# ---------------------------------------------------------------------------
# LP reference solve (dense, HiGHS)

def solve_lp_reference(lp):
    """Optimal value/point of a StandardFormLp via scipy.optimize.linprog."""
    a = lp.matrix.toarray()
    n_eq = lp.n_eq
    a_eq = a[:n_eq] if n_eq else None
    b_eq = np.asarray(lp.rhs[:n_eq]) if n_eq else None
    a_ub = -a[n_eq:] if a.shape[0] > n_eq else None
    b_ub = -np.asarray(lp.rhs[n_eq:]) if a.shape[0] > n_eq else None
    res = linprog(c=lp.cost, A_ub=a_ub, b_ub=b_ub, A_eq=a_eq, b_eq=b_eq,
                  bounds=list(zip(lp.lower, lp.upper)), method="highs")
    if res.status != 0:
        return None, None
    return float(res.fun) + lp.offset, np.asarray(res.x)


# ---------------------------------------------------------------------------
# DC power flow (dense, direct)

def dc_flow_matrix(bus_ids, lines, reference_bus, skip_line=None):
    """Line-flow sensitivities to bus injections by solving the reduced
    susceptance system densely; `lines` are (lid, from, to, reactance)."""
    n_b = len(bus_ids)
    idx = {b: i for i, b in enumerate(bus_ids)}
    ref = idx[reference_bus]
    b_mat = np.zeros((n_b, n_b))
    for k, (lid, fb, tb, x) in enumerate(lines):
        if k == skip_line:
            continue
        i, j = idx[fb], idx[tb]
        b_mat[i, i] += 1.0 / x
        b_mat[j, j] += 1.0 / x
        b_mat[i, j] -= 1.0 / x
        b_mat[j, i] -= 1.0 / x
    keep = [i for i in range(n_b) if i != ref]
    inv = np.linalg.inv(b_mat[np.ix_(keep, keep)])
    theta = np.zeros((n_b, n_b))
    theta[np.ix_(keep, keep)] = inv
    out = np.zeros((len(lines), n_b))
    for k, (lid, fb, tb, x) in enumerate(lines):
        if k == skip_line:
            continue
        out[k, :] = (theta[idx[fb], :] - theta[idx[tb], :]) / x
    out[:, ref] = 0.0
    return out


def dc_flows_from_injections(bus_ids, lines, reference_bus, injections, skip_line=None):
    return dc_flow_matrix(bus_ids, lines, reference_bus, skip_line) @ injections


# ---------------------------------------------------------------------------
# Commitment enumeration and the per-pattern LP

def derive_startup_shutdown(u_row, initial_on):
    prev = initial_on
    v, w = [], []
    for val in u_row:
        v.append(max(val - prev, 0))
        w.append(max(prev - val, 0))
        prev = val
    return v, w


def commitment_feasible(gen, u_row):
    """Minimum up/down feasibility of one generator's on/off sequence,
    including the window forced by the initial time-in-state."""
    n_t = len(u_row)
    if gen.initial_on:
        forced = min(n_t, max(0, gen.min_up - gen.initial_periods))
        if any(u_row[t] != 1 for t in range(forced)):
            return False
    else:
        forced = min(n_t, max(0, gen.min_down - gen.initial_periods))
        if any(u_row[t] != 0 for t in range(forced)):
            return False
    v, w = derive_startup_shutdown(u_row, gen.initial_on)
    for t in range(n_t):
        if sum(v[max(0, t - gen.min_up + 1):t + 1]) > u_row[t]:
            return False
        if sum(w[max(0, t - gen.min_down + 1):t + 1]) > 1 - u_row[t]:
            return False
    return True


def feasible_commitments(gen, n_t):
    return [u for u in itertools.product((0, 1), repeat=n_t)
            if commitment_feasible(gen, u)]


def pattern_lp(instance, u_matrix, flow_mode="all"):
    """Continuous LP for a fixed commitment pattern, built directly from the
    instance data.  Returns (objective, None-free) or (None, None) when the
    pattern admits no feasible dispatch.

    flow_mode: "all" enforces every (line, period, contingency) limit,
    "none" drops network limits entirely.
    """
    gens = instance.generators
    buses = instance.buses
    n_t = instance.n_periods
    n_g = len(gens)
    n_b = len(buses)
    demand = np.array([b.demand for b in buses])

    # columns: p'[g,t] | seg[g,t,h] | dpen[b,t]
    col = 0
    pp = np.arange(n_g * n_t).reshape(n_g, n_t)
    col += n_g * n_t
    seg_cols = []
    for g in gens:
        seg_cols.append(col + np.arange(n_t * g.n_segments).reshape(n_t, g.n_segments))
        col += n_t * g.n_segments
    dp = col + np.arange(n_b * n_t).reshape(n_b, n_t)
    col += n_b * n_t

    cost = np.zeros(col)
    lo = np.zeros(col)
    hi = np.zeros(col)
    const = 0.0
    for gi, g in enumerate(gens):
        widths = g.segment_widths
        for t in range(n_t):
            u = u_matrix[gi][t]
            const += g.min_output_cost * u
            hi[pp[gi, t]] = (g.p_max - g.p_min) * u
            for h in range(g.n_segments):
                hi[seg_cols[gi][t, h]] = widths[h] * u
                cost[seg_cols[gi][t, h]] = g.segment_costs[h]
    for bi in range(n_b):
        for t in range(n_t):
            hi[dp[bi, t]] = demand[bi, t]
            cost[dp[bi, t]] = instance.penalty_cost

    a_eq, b_eq, a_ub, b_ub = [], [], [], []

    for gi, g in enumerate(gens):
        for t in range(n_t):
            row = np.zeros(col)
            row[seg_cols[gi][t, :]] = 1.0
            row[pp[gi, t]] = -1.0
            a_eq.append(row)
            b_eq.append(0.0)

    for t in range(n_t):
        row = np.zeros(col)
        row[pp[:, t]] = 1.0
        row[dp[:, t]] = 1.0
        a_eq.append(row)
        b_eq.append(demand[:, t].sum() - sum(g.p_min * u_matrix[gi][t]
                                             for gi, g in enumerate(gens)))

    for gi, g in enumerate(gens):
        u_row = u_matrix[gi]
        v, w = derive_startup_shutdown(u_row, g.initial_on)
        prev_u = g.initial_on
        prev_power_const = g.initial_power
        for t in range(n_t):
            # (p'_t + PL u_t) - (p'_{t-1} + PL u_{t-1}) <= RU u_{t-1} + SU v_t
            row = np.zeros(col)
            row[pp[gi, t]] = 1.0
            rhs = g.ramp_up * prev_u + g.startup_limit * v[t] - g.p_min * u_row[t]
            if t == 0:
                rhs += prev_power_const
            else:
                row[pp[gi, t - 1]] = -1.0
                rhs += g.p_min * prev_u
            a_ub.append(row)
            b_ub.append(rhs)
            # down direction
            row = np.zeros(col)
            row[pp[gi, t]] = -1.0
            rhs = g.ramp_down * u_row[t] + g.shutdown_limit * w[t] + g.p_min * u_row[t]
            if t == 0:
                rhs -= prev_power_const
            else:
                row[pp[gi, t - 1]] = 1.0
                rhs -= g.p_min * prev_u
            a_ub.append(row)
            b_ub.append(rhs)
            prev_u = u_row[t]

    if flow_mode == "all" and instance.lines:
        line_data = [(l.lid, l.from_bus, l.to_bus, l.reactance) for l in instance.lines]
        bus_ids = [b.bid for b in buses]
        bus_of = {bid: i for i, bid in enumerate(bus_ids)}
        line_pos = {l.lid: i for i, l in enumerate(instance.lines)}
        cases = [("base", None)] + [(c.cid, line_pos[c.line]) for c in instance.contingencies]
        for key, skip in cases:
            sens = dc_flow_matrix(bus_ids, line_data, instance.network.reference_bus,
                                  skip_line=skip)
            for li, line in enumerate(instance.lines):
                if skip == li:
                    continue
                limit = line.limit if key == "base" else line.emergency_limit
                for t in range(n_t):
                    row = np.zeros(col)
                    base_flow = 0.0
                    for gi, g in enumerate(gens):
                        coeff = sens[li, bus_of[g.bus]]
                        row[pp[gi, t]] += coeff
                        base_flow += coeff * g.p_min * u_matrix[gi][t]
                    for bi in range(n_b):
                        row[dp[bi, t]] += sens[li, bi]
                        base_flow -= sens[li, bi] * demand[bi, t]
                    a_ub.append(row.copy())
                    b_ub.append(limit - base_flow)
                    a_ub.append(-row)
                    b_ub.append(limit + base_flow)

    res = linprog(c=cost,
                  A_ub=np.array(a_ub) if a_ub else None,
                  b_ub=np.array(b_ub) if b_ub else None,
                  A_eq=np.array(a_eq), b_eq=np.array(b_eq),
                  bounds=list(zip(lo, hi)), method="highs")
    if res.status != 0:
        return None, None
    return float(res.fun) + const, res.x


def brute_force_optimum(instance, flow_mode="all"):
    """Global optimum by exhaustive enumeration over feasible commitments.

    Returns (objective, u_matrix, n_feasible_patterns).
    """
    per_gen = [feasible_commitments(g, instance.n_periods) for g in instance.generators]
    best = (np.inf, None)
    n_checked = 0
    for combo in itertools.product(*per_gen):
        n_checked += 1
        obj, _ = pattern_lp(instance, combo, flow_mode=flow_mode)
        if obj is not None and obj < best[0]:
            best = (obj, combo)
    return best[0], best[1], n_checked


# ---------------------------------------------------------------------------
# Line-by-line transcription of the logic-driven fixing pseudocode

def round_reference(s, tau):
    if s >= 1.0 - tau:
        return 1
    if 0.0 <= s <= tau:
        return 0
    return -1


def fixing_strategy_reference(u_hat, v_hat, w_hat, initial_on, tau):
    """Returns the set of (g, t, u, v, w) fixings per the pseudocode, with
    the period-1 check extended to the initial status."""
    n_g, n_t = u_hat.shape
    fixes = []
    for g in range(n_g):
        ru = [round_reference(u_hat[g, t], tau) for t in range(n_t)]
        rv = [round_reference(v_hat[g, t], tau) for t in range(n_t)]
        rw = [round_reference(w_hat[g, t], tau) for t in range(n_t)]
        ru_prev = [int(initial_on[g])] + ru[:-1]
        for t in range(n_t):
            if ru[t] == -1 or ru_prev[t] == -1 or rv[t] == -1 or rw[t] == -1:
                break
            if ru[t] - ru_prev[t] == rv[t] - rw[t] and rv[t] + rw[t] <= 1:
                fixes.append((g, t, ru[t], rv[t], rw[t]))
            else:
                break
    return fixes
