"""LP solve dispatch: the in-package first-order solver or a simplex-based
reference backend (SciPy/HiGHS) useful for cross-checks and debugging."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import linprog

from . import hprlp
from .lp_kernel import StandardFormLp

HPR = "hpr"
SIMPLEX_ORACLE = "simplex-oracle"
BACKENDS = (HPR, SIMPLEX_ORACLE)


@dataclass
class LpSolution:
    x: np.ndarray
    y: np.ndarray
    z: np.ndarray
    objective: float
    status: str
    converged: bool
    solve_time: float
    iterations: int = 0
    residual_log: list | None = None


def solve_lp(lp: StandardFormLp, backend: str = HPR,
             config: hprlp.SolverConfig | None = None,
             start: tuple | None = None) -> LpSolution:
    if backend == HPR:
        res = hprlp.solve(lp, config, start=start)
        return LpSolution(x=res.x, y=res.y, z=res.z, objective=res.objective,
                          status=res.status.value, converged=res.converged,
                          solve_time=res.solve_time, iterations=res.iterations,
                          residual_log=res.residual_log or None)
    if backend == SIMPLEX_ORACLE:
        return solve_lp_simplex(lp)
    raise ValueError(f"unknown LP backend {backend!r}; choose from {BACKENDS}")


def solve_lp_simplex(lp: StandardFormLp) -> LpSolution:
    """Solve via scipy.optimize.linprog (HiGHS) and map duals back to the
    Ax >= theta / equality-block convention (y >= 0 on inequality rows)."""
    import time
    t0 = time.perf_counter()
    a = lp.matrix.csr.astype(np.float64)
    a_eq = a[:lp.n_eq] if lp.n_eq else None
    b_eq = lp.rhs[:lp.n_eq] if lp.n_eq else None
    a_ub = -a[lp.n_eq:] if lp.n_rows > lp.n_eq else None
    b_ub = -lp.rhs[lp.n_eq:] if lp.n_rows > lp.n_eq else None
    res = linprog(c=lp.cost, A_ub=a_ub, b_ub=b_ub, A_eq=a_eq, b_eq=b_eq,
                  bounds=list(zip(lp.lower, lp.upper)), method="highs")
    elapsed = time.perf_counter() - t0
    if res.status != 0:
        return LpSolution(x=np.zeros(lp.n_cols), y=np.zeros(lp.n_rows),
                          z=np.zeros(lp.n_cols), objective=float("nan"),
                          status=f"highs-{res.status}", converged=False,
                          solve_time=elapsed)
    y = np.zeros(lp.n_rows)
    if lp.n_eq:
        # HiGHS marginals for A_eq x = b_eq are d(obj)/d(b); our convention
        # (Lagrangian mu^T x - y^T (Ax - theta)) carries the same sign
        y[:lp.n_eq] = res.eqlin.marginals
    if lp.n_rows > lp.n_eq:
        # for -Ax <= -theta the marginal is <= 0 and equals -y
        y[lp.n_eq:] = -res.ineqlin.marginals
    x = np.asarray(res.x, dtype=np.float64)
    z = lp.cost - lp.matrix.matvec_t(y)
    return LpSolution(x=x, y=y, z=z, objective=lp.objective(x),
                      status="optimal-tolerance", converged=True,
                      solve_time=elapsed, iterations=int(res.nit))
