"""Fixed-format MPS export of a model for cross-validation with external
LP/MILP tools.

Rows are named R0000001... in model order (the objective row is COST),
columns C0000001...; binaries are wrapped in INTORG/INTEND markers.
Inequality rows are written as G rows, the equality block as E rows.  A
nonzero objective offset is encoded as an RHS entry on the COST row with
flipped sign, per MPS convention.  A comment header maps names to the
model's row/column tags.
"""

from __future__ import annotations

import numpy as np

from .formulation import MilpModel


def _field(value: float) -> str:
    return f"{value:.12g}"


def write_mps(model: MilpModel, path, name: str = "SCUC") -> None:
    lp = model.lp
    csc = lp.matrix.csc
    row_names = [f"R{i + 1:07d}" for i in range(lp.n_rows)]
    col_names = [f"C{j + 1:07d}" for j in range(lp.n_cols)]

    lines = [f"* columns: {lp.n_cols}  rows: {lp.n_rows}  equalities: {lp.n_eq}"]
    if lp.row_tags:
        lines += [f"* {rn} = {tag}" for rn, tag in zip(row_names, lp.row_tags)]
    if lp.col_tags:
        lines += [f"* {cn} = {tag}" for cn, tag in zip(col_names, lp.col_tags)]
    lines.append(f"NAME          {name}")
    lines.append("ROWS")
    lines.append(" N  COST")
    for i, rn in enumerate(row_names):
        sense = "E" if i < lp.n_eq else "G"
        lines.append(f" {sense}  {rn}")

    lines.append("COLUMNS")
    in_integer = False
    marker = 0
    for j, cn in enumerate(col_names):
        integral = bool(model.integrality[j])
        if integral and not in_integer:
            marker += 1
            lines.append(f"    M{marker:07d}  'MARKER'                 'INTORG'")
            in_integer = True
        elif not integral and in_integer:
            marker += 1
            lines.append(f"    M{marker:07d}  'MARKER'                 'INTEND'")
            in_integer = False
        entries = []
        if lp.cost[j] != 0.0:
            entries.append(("COST", lp.cost[j]))
        sl = slice(csc.indptr[j], csc.indptr[j + 1])
        for i, val in zip(csc.indices[sl], csc.data[sl]):
            entries.append((row_names[i], float(val)))
        for k in range(0, len(entries), 2):
            chunk = entries[k:k + 2]
            parts = [f"    {cn:<10}"]
            for rname, val in chunk:
                parts.append(f"{rname:<10}{_field(val):<12}")
            lines.append("  ".join(parts).rstrip())
    if in_integer:
        marker += 1
        lines.append(f"    M{marker:07d}  'MARKER'                 'INTEND'")

    lines.append("RHS")
    rhs_entries = [(row_names[i], float(lp.rhs[i]))
                   for i in range(lp.n_rows) if lp.rhs[i] != 0.0]
    if lp.offset != 0.0:
        rhs_entries.append(("COST", -lp.offset))
    for k in range(0, len(rhs_entries), 2):
        chunk = rhs_entries[k:k + 2]
        parts = ["    RHS       "]
        for rname, val in chunk:
            parts.append(f"{rname:<10}{_field(val):<12}")
        lines.append("  ".join(parts).rstrip())

    lines.append("BOUNDS")
    for j, cn in enumerate(col_names):
        lo, up = lp.lower[j], lp.upper[j]
        if lo == up:
            lines.append(f" FX BND       {cn:<10}{_field(lo)}")
            continue
        if np.isfinite(lo) and lo != 0.0:
            lines.append(f" LO BND       {cn:<10}{_field(lo)}")
        elif not np.isfinite(lo):
            lines.append(f" MI BND       {cn:<10}")
        if np.isfinite(up):
            lines.append(f" UP BND       {cn:<10}{_field(up)}")
    lines.append("ENDATA")

    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")
