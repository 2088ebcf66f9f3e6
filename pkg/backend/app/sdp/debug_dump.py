from __future__ import annotations

from pathlib import Path
from typing import List

import numpy as np

from app.sdp.problem import SdpProblem

_ZERO = 1e-15


def _format(value: float) -> str:
    return f"{value:.17g}"


def dump_problem(problem: SdpProblem) -> str:
    """Sparse text rendering of `problem`; upper triangles only, zeros omitted."""
    lines: List[str] = [f"SDP {problem.name}"]
    for variable in problem.scalar_vars.values():
        flags = []
        if variable.strictly_positive:
            flags.append("strict")
        if variable.binary:
            flags.append("binary")
        upper = "inf" if variable.upper is None else _format(variable.upper)
        lines.append(f"SCALAR {variable.name} {_format(variable.lower)} {upper} {','.join(flags) or '-'}")
    for variable in problem.matrix_vars.values():
        lines.append(f"MATRIX {variable.name} {variable.size} {'diagonal' if variable.diagonal else 'full'}")

    terms = " ".join(f"{name} {_format(coef)}" for name, coef in problem.objective.items())
    lines.append(f"OBJECTIVE {_format(problem.objective_constant)} {terms}".rstrip())

    for row in problem.linear_constraints:
        terms = " ".join(f"{name} {_format(coef)}" for name, coef in row.coefficients.items())
        lines.append(f"LINEAR {row.name} {_format(row.constant)} {terms}".rstrip())

    for lmi in problem.lmi_constraints:
        lines.append(f"LMI {lmi.name} size {lmi.size}")
        for row, col in zip(*np.triu_indices(lmi.size)):
            value = lmi.constant[row, col]
            if abs(value) > _ZERO:
                lines.append(f"{row} {col} CONST {_format(value)}")
        for term in lmi.scalar_terms:
            for row, col in zip(*np.triu_indices(lmi.size)):
                value = term.coefficient[row, col]
                if abs(value) > _ZERO:
                    lines.append(f"{row} {col} {term.variable} {_format(value)}")
        for term in lmi.congruence_terms:
            size = term.left.shape[0]
            diagonal = problem.matrix_vars[term.variable].diagonal
            # Coefficient of the symmetric entry X[i, j] (i <= j) in block entry (row, col).
            for i, j in zip(*np.triu_indices(size)):
                if diagonal and i != j:
                    continue
                unit = np.zeros((size, size))
                unit[i, j] = unit[j, i] = 1.0
                product = term.left.T @ unit @ term.right
                block = product + product.T
                for row, col in zip(*np.triu_indices(lmi.size)):
                    value = block[row, col]
                    if abs(value) > _ZERO:
                        lines.append(f"{row} {col} {term.variable}[{i},{j}] {_format(value)}")
    return "\n".join(lines) + "\n"


def write_problem_dump(problem: SdpProblem, path: str | Path) -> Path:
    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    target.write_text(dump_problem(problem), encoding="utf-8")
    return target
