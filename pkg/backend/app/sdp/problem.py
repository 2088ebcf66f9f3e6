from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Dict, List, Mapping, Tuple

import numpy as np

SYMMETRY_TOLERANCE = 1e-10


@dataclass(frozen=True)
class ScalarVariable:
    name: str
    lower: float = 0.0
    upper: float | None = None
    strictly_positive: bool = False
    binary: bool = False


@dataclass(frozen=True)
class MatrixVariable:
    """Symmetric positive semidefinite matrix variable (positive diagonal when `diagonal`)."""

    name: str
    size: int
    diagonal: bool = False

    @property
    def free_entries(self) -> int:
        if self.diagonal:
            return self.size
        return self.size * (self.size + 1) // 2


@dataclass(frozen=True)
class ScalarTerm:
    """coefficient * x_variable, with a symmetric k x k coefficient."""

    variable: str
    coefficient: np.ndarray


@dataclass(frozen=True)
class CongruenceTerm:
    """left.T @ X @ right + right.T @ X @ left for a matrix variable X (n x n); left/right are n x k."""

    variable: str
    left: np.ndarray
    right: np.ndarray


@dataclass
class LmiConstraint:
    """constant + sum of terms, required to be negative semidefinite."""

    name: str
    constant: np.ndarray
    scalar_terms: List[ScalarTerm] = field(default_factory=list)
    congruence_terms: List[CongruenceTerm] = field(default_factory=list)

    @property
    def size(self) -> int:
        return int(self.constant.shape[0])

    def evaluate(self, values: Mapping[str, object]) -> np.ndarray:
        matrix = np.array(self.constant, dtype=float, copy=True)
        for term in self.scalar_terms:
            matrix += float(values[term.variable]) * term.coefficient
        for term in self.congruence_terms:
            variable = np.asarray(values[term.variable], dtype=float)
            product = term.left.T @ variable @ term.right
            matrix += product + product.T
        return (matrix + matrix.T) / 2.0


@dataclass
class LinearConstraint:
    """sum(coefficients[v] * x_v) + constant <= 0."""

    name: str
    coefficients: Dict[str, float]
    constant: float = 0.0

    def evaluate(self, values: Mapping[str, object]) -> float:
        return float(sum(coef * float(values[name]) for name, coef in self.coefficients.items()) + self.constant)


@dataclass
class SdpProblem:
    """Minimize a linear objective over scalar and PSD matrix variables subject to LMIs."""

    name: str = "sdp"
    scalar_vars: Dict[str, ScalarVariable] = field(default_factory=dict)
    matrix_vars: Dict[str, MatrixVariable] = field(default_factory=dict)
    objective: Dict[str, float] = field(default_factory=dict)
    objective_constant: float = 0.0
    lmi_constraints: List[LmiConstraint] = field(default_factory=list)
    linear_constraints: List[LinearConstraint] = field(default_factory=list)

    def add_scalar(
        self,
        name: str,
        *,
        lower: float = 0.0,
        upper: float | None = None,
        strictly_positive: bool = False,
        binary: bool = False,
    ) -> ScalarVariable:
        if name in self.scalar_vars or name in self.matrix_vars:
            raise ValueError(f"variable {name!r} declared twice")
        if binary:
            lower, upper = 0.0, 1.0 if upper is None else upper
        variable = ScalarVariable(name, lower, upper, strictly_positive, binary)
        self.scalar_vars[name] = variable
        return variable

    def add_matrix(self, name: str, size: int, *, diagonal: bool = False) -> MatrixVariable:
        if name in self.scalar_vars or name in self.matrix_vars:
            raise ValueError(f"variable {name!r} declared twice")
        variable = MatrixVariable(name, int(size), diagonal)
        self.matrix_vars[name] = variable
        return variable

    def add_objective(self, name: str, coefficient: float) -> None:
        self.objective[name] = self.objective.get(name, 0.0) + float(coefficient)

    def add_lmi(self, constraint: LmiConstraint) -> LmiConstraint:
        self.lmi_constraints.append(constraint)
        return constraint

    def add_linear(self, name: str, coefficients: Mapping[str, float], constant: float = 0.0) -> LinearConstraint:
        constraint = LinearConstraint(name, dict(coefficients), float(constant))
        self.linear_constraints.append(constraint)
        return constraint

    def variable_count(self) -> int:
        return len(self.scalar_vars) + sum(var.free_entries for var in self.matrix_vars.values())

    def binary_variables(self) -> List[str]:
        return [name for name, var in self.scalar_vars.items() if var.binary]

    def restricted(self, bounds: Mapping[str, Tuple[float, float]]) -> "SdpProblem":
        """Copy with tightened scalar bounds; constraint data is shared, not copied."""
        scalars = dict(self.scalar_vars)
        for name, (lower, upper) in bounds.items():
            if name not in scalars:
                raise KeyError(f"unknown scalar variable {name!r}")
            scalars[name] = replace(scalars[name], lower=float(lower), upper=float(upper))
        return replace(self, scalar_vars=scalars)

    def validate(self) -> None:
        """Raise ValueError when a referenced variable is undeclared or a block is not symmetric."""
        for name in self.objective:
            if name not in self.scalar_vars:
                raise ValueError(f"objective references undeclared scalar {name!r}")
        for constraint in self.linear_constraints:
            for name in constraint.coefficients:
                if name not in self.scalar_vars:
                    raise ValueError(f"linear constraint {constraint.name!r} references undeclared scalar {name!r}")
        for lmi in self.lmi_constraints:
            size = lmi.size
            if lmi.constant.shape != (size, size):
                raise ValueError(f"LMI {lmi.name!r} constant block is not square")
            if not np.allclose(lmi.constant, lmi.constant.T, atol=SYMMETRY_TOLERANCE, rtol=0.0):
                raise ValueError(f"LMI {lmi.name!r} constant block is not symmetric")
            for term in lmi.scalar_terms:
                if term.variable not in self.scalar_vars:
                    raise ValueError(f"LMI {lmi.name!r} references undeclared scalar {term.variable!r}")
                if term.coefficient.shape != (size, size):
                    raise ValueError(f"LMI {lmi.name!r} coefficient of {term.variable!r} has the wrong shape")
                if not np.allclose(term.coefficient, term.coefficient.T, atol=SYMMETRY_TOLERANCE, rtol=0.0):
                    raise ValueError(f"LMI {lmi.name!r} coefficient of {term.variable!r} is not symmetric")
            for term in lmi.congruence_terms:
                variable = self.matrix_vars.get(term.variable)
                if variable is None:
                    raise ValueError(f"LMI {lmi.name!r} references undeclared matrix {term.variable!r}")
                expected = (variable.size, size)
                if term.left.shape != expected or term.right.shape != expected:
                    raise ValueError(f"LMI {lmi.name!r} congruence factors of {term.variable!r} must be {expected}")


def selector(size: int, index: int) -> np.ndarray:
    """e_i e_i^T inside a size x size block."""
    block = np.zeros((size, size))
    block[index, index] = 1.0
    return block
