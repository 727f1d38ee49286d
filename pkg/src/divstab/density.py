"""Density functions rho(x) and the weighted fields rho*f, rho^-1*f."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .expr import Const, Expr, Func, VectorField, add, diff_expr, mul, power, variables, div
from .linalg import is_positive_definite, is_symmetric

__all__ = [
    "DensityFunction", "ScalarFunction", "norm_power_density", "quadratic_form_density",
    "grad_norm_density", "custom_density", "scale_field", "squared_norm",
]


@dataclass(frozen=True)
class ScalarFunction:
    """A scalar function S(x) of ``dim`` variables."""

    dim: int
    expr: Expr

    def __post_init__(self):
        if self.expr.max_var > self.dim:
            raise ValueError(f"S references x{self.expr.max_var} beyond dimension {self.dim}")

    def gradient(self) -> tuple[Expr, ...]:
        return tuple(diff_expr(self.expr, i) for i in range(1, self.dim + 1))


@dataclass(frozen=True)
class DensityFunction:
    """Symbolic density ``rho`` together with its reciprocal.

    ``family`` is one of ``"norm-power"``, ``"quadratic-form"``,
    ``"grad-norm"`` or ``"custom"``; ``params`` records the family data
    (``alpha``, ``P``, ``S``) for reports.
    """

    dim: int
    rho: Expr
    rho_inv: Expr
    family: str = "custom"
    params: dict = field(default_factory=dict, compare=False)

    def describe(self) -> str:
        bits = [self.family]
        for key in sorted(self.params):
            value = self.params[key]
            if isinstance(value, np.ndarray):
                value = "; ".join(",".join(f"{v:g}" for v in row) for row in value)
            bits.append(f"{key}={value}")
        return " ".join(bits)


def squared_norm(n: int) -> Expr:
    """``x1^2 + ... + xn^2``."""
    total = None
    for x in variables(n):
        term = power(x, Const(2.0))
        total = term if total is None else add(total, term)
    return total


def norm_power_density(alpha: float, n: int) -> DensityFunction:
    """``rho = |x|^(2 alpha)`` stored as ``(x1^2+...+xn^2)^alpha``."""
    if alpha <= 0:
        raise ValueError("alpha must be positive")
    if n < 1:
        raise ValueError("n must be >= 1")
    r2 = squared_norm(n)
    return DensityFunction(
        n, power(r2, Const(float(alpha))), power(r2, Const(-float(alpha))),
        "norm-power", {"alpha": float(alpha)},
    )


def quadratic_form(P: np.ndarray) -> Expr:
    """``x^T P x`` as an expression (P assumed symmetric)."""
    P = np.asarray(P, dtype=float)
    xs = variables(P.shape[0])
    total = Const(0.0)
    for i in range(P.shape[0]):
        if P[i, i] != 0.0:
            total = add(total, mul(Const(P[i, i]), power(xs[i], Const(2.0))))
        for j in range(i + 1, P.shape[0]):
            c = P[i, j] + P[j, i]
            if c != 0.0:
                total = add(total, mul(Const(c), mul(xs[i], xs[j])))
    return total


def quadratic_form_density(P, alpha: float) -> DensityFunction:
    """``rho = (x^T P x)^alpha`` for symmetric positive definite ``P``."""
    P = np.asarray(P, dtype=float)
    if P.ndim != 2 or P.shape[0] != P.shape[1]:
        raise ValueError("P must be square")
    if not is_symmetric(P):
        raise ValueError("P must be symmetric")
    if not is_positive_definite(P):
        raise ValueError("P must be positive definite")
    if alpha <= 0:
        raise ValueError("alpha must be positive")
    q = quadratic_form(P)
    return DensityFunction(
        P.shape[0], power(q, Const(float(alpha))), power(q, Const(-float(alpha))),
        "quadratic-form", {"alpha": float(alpha), "P": P.copy()},
    )


def _norm(vec) -> Expr:
    total = Const(0.0)
    for g in vec:
        total = add(total, power(g, Const(2.0)))
    return Func("sqrt", total)


def grad_norm_density(S: ScalarFunction) -> DensityFunction:
    """``rho = |grad S|`` and ``rho^-1``-slot ``|grad(1/S)| = |grad S| / S^2``.

    The second slot is the weight of the reciprocal-surface condition and is
    not the reciprocal of ``rho``; the square root is kept unexpanded, so a
    vanishing gradient shows up as a domain error at evaluation time.
    """
    grad_norm = _norm(S.gradient())
    inv_weight = div(grad_norm, power(S.expr, Const(2.0)))
    return DensityFunction(S.dim, grad_norm, inv_weight, "grad-norm", {"S": str(S.expr)})


def custom_density(rho: Expr, n: int, rho_inv: Optional[Expr] = None) -> DensityFunction:
    if rho.max_var > n:
        raise ValueError(f"rho references x{rho.max_var} beyond dimension {n}")
    if rho_inv is None:
        rho_inv = div(Const(1.0), rho)
    return DensityFunction(n, rho, rho_inv, "custom", {"rho": str(rho)})


def scale_field(rho_expr: Expr, F: VectorField) -> VectorField:
    """Component-wise product ``rho * F``."""
    if rho_expr.max_var > F.dim:
        raise ValueError("density references variables beyond the field dimension")
    return F.scaled(rho_expr)
