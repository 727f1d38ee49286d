"""Matrix inequalities for linear systems ``dx/dt = A x``.

All supported conditions have the form ``M(A, P) < 0`` with ``M``
symmetric; the trace-weighted ones reduce to a plain Lyapunov inequality
for a shifted matrix, which gives exact feasibility tests without an SDP
solver.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Optional

import numpy as np

from .linalg import (SingularSystemError, as_matrix, eigenvalues, is_positive_definite,
                     is_symmetric, max_abs, solve_lyapunov)

__all__ = [
    "Mode", "LinearCondition", "TriState", "ConditionReport", "Stability",
    "slack_matrix", "check_linear_condition", "shifted_matrix", "find_certificate",
    "CertificateSearch", "linear_ground_truth", "classify_slack",
]


class Mode(str, Enum):
    RANTZER_EQ7 = "RANTZER_EQ7"   # A^T P + P A < alpha^-1 tr(A) P
    EQ07 = "EQ07"                 # A^T P + P A + alpha^-1 tr(A) P < 0
    THEOREM7 = "THEOREM7"         # A^T P + P A - kappa tr(A) P < 0
    COROLLARY1 = "COROLLARY1"     # A^T P + P A + gamma P < 0


@dataclass(frozen=True)
class LinearCondition:
    mode: Mode
    value: float

    def __post_init__(self):
        mode = Mode(self.mode)
        object.__setattr__(self, "mode", mode)
        if mode in (Mode.RANTZER_EQ7, Mode.EQ07) and not self.value > 0:
            raise ValueError("alpha must be positive")
        if mode is Mode.THEOREM7 and self.value < 0:
            raise ValueError("kappa must be non-negative")
        if mode is Mode.COROLLARY1 and not self.value > 0:
            raise ValueError("gamma must be positive")

    @classmethod
    def rantzer(cls, alpha):
        return cls(Mode.RANTZER_EQ7, alpha)

    @classmethod
    def eq07(cls, alpha):
        return cls(Mode.EQ07, alpha)

    @classmethod
    def theorem7(cls, kappa):
        return cls(Mode.THEOREM7, kappa)

    @classmethod
    def corollary1(cls, gamma):
        return cls(Mode.COROLLARY1, gamma)

    @property
    def parameter_name(self) -> str:
        return {Mode.RANTZER_EQ7: "alpha", Mode.EQ07: "alpha",
                Mode.THEOREM7: "kappa", Mode.COROLLARY1: "gamma"}[self.mode]

    def __str__(self):
        return f"{self.mode.value}({self.parameter_name}={self.value:g})"


class TriState(str, Enum):
    SATISFIED_STRICT = "SATISFIED_STRICT"
    BOUNDARY = "BOUNDARY"
    VIOLATED = "VIOLATED"


class Stability(str, Enum):
    STABLE = "STABLE"
    MARGINAL = "MARGINAL"
    UNSTABLE = "UNSTABLE"


@dataclass
class ConditionReport:
    condition: LinearCondition
    state: TriState
    max_eig: float
    min_eig: float
    slack: np.ndarray = field(repr=False)
    tol: float = 0.0
    p_positive_definite: bool = False
    trace: float = 0.0
    side_condition_ok: Optional[bool] = None

    @property
    def certifies(self) -> bool:
        """Strictly satisfied, P PD, and side condition met (where relevant)."""
        return (self.state is TriState.SATISFIED_STRICT and self.p_positive_definite
                and self.side_condition_ok is not False)


def slack_matrix(A, P, cond: LinearCondition) -> np.ndarray:
    """Symmetric matrix required to be negative definite by ``cond``."""
    A = as_matrix(A, "A")
    P = as_matrix(P, "P")
    if A.shape[0] != A.shape[1] or P.shape != A.shape:
        raise ValueError(f"dimension mismatch: A {A.shape}, P {P.shape}")
    lyap = A.T @ P + P @ A
    tr = float(np.trace(A))
    if cond.mode is Mode.RANTZER_EQ7:
        M = lyap - (tr / cond.value) * P
    elif cond.mode is Mode.EQ07:
        M = lyap + (tr / cond.value) * P
    elif cond.mode is Mode.THEOREM7:
        M = lyap - cond.value * tr * P
    else:
        M = lyap + cond.value * P
    return 0.5 * (M + M.T)


def classify_slack(M: np.ndarray) -> tuple[TriState, float, float, float]:
    lam = np.linalg.eigvalsh(M)
    tol = 1e-9 * (1.0 + max_abs(M))
    top = float(lam[-1])
    if top < -tol:
        state = TriState.SATISFIED_STRICT
    elif top <= tol:
        state = TriState.BOUNDARY
    else:
        state = TriState.VIOLATED
    return state, top, float(lam[0]), tol


def check_linear_condition(A, P, cond: LinearCondition) -> ConditionReport:
    """Classify ``cond`` for the pair ``(A, P)``.

    ``P`` must be symmetric but need not be positive definite; its
    definiteness is reported alongside.  For THEOREM7 with ``kappa > 0`` the
    side condition ``trace(A) <= 0`` is reported in ``side_condition_ok``.
    """
    P = as_matrix(P, "P")
    if not is_symmetric(P, 1e-9):
        raise ValueError("P must be symmetric")
    M = slack_matrix(A, P, cond)
    state, top, bottom, tol = classify_slack(M)
    tr = float(np.trace(as_matrix(A)))
    side = None
    if cond.mode is Mode.THEOREM7 and cond.value > 0:
        side = tr <= 0.0
    return ConditionReport(cond, state, top, bottom, M, tol,
                           is_positive_definite(P), tr, side)


def shifted_matrix(A, cond: LinearCondition) -> np.ndarray:
    """``A_s`` with ``A_s^T P + P A_s`` equal to the condition's slack."""
    A = as_matrix(A, "A")
    n = A.shape[0]
    if cond.mode is Mode.THEOREM7:
        return A - 0.5 * cond.value * np.trace(A) * np.eye(n)
    if cond.mode is Mode.COROLLARY1:
        return A + 0.5 * cond.value * np.eye(n)
    raise ValueError(f"no certificate search for {cond.mode.value}")


@dataclass
class CertificateSearch:
    P: Optional[np.ndarray]
    shifted_max_real: float
    reason: str = ""

    @property
    def found(self) -> bool:
        return self.P is not None


def find_certificate(A, cond: LinearCondition) -> CertificateSearch:
    """Search a positive definite ``P`` satisfying ``cond`` strictly.

    Feasible iff the shifted matrix is Hurwitz (and, for THEOREM7 with
    ``kappa > 0``, ``trace(A) <= 0``); then ``P`` solves the Lyapunov
    equation of the shifted matrix with right-hand side ``I``.
    """
    A = as_matrix(A, "A")
    As = shifted_matrix(A, cond)
    top = eigenvalues(As).max_real
    if cond.mode is Mode.THEOREM7 and cond.value > 0 and np.trace(A) > 0:
        return CertificateSearch(None, top, "trace(A) > 0 violates the side condition")
    if top >= 0:
        return CertificateSearch(None, top, "shifted matrix is not Hurwitz")
    try:
        P = solve_lyapunov(As, np.eye(A.shape[0]))
    except SingularSystemError as err:  # pragma: no cover - excluded by the Hurwitz test
        return CertificateSearch(None, top, str(err))
    report = check_linear_condition(A, P, cond)
    if not report.certifies:
        return CertificateSearch(None, top, f"numerical re-check failed: {report.state.value}")
    return CertificateSearch(P, top)


def linear_ground_truth(A, tol: float = 1e-9) -> Stability:
    """Eigenvalue verdict for ``dx/dt = A x``.

    MARGINAL means the largest real part is within ``tol`` of zero.
    """
    top = eigenvalues(A).max_real
    if top > tol:
        return Stability.UNSTABLE
    if top >= -tol:
        return Stability.MARGINAL
    return Stability.STABLE
