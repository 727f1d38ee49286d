"""State-feedback synthesis ``u = K x`` and closed-loop verification."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .linalg import Spectrum, as_matrix, eigenvalues, solve_lyapunov
from .lincheck import (ConditionReport, LinearCondition, Mode, Stability, TriState,
                       check_linear_condition, find_certificate, linear_ground_truth)

__all__ = [
    "SynthesisError", "UncontrollableError", "SynthesisResult", "ClosedLoopReport",
    "controllability_matrix", "is_controllable", "acker", "default_poles",
    "synthesize_state_feedback", "verify_closed_loop",
]


class SynthesisError(RuntimeError):
    pass


class UncontrollableError(SynthesisError):
    pass


def controllability_matrix(A, B) -> np.ndarray:
    A = as_matrix(A, "A")
    B = as_matrix(B, "B")
    if B.shape[0] != A.shape[0] and B.shape[1] == A.shape[0]:
        B = B.T
    blocks = [B]
    for _ in range(A.shape[0] - 1):
        blocks.append(A @ blocks[-1])
    return np.hstack(blocks)


def is_controllable(A, B, tol: Optional[float] = None) -> bool:
    C = controllability_matrix(A, B)
    return np.linalg.matrix_rank(C, tol) == C.shape[0]


def acker(A, b, poles: Sequence[complex]) -> np.ndarray:
    """Single-input pole placement; returns ``K`` (1 x n) with eig(A + b K) = poles.

    Ackermann's formula on the controllability matrix, i.e. coefficient
    matching in controllable canonical form.
    """
    A = as_matrix(A, "A")
    b = as_matrix(b, "b").reshape(-1, 1)
    n = A.shape[0]
    if len(poles) != n:
        raise ValueError(f"need {n} poles, got {len(poles)}")
    C = controllability_matrix(A, b)
    if np.linalg.matrix_rank(C) < n:
        raise UncontrollableError("(A, b) is not controllable")
    coeffs = np.real(np.poly(poles))
    phi = np.zeros_like(A)
    for c in coeffs:
        phi = phi @ A + c * np.eye(n)
    last = np.linalg.solve(C.T, np.eye(n)[:, -1])
    return -(last @ phi).reshape(1, n)


def default_poles(n: int, gamma: float) -> list[float]:
    """Distinct real poles ``-gamma/2 - 1 - j``, j = 0..n-1."""
    return [-0.5 * gamma - 1.0 - j for j in range(n)]


@dataclass
class SynthesisResult:
    K: np.ndarray
    P: np.ndarray
    spectrum: Spectrum
    condition: LinearCondition
    report: ConditionReport


def synthesize_state_feedback(A, B, gamma: float, poles: Optional[Sequence[float]] = None,
                              seed: int = 0, max_tries: int = 20) -> SynthesisResult:
    """Gain ``K`` with every eigenvalue of ``A + B K`` left of ``-gamma/2``.

    The certificate is ``P = lyap(A + B K + gamma/2 I, I)``, re-verified
    against ``(A+BK)^T P + P (A+BK) + gamma P < 0``.  Multi-input pairs are
    reduced to single input through a random combination ``B v`` after a
    random pre-feedback ``K0`` (seeded, retried on failure).
    """
    A = as_matrix(A, "A")
    B = as_matrix(B, "B")
    n = A.shape[0]
    if B.shape[0] != n:
        if B.shape[1] == n and B.shape[0] == 1:
            B = B.T
        else:
            raise ValueError(f"B must have {n} rows")
    if not gamma > 0:
        raise ValueError("gamma must be positive")
    if not is_controllable(A, B):
        raise UncontrollableError("(A, B) is not controllable")
    poles = list(default_poles(n, gamma) if poles is None else poles)
    if max(np.real(poles)) >= -0.5 * gamma:
        raise ValueError("target poles must lie left of -gamma/2")
    m = B.shape[1]
    rng = np.random.default_rng(seed)
    cond = LinearCondition(Mode.COROLLARY1, gamma)
    last_err = "no attempt"
    for attempt in range(max_tries):
        v = np.ones((1, 1)) if m == 1 else rng.standard_normal((m, 1))
        b = B @ v
        # a random pre-feedback makes A + B K0 cyclic when A itself is not
        K0 = np.zeros((m, n)) if attempt == 0 or m == 1 else rng.standard_normal((m, n))
        A0 = A + B @ K0
        if not is_controllable(A0, b):
            last_err = "random input combination not controllable"
            continue
        K = K0 + v @ acker(A0, b, poles)
        Acl = A + B @ K
        spec = eigenvalues(Acl)
        if not spec.max_real < -0.5 * gamma - 1e-9:
            last_err = f"placed spectrum has max real part {spec.max_real:.3g}"
            continue
        P = solve_lyapunov(Acl + 0.5 * gamma * np.eye(n), np.eye(n))
        report = check_linear_condition(Acl, P, cond)
        if report.certifies:
            return SynthesisResult(K, P, spec, cond, report)
        last_err = f"certificate re-check {report.state.value}"
    raise SynthesisError(f"synthesis failed after {max_tries} attempts: {last_err}")


@dataclass
class ClosedLoopReport:
    condition: LinearCondition
    report: Optional[ConditionReport]
    P: Optional[np.ndarray]
    P_searched: bool
    spectrum: Spectrum
    ground_truth: Stability
    note: str = ""

    @property
    def satisfied(self) -> bool:
        return self.report is not None and self.report.state is TriState.SATISFIED_STRICT

    @property
    def unsound(self) -> bool:
        """The inequality holds although the closed loop is not stable."""
        return self.satisfied and self.ground_truth is not Stability.STABLE


def verify_closed_loop(A, B, K, cond: LinearCondition, P=None) -> ClosedLoopReport:
    """Check ``cond`` for ``A + B K`` and compare with its eigenvalues.

    Without ``P`` a certificate is searched (THEOREM7 / COROLLARY1 only).
    """
    A = as_matrix(A, "A")
    B = as_matrix(B, "B")
    K = as_matrix(K, "K")
    n = A.shape[0]
    if B.shape[0] != n or K.shape != (B.shape[1], n):
        raise ValueError(f"dimension mismatch: A {A.shape}, B {B.shape}, K {K.shape}")
    Acl = A + B @ K
    spec = eigenvalues(Acl)
    truth = linear_ground_truth(Acl)
    if P is not None:
        report = check_linear_condition(Acl, P, cond)
        return ClosedLoopReport(cond, report, as_matrix(P), False, spec, truth)
    if cond.mode not in (Mode.THEOREM7, Mode.COROLLARY1):
        raise ValueError(f"{cond.mode.value} needs a user-supplied P")
    found = find_certificate(Acl, cond)
    if not found.found:
        return ClosedLoopReport(cond, None, None, True, spec, truth,
                                f"infeasible: {found.reason}")
    report = check_linear_condition(Acl, found.P, cond)
    return ClosedLoopReport(cond, report, found.P, True, spec, truth)
