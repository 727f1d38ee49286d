"""Small dense matrix kernel: spectra, definiteness, Lyapunov equations."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "Spectrum", "SingularSystemError", "as_matrix", "eigenvalues", "is_symmetric",
    "is_positive_definite", "cholesky_pivots", "solve_lyapunov", "max_abs",
]


class SingularSystemError(np.linalg.LinAlgError):
    """The Lyapunov operator is singular (A and -A^T share an eigenvalue)."""


def as_matrix(M, name="matrix") -> np.ndarray:
    """Coerce to a finite 2-D float array."""
    M = np.array(M, dtype=float)
    if M.ndim == 1:
        M = M.reshape(1, -1)
    if M.ndim != 2:
        raise ValueError(f"{name} must be two-dimensional")
    if not np.all(np.isfinite(M)):
        raise ValueError(f"{name} has non-finite entries")
    return M


def _square(M, name="matrix"):
    M = as_matrix(M, name)
    if M.shape[0] != M.shape[1]:
        raise ValueError(f"{name} must be square, got shape {M.shape}")
    return M


def max_abs(M) -> float:
    M = np.asarray(M)
    return float(np.max(np.abs(M))) if M.size else 0.0


@dataclass(frozen=True)
class Spectrum:
    values: tuple[complex, ...]

    @property
    def max_real(self) -> float:
        return max(v.real for v in self.values)

    def __len__(self):
        return len(self.values)

    def __iter__(self):
        return iter(self.values)


def eigenvalues(A) -> Spectrum:
    """Eigenvalues of a square matrix, sorted by decreasing real part.

    Conjugate pairs of a real matrix are snapped to exact conjugates.
    """
    A = _square(A, "A")
    lam = np.linalg.eigvals(A)
    # LAPACK already pairs conjugates for real input; enforce exact symmetry
    out = []
    for v in lam:
        v = complex(v)
        if abs(v.imag) <= 1e-12 * (1.0 + abs(v.real)):
            v = complex(v.real, 0.0)
        out.append(v)
    out.sort(key=lambda z: (-z.real, -z.imag))
    return Spectrum(tuple(out))


def is_symmetric(M, rtol: float = 1e-12) -> bool:
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        return False
    return max_abs(M - M.T) <= rtol * max(max_abs(M), 1e-300)


def cholesky_pivots(P) -> np.ndarray:
    """Pivots d_k of the LDL^T factorisation without pivoting.

    All pivots positive <=> P positive definite.  Elimination stops at the
    first non-positive pivot; remaining entries are ``-inf``.
    """
    P = _square(P, "P")
    n = P.shape[0]
    L = np.eye(n)
    d = np.full(n, -np.inf)
    for k in range(n):
        dk = P[k, k] - np.dot(L[k, :k] ** 2, d[:k])
        d[k] = dk
        if dk <= 0.0:
            break
        for i in range(k + 1, n):
            L[i, k] = (P[i, k] - np.dot(L[i, :k] * L[k, :k], d[:k])) / dk
    return d


def is_positive_definite(P, tol: float = 0.0) -> bool:
    """True iff ``P`` is symmetric and every Cholesky pivot exceeds ``tol``."""
    P = np.asarray(P, dtype=float)
    if not is_symmetric(P):
        return False
    return bool(np.all(cholesky_pivots(P) > tol))


def solve_lyapunov(A, Q) -> np.ndarray:
    """Solve ``A^T P + P A = -Q`` through the vectorised ``n^2`` system.

    ``(I kron A^T + A^T kron I) vec(P) = -vec(Q)`` with column-major vec.
    Intended for n <= 10.

    Raises
    ------
    SingularSystemError
        If some pair of eigenvalues satisfies ``l_i + l_j = 0``.
    """
    A = _square(A, "A")
    Q = _square(Q, "Q")
    n = A.shape[0]
    if Q.shape != A.shape:
        raise ValueError("A and Q must have the same shape")
    if not is_symmetric(Q, 1e-10):
        raise ValueError("Q must be symmetric")
    lam = np.linalg.eigvals(A)
    gap = np.min(np.abs(lam[:, None] + lam[None, :]))
    scale = max(1.0, max_abs(A))
    if gap <= 1e-10 * scale:
        raise SingularSystemError(
            f"Lyapunov operator singular: eigenvalues of A sum to {gap:.3g} ~ 0")
    eye = np.eye(n)
    op = np.kron(eye, A.T) + np.kron(A.T, eye)
    vecP = np.linalg.solve(op, -Q.reshape(-1, order="F"))
    P = vecP.reshape((n, n), order="F")
    return 0.5 * (P + P.T)
