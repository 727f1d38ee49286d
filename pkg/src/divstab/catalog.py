"""Built-in systems and matrices used by ``divstab reproduce``."""

import numpy as np

from .expr import VectorField


def damped_oscillator(c: float = 1.0) -> VectorField:
    """x1' = x2, x2' = -c x1 - x1^2 x2 - x2^3 (stable for c = 1, saddle for c = -1)."""
    return VectorField.parse(["x2", f"-({float(c)!r})*x1 - x1^2*x2 - x2^3"])


def partially_stable(b: float = 0.1) -> VectorField:
    """x1' = -x1, x2' = b x2 - x1^2 x2: x1 -> 0 while x2 grows."""
    return VectorField.parse(["-x1", f"({float(b)!r})*x2 - x1^2*x2"])


def two_equilibria() -> VectorField:
    """Equilibria at (0, 0) and (1, 0)."""
    return VectorField.parse(["-x1 + x1^2 - x2^2", "-x2 + 2*x1*x2"])


def cubic_3d() -> VectorField:
    """Rotation in (x1, x2) damped by x3^2; x3' = -2 x3^3."""
    return VectorField.parse(["x2 - 2*x1*x3^2", "-x1 - 2*x2*x3^2", "-2*x3^3"])


def linear_field(A) -> VectorField:
    A = np.asarray(A, dtype=float)
    n = A.shape[0]
    comps = []
    for i in range(n):
        terms = [f"({float(A[i, j])!r})*x{j + 1}" for j in range(n) if A[i, j] != 0.0]
        comps.append(" + ".join(terms) if terms else "0")
    return VectorField.parse(comps)


# unstable matrix with a positive definite solution of the trace-weighted inequality
A_UNSTABLE = np.array([[0.0, 1.0], [1.0, 1.0]])
P_UNSTABLE = np.array([[0.6, 0.3], [0.3, 0.9]])
ALPHA_UNSTABLE = 0.2

# Hurwitz matrix with a negative definite boundary solution
A_HURWITZ = np.array([[0.0, 1.0], [-1.0, -1.0]])
P_NOT_PD = np.array([[-1.5, -0.75], [-0.75, -1.5]])
ALPHA_NOT_PD = 1.0

# feedback design that satisfies the trace-weighted inequality but does not stabilise
B_SYNTH = np.array([[0.0], [1.0]])
K_FAILED = np.array([[-0.7082, -2.2651]])
P_FAILED = np.array([[0.7712, 0.3508], [0.3508, 1.122]])
ALPHA_FAILED = 1.0
