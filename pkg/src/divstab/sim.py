"""Fixed-step RK4 trajectories, classification and phase-portrait CSVs."""

from __future__ import annotations

import csv
import math
import os
from dataclasses import dataclass
from enum import Enum
from typing import Sequence

import numpy as np

from .expr import DomainError, VectorField

__all__ = [
    "Trajectory", "TrajectoryClass", "Label", "integrate_rk4", "classify_trajectory",
    "phase_portrait", "write_trajectory_csv", "write_manifest_csv", "circle_points",
]

DELTA_C = 1e-8
R_ESC = 1e6


@dataclass
class Trajectory:
    dt: float
    T: float
    t: np.ndarray        # (k,)
    x: np.ndarray        # (k, n)
    reason: str          # "horizon" | "escape" | "converged" | "domain-error"
    error: str = ""

    @property
    def final(self) -> np.ndarray:
        return self.x[-1]

    @property
    def norms(self) -> np.ndarray:
        return np.linalg.norm(self.x, axis=1)


class Label(str, Enum):
    CONVERGED = "CONVERGED"
    DIVERGED = "DIVERGED"
    BOUNDED = "BOUNDED"


@dataclass(frozen=True)
class TrajectoryClass:
    label: Label
    basis: str           # "threshold" or "trend"
    delta_c: float
    R_esc: float
    final_norm: float
    tail_slope: float

    def __str__(self):
        return self.label.value


def integrate_rk4(F: VectorField, x0: Sequence[float], dt: float = 1e-3, T: float = 50.0,
                  R_esc: float = R_ESC, delta_c: float = DELTA_C) -> Trajectory:
    """Classical RK4 with fixed step ``dt`` up to ``T``.

    Stops early once ``|x| >= R_esc`` (or the state overflows), once
    ``|x| <= delta_c``, or on an evaluation domain error.
    """
    if not dt > 0:
        raise ValueError("dt must be positive")
    if T < dt:
        raise ValueError("T must be at least dt")
    n = F.dim
    x = tuple(float(v) for v in x0)
    if len(x) != n:
        raise ValueError(f"x0 has {len(x)} coordinates, expected {n}")
    f = F.scalar
    steps = int(round(T / dt))
    ts = [0.0]
    xs = [x]
    reason, error = "horizon", ""
    h2 = 0.5 * dt
    h6 = dt / 6.0
    r0 = math.sqrt(sum(v * v for v in x))
    if r0 <= delta_c and any(v != 0.0 for v in f(x)):
        pass  # start inside the ball but not at rest: keep integrating
    for k in range(1, steps + 1):
        try:
            k1 = f(x)
            k2 = f(tuple(a + h2 * b for a, b in zip(x, k1)))
            k3 = f(tuple(a + h2 * b for a, b in zip(x, k2)))
            k4 = f(tuple(a + dt * b for a, b in zip(x, k3)))
        except DomainError as err:
            reason, error = "domain-error", str(err)
            break
        x = tuple(a + h6 * (p + 2.0 * q + 2.0 * r + s)
                  for a, p, q, r, s in zip(x, k1, k2, k3, k4))
        r = math.sqrt(sum(v * v for v in x)) if all(map(math.isfinite, x)) else math.inf
        if not math.isfinite(r):
            reason = "escape"
            break
        ts.append(k * dt)
        xs.append(x)
        if r >= R_esc:
            reason = "escape"
            break
        if r <= delta_c and r > 0.0:
            reason = "converged"
            break
    return Trajectory(dt, T, np.array(ts), np.array(xs, dtype=float).reshape(len(xs), n),
                      reason, error)


def _tail_trend(tr: Trajectory):
    """Log-log slope of |x| against t over the second half, and monotonicity."""
    t, r = tr.t, tr.norms
    tail = t >= 0.5 * t[-1]
    tail &= t > 0
    if tail.sum() < 3 or np.any(r[tail] <= 0):
        return 0.0, False, False
    slope = float(np.polyfit(np.log(t[tail]), np.log(r[tail]), 1)[0])
    d = np.diff(r[tail])
    slack = 1e-12 * r[tail][:-1]
    return slope, bool(np.all(d <= slack)), bool(np.all(d >= -slack))


def classify_trajectory(tr: Trajectory, delta_c: float = DELTA_C, R_esc: float = R_ESC,
                        trend_slope: float = 0.25) -> TrajectoryClass:
    """CONVERGED / DIVERGED / BOUNDED.

    Hard thresholds decide first: final ``|x| <= delta_c`` converges, any
    ``|x| >= R_esc`` (or an overflow) diverges.  Otherwise the tail trend is
    used: ``|x|`` monotone over the second half of the run with log-log
    slope ``<= -trend_slope`` (resp. ``>= +trend_slope``) counts as
    converging (resp. diverging) at a power rate.  ``trend_slope = inf``
    disables the trend rule.
    """
    if not 0 < delta_c < R_esc:
        raise ValueError("need 0 < delta_c < R_esc")
    norms = tr.norms
    final = float(norms[-1])
    slope, decreasing, increasing = _tail_trend(tr)

    def make(label, basis):
        return TrajectoryClass(label, basis, delta_c, R_esc, final, slope)

    if tr.reason == "escape" or norms.max() >= R_esc:
        return make(Label.DIVERGED, "threshold")
    if final <= delta_c:
        return make(Label.CONVERGED, "threshold")
    if decreasing and slope <= -trend_slope:
        return make(Label.CONVERGED, "trend")
    if increasing and slope >= trend_slope:
        return make(Label.DIVERGED, "trend")
    return make(Label.BOUNDED, "threshold")


def phase_portrait(F: VectorField, grid: Sequence[Sequence[float]], dt: float = 1e-3,
                   T: float = 50.0, delta_c: float = DELTA_C, R_esc: float = R_ESC,
                   trend_slope: float = 0.25) -> list[tuple[Trajectory, TrajectoryClass]]:
    """One classified trajectory per initial point, in input order."""
    out = []
    for x0 in grid:
        tr = integrate_rk4(F, x0, dt, T, R_esc, delta_c)
        out.append((tr, classify_trajectory(tr, delta_c, R_esc, trend_slope)))
    return out


def circle_points(count: int, radius: float, n: int = 2) -> list[tuple[float, ...]]:
    """``count`` equally spaced points on a circle in the (x1, x2) plane."""
    pts = []
    for k in range(count):
        a = 2.0 * math.pi * k / count
        p = [0.0] * n
        p[0], p[1] = radius * math.cos(a), radius * math.sin(a)
        pts.append(tuple(p))
    return pts


def write_trajectory_csv(tr: Trajectory, path: str | os.PathLike) -> None:
    """``t,x1,...,xn`` with one row per step."""
    n = tr.x.shape[1]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t"] + [f"x{i + 1}" for i in range(n)])
        for t, x in zip(tr.t, tr.x):
            w.writerow([repr(float(t))] + [repr(float(v)) for v in x])


def write_manifest_csv(results, grid, path: str | os.PathLike) -> None:
    """``index,x0_1..x0_n,class,t_final`` for a phase portrait."""
    n = len(grid[0]) if grid else 0
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["index"] + [f"x0_{i + 1}" for i in range(n)] + ["class", "t_final"])
        for idx, ((tr, cls), x0) in enumerate(zip(results, grid)):
            w.writerow([idx] + [repr(float(v)) for v in x0] + [cls.label.value, repr(float(tr.t[-1]))])
