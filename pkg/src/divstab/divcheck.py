"""Sampled verification of divergence stability conditions.

Every check evaluates an exact symbolic expression (a divergence of a
weighted field, or a combination of such divergences) on a seeded,
low-discrepancy sample of an origin-centred annulus and reports a
:class:`Verdict`.  A ``HOLDS_ON_SAMPLES`` verdict only means that no
counterexample was found among the samples.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional, Sequence

import numpy as np
from scipy.special import gamma as gamma_fn
from scipy.special import ndtri
from scipy.stats import qmc

from .density import DensityFunction, ScalarFunction, grad_norm_density, scale_field
from .expr import Const, DomainError, Expr, VectorField, add, compile_batch, divergence, mul, power, sub

__all__ = [
    "Status", "Region", "CheckConfig", "LimitCheck", "Verdict", "sample_region",
    "check_sign", "check_necessary_c1", "check_necessary_c2", "check_sufficient",
    "check_theorem1", "check_closed_loop", "flux_sphere_estimate", "closed_loop_field",
    "origin_limit", "integrability_exponent",
]


class Status(str, Enum):
    HOLDS_ON_SAMPLES = "HOLDS_ON_SAMPLES"
    VIOLATED = "VIOLATED"
    INDEFINITE = "INDEFINITE"
    INCONCLUSIVE = "INCONCLUSIVE"


@dataclass(frozen=True)
class Region:
    """Annulus ``r_min <= |x| <= r_max``, optionally intersected with a box."""

    dim: int
    r_min: float = 0.1
    r_max: float = 2.0
    box: Optional[tuple[tuple[float, float], ...]] = None

    def __post_init__(self):
        if self.dim < 1:
            raise ValueError("dim must be >= 1")
        if not 0.0 < self.r_min < self.r_max:
            raise ValueError("need 0 < r_min < r_max")
        if self.box is not None and len(self.box) != self.dim:
            raise ValueError("box needs one (lo, hi) pair per coordinate")

    def contains(self, X: np.ndarray) -> np.ndarray:
        r = np.linalg.norm(X, axis=1)
        ok = (r >= self.r_min * (1 - 1e-12)) & (r <= self.r_max * (1 + 1e-12))
        if self.box is not None:
            for i, (lo, hi) in enumerate(self.box):
                ok &= (X[:, i] >= lo) & (X[:, i] <= hi)
        return ok


@dataclass(frozen=True)
class CheckConfig:
    samples: int = 2000
    tol: float = 1e-9
    seed: int = 0
    beta: float = 1.0
    # fraction of samples placed on the coordinate hyperplanes x_i = 0
    probe_fraction: float = 0.25
    limit_levels: int = 21
    limit_directions: int = 64
    limit_zero: float = 1e-6

    def __post_init__(self):
        if self.samples < 1:
            raise ValueError("samples must be >= 1")
        if self.tol < 0:
            raise ValueError("tol must be >= 0")
        if self.beta < 1:
            raise ValueError("beta must be >= 1")
        if not 0.0 <= self.probe_fraction < 1.0:
            raise ValueError("probe_fraction must be in [0, 1)")


@dataclass
class LimitCheck:
    """Mean magnitude of a quantity on spheres of shrinking radius."""

    name: str
    radii: np.ndarray
    magnitudes: np.ndarray
    is_zero: bool
    note: str = ""


@dataclass
class Verdict:
    condition: str
    status: Status
    strict: Optional[bool] = None
    witness: Optional[tuple[float, ...]] = None
    witness_value: Optional[float] = None
    min_value: float = math.nan
    max_value: float = math.nan
    mean_value: float = math.nan
    samples: int = 0
    band_count: int = 0
    band_points: np.ndarray = field(default_factory=lambda: np.empty((0, 0)), repr=False)
    limits: list = field(default_factory=list)
    integrability: Optional[dict] = None
    notes: list = field(default_factory=list)
    parts: list = field(default_factory=list, repr=False)

    @property
    def holds(self) -> bool:
        return self.status is Status.HOLDS_ON_SAMPLES

    @property
    def limits_ok(self) -> bool:
        return all(lim.is_zero for lim in self.limits)


# ---------------------------------------------------------------------------
# Sampling

def _directions(u: np.ndarray) -> np.ndarray:
    z = ndtri(np.clip(u, 1e-12, 1 - 1e-12))
    return z / np.linalg.norm(z, axis=1, keepdims=True)


def _shell_points(n, count, r_min, r_max, sampler):
    u = sampler.random(count)
    dirs = _directions(u[:, :n])
    r = (r_min ** n + u[:, n] * (r_max ** n - r_min ** n)) ** (1.0 / n)
    return dirs, r


def sample_region(region: Region, count: int, seed: int = 0,
                  probe_fraction: float = 0.25) -> np.ndarray:
    """Seeded low-discrepancy sample of ``region``.

    Directions come from a scrambled Halton sequence pushed through the
    normal quantile function; radii are uniform in volume.  A fraction of
    the points is projected onto the hyperplanes ``x_i = 0`` (one share per
    coordinate) so that equality loci and axis witnesses are probed.
    """
    n = region.dim
    sampler = qmc.Halton(d=n + 1, scramble=True, seed=seed)
    n_probe = int(count * probe_fraction) if n > 1 else 0
    n_main = count - n_probe
    chunks = []
    need = n_main
    for _ in range(50):
        if need <= 0:
            break
        dirs, r = _shell_points(n, max(need, 16) * (2 if region.box else 1),
                                region.r_min, region.r_max, sampler)
        X = dirs * r[:, None]
        X = X[region.contains(X)][:need]
        chunks.append(X)
        need -= len(X)
    per_axis = [n_probe // n + (1 if i < n_probe % n else 0) for i in range(n)]
    for i, m in enumerate(per_axis):
        need = m
        for _ in range(50):
            if need <= 0:
                break
            dirs, r = _shell_points(n, max(need, 16) * (2 if region.box else 1),
                                    region.r_min, region.r_max, sampler)
            dirs[:, i] = 0.0
            dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
            X = dirs * r[:, None]
            X = X[region.contains(X)][:need]
            chunks.append(X)
            need -= len(X)
    X = np.vstack(chunks) if chunks else np.empty((0, n))
    if len(X) == 0:
        raise ValueError("region produced no sample points (box disjoint from annulus?)")
    return X


def _sphere_directions(n, count, seed):
    sampler = qmc.Halton(d=n, scramble=True, seed=seed)
    return _directions(sampler.random(count))


# ---------------------------------------------------------------------------
# Sign classification

def _classify(values, X, sense, tol, definite_mode, label):
    """Classify sampled ``values`` against the claim ``values <sense> 0``.

    ``sense`` is -1 for "negative" claims and +1 for "positive" ones.  With
    ``definite_mode`` (necessary conditions, which ask for a sign-definite
    function) a mixture of both signs is INDEFINITE; otherwise any sample
    of the wrong sign is a violation.
    """
    v = np.asarray(values, dtype=float)
    bad = ~np.isfinite(v)
    if bad.any():
        i = int(np.argmax(bad))
        return Verdict(label, Status.INCONCLUSIVE, witness=tuple(map(float, X[i])),
                       witness_value=float(v[i]), samples=len(v),
                       notes=[f"evaluation domain error at x = {tuple(map(float, X[i]))}"])
    eps = tol * (1.0 + np.abs(v))
    s = sense * v  # positive = satisfies the claim
    right = s > eps
    wrong = s < -eps
    band = ~(right | wrong)
    stats = dict(min_value=float(v.min()), max_value=float(v.max()),
                 mean_value=float(v.mean()), samples=len(v),
                 band_count=int(band.sum()), band_points=X[band])
    if wrong.any():
        i = int(np.argmin(np.where(wrong, s, np.inf)))
        status = Status.INDEFINITE if (definite_mode and right.any()) else Status.VIOLATED
        return Verdict(label, status, witness=tuple(map(float, X[i])),
                       witness_value=float(v[i]), **stats)
    if not right.any():
        return Verdict(label, Status.INCONCLUSIVE, notes=["all samples within the tolerance band"],
                       **stats)
    strict = not band.any()
    verdict = Verdict(label, Status.HOLDS_ON_SAMPLES, strict=strict, **stats)
    if not strict:
        i = int(np.argmax(band))
        verdict.notes.append(
            f"{int(band.sum())} samples on the equality band, e.g. x = {tuple(map(float, X[i]))}")
    return verdict


def check_sign(expr: Expr, n: int, region: Region, cfg: CheckConfig, sense: int,
               label: str, definite: bool = False, X: Optional[np.ndarray] = None) -> Verdict:
    """Evaluate ``expr`` on the region sample and classify its sign."""
    if X is None:
        X = sample_region(region, cfg.samples, cfg.seed, cfg.probe_fraction)
    values = compile_batch([expr], n)(X)[:, 0]
    return _classify(values, X, sense, cfg.tol, definite, label)


# ---------------------------------------------------------------------------
# Origin behaviour

def origin_limit(expr: Expr, n: int, region: Region, cfg: CheckConfig, name: str) -> LimitCheck:
    """Mean ``|expr|`` on spheres ``r_k = 2^-k r_min``, k = 0..levels-1.

    Declared zero when the sequence is non-increasing and its last entry is
    below ``cfg.limit_zero``.
    """
    dirs = _sphere_directions(n, cfg.limit_directions, cfg.seed + 7919)
    radii = region.r_min * 2.0 ** -np.arange(cfg.limit_levels)
    f = compile_batch([expr], n)
    mags = np.array([np.mean(np.abs(f(dirs * r)[:, 0])) for r in radii])
    if not np.all(np.isfinite(mags)):
        return LimitCheck(name, radii, mags, False, "non-finite values near the origin")
    monotone = bool(np.all(np.diff(mags) <= 1e-15 + 1e-12 * mags[:-1]))
    is_zero = monotone and mags[-1] < cfg.limit_zero
    note = "" if is_zero else ("not monotonically decreasing" if not monotone
                               else f"last magnitude {mags[-1]:.3g} >= {cfg.limit_zero:g}")
    return LimitCheck(name, radii, mags, is_zero, note)


def integrability_exponent(expr: Expr, n: int, region: Region, cfg: CheckConfig) -> dict:
    """Heuristic radial growth exponent of ``|expr|`` near the origin.

    Fits ``log mean|expr| ~ p log r`` on the limit radii; ``p > -n`` suggests
    the integrand is integrable at the origin.  This is an estimate only.
    """
    lim = origin_limit(expr, n, region, cfg, "integrand")
    mags, radii = lim.magnitudes, lim.radii
    ok = np.isfinite(mags) & (mags > 0)
    if ok.sum() < 3:
        return {"exponent": math.nan, "likely_integrable": bool(np.all(mags[np.isfinite(mags)] == 0)),
                "note": "integrand vanishes or is undefined near the origin"}
    p = float(np.polyfit(np.log(radii[ok]), np.log(mags[ok]), 1)[0])
    return {"exponent": p, "likely_integrable": p > -n,
            "note": "heuristic log-log fit, not a proof"}


# ---------------------------------------------------------------------------
# Condition expressions

def _div_weighted(weight: Expr, F: VectorField) -> Expr:
    return divergence(scale_field(weight, F))


def _grad_dot(rho: Expr, F: VectorField) -> Expr:
    from .expr import diff_expr
    total = Const(0.0)
    for i, comp in enumerate(F.components, start=1):
        total = add(total, mul(diff_expr(rho, i), comp))
    return total


def _check_dims(F, rho, region):
    if F.dim != region.dim:
        raise ValueError(f"field dimension {F.dim} != region dimension {region.dim}")
    if rho is not None and rho.dim != F.dim:
        raise ValueError(f"density dimension {rho.dim} != field dimension {F.dim}")


def check_necessary_c1(F: VectorField, rho: DensityFunction, region: Region,
                       cfg: CheckConfig = CheckConfig()) -> Verdict:
    """``div(rho f) < 0`` on the region and ``div(rho f) -> 0`` at the origin."""
    _check_dims(F, rho, region)
    q = _div_weighted(rho.rho, F)
    v = check_sign(q, F.dim, region, cfg, -1, "div(rho f) < 0", definite=True)
    v.limits.append(origin_limit(q, F.dim, region, cfg, "div(rho f) at 0"))
    _strict_only(v)
    return v


def check_necessary_c2(F: VectorField, rho: DensityFunction, region: Region,
                       cfg: CheckConfig = CheckConfig()) -> Verdict:
    """``div(rho^-1 f) > 0`` on the region, plus an integrability estimate."""
    _check_dims(F, rho, region)
    q = _div_weighted(rho.rho_inv, F)
    v = check_sign(q, F.dim, region, cfg, +1, "div(rho^-1 f) > 0", definite=True)
    v.integrability = integrability_exponent(q, F.dim, region, cfg)
    return v


def _strict_only(v: Verdict):
    # necessary conditions are strict inequalities: equality samples are not a pass
    if v.status is Status.HOLDS_ON_SAMPLES and not v.strict:
        v.status = Status.INCONCLUSIVE
        v.notes.append("strict inequality required; samples on the equality band")


def _merge(label, primary: Verdict, side: Optional[Verdict]) -> Verdict:
    """Combine the main inequality with a side condition (e.g. div f <= 0)."""
    if side is None:
        primary.condition = label
        return primary
    parts = [primary, side]
    for p in parts:
        if p.status is not Status.HOLDS_ON_SAMPLES:
            out = Verdict(label, p.status, witness=p.witness, witness_value=p.witness_value,
                          min_value=primary.min_value, max_value=primary.max_value,
                          mean_value=primary.mean_value, samples=primary.samples,
                          band_count=primary.band_count, band_points=primary.band_points,
                          notes=[f"{p.condition}: {p.status.value}"] + p.notes, parts=parts)
            return out
    out = Verdict(label, Status.HOLDS_ON_SAMPLES, strict=primary.strict,
                  min_value=primary.min_value, max_value=primary.max_value,
                  mean_value=primary.mean_value, samples=primary.samples,
                  band_count=primary.band_count, band_points=primary.band_points,
                  notes=list(primary.notes), parts=parts)
    return out


def condition_expressions(F: VectorField, rho: DensityFunction, case: int, beta: float = 1.0):
    """The expressions a sufficient-condition case asks to be ``<= 0``.

    Returns ``(main, side, limits)`` where ``main`` must be non-positive
    (negative for the strict claim), ``side`` is ``div f`` when a
    ``div f <= 0`` side condition applies (else None), and ``limits`` maps
    names to expressions that must vanish at the origin.
    """
    div_rho_f = _div_weighted(rho.rho, F)
    div_f = divergence(F)
    div_inv_f = _div_weighted(rho.rho_inv, F)
    rho_sq = power(rho.rho, Const(2.0))
    if case == 1:
        main = sub(div_rho_f, mul(rho.rho, div_f))
        return main, None, {"div(rho f) at 0": div_rho_f}
    if case == 2:
        # div(rho^-1 f) >= 0 written as -div(rho^-1 f) <= 0
        main = mul(Const(-1.0), div_inv_f)
        return main, div_f, {"rho^2 div(rho^-1 f) at 0": mul(rho_sq, div_inv_f)}
    if case == 3:
        main = sub(div_rho_f, mul(Const(beta), mul(rho_sq, div_inv_f)))
        side = div_f if beta > 1.0 else None
        return main, side, {"div(rho f) at 0": div_rho_f,
                            "rho^2 div(rho^-1 f) at 0": mul(rho_sq, div_inv_f)}
    raise ValueError("case must be 1, 2 or 3")


_CASE_LABELS = {
    1: "div(rho f) <= rho div f",
    2: "div(rho^-1 f) >= 0 and div f <= 0",
    3: "div(rho f) <= beta rho^2 div(rho^-1 f)",
}


def check_sufficient(F: VectorField, rho: DensityFunction, region: Region,
                     cfg: CheckConfig = CheckConfig(), case: int = 1) -> Verdict:
    """Sampled check of one case of the sufficient divergence conditions.

    A strict ``HOLDS_ON_SAMPLES`` (``verdict.strict``) supports asymptotic
    stability; a non-strict one supports stability.  Origin limits required
    by the case are attached to ``verdict.limits``.
    """
    _check_dims(F, rho, region)
    main, side, limits = condition_expressions(F, rho, case, cfg.beta)
    X = sample_region(region, cfg.samples, cfg.seed, cfg.probe_fraction)
    label = _CASE_LABELS[case]
    if case == 3:
        label = f"div(rho f) <= {cfg.beta:g} rho^2 div(rho^-1 f)"
    primary = check_sign(main, F.dim, region, cfg, -1, label, X=X)
    side_v = None
    if side is not None:
        side_v = check_sign(side, F.dim, region, cfg, -1, "div f <= 0", X=X)
    v = _merge(label, primary, side_v)
    for name, e in limits.items():
        v.limits.append(origin_limit(e, F.dim, region, cfg, name))
    return v


def check_theorem1(F: VectorField, S: ScalarFunction, region: Region,
                   cfg: CheckConfig = CheckConfig(), case: int = 1) -> Verdict:
    """Necessary conditions built from a user function ``S``.

    Case 1 checks ``div(|grad S| f) < 0``; case 2 checks
    ``div(|grad S^-1| f) > 0``.  Non-positive ``S`` or vanishing ``grad S``
    on a sample is reported as an INCONCLUSIVE verdict with that witness.
    The requirement ``S -> inf`` at the boundary of D is not checked.
    """
    if S.dim != F.dim:
        raise ValueError("S and f have different dimensions")
    _check_dims(F, None, region)
    X = sample_region(region, cfg.samples, cfg.seed, cfg.probe_fraction)
    grads = S.gradient()
    vals = compile_batch([S.expr, *grads], S.dim)(X)
    s_vals, g = vals[:, 0], vals[:, 1:]
    gnorm = np.linalg.norm(g, axis=1)
    unchecked = "assumed, not checked: S(x) -> infinity at the boundary of D"
    label = "div(|grad S| f) < 0" if case == 1 else "div(|grad S^-1| f) > 0"
    if case not in (1, 2):
        raise ValueError("case must be 1 or 2")
    nonpos = ~(s_vals > 0)
    zero = gnorm <= cfg.tol * (1.0 + np.abs(s_vals))
    if nonpos.any() or zero.any():
        i = int(np.argmax(nonpos | zero))
        notes = []
        if nonpos[i]:
            notes.append("S is not positive at the witness")
        if zero[i]:
            notes.append("grad S vanishes at the witness")
        return Verdict(label, Status.INCONCLUSIVE, witness=tuple(map(float, X[i])),
                       witness_value=float(gnorm[i] if zero[i] else s_vals[i]),
                       samples=len(X), notes=notes + [unchecked])
    rho = grad_norm_density(S)
    if case == 1:
        q = _div_weighted(rho.rho, F)
        v = check_sign(q, F.dim, region, cfg, -1, label, definite=True, X=X)
        v.limits.append(origin_limit(q, F.dim, region, cfg, "div(|grad S| f) at 0"))
    else:
        q = _div_weighted(rho.rho_inv, F)
        v = check_sign(q, F.dim, region, cfg, +1, label, definite=True, X=X)
        v.integrability = integrability_exponent(q, F.dim, region, cfg)
    _strict_only(v)
    v.notes.append(unchecked)
    return v


def closed_loop_field(f: VectorField, g: Sequence[Sequence[Expr]], u: Sequence[Expr]) -> VectorField:
    """Symbolic ``f + g u`` for an ``n x m`` matrix ``g`` and ``m``-vector ``u``."""
    n = f.dim
    if len(g) != n:
        raise ValueError(f"g has {len(g)} rows, expected {n}")
    m = len(u)
    comps = []
    for i in range(n):
        if len(g[i]) != m:
            raise ValueError(f"row {i} of g has {len(g[i])} entries, expected {m}")
        total = f.components[i]
        for j in range(m):
            total = add(total, mul(g[i][j], u[j]))
        comps.append(total)
    return VectorField(tuple(comps))


def check_closed_loop(f: VectorField, g, u, rho: DensityFunction, region: Region,
                      cfg: CheckConfig = CheckConfig(), case: int = 1) -> Verdict:
    """Sufficient condition ``case`` for ``dx/dt = f(x) + g(x) u(x)``."""
    F = closed_loop_field(f, g, u)
    v = check_sufficient(F, rho, region, cfg, case)
    v.condition = f"closed loop: {v.condition}"
    return v


# ---------------------------------------------------------------------------
# Gauss cross-validation

def _unit_sphere_area(n):
    return 2.0 * math.pi ** (n / 2.0) / gamma_fn(n / 2.0)


def flux_sphere_estimate(F: VectorField, rho_expr: Expr, r: float,
                         cfg: CheckConfig = CheckConfig(samples=1_000_000)) -> tuple[float, float]:
    """Monte-Carlo flux of ``rho F`` through ``|x| = r`` and the volume
    integral of ``div(rho F)`` over the shell ``[1e-3 r, r]``.

    Returns ``(flux, volume_integral)``; by the divergence theorem the two
    agree up to the (small) flux through the inner sphere and sampling error.
    """
    n = F.dim
    if r <= 0:
        raise ValueError("r must be positive")
    G = scale_field(rho_expr, F)
    rng = np.random.default_rng(cfg.seed)
    N = cfg.samples
    dirs = rng.standard_normal((N, n))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    Gx = G.batch(dirs * r)
    normal_flux = np.einsum("ij,ij->i", Gx, dirs)
    area = _unit_sphere_area(n) * r ** (n - 1)
    flux = float(np.mean(normal_flux) * area)

    r0 = 1e-3 * r
    dirs2 = rng.standard_normal((N, n))
    dirs2 /= np.linalg.norm(dirs2, axis=1, keepdims=True)
    radii = (r0 ** n + rng.random(N) * (r ** n - r0 ** n)) ** (1.0 / n)
    d = compile_batch([divergence(G)], n)(dirs2 * radii[:, None])[:, 0]
    bad = ~np.isfinite(d)
    if bad.any() or not np.all(np.isfinite(normal_flux)):
        where = (dirs2 * radii[:, None])[int(np.argmax(bad))] if bad.any() else dirs[0] * r
        raise DomainError("non-finite integrand in flux estimate", where)
    volume = _unit_sphere_area(n) * (r ** n - r0 ** n) / n
    return flux, float(np.mean(d) * volume)
