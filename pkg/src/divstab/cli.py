"""Command-line front end.

    divstab analyze  --config sys.cfg [--out DIR]
    divstab linear   --config lin.cfg
    divstab synth    --config lin.cfg
    divstab simulate --config sys.cfg
    divstab reproduce {ex1,ex2,ex3,ex4,rantzer-eq7,rantzer-synth,thm7,corollary1}

Config files are INI-style with sections ``[system]``, ``[density]``,
``[check]``, ``[linear]`` and ``[simulate]``.  Matrices are written as
semicolon-separated rows (``A = 0,1; 1,1``); expressions may be quoted.
"""

from __future__ import annotations

import argparse
import configparser
import hashlib
import logging
import os
import sys
from dataclasses import replace
from typing import Optional

import numpy as np

from . import catalog
from .density import (ScalarFunction, custom_density, grad_norm_density, norm_power_density,
                      quadratic_form_density)
from .divcheck import (CheckConfig, Region, check_closed_loop, check_necessary_c1,
                       check_necessary_c2, check_sufficient, check_theorem1, flux_sphere_estimate)
from .expr import DomainError, VectorField, parse_expr
from .lincheck import (LinearCondition, Mode, check_linear_condition, find_certificate,
                       linear_ground_truth)
from .linalg import eigenvalues
from .report import Report, fmt
from .sim import (DELTA_C, R_ESC, circle_points, phase_portrait, write_manifest_csv,
                  write_trajectory_csv)
from .synth import SynthesisError, synthesize_state_feedback, verify_closed_loop

log = logging.getLogger("divstab")

REPRODUCE_CASES = ("ex1", "ex2", "ex3", "ex4", "rantzer-eq7", "rantzer-synth", "thm7",
                   "corollary1")


class ConfigError(Exception):
    pass


# ---------------------------------------------------------------------------
# Config parsing

def _unquote(s: str) -> str:
    s = s.strip()
    if len(s) >= 2 and s[0] == s[-1] and s[0] in "\"'":
        return s[1:-1]
    return s


def parse_matrix(text: str, name: str = "matrix") -> np.ndarray:
    rows = [r for r in _unquote(text).split(";") if r.strip()]
    try:
        data = [[float(v) for v in row.split(",")] for row in rows]
    except ValueError as err:
        raise ConfigError(f"{name}: {err}") from None
    if not data or len({len(r) for r in data}) != 1:
        raise ConfigError(f"{name}: rows must be non-empty and of equal length")
    return np.array(data)


def _expr_matrix(text: str, dim: int, name: str):
    rows = [r for r in _unquote(text).split(";") if r.strip()]
    out = [[parse_expr(_unquote(v), dim) for v in row.split(",")] for row in rows]
    if len({len(r) for r in out}) != 1:
        raise ConfigError(f"{name}: rows must have equal length")
    return out


def load_config(path: str) -> tuple[configparser.ConfigParser, str]:
    try:
        with open(path, "rb") as fh:
            raw = fh.read()
    except OSError as err:
        raise ConfigError(f"cannot read config {path!r}: {err.strerror}") from None
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#",))
    try:
        cp.read_string(raw.decode("utf-8"), source=path)
    except (configparser.Error, UnicodeDecodeError) as err:
        raise ConfigError(f"malformed config {path!r}: {err}") from None
    return cp, hashlib.sha256(raw).hexdigest()


def _need(cp, section):
    if not cp.has_section(section):
        raise ConfigError(f"missing [{section}] block")
    return cp[section]


def _get(sec, key, conv=str, default=None):
    if key not in sec:
        if default is None:
            raise ConfigError(f"[{sec.name}] is missing key {key!r}")
        return default
    try:
        return conv(_unquote(sec[key]))
    except ValueError as err:
        raise ConfigError(f"[{sec.name}] {key}: {err}") from None


def read_system(cp) -> tuple[VectorField, Optional[list], Optional[list]]:
    sec = _need(cp, "system")
    dim = _get(sec, "dim", int)
    if dim < 1:
        raise ConfigError("[system] dim must be >= 1")
    comps = [_get(sec, f"f{i}") for i in range(1, dim + 1)]
    F = VectorField(tuple(parse_expr(c, dim) for c in comps))
    g = u = None
    if "g" in sec:
        g = _expr_matrix(sec["g"], dim, "g")
        if len(g) != dim:
            raise ConfigError(f"[system] g must have {dim} rows")
        m = len(g[0])
        u = [parse_expr(_get(sec, f"u{j}"), dim) for j in range(1, m + 1)]
    return F, g, u


def read_density(cp, dim: int):
    sec = _need(cp, "density")
    family = _get(sec, "family", str, "norm-power")
    if family == "norm-power":
        return norm_power_density(_get(sec, "alpha", float), dim)
    if family == "quadratic-form":
        P = parse_matrix(sec["P"], "P") if "P" in sec else None
        if P is None:
            raise ConfigError("[density] quadratic-form needs P")
        try:
            return quadratic_form_density(P, _get(sec, "alpha", float))
        except ValueError as err:
            raise ConfigError(f"[density] {err}") from None
    if family == "grad-norm":
        return grad_norm_density(ScalarFunction(dim, parse_expr(_get(sec, "S"), dim)))
    if family == "custom":
        rho = parse_expr(_get(sec, "rho"), dim)
        inv = parse_expr(_get(sec, "rho_inv"), dim) if "rho_inv" in sec else None
        return custom_density(rho, dim, inv)
    raise ConfigError(f"[density] unknown family {family!r}")


def read_check(cp, dim, args) -> tuple[str, int, Region, CheckConfig, dict]:
    sec = _need(cp, "check")
    theorem = _get(sec, "theorem", str, "necessary")
    case = _get(sec, "case", int, 1)
    try:
        region = Region(dim, _get(sec, "r_min", float, 0.1), _get(sec, "r_max", float, 2.0))
        cfg = CheckConfig(samples=_get(sec, "samples", int, 2000), tol=_get(sec, "tol", float, 1e-9),
                          seed=_get(sec, "seed", int, 0), beta=_get(sec, "beta", float, 1.0))
    except ValueError as err:
        raise ConfigError(f"[check] {err}") from None
    cfg = _override(cfg, args)
    extra = {"flux_radius": _get(sec, "flux_radius", float, 1.0)}
    return theorem, case, region, cfg, extra


def _override(cfg: CheckConfig, args) -> CheckConfig:
    changes = {}
    if getattr(args, "seed", None) is not None:
        changes["seed"] = args.seed
    if getattr(args, "samples", None) is not None:
        changes["samples"] = args.samples
    if getattr(args, "tol", None) is not None:
        changes["tol"] = args.tol
    return replace(cfg, **changes) if changes else cfg


def _thresholds(cfg: CheckConfig, region: Optional[Region] = None) -> dict:
    th = {"samples": cfg.samples, "tol": cfg.tol, "beta": cfg.beta,
          "limit_levels": cfg.limit_levels, "limit_zero": cfg.limit_zero,
          "probe_fraction": cfg.probe_fraction}
    if region is not None:
        th.update(r_min=region.r_min, r_max=region.r_max)
    return th


# ---------------------------------------------------------------------------
# Subcommands

def cmd_analyze(args) -> Report:
    cp, digest = load_config(args.config)
    F, g, u = read_system(cp)
    theorem, case, region, cfg, extra = read_check(cp, F.dim, args)
    rep = Report("analyze", digest, cfg.seed, _thresholds(cfg, region))
    rep.section(f"system f = {F}")
    if theorem == "theorem1":
        sec = _need(cp, "density")
        S = ScalarFunction(F.dim, parse_expr(_get(sec, "S"), F.dim))
        rep.verdict(f"theorem1-case{case}", check_theorem1(F, S, region, cfg, case))
        return rep
    rho = read_density(cp, F.dim)
    rep.detail(f"density: {rho.describe()}")
    if theorem == "necessary":
        if case == 1:
            rep.verdict("necessary-c1", check_necessary_c1(F, rho, region, cfg))
        elif case == 2:
            rep.verdict("necessary-c2", check_necessary_c2(F, rho, region, cfg))
        else:
            raise ConfigError("[check] necessary conditions have case 1 or 2")
    elif theorem == "sufficient":
        if g is not None:
            rep.verdict(f"closed-loop-case{case}",
                        check_closed_loop(F, g, u, rho, region, cfg, case))
        else:
            rep.verdict(f"sufficient-case{case}", check_sufficient(F, rho, region, cfg, case))
    elif theorem == "flux":
        r = extra["flux_radius"]
        flux, vol = flux_sphere_estimate(F, rho.rho, r, replace(cfg, samples=max(cfg.samples, 1)))
        rel = abs(flux - vol) / max(abs(flux), abs(vol), 1e-300)
        status = "AGREE" if np.sign(flux) == np.sign(vol) else "SIGN_MISMATCH"
        rep.result("gauss-flux", status, flux=flux, volume_integral=vol, rel_diff=rel, radius=r)
    else:
        raise ConfigError(f"[check] unknown theorem {theorem!r}")
    return rep


def _linear_condition(sec) -> LinearCondition:
    mode = _get(sec, "mode", str, "COROLLARY1").upper()
    try:
        mode = Mode(mode)
    except ValueError:
        raise ConfigError(f"[linear] unknown mode {mode!r}") from None
    key = {Mode.RANTZER_EQ7: "alpha", Mode.EQ07: "alpha", Mode.THEOREM7: "kappa",
           Mode.COROLLARY1: "gamma"}[mode]
    try:
        return LinearCondition(mode, _get(sec, key, float))
    except ValueError as err:
        raise ConfigError(f"[linear] {err}") from None


def cmd_linear(args) -> Report:
    cp, digest = load_config(args.config)
    sec = _need(cp, "linear")
    A = parse_matrix(_get(sec, "A"), "A")
    cond = _linear_condition(sec)
    rep = Report("linear", digest, 0, {"eig_tol": 1e-9, "slack_tol": "1e-9*(1+|slack|max)"})
    truth = linear_ground_truth(A)
    if "B" in sec and "K" in sec:
        B = parse_matrix(_get(sec, "B"), "B")
        K = parse_matrix(_get(sec, "K"), "K")
        P = parse_matrix(_get(sec, "P"), "P") if "P" in sec else None
        rep.closed_loop("closed-loop", verify_closed_loop(A, B, K, cond, P))
        return rep
    rep.result("ground-truth", truth.value, max_real=eigenvalues(A).max_real)
    if "P" in sec:
        r = check_linear_condition(A, parse_matrix(_get(sec, "P"), "P"), cond)
        unsound = r.state.value == "SATISFIED_STRICT" and r.p_positive_definite \
            and truth.value != "STABLE"
        rep.condition("inequality", r, ground_truth=truth.value, unsound=unsound)
    else:
        if cond.mode not in (Mode.THEOREM7, Mode.COROLLARY1):
            raise ConfigError(f"[linear] {cond.mode.value} requires P (no certificate search)")
        found = find_certificate(A, cond)
        rep.result("certificate", "FOUND" if found.found else "NONE",
                   shifted_max_real=found.shifted_max_real, ground_truth=truth.value)
        if found.found:
            rep.detail(f"P: {fmt(found.P)}")
        else:
            rep.detail(f"reason: {found.reason}")
    return rep


def cmd_synth(args) -> Report:
    cp, digest = load_config(args.config)
    sec = _need(cp, "linear")
    A = parse_matrix(_get(sec, "A"), "A")
    B = parse_matrix(_get(sec, "B"), "B")
    gamma = _get(sec, "gamma", float)
    poles = None
    if "poles" in sec:
        poles = [float(p) for p in _unquote(sec["poles"]).split(",")]
    seed = args.seed if args.seed is not None else _get(sec, "seed", int, 0)
    rep = Report("synth", digest, seed, {"gamma": gamma})
    try:
        res = synthesize_state_feedback(A, B, gamma, poles, seed=seed)
    except SynthesisError as err:
        rep.result("synthesis", "FAILED", reason=str(err))
        return rep
    rep.synthesis("synthesis", res)
    cl = verify_closed_loop(A, B, res.K, LinearCondition(Mode.COROLLARY1, gamma), res.P)
    rep.closed_loop("verify", cl)
    return rep


def _simulate(rep: Report, F: VectorField, grid, dt, T, out_dir, prefix, delta_c=DELTA_C,
              R_esc=R_ESC, trend_slope=0.25):
    results = phase_portrait(F, grid, dt, T, delta_c, R_esc, trend_slope)
    if out_dir:
        for idx, (tr, _) in enumerate(results):
            write_trajectory_csv(tr, os.path.join(out_dir, f"{prefix}traj_{idx}.csv"))
        write_manifest_csv(results, grid, os.path.join(out_dir, f"{prefix}manifest.csv"))
    for idx, ((tr, cls), x0) in enumerate(zip(results, grid)):
        rep.result(f"{prefix}trajectory-{idx}", cls.label.value, x0=tuple(x0), t_final=tr.t[-1],
                   final_norm=cls.final_norm, basis=cls.basis, stop=tr.reason)
        rep.detail(f"final state {fmt(tr.final)} tail_slope={fmt(cls.tail_slope)} "
                   f"delta_c={fmt(cls.delta_c)} R_esc={fmt(cls.R_esc)} dt={fmt(dt)} T={fmt(T)}")
        if tr.error:
            rep.detail(f"note: {tr.error}")
    return results


def cmd_simulate(args) -> Report:
    cp, digest = load_config(args.config)
    F, g, u = read_system(cp)
    sec = _need(cp, "simulate")
    grid = parse_matrix(_get(sec, "points"), "points")
    if grid.shape[1] != F.dim:
        raise ConfigError(f"[simulate] points must have {F.dim} coordinates")
    dt = _get(sec, "dt", float, 1e-3)
    T = _get(sec, "T", float, 50.0)
    delta_c = _get(sec, "delta_c", float, DELTA_C)
    R_esc = _get(sec, "R_esc", float, R_ESC)
    slope = _get(sec, "trend_slope", float, 0.25)
    rep = Report("simulate", digest, 0, {"dt": dt, "T": T, "delta_c": delta_c, "R_esc": R_esc,
                                         "trend_slope": slope})
    if g is not None:
        from .divcheck import closed_loop_field
        F = closed_loop_field(F, g, u)
    _simulate(rep, F, [tuple(p) for p in grid], dt, T, args.out, "", delta_c, R_esc, slope)
    return rep


# ---------------------------------------------------------------------------
# Built-in reproduction suite

def _reproduce_cfg(args) -> CheckConfig:
    return _override(CheckConfig(samples=2000), args)


def reproduce_ex1(rep, cfg, out):
    region = Region(2, 0.1, 2.0)
    rho4 = norm_power_density(2, 2)
    for c in (1.0, -1.0):
        F = catalog.damped_oscillator(c)
        rep.section(f"c = {c:g}: f = {F}")
        rep.verdict(f"ex1-c{c:+g}-necessary-c1", check_necessary_c1(F, rho4, region, cfg))
        rep.verdict(f"ex1-c{c:+g}-necessary-c2", check_necessary_c2(F, rho4, region, cfg))
        _simulate(rep, F, circle_points(8, 2.0), 1e-3, 50.0, out, f"ex1_c{c:+g}_")
    F = catalog.damped_oscillator(1.0)
    flux, vol = flux_sphere_estimate(F, norm_power_density(1, 2).rho, 1.0,
                                     replace(cfg, samples=1_000_000))
    rel = abs(flux - vol) / max(abs(flux), abs(vol))
    rep.result("ex1-gauss-flux", "AGREE" if np.sign(flux) == np.sign(vol) else "SIGN_MISMATCH",
               flux=flux, volume_integral=vol, rel_diff=rel)


def reproduce_ex2(rep, cfg, out):
    region = Region(2, 0.1, 2.0)
    F = catalog.partially_stable(0.1)
    rho = norm_power_density(2, 2)
    rep.section(f"b = 0.1, alpha = 2: f = {F}")
    rep.verdict("ex2-necessary-c1", check_necessary_c1(F, rho, region, cfg))
    rep.verdict("ex2-sufficient-case1", check_sufficient(F, rho, region, cfg, 1))
    _simulate(rep, F, [(0.1, 0.1)], 1e-2, 200.0, out, "ex2_")


def reproduce_ex3(rep, cfg, out):
    region = Region(2, 0.1, 2.0)
    F = catalog.two_equilibria()
    rep.section(f"alpha = 2: f = {F}")
    rep.verdict("ex3-necessary-c2", check_necessary_c2(F, norm_power_density(2, 2), region, cfg))
    _simulate(rep, F, [(0.5, 0.5), (2.0, 0.01), (1.5, 0.0)], 1e-3, 50.0, out, "ex3_")


def reproduce_ex4(rep, cfg, out):
    region = Region(3, 0.1, 2.0)
    F = catalog.cubic_3d()
    rho = norm_power_density(3, 3)
    rep.section(f"alpha = 3, beta = {cfg.beta:g}: f = {F}")
    for case in (1, 2, 3):
        v = check_sufficient(F, rho, region, cfg, case)
        locus = "x3=0" if v.band_count and np.all(v.band_points[:, 2] == 0.0) else "other"
        rep.verdict(f"ex4-sufficient-case{case}", v, equality_locus=locus)
    _simulate(rep, F, [(1.0, 0.5, 0.0), (1.0, 0.0, 0.5)], 1e-3, 50.0, out, "ex4_")


def reproduce_rantzer_eq7(rep, cfg, out):
    A, P = catalog.A_UNSTABLE, catalog.P_UNSTABLE
    truth = linear_ground_truth(A)
    r = check_linear_condition(A, P, LinearCondition(Mode.RANTZER_EQ7, catalog.ALPHA_UNSTABLE))
    rep.condition("eq7-unstable-A", r, ground_truth=truth.value,
                  unsound=r.certifies and truth.value != "STABLE")
    A, P = catalog.A_HURWITZ, catalog.P_NOT_PD
    r = check_linear_condition(A, P, LinearCondition(Mode.RANTZER_EQ7, catalog.ALPHA_NOT_PD))
    rep.condition("eq7-hurwitz-non-pd-P", r, ground_truth=linear_ground_truth(A).value)


def reproduce_rantzer_synth(rep, cfg, out):
    A, B, K, P = catalog.A_UNSTABLE, catalog.B_SYNTH, catalog.K_FAILED, catalog.P_FAILED
    spec = eigenvalues(A + B @ K)
    rep.result("synth-eigenvalues", linear_ground_truth(A + B @ K).value,
               eigenvalues=list(spec.values))
    for mode in (Mode.RANTZER_EQ7, Mode.EQ07):
        cl = verify_closed_loop(A, B, K, LinearCondition(mode, catalog.ALPHA_FAILED), P)
        rep.closed_loop(f"synth-{mode.value.lower()}", cl)
    res = synthesize_state_feedback(A, B, 1.0)
    rep.synthesis("synth-corollary2", res)
    rep.closed_loop("synth-corollary2-verify",
                    verify_closed_loop(A, B, res.K, LinearCondition(Mode.COROLLARY1, 1.0), res.P))


def reproduce_thm7(rep, cfg, out):
    for name, A in (("unstable", catalog.A_UNSTABLE), ("hurwitz", catalog.A_HURWITZ)):
        for kappa in (0.0, 0.5):
            cond = LinearCondition(Mode.THEOREM7, kappa)
            found = find_certificate(A, cond)
            rep.result(f"thm7-{name}-kappa{kappa:g}", "FOUND" if found.found else "NONE",
                       shifted_max_real=found.shifted_max_real,
                       ground_truth=linear_ground_truth(A).value)
            if found.found:
                rep.condition(f"thm7-{name}-kappa{kappa:g}-recheck",
                              check_linear_condition(A, found.P, cond))
            else:
                rep.detail(f"reason: {found.reason}")


def reproduce_corollary1(rep, cfg, out):
    A = catalog.A_HURWITZ
    for gamma in (0.5, 2.0):
        cond = LinearCondition(Mode.COROLLARY1, gamma)
        found = find_certificate(A, cond)
        rep.result(f"corollary1-gamma{gamma:g}", "FOUND" if found.found else "NONE",
                   shifted_max_real=found.shifted_max_real)
        if found.found:
            rep.condition(f"corollary1-gamma{gamma:g}-recheck",
                          check_linear_condition(A, found.P, cond))
    res = synthesize_state_feedback(catalog.A_UNSTABLE, catalog.B_SYNTH, 1.0, poles=[-1.0, -2.0])
    rep.synthesis("corollary2-poles-1-2", res)


_REPRODUCERS = {
    "ex1": reproduce_ex1, "ex2": reproduce_ex2, "ex3": reproduce_ex3, "ex4": reproduce_ex4,
    "rantzer-eq7": reproduce_rantzer_eq7, "rantzer-synth": reproduce_rantzer_synth,
    "thm7": reproduce_thm7, "corollary1": reproduce_corollary1,
}


def cmd_reproduce(args) -> Report:
    cfg = _reproduce_cfg(args)
    digest = hashlib.sha256(f"reproduce:{args.case}".encode()).hexdigest()
    rep = Report(f"reproduce {args.case}", digest, cfg.seed, _thresholds(cfg))
    _REPRODUCERS[args.case](rep, cfg, args.out)
    return rep


# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out", default=None, help="output directory for report and CSVs")
    common.add_argument("--seed", type=int, default=None)
    common.add_argument("--samples", type=int, default=None)
    common.add_argument("--tol", type=float, default=None)
    p = argparse.ArgumentParser(prog="divstab", description=__doc__.splitlines()[0] if __doc__ else None)
    sub = p.add_subparsers(dest="command", required=True)
    for name in ("analyze", "linear", "synth", "simulate"):
        sp = sub.add_parser(name, parents=[common])
        sp.add_argument("--config", required=True)
    rp = sub.add_parser("reproduce", parents=[common])
    rp.add_argument("case", choices=REPRODUCE_CASES)
    return p


_COMMANDS = {"analyze": cmd_analyze, "linear": cmd_linear, "synth": cmd_synth,
             "simulate": cmd_simulate, "reproduce": cmd_reproduce}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s: %(message)s")
    if args.out:
        os.makedirs(args.out, exist_ok=True)
    try:
        rep = _COMMANDS[args.command](args)
    except (ConfigError, ValueError) as err:
        print(f"divstab: config error: {err}", file=sys.stderr)
        return 2
    except DomainError as err:
        print(f"divstab: evaluation error: {err}", file=sys.stderr)
        return 2
    text = rep.text()
    sys.stdout.write(text)
    if args.out:
        with open(os.path.join(args.out, "report.txt"), "w", newline="\n") as fh:
            fh.write(text)
    return 0
