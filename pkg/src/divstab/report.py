"""Plain-text report writer: a fixed header plus one ``RESULT:`` line per check."""

from __future__ import annotations

import math

import numpy as np

from . import __version__
from .divcheck import Verdict
from .lincheck import ConditionReport
from .synth import ClosedLoopReport, SynthesisResult


def fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "yes" if v else "no"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, complex):
        if v.imag == 0:
            return fmt(v.real)
        return f"{fmt(v.real)}{'+' if v.imag >= 0 else '-'}{fmt(abs(v.imag))}j"
    if isinstance(v, (float, np.floating)):
        v = float(v)
        if math.isnan(v):
            return "nan"
        return f"{v:.6g}"
    if isinstance(v, np.ndarray):
        if v.ndim == 1:
            return "[" + ", ".join(fmt(x) for x in v) + "]"
        return "[" + "; ".join(", ".join(fmt(x) for x in row) for row in v) + "]"
    if isinstance(v, (tuple, list)):
        return "(" + ", ".join(fmt(x) for x in v) + ")"
    return str(v)


class Report:
    def __init__(self, command: str, config_hash: str, seed: int, thresholds: dict):
        self.lines = [
            "divstab report",
            f"version: {__version__}",
            f"command: {command}",
            f"config_sha256: {config_hash}",
            f"seed: {seed}",
            "thresholds: " + " ".join(f"{k}={fmt(v)}" for k, v in thresholds.items()),
            "",
        ]

    def section(self, title: str):
        self.lines.append(f"== {title}")

    def result(self, name: str, status: str, **fields):
        extra = "".join(f" {k}={fmt(v)}" for k, v in fields.items())
        self.lines.append(f"RESULT: {name} {status}{extra}")

    def detail(self, text: str):
        self.lines.append(f"  {text}")

    def verdict(self, name: str, v: Verdict, **extra):
        fields = {}
        if v.strict is not None:
            fields["strict"] = v.strict
        fields["samples"] = v.samples
        if v.limits:
            fields["origin_limits"] = "ok" if v.limits_ok else "FAILED"
        fields.update(extra)
        self.result(name, v.status.value, **fields)
        self.detail(f"condition: {v.condition}")
        self.detail(f"min={fmt(v.min_value)} max={fmt(v.max_value)} mean={fmt(v.mean_value)}"
                    f" band={v.band_count}")
        if v.witness is not None:
            self.detail(f"witness: x={fmt(v.witness)} value={fmt(v.witness_value)}")
        for lim in v.limits:
            self.detail(f"limit {lim.name}: zero={fmt(lim.is_zero)} "
                        f"last={fmt(lim.magnitudes[-1])} r_last={fmt(lim.radii[-1])}"
                        + (f" ({lim.note})" if lim.note else ""))
        if v.integrability is not None:
            it = v.integrability
            self.detail(f"integrability: exponent={fmt(it['exponent'])} "
                        f"likely_integrable={fmt(it['likely_integrable'])} ({it['note']})")
        for note in v.notes:
            self.detail(f"note: {note}")

    def condition(self, name: str, rep: ConditionReport, **extra):
        fields = {"max_eig": rep.max_eig, "P_pd": rep.p_positive_definite}
        if rep.side_condition_ok is not None:
            fields["trace_side_ok"] = rep.side_condition_ok
        fields.update(extra)
        self.result(name, rep.state.value, **fields)
        self.detail(f"condition: {rep.condition}")
        self.detail(f"slack: {fmt(rep.slack)} tol={fmt(rep.tol)}")

    def closed_loop(self, name: str, cl: ClosedLoopReport):
        status = cl.report.state.value if cl.report is not None else "INFEASIBLE"
        self.result(name, status, ground_truth=cl.ground_truth.value, unsound=cl.unsound,
                    P_pd=(cl.report.p_positive_definite if cl.report else False))
        self.detail(f"condition: {cl.condition}")
        self.detail(f"spectrum(A+BK): {fmt(list(cl.spectrum.values))}")
        if cl.P is not None:
            self.detail(f"P{' (searched)' if cl.P_searched else ''}: {fmt(cl.P)}")
        if cl.report is not None:
            self.detail(f"slack max eigenvalue: {fmt(cl.report.max_eig)}")
        if cl.note:
            self.detail(f"note: {cl.note}")
        if cl.unsound:
            self.detail("note: inequality satisfied although A+BK is not Hurwitz")

    def synthesis(self, name: str, res: SynthesisResult):
        self.result(name, res.report.state.value, max_real=res.spectrum.max_real,
                    P_pd=res.report.p_positive_definite)
        self.detail(f"K: {fmt(res.K)}")
        self.detail(f"P: {fmt(res.P)}")
        self.detail(f"spectrum(A+BK): {fmt(list(res.spectrum.values))}")
        self.detail(f"condition: {res.condition}")

    def text(self) -> str:
        return "\n".join(self.lines) + "\n"
