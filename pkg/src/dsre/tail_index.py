"""Kesten-Goldie tail indices: roots of E|b + cM|**alpha = 1."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .distributions import (
    AffineFactor,
    ChiSquare1,
    PointMass,
    StandardNormal,
    abs_moment,
    log_moment,
)
from .exceptions import NonIntegrable, NoRootInRange, StationarityViolated

RESIDUAL_TOL = 1e-9
DEFAULT_MAX_ALPHA = 64.0


@dataclass(frozen=True)
class TailIndexProfile:
    alpha: tuple
    residual: tuple
    log_moment: tuple

    def __post_init__(self):
        for a in self.alpha:
            if not (math.isfinite(a) and a > 0):
                raise ValueError("tail indices must be finite and positive")


def solve_alpha(factor: AffineFactor, max_alpha: float = DEFAULT_MAX_ALPHA) -> float:
    """Positive root of s -> E|b + cM|**s - 1.

    The log-moment function is convex, vanishes at 0 and starts with negative
    slope, so the positive root is unique. An upper bracket is found by doubling
    from s = 1 (or a lower one by halving when m(1) > 1), then a safeguarded
    secant iteration runs until the residual is below 1e-9.
    """
    lm = log_moment(factor)
    if lm >= 0:
        raise StationarityViolated(
            "E log|b+cM| = %.6g >= 0 for (b=%g, c=%g)" % (lm, factor.b, factor.c)
        )

    def h(s):
        try:
            return abs_moment(factor, s) - 1.0
        except NonIntegrable:
            return math.inf

    s = 1.0
    hs = h(s)
    if abs(hs) <= RESIDUAL_TOL:
        return s
    if hs < 0:
        lo, hlo = s, hs
        while True:
            s = min(2.0 * s, max_alpha)
            hs = h(s)
            if hs > 0:
                hi, hhi = s, hs
                break
            if abs(hs) <= RESIDUAL_TOL:
                return s
            if s >= max_alpha:
                raise NoRootInRange("E|b+cM|^s <= 1 up to s = %g" % max_alpha)
            lo, hlo = s, hs
    else:
        hi, hhi = s, hs
        while True:
            s *= 0.5
            hs = h(s)
            if abs(hs) <= RESIDUAL_TOL:
                return s
            if hs < 0:
                lo, hlo = s, hs
                break
            hi, hhi = s, hs
            if s < 1e-12:
                raise NoRootInRange("no sign change of E|b+cM|^s - 1 near 0")
    return _bracketed_root(h, lo, hlo, hi, hhi)


def _bracketed_root(h, lo, hlo, hi, hhi, maxiter=200):
    prev, hprev = (lo, hlo) if abs(hlo) < abs(hhi) else (hi, hhi)
    cur, hcur = (hi, hhi) if prev == lo else (lo, hlo)
    for _ in range(maxiter):
        width = hi - lo
        x = None
        if math.isfinite(hcur) and math.isfinite(hprev) and hcur != hprev:
            x = cur - hcur * (cur - prev) / (hcur - hprev)
            # secant only while it stays strictly inside the bracket
            if not (lo < x < hi):
                x = None
        if x is None:
            x = 0.5 * (lo + hi)
        hx = h(x)
        if abs(hx) <= RESIDUAL_TOL:
            return x
        if hx < 0:
            lo, hlo = x, hx
        else:
            hi, hhi = x, hx
        prev, hprev, cur, hcur = cur, hcur, x, hx
        if hi - lo > 0.5 * width:
            # slow progress: force a bisection step
            mid = 0.5 * (lo + hi)
            hm = h(mid)
            if abs(hm) <= RESIDUAL_TOL:
                return mid
            if hm < 0:
                lo, hlo = mid, hm
            else:
                hi, hhi = mid, hm
            prev, hprev, cur, hcur = cur, hcur, mid, hm
        if hi - lo < 1e-15 * max(1.0, hi):
            return lo if abs(hlo) < abs(hhi) else hi
    raise NoRootInRange("root iteration did not converge")


def solve_profile(factors, max_alpha: float = DEFAULT_MAX_ALPHA) -> TailIndexProfile:
    alphas, residuals, logs = [], [], []
    for f in factors:
        a = solve_alpha(f, max_alpha)
        alphas.append(a)
        residuals.append(abs(abs_moment(f, a) - 1.0))
        logs.append(log_moment(f))
    return TailIndexProfile(tuple(alphas), tuple(residuals), tuple(logs))


@dataclass
class AssumptionReport:
    verdicts: dict
    details: dict

    @property
    def all_pass(self):
        return all(v == "pass" for v in self.verdicts.values())


def validate_assumptions(model, profile: TailIndexProfile, eps: float = 0.5) -> AssumptionReport:
    """Numerical and structural verdicts for the standing assumptions.

    Verdict values are "pass", "fail", "assumed" or "not verifiable numerically".
    """
    from .engine import ConstantVector, GaussianVector  # noqa: PLC0415

    dist = model.factors[0].dist
    verdicts, details = {}, {}

    logs = [log_moment(f) for f in model.factors]
    details["A1"] = logs
    verdicts["A1"] = "pass" if all(v < 0 for v in logs) else "fail"

    details["A2"] = list(profile.residual)
    verdicts["A2"] = "pass" if all(r <= RESIDUAL_TOL for r in profile.residual) else "fail"

    probe = max(profile.alpha) + eps
    finite = []
    for f in model.factors:
        try:
            finite.append(math.isfinite(abs_moment(f, probe)))
        except NonIntegrable:
            finite.append(False)
    q = model.q_law
    if isinstance(q, GaussianVector) or isinstance(q, ConstantVector):
        q_ok = True
    else:
        q_ok = all(_dist_moment_finite(m, probe) for m in q.marginals)
    details["A3"] = {"probe": probe, "factor_moments_finite": finite, "q_moments_finite": q_ok}
    verdicts["A3"] = "pass" if all(finite) and q_ok else "fail"

    if isinstance(dist, PointMass):
        verdicts["A4"] = "fail"
    elif isinstance(dist, (StandardNormal, ChiSquare1)):
        verdicts["A4"] = "pass"
    else:
        verdicts["A4"] = "assumed"

    if isinstance(q, GaussianVector):
        # Gaussian Q: nondegenerate marginals, ratios are Cauchy-tailed.
        var = np.diag(np.asarray(q.covariance))
        ok = bool(np.all(var > 0))
        verdicts["A5"] = verdicts["A6"] = "pass" if ok else "fail"
    elif isinstance(q, ConstantVector):
        ok = all(v != 0 for v in q.q)
        verdicts["A5"] = "pass" if ok else "fail"
        verdicts["A6"] = "pass" if ok else "fail"
    else:
        verdicts["A5"] = "not verifiable numerically"
        verdicts["A6"] = "not verifiable numerically"
    return AssumptionReport(verdicts, details)


def _dist_moment_finite(dist, s):
    try:
        return math.isfinite(abs_moment(AffineFactor(0.0, 1.0, dist), s))
    except NonIntegrable:
        return False


__all__ = [
    "TailIndexProfile",
    "solve_alpha",
    "solve_profile",
    "validate_assumptions",
    "AssumptionReport",
]
