"""Globally adaptive Gauss-Legendre quadrature.

Each interval carries a 15-point rule on the whole interval and on its two
halves; the discrepancy is the local error estimate. The interval with the
largest estimate is bisected until the summed estimate meets the tolerance.
Half-lines are mapped onto (0, 1) with x = a +/- t / (1 - t).
"""

import heapq
from typing import Callable, NamedTuple

import numpy as np

from .exceptions import NonIntegrable

_NODES, _WEIGHTS = np.polynomial.legendre.leggauss(15)


class QuadResult(NamedTuple):
    value: float
    error: float


def _gl(f, a, b):
    half = 0.5 * (b - a)
    mid = 0.5 * (a + b)
    y = f(mid + half * _NODES)
    return half * float(np.dot(_WEIGHTS, y))


def integrate(
    f: Callable[[np.ndarray], np.ndarray],
    a: float,
    b: float,
    tol: float = 1e-10,
    rtol: float = 1e-12,
    max_intervals: int = 4000,
) -> QuadResult:
    """Integrate a vectorized ``f`` over the finite interval ``[a, b]``.

    Raises
    ------
    NonIntegrable
        If the error target is not met within ``max_intervals`` bisections or
        the integrand produces non-finite values.
    """
    if a == b:
        return QuadResult(0.0, 0.0)
    sign = 1.0
    if b < a:
        a, b, sign = b, a, -1.0

    def estimate(lo, hi):
        mid = 0.5 * (lo + hi)
        left, right = _gl(f, lo, mid), _gl(f, mid, hi)
        whole = _gl(f, lo, hi)
        return left + right, abs(left + right - whole)

    value, err = estimate(a, b)
    heap = [(-err, a, b, value)]
    total_value, total_err = value, err
    n = 1
    while True:
        if not (np.isfinite(total_value) and np.isfinite(total_err)):
            raise NonIntegrable("integrand is not finite on [%g, %g]" % (a, b))
        if total_err <= max(tol, rtol * abs(total_value)):
            return QuadResult(sign * total_value, total_err)
        if n >= max_intervals:
            raise NonIntegrable(
                "no convergence after %d intervals (error estimate %.3g)" % (n, total_err)
            )
        neg_err, lo, hi, val = heapq.heappop(heap)
        mid = 0.5 * (lo + hi)
        if not lo < mid < hi:
            raise NonIntegrable("interval underflow near x=%g" % mid)
        lv, le = estimate(lo, mid)
        rv, re = estimate(mid, hi)
        heapq.heappush(heap, (-le, lo, mid, lv))
        heapq.heappush(heap, (-re, mid, hi, rv))
        total_value += lv + rv - val
        total_err += le + re + neg_err
        n += 1
        if n % 64 == 0:
            # Resum to keep cancellation drift out of the running totals.
            total_value = sum(item[3] for item in heap)
            total_err = sum(-item[0] for item in heap)


def integrate_halfline(f, a: float, direction: int = 1, **kwargs) -> QuadResult:
    """Integrate ``f`` over ``[a, inf)`` (direction=+1) or ``(-inf, a]`` (direction=-1)."""

    def g(t):
        one_minus = 1.0 - t
        # non-finite values near t = 1 surface as NonIntegrable in integrate()
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            x = a + direction * t / one_minus
            return f(x) / (one_minus * one_minus)

    return integrate(g, 0.0, 1.0, **kwargs)
