"""Scalar innovation laws and moment functionals of affine factors b + c*M.

Every law knows how to sample itself and how to integrate a function against
its density. Moment integrands are evaluated in log space so that huge
powers of the factor meet underflowing densities without producing NaN.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Sequence

import numpy as np
from scipy import optimize, special

from .exceptions import NonIntegrable, TiltNotNormalized
from .quadrature import QuadResult, integrate, integrate_halfline

_LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)

# integrand(m, logpdf(m)) -> values of h(m) * pdf(m)
Integrand = Callable[[np.ndarray, np.ndarray], np.ndarray]


class ScalarDist:
    """Base class for the law of the scalar innovation M."""

    continuous = True
    nonnegative = False

    def sample(self, rng: np.random.Generator, size=None):
        raise NotImplementedError

    def logpdf(self, x):
        raise NotImplementedError

    def cdf(self, x):
        raise NotImplementedError

    def sample_truncated(self, rng, lo, hi, size):
        """Draw from the law conditioned on [lo, hi]."""
        raise NotImplementedError

    def integrate(self, integrand: Integrand, breakpoints=(), tol=1e-10) -> QuadResult:
        raise NotImplementedError

    def describe(self) -> str:
        raise NotImplementedError


@dataclass(frozen=True)
class StandardNormal(ScalarDist):
    def sample(self, rng, size=None):
        return rng.standard_normal(size)

    def logpdf(self, x):
        x = np.asarray(x, dtype=float)
        return -0.5 * x * x - _LOG_SQRT_2PI

    def cdf(self, x):
        return special.ndtr(x)

    def sample_truncated(self, rng, lo, hi, size):
        # reflect intervals on the positive side so the upper tail keeps precision
        lo, hi = np.asarray(lo, dtype=float), np.asarray(hi, dtype=float)
        flip = lo > 0
        a = np.where(flip, -hi, lo)
        b = np.where(flip, -lo, hi)
        z = special.ndtri(rng.uniform(special.ndtr(a), special.ndtr(b), size))
        return np.where(flip, -z, z)

    def integrate(self, integrand, breakpoints=(), tol=1e-10):
        pts = sorted({float(p) for p in breakpoints if np.isfinite(p)}) or [0.0]

        def f(x):
            return integrand(x, self.logpdf(x))

        pieces = [integrate_halfline(f, pts[0], -1, tol=tol / 4)]
        for lo, hi in zip(pts[:-1], pts[1:]):
            pieces.append(integrate(f, lo, hi, tol=tol / 4))
        pieces.append(integrate_halfline(f, pts[-1], 1, tol=tol / 4))
        return QuadResult(sum(p.value for p in pieces), sum(p.error for p in pieces))

    def describe(self):
        return "normal"


@dataclass(frozen=True)
class ChiSquare1(ScalarDist):
    """Law of Z**2 with Z standard normal."""

    nonnegative = True

    def sample(self, rng, size=None):
        z = rng.standard_normal(size)
        return z * z

    def logpdf(self, x):
        x = np.asarray(x, dtype=float)
        with np.errstate(divide="ignore", invalid="ignore"):
            out = -0.5 * np.log(x) - 0.5 * x - _LOG_SQRT_2PI
        return np.where(x > 0, out, -np.inf)

    def cdf(self, x):
        x = np.maximum(np.asarray(x, dtype=float), 0.0)
        return special.erf(np.sqrt(0.5 * x))

    def sample_truncated(self, rng, lo, hi, size):
        # |Z| conditioned on [sqrt(lo), sqrt(hi)], then squared.
        zlo = np.sqrt(np.maximum(lo, 0.0))
        zhi = np.sqrt(np.asarray(hi, dtype=float))
        z = special.ndtri(rng.uniform(special.ndtr(-zhi), special.ndtr(-zlo), size))
        return z * z

    def integrate(self, integrand, breakpoints=(), tol=1e-10):
        pts = sorted({1.0} | {float(p) for p in breakpoints if 0.0 < p < np.inf})

        def f(x):
            return integrand(x, self.logpdf(x))

        # x = u**2 on the first piece removes the x**-1/2 singularity at 0.
        def f_sub(u):
            return f(u * u) * 2.0 * u

        pieces = [integrate(f_sub, 0.0, math.sqrt(pts[0]), tol=tol / 4)]
        for lo, hi in zip(pts[:-1], pts[1:]):
            pieces.append(integrate(f, lo, hi, tol=tol / 4))
        pieces.append(integrate_halfline(f, pts[-1], 1, tol=tol / 4))
        return QuadResult(sum(p.value for p in pieces), sum(p.error for p in pieces))

    def describe(self):
        return "chi2"


@dataclass(frozen=True)
class PointMass(ScalarDist):
    value: float = 0.0
    continuous = False

    def __post_init__(self):
        if not math.isfinite(self.value):
            raise ValueError("PointMass value must be finite")

    @property
    def nonnegative(self):
        return self.value >= 0

    def sample(self, rng, size=None):
        if size is None:
            return float(self.value)
        return np.full(size, float(self.value))

    def cdf(self, x):
        return np.where(np.asarray(x) >= self.value, 1.0, 0.0)

    def sample_truncated(self, rng, lo, hi, size):
        return self.sample(rng, size)

    def integrate(self, integrand, breakpoints=(), tol=1e-10):
        x = np.array([float(self.value)])
        return QuadResult(float(integrand(x, np.zeros(1))[0]), 0.0)

    def describe(self):
        return "point:%r" % self.value


@dataclass(frozen=True)
class TabulatedPositive(ScalarDist):
    """Law on [x_0, x_n] with density interpolated linearly between grid points."""

    points: tuple = ()
    density: tuple = ()
    nonnegative = True
    _cdf_knots: tuple = field(default=(), init=False, repr=False, compare=False)

    def __post_init__(self):
        x = np.asarray(self.points, dtype=float)
        f = np.asarray(self.density, dtype=float)
        if x.ndim != 1 or x.shape != f.shape or x.size < 2:
            raise ValueError("points and density must be 1-d of equal length >= 2")
        if np.any(np.diff(x) <= 0) or x[0] < 0:
            raise ValueError("grid must be strictly increasing and nonnegative")
        if np.any(f < 0) or not np.all(np.isfinite(f)):
            raise ValueError("density must be finite and nonnegative")
        knots = np.concatenate([[0.0], np.cumsum(0.5 * (f[1:] + f[:-1]) * np.diff(x))])
        if abs(knots[-1] - 1.0) > 1e-8:
            raise ValueError("density integrates to %.12g, not 1" % knots[-1])
        object.__setattr__(self, "points", tuple(x.tolist()))
        object.__setattr__(self, "density", tuple(f.tolist()))
        object.__setattr__(self, "_cdf_knots", tuple(knots.tolist()))

    @classmethod
    def from_grid(cls, points: Sequence[float], density: Sequence[float]):
        return cls(tuple(points), tuple(density))

    def pdf(self, x):
        return np.interp(x, self.points, self.density, left=0.0, right=0.0)

    def logpdf(self, x):
        with np.errstate(divide="ignore"):
            return np.log(self.pdf(x))

    def cdf(self, x):
        x = np.asarray(x, dtype=float)
        xs = np.asarray(self.points)
        fs = np.asarray(self.density)
        knots = np.asarray(self._cdf_knots)
        k = np.clip(np.searchsorted(xs, x, side="right") - 1, 0, xs.size - 2)
        dx = np.clip(x - xs[k], 0.0, xs[k + 1] - xs[k])
        slope = (fs[k + 1] - fs[k]) / (xs[k + 1] - xs[k])
        out = knots[k] + fs[k] * dx + 0.5 * slope * dx * dx
        return np.clip(np.where(x < xs[0], 0.0, out), 0.0, knots[-1])

    def ppf(self, p):
        p = np.asarray(p, dtype=float)
        xs = np.asarray(self.points)
        fs = np.asarray(self.density)
        knots = np.asarray(self._cdf_knots)
        k = np.clip(np.searchsorted(knots, p, side="right") - 1, 0, xs.size - 2)
        r = p - knots[k]
        h = xs[k + 1] - xs[k]
        slope = (fs[k + 1] - fs[k]) / h
        # solve f_k t + slope t^2 / 2 = r for t in [0, h]
        disc = np.maximum(fs[k] ** 2 + 2.0 * slope * r, 0.0)
        with np.errstate(divide="ignore", invalid="ignore"):
            t = np.where(
                np.abs(slope) > 1e-300,
                2.0 * r / (fs[k] + np.sqrt(disc)),
                r / fs[k],
            )
        t = np.where(np.isfinite(t), t, 0.0)
        return xs[k] + np.clip(t, 0.0, h)

    def sample(self, rng, size=None):
        u = rng.random(size)
        out = self.ppf(u * self._cdf_knots[-1])
        return float(out) if size is None else out

    def sample_truncated(self, rng, lo, hi, size):
        plo, phi = self.cdf(lo), self.cdf(hi)
        return self.ppf(rng.uniform(plo, phi, size))

    def integrate(self, integrand, breakpoints=(), tol=1e-10):
        lo, hi = self.points[0], self.points[-1]
        pts = sorted(set(self.points) | {float(p) for p in breakpoints if lo < p < hi})

        def f(x):
            return integrand(x, self.logpdf(x))

        pieces = [integrate(f, a, b, tol=tol / len(pts)) for a, b in zip(pts[:-1], pts[1:])]
        return QuadResult(sum(p.value for p in pieces), sum(p.error for p in pieces))

    def describe(self):
        return "tabulated:%d" % len(self.points)


@dataclass(frozen=True)
class AffineFactor:
    """The random multiplier b + c*M."""

    b: float
    c: float
    dist: ScalarDist

    def __post_init__(self):
        if self.b < 0:
            raise ValueError("b must be nonnegative")

    @property
    def kink(self):
        """Point where b + c*m vanishes, or None."""
        return -self.b / self.c if self.c != 0 else None

    def breakpoints(self):
        k = self.kink
        return () if k is None else (k,)

    def log_abs(self, m):
        with np.errstate(divide="ignore"):
            return np.log(np.abs(self.b + self.c * np.asarray(m, dtype=float)))


def sample(factor: AffineFactor, rng: np.random.Generator, size=None):
    """Draw ``b + c*M``."""
    return factor.b + factor.c * factor.dist.sample(rng, size)


def expect(dist: ScalarDist, fn: Integrand, breakpoints=(), tol=1e-10) -> QuadResult:
    """Integrate ``fn(m, logpdf(m))`` over the law, i.e. E[h(M)] for fn = h * pdf."""
    return dist.integrate(fn, breakpoints, tol=tol)


def _normal_abs_moment(c, s):
    return math.exp(
        s * math.log(abs(c)) + 0.5 * s * math.log(2.0) + special.gammaln(0.5 * (s + 1.0))
    ) / math.sqrt(math.pi)


def abs_moment(factor: AffineFactor, s: float, full_output: bool = False):
    """E|b + cM|**s.

    Closed form for a centred normal factor, quadrature otherwise. With
    ``full_output`` a ``QuadResult`` carrying the error estimate is returned.
    """
    if s < 0:
        raise ValueError("s must be nonnegative")
    if s == 0:
        res = QuadResult(1.0, 0.0)
    elif isinstance(factor.dist, StandardNormal) and factor.b == 0:
        res = QuadResult(_normal_abs_moment(factor.c, s), 0.0)
    else:

        def fn(m, lp):
            return np.exp(s * factor.log_abs(m) + lp)

        with np.errstate(over="ignore", invalid="ignore"):
            res = expect(factor.dist, fn, factor.breakpoints())
    if not math.isfinite(res.value):
        raise NonIntegrable("E|b+cM|^%g is not finite" % s)
    return res if full_output else res.value


def log_moment(factor: AffineFactor, full_output: bool = False):
    """E log|b + cM|."""
    if isinstance(factor.dist, StandardNormal) and factor.b == 0:
        # E log|N| = -(gamma + log 2) / 2
        val = math.log(abs(factor.c)) - 0.5 * (np.euler_gamma + math.log(2.0))
        res = QuadResult(val, 0.0)
    else:

        def fn(m, lp):
            return factor.log_abs(m) * np.exp(lp)

        with np.errstate(invalid="ignore"):
            res = expect(factor.dist, fn, factor.breakpoints())
    if not math.isfinite(res.value):
        raise NonIntegrable("E log|b+cM| is not finite")
    return res if full_output else res.value


def tilted_expect(factor: AffineFactor, alpha: float, h, extra_breakpoints=()) -> QuadResult:
    """E[h(M) |b + cM|**alpha] by quadrature; h at the atom for a point mass."""
    if isinstance(factor.dist, PointMass):
        return QuadResult(float(np.asarray(h(np.array([factor.dist.value])))[0]), 0.0)

    def fn(m, lp):
        return h(m) * np.exp(alpha * factor.log_abs(m) + lp)

    with np.errstate(over="ignore", invalid="ignore"):
        return expect(factor.dist, fn, tuple(factor.breakpoints()) + tuple(extra_breakpoints))


def weighted_tilted_mean(factor: AffineFactor, alpha: float, h, rng, n: int):
    """Self-normalized importance estimate of the tilted mean of h(M).

    Draws M from the base law and weights by |b + cM|**alpha. Returns
    ``(mean, standard_error)`` with the delta-method standard error.
    """
    m = factor.dist.sample(rng, n)
    w = np.abs(factor.b + factor.c * m) ** alpha
    y = h(m)
    wbar = w.mean()
    est = np.dot(w, y) / (n * wbar)
    resid = w * (y - est) / wbar
    se = resid.std(ddof=1) / math.sqrt(n)
    return float(est), float(se)


_TAIL_MASS = 1e-6


class _TiltedSampler:
    """Acceptance-rejection sampler for the law E[|b+cM|^alpha 1(M in .)].

    The bulk [lo, hi] holds all but 1e-6 of the tilted mass and is cut into
    cells at the kink of w = |b + c m|**alpha. Since w is quasi-convex, its
    maximum on a cell sits at an endpoint, which gives a piecewise envelope:
    pick a cell with probability proportional to P(cell) * max w, propose from
    the base law conditioned on the cell and accept with w(m) / max w. The two
    tails are drawn by numerical inversion of the tilted tail mass.
    """

    CELLS = 512

    def __init__(self, factor: AffineFactor, alpha: float):
        self.factor = factor
        self.alpha = alpha
        dist = factor.dist
        self.w = lambda m: np.abs(factor.b + factor.c * np.asarray(m)) ** alpha
        if isinstance(dist, TabulatedPositive):
            self.lo, self.hi = dist.points[0], dist.points[-1]
            self.lower_mass = self.upper_mass = 0.0
        else:
            self.hi, self.upper_mass = self._edge(+1)
            if isinstance(dist, ChiSquare1):
                self.lo, self.lower_mass = 0.0, 0.0
            else:
                self.lo, self.lower_mass = self._edge(-1)
        edges = np.linspace(self.lo, self.hi, self.CELLS + 1)
        k = factor.kink
        if k is not None and self.lo < k < self.hi:
            edges = np.union1d(edges, [k])
        self.edges = edges
        wmax = np.maximum(self.w(edges[:-1]), self.w(edges[1:]))
        p = np.maximum(np.diff(dist.cdf(edges)), 0.0)
        score = p * wmax
        self.cell_wmax = wmax
        self.cell_cdf = np.cumsum(score) / score.sum()
        self.acceptance = float(np.sum(p * self.w(0.5 * (edges[:-1] + edges[1:]))) / score.sum())

    def _tail(self, x, direction):
        f = self.factor
        a = self.alpha

        def fn(m, lp):
            return np.exp(a * f.log_abs(m) + lp)

        dist = f.dist
        bps = [p for p in f.breakpoints() if (p - x) * direction > 0]
        g = lambda m: fn(m, dist.logpdf(m))  # noqa: E731
        total = 0.0
        start = x
        for p in sorted(bps, reverse=direction < 0):
            total += integrate(g, start, p, tol=1e-13).value * direction
            start = p
        total += integrate_halfline(g, start, direction, tol=1e-13).value
        return total

    def _edge(self, direction):
        target = 0.5 * _TAIL_MASS
        k = self.factor.kink
        x0 = 1.0 if k is None else k + direction
        x = x0
        while self._tail(x, direction) > target:
            x += direction * max(1.0, abs(x))
        mass = lambda y: self._tail(y, direction) - target  # noqa: E731
        a, b = sorted((x0, x))
        if mass(a) * mass(b) > 0:
            edge = x
        else:
            edge = optimize.brentq(mass, a, b, xtol=1e-10)
        return edge, self._tail(edge, direction)

    def _invert_tail(self, u, direction):
        edge = self.hi if direction > 0 else self.lo
        x = edge
        while self._tail(x, direction) > u:
            x += direction * max(1.0, abs(x))
        a, b = sorted((edge, x))
        return optimize.brentq(lambda y: self._tail(y, direction) - u, a, b, xtol=1e-12)

    def draw(self, rng, n):
        out = np.empty(n)
        cat = rng.random(n)
        low = cat < self.lower_mass
        high = cat >= 1.0 - self.upper_mass
        bulk = ~(low | high)
        nb = int(bulk.sum())
        got = []
        have = 0
        while have < nb:
            batch = max(1024, int(1.2 * (nb - have) / max(self.acceptance, 1e-3)) + 64)
            batch = min(batch, 1 << 22)
            cell = np.searchsorted(self.cell_cdf, rng.random(batch), side="right")
            cell = np.minimum(cell, self.cell_cdf.size - 1)
            m = self.factor.dist.sample_truncated(rng, self.edges[cell], self.edges[cell + 1], batch)
            wm = self.cell_wmax[cell]
            keep = m[rng.random(batch) * wm < self.w(m)]
            got.append(keep)
            have += keep.size
        out[bulk] = np.concatenate(got)[:nb] if got else np.empty(0)
        for mask, direction, mass in ((low, -1, self.lower_mass), (high, 1, self.upper_mass)):
            for idx in np.flatnonzero(mask):
                out[idx] = self._invert_tail(rng.uniform(0.0, mass), direction)
        return out


@lru_cache(maxsize=64)
def _tilted_sampler(factor: AffineFactor, alpha: float) -> _TiltedSampler:
    return _TiltedSampler(factor, alpha)


def check_tilt(factor: AffineFactor, alpha: float, tol: float = 1e-6):
    if isinstance(factor.dist, PointMass):
        # any tilt of a Dirac law is the same Dirac law
        return
    m = abs_moment(factor, alpha)
    if abs(m - 1.0) > tol:
        raise TiltNotNormalized(
            "E|b+cM|^%g = %.10g; the tilt is not a probability" % (alpha, m)
        )


def tilted_sample(factor: AffineFactor, alpha: float, rng: np.random.Generator, size=None):
    """Draw M under the law tilted by |b + cM|**alpha."""
    check_tilt(factor, alpha)
    if isinstance(factor.dist, PointMass):
        return factor.dist.sample(rng, size)
    n = 1 if size is None else int(np.prod(size))
    out = _tilted_sampler(factor, float(alpha)).draw(rng, n)
    return float(out[0]) if size is None else out.reshape(size)
