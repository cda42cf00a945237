"""Vector-scaling radius, spectral components and exceedance statistics."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np
from scipy import stats

from .engine import Sink
from .exceptions import (
    DimensionError,
    InsufficientExceedances,
    NonPositiveConstant,
    WindowTooShort,
    ZeroVector,
)

MIN_EXCEEDANCES = 50
HEAP_SLACK = 0.25


def log_vs_norm(x, alpha):
    """log max_i |x_i|**alpha_i along the last axis."""
    x = np.asarray(x, dtype=float)
    alpha = np.asarray(alpha, dtype=float)
    with np.errstate(divide="ignore"):
        return np.max(alpha * np.log(np.abs(x)), axis=-1)


def vs_norm(x, alpha):
    """max_i |x_i|**alpha_i, evaluated in log space."""
    return np.exp(log_vs_norm(x, alpha))


def spectral_component(x, alpha):
    """(||x||_alpha**(-1/alpha_i) x_i)_i; has max-norm one."""
    x = np.asarray(x, dtype=float)
    alpha = np.asarray(alpha, dtype=float)
    lr = log_vs_norm(x, alpha)
    if np.any(np.isneginf(lr)):
        raise ZeroVector("spectral component of the zero vector")
    return _scale(x, lr, alpha)


def _scale(x, log_radius, alpha):
    lr = np.asarray(log_radius)[..., None]
    return x * np.exp(-lr / alpha)


def _lerp(a, b, t):
    # same branch structure as numpy's linear quantile interpolation
    return np.where(t >= 0.5, b - (b - a) * (1 - t), a + (b - a) * t)


def _top_order(log_r, times):
    """Indices ordering records by decreasing radius, earlier time first on ties."""
    return np.lexsort((times, -log_r))


def top_k_indices(values, k):
    """Indices of the k largest values, largest first, earlier index first on ties."""
    n = values.size
    if n > k:
        kth = np.partition(values, n - k)[n - k]
        idx = np.flatnonzero(values >= kth)
    else:
        idx = np.arange(n)
    return idx[_top_order(values[idx], idx)[:k]]


@dataclass
class ExceedanceSet:
    """Records whose radius exceeds the empirical quantile threshold."""

    threshold: float
    quantile: float
    n_observations: int
    alpha: np.ndarray
    time_index: np.ndarray
    radius: np.ndarray
    spectral: np.ndarray
    window: np.ndarray | None = None

    @property
    def d(self):
        return self.alpha.size

    def __len__(self):
        return self.time_index.size

    @property
    def h(self):
        return 0 if self.window is None else self.window.shape[1] - 1

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            header = ["time_index", "radius"] + ["spectral_%d" % (i + 1) for i in range(self.d)]
            for s in range(1, self.h + 1):
                header += ["lag%d_%d" % (s, i + 1) for i in range(self.d)]
            w.writerow(header)
            for k in range(len(self)):
                row = [int(self.time_index[k]), repr(float(self.radius[k]))]
                row += [repr(float(v)) for v in self.spectral[k]]
                for s in range(1, self.h + 1):
                    row += [repr(float(v)) for v in self.window[k, s]]
                w.writerow(row)


class ExceedanceSink(Sink):
    """Bounded top-K collector of the largest radii with forward windows.

    Keeps ceil(K (1 + slack)) candidates, K = length * (1 - quantile), ordered
    by decreasing radius with ties broken by earlier time. ``merge`` is union
    followed by re-truncation.
    """

    def __init__(self, alpha, length, quantile=1 - 1e-5, window=0, slack=HEAP_SLACK):
        if not 0 < quantile < 1:
            raise ValueError("quantile must lie in (0, 1)")
        self.alpha = np.asarray(alpha, dtype=float)
        self.length = int(length)
        self.quantile = float(quantile)
        self.lookahead = int(window)
        self.slack = slack
        k = self.length * (1.0 - self.quantile)
        self.capacity = max(int(math.ceil(k * (1.0 + slack))), int(math.ceil(k)) + 2)
        d = self.alpha.size
        self.n_seen = 0
        self.log_r = np.empty(0)
        self.times = np.empty(0, dtype=np.int64)
        self.windows = np.empty((0, self.lookahead + 1, d))

    def spawn(self):
        return ExceedanceSink(self.alpha, self.length, self.quantile, self.lookahead, self.slack)

    def update(self, obs, start, ahead):
        n = obs.shape[0]
        self.n_seen += n
        if n == 0:
            return
        lr = log_vs_norm(obs, self.alpha)
        idx = top_k_indices(lr, self.capacity)
        full = np.concatenate([obs, ahead]) if len(ahead) else obs
        h = self.lookahead
        win = np.full((idx.size, h + 1, obs.shape[1]), np.nan)
        for s in range(h + 1):
            ok = idx + s < full.shape[0]
            win[ok, s] = full[idx[ok] + s]
        self._absorb(lr[idx], idx + start, win)

    def _absorb(self, lr, times, win):
        lr = np.concatenate([self.log_r, lr])
        times = np.concatenate([self.times, times])
        win = np.concatenate([self.windows, win])
        order = _top_order(lr, times)[: self.capacity]
        self.log_r, self.times, self.windows = lr[order], times[order], win[order]

    def merge(self, other):
        self.n_seen += other.n_seen
        self._absorb(other.log_r, other.times, other.windows)
        return self

    def finalize(self, min_exceedances=MIN_EXCEEDANCES) -> ExceedanceSet:
        n = self.n_seen
        if n == 0:
            raise InsufficientExceedances("no observations")
        v = (n - 1) * self.quantile
        lo = int(math.floor(v))
        frac = v - lo
        # positions counted from the top of the descending candidate list
        i_lo, i_hi = n - 1 - lo, n - 2 - lo
        radius = np.exp(self.log_r)
        if i_lo >= radius.size:
            raise InsufficientExceedances("candidate heap too small for the quantile")
        r_lo = radius[i_lo]
        r_hi = radius[max(i_hi, 0)] if i_hi >= 0 else r_lo
        threshold = float(_lerp(r_lo, r_hi, frac))
        m = n - 1 - lo
        if m < min_exceedances:
            raise InsufficientExceedances(
                "%d exceedances above the %.6g quantile (need %d); increase the length"
                % (m, self.quantile, min_exceedances)
            )
        lr = self.log_r[:m]
        win = _scale(self.windows[:m], lr[:, None], self.alpha)
        return ExceedanceSet(
            threshold=threshold,
            quantile=self.quantile,
            n_observations=n,
            alpha=self.alpha.copy(),
            time_index=self.times[:m].copy(),
            radius=radius[:m].copy(),
            spectral=win[:, 0, :].copy(),
            window=win if self.lookahead > 0 else None,
        )


@dataclass
class AngularHistogram:
    bins: int
    edges: np.ndarray
    mass: np.ndarray
    n_exceedances: int

    @property
    def centers(self):
        return 0.5 * (self.edges[1:] + self.edges[:-1])

    def mass_near(self, points, radius):
        """Total mass of bins whose centre lies within ``radius`` of any point."""
        c = self.centers
        near = np.zeros(c.size, dtype=bool)
        for p in points:
            near |= np.abs(c - p) <= radius
        return float(self.mass[near].sum())

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["bin_left", "bin_right", "mass"])
            for lo, hi, m in zip(self.edges[:-1], self.edges[1:], self.mass):
                w.writerow([repr(float(lo)), repr(float(hi)), repr(float(m))])


def angles(spectral, absolute=True):
    """arctan(theta_1 / theta_2) per record; theta_2 = 0 maps to +-pi/2."""
    spectral = np.asarray(spectral, dtype=float)
    if spectral.ndim != 2 or spectral.shape[1] != 2:
        raise DimensionError("angular summaries need d = 2; use block_mass for d > 2")
    t1, t2 = spectral[:, 0], spectral[:, 1]
    if absolute:
        return np.arctan2(np.abs(t1), np.abs(t2))
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.arctan(t1 / t2)
    return np.where(t2 == 0, np.copysign(0.5 * np.pi, t1), out)


def angular_histogram(exc, bins=100, absolute=True) -> AngularHistogram:
    spectral = exc.spectral if isinstance(exc, ExceedanceSet) else np.asarray(exc)
    theta = angles(spectral, absolute)
    lo = 0.0 if absolute else -0.5 * np.pi
    edges = np.linspace(lo, 0.5 * np.pi, bins + 1)
    counts, _ = np.histogram(theta, bins=edges)
    n = theta.size
    mass = counts / n if n else counts.astype(float)
    return AngularHistogram(bins, edges, mass, n)


def block_mass(exc, blocks):
    """Per-block share of records and mean leakage outside the assigned block.

    Each record is assigned to the block holding its largest |theta_i|; the
    leakage of a record is max |theta_i| over coordinates outside that block.
    """
    spectral = np.abs(exc.spectral if isinstance(exc, ExceedanceSet) else np.asarray(exc))
    d = spectral.shape[1]
    owner = np.empty(d, dtype=int)
    seen = []
    for k, blk in enumerate(blocks):
        for i in blk:
            owner[i] = k
            seen.append(i)
    if sorted(seen) != list(range(d)):
        raise ValueError("blocks must partition the coordinates")
    assigned = owner[np.argmax(spectral, axis=1)]
    fractions = np.bincount(assigned, minlength=len(blocks)) / max(len(assigned), 1)
    outside = np.where(owner[None, :] != assigned[:, None], spectral, 0.0)
    leak = outside.max(axis=1) if d else np.zeros(len(assigned))
    return fractions, float(leak.mean()) if leak.size else 0.0


def empirical_tail_process(exc: ExceedanceSet, lag: int):
    """Sample of the scaled vectors at ``lag`` for records with a complete window."""
    if lag < 0 or lag > exc.h:
        raise WindowTooShort("lag %d exceeds the collected window %d" % (lag, exc.h))
    if lag == 0:
        return exc.spectral
    w = exc.window[:, lag, :]
    return w[np.all(np.isfinite(w), axis=1)]


def pushforward(model, theta, rng, draws=1):
    """Apply ``draws`` independent multipliers Diag(b + c M) to each row of theta."""
    theta = np.asarray(theta, dtype=float)
    rep = np.repeat(theta, draws, axis=0)
    m = model.dist.sample(rng, rep.shape[0])
    return (model.b[None, :] + model.c[None, :] * m[:, None]) * rep


def spectral_recursion_test(exc: ExceedanceSet, model, rng, lag=1, draws=50):
    """Coordinate-wise two-sample KS p-values: empirical lag-``lag`` sample vs pushforward."""
    emp = empirical_tail_process(exc, lag)
    prev = exc.spectral if lag == 1 else exc.window[:, lag - 1, :]
    ok = np.all(np.isfinite(exc.window[:, lag, :]), axis=1) & np.all(np.isfinite(prev), axis=1)
    push = pushforward(model, prev[ok], rng, draws)
    return [float(stats.ks_2samp(emp[:, i], push[:, i]).pvalue) for i in range(exc.d)]


@dataclass
class WeightedAngularSample:
    directions: np.ndarray
    weights: np.ndarray  # raw ||a^-1 theta^alpha||
    normalized: np.ndarray


def nonstandard_angular(exc, a_hat, alpha) -> WeightedAngularSample:
    """Directions of a^-1 |theta|^alpha with importance weight ||a^-1 |theta|^alpha||."""
    a_hat = np.asarray(a_hat, dtype=float)
    if np.any(a_hat <= 0) or not np.all(np.isfinite(a_hat)):
        raise NonPositiveConstant("Kesten-Goldie constants must be positive")
    spectral = exc.spectral if isinstance(exc, ExceedanceSet) else np.asarray(exc, dtype=float)
    v = np.abs(spectral) ** np.asarray(alpha, dtype=float) / a_hat
    w = np.max(v, axis=1)
    return WeightedAngularSample(v / w[:, None], w, w / w.sum())
