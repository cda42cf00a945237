"""Estimators and checks for the extremal predictions of diagonal SREs."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .distributions import (
    AffineFactor,
    StandardNormal,
    check_tilt,
    log_moment,
    tilted_expect,
    tilted_sample,
)
from .engine import GaussianVector, Sink
from .exceptions import DegenerateSample, PassageTimeout
from .tail_index import solve_alpha
from .vsrv import top_k_indices

EULER_GAMMA = 0.5772156649
BEKK_BOUND = 2.0 * math.exp(EULER_GAMMA)
PASSAGE_CAP = 1_000_000
Z99 = 2.5758293035489


# ---------------------------------------------------------------------------
# stationarity


@dataclass
class StationarityReport:
    log_moment: list
    passes: list
    closed_form: list | None = None  # c_i**2 for BEKK models
    closed_form_passes: list | None = None

    @property
    def agree(self):
        if self.closed_form_passes is None:
            return True
        return self.passes == self.closed_form_passes


def is_bekk(model):
    return (
        isinstance(getattr(model, "dist", None), StandardNormal)
        and all(f.b == 0 for f in model.factors)
        and isinstance(getattr(model, "q_law", None), GaussianVector)
    )


def stationarity_check(model) -> StationarityReport:
    """Sign of E log|b_i + c_i M| per coordinate, plus c_i**2 < 2 e^gamma for BEKK."""
    logs = [log_moment(f) for f in model.factors]
    report = StationarityReport(logs, [v < 0 for v in logs])
    if is_bekk(model):
        sq = [f.c * f.c for f in model.factors]
        report.closed_form = sq
        report.closed_form_passes = [v < BEKK_BOUND for v in sq]
    return report


# ---------------------------------------------------------------------------
# marginal tails


def hill_estimator(top, k: int) -> float:
    """Hill estimate k / sum_{j<=k} log(x_(j) / x_(k+1)) from descending order statistics."""
    top = np.asarray(top, dtype=float)
    if not 0 < k < top.size:
        raise ValueError("need 0 < k < number of order statistics")
    if np.any(top[: k + 1] <= 0):
        raise ValueError("order statistics must be positive")
    logs = np.log(top[:k]) - math.log(top[k])
    denom = float(logs.sum())
    if denom <= 0:
        raise DegenerateSample("all top order statistics are equal")
    return k / denom


def default_hill_k(n: int) -> int:
    return min(int(2 * math.sqrt(n)), 5000)


class MarginalTopSink(Sink):
    """Largest k_max values of each coordinate (of |X| when ``absolute``)."""

    def __init__(self, d, k_max=5001, absolute=True):
        self.d = d
        self.k_max = int(k_max)
        self.absolute = absolute
        self.n_seen = 0
        self.top = np.empty((0, d))

    def spawn(self):
        return MarginalTopSink(self.d, self.k_max, self.absolute)

    def update(self, obs, start, ahead):
        self.n_seen += obs.shape[0]
        v = np.abs(obs) if self.absolute else obs
        self._absorb(v)

    def _absorb(self, v):
        v = np.concatenate([self.top, v])
        if v.shape[0] > self.k_max:
            v = -np.partition(-v, self.k_max - 1, axis=0)[: self.k_max]
        self.top = v

    def merge(self, other):
        self.n_seen += other.n_seen
        self._absorb(other.top)
        return self

    def order_statistics(self, i):
        return np.sort(self.top[:, i])[::-1]

    def hill(self, k=None):
        k = default_hill_k(self.n_seen) if k is None else k
        return [hill_estimator(self.order_statistics(i), k) for i in range(self.d)]

    def kesten_constants(self, alpha, tail=1e-4):
        """a_i estimated as u_i**alpha_i * P(X_i > u_i) at the (1 - tail) marginal quantile."""
        j = int(round(tail * self.n_seen))
        if not 0 < j < self.top.shape[0]:
            raise ValueError("tail level not covered by the stored order statistics")
        out = []
        for i in range(self.d):
            u = self.order_statistics(i)[j]
            out.append(u ** alpha[i] * j / self.n_seen)
        return out


# ---------------------------------------------------------------------------
# joint exceedances


def _empirical_quantile(desc, n, p):
    """numpy-style linear quantile of n values from their top order statistics."""
    v = (n - 1) * p
    lo = int(math.floor(v))
    frac = v - lo
    i_lo, i_hi = n - 1 - lo, max(n - 2 - lo, 0)
    if i_lo >= desc.size:
        raise ValueError("quantile level %g not covered by stored values" % p)
    a, b = desc[i_lo], desc[i_hi]
    return float(b - (b - a) * (1 - frac)) if frac >= 0.5 else float(a + (b - a) * frac)


class JointExceedanceSink(Sink):
    """Top values of two coordinates with their time indices.

    Stores enough of each marginal to place thresholds at every level of the
    grid, so joint exceedance counts come out of one pass.
    """

    def __init__(self, pair, length, grid=(0.99, 0.999, 0.9999, 1 - 1e-5), absolute=False, slack=0.25):
        self.pair = tuple(pair)
        self.grid = tuple(sorted(grid))
        self.length = int(length)
        self.absolute = absolute
        self.slack = slack
        k = self.length * (1 - self.grid[0])
        self.capacity = max(int(math.ceil(k * (1 + slack))), int(math.ceil(k)) + 2)
        self.n_seen = 0
        self.vals = [np.empty(0), np.empty(0)]
        self.times = [np.empty(0, dtype=np.int64), np.empty(0, dtype=np.int64)]

    def spawn(self):
        return JointExceedanceSink(self.pair, self.length, self.grid, self.absolute, self.slack)

    def update(self, obs, start, ahead):
        self.n_seen += obs.shape[0]
        for s, i in enumerate(self.pair):
            v = np.abs(obs[:, i]) if self.absolute else obs[:, i]
            idx = top_k_indices(v, self.capacity)
            self._absorb(s, v[idx], idx + start)

    def _absorb(self, s, v, t):
        v = np.concatenate([self.vals[s], v])
        t = np.concatenate([self.times[s], t])
        order = np.lexsort((t, -v))[: self.capacity]
        self.vals[s], self.times[s] = v[order], t[order]

    def merge(self, other):
        self.n_seen += other.n_seen
        for s in range(2):
            self._absorb(s, other.vals[s], other.times[s])
        return self

    def curve(self):
        """Rows (quantile, u, u * P(both), P(j exceeds | i exceeds), n_i, n_both)."""
        n = self.n_seen
        rows = []
        for p in self.grid:
            try:
                thr = [_empirical_quantile(self.vals[s], n, p) for s in range(2)]
            except ValueError:
                continue
            sets = [self.times[s][self.vals[s] > thr[s]] for s in range(2)]
            n_i = sets[0].size
            n_both = np.intersect1d(sets[0], sets[1], assume_unique=True).size
            u = 1.0 / (1.0 - p)
            rows.append(
                {
                    "quantile": p,
                    "u": u,
                    "joint_scaled": u * n_both / n,
                    "conditional": n_both / n_i if n_i else 0.0,
                    "count_i": int(n_i),
                    "count_both": int(n_both),
                    "empty": n_i == 0,
                }
            )
        return rows


def joint_exceedance_curve(sink: JointExceedanceSink):
    return sink.curve()


def write_curve_csv(rows, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["quantile", "u", "joint_scaled", "conditional", "count_i", "count_both"])
        for r in rows:
            w.writerow(
                [repr(r["quantile"]), repr(r["u"]), repr(r["joint_scaled"]),
                 repr(r["conditional"]), r["count_i"], r["count_both"]]
            )


# ---------------------------------------------------------------------------
# tilted drifts


@dataclass
class TiltedDriftPair:
    mu_1_given_1: float
    mu_j_given_1: float
    jensen_gap: float
    ci_halfwidth: float
    alpha_1: float
    alpha_j: float
    mc_mu_1_given_1: float = math.nan
    mc_mu_j_given_1: float = math.nan
    mc_jensen_gap: float = math.nan
    mc_se: dict = field(default_factory=dict)


def tilted_drift(
    factor_1: AffineFactor,
    factor_j: AffineFactor,
    alpha_1: float,
    alpha_j: float | None = None,
    rng=None,
    n_mc: int = 200_000,
) -> TiltedDriftPair:
    """Drifts E[log|b_k + c_k M| |b_1 + c_1 M|^alpha_1], k = 1, j, and the Jensen gap.

    Quadrature gives the reported values; a tilted Monte Carlo run (skipped
    when ``rng`` is None) supplies the oracle estimates and a 99% half-width
    for the gap.
    """
    check_tilt(factor_1, alpha_1)
    if alpha_j is None:
        alpha_j = solve_alpha(factor_j)
    extra = factor_j.breakpoints()
    mu11 = tilted_expect(factor_1, alpha_1, factor_1.log_abs).value
    muj1 = tilted_expect(factor_1, alpha_1, factor_j.log_abs, extra).value
    gap = alpha_j * muj1 - alpha_1 * mu11
    out = TiltedDriftPair(mu11, muj1, gap, math.nan, alpha_1, alpha_j)
    if rng is not None:
        m = tilted_sample(factor_1, alpha_1, rng, n_mc)
        w1 = factor_1.log_abs(m)
        wj = factor_j.log_abs(m)
        g = alpha_j * wj - alpha_1 * w1
        se = {
            "mu_1_given_1": float(w1.std(ddof=1) / math.sqrt(n_mc)),
            "mu_j_given_1": float(wj.std(ddof=1) / math.sqrt(n_mc)),
            "jensen_gap": float(g.std(ddof=1) / math.sqrt(n_mc)),
        }
        out.mc_mu_1_given_1 = float(w1.mean())
        out.mc_mu_j_given_1 = float(wj.mean())
        out.mc_jensen_gap = float(g.mean())
        out.mc_se = se
        out.ci_halfwidth = Z99 * se["jensen_gap"]
    return out


# ---------------------------------------------------------------------------
# first passage


def window_width(u):
    """sqrt(log u * log log u)."""
    lu = math.log(u)
    return math.sqrt(lu * math.log(lu))


@dataclass
class FirstPassageStats:
    u: float
    passage_times: np.ndarray
    log_products: np.ndarray  # S_{T_u}
    window_violation_rate: float
    center: float
    halfwidth: float

    @property
    def mean_drift(self):
        return float(np.mean(self.log_products / self.passage_times))


def first_passage(
    factor_1: AffineFactor,
    alpha_1: float,
    q_sampler,
    u_grid,
    replicas: int = 10_000,
    C: float = 2.0,
    rng=None,
    cap: int = PASSAGE_CAP,
    batch: int = 64,
):
    """First time the backward sum sum_k prod_{l<k} |b+cM_l| |Q_k| exceeds u**(1/alpha_1).

    M is drawn from the tilted law, under which passage is almost sure. The same
    replicas serve every u in the grid. ``q_sampler(rng, n)`` draws Q_{k,1}.
    """
    rng = np.random.default_rng() if rng is None else rng
    u_grid = sorted(float(u) for u in u_grid)
    for u in u_grid:
        if not math.log(math.log(u)) > 0:
            raise ValueError("u must exceed e so that log log u > 0")
    check_tilt(factor_1, alpha_1)
    mu = tilted_expect(factor_1, alpha_1, factor_1.log_abs).value
    levels = np.array([math.log(u) / alpha_1 for u in u_grid])
    k = len(u_grid)
    total = np.zeros(replicas)
    logprod = np.zeros(replicas)
    T = np.zeros((k, replicas), dtype=np.int64)
    S = np.zeros((k, replicas))
    n = 0
    pending = np.ones(replicas, dtype=bool)
    while pending.any():
        idx = np.flatnonzero(pending)
        m = tilted_sample(factor_1, alpha_1, rng, (batch, idx.size))
        q = np.abs(np.stack([q_sampler(rng, idx.size) for _ in range(batch)]))
        w = factor_1.log_abs(m)
        for s in range(batch):
            n += 1
            total[idx] += np.exp(logprod[idx]) * q[s]
            logprod[idx] += w[s]
            with np.errstate(divide="ignore"):
                lt = np.log(total[idx])
            for j in range(k):
                hit = (T[j, idx] == 0) & (lt > levels[j])
                T[j, idx[hit]] = n
                S[j, idx[hit]] = logprod[idx[hit]]
        pending = T[-1] == 0
        if n >= cap and pending.any():
            raise PassageTimeout("passage not reached within %d steps" % cap)
    out = []
    for j, u in enumerate(u_grid):
        center = math.log(u) / (mu * alpha_1)
        half = C * window_width(u)
        rate = float(np.mean(np.abs(T[j] - center) >= half))
        out.append(FirstPassageStats(u, T[j].copy(), S[j].copy(), rate, center, half))
    return out


# ---------------------------------------------------------------------------
# report


@dataclass
class DiagnosticsReport:
    alpha: list
    stationarity: dict
    drifts: dict = field(default_factory=dict)
    curve: list = field(default_factory=list)
    hill: list = field(default_factory=list)
    block_mass: dict = field(default_factory=dict)
    first_passage: list = field(default_factory=list)

    def to_json(self):
        return json.dumps(asdict(self), indent=2, sort_keys=True, default=_jsonable)


def _jsonable(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    raise TypeError(type(o))
