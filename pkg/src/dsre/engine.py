"""Streaming simulation of diagonal stochastic recurrence equations.

The engine runs X_t = Diag(b + c M_t) X_{t-1} + Q_t from X_0 = 0 and feeds
consecutive observations to online sinks. Innovations for step g come from a
Philox substream keyed by (seed, (g - 1) // RNG_BLOCK), so any chunk of the
trajectory can be generated without replaying earlier draws. Chunks after the
first restart from the zero state W steps early; the contraction of the
recursion makes the restarted path coincide with the sequential one.
"""

from __future__ import annotations

import math
import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numba
import numpy as np

from .distributions import AffineFactor, ScalarDist, log_moment
from .exceptions import ConfigError, DimensionError

RNG_BLOCK = 1 << 16
DEFAULT_BURN_IN = 10_000
DEFAULT_CHUNK = 1 << 20
MIN_WARMUP = 64


# ---------------------------------------------------------------------------
# laws of Q


def psd_cholesky(cov, tol=1e-12):
    """Lower-triangular L with L @ L.T == cov for a PSD matrix.

    Zero pivots are allowed (singular covariances); negative pivots raise.
    """
    a = np.array(cov, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError("covariance must be square")
    if not np.allclose(a, a.T, atol=tol, rtol=0):
        raise ValueError("covariance must be symmetric")
    d = a.shape[0]
    L = np.zeros_like(a)
    scale = max(1.0, float(np.max(np.abs(np.diag(a))))) if d else 1.0
    for j in range(d):
        pivot = a[j, j] - np.dot(L[j, :j], L[j, :j])
        if pivot < -tol * scale:
            raise ValueError("covariance is not positive semidefinite")
        if pivot <= tol * scale:
            continue
        L[j, j] = math.sqrt(pivot)
        for i in range(j + 1, d):
            L[i, j] = (a[i, j] - np.dot(L[i, :j], L[j, :j])) / L[j, j]
    # rows below a zero pivot must be consistent with it
    if not np.allclose(L @ L.T, a, atol=1e-9 * scale, rtol=0):
        raise ValueError("covariance is not positive semidefinite")
    return L


@dataclass(frozen=True)
class GaussianVector:
    covariance: tuple

    def __post_init__(self):
        cov = np.asarray(self.covariance, dtype=float)
        object.__setattr__(self, "covariance", tuple(map(tuple, cov.tolist())))
        object.__setattr__(self, "_chol", psd_cholesky(cov))

    @property
    def d(self):
        return len(self.covariance)

    def draw(self, rng, n):
        z = rng.standard_normal((self.d, n))
        return (self._chol @ z).T

    def marginal_sample(self, i, rng, n):
        return math.sqrt(self.covariance[i][i]) * rng.standard_normal(n)

    def describe(self):
        return {"q_law": "gaussian", "sigma": [list(r) for r in self.covariance]}


@dataclass(frozen=True)
class ConstantVector:
    q: tuple

    def __post_init__(self):
        q = tuple(float(v) for v in self.q)
        if not all(math.isfinite(v) for v in q):
            raise ValueError("constant Q must be finite")
        object.__setattr__(self, "q", q)

    @property
    def d(self):
        return len(self.q)

    def draw(self, rng, n):
        return None

    def marginal_sample(self, i, rng, n):
        return np.full(n, self.q[i])

    def describe(self):
        return {"q_law": "constant", "a": list(self.q)}


@dataclass(frozen=True)
class IndependentMarginals:
    marginals: tuple

    @property
    def d(self):
        return len(self.marginals)

    def draw(self, rng, n):
        return np.column_stack([m.sample(rng, n) for m in self.marginals])

    def marginal_sample(self, i, rng, n):
        return self.marginals[i].sample(rng, n)

    def describe(self):
        return {"q_law": "independent", "marginals": [m.describe() for m in self.marginals]}


# ---------------------------------------------------------------------------
# model


def coefficient_blocks(b, c):
    """Group coordinate indices by exact equality of (b_i, c_i)."""
    groups: dict = {}
    for i, key in enumerate(zip(b, c)):
        groups.setdefault(key, []).append(i)
    return [tuple(g) for g in groups.values()]


@dataclass(frozen=True)
class DiagSREModel:
    """Diagonal SRE with one scalar innovation M shared by every coordinate."""

    factors: tuple
    q_law: object
    blocks: tuple = field(init=False)
    case: str = field(init=False)

    def __post_init__(self):
        factors = tuple(self.factors)
        if not factors:
            raise ValueError("model needs at least one coordinate")
        dist = factors[0].dist
        if any(f.dist != dist for f in factors):
            raise ValueError("all factors must share the same law of M")
        if self.q_law.d != len(factors):
            raise DimensionError("Q has dimension %d, model has %d" % (self.q_law.d, len(factors)))
        object.__setattr__(self, "factors", factors)
        blocks = tuple(coefficient_blocks(self.b, self.c))
        object.__setattr__(self, "blocks", blocks)
        if len(blocks) == 1:
            case = "EqualCoefficients"
        elif all(f.b == 0 for f in factors):
            case = "CaseI"
        elif all(f.b > 0 for f in factors) and dist.nonnegative:
            case = "CaseII"
        else:
            case = "Mixed"
        object.__setattr__(self, "case", case)

    @classmethod
    def from_coefficients(cls, b, c, dist: ScalarDist, q_law):
        return cls(tuple(AffineFactor(float(bi), float(ci), dist) for bi, ci in zip(b, c)), q_law)

    @property
    def d(self):
        return len(self.factors)

    @property
    def b(self):
        return np.array([f.b for f in self.factors])

    @property
    def c(self):
        return np.array([f.c for f in self.factors])

    @property
    def dist(self):
        return self.factors[0].dist

    def log_moments(self):
        return [log_moment(f) for f in self.factors]

    def draw_block(self, rng, n):
        """Multipliers (n, d) and additive terms (n, d) or None for constant Q."""
        m = self.dist.sample(rng, n)
        a = self.b[None, :] + self.c[None, :] * m[:, None]
        return a, self.q_law.draw(rng, n)

    def constant_q(self):
        if isinstance(self.q_law, ConstantVector):
            return np.asarray(self.q_law.q)
        return None

    def describe(self):
        out = {
            "kind": "diagonal",
            "b": self.b.tolist(),
            "c": self.c.tolist(),
            "m_dist": self.dist.describe(),
        }
        out.update(self.q_law.describe())
        return out


def step(x, m, q, model):
    """One transition ((b_i + c_i m) x_i + q_i)_i."""
    x = np.asarray(x, dtype=float)
    q = np.asarray(q, dtype=float)
    if x.shape != (model.d,) or q.shape != (model.d,):
        raise DimensionError("state and Q must have length %d" % model.d)
    return (model.b + model.c * m) * x + q


# ---------------------------------------------------------------------------
# kernels


@numba.njit(nogil=True, cache=True)
def _run_var(x0, a, q, out):
    n, d = a.shape
    x = x0.copy()
    for t in range(n):
        for i in range(d):
            x[i] = a[t, i] * x[i] + q[t, i]
            out[t, i] = x[i]
    return x


@numba.njit(nogil=True, cache=True)
def _run_const(x0, a, q, out):
    n, d = a.shape
    x = x0.copy()
    for t in range(n):
        for i in range(d):
            x[i] = a[t, i] * x[i] + q[i]
            out[t, i] = x[i]
    return x


def block_rng(seed, block):
    """Counter-based generator for innovation block ``block``."""
    ss = np.random.SeedSequence(seed, spawn_key=(int(block),))
    return np.random.Generator(np.random.Philox(ss))


def innovations(model, seed, g0, g1):
    """Multipliers and additive terms for steps g0..g1-1 (1-based step index)."""
    d = model.d
    n = g1 - g0
    a = np.empty((n, d))
    qc = model.constant_q()
    q = None if qc is not None else np.empty((n, d))
    pos = 0
    blk = (g0 - 1) // RNG_BLOCK
    while pos < n:
        start = blk * RNG_BLOCK + 1
        lo = g0 + pos - start
        hi = min(RNG_BLOCK, g1 - start)
        ab, qb = model.draw_block(block_rng(seed, blk), RNG_BLOCK)
        take = hi - lo
        a[pos : pos + take] = ab[lo:hi]
        if q is not None:
            q[pos : pos + take] = qb[lo:hi]
        pos += take
        blk += 1
    return a, (q if q is not None else qc)


def run_steps(model, seed, g0, g1, x0=None):
    """Path values for steps g0..g1-1 started from state x0 before step g0."""
    a, q = innovations(model, seed, g0, g1)
    out = np.empty_like(a)
    x = np.zeros(model.d) if x0 is None else np.asarray(x0, dtype=float)
    if q.ndim == 1:
        _run_const(x, a, q, out)
    else:
        _run_var(x, a, q, out)
    return out


def warmup_length(model) -> int:
    """Steps W with (max_i E log|b_i + c_i M|) * W < -40 log 10."""
    worst = max(model.log_moments())
    if worst >= 0:
        return MIN_WARMUP
    return max(MIN_WARMUP, int(math.ceil(40.0 * math.log(10.0) / -worst)) + 1)


# ---------------------------------------------------------------------------
# sinks and driver


class Sink:
    """Online consumer of consecutive observations.

    ``update`` receives a block of observations starting at time index
    ``start`` plus up to ``lookahead`` following observations. ``merge`` must
    be associative; the engine merges chunk results in time order.
    """

    lookahead = 0

    def spawn(self):
        raise NotImplementedError

    def update(self, obs, start, ahead):
        raise NotImplementedError

    def merge(self, other):
        raise NotImplementedError


class TrajectoryRecorder(Sink):
    """Keeps the full path; meant for short runs and dumps."""

    def __init__(self):
        self.parts = []

    def spawn(self):
        return TrajectoryRecorder()

    def update(self, obs, start, ahead):
        self.parts.append((start, obs.copy()))

    def merge(self, other):
        self.parts.extend(other.parts)
        return self

    @property
    def path(self):
        if not self.parts:
            return np.empty((0, 0))
        return np.concatenate([p for _, p in sorted(self.parts, key=lambda x: x[0])])


@dataclass(frozen=True)
class TrajectoryStream:
    model: object
    seed: int
    burn_in: int = DEFAULT_BURN_IN
    length: int = 0
    chunk_size: int = DEFAULT_CHUNK


def _check_stationary(model, force):
    bad = [i for i, v in enumerate(model.log_moments()) if v >= 0]
    if bad and not force:
        raise ConfigError(
            "E log|b_i + c_i M| >= 0 for coordinates %s; refusing to simulate" % bad
        )


def _run_chunk(stream, k, warmup, lookahead, sinks):
    model = stream.model
    t0 = k * stream.chunk_size
    t1 = min(t0 + stream.chunk_size, stream.length)
    total = stream.burn_in + stream.length
    g_first = stream.burn_in + 1 + t0
    g_end = min(stream.burn_in + 1 + t1 + lookahead, total + 1)
    g_start = 1 if k == 0 else max(1, g_first - warmup)
    path = run_steps(model, stream.seed, g_start, g_end)
    skip = g_first - g_start
    obs = path[skip : skip + (t1 - t0)]
    ahead = path[skip + (t1 - t0) :]
    parts = []
    for s in sinks:
        part = s.spawn()
        part.update(obs, t0, ahead[: s.lookahead])
        parts.append(part)
    return parts


def simulate(stream: TrajectoryStream, sinks, workers: int = 1, force: bool = False, warmup=None):
    """Run the stream and fold every observation into each sink.

    Results are identical for any ``workers`` and ``chunk_size``.
    """
    _check_stationary(stream.model, force)
    if stream.length <= 0:
        return sinks
    warmup = warmup_length(stream.model) if warmup is None else int(warmup)
    lookahead = max((s.lookahead for s in sinks), default=0)
    n_chunks = -(-stream.length // stream.chunk_size)

    def job(k):
        return _run_chunk(stream, k, warmup, lookahead, sinks)

    if workers <= 1 or n_chunks == 1:
        results = map(job, range(n_chunks))
        for parts in results:
            for s, p in zip(sinks, parts):
                s.merge(p)
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            for parts in pool.map(job, range(n_chunks)):
                for s, p in zip(sinks, parts):
                    s.merge(p)
    return sinks


def backward_partial_sums(model, n: int, rng, size=None):
    """Truncated backward series sum_{k=1}^n prod_{l<k} (b + c M_l) Q_k.

    Returns one draw of shape (d,), or ``size`` draws of shape (size, d).
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    reps = 1 if size is None else int(size)
    d = model.d
    total = np.zeros((reps, d))
    prod = np.ones((reps, d))
    qc = model.constant_q()
    for _ in range(n):
        a, q = model.draw_block(rng, reps)
        qk = np.broadcast_to(qc, (reps, d)) if q is None else q
        total += prod * qk
        prod *= a
    return total[0] if size is None else total


# ---------------------------------------------------------------------------
# raw dump

DUMP_MAGIC = b"DSRE"
DUMP_VERSION = 1
_HEADER = struct.Struct("<4sIIIQQ")  # 32 bytes


def write_dump(path, traj):
    traj = np.ascontiguousarray(traj, dtype="<f8")
    n, d = traj.shape
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(DUMP_MAGIC, DUMP_VERSION, d, 0, n, 0))
        fh.write(traj.tobytes())


def read_dump(path):
    with open(path, "rb") as fh:
        magic, version, d, _, n, _ = _HEADER.unpack(fh.read(_HEADER.size))
        if magic != DUMP_MAGIC:
            raise ValueError("not a trajectory dump")
        data = np.frombuffer(fh.read(), dtype="<f8")
    return data.reshape(n, d)
