"""Named specializations (diagonal BEKK-ARCH(1), CCC-GARCH(1,1)), block
structure and the model config file format."""

from __future__ import annotations

import configparser
import hashlib
import json
import math
import warnings
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .distributions import ChiSquare1, PointMass, StandardNormal, log_moment
from .engine import (
    DEFAULT_BURN_IN,
    ConstantVector,
    DiagSREModel,
    GaussianVector,
    IndependentMarginals,
    coefficient_blocks,
    psd_cholesky,
)
from .exceptions import CaseOrderingViolated, ConfigError, StationarityViolated
from .tail_index import TailIndexProfile, solve_profile

NEAR_EQUAL_ALPHA = 1e-3


@lru_cache(maxsize=128)
def tail_profile(model) -> TailIndexProfile:
    return solve_profile(model.factors)


def _raise_if_nonstationary(model):
    from .diagnostics import stationarity_check  # noqa: PLC0415

    report = stationarity_check(model)
    bad = [i for i, ok in enumerate(report.passes) if not ok]
    if bad:
        raise StationarityViolated(
            "top-Lyapunov condition fails on coordinate(s) %s" % [i + 1 for i in bad], bad
        )


def build_bekk(c, sigma) -> DiagSREModel:
    """Diagonal BEKK-ARCH(1): M ~ N(0,1), b = 0, Q ~ N(0, sigma)."""
    c = [float(v) for v in c]
    if any(v == 0 for v in c):
        raise ValueError("BEKK coefficients must be nonzero")
    model = DiagSREModel.from_coefficients(
        [0.0] * len(c), c, StandardNormal(), GaussianVector(sigma)
    )
    _raise_if_nonstationary(model)
    tail_profile(model)
    return model


def _check_case_ordering(b, c, alpha):
    d = len(b)
    for i in range(d):
        for j in range(d):
            if alpha[i] > alpha[j] and (b[i], c[i]) != (b[j], c[j]):
                if c[j] / c[i] < b[j] / b[i]:
                    raise CaseOrderingViolated(
                        "alpha_%d > alpha_%d requires c_%d/c_%d >= b_%d/b_%d"
                        % (i + 1, j + 1, j + 1, i + 1, j + 1, i + 1)
                    )


def build_ccc_degenerate(a, b, c) -> DiagSREModel:
    """Volatility SRE of CCC-GARCH(1,1) with N_t = (1,...,1) Z_t: M = Z**2, Q = a."""
    a, b, c = ([float(v) for v in x] for x in (a, b, c))
    if not (len(a) == len(b) == len(c)):
        raise ValueError("a, b, c must have equal length")
    if min(a + b + c) <= 0:
        raise ValueError("CCC coefficients must be positive")
    model = DiagSREModel.from_coefficients(b, c, ChiSquare1(), ConstantVector(a))
    _raise_if_nonstationary(model)
    _check_case_ordering(b, c, tail_profile(model).alpha)
    return model


@dataclass(frozen=True)
class CCCGeneralModel:
    """CCC-GARCH(1,1) volatilities with N_t ~ N(0, R): coordinate i uses M_i = N_{t,i}**2.

    This leaves the single-innovation class; it only plugs into the engine.
    """

    a: tuple
    b: tuple
    c: tuple
    correlation: tuple
    case = "CCCGeneral"

    def __post_init__(self):
        for name in ("a", "b", "c"):
            object.__setattr__(self, name, tuple(float(v) for v in getattr(self, name)))
        r = np.asarray(self.correlation, dtype=float)
        if r.shape != (self.d, self.d) or not np.allclose(np.diag(r), 1.0):
            raise ValueError("correlation must be a d x d matrix with unit diagonal")
        object.__setattr__(self, "correlation", tuple(map(tuple, r.tolist())))
        object.__setattr__(self, "_chol", psd_cholesky(r))

    @property
    def d(self):
        return len(self.a)

    @property
    def dist(self):
        return ChiSquare1()

    @property
    def factors(self):
        return DiagSREModel.from_coefficients(self.b, self.c, ChiSquare1(), ConstantVector(self.a)).factors

    @property
    def blocks(self):
        return tuple(coefficient_blocks(self.b, self.c))

    def log_moments(self):
        return [log_moment(f) for f in self.factors]

    def constant_q(self):
        return np.asarray(self.a)

    def draw_block(self, rng, n):
        z = self._chol @ rng.standard_normal((self.d, n))
        m = (z * z).T
        return np.asarray(self.b)[None, :] + np.asarray(self.c)[None, :] * m, None

    def describe(self):
        return {
            "kind": "ccc_general",
            "a": list(self.a),
            "b": list(self.b),
            "c": list(self.c),
            "sigma": [list(r) for r in self.correlation],
        }


def build_ccc_general(a, b, c, correlation) -> CCCGeneralModel:
    model = CCCGeneralModel(tuple(a), tuple(b), tuple(c), correlation)
    bad = [i for i, v in enumerate(model.log_moments()) if v >= 0]
    if bad:
        raise StationarityViolated(
            "E log(b_i + c_i Z^2) >= 0 on coordinate(s) %s" % [i + 1 for i in bad], bad
        )
    return model


# ---------------------------------------------------------------------------
# block structure


@dataclass(frozen=True)
class SupportPrediction:
    kind: str  # "FullSphere", "ConvexConeAtom" or "Axes"
    block: tuple
    direction: tuple | None = None


@dataclass
class BlockStructure:
    blocks: list
    alpha: list  # common index per block
    case_matrix: dict
    predicted_support: list
    permutation: list = field(default_factory=list)

    def angular_atoms(self):
        """Predicted angles arctan(|theta_1|/|theta_2|) for d = 2 models."""
        out = []
        for sp in self.predicted_support:
            if sp.kind == "Axes":
                out.append(0.5 * math.pi if sp.block == (0,) else 0.0)
            elif sp.kind == "ConvexConeAtom":
                u = sp.direction
                out.append(math.atan2(abs(u[0]), abs(u[1])))
        return out


def _pair_case(model, i, j):
    """Classify coordinates with alpha_i > alpha_j."""
    bi, bj = model.b[i], model.b[j]
    ci, cj = model.c[i], model.c[j]
    symmetric = isinstance(model.dist, StandardNormal)
    if bi == bj == 0:
        if symmetric:
            ci, cj = abs(ci), abs(cj)
        if cj > ci > 0:
            return "CaseI'"
        return "Unsupported"
    if (
        model.dist.nonnegative
        and not isinstance(model.dist, PointMass)
        and bj >= bi > 0
        and cj > ci > 0
        and cj / ci >= bj / bi
    ):
        return "CaseII'"
    return "Unsupported"


def block_partition(model, profile: TailIndexProfile | None = None) -> BlockStructure:
    profile = profile or tail_profile(model)
    alpha = profile.alpha
    raw = coefficient_blocks(model.b, model.c)
    blocks = sorted(raw, key=lambda blk: (-alpha[blk[0]], blk[0]))
    block_alpha = [alpha[blk[0]] for blk in blocks]

    case_matrix = {}
    for p in range(len(blocks)):
        for q in range(p + 1, len(blocks)):
            i, j = blocks[p][0], blocks[q][0]
            if abs(alpha[i] - alpha[j]) < NEAR_EQUAL_ALPHA:
                warnings.warn(
                    "blocks %s and %s have distinct coefficients but alpha within %g"
                    % (blocks[p], blocks[q], NEAR_EQUAL_ALPHA),
                    stacklevel=2,
                )
            if alpha[i] < alpha[j]:
                i, j = j, i
            case_matrix[(p, q)] = "Unsupported" if alpha[i] == alpha[j] else _pair_case(model, i, j)

    q_law = getattr(model, "q_law", None)
    qc = model.constant_q()
    support = []
    for blk in blocks:
        if len(blk) == 1:
            support.append(SupportPrediction("Axes", blk))
        elif qc is not None:
            vals = qc[list(blk)]
            star = np.max(vals)
            direction = np.zeros(model.d)
            direction[list(blk)] = vals / star
            support.append(SupportPrediction("ConvexConeAtom", blk, tuple(direction.tolist())))
        elif isinstance(q_law, (GaussianVector, IndependentMarginals)):
            support.append(SupportPrediction("FullSphere", blk))
        else:
            support.append(SupportPrediction("FullSphere", blk))
    perm = sorted(range(model.d), key=lambda i: (-alpha[i], i))
    return BlockStructure(blocks, block_alpha, case_matrix, support, perm)


def model_hash(model) -> str:
    blob = json.dumps(model.describe(), sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()


# ---------------------------------------------------------------------------
# config files

RUN_KEYS = {"seed", "length", "burn_in", "d"}
SECTION_KEYS = {
    "model": RUN_KEYS | {"b", "c", "a", "sigma", "m_dist", "q_law"},
    "bekk": {"c", "sigma"},
    "ccc": {"a", "b", "c", "sigma"},
}


@dataclass
class RunConfig:
    model: object
    seed: int = 0
    length: int = 10_000_000
    burn_in: int = DEFAULT_BURN_IN
    source: dict = field(default_factory=dict)


def _floats(section, key):
    try:
        raw = section[key]
    except KeyError:
        raise ConfigError("missing key '%s' in section [%s]" % (key, section.name)) from None
    try:
        return [float(v) for v in raw.replace(",", " ").split()]
    except ValueError:
        raise ConfigError("key '%s' must be a list of numbers" % key) from None


def _matrix(section, key, d):
    vals = _floats(section, key)
    if len(vals) != d * d:
        raise ConfigError("key '%s' needs %d entries (row-major %dx%d)" % (key, d * d, d, d))
    return np.array(vals).reshape(d, d)


def _int(section, key, default):
    if key not in section:
        return default
    try:
        return int(float(section[key]))
    except ValueError:
        raise ConfigError("key '%s' must be an integer" % key) from None


def _m_dist(spec):
    spec = spec.strip().lower()
    if spec in ("normal", "gaussian"):
        return StandardNormal()
    if spec in ("chi2", "chisquare1", "chi2_1"):
        return ChiSquare1()
    if spec.startswith("point:"):
        try:
            return PointMass(float(spec.split(":", 1)[1]))
        except ValueError:
            pass
    raise ConfigError("unknown m_dist '%s' (normal, chi2, point:<value>)" % spec)


def parse_config_text(text) -> RunConfig:
    cp = configparser.ConfigParser(interpolation=None, strict=True)
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(str(exc)) from None
    for name in cp.sections():
        if name not in SECTION_KEYS:
            raise ConfigError("unknown section [%s]" % name)
        unknown = set(cp[name]) - SECTION_KEYS[name]
        if unknown:
            raise ConfigError("unknown key(s) %s in [%s]" % (sorted(unknown), name))
    if "bekk" in cp and "ccc" in cp:
        raise ConfigError("give only one of [bekk] and [ccc]")
    run = cp["model"] if "model" in cp else {}
    seed = _int(run, "seed", 0) if run else 0
    length = _int(run, "length", 10_000_000) if run else 10_000_000
    burn_in = _int(run, "burn_in", DEFAULT_BURN_IN) if run else DEFAULT_BURN_IN

    if "bekk" in cp:
        if run and set(run) - RUN_KEYS:
            raise ConfigError("[model] may only hold run keys alongside [bekk]")
        sec = cp["bekk"]
        c = _floats(sec, "c")
        model = build_bekk(c, _matrix(sec, "sigma", len(c)))
    elif "ccc" in cp:
        if run and set(run) - RUN_KEYS:
            raise ConfigError("[model] may only hold run keys alongside [ccc]")
        sec = cp["ccc"]
        a, b, c = _floats(sec, "a"), _floats(sec, "b"), _floats(sec, "c")
        if not (len(a) == len(b) == len(c)):
            raise ConfigError("a, b, c must have equal length")
        if "sigma" in sec:
            model = build_ccc_general(a, b, c, _matrix(sec, "sigma", len(a)))
        else:
            model = build_ccc_degenerate(a, b, c)
    elif "model" in cp:
        sec = cp["model"]
        b, c = _floats(sec, "b"), _floats(sec, "c")
        if len(b) != len(c):
            raise ConfigError("b and c must have equal length")
        d = _int(sec, "d", len(c))
        if d != len(c):
            raise ConfigError("d = %d but c has %d entries" % (d, len(c)))
        if "m_dist" not in sec:
            raise ConfigError("missing key 'm_dist' in section [model]")
        if "q_law" not in sec:
            raise ConfigError("missing key 'q_law' in section [model]")
        dist = _m_dist(sec["m_dist"])
        kind = sec["q_law"].strip().lower()
        if kind == "gaussian":
            q_law = GaussianVector(_matrix(sec, "sigma", d))
        elif kind == "constant":
            a = _floats(sec, "a")
            if len(a) != d:
                raise ConfigError("key 'a' needs %d entries" % d)
            q_law = ConstantVector(a)
        else:
            raise ConfigError("unknown q_law '%s' (gaussian, constant)" % kind)
        try:
            model = DiagSREModel.from_coefficients(b, c, dist, q_law)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
    else:
        raise ConfigError("config needs a [model], [bekk] or [ccc] section")
    source = {s: dict(cp[s]) for s in cp.sections()}
    return RunConfig(model, seed, length, burn_in, source)


def load_config(path) -> RunConfig:
    with open(path) as fh:
        return parse_config_text(fh.read())


# ---------------------------------------------------------------------------
# models of the simulation study

FIG1_C = (1.0, (1.0 / 3.0) ** 0.25)
CCC_C2 = (-0.2 + math.sqrt(0.04 + 12 * 0.99)) / 6.0  # positive root of 3c^2 + 0.2c + 0.01 = 1


def figure_model(which: int):
    """Model behind figure ``which`` (1..6) of the simulation study."""
    bekk_sigma = [[1.0, 0.9], [0.9, 1.0]]
    ccc_corr = [[1.0, 0.5], [0.5, 1.0]]
    a, b = (0.2, 0.1), (0.1, 0.1)
    if which == 1:
        return build_bekk(FIG1_C, bekk_sigma)
    if which == 2:
        return build_bekk((1.0, 1.0), bekk_sigma)
    if which == 3:
        return build_ccc_degenerate(a, b, (0.9, CCC_C2))
    if which == 4:
        return build_ccc_degenerate(a, b, (0.9, 0.9))
    if which == 5:
        return build_ccc_general(a, b, (0.9, CCC_C2), ccc_corr)
    if which == 6:
        return build_ccc_general(a, b, (0.9, 0.9), ccc_corr)
    raise ValueError("figure must be in 1..6")
