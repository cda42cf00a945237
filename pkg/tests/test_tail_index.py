import math

import numpy as np
import pytest
from scipy import optimize, special

from dsre.distributions import AffineFactor, ChiSquare1, PointMass, StandardNormal, abs_moment
from dsre.engine import ConstantVector, DiagSREModel, GaussianVector
from dsre.exceptions import NoRootInRange, StationarityViolated
from dsre.models import CCC_C2, FIG1_C, figure_model, tail_profile
from dsre.tail_index import (
    RESIDUAL_TOL,
    TailIndexProfile,
    solve_alpha,
    solve_profile,
    validate_assumptions,
)


def normal_abs_moment(s):
    return 2 ** (s / 2) * special.gamma((s + 1) / 2) / math.sqrt(math.pi)


def test_bekk_indices():
    assert solve_alpha(AffineFactor(0.0, 1.0, StandardNormal())) == pytest.approx(2.0, abs=1e-6)
    assert solve_alpha(AffineFactor(0.0, FIG1_C[1], StandardNormal())) == pytest.approx(4.0, abs=1e-6)


def test_ccc_indices():
    assert solve_alpha(AffineFactor(0.1, 0.9, ChiSquare1())) == pytest.approx(1.0, abs=1e-9)
    # independent oracle: E(b + cZ^2)^2 = b^2 + 2bc + 3c^2
    c2 = optimize.brentq(lambda c: 3 * c * c + 0.2 * c + 0.01 - 1.0, 0.0, 1.0)
    assert c2 == pytest.approx(CCC_C2, abs=1e-12)
    assert solve_alpha(AffineFactor(0.1, c2, ChiSquare1())) == pytest.approx(2.0, abs=1e-4)


def test_point_mass_factors():
    with pytest.raises(StationarityViolated):
        solve_alpha(AffineFactor(0.0, 2.0, PointMass(1.0)))
    # 0.75**s < 1 for every s > 0
    with pytest.raises(NoRootInRange):
        solve_alpha(AffineFactor(0.0, 0.5, PointMass(1.5)))


def test_nonstationary_normal_factor():
    # E log|2N| = log 2 + E log|N| > 0
    with pytest.raises(StationarityViolated):
        solve_alpha(AffineFactor(0.0, 2.0, StandardNormal()))


def test_scaling_law(rng):
    # for b = 0 the index solves c^alpha E|N|^alpha = 1
    for lam in rng.uniform(0.5, 1.5, 10):
        got = solve_alpha(AffineFactor(0.0, float(lam), StandardNormal()))
        ref = optimize.brentq(lambda s, lam=lam: s * math.log(lam) + math.log(normal_abs_moment(s)), 1e-3, 200.0, xtol=1e-14)
        assert got == pytest.approx(ref, abs=1e-6)


def test_ordering_case_one(rng):
    for _ in range(10):
        c1, c2 = np.sort(rng.uniform(0.3, 1.8, 2))
        a1 = solve_alpha(AffineFactor(0.0, float(c1), StandardNormal()))
        a2 = solve_alpha(AffineFactor(0.0, float(c2), StandardNormal()))
        assert a2 < a1


def test_residuals_below_tolerance():
    for which in range(1, 7):
        prof = tail_profile(figure_model(which))
        assert all(r <= RESIDUAL_TOL for r in prof.residual)
        assert all(v < 0 for v in prof.log_moment)
    prof = solve_profile([AffineFactor(0.3, 0.6, StandardNormal())])
    assert abs(abs_moment(AffineFactor(0.3, 0.6, StandardNormal()), prof.alpha[0]) - 1) <= RESIDUAL_TOL


def test_assumptions_fig1_all_pass():
    m = figure_model(1)
    rep = validate_assumptions(m, tail_profile(m))
    assert rep.all_pass, rep.verdicts


def test_assumptions_point_mass_fails_a4():
    m = DiagSREModel.from_coefficients([0.0, 0.0], [0.5, 0.8], PointMass(1.5), ConstantVector([1.0, 1.0]))
    # a point mass below one has no positive index, so the profile is built by hand
    prof = TailIndexProfile((1.0, 1.0), (0.0, 0.0), tuple(m.log_moments()))
    rep = validate_assumptions(m, prof)
    assert rep.verdicts["A4"] == "fail"


def test_assumptions_gaussian_q_degenerate_variance():
    m = DiagSREModel.from_coefficients([0.0, 0.0], [1.0, 1.0], StandardNormal(), GaussianVector([[1.0, 0.0], [0.0, 0.0]]))
    rep = validate_assumptions(m, solve_profile(m.factors))
    assert rep.verdicts["A5"] == "fail"
