import math

import numpy as np
import pytest
from scipy import integrate as sp_integrate

from dsre.exceptions import NonIntegrable
from dsre.quadrature import integrate, integrate_halfline


@pytest.mark.parametrize(
    "f, a, b",
    [
        (np.sin, 0.0, math.pi),
        (lambda x: np.exp(-x * x), -3.0, 5.0),
        (lambda x: np.sqrt(np.abs(x - 0.3)), 0.0, 1.0),
        (lambda x: 1.0 / (1.0 + 25.0 * x * x), -1.0, 1.0),
        (lambda x: np.log(x), 1e-12, 2.0),
    ],
)
def test_finite_interval_matches_scipy(f, a, b):
    ref, _ = sp_integrate.quad(lambda x: float(f(np.array([x]))[0]), a, b, limit=400, epsabs=1e-13)
    got = integrate(f, a, b)
    assert got.value == pytest.approx(ref, abs=1e-9, rel=1e-9)
    assert got.error < 1e-8


def test_halfline_gaussian_and_power_tail():
    got = integrate_halfline(lambda x: np.exp(-0.5 * x * x), 0.0)
    assert got.value == pytest.approx(math.sqrt(math.pi / 2), rel=1e-11)
    got = integrate_halfline(lambda x: 1.0 / (1.0 + x) ** 3, 0.0)
    assert got.value == pytest.approx(0.5, rel=1e-10)
    got = integrate_halfline(lambda x: np.exp(x), 0.0, direction=-1)
    assert got.value == pytest.approx(1.0, rel=1e-11)


def test_reversed_interval_changes_sign():
    assert integrate(np.cos, 1.0, 0.0).value == pytest.approx(-math.sin(1.0), rel=1e-12)


def test_divergent_integral_raises():
    with pytest.raises(NonIntegrable):
        integrate_halfline(lambda x: 1.0 / (1.0 + x), 0.0)


def test_nonfinite_integrand_raises():
    with pytest.raises(NonIntegrable):
        integrate(lambda x: np.full_like(x, np.nan), 0.0, 1.0)
