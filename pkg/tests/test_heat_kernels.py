import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import integrate
from scipy.special import erfcx

from fracheat import heat_kernels
from fracheat.errors import DomainError, SingularTime
from fracheat.fbm_field import Grid
from fracheat.heat_kernels import (HeatParams, convolution_weights, deterministic_part,
                                   gaussian_integral_check, kernel_table, lambda_kernel, noise_kernel,
                                   radial_profile)
from fracheat.special_functions import mittag_leffler


def gauss(t, r, d, lam=1.0):
    return (4 * math.pi * lam * t) ** (-d / 2) * math.exp(-r * r / (4 * lam * t))


def test_params_validation():
    for kw in ({"alpha": 0.0}, {"alpha": 2.0}, {"alpha": 1.0, "lam": 0.0}, {"alpha": 1.0, "d": 0},
               {"alpha": 1.0, "sigma": math.inf}):
        with pytest.raises(DomainError):
            HeatParams(**kw)


@pytest.mark.parametrize("d", [1, 2, 3])
def test_alpha_one_is_gaussian(d):
    p = HeatParams(1.0, 0.7, 2.0, d)
    for t in (0.2, 0.6, 1.0):
        for r in (0.0, 0.3, 0.9, 1.5):
            x = np.full(d, r / math.sqrt(d))
            exact = gauss(t, r, d, 0.7)
            assert deterministic_part(t, x, p) == pytest.approx(exact, rel=1e-6)
            assert noise_kernel(t, x, p) == pytest.approx(2.0 * exact, rel=1e-6)


@pytest.mark.parametrize("t", [0.25, 1.0, 2.0])
def test_half_order_at_origin(t):
    # (1/pi) int_0^inf erfcx(y^2 sqrt(t)) dy
    ref = integrate.quad(lambda y: erfcx(y * y * math.sqrt(t)), 0, np.inf, epsabs=1e-14, limit=400)[0] / math.pi
    assert deterministic_part(t, 0.0, HeatParams(0.5)) == pytest.approx(ref, rel=1e-8)


@pytest.mark.parametrize("alpha", [0.6, 1.4, 1.8])
@pytest.mark.parametrize("xi", [0.3, 1.0, 2.5])
def test_noise_kernel_one_dimension(alpha, xi):
    # (1/pi) tau^{a-1} int_0^inf cos(xi y) E_{a,a}(-tau^a y^2) dy
    tau = 0.8
    f = lambda y: float(mittag_leffler(-(tau**alpha) * y * y, alpha, alpha))
    ref = tau ** (alpha - 1) * integrate.quad(f, 0, np.inf, weight="cos", wvar=xi, limlst=200)[0] / math.pi
    assert noise_kernel(tau, xi, HeatParams(alpha)) == pytest.approx(ref, rel=1e-6, abs=1e-9)


@pytest.mark.parametrize("alpha", [0.8, 1.5])
@pytest.mark.parametrize("r", [0.5, 1.5])
def test_noise_kernel_three_dimensions(alpha, r):
    # radial inverse transform: (2 pi^2 r)^{-1} int_0^inf y sin(r y) E(-y^2) dy at tau = 1
    f = lambda y: y * float(mittag_leffler(-y * y, alpha, alpha))
    ref = integrate.quad(f, 0, np.inf, weight="sin", wvar=r, limlst=200)[0] / (2 * math.pi**2 * r)
    x = np.array([r, 0.0, 0.0])
    assert noise_kernel(1.0, x, HeatParams(alpha, d=3)) == pytest.approx(ref, rel=1e-6, abs=1e-9)


@given(st.sampled_from([0.5, 0.9, 1.0, 1.5]), st.sampled_from([1, 2]), st.floats(0.1, 2.0),
       st.floats(0.0, 2.0), st.floats(0.3, 3.0))
def test_self_similarity(alpha, d, t, r, c):
    p = HeatParams(alpha, 1.0, 1.0, d)
    x = np.full(d, r / math.sqrt(d)) + (0.05 if d > 1 else 0.0)
    lhs = deterministic_part(c * t, c ** (alpha / 2) * x, p)
    rhs = c ** (-alpha * d / 2) * deterministic_part(t, x, p)
    assert lhs == pytest.approx(rhs, rel=1e-7, abs=1e-12)


@pytest.mark.parametrize("alpha", [0.6, 1.0, 1.5])
def test_unit_mass(alpha):
    p = HeatParams(alpha)
    mass = 2 * integrate.quad(lambda x: deterministic_part(1.0, x, p), 0, 29.0, limit=400)[0]
    assert mass == pytest.approx(1.0, abs=1e-6)


def test_lambda_kernel():
    p = HeatParams(1.0)
    assert lambda_kernel(0.5, 2.0, p) == pytest.approx(math.exp(-1.0))
    with pytest.raises(DomainError):
        lambda_kernel(0.0, 1.0, p)


def test_time_errors_and_zero_sigma():
    p = HeatParams(1.2)
    with pytest.raises(DomainError):
        deterministic_part(0.0, 0.1, p)
    with pytest.raises(SingularTime):
        noise_kernel(0.0, 0.1, p)
    with pytest.raises(SingularTime):
        noise_kernel(0.05, 0.1, p, tau_min=0.1)
    assert noise_kernel(0.5, 0.2, HeatParams(1.2, sigma=0.0)) == 0.0


def test_gaussian_integral():
    for d in (1, 2, 3):
        for a in (0.5, 1.0, 2.0):
            assert gaussian_integral_check(a, 0.0, d) <= 1e-10
    assert gaussian_integral_check(1.5, 0.4 - 0.3j, 2) <= 1e-10
    with pytest.raises(DomainError):
        gaussian_integral_check(0.0)


def test_profile_metadata_and_bad_dimension():
    prof = radial_profile(1.0, 1.0, 1)
    assert prof.meta["tail_estimate"] < 1e-6
    assert prof.meta["cutoff"] > 0
    with pytest.raises(DomainError):
        radial_profile(1.0, 1.0, 4)


def test_convolution_weights_alpha_one():
    p = HeatParams(1.0, 1.0, 0.5, 1)
    grid = Grid.box((1.0, 1.0), (17, 9))
    w = convolution_weights(p, grid)
    assert w.shape == grid.cell_shape
    assert np.all(w > 0)
    ht, hx = grid.spacing
    tau = (np.arange(16) + 0.5) * ht
    xi = (np.arange(8) + 0.5) * hx
    # cell average of the kernel; at alpha = 1 the time factor is exactly 1
    exact = 0.5 * np.array([[gauss(a, b, 1) for b in xi] for a in tau])
    assert np.allclose(w, exact, rtol=1e-6)
    assert np.allclose(convolution_weights(HeatParams(1.0, 1.0, 1.0, 1), grid), 2 * w)


def test_kernel_table_matches_pointwise():
    p = HeatParams(1.3, 1.0, 1.0, 1)
    grid = Grid((0.0, 0.2), (1.0, 1.0), (5, 6))
    table = kernel_table(p, grid)
    assert table.deterministic.shape == (4, 6)
    t, x = grid.nodes(0)[2], grid.nodes(1)[3]
    assert table.deterministic[1, 3] == pytest.approx(deterministic_part(t, x, p))
    assert "deterministic" in table.meta and "noise" in table.meta


def test_disk_cache_round_trip(tmp_path, monkeypatch):
    monkeypatch.setenv(heat_kernels.CACHE_ENV, str(tmp_path))
    heat_kernels.clear_cache()
    first = radial_profile(0.85, 1.0, 1)
    assert list(tmp_path.glob("profile-*.npz"))
    heat_kernels.clear_cache()
    again = radial_profile(0.85, 1.0, 1)
    assert np.array_equal(first.smooth, again.smooth)
    assert first.meta == again.meta
    r = np.linspace(0, 5, 11)
    assert np.array_equal(first(r), again(r))
    heat_kernels.clear_cache()
