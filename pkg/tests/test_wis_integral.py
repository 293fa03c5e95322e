import math

import mpmath
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from fracheat.errors import DimensionMismatch, DomainError, NegativeMoment
from fracheat.fbm_field import FieldRealization, Grid, HurstVector, SeedSpec, fbm_covariance, sample_fbm
from fracheat.wis_integral import (Integrand, MomentEstimate, bound_constants, corrected_k_constant,
                                   isometry_norm, k_constant, l2_upper_bound, pairwise_sum,
                                   wis_integrate)

hursts = st.floats(0.51, 0.99)


def increment_covariance_2d(grid, H):
    # second differences of the sheet covariance over each cell's four corners
    nodes = np.stack(np.meshgrid(grid.nodes(0), grid.nodes(1), indexing="ij"), -1)
    c = fbm_covariance(nodes[:, :, None, None, :], nodes[None, None, :, :, :], H)
    for axis in range(4):
        c = np.diff(c, axis=axis)
    n = math.prod(grid.cell_shape)
    return c.transpose(0, 1, 2, 3).reshape(n, n)


@given(hursts, hursts, st.integers(0, 2**32))
def test_isometry_against_covariance(h0, h1, seed):
    grid = Grid.box((1.0, 2.0), (5, 6))
    H = HurstVector((h0, h1))
    f = np.random.default_rng(seed).normal(size=grid.cell_shape)
    cov = increment_covariance_2d(grid, H)
    ref = f.ravel() @ cov @ f.ravel()
    assert isometry_norm(Integrand(grid, f), H) == pytest.approx(ref, rel=1e-9, abs=1e-12)


@given(st.lists(hursts, min_size=1, max_size=3), st.lists(st.floats(0.2, 3.0), min_size=3, max_size=3))
def test_isometry_of_constant(hs, ext):
    H = HurstVector(tuple(hs))
    grid = Grid.box(tuple(ext[:H.n]), (5,) * H.n)
    val = isometry_norm(Integrand(grid, np.ones(grid.cell_shape)), H)
    assert val == pytest.approx(math.prod(x ** (2 * h) for x, h in zip(ext, hs)), rel=1e-12)


@pytest.mark.parametrize("h", [0.6, 0.75, 0.9])
def test_isometry_converges_to_continuum(h):
    # Var int_0^1 t dB_H(t) = 1 / (2H + 2)
    grid = Grid.box((1.0,), (513,))
    f = Integrand.from_function(grid, lambda t: t)
    assert isometry_norm(f, HurstVector((h,))) == pytest.approx(1.0 / (2 * h + 2), rel=1e-4)


def test_isometry_needs_deterministic():
    grid = Grid.box((1.0,), (5,))
    with pytest.raises(DomainError):
        isometry_norm(Integrand(grid, np.ones((3, 4))), HurstVector((0.7,)))
    with pytest.raises(DimensionMismatch):
        isometry_norm(Integrand(grid, np.ones(4)), HurstVector((0.7, 0.7)))


def test_integrand_checks():
    grid = Grid.box((1.0, 1.0), (4, 4))
    with pytest.raises(DimensionMismatch):
        Integrand(grid, np.ones((4, 4)))
    with pytest.raises(DomainError):
        Integrand(grid, np.full((3, 3), np.nan))
    with pytest.raises(DomainError):
        Integrand(grid, np.ones((3, 3)), adapted=False)


def test_wis_integrate_is_forward_sum():
    grid = Grid.box((1.0,), (9,))
    inc = sample_fbm(grid, HurstVector((0.7,)), SeedSpec(3), kind="fbm_increments")
    f = Integrand(grid, np.arange(8.0))
    assert wis_integrate(f, inc) == pytest.approx(float(np.sum(np.arange(8.0) * inc.values)))
    batch = np.ones((5, 8))
    assert np.allclose(wis_integrate(Integrand(grid, np.ones(8)), batch), 8.0)
    values = FieldRealization(grid, np.zeros(9), "fbm_values")
    with pytest.raises(DomainError):
        wis_integrate(f, values)


@given(st.lists(st.floats(-1e6, 1e6), min_size=0, max_size=300))
def test_pairwise_sum(xs):
    assert pairwise_sum(np.array(xs, dtype=float)) == pytest.approx(math.fsum(xs), abs=1e-6)


@given(st.lists(st.floats(-100, 100), min_size=2, max_size=50))
def test_moment_estimate_round_trip(xs):
    est = MomentEstimate.from_samples(xs)
    back = MomentEstimate.from_json(est.to_json())
    assert back == est
    assert set(est.to_dict()) >= {"mean", "variance", "n", "stderr"}
    assert est.stderr == pytest.approx(math.sqrt(est.variance / est.n))


def k_reference(h):
    with mpmath.workdps(50):
        h = mpmath.mpf(h)
        half = mpmath.mpf(1) / 2
        c = 1 / (2 * mpmath.gamma(h - half) * mpmath.cos(mpmath.pi * (h - half) / 2))
        return c * c * (4 / (h - 3 * half) ** 2 + 2 / ((h - half) * (1 - h)))


def test_k_constant_at_three_quarters():
    with mpmath.workdps(50):
        c = 1 / (2 * mpmath.gamma(mpmath.mpf(1) / 4) * mpmath.cos(mpmath.pi / 8))
        expected = float(c * c * (mpmath.mpf(64) / 9 + 32))
    assert k_constant(0.75) == pytest.approx(expected, rel=1e-13)


@given(hursts)
def test_k_constant_formula(h):
    assert k_constant(h) == pytest.approx(float(k_reference(h)), rel=1e-12)


def test_k_constant_domain():
    for bad in (0.5, 1.0, 0.3):
        with pytest.raises(DomainError):
            k_constant(bad)


@given(hursts)
def test_corrected_constant_is_2h(h):
    assert corrected_k_constant(h) == pytest.approx(2 * h, rel=1e-10)


def test_published_bound_fails_for_constant_integrand():
    # f = 1 on [0,1]^2: E[Y^2] = 1 exceeds the bound whenever prod K_j < 1
    H = HurstVector((0.6, 0.8))
    grid = Grid.box((1.0, 1.0), (9, 9))
    f = Integrand(grid, np.ones(grid.cell_shape))
    iso = isometry_norm(f, H)
    assert iso == pytest.approx(1.0)
    assert l2_upper_bound(f, H, grid.extent, which="paper") < iso


@given(hursts, hursts, st.integers(0, 2**32), st.floats(0.3, 3.0), st.floats(0.3, 3.0))
def test_corrected_bound_dominates(h0, h1, seed, x0, x1):
    H = HurstVector((h0, h1))
    grid = Grid.box((x0, x1), (7, 8))
    f = np.random.default_rng(seed).normal(size=grid.cell_shape)
    iso = isometry_norm(Integrand(grid, f), H)
    bound = l2_upper_bound(Integrand(grid, f * f), H, grid.extent, which="corrected")
    assert bound >= iso * (1 - 1e-12)


def test_bound_constants_and_errors():
    H = HurstVector((0.6, 0.8))
    c = bound_constants(H, (1.0, 2.0), "corrected")
    assert c.factor(H) == pytest.approx(1.2 * 1.6 * 2.0**0.6)
    with pytest.raises(ValueError):
        bound_constants(H, (1.0, 2.0), "other")
    grid = Grid.box((1.0, 1.0), (3, 3))
    with pytest.raises(NegativeMoment):
        l2_upper_bound(Integrand(grid, -np.ones((2, 2))), H, (1.0, 1.0))
