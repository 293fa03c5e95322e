import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from fracheat.additive_solver import (CHUNK, kernel_slice, map_chunks, point_index, second_moment_mc,
                                      solve_additive, stochastic_convolution)
from fracheat.errors import DomainError
from fracheat.fbm_field import Grid, HurstVector, SeedSpec, sample_fbm_increments
from fracheat.heat_kernels import HeatParams, convolution_weights, kernel_table


def direct_convolution(w, inc):
    # sum_{a < i, b < k} w[i-1-a, k-1-b] inc[a, b], node (i, k) with i >= 1
    nt, nx = inc.shape
    out = np.zeros((nt, nx + 1))
    for i in range(1, nt + 1):
        for k in range(1, nx + 1):
            out[i - 1, k] = sum(w[i - 1 - a, k - 1 - b] * inc[a, b] for a in range(i) for b in range(k))
    return out


@given(st.integers(0, 2**32), st.integers(1, 6), st.integers(1, 6))
def test_convolution_matches_direct_sum(seed, nt, nx):
    rng = np.random.default_rng(seed)
    w, inc = rng.normal(size=(2, nt, nx))
    assert np.allclose(stochastic_convolution(w, inc), direct_convolution(w, inc), atol=1e-12)


def test_convolution_batches():
    rng = np.random.default_rng(0)
    w = rng.normal(size=(4, 3))
    inc = rng.normal(size=(5, 4, 3))
    batch = stochastic_convolution(w, inc)
    for k in range(5):
        assert np.allclose(batch[k], stochastic_convolution(w, inc[k]))


def test_zero_sigma_is_deterministic_part():
    p = HeatParams(1.0, 1.0, 0.0, 1)
    grid = Grid.box((1.0, 1.0), (9, 9))
    sol = solve_additive(p, HurstVector((0.7, 0.7)), grid, SeedSpec(0))
    assert np.array_equal(sol.values, kernel_table(p, grid).deterministic)
    est = second_moment_mc(p, HurstVector((0.7, 0.7)), grid, (1.0, 0.5), 10)
    assert est.stderr == 0.0
    assert est.mean == pytest.approx(sol.values[-1, 4] ** 2)


def test_kernel_slice_reproduces_solution():
    p = HeatParams(1.2, 1.0, 1.0, 1)
    H = HurstVector((0.7, 0.8))
    grid = Grid.box((1.0, 1.0), (9, 9))
    seed = SeedSpec(4, 2)
    sol = solve_additive(p, H, grid, seed)
    det = kernel_table(p, grid).deterministic
    inc = sample_fbm_increments(grid, H, [seed])[0]
    for point, idx in (((1.0, 1.0), (7, 8)), ((0.5, 0.375), (3, 3))):
        w = kernel_slice(p, grid, point)
        assert sol.values[idx] - det[idx] == pytest.approx(np.sum(w * inc), abs=1e-12)


def test_solution_vanishes_stochastically_on_the_boundary():
    p = HeatParams(1.0, 1.0, 1.0, 1)
    grid = Grid((0.0, 0.3), (1.0, 1.0), (9, 9))
    sol = solve_additive(p, HurstVector((0.7, 0.7)), grid, SeedSpec(1))
    assert np.array_equal(sol.values[:, 0], kernel_table(p, grid).deterministic[:, 0])
    assert np.allclose(sol.times, grid.nodes(0)[1:])


def test_point_index():
    grid = Grid.box((1.0, 2.0), (5, 9))
    assert point_index(grid, (0.5, 1.25)) == (2, 5)
    with pytest.raises(DomainError):
        point_index(grid, (0.3, 1.0))
    with pytest.raises(DomainError):
        point_index(grid, (0.0, 1.0))


def test_grid_checks():
    p = HeatParams(1.0, d=2)
    with pytest.raises(DomainError):
        solve_additive(p, HurstVector((0.7, 0.7)), Grid.box((1.0, 1.0), (5, 5)), SeedSpec(0))
    with pytest.raises(DomainError):
        solve_additive(HeatParams(1.0), HurstVector((0.7, 0.7)), Grid((0.5, 0.0), (1.0, 1.0), (5, 5)),
                       SeedSpec(0))


def test_map_chunks_independent_of_threads():
    def f(lo, hi):
        return list(range(lo, hi))

    n = 3 * CHUNK + 5
    assert map_chunks(f, n, 1) == map_chunks(f, n, 4)
    assert sum(map_chunks(f, n, 3), []) == list(range(n))


def test_second_moment_threads_agree():
    p = HeatParams(1.0)
    H = HurstVector((0.75, 0.75))
    grid = Grid.box((1.0, 1.0), (17, 17))
    a = second_moment_mc(p, H, grid, (1.0, 1.0), 100, 9, threads=1)
    b = second_moment_mc(p, H, grid, (1.0, 1.0), 100, 9, threads=4)
    assert a == b


def test_second_moment_matches_isometry():
    p = HeatParams(1.0)
    H = HurstVector((0.75, 0.75))
    grid = Grid.box((1.0, 1.0), (33, 33))
    est = second_moment_mc(p, H, grid, (1.0, 0.5), 2000, 3)
    assert abs(est.extra["J2"] - est.extra["J2_exact"]) <= 5 * est.extra["J2_stderr"]
    assert est.mean == pytest.approx(est.extra["J1"] + est.extra["J2"])
