"""Additive-noise solution by discrete stochastic convolution.

On a grid with time step ``h_t`` the stochastic term at node ``(t_i, x_k)``
is the sum over the cells behind it::

    sum_{a < i, b < k} G[i - 1 - a, k - 1 - b] dB[a, b]

with ``G`` from :func:`fracheat.heat_kernels.convolution_weights`. The
sum is evaluated for a whole batch of realizations with one zero-padded FFT.
Nodes at ``t = 0`` are not stored, because the initial value is a Dirac mass.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import DomainError
from .fbm_field import Grid, HurstVector, SeedSpec, sample_fbm_increments
from .heat_kernels import HeatParams, convolution_weights, kernel_table
from .wis_integral import Integrand, MomentEstimate, isometry_norm

__all__ = [
    "SolutionField",
    "stochastic_convolution",
    "solve_additive",
    "kernel_slice",
    "point_index",
    "second_moment_mc",
    "map_chunks",
    "CHUNK",
]

# realizations are always processed in chunks of this size, whatever the thread count
CHUNK = 32


@dataclass
class SolutionField:
    """Solution values at the grid nodes with ``t > 0``.

    ``values`` has shape ``(counts_0 - 1, counts_1, ..., counts_d)``, or an
    extra leading axis when several realizations are stored.
    """

    params: HeatParams
    H: HurstVector
    grid: Grid
    values: np.ndarray
    seed: SeedSpec | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if not np.all(np.isfinite(self.values)):
            raise DomainError("solution values must be finite")

    @property
    def times(self) -> np.ndarray:
        return self.grid.nodes(0)[1:]


def _check_grid(p: HeatParams, H: HurstVector, grid: Grid):
    if grid.n != p.d + 1 or H.n != grid.n:
        raise DomainError("grid and H must have one time axis and d space axes")
    if grid.origin[0] != 0.0:
        raise DomainError("the time axis must start at 0")


def stochastic_convolution(weights: np.ndarray, increments: np.ndarray) -> np.ndarray:
    """Causal convolution of cell increments with the kernel weights.

    ``increments`` has the cell shape with an optional leading batch axis.
    The result lives on nodes with ``t > 0``: shape ``(cells_0, cells_1 + 1, ...)``,
    zero on every hyperplane ``x_j = 0``.
    """
    cells = weights.shape
    nd = len(cells)
    axes = tuple(range(increments.ndim - nd, increments.ndim))
    size = tuple(2 * c for c in cells)
    spec = np.fft.rfftn(increments, s=size, axes=axes) * np.fft.rfftn(weights, s=size, axes=tuple(range(nd)))
    conv = np.fft.irfftn(spec, s=size, axes=axes)
    conv = conv[(Ellipsis,) + tuple(slice(0, c) for c in cells)]
    pad = [(0, 0)] * (increments.ndim - nd) + [(0, 0)] + [(1, 0)] * (nd - 1)
    return np.pad(conv, pad)


def _deterministic_nodes(p: HeatParams, grid: Grid) -> np.ndarray:
    det = kernel_table(p, grid).deterministic
    if not np.all(np.isfinite(det)):
        raise DomainError("the deterministic part is singular at a grid node; move the spatial origin")
    return det


def solve_additive(p: HeatParams, H: HurstVector, grid: Grid, seed: SeedSpec,
                   method: str | None = None) -> SolutionField:
    """One realization of the additive-noise solution on ``grid``."""
    _check_grid(p, H, grid)
    det = _deterministic_nodes(p, grid)
    if p.sigma == 0.0:
        return SolutionField(p, H, grid, det.copy(), seed, {"method": None})
    inc = sample_fbm_increments(grid, H, [seed], method)[0]
    stoch = stochastic_convolution(convolution_weights(p, grid), inc)
    return SolutionField(p, H, grid, det + stoch, seed, {"method": method or "auto"})


def point_index(grid: Grid, point: Sequence[float]) -> tuple:
    """Index of the grid node at ``point``; raises if it is not a node."""
    idx = []
    for axis, coord in enumerate(point):
        pos = (coord - grid.origin[axis]) / grid.spacing[axis]
        k = int(round(pos))
        if abs(pos - k) > 1e-9 or not 0 <= k < grid.counts[axis]:
            raise DomainError(f"{coord} is not a node of axis {axis}")
        idx.append(k)
    if idx[0] == 0:
        raise DomainError("t = 0 is not a valid evaluation time")
    return tuple(idx)


def kernel_slice(p: HeatParams, grid: Grid, point: Sequence[float]) -> np.ndarray:
    """Cell weights ``w`` with ``stochastic part at point = sum w * dB``."""
    idx = point_index(grid, point)
    weights = convolution_weights(p, grid)
    out = np.zeros(grid.cell_shape)
    if any(k == 0 for k in idx[1:]):
        return out
    region = tuple(slice(0, k) for k in idx)
    out[region] = weights[region][tuple(slice(None, None, -1) for _ in idx)]
    return out


def _chunks(n: int, start: int = 0):
    return [(s, min(s + CHUNK, n)) for s in range(start, n, CHUNK)]


def map_chunks(func, n: int, threads: int = 1):
    """Apply ``func(lo, hi)`` to fixed chunks of ``range(n)``; results in chunk order."""
    ranges = _chunks(n)
    if threads <= 1:
        return [func(lo, hi) for lo, hi in ranges]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(lambda r: func(*r), ranges))


def second_moment_mc(p: HeatParams, H: HurstVector, grid: Grid, point: Sequence[float],
                     n_samples: int, seed: int | SeedSpec = 0, threads: int = 1,
                     method: str | None = None) -> MomentEstimate:
    """Monte-Carlo estimate of ``E[Y^2]`` at a grid node.

    ``J1`` (the squared deterministic part) is exact; ``J2`` is the sample
    mean of the squared stochastic part. Realization ``k`` uses stream
    ``seed.stream_index + k``. The exact discrete value of ``J2``, the
    isometry norm of the kernel slice, is reported alongside.
    """
    if n_samples < 2:
        raise DomainError("need at least two samples")
    _check_grid(p, H, grid)
    base = seed if isinstance(seed, SeedSpec) else SeedSpec(int(seed), 0)
    idx = point_index(grid, point)
    det = _deterministic_nodes(p, grid)[(idx[0] - 1,) + idx[1:]]
    j1 = float(det * det)
    if p.sigma == 0.0:
        return MomentEstimate(j1, 0.0, n_samples, 0.0, {"J1": j1, "J2": 0.0, "J2_stderr": 0.0,
                                                        "J2_exact": 0.0})
    w = kernel_slice(p, grid, point)

    def run(lo, hi):
        inc = sample_fbm_increments(grid, H, [base.child(k) for k in range(lo, hi)], method)
        return np.sum(inc * w, axis=tuple(range(1, inc.ndim)))

    stoch = np.concatenate(map_chunks(run, n_samples, threads))
    sq = stoch * stoch
    j2 = MomentEstimate.from_samples(sq)
    exact = isometry_norm(Integrand(grid, w), H)
    extra = {"J1": j1, "J2": j2.mean, "J2_stderr": j2.stderr, "J2_exact": exact,
             "point": [float(v) for v in point]}
    # J1 enters exactly; the cross term has mean zero and is dropped
    return MomentEstimate(j1 + j2.mean, j2.variance, n_samples, j2.stderr, extra)
