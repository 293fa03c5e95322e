"""Multiplicative noise through the equivalent stochastic Volterra equation.

The discrete map is ``Y -> f + Conv(Y)``, where ``Conv`` multiplies the
integrand by the fBm increments and convolves it causally with the noise
kernel. The integrand of a cell is ``Y`` at the cell's lower-left node.
Cells touching ``t = 0`` use the deterministic part at half a time step,
since the initial value is a Dirac mass. ``Conv`` is strictly causal in
time, so the iteration reaches its fixed point after at most
``counts_0 - 1`` steps.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .additive_solver import SolutionField, stochastic_convolution
from .errors import CapExceeded, DomainError, NoConvergence
from .fbm_field import Grid, HurstVector, SeedSpec, sample_fbm_increments
from .heat_kernels import HeatParams, convolution_weights, deterministic_part, kernel_table
from .mildness import kernel_l2_norm_sq
from .wis_integral import bound_constants

__all__ = [
    "PicardState",
    "VolterraProblem",
    "volterra_problem",
    "truncation_bound",
    "series_tail",
    "iterated_kernel_apply",
    "volterra_residual",
    "picard_solve",
    "MAX_SERIES_TERMS",
]

MAX_SERIES_TERMS = 200


@dataclass
class VolterraProblem:
    """Everything the discrete map needs for one realization."""

    params: HeatParams
    H: HurstVector
    grid: Grid
    f: np.ndarray  # deterministic part at nodes with t > 0
    f_half: np.ndarray  # deterministic part at t = h_t / 2, spatial nodes
    weights: np.ndarray
    increments: np.ndarray
    seed: SeedSpec | None = None

    def integrand(self, y: np.ndarray, first_row: np.ndarray) -> np.ndarray:
        left = (slice(None),) + (slice(0, -1),) * (y.ndim - 1)
        rows = np.concatenate([first_row[None], y[:-1]])
        return rows[left]

    def conv(self, y: np.ndarray, first_row: np.ndarray | None = None) -> np.ndarray:
        first = self.f_half if first_row is None else first_row
        return stochastic_convolution(self.weights, self.integrand(y, first) * self.increments)


def volterra_problem(p: HeatParams, H: HurstVector, grid: Grid, seed: SeedSpec,
                     method: str | None = None, increments: np.ndarray | None = None) -> VolterraProblem:
    if grid.n != p.d + 1 or H.n != grid.n:
        raise DomainError("grid and H must have one time axis and d space axes")
    if grid.origin[0] != 0.0:
        raise DomainError("the time axis must start at 0")
    f = kernel_table(p, grid).deterministic
    xs = np.meshgrid(*[grid.nodes(j) for j in range(1, grid.n)], indexing="ij")
    f_half = np.asarray(deterministic_part(0.5 * grid.spacing[0], np.stack(xs, axis=-1), p))
    if not (np.all(np.isfinite(f)) and np.all(np.isfinite(f_half))):
        raise DomainError("the deterministic part is singular at a grid node; move the spatial origin")
    if increments is None:
        increments = sample_fbm_increments(grid, H, [seed], method)[0]
    return VolterraProblem(p, H, grid, f, f_half, convolution_weights(p, grid), increments, seed)


def truncation_bound(m: int, g_norm_sq: float, A: float, vol: float, n: int) -> float:
    """``A^{m-1} g_norm_sq^m vol / ((m-1)!)^n``, the second-moment bound of the m-th term."""
    if m < 1 or n < 1:
        raise DomainError("m and n must be positive")
    if min(g_norm_sq, A, vol) < 0:
        raise DomainError("inputs must be nonnegative")
    if g_norm_sq == 0.0:
        return 0.0
    if math.isinf(g_norm_sq):
        return math.inf
    log = ((m - 1) * math.log(A) if m > 1 else 0.0) + m * math.log(g_norm_sq)
    log += math.log(vol) if vol > 0 else -math.inf
    log -= n * math.lgamma(m)
    return math.exp(log) if log < 709.0 else math.inf


def series_tail(after: int, g_norm_sq: float, A: float, extents, terms: int = MAX_SERIES_TERMS):
    """``sum_{m > after} sqrt(bound_m)`` with ``vol = prod_j extents_j^{m-1}``.

    Returns the tail and the list of per-term bounds ``m = 1..terms``.
    """
    n = len(extents)
    box = math.prod(extents)
    bounds = [truncation_bound(m, g_norm_sq, A, box ** (m - 1), n) for m in range(1, terms + 1)]
    tail = sum(math.sqrt(b) for b in bounds[after:])
    return tail, bounds


def iterated_kernel_apply(m: int, problem: VolterraProblem, limit: int = MAX_SERIES_TERMS) -> np.ndarray:
    """``m``-th term of the solution series: the convolution applied ``m`` times to ``f``.

    Only the first application sees the deterministic part near ``t = 0``;
    later terms vanish there.
    """
    if m < 0:
        raise DomainError("m must be nonnegative")
    if m > limit:
        raise CapExceeded(f"series term {m} exceeds the limit {limit}")
    term = problem.f
    zero = np.zeros_like(problem.f_half)
    for k in range(m):
        term = problem.conv(term, problem.f_half if k == 0 else zero)
    return term


def volterra_residual(y: np.ndarray, problem: VolterraProblem) -> float:
    """``sup |Y - f - Conv(Y)|`` over the nodes with ``t > 0``."""
    return float(np.max(np.abs(y - problem.f - problem.conv(y))))


@dataclass
class PicardState:
    iteration: int
    residuals: list = field(default_factory=list)
    bounds: list = field(default_factory=list)
    bound_estimate: float = math.inf
    g_norm_sq: float = math.inf
    mild: bool = True
    note: str = ""

    def to_dict(self) -> dict:
        return {
            "iteration": self.iteration,
            "residuals": self.residuals,
            "bounds": [b if math.isfinite(b) else None for b in self.bounds],
            "bound_estimate": self.bound_estimate if math.isfinite(self.bound_estimate) else None,
            "g_norm_sq": self.g_norm_sq if math.isfinite(self.g_norm_sq) else None,
            "mild": self.mild,
            "note": self.note,
        }


def picard_solve(p: HeatParams, H: HurstVector, grid: Grid, seed: SeedSpec, tol: float = 1e-10,
                 max_iter: int = 100, method: str | None = None, constants: str = "corrected",
                 problem: VolterraProblem | None = None) -> SolutionField:
    """Fixed point of the discrete Volterra map for one realization.

    Stops once the sup-norm update and the series tail bound are both below
    ``tol``. If the kernel norm is infinite there is no tail bound. The loop
    then stops on the update alone and the result is stamped as not mild.
    The trace is stored in ``meta["picard"]``.
    """
    if not tol > 0 or max_iter < 1:
        raise DomainError("tol must be positive and max_iter at least 1")
    prob = problem or volterra_problem(p, H, grid, seed, method)
    extents = grid.extent
    g2 = kernel_l2_norm_sq(p, extents[0])
    A = bound_constants(H, extents, constants).factor(H)
    state = PicardState(0, g_norm_sq=g2)
    if math.isinf(g2):
        state.mild = False
        state.note = "not mild: grid-dependent, no continuum limit"
        tails = None
    else:
        _, state.bounds = series_tail(0, g2, A, extents)
        roots = np.sqrt(np.array(state.bounds))
        tails = np.concatenate([np.cumsum(roots[::-1])[::-1][1:], [0.0]])

    y = prob.f.copy()
    for it in range(1, max_iter + 1):
        new = prob.f + prob.conv(y)
        update = float(np.max(np.abs(new - y)))
        y = new
        state.iteration = it
        state.residuals.append(update)
        tail = math.inf if tails is None else float(tails[min(it, tails.size) - 1])
        state.bound_estimate = tail
        if update < tol and (tails is None or tail < tol):
            meta = {"picard": state.to_dict(), "constants": constants}
            return SolutionField(p, H, grid, y, seed, meta)
    raise NoConvergence(max_iter, state.residuals)
