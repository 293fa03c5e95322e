"""Stochastic integrals against fBm increments and their second-moment tools.

For a deterministic integrand that is constant on grid cells, the forward
sum ``sum f(cell) dB(cell)`` is Gaussian with variance ``f^T W f``, where
``W`` is the exact increment covariance. ``W`` factorises into per-axis
Toeplitz matrices, and each of them is the cell-pair integral of
``H(2H - 1)|x - y|^{2H - 2}``. The isometry norm is therefore computed
exactly, without touching the diagonal singularity.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.special import beta as beta_fn

from .errors import DimensionMismatch, DomainError, NegativeMoment
from .fbm_field import FieldRealization, Grid, HurstVector, axis_increment_covariance, c_h_constant
from .special_functions import gamma_fn

__all__ = [
    "Integrand",
    "MomentEstimate",
    "BoundConstants",
    "wis_integrate",
    "isometry_norm",
    "k_constant",
    "corrected_k_constant",
    "bound_constants",
    "l2_upper_bound",
    "pairwise_sum",
]


@dataclass
class Integrand:
    """Cell values of an integrand.

    ``values`` has the grid's cell shape, or a leading realization axis
    when the integrand is random. Only adapted integrands are supported.
    """

    grid: Grid
    values: np.ndarray
    adapted: bool = True

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        cells = self.grid.cell_shape
        if self.values.shape[-len(cells):] != cells or self.values.ndim > len(cells) + 1:
            raise DimensionMismatch(f"integrand shape {self.values.shape} does not fit cells {cells}")
        if not np.all(np.isfinite(self.values)):
            raise DomainError("integrand values must be finite")
        if not self.adapted:
            raise DomainError("non-adapted integrands are not supported")

    @property
    def deterministic(self) -> bool:
        return self.values.ndim == len(self.grid.cell_shape)

    @classmethod
    def from_function(cls, grid: Grid, func) -> "Integrand":
        """Evaluate ``func(*coords)`` at cell midpoints."""
        mids = np.meshgrid(*[grid.midpoints(j) for j in range(grid.n)], indexing="ij")
        return cls(grid, np.broadcast_to(func(*mids), grid.cell_shape).copy())


def pairwise_sum(values: np.ndarray) -> float:
    """Tree reduction along the first axis; the order never depends on chunking."""
    vals = np.asarray(values, dtype=float)
    while vals.shape[0] > 1:
        if vals.shape[0] % 2:
            vals = np.concatenate([vals, np.zeros_like(vals[:1])])
        vals = vals[0::2] + vals[1::2]
    return vals[0] if vals.shape[0] else 0.0


@dataclass
class MomentEstimate:
    mean: float
    variance: float
    n: int
    stderr: float
    extra: dict = field(default_factory=dict)

    @classmethod
    def from_samples(cls, samples: Sequence[float], **extra) -> "MomentEstimate":
        x = np.asarray(samples, dtype=float)
        n = x.size
        mean = float(pairwise_sum(x)) / n
        var = float(pairwise_sum((x - mean) ** 2)) / (n - 1) if n > 1 else 0.0
        return cls(mean, var, n, math.sqrt(var / n) if n > 0 else math.nan, dict(extra))

    def to_dict(self) -> dict:
        out = {"mean": self.mean, "variance": self.variance, "n": self.n, "stderr": self.stderr}
        out.update(self.extra)
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "MomentEstimate":
        data = json.loads(text)
        core = {k: data.pop(k) for k in ("mean", "variance", "n", "stderr")}
        return cls(**core, extra=data)


def wis_integrate(f: Integrand, dB) -> np.ndarray | float:
    """Forward sum ``sum_cells f * dB`` over the trailing grid axes.

    ``dB`` is a ``FieldRealization`` of increments or a raw array whose
    trailing axes match the cell shape (a leading batch axis is allowed).
    """
    inc = dB.values if isinstance(dB, FieldRealization) else np.asarray(dB, dtype=float)
    if isinstance(dB, FieldRealization) and dB.kind == "fbm_values":
        raise DomainError("pass increments, not field values")
    cells = f.grid.cell_shape
    if inc.shape[-len(cells):] != cells:
        raise DimensionMismatch(f"increments of shape {inc.shape} do not fit cells {cells}")
    axes = tuple(range(-len(cells), 0))
    out = np.sum(f.values * inc, axis=axes)
    return float(out) if np.ndim(out) == 0 else out


def isometry_norm(f: Integrand, H: HurstVector) -> float:
    """``E[(int f dB_H)^2]`` for a deterministic cell-wise constant ``f``."""
    if not f.deterministic:
        raise DomainError("isometry_norm needs a deterministic integrand")
    if H.n != f.grid.n:
        raise DimensionMismatch("H and grid dimensions differ")
    v = f.values
    g = v
    for axis, (h, cells, step) in enumerate(zip(H, f.grid.cell_shape, f.grid.spacing)):
        w = axis_increment_covariance(h, cells, step)
        g = np.moveaxis(np.tensordot(w, g, axes=([1], [axis])), 0, axis)
    return float(np.sum(v * g))


def _check_h(hurst: float):
    if not (0.5 < hurst < 1.0):
        raise DomainError(f"H must lie in (1/2, 1), got {hurst}")


def k_constant(hurst: float) -> float:
    """``K = C_H^2 {4 (H - 3/2)^{-2} + 2 (H - 1/2)^{-1} (1 - H)^{-1}}``."""
    _check_h(hurst)
    c = c_h_constant(hurst)
    return c * c * (4.0 / (hurst - 1.5) ** 2 + 2.0 / ((hurst - 0.5) * (1.0 - hurst)))


def corrected_k_constant(hurst: float) -> float:
    """Constant that makes the second-moment bound hold, in the covariance normalisation.

    With ``p = H - 3/2`` the M-operator kernel gives
    ``K' = 2 C_H^2 c_p / (2H - 1)`` where
    ``c_p = B(p + 1, p + 1) + 2 B(p + 1, -2p - 1)``. Rescaling from the
    operator normalisation to the sampled covariance multiplies by
    ``Gamma(2H + 1) sin(pi H)``. The result equals ``2H``.
    """
    _check_h(hurst)
    p = hurst - 1.5
    c = c_h_constant(hurst)
    cp = beta_fn(p + 1.0, p + 1.0) + 2.0 * beta_fn(p + 1.0, -2.0 * p - 1.0)
    k_op = 2.0 * c * c * cp / (2.0 * hurst - 1.0)
    return k_op * gamma_fn(2.0 * hurst + 1.0) * math.sin(math.pi * hurst)


@dataclass(frozen=True)
class BoundConstants:
    k: tuple
    extents: tuple

    def __post_init__(self):
        if any(not v > 0 for v in self.k):
            raise DomainError("bound constants must be positive")
        if any(not v > 0 for v in self.extents):
            raise DomainError("extents must be positive")

    def factor(self, H: HurstVector) -> float:
        """``A = prod_j K_j xbar_j^{2 H_j - 1}``."""
        return math.prod(k * x ** (2.0 * h - 1.0) for k, x, h in zip(self.k, self.extents, H))


def bound_constants(H: HurstVector, extents: Sequence[float], which: str = "paper") -> BoundConstants:
    if len(extents) != H.n:
        raise DimensionMismatch("one extent per axis is required")
    if which == "paper":
        ks = tuple(k_constant(h) for h in H)
    elif which == "corrected":
        ks = tuple(corrected_k_constant(h) for h in H)
    else:
        raise ValueError(f"unknown constant set {which!r}")
    return BoundConstants(ks, tuple(float(x) for x in extents))


def l2_upper_bound(second_moments: Integrand, H: HurstVector, extents: Sequence[float],
                   which: str = "paper") -> float:
    """``(int_S E[f^2]) prod_j K_j xbar_j^{2H_j - 1}`` with the integral as a cell sum.

    ``which="paper"`` uses :func:`k_constant`; ``which="corrected"`` uses
    :func:`corrected_k_constant`, which is a valid bound (see the module
    tests for a counterexample to the former).
    """
    m = second_moments.values
    if np.any(m < 0):
        raise NegativeMoment("second moments must be nonnegative")
    if m.ndim != second_moments.grid.n:
        raise DomainError("second moments must be deterministic cell values")
    mass = float(np.sum(m)) * second_moments.grid.cell_volume
    return mass * bound_constants(H, extents, which).factor(H)
