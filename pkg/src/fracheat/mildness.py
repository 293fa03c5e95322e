"""Mild / not mild classification and numerical witnesses for it.

``classify`` encodes the published table. ``exponent_test`` and
``g_norm_sq`` reproduce the kernel-norm argument based on the exponential
bound for ``E_{alpha,alpha}``. ``kernel_l2_norm_sq`` is the exact
``L^2`` norm of the noise kernel (by Plancherel); the Volterra certificate
uses it. ``refinement_experiment`` measures ``E[Y^2]`` at a point on dyadically
refined grids with common random numbers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Sequence

import numpy as np
from scipy import integrate

from .additive_solver import kernel_slice, map_chunks
from .errors import DomainError
from .fbm_field import Grid, HurstVector, SeedSpec, sample_fbm_increments
from .heat_kernels import HeatParams, deterministic_part
from .special_functions import mittag_leffler
from .wis_integral import Integrand, MomentEstimate, isometry_norm

__all__ = [
    "Verdict",
    "MildnessVerdict",
    "classify",
    "exponent_test",
    "g_norm_sq",
    "kernel_l2_norm_sq",
    "RefinementResult",
    "refinement_experiment",
]


class Verdict(str, Enum):
    MILD = "Mild"
    NOT_MILD = "NotMild"
    UNKNOWN = "Unknown"


@dataclass(frozen=True)
class MildnessVerdict:
    alpha: float
    d: int
    verdict: Verdict
    exponent: float
    basis: str = "theorem"


def _check(alpha: float, d: int):
    if not (0.0 < alpha < 2.0):
        raise DomainError(f"alpha must lie in (0, 2), got {alpha}")
    if int(d) != d or d < 1:
        raise DomainError("d must be a positive integer")


def exponent_test(alpha: float, d: int) -> tuple[float, bool]:
    """Exponent ``2 alpha - 2 - alpha d`` of the reduced time integral and whether it exceeds -1."""
    _check(alpha, d)
    e = 2.0 * alpha - 2.0 - alpha * d
    return e, e > -1.0


def classify(alpha: float, d: int) -> MildnessVerdict:
    """Published verdict for ``(alpha, d)``.

    ``alpha < 1``: not mild. ``alpha = 1``: mild iff ``d = 1``.
    ``alpha > 1``: mild for ``d`` in {1, 2}, unknown for ``d >= 3``.
    """
    _check(alpha, d)
    e, _ = exponent_test(alpha, d)
    if alpha < 1.0:
        v = Verdict.NOT_MILD
    elif alpha == 1.0:
        v = Verdict.MILD if d == 1 else Verdict.NOT_MILD
    else:
        v = Verdict.MILD if d <= 2 else Verdict.UNKNOWN
    return MildnessVerdict(float(alpha), int(d), v, e)


def _gaussian_mass(a: float, d: int) -> float:
    # int_{R^d} exp(-a |y|^2) dy by radial quadrature
    shell = 2.0 * math.pi ** (d / 2.0) / math.gamma(d / 2.0)
    val = integrate.quad(lambda r: r ** (d - 1) * math.exp(-a * r * r), 0.0, np.inf,
                         epsabs=0.0, epsrel=1e-13)[0]
    return shell * val


def g_norm_sq(p: HeatParams, H: HurstVector | None = None, u: Sequence[float] = (1.0, 1.0)) -> float:
    """Kernel norm from the exponential bound, ``+inf`` when it diverges.

    ``sigma^2 (2 pi)^{-2d} int_0^T int_0^xbar tau^{2 alpha - 2} (int exp(-lambda tau^alpha |y|^2) dy)^2``.
    For ``alpha < 1`` the bound is unavailable and the norm is reported as infinite.
    ``H`` is accepted for interface symmetry; the value does not depend on it.
    """
    u = tuple(float(v) for v in u)
    if len(u) != p.d + 1:
        raise DomainError("u needs one time and d space coordinates")
    if p.sigma == 0.0:
        return 0.0
    e, finite = exponent_test(p.alpha, p.d)
    if p.alpha < 1.0 or not finite:
        return math.inf
    big_t = u[0]
    space = math.prod(u[1:])
    # (int exp(-lambda tau^alpha |y|^2) dy)^2 = mass(lambda)^2 tau^{-alpha d}
    mass = _gaussian_mass(p.lam, p.d)
    time = integrate.quad(lambda t: 1.0, 0.0, big_t, weight="alg", wvar=(0.0, e))[0]
    return p.sigma**2 * (2.0 * math.pi) ** (-2 * p.d) * mass**2 * space * time


def _symbol_l2(alpha: float, d: int) -> float:
    # int_{R^d} E_{alpha,alpha}(-|u|^2)^2 du
    shell = 2.0 * math.pi ** (d / 2.0) / math.gamma(d / 2.0)
    x, w = np.polynomial.legendre.leggauss(64)
    edges = np.concatenate([[0.0], np.geomspace(0.05, 1000.0, 120)])
    a, b = edges[:-1, None], edges[1:, None]
    r = (0.5 * (b - a) * x + 0.5 * (b + a)).ravel()
    wr = (0.5 * (b - a) * w).ravel()
    vals = mittag_leffler(-(r * r), alpha, alpha)
    return shell * float(np.dot(wr, r ** (d - 1) * vals * vals))


def kernel_l2_norm_sq(p: HeatParams, big_t: float = 1.0) -> float:
    """``int_0^T int_{R^d} g(tau, xi)^2 dxi dtau`` for the noise kernel.

    Finite iff ``2 alpha - 2 - alpha d / 2 > -1``; ``+inf`` otherwise.
    """
    if p.sigma == 0.0:
        return 0.0
    e = 2.0 * p.alpha - 2.0 - p.alpha * p.d / 2.0
    if e <= -1.0:
        return math.inf
    c = _symbol_l2(p.alpha, p.d)
    time = big_t ** (e + 1.0) / (e + 1.0)
    return p.sigma**2 * (2.0 * math.pi) ** (-p.d) * p.lam ** (-p.d / 2.0) * c * time


@dataclass
class RefinementResult:
    params: HeatParams
    H: HurstVector
    point: tuple
    cells: list
    estimates: list
    exact: list
    ratios: list = field(default_factory=list)
    growth: bool = False
    stabilized: bool = False
    verdict: MildnessVerdict | None = None

    def to_dict(self) -> dict:
        return {
            "params": self.params.to_dict(),
            "H": list(self.H.components),
            "point": list(self.point),
            "cells": self.cells,
            "estimates": [e.to_dict() for e in self.estimates],
            "exact": self.exact,
            "ratios": self.ratios,
            "growth": self.growth,
            "stabilized": self.stabilized,
        }


def _upsample(w: np.ndarray, factor: int) -> np.ndarray:
    for axis in range(w.ndim):
        w = np.repeat(w, factor, axis=axis)
    return w


def refinement_experiment(p: HeatParams, H: HurstVector, point: Sequence[float], refinements: int = 3,
                          n_samples: int = 1000, base_cells: int | None = None, seed: int = 0,
                          threads: int = 1, growth_factor: float = 1.2,
                          stable_tol: float = 0.05) -> RefinementResult:
    """``E[Y^2]`` at ``point`` on ``refinements + 1`` dyadically refined grids.

    Every level uses the same realizations: increments are sampled on the
    finest grid and summed over blocks for the coarser ones. The grid is the
    box spanned by the origin and ``point``.
    """
    if refinements < 3:
        raise DomainError("at least three refinements are needed")
    point = tuple(float(v) for v in point)
    if len(point) != p.d + 1 or H.n != p.d + 1:
        raise DomainError("point and H need one time and d space coordinates")
    if base_cells is None:
        base_cells = 8 if p.d == 1 else 4
    levels = [base_cells * 2**k for k in range(refinements + 1)]
    grids = [Grid.box(point, (c + 1,) * (p.d + 1)) for c in levels]
    finest = grids[-1]

    slices = [kernel_slice(p, g, point) for g in grids]
    exact = [isometry_norm(Integrand(g, w), H) for g, w in zip(grids, slices)]
    up = np.stack([_upsample(w, levels[-1] // c) for w, c in zip(slices, levels)])
    det = float(deterministic_part(point[0], np.array(point[1:]), p))
    j1 = det * det

    base = SeedSpec(int(seed), 0)

    def run(lo, hi):
        inc = sample_fbm_increments(finest, H, [base.child(k) for k in range(lo, hi)])
        return np.tensordot(inc, up, axes=(tuple(range(1, inc.ndim)), tuple(range(1, up.ndim))))

    stoch = np.concatenate(map_chunks(run, n_samples, threads))  # (n, levels)
    estimates = []
    for k in range(len(levels)):
        sq = MomentEstimate.from_samples(stoch[:, k] ** 2)
        estimates.append(MomentEstimate(j1 + sq.mean, sq.variance, n_samples, sq.stderr,
                                        {"J1": j1, "J2": sq.mean, "J2_exact": exact[k],
                                         "cells": levels[k]}))
    means = [e.mean for e in estimates]
    ratios = [b / a for a, b in zip(means[:-1], means[1:])]
    growth = all(r >= growth_factor for r in ratios)
    stabilized = abs(ratios[-1] - 1.0) < stable_tol
    return RefinementResult(p, H, point, levels, estimates, exact, ratios, growth, stabilized,
                            classify(p.alpha, p.d))
