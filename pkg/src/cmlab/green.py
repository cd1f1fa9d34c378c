"""Green's function of the Laplacian on the unit flat torus.

The kernel G_p solves -Delta G_p = delta_p - 1 with zero mean. Dirac data
cannot be sampled, so the construction splits off the logarithm
analytically: G = R - (1/2 pi) chi(d) log d, with chi a C^4 cutoff equal to
1 for d <= 1/8 and 0 for d >= 3/8 (nearest-image distance d). The smooth
remainder R solves -Delta R = -(1 + psi) spectrally, where psi collects the
cutoff's commutator terms; near an atom every evaluation goes through the
analytic log plus the tabulated R, never through raw grid samples of G.

The singular part of a conformal factor for a divisor is
S = -2 pi * sum_i beta_i G_{p_i}, so that -Delta S has atoms
-2 pi beta_i delta_{p_i} plus the constant 2 pi sum_i beta_i.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .grids import (TAU, Field, TorusChart, bilinear_torus, fft2, ifft2,
                    laplacian_multiplier, torus_distance)
from .measures import Divisor

_R1 = 0.125
_R2 = 0.375
_W = _R2 - _R1


def _s4(t: np.ndarray) -> np.ndarray:
    """C^4 smoothstep on [0,1]: integral of 630 t^4 (1-t)^4, normalized."""
    t = np.clip(t, 0.0, 1.0)
    return t ** 5 * (126.0 + t * (-420.0 + t * (540.0 + t * (-315.0 + t * 70.0))))


def _s4_d1(t: np.ndarray) -> np.ndarray:
    t = np.clip(t, 0.0, 1.0)
    return 630.0 * t ** 4 * (1.0 - t) ** 4


def _s4_d2(t: np.ndarray) -> np.ndarray:
    t = np.clip(t, 0.0, 1.0)
    return 2520.0 * t ** 3 * (1.0 - t) ** 3 * (1.0 - 2.0 * t)


def cutoff(d: np.ndarray) -> np.ndarray:
    """chi(d): 1 inside d <= 1/8, 0 outside d >= 3/8, C^4 in between."""
    return 1.0 - _s4((np.asarray(d, dtype=float) - _R1) / _W)


def _cutoff_d1(d: np.ndarray) -> np.ndarray:
    return -_s4_d1((np.asarray(d, dtype=float) - _R1) / _W) / _W


def _cutoff_d2(d: np.ndarray) -> np.ndarray:
    return -_s4_d2((np.asarray(d, dtype=float) - _R1) / _W) / (_W * _W)


def _psi(d: np.ndarray) -> np.ndarray:
    """Laplacian of -(1/2 pi) chi log d away from the atom (the cutoff tail)."""
    d = np.asarray(d, dtype=float)
    out = np.zeros_like(d)
    band = (d > _R1) & (d < _R2)
    db = d[band]
    c1 = _cutoff_d1(db)
    c2 = _cutoff_d2(db)
    out[band] = (np.log(db) * (c2 + c1 / db) + 2.0 * c1 / db) / TAU
    return out


@lru_cache(maxsize=1)
def _cutoff_log_mean() -> float:
    """(1/2 pi) integral over the torus of chi(d) log d.

    Inner disk d <= 1/8 analytic; the cutoff band by 64-node Gauss-Legendre.
    """
    inner = 0.5 * _R1 ** 2 * (math.log(_R1) - 0.5)
    t, w = np.polynomial.legendre.leggauss(64)
    r = 0.5 * (_R2 + _R1) + 0.5 * _W * t
    band = 0.5 * _W * float(np.sum(w * cutoff(r) * r * np.log(r)))
    return inner + band


@dataclass(frozen=True)
class TorusGreen:
    """Tabulated kernel for one atom: remainder grid plus analytic log."""

    p: tuple
    n: int
    remainder: np.ndarray
    samples: np.ndarray

    def remainder_at(self, x, y) -> np.ndarray:
        return bilinear_torus(self.remainder, x, y)

    def eval(self, x, y) -> np.ndarray:
        """G_p off the grid: bilinear remainder + analytic cutoff log."""
        d = torus_distance(x, y, *self.p)
        d = np.maximum(d, 1e-300)
        return self.remainder_at(x, y) - cutoff(d) * np.log(d) / TAU


@lru_cache(maxsize=64)
def _green_cached(px: float, py: float, n: int) -> TorusGreen:
    chart = TorusChart()
    X, Y = chart.mesh(n)
    d = torus_distance(X, Y, px, py)
    rhs = -1.0 - _psi(d)
    rhat = fft2(rhs)
    rhat[0, 0] = 0.0
    k2 = laplacian_multiplier(n)
    what = np.zeros_like(rhat)
    mask = k2 > 0
    what[mask] = rhat[mask] / k2[mask]
    # pin the continuum mean of G to zero: mean(R) = (1/2pi) int chi log d
    what[0, 0] = n * n * _cutoff_log_mean()
    remainder = ifft2(what).real
    # a node coinciding with the atom gets a clamped stand-in sample
    d_eff = np.maximum(d, 1.0 / (1024.0 * n))
    samples = remainder - cutoff(d) * np.log(d_eff) / TAU
    remainder.setflags(write=False)
    samples.setflags(write=False)
    return TorusGreen((px, py), n, remainder, samples)


def green_kernel(p, n: int) -> TorusGreen:
    return _green_cached(float(p[0]), float(p[1]), int(n))


def green_torus(p, n: int) -> Field:
    """Grid samples of the mean-zero kernel G_p on an n x n torus grid."""
    return Field(np.array(green_kernel(p, n).samples), TorusChart())


def _atom_on_node(p, n: int) -> bool:
    fx = abs(p[0] * n - round(p[0] * n))
    fy = abs(p[1] * n - round(p[1] * n))
    return max(fx, fy) < 1e-8


@dataclass(frozen=True)
class SingularSplit:
    """Decomposition u = S + v: S carries the divisor's log singularities."""

    divisor: Divisor
    S: Field
    greens: tuple

    @property
    def beta_sum(self) -> float:
        return self.divisor.beta_sum

    @property
    def n(self) -> int:
        return self.S.n

    def smooth_rest(self, i: int, x, y) -> np.ndarray:
        """S - beta_i log|x - p_i| evaluated stably near atom i.

        Assembled from the tabulated remainders so that no large logs
        cancel: the i-th atom contributes beta_i (chi(d) - 1) log d, which
        vanishes identically inside the cutoff core.
        """
        betas = self.divisor.betas
        out = np.zeros(np.broadcast(np.asarray(x), np.asarray(y)).shape)
        for j, g in enumerate(self.greens):
            out -= TAU * betas[j] * g.remainder_at(x, y)
            d = np.maximum(torus_distance(x, y, *g.p), 1e-300)
            if j == i:
                out += betas[j] * (cutoff(d) - 1.0) * np.log(d)
            else:
                out += betas[j] * cutoff(d) * np.log(d)
        return out

    def eval_S(self, x, y) -> np.ndarray:
        """S off the grid (analytic logs + bilinear remainders)."""
        out = np.zeros(np.broadcast(np.asarray(x), np.asarray(y)).shape)
        for j, g in enumerate(self.greens):
            out -= TAU * self.divisor.betas[j] * g.eval(x, y)
        return out


def singular_part(div: Divisor, n: int) -> SingularSplit:
    """S = -2 pi sum_i beta_i G_{p_i} with per-atom kernels retained.

    Atoms must not coincide with grid nodes: e^{2S} is unbounded there for
    negative weights and the sampled equation would be meaningless.
    """
    for p in div.points:
        if _atom_on_node(p, n):
            raise ValueError(
                f"atom {p} lies on a grid node at n={n}; perturb it or change n")
    greens = tuple(green_kernel(p, n) for p in div.points)
    S = np.zeros((n, n))
    for beta, g in zip(div.betas, greens):
        S = S - TAU * beta * g.samples
    return SingularSplit(div, Field(S, TorusChart()), greens)
