"""Univariate Haar wavelet kernels on dyadic grids.

The basis on a grid of length ``t_star = 2**(depth - 1)`` consists of the
constant function together with the step wavelets ``psi(l, k)`` for levels
``l = 2..depth`` and translations ``k = 1..n_translations(l)``.  Under the
inner product ``<f, g> = sum(f * g) / t_star`` the family is orthonormal and
complete, so any vector of dyadic length has a unique expansion

    g[t] = c1 + sum_{l,k} psi(l, k, t) * c[l][k].

Piecewise constant vectors have sparse expansions: a path with ``s`` jumps
needs at most ``(s + 1) * depth`` nonzero coefficients.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import IndexOutOfRange, NonDyadicLength


def n_translations(level: int) -> int:
    """Number of translations at a level: 1 at the root, 2**(l-2) above."""
    return 1 if level == 1 else 2 ** (level - 2)


def depth_for_length(t_star: int) -> int:
    """Resolution depth ``L`` such that ``t_star = 2**(L - 1)``.

    Raises
    ------
    NonDyadicLength
        If ``t_star`` is not a power of two >= 2.
    """
    if t_star < 2 or t_star & (t_star - 1):
        raise NonDyadicLength(f"grid length {t_star} is not a power of two >= 2")
    return t_star.bit_length()


def indicator(level: int, m: int, t: int, depth: int) -> int:
    """Dyadic block indicator: 1 iff ``t`` lies in the m-th block of the level.

    The block at (level, m) covers the ``2**(depth - level)`` grid points
    starting at ``2**(depth - level) * (m - 1) + 1`` (1-based).  Out-of-range
    ``t`` yields 0.
    """
    blk = 2 ** (depth - level)
    lo = blk * (m - 1) + 1
    return int(lo <= t < lo + blk)


def _check_index(level: int, k: int, depth: int) -> None:
    if not (2 <= level <= depth):
        raise IndexOutOfRange(f"level {level} outside 2..{depth}")
    if not (1 <= k <= n_translations(level)):
        raise IndexOutOfRange(
            f"translation {k} outside 1..{n_translations(level)} at level {level}"
        )


def psi(level: int, k: int, t: int, depth: int) -> float:
    """Evaluate the Haar wavelet psi(level, k) at grid point ``t`` (1-based)."""
    _check_index(level, k, depth)
    amp = math.sqrt(2.0 ** (level - 2))
    return amp * (indicator(level, 2 * k - 1, t, depth) - indicator(level, 2 * k, t, depth))


@lru_cache(maxsize=4096)
def psi_vector(level: int, k: int, depth: int) -> np.ndarray:
    """Dense evaluation of psi(level, k) over the full grid (read-only)."""
    _check_index(level, k, depth)
    t_star = 2 ** (depth - 1)
    blk = 2 ** (depth - level)
    amp = math.sqrt(2.0 ** (level - 2))
    vec = np.zeros(t_star)
    start = blk * (2 * k - 2)
    vec[start : start + blk] = amp
    vec[start + blk : start + 2 * blk] = -amp
    vec.setflags(write=False)
    return vec


@dataclass(frozen=True)
class HaarCoefficients:
    """Coefficients of a Haar expansion: global level plus per-level details.

    ``detail[l]`` holds the ``n_translations(l)`` coefficients of level ``l``.
    """

    c1: float
    detail: dict[int, np.ndarray]
    depth: int

    @property
    def count(self) -> int:
        return 1 + sum(arr.size for arr in self.detail.values())

    @property
    def t_star(self) -> int:
        return 2 ** (self.depth - 1)


def decompose(g: np.ndarray) -> HaarCoefficients:
    """Forward Haar transform under the ``(1/t_star)`` inner product.

    ``c1`` is the grid mean and ``c[l][k] = sum_t psi(l,k,t) g[t] / t_star``.
    The transform is exactly inverted by :func:`reconstruct`.
    """
    g = np.asarray(g, dtype=float)
    if g.ndim != 1:
        raise NonDyadicLength("decompose expects a one-dimensional vector")
    t_star = g.shape[0]
    depth = depth_for_length(t_star)
    detail: dict[int, np.ndarray] = {}
    for level in range(2, depth + 1):
        blk = 2 ** (depth - level)
        sums = g.reshape(-1, blk).sum(axis=1)
        amp = math.sqrt(2.0 ** (level - 2))
        detail[level] = amp * (sums[0::2] - sums[1::2]) / t_star
    return HaarCoefficients(c1=float(g.mean()), detail=detail, depth=depth)


def reconstruct(coeffs: HaarCoefficients) -> np.ndarray:
    """Inverse Haar transform, the exact inverse of :func:`decompose`."""
    t_star = coeffs.t_star
    g = np.full(t_star, coeffs.c1)
    for level, c in coeffs.detail.items():
        blk = 2 ** (coeffs.depth - level)
        amp = math.sqrt(2.0 ** (level - 2))
        steps = np.stack([c, -c], axis=1).ravel()
        g += amp * np.repeat(steps, blk)
    return g
