"""Jump detection from shifted and unshifted univariate coefficient trees.

The SAW stage produces two estimates of every slope path: the contemporaneous
block of ``gamma`` (periods 2..T, the *shifted* window) and the lag block
(periods 1..T-1, the *unshifted* window).  Haar-transforming both gives two
coefficient trees offset by one period, and their finest levels split the
work between them: the unshifted tree sees slope changes after odd periods
as within-pair differences, the shifted tree those after even periods.  A
change that sits on a pair boundary of one tree is interior to a pair of the
other, which kills the spurious-jump artifacts that a single tree produces
for non-dyadic jump locations.

Thresholding the finest-level coefficients at the SAW threshold and reading
off the nonzero within-pair differences therefore yields consistent jump
counts and locations; detections inside the reflection-padded range are
dropped.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import haar


@dataclass(frozen=True)
class JumpReport:
    """Detected jumps per regressor, in original (pre-padding) time.

    ``locations[p]`` holds strictly increasing period indices ``tau`` with
    the convention that the slope changes between periods ``tau`` and
    ``tau + 1``; ``sizes[p]`` the corresponding slope increments.
    """

    locations: list[np.ndarray]
    sizes: list[np.ndarray]
    counts: np.ndarray
    c_shift: list[haar.HaarCoefficients]
    c_unshift: list[haar.HaarCoefficients]
    threshold: float
    t_orig: int
    time_labels: np.ndarray | None = None

    @property
    def n_regressors(self) -> int:
        return len(self.locations)

    def to_dict(self) -> dict:
        """Machine-readable report: per regressor, locations, labels, sizes."""
        regs = []
        for p in range(self.n_regressors):
            locs = [int(v) for v in self.locations[p]]
            entry = {
                "regressor": p + 1,
                "count": int(self.counts[p]),
                "locations": locs,
                "sizes": [float(v) for v in self.sizes[p]],
            }
            if self.time_labels is not None:
                entry["labels"] = [_as_scalar(self.time_labels[v - 1]) for v in locs]
            regs.append(entry)
        return {"threshold": float(self.threshold), "regressors": regs}


def _as_scalar(value):
    return value.item() if hasattr(value, "item") else value


def univariate_trees(
    gamma_raw: np.ndarray, n_regressors: int
) -> tuple[list[haar.HaarCoefficients], list[haar.HaarCoefficients]]:
    """Haar-transform both estimates of every slope path.

    Uses the unshrunk SAW path: column ``p`` gives the shifted tree (the
    slope at periods 2..T), column ``p + P`` the unshifted tree (periods
    1..T-1); both are plain Haar transforms over the stored dyadic grid.
    """
    c_shift = [haar.decompose(gamma_raw[:, p]) for p in range(n_regressors)]
    c_unshift = [haar.decompose(gamma_raw[:, p + n_regressors]) for p in range(n_regressors)]
    return c_shift, c_unshift


def detect(
    c_shift: list[haar.HaarCoefficients],
    c_unshift: list[haar.HaarCoefficients],
    lam: float,
    t_orig: int,
    time_labels: np.ndarray | None = None,
) -> JumpReport:
    """Threshold the finest-level tree coefficients and read off jumps.

    At the finest level each coefficient is proportional to one within-pair
    difference of the underlying path, so the slope increment at period
    ``t`` equals ``-2 sqrt(2**(L-2))`` times the coefficient of the pair
    containing ``t`` (the difference of consecutive wavelet values collapses
    to that single term on the even/odd evaluation sets).  The unshifted
    tree covers changes after odd periods, the shifted tree changes after
    even periods; detections beyond period ``t_orig - 1`` fall in the
    reflection-padded range and are removed.
    """
    n_regressors = len(c_shift)
    depth = c_shift[0].depth if n_regressors else 2
    scale = 2.0 * math.sqrt(2.0 ** (depth - 2))
    locations: list[np.ndarray] = []
    sizes: list[np.ndarray] = []
    for p in range(n_regressors):
        cu = c_unshift[p].detail[depth]
        cs = c_shift[p].detail[depth]
        ku = np.nonzero(np.abs(cu) > lam)[0]
        ks = np.nonzero(np.abs(cs) > lam)[0]
        locs = np.concatenate([2 * ku + 1, 2 * (ks + 1)])
        vals = np.concatenate([-scale * cu[ku], -scale * cs[ks]])
        order = np.argsort(locs, kind="stable")
        locs, vals = locs[order], vals[order]
        keep = locs <= t_orig - 1
        locations.append(locs[keep].astype(int))
        sizes.append(vals[keep])
    counts = np.array([len(v) for v in locations], dtype=int)
    return JumpReport(
        locations=locations,
        sizes=sizes,
        counts=counts,
        c_shift=c_shift,
        c_unshift=c_unshift,
        threshold=float(lam),
        t_orig=t_orig,
        time_labels=time_labels,
    )


def hausdorff(tau_a, tau_b, horizon: float) -> float:
    """Hausdorff distance between two jump-location sets.

    Empty against empty is 0; exactly one empty set costs the full horizon,
    penalizing false positives and false negatives symmetrically.
    """
    a = np.asarray(sorted(tau_a), dtype=float)
    b = np.asarray(sorted(tau_b), dtype=float)
    if a.size == 0 and b.size == 0:
        return 0.0
    if a.size == 0 or b.size == 0:
        return float(horizon)
    dist = np.abs(a[:, None] - b[None, :])
    return float(max(dist.min(axis=1).max(), dist.min(axis=0).max()))
