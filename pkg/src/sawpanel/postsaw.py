"""Segment-wise IV refit on detected jump locations (post-SAW stage).

Given per-regressor jump locations, every regressor is split into the
implied stability segments and the differenced, cross-sectionally demeaned
model is refit with one coefficient per segment.  The refit runs on the
original (unpadded) time range and achieves the same asymptotic distribution
as if the jump locations were known, so conventional z-tests apply.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import stats

from .errors import CollinearDesign, EmptySegment, SingularCrossProduct
from .panel import PanelDataset, dot_transform


@dataclass(frozen=True)
class SegmentInfo:
    """One stability segment: regressor ``p`` (0-based), covering periods
    ``lo + 1 .. hi`` (i.e. the half-open interval (lo, hi] in period index)."""

    regressor: int
    index: int
    lo: int
    hi: int
    col: int


@dataclass(frozen=True)
class SegmentDesign:
    """Segment-interacted design on the original differenced time range.

    ``dx`` stacks the differenced, demeaned, segment-masked regressor
    columns; ``zt`` the matching instrument columns; ``dy`` the demeaned
    differenced outcome.  Undemeaned copies are kept for recovering the
    differenced time-effect path from residual cross-means.
    """

    dx: np.ndarray
    zt: np.ndarray
    dy: np.ndarray
    dx_raw: np.ndarray
    dy_raw: np.ndarray
    segments: tuple[SegmentInfo, ...]
    t_lengths: np.ndarray
    n: int
    t: int

    @property
    def n_params(self) -> int:
        return self.dx.shape[2]


@dataclass(frozen=True)
class ChowRecord:
    """Consecutive-segment coefficient difference test."""

    regressor: int
    index: int
    z: float
    p_value: float


@dataclass(frozen=True)
class PostSawFit:
    """Segment coefficients with covariance, standard errors and tests.

    ``sigma`` is the covariance of ``sqrt(n * T_seg) * (beta_hat - beta)``;
    dividing its diagonal by ``n * T_seg`` gives the squared standard
    errors (``cov_beta`` holds that unscaled covariance directly).
    """

    beta: np.ndarray
    sigma: np.ndarray
    cov_beta: np.ndarray
    se: np.ndarray
    variance_case: int
    segments: tuple[SegmentInfo, ...]
    t_lengths: np.ndarray
    tests: tuple[ChowRecord, ...]
    dtheta: np.ndarray
    t: int
    n_regressors: int
    time_labels: np.ndarray | None = None

    def beta_path(self) -> np.ndarray:
        """Expand segment coefficients to a (T, P) step-function path."""
        path = np.zeros((self.t, self.n_regressors))
        for seg in self.segments:
            path[seg.lo : seg.hi, seg.regressor] = self.beta[seg.col]
        return path

    def segment_table(self) -> list[dict]:
        rows = []
        for seg in self.segments:
            row = {
                "regressor": seg.regressor + 1,
                "segment": seg.index,
                "start": seg.lo + 1,
                "end": seg.hi,
                "coef": float(self.beta[seg.col]),
                "se": float(self.se[seg.col]),
            }
            if self.time_labels is not None:
                row["start_label"] = _scalar(self.time_labels[seg.lo])
                row["end_label"] = _scalar(self.time_labels[seg.hi - 1])
            rows.append(row)
        return rows

    def to_dict(self) -> dict:
        return {
            "variance_case": self.variance_case,
            "segments": self.segment_table(),
            "tests": [
                {
                    "regressor": rec.regressor + 1,
                    "segment": rec.index,
                    "z": float(rec.z),
                    "p_value": float(rec.p_value),
                }
                for rec in self.tests
            ],
        }


def _scalar(value):
    return value.item() if hasattr(value, "item") else value


def _validate_jumps(taus, t: int) -> list[int]:
    taus = sorted(int(v) for v in taus)
    for prev, cur in zip([0, *taus], [*taus, t]):
        if cur <= prev:
            raise EmptySegment(f"jump locations {taus} produce an empty segment in (0, {t})")
    if taus and (taus[0] < 1 or taus[-1] > t - 1):
        raise EmptySegment(f"jump locations {taus} outside the open interval (0, {t})")
    return taus


def build_design(
    panel: PanelDataset,
    jump_sets: list,
    common_jumps: bool = False,
    instrument_levels: bool = True,
) -> SegmentDesign:
    """Build the segment-interacted differenced design.

    Each regressor column is masked by its segment indicator before
    differencing, which reproduces the exact decomposition of the piecewise
    model including the boundary terms, then demeaned across units to remove
    the differenced time effect.  Instruments are masked by the same segment
    indicators; by default the instrument level at each period is used
    (``instrument_levels=False`` differences the masked instrument like the
    regressor instead, which induces first-order serial correlation in the
    score that the no-autocorrelation variance cases ignore).

    Raises
    ------
    EmptySegment
        If a segment would contain no periods.
    CollinearDesign
        If an interacted column is identically zero.
    """
    p_count = panel.n_regressors
    if len(jump_sets) != p_count:
        raise EmptySegment(f"need one jump set per regressor, got {len(jump_sets)}")
    t, n = panel.t, panel.n
    if common_jumps:
        union = sorted({int(v) for taus in jump_sets for v in taus})
        jump_sets = [union] * p_count
    jump_sets = [_validate_jumps(taus, t) for taus in jump_sets]

    columns_x, columns_z, segments = [], [], []
    col = 0
    for p in range(p_count):
        bounds = [0, *jump_sets[p], t]
        for j in range(len(bounds) - 1):
            lo, hi = bounds[j], bounds[j + 1]
            mask = np.zeros(t)
            mask[lo:hi] = 1.0
            xm = panel.x[:, :, p] * mask
            dxm = xm[:, 1:] - xm[:, :-1]
            if np.max(np.abs(dxm)) == 0.0:
                raise CollinearDesign(
                    f"regressor {p + 1}, segment {j + 1} yields an all-zero design column"
                )
            zm = panel.z[:, :, p] * mask
            zcol = zm[:, 1:] if instrument_levels else zm[:, 1:] - zm[:, :-1]
            columns_x.append(dxm)
            columns_z.append(zcol)
            segments.append(SegmentInfo(regressor=p, index=j + 1, lo=lo, hi=hi, col=col))
            col += 1

    dx_raw = np.stack(columns_x, axis=2)
    zt_raw = np.stack(columns_z, axis=2)
    dy_raw = panel.y[:, 1:] - panel.y[:, :-1]
    t_lengths = np.array(
        [
            seg.hi - seg.lo + (1 if seg.index <= _n_segments(segments, seg.regressor) - 1 else 0)
            for seg in segments
        ],
        dtype=float,
    )
    return SegmentDesign(
        dx=dot_transform(dx_raw),
        zt=dot_transform(zt_raw),
        dy=dot_transform(dy_raw),
        dx_raw=dx_raw,
        dy_raw=dy_raw,
        segments=tuple(segments),
        t_lengths=t_lengths,
        n=n,
        t=t,
    )


def _n_segments(segments, p: int) -> int:
    return sum(1 for seg in segments if seg.regressor == p)


def estimate(design: SegmentDesign) -> np.ndarray:
    """Solve the segment IV normal equations for the coefficient vector."""
    g = np.einsum("itd,ite->de", design.zt, design.dx)
    rhs = np.einsum("itd,it->d", design.zt, design.dy)
    try:
        if np.linalg.cond(g) > 1e12:
            raise np.linalg.LinAlgError
        return np.linalg.solve(g, rhs)
    except np.linalg.LinAlgError:
        raise SingularCrossProduct(
            "instrument/regressor cross-product is singular; segments may be too short"
        ) from None


def _variance_weights(resid: np.ndarray, case: int) -> np.ndarray:
    if case == 1:
        return np.full_like(resid, (resid**2).mean())
    if case == 2:
        return np.broadcast_to((resid**2).mean(axis=1, keepdims=True), resid.shape)
    if case == 3:
        return np.broadcast_to((resid**2).mean(axis=0, keepdims=True), resid.shape)
    if case == 4:
        return resid**2
    raise ValueError(f"variance case must be 1..4, got {case}")


def covariance(
    design: SegmentDesign, beta: np.ndarray, case: int = 4
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Sandwich covariance under one of four error structures.

    Case 1 pools the squared residuals, case 2 averages per unit, case 3 per
    period, case 4 keeps them observation-wise (fully heteroscedasticity
    robust).  Returns ``(sigma, cov_beta, se)`` where ``sigma`` is the
    normalized covariance of Theorem-style ``sqrt(n * T_seg)`` scalings and
    ``cov_beta`` the plain covariance of the coefficient estimate; both are
    symmetric positive semidefinite by construction.
    """
    resid = design.dy - np.einsum("itd,d->it", design.dx, beta)
    w = _variance_weights(resid, case)
    v = np.einsum("itd,ite,it->de", design.zt, design.zt, w)
    g = np.einsum("itd,ite->de", design.zt, design.dx)
    ginv = np.linalg.inv(g)
    cov_beta = ginv @ v @ ginv.T
    cov_beta = 0.5 * (cov_beta + cov_beta.T)
    scal = np.sqrt(design.n * design.t_lengths)
    sigma = scal[:, None] * cov_beta * scal[None, :]
    se = np.sqrt(np.clip(np.diag(cov_beta), 0.0, None))
    return sigma, cov_beta, se


def chow_tests(
    beta: np.ndarray, cov_beta: np.ndarray, segments: tuple[SegmentInfo, ...]
) -> tuple[ChowRecord, ...]:
    """z-tests for the difference of consecutive segment coefficients.

    Uses the joint covariance block including the cross-segment covariance;
    the demeaning transform correlates segment estimates in finite samples.
    """
    records = []
    by_reg: dict[int, list[SegmentInfo]] = {}
    for seg in segments:
        by_reg.setdefault(seg.regressor, []).append(seg)
    for p, segs in by_reg.items():
        segs = sorted(segs, key=lambda s: s.index)
        for prev, cur in zip(segs, segs[1:]):
            diff = beta[cur.col] - beta[prev.col]
            var = (
                cov_beta[cur.col, cur.col]
                + cov_beta[prev.col, prev.col]
                - 2.0 * cov_beta[cur.col, prev.col]
            )
            if var <= 0.0:
                z = 0.0 if diff == 0.0 else math.copysign(float("inf"), diff)
            else:
                z = diff / math.sqrt(var)
            records.append(
                ChowRecord(
                    regressor=p,
                    index=cur.index,
                    z=float(z),
                    p_value=float(2.0 * stats.norm.sf(abs(z))),
                )
            )
    return tuple(records)


def fit_post_saw(
    panel: PanelDataset,
    jump_sets: list,
    case: int = 4,
    common_jumps: bool = False,
    instrument_levels: bool = True,
) -> PostSawFit:
    """Full post-SAW stage: design, IV estimate, covariance, segment tests."""
    design = build_design(
        panel, jump_sets, common_jumps=common_jumps, instrument_levels=instrument_levels
    )
    beta = estimate(design)
    sigma, cov_beta, se = covariance(design, beta, case=case)
    tests = chow_tests(beta, cov_beta, design.segments)
    # differenced time effect from residual cross-means of the undemeaned model
    dtheta = (design.dy_raw - np.einsum("itd,d->it", design.dx_raw, beta)).mean(axis=0)
    return PostSawFit(
        beta=beta,
        sigma=sigma,
        cov_beta=cov_beta,
        se=se,
        variance_case=case,
        segments=design.segments,
        t_lengths=design.t_lengths,
        tests=tests,
        dtheta=dtheta,
        t=panel.t,
        n_regressors=panel.n_regressors,
        time_labels=panel.time_labels,
    )
