"""End-to-end fit: instruments, differencing, SAW, jump detection, post-SAW."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import jumps as jumps_mod
from . import postsaw, saw
from .panel import (
    DifferencedPanel,
    PanelDataset,
    between_transform,
    first_difference,
    prepare_instruments,
    reflect_pad,
)


@dataclass(frozen=True)
class PipelineOptions:
    """Knobs for the full estimation pipeline.

    ``instruments`` is ``"self"`` (exogenous, z := x) or ``"two_stage"``
    (first-stage fitted values).  ``time_effects`` keeps the differenced time
    effect as a unit-regressor jumping parameter (``"unit"``, interpretable
    piecewise path) or removes it by cross-sectional demeaning before the
    wavelet stage (``"between"``).
    """

    instruments: str = "self"
    time_effects: str = "unit"
    variance_case: int = 4
    lam: float | None = None
    common_jumps: bool = False
    smalln: bool = False
    eps_rank: float = 1e-10
    post_instrument_levels: bool = True

    def __post_init__(self):
        if self.instruments not in ("self", "two_stage"):
            raise ValueError(f"instruments must be self|two_stage, got {self.instruments!r}")
        if self.time_effects not in ("unit", "between"):
            raise ValueError(f"time_effects must be unit|between, got {self.time_effects!r}")
        if self.variance_case not in (1, 2, 3, 4):
            raise ValueError(f"variance_case must be 1..4, got {self.variance_case}")
        if self.lam is not None and self.lam < 0:
            raise ValueError("lambda override must be >= 0")


@dataclass(frozen=True)
class PanelFit:
    """Bundle of all pipeline stages for one panel."""

    panel: PanelDataset
    dp: DifferencedPanel
    saw_fit: saw.SawFit
    report: jumps_mod.JumpReport
    post: postsaw.PostSawFit
    options: PipelineOptions


def fit_panel(panel: PanelDataset, options: PipelineOptions | None = None) -> PanelFit:
    """Run the full pipeline on a balanced panel."""
    opts = options or PipelineOptions()
    prepared = prepare_instruments(panel, mode=opts.instruments)
    dp = first_difference(prepared)
    if opts.time_effects == "between":
        dp = between_transform(dp)
    dp = reflect_pad(dp)
    basis = saw.build_basis(dp, eps_rank=opts.eps_rank)
    b_raw = saw.estimate_b(dp, basis)
    sel = saw.select_threshold(dp, basis, b_raw=b_raw, smalln=opts.smalln)
    lam = sel.lam if opts.lam is None else float(opts.lam)
    fit = saw.shrink_and_reconstruct(b_raw, lam, basis, v_hat=sel.v_hat, kappa=sel.kappa)
    c_shift, c_unshift = jumps_mod.univariate_trees(fit.gamma_raw, prepared.n_regressors)
    report = jumps_mod.detect(
        c_shift, c_unshift, lam, t_orig=prepared.t, time_labels=prepared.time_labels
    )
    post = postsaw.fit_post_saw(
        prepared,
        [list(v) for v in report.locations],
        case=opts.variance_case,
        common_jumps=opts.common_jumps,
        instrument_levels=opts.post_instrument_levels,
    )
    return PanelFit(
        panel=prepared, dp=dp, saw_fit=fit, report=report, post=post, options=opts
    )
