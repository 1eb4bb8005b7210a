"""Structure adapted wavelet (SAW) estimation of panel structural breaks.

Detects regressor-specific jump locations in the slope parameters of
balanced panels, refits the implied stability segments with asymptotic
inference, and ships a Monte Carlo harness over six simulation designs.
"""

from .dgp import DgpSpec, DgpTruth, McResult, generate, run_monte_carlo, true_beta
from .errors import SawError
from .jumps import JumpReport, detect, hausdorff, univariate_trees
from .panel import (
    ColumnSchema,
    DifferencedPanel,
    ModelComponents,
    PanelDataset,
    between_transform,
    dot_transform,
    first_difference,
    load_panel,
    prepare_instruments,
    recover_effects,
    reflect_pad,
)
from .pipeline import PanelFit, PipelineOptions, fit_panel
from .postsaw import PostSawFit, SegmentDesign, build_design, chow_tests, covariance, fit_post_saw
from .saw import (
    SawBasis,
    SawCoefficients,
    SawFit,
    build_basis,
    estimate_b,
    fit_saw,
    inv_sqrt,
    reconstruct_gamma,
    select_threshold,
    shrink_and_reconstruct,
)

__all__ = [
    "ColumnSchema",
    "DgpSpec",
    "DgpTruth",
    "DifferencedPanel",
    "JumpReport",
    "McResult",
    "ModelComponents",
    "PanelDataset",
    "PanelFit",
    "PipelineOptions",
    "PostSawFit",
    "SawBasis",
    "SawCoefficients",
    "SawError",
    "SawFit",
    "SegmentDesign",
    "between_transform",
    "build_basis",
    "build_design",
    "chow_tests",
    "covariance",
    "detect",
    "dot_transform",
    "estimate_b",
    "first_difference",
    "fit_panel",
    "fit_post_saw",
    "fit_saw",
    "generate",
    "hausdorff",
    "inv_sqrt",
    "load_panel",
    "prepare_instruments",
    "reconstruct_gamma",
    "recover_effects",
    "reflect_pad",
    "run_monte_carlo",
    "select_threshold",
    "shrink_and_reconstruct",
    "true_beta",
    "univariate_trees",
]

__version__ = "0.1.0"
