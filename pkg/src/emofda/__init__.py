"""Functional data analysis of facial action-unit trajectories.

Modules
-------
fdcore        time grids, curves, B-spline bases, penalized smoothing, L2 products
fpca          multivariate functional principal components
registration  monotone warps and template registration
fanova        constrained functional linear model and functional F-tests
fdist         F distribution (cdf, quantile)
synth         synthetic data with known ground truth
io            OpenFace-style CSV ingestion and curve files
pipeline      end-to-end analysis and report files
cli           command-line entry point
"""

from .fdcore import (
    BasisExpansion,
    BSplineBasis,
    Curve,
    MultiChannelCurve,
    TimeGrid,
    basis_matrix,
    eval_basis,
    eval_expansion,
    l2_inner_product,
    make_bspline_basis,
    penalty_matrix,
    smooth_curve,
)
from .fdist import FDist, f_cdf, f_quantile
from .fpca import FpcaModel, covariance_kernel, fpca, kl_reconstruct, mean_function, pc_scores
from .registration import (
    RegistrationConfig,
    RegistrationResult,
    Warp,
    apply_warp,
    compose_warps,
    invert_warp,
    register_by_reference,
    register_sample,
)
from .fanova import (
    DesignMatrix,
    FanovaFit,
    FTestReport,
    build_design_matrix,
    classify_effect,
    constraint_row,
    fit_flm,
    fit_reduced_and_ssh0,
    ftest,
    sse,
)
from .synth import SynthConfig, generate
from .io import AU_LABELS, EMOTIONS, VideoRecord, ingest_csv, write_csv
from .pipeline import PipelineConfig, emit_plot_data, load_config, run_pipeline

__version__ = "0.1.0"
