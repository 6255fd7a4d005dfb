"""O'Sullivan penalized splines.

Exact integral penalty matrices for general spline order, penalized
least-squares and REML mixed-model fitting, and a reproducible comparison
harness against P-splines.
"""

from . import errors
from .estimators import BSplineFeatures, OSplineRegressor
from .fit import FitResult, fit_penalized, gcv_select, match_edf, predict
from .linalg import (
    BandedCholesky,
    SymEigen,
    banded_cholesky,
    solve_banded_spd,
    solve_spd,
    sym_eigen,
)
from .mixed import (
    AdditiveMixedFit,
    DRTransform,
    MixedModelFit,
    build_design,
    demmler_reinsch,
    fit_additive_mixed,
    fit_reml_smoother,
    predict_mixed,
)
from .penalty import (
    NewtonCotesWeights,
    PenaltyMatrix,
    eilers_marx_knots,
    newton_cotes_weights,
    numerical_rank,
    osullivan_penalty,
    osullivan_penalty_cubic,
    pspline_penalty,
)
from .splinebasis import (
    BasisSpec,
    DesignMatrix,
    KnotSequence,
    default_num_knots,
    eval_basis,
    eval_basis_in_interval,
    make_knots,
    quantile_knots,
)
from .study import (
    ComparisonResult,
    ComparisonRow,
    RegionMeasures,
    SimSetting,
    WilcoxonResult,
    builtin_settings,
    discrepancy,
    percentile_exemplar,
    run_comparison,
    wilcoxon_signed_rank,
)

__version__ = "0.1.0"

__all__ = [
    "errors",
    "KnotSequence",
    "BasisSpec",
    "DesignMatrix",
    "make_knots",
    "quantile_knots",
    "default_num_knots",
    "eval_basis",
    "eval_basis_in_interval",
    "NewtonCotesWeights",
    "PenaltyMatrix",
    "newton_cotes_weights",
    "osullivan_penalty",
    "osullivan_penalty_cubic",
    "pspline_penalty",
    "eilers_marx_knots",
    "numerical_rank",
    "SymEigen",
    "BandedCholesky",
    "sym_eigen",
    "solve_spd",
    "banded_cholesky",
    "solve_banded_spd",
    "FitResult",
    "fit_penalized",
    "predict",
    "gcv_select",
    "match_edf",
    "DRTransform",
    "MixedModelFit",
    "AdditiveMixedFit",
    "demmler_reinsch",
    "build_design",
    "fit_reml_smoother",
    "predict_mixed",
    "fit_additive_mixed",
    "SimSetting",
    "RegionMeasures",
    "ComparisonRow",
    "ComparisonResult",
    "builtin_settings",
    "discrepancy",
    "run_comparison",
    "WilcoxonResult",
    "wilcoxon_signed_rank",
    "percentile_exemplar",
    "OSplineRegressor",
    "BSplineFeatures",
]
