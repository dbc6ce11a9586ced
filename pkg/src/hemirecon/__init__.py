"""Hemispheric temperature reconstruction from multiproxy networks.

Library + CLI covering: time-series transforms (anomalies, decadal
blocks, band splitting, loess), proxy network screening, the competing
reconstruction methods (OLS on proxy PCs, lasso, regularized EM in
non-hybrid and band-split hybrid variants), Bayesian coefficient
ensembles with warmest-decade probabilities, and an AR(1) red-noise
pseudoproxy benchmark harness.
"""

from .errors import (
    BlockMismatch,
    ConvergenceError,
    DegenerateBaseline,
    DegenerateColumn,
    DegenerateTruth,
    DuplicateId,
    FormatError,
    HemireconError,
    InsufficientCalibration,
    MissingDataError,
    NoCompleteBlock,
    NoOverlap,
    SingularFit,
    SpecError,
)
from .pipeline import MethodConfig, reconstruct_with
from .proxies import (
    ProxyMatrix,
    ProxyNetwork,
    ProxyRecord,
    exclude_flagged,
    load_network,
    network_matrix,
    save_network,
    screen_replication,
)
from .pseudoproxy import (
    BenchmarkResult,
    PseudoproxySpec,
    TruthConfig,
    TruthField,
    ar1_noise,
    generate_truth,
    load_field,
    make_pseudoproxies,
    run_benchmark,
    save_field,
)
from .regem import fit_regem, reconstruct_hybrid, regem_impute
from .regression import (
    PCABasis,
    ReconModel,
    Reconstruction,
    fit_lasso,
    fit_ols_pc,
    fit_pca,
    predict,
    select_K,
)
from .seeding import derive_seed
from .timeseries import (
    BandPair,
    TimeSeries,
    align,
    decadal_average,
    interpolate_linear,
    loess_smooth,
    read_series_csv,
    split_bands,
    to_anomaly,
    write_series_csv,
)
from .uncertainty import (
    CoefficientDraws,
    Ensemble,
    build_ensemble,
    prob_warmest_decade,
    sample_coefficients,
    splice_observed,
)
from .verification import SkillReport, holdout_validate, score

__version__ = "0.1.0"
