"""Rank tests for latent factor structures from trailing eigenvalue spacings.

The package estimates how many pervasive factors drive a large
cross-section observed over few periods. It provides the eigenvalue
statistics and their simulated null laws under several error-variance
models, a symmetric-matrix perturbation toolkit, closed-form spacing
densities of small Gaussian orthogonal ensembles, local power curves,
Monte Carlo data-generating designs, and a command-line front end.
"""

from .densities import (
    PowerCurve,
    general_T2_weights,
    goe3_joint_spacing_pdf,
    goe3_spacing_ratio_pdf,
    goe3_total_spacing_pdf,
    local_power_gaussian,
    local_power_nongaussian_T2,
    wigner_surmise_pdf,
)
from .dgp import (
    DgpConfig,
    DgpDraw,
    DgpFixtures,
    draw_factor_path,
    draw_fixtures,
    generate,
    psi_moment,
)
from .errors import (
    ClippedEstimateWarning,
    DegenerateProjector,
    ExpansionRegimeWarning,
    IdentificationFailure,
    IngestError,
    InvalidInput,
    InvalidParameter,
    SimulationFailure,
    SmallSampleWarning,
)
from .linalg import (
    SymEig,
    commutation_matrix,
    complement_basis,
    kron,
    projector_pair,
    second_moment,
    sym_eig,
    symmetrize,
    unvec,
    vec,
)
from .nulldist import (
    ArchParam,
    IndepErrors,
    InstrGeneral,
    InstrHomo,
    Nonparam,
    SimulatedLaw,
    build_omega_arch,
    estimate_eta_q,
    estimate_instr_homo,
    estimate_lambda_hat,
    estimate_omega_nonparam,
    estimate_sigma2,
    estimate_theta_md,
    nonparam_scores,
    pvalue,
    simulate_law_S,
    simulate_law_T,
    simulate_Z_indep,
    subsample_critical_value,
)
from .perturbation import (
    LowRankSym,
    expansion_regime_bound,
    inverse_spectrum_norm,
    large_eig_eigvec_first_order,
    small_eig_first_order,
    small_eig_second_order,
)
from .stats import (
    FactorFit,
    InstrumentFit,
    InstrumentPanel,
    PanelData,
    iv_fit,
    pca_fit,
    portfolio_aggregates,
    stat_Delta,
    stat_S,
    stat_S_star,
    stat_T,
)

__version__ = "0.1.0"

__all__ = [
    "ArchParam",
    "ClippedEstimateWarning",
    "DegenerateProjector",
    "DgpConfig",
    "DgpDraw",
    "DgpFixtures",
    "ExpansionRegimeWarning",
    "FactorFit",
    "IdentificationFailure",
    "IndepErrors",
    "IngestError",
    "InstrGeneral",
    "InstrHomo",
    "InstrumentFit",
    "InstrumentPanel",
    "InvalidInput",
    "InvalidParameter",
    "LowRankSym",
    "Nonparam",
    "PanelData",
    "PowerCurve",
    "SimulatedLaw",
    "SimulationFailure",
    "SmallSampleWarning",
    "SymEig",
    "build_omega_arch",
    "commutation_matrix",
    "complement_basis",
    "draw_factor_path",
    "draw_fixtures",
    "estimate_eta_q",
    "estimate_instr_homo",
    "estimate_lambda_hat",
    "estimate_omega_nonparam",
    "estimate_sigma2",
    "estimate_theta_md",
    "expansion_regime_bound",
    "general_T2_weights",
    "generate",
    "goe3_joint_spacing_pdf",
    "goe3_spacing_ratio_pdf",
    "goe3_total_spacing_pdf",
    "inverse_spectrum_norm",
    "iv_fit",
    "kron",
    "large_eig_eigvec_first_order",
    "local_power_gaussian",
    "local_power_nongaussian_T2",
    "nonparam_scores",
    "pca_fit",
    "portfolio_aggregates",
    "projector_pair",
    "psi_moment",
    "pvalue",
    "second_moment",
    "simulate_law_S",
    "simulate_law_T",
    "simulate_Z_indep",
    "small_eig_first_order",
    "small_eig_second_order",
    "stat_Delta",
    "stat_S",
    "stat_S_star",
    "stat_T",
    "subsample_critical_value",
    "sym_eig",
    "symmetrize",
    "unvec",
    "vec",
    "wigner_surmise_pdf",
]
