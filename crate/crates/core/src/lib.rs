//! Co-clustering of bipartite graphs sampled from step graphons.
//!
//! The crate covers sampling, empirical and population block statistics,
//! the matching of observed labels to population co-clusters, profile-set
//! geometry, estimators, and the rate-verification harness.

pub mod error;
pub mod estimators;
pub mod geometry;
pub mod graphon;
pub mod harness;
pub mod kmeans;
pub mod linalg;
pub mod population;
pub mod qp;
pub mod rng;
pub mod stats;
pub mod textfmt;

pub use error::{Error, Result};
pub use nalgebra;
pub use graphon::{conditional_mean_matrix, sample_bipartite, BipartiteSample, StepGraphon};
pub use stats::{
    block_summary, empirical_risk, model_kernel, BlockSummary, CoClusterLabels, GeneralLatent, LatentRef,
    ModelFamily, Theta,
};
pub use population::{
    blocked_graphon, blocked_graphon_mixed, centering_constants, greedy_sigma_star, match_population_cocluster,
    population_risk, realize_partition, AllocationMap, PopulationLatentMap, RowSide, Side,
};
pub use geometry::{
    epsilon_cover, hausdorff_estimate, profile_vector, psi_cdf_distance, quantize_latents, EpsilonCover, ProfileSet,
    ProfileVector, SupportFunction,
};
pub use estimators::{fit_blockmodel_als, fit_dot_product_model, spectral_cocluster, BlockmodelFit, DotProductFit};
pub use harness::{
    emit_report, fit_rate_exponent, matrix_from_csv, matrix_to_csv, parse_results_csv, run_experiment, Candidate, Experiment, ExperimentConfig,
    RateResult, ResultRow, SummaryRow,
};
