//! Optimal subsampling estimators for generalized linear models under
//! measurement constraints.
//!
//! The crate implements a two-stage subsampling estimator for GLMs with
//! canonical links (linear, logistic, Poisson): a small uniform pilot
//! subsample yields a pilot estimate and an information-matrix estimate, from
//! which A-optimal subsampling probabilities are computed *without touching
//! any further responses*; a second subsample of size `r` is then drawn with
//! those probabilities, only its responses are measured, and the final
//! estimate solves an inverse-probability-weighted score equation.
//!
//! Modules:
//! - [`glm`]: families, response stores with measurement accounting, the
//!   weighted score/information pair, and the damped Newton solver.
//! - [`sampling`]: subsampling weight constructors (optimal, uniform,
//!   leverage, shrinkage leverage, mMSE benchmark) and an O(1)-per-draw alias
//!   sampler.
//! - [`estimator`]: the end-to-end pipelines, the response-free linear fast
//!   path, and plug-in variance / A-criterion computations.
//! - [`datagen`]: seeded synthetic scenario generators.
//! - [`bench`]: the replication harness (empirical MSE, timing, Q-Q
//!   diagnostics, held-out evaluation on real data).
//! - [`io`]: CSV input/output, run configuration files, result writers.
//!
//! All randomness flows through explicitly seeded ChaCha streams; every
//! pipeline is deterministic given its seed and independent of thread count.

pub mod bench;
pub mod datagen;
pub mod error;
pub mod estimator;
pub mod glm;
pub mod io;
pub mod linalg;
pub mod rng;
pub mod sampling;

pub use bench::{
    qq_statistics, real_data_eval, run_mse_experiment, run_mse_experiment_fixed, run_timing,
    ExperimentResult, ExperimentSpec, Method, MseCell, QqReport, RealDataConfig, RealDataReport,
    RealDataRow, ReplicationRecord, TimingRow,
};
pub use datagen::{default_beta0, gen_design, gen_responses, gen_scenario, DesignKind, ScenarioSpec};
pub use error::{Error, Result};
pub use estimator::{
    a_criterion, asymptotic_variance, generic_sampling_estimate, linear_fast_path, osumc_estimate,
    plug_in_information, OsumcResult, PhaseTimings,
};
pub use glm::{
    full_mle, solve_weighted_score, weighted_information, weighted_score, Cumulant, Dataset,
    Family, FitResult, ResponseStore,
};
pub use io::{
    export_csv, fmt17, hash_of, load_csv, output_header, parse_run_config, read_records_csv,
    write_cells_csv, write_long_csv, write_qq_csv, write_real_data_csv, write_records_csv,
    write_timing_csv, write_weights_csv, CsvSchema, FeatureColumns, LoadedCsv, RunConfig,
};
pub use rng::StreamRng;
pub use sampling::{
    leverage_weights, oracle_optimal_weights, osmac_mmse_weights, osumc_weights, pilot_fit,
    sample_with_replacement, slev_from_leverage, slev_weights, uniform_weights, AliasTable,
    PilotFit, SamplingWeights,
};
