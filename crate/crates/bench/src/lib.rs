//! Shared fixtures for the criterion benches: deterministic mid-sized
//! datasets plus the precomputed pilot/weight/subsample stages, so each bench
//! times exactly one pipeline phase.

use nalgebra::{DMatrix, DVector};
use rand_chacha::rand_core::SeedableRng;

use osumc_core::linalg::gather_rows;
use osumc_core::{
    gen_scenario, osumc_weights, pilot_fit, sample_with_replacement, DesignKind, Family, PilotFit,
    SamplingWeights, ScenarioSpec, StreamRng,
};

/// A logistic benchmark problem with its pilot stage already run.
pub struct LogisticCase {
    pub x: DMatrix<f64>,
    pub pilot: PilotFit,
    pub weights: SamplingWeights,
    /// Subsample of `r` rows drawn from `weights`.
    pub x_sub: DMatrix<f64>,
    pub y_sub: DVector<f64>,
    pub pi_sub: DVector<f64>,
    pub n: usize,
    pub warm_start: DVector<f64>,
}

/// Correlated-normal logistic data (n = 20000, p = 20) with an `r0 = 500`
/// pilot and an `r = 2000` second-stage draw.
pub fn logistic_case() -> LogisticCase {
    let scenario = ScenarioSpec::new(DesignKind::MzNormal, 20_000, 20, 4242);
    let (dataset, _beta0) = gen_scenario(&scenario, 0).expect("scenario generates");
    let mut rng = StreamRng::seed_from_u64(77);
    let pilot = pilot_fit(Family::Logistic, &dataset, 500, 1e-8, 50, &mut rng)
        .expect("pilot converges on this fixture");
    let weights =
        osumc_weights(Family::Logistic, dataset.x(), &pilot).expect("weights are well defined");
    let indices = sample_with_replacement(&weights, 2000, &mut rng).expect("draw succeeds");
    let y_sub = dataset.measure_many(&indices).expect("responses available");
    let x_sub = gather_rows(dataset.x(), &indices);
    let pi_sub = DVector::from_fn(indices.len(), |k, _| weights.pi()[indices[k]]);
    let warm_start = pilot.beta_tilde.clone();
    LogisticCase {
        x: dataset.x().clone(),
        pilot,
        weights,
        x_sub,
        y_sub,
        pi_sub,
        n: dataset.n(),
        warm_start,
    }
}

/// Scaled-anisotropic linear data (n = 20000, p = 50), returned as the raw
/// dataset so end-to-end pipeline benches can draw their own randomness.
pub fn linear_dataset() -> osumc_core::glm::Dataset {
    let scenario = ScenarioSpec::new(DesignKind::Ga, 20_000, 50, 4343);
    let (dataset, _beta0) = gen_scenario(&scenario, 0).expect("scenario generates");
    dataset
}

/// A fixed, already normalized sampling distribution of the given length.
pub fn skewed_distribution(n: usize) -> DVector<f64> {
    let raw = DVector::from_fn(n, |j, _| 1.0 + ((j * 2654435761) % 1000) as f64 / 100.0);
    &raw / raw.sum()
}
