//! Monte Carlo replication harness.
//!
//! [`run_mse_experiment`] runs a grid of sampling methods and subsample sizes
//! over independently generated replications of a scenario, recording one row
//! per `(method, r, replication)` cell: the squared estimation error, wall
//! time, measurement count, convergence flag, and the estimate itself.
//! [`run_mse_experiment_fixed`] benchmarks the same grid against one fixed
//! dataset (fresh sampling randomness per replication, full-data fit as the
//! error reference). Every cell draws from its own seeded stream, so results
//! are bit-identical across runs and thread counts (wall times excepted).
//! Aggregate cells are recomputed from the records, never accumulated
//! separately, so stored summaries can always be audited.

mod qq;
mod real_data;

pub use qq::{qq_statistics, QqReport};
pub use real_data::{real_data_eval, RealDataConfig, RealDataReport, RealDataRow};

use std::time::Instant;

use nalgebra::DVector;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::datagen::{gen_scenario, ScenarioSpec};
use crate::error::{Error, Result};
use crate::estimator::{
    generic_sampling_estimate, osumc_estimate, plug_in_information, PhaseTimings,
};
use crate::glm::{full_mle, Dataset, Family, FitResult};
use crate::rng::{method_lane, stream_rng};
use crate::sampling::{
    leverage_weights, oracle_optimal_weights, osmac_mmse_weights, pilot_fit, slev_from_leverage,
    uniform_weights, SamplingWeights,
};

/// Subsampling strategies the harness can benchmark.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    /// Two-stage optimal subsampling (pilot plus A-optimal weights).
    Osumc,
    /// A-optimal weights computed at the true coefficients.
    OracleOsumc,
    /// mMSE subsampling for logistic regression; reads every response.
    Osmac,
    /// Uniform subsampling.
    Uniform,
    /// Leverage-score subsampling.
    Leverage,
    /// Shrinked leverage-score subsampling.
    Slev,
    /// Full-data maximum likelihood (measures everything).
    FullMle,
}

/// All methods in lane order. The position of a method here fixes its random
/// stream, so appending is safe but reordering changes every seed.
pub const ALL_METHODS: [Method; 7] = [
    Method::Osumc,
    Method::OracleOsumc,
    Method::Osmac,
    Method::Uniform,
    Method::Leverage,
    Method::Slev,
    Method::FullMle,
];

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Osumc => "osumc",
            Method::OracleOsumc => "oracle-osumc",
            Method::Osmac => "osmac",
            Method::Uniform => "uniform",
            Method::Leverage => "leverage",
            Method::Slev => "slev",
            Method::FullMle => "full-mle",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        ALL_METHODS
            .into_iter()
            .find(|m| m.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::InvalidValue {
                key: "method".into(),
                message: format!(
                    "unknown method '{s}' (expected one of {})",
                    ALL_METHODS.map(|m| m.name()).join(", ")
                ),
            })
    }

    /// Stable index used to derive the method's random-stream lane.
    pub fn lane_index(self) -> usize {
        ALL_METHODS
            .iter()
            .position(|m| *m == self)
            .expect("every method appears in ALL_METHODS")
    }

    /// Whether the strategy can run without reading responses outside its
    /// own subsample draws.
    pub fn respects_measurement_constraint(self) -> bool {
        !matches!(self, Method::Osmac | Method::FullMle)
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Full description of a Monte Carlo experiment.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub scenario: ScenarioSpec,
    pub methods: Vec<Method>,
    /// Ascending grid of second-stage subsample sizes.
    pub r_values: Vec<usize>,
    /// Pilot size for the two-stage methods.
    pub r0: usize,
    pub replications: usize,
    pub tol: f64,
    pub max_iter: usize,
    /// Mixing constant for the shrinkage-leverage strategy.
    pub slev_alpha: f64,
    /// Mix every sampling distribution toward uniform by this amount.
    pub weight_floor: f64,
    /// Worker threads for the replication loop; `None` uses the global pool.
    /// Results are identical for every setting.
    pub parallelism: Option<usize>,
    /// Run every method against a measurement-gated response store and
    /// account for distinct measured rows. Methods that need full responses
    /// are rejected upfront in this mode.
    pub gated: bool,
}

impl ExperimentSpec {
    pub fn new(scenario: ScenarioSpec, methods: Vec<Method>, r_values: Vec<usize>) -> Self {
        ExperimentSpec {
            scenario,
            methods,
            r_values,
            r0: 200,
            replications: 100,
            tol: 1e-8,
            max_iter: 50,
            slev_alpha: 0.9,
            weight_floor: 0.0,
            parallelism: None,
            gated: false,
        }
    }

    /// Check the grid for internal consistency and method feasibility.
    pub fn validate(&self) -> Result<()> {
        self.scenario.validate()?;
        if self.methods.is_empty() {
            return Err(Error::InvalidValue {
                key: "methods".into(),
                message: "need at least one method".into(),
            });
        }
        if self.r_values.is_empty() || self.r_values.contains(&0) {
            return Err(Error::InvalidValue {
                key: "r_values".into(),
                message: "need at least one positive subsample size".into(),
            });
        }
        if !self.r_values.windows(2).all(|w| w[0] < w[1]) {
            return Err(Error::InvalidValue {
                key: "r_values".into(),
                message: "subsample sizes must be strictly ascending".into(),
            });
        }
        if self.r_values.len() > 64 {
            return Err(Error::InvalidValue {
                key: "r_values".into(),
                message: "at most 64 subsample sizes per experiment".into(),
            });
        }
        if self.replications == 0 {
            return Err(Error::InvalidValue {
                key: "replications".into(),
                message: "need at least one replication".into(),
            });
        }
        if self.gated {
            if let Some(m) = self
                .methods
                .iter()
                .find(|m| !m.respects_measurement_constraint() && **m != Method::FullMle)
            {
                return Err(Error::InfeasibleMethod {
                    method: m.name().into(),
                    reason: "requires every response, which a measurement-gated store forbids"
                        .into(),
                });
            }
        }
        if self.methods.contains(&Method::Osmac) && self.scenario.family != Family::Logistic {
            return Err(Error::InfeasibleMethod {
                method: "osmac".into(),
                reason: "the mMSE benchmark is defined for logistic regression only".into(),
            });
        }
        Ok(())
    }
}

/// One `(method, r, replication)` outcome.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ReplicationRecord {
    pub method: Method,
    pub r: usize,
    pub replication: usize,
    /// Base seed of the experiment the record belongs to.
    pub seed: u64,
    /// Squared estimation error of this replication, NaN when not converged.
    pub mse: f64,
    pub time_ms: f64,
    pub responses_measured: usize,
    pub converged: bool,
    pub beta: Vec<f64>,
}

/// Aggregated empirical MSE for one `(method, r)` cell.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MseCell {
    pub method: Method,
    pub r: usize,
    /// Mean squared error over converged replications.
    pub mse: f64,
    /// Standard error of that mean.
    pub std_error: f64,
    pub converged: usize,
    pub failed: usize,
    pub mean_time_ms: f64,
    pub mean_responses: f64,
}

/// Records plus aggregates for a full experiment.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub spec: ExperimentSpec,
    pub records: Vec<ReplicationRecord>,
    pub cells: Vec<MseCell>,
}

impl ExperimentResult {
    /// Recompute the aggregate cells from raw records. The harness itself
    /// uses this, so stored aggregates can always be audited against the
    /// records they summarize.
    pub fn recompute_cells(records: &[ReplicationRecord]) -> Vec<MseCell> {
        let mut keys: Vec<(Method, usize)> = records.iter().map(|r| (r.method, r.r)).collect();
        keys.sort_by_key(|(m, r)| (m.lane_index(), *r));
        keys.dedup();
        keys.into_iter()
            .map(|(method, r)| {
                let rows: Vec<&ReplicationRecord> = records
                    .iter()
                    .filter(|rec| rec.method == method && rec.r == r)
                    .collect();
                let good: Vec<f64> = rows
                    .iter()
                    .filter(|rec| rec.converged)
                    .map(|rec| rec.mse)
                    .collect();
                let k = good.len();
                let mse = if k > 0 {
                    good.iter().sum::<f64>() / k as f64
                } else {
                    f64::NAN
                };
                let std_error = if k > 1 {
                    let var = good.iter().map(|v| (v - mse).powi(2)).sum::<f64>()
                        / (k as f64 - 1.0);
                    (var / k as f64).sqrt()
                } else {
                    f64::NAN
                };
                MseCell {
                    method,
                    r,
                    mse,
                    std_error,
                    converged: k,
                    failed: rows.len() - k,
                    mean_time_ms: rows.iter().map(|rec| rec.time_ms).sum::<f64>()
                        / rows.len() as f64,
                    mean_responses: rows.iter().map(|rec| rec.responses_measured).sum::<usize>()
                        as f64
                        / rows.len() as f64,
                }
            })
            .collect()
    }
}

/// Per-replication cache of sampling distributions that do not depend on
/// `(method, r)`. All entries are response-free constructions.
struct WeightCache {
    leverage: Option<SamplingWeights>,
    oracle: Option<SamplingWeights>,
    uniform: Option<SamplingWeights>,
}

impl WeightCache {
    fn build(
        methods: &[Method],
        family: Family,
        data: &Dataset,
        beta_ref: &DVector<f64>,
    ) -> Result<Self> {
        let needs_leverage = methods
            .iter()
            .any(|m| matches!(m, Method::Leverage | Method::Slev));
        let leverage = if needs_leverage {
            Some(leverage_weights(data.x())?)
        } else {
            None
        };
        let oracle = if methods.contains(&Method::OracleOsumc) {
            let phi = plug_in_information(family, data.x(), beta_ref)?;
            Some(oracle_optimal_weights(family, data.x(), beta_ref, &phi)?)
        } else {
            None
        };
        let uniform = if methods.contains(&Method::Uniform) {
            Some(uniform_weights(data.n())?)
        } else {
            None
        };
        Ok(WeightCache {
            leverage,
            oracle,
            uniform,
        })
    }

    fn view(&self) -> WeightCacheView<'_> {
        WeightCacheView {
            leverage: self.leverage.as_ref(),
            oracle: self.oracle.as_ref(),
            uniform: self.uniform.as_ref(),
        }
    }
}

/// Borrowed view of the per-replication cache handed to [`run_cell`].
pub(crate) struct WeightCacheView<'a> {
    pub leverage: Option<&'a SamplingWeights>,
    pub oracle: Option<&'a SamplingWeights>,
    pub uniform: Option<&'a SamplingWeights>,
}

/// Outcome of one benchmark cell.
pub(crate) struct CellOutcome {
    pub fit: FitResult,
    /// Phase split, available for the two-stage pipeline.
    pub phases: Option<PhaseTimings>,
}

fn missing_cache(which: &str) -> Error {
    Error::InvalidValue {
        key: which.into(),
        message: format!("{which} weights were not precomputed for this replication"),
    }
}

/// Run one `(method, r)` cell against `view`, consuming the cell's own
/// random stream. Shared between the synthetic harness, the fixed-data
/// harness, the timing table, and the real-data evaluator.
#[allow(clippy::too_many_arguments)]
pub(crate) fn run_cell<R: rand::Rng + ?Sized>(
    family: Family,
    view: &Dataset,
    method: Method,
    cache: &WeightCacheView<'_>,
    r0: usize,
    r: usize,
    tol: f64,
    max_iter: usize,
    slev_alpha: f64,
    weight_floor: f64,
    rng: &mut R,
) -> Result<CellOutcome> {
    let generic = |w: &SamplingWeights, rng: &mut R| -> Result<CellOutcome> {
        let res = generic_sampling_estimate(family, view, w, r, tol, max_iter, rng)?;
        Ok(CellOutcome {
            fit: res.fit,
            phases: Some(res.timings),
        })
    };
    match method {
        Method::Osumc => {
            let res = osumc_estimate(family, view, r0, r, tol, max_iter, weight_floor, rng)?;
            Ok(CellOutcome {
                fit: res.fit,
                phases: Some(res.timings),
            })
        }
        Method::OracleOsumc => {
            let w = cache.oracle.ok_or_else(|| missing_cache("oracle"))?;
            generic(&w.clone().with_floor(weight_floor)?, rng)
        }
        Method::Uniform => {
            let w = cache.uniform.ok_or_else(|| missing_cache("uniform"))?;
            generic(w, rng)
        }
        Method::Leverage => {
            let w = cache.leverage.ok_or_else(|| missing_cache("leverage"))?;
            generic(&w.clone().with_floor(weight_floor)?, rng)
        }
        Method::Slev => {
            let lev = cache.leverage.ok_or_else(|| missing_cache("leverage"))?;
            let w = slev_from_leverage(lev, slev_alpha)?.with_floor(weight_floor)?;
            generic(&w, rng)
        }
        Method::Osmac => {
            let pilot = pilot_fit(family, view, r0, tol, max_iter, rng)?;
            let y = view.full_responses()?;
            let w = osmac_mmse_weights(view.x(), &y, &pilot.beta_tilde)?
                .with_floor(weight_floor)?;
            let mut out = generic(&w, rng)?;
            // The pilot and the weight construction read responses too.
            out.fit.responses_measured = view.n();
            Ok(out)
        }
        Method::FullMle => {
            let mut fit = full_mle(family, view, tol, max_iter)?;
            fit.responses_measured = view.n();
            Ok(CellOutcome { fit, phases: None })
        }
    }
}

/// Run the Monte Carlo grid against freshly generated data per replication.
pub fn run_mse_experiment(spec: &ExperimentSpec) -> Result<ExperimentResult> {
    spec.validate()?;
    in_pool(spec.parallelism, || {
        run_grid(spec, |rep| gen_scenario(&spec.scenario, rep))
    })
}

/// Run the Monte Carlo grid against one fixed dataset; only the sampling
/// randomness varies across replications. The error reference is the
/// full-data fit, mirroring how real datasets without a known truth are
/// benchmarked. The scenario inside `spec` contributes its family and seed;
/// its design/size fields are ignored.
pub fn run_mse_experiment_fixed(spec: &ExperimentSpec, data: &Dataset) -> Result<ExperimentResult> {
    spec.validate()?;
    let family = spec.scenario.family;
    let reference = full_mle(family, data, spec.tol, spec.max_iter)?.require_converged()?;
    let beta_ref = reference.beta;
    in_pool(spec.parallelism, || {
        run_grid(spec, |_rep| Ok((data.clone(), beta_ref.clone())))
    })
}

fn in_pool<T>(parallelism: Option<usize>, body: impl FnOnce() -> Result<T> + Send) -> Result<T>
where
    T: Send,
{
    match parallelism {
        None => body(),
        Some(k) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(k.max(1))
                .build()
                .map_err(|e| Error::InvalidValue {
                    key: "parallelism".into(),
                    message: format!("cannot build a {k}-thread pool: {e}"),
                })?;
            pool.install(body)
        }
    }
}

fn run_grid(
    spec: &ExperimentSpec,
    provide: impl Fn(usize) -> Result<(Dataset, DVector<f64>)> + Sync,
) -> Result<ExperimentResult> {
    let family = spec.scenario.family;
    let seed = spec.scenario.seed;

    let mut records: Vec<ReplicationRecord> = (0..spec.replications)
        .into_par_iter()
        .map(|rep| -> Result<Vec<ReplicationRecord>> {
            let (data, beta_ref) = provide(rep)?;
            let cache = WeightCache::build(&spec.methods, family, &data, &beta_ref)?;
            let cache_view = cache.view();
            let mut out = Vec::with_capacity(spec.methods.len() * spec.r_values.len());
            for &method in &spec.methods {
                for (r_idx, &r) in spec.r_values.iter().enumerate() {
                    let mut rng =
                        stream_rng(seed, rep, method_lane(method.lane_index(), r_idx));
                    let gated_view;
                    let view = if spec.gated {
                        gated_view = data.fork_oracle();
                        &gated_view
                    } else {
                        &data
                    };
                    let clock = Instant::now();
                    let outcome = run_cell(
                        family,
                        view,
                        method,
                        &cache_view,
                        spec.r0,
                        r,
                        spec.tol,
                        spec.max_iter,
                        spec.slev_alpha,
                        spec.weight_floor,
                        &mut rng,
                    );
                    let time_ms = clock.elapsed().as_secs_f64() * 1e3;
                    let record = match outcome {
                        Ok(cell) => ReplicationRecord {
                            method,
                            r,
                            replication: rep,
                            seed,
                            mse: if cell.fit.converged {
                                (&cell.fit.beta - &beta_ref).norm_squared()
                            } else {
                                f64::NAN
                            },
                            time_ms,
                            responses_measured: if spec.gated {
                                view.responses_measured()
                            } else {
                                cell.fit.responses_measured
                            },
                            converged: cell.fit.converged,
                            beta: cell.fit.beta.iter().copied().collect(),
                        },
                        Err(err) => {
                            log::warn!(
                                "{method} failed at r = {r}, replication {rep}: {err}"
                            );
                            ReplicationRecord {
                                method,
                                r,
                                replication: rep,
                                seed,
                                mse: f64::NAN,
                                time_ms,
                                responses_measured: if spec.gated {
                                    view.responses_measured()
                                } else {
                                    0
                                },
                                converged: false,
                                beta: vec![f64::NAN; data.p()],
                            }
                        }
                    };
                    out.push(record);
                }
            }
            Ok(out)
        })
        .collect::<Result<Vec<Vec<ReplicationRecord>>>>()?
        .into_iter()
        .flatten()
        .collect();

    records.sort_by_key(|rec| (rec.method.lane_index(), rec.r, rec.replication));
    let cells = ExperimentResult::recompute_cells(&records);
    Ok(ExperimentResult {
        spec: spec.clone(),
        records,
        cells,
    })
}

/// Median wall-clock per `(method, r)` cell, with the two-stage pipeline's
/// phase split. Data generation is excluded from every number. Strategies
/// whose weights the harness precomputes once per replication (uniform,
/// leverage, shrinkage leverage, oracle) are timed from sampling onward.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TimingRow {
    pub method: Method,
    pub r: usize,
    pub runs: usize,
    pub median_total_ms: f64,
    pub median_pilot_ms: f64,
    pub median_weights_ms: f64,
    pub median_sample_ms: f64,
    pub median_solve_ms: f64,
}

/// One timed cell visit: method, subsample size, total milliseconds, and the
/// per-phase breakdown when the pipeline reports one.
type TimingSample = (Method, usize, f64, Option<PhaseTimings>);

/// Time every cell of the grid over the configured replications.
pub fn run_timing(spec: &ExperimentSpec) -> Result<Vec<TimingRow>> {
    spec.validate()?;
    let family = spec.scenario.family;
    let seed = spec.scenario.seed;

    let samples: Vec<TimingSample> =
        in_pool(spec.parallelism, || {
            (0..spec.replications)
                .into_par_iter()
                .map(|rep| -> Result<Vec<TimingSample>> {
                    let (data, beta_ref) = gen_scenario(&spec.scenario, rep)?;
                    let cache = WeightCache::build(&spec.methods, family, &data, &beta_ref)?;
                    let cache_view = cache.view();
                    let mut out = Vec::new();
                    for &method in &spec.methods {
                        for (r_idx, &r) in spec.r_values.iter().enumerate() {
                            let mut rng =
                                stream_rng(seed, rep, method_lane(method.lane_index(), r_idx));
                            let clock = Instant::now();
                            let outcome = run_cell(
                                family,
                                &data,
                                method,
                                &cache_view,
                                spec.r0,
                                r,
                                spec.tol,
                                spec.max_iter,
                                spec.slev_alpha,
                                spec.weight_floor,
                                &mut rng,
                            )?;
                            let total = clock.elapsed().as_secs_f64() * 1e3;
                            out.push((method, r, total, outcome.phases));
                        }
                    }
                    Ok(out)
                })
                .collect::<Result<Vec<_>>>()
                .map(|v| v.into_iter().flatten().collect())
        })?;

    let mut rows = Vec::new();
    for &method in &spec.methods {
        for &r in &spec.r_values {
            let cell: Vec<&(Method, usize, f64, Option<PhaseTimings>)> = samples
                .iter()
                .filter(|(m, rr, _, _)| *m == method && *rr == r)
                .collect();
            let mut totals: Vec<f64> = cell.iter().map(|(_, _, t, _)| *t).collect();
            let phase = |pick: fn(&PhaseTimings) -> f64| -> f64 {
                let mut v: Vec<f64> = cell
                    .iter()
                    .filter_map(|(_, _, _, p)| p.as_ref().map(|p| pick(p) * 1e3))
                    .collect();
                median_in_place(&mut v)
            };
            rows.push(TimingRow {
                method,
                r,
                runs: totals.len(),
                median_total_ms: median_in_place(&mut totals),
                median_pilot_ms: phase(|p| p.pilot_s),
                median_weights_ms: phase(|p| p.weights_s),
                median_sample_ms: phase(|p| p.sample_s),
                median_solve_ms: phase(|p| p.solve_s),
            });
        }
    }
    Ok(rows)
}

fn median_in_place(values: &mut [f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    values.sort_by(|a, b| a.partial_cmp(b).expect("wall times are finite"));
    let k = values.len();
    if k % 2 == 1 {
        values[k / 2]
    } else {
        0.5 * (values[k / 2 - 1] + values[k / 2])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::DesignKind;

    fn small_spec() -> ExperimentSpec {
        let scenario = ScenarioSpec::new(DesignKind::MzNormal, 800, 3, 4242);
        let mut spec = ExperimentSpec::new(
            scenario,
            vec![Method::Osumc, Method::Uniform],
            vec![100, 200],
        );
        spec.r0 = 50;
        spec.replications = 6;
        spec
    }

    #[test]
    fn records_are_reproducible_modulo_wall_time() {
        let spec = small_spec();
        let a = run_mse_experiment(&spec).unwrap();
        let mut serial = small_spec();
        serial.parallelism = Some(1);
        let b = run_mse_experiment(&serial).unwrap();
        assert_eq!(a.records.len(), b.records.len());
        assert_eq!(a.records.len(), 2 * 2 * 6);
        for (x, y) in a.records.iter().zip(&b.records) {
            assert_eq!(x.method, y.method);
            assert_eq!(x.r, y.r);
            assert_eq!(x.replication, y.replication);
            assert_eq!(x.converged, y.converged);
            assert_eq!(x.responses_measured, y.responses_measured);
            assert_eq!(x.beta, y.beta, "estimates must be bit-identical");
            assert!(x.mse == y.mse || (x.mse.is_nan() && y.mse.is_nan()));
        }
    }

    #[test]
    fn cells_are_recomputable_from_records() {
        let result = run_mse_experiment(&small_spec()).unwrap();
        let again = ExperimentResult::recompute_cells(&result.records);
        assert_eq!(result.cells.len(), again.len());
        for (a, b) in result.cells.iter().zip(&again) {
            assert_eq!(a.method, b.method);
            assert_eq!(a.r, b.r);
            assert_eq!(a.converged, b.converged);
            assert!((a.mse - b.mse).abs() < 1e-15);
        }
        for cell in &result.cells {
            assert!(cell.converged > 0, "{} at r = {} never converged", cell.method, cell.r);
            assert!(cell.mse.is_finite());
        }
    }

    #[test]
    fn gated_runs_stay_within_the_measurement_budget() {
        let mut spec = small_spec();
        spec.methods = vec![Method::Osumc, Method::Uniform, Method::FullMle];
        spec.gated = true;
        spec.replications = 3;
        let result = run_mse_experiment(&spec).unwrap();
        for rec in &result.records {
            match rec.method {
                Method::Uniform => assert!(rec.responses_measured <= rec.r),
                Method::Osumc => assert!(rec.responses_measured <= spec.r0 + rec.r),
                Method::FullMle => assert_eq!(rec.responses_measured, 800),
                _ => unreachable!(),
            }
        }
    }

    #[test]
    fn full_response_methods_are_rejected_under_gating() {
        let mut spec = small_spec();
        spec.methods = vec![Method::Osmac];
        spec.gated = true;
        let err = run_mse_experiment(&spec).unwrap_err();
        assert!(matches!(err, Error::InfeasibleMethod { .. }), "{err:?}");
    }

    #[test]
    fn osmac_requires_the_logistic_family() {
        let scenario = ScenarioSpec::new(DesignKind::Ga, 500, 12, 7);
        let spec = ExperimentSpec::new(scenario, vec![Method::Osmac], vec![100]);
        let err = run_mse_experiment(&spec).unwrap_err();
        assert!(matches!(err, Error::InfeasibleMethod { .. }), "{err:?}");
    }

    #[test]
    fn osmac_runs_on_ungated_logistic_data() {
        let mut spec = small_spec();
        spec.methods = vec![Method::Osmac, Method::OracleOsumc, Method::Slev];
        spec.replications = 3;
        spec.r_values = vec![150];
        let result = run_mse_experiment(&spec).unwrap();
        assert_eq!(result.records.len(), 9);
        for cell in &result.cells {
            assert!(cell.converged > 0, "{} never converged", cell.method);
        }
        // The mMSE strategy reads the whole response vector.
        for rec in result.records.iter().filter(|r| r.method == Method::Osmac) {
            assert_eq!(rec.responses_measured, 800);
        }
    }

    #[test]
    fn descending_r_grid_is_rejected() {
        let mut spec = small_spec();
        spec.r_values = vec![200, 100];
        assert!(run_mse_experiment(&spec).is_err());
    }

    #[test]
    fn fixed_dataset_grid_scores_against_the_full_fit() {
        let (data, _) = gen_scenario(&small_spec().scenario, 0).unwrap();
        let mut spec = small_spec();
        spec.methods = vec![Method::FullMle, Method::Uniform];
        spec.replications = 4;
        spec.r_values = vec![120];
        let result = run_mse_experiment_fixed(&spec, &data).unwrap();
        // Scoring against the full-data fit makes its own error exactly zero,
        // and constant across replications.
        for rec in result.records.iter().filter(|r| r.method == Method::FullMle) {
            assert_eq!(rec.mse, 0.0);
            assert!(rec.converged);
        }
        let uniform_cell = result
            .cells
            .iter()
            .find(|c| c.method == Method::Uniform)
            .unwrap();
        assert!(uniform_cell.mse > 0.0);
    }

    #[test]
    fn timing_rows_cover_the_grid_with_phase_splits() {
        let mut spec = small_spec();
        spec.methods = vec![Method::Osumc, Method::FullMle];
        spec.replications = 3;
        let rows = run_timing(&spec).unwrap();
        assert_eq!(rows.len(), 4);
        for row in &rows {
            assert_eq!(row.runs, 3);
            assert!(row.median_total_ms >= 0.0);
            match row.method {
                Method::Osumc => {
                    // Phases must roughly account for the total.
                    let parts = row.median_pilot_ms
                        + row.median_weights_ms
                        + row.median_sample_ms
                        + row.median_solve_ms;
                    assert!(parts <= row.median_total_ms * 1.5 + 1.0);
                }
                Method::FullMle => {
                    assert_eq!(row.median_pilot_ms, 0.0);
                    assert_eq!(row.median_weights_ms, 0.0);
                }
                _ => unreachable!(),
            }
        }
    }

    #[test]
    fn method_names_round_trip() {
        for m in ALL_METHODS {
            assert_eq!(Method::parse(m.name()).unwrap(), m);
        }
        assert!(Method::parse("bogus").is_err());
        assert_eq!(Method::Osumc.lane_index(), 0);
        assert!(Method::Uniform.respects_measurement_constraint());
        assert!(!Method::Osmac.respects_measurement_constraint());
    }
}
