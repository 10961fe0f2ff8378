//! Held-out evaluation of subsampling methods on a fixed dataset.
//!
//! Without a known truth, the full-data fit on a training split serves as
//! the reference. Every replication draws a fresh random train/test split,
//! fits the reference on its training rows, runs each method there, and
//! scores it by the relative squared error against the reference
//! coefficients and by the ratio of held-out prediction error to the
//! reference's. Cells report medians over replications. The full-data
//! method scores 0 and 1 by construction, pinning the scale of both columns.

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{run_cell, Method, WeightCache};
use crate::error::{Error, Result};
use crate::glm::{full_mle, Dataset, Family};
use crate::linalg::gather_rows;
use crate::rng::{method_lane, stream_rng, LANE_DATA};

/// Evaluation summary for one `(method, r)` cell.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RealDataRow {
    pub method: Method,
    pub r: usize,
    /// Median of `||beta_hat - beta_ref||^2 / ||beta_ref||^2` over converged
    /// replications.
    pub median_rel_mse: f64,
    /// Median ratio of held-out squared prediction error (on the mean scale)
    /// to the reference fit's.
    pub median_pred_ratio: f64,
    pub converged: usize,
    pub failed: usize,
}

/// Full report of a held-out evaluation.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RealDataReport {
    pub family: Family,
    pub n_train: usize,
    pub n_test: usize,
    pub replications: usize,
    /// Reference coefficients of the first replication's split, for display.
    pub reference_beta: DVector<f64>,
    pub rows: Vec<RealDataRow>,
}

/// Parameters of a held-out evaluation; see [`real_data_eval`].
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RealDataConfig {
    pub methods: Vec<Method>,
    pub r_values: Vec<usize>,
    pub r0: usize,
    pub replications: usize,
    /// Fraction of rows held out for prediction scoring, in (0, 1).
    pub test_fraction: f64,
    pub seed: u64,
    pub tol: f64,
    pub max_iter: usize,
    pub slev_alpha: f64,
    /// Mix every sampling distribution toward uniform by this amount.
    pub weight_floor: f64,
}

impl Default for RealDataConfig {
    fn default() -> Self {
        RealDataConfig {
            methods: vec![Method::Osumc, Method::Uniform, Method::FullMle],
            r_values: vec![500, 1000],
            r0: 200,
            replications: 100,
            test_fraction: 0.2,
            seed: 1,
            tol: 1e-8,
            max_iter: 50,
            slev_alpha: 0.9,
            weight_floor: 0.0,
        }
    }
}

/// One replication's contribution to every `(method, r)` cell: `Some`
/// metrics when the cell converged, `None` when it failed.
type RepMetrics = Vec<Option<(f64, f64)>>;

/// Score every `(method, r)` cell over replications, each against its own
/// random train/test split and full-data training reference.
pub fn real_data_eval(
    family: Family,
    dataset: &Dataset,
    config: &RealDataConfig,
) -> Result<RealDataReport> {
    if config.methods.is_empty() || config.r_values.is_empty() || config.replications == 0 {
        return Err(Error::InvalidValue {
            key: "config".into(),
            message: "need at least one method, one subsample size, and one replication".into(),
        });
    }
    if !(config.test_fraction > 0.0 && config.test_fraction < 1.0) {
        return Err(Error::InvalidValue {
            key: "test_fraction".into(),
            message: format!("test fraction {} must lie in (0, 1)", config.test_fraction),
        });
    }
    if config.methods.contains(&Method::Osmac) && family != Family::Logistic {
        return Err(Error::InfeasibleMethod {
            method: "osmac".into(),
            reason: "the mMSE benchmark is defined for logistic regression only".into(),
        });
    }
    let n = dataset.n();
    let p = dataset.p();
    let y_all = dataset.full_responses()?;
    let n_test = ((n as f64 * config.test_fraction).round() as usize).clamp(1, n - 1);
    let n_train = n - n_test;
    if n_train < p + 1 {
        return Err(Error::InvalidValue {
            key: "test_fraction".into(),
            message: format!("training split of {n_train} rows cannot identify {p} coefficients"),
        });
    }

    let cell_count = config.methods.len() * config.r_values.len();
    let per_rep: Vec<(DVector<f64>, RepMetrics)> = (0..config.replications)
        .into_par_iter()
        .map(|rep| -> Result<(DVector<f64>, RepMetrics)> {
            // Fresh split per replication.
            let mut order: Vec<usize> = (0..n).collect();
            let mut split_rng = stream_rng(config.seed, rep, LANE_DATA);
            order.shuffle(&mut split_rng);
            let (train_idx, test_idx) = order.split_at(n_train);
            let x_train = gather_rows(dataset.x(), train_idx);
            let y_train = DVector::from_fn(n_train, |k, _| y_all[train_idx[k]]);
            let x_test = gather_rows(dataset.x(), test_idx);
            let y_test = DVector::from_fn(n_test, |k, _| y_all[test_idx[k]]);
            let train = Dataset::fully_observed(x_train, y_train)?;

            let reference =
                full_mle(family, &train, config.tol, config.max_iter)?.require_converged()?;
            let beta_ref = reference.beta;
            let ref_norm_sq = beta_ref.norm_squared();
            if ref_norm_sq == 0.0 {
                return Err(Error::DegenerateSample(
                    "reference fit is identically zero; relative errors are undefined".into(),
                ));
            }
            let sse_ref = prediction_sse(family, &x_test, &y_test, &beta_ref)?;

            let cache = WeightCache::build(&config.methods, family, &train, &beta_ref)?;
            let cache_view = cache.view();

            let mut metrics: RepMetrics = Vec::with_capacity(cell_count);
            for &method in &config.methods {
                for (r_idx, &r) in config.r_values.iter().enumerate() {
                    let mut rng =
                        stream_rng(config.seed, rep, method_lane(method.lane_index(), r_idx));
                    let outcome = run_cell(
                        family,
                        &train,
                        method,
                        &cache_view,
                        config.r0,
                        r,
                        config.tol,
                        config.max_iter,
                        config.slev_alpha,
                        config.weight_floor,
                        &mut rng,
                    );
                    let entry = match outcome {
                        Ok(cell) if cell.fit.converged => {
                            let rel = (&cell.fit.beta - &beta_ref).norm_squared() / ref_norm_sq;
                            match prediction_sse(family, &x_test, &y_test, &cell.fit.beta) {
                                Ok(sse) => {
                                    let ratio = if sse_ref > 0.0 {
                                        sse / sse_ref
                                    } else if sse == 0.0 {
                                        1.0
                                    } else {
                                        f64::INFINITY
                                    };
                                    Some((rel, ratio))
                                }
                                Err(err) => {
                                    log::warn!(
                                        "{method} prediction failed at r = {r}, \
                                         replication {rep}: {err}"
                                    );
                                    None
                                }
                            }
                        }
                        Ok(_) => None,
                        Err(err) => {
                            log::warn!("{method} failed at r = {r}, replication {rep}: {err}");
                            None
                        }
                    };
                    metrics.push(entry);
                }
            }
            Ok((beta_ref, metrics))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut rows = Vec::with_capacity(cell_count);
    for (m_idx, &method) in config.methods.iter().enumerate() {
        for (r_idx, &r) in config.r_values.iter().enumerate() {
            let cell = m_idx * config.r_values.len() + r_idx;
            let mut rel_mse = Vec::new();
            let mut pred_ratio = Vec::new();
            let mut failed = 0usize;
            for (_, metrics) in &per_rep {
                match metrics[cell] {
                    Some((rel, ratio)) => {
                        rel_mse.push(rel);
                        pred_ratio.push(ratio);
                    }
                    None => failed += 1,
                }
            }
            rows.push(RealDataRow {
                method,
                r,
                median_rel_mse: median(&mut rel_mse),
                median_pred_ratio: median(&mut pred_ratio),
                converged: config.replications - failed,
                failed,
            });
        }
    }

    Ok(RealDataReport {
        family,
        n_train,
        n_test,
        replications: config.replications,
        reference_beta: per_rep[0].0.clone(),
        rows,
    })
}

/// Squared prediction error on the response scale: the fitted means
/// `b'(x' beta)` against the observed responses.
fn prediction_sse(
    family: Family,
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    beta: &DVector<f64>,
) -> Result<f64> {
    let theta = x * beta;
    let mut sse = 0.0;
    for i in 0..x.nrows() {
        let mean = family.cumulant(theta[i])?.mean;
        sse += (mean - y[i]).powi(2);
    }
    Ok(sse)
}

fn median(values: &mut [f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    values.sort_by(|a, b| a.partial_cmp(b).expect("metrics are finite"));
    let k = values.len();
    if k % 2 == 1 {
        values[k / 2]
    } else {
        0.5 * (values[k / 2 - 1] + values[k / 2])
    }
}
