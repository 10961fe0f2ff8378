//! End-to-end subsampling pipelines and plug-in variance computations.
//!
//! [`osumc_estimate`] is the two-stage estimator: uniform pilot, A-optimal
//! weights from covariates only, a second with-replacement draw, and a
//! warm-started weighted-score solve. [`linear_fast_path`] is the
//! response-free specialization for the linear model whose pilot reads zero
//! responses. [`generic_sampling_estimate`] runs any precomputed sampling
//! distribution through the same subsample-and-solve tail, for benchmarking.

use std::time::Instant;

use nalgebra::{Cholesky, DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::glm::{solve_weighted_score, weighted_score, Dataset, Family, FitResult};
use crate::linalg::{gather_rows, numerical_rank, weighted_gram, RANK_TOL};
use crate::sampling::{
    design_only_pilot, osumc_weights, pilot_fit, sample_with_replacement, PilotFit,
    SamplingWeights,
};

/// Wall-clock seconds spent in each pipeline phase.
#[derive(Clone, Copy, Debug, Default, Serialize, Deserialize)]
pub struct PhaseTimings {
    pub pilot_s: f64,
    pub weights_s: f64,
    pub sample_s: f64,
    pub solve_s: f64,
}

impl PhaseTimings {
    pub fn total(&self) -> f64 {
        self.pilot_s + self.weights_s + self.sample_s + self.solve_s
    }
}

/// Outcome of a subsampling pipeline.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct OsumcResult {
    /// The second-stage fit. Its `responses_measured` counts the distinct
    /// rows whose response the whole pipeline consumed (pilot included).
    pub fit: FitResult,
    /// Pilot stage, when the strategy used one.
    pub pilot: Option<PilotFit>,
    /// Name of the sampling strategy that produced the subsample.
    pub strategy: String,
    /// Pilot subsample size (zero when there was no pilot).
    pub r0: usize,
    /// Second-stage subsample size.
    pub r: usize,
    /// Second-stage row indices (with multiplicity).
    pub indices: Vec<usize>,
    pub timings: PhaseTimings,
}

/// Two-stage optimal subsampling under the measurement constraint.
///
/// Stage one draws a uniform pilot of size `r0` and measures its responses.
/// The A-optimal probabilities are then computed from the design matrix and
/// the pilot fit alone — the weights phase provably reads no responses, and
/// the pipeline asserts that the dataset's measurement counter does not move
/// while weights are built. Stage two draws `r` rows with those
/// probabilities, measures them, and solves the inverse-probability-weighted
/// score equation warm-started at the pilot estimate.
///
/// `weight_floor` mixes the optimal probabilities toward uniform (see
/// [`SamplingWeights::with_floor`]); zero leaves them untouched.
// Every solver knob is an explicit parameter on purpose: the CLI and the
// bench harness both need to plumb user-configured values end to end.
#[allow(clippy::too_many_arguments)]
pub fn osumc_estimate<R: Rng + ?Sized>(
    family: Family,
    dataset: &Dataset,
    r0: usize,
    r: usize,
    tol: f64,
    max_iter: usize,
    weight_floor: f64,
    rng: &mut R,
) -> Result<OsumcResult> {
    let clock = Instant::now();
    let pilot = pilot_fit(family, dataset, r0, tol, max_iter, rng)?;
    let pilot_s = clock.elapsed().as_secs_f64();

    let clock = Instant::now();
    let measured_before = dataset.responses_measured();
    let weights = osumc_weights(family, dataset.x(), &pilot)?.with_floor(weight_floor)?;
    assert_eq!(
        dataset.responses_measured(),
        measured_before,
        "weight construction must not measure responses"
    );
    let weights_s = clock.elapsed().as_secs_f64();

    let clock = Instant::now();
    let indices = sample_with_replacement(&weights, r, rng)?;
    let sample_s = clock.elapsed().as_secs_f64();

    let clock = Instant::now();
    let y_sub = dataset.measure_many(&indices)?;
    let x_sub = gather_rows(dataset.x(), &indices);
    let pi_sub = DVector::from_fn(indices.len(), |k, _| weights.pi()[indices[k]]);
    let mut fit = solve_weighted_score(
        family,
        &x_sub,
        &y_sub,
        &pi_sub,
        dataset.n(),
        &pilot.beta_tilde,
        tol,
        max_iter,
    )?;
    let solve_s = clock.elapsed().as_secs_f64();

    fit.responses_measured = distinct_union(&pilot.indices, &indices);
    assert!(
        fit.responses_measured <= r0 + r,
        "measured {} distinct rows from draws of {r0} + {r}",
        fit.responses_measured
    );

    Ok(OsumcResult {
        fit,
        strategy: weights.strategy().to_string(),
        r0,
        r,
        indices,
        pilot: Some(pilot),
        timings: PhaseTimings {
            pilot_s,
            weights_s,
            sample_s,
            solve_s,
        },
    })
}

/// Subsample with a precomputed distribution and solve the weighted score
/// equation from a zero start. Used to benchmark non-adaptive strategies
/// (uniform, leverage, shrinkage leverage) and externally built weights.
pub fn generic_sampling_estimate<R: Rng + ?Sized>(
    family: Family,
    dataset: &Dataset,
    weights: &SamplingWeights,
    r: usize,
    tol: f64,
    max_iter: usize,
    rng: &mut R,
) -> Result<OsumcResult> {
    if weights.len() != dataset.n() {
        return Err(Error::DimensionMismatch(format!(
            "{} weights for {} rows",
            weights.len(),
            dataset.n()
        )));
    }
    let clock = Instant::now();
    let indices = sample_with_replacement(weights, r, rng)?;
    let sample_s = clock.elapsed().as_secs_f64();

    let clock = Instant::now();
    let y_sub = dataset.measure_many(&indices)?;
    let x_sub = gather_rows(dataset.x(), &indices);
    let pi_sub = DVector::from_fn(indices.len(), |k, _| weights.pi()[indices[k]]);
    let init = DVector::zeros(dataset.p());
    let mut fit = solve_weighted_score(
        family,
        &x_sub,
        &y_sub,
        &pi_sub,
        dataset.n(),
        &init,
        tol,
        max_iter,
    )?;
    let solve_s = clock.elapsed().as_secs_f64();
    fit.responses_measured = distinct_union(&indices, &[]);

    Ok(OsumcResult {
        fit,
        pilot: None,
        strategy: weights.strategy().to_string(),
        r0: 0,
        r,
        indices,
        timings: PhaseTimings {
            pilot_s: 0.0,
            weights_s: 0.0,
            sample_s,
            solve_s,
        },
    })
}

/// Linear-model specialization whose pilot never reads a response.
///
/// The pilot stage builds the design second-moment matrix from a uniform
/// index draw, so the sampling probabilities `pi_j` proportional to
/// `|| phi_tilde^{-1} x_j ||` cost zero measurements; only the `r`
/// second-stage responses are measured. The weighted least-squares solve is
/// done by rescaling the subsample rows by `1/sqrt(pi)` and factoring a thin
/// QR. Draws the same random stream as [`osumc_estimate`] with equal sizes,
/// and agrees with it on the linear family up to solver round-off.
pub fn linear_fast_path<R: Rng + ?Sized>(
    dataset: &Dataset,
    r0: usize,
    r: usize,
    tol: f64,
    weight_floor: f64,
    rng: &mut R,
) -> Result<OsumcResult> {
    let n = dataset.n();
    let p = dataset.p();

    let clock = Instant::now();
    let pilot = design_only_pilot(dataset.x(), r0, rng)?;
    let pilot_s = clock.elapsed().as_secs_f64();

    let clock = Instant::now();
    let weights =
        osumc_weights(Family::Linear, dataset.x(), &pilot)?.with_floor(weight_floor)?;
    let weights_s = clock.elapsed().as_secs_f64();

    let clock = Instant::now();
    let indices = sample_with_replacement(&weights, r, rng)?;
    let sample_s = clock.elapsed().as_secs_f64();

    let clock = Instant::now();
    let y_sub = dataset.measure_many(&indices)?;
    let x_sub = gather_rows(dataset.x(), &indices);
    let pi_sub = DVector::from_fn(indices.len(), |k, _| weights.pi()[indices[k]]);

    // Weighted least squares via row rescaling: minimizing
    // sum_k (y_k - x_k' beta)^2 / pi_k is ordinary least squares on rows
    // scaled by 1 / sqrt(pi_k).
    let mut xs = x_sub.clone();
    let mut ys = y_sub.clone();
    for k in 0..indices.len() {
        let s = 1.0 / pi_sub[k].sqrt();
        xs.row_mut(k).scale_mut(s);
        ys[k] *= s;
    }
    let qr = xs.qr();
    let rmat = qr.r();
    let lead = (0..p).map(|i| rmat[(i, i)].abs()).fold(0.0f64, f64::max);
    if lead == 0.0 || (0..p).any(|i| rmat[(i, i)].abs() <= RANK_TOL * lead) {
        return Err(Error::RankDeficient {
            rank: numerical_rank(&x_sub),
            p,
        });
    }
    let qtb = qr.q().tr_mul(&ys);
    let beta = rmat
        .solve_upper_triangular(&qtb)
        .ok_or(Error::RankDeficient {
            rank: numerical_rank(&x_sub),
            p,
        })?;
    let score = weighted_score(Family::Linear, &x_sub, &y_sub, &pi_sub, n, &beta)?;
    let final_score_norm = score.amax();
    let solve_s = clock.elapsed().as_secs_f64();

    let fit = FitResult {
        beta,
        converged: final_score_norm <= tol,
        iterations: 1,
        final_score_norm,
        covariance: None,
        responses_measured: distinct_union(&indices, &[]),
    };

    Ok(OsumcResult {
        fit,
        strategy: weights.strategy().to_string(),
        r0,
        r,
        indices,
        pilot: Some(pilot),
        timings: PhaseTimings {
            pilot_s,
            weights_s,
            sample_s,
            solve_s,
        },
    })
}

/// Plug-in asymptotic covariance of the subsampling estimator:
/// `phi^{-1} V phi^{-1}` with
/// `phi = (1/n) sum_j b''_j x_j x_j'` and
/// `V = (1/n^2) sum_j b''_j x_j x_j' (1/(r pi_j) - 1/r + 1)`.
///
/// Errors if some row has zero probability but nonzero information content,
/// or if `phi` is not positive definite.
pub fn asymptotic_variance(
    family: Family,
    x: &DMatrix<f64>,
    beta: &DVector<f64>,
    pi: &DVector<f64>,
    r: usize,
) -> Result<DMatrix<f64>> {
    let (phi, v) = variance_pieces(family, x, beta, pi, r, true)?;
    let chol = Cholesky::new(phi).ok_or(Error::SingularInformation {
        context: "full-data information matrix".into(),
    })?;
    let half = chol.solve(&v);
    Ok(chol.solve(&half.transpose()))
}

/// Trace of [`asymptotic_variance`], computed without forming the sandwich:
/// `(1/n^2) sum_j c_j || phi^{-1} x_j ||^2` with
/// `c_j = b''_j (1/(r pi_j) - 1/r + 1)`. Rows with zero probability and
/// nonzero information make the criterion infinite.
pub fn a_criterion(
    family: Family,
    x: &DMatrix<f64>,
    beta: &DVector<f64>,
    pi: &DVector<f64>,
    r: usize,
) -> Result<f64> {
    let n = x.nrows();
    validate_pi(x, pi)?;
    if r == 0 {
        return Err(Error::InvalidValue {
            key: "r".into(),
            message: "subsample size must be at least 1".into(),
        });
    }
    let theta = x * beta;
    let phi = information_matrix(family, x, &theta)?;
    let chol = Cholesky::new(phi).ok_or(Error::SingularInformation {
        context: "full-data information matrix".into(),
    })?;
    let z = chol.solve(&x.transpose());
    let rf = r as f64;
    let nf = n as f64;
    let mut total = 0.0;
    for j in 0..n {
        let var = family.cumulant(theta[j])?.variance;
        let norm_sq = z.column(j).norm_squared();
        let num = var * norm_sq;
        if num == 0.0 {
            continue;
        }
        if pi[j] == 0.0 {
            return Ok(f64::INFINITY);
        }
        total += num * (1.0 / (rf * pi[j]) - 1.0 / rf + 1.0);
    }
    Ok(total / (nf * nf))
}

/// Plug-in full-data information matrix `(1/n) sum_j b''(x_j' beta) x_j x_j'`.
pub fn plug_in_information(
    family: Family,
    x: &DMatrix<f64>,
    beta: &DVector<f64>,
) -> Result<DMatrix<f64>> {
    information_matrix(family, x, &(x * beta))
}

/// `(1/n) sum_j b''(theta_j) x_j x_j'`.
fn information_matrix(
    family: Family,
    x: &DMatrix<f64>,
    theta: &DVector<f64>,
) -> Result<DMatrix<f64>> {
    let n = x.nrows();
    let mut d = DVector::zeros(n);
    for j in 0..n {
        d[j] = family.cumulant(theta[j])?.variance / n as f64;
    }
    Ok(weighted_gram(x, &d))
}

fn validate_pi(x: &DMatrix<f64>, pi: &DVector<f64>) -> Result<()> {
    if pi.len() != x.nrows() {
        return Err(Error::DimensionMismatch(format!(
            "{} probabilities for {} rows",
            pi.len(),
            x.nrows()
        )));
    }
    for (j, &p) in pi.iter().enumerate() {
        if !p.is_finite() || p < 0.0 {
            return Err(Error::NonpositiveWeight { index: j, value: p });
        }
    }
    Ok(())
}

fn variance_pieces(
    family: Family,
    x: &DMatrix<f64>,
    beta: &DVector<f64>,
    pi: &DVector<f64>,
    r: usize,
    hard_zero: bool,
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let n = x.nrows();
    validate_pi(x, pi)?;
    if r == 0 {
        return Err(Error::InvalidValue {
            key: "r".into(),
            message: "subsample size must be at least 1".into(),
        });
    }
    let theta = x * beta;
    let phi = information_matrix(family, x, &theta)?;
    let rf = r as f64;
    let nf = n as f64;
    let mut c = DVector::zeros(n);
    for j in 0..n {
        let var = family.cumulant(theta[j])?.variance;
        let active = var > 0.0 && x.row(j).iter().any(|&v| v != 0.0);
        if pi[j] == 0.0 {
            if active && hard_zero {
                return Err(Error::DegenerateWeights(format!(
                    "row {j} has zero sampling probability but positive information"
                )));
            }
            c[j] = 0.0;
        } else {
            c[j] = var * (1.0 / (rf * pi[j]) - 1.0 / rf + 1.0) / (nf * nf);
        }
    }
    let v = weighted_gram(x, &c);
    Ok((phi, v))
}

fn distinct_union(a: &[usize], b: &[usize]) -> usize {
    let mut all: Vec<usize> = a.iter().chain(b.iter()).copied().collect();
    all.sort_unstable();
    all.dedup();
    all.len()
}
