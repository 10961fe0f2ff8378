//! Subsampling probability constructors and the with-replacement sampler.
//!
//! All constructors produce a [`SamplingWeights`] value: a probability vector
//! over the `n` data rows (nonnegative, summing to one) plus a record of the
//! strategy and its parameters. The A-optimal constructions
//! ([`osumc_weights`], [`oracle_optimal_weights`]) assign row `j` probability
//! proportional to `sqrt(b''(x_j' beta)) * || Phi^{-1} x_j ||`, which
//! minimizes the trace of the asymptotic sandwich covariance among all
//! sampling distributions; both are computed from covariates only.
//! [`osmac_mmse_weights`] is the logistic mMSE benchmark and is the only
//! constructor that reads responses.

mod alias;
mod pilot;

pub use alias::AliasTable;
pub use pilot::{design_only_pilot, draw_uniform_indices, pilot_fit, PilotFit};

use nalgebra::{Cholesky, DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::glm::Family;
use crate::linalg::{numerical_rank, SymSolve, RANK_TOL};

/// A sampling distribution over data rows, with provenance.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SamplingWeights {
    pi: DVector<f64>,
    strategy: String,
    params: Vec<(String, String)>,
}

impl SamplingWeights {
    /// Validate and normalize a weight vector: entries must be finite and
    /// nonnegative with a positive sum; the stored vector sums to one.
    pub fn new(
        raw: DVector<f64>,
        strategy: impl Into<String>,
        params: Vec<(String, String)>,
    ) -> Result<Self> {
        if raw.is_empty() {
            return Err(Error::DegenerateWeights("empty weight vector".into()));
        }
        for (i, &w) in raw.iter().enumerate() {
            if !w.is_finite() || w < 0.0 {
                return Err(Error::DegenerateWeights(format!(
                    "weight {w} at index {i} is not a finite nonnegative number"
                )));
            }
        }
        let total: f64 = raw.iter().sum();
        if !total.is_finite() || total <= 0.0 {
            return Err(Error::DegenerateWeights(format!(
                "weights sum to {total}, cannot normalize"
            )));
        }
        let pi = raw / total;
        debug_assert!((pi.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        Ok(SamplingWeights {
            pi,
            strategy: strategy.into(),
            params,
        })
    }

    pub fn pi(&self) -> &DVector<f64> {
        &self.pi
    }

    pub fn len(&self) -> usize {
        self.pi.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pi.is_empty()
    }

    pub fn strategy(&self) -> &str {
        &self.strategy
    }

    pub fn params(&self) -> &[(String, String)] {
        &self.params
    }

    /// Mix with the uniform distribution: `(1 - delta) pi + delta / n`.
    ///
    /// A positive floor guarantees every inverse-probability weight is
    /// bounded, at a small efficiency cost.
    pub fn with_floor(mut self, delta: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&delta) {
            return Err(Error::InvalidValue {
                key: "weight_floor".into(),
                message: format!("floor {delta} must lie in [0, 1)"),
            });
        }
        if delta > 0.0 {
            let n = self.pi.len() as f64;
            self.pi = self.pi.map(|p| (1.0 - delta) * p + delta / n);
            self.params.push(("floor".into(), format!("{delta}")));
        }
        Ok(self)
    }
}

/// Draw `r` row indices with replacement according to `weights`.
pub fn sample_with_replacement<R: Rng + ?Sized>(
    weights: &SamplingWeights,
    r: usize,
    rng: &mut R,
) -> Result<Vec<usize>> {
    if r == 0 {
        return Err(Error::InvalidValue {
            key: "r".into(),
            message: "subsample size must be at least 1".into(),
        });
    }
    let table = AliasTable::new(weights.pi())?;
    Ok(table.sample_many(r, rng))
}

/// Uniform probabilities `1/n`.
pub fn uniform_weights(n: usize) -> Result<SamplingWeights> {
    SamplingWeights::new(DVector::from_element(n, 1.0), "uniform", Vec::new())
}

/// Statistical leverage scores `h_jj / p` of a tall design.
///
/// `h_jj` is the squared row norm of the thin orthonormal factor of `x`. If
/// the design is numerically rank deficient the orthonormal factor no longer
/// represents the hat matrix, so the scores fall back to the jittered normal
/// equations `h_jj = x_j' (X'X + lambda I)^{-1} x_j` with
/// `lambda = 1e-10 * trace(X'X) / p` (recorded in the params).
pub fn leverage_weights(x: &DMatrix<f64>) -> Result<SamplingWeights> {
    let (n, p) = (x.nrows(), x.ncols());
    if n < p || p == 0 {
        return Err(Error::DimensionMismatch(format!(
            "leverage scores need n >= p >= 1, got {n} x {p}"
        )));
    }
    let qr = x.clone().qr();
    let rmat = qr.r();
    let lead = (0..p).map(|i| rmat[(i, i)].abs()).fold(0.0f64, f64::max);
    let full_rank = lead > 0.0 && (0..p).all(|i| rmat[(i, i)].abs() > RANK_TOL * lead);
    if full_rank {
        let q = qr.q();
        let h = DVector::from_fn(n, |i, _| q.row(i).norm_squared());
        debug_assert!((h.sum() - p as f64).abs() < 1e-8 * p as f64);
        return SamplingWeights::new(h, "leverage", vec![("factorization".into(), "qr".into())]);
    }
    // Rank-deficient fallback.
    let gram = x.tr_mul(x);
    let lambda = 1e-10 * gram.trace() / p as f64;
    if !lambda.is_finite() || lambda <= 0.0 {
        return Err(Error::RankDeficient {
            rank: numerical_rank(x),
            p,
        });
    }
    let mut jittered = gram;
    for i in 0..p {
        jittered[(i, i)] += lambda;
    }
    let chol = Cholesky::new(jittered).ok_or(Error::RankDeficient {
        rank: numerical_rank(x),
        p,
    })?;
    let xt = x.transpose();
    let z = chol.solve(&xt);
    let h = DVector::from_fn(n, |i, _| x.row(i).transpose().dot(&z.column(i).into_owned()));
    SamplingWeights::new(
        h,
        "leverage",
        vec![
            ("factorization".into(), "gram".into()),
            ("gram_jitter".into(), format!("{lambda:e}")),
        ],
    )
}

/// Shrinked leverage: `alpha * h_jj/p + (1 - alpha) / n`.
pub fn slev_weights(x: &DMatrix<f64>, alpha: f64) -> Result<SamplingWeights> {
    slev_from_leverage(&leverage_weights(x)?, alpha)
}

/// Build shrinkage-leverage probabilities from precomputed leverage weights,
/// so one QR factorization can serve both strategies.
pub fn slev_from_leverage(leverage: &SamplingWeights, alpha: f64) -> Result<SamplingWeights> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::InvalidValue {
            key: "slev_alpha".into(),
            message: format!("alpha {alpha} must lie in [0, 1]"),
        });
    }
    let n = leverage.len() as f64;
    let pi = leverage.pi().map(|l| alpha * l + (1.0 - alpha) / n);
    let mut params = leverage.params().to_vec();
    params.push(("alpha".into(), format!("{alpha}")));
    SamplingWeights::new(pi, "slev", params)
}

/// Logistic mMSE benchmark: `pi_j` proportional to
/// `|y_j - p_j| * || M^{-1} x_j ||` with `M = (1/n) sum p_j (1-p_j) x_j x_j'`
/// evaluated at a pilot estimate. Needs every response, so it cannot run
/// under a measurement constraint.
pub fn osmac_mmse_weights(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    beta_pilot: &DVector<f64>,
) -> Result<SamplingWeights> {
    let (n, p) = (x.nrows(), x.ncols());
    if y.len() != n || beta_pilot.len() != p {
        return Err(Error::DimensionMismatch(format!(
            "{n} rows vs {} responses vs pilot of length {}",
            y.len(),
            beta_pilot.len()
        )));
    }
    let theta = x * beta_pilot;
    let mut d = DVector::zeros(n);
    for i in 0..n {
        d[i] = Family::Logistic.cumulant(theta[i])?.variance / n as f64;
    }
    let m = crate::linalg::weighted_gram(x, &d);
    let solver = SymSolve::factor(&m, "mMSE information")?;
    let z = solver.solve_matrix(&x.transpose());
    let mut scores = DVector::zeros(n);
    for j in 0..n {
        let pj = Family::Logistic.cumulant(theta[j])?.mean;
        scores[j] = (y[j] - pj).abs() * z.column(j).norm();
    }
    if scores.iter().all(|&s| s == 0.0) {
        return Err(Error::DegenerateWeights(
            "every mMSE score is zero (responses equal fitted means exactly)".into(),
        ));
    }
    SamplingWeights::new(scores, "osmac", Vec::new())
}

/// A-optimal probabilities at a known coefficient vector and information
/// matrix: `pi_j` proportional to `sqrt(b''(x_j' beta0)) * || phi^{-1} x_j ||`.
///
/// Computed on the log scale so extreme linear predictors cannot overflow the
/// unnormalized weights. `phi` must be symmetric positive definite.
pub fn oracle_optimal_weights(
    family: Family,
    x: &DMatrix<f64>,
    beta0: &DVector<f64>,
    phi: &DMatrix<f64>,
) -> Result<SamplingWeights> {
    let solver = match Cholesky::new(phi.clone()) {
        Some(c) => c,
        None => {
            return Err(Error::SingularInformation {
                context: "supplied information matrix is not positive definite".into(),
            })
        }
    };
    let pi = optimal_from_solver(family, x, beta0, |rhs| solver.solve(rhs))?;
    SamplingWeights::new(pi, "oracle-optimal", Vec::new())
}

/// A-optimal probabilities from a pilot fit; reads covariates only.
pub fn osumc_weights(
    family: Family,
    x: &DMatrix<f64>,
    pilot: &PilotFit,
) -> Result<SamplingWeights> {
    let solver = pilot.factor()?;
    let pi = optimal_from_solver(family, x, &pilot.beta_tilde, |rhs| solver.solve_matrix(rhs))?;
    let mut params = vec![("r0".into(), format!("{}", pilot.indices.len()))];
    if pilot.jitter > 0.0 {
        params.push(("pilot_jitter".into(), format!("{:e}", pilot.jitter)));
    }
    SamplingWeights::new(pi, "osumc", params)
}

/// Shared core of the A-optimal constructions: given a solver for
/// `phi z = v`, compute softmax-normalized
/// `0.5 ln b''(theta_j) + ln || phi^{-1} x_j ||`.
fn optimal_from_solver(
    family: Family,
    x: &DMatrix<f64>,
    beta: &DVector<f64>,
    solve: impl Fn(&DMatrix<f64>) -> DMatrix<f64>,
) -> Result<DVector<f64>> {
    let n = x.nrows();
    if beta.len() != x.ncols() {
        return Err(Error::DimensionMismatch(format!(
            "{} columns vs beta of length {}",
            x.ncols(),
            beta.len()
        )));
    }
    let theta = x * beta;
    let z = solve(&x.transpose());
    let mut log_w = DVector::from_element(n, f64::NEG_INFINITY);
    let mut max = f64::NEG_INFINITY;
    for j in 0..n {
        let norm = z.column(j).norm();
        if norm > 0.0 {
            log_w[j] = 0.5 * family.log_variance(theta[j]) + norm.ln();
            max = max.max(log_w[j]);
        }
    }
    if !max.is_finite() {
        return Err(Error::DegenerateWeights(
            "every optimal-weight numerator is zero".into(),
        ));
    }
    Ok(log_w.map(|l| (l - max).exp()))
}
