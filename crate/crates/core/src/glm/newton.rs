//! Inverse-probability-weighted score equations and their Newton solver.
//!
//! For a subsample `(x*_i, y*_i)` drawn with replacement with probabilities
//! `pi*_i` from `n` rows, the reweighted score is
//!
//! ```text
//! S(beta) = (1/r) sum_i (b'(x*_i' beta) - y*_i) x*_i / (n pi*_i)
//! ```
//!
//! an unbiased estimate (given the full data) of the full-data score
//! `(1/n) sum_j (b'(x_j' beta) - y_j) x_j`. Its Jacobian
//! `(1/r) sum_i b''(x*_i' beta) x*_i x*_i' / (n pi*_i)` is symmetric positive
//! semidefinite, so the solver is damped Newton with step halving on the
//! score norm (infinity norm throughout).

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::glm::{Dataset, Family};
use crate::linalg::{numerical_rank, weighted_gram, SymSolve};

/// Maximum number of step halvings per Newton iteration.
const MAX_HALVINGS: usize = 30;

/// Outcome of a weighted-score solve.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FitResult {
    /// The final iterate.
    pub beta: DVector<f64>,
    /// True iff `final_score_norm <= tol` at a locally stable root; see
    /// [`solve_weighted_score`] for the stability requirement. A diverging
    /// iterate that drives the score below tolerance (numerical separation)
    /// reports `false`.
    pub converged: bool,
    /// Newton updates performed.
    pub iterations: usize,
    /// Infinity norm of the weighted score at `beta`.
    pub final_score_norm: f64,
    /// Plug-in covariance of `beta`, when the caller requested it.
    pub covariance: Option<DMatrix<f64>>,
    /// Distinct responses measured by the pipeline that produced this fit.
    /// Zero when the solver was invoked on raw vectors (accounting happens at
    /// the response store).
    pub responses_measured: usize,
}

impl FitResult {
    /// Convert a non-converged fit into the typed error carrying the last
    /// iterate, for callers that require convergence.
    pub fn require_converged(self) -> Result<FitResult> {
        if self.converged {
            Ok(self)
        } else {
            Err(Error::NotConverged {
                beta: self.beta.iter().cloned().collect(),
                iterations: self.iterations,
                final_score_norm: self.final_score_norm,
            })
        }
    }
}

fn validate_subsample(
    x_sub: &DMatrix<f64>,
    y_sub: Option<&DVector<f64>>,
    pi_sub: &DVector<f64>,
    n: usize,
    beta: &DVector<f64>,
) -> Result<()> {
    let r = x_sub.nrows();
    if let Some(y) = y_sub {
        if y.len() != r {
            return Err(Error::DimensionMismatch(format!(
                "{r} subsample rows vs {} responses",
                y.len()
            )));
        }
    }
    if pi_sub.len() != r {
        return Err(Error::DimensionMismatch(format!(
            "{r} subsample rows vs {} probabilities",
            pi_sub.len()
        )));
    }
    if beta.len() != x_sub.ncols() {
        return Err(Error::DimensionMismatch(format!(
            "{} columns vs beta of length {}",
            x_sub.ncols(),
            beta.len()
        )));
    }
    if n == 0 || r == 0 {
        return Err(Error::DimensionMismatch(
            "empty subsample or population".into(),
        ));
    }
    for (i, &pi) in pi_sub.iter().enumerate() {
        if !pi.is_finite() || pi <= 0.0 {
            return Err(Error::NonpositiveWeight {
                index: i,
                value: pi,
            });
        }
    }
    Ok(())
}

/// Per-row weights `1 / (n pi_i)`.
fn ip_weights(pi_sub: &DVector<f64>, n: usize) -> DVector<f64> {
    pi_sub.map(|pi| 1.0 / (n as f64 * pi))
}

/// Score, its norm, and the linear predictors at one `beta`.
struct Eval {
    theta: DVector<f64>,
    score: DVector<f64>,
    norm: f64,
}

/// Evaluate the weighted score `(1/r) X' diag(w) (b'(theta) - y)`.
fn eval_score(
    family: Family,
    x_sub: &DMatrix<f64>,
    y_sub: &DVector<f64>,
    w: &DVector<f64>,
    beta: &DVector<f64>,
) -> Result<Eval> {
    let r = x_sub.nrows() as f64;
    let theta = x_sub * beta;
    let mut resid = DVector::zeros(x_sub.nrows());
    for i in 0..x_sub.nrows() {
        let c = family.cumulant(theta[i])?;
        resid[i] = (c.mean - y_sub[i]) * w[i] / r;
    }
    let score = x_sub.tr_mul(&resid);
    let norm = score.amax();
    Ok(Eval { theta, score, norm })
}

/// The weighted score at `beta`; see the module docs for the formula.
pub fn weighted_score(
    family: Family,
    x_sub: &DMatrix<f64>,
    y_sub: &DVector<f64>,
    pi_sub: &DVector<f64>,
    n: usize,
    beta: &DVector<f64>,
) -> Result<DVector<f64>> {
    validate_subsample(x_sub, Some(y_sub), pi_sub, n, beta)?;
    let w = ip_weights(pi_sub, n);
    Ok(eval_score(family, x_sub, y_sub, &w, beta)?.score)
}

/// The score Jacobian `(1/r) X' diag(b''(theta) w) X`; symmetric positive
/// semidefinite by construction.
pub fn weighted_information(
    family: Family,
    x_sub: &DMatrix<f64>,
    pi_sub: &DVector<f64>,
    n: usize,
    beta: &DVector<f64>,
) -> Result<DMatrix<f64>> {
    validate_subsample(x_sub, None, pi_sub, n, beta)?;
    let w = ip_weights(pi_sub, n);
    let theta = x_sub * beta;
    information_at(family, x_sub, &theta, &w)
}

fn information_at(
    family: Family,
    x_sub: &DMatrix<f64>,
    theta: &DVector<f64>,
    w: &DVector<f64>,
) -> Result<DMatrix<f64>> {
    let r = x_sub.nrows() as f64;
    let mut d = DVector::zeros(x_sub.nrows());
    for i in 0..x_sub.nrows() {
        d[i] = family.cumulant(theta[i])?.variance * w[i] / r;
    }
    Ok(weighted_gram(x_sub, &d))
}

/// Solve the weighted score equation by damped Newton iteration.
///
/// Each iteration solves the Jacobian system (ridge-jittered retry on
/// factorization failure) and then halves the step up to 30 times until the
/// score norm strictly decreases; if no step length achieves a decrease, or
/// `max_iter` is exhausted, the result comes back with `converged == false`
/// and the last iterate. A subsample whose design has numerical rank below
/// `p` cannot identify `beta` for any canonical family, so it is rejected
/// up front with `SingularInformation`.
///
/// An iterate meeting the score tolerance is accepted as converged only if
/// it is a locally stable root: one further Newton step must move it by at
/// most `sqrt(tol) * (1 + ||beta||_inf)`. On a numerically separated
/// logistic (or all-zero-mean Poisson) subsample the score equation has no
/// finite solution — the score norm decays below any tolerance along a
/// diverging path while the curvature vanishes — and such pseudo-roots are
/// reported with `converged == false` rather than as answers.
#[allow(clippy::too_many_arguments)]
pub fn solve_weighted_score(
    family: Family,
    x_sub: &DMatrix<f64>,
    y_sub: &DVector<f64>,
    pi_sub: &DVector<f64>,
    n: usize,
    beta_init: &DVector<f64>,
    tol: f64,
    max_iter: usize,
) -> Result<FitResult> {
    validate_subsample(x_sub, Some(y_sub), pi_sub, n, beta_init)?;
    let (r, p) = (x_sub.nrows(), x_sub.ncols());
    if r < p {
        log::warn!("subsample size r = {r} is below p = {p}; the fit cannot be identified");
    }
    let rank = numerical_rank(x_sub);
    if rank < p {
        return Err(Error::SingularInformation {
            context: format!("subsample design has numerical rank {rank} < p = {p}"),
        });
    }
    let w = ip_weights(pi_sub, n);
    newton(family, x_sub, y_sub, &w, beta_init, tol, max_iter)
}

/// Core damped-Newton loop over precomputed inverse-probability weights.
fn newton(
    family: Family,
    x_sub: &DMatrix<f64>,
    y_sub: &DVector<f64>,
    w: &DVector<f64>,
    beta_init: &DVector<f64>,
    tol: f64,
    max_iter: usize,
) -> Result<FitResult> {
    let mut beta = beta_init.clone();
    // Overflow at the starting point is unrecoverable: there is no previous
    // iterate to shrink toward.
    let mut eval = eval_score(family, x_sub, y_sub, w, &beta)?;

    for iter in 1..=max_iter {
        if eval.norm <= tol {
            let stable = is_stable_root(family, x_sub, &eval, w, &beta, tol);
            return Ok(fit(beta, stable, iter - 1, eval.norm));
        }
        let j = information_at(family, x_sub, &eval.theta, w)?;
        let solver = SymSolve::factor(&j, "weighted score Jacobian")?;
        let delta = solver.solve_vector(&eval.score);

        let mut accepted = None;
        let mut step = 1.0;
        for _ in 0..=MAX_HALVINGS {
            let candidate = &beta - &delta * step;
            match eval_score(family, x_sub, y_sub, w, &candidate) {
                Ok(cand) if cand.norm < eval.norm => {
                    accepted = Some((candidate, cand));
                    break;
                }
                Ok(_) => {}
                // Overflow along the path: treat as an infinite score norm
                // and keep halving.
                Err(Error::Overflow { .. }) => {}
                Err(e) => return Err(e),
            }
            step *= 0.5;
        }
        match accepted {
            Some((b, e)) => {
                beta = b;
                eval = e;
            }
            // Line search stalled: no step length reduces the score norm.
            None => return Ok(fit(beta, eval.norm <= tol, iter - 1, eval.norm)),
        }
    }
    let converged = eval.norm <= tol && is_stable_root(family, x_sub, &eval, w, &beta, tol);
    Ok(fit(beta, converged, max_iter, eval.norm))
}

/// True when one further Newton step from `beta` would move the iterate by
/// at most `sqrt(tol) * (1 + ||beta||_inf)`.
///
/// A small score norm alone does not certify a root: when a subsample is
/// numerically separated the score decays exponentially along an escape
/// direction, so an absolute tolerance is eventually met by a *diverging*
/// iterate sitting in a region of vanishing curvature. At a genuine root the
/// Newton increment is negligible; along an escape path it stays comparable
/// to the iterate itself. An unfactorable curvature matrix at the candidate
/// root counts as unstable.
fn is_stable_root(
    family: Family,
    x_sub: &DMatrix<f64>,
    eval: &Eval,
    w: &DVector<f64>,
    beta: &DVector<f64>,
    tol: f64,
) -> bool {
    let Ok(j) = information_at(family, x_sub, &eval.theta, w) else {
        return false;
    };
    let Ok(solver) = SymSolve::factor(&j, "stability check at an accepted root") else {
        return false;
    };
    let delta = solver.solve_vector(&eval.score);
    delta.amax() <= tol.sqrt() * (1.0 + beta.amax())
}

fn fit(beta: DVector<f64>, converged: bool, iterations: usize, norm: f64) -> FitResult {
    FitResult {
        beta,
        converged,
        iterations,
        final_score_norm: norm,
        covariance: None,
        responses_measured: 0,
    }
}

/// Maximum-likelihood fit on the full dataset (every response observed).
///
/// Solves the unweighted score equation `(1/n) sum_j (b'(x_j'beta) - y_j) x_j
/// = 0` from a zero start. On an oracle-gated store this measures all `n`
/// responses, which is exactly the cost the subsampling pipelines avoid.
pub fn full_mle(family: Family, dataset: &Dataset, tol: f64, max_iter: usize) -> Result<FitResult> {
    let y = dataset.full_responses()?;
    let w = DVector::from_element(dataset.n(), 1.0);
    let beta0 = DVector::zeros(dataset.p());
    let mut fit = newton(family, dataset.x(), &y, &w, &beta0, tol, max_iter)?;
    fit.responses_measured = dataset.responses_measured();
    Ok(fit)
}
