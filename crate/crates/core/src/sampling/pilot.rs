//! Stage one of the two-stage estimator: a small uniform pilot subsample
//! that yields a provisional coefficient vector and a plug-in information
//! matrix, from which the optimal sampling probabilities are built.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, RngExt};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::glm::{solve_weighted_score, Dataset, Family};
use crate::linalg::{gather_rows, weighted_gram, SymSolve};

/// Output of the pilot stage.
///
/// `phi_tilde` is the subsample information matrix
/// `(1/r0) sum b''(x_i' beta_tilde) x_i x_i'` over the pilot rows (with
/// multiplicity). `jitter` records the ridge term, if any, that was needed to
/// factor it. `responses_measured` counts the distinct rows whose response
/// the pilot consumed — zero for the design-only variant.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PilotFit {
    pub beta_tilde: DVector<f64>,
    pub phi_tilde: DMatrix<f64>,
    pub jitter: f64,
    pub indices: Vec<usize>,
    pub responses_measured: usize,
}

impl PilotFit {
    /// Re-factor the pilot information matrix for downstream solves.
    pub(crate) fn factor(&self) -> Result<SymSolve> {
        SymSolve::factor(&self.phi_tilde, "pilot information matrix")
    }
}

/// Draw `r0` row indices uniformly with replacement.
pub fn draw_uniform_indices<R: Rng + ?Sized>(n: usize, r0: usize, rng: &mut R) -> Vec<usize> {
    (0..r0).map(|_| rng.random_range(0..n)).collect()
}

/// Fit a uniform pilot subsample of size `r0` and assemble the plug-in
/// information matrix at the pilot estimate.
///
/// Requires `r0 >= p + 1` so the pilot system can be identified at all. The
/// pilot solve starts from zero, uses uniform probabilities `1/n`, and must
/// converge — a pilot that fails to converge poisons every downstream weight,
/// so it is reported as a hard error rather than a flag.
pub fn pilot_fit<R: Rng + ?Sized>(
    family: Family,
    dataset: &Dataset,
    r0: usize,
    tol: f64,
    max_iter: usize,
    rng: &mut R,
) -> Result<PilotFit> {
    let n = dataset.n();
    let p = dataset.p();
    if r0 < p + 1 {
        return Err(Error::PilotTooSmall { r0, min: p + 1 });
    }
    let indices = draw_uniform_indices(n, r0, rng);
    let y_sub = dataset.measure_many(&indices)?;
    let x_sub = gather_rows(dataset.x(), &indices);
    let pi_sub = DVector::from_element(r0, 1.0 / n as f64);
    let init = DVector::zeros(p);
    let fit = solve_weighted_score(family, &x_sub, &y_sub, &pi_sub, n, &init, tol, max_iter)?
        .require_converged()?;

    let theta = &x_sub * &fit.beta;
    let mut d = DVector::zeros(r0);
    for k in 0..r0 {
        d[k] = family.cumulant(theta[k])?.variance / r0 as f64;
    }
    let phi_tilde = weighted_gram(&x_sub, &d);
    let solver = SymSolve::factor(&phi_tilde, "pilot information matrix")?;
    let responses_measured = distinct_count(&indices);

    Ok(PilotFit {
        beta_tilde: fit.beta,
        phi_tilde,
        jitter: solver.jitter(),
        indices,
        responses_measured,
    })
}

/// Pilot stage for the linear-model fast path: the same uniform index draw,
/// but the information matrix is the raw design second moment
/// `(1/r0) sum x_i x_i'` and no response is ever read. Consumes exactly the
/// same random stream as [`pilot_fit`] with the same `r0`.
pub fn design_only_pilot<R: Rng + ?Sized>(
    x: &DMatrix<f64>,
    r0: usize,
    rng: &mut R,
) -> Result<PilotFit> {
    let (n, p) = (x.nrows(), x.ncols());
    if r0 < p + 1 {
        return Err(Error::PilotTooSmall { r0, min: p + 1 });
    }
    let indices = draw_uniform_indices(n, r0, rng);
    let x_sub = gather_rows(x, &indices);
    let d = DVector::from_element(r0, 1.0 / r0 as f64);
    let phi_tilde = weighted_gram(&x_sub, &d);
    let solver = SymSolve::factor(&phi_tilde, "design second-moment matrix")?;

    Ok(PilotFit {
        beta_tilde: DVector::zeros(p),
        phi_tilde,
        jitter: solver.jitter(),
        indices,
        responses_measured: 0,
    })
}

fn distinct_count(indices: &[usize]) -> usize {
    let mut sorted = indices.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    sorted.len()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand_chacha::rand_core::SeedableRng;

    use crate::rng::StreamRng;

    fn linear_dataset(n: usize, seed: u64) -> (Dataset, DVector<f64>) {
        let mut rng = StreamRng::seed_from_u64(seed);
        let x = DMatrix::from_fn(n, 3, |_, j| {
            if j == 0 {
                1.0
            } else {
                rng.random::<f64>() * 2.0 - 1.0
            }
        });
        let beta0 = DVector::from_vec(vec![1.0, -2.0, 0.5]);
        let y = &x * &beta0 + DVector::from_fn(n, |_, _| 0.1 * (rng.random::<f64>() - 0.5));
        (Dataset::fully_observed(x, y).unwrap(), beta0)
    }

    #[test]
    fn rejects_pilot_smaller_than_p_plus_one() {
        let (ds, _) = linear_dataset(50, 1);
        let mut rng = StreamRng::seed_from_u64(2);
        let err = pilot_fit(Family::Linear, &ds, 3, 1e-8, 50, &mut rng).unwrap_err();
        assert!(matches!(err, Error::PilotTooSmall { r0: 3, min: 4 }), "{err:?}");
        assert!(pilot_fit(Family::Linear, &ds, 4, 1e-8, 50, &mut rng).is_ok());
    }

    #[test]
    fn pilot_estimate_lands_near_truth() {
        let (ds, beta0) = linear_dataset(2000, 3);
        let mut rng = StreamRng::seed_from_u64(4);
        let pilot = pilot_fit(Family::Linear, &ds, 200, 1e-8, 50, &mut rng).unwrap();
        assert!(
            (&pilot.beta_tilde - &beta0).norm() < 0.2,
            "pilot {} vs truth {}",
            pilot.beta_tilde,
            beta0
        );
        assert_eq!(pilot.indices.len(), 200);
    }

    #[test]
    fn information_matrix_matches_naive_loop() {
        let (ds, _) = linear_dataset(300, 5);
        let mut rng = StreamRng::seed_from_u64(6);
        let pilot = pilot_fit(Family::Linear, &ds, 60, 1e-10, 50, &mut rng).unwrap();
        let mut naive = DMatrix::zeros(3, 3);
        for &i in &pilot.indices {
            let xi = ds.x().row(i).transpose();
            // Linear family: b'' is identically one.
            naive += &xi * xi.transpose() / 60.0;
        }
        assert_relative_eq!(pilot.phi_tilde, naive, epsilon = 1e-12);
    }

    #[test]
    fn oracle_store_counts_distinct_pilot_rows() {
        let (ds, _) = linear_dataset(100, 7);
        let gated = ds.fork_oracle();
        let mut rng = StreamRng::seed_from_u64(8);
        let pilot = pilot_fit(Family::Linear, &gated, 40, 1e-8, 50, &mut rng).unwrap();
        assert_eq!(pilot.responses_measured, distinct_count(&pilot.indices));
        assert_eq!(gated.responses_measured(), pilot.responses_measured);
        assert!(pilot.responses_measured <= 40);
    }

    #[test]
    fn design_only_pilot_reads_no_responses_and_replays_the_index_stream() {
        let (ds, _) = linear_dataset(150, 9);
        let mut rng_a = StreamRng::seed_from_u64(10);
        let mut rng_b = StreamRng::seed_from_u64(10);
        let a = design_only_pilot(ds.x(), 30, &mut rng_a).unwrap();
        let b = pilot_fit(Family::Linear, &ds, 30, 1e-8, 50, &mut rng_b).unwrap();
        assert_eq!(a.indices, b.indices, "both pilots must draw the same rows");
        assert_eq!(a.responses_measured, 0);
        assert!(a.beta_tilde.iter().all(|&v| v == 0.0));
        // After the pilot both generators must be in the same state.
        assert_eq!(rng_a.random::<u64>(), rng_b.random::<u64>());
        // Linear b'' is one, so both pilots build the same matrix.
        assert_relative_eq!(a.phi_tilde, b.phi_tilde, epsilon = 1e-12);
    }

    #[test]
    fn nonconverged_pilot_is_a_hard_error() {
        let (ds, _) = linear_dataset(80, 11);
        let mut rng = StreamRng::seed_from_u64(12);
        let err = pilot_fit(Family::Linear, &ds, 20, 1e-10, 0, &mut rng).unwrap_err();
        assert!(matches!(err, Error::NotConverged { .. }), "{err:?}");
    }
}
