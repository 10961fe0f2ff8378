//! Chi-square Q-Q diagnostics for the asymptotic-normality claim.
//!
//! If the subsampling estimator is asymptotically normal with covariance `V`,
//! then `d_i^2 = || V^{-1/2} (beta_i - center) ||^2` over replications should
//! follow a chi-square law with `p` degrees of freedom. The report pairs the
//! sorted observed `d_i^2` with the chi-square quantiles at `(i + 0.5) / S`
//! and summarizes agreement by their Pearson correlation.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::error::{Error, Result};

/// Minimum number of replications for a meaningful quantile comparison.
const MIN_REPLICATIONS: usize = 100;

/// Paired quantiles plus their correlation.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct QqReport {
    /// `(theoretical, observed)` pairs, both coordinates nondecreasing.
    pub pairs: Vec<(f64, f64)>,
    /// Pearson correlation of the paired quantiles.
    pub correlation: f64,
    /// Degrees of freedom of the reference distribution.
    pub df: usize,
}

/// Compare standardized squared errors against chi-square quantiles.
///
/// `normalizer` must be the inverse square root of the claimed covariance,
/// so that under the claim the standardized deviations are approximately
/// standard normal vectors.
pub fn qq_statistics(
    betas: &[DVector<f64>],
    center: &DVector<f64>,
    normalizer: &DMatrix<f64>,
) -> Result<QqReport> {
    if betas.len() < MIN_REPLICATIONS {
        return Err(Error::TooFewReplications {
            got: betas.len(),
            min: MIN_REPLICATIONS,
        });
    }
    let p = center.len();
    if normalizer.nrows() != p || normalizer.ncols() != p {
        return Err(Error::DimensionMismatch(format!(
            "normalizer is {} x {} for p = {p}",
            normalizer.nrows(),
            normalizer.ncols()
        )));
    }
    let mut observed = Vec::with_capacity(betas.len());
    for (i, beta) in betas.iter().enumerate() {
        if beta.len() != p {
            return Err(Error::DimensionMismatch(format!(
                "estimate {i} has length {} for p = {p}",
                beta.len()
            )));
        }
        let d2 = (normalizer * (beta - center)).norm_squared();
        if !d2.is_finite() {
            return Err(Error::DegenerateSample(format!(
                "standardized deviation of estimate {i} is not finite"
            )));
        }
        observed.push(d2);
    }
    observed.sort_by(|a, b| a.partial_cmp(b).expect("finiteness checked above"));
    if observed.first() == observed.last() {
        return Err(Error::DegenerateSample(
            "all standardized deviations are identical; the correlation is undefined".into(),
        ));
    }

    let chi = ChiSquared::new(p as f64).map_err(|e| Error::InvalidValue {
        key: "df".into(),
        message: format!("chi-square with {p} degrees of freedom: {e}"),
    })?;
    let s = observed.len();
    let pairs: Vec<(f64, f64)> = observed
        .iter()
        .enumerate()
        .map(|(i, &d2)| (chi.inverse_cdf((i as f64 + 0.5) / s as f64), d2))
        .collect();
    let theoretical: Vec<f64> = pairs.iter().map(|&(t, _)| t).collect();
    let correlation = pearson(&theoretical, &observed);
    Ok(QqReport {
        pairs,
        correlation,
        df: p,
    })
}

fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut va = 0.0;
    let mut vb = 0.0;
    for (&x, &y) in a.iter().zip(b) {
        cov += (x - ma) * (y - mb);
        va += (x - ma) * (x - ma);
        vb += (y - mb) * (y - mb);
    }
    cov / (va.sqrt() * vb.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::RngExt;
    use rand_chacha::rand_core::SeedableRng;
    use rand_distr::StandardNormal;

    use crate::rng::StreamRng;

    #[test]
    fn too_few_replications_are_rejected() {
        let betas = vec![DVector::zeros(2); 99];
        let err = qq_statistics(&betas, &DVector::zeros(2), &DMatrix::identity(2, 2)).unwrap_err();
        assert!(
            matches!(err, Error::TooFewReplications { got: 99, min: 100 }),
            "{err:?}"
        );
    }

    #[test]
    fn standard_normal_deviations_track_the_chi_square_line() {
        let mut rng = StreamRng::seed_from_u64(77);
        let p = 3;
        let betas: Vec<DVector<f64>> = (0..400)
            .map(|_| DVector::from_fn(p, |_, _| rng.sample::<f64, _>(StandardNormal)))
            .collect();
        let report =
            qq_statistics(&betas, &DVector::zeros(p), &DMatrix::identity(p, p)).unwrap();
        assert_eq!(report.df, 3);
        assert_eq!(report.pairs.len(), 400);
        assert!(
            report.correlation > 0.99,
            "correlation {} too low for genuinely normal input",
            report.correlation
        );
        // Both coordinates must be sorted.
        for w in report.pairs.windows(2) {
            assert!(w[0].0 <= w[1].0);
            assert!(w[0].1 <= w[1].1);
        }
    }

    #[test]
    fn heavy_tailed_deviations_break_the_line() {
        // Cauchy-like ratios are far from normal; the correlation must drop.
        let mut rng = StreamRng::seed_from_u64(78);
        let p = 3;
        let betas: Vec<DVector<f64>> = (0..400)
            .map(|_| {
                DVector::from_fn(p, |_, _| {
                    let num: f64 = rng.sample(StandardNormal);
                    let den: f64 = rng.sample(StandardNormal);
                    num / den
                })
            })
            .collect();
        let report =
            qq_statistics(&betas, &DVector::zeros(p), &DMatrix::identity(p, p)).unwrap();
        assert!(
            report.correlation < 0.9,
            "correlation {} should reveal the heavy tails",
            report.correlation
        );
    }

    #[test]
    fn identical_estimates_are_rejected_as_degenerate() {
        let betas = vec![DVector::from_element(2, 0.7); 150];
        let err = qq_statistics(&betas, &DVector::zeros(2), &DMatrix::identity(2, 2)).unwrap_err();
        assert!(matches!(err, Error::DegenerateSample(_)), "{err:?}");
    }

    #[test]
    fn wrong_scale_preserves_correlation_but_not_the_line() {
        // A Q-Q correlation is scale-blind; the pairs themselves reveal a
        // wrong normalizer through their slope.
        let mut rng = StreamRng::seed_from_u64(79);
        let betas: Vec<DVector<f64>> = (0..300)
            .map(|_| DVector::from_fn(2, |_, _| 3.0 * rng.sample::<f64, _>(StandardNormal)))
            .collect();
        let report =
            qq_statistics(&betas, &DVector::zeros(2), &DMatrix::identity(2, 2)).unwrap();
        let slope = report.pairs.last().unwrap().1 / report.pairs.last().unwrap().0;
        assert!(slope > 4.0, "a wrong variance scale shows as slope {slope}");
    }
}
