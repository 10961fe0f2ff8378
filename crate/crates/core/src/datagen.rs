//! Seeded synthetic scenarios for the three families.
//!
//! Designs are generated row by row from an explicitly seeded stream, so a
//! `(seed, replication)` pair pins the dataset bit-for-bit regardless of
//! thread count. The multivariate-normal designs share one equicorrelated
//! base covariance (unit diagonal, 0.5 off-diagonal); the linear-model
//! designs rescale it and optionally divide each row by an independent
//! chi-square draw to produce elliptical heavy tails.

use nalgebra::{Cholesky, DMatrix, DVector};
use rand::{Rng, RngExt};
use rand_distr::{ChiSquared, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::glm::{Dataset, Family};
use crate::rng::{stream_rng, LANE_DATA};

/// Covariate distribution of a synthetic scenario.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum DesignKind {
    /// Centered equicorrelated normal (logistic scenarios).
    #[serde(rename = "mzNormal")]
    MzNormal,
    /// Equicorrelated normal shifted to mean 0.5.
    #[serde(rename = "nzNormal")]
    NzNormal,
    /// Equicorrelated normal with column `k` scaled by `1/(k+1)`.
    #[serde(rename = "unNormal")]
    UnNormal,
    /// Even mixture of normals centered at +0.5 and -0.5.
    #[serde(rename = "mixNormal")]
    MixNormal,
    /// Normal with mean one and column `k` scaled by `5/(k+1)` (linear).
    #[serde(rename = "GA")]
    Ga,
    /// Elliptical t with 1 degree of freedom on the GA scale matrix.
    #[serde(rename = "T1")]
    T1,
    /// Elliptical t with 3 degrees of freedom.
    #[serde(rename = "T3")]
    T3,
    /// Elliptical t with 9 degrees of freedom.
    #[serde(rename = "T9")]
    T9,
    /// Independent uniform entries on [-0.5, 0.5] (Poisson scenarios).
    #[serde(rename = "case1")]
    UnifCase1,
    /// First half of the rows on [-0.5, 0.5], second half on [-1, 1].
    #[serde(rename = "case2")]
    UnifCase2,
}

impl DesignKind {
    pub fn name(self) -> &'static str {
        match self {
            DesignKind::MzNormal => "mzNormal",
            DesignKind::NzNormal => "nzNormal",
            DesignKind::UnNormal => "unNormal",
            DesignKind::MixNormal => "mixNormal",
            DesignKind::Ga => "GA",
            DesignKind::T1 => "T1",
            DesignKind::T3 => "T3",
            DesignKind::T9 => "T9",
            DesignKind::UnifCase1 => "case1",
            DesignKind::UnifCase2 => "case2",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        let all = [
            DesignKind::MzNormal,
            DesignKind::NzNormal,
            DesignKind::UnNormal,
            DesignKind::MixNormal,
            DesignKind::Ga,
            DesignKind::T1,
            DesignKind::T3,
            DesignKind::T9,
            DesignKind::UnifCase1,
            DesignKind::UnifCase2,
        ];
        all.into_iter()
            .find(|k| k.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::InvalidValue {
                key: "design".into(),
                message: format!(
                    "unknown design '{s}' (expected one of {})",
                    all.map(|k| k.name()).join(", ")
                ),
            })
    }

    /// The family whose scenarios use this design.
    pub fn family(self) -> Family {
        match self {
            DesignKind::MzNormal
            | DesignKind::NzNormal
            | DesignKind::UnNormal
            | DesignKind::MixNormal => Family::Logistic,
            DesignKind::Ga | DesignKind::T1 | DesignKind::T3 | DesignKind::T9 => Family::Linear,
            DesignKind::UnifCase1 | DesignKind::UnifCase2 => Family::Poisson,
        }
    }
}

impl std::fmt::Display for DesignKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Full description of a synthetic experiment's data-generating process.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub family: Family,
    pub design: DesignKind,
    pub n: usize,
    pub p: usize,
    /// True coefficients; defaults to [`default_beta0`] when absent.
    pub beta0: Option<DVector<f64>>,
    /// Linear-model noise standard deviation; defaults to 3.
    pub noise_sd: Option<f64>,
    /// Base seed; each replication derives its own data stream from it.
    pub seed: u64,
}

impl ScenarioSpec {
    pub fn new(design: DesignKind, n: usize, p: usize, seed: u64) -> Self {
        ScenarioSpec {
            family: design.family(),
            design,
            n,
            p,
            beta0: None,
            noise_sd: None,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.design.family() != self.family {
            return Err(Error::IncompatibleScenario(format!(
                "design {} belongs to the {} family, not {}",
                self.design,
                self.design.family(),
                self.family
            )));
        }
        if self.n == 0 || self.p == 0 {
            return Err(Error::IncompatibleScenario(format!(
                "need n >= 1 and p >= 1, got n = {}, p = {}",
                self.n, self.p
            )));
        }
        if let Some(b) = &self.beta0 {
            if b.len() != self.p {
                return Err(Error::IncompatibleScenario(format!(
                    "beta0 has {} entries for p = {}",
                    b.len(),
                    self.p
                )));
            }
        }
        if let Some(sd) = self.noise_sd {
            if !sd.is_finite() || sd < 0.0 {
                return Err(Error::InvalidValue {
                    key: "noise_sd".into(),
                    message: format!("noise standard deviation {sd} must be finite and >= 0"),
                });
            }
        }
        Ok(())
    }

    /// The coefficients this scenario simulates under.
    pub fn resolved_beta0(&self) -> DVector<f64> {
        self.beta0
            .clone()
            .unwrap_or_else(|| default_beta0(self.family, self.p))
    }

    pub fn resolved_noise_sd(&self) -> f64 {
        self.noise_sd.unwrap_or(3.0)
    }
}

/// Conventional true coefficients for each family.
///
/// Linear scenarios with `p >= 11` use three blocks — five entries of 0.1,
/// `p - 10` entries of 10, five entries of 0.1 — mixing weak and strong
/// signals; smaller `p` falls back to all ones. Logistic uses all ones,
/// Poisson all 0.5.
pub fn default_beta0(family: Family, p: usize) -> DVector<f64> {
    match family {
        Family::Logistic => DVector::from_element(p, 1.0),
        Family::Poisson => DVector::from_element(p, 0.5),
        Family::Linear => {
            if p >= 11 {
                DVector::from_fn(p, |i, _| if i < 5 || i >= p - 5 { 0.1 } else { 10.0 })
            } else {
                DVector::from_element(p, 1.0)
            }
        }
    }
}

/// Lower Cholesky factor of the equicorrelated base covariance
/// (unit diagonal, 0.5 elsewhere).
fn equicorrelated_factor(p: usize) -> DMatrix<f64> {
    let sigma = DMatrix::from_fn(p, p, |i, j| if i == j { 1.0 } else { 0.5 });
    Cholesky::new(sigma)
        .expect("equicorrelated matrix with 0.5 off-diagonal is positive definite")
        .unpack()
}

/// Generate an `n x p` design matrix row by row.
pub fn gen_design<R: Rng + ?Sized>(
    kind: DesignKind,
    n: usize,
    p: usize,
    rng: &mut R,
) -> Result<DMatrix<f64>> {
    if n == 0 || p == 0 {
        return Err(Error::IncompatibleScenario(format!(
            "need n >= 1 and p >= 1, got n = {n}, p = {p}"
        )));
    }
    let mut x = DMatrix::zeros(n, p);
    match kind {
        DesignKind::MzNormal | DesignKind::NzNormal | DesignKind::UnNormal
        | DesignKind::MixNormal => {
            let l = equicorrelated_factor(p);
            for i in 0..n {
                let z = DVector::from_fn(p, |_, _| rng.sample::<f64, _>(StandardNormal));
                let mut row = &l * z;
                match kind {
                    DesignKind::MzNormal => {}
                    DesignKind::NzNormal => row.add_scalar_mut(0.5),
                    DesignKind::UnNormal => {
                        for k in 0..p {
                            row[k] /= (k + 1) as f64;
                        }
                    }
                    DesignKind::MixNormal => {
                        let shift = if rng.random::<bool>() { 0.5 } else { -0.5 };
                        row.add_scalar_mut(shift);
                    }
                    _ => unreachable!(),
                }
                x.row_mut(i).tr_copy_from(&row);
            }
        }
        DesignKind::Ga | DesignKind::T1 | DesignKind::T3 | DesignKind::T9 => {
            let l = equicorrelated_factor(p);
            let dof = match kind {
                DesignKind::T1 => Some(1.0),
                DesignKind::T3 => Some(3.0),
                DesignKind::T9 => Some(9.0),
                _ => None,
            };
            let chi = dof.map(|nu| ChiSquared::new(nu).expect("fixed degrees of freedom"));
            for i in 0..n {
                let z = DVector::from_fn(p, |_, _| rng.sample::<f64, _>(StandardNormal));
                let mut row = &l * z;
                for k in 0..p {
                    row[k] *= 5.0 / (k + 1) as f64;
                }
                match chi {
                    None => row.add_scalar_mut(1.0),
                    Some(c) => {
                        let w: f64 = rng.sample(c);
                        let scale = (dof.unwrap() / w).sqrt();
                        row.scale_mut(scale);
                    }
                }
                x.row_mut(i).tr_copy_from(&row);
            }
        }
        DesignKind::UnifCase1 | DesignKind::UnifCase2 => {
            for i in 0..n {
                let wide = kind == DesignKind::UnifCase2 && i >= n / 2;
                for j in 0..p {
                    x[(i, j)] = if wide {
                        rng.random_range(-1.0..1.0)
                    } else {
                        rng.random_range(-0.5..0.5)
                    };
                }
            }
        }
    }
    Ok(x)
}

/// Simulate responses for a design under the family's canonical model.
pub fn gen_responses<R: Rng + ?Sized>(
    family: Family,
    x: &DMatrix<f64>,
    beta0: &DVector<f64>,
    noise_sd: f64,
    rng: &mut R,
) -> Result<DVector<f64>> {
    if beta0.len() != x.ncols() {
        return Err(Error::DimensionMismatch(format!(
            "{} columns vs beta0 of length {}",
            x.ncols(),
            beta0.len()
        )));
    }
    let theta = x * beta0;
    let n = x.nrows();
    let mut y = DVector::zeros(n);
    for i in 0..n {
        y[i] = match family {
            Family::Linear => theta[i] + noise_sd * rng.sample::<f64, _>(StandardNormal),
            Family::Logistic => {
                let pr = family.cumulant(theta[i])?.mean;
                if rng.random::<f64>() < pr {
                    1.0
                } else {
                    0.0
                }
            }
            Family::Poisson => {
                let lambda = family.cumulant(theta[i])?.mean;
                let dist = Poisson::new(lambda).map_err(|_| Error::Overflow { theta: theta[i] })?;
                rng.sample::<f64, _>(dist)
            }
        };
    }
    Ok(y)
}

/// Generate one replication of a scenario: the dataset plus the true
/// coefficients. The data stream is derived from `(spec.seed, replication)`
/// and is independent of every method's sampling stream.
pub fn gen_scenario(spec: &ScenarioSpec, replication: usize) -> Result<(Dataset, DVector<f64>)> {
    spec.validate()?;
    let mut rng = stream_rng(spec.seed, replication, LANE_DATA);
    let x = gen_design(spec.design, spec.n, spec.p, &mut rng)?;
    let beta0 = spec.resolved_beta0();
    let y = gen_responses(spec.family, &x, &beta0, spec.resolved_noise_sd(), &mut rng)?;
    Ok((Dataset::fully_observed(x, y)?, beta0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand_chacha::rand_core::SeedableRng;

    use crate::rng::StreamRng;

    fn sample_moments(x: &DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
        let n = x.nrows() as f64;
        let mean = x.row_sum().transpose() / n;
        let mut centered = x.clone();
        for mut row in centered.row_iter_mut() {
            row -= mean.transpose();
        }
        let cov = centered.tr_mul(&centered) / (n - 1.0);
        (mean, cov)
    }

    #[test]
    fn generation_is_deterministic_per_replication() {
        let spec = ScenarioSpec::new(DesignKind::MzNormal, 50, 3, 99);
        let (a, _) = gen_scenario(&spec, 7).unwrap();
        let (b, _) = gen_scenario(&spec, 7).unwrap();
        let (c, _) = gen_scenario(&spec, 8).unwrap();
        assert_eq!(a.x(), b.x());
        assert_eq!(
            a.full_responses().unwrap(),
            b.full_responses().unwrap()
        );
        assert_ne!(a.x(), c.x());
    }

    #[test]
    fn mz_normal_matches_equicorrelated_moments() {
        let mut rng = StreamRng::seed_from_u64(1);
        let x = gen_design(DesignKind::MzNormal, 20000, 4, &mut rng).unwrap();
        let (mean, cov) = sample_moments(&x);
        for k in 0..4 {
            assert!(mean[k].abs() < 0.05, "mean {k}: {}", mean[k]);
            assert!((cov[(k, k)] - 1.0).abs() < 0.06, "var {k}: {}", cov[(k, k)]);
        }
        for i in 0..4 {
            for j in 0..i {
                assert!(
                    (cov[(i, j)] - 0.5).abs() < 0.05,
                    "cov {i}{j}: {}",
                    cov[(i, j)]
                );
            }
        }
    }

    #[test]
    fn nz_normal_shifts_the_mean() {
        let mut rng = StreamRng::seed_from_u64(2);
        let x = gen_design(DesignKind::NzNormal, 20000, 3, &mut rng).unwrap();
        let (mean, _) = sample_moments(&x);
        for k in 0..3 {
            assert!((mean[k] - 0.5).abs() < 0.05, "mean {k}: {}", mean[k]);
        }
    }

    #[test]
    fn un_normal_shrinks_later_columns() {
        let mut rng = StreamRng::seed_from_u64(3);
        let x = gen_design(DesignKind::UnNormal, 20000, 4, &mut rng).unwrap();
        let (_, cov) = sample_moments(&x);
        for k in 0..4 {
            let want = 1.0 / ((k + 1) as f64).powi(2);
            assert_relative_eq!(cov[(k, k)], want, max_relative = 0.1);
        }
    }

    #[test]
    fn mix_normal_inflates_the_covariance_by_the_shift() {
        // Var = Sigma + 0.25 * ones: diagonal 1.25, off-diagonal 0.75.
        let mut rng = StreamRng::seed_from_u64(4);
        let x = gen_design(DesignKind::MixNormal, 20000, 3, &mut rng).unwrap();
        let (mean, cov) = sample_moments(&x);
        for k in 0..3 {
            assert!(mean[k].abs() < 0.05);
            assert!((cov[(k, k)] - 1.25).abs() < 0.07, "var {k}: {}", cov[(k, k)]);
        }
        assert!((cov[(1, 0)] - 0.75).abs() < 0.06);
    }

    #[test]
    fn ga_design_centers_at_one_with_rescaled_columns() {
        let mut rng = StreamRng::seed_from_u64(5);
        let x = gen_design(DesignKind::Ga, 20000, 3, &mut rng).unwrap();
        let (mean, cov) = sample_moments(&x);
        for k in 0..3 {
            assert!((mean[k] - 1.0).abs() < 0.15, "mean {k}: {}", mean[k]);
            let want = 25.0 / ((k + 1) as f64).powi(2);
            assert_relative_eq!(cov[(k, k)], want, max_relative = 0.12);
        }
    }

    #[test]
    fn t_designs_have_the_right_spread_and_tails() {
        // Median |x| of a t-variate with scale 5: the Cauchy case sits near
        // 5, heavier concentration as the degrees of freedom grow.
        let median_abs_col0 = |kind, seed| {
            let mut rng = StreamRng::seed_from_u64(seed);
            let x = gen_design(kind, 20000, 2, &mut rng).unwrap();
            let mut v: Vec<f64> = x.column(0).iter().map(|a| a.abs()).collect();
            v.sort_by(|a, b| a.partial_cmp(b).unwrap());
            v[10000]
        };
        let m1 = median_abs_col0(DesignKind::T1, 6);
        assert!((4.2..=5.8).contains(&m1), "T1 median {m1}");
        let m3 = median_abs_col0(DesignKind::T3, 7);
        assert!((3.0..=4.6).contains(&m3), "T3 median {m3}");
        let m9 = median_abs_col0(DesignKind::T9, 8);
        assert!((2.9..=4.2).contains(&m9), "T9 median {m9}");
        // Tail ordering: the 1-dof design produces far wilder extremes.
        let extreme = |kind, seed| {
            let mut rng = StreamRng::seed_from_u64(seed);
            let x = gen_design(kind, 20000, 2, &mut rng).unwrap();
            x.column(0).amax()
        };
        assert!(extreme(DesignKind::T1, 9) > 10.0 * extreme(DesignKind::T9, 9));
    }

    #[test]
    fn uniform_cases_cover_their_ranges() {
        let mut rng = StreamRng::seed_from_u64(10);
        let x1 = gen_design(DesignKind::UnifCase1, 10000, 3, &mut rng).unwrap();
        assert!(x1.iter().all(|&v| (-0.5..0.5).contains(&v)));

        let x2 = gen_design(DesignKind::UnifCase2, 10000, 3, &mut rng).unwrap();
        let top = x2.rows(0, 5000).iter().fold(0.0f64, |m, &v| m.max(v.abs()));
        let bottom = x2.rows(5000, 5000).iter().fold(0.0f64, |m, &v| m.max(v.abs()));
        assert!(top <= 0.5);
        assert!(bottom > 0.5, "second half must use the wider range");
        // Variance ratio approximately (1/3) / (1/12) = 4.
        let var = |m: &DMatrix<f64>| {
            let (_, c) = sample_moments(m);
            c[(0, 0)]
        };
        let narrow = var(&x2.rows(0, 5000).clone_owned());
        let wide = var(&x2.rows(5000, 5000).clone_owned());
        assert!(wide / narrow > 2.5, "ratio {}", wide / narrow);
    }

    #[test]
    fn responses_follow_each_family() {
        let mut rng = StreamRng::seed_from_u64(11);
        let x = gen_design(DesignKind::MzNormal, 20000, 3, &mut rng).unwrap();
        let beta = DVector::from_element(3, 0.5);

        let y_log = gen_responses(Family::Logistic, &x, &beta, 0.0, &mut rng).unwrap();
        assert!(y_log.iter().all(|&v| v == 0.0 || v == 1.0));
        let want_rate: f64 = (&x * &beta)
            .iter()
            .map(|&t| 1.0 / (1.0 + (-t).exp()))
            .sum::<f64>()
            / 20000.0;
        assert!((y_log.mean() - want_rate).abs() < 0.02);

        let y_lin = gen_responses(Family::Linear, &x, &beta, 3.0, &mut rng).unwrap();
        let resid = &y_lin - &x * &beta;
        let sd = (resid.norm_squared() / 19999.0).sqrt();
        assert!((sd - 3.0).abs() < 0.1, "noise sd {sd}");

        let mut rng_p = StreamRng::seed_from_u64(12);
        let xp = gen_design(DesignKind::UnifCase1, 20000, 3, &mut rng_p).unwrap();
        let y_poi = gen_responses(Family::Poisson, &xp, &beta, 0.0, &mut rng_p).unwrap();
        assert!(y_poi.iter().all(|&v| v >= 0.0 && v.fract() == 0.0));
        let want_mean: f64 =
            (&xp * &beta).iter().map(|&t| t.exp()).sum::<f64>() / 20000.0;
        assert_relative_eq!(y_poi.mean(), want_mean, max_relative = 0.05);
    }

    #[test]
    fn incompatible_family_design_pairs_are_rejected() {
        let mut spec = ScenarioSpec::new(DesignKind::Ga, 100, 3, 1);
        spec.family = Family::Logistic;
        let err = gen_scenario(&spec, 0).unwrap_err();
        assert!(matches!(err, Error::IncompatibleScenario(_)), "{err:?}");

        let mut bad_beta = ScenarioSpec::new(DesignKind::MzNormal, 100, 3, 1);
        bad_beta.beta0 = Some(DVector::zeros(5));
        assert!(gen_scenario(&bad_beta, 0).is_err());
    }

    #[test]
    fn default_coefficients_have_the_block_structure() {
        let b = default_beta0(Family::Linear, 50);
        assert_eq!(b.iter().filter(|&&v| v == 10.0).count(), 40);
        assert_eq!(b.iter().filter(|&&v| v == 0.1).count(), 10);
        assert_eq!(b[0], 0.1);
        assert_eq!(b[5], 10.0);
        assert_eq!(b[44], 10.0);
        assert_eq!(b[45], 0.1);
        assert_eq!(default_beta0(Family::Logistic, 4), DVector::from_element(4, 1.0));
        assert_eq!(default_beta0(Family::Poisson, 4), DVector::from_element(4, 0.5));
    }

    #[test]
    fn design_names_round_trip() {
        for kind in [
            DesignKind::MzNormal,
            DesignKind::NzNormal,
            DesignKind::UnNormal,
            DesignKind::MixNormal,
            DesignKind::Ga,
            DesignKind::T1,
            DesignKind::T3,
            DesignKind::T9,
            DesignKind::UnifCase1,
            DesignKind::UnifCase2,
        ] {
            assert_eq!(DesignKind::parse(kind.name()).unwrap(), kind);
        }
        assert!(DesignKind::parse("nope").is_err());
    }
}
