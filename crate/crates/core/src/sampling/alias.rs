//! Alias-method sampling with replacement: O(n) table construction, O(1) per
//! draw, two generator values per draw (cell index + acceptance coin).

use nalgebra::DVector;
use rand::{Rng, RngExt};

use crate::error::{Error, Result};

/// Walker/Vose alias table over a fixed discrete distribution.
#[derive(Clone, Debug)]
pub struct AliasTable {
    /// Acceptance probability of each cell, in [0, 1].
    prob: Vec<f64>,
    /// Where a rejected cell redirects.
    alias: Vec<usize>,
}

impl AliasTable {
    /// Build the table from (not necessarily normalized) nonnegative weights.
    pub fn new(weights: &DVector<f64>) -> Result<Self> {
        let n = weights.len();
        if n == 0 {
            return Err(Error::DegenerateWeights("empty weight vector".into()));
        }
        let total: f64 = weights.iter().sum();
        if !total.is_finite() || total <= 0.0 {
            return Err(Error::DegenerateWeights(format!(
                "weights sum to {total}, cannot normalize"
            )));
        }
        let mut first_positive = None;
        for (i, &w) in weights.iter().enumerate() {
            if !w.is_finite() || w < 0.0 {
                return Err(Error::DegenerateWeights(format!(
                    "weight {w} at index {i} is not a finite nonnegative number"
                )));
            }
            if w > 0.0 && first_positive.is_none() {
                first_positive = Some(i);
            }
        }
        let first_positive = first_positive.expect("total > 0 implies a positive weight");

        // Scale so the average cell mass is exactly 1, then rebalance
        // poor/rich cells until every cell holds mass from at most two
        // outcomes.
        let mut scaled: Vec<f64> = weights.iter().map(|&w| w * n as f64 / total).collect();
        let mut prob = vec![0.0f64; n];
        let mut alias = vec![0usize; n];
        let mut small: Vec<usize> = Vec::with_capacity(n);
        let mut large: Vec<usize> = Vec::with_capacity(n);
        for (i, &s) in scaled.iter().enumerate() {
            if s < 1.0 {
                small.push(i);
            } else {
                large.push(i);
            }
        }
        while let (Some(&s), Some(&l)) = (small.last(), large.last()) {
            small.pop();
            prob[s] = scaled[s];
            alias[s] = l;
            scaled[l] = (scaled[l] + scaled[s]) - 1.0;
            if scaled[l] < 1.0 {
                large.pop();
                small.push(l);
            }
        }
        // Leftovers hold mass 1 up to rounding. A true zero-weight cell can
        // mathematically never be stranded here, but guard it anyway so a
        // zero weight is *never* sampled regardless of rounding order.
        for &l in &large {
            prob[l] = 1.0;
        }
        for &s in &small {
            if weights[s] > 0.0 {
                prob[s] = 1.0;
            } else {
                prob[s] = 0.0;
                alias[s] = first_positive;
            }
        }
        Ok(AliasTable { prob, alias })
    }

    pub fn len(&self) -> usize {
        self.prob.len()
    }

    pub fn is_empty(&self) -> bool {
        self.prob.is_empty()
    }

    /// One draw: uniform cell, then accept or follow the alias.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let i = rng.random_range(0..self.len());
        if rng.random::<f64>() < self.prob[i] {
            i
        } else {
            self.alias[i]
        }
    }

    /// `r` draws with replacement.
    pub fn sample_many<R: Rng + ?Sized>(&self, r: usize, rng: &mut R) -> Vec<usize> {
        (0..r).map(|_| self.sample(rng)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_chacha::rand_core::SeedableRng;

    use crate::rng::StreamRng;

    /// Test-side oracle: inverse-CDF sampling via binary search on the
    /// cumulative weights.
    struct CumSampler {
        cdf: Vec<f64>,
    }

    impl CumSampler {
        fn new(weights: &DVector<f64>) -> Self {
            let total: f64 = weights.iter().sum();
            let mut acc = 0.0;
            let cdf = weights
                .iter()
                .map(|&w| {
                    acc += w / total;
                    acc
                })
                .collect();
            CumSampler { cdf }
        }

        fn sample<R: Rng>(&self, rng: &mut R) -> usize {
            let u: f64 = rng.random();
            self.cdf.partition_point(|&c| c < u).min(self.cdf.len() - 1)
        }
    }

    fn chi2_gof_statistic(counts: &[u64], probs: &[f64]) -> f64 {
        let total: u64 = counts.iter().sum();
        counts
            .iter()
            .zip(probs)
            .filter(|(_, &p)| p > 0.0)
            .map(|(&c, &p)| {
                let e = p * total as f64;
                (c as f64 - e).powi(2) / e
            })
            .sum()
    }

    #[test]
    fn frequencies_match_weights() {
        let w = DVector::from_vec(vec![0.2, 0.3, 0.5]);
        let table = AliasTable::new(&w).unwrap();
        let mut rng = StreamRng::seed_from_u64(1);
        let mut counts = [0u64; 3];
        let draws = 100_000;
        for _ in 0..draws {
            counts[table.sample(&mut rng)] += 1;
        }
        // Chi-square GOF with 2 degrees of freedom; 13.8 is the 0.999
        // quantile, and the seed is fixed, so this never flakes.
        let stat = chi2_gof_statistic(&counts, w.as_slice());
        assert!(stat < 13.8, "chi-square statistic {stat} too large: {counts:?}");
    }

    #[test]
    fn agrees_with_inverse_cdf_sampler_in_distribution() {
        // Two-sample chi-square across the support, alias draws vs
        // inverse-CDF draws from independent streams.
        let w = DVector::from_vec(vec![1.0, 4.0, 2.0, 8.0, 0.5, 4.5]);
        let table = AliasTable::new(&w).unwrap();
        let cum = CumSampler::new(&w);
        let mut rng_a = StreamRng::seed_from_u64(2);
        let mut rng_b = StreamRng::seed_from_u64(3);
        let draws = 50_000usize;
        let mut ca = [0f64; 6];
        let mut cb = [0f64; 6];
        for _ in 0..draws {
            ca[table.sample(&mut rng_a)] += 1.0;
            cb[cum.sample(&mut rng_b)] += 1.0;
        }
        let mut stat = 0.0;
        for k in 0..6 {
            let pooled = (ca[k] + cb[k]) / 2.0;
            stat += (ca[k] - pooled).powi(2) / pooled + (cb[k] - pooled).powi(2) / pooled;
        }
        // df = 5; 0.999 quantile is 20.5.
        assert!(stat < 20.5, "samplers disagree: stat {stat}, {ca:?} vs {cb:?}");
    }

    #[test]
    fn zero_weights_are_never_sampled() {
        let w = DVector::from_vec(vec![0.5, 0.0, 0.5, 0.0]);
        let table = AliasTable::new(&w).unwrap();
        let mut rng = StreamRng::seed_from_u64(4);
        for _ in 0..20_000 {
            let i = table.sample(&mut rng);
            assert!(i == 0 || i == 2, "sampled zero-weight index {i}");
        }
    }

    #[test]
    fn point_mass_always_returns_its_index() {
        let w = DVector::from_vec(vec![0.0, 1.0, 0.0]);
        let table = AliasTable::new(&w).unwrap();
        let mut rng = StreamRng::seed_from_u64(5);
        for _ in 0..1000 {
            assert_eq!(table.sample(&mut rng), 1);
        }
    }

    #[test]
    fn deterministic_under_fixed_seed() {
        let w = DVector::from_vec(vec![0.1, 0.2, 0.3, 0.4]);
        let table = AliasTable::new(&w).unwrap();
        let draw = |seed| {
            let mut rng = StreamRng::seed_from_u64(seed);
            table.sample_many(64, &mut rng)
        };
        assert_eq!(draw(42), draw(42));
        assert_ne!(draw(42), draw(43));
    }

    #[test]
    fn degenerate_weights_are_rejected() {
        assert!(AliasTable::new(&DVector::from_vec(vec![])).is_err());
        assert!(AliasTable::new(&DVector::from_vec(vec![0.0, 0.0])).is_err());
        assert!(AliasTable::new(&DVector::from_vec(vec![0.5, f64::NAN])).is_err());
        assert!(AliasTable::new(&DVector::from_vec(vec![0.5, -0.1])).is_err());
    }
}
