//! Discovery-time distributions: summaries and 1-D earth mover's distance.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Uncensored discovery times plus a count of runs that never discovered.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalDistribution {
    samples: Vec<f64>,
    censored_count: usize,
}

impl EmpiricalDistribution {
    pub fn new(samples: Vec<f64>) -> Self {
        EmpiricalDistribution {
            samples,
            censored_count: 0,
        }
    }

    /// `None` entries are censored runs.
    pub fn from_outcomes(outcomes: impl IntoIterator<Item = Option<u64>>) -> Self {
        let mut d = Self::default();
        for outcome in outcomes {
            d.push(outcome);
        }
        d
    }

    pub fn push(&mut self, outcome: Option<u64>) {
        match outcome {
            Some(t) => self.samples.push(t as f64),
            None => self.censored_count += 1,
        }
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn censored_count(&self) -> usize {
        self.censored_count
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    fn sorted(&self) -> Result<Vec<f64>> {
        if self.samples.is_empty() {
            return Err(Error::EmptySamples);
        }
        let mut s = self.samples.clone();
        s.sort_by(f64::total_cmp);
        Ok(s)
    }
}

/// Wasserstein-1 distance between two empirical measures with uniform
/// weights, computed as the integral of `|F - G|` over the merged support.
pub fn emd_1d(f: &EmpiricalDistribution, g: &EmpiricalDistribution) -> Result<f64> {
    let xs = f.sorted()?;
    let ys = g.sorted()?;
    let (m, k) = (xs.len() as f64, ys.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut total = 0.0;
    let mut last = xs[0].min(ys[0]);
    while i < xs.len() || j < ys.len() {
        let next = match (xs.get(i), ys.get(j)) {
            (Some(&x), Some(&y)) => x.min(y),
            (Some(&x), None) => x,
            (None, Some(&y)) => y,
            (None, None) => unreachable!(),
        };
        total += (i as f64 / m - j as f64 / k).abs() * (next - last);
        while i < xs.len() && xs[i] == next {
            i += 1;
        }
        while j < ys.len() && ys[j] == next {
            j += 1;
        }
        last = next;
    }
    Ok(total)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    pub median: f64,
    pub q1: f64,
    pub q3: f64,
    pub min: f64,
    pub max: f64,
    pub count: usize,
    pub censored_count: usize,
}

/// Quantile by linear interpolation between order statistics at
/// `p * (n - 1)`; the median of an even count is the midpoint.
pub fn quantile(sorted: &[f64], p: f64) -> f64 {
    let pos = p * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

pub fn summarize(d: &EmpiricalDistribution) -> Result<Summary> {
    let s = d.sorted()?;
    Ok(Summary {
        mean: s.iter().sum::<f64>() / s.len() as f64,
        median: quantile(&s, 0.5),
        q1: quantile(&s, 0.25),
        q3: quantile(&s, 0.75),
        min: s[0],
        max: s[s.len() - 1],
        count: s.len(),
        censored_count: d.censored_count,
    })
}

pub fn mean(xs: &[f64]) -> Result<f64> {
    if xs.is_empty() {
        return Err(Error::EmptySamples);
    }
    Ok(xs.iter().sum::<f64>() / xs.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Exp};

    fn dist(xs: &[f64]) -> EmpiricalDistribution {
        EmpiricalDistribution::new(xs.to_vec())
    }

    #[test]
    fn emd_examples() {
        assert_eq!(emd_1d(&dist(&[3.0, 1.0, 2.0]), &dist(&[1.0, 2.0, 3.0])).unwrap(), 0.0);
        assert_eq!(emd_1d(&dist(&[0.0]), &dist(&[5.0])).unwrap(), 5.0);
        assert!((emd_1d(&dist(&[1.0, 2.0, 3.0]), &dist(&[2.0, 3.0, 4.0])).unwrap() - 1.0).abs() < 1e-12);
        // Half the mass of {0, 2} moves one unit to reach {1}.
        assert!((emd_1d(&dist(&[0.0, 2.0]), &dist(&[1.0])).unwrap() - 1.0).abs() < 1e-12);
        assert!(matches!(emd_1d(&dist(&[]), &dist(&[1.0])), Err(Error::EmptySamples)));
    }

    #[test]
    fn summary_examples() {
        let s = summarize(&dist(&[4.0, 1.0, 3.0, 2.0])).unwrap();
        assert_eq!((s.mean, s.median, s.min, s.max, s.count), (2.5, 2.5, 1.0, 4.0, 4));
        assert_eq!((s.q1, s.q3), (1.75, 3.25));
        let one = summarize(&dist(&[7.0])).unwrap();
        assert_eq!([one.mean, one.median, one.q1, one.q3, one.min, one.max], [7.0; 6]);
        assert!(summarize(&dist(&[])).is_err());
    }

    #[test]
    fn censored_outcomes_are_counted_separately() {
        let d = EmpiricalDistribution::from_outcomes([Some(3), None, Some(5), None]);
        assert_eq!(d.samples(), &[3.0, 5.0]);
        assert_eq!(d.censored_count(), 2);
        assert_eq!(summarize(&d).unwrap().censored_count, 2);
        assert!(summarize(&EmpiricalDistribution::from_outcomes([None])).is_err());
    }

    #[test]
    fn exponential_mean_sanity() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let exp = Exp::new(1.0).unwrap();
        let xs: Vec<f64> = (0..10_000).map(|_| exp.sample(&mut rng)).collect();
        let s = summarize(&dist(&xs)).unwrap();
        // Standard error of the mean is 1/sqrt(n).
        assert!((s.mean - 1.0).abs() < 3.0 / 100.0, "mean {}", s.mean);
    }

    fn samples(len: usize) -> impl Strategy<Value = Vec<f64>> {
        proptest::collection::vec(-50.0f64..50.0, len)
    }

    proptest! {
        #[test]
        fn equal_sizes_match_sorted_pairing(
            (a, b) in (1usize..20).prop_flat_map(|n| (samples(n), samples(n)))
        ) {
            let mut sa = a.clone();
            let mut sb = b.clone();
            sa.sort_by(f64::total_cmp);
            sb.sort_by(f64::total_cmp);
            let paired = sa.iter().zip(&sb).map(|(x, y)| (x - y).abs()).sum::<f64>() / sa.len() as f64;
            let emd = emd_1d(&dist(&a), &dist(&b)).unwrap();
            prop_assert!((emd - paired).abs() < 1e-9 * (1.0 + paired));
        }

        #[test]
        fn translation_behavior(a in samples(6), b in samples(4), t in -20.0f64..20.0) {
            let shift = |xs: &[f64], t: f64| xs.iter().map(|x| x + t).collect::<Vec<_>>();
            let base = emd_1d(&dist(&a), &dist(&b)).unwrap();
            let both = emd_1d(&dist(&shift(&a, t)), &dist(&shift(&b, t))).unwrap();
            prop_assert!((base - both).abs() < 1e-9);
            // Disjoint ordered supports: moving the upper set up by |t| adds |t|.
            let lo: Vec<f64> = a.iter().map(|x| x - 100.0).collect();
            let hi: Vec<f64> = b.iter().map(|x| x + 100.0).collect();
            let d0 = emd_1d(&dist(&lo), &dist(&hi)).unwrap();
            let d1 = emd_1d(&dist(&lo), &dist(&shift(&hi, t.abs()))).unwrap();
            prop_assert!((d1 - d0 - t.abs()).abs() < 1e-9);
        }
    }
}
