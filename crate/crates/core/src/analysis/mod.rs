//! Closed-form fork and block-time statistics with Monte Carlo
//! counterparts. Time is measured in units of the target block time.
//!
//! Everything here is generic over [`num_traits::Float`]; the crate root
//! re-exports `f64` instances.

mod montecarlo;
mod series;

use std::collections::BTreeMap;

use num_traits::Float;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use montecarlo::{
    blocktime_montecarlo, fork_prob_montecarlo, ks_distance, BlockTimeSample, Estimate,
};
pub use series::{blocktime_series, fork_series, write_series_csv, SeriesPoint};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnalysisError {
    #[error("creation rate must be positive and finite")]
    Lambda,
    #[error("delay must be non-negative and finite")]
    Delay,
    #[error("need at least one miniblock per block")]
    ZeroN,
    #[error("need at least one sample")]
    ZeroSamples,
    #[error("total computation power must be positive")]
    NoPower,
    #[error("computation power must be non-negative and finite")]
    BadPower,
}

/// How the creation rate of a fork computation is chosen.
#[derive(Clone, Copy, PartialEq, Eq, Debug, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RateConvention {
    /// Use `lambda` as given.
    #[default]
    AsGiven,
    /// Every miniblock has creation rate `N`, the rate at which a block of
    /// `N` miniblocks still takes one block time on average.
    EqualsN,
}

#[derive(Clone, Copy, PartialEq, Debug, Serialize, Deserialize)]
pub struct AnalysisParams<F> {
    /// Per-node creation rate, in events per block time.
    pub lambda: F,
    /// Delay between the two nodes, in block times.
    pub d: F,
    /// Miniblocks per block.
    pub n: u32,
    /// Monte Carlo trials.
    pub samples: u64,
    #[serde(default)]
    pub convention: RateConvention,
}

impl<F: Float> AnalysisParams<F> {
    pub fn validate(&self) -> Result<(), AnalysisError> {
        if !(self.lambda.is_finite() && self.lambda > F::zero()) {
            return Err(AnalysisError::Lambda);
        }
        if !(self.d.is_finite() && self.d >= F::zero()) {
            return Err(AnalysisError::Delay);
        }
        if self.n == 0 {
            return Err(AnalysisError::ZeroN);
        }
        if self.samples == 0 {
            return Err(AnalysisError::ZeroSamples);
        }
        Ok(())
    }

    /// Creation rate after applying the convention.
    pub fn rate(&self) -> F {
        match self.convention {
            RateConvention::AsGiven => self.lambda,
            RateConvention::EqualsN => cast(self.n),
        }
    }
}

pub(crate) fn cast<F: Float, T: num_traits::ToPrimitive>(x: T) -> F {
    F::from(x).expect("representable")
}

/// Probability that a block is followed by a fork lasting all `n` of its
/// miniblock slots between two nodes at delay `d`: per slot, one node
/// creates nothing within `d` while the other creates exactly one.
pub fn fork_prob_analytic<F: Float>(p: &AnalysisParams<F>) -> F {
    let ld = p.rate() * p.d;
    let e = (-ld).exp();
    (e * e * ld).powi(p.n as i32)
}

/// Probability that `n` or more miniblocks exist after time `t`, when
/// miniblocks arrive as a Poisson process of rate `n`.
pub fn blocktime_cdf<F: Float>(n: u32, t: F) -> F {
    assert!(n >= 1, "n must be positive");
    if t <= F::zero() {
        return F::zero();
    }
    if t.is_infinite() {
        return F::one();
    }
    let x = cast::<F, _>(n) * t;
    let ln_x = x.ln();
    let mut acc = Accumulator::new(n > 64);
    // Poisson(x) terms are built in log space so that large x does not
    // underflow e^{-x} before multiplying.
    if x < cast(n) {
        // Upper tail {n, n+1, ..} directly: small values keep full precision.
        let ln_fact = (1..=n).fold(F::zero(), |a, i| a + cast::<F, _>(i).ln());
        let mut term = (-x + cast::<F, _>(n) * ln_x - ln_fact).exp();
        let mut i = n;
        while term > F::zero() && term > acc.sum() * F::epsilon() {
            acc.add(term);
            i += 1;
            term = term * x / cast(i);
        }
        acc.sum().min(F::one())
    } else {
        let mut log_term = -x;
        for i in 0..n {
            if i > 0 {
                log_term = log_term + ln_x - cast::<F, _>(i).ln();
            }
            acc.add(log_term.exp());
        }
        (F::one() - acc.sum()).max(F::zero())
    }
}

/// Plain or Kahan-compensated running sum.
struct Accumulator<F> {
    sum: F,
    comp: F,
    compensated: bool,
}

impl<F: Float> Accumulator<F> {
    fn new(compensated: bool) -> Self {
        Accumulator {
            sum: F::zero(),
            comp: F::zero(),
            compensated,
        }
    }

    fn add(&mut self, v: F) {
        if self.compensated {
            let y = v - self.comp;
            let s = self.sum + y;
            self.comp = (s - self.sum) - y;
            self.sum = s;
        } else {
            self.sum = self.sum + v;
        }
    }

    fn sum(&self) -> F {
        self.sum
    }
}

#[derive(Clone, Copy, PartialEq, Debug, Serialize)]
pub struct Moments<F> {
    pub mean: F,
    pub variance: F,
}

/// Mean and variance of the block time: the sum of `n` exponential gaps of
/// rate `n`.
pub fn blocktime_moments<F: Float>(n: u32) -> Moments<F> {
    assert!(n >= 1, "n must be positive");
    Moments {
        mean: F::one(),
        variance: F::one() / cast(n),
    }
}

/// Chance of each node to find a slot's miniblock: its share of the
/// computation spent on the slot.
pub fn winning_probability<K: Ord + Clone, F: Float>(
    power: &BTreeMap<K, F>,
) -> Result<BTreeMap<K, F>, AnalysisError> {
    if power.values().any(|p| !p.is_finite() || *p < F::zero()) {
        return Err(AnalysisError::BadPower);
    }
    let total = power.values().fold(F::zero(), |a, &b| a + b);
    if total <= F::zero() {
        return Err(AnalysisError::NoPower);
    }
    Ok(power.iter().map(|(k, &p)| (k.clone(), p / total)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(lambda: f64, d: f64, n: u32) -> AnalysisParams<f64> {
        AnalysisParams {
            lambda,
            d,
            n,
            samples: 1,
            convention: RateConvention::AsGiven,
        }
    }

    #[test]
    fn fork_examples() {
        assert!((fork_prob_analytic(&params(1.0, 0.1, 1)) - 0.1 * (-0.2f64).exp()).abs() < 1e-15);
        assert!((fork_prob_analytic(&params(1.0, 0.1, 1)) - 0.0818731).abs() < 1e-7);
        assert_eq!(fork_prob_analytic(&params(3.0, 0.0, 4)), 0.0);
        let p = AnalysisParams {
            convention: RateConvention::EqualsN,
            ..params(1.0, 0.1, 2)
        };
        assert!((fork_prob_analytic(&p) - 0.0179732).abs() < 1e-7);
    }

    #[test]
    fn cdf_examples() {
        assert!((blocktime_cdf(1, 1.0f64) - 0.632121).abs() < 1e-6);
        assert!((blocktime_cdf(4, 1.0f64) - 0.566530).abs() < 1e-6);
        assert_eq!(blocktime_cdf(7, 0.0f64), 0.0);
        assert!((blocktime_cdf(1, 1.0f32) - 0.632121).abs() < 1e-6);
    }

    #[test]
    fn large_n_cdf_stays_in_range() {
        for &n in &[65u32, 200, 1000] {
            let mid = blocktime_cdf(n, 1.0f64);
            assert!(mid > 0.45 && mid < 0.55, "n={n}: {mid}");
            assert!((blocktime_cdf(n, 50.0f64) - 1.0).abs() < 1e-12);
            assert!(blocktime_cdf(n, 0.5f64) < 1e-6);
        }
    }

    #[test]
    fn moments_and_shares() {
        assert_eq!(blocktime_moments::<f64>(16).variance, 0.0625);
        assert_eq!(blocktime_moments::<f64>(1).mean, 1.0);
        let w = winning_probability(&BTreeMap::from([('a', 1.0), ('b', 2.0), ('c', 4.0)])).unwrap();
        assert!((w[&'a'] - 1.0 / 7.0).abs() < 1e-15);
        assert!((w[&'c'] - 4.0 / 7.0).abs() < 1e-15);
        assert_eq!(
            winning_probability(&BTreeMap::from([(1, 0.0f64)])),
            Err(AnalysisError::NoPower)
        );
    }
}
