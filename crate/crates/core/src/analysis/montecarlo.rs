use num_traits::Float;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1};
use serde::Serialize;

use super::{blocktime_cdf, cast, AnalysisError, AnalysisParams};

#[derive(Clone, Copy, PartialEq, Debug, Serialize)]
pub struct Estimate<F> {
    pub estimate: F,
    /// Binomial standard error of `estimate`.
    pub stderr: F,
    pub samples: u64,
}

impl<F: Float> Estimate<F> {
    fn binomial(hits: u64, samples: u64) -> Estimate<F> {
        let n: F = cast(samples);
        let p = cast::<F, _>(hits) / n;
        Estimate {
            estimate: p,
            stderr: (p * (F::one() - p) / n).sqrt(),
            samples,
        }
    }

    /// Whether `value` lies within `k` standard errors of the estimate.
    pub fn agrees_with(&self, value: F, k: F) -> bool {
        (self.estimate - value).abs() <= k * self.stderr
    }
}

/// Two nodes A and B race for each of a block's `n` slots, each creating
/// miniblocks as a Poisson process. A slot forks when A creates nothing
/// within `d` and B creates exactly one; a trial counts when all `n` slots
/// fork in succession.
pub fn fork_prob_montecarlo<F>(
    p: &AnalysisParams<F>,
    seed: u64,
) -> Result<Estimate<F>, AnalysisError>
where
    F: Float,
    Exp1: Distribution<F>,
{
    p.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rate = p.rate();
    let mut draw = || Exp1.sample(&mut rng) / rate;
    let mut hits = 0u64;
    for _ in 0..p.samples {
        let mut all = true;
        for _ in 0..p.n {
            let a = draw();
            let b = draw();
            let fork = a > p.d && b < p.d && b + draw() >= p.d;
            if !fork {
                all = false;
                break;
            }
        }
        hits += all as u64;
    }
    Ok(Estimate::binomial(hits, p.samples))
}

/// Simulated block times.
#[derive(Clone, PartialEq, Debug)]
pub struct BlockTimeSample<F> {
    pub n: u32,
    pub times: Vec<F>,
}

impl<F: Float> BlockTimeSample<F> {
    pub fn mean(&self) -> F {
        self.times.iter().fold(F::zero(), |a, &b| a + b) / cast(self.times.len())
    }

    /// Unbiased sample variance.
    pub fn variance(&self) -> F {
        let m = self.mean();
        let ss = self
            .times
            .iter()
            .fold(F::zero(), |a, &b| a + (b - m) * (b - m));
        ss / cast(self.times.len().saturating_sub(1).max(1))
    }

    /// Kolmogorov-Smirnov distance to [`blocktime_cdf`].
    pub fn ks(&self) -> F {
        ks_distance(&self.times, |t| blocktime_cdf(self.n, t))
    }

    /// Fraction of blocks completed within `t`.
    pub fn ecdf(&self, t: F) -> F {
        cast::<F, _>(self.times.iter().filter(|&&x| x <= t).count()) / cast(self.times.len())
    }
}

/// Block times when `n` miniblocks must exist and miniblocks arrive at
/// total rate `n` per block time.
pub fn blocktime_montecarlo<F>(
    n: u32,
    samples: u64,
    seed: u64,
) -> Result<BlockTimeSample<F>, AnalysisError>
where
    F: Float,
    Exp1: Distribution<F>,
{
    if n == 0 {
        return Err(AnalysisError::ZeroN);
    }
    if samples == 0 {
        return Err(AnalysisError::ZeroSamples);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rate: F = cast(n);
    let times = (0..samples)
        .map(|_| (0..n).fold(F::zero(), |t, _| t + Exp1.sample(&mut rng) / rate))
        .collect();
    Ok(BlockTimeSample { n, times })
}

/// Largest gap between the empirical CDF of `samples` and `cdf`.
pub fn ks_distance<F: Float>(samples: &[F], cdf: impl Fn(F) -> F) -> F {
    let mut xs = samples.to_vec();
    xs.sort_by(|a, b| a.partial_cmp(b).expect("no NaN samples"));
    let m: F = cast(xs.len());
    xs.iter().enumerate().fold(F::zero(), |d, (i, &x)| {
        let c = cdf(x);
        let lo = cast::<F, _>(i) / m;
        let hi = cast::<F, _>(i + 1) / m;
        d.max((c - lo).abs()).max((hi - c).abs())
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::{fork_prob_analytic, RateConvention};

    #[test]
    fn zero_delay_never_forks() {
        let p = AnalysisParams {
            lambda: 1.0f64,
            d: 0.0,
            n: 1,
            samples: 10_000,
            convention: RateConvention::AsGiven,
        };
        assert_eq!(fork_prob_montecarlo(&p, 1).unwrap().estimate, 0.0);
    }

    #[test]
    fn single_slot_matches_closed_form() {
        let p = AnalysisParams {
            lambda: 1.0f64,
            d: 0.1,
            n: 1,
            samples: 100_000,
            convention: RateConvention::AsGiven,
        };
        let e = fork_prob_montecarlo(&p, 42).unwrap();
        assert!(e.agrees_with(fork_prob_analytic(&p), 3.0), "{e:?}");
    }

    #[test]
    fn ks_of_exact_quantiles_is_small() {
        let xs: Vec<f64> = (0..1000).map(|i| (i as f64 + 0.5) / 1000.0).collect();
        assert!(ks_distance(&xs, |x| x.clamp(0.0, 1.0)) <= 0.0005 + 1e-12);
    }
}
