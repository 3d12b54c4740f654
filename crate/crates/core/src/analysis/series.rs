use std::io::Write;

use num_traits::Float;
use rand_distr::{Distribution, Exp1};
use serde::Serialize;

use super::{
    blocktime_cdf, blocktime_montecarlo, fork_prob_analytic, fork_prob_montecarlo, AnalysisError,
    AnalysisParams, RateConvention,
};

/// One row of a comparison table. Monte Carlo columns are absent when the
/// table was built with zero samples.
#[derive(Clone, Copy, PartialEq, Debug, Serialize)]
pub struct SeriesPoint<F> {
    pub n: u32,
    pub x: F,
    pub analytic: F,
    pub montecarlo: Option<F>,
    pub stderr: Option<F>,
}

impl<F: Float> SeriesPoint<F> {
    pub fn deviation(&self) -> Option<F> {
        self.montecarlo.map(|m| (m - self.analytic).abs())
    }
}

fn replicate_seed(seed: u64, series: usize, point: usize) -> u64 {
    seed ^ ((series as u64) << 32 | point as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15)
}

/// Fork probability against delay for each `n`, under the `λ = N`
/// convention.
pub fn fork_series<F>(
    ds: &[F],
    ns: &[u32],
    samples: u64,
    seed: u64,
) -> Result<Vec<SeriesPoint<F>>, AnalysisError>
where
    F: Float,
    Exp1: Distribution<F>,
{
    let mut out = Vec::new();
    for (si, &n) in ns.iter().enumerate() {
        for (pi, &d) in ds.iter().enumerate() {
            let p = AnalysisParams {
                lambda: F::one(),
                d,
                n,
                samples: samples.max(1),
                convention: RateConvention::EqualsN,
            };
            p.validate()?;
            let mc = if samples > 0 {
                Some(fork_prob_montecarlo(&p, replicate_seed(seed, si, pi))?)
            } else {
                None
            };
            out.push(SeriesPoint {
                n,
                x: d,
                analytic: fork_prob_analytic(&p),
                montecarlo: mc.map(|e| e.estimate),
                stderr: mc.map(|e| e.stderr),
            });
        }
    }
    Ok(out)
}

/// Block-time CDF against time for each `n`. The Monte Carlo column is the
/// empirical CDF of `samples` simulated blocks, one sample set per `n`.
pub fn blocktime_series<F>(
    ts: &[F],
    ns: &[u32],
    samples: u64,
    seed: u64,
) -> Result<Vec<SeriesPoint<F>>, AnalysisError>
where
    F: Float,
    Exp1: Distribution<F>,
{
    let mut out = Vec::new();
    for (si, &n) in ns.iter().enumerate() {
        if n == 0 {
            return Err(AnalysisError::ZeroN);
        }
        let sample = if samples > 0 {
            Some(blocktime_montecarlo::<F>(
                n,
                samples,
                replicate_seed(seed, si, 0),
            )?)
        } else {
            None
        };
        for &t in ts {
            let mc = sample.as_ref().map(|s| s.ecdf(t));
            let m: F = super::cast(samples.max(1));
            out.push(SeriesPoint {
                n,
                x: t,
                analytic: blocktime_cdf(n, t),
                montecarlo: mc,
                stderr: mc.map(|p| (p * (F::one() - p) / m).sqrt()),
            });
        }
    }
    Ok(out)
}

/// Writes `n,x,analytic,montecarlo,stderr` rows; absent values are empty.
pub fn write_series_csv<F: Float + std::fmt::Display>(
    w: impl Write,
    points: &[SeriesPoint<F>],
) -> csv::Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["n", "x", "analytic", "montecarlo", "stderr"])?;
    let opt = |v: Option<F>| v.map(|v| v.to_string()).unwrap_or_default();
    for p in points {
        out.write_record([
            p.n.to_string(),
            p.x.to_string(),
            p.analytic.to_string(),
            opt(p.montecarlo),
            opt(p.stderr),
        ])?;
    }
    out.flush()?;
    Ok(())
}
