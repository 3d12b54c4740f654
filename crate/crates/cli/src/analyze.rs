use std::fs::File;
use std::io::BufWriter;
use std::path::PathBuf;

use anyhow::{anyhow, bail, Context};
use clap::Args;
use posearch::analysis::{blocktime_series, fork_series, write_series_csv, AnalysisError};
use posearch::SeriesPoint;

use crate::failure::{config, runtime, Failure};

#[derive(Args)]
pub struct ForkArgs {
    /// Delays in block times: `start:end:step`, a comma list, or one value.
    #[arg(long, default_value = "0:0.2:0.01")]
    pub d: String,
    /// Miniblocks per block, comma separated.
    #[arg(long, default_value = "1,2,4,8")]
    pub n: String,
    /// Monte Carlo trials per point; 0 prints closed forms only.
    #[arg(long, default_value_t = 100_000)]
    pub samples: u64,
    #[arg(long, env = "POSEARCH_SEED", default_value_t = 0)]
    pub seed: u64,
    /// CSV output file.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args)]
pub struct BlocktimeArgs {
    /// Times in block times: `start:end:step`, a comma list, or one value.
    #[arg(long, default_value = "0:3:0.1")]
    pub t: String,
    /// Miniblocks per block, comma separated.
    #[arg(long, default_value = "1,4,16,64")]
    pub n: String,
    /// Simulated blocks per `n`; 0 prints closed forms only.
    #[arg(long, default_value_t = 100_000)]
    pub samples: u64,
    #[arg(long, env = "POSEARCH_SEED", default_value_t = 0)]
    pub seed: u64,
    /// CSV output file.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Parses `start:end:step`, `a,b,c` or a single number.
pub fn parse_range(s: &str) -> anyhow::Result<Vec<f64>> {
    let num = |t: &str| -> anyhow::Result<f64> {
        let v: f64 = t
            .trim()
            .parse()
            .with_context(|| format!("not a number: {t:?}"))?;
        if !v.is_finite() || v < 0.0 {
            bail!("values must be finite and non-negative: {t}");
        }
        Ok(v)
    };
    let parts: Vec<&str> = s.split(':').collect();
    match parts.as_slice() {
        [a, b, step] => {
            let (a, b, step) = (num(a)?, num(b)?, num(step)?);
            if step <= 0.0 || b < a {
                bail!("range needs start <= end and a positive step: {s}");
            }
            let count = ((b - a) / step + 1e-9).floor() as u64 + 1;
            if count > 100_000 {
                bail!("range has too many points: {count}");
            }
            Ok((0..count).map(|i| a + i as f64 * step).collect())
        }
        [_] => s.split(',').map(num).collect(),
        _ => Err(anyhow!("malformed range: {s}")),
    }
}

pub fn parse_ns(s: &str) -> anyhow::Result<Vec<u32>> {
    s.split(',')
        .map(|t| {
            let n: u32 = t
                .trim()
                .parse()
                .with_context(|| format!("not a count: {t:?}"))?;
            if n == 0 {
                bail!("n must be at least 1");
            }
            Ok(n)
        })
        .collect()
}

fn emit(points: &[SeriesPoint], out: &Option<PathBuf>) -> Result<(), Failure> {
    if let Some(path) = out {
        let f = File::create(path)
            .with_context(|| path.display().to_string())
            .map_err(config)?;
        write_series_csv(BufWriter::new(f), points).map_err(runtime)?;
    }
    let with_mc = points.iter().any(|p| p.montecarlo.is_some());
    if with_mc {
        println!("n\tx\tanalytic\tmontecarlo\tstderr");
    } else {
        println!("n\tx\tanalytic");
    }
    for p in points {
        match (p.montecarlo, p.stderr) {
            (Some(m), Some(s)) => {
                println!("{}\t{:.4}\t{:.6}\t{:.6}\t{:.6}", p.n, p.x, p.analytic, m, s)
            }
            _ => println!("{}\t{:.4}\t{:.6}", p.n, p.x, p.analytic),
        }
    }
    if with_mc {
        let max = points
            .iter()
            .filter_map(SeriesPoint::deviation)
            .fold(0.0, f64::max);
        println!("max |analytic - montecarlo| = {max:.6}");
    }
    Ok(())
}

fn analysis_failure(e: AnalysisError) -> Failure {
    config(e)
}

pub fn fork(a: ForkArgs) -> Result<(), Failure> {
    let ds = parse_range(&a.d).map_err(config)?;
    let ns = parse_ns(&a.n).map_err(config)?;
    let points = fork_series(&ds, &ns, a.samples, a.seed).map_err(analysis_failure)?;
    emit(&points, &a.out)
}

pub fn blocktime(a: BlocktimeArgs) -> Result<(), Failure> {
    let ts = parse_range(&a.t).map_err(config)?;
    let ns = parse_ns(&a.n).map_err(config)?;
    let points = blocktime_series(&ts, &ns, a.samples, a.seed).map_err(analysis_failure)?;
    emit(&points, &a.out)
}
