use std::fs::{self, File};
use std::io::BufWriter;
use std::panic::{self, AssertUnwindSafe};

use anyhow::{anyhow, Context};
use posearch::consensus::{verify_chain, write_chain, VerifyCache};
use posearch::netsim::{run_scenario, write_trace_csv, Mode, ScenarioConfig, SimulationOutput};

use crate::failure::{config, runtime, Failure};
use crate::{scenarios, ModeArg, SimRunArgs};

pub fn load(args: &SimRunArgs) -> Result<ScenarioConfig, Failure> {
    let mut cfg = match (&args.config, &args.scenario) {
        (Some(path), _) => {
            ScenarioConfig::from_path(path).with_context(|| path.display().to_string())
        }
        (None, Some(name)) => {
            let text = scenarios::find(name)
                .ok_or_else(|| config(anyhow!("no bundled scenario named {name}")))?;
            ScenarioConfig::from_json(text).with_context(|| format!("bundled scenario {name}"))
        }
        (None, None) => return Err(config(anyhow!("give --config or --scenario"))),
    }
    .map_err(config)?;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(m) = args.mode {
        cfg.mode = match m {
            ModeArg::Faithful => Mode::Faithful,
            ModeArg::Statistical => Mode::Statistical,
        };
    }
    Ok(cfg)
}

/// Re-verifies the final chain from scratch and checks the money supply.
fn check(cfg: &ScenarioConfig, out: &SimulationOutput) -> anyhow::Result<()> {
    let v = verify_chain(&out.chain, &mut VerifyCache::new())
        .map_err(|e| anyhow!("final chain invalid: {e}"))?;
    let genesis: u128 = cfg.params.genesis.iter().map(|(_, a)| a.0 as u128).sum();
    let expected = genesis + cfg.params.reward.0 as u128 * out.report.height as u128;
    if v.state.total_supply() != expected || out.report.total_supply != expected {
        return Err(anyhow!(
            "supply {} differs from genesis plus rewards {expected}",
            v.state.total_supply()
        ));
    }
    Ok(())
}

pub fn run(args: SimRunArgs) -> Result<(), Failure> {
    if args.list {
        for (name, _) in scenarios::BUNDLED {
            println!("{name}");
        }
        return Ok(());
    }
    let cfg = load(&args)?;
    let out = panic::catch_unwind(AssertUnwindSafe(|| run_scenario(&cfg)))
        .map_err(|_| runtime(anyhow!("simulation aborted")))?;
    check(&cfg, &out).map_err(runtime)?;

    fs::create_dir_all(&args.out)
        .with_context(|| args.out.display().to_string())
        .map_err(config)?;
    let report = serde_json::to_string_pretty(&out.report).map_err(runtime)?;
    fs::write(args.out.join("report.json"), &report).map_err(config)?;
    let mut w = BufWriter::new(File::create(args.out.join("chain.posc")).map_err(config)?);
    write_chain(&mut w, &out.chain).map_err(runtime)?;
    if !args.no_trace {
        let f = File::create(args.out.join("trace.csv")).map_err(config)?;
        write_trace_csv(BufWriter::new(f), &out.trace).map_err(runtime)?;
    }
    if args.print {
        println!("{report}");
    }
    let r = &out.report;
    eprintln!(
        "height {} in {} ticks, mean block time {:.0}, forks {}, jobs settled {}/{}",
        r.height,
        r.end_time,
        r.mean_block_time,
        r.fork_count,
        r.jobs.iter().filter(|j| j.settled_height.is_some()).count(),
        r.jobs.len()
    );
    Ok(())
}
