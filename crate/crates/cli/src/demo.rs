use anyhow::{anyhow, bail};
use clap::Args;
use posearch::consensus::ChainParams;
use posearch::netsim::{
    build_job, job_context, run_scenario, DelayModel, JobConfig, JobOutcome, Mode, NodeConfig,
    Role, ScenarioConfig, Topology, TspSpec,
};
use posearch::tsp::oracle::{brute_force_optimum, tour_length};
use posearch::tsp::{DISTANCE_SCALE, MAX_CITIES, MIN_CITIES};
use posearch::types::{Amount, NodeId};

use crate::analyze::parse_range;
use crate::failure::{config, runtime, Failure};

const CLIENT: u64 = 1000;
/// Network speed in steps per tick: about 2^14 empty attempts per block.
const TOTAL_RATE: f64 = 1.08;
const BLOCK_TIME: u64 = 1_000_000;

#[derive(Args)]
pub struct TspArgs {
    #[arg(long, default_value_t = 6)]
    pub cities: usize,
    #[arg(long, default_value_t = 5000)]
    pub charge: u64,
    #[arg(long, default_value_t = 2)]
    pub miners: usize,
    /// Relative miner speeds, comma separated; equal by default.
    #[arg(long)]
    pub rates: Option<String>,
    #[arg(long, env = "POSEARCH_SEED", default_value_t = 0)]
    pub seed: u64,
}

pub fn scenario(a: &TspArgs) -> anyhow::Result<ScenarioConfig> {
    if !(MIN_CITIES..=MAX_CITIES).contains(&a.cities) {
        bail!("cities must be in {MIN_CITIES}..={MAX_CITIES}");
    }
    if a.miners == 0 || a.miners >= CLIENT as usize {
        bail!("need between 1 and {} miners", CLIENT - 1);
    }
    let weights = match &a.rates {
        Some(s) => parse_range(s)?,
        None => vec![1.0; a.miners],
    };
    if weights.len() != a.miners || weights.iter().any(|&w| w <= 0.0) {
        bail!("give one positive rate per miner");
    }
    let total: f64 = weights.iter().sum();
    let mut nodes: Vec<NodeConfig> = weights
        .iter()
        .enumerate()
        .map(|(i, w)| NodeConfig {
            id: i as u64 + 1,
            rate: TOTAL_RATE * w / total,
            role: Role::Miner,
            policy: None,
        })
        .collect();
    nodes.push(NodeConfig {
        id: CLIENT,
        rate: 0.0,
        role: Role::Client,
        policy: None,
    });
    let cfg = ScenarioConfig {
        seed: a.seed,
        duration: 60 * BLOCK_TIME,
        max_height: Some(12),
        mode: Mode::Faithful,
        params: ChainParams {
            n_target: 1,
            reward: Amount(1000),
            block_time: BLOCK_TIME,
            e_floor: 1 << 14,
            genesis: vec![(NodeId::from_u64(CLIENT), Amount(a.charge))],
            ..ChainParams::default()
        },
        delay: DelayModel::Constant(2000),
        topology: Topology::FullMesh,
        nodes,
        jobs: vec![JobConfig {
            submit_time: 3 * BLOCK_TIME,
            client: CLIENT,
            charge: a.charge,
            tag: 0,
            tsp: TspSpec {
                cities: Some(a.cities),
                coords: None,
                stall_factor: None,
            },
        }],
    };
    cfg.validate()?;
    Ok(cfg)
}

fn length(units: u64) -> f64 {
    units as f64 / DISTANCE_SCALE as f64
}

pub fn tsp(a: TspArgs) -> Result<(), Failure> {
    let cfg = scenario(&a).map_err(config)?;
    let (inst, job) = build_job(cfg.seed, 0, &cfg.jobs[0]);
    println!("cities {:?}", inst.cities);
    let out = run_scenario(&cfg);
    let report = &out.report.jobs[0];
    if report.outcome != JobOutcome::Paid {
        return Err(runtime(anyhow!(
            "job not paid by height {}: {:?}",
            out.report.height,
            report.outcome
        )));
    }
    let tour = report.solution.clone().unwrap_or_default();
    let value = report.eval_value.unwrap_or_default();
    println!(
        "registered at {}, paid at {}",
        report.registered_height.unwrap_or_default(),
        report.settled_height.unwrap_or_default()
    );
    println!("winning tour {tour:?}, length {:.6}", length(value));
    for &(miner, amount) in &report.paid_to {
        println!("paid {amount} to miner {miner}");
    }
    if a.cities <= 8 {
        let (miner, _) = report.paid_to[0];
        let ctx = job_context(&out.chain, job.id(), NodeId::from_u64(miner))
            .ok_or_else(|| runtime(anyhow!("job never scheduled")))?;
        let (_, best) = brute_force_optimum(&inst, &ctx.0);
        let own = tour_length(&inst, &tour, &ctx.0);
        println!(
            "brute-force optimum {:.6} (winning tour rechecked: {:.6})",
            length(best),
            length(own.unwrap_or(u64::MAX))
        );
    }
    Ok(())
}
