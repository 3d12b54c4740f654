use std::collections::BTreeMap;
use std::io::Write;

use serde::Serialize;

use crate::consensus::{eval_context_for, Chain, ChainState, Verification};
use crate::hash::sha256;
use crate::mining::MinerStats;
use crate::types::{Amount, Hash256, NodeId, PayoutReason};
use crate::vm::EvalContext;

use super::config::Mode;

/// One line of the event trace.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct TraceEvent {
    pub time: u64,
    pub node: NodeId,
    pub kind: &'static str,
    pub hash: Hash256,
}

/// Writes the trace as CSV with a header row.
pub fn write_trace_csv(w: impl Write, trace: &[TraceEvent]) -> csv::Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["time", "node", "kind", "hash"])?;
    for e in trace {
        out.write_record([
            e.time.to_string(),
            e.node.as_u64().to_string(),
            e.kind.to_string(),
            e.hash.to_hex(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

/// SHA-256 of the CSV trace, a compact determinism fingerprint.
pub fn trace_digest(trace: &[TraceEvent]) -> Hash256 {
    let mut buf = Vec::new();
    write_trace_csv(&mut buf, trace).expect("writing to memory");
    sha256(&buf)
}

#[derive(Clone, Copy, PartialEq, Eq, Debug, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum JobOutcome {
    /// Never entered the chain, for example for lack of funds.
    Unregistered,
    /// Registered but not settled before the end of the run.
    Open,
    Paid,
    Refunded,
}

#[derive(Clone, PartialEq, Debug, Serialize)]
pub struct JobReport {
    pub job_id: String,
    pub client: u64,
    pub charge: u64,
    pub submit_time: u64,
    pub registered_height: Option<u64>,
    pub scheduled_height: Option<u64>,
    pub settled_height: Option<u64>,
    pub outcome: JobOutcome,
    /// Winning solution bytes (a tour for TSP jobs).
    pub solution: Option<Vec<u8>>,
    pub eval_value: Option<u64>,
    pub paid_to: Vec<(u64, u64)>,
}

#[derive(Clone, PartialEq, Debug, Serialize)]
pub struct NodeReport {
    pub id: u64,
    pub height: u64,
    pub tip: String,
    pub stats: MinerStats,
}

#[derive(Clone, PartialEq, Debug, Serialize)]
pub struct SimulationReport {
    pub seed: u64,
    pub mode: Mode,
    pub end_time: u64,
    pub block_time: u64,
    /// Height of the longest chain at the end.
    pub height: u64,
    pub tip: String,
    /// Heights at which two or more distinct blocks were created.
    pub fork_count: u64,
    pub fork_rate: f64,
    /// Gaps between consecutive block timestamps on the longest chain, in ticks.
    pub block_times: Vec<u64>,
    pub mean_block_time: f64,
    /// Miniblocks on the longest chain per miner.
    pub wins: BTreeMap<u64, u64>,
    pub balances: BTreeMap<u64, u64>,
    pub total_supply: u128,
    pub escrow: u128,
    pub jobs: Vec<JobReport>,
    pub nodes: Vec<NodeReport>,
    pub trace_events: usize,
    pub trace_digest: String,
}

pub(crate) struct SubmittedJob {
    pub id: Hash256,
    pub client: NodeId,
    pub charge: Amount,
    pub submit_time: u64,
}

/// Replays the longest chain to collect the ledger and job history.
pub(crate) fn chain_facts(
    chain: &Chain,
    submitted: &[SubmittedJob],
) -> (ChainState, BTreeMap<u64, u64>, Vec<u64>, Vec<JobReport>) {
    let mut state = ChainState::empty(chain.params().clone());
    let mut wins: BTreeMap<u64, u64> = BTreeMap::new();
    let mut block_times = Vec::new();
    let mut registered = BTreeMap::new();
    let mut scheduled = BTreeMap::new();
    let mut settled = BTreeMap::new();
    let mut prev_time = None;
    for b in chain.blocks() {
        let r = state
            .apply(b, Verification::Relaxed)
            .expect("nodes only adopt valid chains");
        let h = b.header();
        for p in &h.payouts {
            if let PayoutReason::Mint { .. } = p.reason {
                *wins.entry(p.to.as_u64()).or_default() += 1;
            }
        }
        for j in &h.new_jobs {
            registered.insert(j.job_id, b.height());
        }
        for s in &h.scheduled_jobs {
            scheduled.entry(s.job_id).or_insert(b.height());
        }
        for s in r.settlements {
            settled.insert(s.job_id, s);
        }
        if let Some(t) = prev_time {
            block_times.push(h.timestamp - t);
        }
        prev_time = Some(h.timestamp);
    }
    let jobs = submitted
        .iter()
        .map(|j| {
            let s = settled.get(&j.id);
            let outcome = match (registered.contains_key(&j.id), s) {
                (false, _) => JobOutcome::Unregistered,
                (true, None) => JobOutcome::Open,
                (true, Some(s)) if s.refunded() => JobOutcome::Refunded,
                (true, Some(_)) => JobOutcome::Paid,
            };
            JobReport {
                job_id: j.id.to_hex(),
                client: j.client.as_u64(),
                charge: j.charge.0,
                submit_time: j.submit_time,
                registered_height: registered.get(&j.id).copied(),
                scheduled_height: scheduled.get(&j.id).copied(),
                settled_height: s.map(|s| s.height),
                outcome,
                solution: s.and_then(|s| s.solution.clone()),
                eval_value: s.and_then(|s| s.eval_value),
                paid_to: s
                    .map(|s| s.winners.iter().map(|(n, a)| (n.as_u64(), a.0)).collect())
                    .unwrap_or_default(),
            }
        })
        .collect();
    (state, wins, block_times, jobs)
}

/// Evaluation context `miner` worked under for `job_id`: the slot the job
/// was first scheduled in, on top of the block that scheduled it.
pub fn job_context(chain: &Chain, job_id: Hash256, miner: NodeId) -> Option<EvalContext> {
    chain.blocks().iter().find_map(|b| {
        let slot = b
            .header()
            .scheduled_jobs
            .iter()
            .position(|s| s.job_id == job_id)?;
        Some(eval_context_for(b.hash(), slot as u16, miner))
    })
}
