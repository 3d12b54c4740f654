use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};

use crate::consensus::{compare_summaries, Chain};
use crate::mining::{Message, Miner, MinerPolicy};
use crate::tsp::{TspInstance, DEFAULT_STALL_LIMIT};
use crate::types::{Amount, Block, Hash256, Miniblock, NodeId};

use super::config::{DelayModel, JobConfig, Mode, Role, ScenarioConfig, Topology};
use super::queue::EventQueue;
use super::report::{
    chain_facts, trace_digest, NodeReport, SimulationReport, SubmittedJob, TraceEvent,
};

/// Fraction of a block time a faithful miner computes ahead per event.
const WORK_SLICES_PER_BLOCK: f64 = 32.0;
const MIN_WORK_SLICE: u64 = 1024;

enum Event {
    Deliver {
        to: usize,
        msg: Message,
    },
    Work {
        node: usize,
        epoch: u64,
        found: Option<Miniblock>,
    },
    Submit {
        job: usize,
    },
}

struct SimNode {
    id: NodeId,
    rate: f64,
    miner: Miner,
    seen: HashSet<Hash256>,
    scheduled_epoch: Option<u64>,
    rng: ChaCha8Rng,
}

/// Everything a run produces.
pub struct SimulationOutput {
    pub report: SimulationReport,
    pub trace: Vec<TraceEvent>,
    /// The longest chain at the end of the run.
    pub chain: Chain,
}

/// Builds the job a scenario entry describes. Random cities are drawn
/// from a stream derived from the scenario seed and the entry index.
pub fn build_job(seed: u64, index: usize, j: &JobConfig) -> (TspInstance, crate::types::Job) {
    let inst = match (&j.tsp.coords, j.tsp.cities) {
        (Some(c), _) => TspInstance::new(c.clone()),
        (None, Some(n)) => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(0x1000 + index as u64);
            TspInstance::random(n, &mut rng)
        }
        (None, None) => unreachable!("validated config"),
    };
    let job = inst.job_with_stall_limit(
        NodeId::from_u64(j.client),
        Amount(j.charge),
        j.tag,
        j.tsp.stall_factor.unwrap_or(DEFAULT_STALL_LIMIT),
    );
    (inst, job)
}

struct Sim<'a> {
    cfg: &'a ScenarioConfig,
    nodes: Vec<SimNode>,
    peers: Vec<Vec<usize>>,
    gossip: bool,
    store: HashMap<Hash256, Arc<Block>>,
    queue: EventQueue<Event>,
    net_rng: ChaCha8Rng,
    trace: Vec<TraceEvent>,
    blocks_at: BTreeMap<u64, BTreeSet<Hash256>>,
    jobs: Vec<crate::types::Job>,
    work_slice: Vec<u64>,
}

fn random_topology(n: usize, degree: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<usize>> {
    let mut adj: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); n];
    if n > 1 {
        for i in 0..n {
            let j = (i + 1) % n;
            if i != j {
                adj[i].insert(j);
                adj[j].insert(i);
            }
        }
    }
    for i in 0..n {
        let mut tries = 0;
        while adj[i].len() < degree.min(n - 1) && tries < 16 * n {
            let j = rng.random_range(0..n);
            if j != i {
                adj[i].insert(j);
                adj[j].insert(i);
            }
            tries += 1;
        }
    }
    adj.into_iter().map(|s| s.into_iter().collect()).collect()
}

impl<'a> Sim<'a> {
    fn new(cfg: &'a ScenarioConfig) -> Sim<'a> {
        let params = Arc::new(cfg.params.clone());
        let nodes: Vec<SimNode> = cfg
            .nodes
            .iter()
            .enumerate()
            .map(|(i, n)| {
                let policy = match n.role {
                    Role::Miner => n.policy.clone().unwrap_or_default(),
                    Role::Client => MinerPolicy::observer(),
                };
                let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
                rng.set_stream(1 + i as u64);
                let miner_seed = rng.random();
                SimNode {
                    id: NodeId::from_u64(n.id),
                    rate: n.rate,
                    miner: Miner::new(NodeId::from_u64(n.id), params.clone(), policy, miner_seed),
                    seen: HashSet::new(),
                    scheduled_epoch: None,
                    rng,
                }
            })
            .collect();
        let mut net_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let n = nodes.len();
        let (peers, gossip) = match cfg.topology {
            Topology::FullMesh => (
                (0..n)
                    .map(|i| (0..n).filter(|&j| j != i).collect())
                    .collect(),
                false,
            ),
            Topology::Random { degree } => (random_topology(n, degree, &mut net_rng), true),
        };
        let mut store = HashMap::new();
        let genesis = nodes[0].miner.tip().clone();
        store.insert(genesis.hash(), genesis);
        let work_slice = nodes
            .iter()
            .map(|n| {
                ((n.rate * cfg.params.block_time as f64 / WORK_SLICES_PER_BLOCK) as u64)
                    .max(MIN_WORK_SLICE)
            })
            .collect();
        let jobs = cfg
            .jobs
            .iter()
            .enumerate()
            .map(|(i, j)| build_job(cfg.seed, i, j).1)
            .collect();
        Sim {
            cfg,
            nodes,
            peers,
            gossip,
            store,
            queue: EventQueue::new(),
            net_rng,
            trace: Vec::new(),
            blocks_at: BTreeMap::new(),
            jobs,
            work_slice,
        }
    }

    fn delay(&mut self, from: usize, to: usize) -> u64 {
        match &self.cfg.delay {
            DelayModel::Constant(d) => *d,
            DelayModel::Uniform { lo, hi } => self.net_rng.random_range(*lo..=*hi),
            DelayModel::PerLink(m) => m[from][to],
        }
    }

    fn send(&mut self, from: usize, msg: &Message, now: u64) {
        for k in 0..self.peers[from].len() {
            let to = self.peers[from][k];
            let d = self.delay(from, to);
            self.queue.push(
                now + d,
                Event::Deliver {
                    to,
                    msg: msg.clone(),
                },
            );
        }
    }

    fn broadcast(&mut self, from: usize, msgs: Vec<Message>, now: u64) {
        for msg in msgs {
            let id = msg.id();
            self.trace.push(TraceEvent {
                time: now,
                node: self.nodes[from].id,
                kind: msg.kind(),
                hash: id,
            });
            if let Message::Block(b) = &msg {
                self.store.insert(id, b.clone());
                self.blocks_at.entry(b.height()).or_default().insert(id);
            }
            self.nodes[from].seen.insert(id);
            self.send(from, &msg, now);
        }
    }

    fn schedule_mining(&mut self, i: usize, now: u64) {
        let mode = self.cfg.mode;
        let slice = self.work_slice[i];
        let node = &mut self.nodes[i];
        let epoch = node.miner.epoch();
        if node.scheduled_epoch == Some(epoch) {
            return;
        }
        node.scheduled_epoch = Some(epoch);
        let Some((_, sched)) = node.miner.target() else {
            return;
        };
        let (dt, found) = match mode {
            Mode::Faithful => {
                let w = node.miner.work(slice);
                ((w.steps as f64 / node.rate).ceil() as u64, w.found)
            }
            Mode::Statistical => {
                let attempts_per_tick =
                    node.rate / (sched.attempt_steps as f64 * (sched.zero_bits as f64).exp2());
                let t: f64 = Exp::new(attempts_per_tick)
                    .expect("positive rate")
                    .sample(&mut node.rng);
                (t.ceil() as u64, None)
            }
        };
        self.queue.push(
            now + dt.max(1),
            Event::Work {
                node: i,
                epoch,
                found,
            },
        );
    }

    fn tip_of(&self, i: usize) -> Hash256 {
        self.nodes[i].miner.tip().hash()
    }

    fn handle(&mut self, now: u64, ev: Event) {
        match ev {
            Event::Deliver { to, msg } => {
                if !self.nodes[to].seen.insert(msg.id()) {
                    return;
                }
                let before = self.tip_of(to);
                let out = self.nodes[to].miner.receive(msg.clone(), &self.store, now);
                if self.gossip {
                    self.send(to, &msg, now);
                }
                let after = self.tip_of(to);
                if before != after
                    && !out
                        .iter()
                        .any(|m| matches!(m, Message::Block(b) if b.hash() == after))
                {
                    self.trace.push(TraceEvent {
                        time: now,
                        node: self.nodes[to].id,
                        kind: "adopt",
                        hash: after,
                    });
                }
                self.broadcast(to, out, now);
                self.schedule_mining(to, now);
            }
            Event::Work { node, epoch, found } => {
                if self.nodes[node].miner.epoch() != epoch {
                    return;
                }
                self.nodes[node].scheduled_epoch = None;
                let found = match self.cfg.mode {
                    Mode::Faithful => found,
                    Mode::Statistical => self.nodes[node].miner.grind(),
                };
                if let Some(mb) = found {
                    let out = self.nodes[node].miner.on_found(mb, now);
                    self.broadcast(node, out, now);
                }
                self.schedule_mining(node, now);
            }
            Event::Submit { job } => {
                let client = NodeId::from_u64(self.cfg.jobs[job].client);
                let i = self
                    .nodes
                    .iter()
                    .position(|n| n.id == client)
                    .expect("validated client");
                let msg = self.nodes[i]
                    .miner
                    .submit(Message::Job(self.jobs[job].clone()));
                self.broadcast(i, vec![msg], now);
                self.schedule_mining(i, now);
            }
        }
    }

    fn max_height(&self) -> u64 {
        self.nodes
            .iter()
            .map(|n| n.miner.tip().height())
            .max()
            .unwrap_or(0)
    }

    fn run(mut self) -> SimulationOutput {
        for (k, j) in self.cfg.jobs.iter().enumerate() {
            self.queue.push(j.submit_time, Event::Submit { job: k });
        }
        for i in 0..self.nodes.len() {
            self.schedule_mining(i, 0);
        }
        let mut end_time = 0;
        while let Some(t) = self.queue.peek_time() {
            if t > self.cfg.duration || self.cfg.max_height.is_some_and(|h| self.max_height() >= h)
            {
                break;
            }
            let (t, ev) = self.queue.pop().expect("peeked");
            end_time = t;
            self.handle(t, ev);
        }
        self.finish(end_time)
    }

    fn finish(self, end_time: u64) -> SimulationOutput {
        let best = (0..self.nodes.len())
            .max_by(|&a, &b| {
                compare_summaries(
                    &self.nodes[a].miner.summary(),
                    &self.nodes[b].miner.summary(),
                )
                .then(b.cmp(&a))
            })
            .expect("at least one node");
        let chain = self.nodes[best].miner.active_chain();
        let submitted: Vec<SubmittedJob> = self
            .cfg
            .jobs
            .iter()
            .zip(&self.jobs)
            .map(|(c, j)| SubmittedJob {
                id: j.id(),
                client: j.client(),
                charge: j.charge(),
                submit_time: c.submit_time,
            })
            .collect();
        let (state, wins, block_times, jobs) = chain_facts(&chain, &submitted);
        let height = state.height().unwrap_or(0);
        let fork_count = self.blocks_at.values().filter(|s| s.len() > 1).count() as u64;
        let mean_block_time = if block_times.is_empty() {
            0.0
        } else {
            block_times.iter().sum::<u64>() as f64 / block_times.len() as f64
        };
        let report = SimulationReport {
            seed: self.cfg.seed,
            mode: self.cfg.mode,
            end_time,
            block_time: self.cfg.params.block_time,
            height,
            tip: chain.tip_hash().to_hex(),
            fork_count,
            fork_rate: if height == 0 {
                0.0
            } else {
                fork_count as f64 / height as f64
            },
            block_times,
            mean_block_time,
            wins,
            balances: state
                .balances()
                .iter()
                .map(|(k, v)| (k.as_u64(), v.0))
                .collect(),
            total_supply: state.total_supply(),
            escrow: state.total_escrow(),
            jobs,
            nodes: self
                .nodes
                .iter()
                .map(|n| NodeReport {
                    id: n.id.as_u64(),
                    height: n.miner.tip().height(),
                    tip: n.miner.tip().hash().to_hex(),
                    stats: n.miner.stats().clone(),
                })
                .collect(),
            trace_events: self.trace.len(),
            trace_digest: trace_digest(&self.trace).to_hex(),
        };
        SimulationOutput {
            report,
            trace: self.trace,
            chain,
        }
    }
}

/// Runs a validated scenario to completion. The output is a pure
/// function of the configuration.
pub fn run_scenario(cfg: &ScenarioConfig) -> SimulationOutput {
    Sim::new(cfg).run()
}
