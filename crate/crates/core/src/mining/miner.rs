use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::sync::Arc;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::consensus::{
    compare_summaries, tip_digest, Chain, ChainParams, ChainState, ChainSummary, Verification,
};
use crate::hash::hash_object;
use crate::types::{
    Block, Commit, Hash256, Job, Miniblock, NodeId, Reveal, ScheduledJob, Transaction,
};

use super::pool::ItemPool;
use super::search::{BestFound, SlotSearch, Work};
use super::settle::make_commit;
use super::{MinerPolicy, SlotChoice};

/// Chain states kept below the tip; older ones are rebuilt on demand.
const STATE_DEPTH: u64 = 64;

/// Anything that can hand out blocks by hash, such as the network's
/// shared block store.
pub trait BlockSource {
    fn block(&self, hash: &Hash256) -> Option<Arc<Block>>;
}

impl BlockSource for HashMap<Hash256, Arc<Block>> {
    fn block(&self, hash: &Hash256) -> Option<Arc<Block>> {
        self.get(hash).cloned()
    }
}

/// What nodes gossip.
#[derive(Clone, Debug)]
pub enum Message {
    Block(Arc<Block>),
    /// The sender's pending miniblocks on top of `tip`.
    Miniblocks {
        tip: Hash256,
        miniblocks: Vec<Miniblock>,
    },
    Transaction(Transaction),
    Job(Job),
    Commit(Commit),
    Reveal(Reveal),
}

impl Message {
    /// Identity used for duplicate suppression.
    pub fn id(&self) -> Hash256 {
        match self {
            Message::Block(b) => b.hash(),
            Message::Miniblocks { tip, miniblocks } => {
                let hashes: Vec<Hash256> = miniblocks.iter().map(Miniblock::hash).collect();
                tip_digest(*tip, &hashes)
            }
            Message::Transaction(t) => hash_object(t),
            Message::Job(j) => j.id(),
            Message::Commit(c) => hash_object(c),
            Message::Reveal(r) => hash_object(r),
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Message::Block(_) => "block",
            Message::Miniblocks { .. } => "miniblock",
            Message::Transaction(_) => "transaction",
            Message::Job(_) => "job",
            Message::Commit(_) => "commit",
            Message::Reveal(_) => "reveal",
        }
    }
}

#[derive(Clone, Default, PartialEq, Eq, Debug, Serialize)]
pub struct MinerStats {
    pub attempts: u64,
    pub miniblocks_found: u64,
    pub blocks_assembled: u64,
    pub commits: u64,
    pub reveals: u64,
    pub reorgs: u64,
    pub invalid_chains: u64,
    pub invalid_miniblocks: u64,
    pub evaluator_runs: u64,
}

struct Known {
    block: Arc<Block>,
    state: Option<Arc<ChainState>>,
}

/// A mining node: follows the longest valid chain, mines its schedule,
/// assembles blocks and runs the commit/reveal pipeline for jobs it
/// worked on.
pub struct Miner {
    id: NodeId,
    policy: MinerPolicy,
    params: Arc<ChainParams>,
    rng: ChaCha8Rng,
    known: HashMap<Hash256, Known>,
    stated: BTreeMap<u64, Vec<Hash256>>,
    invalid: HashSet<Hash256>,
    valid_miniblocks: HashSet<Hash256>,
    tip: Arc<Block>,
    state: Arc<ChainState>,
    pending: Vec<Miniblock>,
    pool: ItemPool,
    best_found: HashMap<(Hash256, Hash256), BestFound>,
    search: Option<SlotSearch>,
    epoch: u64,
    stats: MinerStats,
}

impl Miner {
    pub fn new(id: NodeId, params: Arc<ChainParams>, policy: MinerPolicy, seed: u64) -> Miner {
        let (state, genesis) = ChainState::genesis(params.clone());
        let genesis = Arc::new(genesis);
        let state = Arc::new(state);
        let mut known = HashMap::new();
        known.insert(
            genesis.hash(),
            Known {
                block: genesis.clone(),
                state: Some(state.clone()),
            },
        );
        let mut m = Miner {
            id,
            policy,
            params,
            rng: ChaCha8Rng::seed_from_u64(seed),
            known,
            stated: BTreeMap::new(),
            invalid: HashSet::new(),
            valid_miniblocks: HashSet::new(),
            tip: genesis,
            state,
            pending: Vec::new(),
            pool: ItemPool::new(),
            best_found: HashMap::new(),
            search: None,
            epoch: 0,
            stats: MinerStats::default(),
        };
        m.retarget();
        m
    }

    pub fn id(&self) -> NodeId {
        self.id
    }

    pub fn policy(&self) -> &MinerPolicy {
        &self.policy
    }

    pub fn params(&self) -> &Arc<ChainParams> {
        &self.params
    }

    pub fn tip(&self) -> &Arc<Block> {
        &self.tip
    }

    pub fn state(&self) -> &Arc<ChainState> {
        &self.state
    }

    pub fn pending(&self) -> &[Miniblock] {
        &self.pending
    }

    pub fn pool(&self) -> &ItemPool {
        &self.pool
    }

    pub fn stats(&self) -> &MinerStats {
        &self.stats
    }

    /// Changes whenever the mining target changes; work computed under an
    /// older epoch is stale.
    pub fn epoch(&self) -> u64 {
        self.epoch
    }

    /// Slot and job currently being mined.
    pub fn target(&self) -> Option<(u16, ScheduledJob)> {
        let s = self.search.as_ref()?;
        Some((s.slot(), self.state.schedule()[s.slot() as usize]))
    }

    pub fn best_found(&self, job: &Hash256, placement_block: &Hash256) -> Option<&BestFound> {
        self.best_found.get(&(*job, *placement_block))
    }

    pub fn summary(&self) -> ChainSummary {
        let hashes: Vec<Hash256> = self.pending.iter().map(Miniblock::hash).collect();
        ChainSummary {
            blocks: self.tip.height() + 1,
            pending: hashes.len(),
            digest: tip_digest(self.tip.hash(), &hashes),
        }
    }

    /// The active chain from genesis, with pending miniblocks.
    pub fn active_chain(&self) -> Chain {
        let mut blocks = Vec::with_capacity(self.tip.height() as usize + 1);
        let mut cur = self.tip.clone();
        loop {
            let prev = cur.header().prev_block_hash;
            let height = cur.height();
            blocks.push(cur);
            if height == 0 {
                break;
            }
            cur = self.known[&prev].block.clone();
        }
        blocks.reverse();
        Chain::from_blocks(self.params.clone(), blocks, self.pending.clone())
    }

    /// Adds a locally created item to the pool and returns the message
    /// announcing it.
    pub fn submit(&mut self, msg: Message) -> Message {
        self.add_item(msg.clone());
        msg
    }

    fn add_item(&mut self, msg: Message) {
        match msg {
            Message::Transaction(t) => {
                self.pool.add_transaction(t);
            }
            Message::Job(j) => {
                self.pool.add_job(j);
            }
            Message::Commit(c) => {
                self.pool.add_commit(c);
            }
            Message::Reveal(r) => {
                self.pool.add_reveal(r);
            }
            Message::Block(_) | Message::Miniblocks { .. } => {}
        }
    }

    /// Handles a gossiped message; returns messages to broadcast.
    pub fn receive(&mut self, msg: Message, src: &impl BlockSource, now: u64) -> Vec<Message> {
        match msg {
            Message::Block(b) => self.consider(b.hash(), Vec::new(), src, now),
            Message::Miniblocks { tip, miniblocks } => self.consider(tip, miniblocks, src, now),
            item => {
                self.add_item(item);
                Vec::new()
            }
        }
    }

    /// State after block `hash`, validating and storing any blocks on the
    /// way that were not seen before.
    fn ensure_state(&mut self, hash: Hash256, src: &impl BlockSource) -> Option<Arc<ChainState>> {
        let mut path: Vec<Arc<Block>> = Vec::new();
        let mut cur = hash;
        let base = loop {
            if self.invalid.contains(&cur) {
                self.mark_invalid(&path);
                return None;
            }
            if let Some(k) = self.known.get(&cur) {
                if let Some(s) = &k.state {
                    break s.clone();
                }
                path.push(k.block.clone());
                cur = k.block.header().prev_block_hash;
                continue;
            }
            let b = src.block(&cur)?;
            if b.hash() != cur || b.height() == 0 {
                // a foreign genesis
                self.stats.invalid_chains += 1;
                return None;
            }
            cur = b.header().prev_block_hash;
            path.push(b);
        };
        let target_height = path.first().map_or(0, |b| b.height());
        let mut state = base;
        while let Some(b) = path.pop() {
            let mode = if b.height() + self.params.verify_depth < target_height {
                Verification::Relaxed
            } else {
                Verification::Full
            };
            let mut next = (*state).clone();
            match next.apply(&b, mode) {
                Ok(r) => self.stats.evaluator_runs += r.evaluator_runs,
                Err(_) => {
                    path.push(b);
                    self.mark_invalid(&path);
                    self.stats.invalid_chains += 1;
                    return None;
                }
            }
            state = Arc::new(next);
            let h = b.hash();
            self.stated.entry(b.height()).or_default().push(h);
            self.known.insert(
                h,
                Known {
                    block: b,
                    state: Some(state.clone()),
                },
            );
        }
        Some(state)
    }

    fn mark_invalid(&mut self, blocks: &[Arc<Block>]) {
        self.invalid.extend(blocks.iter().map(|b| b.hash()));
    }

    fn consider(
        &mut self,
        tip: Hash256,
        miniblocks: Vec<Miniblock>,
        src: &impl BlockSource,
        now: u64,
    ) -> Vec<Message> {
        let Some(state) = self.ensure_state(tip, src) else {
            return Vec::new();
        };
        let mut valid: Vec<Miniblock> = Vec::with_capacity(miniblocks.len());
        for mb in miniblocks {
            if valid.iter().any(|v| v.job_slot == mb.job_slot) {
                continue;
            }
            let h = mb.hash();
            if !self.valid_miniblocks.contains(&h) {
                self.stats.evaluator_runs += 1;
                if state.validate_pending(&mb).is_err() {
                    self.stats.invalid_miniblocks += 1;
                    return Vec::new();
                }
                self.valid_miniblocks.insert(h);
            }
            valid.push(mb);
        }
        valid.sort_by_key(|m| m.job_slot);

        if tip == self.tip.hash() {
            let merged = merge_pending(&self.pending, &valid);
            if merged == self.pending {
                return Vec::new();
            }
            self.pending = merged;
            return self.after_pending_change(now);
        }
        let hashes: Vec<Hash256> = valid.iter().map(Miniblock::hash).collect();
        let candidate = ChainSummary {
            blocks: state.height().unwrap_or(0) + 1,
            pending: valid.len(),
            digest: tip_digest(tip, &hashes),
        };
        if compare_summaries(&candidate, &self.summary()).is_le() {
            return Vec::new();
        }
        let block = self.known[&tip].block.clone();
        let mut out = self.switch_to(block, state, valid);
        out.extend(self.after_pending_change(now));
        out
    }

    fn after_pending_change(&mut self, now: u64) -> Vec<Message> {
        if !self.pending.is_empty() && self.pending.len() == self.state.schedule().len() {
            return self.assemble(now);
        }
        self.retarget();
        Vec::new()
    }

    fn fork_point_paths(
        &self,
        old: &Arc<Block>,
        new: &Arc<Block>,
    ) -> (Vec<Arc<Block>>, Vec<Arc<Block>>) {
        let (mut a, mut b) = (old.clone(), new.clone());
        let (mut orphaned, mut adopted) = (Vec::new(), Vec::new());
        while a.hash() != b.hash() {
            if a.height() >= b.height() {
                let prev = a.header().prev_block_hash;
                orphaned.push(a);
                a = self.known[&prev].block.clone();
            } else {
                let prev = b.header().prev_block_hash;
                adopted.push(b);
                b = self.known[&prev].block.clone();
            }
        }
        (orphaned, adopted)
    }

    fn switch_to(
        &mut self,
        block: Arc<Block>,
        state: Arc<ChainState>,
        pending: Vec<Miniblock>,
    ) -> Vec<Message> {
        let (orphaned, adopted) = self.fork_point_paths(&self.tip.clone(), &block);
        if !orphaned.is_empty() {
            self.stats.reorgs += 1;
        }
        for b in &orphaned {
            self.pool.readd_block(b);
        }
        for b in adopted.iter().rev() {
            self.pool.remove_block_items(b);
        }
        self.pool.prune(&state);
        self.tip = block;
        self.state = state;
        self.pending = pending;
        self.best_found
            .retain(|(job, _), _| self.state.placement(job).is_some());
        self.prune_states();
        self.pipeline()
    }

    fn prune_states(&mut self) {
        let keep_from = self.tip.height().saturating_sub(STATE_DEPTH).max(1);
        let old = std::mem::take(&mut self.stated);
        let (drop, keep): (BTreeMap<_, _>, BTreeMap<_, _>) =
            old.into_iter().partition(|(h, _)| *h < keep_from);
        self.stated = keep;
        for hashes in drop.into_values() {
            for h in hashes {
                if let Some(k) = self.known.get_mut(&h) {
                    k.state = None;
                }
            }
        }
    }

    /// Commits for jobs this node worked on in the interval that just
    /// closed, and reveals for commits that reached their reveal window.
    fn pipeline(&mut self) -> Vec<Message> {
        let mut out = Vec::new();
        for (job, p) in self.state.jobs_awaiting_commits() {
            if self
                .state
                .commits(&job)
                .iter()
                .any(|c| c.miner_id == self.id)
            {
                continue;
            }
            let Some(b) = self.best_found.get(&(job, p.block_hash)) else {
                continue;
            };
            if let Some(c) = make_commit(job, self.id, &b.candidate, b.value) {
                if self.pool.add_commit(c) {
                    self.stats.commits += 1;
                    out.push(Message::Commit(c));
                }
            }
        }
        if !self.policy.reveal {
            return out;
        }
        for (job, value) in self.state.reveal_requests() {
            let committed = self
                .state
                .commits(&job)
                .iter()
                .any(|c| c.miner_id == self.id && c.eval_value == value);
            let Some(p) = self.state.placement(&job) else {
                continue;
            };
            let Some(b) = self.best_found.get(&(job, p.block_hash)) else {
                continue;
            };
            if !committed || b.value != value {
                continue;
            }
            let r = Reveal {
                job_id: job,
                miner_id: self.id,
                solution: b.candidate.clone(),
            };
            if self.pool.add_reveal(r.clone()) {
                self.stats.reveals += 1;
                out.push(Message::Reveal(r));
            }
        }
        out
    }

    fn assemble(&mut self, now: u64) -> Vec<Message> {
        let block = match self
            .state
            .assemble(self.pending.clone(), self.pool.items(), now)
        {
            Ok(b) => Arc::new(b),
            Err(_) => return Vec::new(),
        };
        let mut next = (*self.state).clone();
        match next.apply(&block, Verification::Full) {
            Ok(r) => self.stats.evaluator_runs += r.evaluator_runs,
            Err(e) => {
                debug_assert!(false, "assembled block rejected: {e}");
                return Vec::new();
            }
        }
        let state = Arc::new(next);
        let h = block.hash();
        self.stated.entry(block.height()).or_default().push(h);
        self.known.insert(
            h,
            Known {
                block: block.clone(),
                state: Some(state.clone()),
            },
        );
        self.stats.blocks_assembled += 1;
        let mut out = vec![Message::Block(block.clone())];
        out.extend(self.switch_to(block, state, Vec::new()));
        self.retarget();
        out
    }

    fn retarget(&mut self) {
        if !self.policy.mine {
            self.search = None;
            return;
        }
        let filled: BTreeSet<u16> = self.pending.iter().map(|m| m.job_slot).collect();
        let unfinished: Vec<u16> = (0..self.state.schedule().len() as u16)
            .filter(|s| !filled.contains(s))
            .collect();
        if let Some(s) = &self.search {
            if s.prev() == self.tip.hash() && unfinished.contains(&s.slot()) {
                return;
            }
        }
        self.epoch += 1;
        let slot = match self.policy.slot_choice {
            SlotChoice::LowestUnfinished => unfinished.first().copied(),
            SlotChoice::Random if !unfinished.is_empty() => {
                Some(unfinished[self.rng.random_range(0..unfinished.len())])
            }
            SlotChoice::Random => None,
        };
        self.search = slot.and_then(|slot| {
            let sched = self.state.schedule()[slot as usize];
            let job = self.state.job(&sched.job_id)?.clone();
            Some(SlotSearch::new(
                self.id,
                self.tip.hash(),
                slot,
                sched,
                job,
                &self.policy,
                self.params.hash_cost,
                self.rng.next_u64(),
            ))
        });
    }

    fn record_best(&mut self) {
        let Some(s) = &self.search else { return };
        let Some(b) = s.best() else { return };
        if self.state.job(&s.job_id()).is_none_or(|j| j.is_empty()) {
            return;
        }
        let entry = self.best_found.entry((s.job_id(), s.prev()));
        match entry {
            std::collections::hash_map::Entry::Occupied(mut e) => {
                if b.value < e.get().value {
                    e.insert(b.clone());
                }
            }
            std::collections::hash_map::Entry::Vacant(e) => {
                e.insert(b.clone());
            }
        }
    }

    /// Mines the current target for at most `max_steps` steps. A found
    /// miniblock is returned but not yet announced; pass it to
    /// [`Miner::on_found`] once the time the work took has elapsed.
    pub fn work(&mut self, max_steps: u64) -> Work {
        let Some(s) = &mut self.search else {
            return Work::default();
        };
        let w = s.work(max_steps);
        self.stats.attempts += w.attempts;
        self.record_best();
        w
    }

    /// A valid miniblock for the current target found by hashing alone.
    pub fn grind(&mut self) -> Option<Miniblock> {
        let s = self.search.as_mut()?;
        let mb = s.grind();
        self.record_best();
        Some(mb)
    }

    /// Announces a miniblock this node found. Stale miniblocks, for an old
    /// tip or an already filled slot, are dropped.
    pub fn on_found(&mut self, mb: Miniblock, now: u64) -> Vec<Message> {
        if mb.prev_block_hash != self.tip.hash()
            || self.pending.iter().any(|m| m.job_slot == mb.job_slot)
        {
            return Vec::new();
        }
        self.stats.miniblocks_found += 1;
        self.valid_miniblocks.insert(mb.hash());
        let i = self.pending.partition_point(|m| m.job_slot < mb.job_slot);
        self.pending.insert(i, mb);
        if self.pending.len() == self.state.schedule().len() {
            return self.assemble(now);
        }
        self.retarget();
        vec![Message::Miniblocks {
            tip: self.tip.hash(),
            miniblocks: self.pending.clone(),
        }]
    }
}

/// Union of two pending sets for the same tip; on a shared slot the
/// miniblock with the smaller hash wins.
fn merge_pending(own: &[Miniblock], other: &[Miniblock]) -> Vec<Miniblock> {
    let mut by_slot: BTreeMap<u16, Miniblock> = BTreeMap::new();
    for mb in own.iter().chain(other) {
        match by_slot.get(&mb.job_slot) {
            Some(cur) if cur.hash() <= mb.hash() => {}
            _ => {
                by_slot.insert(mb.job_slot, mb.clone());
            }
        }
    }
    by_slot.into_values().collect()
}
