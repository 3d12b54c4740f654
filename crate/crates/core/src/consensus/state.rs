//! Ledger, job and settlement state after a chain tip, and the block
//! state transition shared by validation and block assembly.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::sync::Arc;

use thiserror::Error;

use crate::hash::{leading_zero_bits, solution_hash};
use crate::types::{
    Amount, Block, BlockHeader, Commit, Hash256, Job, JobSummary, Miniblock, NodeId, Payout,
    PayoutReason, Reveal, ScheduledJob, Transaction, WORST,
};
use crate::vm::{execute_evaluator, validate_evaluator, validate_program, ProgramError};

use super::params::{ChainParams, DifficultyState};
use super::rules::{
    attempt_steps, compute_rewards, empty_job, eval_context_for, measure_window,
    reference_attempt_steps, schedule_jobs, schedule_work, validate_miniblock, MiniblockError,
    PendingJob, WindowSample,
};

/// How much of a block is re-checked.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum Verification {
    /// Every rule, including evaluator re-execution of miniblocks and
    /// reveals, and recomputation of the schedule and payouts.
    Full,
    /// Hash links, zero bits of the recorded miniblock hashes, mint amounts
    /// and ledger consistency. No evaluator runs; recorded schedules and
    /// settlements are taken as given.
    Relaxed,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TxError {
    #[error("zero amount")]
    ZeroAmount,
    #[error("expected sequence number {expected}, got {got}")]
    BadSequence { expected: u64, got: u64 },
    #[error("insufficient balance")]
    InsufficientBalance,
    #[error("balance overflow")]
    Overflow,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum JobError {
    #[error("job {0} already registered")]
    Duplicate(Hash256),
    #[error("job charge must be positive")]
    ZeroCharge,
    #[error("evaluation step budget must be positive")]
    ZeroBudget,
    #[error("only the built-in fallback job may be marked empty")]
    MarkedEmpty,
    #[error("client cannot cover the charge")]
    InsufficientBalance,
    #[error("job body does not match its summary")]
    BodyMismatch,
    #[error("job body missing")]
    MissingBody,
    #[error("invalid evaluator: {0}")]
    Evaluator(ProgramError),
    #[error("invalid searcher: {0}")]
    Searcher(ProgramError),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CommitError {
    #[error("job is not in its commit interval")]
    NotCommitting,
    #[error("commit carries the WORST evaluation")]
    WorstValue,
    #[error("miner already committed")]
    Duplicate,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RevealError {
    #[error("job is not in a reveal interval")]
    NotRevealing,
    #[error("miner is not in the group allowed to reveal")]
    NotEligible,
    #[error("solution does not match the commit")]
    HashMismatch,
    #[error("miner already revealed")]
    Duplicate,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BlockError {
    #[error("hash-link-broken: previous hash does not match the parent")]
    HashLinkBroken,
    #[error("height {found} does not follow parent height")]
    HeightMismatch { found: u64 },
    #[error("timestamp earlier than the parent's")]
    TimestampRegression,
    #[error("incomplete-miniblocks: expected {expected}, found {found}")]
    IncompleteMiniblocks { expected: usize, found: usize },
    #[error("miniblock bodies missing")]
    MissingMiniblockBodies,
    #[error("miniblock body in slot {slot} does not match the recorded hash")]
    MiniblockBodyMismatch { slot: usize },
    #[error("miniblock in slot {slot}: {error}")]
    Miniblock { slot: usize, error: MiniblockError },
    #[error("mint-mismatch: minted payouts do not match the reward split")]
    MintMismatch,
    #[error("settlement payouts do not match the settlement rules")]
    SettlementMismatch,
    #[error("job {0} was not settled in time")]
    SettlementMissing(Hash256),
    #[error("transaction {index}: {error}")]
    Transaction { index: usize, error: TxError },
    #[error("new job {index}: {error}")]
    Job { index: usize, error: JobError },
    #[error("commit {index}: {error}")]
    Commit { index: usize, error: CommitError },
    #[error("reveal {index}: {error}")]
    Reveal { index: usize, error: RevealError },
    #[error("schedule does not match the scheduling rules")]
    ScheduleMismatch,
    #[error("genesis block does not match the chain parameters")]
    BadGenesis,
    #[error("ledger overflow")]
    Overflow,
}

impl BlockError {
    /// Stable short code for reports.
    pub fn code(&self) -> &'static str {
        match self {
            BlockError::HashLinkBroken => "hash-link-broken",
            BlockError::HeightMismatch { .. } => "height-mismatch",
            BlockError::TimestampRegression => "timestamp-regression",
            BlockError::IncompleteMiniblocks { .. } => "incomplete-miniblocks",
            BlockError::MissingMiniblockBodies => "missing-miniblock-bodies",
            BlockError::MiniblockBodyMismatch { .. } => "miniblock-body-mismatch",
            BlockError::Miniblock { error, .. } => error.code(),
            BlockError::MintMismatch => "mint-mismatch",
            BlockError::SettlementMismatch => "settlement-mismatch",
            BlockError::SettlementMissing(_) => "settlement-missing",
            BlockError::Transaction { .. } => "invalid-transaction",
            BlockError::Job { .. } => "invalid-job",
            BlockError::Commit { .. } => "invalid-commit",
            BlockError::Reveal { .. } => "invalid-reveal",
            BlockError::ScheduleMismatch => "schedule-mismatch",
            BlockError::BadGenesis => "bad-genesis",
            BlockError::Overflow => "ledger-overflow",
        }
    }
}

/// Where a job ran: the block that scheduled it and its slot.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub struct Placement {
    pub height: u64,
    pub block_hash: Hash256,
    pub slot: u16,
}

/// A registered job that has not been settled yet.
#[derive(Clone, Debug)]
struct JobRecord {
    summary: JobSummary,
    body: Option<Job>,
    attempt_steps: Option<u64>,
    placement: Option<Placement>,
    commits: Vec<Commit>,
    reveals: Vec<Reveal>,
    retry_reveals: Vec<Reveal>,
    retry: bool,
}

impl JobRecord {
    fn best_value(&self) -> Option<u64> {
        self.commits.iter().map(|c| c.eval_value).min()
    }

    fn second_value(&self) -> Option<u64> {
        let best = self.best_value()?;
        self.commits
            .iter()
            .map(|c| c.eval_value)
            .filter(|&v| v > best)
            .min()
    }

    fn commit_of(&self, miner: NodeId) -> Option<&Commit> {
        self.commits.iter().find(|c| c.miner_id == miner)
    }
}

/// How a job ended.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct Settlement {
    pub job_id: Hash256,
    pub client: NodeId,
    pub charge: Amount,
    pub height: u64,
    /// Winning miners and their shares; empty on refund.
    pub winners: Vec<(NodeId, Amount)>,
    /// Revealed solution of the first winner.
    pub solution: Option<Vec<u8>>,
    pub eval_value: Option<u64>,
}

impl Settlement {
    pub fn refunded(&self) -> bool {
        self.winners.is_empty()
    }
}

/// Side information from applying one block.
#[derive(Clone, Default, Debug)]
pub struct ApplyReport {
    pub evaluator_runs: u64,
    pub settlements: Vec<Settlement>,
}

/// Candidate contents for a block under construction. Invalid entries are
/// dropped by [`ChainState::assemble`].
#[derive(Clone, Default, Debug)]
pub struct BlockItems {
    pub transactions: Vec<Transaction>,
    pub jobs: Vec<Job>,
    pub commits: Vec<Commit>,
    pub reveals: Vec<Reveal>,
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
struct Tip {
    height: u64,
    hash: Hash256,
    timestamp: u64,
}

/// The state reached after applying a sequence of blocks.
#[derive(Clone, Debug)]
pub struct ChainState {
    params: Arc<ChainParams>,
    reference_attempt: u64,
    tip: Option<Tip>,
    schedule: Vec<ScheduledJob>,
    balances: BTreeMap<NodeId, Amount>,
    escrow: BTreeMap<Hash256, Amount>,
    next_seq: BTreeMap<NodeId, u64>,
    jobs: BTreeMap<Hash256, JobRecord>,
    queue: Vec<Hash256>,
    registered: BTreeSet<Hash256>,
    window: VecDeque<WindowSample>,
}

/// The genesis block implied by `params`.
pub fn genesis_block(params: &ChainParams) -> Block {
    let floors = measure_window(&[], params);
    let header = BlockHeader {
        payouts: params
            .genesis
            .iter()
            .map(|&(to, amount)| Payout {
                to,
                amount,
                reason: PayoutReason::Genesis,
            })
            .collect(),
        scheduled_jobs: schedule_jobs(&[], &floors, params),
        ..BlockHeader::default()
    };
    Block::new(header, Vec::new(), Vec::new())
}

fn split_charge(charge: Amount, mut winners: Vec<NodeId>) -> Vec<(NodeId, Amount)> {
    winners.sort();
    winners.dedup();
    let n = winners.len() as u64;
    let share = charge.0 / n;
    let rest = charge.0 - share * n;
    winners
        .into_iter()
        .enumerate()
        .map(|(i, w)| (w, Amount(share + if i == 0 { rest } else { 0 })))
        .collect()
}

impl ChainState {
    /// State before the genesis block.
    pub fn empty(params: Arc<ChainParams>) -> ChainState {
        let reference_attempt = reference_attempt_steps(&params);
        ChainState {
            params,
            reference_attempt,
            tip: None,
            schedule: Vec::new(),
            balances: BTreeMap::new(),
            escrow: BTreeMap::new(),
            next_seq: BTreeMap::new(),
            jobs: BTreeMap::new(),
            queue: Vec::new(),
            registered: BTreeSet::new(),
            window: VecDeque::new(),
        }
    }

    /// State after the genesis block, together with that block.
    pub fn genesis(params: Arc<ChainParams>) -> (ChainState, Block) {
        let block = genesis_block(&params);
        let mut state = ChainState::empty(params);
        state
            .apply(&block, Verification::Full)
            .expect("the generated genesis block is valid");
        (state, block)
    }

    pub fn params(&self) -> &Arc<ChainParams> {
        &self.params
    }

    /// Height of the tip block; `None` before genesis.
    pub fn height(&self) -> Option<u64> {
        self.tip.map(|t| t.height)
    }

    pub fn tip_hash(&self) -> Hash256 {
        self.tip.map_or(Hash256::ZERO, |t| t.hash)
    }

    pub fn tip_timestamp(&self) -> u64 {
        self.tip.map_or(0, |t| t.timestamp)
    }

    /// Jobs to be mined on top of the tip, one miniblock per slot.
    pub fn schedule(&self) -> &[ScheduledJob] {
        &self.schedule
    }

    pub fn balance(&self, node: NodeId) -> Amount {
        self.balances.get(&node).copied().unwrap_or_default()
    }

    pub fn balances(&self) -> &BTreeMap<NodeId, Amount> {
        &self.balances
    }

    pub fn escrowed(&self, job: &Hash256) -> Amount {
        self.escrow.get(job).copied().unwrap_or_default()
    }

    pub fn total_escrow(&self) -> u128 {
        self.escrow.values().map(|a| a.0 as u128).sum()
    }

    /// All coins in existence: balances plus escrow.
    pub fn total_supply(&self) -> u128 {
        self.balances.values().map(|a| a.0 as u128).sum::<u128>() + self.total_escrow()
    }

    pub fn is_registered(&self, job: &Hash256) -> bool {
        self.registered.contains(job)
    }

    /// Registered jobs not yet scheduled, oldest first.
    pub fn queue(&self) -> &[Hash256] {
        &self.queue
    }

    /// Body of a scheduled or pending job, including the empty job.
    pub fn job(&self, id: &Hash256) -> Option<&Job> {
        if *id == empty_job().id() {
            return Some(empty_job());
        }
        self.jobs.get(id).and_then(|r| r.body.as_ref())
    }

    pub fn placement(&self, id: &Hash256) -> Option<Placement> {
        self.jobs.get(id).and_then(|r| r.placement)
    }

    pub fn commits(&self, id: &Hash256) -> &[Commit] {
        self.jobs.get(id).map_or(&[], |r| &r.commits)
    }

    pub fn next_sequence(&self, node: NodeId) -> u64 {
        self.next_seq.get(&node).copied().unwrap_or(0)
    }

    pub fn difficulty(&self) -> DifficultyState {
        measure_window(&self.window, &self.params)
    }

    pub fn reference_attempt(&self) -> u64 {
        self.reference_attempt
    }

    /// Jobs whose commits belong in the next block, with their placement.
    pub fn jobs_awaiting_commits(&self) -> Vec<(Hash256, Placement)> {
        let Some(tip) = self.tip else {
            return Vec::new();
        };
        self.open_jobs()
            .filter_map(|(id, r)| {
                r.placement
                    .filter(|p| p.height + 1 == tip.height)
                    .map(|p| (*id, p))
            })
            .collect()
    }

    /// Jobs that accept reveals in the next block, with the evaluation
    /// value whose committers may reveal. Deciding a retry window runs the
    /// evaluator on the previous reveals.
    pub fn reveal_requests(&self) -> Vec<(Hash256, u64)> {
        let Some(tip) = self.tip else {
            return Vec::new();
        };
        let next = tip.height + 1;
        let mut out = Vec::new();
        for (id, r) in self.open_jobs() {
            let Some(p) = r.placement else { continue };
            match next - p.height {
                3 => out.extend(r.best_value().map(|v| (*id, v))),
                4 => {
                    let mut runs = 0;
                    if self
                        .verified_group(r, &r.reveals, r.best_value(), &mut runs)
                        .is_empty()
                    {
                        out.extend(r.second_value().map(|v| (*id, v)));
                    }
                }
                _ => {}
            }
        }
        out
    }

    fn open_jobs(&self) -> impl Iterator<Item = (&Hash256, &JobRecord)> {
        self.jobs.iter()
    }

    /// Checks a miniblock mined on the tip, running the evaluator.
    pub fn validate_pending(&self, mb: &Miniblock) -> Result<(), MiniblockError> {
        validate_miniblock(mb, self.tip_hash(), &self.schedule, |id| self.job(id))
    }

    fn credit(&mut self, to: NodeId, amount: Amount) -> Result<(), BlockError> {
        let b = self.balances.entry(to).or_default();
        *b = b.checked_add(amount).ok_or(BlockError::Overflow)?;
        Ok(())
    }

    /// Applies `block` on top of the current tip. On error the state is
    /// left unchanged.
    pub fn apply(&mut self, block: &Block, mode: Verification) -> Result<ApplyReport, BlockError> {
        let mut next = self.clone();
        let report = match self.tip {
            None => next.apply_genesis(block, mode)?,
            Some(tip) => next.apply_block(tip, block, mode)?,
        };
        *self = next;
        Ok(report)
    }

    fn apply_genesis(
        &mut self,
        block: &Block,
        mode: Verification,
    ) -> Result<ApplyReport, BlockError> {
        let h = block.header();
        let expected = genesis_block(&self.params);
        let ok = match mode {
            Verification::Full => block.hash() == expected.hash(),
            Verification::Relaxed => {
                h.prev_block_hash == Hash256::ZERO
                    && h.height == 0
                    && h.payouts == expected.header().payouts
                    && h.miniblock_hashes.is_empty()
                    && h.transactions.is_empty()
                    && h.new_jobs.is_empty()
                    && h.commits.is_empty()
                    && h.reveals.is_empty()
                    && !h.scheduled_jobs.is_empty()
                    && h.scheduled_jobs
                        .iter()
                        .all(|s| s.job_id == empty_job().id())
            }
        };
        if !ok {
            return Err(BlockError::BadGenesis);
        }
        for p in &h.payouts {
            self.credit(p.to, p.amount)?;
        }
        self.schedule = h.scheduled_jobs.clone();
        self.tip = Some(Tip {
            height: 0,
            hash: block.hash(),
            timestamp: h.timestamp,
        });
        Ok(ApplyReport::default())
    }

    fn apply_block(
        &mut self,
        tip: Tip,
        block: &Block,
        mode: Verification,
    ) -> Result<ApplyReport, BlockError> {
        let h = block.header();
        if h.prev_block_hash != tip.hash {
            return Err(BlockError::HashLinkBroken);
        }
        if h.height != tip.height + 1 {
            return Err(BlockError::HeightMismatch { found: h.height });
        }
        if h.timestamp < tip.timestamp {
            return Err(BlockError::TimestampRegression);
        }
        let mut report = ApplyReport::default();
        let miners = self.check_miniblocks(tip, block, mode, &mut report.evaluator_runs)?;

        // payouts: mints for the completed slots, then settlements
        let rewards = compute_rewards(&self.zero_bits(), self.params.reward);
        let n_slots = self.schedule.len();
        if h.payouts.len() < n_slots {
            return Err(BlockError::MintMismatch);
        }
        let (mints, settlements) = h.payouts.split_at(n_slots);
        for (slot, (p, share)) in mints.iter().zip(&rewards).enumerate() {
            let recipient_ok = miners.as_ref().is_none_or(|m| m[slot] == p.to);
            if p.amount != *share
                || p.reason != (PayoutReason::Mint { slot: slot as u16 })
                || !recipient_ok
            {
                return Err(BlockError::MintMismatch);
            }
        }
        for p in mints {
            self.credit(p.to, p.amount)?;
        }
        match mode {
            Verification::Full => {
                let (expected, done) =
                    self.compute_settlements(h.height, &mut report.evaluator_runs);
                if expected != settlements {
                    return Err(BlockError::SettlementMismatch);
                }
                for s in done {
                    self.finish_settlement(s, &mut report)?;
                }
            }
            Verification::Relaxed => self.accept_settlements(h.height, settlements, &mut report)?,
        }
        self.check_overdue(h.height)?;

        for (index, tx) in h.transactions.iter().enumerate() {
            self.apply_transaction(tx)
                .map_err(|error| BlockError::Transaction { index, error })?;
        }
        self.register_jobs(block, mode)?;
        for (index, c) in h.commits.iter().enumerate() {
            self.add_commit(c, h.height)
                .map_err(|error| BlockError::Commit { index, error })?;
        }
        for (index, r) in h.reveals.iter().enumerate() {
            self.add_reveal(r, h.height)
                .map_err(|error| BlockError::Reveal { index, error })?;
        }

        let charges = h.new_jobs.iter().map(|j| j.charge.0 as u128).sum();
        self.push_window(h.timestamp - tip.timestamp, charges);
        match mode {
            Verification::Full => {
                if self.next_schedule() != h.scheduled_jobs {
                    return Err(BlockError::ScheduleMismatch);
                }
            }
            Verification::Relaxed => self.check_recorded_schedule(&h.scheduled_jobs)?,
        }
        self.place_schedule(&h.scheduled_jobs, h.height, block.hash());
        self.tip = Some(Tip {
            height: h.height,
            hash: block.hash(),
            timestamp: h.timestamp,
        });
        Ok(report)
    }

    fn zero_bits(&self) -> Vec<u8> {
        self.schedule.iter().map(|s| s.zero_bits).collect()
    }

    /// Returns the miner of every slot when the bodies were checked.
    fn check_miniblocks(
        &self,
        tip: Tip,
        block: &Block,
        mode: Verification,
        runs: &mut u64,
    ) -> Result<Option<Vec<NodeId>>, BlockError> {
        let hashes = &block.header().miniblock_hashes;
        if hashes.len() != self.schedule.len() {
            return Err(BlockError::IncompleteMiniblocks {
                expected: self.schedule.len(),
                found: hashes.len(),
            });
        }
        for (slot, (hash, s)) in hashes.iter().zip(&self.schedule).enumerate() {
            let found = leading_zero_bits(hash);
            if found < s.zero_bits as u32 {
                return Err(BlockError::Miniblock {
                    slot,
                    error: MiniblockError::InsufficientZeros {
                        required: s.zero_bits,
                        found,
                    },
                });
            }
        }
        let bodies = block.miniblocks();
        if bodies.is_empty() && mode == Verification::Relaxed {
            return Ok(None);
        }
        if bodies.len() != hashes.len() {
            return Err(BlockError::MissingMiniblockBodies);
        }
        for (slot, (mb, hash)) in bodies.iter().zip(hashes).enumerate() {
            if mb.hash() != *hash {
                return Err(BlockError::MiniblockBodyMismatch { slot });
            }
            if mb.job_slot as usize != slot {
                return Err(BlockError::Miniblock {
                    slot,
                    error: MiniblockError::BadSlot(mb.job_slot),
                });
            }
            if mode == Verification::Full {
                *runs += 1;
                validate_miniblock(mb, tip.hash, &self.schedule, |id| self.job(id))
                    .map_err(|error| BlockError::Miniblock { slot, error })?;
            } else if mb.prev_block_hash != tip.hash {
                return Err(BlockError::Miniblock {
                    slot,
                    error: MiniblockError::WrongParent,
                });
            }
        }
        Ok(Some(bodies.iter().map(|mb| mb.miner_id).collect()))
    }

    /// Committers of `value` whose reveal reproduces it under their own
    /// execution context.
    fn verified_group(
        &self,
        r: &JobRecord,
        reveals: &[Reveal],
        value: Option<u64>,
        runs: &mut u64,
    ) -> Vec<NodeId> {
        let (Some(value), Some(p), Some(job)) = (value, r.placement, r.body.as_ref()) else {
            return Vec::new();
        };
        reveals
            .iter()
            .filter(|rev| {
                let Some(c) = r.commit_of(rev.miner_id) else {
                    return false;
                };
                if c.eval_value != value {
                    return false;
                }
                *runs += 1;
                let ctx = eval_context_for(p.block_hash, p.slot, rev.miner_id);
                execute_evaluator(job.evaluator(), &rev.solution, &ctx, job.eval_step_budget())
                    .eval_value()
                    == value
            })
            .map(|rev| rev.miner_id)
            .collect()
    }

    /// Settlement payouts due at `height`, in placement order, and the
    /// settlements they complete. Marks jobs entering their retry window.
    fn compute_settlements(
        &mut self,
        height: u64,
        runs: &mut u64,
    ) -> (Vec<Payout>, Vec<Settlement>) {
        let mut due: Vec<(Placement, Hash256)> = self
            .jobs
            .iter()
            .filter_map(|(id, r)| r.placement.map(|p| (p, *id)))
            .filter(|(p, _)| matches!(height - p.height, 4 | 5))
            .collect();
        due.sort_by_key(|(p, _)| (p.height, p.slot));
        let mut payouts = Vec::new();
        let mut done = Vec::new();
        for (p, id) in due {
            let r = &self.jobs[&id];
            let k = height - p.height;
            let (winners, value, reveals) = if k == 4 {
                let best = r.best_value();
                let winners = self.verified_group(r, &r.reveals, best, runs);
                if winners.is_empty() && r.second_value().is_some() {
                    self.jobs.get_mut(&id).expect("listed").retry = true;
                    continue;
                }
                (winners, best, &r.reveals)
            } else if r.retry {
                let second = r.second_value();
                (
                    self.verified_group(r, &r.retry_reveals, second, runs),
                    second,
                    &r.retry_reveals,
                )
            } else {
                continue;
            };
            let s = self.settlement(r, height, winners, value, reveals);
            payouts.extend(settlement_payouts(&s));
            done.push(s);
        }
        (payouts, done)
    }

    fn settlement(
        &self,
        r: &JobRecord,
        height: u64,
        winners: Vec<NodeId>,
        value: Option<u64>,
        reveals: &[Reveal],
    ) -> Settlement {
        let charge = self.escrowed(&r.summary.job_id);
        if winners.is_empty() {
            return Settlement {
                job_id: r.summary.job_id,
                client: r.summary.client,
                charge,
                height,
                winners: Vec::new(),
                solution: None,
                eval_value: None,
            };
        }
        let shares = split_charge(charge, winners);
        let first = shares[0].0;
        Settlement {
            job_id: r.summary.job_id,
            client: r.summary.client,
            charge,
            height,
            solution: reveals
                .iter()
                .find(|rev| rev.miner_id == first)
                .map(|rev| rev.solution.clone()),
            eval_value: value,
            winners: shares,
        }
    }

    fn finish_settlement(
        &mut self,
        s: Settlement,
        report: &mut ApplyReport,
    ) -> Result<(), BlockError> {
        for p in settlement_payouts(&s) {
            self.credit(p.to, p.amount)?;
        }
        self.escrow.remove(&s.job_id);
        self.jobs.remove(&s.job_id);
        report.settlements.push(s);
        Ok(())
    }

    /// Relaxed path: takes recorded settlement payouts at face value as long
    /// as each settles an open job at the right height for its full escrow.
    fn accept_settlements(
        &mut self,
        height: u64,
        payouts: &[Payout],
        report: &mut ApplyReport,
    ) -> Result<(), BlockError> {
        let mut i = 0;
        while i < payouts.len() {
            let job_id = match payouts[i].reason {
                PayoutReason::Charge { job_id } | PayoutReason::Refund { job_id } => job_id,
                _ => return Err(BlockError::SettlementMismatch),
            };
            let group_end = payouts[i..]
                .iter()
                .position(|p| !matches!(p.reason, PayoutReason::Charge { job_id: j } | PayoutReason::Refund { job_id: j } if j == job_id))
                .map_or(payouts.len(), |n| i + n);
            let group = &payouts[i..group_end];
            i = group_end;
            let r = self
                .jobs
                .get(&job_id)
                .ok_or(BlockError::SettlementMismatch)?;
            let k = r.placement.map(|p| height - p.height);
            let on_time = k == Some(4) || (k == Some(5) && r.retry);
            let charge = self.escrowed(&job_id);
            let total: u128 = group.iter().map(|p| p.amount.0 as u128).sum();
            let refund = matches!(group[0].reason, PayoutReason::Refund { .. });
            let consistent = if refund {
                group.len() == 1 && group[0].to == r.summary.client
            } else {
                group
                    .iter()
                    .all(|p| matches!(p.reason, PayoutReason::Charge { .. }))
            };
            if !on_time || !consistent || total != charge.0 as u128 {
                return Err(BlockError::SettlementMismatch);
            }
            let (winners, reveals, value) = if refund {
                (Vec::new(), &r.reveals, None)
            } else {
                let winners: Vec<(NodeId, Amount)> =
                    group.iter().map(|p| (p.to, p.amount)).collect();
                let reveals = if k == Some(4) {
                    &r.reveals
                } else {
                    &r.retry_reveals
                };
                let value = r.commit_of(winners[0].0).map(|c| c.eval_value);
                (winners, reveals, value)
            };
            let s = Settlement {
                job_id,
                client: r.summary.client,
                charge,
                height,
                solution: winners
                    .first()
                    .and_then(|(w, _)| reveals.iter().find(|rev| rev.miner_id == *w))
                    .map(|rev| rev.solution.clone()),
                eval_value: value,
                winners,
            };
            self.finish_settlement(s, report)?;
        }
        // jobs left open at their settlement height enter the retry window
        for r in self.jobs.values_mut() {
            if r.placement.is_some_and(|p| height - p.height == 4) {
                r.retry = true;
            }
        }
        Ok(())
    }

    fn check_overdue(&self, height: u64) -> Result<(), BlockError> {
        for (id, r) in &self.jobs {
            if let Some(p) = r.placement {
                let k = height - p.height;
                if k >= 5 || (k == 4 && !r.retry) {
                    return Err(BlockError::SettlementMissing(*id));
                }
            }
        }
        Ok(())
    }

    pub fn apply_transaction(&mut self, tx: &Transaction) -> Result<(), TxError> {
        if tx.amount.is_zero() {
            return Err(TxError::ZeroAmount);
        }
        let expected = self.next_sequence(tx.from);
        if tx.seq != expected {
            return Err(TxError::BadSequence {
                expected,
                got: tx.seq,
            });
        }
        let from = self
            .balance(tx.from)
            .checked_sub(tx.amount)
            .ok_or(TxError::InsufficientBalance)?;
        if tx.from != tx.to {
            let to = self
                .balance(tx.to)
                .checked_add(tx.amount)
                .ok_or(TxError::Overflow)?;
            self.balances.insert(tx.from, from);
            self.balances.insert(tx.to, to);
        }
        self.next_seq.insert(tx.from, expected + 1);
        Ok(())
    }

    fn register_jobs(&mut self, block: &Block, mode: Verification) -> Result<(), BlockError> {
        let summaries = &block.header().new_jobs;
        let bodies = block.job_bodies();
        if mode == Verification::Full && bodies.len() != summaries.len() {
            return Err(BlockError::Job {
                index: bodies.len().min(summaries.len()),
                error: JobError::MissingBody,
            });
        }
        // compaction may drop bodies, keeping the order of the rest
        let mut next_body = bodies.iter().peekable();
        for (index, summary) in summaries.iter().enumerate() {
            let body = next_body.next_if(|b| b.id() == summary.job_id);
            if mode == Verification::Full && body.is_none() {
                return Err(BlockError::Job {
                    index,
                    error: JobError::BodyMismatch,
                });
            }
            self.register_job(summary, body, mode)
                .map_err(|error| BlockError::Job { index, error })?;
        }
        if next_body.next().is_some() {
            return Err(BlockError::Job {
                index: summaries.len(),
                error: JobError::BodyMismatch,
            });
        }
        Ok(())
    }

    fn register_job(
        &mut self,
        summary: &JobSummary,
        body: Option<&Job>,
        mode: Verification,
    ) -> Result<(), JobError> {
        if self.registered.contains(&summary.job_id) || summary.job_id == empty_job().id() {
            return Err(JobError::Duplicate(summary.job_id));
        }
        if summary.charge.is_zero() {
            return Err(JobError::ZeroCharge);
        }
        if let Some(job) = body {
            if job.summary() != *summary {
                return Err(JobError::BodyMismatch);
            }
            if mode == Verification::Full {
                check_job_body(job)?;
            }
        }
        let balance = self
            .balance(summary.client)
            .checked_sub(summary.charge)
            .ok_or(JobError::InsufficientBalance)?;
        self.balances.insert(summary.client, balance);
        self.escrow.insert(summary.job_id, summary.charge);
        self.registered.insert(summary.job_id);
        self.queue.push(summary.job_id);
        self.jobs.insert(
            summary.job_id,
            JobRecord {
                summary: *summary,
                body: body.cloned(),
                attempt_steps: None,
                placement: None,
                commits: Vec::new(),
                reveals: Vec::new(),
                retry_reveals: Vec::new(),
                retry: false,
            },
        );
        Ok(())
    }

    fn add_commit(&mut self, c: &Commit, height: u64) -> Result<(), CommitError> {
        let r = self
            .jobs
            .get_mut(&c.job_id)
            .ok_or(CommitError::NotCommitting)?;
        if r.placement.is_none_or(|p| p.height + 2 != height) {
            return Err(CommitError::NotCommitting);
        }
        if c.eval_value == WORST {
            return Err(CommitError::WorstValue);
        }
        if r.commit_of(c.miner_id).is_some() {
            return Err(CommitError::Duplicate);
        }
        r.commits.push(*c);
        Ok(())
    }

    fn add_reveal(&mut self, rev: &Reveal, height: u64) -> Result<(), RevealError> {
        let r = self
            .jobs
            .get_mut(&rev.job_id)
            .ok_or(RevealError::NotRevealing)?;
        let k = r.placement.map(|p| height - p.height);
        let (eligible, retry) = match k {
            Some(3) => (r.best_value(), false),
            Some(4) if r.retry => (r.second_value(), true),
            _ => return Err(RevealError::NotRevealing),
        };
        let c = r.commit_of(rev.miner_id).ok_or(RevealError::NotEligible)?;
        if Some(c.eval_value) != eligible {
            return Err(RevealError::NotEligible);
        }
        if solution_hash(rev.miner_id, &rev.solution) != c.solution_hash {
            return Err(RevealError::HashMismatch);
        }
        let list = if retry {
            &mut r.retry_reveals
        } else {
            &mut r.reveals
        };
        if list.iter().any(|x| x.miner_id == rev.miner_id) {
            return Err(RevealError::Duplicate);
        }
        list.push(rev.clone());
        Ok(())
    }

    fn push_window(&mut self, elapsed: u64, charges: u128) {
        let work = schedule_work(&self.schedule, self.reference_attempt);
        self.window.push_back(WindowSample {
            work,
            elapsed,
            charges,
        });
        while self.window.len() > self.params.window as usize {
            self.window.pop_front();
        }
    }

    /// The schedule the rules require after the current registrations.
    fn next_schedule(&mut self) -> Vec<ScheduledJob> {
        let ds = self.difficulty();
        let mut pending = Vec::with_capacity(self.queue.len());
        for id in &self.queue {
            let r = self.jobs.get_mut(id).expect("queued jobs are open");
            let steps = match (r.attempt_steps, &r.body) {
                (Some(s), _) => s,
                (None, Some(job)) => {
                    let s = attempt_steps(job, &self.params);
                    r.attempt_steps = Some(s);
                    s
                }
                // only a compacted chain lacks bodies of unscheduled jobs
                (None, None) => u64::MAX,
            };
            pending.push(PendingJob {
                job_id: *id,
                charge: r.summary.charge,
                attempt_steps: steps,
            });
        }
        schedule_jobs(&pending, &ds, &self.params)
    }

    fn check_recorded_schedule(&self, schedule: &[ScheduledJob]) -> Result<(), BlockError> {
        if schedule.is_empty() {
            return Err(BlockError::ScheduleMismatch);
        }
        let mut seen = BTreeSet::new();
        for s in schedule {
            let known = s.job_id == empty_job().id()
                || (self.queue.contains(&s.job_id) && seen.insert(s.job_id));
            if !known || s.zero_bits > self.params.z_max || s.zero_bits < self.params.z_min {
                return Err(BlockError::ScheduleMismatch);
            }
        }
        Ok(())
    }

    fn place_schedule(&mut self, schedule: &[ScheduledJob], height: u64, block_hash: Hash256) {
        for (slot, s) in schedule.iter().enumerate() {
            if let Some(r) = self.jobs.get_mut(&s.job_id) {
                r.placement = Some(Placement {
                    height,
                    block_hash,
                    slot: slot as u16,
                });
                r.attempt_steps = Some(s.attempt_steps);
            }
        }
        let placed: BTreeSet<Hash256> = schedule.iter().map(|s| s.job_id).collect();
        self.queue.retain(|id| !placed.contains(id));
        self.schedule = schedule.to_vec();
    }

    /// Builds the block that completes the current interval from a full
    /// set of miniblocks, keeping every candidate item that is valid in
    /// order and dropping the rest.
    ///
    /// # Panics
    /// Before genesis.
    pub fn assemble(
        &self,
        miniblocks: Vec<Miniblock>,
        items: &BlockItems,
        timestamp: u64,
    ) -> Result<Block, BlockError> {
        let tip = self.tip.expect("assemble needs a genesis block");
        let mut mbs = miniblocks;
        mbs.sort_by_key(|m| m.job_slot);
        let mut s = self.clone();
        let height = tip.height + 1;
        let timestamp = timestamp.max(tip.timestamp);
        if mbs.len() != s.schedule.len()
            || mbs
                .iter()
                .enumerate()
                .any(|(i, m)| m.job_slot as usize != i)
        {
            return Err(BlockError::IncompleteMiniblocks {
                expected: s.schedule.len(),
                found: mbs.len(),
            });
        }
        let rewards = compute_rewards(&s.zero_bits(), s.params.reward);
        let mut payouts: Vec<Payout> = mbs
            .iter()
            .zip(&rewards)
            .map(|(mb, &amount)| Payout {
                to: mb.miner_id,
                amount,
                reason: PayoutReason::Mint { slot: mb.job_slot },
            })
            .collect();
        for p in payouts.clone() {
            s.credit(p.to, p.amount)?;
        }
        let mut runs = 0;
        let (settle_payouts, done) = s.compute_settlements(height, &mut runs);
        payouts.extend(settle_payouts);
        let mut scratch_report = ApplyReport::default();
        for d in done {
            s.finish_settlement(d, &mut scratch_report)?;
        }

        let transactions: Vec<Transaction> = items
            .transactions
            .iter()
            .filter(|tx| s.apply_transaction(tx).is_ok())
            .cloned()
            .collect();
        let mut jobs = Vec::new();
        for job in &items.jobs {
            if check_job_body(job).is_ok()
                && s.register_job(&job.summary(), Some(job), Verification::Relaxed)
                    .is_ok()
            {
                jobs.push(job.clone());
            }
        }
        let commits: Vec<Commit> = items
            .commits
            .iter()
            .filter(|c| s.add_commit(c, height).is_ok())
            .copied()
            .collect();
        let reveals: Vec<Reveal> = items
            .reveals
            .iter()
            .filter(|r| s.add_reveal(r, height).is_ok())
            .cloned()
            .collect();

        let charges = jobs.iter().map(|j| j.charge().0 as u128).sum();
        s.push_window(timestamp - tip.timestamp, charges);
        let scheduled_jobs = s.next_schedule();
        let header = BlockHeader {
            prev_block_hash: tip.hash,
            height,
            timestamp,
            miniblock_hashes: mbs.iter().map(|m| m.hash()).collect(),
            transactions,
            new_jobs: jobs.iter().map(|j| j.summary()).collect(),
            scheduled_jobs,
            commits,
            reveals,
            payouts,
        };
        Ok(Block::new(header, mbs, jobs))
    }
}

fn check_job_body(job: &Job) -> Result<(), JobError> {
    if job.is_empty() {
        return Err(JobError::MarkedEmpty);
    }
    if job.charge().is_zero() {
        return Err(JobError::ZeroCharge);
    }
    if job.eval_step_budget() == 0 {
        return Err(JobError::ZeroBudget);
    }
    validate_evaluator(job.evaluator()).map_err(JobError::Evaluator)?;
    validate_program(job.searcher()).map_err(JobError::Searcher)
}

fn settlement_payouts(s: &Settlement) -> Vec<Payout> {
    if s.winners.is_empty() {
        return vec![Payout {
            to: s.client,
            amount: s.charge,
            reason: PayoutReason::Refund { job_id: s.job_id },
        }];
    }
    s.winners
        .iter()
        .map(|&(to, amount)| Payout {
            to,
            amount,
            reason: PayoutReason::Charge { job_id: s.job_id },
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn charge_split_gives_remainder_to_lowest_id() {
        let s = split_charge(
            Amount(10),
            vec![
                NodeId::from_u64(9),
                NodeId::from_u64(2),
                NodeId::from_u64(5),
            ],
        );
        assert_eq!(
            s,
            vec![
                (NodeId::from_u64(2), Amount(4)),
                (NodeId::from_u64(5), Amount(3)),
                (NodeId::from_u64(9), Amount(3)),
            ]
        );
    }

    #[test]
    fn genesis_applies_and_credits() {
        let params = ChainParams {
            genesis: vec![(NodeId::from_u64(1), Amount(500))],
            ..ChainParams::default()
        };
        let (state, block) = ChainState::genesis(Arc::new(params));
        assert_eq!(state.height(), Some(0));
        assert_eq!(state.tip_hash(), block.hash());
        assert_eq!(state.balance(NodeId::from_u64(1)), Amount(500));
        assert_eq!(state.schedule().len(), 1);
        assert_eq!(state.schedule()[0].zero_bits, 16);
    }
}
