use std::collections::HashSet;
use std::sync::Arc;

use crate::consensus::eval_context_for;
use crate::hash::leading_zero_bits;
use crate::types::{Hash256, Job, Miniblock, NodeId, Nonce, ScheduledJob, WORST};
use crate::vm::builtin::random_search;
use crate::vm::{execute_evaluator, EvalContext, SearchEnd, SearchSession};

use super::MinerPolicy;

/// Candidate length the random fallback uses before the job's searcher
/// has produced any candidate.
const DEFAULT_FALLBACK_LEN: usize = 8;
/// Distinct candidates remembered per slot for repeat detection.
const MAX_REMEMBERED: usize = 1 << 20;

/// Result of a bounded piece of mining work.
#[derive(Clone, Debug, Default)]
pub struct Work {
    /// Steps spent: searcher steps, evaluation steps and one hash cost
    /// per attempt.
    pub steps: u64,
    pub attempts: u64,
    pub found: Option<Miniblock>,
}

/// Lowest evaluation seen for one job in one interval.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct BestFound {
    pub candidate: Vec<u8>,
    pub value: u64,
}

/// Search on one slot of the schedule on top of one block.
pub struct SlotSearch {
    miner: NodeId,
    prev: Hash256,
    slot: u16,
    scheduled: ScheduledJob,
    job: Job,
    ctx: EvalContext,
    session: SearchSession,
    seed: u64,
    restarts: u64,
    fallback: bool,
    last_len: usize,
    search_step_budget: u64,
    fallback_factor: f64,
    hash_cost: u64,
    best: Option<BestFound>,
    counter: u64,
    tried: HashSet<Vec<u8>>,
    fresh: u64,
    searcher_steps: u64,
    repeat_steps: u64,
}

fn session_seed(seed: u64, restarts: u64) -> u64 {
    seed ^ restarts.wrapping_mul(0x9e37_79b9_7f4a_7c15)
}

impl SlotSearch {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        miner: NodeId,
        prev: Hash256,
        slot: u16,
        scheduled: ScheduledJob,
        job: Job,
        policy: &MinerPolicy,
        hash_cost: u64,
        seed: u64,
    ) -> SlotSearch {
        let ctx = eval_context_for(prev, slot, miner);
        let session = SearchSession::new(
            job.shared_searcher(),
            job.shared_evaluator(),
            ctx,
            job.eval_step_budget(),
            policy.search_step_budget,
            seed,
        );
        SlotSearch {
            miner,
            prev,
            slot,
            scheduled,
            job,
            ctx,
            session,
            seed,
            restarts: 0,
            fallback: false,
            last_len: DEFAULT_FALLBACK_LEN,
            search_step_budget: policy.search_step_budget,
            fallback_factor: policy.fallback_factor,
            hash_cost,
            best: None,
            counter: seed,
            tried: HashSet::new(),
            fresh: 0,
            searcher_steps: 0,
            repeat_steps: 0,
        }
    }

    pub fn slot(&self) -> u16 {
        self.slot
    }

    pub fn prev(&self) -> Hash256 {
        self.prev
    }

    pub fn job_id(&self) -> Hash256 {
        self.scheduled.job_id
    }

    pub fn ctx(&self) -> &EvalContext {
        &self.ctx
    }

    pub fn best(&self) -> Option<&BestFound> {
        self.best.as_ref()
    }

    pub fn in_fallback(&self) -> bool {
        self.fallback
    }

    fn restart(&mut self, fallback: bool) {
        self.restarts += 1;
        self.fallback |= fallback;
        let searcher = if self.fallback {
            Arc::new(random_search(self.last_len, 256))
        } else {
            self.job.shared_searcher()
        };
        self.session = SearchSession::new(
            searcher,
            self.job.shared_evaluator(),
            self.ctx,
            self.job.eval_step_budget(),
            self.search_step_budget,
            session_seed(self.seed, self.restarts),
        );
    }

    /// Mean steps of one evaluation of this job, never zero.
    fn eval_cost(&self) -> f64 {
        self.scheduled
            .attempt_steps
            .saturating_sub(self.hash_cost)
            .max(1) as f64
    }

    /// Searcher steps plus evaluations of already tried candidates, which
    /// cannot produce a new hash, against the cost of fresh attempts.
    fn searcher_is_wasteful(&self) -> bool {
        let fresh = self.fresh.max(1) as f64;
        (self.searcher_steps + self.repeat_steps) as f64 / (fresh * self.eval_cost())
            > self.fallback_factor
    }

    fn miniblock(&self, candidate: Vec<u8>, value: u64) -> Miniblock {
        Miniblock {
            prev_block_hash: self.prev,
            job_slot: self.slot,
            miner_id: self.miner,
            nonce: Nonce {
                candidate,
                eval_value: value,
            },
        }
    }

    /// Runs the searcher until a miniblock meets the slot's zero-bit
    /// requirement or `max_steps` steps have been spent.
    pub fn work(&mut self, max_steps: u64) -> Work {
        let mut w = Work::default();
        while w.steps < max_steps {
            let before = self.session.searcher_steps();
            let eval = match self.session.next_eval() {
                Ok(e) => e,
                Err(end) => {
                    w.steps += self.session.searcher_steps() - before;
                    self.searcher_steps += self.session.searcher_steps() - before;
                    let crashed = matches!(end, SearchEnd::Crashed(_));
                    self.restart(crashed || self.session.eval_count() == 0);
                    continue;
                }
            };
            let search_steps = self.session.searcher_steps() - before;
            w.steps += search_steps + eval.eval_steps + self.hash_cost;
            w.attempts += 1;
            self.last_len = eval.candidate.len().max(1);
            if !self.fallback {
                self.searcher_steps += search_steps;
                if self.tried.contains(&eval.candidate) {
                    self.repeat_steps += eval.eval_steps;
                } else {
                    self.fresh += 1;
                    if self.tried.len() < MAX_REMEMBERED {
                        self.tried.insert(eval.candidate.clone());
                    }
                }
            }
            if eval.value != WORST && self.best.as_ref().is_none_or(|b| eval.value < b.value) {
                self.best = Some(BestFound {
                    candidate: eval.candidate.clone(),
                    value: eval.value,
                });
            }
            let mb = self.miniblock(eval.candidate, eval.value);
            if leading_zero_bits(&mb.hash()) >= self.scheduled.zero_bits as u32 {
                w.found = Some(mb);
                return w;
            }
            if !self.fallback && self.searcher_is_wasteful() {
                self.tried = HashSet::new();
                self.restart(true);
            }
        }
        w
    }

    /// Produces a valid miniblock by hashing alone, for simulations that
    /// draw mining times instead of executing searchers. Only candidates
    /// of the empty job skip the searcher; other jobs run it.
    pub fn grind(&mut self) -> Miniblock {
        if !self.job.is_empty() {
            loop {
                if let Some(mb) = self.work(u64::MAX).found {
                    return mb;
                }
            }
        }
        let value = execute_evaluator(
            self.job.evaluator(),
            &[],
            &self.ctx,
            self.job.eval_step_budget(),
        )
        .eval_value();
        loop {
            self.counter = self.counter.wrapping_add(1);
            let mb = self.miniblock(self.counter.to_be_bytes().to_vec(), value);
            if leading_zero_bits(&mb.hash()) >= self.scheduled.zero_bits as u32 {
                return mb;
            }
        }
    }
}
