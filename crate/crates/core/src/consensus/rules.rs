//! Pure consensus rules: difficulty, job selection, reward split and
//! miniblock validity.

use std::sync::OnceLock;

use thiserror::Error;

use crate::codec::ContextPreimage;
use crate::hash::{hash_object, leading_zero_bits};
use crate::types::{Amount, Hash256, Job, Miniblock, NodeId, ScheduledJob};
use crate::vm::{execute_evaluator, measure_eval_steps, EvalContext};

use super::params::{ChainParams, DifficultyState};

/// Random candidates used to measure a job's evaluation cost.
pub const EVAL_COST_SAMPLES: usize = 16;

/// Upper bound on scheduled slots per block; slots are 16-bit.
pub const MAX_SLOTS: usize = 1024;

/// The PoW-fallback job, built once.
pub fn empty_job() -> &'static Job {
    static EMPTY: OnceLock<Job> = OnceLock::new();
    EMPTY.get_or_init(Job::empty)
}

/// Mean evaluation steps of `job`, measured the same way by every node.
pub fn job_eval_steps(job: &Job) -> f64 {
    measure_eval_steps(
        job.evaluator(),
        job.eval_step_budget(),
        EVAL_COST_SAMPLES,
        job.id().prefix_u64(),
    )
}

/// Steps per hash attempt on `job`: one evaluation plus one hash.
pub fn attempt_steps(job: &Job, params: &ChainParams) -> u64 {
    job_eval_steps(job).round() as u64 + params.hash_cost
}

/// Attempt cost of the empty job, the unit in which work is measured.
pub fn reference_attempt_steps(params: &ChainParams) -> u64 {
    attempt_steps(empty_job(), params)
}

/// Second evaluator argument for a miniblock: a hash of everything in it
/// except the nonce.
pub fn eval_context_for(prev_block_hash: Hash256, job_slot: u16, miner_id: NodeId) -> EvalContext {
    EvalContext(hash_object(&ContextPreimage {
        prev_block_hash,
        job_slot,
        miner_id,
    }))
}

/// One block's contribution to the difficulty measurement window.
#[derive(Clone, Copy, PartialEq, Debug, Default)]
pub struct WindowSample {
    /// Empty-job-equivalent attempts expected to complete the block's miniblocks.
    pub work: f64,
    /// Ticks since the parent block.
    pub elapsed: u64,
    /// Total charge of jobs registered in the block.
    pub charges: u128,
}

/// Expected work of a schedule, in empty-job attempts.
pub fn schedule_work(schedule: &[ScheduledJob], reference_attempt: u64) -> f64 {
    schedule
        .iter()
        .map(|s| (s.zero_bits as f64).exp2() * s.attempt_steps as f64 / reference_attempt as f64)
        .sum()
}

/// Evaluation rate `E` (work per target block time) and charge rate `C`
/// (charge per block) over `samples`; floors apply when there is no data.
pub fn measure_window<'a>(
    samples: impl IntoIterator<Item = &'a WindowSample>,
    params: &ChainParams,
) -> DifficultyState {
    let (mut work, mut elapsed, mut charges, mut count) = (0.0, 0u128, 0u128, 0usize);
    for s in samples {
        work += s.work;
        elapsed += s.elapsed as u128;
        charges += s.charges;
        count += 1;
    }
    let e = if elapsed == 0 || work <= 0.0 {
        params.e_floor as f64
    } else {
        work * params.block_time as f64 / elapsed as f64
    };
    let c = if count == 0 || charges == 0 {
        params.c_floor as f64
    } else {
        (charges as f64 / count as f64).max(params.c_floor as f64)
    };
    DifficultyState { e, c }
}

/// A registered job waiting for a slot.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub struct PendingJob {
    pub job_id: Hash256,
    pub charge: Amount,
    pub attempt_steps: u64,
}

fn clamp_zero_bits(log2_attempts: f64, params: &ChainParams) -> u8 {
    let z = log2_attempts.round();
    if z.is_nan() || z < params.z_min as f64 {
        params.z_min
    } else if z > params.z_max as f64 {
        params.z_max
    } else {
        z as u8
    }
}

/// Zero-bit requirement giving a job charge share `charge / total_charge`
/// of `e` reference attempts, compensated for its attempt cost.
pub fn zero_bits_for(
    charge: f64,
    total_charge: f64,
    e: f64,
    attempt: u64,
    reference_attempt: u64,
    params: &ChainParams,
) -> u8 {
    let log2_attempts =
        (charge * e / total_charge).log2() - (attempt as f64 / reference_attempt as f64).log2();
    clamp_zero_bits(log2_attempts, params)
}

/// Chooses the next interval's jobs from `pending` (in submission order).
///
/// Jobs are taken first come first served while their total charge stays
/// within `2C`; the first pending job is always taken so that one large job
/// cannot block the queue. Zero bits follow `2^z ≈ c·E/C` with one bit less
/// per doubling of the attempt cost. `C` is raised to the selected total
/// when that exceeds it, which keeps the interval near one block time.
/// Without client jobs, `n_target` empty jobs share `E`.
pub fn schedule_jobs(
    pending: &[PendingJob],
    ds: &DifficultyState,
    params: &ChainParams,
) -> Vec<ScheduledJob> {
    let reference = reference_attempt_steps(params);
    let cap = 2.0 * ds.c;
    let mut selected: Vec<&PendingJob> = Vec::new();
    let mut total = 0.0;
    for job in pending {
        let c = job.charge.0 as f64;
        if !selected.is_empty() && (total + c > cap || selected.len() == MAX_SLOTS) {
            break;
        }
        selected.push(job);
        total += c;
    }
    if selected.is_empty() {
        let n = params.n_target.min(MAX_SLOTS as u32);
        let z = clamp_zero_bits((ds.e / n as f64).log2(), params);
        let empty = ScheduledJob {
            job_id: empty_job().id(),
            zero_bits: z,
            attempt_steps: reference,
        };
        return vec![empty; n as usize];
    }
    let c_eff = ds.c.max(total);
    selected
        .into_iter()
        .map(|j| ScheduledJob {
            job_id: j.job_id,
            zero_bits: zero_bits_for(
                j.charge.0 as f64,
                c_eff,
                ds.e,
                j.attempt_steps,
                reference,
                params,
            ),
            attempt_steps: j.attempt_steps,
        })
        .collect()
}

/// Splits `reward` over slots in proportion to `2^z`. Integer shares are
/// rounded down and the leftover coins go to the largest-`z` slot (lowest
/// index on ties), so the shares always sum to `reward`.
///
/// # Panics
/// If `zero_bits` is empty or holds a value above 63.
pub fn compute_rewards(zero_bits: &[u8], reward: Amount) -> Vec<Amount> {
    assert!(
        !zero_bits.is_empty(),
        "reward split needs at least one slot"
    );
    assert!(zero_bits.iter().all(|&z| z < 64), "zero bits above 63");
    let weights: Vec<u128> = zero_bits.iter().map(|&z| 1u128 << z).collect();
    let total: u128 = weights.iter().sum();
    let r = reward.0 as u128;
    let mut shares: Vec<u64> = weights.iter().map(|w| (r * w / total) as u64).collect();
    let assigned: u64 = shares.iter().sum();
    let top = (0..zero_bits.len())
        .max_by(|&a, &b| zero_bits[a].cmp(&zero_bits[b]).then(b.cmp(&a)))
        .expect("nonempty");
    shares[top] += reward.0 - assigned;
    shares.into_iter().map(Amount).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum MiniblockError {
    #[error("wrong parent block")]
    WrongParent,
    #[error("slot {0} is not scheduled")]
    BadSlot(u16),
    #[error("job {0} is unknown")]
    UnknownJob(Hash256),
    #[error("evaluation mismatch: claimed {claimed}, evaluator returned {actual}")]
    EvaluationMismatch { claimed: u64, actual: u64 },
    #[error("insufficient zeros: required {required}, found {found}")]
    InsufficientZeros { required: u8, found: u32 },
}

impl MiniblockError {
    /// Stable short code for reports.
    pub fn code(&self) -> &'static str {
        match self {
            MiniblockError::WrongParent => "wrong-parent",
            MiniblockError::BadSlot(_) => "bad-slot",
            MiniblockError::UnknownJob(_) => "unknown-job",
            MiniblockError::EvaluationMismatch { .. } => "evaluation-mismatch",
            MiniblockError::InsufficientZeros { .. } => "insufficient-zeros",
        }
    }
}

/// Checks the hash-only rules: parent, slot and leading zero bits.
pub fn check_miniblock_header(
    mb: &Miniblock,
    parent_hash: Hash256,
    schedule: &[ScheduledJob],
) -> Result<(), MiniblockError> {
    if mb.prev_block_hash != parent_hash {
        return Err(MiniblockError::WrongParent);
    }
    let slot = schedule
        .get(mb.job_slot as usize)
        .ok_or(MiniblockError::BadSlot(mb.job_slot))?;
    let found = leading_zero_bits(&mb.hash());
    if found < slot.zero_bits as u32 {
        return Err(MiniblockError::InsufficientZeros {
            required: slot.zero_bits,
            found,
        });
    }
    Ok(())
}

/// Full miniblock check: [`check_miniblock_header`] plus re-running the
/// job's evaluator on the nonce candidate under the miniblock's context.
/// `job_for` resolves scheduled job ids to bodies.
pub fn validate_miniblock<'a>(
    mb: &Miniblock,
    parent_hash: Hash256,
    schedule: &[ScheduledJob],
    job_for: impl FnOnce(&Hash256) -> Option<&'a Job>,
) -> Result<(), MiniblockError> {
    if mb.prev_block_hash != parent_hash {
        return Err(MiniblockError::WrongParent);
    }
    let slot = schedule
        .get(mb.job_slot as usize)
        .ok_or(MiniblockError::BadSlot(mb.job_slot))?;
    let job = job_for(&slot.job_id).ok_or(MiniblockError::UnknownJob(slot.job_id))?;
    let ctx = eval_context_for(parent_hash, mb.job_slot, mb.miner_id);
    let actual = execute_evaluator(
        job.evaluator(),
        &mb.nonce.candidate,
        &ctx,
        job.eval_step_budget(),
    )
    .eval_value();
    if actual != mb.nonce.eval_value {
        return Err(MiniblockError::EvaluationMismatch {
            claimed: mb.nonce.eval_value,
            actual,
        });
    }
    check_miniblock_header(mb, parent_hash, schedule)
}
