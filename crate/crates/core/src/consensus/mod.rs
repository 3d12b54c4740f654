//! Chain rules: difficulty and job scheduling, reward split, block and
//! miniblock validation, chain ordering, verification and compaction.

mod chain;
mod params;
mod rules;
mod state;

pub use chain::{
    chain_to_bytes, compact_chain, compare_chains, compare_summaries, read_chain, relaxed_horizon,
    tip_digest, verify_chain, write_chain, Chain, ChainFileError, ChainSummary, VerifyCache,
    VerifyError, VerifyReport,
};
pub use params::{ChainParams, DifficultyState, ParamsError, MAX_ZERO_BITS};
pub use rules::{
    attempt_steps, check_miniblock_header, compute_rewards, empty_job, eval_context_for,
    job_eval_steps, measure_window, reference_attempt_steps, schedule_jobs, schedule_work,
    validate_miniblock, zero_bits_for, MiniblockError, PendingJob, WindowSample, EVAL_COST_SAMPLES,
    MAX_SLOTS,
};
pub use state::{
    genesis_block, ApplyReport, BlockError, BlockItems, ChainState, CommitError, JobError,
    Placement, RevealError, Settlement, TxError, Verification,
};
