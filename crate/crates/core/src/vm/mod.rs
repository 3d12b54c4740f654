//! Deterministic, step-metered stack machine for evaluators and searchers.
//!
//! Evaluators are pure functions of `(candidate, ctx)`. Searchers may also
//! draw seeded random numbers (RAND) and hand a candidate to the host for
//! evaluation (EVAL); every such evaluation is one hash attempt.

pub mod asm;
pub mod builtin;
mod exec;
mod isa;
mod metrics;
mod prng;
mod searcher;

pub use exec::{
    execute_evaluator, CrashReason, EvalContext, ExecResult, Outcome, CANDIDATE_BASE,
    CANDIDATE_WORDS, CTX_BASE, MEMORY_WORDS, SCRATCH_BASE, STACK_LIMIT,
};
pub use isa::{
    validate_evaluator, validate_program, Instruction, Opcode, Program, ProgramError,
    MAX_PROGRAM_LEN,
};
pub use metrics::{
    estimate_reuse_resistance, measure_eval_steps, ReuseResistance, DEFAULT_HASH_COST,
    MEASURE_MAX_CANDIDATE,
};
pub use prng::SplitMix64;
pub use searcher::{
    run_searcher, Evaluation, SearchControl, SearchEnd, SearchOutcome, SearchSession,
};
