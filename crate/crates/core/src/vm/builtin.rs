//! Programs shipped with the node: the PoW-fallback job and the generic
//! random searcher miners switch to when a client searcher misbehaves.

use crate::types::{Amount, Job, NodeId, MAX_CANDIDATE_LEN};

use super::asm::ProgramBuilder;
use super::exec::CANDIDATE_BASE;
use super::isa::{Instruction, Opcode, Program};

/// Evaluation step budget of the empty job.
pub const EMPTY_JOB_EVAL_BUDGET: u64 = 16;

/// `[PUSH 0; HALT]`: every candidate scores 0.
pub fn empty_evaluator() -> Program {
    Program::new(vec![
        Instruction::new(Opcode::Push, 0),
        Instruction::op(Opcode::Halt),
    ])
}

/// Writes one random word as an 8-byte candidate and evaluates it, forever.
pub fn empty_searcher() -> Program {
    Program::new(vec![
        Instruction::op(Opcode::Rand),
        Instruction::new(Opcode::Push, CANDIDATE_BASE),
        Instruction::op(Opcode::Store),
        Instruction::new(Opcode::Push, 8),
        Instruction::op(Opcode::Eval),
        Instruction::op(Opcode::Pop),
        Instruction::new(Opcode::Jmp, 0),
    ])
}

/// The job scheduled when no client job is pending, turning the protocol
/// into plain proof-of-work.
pub fn empty_job() -> Job {
    Job::from_parts(
        NodeId::from_u64(0),
        Amount::ZERO,
        empty_evaluator(),
        empty_searcher(),
        EMPTY_JOB_EVAL_BUDGET,
        true,
        0,
    )
}

/// Endless uniform random search over candidates of `len` bytes, each byte
/// drawn from `0..alphabet`. Byte packing is unrolled so an attempt costs
/// the same number of steps every time.
///
/// # Panics
/// If `len` exceeds the candidate limit or `alphabet` is not in `1..=256`.
pub fn random_search(len: usize, alphabet: u64) -> Program {
    assert!(
        len <= MAX_CANDIDATE_LEN,
        "candidate length {len} over limit"
    );
    assert!(
        (1..=256).contains(&alphabet),
        "alphabet size {alphabet} out of range"
    );
    let mut b = ProgramBuilder::new();
    b.label("top");
    for (word, chunk_start) in (0..len).step_by(8).enumerate() {
        let bytes = (len - chunk_start).min(8);
        b.push(0);
        for _ in 0..bytes {
            b.push(8).op(Opcode::Shl);
            b.op(Opcode::Rand).push(alphabet).op(Opcode::Mod);
            b.op(Opcode::Or);
        }
        if bytes < 8 {
            b.push(8 * (8 - bytes) as u64).op(Opcode::Shl);
        }
        b.store_at(CANDIDATE_BASE + word as u64);
    }
    b.push(len as u64).op(Opcode::Eval).op(Opcode::Pop);
    b.jmp("top");
    b.build().expect("labels are defined above")
}
