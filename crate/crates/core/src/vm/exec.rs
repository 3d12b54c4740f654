//! The step-counted interpreter.

use std::fmt;

use crate::types::{Hash256, MAX_CANDIDATE_LEN, WORST};

use super::isa::{Opcode, Program};
use super::prng::SplitMix64;

pub const MEMORY_WORDS: usize = 65536;
pub const STACK_LIMIT: usize = 1024;
/// Candidate bytes are packed big-endian into words starting here.
pub const CANDIDATE_BASE: u64 = 0;
pub const CANDIDATE_WORDS: u64 = (MAX_CANDIDATE_LEN / 8) as u64;
/// The four words of the evaluation context.
pub const CTX_BASE: u64 = 512;
/// First word not reserved by the host.
pub const SCRATCH_BASE: u64 = 1024;

const PAGE_WORDS: usize = 256;

#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug)]
pub enum CrashReason {
    StackUnderflow,
    StackOverflow,
    MemoryOutOfBounds,
    DivisionByZero,
    /// Execution ran past the last instruction.
    FellOffEnd,
    /// RAND or EVAL executed by an evaluator.
    ForbiddenOpcode(Opcode),
    /// EVAL asked for more than the candidate region holds.
    CandidateTooLong,
}

impl fmt::Display for CrashReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CrashReason::StackUnderflow => f.write_str("stack-underflow"),
            CrashReason::StackOverflow => f.write_str("stack-overflow"),
            CrashReason::MemoryOutOfBounds => f.write_str("memory-out-of-bounds"),
            CrashReason::DivisionByZero => f.write_str("div-by-zero"),
            CrashReason::FellOffEnd => f.write_str("fell-off-end"),
            CrashReason::ForbiddenOpcode(op) => write!(f, "forbidden-opcode({op})"),
            CrashReason::CandidateTooLong => f.write_str("candidate-too-long"),
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug)]
pub enum Outcome {
    Value(u64),
    Crashed(CrashReason),
    OutOfSteps,
}

#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug)]
pub struct ExecResult {
    pub outcome: Outcome,
    pub steps_used: u64,
}

impl ExecResult {
    /// The value recorded in a nonce: crashes and timeouts score [`WORST`].
    pub fn eval_value(&self) -> u64 {
        match self.outcome {
            Outcome::Value(v) => v,
            _ => WORST,
        }
    }
}

/// Second evaluator argument, derived from everything in a miniblock except
/// the nonce.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug, Default)]
pub struct EvalContext(pub Hash256);

impl EvalContext {
    pub fn words(&self) -> [u64; 4] {
        self.0.words()
    }
}

/// Zero-initialized word memory, allocated a page at a time on first write.
#[derive(Clone)]
pub(crate) struct Memory {
    pages: Vec<Option<Box<[u64; PAGE_WORDS]>>>,
}

impl Memory {
    pub(crate) fn new() -> Memory {
        Memory {
            pages: vec![None; MEMORY_WORDS / PAGE_WORDS],
        }
    }

    pub(crate) fn load(&self, addr: u64) -> Option<u64> {
        if addr >= MEMORY_WORDS as u64 {
            return None;
        }
        let a = addr as usize;
        Some(match &self.pages[a / PAGE_WORDS] {
            Some(page) => page[a % PAGE_WORDS],
            None => 0,
        })
    }

    pub(crate) fn store(&mut self, addr: u64, value: u64) -> Option<()> {
        if addr >= MEMORY_WORDS as u64 {
            return None;
        }
        let a = addr as usize;
        let page = self.pages[a / PAGE_WORDS].get_or_insert_with(|| Box::new([0; PAGE_WORDS]));
        page[a % PAGE_WORDS] = value;
        Some(())
    }

    pub(crate) fn write_candidate(&mut self, candidate: &[u8]) {
        for (k, chunk) in candidate.chunks(8).enumerate() {
            let mut word = [0u8; 8];
            word[..chunk.len()].copy_from_slice(chunk);
            self.store(CANDIDATE_BASE + k as u64, u64::from_be_bytes(word));
        }
    }

    pub(crate) fn read_candidate(&self, len: usize) -> Vec<u8> {
        let mut out = Vec::with_capacity(len);
        for i in 0..len {
            let word = self.load(CANDIDATE_BASE + (i / 8) as u64).unwrap_or(0);
            out.push((word >> (56 - 8 * (i % 8))) as u8);
        }
        out
    }

    pub(crate) fn write_ctx(&mut self, ctx: &EvalContext) {
        for (k, w) in ctx.words().into_iter().enumerate() {
            self.store(CTX_BASE + k as u64, w);
        }
    }
}

/// Why [`Machine::run`] returned.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub(crate) enum Stop {
    Halted(u64),
    Crashed(CrashReason),
    OutOfSteps,
    /// EVAL executed: the candidate length is given, the machine expects
    /// the evaluation pushed before resuming.
    Eval(usize),
}

/// Interpreter state. Evaluators run to completion; searchers suspend at
/// every EVAL.
pub(crate) struct Machine {
    pc: usize,
    stack: Vec<u64>,
    pub(crate) memory: Memory,
    steps: u64,
    budget: u64,
    input_len: u64,
    rng: Option<SplitMix64>,
}

impl Machine {
    pub(crate) fn evaluator(candidate: &[u8], ctx: &EvalContext, budget: u64) -> Machine {
        let mut memory = Memory::new();
        memory.write_candidate(candidate);
        memory.write_ctx(ctx);
        Machine {
            pc: 0,
            stack: Vec::new(),
            memory,
            steps: 0,
            budget,
            input_len: candidate.len() as u64,
            rng: None,
        }
    }

    pub(crate) fn searcher(ctx: &EvalContext, seed: u64, budget: u64) -> Machine {
        let mut memory = Memory::new();
        memory.write_ctx(ctx);
        Machine {
            pc: 0,
            stack: Vec::new(),
            memory,
            steps: 0,
            budget,
            input_len: 0,
            rng: Some(SplitMix64::new(seed)),
        }
    }

    pub(crate) fn steps(&self) -> u64 {
        self.steps
    }

    pub(crate) fn push_external(&mut self, value: u64) -> Result<(), CrashReason> {
        self.push(value)
    }

    fn push(&mut self, v: u64) -> Result<(), CrashReason> {
        if self.stack.len() >= STACK_LIMIT {
            return Err(CrashReason::StackOverflow);
        }
        self.stack.push(v);
        Ok(())
    }

    fn pop(&mut self) -> Result<u64, CrashReason> {
        self.stack.pop().ok_or(CrashReason::StackUnderflow)
    }

    fn binary(
        &mut self,
        f: impl FnOnce(u64, u64) -> Result<u64, CrashReason>,
    ) -> Result<(), CrashReason> {
        let b = self.pop()?;
        let a = self.pop()?;
        let r = f(a, b)?;
        self.push(r)
    }

    pub(crate) fn run(&mut self, program: &Program) -> Stop {
        let code = program.instructions();
        loop {
            let Some(ins) = code.get(self.pc) else {
                return Stop::Crashed(CrashReason::FellOffEnd);
            };
            if self.steps >= self.budget {
                return Stop::OutOfSteps;
            }
            self.steps += 1;
            self.pc += 1;
            let r: Result<(), CrashReason> = match ins.op {
                Opcode::Halt => {
                    return match self.stack.last() {
                        Some(&v) => Stop::Halted(v),
                        None if self.rng.is_some() => Stop::Halted(0),
                        None => Stop::Crashed(CrashReason::StackUnderflow),
                    };
                }
                Opcode::Push => self.push(ins.imm),
                Opcode::Pop => self.pop().map(|_| ()),
                Opcode::Dup => match self.stack.last() {
                    Some(&v) => self.push(v),
                    None => Err(CrashReason::StackUnderflow),
                },
                Opcode::Swap => {
                    let n = self.stack.len();
                    if n < 2 {
                        Err(CrashReason::StackUnderflow)
                    } else {
                        self.stack.swap(n - 1, n - 2);
                        Ok(())
                    }
                }
                Opcode::Load => self.pop().and_then(|addr| {
                    let v = self
                        .memory
                        .load(addr)
                        .ok_or(CrashReason::MemoryOutOfBounds)?;
                    self.push(v)
                }),
                Opcode::Store => (|| {
                    let addr = self.pop()?;
                    let value = self.pop()?;
                    self.memory
                        .store(addr, value)
                        .ok_or(CrashReason::MemoryOutOfBounds)
                })(),
                Opcode::Add => self.binary(|a, b| Ok(a.wrapping_add(b))),
                Opcode::Sub => self.binary(|a, b| Ok(a.wrapping_sub(b))),
                Opcode::Mul => self.binary(|a, b| Ok(a.wrapping_mul(b))),
                Opcode::Div => {
                    self.binary(|a, b| a.checked_div(b).ok_or(CrashReason::DivisionByZero))
                }
                Opcode::Mod => {
                    self.binary(|a, b| a.checked_rem(b).ok_or(CrashReason::DivisionByZero))
                }
                Opcode::And => self.binary(|a, b| Ok(a & b)),
                Opcode::Or => self.binary(|a, b| Ok(a | b)),
                Opcode::Xor => self.binary(|a, b| Ok(a ^ b)),
                Opcode::Shl => self.binary(|a, b| Ok(if b >= 64 { 0 } else { a << b })),
                Opcode::Shr => self.binary(|a, b| Ok(if b >= 64 { 0 } else { a >> b })),
                Opcode::Lt => self.binary(|a, b| Ok((a < b) as u64)),
                Opcode::Eq => self.binary(|a, b| Ok((a == b) as u64)),
                Opcode::Not => self.pop().and_then(|a| self.push((a == 0) as u64)),
                Opcode::Jmp => {
                    self.pc = ins.imm as usize;
                    Ok(())
                }
                Opcode::Jz => self.pop().map(|a| {
                    if a == 0 {
                        self.pc = ins.imm as usize;
                    }
                }),
                Opcode::InputLen => self.push(self.input_len),
                Opcode::Rand => match self.rng.as_mut() {
                    Some(rng) => {
                        let v = rng.next_u64();
                        self.push(v)
                    }
                    None => Err(CrashReason::ForbiddenOpcode(Opcode::Rand)),
                },
                Opcode::Eval => {
                    if self.rng.is_none() {
                        Err(CrashReason::ForbiddenOpcode(Opcode::Eval))
                    } else {
                        match self.pop() {
                            Ok(len) if len <= MAX_CANDIDATE_LEN as u64 => {
                                return Stop::Eval(len as usize);
                            }
                            Ok(_) => Err(CrashReason::CandidateTooLong),
                            Err(e) => Err(e),
                        }
                    }
                }
            };
            if let Err(reason) = r {
                return Stop::Crashed(reason);
            }
        }
    }
}

/// Runs an evaluator on `(candidate, ctx)` with an exact step budget.
///
/// Every retired instruction costs one step, including the one that
/// crashes and the final HALT. When the budget is exhausted before the next
/// instruction the result is `OutOfSteps` with `steps_used == budget`.
pub fn execute_evaluator(
    evaluator: &Program,
    candidate: &[u8],
    ctx: &EvalContext,
    budget: u64,
) -> ExecResult {
    let mut m = Machine::evaluator(candidate, ctx, budget);
    let outcome = match m.run(evaluator) {
        Stop::Halted(v) => Outcome::Value(v),
        Stop::Crashed(r) => Outcome::Crashed(r),
        Stop::OutOfSteps => Outcome::OutOfSteps,
        Stop::Eval(_) => unreachable!("evaluator machines have no rng and crash on EVAL"),
    };
    ExecResult {
        outcome,
        steps_used: m.steps(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::vm::isa::Instruction;
    use Opcode::*;

    fn prog(ops: &[(Opcode, u64)]) -> Program {
        Program::new(
            ops.iter()
                .map(|&(op, imm)| Instruction::new(op, imm))
                .collect(),
        )
    }

    fn run(p: &Program, candidate: &[u8]) -> ExecResult {
        execute_evaluator(p, candidate, &EvalContext::default(), 1_000)
    }

    #[test]
    fn push_halt() {
        let r = run(&prog(&[(Push, 0), (Halt, 0)]), b"anything");
        assert_eq!(
            r,
            ExecResult {
                outcome: Outcome::Value(0),
                steps_used: 2
            }
        );
    }

    #[test]
    fn division_by_zero_counts_the_crashing_step() {
        let r = run(&prog(&[(Push, 1), (Push, 0), (Div, 0), (Halt, 0)]), b"");
        assert_eq!(r.outcome, Outcome::Crashed(CrashReason::DivisionByZero));
        assert_eq!(r.steps_used, 3);
        assert_eq!(r.eval_value(), WORST);
    }

    #[test]
    fn budget_cuts_exactly() {
        let p = prog(&[(Push, 1), (Push, 2), (Add, 0), (Halt, 0)]);
        let r = execute_evaluator(&p, b"", &EvalContext::default(), 3);
        assert_eq!(
            r,
            ExecResult {
                outcome: Outcome::OutOfSteps,
                steps_used: 3
            }
        );
        let r = execute_evaluator(&p, b"", &EvalContext::default(), 4);
        assert_eq!(
            r,
            ExecResult {
                outcome: Outcome::Value(3),
                steps_used: 4
            }
        );
    }

    #[test]
    fn infinite_loop_stops_at_budget() {
        let p = prog(&[(Jmp, 0)]);
        let r = execute_evaluator(&p, b"", &EvalContext::default(), 12345);
        assert_eq!(
            r,
            ExecResult {
                outcome: Outcome::OutOfSteps,
                steps_used: 12345
            }
        );
    }

    #[test]
    fn crash_reasons() {
        assert_eq!(
            run(&prog(&[(Pop, 0)]), b"").outcome,
            Outcome::Crashed(CrashReason::StackUnderflow)
        );
        assert_eq!(
            run(&prog(&[(Push, 70000), (Load, 0)]), b"").outcome,
            Outcome::Crashed(CrashReason::MemoryOutOfBounds)
        );
        assert_eq!(
            run(&prog(&[(Push, 1)]), b"").outcome,
            Outcome::Crashed(CrashReason::FellOffEnd)
        );
        assert_eq!(
            run(&prog(&[(Rand, 0), (Halt, 0)]), b"").outcome,
            Outcome::Crashed(CrashReason::ForbiddenOpcode(Rand))
        );
        let deep = prog(&[(Push, 1), (Jmp, 0)]);
        let r = execute_evaluator(&deep, b"", &EvalContext::default(), 10_000);
        assert_eq!(r.outcome, Outcome::Crashed(CrashReason::StackOverflow));
        assert_eq!(r.steps_used, 2 * STACK_LIMIT as u64 + 1);
    }

    #[test]
    fn candidate_and_ctx_regions() {
        // load candidate word 0, ctx word 3, input length
        let p = prog(&[(Push, CANDIDATE_BASE), (Load, 0), (Halt, 0)]);
        assert_eq!(
            run(&p, &[1, 2, 3]).outcome,
            Outcome::Value(0x0102_0300_0000_0000)
        );
        let mut h = [0u8; 32];
        h[31] = 9;
        let p = prog(&[(Push, CTX_BASE + 3), (Load, 0), (Halt, 0)]);
        let r = execute_evaluator(&p, b"", &EvalContext(Hash256(h)), 10);
        assert_eq!(r.outcome, Outcome::Value(9));
        let p = prog(&[(InputLen, 0), (Halt, 0)]);
        assert_eq!(run(&p, &[0; 13]).outcome, Outcome::Value(13));
    }

    #[test]
    fn arithmetic_semantics() {
        let cases: &[(Opcode, u64, u64, u64)] = &[
            (Sub, 1, 2, u64::MAX),
            (Mul, u64::MAX, 2, u64::MAX - 1),
            (Shl, 1, 64, 0),
            (Shr, 256, 4, 16),
            (Lt, 3, 4, 1),
            (Eq, 3, 4, 0),
            (Mod, 17, 5, 2),
            (Xor, 0b1100, 0b1010, 0b0110),
        ];
        for &(op, a, b, want) in cases {
            let r = run(&prog(&[(Push, a), (Push, b), (op, 0), (Halt, 0)]), b"");
            assert_eq!(r.outcome, Outcome::Value(want), "{op}");
        }
        let r = run(&prog(&[(Push, 5), (Not, 0), (Halt, 0)]), b"");
        assert_eq!(r.outcome, Outcome::Value(0));
    }
}
