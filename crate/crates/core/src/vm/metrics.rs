//! Cost and reuse-resistance measurements of evaluator programs.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::types::Hash256;

use super::exec::{execute_evaluator, EvalContext};
use super::isa::Program;

/// Step-equivalent cost of one miniblock hash, used wherever evaluation
/// and hashing costs are added up.
pub const DEFAULT_HASH_COST: u64 = 64;

/// Longest random candidate used by [`measure_eval_steps`].
pub const MEASURE_MAX_CANDIDATE: usize = 64;

fn random_ctx(rng: &mut ChaCha8Rng) -> EvalContext {
    EvalContext(Hash256(rng.random()))
}

/// Mean steps per evaluation over `samples` random candidates (0 to 64
/// random bytes) and random contexts. Crashed and out-of-budget runs count
/// with the steps they used.
///
/// # Panics
/// If `samples` is zero.
pub fn measure_eval_steps(evaluator: &Program, budget: u64, samples: usize, seed: u64) -> f64 {
    assert!(samples >= 1, "need at least one sample");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut total = 0u128;
    for _ in 0..samples {
        let len = rng.random_range(0..=MEASURE_MAX_CANDIDATE);
        let candidate: Vec<u8> = (0..len).map(|_| rng.random()).collect();
        let ctx = random_ctx(&mut rng);
        total += execute_evaluator(evaluator, &candidate, &ctx, budget).steps_used as u128;
    }
    total as f64 / samples as f64
}

#[derive(Clone, Copy, PartialEq, Debug)]
pub struct ReuseResistance {
    /// Fraction of trial pairs that produced equal evaluations.
    pub collision_rate: f64,
    /// Expected trials per repeated value; infinite without collisions.
    pub u_estimate: f64,
    /// Reuse must be rarer than this for evaluation to beat hashing.
    pub threshold: f64,
    pub mean_eval_steps: f64,
    pub passes: bool,
}

/// Runs `evaluator` on one fixed candidate under `trials` random contexts
/// and checks that equal outputs are rare enough that caching evaluations
/// is no cheaper than honest work: `u > (s + h) / h`, where `s` is the mean
/// evaluation cost and `h` the hash cost.
///
/// # Panics
/// If `trials < 2`.
pub fn estimate_reuse_resistance(
    evaluator: &Program,
    candidate: &[u8],
    budget: u64,
    trials: usize,
    seed: u64,
    hash_cost: u64,
) -> ReuseResistance {
    assert!(trials >= 2, "need at least two trials");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut counts: HashMap<u64, u64> = HashMap::new();
    let mut steps = 0u128;
    for _ in 0..trials {
        let ctx = random_ctx(&mut rng);
        let r = execute_evaluator(evaluator, candidate, &ctx, budget);
        steps += r.steps_used as u128;
        *counts.entry(r.eval_value()).or_default() += 1;
    }
    let pairs = (trials as f64) * (trials as f64 - 1.0) / 2.0;
    let equal: f64 = counts
        .values()
        .map(|&k| (k as f64) * (k as f64 - 1.0) / 2.0)
        .sum();
    let collision_rate = equal / pairs;
    let u_estimate = if equal == 0.0 {
        f64::INFINITY
    } else {
        1.0 / collision_rate
    };
    let mean_eval_steps = steps as f64 / trials as f64;
    let threshold = (mean_eval_steps + hash_cost as f64) / hash_cost as f64;
    ReuseResistance {
        collision_rate,
        u_estimate,
        threshold,
        mean_eval_steps,
        passes: u_estimate > threshold,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::vm::builtin::empty_evaluator;
    use crate::vm::exec::CTX_BASE;
    use crate::vm::isa::{Instruction, Opcode};

    #[test]
    fn push_halt_costs_two() {
        assert_eq!(measure_eval_steps(&empty_evaluator(), 16, 100, 1), 2.0);
    }

    #[test]
    fn measurement_is_deterministic() {
        // cost depends on the input length
        let p = Program::new(vec![
            Instruction::op(Opcode::InputLen),
            Instruction::new(Opcode::Jz, 3),
            Instruction::op(Opcode::InputLen),
            Instruction::op(Opcode::Halt),
        ]);
        let a = measure_eval_steps(&p, 100, 500, 7);
        assert_eq!(a, measure_eval_steps(&p, 100, 500, 7));
        assert!(a > 3.0 && a < 4.0, "{a}");
    }

    #[test]
    fn constant_evaluator_fails() {
        let r = estimate_reuse_resistance(&empty_evaluator(), b"x", 16, 1000, 3, DEFAULT_HASH_COST);
        assert_eq!(r.collision_rate, 1.0);
        assert!(!r.passes);
    }

    #[test]
    fn ctx_echo_passes() {
        let p = Program::new(vec![
            Instruction::new(Opcode::Push, CTX_BASE + 3),
            Instruction::op(Opcode::Load),
            Instruction::op(Opcode::Halt),
        ]);
        let r = estimate_reuse_resistance(&p, b"", 16, 10_000, 3, DEFAULT_HASH_COST);
        assert_eq!(r.collision_rate, 0.0);
        assert!(r.u_estimate.is_infinite());
        assert!(r.passes);
    }
}
