//! Code generation for the TSP evaluator and searcher.

use crate::vm::asm::ProgramBuilder;
use crate::vm::{Opcode, Program, CANDIDATE_BASE, CTX_BASE, SCRATCH_BASE};

use super::{TspInstance, SUBGRID};

use Opcode::*;

/// Non-improving moves tolerated before the searcher reshuffles, per city
/// squared.
pub const DEFAULT_STALL_LIMIT: u64 = 4;

// evaluator scratch layout
const BAD: u64 = SCRATCH_BASE;
const TOTAL: u64 = SCRATCH_BASE + 1;
const A: u64 = SCRATCH_BASE + 6;
const B: u64 = SCRATCH_BASE + 7;
const TMP: u64 = SCRATCH_BASE + 8;
const FLAG: u64 = SCRATCH_BASE + 9;
const TOUR: u64 = SCRATCH_BASE + 16;
const SEEN: u64 = SCRATCH_BASE + 32;
const XS: u64 = SCRATCH_BASE + 48;
const YS: u64 = SCRATCH_BASE + 64;

/// Highest power of four not above the largest possible squared distance.
const SQRT_TOP_BIT: u32 = 50;

/// `bad |= top of stack`
fn or_into_bad(b: &mut ProgramBuilder) {
    b.load_at(BAD).op(Or).store_at(BAD);
}

/// `[a, b] -> [|a - b|]` without branching.
fn abs_diff(b: &mut ProgramBuilder) {
    b.store_at(B).store_at(A);
    b.load_at(A).load_at(B).op(Sub);
    // times 1 - 2*(a < b), which is -1 modulo 2^64 when a < b
    b.push(1)
        .load_at(A)
        .load_at(B)
        .op(Lt)
        .push(2)
        .op(Mul)
        .op(Sub);
    b.op(Mul);
}

/// `[n] -> [floor(sqrt(n))]` in a fixed number of steps.
fn isqrt(b: &mut ProgramBuilder) {
    b.push(0); // [num, res]
    for k in 0..=SQRT_TOP_BIT / 2 {
        let bit = 1u64 << (SQRT_TOP_BIT - 2 * k);
        b.op(Dup).push(bit).op(Add).store_at(TMP);
        b.op(Swap)
            .op(Dup)
            .load_at(TMP)
            .op(Lt)
            .op(Not)
            .op(Dup)
            .store_at(FLAG);
        // num -= flag * (res + bit)
        b.load_at(TMP).op(Mul).op(Sub);
        // res = res / 2 + flag * bit
        b.op(Swap)
            .push(1)
            .op(Shr)
            .load_at(FLAG)
            .push(bit)
            .op(Mul)
            .op(Add);
    }
    b.op(Swap).op(Pop);
}

/// Evaluator for `inst`: tour length under the context-perturbed city
/// positions, or WORST when the candidate is not a permutation of the
/// cities. Every candidate costs the same number of steps.
pub fn evaluator(inst: &TspInstance) -> Program {
    let n = inst.len() as u64;
    let mut b = ProgramBuilder::new();

    // Coordinate m (x of city k is 2k, y is 2k+1) moves by a signed 9-bit
    // amount read from the context. All positions carry the same +256
    // offset, which distances cancel.
    for (k, &(x, y)) in inst.cities.iter().enumerate() {
        for (m, coord, table) in [(2 * k, x, XS), (2 * k + 1, y, YS)] {
            b.push(coord as u64 * SUBGRID);
            b.load_at(CTX_BASE + (m % 4) as u64)
                .push(9 * (m / 4) as u64)
                .op(Shr);
            b.push(511).op(And).push(256).op(Xor);
            b.op(Add).store_at(table + k as u64);
        }
    }

    b.op(InputLen).push(n).op(Eq).op(Not).store_at(BAD);

    // decode the tour, flagging out-of-range and repeated cities
    for i in 0..n {
        b.load_at(CANDIDATE_BASE + i / 8)
            .push(56 - 8 * (i % 8))
            .op(Shr)
            .push(255)
            .op(And);
        b.op(Dup).push(n).op(Lt).op(Not);
        or_into_bad(&mut b);
        b.push(n).op(Mod);
        b.op(Dup).store_at(TOUR + i);
        b.op(Dup).push(SEEN).op(Add).op(Load);
        or_into_bad(&mut b);
        b.push(1).op(Swap).push(SEEN).op(Add).op(Store);
    }

    for i in 0..n {
        let j = (i + 1) % n;
        for table in [XS, YS] {
            b.load_at(TOUR + i).push(table).op(Add).op(Load);
            b.load_at(TOUR + j).push(table).op(Add).op(Load);
            abs_diff(&mut b);
            b.op(Dup).op(Mul);
        }
        b.op(Add);
        isqrt(&mut b);
        b.load_at(TOTAL).op(Add).store_at(TOTAL);
    }

    // total | (0 - bad): all ones when bad
    b.load_at(TOTAL)
        .push(0)
        .load_at(BAD)
        .op(Sub)
        .op(Or)
        .op(Halt);
    b.build().expect("evaluator has no labels")
}

// searcher scratch layout
const S_TOUR: u64 = SCRATCH_BASE;
const S_BEST: u64 = SCRATCH_BASE + 16;
const S_STALL: u64 = SCRATCH_BASE + 17;
const S_A: u64 = SCRATCH_BASE + 18;
const S_B: u64 = SCRATCH_BASE + 19;

/// Swaps `tour[mem[a_addr]]` and `tour[mem[b_addr]]`.
fn swap_indirect(b: &mut ProgramBuilder) {
    b.load_at(S_A).push(S_TOUR).op(Add).op(Load);
    b.load_at(S_B).push(S_TOUR).op(Add).op(Load);
    b.load_at(S_A).push(S_TOUR).op(Add).op(Store);
    b.load_at(S_B).push(S_TOUR).op(Add).op(Store);
}

/// Packs the tour into the candidate region and evaluates it.
fn pack_and_eval(b: &mut ProgramBuilder, n: u64) {
    for word in 0..n.div_ceil(8) {
        let first = word * 8;
        let bytes = (n - first).min(8);
        b.push(0);
        for i in first..first + bytes {
            b.push(8).op(Shl).load_at(S_TOUR + i).op(Or);
        }
        if bytes < 8 {
            b.push(8 * (8 - bytes)).op(Shl);
        }
        b.store_at(CANDIDATE_BASE + word);
    }
    b.push(n).op(Eval);
}

/// Swap-move hill climbing over tours of `n` cities, accepting sideways
/// moves and reshuffling after `stall_factor * n * n` moves without
/// improvement.
pub fn searcher(n: usize, stall_factor: u64) -> Program {
    let n = n as u64;
    let limit = stall_factor.max(1) * n * n;
    let mut b = ProgramBuilder::new();
    for i in 0..n {
        b.push(i).store_at(S_TOUR + i);
    }

    b.label("restart");
    // Fisher-Yates
    for i in (1..n).rev() {
        b.op(Rand).push(i + 1).op(Mod); // [j]
        b.op(Dup).push(S_TOUR).op(Add).op(Load); // [j, t[j]]
        b.load_at(S_TOUR + i).op(Swap).store_at(S_TOUR + i); // [j, t[i]]
        b.op(Swap).push(S_TOUR).op(Add).op(Store);
    }
    pack_and_eval(&mut b, n);
    b.store_at(S_BEST).push(0).store_at(S_STALL);

    b.label("step");
    b.op(Rand).push(n).op(Mod).store_at(S_A);
    b.op(Rand).push(n).op(Mod).store_at(S_B);
    swap_indirect(&mut b);
    pack_and_eval(&mut b, n);
    b.op(Dup).load_at(S_BEST).op(Lt).jz("no_gain");
    b.store_at(S_BEST).push(0).store_at(S_STALL).jmp("step");

    b.label("no_gain");
    b.load_at(S_BEST).op(Eq).jz("worse");
    b.jmp("stalled");
    b.label("worse");
    swap_indirect(&mut b);
    b.label("stalled");
    b.load_at(S_STALL).push(1).op(Add).op(Dup).store_at(S_STALL);
    b.push(limit).op(Eq).jz("step");
    b.jmp("restart");

    b.build().expect("all searcher labels are defined")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tsp::oracle;
    use crate::types::Hash256;
    use crate::vm::{execute_evaluator, run_searcher, EvalContext, SearchControl};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn isqrt_matches_integer_sqrt() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut values: Vec<u64> = vec![
            0,
            1,
            2,
            3,
            4,
            15,
            16,
            17,
            (1 << 50) - 1,
            1 << 50,
            (1 << 51) - 1,
        ];
        values.extend((0..200).map(|_| rng.random_range(0..1u64 << 51)));
        for v in values {
            let mut b = ProgramBuilder::new();
            b.push(v);
            isqrt(&mut b);
            b.op(Halt);
            let r = execute_evaluator(&b.build().unwrap(), &[], &EvalContext::default(), u64::MAX);
            assert_eq!(r.eval_value(), v.isqrt(), "isqrt({v})");
        }
    }

    #[test]
    fn abs_diff_both_orders() {
        for (x, y) in [(5u64, 3u64), (3, 5), (7, 7), (0, u32::MAX as u64)] {
            let mut b = ProgramBuilder::new();
            b.push(x).push(y);
            abs_diff(&mut b);
            b.op(Halt);
            let r = execute_evaluator(&b.build().unwrap(), &[], &EvalContext::default(), 1000);
            assert_eq!(r.eval_value(), x.abs_diff(y));
        }
    }

    #[test]
    fn evaluator_agrees_with_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for n in [3, 5, 8, 12] {
            let inst = TspInstance::random(n, &mut rng);
            let ev = evaluator(&inst);
            for _ in 0..20 {
                let mut tour: Vec<u8> = (0..n as u8).collect();
                for i in (1..n).rev() {
                    tour.swap(i, rng.random_range(0..=i));
                }
                let ctx = Hash256(rng.random());
                let vm = execute_evaluator(&ev, &tour, &EvalContext(ctx), u64::MAX).eval_value();
                assert_eq!(Some(vm), oracle::tour_length(&inst, &tour, &ctx));
            }
        }
    }

    #[test]
    fn searcher_candidates_are_permutations() {
        let inst = TspInstance::random(7, &mut ChaCha8Rng::seed_from_u64(6));
        let mut count = 0;
        run_searcher(
            &searcher(7, 1),
            &evaluator(&inst),
            &EvalContext::default(),
            u64::MAX,
            1 << 24,
            3,
            |c, v| {
                let mut sorted = c.to_vec();
                sorted.sort();
                assert_eq!(sorted, (0..7).collect::<Vec<u8>>());
                assert_ne!(v, u64::MAX);
                count += 1;
                if count == 2000 {
                    SearchControl::Stop
                } else {
                    SearchControl::Continue
                }
            },
        );
        assert_eq!(count, 2000);
    }

    #[test]
    fn searcher_finds_optimum_of_six_cities() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..5 {
            let inst = TspInstance::random(6, &mut rng);
            let ctx = Hash256(rng.random());
            let (_, best) = oracle::brute_force_optimum(&inst, &ctx);
            let out = run_searcher(
                &searcher(6, DEFAULT_STALL_LIMIT),
                &evaluator(&inst),
                &EvalContext(ctx),
                u64::MAX,
                u64::MAX,
                rng.random(),
                |_, v| {
                    if v == best {
                        SearchControl::Stop
                    } else {
                        SearchControl::Continue
                    }
                },
            );
            assert_eq!(out.best_value, best);
            assert!(out.eval_count < 3000, "{} evaluations", out.eval_count);
        }
    }
}
