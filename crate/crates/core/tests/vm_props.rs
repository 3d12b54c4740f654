use posearch::types::Hash256;
use posearch::vm::asm::{assemble, disassemble};
use posearch::vm::{
    execute_evaluator, run_searcher, validate_program, EvalContext, Instruction, Opcode, Outcome,
    Program, SearchControl,
};
use proptest::prelude::*;

const OPS: &[Opcode] = &[
    Opcode::Halt,
    Opcode::Push,
    Opcode::Pop,
    Opcode::Dup,
    Opcode::Swap,
    Opcode::Load,
    Opcode::Store,
    Opcode::Add,
    Opcode::Sub,
    Opcode::Mul,
    Opcode::Div,
    Opcode::Mod,
    Opcode::And,
    Opcode::Or,
    Opcode::Xor,
    Opcode::Shl,
    Opcode::Shr,
    Opcode::Lt,
    Opcode::Eq,
    Opcode::Not,
    Opcode::Jmp,
    Opcode::Jz,
    Opcode::InputLen,
    Opcode::Rand,
    Opcode::Eval,
];

fn program() -> impl Strategy<Value = Program> {
    prop::collection::vec((0..OPS.len(), any::<u64>(), 0u64..64), 1..48).prop_map(|raw| {
        let len = raw.len() as u64;
        Program::new(
            raw.into_iter()
                .map(|(i, imm, small)| {
                    let op = OPS[i];
                    match op {
                        Opcode::Jmp | Opcode::Jz => Instruction::new(op, small % len),
                        Opcode::Push => {
                            Instruction::new(op, if imm % 2 == 0 { small } else { imm })
                        }
                        _ => Instruction::op(op),
                    }
                })
                .collect(),
        )
    })
}

proptest! {
    #[test]
    fn evaluation_is_a_pure_function(p in program(), cand in prop::collection::vec(any::<u8>(), 0..40), ctx in any::<[u8; 32]>()) {
        let ctx = EvalContext(Hash256(ctx));
        let a = execute_evaluator(&p, &cand, &ctx, 5_000);
        let b = execute_evaluator(&p, &cand, &ctx, 5_000);
        prop_assert_eq!(a, b);
        prop_assert!(a.steps_used <= 5_000);
    }

    #[test]
    fn binary_and_text_round_trip(p in program()) {
        prop_assert_eq!(Program::from_binary(&p.to_binary()).unwrap(), p.clone());
        prop_assert_eq!(assemble(&disassemble(&p)).unwrap(), p);
    }

    #[test]
    fn straight_line_costs_one_step_per_instruction(k in 1usize..400) {
        let mut code: Vec<Instruction> = (0..k - 1)
            .map(|i| if i % 2 == 0 { Instruction::new(Opcode::Push, i as u64) } else { Instruction::op(Opcode::Pop) })
            .collect();
        code.push(Instruction::op(Opcode::Halt));
        let r = execute_evaluator(&Program::new(code), &[], &EvalContext(Hash256::ZERO), 1 << 20);
        prop_assert_eq!(r.steps_used, k as u64);
    }

    #[test]
    fn budget_is_spent_exactly(b in 1u64..50_000) {
        let spin = Program::new(vec![Instruction::new(Opcode::Push, 1), Instruction::op(Opcode::Pop), Instruction::new(Opcode::Jmp, 0)]);
        let r = execute_evaluator(&spin, &[], &EvalContext(Hash256::ZERO), b);
        prop_assert_eq!(r.outcome, Outcome::OutOfSteps);
        prop_assert_eq!(r.steps_used, b);
    }

    #[test]
    fn searchers_replay_from_their_seed(p in program(), seed in any::<u64>()) {
        let eval = Program::new(vec![Instruction::op(Opcode::InputLen), Instruction::op(Opcode::Halt)]);
        let ctx = EvalContext(Hash256([3; 32]));
        let run = || {
            let mut seen = Vec::new();
            let out = run_searcher(&p, &eval, &ctx, 100, 2_000, seed, |c, v| {
                seen.push((c.to_vec(), v));
                SearchControl::Continue
            });
            (out, seen)
        };
        prop_assert_eq!(run(), run());
    }
}

#[test]
fn evaluators_may_not_draw_randomness() {
    let p = Program::new(vec![
        Instruction::op(Opcode::Rand),
        Instruction::op(Opcode::Halt),
    ]);
    assert!(validate_program(&p).is_ok());
    assert!(posearch::vm::validate_evaluator(&p).is_err());
}
