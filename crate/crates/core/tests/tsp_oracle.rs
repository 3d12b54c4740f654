use posearch::tsp::{evaluator, oracle, searcher, TspInstance, DEFAULT_STALL_LIMIT};
use posearch::types::{Hash256, WORST};
use posearch::vm::{execute_evaluator, run_searcher, EvalContext, SearchControl};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn instance() -> impl Strategy<Value = TspInstance> {
    (3usize..=12, any::<u64>())
        .prop_map(|(n, seed)| TspInstance::random(n, &mut ChaCha8Rng::seed_from_u64(seed)))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn vm_matches_oracle_on_permutations(inst in instance(), keys in prop::collection::vec(any::<u32>(), 12), ctx in any::<[u8; 32]>()) {
        let n = inst.len();
        let mut tour: Vec<u8> = (0..n as u8).collect();
        tour.sort_by_key(|&c| keys[c as usize]);
        let ctx = Hash256(ctx);
        let r = execute_evaluator(&evaluator(&inst), &tour, &EvalContext(ctx), u64::MAX);
        prop_assert_eq!(Some(r.eval_value()), oracle::tour_length(&inst, &tour, &ctx));
        prop_assert_eq!(r.steps_used, inst.eval_steps());
    }

    #[test]
    fn non_tours_score_worst(inst in instance(), cand in prop::collection::vec(0u8..14, 0..14)) {
        let ctx = Hash256::ZERO;
        let r = execute_evaluator(&evaluator(&inst), &cand, &EvalContext(ctx), u64::MAX);
        match oracle::tour_length(&inst, &cand, &ctx) {
            Some(len) => prop_assert_eq!(r.eval_value(), len),
            None => prop_assert_eq!(r.eval_value(), WORST),
        }
    }

    #[test]
    fn rotation_and_reversal_keep_length(inst in instance(), shift in 0usize..12, ctx in any::<[u8; 32]>()) {
        let ctx = Hash256(ctx);
        let n = inst.len();
        let tour: Vec<u8> = (0..n as u8).collect();
        let base = oracle::tour_length(&inst, &tour, &ctx).unwrap();
        let mut rotated = tour.clone();
        rotated.rotate_left(shift % n);
        let reversed: Vec<u8> = tour.iter().rev().copied().collect();
        prop_assert_eq!(oracle::tour_length(&inst, &rotated, &ctx), Some(base));
        prop_assert_eq!(oracle::tour_length(&inst, &reversed, &ctx), Some(base));
    }
}

#[test]
fn searcher_reaches_brute_force_optimum() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for n in [4, 5, 7] {
        let inst = TspInstance::random(n, &mut rng);
        let ctx = Hash256(rand::Rng::random(&mut rng));
        let (tour, best) = oracle::brute_force_optimum(&inst, &ctx);
        assert_eq!(oracle::tour_length(&inst, &tour, &ctx), Some(best));
        let out = run_searcher(
            &searcher(n, DEFAULT_STALL_LIMIT),
            &evaluator(&inst),
            &EvalContext(ctx),
            u64::MAX,
            u64::MAX,
            n as u64,
            |_, v| {
                assert!(v >= best);
                if v == best {
                    SearchControl::Stop
                } else {
                    SearchControl::Continue
                }
            },
        );
        assert_eq!(out.best_value, best, "{n} cities");
    }
}
