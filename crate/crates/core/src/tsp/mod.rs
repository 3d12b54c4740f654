//! Built-in traveling-salesman job family.
//!
//! A candidate is a tour: one byte per city, each a city index. The
//! evaluator returns the closed tour length in units of [`DISTANCE_SCALE`]
//! per unit of coordinate range, or [`WORST`](crate::types::WORST) for
//! anything that is not a permutation.
//!
//! City positions are nudged by up to one coordinate grid step in each
//! axis, seeded by the evaluation context, so that equal tours evaluated by
//! different miners rarely score the same.

pub mod oracle;
mod programs;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::types::{Amount, Job, NodeId};
use crate::vm::{execute_evaluator, EvalContext, Outcome};

pub use programs::{evaluator, searcher, DEFAULT_STALL_LIMIT};

/// Coordinates are integers in `0..=COORD_SCALE`.
pub const COORD_SCALE: u32 = 1 << 16;
/// Internal fixed-point units per coordinate grid step.
pub const SUBGRID: u64 = 256;
/// Distance units per unit of coordinate range.
pub const DISTANCE_SCALE: u64 = COORD_SCALE as u64 * SUBGRID;
pub const MIN_CITIES: usize = 3;
pub const MAX_CITIES: usize = 12;

#[derive(Clone, PartialEq, Eq, Debug, Serialize, Deserialize)]
pub struct TspInstance {
    pub cities: Vec<(u32, u32)>,
}

impl TspInstance {
    /// # Panics
    /// On a city count outside `3..=12` or a coordinate over [`COORD_SCALE`].
    pub fn new(cities: Vec<(u32, u32)>) -> TspInstance {
        assert!(
            (MIN_CITIES..=MAX_CITIES).contains(&cities.len()),
            "{} cities, supported range is {MIN_CITIES}..={MAX_CITIES}",
            cities.len()
        );
        assert!(
            cities
                .iter()
                .all(|&(x, y)| x <= COORD_SCALE && y <= COORD_SCALE),
            "coordinate out of range"
        );
        TspInstance { cities }
    }

    pub fn random(n: usize, rng: &mut impl Rng) -> TspInstance {
        TspInstance::new(
            (0..n)
                .map(|_| {
                    (
                        rng.random_range(0..=COORD_SCALE),
                        rng.random_range(0..=COORD_SCALE),
                    )
                })
                .collect(),
        )
    }

    /// The four corners of the unit square, in tour order.
    pub fn unit_square() -> TspInstance {
        TspInstance::new(vec![
            (0, 0),
            (COORD_SCALE, 0),
            (COORD_SCALE, COORD_SCALE),
            (0, COORD_SCALE),
        ])
    }

    pub fn len(&self) -> usize {
        self.cities.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cities.is_empty()
    }

    /// Steps the generated evaluator spends on every candidate.
    pub fn eval_steps(&self) -> u64 {
        let r = execute_evaluator(&evaluator(self), &[], &EvalContext::default(), u64::MAX);
        debug_assert!(matches!(r.outcome, Outcome::Value(_)));
        r.steps_used
    }

    /// A job carrying this instance's evaluator and the hill-climbing searcher.
    pub fn job(&self, client: NodeId, charge: Amount, tag: u64) -> Job {
        self.job_with_stall_limit(client, charge, tag, DEFAULT_STALL_LIMIT)
    }

    /// Like [`TspInstance::job`] with a custom reshuffle threshold for the
    /// searcher, in non-improving moves per city squared.
    pub fn job_with_stall_limit(
        &self,
        client: NodeId,
        charge: Amount,
        tag: u64,
        stall_factor: u64,
    ) -> Job {
        Job::new(
            client,
            charge,
            evaluator(self),
            searcher(self.len(), stall_factor),
            self.eval_steps(),
            tag,
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::WORST;
    use crate::vm::{validate_evaluator, validate_program};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn unit_square_tour_is_four_units() {
        let inst = TspInstance::unit_square();
        let r = execute_evaluator(
            &evaluator(&inst),
            &[0, 1, 2, 3],
            &EvalContext::default(),
            u64::MAX,
        );
        assert_eq!(r.outcome, Outcome::Value(4 * DISTANCE_SCALE));
    }

    #[test]
    fn generated_programs_validate() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for n in MIN_CITIES..=MAX_CITIES {
            let inst = TspInstance::random(n, &mut rng);
            validate_evaluator(&evaluator(&inst)).unwrap();
            validate_program(&searcher(n, DEFAULT_STALL_LIMIT)).unwrap();
        }
    }

    #[test]
    fn invalid_tours_score_worst() {
        let inst = TspInstance::unit_square();
        let ev = evaluator(&inst);
        let ctx = EvalContext::default();
        for bad in [
            &[0u8, 1, 2][..],
            &[0, 1, 2, 3, 0],
            &[0, 1, 1, 3],
            &[0, 1, 2, 4],
            &[],
        ] {
            let r = execute_evaluator(&ev, bad, &ctx, u64::MAX);
            assert_eq!(r.eval_value(), WORST, "{bad:?}");
        }
    }

    #[test]
    fn step_count_is_independent_of_candidate() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let inst = TspInstance::random(10, &mut rng);
        let ev = evaluator(&inst);
        let expected = inst.eval_steps();
        for _ in 0..50 {
            let len = rng.random_range(0..20);
            let cand: Vec<u8> = (0..len).map(|_| rng.random_range(0..12)).collect();
            let ctx = EvalContext(crate::types::Hash256(rng.random()));
            assert_eq!(
                execute_evaluator(&ev, &cand, &ctx, u64::MAX).steps_used,
                expected
            );
        }
    }
}
