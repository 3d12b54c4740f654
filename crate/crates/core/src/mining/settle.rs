use std::collections::BTreeMap;

use crate::hash::solution_hash;
use crate::types::{Amount, Commit, Hash256, Job, NodeId, Reveal, WORST};
use crate::vm::{execute_evaluator, EvalContext};

/// Result of settling a job after its reveal interval.
#[derive(Clone, PartialEq, Eq, Debug)]
pub enum SettleOutcome {
    /// Charge shares, remainder to the lowest id first.
    Paid(Vec<(NodeId, Amount)>),
    /// No best-group reveal verified; holders of this value may reveal in
    /// the next interval.
    Retry {
        value: u64,
    },
    Refund,
}

/// Commit from `miner` for `job_id`, binding `solution` to this miner.
pub fn make_commit(job_id: Hash256, miner: NodeId, solution: &[u8], value: u64) -> Option<Commit> {
    (value != WORST).then(|| Commit {
        job_id,
        miner_id: miner,
        eval_value: value,
        solution_hash: solution_hash(miner, solution),
    })
}

/// Committers of `value` whose reveal matches their commit and re-evaluates
/// to `value` under their own execution context.
pub fn verified_winners(
    commits: &[Commit],
    reveals: &[Reveal],
    job: &Job,
    ctxs: &BTreeMap<NodeId, EvalContext>,
    value: u64,
) -> Vec<NodeId> {
    let mut winners: Vec<NodeId> = commits
        .iter()
        .filter(|c| c.eval_value == value && c.job_id == job.id())
        .filter(|c| {
            let Some(r) = reveals
                .iter()
                .find(|r| r.miner_id == c.miner_id && r.job_id == c.job_id)
            else {
                return false;
            };
            let Some(ctx) = ctxs.get(&c.miner_id) else {
                return false;
            };
            solution_hash(r.miner_id, &r.solution) == c.solution_hash
                && execute_evaluator(job.evaluator(), &r.solution, ctx, job.eval_step_budget())
                    .eval_value()
                    == value
        })
        .map(|c| c.miner_id)
        .collect();
    winners.sort();
    winners.dedup();
    winners
}

/// Splits `charge` equally over `winners`; the lowest id gets the remainder.
pub fn split_charge(charge: Amount, winners: &[NodeId]) -> Vec<(NodeId, Amount)> {
    let mut w = winners.to_vec();
    w.sort();
    w.dedup();
    if w.is_empty() {
        return Vec::new();
    }
    let n = w.len() as u64;
    let share = charge.0 / n;
    let rest = charge.0 % n;
    w.into_iter()
        .enumerate()
        .map(|(i, id)| (id, Amount(share + if i == 0 { rest } else { 0 })))
        .collect()
}

/// Settles a job from its commits and reveals. With `retry_reveals` set,
/// this is the second attempt, paying the next-best group or refunding.
pub fn settle_job(
    commits: &[Commit],
    reveals: &[Reveal],
    job: &Job,
    ctxs: &BTreeMap<NodeId, EvalContext>,
    retry_reveals: Option<&[Reveal]>,
) -> SettleOutcome {
    let Some(best) = commits.iter().map(|c| c.eval_value).min() else {
        return SettleOutcome::Refund;
    };
    let second = commits
        .iter()
        .map(|c| c.eval_value)
        .filter(|&v| v > best)
        .min();
    let winners = verified_winners(commits, reveals, job, ctxs, best);
    if !winners.is_empty() {
        return SettleOutcome::Paid(split_charge(job.charge(), &winners));
    }
    let Some(second) = second else {
        return SettleOutcome::Refund;
    };
    match retry_reveals {
        None => SettleOutcome::Retry { value: second },
        Some(rr) => {
            let winners = verified_winners(commits, rr, job, ctxs, second);
            if winners.is_empty() {
                SettleOutcome::Refund
            } else {
                SettleOutcome::Paid(split_charge(job.charge(), &winners))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tsp::TspInstance;

    fn setup() -> (Job, BTreeMap<NodeId, EvalContext>) {
        let job = TspInstance::unit_square().job(NodeId::from_u64(100), Amount(11), 0);
        let ctxs = (1..=3)
            .map(|i| (NodeId::from_u64(i), EvalContext::default()))
            .collect();
        (job, ctxs)
    }

    fn commit_reveal(job: &Job, miner: u64, tour: &[u8]) -> (Commit, Reveal) {
        let m = NodeId::from_u64(miner);
        let v = execute_evaluator(
            job.evaluator(),
            tour,
            &EvalContext::default(),
            job.eval_step_budget(),
        )
        .eval_value();
        (
            make_commit(job.id(), m, tour, v).unwrap(),
            Reveal {
                job_id: job.id(),
                miner_id: m,
                solution: tour.to_vec(),
            },
        )
    }

    #[test]
    fn single_winner_takes_charge() {
        let (job, ctxs) = setup();
        let (c, r) = commit_reveal(&job, 2, &[0, 1, 2, 3]);
        assert_eq!(
            settle_job(&[c], &[r], &job, &ctxs, None),
            SettleOutcome::Paid(vec![(NodeId::from_u64(2), Amount(11))])
        );
    }

    #[test]
    fn equal_best_values_split() {
        let (job, ctxs) = setup();
        let (c1, r1) = commit_reveal(&job, 3, &[0, 1, 2, 3]);
        let (c2, r2) = commit_reveal(&job, 1, &[1, 2, 3, 0]);
        assert_eq!(
            settle_job(&[c1, c2], &[r1, r2], &job, &ctxs, None),
            SettleOutcome::Paid(vec![
                (NodeId::from_u64(1), Amount(6)),
                (NodeId::from_u64(3), Amount(5))
            ])
        );
    }

    #[test]
    fn missing_best_reveal_opens_retry() {
        let (job, ctxs) = setup();
        let (c1, _) = commit_reveal(&job, 1, &[0, 1, 2, 3]);
        let (c2, r2) = commit_reveal(&job, 2, &[0, 2, 1, 3]);
        let out = settle_job(&[c1, c2], &[], &job, &ctxs, None);
        assert_eq!(
            out,
            SettleOutcome::Retry {
                value: c2.eval_value
            }
        );
        assert_eq!(
            settle_job(&[c1, c2], &[], &job, &ctxs, Some(&[r2])),
            SettleOutcome::Paid(vec![(NodeId::from_u64(2), Amount(11))])
        );
        assert_eq!(
            settle_job(&[c1, c2], &[], &job, &ctxs, Some(&[])),
            SettleOutcome::Refund
        );
    }

    #[test]
    fn tampered_reveal_is_disqualified() {
        let (job, ctxs) = setup();
        let (c, mut r) = commit_reveal(&job, 1, &[0, 1, 2, 3]);
        r.solution = vec![0, 1, 3, 2];
        assert_eq!(
            settle_job(&[c], &[r], &job, &ctxs, None),
            SettleOutcome::Refund
        );
    }

    #[test]
    fn commit_binds_miner() {
        let a = make_commit(Hash256::ZERO, NodeId::from_u64(1), b"x", 5).unwrap();
        let b = make_commit(Hash256::ZERO, NodeId::from_u64(2), b"x", 5).unwrap();
        assert_ne!(a.solution_hash, b.solution_hash);
        assert_eq!(
            a,
            make_commit(Hash256::ZERO, NodeId::from_u64(1), b"x", 5).unwrap()
        );
        assert!(make_commit(Hash256::ZERO, NodeId::from_u64(1), b"x", WORST).is_none());
    }
}
