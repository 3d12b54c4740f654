//! Searcher execution with the host-side EVAL hook.

use std::sync::Arc;

use crate::types::WORST;

use super::exec::{execute_evaluator, CrashReason, EvalContext, Machine, Stop};
use super::isa::Program;

/// Returned by the evaluation callback.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum SearchControl {
    Continue,
    Stop,
}

/// Why a search ended.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum SearchEnd {
    /// The callback asked to stop.
    Stopped,
    Halted,
    /// The searcher used up its own step budget.
    BudgetExhausted,
    Crashed(CrashReason),
}

/// One EVAL performed on behalf of a searcher.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct Evaluation {
    pub candidate: Vec<u8>,
    pub value: u64,
    pub eval_steps: u64,
}

#[derive(Clone, PartialEq, Eq, Debug)]
pub struct SearchOutcome {
    pub best_candidate: Option<Vec<u8>>,
    /// [`WORST`] when nothing was evaluated.
    pub best_value: u64,
    pub eval_count: u64,
    /// Steps retired by the searcher itself, evaluations excluded.
    pub searcher_steps: u64,
    pub eval_steps: u64,
    pub end: SearchEnd,
}

impl SearchOutcome {
    pub fn crashed(&self) -> bool {
        matches!(self.end, SearchEnd::Crashed(_))
    }
}

/// A suspended searcher run. Each call to [`SearchSession::next_eval`]
/// resumes the searcher until its next EVAL, performs the evaluation and
/// feeds the value back onto the searcher's stack.
pub struct SearchSession {
    searcher: Arc<Program>,
    evaluator: Arc<Program>,
    ctx: EvalContext,
    eval_budget: u64,
    machine: Machine,
    ended: Option<SearchEnd>,
    best: Option<(Vec<u8>, u64)>,
    eval_count: u64,
    eval_steps: u64,
}

impl SearchSession {
    pub fn new(
        searcher: Arc<Program>,
        evaluator: Arc<Program>,
        ctx: EvalContext,
        eval_budget: u64,
        search_step_budget: u64,
        seed: u64,
    ) -> SearchSession {
        let machine = Machine::searcher(&ctx, seed, search_step_budget);
        SearchSession {
            searcher,
            evaluator,
            ctx,
            eval_budget,
            machine,
            ended: None,
            best: None,
            eval_count: 0,
            eval_steps: 0,
        }
    }

    pub fn searcher_steps(&self) -> u64 {
        self.machine.steps()
    }

    pub fn eval_count(&self) -> u64 {
        self.eval_count
    }

    pub fn eval_steps(&self) -> u64 {
        self.eval_steps
    }

    pub fn ended(&self) -> Option<SearchEnd> {
        self.ended
    }

    pub fn best(&self) -> Option<(&[u8], u64)> {
        self.best.as_ref().map(|(c, v)| (c.as_slice(), *v))
    }

    /// Marks the session as stopped by the caller.
    pub fn stop(&mut self) {
        self.ended.get_or_insert(SearchEnd::Stopped);
    }

    pub fn next_eval(&mut self) -> Result<Evaluation, SearchEnd> {
        if let Some(end) = self.ended {
            return Err(end);
        }
        let len = match self.machine.run(&self.searcher) {
            Stop::Eval(len) => len,
            Stop::Halted(_) => return Err(*self.ended.insert(SearchEnd::Halted)),
            Stop::OutOfSteps => return Err(*self.ended.insert(SearchEnd::BudgetExhausted)),
            Stop::Crashed(r) => return Err(*self.ended.insert(SearchEnd::Crashed(r))),
        };
        let candidate = self.machine.memory.read_candidate(len);
        let result = execute_evaluator(&self.evaluator, &candidate, &self.ctx, self.eval_budget);
        let value = result.eval_value();
        self.eval_count += 1;
        self.eval_steps += result.steps_used;
        if self.best.as_ref().is_none_or(|(_, v)| value < *v) {
            self.best = Some((candidate.clone(), value));
        }
        if let Err(r) = self.machine.push_external(value) {
            self.ended = Some(SearchEnd::Crashed(r));
        }
        Ok(Evaluation {
            candidate,
            value,
            eval_steps: result.steps_used,
        })
    }

    pub fn outcome(&self) -> SearchOutcome {
        SearchOutcome {
            best_candidate: self.best.as_ref().map(|(c, _)| c.clone()),
            best_value: self.best.as_ref().map_or(WORST, |(_, v)| *v),
            eval_count: self.eval_count,
            searcher_steps: self.machine.steps(),
            eval_steps: self.eval_steps,
            end: self.ended.unwrap_or(SearchEnd::Stopped),
        }
    }
}

/// Runs `searcher` against `evaluator`, calling `on_eval` after every
/// evaluation. Ends when the callback stops, the searcher halts or crashes,
/// or `search_step_budget` searcher steps have been retired.
pub fn run_searcher(
    searcher: &Program,
    evaluator: &Program,
    ctx: &EvalContext,
    eval_budget: u64,
    search_step_budget: u64,
    seed: u64,
    mut on_eval: impl FnMut(&[u8], u64) -> SearchControl,
) -> SearchOutcome {
    let mut session = SearchSession::new(
        Arc::new(searcher.clone()),
        Arc::new(evaluator.clone()),
        *ctx,
        eval_budget,
        search_step_budget,
        seed,
    );
    while let Ok(ev) = session.next_eval() {
        if on_eval(&ev.candidate, ev.value) == SearchControl::Stop {
            session.stop();
            break;
        }
    }
    session.outcome()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::vm::builtin;
    use crate::vm::isa::{Instruction, Opcode};

    #[test]
    fn immediate_halt_evaluates_nothing() {
        let s = Program::new(vec![Instruction::op(Opcode::Halt)]);
        let out = run_searcher(
            &s,
            &builtin::empty_evaluator(),
            &EvalContext::default(),
            10,
            100,
            1,
            |_, _| SearchControl::Continue,
        );
        assert_eq!(out.eval_count, 0);
        assert_eq!(out.best_candidate, None);
        assert_eq!(out.end, SearchEnd::Halted);
    }

    #[test]
    fn stop_after_first_eval() {
        let s = builtin::random_search(4, 256);
        let out = run_searcher(
            &s,
            &builtin::empty_evaluator(),
            &EvalContext::default(),
            10,
            1 << 20,
            1,
            |_, _| SearchControl::Stop,
        );
        assert_eq!(out.eval_count, 1);
        assert_eq!(out.end, SearchEnd::Stopped);
        assert_eq!(out.best_candidate.map(|c| c.len()), Some(4));
    }

    #[test]
    fn searcher_budget_is_respected() {
        let s = builtin::random_search(8, 256);
        let out = run_searcher(
            &s,
            &builtin::empty_evaluator(),
            &EvalContext::default(),
            10,
            1000,
            1,
            |_, _| SearchControl::Continue,
        );
        assert_eq!(out.end, SearchEnd::BudgetExhausted);
        assert_eq!(out.searcher_steps, 1000);
        assert!(out.eval_count > 0);
    }

    #[test]
    fn crashing_searcher_reports_progress() {
        // evaluate once, then divide by zero
        let s = Program::new(vec![
            Instruction::new(Opcode::Push, 1),
            Instruction::op(Opcode::Eval),
            Instruction::new(Opcode::Push, 0),
            Instruction::op(Opcode::Div),
        ]);
        let out = run_searcher(
            &s,
            &builtin::empty_evaluator(),
            &EvalContext::default(),
            10,
            100,
            1,
            |_, _| SearchControl::Continue,
        );
        assert_eq!(out.eval_count, 1);
        assert_eq!(out.end, SearchEnd::Crashed(CrashReason::DivisionByZero));
        assert!(out.crashed());
    }

    #[test]
    fn same_seed_same_candidates() {
        let s = builtin::random_search(3, 7);
        let collect = |seed| {
            let mut seen = Vec::new();
            run_searcher(
                &s,
                &builtin::empty_evaluator(),
                &EvalContext::default(),
                10,
                1 << 16,
                seed,
                |c, _| {
                    seen.push(c.to_vec());
                    if seen.len() == 50 {
                        SearchControl::Stop
                    } else {
                        SearchControl::Continue
                    }
                },
            );
            seen
        };
        assert_eq!(collect(5), collect(5));
        assert_ne!(collect(5), collect(6));
    }
}
