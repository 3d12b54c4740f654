//! Miner node logic: slot search, miniblock production, block assembly,
//! the commit/reveal pipeline and settlement rules.

mod miner;
mod pool;
mod search;
mod settle;
mod solo;

use serde::{Deserialize, Serialize};

pub use miner::{BlockSource, Message, Miner, MinerStats};
pub use pool::ItemPool;
pub use search::{BestFound, SlotSearch, Work};
pub use settle::{make_commit, settle_job, split_charge, verified_winners, SettleOutcome};
pub use solo::SoloChain;

/// Searcher steps per session before it is restarted.
pub const DEFAULT_SEARCH_STEP_BUDGET: u64 = 1 << 26;

/// Searcher overhead, relative to evaluation cost, above which a miner
/// gives up on the client's searcher and searches randomly.
pub const DEFAULT_FALLBACK_FACTOR: f64 = 8.0;

#[derive(Clone, Copy, PartialEq, Eq, Debug, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SlotChoice {
    #[default]
    LowestUnfinished,
    Random,
}

#[derive(Clone, PartialEq, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MinerPolicy {
    pub search_step_budget: u64,
    pub fallback_factor: f64,
    pub slot_choice: SlotChoice,
    /// Whether the node mines at all.
    pub mine: bool,
    /// Whether the node reveals its committed solutions.
    pub reveal: bool,
}

impl Default for MinerPolicy {
    fn default() -> MinerPolicy {
        MinerPolicy {
            search_step_budget: DEFAULT_SEARCH_STEP_BUDGET,
            fallback_factor: DEFAULT_FALLBACK_FACTOR,
            slot_choice: SlotChoice::default(),
            mine: true,
            reveal: true,
        }
    }
}

impl MinerPolicy {
    /// A node that follows the chain without mining.
    pub fn observer() -> MinerPolicy {
        MinerPolicy {
            mine: false,
            ..MinerPolicy::default()
        }
    }
}
