use std::collections::HashMap;
use std::sync::Arc;

use crate::consensus::{Chain, ChainParams};
use crate::types::{Block, Hash256, NodeId};

use super::{Message, Miner, MinerPolicy};

/// Slice of work between checks for a found miniblock.
const WORK_SLICE: u64 = 1 << 20;

/// One miner building a chain alone, with simulated time derived from
/// the steps it spends. Useful for generating chains outside a network.
pub struct SoloChain {
    miner: Miner,
    store: HashMap<Hash256, Arc<Block>>,
    now: u64,
    rate: f64,
}

impl SoloChain {
    /// `rate` is in steps per tick.
    pub fn new(params: Arc<ChainParams>, id: NodeId, rate: f64, seed: u64) -> SoloChain {
        assert!(rate > 0.0, "rate must be positive");
        let miner = Miner::new(id, params, MinerPolicy::default(), seed);
        let mut store = HashMap::new();
        store.insert(miner.tip().hash(), miner.tip().clone());
        SoloChain {
            miner,
            store,
            now: 0,
            rate,
        }
    }

    pub fn miner(&self) -> &Miner {
        &self.miner
    }

    pub fn now(&self) -> u64 {
        self.now
    }

    /// Queues a transaction or job for the next block.
    pub fn submit(&mut self, msg: Message) {
        self.miner.submit(msg);
    }

    pub fn mine_block(&mut self) -> Arc<Block> {
        let height = self.miner.tip().height();
        while self.miner.tip().height() == height {
            let w = self.miner.work(WORK_SLICE);
            self.now += (w.steps as f64 / self.rate).ceil() as u64;
            if let Some(mb) = w.found {
                for m in self.miner.on_found(mb, self.now) {
                    if let Message::Block(b) = m {
                        self.store.insert(b.hash(), b);
                    }
                }
            }
        }
        self.miner.tip().clone()
    }

    pub fn mine_blocks(&mut self, n: usize) {
        for _ in 0..n {
            self.mine_block();
        }
    }

    pub fn chain(&self) -> Chain {
        self.miner.active_chain()
    }
}
