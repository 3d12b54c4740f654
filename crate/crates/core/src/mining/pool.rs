use std::collections::HashSet;

use crate::consensus::{BlockItems, ChainState};
use crate::hash::hash_object;
use crate::types::{Block, Commit, Hash256, Job, Reveal, Transaction};

/// Received items waiting for inclusion in a block.
#[derive(Clone, Default, Debug)]
pub struct ItemPool {
    items: BlockItems,
    seen: HashSet<Hash256>,
}

impl ItemPool {
    pub fn new() -> ItemPool {
        ItemPool::default()
    }

    /// Returns false for items already in the pool.
    pub fn add_transaction(&mut self, tx: Transaction) -> bool {
        self.seen.insert(hash_object(&tx)) && {
            self.items.transactions.push(tx);
            true
        }
    }

    pub fn add_job(&mut self, job: Job) -> bool {
        self.seen.insert(job.id()) && {
            self.items.jobs.push(job);
            true
        }
    }

    pub fn add_commit(&mut self, c: Commit) -> bool {
        self.seen.insert(hash_object(&c)) && {
            self.items.commits.push(c);
            true
        }
    }

    pub fn add_reveal(&mut self, r: Reveal) -> bool {
        self.seen.insert(hash_object(&r)) && {
            self.items.reveals.push(r);
            true
        }
    }

    pub fn items(&self) -> &BlockItems {
        &self.items
    }

    pub fn len(&self) -> usize {
        let i = &self.items;
        i.transactions.len() + i.jobs.len() + i.commits.len() + i.reveals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Puts back the items of a block that left the active chain.
    pub fn readd_block(&mut self, block: &Block) {
        let h = block.header();
        for tx in &h.transactions {
            self.add_transaction(tx.clone());
        }
        for job in block.job_bodies() {
            self.add_job(job.clone());
        }
        for c in &h.commits {
            self.add_commit(*c);
        }
        for r in &h.reveals {
            self.add_reveal(r.clone());
        }
    }

    /// Drops items that `state` has already absorbed or can never accept.
    pub fn prune(&mut self, state: &ChainState) {
        let mut dropped = Vec::new();
        self.items.transactions.retain(|tx| {
            let keep = tx.seq >= state.next_sequence(tx.from);
            if !keep {
                dropped.push(hash_object(tx));
            }
            keep
        });
        self.items.jobs.retain(|j| {
            let keep = !state.is_registered(&j.id());
            if !keep {
                dropped.push(j.id());
            }
            keep
        });
        self.items.commits.retain(|c| {
            let keep =
                state.placement(&c.job_id).is_some() && !state.commits(&c.job_id).contains(c);
            if !keep {
                dropped.push(hash_object(c));
            }
            keep
        });
        self.items.reveals.retain(|r| {
            let keep = state.placement(&r.job_id).is_some();
            if !keep {
                dropped.push(hash_object(r));
            }
            keep
        });
        for h in dropped {
            self.seen.remove(&h);
        }
    }

    /// Removes items carried by `block`.
    pub fn remove_block_items(&mut self, block: &Block) {
        let h = block.header();
        let mut gone: HashSet<Hash256> = HashSet::new();
        gone.extend(h.transactions.iter().map(hash_object));
        gone.extend(h.new_jobs.iter().map(|j| j.job_id));
        gone.extend(h.commits.iter().map(hash_object));
        gone.extend(h.reveals.iter().map(hash_object));
        self.items
            .transactions
            .retain(|x| !gone.contains(&hash_object(x)));
        self.items.jobs.retain(|x| !gone.contains(&x.id()));
        self.items
            .commits
            .retain(|x| !gone.contains(&hash_object(x)));
        self.items
            .reveals
            .retain(|x| !gone.contains(&hash_object(x)));
        for g in gone {
            self.seen.remove(&g);
        }
    }
}
