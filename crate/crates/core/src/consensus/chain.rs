//! Whole-chain operations: ordering, verification, compaction and the
//! on-disk chain format.

use std::cmp::Ordering;
use std::collections::{BTreeSet, HashSet};
use std::io::{Read, Write};
use std::sync::Arc;

use thiserror::Error;

use crate::codec::{canonical_decode, canonical_encode, DecodeError, EncodeError, Writer};
use crate::hash::sha256;
use crate::types::{Block, Hash256, Miniblock, PayoutReason};

use super::params::{ChainParams, ParamsError};
use super::rules::MiniblockError;
use super::state::{genesis_block, BlockError, ChainState, Verification};

const FILE_MAGIC: &[u8; 4] = b"POSC";
const FILE_VERSION: u8 = 1;

/// A block sequence starting at genesis plus miniblocks mined on its tip.
#[derive(Clone, Debug)]
pub struct Chain {
    params: Arc<ChainParams>,
    blocks: Vec<Arc<Block>>,
    pending: Vec<Miniblock>,
}

/// What chain ordering looks at.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub struct ChainSummary {
    pub blocks: u64,
    pub pending: usize,
    pub digest: Hash256,
}

/// Identifies the tip including its pending miniblocks.
pub fn tip_digest(tip: Hash256, pending: &[Hash256]) -> Hash256 {
    if pending.is_empty() {
        return tip;
    }
    let mut w = Writer::unbounded();
    w.hash(&tip);
    for h in pending {
        w.hash(h);
    }
    sha256(&w.into_bytes())
}

/// Longer chain is greater: more blocks, then more pending miniblocks,
/// then the lexicographically smaller tip digest.
pub fn compare_summaries(a: &ChainSummary, b: &ChainSummary) -> Ordering {
    (a.blocks, a.pending)
        .cmp(&(b.blocks, b.pending))
        .then_with(|| b.digest.cmp(&a.digest))
}

pub fn compare_chains(a: &Chain, b: &Chain) -> Ordering {
    compare_summaries(&a.summary(), &b.summary())
}

impl Chain {
    /// A chain holding only the genesis block.
    pub fn new(params: Arc<ChainParams>) -> Chain {
        let genesis = Arc::new(genesis_block(&params));
        Chain {
            params,
            blocks: vec![genesis],
            pending: Vec::new(),
        }
    }

    pub fn from_blocks(
        params: Arc<ChainParams>,
        blocks: Vec<Arc<Block>>,
        pending: Vec<Miniblock>,
    ) -> Chain {
        let mut c = Chain {
            params,
            blocks,
            pending,
        };
        c.pending.sort_by_key(|m| m.job_slot);
        c
    }

    pub fn params(&self) -> &Arc<ChainParams> {
        &self.params
    }

    pub fn blocks(&self) -> &[Arc<Block>] {
        &self.blocks
    }

    pub fn pending(&self) -> &[Miniblock] {
        &self.pending
    }

    pub fn tip(&self) -> Option<&Arc<Block>> {
        self.blocks.last()
    }

    pub fn tip_hash(&self) -> Hash256 {
        self.tip().map_or(Hash256::ZERO, |b| b.hash())
    }

    pub fn push_block(&mut self, block: Arc<Block>) {
        self.blocks.push(block);
        self.pending.clear();
    }

    /// Adds a miniblock for the tip, replacing nothing; returns false if
    /// its slot is already filled.
    pub fn push_miniblock(&mut self, mb: Miniblock) -> bool {
        match self
            .pending
            .binary_search_by_key(&mb.job_slot, |m| m.job_slot)
        {
            Ok(_) => false,
            Err(i) => {
                self.pending.insert(i, mb);
                true
            }
        }
    }

    pub fn take_pending(&mut self) -> Vec<Miniblock> {
        std::mem::take(&mut self.pending)
    }

    pub fn summary(&self) -> ChainSummary {
        let pending: Vec<Hash256> = self.pending.iter().map(Miniblock::hash).collect();
        ChainSummary {
            blocks: self.blocks.len() as u64,
            pending: pending.len(),
            digest: tip_digest(self.tip_hash(), &pending),
        }
    }

    /// Serialized size of all blocks.
    pub fn encoded_size(&self) -> Result<usize, EncodeError> {
        self.blocks
            .iter()
            .map(|b| canonical_encode(b.as_ref()).map(|v| v.len()))
            .sum()
    }
}

/// Blocks and miniblocks already checked in full.
#[derive(Clone, Default, Debug)]
pub struct VerifyCache {
    blocks: HashSet<Hash256>,
    miniblocks: HashSet<Hash256>,
}

impl VerifyCache {
    pub fn new() -> VerifyCache {
        VerifyCache::default()
    }

    pub fn contains_block(&self, h: &Hash256) -> bool {
        self.blocks.contains(h)
    }

    pub fn len(&self) -> usize {
        self.blocks.len() + self.miniblocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum VerifyError {
    #[error("empty chain")]
    Empty,
    #[error("block at position {position}: {error}")]
    Block { position: usize, error: BlockError },
    #[error("pending miniblock for slot {slot}: {error}")]
    Pending { slot: u16, error: MiniblockError },
    #[error("two pending miniblocks for slot {0}")]
    DuplicatePending(u16),
}

impl VerifyError {
    pub fn code(&self) -> &'static str {
        match self {
            VerifyError::Empty => "empty-chain",
            VerifyError::Block { error, .. } => error.code(),
            VerifyError::Pending { error, .. } => error.code(),
            VerifyError::DuplicatePending(_) => "duplicate-slot",
        }
    }
}

/// A verified chain's final state and the work spent checking it.
#[derive(Clone, Debug)]
pub struct VerifyReport {
    pub state: ChainState,
    pub evaluator_runs: u64,
    pub full_blocks: usize,
    pub relaxed_blocks: usize,
}

/// Heights below this get relaxed verification and may be compacted.
pub fn relaxed_horizon(tip_height: u64, params: &ChainParams) -> u64 {
    tip_height.saturating_sub(params.verify_depth)
}

/// Replays `chain` from genesis. Blocks below the relaxed horizon, and
/// blocks found in `cache`, skip evaluator re-execution. Fully verified
/// blocks and miniblocks are added to `cache`.
pub fn verify_chain(chain: &Chain, cache: &mut VerifyCache) -> Result<VerifyReport, VerifyError> {
    let tip = chain.tip().ok_or(VerifyError::Empty)?;
    let horizon = relaxed_horizon(tip.height(), &chain.params);
    let mut state = ChainState::empty(chain.params.clone());
    let mut report_runs = 0;
    let (mut full_blocks, mut relaxed_blocks) = (0, 0);
    for (position, block) in chain.blocks.iter().enumerate() {
        let hash = block.hash();
        let mode = if block.height() < horizon || cache.blocks.contains(&hash) {
            Verification::Relaxed
        } else {
            Verification::Full
        };
        let r = state
            .apply(block, mode)
            .map_err(|error| VerifyError::Block { position, error })?;
        report_runs += r.evaluator_runs;
        match mode {
            Verification::Full => {
                full_blocks += 1;
                cache.blocks.insert(hash);
            }
            Verification::Relaxed => relaxed_blocks += 1,
        }
    }
    let mut slots = BTreeSet::new();
    for mb in &chain.pending {
        if !slots.insert(mb.job_slot) {
            return Err(VerifyError::DuplicatePending(mb.job_slot));
        }
        let h = mb.hash();
        if cache.miniblocks.contains(&h) {
            continue;
        }
        report_runs += 1;
        state
            .validate_pending(mb)
            .map_err(|error| VerifyError::Pending {
                slot: mb.job_slot,
                error,
            })?;
        cache.miniblocks.insert(h);
    }
    Ok(VerifyReport {
        state,
        evaluator_runs: report_runs,
        full_blocks,
        relaxed_blocks,
    })
}

/// Drops miniblock bodies of blocks below the relaxed horizon, and job
/// bodies of jobs settled below it. Headers are untouched, so block hashes
/// and the replayed ledger do not change.
pub fn compact_chain(chain: &Chain) -> Chain {
    let Some(tip) = chain.tip() else {
        return chain.clone();
    };
    let horizon = relaxed_horizon(tip.height(), &chain.params);
    let settled: HashSet<Hash256> = chain
        .blocks
        .iter()
        .filter(|b| b.height() < horizon)
        .flat_map(|b| b.header().payouts.iter())
        .filter_map(|p| match p.reason {
            PayoutReason::Charge { job_id } | PayoutReason::Refund { job_id } => Some(job_id),
            _ => None,
        })
        .collect();
    let blocks = chain
        .blocks
        .iter()
        .map(|b| {
            if b.height() >= horizon || b.is_compacted() {
                return b.clone();
            }
            let jobs = b
                .job_bodies()
                .iter()
                .filter(|j| !settled.contains(&j.id()))
                .cloned()
                .collect();
            Arc::new(b.with_bodies(Vec::new(), jobs))
        })
        .collect();
    Chain {
        params: chain.params.clone(),
        blocks,
        pending: chain.pending.clone(),
    }
}

#[derive(Debug, Error)]
pub enum ChainFileError {
    #[error("not a chain file")]
    BadMagic,
    #[error("unsupported chain file version {0}")]
    BadVersion(u8),
    #[error("truncated chain file")]
    Truncated,
    #[error("record {index}: {error}")]
    Decode { index: usize, error: DecodeError },
    #[error(transparent)]
    Encode(#[from] EncodeError),
    #[error("invalid chain parameters")]
    Params(#[from] ParamsError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn write_record(w: &mut impl Write, bytes: &[u8]) -> Result<(), ChainFileError> {
    w.write_all(&(bytes.len() as u32).to_be_bytes())?;
    w.write_all(bytes)?;
    Ok(())
}

/// Writes magic, version, the parameters record and one length-prefixed
/// record per block. Pending miniblocks are not stored.
pub fn write_chain(w: &mut impl Write, chain: &Chain) -> Result<(), ChainFileError> {
    w.write_all(FILE_MAGIC)?;
    w.write_all(&[FILE_VERSION])?;
    write_record(w, &canonical_encode(chain.params.as_ref())?)?;
    for b in &chain.blocks {
        write_record(w, &canonical_encode(b.as_ref())?)?;
    }
    Ok(())
}

pub fn chain_to_bytes(chain: &Chain) -> Result<Vec<u8>, ChainFileError> {
    let mut out = Vec::new();
    write_chain(&mut out, chain)?;
    Ok(out)
}

/// Inverse of [`write_chain`]. Checks every stored block hash but not the
/// consensus rules; run [`verify_chain`] for that.
pub fn read_chain(bytes: &[u8]) -> Result<Chain, ChainFileError> {
    let mut r = bytes;
    let mut head = [0u8; 5];
    r.read_exact(&mut head)
        .map_err(|_| ChainFileError::Truncated)?;
    if &head[..4] != FILE_MAGIC {
        return Err(ChainFileError::BadMagic);
    }
    if head[4] != FILE_VERSION {
        return Err(ChainFileError::BadVersion(head[4]));
    }
    let mut records = Vec::new();
    while !r.is_empty() {
        let mut len = [0u8; 4];
        r.read_exact(&mut len)
            .map_err(|_| ChainFileError::Truncated)?;
        let len = u32::from_be_bytes(len) as usize;
        if r.len() < len {
            return Err(ChainFileError::Truncated);
        }
        let (rec, rest) = r.split_at(len);
        records.push(rec);
        r = rest;
    }
    let (first, rest) = records.split_first().ok_or(ChainFileError::Truncated)?;
    let params: ChainParams =
        canonical_decode(first).map_err(|error| ChainFileError::Decode { index: 0, error })?;
    params.validate()?;
    let blocks = rest
        .iter()
        .enumerate()
        .map(|(i, rec)| {
            canonical_decode::<Block>(rec)
                .map(Arc::new)
                .map_err(|error| ChainFileError::Decode {
                    index: i + 1,
                    error,
                })
        })
        .collect::<Result<_, _>>()?;
    Ok(Chain::from_blocks(Arc::new(params), blocks, Vec::new()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn summary(blocks: u64, pending: usize, d: u8) -> ChainSummary {
        ChainSummary {
            blocks,
            pending,
            digest: Hash256([d; 32]),
        }
    }

    #[test]
    fn more_blocks_beat_more_miniblocks() {
        assert_eq!(
            compare_summaries(&summary(5, 0, 1), &summary(4, 3, 1)),
            Ordering::Greater
        );
        assert_eq!(
            compare_summaries(&summary(5, 2, 1), &summary(5, 1, 1)),
            Ordering::Greater
        );
        assert_eq!(
            compare_summaries(&summary(5, 1, 1), &summary(5, 1, 2)),
            Ordering::Greater
        );
        assert_eq!(
            compare_summaries(&summary(5, 1, 1), &summary(5, 1, 1)),
            Ordering::Equal
        );
    }

    #[test]
    fn genesis_chain_round_trips_through_file() {
        let chain = Chain::new(Arc::new(ChainParams::default()));
        let bytes = chain_to_bytes(&chain).unwrap();
        assert_eq!(&bytes[..4], b"POSC");
        let back = read_chain(&bytes).unwrap();
        assert_eq!(back.blocks().len(), 1);
        assert_eq!(back.tip_hash(), chain.tip_hash());
        assert!(matches!(
            read_chain(&bytes[..bytes.len() - 1]),
            Err(ChainFileError::Truncated)
        ));
    }

    #[test]
    fn short_chain_is_not_compacted() {
        let chain = Chain::new(Arc::new(ChainParams::default()));
        let c = compact_chain(&chain);
        assert_eq!(c.blocks()[0], chain.blocks()[0]);
    }
}
