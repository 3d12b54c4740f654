//! Canonical, bit-exact serialization of chain objects.
//!
//! Layout rules: one domain-separation tag byte for the top-level object,
//! then fields in declared order. Integers are big-endian fixed width,
//! digests and node ids are raw fixed-width bytes, byte strings carry a
//! `u32` big-endian length prefix, lists a `u32` count followed by the
//! elements' fields. Nested objects are written inline without a tag.

use thiserror::Error;

use crate::types::*;
use crate::vm::{Instruction, Opcode, Program, MAX_PROGRAM_LEN};

/// Domain-separation tags, one per object type.
pub mod tag {
    pub const JOB: u8 = 0x01;
    pub const NONCE: u8 = 0x02;
    pub const MINIBLOCK: u8 = 0x03;
    pub const BLOCK_HEADER: u8 = 0x04;
    pub const BLOCK: u8 = 0x05;
    pub const COMMIT: u8 = 0x06;
    pub const REVEAL: u8 = 0x07;
    pub const TRANSACTION: u8 = 0x08;
    pub const EVAL_CONTEXT: u8 = 0x09;
    pub const SOLUTION: u8 = 0x0a;
    pub const JOB_SUMMARY: u8 = 0x0b;
    pub const SCHEDULED_JOB: u8 = 0x0c;
    pub const PAYOUT: u8 = 0x0d;
    pub const PROGRAM: u8 = 0x0e;
    pub const CHAIN_PARAMS: u8 = 0x0f;
    pub const SYNTHETIC: u8 = 0x10;
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EncodeError {
    #[error("field `{field}` has length {len}, limit is {max}")]
    TooLong {
        field: &'static str,
        len: usize,
        max: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DecodeError {
    #[error("unexpected end of input")]
    UnexpectedEof,
    #[error("expected tag {expected:#04x}, found {found:#04x}")]
    BadTag { expected: u8, found: u8 },
    #[error("{0} trailing bytes after object")]
    TrailingBytes(usize),
    #[error("field `{field}` has length {len}, limit is {max}")]
    TooLong {
        field: &'static str,
        len: usize,
        max: usize,
    },
    #[error("invalid value in `{0}`")]
    InvalidValue(&'static str),
    #[error("stored block hash does not match header")]
    BlockHashMismatch,
}

/// Append-only big-endian writer.
pub struct Writer {
    buf: Vec<u8>,
    enforce_limits: bool,
}

impl Default for Writer {
    fn default() -> Writer {
        Writer::new()
    }
}

impl Writer {
    pub fn new() -> Writer {
        Writer {
            buf: Vec::new(),
            enforce_limits: true,
        }
    }

    /// Writer that encodes over-long fields instead of failing. Used for
    /// hashing, where bounds are enforced by validation rather than layout.
    pub fn unbounded() -> Writer {
        Writer {
            buf: Vec::new(),
            enforce_limits: false,
        }
    }

    pub fn into_bytes(self) -> Vec<u8> {
        self.buf
    }

    pub fn u8(&mut self, v: u8) {
        self.buf.push(v);
    }
    pub fn u16(&mut self, v: u16) {
        self.buf.extend_from_slice(&v.to_be_bytes());
    }
    pub fn u32(&mut self, v: u32) {
        self.buf.extend_from_slice(&v.to_be_bytes());
    }
    pub fn u64(&mut self, v: u64) {
        self.buf.extend_from_slice(&v.to_be_bytes());
    }
    pub fn bool(&mut self, v: bool) {
        self.u8(v as u8);
    }
    pub fn hash(&mut self, h: &Hash256) {
        self.buf.extend_from_slice(&h.0);
    }
    pub fn node(&mut self, n: &NodeId) {
        self.buf.extend_from_slice(&n.0);
    }
    pub fn raw(&mut self, b: &[u8]) {
        self.buf.extend_from_slice(b);
    }

    pub fn bytes(&mut self, field: &'static str, b: &[u8], max: usize) -> Result<(), EncodeError> {
        if self.enforce_limits && b.len() > max {
            return Err(EncodeError::TooLong {
                field,
                len: b.len(),
                max,
            });
        }
        self.u32(b.len() as u32);
        self.raw(b);
        Ok(())
    }

    pub fn list<T: Encode>(&mut self, field: &'static str, items: &[T]) -> Result<(), EncodeError> {
        if items.len() > u32::MAX as usize {
            return Err(EncodeError::TooLong {
                field,
                len: items.len(),
                max: u32::MAX as usize,
            });
        }
        self.u32(items.len() as u32);
        for item in items {
            item.encode_fields(self)?;
        }
        Ok(())
    }
}

/// Cursor over an input slice.
pub struct Reader<'a> {
    data: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    pub fn new(data: &'a [u8]) -> Reader<'a> {
        Reader { data, pos: 0 }
    }

    pub fn remaining(&self) -> usize {
        self.data.len() - self.pos
    }

    pub fn take(&mut self, n: usize) -> Result<&'a [u8], DecodeError> {
        if self.remaining() < n {
            return Err(DecodeError::UnexpectedEof);
        }
        let out = &self.data[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    pub fn u8(&mut self) -> Result<u8, DecodeError> {
        Ok(self.take(1)?[0])
    }
    pub fn u16(&mut self) -> Result<u16, DecodeError> {
        Ok(u16::from_be_bytes(self.take(2)?.try_into().unwrap()))
    }
    pub fn u32(&mut self) -> Result<u32, DecodeError> {
        Ok(u32::from_be_bytes(self.take(4)?.try_into().unwrap()))
    }
    pub fn u64(&mut self) -> Result<u64, DecodeError> {
        Ok(u64::from_be_bytes(self.take(8)?.try_into().unwrap()))
    }
    pub fn bool(&mut self, field: &'static str) -> Result<bool, DecodeError> {
        match self.u8()? {
            0 => Ok(false),
            1 => Ok(true),
            _ => Err(DecodeError::InvalidValue(field)),
        }
    }
    pub fn hash(&mut self) -> Result<Hash256, DecodeError> {
        Ok(Hash256(self.take(32)?.try_into().unwrap()))
    }
    pub fn node(&mut self) -> Result<NodeId, DecodeError> {
        Ok(NodeId(self.take(8)?.try_into().unwrap()))
    }

    pub fn bytes(&mut self, field: &'static str, max: usize) -> Result<Vec<u8>, DecodeError> {
        let len = self.u32()? as usize;
        if len > max {
            return Err(DecodeError::TooLong { field, len, max });
        }
        Ok(self.take(len)?.to_vec())
    }

    pub fn list<T: Decode>(&mut self) -> Result<Vec<T>, DecodeError> {
        let count = self.u32()? as usize;
        // every element occupies at least one byte
        if count > self.remaining() {
            return Err(DecodeError::UnexpectedEof);
        }
        let mut out = Vec::with_capacity(count);
        for _ in 0..count {
            out.push(T::decode_fields(self)?);
        }
        Ok(out)
    }
}

pub trait Encode {
    const TAG: u8;
    fn encode_fields(&self, w: &mut Writer) -> Result<(), EncodeError>;
}

pub trait Decode: Sized {
    fn decode_fields(r: &mut Reader<'_>) -> Result<Self, DecodeError>;
}

/// Tag byte followed by the object's fields.
pub fn canonical_encode<T: Encode + ?Sized>(obj: &T) -> Result<Vec<u8>, EncodeError> {
    let mut w = Writer::new();
    w.u8(T::TAG);
    obj.encode_fields(&mut w)?;
    Ok(w.into_bytes())
}

/// Inverse of [`canonical_encode`]; rejects trailing bytes.
pub fn canonical_decode<T: Encode + Decode>(bytes: &[u8]) -> Result<T, DecodeError> {
    let mut r = Reader::new(bytes);
    let found = r.u8()?;
    if found != T::TAG {
        return Err(DecodeError::BadTag {
            expected: T::TAG,
            found,
        });
    }
    let obj = T::decode_fields(&mut r)?;
    if r.remaining() != 0 {
        return Err(DecodeError::TrailingBytes(r.remaining()));
    }
    Ok(obj)
}

impl Encode for Nonce {
    const TAG: u8 = tag::NONCE;
    fn encode_fields(&self, w: &mut Writer) -> Result<(), EncodeError> {
        w.bytes("nonce.candidate", &self.candidate, MAX_CANDIDATE_LEN)?;
        w.u64(self.eval_value);
        Ok(())
    }
}

impl Decode for Nonce {
    fn decode_fields(r: &mut Reader<'_>) -> Result<Self, DecodeError> {
        Ok(Nonce {
            candidate: r.bytes("nonce.candidate", MAX_CANDIDATE_LEN)?,
            eval_value: r.u64()?,
        })
    }
}

impl Encode for Miniblock {
    const TAG: u8 = tag::MINIBLOCK;
    fn encode_fields(&self, w: &mut Writer) -> Result<(), EncodeError> {
        w.hash(&self.prev_block_hash);
        w.u16(self.job_slot);
        w.node(&self.miner_id);
        self.nonce.encode_fields(w)
    }
}

impl Decode for Miniblock {
    fn decode_fields(r: &mut Reader<'_>) -> Result<Self, DecodeError> {
        Ok(Miniblock {
            prev_block_hash: r.hash()?,
            job_slot: r.u16()?,
            miner_id: r.node()?,
            nonce: Nonce::decode_fields(r)?,
        })
    }
}

impl Encode for Instruction {
    const TAG: u8 = tag::PROGRAM;
    fn encode_fields(&self, w: &mut Writer) -> Result<(), EncodeError> {
        w.u8(self.op as u8);
        w.u64(self.imm);
        Ok(())
    }
}

impl Decode for Instruction {
    fn decode_fields(r: &mut Reader<'_>) -> Result<Self, DecodeError> {
        let op =
            Opcode::from_byte(r.u8()?).ok_or(DecodeError::InvalidValue("instruction.opcode"))?;
        Ok(Instruction { op, imm: r.u64()? })
    }
}

impl Encode for Program {
    const TAG: u8 = tag::PROGRAM;
    fn encode_fields(&self, w: &mut Writer) -> Result<(), EncodeError> {
        if w.enforce_limits && self.len() > MAX_PROGRAM_LEN {
            return Err(EncodeError::TooLong {
                field: "program.instructions",
                len: self.len(),
                max: MAX_PROGRAM_LEN,
            });
        }
        w.list("program.instructions", self.instructions())
    }
}

impl Decode for Program {
    fn decode_fields(r: &mut Reader<'_>) -> Result<Self, DecodeError> {
        let instructions: Vec<Instruction> = r.list()?;
        if instructions.len() > MAX_PROGRAM_LEN {
            return Err(DecodeError::TooLong {
                field: "program.instructions",
                len: instructions.len(),
                max: MAX_PROGRAM_LEN,
            });
        }
        Ok(Program::new(instructions))
    }
}

impl Encode for Job {
    const TAG: u8 = tag::JOB;
    fn encode_fields(&self, w: &mut Writer) -> Result<(), EncodeError> {
        w.node(&self.client());
        w.u64(self.charge().0);
        self.evaluator().encode_fields(w)?;
        self.searcher().encode_fields(w)?;
        w.u64(self.eval_step_budget());
        w.bool(self.is_empty());
        w.u64(self.tag());
        Ok(())
    }
}

impl Decode for Job {
    fn decode_fields(r: &mut Reader<'_>) -> Result<Self, DecodeError> {
        let client = r.node()?;
        let charge = Amount(r.u64()?);
        let evaluator = Program::decode_fields(r)?;
        let searcher = Program::decode_fields(r)?;
        let budget = r.u64()?;
        let is_empty = r.bool("job.is_empty")?;
        let job_tag = r.u64()?;
        Ok(Job::from_parts(
            client, charge, evaluator, searcher, budget, is_empty, job_tag,
        ))
    }
}

impl Encode for JobSummary {
    const TAG: u8 = tag::JOB_SUMMARY;
    fn encode_fields(&self, w: &mut Writer) -> Result<(), EncodeError> {
        w.hash(&self.job_id);
        w.node(&self.client);
        w.u64(self.charge.0);
        Ok(())
    }
}

impl Decode for JobSummary {
    fn decode_fields(r: &mut Reader<'_>) -> Result<Self, DecodeError> {
        Ok(JobSummary {
            job_id: r.hash()?,
            client: r.node()?,
            charge: Amount(r.u64()?),
        })
    }
}

impl Encode for ScheduledJob {
    const TAG: u8 = tag::SCHEDULED_JOB;
    fn encode_fields(&self, w: &mut Writer) -> Result<(), EncodeError> {
        w.hash(&self.job_id);
        w.u8(self.zero_bits);
        w.u64(self.attempt_steps);
        Ok(())
    }
}

impl Decode for ScheduledJob {
    fn decode_fields(r: &mut Reader<'_>) -> Result<Self, DecodeError> {
        Ok(ScheduledJob {
            job_id: r.hash()?,
            zero_bits: r.u8()?,
            attempt_steps: r.u64()?,
        })
    }
}

impl Encode for Transaction {
    const TAG: u8 = tag::TRANSACTION;
    fn encode_fields(&self, w: &mut Writer) -> Result<(), EncodeError> {
        w.node(&self.from);
        w.node(&self.to);
        w.u64(self.amount.0);
        w.u64(self.seq);
        Ok(())
    }
}

impl Decode for Transaction {
    fn decode_fields(r: &mut Reader<'_>) -> Result<Self, DecodeError> {
        Ok(Transaction {
            from: r.node()?,
            to: r.node()?,
            amount: Amount(r.u64()?),
            seq: r.u64()?,
        })
    }
}

impl Encode for Commit {
    const TAG: u8 = tag::COMMIT;
    fn encode_fields(&self, w: &mut Writer) -> Result<(), EncodeError> {
        w.hash(&self.job_id);
        w.node(&self.miner_id);
        w.u64(self.eval_value);
        w.hash(&self.solution_hash);
        Ok(())
    }
}

impl Decode for Commit {
    fn decode_fields(r: &mut Reader<'_>) -> Result<Self, DecodeError> {
        Ok(Commit {
            job_id: r.hash()?,
            miner_id: r.node()?,
            eval_value: r.u64()?,
            solution_hash: r.hash()?,
        })
    }
}

impl Encode for Reveal {
    const TAG: u8 = tag::REVEAL;
    fn encode_fields(&self, w: &mut Writer) -> Result<(), EncodeError> {
        w.hash(&self.job_id);
        w.node(&self.miner_id);
        w.bytes("reveal.solution", &self.solution, MAX_CANDIDATE_LEN)
    }
}

impl Decode for Reveal {
    fn decode_fields(r: &mut Reader<'_>) -> Result<Self, DecodeError> {
        Ok(Reveal {
            job_id: r.hash()?,
            miner_id: r.node()?,
            solution: r.bytes("reveal.solution", MAX_CANDIDATE_LEN)?,
        })
    }
}

impl Encode for Payout {
    const TAG: u8 = tag::PAYOUT;
    fn encode_fields(&self, w: &mut Writer) -> Result<(), EncodeError> {
        w.node(&self.to);
        w.u64(self.amount.0);
        match self.reason {
            PayoutReason::Genesis => w.u8(0),
            PayoutReason::Mint { slot } => {
                w.u8(1);
                w.u16(slot);
            }
            PayoutReason::Charge { job_id } => {
                w.u8(2);
                w.hash(&job_id);
            }
            PayoutReason::Refund { job_id } => {
                w.u8(3);
                w.hash(&job_id);
            }
        }
        Ok(())
    }
}

impl Decode for Payout {
    fn decode_fields(r: &mut Reader<'_>) -> Result<Self, DecodeError> {
        let to = r.node()?;
        let amount = Amount(r.u64()?);
        let reason = match r.u8()? {
            0 => PayoutReason::Genesis,
            1 => PayoutReason::Mint { slot: r.u16()? },
            2 => PayoutReason::Charge { job_id: r.hash()? },
            3 => PayoutReason::Refund { job_id: r.hash()? },
            _ => return Err(DecodeError::InvalidValue("payout.reason")),
        };
        Ok(Payout { to, amount, reason })
    }
}

impl Encode for BlockHeader {
    const TAG: u8 = tag::BLOCK_HEADER;
    fn encode_fields(&self, w: &mut Writer) -> Result<(), EncodeError> {
        w.hash(&self.prev_block_hash);
        w.u64(self.height);
        w.u64(self.timestamp);
        w.u32(self.miniblock_hashes.len() as u32);
        for h in &self.miniblock_hashes {
            w.hash(h);
        }
        w.list("block.transactions", &self.transactions)?;
        w.list("block.new_jobs", &self.new_jobs)?;
        w.list("block.scheduled_jobs", &self.scheduled_jobs)?;
        w.list("block.commits", &self.commits)?;
        w.list("block.reveals", &self.reveals)?;
        w.list("block.payouts", &self.payouts)?;
        Ok(())
    }
}

impl Decode for BlockHeader {
    fn decode_fields(r: &mut Reader<'_>) -> Result<Self, DecodeError> {
        let prev_block_hash = r.hash()?;
        let height = r.u64()?;
        let timestamp = r.u64()?;
        let n = r.u32()? as usize;
        if n.saturating_mul(32) > r.remaining() {
            return Err(DecodeError::UnexpectedEof);
        }
        let mut miniblock_hashes = Vec::with_capacity(n);
        for _ in 0..n {
            miniblock_hashes.push(r.hash()?);
        }
        Ok(BlockHeader {
            prev_block_hash,
            height,
            timestamp,
            miniblock_hashes,
            transactions: r.list()?,
            new_jobs: r.list()?,
            scheduled_jobs: r.list()?,
            commits: r.list()?,
            reveals: r.list()?,
            payouts: r.list()?,
        })
    }
}

/// A block is stored as its header, the header hash (checked on decode so
/// that any byte flip in a stored block is caught even at the chain tip),
/// then the prunable bodies.
impl Encode for Block {
    const TAG: u8 = tag::BLOCK;
    fn encode_fields(&self, w: &mut Writer) -> Result<(), EncodeError> {
        self.header().encode_fields(w)?;
        w.hash(&self.hash());
        w.list("block.miniblocks", self.miniblocks())?;
        w.list("block.job_bodies", self.job_bodies())
    }
}

impl Decode for Block {
    fn decode_fields(r: &mut Reader<'_>) -> Result<Self, DecodeError> {
        let header = BlockHeader::decode_fields(r)?;
        let stored = r.hash()?;
        let miniblocks = r.list()?;
        let job_bodies = r.list()?;
        let block = Block::new(header, miniblocks, job_bodies);
        if block.hash() != stored {
            return Err(DecodeError::BlockHashMismatch);
        }
        Ok(block)
    }
}

/// Preimage of an evaluation context: everything in a miniblock but the nonce.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub struct ContextPreimage {
    pub prev_block_hash: Hash256,
    pub job_slot: u16,
    pub miner_id: NodeId,
}

impl Encode for ContextPreimage {
    const TAG: u8 = tag::EVAL_CONTEXT;
    fn encode_fields(&self, w: &mut Writer) -> Result<(), EncodeError> {
        w.hash(&self.prev_block_hash);
        w.u16(self.job_slot);
        w.node(&self.miner_id);
        Ok(())
    }
}

/// Preimage of a commit's solution hash: miner id followed by the solution.
#[derive(Clone, Copy, Debug)]
pub struct SolutionPreimage<'a> {
    pub miner_id: NodeId,
    pub solution: &'a [u8],
}

impl Encode for SolutionPreimage<'_> {
    const TAG: u8 = tag::SOLUTION;
    fn encode_fields(&self, w: &mut Writer) -> Result<(), EncodeError> {
        w.node(&self.miner_id);
        w.bytes("solution", self.solution, MAX_CANDIDATE_LEN)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_miniblock_layout() {
        let mb = Miniblock {
            prev_block_hash: Hash256::ZERO,
            job_slot: 0,
            miner_id: NodeId::default(),
            nonce: Nonce::default(),
        };
        let bytes = canonical_encode(&mb).unwrap();
        // tag + prev hash + slot + miner + candidate length + eval value
        assert_eq!(bytes.len(), 1 + 32 + 2 + 8 + 4 + 8);
        assert_eq!(bytes[0], tag::MINIBLOCK);
        assert!(bytes[1..].iter().all(|&b| b == 0));
    }

    #[test]
    fn nonce_eval_value_changes_bytes() {
        let a = Nonce {
            candidate: vec![1, 2, 3],
            eval_value: 10,
        };
        let b = Nonce {
            eval_value: 11,
            ..a.clone()
        };
        assert_ne!(canonical_encode(&a).unwrap(), canonical_encode(&b).unwrap());
    }

    #[test]
    fn oversized_candidate_rejected() {
        let n = Nonce {
            candidate: vec![0; MAX_CANDIDATE_LEN + 1],
            eval_value: 0,
        };
        assert!(matches!(
            canonical_encode(&n),
            Err(EncodeError::TooLong {
                field: "nonce.candidate",
                ..
            })
        ));
    }

    #[test]
    fn wrong_tag_and_trailing_bytes() {
        let c = Commit {
            job_id: Hash256([7; 32]),
            miner_id: NodeId::from_u64(3),
            eval_value: 99,
            solution_hash: Hash256([1; 32]),
        };
        let mut bytes = canonical_encode(&c).unwrap();
        assert_eq!(canonical_decode::<Commit>(&bytes).unwrap(), c);
        assert!(matches!(
            canonical_decode::<Reveal>(&bytes),
            Err(DecodeError::BadTag { .. })
        ));
        bytes.push(0);
        assert_eq!(
            canonical_decode::<Commit>(&bytes),
            Err(DecodeError::TrailingBytes(1))
        );
    }

    #[test]
    fn block_hash_checked_on_decode() {
        let header = BlockHeader {
            height: 3,
            timestamp: 17,
            ..Default::default()
        };
        let block = Block::new(header, vec![], vec![]);
        let mut bytes = canonical_encode(&block).unwrap();
        assert_eq!(canonical_decode::<Block>(&bytes).unwrap(), block);
        // flip a bit in the timestamp
        bytes[1 + 32 + 8 + 7] ^= 1;
        assert_eq!(
            canonical_decode::<Block>(&bytes),
            Err(DecodeError::BlockHashMismatch)
        );
    }
}
