//! Chain objects shared by every layer of the protocol.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::hash::{hash_object, ObjectHash};
use crate::vm::Program;

/// Evaluation value reserved for crashed or out-of-budget evaluator runs.
/// Lower evaluation values are better, so this is the worst possible score.
pub const WORST: u64 = u64::MAX;

/// Upper bound on the byte length of a solution candidate.
pub const MAX_CANDIDATE_LEN: usize = 4096;

/// A 32-byte SHA-256 digest.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct Hash256(pub [u8; 32]);

impl Hash256 {
    pub const ZERO: Hash256 = Hash256([0; 32]);

    pub fn as_bytes(&self) -> &[u8; 32] {
        &self.0
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }

    pub fn from_hex(s: &str) -> Option<Hash256> {
        let raw = hex::decode(s).ok()?;
        Some(Hash256(raw.try_into().ok()?))
    }

    /// First eight bytes read as a big-endian integer; handy for seeding.
    pub fn prefix_u64(&self) -> u64 {
        u64::from_be_bytes(self.0[..8].try_into().expect("8 bytes"))
    }

    /// The digest as four big-endian words, most significant first.
    pub fn words(&self) -> [u64; 4] {
        let mut out = [0u64; 4];
        for (i, w) in out.iter_mut().enumerate() {
            *w = u64::from_be_bytes(self.0[i * 8..i * 8 + 8].try_into().expect("8 bytes"));
        }
        out
    }
}

impl fmt::Debug for Hash256 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Hash256({})", &self.to_hex()[..16])
    }
}

impl fmt::Display for Hash256 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

impl Serialize for Hash256 {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_hex())
    }
}

impl<'de> Deserialize<'de> for Hash256 {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        Hash256::from_hex(&s).ok_or_else(|| serde::de::Error::custom("expected 64 hex digits"))
    }
}

/// Opaque 8-byte node identity. Identities are trusted inside the simulator.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct NodeId(pub [u8; 8]);

impl NodeId {
    pub const fn from_u64(v: u64) -> NodeId {
        NodeId(v.to_be_bytes())
    }

    pub fn as_u64(&self) -> u64 {
        u64::from_be_bytes(self.0)
    }
}

impl fmt::Debug for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "NodeId({})", self.as_u64())
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.as_u64())
    }
}

impl Serialize for NodeId {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_u64(self.as_u64())
    }
}

impl<'de> Deserialize<'de> for NodeId {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        Ok(NodeId::from_u64(u64::deserialize(d)?))
    }
}

/// Coin count. All arithmetic is checked.
#[derive(
    Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default, Debug, Serialize, Deserialize,
)]
#[serde(transparent)]
pub struct Amount(pub u64);

impl Amount {
    pub const ZERO: Amount = Amount(0);

    pub fn checked_add(self, other: Amount) -> Option<Amount> {
        self.0.checked_add(other.0).map(Amount)
    }

    pub fn checked_sub(self, other: Amount) -> Option<Amount> {
        self.0.checked_sub(other.0).map(Amount)
    }

    pub fn is_zero(self) -> bool {
        self.0 == 0
    }
}

impl fmt::Display for Amount {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Solution candidate plus its evaluation; replaces the integer nonce of PoW.
#[derive(Clone, PartialEq, Eq, Hash, Debug, Default)]
pub struct Nonce {
    pub candidate: Vec<u8>,
    pub eval_value: u64,
}

/// The unit of mining: one per scheduled job slot.
#[derive(Clone, PartialEq, Eq, Hash, Debug)]
pub struct Miniblock {
    pub prev_block_hash: Hash256,
    pub job_slot: u16,
    pub miner_id: NodeId,
    pub nonce: Nonce,
}

impl Miniblock {
    pub fn hash(&self) -> Hash256 {
        hash_object(self)
    }
}

/// Plain coin transfer between two accounts.
#[derive(Clone, PartialEq, Eq, Hash, Debug, Serialize, Deserialize)]
pub struct Transaction {
    pub from: NodeId,
    pub to: NodeId,
    pub amount: Amount,
    /// Sender-chosen sequence number, only there to keep otherwise equal transfers distinct.
    pub seq: u64,
}

/// An optimization search request.
///
/// The identifier is the content hash of every other field and is computed at
/// construction, so fields are read-only.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct Job {
    id: Hash256,
    client: NodeId,
    charge: Amount,
    evaluator: Arc<Program>,
    searcher: Arc<Program>,
    eval_step_budget: u64,
    is_empty: bool,
    tag: u64,
}

impl Job {
    pub fn new(
        client: NodeId,
        charge: Amount,
        evaluator: Program,
        searcher: Program,
        eval_step_budget: u64,
        tag: u64,
    ) -> Job {
        Job::from_parts(
            client,
            charge,
            evaluator,
            searcher,
            eval_step_budget,
            false,
            tag,
        )
    }

    pub(crate) fn from_parts(
        client: NodeId,
        charge: Amount,
        evaluator: Program,
        searcher: Program,
        eval_step_budget: u64,
        is_empty: bool,
        tag: u64,
    ) -> Job {
        let mut job = Job {
            id: Hash256::ZERO,
            client,
            charge,
            evaluator: Arc::new(evaluator),
            searcher: Arc::new(searcher),
            eval_step_budget,
            is_empty,
            tag,
        };
        job.id = hash_object(&job);
        job
    }

    /// The PoW fallback job: trivial evaluator, no client, no charge.
    pub fn empty() -> Job {
        crate::vm::builtin::empty_job()
    }

    pub fn id(&self) -> Hash256 {
        self.id
    }
    pub fn client(&self) -> NodeId {
        self.client
    }
    pub fn charge(&self) -> Amount {
        self.charge
    }
    pub fn evaluator(&self) -> &Program {
        &self.evaluator
    }
    pub fn searcher(&self) -> &Program {
        &self.searcher
    }
    pub fn shared_evaluator(&self) -> Arc<Program> {
        Arc::clone(&self.evaluator)
    }
    pub fn shared_searcher(&self) -> Arc<Program> {
        Arc::clone(&self.searcher)
    }
    pub fn eval_step_budget(&self) -> u64 {
        self.eval_step_budget
    }
    pub fn is_empty(&self) -> bool {
        self.is_empty
    }
    pub fn tag(&self) -> u64 {
        self.tag
    }

    pub fn summary(&self) -> JobSummary {
        JobSummary {
            job_id: self.id,
            client: self.client,
            charge: self.charge,
        }
    }
}

/// Part of a registered job that survives compaction.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug)]
pub struct JobSummary {
    pub job_id: Hash256,
    pub client: NodeId,
    pub charge: Amount,
}

/// One slot of the next interval's schedule.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug, Serialize)]
pub struct ScheduledJob {
    pub job_id: Hash256,
    pub zero_bits: u8,
    /// Per-attempt cost (evaluation plus hash) used to compensate `zero_bits`.
    pub attempt_steps: u64,
}

/// First phase of solution delivery: evaluation value plus a binding hash.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug)]
pub struct Commit {
    pub job_id: Hash256,
    pub miner_id: NodeId,
    pub eval_value: u64,
    pub solution_hash: Hash256,
}

/// Second phase of solution delivery.
#[derive(Clone, PartialEq, Eq, Hash, Debug)]
pub struct Reveal {
    pub job_id: Hash256,
    pub miner_id: NodeId,
    pub solution: Vec<u8>,
}

#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PayoutReason {
    /// Initial allocation; only valid in the genesis block.
    Genesis,
    /// Newly minted reward for the miniblock in `slot`.
    Mint { slot: u16 },
    /// Escrowed charge paid to a winning miner.
    Charge { job_id: Hash256 },
    /// Escrowed charge returned to the client.
    Refund { job_id: Hash256 },
}

#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug, Serialize)]
pub struct Payout {
    pub to: NodeId,
    pub amount: Amount,
    pub reason: PayoutReason,
}

/// Everything in a block that the block hash commits to. Bulky bodies
/// (job programs, nonce candidates) are represented by their hashes here.
#[derive(Clone, PartialEq, Eq, Debug, Default)]
pub struct BlockHeader {
    pub prev_block_hash: Hash256,
    pub height: u64,
    /// Simulation time (ticks) at which the block was assembled.
    pub timestamp: u64,
    /// One entry per slot of the parent's schedule, in slot order.
    pub miniblock_hashes: Vec<Hash256>,
    pub transactions: Vec<Transaction>,
    pub new_jobs: Vec<JobSummary>,
    pub scheduled_jobs: Vec<ScheduledJob>,
    pub commits: Vec<Commit>,
    pub reveals: Vec<Reveal>,
    pub payouts: Vec<Payout>,
}

/// A chain element. `miniblocks` and `job_bodies` are dropped by compaction;
/// the header always stays.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct Block {
    header: BlockHeader,
    hash: Hash256,
    miniblocks: Vec<Miniblock>,
    job_bodies: Vec<Job>,
}

impl Block {
    pub fn new(header: BlockHeader, miniblocks: Vec<Miniblock>, job_bodies: Vec<Job>) -> Block {
        let hash = hash_object(&header);
        Block {
            header,
            hash,
            miniblocks,
            job_bodies,
        }
    }

    pub fn header(&self) -> &BlockHeader {
        &self.header
    }
    pub fn hash(&self) -> Hash256 {
        self.hash
    }
    pub fn height(&self) -> u64 {
        self.header.height
    }
    pub fn miniblocks(&self) -> &[Miniblock] {
        &self.miniblocks
    }
    pub fn job_bodies(&self) -> &[Job] {
        &self.job_bodies
    }

    pub fn is_compacted(&self) -> bool {
        self.miniblocks.is_empty() && !self.header.miniblock_hashes.is_empty()
    }

    pub fn into_parts(self) -> (BlockHeader, Vec<Miniblock>, Vec<Job>) {
        (self.header, self.miniblocks, self.job_bodies)
    }

    /// Same header, bodies replaced.
    pub fn with_bodies(&self, miniblocks: Vec<Miniblock>, job_bodies: Vec<Job>) -> Block {
        Block {
            header: self.header.clone(),
            hash: self.hash,
            miniblocks,
            job_bodies,
        }
    }
}

impl ObjectHash for Block {
    fn object_hash(&self) -> Hash256 {
        self.hash
    }
}
