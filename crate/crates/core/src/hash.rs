//! SHA-256 over canonical encodings, plus the leading-zero difficulty test.

use sha2::{Digest, Sha256};

use crate::codec::{
    canonical_encode, ContextPreimage, Encode, EncodeError, SolutionPreimage, Writer,
};
use crate::types::*;
use crate::vm::Program;

pub fn sha256(bytes: &[u8]) -> Hash256 {
    Hash256(Sha256::digest(bytes).into())
}

/// Objects that have a canonical chain hash.
///
/// For everything except [`Block`] this is the SHA-256 of the canonical
/// encoding. A block is identified by the hash of its header, so that the
/// identity survives compaction of the bodies.
pub trait ObjectHash {
    fn object_hash(&self) -> Hash256;
}

pub fn hash_object<T: ObjectHash + ?Sized>(obj: &T) -> Hash256 {
    obj.object_hash()
}

/// Like [`hash_object`] but fails on objects whose fields exceed the
/// canonical length bounds.
pub fn try_hash_object<T: Encode + ?Sized>(obj: &T) -> Result<Hash256, EncodeError> {
    Ok(sha256(&canonical_encode(obj)?))
}

fn hash_unbounded<T: Encode + ?Sized>(obj: &T) -> Hash256 {
    let mut w = Writer::unbounded();
    w.u8(T::TAG);
    obj.encode_fields(&mut w)
        .expect("unbounded writer only fails on u32 overflow of list counts");
    sha256(&w.into_bytes())
}

macro_rules! encoded_hash {
    ($($t:ty),* $(,)?) => {
        $(impl ObjectHash for $t {
            fn object_hash(&self) -> Hash256 {
                hash_unbounded(self)
            }
        })*
    };
}

encoded_hash!(
    Nonce,
    Miniblock,
    Job,
    JobSummary,
    ScheduledJob,
    Transaction,
    Commit,
    Reveal,
    Payout,
    BlockHeader,
    Program,
    ContextPreimage,
    SolutionPreimage<'_>,
);

/// Number of consecutive zero bits starting at the most significant bit of byte 0.
pub fn leading_zero_bits(h: &Hash256) -> u32 {
    let mut count = 0;
    for &b in &h.0 {
        if b == 0 {
            count += 8;
        } else {
            count += b.leading_zeros();
            break;
        }
    }
    count
}

/// `hash(miner_id ∥ solution)` as registered in a commit.
pub fn solution_hash(miner_id: NodeId, solution: &[u8]) -> Hash256 {
    hash_object(&SolutionPreimage { miner_id, solution })
}
