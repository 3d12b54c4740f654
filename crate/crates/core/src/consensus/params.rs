use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::codec::{tag, Decode, DecodeError, Encode, EncodeError, Reader, Writer};
use crate::types::{Amount, NodeId};
use crate::vm::DEFAULT_HASH_COST;

/// Largest zero-bit requirement that can be configured.
pub const MAX_ZERO_BITS: u8 = 63;

/// Consensus constants shared by every node of a network.
#[derive(Clone, PartialEq, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ChainParams {
    /// Desired miniblocks per block when no client job is pending.
    pub n_target: u32,
    /// Coins minted per block, split over its miniblocks.
    pub reward: Amount,
    /// Target block time in simulation ticks.
    pub block_time: u64,
    /// Number of recent blocks used to measure evaluation rate and charges.
    pub window: u32,
    pub z_min: u8,
    pub z_max: u8,
    /// Blocks this close to the tip are verified in full.
    pub verify_depth: u64,
    /// Step-equivalent cost of one miniblock hash.
    pub hash_cost: u64,
    /// Evaluation rate assumed while the measurement window is empty.
    pub e_floor: u64,
    /// Charge rate assumed while no job has been submitted.
    pub c_floor: u64,
    /// Balances credited by the genesis block.
    pub genesis: Vec<(NodeId, Amount)>,
}

impl Default for ChainParams {
    fn default() -> ChainParams {
        ChainParams {
            n_target: 1,
            reward: Amount(1 << 20),
            block_time: 1_000_000,
            window: 16,
            z_min: 4,
            z_max: 40,
            verify_depth: 10,
            hash_cost: DEFAULT_HASH_COST,
            e_floor: 1 << 16,
            c_floor: 1,
            genesis: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParamsError {
    #[error("n_target must be at least 1")]
    NoMiniblocks,
    #[error("z_min {0} exceeds z_max {1}")]
    ZeroBitRange(u8, u8),
    #[error("z_max {0} exceeds {MAX_ZERO_BITS}")]
    ZeroBitsTooLarge(u8),
    #[error("verify_depth must be at least 1")]
    NoVerifyDepth,
    #[error("`{0}` must be positive")]
    NotPositive(&'static str),
    #[error("genesis allocations overflow")]
    GenesisOverflow,
    #[error("node {0} appears twice in the genesis allocations")]
    DuplicateGenesis(NodeId),
}

impl ChainParams {
    pub fn validate(&self) -> Result<(), ParamsError> {
        if self.n_target == 0 {
            return Err(ParamsError::NoMiniblocks);
        }
        if self.z_min > self.z_max {
            return Err(ParamsError::ZeroBitRange(self.z_min, self.z_max));
        }
        if self.z_max > MAX_ZERO_BITS {
            return Err(ParamsError::ZeroBitsTooLarge(self.z_max));
        }
        if self.verify_depth == 0 {
            return Err(ParamsError::NoVerifyDepth);
        }
        for (name, v) in [
            ("block_time", self.block_time),
            ("window", self.window as u64),
            ("hash_cost", self.hash_cost),
            ("e_floor", self.e_floor),
            ("c_floor", self.c_floor),
        ] {
            if v == 0 {
                return Err(ParamsError::NotPositive(name));
            }
        }
        let mut total = Amount::ZERO;
        let mut seen = std::collections::BTreeSet::new();
        for &(node, amount) in &self.genesis {
            if !seen.insert(node) {
                return Err(ParamsError::DuplicateGenesis(node));
            }
            total = total
                .checked_add(amount)
                .ok_or(ParamsError::GenesisOverflow)?;
        }
        Ok(())
    }
}

impl Encode for ChainParams {
    const TAG: u8 = tag::CHAIN_PARAMS;
    fn encode_fields(&self, w: &mut Writer) -> Result<(), EncodeError> {
        w.u32(self.n_target);
        w.u64(self.reward.0);
        w.u64(self.block_time);
        w.u32(self.window);
        w.u8(self.z_min);
        w.u8(self.z_max);
        w.u64(self.verify_depth);
        w.u64(self.hash_cost);
        w.u64(self.e_floor);
        w.u64(self.c_floor);
        w.u32(self.genesis.len() as u32);
        for (node, amount) in &self.genesis {
            w.node(node);
            w.u64(amount.0);
        }
        Ok(())
    }
}

impl Decode for ChainParams {
    fn decode_fields(r: &mut Reader<'_>) -> Result<Self, DecodeError> {
        let mut p = ChainParams {
            n_target: r.u32()?,
            reward: Amount(r.u64()?),
            block_time: r.u64()?,
            window: r.u32()?,
            z_min: r.u8()?,
            z_max: r.u8()?,
            verify_depth: r.u64()?,
            hash_cost: r.u64()?,
            e_floor: r.u64()?,
            c_floor: r.u64()?,
            genesis: Vec::new(),
        };
        let count = r.u32()? as usize;
        if count > r.remaining() / 16 {
            return Err(DecodeError::UnexpectedEof);
        }
        for _ in 0..count {
            p.genesis.push((r.node()?, Amount(r.u64()?)));
        }
        Ok(p)
    }
}

/// Measured network behavior that drives job selection and difficulty.
#[derive(Clone, Copy, PartialEq, Debug, Serialize)]
pub struct DifficultyState {
    /// Empty-job-equivalent evaluations per target block time.
    pub e: f64,
    /// Mean total charge of newly registered jobs per block.
    pub c: f64,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codec::{canonical_decode, canonical_encode};

    #[test]
    fn params_round_trip() {
        let p = ChainParams {
            genesis: vec![
                (NodeId::from_u64(3), Amount(10)),
                (NodeId::from_u64(1), Amount(7)),
            ],
            ..ChainParams::default()
        };
        let bytes = canonical_encode(&p).unwrap();
        assert_eq!(canonical_decode::<ChainParams>(&bytes).unwrap(), p);
    }

    #[test]
    fn validation() {
        assert!(ChainParams::default().validate().is_ok());
        let bad = ChainParams {
            z_min: 9,
            z_max: 8,
            ..ChainParams::default()
        };
        assert_eq!(bad.validate(), Err(ParamsError::ZeroBitRange(9, 8)));
        let dup = ChainParams {
            genesis: vec![(NodeId::from_u64(1), Amount(1)); 2],
            ..ChainParams::default()
        };
        assert!(matches!(
            dup.validate(),
            Err(ParamsError::DuplicateGenesis(_))
        ));
    }
}
