use std::sync::Arc;

use posearch::consensus::{
    chain_to_bytes, compute_rewards, read_chain, verify_chain, ChainParams, ChainState, TxError,
    Verification, VerifyCache,
};
use posearch::mining::{Message, SoloChain};
use posearch::tsp::TspInstance;
use posearch::types::{Amount, NodeId, Transaction};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const CLIENT: NodeId = NodeId::from_u64(100);
const MINER: NodeId = NodeId::from_u64(1);

fn params() -> Arc<ChainParams> {
    Arc::new(ChainParams {
        reward: Amount(1000),
        z_min: 0,
        e_floor: 64,
        genesis: vec![
            (CLIENT, Amount(10_000)),
            (NodeId::from_u64(101), Amount(500)),
        ],
        ..ChainParams::default()
    })
}

fn mined_chain(blocks: usize) -> SoloChain {
    let mut s = SoloChain::new(params(), MINER, 64.0 * 66.0 / 1e6, 4);
    let inst = TspInstance::random(5, &mut ChaCha8Rng::seed_from_u64(3));
    s.submit(Message::Job(inst.job(CLIENT, Amount(700), 0)));
    s.submit(Message::Transaction(Transaction {
        from: CLIENT,
        to: NodeId::from_u64(7),
        amount: Amount(250),
        seq: 0,
    }));
    s.mine_blocks(blocks);
    s
}

proptest! {
    #[test]
    fn reward_shares_sum_exactly(zs in prop::collection::vec(0u8..40, 1..16), r in 0u64..u64::MAX / 2) {
        let shares = compute_rewards(&zs, Amount(r));
        prop_assert_eq!(shares.len(), zs.len());
        prop_assert_eq!(shares.iter().map(|a| a.0 as u128).sum::<u128>(), r as u128);
    }

    #[test]
    fn more_zero_bits_never_earn_less(zs in prop::collection::vec(0u8..20, 2..10)) {
        let shares = compute_rewards(&zs, Amount(1_000_000));
        for i in 0..zs.len() {
            for j in 0..zs.len() {
                if zs[i] > zs[j] {
                    prop_assert!(shares[i] >= shares[j]);
                }
            }
        }
    }

    #[test]
    fn transfers_conserve_supply(txs in prop::collection::vec((0u64..4, 0u64..4, 0u64..800), 0..60)) {
        let (mut state, _) = ChainState::genesis(Arc::new(ChainParams {
            genesis: (0..4).map(|i| (NodeId::from_u64(i), Amount(1000))).collect(),
            ..ChainParams::default()
        }));
        let supply = state.total_supply();
        for (from, to, amount) in txs {
            let from = NodeId::from_u64(from);
            let before = state.clone();
            let tx = Transaction { from, to: NodeId::from_u64(to), amount: Amount(amount), seq: state.next_sequence(from) };
            match state.apply_transaction(&tx) {
                Ok(()) => prop_assert_eq!(state.next_sequence(from), before.next_sequence(from) + 1),
                Err(e) => {
                    prop_assert!(matches!(e, TxError::ZeroAmount | TxError::InsufficientBalance), "{e}");
                    prop_assert_eq!(state.balances(), before.balances());
                }
            }
            prop_assert_eq!(state.total_supply(), supply);
        }
    }
}

#[test]
fn stale_sequence_is_rejected() {
    let (mut state, _) = ChainState::genesis(params());
    let tx = Transaction {
        from: CLIENT,
        to: MINER,
        amount: Amount(10),
        seq: 0,
    };
    state.apply_transaction(&tx).unwrap();
    assert_eq!(
        state.apply_transaction(&tx),
        Err(TxError::BadSequence {
            expected: 1,
            got: 0
        })
    );
}

#[test]
fn chain_file_round_trips() {
    let chain = mined_chain(10).chain();
    let bytes = chain_to_bytes(&chain).unwrap();
    let back = read_chain(&bytes).unwrap();
    assert_eq!(back.tip_hash(), chain.tip_hash());
    assert_eq!(back.blocks().len(), chain.blocks().len());
    assert_eq!(chain_to_bytes(&back).unwrap(), bytes);
    let report = verify_chain(&back, &mut VerifyCache::new()).unwrap();
    assert_eq!(report.state.balance(NodeId::from_u64(7)), Amount(250));
    assert_eq!(report.state.balance(CLIENT), Amount(10_000 - 250 - 700));
}

#[test]
fn corrupted_chain_files_are_rejected() {
    let chain = mined_chain(8).chain();
    let bytes = chain_to_bytes(&chain).unwrap();
    assert!(read_chain(&bytes[..bytes.len() - 1]).is_err());
    assert!(read_chain(b"NOPE").is_err());
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for _ in 0..200 {
        let mut b = bytes.clone();
        let i = rand::Rng::random_range(&mut rng, 4..b.len());
        b[i] ^= 1 << rand::Rng::random_range(&mut rng, 0..8);
        let detected = match read_chain(&b) {
            Err(_) => true,
            Ok(c) => {
                c.tip_hash() != chain.tip_hash()
                    || verify_chain(&c, &mut VerifyCache::new()).is_err()
            }
        };
        assert!(detected, "flip at byte {i} went unnoticed");
    }
}

#[test]
fn relaxed_replay_reaches_the_same_ledger() {
    let chain = mined_chain(12).chain();
    let mut full = ChainState::empty(chain.params().clone());
    let mut relaxed = ChainState::empty(chain.params().clone());
    let mut runs = 0;
    for b in chain.blocks() {
        runs += full.apply(b, Verification::Full).unwrap().evaluator_runs;
        assert_eq!(
            relaxed
                .apply(b, Verification::Relaxed)
                .unwrap()
                .evaluator_runs,
            0
        );
    }
    assert!(runs > 0);
    assert_eq!(full.balances(), relaxed.balances());
    assert_eq!(full.tip_hash(), relaxed.tip_hash());
    assert_eq!(full.total_supply(), 10_500 + 1000 * 12);
}

#[test]
fn blocks_must_extend_the_tip() {
    let chain = mined_chain(4).chain();
    let mut state = ChainState::empty(chain.params().clone());
    state.apply(&chain.blocks()[0], Verification::Full).unwrap();
    assert!(state.apply(&chain.blocks()[2], Verification::Full).is_err());
    state.apply(&chain.blocks()[1], Verification::Full).unwrap();
    assert!(state.apply(&chain.blocks()[1], Verification::Full).is_err());
}
