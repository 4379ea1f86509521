//! Ledger integration tests: frozen golden vectors, the pow target against
//! a big-integer oracle, randomized fork schedules checked against a
//! from-scratch index rebuild, chain tamper evidence, and the mining
//! trials distribution.

use std::str::FromStr;
use std::sync::Arc;

use ddash_core::clock::FixedClock;
use ddash_core::identity::{fingerprint, Fingerprint, Identity};
use ddash_core::ledger::{
    block_hash, canonical_tx_bytes, decode_tx, mine_block, tx_id, AccessPolicy, Block,
    BlockHeader, ChainEvent, ChainLog, ChainState, GenesisConfig, MineOutcome, PowTarget,
    RecordTransaction,
};
use ddash_core::store::ContentId;

fn golden() -> serde_json::Value {
    let text = std::fs::read_to_string(concat!(
        env!("CARGO_MANIFEST_DIR"),
        "/tests/vectors/ledger/golden.json"
    ))
    .unwrap();
    serde_json::from_str(&text).unwrap()
}

fn golden_tx() -> RecordTransaction {
    let identity = Identity::from_secret_bytes(
        &hex::decode("9d61b19deffd5a60ba844af492ec2cc44449c5697b326919703bac031cae7f60")
            .unwrap()
            .try_into()
            .unwrap(),
    );
    RecordTransaction::build_signed(
        ContentId::for_payload(b"ddash golden content"),
        AccessPolicy::restricted(vec![
            fingerprint(&[0x11; 32]).unwrap(),
            fingerprint(&[0x22; 32]).unwrap(),
        ]),
        "golden record",
        1_700_000_000,
        &identity,
    )
    .unwrap()
}

#[test]
fn golden_tx_bytes_and_id() {
    let expected_hex = std::fs::read_to_string(concat!(
        env!("CARGO_MANIFEST_DIR"),
        "/tests/vectors/tx.hex"
    ))
    .unwrap();
    let tx = golden_tx();
    let bytes = canonical_tx_bytes(&tx, true).unwrap();
    assert_eq!(hex::encode(&bytes), expected_hex.trim());
    assert_eq!(
        hex::encode(tx_id(&tx)),
        golden()["tx_id"].as_str().unwrap()
    );
    assert_eq!(
        hex::encode(canonical_tx_bytes(&tx, false).unwrap()),
        golden()["tx_unsigned_hex"].as_str().unwrap()
    );
    assert_eq!(decode_tx(&bytes).unwrap(), tx);
}

#[test]
fn golden_pow_header() {
    let g = &golden()["pow_golden"];
    let header = BlockHeader {
        parent_hash: hex_to_32(g["parent_hash"].as_str().unwrap()),
        height: 1,
        timestamp: g["timestamp"].as_u64().unwrap(),
        tx_merkle_root: [0u8; 32],
        difficulty: g["difficulty"].as_u64().unwrap(),
        nonce: g["nonce"].as_u64().unwrap(),
        miner: Fingerprint::from_digest(hex_to_32(g["miner"].as_str().unwrap())),
    };
    assert_eq!(hex::encode(block_hash(&header)), g["hash"].as_str().unwrap());
    assert!(ddash_core::ledger::pow_valid(&header).unwrap());
}

fn hex_to_32(s: &str) -> [u8; 32] {
    hex::decode(s).unwrap().try_into().unwrap()
}

#[test]
fn pow_target_matches_bigint_oracle() {
    use num_bigint::BigUint;

    for difficulty in [2u64, 3, 10, 999, 1000, 1_000_000, u64::MAX] {
        let expected = (BigUint::from(1u8) << 256u32) / BigUint::from(difficulty);
        let mut expected_bytes = expected.to_bytes_be();
        while expected_bytes.len() < 32 {
            expected_bytes.insert(0, 0);
        }
        let target = PowTarget::for_difficulty(difficulty).unwrap();
        assert_eq!(
            target.as_bytes().unwrap().as_slice(),
            expected_bytes.as_slice(),
            "difficulty {difficulty}"
        );
    }
}

fn test_genesis(difficulty: u64) -> GenesisConfig {
    GenesisConfig {
        network_id: 4828,
        difficulty,
        timestamp: 1_505_088_000,
        comment: "ddash test genesis".into(),
    }
}

#[test]
fn golden_test_genesis_hash() {
    assert_eq!(
        hex::encode(test_genesis(1000).genesis_hash()),
        golden()["genesis_test_hash"].as_str().unwrap()
    );
}

fn mine_child(parent: &BlockHeader, difficulty: u64, txs: Vec<RecordTransaction>) -> Block {
    let clock = FixedClock::at(parent.timestamp + 1);
    match mine_block(
        parent,
        txs,
        fingerprint(&[5u8; 32]).unwrap(),
        difficulty,
        &clock,
        &|| false,
    )
    .unwrap()
    {
        MineOutcome::Mined { block, .. } => block,
        MineOutcome::Cancelled => unreachable!(),
    }
}

fn record(owner_seed: u8, n: u64) -> RecordTransaction {
    let identity = Identity::from_secret_bytes(&[owner_seed; 32]);
    RecordTransaction::build_signed(
        ContentId::for_payload(&n.to_be_bytes()),
        AccessPolicy::Public,
        format!("asset {n}"),
        1_505_088_000 + n,
        &identity,
    )
    .unwrap()
}

/// Randomized fork schedules: blocks mined on random known parents and
/// delivered in random order; after every acceptance the maintained index
/// must equal a from-scratch rebuild, and head work must never decrease.
#[test]
fn random_fork_schedules_keep_index_sound_and_work_monotone() {
    use rand::seq::SliceRandom;
    use rand::{Rng, SeedableRng};

    for seed in 0..6u64 {
        let mut rng = rand_chacha::ChaCha20Rng::seed_from_u64(seed);
        let genesis = test_genesis(1);
        let clock = Arc::new(FixedClock::at(1_505_088_001));
        let mut chain = ChainState::new(genesis.clone(), clock);

        // grow a random block dag rooted at genesis
        let mut headers = vec![chain.head_block().header.clone()];
        let mut blocks = Vec::new();
        for n in 0..50u64 {
            let parent = headers[rng.gen_range(0..headers.len())].clone();
            let txs = if rng.gen_bool(0.6) {
                vec![record(1 + (n % 3) as u8, rng.gen_range(0..12))]
            } else {
                vec![]
            };
            let block = mine_child(&parent, 1, txs);
            headers.push(block.header.clone());
            blocks.push(block);
        }
        // deliver out of order so orphans and reorgs both happen
        blocks.shuffle(&mut rng);

        let mut last_work = chain.cumulative_work();
        for block in blocks {
            chain.accept_block(block);
            chain.drain_pending_events();
            assert!(
                chain.cumulative_work() >= last_work,
                "work decreased (seed {seed})"
            );
            last_work = chain.cumulative_work();
            let maintained = chain.index_snapshot();
            let rebuilt = chain.rebuilt_index_snapshot();
            assert_eq!(maintained, rebuilt, "index diverged (seed {seed})");
        }
    }
}

#[test]
fn replaying_the_log_reconstructs_the_head() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("chain.log");
    let genesis = test_genesis(1);
    let clock = Arc::new(FixedClock::at(1_505_088_001));

    let mut chain = ChainState::new(genesis.clone(), clock.clone());
    {
        let mut log = ChainLog::open(&path).unwrap();
        let mut parent = chain.head_block().header.clone();
        for n in 0..10 {
            let block = mine_child(&parent, 1, vec![record(2, n)]);
            parent = block.header.clone();
            assert_eq!(chain.accept_block(block.clone()), ChainEvent::Extended);
            log.append(&block).unwrap();
        }
    }

    let mut replayed = ChainState::new(genesis, clock);
    let stats = ChainLog::replay(&path, |block| {
        replayed.accept_block(block);
    })
    .unwrap();
    assert_eq!(stats.records, 10);
    assert_eq!(replayed.head_hash(), chain.head_hash());
    assert_eq!(replayed.height(), 10);
}

/// Mutating any byte of a persisted historical block either fails
/// validation outright or changes the block's identity, which orphans all
/// its descendants; the original head is never reconstructed.
#[test]
fn tampered_history_never_reconstructs_the_head() {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha20Rng::seed_from_u64(99);

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("chain.log");
    let genesis = test_genesis(1000);
    let clock = Arc::new(FixedClock::at(1_505_088_001));

    let mut chain = ChainState::new(genesis.clone(), clock.clone());
    {
        let mut log = ChainLog::open(&path).unwrap();
        let mut parent = chain.head_block().header.clone();
        for n in 0..6 {
            let block = mine_child(&parent, 1000, vec![record(3, n)]);
            parent = block.header.clone();
            chain.accept_block(block.clone());
            log.append(&block).unwrap();
        }
    }
    let original_head = chain.head_hash();
    let pristine = std::fs::read(&path).unwrap();

    for _ in 0..60 {
        let mut bytes = pristine.clone();
        let bit = rng.gen_range(0..bytes.len() * 8);
        bytes[bit / 8] ^= 1 << (bit % 8);
        std::fs::write(&path, &bytes).unwrap();

        let mut replayed = ChainState::new(genesis.clone(), clock.clone());
        let _ = ChainLog::replay(&path, |block| {
            replayed.accept_block(block);
        });
        assert_ne!(
            replayed.head_hash(),
            original_head,
            "tampered log reconstructed the original head (bit {bit})"
        );
        assert!(replayed.height() < 6);
    }
    std::fs::write(&path, &pristine).unwrap();
}

/// Geometric-law sanity check on nonce trials at small difficulties; the
/// paper-anchored 1e6 case lives in the acceptance suite.
#[test]
fn mining_trials_scale_with_difficulty() {
    let clock = FixedClock::at(1_505_088_100);
    let miner = fingerprint(&[1u8; 32]).unwrap();
    for difficulty in [1_000u64, 10_000] {
        let genesis = test_genesis(difficulty);
        let mut parent = genesis.genesis_block().header;
        let mut total: u64 = 0;
        let blocks = 20;
        for _ in 0..blocks {
            match mine_block(&parent, vec![], miner, difficulty, &clock, &|| false).unwrap() {
                MineOutcome::Mined { block, trials } => {
                    total += trials;
                    parent = block.header;
                }
                MineOutcome::Cancelled => unreachable!(),
            }
        }
        let mean = total as f64 / blocks as f64;
        let d = difficulty as f64;
        assert!(
            mean > d / 5.0 && mean < d * 5.0,
            "difficulty {difficulty}: mean trials {mean}"
        );
    }
}

#[test]
fn content_id_text_errors_are_validation_errors() {
    assert!(ContentId::from_str("QmNotARealId").is_err());
}

/// Spec-shaped scenario: same content published by two owners appears
/// twice in checkout, block order preserved, after delivery out of order.
#[test]
fn checkout_preserves_block_order_across_owners() {
    let genesis = test_genesis(1);
    let clock = Arc::new(FixedClock::at(1_505_088_001));
    let mut chain = ChainState::new(genesis, clock);

    let shared = ContentId::for_payload(b"shared dataset");
    let first_owner = Identity::from_secret_bytes(&[0x21; 32]);
    let second_owner = Identity::from_secret_bytes(&[0x22; 32]);
    let tx1 = RecordTransaction::build_signed(
        shared,
        AccessPolicy::Public,
        "first",
        1_505_088_010,
        &first_owner,
    )
    .unwrap();
    let tx2 = RecordTransaction::build_signed(
        shared,
        AccessPolicy::Public,
        "second",
        1_505_088_020,
        &second_owner,
    )
    .unwrap();

    let b1 = mine_child(&chain.head_block().header.clone(), 1, vec![tx1.clone()]);
    let b2 = mine_child(&b1.header, 1, vec![tx2.clone()]);
    // out-of-order delivery: b2 orphans, then connects behind b1
    assert_eq!(chain.accept_block(b2), ChainEvent::Orphaned);
    assert_eq!(chain.accept_block(b1), ChainEvent::Extended);
    chain.drain_pending_events();
    assert_eq!(chain.checkout(&shared), vec![tx1, tx2]);
}
