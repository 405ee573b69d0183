//! Execution-semantics suites for the chain module.

mod common;

use common::{tiny, TxGen, BITS};
use mwk_core::block::Block;
use mwk_core::chain::{
    first_invalid_block, grant_transaction, rebuild_utxo, valid_chain, validate_append, Action, Chain, ChainConfig,
    ChainState, ErrorCode, Response,
};
use mwk_core::{build_transaction, commit, Opening};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

fn cfg() -> ChainConfig {
    ChainConfig { grant_value: Some(9), incubation: true }
}

#[test]
fn incremental_utxo_matches_rebuild() {
    let p = tiny();
    for seed in 0..20 {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let mut s = ChainState::new(p.clone(), cfg());
        let mut coins: Vec<Opening> = Vec::new();
        for _ in 0..30 {
            let mut gen = TxGen::new(&p);
            let action = if coins.is_empty() || rng.gen_bool(0.3) {
                let outs = [gen.fresh_output(&mut rng, 2), gen.fresh_output(&mut rng, 7)];
                coins.extend(outs);
                Action::SubmitTx { tx: grant_transaction(&p, &cfg(), &outs, BITS).unwrap() }
            } else if rng.gen_bool(0.5) {
                let coin = coins.swap_remove(rng.gen_range(0..coins.len()));
                let g = gen.spend(&mut rng, coin);
                coins.extend(g.outs.iter().copied());
                Action::SubmitTx { tx: g.tx.into() }
            } else {
                Action::MineBlock
            };
            let (next, _) = s.step(&action);
            s = next;
            assert_eq!(s.utxo(), &rebuild_utxo(&p, &cfg(), s.chain()), "seed {seed}");
            assert!(s.valid_state(), "seed {seed}");
        }
    }
}

#[test]
fn spend_of_existing_utxo_is_ok() {
    let p = tiny();
    let coin = Opening::new(9, p.scalar(3));
    let mut s = ChainState::new(p.clone(), cfg());
    s.grant(&[coin], BITS).unwrap();
    assert!(s.apply(&Action::MineBlock).is_ok());
    let tx = build_transaction(&p, &[coin], &[Opening::new(9, p.scalar(8))], p.scalar(1), BITS).unwrap();
    assert_eq!(validate_append(&p, &cfg(), s.chain(), &Block::from_aggregate(tx.into())), Response::Ok);
}

#[test]
fn error_order_prefers_balance_over_spend_checks() {
    let p = tiny();
    let s = ChainState::new(p.clone(), cfg());
    let mut tx = build_transaction(&p, &[Opening::new(9, p.scalar(3))], &[Opening::new(9, p.scalar(8))], p.scalar(1), BITS).unwrap();
    tx.tko = tx.tko + p.scalar(1);
    // unknown input and unbalanced: balance is checked first
    assert_eq!(
        validate_append(&p, &cfg(), s.chain(), &Block::from_aggregate(tx.into())),
        Response::Error(ErrorCode::NotBalanced)
    );
}

#[test]
fn same_input_twice_in_one_block() {
    let p = tiny();
    let coin = Opening::new(9, p.scalar(3));
    let mut s = ChainState::new(p.clone(), cfg());
    s.grant(&[coin], BITS).unwrap();
    s.apply(&Action::MineBlock);
    let a = build_transaction(&p, &[coin], &[Opening::new(9, p.scalar(8))], p.scalar(1), BITS).unwrap();
    let b = build_transaction(&p, &[coin], &[Opening::new(9, p.scalar(10))], p.scalar(2), BITS).unwrap();
    let block = mwk_core::block::block_aggregate(&p, &b, &mwk_core::block::block_aggregate(&p, &a, &Block::empty(&p)).unwrap()).unwrap();
    assert_eq!(validate_append(&p, &cfg(), s.chain(), &block), Response::Error(ErrorCode::DoubleSpend));
}

#[test]
fn forged_chain_reports_first_bad_block() {
    let p = tiny();
    let coin = Opening::new(9, p.scalar(3));
    let mut s = ChainState::new(p.clone(), cfg());
    s.grant(&[coin], BITS).unwrap();
    s.apply(&Action::MineBlock);
    let mut blocks = s.chain().blocks().to_vec();
    let tx = build_transaction(&p, &[Opening::new(4, p.scalar(1))], &[Opening::new(4, p.scalar(2))], p.zero(), BITS).unwrap();
    blocks.push(Block::from_aggregate(tx.into()));
    let forged = Chain::from_blocks_unchecked(blocks);
    assert!(!valid_chain(&p, &cfg(), &forged));
    assert_eq!(first_invalid_block(&p, &cfg(), &forged), Some((2, ErrorCode::UnknownInput)));
    assert!(ChainState::from_chain(p.clone(), cfg(), forged).is_none());
}

#[test]
fn grant_outputs_are_the_only_utxos() {
    let p = tiny();
    let outs = [Opening::new(4, p.scalar(3)), Opening::new(5, p.scalar(6))];
    let mut s = ChainState::new(p.clone(), cfg());
    s.grant(&outs, BITS).unwrap();
    s.apply(&Action::MineBlock);
    let mut got: Vec<_> = rebuild_utxo(&p, &cfg(), s.chain()).commitments().copied().collect();
    let mut want: Vec<_> = outs.iter().map(|o| commit(&p, o)).collect();
    got.sort();
    want.sort();
    assert_eq!(got, want);
}

#[test]
fn appended_block_evicts_conflicting_mempool_entries() {
    let p = tiny();
    let coin = Opening::new(9, p.scalar(3));
    let mut s = ChainState::new(p.clone(), cfg());
    s.grant(&[coin], BITS).unwrap();
    s.apply(&Action::MineBlock);
    let a = build_transaction(&p, &[coin], &[Opening::new(9, p.scalar(8))], p.scalar(1), BITS).unwrap();
    let b = build_transaction(&p, &[coin], &[Opening::new(9, p.scalar(10))], p.scalar(2), BITS).unwrap();
    assert!(s.apply(&Action::SubmitTx { tx: a.into() }).is_ok());
    assert!(s.apply(&Action::AppendBlock { block: Block::from_aggregate(b.into()) }).is_ok());
    assert!(s.mempool().is_empty());
    assert!(s.valid_state());
}
