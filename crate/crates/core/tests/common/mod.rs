//! Random transaction generators shared by the integration suites.
#![allow(dead_code)]

use std::collections::BTreeSet;

use mwk_core::group::{setup, BackendId, GroupParams, TinyConfig};
use mwk_core::{commit, Commitment, Opening, Transaction, TxBuilder};
use rand::Rng;

pub const BITS: u32 = 4;

pub fn tiny() -> GroupParams {
    setup(BackendId::Tiny, 1, &TinyConfig::default()).unwrap()
}

pub fn curve() -> GroupParams {
    setup(BackendId::Curve, 1, &TinyConfig::default()).unwrap()
}

/// A transaction with the openings that produced it.
#[derive(Debug, Clone)]
pub struct Generated {
    pub tx: Transaction,
    pub ins: Vec<Opening>,
    pub outs: Vec<Opening>,
}

/// Builds random balanced transactions whose outputs never repeat a
/// commitment already handed out (the tiny group only has 23 points).
pub struct TxGen<'a> {
    pub p: &'a GroupParams,
    pub used: BTreeSet<Commitment>,
}

impl<'a> TxGen<'a> {
    pub fn new(p: &'a GroupParams) -> Self {
        TxGen { p, used: BTreeSet::new() }
    }

    pub fn fresh_output<R: Rng>(&mut self, rng: &mut R, v: u64) -> Opening {
        loop {
            let o = Opening::new(v, self.p.random_scalar(rng));
            if self.used.insert(commit(self.p, &o)) {
                return o;
            }
        }
    }

    pub fn random_input<R: Rng>(&self, rng: &mut R, v: u64) -> Opening {
        Opening::new(v, self.p.random_scalar(rng))
    }

    fn build<R: Rng>(&self, rng: &mut R, ins: Vec<Opening>, outs: Vec<Opening>) -> Generated {
        let tko = self.p.random_scalar(rng);
        let b = ins.iter().fold(TxBuilder::new(self.p), |b, o| b.input(*o));
        let tx = outs.iter().fold(b, |b, o| b.output(*o)).offset(tko).range_bits(BITS).build().unwrap();
        Generated { tx, ins, outs }
    }

    /// Up to two outputs below `2^BITS`; inputs split their total.
    pub fn random_tx<R: Rng>(&mut self, rng: &mut R) -> Generated {
        let n_out = rng.gen_range(0..=2);
        let outs: Vec<Opening> = (0..n_out).map(|_| {
            let v = rng.gen_range(0..1u64 << BITS);
            self.fresh_output(rng, v)
        }).collect();
        let total: u64 = outs.iter().map(|o| o.v).sum();
        let ins = self.split_inputs(rng, total);
        self.build(rng, ins, outs)
    }

    fn split_inputs<R: Rng>(&self, rng: &mut R, total: u64) -> Vec<Opening> {
        let n_in = if total == 0 { rng.gen_range(0..=2) } else { rng.gen_range(1..=2) };
        let mut left = total;
        let mut ins = Vec::new();
        for k in 0..n_in {
            let v = if k + 1 == n_in { left } else { rng.gen_range(0..=left) };
            left -= v;
            ins.push(self.random_input(rng, v));
        }
        ins
    }

    /// Spends `coin` (plus nothing else) into fresh outputs.
    pub fn spend<R: Rng>(&mut self, rng: &mut R, coin: Opening) -> Generated {
        let a = rng.gen_range(0..=coin.v);
        let outs = vec![self.fresh_output(rng, a), self.fresh_output(rng, coin.v - a)];
        self.build(rng, vec![coin], outs)
    }
}
