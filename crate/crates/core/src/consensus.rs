//! Node-local consensus state machine: block forest, transaction pool,
//! message handlers, fork-choice order and ledger.
//!
//! Transactions are [`AggregateTransaction`]s and blocks carry a trivial
//! proof object checked by a pluggable eligibility rule ([`VafRule`]).
//! [`rcv`] and [`mint`] are pure functions of their arguments.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::block::{validate_aggregate, AggregateTransaction};
use crate::chain::{mint_commitment, ChainConfig};
use crate::codec::Writer;
use crate::commit::{CommitMode, Commitment};
use crate::group::GroupParams;
use crate::tx::RangeProofKind;

pub type Tx = AggregateTransaction;

#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct HashVal(#[serde(with = "crate::codec::hex_hash")] pub [u8; 32]);

impl HashVal {
    pub const ZERO: HashVal = HashVal([0; 32]);

    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }
}

impl fmt::Display for HashVal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

impl fmt::Debug for HashVal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{}", &self.to_hex()[..12])
    }
}

/// Node address, shown as `a1`, `a2`, ...
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Addr(pub u32);

impl fmt::Display for Addr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "a{}", self.0)
    }
}

impl fmt::Debug for Addr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Proof {
    pub minter: Addr,
    pub height: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CBlock {
    pub prev: HashVal,
    pub txs: Vec<Tx>,
    pub pf: Proof,
}

/// The genesis block. Its `prev` is the all-zero hash.
pub fn genesis() -> CBlock {
    CBlock { prev: HashVal::ZERO, txs: Vec::new(), pf: Proof { minter: Addr(0), height: 0 } }
}

fn put_commitment(w: &mut Writer, c: &Commitment) {
    w.put_u8(match c.mode {
        CommitMode::Plain => 0,
        CommitMode::Switch => 1,
    });
    w.put_bytes(&c.point.encode());
}

fn put_tx(w: &mut Writer, t: &Tx) {
    w.put_len(t.inputs.len());
    t.inputs.iter().for_each(|c| put_commitment(w, c));
    w.put_len(t.outputs.len());
    t.outputs.iter().for_each(|c| put_commitment(w, c));
    w.put_len(t.kernels.len());
    for k in &t.kernels {
        w.put_len(k.rp.len());
        for rp in &k.rp {
            w.put_u8(match rp.kind {
                RangeProofKind::Stub => 0,
                RangeProofKind::Bits => 1,
            });
            w.put_bytes(&rp.payload);
        }
        w.put_bytes(&k.ke.encode());
        w.put_bytes(&k.sigma.nonce_point.encode());
        w.put_bytes(&k.sigma.s.encode());
        w.put_len(k.incubation.len());
        k.incubation.iter().for_each(|d| w.put_u64(*d));
    }
    w.put_bytes(&t.tko.encode());
}

pub fn hasht(t: &Tx) -> HashVal {
    let mut w = Writer::new().tag(b"mwk/tx");
    put_tx(&mut w, t);
    HashVal(w.digest())
}

pub fn hashb(b: &CBlock) -> HashVal {
    let mut w = Writer::new().tag(b"mwk/block");
    w.put_bytes(&b.prev.0);
    w.put_len(b.txs.len());
    b.txs.iter().for_each(|t| put_tx(&mut w, t));
    w.put_u32(b.pf.minter.0);
    w.put_u64(b.pf.height);
    HashVal(w.digest())
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(tag = "type", content = "data", rename_all = "snake_case")]
pub enum Msg {
    Null,
    Connect,
    Addr(BTreeSet<Addr>),
    Tx(Tx),
    Block(CBlock),
    Inv(BTreeSet<HashVal>),
    GetData(HashVal),
}

impl Msg {
    pub fn kind(&self) -> &'static str {
        match self {
            Msg::Null => "NullMsg",
            Msg::Connect => "ConnectMsg",
            Msg::Addr(_) => "AddrMsg",
            Msg::Tx(_) => "TxMsg",
            Msg::Block(_) => "BlockMsg",
            Msg::Inv(_) => "InvMsg",
            Msg::GetData(_) => "GetDataMsg",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Packet {
    pub from: Addr,
    pub to: Addr,
    pub msg: Msg,
}

impl Packet {
    pub fn new(from: Addr, to: Addr, msg: Msg) -> Packet {
        Packet { from, to, msg }
    }
}

/// Block-proof eligibility.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum VafRule {
    /// The block extending a chain of length `h` must be minted by
    /// `schedule[h mod len]` and carry height `h`.
    RoundRobin { schedule: Vec<Addr> },
    Always,
    Never,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConsensusParams {
    pub group: GroupParams,
    pub vaf: VafRule,
    /// Maximum transaction pool size.
    pub pool_cap: usize,
    /// Ledger rules; only `grant_value` matters here.
    pub rules: ChainConfig,
}

impl ConsensusParams {
    pub fn new(group: GroupParams, vaf: VafRule) -> ConsensusParams {
        ConsensusParams { group, vaf, pool_cap: 4096, rules: ChainConfig::default() }
    }

    pub fn with_grant(mut self, value: u64) -> Self {
        self.rules.grant_value = Some(value);
        self
    }

    pub fn mk_proof(&self, this: Addr, c: &[CBlock]) -> Proof {
        Proof { minter: this, height: c.len() as u64 }
    }

    /// Requiring `pf.height = |c|` keeps any block carrying `pf` out of `c`
    /// whenever the blocks of `c` carry their own positions.
    pub fn vaf(&self, pf: &Proof, _now: u64, c: &[CBlock]) -> bool {
        match &self.vaf {
            VafRule::Always => pf.height == c.len() as u64,
            VafRule::Never => false,
            VafRule::RoundRobin { schedule } => {
                !schedule.is_empty()
                    && pf.height == c.len() as u64
                    && schedule[c.len() % schedule.len()] == pf.minter
            }
        }
    }

    /// Set insertion, ignored once the pool is full.
    pub fn tx_extend(&self, tp: &BTreeSet<Tx>, tx: &Tx) -> BTreeSet<Tx> {
        let mut next = tp.clone();
        if tp.len() < self.pool_cap {
            next.insert(tx.clone());
        }
        next
    }

    fn mint_input(&self) -> Option<Commitment> {
        self.rules.grant_value.map(|v| mint_commitment(&self.group, v))
    }

    /// `txValid(t, c)`: `t` validates, its inputs are unspent outputs of `c`
    /// (or the public mint commitment) and `c` does not already contain it.
    pub fn tx_valid(&self, t: &Tx, c: &[CBlock]) -> bool {
        let view = ChainView::of(self, c);
        view.admits(self, t, &BTreeMap::new())
    }
}

/// Unspent outputs and included transaction hashes of a chain.
#[derive(Debug, Clone, Default)]
struct ChainView {
    utxo: BTreeMap<Commitment, usize>,
    included: BTreeSet<HashVal>,
}

impl ChainView {
    fn of(params: &ConsensusParams, c: &[CBlock]) -> ChainView {
        let mut v = ChainView::default();
        for b in c {
            v.apply(params, b);
        }
        v
    }

    fn apply(&mut self, params: &ConsensusParams, b: &CBlock) {
        let mint = params.mint_input();
        for t in &b.txs {
            for i in t.inputs.iter().filter(|i| Some(**i) != mint) {
                if let Some(n) = self.utxo.get_mut(i) {
                    *n -= 1;
                    if *n == 0 {
                        self.utxo.remove(i);
                    }
                }
            }
            for o in &t.outputs {
                *self.utxo.entry(*o).or_default() += 1;
            }
            self.included.insert(hasht(t));
        }
    }

    /// `consumed` holds inputs already claimed by other transactions of the
    /// same block.
    fn admits(&self, params: &ConsensusParams, t: &Tx, consumed: &BTreeMap<Commitment, usize>) -> bool {
        if self.included.contains(&hasht(t)) || validate_aggregate(&params.group, t).is_err() {
            return false;
        }
        let mint = params.mint_input();
        let mut wanted: BTreeMap<&Commitment, usize> = BTreeMap::new();
        for i in t.inputs.iter().filter(|i| Some(**i) != mint) {
            *wanted.entry(i).or_default() += 1;
        }
        wanted.iter().all(|(c, n)| {
            let have = self.utxo.get(*c).copied().unwrap_or(0);
            n + consumed.get(*c).copied().unwrap_or(0) <= have
        })
    }

    /// All transactions of `b` are valid against this view and none of them
    /// competes for the same input or repeats another.
    fn admits_block(&self, params: &ConsensusParams, b: &CBlock) -> bool {
        let mut consumed: BTreeMap<Commitment, usize> = BTreeMap::new();
        let mut seen = BTreeSet::new();
        let mint = params.mint_input();
        for t in &b.txs {
            if !seen.insert(hasht(t)) || !self.admits(params, t, &consumed) {
                return false;
            }
            for i in t.inputs.iter().filter(|i| Some(**i) != mint) {
                *consumed.entry(*i).or_default() += 1;
            }
        }
        true
    }
}

/// Fork-choice key: chains compare by length, then by their block hashes
/// read from the last block backwards.
fn fcr_key(c: &[CBlock]) -> (usize, Vec<HashVal>) {
    (c.len(), c.iter().rev().map(hashb).collect())
}

/// The strict fork-choice order: `fcr(x, y)` means `y` is heavier than `x`.
pub fn fcr(x: &[CBlock], y: &[CBlock]) -> bool {
    fcr_cmp(x, y) == Ordering::Less
}

pub fn fcr_cmp(x: &[CBlock], y: &[CBlock]) -> Ordering {
    fcr_key(x).cmp(&fcr_key(y))
}

/// The FCR-maximum of a set of chains.
pub fn max_fcr<'a, I: IntoIterator<Item = &'a [CBlock]>>(chains: I) -> Option<&'a [CBlock]> {
    chains.into_iter().max_by(|a, b| fcr_cmp(a, b))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LocState {
    pub this: Addr,
    #[serde(rename = "as")]
    pub peers: BTreeSet<Addr>,
    pub bf: BTreeMap<HashVal, CBlock>,
    pub tp: BTreeSet<Tx>,
}

impl LocState {
    /// A fresh node: no peers, empty pool, forest seeded with genesis.
    pub fn new(this: Addr) -> LocState {
        let gb = genesis();
        LocState { this, peers: BTreeSet::new(), bf: BTreeMap::from([(hashb(&gb), gb)]), tp: BTreeSet::new() }
    }

    /// `dom bf ∪ hasht⦇tp⦈`
    pub fn inventory(&self) -> BTreeSet<HashVal> {
        self.bf.keys().copied().chain(self.tp.iter().map(hasht)).collect()
    }

    fn broadcast(&self, msg: Msg) -> BTreeSet<Packet> {
        self.peers.iter().map(|a| Packet::new(self.this, *a, msg.clone())).collect()
    }

    /// Adds `b` to the forest and keeps only pool members still valid
    /// against the new ledger.
    fn accept_block(&mut self, params: &ConsensusParams, b: &CBlock) {
        self.bf.insert(hashb(b), b.clone());
        let led = ledger(params, &self.bf);
        let view = ChainView::of(params, &led);
        self.tp.retain(|t| view.admits(params, t, &BTreeMap::new()));
    }
}

/// Processes one packet at `st`. Packets addressed to another node are
/// ignored.
pub fn rcv(params: &ConsensusParams, st: &LocState, p: &Packet) -> (LocState, BTreeSet<Packet>) {
    let mut next = st.clone();
    if p.to != st.this {
        return (next, BTreeSet::new());
    }
    let reply = |msg: Msg| BTreeSet::from([Packet::new(st.this, p.from, msg)]);
    let out = match &p.msg {
        Msg::Null => BTreeSet::new(),
        Msg::Connect => {
            next.peers.insert(p.from);
            reply(Msg::Inv(st.inventory()))
        }
        Msg::Addr(asm) => {
            next.peers.extend(asm.iter().copied());
            let connects = asm.difference(&st.peers).map(|a| Packet::new(st.this, *a, Msg::Connect));
            let gossip = st.peers.iter().map(|a| Packet::new(st.this, *a, Msg::Addr(next.peers.clone())));
            connects.chain(gossip).collect()
        }
        Msg::Tx(tx) => {
            next.tp = params.tx_extend(&st.tp, tx);
            next.broadcast(Msg::Inv(next.inventory()))
        }
        Msg::Block(b) => {
            next.accept_block(params, b);
            next.broadcast(Msg::Inv(next.inventory()))
        }
        Msg::Inv(hs) => {
            let known = st.inventory();
            hs.difference(&known).map(|h| Packet::new(st.this, p.from, Msg::GetData(*h))).collect()
        }
        Msg::GetData(h) => {
            if let Some(b) = st.bf.get(h) {
                reply(Msg::Block(b.clone()))
            } else if let Some(t) = st.tp.iter().find(|t| hasht(t) == *h) {
                reply(Msg::Tx(t.clone()))
            } else {
                reply(Msg::Null)
            }
        }
    };
    (next, out)
}

/// Mints a block on top of the node's ledger from the valid pool members.
/// If the proof is not accepted nothing changes.
pub fn mint(params: &ConsensusParams, st: &LocState, now: u64) -> (LocState, BTreeSet<Packet>) {
    let c = ledger(params, &st.bf);
    let pf = params.mk_proof(st.this, &c);
    if !params.vaf(&pf, now, &c) {
        return (st.clone(), BTreeSet::new());
    }
    let view = ChainView::of(params, &c);
    let mint_input = params.mint_input();
    let mut consumed: BTreeMap<Commitment, usize> = BTreeMap::new();
    let mut txs = Vec::new();
    for t in &st.tp {
        if view.admits(params, t, &consumed) {
            for i in t.inputs.iter().filter(|i| Some(**i) != mint_input) {
                *consumed.entry(*i).or_default() += 1;
            }
            txs.push(t.clone());
        }
    }
    let b = CBlock { prev: hashb(c.last().expect("ledger holds genesis")), txs, pf };
    let mut next = st.clone();
    next.accept_block(params, &b);
    let out = next.broadcast(Msg::Block(b));
    (next, out)
}

/// Per-block results of following prev-links back to genesis.
struct Forest<'a> {
    params: &'a ConsensusParams,
    bf: &'a BTreeMap<HashVal, CBlock>,
    gb: HashVal,
    memo: BTreeMap<HashVal, Option<(usize, ChainView)>>,
}

impl<'a> Forest<'a> {
    fn new(params: &'a ConsensusParams, bf: &'a BTreeMap<HashVal, CBlock>) -> Self {
        Forest { params, bf, gb: hashb(&genesis()), memo: BTreeMap::new() }
    }

    /// Length and view of the valid chain ending at `h`, if there is one.
    fn resolve(&mut self, h: HashVal) -> Option<usize> {
        // Walk back to genesis or the first memoized block.
        let mut path = Vec::new();
        let mut cur = h;
        loop {
            if self.memo.contains_key(&cur) {
                break;
            }
            let Some(b) = self.bf.get(&cur) else {
                self.memo.insert(cur, None);
                break;
            };
            if cur == self.gb {
                self.memo.insert(cur, Some((1, ChainView::default())));
                break;
            }
            if path.contains(&cur) || path.len() > self.bf.len() {
                self.memo.insert(cur, None);
                break;
            }
            path.push(cur);
            cur = b.prev;
        }
        while let Some(child) = path.pop() {
            let parent = self.bf[&child].prev;
            let entry = match &self.memo[&parent] {
                Some((len, view)) if view.admits_block(self.params, &self.bf[&child]) => {
                    let mut v = view.clone();
                    v.apply(self.params, &self.bf[&child]);
                    Some((len + 1, v))
                }
                _ => None,
            };
            self.memo.insert(child, entry);
        }
        self.memo[&h].as_ref().map(|(len, _)| *len)
    }

    fn materialize(&self, h: HashVal) -> Vec<CBlock> {
        let mut out = Vec::new();
        let mut cur = h;
        loop {
            let b = &self.bf[&cur];
            out.push(b.clone());
            if cur == self.gb {
                break;
            }
            cur = b.prev;
        }
        out.reverse();
        out
    }
}

/// The chain from genesis to `b` through `bf`, or `⟨GB⟩` if `b` is not in
/// the forest or no valid linkage exists.
pub fn chain_of(params: &ConsensusParams, bf: &BTreeMap<HashVal, CBlock>, b: &CBlock) -> Vec<CBlock> {
    let h = hashb(b);
    let mut forest = Forest::new(params, bf);
    if bf.get(&h) != Some(b) || forest.resolve(h).is_none() {
        return vec![genesis()];
    }
    forest.materialize(h)
}

/// The FCR-maximum among the chains of all blocks in the forest.
pub fn ledger(params: &ConsensusParams, bf: &BTreeMap<HashVal, CBlock>) -> Vec<CBlock> {
    let mut forest = Forest::new(params, bf);
    let lens: Vec<(HashVal, usize)> = bf.keys().filter_map(|h| forest.resolve(*h).map(|l| (*h, l))).collect();
    let Some(best) = lens.iter().map(|(_, l)| *l).max() else {
        return vec![genesis()];
    };
    let candidates: Vec<Vec<CBlock>> =
        lens.iter().filter(|(_, l)| *l == best).map(|(h, _)| forest.materialize(*h)).collect();
    max_fcr(candidates.iter().map(Vec::as_slice)).map(<[CBlock]>::to_vec).unwrap_or_else(|| vec![genesis()])
}

/// Digest of a chain's block hashes, used to compare ledgers across nodes.
pub fn ledger_hash(c: &[CBlock]) -> HashVal {
    let mut w = Writer::new().tag(b"mwk/ledger");
    w.put_len(c.len());
    c.iter().for_each(|b| w.put_bytes(&hashb(b).0));
    HashVal(w.digest())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chain::grant_transaction;
    use crate::commit::Opening;
    use crate::group::{setup, BackendId, TinyConfig};

    fn params() -> ConsensusParams {
        let g = setup(BackendId::Tiny, 1, &TinyConfig::default()).unwrap();
        ConsensusParams::new(g, VafRule::Always).with_grant(9)
    }

    fn addrs(xs: &[u32]) -> BTreeSet<Addr> {
        xs.iter().map(|x| Addr(*x)).collect()
    }

    fn grant(p: &ConsensusParams, r: u64) -> Tx {
        grant_transaction(&p.group, &p.rules, &[Opening::new(9, p.group.scalar(r))], 4).unwrap()
    }

    fn child(prev: &CBlock, txs: Vec<Tx>, minter: u32) -> CBlock {
        CBlock { prev: hashb(prev), txs, pf: Proof { minter: Addr(minter), height: 0 } }
    }

    fn forest(blocks: &[&CBlock]) -> BTreeMap<HashVal, CBlock> {
        let mut bf = LocState::new(Addr(1)).bf;
        for b in blocks {
            bf.insert(hashb(b), (*b).clone());
        }
        bf
    }

    #[test]
    fn rcv_addr_trace() {
        let p = params();
        let this = Addr(9);
        let s = LocState::new(this);
        let from = Addr(7);
        let (s1, p1) = rcv(&p, &s, &Packet::new(from, this, Msg::Addr(addrs(&[1, 2]))));
        assert_eq!(s1.peers, addrs(&[1, 2]));
        assert_eq!(p1, BTreeSet::from([Packet::new(this, Addr(1), Msg::Connect), Packet::new(this, Addr(2), Msg::Connect)]));
        let (s2, p2) = rcv(&p, &s1, &Packet::new(from, this, Msg::Addr(addrs(&[1, 3]))));
        assert_eq!(s2.peers, addrs(&[1, 2, 3]));
        let all = addrs(&[1, 2, 3]);
        assert_eq!(
            p2,
            BTreeSet::from([
                Packet::new(this, Addr(3), Msg::Connect),
                Packet::new(this, Addr(1), Msg::Addr(all.clone())),
                Packet::new(this, Addr(2), Msg::Addr(all)),
            ])
        );
    }

    #[test]
    fn null_and_unknown_getdata() {
        let p = params();
        let s = LocState::new(Addr(1));
        let (s1, out) = rcv(&p, &s, &Packet::new(Addr(2), Addr(1), Msg::Null));
        assert_eq!(s1, s);
        assert!(out.is_empty());
        let (s2, out) = rcv(&p, &s, &Packet::new(Addr(2), Addr(1), Msg::GetData(HashVal([7; 32]))));
        assert_eq!(s2, s);
        assert_eq!(out, BTreeSet::from([Packet::new(Addr(1), Addr(2), Msg::Null)]));
    }

    #[test]
    fn misaddressed_packet_ignored() {
        let p = params();
        let s = LocState::new(Addr(1));
        let (s1, out) = rcv(&p, &s, &Packet::new(Addr(2), Addr(3), Msg::Connect));
        assert_eq!(s1, s);
        assert!(out.is_empty());
    }

    #[test]
    fn connect_replies_with_inventory() {
        let p = params();
        let s = LocState::new(Addr(1));
        let (s1, out) = rcv(&p, &s, &Packet::new(Addr(2), Addr(1), Msg::Connect));
        assert_eq!(s1.peers, addrs(&[2]));
        assert_eq!(out, BTreeSet::from([Packet::new(Addr(1), Addr(2), Msg::Inv(BTreeSet::from([hashb(&genesis())])))]));
    }

    #[test]
    fn inv_requests_only_unknown_hashes() {
        let p = params();
        let s = LocState::new(Addr(1));
        let hs = BTreeSet::from([hashb(&genesis()), HashVal([1; 32])]);
        let (_, out) = rcv(&p, &s, &Packet::new(Addr(2), Addr(1), Msg::Inv(hs)));
        assert_eq!(out, BTreeSet::from([Packet::new(Addr(1), Addr(2), Msg::GetData(HashVal([1; 32])))]));
    }

    #[test]
    fn chain_of_follows_prev_links() {
        let p = params();
        let gb = genesis();
        let b1 = child(&gb, vec![grant(&p, 3)], 1);
        let b2 = child(&b1, vec![], 2);
        let bf = forest(&[&b1, &b2]);
        assert_eq!(chain_of(&p, &bf, &gb), vec![gb.clone()]);
        assert_eq!(chain_of(&p, &bf, &b2), vec![gb.clone(), b1.clone(), b2.clone()]);
        let orphan = CBlock { prev: HashVal([5; 32]), txs: vec![], pf: Proof { minter: Addr(1), height: 1 } };
        let bf = forest(&[&b1, &orphan]);
        assert_eq!(chain_of(&p, &bf, &orphan), vec![gb.clone()]);
        // not in the forest at all
        assert_eq!(chain_of(&p, &forest(&[]), &b1), vec![gb]);
    }

    #[test]
    fn chain_of_rejects_repeated_transaction() {
        let p = params();
        let gb = genesis();
        let t = grant(&p, 3);
        let b1 = child(&gb, vec![t.clone()], 1);
        let b2 = child(&b1, vec![t], 2);
        let bf = forest(&[&b1, &b2]);
        assert_eq!(chain_of(&p, &bf, &b2), vec![gb]);
        assert_eq!(ledger(&p, &bf).len(), 2);
    }

    #[test]
    fn ledger_prefers_longer_branch() {
        let p = params();
        let gb = genesis();
        let a1 = child(&gb, vec![], 1);
        let a2 = child(&a1, vec![], 1);
        let b1 = child(&gb, vec![], 2);
        let b2 = child(&b1, vec![], 2);
        let b3 = child(&b2, vec![], 2);
        let bf = forest(&[&a1, &a2, &b1, &b2, &b3]);
        assert_eq!(ledger(&p, &bf), vec![gb, b1, b2, b3]);
    }

    #[test]
    fn equal_length_fork_is_stable() {
        let p = params();
        let gb = genesis();
        let a = child(&gb, vec![], 1);
        let b = child(&gb, vec![], 2);
        let bf = forest(&[&a, &b]);
        let first = ledger(&p, &bf);
        let heavier = if hashb(&a) > hashb(&b) { &a } else { &b };
        assert_eq!(first[1], *heavier);
        let reversed: BTreeMap<_, _> = bf.clone().into_iter().rev().collect();
        assert_eq!(ledger(&p, &reversed), first);
    }

    #[test]
    fn mint_on_fresh_node() {
        let p = params();
        let s = LocState::new(Addr(1));
        let (s1, out) = mint(&p, &s, 0);
        assert!(out.is_empty(), "no peers");
        let led = ledger(&p, &s1.bf);
        assert_eq!(led.len(), 2);
        assert!(led[1].txs.is_empty());
        assert_eq!(led[1].prev, hashb(&genesis()));
    }

    #[test]
    fn mint_includes_and_clears_pool() {
        let p = params();
        let mut s = LocState::new(Addr(1));
        s.peers.insert(Addr(2));
        let t = grant(&p, 3);
        let (s1, _) = rcv(&p, &s, &Packet::new(Addr(2), Addr(1), Msg::Tx(t.clone())));
        assert!(s1.tp.contains(&t));
        let (s2, out) = mint(&p, &s1, 0);
        let led = ledger(&p, &s2.bf);
        assert_eq!(led[1].txs, vec![t]);
        assert!(s2.tp.is_empty());
        assert!(matches!(&out.iter().next().unwrap().msg, Msg::Block(b) if *b == led[1]));
    }

    #[test]
    fn mint_skips_conflicting_spends() {
        let p = params();
        let mut s = LocState::new(Addr(1));
        let coin = Opening::new(9, p.group.scalar(3));
        let g = grant_transaction(&p.group, &p.rules, &[coin], 4).unwrap();
        s.tp.insert(g);
        let (s1, _) = mint(&p, &s, 0);
        let spend = |r| -> Tx {
            crate::tx::build_transaction(&p.group, &[coin], &[Opening::new(9, p.group.scalar(r))], p.group.scalar(1), 4)
                .unwrap()
                .into()
        };
        let mut s2 = s1.clone();
        s2.tp.insert(spend(5));
        s2.tp.insert(spend(6));
        let (s3, _) = mint(&p, &s2, 1);
        let led = ledger(&p, &s3.bf);
        assert_eq!(led.len(), 3);
        assert_eq!(led[2].txs.len(), 1);
        assert!(s3.tp.is_empty(), "the loser is no longer spendable");
    }

    #[test]
    fn never_vaf_makes_mint_a_no_op() {
        let mut p = params();
        p.vaf = VafRule::Never;
        let s = LocState::new(Addr(1));
        assert_eq!(mint(&p, &s, 0), (s, BTreeSet::new()));
    }

    #[test]
    fn round_robin_eligibility() {
        let mut p = params();
        p.vaf = VafRule::RoundRobin { schedule: vec![Addr(1), Addr(2)] };
        let c = vec![genesis()];
        assert!(!p.vaf(&p.mk_proof(Addr(1), &c), 0, &c));
        assert!(p.vaf(&p.mk_proof(Addr(2), &c), 0, &c));
    }

    #[test]
    fn rcv_is_deterministic() {
        let p = params();
        let mut s = LocState::new(Addr(1));
        s.peers = addrs(&[2, 3]);
        let pkt = Packet::new(Addr(2), Addr(1), Msg::Tx(grant(&p, 4)));
        assert_eq!(rcv(&p, &s, &pkt), rcv(&p, &s, &pkt));
    }

    #[test]
    fn locstate_json_round_trip() {
        let p = params();
        let mut s = LocState::new(Addr(1));
        s.tp.insert(grant(&p, 4));
        let json = serde_json::to_string(&s).unwrap();
        assert!(json.contains("\"as\":[]"));
        assert_eq!(serde_json::from_str::<LocState>(&json).unwrap(), s);
        let m = serde_json::to_string(&Msg::Addr(addrs(&[1]))).unwrap();
        assert_eq!(m, r#"{"type":"addr","data":[1]}"#);
        assert!(serde_json::from_str::<Msg>(r#"{"type":"bogus"}"#).is_err());
    }
}
