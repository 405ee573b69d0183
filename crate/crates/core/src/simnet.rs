//! Deterministic discrete-event network simulator.
//!
//! Nodes run the [`consensus`](crate::consensus) state machine. Packets sit
//! in a soup ordered by `(deliver_at, insertion sequence)`; scenario
//! injections scheduled for a tick run before packets due at that tick.
//! Transactions enter the network through Dandelion stem relays (simulator
//! events carrying a hop counter) and are then fluffed with `TxMsg`s.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::IteratorRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use statrs::distribution::{ChiSquared, ContinuousCDF};
use thiserror::Error;

use crate::block::{coinjoin, BlockError};
use crate::chain::mint_commitment;
use crate::commit::{commit, Commitment, Opening};
use crate::consensus::{self, hasht, ledger, ledger_hash, Addr, ConsensusParams, HashVal, LocState, Msg, Packet, Tx, VafRule};
use crate::group::{setup, BackendId, GroupError, GroupParams, TinyConfig};
use crate::tx::{TxBuilder, TxError};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Topology {
    Clique,
    Ring,
    /// Each unordered pair is linked with probability `p`.
    Random { p: f64 },
    /// No initial links; use `connect` injections.
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Latency {
    Fixed { ticks: u64 },
    Uniform { min: u64, max: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DandelionConfig {
    pub enabled: bool,
    /// Probability that a stem hop relays instead of fluffing.
    pub coin_p: f64,
    pub max_stem: u32,
}

impl Default for DandelionConfig {
    fn default() -> Self {
        DandelionConfig { enabled: false, coin_p: 0.5, max_stem: 32 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BeamDummyConfig {
    pub enabled: bool,
    pub incubation_min: u64,
    pub incubation_max: u64,
}

impl Default for BeamDummyConfig {
    fn default() -> Self {
        BeamDummyConfig { enabled: false, incubation_min: 1, incubation_max: 10 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub n_nodes: u32,
    pub topology: Topology,
    pub latency: Latency,
    pub loss: f64,
    pub seed: u64,
    pub dandelion: DandelionConfig,
    pub beam_dummy: BeamDummyConfig,
    pub backend: BackendId,
    pub tiny: TinyConfig,
    /// Value of the public mint commitment spent by generated transactions.
    pub grant_value: u64,
    pub range_bits: u32,
    /// Block eligibility; defaults to round-robin over all nodes.
    pub vaf: Option<VafRule>,
    pub pool_cap: usize,
    pub max_events: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            n_nodes: 5,
            topology: Topology::Clique,
            latency: Latency::Fixed { ticks: 1 },
            loss: 0.0,
            seed: 0,
            dandelion: DandelionConfig::default(),
            beam_dummy: BeamDummyConfig::default(),
            backend: BackendId::Curve,
            tiny: TinyConfig::default(),
            grant_value: 200,
            range_bits: 8,
            vaf: None,
            pool_cap: 4096,
            max_events: 1_000_000,
        }
    }
}

impl SimConfig {
    pub fn addrs(&self) -> impl Iterator<Item = Addr> {
        (1..=self.n_nodes).map(Addr)
    }

    fn validate(&self) -> Result<(), SimError> {
        let bad = |m: &str| Err(SimError::InvalidConfig(m.to_string()));
        let unit = |x: f64| (0.0..=1.0).contains(&x);
        if self.n_nodes == 0 {
            return bad("n_nodes must be positive");
        }
        if !unit(self.loss) || self.loss == 1.0 {
            return bad("loss must lie in [0, 1)");
        }
        if !unit(self.dandelion.coin_p) {
            return bad("dandelion.coin_p must lie in [0, 1]");
        }
        if self.beam_dummy.incubation_min > self.beam_dummy.incubation_max {
            return bad("beam_dummy.incubation_min exceeds incubation_max");
        }
        if let Latency::Uniform { min, max } = self.latency {
            if min > max {
                return bad("latency.min exceeds latency.max");
            }
        }
        if let Topology::Random { p } = self.topology {
            if !unit(p) {
                return bad("topology.p must lie in [0, 1]");
            }
        }
        if u128::from(self.grant_value) >= 1u128 << self.range_bits.min(127) {
            return bad("grant_value does not fit in range_bits");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "action", rename_all = "snake_case", deny_unknown_fields)]
pub enum SimAction {
    /// `from` adds `to` as a peer and sends it a `ConnectMsg`.
    Connect { from: Addr, to: Addr },
    /// Starts broadcasting `tx` from `node`; without `tx`, a fresh grant
    /// transaction is generated.
    SubmitTx {
        node: Addr,
        #[serde(default)]
        tx: Option<Tx>,
    },
    /// `node` tries to mint; without `node`, every node tries in turn.
    Mint {
        #[serde(default)]
        node: Option<Addr>,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Injection {
    pub at: u64,
    #[serde(flatten)]
    pub action: SimAction,
}

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid simulation config: {0}")]
    InvalidConfig(String),
    #[error("no node with address {0}")]
    UnknownNode(Addr),
    #[error("event limit of {limit} reached before quiescence")]
    EventLimit { limit: u64 },
    #[error(transparent)]
    Group(#[from] GroupError),
    #[error(transparent)]
    Tx(#[from] TxError),
    #[error(transparent)]
    Join(#[from] BlockError),
}

/// The zero-value output added to a transaction at the start of its stem.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DummyOutput {
    pub opening: Opening,
    pub commitment: Commitment,
    pub incubation: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TxRecord {
    pub origin: Addr,
    pub hash: HashVal,
    pub submitted_at: u64,
    /// First node to fluff the transaction.
    pub fluff_node: Option<Addr>,
    pub fluff_tick: Option<u64>,
    /// Number of stem relays before fluffing.
    pub stem_length: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dummy: Option<DummyOutput>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NodeSummary {
    pub addr: Addr,
    pub ledger_hash: HashVal,
    pub height: usize,
    pub pool: usize,
    pub peers: usize,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PacketStats {
    pub sent: u64,
    pub delivered: u64,
    pub dropped: u64,
    pub stem_relays: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimReport {
    pub seed: u64,
    pub nodes: Vec<NodeSummary>,
    /// All nodes hold the same ledger.
    pub converged: bool,
    /// Last tick at which any node's ledger changed.
    pub convergence_tick: u64,
    pub mempool_agreement: bool,
    pub final_tick: u64,
    pub events: u64,
    pub packets: PacketStats,
    /// Stem length to number of transactions.
    pub stem_histogram: BTreeMap<u32, u64>,
    pub txs: Vec<TxRecord>,
    pub log_digest: HashVal,
}

#[derive(Debug, Clone)]
enum Event {
    Inject(SimAction),
    Deliver(Packet),
    Stem { node: Addr, tx: Tx, hops: u32, record: usize },
}

/// Queue key: tick, then injections before other events, then FIFO.
type Key = (u64, u8, u64);

pub struct Simulator {
    cfg: SimConfig,
    params: ConsensusParams,
    nodes: BTreeMap<Addr, LocState>,
    soup: BTreeMap<Key, Event>,
    seq: u64,
    now: u64,
    rng: ChaCha20Rng,
    records: Vec<TxRecord>,
    submitted: Vec<Tx>,
    stats: PacketStats,
    events: u64,
    ledger_hashes: BTreeMap<Addr, HashVal>,
    convergence_tick: u64,
    log: Sha256,
}

impl Simulator {
    pub fn new(cfg: SimConfig) -> Result<Simulator, SimError> {
        cfg.validate()?;
        let group = setup(cfg.backend, cfg.seed, &cfg.tiny)?;
        let vaf = cfg.vaf.clone().unwrap_or_else(|| VafRule::RoundRobin { schedule: cfg.addrs().collect() });
        let mut params = ConsensusParams::new(group, vaf).with_grant(cfg.grant_value);
        params.pool_cap = cfg.pool_cap;
        let mut rng = ChaCha20Rng::seed_from_u64(cfg.seed);
        let mut nodes: BTreeMap<Addr, LocState> = cfg.addrs().map(|a| (a, LocState::new(a))).collect();
        let addrs: Vec<Addr> = cfg.addrs().collect();
        let n = addrs.len();
        let mut link = |a: Addr, b: Addr| {
            if a != b {
                nodes.get_mut(&a).unwrap().peers.insert(b);
                nodes.get_mut(&b).unwrap().peers.insert(a);
            }
        };
        match cfg.topology {
            Topology::Clique => {
                for i in 0..n {
                    for j in i + 1..n {
                        link(addrs[i], addrs[j]);
                    }
                }
            }
            Topology::Ring => {
                for i in 0..n {
                    link(addrs[i], addrs[(i + 1) % n]);
                }
            }
            Topology::Random { p } => {
                for i in 0..n {
                    for j in i + 1..n {
                        if rng.gen_bool(p) {
                            link(addrs[i], addrs[j]);
                        }
                    }
                }
            }
            Topology::None => {}
        }
        let genesis_hash = ledger_hash(&[consensus::genesis()]);
        Ok(Simulator {
            ledger_hashes: nodes.keys().map(|a| (*a, genesis_hash)).collect(),
            cfg,
            params,
            nodes,
            soup: BTreeMap::new(),
            seq: 0,
            now: 0,
            rng,
            records: Vec::new(),
            submitted: Vec::new(),
            stats: PacketStats::default(),
            events: 0,
            convergence_tick: 0,
            log: Sha256::new(),
        })
    }

    pub fn params(&self) -> &ConsensusParams {
        &self.params
    }

    pub fn node(&self, a: Addr) -> Option<&LocState> {
        self.nodes.get(&a)
    }

    pub fn nodes(&self) -> impl Iterator<Item = &LocState> {
        self.nodes.values()
    }

    /// Transactions as broadcast, after any dummy output was joined in.
    pub fn submitted(&self) -> &[Tx] {
        &self.submitted
    }

    pub fn records(&self) -> &[TxRecord] {
        &self.records
    }

    pub fn schedule(&mut self, inj: Injection) {
        self.push(inj.at, 0, Event::Inject(inj.action));
    }

    fn push(&mut self, at: u64, class: u8, e: Event) {
        self.soup.insert((at, class, self.seq), e);
        self.seq += 1;
    }

    fn latency(&mut self) -> u64 {
        match self.cfg.latency {
            Latency::Fixed { ticks } => ticks,
            Latency::Uniform { min, max } => self.rng.gen_range(min..=max),
        }
    }

    fn send(&mut self, packets: BTreeSet<Packet>) {
        for p in packets {
            self.stats.sent += 1;
            if self.cfg.loss > 0.0 && self.rng.gen_bool(self.cfg.loss) {
                self.stats.dropped += 1;
                continue;
            }
            let at = self.now + self.latency();
            self.push(at, 1, Event::Deliver(p));
        }
    }

    fn log_event(&mut self, kind: &str, detail: &[u8]) {
        self.log.update(self.now.to_be_bytes());
        self.log.update(kind.as_bytes());
        self.log.update((detail.len() as u64).to_be_bytes());
        self.log.update(detail);
    }

    fn note_ledger(&mut self, a: Addr) {
        let h = ledger_hash(&ledger(&self.params, &self.nodes[&a].bf));
        if self.ledger_hashes.insert(a, h) != Some(h) {
            self.convergence_tick = self.now;
        }
    }

    fn state(&self, a: Addr) -> Result<&LocState, SimError> {
        self.nodes.get(&a).ok_or(SimError::UnknownNode(a))
    }

    /// Runs until the soup is empty.
    pub fn run(&mut self) -> Result<SimReport, SimError> {
        while let Some(((at, _, _), event)) = self.soup.pop_first() {
            self.events += 1;
            if self.events > self.cfg.max_events {
                return Err(SimError::EventLimit { limit: self.cfg.max_events });
            }
            self.now = at;
            match event {
                Event::Deliver(p) => self.deliver(p)?,
                Event::Inject(a) => self.inject(a)?,
                Event::Stem { node, tx, hops, record } => self.steam(node, tx, hops, record)?,
            }
        }
        Ok(self.report())
    }

    fn deliver(&mut self, p: Packet) -> Result<(), SimError> {
        self.stats.delivered += 1;
        let detail = serde_json::to_vec(&(p.from, p.to, p.msg.kind(), msg_digest(&p.msg))).expect("serializes");
        self.log_event("deliver", &detail);
        let st = self.state(p.to)?;
        let (next, out) = consensus::rcv(&self.params, st, &p);
        self.nodes.insert(p.to, next);
        if matches!(p.msg, Msg::Block(_)) {
            self.note_ledger(p.to);
        }
        self.send(out);
        Ok(())
    }

    fn inject(&mut self, action: SimAction) -> Result<(), SimError> {
        let detail = serde_json::to_vec(&action).expect("serializes");
        self.log_event("inject", &detail);
        match action {
            SimAction::Connect { from, to } => {
                self.state(to)?;
                self.nodes.get_mut(&from).ok_or(SimError::UnknownNode(from))?.peers.insert(to);
                self.send(BTreeSet::from([Packet::new(from, to, Msg::Connect)]));
            }
            SimAction::SubmitTx { node, tx } => {
                self.state(node)?;
                let tx = match tx {
                    Some(tx) => tx,
                    None => self.generate_tx()?,
                };
                let (tx, dummy) = if self.cfg.dandelion.enabled && self.cfg.beam_dummy.enabled {
                    self.add_dummy(tx)?
                } else {
                    (tx, None)
                };
                self.records.push(TxRecord {
                    origin: node,
                    hash: hasht(&tx),
                    submitted_at: self.now,
                    fluff_node: None,
                    fluff_tick: None,
                    stem_length: None,
                    dummy,
                });
                self.submitted.push(tx.clone());
                let record = self.records.len() - 1;
                if self.cfg.dandelion.enabled {
                    self.steam(node, tx, 0, record)?;
                } else {
                    self.fluff(node, tx, 0, record);
                }
            }
            SimAction::Mint { node } => {
                let targets: Vec<Addr> = match node {
                    Some(a) => vec![a],
                    None => self.nodes.keys().copied().collect(),
                };
                for a in targets {
                    let (next, out) = consensus::mint(&self.params, self.state(a)?, self.now);
                    self.nodes.insert(a, next);
                    self.note_ledger(a);
                    self.send(out);
                }
            }
        }
        Ok(())
    }

    /// A grant transaction splitting the mint value into two outputs.
    fn generate_tx(&mut self) -> Result<Tx, SimError> {
        let g = &self.params.group;
        let total = self.cfg.grant_value;
        let a = self.rng.gen_range(0..=total);
        let (r1, r2, off) = (g.random_scalar(&mut self.rng), g.random_scalar(&mut self.rng), g.random_scalar(&mut self.rng));
        let t = TxBuilder::new(g)
            .input(Opening::new(total, g.zero()))
            .output(Opening::new(a, r1))
            .output(Opening::new(total - a, r2))
            .offset(off)
            .range_bits(self.cfg.range_bits)
            .build()?;
        debug_assert_eq!(t.inputs[0], mint_commitment(g, total));
        Ok(t.into())
    }

    /// CoinJoins a fresh zero-value output with a random incubation period
    /// into `tx`.
    fn add_dummy(&mut self, tx: Tx) -> Result<(Tx, Option<DummyOutput>), SimError> {
        let g = &self.params.group;
        let bd = self.cfg.beam_dummy;
        let incubation = self.rng.gen_range(bd.incubation_min..=bd.incubation_max);
        let opening = Opening::new(0, g.random_scalar(&mut self.rng));
        let off = g.random_scalar(&mut self.rng);
        let zero = TxBuilder::new(g)
            .output(opening)
            .incubation(vec![incubation])
            .offset(off)
            .range_bits(self.cfg.range_bits)
            .build()?;
        let joined = coinjoin(g, &zero, &tx)?;
        let dummy = DummyOutput { opening, commitment: commit(g, &opening), incubation };
        Ok((joined, Some(dummy)))
    }

    fn steam(&mut self, node: Addr, tx: Tx, hops: u32, record: usize) -> Result<(), SimError> {
        let d = self.cfg.dandelion;
        let peers: Vec<Addr> = self.state(node)?.peers.iter().copied().collect();
        if peers.is_empty() || hops >= d.max_stem || !self.rng.gen_bool(d.coin_p) {
            self.fluff(node, tx, hops, record);
            return Ok(());
        }
        let next = *peers.iter().choose(&mut self.rng).expect("non-empty");
        self.stats.stem_relays += 1;
        self.log_event("stem", &serde_json::to_vec(&(node, next, hops, hasht(&tx))).expect("serializes"));
        let at = self.now + self.latency();
        self.push(at, 1, Event::Stem { node: next, tx, hops: hops + 1, record });
        Ok(())
    }

    fn fluff(&mut self, node: Addr, tx: Tx, hops: u32, record: usize) {
        let r = &mut self.records[record];
        if r.fluff_node.is_none() {
            r.fluff_node = Some(node);
            r.fluff_tick = Some(self.now);
            r.stem_length = Some(hops);
        }
        let st = self.nodes.get_mut(&node).expect("checked by caller");
        st.tp = self.params.tx_extend(&st.tp, &tx);
        let out: BTreeSet<Packet> = st.peers.iter().map(|a| Packet::new(node, *a, Msg::Tx(tx.clone()))).collect();
        self.send(out);
    }

    pub fn report(&self) -> SimReport {
        let nodes: Vec<NodeSummary> = self
            .nodes
            .values()
            .map(|st| NodeSummary {
                addr: st.this,
                ledger_hash: self.ledger_hashes[&st.this],
                height: ledger(&self.params, &st.bf).len(),
                pool: st.tp.len(),
                peers: st.peers.len(),
            })
            .collect();
        let converged = nodes.windows(2).all(|w| w[0].ledger_hash == w[1].ledger_hash);
        let pools: BTreeSet<&BTreeSet<Tx>> = self.nodes.values().map(|st| &st.tp).collect();
        SimReport {
            seed: self.cfg.seed,
            nodes,
            converged,
            convergence_tick: self.convergence_tick,
            mempool_agreement: pools.len() <= 1,
            final_tick: self.now,
            events: self.events,
            packets: self.stats,
            stem_histogram: stem_histogram(&self.records),
            txs: self.records.clone(),
            log_digest: HashVal(self.log.clone().finalize().into()),
        }
    }
}

fn msg_digest(m: &Msg) -> HashVal {
    HashVal(Sha256::digest(serde_json::to_vec(m).expect("serializes")).into())
}

pub fn stem_histogram(records: &[TxRecord]) -> BTreeMap<u32, u64> {
    let mut h = BTreeMap::new();
    for len in records.iter().filter_map(|r| r.stem_length) {
        *h.entry(len).or_default() += 1;
    }
    h
}

/// Runs `cfg` against `scenario` to quiescence.
pub fn run(cfg: &SimConfig, scenario: &[Injection]) -> Result<SimReport, SimError> {
    let mut sim = Simulator::new(cfg.clone())?;
    for inj in scenario {
        sim.schedule(inj.clone());
    }
    sim.run()
}

/// Fraction of transactions first fluffed somewhere other than their origin.
pub fn untraceability_probe(records: &[TxRecord]) -> f64 {
    let fluffed: Vec<&TxRecord> = records.iter().filter(|r| r.fluff_node.is_some()).collect();
    if fluffed.is_empty() {
        return 0.0;
    }
    fluffed.iter().filter(|r| r.fluff_node != Some(r.origin)).count() as f64 / fluffed.len() as f64
}

/// `P(L = k)` for the stem length `L`: geometric in the relay probability,
/// with all mass beyond `max_stem` collapsed onto `max_stem`.
pub fn stem_length_pmf(coin_p: f64, max_stem: u32) -> Vec<f64> {
    (0..=max_stem)
        .map(|k| if k < max_stem { coin_p.powi(k as i32) * (1.0 - coin_p) } else { coin_p.powi(max_stem as i32) })
        .collect()
}

/// Expected probe value on a clique of `n` nodes. A stem walk of `k` hops
/// sits at its origin with probability `q_k`, where `q_0 = 1` and
/// `q_{k+1} = (1 − q_k)/(n − 1)`.
pub fn expected_untraceability(n: u32, coin_p: f64, max_stem: u32) -> f64 {
    if n < 2 {
        return 0.0;
    }
    let m = f64::from(n - 1);
    let mut q = 1.0;
    let mut at_origin = 0.0;
    for pk in stem_length_pmf(coin_p, max_stem) {
        at_origin += pk * q;
        q = (1.0 - q) / m;
    }
    1.0 - at_origin
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChiSquareResult {
    pub statistic: f64,
    pub df: u32,
    pub p_value: f64,
    /// `(first stem length in bin, observed, expected)`
    pub bins: Vec<(u32, u64, f64)>,
}

/// Pearson goodness of fit of a stem-length histogram against
/// [`stem_length_pmf`]. Bins with expected count below 5 are pooled into
/// the tail bin.
pub fn stem_chi_square(hist: &BTreeMap<u32, u64>, coin_p: f64, max_stem: u32) -> ChiSquareResult {
    let total: u64 = hist.values().sum();
    let pmf = stem_length_pmf(coin_p, max_stem);
    let n = total as f64;
    let mut bins: Vec<(u32, u64, f64)> = Vec::new();
    let mut k = 0u32;
    while (k as usize) < pmf.len() {
        let tail: f64 = pmf[k as usize..].iter().sum();
        let observed_tail: u64 = hist.range(k..).map(|(_, c)| *c).sum();
        if n * pmf[k as usize] < 5.0 || n * (tail - pmf[k as usize]) < 5.0 {
            bins.push((k, observed_tail, n * tail));
            break;
        }
        bins.push((k, hist.get(&k).copied().unwrap_or(0), n * pmf[k as usize]));
        k += 1;
    }
    let statistic: f64 =
        bins.iter().filter(|b| b.2 > 0.0).map(|(_, o, e)| (*o as f64 - e).powi(2) / e).sum();
    let df = bins.len().saturating_sub(1).max(1) as u32;
    let p_value = ChiSquared::new(f64::from(df)).map(|d| 1.0 - d.cdf(statistic)).unwrap_or(f64::NAN);
    ChiSquareResult { statistic, df, p_value, bins }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StemExperiment {
    pub runs: usize,
    pub histogram: BTreeMap<u32, u64>,
    pub records: Vec<TxRecord>,
    #[serde(skip)]
    pub txs: Vec<Tx>,
    pub untraceability: f64,
}

/// Seed for the `i`-th independent run derived from a base seed.
pub fn run_seed(base: u64, i: u64) -> u64 {
    let d = Sha256::new().chain_update(b"mwk/run-seed").chain_update(base.to_be_bytes()).chain_update(i.to_be_bytes()).finalize();
    u64::from_be_bytes(d[..8].try_into().unwrap())
}

/// `runs` independent single-transaction simulations, each with its own
/// derived seed and origin `a(1 + i mod n)`. Runs are spread over threads;
/// results are collected in run order.
pub fn stem_experiment(cfg: &SimConfig, runs: usize) -> Result<StemExperiment, SimError> {
    cfg.validate()?;
    let workers = std::thread::available_parallelism().map_or(1, |n| n.get()).min(runs.max(1));
    let chunk = runs.div_ceil(workers).max(1);
    let results: Vec<Result<Vec<(TxRecord, Tx)>, SimError>> = std::thread::scope(|s| {
        let handles: Vec<_> = (0..runs)
            .step_by(chunk)
            .map(|start| {
                s.spawn(move || {
                    (start..(start + chunk).min(runs))
                        .map(|i| {
                            let c = SimConfig { seed: run_seed(cfg.seed, i as u64), ..cfg.clone() };
                            let origin = Addr(1 + (i as u32 % cfg.n_nodes));
                            let mut sim = Simulator::new(c)?;
                            sim.schedule(Injection { at: 0, action: SimAction::SubmitTx { node: origin, tx: None } });
                            sim.run()?;
                            Ok((sim.records[0].clone(), sim.submitted[0].clone()))
                        })
                        .collect()
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("worker panicked")).collect()
    });
    let mut records = Vec::with_capacity(runs);
    let mut txs = Vec::with_capacity(runs);
    for r in results {
        for (rec, tx) in r? {
            records.push(rec);
            txs.push(tx);
        }
    }
    Ok(StemExperiment {
        runs,
        histogram: stem_histogram(&records),
        untraceability: untraceability_probe(&records),
        records,
        txs,
    })
}

/// Connects every pair with injections at tick 0 (for `Topology::None`).
pub fn clique_connects(cfg: &SimConfig) -> Vec<Injection> {
    let addrs: Vec<Addr> = cfg.addrs().collect();
    let mut out = Vec::new();
    for (i, a) in addrs.iter().enumerate() {
        for b in &addrs[i + 1..] {
            out.push(Injection { at: 0, action: SimAction::Connect { from: *a, to: *b } });
        }
    }
    out
}

/// Submits `n_txs` generated transactions from rotating origins, then has
/// all nodes attempt to mint every `mint_every` ticks for `rounds` rounds.
pub fn standard_scenario(cfg: &SimConfig, n_txs: u32, mint_every: u64, rounds: u32) -> Vec<Injection> {
    let mut out: Vec<Injection> = (0..n_txs)
        .map(|i| Injection { at: u64::from(i), action: SimAction::SubmitTx { node: Addr(1 + i % cfg.n_nodes), tx: None } })
        .collect();
    for r in 1..=u64::from(rounds) {
        out.push(Injection { at: r * mint_every, action: SimAction::Mint { node: None } });
    }
    out
}

/// A small default group for quick experiments.
pub fn tiny_group() -> GroupParams {
    setup(BackendId::Tiny, 0, &TinyConfig::default()).expect("default tiny config is valid")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::block::validate_aggregate;

    fn base() -> SimConfig {
        SimConfig { backend: BackendId::Tiny, grant_value: 9, range_bits: 4, ..SimConfig::default() }
    }

    #[test]
    fn connect_introduces_both_nodes() {
        let cfg = SimConfig { n_nodes: 2, topology: Topology::None, ..base() };
        let mut sim = Simulator::new(cfg).unwrap();
        sim.schedule(Injection { at: 0, action: SimAction::Connect { from: Addr(1), to: Addr(2) } });
        let rep = sim.run().unwrap();
        assert!(sim.node(Addr(1)).unwrap().peers.contains(&Addr(2)));
        assert!(sim.node(Addr(2)).unwrap().peers.contains(&Addr(1)));
        // ConnectMsg, then InvMsg back; genesis is known so nothing further
        assert_eq!(rep.packets.sent, 2);
        assert_eq!(rep.packets.delivered, 2);
    }

    #[test]
    fn clique_converges_and_is_repeatable() {
        let cfg = SimConfig { seed: 7, ..base() };
        let scenario = standard_scenario(&cfg, 3, 20, 3);
        let a = run(&cfg, &scenario).unwrap();
        assert!(a.converged);
        assert!(a.mempool_agreement);
        assert_eq!(a.nodes[0].height, 4);
        assert_eq!(a.packets.sent, a.packets.delivered);
        let b = run(&cfg, &scenario).unwrap();
        assert_eq!(serde_json::to_vec(&a).unwrap(), serde_json::to_vec(&b).unwrap());
    }

    #[test]
    fn fluff_reaches_every_connected_node() {
        let cfg = SimConfig { n_nodes: 4, ..base() };
        let mut sim = Simulator::new(cfg).unwrap();
        sim.schedule(Injection { at: 0, action: SimAction::SubmitTx { node: Addr(1), tx: None } });
        let rep = sim.run().unwrap();
        assert!(sim.nodes().all(|st| st.tp.len() == 1));
        assert_eq!(rep.txs[0].fluff_node, Some(Addr(1)));
        assert_eq!(rep.txs[0].stem_length, Some(0));
    }

    #[test]
    fn isolated_node_keeps_tx_local() {
        let cfg = SimConfig { n_nodes: 3, topology: Topology::None, dandelion: DandelionConfig { enabled: true, coin_p: 1.0, max_stem: 5 }, ..base() };
        let mut sim = Simulator::new(cfg).unwrap();
        sim.schedule(Injection { at: 0, action: SimAction::SubmitTx { node: Addr(2), tx: None } });
        let rep = sim.run().unwrap();
        assert_eq!(rep.packets.sent, 0);
        assert_eq!(sim.node(Addr(2)).unwrap().tp.len(), 1);
        assert_eq!(sim.node(Addr(1)).unwrap().tp.len(), 0);
    }

    #[test]
    fn rigged_coins() {
        let never = SimConfig { dandelion: DandelionConfig { enabled: true, coin_p: 0.0, max_stem: 3 }, ..base() };
        let e = stem_experiment(&never, 20).unwrap();
        assert_eq!(untraceability_probe(&e.records), 0.0);
        assert_eq!(e.histogram, BTreeMap::from([(0, 20)]));

        let ring = SimConfig { topology: Topology::Ring, dandelion: DandelionConfig { enabled: true, coin_p: 1.0, max_stem: 3 }, ..base() };
        let e = stem_experiment(&ring, 20).unwrap();
        assert_eq!(e.histogram, BTreeMap::from([(3, 20)]));
    }

    #[test]
    fn dandelion_disabled_probe_is_zero() {
        let e = stem_experiment(&base(), 10).unwrap();
        assert_eq!(e.untraceability, 0.0);
    }

    #[test]
    fn beam_dummy_adds_one_zero_output() {
        let cfg = SimConfig {
            dandelion: DandelionConfig { enabled: true, ..Default::default() },
            beam_dummy: BeamDummyConfig { enabled: true, incubation_min: 2, incubation_max: 4 },
            ..base()
        };
        let e = stem_experiment(&cfg, 10).unwrap();
        let g = tiny_group();
        for (rec, tx) in e.records.iter().zip(&e.txs) {
            let d = rec.dummy.as_ref().unwrap();
            assert_eq!(d.opening.v, 0);
            assert!((2..=4).contains(&d.incubation));
            assert_eq!(tx.outputs.len(), 3);
            assert_eq!(tx.outputs[0], d.commitment);
            assert_eq!(validate_aggregate(&g, tx), Ok(()));
        }
    }

    #[test]
    fn pmf_and_expectation() {
        let pmf = stem_length_pmf(0.5, 3);
        assert_eq!(pmf, vec![0.5, 0.25, 0.125, 0.125]);
        // two nodes: every hop flips between origin and the other node
        let e = expected_untraceability(2, 0.5, 3);
        assert!((e - (0.25 + 0.125)).abs() < 1e-12);
    }

    #[test]
    fn chi_square_accepts_exact_histogram() {
        let hist: BTreeMap<u32, u64> = [(0, 1000), (1, 500), (2, 250), (3, 125), (4, 62), (5, 31), (6, 16), (7, 8), (8, 4), (9, 2), (10, 2)].into();
        let r = stem_chi_square(&hist, 0.5, 32);
        assert!(r.p_value > 0.5, "{r:?}");
        let skewed: BTreeMap<u32, u64> = [(0, 1500), (1, 300), (2, 200)].into();
        assert!(stem_chi_square(&skewed, 0.5, 32).p_value < 0.01);
    }

    #[test]
    fn event_guard_and_bad_config() {
        let cfg = SimConfig { max_events: 3, ..base() };
        let scenario = standard_scenario(&cfg, 1, 5, 1);
        assert!(matches!(run(&cfg, &scenario), Err(SimError::EventLimit { limit: 3 })));
        let bad = SimConfig { loss: 1.0, ..base() };
        assert!(matches!(Simulator::new(bad), Err(SimError::InvalidConfig(_))));
    }

    #[test]
    fn loss_is_accounted() {
        let cfg = SimConfig { loss: 0.3, seed: 3, ..base() };
        let rep = run(&cfg, &standard_scenario(&cfg, 3, 20, 2)).unwrap();
        assert!(rep.packets.dropped > 0);
        assert_eq!(rep.packets.sent, rep.packets.delivered + rep.packets.dropped);
    }

    #[test]
    fn scenario_json() {
        let s = r#"[{"at":0,"action":"connect","from":1,"to":2},{"at":3,"action":"mint"}]"#;
        let v: Vec<Injection> = serde_json::from_str(s).unwrap();
        assert_eq!(v[0].action, SimAction::Connect { from: Addr(1), to: Addr(2) });
        assert_eq!(v[1].action, SimAction::Mint { node: None });
    }
}
