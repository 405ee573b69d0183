//! Chains, UTXO tracking, the mempool and the error-coded execution
//! semantics of a single node.
//!
//! A [`ChainState`] is the node-local state `(chain, mempool, utxo)`.
//! [`ChainState::step`] applies one [`Action`] and returns a response; an
//! error response always leaves the state untouched.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::block::{block_aggregate_tx, cut_through, validate_aggregate, validate_block, AggregateTransaction, Block, BlockInvalid};
use crate::commit::{commit, Commitment, Opening};
use crate::group::GroupParams;
use crate::tx::{TxBuilder, TxError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ErrorCode {
    NotBalanced,
    BadRangeProof,
    BadSignature,
    DoubleSpend,
    UnknownInput,
    IncubationViolation,
    BadGenesis,
}

impl std::fmt::Display for ErrorCode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = serde_json::to_value(self).expect("unit enum serializes");
        f.write_str(s.as_str().unwrap_or_default())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Response {
    Ok,
    Error(ErrorCode),
}

impl Response {
    pub fn is_ok(&self) -> bool {
        matches!(self, Response::Ok)
    }
}

impl From<BlockInvalid> for ErrorCode {
    fn from(e: BlockInvalid) -> Self {
        match e {
            BlockInvalid::NotBalanced => ErrorCode::NotBalanced,
            BlockInvalid::BadRangeProof { .. } | BlockInvalid::UncoveredOutput { .. } => ErrorCode::BadRangeProof,
            BlockInvalid::BadSignature { .. } => ErrorCode::BadSignature,
            BlockInvalid::MalformedGenesis => ErrorCode::BadGenesis,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChainConfig {
    /// Enforce per-output incubation periods.
    #[serde(default)]
    pub incubation: bool,
    /// Value of the public mint commitment `value.H` that grant transactions
    /// may spend. `None` disables grants.
    #[serde(default)]
    pub grant_value: Option<u64>,
}

/// The public commitment `0.G + v.H` that grant transactions spend.
pub fn mint_commitment(params: &GroupParams, value: u64) -> Commitment {
    commit(params, &Opening::new(value, params.zero()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct UtxoMeta {
    pub created_height: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub incubation: Option<u64>,
}

/// Unspent outputs. Identical commitments may coexist, so each entry keeps
/// one metadata record per copy, oldest first.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct UtxoSet {
    #[serde(with = "utxo_entries")]
    entries: BTreeMap<Commitment, Vec<UtxoMeta>>,
}

mod utxo_entries {
    use super::*;
    use serde::{Deserializer, Serializer};

    #[derive(Serialize, Deserialize)]
    struct Entry {
        commitment: Commitment,
        copies: Vec<UtxoMeta>,
    }

    pub fn serialize<S: Serializer>(m: &BTreeMap<Commitment, Vec<UtxoMeta>>, s: S) -> Result<S::Ok, S::Error> {
        let v: Vec<Entry> = m.iter().map(|(c, m)| Entry { commitment: *c, copies: m.clone() }).collect();
        v.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<BTreeMap<Commitment, Vec<UtxoMeta>>, D::Error> {
        let v = Vec::<Entry>::deserialize(d)?;
        Ok(v.into_iter().map(|e| (e.commitment, e.copies)).collect())
    }
}

impl UtxoSet {
    pub fn len(&self) -> usize {
        self.entries.values().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn count(&self, c: &Commitment) -> usize {
        self.entries.get(c).map_or(0, Vec::len)
    }

    pub fn contains(&self, c: &Commitment) -> bool {
        self.count(c) > 0
    }

    pub fn meta(&self, c: &Commitment) -> &[UtxoMeta] {
        self.entries.get(c).map_or(&[], Vec::as_slice)
    }

    pub fn commitments(&self) -> impl Iterator<Item = &Commitment> {
        self.entries.iter().flat_map(|(c, m)| std::iter::repeat_n(c, m.len()))
    }

    fn insert(&mut self, c: Commitment, meta: UtxoMeta) {
        let copies = self.entries.entry(c).or_default();
        copies.push(meta);
        copies.sort();
    }

    fn remove_oldest(&mut self, c: &Commitment) -> Option<UtxoMeta> {
        let copies = self.entries.get_mut(c)?;
        let meta = copies.remove(0);
        if copies.is_empty() {
            self.entries.remove(c);
        }
        Some(meta)
    }
}

/// A non-empty list of blocks starting with genesis.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Chain {
    blocks: Vec<Block>,
}

#[derive(Debug, Error)]
pub enum ChainFileError {
    #[error("line {line}: {source}")]
    Json { line: usize, source: serde_json::Error },
    #[error("chain file holds no blocks")]
    Empty,
}

impl Chain {
    pub fn new(params: &GroupParams) -> Chain {
        Chain { blocks: vec![Block::genesis(params)] }
    }

    /// Wraps blocks without checking them; see [`valid_chain`].
    pub fn from_blocks_unchecked(blocks: Vec<Block>) -> Chain {
        Chain { blocks }
    }

    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    /// One JSON-encoded block per line.
    pub fn to_jsonl(&self) -> String {
        self.blocks.iter().map(|b| serde_json::to_string(b).expect("blocks serialize") + "\n").collect()
    }

    pub fn from_jsonl(text: &str) -> Result<Chain, ChainFileError> {
        let blocks = text
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty())
            .map(|(i, l)| serde_json::from_str(l).map_err(|source| ChainFileError::Json { line: i + 1, source }))
            .collect::<Result<Vec<Block>, _>>()?;
        if blocks.is_empty() {
            return Err(ChainFileError::Empty);
        }
        Ok(Chain { blocks })
    }
}

/// Everything derived from a chain: its UTXO set and the commitments it has
/// spent so far.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
struct Ledger {
    utxo: UtxoSet,
    spent: BTreeSet<Commitment>,
}

impl Ledger {
    fn check_block(&self, params: &GroupParams, cfg: &ChainConfig, height: u64, b: &Block) -> Result<(), ErrorCode> {
        validate_block(params, b)?;
        self.check_spends(params, cfg, height, &b.inputs, &BTreeMap::new())?;
        if b.genesis {
            return Err(ErrorCode::BadGenesis);
        }
        Ok(())
    }

    /// Checks that `inputs` can be spent at `height`. `pending` lists extra
    /// spendable outputs (mempool siblings) with their remaining counts.
    fn check_spends(
        &self,
        params: &GroupParams,
        cfg: &ChainConfig,
        height: u64,
        inputs: &[Commitment],
        pending: &BTreeMap<Commitment, usize>,
    ) -> Result<(), ErrorCode> {
        let mint = cfg.grant_value.map(|v| mint_commitment(params, v));
        let mut wanted: BTreeMap<&Commitment, usize> = BTreeMap::new();
        for c in inputs.iter().filter(|c| Some(**c) != mint) {
            *wanted.entry(c).or_default() += 1;
        }
        let mut unknown = false;
        for (c, n) in &wanted {
            let available = self.utxo.count(c) + pending.get(*c).copied().unwrap_or(0);
            if *n > available {
                if available > 0 || self.spent.contains(*c) {
                    return Err(ErrorCode::DoubleSpend);
                }
                unknown = true;
            }
        }
        if unknown {
            return Err(ErrorCode::UnknownInput);
        }
        if cfg.incubation {
            for (c, n) in &wanted {
                let metas = self.utxo.meta(c);
                for k in 0..*n {
                    let (created, incubation) = match metas.get(k) {
                        Some(m) => (m.created_height, m.incubation.unwrap_or(0)),
                        // unconfirmed siblings are checked by the mempool
                        None => (height, 0),
                    };
                    if height < created + incubation {
                        return Err(ErrorCode::IncubationViolation);
                    }
                }
            }
        }
        Ok(())
    }

    fn apply_block(&mut self, params: &GroupParams, cfg: &ChainConfig, height: u64, b: &Block) {
        let mint = cfg.grant_value.map(|v| mint_commitment(params, v));
        for c in b.inputs.iter().filter(|c| Some(**c) != mint) {
            if self.utxo.remove_oldest(c).is_some() {
                self.spent.insert(*c);
            }
        }
        for o in &b.outputs {
            let incubation = b.kernels.iter().find_map(|k| k.incubation_for(params, &o.point));
            self.utxo.insert(*o, UtxoMeta { created_height: height, incubation });
        }
    }

    fn rebuild(params: &GroupParams, cfg: &ChainConfig, c: &Chain) -> Ledger {
        let mut l = Ledger::default();
        for (h, b) in c.blocks.iter().enumerate() {
            l.apply_block(params, cfg, h as u64, b);
        }
        l
    }
}

/// Is it correct to append `b` to `c`?
pub fn validate_append(params: &GroupParams, cfg: &ChainConfig, c: &Chain, b: &Block) -> Response {
    let ledger = Ledger::rebuild(params, cfg, c);
    respond(ledger.check_block(params, cfg, c.len() as u64, b))
}

fn respond(r: Result<(), ErrorCode>) -> Response {
    match r {
        Ok(()) => Response::Ok,
        Err(ec) => Response::Error(ec),
    }
}

/// Genesis first, then every block validates against its prefix.
pub fn valid_chain(params: &GroupParams, cfg: &ChainConfig, c: &Chain) -> bool {
    first_invalid_block(params, cfg, c).is_none()
}

/// Index and error of the first block that fails validation.
pub fn first_invalid_block(params: &GroupParams, cfg: &ChainConfig, c: &Chain) -> Option<(usize, ErrorCode)> {
    let Some(first) = c.blocks.first() else {
        return Some((0, ErrorCode::BadGenesis));
    };
    if !first.genesis || validate_block(params, first).is_err() {
        return Some((0, ErrorCode::BadGenesis));
    }
    let mut ledger = Ledger::default();
    for (h, b) in c.blocks.iter().enumerate().skip(1) {
        if let Err(ec) = ledger.check_block(params, cfg, h as u64, b) {
            return Some((h, ec));
        }
        ledger.apply_block(params, cfg, h as u64, b);
    }
    None
}

/// Folds over the chain adding outputs and removing inputs.
pub fn rebuild_utxo(params: &GroupParams, cfg: &ChainConfig, c: &Chain) -> UtxoSet {
    Ledger::rebuild(params, cfg, c).utxo
}

/// Builds a grant transaction spending the public mint commitment into
/// `outputs`, whose values must add up to the configured grant value.
pub fn grant_transaction(
    params: &GroupParams,
    cfg: &ChainConfig,
    outputs: &[Opening],
    range_bits: u32,
) -> Result<AggregateTransaction, TxError> {
    let value = cfg.grant_value.unwrap_or(0);
    let b = TxBuilder::new(params).input(Opening::new(value, params.zero())).range_bits(range_bits);
    let t = outputs.iter().fold(b, |b, o| b.output(*o)).build()?;
    Ok(t.into())
}

/// A local transaction on the node state.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "action")]
pub enum Action {
    /// Admit an aggregate transaction into the mempool.
    SubmitTx { tx: AggregateTransaction },
    /// Aggregate the mempool into a block, cut through it and append it.
    MineBlock,
    /// Append a block received from elsewhere.
    AppendBlock { block: Block },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChainState {
    params: GroupParams,
    config: ChainConfig,
    chain: Chain,
    mempool: Vec<AggregateTransaction>,
    ledger: Ledger,
}

impl ChainState {
    pub fn new(params: GroupParams, config: ChainConfig) -> ChainState {
        let chain = Chain::new(&params);
        let ledger = Ledger::rebuild(&params, &config, &chain);
        ChainState { params, config, chain, mempool: Vec::new(), ledger }
    }

    /// Rebuilds derived state for an existing chain; `None` if it is invalid.
    pub fn from_chain(params: GroupParams, config: ChainConfig, chain: Chain) -> Option<ChainState> {
        if !valid_chain(&params, &config, &chain) {
            return None;
        }
        let ledger = Ledger::rebuild(&params, &config, &chain);
        Some(ChainState { params, config, chain, mempool: Vec::new(), ledger })
    }

    pub fn params(&self) -> &GroupParams {
        &self.params
    }

    pub fn config(&self) -> &ChainConfig {
        &self.config
    }

    pub fn chain(&self) -> &Chain {
        &self.chain
    }

    pub fn mempool(&self) -> &[AggregateTransaction] {
        &self.mempool
    }

    pub fn utxo(&self) -> &UtxoSet {
        &self.ledger.utxo
    }

    /// Height the next block will have.
    pub fn next_height(&self) -> u64 {
        self.chain.len() as u64
    }

    /// Canonical serialization, used to compare states byte for byte.
    pub fn snapshot(&self) -> String {
        serde_json::to_string(self).expect("state serializes")
    }

    /// Functional form: the successor state and the response.
    pub fn step(&self, action: &Action) -> (ChainState, Response) {
        let mut next = self.clone();
        let r = next.apply(action);
        if r.is_ok() {
            (next, r)
        } else {
            (self.clone(), r)
        }
    }

    /// Applies `action` in place. On error the state is left as it was.
    pub fn apply(&mut self, action: &Action) -> Response {
        let result = match action {
            Action::SubmitTx { tx } => self.submit(tx),
            Action::MineBlock => self.mine().map(|_| ()),
            Action::AppendBlock { block } => self.append(block),
        };
        respond(result)
    }

    /// Builds and submits a grant transaction paying into `outputs`.
    pub fn grant(&mut self, outputs: &[Opening], range_bits: u32) -> Result<Response, TxError> {
        let tx = grant_transaction(&self.params, &self.config, outputs, range_bits)?;
        Ok(self.apply(&Action::SubmitTx { tx }))
    }

    fn mempool_outputs(&self) -> BTreeMap<Commitment, usize> {
        let mut avail: BTreeMap<Commitment, usize> = BTreeMap::new();
        for t in &self.mempool {
            for o in &t.outputs {
                *avail.entry(*o).or_default() += 1;
            }
        }
        for t in &self.mempool {
            for i in &t.inputs {
                if let Some(n) = avail.get_mut(i) {
                    if *n > 0 {
                        *n -= 1;
                    }
                }
            }
        }
        avail
    }

    fn check_tx(&self, tx: &AggregateTransaction) -> Result<(), ErrorCode> {
        validate_aggregate(&self.params, tx)?;
        // Inputs already claimed by mempool members are not available again.
        let mut claimed: BTreeMap<Commitment, usize> = BTreeMap::new();
        for t in &self.mempool {
            for i in &t.inputs {
                *claimed.entry(*i).or_default() += 1;
            }
        }
        let siblings = self.mempool_outputs();
        let mint = self.config.grant_value.map(|v| mint_commitment(&self.params, v));
        let mut wanted: BTreeMap<Commitment, usize> = BTreeMap::new();
        for i in tx.inputs.iter().filter(|c| Some(**c) != mint) {
            *wanted.entry(*i).or_default() += 1;
        }
        for (c, n) in &wanted {
            let in_chain = self.ledger.utxo.count(c);
            let in_pool = siblings.get(c).copied().unwrap_or(0);
            let already = claimed.get(c).copied().unwrap_or(0).saturating_sub(in_pool);
            if in_chain + in_pool > 0 && n + already > in_chain + in_pool {
                return Err(ErrorCode::DoubleSpend);
            }
        }
        self.ledger.check_spends(&self.params, &self.config, self.next_height(), &tx.inputs, &siblings)?;
        if self.config.incubation {
            // Unconfirmed outputs with an incubation period cannot be spent
            // in the same block that creates them.
            for (c, _) in wanted.iter().filter(|(c, _)| self.ledger.utxo.count(c) == 0) {
                let incubated = self.mempool.iter().any(|t| {
                    t.outputs.contains(c)
                        && t.kernels.iter().any(|k| k.incubation_for(&self.params, &c.point).unwrap_or(0) > 0)
                });
                if incubated {
                    return Err(ErrorCode::IncubationViolation);
                }
            }
        }
        Ok(())
    }

    fn submit(&mut self, tx: &AggregateTransaction) -> Result<(), ErrorCode> {
        self.check_tx(tx)?;
        self.mempool.push(tx.clone());
        Ok(())
    }

    /// The block the mempool would currently produce.
    pub fn candidate_block(&self) -> Block {
        let block = self.mempool.iter().try_fold(Block::empty(&self.params), |b, tx| {
            block_aggregate_tx(&self.params, tx, &b)
        });
        // Mempool members all validate, so aggregation only fails on a
        // duplicate output; fall back to the longest prefix that works.
        let block = block.unwrap_or_else(|_| {
            let mut b = Block::empty(&self.params);
            for tx in &self.mempool {
                if let Ok(next) = block_aggregate_tx(&self.params, tx, &b) {
                    b = next;
                }
            }
            b
        });
        cut_through(&block)
    }

    fn mine(&mut self) -> Result<Block, ErrorCode> {
        let block = self.candidate_block();
        self.append(&block)?;
        Ok(block)
    }

    fn append(&mut self, b: &Block) -> Result<(), ErrorCode> {
        let height = self.next_height();
        self.ledger.check_block(&self.params, &self.config, height, b)?;
        self.ledger.apply_block(&self.params, &self.config, height, b);
        self.chain.blocks.push(b.clone());
        // Re-admit mempool members that are still spendable.
        let pool = std::mem::take(&mut self.mempool);
        for tx in pool {
            let included = b.kernels.iter().any(|k| tx.kernels.contains(k));
            if !included && self.check_tx(&tx).is_ok() {
                self.mempool.push(tx);
            }
        }
        Ok(())
    }

    /// The full state invariant, recomputed from scratch.
    pub fn valid_state(&self) -> bool {
        if !valid_chain(&self.params, &self.config, &self.chain) {
            return false;
        }
        if Ledger::rebuild(&self.params, &self.config, &self.chain) != self.ledger {
            return false;
        }
        let mut replay = ChainState {
            params: self.params.clone(),
            config: self.config,
            chain: self.chain.clone(),
            mempool: Vec::new(),
            ledger: self.ledger.clone(),
        };
        self.mempool.iter().all(|tx| replay.submit(tx).is_ok())
    }
}
