//! Aggregate transactions, blocks, CoinJoin, block aggregation and
//! cut-through.
//!
//! Lists keep their order at the API, but every balance equation is a sum
//! and so only depends on the multiset of elements.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::commit::{sum_points, Commitment};
use crate::group::{brute_force_dlog, GroupError, GroupElement, GroupParams, Scalar};
use crate::tx::{committed_point, validate_transaction, BitsVerifier, RangeProofVerifier, Transaction, TxInvalid, TxKernel};

/// `{i, o, tks, tko}`
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct AggregateTransaction {
    pub inputs: Vec<Commitment>,
    pub outputs: Vec<Commitment>,
    pub kernels: Vec<TxKernel>,
    pub tko: Scalar,
}

impl From<Transaction> for AggregateTransaction {
    fn from(t: Transaction) -> Self {
        AggregateTransaction { inputs: t.inputs, outputs: t.outputs, kernels: vec![t.kernel], tko: t.tko }
    }
}

/// `{i, o, tks, ko}`, or the genesis block. Only the aggregate offset is
/// stored; per-transaction offsets are gone once aggregated.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Block {
    pub inputs: Vec<Commitment>,
    pub outputs: Vec<Commitment>,
    pub kernels: Vec<TxKernel>,
    pub ko: Scalar,
    #[serde(default)]
    pub genesis: bool,
}

impl Block {
    /// The genesis block: no content, `ko = 0`, valid by assumption.
    pub fn genesis(params: &GroupParams) -> Block {
        Block { genesis: true, ..Block::empty(params) }
    }

    /// An empty, non-genesis block to aggregate transactions into.
    pub fn empty(params: &GroupParams) -> Block {
        Block { inputs: Vec::new(), outputs: Vec::new(), kernels: Vec::new(), ko: params.zero(), genesis: false }
    }

    pub fn from_aggregate(tx: AggregateTransaction) -> Block {
        Block { inputs: tx.inputs, outputs: tx.outputs, kernels: tx.kernels, ko: tx.tko, genesis: false }
    }

    fn is_pristine_genesis(&self) -> bool {
        self.inputs.is_empty() && self.outputs.is_empty() && self.kernels.is_empty() && self.ko.is_zero()
    }
}

/// Why a block or aggregate transaction is invalid. Clause `i` is balance;
/// clause `ii` covers range proofs and kernel signatures.
#[derive(Debug, Error, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "reason", rename_all = "kebab-case")]
pub enum BlockInvalid {
    #[error("block is not balanced")]
    NotBalanced,
    #[error("range proof {proof} of kernel {kernel} is invalid")]
    BadRangeProof { kernel: usize, proof: usize },
    #[error("output {index} is not covered by any kernel range proof")]
    UncoveredOutput { index: usize },
    #[error("signature of kernel {kernel} does not verify")]
    BadSignature { kernel: usize },
    #[error("genesis block carries content")]
    MalformedGenesis,
}

impl BlockInvalid {
    pub fn clause(&self) -> &'static str {
        match self {
            BlockInvalid::NotBalanced | BlockInvalid::MalformedGenesis => "i",
            _ => "ii",
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum BlockError {
    #[error("transaction operand is invalid: {0}")]
    InvalidTransaction(TxInvalid),
    #[error("aggregate operand is invalid: {0}")]
    InvalidAggregate(BlockInvalid),
    #[error("block operand is invalid: {0}")]
    InvalidBlock(BlockInvalid),
    #[error("the genesis block cannot be extended")]
    GenesisImmutable,
    #[error("block already contains output {0:?}")]
    DuplicateOutput(Commitment),
}

/// `Σo − Σi = off.G + Σke`
fn balanced(params: &GroupParams, inputs: &[Commitment], outputs: &[Commitment], kernels: &[TxKernel], off: &Scalar) -> bool {
    let lhs = sum_points(params, outputs) - sum_points(params, inputs);
    let rhs = params.mul_g(off) + params.sum(kernels.iter().map(|k| &k.ke));
    lhs == rhs
}

fn well_formed(params: &GroupParams, inputs: &[Commitment], outputs: &[Commitment], kernels: &[TxKernel], off: &Scalar) -> bool {
    inputs.iter().chain(outputs).all(|c| params.contains(&c.point))
        && kernels.iter().all(|k| params.contains(&k.ke))
        && params.contains_scalar(off)
}

fn check_contents(
    params: &GroupParams,
    inputs: &[Commitment],
    outputs: &[Commitment],
    kernels: &[TxKernel],
    off: &Scalar,
    verifier: &dyn RangeProofVerifier,
) -> Result<(), BlockInvalid> {
    if !well_formed(params, inputs, outputs, kernels, off) || !balanced(params, inputs, outputs, kernels, off) {
        return Err(BlockInvalid::NotBalanced);
    }
    // Range proofs are self-describing: each names the point it covers, so
    // they stay checkable after cut-through removes their outputs.
    let mut covered: BTreeMap<GroupElement, usize> = BTreeMap::new();
    for (k, kernel) in kernels.iter().enumerate() {
        for (j, rp) in kernel.rp.iter().enumerate() {
            let point = committed_point(params, rp).ok_or(BlockInvalid::BadRangeProof { kernel: k, proof: j })?;
            let probe = Commitment { mode: crate::commit::CommitMode::Plain, point };
            if !verifier.verify(params, &probe, rp) {
                return Err(BlockInvalid::BadRangeProof { kernel: k, proof: j });
            }
            *covered.entry(point).or_default() += 1;
        }
    }
    for (index, out) in outputs.iter().enumerate() {
        match covered.get_mut(&out.point) {
            Some(n) if *n > 0 => *n -= 1,
            _ => return Err(BlockInvalid::UncoveredOutput { index }),
        }
    }
    for (k, kernel) in kernels.iter().enumerate() {
        if !kernel.signature_valid(params) {
            return Err(BlockInvalid::BadSignature { kernel: k });
        }
    }
    Ok(())
}

pub fn validate_aggregate(params: &GroupParams, tx: &AggregateTransaction) -> Result<(), BlockInvalid> {
    validate_aggregate_with(params, tx, &BitsVerifier)
}

pub fn validate_aggregate_with(
    params: &GroupParams,
    tx: &AggregateTransaction,
    verifier: &dyn RangeProofVerifier,
) -> Result<(), BlockInvalid> {
    check_contents(params, &tx.inputs, &tx.outputs, &tx.kernels, &tx.tko, verifier)
}

pub fn is_balanced_aggregate(params: &GroupParams, tx: &AggregateTransaction) -> bool {
    balanced(params, &tx.inputs, &tx.outputs, &tx.kernels, &tx.tko)
}

/// `Σo − Σi = ko.G + Σke`
pub fn is_balanced_block(params: &GroupParams, b: &Block) -> bool {
    balanced(params, &b.inputs, &b.outputs, &b.kernels, &b.ko)
}

/// Genesis is valid; any other block must balance and carry valid range
/// proofs and kernel signatures.
pub fn validate_block(params: &GroupParams, b: &Block) -> Result<(), BlockInvalid> {
    validate_block_with(params, b, &BitsVerifier)
}

pub fn validate_block_with(params: &GroupParams, b: &Block, verifier: &dyn RangeProofVerifier) -> Result<(), BlockInvalid> {
    if b.genesis {
        return if b.is_pristine_genesis() { Ok(()) } else { Err(BlockInvalid::MalformedGenesis) };
    }
    check_contents(params, &b.inputs, &b.outputs, &b.kernels, &b.ko, verifier)
}

fn concat<T: Clone>(a: &[T], b: &[T]) -> Vec<T> {
    a.iter().chain(b).cloned().collect()
}

/// CoinJoin: `{i0 ‖ i, o0 ‖ o, tk0 ‖ tk, tko0 + tko}`.
pub fn coinjoin(params: &GroupParams, t0: &Transaction, tx: &AggregateTransaction) -> Result<AggregateTransaction, BlockError> {
    validate_transaction(params, t0).map_err(BlockError::InvalidTransaction)?;
    validate_aggregate(params, tx).map_err(BlockError::InvalidAggregate)?;
    Ok(join_unchecked(&t0.clone().into(), tx))
}

/// Joins two aggregates without validating them.
pub fn join_unchecked(a: &AggregateTransaction, b: &AggregateTransaction) -> AggregateTransaction {
    AggregateTransaction {
        inputs: concat(&a.inputs, &b.inputs),
        outputs: concat(&a.outputs, &b.outputs),
        kernels: concat(&a.kernels, &b.kernels),
        tko: a.tko + b.tko,
    }
}

/// Block aggregation: `{i0 ‖ i, o0 ‖ o, tk0 ‖ tks, tko0 + ko}`.
pub fn block_aggregate(params: &GroupParams, t0: &Transaction, b: &Block) -> Result<Block, BlockError> {
    validate_transaction(params, t0).map_err(BlockError::InvalidTransaction)?;
    aggregate_checked(params, &t0.clone().into(), b)
}

/// Block aggregation of an already-joined aggregate transaction.
pub fn block_aggregate_tx(params: &GroupParams, tx: &AggregateTransaction, b: &Block) -> Result<Block, BlockError> {
    validate_aggregate(params, tx).map_err(BlockError::InvalidAggregate)?;
    aggregate_checked(params, tx, b)
}

fn aggregate_checked(params: &GroupParams, tx: &AggregateTransaction, b: &Block) -> Result<Block, BlockError> {
    if b.genesis {
        return Err(BlockError::GenesisImmutable);
    }
    validate_block(params, b).map_err(BlockError::InvalidBlock)?;
    if let Some(dup) = tx.outputs.iter().find(|o| b.outputs.contains(o)) {
        return Err(BlockError::DuplicateOutput(*dup));
    }
    Ok(Block {
        inputs: concat(&tx.inputs, &b.inputs),
        outputs: concat(&tx.outputs, &b.outputs),
        kernels: concat(&tx.kernels, &b.kernels),
        ko: tx.tko + b.ko,
        genesis: false,
    })
}

/// Removes commitments present in both inputs and outputs, one-for-one.
/// Kernels and `ko` are untouched.
pub fn cut_through(b: &Block) -> Block {
    let mut in_counts: BTreeMap<&Commitment, usize> = BTreeMap::new();
    for c in &b.inputs {
        *in_counts.entry(c).or_default() += 1;
    }
    let mut cancelled: BTreeMap<Commitment, usize> = BTreeMap::new();
    let mut outputs = Vec::with_capacity(b.outputs.len());
    for o in &b.outputs {
        match in_counts.get_mut(o) {
            Some(n) if *n > 0 => {
                *n -= 1;
                *cancelled.entry(*o).or_default() += 1;
            }
            _ => outputs.push(*o),
        }
    }
    let mut inputs = Vec::with_capacity(b.inputs.len());
    for i in &b.inputs {
        match cancelled.get_mut(i) {
            Some(n) if *n > 0 => *n -= 1,
            _ => inputs.push(*i),
        }
    }
    Block { inputs, outputs, kernels: b.kernels.clone(), ko: b.ko, genesis: b.genesis }
}

/// One way of carving a balanced transaction out of a block.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LinkCandidate {
    pub inputs: Vec<usize>,
    pub outputs: Vec<usize>,
    pub kernel: usize,
    /// The offset that would make the carved transaction balance.
    pub offset: Scalar,
}

pub const LINKER_MAX_IO: usize = 16;

/// Exhaustive linker on the tiny backend: for every (input subset, output
/// subset, kernel) triple, solves `Σo' − Σi' = ke + tko'.G` for `tko'`.
/// Since `G` generates the whole group, every triple admits some offset, so
/// the candidate set reveals nothing about the real partition.
pub fn linker_candidates(params: &GroupParams, b: &Block) -> Result<Vec<LinkCandidate>, GroupError> {
    params.tiny_order().ok_or(GroupError::DlogOnCurve)?;
    let (ni, no) = (b.inputs.len(), b.outputs.len());
    assert!(ni + no <= LINKER_MAX_IO, "linker is exponential; block too large");
    let subset_sum = |items: &[Commitment], mask: usize| -> (Vec<usize>, GroupElement) {
        let idx: Vec<usize> = (0..items.len()).filter(|k| mask >> k & 1 == 1).collect();
        let sum = params.sum(idx.iter().map(|&k| &items[k].point));
        (idx, sum)
    };
    let mut out = Vec::new();
    for imask in 0..1usize << ni {
        let (inputs, sum_i) = subset_sum(&b.inputs, imask);
        for omask in 0..1usize << no {
            let (outputs, sum_o) = subset_sum(&b.outputs, omask);
            for (kernel, k) in b.kernels.iter().enumerate() {
                let target = sum_o - sum_i - k.ke;
                match brute_force_dlog(params, &target, &params.g) {
                    Ok(offset) => out.push(LinkCandidate { inputs: inputs.clone(), outputs: outputs.clone(), kernel, offset }),
                    Err(GroupError::NoSolution) => {}
                    Err(e) => return Err(e),
                }
            }
        }
    }
    Ok(out)
}
