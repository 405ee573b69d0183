//! Transactions: construction, balance, kernel signatures and validity.

mod range_proof;
mod schnorr;

pub use range_proof::{
    committed_point, make_range_proof, make_range_proof_with_rng, verify_bits_standalone, verify_range_proof,
    BitsVerifier, RangeProof, RangeProofError, RangeProofKind, RangeProofVerifier, StubSession, MAX_RANGE_BITS,
};
pub use schnorr::{sign_kernel, sign_kernel_random, verify_kernel, SchnorrSig};

use rand::RngCore;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::commit::{commit_with_mode, effective_opening, sum_points, CommitMode, Commitment, Opening};
use crate::group::{GroupElement, GroupParams, Scalar};

/// `{rp, ke, σ}`. `incubation` optionally carries one minimum-age value per
/// range proof; when present it is bound into the signed message.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct TxKernel {
    pub rp: Vec<RangeProof>,
    pub ke: GroupElement,
    pub sigma: SchnorrSig,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub incubation: Vec<u64>,
}

impl TxKernel {
    /// The signed message: empty, unless incubation periods are attached.
    pub fn message(&self) -> Vec<u8> {
        kernel_message(&self.incubation)
    }

    pub fn signature_valid(&self, params: &GroupParams) -> bool {
        verify_kernel(params, &self.ke, &self.message(), &self.sigma)
    }

    /// Incubation period attached to the output with point `point`, if any.
    pub fn incubation_for(&self, params: &GroupParams, point: &GroupElement) -> Option<u64> {
        if self.incubation.len() != self.rp.len() {
            return None;
        }
        self.rp
            .iter()
            .zip(&self.incubation)
            .find(|(rp, _)| committed_point(params, rp).as_ref() == Some(point))
            .map(|(_, d)| *d)
    }
}

pub fn kernel_message(incubation: &[u64]) -> Vec<u8> {
    if incubation.is_empty() {
        return Vec::new();
    }
    let mut msg = b"mwk/incubation".to_vec();
    for d in incubation {
        msg.extend_from_slice(&d.to_be_bytes());
    }
    msg
}

/// `{i, o, tk, tko}`
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Transaction {
    pub inputs: Vec<Commitment>,
    pub outputs: Vec<Commitment>,
    pub kernel: TxKernel,
    pub tko: Scalar,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TxError {
    #[error("outputs carry {outputs} but inputs carry {inputs}")]
    ValueImbalance { inputs: u128, outputs: u128 },
    #[error(transparent)]
    Range(#[from] RangeProofError),
    #[error("incubation list has {got} entries for {outputs} outputs")]
    IncubationArity { got: usize, outputs: usize },
}

/// The clause of transaction validity that failed.
#[derive(Debug, Error, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "reason", rename_all = "kebab-case")]
pub enum TxInvalid {
    #[error("range proof for output {index} is invalid or missing")]
    RangeProof { index: usize },
    #[error("transaction is not balanced")]
    NotBalanced,
    #[error("kernel signature does not verify for the excess")]
    BadSignature,
}

impl TxInvalid {
    /// `i`, `ii` or `iii`.
    pub fn clause(&self) -> &'static str {
        match self {
            TxInvalid::RangeProof { .. } => "i",
            TxInvalid::NotBalanced => "ii",
            TxInvalid::BadSignature => "iii",
        }
    }
}

/// `Σo − Σi = ke + tko.G`. Needs no openings.
pub fn is_balanced(params: &GroupParams, t: &Transaction) -> bool {
    let lhs = sum_points(params, &t.outputs) - sum_points(params, &t.inputs);
    lhs == t.kernel.ke + params.mul_g(&t.tko)
}

/// Range proofs, then balance, then the kernel signature.
pub fn validate_transaction(params: &GroupParams, t: &Transaction) -> Result<(), TxInvalid> {
    validate_transaction_with(params, t, &BitsVerifier)
}

pub fn validate_transaction_with(
    params: &GroupParams,
    t: &Transaction,
    verifier: &dyn RangeProofVerifier,
) -> Result<(), TxInvalid> {
    if !well_formed(params, t) {
        return Err(TxInvalid::NotBalanced);
    }
    for (index, out) in t.outputs.iter().enumerate() {
        match t.kernel.rp.get(index) {
            Some(rp) if verifier.verify(params, out, rp) => {}
            _ => return Err(TxInvalid::RangeProof { index }),
        }
    }
    if t.kernel.rp.len() != t.outputs.len() {
        return Err(TxInvalid::RangeProof { index: t.outputs.len() });
    }
    if !is_balanced(params, t) {
        return Err(TxInvalid::NotBalanced);
    }
    if !t.kernel.signature_valid(params) {
        return Err(TxInvalid::BadSignature);
    }
    Ok(())
}

/// All group values belong to `params`; anything else cannot balance.
fn well_formed(params: &GroupParams, t: &Transaction) -> bool {
    t.inputs.iter().chain(&t.outputs).all(|c| params.contains(&c.point))
        && params.contains(&t.kernel.ke)
        && params.contains_scalar(&t.tko)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum NonceMode {
    #[default]
    Deterministic,
    Random,
}

#[derive(Debug, Clone)]
struct Party {
    opening: Opening,
    mode: CommitMode,
}

/// Assembles a balanced, signed transaction. Inputs are the sender's coins;
/// outputs are the recipient's new coins plus any change.
#[derive(Debug, Clone)]
pub struct TxBuilder<'a> {
    params: &'a GroupParams,
    inputs: Vec<Party>,
    outputs: Vec<Party>,
    incubation: Vec<u64>,
    tko: Scalar,
    range_bits: u32,
    nonce: NonceMode,
}

impl<'a> TxBuilder<'a> {
    pub fn new(params: &'a GroupParams) -> Self {
        TxBuilder {
            params,
            inputs: Vec::new(),
            outputs: Vec::new(),
            incubation: Vec::new(),
            tko: params.zero(),
            range_bits: 32,
            nonce: NonceMode::Deterministic,
        }
    }

    pub fn input(mut self, opening: Opening) -> Self {
        self.inputs.push(Party { opening, mode: CommitMode::Plain });
        self
    }

    pub fn input_with_mode(mut self, opening: Opening, mode: CommitMode) -> Self {
        self.inputs.push(Party { opening, mode });
        self
    }

    pub fn output(mut self, opening: Opening) -> Self {
        self.outputs.push(Party { opening, mode: CommitMode::Plain });
        self
    }

    pub fn output_with_mode(mut self, opening: Opening, mode: CommitMode) -> Self {
        self.outputs.push(Party { opening, mode });
        self
    }

    pub fn offset(mut self, tko: Scalar) -> Self {
        self.tko = tko;
        self
    }

    pub fn range_bits(mut self, bits: u32) -> Self {
        self.range_bits = bits;
        self
    }

    /// Per-output minimum spend age, in blocks.
    pub fn incubation(mut self, periods: Vec<u64>) -> Self {
        self.incubation = periods;
        self
    }

    pub fn nonce_mode(mut self, mode: NonceMode) -> Self {
        self.nonce = mode;
        self
    }

    pub fn build(self) -> Result<Transaction, TxError> {
        self.build_inner(None)
    }

    pub fn build_with_rng<R: RngCore>(self, rng: &mut R) -> Result<Transaction, TxError> {
        self.build_inner(Some(rng))
    }

    fn build_inner(self, rng: Option<&mut dyn RngCore>) -> Result<Transaction, TxError> {
        let params = self.params;
        let v_in: u128 = self.inputs.iter().map(|p| p.opening.v as u128).sum();
        let v_out: u128 = self.outputs.iter().map(|p| p.opening.v as u128).sum();
        if v_in != v_out {
            return Err(TxError::ValueImbalance { inputs: v_in, outputs: v_out });
        }
        if !self.incubation.is_empty() && self.incubation.len() != self.outputs.len() {
            return Err(TxError::IncubationArity { got: self.incubation.len(), outputs: self.outputs.len() });
        }

        let inputs: Vec<Commitment> =
            self.inputs.iter().map(|p| commit_with_mode(params, &p.opening, p.mode)).collect();
        let mut outputs = Vec::with_capacity(self.outputs.len());
        let mut rp = Vec::with_capacity(self.outputs.len());
        let mut r_out = params.zero();
        for p in &self.outputs {
            let eff = effective_opening(params, &p.opening, p.mode);
            rp.push(make_range_proof(params, &eff, self.range_bits, RangeProofKind::Bits)?);
            outputs.push(commit_with_mode(params, &p.opening, p.mode));
            r_out += eff.r;
        }
        let r_in = self
            .inputs
            .iter()
            .fold(params.zero(), |acc, p| acc + effective_opening(params, &p.opening, p.mode).r);

        let excess = r_out - r_in - self.tko;
        let ke = params.mul_g(&excess);
        let msg = kernel_message(&self.incubation);
        let sigma = match (self.nonce, rng) {
            (NonceMode::Random, Some(rng)) => sign_kernel_random(params, &excess, &msg, rng),
            _ => sign_kernel(params, &excess, &msg),
        };
        Ok(Transaction {
            inputs,
            outputs,
            kernel: TxKernel { rp, ke, sigma, incubation: self.incubation },
            tko: self.tko,
        })
    }
}

/// Builds a plain-commitment transaction from input and output openings.
pub fn build_transaction(
    params: &GroupParams,
    in_openings: &[Opening],
    out_openings: &[Opening],
    tko: Scalar,
    range_bits: u32,
) -> Result<Transaction, TxError> {
    let b = in_openings.iter().fold(TxBuilder::new(params), |b, o| b.input(*o));
    out_openings.iter().fold(b, |b, o| b.output(*o)).offset(tko).range_bits(range_bits).build()
}
