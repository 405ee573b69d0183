//! Range proofs over Pedersen commitments.
//!
//! The `bits` kind commits to each bit of the value separately and proves
//! with a two-branch OR Schnorr proof that each bit commitment opens to 0
//! or 1. The weighted sum `Σ 2^i.C_i` re-derives the output commitment, so
//! a proof is self-contained: the commitment it covers can be read back from
//! it. The `stub` kind is an opaque token that only a [`StubSession`]
//! accepts.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::codec::{hex_bytes, Reader, Writer};
use crate::commit::{Commitment, Opening};
use crate::group::{GroupElement, GroupParams, Scalar};

pub const MAX_RANGE_BITS: u32 = 63;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RangeProofKind {
    Stub,
    Bits,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct RangeProof {
    pub kind: RangeProofKind,
    #[serde(with = "hex_bytes")]
    pub payload: Vec<u8>,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum RangeProofError {
    #[error("value {value} does not fit in {bits} bits")]
    OutOfRange { value: u64, bits: u32 },
    #[error("bit width must be between 1 and {MAX_RANGE_BITS}, got {0}")]
    BadBitWidth(u32),
    #[error("stub proofs are minted by a StubSession")]
    StubNeedsSession,
}

/// Decides whether a range proof is acceptable for a commitment.
pub trait RangeProofVerifier {
    fn verify(&self, params: &GroupParams, c: &Commitment, rp: &RangeProof) -> bool;
}

/// Accepts only `bits` proofs.
#[derive(Debug, Clone, Copy, Default)]
pub struct BitsVerifier;

impl RangeProofVerifier for BitsVerifier {
    fn verify(&self, params: &GroupParams, c: &Commitment, rp: &RangeProof) -> bool {
        verify_range_proof(params, c, rp)
    }
}

struct BitProof {
    commitment: GroupElement,
    e0: Scalar,
    e1: Scalar,
    s0: Scalar,
    s1: Scalar,
}

fn bit_challenge(
    params: &GroupParams,
    target: &GroupElement,
    index: usize,
    bit_commitment: &GroupElement,
    a0: &GroupElement,
    a1: &GroupElement,
) -> Scalar {
    let mut w = Writer::new().tag(b"mwk/rangeproof/bit");
    w.put_bytes(&target.encode());
    w.put_u32(index as u32);
    w.put_bytes(&bit_commitment.encode());
    w.put_bytes(&a0.encode());
    w.put_bytes(&a1.encode());
    params.hash_to_scalar(&w.into_bytes())
}

fn nonzero_scalar<R: RngCore + ?Sized>(params: &GroupParams, rng: &mut R) -> Scalar {
    loop {
        let k = params.random_scalar(rng);
        if !k.is_zero() {
            return k;
        }
    }
}

/// Builds a range proof for `o`, deriving proof randomness from the opening
/// so identical inputs give identical proofs.
pub fn make_range_proof(
    params: &GroupParams,
    o: &Opening,
    bits: u32,
    kind: RangeProofKind,
) -> Result<RangeProof, RangeProofError> {
    let mut seed = Sha256::new();
    seed.update(b"mwk/rangeproof/seed");
    seed.update(o.r.encode());
    seed.update(o.v.to_be_bytes());
    seed.update(bits.to_be_bytes());
    let mut rng = ChaCha20Rng::from_seed(seed.finalize().into());
    make_range_proof_with_rng(params, o, bits, kind, &mut rng)
}

pub fn make_range_proof_with_rng<R: RngCore + ?Sized>(
    params: &GroupParams,
    o: &Opening,
    bits: u32,
    kind: RangeProofKind,
    rng: &mut R,
) -> Result<RangeProof, RangeProofError> {
    if bits == 0 || bits > MAX_RANGE_BITS {
        return Err(RangeProofError::BadBitWidth(bits));
    }
    if o.v >> bits != 0 {
        return Err(RangeProofError::OutOfRange { value: o.v, bits });
    }
    if kind == RangeProofKind::Stub {
        return Err(RangeProofError::StubNeedsSession);
    }

    let target = params.mul_g(&o.r) + params.scalar(o.v) * params.h;

    // Bit blindings with Σ 2^i r_i = r.
    let mut blindings: Vec<Scalar> = (0..bits).map(|_| params.random_scalar(rng)).collect();
    let rest = (1..bits as usize).fold(params.zero(), |acc, i| acc + params.scalar(1 << i) * blindings[i]);
    blindings[0] = o.r - rest;

    let mut w = Writer::new();
    w.put_u8(bits as u8);
    for (i, r_i) in blindings.iter().enumerate() {
        let bit = (o.v >> i) & 1;
        let c_i = params.mul_g(r_i) + params.scalar(bit) * params.h;
        let ys = [c_i, c_i - params.h];
        let real = bit as usize;
        let fake = 1 - real;

        let k = nonzero_scalar(params, rng);
        let e_fake = params.random_scalar(rng);
        let s_fake = params.random_scalar(rng);
        let mut a = [params.identity(); 2];
        a[real] = params.mul_g(&k);
        a[fake] = params.mul_g(&s_fake) - e_fake * ys[fake];

        let e = bit_challenge(params, &target, i, &c_i, &a[0], &a[1]);
        let e_real = e - e_fake;
        let s_real = k + e_real * *r_i;

        let (e0, e1, s0, s1) = if real == 0 {
            (e_real, e_fake, s_real, s_fake)
        } else {
            (e_fake, e_real, s_fake, s_real)
        };
        let proof = BitProof { commitment: c_i, e0, e1, s0, s1 };
        w.put_bytes(&proof.commitment.encode());
        for s in [proof.e0, proof.e1, proof.s0, proof.s1] {
            w.put_bytes(&s.encode());
        }
    }
    Ok(RangeProof { kind: RangeProofKind::Bits, payload: w.into_bytes() })
}

fn parse_bits(payload: &[u8]) -> Option<Vec<BitProof>> {
    let mut r = Reader::new(payload);
    let bits = r.u8()? as u32;
    if bits == 0 || bits > MAX_RANGE_BITS {
        return None;
    }
    let mut out = Vec::with_capacity(bits as usize);
    for _ in 0..bits {
        let commitment = GroupElement::decode(r.bytes()?).ok()?;
        let mut s = [None; 4];
        for slot in s.iter_mut() {
            *slot = Some(Scalar::decode(r.bytes()?).ok()?);
        }
        let [e0, e1, s0, s1] = s.map(Option::unwrap);
        out.push(BitProof { commitment, e0, e1, s0, s1 });
    }
    r.is_empty().then_some(out)
}

fn same_backend(params: &GroupParams, proofs: &[BitProof]) -> bool {
    proofs.iter().all(|p| {
        params.contains(&p.commitment) && [p.e0, p.e1, p.s0, p.s1].iter().all(|s| params.contains_scalar(s))
    })
}

/// The commitment point a proof speaks about, when it is well formed.
pub fn committed_point(params: &GroupParams, rp: &RangeProof) -> Option<GroupElement> {
    match rp.kind {
        RangeProofKind::Bits => {
            let proofs = parse_bits(&rp.payload)?;
            if !same_backend(params, &proofs) {
                return None;
            }
            Some(proofs.iter().enumerate().fold(params.identity(), |acc, (i, p)| {
                acc + params.scalar(1u64 << i) * p.commitment
            }))
        }
        RangeProofKind::Stub => {
            let mut r = Reader::new(&rp.payload);
            let point = GroupElement::decode(r.bytes()?).ok()?;
            params.contains(&point).then_some(point)
        }
    }
}

/// Checks every bit proof and that the weighted bit commitments sum to `c`.
/// Stub proofs are rejected here; see [`StubSession`].
pub fn verify_range_proof(params: &GroupParams, c: &Commitment, rp: &RangeProof) -> bool {
    rp.kind == RangeProofKind::Bits && verify_bits_standalone(params, rp) && committed_point(params, rp) == Some(c.point)
}

/// Verifies the bit proofs of a `bits` proof without a target commitment.
pub fn verify_bits_standalone(params: &GroupParams, rp: &RangeProof) -> bool {
    let Some(proofs) = parse_bits(&rp.payload) else {
        return false;
    };
    if rp.kind != RangeProofKind::Bits || !same_backend(params, &proofs) {
        return false;
    }
    let target = proofs
        .iter()
        .enumerate()
        .fold(params.identity(), |acc, (i, p)| acc + params.scalar(1u64 << i) * p.commitment);
    proofs.iter().enumerate().all(|(i, p)| {
        let y0 = p.commitment;
        let y1 = p.commitment - params.h;
        let a0 = params.mul_g(&p.s0) - p.e0 * y0;
        let a1 = params.mul_g(&p.s1) - p.e1 * y1;
        p.e0 + p.e1 == bit_challenge(params, &target, i, &p.commitment, &a0, &a1)
    })
}

/// A test-oracle session that mints and accepts opaque stub proofs. Proofs
/// from one session are rejected by every other session.
#[derive(Debug, Clone)]
pub struct StubSession {
    key: [u8; 32],
}

impl StubSession {
    pub fn new(seed: u64) -> Self {
        let mut h = Sha256::new();
        h.update(b"mwk/stub-session");
        h.update(seed.to_be_bytes());
        StubSession { key: h.finalize().into() }
    }

    fn tag(&self, point: &GroupElement) -> [u8; 32] {
        let mut h = Sha256::new();
        h.update(self.key);
        h.update(point.encode());
        h.finalize().into()
    }

    pub fn make(&self, c: &Commitment) -> RangeProof {
        let mut w = Writer::new();
        w.put_bytes(&c.point.encode());
        w.put_bytes(&self.tag(&c.point));
        RangeProof { kind: RangeProofKind::Stub, payload: w.into_bytes() }
    }

    fn accepts_stub(&self, c: &Commitment, rp: &RangeProof) -> bool {
        let mut r = Reader::new(&rp.payload);
        let (Some(point), Some(tag)) = (r.bytes(), r.bytes()) else {
            return false;
        };
        r.is_empty() && point == c.point.encode().as_slice() && tag == self.tag(&c.point)
    }
}

impl RangeProofVerifier for StubSession {
    fn verify(&self, params: &GroupParams, c: &Commitment, rp: &RangeProof) -> bool {
        match rp.kind {
            RangeProofKind::Stub => self.accepts_stub(c, rp),
            RangeProofKind::Bits => verify_range_proof(params, c, rp),
        }
    }
}
