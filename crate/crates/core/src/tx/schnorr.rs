//! Schnorr signatures over the configured group, used as kernel signatures.

use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::group::{GroupElement, GroupParams, Scalar};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct SchnorrSig {
    #[serde(rename = "R")]
    pub nonce_point: GroupElement,
    pub s: Scalar,
}

/// `e = hash(R ‖ P ‖ msg)`. A zero challenge is re-hashed with a counter so
/// that the verification equation always depends on the public key; this
/// only ever triggers on the tiny backend.
fn challenge(params: &GroupParams, r: &GroupElement, p: &GroupElement, msg: &[u8]) -> Scalar {
    let mut input = r.encode();
    input.extend_from_slice(&p.encode());
    input.extend_from_slice(msg);
    let mut e = params.hash_to_scalar(&input);
    let mut counter = 0u32;
    while e.is_zero() {
        counter += 1;
        let mut retry = input.clone();
        retry.extend_from_slice(&counter.to_be_bytes());
        e = params.hash_to_scalar(&retry);
    }
    e
}

fn deterministic_nonce(params: &GroupParams, secret: &Scalar, msg: &[u8]) -> Scalar {
    let mut counter = 0u32;
    loop {
        let mut input = b"mwk/nonce".to_vec();
        input.extend_from_slice(&secret.encode());
        input.extend_from_slice(msg);
        input.extend_from_slice(&counter.to_be_bytes());
        let k = params.hash_to_scalar(&input);
        if !k.is_zero() {
            return k;
        }
        counter += 1;
    }
}

fn sign_with_nonce(params: &GroupParams, secret: &Scalar, msg: &[u8], k: Scalar) -> SchnorrSig {
    let nonce_point = params.mul_g(&k);
    let public = params.mul_g(secret);
    let e = challenge(params, &nonce_point, &public, msg);
    SchnorrSig { nonce_point, s: k + e * *secret }
}

/// Signs with a nonce derived from `secret ‖ msg`.
pub fn sign_kernel(params: &GroupParams, secret: &Scalar, msg: &[u8]) -> SchnorrSig {
    sign_with_nonce(params, secret, msg, deterministic_nonce(params, secret, msg))
}

/// Signs with a fresh random nonce.
pub fn sign_kernel_random<R: RngCore + ?Sized>(
    params: &GroupParams,
    secret: &Scalar,
    msg: &[u8],
    rng: &mut R,
) -> SchnorrSig {
    let k = loop {
        let k = params.random_scalar(rng);
        if !k.is_zero() {
            break k;
        }
    };
    sign_with_nonce(params, secret, msg, k)
}

/// Checks `s.G = R + e.P`.
pub fn verify_kernel(params: &GroupParams, public: &GroupElement, msg: &[u8], sig: &SchnorrSig) -> bool {
    if !params.contains(&sig.nonce_point) || !params.contains(public) || !params.contains_scalar(&sig.s) {
        return false;
    }
    let e = challenge(params, &sig.nonce_point, public, msg);
    params.mul_g(&sig.s) == sig.nonce_point + e * *public
}
