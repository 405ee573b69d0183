//! Pedersen and switch commitments.

use serde::{Deserialize, Serialize};

use crate::group::{GroupElement, GroupParams, Scalar};

/// The opening `(v, r)` of a commitment. Values are non-negative integers
/// embedded into the scalar field when committed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Opening {
    pub v: u64,
    pub r: Scalar,
}

impl Opening {
    pub fn new(v: u64, r: Scalar) -> Self {
        Opening { v, r }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CommitMode {
    Plain,
    Switch,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Commitment {
    pub mode: CommitMode,
    pub point: GroupElement,
}

/// `Com(v, r) = r.G + v.H`
pub fn commit(params: &GroupParams, o: &Opening) -> Commitment {
    Commitment { mode: CommitMode::Plain, point: pedersen(params, o.v, &o.r) }
}

fn pedersen(params: &GroupParams, v: u64, r: &Scalar) -> GroupElement {
    params.mul_g(r) + params.scalar(v) * params.h
}

/// The tweaked blinding `r' = r + hash(v.H + r.G ‖ r.J)` using `hash`.
pub fn switch_blinding_with<F>(params: &GroupParams, o: &Opening, hash: F) -> Scalar
where
    F: Fn(&[u8]) -> Scalar,
{
    let elgamal_left = params.scalar(o.v) * params.h + params.mul_g(&o.r);
    let elgamal_right = o.r * params.j;
    let mut input = elgamal_left.encode();
    input.extend_from_slice(&elgamal_right.encode());
    o.r + hash(&input)
}

pub fn switch_blinding(params: &GroupParams, o: &Opening) -> Scalar {
    switch_blinding_with(params, o, |b| params.hash_to_scalar(b))
}

/// Switch commitment `r'.G + v.H`.
pub fn switch_commit(params: &GroupParams, o: &Opening) -> Commitment {
    switch_commit_with(params, o, |b| params.hash_to_scalar(b))
}

pub fn switch_commit_with<F>(params: &GroupParams, o: &Opening, hash: F) -> Commitment
where
    F: Fn(&[u8]) -> Scalar,
{
    let r_prime = switch_blinding_with(params, o, hash);
    Commitment { mode: CommitMode::Switch, point: pedersen(params, o.v, &r_prime) }
}

pub fn commit_with_mode(params: &GroupParams, o: &Opening, mode: CommitMode) -> Commitment {
    match mode {
        CommitMode::Plain => commit(params, o),
        CommitMode::Switch => switch_commit(params, o),
    }
}

/// The opening whose plain Pedersen commitment equals the commitment in
/// `mode`. For switch mode this replaces `r` with `r'`; excesses and range
/// proofs are built from it.
pub fn effective_opening(params: &GroupParams, o: &Opening, mode: CommitMode) -> Opening {
    match mode {
        CommitMode::Plain => *o,
        CommitMode::Switch => Opening { v: o.v, r: switch_blinding(params, o) },
    }
}

pub fn verify_opening(params: &GroupParams, c: &Commitment, o: &Opening) -> bool {
    commit_with_mode(params, o, c.mode).point == c.point
}

/// Sum of commitment points, ignoring modes.
pub fn sum_points<'a, I: IntoIterator<Item = &'a Commitment>>(params: &GroupParams, cs: I) -> GroupElement {
    cs.into_iter().fold(params.identity(), |acc, c| acc + c.point)
}
