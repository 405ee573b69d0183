//! Prime-order group abstraction with two backends.
//!
//! The `curve` backend is the Ristretto group over Curve25519. The `tiny`
//! backend is the additive group `Z_n` for a small prime `n`, where elements
//! are residues and scalar multiplication is modular multiplication. Discrete
//! logarithms in the tiny group are brute-forceable, which makes the
//! commitment security games executable.
//!
//! Values carry their backend with them, so mixing elements from different
//! groups is a programming error and panics.

use std::cmp::Ordering;
use std::fmt;
use std::hash::{Hash, Hasher};
use std::ops::{Add, AddAssign, Mul, Neg, Sub};

use curve25519_dalek::constants::RISTRETTO_BASEPOINT_POINT;
use curve25519_dalek::ristretto::{CompressedRistretto, RistrettoPoint};
use curve25519_dalek::scalar::Scalar as CurveScalar;
use curve25519_dalek::traits::Identity;
use rand::RngCore;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use sha2::{Digest, Sha256, Sha512};
use thiserror::Error;

/// Domain separation tags for deriving the curve generators.
const DST_H: &[u8] = b"mwk/generator/H";
const DST_J: &[u8] = b"mwk/generator/J";

const TINY_ENCODING_LEN: usize = 16;
const CURVE_ENCODING_LEN: usize = 32;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GroupError {
    #[error("unsupported backend `{0}`")]
    UnsupportedBackend(String),
    #[error("tiny group order {0} must be a prime >= 23")]
    BadOrder(u64),
    #[error("generator {0} must be a non-identity residue below the order")]
    BadGenerator(&'static str),
    #[error("generators G, H and J must be pairwise distinct")]
    GeneratorsNotDistinct,
    #[error("discrete log search is only available on the tiny backend")]
    DlogOnCurve,
    #[error("no discrete log exists for the given base")]
    NoSolution,
    #[error("malformed encoding: {0}")]
    Encoding(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendId {
    Curve,
    Tiny,
}

impl std::str::FromStr for BackendId {
    type Err = GroupError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "curve" => Ok(BackendId::Curve),
            "tiny" => Ok(BackendId::Tiny),
            other => Err(GroupError::UnsupportedBackend(other.to_string())),
        }
    }
}

impl fmt::Display for BackendId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BackendId::Curve => "curve",
            BackendId::Tiny => "tiny",
        })
    }
}

/// Constants for the tiny backend. `g`, `h` and `j` are residues mod `n`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TinyConfig {
    pub n: u64,
    #[serde(rename = "G")]
    pub g: u64,
    #[serde(rename = "H")]
    pub h: u64,
    #[serde(rename = "J")]
    pub j: u64,
}

impl Default for TinyConfig {
    fn default() -> Self {
        TinyConfig { n: 23, g: 5, h: 7, j: 11 }
    }
}

fn is_prime(n: u64) -> bool {
    if n < 2 {
        return false;
    }
    let mut d = 2u64;
    while d.saturating_mul(d) <= n {
        if n % d == 0 {
            return false;
        }
        d += 1;
    }
    true
}

fn mul_mod(a: u64, b: u64, n: u64) -> u64 {
    ((a as u128 * b as u128) % n as u128) as u64
}

fn pow_mod(mut base: u64, mut exp: u64, n: u64) -> u64 {
    let mut acc = 1 % n;
    base %= n;
    while exp > 0 {
        if exp & 1 == 1 {
            acc = mul_mod(acc, base, n);
        }
        base = mul_mod(base, base, n);
        exp >>= 1;
    }
    acc
}

/// An element of the scalar field `F_n`.
#[derive(Clone, Copy)]
pub enum Scalar {
    Tiny { value: u64, n: u64 },
    Curve(CurveScalar),
}

/// A group element. Opaque outside this module.
#[derive(Clone, Copy)]
pub enum GroupElement {
    Tiny { value: u64, n: u64 },
    Curve(RistrettoPoint),
}

impl Scalar {
    pub fn is_zero(&self) -> bool {
        match self {
            Scalar::Tiny { value, .. } => *value == 0,
            Scalar::Curve(s) => *s == CurveScalar::ZERO,
        }
    }

    /// Multiplicative inverse; `None` for zero.
    pub fn invert(&self) -> Option<Scalar> {
        if self.is_zero() {
            return None;
        }
        Some(match *self {
            // n is prime, so Fermat's little theorem gives the inverse.
            Scalar::Tiny { value, n } => Scalar::Tiny { value: pow_mod(value, n - 2, n), n },
            Scalar::Curve(s) => Scalar::Curve(s.invert()),
        })
    }

    /// The residue as an integer. Tiny backend only.
    pub fn as_u64(&self) -> Option<u64> {
        match self {
            Scalar::Tiny { value, .. } => Some(*value),
            Scalar::Curve(_) => None,
        }
    }

    pub fn backend(&self) -> BackendId {
        match self {
            Scalar::Tiny { .. } => BackendId::Tiny,
            Scalar::Curve(_) => BackendId::Curve,
        }
    }

    /// Canonical bytes: 16 bytes `n ‖ value` (big-endian) on the tiny
    /// backend, the 32-byte little-endian canonical form on the curve.
    pub fn encode(&self) -> Vec<u8> {
        match self {
            Scalar::Tiny { value, n } => {
                let mut out = Vec::with_capacity(TINY_ENCODING_LEN);
                out.extend_from_slice(&n.to_be_bytes());
                out.extend_from_slice(&value.to_be_bytes());
                out
            }
            Scalar::Curve(s) => s.to_bytes().to_vec(),
        }
    }

    pub fn decode(bytes: &[u8]) -> Result<Scalar, GroupError> {
        match bytes.len() {
            TINY_ENCODING_LEN => {
                let (n, value) = split_tiny(bytes);
                if !is_prime(n) || value >= n {
                    return Err(GroupError::Encoding("tiny scalar out of range".into()));
                }
                Ok(Scalar::Tiny { value, n })
            }
            CURVE_ENCODING_LEN => {
                let arr: [u8; 32] = bytes.try_into().expect("length checked");
                Option::<CurveScalar>::from(CurveScalar::from_canonical_bytes(arr))
                    .map(Scalar::Curve)
                    .ok_or_else(|| GroupError::Encoding("non-canonical curve scalar".into()))
            }
            len => Err(GroupError::Encoding(format!("scalar encoding of length {len}"))),
        }
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.encode())
    }

    pub fn from_hex(s: &str) -> Result<Scalar, GroupError> {
        let bytes = hex::decode(s).map_err(|e| GroupError::Encoding(e.to_string()))?;
        Scalar::decode(&bytes)
    }
}

fn split_tiny(bytes: &[u8]) -> (u64, u64) {
    let n = u64::from_be_bytes(bytes[..8].try_into().expect("8 bytes"));
    let value = u64::from_be_bytes(bytes[8..16].try_into().expect("8 bytes"));
    (n, value)
}

impl GroupElement {
    pub fn backend(&self) -> BackendId {
        match self {
            GroupElement::Tiny { .. } => BackendId::Tiny,
            GroupElement::Curve(_) => BackendId::Curve,
        }
    }

    pub fn is_identity(&self) -> bool {
        match self {
            GroupElement::Tiny { value, .. } => *value == 0,
            GroupElement::Curve(p) => *p == RistrettoPoint::identity(),
        }
    }

    /// The residue of a tiny-backend element.
    pub fn as_u64(&self) -> Option<u64> {
        match self {
            GroupElement::Tiny { value, .. } => Some(*value),
            GroupElement::Curve(_) => None,
        }
    }

    /// Canonical bytes: 16 bytes `n ‖ value` on the tiny backend, the
    /// 32-byte compressed Ristretto encoding on the curve.
    pub fn encode(&self) -> Vec<u8> {
        match self {
            GroupElement::Tiny { value, n } => {
                let mut out = Vec::with_capacity(TINY_ENCODING_LEN);
                out.extend_from_slice(&n.to_be_bytes());
                out.extend_from_slice(&value.to_be_bytes());
                out
            }
            GroupElement::Curve(p) => p.compress().to_bytes().to_vec(),
        }
    }

    pub fn decode(bytes: &[u8]) -> Result<GroupElement, GroupError> {
        match bytes.len() {
            TINY_ENCODING_LEN => {
                let (n, value) = split_tiny(bytes);
                if !is_prime(n) || value >= n {
                    return Err(GroupError::Encoding("tiny element out of range".into()));
                }
                Ok(GroupElement::Tiny { value, n })
            }
            CURVE_ENCODING_LEN => CompressedRistretto::from_slice(bytes)
                .ok()
                .and_then(|c| c.decompress())
                .map(GroupElement::Curve)
                .ok_or_else(|| GroupError::Encoding("invalid ristretto point".into())),
            len => Err(GroupError::Encoding(format!("element encoding of length {len}"))),
        }
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.encode())
    }

    pub fn from_hex(s: &str) -> Result<GroupElement, GroupError> {
        let bytes = hex::decode(s).map_err(|e| GroupError::Encoding(e.to_string()))?;
        GroupElement::decode(&bytes)
    }
}

fn tiny_modulus(a: u64, b: u64) -> u64 {
    assert_eq!(a, b, "operands belong to different tiny groups");
    a
}

impl Add for Scalar {
    type Output = Scalar;
    fn add(self, rhs: Scalar) -> Scalar {
        match (self, rhs) {
            (Scalar::Tiny { value: a, n }, Scalar::Tiny { value: b, n: m }) => {
                let n = tiny_modulus(n, m);
                Scalar::Tiny { value: ((a as u128 + b as u128) % n as u128) as u64, n }
            }
            (Scalar::Curve(a), Scalar::Curve(b)) => Scalar::Curve(a + b),
            _ => panic!("scalar backend mismatch"),
        }
    }
}

impl Neg for Scalar {
    type Output = Scalar;
    fn neg(self) -> Scalar {
        match self {
            Scalar::Tiny { value, n } => Scalar::Tiny { value: (n - value) % n, n },
            Scalar::Curve(a) => Scalar::Curve(-a),
        }
    }
}

impl Sub for Scalar {
    type Output = Scalar;
    fn sub(self, rhs: Scalar) -> Scalar {
        self + (-rhs)
    }
}

impl Mul for Scalar {
    type Output = Scalar;
    fn mul(self, rhs: Scalar) -> Scalar {
        match (self, rhs) {
            (Scalar::Tiny { value: a, n }, Scalar::Tiny { value: b, n: m }) => {
                let n = tiny_modulus(n, m);
                Scalar::Tiny { value: mul_mod(a, b, n), n }
            }
            (Scalar::Curve(a), Scalar::Curve(b)) => Scalar::Curve(a * b),
            _ => panic!("scalar backend mismatch"),
        }
    }
}

impl AddAssign for Scalar {
    fn add_assign(&mut self, rhs: Scalar) {
        *self = *self + rhs;
    }
}

impl Add for GroupElement {
    type Output = GroupElement;
    fn add(self, rhs: GroupElement) -> GroupElement {
        match (self, rhs) {
            (GroupElement::Tiny { value: a, n }, GroupElement::Tiny { value: b, n: m }) => {
                let n = tiny_modulus(n, m);
                GroupElement::Tiny { value: ((a as u128 + b as u128) % n as u128) as u64, n }
            }
            (GroupElement::Curve(a), GroupElement::Curve(b)) => GroupElement::Curve(a + b),
            _ => panic!("group element backend mismatch"),
        }
    }
}

impl Neg for GroupElement {
    type Output = GroupElement;
    fn neg(self) -> GroupElement {
        match self {
            GroupElement::Tiny { value, n } => GroupElement::Tiny { value: (n - value) % n, n },
            GroupElement::Curve(p) => GroupElement::Curve(-p),
        }
    }
}

impl Sub for GroupElement {
    type Output = GroupElement;
    fn sub(self, rhs: GroupElement) -> GroupElement {
        self + (-rhs)
    }
}

impl AddAssign for GroupElement {
    fn add_assign(&mut self, rhs: GroupElement) {
        *self = *self + rhs;
    }
}

impl Mul<GroupElement> for Scalar {
    type Output = GroupElement;
    fn mul(self, rhs: GroupElement) -> GroupElement {
        scalar_mul(&self, &rhs)
    }
}

/// `k.P`
pub fn scalar_mul(k: &Scalar, p: &GroupElement) -> GroupElement {
    match (k, p) {
        (Scalar::Tiny { value: k, n }, GroupElement::Tiny { value: p, n: m }) => {
            let n = tiny_modulus(*n, *m);
            GroupElement::Tiny { value: mul_mod(*k, *p, n), n }
        }
        (Scalar::Curve(k), GroupElement::Curve(p)) => GroupElement::Curve(k * p),
        _ => panic!("scalar_mul backend mismatch"),
    }
}

macro_rules! impl_bytewise_traits {
    ($ty:ty) => {
        impl PartialEq for $ty {
            fn eq(&self, other: &Self) -> bool {
                self.encode() == other.encode()
            }
        }
        impl Eq for $ty {}
        impl Hash for $ty {
            fn hash<H: Hasher>(&self, state: &mut H) {
                self.encode().hash(state)
            }
        }
        impl PartialOrd for $ty {
            fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
                Some(self.cmp(other))
            }
        }
        impl Ord for $ty {
            fn cmp(&self, other: &Self) -> Ordering {
                self.encode().cmp(&other.encode())
            }
        }
        impl fmt::Debug for $ty {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                match self.as_u64() {
                    Some(v) => write!(f, "{}({v})", stringify!($ty)),
                    None => write!(f, "{}({})", stringify!($ty), self.to_hex()),
                }
            }
        }
        impl Serialize for $ty {
            fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
                s.serialize_str(&self.to_hex())
            }
        }
        impl<'de> Deserialize<'de> for $ty {
            fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
                let s = String::deserialize(d)?;
                <$ty>::from_hex(&s).map_err(serde::de::Error::custom)
            }
        }
    };
}

impl_bytewise_traits!(Scalar);
impl_bytewise_traits!(GroupElement);

/// Public group parameters: the order and the three generators.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupParams {
    pub backend: BackendId,
    /// Tiny-backend modulus; zero on the curve backend.
    #[serde(default)]
    tiny_order: u64,
    pub g: GroupElement,
    pub h: GroupElement,
    pub j: GroupElement,
}

/// Hash-to-group for the curve backend.
fn curve_generator(dst: &[u8], seed: u64) -> RistrettoPoint {
    let mut hasher = Sha512::new();
    hasher.update(dst);
    hasher.update(seed.to_be_bytes());
    RistrettoPoint::from_hash(hasher)
}

/// Generates public parameters. Deterministic in `(backend, seed, tiny)`.
///
/// The tiny backend takes its constants from `tiny`; the seed is not used
/// there. The curve backend uses the Ristretto basepoint for `G` and derives
/// `H` and `J` by hashing fixed tags together with the seed.
pub fn setup(backend: BackendId, seed: u64, tiny: &TinyConfig) -> Result<GroupParams, GroupError> {
    match backend {
        BackendId::Tiny => setup_tiny(tiny),
        BackendId::Curve => {
            let g = GroupElement::Curve(RISTRETTO_BASEPOINT_POINT);
            let h = GroupElement::Curve(curve_generator(DST_H, seed));
            let j = GroupElement::Curve(curve_generator(DST_J, seed));
            Ok(GroupParams { backend, tiny_order: 0, g, h, j })
        }
    }
}

/// `setup` taking the backend by name.
pub fn setup_named(backend: &str, seed: u64, tiny: &TinyConfig) -> Result<GroupParams, GroupError> {
    setup(backend.parse()?, seed, tiny)
}

fn setup_tiny(cfg: &TinyConfig) -> Result<GroupParams, GroupError> {
    let n = cfg.n;
    if n < 23 || !is_prime(n) {
        return Err(GroupError::BadOrder(n));
    }
    for (name, v) in [("G", cfg.g), ("H", cfg.h), ("J", cfg.j)] {
        if v == 0 || v >= n {
            return Err(GroupError::BadGenerator(name));
        }
    }
    if cfg.g == cfg.h || cfg.h == cfg.j || cfg.g == cfg.j {
        return Err(GroupError::GeneratorsNotDistinct);
    }
    let el = |value| GroupElement::Tiny { value, n };
    Ok(GroupParams { backend: BackendId::Tiny, tiny_order: n, g: el(cfg.g), h: el(cfg.h), j: el(cfg.j) })
}

impl GroupParams {
    pub fn is_tiny(&self) -> bool {
        self.backend == BackendId::Tiny
    }

    /// The group order for the tiny backend.
    pub fn tiny_order(&self) -> Option<u64> {
        self.is_tiny().then_some(self.tiny_order)
    }

    /// Whether `e` belongs to this group (same backend and modulus).
    pub fn contains(&self, e: &GroupElement) -> bool {
        match (self.backend, e) {
            (BackendId::Tiny, GroupElement::Tiny { n, .. }) => *n == self.tiny_order,
            (BackendId::Curve, GroupElement::Curve(_)) => true,
            _ => false,
        }
    }

    pub fn contains_scalar(&self, s: &Scalar) -> bool {
        match (self.backend, s) {
            (BackendId::Tiny, Scalar::Tiny { n, .. }) => *n == self.tiny_order,
            (BackendId::Curve, Scalar::Curve(_)) => true,
            _ => false,
        }
    }

    pub fn identity(&self) -> GroupElement {
        match self.backend {
            BackendId::Tiny => GroupElement::Tiny { value: 0, n: self.tiny_order },
            BackendId::Curve => GroupElement::Curve(RistrettoPoint::identity()),
        }
    }

    pub fn zero(&self) -> Scalar {
        self.scalar(0)
    }

    /// Embeds an integer as a scalar, reducing mod n.
    pub fn scalar(&self, v: u64) -> Scalar {
        match self.backend {
            BackendId::Tiny => Scalar::Tiny { value: v % self.tiny_order, n: self.tiny_order },
            BackendId::Curve => Scalar::Curve(CurveScalar::from(v)),
        }
    }

    /// Embeds a signed integer as a scalar.
    pub fn scalar_i64(&self, v: i64) -> Scalar {
        let s = self.scalar(v.unsigned_abs());
        if v < 0 {
            -s
        } else {
            s
        }
    }

    pub fn random_scalar<R: RngCore + ?Sized>(&self, rng: &mut R) -> Scalar {
        match self.backend {
            BackendId::Tiny => {
                // Rejection sampling keeps the distribution exactly uniform.
                let n = self.tiny_order;
                let zone = u64::MAX - (u64::MAX % n);
                loop {
                    let x = rng.next_u64();
                    if x < zone {
                        return Scalar::Tiny { value: x % n, n };
                    }
                }
            }
            BackendId::Curve => {
                let mut wide = [0u8; 64];
                rng.fill_bytes(&mut wide);
                Scalar::Curve(CurveScalar::from_bytes_mod_order_wide(&wide))
            }
        }
    }

    pub fn random_element<R: RngCore + ?Sized>(&self, rng: &mut R) -> GroupElement {
        scalar_mul(&self.random_scalar(rng), &self.g)
    }

    /// SHA-256 of `bytes`, read as a big-endian integer and reduced mod n.
    pub fn hash_to_scalar(&self, bytes: &[u8]) -> Scalar {
        let digest = Sha256::digest(bytes);
        match self.backend {
            BackendId::Tiny => {
                let n = self.tiny_order as u128;
                let value = digest.iter().fold(0u128, |acc, b| (acc * 256 + *b as u128) % n);
                Scalar::Tiny { value: value as u64, n: self.tiny_order }
            }
            BackendId::Curve => {
                let mut le: [u8; 32] = digest.into();
                le.reverse();
                Scalar::Curve(CurveScalar::from_bytes_mod_order(le))
            }
        }
    }

    /// `k.G`
    pub fn mul_g(&self, k: &Scalar) -> GroupElement {
        scalar_mul(k, &self.g)
    }

    /// Sums a sequence of elements; the empty sum is the identity.
    pub fn sum<'a, I: IntoIterator<Item = &'a GroupElement>>(&self, items: I) -> GroupElement {
        items.into_iter().fold(self.identity(), |acc, x| acc + *x)
    }

    pub fn sum_scalars<'a, I: IntoIterator<Item = &'a Scalar>>(&self, items: I) -> Scalar {
        items.into_iter().fold(self.zero(), |acc, x| acc + *x)
    }
}

/// Exhaustive discrete log: finds `x` with `x.base = q`. Tiny backend only.
pub fn brute_force_dlog(params: &GroupParams, q: &GroupElement, base: &GroupElement) -> Result<Scalar, GroupError> {
    let n = params.tiny_order().ok_or(GroupError::DlogOnCurve)?;
    (0..n)
        .map(|x| params.scalar(x))
        .find(|x| scalar_mul(x, base) == *q)
        .ok_or(GroupError::NoSolution)
}
