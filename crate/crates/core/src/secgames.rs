//! The commitment security games and the reduction from binding to
//! discrete log, runnable against concrete adversaries.
//!
//! Each trial gets its own RNG derived from `(seed, trial)`, so two games run
//! with the same seed hand an adversary identical randomness.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::commit::{commit, Commitment, Opening};
use crate::group::{brute_force_dlog, GroupElement, GroupError, GroupParams, Scalar};
use crate::simnet::run_seed;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GameError {
    #[error("computationally unbounded adversaries need the tiny backend")]
    UnboundedOnCurve,
    #[error("hiding adversary chose equal values")]
    EqualValues,
    #[error(transparent)]
    Group(#[from] GroupError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GameResult {
    pub trials: u64,
    pub successes: u64,
    pub success_rate: f64,
}

impl GameResult {
    fn new(trials: u64, successes: u64) -> Self {
        let success_rate = if trials == 0 { 0.0 } else { successes as f64 / trials as f64 };
        GameResult { trials, successes, success_rate }
    }
}

fn trial_rng(seed: u64, trial: u64) -> ChaCha20Rng {
    ChaCha20Rng::seed_from_u64(run_seed(seed, trial))
}

/// Produces two openings, hoping they commit to the same point.
pub trait BindingAdversary {
    fn attack(&mut self, params: &GroupParams, rng: &mut dyn RngCore) -> (Opening, Opening);
}

/// Chooses two values, then guesses which one a commitment hides.
pub trait HidingAdversary {
    fn choose(&mut self, params: &GroupParams, rng: &mut dyn RngCore) -> (u64, u64);
    fn guess(&mut self, params: &GroupParams, c: &Commitment, rng: &mut dyn RngCore) -> bool;
}

/// Values are compared as scalars, so `v` and `v + n` count as equal.
fn distinct_values(params: &GroupParams, a: u64, b: u64) -> bool {
    params.scalar(a) != params.scalar(b)
}

/// `Com(v1,r1) = Com(v2,r2) ∧ v1 ≠ v2`
pub fn binding_broken(params: &GroupParams, o1: &Opening, o2: &Opening) -> bool {
    distinct_values(params, o1.v, o2.v) && commit(params, o1) == commit(params, o2)
}

pub fn game_binding(params: &GroupParams, adv: &mut dyn BindingAdversary, trials: u64, seed: u64) -> GameResult {
    let successes = (0..trials)
        .filter(|&i| {
            let (o1, o2) = adv.attack(params, &mut trial_rng(seed, i));
            binding_broken(params, &o1, &o2)
        })
        .count() as u64;
    GameResult::new(trials, successes)
}

/// Runs the adversary and, on a double opening, returns
/// `x = (r1 − r2)/(v2 − v1)`, for which `x.G = H`.
pub fn inversor_dlog(params: &GroupParams, adv: &mut dyn BindingAdversary, rng: &mut dyn RngCore) -> Option<Scalar> {
    let (o1, o2) = adv.attack(params, rng);
    if !binding_broken(params, &o1, &o2) {
        return None;
    }
    let dv = (params.scalar(o2.v) - params.scalar(o1.v)).invert()?;
    Some((o1.r - o2.r) * dv)
}

/// The discrete-log game played by the inversor: success iff it returns
/// `x` with `x.G = H`.
pub fn game_dlog(params: &GroupParams, adv: &mut dyn BindingAdversary, trials: u64, seed: u64) -> GameResult {
    let successes = (0..trials)
        .filter(|&i| inversor_dlog(params, adv, &mut trial_rng(seed, i)).is_some_and(|x| params.mul_g(&x) == params.h))
        .count() as u64;
    GameResult::new(trials, successes)
}

/// Samples `b` and `r`, commits to `v_b` and asks for a guess.
pub fn game_hiding(params: &GroupParams, adv: &mut dyn HidingAdversary, trials: u64, seed: u64) -> Result<GameResult, GameError> {
    let mut successes = 0;
    for i in 0..trials {
        let mut rng = trial_rng(seed, i);
        let (v0, v1) = adv.choose(params, &mut rng);
        if !distinct_values(params, v0, v1) {
            return Err(GameError::EqualValues);
        }
        let b = rng.gen_bool(0.5);
        let r = params.random_scalar(&mut rng);
        let c = commit(params, &Opening::new(if b { v1 } else { v0 }, r));
        if adv.guess(params, &c, &mut rng) == b {
            successes += 1;
        }
    }
    Ok(GameResult::new(trials, successes))
}

/// All commitments to `v`, one per blinding factor, sorted.
pub fn commitment_images(params: &GroupParams, v: u64) -> Result<Vec<GroupElement>, GameError> {
    let n = params.tiny_order().ok_or(GameError::UnboundedOnCurve)?;
    let mut out: Vec<GroupElement> = (0..n).map(|r| commit(params, &Opening::new(v, params.scalar(r))).point).collect();
    out.sort();
    Ok(out)
}

fn random_value(params: &GroupParams, rng: &mut dyn RngCore) -> u64 {
    match params.tiny_order() {
        Some(n) => rng.gen_range(0..n),
        None => rng.next_u64() >> 1,
    }
}

/// Knows `dlog_G(H)` by brute force and uses it to open one commitment
/// two ways.
#[derive(Debug, Clone)]
pub struct BreakingAdversary {
    dlog_h: Scalar,
}

impl BreakingAdversary {
    pub fn new(params: &GroupParams) -> Result<Self, GameError> {
        if !params.is_tiny() {
            return Err(GameError::UnboundedOnCurve);
        }
        Ok(BreakingAdversary { dlog_h: brute_force_dlog(params, &params.h, &params.g)? })
    }
}

impl BindingAdversary for BreakingAdversary {
    fn attack(&mut self, params: &GroupParams, rng: &mut dyn RngCore) -> (Opening, Opening) {
        let v1 = random_value(params, rng);
        let mut v2 = random_value(params, rng);
        while !distinct_values(params, v1, v2) {
            v2 = random_value(params, rng);
        }
        let r1 = params.random_scalar(rng);
        let r2 = r1 + (params.scalar(v1) - params.scalar(v2)) * self.dlog_h;
        (Opening::new(v1, r1), Opening::new(v2, r2))
    }
}

/// Breaks binding with probability `p` and otherwise returns the same
/// opening twice.
#[derive(Debug, Clone)]
pub struct FlakyAdversary {
    inner: BreakingAdversary,
    p: f64,
}

impl FlakyAdversary {
    pub fn new(params: &GroupParams, p: f64) -> Result<Self, GameError> {
        Ok(FlakyAdversary { inner: BreakingAdversary::new(params)?, p })
    }
}

impl BindingAdversary for FlakyAdversary {
    fn attack(&mut self, params: &GroupParams, rng: &mut dyn RngCore) -> (Opening, Opening) {
        if rng.gen_bool(self.p) {
            self.inner.attack(params, rng)
        } else {
            let o = Opening::new(random_value(params, rng), params.random_scalar(rng));
            (o, o)
        }
    }
}

/// Returns the same opening twice.
#[derive(Debug, Clone, Default)]
pub struct HonestAdversary;

impl BindingAdversary for HonestAdversary {
    fn attack(&mut self, params: &GroupParams, rng: &mut dyn RngCore) -> (Opening, Opening) {
        let o = Opening::new(random_value(params, rng), params.random_scalar(rng));
        (o, o)
    }
}

/// Two independent random openings.
#[derive(Debug, Clone, Default)]
pub struct RandomBindingAdversary;

impl BindingAdversary for RandomBindingAdversary {
    fn attack(&mut self, params: &GroupParams, rng: &mut dyn RngCore) -> (Opening, Opening) {
        let mut o = || Opening::new(random_value(params, rng), params.random_scalar(rng));
        (o(), o())
    }
}

/// Enumerates every blinding factor for both candidate values and guesses
/// the value with more matching openings, breaking ties at random.
#[derive(Debug, Clone)]
pub struct ExhaustiveOpeningAdversary {
    values: (u64, u64),
}

impl ExhaustiveOpeningAdversary {
    pub fn new(params: &GroupParams) -> Result<Self, GameError> {
        if !params.is_tiny() {
            return Err(GameError::UnboundedOnCurve);
        }
        Ok(ExhaustiveOpeningAdversary { values: (0, 0) })
    }

    fn openings(params: &GroupParams, v: u64, c: &Commitment) -> usize {
        let n = params.tiny_order().expect("checked at construction");
        (0..n).filter(|r| commit(params, &Opening::new(v, params.scalar(*r))) == *c).count()
    }
}

impl HidingAdversary for ExhaustiveOpeningAdversary {
    fn choose(&mut self, params: &GroupParams, rng: &mut dyn RngCore) -> (u64, u64) {
        let v0 = random_value(params, rng);
        let mut v1 = random_value(params, rng);
        while !distinct_values(params, v0, v1) {
            v1 = random_value(params, rng);
        }
        self.values = (v0, v1);
        (v0, v1)
    }

    fn guess(&mut self, params: &GroupParams, c: &Commitment, rng: &mut dyn RngCore) -> bool {
        let k0 = Self::openings(params, self.values.0, c);
        let k1 = Self::openings(params, self.values.1, c);
        match k0.cmp(&k1) {
            std::cmp::Ordering::Less => true,
            std::cmp::Ordering::Greater => false,
            std::cmp::Ordering::Equal => rng.gen_bool(0.5),
        }
    }
}

/// Ignores the commitment and flips a coin.
#[derive(Debug, Clone, Default)]
pub struct RandomGuesser;

impl HidingAdversary for RandomGuesser {
    fn choose(&mut self, _params: &GroupParams, _rng: &mut dyn RngCore) -> (u64, u64) {
        (0, 1)
    }

    fn guess(&mut self, _params: &GroupParams, _c: &Commitment, rng: &mut dyn RngCore) -> bool {
        rng.gen_bool(0.5)
    }
}

/// Always answers the same bit.
#[derive(Debug, Clone, Default)]
pub struct ConstantGuesser(pub bool);

impl HidingAdversary for ConstantGuesser {
    fn choose(&mut self, _params: &GroupParams, _rng: &mut dyn RngCore) -> (u64, u64) {
        (0, 1)
    }

    fn guess(&mut self, _params: &GroupParams, _c: &Commitment, _rng: &mut dyn RngCore) -> bool {
        self.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::group::{setup, BackendId, TinyConfig};

    fn tiny() -> GroupParams {
        setup(BackendId::Tiny, 1, &TinyConfig::default()).unwrap()
    }

    fn curve() -> GroupParams {
        setup(BackendId::Curve, 1, &TinyConfig::default()).unwrap()
    }

    #[test]
    fn honest_adversary_never_wins() {
        let p = tiny();
        assert_eq!(game_binding(&p, &mut HonestAdversary, 100, 1).successes, 0);
    }

    #[test]
    fn breaking_adversary_always_wins() {
        let p = tiny();
        let mut adv = BreakingAdversary::new(&p).unwrap();
        assert_eq!(game_binding(&p, &mut adv, 100, 1).success_rate, 1.0);
    }

    #[test]
    fn inversor_matches_brute_force() {
        let p = tiny();
        let mut adv = BreakingAdversary::new(&p).unwrap();
        let x = inversor_dlog(&p, &mut adv, &mut trial_rng(3, 0)).unwrap();
        assert_eq!(p.mul_g(&x), p.h);
        assert_eq!(x, brute_force_dlog(&p, &p.h, &p.g).unwrap());
        // 6.5 = 30 = 7 mod 23
        assert_eq!(x.as_u64(), Some(6));
    }

    #[test]
    fn inversor_fails_with_failing_adversary() {
        let p = tiny();
        assert_eq!(inversor_dlog(&p, &mut HonestAdversary, &mut trial_rng(0, 0)), None);
        assert_eq!(game_dlog(&p, &mut HonestAdversary, 50, 0).successes, 0);
    }

    #[test]
    fn reduction_preserves_success_rate() {
        let p = tiny();
        let mut adv = FlakyAdversary::new(&p, 0.3).unwrap();
        let b = game_binding(&p, &mut adv, 200, 9);
        let d = game_dlog(&p, &mut adv, 200, 9);
        assert_eq!(b.successes, d.successes);
        assert!(b.successes > 0 && b.successes < 200);
    }

    #[test]
    fn curve_random_adversary() {
        let p = curve();
        assert_eq!(game_binding(&p, &mut RandomBindingAdversary, 200, 2).successes, 0);
        assert_eq!(BreakingAdversary::new(&p).unwrap_err(), GameError::UnboundedOnCurve);
        assert!(ExhaustiveOpeningAdversary::new(&p).is_err());
    }

    #[test]
    fn hiding_rates_near_half() {
        let p = tiny();
        for adv in [&mut RandomGuesser as &mut dyn HidingAdversary, &mut ConstantGuesser(false)] {
            let r = game_hiding(&p, adv, 4000, 5).unwrap();
            assert!((r.success_rate - 0.5).abs() < 0.03, "{r:?}");
        }
    }

    #[test]
    fn equal_values_rejected() {
        struct Same;
        impl HidingAdversary for Same {
            fn choose(&mut self, _: &GroupParams, _: &mut dyn RngCore) -> (u64, u64) {
                (4, 27)
            }
            fn guess(&mut self, _: &GroupParams, _: &Commitment, _: &mut dyn RngCore) -> bool {
                false
            }
        }
        assert_eq!(game_hiding(&tiny(), &mut Same, 1, 0), Err(GameError::EqualValues));
    }

    #[test]
    fn images_are_the_whole_group() {
        let p = tiny();
        let all: Vec<GroupElement> = {
            let mut v: Vec<_> = (0..23).map(|k| p.mul_g(&p.scalar(k))).collect();
            v.sort();
            v
        };
        assert_eq!(commitment_images(&p, 3).unwrap(), all);
        assert_eq!(commitment_images(&p, 3).unwrap(), commitment_images(&p, 11).unwrap());
    }
}
