//! Monte-Carlo versions of the integrity games, played against the real
//! containers with narrow tags so that wins become observable.
//!
//! Each trial gets its own key, context and RNG derived from the master
//! seed, so reports are reproducible and trials run in parallel.

use std::collections::{HashMap, HashSet};
use std::sync::Arc;

use num::bigint::BigInt;
use num::rational::BigRational;
use num::One;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::context::SecureContext;
use crate::error::{Error, Result};
use crate::mac::{Authenticator, Backend, Domain, MacInput, MacKey, MacTag};
use crate::queue::AuthQueue;
use crate::stack::AuthStack;

/// Probability that `q` uniform `b`-bit tags contain a repeat:
/// `1 - prod_{i<q} (1 - i / 2^b)`, summed in log space so tiny results keep
/// their precision.
pub fn collision_probability(b: u32, q: u64) -> f64 {
    if q <= 1 {
        return 0.0;
    }
    if b < 64 && q > (1u64 << b) {
        return 1.0;
    }
    let n = 2f64.powi(b as i32);
    let log_none: f64 = (1..q).map(|i| (-(i as f64) / n).ln_1p()).sum();
    -log_none.exp_m1()
}

/// Exact rational form of [`collision_probability`].
pub fn collision_probability_exact(b: u32, q: u64) -> BigRational {
    let n = BigInt::one() << b as usize;
    if BigInt::from(q) > n {
        return BigRational::one();
    }
    let mut none = BigRational::one();
    for i in 0..q {
        none *= BigRational::new(&n - BigInt::from(i), n.clone());
    }
    BigRational::one() - none
}

/// Expected number of samples before the first repeat, `sqrt(pi 2^b / 2)`.
pub fn birthday_threshold(b: u32) -> f64 {
    (std::f64::consts::PI * 2f64.powi(b as i32) / 2.0).sqrt()
}

/// 95% Wilson score interval half-width for `wins` out of `trials`.
pub fn wilson_half_width(wins: u64, trials: u64) -> f64 {
    if trials == 0 {
        return 1.0;
    }
    let n = trials as f64;
    let p = wins as f64 / n;
    let z = 1.959_963_984_540_054;
    let z2 = z * z;
    z / (1.0 + z2 / n) * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GameConfig {
    pub b: u32,
    pub q: u64,
    pub trials: u64,
    pub seed: u64,
}

impl GameConfig {
    pub fn new(b: u32, q: u64, trials: u64, seed: u64) -> Self {
        GameConfig { b, q, trials, seed }
    }

    fn validate(&self) -> Result<()> {
        if !(1..=128).contains(&self.b) {
            return Err(Error::Config(format!("tag width {} outside 1..=128", self.b)));
        }
        if self.trials == 0 {
            return Err(Error::Config("trials must be at least 1".into()));
        }
        Ok(())
    }

    /// Independent seed for trial `t` (SplitMix64 over seed and index).
    pub fn trial_seed(&self, t: u64) -> u64 {
        let mut z = self
            .seed
            .wrapping_add(t.wrapping_add(1).wrapping_mul(0x9e37_79b9_7f4a_7c15));
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        z ^ (z >> 31)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GameReport {
    pub game: String,
    pub b: u32,
    pub q: u64,
    pub trials: u64,
    pub wins: u64,
    pub empirical_rate: f64,
    pub predicted_rate: f64,
    pub ci95: f64,
    pub seed: u64,
}

impl GameReport {
    fn new(game: &str, cfg: &GameConfig, wins: u64, predicted: f64) -> Self {
        GameReport {
            game: game.to_string(),
            b: cfg.b,
            q: cfg.q,
            trials: cfg.trials,
            wins,
            empirical_rate: wins as f64 / cfg.trials as f64,
            predicted_rate: predicted,
            ci95: wilson_half_width(wins, cfg.trials),
            seed: cfg.seed,
        }
    }

    /// Whether the empirical rate is at most `predicted + 3 * ci95`.
    pub fn within_bound(&self) -> bool {
        self.empirical_rate <= self.predicted_rate + 3.0 * self.ci95
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("report serializes")
    }
}

fn count_wins(cfg: &GameConfig, trial: impl Fn(u64, &mut ChaCha8Rng) -> Result<bool> + Sync) -> Result<u64> {
    (0..cfg.trials)
        .into_par_iter()
        .map(|t| {
            let seed = cfg.trial_seed(t);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            trial(seed, &mut rng).map(u64::from)
        })
        .try_reduce(|| 0, |a, b| Ok(a + b))
}

fn trial_context(backend: Backend, seed: u64) -> Result<std::rc::Rc<SecureContext>> {
    let mac = Authenticator::new(&MacKey::generate(Some(seed)), backend)?;
    Ok(SecureContext::with_seed(Arc::new(mac), seed.rotate_left(17)))
}

fn random_tag(b: u32, rng: &mut impl Rng) -> MacTag {
    let bits: u128 = rng.gen();
    let mask = if b >= 128 { u128::MAX } else { (1u128 << b) - 1 };
    MacTag::new(bits & mask, b).expect("masked to width")
}

// ---- MAC-Collision ------------------------------------------------------

/// `q` distinct inputs under one common modifier; a trial is won when two
/// of their `trunc:b` tags coincide.
pub fn run_mac_collision(cfg: &GameConfig) -> Result<GameReport> {
    cfg.validate()?;
    let wins = count_wins(cfg, |seed, rng| {
        let mac = Authenticator::new(&MacKey::generate(Some(seed)), Backend::Trunc(cfg.b))?;
        let y: u64 = rng.gen();
        let mut inputs = HashSet::new();
        let mut tags = HashSet::new();
        while (inputs.len() as u64) < cfg.q {
            let x: u64 = rng.gen();
            if !inputs.insert(x) {
                continue;
            }
            let tag = mac.compute(&MacInput::new(Domain::Raw).word(x).word(y));
            if !tags.insert(tag.bits()) {
                return Ok(true);
            }
        }
        Ok(false)
    })?;
    Ok(GameReport::new("mac-collision", cfg, wins, collision_probability(cfg.b, cfg.q)))
}

/// Mean number of tags collected up to and including the first repeat.
pub fn mean_samples_to_collision(b: u32, trials: u64, seed: u64) -> Result<f64> {
    let cfg = GameConfig::new(b, 0, trials, seed);
    cfg.validate()?;
    if b > 40 {
        return Err(Error::Config("first-collision experiment needs b <= 40".into()));
    }
    let total: u64 = (0..trials)
        .into_par_iter()
        .map(|t| {
            let s = cfg.trial_seed(t);
            let mac = Authenticator::new(&MacKey::generate(Some(s)), Backend::Trunc(b)).unwrap();
            let y = ChaCha8Rng::seed_from_u64(s).gen::<u64>();
            let mut seen = HashSet::new();
            let mut x = 0u64;
            loop {
                x += 1;
                let tag = mac.compute(&MacInput::new(Domain::Raw).word(x).word(y));
                if !seen.insert(tag.bits()) {
                    return x;
                }
            }
        })
        .sum();
    Ok(total as f64 / trials as f64)
}

// ---- Stack game -----------------------------------------------------------

/// An attacker in the stack game. A fresh clone plays each trial.
pub trait StackAdversary: Clone + Send + Sync {
    fn name(&self) -> &'static str;

    /// Values to push in observation round `round` of `rounds`. The stack
    /// is emptied after every round except the last, whose contents are
    /// then attacked.
    fn choose(&mut self, round: u64, rounds: u64, rng: &mut ChaCha8Rng) -> Vec<[u8; 8]>;

    /// The state MAC at the end of a round.
    fn receive(&mut self, state_mac: MacTag);

    /// One attack step with `top` the genuine top value. Returns true after
    /// rewriting the region, which ends the game; false to let the game pop
    /// and move on.
    fn attack(&mut self, stack: &mut AuthStack, top: &[u8], rng: &mut ChaCha8Rng) -> bool;
}

/// Never tampers.
#[derive(Debug, Clone, Default)]
pub struct HonestStack;

impl StackAdversary for HonestStack {
    fn name(&self) -> &'static str {
        "honest"
    }

    fn choose(&mut self, _: u64, _: u64, rng: &mut ChaCha8Rng) -> Vec<[u8; 8]> {
        (0..rng.gen_range(1..4)).map(|_| rng.gen()).collect()
    }

    fn receive(&mut self, _: MacTag) {}

    fn attack(&mut self, _: &mut AuthStack, _: &[u8], _: &mut ChaCha8Rng) -> bool {
        false
    }
}

/// Replaces the top value and its stored predecessor MAC with random ones.
#[derive(Debug, Clone, Default)]
pub struct RandomSubstitution;

impl StackAdversary for RandomSubstitution {
    fn name(&self) -> &'static str {
        "random-substitution"
    }

    fn choose(&mut self, _: u64, _: u64, rng: &mut ChaCha8Rng) -> Vec<[u8; 8]> {
        (0..rng.gen_range(1..4)).map(|_| rng.gen()).collect()
    }

    fn receive(&mut self, _: MacTag) {}

    fn attack(&mut self, stack: &mut AuthStack, top: &[u8], rng: &mut ChaCha8Rng) -> bool {
        let Some(entry) = stack.entry_layouts().and_then(|l| l.last().cloned()) else {
            return false;
        };
        let mut forged: [u8; 8] = rng.gen();
        while forged[..] == *top {
            forged = rng.gen();
        }
        let b = stack.context().mac().width();
        let tag = random_tag(b, rng).to_le_bytes();
        let region = stack.region_mut();
        region.tamper(entry.data.start, &forged).is_ok() && region.tamper(entry.prev_mac.start, &tag).is_ok()
    }
}

/// Pushes one fresh value per round and remembers each state MAC. Since
/// every single-element state is `MAC(H(x), nonce, 1, nonce)`, two values
/// with equal tags are interchangeable; the last round pushes one of them
/// and the attack swaps in the other.
#[derive(Debug, Clone, Default)]
pub struct ReplayStack {
    seen: HashMap<u128, [u8; 8]>,
    pending: Option<[u8; 8]>,
    swap: Option<([u8; 8], [u8; 8])>,
}

impl StackAdversary for ReplayStack {
    fn name(&self) -> &'static str {
        "replay"
    }

    fn choose(&mut self, round: u64, rounds: u64, rng: &mut ChaCha8Rng) -> Vec<[u8; 8]> {
        let v = match self.swap {
            Some((a, _)) if round + 1 == rounds => a,
            _ => loop {
                let v: [u8; 8] = rng.gen();
                if !self.seen.values().any(|s| *s == v) {
                    break v;
                }
            },
        };
        self.pending = Some(v);
        vec![v]
    }

    fn receive(&mut self, state_mac: MacTag) {
        let Some(v) = self.pending.take() else { return };
        match self.seen.get(&state_mac.bits()) {
            Some(w) if *w != v => {
                if self.swap.is_none() {
                    self.swap = Some((v, *w));
                }
            }
            Some(_) => {}
            None => {
                self.seen.insert(state_mac.bits(), v);
            }
        }
    }

    fn attack(&mut self, stack: &mut AuthStack, top: &[u8], _: &mut ChaCha8Rng) -> bool {
        let Some((a, b)) = self.swap else { return false };
        if a[..] != *top {
            return false;
        }
        let Some(entry) = stack.entry_layouts().and_then(|l| l.last().cloned()) else {
            return false;
        };
        stack.region_mut().tamper(entry.data.start, &b).is_ok()
    }
}

/// The stack game on a real [`AuthStack`] with `trunc:b` tags. Predicted
/// rate: [`collision_probability`]`(b, q)`.
pub fn run_stack_game<A: StackAdversary>(cfg: &GameConfig, adversary: &A) -> Result<GameReport> {
    cfg.validate()?;
    let wins = count_wins(cfg, |seed, rng| {
        let ctx = trial_context(Backend::Trunc(cfg.b), seed)?;
        let mut stack = AuthStack::new(&ctx)?;
        let mut adv = adversary.clone();
        let mut pushed: Vec<[u8; 8]> = Vec::new();
        for round in 0..cfg.q {
            if round > 0 {
                while stack.size()? > 0 {
                    stack.pop()?;
                }
            }
            pushed = adv.choose(round, cfg.q, rng);
            for v in &pushed {
                stack.push(v)?;
            }
            adv.receive(stack.state_mac()?);
        }
        while let Some(original) = pushed.pop() {
            if adv.attack(&mut stack, &original, rng) {
                return Ok(matches!(stack.top(), Ok(v) if v != original));
            }
            stack.pop()?;
        }
        Ok(false)
    })?;
    Ok(GameReport::new(
        &format!("stack/{}", adversary.name()),
        cfg,
        wins,
        collision_probability(cfg.b, cfg.q),
    ))
}

// ---- Queue index game --------------------------------------------------------

pub trait QueueIndexAdversary: Clone + Send + Sync {
    fn name(&self) -> &'static str;

    /// `Some(x)` enqueues x, `None` dequeues (ignored on an empty queue).
    fn choose(&mut self, round: u64, rounds: u64, rng: &mut ChaCha8Rng) -> Option<[u8; 8]>;

    /// After each step: the element MAC at the end just touched (back after
    /// an enqueue, front after a dequeue) and the state MAC.
    fn receive(&mut self, element_mac: Option<MacTag>, state_mac: MacTag);

    /// One attack step with `front` the genuine front value.
    fn attack(&mut self, queue: &mut AuthQueue, front: &[u8], rng: &mut ChaCha8Rng) -> bool;
}

/// Alternates enqueues and dequeues (E, E, D, E, D, ...) so that every
/// state MAC covers a new index pair. If the final state MAC equals an
/// earlier one for a different front index, it rewinds the indices to that
/// pair and plants the element that was at the old front.
#[derive(Debug, Clone, Default)]
pub struct ReplayIndex {
    back: u64,
    front: u64,
    values: HashMap<u64, ([u8; 8], MacTag)>,
    states: Vec<(u64, u64, MacTag)>,
    last_enqueued: Option<[u8; 8]>,
}

impl QueueIndexAdversary for ReplayIndex {
    fn name(&self) -> &'static str {
        "replay"
    }

    fn choose(&mut self, round: u64, _: u64, rng: &mut ChaCha8Rng) -> Option<[u8; 8]> {
        if self.front == 0 {
            self.front = 1;
        }
        if round >= 2 && round.is_multiple_of(2) && self.back >= self.front {
            self.last_enqueued = None;
            self.front += 1;
            None
        } else {
            let v: [u8; 8] = rng.gen();
            self.back += 1;
            self.last_enqueued = Some(v);
            Some(v)
        }
    }

    fn receive(&mut self, element_mac: Option<MacTag>, state_mac: MacTag) {
        if let (Some(v), Some(m)) = (self.last_enqueued, element_mac) {
            self.values.insert(self.back, (v, m));
        }
        self.states.push((self.back, self.front, state_mac));
    }

    fn attack(&mut self, queue: &mut AuthQueue, front: &[u8], _: &mut ChaCha8Rng) -> bool {
        let Some(&(_, f_now, s_now)) = self.states.last() else {
            return false;
        };
        let candidate = self.states[..self.states.len() - 1].iter().find(|(b, f, s)| {
            *s == s_now && *f != f_now && f <= b && self.values.get(f).is_some_and(|(v, _)| v[..] != *front)
        });
        let Some(&(b_j, f_j, _)) = candidate else {
            return false;
        };
        let (value, mac) = self.values[&f_j];
        let Ok(ptr) = queue.region().peek_u64(queue.front_ptr_off()) else {
            return false;
        };
        let (fo, bo) = (queue.front_off(), queue.back_off());
        let r = queue.region_mut();
        r.tamper(fo, &f_j.to_le_bytes()).is_ok()
            && r.tamper(bo, &b_j.to_le_bytes()).is_ok()
            && r.tamper(ptr + 4, &mac.to_le_bytes()).is_ok()
            && r.tamper(ptr + 4 + mac.byte_len() as u64, &value).is_ok()
    }
}

/// Enqueues in every round, then rewrites both indices and the front entry
/// with random values.
#[derive(Debug, Clone, Default)]
pub struct RandomIndex;

impl QueueIndexAdversary for RandomIndex {
    fn name(&self) -> &'static str {
        "random-index"
    }

    fn choose(&mut self, _: u64, _: u64, rng: &mut ChaCha8Rng) -> Option<[u8; 8]> {
        Some(rng.gen())
    }

    fn receive(&mut self, _: Option<MacTag>, _: MacTag) {}

    fn attack(&mut self, queue: &mut AuthQueue, front: &[u8], rng: &mut ChaCha8Rng) -> bool {
        let Ok(ptr) = queue.region().peek_u64(queue.front_ptr_off()) else {
            return false;
        };
        let (fo, bo) = (queue.front_off(), queue.back_off());
        let real_front = queue.region().peek_u64(fo).unwrap_or(1);
        let b = queue.context().mac().width();
        let mut k1: u64 = rng.gen_range(1..64);
        while k1 == real_front {
            k1 = rng.gen_range(1..64);
        }
        let k2 = k1 + rng.gen_range(0..64);
        let mut value: [u8; 8] = rng.gen();
        while value[..] == *front {
            value = rng.gen();
        }
        let mac = random_tag(b, rng);
        let r = queue.region_mut();
        r.tamper(fo, &k1.to_le_bytes()).is_ok()
            && r.tamper(bo, &k2.to_le_bytes()).is_ok()
            && r.tamper(ptr + 4, &mac.to_le_bytes()).is_ok()
            && r.tamper(ptr + 4 + mac.byte_len() as u64, &value).is_ok()
    }
}

fn front_mac(queue: &AuthQueue) -> Option<MacTag> {
    let l = queue.entry_layouts()?;
    let e = l.first()?;
    let b = queue.context().mac().width();
    MacTag::from_le_slice(queue.region().peek(e.mac.start, e.mac.end - e.mac.start).ok()?, b)
}

fn back_mac(queue: &AuthQueue) -> Option<MacTag> {
    let l = queue.entry_layouts()?;
    let e = l.last()?;
    let b = queue.context().mac().width();
    MacTag::from_le_slice(queue.region().peek(e.mac.start, e.mac.end - e.mac.start).ok()?, b)
}

/// Walks the queue front to back; the first tampering attempt decides the
/// trial by whether `front` then returns a different value.
fn queue_attack_phase(
    queue: &mut AuthQueue,
    enqueued: &mut std::collections::VecDeque<[u8; 8]>,
    mut attack: impl FnMut(&mut AuthQueue, &[u8]) -> bool,
) -> Result<bool> {
    while let Some(original) = enqueued.pop_front() {
        if attack(queue, &original) {
            return Ok(matches!(queue.front(), Ok(v) if v != original));
        }
        queue.dequeue()?;
    }
    Ok(false)
}

/// The index game on a real [`AuthQueue`] with `trunc:b` tags. Predicted
/// rate: [`collision_probability`]`(b, q)`.
pub fn run_queue_index_game<A: QueueIndexAdversary>(cfg: &GameConfig, adversary: &A) -> Result<GameReport> {
    cfg.validate()?;
    let wins = count_wins(cfg, |seed, rng| {
        let ctx = trial_context(Backend::Trunc(cfg.b), seed)?;
        let mut queue = AuthQueue::new(&ctx)?;
        let mut adv = adversary.clone();
        let mut enqueued = std::collections::VecDeque::new();
        for round in 0..cfg.q {
            let element = match adv.choose(round, cfg.q, rng) {
                Some(x) => {
                    queue.enqueue(&x)?;
                    enqueued.push_back(x);
                    back_mac(&queue)
                }
                None => {
                    if enqueued.pop_front().is_some() {
                        queue.dequeue()?;
                    }
                    front_mac(&queue)
                }
            };
            adv.receive(element, queue.state_mac()?);
        }
        queue_attack_phase(&mut queue, &mut enqueued, |q, v| adv.attack(q, v, rng))
    })?;
    Ok(GameReport::new(
        &format!("queue-index/{}", adversary.name()),
        cfg,
        wins,
        collision_probability(cfg.b, cfg.q),
    ))
}

// ---- Queue data game -----------------------------------------------------------

pub trait QueueDataAdversary: Clone + Send + Sync {
    fn name(&self) -> &'static str;
    fn choose(&mut self, round: u64, rng: &mut ChaCha8Rng) -> [u8; 8];
    fn receive(&mut self, element_mac: MacTag);
    fn attack(&mut self, queue: &mut AuthQueue, front: &[u8], rng: &mut ChaCha8Rng) -> bool;
}

/// Writes a fresh value at the front with a uniformly guessed tag.
#[derive(Debug, Clone, Default)]
pub struct GuessData;

impl QueueDataAdversary for GuessData {
    fn name(&self) -> &'static str {
        "guess"
    }

    fn choose(&mut self, _: u64, rng: &mut ChaCha8Rng) -> [u8; 8] {
        rng.gen()
    }

    fn receive(&mut self, _: MacTag) {}

    fn attack(&mut self, queue: &mut AuthQueue, front: &[u8], rng: &mut ChaCha8Rng) -> bool {
        let Some(e) = queue.entry_layouts().and_then(|l| l.first().cloned()) else {
            return false;
        };
        let mut value: [u8; 8] = rng.gen();
        while value[..] == *front {
            value = rng.gen();
        }
        let mac = random_tag(queue.context().mac().width(), rng);
        let r = queue.region_mut();
        r.tamper(e.data.start, &value).is_ok() && r.tamper(e.mac.start, &mac.to_le_bytes()).is_ok()
    }
}

/// Copies a later element and its genuine MAC over the front entry.
#[derive(Debug, Clone, Default)]
pub struct ReplayData {
    seen: Vec<([u8; 8], MacTag)>,
    pending: Option<[u8; 8]>,
}

impl QueueDataAdversary for ReplayData {
    fn name(&self) -> &'static str {
        "replay"
    }

    fn choose(&mut self, _: u64, rng: &mut ChaCha8Rng) -> [u8; 8] {
        let v = rng.gen();
        self.pending = Some(v);
        v
    }

    fn receive(&mut self, element_mac: MacTag) {
        if let Some(v) = self.pending.take() {
            self.seen.push((v, element_mac));
        }
    }

    fn attack(&mut self, queue: &mut AuthQueue, front: &[u8], _: &mut ChaCha8Rng) -> bool {
        let Some(&(value, mac)) = self.seen.iter().rev().find(|(v, _)| v[..] != *front) else {
            return false;
        };
        let Some(e) = queue.entry_layouts().and_then(|l| l.first().cloned()) else {
            return false;
        };
        let r = queue.region_mut();
        r.tamper(e.data.start, &value).is_ok() && r.tamper(e.mac.start, &mac.to_le_bytes()).is_ok()
    }
}

/// The data game on a real [`AuthQueue`] whose MAC is a lazily sampled
/// random oracle (`ro:b`). Predicted rate: `2^-b`.
pub fn run_queue_data_game<A: QueueDataAdversary>(cfg: &GameConfig, adversary: &A) -> Result<GameReport> {
    cfg.validate()?;
    let wins = count_wins(cfg, |seed, rng| {
        let ctx = trial_context(Backend::RandomOracle(cfg.b), seed)?;
        let mut queue = AuthQueue::new(&ctx)?;
        let mut adv = adversary.clone();
        let mut enqueued = std::collections::VecDeque::new();
        for round in 0..cfg.q {
            let x = adv.choose(round, rng);
            queue.enqueue(&x)?;
            enqueued.push_back(x);
            adv.receive(back_mac(&queue).ok_or(Error::Mac)?);
        }
        queue_attack_phase(&mut queue, &mut enqueued, |q, v| adv.attack(q, v, rng))
    })?;
    Ok(GameReport::new(
        &format!("queue-data/{}", adversary.name()),
        cfg,
        wins,
        2f64.powi(-(cfg.b as i32)),
    ))
}
