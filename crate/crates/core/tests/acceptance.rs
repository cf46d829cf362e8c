//! Acceptance gate. Runs every criterion at its stated scale and prints one
//! PASS/FAIL line per criterion; exits non-zero if any fails.

use std::collections::{BTreeMap, VecDeque};
use std::ops::Range;
use std::rc::Rc;
use std::sync::Arc;
use std::time::Instant;

use authds::bench::{run_bench, BenchConfig, BenchReport, Mode, Structure};
use authds::games::{
    self, collision_probability, collision_probability_exact, GameConfig, GameReport, GuessData, RandomIndex,
    RandomSubstitution, ReplayData, ReplayIndex, ReplayStack,
};
use authds::{
    AdversaryScript, AuthQueue, AuthRbTree, AuthStack, Authenticator, Backend, Domain, Error, MacKey, MerkleStore,
    SecureContext, TamperAction, TamperRegion, Trigger,
};
use num::rational::BigRational;
use num::{BigInt, ToPrimitive};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = std::result::Result<String, String>;

fn ctx(backend: &str, seed: u64) -> Rc<SecureContext> {
    SecureContext::from_config(backend, seed).unwrap()
}

fn value(rng: &mut ChaCha8Rng) -> Vec<u8> {
    let n = rng.gen_range(0..24);
    (0..n).map(|_| rng.gen()).collect()
}

// ---- 1. oracle equivalence ------------------------------------------------

fn oracle_stack(ops: usize) -> Outcome {
    let c = ctx("cmac128", 11);
    let mut s = AuthStack::new(&c).map_err(|e| e.to_string())?;
    let mut o: Vec<Vec<u8>> = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for i in 0..ops {
        let r = rng.gen_range(0..10);
        let ok = match r {
            0..=3 => {
                let v = value(&mut rng);
                s.push(&v).map_err(|e| format!("op {i}: {e}"))?;
                o.push(v);
                true
            }
            4..=6 if !o.is_empty() => s.pop().map_err(|e| format!("op {i}: {e}"))? == o.pop().unwrap(),
            7 if !o.is_empty() => s.top().map_err(|e| format!("op {i}: {e}"))? == *o.last().unwrap(),
            8 if !o.is_empty() => {
                let v = value(&mut rng);
                s.replace_top(&v).map_err(|e| format!("op {i}: {e}"))?;
                *o.last_mut().unwrap() = v;
                true
            }
            _ => s.size().map_err(|e| format!("op {i}: {e}"))? == o.len() as u64,
        };
        if !ok {
            return Err(format!("stack diverged at op {i}"));
        }
    }
    Ok(format!("{ops} ops"))
}

fn oracle_queue(ops: usize) -> Outcome {
    let c = ctx("cmac128", 12);
    let mut q = AuthQueue::new(&c).map_err(|e| e.to_string())?;
    let mut o: VecDeque<Vec<u8>> = VecDeque::new();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for i in 0..ops {
        let e = |e: Error| format!("op {i}: {e}");
        let ok = match rng.gen_range(0..10) {
            0..=3 => {
                let v = value(&mut rng);
                q.enqueue(&v).map_err(e)?;
                o.push_back(v);
                true
            }
            4..=6 if !o.is_empty() => {
                let front = q.front().map_err(e)?;
                q.dequeue().map_err(e)?;
                front == o.pop_front().unwrap()
            }
            7 if !o.is_empty() => q.front().map_err(e)? == *o.front().unwrap(),
            8 if !o.is_empty() => q.back().map_err(e)? == *o.back().unwrap(),
            _ => q.size().map_err(e)? == o.len() as u64 && q.is_empty().map_err(e)? == o.is_empty(),
        };
        if !ok {
            return Err(format!("queue diverged at op {i}"));
        }
    }
    Ok(format!("{ops} ops"))
}

fn oracle_tree(ops: usize) -> Outcome {
    let c = ctx("cmac128", 13);
    let mut t = AuthRbTree::new(&c).map_err(|e| e.to_string())?;
    let mut o: BTreeMap<u64, Vec<u8>> = BTreeMap::new();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for i in 0..ops {
        let e = |e: Error| format!("op {i}: {e}");
        let key: u64 = rng.gen_range(0..2000);
        let ok = match rng.gen_range(0..10) {
            0..=3 if !o.contains_key(&key) => {
                let v = value(&mut rng);
                t.insert(key, &v).map_err(e)?;
                o.insert(key, v);
                true
            }
            4..=5 if !o.is_empty() => {
                let k = *o.range(key..).next().or_else(|| o.iter().next()).unwrap().0;
                t.erase(k).map_err(e)?;
                o.remove(&k);
                true
            }
            6 => t.contains_key(key).map_err(e)? == o.contains_key(&key),
            7 if !o.is_empty() => {
                let (k, v) = o.first_key_value().unwrap();
                t.minimum().map_err(e)? == (*k, v.clone())
            }
            8 if !o.is_empty() => {
                let (k, v) = o.last_key_value().unwrap();
                t.maximum().map_err(e)? == (*k, v.clone())
            }
            _ => match o.get(&key) {
                Some(v) => t.find(key).map_err(e)? == *v,
                None => t.len() == o.len() as u64,
            },
        };
        if !ok {
            return Err(format!("tree diverged at op {i}"));
        }
    }
    t.audit().map_err(|e| format!("final audit: {e}"))?;
    Ok(format!("{ops} ops, final size {}", o.len()))
}

// ---- 2. exhaustive single-byte tampering ------------------------------------

#[derive(Default)]
struct SweepStats {
    cases: u64,
    detected: u64,
    /// Suite saw no error and produced the untampered outputs.
    unchanged: u64,
    /// Suite saw no error but produced different outputs.
    missed: u64,
    other_errors: u64,
    /// Mutations of bytes holding live state that went unnoticed.
    live_unnoticed: u64,
    first_problem: Option<String>,
}

impl SweepStats {
    fn ok(&self) -> bool {
        self.missed == 0 && self.other_errors == 0 && self.live_unnoticed == 0
    }

    fn merge(&mut self, o: SweepStats) {
        self.cases += o.cases;
        self.detected += o.detected;
        self.unchanged += o.unchanged;
        self.missed += o.missed;
        self.other_errors += o.other_errors;
        self.live_unnoticed += o.live_unnoticed;
        if self.first_problem.is_none() {
            self.first_problem = o.first_problem;
        }
    }
}

/// Rebuilds a structure for every (offset, xor mask) pair, applies the byte
/// as a between-operations tamper, and runs `suite`.
fn sweep<S>(
    c: &Rc<SecureContext>,
    build: impl Fn(&Rc<SecureContext>) -> S,
    region: impl Fn(&mut S) -> &mut TamperRegion,
    live: impl Fn(&S) -> Vec<Range<u64>>,
    suite: impl Fn(&mut S) -> authds::Result<Vec<Vec<u8>>>,
) -> SweepStats {
    let mut stats = SweepStats::default();
    let mut s = build(c);
    let live = live(&s);
    let region_len = region(&mut s).len();
    let expected = suite(&mut s).expect("untampered suite succeeds");
    drop(s);
    for off in 0..region_len {
        let is_live = live.iter().any(|r| r.contains(&off));
        // Nonces differ between rebuilds, so mutate relative to each instance.
        for mask in 1..=255u8 {
            stats.cases += 1;
            let mut s = build(c);
            let v = region(&mut s).as_bytes()[off as usize] ^ mask;
            let script = AdversaryScript::slow(vec![TamperAction::new(Trigger::BetweenOps, off, vec![v])]).unwrap();
            region(&mut s).fire_between_ops(&script).unwrap();
            let what = match suite(&mut s) {
                Err(Error::Mac) => {
                    stats.detected += 1;
                    continue;
                }
                Err(e) => {
                    stats.other_errors += 1;
                    format!("error {e}")
                }
                Ok(out) if out == expected => {
                    stats.unchanged += 1;
                    if !is_live {
                        continue;
                    }
                    stats.live_unnoticed += 1;
                    "live byte unnoticed".to_string()
                }
                Ok(_) => {
                    stats.missed += 1;
                    "outputs changed without detection".to_string()
                }
            };
            if stats.first_problem.is_none() {
                stats.first_problem = Some(format!("offset {off} := {v:#04x}: {what}"));
            }
        }
    }
    stats
}

fn stack_sweep(max_depth: usize) -> SweepStats {
    let c = ctx("cmac128", 21);
    let mut total = SweepStats::default();
    for n in 0..=max_depth {
        let st = sweep(
            &c,
            |c| {
                let mut s = AuthStack::new(c).unwrap();
                for i in 0..n {
                    s.push(&[i as u8 + 1; 3]).unwrap();
                }
                s
            },
            |s| s.region_mut(),
            |s| {
                let mut r = vec![0..s.header_len()];
                for e in s.entry_layouts().unwrap() {
                    r.extend([e.data, e.len, e.prev_mac]);
                }
                r
            },
            |s| {
                let mut out = vec![s.size()?.to_le_bytes().to_vec()];
                if n > 0 {
                    out.push(s.top()?);
                }
                s.push(b"probe")?;
                out.push(s.pop()?);
                while s.size()? > 0 {
                    out.push(s.pop()?);
                }
                Ok(out)
            },
        );
        total.merge(st);
    }
    total
}

fn queue_sweep(max_len: usize) -> SweepStats {
    let c = ctx("cmac128", 22);
    let mut total = SweepStats::default();
    for n in 0..=max_len {
        let st = sweep(
            &c,
            |c| {
                let mut q = AuthQueue::new(c).unwrap();
                // One dequeue first so indices do not start at their initial values.
                q.enqueue(b"gone").unwrap();
                q.dequeue().unwrap();
                for i in 0..n {
                    q.enqueue(&[i as u8 + 1; 3]).unwrap();
                }
                q
            },
            |q| q.region_mut(),
            |q| {
                let entries = q.entry_layouts().unwrap();
                // An empty queue's pointers only pick where in free space the
                // next entry goes; the enqueue rewrites front and back from it.
                let mut r = if entries.is_empty() {
                    vec![0..q.front_ptr_off()]
                } else {
                    vec![0..q.header_len()]
                };
                for e in entries {
                    r.extend([e.len, e.mac, e.data]);
                }
                r
            },
            |q| {
                let mut out = vec![q.size()?.to_le_bytes().to_vec()];
                if n > 0 {
                    out.push(q.front()?);
                    out.push(q.back()?);
                }
                q.enqueue(b"probe")?;
                out.push(q.back()?);
                while q.size()? > 0 {
                    out.push(q.front()?);
                    q.dequeue()?;
                }
                Ok(out)
            },
        );
        total.merge(st);
    }
    total
}

fn tree_sweep(max_nodes: usize) -> SweepStats {
    let c = ctx("cmac128", 23);
    let mut total = SweepStats::default();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for n in 0..=max_nodes {
        let mut keys: Vec<u64> = (0..n as u64).map(|k| k * 10).collect();
        for i in (1..keys.len()).rev() {
            keys.swap(i, rng.gen_range(0..=i));
        }
        let sorted = {
            let mut k = keys.clone();
            k.sort();
            k
        };
        let st = sweep(
            &c,
            |c| {
                let mut t = AuthRbTree::new(c).unwrap();
                for &k in &keys {
                    t.insert(k, &k.to_le_bytes()[..2]).unwrap();
                }
                t
            },
            |t| t.region_mut(),
            |t| {
                let mut r: Vec<Range<u64>> = t.header_ranges().into_iter().collect();
                for off in t.node_offsets().unwrap() {
                    let l = t.node_layout(off).unwrap();
                    r.extend([l.key, l.color, l.left, l.right, l.parent, l.mac, l.value_len, l.value]);
                }
                r
            },
            |t| {
                let mut out = Vec::new();
                if n > 0 {
                    let (k, v) = t.minimum()?;
                    out.push(k.to_le_bytes().to_vec());
                    out.push(v);
                    let (k, v) = t.maximum()?;
                    out.push(k.to_le_bytes().to_vec());
                    out.push(v);
                }
                for &k in &sorted {
                    out.push(t.find(k)?);
                }
                out.push(vec![t.contains_key(5)? as u8]);
                t.insert(5, b"probe")?;
                t.erase(5)?;
                for &k in &sorted {
                    t.erase(k)?;
                }
                Ok(out)
            },
        );
        total.merge(st);
    }
    total
}

fn sweep_outcome(name: &str, st: SweepStats) -> Outcome {
    let line = format!(
        "{name}: {} mutations, {} detected, {} dead-byte no-ops, {} missed, {} other errors, {} live unnoticed",
        st.cases, st.detected, st.unchanged, st.missed, st.other_errors, st.live_unnoticed
    );
    if st.ok() {
        Ok(line)
    } else {
        Err(format!("{line}; first: {}", st.first_problem.unwrap_or_default()))
    }
}

// ---- 3. collision formula -----------------------------------------------------

/// Counts sequences of `q` values over `2^b` that contain a repeat.
fn brute_force_collisions(b: u32, q: u32) -> (u64, u64) {
    let n = 1u64 << b;
    let total = n.pow(q);
    let mut hits = 0;
    let mut digits = vec![0u64; q as usize];
    for _ in 0..total {
        let mut seen = 0u64;
        if digits.iter().any(|&d| {
            let bit = 1 << d;
            let dup = seen & bit != 0;
            seen |= bit;
            dup
        }) {
            hits += 1;
        }
        for d in digits.iter_mut() {
            *d += 1;
            if *d < n {
                break;
            }
            *d = 0;
        }
    }
    (hits, total)
}

fn collision_formula() -> Outcome {
    for b in 1..=3u32 {
        for q in 0..=(1u32 << b) {
            let (hits, total) = brute_force_collisions(b, q);
            let exact = BigRational::new(BigInt::from(hits), BigInt::from(total));
            if collision_probability_exact(b, q as u64) != exact {
                return Err(format!("exact formula differs from enumeration at b={b} q={q}"));
            }
            let f = collision_probability(b, q as u64);
            if (f - exact.to_f64().unwrap()).abs() > 1e-12 {
                return Err(format!("float formula off at b={b} q={q}"));
            }
        }
    }
    let mut notes = vec!["b<=3 enumeration exact".to_string()];
    for q in [5u64, 10, 20] {
        let r = games::run_mac_collision(&GameConfig::new(8, q, 10_000, 31 + q)).unwrap();
        let p = collision_probability(8, q);
        let se = (p * (1.0 - p) / 10_000.0).sqrt();
        let z = (r.empirical_rate - p) / se;
        notes.push(format!("q={q} {:.4} vs {:.4} ({z:+.2} SE)", r.empirical_rate, p));
        if z.abs() > 3.0 {
            return Err(notes.join("; "));
        }
    }
    let mean = games::mean_samples_to_collision(8, 10_000, 41).unwrap();
    let target = (128.0 * std::f64::consts::PI).sqrt();
    notes.push(format!("first-collision mean {mean:.2} vs {target:.2}"));
    if (mean / target - 1.0).abs() > 0.05 {
        return Err(notes.join("; "));
    }
    Ok(notes.join("; "))
}

// ---- 4. game bounds -------------------------------------------------------------

fn game_bounds(trials: u64) -> Outcome {
    let mut checked = 0;
    let mut worst: f64 = f64::NEG_INFINITY;
    for b in [4u32, 8, 12] {
        for q in [2u64, 8, 32] {
            let cfg = GameConfig::new(b, q, trials, 1000 + b as u64 * 100 + q);
            let reports: Vec<GameReport> = vec![
                games::run_stack_game(&cfg, &ReplayStack::default()).unwrap(),
                games::run_stack_game(&cfg, &RandomSubstitution).unwrap(),
                games::run_queue_index_game(&cfg, &ReplayIndex::default()).unwrap(),
                games::run_queue_index_game(&cfg, &RandomIndex).unwrap(),
            ];
            for r in reports {
                checked += 1;
                worst = worst.max(r.empirical_rate - (r.predicted_rate + 3.0 * r.ci95));
                if !r.within_bound() {
                    return Err(format!(
                        "{} b={b} q={q}: {:.4} > {:.4} + 3*{:.4}",
                        r.game, r.empirical_rate, r.predicted_rate, r.ci95
                    ));
                }
            }
        }
        for adv in ["guess", "replay"] {
            let cfg = GameConfig::new(b, 8, trials, 2000 + b as u64);
            let r = if adv == "guess" {
                games::run_queue_data_game(&cfg, &GuessData).unwrap()
            } else {
                games::run_queue_data_game(&cfg, &ReplayData::default()).unwrap()
            };
            checked += 1;
            if (r.empirical_rate - r.predicted_rate).abs() > 3.0 * r.ci95 {
                return Err(format!(
                    "{} b={b}: {:.5} not within 3*{:.5} of {:.5}",
                    r.game, r.empirical_rate, r.ci95, r.predicted_rate
                ));
            }
        }
    }
    let cfg = GameConfig::new(128, 8, 1000, 77);
    let strong = [
        games::run_mac_collision(&cfg).unwrap(),
        games::run_stack_game(&cfg, &ReplayStack::default()).unwrap(),
        games::run_stack_game(&cfg, &RandomSubstitution).unwrap(),
        games::run_queue_index_game(&cfg, &ReplayIndex::default()).unwrap(),
        games::run_queue_index_game(&cfg, &RandomIndex).unwrap(),
        games::run_queue_data_game(&cfg, &GuessData).unwrap(),
        games::run_queue_data_game(&cfg, &ReplayData::default()).unwrap(),
    ];
    if let Some(r) = strong.iter().find(|r| r.wins > 0) {
        return Err(format!("{} won {} times at b=128", r.game, r.wins));
    }
    Ok(format!(
        "{checked} grid reports within bound (max excess {worst:.4}), 7 games with 0 wins at b=128"
    ))
}

// ---- 5. complexity ------------------------------------------------------------------

fn per_op(c: &Rc<SecureContext>, f: impl FnOnce()) -> u64 {
    let before = c.mac().invocations();
    f();
    c.mac().invocations() - before
}

fn complexity() -> Outcome {
    let mut notes = Vec::new();
    // Stack and queue: costs of each operation at sizes 10^3 and 10^6.
    let mut stack_costs = Vec::new();
    let mut queue_costs = Vec::new();
    for size in [1_000u64, 1_000_000] {
        let c = ctx("cmac128", 51);
        let mut s = AuthStack::new(&c).unwrap();
        let mut q = AuthQueue::new(&c).unwrap();
        for i in 0..size {
            s.push(&i.to_le_bytes()).unwrap();
            q.enqueue(&i.to_le_bytes()).unwrap();
        }
        stack_costs.push([
            per_op(&c, || s.push(b"x").unwrap()),
            per_op(&c, || drop(s.top().unwrap())),
            per_op(&c, || drop(s.pop().unwrap())),
            per_op(&c, || { s.size().unwrap(); }),
        ]);
        queue_costs.push([
            per_op(&c, || q.enqueue(b"x").unwrap()),
            per_op(&c, || drop(q.front().unwrap())),
            per_op(&c, || drop(q.back().unwrap())),
            per_op(&c, || q.dequeue().unwrap()),
            per_op(&c, || { q.size().unwrap(); }),
        ]);
    }
    if stack_costs[0] != stack_costs[1] || queue_costs[0] != queue_costs[1] {
        return Err(format!("costs vary with size: stack {stack_costs:?} queue {queue_costs:?}"));
    }
    notes.push(format!("stack {:?} queue {:?} at both sizes", stack_costs[0], queue_costs[0]));

    // Tree: node and header MACs per operation against 4 log2(n+1).
    let c = ctx("cmac128", 52);
    let mut t = AuthRbTree::new(&c).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(53);
    let mut keys = Vec::new();
    let tree_macs = || c.mac().invocations_for(Domain::RbNode) + c.mac().invocations_for(Domain::RbHeader);
    let mut worst: f64 = 0.0;
    let mut check = |before_n: u64, after_n: u64, cost: u64| -> Result<(), String> {
        let n = before_n.max(after_n);
        let bound = 4.0 * ((n + 1) as f64).log2();
        worst = worst.max(cost as f64 / bound);
        if cost as f64 > bound {
            Err(format!("tree op cost {cost} > {bound:.2} at n={n}"))
        } else {
            Ok(())
        }
    };
    for i in 0..4000u64 {
        let n = t.len();
        let m0 = tree_macs();
        if i < 2500 && (keys.is_empty() || rng.gen_bool(0.7)) {
            let k: u64 = rng.gen();
            t.insert(k, b"v").unwrap();
            keys.push(k);
        } else if rng.gen_bool(0.3) {
            let k = keys[rng.gen_range(0..keys.len())];
            t.find(k).unwrap();
        } else {
            let k = keys.swap_remove(rng.gen_range(0..keys.len()));
            t.erase(k).unwrap();
        }
        check(n, t.len(), tree_macs() - m0)?;
        if keys.is_empty() {
            break;
        }
    }
    notes.push(format!("tree max cost/bound {worst:.3}"));

    // Safe storage: every read and write costs exactly depth MACs.
    for cap in [1u64, 2, 8, 64, 1024] {
        let mac = Arc::new(Authenticator::new(&MacKey::generate(Some(cap)), Backend::Cmac128).unwrap());
        let mut st = MerkleStore::with_capacity(mac.clone(), cap);
        let h = st.alloc().unwrap();
        let depth = st.depth() as u64;
        let expect = (cap as f64).log2() as u64 + 1;
        let m0 = mac.invocations();
        st.read(h).unwrap();
        let read = mac.invocations() - m0;
        let m0 = mac.invocations();
        st.write(h, &authds::MacTag::zero(128)).unwrap();
        let write = mac.invocations() - m0;
        if depth != expect || read != depth || write != depth {
            return Err(format!("capacity {cap}: depth {depth}, read {read}, write {write}"));
        }
    }
    notes.push("safe storage read/write == depth for capacities 1..1024".into());
    Ok(notes.join("; "))
}

// ---- 6. benchmark harness -------------------------------------------------------------

fn bench_harness() -> Outcome {
    let mut notes = Vec::new();
    for s in [Structure::Stack, Structure::Queue, Structure::Rbtree] {
        let cfg = BenchConfig::new(s, "cmac128", Mode::Auth, 61).with_size(500, 100);
        let r = run_bench(&cfg).map_err(|e| e.to_string())?;
        let json = serde_json::to_string(&r).unwrap();
        let v: serde_json::Value = serde_json::from_str(&json).unwrap();
        for key in [
            "structure",
            "backend",
            "mode",
            "ops",
            "runs",
            "seed",
            "op_count",
            "mac_invocations",
            "ci_undefined",
            "subject",
            "baseline",
            "ratio",
        ] {
            if v.get(key).is_none() {
                return Err(format!("{s}: report missing {key}"));
            }
        }
        let back: BenchReport = serde_json::from_str(&json).map_err(|e| e.to_string())?;
        if back != r || r.subject.ci95_ns.is_none() || r.op_count != cfg.op_count() {
            return Err(format!("{s}: report does not round-trip"));
        }
        if r.ratio.is_nan() || r.ratio <= 1.0 {
            return Err(format!("{s}: ratio {:.2}", r.ratio));
        }
        notes.push(format!("{s} ratio {:.0}x", r.ratio));
    }
    Ok(notes.join(", "))
}

fn main() {
    let criteria: Vec<(&str, Box<dyn Fn() -> Outcome>)> = vec![
        (
            "1 oracle equivalence",
            Box::new(|| {
                Ok([oracle_stack(100_000)?, oracle_queue(100_000)?, oracle_tree(10_000)?].join(" / "))
            }),
        ),
        (
            "2 tamper detection",
            Box::new(|| {
                Ok([
                    sweep_outcome("stack<=8", stack_sweep(8))?,
                    sweep_outcome("queue<=8", queue_sweep(8))?,
                    sweep_outcome("tree<=15", tree_sweep(15))?,
                ]
                .join(" / "))
            }),
        ),
        ("3 collision formula", Box::new(collision_formula)),
        ("4 game bounds", Box::new(|| game_bounds(2_000))),
        ("5 complexity", Box::new(complexity)),
        ("6 benchmark harness", Box::new(bench_harness)),
    ];
    let mut failed = 0;
    for (name, run) in &criteria {
        let t = Instant::now();
        let outcome = run();
        let secs = t.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS [{name}] ({secs:.1}s) {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL [{name}] ({secs:.1}s) {detail}");
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
