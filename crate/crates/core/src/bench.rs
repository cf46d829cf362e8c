//! Timing harness comparing the authenticated containers against `Vec`,
//! `VecDeque` and `BTreeMap` on an insert/remove workload.

use std::collections::{BTreeMap, VecDeque};
use std::fmt::{self, Write as _};
use std::hint::black_box;
use std::str::FromStr;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::context::SecureContext;
use crate::error::{Error, Result};
use crate::queue::AuthQueue;
use crate::rbtree::AuthRbTree;
use crate::stack::AuthStack;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Structure {
    Stack,
    Queue,
    Rbtree,
}

impl FromStr for Structure {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "stack" => Ok(Structure::Stack),
            "queue" => Ok(Structure::Queue),
            "rbtree" => Ok(Structure::Rbtree),
            _ => Err(Error::Config(format!("unknown structure {s:?}"))),
        }
    }
}

impl fmt::Display for Structure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Structure::Stack => "stack",
            Structure::Queue => "queue",
            Structure::Rbtree => "rbtree",
        })
    }
}

/// `Auth` times the authenticated container against the baseline;
/// `Baseline` times the baseline against itself.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Auth,
    Baseline,
}

impl FromStr for Mode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "auth" | "authenticated" => Ok(Mode::Auth),
            "baseline" => Ok(Mode::Baseline),
            _ => Err(Error::Config(format!("unknown mode {s:?}"))),
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Auth => "auth",
            Mode::Baseline => "baseline",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BenchConfig {
    pub structure: Structure,
    pub backend: String,
    /// Insertions per run; the same number of removals follows.
    pub ops: u64,
    pub runs: u64,
    pub mode: Mode,
    pub seed: u64,
}

impl BenchConfig {
    pub fn new(structure: Structure, backend: &str, mode: Mode, seed: u64) -> Self {
        BenchConfig {
            structure,
            backend: backend.to_string(),
            ops: 500,
            runs: 10_000,
            mode,
            seed,
        }
    }

    pub fn with_size(mut self, ops: u64, runs: u64) -> Self {
        self.ops = ops;
        self.runs = runs;
        self
    }

    fn validate(&self) -> Result<()> {
        if self.ops == 0 || self.runs == 0 {
            return Err(Error::Config("ops and runs must be at least 1".into()));
        }
        self.backend.parse::<crate::mac::Backend>()?;
        Ok(())
    }

    /// Exact number of container operations in one run.
    pub fn op_count(&self) -> u64 {
        match self.structure {
            Structure::Stack | Structure::Queue => 2 * self.ops,
            Structure::Rbtree => 3 * self.ops,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub units: String,
    /// Mean wall time of one run's operation loop.
    pub mean_ns: f64,
    /// Normal-approximation half-width; `None` when there is a single run.
    pub ci95_ns: Option<f64>,
    pub per_op_ns: f64,
}

impl Timing {
    fn from_samples(samples: &[f64], op_count: u64) -> Self {
        let n = samples.len() as f64;
        let mean = samples.iter().sum::<f64>() / n;
        let ci = (samples.len() > 1).then(|| {
            let var = samples.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (n - 1.0);
            1.96 * (var / n).sqrt()
        });
        Timing {
            units: "ns".into(),
            mean_ns: mean,
            ci95_ns: ci,
            per_op_ns: mean / op_count as f64,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub structure: Structure,
    pub backend: String,
    pub mode: Mode,
    pub ops: u64,
    pub runs: u64,
    pub seed: u64,
    pub op_count: u64,
    /// MAC invocations in one run of the subject (0 for a baseline subject).
    pub mac_invocations: u64,
    pub ci_undefined: bool,
    pub subject: Timing,
    pub baseline: Timing,
    /// `subject.mean_ns / baseline.mean_ns`.
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixReport {
    pub scenarios: Vec<BenchReport>,
    pub geometric_mean: f64,
}

struct Workload {
    values: Vec<[u8; 8]>,
    keys: Vec<u64>,
}

impl Workload {
    fn new(cfg: &BenchConfig) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let values = (0..cfg.ops).map(|_| rng.gen()).collect();
        let mut seen = std::collections::HashSet::new();
        let mut keys = Vec::with_capacity(cfg.ops as usize);
        while (keys.len() as u64) < cfg.ops {
            let k: u64 = rng.gen();
            if seen.insert(k) {
                keys.push(k);
            }
        }
        Workload { values, keys }
    }
}

/// Runs one subject instance; returns (elapsed ns, ops done, MACs used).
fn run_auth(cfg: &BenchConfig, w: &Workload, run: u64) -> Result<(f64, u64, u64)> {
    let ctx = SecureContext::from_config(&cfg.backend, cfg.seed ^ run)?;
    let mut done = 0u64;
    let (elapsed, macs) = match cfg.structure {
        Structure::Stack => {
            let mut s = AuthStack::new(&ctx)?;
            let m0 = ctx.mac().invocations();
            let t = Instant::now();
            for v in &w.values {
                s.push(v)?;
                done += 1;
            }
            for _ in &w.values {
                black_box(s.pop()?);
                done += 1;
            }
            (t.elapsed(), ctx.mac().invocations() - m0)
        }
        Structure::Queue => {
            let mut q = AuthQueue::new(&ctx)?;
            let m0 = ctx.mac().invocations();
            let t = Instant::now();
            for v in &w.values {
                q.enqueue(v)?;
                done += 1;
            }
            for _ in &w.values {
                black_box(q.front()?);
                q.dequeue()?;
                done += 1;
            }
            (t.elapsed(), ctx.mac().invocations() - m0)
        }
        Structure::Rbtree => {
            let mut tr = AuthRbTree::new(&ctx)?;
            let m0 = ctx.mac().invocations();
            let t = Instant::now();
            for (k, v) in w.keys.iter().zip(&w.values) {
                tr.insert(*k, v)?;
                done += 1;
            }
            for k in &w.keys {
                black_box(tr.find(*k)?);
                done += 1;
            }
            for k in &w.keys {
                tr.erase(*k)?;
                done += 1;
            }
            (t.elapsed(), ctx.mac().invocations() - m0)
        }
    };
    Ok((elapsed.as_nanos() as f64, done, macs))
}

fn run_baseline(cfg: &BenchConfig, w: &Workload) -> (f64, u64) {
    let mut done = 0u64;
    let elapsed = match cfg.structure {
        Structure::Stack => {
            let mut s: Vec<Vec<u8>> = Vec::new();
            let t = Instant::now();
            for v in &w.values {
                s.push(v.to_vec());
                done += 1;
            }
            for _ in &w.values {
                black_box(s.pop());
                done += 1;
            }
            t.elapsed()
        }
        Structure::Queue => {
            let mut q: VecDeque<Vec<u8>> = VecDeque::new();
            let t = Instant::now();
            for v in &w.values {
                q.push_back(v.to_vec());
                done += 1;
            }
            for _ in &w.values {
                black_box(q.pop_front());
                done += 1;
            }
            t.elapsed()
        }
        Structure::Rbtree => {
            let mut m: BTreeMap<u64, Vec<u8>> = BTreeMap::new();
            let t = Instant::now();
            for (k, v) in w.keys.iter().zip(&w.values) {
                m.insert(*k, v.to_vec());
                done += 1;
            }
            for k in &w.keys {
                black_box(m.get(k));
                done += 1;
            }
            for k in &w.keys {
                m.remove(k);
                done += 1;
            }
            t.elapsed()
        }
    };
    (elapsed.as_nanos() as f64, done)
}

fn check_count(cfg: &BenchConfig, done: u64) -> Result<()> {
    if done != cfg.op_count() {
        return Err(Error::Invariant(format!(
            "run performed {done} ops, expected {}",
            cfg.op_count()
        )));
    }
    Ok(())
}

/// Times `cfg.runs` runs of subject and baseline, interleaved so that drift
/// affects both equally.
pub fn run_bench(cfg: &BenchConfig) -> Result<BenchReport> {
    cfg.validate()?;
    let w = Workload::new(cfg);
    let mut subject = Vec::with_capacity(cfg.runs as usize);
    let mut baseline = Vec::with_capacity(cfg.runs as usize);
    let mut macs = None;
    for run in 0..cfg.runs {
        let mut do_subject = || -> Result<()> {
            let ns = match cfg.mode {
                Mode::Auth => {
                    let (ns, done, m) = run_auth(cfg, &w, run)?;
                    check_count(cfg, done)?;
                    match macs {
                        None => macs = Some(m),
                        Some(prev) if prev != m => {
                            return Err(Error::Invariant(format!("MAC count changed between runs: {prev} vs {m}")))
                        }
                        _ => {}
                    }
                    ns
                }
                Mode::Baseline => {
                    let (ns, done) = run_baseline(cfg, &w);
                    check_count(cfg, done)?;
                    ns
                }
            };
            subject.push(ns);
            Ok(())
        };
        let mut do_baseline = || -> Result<()> {
            let (ns, done) = run_baseline(cfg, &w);
            check_count(cfg, done)?;
            baseline.push(ns);
            Ok(())
        };
        if run % 2 == 0 {
            do_subject()?;
            do_baseline()?;
        } else {
            do_baseline()?;
            do_subject()?;
        }
    }
    let op_count = cfg.op_count();
    let subject = Timing::from_samples(&subject, op_count);
    let baseline = Timing::from_samples(&baseline, op_count);
    // A zero reading only happens with a coarse clock; clamp so the ratio stays finite.
    let ratio = subject.mean_ns.max(1.0) / baseline.mean_ns.max(1.0);
    Ok(BenchReport {
        structure: cfg.structure,
        backend: cfg.backend.clone(),
        mode: cfg.mode,
        ops: cfg.ops,
        runs: cfg.runs,
        seed: cfg.seed,
        op_count,
        mac_invocations: macs.unwrap_or(0),
        ci_undefined: cfg.runs == 1,
        subject,
        baseline,
        ratio,
    })
}

/// `exp(mean(ln r))`.
pub fn geometric_mean(ratios: &[f64]) -> f64 {
    (ratios.iter().map(|r| r.ln()).sum::<f64>() / ratios.len() as f64).exp()
}

pub fn run_matrix(configs: &[BenchConfig]) -> Result<MatrixReport> {
    if configs.is_empty() {
        return Err(Error::Config("matrix needs at least one scenario".into()));
    }
    let scenarios = configs.iter().map(run_bench).collect::<Result<Vec<_>>>()?;
    Ok(MatrixReport::from_scenarios(scenarios))
}

impl MatrixReport {
    pub fn from_scenarios(scenarios: Vec<BenchReport>) -> Self {
        let ratios: Vec<f64> = scenarios.iter().map(|s| s.ratio).collect();
        MatrixReport {
            geometric_mean: geometric_mean(&ratios),
            scenarios,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "structure,backend,mode,ops,runs,seed,op_count,mac_invocations,\
             subject_mean_ns,subject_ci95_ns,baseline_mean_ns,baseline_ci95_ns,ratio,geometric_mean\n",
        );
        let ci = |c: Option<f64>| c.map(|c| c.to_string()).unwrap_or_default();
        for s in &self.scenarios {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
                s.structure,
                s.backend,
                s.mode,
                s.ops,
                s.runs,
                s.seed,
                s.op_count,
                s.mac_invocations,
                s.subject.mean_ns,
                ci(s.subject.ci95_ns),
                s.baseline.mean_ns,
                ci(s.baseline.ci95_ns),
                s.ratio,
                self.geometric_mean
            );
        }
        out
    }
}
