//! Benchmark workloads over catalog structures, key distributions, thread
//! pinning and IR dumps.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Barrier, OnceLock};
use std::time::Instant;

use rand::rngs::SmallRng;
use rand::{Rng, SeedableRng};

use crate::analysis::analyze;
use crate::catalog::{entry, CatalogEntry, CatalogError, CatalogParams, Flavor};
use crate::cc::make_concurrent;
use crate::executor::{ExecError, Instance};
use crate::optimizer::optimize;
use crate::runtime::Stats;
use crate::spec::dump_spec;
use crate::Value;

#[derive(Debug, thiserror::Error)]
pub enum BenchError {
    #[error("usage: {0}")]
    Usage(String),
    #[error("sanity check failed: {0}")]
    Assertion(String),
    #[error(transparent)]
    Catalog(#[from] CatalogError),
    #[error(transparent)]
    Exec(#[from] ExecError),
}

/// Ranks of a power-law distribution over `0..n`; rank 0 is the most
/// frequent. Domains up to [`Zipfian::TABLE_LIMIT`] sample by inverting the
/// exact cumulative distribution, larger ones with the closed-form YCSB
/// approximation.
#[derive(Debug)]
pub struct Zipfian {
    n: u64,
    theta: f64,
    zeta_n: f64,
    cdf: Option<Vec<f64>>,
    alpha: f64,
    eta: f64,
    zeta2: f64,
}

fn zeta(n: u64, theta: f64) -> f64 {
    (1..=n).map(|i| (i as f64).powf(-theta)).sum()
}

impl Zipfian {
    pub const TABLE_LIMIT: u64 = 1 << 22;

    pub fn new(n: u64, theta: f64) -> Result<Self, BenchError> {
        if n == 0 {
            return Err(BenchError::Usage("zipfian domain must be non-empty".into()));
        }
        if !(theta > 0.0 && theta < 1.0) {
            return Err(BenchError::Usage(format!("theta must be in (0,1), got {theta}")));
        }
        let (zeta_n, cdf) = if n <= Self::TABLE_LIMIT {
            let mut acc = 0.0;
            let cdf: Vec<f64> = (1..=n)
                .map(|i| {
                    acc += (i as f64).powf(-theta);
                    acc
                })
                .collect();
            (acc, Some(cdf))
        } else {
            (zeta(n, theta), None)
        };
        let zeta2 = zeta(2, theta);
        let alpha = 1.0 / (1.0 - theta);
        let eta = (1.0 - (2.0 / n as f64).powf(1.0 - theta)) / (1.0 - zeta2 / zeta_n);
        Ok(Self { n, theta, zeta_n, cdf, alpha, eta, zeta2 })
    }

    pub fn domain(&self) -> u64 {
        self.n
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    /// Analytic probability of zero-based `rank`.
    pub fn probability(&self, rank: u64) -> f64 {
        ((rank + 1) as f64).powf(-self.theta) / self.zeta_n
    }

    pub fn sample(&self, rng: &mut impl Rng) -> u64 {
        let u: f64 = rng.random();
        match &self.cdf {
            Some(cdf) => {
                let target = u * self.zeta_n;
                (cdf.partition_point(|c| *c <= target) as u64).min(self.n - 1)
            }
            None => {
                let uz = u * self.zeta_n;
                if uz < 1.0 {
                    0
                } else if uz < self.zeta2 {
                    1
                } else {
                    ((self.n as f64) * (self.eta * u - self.eta + 1.0).powf(self.alpha)) as u64 % self.n
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Distribution {
    Uniform,
    Zipfian { theta: f64 },
}

impl Distribution {
    pub fn theta(&self) -> f64 {
        match self {
            Distribution::Uniform => 0.0,
            Distribution::Zipfian { theta } => *theta,
        }
    }
}

impl fmt::Display for Distribution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Distribution::Uniform => f.write_str("uniform"),
            Distribution::Zipfian { .. } => f.write_str("zipf"),
        }
    }
}

/// Shared key generator; each worker samples with its own RNG.
#[derive(Clone)]
pub enum KeyGen {
    Uniform(u64),
    Zipfian(Arc<Zipfian>),
}

impl KeyGen {
    pub fn new(dist: Distribution, domain: u64) -> Result<Self, BenchError> {
        if domain == 0 {
            return Err(BenchError::Usage("key domain must be non-empty".into()));
        }
        Ok(match dist {
            Distribution::Uniform => KeyGen::Uniform(domain),
            Distribution::Zipfian { theta } => KeyGen::Zipfian(zipfian(domain, theta)?),
        })
    }

    pub fn sample(&self, rng: &mut impl Rng) -> u64 {
        match self {
            KeyGen::Uniform(n) => rng.random_range(0..*n),
            KeyGen::Zipfian(z) => z.sample(rng),
        }
    }
}

/// Zipfian tables are large; share them between runs.
fn zipfian(domain: u64, theta: f64) -> Result<Arc<Zipfian>, BenchError> {
    static CACHE: OnceLock<parking_lot::Mutex<HashMap<(u64, u64), Arc<Zipfian>>>> = OnceLock::new();
    let mut cache = CACHE.get_or_init(Default::default).lock();
    if let Some(z) = cache.get(&(domain, theta.to_bits())) {
        return Ok(z.clone());
    }
    let z = Arc::new(Zipfian::new(domain, theta)?);
    cache.insert((domain, theta.to_bits()), z.clone());
    Ok(z)
}

#[derive(Debug, Clone)]
pub struct BenchConfig {
    pub structure: String,
    pub threads: usize,
    pub ops_per_thread: u64,
    pub distribution: Distribution,
    pub key_domain: u64,
    pub capacity: usize,
    pub read_ratio: f64,
    pub num_columns: usize,
    pub records_per_worker: usize,
    pub seed: u64,
    pub pin_threads: bool,
    /// Runtime lock-protocol checks on every field access.
    pub strict: bool,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            structure: "fifo".into(),
            threads: 1,
            ops_per_thread: 100_000,
            distribution: Distribution::Uniform,
            key_domain: 1 << 20,
            capacity: 1 << 10,
            read_ratio: 0.5,
            num_columns: 10,
            records_per_worker: 100_000,
            seed: 0x5eed,
            pin_threads: true,
            strict: false,
        }
    }
}

/// Full-scale YCSB table size per worker.
pub const FULL_RECORDS_PER_WORKER: usize = 1_000_000;

impl BenchConfig {
    pub fn validate(&self) -> Result<(), BenchError> {
        if self.threads == 0 {
            return Err(BenchError::Usage("threads must be at least 1".into()));
        }
        if let Distribution::Zipfian { theta } = self.distribution {
            if !(theta > 0.0 && theta < 1.0) {
                return Err(BenchError::Usage(format!("theta must be in (0,1), got {theta}")));
            }
        }
        if !(0.0..=1.0).contains(&self.read_ratio) {
            return Err(BenchError::Usage(format!("read ratio must be in [0,1], got {}", self.read_ratio)));
        }
        if self.key_domain == 0 || self.capacity == 0 || self.records_per_worker == 0 {
            return Err(BenchError::Usage("key domain, capacity and records must be positive".into()));
        }
        if !crate::catalog::STRUCTURES.contains(&self.structure.as_str()) {
            return Err(BenchError::Usage(format!("unknown structure {}", self.structure)));
        }
        Ok(())
    }

    fn params(&self) -> CatalogParams {
        CatalogParams {
            capacity: self.capacity,
            columns: self.num_columns,
            records: self.records_per_worker * self.threads,
        }
    }

    fn worker_rng(&self, tid: usize) -> SmallRng {
        SmallRng::seed_from_u64(self.seed ^ (tid as u64 + 1).wrapping_mul(0x9e37_79b9_7f4a_7c15))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchResult {
    pub structure: String,
    pub threads: usize,
    pub distribution: Distribution,
    pub read_ratio: f64,
    pub ops: u64,
    pub commits: u64,
    pub aborts: u64,
    pub seconds: f64,
    pub throughput: f64,
    /// Lock and abort counters of the run's transaction manager.
    pub locks: Stats,
}

pub const CSV_HEADER: &str = "structure,threads,distribution,theta,read_ratio,ops,commits,aborts,seconds,throughput";

impl BenchResult {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{:.6},{:.1}",
            self.structure,
            self.threads,
            self.distribution,
            self.distribution.theta(),
            self.read_ratio,
            self.ops,
            self.commits,
            self.aborts,
            self.seconds,
            self.throughput
        )
    }
}

/// Logical CPUs this process may run on, physical cores first (one per
/// core, by package), then their remaining hyper-threads.
pub fn cpu_order() -> Vec<usize> {
    let allowed = allowed_cpus();
    let topo = |cpu: usize, what: &str| -> Option<u64> {
        std::fs::read_to_string(format!("/sys/devices/system/cpu/cpu{cpu}/topology/{what}")).ok()?.trim().parse().ok()
    };
    let mut seen = std::collections::HashSet::new();
    let (mut first, mut rest) = (Vec::new(), Vec::new());
    for cpu in allowed {
        let key = (topo(cpu, "physical_package_id").unwrap_or(0), topo(cpu, "core_id").unwrap_or(cpu as u64));
        if seen.insert(key) {
            first.push((key, cpu));
        } else {
            rest.push((key, cpu));
        }
    }
    first.sort();
    rest.sort();
    first.into_iter().chain(rest).map(|(_, c)| c).collect()
}

#[cfg(target_os = "linux")]
fn allowed_cpus() -> Vec<usize> {
    // SAFETY: cpu_set_t is plain data; sched_getaffinity writes at most its size.
    unsafe {
        let mut set: libc::cpu_set_t = std::mem::zeroed();
        if libc::sched_getaffinity(0, std::mem::size_of::<libc::cpu_set_t>(), &mut set) != 0 {
            return (0..std::thread::available_parallelism().map_or(1, |n| n.get())).collect();
        }
        (0..libc::CPU_SETSIZE as usize).filter(|c| libc::CPU_ISSET(*c, &set)).collect()
    }
}

#[cfg(not(target_os = "linux"))]
fn allowed_cpus() -> Vec<usize> {
    (0..std::thread::available_parallelism().map_or(1, |n| n.get())).collect()
}

/// Pins the calling thread to one CPU. Returns false when the platform
/// refuses.
#[cfg(target_os = "linux")]
pub fn pin_current_thread(cpu: usize) -> bool {
    // SAFETY: as above; the set is fully initialized before the call.
    unsafe {
        let mut set: libc::cpu_set_t = std::mem::zeroed();
        libc::CPU_SET(cpu, &mut set);
        libc::sched_setaffinity(0, std::mem::size_of::<libc::cpu_set_t>(), &set) == 0
    }
}

#[cfg(not(target_os = "linux"))]
pub fn pin_current_thread(_cpu: usize) -> bool {
    false
}

/// Runs `work(tid)` on `threads` workers released together; returns their
/// results and the wall time from release to the last join.
fn drive<W: Send>(threads: usize, pin: bool, work: impl Fn(usize) -> Result<W, BenchError> + Sync) -> Result<(Vec<W>, f64), BenchError> {
    let order = if pin { cpu_order() } else { Vec::new() };
    let barrier = Barrier::new(threads + 1);
    let warned = std::sync::atomic::AtomicBool::new(false);
    std::thread::scope(|s| {
        let handles: Vec<_> = (0..threads)
            .map(|tid| {
                let (barrier, work, order, warned) = (&barrier, &work, &order, &warned);
                s.spawn(move || {
                    if !order.is_empty() && !pin_current_thread(order[tid % order.len()]) && !warned.swap(true, Ordering::Relaxed) {
                        log::warn!("thread pinning unavailable, running unpinned");
                    }
                    barrier.wait();
                    work(tid)
                })
            })
            .collect();
        barrier.wait();
        let start = Instant::now();
        let results: Vec<Result<W, BenchError>> = handles.into_iter().map(|h| h.join().expect("worker panicked")).collect();
        let secs = start.elapsed().as_secs_f64();
        Ok((results.into_iter().collect::<Result<Vec<W>, _>>()?, secs))
    })
}

static RUNS: AtomicU64 = AtomicU64::new(0);

fn fresh_namespace(structure: &str) -> String {
    format!("bench{}-{structure}", RUNS.fetch_add(1, Ordering::Relaxed))
}

fn stats_delta(after: Stats, before: Stats) -> Stats {
    Stats {
        commits: after.commits - before.commits,
        aborts: after.aborts - before.aborts,
        conflicts: after.conflicts - before.conflicts,
        injected: after.injected - before.injected,
        shared_locks: after.shared_locks - before.shared_locks,
        exclusive_locks: after.exclusive_locks - before.exclusive_locks,
        upgrades: after.upgrades - before.upgrades,
        audited_aborts: after.audited_aborts - before.audited_aborts,
        audit_failures: after.audit_failures - before.audit_failures,
    }
}

/// A structure instance plus the configuration it was built for. Building
/// once and running several times avoids re-allocating large tables.
pub struct Workload {
    pub cfg: BenchConfig,
    pub entry: CatalogEntry,
    pub instance: Instance,
}

impl Workload {
    pub fn new(cfg: &BenchConfig) -> Result<Self, BenchError> {
        cfg.validate()?;
        let entry = entry(&cfg.structure, cfg.params())?;
        let instance = entry.instantiate(&fresh_namespace(&cfg.structure))?;
        instance.manager().set_strict(cfg.strict);
        Ok(Self { cfg: cfg.clone(), entry, instance })
    }

    /// One timed run followed by the structure's sanity check.
    pub fn run(&self) -> Result<BenchResult, BenchError> {
        let before = self.instance.manager().stats();
        let retries = self.instance.stats().retries;
        let (ops, secs) = match self.cfg.structure.as_str() {
            "fifo" | "dll" => self.fifo()?,
            "lru" | "lru-coarse" => self.lru()?,
            _ => self.ycsb()?,
        };
        let cfg = &self.cfg;
        Ok(BenchResult {
            structure: cfg.structure.clone(),
            threads: cfg.threads,
            distribution: cfg.distribution,
            read_ratio: cfg.read_ratio,
            ops: cfg.ops_per_thread * cfg.threads as u64,
            commits: ops,
            aborts: self.instance.stats().retries - retries,
            seconds: secs,
            throughput: ops as f64 / secs.max(1e-9),
            locks: stats_delta(self.instance.manager().stats(), before),
        })
    }

    fn fifo(&self) -> Result<(u64, f64), BenchError> {
        let (cfg, inst) = (&self.cfg, &self.instance);
        let (logs, secs) = drive(cfg.threads, cfg.pin_threads, |tid| {
            let mut rng = cfg.worker_rng(tid);
            let (mut pushed, mut popped) = (Vec::new(), Vec::new());
            let mut out = [Value::I64(0)];
            for i in 0..cfg.ops_per_thread {
                if rng.random_bool(0.5) {
                    let v = ((tid as i64) << 32) | i as i64;
                    inst.call("push", &[Value::I64(v)])?;
                    pushed.push(v);
                } else if inst.invoke("pop", &mut out)? == Value::Bool(true) {
                    popped.push(out[0].as_i64().unwrap_or(i64::MIN));
                }
            }
            Ok((pushed, popped))
        })?;
        let mut pushed: Vec<i64> = logs.iter().flat_map(|l| l.0.iter().copied()).collect();
        for (_, popped) in &logs {
            // One consumer sees each producer's values in push order.
            let mut last: HashMap<i64, i64> = HashMap::new();
            for v in popped {
                let prev = last.insert(v >> 32, *v);
                if prev.is_some_and(|p| p >= *v) {
                    return Err(BenchError::Assertion(format!("value {v:#x} popped out of producer order")));
                }
            }
        }
        let mut seen: Vec<i64> = logs.into_iter().flat_map(|l| l.1).collect();
        let mut out = [Value::I64(0)];
        while inst.invoke("pop", &mut out)? == Value::Bool(true) {
            seen.push(out[0].as_i64().unwrap_or(i64::MIN));
        }
        pushed.sort_unstable();
        seen.sort_unstable();
        if pushed != seen {
            return Err(BenchError::Assertion(format!(
                "queue lost or duplicated values: {} pushed, {} accounted for",
                pushed.len(),
                seen.len()
            )));
        }
        Ok((cfg.ops_per_thread * cfg.threads as u64, secs))
    }

    fn lru(&self) -> Result<(u64, f64), BenchError> {
        let (cfg, inst) = (&self.cfg, &self.instance);
        let keys = KeyGen::new(cfg.distribution, cfg.key_domain)?;
        let (_, secs) = drive(cfg.threads, cfg.pin_threads, |tid| {
            let mut rng = cfg.worker_rng(tid);
            for _ in 0..cfg.ops_per_thread {
                let k = keys.sample(&mut rng) as i64;
                inst.call("insert", &[Value::I64(k), Value::I64(k)])?;
            }
            Ok(())
        })?;
        let size = inst.attribute("size")?.as_i64().unwrap_or(-1);
        let entries = inst.map_len("map")?;
        if size < 0 || size as usize > cfg.capacity || size as usize != entries {
            return Err(BenchError::Assertion(format!("lru size {size}, map entries {entries}, capacity {}", cfg.capacity)));
        }
        Ok((cfg.ops_per_thread * cfg.threads as u64, secs))
    }

    fn ycsb(&self) -> Result<(u64, f64), BenchError> {
        let (cfg, inst) = (&self.cfg, &self.instance);
        let records = cfg.params().records as u64;
        let cols = cfg.num_columns;
        let keys = KeyGen::new(cfg.distribution, records)?;
        let torn = |vals: &[Value]| -> bool {
            // Never-written records are all zero.
            let base = vals[0].as_i64().unwrap_or(0);
            let step = if base == 0 { 0 } else { 1 };
            vals.iter().enumerate().any(|(c, v)| v.as_i64() != Some(base.wrapping_add(step * c as i64)))
        };
        let (_, secs) = drive(cfg.threads, cfg.pin_threads, |tid| {
            let mut rng = cfg.worker_rng(tid);
            let mut args = vec![Value::I64(0); cols + 1];
            for i in 0..cfg.ops_per_thread {
                let idx = keys.sample(&mut rng) as i64;
                args[0] = Value::I64(idx);
                if rng.random_bool(cfg.read_ratio) {
                    inst.invoke("read_record", &mut args)?;
                    if torn(&args[1..]) {
                        return Err(BenchError::Assertion(format!("torn read of record {idx}")));
                    }
                } else {
                    let v = ((tid as i64 + 1) << 40) | ((i as i64) << 4);
                    for c in 0..cols {
                        args[c + 1] = Value::I64(v + c as i64);
                    }
                    inst.invoke("update_record", &mut args)?;
                }
            }
            Ok(())
        })?;
        let mut args = vec![Value::I64(0); cols + 1];
        for idx in 0..records as i64 {
            args[0] = Value::I64(idx);
            inst.invoke("read_record", &mut args)?;
            if torn(&args[1..]) {
                return Err(BenchError::Assertion(format!("record {idx} holds values of several writers")));
            }
        }
        Ok((cfg.ops_per_thread * cfg.threads as u64, secs))
    }
}

/// Builds the structure and runs it once.
pub fn run(cfg: &BenchConfig) -> Result<BenchResult, BenchError> {
    Workload::new(cfg)?.run()
}

pub fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n == 0 {
        return f64::NAN;
    }
    if n % 2 == 1 {
        values[n / 2]
    } else {
        (values[n / 2 - 1] + values[n / 2]) / 2.0
    }
}

/// Compilation stage to print.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    PreOpt,
    PostOpt,
    Analysis,
    PostCc,
}

impl FromStr for Stage {
    type Err = BenchError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "pre-opt" => Stage::PreOpt,
            "post-opt" => Stage::PostOpt,
            "analysis" => Stage::Analysis,
            "post-cc" => Stage::PostCc,
            other => return Err(BenchError::Usage(format!("unknown stage {other} (pre-opt|post-opt|analysis|post-cc)"))),
        })
    }
}

/// Text form of a structure at one stage. Post-optimization output is
/// followed by the pass reports; the analysis and post-cc stages describe
/// the spec the structure actually executes (optimized unless the
/// structure is an unoptimized baseline).
pub fn dump_ir(structure: &str, stage: Stage, params: CatalogParams) -> Result<String, BenchError> {
    let e = entry(structure, params).map_err(|e| match e {
        CatalogError::UnknownStructure(s) => BenchError::Usage(format!("unknown structure {s}")),
        other => other.into(),
    })?;
    let spec = (e.build)().map_err(CatalogError::from)?;
    let executed = || -> Result<_, BenchError> {
        Ok(match e.flavor {
            Flavor::Unoptimized => spec.clone(),
            _ => optimize(&spec).map_err(CatalogError::from)?.0,
        })
    };
    Ok(match stage {
        Stage::PreOpt => dump_spec(&spec),
        Stage::PostOpt => {
            let (opt, reports) = optimize(&spec).map_err(CatalogError::from)?;
            let mut out = dump_spec(&opt);
            out.push_str("passes:\n");
            for r in reports {
                out.push_str(&format!("  {r}\n"));
            }
            out
        }
        Stage::Analysis => {
            let s = executed()?;
            analyze(&s).map_err(|e| CatalogError::Optimize(e.into()))?.dump(&s)
        }
        Stage::PostCc => dump_spec(&make_concurrent(&executed()?).map_err(CatalogError::from)?),
    })
}
