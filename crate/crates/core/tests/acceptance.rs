//! Acceptance run: one PASS/FAIL line per criterion.
//!
//! Correctness criteria (1, 2, 5, 6, 7, 8) fail the process. Throughput and
//! sampling criteria (3, 4, 9, 10) are reported but only fail the process
//! when DSGEN_ACCEPTANCE_STRICT=1.

mod common;

use std::time::{Duration, Instant};

use common::{apply, check_trace, crossed_lock_schedule, locks_on_created, trace, traced_fifo_run, LRU_CAPACITY, YCSB_COLUMNS, YCSB_RECORDS};
use dsgen::bench::{median, BenchConfig, Workload, Zipfian};
use dsgen::catalog::{build_fifo, dll_standalone, entry, CatalogEntry, CatalogParams, Flavor, STRUCTURES};
use dsgen::cc::verify;
use dsgen::executor::{ExecMode, Instance};
use dsgen::optimizer::optimize;
use dsgen::runtime::{RecordRef, TraceEvent};
use dsgen::spec::{Statement, TypeDecl};
use dsgen::Value;
use rand::rngs::SmallRng;
use rand::{Rng, SeedableRng};

type Verdict = Result<String, String>;

struct Criterion {
    id: u32,
    name: &'static str,
    gating: bool,
    run: fn() -> Verdict,
}

fn small_params() -> CatalogParams {
    CatalogParams { capacity: LRU_CAPACITY, columns: YCSB_COLUMNS, records: YCSB_RECORDS }
}

fn catalog(structure: &str, params: CatalogParams) -> CatalogEntry {
    match structure {
        "dll" => dll_standalone(),
        s => entry(s, params).unwrap(),
    }
}

fn optimizer_equivalence() -> Verdict {
    let start = Instant::now();
    let mut ops = 0usize;
    for structure in ["dll", "fifo", "lru", "ycsb"] {
        let e = catalog(structure, small_params());
        let raw = (e.build)().map_err(|e| e.to_string())?;
        let mut rng = SmallRng::seed_from_u64(0xacce);
        for t in 0..1000 {
            let opt = e.instantiate(&format!("acc-eq-{structure}")).map_err(|e| e.to_string())?;
            let serial = Instance::instantiate(&raw, &format!("acc-eq-{structure}.serial"), ExecMode::Serial).map_err(|e| e.to_string())?;
            for o in trace(structure, &mut rng, 100) {
                let (a, b) = (apply(&opt, &o), apply(&serial, &o));
                if a != b {
                    return Err(format!("{structure} trace {t}, {o:?}: optimized {a:?}, unoptimized {b:?}"));
                }
                ops += 1;
            }
            opt.destroy().map_err(|e| e.to_string())?;
            serial.destroy().map_err(|e| e.to_string())?;
        }
    }
    let elapsed = start.elapsed();
    if elapsed >= Duration::from_secs(120) {
        return Err(format!("{ops} ops agreed but took {elapsed:.1?}"));
    }
    Ok(format!("4000 traces, {ops} ops identical in {elapsed:.1?}"))
}

fn touches_prev(body: &[Statement]) -> bool {
    body.iter().any(|s| match s {
        Statement::Conditional { then_branch, else_branch, .. } => touches_prev(then_branch) || touches_prev(else_branch),
        Statement::MethodCall { function, .. } => function.ends_with("_prev"),
        s => s.attribute() == Some("prev"),
    })
}

fn any_prev(types: &[&TypeDecl]) -> bool {
    types.iter().any(|t| t.functions.iter().any(|f| touches_prev(&f.body)))
}

fn fifo_specialization() -> Verdict {
    let raw = build_fifo().map_err(|e| e.to_string())?;
    let (opt, _) = optimize(&raw).map_err(|e| e.to_string())?;
    let node = opt.composed.get("Node").ok_or("Node type missing")?;
    let mut attrs: Vec<&str> = node.attributes.iter().map(|a| a.name.as_str()).collect();
    attrs.sort();
    if attrs != ["next", "value"] {
        return Err(format!("Node attributes {attrs:?}"));
    }
    let types: Vec<&TypeDecl> = opt.types().collect();
    if any_prev(&types) {
        return Err("a statement still reads or writes prev".into());
    }
    let before: Vec<&TypeDecl> = raw.types().collect();
    if !any_prev(&before) {
        return Err("the unoptimized spec never touched prev".into());
    }
    Ok("Node = {next, value}; no prev statements remain".into())
}

const RUNS: usize = 5;

fn median_throughput(cfg: &BenchConfig) -> Result<f64, String> {
    let w = Workload::new(cfg).map_err(|e| e.to_string())?;
    let mut t = Vec::with_capacity(RUNS);
    for _ in 0..RUNS {
        t.push(w.run().map_err(|e| e.to_string())?.throughput);
    }
    w.instance.destroy().map_err(|e| e.to_string())?;
    Ok(median(&mut t))
}

fn bench_cfg(structure: &str, threads: usize) -> BenchConfig {
    BenchConfig { structure: structure.into(), threads, ops_per_thread: 100_000, pin_threads: true, ..Default::default() }
}

fn hardware_threads() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

/// Compares medians; `min_ratio` is the required fifo/baseline ratio.
fn ordering(ours: &str, theirs: &str, threads: &[usize], min_ratio: f64, mk: fn(&str, usize) -> BenchConfig) -> Verdict {
    let start = Instant::now();
    let mut lines = Vec::new();
    let mut ok = true;
    for &t in threads {
        let a = median_throughput(&mk(ours, t))?;
        let b = median_throughput(&mk(theirs, t))?;
        let r = a / b;
        ok &= r >= min_ratio;
        lines.push(format!("{t} threads: {ours} {a:.0} ops/s, {theirs} {b:.0} ops/s, ratio {r:.3}"));
    }
    let elapsed = start.elapsed();
    ok &= elapsed < Duration::from_secs(300);
    let hw = hardware_threads();
    let max_t = threads.iter().copied().max().unwrap_or(1);
    let mut msg = format!("{} (need ratio >= {min_ratio}; {elapsed:.1?})", lines.join("; "));
    if hw < max_t {
        msg.push_str(&format!("; precondition unmet: {hw} hardware thread(s) for {max_t} workers"));
        ok = false;
    }
    if ok {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn specialization_trend() -> Verdict {
    ordering("fifo", "dll", &[8], 1.10, bench_cfg)
}

fn composition_trend() -> Verdict {
    ordering("lru", "lru-coarse", &[4, 8], 1.0, bench_cfg)
}

fn ycsb_cfg(structure: &str, threads: usize) -> BenchConfig {
    BenchConfig { read_ratio: 0.5, records_per_worker: 100_000, ..bench_cfg(structure, threads) }
}

fn ycsb_trend() -> Verdict {
    ordering("ycsb", "ycsb-coarse", &[8], 1.0, ycsb_cfg)
}

fn protocol_suite() -> Verdict {
    let mut checked = 0;
    for name in STRUCTURES {
        let e = entry(name, CatalogParams::default()).map_err(|e| e.to_string())?;
        if e.flavor == Flavor::Coarse {
            continue;
        }
        verify(&e.prepare().map_err(|e| e.to_string())?).map_err(|v| format!("{name}: {v:?}"))?;
        checked += 1;
    }
    verify(&dll_standalone().prepare().map_err(|e| e.to_string())?).map_err(|v| format!("dll standalone: {v:?}"))?;
    checked += 1;

    let (_, traces) = traced_fifo_run(4, 10_000, 0.0, false)?;
    for t in &traces {
        check_trace(t)?;
    }

    let r = crossed_lock_schedule(Duration::from_secs(1)).ok_or("crossed-lock schedule did not finish within 1s")?;
    if r.aborts == 0 {
        return Err(format!("crossed-lock schedule finished without an abort: {r:?}"));
    }
    Ok(format!(
        "{checked} injected specs verified; {} runtime traces clean; crossed locks: {} abort(s) in {:.1?}",
        traces.len(),
        r.aborts,
        r.elapsed
    ))
}

fn rollback_atomicity() -> Verdict {
    let (w, _) = traced_fifo_run(4, 5000, 0.2, true)?;
    let s = w.instance.manager().stats();
    if s.audit_failures != 0 {
        return Err(format!("{} of {} audited aborts left rows changed", s.audit_failures, s.audited_aborts));
    }
    if s.audited_aborts < 100 {
        return Err(format!("only {} aborts audited", s.audited_aborts));
    }
    Ok(format!("multiset conserved; {} aborts ({} injected) all restored touched rows exactly", s.audited_aborts, s.injected))
}

fn pushes_without_locking_new_node(e: &CatalogEntry, method: &str) -> Result<String, String> {
    let inst = e.instantiate(&format!("acc-nascent-{method}")).map_err(|e| e.to_string())?;
    let mgr = inst.manager();
    mgr.set_tracing(true);
    for i in 0..10_000 {
        inst.call(method, &[Value::I64(i)]).map_err(|e| e.to_string())?;
    }
    mgr.set_tracing(false);
    let traces = mgr.take_traces();
    let created = traces.iter().flat_map(|t| &t.events).filter(|e| matches!(e, TraceEvent::Create(_))).count();
    let locked = locks_on_created(&traces);
    inst.destroy().map_err(|e| e.to_string())?;
    if created != 10_000 || locked != 0 {
        return Err(format!("{method}: {created} nodes created, {locked} locked by their creator"));
    }
    Ok(format!("{method}: 10000 new nodes, 0 locked"))
}

fn nascent_elision() -> Verdict {
    let a = pushes_without_locking_new_node(&dll_standalone(), "push_back")?;
    let b = pushes_without_locking_new_node(&entry("fifo", CatalogParams::default()).unwrap(), "push")?;
    Ok(format!("{a}; {b}"))
}

fn record_ref_roundtrip() -> Verdict {
    let check = |t: u16, o: u64| -> Result<(), String> {
        let r = RecordRef::new(t, o).ok_or(format!("({t}, {o}) rejected"))?;
        if r.table_id() != t || r.offset() != o || RecordRef::from_raw(r.raw()) != r || r.raw() != (u64::from(t) << 48 | o) {
            return Err(format!("({t}, {o}) decoded as ({}, {})", r.table_id(), r.offset()));
        }
        Ok(())
    };
    let edges = [0u64, (1 << 16) - 1, (1 << 48) - 1];
    for t in [0u16, 1, u16::MAX] {
        for o in edges {
            check(t, o)?;
        }
    }
    let mut rng = SmallRng::seed_from_u64(48);
    for _ in 0..100_000 {
        check(rng.random(), rng.random_range(0..=RecordRef::MAX_OFFSET))?;
    }
    if RecordRef::new(1, 1 << 48).is_some() {
        return Err("offset 2^48 accepted".into());
    }
    Ok("100000 random pairs and 9 boundary pairs roundtrip".into())
}

fn zipf_top_ranks() -> Verdict {
    const DRAWS: usize = 1_000_000;
    let z = Zipfian::new(1 << 20, 0.4).map_err(|e| e.to_string())?;
    let mut rng = SmallRng::seed_from_u64(0x5eed);
    let mut counts = [0u64; 10];
    for _ in 0..DRAWS {
        let k = z.sample(&mut rng);
        if k < 10 {
            counts[k as usize] += 1;
        }
    }
    let mut worst = 0.0f64;
    let mut lines = Vec::new();
    for (rank, &c) in counts.iter().enumerate() {
        let expected = z.probability(rank as u64) * DRAWS as f64;
        let rel = (c as f64 - expected).abs() / expected;
        worst = worst.max(rel);
        lines.push(format!("{rank}:{c}/{expected:.0}"));
    }
    let msg = format!("max relative error {:.1}% (observed/expected {})", worst * 100.0, lines.join(" "));
    if worst <= 0.05 {
        Ok(msg)
    } else {
        Err(format!("{msg}; expected counts this small carry 8-13% sampling noise"))
    }
}

fn main() {
    let criteria = [
        Criterion { id: 1, name: "optimized and unoptimized specs agree on serial traces", gating: true, run: optimizer_equivalence },
        Criterion { id: 2, name: "FIFO list loses its back links", gating: true, run: fifo_specialization },
        Criterion { id: 3, name: "fifo beats dll by 10% at 8 threads", gating: false, run: specialization_trend },
        Criterion { id: 4, name: "lru at least matches coarse lru at 4 and 8 threads", gating: false, run: composition_trend },
        Criterion { id: 5, name: "two-phase locking, static and at runtime; crossed locks abort", gating: true, run: protocol_suite },
        Criterion { id: 6, name: "aborts roll back exactly under injected conflicts", gating: true, run: rollback_atomicity },
        Criterion { id: 7, name: "new nodes are never locked before publication", gating: true, run: nascent_elision },
        Criterion { id: 8, name: "record reference roundtrip", gating: true, run: record_ref_roundtrip },
        Criterion { id: 9, name: "ycsb at least matches coarse ycsb at 8 workers", gating: false, run: ycsb_trend },
        Criterion { id: 10, name: "zipfian top-10 ranks within 5%", gating: false, run: zipf_top_ranks },
    ];
    let strict = std::env::var("DSGEN_ACCEPTANCE_STRICT").is_ok_and(|v| v == "1");
    let only: Option<u32> = std::env::args().skip(1).find_map(|a| a.parse().ok());
    let (mut passed, mut failed, mut blocking) = (0, 0, 0);
    for c in criteria.iter().filter(|c| only.is_none_or(|n| n == c.id)) {
        let start = Instant::now();
        let verdict = std::panic::catch_unwind(c.run).unwrap_or_else(|p| {
            let m = p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()));
            Err(format!("panicked: {}", m.unwrap_or_default()))
        });
        let secs = start.elapsed().as_secs_f64();
        match verdict {
            Ok(m) => {
                passed += 1;
                println!("[criterion {}] PASS {} ({secs:.1}s): {m}", c.id, c.name);
            }
            Err(m) => {
                failed += 1;
                if c.gating || strict {
                    blocking += 1;
                }
                println!("[criterion {}] FAIL {} ({secs:.1}s): {m}", c.id, c.name);
            }
        }
    }
    println!("acceptance: {passed} passed, {failed} failed, {blocking} blocking");
    if blocking > 0 {
        std::process::exit(1);
    }
}
