//! Acceptance run: one PASS/FAIL line per criterion, nonzero exit if any
//! criterion fails. Runs as a plain binary (no libtest harness).

use std::collections::{BTreeMap, HashSet};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::time::{Duration, Instant};

use num_rational::Ratio;
use rand::rngs::SmallRng;
use rand::{Rng, SeedableRng};
use tdg_runtime::serialization::to_file;
use tdg_runtime::{
    load_tdg, payload_u64, root_placement, save_tdg, Base64Codec, Body, BodyRegistry, DepClause,
    DepKind, ExecError, ExecutionTrace, GraphId, LoadError, Payload, PoolConfig, RecordMode,
    RecordingSession, RegionOptions, RegionPath, Spawner, TaskGraph, TaskId, TdgRegistry,
    WorkerPool,
};
use tdgbench::report::median;
use tdgbench::work::spin;
use tdgbench::{
    default_threads, run_kernel, save_kernel_tdg, ChainBench, ChainConfig, Kernel, KernelKind,
    Mode, OverheadModel,
};

const ORACLE_SESSIONS: usize = 1000;
const ORACLE_BUDGET: Duration = Duration::from_secs(10);
const REPLAY_OVERHEAD_RATIO: f64 = 0.67;
const CHAIN_TOTAL_WORK: u64 = 100_000_000;
const CHAIN_TASKS: u64 = 10_000;
const CHAIN_RUNS: usize = 10;
const SWEEP: [u64; 4] = [10, 100, 1_000, 10_000];
const SWEEP_INVERSION: f64 = 0.10;
const LIMIT_TOLERANCE: f64 = 0.01;
const ROUND_TRIPS: usize = 200;
const NOWAIT_ATTEMPTS: usize = 20;

type Stream = Vec<Vec<DepClause>>;
type Criterion = (&'static str, fn() -> Verdict);

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict {
        pass,
        detail: detail.into(),
    }
}

fn main() -> ExitCode {
    let criteria: [Criterion; 11] = [
        ("dependence oracle", dependence_oracle),
        ("replay safety", replay_safety),
        ("overhead model", overhead_model),
        ("replay overhead vs vanilla", chain_overhead_ratio),
        ("vanilla overhead trend", vanilla_trend),
        ("record-and-replay lifecycle", lifecycle),
        ("round-robin root placement", root_round_robin),
        ("sequentialization", sequentialization),
        ("kernel correctness", kernel_correctness),
        ("serialization round trip", serialization),
        ("amortization", amortization),
    ];
    let mut failed = 0;
    for (n, (name, check)) in criteria.iter().enumerate() {
        let v = catch_unwind(AssertUnwindSafe(check))
            .unwrap_or_else(|e| verdict(false, format!("panicked: {}", panic_text(&e))));
        let tag = if v.pass { "PASS" } else { "FAIL" };
        println!("{tag} criterion {}: {name}: {}", n + 1, v.detail);
        failed += usize::from(!v.pass);
    }
    println!(
        "{} of {} criteria passed",
        criteria.len() - failed,
        criteria.len()
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

fn panic_text(e: &Box<dyn std::any::Any + Send>) -> String {
    e.downcast_ref::<&str>()
        .map(|s| s.to_string())
        .or_else(|| e.downcast_ref::<String>().cloned())
        .unwrap_or_default()
}

fn random_stream(rng: &mut SmallRng, max_tasks: usize, max_tags: u64) -> Stream {
    let tags = rng.random_range(1..=max_tags);
    let tasks = rng.random_range(0..=max_tasks);
    (0..tasks)
        .map(|_| {
            (0..rng.random_range(0..4))
                .map(|_| {
                    let kind = [DepKind::In, DepKind::Out, DepKind::InOut][rng.random_range(0..3)];
                    DepClause {
                        kind,
                        tag: rng.random_range(0..tags),
                    }
                })
                .collect()
        })
        .collect()
}

/// Pairs (u, v), u < v, sharing a tag that at least one of them writes.
fn conflicts(stream: &Stream) -> Vec<(TaskId, TaskId)> {
    let access: Vec<BTreeMap<u64, bool>> = stream
        .iter()
        .map(|cs| {
            let mut m = BTreeMap::new();
            for c in cs {
                *m.entry(c.tag).or_insert(false) |= c.kind != DepKind::In;
            }
            m
        })
        .collect();
    let mut out = Vec::new();
    for v in 0..access.len() {
        for u in 0..v {
            if access[u]
                .iter()
                .any(|(t, &wu)| access[v].get(t).is_some_and(|&wv| wu || wv))
            {
                out.push((u as TaskId, v as TaskId));
            }
        }
    }
    out
}

fn record(stream: &Stream, body: &Body, payload: impl Fn(usize) -> Payload) -> TaskGraph {
    let mut session =
        RecordingSession::new(GraphId::new("acceptance.rs", 1), RecordMode::RecordOnly);
    for (i, clauses) in stream.iter().enumerate() {
        session
            .record_task(body.clone(), payload(i), clauses)
            .unwrap();
    }
    session.finalize().unwrap()
}

/// `reach[v]` holds every task that reaches v.
fn reachability(graph: &TaskGraph) -> Vec<HashSet<TaskId>> {
    let mut reach: Vec<HashSet<TaskId>> = Vec::with_capacity(graph.len());
    for node in graph.nodes() {
        let mut set = HashSet::new();
        for &p in node.preds() {
            set.insert(p);
            set.extend(reach[p as usize].iter().copied());
        }
        reach.push(set);
    }
    reach
}

fn dependence_oracle() -> Verdict {
    let mut rng = SmallRng::seed_from_u64(0xdec0de);
    let body = Body::noop("t");
    let start = Instant::now();
    let mut bad = Vec::new();
    for s in 0..ORACLE_SESSIONS {
        let stream = random_stream(&mut rng, 64, 8);
        let graph = record(&stream, &body, |_| Payload::none());
        let conflict = conflicts(&stream);
        let set: HashSet<_> = conflict.iter().copied().collect();
        let subset = graph.edges().all(|e| set.contains(&e));
        let reach = reachability(&graph);
        let covered = conflict
            .iter()
            .all(|&(u, v)| reach[v as usize].contains(&u));
        if !(subset && covered) {
            bad.push(s);
        }
    }
    let elapsed = start.elapsed();
    verdict(
        bad.is_empty() && elapsed < ORACLE_BUDGET,
        format!(
            "{} of {ORACLE_SESSIONS} sessions consistent in {:.2} s (budget {} s){}",
            ORACLE_SESSIONS - bad.len(),
            elapsed.as_secs_f64(),
            ORACLE_BUDGET.as_secs(),
            if bad.is_empty() {
                String::new()
            } else {
                format!(", first bad session {}", bad[0])
            }
        ),
    )
}

fn replay_safety() -> Verdict {
    let pool = WorkerPool::with_config(PoolConfig::new(4)).unwrap();
    let mut checked = 0;
    let mut errors = Vec::new();
    let mut check = |what: String, trace: Result<ExecutionTrace, ExecError>, graph: &TaskGraph| {
        checked += 1;
        match trace {
            Ok(trace) => {
                if let Err(e) = trace.check_replay(graph) {
                    errors.push(format!("{what}: {e}"));
                }
            }
            Err(e) => errors.push(format!("{what}: {e}")),
        }
    };

    let mut rng = SmallRng::seed_from_u64(0x5afe);
    let body = Body::new("w", |p| {
        spin(payload_u64(p));
    });
    for s in 0..100 {
        let stream = random_stream(&mut rng, 64, 8);
        let work: Vec<u64> = stream.iter().map(|_| rng.random_range(0..2000)).collect();
        let graph = record(&stream, &body, |i| Payload::from_u64(work[i]));
        for r in 0..3 {
            graph.reset_run_state().unwrap();
            check(
                format!("dag {s} replay {r}"),
                pool.execute_graph(&graph),
                &graph,
            );
        }
    }

    for kind in KernelKind::ALL {
        let kernel = small_kernel(kind);
        let registry = TdgRegistry::new();
        let id = GraphId::named("acceptance.rs", 2, kind.to_string());
        let gen = |s: &mut Spawner<'_>| kernel.spawn_iteration(s);
        kernel.reset();
        for call in 0..5 {
            let out = registry
                .taskgraph_region(&id, &pool, RegionOptions::default(), &gen)
                .unwrap();
            if out.path == RegionPath::Replayed {
                check(
                    format!("{kind} call {call}"),
                    Ok(out.trace),
                    &registry.graph(&id).unwrap(),
                );
            }
        }
    }
    verdict(
        errors.is_empty(),
        format!(
            "{} of {checked} replay traces ordered, exactly-once, decrements == edges{}",
            checked - errors.len(),
            errors.first().map(|e| format!("; {e}")).unwrap_or_default()
        ),
    )
}

fn reference(serial_ns: u64, c_ta: u64, c_th: u64) -> Ratio<u128> {
    Ratio::new(u128::from(serial_ns), u128::from(c_ta))
        * Ratio::new(u128::from(c_ta), u128::from(c_th)).ceil()
}

fn overhead_model() -> Verdict {
    let mut points = 0;
    let mut mismatches = Vec::new();
    let serials = [1u64, 7, 1000, 999_999_937, 1_000_000_000_000];
    for c_ta in (1..=64).chain([97, 100, 1000, 4800, 100_000]) {
        for c_th in [1u64, 2, 3, 4, 7, 8, 48] {
            for &s in &serials {
                points += 1;
                let m = OverheadModel::new(Duration::from_nanos(s), c_ta, c_th).unwrap();
                let exact = reference(s, c_ta, c_th);
                let (n, d) = m.computation_fraction();
                let floor = exact.floor().to_integer();
                let measured = Duration::from_nanos(s / 2 + 3);
                let ok = Ratio::new(n, d) == exact
                    && m.computation().as_nanos() == floor
                    && m.overhead_ns(measured) == measured.as_nanos() as i128 - floor as i128
                    && (c_ta > c_th || m.computation() == m.time_fn());
                if !ok {
                    mismatches.push((s, c_ta, c_th));
                }
            }
        }
    }
    let mut worst = 0.0f64;
    for c_th in [1u64, 2, 4, 8, 16, 48] {
        let serial = Duration::from_secs(1);
        let m = OverheadModel::new(serial, 100 * c_th, c_th).unwrap();
        let ideal = serial.as_nanos() as f64 / c_th as f64;
        worst = worst.max((m.computation().as_nanos() as f64 - ideal).abs() / ideal);
    }
    verdict(
        mismatches.is_empty() && worst <= LIMIT_TOLERANCE,
        format!(
            "{} of {points} grid points exact; limit error at c_ta = 100*c_th is {:.4}% (tolerance {}%){}",
            points - mismatches.len(),
            worst * 100.0,
            LIMIT_TOLERANCE * 100.0,
            mismatches.first().map(|m| format!("; first mismatch {m:?}")).unwrap_or_default()
        ),
    )
}

fn bench_pool() -> WorkerPool {
    WorkerPool::with_config(PoolConfig::new(default_threads()).untraced()).unwrap()
}

fn cores() -> usize {
    std::thread::available_parallelism()
        .map(|n| n.get())
        .unwrap_or(1)
}

fn ms(ns: i128) -> f64 {
    ns as f64 / 1e6
}

fn chain_overhead_ratio() -> Verdict {
    let pool = bench_pool();
    let bench = ChainBench::new(
        &pool,
        ChainConfig {
            tasks: CHAIN_TASKS,
            deps: pool.threads() as u64,
            total_work: CHAIN_TOTAL_WORK,
            runs: CHAIN_RUNS,
        },
    );
    let serial = median(&bench.serial_samples());
    let model = bench.model(serial).unwrap();
    let vanilla = median(&bench.vanilla_samples().unwrap());
    let replay = median(&bench.replay_samples().unwrap());
    let (ov, or) = (model.overhead_ns(vanilla), model.overhead_ns(replay));
    let ratio = or as f64 / ov as f64;
    verdict(
        ov > 0 && or as f64 <= REPLAY_OVERHEAD_RATIO * ov as f64,
        format!(
            "P={} on {} cores, {CHAIN_TASKS} tasks, {CHAIN_RUNS} runs: median overhead replay {:.1} ms, \
             vanilla {:.1} ms, ratio {ratio:.3} (bar {REPLAY_OVERHEAD_RATIO}); serial {:.1} ms, computation {:.1} ms",
            pool.threads(),
            cores(),
            ms(or),
            ms(ov),
            serial.as_secs_f64() * 1e3,
            model.computation().as_secs_f64() * 1e3,
        ),
    )
}

fn vanilla_trend() -> Verdict {
    let pool = bench_pool();
    let overheads: Vec<i128> = SWEEP
        .iter()
        .map(|&tasks| {
            let bench = ChainBench::new(
                &pool,
                ChainConfig {
                    tasks,
                    deps: pool.threads() as u64,
                    total_work: CHAIN_TOTAL_WORK,
                    runs: CHAIN_RUNS,
                },
            );
            let model = bench.model(median(&bench.serial_samples())).unwrap();
            model.overhead_ns(median(&bench.vanilla_samples().unwrap()))
        })
        .collect();
    let mut inversions = 0;
    let mut too_large = false;
    for w in overheads.windows(2) {
        if w[1] < w[0] {
            inversions += 1;
            let drop = (w[0] - w[1]) as f64 / (w[0] as f64).abs().max(1.0);
            too_large |= drop > SWEEP_INVERSION;
        }
    }
    let shown: Vec<String> = SWEEP
        .iter()
        .zip(&overheads)
        .map(|(t, o)| format!("{t}:{:.1}", ms(*o)))
        .collect();
    verdict(
        inversions <= 1 && !too_large,
        format!(
            "vanilla overhead ms by task count [{}], {inversions} inversion(s) (allowed 1 within {}%)",
            shown.join(" "),
            SWEEP_INVERSION * 100.0
        ),
    )
}

fn temp_path(name: &str) -> PathBuf {
    std::env::temp_dir().join(format!(
        "tdg-acceptance-{name}-{}.tdg.json",
        std::process::id()
    ))
}

fn lifecycle() -> Verdict {
    let pool = WorkerPool::new(4).unwrap();
    let body = Body::noop("step");
    let calls = AtomicUsize::new(0);
    let gen = |s: &mut Spawner<'_>| {
        calls.fetch_add(1, Ordering::Relaxed);
        for i in 0..16u64 {
            s.spawn(&body, Payload::from_u64(i), &[DepClause::inout(i % 4)]);
        }
    };
    let id = GraphId::new("acceptance.rs", 6);
    let k = 4;
    let registry = TdgRegistry::new();
    for _ in 0..k {
        registry
            .taskgraph_region(&id, &pool, RegionOptions::default(), &gen)
            .unwrap();
    }
    let recorded_calls = calls.load(Ordering::Relaxed);
    let replays = registry.stats(&id).replays;

    let path = temp_path("lifecycle");
    std::fs::write(
        &path,
        save_tdg(&registry.graph(&id).unwrap(), &Base64Codec).unwrap(),
    )
    .unwrap();
    calls.store(0, Ordering::Relaxed);
    let bodies: BodyRegistry = [body.clone()].into_iter().collect();
    let fresh = TdgRegistry::new();
    let opts = RegionOptions::default().static_tdg(&path, &bodies);
    for _ in 0..k {
        fresh.taskgraph_region(&id, &pool, opts, &gen).unwrap();
    }
    std::fs::remove_file(&path).ok();
    let static_calls = calls.load(Ordering::Relaxed);
    verdict(
        recorded_calls == 1 && replays == k as u64 - 1 && static_calls == 0,
        format!(
            "k={k}: generator calls {recorded_calls} (want 1), replays {replays} (want {}), \
             static-load generator calls {static_calls} (want 0)",
            k - 1
        ),
    )
}

fn root_round_robin() -> Verdict {
    let mut failures = Vec::new();
    let mut checked = 0;
    for p in [4usize, default_threads()] {
        let pool = WorkerPool::new(p).unwrap();
        let body = Body::new("w", |_| {
            spin(20_000);
        });
        for n in [1, p, 2 * p + 1] {
            let stream: Stream = (0..n).map(|i| vec![DepClause::output(i as u64)]).collect();
            let graph = record(&stream, &body, |_| Payload::none());
            checked += 1;
            let expected: Vec<(TaskId, usize)> = (0..n).map(|i| (i as TaskId, i % p)).collect();
            if pool.distribute_roots(&graph) != expected
                || root_placement(graph.roots(), p) != expected
            {
                failures.push(format!("P={p} roots={n}: placement"));
                continue;
            }
            let trace = pool.execute_graph(&graph).unwrap();
            if trace
                .records
                .iter()
                .any(|r| r.origin != r.task as usize % p)
            {
                failures.push(format!("P={p} roots={n}: observed origin"));
            }
        }
    }
    verdict(
        failures.is_empty(),
        format!(
            "{} of {checked} root sets placed on queue i mod P (plan and observed){}",
            checked - failures.len(),
            failures
                .first()
                .map(|f| format!("; {f}"))
                .unwrap_or_default()
        ),
    )
}

fn overlapping(a: (u64, u64), b: (u64, u64)) -> bool {
    a.0 < b.1 && b.0 < a.1
}

fn sequentialization() -> Verdict {
    let pool = WorkerPool::new(4).unwrap();
    let body = Body::new("nap", |_| std::thread::sleep(Duration::from_millis(1)));
    let gen = |s: &mut Spawner<'_>| {
        for i in 0..8u64 {
            s.spawn(&body, Payload::from_u64(i), &[DepClause::output(i)]);
        }
    };
    let pair = |registry: &TdgRegistry, id: &GraphId, opts: RegionOptions<'_>| {
        std::thread::scope(|scope| {
            let a = scope.spawn(|| registry.taskgraph_region(id, &pool, opts, &gen).unwrap());
            let b = scope.spawn(|| registry.taskgraph_region(id, &pool, opts, &gen).unwrap());
            let (a, b) = (a.join().unwrap(), b.join().unwrap());
            (a.trace.span().unwrap(), b.trace.span().unwrap())
        })
    };

    let registry = TdgRegistry::new();
    let seq = GraphId::new("acceptance.rs", 8);
    registry
        .taskgraph_region(&seq, &pool, RegionOptions::default(), &gen)
        .unwrap();
    let overlaps_default = (0..NOWAIT_ATTEMPTS)
        .filter(|_| {
            let (a, b) = pair(&registry, &seq, RegionOptions::default());
            overlapping(a, b)
        })
        .count();

    let nowait = GraphId::new("acceptance.rs", 9);
    let opts = RegionOptions::default().nowait(true);
    registry
        .taskgraph_region(&nowait, &pool, opts, &gen)
        .unwrap();
    let overlaps_nowait = (0..NOWAIT_ATTEMPTS)
        .filter(|_| {
            let (a, b) = pair(&registry, &nowait, opts);
            overlapping(a, b)
        })
        .count();
    verdict(
        overlaps_default == 0 && overlaps_nowait >= 1,
        format!(
            "overlapping instance pairs: default {overlaps_default}/{NOWAIT_ATTEMPTS} (want 0), \
             nowait {overlaps_nowait}/{NOWAIT_ATTEMPTS} (want >= 1)"
        ),
    )
}

/// Fine-grained kernels: many small tasks per iteration.
fn small_kernel(kind: KernelKind) -> Box<dyn Kernel> {
    match kind {
        KernelKind::Axpy | KernelKind::Dotp => kind.build(1 << 16, 256, 42),
        KernelKind::Heat => kind.build(130, 16, 42),
        KernelKind::Nbody => kind.build(256, 32, 42),
    }
}

fn kernel_correctness() -> Verdict {
    let pool = bench_pool();
    let mut failures = Vec::new();
    let mut runs = 0;
    for kind in KernelKind::ALL {
        let kernel = small_kernel(kind);
        let path = temp_path(kernel.name());
        save_kernel_tdg(kernel.as_ref(), &path).unwrap();
        for mode in [Mode::Vanilla, Mode::Replay, Mode::Static] {
            for iters in [1, 8] {
                runs += 1;
                if let Err(e) = run_kernel(kernel.as_ref(), &pool, mode, iters, Some(&path)) {
                    failures.push(format!("{kind} {mode} x{iters}: {e}"));
                }
            }
        }
        std::fs::remove_file(&path).ok();
    }
    verdict(
        failures.is_empty(),
        format!(
            "{} of {runs} kernel runs bit-identical to the serial result (axpy, dotp, heat, nbody; \
             vanilla, replay, static){}",
            runs - failures.len(),
            failures.first().map(|f| format!("; {f}")).unwrap_or_default()
        ),
    )
}

fn serialization() -> Verdict {
    let mut rng = SmallRng::seed_from_u64(0xf11e);
    let tags = ["a", "b", "c"];
    let bodies: BodyRegistry = tags.into_iter().map(Body::noop).collect();
    let mut equal = 0;
    for _ in 0..ROUND_TRIPS {
        let stream = random_stream(&mut rng, 64, 8);
        let mut session =
            RecordingSession::new(GraphId::new("acceptance.rs", 10), RecordMode::RecordOnly);
        for (i, clauses) in stream.iter().enumerate() {
            let payload = Payload::from_u64(rng.random());
            session
                .record_task(Body::noop(tags[i % 3]), payload, clauses)
                .unwrap();
        }
        let graph = session.finalize().unwrap();
        let back = load_tdg(&save_tdg(&graph, &Base64Codec).unwrap(), &bodies).unwrap();
        equal += usize::from(back.structural_hash() == graph.structural_hash());
    }

    let body = Body::noop("a");
    let stream: Stream = (0..6).map(|i| vec![DepClause::output(i % 3)]).collect();
    let base = to_file(
        &record(&stream, &body, |i| Payload::from_u64(i as u64)),
        &Base64Codec,
    )
    .unwrap();
    let mutate = |edit: &dyn Fn(&mut tdg_runtime::TdgFile)| {
        let mut file = base.clone();
        edit(&mut file);
        load_tdg(&serde_json::to_vec(&file).unwrap(), &bodies)
    };
    let results = [
        load_tdg(b"{\"version\":", &bodies),
        mutate(&|f| f.version = 99),
        mutate(&|f| {
            f.tasks.remove(1);
        }),
        mutate(&|f| f.tasks[2].preds = vec![4]),
        mutate(&|f| f.tasks[0].body_tag = "missing".into()),
        mutate(&|f| f.tasks[3].payload = Some("not base64!".into())),
    ];
    let kinds: Vec<&str> = results
        .iter()
        .map(|r| match r {
            Err(LoadError::Malformed(_)) => "malformed",
            Err(LoadError::UnsupportedVersion(_)) => "version",
            Err(LoadError::IdGap { .. }) => "id-gap",
            Err(LoadError::ForwardDependence { .. }) => "forward",
            Err(LoadError::UnknownBodyTag { .. }) => "body-tag",
            Err(LoadError::InvalidPayload { .. }) => "payload",
            Ok(_) => "accepted",
        })
        .collect();
    let want = [
        "malformed",
        "version",
        "id-gap",
        "forward",
        "body-tag",
        "payload",
    ];
    let messages: HashSet<String> = results
        .iter()
        .filter_map(|r| r.as_ref().err().map(|e| e.to_string()))
        .collect();
    verdict(
        equal == ROUND_TRIPS && kinds == want && messages.len() == want.len(),
        format!(
            "{equal} of {ROUND_TRIPS} round trips hash-equal; malformations diagnosed as [{}]",
            kinds.join(", ")
        ),
    )
}

fn median_time(kernel: &dyn Kernel, pool: &WorkerPool, mode: Mode, iters: usize) -> Duration {
    let samples: Vec<Duration> = (0..5)
        .map(|_| run_kernel(kernel, pool, mode, iters, None).unwrap())
        .collect();
    median(&samples)
}

fn amortization() -> Verdict {
    let pool = bench_pool();
    let mut failures = Vec::new();
    let mut shown = Vec::new();
    for kind in KernelKind::ALL {
        let kernel = small_kernel(kind);
        run_kernel(kernel.as_ref(), &pool, Mode::Vanilla, 2, None).unwrap();
        let speedup = |iters| {
            let vanilla = median_time(kernel.as_ref(), &pool, Mode::Vanilla, iters);
            let replay = median_time(kernel.as_ref(), &pool, Mode::Replay, iters);
            vanilla.as_secs_f64() / replay.as_secs_f64()
        };
        let (s4, s64) = (speedup(4), speedup(64));
        shown.push(format!("{kind} {s4:.3}->{s64:.3}"));
        if s64 < s4 {
            failures.push(kind);
        }
    }
    verdict(
        failures.is_empty(),
        format!(
            "replay speedup over vanilla, 4 -> 64 iterations: {}",
            shown.join(", ")
        ),
    )
}
