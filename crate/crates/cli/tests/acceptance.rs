//! Acceptance checks for the simulator. Runs without the libtest harness so
//! every criterion prints exactly one PASS or FAIL line.

use std::collections::{BTreeMap, BTreeSet};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::{Command, ExitCode, Stdio};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::Value;

use hvsim::files::{builtin_rules, BUILTIN_RULES};
use hvsim::{bench, meminfo, run, RunOptions, ThreadedBackend};
use hvsim_core::engine::{AppSpec, CallOutcome, Engine, EngineConfig, EngineError};
use hvsim_core::kernelsim::RoImage;
use hvsim_core::model::{BindingTable, ModelError, Pid, ProcessDescriptor, Uid, Vmid, WaitMode};
use hvsim_core::policy::{flags, route, DenyReason, Policy, RouteDecision, SyscallDesc, SyscallKind};
use hvsim_core::scenario::{
    builtin_gingerbreak, generate_workload, random_scenario, run_scenario, run_scenario_with, ScenarioReport,
    ScenarioTrace, Step, WorkloadDistribution,
};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn report_for(trace: &ScenarioTrace, policy: Policy, wait_mode: WaitMode) -> ScenarioReport {
    let cfg = EngineConfig {
        policy,
        wait_mode,
        ..EngineConfig::default()
    };
    run_scenario(trace, cfg, RoImage::builtin()).expect("scenario runs").report
}

fn assertion(report: &ScenarioReport, prefix: &str) -> bool {
    let matching: Vec<_> = report.assertions.iter().filter(|a| a.id.starts_with(prefix)).collect();
    !matching.is_empty() && matching.iter().all(|a| a.passed)
}

// ---------------------------------------------------------------------------
// 1. gingerbreak

fn gingerbreak_confinement() -> Outcome {
    let bin = env!("CARGO_BIN_EXE_hvsim");
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let confined = dir.path().join("builtin.json");
    let started = Instant::now();
    let status = Command::new(bin)
        .args(["run", "--builtin", "gingerbreak", "--out"])
        .arg(&confined)
        .stderr(Stdio::null())
        .status()
        .map_err(|e| e.to_string())?;
    let elapsed = started.elapsed();
    ensure(status.code() == Some(0), || format!("builtin run exited {status}"))?;
    ensure(elapsed < Duration::from_secs(5), || format!("took {elapsed:?}"))?;
    let report: ScenarioReport =
        serde_json::from_slice(&std::fs::read(&confined).map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
    for check in ["host_image_unchanged", "no_host_root_actor", "exploit_copy_confined", "containers_unchanged_since"] {
        ensure(assertion(&report, check), || format!("builtin: {check} failed"))?;
    }
    ensure(assertion(&report, "root_in_container"), || "exploit never got root in its container".into())?;

    let open = dir.path().join("passthrough.json");
    let status = Command::new(bin)
        .args(["run", "--builtin", "gingerbreak", "--policy", "passthrough", "--out"])
        .arg(&open)
        .stderr(Stdio::null())
        .status()
        .map_err(|e| e.to_string())?;
    ensure(status.code() == Some(1), || format!("passthrough run exited {status}"))?;
    let report: ScenarioReport =
        serde_json::from_slice(&std::fs::read(&open).map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
    ensure(!assertion(&report, "no_host_root_actor"), || "passthrough: (b) unexpectedly passed".into())?;
    ensure(!assertion(&report, "exploit_copy_confined"), || "passthrough: (c) unexpectedly passed".into())?;
    Ok(format!("confined in {elapsed:.2?}; passthrough fails (b) and (c)"))
}

// ---------------------------------------------------------------------------
// 2. routing oracles

/// Evaluates the bundled rule table straight from its JSON text.
struct JsonRules {
    rules: Vec<Value>,
}

const MANAGEMENT: [&str; 3] = ["insmod", "rmmod", "shutdown"];
const PATH_KINDS: [&str; 8] = [
    "file_open",
    "file_read",
    "file_write",
    "file_close",
    "file_unlink",
    "mmap",
    "execve",
    "device_ioctl",
];

fn kind_name(kind: SyscallKind) -> String {
    serde_json::to_value(kind).unwrap().as_str().unwrap().to_string()
}

fn canonical(path: &str) -> bool {
    path == "/" || path.strip_prefix('/').is_some_and(|r| r.split('/').all(|c| !c.is_empty() && c != "." && c != ".."))
}

fn under(path: &str, prefix: &str) -> bool {
    path == prefix || path.strip_prefix(prefix).is_some_and(|r| r.starts_with('/'))
}

fn malformed(call: &SyscallDesc) -> bool {
    let kind = kind_name(call.kind);
    (PATH_KINDS.contains(&kind.as_str()) && call.path.is_none())
        || call.path.as_deref().is_some_and(|p| !canonical(p))
        || (kind == "binder_ioctl" && call.ioctl_service.is_none())
        || (kind == "kill" && call.target_pid.is_none())
}

fn is_app(vmid: u8, uid: u32) -> bool {
    vmid != 0 || uid >= 10_000
}

fn strings(v: &Value) -> Vec<&str> {
    v.as_array().unwrap().iter().map(|s| s.as_str().unwrap()).collect()
}

impl JsonRules {
    fn load() -> Self {
        let doc: Value = serde_json::from_str(BUILTIN_RULES).unwrap();
        JsonRules {
            rules: doc["rules"].as_array().unwrap().clone(),
        }
    }

    fn matches(m: &Value, vmid: u8, uid: u32, call: &SyscallDesc) -> bool {
        let m = m.as_object().unwrap();
        m.iter().all(|(field, want)| match field.as_str() {
            "caller" => (want == "app") == is_app(vmid, uid),
            "vmid" => (want == "host") == (vmid == 0),
            "kinds" => strings(want).contains(&kind_name(call.kind).as_str()),
            "path_under" => call.path.as_deref().is_some_and(|p| strings(want).iter().any(|pre| under(p, pre))),
            "write" => want.as_bool().unwrap() == (call.flags & 1 != 0),
            "has_target" => want.as_bool().unwrap() == call.target_pid.is_some(),
            "service_in" => call.ioctl_service.as_deref().is_some_and(|s| strings(want).contains(&s)),
            other => panic!("unknown match field {other}"),
        })
    }

    fn decide(&self, vmid: u8, uid: u32, call: &SyscallDesc) -> Option<String> {
        if malformed(call) {
            return None;
        }
        let rule = self.rules.iter().find(|r| Self::matches(&r["match"], vmid, uid, call))?;
        Some(match &rule["decision"] {
            Value::String(s) if s == "host" => "host".into(),
            Value::String(s) if s == "redirect" => format!("redirect({vmid})"),
            Value::Object(o) => format!("deny({})", o["deny"].as_str().unwrap()),
            other => panic!("bad decision {other}"),
        })
    }
}

/// Routing written out as plain conditionals.
fn if_chain(vmid: u8, uid: u32, call: &SyscallDesc) -> Option<String> {
    if malformed(call) {
        return None;
    }
    let kind = kind_name(call.kind);
    let k = kind.as_str();
    let path = call.path.as_deref().unwrap_or("");
    let write = call.flags & 1 != 0;
    let readonly = ["/system", "/etc", "/vendor", "/data/app"].iter().any(|p| under(path, p));
    let host_dev = under(path, "/dev/binder") || under(path, "/dev/ashmem");
    let host = || Some("host".to_string());
    let redirect = || Some(format!("redirect({vmid})"));
    if MANAGEMENT.contains(&k) && is_app(vmid, uid) {
        return Some("deny(dangerous_call)".into());
    }
    if vmid == 0 {
        return host();
    }
    match k {
        "get_pid" | "fork" | "clone" | "execve" | "ashmem_ioctl" => host(),
        "mmap" if under(path, "/dev/ashmem") || (readonly && !write) => host(),
        "mmap" => Some("deny(unsupported_mmap)".into()),
        "file_write" | "file_unlink" if under(path, "/dev/ashmem") => host(),
        "file_write" | "file_unlink" => redirect(),
        "file_open" | "file_read" | "file_close" if under(path, "/dev") => {
            if host_dev {
                host()
            } else {
                redirect()
            }
        }
        "file_open" if write => redirect(),
        "file_open" | "file_read" | "file_close" if readonly => host(),
        "file_open" | "file_read" | "file_close" => redirect(),
        "device_ioctl" if host_dev => host(),
        "device_ioctl" => redirect(),
        "binder_ioctl" => {
            let service = call.ioctl_service.as_deref().unwrap();
            let ui = ["android.ui", "android.view", "com.android.internal.view", "input", "notification"];
            if call.target_pid.is_some() || ui.contains(&service) {
                host()
            } else {
                redirect()
            }
        }
        "kill" | "socket_op" | "netlink_send" => redirect(),
        _ => host(),
    }
}

const PATH_ROOTS: [&str; 16] = [
    "/system",
    "/systemx",
    "/etc",
    "/vendor",
    "/data/app",
    "/data/data",
    "/data/local/tmp",
    "/dev",
    "/dev/binder",
    "/dev/ashmem",
    "/dev/log",
    "/dev/graphics",
    "/proc",
    "/mnt/sdcard",
    "/cache",
    "/",
];
const SERVICES: [&str; 10] = [
    "android.ui",
    "android.view",
    "com.android.internal.view",
    "input",
    "notification",
    "android.app",
    "contacts",
    "location",
    "ImountService",
    "android.uix",
];

fn random_path(rng: &mut ChaCha8Rng) -> String {
    let root = PATH_ROOTS[rng.random_range(0..PATH_ROOTS.len())];
    let mut path = root.to_string();
    for _ in 0..rng.random_range(0..3) {
        let comp = ["lib", "bin", "main", "x", "com.a", "..", ".", ""][rng.random_range(0..8)];
        if !path.ends_with('/') {
            path.push('/');
        }
        path.push_str(comp);
    }
    if rng.random_bool(0.02) {
        path = path.trim_start_matches('/').to_string();
    }
    path
}

fn random_call(rng: &mut ChaCha8Rng) -> SyscallDesc {
    let kind = SyscallKind::ALL[rng.random_range(0..SyscallKind::ALL.len())];
    let mut call = SyscallDesc::new(kind).with_flags(rng.random::<u16>() & 0x1f);
    if rng.random_bool(0.9) {
        call = call.with_path(random_path(rng));
    }
    if rng.random_bool(0.9) {
        call = call.with_service(SERVICES[rng.random_range(0..SERVICES.len())]);
    }
    if rng.random_bool(0.5) {
        call = call.with_target(Pid(rng.random_range(1..500)));
    }
    call.with_arg(rng.random_range(0..8))
}

fn routing_oracles() -> Outcome {
    const N: usize = 100_000;
    let json = JsonRules::load();
    let table = Policy::Table(builtin_rules());
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let started = Instant::now();
    let mut valid = 0;
    let mut seen: BTreeSet<String> = BTreeSet::new();
    for i in 0..N {
        let vmid: u8 = if rng.random_bool(0.2) { 0 } else { rng.random() };
        let uid = [0, 1000, 1013, 10_000, 10_050, 99_999][rng.random_range(0..6)];
        let call = random_call(&mut rng);
        let proc = ProcessDescriptor {
            pid: Pid(1000 + i as u32),
            uid: Uid(uid),
            vmid: Vmid::from_u8(vmid),
            parent_pid: None,
            alive: true,
            proxy_pid: (vmid != 0).then_some(Pid(3)),
        };
        let engine = route(&proc, &call).ok().map(|d| d.to_string());
        let interpreted = table.route(&proc, &call).ok().map(|d| d.to_string());
        let from_json = json.decide(vmid, uid, &call);
        let chained = if_chain(vmid, uid, &call);
        if engine != from_json || engine != chained || engine != interpreted {
            return Err(format!(
                "pair {i}: vmid {vmid} uid {uid} {call:?}: engine {engine:?}, table {interpreted:?}, json {from_json:?}, if-chain {chained:?}"
            ));
        }
        if let Some(d) = engine {
            valid += 1;
            seen.insert(if d.starts_with("redirect") { "redirect".into() } else { d });
        }
    }
    let elapsed = started.elapsed();
    ensure(elapsed < Duration::from_secs(10), || format!("took {elapsed:?}"))?;
    ensure(valid > N / 2 && seen.len() >= 4, || format!("weak coverage: {valid} valid, decisions {seen:?}"))?;
    Ok(format!("{N} pairs agree ({valid} well-formed) in {elapsed:.2?}"))
}

// ---------------------------------------------------------------------------
// 3. vmid inheritance

const TREE_APPS: [(&str, u32, bool); 4] = [
    ("com.one", 10_001, false),
    ("com.two", 10_002, false),
    ("com.three", 10_003, false),
    ("com.pre", 1_000, true),
];

fn apps(specs: &[(&str, u32, bool)]) -> Vec<AppSpec> {
    specs
        .iter()
        .map(|(p, u, t)| AppSpec {
            package: (*p).into(),
            uid: *u,
            trusted: *t,
            native: Vec::new(),
        })
        .collect()
}

fn no_escape() -> Outcome {
    const TREES: usize = 10_000;
    const PER_ENGINE: usize = 100;
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut processes = 0usize;
    let mut checked_edges = 0usize;
    // bindings follow declaration order, hosts for preinstalled apps
    let mut expected_root = BTreeMap::new();
    let mut next = 1u8;
    for (p, _, trusted) in TREE_APPS {
        expected_root.insert(p, if trusted { Vmid::HOST } else { Vmid::from_u8(next) });
        if !trusted {
            next += 1;
        }
    }
    for batch in 0..TREES / PER_ENGINE {
        let mut e = Engine::local(EngineConfig::default(), RoImage::builtin(), &apps(&TREE_APPS)).map_err(|e| e.to_string())?;
        let mut all: BTreeMap<Pid, (Vmid, Option<Pid>)> = BTreeMap::new();
        for _ in 0..PER_ENGINE {
            let (package, _, _) = TREE_APPS[rng.random_range(0..TREE_APPS.len())];
            let root = e.spawn(package).map_err(|e| e.to_string())?;
            let root_vmid = e.descriptor(root).unwrap().vmid;
            ensure(root_vmid == expected_root[package], || format!("{package} started in {root_vmid:?}"))?;
            all.insert(root, (root_vmid, None));
            let mut live = vec![root];
            for _ in 0..rng.random_range(1..12) {
                if live.is_empty() {
                    break;
                }
                let pid = live[rng.random_range(0..live.len())];
                match rng.random_range(0..5) {
                    0 => {
                        let child = e.fork(pid).map_err(|e| e.to_string())?;
                        all.insert(child, (all[&pid].0, Some(pid)));
                        live.push(child);
                    }
                    1 => {
                        let d = e
                            .syscall(pid, &SyscallDesc::new(SyscallKind::Fork), &[], &[])
                            .map_err(|e| e.to_string())?;
                        let child = Pid(d.outcome.value().ok_or("fork syscall failed")? as u32);
                        all.insert(child, (all[&pid].0, Some(pid)));
                        live.push(child);
                    }
                    2 => {
                        let path = ["/system/bin/sh", "/system/bin/logcat"][rng.random_range(0..2)];
                        let out = e.execve(pid, path).map_err(|e| e.to_string())?;
                        ensure(out.vmid_after == all[&pid].0, || format!("exec moved {pid:?} to {:?}", out.vmid_after))?;
                    }
                    3 => {
                        e.kill(pid).map_err(|e| e.to_string())?;
                        live.retain(|p| *p != pid);
                    }
                    _ => {
                        e.syscall(pid, &SyscallDesc::new(SyscallKind::GetPid), &[], &[])
                            .map_err(|e| e.to_string())?;
                    }
                }
                let now = e.descriptor(pid).map(|d| d.vmid);
                ensure(now.is_none() || now == Some(all[&pid].0), || format!("{pid:?} vmid changed to {now:?}"))?;
            }
        }
        for (pid, (vmid, parent)) in &all {
            if let Some(d) = e.descriptor(*pid) {
                ensure(d.vmid == *vmid, || format!("batch {batch}: {pid:?} drifted {vmid:?} -> {:?}", d.vmid))?;
            }
            if let Some(parent) = parent {
                ensure(all[parent].0 == *vmid, || format!("{pid:?} differs from parent {parent:?}"))?;
                checked_edges += 1;
            }
        }
        processes += all.len();
    }
    Ok(format!("{TREES} trees, {processes} processes, {checked_edges} parent edges, no drift"))
}

// ---------------------------------------------------------------------------
// 4. switch accounting

fn switch_accounting() -> Outcome {
    const KERNEL_SLEEP_CTX: u64 = 2;
    const NAIVE_CTX: u64 = 4;
    const VM_SWITCHES: u64 = 2;
    let mut traces = vec![builtin_gingerbreak(), generate_workload(&WorkloadDistribution::default(), 2_000, 9)];
    traces.extend((0..12).map(|s| random_scenario(100 + s, 250)));
    let mut redirected_total = 0;
    for trace in &traces {
        let k = report_for(trace, Policy::Builtin, WaitMode::KernelSleep).counters;
        let n = report_for(trace, Policy::Builtin, WaitMode::NaiveUserspace).counters;
        let r = k.calls_redirected;
        ensure(n.calls_redirected == r, || format!("{}: redirect counts differ", trace.name))?;
        ensure(n.context_switches - k.context_switches == 2 * r, || {
            format!("{}: delta {} for {r} redirected", trace.name, n.context_switches - k.context_switches)
        })?;
        // every switch is attributable to a redirected call, so host calls add none
        ensure(k.context_switches == KERNEL_SLEEP_CTX * r && n.context_switches == NAIVE_CTX * r, || {
            format!("{}: ctx {} / {} for {r} redirected", trace.name, k.context_switches, n.context_switches)
        })?;
        ensure(k.vm_switches == VM_SWITCHES * r && n.vm_switches == VM_SWITCHES * r, || {
            format!("{}: vm switches {} for {r} redirected", trace.name, k.vm_switches)
        })?;
        ensure(k.calls_host > 0, || format!("{}: no host calls exercised", trace.name))?;
        redirected_total += r;
    }
    let b = bench(1_000).map_err(|e| e.to_string())?;
    ensure(b.holds && b.kernel_sleep.host.context_switches == 0 && b.naive.host.vm_switches == 0, || {
        "bench: host calls switched".into()
    })?;
    Ok(format!("{} traces, {redirected_total} redirected calls, delta exactly 2 each; getpid costs 0", traces.len()))
}

// ---------------------------------------------------------------------------
// 5. workload routing ratio

fn workload_ratio() -> Outcome {
    const N: usize = 10_000;
    // printed mix: UI services, then the system services that must be redirected
    let ui = [81.35, 7.72, 3.35];
    let system = [2.96, 2.69, 1.54, 0.20, 0.14, 0.03, 0.01, 2.0 / 59_795.0 * 100.0, 1.0 / 59_795.0 * 100.0];
    let total: f64 = ui.iter().chain(system.iter()).sum();
    let non_ui = system.iter().sum::<f64>() / total;
    let dist = WorkloadDistribution::default();
    ensure((dist.ui_fraction() - (1.0 - non_ui)).abs() < 1e-9, || format!("ui fraction {}", dist.ui_fraction()))?;
    let mut worst = 0.0f64;
    let mut host_min = 1.0f64;
    for seed in [1, 2, 3] {
        let report = report_for(&generate_workload(&dist, N, seed), Policy::Builtin, WaitMode::KernelSleep);
        let tally = report.routes.by_kind.get(&SyscallKind::BinderIoctl).copied().unwrap_or_default();
        ensure(tally.total() == N as u64, || format!("seed {seed}: {} binder calls routed", tally.total()))?;
        let host = tally.host as f64 / N as f64;
        let redirected = tally.redirect as f64 / N as f64;
        ensure(host >= 0.91, || format!("seed {seed}: host fraction {host:.4}"))?;
        ensure((redirected - non_ui).abs() <= 0.01, || {
            format!("seed {seed}: redirected {redirected:.4} vs non-UI mass {non_ui:.4}")
        })?;
        worst = worst.max((redirected - non_ui).abs());
        host_min = host_min.min(host);
    }
    Ok(format!("host share >= {:.2}%, redirected within {:.2} points of {:.2}%", host_min * 100.0, worst * 100.0, non_ui * 100.0))
}

// ---------------------------------------------------------------------------
// 6. isolation

fn writes_in(trace: &ScenarioTrace) -> Vec<(String, String, Vec<u8>)> {
    // actor -> package, following forks
    let mut package_of: BTreeMap<&str, &str> = BTreeMap::new();
    let mut writes = Vec::new();
    for step in &trace.steps {
        match step {
            Step::Spawn { actor, package } => {
                package_of.insert(actor, package);
            }
            Step::Fork { actor, child } => {
                let p = package_of[actor.as_str()];
                package_of.insert(child, p);
            }
            Step::Syscall { actor, call, .. } if call.kind == SyscallKind::FileWrite => {
                let data = call.data.clone().unwrap_or_default().into_bytes();
                writes.push((package_of[actor.as_str()].to_string(), call.path.clone().unwrap_or_default(), data));
            }
            _ => {}
        }
    }
    writes
}

fn isolation_invariants() -> Outcome {
    let mut files_seen = 0;
    let mut writes_total = 0;
    for seed in 0..25u64 {
        let trace = random_scenario(seed, 300);
        let run = run_scenario(&trace, EngineConfig::default(), RoImage::builtin()).map_err(|e| e.to_string())?;
        let state = &run.state;
        ensure(state.image_intact(), || format!("seed {seed}: image changed"))?;
        ensure(run.report.digests.host_ro_boot == run.report.digests.host_ro_final, || {
            format!("seed {seed}: image digest changed")
        })?;
        let mut bindings = BindingTable::new();
        for app in trace.bindings.iter().filter(|a| !a.trusted) {
            bindings.bind_app(&app.package, Uid(app.uid)).unwrap();
        }
        let mut places: Vec<(Option<Vmid>, &hvsim_core::kernelsim::Tree)> = vec![(Some(Vmid::HOST), &state.host_rw), (None, &state.exec_cache)];
        places.extend(state.containers.iter().map(|(v, s)| (Some(*v), &s.rw)));
        for (package, path, data) in writes_in(&trace) {
            writes_total += 1;
            let home = bindings.get(&package).map_or(Vmid::HOST, |b| b.vmid);
            for (vmid, tree) in &places {
                let hits: Vec<_> = tree.files().filter(|(_, b)| *b == data.as_slice()).map(|(p, _)| p.to_string()).collect();
                if hits.is_empty() {
                    continue;
                }
                ensure(*vmid == Some(home), || {
                    format!("seed {seed}: {package} wrote {path}, bytes found in {vmid:?} at {hits:?}")
                })?;
                files_seen += 1;
            }
        }
    }
    ensure(files_seen > 100, || format!("only {files_seen} written files located"))?;

    let (denied, allowed) = share_trials(1_000)?;
    ensure(denied == 1_000, || format!("{denied}/1000 cross-container shares denied"))?;
    ensure(allowed > 0, || "same-container control shares were all refused".into())?;
    cross_reads()?;
    Ok(format!(
        "25 scenarios, {files_seen}/{writes_total} written payloads found only in the writer's namespace; 1000/1000 cross shares denied"
    ))
}

const SHARE_APPS: [(&str, u32, bool); 3] = [("com.red", 10_011, false), ("com.green", 10_012, false), ("com.blue", 10_013, false)];

fn share_trials(n: usize) -> Result<(usize, usize), String> {
    let mut e = Engine::local(EngineConfig::default(), RoImage::builtin(), &apps(&SHARE_APPS)).map_err(|e| e.to_string())?;
    let mut procs: Vec<(Pid, usize)> = Vec::new();
    for (i, (p, _, _)) in SHARE_APPS.iter().enumerate() {
        let pid = e.spawn(p).map_err(|e| e.to_string())?;
        procs.push((pid, i));
        procs.push((e.fork(pid).map_err(|e| e.to_string())?, i));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let (mut denied, mut allowed) = (0, 0);
    let mut attempts = 0;
    while attempts < n {
        let (creator, ca) = procs[rng.random_range(0..procs.len())];
        let (recipient, ra) = procs[rng.random_range(0..procs.len())];
        let seg = e
            .syscall(creator, &SyscallDesc::new(SyscallKind::AshmemIoctl).with_arg(4096), &[], &[])
            .map_err(|e| e.to_string())?
            .outcome
            .value()
            .ok_or("segment creation failed")? as u64;
        let outcome = if rng.random_bool(0.5) {
            let offer = SyscallDesc::binder("intent").with_target(recipient).with_flags(flags::SEGMENT).with_arg(seg);
            e.syscall(creator, &offer, &[], &[]).map_err(|e| e.to_string())?.outcome
        } else {
            let map = SyscallDesc::new(SyscallKind::Mmap).with_path("/dev/ashmem").with_arg(seg);
            e.syscall(recipient, &map, &[], &[]).map_err(|e| e.to_string())?.outcome
        };
        let refused = matches!(outcome, CallOutcome::SegmentDenied { .. });
        if ca == ra {
            allowed += usize::from(!refused);
        } else {
            attempts += 1;
            denied += usize::from(refused);
        }
    }
    Ok((denied, allowed))
}

fn cross_reads() -> Result<(), String> {
    let specs = [("com.red", 10_011, false), ("com.green", 10_012, false), ("com.pre", 1_000, true)];
    let mut e = Engine::local(EngineConfig::default(), RoImage::builtin(), &apps(&specs)).map_err(|e| e.to_string())?;
    let writer = e.spawn("com.red").map_err(|e| e.to_string())?;
    let others = [e.spawn("com.green").map_err(|e| e.to_string())?, e.spawn("com.pre").map_err(|e| e.to_string())?];
    let secret = b"red secret";
    for path in ["/mnt/sdcard/shared.txt", "/data/local/tmp/drop", "/data/data/com.red/db"] {
        let fd = match e
            .syscall(writer, &SyscallDesc::open_write(path).with_flags(flags::TRUNCATE), &[], &[])
            .map_err(|e| e.to_string())?
            .outcome
        {
            CallOutcome::Fd(fd) => fd,
            other => return Err(format!("open {path} for write: {other:?}")),
        };
        let write = SyscallDesc::new(SyscallKind::FileWrite).with_path(path);
        e.syscall(writer, &write, secret, &[fd]).map_err(|e| e.to_string())?;
        e.syscall(writer, &SyscallDesc::new(SyscallKind::FileClose).with_path(path), &[], &[fd])
            .map_err(|e| e.to_string())?;
        let own = read_all(&mut e, writer, path)?;
        ensure(own.as_deref() == Some(&secret[..]), || format!("writer cannot read back {path}: {own:?}"))?;
        for reader in others {
            let got = read_all(&mut e, reader, path)?;
            ensure(got.as_deref() != Some(&secret[..]), || format!("{reader:?} read {path} written in another container"))?;
        }
    }
    Ok(())
}

fn read_all<B: hvsim_core::engine::ContainerBackend>(e: &mut Engine<B>, pid: Pid, path: &str) -> Result<Option<Vec<u8>>, String> {
    let fd = match e.syscall(pid, &SyscallDesc::open_read(path), &[], &[]).map_err(|e| e.to_string())?.outcome {
        CallOutcome::Fd(fd) => fd,
        _ => return Ok(None),
    };
    let read = SyscallDesc::new(SyscallKind::FileRead).with_path(path).with_arg(4096);
    let out = e.syscall(pid, &read, &[], &[fd]).map_err(|e| e.to_string())?.outcome;
    e.syscall(pid, &SyscallDesc::new(SyscallKind::FileClose).with_path(path), &[], &[fd])
        .map_err(|e| e.to_string())?;
    Ok(out.is_ok().then(|| out.out().to_vec()))
}

// ---------------------------------------------------------------------------
// 7. memory model

fn memory_model() -> Outcome {
    let m = meminfo(64).map_err(|e| e.to_string())?;
    ensure((m.ratio - 0.150).abs() <= 0.001, || format!("ratio {}", m.ratio))?;
    ensure((m.ratio - 14.87 / 99.11).abs() < 1e-12, || format!("ratio {} is not 14.87/99.11", m.ratio))?;
    ensure(meminfo(44).is_ok(), || "44 MB rejected".into())?;
    ensure(meminfo(43).is_err(), || "43 MB accepted".into())?;
    let bin = env!("CARGO_BIN_EXE_hvsim");
    let out = Command::new(bin).args(["meminfo"]).output().map_err(|e| e.to_string())?;
    let text = String::from_utf8_lossy(&out.stdout);
    ensure(out.status.success() && text.contains("0.150") && text.contains("modeled"), || format!("meminfo printed {text:?}"))?;
    let low = Command::new(bin).args(["meminfo", "--memory-mb", "32"]).output().map_err(|e| e.to_string())?;
    ensure(low.status.code() == Some(2), || format!("32 MB exited {}", low.status))?;
    let cfg = EngineConfig {
        memory_mb: 40,
        ..EngineConfig::default()
    };
    let refused = Engine::local(cfg, RoImage::builtin(), &apps(&TREE_APPS));
    ensure(matches!(refused, Err(EngineError::Model(_))), || "engine booted 40 MB guests".into())?;
    Ok(format!("ratio {:.4} (modeled); guests below 44 MB rejected", m.ratio))
}

// ---------------------------------------------------------------------------
// 8. determinism

fn determinism() -> Outcome {
    let mut traces = vec![builtin_gingerbreak(), generate_workload(&WorkloadDistribution::default(), 500, 4)];
    traces.extend((0..6).map(|s| random_scenario(900 + s, 250)));
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    for trace in &traces {
        for policy in [Policy::Builtin, Policy::Passthrough] {
            let opts = |n: &str| RunOptions {
                policy: policy.clone(),
                record_wire: Some(dir.path().join(format!("{n}.wire"))),
                ..RunOptions::default()
            };
            let a = run(trace, &opts("a")).map_err(|e| format!("{}: {e}", trace.name))?;
            let b = run(trace, &opts("b")).map_err(|e| format!("{}: {e}", trace.name))?;
            ensure(a.json == b.json, || format!("{}: reports differ between runs", trace.name))?;
            let wa = std::fs::read(dir.path().join("a.wire")).map_err(|e| e.to_string())?;
            let wb = std::fs::read(dir.path().join("b.wire")).map_err(|e| e.to_string())?;
            ensure(wa == wb, || format!("{}: wire recordings differ", trace.name))?;
            let cfg = EngineConfig {
                policy: policy.clone(),
                ..EngineConfig::default()
            };
            let threaded = run_scenario_with(trace, cfg, RoImage::builtin(), ThreadedBackend::new()).map_err(|e| e.to_string())?;
            let threaded_json = hvsim::commands::report_json(&threaded.report);
            ensure(threaded_json == a.json, || format!("{}: threaded report differs", trace.name))?;
        }
    }
    Ok(format!("{} traces x 2 policies byte-identical across runs and the threaded backend", traces.len()))
}

// ---------------------------------------------------------------------------
// 9. limits

fn limits() -> Outcome {
    let mut table = BindingTable::new();
    for i in 0..255u32 {
        table.bind_app(&format!("com.app{i}"), Uid(10_000 + i)).map_err(|e| e.to_string())?;
    }
    let last = table.get("com.app254").unwrap().vmid;
    ensure(last.get() == 255, || format!("255th container got {last:?}"))?;
    let refused = table.bind_app("com.app255", Uid(10_255));
    ensure(refused == Err(ModelError::ContainersExhausted), || format!("256th bind gave {refused:?}"))?;
    ensure(table.containers_allocated() == 255, || "allocation count moved".into())?;

    let many: Vec<AppSpec> = (0..256u32)
        .map(|i| AppSpec {
            package: format!("com.app{i}"),
            uid: 10_000 + i,
            trusted: false,
            native: Vec::new(),
        })
        .collect();
    let full = Engine::local(EngineConfig::default(), RoImage::builtin(), &many[..255]).map_err(|e| e.to_string())?;
    ensure(full.bindings().containers_allocated() == 255, || "255 containers not allocated".into())?;
    let over = Engine::local(EngineConfig::default(), RoImage::builtin(), &many);
    ensure(matches!(over, Err(EngineError::Model(ModelError::ContainersExhausted))), || {
        format!("256 apps: {:?}", over.as_ref().err())
    })?;

    let mut e = Engine::local(EngineConfig::default(), RoImage::builtin(), &apps(&TREE_APPS)).map_err(|e| e.to_string())?;
    let pid = e.spawn("com.one").map_err(|e| e.to_string())?;
    let path = "/data/data/com.one/cache.bin";
    let fd = match e.syscall(pid, &SyscallDesc::open_write(path), &[], &[]).map_err(|e| e.to_string())?.outcome {
        CallOutcome::Fd(fd) => fd,
        other => return Err(format!("open for write: {other:?}")),
    };
    e.syscall(pid, &SyscallDesc::new(SyscallKind::FileWrite).with_path(path), b"data", &[fd])
        .map_err(|e| e.to_string())?;
    for call in [
        SyscallDesc::new(SyscallKind::Mmap).with_path(path),
        SyscallDesc::new(SyscallKind::Mmap).with_path(path).with_flags(flags::WRITE),
        SyscallDesc::new(SyscallKind::Mmap).with_path("/system/lib/libc.so").with_flags(flags::WRITE),
    ] {
        let d = e.syscall(pid, &call, &[], &[]).map_err(|e| e.to_string())?;
        ensure(d.outcome == CallOutcome::Denied(DenyReason::UnsupportedMmap), || format!("{call:?}: {:?}", d.outcome))?;
        ensure(d.route == RouteDecision::Deny(DenyReason::UnsupportedMmap), || format!("{call:?} routed {}", d.route))?;
    }
    let ro = e
        .syscall(pid, &SyscallDesc::new(SyscallKind::Mmap).with_path("/system/lib/libc.so"), &[], &[])
        .map_err(|e| e.to_string())?;
    ensure(ro.route == RouteDecision::Host, || format!("read-only library mmap routed {}", ro.route))?;
    Ok("256th container refused with ContainersExhausted; writable mmap gives UnsupportedMmap".into())
}

// ---------------------------------------------------------------------------

fn main() -> ExitCode {
    let criteria: [Criterion; 9] = [
        ("gingerbreak confinement", gingerbreak_confinement),
        ("routing oracle equivalence", routing_oracles),
        ("no-escape property", no_escape),
        ("switch accounting", switch_accounting),
        ("workload routing ratio", workload_ratio),
        ("isolation invariants", isolation_invariants),
        ("memory model", memory_model),
        ("determinism", determinism),
        ("limit enforcement", limits),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        if !filter.is_empty() && !filter.iter().any(|f| name.contains(f.as_str())) {
            continue;
        }
        let started = Instant::now();
        let result = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        let took = started.elapsed();
        match result {
            Ok(detail) => println!("PASS criterion {} ({name}): {detail} [{took:.2?}]", i + 1),
            Err(detail) => {
                failed += 1;
                println!("FAIL criterion {} ({name}): {detail} [{took:.2?}]", i + 1);
            }
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
