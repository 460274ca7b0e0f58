use std::fs::File;
use std::io::BufWriter;
use std::path::PathBuf;
use std::time::Instant;

use serde::Serialize;

use hvsim_core::engine::{AppSpec, Engine, EngineConfig};
use hvsim_core::kernelsim::RoImage;
use hvsim_core::model::{ContainerConfig, Vmid, WaitMode, HEADLESS_ACTIVE_MB, STOCK_ACTIVE_MB};
use hvsim_core::policy::{Policy, SyscallDesc, SyscallKind};
use hvsim_core::scenario::{run_scenario, run_scenario_with, ScenarioReport, ScenarioTrace};
use hvsim_core::transport::SwitchCounter;

use crate::files::{write_file, CliError};
use crate::image::load_image_dir;
use crate::threaded::ThreadedBackend;
use crate::wire::write_frames;

#[derive(Debug, Clone)]
pub struct RunOptions {
    pub policy: Policy,
    pub wait_mode: WaitMode,
    /// Replaces the trace seed when set.
    pub seed: Option<u64>,
    pub image: Option<PathBuf>,
    pub memory_mb: u32,
    pub out: Option<PathBuf>,
    pub record_wire: Option<PathBuf>,
    pub threaded: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        let cfg = EngineConfig::default();
        RunOptions {
            policy: cfg.policy,
            wait_mode: cfg.wait_mode,
            seed: None,
            image: None,
            memory_mb: cfg.memory_mb,
            out: None,
            record_wire: None,
            threaded: false,
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub report: ScenarioReport,
    /// The report as written to `--out`, with a trailing newline.
    pub json: String,
}

pub fn report_json(report: &ScenarioReport) -> String {
    let mut s = serde_json::to_string_pretty(report).expect("report serializes");
    s.push('\n');
    s
}

fn first_difference(a: &str, b: &str) -> String {
    match a.lines().zip(b.lines()).enumerate().find(|(_, (x, y))| x != y) {
        Some((n, (x, y))) => format!("line {}: {x:?} vs {y:?}", n + 1),
        None => format!("length {} vs {}", a.len(), b.len()),
    }
}

/// Runs a trace. With `threaded`, the trace also runs on a thread-per-container
/// backend and the two reports must be byte-identical.
pub fn run(trace: &ScenarioTrace, opts: &RunOptions) -> Result<RunOutput, CliError> {
    let mut trace = trace.clone();
    if let Some(seed) = opts.seed {
        trace.seed = seed;
    }
    let image = match &opts.image {
        Some(dir) => load_image_dir(dir)?,
        None => RoImage::builtin(),
    };
    let config = EngineConfig {
        policy: opts.policy.clone(),
        wait_mode: opts.wait_mode,
        seed: trace.seed,
        memory_mb: opts.memory_mb,
        record_wire: opts.record_wire.is_some(),
        ..EngineConfig::default()
    };
    let local = run_scenario(&trace, config.clone(), image.clone())?;
    let json = report_json(&local.report);
    if opts.threaded {
        let threaded = run_scenario_with(&trace, config, image, ThreadedBackend::new())?;
        let other = report_json(&threaded.report);
        if other != json {
            return Err(CliError::Divergence(first_difference(&json, &other)));
        }
    }
    if let Some(path) = &opts.record_wire {
        let file = File::create(path).map_err(|source| CliError::Write {
            path: path.clone(),
            source,
        })?;
        write_frames(BufWriter::new(file), &local.wire).map_err(|source| CliError::Write {
            path: path.clone(),
            source,
        })?;
    }
    if let Some(path) = &opts.out {
        write_file(path, json.as_bytes())?;
    }
    Ok(RunOutput {
        report: local.report,
        json,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct BenchMode {
    pub wait_mode: WaitMode,
    pub redirected: SwitchCounter,
    pub host: SwitchCounter,
    /// Not deterministic and not part of any check.
    pub wall_clock_ms: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct BenchReport {
    pub n: u64,
    pub kernel_sleep: BenchMode,
    pub naive: BenchMode,
    /// `ctx(naive) - ctx(kernel_sleep)` over the redirected calls.
    pub context_switch_delta: u64,
    /// The delta equals two per redirected call and host calls switch nothing.
    pub holds: bool,
}

const BENCH_PACKAGE: &str = "com.example.bench";

fn bench_mode(n: u64, wait_mode: WaitMode) -> Result<BenchMode, CliError> {
    let config = EngineConfig {
        wait_mode,
        ..EngineConfig::default()
    };
    let app = AppSpec {
        package: BENCH_PACKAGE.into(),
        uid: 10300,
        trusted: false,
        native: Vec::new(),
    };
    let mut engine = Engine::local(config, RoImage::builtin(), &[app]).map_err(|e| CliError::Config(e.to_string()))?;
    let pid = engine.spawn(BENCH_PACKAGE).map_err(|e| CliError::Config(e.to_string()))?;
    let socket = SyscallDesc::new(SyscallKind::SocketOp).with_arg(1);
    let getpid = SyscallDesc::new(SyscallKind::GetPid);
    let started = Instant::now();
    let before = *engine.counter();
    for _ in 0..n {
        engine.syscall(pid, &socket, &[], &[]).map_err(|e| CliError::Config(e.to_string()))?;
    }
    let mid = *engine.counter();
    for _ in 0..n {
        engine.syscall(pid, &getpid, &[], &[]).map_err(|e| CliError::Config(e.to_string()))?;
    }
    let end = *engine.counter();
    Ok(BenchMode {
        wait_mode,
        redirected: mid.since(&before),
        host: end.since(&mid),
        wall_clock_ms: started.elapsed().as_secs_f64() * 1000.0,
    })
}

/// `n` redirected socket calls then `n` host `getpid` calls, once per wait mode.
pub fn bench(n: u64) -> Result<BenchReport, CliError> {
    if n == 0 {
        return Err(CliError::Config("--n must be at least 1".into()));
    }
    let kernel_sleep = bench_mode(n, WaitMode::KernelSleep)?;
    let naive = bench_mode(n, WaitMode::NaiveUserspace)?;
    let delta = naive
        .redirected
        .context_switches
        .saturating_sub(kernel_sleep.redirected.context_switches);
    let holds = kernel_sleep.redirected.calls_redirected == n
        && naive.redirected.calls_redirected == n
        && delta == 2 * n
        && [&kernel_sleep.host, &naive.host]
            .iter()
            .all(|h| h.calls_host == n && h.vm_switches == 0 && h.context_switches == 0);
    Ok(BenchReport {
        n,
        kernel_sleep,
        naive,
        context_switch_delta: delta,
        holds,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct MeminfoReport {
    pub basis: &'static str,
    pub stock_active_mb: f64,
    pub headless_active_mb: f64,
    pub ratio: f64,
    pub guest_memory_mb: u32,
}

/// Modeled memory of a headless guest against a stock one. Rejects guest
/// sizes below the boot minimum.
pub fn meminfo(memory_mb: u32) -> Result<MeminfoReport, CliError> {
    ContainerConfig::new(Vmid::from_u8(1), memory_mb, WaitMode::default())
        .map_err(|e| CliError::Config(e.to_string()))?;
    Ok(MeminfoReport {
        basis: "modeled",
        stock_active_mb: STOCK_ACTIVE_MB,
        headless_active_mb: HEADLESS_ACTIVE_MB,
        ratio: HEADLESS_ACTIVE_MB / STOCK_ACTIVE_MB,
        guest_memory_mb: memory_mb,
    })
}
