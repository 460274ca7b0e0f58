use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use hvsim::files::{load_trace, parse_policy, write_file, CliError};
use hvsim::{bench, meminfo, run, RunOptions};
use hvsim_core::model::{WaitMode, DEFAULT_GUEST_MEMORY_MB};
use hvsim_core::scenario::{builtin_gingerbreak, ScenarioTrace};

#[derive(Parser)]
#[command(name = "hvsim", version, about = "Deterministic simulator of per-app containers with host-side syscall redirection")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Kernel,
    Naive,
}

#[derive(Clone, Copy, ValueEnum)]
enum Builtin {
    Gingerbreak,
}

impl Builtin {
    fn trace(self) -> ScenarioTrace {
        match self {
            Builtin::Gingerbreak => builtin_gingerbreak(),
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario trace and report assertion results.
    Run {
        /// Scenario JSON file.
        #[arg(conflicts_with = "builtin", required_unless_present = "builtin")]
        file: Option<PathBuf>,
        #[arg(long, value_enum)]
        builtin: Option<Builtin>,
        /// `builtin`, `passthrough`, or a rule-table JSON file.
        #[arg(long, default_value = "builtin")]
        policy: String,
        #[arg(long, value_enum, default_value = "kernel")]
        wait_mode: Mode,
        /// Overrides the seed in the trace.
        #[arg(long)]
        seed: Option<u64>,
        /// Directory to load as the read-only system image.
        #[arg(long)]
        image: Option<PathBuf>,
        #[arg(long, default_value_t = DEFAULT_GUEST_MEMORY_MB)]
        memory_mb: u32,
        /// Write the JSON report here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Write every host/container frame here.
        #[arg(long)]
        record_wire: Option<PathBuf>,
        /// Also run with one thread per container and require an identical report.
        #[arg(long)]
        threaded: bool,
    },
    /// Compare switch counts of the two proxy wait modes.
    Bench {
        #[arg(long, default_value_t = 10_000)]
        n: u64,
    },
    /// Print the modeled memory footprint of a headless guest.
    Meminfo {
        #[arg(long, default_value_t = DEFAULT_GUEST_MEMORY_MB)]
        memory_mb: u32,
    },
    /// Print a builtin scenario as JSON.
    Export {
        #[arg(long, value_enum)]
        builtin: Builtin,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn to_json<T: serde::Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("value serializes");
    s.push('\n');
    s
}

fn execute(cli: Cli) -> Result<ExitCode, CliError> {
    match cli.command {
        Command::Run {
            file,
            builtin,
            policy,
            wait_mode,
            seed,
            image,
            memory_mb,
            out,
            record_wire,
            threaded,
        } => {
            let trace = match (file, builtin) {
                (Some(path), _) => load_trace(&path)?,
                (None, Some(b)) => b.trace(),
                (None, None) => return Err(CliError::Config("a scenario file or --builtin is required".into())),
            };
            let opts = RunOptions {
                policy: parse_policy(&policy)?,
                wait_mode: match wait_mode {
                    Mode::Kernel => WaitMode::KernelSleep,
                    Mode::Naive => WaitMode::NaiveUserspace,
                },
                seed,
                image,
                memory_mb,
                out: out.clone(),
                record_wire,
                threaded,
            };
            let output = run(&trace, &opts)?;
            if out.is_none() {
                print!("{}", output.json);
            }
            for a in &output.report.assertions {
                eprintln!("{} {} ({})", if a.passed { "PASS" } else { "FAIL" }, a.id, a.detail);
            }
            let c = &output.report.counters;
            eprintln!(
                "redirected={} host={} denied={} vm_switches={} context_switches={}",
                c.calls_redirected, c.calls_host, c.calls_denied, c.vm_switches, c.context_switches
            );
            Ok(if output.report.passed { ExitCode::SUCCESS } else { ExitCode::from(1) })
        }
        Command::Bench { n } => {
            let report = bench(n)?;
            print!("{}", to_json(&report));
            Ok(if report.holds { ExitCode::SUCCESS } else { ExitCode::from(1) })
        }
        Command::Meminfo { memory_mb } => {
            let report = meminfo(memory_mb)?;
            println!(
                "stock {:.2} MB, headless {:.2} MB, ratio {:.3} ({})",
                report.stock_active_mb, report.headless_active_mb, report.ratio, report.basis
            );
            Ok(ExitCode::SUCCESS)
        }
        Command::Export { builtin, out } => {
            let json = to_json(&builtin.trace());
            match out {
                Some(path) => write_file(&path, json.as_bytes())?,
                None => print!("{json}"),
            }
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(2) } else { ExitCode::SUCCESS };
        }
    };
    match execute(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("hvsim: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
