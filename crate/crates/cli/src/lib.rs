//! Host-side tooling around `hvsim-core`: loading scenario, policy and image
//! files, a thread-per-container backend, wire recording, and the command
//! implementations behind the `hvsim` binary.

pub mod commands;
pub mod files;
pub mod image;
pub mod threaded;
pub mod wire;

pub use commands::{bench, meminfo, run, BenchReport, MeminfoReport, RunOptions, RunOutput};
pub use files::{load_policy, load_trace, parse_policy, CliError};
pub use threaded::ThreadedBackend;
