//! Scenario traces, the step interpreter and its report, confinement
//! assertions, the built-in Gingerbreak walkthrough, and workload
//! generators.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::{AppSpec, CallOutcome, ContainerBackend, Engine, EngineConfig, EngineError, LocalBackend, RouteHistogram, WireFrame};
use crate::errno::Errno;
use crate::kernelsim::kernel::{vold_message, KProc, Role, LOGCAT_EXE, LOG_DEVICE, LOG_RESTART, VOLD_EXE};
use crate::kernelsim::vfs::{hex, Digest};
use crate::kernelsim::{ExecOutcome, KernelSnapshot, RoImage, Tree};
use crate::model::{Pid, ProcessDescriptor, Vmid, WaitMode};
use crate::policy::{flags, DenyReason, PolicyError, RouteDecision, SyscallDesc, SyscallKind, UI_SERVICES};
use crate::transport::SwitchCounter;

pub const REPORT_SCHEMA: u32 = 1;

/// A literal integer or the name of a saved value or actor.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Operand {
    Int(i64),
    Var(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CallFlag {
    Write,
    Create,
    Truncate,
    Append,
    Segment,
    HypercallReturn,
}

impl CallFlag {
    fn bits(self) -> u16 {
        match self {
            CallFlag::Write => flags::WRITE,
            CallFlag::Create => flags::CREATE,
            CallFlag::Truncate => flags::TRUNCATE,
            CallFlag::Append => flags::APPEND,
            CallFlag::Segment => flags::SEGMENT,
            CallFlag::HypercallReturn => flags::HYPERCALL_RETURN,
        }
    }
}

/// One call as written in a scenario file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CallSpec {
    pub kind: SyscallKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fd: Option<Operand>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<Operand>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub service: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub arg: Option<Operand>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub flags: Vec<CallFlag>,
    /// Inline payload as UTF-8 text.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub data: Option<String>,
    /// Inline payload taken from the output of an earlier call.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub data_from: Option<String>,
}

impl CallSpec {
    pub fn new(kind: SyscallKind) -> Self {
        CallSpec {
            kind,
            path: None,
            fd: None,
            target: None,
            service: None,
            arg: None,
            flags: Vec::new(),
            data: None,
            data_from: None,
        }
    }

    pub fn path(mut self, path: &str) -> Self {
        self.path = Some(path.into());
        self
    }

    pub fn fd(mut self, var: &str) -> Self {
        self.fd = Some(Operand::Var(var.into()));
        self
    }

    pub fn target(mut self, target: Operand) -> Self {
        self.target = Some(target);
        self
    }

    pub fn service(mut self, service: &str) -> Self {
        self.service = Some(service.into());
        self
    }

    pub fn arg(mut self, arg: Operand) -> Self {
        self.arg = Some(arg);
        self
    }

    pub fn flags(mut self, flags: &[CallFlag]) -> Self {
        self.flags = flags.to_vec();
        self
    }

    pub fn data(mut self, text: &str) -> Self {
        self.data = Some(text.into());
        self
    }

    pub fn data_from(mut self, var: &str) -> Self {
        self.data_from = Some(var.into());
        self
    }

    fn vars(&self) -> impl Iterator<Item = &str> {
        [&self.fd, &self.target, &self.arg]
            .into_iter()
            .filter_map(|o| match o {
                Some(Operand::Var(v)) => Some(v.as_str()),
                _ => None,
            })
            .chain(self.data_from.as_deref())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExpectedRoute {
    Host,
    /// Into the actor's own container.
    Redirect,
    Deny,
}

impl ExpectedRoute {
    fn matches(self, decision: RouteDecision, actor_vmid: Vmid) -> bool {
        match (self, decision) {
            (ExpectedRoute::Host, RouteDecision::Host) => true,
            (ExpectedRoute::Redirect, RouteDecision::Redirect(v)) => v == actor_vmid,
            (ExpectedRoute::Deny, RouteDecision::Deny(_)) => true,
            _ => false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScanSource {
    /// Pids registered for netlink, from `/proc/net/netlink`.
    Netlink,
    /// Every pid listed in `/proc`.
    All,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "check", rename_all = "snake_case", deny_unknown_fields)]
pub enum AssertionId {
    /// (a) The read-only image is byte-identical to the one sealed at boot.
    HostImageUnchanged,
    /// (b) No uid-0 process was created in the host namespace.
    NoHostRootActor,
    /// (c) Copies of `image` exist in `actor`'s container and nowhere else.
    ExploitCopyConfined { actor: String, image: String },
    /// (d) Every container but `except_actor`'s is as it was at `checkpoint`.
    ContainersUnchangedSince { checkpoint: String, except_actor: String },
    /// A uid-0 process is running inside `actor`'s container.
    RootInContainer { actor: String },
}

impl AssertionId {
    pub fn label(&self) -> String {
        match self {
            AssertionId::HostImageUnchanged => "host_image_unchanged".into(),
            AssertionId::NoHostRootActor => "no_host_root_actor".into(),
            AssertionId::ExploitCopyConfined { actor, .. } => format!("exploit_copy_confined({actor})"),
            AssertionId::ContainersUnchangedSince { checkpoint, .. } => format!("containers_unchanged_since({checkpoint})"),
            AssertionId::RootInContainer { actor } => format!("root_in_container({actor})"),
        }
    }
}

fn default_probes() -> u32 {
    64
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum Step {
    Spawn {
        actor: String,
        package: String,
    },
    Fork {
        actor: String,
        child: String,
    },
    Exec {
        actor: String,
        path: String,
    },
    /// Process death at the host level.
    Kill {
        actor: String,
    },
    Syscall {
        actor: String,
        call: CallSpec,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        save_as: Option<String>,
    },
    ExpectRoute {
        actor: String,
        call: CallSpec,
        decision: ExpectedRoute,
    },
    Checkpoint {
        label: String,
    },
    /// Reads procfs through ordinary calls looking for a process whose first
    /// argv entry is `exe`, saving its pid.
    ScanProcfs {
        actor: String,
        exe: String,
        source: ScanSource,
        save_as: String,
    },
    /// Probes vold with decreasing negative indices, reading `logfile` after
    /// each probe for the crash it leaves, until a probe leaves none.
    BruteForceVold {
        actor: String,
        vold: String,
        payload: String,
        logfile: String,
        #[serde(default = "default_probes")]
        max_probes: u32,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        save_as: Option<String>,
    },
    Assert {
        assertion: AssertionId,
    },
}

impl Step {
    pub fn op(&self) -> &'static str {
        match self {
            Step::Spawn { .. } => "spawn",
            Step::Fork { .. } => "fork",
            Step::Exec { .. } => "exec",
            Step::Kill { .. } => "kill",
            Step::Syscall { .. } => "syscall",
            Step::ExpectRoute { .. } => "expect_route",
            Step::Checkpoint { .. } => "checkpoint",
            Step::ScanProcfs { .. } => "scan_procfs",
            Step::BruteForceVold { .. } => "brute_force_vold",
            Step::Assert { .. } => "assert",
        }
    }

    pub fn actor(&self) -> Option<&str> {
        match self {
            Step::Spawn { actor, .. }
            | Step::Fork { actor, .. }
            | Step::Exec { actor, .. }
            | Step::Kill { actor }
            | Step::Syscall { actor, .. }
            | Step::ExpectRoute { actor, .. }
            | Step::ScanProcfs { actor, .. }
            | Step::BruteForceVold { actor, .. } => Some(actor),
            Step::Checkpoint { .. } | Step::Assert { .. } => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioTrace {
    pub name: String,
    pub seed: u64,
    pub bindings: Vec<AppSpec>,
    pub steps: Vec<Step>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ScenarioError {
    #[error("step {step}: actor {actor} was not introduced by an earlier spawn or fork")]
    UnknownActor { step: usize, actor: String },
    #[error("step {step}: {name} is not saved by any earlier step")]
    UnknownVariable { step: usize, name: String },
    #[error("step {step}: checkpoint {label} is not defined earlier")]
    UnknownCheckpoint { step: usize, label: String },
    #[error("step {step}: package {package} is not among the bindings")]
    UnknownPackage { step: usize, package: String },
    #[error("step {step}: {error}")]
    Malformed { step: usize, error: PolicyError },
    #[error("engine setup failed: {0}")]
    Setup(EngineError),
}

/// What a step produced, as recorded in the report.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum StepResult {
    Ok {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        value: Option<i64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        out_len: Option<u64>,
    },
    Fd {
        fd: u32,
    },
    Exec {
        outcome: ExecOutcome,
    },
    Errno {
        errno: Errno,
    },
    Denied {
        reason: DenyReason,
    },
    SegmentDenied {
        segment: u32,
    },
    Transport {
        error: String,
    },
    Failed {
        message: String,
    },
    Checked {
        passed: bool,
    },
}

impl StepResult {
    fn from_outcome(outcome: &CallOutcome) -> StepResult {
        match outcome {
            CallOutcome::Value { value, out } => StepResult::Ok {
                value: Some(*value),
                out_len: (!out.is_empty()).then_some(out.len() as u64),
            },
            CallOutcome::Fd(fd) => StepResult::Fd { fd: *fd },
            CallOutcome::Exec(o) => StepResult::Exec { outcome: o.clone() },
            CallOutcome::Errno(e) => StepResult::Errno { errno: *e },
            CallOutcome::Denied(r) => StepResult::Denied { reason: *r },
            CallOutcome::SegmentDenied { segment } => StepResult::SegmentDenied { segment: *segment },
            CallOutcome::Transport(e) => StepResult::Transport { error: e.to_string() },
        }
    }

    fn value(value: i64) -> StepResult {
        StepResult::Ok {
            value: Some(value),
            out_len: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepRecord {
    pub index: usize,
    pub op: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub actor: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kind: Option<SyscallKind>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub route: Option<RouteDecision>,
    /// Intercepted calls the step issued.
    pub calls: u32,
    pub result: StepResult,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AssertionRecord {
    pub step: usize,
    pub id: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FinalDigests {
    pub host_ro_boot: String,
    pub host_ro_final: String,
    pub host_rw: String,
    pub exec_cache: String,
    pub containers: BTreeMap<Vmid, String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScenarioReport {
    pub schema: u32,
    pub name: String,
    pub seed: u64,
    pub policy: String,
    pub wait_mode: WaitMode,
    pub steps: Vec<StepRecord>,
    pub counters: SwitchCounter,
    pub routes: RouteHistogram,
    pub assertions: Vec<AssertionRecord>,
    pub digests: FinalDigests,
    pub passed: bool,
}

/// Simulation state captured for assertions.
#[derive(Debug, Clone)]
pub struct FinalState {
    pub image: RoImage,
    pub boot_digest: Digest,
    pub host_rw: Tree,
    pub exec_cache: Tree,
    pub containers: BTreeMap<Vmid, KernelSnapshot>,
    pub descriptors: Vec<ProcessDescriptor>,
    pub actors: BTreeMap<String, Pid>,
    pub checkpoints: BTreeMap<String, BTreeMap<Vmid, Digest>>,
}

impl FinalState {
    fn actor_vmid(&self, actor: &str) -> Option<Vmid> {
        let pid = self.actors.get(actor)?;
        self.descriptors.iter().find(|d| d.pid == *pid).map(|d| d.vmid)
    }

    pub fn image_intact(&self) -> bool {
        self.image.verify() && self.image.digest() == self.boot_digest
    }
}

fn holds_bytes(tree: &Tree, bytes: &[u8]) -> Vec<String> {
    tree.files().filter(|(_, b)| *b == bytes).map(|(p, _)| p.to_string()).collect()
}

/// Evaluates one declarative assertion against captured state.
pub fn evaluate(assertion: &AssertionId, state: &FinalState) -> (bool, String) {
    match assertion {
        AssertionId::HostImageUnchanged => {
            let ok = state.image_intact();
            (ok, format!("image digest {}", hex(&state.image.digest())))
        }
        AssertionId::NoHostRootActor => {
            let roots: Vec<_> = state
                .descriptors
                .iter()
                .filter(|d| d.vmid.is_host() && d.uid.is_root())
                .map(|d| d.pid.0)
                .collect();
            if roots.is_empty() {
                (true, "no uid-0 host process created".into())
            } else {
                (false, format!("uid-0 host processes {roots:?}"))
            }
        }
        AssertionId::ExploitCopyConfined { actor, image } => {
            let Ok(bytes) = state.image.tree().read(image) else {
                return (false, format!("{image} is not in the image"));
            };
            let Some(vmid) = state.actor_vmid(actor) else {
                return (false, format!("unknown actor {actor}"));
            };
            let mut inside = Vec::new();
            let mut outside = Vec::new();
            for p in holds_bytes(&state.host_rw, bytes) {
                outside.push(format!("host:{p}"));
            }
            for (v, snap) in &state.containers {
                for p in holds_bytes(&snap.rw, bytes) {
                    if *v == vmid && !vmid.is_host() {
                        inside.push(p);
                    } else {
                        outside.push(format!("container{}:{p}", v.get()));
                    }
                }
            }
            let ok = !inside.is_empty() && outside.is_empty();
            (ok, format!("copies in attacker container {inside:?}, elsewhere {outside:?}"))
        }
        AssertionId::ContainersUnchangedSince {
            checkpoint,
            except_actor,
        } => {
            let Some(before) = state.checkpoints.get(checkpoint) else {
                return (false, format!("no checkpoint {checkpoint}"));
            };
            let skip = state.actor_vmid(except_actor);
            let changed: Vec<u8> = before
                .iter()
                .filter(|(v, _)| Some(**v) != skip)
                .filter(|(v, d)| state.containers.get(v).map(|s| s.rw_digest) != Some(**d))
                .map(|(v, _)| v.get())
                .collect();
            let checked = before.keys().filter(|v| Some(**v) != skip).count();
            (changed.is_empty(), format!("{checked} containers checked, changed {changed:?}"))
        }
        AssertionId::RootInContainer { actor } => {
            let Some(vmid) = state.actor_vmid(actor).filter(|v| !v.is_host()) else {
                return (false, format!("{actor} has no container"));
            };
            let roots: Vec<&KProc> = state
                .containers
                .get(&vmid)
                .map(|s| {
                    s.procs
                        .iter()
                        .filter(|p| p.alive && p.uid.is_root() && p.role == Role::Native)
                        .collect()
                })
                .unwrap_or_default();
            match roots.first() {
                Some(p) => (true, format!("uid 0 pid {} running {} in container {}", p.pid, p.exe, vmid.get())),
                None => (false, format!("no uid-0 process started in container {}", vmid.get())),
            }
        }
    }
}

/// Names the attacker, its exploit binary and the pre-attack checkpoint.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AttackSpec {
    pub actor: String,
    pub image: String,
    pub checkpoint: String,
}

/// The four confinement checks (a) through (d).
pub fn assert_confinement(state: &FinalState, attack: &AttackSpec) -> Vec<(AssertionId, bool, String)> {
    [
        AssertionId::HostImageUnchanged,
        AssertionId::NoHostRootActor,
        AssertionId::ExploitCopyConfined {
            actor: attack.actor.clone(),
            image: attack.image.clone(),
        },
        AssertionId::ContainersUnchangedSince {
            checkpoint: attack.checkpoint.clone(),
            except_actor: attack.actor.clone(),
        },
    ]
    .into_iter()
    .map(|a| {
        let (ok, detail) = evaluate(&a, state);
        (a, ok, detail)
    })
    .collect()
}

/// Checks that every actor, variable, checkpoint and package a step names is
/// introduced earlier in the trace.
pub fn validate_trace(trace: &ScenarioTrace) -> Result<(), ScenarioError> {
    let packages: BTreeSet<&str> = trace.bindings.iter().map(|b| b.package.as_str()).collect();
    let mut actors: BTreeSet<&str> = BTreeSet::new();
    let mut vars: BTreeSet<&str> = BTreeSet::new();
    let mut checkpoints: BTreeSet<&str> = BTreeSet::new();
    for (step, s) in trace.steps.iter().enumerate() {
        let need_actor = |actors: &BTreeSet<&str>, a: &str| {
            if actors.contains(a) {
                Ok(())
            } else {
                Err(ScenarioError::UnknownActor {
                    step,
                    actor: a.into(),
                })
            }
        };
        let need_var = |vars: &BTreeSet<&str>, actors: &BTreeSet<&str>, v: &str| {
            if vars.contains(v) || actors.contains(v) {
                Ok(())
            } else {
                Err(ScenarioError::UnknownVariable { step, name: v.into() })
            }
        };
        match s {
            Step::Spawn { actor, package } => {
                if !packages.contains(package.as_str()) {
                    return Err(ScenarioError::UnknownPackage {
                        step,
                        package: package.clone(),
                    });
                }
                actors.insert(actor);
            }
            Step::Fork { actor, child } => {
                need_actor(&actors, actor)?;
                actors.insert(child);
            }
            Step::Exec { actor, .. } | Step::Kill { actor } => need_actor(&actors, actor)?,
            Step::Syscall { actor, call, save_as } => {
                need_actor(&actors, actor)?;
                for v in call.vars() {
                    need_var(&vars, &actors, v)?;
                }
                if let Some(name) = save_as {
                    vars.insert(name);
                }
            }
            Step::ExpectRoute { actor, call, .. } => {
                need_actor(&actors, actor)?;
                for v in call.vars() {
                    need_var(&vars, &actors, v)?;
                }
            }
            Step::Checkpoint { label } => {
                checkpoints.insert(label);
            }
            Step::ScanProcfs { actor, save_as, .. } => {
                need_actor(&actors, actor)?;
                vars.insert(save_as);
            }
            Step::BruteForceVold { actor, vold, save_as, .. } => {
                need_actor(&actors, actor)?;
                need_var(&vars, &actors, vold)?;
                if let Some(name) = save_as {
                    vars.insert(name);
                }
            }
            Step::Assert { assertion } => match assertion {
                AssertionId::HostImageUnchanged | AssertionId::NoHostRootActor => {}
                AssertionId::ExploitCopyConfined { actor, .. } | AssertionId::RootInContainer { actor } => {
                    need_actor(&actors, actor)?
                }
                AssertionId::ContainersUnchangedSince {
                    checkpoint,
                    except_actor,
                } => {
                    need_actor(&actors, except_actor)?;
                    if !checkpoints.contains(checkpoint.as_str()) {
                        return Err(ScenarioError::UnknownCheckpoint {
                            step,
                            label: checkpoint.clone(),
                        });
                    }
                }
            },
        }
    }
    Ok(())
}

/// Report plus the state it was computed from.
#[derive(Debug, Clone)]
pub struct ScenarioRun {
    pub report: ScenarioReport,
    pub state: FinalState,
    /// Host/container frames, populated when the config asks for them.
    pub wire: Vec<WireFrame>,
}

struct Runner<B: ContainerBackend> {
    engine: Engine<B>,
    actors: BTreeMap<String, Pid>,
    vars: BTreeMap<String, i64>,
    buffers: BTreeMap<String, Vec<u8>>,
    checkpoints: BTreeMap<String, BTreeMap<Vmid, Digest>>,
    assertions: Vec<AssertionRecord>,
}

enum Halt {
    Fatal(ScenarioError),
    Step(String),
}

impl From<EngineError> for Halt {
    fn from(e: EngineError) -> Self {
        match e {
            EngineError::ContainerBootFailure { .. } | EngineError::Protocol(_) => Halt::Fatal(ScenarioError::Setup(e)),
            other => Halt::Step(other.to_string()),
        }
    }
}

struct Issued {
    route: RouteDecision,
    outcome: CallOutcome,
    path: Option<String>,
}

impl<B: ContainerBackend> Runner<B> {
    fn pid(&self, actor: &str) -> Result<Pid, Halt> {
        self.actors
            .get(actor)
            .copied()
            .ok_or_else(|| Halt::Step(format!("actor {actor} is unknown")))
    }

    fn operand(&self, op: &Operand) -> Result<i64, Halt> {
        match op {
            Operand::Int(v) => Ok(*v),
            Operand::Var(name) => self
                .vars
                .get(name)
                .copied()
                .or_else(|| self.actors.get(name).map(|p| i64::from(p.0)))
                .ok_or_else(|| Halt::Step(format!("{name} holds no value"))),
        }
    }

    fn build(&self, spec: &CallSpec) -> Result<(SyscallDesc, Vec<u8>, Vec<u32>), Halt> {
        let mut call = SyscallDesc::new(spec.kind);
        call.path = spec.path.clone();
        call.ioctl_service = spec.service.clone();
        if let Some(t) = &spec.target {
            call.target_pid = Some(Pid(self.operand(t)? as u32));
        }
        if let Some(a) = &spec.arg {
            call.arg = self.operand(a)? as u64;
        }
        call.flags = spec.flags.iter().fold(0, |acc, f| acc | f.bits());
        let mut data = spec.data.clone().map(String::into_bytes).unwrap_or_default();
        if let Some(name) = &spec.data_from {
            let buf = self
                .buffers
                .get(name)
                .ok_or_else(|| Halt::Step(format!("{name} holds no data")))?;
            data.extend_from_slice(buf);
        }
        let fds = match &spec.fd {
            Some(op) => vec![self.operand(op)? as u32],
            None => Vec::new(),
        };
        Ok((call, data, fds))
    }

    fn issue(&mut self, step: usize, pid: Pid, call: &SyscallDesc, data: &[u8], fds: &[u32]) -> Result<Issued, Halt> {
        match self.engine.syscall(pid, call, data, fds) {
            Ok(d) => {
                let path = match fds.first() {
                    Some(_) => None,
                    None => call.path.clone(),
                };
                Ok(Issued {
                    route: d.route,
                    outcome: d.outcome,
                    path,
                })
            }
            Err(EngineError::Policy(error)) => Err(Halt::Fatal(ScenarioError::Malformed { step, error })),
            Err(e) => Err(e.into()),
        }
    }

    /// Opens, reads to the end and closes `path`; returns the bytes and the
    /// number of calls issued.
    fn slurp(&mut self, step: usize, pid: Pid, path: &str) -> Result<(Option<Vec<u8>>, u32), Halt> {
        let open = self.issue(step, pid, &SyscallDesc::open_read(path), &[], &[])?;
        let CallOutcome::Fd(fd) = open.outcome else {
            return Ok((None, 1));
        };
        let read = SyscallDesc::new(SyscallKind::FileRead).with_path(path);
        let got = self.issue(step, pid, &read, &[], &[fd])?;
        let close = SyscallDesc::new(SyscallKind::FileClose).with_path(path);
        self.issue(step, pid, &close, &[], &[fd])?;
        let bytes = got.outcome.is_ok().then(|| got.outcome.out().to_vec());
        Ok((bytes, 3))
    }

    fn capture(&mut self) -> FinalState {
        let mut containers = BTreeMap::new();
        for vmid in self.engine.booted_containers() {
            if let Some(s) = self.engine.container_snapshot(vmid) {
                containers.insert(vmid, s);
            }
        }
        FinalState {
            image: (**self.engine.image()).clone(),
            boot_digest: self.engine.boot_digest(),
            host_rw: self.engine.host().kernel.rw().clone(),
            exec_cache: self.engine.host().exec_cache().clone(),
            containers,
            descriptors: self.engine.descriptors().cloned().collect(),
            actors: self.actors.clone(),
            checkpoints: self.checkpoints.clone(),
        }
    }

    fn step(&mut self, index: usize, step: &Step, rec: &mut StepRecord) -> Result<StepResult, Halt> {
        match step {
            Step::Spawn { actor, package } => {
                let pid = self.engine.spawn(package)?;
                self.actors.insert(actor.clone(), pid);
                Ok(StepResult::value(i64::from(pid.0)))
            }
            Step::Fork { actor, child } => {
                let pid = self.pid(actor)?;
                let issued = self.issue(index, pid, &SyscallDesc::new(SyscallKind::Fork), &[], &[])?;
                rec.calls = 1;
                rec.route = Some(issued.route);
                if let Some(v) = issued.outcome.value() {
                    self.actors.insert(child.clone(), Pid(v as u32));
                }
                Ok(StepResult::from_outcome(&issued.outcome))
            }
            Step::Exec { actor, path } => {
                let pid = self.pid(actor)?;
                let call = SyscallDesc::new(SyscallKind::Execve).with_path(path.as_str());
                let issued = self.issue(index, pid, &call, &[], &[])?;
                rec.calls = 1;
                rec.route = Some(issued.route);
                rec.path = Some(path.clone());
                Ok(StepResult::from_outcome(&issued.outcome))
            }
            Step::Kill { actor } => {
                let pid = self.pid(actor)?;
                self.engine.kill(pid)?;
                Ok(StepResult::value(0))
            }
            Step::Syscall { actor, call, save_as } => {
                let pid = self.pid(actor)?;
                let (desc, data, fds) = self.build(call)?;
                rec.kind = Some(desc.kind);
                let issued = self.issue(index, pid, &desc, &data, &fds)?;
                rec.calls = 1;
                rec.route = Some(issued.route);
                rec.path = issued.path.or_else(|| desc.path.clone());
                if let Some(name) = save_as {
                    if let Some(v) = issued.outcome.value() {
                        self.vars.insert(name.clone(), v);
                    }
                    self.buffers.insert(name.clone(), issued.outcome.out().to_vec());
                }
                Ok(StepResult::from_outcome(&issued.outcome))
            }
            Step::ExpectRoute { actor, call, decision } => {
                let pid = self.pid(actor)?;
                let (mut desc, data, _) = self.build(call)?;
                desc.payload_len = data.len() as u32;
                let vmid = self.engine.descriptor(pid).map(|d| d.vmid).unwrap_or_default();
                let got = self
                    .engine
                    .route(pid, &desc)
                    .map_err(|e| match e {
                        EngineError::Policy(error) => Halt::Fatal(ScenarioError::Malformed { step: index, error }),
                        other => other.into(),
                    })?;
                let passed = decision.matches(got, vmid);
                rec.kind = Some(desc.kind);
                rec.path = desc.path.clone();
                rec.route = Some(got);
                self.assertions.push(AssertionRecord {
                    step: index,
                    id: format!("expect_route({})", desc.kind),
                    passed,
                    detail: format!("expected {decision:?}, got {got}"),
                });
                Ok(StepResult::Checked { passed })
            }
            Step::Checkpoint { label } => {
                let digests = self.engine.container_digests();
                self.checkpoints.insert(label.clone(), digests);
                Ok(StepResult::value(0))
            }
            Step::ScanProcfs {
                actor,
                exe,
                source,
                save_as,
            } => {
                let pid = self.pid(actor)?;
                let listing = match source {
                    ScanSource::Netlink => "/proc/net/netlink",
                    ScanSource::All => "/proc",
                };
                let (bytes, mut calls) = self.slurp(index, pid, listing)?;
                let text = String::from_utf8_lossy(&bytes.unwrap_or_default()).into_owned();
                let candidates: Vec<u32> = match source {
                    ScanSource::Netlink => text
                        .lines()
                        .skip(1)
                        .filter_map(|l| l.split_whitespace().nth(2)?.parse().ok())
                        .filter(|p| *p != 0)
                        .collect(),
                    ScanSource::All => text.lines().filter_map(|l| l.parse().ok()).collect(),
                };
                let mut found = None;
                for cand in candidates {
                    let (cmdline, n) = self.slurp(index, pid, &format!("/proc/{cand}/cmdline"))?;
                    calls += n;
                    let first = cmdline.as_deref().and_then(|c| c.split(|b| *b == 0).next()).unwrap_or(&[]);
                    if first == exe.as_bytes() {
                        found = Some(cand);
                        break;
                    }
                }
                rec.calls = calls;
                match found {
                    Some(p) => {
                        self.vars.insert(save_as.clone(), i64::from(p));
                        Ok(StepResult::value(i64::from(p)))
                    }
                    None => Ok(StepResult::Failed {
                        message: format!("no process running {exe}"),
                    }),
                }
            }
            Step::BruteForceVold {
                actor,
                vold,
                payload,
                logfile,
                max_probes,
                save_as,
            } => {
                let pid = self.pid(actor)?;
                let target = Pid(self.operand(&Operand::Var(vold.clone()))? as u32);
                let mut calls = 0;
                let mut hit = None;
                for probe in 1..=*max_probes {
                    let index_probe = -(probe as i32);
                    let msg = vold_message(index_probe, payload);
                    let send = SyscallDesc::new(SyscallKind::NetlinkSend).with_target(target);
                    let sent = self.issue(index, pid, &send, &msg, &[])?;
                    calls += 1;
                    rec.route = Some(sent.route);
                    if !sent.outcome.is_ok() {
                        rec.calls = calls;
                        return Ok(StepResult::from_outcome(&sent.outcome));
                    }
                    let (log, n) = self.slurp(index, pid, logfile)?;
                    calls += n;
                    let Some(log) = log else {
                        rec.calls = calls;
                        return Ok(StepResult::Failed {
                            message: format!("crash log {logfile} is unreadable"),
                        });
                    };
                    let marker = format!(" at index {index_probe}");
                    let crashed = String::from_utf8_lossy(&log).lines().any(|l| l.ends_with(&marker));
                    if !crashed {
                        hit = Some(index_probe);
                        break;
                    }
                }
                rec.calls = calls;
                match hit {
                    Some(idx) => {
                        if let Some(name) = save_as {
                            self.vars.insert(name.clone(), i64::from(idx));
                        }
                        Ok(StepResult::value(i64::from(idx)))
                    }
                    None => Ok(StepResult::Failed {
                        message: format!("no working index in {max_probes} probes"),
                    }),
                }
            }
            Step::Assert { assertion } => {
                let state = self.capture();
                let (passed, detail) = evaluate(assertion, &state);
                self.assertions.push(AssertionRecord {
                    step: index,
                    id: assertion.label(),
                    passed,
                    detail,
                });
                Ok(StepResult::Checked { passed })
            }
        }
    }
}

/// Runs `trace` on in-process containers.
pub fn run_scenario(trace: &ScenarioTrace, config: EngineConfig, image: RoImage) -> Result<ScenarioRun, ScenarioError> {
    run_scenario_with(trace, config, image, LocalBackend::new())
}

/// Runs `trace` with the given container backend. The engine seed is the
/// trace seed.
pub fn run_scenario_with<B: ContainerBackend>(
    trace: &ScenarioTrace,
    mut config: EngineConfig,
    image: RoImage,
    backend: B,
) -> Result<ScenarioRun, ScenarioError> {
    validate_trace(trace)?;
    config.seed = trace.seed;
    let policy = config.policy.name().to_string();
    let wait_mode = config.wait_mode;
    let engine = Engine::new(config, image, &trace.bindings, backend).map_err(ScenarioError::Setup)?;
    let mut runner = Runner {
        engine,
        actors: BTreeMap::new(),
        vars: BTreeMap::new(),
        buffers: BTreeMap::new(),
        checkpoints: BTreeMap::new(),
        assertions: Vec::new(),
    };
    let mut steps = Vec::with_capacity(trace.steps.len());
    for (index, step) in trace.steps.iter().enumerate() {
        let mut rec = StepRecord {
            index,
            op: step.op().into(),
            actor: step.actor().map(String::from),
            kind: None,
            path: None,
            route: None,
            calls: 0,
            result: StepResult::value(0),
        };
        rec.result = match runner.step(index, step, &mut rec) {
            Ok(r) => r,
            Err(Halt::Step(message)) => StepResult::Failed { message },
            Err(Halt::Fatal(e)) => return Err(e),
        };
        steps.push(rec);
    }
    let state = runner.capture();
    let digests = FinalDigests {
        host_ro_boot: hex(&state.boot_digest),
        host_ro_final: hex(&state.image.digest()),
        host_rw: hex(&state.host_rw.digest()),
        exec_cache: hex(&state.exec_cache.digest()),
        containers: state.containers.iter().map(|(v, s)| (*v, hex(&s.rw_digest))).collect(),
    };
    let passed = runner.assertions.iter().all(|a| a.passed);
    let report = ScenarioReport {
        schema: REPORT_SCHEMA,
        name: trace.name.clone(),
        seed: trace.seed,
        policy,
        wait_mode,
        steps,
        counters: *runner.engine.counter(),
        routes: runner.engine.histogram().clone(),
        assertions: runner.assertions,
        digests,
        passed,
    };
    let wire = runner.engine.take_wire();
    Ok(ScenarioRun { report, state, wire })
}

pub const GINGERBREAK_ATTACKER: &str = "mal";
pub const GINGERBREAK_IMAGE: &str = "/data/app/com.mal/lib/gingerbreak";
pub const GINGERBREAK_CHECKPOINT: &str = "before_attack";

/// The Gingerbreak privilege escalation run by a downloaded app, with a
/// second app in another container that must stay untouched.
pub fn builtin_gingerbreak() -> ScenarioTrace {
    use CallFlag::{Create, Write};
    let mal = GINGERBREAK_ATTACKER;
    let copy = "/data/data/com.mal/gingerbreak";
    let crash_log = "/data/data/com.mal/crash.log";
    let sys = |actor: &str, call: CallSpec, save: Option<&str>| Step::Syscall {
        actor: actor.into(),
        call,
        save_as: save.map(String::from),
    };
    let expect = |call: CallSpec, decision| Step::ExpectRoute {
        actor: mal.into(),
        call,
        decision,
    };
    let open = |path: &str| CallSpec::new(SyscallKind::FileOpen).path(path);
    let read = |path: &str, fd: &str| CallSpec::new(SyscallKind::FileRead).path(path).fd(fd);
    let close = |path: &str, fd: &str| CallSpec::new(SyscallKind::FileClose).path(path).fd(fd);
    let assert = |assertion| Step::Assert { assertion };

    let mut steps = vec![
        Step::Spawn {
            actor: "bank".into(),
            package: "com.bank".into(),
        },
        sys("bank", open("/data/data/com.bank/balance").flags(&[Write, Create]), Some("bank_fd")),
        sys(
            "bank",
            CallSpec::new(SyscallKind::FileWrite)
                .path("/data/data/com.bank/balance")
                .fd("bank_fd")
                .data("balance=1000"),
            None,
        ),
        sys("bank", close("/data/data/com.bank/balance", "bank_fd"), None),
        Step::Checkpoint {
            label: GINGERBREAK_CHECKPOINT.into(),
        },
        Step::Spawn {
            actor: mal.into(),
            package: "com.mal".into(),
        },
        Step::Exec {
            actor: mal.into(),
            path: GINGERBREAK_IMAGE.into(),
        },
        // copy itself out of /proc/self/exe into its own directory
        expect(open("/proc/self/exe"), ExpectedRoute::Redirect),
        sys(mal, open("/proc/self/exe"), Some("self_fd")),
        sys(mal, read("/proc/self/exe", "self_fd"), Some("self_image")),
        sys(mal, close("/proc/self/exe", "self_fd"), None),
        expect(open(copy).flags(&[Write, Create]), ExpectedRoute::Redirect),
        sys(mal, open(copy).flags(&[Write, Create]), Some("copy_fd")),
        sys(
            mal,
            CallSpec::new(SyscallKind::FileWrite).path(copy).fd("copy_fd").data_from("self_image"),
            None,
        ),
        sys(mal, close(copy, "copy_fd"), None),
        // locate vold through the netlink table
        expect(open("/proc/net/netlink"), ExpectedRoute::Redirect),
        Step::ScanProcfs {
            actor: mal.into(),
            exe: VOLD_EXE.into(),
            source: ScanSource::Netlink,
            save_as: "vold".into(),
        },
        // libc and the vold binary for system() and the GOT
        expect(open("/system/lib/libc.so"), ExpectedRoute::Host),
        sys(mal, open("/system/lib/libc.so"), Some("libc_fd")),
        sys(mal, read("/system/lib/libc.so", "libc_fd"), None),
        sys(mal, close("/system/lib/libc.so", "libc_fd"), None),
        expect(open(VOLD_EXE), ExpectedRoute::Host),
        sys(mal, open(VOLD_EXE), Some("vold_fd")),
        sys(mal, read(VOLD_EXE, "vold_fd"), None),
        sys(mal, close(VOLD_EXE, "vold_fd"), None),
        // take over logcat so vold's crash reports land in a readable file
        Step::ScanProcfs {
            actor: mal.into(),
            exe: LOGCAT_EXE.into(),
            source: ScanSource::All,
            save_as: "logcat".into(),
        },
        expect(
            CallSpec::new(SyscallKind::Kill).target(Operand::Var("logcat".into())),
            ExpectedRoute::Redirect,
        ),
        sys(
            mal,
            CallSpec::new(SyscallKind::Kill).target(Operand::Var("logcat".into())),
            None,
        ),
        Step::Fork {
            actor: mal.into(),
            child: "mal_logcat".into(),
        },
        Step::Exec {
            actor: "mal_logcat".into(),
            path: LOGCAT_EXE.into(),
        },
        sys(
            "mal_logcat",
            CallSpec::new(SyscallKind::DeviceIoctl)
                .path(LOG_DEVICE)
                .arg(Operand::Int(LOG_RESTART as i64))
                .data(crash_log),
            None,
        ),
        expect(
            CallSpec::new(SyscallKind::NetlinkSend).target(Operand::Var("vold".into())),
            ExpectedRoute::Redirect,
        ),
        Step::BruteForceVold {
            actor: mal.into(),
            vold: "vold".into(),
            payload: copy.into(),
            logfile: crash_log.into(),
            max_probes: 64,
            save_as: Some("vold_index".into()),
        },
    ];
    let attack = AttackSpec {
        actor: mal.into(),
        image: GINGERBREAK_IMAGE.into(),
        checkpoint: GINGERBREAK_CHECKPOINT.into(),
    };
    steps.push(assert(AssertionId::HostImageUnchanged));
    steps.push(assert(AssertionId::NoHostRootActor));
    steps.push(assert(AssertionId::ExploitCopyConfined {
        actor: attack.actor.clone(),
        image: attack.image.clone(),
    }));
    steps.push(assert(AssertionId::ContainersUnchangedSince {
        checkpoint: attack.checkpoint.clone(),
        except_actor: attack.actor.clone(),
    }));
    steps.push(assert(AssertionId::RootInContainer { actor: mal.into() }));
    ScenarioTrace {
        name: "gingerbreak".into(),
        seed: 7,
        bindings: vec![
            AppSpec {
                package: "com.bank".into(),
                uid: 10060,
                trusted: false,
                native: Vec::new(),
            },
            AppSpec {
                package: "com.mal".into(),
                uid: 10050,
                trusted: false,
                native: vec!["gingerbreak".into()],
            },
        ],
        steps,
    }
}

pub fn gingerbreak_attack() -> AttackSpec {
    AttackSpec {
        actor: GINGERBREAK_ATTACKER.into(),
        image: GINGERBREAK_IMAGE.into(),
        checkpoint: GINGERBREAK_CHECKPOINT.into(),
    }
}

/// Binder ioctl mix by target service, in percent of all transactions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkloadDistribution {
    pub weights: Vec<(String, f64)>,
}

/// Total ioctls in the measured mix; the two rarest services are weighted
/// from their raw counts.
const MEASURED_IOCTLS: f64 = 59_795.0;

impl Default for WorkloadDistribution {
    fn default() -> Self {
        let w = |s: &str, p: f64| (String::from(s), p);
        WorkloadDistribution {
            weights: vec![
                w("android.ui", 81.35),
                w("com.android.internal.view", 7.72),
                w("android.view", 3.35),
                w("android.app", 2.96),
                w("android.content", 2.69),
                w("android.utils", 1.54),
                w("android.os", 0.20),
                w("com.android.internal.telephony", 0.14),
                w("android.media", 0.03),
                w("android.net", 0.01),
                w("android.accounts", 2.0 / MEASURED_IOCTLS * 100.0),
                w("ImountService", 1.0 / MEASURED_IOCTLS * 100.0),
            ],
        }
    }
}

impl WorkloadDistribution {
    pub fn total(&self) -> f64 {
        self.weights.iter().map(|(_, w)| w).sum()
    }

    /// Share of the weight, in `0..=1`, that goes to UI services.
    pub fn ui_fraction(&self) -> f64 {
        let ui: f64 = self
            .weights
            .iter()
            .filter(|(s, _)| UI_SERVICES.contains(&s.as_str()))
            .map(|(_, w)| w)
            .sum();
        ui / self.total()
    }

    pub fn is_normalized(&self) -> bool {
        (self.total() - 100.0).abs() <= 0.1
    }

    fn sample(&self, rng: &mut ChaCha8Rng) -> &str {
        let u = (rng.next_u64() >> 11) as f64 / (1u64 << 53) as f64 * self.total();
        let mut acc = 0.0;
        for (service, w) in &self.weights {
            acc += w;
            if u < acc {
                return service;
            }
        }
        &self.weights.last().expect("distribution has at least one service").0
    }
}

pub const WORKLOAD_PACKAGE: &str = "com.example.workload";

/// `n` binder ioctls from one app with target services drawn from `dist`.
pub fn generate_workload(dist: &WorkloadDistribution, n: usize, seed: u64) -> ScenarioTrace {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut steps = Vec::with_capacity(n + 1);
    steps.push(Step::Spawn {
        actor: "app".into(),
        package: WORKLOAD_PACKAGE.into(),
    });
    for _ in 0..n {
        steps.push(Step::Syscall {
            actor: "app".into(),
            call: CallSpec::new(SyscallKind::BinderIoctl).service(dist.sample(&mut rng)),
            save_as: None,
        });
    }
    ScenarioTrace {
        name: format!("workload-{n}"),
        seed,
        bindings: vec![AppSpec {
            package: WORKLOAD_PACKAGE.into(),
            uid: 10200,
            trusted: false,
            native: Vec::new(),
        }],
        steps,
    }
}

const RANDOM_APPS: [(&str, u32, bool); 4] = [
    ("com.alpha", 10101, false),
    ("com.beta", 10102, false),
    ("com.gamma", 10103, false),
    ("com.android.settings", 1000, true),
];

/// A well-formed trace of random process and file activity across three
/// containers and one trusted app. Every written file gets content unique
/// to its writer.
pub fn random_scenario(seed: u64, len: usize) -> ScenarioTrace {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pick = |n: usize| (rng.next_u64() % n as u64) as usize;
    let mut live: Vec<(String, usize)> = Vec::new();
    let mut next_actor = 0;
    let mut next_var = 0;
    let mut segments: Vec<String> = Vec::new();
    let mut steps = Vec::new();
    while steps.len() < len {
        let choice = if live.is_empty() { 0 } else { pick(12) };
        match choice {
            0 => {
                let app = pick(RANDOM_APPS.len());
                let actor = format!("p{next_actor}");
                next_actor += 1;
                steps.push(Step::Spawn {
                    actor: actor.clone(),
                    package: RANDOM_APPS[app].0.into(),
                });
                live.push((actor, app));
            }
            1 => {
                let (parent, app) = live[pick(live.len())].clone();
                let child = format!("p{next_actor}");
                next_actor += 1;
                steps.push(Step::Fork {
                    actor: parent,
                    child: child.clone(),
                });
                live.push((child, app));
            }
            2 => {
                let (actor, _) = &live[pick(live.len())];
                let path = ["/system/bin/logcat", "/system/bin/sh", "/system/bin/app_process"][pick(3)];
                steps.push(Step::Exec {
                    actor: actor.clone(),
                    path: path.into(),
                });
            }
            3 if live.len() > 1 => {
                let (actor, _) = live.remove(pick(live.len()));
                steps.push(Step::Kill { actor });
            }
            4..=6 => {
                let (actor, app) = live[pick(live.len())].clone();
                let dir = match pick(3) {
                    0 => format!("/data/data/{}", RANDOM_APPS[app].0),
                    1 => "/mnt/sdcard".into(),
                    _ => "/data/local/tmp".into(),
                };
                let path = format!("{dir}/f{}", pick(4));
                let fd = format!("v{next_var}");
                next_var += 1;
                steps.push(Step::Syscall {
                    actor: actor.clone(),
                    call: CallSpec::new(SyscallKind::FileOpen)
                        .path(&path)
                        .flags(&[CallFlag::Write, CallFlag::Create, CallFlag::Truncate]),
                    save_as: Some(fd.clone()),
                });
                steps.push(Step::Syscall {
                    actor: actor.clone(),
                    call: CallSpec::new(SyscallKind::FileWrite)
                        .path(&path)
                        .fd(&fd)
                        .data(&format!("{actor}:{path}:{}", steps.len())),
                    save_as: None,
                });
                steps.push(Step::Syscall {
                    actor,
                    call: CallSpec::new(SyscallKind::FileClose).path(&path).fd(&fd),
                    save_as: None,
                });
            }
            7 => {
                let (actor, _) = &live[pick(live.len())];
                let path = ["/system/lib/libc.so", "/etc/hosts", "/proc/self/cmdline", "/mnt/sdcard/f0"][pick(4)];
                steps.push(Step::Syscall {
                    actor: actor.clone(),
                    call: CallSpec::new(SyscallKind::FileOpen).path(path),
                    save_as: None,
                });
            }
            8 => {
                let (actor, _) = &live[pick(live.len())];
                let service = ["android.ui", "contacts", "android.app", "notification", "location"][pick(5)];
                steps.push(Step::Syscall {
                    actor: actor.clone(),
                    call: CallSpec::new(SyscallKind::BinderIoctl).service(service),
                    save_as: None,
                });
            }
            9 => {
                let (actor, _) = &live[pick(live.len())];
                let var = format!("v{next_var}");
                next_var += 1;
                steps.push(Step::Syscall {
                    actor: actor.clone(),
                    call: CallSpec::new(SyscallKind::AshmemIoctl).arg(Operand::Int(4096)),
                    save_as: Some(var.clone()),
                });
                segments.push(var);
            }
            10 if !segments.is_empty() && live.len() > 1 => {
                let (from, _) = live[pick(live.len())].clone();
                let (to, _) = live[pick(live.len())].clone();
                let seg = segments[pick(segments.len())].clone();
                steps.push(Step::Syscall {
                    actor: from,
                    call: CallSpec::new(SyscallKind::BinderIoctl)
                        .service("intent")
                        .target(Operand::Var(to))
                        .arg(Operand::Var(seg))
                        .flags(&[CallFlag::Segment]),
                    save_as: None,
                });
            }
            _ => {
                let (actor, _) = &live[pick(live.len())];
                let kind = [SyscallKind::GetPid, SyscallKind::Insmod, SyscallKind::SocketOp][pick(3)];
                steps.push(Step::Syscall {
                    actor: actor.clone(),
                    call: CallSpec::new(kind),
                    save_as: None,
                });
            }
        }
    }
    ScenarioTrace {
        name: format!("random-{seed}"),
        seed,
        bindings: RANDOM_APPS
            .iter()
            .map(|(package, uid, trusted)| AppSpec {
                package: (*package).into(),
                uid: *uid,
                trusted: *trusted,
                native: Vec::new(),
            })
            .collect(),
        steps,
    }
}
