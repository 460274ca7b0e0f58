//! The host engine: every intercepted call of every app is routed here, then
//! either run on the host kernel, forwarded to the caller's container, or
//! refused. Containers sit behind [`ContainerBackend`] so they can run
//! in-process or on worker threads with identical results.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::{String, ToString};
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::errno::Errno;
use crate::kernelsim::host::CacheError;
use crate::kernelsim::kernel::{KernelConfig, Role, Value};
use crate::kernelsim::vfs::{canonicalize, Digest, Node};
use crate::kernelsim::{Container, ContainerReply, ContainerRequest, ExecOutcome, ExecSite, HostKernel, KernelSnapshot, RoImage};
use crate::model::{
    BindingTable, ContainerConfig, HandleTable, HandleTarget, ModelError, Pid, ProcessDescriptor, Uid, Vmid, WaitMode,
    DEFAULT_GUEST_MEMORY_MB,
};
use crate::policy::{
    check_segment_share, flags, ioctl_category, is_under, DenyReason, IoctlCategory, Policy, PolicyError, RouteDecision,
    ShareVerdict, SyscallDesc, SyscallKind, ASHMEM_DEVICE,
};
use crate::transport::{dispatch, marshal, null_redirect, CallValue, SwitchCounter, TransportError};

/// Executable every app process starts from.
pub const APP_PROCESS: &str = "/system/bin/app_process";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EngineError {
    #[error("container {vmid:?} failed to boot: image lacks {missing:?}")]
    ContainerBootFailure { vmid: Vmid, missing: Vec<&'static str> },
    #[error("no live process {0}")]
    NoSuchProcess(Pid),
    #[error("no binary at {0}")]
    NoSuchBinary(String),
    #[error("exec cache path {0} escapes the cache root")]
    CacheViolation(String),
    #[error("package {0} has no binding")]
    UnknownPackage(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error("container {0:?} answered a request out of protocol")]
    Protocol(Vmid),
}

/// An app known to the engine before the run starts.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AppSpec {
    pub package: String,
    pub uid: u32,
    /// Preinstalled apps run directly on the host with no container.
    #[serde(default)]
    pub trusted: bool,
    /// Native binaries shipped in the app's code directory.
    #[serde(default)]
    pub native: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct EngineConfig {
    pub policy: Policy,
    pub wait_mode: WaitMode,
    pub seed: u64,
    pub memory_mb: u32,
    pub vold_vulnerable: bool,
    pub record_wire: bool,
}

impl Default for EngineConfig {
    fn default() -> Self {
        Self {
            policy: Policy::Builtin,
            wait_mode: WaitMode::KernelSleep,
            seed: 0,
            memory_mb: DEFAULT_GUEST_MEMORY_MB,
            vold_vulnerable: true,
            record_wire: false,
        }
    }
}

/// Out-of-bounds vold index for the kernel of `vmid`, always in `-64..=-1`.
pub fn vold_secret(seed: u64, vmid: Vmid) -> i32 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ u64::from(vmid.get()));
    -(1 + (rng.next_u64() % 64) as i32)
}

pub trait ContainerBackend {
    fn boot(&mut self, config: ContainerConfig, image: Arc<RoImage>, kernel: KernelConfig) -> Result<(), Vec<&'static str>>;
    fn is_booted(&self, vmid: Vmid) -> bool;
    fn request(&mut self, vmid: Vmid, request: ContainerRequest) -> ContainerReply;
}

/// Containers held in the engine's own address space.
#[derive(Debug, Default)]
pub struct LocalBackend {
    containers: BTreeMap<Vmid, Container>,
}

impl LocalBackend {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn container(&self, vmid: Vmid) -> Option<&Container> {
        self.containers.get(&vmid)
    }
}

impl ContainerBackend for LocalBackend {
    fn boot(&mut self, config: ContainerConfig, image: Arc<RoImage>, kernel: KernelConfig) -> Result<(), Vec<&'static str>> {
        let c = Container::boot(config, image, kernel)?;
        self.containers.insert(config.vmid, c);
        Ok(())
    }

    fn is_booted(&self, vmid: Vmid) -> bool {
        self.containers.contains_key(&vmid)
    }

    fn request(&mut self, vmid: Vmid, request: ContainerRequest) -> ContainerReply {
        match self.containers.get_mut(&vmid) {
            Some(c) => c.handle(request),
            None => ContainerReply::Failed(Errno::Esrch),
        }
    }
}

/// Result of one intercepted call as the app sees it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CallOutcome {
    Value { value: i64, out: Vec<u8> },
    /// A new descriptor in the caller's table.
    Fd(u32),
    Exec(ExecOutcome),
    Errno(Errno),
    Denied(DenyReason),
    /// A segment was offered to, or mapped by, a process in another container.
    SegmentDenied { segment: u32 },
    Transport(TransportError),
}

impl CallOutcome {
    pub fn value(&self) -> Option<i64> {
        match self {
            CallOutcome::Value { value, .. } => Some(*value),
            CallOutcome::Fd(fd) => Some(i64::from(*fd)),
            CallOutcome::Exec(_) => Some(0),
            _ => None,
        }
    }

    pub fn out(&self) -> &[u8] {
        match self {
            CallOutcome::Value { out, .. } => out,
            _ => &[],
        }
    }

    pub fn is_ok(&self) -> bool {
        self.value().is_some()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dispatched {
    pub route: RouteDecision,
    pub outcome: CallOutcome,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RouteTally {
    pub host: u64,
    pub redirect: u64,
    pub deny: u64,
}

impl RouteTally {
    fn add(&mut self, d: RouteDecision) {
        match d {
            RouteDecision::Host => self.host += 1,
            RouteDecision::Redirect(_) => self.redirect += 1,
            RouteDecision::Deny(_) => self.deny += 1,
        }
    }

    pub fn total(&self) -> u64 {
        self.host + self.redirect + self.deny
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RouteHistogram {
    pub by_kind: BTreeMap<SyscallKind, RouteTally>,
    pub by_category: BTreeMap<IoctlCategory, RouteTally>,
}

/// One frame that crossed the host/container boundary.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WireDirection {
    Call = 0,
    Result = 1,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WireFrame {
    pub direction: WireDirection,
    pub vmid: Vmid,
    pub bytes: Vec<u8>,
}


pub struct Engine<B: ContainerBackend = LocalBackend> {
    config: EngineConfig,
    bindings: BindingTable,
    trusted: BTreeMap<String, Uid>,
    image: Arc<RoImage>,
    boot_digest: Digest,
    host: HostKernel,
    backend: B,
    counter: SwitchCounter,
    procs: BTreeMap<Pid, ProcessDescriptor>,
    handles: HandleTable,
    seq: u32,
    histogram: RouteHistogram,
    wire: Vec<WireFrame>,
}

impl Engine<LocalBackend> {
    pub fn local(config: EngineConfig, image: RoImage, apps: &[AppSpec]) -> Result<Self, EngineError> {
        Engine::new(config, image, apps, LocalBackend::new())
    }
}

fn proxy_reply(vmid: Vmid, reply: ContainerReply) -> Result<Pid, EngineError> {
    match reply {
        ContainerReply::Proxy(pid) => Ok(pid),
        _ => Err(EngineError::Protocol(vmid)),
    }
}

impl<B: ContainerBackend> Engine<B> {
    /// Installs the apps' code into the image, seals it and boots the host.
    /// Containers boot on the first spawn into them.
    pub fn new(config: EngineConfig, image: RoImage, apps: &[AppSpec], backend: B) -> Result<Self, EngineError> {
        ContainerConfig::new(Vmid::from_u8(1), config.memory_mb, config.wait_mode)?;
        let mut bindings = BindingTable::new();
        let mut trusted = BTreeMap::new();
        for app in apps {
            if app.trusted {
                trusted.insert(app.package.clone(), Uid(app.uid));
            } else {
                bindings.bind_app(&app.package, Uid(app.uid))?;
            }
        }
        let image = Arc::new(image.with_apps(apps.iter().map(|a| (a.package.as_str(), a.native.as_slice()))));
        let boot_digest = image.digest();
        let kernel = KernelConfig {
            vold_vulnerable: config.vold_vulnerable,
            vold_secret_index: vold_secret(config.seed, Vmid::HOST),
        };
        let host = HostKernel::boot(image.clone(), kernel).map_err(|missing| EngineError::ContainerBootFailure {
            vmid: Vmid::HOST,
            missing,
        })?;
        Ok(Engine {
            config,
            bindings,
            trusted,
            image,
            boot_digest,
            host,
            backend,
            counter: SwitchCounter::default(),
            procs: BTreeMap::new(),
            handles: HandleTable::new(),
            seq: 0,
            histogram: RouteHistogram::default(),
            wire: Vec::new(),
        })
    }

    pub fn config(&self) -> &EngineConfig {
        &self.config
    }

    pub fn bindings(&self) -> &BindingTable {
        &self.bindings
    }

    pub fn image(&self) -> &Arc<RoImage> {
        &self.image
    }

    /// Digest of the sealed image taken at boot.
    pub fn boot_digest(&self) -> Digest {
        self.boot_digest
    }

    pub fn host(&self) -> &HostKernel {
        &self.host
    }

    pub fn backend(&self) -> &B {
        &self.backend
    }

    pub fn counter(&self) -> &SwitchCounter {
        &self.counter
    }

    pub fn histogram(&self) -> &RouteHistogram {
        &self.histogram
    }

    pub fn descriptor(&self, pid: Pid) -> Option<&ProcessDescriptor> {
        self.procs.get(&pid)
    }

    /// Every process the engine has created, in pid order.
    pub fn descriptors(&self) -> impl Iterator<Item = &ProcessDescriptor> {
        self.procs.values()
    }

    pub fn take_wire(&mut self) -> Vec<WireFrame> {
        core::mem::take(&mut self.wire)
    }

    pub fn booted_containers(&self) -> Vec<Vmid> {
        self.bindings
            .iter()
            .map(|b| b.vmid)
            .collect::<BTreeSet<_>>()
            .into_iter()
            .filter(|v| self.backend.is_booted(*v))
            .collect()
    }

    pub fn container_snapshot(&mut self, vmid: Vmid) -> Option<KernelSnapshot> {
        if !self.backend.is_booted(vmid) {
            return None;
        }
        match self.backend.request(vmid, ContainerRequest::Snapshot) {
            ContainerReply::Snapshot(s) => Some(s),
            _ => None,
        }
    }

    pub fn container_digests(&mut self) -> BTreeMap<Vmid, Digest> {
        let mut out = BTreeMap::new();
        for vmid in self.booted_containers() {
            if let Some(s) = self.container_snapshot(vmid) {
                out.insert(vmid, s.rw_digest);
            }
        }
        out
    }

    fn live(&self, pid: Pid) -> Result<ProcessDescriptor, EngineError> {
        self.procs
            .get(&pid)
            .filter(|p| p.alive)
            .cloned()
            .ok_or(EngineError::NoSuchProcess(pid))
    }

    fn ensure_booted(&mut self, vmid: Vmid) -> Result<(), EngineError> {
        if self.backend.is_booted(vmid) {
            return Ok(());
        }
        let config = ContainerConfig::new(vmid, self.config.memory_mb, self.config.wait_mode)?;
        let kernel = KernelConfig {
            vold_vulnerable: self.config.vold_vulnerable,
            vold_secret_index: vold_secret(self.config.seed, vmid),
        };
        self.backend
            .boot(config, self.image.clone(), kernel)
            .map_err(|missing| EngineError::ContainerBootFailure { vmid, missing })
    }

    /// Forks an app process off zygote. Untrusted apps also get a proxy in
    /// their container, booting it first if needed.
    pub fn spawn(&mut self, package: &str) -> Result<Pid, EngineError> {
        let (uid, vmid) = match (self.bindings.get(package), self.trusted.get(package)) {
            (Some(b), _) => (b.uid, b.vmid),
            (None, Some(uid)) => (*uid, Vmid::HOST),
            (None, None) => return Err(EngineError::UnknownPackage(package.into())),
        };
        if !vmid.is_host() {
            self.ensure_booted(vmid)?;
        }
        let zygote = self
            .host
            .kernel
            .processes()
            .find(|p| p.alive && p.role == Role::Service("zygote".into()))
            .map(|p| p.pid);
        let argv = vec![package.to_string()];
        let pid = self
            .host
            .kernel
            .spawn(uid, APP_PROCESS, argv.clone(), Role::App, zygote, Some(package.into()));
        let proxy_pid = if vmid.is_host() {
            None
        } else {
            let reply = self.backend.request(
                vmid,
                ContainerRequest::SpawnProxy {
                    host_pid: pid,
                    uid,
                    package: Some(package.into()),
                    exe: APP_PROCESS.into(),
                    argv,
                },
            );
            Some(proxy_reply(vmid, reply)?)
        };
        self.procs.insert(
            pid,
            ProcessDescriptor {
                pid,
                uid,
                vmid,
                parent_pid: zygote,
                alive: true,
                proxy_pid,
            },
        );
        Ok(pid)
    }

    /// The child inherits the parent's vmid and descriptors; its proxy is a
    /// clone of the parent's proxy holding the same container handles.
    pub fn fork(&mut self, parent: Pid) -> Result<Pid, EngineError> {
        let p = self.live(parent)?;
        let child = self
            .host
            .kernel
            .clone_process(parent, Role::App)
            .map_err(|_| EngineError::NoSuchProcess(parent))?;
        self.handles.inherit(parent, child, Some);
        let proxy_pid = match p.proxy_pid {
            Some(parent_proxy) => {
                let reply = self.backend.request(
                    p.vmid,
                    ContainerRequest::CloneProxy {
                        parent_proxy,
                        host_pid: child,
                    },
                );
                Some(proxy_reply(p.vmid, reply)?)
            }
            None => None,
        };
        self.procs.insert(
            child,
            ProcessDescriptor {
                pid: child,
                uid: p.uid,
                vmid: p.vmid,
                parent_pid: Some(parent),
                alive: true,
                proxy_pid,
            },
        );
        Ok(child)
    }

    /// Runs `path` in place of the process image. Binaries from the image run
    /// as they are; binaries from a container's writable tree are first
    /// copied into the host execution cache.
    pub fn execve(&mut self, pid: Pid, path: &str) -> Result<ExecOutcome, EngineError> {
        let p = self.live(pid)?;
        let path = canonicalize(path, self.image.symlinks()).map_err(|_| EngineError::NoSuchBinary(path.into()))?;
        let (new_image, copied) = if matches!(self.image.tree().get(&path), Some(Node::File(_))) {
            (path.clone(), false)
        } else if let Some(proxy) = p.proxy_pid {
            let reply = self.backend.request(
                p.vmid,
                ContainerRequest::ReadExecutable {
                    proxy,
                    path: path.clone(),
                },
            );
            let bytes = match reply {
                ContainerReply::Bytes(b) => b,
                _ => return Err(EngineError::NoSuchBinary(path)),
            };
            let cached = self.host.cache_binary(p.vmid, &path, bytes).map_err(|e| match e {
                CacheError::Escapes(at) => EngineError::CacheViolation(at),
            })?;
            (cached, true)
        } else if self.host.kernel.read_path(&path).is_ok() {
            (path.clone(), false)
        } else {
            return Err(EngineError::NoSuchBinary(path));
        };
        let argv = vec![path.clone()];
        self.host
            .kernel
            .set_image(pid, &path, argv.clone())
            .map_err(|_| EngineError::NoSuchProcess(pid))?;
        if let Some(proxy) = p.proxy_pid {
            self.backend.request(
                p.vmid,
                ContainerRequest::ExecNotify {
                    proxy,
                    exe: path,
                    argv,
                },
            );
        }
        Ok(ExecOutcome {
            new_image,
            executed_on: ExecSite::Host,
            vmid_after: self.procs[&pid].vmid,
            copied_from_container: copied,
        })
    }

    fn reap(&mut self, pid: Pid) {
        let Some(p) = self.procs.get_mut(&pid) else {
            return;
        };
        p.alive = false;
        let (vmid, proxy) = (p.vmid, p.proxy_pid);
        self.handles.reclaim(pid);
        if let Some(proxy) = proxy {
            self.backend.request(vmid, ContainerRequest::KillProxy { proxy });
        }
    }

    /// Process death at the host level; the proxy dies with it.
    pub fn kill(&mut self, pid: Pid) -> Result<(), EngineError> {
        self.live(pid)?;
        let _ = self.host.kernel.exit(pid);
        self.reap(pid);
        Ok(())
    }

    pub fn route(&self, pid: Pid, call: &SyscallDesc) -> Result<RouteDecision, EngineError> {
        let p = self.procs.get(&pid).ok_or(EngineError::NoSuchProcess(pid))?;
        Ok(self.config.policy.route(p, call)?)
    }

    /// Mirrors processes the host kernel started on its own (a root shell
    /// launched by vold, say) as host descriptors.
    fn adopt_host_spawns(&mut self) {
        for pid in self.host.kernel.take_spawned() {
            let Some(k) = self.host.kernel.process(pid) else {
                continue;
            };
            self.procs.insert(
                pid,
                ProcessDescriptor {
                    pid,
                    uid: k.uid,
                    vmid: Vmid::HOST,
                    parent_pid: k.parent,
                    alive: true,
                    proxy_pid: None,
                },
            );
        }
    }

    /// Intercepts one call of `pid`. `fds` are descriptors in the caller's
    /// table; calls that name a descriptor are routed by the path it was
    /// opened with.
    pub fn syscall(&mut self, pid: Pid, call: &SyscallDesc, data: &[u8], fds: &[u32]) -> Result<Dispatched, EngineError> {
        let proc = self.live(pid)?;
        let mut call = call.clone();
        call.payload_len = data.len() as u32;
        if let Some(fd) = fds.first() {
            match self.handles.lookup(pid, *fd) {
                Some(entry) => call.path = Some(entry.path.clone()),
                // the host's own descriptor table rejects it before routing
                None => {
                    return Ok(Dispatched {
                        route: RouteDecision::Host,
                        outcome: CallOutcome::Errno(Errno::Ebadf),
                    })
                }
            }
        }
        let route = self.config.policy.route(&proc, &call)?;
        self.histogram.by_kind.entry(call.kind).or_default().add(route);
        if let Some(cat) = ioctl_category(&call) {
            self.histogram.by_category.entry(cat).or_default().add(route);
        }
        if let Some(outcome) = self.segment_gate(&proc, &call, route) {
            return Ok(Dispatched { route, outcome });
        }
        let outcome = match route {
            RouteDecision::Deny(reason) => {
                self.counter.record_denied();
                CallOutcome::Denied(reason)
            }
            RouteDecision::Host => {
                let mut counter = self.counter;
                let outcome = null_redirect(&mut counter, || self.on_host(&proc, &call, data, fds));
                self.counter = counter;
                outcome
            }
            RouteDecision::Redirect(vmid) => self.redirect(&proc, vmid, &call, data, fds),
        };
        Ok(Dispatched { route, outcome })
    }

    /// Binder transactions that carry a segment are checked before delivery.
    fn segment_gate(&mut self, proc: &ProcessDescriptor, call: &SyscallDesc, route: RouteDecision) -> Option<CallOutcome> {
        if call.kind != SyscallKind::BinderIoctl || call.flags & flags::SEGMENT == 0 || matches!(route, RouteDecision::Deny(_)) {
            return None;
        }
        let id = call.arg as u32;
        let Some(segment) = self.host.segment(id).cloned() else {
            return Some(CallOutcome::Errno(Errno::Einval));
        };
        let recipient = match (call.target_pid, route) {
            (Some(target), _) => match self.procs.get(&target).filter(|p| p.alive) {
                Some(p) => p.clone(),
                None => return Some(CallOutcome::Errno(Errno::Esrch)),
            },
            // a service stub runs wherever the call is executed
            (None, RouteDecision::Redirect(vmid)) => ProcessDescriptor { vmid, ..proc.clone() },
            (None, _) => ProcessDescriptor {
                vmid: Vmid::HOST,
                ..proc.clone()
            },
        };
        let vmid_of = |p: Pid| self.procs.get(&p).map(|d| d.vmid);
        if check_segment_share(&segment, &recipient, vmid_of) == ShareVerdict::Denied {
            return Some(CallOutcome::SegmentDenied { segment: id });
        }
        if call.target_pid.is_some() {
            self.host.map_segment(id, recipient.pid);
        }
        None
    }

    fn on_host(&mut self, proc: &ProcessDescriptor, call: &SyscallDesc, data: &[u8], fds: &[u32]) -> CallOutcome {
        let pid = proc.pid;
        let path = call.path.as_deref().unwrap_or("");
        match call.kind {
            SyscallKind::Fork | SyscallKind::Clone => {
                return match self.fork(pid) {
                    Ok(child) => CallOutcome::Value {
                        value: i64::from(child.0),
                        out: Vec::new(),
                    },
                    Err(_) => CallOutcome::Errno(Errno::Esrch),
                }
            }
            SyscallKind::Execve => {
                return match self.execve(pid, path) {
                    Ok(outcome) => CallOutcome::Exec(outcome),
                    Err(EngineError::CacheViolation(_)) => CallOutcome::Errno(Errno::Eacces),
                    Err(_) => CallOutcome::Errno(Errno::Enoent),
                }
            }
            SyscallKind::AshmemIoctl => {
                let id = self.host.create_segment(pid, call.arg);
                return CallOutcome::Value {
                    value: i64::from(id),
                    out: Vec::new(),
                };
            }
            SyscallKind::Mmap if is_under(path, ASHMEM_DEVICE) => {
                let id = call.arg as u32;
                let Some(segment) = self.host.segment(id).cloned() else {
                    return CallOutcome::Errno(Errno::Einval);
                };
                let vmid_of = |p: Pid| self.procs.get(&p).map(|d| d.vmid);
                if check_segment_share(&segment, proc, vmid_of) == ShareVerdict::Denied {
                    return CallOutcome::SegmentDenied { segment: id };
                }
                self.host.map_segment(id, pid);
                return CallOutcome::Value {
                    value: 0x6000_0000 + i64::from(id) * 0x10_0000,
                    out: Vec::new(),
                };
            }
            SyscallKind::BinderIoctl if call.target_pid.is_some() => {
                let target = call.target_pid.unwrap_or(Pid(0));
                return if self.procs.get(&target).is_some_and(|p| p.alive) {
                    CallOutcome::Value {
                        value: 0,
                        out: Vec::new(),
                    }
                } else {
                    CallOutcome::Errno(Errno::Esrch)
                };
            }
            _ => {}
        }
        let mut kernel_fds = Vec::with_capacity(fds.len());
        for fd in fds {
            match self.handles.lookup(pid, *fd).map(|e| &e.target) {
                Some(HandleTarget::Local { kernel_fd }) => kernel_fds.push(*kernel_fd),
                _ => return CallOutcome::Errno(Errno::Ebadf),
            }
        }
        let result = self.host.kernel.execute(pid, call, data, &kernel_fds);
        self.adopt_host_spawns();
        match result {
            Ok(reply) => match reply.value {
                Value::Fd(kfd) => CallOutcome::Fd(self.handles.insert_local(pid, path.into(), kfd)),
                Value::Int(value) => {
                    if call.kind == SyscallKind::FileClose {
                        if let Some(fd) = fds.first() {
                            self.handles.remove(pid, *fd);
                        }
                    }
                    if call.kind == SyscallKind::Kill {
                        if let Some(target) = call.target_pid {
                            self.reap(target);
                        }
                    }
                    CallOutcome::Value { value, out: reply.out }
                }
            },
            Err(errno) => CallOutcome::Errno(errno),
        }
    }

    fn redirect(&mut self, proc: &ProcessDescriptor, vmid: Vmid, call: &SyscallDesc, data: &[u8], fds: &[u32]) -> CallOutcome {
        let Some(proxy) = proc.proxy_pid else {
            return CallOutcome::Transport(TransportError::ProxyDead(proc.pid));
        };
        self.seq = self.seq.wrapping_add(1);
        let marshalled = match marshal(self.seq, proc, call, data, fds, &self.handles) {
            Ok(m) => m,
            Err(TransportError::BadHandle(_)) => return CallOutcome::Errno(Errno::Ebadf),
            Err(e) => return CallOutcome::Transport(e),
        };
        let record = self.config.record_wire;
        let backend = &mut self.backend;
        let wire = &mut self.wire;
        let result = dispatch(&marshalled, self.config.wait_mode, &mut self.counter, |frame| {
            if record {
                wire.push(WireFrame {
                    direction: WireDirection::Call,
                    vmid,
                    bytes: frame.to_vec(),
                });
            }
            let reply = match backend.request(
                vmid,
                ContainerRequest::Execute {
                    proxy,
                    frame: frame.to_vec(),
                },
            ) {
                ContainerReply::Frame(r) => r?,
                _ => return Err(TransportError::Malformed("unexpected container reply")),
            };
            if record {
                wire.push(WireFrame {
                    direction: WireDirection::Result,
                    vmid,
                    bytes: reply.clone(),
                });
            }
            Ok(reply)
        });
        let result = match result {
            Ok(r) => r,
            Err(e) => return CallOutcome::Transport(e),
        };
        if let Some(errno) = result.errno {
            return CallOutcome::Errno(errno);
        }
        let pid = proc.pid;
        let path = call.path.clone().unwrap_or_default();
        match result.retval {
            CallValue::NewHandle(cfd) => match self.handles.insert_remote(pid, vmid, path, cfd) {
                Ok(h) => CallOutcome::Fd(h.host_fd),
                Err(_) => CallOutcome::Errno(Errno::Ebadf),
            },
            CallValue::Int(value) => {
                if call.kind == SyscallKind::FileClose {
                    if let Some(fd) = fds.first() {
                        self.handles.remove(pid, *fd);
                    }
                }
                CallOutcome::Value {
                    value,
                    out: result.out_data,
                }
            }
        }
    }
}
