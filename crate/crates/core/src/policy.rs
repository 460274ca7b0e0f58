//! Redirection engine: decides whether a system call runs on the host, is
//! forwarded to the caller's container, or is refused.

pub mod rules;

use alloc::string::String;
use core::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{MemorySegment, Pid, ProcessDescriptor, Vmid};

pub use rules::RuleTable;

/// Call flag bits carried in [`SyscallDesc::flags`] and on the wire.
pub mod flags {
    /// Open for writing, or map with write permission.
    pub const WRITE: u16 = 1 << 0;
    pub const CREATE: u16 = 1 << 1;
    pub const TRUNCATE: u16 = 1 << 2;
    pub const APPEND: u16 = 1 << 3;
    /// A binder transaction carrying a shared memory segment handle in `arg`.
    pub const SEGMENT: u16 = 1 << 4;
    /// The result travels back by hypercall rather than the virtio ring.
    pub const HYPERCALL_RETURN: u16 = 1 << 15;
}

/// Read-only host regions: system image, configuration, vendor libraries and
/// installed application code.
pub const READ_ONLY_PREFIXES: [&str; 4] = ["/system", "/etc", "/vendor", "/data/app"];

/// Binder services that stay on the host because the UI lives there.
pub const UI_SERVICES: [&str; 4] = ["android.ui", "android.view", "com.android.internal.view", "input"];

pub const NOTIFICATION_SERVICE: &str = "notification";

pub const BINDER_DEVICE: &str = "/dev/binder";
pub const ASHMEM_DEVICE: &str = "/dev/ashmem";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SyscallKind {
    FileOpen,
    FileRead,
    FileWrite,
    FileClose,
    FileUnlink,
    Mmap,
    Fork,
    Clone,
    Execve,
    Kill,
    GetPid,
    SocketOp,
    NetlinkSend,
    BinderIoctl,
    AshmemIoctl,
    DeviceIoctl,
    Insmod,
    Rmmod,
    Shutdown,
}

impl SyscallKind {
    pub const ALL: [SyscallKind; 19] = [
        SyscallKind::FileOpen,
        SyscallKind::FileRead,
        SyscallKind::FileWrite,
        SyscallKind::FileClose,
        SyscallKind::FileUnlink,
        SyscallKind::Mmap,
        SyscallKind::Fork,
        SyscallKind::Clone,
        SyscallKind::Execve,
        SyscallKind::Kill,
        SyscallKind::GetPid,
        SyscallKind::SocketOp,
        SyscallKind::NetlinkSend,
        SyscallKind::BinderIoctl,
        SyscallKind::AshmemIoctl,
        SyscallKind::DeviceIoctl,
        SyscallKind::Insmod,
        SyscallKind::Rmmod,
        SyscallKind::Shutdown,
    ];

    /// Wire code; the index into [`SyscallKind::ALL`].
    pub fn code(self) -> u8 {
        Self::ALL.iter().position(|k| *k == self).unwrap_or(0) as u8
    }

    pub fn from_code(code: u8) -> Option<SyscallKind> {
        Self::ALL.get(code as usize).copied()
    }

    pub fn is_file(self) -> bool {
        matches!(
            self,
            SyscallKind::FileOpen
                | SyscallKind::FileRead
                | SyscallKind::FileWrite
                | SyscallKind::FileClose
                | SyscallKind::FileUnlink
        )
    }

    pub fn requires_path(self) -> bool {
        self.is_file() || matches!(self, SyscallKind::Mmap | SyscallKind::Execve | SyscallKind::DeviceIoctl)
    }

    pub fn is_system_management(self) -> bool {
        matches!(self, SyscallKind::Insmod | SyscallKind::Rmmod | SyscallKind::Shutdown)
    }

    pub fn name(self) -> &'static str {
        match self {
            SyscallKind::FileOpen => "file_open",
            SyscallKind::FileRead => "file_read",
            SyscallKind::FileWrite => "file_write",
            SyscallKind::FileClose => "file_close",
            SyscallKind::FileUnlink => "file_unlink",
            SyscallKind::Mmap => "mmap",
            SyscallKind::Fork => "fork",
            SyscallKind::Clone => "clone",
            SyscallKind::Execve => "execve",
            SyscallKind::Kill => "kill",
            SyscallKind::GetPid => "get_pid",
            SyscallKind::SocketOp => "socket_op",
            SyscallKind::NetlinkSend => "netlink_send",
            SyscallKind::BinderIoctl => "binder_ioctl",
            SyscallKind::AshmemIoctl => "ashmem_ioctl",
            SyscallKind::DeviceIoctl => "device_ioctl",
            SyscallKind::Insmod => "insmod",
            SyscallKind::Rmmod => "rmmod",
            SyscallKind::Shutdown => "shutdown",
        }
    }
}

impl fmt::Display for SyscallKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// One system call as seen at the interception point. Paths are canonical;
/// fd-based calls carry the path their descriptor was opened with.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SyscallDesc {
    pub kind: SyscallKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_pid: Option<Pid>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ioctl_service: Option<String>,
    #[serde(default)]
    pub payload_len: u32,
    #[serde(default)]
    pub flags: u16,
    /// Scalar argument: read count, ioctl command, segment id or size.
    #[serde(default)]
    pub arg: u64,
}

impl SyscallDesc {
    pub fn new(kind: SyscallKind) -> Self {
        Self {
            kind,
            path: None,
            target_pid: None,
            ioctl_service: None,
            payload_len: 0,
            flags: 0,
            arg: 0,
        }
    }

    pub fn with_path(mut self, path: impl Into<String>) -> Self {
        self.path = Some(path.into());
        self
    }

    pub fn with_flags(mut self, flags: u16) -> Self {
        self.flags |= flags;
        self
    }

    pub fn with_payload(mut self, len: u32) -> Self {
        self.payload_len = len;
        self
    }

    pub fn with_arg(mut self, arg: u64) -> Self {
        self.arg = arg;
        self
    }

    pub fn with_target(mut self, pid: Pid) -> Self {
        self.target_pid = Some(pid);
        self
    }

    pub fn with_service(mut self, service: impl Into<String>) -> Self {
        self.ioctl_service = Some(service.into());
        self
    }

    pub fn open_read(path: impl Into<String>) -> Self {
        Self::new(SyscallKind::FileOpen).with_path(path)
    }

    pub fn open_write(path: impl Into<String>) -> Self {
        Self::new(SyscallKind::FileOpen)
            .with_path(path)
            .with_flags(flags::WRITE | flags::CREATE)
    }

    pub fn binder(service: impl Into<String>) -> Self {
        Self::new(SyscallKind::BinderIoctl).with_service(service)
    }

    pub fn wants_write(&self) -> bool {
        self.flags & flags::WRITE != 0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DenyReason {
    /// Whole-system management calls no downloaded app may issue.
    DangerousCall,
    /// Mapping container-resident or writable file memory.
    UnsupportedMmap,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RouteDecision {
    Host,
    Redirect(Vmid),
    Deny(DenyReason),
}

impl fmt::Display for RouteDecision {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RouteDecision::Host => f.write_str("host"),
            RouteDecision::Redirect(v) => write!(f, "redirect({})", v.get()),
            RouteDecision::Deny(DenyReason::DangerousCall) => f.write_str("deny(dangerous_call)"),
            RouteDecision::Deny(DenyReason::UnsupportedMmap) => f.write_str("deny(unsupported_mmap)"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IoctlCategory {
    Ui,
    NotificationManager,
    SystemService,
    AppToApp,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinderTarget {
    Service,
    App(Pid),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Access {
    ReadOnly,
    Write,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Placement {
    Host,
    Container,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ShareVerdict {
    Allowed,
    Denied,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PolicyError {
    #[error("malformed {kind} call: {problem}")]
    MalformedCall { kind: SyscallKind, problem: &'static str },
    #[error("no rule matched {0} call")]
    NoRuleMatched(SyscallKind),
}

/// True when `path` is absolute with no empty, `.` or `..` components.
pub fn is_canonical(path: &str) -> bool {
    if path == "/" {
        return true;
    }
    let Some(rest) = path.strip_prefix('/') else {
        return false;
    };
    rest.split('/').all(|c| !c.is_empty() && c != "." && c != "..")
}

/// `path` equals `prefix` or lies beneath it.
pub fn is_under(path: &str, prefix: &str) -> bool {
    match path.strip_prefix(prefix) {
        Some(rest) => rest.is_empty() || rest.starts_with('/'),
        None => false,
    }
}

pub fn is_read_only_region(path: &str) -> bool {
    READ_ONLY_PREFIXES.iter().any(|p| is_under(path, p))
}

pub fn is_device(path: &str) -> bool {
    is_under(path, "/dev")
}

pub fn is_ui_service(service: &str) -> bool {
    UI_SERVICES.contains(&service)
}

pub fn classify_path(path: &str, access: Access) -> Placement {
    match access {
        Access::ReadOnly if is_read_only_region(path) => Placement::Host,
        _ => Placement::Container,
    }
}

pub fn classify_device(path: &str) -> Placement {
    if is_under(path, BINDER_DEVICE) || is_under(path, ASHMEM_DEVICE) {
        Placement::Host
    } else {
        Placement::Container
    }
}

fn placed(placement: Placement, vmid: Vmid) -> RouteDecision {
    match placement {
        Placement::Host => RouteDecision::Host,
        Placement::Container => RouteDecision::Redirect(vmid),
    }
}

pub fn classify_binder_ioctl(
    caller: &ProcessDescriptor,
    service: &str,
    target: BinderTarget,
) -> (IoctlCategory, RouteDecision) {
    match target {
        BinderTarget::App(_) => (IoctlCategory::AppToApp, RouteDecision::Host),
        BinderTarget::Service if is_ui_service(service) => (IoctlCategory::Ui, RouteDecision::Host),
        BinderTarget::Service if service == NOTIFICATION_SERVICE => {
            (IoctlCategory::NotificationManager, RouteDecision::Host)
        }
        BinderTarget::Service => (IoctlCategory::SystemService, RouteDecision::Redirect(caller.vmid)),
    }
}

/// Category of a binder call, independent of who makes it.
pub fn ioctl_category(call: &SyscallDesc) -> Option<IoctlCategory> {
    if call.kind != SyscallKind::BinderIoctl {
        return None;
    }
    let service = call.ioctl_service.as_deref()?;
    Some(if call.target_pid.is_some() {
        IoctlCategory::AppToApp
    } else if is_ui_service(service) {
        IoctlCategory::Ui
    } else if service == NOTIFICATION_SERVICE {
        IoctlCategory::NotificationManager
    } else {
        IoctlCategory::SystemService
    })
}

/// Host processes are trusted and may map any segment. Anyone else may only
/// join a segment whose container-bound members all share its vmid.
pub fn check_segment_share(
    segment: &MemorySegment,
    recipient: &ProcessDescriptor,
    vmid_of: impl Fn(Pid) -> Option<Vmid>,
) -> ShareVerdict {
    if recipient.vmid.is_host() {
        return ShareVerdict::Allowed;
    }
    let members = segment
        .mapped_by
        .iter()
        .chain(core::iter::once(&segment.creator_pid));
    for pid in members {
        match vmid_of(*pid) {
            Some(v) if v.is_host() || v == recipient.vmid => {}
            _ => return ShareVerdict::Denied,
        }
    }
    ShareVerdict::Allowed
}

pub fn route_mmap(proc: &ProcessDescriptor, path: &str, writable: bool) -> RouteDecision {
    if proc.vmid.is_host() {
        return RouteDecision::Host;
    }
    if is_under(path, ASHMEM_DEVICE) {
        return RouteDecision::Host;
    }
    if !writable && is_read_only_region(path) {
        return RouteDecision::Host;
    }
    RouteDecision::Deny(DenyReason::UnsupportedMmap)
}

pub fn validate(call: &SyscallDesc) -> Result<(), PolicyError> {
    let malformed = |problem| PolicyError::MalformedCall {
        kind: call.kind,
        problem,
    };
    if call.kind.requires_path() && call.path.is_none() {
        return Err(malformed("path is required"));
    }
    if let Some(path) = &call.path {
        if !is_canonical(path) {
            return Err(malformed("path is not canonical"));
        }
    }
    if call.kind == SyscallKind::BinderIoctl && call.ioctl_service.is_none() {
        return Err(malformed("ioctl_service is required"));
    }
    if call.kind == SyscallKind::Kill && call.target_pid.is_none() {
        return Err(malformed("target_pid is required"));
    }
    Ok(())
}

/// The built-in routing rules.
pub fn route(proc: &ProcessDescriptor, call: &SyscallDesc) -> Result<RouteDecision, PolicyError> {
    validate(call)?;
    if call.kind.is_system_management() && proc.is_app() {
        return Ok(RouteDecision::Deny(DenyReason::DangerousCall));
    }
    let vmid = proc.vmid;
    if vmid.is_host() {
        return Ok(RouteDecision::Host);
    }
    let path = call.path.as_deref().unwrap_or("");
    let decision = match call.kind {
        // process identity and lifecycle live in the host namespace
        SyscallKind::GetPid | SyscallKind::Fork | SyscallKind::Clone | SyscallKind::Execve => RouteDecision::Host,
        SyscallKind::AshmemIoctl => RouteDecision::Host,
        SyscallKind::Mmap => route_mmap(proc, path, call.wants_write()),
        SyscallKind::FileWrite | SyscallKind::FileUnlink => {
            if is_under(path, ASHMEM_DEVICE) {
                RouteDecision::Host
            } else {
                RouteDecision::Redirect(vmid)
            }
        }
        SyscallKind::FileOpen | SyscallKind::FileRead | SyscallKind::FileClose => {
            if is_device(path) {
                placed(classify_device(path), vmid)
            } else {
                let access = if call.kind == SyscallKind::FileOpen && call.wants_write() {
                    Access::Write
                } else {
                    Access::ReadOnly
                };
                placed(classify_path(path, access), vmid)
            }
        }
        SyscallKind::DeviceIoctl => placed(classify_device(path), vmid),
        SyscallKind::BinderIoctl => {
            let service = call.ioctl_service.as_deref().unwrap_or("");
            let target = call.target_pid.map_or(BinderTarget::Service, BinderTarget::App);
            classify_binder_ioctl(proc, service, target).1
        }
        SyscallKind::Kill | SyscallKind::SocketOp | SyscallKind::NetlinkSend => RouteDecision::Redirect(vmid),
        // app callers were refused above
        SyscallKind::Insmod | SyscallKind::Rmmod | SyscallKind::Shutdown => RouteDecision::Host,
    };
    Ok(decision)
}

/// Routing policy selected for a run.
#[derive(Debug, Clone, Default)]
pub enum Policy {
    #[default]
    Builtin,
    /// Every call executes on the host, as if no containers existed.
    Passthrough,
    Table(RuleTable),
}

impl Policy {
    pub fn route(&self, proc: &ProcessDescriptor, call: &SyscallDesc) -> Result<RouteDecision, PolicyError> {
        match self {
            Policy::Builtin => route(proc, call),
            Policy::Passthrough => validate(call).map(|()| RouteDecision::Host),
            Policy::Table(table) => table.evaluate(proc, call),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Policy::Builtin => "builtin",
            Policy::Passthrough => "passthrough",
            Policy::Table(_) => "table",
        }
    }
}
