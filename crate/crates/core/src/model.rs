//! Domain types shared by the policy, transport, kernel and scenario layers.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// First uid handed to downloaded applications.
pub const FIRST_APPLICATION_UID: u32 = 10_000;

/// Smallest guest RAM a headless container can boot with.
pub const MIN_GUEST_MEMORY_MB: u32 = 44;
/// Guest RAM used when a container is not configured explicitly.
pub const DEFAULT_GUEST_MEMORY_MB: u32 = 64;
/// Modeled active memory of a stock (full UI) Android stack.
pub const STOCK_ACTIVE_MB: f64 = 99.11;
/// Modeled active memory of the headless guest stack.
pub const HEADLESS_ACTIVE_MB: f64 = 14.87;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ModelError {
    #[error("vmid {0} does not fit in one byte")]
    VmidOutOfRange(i64),
    #[error("all 255 container slots are allocated")]
    ContainersExhausted,
    #[error("package {package} is already bound with uid {existing}")]
    PackageUidConflict { package: String, existing: u32 },
    #[error("guest memory {0} MB is below the {MIN_GUEST_MEMORY_MB} MB minimum")]
    GuestMemoryTooSmall(u32),
    #[error("fd {host_fd} of pid {owner} already names container fd {container_fd}")]
    DuplicateHandle { owner: Pid, host_fd: u32, container_fd: u32 },
}

/// Container index stored in the process descriptor. Zero is the trusted host.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Vmid(u8);

impl Vmid {
    pub const HOST: Vmid = Vmid(0);

    pub fn new(raw: i64) -> Result<Vmid, ModelError> {
        u8::try_from(raw)
            .map(Vmid)
            .map_err(|_| ModelError::VmidOutOfRange(raw))
    }

    pub const fn from_u8(raw: u8) -> Vmid {
        Vmid(raw)
    }

    pub const fn get(self) -> u8 {
        self.0
    }

    pub const fn is_host(self) -> bool {
        self.0 == 0
    }
}

impl fmt::Display for Vmid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "vmid{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Pid(pub u32);

impl fmt::Display for Pid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Uid(pub u32);

impl Uid {
    pub const ROOT: Uid = Uid(0);

    pub fn is_root(self) -> bool {
        self.0 == 0
    }

    pub fn is_application(self) -> bool {
        self.0 >= FIRST_APPLICATION_UID
    }
}

impl fmt::Display for Uid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

/// Host-namespace process identity. `proxy_pid` lives in the container's
/// pid namespace and is present exactly when `vmid` names a container.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProcessDescriptor {
    pub pid: Pid,
    pub uid: Uid,
    pub vmid: Vmid,
    pub parent_pid: Option<Pid>,
    pub alive: bool,
    pub proxy_pid: Option<Pid>,
}

impl ProcessDescriptor {
    /// Apps are every process bound to a container plus any application uid
    /// on the host.
    pub fn is_app(&self) -> bool {
        !self.vmid.is_host() || self.uid.is_application()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AppBinding {
    pub package_name: String,
    pub uid: Uid,
    pub vmid: Vmid,
}

/// Package to container assignments. Apps sharing a uid share a container,
/// and bindings are never released during a run.
#[derive(Debug, Clone, Default)]
pub struct BindingTable {
    by_package: BTreeMap<String, AppBinding>,
    by_uid: BTreeMap<Uid, Vmid>,
    allocated: u16,
}

impl BindingTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn bind_app(&mut self, package: &str, uid: Uid) -> Result<AppBinding, ModelError> {
        if let Some(existing) = self.by_package.get(package) {
            if existing.uid != uid {
                return Err(ModelError::PackageUidConflict {
                    package: package.into(),
                    existing: existing.uid.0,
                });
            }
            return Ok(existing.clone());
        }
        let vmid = match self.by_uid.get(&uid) {
            Some(vmid) => *vmid,
            None => {
                if self.allocated >= u8::MAX as u16 {
                    return Err(ModelError::ContainersExhausted);
                }
                self.allocated += 1;
                let vmid = Vmid(self.allocated as u8);
                self.by_uid.insert(uid, vmid);
                vmid
            }
        };
        let binding = AppBinding {
            package_name: package.into(),
            uid,
            vmid,
        };
        self.by_package.insert(package.into(), binding.clone());
        Ok(binding)
    }

    pub fn get(&self, package: &str) -> Option<&AppBinding> {
        self.by_package.get(package)
    }

    pub fn vmid_for_uid(&self, uid: Uid) -> Option<Vmid> {
        self.by_uid.get(&uid).copied()
    }

    pub fn containers_allocated(&self) -> usize {
        self.allocated as usize
    }

    pub fn iter(&self) -> impl Iterator<Item = &AppBinding> {
        self.by_package.values()
    }
}

/// A descriptor the app holds on the host that names a resource living in
/// its container.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RemoteHandle {
    pub host_fd: u32,
    pub container_fd: u32,
    pub owner_pid: Pid,
    pub vmid: Vmid,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum HandleTarget {
    /// Opened by the host kernel itself.
    Local { kernel_fd: u32 },
    Remote(RemoteHandle),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HandleEntry {
    /// Canonical path the descriptor was opened with; routing of later
    /// read/write/close calls is decided on it.
    pub path: String,
    pub target: HandleTarget,
}

/// Per-process descriptor tables. Host fds and remote handles share one
/// numbering space per owner, starting at 3.
#[derive(Debug, Clone, Default)]
pub struct HandleTable {
    owners: BTreeMap<Pid, BTreeMap<u32, HandleEntry>>,
}

const FIRST_FD: u32 = 3;

impl HandleTable {
    pub fn new() -> Self {
        Self::default()
    }

    fn next_fd(table: &BTreeMap<u32, HandleEntry>) -> u32 {
        let mut fd = FIRST_FD;
        for used in table.keys() {
            if *used == fd {
                fd += 1;
            } else if *used > fd {
                break;
            }
        }
        fd
    }

    pub fn insert_local(&mut self, owner: Pid, path: String, kernel_fd: u32) -> u32 {
        let table = self.owners.entry(owner).or_default();
        let fd = Self::next_fd(table);
        table.insert(
            fd,
            HandleEntry {
                path,
                target: HandleTarget::Local { kernel_fd },
            },
        );
        fd
    }

    pub fn insert_remote(
        &mut self,
        owner: Pid,
        vmid: Vmid,
        path: String,
        container_fd: u32,
    ) -> Result<RemoteHandle, ModelError> {
        let table = self.owners.entry(owner).or_default();
        if let Some((fd, _)) = table.iter().find(|(_, e)| {
            matches!(e.target, HandleTarget::Remote(h) if h.container_fd == container_fd && h.vmid == vmid)
        }) {
            return Err(ModelError::DuplicateHandle {
                owner,
                host_fd: *fd,
                container_fd,
            });
        }
        let host_fd = Self::next_fd(table);
        let handle = RemoteHandle {
            host_fd,
            container_fd,
            owner_pid: owner,
            vmid,
        };
        table.insert(
            host_fd,
            HandleEntry {
                path,
                target: HandleTarget::Remote(handle),
            },
        );
        Ok(handle)
    }

    pub fn lookup(&self, owner: Pid, host_fd: u32) -> Option<&HandleEntry> {
        self.owners.get(&owner)?.get(&host_fd)
    }

    pub fn remove(&mut self, owner: Pid, host_fd: u32) -> Option<HandleEntry> {
        self.owners.get_mut(&owner)?.remove(&host_fd)
    }

    /// Drops every descriptor of `owner`, returning what was held.
    pub fn reclaim(&mut self, owner: Pid) -> Vec<(u32, HandleEntry)> {
        self.owners
            .remove(&owner)
            .map(|t| t.into_iter().collect())
            .unwrap_or_default()
    }

    pub fn entries(&self, owner: Pid) -> impl Iterator<Item = (u32, &HandleEntry)> {
        self.owners
            .get(&owner)
            .into_iter()
            .flat_map(|t| t.iter().map(|(fd, e)| (*fd, e)))
    }

    /// Installs a copy of `parent`'s table for `child`. Remote handles are
    /// re-pointed at the child's proxy and keep their container fd numbers,
    /// which a cloned proxy inherits unchanged.
    pub fn inherit(&mut self, parent: Pid, child: Pid, local_fd_map: impl Fn(u32) -> Option<u32>) {
        let Some(src) = self.owners.get(&parent) else {
            return;
        };
        let mut copy = BTreeMap::new();
        for (fd, entry) in src {
            let target = match entry.target {
                HandleTarget::Local { kernel_fd } => match local_fd_map(kernel_fd) {
                    Some(kernel_fd) => HandleTarget::Local { kernel_fd },
                    None => continue,
                },
                HandleTarget::Remote(h) => HandleTarget::Remote(RemoteHandle {
                    owner_pid: child,
                    ..h
                }),
            };
            copy.insert(
                *fd,
                HandleEntry {
                    path: entry.path.clone(),
                    target,
                },
            );
        }
        self.owners.insert(child, copy);
    }
}

/// Host-resident shared memory segment.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MemorySegment {
    pub segment_id: u32,
    pub creator_pid: Pid,
    pub mapped_by: BTreeSet<Pid>,
    pub size_bytes: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WaitMode {
    /// Proxy blocks in userspace and is woken by a message.
    NaiveUserspace,
    /// Proxy sleeps inside the guest kernel and runs the call without leaving it.
    #[default]
    KernelSleep,
}

impl WaitMode {
    pub const fn context_switches_per_call(self) -> u64 {
        match self {
            WaitMode::NaiveUserspace => 4,
            WaitMode::KernelSleep => 2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContainerConfig {
    pub vmid: Vmid,
    pub memory_mb: u32,
    pub wait_mode: WaitMode,
}

impl ContainerConfig {
    pub fn new(vmid: Vmid, memory_mb: u32, wait_mode: WaitMode) -> Result<Self, ModelError> {
        if memory_mb < MIN_GUEST_MEMORY_MB {
            return Err(ModelError::GuestMemoryTooSmall(memory_mb));
        }
        Ok(Self {
            vmid,
            memory_mb,
            wait_mode,
        })
    }

    pub fn with_defaults(vmid: Vmid) -> Self {
        Self {
            vmid,
            memory_mb: DEFAULT_GUEST_MEMORY_MB,
            wait_mode: WaitMode::default(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn vmid_range() {
        assert_eq!(Vmid::new(0), Ok(Vmid::HOST));
        assert!(Vmid::new(0).unwrap().is_host());
        assert_eq!(Vmid::new(255).map(Vmid::get), Ok(255));
        assert_eq!(Vmid::new(256), Err(ModelError::VmidOutOfRange(256)));
        assert_eq!(Vmid::new(-1), Err(ModelError::VmidOutOfRange(-1)));
    }

    #[test]
    fn same_uid_shares_container() {
        let mut table = BindingTable::new();
        let a = table.bind_app("com.example.a", Uid(10001)).unwrap();
        assert_eq!(a.vmid, Vmid::from_u8(1));
        let b = table.bind_app("com.example.b", Uid(10001)).unwrap();
        assert_eq!(b.vmid, Vmid::from_u8(1));
        let c = table.bind_app("com.example.c", Uid(10002)).unwrap();
        assert_eq!(c.vmid, Vmid::from_u8(2));
        assert_eq!(table.containers_allocated(), 2);
        // rebinding is idempotent
        assert_eq!(table.bind_app("com.example.a", Uid(10001)).unwrap(), a);
        assert!(matches!(
            table.bind_app("com.example.a", Uid(10009)),
            Err(ModelError::PackageUidConflict { .. })
        ));
    }

    #[test]
    fn container_slots_run_out_at_256() {
        let mut table = BindingTable::new();
        for i in 0..255u32 {
            let b = table
                .bind_app(&alloc::format!("pkg{i}"), Uid(10_000 + i))
                .unwrap();
            assert_eq!(b.vmid.get() as u32, i + 1);
        }
        assert_eq!(
            table.bind_app("pkg255", Uid(20_000)),
            Err(ModelError::ContainersExhausted)
        );
        // an existing uid still binds
        assert_eq!(
            table.bind_app("extra", Uid(10_000)).unwrap().vmid,
            Vmid::from_u8(1)
        );
    }

    #[test]
    fn handle_numbers_are_lowest_free() {
        let mut t = HandleTable::new();
        let owner = Pid(100);
        let v = Vmid::from_u8(1);
        assert_eq!(t.insert_local(owner, "/system/lib/libc.so".into(), 0), 3);
        let h = t.insert_remote(owner, v, "/data/data/a/f".into(), 7).unwrap();
        assert_eq!(h.host_fd, 4);
        assert!(matches!(
            t.insert_remote(owner, v, "/data/data/a/g".into(), 7),
            Err(ModelError::DuplicateHandle { .. })
        ));
        t.remove(owner, 3);
        assert_eq!(t.insert_local(owner, "/etc/hosts".into(), 1), 3);
        assert_eq!(t.reclaim(owner).len(), 2);
        assert!(t.lookup(owner, 4).is_none());
    }

    #[test]
    fn guest_memory_floor() {
        assert!(ContainerConfig::new(Vmid::from_u8(1), 44, WaitMode::KernelSleep).is_ok());
        assert_eq!(
            ContainerConfig::new(Vmid::from_u8(1), 32, WaitMode::KernelSleep),
            Err(ModelError::GuestMemoryTooSmall(32))
        );
        assert_eq!(ContainerConfig::with_defaults(Vmid::from_u8(1)).memory_mb, 64);
    }
}
