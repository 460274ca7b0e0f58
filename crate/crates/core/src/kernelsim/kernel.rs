//! One simulated Android kernel plus its userspace service stubs. The host
//! and every container run an instance; they differ only in namespace and
//! in which binder services they register.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::vfs::{parent_of, Digest, Node, RoImage, Tree};
use crate::errno::Errno;
use crate::model::{Pid, Uid, Vmid};
use crate::policy::{flags, is_canonical, is_read_only_region, is_under, SyscallDesc, SyscallKind, UI_SERVICES};

pub const VOLD_EXE: &str = "/system/bin/vold";
pub const LOGCAT_EXE: &str = "/system/bin/logcat";
pub const LOG_DEVICE: &str = "/dev/log/main";
/// `arg` of a device ioctl on [`LOG_DEVICE`] that restarts logcat into the
/// file named by the inline data.
pub const LOG_RESTART: u64 = 1;

/// Services every Android instance hosts, containers included.
pub const SYSTEM_SERVICES: [&str; 15] = [
    "activity",
    "android.accounts",
    "android.app",
    "android.content",
    "android.media",
    "android.net",
    "android.os",
    "android.utils",
    "com.android.internal.telephony",
    "contacts",
    "ImountService",
    "location",
    "package",
    "power",
    "telephony",
];

const CONTACTS_DB: &str = "/data/data/com.android.providers.contacts/databases/contacts.db";
/// Directories every app uid may write into besides its private directory.
const SHARED_WRITABLE: [&str; 3] = ["/data/local/tmp", "/mnt/sdcard", "/cache"];
const AID_SYSTEM: Uid = Uid(1000);
const AID_LOG: Uid = Uid(1007);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Namespace {
    Host,
    Container(Vmid),
}

impl Namespace {
    pub fn vmid(self) -> Vmid {
        match self {
            Namespace::Host => Vmid::HOST,
            Namespace::Container(v) => v,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct KernelConfig {
    pub vold_vulnerable: bool,
    /// The out-of-bounds index that reaches vold's function pointer.
    pub vold_secret_index: i32,
}

impl Default for KernelConfig {
    fn default() -> Self {
        Self {
            vold_vulnerable: true,
            vold_secret_index: -1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Init,
    Service(String),
    /// Container-side executor for a host process.
    Proxy { host_pid: Pid },
    /// A host process (apps and their children).
    App,
    /// Started inside this kernel by another process.
    Native,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KProc {
    pub pid: Pid,
    pub uid: Uid,
    pub exe: String,
    pub argv: Vec<String>,
    pub alive: bool,
    pub role: Role,
    pub parent: Option<Pid>,
    pub package: Option<String>,
}

#[derive(Debug, Clone)]
enum FileKind {
    /// Lives in the writable tree; read live.
    Rw,
    /// Image file or generated content captured at open.
    Snapshot(Vec<u8>),
    Device,
    Socket,
}

#[derive(Debug, Clone)]
struct OpenFile {
    path: String,
    kind: FileKind,
    writable: bool,
    append: bool,
    offset: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Value {
    Int(i64),
    Fd(u32),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Reply {
    pub value: Value,
    pub out: Vec<u8>,
}

impl Reply {
    fn int(v: i64) -> Self {
        Self {
            value: Value::Int(v),
            out: Vec::new(),
        }
    }

    fn data(out: Vec<u8>) -> Self {
        Self {
            value: Value::Int(out.len() as i64),
            out,
        }
    }
}

#[derive(Debug, Clone)]
struct VoldState {
    pid: Pid,
    vulnerable: bool,
    secret_index: i32,
}

#[derive(Debug, Clone, Default)]
struct LogcatState {
    pid: Option<Pid>,
    sink: Option<String>,
}

/// Post-run view of a kernel, for digests and assertions.
#[derive(Debug, Clone)]
pub struct KernelSnapshot {
    pub namespace: Namespace,
    pub rw: Tree,
    pub rw_digest: Digest,
    pub procs: Vec<KProc>,
    pub log: Vec<String>,
    pub netlink: Vec<Pid>,
}

/// Netlink message understood by the vold stub: little-endian `i32` index
/// followed by the path of the binary to launch.
pub fn vold_message(index: i32, exec_path: &str) -> Vec<u8> {
    let mut msg = index.to_le_bytes().to_vec();
    msg.extend_from_slice(exec_path.as_bytes());
    msg
}

/// Crash line vold emits for a missed probe.
pub fn vold_crash_line(vold: Pid, index: i32) -> String {
    format!("F/vold({vold}): Fatal signal 11 (SIGSEGV) at index {index}")
}

#[derive(Debug, Clone)]
pub struct Kernel {
    namespace: Namespace,
    image: Arc<RoImage>,
    rw: Tree,
    procs: BTreeMap<Pid, KProc>,
    next_pid: u32,
    files: BTreeMap<Pid, BTreeMap<u32, OpenFile>>,
    services: BTreeMap<String, Pid>,
    netlink: BTreeSet<Pid>,
    vold: VoldState,
    logcat: LogcatState,
    log: Vec<String>,
    next_socket: u32,
    next_map: u64,
    spawned: Vec<Pid>,
}

impl Kernel {
    /// Boots init, servicemanager, system_server, vold and logcat. The host
    /// additionally runs zygote and surfaceflinger and registers the UI and
    /// notification services.
    pub fn boot(namespace: Namespace, image: Arc<RoImage>, config: KernelConfig) -> Result<Kernel, Vec<&'static str>> {
        let missing = image.missing_binaries();
        if !missing.is_empty() {
            return Err(missing);
        }
        let mut rw = Tree::new();
        for dir in [
            "/data/data",
            "/data/local/tmp",
            "/data/system",
            "/mnt/sdcard",
            "/cache",
            "/data/data/com.android.providers.contacts/databases",
        ] {
            let _ = rw.mkdir_all(dir);
        }
        let mut k = Kernel {
            namespace,
            image,
            rw,
            procs: BTreeMap::new(),
            next_pid: 1,
            files: BTreeMap::new(),
            services: BTreeMap::new(),
            netlink: BTreeSet::new(),
            vold: VoldState {
                pid: Pid(0),
                vulnerable: config.vold_vulnerable,
                secret_index: config.vold_secret_index,
            },
            logcat: LogcatState::default(),
            log: Vec::new(),
            next_socket: 1,
            next_map: 0,
            spawned: Vec::new(),
        };
        let init = k.spawn(Uid::ROOT, "/system/bin/init", vec!["/init".into()], Role::Init, None, None);
        k.spawn(
            AID_SYSTEM,
            "/system/bin/servicemanager",
            vec!["/system/bin/servicemanager".into()],
            Role::Service("servicemanager".into()),
            Some(init),
            None,
        );
        let vold = k.spawn(
            Uid::ROOT,
            VOLD_EXE,
            vec![VOLD_EXE.into()],
            Role::Service("vold".into()),
            Some(init),
            None,
        );
        k.vold.pid = vold;
        k.netlink.insert(vold);
        let logcat = k.spawn(
            AID_LOG,
            LOGCAT_EXE,
            vec![LOGCAT_EXE.into()],
            Role::Service("logcat".into()),
            Some(init),
            None,
        );
        k.logcat.pid = Some(logcat);
        if namespace == Namespace::Host {
            k.spawn(
                Uid::ROOT,
                "/system/bin/app_process",
                vec!["zygote".into()],
                Role::Service("zygote".into()),
                Some(init),
                None,
            );
            let sf = k.spawn(
                AID_SYSTEM,
                "/system/bin/surfaceflinger",
                vec!["/system/bin/surfaceflinger".into()],
                Role::Service("surfaceflinger".into()),
                Some(init),
                None,
            );
            for name in UI_SERVICES.iter().chain(core::iter::once(&"notification")) {
                k.services.insert(name.to_string(), sf);
            }
        }
        let system_server = k.spawn(
            AID_SYSTEM,
            "/system/bin/app_process",
            vec!["system_server".into()],
            Role::Service("system_server".into()),
            Some(init),
            None,
        );
        for name in SYSTEM_SERVICES {
            k.services.insert(name.into(), system_server);
        }
        k.spawned.clear();
        Ok(k)
    }

    pub fn namespace(&self) -> Namespace {
        self.namespace
    }

    pub fn image(&self) -> &Arc<RoImage> {
        &self.image
    }

    pub fn rw(&self) -> &Tree {
        &self.rw
    }

    pub fn process(&self, pid: Pid) -> Option<&KProc> {
        self.procs.get(&pid)
    }

    pub fn processes(&self) -> impl Iterator<Item = &KProc> {
        self.procs.values()
    }

    pub fn vold_pid(&self) -> Option<Pid> {
        self.procs.get(&self.vold.pid).filter(|p| p.alive).map(|p| p.pid)
    }

    pub fn logcat(&self) -> (Option<Pid>, Option<&str>) {
        (self.logcat.pid, self.logcat.sink.as_deref())
    }

    pub fn log_lines(&self) -> &[String] {
        &self.log
    }

    pub fn has_service(&self, name: &str) -> bool {
        self.services.contains_key(name)
    }

    /// Pids launched inside this kernel by its own processes since the last call.
    pub fn take_spawned(&mut self) -> Vec<Pid> {
        core::mem::take(&mut self.spawned)
    }

    pub fn spawn(
        &mut self,
        uid: Uid,
        exe: &str,
        argv: Vec<String>,
        role: Role,
        parent: Option<Pid>,
        package: Option<String>,
    ) -> Pid {
        let pid = Pid(self.next_pid);
        self.next_pid += 1;
        if let Some(pkg) = &package {
            let _ = self.rw.mkdir_all(&format!("/data/data/{pkg}"));
        }
        self.procs.insert(
            pid,
            KProc {
                pid,
                uid,
                exe: exe.into(),
                argv,
                alive: true,
                role,
                parent,
                package,
            },
        );
        pid
    }

    /// Copies `parent` (descriptors included, same numbers) into a new process.
    pub fn clone_process(&mut self, parent: Pid, role: Role) -> Result<Pid, Errno> {
        let src = self.procs.get(&parent).filter(|p| p.alive).ok_or(Errno::Esrch)?.clone();
        let child = self.spawn(src.uid, &src.exe, src.argv.clone(), role, Some(parent), src.package.clone());
        if let Some(files) = self.files.get(&parent).cloned() {
            self.files.insert(child, files);
        }
        Ok(child)
    }

    /// Replaces the image a process reports in procfs. Descriptors stay open.
    pub fn set_image(&mut self, pid: Pid, exe: &str, argv: Vec<String>) -> Result<(), Errno> {
        let p = self.procs.get_mut(&pid).filter(|p| p.alive).ok_or(Errno::Esrch)?;
        p.exe = exe.into();
        p.argv = argv;
        Ok(())
    }

    pub fn exit(&mut self, pid: Pid) -> Result<(), Errno> {
        let p = self.procs.get_mut(&pid).filter(|p| p.alive).ok_or(Errno::Esrch)?;
        p.alive = false;
        self.files.remove(&pid);
        self.netlink.remove(&pid);
        if self.logcat.pid == Some(pid) {
            self.logcat.pid = None;
        }
        Ok(())
    }

    fn log_line(&mut self, line: String) {
        if let (Some(pid), Some(sink)) = (self.logcat.pid, self.logcat.sink.clone()) {
            if self.procs.get(&pid).is_some_and(|p| p.alive) {
                let mut bytes = line.clone().into_bytes();
                bytes.push(b'\n');
                let _ = self.rw.append(&sink, &bytes);
            }
        }
        self.log.push(line);
    }

    /// Stops the running logcat and starts a new one writing to `logfile`.
    pub fn logcat_restart(&mut self, uid: Uid, package: Option<String>, logfile: &str) -> Result<Pid, Errno> {
        if !is_canonical(logfile) {
            return Err(Errno::Einval);
        }
        if is_read_only_region(logfile) {
            return Err(Errno::Eacces);
        }
        if !self.rw.is_dir(parent_of(logfile)) {
            return Err(Errno::Enoent);
        }
        if let Some(old) = self.logcat.pid.take() {
            let _ = self.exit(old);
        }
        if !self.rw.exists(logfile) {
            self.rw.write(logfile, Vec::new())?;
        }
        let pid = self.spawn(
            uid,
            LOGCAT_EXE,
            vec![LOGCAT_EXE.into(), "-f".into(), logfile.into()],
            Role::Service("logcat".into()),
            None,
            package,
        );
        self.logcat = LogcatState {
            pid: Some(pid),
            sink: Some(logfile.into()),
        };
        Ok(pid)
    }

    pub fn netlink_lookup(&self) -> Vec<Pid> {
        self.netlink.iter().copied().collect()
    }

    /// Handles one netlink message addressed to vold.
    pub fn vold_handle_message(&mut self, msg: &[u8]) -> Result<Reply, Errno> {
        let vold = self.vold_pid().ok_or(Errno::Esrch)?;
        if msg.len() < 4 {
            return Err(Errno::Einval);
        }
        let index = i32::from_le_bytes([msg[0], msg[1], msg[2], msg[3]]);
        if !self.vold.vulnerable || index >= 0 {
            return Ok(Reply::data(b"200 vold ok".to_vec()));
        }
        if index != self.vold.secret_index {
            self.log_line(vold_crash_line(vold, index));
            return Ok(Reply::int(0));
        }
        let target = core::str::from_utf8(&msg[4..]).map_err(|_| Errno::Einval)?;
        if !is_canonical(target) || self.read_path(target).is_err() {
            self.log_line(format!("E/vold({vold}): exec of {target} failed"));
            return Ok(Reply::int(0));
        }
        let pid = self.spawn(Uid::ROOT, target, vec![target.into()], Role::Native, Some(vold), None);
        self.spawned.push(pid);
        Ok(Reply::int(pid.0 as i64))
    }

    fn can_write(&self, proc: &KProc, path: &str) -> bool {
        if proc.uid.is_root() || !proc.uid.is_application() {
            return true;
        }
        if let Some(pkg) = &proc.package {
            if is_under(path, &format!("/data/data/{pkg}")) {
                return true;
            }
        }
        SHARED_WRITABLE.iter().any(|d| is_under(path, d))
    }

    /// File bytes visible at `path` outside procfs.
    pub fn read_path(&self, path: &str) -> Result<Vec<u8>, Errno> {
        if is_read_only_region(path) {
            self.image.tree().read(path).map(<[u8]>::to_vec)
        } else {
            self.rw.read(path).map(<[u8]>::to_vec)
        }
    }

    fn dir_listing(&self, path: &str) -> Option<Vec<u8>> {
        let tree = if is_read_only_region(path) { self.image.tree() } else { &self.rw };
        if !tree.is_dir(path) {
            return None;
        }
        let mut out = String::new();
        for name in tree.children(path) {
            out.push_str(name);
            out.push('\n');
        }
        Some(out.into_bytes())
    }

    fn live(&self, pid: Pid) -> Result<&KProc, Errno> {
        self.procs.get(&pid).filter(|p| p.alive).ok_or(Errno::Esrch)
    }

    /// Content of a procfs path as seen by `caller`.
    fn procfs(&self, caller: Pid, path: &str) -> Result<Vec<u8>, Errno> {
        let rest = path.strip_prefix("/proc").ok_or(Errno::Enoent)?;
        if rest.is_empty() {
            let mut out = String::new();
            for p in self.procs.values().filter(|p| p.alive) {
                out.push_str(&format!("{}\n", p.pid));
            }
            out.push_str("net\nself\n");
            return Ok(out.into_bytes());
        }
        if rest == "/net/netlink" {
            let mut out = String::from("sk       Eth Pid    Groups   Rmem     Wmem     Dump     Locks\n");
            out.push_str("00000000 0   0      00000000 0        0        00000000 2\n");
            for (i, pid) in self.netlink.iter().enumerate() {
                out.push_str(&format!(
                    "{:08x} 15  {:<6} ffffffff 0        0        00000000 2\n",
                    0xc000_0000u32 + i as u32 * 0x100,
                    pid.0
                ));
            }
            return Ok(out.into_bytes());
        }
        let mut parts = rest.trim_start_matches('/').splitn(2, '/');
        let who = parts.next().unwrap_or("");
        let pid = if who == "self" {
            caller
        } else {
            Pid(who.parse().map_err(|_| Errno::Enoent)?)
        };
        let proc = self.live(pid).map_err(|_| Errno::Enoent)?;
        match parts.next() {
            None => Ok(b"cmdline\ncore\nexe\nstatus\n".to_vec()),
            // dumps of another process's memory are not modeled
            Some("core") => Ok(Vec::new()),
            Some("cmdline") => {
                let mut out = Vec::new();
                for arg in &proc.argv {
                    out.extend_from_slice(arg.as_bytes());
                    out.push(0);
                }
                Ok(out)
            }
            Some("exe") => self.read_path(&proc.exe),
            Some("status") => Ok(format!(
                "Name:\t{}\nPid:\t{}\nPPid:\t{}\nUid:\t{}\t{}\t{}\t{}\n",
                proc.exe.rsplit('/').next().unwrap_or(""),
                proc.pid,
                proc.parent.map_or(0, |p| p.0),
                proc.uid,
                proc.uid,
                proc.uid,
                proc.uid
            )
            .into_bytes()),
            Some(_) => Err(Errno::Enoent),
        }
    }

    fn install_fd(&mut self, pid: Pid, file: OpenFile) -> u32 {
        let table = self.files.entry(pid).or_default();
        let mut fd = 3;
        while table.contains_key(&fd) {
            fd += 1;
        }
        table.insert(fd, file);
        fd
    }

    fn open(&mut self, pid: Pid, path: &str, fl: u16) -> Result<u32, Errno> {
        let proc = self.live(pid)?.clone();
        let write = fl & flags::WRITE != 0;
        let append = fl & flags::APPEND != 0;
        let file = if is_under(path, "/proc") {
            if write {
                return Err(Errno::Eacces);
            }
            OpenFile {
                path: path.into(),
                kind: FileKind::Snapshot(self.procfs(pid, path)?),
                writable: false,
                append: false,
                offset: 0,
            }
        } else if is_under(path, "/dev") {
            OpenFile {
                path: path.into(),
                kind: FileKind::Device,
                writable: write,
                append,
                offset: 0,
            }
        } else if is_read_only_region(path) {
            if write {
                return Err(Errno::Eacces);
            }
            let tree = self.image.tree();
            let bytes = match tree.get(path) {
                Some(Node::File(b)) => b.clone(),
                Some(Node::Dir) => self.dir_listing(path).unwrap_or_default(),
                None if path == "/" => self.dir_listing(path).unwrap_or_default(),
                None => return Err(Errno::Enoent),
            };
            OpenFile {
                path: path.into(),
                kind: FileKind::Snapshot(bytes),
                writable: false,
                append: false,
                offset: 0,
            }
        } else {
            match self.rw.get(path) {
                Some(Node::Dir) | None if self.rw.is_dir(path) => {
                    if write {
                        return Err(Errno::Eisdir);
                    }
                    OpenFile {
                        path: path.into(),
                        kind: FileKind::Snapshot(self.dir_listing(path).unwrap_or_default()),
                        writable: false,
                        append: false,
                        offset: 0,
                    }
                }
                existing => {
                    if write && !self.can_write(&proc, path) {
                        return Err(Errno::Eacces);
                    }
                    if existing.is_none() {
                        if fl & flags::CREATE == 0 {
                            return Err(Errno::Enoent);
                        }
                        self.rw.write(path, Vec::new())?;
                    } else if write && fl & flags::TRUNCATE != 0 {
                        self.rw.write(path, Vec::new())?;
                    }
                    OpenFile {
                        path: path.into(),
                        kind: FileKind::Rw,
                        writable: write,
                        append,
                        offset: 0,
                    }
                }
            }
        };
        Ok(self.install_fd(pid, file))
    }

    fn file_mut(&mut self, pid: Pid, fd: Option<&u32>) -> Result<&mut OpenFile, Errno> {
        let fd = *fd.ok_or(Errno::Ebadf)?;
        self.files.get_mut(&pid).and_then(|t| t.get_mut(&fd)).ok_or(Errno::Ebadf)
    }

    fn read(&mut self, pid: Pid, fd: Option<&u32>, count: u64) -> Result<Reply, Errno> {
        let file = self.file_mut(pid, fd)?.clone();
        let content: Vec<u8> = match &file.kind {
            FileKind::Rw => self.rw.read(&file.path)?.to_vec(),
            FileKind::Snapshot(bytes) => bytes.clone(),
            FileKind::Device | FileKind::Socket => Vec::new(),
        };
        let start = file.offset.min(content.len());
        let end = if count == 0 {
            content.len()
        } else {
            start.saturating_add(count as usize).min(content.len())
        };
        let out = content[start..end].to_vec();
        self.file_mut(pid, fd)?.offset = end;
        Ok(Reply::data(out))
    }

    fn write(&mut self, pid: Pid, fd: Option<&u32>, data: &[u8]) -> Result<Reply, Errno> {
        let file = self.file_mut(pid, fd)?.clone();
        if !file.writable {
            return Err(Errno::Ebadf);
        }
        match file.kind {
            FileKind::Rw => {
                let bytes = self.rw.file_mut(&file.path)?;
                let at = if file.append { bytes.len() } else { file.offset.min(bytes.len()) };
                let end = at + data.len();
                if bytes.len() < end {
                    bytes.resize(end, 0);
                }
                bytes[at..end].copy_from_slice(data);
                self.file_mut(pid, fd)?.offset = end;
            }
            FileKind::Device if file.path == LOG_DEVICE => {
                let line = String::from_utf8_lossy(data).trim_end().to_string();
                self.log_line(line);
            }
            FileKind::Device | FileKind::Socket => {}
            FileKind::Snapshot(_) => return Err(Errno::Ebadf),
        }
        Ok(Reply::int(data.len() as i64))
    }

    fn unlink(&mut self, pid: Pid, path: &str) -> Result<Reply, Errno> {
        let proc = self.live(pid)?.clone();
        if is_read_only_region(path) || is_under(path, "/proc") || is_under(path, "/dev") {
            return Err(Errno::Eacces);
        }
        if !self.rw.exists(path) {
            return Err(Errno::Enoent);
        }
        if !self.can_write(&proc, path) {
            return Err(Errno::Eacces);
        }
        self.rw.remove(path)?;
        Ok(Reply::int(0))
    }

    fn kill(&mut self, pid: Pid, target: Pid) -> Result<Reply, Errno> {
        let sender = self.live(pid)?.uid;
        let victim = self.live(target)?;
        let protected = matches!(victim.role, Role::Init | Role::Proxy { .. });
        if protected || (victim.uid.is_root() && !sender.is_root()) {
            return Err(Errno::Eperm);
        }
        self.exit(target)?;
        Ok(Reply::int(0))
    }

    fn binder_call(&mut self, service: &str, arg: u64, data: &[u8]) -> Result<Reply, Errno> {
        if !self.services.contains_key(service) {
            return Err(Errno::Enoent);
        }
        if service == "contacts" {
            if arg == 1 {
                let mut line = data.to_vec();
                line.push(b'\n');
                self.rw.append(CONTACTS_DB, &line)?;
                return Ok(Reply::int(0));
            }
            return Ok(Reply::data(self.rw.read(CONTACTS_DB).map(<[u8]>::to_vec).unwrap_or_default()));
        }
        let ns = match self.namespace {
            Namespace::Host => String::from("host"),
            Namespace::Container(v) => format!("container{}", v.get()),
        };
        Ok(Reply::data(format!("ok:{service}@{ns}").into_bytes()))
    }

    fn mmap(&mut self, path: &str) -> Result<Reply, Errno> {
        self.read_path(path)?;
        self.next_map += 1;
        Ok(Reply::int(0x4000_0000 + (self.next_map as i64) * 0x1000))
    }

    /// Executes a file, process, IPC or device call for `pid`. `fds` holds
    /// this kernel's descriptors named by the call. Process creation, exec
    /// and shared memory are handled by the host engine.
    pub fn execute(&mut self, pid: Pid, call: &SyscallDesc, data: &[u8], fds: &[u32]) -> Result<Reply, Errno> {
        let caller = self.live(pid)?.clone();
        let path = call.path.as_deref();
        match call.kind {
            SyscallKind::FileOpen => {
                let path = path.ok_or(Errno::Einval)?;
                self.open(pid, path, call.flags).map(|fd| Reply {
                    value: Value::Fd(fd),
                    out: Vec::new(),
                })
            }
            SyscallKind::FileRead => self.read(pid, fds.first(), call.arg),
            SyscallKind::FileWrite => self.write(pid, fds.first(), data),
            SyscallKind::FileClose => {
                let fd = *fds.first().ok_or(Errno::Ebadf)?;
                self.files
                    .get_mut(&pid)
                    .and_then(|t| t.remove(&fd))
                    .ok_or(Errno::Ebadf)?;
                Ok(Reply::int(0))
            }
            SyscallKind::FileUnlink => self.unlink(pid, path.ok_or(Errno::Einval)?),
            SyscallKind::Mmap => self.mmap(path.ok_or(Errno::Einval)?),
            SyscallKind::GetPid => Ok(Reply::int(pid.0 as i64)),
            SyscallKind::Kill => self.kill(pid, call.target_pid.ok_or(Errno::Einval)?),
            SyscallKind::SocketOp => {
                if call.arg == 0 {
                    let n = self.next_socket;
                    self.next_socket += 1;
                    let fd = self.install_fd(
                        pid,
                        OpenFile {
                            path: format!("socket:[{n}]"),
                            kind: FileKind::Socket,
                            writable: true,
                            append: false,
                            offset: 0,
                        },
                    );
                    Ok(Reply {
                        value: Value::Fd(fd),
                        out: Vec::new(),
                    })
                } else {
                    Ok(Reply::int(0))
                }
            }
            SyscallKind::NetlinkSend => {
                let target = call.target_pid.ok_or(Errno::Einval)?;
                if !self.netlink.contains(&target) {
                    return Err(Errno::Esrch);
                }
                if target == self.vold.pid {
                    self.vold_handle_message(data)
                } else {
                    Ok(Reply::int(0))
                }
            }
            SyscallKind::BinderIoctl => {
                if call.target_pid.is_some() {
                    return Err(Errno::Enosys);
                }
                let service = call.ioctl_service.as_deref().ok_or(Errno::Einval)?;
                self.binder_call(service, call.arg, data)
            }
            SyscallKind::DeviceIoctl => {
                let path = path.ok_or(Errno::Einval)?;
                if path == LOG_DEVICE && call.arg == LOG_RESTART {
                    let logfile = core::str::from_utf8(data).map_err(|_| Errno::Einval)?;
                    let pid = self.logcat_restart(caller.uid, caller.package.clone(), logfile)?;
                    Ok(Reply::int(pid.0 as i64))
                } else {
                    Ok(Reply::int(0))
                }
            }
            SyscallKind::Insmod | SyscallKind::Rmmod | SyscallKind::Shutdown => {
                if caller.uid.is_root() {
                    Ok(Reply::int(0))
                } else {
                    Err(Errno::Eperm)
                }
            }
            SyscallKind::AshmemIoctl | SyscallKind::Fork | SyscallKind::Clone | SyscallKind::Execve => Err(Errno::Enosys),
        }
    }

    pub fn snapshot(&self) -> KernelSnapshot {
        KernelSnapshot {
            namespace: self.namespace,
            rw: self.rw.clone(),
            rw_digest: self.rw.digest(),
            procs: self.procs.values().cloned().collect(),
            log: self.log.clone(),
            netlink: self.netlink_lookup(),
        }
    }

    pub fn rw_digest(&self) -> Digest {
        self.rw.digest()
    }
}
