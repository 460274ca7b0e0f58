//! A guest instance: one kernel behind a request interface. Everything the
//! host engine asks of a container goes through [`Container::handle`], so the
//! same container can live in-process or on its own thread.

use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec::Vec;

use super::kernel::{Kernel, KernelConfig, KernelSnapshot, Namespace, Role, Value};
use super::vfs::RoImage;
use crate::errno::Errno;
use crate::model::{ContainerConfig, Pid, Uid, Vmid};
use crate::transport::{decode_call, encode_result, CallResult, CallValue, TransportError};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ContainerRequest {
    SpawnProxy {
        host_pid: Pid,
        uid: Uid,
        package: Option<String>,
        exe: String,
        argv: Vec<String>,
    },
    CloneProxy {
        parent_proxy: Pid,
        host_pid: Pid,
    },
    ExecNotify {
        proxy: Pid,
        exe: String,
        argv: Vec<String>,
    },
    KillProxy {
        proxy: Pid,
    },
    /// An encoded call frame for `proxy` to run.
    Execute {
        proxy: Pid,
        frame: Vec<u8>,
    },
    /// Bytes of a binary in the container's writable tree, for the exec cache.
    ReadExecutable {
        proxy: Pid,
        path: String,
    },
    Snapshot,
}

#[derive(Debug, Clone)]
pub enum ContainerReply {
    Proxy(Pid),
    Done,
    Frame(Result<Vec<u8>, TransportError>),
    Bytes(Vec<u8>),
    Snapshot(KernelSnapshot),
    Failed(Errno),
}

#[derive(Debug, Clone)]
pub struct Container {
    config: ContainerConfig,
    kernel: Kernel,
}

impl Container {
    /// Boots the guest. On failure returns the binaries the image lacks.
    pub fn boot(config: ContainerConfig, image: Arc<RoImage>, kernel: KernelConfig) -> Result<Container, Vec<&'static str>> {
        let kernel = Kernel::boot(Namespace::Container(config.vmid), image, kernel)?;
        Ok(Container { config, kernel })
    }

    pub fn vmid(&self) -> Vmid {
        self.config.vmid
    }

    pub fn config(&self) -> &ContainerConfig {
        &self.config
    }

    pub fn kernel(&self) -> &Kernel {
        &self.kernel
    }

    fn execute(&mut self, proxy: Pid, frame: &[u8]) -> Result<Vec<u8>, TransportError> {
        let call = decode_call(frame)?;
        if !self.kernel.process(proxy).is_some_and(|p| p.alive) {
            return Err(TransportError::ProxyDead(call.caller_pid));
        }
        let result = match self.kernel.execute(proxy, &call.call, &call.inline_data, &call.handles_in) {
            Ok(reply) => {
                let retval = match reply.value {
                    Value::Int(v) => CallValue::Int(v),
                    Value::Fd(fd) => CallValue::NewHandle(fd),
                };
                CallResult {
                    seq: call.seq,
                    retval,
                    errno: None,
                    out_data: reply.out,
                    via_hypercall: false,
                }
            }
            Err(errno) => CallResult::err(call.seq, errno),
        };
        Ok(encode_result(&result))
    }

    pub fn handle(&mut self, request: ContainerRequest) -> ContainerReply {
        match request {
            ContainerRequest::SpawnProxy {
                host_pid,
                uid,
                package,
                exe,
                argv,
            } => ContainerReply::Proxy(self.kernel.spawn(uid, &exe, argv, Role::Proxy { host_pid }, None, package)),
            ContainerRequest::CloneProxy { parent_proxy, host_pid } => {
                match self.kernel.clone_process(parent_proxy, Role::Proxy { host_pid }) {
                    Ok(pid) => ContainerReply::Proxy(pid),
                    Err(e) => ContainerReply::Failed(e),
                }
            }
            ContainerRequest::ExecNotify { proxy, exe, argv } => match self.kernel.set_image(proxy, &exe, argv) {
                Ok(()) => ContainerReply::Done,
                Err(e) => ContainerReply::Failed(e),
            },
            ContainerRequest::KillProxy { proxy } => match self.kernel.exit(proxy) {
                Ok(()) => ContainerReply::Done,
                Err(e) => ContainerReply::Failed(e),
            },
            ContainerRequest::Execute { proxy, frame } => ContainerReply::Frame(self.execute(proxy, &frame)),
            ContainerRequest::ReadExecutable { proxy, path } => {
                if !self.kernel.process(proxy).is_some_and(|p| p.alive) {
                    return ContainerReply::Failed(Errno::Esrch);
                }
                match self.kernel.rw().read(&path) {
                    Ok(bytes) => ContainerReply::Bytes(bytes.to_vec()),
                    Err(e) => ContainerReply::Failed(e),
                }
            }
            ContainerRequest::Snapshot => ContainerReply::Snapshot(self.kernel.snapshot()),
        }
    }
}
