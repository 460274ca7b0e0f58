//! Host to container marshalling channel.
//!
//! A redirected call is packed into a [`MarshalledCall`], encoded to a
//! length-prefixed little-endian frame, executed by the caller's proxy and
//! answered with a [`CallResult`] frame. Call frame layout:
//!
//! ```text
//! u32 seq | u8 vmid | u8 kind | u16 flags
//! u32 path_len | path bytes            (path_len 0: no path)
//! u32 data_len | data bytes            (data_len == payload_len)
//! u16 n_handles | u32 x n_handles      (container-side descriptors)
//! u32 caller_pid | u8 presence | u32 target_pid | u64 arg
//! u16 service_len | service bytes
//! ```
//!
//! `presence` bit 0 marks a target pid, bit 1 a service name. Result frame:
//!
//! ```text
//! u32 seq | u8 result_flags | i64 value | u16 errno | u32 out_len | out bytes
//! ```
//!
//! `result_flags` bit 0: value is a new container descriptor; bit 1: returned
//! by hypercall. An errno of 0 means success.

use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::errno::Errno;
use crate::model::{HandleTable, HandleTarget, Pid, ProcessDescriptor, Vmid, WaitMode};
use crate::policy::{flags, SyscallDesc, SyscallKind};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TransportError {
    #[error("fd {0} is not an open remote handle of the caller")]
    BadHandle(u32),
    #[error("inline data is {actual} bytes but the call declares {declared}")]
    PayloadMismatch { declared: u32, actual: usize },
    #[error("proxy for pid {0} is dead")]
    ProxyDead(Pid),
    #[error("frame truncated or malformed: {0}")]
    Malformed(&'static str),
    #[error("result seq {got} does not answer call seq {expected}")]
    SeqMismatch { expected: u32, got: u32 },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MarshalledCall {
    pub seq: u32,
    pub caller_pid: Pid,
    pub vmid: Vmid,
    pub call: SyscallDesc,
    pub inline_data: Vec<u8>,
    /// Container descriptors named by the call, translated from the caller's
    /// host fds at marshalling time.
    pub handles_in: Vec<u32>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CallValue {
    Int(i64),
    /// A descriptor opened inside the container.
    NewHandle(u32),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CallResult {
    pub seq: u32,
    pub retval: CallValue,
    pub errno: Option<Errno>,
    pub out_data: Vec<u8>,
    pub via_hypercall: bool,
}

impl CallResult {
    pub fn ok(seq: u32, value: i64) -> Self {
        Self {
            seq,
            retval: CallValue::Int(value),
            errno: None,
            out_data: Vec::new(),
            via_hypercall: false,
        }
    }

    pub fn err(seq: u32, errno: Errno) -> Self {
        Self {
            seq,
            retval: CallValue::Int(-(errno.code() as i64)),
            errno: Some(errno),
            out_data: Vec::new(),
            via_hypercall: false,
        }
    }

    pub fn with_data(mut self, data: Vec<u8>) -> Self {
        self.out_data = data;
        self
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SwitchCounter {
    pub vm_switches: u64,
    pub context_switches: u64,
    pub calls_redirected: u64,
    pub calls_host: u64,
    pub calls_denied: u64,
    /// Redirection-array lookups; one per call that passes interception.
    pub table_indirections: u64,
}

impl SwitchCounter {
    /// Counts accumulated after `earlier` was taken.
    pub fn since(&self, earlier: &SwitchCounter) -> SwitchCounter {
        SwitchCounter {
            vm_switches: self.vm_switches - earlier.vm_switches,
            context_switches: self.context_switches - earlier.context_switches,
            calls_redirected: self.calls_redirected - earlier.calls_redirected,
            calls_host: self.calls_host - earlier.calls_host,
            calls_denied: self.calls_denied - earlier.calls_denied,
            table_indirections: self.table_indirections - earlier.table_indirections,
        }
    }

    pub fn total_calls(&self) -> u64 {
        self.calls_redirected + self.calls_host + self.calls_denied
    }

    pub fn record_denied(&mut self) {
        self.calls_denied += 1;
    }
}

/// Packs a redirected call. Every fd in `fds` must be a remote handle of the
/// caller living in the caller's container.
pub fn marshal(
    seq: u32,
    proc: &ProcessDescriptor,
    call: &SyscallDesc,
    data: &[u8],
    fds: &[u32],
    handles: &HandleTable,
) -> Result<MarshalledCall, TransportError> {
    if data.len() != call.payload_len as usize {
        return Err(TransportError::PayloadMismatch {
            declared: call.payload_len,
            actual: data.len(),
        });
    }
    let handles_in = fds
        .iter()
        .map(|fd| match handles.lookup(proc.pid, *fd).map(|e| &e.target) {
            Some(HandleTarget::Remote(h)) if h.vmid == proc.vmid => Ok(h.container_fd),
            _ => Err(TransportError::BadHandle(*fd)),
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(MarshalledCall {
        seq,
        caller_pid: proc.pid,
        vmid: proc.vmid,
        call: call.clone(),
        inline_data: data.to_vec(),
        handles_in,
    })
}

struct Reader<'a> {
    buf: &'a [u8],
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], TransportError> {
        if self.buf.len() < n {
            return Err(TransportError::Malformed("truncated frame"));
        }
        let (head, tail) = self.buf.split_at(n);
        self.buf = tail;
        Ok(head)
    }

    fn u8(&mut self) -> Result<u8, TransportError> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16, TransportError> {
        let b = self.take(2)?;
        Ok(u16::from_le_bytes([b[0], b[1]]))
    }

    fn u32(&mut self) -> Result<u32, TransportError> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn u64(&mut self) -> Result<u64, TransportError> {
        let b = self.take(8)?;
        let mut a = [0u8; 8];
        a.copy_from_slice(b);
        Ok(u64::from_le_bytes(a))
    }

    fn string(&mut self, len: usize) -> Result<String, TransportError> {
        let bytes = self.take(len)?;
        core::str::from_utf8(bytes)
            .map(String::from)
            .map_err(|_| TransportError::Malformed("string is not utf-8"))
    }

    fn finish(self) -> Result<(), TransportError> {
        if self.buf.is_empty() {
            Ok(())
        } else {
            Err(TransportError::Malformed("trailing bytes"))
        }
    }
}

const PRESENT_TARGET: u8 = 1;
const PRESENT_SERVICE: u8 = 2;

pub fn encode_call(call: &MarshalledCall) -> Vec<u8> {
    let desc = &call.call;
    let path = desc.path.as_deref().unwrap_or("");
    let service = desc.ioctl_service.as_deref().unwrap_or("");
    let mut out = Vec::with_capacity(40 + path.len() + call.inline_data.len() + service.len());
    out.extend_from_slice(&call.seq.to_le_bytes());
    out.push(call.vmid.get());
    out.push(desc.kind.code());
    out.extend_from_slice(&desc.flags.to_le_bytes());
    out.extend_from_slice(&(path.len() as u32).to_le_bytes());
    out.extend_from_slice(path.as_bytes());
    out.extend_from_slice(&(call.inline_data.len() as u32).to_le_bytes());
    out.extend_from_slice(&call.inline_data);
    out.extend_from_slice(&(call.handles_in.len() as u16).to_le_bytes());
    for h in &call.handles_in {
        out.extend_from_slice(&h.to_le_bytes());
    }
    out.extend_from_slice(&call.caller_pid.0.to_le_bytes());
    let mut presence = 0;
    if desc.target_pid.is_some() {
        presence |= PRESENT_TARGET;
    }
    if desc.ioctl_service.is_some() {
        presence |= PRESENT_SERVICE;
    }
    out.push(presence);
    out.extend_from_slice(&desc.target_pid.map_or(0, |p| p.0).to_le_bytes());
    out.extend_from_slice(&desc.arg.to_le_bytes());
    out.extend_from_slice(&(service.len() as u16).to_le_bytes());
    out.extend_from_slice(service.as_bytes());
    out
}

pub fn decode_call(frame: &[u8]) -> Result<MarshalledCall, TransportError> {
    let mut r = Reader { buf: frame };
    let seq = r.u32()?;
    let vmid = Vmid::from_u8(r.u8()?);
    let kind = SyscallKind::from_code(r.u8()?).ok_or(TransportError::Malformed("unknown call kind"))?;
    let flags = r.u16()?;
    let path_len = r.u32()? as usize;
    let path = if path_len == 0 { None } else { Some(r.string(path_len)?) };
    let data_len = r.u32()? as usize;
    let inline_data = r.take(data_len)?.to_vec();
    let n_handles = r.u16()? as usize;
    let handles_in = (0..n_handles).map(|_| r.u32()).collect::<Result<Vec<_>, _>>()?;
    let caller_pid = Pid(r.u32()?);
    let presence = r.u8()?;
    let target = r.u32()?;
    let arg = r.u64()?;
    let service_len = r.u16()? as usize;
    let service = r.string(service_len)?;
    r.finish()?;
    Ok(MarshalledCall {
        seq,
        caller_pid,
        vmid,
        call: SyscallDesc {
            kind,
            path,
            target_pid: (presence & PRESENT_TARGET != 0).then_some(Pid(target)),
            ioctl_service: (presence & PRESENT_SERVICE != 0).then_some(service),
            payload_len: data_len as u32,
            flags,
            arg,
        },
        inline_data,
        handles_in,
    })
}

const RESULT_HANDLE: u8 = 1;
const RESULT_HYPERCALL: u8 = 2;

pub fn encode_result(result: &CallResult) -> Vec<u8> {
    let mut out = Vec::with_capacity(19 + result.out_data.len());
    out.extend_from_slice(&result.seq.to_le_bytes());
    let (mut bits, value) = match result.retval {
        CallValue::Int(v) => (0, v),
        CallValue::NewHandle(fd) => (RESULT_HANDLE, fd as i64),
    };
    if result.via_hypercall {
        bits |= RESULT_HYPERCALL;
    }
    out.push(bits);
    out.extend_from_slice(&value.to_le_bytes());
    out.extend_from_slice(&result.errno.map_or(0, Errno::code).to_le_bytes());
    out.extend_from_slice(&(result.out_data.len() as u32).to_le_bytes());
    out.extend_from_slice(&result.out_data);
    out
}

pub fn decode_result(frame: &[u8]) -> Result<CallResult, TransportError> {
    let mut r = Reader { buf: frame };
    let seq = r.u32()?;
    let bits = r.u8()?;
    let value = r.u64()? as i64;
    let errno = match r.u16()? {
        0 => None,
        code => Some(Errno::from_code(code).ok_or(TransportError::Malformed("unknown errno"))?),
    };
    let out_len = r.u32()? as usize;
    let out_data = r.take(out_len)?.to_vec();
    r.finish()?;
    let retval = if bits & RESULT_HANDLE != 0 {
        CallValue::NewHandle(u32::try_from(value).map_err(|_| TransportError::Malformed("handle out of range"))?)
    } else {
        CallValue::Int(value)
    };
    Ok(CallResult {
        seq,
        retval,
        errno,
        out_data,
        via_hypercall: bits & RESULT_HYPERCALL != 0,
    })
}

/// Sends one marshalled call through `channel` and accounts for the world
/// switches it costs. The channel receives the encoded call frame and
/// returns the encoded result frame.
pub fn dispatch(
    call: &MarshalledCall,
    mode: WaitMode,
    counter: &mut SwitchCounter,
    channel: impl FnOnce(&[u8]) -> Result<Vec<u8>, TransportError>,
) -> Result<CallResult, TransportError> {
    counter.calls_redirected += 1;
    counter.table_indirections += 1;
    // host -> guest and guest -> host
    counter.vm_switches += 2;
    counter.context_switches += mode.context_switches_per_call();
    let frame = encode_call(call);
    let reply = channel(&frame)?;
    let mut result = decode_result(&reply)?;
    if result.seq != call.seq {
        return Err(TransportError::SeqMismatch {
            expected: call.seq,
            got: result.seq,
        });
    }
    result.via_hypercall = call.call.flags & flags::HYPERCALL_RETURN != 0;
    Ok(result)
}

/// Accounts a call that is intercepted and handed straight to the host's own
/// handler, then runs it.
pub fn null_redirect<T>(counter: &mut SwitchCounter, host_handler: impl FnOnce() -> T) -> T {
    counter.calls_host += 1;
    counter.table_indirections += 1;
    host_handler()
}
