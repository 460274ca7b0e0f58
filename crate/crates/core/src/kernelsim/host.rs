//! Host-only state layered over the host kernel: the execution cache that
//! container binaries are copied into before they run, and the shared
//! memory segments every app allocates on the host.

use alloc::collections::BTreeMap;
use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::kernel::{Kernel, KernelConfig, Namespace};
use super::vfs::{canonicalize, parent_of, within, RoImage, Tree};
use crate::model::{MemorySegment, Pid, Vmid};

pub const EXEC_CACHE_ROOT: &str = "/cache/exec";

/// Where an exec found its image.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExecSite {
    Host,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExecOutcome {
    pub new_image: String,
    pub executed_on: ExecSite,
    pub vmid_after: Vmid,
    pub copied_from_container: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CacheError {
    /// The cache path for the binary would land outside the cache root.
    Escapes(String),
}

#[derive(Debug, Clone)]
pub struct HostKernel {
    pub kernel: Kernel,
    exec_cache: Tree,
    segments: BTreeMap<u32, MemorySegment>,
    next_segment: u32,
}

impl HostKernel {
    pub fn boot(image: Arc<RoImage>, config: KernelConfig) -> Result<HostKernel, Vec<&'static str>> {
        let kernel = Kernel::boot(Namespace::Host, image, config)?;
        let mut exec_cache = Tree::new();
        let _ = exec_cache.mkdir_all(EXEC_CACHE_ROOT);
        Ok(HostKernel {
            kernel,
            exec_cache,
            segments: BTreeMap::new(),
            next_segment: 1,
        })
    }

    pub fn exec_cache(&self) -> &Tree {
        &self.exec_cache
    }

    /// Cache location for a binary copied out of container `vmid`.
    pub fn cache_path(vmid: Vmid, container_path: &str) -> Result<String, CacheError> {
        let root = format!("{EXEC_CACHE_ROOT}/{}", vmid.get());
        let joined = format!("{root}/{}", container_path.trim_start_matches('/'));
        let path = canonicalize(&joined, &BTreeMap::new()).map_err(|_| CacheError::Escapes(joined.clone()))?;
        if within(&path, &root) {
            Ok(path)
        } else {
            Err(CacheError::Escapes(joined))
        }
    }

    /// Stores `bytes` under the cache root and returns the cached path.
    pub fn cache_binary(&mut self, vmid: Vmid, container_path: &str, bytes: Vec<u8>) -> Result<String, CacheError> {
        let path = Self::cache_path(vmid, container_path)?;
        let _ = self.exec_cache.mkdir_all(parent_of(&path));
        self.exec_cache
            .write(&path, bytes)
            .map_err(|_| CacheError::Escapes(path.clone()))?;
        Ok(path)
    }

    pub fn create_segment(&mut self, creator: Pid, size_bytes: u64) -> u32 {
        let id = self.next_segment;
        self.next_segment += 1;
        self.segments.insert(
            id,
            MemorySegment {
                segment_id: id,
                creator_pid: creator,
                mapped_by: BTreeSet::new(),
                size_bytes,
            },
        );
        id
    }

    pub fn segment(&self, id: u32) -> Option<&MemorySegment> {
        self.segments.get(&id)
    }

    pub fn map_segment(&mut self, id: u32, pid: Pid) {
        if let Some(seg) = self.segments.get_mut(&id) {
            seg.mapped_by.insert(pid);
        }
    }

    pub fn segments(&self) -> impl Iterator<Item = &MemorySegment> {
        self.segments.values()
    }
}
