pub mod container;
pub mod host;
pub mod kernel;
pub mod vfs;

pub use container::{Container, ContainerReply, ContainerRequest};
pub use host::{ExecOutcome, ExecSite, HostKernel};
pub use kernel::{Kernel, KernelConfig, KernelSnapshot, Namespace};
pub use vfs::{Digest, RoImage, Tree};
