#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod errno;
pub mod kernelsim;
pub mod model;
pub mod policy;
pub mod transport;
pub mod engine;
pub mod scenario;
