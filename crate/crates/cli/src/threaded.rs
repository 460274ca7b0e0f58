//! Containers on worker threads, one per container. The engine stays the
//! only caller, so every request is answered before the next is sent and
//! results match the in-process backend exactly.

use std::collections::BTreeMap;
use std::sync::mpsc::{channel, Receiver, Sender};
use std::sync::Arc;
use std::thread::{self, JoinHandle};

use hvsim_core::engine::ContainerBackend;
use hvsim_core::kernelsim::{Container, ContainerReply, ContainerRequest, KernelConfig, RoImage};
use hvsim_core::model::{ContainerConfig, Vmid};

struct Worker {
    requests: Option<Sender<ContainerRequest>>,
    replies: Receiver<ContainerReply>,
    thread: Option<JoinHandle<()>>,
}

#[derive(Default)]
pub struct ThreadedBackend {
    workers: BTreeMap<Vmid, Worker>,
}

impl ThreadedBackend {
    pub fn new() -> Self {
        Self::default()
    }
}

impl ContainerBackend for ThreadedBackend {
    fn boot(&mut self, config: ContainerConfig, image: Arc<RoImage>, kernel: KernelConfig) -> Result<(), Vec<&'static str>> {
        let mut container = Container::boot(config, image, kernel)?;
        let (req_tx, req_rx) = channel::<ContainerRequest>();
        let (rep_tx, rep_rx) = channel();
        let thread = thread::Builder::new()
            .name(format!("container-{}", config.vmid.get()))
            .spawn(move || {
                for request in req_rx {
                    if rep_tx.send(container.handle(request)).is_err() {
                        break;
                    }
                }
            })
            .expect("spawn container thread");
        self.workers.insert(
            config.vmid,
            Worker {
                requests: Some(req_tx),
                replies: rep_rx,
                thread: Some(thread),
            },
        );
        Ok(())
    }

    fn is_booted(&self, vmid: Vmid) -> bool {
        self.workers.contains_key(&vmid)
    }

    fn request(&mut self, vmid: Vmid, request: ContainerRequest) -> ContainerReply {
        let Some(worker) = self.workers.get(&vmid) else {
            return ContainerReply::Failed(hvsim_core::errno::Errno::Esrch);
        };
        let sent = worker.requests.as_ref().is_some_and(|tx| tx.send(request).is_ok());
        match sent.then(|| worker.replies.recv().ok()).flatten() {
            Some(reply) => reply,
            None => ContainerReply::Failed(hvsim_core::errno::Errno::Esrch),
        }
    }
}

impl Drop for ThreadedBackend {
    fn drop(&mut self) {
        for worker in self.workers.values_mut() {
            worker.requests.take();
            if let Some(t) = worker.thread.take() {
                let _ = t.join();
            }
        }
    }
}
