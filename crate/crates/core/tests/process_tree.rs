use std::collections::BTreeMap;

use hvsim_core::engine::{AppSpec, Engine, EngineConfig};
use hvsim_core::kernelsim::RoImage;
use hvsim_core::model::{Pid, Vmid};
use proptest::prelude::*;

const APPS: [(&str, u32, bool); 3] = [("com.a", 10_001, false), ("com.b", 10_002, false), ("com.t", 1_000, true)];

#[derive(Debug, Clone)]
enum Op {
    Spawn(usize),
    Fork(usize),
    Exec(usize),
    Kill(usize),
}

fn op() -> impl Strategy<Value = Op> {
    prop_oneof![
        (0..APPS.len()).prop_map(Op::Spawn),
        any::<usize>().prop_map(Op::Fork),
        any::<usize>().prop_map(Op::Exec),
        any::<usize>().prop_map(Op::Kill),
    ]
}

fn engine() -> Engine {
    let apps: Vec<AppSpec> = APPS
        .iter()
        .map(|(p, u, t)| AppSpec {
            package: (*p).into(),
            uid: *u,
            trusted: *t,
            native: Vec::new(),
        })
        .collect();
    Engine::local(EngineConfig::default(), RoImage::builtin(), &apps).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn descendants_keep_the_root_vmid(ops in proptest::collection::vec(op(), 1..60)) {
        let mut e = engine();
        let mut expected: BTreeMap<Pid, Vmid> = BTreeMap::new();
        let mut live: Vec<Pid> = Vec::new();
        for op in ops {
            match op {
                Op::Spawn(i) => {
                    let pid = e.spawn(APPS[i].0).unwrap();
                    let vmid = e.bindings().get(APPS[i].0).map_or(Vmid::HOST, |b| b.vmid);
                    expected.insert(pid, vmid);
                    live.push(pid);
                }
                Op::Fork(i) if !live.is_empty() => {
                    let parent = live[i % live.len()];
                    let child = e.fork(parent).unwrap();
                    expected.insert(child, expected[&parent]);
                    live.push(child);
                }
                Op::Exec(i) if !live.is_empty() => {
                    let pid = live[i % live.len()];
                    let out = e.execve(pid, "/system/bin/sh").unwrap();
                    prop_assert_eq!(out.vmid_after, expected[&pid]);
                }
                Op::Kill(i) if !live.is_empty() => {
                    let pid = live.remove(i % live.len());
                    e.kill(pid).unwrap();
                }
                _ => {}
            }
        }
        for pid in &live {
            let d = e.descriptor(*pid).unwrap();
            prop_assert!(d.alive);
            prop_assert_eq!(d.vmid, expected[pid]);
            if let Some(parent) = d.parent_pid.and_then(|p| e.descriptor(p)) {
                prop_assert_eq!(parent.vmid, d.vmid);
            }
        }
    }
}

#[test]
fn trusted_apps_run_on_the_host() {
    let mut e = engine();
    let pid = e.spawn("com.t").unwrap();
    let d = e.descriptor(pid).unwrap();
    assert!(d.vmid.is_host());
    assert_eq!(d.proxy_pid, None);
    let untrusted = e.spawn("com.a").unwrap();
    assert!(e.descriptor(untrusted).unwrap().proxy_pid.is_some());
}
