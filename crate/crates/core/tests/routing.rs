use hvsim_core::model::{Pid, ProcessDescriptor, Uid, Vmid};
use hvsim_core::policy::{route, DenyReason, Policy, RouteDecision, SyscallDesc, SyscallKind, READ_ONLY_PREFIXES};
use proptest::prelude::*;

fn proc(vmid: u8, uid: u32) -> ProcessDescriptor {
    ProcessDescriptor {
        pid: Pid(300),
        uid: Uid(uid),
        vmid: Vmid::from_u8(vmid),
        parent_pid: None,
        alive: true,
        proxy_pid: (vmid > 0).then_some(Pid(4)),
    }
}

const PATHS: [&str; 10] = [
    "/system/lib/libc.so",
    "/etc/hosts",
    "/data/app/com.x/base.apk",
    "/data/data/com.x/db",
    "/mnt/sdcard/a",
    "/dev/binder",
    "/dev/ashmem",
    "/dev/log/main",
    "/proc/self/exe",
    "/vendor/lib/libgl.so",
];

const SERVICES: [&str; 6] = ["android.ui", "input", "notification", "android.app", "contacts", "location"];

/// A call that passes validation: path-bearing kinds get a path, binder gets
/// a service and kill gets a target.
fn valid_call() -> impl Strategy<Value = SyscallDesc> {
    (
        0..SyscallKind::ALL.len(),
        0..PATHS.len(),
        0..SERVICES.len(),
        any::<bool>(),
        any::<u16>(),
    )
        .prop_map(|(k, p, s, targeted, flags)| {
            let kind = SyscallKind::ALL[k];
            let mut call = SyscallDesc::new(kind).with_flags(flags);
            if kind.requires_path() || targeted {
                call = call.with_path(PATHS[p]);
            }
            if kind == SyscallKind::BinderIoctl {
                call = call.with_service(SERVICES[s]);
            }
            if kind == SyscallKind::Kill || (kind == SyscallKind::BinderIoctl && targeted) {
                call = call.with_target(Pid(42));
            }
            call
        })
}

fn caller() -> impl Strategy<Value = ProcessDescriptor> {
    prop_oneof![
        (1u8..=255, 10_000u32..20_000).prop_map(|(v, u)| proc(v, u)),
        (0u32..20_000).prop_map(|u| proc(0, u)),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(2000))]

    #[test]
    fn every_valid_call_gets_a_decision(p in caller(), call in valid_call()) {
        let d = route(&p, &call);
        prop_assert!(d.is_ok(), "{:?} {:?}", call, d);
        prop_assert_eq!(Policy::Passthrough.route(&p, &call), Ok(RouteDecision::Host));
    }

    #[test]
    fn redirects_only_to_own_container(p in caller(), call in valid_call()) {
        if let Ok(RouteDecision::Redirect(v)) = route(&p, &call) {
            prop_assert_eq!(v, p.vmid);
            prop_assert!(!v.is_host());
        }
    }

    #[test]
    fn denials_have_narrow_causes(p in caller(), call in valid_call()) {
        match route(&p, &call) {
            Ok(RouteDecision::Deny(DenyReason::DangerousCall)) => {
                prop_assert!(matches!(call.kind, SyscallKind::Insmod | SyscallKind::Rmmod | SyscallKind::Shutdown));
            }
            Ok(RouteDecision::Deny(DenyReason::UnsupportedMmap)) => {
                prop_assert_eq!(call.kind, SyscallKind::Mmap);
                let path = call.path.as_deref().unwrap();
                let readonly = READ_ONLY_PREFIXES.iter().any(|r| path.starts_with(r));
                prop_assert!(call.wants_write() || !readonly);
            }
            _ => {}
        }
    }
}

#[test]
fn malformed_calls_are_errors_not_decisions() {
    let p = proc(2, 10_010);
    assert!(route(&p, &SyscallDesc::new(SyscallKind::FileOpen)).is_err());
    assert!(route(&p, &SyscallDesc::open_read("/data/../system")).is_err());
    assert!(route(&p, &SyscallDesc::new(SyscallKind::BinderIoctl)).is_err());
    assert!(route(&p, &SyscallDesc::new(SyscallKind::Kill)).is_err());
}
