//! Data-driven routing: an ordered list of `{match, decision}` records where
//! the first matching record decides.

use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::{flags, is_under, validate, DenyReason, PolicyError, RouteDecision, SyscallDesc, SyscallKind};
use crate::model::ProcessDescriptor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CallerClass {
    App,
    System,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VmidClass {
    Host,
    Container,
}

/// Every present field must hold for the record to match.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RuleMatch {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub caller: Option<CallerClass>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vmid: Option<VmidClass>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kinds: Option<Vec<SyscallKind>>,
    /// Path equals or lies beneath one of these prefixes.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path_under: Option<Vec<String>>,
    /// The write flag is set (or clear).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub write: Option<bool>,
    /// A target pid is present.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub has_target: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub service_in: Option<Vec<String>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RuleDecision {
    Host,
    /// Forward to the caller's own container.
    Redirect,
    Deny(DenyReason),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Rule {
    #[serde(rename = "match")]
    pub matcher: RuleMatch,
    pub decision: RuleDecision,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RuleTable {
    pub rules: Vec<Rule>,
}

impl RuleMatch {
    fn matches(&self, proc: &ProcessDescriptor, call: &SyscallDesc) -> bool {
        if let Some(caller) = self.caller {
            let is_app = proc.is_app();
            if (caller == CallerClass::App) != is_app {
                return false;
            }
        }
        if let Some(class) = self.vmid {
            if (class == VmidClass::Host) != proc.vmid.is_host() {
                return false;
            }
        }
        if let Some(kinds) = &self.kinds {
            if !kinds.contains(&call.kind) {
                return false;
            }
        }
        if let Some(prefixes) = &self.path_under {
            let Some(path) = call.path.as_deref() else {
                return false;
            };
            if !prefixes.iter().any(|p| is_under(path, p)) {
                return false;
            }
        }
        if let Some(write) = self.write {
            if (call.flags & flags::WRITE != 0) != write {
                return false;
            }
        }
        if let Some(has_target) = self.has_target {
            if call.target_pid.is_some() != has_target {
                return false;
            }
        }
        if let Some(services) = &self.service_in {
            match call.ioctl_service.as_deref() {
                Some(s) if services.iter().any(|x| x == s) => {}
                _ => return false,
            }
        }
        true
    }
}

impl RuleTable {
    pub fn evaluate(&self, proc: &ProcessDescriptor, call: &SyscallDesc) -> Result<RouteDecision, PolicyError> {
        validate(call)?;
        let rule = self
            .rules
            .iter()
            .find(|r| r.matcher.matches(proc, call))
            .ok_or(PolicyError::NoRuleMatched(call.kind))?;
        Ok(match rule.decision {
            RuleDecision::Host => RouteDecision::Host,
            RuleDecision::Redirect => RouteDecision::Redirect(proc.vmid),
            RuleDecision::Deny(reason) => RouteDecision::Deny(reason),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Pid, Uid, Vmid};
    use alloc::vec;

    #[test]
    fn first_match_wins() {
        let table = RuleTable {
            rules: vec![
                Rule {
                    matcher: RuleMatch {
                        kinds: Some(vec![SyscallKind::FileOpen]),
                        path_under: Some(vec!["/system".into()]),
                        ..Default::default()
                    },
                    decision: RuleDecision::Host,
                },
                Rule {
                    matcher: RuleMatch::default(),
                    decision: RuleDecision::Redirect,
                },
            ],
        };
        let p = ProcessDescriptor {
            pid: Pid(10),
            uid: Uid(10001),
            vmid: Vmid::from_u8(4),
            parent_pid: None,
            alive: true,
            proxy_pid: Some(Pid(2)),
        };
        assert_eq!(
            table.evaluate(&p, &SyscallDesc::open_read("/system/lib/libc.so")),
            Ok(RouteDecision::Host)
        );
        assert_eq!(
            table.evaluate(&p, &SyscallDesc::open_read("/sdcard/a")),
            Ok(RouteDecision::Redirect(Vmid::from_u8(4)))
        );
        let empty = RuleTable::default();
        assert_eq!(
            empty.evaluate(&p, &SyscallDesc::new(SyscallKind::GetPid)),
            Err(PolicyError::NoRuleMatched(SyscallKind::GetPid))
        );
    }
}
