use core::fmt;

use serde::{Deserialize, Serialize};

/// Linux errno values the simulated kernels can return.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Errno {
    Eperm,
    Enoent,
    Esrch,
    Ebadf,
    Eacces,
    Eexist,
    Enotdir,
    Eisdir,
    Einval,
    Enosys,
}

impl Errno {
    pub const fn code(self) -> u16 {
        match self {
            Errno::Eperm => 1,
            Errno::Enoent => 2,
            Errno::Esrch => 3,
            Errno::Ebadf => 9,
            Errno::Eacces => 13,
            Errno::Eexist => 17,
            Errno::Enotdir => 20,
            Errno::Eisdir => 21,
            Errno::Einval => 22,
            Errno::Enosys => 38,
        }
    }

    pub fn from_code(code: u16) -> Option<Errno> {
        Some(match code {
            1 => Errno::Eperm,
            2 => Errno::Enoent,
            3 => Errno::Esrch,
            9 => Errno::Ebadf,
            13 => Errno::Eacces,
            17 => Errno::Eexist,
            20 => Errno::Enotdir,
            21 => Errno::Eisdir,
            22 => Errno::Einval,
            38 => Errno::Enosys,
            _ => return None,
        })
    }

    pub const fn name(self) -> &'static str {
        match self {
            Errno::Eperm => "EPERM",
            Errno::Enoent => "ENOENT",
            Errno::Esrch => "ESRCH",
            Errno::Ebadf => "EBADF",
            Errno::Eacces => "EACCES",
            Errno::Eexist => "EEXIST",
            Errno::Enotdir => "ENOTDIR",
            Errno::Eisdir => "EISDIR",
            Errno::Einval => "EINVAL",
            Errno::Enosys => "ENOSYS",
        }
    }
}

impl fmt::Display for Errno {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}
