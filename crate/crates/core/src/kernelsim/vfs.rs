//! In-memory file trees and the sealed read-only host image.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use sha2::{Digest as _, Sha256};

use crate::errno::Errno;
use crate::policy::{is_canonical, is_under};

pub type Digest = [u8; 32];

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Node {
    Dir,
    File(Vec<u8>),
}

/// Path to node map. The root directory is implicit.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Tree {
    nodes: BTreeMap<String, Node>,
}

pub fn parent_of(path: &str) -> &str {
    match path.rfind('/') {
        Some(0) | None => "/",
        Some(i) => &path[..i],
    }
}

impl Tree {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn is_dir(&self, path: &str) -> bool {
        path == "/" || matches!(self.nodes.get(path), Some(Node::Dir))
    }

    pub fn exists(&self, path: &str) -> bool {
        path == "/" || self.nodes.contains_key(path)
    }

    pub fn get(&self, path: &str) -> Option<&Node> {
        self.nodes.get(path)
    }

    pub fn read(&self, path: &str) -> Result<&[u8], Errno> {
        match self.nodes.get(path) {
            Some(Node::File(bytes)) => Ok(bytes),
            Some(Node::Dir) => Err(Errno::Eisdir),
            None if path == "/" => Err(Errno::Eisdir),
            None => Err(Errno::Enoent),
        }
    }

    /// Creates `path` and any missing ancestors as directories.
    pub fn mkdir_all(&mut self, path: &str) -> Result<(), Errno> {
        if path == "/" {
            return Ok(());
        }
        let mut at = String::new();
        for component in path.trim_start_matches('/').split('/') {
            at.push('/');
            at.push_str(component);
            match self.nodes.get(&at) {
                Some(Node::Dir) => {}
                Some(Node::File(_)) => return Err(Errno::Enotdir),
                None => {
                    self.nodes.insert(at.clone(), Node::Dir);
                }
            }
        }
        Ok(())
    }

    /// Replaces or creates a file. The parent directory must exist.
    pub fn write(&mut self, path: &str, bytes: Vec<u8>) -> Result<(), Errno> {
        if !self.is_dir(parent_of(path)) {
            return Err(if self.exists(parent_of(path)) { Errno::Enotdir } else { Errno::Enoent });
        }
        match self.nodes.get_mut(path) {
            Some(Node::Dir) => Err(Errno::Eisdir),
            Some(Node::File(existing)) => {
                *existing = bytes;
                Ok(())
            }
            None => {
                self.nodes.insert(path.into(), Node::File(bytes));
                Ok(())
            }
        }
    }

    pub fn file_mut(&mut self, path: &str) -> Result<&mut Vec<u8>, Errno> {
        match self.nodes.get_mut(path) {
            Some(Node::File(bytes)) => Ok(bytes),
            Some(Node::Dir) => Err(Errno::Eisdir),
            None => Err(Errno::Enoent),
        }
    }

    pub fn append(&mut self, path: &str, bytes: &[u8]) -> Result<(), Errno> {
        if !self.exists(path) {
            self.write(path, Vec::new())?;
        }
        self.file_mut(path)?.extend_from_slice(bytes);
        Ok(())
    }

    /// Removes a file or an empty directory.
    pub fn remove(&mut self, path: &str) -> Result<(), Errno> {
        match self.nodes.get(path) {
            None => Err(Errno::Enoent),
            Some(Node::Dir) if self.children(path).next().is_some() => Err(Errno::Eexist),
            Some(_) => {
                self.nodes.remove(path);
                Ok(())
            }
        }
    }

    /// Names of the direct children of `dir`, sorted.
    pub fn children<'a>(&'a self, dir: &'a str) -> impl Iterator<Item = &'a str> + 'a {
        let prefix = if dir == "/" { String::from("/") } else { format!("{dir}/") };
        self.nodes
            .range::<String, _>(prefix.clone()..)
            .take_while(move |(p, _)| p.starts_with(&prefix))
            .filter_map(move |(p, _)| {
                let rest = &p[if dir == "/" { 1 } else { dir.len() + 1 }..];
                (!rest.contains('/')).then_some(rest)
            })
    }

    pub fn files(&self) -> impl Iterator<Item = (&str, &[u8])> {
        self.nodes.iter().filter_map(|(p, n)| match n {
            Node::File(b) => Some((p.as_str(), b.as_slice())),
            Node::Dir => None,
        })
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// SHA-256 over every node in path order.
    pub fn digest(&self) -> Digest {
        let mut h = Sha256::new();
        for (path, node) in &self.nodes {
            h.update((path.len() as u64).to_le_bytes());
            h.update(path.as_bytes());
            match node {
                Node::Dir => h.update([0u8]),
                Node::File(bytes) => {
                    h.update([1u8]);
                    h.update((bytes.len() as u64).to_le_bytes());
                    h.update(bytes);
                }
            }
        }
        h.finalize().into()
    }
}

pub fn hex(digest: &Digest) -> String {
    const HEX: &[u8; 16] = b"0123456789abcdef";
    let mut s = String::with_capacity(64);
    for b in digest {
        s.push(HEX[(b >> 4) as usize] as char);
        s.push(HEX[(b & 0xf) as usize] as char);
    }
    s
}

/// Binaries every kernel must find in the image to boot its services.
pub const REQUIRED_BINARIES: [&str; 4] = [
    "/system/bin/app_process",
    "/system/bin/vold",
    "/system/bin/logcat",
    "/system/bin/servicemanager",
];

/// The sealed host system image. Containers mirror the same bytes.
#[derive(Debug, Clone)]
pub struct RoImage {
    tree: Tree,
    symlinks: BTreeMap<String, String>,
    digest: Digest,
}

impl RoImage {
    pub fn seal(tree: Tree, symlinks: BTreeMap<String, String>) -> Self {
        let digest = Self::compute_digest(&tree, &symlinks);
        Self { tree, symlinks, digest }
    }

    fn compute_digest(tree: &Tree, symlinks: &BTreeMap<String, String>) -> Digest {
        let mut h = Sha256::new();
        h.update(tree.digest());
        for (from, to) in symlinks {
            h.update((from.len() as u64).to_le_bytes());
            h.update(from.as_bytes());
            h.update((to.len() as u64).to_le_bytes());
            h.update(to.as_bytes());
        }
        h.finalize().into()
    }

    pub fn tree(&self) -> &Tree {
        &self.tree
    }

    pub fn symlinks(&self) -> &BTreeMap<String, String> {
        &self.symlinks
    }

    pub fn digest(&self) -> Digest {
        self.digest
    }

    /// Recomputes the digest from the current contents.
    pub fn verify(&self) -> bool {
        Self::compute_digest(&self.tree, &self.symlinks) == self.digest
    }

    pub fn missing_binaries(&self) -> Vec<&'static str> {
        REQUIRED_BINARIES
            .iter()
            .copied()
            .filter(|p| !matches!(self.tree.get(p), Some(Node::File(_))))
            .collect()
    }

    /// Builtin minimal Android image.
    pub fn builtin() -> Self {
        Self::seal(builtin_tree(), builtin_symlinks())
    }

    /// A copy of this image with application packages installed.
    pub fn with_apps<'a>(&self, apps: impl IntoIterator<Item = (&'a str, &'a [String])>) -> Self {
        let mut tree = self.tree.clone();
        for (package, natives) in apps {
            let dir = format!("/data/app/{package}");
            let _ = tree.mkdir_all(&format!("{dir}/lib"));
            let _ = tree.write(&format!("{dir}/base.apk"), format!("PK\u{3}\u{4}apk:{package}").into_bytes());
            for name in natives {
                let _ = tree.write(&format!("{dir}/lib/{name}"), elf_image(name, &[]));
            }
        }
        Self::seal(tree, self.symlinks.clone())
    }
}

/// Fake ELF image: magic, a name tag and optional symbol strings.
pub fn elf_image(name: &str, symbols: &[&str]) -> Vec<u8> {
    let mut out = b"\x7fELF\x01\x01\x01\0".to_vec();
    out.extend_from_slice(b"image:");
    out.extend_from_slice(name.as_bytes());
    out.push(0);
    for s in symbols {
        out.extend_from_slice(s.as_bytes());
        out.push(0);
    }
    out
}

fn builtin_tree() -> Tree {
    let mut t = Tree::new();
    let bins: [(&str, &[&str]); 9] = [
        ("app_process", &[]),
        ("vold", &["GOT", ".got.plt", "/dev/block/vold"]),
        ("logcat", &[]),
        ("servicemanager", &[]),
        ("surfaceflinger", &[]),
        ("sh", &[]),
        ("toolbox", &[]),
        ("linker", &[]),
        ("init", &[]),
    ];
    let _ = t.mkdir_all("/system/bin");
    for (name, symbols) in bins {
        let _ = t.write(&format!("/system/bin/{name}"), elf_image(name, symbols));
    }
    let libs: [(&str, &[&str]); 4] = [
        ("libc.so", &["system", "strcmp", "malloc", "free"]),
        ("libdl.so", &["dlopen", "dlsym"]),
        ("libbinder.so", &[]),
        ("libcutils.so", &[]),
    ];
    let _ = t.mkdir_all("/system/lib");
    for (name, symbols) in libs {
        let _ = t.write(&format!("/system/lib/{name}"), elf_image(name, symbols));
    }
    let _ = t.mkdir_all("/system/etc");
    let _ = t.write("/system/etc/hosts", b"127.0.0.1 localhost\n".to_vec());
    let _ = t.write("/system/etc/vold.fstab", b"dev_mount sdcard /mnt/sdcard auto /devices/platform/goldfish_mmc.0\n".to_vec());
    let _ = t.write("/system/build.prop", b"ro.build.version.release=2.3.7\n".to_vec());
    let _ = t.mkdir_all("/system/framework");
    let _ = t.write("/system/framework/framework.jar", b"PK\x03\x04framework".to_vec());
    let _ = t.mkdir_all("/vendor/lib");
    let _ = t.mkdir_all("/data/app");
    t
}

fn builtin_symlinks() -> BTreeMap<String, String> {
    let mut m = BTreeMap::new();
    m.insert("/etc".to_string(), "/system/etc".to_string());
    m.insert("/sdcard".to_string(), "/mnt/sdcard".to_string());
    m
}

/// Normalizes an absolute path: drops `.` and empty components, resolves
/// `..` lexically and expands image symlinks on every prefix.
pub fn canonicalize(raw: &str, symlinks: &BTreeMap<String, String>) -> Result<String, Errno> {
    if !raw.starts_with('/') {
        return Err(Errno::Einval);
    }
    let mut pending: Vec<String> = raw.split('/').rev().filter(|c| !c.is_empty()).map(String::from).collect();
    let mut out: Vec<String> = Vec::new();
    let mut expansions = 0;
    while let Some(component) = pending.pop() {
        match component.as_str() {
            "." => {}
            ".." => {
                out.pop();
            }
            _ => {
                out.push(component);
                let current = format!("/{}", out.join("/"));
                if let Some(target) = symlinks.get(&current) {
                    expansions += 1;
                    if expansions > 16 {
                        return Err(Errno::Einval);
                    }
                    out.clear();
                    for c in target.split('/').rev().filter(|c| !c.is_empty()) {
                        pending.push(c.into());
                    }
                }
            }
        }
    }
    let path = if out.is_empty() { String::from("/") } else { format!("/{}", out.join("/")) };
    debug_assert!(is_canonical(&path));
    Ok(path)
}

/// True if `path` is inside the execution cache root.
pub fn within(path: &str, root: &str) -> bool {
    is_under(path, root) && path != root
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn tree_basics() {
        let mut t = Tree::new();
        assert_eq!(t.write("/a/b", vec![1]), Err(Errno::Enoent));
        t.mkdir_all("/a").unwrap();
        t.write("/a/b", vec![1, 2]).unwrap();
        t.append("/a/b", &[3]).unwrap();
        assert_eq!(t.read("/a/b").unwrap(), &[1, 2, 3]);
        assert_eq!(t.read("/a"), Err(Errno::Eisdir));
        assert_eq!(t.write("/a/b/c", vec![]), Err(Errno::Enotdir));
        t.mkdir_all("/a/c/d").unwrap();
        let kids: Vec<_> = t.children("/a").collect();
        assert_eq!(kids, vec!["b", "c"]);
        assert_eq!(t.children("/").collect::<Vec<_>>(), vec!["a"]);
        assert_eq!(t.remove("/a/c"), Err(Errno::Eexist));
        t.remove("/a/c/d").unwrap();
        t.remove("/a/c").unwrap();
        assert_eq!(t.remove("/a/c"), Err(Errno::Enoent));
    }

    #[test]
    fn digest_tracks_content() {
        let mut a = Tree::new();
        a.mkdir_all("/x").unwrap();
        a.write("/x/f", b"one".to_vec()).unwrap();
        let d1 = a.digest();
        let mut b = a.clone();
        assert_eq!(b.digest(), d1);
        b.write("/x/f", b"two".to_vec()).unwrap();
        assert_ne!(b.digest(), d1);
        // a file and a dir at the same path hash differently
        let mut c = Tree::new();
        c.mkdir_all("/x/f").unwrap();
        let mut d = Tree::new();
        d.mkdir_all("/x").unwrap();
        d.write("/x/f", Vec::new()).unwrap();
        assert_ne!(c.digest(), d.digest());
    }

    #[test]
    fn canonicalization() {
        let links = builtin_symlinks();
        assert_eq!(canonicalize("/etc/hosts", &links).unwrap(), "/system/etc/hosts");
        assert_eq!(canonicalize("/data/./data//x/../y", &links).unwrap(), "/data/data/y");
        assert_eq!(canonicalize("/../..", &links).unwrap(), "/");
        assert_eq!(canonicalize("/sdcard/../etc", &links).unwrap(), "/mnt/etc");
        assert_eq!(canonicalize("rel/path", &links), Err(Errno::Einval));
        let mut looped = BTreeMap::new();
        looped.insert("/a".to_string(), "/b".to_string());
        looped.insert("/b".to_string(), "/a".to_string());
        assert_eq!(canonicalize("/a/x", &looped), Err(Errno::Einval));
    }

    #[test]
    fn builtin_image_is_bootable() {
        let img = RoImage::builtin();
        assert!(img.missing_binaries().is_empty());
        assert!(img.verify());
        let with = img.with_apps([("com.mal", &["gingerbreak".to_string()][..])]);
        assert!(with.tree().exists("/data/app/com.mal/lib/gingerbreak"));
        assert_ne!(with.digest(), img.digest());
    }
}
