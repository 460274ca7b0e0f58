//! Loading a read-only image from a directory snapshot.

use std::collections::BTreeMap;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use hvsim_core::kernelsim::{RoImage, Tree};

#[derive(Debug, thiserror::Error)]
pub enum ImageError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{0}: file name is not UTF-8")]
    NotUtf8(PathBuf),
    #[error("{0}: symlink target is not UTF-8")]
    BadLink(PathBuf),
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> ImageError + '_ {
    move |source| ImageError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Joins a relative link target onto the directory holding the link and
/// folds `.` and `..` lexically.
fn resolve_link(link: &str, target: &str) -> String {
    let mut parts: Vec<&str> = if target.starts_with('/') {
        Vec::new()
    } else {
        let parent = link.rsplit_once('/').map_or("", |(p, _)| p);
        parent.split('/').filter(|c| !c.is_empty()).collect()
    };
    for c in target.split('/') {
        match c {
            "" | "." => {}
            ".." => {
                parts.pop();
            }
            c => parts.push(c),
        }
    }
    format!("/{}", parts.join("/"))
}

fn walk(
    dir: &Path,
    prefix: &str,
    tree: &mut Tree,
    links: &mut BTreeMap<String, String>,
) -> Result<(), ImageError> {
    let mut entries = fs::read_dir(dir)
        .map_err(io_err(dir))?
        .collect::<Result<Vec<_>, _>>()
        .map_err(io_err(dir))?;
    entries.sort_by_key(|e| e.file_name());
    for entry in entries {
        let path = entry.path();
        let name = entry
            .file_name()
            .into_string()
            .map_err(|_| ImageError::NotUtf8(path.clone()))?;
        let at = format!("{prefix}/{name}");
        let kind = entry.file_type().map_err(io_err(&path))?;
        if kind.is_symlink() {
            let target = fs::read_link(&path).map_err(io_err(&path))?;
            let target = target.to_str().ok_or_else(|| ImageError::BadLink(path.clone()))?;
            links.insert(at.clone(), resolve_link(&at, target));
        } else if kind.is_dir() {
            let _ = tree.mkdir_all(&at);
            walk(&path, &at, tree, links)?;
        } else {
            let bytes = fs::read(&path).map_err(io_err(&path))?;
            let _ = tree.write(&at, bytes);
        }
    }
    Ok(())
}

/// Every regular file under `dir` becomes an image file at the same path
/// relative to `/`; symlinks become image symlinks.
pub fn load_image_dir(dir: &Path) -> Result<RoImage, ImageError> {
    let mut tree = Tree::new();
    let mut links = BTreeMap::new();
    walk(dir, "", &mut tree, &mut links)?;
    Ok(RoImage::seal(tree, links))
}
