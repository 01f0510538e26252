//! JSON helpers, hashing and path handling shared by the commands.

use std::fs;
use std::path::{Component, Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::de::DeserializeOwned;
use serde::Serialize;
use sha2::{Digest, Sha256};

/// Reads JSON, reporting the offending field path on schema errors.
pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let de = &mut serde_json::Deserializer::from_str(&text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let field = e.path().to_string();
        anyhow::anyhow!("{}: field `{}`: {}", path.display(), field, e.inner())
    })
}

/// Pretty JSON with a trailing newline.
pub fn to_json<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, to_json(value)?).with_context(|| format!("writing {}", path.display()))
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Resolves `rel` against the directory containing `anchor_file`.
pub fn resolve(anchor_file: &Path, rel: &Path) -> PathBuf {
    if rel.is_absolute() {
        return rel.to_path_buf();
    }
    anchor_file.parent().unwrap_or(Path::new(".")).join(rel)
}

/// Path of `target` relative to directory `base`, with `/` separators.
pub fn relative_to(target: &Path, base: &Path) -> Result<String> {
    let t = fs::canonicalize(target).with_context(|| format!("resolving {}", target.display()))?;
    let b = fs::canonicalize(base).with_context(|| format!("resolving {}", base.display()))?;
    let rel = pathdiff::diff_paths(&t, &b)
        .with_context(|| format!("no relative path from {} to {}", b.display(), t.display()))?;
    Ok(rel
        .components()
        .map(|c| c.as_os_str().to_string_lossy().into_owned())
        .collect::<Vec<_>>()
        .join("/"))
}

pub fn ensure_relative(p: &str, what: &str) -> Result<()> {
    let path = Path::new(p);
    if p.is_empty() || path.is_absolute() || path.components().any(|c| matches!(c, Component::Prefix(_))) {
        bail!("{what} path `{p}` must be relative to the manifest");
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn field_path_in_errors() {
        #[derive(serde::Deserialize, Debug)]
        #[allow(dead_code)]
        struct Outer {
            inner: Inner,
        }
        #[derive(serde::Deserialize, Debug)]
        #[allow(dead_code)]
        struct Inner {
            ior: f64,
        }
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.json");
        fs::write(&p, r#"{"inner": {"ior": "glass"}}"#).unwrap();
        let err = read_json::<Outer>(&p).unwrap_err().to_string();
        assert!(err.contains("inner.ior"), "{err}");
    }

    #[test]
    fn relative_paths() {
        let dir = tempfile::tempdir().unwrap();
        fs::create_dir_all(dir.path().join("a/b")).unwrap();
        fs::create_dir_all(dir.path().join("c")).unwrap();
        fs::write(dir.path().join("a/b/m.obj"), "").unwrap();
        assert_eq!(relative_to(&dir.path().join("a/b/m.obj"), &dir.path().join("c")).unwrap(), "../a/b/m.obj");
        assert!(ensure_relative("/abs/x", "mesh").is_err());
        assert!(ensure_relative("x/y.png", "mesh").is_ok());
        assert_eq!(sha256_hex(b"abc").len(), 64);
    }
}
