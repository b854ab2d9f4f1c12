//! Per-command manifests: config hash, seed, version and artifact digests.
//!
//! A manifest holds no timestamps or absolute paths, so two runs with the same
//! config and seed produce byte-identical manifests.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::formats::write_text;

pub const VERSION: &str = concat!("v", env!("CARGO_PKG_VERSION"));

pub fn sha256_hex(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    let mut out = String::with_capacity(64);
    for b in digest {
        let _ = write!(out, "{b:02x}");
    }
    out
}

pub fn file_digest(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(sha256_hex(&bytes))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Manifest {
    pub command: String,
    pub config_hash: String,
    pub seed: u64,
    /// File name and digest of every input, in insertion order.
    pub inputs: Vec<(String, String)>,
    pub outputs: Vec<(String, String)>,
}

fn name_of(path: &Path) -> String {
    path.file_name()
        .map_or_else(|| path.display().to_string(), |n| n.to_string_lossy().into_owned())
}

impl Manifest {
    pub fn new(command: &str, config_text: &str, seed: u64) -> Self {
        Self {
            command: command.to_string(),
            config_hash: sha256_hex(config_text.as_bytes()),
            seed,
            inputs: Vec::new(),
            outputs: Vec::new(),
        }
    }

    pub fn input(&mut self, path: &Path) -> Result<()> {
        self.inputs.push((name_of(path), file_digest(path)?));
        Ok(())
    }

    pub fn output(&mut self, path: &Path) -> Result<()> {
        self.outputs.push((name_of(path), file_digest(path)?));
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "command = {}", self.command);
        let _ = writeln!(out, "version = {VERSION}");
        let _ = writeln!(out, "seed = {}", self.seed);
        let _ = writeln!(out, "config_sha256 = {}", self.config_hash);
        for (name, digest) in &self.inputs {
            let _ = writeln!(out, "input {name} {digest}");
        }
        for (name, digest) in &self.outputs {
            let _ = writeln!(out, "output {name} {digest}");
        }
        out
    }

    /// Digest of [`Manifest::to_text`].
    pub fn hash(&self) -> String {
        sha256_hex(self.to_text().as_bytes())
    }

    pub fn path_in(out: &Path, command: &str) -> PathBuf {
        out.join(format!("manifest-{command}.txt"))
    }

    /// Writes the manifest next to the artifacts and returns its hash.
    pub fn write(&self, out: &Path) -> Result<String> {
        write_text(&Self::path_in(out, &self.command), &self.to_text())?;
        Ok(self.hash())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn known_digest() {
        assert_eq!(
            sha256_hex(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }

    #[test]
    fn text_lists_artifacts_by_name() {
        let dir = tempfile::tempdir().unwrap();
        let f = dir.path().join("a.csv");
        std::fs::write(&f, "x\n").unwrap();
        let mut m = Manifest::new("generate", "seed = 1\n", 1);
        m.output(&f).unwrap();
        let text = m.to_text();
        assert!(text.contains(&format!("output a.csv {}", sha256_hex(b"x\n"))));
        assert!(!text.contains(dir.path().to_str().unwrap()));
        assert_eq!(m.hash(), sha256_hex(text.as_bytes()));
    }
}
