//! Run manifests: a deterministic record of every command invocation,
//! sufficient to reproduce the run byte for byte. No timestamps, no
//! hostnames; just the resolved parameters and content digests of every
//! file read or written.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use shipsid_core::error::Result;

/// FNV-1a 64-bit content digest. Not cryptographic; used to fingerprint
/// inputs and outputs in manifests.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for b in bytes {
        h ^= *b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

pub fn file_digest(path: &Path) -> Result<u64> {
    Ok(fnv1a64(&std::fs::read(path)?))
}

pub struct Manifest {
    command: String,
    seed: Option<u64>,
    config_file: Option<PathBuf>,
    params: Vec<(String, String)>,
    inputs: Vec<(PathBuf, u64)>,
    outputs: Vec<(PathBuf, u64)>,
}

impl Manifest {
    pub fn new(command: &str) -> Self {
        Manifest {
            command: command.to_string(),
            seed: None,
            config_file: None,
            params: Vec::new(),
            inputs: Vec::new(),
            outputs: Vec::new(),
        }
    }

    pub fn seed(&mut self, seed: u64) -> &mut Self {
        self.seed = Some(seed);
        self
    }

    pub fn config_file(&mut self, path: Option<&Path>) -> &mut Self {
        self.config_file = path.map(|p| p.to_path_buf());
        self
    }

    /// Record one resolved parameter of the run.
    pub fn param(&mut self, key: &str, value: impl std::fmt::Display) -> &mut Self {
        self.params.push((key.to_string(), value.to_string()));
        self
    }

    pub fn input(&mut self, path: &Path) -> Result<&mut Self> {
        let d = file_digest(path)?;
        self.inputs.push((path.to_path_buf(), d));
        Ok(self)
    }

    pub fn output(&mut self, path: &Path) -> Result<&mut Self> {
        let d = file_digest(path)?;
        self.outputs.push((path.to_path_buf(), d));
        Ok(self)
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "# shipsid run manifest version=1");
        let _ = writeln!(out, "command = {}", self.command);
        let _ = writeln!(out, "tool_version = {}", env!("CARGO_PKG_VERSION"));
        if let Some(seed) = self.seed {
            let _ = writeln!(out, "seed = {seed}");
        }
        match &self.config_file {
            Some(p) => {
                let _ = writeln!(out, "config_file = {}", p.display());
            }
            None => {
                let _ = writeln!(out, "config_file = (none)");
            }
        }
        for (k, v) in &self.params {
            let _ = writeln!(out, "param {k} = {v}");
        }
        for (p, d) in &self.inputs {
            let _ = writeln!(out, "input {} fnv1a64={d:016x}", p.display());
        }
        for (p, d) in &self.outputs {
            let _ = writeln!(out, "output {} fnv1a64={d:016x}", p.display());
        }
        out
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.render())?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fnv_known_values() {
        // Reference values of FNV-1a 64.
        assert_eq!(fnv1a64(b""), 0xcbf29ce484222325);
        assert_eq!(fnv1a64(b"a"), 0xaf63dc4c8601ec8c);
        assert_eq!(fnv1a64(b"foobar"), 0x85944171f73967e8);
    }

    #[test]
    fn render_is_deterministic() {
        let mut m = Manifest::new("train");
        m.seed(7).param("batch_size", 512).param("memory_steps", 10);
        assert_eq!(m.render(), m.render());
        assert!(m.render().contains("param batch_size = 512"));
    }
}
