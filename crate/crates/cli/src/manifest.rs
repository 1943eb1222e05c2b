//! Run bookkeeping: every input read and every artifact written goes through
//! a [`Run`], which hashes it and finally writes `manifest.json`.
//!
//! The artifacts of a run are fully determined by the recorded arguments and
//! the input bytes. The manifest itself also carries the wall time and
//! thread count, so it is not an artifact and is never compared.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const TOOLKIT: &str = "nersplit";

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileRecord {
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub toolkit: String,
    pub version: String,
    pub command: String,
    /// Command line without `--out` and `--threads`.
    pub argv: Vec<String>,
    /// Directory relative paths in `argv` are resolved against.
    pub working_dir: String,
    pub inputs: Vec<FileRecord>,
    /// Fully resolved configuration of the command.
    pub config: Value,
    pub config_hash: String,
    pub seed: Option<u64>,
    /// Artifacts, relative to the output directory, sorted by name.
    pub outputs: Vec<FileRecord>,
    pub threads: usize,
    pub wall_time_secs: f64,
}

impl RunManifest {
    pub fn read(path: &Path) -> Result<RunManifest> {
        let text = fs::read_to_string(path).with_context(|| format!("reading manifest {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing manifest {}", path.display()))
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn record(path: String, bytes: &[u8]) -> FileRecord {
    FileRecord { path, sha256: sha256_hex(bytes), bytes: bytes.len() as u64 }
}

pub struct Run {
    command: &'static str,
    argv: Vec<String>,
    out: PathBuf,
    inputs: Vec<FileRecord>,
    outputs: Vec<FileRecord>,
    config: Value,
    seed: Option<u64>,
    started: Instant,
}

impl Run {
    pub fn start(command: &'static str, argv: Vec<String>, out: &Path) -> Result<Run> {
        fs::create_dir_all(out).with_context(|| format!("creating output directory {}", out.display()))?;
        Ok(Run {
            command,
            argv,
            out: out.to_path_buf(),
            inputs: Vec::new(),
            outputs: Vec::new(),
            config: Value::Null,
            seed: None,
            started: Instant::now(),
        })
    }

    /// Reads an input file and records its hash.
    pub fn read_input(&mut self, path: &Path) -> Result<Vec<u8>> {
        let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
        let abs = fs::canonicalize(path).unwrap_or_else(|_| path.to_path_buf());
        let rec = record(abs.display().to_string(), &bytes);
        if !self.inputs.contains(&rec) {
            self.inputs.push(rec);
        }
        Ok(bytes)
    }

    pub fn set_config<T: Serialize>(&mut self, config: &T) -> Result<()> {
        self.config = serde_json::to_value(config)?;
        Ok(())
    }

    pub fn set_seed(&mut self, seed: u64) {
        self.seed = Some(seed);
    }

    /// Writes one artifact into the output directory.
    pub fn write(&mut self, name: &str, bytes: impl AsRef<[u8]>) -> Result<()> {
        let bytes = bytes.as_ref();
        let path = self.out.join(name);
        fs::write(&path, bytes).with_context(|| format!("writing {}", path.display()))?;
        self.outputs.retain(|r| r.path != name);
        self.outputs.push(record(name.to_string(), bytes));
        Ok(())
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        self.write(name, text)
    }

    pub fn finish(mut self) -> Result<RunManifest> {
        self.outputs.sort_by(|a, b| a.path.cmp(&b.path));
        let config_text = serde_json::to_string(&self.config)?;
        let manifest = RunManifest {
            toolkit: TOOLKIT.to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            command: self.command.to_string(),
            argv: self.argv,
            working_dir: std::env::current_dir()?.display().to_string(),
            inputs: self.inputs,
            config: self.config,
            config_hash: sha256_hex(config_text.as_bytes()),
            seed: self.seed,
            outputs: self.outputs,
            threads: rayon::current_num_threads(),
            wall_time_secs: self.started.elapsed().as_secs_f64(),
        };
        let mut text = serde_json::to_string_pretty(&manifest)?;
        text.push('\n');
        let path = self.out.join(MANIFEST_FILE);
        fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
        Ok(manifest)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sha256_of_known_input() {
        assert_eq!(sha256_hex(b"abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    }

    #[test]
    fn run_records_inputs_outputs_and_manifest() {
        let dir = tempfile::tempdir().unwrap();
        let input = dir.path().join("in.txt");
        fs::write(&input, "abc").unwrap();
        let out = dir.path().join("out");
        let mut run = Run::start("test", vec!["x".into()], &out).unwrap();
        assert_eq!(run.read_input(&input).unwrap(), b"abc");
        run.set_config(&serde_json::json!({"b": 1, "a": 2})).unwrap();
        run.set_seed(7);
        run.write("z.txt", "z").unwrap();
        run.write("a.txt", "a").unwrap();
        run.write("z.txt", "zz").unwrap();
        let m = run.finish().unwrap();
        assert_eq!(m.outputs.iter().map(|r| r.path.as_str()).collect::<Vec<_>>(), ["a.txt", "z.txt"]);
        assert_eq!(m.outputs[1].sha256, sha256_hex(b"zz"));
        assert_eq!(m.inputs[0].sha256, sha256_hex(b"abc"));
        assert_eq!(m.config_hash, sha256_hex(br#"{"a":2,"b":1}"#));
        assert_eq!(RunManifest::read(&out.join(MANIFEST_FILE)).unwrap(), m);
    }
}
