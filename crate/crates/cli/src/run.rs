//! Run directories and manifests.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use lscp::lattice::Lattice;
use lscp::{Error, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::commands::Invocation;

/// Environment variable naming the default parent of run directories.
pub const OUTPUT_ROOT_VAR: &str = "LSCP_OUTPUT_ROOT";

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

pub fn file_sha256(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| Error::Io { path: path.into(), source: e })?;
    Ok(sha256_hex(&bytes))
}

/// Hash of the canonical JSON form of an invocation.
pub fn invocation_hash(inv: &Invocation) -> String {
    sha256_hex(serde_json::to_string(inv).expect("invocation serialises").as_bytes())
}

/// `out` if given, else `$LSCP_OUTPUT_ROOT/<command>-<hash prefix>`
/// (default root `runs`).
pub fn run_dir(out: Option<PathBuf>, inv: &Invocation) -> PathBuf {
    out.unwrap_or_else(|| {
        let root = std::env::var_os(OUTPUT_ROOT_VAR).map(PathBuf::from).unwrap_or_else(|| "runs".into());
        root.join(format!("{}-{}", inv.name(), &invocation_hash(inv)[..12]))
    })
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub config_hash: String,
    pub seed: Option<u64>,
    pub invocation: Invocation,
    /// SHA-256 of input files at run time.
    pub inputs: BTreeMap<String, String>,
    /// SHA-256 of every output file except the manifest.
    pub outputs: BTreeMap<String, String>,
    #[serde(default)]
    pub acceptance: BTreeMap<String, serde_json::Value>,
}

impl Manifest {
    pub fn read(dir: &Path) -> Result<Self> {
        let p = dir.join("manifest.json");
        let f = std::fs::File::open(&p).map_err(|e| Error::Io { path: p.clone(), source: e })?;
        Ok(serde_json::from_reader(f)?)
    }
}

/// Collects outputs of one run and writes the manifest last.
pub struct Run {
    pub dir: PathBuf,
    inv: Invocation,
    inputs: BTreeMap<String, String>,
    pub acceptance: BTreeMap<String, serde_json::Value>,
}

impl Run {
    pub fn create(dir: PathBuf, inv: Invocation) -> Result<Self> {
        std::fs::create_dir_all(&dir).map_err(|e| Error::Io { path: dir.clone(), source: e })?;
        log::info!("writing run to {}", dir.display());
        Ok(Self { dir, inv, inputs: BTreeMap::new(), acceptance: BTreeMap::new() })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    pub fn record_input(&mut self, path: &Path) -> Result<()> {
        let h = file_sha256(path)?;
        self.inputs.insert(path.display().to_string(), h);
        Ok(())
    }

    pub fn write_json<T: Serialize>(&self, name: &str, value: &T) -> Result<()> {
        let p = self.path(name);
        let f = std::fs::File::create(&p).map_err(|e| Error::Io { path: p.clone(), source: e })?;
        serde_json::to_writer_pretty(std::io::BufWriter::new(f), value)?;
        Ok(())
    }

    pub fn finish(self) -> Result<PathBuf> {
        let mut outputs = BTreeMap::new();
        let mut stack = vec![self.dir.clone()];
        while let Some(d) = stack.pop() {
            let entries = std::fs::read_dir(&d).map_err(|e| Error::Io { path: d.clone(), source: e })?;
            for e in entries {
                let p = e.map_err(|e| Error::Io { path: d.clone(), source: e })?.path();
                if p.is_dir() {
                    stack.push(p);
                } else if p.file_name().is_some_and(|n| n != "manifest.json") {
                    let rel = p.strip_prefix(&self.dir).unwrap_or(&p).display().to_string();
                    outputs.insert(rel, file_sha256(&p)?);
                }
            }
        }
        let m = Manifest {
            tool: "lscp".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            config_hash: invocation_hash(&self.inv),
            seed: self.inv.seed(),
            invocation: self.inv,
            inputs: self.inputs,
            outputs,
            acceptance: self.acceptance,
        };
        let p = self.dir.join("manifest.json");
        let f = std::fs::File::create(&p).map_err(|e| Error::Io { path: p.clone(), source: e })?;
        serde_json::to_writer_pretty(std::io::BufWriter::new(f), &m)?;
        Ok(self.dir)
    }
}

/// Write named per-cell columns with `row,col` keys.
pub fn write_raster(p: &Path, lattice: &Lattice, cols: &[(&str, &[f64])]) -> Result<()> {
    let io = |e| Error::Io { path: p.into(), source: e };
    let mut f = std::io::BufWriter::new(std::fs::File::create(p).map_err(io)?);
    let names: Vec<&str> = cols.iter().map(|c| c.0).collect();
    writeln!(f, "row,col,{}", names.join(",")).map_err(io)?;
    for j in 0..lattice.len() {
        let (ix, iy) = lattice.coords(j);
        write!(f, "{iy},{ix}").map_err(io)?;
        for c in cols {
            write!(f, ",{}", c.1[j]).map_err(io)?;
        }
        writeln!(f).map_err(io)?;
    }
    f.flush().map_err(io)
}
