//! Experiment manifest: inputs, outputs, config snapshot and seeds.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, Read};
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{bail, Context, Result};
use arborloc::pipeline::RunConfig;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileRecord {
    pub path: PathBuf,
    /// Hex SHA-256; absent for outputs not yet written.
    pub sha256: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub inputs: BTreeMap<String, FileRecord>,
    pub outputs: BTreeMap<String, FileRecord>,
    /// Full effective configuration as TOML.
    pub config: String,
    pub seeds: BTreeMap<String, u64>,
    pub started_unix: f64,
    pub finished_unix: Option<f64>,
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let mut r = BufReader::new(File::open(path).with_context(|| format!("cannot open {}", path.display()))?);
    let mut h = Sha256::new();
    let mut buf = [0u8; 1 << 16];
    loop {
        let n = r.read(&mut buf)?;
        if n == 0 {
            break;
        }
        h.update(&buf[..n]);
    }
    Ok(hex::encode(h.finalize()))
}

fn now() -> f64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0.0, |d| d.as_secs_f64())
}

pub fn seeds(cfg: &RunConfig) -> BTreeMap<String, u64> {
    let f = &cfg.fixture;
    BTreeMap::from([
        ("world".to_string(), f.world_seed),
        ("render".to_string(), f.traverse.render_seed),
        ("odometry".to_string(), f.odometry.seed),
        ("survey".to_string(), f.survey.seed),
        ("descriptor_projection".to_string(), cfg.reloc.descriptors.projection_seed),
        ("ransac".to_string(), cfg.reloc.ransac.seed),
    ])
}

impl Manifest {
    pub fn new(command: &str, cfg: &RunConfig) -> Result<Self> {
        Ok(Self {
            tool: env!("CARGO_PKG_NAME").to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            command: command.to_string(),
            inputs: BTreeMap::new(),
            outputs: BTreeMap::new(),
            config: cfg.to_toml()?,
            seeds: seeds(cfg),
            started_unix: now(),
            finished_unix: None,
        })
    }

    pub fn add_input(&mut self, name: &str, path: &Path) -> Result<()> {
        let sha256 = Some(sha256_file(path)?);
        self.inputs.insert(
            name.to_string(),
            FileRecord {
                path: path.to_path_buf(),
                sha256,
            },
        );
        Ok(())
    }

    pub fn add_output(&mut self, name: &str, path: &Path) {
        self.outputs.insert(
            name.to_string(),
            FileRecord {
                path: path.to_path_buf(),
                sha256: None,
            },
        );
    }

    /// Checksums every output and stamps the finish time.
    pub fn finish(&mut self) -> Result<()> {
        for rec in self.outputs.values_mut() {
            rec.sha256 = Some(sha256_file(&rec.path)?);
        }
        self.finished_unix = Some(now());
        Ok(())
    }

    /// Inputs must still match their recorded checksums.
    pub fn verify_inputs(&self) -> Result<()> {
        for (name, rec) in &self.inputs {
            let have = sha256_file(&rec.path).with_context(|| format!("manifest input `{name}`"))?;
            if rec.sha256.as_deref() != Some(have.as_str()) {
                bail!("manifest input `{name}` ({}) changed since the manifest was written", rec.path.display());
            }
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)? + "\n")
            .with_context(|| format!("cannot write {}", path.display()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("{} is not a valid manifest", path.display()))
    }
}
