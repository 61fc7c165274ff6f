use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::RunConfig;
use crate::CliError;

/// Reproducibility block embedded in every report.
#[derive(Clone, Debug, Serialize)]
pub struct Provenance {
    pub command: String,
    pub version: String,
    /// SHA-256 of the configuration file bytes.
    pub config_sha256: Option<String>,
    pub seed: u64,
    pub dim: usize,
    pub n: Option<usize>,
    pub ny: Option<usize>,
    pub tolerances: Option<Tolerances>,
}

#[derive(Clone, Debug, Serialize)]
pub struct Tolerances {
    pub newton_tol: f64,
    pub newton_max_iter: usize,
    pub criticality_factor: f64,
    pub lanczos_steps: usize,
    pub lanczos_tol: f64,
    pub fd_step: Option<f64>,
    pub richardson: bool,
    pub oracle_rel_tol: f64,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    format!("{:x}", Sha256::digest(bytes))
}

impl Provenance {
    pub fn new(command: &str, config: Option<(&RunConfig, &[u8])>, seed: u64, dim: usize) -> Self {
        let version = env!("CARGO_PKG_VERSION").to_string();
        match config {
            Some((cfg, bytes)) => {
                let a = &cfg.analysis;
                Self {
                    command: command.into(),
                    version,
                    config_sha256: Some(sha256_hex(bytes)),
                    seed,
                    dim,
                    n: Some(cfg.geometry.n),
                    ny: Some(cfg.geometry.ny),
                    tolerances: Some(Tolerances {
                        newton_tol: a.newton_tol,
                        newton_max_iter: a.newton_max_iter,
                        criticality_factor: a.criticality_factor,
                        lanczos_steps: a.lanczos_steps,
                        lanczos_tol: a.lanczos_tol,
                        fd_step: a.fd_step,
                        richardson: a.richardson,
                        oracle_rel_tol: a.oracle_rel_tol,
                    }),
                }
            }
            None => Self {
                command: command.into(),
                version,
                config_sha256: None,
                seed,
                dim,
                n: None,
                ny: None,
                tolerances: None,
            },
        }
    }
}

/// Report with the provenance block first.
#[derive(Serialize)]
pub struct Envelope<'a, T: Serialize> {
    pub provenance: &'a Provenance,
    #[serde(flatten)]
    pub body: &'a T,
}

pub struct Sink {
    dir: PathBuf,
}

impl Sink {
    pub fn new(dir: &Path) -> Result<Self, CliError> {
        fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))?;
        Ok(Self {
            dir: dir.to_path_buf(),
        })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    pub fn json<T: Serialize>(&self, prov: &Provenance, body: &T) -> Result<PathBuf, CliError> {
        let path = self.path(&format!("{}.json", prov.command));
        let mut text = serde_json::to_string_pretty(&Envelope {
            provenance: prov,
            body,
        })
        .map_err(|e| CliError::Io(e.to_string()))?;
        text.push('\n');
        fs::write(&path, text).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        Ok(path)
    }

    pub fn csv<R: Serialize>(&self, name: &str, rows: &[R]) -> Result<PathBuf, CliError> {
        let path = self.path(name);
        let io = |e: csv::Error| CliError::Io(format!("{}: {e}", path.display()));
        let mut w = csv::Writer::from_path(&path).map_err(io)?;
        for r in rows {
            w.serialize(r).map_err(io)?;
        }
        w.flush()
            .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        Ok(path)
    }
}
