//! File formats: CSV tables, JSON documents and run metadata.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use lgbandit_core::env::LgdsParams;
use lgbandit_core::episode::Episode;
use serde::Serialize;

use crate::config::ExperimentConfig;

/// Version string from `git describe`, or the package version outside a
/// checkout.
pub const VERSION: &str = env!("LGBANDIT_VERSION");

#[derive(Debug, thiserror::Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    File {
        path: String,
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Csv { path: String, source: csv::Error },
    #[error("{path}: {source}")]
    Json {
        path: String,
        source: serde_json::Error,
    },
    #[error("{path}: {source}")]
    Params {
        path: String,
        source: lgbandit_core::Error,
    },
}

fn display(path: &Path) -> String {
    path.display().to_string()
}

fn create(path: &Path) -> Result<BufWriter<File>, IoError> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir).map_err(|source| IoError::File {
                path: display(dir),
                source,
            })?;
        }
    }
    File::create(path)
        .map(BufWriter::new)
        .map_err(|source| IoError::File {
            path: display(path),
            source,
        })
}

/// Writes rows with a header taken from the field names.
pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<(), IoError> {
    let csv_err = |source| IoError::Csv {
        path: display(path),
        source,
    };
    let mut w = csv::Writer::from_writer(create(path)?);
    for row in rows {
        w.serialize(row).map_err(csv_err)?;
    }
    w.flush().map_err(|source| IoError::File {
        path: display(path),
        source,
    })
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<(), IoError> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value).map_err(|source| IoError::Json {
        path: display(path),
        source,
    })?;
    writeln!(w)
        .and_then(|_| w.flush())
        .map_err(|source| IoError::File {
            path: display(path),
            source,
        })
}

/// Reads and validates a system description.
pub fn read_params(path: &Path) -> Result<LgdsParams, IoError> {
    let text = fs::read_to_string(path).map_err(|source| IoError::File {
        path: display(path),
        source,
    })?;
    let params: LgdsParams = serde_json::from_str(&text).map_err(|source| IoError::Json {
        path: display(path),
        source,
    })?;
    params.validate().map_err(|source| IoError::Params {
        path: display(path),
        source,
    })?;
    Ok(params)
}

#[derive(Debug, Serialize)]
pub struct Metadata<'a> {
    pub version: &'a str,
    pub command: &'a str,
    pub config: &'a ExperimentConfig,
}

pub fn write_metadata(dir: &Path, command: &str, config: &ExperimentConfig) -> Result<(), IoError> {
    write_json(
        &dir.join("metadata.json"),
        &Metadata {
            version: VERSION,
            command,
            config,
        },
    )
}

/// One round of an episode, as written to `episode.csv`.
#[derive(Debug, Serialize)]
pub struct EpisodeRow<'a> {
    pub algorithm: &'a str,
    pub t: usize,
    pub action: usize,
    pub best_action: usize,
    pub reward: f64,
    pub regret: f64,
    pub cumulative_regret: f64,
}

pub fn episode_rows<'a>(algorithm: &'a str, ep: &Episode) -> Vec<EpisodeRow<'a>> {
    (0..ep.len())
        .map(|t| EpisodeRow {
            algorithm,
            t,
            action: ep.actions[t],
            best_action: ep.best_actions[t],
            reward: ep.rewards[t],
            regret: ep.regret[t],
            cumulative_regret: ep.cumulative_regret[t],
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use lgbandit_core::env::make_rotation_lgds;

    #[test]
    fn params_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("system.json");
        let p = make_rotation_lgds(1.2);
        write_json(&path, &p).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        let v: serde_json::Value = serde_json::from_str(&text).unwrap();
        for key in ["gamma", "q", "noise_var", "actions", "b_c"] {
            assert!(v.get(key).is_some(), "missing {key}");
        }
        assert_eq!(v["gamma"][0].as_array().unwrap().len(), 4);
        assert_eq!(read_params(&path).unwrap(), p);
    }

    #[test]
    fn invalid_params_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.json");
        let mut p = make_rotation_lgds(1.2);
        p.b_c = 1.0;
        write_json(&path, &p).unwrap();
        assert!(matches!(read_params(&path), Err(IoError::Params { .. })));
    }
}
