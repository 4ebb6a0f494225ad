use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};

use oodkit::likelihood::OodScore;
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::CliError;

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn ensure_parent(path: &Path) -> Result<(), CliError> {
    match path.parent() {
        Some(dir) if !dir.as_os_str().is_empty() => fs::create_dir_all(dir).map_err(io_err(dir)),
        _ => Ok(()),
    }
}

pub fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    ensure_parent(path)?;
    fs::write(path, text).map_err(io_err(path))
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).expect("serializable");
    text.push('\n');
    write_text(path, &text)
}

pub fn write_jsonl<T: Serialize>(path: &Path, rows: &[T]) -> Result<(), CliError> {
    let mut text = String::new();
    for r in rows {
        text.push_str(&serde_json::to_string(r).expect("serializable"));
        text.push('\n');
    }
    write_text(path, &text)
}

/// One scored record as written by `score`; readable as a plain score file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreLine {
    pub id: String,
    pub score: f64,
    pub is_ood: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub length: Option<usize>,
}

/// Reads a JSON-lines score file (`{"id", "score", ...}` per line).
pub fn read_scores(path: &Path) -> Result<Vec<OodScore>, CliError> {
    let file = fs::File::open(path).map_err(io_err(path))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(io_err(path))?;
        if line.trim().is_empty() {
            continue;
        }
        let s: OodScore = serde_json::from_str(&line).map_err(|e| oodkit::OodError::Parse {
            line: i + 1,
            message: format!("{}: {e}", path.display()),
        })?;
        if !s.score.is_finite() {
            return Err(oodkit::OodError::NonFinite(s.id).into());
        }
        out.push(s);
    }
    Ok(out)
}

pub fn sha256_file(path: &Path) -> Result<String, CliError> {
    let bytes = fs::read(path).map_err(io_err(path))?;
    Ok(oodkit_service::sha256_hex(&bytes))
}

/// Record of one run: resolved configuration, seed and digests of every
/// file read or written. Contains no timestamps.
#[derive(Debug, Serialize)]
pub struct Manifest<'a> {
    pub tool_version: &'static str,
    pub command: &'a str,
    pub seed: u64,
    pub config: &'a RunConfig,
    pub inputs: BTreeMap<String, String>,
    pub outputs: BTreeMap<String, String>,
}

/// Files touched by a command.
#[derive(Debug, Default)]
pub struct Artifacts {
    pub inputs: Vec<PathBuf>,
    pub outputs: Vec<PathBuf>,
}

impl Artifacts {
    pub fn input(&mut self, p: &Path) {
        self.inputs.push(p.to_path_buf());
    }

    pub fn output(&mut self, p: PathBuf) -> PathBuf {
        self.outputs.push(p.clone());
        p
    }
}

fn digests(paths: &[PathBuf]) -> Result<BTreeMap<String, String>, CliError> {
    paths
        .iter()
        .map(|p| Ok((p.display().to_string(), sha256_file(p)?)))
        .collect()
}

/// Writes `<command>.manifest.json` and `<command>.config.toml` under the
/// output directory. Re-running with `--config <command>.config.toml`
/// repeats the run.
pub fn write_manifest(command: &str, cfg: &RunConfig, artifacts: &Artifacts) -> Result<PathBuf, CliError> {
    let config_path = cfg.out_dir.join(format!("{command}.config.toml"));
    write_text(&config_path, &cfg.to_toml())?;
    let manifest = Manifest {
        tool_version: env!("CARGO_PKG_VERSION"),
        command,
        seed: cfg.seed(),
        config: cfg,
        inputs: digests(&artifacts.inputs)?,
        outputs: digests(&artifacts.outputs)?,
    };
    let path = cfg.out_dir.join(format!("{command}.manifest.json"));
    write_json(&path, &manifest)?;
    Ok(path)
}
