//! Flat run configuration shared by every subcommand.
//!
//! Precedence, highest first: command-line flag, config file, built-in
//! default. The seed additionally falls back to `OODKIT_SEED` when neither
//! the flag nor the file sets it.

use std::path::{Path, PathBuf};

use clap::ValueEnum;
use oodkit::datamodel::Split;
use oodkit::density::GmmParams;
use oodkit::likelihood::{LikelihoodMethod, NGramParams, NoiseConfig};
use oodkit::replearn::{Activation, OptimizerKind, TrainConfig};
use oodkit::splits::Protocol;
use serde::{Deserialize, Serialize};

use crate::CliError;

pub const SEED_ENV: &str = "OODKIT_SEED";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum ProtocolName {
    Coverage,
    Fixed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum MethodName {
    Ln,
    Lr,
    Nlr,
    LrWs,
}

impl From<MethodName> for LikelihoodMethod {
    fn from(m: MethodName) -> Self {
        match m {
            MethodName::Ln => LikelihoodMethod::Ln,
            MethodName::Lr => LikelihoodMethod::Lr,
            MethodName::Nlr => LikelihoodMethod::Nlr,
            MethodName::LrWs => LikelihoodMethod::LrWs,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum SplitName {
    Train,
    Valid,
    Test,
}

impl From<SplitName> for Split {
    fn from(s: SplitName) -> Self {
        match s {
            SplitName::Train => Split::Train,
            SplitName::Valid => Split::Valid,
            SplitName::Test => Split::Test,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: Option<u64>,
    pub out_dir: PathBuf,
    pub threads: usize,

    pub dataset: Option<PathBuf>,
    pub embeddings: Option<PathBuf>,
    pub id_logprobs: Option<PathBuf>,
    pub bg_logprobs: Option<PathBuf>,
    pub model: Option<PathBuf>,
    pub scores: Option<PathBuf>,
    /// Output file name; relative names are placed under `out_dir`.
    pub out: Option<PathBuf>,

    /// Unset means the dataset already carries its ID/OOD split.
    pub protocol: Option<ProtocolName>,
    pub coverage: f64,
    pub n_ood: usize,
    pub n_splits: usize,

    pub method: MethodName,
    pub ngram_order: usize,
    pub smoothing_k: f64,
    /// `uniform`, `noisy` or `corpus:PATH`.
    pub bg: String,
    pub p_noise: f64,

    /// Whether `pipeline` trains the representation head before the density.
    pub train_rep: bool,
    pub k: usize,
    pub gamma: f64,
    pub tau: f64,
    pub alpha: f64,
    pub batch: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub optimizer: OptimizerKind,
    pub dropout: f64,
    pub activation: Activation,
    pub hidden_dim: Option<usize>,
    pub out_dim: Option<usize>,
    pub proj_hidden: Option<usize>,
    pub proj_dim: Option<usize>,
    pub cluster_loss: bool,
    pub cl_loss: bool,
    pub deterministic_q: bool,

    pub components: usize,
    pub eps: f64,
    pub tol: f64,
    pub max_iters: usize,
    pub fpr_budget: f64,

    pub eval_split: SplitName,
    pub sweep_k: Vec<usize>,
    pub sweep_gamma: Vec<f64>,

    pub bind: String,
    pub provider_url: Option<String>,
    pub timeout_ms: u64,
    pub retries: u32,
}

impl Default for RunConfig {
    fn default() -> Self {
        let train = TrainConfig::default();
        let gmm = GmmParams::default();
        let lm = NGramParams::default();
        Self {
            seed: None,
            out_dir: PathBuf::from("."),
            threads: 1,
            dataset: None,
            embeddings: None,
            id_logprobs: None,
            bg_logprobs: None,
            model: None,
            scores: None,
            out: None,
            protocol: None,
            coverage: 0.75,
            n_ood: 2,
            n_splits: 1,
            method: MethodName::Ln,
            ngram_order: lm.order,
            smoothing_k: lm.k,
            bg: "uniform".into(),
            p_noise: NoiseConfig::default().p_noise,
            train_rep: true,
            k: train.k,
            gamma: train.gamma,
            tau: train.tau,
            alpha: train.alpha,
            batch: train.batch_size,
            epochs: train.epochs,
            learning_rate: train.learning_rate,
            optimizer: train.optimizer,
            dropout: train.dropout,
            activation: train.activation,
            hidden_dim: train.hidden_dim,
            out_dim: train.out_dim,
            proj_hidden: train.proj_hidden,
            proj_dim: train.proj_dim,
            cluster_loss: train.cluster_loss,
            cl_loss: train.cl_loss,
            deterministic_q: train.deterministic_q,
            components: gmm.components,
            eps: gmm.eps,
            tol: gmm.tol,
            max_iters: gmm.max_iters,
            fpr_budget: 0.05,
            eval_split: SplitName::Test,
            sweep_k: vec![2, 4, 8, 16, 32],
            sweep_gamma: vec![0.1, 1.0, 4.0],
            bind: "127.0.0.1:8080".into(),
            provider_url: None,
            timeout_ms: 2000,
            retries: 2,
        }
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Usage(format!("config: {}", e.message())))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|source| CliError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Fills an unset seed from the environment, then from 0.
    pub fn resolve_seed(&mut self, env: Option<String>) -> Result<u64, CliError> {
        if self.seed.is_none() {
            self.seed = match env {
                Some(v) => Some(
                    v.trim()
                        .parse()
                        .map_err(|_| CliError::Usage(format!("{SEED_ENV}=`{v}` is not an unsigned integer")))?,
                ),
                None => Some(0),
            };
        }
        Ok(self.seed.unwrap_or(0))
    }

    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or(0)
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            k: self.k,
            gamma: self.gamma,
            tau: self.tau,
            alpha: self.alpha,
            batch_size: self.batch,
            epochs: self.epochs,
            learning_rate: self.learning_rate,
            optimizer: self.optimizer,
            seed: self.seed(),
            cluster_loss: self.cluster_loss,
            cl_loss: self.cl_loss,
            deterministic_q: self.deterministic_q,
            dropout: self.dropout,
            activation: self.activation,
            hidden_dim: self.hidden_dim,
            out_dim: self.out_dim,
            proj_hidden: self.proj_hidden,
            proj_dim: self.proj_dim,
        }
    }

    pub fn gmm_params(&self) -> GmmParams {
        GmmParams {
            components: self.components,
            seed: self.seed(),
            max_iters: self.max_iters,
            tol: self.tol,
            eps: self.eps,
        }
    }

    pub fn noise_config(&self) -> NoiseConfig {
        NoiseConfig {
            p_noise: self.p_noise,
            seed: self.seed(),
        }
    }

    pub fn ngram_params(&self) -> NGramParams {
        NGramParams {
            order: self.ngram_order,
            k: self.smoothing_k,
        }
    }

    pub fn protocol(&self) -> Option<Protocol> {
        self.protocol.map(|p| match p {
            ProtocolName::Coverage => Protocol::Coverage { coverage: self.coverage },
            ProtocolName::Fixed => Protocol::Fixed { n_ood_classes: self.n_ood },
        })
    }

    /// Where an output named `default` (or `out`, when set) is written.
    pub fn output(&self, default: &str) -> PathBuf {
        self.under_out_dir(self.out.as_deref().unwrap_or(Path::new(default)))
    }

    pub fn under_out_dir(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.out_dir.join(p)
        }
    }

    pub fn require<'a>(&self, value: &'a Option<PathBuf>, flag: &str) -> Result<&'a Path, CliError> {
        value
            .as_deref()
            .ok_or_else(|| CliError::Usage(format!("missing --{flag} (or `{}` in the config file)", flag.replace('-', "_"))))
    }
}
