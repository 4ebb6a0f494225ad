use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use oodkit::replearn::{Activation, OptimizerKind};

use crate::config::{MethodName, ProtocolName, RunConfig, SplitName};

const PRECEDENCE: &str = "Settings are resolved as: command-line flag, then the --config file, then the built-in default. \
The seed falls back to the OODKIT_SEED environment variable before the default of 0.";

#[derive(Debug, Parser)]
#[command(name = "oodkit", version, about = "Unsupervised out-of-domain text detection", after_help = PRECEDENCE)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate seeded ID/OOD class splits of a labeled dataset.
    Split {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        split: SplitArgs,
        /// Labeled dataset (JSON lines).
        #[arg(long = "in", alias = "dataset")]
        input: Option<PathBuf>,
    },
    /// Likelihood-based OOD scores from external log-probs or the built-in n-gram LM.
    LmScore {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        lm: LmArgs,
        #[arg(long)]
        dataset: Option<PathBuf>,
        #[arg(long)]
        id_logprobs: Option<PathBuf>,
        #[arg(long)]
        bg_logprobs: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write a word-substituted copy of the training split.
    NoiseCorpus {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        dataset: Option<PathBuf>,
        #[arg(long)]
        p_noise: Option<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Pearson correlation between scores and sentence length.
    CorrLength {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        scores: Option<PathBuf>,
        #[arg(long)]
        dataset: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train the representation head on ID training embeddings.
    TrainRep {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        inputs: EmbeddingInputs,
        #[command(flatten)]
        kg: KGamma,
        #[command(flatten)]
        train: TrainArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Fit the Gaussian mixture and calibrate the decision threshold.
    FitDensity {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        inputs: EmbeddingInputs,
        #[command(flatten)]
        gmm: GmmArgs,
        /// Bundle holding a trained head; omit to fit on raw embeddings.
        #[arg(long)]
        model_in: Option<PathBuf>,
        #[arg(long)]
        model_out: Option<PathBuf>,
    },
    /// Score and flag records with a fitted bundle.
    Score {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        embeddings: Option<PathBuf>,
        /// Token log-probs, for bundles that score with LN.
        #[arg(long)]
        logprobs: Option<PathBuf>,
        /// Restrict scoring to records of this dataset split.
        #[arg(long)]
        dataset: Option<PathBuf>,
        #[arg(long, value_enum)]
        split: Option<SplitName>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// AUROC, AUPR_OOD and FPR@95%TPR of a score file.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        scores: Option<PathBuf>,
        #[arg(long)]
        dataset: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Grid search over K and gamma, selected on validation AUPR_OOD.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        inputs: EmbeddingInputs,
        #[arg(long, value_delimiter = ',')]
        k: Option<Vec<usize>>,
        #[arg(long, value_delimiter = ',')]
        gamma: Option<Vec<f64>>,
        #[command(flatten)]
        train: TrainArgs,
        #[command(flatten)]
        gmm: GmmArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Two-dimensional PCA table of (optionally adapted) embeddings.
    Project {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        inputs: EmbeddingInputs,
        /// Bundle whose trained head adapts the embeddings first.
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Serve a fitted bundle over HTTP.
    Serve {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        bind: Option<String>,
        #[arg(long)]
        provider_url: Option<String>,
        #[arg(long)]
        timeout_ms: Option<u64>,
        #[arg(long)]
        retries: Option<u32>,
    },
    /// Split, train, fit, score and evaluate in one run.
    Pipeline {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        inputs: EmbeddingInputs,
        #[command(flatten)]
        split: SplitArgs,
        #[command(flatten)]
        kg: KGamma,
        #[command(flatten)]
        train: TrainArgs,
        #[command(flatten)]
        gmm: GmmArgs,
        /// Skip representation learning (raw embeddings + GMM).
        #[arg(long)]
        no_train: bool,
        #[arg(long, value_enum)]
        eval_split: Option<SplitName>,
    },
}

#[derive(Debug, Args)]
pub struct Common {
    /// Flat TOML run configuration.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    /// Worker threads for stages that parallelize (sweep).
    #[arg(long)]
    pub threads: Option<usize>,
}

#[derive(Debug, Args)]
pub struct EmbeddingInputs {
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    #[arg(long)]
    pub embeddings: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SplitArgs {
    #[arg(long, value_enum)]
    pub protocol: Option<ProtocolName>,
    #[arg(long)]
    pub coverage: Option<f64>,
    #[arg(long)]
    pub n_ood: Option<usize>,
    #[arg(long)]
    pub n_splits: Option<usize>,
}

#[derive(Debug, Args)]
pub struct LmArgs {
    #[arg(long, value_enum)]
    pub method: Option<MethodName>,
    #[arg(long)]
    pub ngram_order: Option<usize>,
    /// Add-k smoothing constant of the n-gram LM.
    #[arg(long = "k")]
    pub smoothing_k: Option<f64>,
    /// Background LM: uniform, noisy or corpus:PATH.
    #[arg(long)]
    pub bg: Option<String>,
    #[arg(long)]
    pub p_noise: Option<f64>,
}

#[derive(Debug, Args)]
pub struct KGamma {
    /// Number of clusters.
    #[arg(long)]
    pub k: Option<usize>,
    /// Weight of the contrastive loss.
    #[arg(long)]
    pub gamma: Option<f64>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub tau: Option<f64>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub batch: Option<usize>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long, value_parser = parse_optimizer)]
    pub optimizer: Option<OptimizerKind>,
    #[arg(long)]
    pub dropout: Option<f64>,
    #[arg(long, value_parser = parse_activation)]
    pub activation: Option<Activation>,
    #[arg(long)]
    pub hidden_dim: Option<usize>,
    #[arg(long)]
    pub out_dim: Option<usize>,
    #[arg(long)]
    pub proj_hidden: Option<usize>,
    #[arg(long)]
    pub proj_dim: Option<usize>,
    /// Drop the clustering term (ablation).
    #[arg(long)]
    pub no_cluster_loss: bool,
    /// Drop the contrastive term (ablation).
    #[arg(long)]
    pub no_cl_loss: bool,
    /// Compute Q from a dropout-free pass.
    #[arg(long)]
    pub deterministic_q: bool,
}

#[derive(Debug, Args)]
pub struct GmmArgs {
    #[arg(long)]
    pub components: Option<usize>,
    #[arg(long)]
    pub eps: Option<f64>,
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long)]
    pub max_iters: Option<usize>,
    /// Share of ID validation scores allowed above the threshold.
    #[arg(long)]
    pub fpr_budget: Option<f64>,
}

fn parse_optimizer(s: &str) -> Result<OptimizerKind, String> {
    match s {
        "adam" => Ok(OptimizerKind::Adam),
        "sgd" => Ok(OptimizerKind::Sgd),
        _ => Err(format!("unknown optimizer `{s}` (adam, sgd)")),
    }
}

fn parse_activation(s: &str) -> Result<Activation, String> {
    match s {
        "tanh" => Ok(Activation::Tanh),
        "relu" => Ok(Activation::Relu),
        _ => Err(format!("unknown activation `{s}` (tanh, relu)")),
    }
}

fn set<T: Clone>(slot: &mut T, v: &Option<T>) {
    if let Some(v) = v {
        *slot = v.clone();
    }
}

fn set_opt<T: Clone>(slot: &mut Option<T>, v: &Option<T>) {
    if v.is_some() {
        *slot = v.clone();
    }
}

impl Common {
    pub fn apply(&self, c: &mut RunConfig) {
        set_opt(&mut c.seed, &self.seed);
        set(&mut c.out_dir, &self.out_dir);
        set(&mut c.threads, &self.threads);
    }
}

impl EmbeddingInputs {
    pub fn apply(&self, c: &mut RunConfig) {
        set_opt(&mut c.dataset, &self.dataset);
        set_opt(&mut c.embeddings, &self.embeddings);
    }
}

impl SplitArgs {
    pub fn apply(&self, c: &mut RunConfig) {
        set_opt(&mut c.protocol, &self.protocol);
        set(&mut c.coverage, &self.coverage);
        set(&mut c.n_ood, &self.n_ood);
        set(&mut c.n_splits, &self.n_splits);
    }
}

impl LmArgs {
    pub fn apply(&self, c: &mut RunConfig) {
        set(&mut c.method, &self.method);
        set(&mut c.ngram_order, &self.ngram_order);
        set(&mut c.smoothing_k, &self.smoothing_k);
        set(&mut c.bg, &self.bg);
        set(&mut c.p_noise, &self.p_noise);
    }
}

impl KGamma {
    pub fn apply(&self, c: &mut RunConfig) {
        set(&mut c.k, &self.k);
        set(&mut c.gamma, &self.gamma);
    }
}

impl TrainArgs {
    pub fn apply(&self, c: &mut RunConfig) {
        set(&mut c.tau, &self.tau);
        set(&mut c.alpha, &self.alpha);
        set(&mut c.batch, &self.batch);
        set(&mut c.epochs, &self.epochs);
        set(&mut c.learning_rate, &self.learning_rate);
        set(&mut c.optimizer, &self.optimizer);
        set(&mut c.dropout, &self.dropout);
        set(&mut c.activation, &self.activation);
        set_opt(&mut c.hidden_dim, &self.hidden_dim);
        set_opt(&mut c.out_dim, &self.out_dim);
        set_opt(&mut c.proj_hidden, &self.proj_hidden);
        set_opt(&mut c.proj_dim, &self.proj_dim);
        if self.no_cluster_loss {
            c.cluster_loss = false;
        }
        if self.no_cl_loss {
            c.cl_loss = false;
        }
        if self.deterministic_q {
            c.deterministic_q = true;
        }
    }
}

impl GmmArgs {
    pub fn apply(&self, c: &mut RunConfig) {
        set(&mut c.components, &self.components);
        set(&mut c.eps, &self.eps);
        set(&mut c.tol, &self.tol);
        set(&mut c.max_iters, &self.max_iters);
        set(&mut c.fpr_budget, &self.fpr_budget);
    }
}
