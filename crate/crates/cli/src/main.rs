use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use oodkit::{ErrorClass, OodError};
use oodkit_service::ServiceError;
use thiserror::Error;

mod args;
mod commands;
mod config;
mod io;

use args::{Cli, Command, Common};
use config::{RunConfig, SEED_ENV};
use io::Artifacts;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Core(#[from] OodError),
    #[error(transparent)]
    Service(#[from] ServiceError),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Core(e) | CliError::Service(ServiceError::Model(e)) if e.class() == ErrorClass::Numeric => 3,
            _ => 2,
        }
    }
}

fn base_config(common: &Common) -> Result<RunConfig, CliError> {
    let mut cfg = match &common.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    common.apply(&mut cfg);
    Ok(cfg)
}

fn set<T>(slot: &mut Option<T>, v: Option<T>) {
    if v.is_some() {
        *slot = v;
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    let mut art = Artifacts::default();
    let (name, cfg) = match cli.command {
        Command::Split { common, split, input } => {
            let mut cfg = base_config(&common)?;
            split.apply(&mut cfg);
            set(&mut cfg.dataset, input);
            ("split", cfg)
        }
        Command::LmScore {
            common,
            lm,
            dataset,
            id_logprobs,
            bg_logprobs,
            out,
        } => {
            let mut cfg = base_config(&common)?;
            lm.apply(&mut cfg);
            set(&mut cfg.dataset, dataset);
            set(&mut cfg.id_logprobs, id_logprobs);
            set(&mut cfg.bg_logprobs, bg_logprobs);
            set(&mut cfg.out, out);
            ("lm-score", cfg)
        }
        Command::NoiseCorpus {
            common,
            dataset,
            p_noise,
            out,
        } => {
            let mut cfg = base_config(&common)?;
            set(&mut cfg.dataset, dataset);
            if let Some(p) = p_noise {
                cfg.p_noise = p;
            }
            set(&mut cfg.out, out);
            ("noise-corpus", cfg)
        }
        Command::CorrLength {
            common,
            scores,
            dataset,
            out,
        } => {
            let mut cfg = base_config(&common)?;
            set(&mut cfg.scores, scores);
            set(&mut cfg.dataset, dataset);
            set(&mut cfg.out, out);
            ("corr-length", cfg)
        }
        Command::TrainRep {
            common,
            inputs,
            kg,
            train,
            out,
        } => {
            let mut cfg = base_config(&common)?;
            inputs.apply(&mut cfg);
            kg.apply(&mut cfg);
            train.apply(&mut cfg);
            set(&mut cfg.out, out);
            ("train-rep", cfg)
        }
        Command::FitDensity {
            common,
            inputs,
            gmm,
            model_in,
            model_out,
        } => {
            let mut cfg = base_config(&common)?;
            inputs.apply(&mut cfg);
            gmm.apply(&mut cfg);
            set(&mut cfg.model, model_in);
            set(&mut cfg.out, model_out);
            ("fit-density", cfg)
        }
        Command::Score {
            common,
            model,
            embeddings,
            logprobs,
            dataset,
            split,
            out,
        } => {
            let mut cfg = base_config(&common)?;
            set(&mut cfg.model, model);
            set(&mut cfg.embeddings, embeddings);
            set(&mut cfg.id_logprobs, logprobs);
            set(&mut cfg.dataset, dataset);
            if let Some(s) = split {
                cfg.eval_split = s;
            }
            set(&mut cfg.out, out);
            ("score", cfg)
        }
        Command::Eval {
            common,
            scores,
            dataset,
            out,
        } => {
            let mut cfg = base_config(&common)?;
            set(&mut cfg.scores, scores);
            set(&mut cfg.dataset, dataset);
            set(&mut cfg.out, out);
            ("eval", cfg)
        }
        Command::Sweep {
            common,
            inputs,
            k,
            gamma,
            train,
            gmm,
            out,
        } => {
            let mut cfg = base_config(&common)?;
            inputs.apply(&mut cfg);
            train.apply(&mut cfg);
            gmm.apply(&mut cfg);
            if let Some(k) = k {
                cfg.sweep_k = k;
            }
            if let Some(g) = gamma {
                cfg.sweep_gamma = g;
            }
            set(&mut cfg.out, out);
            ("sweep", cfg)
        }
        Command::Project {
            common,
            inputs,
            model,
            out,
        } => {
            let mut cfg = base_config(&common)?;
            inputs.apply(&mut cfg);
            set(&mut cfg.model, model);
            set(&mut cfg.out, out);
            ("project", cfg)
        }
        Command::Serve {
            common,
            model,
            bind,
            provider_url,
            timeout_ms,
            retries,
        } => {
            let mut cfg = base_config(&common)?;
            set(&mut cfg.model, model);
            if let Some(b) = bind {
                cfg.bind = b;
            }
            set(&mut cfg.provider_url, provider_url);
            if let Some(t) = timeout_ms {
                cfg.timeout_ms = t;
            }
            if let Some(r) = retries {
                cfg.retries = r;
            }
            ("serve", cfg)
        }
        Command::Pipeline {
            common,
            inputs,
            split,
            kg,
            train,
            gmm,
            no_train,
            eval_split,
        } => {
            let mut cfg = base_config(&common)?;
            inputs.apply(&mut cfg);
            split.apply(&mut cfg);
            kg.apply(&mut cfg);
            train.apply(&mut cfg);
            gmm.apply(&mut cfg);
            if no_train {
                cfg.train_rep = false;
            }
            if let Some(s) = eval_split {
                cfg.eval_split = s;
            }
            ("pipeline", cfg)
        }
    };
    let mut cfg = cfg;
    cfg.resolve_seed(std::env::var(SEED_ENV).ok())?;
    log::debug!("{name} with seed {}", cfg.seed());

    if name == "serve" {
        let state = commands::prepare_serve(&cfg, &mut art)?;
        io::write_manifest(name, &cfg, &art)?;
        return commands::serve(&cfg, state);
    }
    match name {
        "split" => commands::split(&cfg, &mut art)?,
        "lm-score" => commands::lm_score(&cfg, &mut art)?,
        "noise-corpus" => commands::noise_corpus(&cfg, &mut art)?,
        "corr-length" => commands::corr_length(&cfg, &mut art)?,
        "train-rep" => commands::train_rep(&cfg, &mut art)?,
        "fit-density" => commands::fit_density(&cfg, &mut art)?,
        "score" => commands::score(&cfg, &mut art)?,
        "eval" => commands::eval(&cfg, &mut art)?,
        "sweep" => commands::sweep_cmd(&cfg, &mut art)?,
        "project" => commands::project(&cfg, &mut art)?,
        "pipeline" => commands::pipeline(&cfg, &mut art)?,
        other => unreachable!("unhandled command {other}"),
    }
    io::write_manifest(name, &cfg, &art)?;
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
