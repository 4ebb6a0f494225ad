use std::collections::BTreeSet;
use std::path::Path;

use oodkit::datamodel::{
    load_dataset, load_embeddings, load_logprobs, load_model, save_dataset, save_model, Dataset, EmbeddingSet,
    ModelBundle,
};
use oodkit::eval::{aggregate_splits, grid, pca2d_project, projection_csv, sweep, ConfigSnapshot, EvalReport};
use oodkit::likelihood::{
    builtin_scores, external_scores, length_correlation, make_noisy_corpus, tokenize, Background, LikelihoodMethod,
    OodScore,
};
use oodkit::pipeline::{
    fit_density_stage, fit_detector, run_pipeline, scored_set, training_vectors, PipelineConfig, ServingModel,
};
use oodkit::replearn::{embed_corpus, train};
use oodkit::splits::{apply_split, make_split_family};
use oodkit_service::{AppState, ProviderConfig};
use serde_json::json;

use crate::config::RunConfig;
use crate::io::{read_scores, write_json, write_jsonl, write_text, Artifacts, ScoreLine};
use crate::CliError;

fn dataset(cfg: &RunConfig, flag: &str, art: &mut Artifacts) -> Result<Dataset, CliError> {
    let path = cfg.require(&cfg.dataset, flag)?;
    art.input(path);
    Ok(load_dataset(path)?)
}

fn embeddings(cfg: &RunConfig, art: &mut Artifacts) -> Result<EmbeddingSet<f64>, CliError> {
    let path = cfg.require(&cfg.embeddings, "embeddings")?;
    art.input(path);
    Ok(load_embeddings(path)?)
}

fn bundle(cfg: &RunConfig, flag: &str, art: &mut Artifacts) -> Result<ModelBundle, CliError> {
    let path = cfg.require(&cfg.model, flag)?;
    art.input(path);
    Ok(load_model(path)?)
}

/// Numeric settings only; paths and serving options are left out so that
/// reports do not depend on where files live.
fn knob_snapshot(cfg: &RunConfig) -> ConfigSnapshot {
    const IO_KEYS: [&str; 14] = [
        "out_dir",
        "threads",
        "dataset",
        "embeddings",
        "id_logprobs",
        "bg_logprobs",
        "model",
        "scores",
        "out",
        "bind",
        "provider_url",
        "timeout_ms",
        "retries",
        "sweep_k",
    ];
    match serde_json::to_value(cfg).expect("config serializes") {
        serde_json::Value::Object(map) => map
            .into_iter()
            .filter(|(k, v)| !IO_KEYS.contains(&k.as_str()) && !v.is_null())
            .collect(),
        _ => unreachable!("config is a map"),
    }
}

fn pipeline_config(cfg: &RunConfig) -> PipelineConfig {
    PipelineConfig {
        train: cfg.train_rep.then(|| cfg.train_config()),
        gmm: cfg.gmm_params(),
        fpr_budget: cfg.fpr_budget,
    }
}

pub fn split(cfg: &RunConfig, art: &mut Artifacts) -> Result<(), CliError> {
    let ds = dataset(cfg, "in", art)?;
    let protocol = cfg
        .protocol()
        .ok_or_else(|| CliError::Usage("missing --protocol (coverage or fixed)".into()))?;
    let family = make_split_family(&ds, protocol, cfg.n_splits, cfg.seed())?;
    if let Some(w) = &family.warning {
        log::warn!("{w}");
    }
    for (i, spec) in family.splits.iter().enumerate() {
        let dir = cfg.out_dir.join(format!("split_{i}"));
        let data = art.output(dir.join("dataset.jsonl"));
        save_dataset(&apply_split(&ds, spec), &data)?;
        let spec_path = art.output(dir.join("spec.json"));
        write_json(&spec_path, spec)?;
    }
    let index = art.output(cfg.out_dir.join("splits.json"));
    write_json(&index, &json!({ "splits": family.splits, "warning": family.warning }))
}

fn background(cfg: &RunConfig, method: LikelihoodMethod, art: &mut Artifacts) -> Result<Option<Background>, CliError> {
    Ok(match method {
        LikelihoodMethod::Ln => None,
        LikelihoodMethod::LrWs => Some(Background::Noisy(cfg.noise_config())),
        LikelihoodMethod::Lr | LikelihoodMethod::Nlr => Some(match cfg.bg.as_str() {
            "uniform" => Background::Uniform,
            "noisy" => Background::Noisy(cfg.noise_config()),
            other => {
                let path = other.strip_prefix("corpus:").ok_or_else(|| {
                    CliError::Usage(format!("--bg `{other}`: expected uniform, noisy or corpus:PATH"))
                })?;
                let path = Path::new(path);
                art.input(path);
                let text = std::fs::read_to_string(path).map_err(|source| CliError::Io {
                    path: path.to_path_buf(),
                    source,
                })?;
                Background::Corpus(text.lines().map(tokenize).filter(|s| !s.is_empty()).collect())
            }
        }),
    })
}

pub fn lm_score(cfg: &RunConfig, art: &mut Artifacts) -> Result<(), CliError> {
    let method: LikelihoodMethod = cfg.method.into();
    let stats = match &cfg.id_logprobs {
        Some(id_path) => {
            if method == LikelihoodMethod::LrWs {
                return Err(CliError::Usage(
                    "lr-ws trains its own background LM; pass --dataset instead of log-prob files".into(),
                ));
            }
            art.input(id_path);
            let id = load_logprobs(id_path)?;
            let bg = match &cfg.bg_logprobs {
                Some(p) => {
                    art.input(p);
                    Some(load_logprobs(p)?)
                }
                None if method == LikelihoodMethod::Ln => None,
                None => return Err(CliError::Usage(format!("--method {:?} needs --bg-logprobs", cfg.method))),
            };
            external_scores(&id, bg.as_ref())?
        }
        None => {
            let ds = dataset(cfg, "dataset", art)?;
            let bg = background(cfg, method, art)?;
            builtin_scores(&ds, method, cfg.ngram_params(), bg.as_ref())?
        }
    };
    let scores = stats
        .iter()
        .map(|s| s.ood_score(method))
        .collect::<Result<Vec<OodScore>, _>>()?;
    let out = art.output(cfg.output("scores.jsonl"));
    write_jsonl(&out, &scores)?;
    let detail = art.output(cfg.out_dir.join("likelihood.jsonl"));
    write_jsonl(&detail, &stats)
}

pub fn noise_corpus(cfg: &RunConfig, art: &mut Artifacts) -> Result<(), CliError> {
    let ds = dataset(cfg, "dataset", art)?;
    let corpus: Vec<Vec<String>> = ds.training_view().texts.iter().map(|t| tokenize(t)).collect();
    let noise = cfg.noise_config();
    let noisy = make_noisy_corpus(&corpus, &noise)?;
    let mut text = String::new();
    for s in &noisy.sentences {
        text.push_str(&s.join(" "));
        text.push('\n');
    }
    let out = art.output(cfg.output("noisy.txt"));
    write_text(&out, &text)?;
    let stats = art.output(cfg.out_dir.join("noise.json"));
    write_json(
        &stats,
        &json!({
            "p_noise": noise.p_noise,
            "seed": noise.seed,
            "substitutions": noisy.substitutions,
            "total_tokens": noisy.total_tokens,
            "substitution_rate": noisy.substitution_rate(),
        }),
    )
}

pub fn corr_length(cfg: &RunConfig, art: &mut Artifacts) -> Result<(), CliError> {
    let path = cfg.require(&cfg.scores, "scores")?;
    art.input(path);
    let scores = read_scores(path)?;
    let ds = match &cfg.dataset {
        Some(_) => Some(dataset(cfg, "dataset", art)?),
        None => None,
    };
    let mut values = Vec::with_capacity(scores.len());
    let mut lengths = Vec::with_capacity(scores.len());
    for s in &scores {
        let len = match &ds {
            Some(d) => d
                .get(&s.id)
                .map(|r| r.token_len())
                .ok_or_else(|| oodkit::OodError::InvalidInput(format!("score for unknown record `{}`", s.id)))?,
            None => s.length.ok_or_else(|| {
                CliError::Usage(format!("record `{}` has no length; pass --dataset", s.id))
            })?,
        };
        values.push(s.score);
        lengths.push(len);
    }
    let c = length_correlation(&values, &lengths)?;
    println!("pearson r = {:.6}, p = {:.3e}, n = {}", c.r, c.p_value, values.len());
    let out = art.output(cfg.output("correlation.json"));
    write_json(&out, &json!({ "r": c.r, "p_value": c.p_value, "n": values.len() }))
}

pub fn train_rep(cfg: &RunConfig, art: &mut Artifacts) -> Result<(), CliError> {
    let ds = dataset(cfg, "dataset", art)?;
    let emb = embeddings(cfg, art)?;
    let state = train(&training_vectors(&ds, &emb)?, &cfg.train_config())?;
    if let Some(last) = state.trace.last() {
        log::info!("final epoch loss {:.6} (cluster {:.6}, contrastive {:.6})", last.joint, last.cluster, last.contrastive);
    }
    let mut b = ModelBundle::new(cfg.seed());
    b.encoder_state = Some(state);
    b.config = knob_snapshot(cfg);
    let out = art.output(cfg.output("model.bundle"));
    Ok(save_model(&b, out)?)
}

pub fn fit_density(cfg: &RunConfig, art: &mut Artifacts) -> Result<(), CliError> {
    let ds = dataset(cfg, "dataset", art)?;
    let emb = embeddings(cfg, art)?;
    let encoder = match &cfg.model {
        Some(_) => bundle(cfg, "model-in", art)?.encoder_state,
        None => None,
    };
    let detector = fit_density_stage(&ds, &emb, encoder, &cfg.gmm_params(), cfg.fpr_budget)?;
    log::info!("threshold {}", detector.threshold);
    let b = detector.to_bundle(cfg.seed(), knob_snapshot(cfg));
    let out = art.output(cfg.output("model.bundle"));
    Ok(save_model(&b, out)?)
}

pub fn score(cfg: &RunConfig, art: &mut Artifacts) -> Result<(), CliError> {
    let model = ServingModel::from_bundle(&bundle(cfg, "model", art)?)?;
    let ds = match &cfg.dataset {
        Some(_) => Some(dataset(cfg, "dataset", art)?),
        None => None,
    };
    let keep: Option<BTreeSet<&str>> = ds
        .as_ref()
        .map(|d| d.in_split(cfg.eval_split.into()).map(|r| r.id.as_str()).collect());
    let wanted = |id: &str| keep.as_ref().is_none_or(|k| k.contains(id));
    let length = |id: &str| ds.as_ref().and_then(|d| d.get(id)).map(|r| r.token_len());
    let mut lines = Vec::new();
    if let Some(path) = &cfg.embeddings {
        art.input(path);
        let emb: EmbeddingSet<f64> = load_embeddings(path)?;
        for row in emb.rows.iter().filter(|r| wanted(&r.id)) {
            let d = model.decide_embedding(&row.vector)?;
            lines.push(ScoreLine {
                id: row.id.clone(),
                score: d.ood_score,
                is_ood: d.is_ood,
                length: length(&row.id),
            });
        }
    } else if let Some(path) = &cfg.id_logprobs {
        art.input(path);
        for row in load_logprobs(path)?.rows.iter().filter(|r| wanted(&r.id)) {
            let d = model.decide_logprobs(&row.logprobs)?;
            lines.push(ScoreLine {
                id: row.id.clone(),
                score: d.ood_score,
                is_ood: d.is_ood,
                length: Some(row.logprobs.len()),
            });
        }
    } else {
        return Err(CliError::Usage("score needs --embeddings or --logprobs".into()));
    }
    let out = art.output(cfg.output("scores.jsonl"));
    write_jsonl(&out, &lines)
}

fn write_report(cfg: &RunConfig, report: &EvalReport, art: &mut Artifacts) -> Result<(), CliError> {
    let out = art.output(cfg.output("report.json"));
    write_json(&out, report)?;
    let table = art.output(out.with_extension("csv"));
    write_text(&table, &aggregate_splits(std::slice::from_ref(report))?.to_csv())
}

pub fn eval(cfg: &RunConfig, art: &mut Artifacts) -> Result<(), CliError> {
    let path = cfg.require(&cfg.scores, "scores")?;
    cfg.require(&cfg.dataset, "dataset")?;
    art.input(path);
    let scores = read_scores(path)?;
    let ds = dataset(cfg, "dataset", art)?;
    let report = EvalReport::evaluate(&scored_set(&ds, &scores)?, knob_snapshot(cfg))?;
    let m = report.metrics;
    println!("AUROC {:.4}  AUPR_OOD {:.4}  FPR@95%TPR {:.4}", m.auroc, m.aupr_ood, m.fpr_at_95tpr);
    write_report(cfg, &report, art)
}

pub fn sweep_cmd(cfg: &RunConfig, art: &mut Artifacts) -> Result<(), CliError> {
    let ds = dataset(cfg, "dataset", art)?;
    let emb = embeddings(cfg, art)?;
    let base = pipeline_config(cfg);
    let points = grid(&cfg.sweep_k, &cfg.sweep_gamma);
    let outcome = sweep(&points, cfg.threads, |p| {
        let pc = PipelineConfig {
            train: Some(oodkit::replearn::TrainConfig {
                k: p.k,
                gamma: p.gamma,
                ..cfg.train_config()
            }),
            ..base.clone()
        };
        let detector = fit_detector(&ds, &emb, &pc)?;
        let scores = detector.score_split(&ds, &emb, oodkit::datamodel::Split::Valid)?;
        scored_set(&ds, &scores)
    })?;
    let b = &outcome.best;
    println!("best K = {}, gamma = {} (AUPR_OOD {:.4}, AUROC {:.4})", b.point.k, b.point.gamma, b.metrics.aupr_ood, b.metrics.auroc);
    let out = art.output(cfg.output("sweep.json"));
    write_json(&out, &outcome)?;
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["k", "gamma", "auroc", "aupr_ood", "fpr_at_95tpr"]).expect("in-memory csv");
    for r in &outcome.table {
        let m = r.metrics;
        w.write_record([
            r.point.k.to_string(),
            r.point.gamma.to_string(),
            m.auroc.to_string(),
            m.aupr_ood.to_string(),
            m.fpr_at_95tpr.to_string(),
        ])
        .expect("in-memory csv");
    }
    let table = art.output(out.with_extension("csv"));
    write_text(&table, &String::from_utf8(w.into_inner().expect("flush")).expect("utf-8 csv"))
}

pub fn project(cfg: &RunConfig, art: &mut Artifacts) -> Result<(), CliError> {
    let mut emb = embeddings(cfg, art)?;
    let ds = match &cfg.dataset {
        Some(_) => Some(dataset(cfg, "dataset", art)?),
        None => None,
    };
    if cfg.model.is_some() {
        if let Some(state) = bundle(cfg, "model", art)?.encoder_state {
            emb = embed_corpus(&state, &emb)?;
        }
    }
    let proj = pca2d_project(&emb.vectors())?;
    let ids: Vec<&str> = emb.rows.iter().map(|r| r.id.as_str()).collect();
    let flags: Vec<Option<bool>> = ids
        .iter()
        .map(|id| ds.as_ref().and_then(|d| d.get(id)).and_then(|r| r.is_ood))
        .collect();
    let [a, b] = proj.explained_variance_ratio();
    println!("explained variance: pc1 {a:.4}, pc2 {b:.4}");
    let out = art.output(cfg.output("pca.csv"));
    write_text(&out, &projection_csv(&ids, &flags, &proj))
}

/// Validates the bundle and provider, then blocks serving requests.
pub fn prepare_serve(cfg: &RunConfig, art: &mut Artifacts) -> Result<AppState, CliError> {
    let path = cfg.require(&cfg.model, "model")?;
    art.input(path);
    let text = std::fs::read_to_string(path).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let b = ModelBundle::from_json(&text)?;
    let provider = cfg.provider_url.as_ref().map(|url| ProviderConfig {
        timeout_ms: cfg.timeout_ms,
        retries: cfg.retries,
        ..ProviderConfig::new(url.clone())
    });
    Ok(AppState::new(&b, oodkit_service::sha256_hex(text.as_bytes()), provider)?)
}

pub fn serve(cfg: &RunConfig, state: AppState) -> Result<(), CliError> {
    let runtime = tokio::runtime::Builder::new_multi_thread()
        .worker_threads(cfg.threads.max(1))
        .enable_all()
        .build()
        .map_err(|source| CliError::Io {
            path: "tokio runtime".into(),
            source,
        })?;
    eprintln!("serving on {}", cfg.bind);
    Ok(runtime.block_on(oodkit_service::serve(state, &cfg.bind))?)
}

pub fn pipeline(cfg: &RunConfig, art: &mut Artifacts) -> Result<(), CliError> {
    let ds = dataset(cfg, "dataset", art)?;
    let emb = embeddings(cfg, art)?;
    let datasets: Vec<Dataset> = match cfg.protocol() {
        Some(protocol) => {
            let family = make_split_family(&ds, protocol, cfg.n_splits, cfg.seed())?;
            if let Some(w) = &family.warning {
                log::warn!("{w}");
            }
            family.splits.iter().map(|s| apply_split(&ds, s)).collect()
        }
        None => vec![ds],
    };
    let pc = pipeline_config(cfg);
    let mut reports = Vec::with_capacity(datasets.len());
    for (i, d) in datasets.iter().enumerate() {
        let dir = cfg.out_dir.join(format!("split_{i}"));
        if cfg.protocol.is_some() {
            let data = art.output(dir.join("dataset.jsonl"));
            save_dataset(d, &data)?;
        }
        let outcome = run_pipeline(d, &emb, &pc, cfg.eval_split.into())?;
        let m = outcome.report.metrics;
        println!(
            "split {i}: AUROC {:.4}  AUPR_OOD {:.4}  FPR@95%TPR {:.4}  threshold {:.6}",
            m.auroc, m.aupr_ood, m.fpr_at_95tpr, outcome.detector.threshold
        );
        let model = art.output(dir.join("model.bundle"));
        save_model(&outcome.detector.to_bundle(cfg.seed(), pc.snapshot()), &model)?;
        let scores = art.output(dir.join("scores.jsonl"));
        write_jsonl(&scores, &outcome.scores)?;
        let report = art.output(dir.join("report.json"));
        write_json(&report, &outcome.report)?;
        reports.push(outcome.report);
    }
    let summary = aggregate_splits(&reports)?;
    let out = art.output(cfg.out_dir.join("summary.json"));
    write_json(&out, &summary)?;
    let table = art.output(cfg.out_dir.join("summary.csv"));
    write_text(&table, &summary.to_csv())
}
