//! Runs the Gaussian-blob benchmark and prints test AUROC per seed for the
//! raw baseline, the full objective and both single-objective ablations.
//!
//! Arguments are `key=value` overrides of the training config (values are
//! parsed as JSON), plus `components=N`, `seeds=N` and `only=NAME`.

#[path = "../tests/common/synthetic.rs"]
mod synthetic;

use oodkit::datamodel::Split;
use oodkit::pipeline::{run_pipeline, PipelineConfig};
use oodkit::replearn::TrainConfig;

fn main() {
    let mut components = 1;
    let mut seeds = 5u64;
    let mut only: Option<String> = None;
    let mut base = serde_json::to_value(TrainConfig { k: 4, gamma: 1.0, ..Default::default() }).unwrap();
    for arg in std::env::args().skip(1) {
        let (k, v) = arg.split_once('=').expect("arguments are key=value");
        match k {
            "components" => components = v.parse().unwrap(),
            "seeds" => seeds = v.parse().unwrap(),
            "only" => only = Some(v.to_string()),
            _ => base[k] = serde_json::from_str(v).unwrap_or_else(|_| v.into()),
        }
    }
    let base: TrainConfig = serde_json::from_value(base).unwrap();
    let variants = [
        ("raw", None),
        ("full", Some(base.clone())),
        ("no-cl", Some(TrainConfig { cl_loss: false, ..base.clone() })),
        ("no-cluster", Some(TrainConfig { cluster_loss: false, ..base.clone() })),
    ];
    for (name, train) in variants {
        if only.as_deref().is_some_and(|o| o != name) {
            continue;
        }
        let start = std::time::Instant::now();
        let mut aurocs = Vec::new();
        for seed in 0..seeds {
            let (ds, emb) = synthetic::generate(seed);
            let mut cfg = PipelineConfig {
                train: train.clone().map(|t| TrainConfig { seed, ..t }),
                ..Default::default()
            };
            cfg.gmm.components = components;
            match run_pipeline(&ds, &emb, &cfg, Split::Test) {
                Ok(out) => aurocs.push(out.report.metrics.auroc),
                Err(e) => eprintln!("{name} seed {seed}: {e}"),
            }
        }
        let mut sorted = aurocs.clone();
        sorted.sort_by(f64::total_cmp);
        let median = sorted.get(sorted.len() / 2).copied().unwrap_or(f64::NAN);
        let per_seed: Vec<String> = aurocs.iter().map(|a| format!("{a:.3}")).collect();
        println!("{name:11} median {median:.4}  [{}] ({:.1?})", per_seed.join(" "), start.elapsed());
    }
}
