//! Gaussian-blob benchmark: four ID clusters and one displaced OOD cluster
//! in 16 dimensions with unit-variance isotropic noise.
//!
//! ID centers sit at pairwise distance 6 with their mean at the origin. The
//! OOD center lies at distance 3 from the first ID center, pushed radially
//! away from the origin.

use oodkit::datamodel::{Dataset, EmbeddingRow, EmbeddingSet, Record, Split};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub const DIM: usize = 16;
pub const PER_CLUSTER: usize = 200;
pub const N_ID_CLUSTERS: usize = 4;

pub fn centers() -> (Vec<Vec<f64>>, Vec<f64>) {
    let scale = 6.0 / 2f64.sqrt();
    let shift = scale / N_ID_CLUSTERS as f64;
    let id: Vec<Vec<f64>> = (0..N_ID_CLUSTERS)
        .map(|k| {
            let mut c = vec![0.0; DIM];
            for (j, v) in c.iter_mut().enumerate().take(N_ID_CLUSTERS) {
                *v = if j == k { scale } else { 0.0 } - shift;
            }
            c
        })
        .collect();
    let norm = id[0].iter().map(|v| v * v).sum::<f64>().sqrt();
    let ood = id[0].iter().map(|c| c + 3.0 * c / norm).collect();
    (id, ood)
}

/// ID clusters split 120/40/40 into train/valid/test; the OOD cluster
/// splits 100/100 into valid/test.
pub fn generate(seed: u64) -> (Dataset, EmbeddingSet<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (id_centers, ood_center) = centers();
    let mut records = Vec::new();
    let mut rows = Vec::new();
    let mut push = |label: String, center: &[f64], i: usize, ood: bool, rng: &mut ChaCha8Rng| {
        let split = match (ood, i) {
            (true, i) if i < PER_CLUSTER / 2 => Split::Valid,
            (true, _) => Split::Test,
            (false, 0..120) => Split::Train,
            (false, 120..160) => Split::Valid,
            (false, _) => Split::Test,
        };
        let id = format!("{label}-{i}");
        let vector = center
            .iter()
            .map(|&c| c + <StandardNormal as Distribution<f64>>::sample(&StandardNormal, rng))
            .collect();
        records.push(Record {
            id: id.clone(),
            text: String::new(),
            label: Some(label),
            split,
            is_ood: Some(ood),
        });
        rows.push(EmbeddingRow { id, vector });
    };
    for (k, c) in id_centers.iter().enumerate() {
        for i in 0..PER_CLUSTER {
            push(format!("id{k}"), c, i, false, &mut rng);
        }
    }
    for i in 0..PER_CLUSTER {
        push("ood".into(), &ood_center, i, true, &mut rng);
    }
    (
        Dataset::new(records).expect("unique ids"),
        EmbeddingSet::new(DIM, rows).expect("valid embeddings"),
    )
}
