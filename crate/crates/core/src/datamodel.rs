//! In-memory records, on-disk formats and model persistence.
//!
//! Three file formats are handled here:
//!
//! * datasets: one JSON object per line with `id`, `text`, `label`, `split`
//!   and an optional `is_ood`;
//! * embeddings: a little-endian binary file starting with [`EMBEDDING_MAGIC`];
//! * token log-probabilities: one JSON object per line with `id`, `logprobs`
//!   and optional `tokens`.
//!
//! Model bundles are a single pretty-printed JSON document carrying a
//! `format_version`.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::density::GmmModel;
use crate::error::{OodError, Result};
use crate::replearn::EncoderState;
use crate::scalar::Scalar;

pub const EMBEDDING_MAGIC: &[u8; 8] = b"OODEMB01";
pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Valid,
    Test,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Record {
    pub id: String,
    pub text: String,
    pub label: Option<String>,
    pub split: Split,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub is_ood: Option<bool>,
}

impl Record {
    /// Whitespace token count, the length used by the built-in LM.
    pub fn token_len(&self) -> usize {
        self.text.split_whitespace().count()
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Dataset {
    pub records: Vec<Record>,
}

/// Label-free projection of the training split. Representation learning
/// consumes only this view.
#[derive(Debug, Clone)]
pub struct TrainingView<'a> {
    pub ids: Vec<&'a str>,
    pub texts: Vec<&'a str>,
}

impl Dataset {
    pub fn new(records: Vec<Record>) -> Result<Self> {
        let mut seen = HashSet::with_capacity(records.len());
        for r in &records {
            if !seen.insert(r.id.as_str()) {
                return Err(OodError::DuplicateId(r.id.clone()));
            }
        }
        Ok(Self { records })
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn in_split(&self, split: Split) -> impl Iterator<Item = &Record> {
        self.records.iter().filter(move |r| r.split == split)
    }

    pub fn training_view(&self) -> TrainingView<'_> {
        let (ids, texts) = self
            .in_split(Split::Train)
            .filter(|r| r.is_ood != Some(true))
            .map(|r| (r.id.as_str(), r.text.as_str()))
            .unzip();
        TrainingView { ids, texts }
    }

    pub fn get(&self, id: &str) -> Option<&Record> {
        self.records.iter().find(|r| r.id == id)
    }

    pub fn id_index(&self) -> BTreeMap<&str, &Record> {
        self.records.iter().map(|r| (r.id.as_str(), r)).collect()
    }
}

fn open(path: &Path) -> Result<File> {
    File::open(path).map_err(|e| OodError::io(path, e))
}

fn create(path: &Path) -> Result<File> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent).map_err(|e| OodError::io(parent, e))?;
        }
    }
    File::create(path).map_err(|e| OodError::io(path, e))
}

pub fn load_dataset(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    let ds = read_dataset(BufReader::new(open(path)?))?;
    if ds.is_empty() {
        log::warn!("dataset {} is empty", path.display());
    }
    Ok(ds)
}

pub fn read_dataset(reader: impl BufRead) -> Result<Dataset> {
    let mut records = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| OodError::Parse {
            line: i + 1,
            message: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: Record = serde_json::from_str(&line).map_err(|e| OodError::Parse {
            line: i + 1,
            message: e.to_string(),
        })?;
        records.push(rec);
    }
    Dataset::new(records)
}

pub fn save_dataset(dataset: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut w = BufWriter::new(create(path)?);
    for r in &dataset.records {
        let line = serde_json::to_string(r).expect("record serializes");
        writeln!(w, "{line}").map_err(|e| OodError::io(path, e))?;
    }
    w.flush().map_err(|e| OodError::io(path, e))
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingRow<F> {
    pub id: String,
    pub vector: Vec<F>,
}

/// Per-record vectors of a common dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingSet<F = f64> {
    pub dim: usize,
    pub rows: Vec<EmbeddingRow<F>>,
}

impl<F: Scalar> EmbeddingSet<F> {
    pub fn new(dim: usize, rows: Vec<EmbeddingRow<F>>) -> Result<Self> {
        if dim == 0 {
            return Err(OodError::invalid("embedding dimension must be positive"));
        }
        let mut seen = HashSet::with_capacity(rows.len());
        for r in &rows {
            if r.vector.len() != dim {
                return Err(OodError::Dimension {
                    expected: dim,
                    got: r.vector.len(),
                });
            }
            if !crate::scalar::all_finite(&r.vector) {
                return Err(OodError::NonFinite(r.id.clone()));
            }
            if !seen.insert(r.id.as_str()) {
                return Err(OodError::DuplicateId(r.id.clone()));
            }
        }
        Ok(Self { dim, rows })
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&[F]> {
        self.rows
            .iter()
            .find(|r| r.id == id)
            .map(|r| r.vector.as_slice())
    }

    pub fn vectors(&self) -> Vec<Vec<F>> {
        self.rows.iter().map(|r| r.vector.clone()).collect()
    }

    /// Rows whose id satisfies `keep`, in file order.
    pub fn filter(&self, mut keep: impl FnMut(&str) -> bool) -> Self {
        Self {
            dim: self.dim,
            rows: self.rows.iter().filter(|r| keep(&r.id)).cloned().collect(),
        }
    }
}

pub fn load_embeddings<F: Scalar>(path: impl AsRef<Path>) -> Result<EmbeddingSet<F>> {
    let path = path.as_ref();
    read_embeddings(BufReader::new(open(path)?))
}

fn read_exact_or(reader: &mut impl Read, buf: &mut [u8], what: &str) -> Result<()> {
    reader.read_exact(buf).map_err(|e| {
        if e.kind() == std::io::ErrorKind::UnexpectedEof {
            OodError::BadEmbeddingFile(format!("truncated payload while reading {what}"))
        } else {
            OodError::BadEmbeddingFile(e.to_string())
        }
    })
}

pub fn read_embeddings<F: Scalar>(mut reader: impl Read) -> Result<EmbeddingSet<F>> {
    let mut magic = [0u8; 8];
    read_exact_or(&mut reader, &mut magic, "magic")?;
    if &magic != EMBEDDING_MAGIC {
        return Err(OodError::BadEmbeddingFile("bad magic bytes".into()));
    }
    let mut word = [0u8; 4];
    read_exact_or(&mut reader, &mut word, "row count")?;
    let n = u32::from_le_bytes(word) as usize;
    read_exact_or(&mut reader, &mut word, "dimension")?;
    let d = u32::from_le_bytes(word) as usize;
    if d == 0 {
        return Err(OodError::BadEmbeddingFile("zero dimension".into()));
    }
    let mut rows = Vec::with_capacity(n.min(1 << 20));
    let mut seen = HashSet::new();
    for row in 0..n {
        let mut len = [0u8; 2];
        read_exact_or(&mut reader, &mut len, &format!("id length of row {row}"))?;
        let mut id = vec![0u8; u16::from_le_bytes(len) as usize];
        read_exact_or(&mut reader, &mut id, &format!("id of row {row}"))?;
        let id = String::from_utf8(id)
            .map_err(|_| OodError::BadEmbeddingFile(format!("row {row}: id is not UTF-8")))?;
        let mut vector = Vec::with_capacity(d);
        for _ in 0..d {
            read_exact_or(&mut reader, &mut word, &format!("values of row `{id}`"))?;
            let v = f32::from_le_bytes(word);
            if !v.is_finite() {
                return Err(OodError::NonFinite(id));
            }
            vector.push(F::from_f32(v).expect("f32 converts"));
        }
        if !seen.insert(id.clone()) {
            return Err(OodError::DuplicateId(id));
        }
        rows.push(EmbeddingRow { id, vector });
    }
    Ok(EmbeddingSet { dim: d, rows })
}

pub fn write_embeddings<F: Scalar>(set: &EmbeddingSet<F>, mut w: impl Write) -> std::io::Result<()> {
    w.write_all(EMBEDDING_MAGIC)?;
    w.write_all(&(set.rows.len() as u32).to_le_bytes())?;
    w.write_all(&(set.dim as u32).to_le_bytes())?;
    for r in &set.rows {
        let id = r.id.as_bytes();
        let len = u16::try_from(id.len()).map_err(|_| {
            std::io::Error::new(std::io::ErrorKind::InvalidInput, "id longer than 65535 bytes")
        })?;
        w.write_all(&len.to_le_bytes())?;
        w.write_all(id)?;
        for v in &r.vector {
            let x = v.to_f32().unwrap_or(f32::NAN);
            w.write_all(&x.to_le_bytes())?;
        }
    }
    Ok(())
}

pub fn save_embeddings<F: Scalar>(set: &EmbeddingSet<F>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut w = BufWriter::new(create(path)?);
    write_embeddings(set, &mut w).map_err(|e| OodError::io(path, e))?;
    w.flush().map_err(|e| OodError::io(path, e))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LogProbRow {
    pub id: String,
    pub logprobs: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tokens: Option<Vec<String>>,
}

/// Natural-log token probabilities per record.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TokenLogProbSet {
    /// Free-form metadata from an optional leading `{"header": ...}` line,
    /// e.g. whether the first token is scored.
    pub header: Option<serde_json::Value>,
    pub rows: Vec<LogProbRow>,
}

impl TokenLogProbSet {
    pub fn get(&self, id: &str) -> Option<&LogProbRow> {
        self.rows.iter().find(|r| r.id == id)
    }
}

fn check_logprob_row(row: &LogProbRow, line: usize) -> Result<()> {
    let fail = |message: String| OodError::Parse { line, message };
    if row.logprobs.is_empty() {
        return Err(fail(format!("`{}`: empty log-probability sequence", row.id)));
    }
    if let Some(bad) = row.logprobs.iter().find(|v| !v.is_finite() || **v > 0.0) {
        return Err(fail(format!("`{}`: invalid log-probability {bad}", row.id)));
    }
    if let Some(tokens) = &row.tokens {
        if tokens.len() != row.logprobs.len() {
            return Err(fail(format!(
                "`{}`: {} tokens but {} log-probabilities",
                row.id,
                tokens.len(),
                row.logprobs.len()
            )));
        }
    }
    Ok(())
}

pub fn read_logprobs(reader: impl BufRead) -> Result<TokenLogProbSet> {
    let mut set = TokenLogProbSet::default();
    let mut seen = HashSet::new();
    for (i, line) in reader.lines().enumerate() {
        let lineno = i + 1;
        let line = line.map_err(|e| OodError::Parse {
            line: lineno,
            message: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        if set.rows.is_empty() && set.header.is_none() {
            if let Ok(serde_json::Value::Object(map)) = serde_json::from_str(&line) {
                if map.len() == 1 && map.contains_key("header") {
                    set.header = map.get("header").cloned();
                    continue;
                }
            }
        }
        let row: LogProbRow = serde_json::from_str(&line).map_err(|e| OodError::Parse {
            line: lineno,
            message: e.to_string(),
        })?;
        check_logprob_row(&row, lineno)?;
        if !seen.insert(row.id.clone()) {
            return Err(OodError::DuplicateId(row.id));
        }
        set.rows.push(row);
    }
    Ok(set)
}

pub fn load_logprobs(path: impl AsRef<Path>) -> Result<TokenLogProbSet> {
    let path = path.as_ref();
    read_logprobs(BufReader::new(open(path)?))
}

pub fn save_logprobs(set: &TokenLogProbSet, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut w = BufWriter::new(create(path)?);
    let io = |e| OodError::io(path, e);
    if let Some(h) = &set.header {
        writeln!(w, "{}", serde_json::json!({ "header": h })).map_err(io)?;
    }
    for r in &set.rows {
        writeln!(w, "{}", serde_json::to_string(r).expect("row serializes")).map_err(io)?;
    }
    w.flush().map_err(io)
}

/// Anything keyed by record id.
pub trait IdSource {
    fn id_list(&self) -> Vec<&str>;
}

impl IdSource for Dataset {
    fn id_list(&self) -> Vec<&str> {
        self.records.iter().map(|r| r.id.as_str()).collect()
    }
}

impl<F> IdSource for EmbeddingSet<F> {
    fn id_list(&self) -> Vec<&str> {
        self.rows.iter().map(|r| r.id.as_str()).collect()
    }
}

impl IdSource for TokenLogProbSet {
    fn id_list(&self) -> Vec<&str> {
        self.rows.iter().map(|r| r.id.as_str()).collect()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct AlignmentReport {
    /// In the dataset but absent from the auxiliary file.
    pub missing: BTreeSet<String>,
    /// In the auxiliary file but absent from the dataset.
    pub extra: BTreeSet<String>,
}

impl AlignmentReport {
    pub fn is_aligned(&self) -> bool {
        self.missing.is_empty() && self.extra.is_empty()
    }
}

pub fn validate_alignment(dataset: &impl IdSource, aux: &impl IdSource) -> AlignmentReport {
    let left: BTreeSet<&str> = dataset.id_list().into_iter().collect();
    let right: BTreeSet<&str> = aux.id_list().into_iter().collect();
    AlignmentReport {
        missing: left.difference(&right).map(|s| s.to_string()).collect(),
        extra: right.difference(&left).map(|s| s.to_string()).collect(),
    }
}

/// How a bundle turns a request into an OOD score.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScoringMethod {
    /// Negative GMM log-density of (optionally adapted) embeddings.
    #[default]
    Density,
    /// Negative length-normalized log-likelihood of a token stream.
    Ln,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Provenance {
    pub seed: u64,
    pub created_unix: u64,
    pub tool_version: String,
}

impl Provenance {
    pub fn now(seed: u64) -> Self {
        let created_unix = std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        Self {
            seed,
            created_unix,
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelBundle {
    pub format_version: u32,
    #[serde(default)]
    pub method: ScoringMethod,
    pub encoder_state: Option<EncoderState<f64>>,
    pub gmm: Option<GmmModel<f64>>,
    pub threshold: Option<f64>,
    #[serde(default)]
    pub config: BTreeMap<String, serde_json::Value>,
    pub provenance: Provenance,
}

impl ModelBundle {
    pub fn new(seed: u64) -> Self {
        Self {
            format_version: MODEL_FORMAT_VERSION,
            method: ScoringMethod::Density,
            encoder_state: None,
            gmm: None,
            threshold: None,
            config: BTreeMap::new(),
            provenance: Provenance::now(seed),
        }
    }

    /// Checks that everything needed to score and decide is present.
    pub fn require_serving(&self) -> Result<f64> {
        if self.method == ScoringMethod::Density && self.gmm.is_none() {
            return Err(OodError::ServingPrecondition("gmm"));
        }
        self.threshold
            .ok_or(OodError::ServingPrecondition("threshold"))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("bundle serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let value: serde_json::Value =
            serde_json::from_str(text).map_err(|e| OodError::Schema(e.to_string()))?;
        let version = value
            .get("format_version")
            .and_then(|v| v.as_u64())
            .ok_or_else(|| OodError::Schema("missing integer `format_version`".into()))?;
        if version != u64::from(MODEL_FORMAT_VERSION) {
            return Err(OodError::FormatVersion(
                u32::try_from(version).unwrap_or(u32::MAX),
            ));
        }
        serde_json::from_value(value).map_err(|e| OodError::Schema(e.to_string()))
    }
}

pub fn save_model(bundle: &ModelBundle, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut f = create(path)?;
    f.write_all(bundle.to_json().as_bytes())
        .and_then(|_| f.write_all(b"\n"))
        .map_err(|e| OodError::io(path, e))
}

pub fn load_model(path: impl AsRef<Path>) -> Result<ModelBundle> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| OodError::io(path, e))?;
    ModelBundle::from_json(&text)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(id: &str, split: &str) -> String {
        format!(r#"{{"id":"{id}","text":"hello world","label":"a","split":"{split}"}}"#)
    }

    #[test]
    fn parses_three_records() {
        let text = [line("u1", "train"), line("u2", "valid"), line("u3", "test")].join("\n");
        let ds = read_dataset(text.as_bytes()).unwrap();
        assert_eq!(ds.len(), 3);
        assert_eq!(ds.records[1].split, Split::Valid);
        assert_eq!(ds.records[0].is_ood, None);
    }

    #[test]
    fn duplicate_id_is_named() {
        let text = [line("u1", "train"), line("u1", "test")].join("\n");
        let err = read_dataset(text.as_bytes()).unwrap_err();
        assert!(err.to_string().contains("u1"), "{err}");
    }

    #[test]
    fn malformed_line_reports_line_number() {
        let text = [line("u1", "train"), "{not json".to_string()].join("\n");
        match read_dataset(text.as_bytes()).unwrap_err() {
            OodError::Parse { line, .. } => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn unknown_split_rejected() {
        let err = read_dataset(line("u1", "holdout").as_bytes()).unwrap_err();
        assert!(matches!(err, OodError::Parse { line: 1, .. }));
    }

    #[test]
    fn empty_file_gives_empty_dataset() {
        let ds = read_dataset(&b""[..]).unwrap();
        assert!(ds.is_empty());
    }

    #[test]
    fn training_view_has_no_labels_and_no_ood() {
        let mut ds = read_dataset([line("a", "train"), line("b", "train"), line("c", "test")].join("\n").as_bytes()).unwrap();
        ds.records[1].is_ood = Some(true);
        let view = ds.training_view();
        assert_eq!(view.ids, vec!["a"]);
    }

    fn sample_bytes(values: &[f32]) -> Vec<u8> {
        let mut buf = Vec::new();
        buf.extend_from_slice(EMBEDDING_MAGIC);
        buf.extend_from_slice(&2u32.to_le_bytes());
        buf.extend_from_slice(&3u32.to_le_bytes());
        for (row, id) in ["u1", "u7"].iter().enumerate() {
            buf.extend_from_slice(&(id.len() as u16).to_le_bytes());
            buf.extend_from_slice(id.as_bytes());
            for v in &values[row * 3..(row + 1) * 3] {
                buf.extend_from_slice(&v.to_le_bytes());
            }
        }
        buf
    }

    #[test]
    fn reads_binary_embeddings() {
        let bytes = sample_bytes(&[1.0, 2.0, 3.0, 4.0, 5.0, 6.5]);
        let set: EmbeddingSet<f64> = read_embeddings(&bytes[..]).unwrap();
        assert_eq!(set.dim, 3);
        assert_eq!(set.len(), 2);
        assert_eq!(set.get("u7").unwrap(), &[4.0, 5.0, 6.5]);
        let mut out = Vec::new();
        write_embeddings(&set, &mut out).unwrap();
        assert_eq!(out, bytes);
    }

    #[test]
    fn truncated_embeddings_rejected() {
        let bytes = sample_bytes(&[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let err = read_embeddings::<f64>(&bytes[..bytes.len() - 4]).unwrap_err();
        assert!(err.to_string().contains("truncated"), "{err}");
    }

    #[test]
    fn nan_embedding_names_row() {
        let bytes = sample_bytes(&[1.0, 2.0, 3.0, 4.0, f32::NAN, 6.0]);
        let err = read_embeddings::<f32>(&bytes[..]).unwrap_err();
        assert!(matches!(&err, OodError::NonFinite(id) if id == "u7"), "{err}");
    }

    #[test]
    fn bad_magic_rejected() {
        let mut bytes = sample_bytes(&[0.0; 6]);
        bytes[0] = b'X';
        assert!(read_embeddings::<f64>(&bytes[..]).is_err());
    }

    #[test]
    fn logprob_rows_validated() {
        let ok = "{\"header\":{\"first_token_scored\":true}}\n{\"id\":\"a\",\"logprobs\":[-0.5,-1.0]}\n";
        let set = read_logprobs(ok.as_bytes()).unwrap();
        assert_eq!(set.rows.len(), 1);
        assert!(set.header.is_some());
        let positive = "{\"id\":\"a\",\"logprobs\":[0.5]}";
        assert!(read_logprobs(positive.as_bytes()).is_err());
        let empty = "{\"id\":\"a\",\"logprobs\":[]}";
        assert!(read_logprobs(empty.as_bytes()).is_err());
        let mismatch = "{\"id\":\"a\",\"logprobs\":[-1.0],\"tokens\":[\"x\",\"y\"]}";
        assert!(read_logprobs(mismatch.as_bytes()).is_err());
    }

    #[test]
    fn alignment_reports_both_directions() {
        let ds = read_dataset([line("u1", "train"), line("u3", "test")].join("\n").as_bytes()).unwrap();
        let same = read_dataset([line("u3", "train"), line("u1", "test")].join("\n").as_bytes()).unwrap();
        assert!(validate_alignment(&ds, &same).is_aligned());

        let emb = EmbeddingSet::new(
            1,
            vec![
                EmbeddingRow { id: "u1".into(), vector: vec![0.0f64] },
                EmbeddingRow { id: "u9".into(), vector: vec![0.0] },
            ],
        )
        .unwrap();
        let report = validate_alignment(&ds, &emb);
        assert!(!report.is_aligned());
        assert_eq!(report.missing.iter().collect::<Vec<_>>(), vec!["u3"]);
        assert_eq!(report.extra.iter().collect::<Vec<_>>(), vec!["u9"]);
    }

    #[test]
    fn unknown_format_version_rejected() {
        let mut bundle = ModelBundle::new(1);
        bundle.format_version = 99;
        let text = bundle.to_json();
        assert!(matches!(ModelBundle::from_json(&text), Err(OodError::FormatVersion(99))));
    }

    #[test]
    fn schema_mismatch_rejected() {
        let text = r#"{"format_version":1,"surprise":true}"#;
        assert!(matches!(ModelBundle::from_json(text), Err(OodError::Schema(_))));
    }

    #[test]
    fn bundle_without_gmm_cannot_serve() {
        let mut bundle = ModelBundle::new(3);
        bundle.threshold = Some(1.0);
        let loaded = ModelBundle::from_json(&bundle.to_json()).unwrap();
        assert!(matches!(loaded.require_serving(), Err(OodError::ServingPrecondition("gmm"))));
    }
}
