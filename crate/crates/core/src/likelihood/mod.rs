//! Likelihood-based OOD scores (LN, LR, NLR, LR with a noised background),
//! a built-in n-gram LM and the score/length correlation analysis.

mod correlation;
mod ngram;
mod noise;
mod scores;

pub use correlation::{length_correlation, Correlation};
pub use ngram::{tokenize, uniform_logprobs, NGramLM, NGramParams, UNK};
pub use noise::{make_noisy_corpus, substitution_distribution, NoiseConfig, NoisyCorpus};
pub use scores::{
    likelihood_score, score_ln, score_lr, score_nlr, LikelihoodMethod, LikelihoodScore, OodScore,
};

use crate::datamodel::{Dataset, Split, TokenLogProbSet};
use crate::error::{OodError, Result};

/// Where the denominator of LR/NLR comes from when the built-in LM is used.
#[derive(Debug, Clone)]
pub enum Background {
    /// Uniform over the in-domain vocabulary plus the unknown symbol.
    Uniform,
    /// An n-gram LM trained on a separate corpus.
    Corpus(Vec<Vec<String>>),
    /// An n-gram LM trained on a word-substituted copy of the training split.
    Noisy(NoiseConfig),
}

fn train_corpus(dataset: &Dataset) -> Vec<Vec<String>> {
    dataset.training_view().texts.iter().map(|t| tokenize(t)).collect()
}

fn eval_records(dataset: &Dataset) -> impl Iterator<Item = &crate::datamodel::Record> {
    dataset.records.iter().filter(|r| r.split != Split::Train)
}

/// Scores every validation/test record with the built-in n-gram LM trained
/// on the training split. Records with no tokens are skipped with a warning.
pub fn builtin_scores(
    dataset: &Dataset,
    method: LikelihoodMethod,
    params: NGramParams,
    background: Option<&Background>,
) -> Result<Vec<LikelihoodScore>> {
    let corpus = train_corpus(dataset);
    if corpus.iter().all(|s| s.is_empty()) {
        return Err(OodError::invalid("training split has no tokens"));
    }
    let id_lm = NGramLM::train(&corpus, params)?;
    let needs_bg = method != LikelihoodMethod::Ln;
    let bg_lm = match (needs_bg, background) {
        (false, _) => None,
        (true, None) => return Err(OodError::invalid(format!("{method:?} needs a background"))),
        (true, Some(Background::Uniform)) => None,
        (true, Some(Background::Corpus(c))) => Some(NGramLM::train(c, params)?),
        (true, Some(Background::Noisy(cfg))) => {
            let noisy = make_noisy_corpus(&corpus, cfg)?;
            Some(NGramLM::train(&noisy.sentences, params)?)
        }
    };
    let mut out = Vec::new();
    for r in eval_records(dataset) {
        let toks = tokenize(&r.text);
        if toks.is_empty() {
            log::warn!("record `{}` has no tokens; skipped", r.id);
            continue;
        }
        let lp = id_lm.logprobs(&toks);
        let bg = needs_bg.then(|| match &bg_lm {
            Some(lm) => lm.logprobs(&toks),
            None => uniform_logprobs(toks.len(), id_lm.support_size()),
        });
        out.push(likelihood_score(&r.id, &lp, bg.as_deref())?);
    }
    Ok(out)
}

/// LR with a background LM trained on the noised training corpus; one
/// OOD score per validation/test record.
pub fn score_lr_ws(dataset: &Dataset, cfg: &NoiseConfig, params: NGramParams) -> Result<Vec<OodScore>> {
    builtin_scores(dataset, LikelihoodMethod::LrWs, params, Some(&Background::Noisy(*cfg)))?
        .iter()
        .map(|s| s.ood_score(LikelihoodMethod::LrWs))
        .collect()
}

/// Scores from externally produced token streams. Background streams are
/// matched by id and must have the same length.
pub fn external_scores(id_streams: &TokenLogProbSet, bg_streams: Option<&TokenLogProbSet>) -> Result<Vec<LikelihoodScore>> {
    id_streams
        .rows
        .iter()
        .map(|row| {
            let bg = match bg_streams {
                Some(set) => Some(
                    set.get(&row.id)
                        .ok_or_else(|| OodError::invalid(format!("no background stream for `{}`", row.id)))?
                        .logprobs
                        .as_slice(),
                ),
                None => None,
            };
            likelihood_score(&row.id, &row.logprobs, bg)
        })
        .collect()
}
