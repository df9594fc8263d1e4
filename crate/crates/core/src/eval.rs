//! Mean reciprocal rank of the true reply within the response set.
//!
//! Ranks use the optimistic tie rule: `rank = 1 + #{k : score_k > score_truth}`.

use std::io::Write;
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::codeswitch::MRPair;
use crate::encoder::{EncoderError, EncoderParams, Side};
use crate::ranker::score_all;
use crate::responseset::ResponseSet;
use crate::textproc::{tokenize, Vocab};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("true reply not in response set")]
    TruthNotInSet,
    #[error("empty input")]
    EmptyInput,
    #[error("rank list is empty")]
    EmptyRanks,
    #[error("rank must be ≥ 1")]
    InvalidRank,
    #[error("test corpus is empty")]
    EmptyCorpus,
    #[error(transparent)]
    Encoder(#[from] EncoderError),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

pub const TIE_RULE: &str = "optimistic";

/// Rank of entry `truth` given precomputed scores.
pub fn rank_from_scores(scores: &[f64], truth: usize) -> usize {
    let t = scores[truth];
    1 + scores.iter().filter(|&&s| s > t).count()
}

/// 1-based rank of `true_reply` among all response-set entries.
pub fn rank_of_truth(
    message: &str,
    true_reply: &str,
    params: &EncoderParams,
    vocab: &Vocab,
    rset: &ResponseSet,
    alpha: f64,
) -> Result<usize, EvalError> {
    let truth = rset.find(true_reply).ok_or(EvalError::TruthNotInSet)?;
    let tokens = tokenize(message);
    if tokens.is_empty() {
        return Err(EvalError::EmptyInput);
    }
    let m = params.encode(&vocab.encode_ids(&tokens), Side::Message)?;
    Ok(rank_from_scores(&score_all(&m, rset, alpha), truth))
}

pub fn mrr(ranks: &[usize]) -> Result<f64, EvalError> {
    if ranks.is_empty() {
        return Err(EvalError::EmptyRanks);
    }
    if ranks.contains(&0) {
        return Err(EvalError::InvalidRank);
    }
    let sum: f64 = ranks.iter().map(|&r| 1.0 / r as f64).sum();
    Ok(sum / ranks.len() as f64)
}

/// Expected reciprocal rank under a uniformly random ranking: `H_n / n`.
pub fn random_baseline_mrr(set_size: usize) -> f64 {
    assert!(set_size >= 1, "set_size must be ≥ 1");
    let h: f64 = (1..=set_size).map(|r| 1.0 / r as f64).sum();
    h / set_size as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub model_name: String,
    pub mrr: f64,
    pub n_queries: usize,
    /// Queries whose true reply is absent from the set or whose message is empty.
    pub n_skipped: usize,
    pub response_set_size: usize,
    pub latency_mean_ms: f64,
    pub latency_p95_ms: f64,
    pub baseline_mrr_closed_form: f64,
    pub tie_rule: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub meta: Option<serde_json::Value>,
}

/// Nearest-rank percentile of an unsorted sample.
pub fn percentile(samples: &[f64], p: f64) -> f64 {
    if samples.is_empty() {
        return 0.0;
    }
    let mut s = samples.to_vec();
    s.sort_by(f64::total_cmp);
    let rank = ((p / 100.0) * s.len() as f64).ceil().max(1.0) as usize;
    s[rank.min(s.len()) - 1]
}

/// Ranks every held-out pair and aggregates MRR and per-query latency.
pub fn run_eval(
    model_name: &str,
    test_corpus: &[MRPair],
    params: &EncoderParams,
    vocab: &Vocab,
    rset: &ResponseSet,
    alpha: f64,
) -> Result<EvalReport, EvalError> {
    if test_corpus.is_empty() {
        return Err(EvalError::EmptyCorpus);
    }
    let mut ranks = Vec::with_capacity(test_corpus.len());
    let mut latencies = Vec::with_capacity(test_corpus.len());
    let mut skipped = 0;
    for pair in test_corpus {
        let start = Instant::now();
        match rank_of_truth(&pair.message, &pair.reply, params, vocab, rset, alpha) {
            Ok(rank) => {
                latencies.push(start.elapsed().as_secs_f64() * 1e3);
                ranks.push(rank);
            }
            Err(EvalError::TruthNotInSet | EvalError::EmptyInput) => skipped += 1,
            Err(e) => return Err(e),
        }
    }
    let mean_latency = if latencies.is_empty() {
        0.0
    } else {
        latencies.iter().sum::<f64>() / latencies.len() as f64
    };
    Ok(EvalReport {
        model_name: model_name.to_owned(),
        mrr: mrr(&ranks)?,
        n_queries: ranks.len(),
        n_skipped: skipped,
        response_set_size: rset.len(),
        latency_mean_ms: mean_latency,
        latency_p95_ms: percentile(&latencies, 95.0),
        baseline_mrr_closed_form: random_baseline_mrr(rset.len()),
        tie_rule: TIE_RULE.to_owned(),
        meta: None,
    })
}

impl EvalReport {
    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), EvalError> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, EvalError> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }

    /// Writes the `model,mrr,latency_mean_ms` table with this report's row.
    pub fn write_csv<W: Write>(&self, out: &mut W) -> std::io::Result<()> {
        writeln!(out, "model,mrr,latency_mean_ms")?;
        writeln!(out, "{},{},{}", csv_field(&self.model_name), self.mrr, self.latency_mean_ms)
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_owned()
    }
}
