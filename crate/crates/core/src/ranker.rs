//! Inference-time suggestion pipeline.
//!
//! `score = φ(m)·φ(r_k) + α·lm_k` for every response, then: keep the top `n1`,
//! collapse lexical near-duplicates, enforce at least two intents when
//! possible, and return the best `n2`. Ties always break by ascending entry
//! index.

use std::cmp::Ordering;
use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::encoder::{Embedding, EncoderError, EncoderParams, Side};
use crate::responseset::ResponseSet;
use crate::textproc::{tokenize, Vocab};

#[derive(Debug, Error)]
pub enum RankError {
    #[error("empty input")]
    EmptyInput,
    #[error("invalid rank config: {0}")]
    Config(String),
    #[error(transparent)]
    Encoder(#[from] EncoderError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankConfig {
    pub alpha: f64,
    pub n1: usize,
    pub n2: usize,
    pub jaccard_threshold: f64,
}

impl Default for RankConfig {
    fn default() -> Self {
        Self {
            alpha: 0.3,
            n1: 30,
            n2: 3,
            jaccard_threshold: 0.5,
        }
    }
}

impl RankConfig {
    pub fn validate(&self) -> Result<(), RankError> {
        if self.n2 == 0 || self.n1 < self.n2 {
            return Err(RankError::Config(format!("need n1 ≥ n2 ≥ 1 (n1={}, n2={})", self.n1, self.n2)));
        }
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return Err(RankError::Config("alpha must be finite and non-negative".into()));
        }
        if !(0.0..=1.0).contains(&self.jaccard_threshold) {
            return Err(RankError::Config("jaccard_threshold must lie in [0, 1]".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Suggestion {
    pub text: String,
    pub score: f64,
    pub intent_id: usize,
    pub entry_index: usize,
}

/// Descending by score, ascending by index on ties.
fn by_score_desc(scores: &[f64]) -> impl Fn(&usize, &usize) -> Ordering + '_ {
    move |&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b))
}

pub fn score_all(message: &Embedding, rset: &ResponseSet, alpha: f64) -> Vec<f64> {
    rset.entries
        .iter()
        .map(|e| message.dot(&e.vector) + alpha * e.lm_score)
        .collect()
}

/// Indices of the `n1` highest scores, best first.
pub fn top_n1(scores: &[f64], n1: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    let cmp = by_score_desc(scores);
    if n1 < idx.len() {
        idx.select_nth_unstable_by(n1, &cmp);
        idx.truncate(n1);
    }
    idx.sort_unstable_by(cmp);
    idx
}

pub fn jaccard(a: &BTreeSet<String>, b: &BTreeSet<String>) -> f64 {
    let union = a.union(b).count();
    if union == 0 {
        return 1.0;
    }
    a.intersection(b).count() as f64 / union as f64
}

/// Greedy clustering in score order; returns the cluster representatives.
pub fn lexical_dedup(candidates: &[usize], rset: &ResponseSet, threshold: f64) -> Vec<usize> {
    let mut reps: Vec<usize> = Vec::new();
    for &c in candidates {
        let tokens = rset.entries[c].token_set();
        let joins = reps
            .iter()
            .any(|&r| jaccard(rset.entries[r].token_set(), tokens) >= threshold);
        if !joins {
            reps.push(c);
        }
    }
    reps
}

/// Picks up to `n2` representatives, forcing the second pick onto a new
/// intent when one is available. `reps` must be in score order.
pub fn diversify(reps: &[usize], rset: &ResponseSet, n2: usize) -> Vec<usize> {
    let intent = |i: usize| rset.entries[i].intent_id;
    let mut picked: Vec<usize> = Vec::with_capacity(n2);
    let mut used = vec![false; reps.len()];
    while picked.len() < n2.min(reps.len()) {
        let single_intent = picked
            .first()
            .map(|&p| picked.iter().all(|&q| intent(q) == intent(p)));
        let next = match single_intent {
            Some(true) => {
                let current = intent(picked[0]);
                (0..reps.len())
                    .find(|&k| !used[k] && intent(reps[k]) != current)
                    .or_else(|| (0..reps.len()).find(|&k| !used[k]))
            }
            _ => (0..reps.len()).find(|&k| !used[k]),
        };
        let Some(k) = next else { break };
        used[k] = true;
        picked.push(reps[k]);
    }
    picked
}

/// Ranks an already-encoded message.
pub fn suggest_for_embedding(message: &Embedding, rset: &ResponseSet, cfg: &RankConfig) -> Vec<Suggestion> {
    let scores = score_all(message, rset, cfg.alpha);
    let candidates = top_n1(&scores, cfg.n1);
    let reps = lexical_dedup(&candidates, rset, cfg.jaccard_threshold);
    let mut chosen = diversify(&reps, rset, cfg.n2);
    chosen.sort_by(by_score_desc(&scores));
    chosen
        .into_iter()
        .map(|i| Suggestion {
            text: rset.entries[i].text.clone(),
            score: scores[i],
            intent_id: rset.entries[i].intent_id,
            entry_index: i,
        })
        .collect()
}

/// Full pipeline from message text to ranked suggestions.
pub fn suggest(
    message: &str,
    params: &EncoderParams,
    vocab: &Vocab,
    rset: &ResponseSet,
    cfg: &RankConfig,
) -> Result<Vec<Suggestion>, RankError> {
    let tokens = tokenize(message);
    if tokens.is_empty() {
        return Err(RankError::EmptyInput);
    }
    let embedding = params.encode(&vocab.encode_ids(&tokens), Side::Message)?;
    Ok(suggest_for_embedding(&embedding, rset, cfg))
}
