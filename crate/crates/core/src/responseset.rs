//! The precomputed response set: every reply the engine may suggest, with
//! its reply-side embedding, a popularity score and an intent id.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::codeswitch::{write_record, MRPair, Sentiment};
use crate::encoder::{Embedding, EncoderError, EncoderParams, Side};
use crate::fingerprint::short_hash;
use crate::linalg::dot;
use crate::textproc::{join, tokenize, Vocab};

pub const RESPONSE_SET_VERSION: u32 = 1;
const NORM_TOLERANCE: f64 = 1e-6;
const LM_TOLERANCE: f64 = 1e-9;
const KMEANS_MAX_ITER: usize = 100;

#[derive(Debug, Error)]
pub enum ResponseSetError {
    #[error("no reply survives filtering")]
    EmptyResponseSet,
    #[error("need at least {k} points for {k} clusters, got {n}")]
    TooFewPoints { n: usize, k: usize },
    #[error("reply {0:?} has no sentiment label")]
    MissingSentiment(String),
    #[error("invalid response set config: {0}")]
    Config(String),
    #[error("integrity check failed: {0}")]
    Integrity(String),
    #[error(transparent)]
    Encoder(#[from] EncoderError),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum IntentSource {
    #[default]
    Kmeans,
    Sentiment,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResponseSetConfig {
    pub min_count: usize,
    pub max_size: usize,
    pub k_intents: usize,
    pub seed: u64,
    pub intent_source: IntentSource,
}

impl Default for ResponseSetConfig {
    fn default() -> Self {
        Self {
            min_count: 1,
            max_size: 5000,
            k_intents: 8,
            seed: 42,
            intent_source: IntentSource::Kmeans,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResponseEntry {
    /// Normalized text (tokenize then join).
    pub text: String,
    pub count: u64,
    /// `ln(count / total_count)` over the kept set.
    pub lm_score: f64,
    pub intent_id: usize,
    pub vector: Embedding,
    #[serde(skip)]
    tokens: BTreeSet<String>,
}

impl ResponseEntry {
    pub fn new(text: String, count: u64, lm_score: f64, intent_id: usize, vector: Embedding) -> Self {
        let tokens = token_set(&text);
        Self {
            text,
            count,
            lm_score,
            intent_id,
            vector,
            tokens,
        }
    }

    /// Distinct surface tokens of the text, used for lexical dedup.
    pub fn token_set(&self) -> &BTreeSet<String> {
        &self.tokens
    }
}

fn token_set(text: &str) -> BTreeSet<String> {
    tokenize(text).into_iter().map(|t| t.as_str().to_owned()).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResponseSet {
    pub version: u32,
    pub k_intents: usize,
    /// Fingerprint of the corpus the set was built from.
    pub built_from: String,
    pub entries: Vec<ResponseEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub meta: Option<serde_json::Value>,
}

/// Stable hash of a corpus, independent of the file it came from.
pub fn corpus_fingerprint(corpus: &[MRPair]) -> String {
    let mut buf = Vec::new();
    for p in corpus {
        write_record(&mut buf, p).expect("writing to a Vec cannot fail");
    }
    short_hash(&buf)
}

impl ResponseSet {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Index of the entry whose normalized text equals `normalize(text)`.
    pub fn find(&self, text: &str) -> Option<usize> {
        let key = join(&tokenize(text));
        self.entries.iter().position(|e| e.text == key)
    }

    pub fn build(
        corpus: &[MRPair],
        params: &EncoderParams,
        vocab: &Vocab,
        cfg: &ResponseSetConfig,
    ) -> Result<Self, ResponseSetError> {
        if cfg.min_count == 0 {
            return Err(ResponseSetError::Config("min_count must be ≥ 1".into()));
        }
        let k = match cfg.intent_source {
            IntentSource::Kmeans => cfg.k_intents,
            IntentSource::Sentiment => Sentiment::ALL.len(),
        };
        if k == 0 || cfg.max_size < k {
            return Err(ResponseSetError::Config(format!(
                "need max_size ≥ k_intents ≥ 1 (max_size={}, k_intents={k})",
                cfg.max_size
            )));
        }

        let mut counts: BTreeMap<String, (u64, [u64; 7])> = BTreeMap::new();
        for pair in corpus {
            let text = join(&tokenize(&pair.reply));
            if text.is_empty() {
                continue;
            }
            let slot = counts.entry(text).or_insert((0, [0; 7]));
            slot.0 += 1;
            if let Some(s) = pair.sentiment {
                slot.1[s.index()] += 1;
            }
        }

        let mut kept: Vec<(String, u64, [u64; 7])> = counts
            .into_iter()
            .filter(|(_, (c, _))| *c >= cfg.min_count as u64)
            .map(|(t, (c, s))| (t, c, s))
            .collect();
        kept.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        kept.truncate(cfg.max_size);
        if kept.is_empty() {
            return Err(ResponseSetError::EmptyResponseSet);
        }

        let total: u64 = kept.iter().map(|e| e.1).sum();
        let vectors = kept
            .iter()
            .map(|(text, _, _)| params.encode(&vocab.encode_ids(&tokenize(text)), Side::Reply))
            .collect::<Result<Vec<_>, _>>()?;

        let intents = match cfg.intent_source {
            IntentSource::Kmeans => assign_intents(&vectors, k, cfg.seed)?,
            IntentSource::Sentiment => kept
                .iter()
                .map(|(text, _, labels)| majority_label(labels).ok_or_else(|| ResponseSetError::MissingSentiment(text.clone())))
                .collect::<Result<Vec<_>, _>>()?,
        };

        let entries = kept
            .into_iter()
            .zip(vectors)
            .zip(intents)
            .map(|(((text, count, _), vector), intent)| {
                let lm = (count as f64 / total as f64).ln();
                ResponseEntry::new(text, count, lm, intent, vector)
            })
            .collect();

        Ok(Self {
            version: RESPONSE_SET_VERSION,
            k_intents: k,
            built_from: corpus_fingerprint(corpus),
            entries,
            meta: None,
        })
    }

    /// Checks the invariants that `load` enforces.
    pub fn validate(&self) -> Result<(), ResponseSetError> {
        let bad = |m: String| Err(ResponseSetError::Integrity(m));
        if self.version != RESPONSE_SET_VERSION {
            return bad(format!("version: unsupported {}", self.version));
        }
        if self.entries.is_empty() {
            return bad("entries: empty".into());
        }
        if self.k_intents == 0 {
            return bad("k_intents: must be ≥ 1".into());
        }
        let dim = self.entries[0].vector.len();
        let total: u64 = self.entries.iter().map(|e| e.count).sum();
        let mut seen = BTreeSet::new();
        for (i, e) in self.entries.iter().enumerate() {
            if join(&tokenize(&e.text)) != e.text || !seen.insert(e.text.as_str()) {
                return bad(format!("text: entry {i} is not normalized or not unique"));
            }
            if e.count == 0 {
                return bad(format!("count: entry {i} has zero count"));
            }
            let expected = (e.count as f64 / total as f64).ln();
            if !((e.lm_score - expected).abs() <= LM_TOLERANCE) {
                return bad(format!("lm_score: entry {i} has {} but counts imply {expected}", e.lm_score));
            }
            if e.intent_id >= self.k_intents {
                return bad(format!("intent_id: entry {i} outside [0, {})", self.k_intents));
            }
            let v = e.vector.as_slice();
            if v.len() != dim || !v.iter().all(|x| x.is_finite()) || !((dot(v, v).sqrt() - 1.0).abs() <= NORM_TOLERANCE) {
                return bad(format!("vector: entry {i} is not a unit vector of dimension {dim}"));
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String, ResponseSetError> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self, ResponseSetError> {
        let value: serde_json::Value = serde_json::from_str(text)?;
        for field in ["version", "k_intents", "built_from", "entries"] {
            if value.get(field).is_none() {
                return Err(ResponseSetError::Integrity(format!("{field}: missing")));
            }
        }
        let mut set: Self = serde_json::from_value(value).map_err(|e| ResponseSetError::Integrity(e.to_string()))?;
        for e in &mut set.entries {
            e.tokens = token_set(&e.text);
        }
        set.validate()?;
        Ok(set)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), ResponseSetError> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ResponseSetError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

pub fn build_response_set(
    corpus: &[MRPair],
    params: &EncoderParams,
    vocab: &Vocab,
    cfg: &ResponseSetConfig,
) -> Result<ResponseSet, ResponseSetError> {
    ResponseSet::build(corpus, params, vocab, cfg)
}

fn majority_label(counts: &[u64; 7]) -> Option<usize> {
    let (best, &n) = counts
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.cmp(b.1).then_with(|| b.0.cmp(&a.0)))?;
    (n > 0).then_some(best)
}

/// Result of a spherical k-means run.
#[derive(Debug, Clone, PartialEq)]
pub struct KMeans {
    pub assignments: Vec<usize>,
    pub centers: Vec<Vec<f64>>,
    /// Sum of squared distances after each assignment step.
    pub objective: Vec<f64>,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest(point: &[f64], centers: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (c, center) in centers.iter().enumerate() {
        let d = sq_dist(point, center);
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

/// k-means over unit vectors with seeded k-means++ initialization and
/// renormalized mean updates.
pub fn kmeans(points: &[Embedding], k: usize, seed: u64) -> Result<KMeans, ResponseSetError> {
    let n = points.len();
    if k == 0 || n < k {
        return Err(ResponseSetError::TooFewPoints { n, k });
    }
    let pts: Vec<&[f64]> = points.iter().map(Embedding::as_slice).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut chosen = vec![rng.gen_range(0..n)];
    let mut d2: Vec<f64> = pts.iter().map(|p| sq_dist(p, pts[chosen[0]])).collect();
    while chosen.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let mut target = rng.gen::<f64>() * total;
            let mut pick = n - 1;
            for (i, &w) in d2.iter().enumerate() {
                if w > 0.0 && target < w {
                    pick = i;
                    break;
                }
                target -= w;
            }
            while d2[pick] == 0.0 {
                pick -= 1;
            }
            pick
        } else {
            // all remaining points coincide with a chosen center
            (0..n).find(|i| !chosen.contains(i)).expect("n ≥ k")
        };
        chosen.push(next);
        for (i, p) in pts.iter().enumerate() {
            d2[i] = d2[i].min(sq_dist(p, pts[next]));
        }
    }
    let mut centers: Vec<Vec<f64>> = chosen.iter().map(|&i| pts[i].to_vec()).collect();

    let mut assignments: Vec<usize> = Vec::new();
    let mut objective = Vec::new();
    for _ in 0..KMEANS_MAX_ITER {
        let mut obj = 0.0;
        let next: Vec<usize> = pts
            .iter()
            .map(|p| {
                let (c, d) = nearest(p, &centers);
                obj += d;
                c
            })
            .collect();
        objective.push(obj);
        if next == assignments {
            break;
        }
        assignments = next;

        let dim = centers[0].len();
        let mut sums = vec![vec![0.0; dim]; k];
        let mut sizes = vec![0usize; k];
        for (p, &c) in pts.iter().zip(&assignments) {
            sizes[c] += 1;
            for (s, x) in sums[c].iter_mut().zip(p.iter()) {
                *s += x;
            }
        }
        let mut reseeded = BTreeSet::new();
        for c in 0..k {
            if sizes[c] == 0 {
                let far = (0..n)
                    .filter(|i| !reseeded.contains(i))
                    .max_by(|&a, &b| {
                        let da = sq_dist(pts[a], &centers[assignments[a]]);
                        let db = sq_dist(pts[b], &centers[assignments[b]]);
                        da.total_cmp(&db).then_with(|| b.cmp(&a))
                    })
                    .expect("n ≥ k");
                reseeded.insert(far);
                centers[c] = pts[far].to_vec();
                continue;
            }
            let norm = dot(&sums[c], &sums[c]).sqrt();
            if norm > 1e-12 {
                centers[c] = sums[c].iter().map(|x| x / norm).collect();
            }
        }
    }
    Ok(KMeans {
        assignments,
        centers,
        objective,
    })
}

/// Cluster ids for each vector.
pub fn assign_intents(vectors: &[Embedding], k: usize, seed: u64) -> Result<Vec<usize>, ResponseSetError> {
    Ok(kmeans(vectors, k, seed)?.assignments)
}
