//! Training objective and optimizer.
//!
//! The match objective uses in-batch negatives: for a batch of `B` pairs the
//! similarity matrix is `s[i][j] = exp(φ(m_i)·φ(r_j))` and each positive is
//! normalized over its row *and* its column,
//!
//! ```text
//! p(m_i, r_i) = s_ii / (Σ_j s_ij + Σ_k s_ki − s_ii)
//! mr_loss     = −(1/B) Σ_i log p(m_i, r_i)
//! ```
//!
//! The auxiliary translation objective aligns `T·φ(m_i)` with the message
//! encoding of the second-language rendering of `m_i`:
//!
//! ```text
//! tr_loss = (1/B) Σ_i (1 − normalize(T·φ(m_i)) · φ(m_i^l2))
//! ```
//!
//! Gradients are derived by hand and checked against finite differences in
//! the test suite.

use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::codeswitch::MRPair;
use crate::encoder::{Dims, EncoderError, EncoderParams, Forward, Side};
use crate::linalg::{axpy, dot, Matrix};
use crate::textproc::{tokenize, Vocab};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error(transparent)]
    Encoder(#[from] EncoderError),
    #[error("invalid batch: {0}")]
    InvalidBatch(String),
    #[error("batch carries no translations")]
    MissingTranslations,
    #[error("numerical error: {0}")]
    Numerical(String),
    #[error("corpus is empty after filtering")]
    EmptyCorpus,
    #[error("invalid train config: {0}")]
    Config(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// Token-id sequences for one minibatch.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub message_ids: Vec<Vec<u32>>,
    pub reply_ids: Vec<Vec<u32>>,
    /// Second-language rendering of each message.
    pub translation_ids: Option<Vec<Vec<u32>>>,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.message_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.message_ids.is_empty()
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        let b = self.len();
        if b == 0 {
            return Err(TrainError::InvalidBatch("empty batch".into()));
        }
        if self.reply_ids.len() != b || self.translation_ids.as_ref().is_some_and(|t| t.len() != b) {
            return Err(TrainError::InvalidBatch("list lengths differ".into()));
        }
        let all = self
            .message_ids
            .iter()
            .chain(&self.reply_ids)
            .chain(self.translation_ids.iter().flatten());
        if all.into_iter().any(Vec::is_empty) {
            return Err(TrainError::InvalidBatch("empty id sequence".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub lambda_tr: f64,
    pub seed: u64,
    pub shuffle: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            epochs: 30,
            batch_size: 32,
            lambda_tr: 0.5,
            seed: 42,
            shuffle: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let err = |m: &str| Err(TrainError::Config(m.into()));
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return err("lr must be finite and non-negative");
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return err("beta1 and beta2 must lie in [0, 1)");
        }
        if !(self.eps > 0.0) {
            return err("eps must be positive");
        }
        if !(self.lambda_tr >= 0.0 && self.lambda_tr.is_finite()) {
            return err("lambda_tr must be finite and non-negative");
        }
        if self.batch_size < 2 {
            return err("batch_size must be at least 2");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub total: f64,
    pub mr_loss: f64,
    pub tr_loss: f64,
}

/// `s[i][j] = exp(φ(m_i)·φ(r_j))`
pub fn similarity_matrix(params: &EncoderParams, batch: &Batch) -> Result<Matrix, TrainError> {
    batch.validate()?;
    let m = encode_all(params, &batch.message_ids, Side::Message)?;
    let r = encode_all(params, &batch.reply_ids, Side::Reply)?;
    Ok(exp_dot_matrix(&m, &r))
}

fn encode_all(params: &EncoderParams, seqs: &[Vec<u32>], side: Side) -> Result<Vec<Forward>, TrainError> {
    seqs.iter()
        .map(|ids| params.forward(ids, side).map_err(TrainError::from))
        .collect()
}

fn exp_dot_matrix(m: &[Forward], r: &[Forward]) -> Matrix {
    let b = m.len();
    let mut s = Matrix::zeros(b, b);
    for i in 0..b {
        for j in 0..b {
            s.set(i, j, m[i].output.dot(&r[j].output).exp());
        }
    }
    s
}

/// Row-plus-column denominators `Σ_j s_ij + Σ_k s_ki − s_ii`.
fn denominators(s: &Matrix) -> Vec<f64> {
    let b = s.rows();
    (0..b)
        .map(|i| {
            let row: f64 = s.row(i).iter().sum();
            let col: f64 = (0..b).map(|k| s.get(k, i)).sum();
            row + col - s.get(i, i)
        })
        .collect()
}

/// Symmetric in-batch softmax loss over a positive square matrix.
pub fn symmetric_loss(s: &Matrix) -> Result<f64, TrainError> {
    let b = s.rows();
    if b == 0 || s.cols() != b {
        return Err(TrainError::InvalidBatch("similarity matrix must be square and non-empty".into()));
    }
    if s.as_slice().iter().any(|&x| !(x > 0.0) || !x.is_finite()) {
        return Err(TrainError::Numerical("similarity entries must be positive and finite".into()));
    }
    let denom = denominators(s);
    let mut acc = 0.0;
    for (i, &d) in denom.iter().enumerate() {
        if !(d > 0.0) {
            return Err(TrainError::Numerical(format!("non-positive denominator at {i}")));
        }
        acc += (s.get(i, i) / d).ln();
    }
    Ok(-acc / b as f64)
}

/// Mean cosine misalignment between the translated message embedding and the
/// encoding of its second-language rendering.
pub fn translation_loss(params: &EncoderParams, batch: &Batch) -> Result<f64, TrainError> {
    batch.validate()?;
    let tr = batch.translation_ids.as_ref().ok_or(TrainError::MissingTranslations)?;
    let mut acc = 0.0;
    for (m, t) in batch.message_ids.iter().zip(tr) {
        let en = params.encode(m, Side::Message)?;
        let l2 = params.encode(t, Side::Message)?;
        acc += 1.0 - params.translate_embed(&en)?.dot(&l2);
    }
    Ok(acc / batch.len() as f64)
}

/// Loss without gradients. `tr_loss` is zero when the batch has no translations.
pub fn loss(params: &EncoderParams, batch: &Batch, cfg: &TrainConfig) -> Result<LossBreakdown, TrainError> {
    let mr_loss = symmetric_loss(&similarity_matrix(params, batch)?)?;
    let tr_loss = match batch.translation_ids {
        Some(_) => translation_loss(params, batch)?,
        None => 0.0,
    };
    Ok(LossBreakdown {
        total: mr_loss + cfg.lambda_tr * tr_loss,
        mr_loss,
        tr_loss,
    })
}

/// Loss and its exact gradient with respect to every parameter tensor.
pub fn grad(params: &EncoderParams, batch: &Batch, cfg: &TrainConfig) -> Result<(LossBreakdown, EncoderParams), TrainError> {
    batch.validate()?;
    let b = batch.len();
    let inv_b = 1.0 / b as f64;
    let d_out = params.dims.d_out;

    let fm = encode_all(params, &batch.message_ids, Side::Message)?;
    let fr = encode_all(params, &batch.reply_ids, Side::Reply)?;
    let s = exp_dot_matrix(&fm, &fr);
    let mr_loss = symmetric_loss(&s)?;
    let denom = denominators(&s);

    // dL/dx_ab for x_ab = m_a·r_b
    let mut g = Matrix::zeros(b, b);
    for a in 0..b {
        for c in 0..b {
            let v = if a == c {
                s.get(a, a) / denom[a] - 1.0
            } else {
                s.get(a, c) * (1.0 / denom[a] + 1.0 / denom[c])
            };
            g.set(a, c, v * inv_b);
        }
    }

    let mut dm = vec![vec![0.0; d_out]; b];
    let mut dr = vec![vec![0.0; d_out]; b];
    for a in 0..b {
        for c in 0..b {
            let gac = g.get(a, c);
            axpy(gac, fr[c].output.as_slice(), &mut dm[a]);
            axpy(gac, fm[a].output.as_slice(), &mut dr[c]);
        }
    }

    let mut grads = params.zeros_like();
    let mut tr_loss = 0.0;
    let mut translation_pass = None;

    if let Some(tr_ids) = &batch.translation_ids {
        let ft = encode_all(params, tr_ids, Side::Message)?;
        let mut dt_out = vec![vec![0.0; d_out]; b];
        for i in 0..b {
            let en = fm[i].output.as_slice();
            let y = params.t.matvec(en);
            let ny = dot(&y, &y).sqrt();
            if !(ny >= 1e-12) {
                return Err(EncoderError::DegenerateVector(ny).into());
            }
            let tv: Vec<f64> = y.iter().map(|x| x / ny).collect();
            let l2 = ft[i].output.as_slice();
            tr_loss += 1.0 - dot(&tv, l2);

            if cfg.lambda_tr != 0.0 {
                let w = cfg.lambda_tr * inv_b;
                let d_tv: Vec<f64> = l2.iter().map(|x| -w * x).collect();
                axpy(-w, &tv, &mut dt_out[i]);
                let proj = dot(&tv, &d_tv);
                let dy: Vec<f64> = d_tv.iter().zip(&tv).map(|(g, t)| (g - t * proj) / ny).collect();
                grads.t.add_outer(&dy, en);
                let d_en = params.t.matvec_t(&dy);
                axpy(1.0, &d_en, &mut dm[i]);
            }
        }
        tr_loss *= inv_b;
        translation_pass = Some((ft, dt_out));
    }

    for i in 0..b {
        params.backward(&fm[i], &batch.message_ids[i], Side::Message, &dm[i], &mut grads);
        params.backward(&fr[i], &batch.reply_ids[i], Side::Reply, &dr[i], &mut grads);
    }
    if let (Some((ft, dt_out)), Some(tr_ids)) = (translation_pass, &batch.translation_ids) {
        if cfg.lambda_tr != 0.0 {
            for i in 0..b {
                params.backward(&ft[i], &tr_ids[i], Side::Message, &dt_out[i], &mut grads);
            }
        }
    }

    let breakdown = LossBreakdown {
        total: mr_loss + cfg.lambda_tr * tr_loss,
        mr_loss,
        tr_loss,
    };
    Ok((breakdown, grads))
}

/// Adaptive-moment optimizer state.
#[derive(Debug, Clone)]
pub struct Adam {
    m: EncoderParams,
    v: EncoderParams,
    steps: i32,
}

impl Adam {
    pub fn new(params: &EncoderParams) -> Self {
        Self {
            m: params.zeros_like(),
            v: params.zeros_like(),
            steps: 0,
        }
    }

    pub fn step(&mut self, params: &mut EncoderParams, grads: &EncoderParams, cfg: &TrainConfig) {
        self.steps += 1;
        let bc1 = 1.0 - cfg.beta1.powi(self.steps);
        let bc2 = 1.0 - cfg.beta2.powi(self.steps);
        let ps = params.tensors_mut();
        let gs = grads.tensors();
        let ms = self.m.tensors_mut();
        let vs = self.v.tensors_mut();
        for (((p, g), m), v) in ps.into_iter().zip(gs).zip(ms).zip(vs) {
            for k in 0..p.len() {
                let gk = g[k];
                m[k] = cfg.beta1 * m[k] + (1.0 - cfg.beta1) * gk;
                v[k] = cfg.beta2 * v[k] + (1.0 - cfg.beta2) * gk * gk;
                let m_hat = m[k] / bc1;
                let v_hat = v[k] / bc2;
                p[k] -= cfg.lr * m_hat / (v_hat.sqrt() + cfg.eps);
            }
        }
    }
}

/// A tokenized training example.
#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub message: Vec<u32>,
    pub reply: Vec<u32>,
    pub translation: Option<Vec<u32>>,
}

/// Tokenizes and encodes a corpus, dropping pairs whose message or reply is empty.
pub fn prepare_examples(corpus: &[MRPair], vocab: &Vocab) -> Vec<Example> {
    corpus
        .iter()
        .filter_map(|p| {
            let message = vocab.encode_ids(&tokenize(&p.message));
            let reply = vocab.encode_ids(&tokenize(&p.reply));
            if message.is_empty() || reply.is_empty() {
                return None;
            }
            let translation = p
                .message_translation
                .as_deref()
                .map(|t| vocab.encode_ids(&tokenize(t)))
                .filter(|ids| !ids.is_empty());
            Some(Example {
                message,
                reply,
                translation,
            })
        })
        .collect()
}

/// Vocabulary over messages, replies and message translations.
pub fn corpus_vocab(corpus: &[MRPair], min_count: usize) -> Vocab {
    let seqs: Vec<Vec<crate::textproc::Token>> = corpus
        .iter()
        .flat_map(|p| [Some(&p.message), Some(&p.reply), p.message_translation.as_ref()])
        .flatten()
        .map(|t| tokenize(t))
        .collect();
    Vocab::build(seqs.iter().map(Vec::as_slice), min_count)
}

/// Builds a batch; translations are attached only when every example has one.
pub fn make_batch(examples: &[&Example]) -> Batch {
    let translation_ids = examples
        .iter()
        .map(|e| e.translation.clone())
        .collect::<Option<Vec<_>>>();
    Batch {
        message_ids: examples.iter().map(|e| e.message.clone()).collect(),
        reply_ids: examples.iter().map(|e| e.reply.clone()).collect(),
        translation_ids,
    }
}

/// Splits an index order into minibatches, dropping a trailing singleton.
fn minibatches(order: &[usize], batch_size: usize) -> impl Iterator<Item = &[usize]> {
    order.chunks(batch_size).filter(|c| c.len() >= 2)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub mr_loss: f64,
    pub tr_loss: f64,
    pub total: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: EncoderParams,
    pub log: Vec<EpochLog>,
}

/// Mean batch loss over the examples in their given order, no updates.
pub fn mean_loss(params: &EncoderParams, examples: &[Example], cfg: &TrainConfig) -> Result<LossBreakdown, TrainError> {
    let order: Vec<usize> = (0..examples.len()).collect();
    let mut acc = [0.0; 3];
    let mut n = 0;
    for chunk in minibatches(&order, cfg.batch_size) {
        let refs: Vec<&Example> = chunk.iter().map(|&i| &examples[i]).collect();
        let l = loss(params, &make_batch(&refs), cfg)?;
        acc[0] += l.mr_loss;
        acc[1] += l.tr_loss;
        acc[2] += l.total;
        n += 1;
    }
    if n == 0 {
        return Err(TrainError::EmptyCorpus);
    }
    let n = n as f64;
    Ok(LossBreakdown {
        mr_loss: acc[0] / n,
        tr_loss: acc[1] / n,
        total: acc[2] / n,
    })
}

/// Runs `cfg.epochs` epochs of Adam from the given starting parameters.
pub fn train_from(mut params: EncoderParams, examples: &[Example], cfg: &TrainConfig) -> Result<TrainOutcome, TrainError> {
    cfg.validate()?;
    if examples.len() < 2 {
        return Err(TrainError::EmptyCorpus);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5eed_5eed);
    let mut adam = Adam::new(&params);
    let mut order: Vec<usize> = (0..examples.len()).collect();
    let mut log = Vec::with_capacity(cfg.epochs);

    for epoch in 1..=cfg.epochs {
        if cfg.shuffle {
            order.shuffle(&mut rng);
        }
        let mut acc = [0.0; 3];
        let mut n = 0usize;
        for chunk in minibatches(&order, cfg.batch_size) {
            let refs: Vec<&Example> = chunk.iter().map(|&i| &examples[i]).collect();
            let (l, g) = grad(&params, &make_batch(&refs), cfg)?;
            adam.step(&mut params, &g, cfg);
            acc[0] += l.mr_loss;
            acc[1] += l.tr_loss;
            acc[2] += l.total;
            n += 1;
        }
        let n = n as f64;
        log.push(EpochLog {
            epoch,
            mr_loss: acc[0] / n,
            tr_loss: acc[1] / n,
            total: acc[2] / n,
        });
        if !params.is_finite() {
            return Err(TrainError::Numerical(format!("non-finite parameters after epoch {epoch}")));
        }
    }
    Ok(TrainOutcome { params, log })
}

/// Initializes parameters from `cfg.seed` and trains on `corpus`.
pub fn train(corpus: &[MRPair], vocab: &Vocab, dims: Dims, cfg: &TrainConfig) -> Result<TrainOutcome, TrainError> {
    let examples = prepare_examples(corpus, vocab);
    if examples.is_empty() {
        return Err(TrainError::EmptyCorpus);
    }
    let params = EncoderParams::init(vocab.len(), dims, cfg.seed);
    train_from(params, &examples, cfg)
}

/// Writes the per-epoch loss log as CSV.
pub fn write_loss_log<W: Write>(out: &mut W, log: &[EpochLog]) -> std::io::Result<()> {
    writeln!(out, "epoch,mr_loss,tr_loss,total")?;
    for e in log {
        writeln!(out, "{},{},{},{}", e.epoch, e.mr_loss, e.tr_loss, e.total)?;
    }
    Ok(())
}

pub fn save_loss_log(path: impl AsRef<Path>, log: &[EpochLog]) -> std::io::Result<()> {
    let mut buf = Vec::new();
    write_loss_log(&mut buf, log)?;
    std::fs::write(path, buf)
}
