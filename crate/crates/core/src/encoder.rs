//! The bi-encoder: mean-pooled token embeddings, a shared tanh layer and one
//! linear output head per side, normalized to unit length.
//!
//! ```text
//! h = mean(E[ids])
//! z = tanh(W1·h + b1)
//! u = W_side·z + b_side
//! e = u / ‖u‖
//! ```
//!
//! A square translation head `T` maps message embeddings across languages.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::value::RawValue;
use thiserror::Error;

use crate::linalg::{axpy, dot, norm, Matrix};
use crate::textproc::Vocab;

pub const CHECKPOINT_VERSION: u32 = 1;
const MIN_NORM: f64 = 1e-12;
const INIT_RANGE: f64 = 0.1;

#[derive(Debug, Error)]
pub enum EncoderError {
    #[error("empty input")]
    EmptyInput,
    #[error("degenerate vector (norm {0:e})")]
    DegenerateVector(f64),
    #[error("token id {id} out of range for vocabulary of {vocab_size}")]
    InvalidId { id: u32, vocab_size: usize },
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("checkpoint json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("invalid checkpoint: {0}")]
    Checkpoint(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dims {
    pub d_emb: usize,
    pub d_hid: usize,
    pub d_out: usize,
}

impl Default for Dims {
    fn default() -> Self {
        Self {
            d_emb: 64,
            d_hid: 128,
            d_out: 64,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Side {
    Message,
    Reply,
}

/// A unit-length encoder output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Embedding(Vec<f64>);

impl Embedding {
    /// Normalizes `v`; fails when its norm is below `1e-12`.
    pub fn normalized(mut v: Vec<f64>) -> Result<Self, EncoderError> {
        let n = norm(&v);
        if !(n >= MIN_NORM) {
            return Err(EncoderError::DegenerateVector(n));
        }
        v.iter_mut().for_each(|x| *x /= n);
        Ok(Self(v))
    }

    /// Wraps a vector that is already unit-norm (checked within `tol`).
    pub fn from_unit(v: Vec<f64>, tol: f64) -> Option<Self> {
        ((norm(&v) - 1.0).abs() <= tol && v.iter().all(|x| x.is_finite())).then_some(Self(v))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn dot(&self, other: &Embedding) -> f64 {
        dot(&self.0, &other.0)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Every trainable tensor. Also used as the gradient container.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderParams {
    pub dims: Dims,
    /// vocab_size × d_emb
    pub embeddings: Matrix,
    /// d_hid × d_emb
    pub w1: Matrix,
    pub b1: Vec<f64>,
    /// d_out × d_hid
    pub wm: Matrix,
    pub bm: Vec<f64>,
    /// d_out × d_hid
    pub wr: Matrix,
    pub br: Vec<f64>,
    /// d_out × d_out
    pub t: Matrix,
}

/// Intermediate values of one forward pass, kept for backpropagation.
#[derive(Debug, Clone)]
pub struct Forward {
    pub pooled: Vec<f64>,
    pub hidden: Vec<f64>,
    pub raw_norm: f64,
    pub output: Embedding,
}

impl EncoderParams {
    /// Uniform(−0.1, 0.1) weights from a seeded stream, zero biases, identity `T`.
    pub fn init(vocab_size: usize, dims: Dims, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut uniform = |rows, cols| {
            let data = (0..rows * cols)
                .map(|_| rng.gen_range(-INIT_RANGE..=INIT_RANGE))
                .collect();
            Matrix::from_vec(rows, cols, data).expect("shape")
        };
        let embeddings = uniform(vocab_size, dims.d_emb);
        let w1 = uniform(dims.d_hid, dims.d_emb);
        let wm = uniform(dims.d_out, dims.d_hid);
        let wr = uniform(dims.d_out, dims.d_hid);
        Self {
            dims,
            embeddings,
            w1,
            b1: vec![0.0; dims.d_hid],
            wm,
            bm: vec![0.0; dims.d_out],
            wr,
            br: vec![0.0; dims.d_out],
            t: Matrix::identity(dims.d_out),
        }
    }

    /// All-zero tensors of the same shapes.
    pub fn zeros_like(&self) -> Self {
        let d = self.dims;
        Self {
            dims: d,
            embeddings: Matrix::zeros(self.vocab_size(), d.d_emb),
            w1: Matrix::zeros(d.d_hid, d.d_emb),
            b1: vec![0.0; d.d_hid],
            wm: Matrix::zeros(d.d_out, d.d_hid),
            bm: vec![0.0; d.d_out],
            wr: Matrix::zeros(d.d_out, d.d_hid),
            br: vec![0.0; d.d_out],
            t: Matrix::zeros(d.d_out, d.d_out),
        }
    }

    pub fn vocab_size(&self) -> usize {
        self.embeddings.rows()
    }

    pub const TENSOR_NAMES: [&'static str; 8] = ["embeddings", "w1", "b1", "wm", "bm", "wr", "br", "t"];

    pub fn tensors(&self) -> [&[f64]; 8] {
        [
            self.embeddings.as_slice(),
            self.w1.as_slice(),
            &self.b1,
            self.wm.as_slice(),
            &self.bm,
            self.wr.as_slice(),
            &self.br,
            self.t.as_slice(),
        ]
    }

    pub fn tensors_mut(&mut self) -> [&mut [f64]; 8] {
        [
            self.embeddings.as_mut_slice(),
            self.w1.as_mut_slice(),
            &mut self.b1,
            self.wm.as_mut_slice(),
            &mut self.bm,
            self.wr.as_mut_slice(),
            &mut self.br,
            self.t.as_mut_slice(),
        ]
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.iter().all(|x| x.is_finite()))
    }

    fn head(&self, side: Side) -> (&Matrix, &[f64]) {
        match side {
            Side::Message => (&self.wm, &self.bm),
            Side::Reply => (&self.wr, &self.br),
        }
    }

    pub fn forward(&self, ids: &[u32], side: Side) -> Result<Forward, EncoderError> {
        if ids.is_empty() {
            return Err(EncoderError::EmptyInput);
        }
        let mut pooled = vec![0.0; self.dims.d_emb];
        for (id, weight) in pooling_weights(ids) {
            if id as usize >= self.vocab_size() {
                return Err(EncoderError::InvalidId {
                    id,
                    vocab_size: self.vocab_size(),
                });
            }
            axpy(weight, self.embeddings.row(id as usize), &mut pooled);
        }

        let mut hidden = self.w1.matvec(&pooled);
        for (z, b) in hidden.iter_mut().zip(&self.b1) {
            *z = (*z + b).tanh();
        }

        let (w, b) = self.head(side);
        let mut raw = w.matvec(&hidden);
        axpy(1.0, b, &mut raw);
        let raw_norm = norm(&raw);
        let output = Embedding::normalized(raw)?;
        Ok(Forward {
            pooled,
            hidden,
            raw_norm,
            output,
        })
    }

    pub fn encode(&self, ids: &[u32], side: Side) -> Result<Embedding, EncoderError> {
        Ok(self.forward(ids, side)?.output)
    }

    /// Accumulates into `grads` the gradient of a scalar whose derivative with
    /// respect to this forward's output is `d_out`.
    pub fn backward(&self, fwd: &Forward, ids: &[u32], side: Side, d_out: &[f64], grads: &mut EncoderParams) {
        let e = fwd.output.as_slice();
        // Jacobian of v/‖v‖ is (I − e eᵀ)/‖v‖.
        let proj = dot(e, d_out);
        let d_raw: Vec<f64> = d_out
            .iter()
            .zip(e)
            .map(|(g, ei)| (g - ei * proj) / fwd.raw_norm)
            .collect();

        let (w, _) = self.head(side);
        let (gw, gb) = match side {
            Side::Message => (&mut grads.wm, &mut grads.bm),
            Side::Reply => (&mut grads.wr, &mut grads.br),
        };
        gw.add_outer(&d_raw, &fwd.hidden);
        axpy(1.0, &d_raw, gb);

        let d_hidden = w.matvec_t(&d_raw);
        let d_pre: Vec<f64> = d_hidden
            .iter()
            .zip(&fwd.hidden)
            .map(|(g, z)| g * (1.0 - z * z))
            .collect();
        grads.w1.add_outer(&d_pre, &fwd.pooled);
        axpy(1.0, &d_pre, &mut grads.b1);

        let d_pooled = self.w1.matvec_t(&d_pre);
        for (id, weight) in pooling_weights(ids) {
            axpy(weight, &d_pooled, grads.embeddings.row_mut(id as usize));
        }
    }

    /// `T·e / ‖T·e‖`
    pub fn translate_embed(&self, e: &Embedding) -> Result<Embedding, EncoderError> {
        Embedding::normalized(self.t.matvec(e.as_slice()))
    }

    pub fn save(&self, path: impl AsRef<Path>, vocab: &Vocab, meta: Option<&serde_json::Value>) -> Result<(), EncoderError> {
        std::fs::write(path, self.to_checkpoint_json(vocab, meta)?)?;
        Ok(())
    }

    /// Serializes to the checkpoint JSON format. Floats are written with 17
    /// significant digits.
    pub fn to_checkpoint_json(&self, vocab: &Vocab, meta: Option<&serde_json::Value>) -> Result<String, EncoderError> {
        if vocab.len() != self.vocab_size() {
            return Err(EncoderError::Checkpoint(format!(
                "vocab has {} tokens but embeddings have {} rows",
                vocab.len(),
                self.vocab_size()
            )));
        }
        let arrays = CheckpointArrays {
            embeddings: float_array(self.embeddings.as_slice())?,
            w1: float_array(self.w1.as_slice())?,
            b1: float_array(&self.b1)?,
            wm: float_array(self.wm.as_slice())?,
            bm: float_array(&self.bm)?,
            wr: float_array(self.wr.as_slice())?,
            br: float_array(&self.br)?,
            t: float_array(self.t.as_slice())?,
        };
        let ck = CheckpointOut {
            version: CHECKPOINT_VERSION,
            vocab_size: self.vocab_size(),
            dims: self.dims,
            arrays,
            vocab: vocab.tokens(),
            meta,
        };
        Ok(serde_json::to_string(&ck)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<(Self, Vocab), EncoderError> {
        Self::from_checkpoint_json(&std::fs::read_to_string(path)?)
    }

    pub fn from_checkpoint_json(text: &str) -> Result<(Self, Vocab), EncoderError> {
        let ck: CheckpointIn = serde_json::from_str(text)?;
        let bad = |m: String| EncoderError::Checkpoint(m);
        if ck.version != CHECKPOINT_VERSION {
            return Err(bad(format!("unsupported version {}", ck.version)));
        }
        let d = ck.dims;
        if d.d_emb == 0 || d.d_hid == 0 || d.d_out == 0 {
            return Err(bad("dims must be ≥ 1".into()));
        }
        let vocab = Vocab::from_tokens(ck.vocab).ok_or_else(|| bad("invalid vocab list".into()))?;
        if vocab.len() != ck.vocab_size {
            return Err(bad("vocab_size does not match vocab list".into()));
        }
        let matrix = |name: &str, data: Vec<f64>, r: usize, c: usize| {
            Matrix::from_vec(r, c, data).ok_or_else(|| bad(format!("{name}: expected {r}×{c} values")))
        };
        let vector = |name: &str, data: Vec<f64>, n: usize| {
            if data.len() == n {
                Ok(data)
            } else {
                Err(bad(format!("{name}: expected {n} values")))
            }
        };
        let a = ck.arrays;
        let params = Self {
            dims: d,
            embeddings: matrix("embeddings", a.embeddings, ck.vocab_size, d.d_emb)?,
            w1: matrix("w1", a.w1, d.d_hid, d.d_emb)?,
            b1: vector("b1", a.b1, d.d_hid)?,
            wm: matrix("wm", a.wm, d.d_out, d.d_hid)?,
            bm: vector("bm", a.bm, d.d_out)?,
            wr: matrix("wr", a.wr, d.d_out, d.d_hid)?,
            br: vector("br", a.br, d.d_out)?,
            t: matrix("t", a.t, d.d_out, d.d_out)?,
        };
        if !params.is_finite() {
            return Err(bad("non-finite parameter".into()));
        }
        Ok((params, vocab))
    }
}

/// Distinct ids in ascending order with weight `count / len`.
///
/// Pooling over these weights is exactly invariant to permutation and to
/// uniform repetition of the input.
fn pooling_weights(ids: &[u32]) -> Vec<(u32, f64)> {
    let mut sorted = ids.to_vec();
    sorted.sort_unstable();
    let n = ids.len() as f64;
    let mut out: Vec<(u32, f64)> = Vec::new();
    let mut i = 0;
    while i < sorted.len() {
        let j = i + sorted[i..].iter().take_while(|&&x| x == sorted[i]).count();
        out.push((sorted[i], (j - i) as f64 / n));
        i = j;
    }
    out
}

/// Formats a float with 17 significant digits (exact round-trip for f64).
pub fn format_f64(x: f64) -> String {
    format!("{x:.16e}")
}

fn float_array(xs: &[f64]) -> Result<Box<RawValue>, EncoderError> {
    if let Some(x) = xs.iter().find(|x| !x.is_finite()) {
        return Err(EncoderError::Checkpoint(format!("cannot serialize non-finite value {x}")));
    }
    let mut s = String::with_capacity(xs.len() * 24 + 2);
    s.push('[');
    for (i, &x) in xs.iter().enumerate() {
        if i > 0 {
            s.push(',');
        }
        s.push_str(&format_f64(x));
    }
    s.push(']');
    Ok(RawValue::from_string(s)?)
}

#[derive(Serialize)]
struct CheckpointArrays {
    embeddings: Box<RawValue>,
    w1: Box<RawValue>,
    b1: Box<RawValue>,
    wm: Box<RawValue>,
    bm: Box<RawValue>,
    wr: Box<RawValue>,
    br: Box<RawValue>,
    t: Box<RawValue>,
}

#[derive(Serialize)]
struct CheckpointOut<'a> {
    version: u32,
    vocab_size: usize,
    dims: Dims,
    arrays: CheckpointArrays,
    vocab: &'a [String],
    #[serde(skip_serializing_if = "Option::is_none")]
    meta: Option<&'a serde_json::Value>,
}

#[derive(Deserialize)]
struct ArraysIn {
    embeddings: Vec<f64>,
    w1: Vec<f64>,
    b1: Vec<f64>,
    wm: Vec<f64>,
    bm: Vec<f64>,
    wr: Vec<f64>,
    br: Vec<f64>,
    t: Vec<f64>,
}

#[derive(Deserialize)]
struct CheckpointIn {
    version: u32,
    vocab_size: usize,
    dims: Dims,
    arrays: ArraysIn,
    vocab: Vec<String>,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> EncoderParams {
        EncoderParams::init(20, Dims { d_emb: 4, d_hid: 6, d_out: 4 }, 7)
    }

    /// Straight-line re-implementation of the forward formula with explicit loops.
    fn naive_encode(p: &EncoderParams, ids: &[u32], side: Side) -> Vec<f64> {
        let d = p.dims;
        let mut h = vec![0.0; d.d_emb];
        for &id in ids {
            for k in 0..d.d_emb {
                h[k] += p.embeddings.get(id as usize, k);
            }
        }
        for x in &mut h {
            *x /= ids.len() as f64;
        }
        let mut z = vec![0.0; d.d_hid];
        for i in 0..d.d_hid {
            let mut acc = p.b1[i];
            for k in 0..d.d_emb {
                acc += p.w1.get(i, k) * h[k];
            }
            z[i] = acc.tanh();
        }
        let (w, b) = match side {
            Side::Message => (&p.wm, &p.bm),
            Side::Reply => (&p.wr, &p.br),
        };
        let mut u = vec![0.0; d.d_out];
        for i in 0..d.d_out {
            let mut acc = b[i];
            for k in 0..d.d_hid {
                acc += w.get(i, k) * z[k];
            }
            u[i] = acc;
        }
        let n: f64 = u.iter().map(|x| x * x).sum::<f64>().sqrt();
        u.into_iter().map(|x| x / n).collect()
    }

    #[test]
    fn init_is_deterministic() {
        let a = tiny();
        let b = tiny();
        assert_eq!(a, b);
        assert!(a.b1.iter().chain(&a.bm).chain(&a.br).all(|&x| x == 0.0));
        assert_eq!(a.t, Matrix::identity(4));
        assert!(a.embeddings.as_slice().iter().all(|x| x.abs() <= 0.1));
        assert_ne!(a, EncoderParams::init(20, a.dims, 8));
    }

    #[test]
    fn encode_matches_naive_oracle() {
        let p = tiny();
        for side in [Side::Message, Side::Reply] {
            let ids = [3, 7, 7, 19, 0];
            let e = p.encode(&ids, side).unwrap();
            let oracle = naive_encode(&p, &ids, side);
            for (a, b) in e.as_slice().iter().zip(&oracle) {
                assert!((a - b).abs() <= 1e-9);
            }
            assert!((norm(e.as_slice()) - 1.0).abs() <= 1e-6);
        }
    }

    #[test]
    fn mean_pooling_repetition_invariant() {
        let p = tiny();
        assert_eq!(p.encode(&[5], Side::Message).unwrap(), p.encode(&[5, 5, 5], Side::Message).unwrap());
    }

    #[test]
    fn encode_errors() {
        let p = tiny();
        assert!(matches!(p.encode(&[], Side::Reply), Err(EncoderError::EmptyInput)));
        assert!(matches!(p.encode(&[20], Side::Reply), Err(EncoderError::InvalidId { .. })));
        let mut z = p.clone();
        z.wr = Matrix::zeros(4, 6);
        assert!(matches!(z.encode(&[1], Side::Reply), Err(EncoderError::DegenerateVector(_))));
    }

    #[test]
    fn translate_embed_cases() {
        let mut p = tiny();
        let e = p.encode(&[1, 2], Side::Message).unwrap();
        assert_eq!(p.translate_embed(&e).unwrap(), e);

        p.t.as_mut_slice().iter_mut().for_each(|x| *x *= 2.0);
        let out = p.translate_embed(&e).unwrap();
        for (a, b) in out.as_slice().iter().zip(e.as_slice()) {
            assert!((a - b).abs() <= 1e-15);
        }

        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for x in p.t.as_mut_slice() {
            *x = rng.gen_range(-1.0..1.0);
        }
        let out = p.translate_embed(&e).unwrap();
        let mut naive = [0.0; 4];
        for i in 0..4 {
            for j in 0..4 {
                naive[i] += p.t.get(i, j) * e.as_slice()[j];
            }
        }
        let n = naive.iter().map(|x| x * x).sum::<f64>().sqrt();
        for (a, b) in out.as_slice().iter().zip(naive) {
            assert!((a - b / n).abs() <= 1e-9);
        }
    }

    #[test]
    fn checkpoint_roundtrip_is_exact() {
        let p = tiny();
        let tokens: Vec<String> = ["<pad>", "<unk>"]
            .into_iter()
            .map(String::from)
            .chain((2..20).map(|i| format!("w{i}")))
            .collect();
        let vocab = Vocab::from_tokens(tokens).unwrap();
        let json = p.to_checkpoint_json(&vocab, None).unwrap();
        let (q, v2) = EncoderParams::from_checkpoint_json(&json).unwrap();
        assert_eq!(p, q);
        assert_eq!(vocab, v2);
        assert_eq!(json, q.to_checkpoint_json(&v2, None).unwrap());
        assert!(json.contains(&format_f64(p.embeddings.get(0, 0))));
    }

    #[test]
    fn checkpoint_rejects_bad_shapes() {
        let p = tiny();
        let vocab = Vocab::from_tokens(
            ["<pad>", "<unk>"].into_iter().map(String::from).chain((2..20).map(|i| format!("w{i}"))).collect(),
        )
        .unwrap();
        let mut v: serde_json::Value = serde_json::from_str(&p.to_checkpoint_json(&vocab, None).unwrap()).unwrap();
        v["arrays"]["b1"].as_array_mut().unwrap().pop();
        assert!(EncoderParams::from_checkpoint_json(&v.to_string()).is_err());
        v["version"] = 2.into();
        assert!(EncoderParams::from_checkpoint_json(&v.to_string()).is_err());
    }
}
