#![allow(dead_code, clippy::needless_range_loop)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use smartreply::encoder::{Dims, EncoderParams};
use smartreply::trainer::{loss, Batch, TrainConfig};

pub const FD_STEP: f64 = 1e-5;
/// Magnitudes below this are compared on an absolute scale.
pub const REL_FLOOR: f64 = 1e-6;

#[derive(Debug)]
pub struct GradCheck {
    pub checked: usize,
    pub max_rel_err: f64,
    pub worst: (&'static str, usize, f64, f64),
}

/// Central finite differences of the total loss against an analytic gradient.
pub fn gradient_check(params: &EncoderParams, batch: &Batch, cfg: &TrainConfig, analytic: &EncoderParams) -> GradCheck {
    let mut out = GradCheck {
        checked: 0,
        max_rel_err: 0.0,
        worst: ("", 0, 0.0, 0.0),
    };
    let analytic_tensors = analytic.tensors();
    for (t, name) in EncoderParams::TENSOR_NAMES.iter().enumerate() {
        for k in 0..analytic_tensors[t].len() {
            let mut plus = params.clone();
            plus.tensors_mut()[t][k] += FD_STEP;
            let mut minus = params.clone();
            minus.tensors_mut()[t][k] -= FD_STEP;
            let fp = loss(&plus, batch, cfg).unwrap().total;
            let fm = loss(&minus, batch, cfg).unwrap().total;
            let numeric = (fp - fm) / (2.0 * FD_STEP);
            let a = analytic_tensors[t][k];
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(REL_FLOOR);
            out.checked += 1;
            if rel > out.max_rel_err {
                out.max_rel_err = rel;
                out.worst = (name, k, a, numeric);
            }
        }
    }
    out
}

pub fn tiny_dims() -> Dims {
    Dims { d_emb: 4, d_hid: 6, d_out: 4 }
}

/// Tiny model with non-zero biases and a non-identity translation head so every
/// tensor participates.
pub fn tiny_model(seed: u64) -> EncoderParams {
    let mut p = EncoderParams::init(20, tiny_dims(), seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed + 1000);
    for x in p.b1.iter_mut().chain(p.bm.iter_mut()).chain(p.br.iter_mut()) {
        *x = rng.gen_range(-0.3..0.3);
    }
    for x in p.t.as_mut_slice() {
        *x += rng.gen_range(-0.3..0.3);
    }
    for x in p.embeddings.as_mut_slice().iter_mut().chain(p.w1.as_mut_slice()) {
        *x *= 8.0;
    }
    p
}

/// B=3 batch over ids 2..18, leaving ids 0, 1, 18, 19 unused.
pub fn tiny_batch(seed: u64) -> Batch {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let seq = |rng: &mut ChaCha8Rng| -> Vec<u32> { (0..rng.gen_range(1..5)).map(|_| rng.gen_range(2..18)).collect() };
    Batch {
        message_ids: (0..3).map(|_| seq(&mut rng)).collect(),
        reply_ids: (0..3).map(|_| seq(&mut rng)).collect(),
        translation_ids: Some((0..3).map(|_| seq(&mut rng)).collect()),
    }
}

use smartreply::encoder::Embedding;
use smartreply::responseset::{ResponseEntry, ResponseSet, RESPONSE_SET_VERSION};

pub fn random_unit(rng: &mut ChaCha8Rng, d: usize) -> Embedding {
    loop {
        let v: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect();
        if let Ok(e) = Embedding::normalized(v) {
            return e;
        }
    }
}

/// Response set with short texts over a tiny word pool, so that lexical
/// near-duplicates are common. Texts are made unique with a numeric suffix
/// only when `unique_suffix` is set.
pub fn random_response_set(rng: &mut ChaCha8Rng, n: usize, d: usize, k: usize, pool: usize, unique_suffix: bool) -> ResponseSet {
    let mut seen = std::collections::BTreeSet::new();
    let mut entries = Vec::with_capacity(n);
    while entries.len() < n {
        let len = rng.gen_range(1..=4);
        let mut words: Vec<String> = (0..len).map(|_| format!("w{}", rng.gen_range(0..pool))).collect();
        if unique_suffix {
            words.push(format!("u{}", entries.len()));
        }
        let text = words.join(" ");
        if !seen.insert(text.clone()) {
            continue;
        }
        let count = rng.gen_range(1..50u64);
        let lm = -(rng.gen_range(0.5..8.0f64));
        entries.push(ResponseEntry::new(text, count, lm, rng.gen_range(0..k), random_unit(rng, d)));
    }
    ResponseSet {
        version: RESPONSE_SET_VERSION,
        k_intents: k,
        built_from: "fixture".into(),
        entries,
        meta: None,
    }
}
