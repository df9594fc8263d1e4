//! Synthetic corpora with a known answer, used by tests, benchmarks and the
//! runnable examples.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::codeswitch::MRPair;

/// Shape of a separable corpus: `n_replies` reply classes, each tied to a
/// unique key token shared by its reply and all of its messages.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SeparableSpec {
    pub n_replies: usize,
    pub messages_per_reply: usize,
    pub filler_vocab: usize,
    pub filler_per_message: usize,
}

impl Default for SeparableSpec {
    fn default() -> Self {
        Self {
            n_replies: 500,
            messages_per_reply: 4,
            filler_vocab: 50,
            filler_per_message: 3,
        }
    }
}

pub fn key_token(class: usize) -> String {
    format!("k{class}")
}

pub fn reply_text(class: usize) -> String {
    format!("sure {} ok", key_token(class))
}

/// Generates `messages_per_reply` messages per class: the key token plus
/// random filler words in random order. Pairs are interleaved by class.
pub fn separable_corpus(spec: SeparableSpec, seed: u64, id_prefix: &str) -> Vec<MRPair> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(spec.n_replies * spec.messages_per_reply);
    for round in 0..spec.messages_per_reply {
        for class in 0..spec.n_replies {
            let mut words: Vec<String> = (0..spec.filler_per_message)
                .map(|_| format!("w{}", rng.gen_range(0..spec.filler_vocab.max(1))))
                .collect();
            words.push(key_token(class));
            words.shuffle(&mut rng);
            out.push(MRPair::en(
                format!("{id_prefix}{class}-{round}"),
                words.join(" "),
                reply_text(class),
            ));
        }
    }
    out
}
