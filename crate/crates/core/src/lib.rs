//! Smart-reply suggestions for code-switched conversations.
//!
//! The crate covers the whole pipeline:
//!
//! - [`textproc`]: tokenization, vocabulary, clause segmentation
//! - [`codeswitch`]: code-switched corpus synthesis from English pairs and a phrase table
//! - [`encoder`]: the bi-encoder parameters, forward pass and checkpoint format
//! - [`trainer`]: symmetric in-batch loss, translation auxiliary loss, analytic gradients, Adam
//! - [`responseset`]: the precomputed response set with popularity scores and intents
//! - [`ranker`]: scoring, top-N selection, lexical dedup and intent diversification
//! - [`eval`]: mean reciprocal rank, random baseline, latency report
//! - [`service`]: the HTTP suggestion API
//! - [`config`] and [`cli`]: flat engine config and the `smartreply` command
//!
//! See `examples/` for one runnable program per capability.

// Index loops over parallel arrays read better than zipped iterators in the
// numeric code, and `!(x > 0.0)` is the NaN-rejecting form on purpose.
#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod codeswitch;
pub mod config;
pub mod encoder;
pub mod eval;
pub mod fingerprint;
pub mod linalg;
pub mod ranker;
pub mod responseset;
pub mod service;
pub mod synthetic;
pub mod textproc;
pub mod trainer;

pub use codeswitch::{Lang, MRPair, PhraseTable, SwitchConfig};
pub use encoder::{Dims, Embedding, EncoderParams, Side};
pub use eval::EvalReport;
pub use ranker::{RankConfig, Suggestion};
pub use responseset::{ResponseEntry, ResponseSet};
pub use textproc::{Token, Vocab};
pub use trainer::{Batch, LossBreakdown, TrainConfig};
