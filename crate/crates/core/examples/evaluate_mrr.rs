//! Random versus trained encoder on held-out messages: MRR of the true reply,
//! the closed-form random baseline and per-query latency.
//!
//! ```text
//! cargo run --release --example evaluate_mrr -- [n_replies] [epochs]
//! ```

use smartreply::encoder::{Dims, EncoderParams};
use smartreply::eval::run_eval;
use smartreply::responseset::{ResponseSet, ResponseSetConfig};
use smartreply::synthetic::{separable_corpus, SeparableSpec};
use smartreply::trainer::{corpus_vocab, train, TrainConfig};

fn main() -> anyhow::Result<()> {
    let mut args = std::env::args().skip(1);
    let n_replies = args.next().map(|s| s.parse()).transpose()?.unwrap_or(500);
    let epochs = args.next().map(|s| s.parse()).transpose()?.unwrap_or(30);

    let train_set = separable_corpus(SeparableSpec { n_replies, ..Default::default() }, 1, "train-");
    let spec = SeparableSpec {
        n_replies,
        messages_per_reply: 1,
        ..Default::default()
    };
    let held_out = separable_corpus(spec, 2, "test-");
    let vocab = corpus_vocab(&train_set, 1);
    let dims = Dims::default();
    let rset_cfg = ResponseSetConfig::default();

    println!("{:<12} {:>8} {:>10} {:>12} {:>10}", "model", "mrr", "baseline", "mean ms", "p95 ms");
    let random = EncoderParams::init(vocab.len(), dims, 42);
    let trained = train(&train_set, &vocab, dims, &TrainConfig { epochs, ..Default::default() })?.params;
    for (name, params) in [("random", &random), ("bi-encoder", &trained)] {
        let set = ResponseSet::build(&train_set, params, &vocab, &rset_cfg)?;
        let r = run_eval(name, &held_out, params, &vocab, &set, 0.3)?;
        println!(
            "{:<12} {:>8.4} {:>10.5} {:>12.4} {:>10.4}",
            r.model_name, r.mrr, r.baseline_mrr_closed_form, r.latency_mean_ms, r.latency_p95_ms
        );
    }
    Ok(())
}
