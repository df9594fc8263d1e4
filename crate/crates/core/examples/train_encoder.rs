//! Train the bi-encoder on a synthetic corpus where every reply shares a key
//! token with its messages, and watch the in-batch loss fall.
//!
//! ```text
//! cargo run --release --example train_encoder -- [epochs] [checkpoint.json]
//! ```

use smartreply::encoder::{Dims, EncoderParams, Side};
use smartreply::synthetic::{separable_corpus, SeparableSpec};
use smartreply::textproc::tokenize;
use smartreply::trainer::{corpus_vocab, train, TrainConfig};

fn main() -> anyhow::Result<()> {
    let mut args = std::env::args().skip(1);
    let epochs = args.next().map(|s| s.parse()).transpose()?.unwrap_or(10);
    let out = args.next();

    let spec = SeparableSpec {
        n_replies: 200,
        ..Default::default()
    };
    let corpus = separable_corpus(spec, 1, "train-");
    let vocab = corpus_vocab(&corpus, 1);
    let cfg = TrainConfig { epochs, ..Default::default() };
    println!("{} pairs, vocab {}, {} epochs", corpus.len(), vocab.len(), epochs);

    let outcome = train(&corpus, &vocab, Dims::default(), &cfg)?;
    for e in &outcome.log {
        println!("epoch {:>3}  mr_loss {:.4}", e.epoch, e.mr_loss);
    }

    // Same key token ⇒ high similarity; different key ⇒ low.
    let enc = |text: &str, side| outcome.params.encode(&vocab.encode_ids(&tokenize(text)), side);
    let m = enc("w3 k7 w9", Side::Message)?;
    println!("sim(message k7, reply k7)  = {:+.3}", m.dot(&enc("sure k7 ok", Side::Reply)?));
    println!("sim(message k7, reply k42) = {:+.3}", m.dot(&enc("sure k42 ok", Side::Reply)?));

    if let Some(path) = out {
        outcome.params.save(&path, &vocab, None)?;
        let (reloaded, _) = EncoderParams::load(&path)?;
        assert_eq!(reloaded, outcome.params);
        println!("checkpoint written to {path}");
    }
    Ok(())
}
