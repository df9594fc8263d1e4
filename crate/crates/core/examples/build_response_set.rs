//! Build the candidate reply set from a code-switched corpus: frequency
//! filtering, log-frequency priors and k-means intent clusters.
//!
//! ```text
//! cargo run --example build_response_set -- [k_intents]
//! ```

use std::collections::BTreeMap;

use smartreply::codeswitch::{read_corpus, synthesize_stream, PhraseTable, SwitchConfig};
use smartreply::encoder::Dims;
use smartreply::responseset::{ResponseSet, ResponseSetConfig};
use smartreply::textproc::ClauseSplitter;
use smartreply::trainer::{corpus_vocab, train, TrainConfig};

fn main() -> anyhow::Result<()> {
    let k_intents = std::env::args().nth(1).map(|s| s.parse()).transpose()?.unwrap_or(4);
    let data = concat!(env!("CARGO_MANIFEST_DIR"), "/examples/data");
    let (table, _) = PhraseTable::load(format!("{data}/phrase_table_hi.tsv"))?;
    let english = read_corpus(format!("{data}/pairs_en.jsonl"))?;

    let mut buf = Vec::new();
    synthesize_stream(english.into_iter().map(Ok), &mut buf, &table, &ClauseSplitter::default(), SwitchConfig::default())?;
    let corpus: Vec<_> = String::from_utf8(buf)?.lines().map(serde_json::from_str).collect::<Result<_, _>>()?;

    let vocab = corpus_vocab(&corpus, 1);
    let dims = Dims { d_emb: 32, d_hid: 64, d_out: 32 };
    let params = train(&corpus, &vocab, dims, &TrainConfig { epochs: 20, batch_size: 16, ..Default::default() })?.params;

    let cfg = ResponseSetConfig {
        min_count: 2,
        k_intents,
        ..Default::default()
    };
    let set = ResponseSet::build(&corpus, &params, &vocab, &cfg)?;
    println!("{} responses (min_count {}), {} intents", set.len(), cfg.min_count, set.k_intents);

    let mut by_intent: BTreeMap<usize, Vec<&str>> = BTreeMap::new();
    for e in &set.entries {
        by_intent.entry(e.intent_id).or_default().push(&e.text);
    }
    for (intent, texts) in &by_intent {
        println!("intent {intent}: {}", texts.join(" | "));
    }
    println!("\nmost frequent:");
    for e in set.entries.iter().take(5) {
        println!("  {:>3}×  lm {:+.3}  {}", e.count, e.lm_score, e.text);
    }
    Ok(())
}
