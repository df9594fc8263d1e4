//! End to end: synthesize, train, build the response set and rank replies for
//! a few incoming messages, English and code-switched.
//!
//! ```text
//! cargo run --release --example suggest_replies -- ["your message" ...]
//! ```

use smartreply::codeswitch::{read_corpus, synthesize_stream, PhraseTable, SwitchConfig};
use smartreply::encoder::Dims;
use smartreply::ranker::{suggest, RankConfig};
use smartreply::responseset::{ResponseSet, ResponseSetConfig};
use smartreply::textproc::ClauseSplitter;
use smartreply::trainer::{corpus_vocab, train, TrainConfig};

fn main() -> anyhow::Result<()> {
    let data = concat!(env!("CARGO_MANIFEST_DIR"), "/examples/data");
    let (table, _) = PhraseTable::load(format!("{data}/phrase_table_hi.tsv"))?;
    let english = read_corpus(format!("{data}/pairs_en.jsonl"))?;
    let mut buf = Vec::new();
    synthesize_stream(english.into_iter().map(Ok), &mut buf, &table, &ClauseSplitter::default(), SwitchConfig::default())?;
    let corpus: Vec<_> = String::from_utf8(buf)?.lines().map(serde_json::from_str).collect::<Result<_, _>>()?;

    let vocab = corpus_vocab(&corpus, 1);
    let dims = Dims { d_emb: 32, d_hid: 64, d_out: 32 };
    let params = train(&corpus, &vocab, dims, &TrainConfig { epochs: 40, batch_size: 16, ..Default::default() })?.params;
    let set = ResponseSet::build(&corpus, &params, &vocab, &ResponseSetConfig { k_intents: 5, ..Default::default() })?;
    let cfg = RankConfig::default();

    let mut messages: Vec<String> = std::env::args().skip(1).collect();
    if messages.is_empty() {
        messages = ["how are you", "kaise ho", "party tonight ?", "sorry main late hoon", "what do you want to eat"]
            .map(String::from)
            .into();
    }
    for m in &messages {
        println!("> {m}");
        for s in suggest(m, &params, &vocab, &set, &cfg)? {
            println!("    {:<28} score {:+.3}  intent {}", s.text, s.score, s.intent_id);
        }
    }
    Ok(())
}
