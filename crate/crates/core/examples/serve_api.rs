//! Run the HTTP suggestion API on an in-memory model.
//!
//! ```text
//! cargo run --release --example serve_api -- [port]
//! curl -s localhost:8080/api/suggest -H 'content-type: application/json' \
//!   -d '{"conversation":[{"sender":"other","text":"kaise ho"}]}'
//! ```

use std::sync::Arc;

use smartreply::codeswitch::{read_corpus, synthesize_stream, PhraseTable, SwitchConfig};
use smartreply::encoder::Dims;
use smartreply::ranker::RankConfig;
use smartreply::responseset::{ResponseSet, ResponseSetConfig};
use smartreply::service::{router, serve, AppState, Engine};
use smartreply::textproc::ClauseSplitter;
use smartreply::trainer::{corpus_vocab, train, TrainConfig};

#[tokio::main]
async fn main() -> anyhow::Result<()> {
    let port: u16 = std::env::args().nth(1).map(|s| s.parse()).transpose()?.unwrap_or(8080);

    // Bind first so clients get 503 rather than "connection refused" while loading.
    let state = AppState::empty(RankConfig::default());
    let listener = tokio::net::TcpListener::bind(("127.0.0.1", port)).await?;
    println!("listening on http://{}", listener.local_addr()?);
    let server = tokio::spawn(serve(listener, router(state.clone(), None)));

    let engine = tokio::task::spawn_blocking(build_engine).await??;
    println!("model {} ready with {} responses", engine.model_id, engine.rset.len());
    state.install(engine);
    server.await??;
    Ok(())
}

fn build_engine() -> anyhow::Result<Engine> {
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
    let id = Arc::new(params.to_checkpoint_json(&vocab, None)?);
    Ok(Engine::new(params, vocab, set, RankConfig::default(), smartreply::fingerprint::short_hash(id.as_bytes()))?)
}
