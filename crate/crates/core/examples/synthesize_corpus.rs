//! Turn English message–reply pairs into a mixed English / code-switched corpus.
//!
//! ```text
//! cargo run --example synthesize_corpus -- [p_switch] [seed]
//! ```

use std::io::Write;

use smartreply::codeswitch::{synthesize_stream, CorpusReader, PhraseTable, SwitchConfig};
use smartreply::textproc::ClauseSplitter;

fn main() -> anyhow::Result<()> {
    let mut args = std::env::args().skip(1);
    let p_switch = args.next().map(|s| s.parse()).transpose()?.unwrap_or(0.3);
    let seed = args.next().map(|s| s.parse()).transpose()?.unwrap_or(42);

    let data = concat!(env!("CARGO_MANIFEST_DIR"), "/examples/data");
    let (table, overridden) = PhraseTable::load(format!("{data}/phrase_table_hi.tsv"))?;
    println!(
        "phrase table: {} clause rows, {} word rows ({overridden} duplicates overridden)",
        table.clause_map.len(),
        table.word_map.len()
    );

    let reader = CorpusReader::open(format!("{data}/pairs_en.jsonl"))?;
    let mut out = Vec::new();
    let stats = synthesize_stream(reader, &mut out, &table, &ClauseSplitter::default(), SwitchConfig { p_switch, rng_seed: seed })?;

    let text = String::from_utf8(out)?;
    let mut stdout = std::io::stdout().lock();
    for line in text.lines().take(6) {
        writeln!(stdout, "{line}")?;
    }
    writeln!(stdout, "...")?;
    writeln!(
        stdout,
        "{} pairs in, {} records out; {} of {} clauses switched (rate {:.3}, target {p_switch})",
        stats.input_pairs, stats.output_records, stats.clauses_switched, stats.clauses, stats.switch_rate
    )?;
    Ok(())
}
