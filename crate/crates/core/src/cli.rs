//! The `smartreply` command line.
//!
//! Exit codes: 0 on success, 1 on a domain or input error, 2 on a usage error.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use crate::codeswitch::{read_corpus, synthesize_corpus, PhraseTable};
use crate::config::EngineConfig;
use crate::encoder::EncoderParams;
use crate::eval::run_eval;
use crate::fingerprint::file_fingerprint;
use crate::ranker::suggest;
use crate::responseset::ResponseSet;
use crate::service::{self, AppState, Engine};
use crate::trainer::{corpus_vocab, save_loss_log, train};

#[derive(Debug, Parser)]
#[command(name = "smartreply", version, about = "Smart replies for code-switched conversations")]
pub struct Cli {
    /// Engine config file (`key = value` lines); flags override its keys.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build a code-switched corpus from English pairs and a phrase table.
    Synthesize {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        table: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        p_switch: Option<f64>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Train the bi-encoder; writes a checkpoint and a loss-log CSV.
    Train {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Loss log path (default: `<out>.loss.csv`).
        #[arg(long)]
        log: Option<PathBuf>,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        batch_size: Option<usize>,
        #[arg(long)]
        lr: Option<f64>,
        #[arg(long)]
        lambda_tr: Option<f64>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Build the response set from a corpus and a trained model.
    BuildResponses {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        min_count: Option<usize>,
        #[arg(long)]
        max_size: Option<usize>,
        #[arg(long)]
        k_intents: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Compute MRR of held-out pairs; writes a JSON report and a CSV row.
    Eval {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        responses: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// CSV path (default: `<out>` with a `.csv` extension).
        #[arg(long)]
        csv: Option<PathBuf>,
        #[arg(long, default_value = "bi-encoder")]
        name: String,
        #[arg(long)]
        alpha: Option<f64>,
    },
    /// Print ranked suggestions for one message as JSON.
    Suggest {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        responses: PathBuf,
        #[arg(long)]
        message: String,
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        alpha: Option<f64>,
    },
    /// Serve the HTTP suggestion API.
    Serve {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        responses: PathBuf,
        #[arg(long)]
        port: Option<u16>,
        #[arg(long)]
        bind: Option<String>,
    },
}

fn load_config(path: Option<&Path>, overrides: &[(&str, Option<String>)]) -> Result<EngineConfig> {
    let mut cfg = EngineConfig::default();
    if let Some(p) = path {
        let text = std::fs::read_to_string(p).with_context(|| format!("reading config {}", p.display()))?;
        cfg.apply_text(&text)?;
    }
    for (key, value) in overrides {
        if let Some(v) = value {
            cfg.set(key, v)?;
        }
    }
    cfg.validate()?;
    Ok(cfg)
}

fn s<T: ToString>(v: &Option<T>) -> Option<String> {
    v.as_ref().map(T::to_string)
}

fn fingerprint(path: &Path) -> Result<String> {
    file_fingerprint(path).with_context(|| format!("reading {}", path.display()))
}

fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

pub fn run(cli: Cli) -> Result<()> {
    let config = cli.config.as_deref();
    match cli.command {
        Command::Synthesize {
            input,
            table,
            out,
            p_switch,
            seed,
        } => {
            let cfg = load_config(config, &[("p_switch", s(&p_switch)), ("seed", s(&seed))])?;
            let (table_data, overridden) =
                PhraseTable::load(&table).with_context(|| format!("loading phrase table {}", table.display()))?;
            let stats = synthesize_corpus(&input, &out, &table_data, &cfg.clause_splitter(), cfg.switch_config())?;
            let meta = cfg.metadata(&[("input", fingerprint(&input)?), ("table", fingerprint(&table)?)]);
            let sidecar = serde_json::json!({ "meta": meta, "stats": stats, "table_overrides": overridden });
            std::fs::write(with_suffix(&out, ".meta.json"), serde_json::to_string_pretty(&sidecar)?)?;
            println!("{}", serde_json::to_string(&stats)?);
        }
        Command::Train {
            corpus,
            out,
            log,
            epochs,
            batch_size,
            lr,
            lambda_tr,
            seed,
        } => {
            let cfg = load_config(
                config,
                &[
                    ("seed", s(&seed)),
                    ("epochs", s(&epochs)),
                    ("batch_size", s(&batch_size)),
                    ("lr", s(&lr)),
                    ("lambda_tr", s(&lambda_tr)),
                ],
            )?;
            let pairs = read_corpus(&corpus)?;
            let vocab = corpus_vocab(&pairs, cfg.vocab_min_count);
            let outcome = train(&pairs, &vocab, cfg.dims, &cfg.train)?;
            let meta = cfg.metadata(&[("corpus", fingerprint(&corpus)?)]);
            outcome.params.save(&out, &vocab, Some(&meta))?;
            save_loss_log(log.unwrap_or_else(|| with_suffix(&out, ".loss.csv")), &outcome.log)?;
            if let Some(last) = outcome.log.last() {
                eprintln!("trained {} epochs, final total loss {:.6}", last.epoch, last.total);
            }
        }
        Command::BuildResponses {
            corpus,
            model,
            out,
            min_count,
            max_size,
            k_intents,
            seed,
        } => {
            let cfg = load_config(
                config,
                &[
                    ("min_count", s(&min_count)),
                    ("max_size", s(&max_size)),
                    ("k_intents", s(&k_intents)),
                    ("seed", s(&seed)),
                ],
            )?;
            let (params, vocab) = EncoderParams::load(&model)?;
            let pairs = read_corpus(&corpus)?;
            let mut set = ResponseSet::build(&pairs, &params, &vocab, &cfg.response_set_config())?;
            set.meta = Some(cfg.metadata(&[("corpus", fingerprint(&corpus)?), ("model", fingerprint(&model)?)]));
            set.save(&out)?;
            eprintln!("response set: {} entries, {} intents", set.len(), set.k_intents);
        }
        Command::Eval {
            corpus,
            model,
            responses,
            out,
            csv,
            name,
            alpha,
        } => {
            let cfg = load_config(config, &[("alpha", s(&alpha))])?;
            let (params, vocab) = EncoderParams::load(&model)?;
            let rset = ResponseSet::load(&responses)?;
            let pairs = read_corpus(&corpus)?;
            let mut report = run_eval(&name, &pairs, &params, &vocab, &rset, cfg.rank.alpha)?;
            report.meta = Some(cfg.metadata(&[
                ("corpus", fingerprint(&corpus)?),
                ("model", fingerprint(&model)?),
                ("responses", fingerprint(&responses)?),
            ]));
            report.save(&out)?;
            let mut buf = Vec::new();
            report.write_csv(&mut buf)?;
            std::fs::write(csv.unwrap_or_else(|| out.with_extension("csv")), buf)?;
            println!(
                "{}",
                serde_json::json!({
                    "mrr": report.mrr,
                    "baseline_mrr_closed_form": report.baseline_mrr_closed_form,
                    "n_queries": report.n_queries,
                    "n_skipped": report.n_skipped,
                })
            );
        }
        Command::Suggest {
            model,
            responses,
            message,
            n,
            alpha,
        } => {
            let mut cfg = load_config(config, &[("alpha", s(&alpha))])?;
            if let Some(n) = n {
                if n == 0 || n > cfg.rank.n1 {
                    bail!("--n must lie in [1, n1={}]", cfg.rank.n1);
                }
                cfg.rank.n2 = n;
            }
            let (params, vocab) = EncoderParams::load(&model)?;
            let rset = ResponseSet::load(&responses)?;
            let list = suggest(&message, &params, &vocab, &rset, &cfg.rank)?;
            println!("{}", serde_json::to_string(&list)?);
        }
        Command::Serve {
            model,
            responses,
            port,
            bind,
        } => {
            let cfg = load_config(config, &[("port", s(&port)), ("bind", bind)])?;
            let runtime = tokio::runtime::Runtime::new()?;
            runtime.block_on(async move {
                let state = AppState::empty(cfg.rank.clone());
                let app = service::router(state.clone(), Some(PathBuf::from(&cfg.ui_dir)));
                let listener = tokio::net::TcpListener::bind((cfg.bind.as_str(), cfg.port))
                    .await
                    .with_context(|| format!("binding {}:{}", cfg.bind, cfg.port))?;
                eprintln!("listening on http://{}", listener.local_addr()?);
                let rank = cfg.rank.clone();
                let loader = tokio::task::spawn_blocking(move || Engine::load(&model, &responses, rank));
                let server = tokio::spawn(service::serve(listener, app));
                let engine = loader.await??;
                eprintln!("loaded model {} with {} responses", engine.model_id, engine.rset.len());
                state.install(engine);
                server.await??;
                Ok::<_, anyhow::Error>(())
            })?;
        }
    }
    Ok(())
}

/// Parses arguments, runs the command and maps failures to exit codes.
pub fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => e.exit(),
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
