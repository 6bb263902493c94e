use std::error::Error;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use pseudogate_core::corpus::{
    build_annotation_tasks, corpus_stats, extract_first_turns, flag_pii, parse_conversations, read_jsonl,
    split_dataset, write_jsonl, FixtureResponses, ResponseSource,
};
use pseudogate_core::evaluator::{
    agreement_items, apply_majority_vote, evaluate, export_syntheticity_corpus, free_marginal_kappa, render_table,
    JudgeBackend,
};
use pseudogate_core::{AnnotatedPrompt, EvalRecord, Seed};
use pseudogate_gateway::backends::ChatClient;
use pseudogate_gateway::config::GatewayConfig;
use pseudogate_gateway::oneshot::run_once;
use pseudogate_gateway::pipeline::{session_seed, Pipeline};
use pseudogate_gateway::session::purge_file;
use pseudogate_gateway::PrivacyMode;

type Result<T> = std::result::Result<T, Box<dyn Error>>;

#[derive(Parser)]
#[command(name = "pseudogate", version, about = "Relevance-gated pseudonymizing gateway for chat-completion APIs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct ConfigArg {
    /// Gateway TOML; bundled defaults when omitted.
    #[arg(long, short)]
    config: Option<PathBuf>,
}

impl ConfigArg {
    fn load(&self) -> Result<GatewayConfig> {
        Ok(match &self.config {
            Some(path) => GatewayConfig::load(path)?,
            None => GatewayConfig::default(),
        })
    }
}

#[derive(Subcommand)]
enum Command {
    /// Run the proxy.
    Serve {
        #[command(flatten)]
        config: ConfigArg,
        #[arg(long)]
        listen: Option<SocketAddr>,
        /// Upstream base URL, e.g. https://api.openai.com/v1
        #[arg(long)]
        upstream: Option<String>,
        #[arg(long)]
        mode: Option<PrivacyMode>,
    },
    /// Pseudonymize one prompt, send it (or echo it) and print the restored response.
    RunOnce {
        #[arg(long)]
        prompt: String,
        #[command(flatten)]
        config: ConfigArg,
        #[arg(long)]
        mode: Option<PrivacyMode>,
        /// Upstream base URL; without it the modified prompt is echoed back.
        #[arg(long)]
        upstream: Option<String>,
        #[arg(long, default_value = "gpt-4o-mini")]
        model: String,
        #[arg(long, default_value = "run-once")]
        session: String,
        #[arg(long)]
        json: bool,
    },
    /// Remove idle sessions from the persistence file.
    PurgeSessions {
        #[command(flatten)]
        config: ConfigArg,
        /// Session file; defaults to `session.persist_path` from the config.
        #[arg(long)]
        sessions: Option<PathBuf>,
        /// Remove every session, not just expired ones.
        #[arg(long)]
        all: bool,
    },
    /// First human turns of a ShareGPT-style conversation dump -> prompt JSONL.
    Extract {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Keep prompts with detected entities -> AnnotatedPrompt JSONL.
    Flag {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: Option<PathBuf>,
        #[command(flatten)]
        config: ConfigArg,
    },
    /// Dataset statistics over AnnotatedPrompt JSONL (gold labels).
    Stats {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        json: bool,
    },
    /// Annotation tasks for the review API.
    MakeTasks {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: Option<PathBuf>,
        #[command(flatten)]
        config: ConfigArg,
        /// JSON object mapping prompt text to a recorded response.
        #[arg(long, conflicts_with = "upstream")]
        responses: Option<PathBuf>,
        #[arg(long)]
        upstream: Option<String>,
        #[arg(long, default_value = "gpt-4o-mini")]
        model: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Majority vote over annotator labels plus free-marginal kappa.
    Vote {
        #[arg(long)]
        input: PathBuf,
        /// Writes the prompts with gold labels and review flags set.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Similarity metrics, error rates and optional judge scores over EvalRecord JSONL.
    Eval {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value = "pseudogate")]
        system: String,
        /// Chat-completions base URL of the judge model.
        #[arg(long)]
        judge_upstream: Option<String>,
        #[arg(long, default_value = "gpt-4o")]
        judge_model: String,
        /// Full report (aggregate and per prompt) as JSON.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Shuffled, labelled original/pipeline responses for a syntheticity classifier.
    ExportSynth {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Seeded train/test split of any JSONL file.
    Split {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        train: PathBuf,
        #[arg(long)]
        test: PathBuf,
        #[arg(long, default_value_t = 0.2)]
        test_fraction: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn read_records<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let file = File::open(path).map_err(|e| format!("{}: {e}", path.display()))?;
    Ok(read_jsonl(BufReader::new(file)).map_err(|e| format!("{}: {e}", path.display()))?)
}

fn output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p).map_err(|e| format!("{}: {e}", p.display()))?)),
        None => Box::new(BufWriter::new(std::io::stdout().lock())),
    })
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    if let Err(e) = run(Cli::parse()) {
        eprintln!("error: {e}");
        std::process::exit(1);
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Serve { config, listen, upstream, mode } => {
            let mut cfg = config.load()?;
            if let Some(l) = listen {
                cfg.listen = l;
            }
            if let Some(u) = upstream {
                cfg.upstream.base_url = u;
            }
            if let Some(m) = mode {
                cfg.mode = m;
            }
            let rt = tokio::runtime::Runtime::new()?;
            rt.block_on(pseudogate_gateway::serve(cfg))
        }
        Command::RunOnce { prompt, config, mode, upstream, model, session, json } => {
            let mut cfg = config.load()?;
            if let Some(m) = mode {
                cfg.mode = m;
            }
            let pipeline = Pipeline::from_config(&cfg)?;
            let client = upstream.map(|u| ChatClient::new(&u, model, cfg.upstream_token(), cfg.upstream.timeout_ms));
            let out = run_once(&pipeline, &prompt, session_seed(cfg.seed, &session), client.as_ref())?;
            if json {
                println!("{}", serde_json::to_string_pretty(&out)?);
            } else {
                print!("{}", out.render());
            }
            Ok(())
        }
        Command::PurgeSessions { config, sessions, all } => {
            let cfg = config.load()?;
            let path = match sessions.or_else(|| cfg.session.persist_path.as_ref().map(|p| cfg.resolve(p))) {
                Some(p) => p,
                None => return Err("no session file: pass --sessions or set session.persist_path".into()),
            };
            let (removed, remaining) = purge_file(&path, chrono::Utc::now(), all)?;
            println!("removed {removed} sessions, {remaining} remain");
            Ok(())
        }
        Command::Extract { input, output: out } => {
            let src = std::fs::read_to_string(&input).map_err(|e| format!("{}: {e}", input.display()))?;
            let extraction = extract_first_turns(&parse_conversations(&src)?);
            write_jsonl(output(out.as_deref())?, &extraction.prompts)?;
            eprintln!("extracted {} prompts ({} conversations without a human turn)", extraction.prompts.len(), extraction.skipped);
            Ok(())
        }
        Command::Flag { input, output: out, config } => {
            let cfg = config.load()?;
            let pipeline = Pipeline::from_config(&cfg)?;
            let report = flag_pii(&read_records(&input)?, pipeline.detector());
            write_jsonl(output(out.as_deref())?, &report.flagged)?;
            eprintln!("flagged {} of {} prompts ({} degraded)", report.flagged_count(), report.total, report.degraded);
            Ok(())
        }
        Command::Stats { input, json } => {
            let stats = corpus_stats(&read_records::<AnnotatedPrompt>(&input)?);
            if json {
                println!("{}", serde_json::to_string_pretty(&stats.summary())?);
            } else {
                print!("{}", stats.render());
            }
            Ok(())
        }
        Command::MakeTasks { input, output: out, config, responses, upstream, model, seed } => {
            let cfg = GatewayConfig { mode: PrivacyMode::Strict, ..config.load()? };
            let pipeline = Pipeline::from_config(&cfg)?;
            let fixtures;
            let client;
            let source: Option<&dyn ResponseSource> = match (responses, upstream) {
                (Some(path), _) => {
                    let src = std::fs::read_to_string(&path).map_err(|e| format!("{}: {e}", path.display()))?;
                    fixtures = FixtureResponses(serde_json::from_str(&src)?);
                    Some(&fixtures)
                }
                (None, Some(url)) => {
                    client = ChatClient::new(&url, model, cfg.upstream_token(), cfg.upstream.timeout_ms);
                    Some(&client)
                }
                (None, None) => None,
            };
            let prompts: Vec<AnnotatedPrompt> = read_records(&input)?;
            let tasks = build_annotation_tasks(&prompts, pipeline.pseudonymizer(), source, Seed(seed))?;
            write_jsonl(output(out.as_deref())?, &tasks)?;
            let response_less = tasks.iter().filter(|t| t.response_less).count();
            eprintln!("wrote {} tasks ({} without responses)", tasks.len(), response_less);
            Ok(())
        }
        Command::Vote { input, output: out } => {
            let mut prompts: Vec<AnnotatedPrompt> = read_records(&input)?;
            let mut decided = 0;
            let mut undecided = 0;
            for p in &mut prompts {
                p.validate()?;
                let mv = apply_majority_vote(p);
                decided += mv.gold.iter().filter(|g| g.is_some()).count();
                undecided += mv.gold.iter().filter(|g| g.is_none()).count();
            }
            let review = prompts.iter().filter(|p| p.flags.needs_review).count();
            println!("prompts: {}", prompts.len());
            println!("entities with gold label: {decided}");
            println!("entities flagged for review: {undecided} (in {review} prompts)");
            match free_marginal_kappa(&agreement_items(&prompts), 2) {
                Ok(k) => println!(
                    "free-marginal kappa: {:.4} (observed agreement {:.4} over {} entities)",
                    k.kappa, k.observed_agreement, k.items
                ),
                Err(e) => println!("free-marginal kappa: n/a ({e})"),
            }
            if let Some(path) = out {
                write_jsonl(output(Some(&path))?, &prompts)?;
            }
            Ok(())
        }
        Command::Eval { input, system, judge_upstream, judge_model, report } => {
            let records: Vec<EvalRecord> = read_records(&input)?;
            let cfg = GatewayConfig::default();
            let judge = judge_upstream.map(|u| ChatClient::new(&u, judge_model, cfg.upstream_token(), 120_000));
            let result = evaluate(&records, judge.as_ref().map(|j| j as &dyn JudgeBackend))?;
            print!("{}", render_table(&[(system.as_str(), &result)]));
            if let Some(path) = report {
                let mut w = output(Some(&path))?;
                serde_json::to_writer_pretty(&mut w, &result)?;
                w.flush()?;
            }
            Ok(())
        }
        Command::ExportSynth { input, output: out, seed } => {
            let records: Vec<EvalRecord> = read_records(&input)?;
            let originals: Vec<String> = records.iter().map(|r| r.original_response.clone()).collect();
            let pipeline: Vec<String> = records.iter().map(|r| r.pipeline_response.clone()).collect();
            let mut w = output(out.as_deref())?;
            let n = export_syntheticity_corpus(&originals, &pipeline, seed, &mut w)?;
            w.flush()?;
            eprintln!("exported {n} responses");
            Ok(())
        }
        Command::Split { input, train, test, test_fraction, seed } => {
            let file = File::open(&input).map_err(|e| format!("{}: {e}", input.display()))?;
            let lines: Vec<String> = BufReader::new(file)
                .lines()
                .collect::<std::io::Result<Vec<_>>>()?
                .into_iter()
                .filter(|l| !l.trim().is_empty())
                .collect();
            let split = split_dataset(&lines, test_fraction, seed);
            for (path, part) in [(&train, &split.train), (&test, &split.test)] {
                let mut w = output(Some(path))?;
                for line in part {
                    writeln!(w, "{line}")?;
                }
                w.flush()?;
            }
            eprintln!("train {} / test {} (seed {seed})", split.train.len(), split.test.len());
            Ok(())
        }
    }
}
