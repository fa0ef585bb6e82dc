use std::fs::File;
use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use kgnav::config::Config;
use kgnav::eval::run_eval;
use kgnav::kg::{load_metaqa_kb, KnowledgeGraph};
use kgnav::llm::cache_records;
use kgnav::pipeline::Pipeline;
use kgnav::question::{load_metaqa_qa, parse_topic_entities, HopPredictor, Question};

const EXIT_USAGE: u8 = 1;
const EXIT_DATA: u8 = 2;
const EXIT_BACKEND: u8 = 3;

#[derive(Parser)]
#[command(
    name = "kgnav",
    about = "Multi-hop knowledge graph question answering",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Load a kb file and print entity/relation/triple counts.
    Stats {
        #[arg(long)]
        kb: PathBuf,
    },
    /// Answer a single question.
    Ask {
        #[arg(long)]
        kb: PathBuf,
        #[arg(long)]
        question: String,
        /// Topic entity; repeatable. Bracketed entities in the question text
        /// also count.
        #[arg(long)]
        entity: Vec<String>,
        /// Hop count: a number, or "auto" to use the configured predictor.
        #[arg(long, default_value = "auto")]
        hops: String,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Print the per-hop retrieval trace.
        #[arg(long)]
        trace: bool,
    },
    /// Evaluate a QA file and report Hits@1 plus the error histogram.
    Eval {
        #[arg(long)]
        kb: PathBuf,
        #[arg(long)]
        qa: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 1)]
        workers: usize,
        /// Write the retrieval trace as JSON Lines.
        #[arg(long)]
        trace: Option<PathBuf>,
        /// Write the report as JSON (stdout when omitted).
        #[arg(long)]
        report: Option<PathBuf>,
        /// Hop label for every question (overrides the file-name inference).
        #[arg(long)]
        hop_label: Option<usize>,
    },
    /// Inspect or clear the response cache.
    Cache {
        #[command(subcommand)]
        action: CacheAction,
    },
}

#[derive(Subcommand)]
enum CacheAction {
    Show {
        #[arg(long)]
        path: PathBuf,
    },
    Clear {
        #[arg(long)]
        path: PathBuf,
    },
}

struct CliError {
    code: u8,
    message: String,
}

impl CliError {
    fn usage(message: impl ToString) -> Self {
        Self {
            code: EXIT_USAGE,
            message: message.to_string(),
        }
    }
    fn data(message: impl ToString) -> Self {
        Self {
            code: EXIT_DATA,
            message: message.to_string(),
        }
    }
    fn backend(message: impl ToString) -> Self {
        Self {
            code: EXIT_BACKEND,
            message: message.to_string(),
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message);
            ExitCode::from(e.code)
        }
    }
}

fn load_kb(path: &Path) -> Result<KnowledgeGraph, CliError> {
    let file = File::open(path).map_err(|e| CliError::data(format!("{}: {e}", path.display())))?;
    load_metaqa_kb(BufReader::new(file)).map_err(CliError::data)
}

fn load_config(path: &Option<PathBuf>) -> Result<Config, CliError> {
    match path {
        Some(p) => Config::load(p).map_err(CliError::data),
        None => Ok(Config::default()),
    }
}

fn build_pipeline(config: &Config) -> Result<Pipeline, CliError> {
    Ok(Pipeline {
        gateway: config.build_gateway().map_err(CliError::backend)?,
        params: config.decoding_params(),
        predictor: config.build_hop_predictor().map_err(CliError::usage)?,
        retrieval: config.retrieval_config().map_err(CliError::usage)?,
        templates: config.build_templates().map_err(CliError::data)?,
        answer_few_shot: if config.prompts.few_shot_answering {
            config.few_shot_block().map_err(CliError::data)?
        } else {
            None
        },
        variants: config.retrieval.variants,
        budget: config.eval.budget,
    })
}

/// Infers the hop label from names like `qa_dev_2hop.txt` or `2-hop`.
fn infer_hop_label(path: &Path) -> Option<usize> {
    let name = path.file_name()?.to_string_lossy().to_lowercase();
    for h in 1..=9 {
        for sep in ["", "-", "_"] {
            if name.contains(&format!("{h}{sep}hop")) {
                return Some(h);
            }
        }
    }
    None
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Stats { kb } => {
            let g = load_kb(&kb)?;
            println!("{g}");
            Ok(())
        }
        Command::Ask {
            kb,
            question,
            entity,
            hops,
            config,
            trace,
        } => {
            let g = load_kb(&kb)?;
            let config = load_config(&config)?;
            let mut pipeline = build_pipeline(&config)?;
            match hops.as_str() {
                "auto" => {}
                n => {
                    let h: usize = n.parse().map_err(|_| {
                        CliError::usage(format!("--hops must be a number or \"auto\", got {n}"))
                    })?;
                    pipeline.predictor = HopPredictor::Fixed(h);
                }
            }
            let (text, mut entities) = parse_topic_entities(&question).map_err(CliError::data)?;
            for e in entity {
                if !entities.contains(&e) {
                    entities.push(e);
                }
            }
            if entities.is_empty() {
                return Err(CliError::usage(
                    "no topic entity: pass --entity or bracket one in the question",
                ));
            }
            let q = Question {
                id: "cli:1".into(),
                raw: question.clone(),
                text,
                topic_entities: entities,
                gold_answers: vec![],
                hop_label: None,
            };
            let run = pipeline.run(&g, &q).map_err(CliError::backend)?;
            if trace {
                for record in &run.state.trace {
                    println!(
                        "{}",
                        serde_json::to_string(record).expect("trace serializes")
                    );
                }
            }
            for sentence in &run.included_sentences {
                println!("knowledge: {sentence}");
            }
            let shown: Vec<&str> = run
                .answer
                .answers
                .iter()
                .map(|a| a.display.as_str())
                .collect();
            println!(
                "answer: {}",
                if shown.is_empty() {
                    "(none)".into()
                } else {
                    shown.join(", ")
                }
            );
            Ok(())
        }
        Command::Eval {
            kb,
            qa,
            config,
            workers,
            trace,
            report,
            hop_label,
        } => {
            let g = load_kb(&kb)?;
            let config = load_config(&config)?;
            let pipeline = build_pipeline(&config)?;
            let file =
                File::open(&qa).map_err(|e| CliError::data(format!("{}: {e}", qa.display())))?;
            let name = qa
                .file_name()
                .map(|n| n.to_string_lossy().into_owned())
                .unwrap_or_default();
            let label = hop_label.or_else(|| infer_hop_label(&qa));
            let qa_file =
                load_metaqa_qa(BufReader::new(file), &name, label).map_err(CliError::data)?;
            for line in &qa_file.skipped_lines {
                eprintln!("warning: {name} line {line}: no gold answers, skipped");
            }
            let (eval_report, traces) = run_eval(&name, &qa_file.questions, &g, &pipeline, workers)
                .map_err(CliError::data)?;
            if let Some(path) = trace {
                let mut out = File::create(&path)
                    .map_err(|e| CliError::data(format!("{}: {e}", path.display())))?;
                for record in &traces {
                    writeln!(
                        out,
                        "{}",
                        serde_json::to_string(record).expect("trace serializes")
                    )
                    .map_err(CliError::data)?;
                }
            }
            let json = serde_json::to_string_pretty(&eval_report).expect("report serializes");
            match report {
                Some(path) => std::fs::write(&path, json.as_bytes())
                    .map_err(|e| CliError::data(format!("{}: {e}", path.display())))?,
                None => println!("{json}"),
            }
            eprintln!(
                "{}: {} questions, hits@1 = {:.4}",
                eval_report.dataset, eval_report.question_count, eval_report.hits_at_1
            );
            Ok(())
        }
        Command::Cache { action } => match action {
            CacheAction::Show { path } => {
                for record in cache_records(&path).map_err(CliError::data)? {
                    println!(
                        "{}",
                        serde_json::to_string(&record).expect("record serializes")
                    );
                }
                Ok(())
            }
            CacheAction::Clear { path } => {
                if path.exists() {
                    std::fs::remove_file(&path)
                        .map_err(|e| CliError::data(format!("{}: {e}", path.display())))?;
                }
                Ok(())
            }
        },
    }
}
