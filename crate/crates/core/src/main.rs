//! Command-line entry point orchestrating the pipeline end to end.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

use stackbench::config::RunConfig;
use stackbench::context::ContextStyle;
use stackbench::error::{Error, Result};
use stackbench::eval::endpoint::resolve_endpoint;
use stackbench::eval::metrics::to_table;
use stackbench::eval::{Mode, RunOptions};
use stackbench::manifest::Manifest;
use stackbench::pipeline;
use stackbench::triage::routing_table;

#[derive(Parser)]
#[command(name = "stackbench", about = "Stacked-object physics QA benchmark factory and evaluation harness", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ModeArg {
    #[value(name = "zero-shot")]
    ZeroShot,
    #[value(name = "pcb")]
    Pcb,
}

impl From<ModeArg> for Mode {
    fn from(m: ModeArg) -> Mode {
        match m {
            ModeArg::ZeroShot => Mode::ZeroShotCot,
            ModeArg::Pcb => Mode::PcbAugmented,
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum StyleArg {
    Hn,
    Sp,
}

#[derive(Args)]
struct ConfigArgs {
    /// JSON run-config file; flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Generation seed (mandatory for generation commands without --config).
    #[arg(long)]
    seed: Option<u64>,
    /// Number of scenes to generate.
    #[arg(long)]
    count: Option<usize>,
    /// Stability displacement threshold.
    #[arg(long)]
    threshold: Option<f64>,
    /// Discretization bins for structured-physics contexts.
    #[arg(long)]
    bins: Option<u32>,
    /// Maximum stack height (objects per scene).
    #[arg(long)]
    max_stack: Option<usize>,
    /// Train fraction of the train/eval split.
    #[arg(long)]
    split_ratio: Option<f64>,
    /// Output directory for all artifacts.
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

impl ConfigArgs {
    fn resolve(&self, need_seed: bool) -> Result<RunConfig> {
        let mut config = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => {
                let seed = match self.seed {
                    Some(s) => s,
                    None if need_seed => {
                        return Err(Error::Config(
                            "--seed (or --config) is required for generation commands".to_string(),
                        ))
                    }
                    None => 0,
                };
                RunConfig::new(seed, self.count.unwrap_or(100), &self.out)
            }
        };
        if let Some(seed) = self.seed {
            config.seed = seed;
        }
        if let Some(count) = self.count {
            config.scene_count = count;
        }
        if let Some(threshold) = self.threshold {
            config.stability_threshold = threshold;
        }
        if let Some(bins) = self.bins {
            config.bins = bins;
        }
        if let Some(max_stack) = self.max_stack {
            config.max_stack_height = max_stack;
        }
        if let Some(ratio) = self.split_ratio {
            config.split_ratio = ratio;
        }
        if self.config.is_none() || self.out != PathBuf::from("out") {
            config.output_dir = self.out.clone();
        }
        config.validate()?;
        println!("config: {}", config.summary());
        Ok(config)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Generate the scene corpus and manifest.
    GenScenes {
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Generate the QA corpus from an existing manifest.
    GenQa {
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Generate context documents (oracle PCB output).
    GenContext {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long = "context-style", value_enum, default_value = "hn")]
        context_style: StyleArg,
        /// Include stability sentences in static HN contexts.
        #[arg(long = "hn-include-stability")]
        hn_include_stability: bool,
        /// Directory of event-log JSON files (dynamic scenes).
        #[arg(long = "eventlog-dir")]
        eventlog_dir: Option<PathBuf>,
        /// Frames sampled per structured-physics context.
        #[arg(long, default_value_t = 8)]
        frames: usize,
    },
    /// Evaluate the QA corpus against an endpoint.
    Evaluate {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long)]
        endpoint: String,
        #[arg(long, value_enum, default_value = "zero-shot")]
        mode: ModeArg,
        /// Evaluate plain multi-choice items instead of binary reframing.
        #[arg(long = "no-binary-reframe")]
        no_binary_reframe: bool,
        /// Context file produced by gen-context (required for pcb mode).
        #[arg(long = "context-file")]
        context_file: Option<PathBuf>,
        /// Restrict to one metrics group.
        #[arg(long, value_parser = ["sim", "real"])]
        split: Option<String>,
        #[arg(long = "max-parallel", default_value_t = 4)]
        max_parallel: usize,
    },
    /// Aggregate a run file into the stratified metrics report.
    Metrics {
        #[command(flatten)]
        config: ConfigArgs,
        /// Run file (default: <out>/run.jsonl).
        #[arg(long)]
        run: Option<PathBuf>,
    },
    /// Route a generated mixed corpus and report routing-quality scores.
    TriageEval {
        #[command(flatten)]
        config: ConfigArgs,
        /// Remote endpoint; omitted = rule-based router.
        #[arg(long)]
        endpoint: Option<String>,
    },
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::GenScenes { config } => {
            let config = config.resolve(true)?;
            let manifest = pipeline::gen_scenes(&config)?;
            println!(
                "wrote {} scenes and manifest to {}",
                manifest.entries.len(),
                config.output_dir.display()
            );
        }
        Command::GenQa { config } => {
            let config = config.resolve(true)?;
            let manifest = Manifest::load(&config.output_dir.join("manifest.json"))?;
            let items = pipeline::gen_qa(&config, &manifest)?;
            let path = config.output_dir.join("qa.jsonl");
            pipeline::save_qa_corpus(&items, &manifest.config_hash, &path)?;
            println!("wrote {} QA items to {}", items.len(), path.display());
        }
        Command::GenContext {
            config,
            context_style,
            hn_include_stability,
            eventlog_dir,
            frames,
        } => {
            let config = config.resolve(false)?;
            let contexts = match eventlog_dir {
                Some(dir) => {
                    let style = match context_style {
                        StyleArg::Hn => ContextStyle::Hn,
                        StyleArg::Sp => ContextStyle::Sp,
                    };
                    pipeline::gen_dynamic_contexts(&dir, style, frames, config.bins)?
                }
                None => {
                    if context_style == StyleArg::Sp {
                        return Err(Error::Config(
                            "structured-physics contexts require --eventlog-dir".to_string(),
                        ));
                    }
                    let manifest = Manifest::load(&config.output_dir.join("manifest.json"))?;
                    pipeline::gen_static_contexts(&manifest, hn_include_stability)?
                }
            };
            let path = config.output_dir.join("contexts.json");
            pipeline::save_contexts(&contexts, &path)?;
            println!("wrote {} contexts to {}", contexts.len(), path.display());
        }
        Command::Evaluate {
            config,
            endpoint,
            mode,
            no_binary_reframe,
            context_file,
            split,
            max_parallel,
        } => {
            let config = config.resolve(false)?;
            let (header, items) = pipeline::load_qa_corpus(&config.output_dir.join("qa.jsonl"))?;
            let items = pipeline::filter_group(&pipeline::eval_subset(&items), split.as_deref());
            let mode: Mode = mode.into();
            let contexts = match (&context_file, mode) {
                (Some(path), _) => Some(pipeline::load_contexts(path)?),
                (None, Mode::PcbAugmented) => {
                    Some(pipeline::load_contexts(&config.output_dir.join("contexts.json"))?)
                }
                (None, Mode::ZeroShotCot) => None,
            };
            let resolved = resolve_endpoint(&endpoint, &config.endpoints)?;
            let opts = RunOptions {
                mode,
                reframe: !no_binary_reframe,
                max_parallel,
                endpoint_id: resolved.id(),
                dataset_hash: header.dataset_hash.clone(),
                config_hash: header.config_hash.clone(),
            };
            let run_path = config.output_dir.join("run.jsonl");
            let records = pipeline::evaluate(
                &items,
                contexts.as_ref(),
                resolved.as_ref(),
                &opts,
                Some(&run_path),
            )?;
            println!(
                "evaluated {} items ({} transactions) -> {}",
                items.len(),
                records.len(),
                run_path.display()
            );
        }
        Command::Metrics { config, run } => {
            let config = config.resolve(false)?;
            let run_path = run.unwrap_or_else(|| config.output_dir.join("run.jsonl"));
            let corpus_path = config.output_dir.join("qa.jsonl");
            let report = pipeline::metrics_for_run(&run_path, &corpus_path)?;
            let report_path = config.output_dir.join("metrics.json");
            std::fs::write(&report_path, report.to_canonical_json()?)?;
            print!("{}", to_table(&report));
            println!("wrote {}", report_path.display());
        }
        Command::TriageEval { config, endpoint } => {
            let config = config.resolve(true)?;
            let remote = endpoint
                .map(|name| resolve_endpoint(&name, &config.endpoints))
                .transpose()?;
            let (decisions, score) = pipeline::triage_eval(
                config.seed,
                config.scene_count,
                remote.as_deref(),
            )?;
            std::fs::create_dir_all(&config.output_dir)?;
            let path = config.output_dir.join("routing.jsonl");
            pipeline::save_decisions(&decisions, &path)?;
            print!("{}", routing_table(&score));
            println!("wrote {}", path.display());
        }
    }
    Ok(())
}

fn main() {
    let cli = Cli::parse();
    if let Err(err) = run(cli) {
        eprintln!("error: {err}");
        std::process::exit(err.exit_code());
    }
}
