use aide_core::catalog;
use aide_core::config::AideConfig;
use aide_core::corpus::{self, CorpusSpec, LabeledDraft};
use aide_core::harness::{
    self, ablate_retrieval, class_index, run_error_analysis, run_eval, AblationQuery,
    EvalOptions, RetrievalMethod, ScenarioEntry,
};
use aide_core::perception::MockPerception;
use aide_core::planner::{run_closed_loop, HintResponder, NoHuman};
use aide_core::simulator::{self, World};
use aide_core::space::{read_drafts, write_drafts, RelationshipSpace};
use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use std::path::{Path, PathBuf};

#[derive(Parser)]
#[command(name = "aide", version, about = "Affordance-aware closed-loop task planning")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

/// Flags shared by every subcommand; each overrides the config file.
#[derive(Args)]
struct Global {
    /// Config document (schema "aide-config/1").
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Mock perception noise level.
    #[arg(long, global = true)]
    noise: Option<f64>,
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Relationship space document.
    #[arg(long, global = true)]
    space: Option<PathBuf>,
    /// Directory of scenario worlds.
    #[arg(long, global = true)]
    scenarios: Option<PathBuf>,
    /// Report path; extensions are replaced per artifact.
    #[arg(long, global = true)]
    report: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic instruction corpus as line-delimited drafts.
    GenCorpus {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 432)]
        size: usize,
        #[arg(long, default_value_t = catalog::CORPUS_CLASS_COUNT)]
        classes: usize,
    },
    /// Build and save a relationship space from a draft file.
    BuildSpace {
        #[arg(long)]
        corpus: PathBuf,
    },
    /// Batch evaluation over scenario worlds.
    Eval {
        #[arg(long, default_value_t = 1)]
        repeats: usize,
        /// Leave RequestHuman unanswered instead of using hint tables.
        #[arg(long)]
        no_hints: bool,
    },
    /// Compare retrieval methods over held-out synthetic queries.
    AblateRetrieval {
        #[arg(long, default_value = "affordance")]
        method: RetrievalMethod,
        #[arg(long, value_delimiter = ',', default_value = "0,10,20,30,40")]
        thresholds: Vec<f64>,
        #[arg(long, default_value_t = 432)]
        size: usize,
        #[arg(long, default_value_t = 1000)]
        queries: usize,
    },
    /// Tool-removal and reasoner-miss runs; reports EDR and ERR.
    ErrorAnalysis {
        #[arg(long, default_value_t = 1)]
        repeats: usize,
    },
    /// Run one episode and print its event log.
    RunEpisode {
        /// World document; `--id` picks a built-in world instead.
        #[arg(long, conflicts_with = "id")]
        world: Option<PathBuf>,
        #[arg(long)]
        id: Option<String>,
        /// Replace the world's instruction.
        #[arg(long)]
        task: Option<String>,
        /// Answer RequestHuman on the console.
        #[arg(long)]
        interactive: bool,
    },
    /// Write every built-in world as a JSON document.
    ExportScenarios {
        #[arg(long)]
        out: PathBuf,
    },
}

struct Settings {
    config: AideConfig,
    space: Option<PathBuf>,
    scenarios: Option<PathBuf>,
    report: Option<PathBuf>,
}

fn settings(g: Global) -> Result<Settings> {
    let mut config = match &g.config {
        Some(p) => AideConfig::load(p).with_context(|| format!("loading {}", p.display()))?,
        None => AideConfig::default(),
    };
    config.seed = g.seed.unwrap_or(config.seed);
    config.noise = g.noise.unwrap_or(config.noise);
    config.workers = g.workers.unwrap_or(config.workers);
    if config.noise < 0.0 {
        bail!("noise must be non-negative");
    }
    Ok(Settings {
        space: g.space.or(config.paths.space.clone()),
        scenarios: g.scenarios.or(config.paths.scenarios.clone()),
        report: g.report.or(config.paths.report.clone()),
        config,
    })
}

fn corpus_spec(s: &Settings, size: usize, classes: usize, seed: u64) -> CorpusSpec {
    CorpusSpec::new(size, s.config.params.dims, classes, s.config.params.subclusters, seed)
}

fn generate(spec: &CorpusSpec) -> Result<Vec<LabeledDraft>> {
    corpus::gen_corpus(spec).map_err(anyhow::Error::msg)
}

/// The saved space, or a default synthetic one built from the seed.
fn space(s: &Settings) -> Result<RelationshipSpace> {
    if let Some(p) = &s.space {
        return RelationshipSpace::load(p).with_context(|| format!("loading space {}", p.display()));
    }
    let spec = corpus_spec(s, 432, catalog::CORPUS_CLASS_COUNT, s.config.seed);
    let drafts = corpus::drafts(&generate(&spec)?);
    Ok(RelationshipSpace::build(drafts, &s.config.params, s.config.seed)?)
}

fn scenarios(s: &Settings) -> Result<Vec<ScenarioEntry>> {
    match &s.scenarios {
        Some(dir) => harness::load_scenarios(dir).with_context(|| format!("reading {}", dir.display())),
        None => Ok(harness::entries(simulator::scripted_scenarios())),
    }
}

fn options(s: &Settings) -> EvalOptions {
    EvalOptions {
        params: s.config.params.clone(),
        noise: s.config.noise,
        seed: s.config.seed,
        repeats: 1,
        workers: s.config.workers,
        max_steps: s.config.max_steps,
        use_hints: true,
    }
}

fn builtin_worlds() -> Vec<World> {
    let mut all = simulator::scripted_scenarios();
    all.extend(simulator::removal_scenarios());
    all.extend(simulator::reasoner_miss_scenarios());
    all.extend(simulator::hintless_scenarios());
    all.push(simulator::unreachable_world());
    all
}

fn write_or_print(path: Option<&Path>, ext: &str, text: &str) -> Result<()> {
    match path {
        Some(p) => {
            let out = p.with_extension(ext);
            if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(dir)?;
            }
            std::fs::write(&out, text).with_context(|| format!("writing {}", out.display()))?;
            eprintln!("wrote {}", out.display());
        }
        None => print!("{text}"),
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    let s = settings(cli.global)?;
    match cli.command {
        Command::GenCorpus { out, size, classes } => {
            let labeled = generate(&corpus_spec(&s, size, classes, s.config.seed))?;
            write_drafts(&out, &corpus::drafts(&labeled))?;
            eprintln!("wrote {} drafts to {}", labeled.len(), out.display());
        }
        Command::BuildSpace { corpus } => {
            let Some(out) = &s.space else {
                bail!("--space names the output file");
            };
            let drafts = read_drafts(&corpus).with_context(|| format!("reading {}", corpus.display()))?;
            let built = RelationshipSpace::build(drafts, &s.config.params, s.config.seed)?;
            built.save(out)?;
            eprintln!("wrote {} records in {} clusters to {}", built.record_count(), built.clusters().len(), out.display());
        }
        Command::Eval { repeats, no_hints } => {
            let space = space(&s)?;
            let opts = EvalOptions { repeats, use_hints: !no_hints, ..options(&s) };
            let out = run_eval(&space, &scenarios(&s)?, &opts);
            match &s.report {
                Some(p) => {
                    harness::write_report(p, &out)?;
                    eprintln!("wrote {}", p.with_extension("md").display());
                }
                None => print!("{}", out.report.to_table()),
            }
        }
        Command::AblateRetrieval { method, thresholds, size, queries } => {
            let labeled = generate(&corpus_spec(&s, size, catalog::CORPUS_CLASS_COUNT, s.config.seed))?;
            let built = RelationshipSpace::build(corpus::drafts(&labeled), &s.config.params, s.config.seed)?;
            let held_out = generate(&corpus_spec(&s, queries, catalog::CORPUS_CLASS_COUNT, s.config.seed.wrapping_add(1)))?;
            let table = ablate_retrieval(&built, &AblationQuery::from_drafts(&held_out), &class_index(&labeled), method, &thresholds);
            write_or_print(s.report.as_deref(), "md", &table.to_table())?;
        }
        Command::ErrorAnalysis { repeats } => {
            let space = space(&s)?;
            let (removal, misses) = match &s.scenarios {
                Some(dir) => simulator::load_dir(dir)?
                    .into_iter()
                    .partition(|w| !w.events.is_empty()),
                None => (simulator::removal_scenarios(), simulator::reasoner_miss_scenarios()),
            };
            let opts = EvalOptions { repeats, ..options(&s) };
            let report = run_error_analysis(&space, &removal, &misses, &opts);
            write_or_print(s.report.as_deref(), "md", &report.to_table())?;
        }
        Command::RunEpisode { world, id, task, interactive } => {
            let mut w = match (world, id) {
                (Some(p), _) => World::load(&p)?,
                (None, Some(id)) => builtin_worlds()
                    .into_iter()
                    .find(|w| w.id == id)
                    .with_context(|| format!("no built-in world {id:?}"))?,
                (None, None) => bail!("pass --world <file> or --id <name>"),
            };
            if let Some(t) = task {
                w = w.with_task(&t);
            }
            let space = space(&s)?;
            let params = &s.config.params;
            let perception = MockPerception::new(s.config.seed, s.config.noise, params.dims);
            let steps = s.config.max_steps;
            let trace = if interactive {
                let stdin = std::io::stdin();
                harness::interactive_episode(&mut w, &space, params, &perception, steps, stdin.lock(), std::io::stderr())
            } else if w.human_hints.is_empty() {
                run_closed_loop(&mut w, &space, params, &perception, steps, &mut NoHuman)
            } else {
                run_closed_loop(&mut w, &space, params, &perception, steps, &mut HintResponder)
            };
            write_or_print(s.report.as_deref(), "jsonl", &trace.to_jsonl())?;
            let flags = simulator::check_success(&trace, &w);
            eprintln!(
                "{}: {:?} after {} ticks, {} MSI runs, whole success {}",
                w.id,
                trace.status,
                trace.ticks(),
                trace.msi_runs,
                flags.whole
            );
        }
        Command::ExportScenarios { out } => {
            let worlds = builtin_worlds();
            simulator::export(&out, &worlds)?;
            eprintln!("wrote {} worlds to {}", worlds.len(), out.display());
        }
    }
    Ok(())
}

fn main() -> Result<()> {
    run(Cli::parse())
}
