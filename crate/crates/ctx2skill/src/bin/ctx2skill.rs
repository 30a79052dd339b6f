//! Command-line entry point: corpus ingestion, self-play, replay
//! selection, held-out evaluation, quality scoring, and trace analytics.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde_json::json;

use ctx2skill::agents::AgentRunner;
use ctx2skill::analytics::{self, SelectionInfo};
use ctx2skill::config::RunConfig;
use ctx2skill::corpus::{ingest, Corpus};
use ctx2skill::engine::{read_trace, SelfPlayEngine};
use ctx2skill::eval::{
    aggregate_report, resolve_condition, write_report, EvalHarness, SkillCondition,
};
use ctx2skill::model::ContextBundle;
use ctx2skill::replay::{ReplayReport, ReplayRunner};
use ctx2skill::skills::{Side, SkillStore};

#[derive(Parser)]
#[command(name = "ctx2skill", version, about = "Self-play skill synthesis for context learning")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the self-play loop over every context in the corpus (resumable).
    Generate {
        /// Corpus JSON file.
        #[arg(long)]
        corpus: PathBuf,
        /// Run configuration TOML file.
        #[arg(long)]
        config: PathBuf,
    },
    /// Cross-time replay: score candidate skill versions and select one per context.
    Select {
        /// Corpus JSON file.
        #[arg(long)]
        corpus: PathBuf,
        /// Run configuration TOML file.
        #[arg(long)]
        config: PathBuf,
    },
    /// Evaluate held-out tasks under a skill condition and write a report.
    Evaluate {
        /// Corpus JSON file.
        #[arg(long)]
        corpus: PathBuf,
        /// Run configuration TOML file.
        #[arg(long)]
        config: PathBuf,
        /// Skill condition: none, selected, iter:K, or file:PATH.
        #[arg(long)]
        skills: String,
    },
    /// Score each context's selected (or latest) skill set on the five quality dimensions.
    Quality {
        /// Corpus JSON file.
        #[arg(long)]
        corpus: PathBuf,
        /// Run configuration TOML file.
        #[arg(long)]
        config: PathBuf,
    },
    /// Recompute self-play dynamics tables from the workspace traces.
    Stats {
        /// Workspace directory holding per-context traces.
        #[arg(long)]
        workspace: PathBuf,
    },
    /// One-shot skill generation per context, stored as external skill files.
    BaselinePrompting {
        /// Corpus JSON file.
        #[arg(long)]
        corpus: PathBuf,
        /// Run configuration TOML file.
        #[arg(long)]
        config: PathBuf,
    },
}

fn parse_skill_condition(spec: &str) -> Result<SkillCondition, String> {
    match spec {
        "none" => Ok(SkillCondition::None),
        "selected" => Ok(SkillCondition::Selected),
        other => {
            if let Some(k) = other.strip_prefix("iter:") {
                k.parse()
                    .map(SkillCondition::FixedIteration)
                    .map_err(|_| format!("invalid iteration in --skills {other:?}"))
            } else if let Some(p) = other.strip_prefix("file:") {
                Ok(SkillCondition::ExternalFile(PathBuf::from(p)))
            } else {
                Err(format!(
                    "invalid --skills {other:?}: expected none, selected, iter:K, or file:PATH"
                ))
            }
        }
    }
}

/// Runs `f` over the contexts in waves of at most `cap` threads, keeping
/// corpus order in the collected results.
fn run_parallel<T: Send>(
    contexts: &[ContextBundle],
    cap: usize,
    f: impl Fn(&ContextBundle) -> Result<T, anyhow::Error> + Sync,
) -> Result<Vec<T>, anyhow::Error> {
    let mut results = Vec::with_capacity(contexts.len());
    for chunk in contexts.chunks(cap.max(1)) {
        let wave: Vec<Result<T, anyhow::Error>> = std::thread::scope(|scope| {
            let handles: Vec<_> = chunk.iter().map(|ctx| scope.spawn(|| f(ctx))).collect();
            handles
                .into_iter()
                .map(|h| match h.join() {
                    Ok(r) => r,
                    Err(_) => Err(anyhow::anyhow!("worker thread panicked")),
                })
                .collect()
        });
        for r in wave {
            results.push(r?);
        }
    }
    Ok(results)
}

fn load_inputs(corpus: &Path, config: &Path) -> Result<(Corpus, RunConfig), anyhow::Error> {
    let corpus = ingest(corpus)?;
    let config = RunConfig::load(config)?;
    Ok((corpus, config))
}

fn build_runner(config: &RunConfig) -> Result<(ctx2skill::provider::Gateway, ctx2skill::agents::TemplateSet), anyhow::Error> {
    let gateway = config.build_gateway()?;
    let templates = match &config.templates_dir {
        Some(dir) => ctx2skill::agents::TemplateSet::with_overrides(dir)?,
        None => ctx2skill::agents::TemplateSet::builtin(),
    };
    Ok((gateway, templates))
}

fn cmd_generate(corpus_path: &Path, config_path: &Path) -> Result<(), anyhow::Error> {
    let (corpus, config) = load_inputs(corpus_path, config_path)?;
    let (gateway, templates) = build_runner(&config)?;
    let runner = AgentRunner::new(&gateway, templates, config.bindings());
    let engine = SelfPlayEngine::new(
        &runner,
        &config.workspace,
        config.iterations,
        config.batch_size,
        config.deterministic(),
        config.abort_on_generation_error,
    );
    let outcomes = run_parallel(&corpus.contexts, config.parallelism_cap as usize, |ctx| {
        Ok(engine.run_context(ctx)?)
    })?;
    for (ctx, outcome) in corpus.contexts.iter().zip(&outcomes) {
        log::info!(
            "{}: {} iterations, {} hard / {} easy probes",
            ctx.context_id,
            outcome.completed_iterations,
            outcome.probes.hard.len(),
            outcome.probes.easy.len()
        );
    }
    Ok(())
}

fn cmd_select(corpus_path: &Path, config_path: &Path) -> Result<(), anyhow::Error> {
    let (corpus, config) = load_inputs(corpus_path, config_path)?;
    let (gateway, templates) = build_runner(&config)?;
    let runner = AgentRunner::new(&gateway, templates, config.bindings());
    let store = SkillStore::new(&config.workspace);
    let replay = ReplayRunner::new(&runner, &store, &config.workspace);
    let workspace = config.workspace.clone();
    let iterations = config.iterations;
    let reports = run_parallel(&corpus.contexts, config.parallelism_cap as usize, |ctx| {
        let probes = SelfPlayEngine::load_probes(&workspace, &ctx.context_id)?;
        Ok(replay.run(ctx, &probes, iterations)?)
    })?;
    for report in &reports {
        log::info!(
            "{}: selected iteration {}",
            report.context_id,
            report.selected_iteration
        );
    }
    Ok(())
}

fn cmd_evaluate(
    corpus_path: &Path,
    config_path: &Path,
    skills_spec: &str,
) -> Result<(), anyhow::Error> {
    let condition = parse_skill_condition(skills_spec).map_err(|m| anyhow::anyhow!(m))?;
    let (corpus, config) = load_inputs(corpus_path, config_path)?;
    let (gateway, templates) = build_runner(&config)?;
    let runner = AgentRunner::new(&gateway, templates, config.bindings());
    let store = SkillStore::new(&config.workspace);
    let harness = EvalHarness::new(&runner);
    let label = condition.label();
    let workspace = config.workspace.clone();
    let evals = run_parallel(&corpus.contexts, config.parallelism_cap as usize, |ctx| {
        let skills = resolve_condition(&condition, &store, &workspace, &ctx.context_id)?;
        Ok(harness.evaluate_context(ctx, &skills, &label)?)
    })?;
    for eval in &evals {
        if eval.judged() == 0 {
            anyhow::bail!("context {} produced zero judged tasks", eval.context_id);
        }
    }
    let report = aggregate_report(&evals, &label)?;
    let out_dir = config.workspace.join("eval").join(&label);
    write_report(&report, &out_dir)?;
    println!(
        "{}: {} / {} solved ({:.1}%), report at {}",
        label,
        report.overall_solved,
        report.overall_judged,
        ctx2skill::eval::display_rate(report.overall_solved, report.overall_judged),
        out_dir.display()
    );
    Ok(())
}

fn cmd_quality(corpus_path: &Path, config_path: &Path) -> Result<(), anyhow::Error> {
    let (corpus, config) = load_inputs(corpus_path, config_path)?;
    let (gateway, templates) = build_runner(&config)?;
    let runner = AgentRunner::new(&gateway, templates, config.bindings());
    let store = SkillStore::new(&config.workspace);
    let workspace = config.workspace.clone();
    run_parallel(&corpus.contexts, config.parallelism_cap as usize, |ctx| {
        let ctx_id = &ctx.context_id;
        // Prefer the replay-selected version; fall back to the latest.
        let iteration = match std::fs::read_to_string(
            ReplayRunner::report_path(&workspace, ctx_id),
        ) {
            Ok(raw) => serde_json::from_str::<ReplayReport>(&raw)?.selected_iteration,
            Err(_) => store
                .latest_iteration(ctx_id, Side::Reasoner)?
                .ok_or_else(|| anyhow::anyhow!("no skill versions for {ctx_id}; run generate first"))?,
        };
        let skills = store.load_version(ctx_id, Side::Reasoner, iteration)?;
        if skills.is_empty() {
            log::warn!("{ctx_id}: skill set at iteration {iteration} is empty, skipping");
            return Ok(());
        }
        let scores = runner.evaluate_skill_quality(ctx, &skills, &format!("quality/{ctx_id}"))?;
        let path = workspace.join(ctx_id).join("quality.json");
        let body = serde_json::to_string_pretty(&json!({
            "context_id": ctx_id,
            "iteration": iteration,
            "scores": scores,
            "normalized": scores.normalized(),
        }))?;
        std::fs::write(&path, body)?;
        println!("{ctx_id}: quality scores at {}", path.display());
        Ok(())
    })?;
    Ok(())
}

fn cmd_stats(workspace: &Path) -> Result<(), anyhow::Error> {
    let mut traces = Vec::new();
    let mut selections = Vec::new();
    let mut entries: Vec<PathBuf> = std::fs::read_dir(workspace)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_dir())
        .collect();
    entries.sort();
    for dir in entries {
        let trace_path = dir.join("trace.jsonl");
        if trace_path.exists() {
            traces.push(read_trace(&trace_path)?);
        }
        let replay_path = dir.join("replay.json");
        if replay_path.exists() {
            let report: ReplayReport =
                serde_json::from_str(&std::fs::read_to_string(&replay_path)?)?;
            let selected = std::fs::read_to_string(dir.join("selected.md")).unwrap_or_default();
            selections.push(SelectionInfo {
                selected_iteration: report.selected_iteration,
                selected_skill_words: analytics::word_count(&selected),
            });
        }
    }
    let report = analytics::compute_dynamics(&traces, &selections)?;
    analytics::write_dynamics(&report, workspace)?;
    println!(
        "dynamics over {} contexts written to {}",
        traces.len(),
        workspace.display()
    );
    Ok(())
}

fn cmd_baseline(corpus_path: &Path, config_path: &Path) -> Result<(), anyhow::Error> {
    let (corpus, config) = load_inputs(corpus_path, config_path)?;
    let (gateway, templates) = build_runner(&config)?;
    let runner = AgentRunner::new(&gateway, templates, config.bindings());
    let workspace = config.workspace.clone();
    run_parallel(&corpus.contexts, config.parallelism_cap as usize, |ctx| {
        let ctx_id = &ctx.context_id;
        let text = runner.prompting_baseline(ctx, &format!("prompting/{ctx_id}"))?;
        let dir = workspace.join(ctx_id);
        std::fs::create_dir_all(&dir)?;
        let path = dir.join("baseline_skill.md");
        std::fs::write(&path, text)?;
        println!("{ctx_id}: baseline skill at {}", path.display());
        Ok(())
    })?;
    Ok(())
}

fn main() -> ExitCode {
    env_logger::init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Generate { corpus, config } => cmd_generate(corpus, config),
        Command::Select { corpus, config } => cmd_select(corpus, config),
        Command::Evaluate {
            corpus,
            config,
            skills,
        } => cmd_evaluate(corpus, config, skills),
        Command::Quality { corpus, config } => cmd_quality(corpus, config),
        Command::Stats { workspace } => cmd_stats(workspace),
        Command::BaselinePrompting { corpus, config } => cmd_baseline(corpus, config),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("{}", json!({ "error": err.to_string() }));
            ExitCode::FAILURE
        }
    }
}
