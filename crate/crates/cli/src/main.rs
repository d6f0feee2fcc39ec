use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::json;

use slumroad::env::{BudgetMode, EnvConfig};
use slumroad::geometry::{build_planar_graph, parse_slum, solution_space_log10};
use slumroad::harness::{
    ablate, brute_force_oracle, compare, export_plan_geojson, generate_synthetic, import_plan_geojson, prepare_graph, render_svg, write_comparison,
    ExperimentConfig, PlannerId, SyntheticSpec, Variant, LEARNED,
};
use slumroad::nn::Params;
use slumroad::plan::PlanReport;
use slumroad::state::{Slum, SlumGraph};
use slumroad::trainer::{infer_plan, train, TrainConfig};
use slumroad::{baselines, Error, Result};

#[derive(Parser)]
#[command(name = "slumroad", version, about = "Road planning for informal settlements")]
struct Cli {
    /// Log progress to stderr.
    #[arg(short, long, global = true)]
    verbose: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build, simplify and normalize the planar graph of a GeoJSON slum.
    Ingest {
        input: PathBuf,
        #[arg(long)]
        merge_eps: Option<f64>,
        /// Graph document destination; stdout when absent.
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Write a synthetic grid slum as GeoJSON.
    Generate {
        #[arg(long, default_value_t = 3)]
        rows: usize,
        #[arg(long, default_value_t = 3)]
        cols: usize,
        #[arg(long, default_value_t = 0.0)]
        jitter: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Train the policy and save the best checkpoint.
    Train {
        #[command(flatten)]
        slum: SlumArgs,
        #[command(flatten)]
        env: EnvArgs,
        #[arg(long)]
        iterations: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(short, long)]
        output: PathBuf,
        /// Per-iteration records as line-delimited JSON.
        #[arg(long)]
        records: Option<PathBuf>,
    },
    /// Plan greedily with a trained checkpoint.
    Plan {
        #[command(flatten)]
        slum: SlumArgs,
        #[command(flatten)]
        env: EnvArgs,
        #[arg(long)]
        checkpoint: PathBuf,
        /// Feature group to zero at inference; repeatable.
        #[arg(long = "zero")]
        zero: Vec<String>,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Plan with a baseline (`random`, `greedy_a`, `greedy_c`, `mst`,
    /// `ga_generative`, `ga_swap`, `hs_mc`; append `_unmasked` to drop
    /// the mask).
    Baseline {
        #[command(flatten)]
        slum: SlumArgs,
        #[command(flatten)]
        env: EnvArgs,
        #[arg(long)]
        kind: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Run every configured planner over every configured seed.
    Compare {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Draw a plan as SVG and optionally export it as GeoJSON.
    Render {
        #[command(flatten)]
        slum: SlumArgs,
        /// A plan report (JSON) or an exported plan (GeoJSON).
        #[arg(long)]
        plan: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
        #[arg(long)]
        geojson: Option<PathBuf>,
    },
    /// Compare the learned planner with one component removed.
    Ablate {
        #[arg(long)]
        config: PathBuf,
        /// `zero-feature:<name>`, `no-n2e`, `no-f2e`, `no-e2e`,
        /// `no-propagation` or `no-mask`.
        #[arg(long)]
        variant: String,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Exhaustive optimum for small instances.
    Oracle {
        #[command(flatten)]
        slum: SlumArgs,
        #[command(flatten)]
        env: EnvArgs,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
}

#[derive(Args)]
struct SlumArgs {
    /// Experiment config; its [slum], [env], [train] and [baselines]
    /// sections are the defaults for the other flags.
    #[arg(long)]
    config: Option<PathBuf>,
    /// GeoJSON geometry or graph document.
    #[arg(long, conflicts_with = "synthetic")]
    slum: Option<PathBuf>,
    /// Synthetic grid as ROWSxCOLS.
    #[arg(long)]
    synthetic: Option<String>,
    #[arg(long, default_value_t = 0.0)]
    jitter: f64,
    #[arg(long, default_value_t = 0)]
    grid_seed: u64,
    #[arg(long)]
    merge_eps: Option<f64>,
}

#[derive(Args)]
struct EnvArgs {
    /// Segment count, or cost with `--cost-budget`.
    #[arg(long)]
    budget: Option<f64>,
    #[arg(long)]
    cost_budget: bool,
    #[arg(long)]
    no_mask: bool,
    #[arg(long)]
    relax_deadlock: bool,
}

impl EnvArgs {
    fn apply(&self, env: &mut EnvConfig) {
        if self.budget.is_some() {
            env.budget = self.budget;
        }
        if self.cost_budget {
            env.budget_mode = BudgetMode::ConstructionCost;
        }
        env.masking &= !self.no_mask;
        env.relax_deadlock |= self.relax_deadlock;
    }
}

fn parse_grid(s: &str) -> Result<(usize, usize)> {
    let bad = || Error::Config(format!("--synthetic expects ROWSxCOLS, got {s}"));
    let (r, c) = s.split_once(['x', 'X']).ok_or_else(bad)?;
    Ok((r.trim().parse().map_err(|_| bad())?, c.trim().parse().map_err(|_| bad())?))
}

impl SlumArgs {
    fn experiment(&self) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(p) => ExperimentConfig::from_file(p)?,
            None => ExperimentConfig::default(),
        };
        if let Some(p) = &self.slum {
            cfg.slum.path = Some(p.clone());
            cfg.slum.synthetic = None;
        }
        if let Some(s) = &self.synthetic {
            let (rows, cols) = parse_grid(s)?;
            cfg.slum.path = None;
            cfg.slum.synthetic = Some(SyntheticSpec { rows, cols, jitter: self.jitter, seed: self.grid_seed });
        }
        if self.merge_eps.is_some() {
            cfg.slum.merge_eps = self.merge_eps;
        }
        Ok(cfg)
    }
}

fn load(slum: &SlumArgs, env: Option<&EnvArgs>) -> Result<(ExperimentConfig, Arc<Slum>)> {
    let mut cfg = slum.experiment()?;
    if let Some(e) = env {
        e.apply(&mut cfg.env);
    }
    let s = cfg.slum.load()?;
    Ok((cfg, s))
}

fn emit(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => {
            if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(dir)?;
            }
            Ok(std::fs::write(p, text)?)
        }
        None => {
            let mut out = std::io::stdout().lock();
            match writeln!(out, "{}", text.trim_end()) {
                Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => Ok(()),
                r => Ok(r?),
            }
        }
    }
}

fn to_json<T: Serialize>(value: &T) -> Result<String> {
    Ok(serde_json::to_string_pretty(value)?)
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Ingest { input, merge_eps, output } => {
            let raw = build_planar_graph(&parse_slum(&std::fs::read_to_string(&input)?)?)?;
            let (graph, _) = prepare_graph(&raw, merge_eps)?;
            let id = input.file_stem().and_then(|s| s.to_str()).unwrap_or("slum").to_owned();
            let slum = Slum::new(id.clone(), graph.clone())?;
            let state = SlumGraph::new(Arc::clone(&slum));
            let n = slum.candidates.len() as u64;
            let k = EnvConfig::default().resolve_budget(&slum)? as u64;
            let summary = json!({
                "slum": id,
                "nodes": slum.node_count(),
                "edges": slum.edge_count(),
                "faces": slum.face_count(),
                "candidates": n,
                "unconnected_at_reset": state.unconnected_count(),
                "disconnection_ratio": state.unconnected_count() as f64 / slum.face_count() as f64,
                "default_budget": k,
                "solution_space_log10": solution_space_log10(n, k)?,
            });
            match output {
                Some(p) => {
                    emit(Some(&p), &to_json(&graph.to_document(Some(id)))?)?;
                    println!("{}", summary);
                }
                None => emit(None, &to_json(&graph.to_document(Some(id)))?)?,
            }
        }
        Command::Generate { rows, cols, jitter, seed, output } => {
            let geometry = generate_synthetic(rows, cols, jitter, seed)?;
            emit(output.as_deref(), &to_json(&slumroad::geometry::to_geojson(&geometry))?)?;
        }
        Command::Train { slum, env, iterations, seed, output, records } => {
            let (mut cfg, s) = load(&slum, Some(&env))?;
            let train_cfg = TrainConfig {
                max_iterations: iterations.unwrap_or(cfg.train.max_iterations),
                seed: seed.unwrap_or(cfg.train.seed),
                ..std::mem::take(&mut cfg.train)
            };
            let outcome = train(&s, &cfg.env, &train_cfg)?;
            emit(Some(&output), &outcome.best.to_json())?;
            if let Some(p) = records {
                let lines: Vec<String> = outcome.records.iter().map(serde_json::to_string).collect::<std::result::Result<_, _>>()?;
                emit(Some(&p), &(lines.join("\n") + "\n"))?;
            }
            let report = infer_plan(&s, &cfg.env, &outcome.best, &[], LEARNED)?;
            println!(
                "{}",
                json!({ "best_iteration": outcome.best_iteration, "iterations": outcome.records.len(), "nr": report.nr, "ad": report.ad, "sc": report.sc })
            );
        }
        Command::Plan { slum, env, checkpoint, zero, output } => {
            let (cfg, s) = load(&slum, Some(&env))?;
            let params = Params::from_json(&std::fs::read_to_string(&checkpoint)?)?;
            let report = infer_plan(&s, &cfg.env, &params, &zero, LEARNED)?;
            emit(output.as_deref(), &to_json(&report)?)?;
        }
        Command::Baseline { slum, env, kind, seed, output } => {
            let (cfg, s) = load(&slum, Some(&env))?;
            let PlannerId::Baseline { kind, masked } = PlannerId::parse(&kind)? else {
                return Err(Error::UnknownVariant(format!("{kind} is not a baseline")));
            };
            let report = baselines::run_baseline(&s, &cfg.env, &cfg.baselines.spec(kind, masked, seed))?;
            emit(output.as_deref(), &to_json(&report)?)?;
        }
        Command::Compare { config, output } => {
            let mut cfg = ExperimentConfig::from_file(&config)?;
            if let Some(dir) = output {
                cfg.output.dir = dir;
            }
            let s = cfg.slum.load()?;
            let cmp = compare(&cfg, &s)?;
            write_comparison(&cmp, &cfg, &s, &cfg.output.dir)?;
            println!("{}", serde_json::to_string(&cmp.summary)?);
        }
        Command::Render { slum, plan, output, geojson } => {
            let (_, s) = load(&slum, None)?;
            let text = std::fs::read_to_string(&plan)?;
            let edges = match serde_json::from_str::<PlanReport>(&text) {
                Ok(report) => report.edges(),
                Err(_) => import_plan_geojson(&text)?,
            };
            if let Some(&e) = edges.iter().find(|&&e| e >= s.edge_count()) {
                return Err(Error::InvalidAction { edge: e, reason: "not an edge of this slum".into() });
            }
            emit(Some(&output), &render_svg(&s, &edges)?)?;
            if let Some(p) = geojson {
                emit(Some(&p), &to_json(&export_plan_geojson(&s, &edges)?)?)?;
            }
        }
        Command::Ablate { config, variant, checkpoint, output } => {
            let cfg = ExperimentConfig::from_file(&config)?;
            let variant = Variant::parse(&variant)?;
            let s = cfg.slum.load()?;
            let params = checkpoint.map(|p| std::fs::read_to_string(p).map_err(Error::from).and_then(|t| Params::from_json(&t))).transpose()?;
            let result = ablate(&cfg, &s, &variant, params.as_ref())?;
            emit(output.as_deref(), &to_json(&result)?)?;
        }
        Command::Oracle { slum, env, output } => {
            let (cfg, s) = load(&slum, Some(&env))?;
            if cfg.env.budget_mode != BudgetMode::SegmentCount {
                return Err(Error::Config("the oracle enumerates segment-count budgets only".into()));
            }
            let budget = cfg.env.resolve_budget(&s)? as usize;
            emit(output.as_deref(), &to_json(&brute_force_oracle(&s, budget)?)?)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = if cli.verbose { "info" } else { "warn" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", json!({ "error": e.kind(), "message": e.to_string() }));
            ExitCode::FAILURE
        }
    }
}
