mod config;
mod error;
mod render;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::{json, Value};

use scl_core::align::correspond;
use scl_core::depgraph::{is_dag, oracle_graph, threshold_graph, DependencyGraph, DEFAULT_TSTAR};
use scl_core::geometry::{default_catalog, Catalog};
use scl_core::graphnet::encoding::PositionalEncoderConfig;
use scl_core::graphnet::{initial_graph, load_weights, predict, save_weights, train_on_dataset, ModelConfig, ModelParams, PositionalEncoder, TrainConfig};
use scl_core::planexec::{report, run_dataset, scl_plan_detailed, EvalConfig, EvalReport, GraphSource, MetricsReport, NoiseModel, PlanOutcome, Planner, PlannerKind};
use scl_core::scenegen::dataset::{generate_dataset_filtered, load_graph, load_scene};
use scl_core::scenegen::{load_dataset, observe, save_dataset, GenSpec, ObservationConfig, Scene};

use config::{FileConfig, Provenance};
use error::CliError;
use render::Format;

#[derive(Parser)]
#[command(name = "scl", version, about = "Multi-level structure generation, dependency learning and rearrangement planning")]
struct Cli {
    /// JSON file of option values; explicit flags take precedence.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Object catalog (default: the built-in one).
    #[arg(long, global = true)]
    catalog: Option<PathBuf>,
    /// Log progress to stderr.
    #[arg(short, long, global = true)]
    verbose: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate target structures, scattered initial scenes and ground-truth graphs.
    Gen(GenArgs),
    /// Train the graph network on a generated dataset.
    Train(TrainArgs),
    /// Match initial and target instances and estimate their motions.
    Align(AlignArgs),
    /// Infer the dependency graph of a target scene.
    Graph(GraphArgs),
    /// Build a rearrangement plan for one scene pair.
    Plan(PlanArgs),
    /// Plan and execute every scene of a dataset and score the results.
    Eval(EvalArgs),
    /// Render evaluation reports as tables.
    Report(ReportArgs),
    /// Print or save the object catalog.
    Catalog(CatalogArgs),
}

#[derive(Args)]
struct GenArgs {
    #[arg(long)]
    count: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Number of levels; default caps per level.
    #[arg(long)]
    levels: Option<usize>,
    /// Per-level object caps, e.g. 5,3,2 (overrides --levels).
    #[arg(long, value_delimiter = ',')]
    caps: Option<Vec<usize>>,
    #[arg(long)]
    min_objects: Option<usize>,
    #[arg(long)]
    max_objects: Option<usize>,
    /// Keep only scenes that occupy every level.
    #[arg(long)]
    exact_levels: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    /// Weights file; hyperparameters go to `<out>.json`.
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    pos_weight: Option<f64>,
    #[arg(long)]
    val_fraction: Option<f64>,
    #[arg(long)]
    hidden: Option<usize>,
    #[arg(long)]
    latent: Option<usize>,
    #[arg(long)]
    heads: Option<usize>,
    #[arg(long)]
    decoder_hidden: Option<usize>,
    /// Icosphere subdivisions of the positional encoder.
    #[arg(long)]
    subdivisions: Option<usize>,
}

#[derive(Args)]
struct ObsArgs {
    /// Surface samples per object.
    #[arg(long)]
    n_points: Option<usize>,
    /// Point noise standard deviation (m).
    #[arg(long)]
    obs_noise: Option<f64>,
    /// Keep points facing away from every camera.
    #[arg(long)]
    no_culling: bool,
}

#[derive(Args)]
struct AlignArgs {
    #[arg(long)]
    initial: PathBuf,
    #[arg(long)]
    target: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[command(flatten)]
    obs: ObsArgs,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct GraphArgs {
    #[arg(long)]
    target: PathBuf,
    #[arg(long, conflicts_with = "oracle")]
    model: Option<PathBuf>,
    /// Ground-truth graph from support analysis.
    #[arg(long)]
    oracle: bool,
    #[arg(long)]
    tstar: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[command(flatten)]
    obs: ObsArgs,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct PlanArgs {
    #[arg(long)]
    initial: PathBuf,
    #[arg(long)]
    target: PathBuf,
    #[arg(long, conflicts_with = "graph")]
    model: Option<PathBuf>,
    /// Use this dependency graph instead of a model.
    #[arg(long)]
    graph: Option<PathBuf>,
    #[arg(long)]
    tstar: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[command(flatten)]
    obs: ObsArgs,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    data: PathBuf,
    /// scl, oracle, random or iterative.
    #[arg(long)]
    planner: Option<String>,
    #[arg(long)]
    model: Option<PathBuf>,
    /// With --planner scl: use each scene's stored graph instead of a model.
    #[arg(long)]
    dataset_graphs: bool,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    tstar: Option<f64>,
    /// Actuation noise, horizontal translation (m).
    #[arg(long)]
    noise_pos: Option<f64>,
    /// Actuation noise, yaw (rad).
    #[arg(long)]
    noise_rot: Option<f64>,
    /// Baseline step budget as a multiple of the object count.
    #[arg(long)]
    budget_factor: Option<usize>,
    #[command(flatten)]
    obs: ObsArgs,
    #[arg(long)]
    report: PathBuf,
}

#[derive(Args)]
struct ReportArgs {
    /// Report files written by `scl eval`.
    #[arg(required = true)]
    reports: Vec<PathBuf>,
    #[arg(long, value_enum, default_value = "text")]
    format: Format,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CatalogArgs {
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(e.exit_code() as u8);
        }
    };
    let level = if cli.verbose { "info" } else { "warn" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    let cfg = FileConfig::load(cli.config.as_deref())?;
    let jobs = cfg.pick_opt(cli.jobs, "jobs")?;
    if let Some(j) = jobs {
        if j == 0 {
            return Err(CliError::Usage("--jobs must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(j)
            .build_global()
            .map_err(|e| CliError::Usage(format!("cannot start {j} workers: {e}")))?;
    }
    let catalog = match &cli.catalog {
        Some(p) => {
            require_file(p, "--catalog")?;
            Catalog::load(p)?
        }
        None => default_catalog(),
    };
    match cli.command {
        Command::Gen(a) => gen(a, &cfg, &catalog),
        Command::Train(a) => train(a, &cfg, &catalog),
        Command::Align(a) => align(a, &cfg, &catalog),
        Command::Graph(a) => graph(a, &cfg, &catalog),
        Command::Plan(a) => plan(a, &cfg, &catalog),
        Command::Eval(a) => eval(a, &cfg, &catalog),
        Command::Report(a) => report_cmd(a),
        Command::Catalog(a) => catalog_cmd(a, &catalog),
    }
}

fn require_file(p: &Path, flag: &str) -> Result<(), CliError> {
    if !p.is_file() {
        return Err(CliError::Usage(format!("{flag} {}: no such file", p.display())));
    }
    Ok(())
}

fn require_dir(p: &Path, flag: &str) -> Result<(), CliError> {
    if !p.is_dir() {
        return Err(CliError::Usage(format!("{flag} {}: no such directory", p.display())));
    }
    Ok(())
}

/// The parent of an output file must exist.
fn require_out_parent(p: &Path, flag: &str) -> Result<(), CliError> {
    match p.parent() {
        Some(d) if !d.as_os_str().is_empty() && !d.is_dir() => {
            Err(CliError::Usage(format!("{flag} {}: directory {} does not exist", p.display(), d.display())))
        }
        _ => Ok(()),
    }
}

fn write_json(path: &Path, value: &Value) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).expect("JSON value serializes");
    text.push('\n');
    std::fs::write(path, text).map_err(|e| CliError::Domain(format!("cannot write {}: {e}", path.display())))
}

fn emit_provenance(p: &Provenance) {
    println!("{}", serde_json::to_string(p).expect("provenance serializes"));
}

fn observation_config(a: &ObsArgs, cfg: &FileConfig) -> Result<ObservationConfig, CliError> {
    let d = ObservationConfig::default();
    Ok(ObservationConfig {
        n_points: cfg.pick(a.n_points, "n_points", d.n_points)?,
        noise_sigma: cfg.pick(a.obs_noise, "obs_noise", d.noise_sigma)?,
        culling: !(a.no_culling || cfg.get::<bool>("no_culling")?.unwrap_or(false)),
        ..d
    })
}

fn tstar(flag: Option<f64>, cfg: &FileConfig) -> Result<f64, CliError> {
    let t = cfg.pick(flag, "tstar", DEFAULT_TSTAR)?;
    if !(0.0..=1.0).contains(&t) {
        return Err(CliError::Usage(format!("--tstar {t} is outside [0, 1]")));
    }
    Ok(t)
}

fn gen(a: GenArgs, cfg: &FileConfig, catalog: &Catalog) -> Result<(), CliError> {
    let seed = cfg.require_seed(a.seed, "gen")?;
    let count: usize = cfg
        .pick_opt(a.count, "count")?
        .ok_or_else(|| CliError::Usage("gen requires --count".into()))?;
    let spec = match cfg.pick_opt(a.caps, "caps")? {
        Some(caps) => GenSpec::new(caps, seed),
        None => GenSpec::with_levels(cfg.pick(a.levels, "levels", 3)?, seed),
    };
    spec.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    let min_objects: usize = cfg.pick(a.min_objects, "min_objects", 0)?;
    let max_objects: usize = cfg.pick(a.max_objects, "max_objects", usize::MAX)?;
    let exact_levels = a.exact_levels || cfg.get::<bool>("exact_levels")?.unwrap_or(false);
    if a.out.exists() && !a.out.is_dir() {
        return Err(CliError::Usage(format!("--out {} is not a directory", a.out.display())));
    }
    let resolved = json!({
        "command": "gen", "spec": spec, "count": count, "min_objects": min_objects,
        "max_objects": max_objects, "exact_levels": exact_levels, "out": a.out,
    });
    let prov = Provenance::new("gen", Some(seed), &resolved);
    emit_provenance(&prov);
    let levels = spec.levels;
    let entries = generate_dataset_filtered(&spec, catalog, count, |e| {
        let n = e.target.len();
        n >= min_objects && n <= max_objects && (!exact_levels || e.target.num_levels() == levels)
    })?;
    save_dataset(&a.out, &spec, &entries)?;
    log::info!("wrote {} scenes to {}", entries.len(), a.out.display());
    Ok(())
}

fn model_config(a: &TrainArgs, cfg: &FileConfig) -> Result<ModelConfig, CliError> {
    let d = ModelConfig::default();
    let m = ModelConfig {
        hidden: cfg.pick(a.hidden, "hidden", d.hidden)?,
        latent: cfg.pick(a.latent, "latent", d.latent)?,
        heads: cfg.pick(a.heads, "heads", d.heads)?,
        decoder_hidden: cfg.pick(a.decoder_hidden, "decoder_hidden", d.decoder_hidden)?,
        encoder: PositionalEncoderConfig {
            subdivisions: cfg.pick(a.subdivisions, "subdivisions", d.encoder.subdivisions)?,
            ..d.encoder.clone()
        },
        ..d
    };
    m.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    Ok(m)
}

fn train(a: TrainArgs, cfg: &FileConfig, catalog: &Catalog) -> Result<(), CliError> {
    let seed = cfg.require_seed(a.seed, "train")?;
    require_dir(&a.data, "--data")?;
    require_out_parent(&a.out, "--out")?;
    let mut model = model_config(&a, cfg)?;
    model.num_classes = catalog.len();
    model.init_seed = seed;
    let d = TrainConfig::default();
    let tc = TrainConfig {
        epochs: cfg.pick(a.epochs, "epochs", d.epochs)?,
        batch_size: cfg.pick(a.batch_size, "batch_size", d.batch_size)?,
        learning_rate: cfg.pick(a.lr, "lr", d.learning_rate)?,
        pos_weight: cfg.pick(a.pos_weight, "pos_weight", d.pos_weight)?,
        val_fraction: cfg.pick(a.val_fraction, "val_fraction", d.val_fraction)?,
        seed,
        ..d
    };
    if tc.batch_size == 0 || !(0.0..1.0).contains(&tc.val_fraction) {
        return Err(CliError::Usage("--batch-size must be positive and --val-fraction in [0, 1)".into()));
    }
    let resolved = json!({"command": "train", "data": a.data, "out": a.out, "model": model, "training": tc});
    let prov = Provenance::new("train", Some(seed), &resolved);
    emit_provenance(&prov);
    let (_, entries) = load_dataset(&a.data)?;
    let (params, rep) = train_on_dataset(&entries, catalog, &model, &tc)?;
    save_weights(&a.out, &params, Some(&tc))?;
    println!("{}", serde_json::to_string(&json!({"provenance": prov, "report": rep})).expect("serializes"));
    Ok(())
}

fn load_model(p: &Path, catalog: &Catalog) -> Result<ModelParams, CliError> {
    require_file(p, "--model")?;
    let (params, _) = load_weights(p)?;
    if params.config.num_classes != catalog.len() {
        return Err(CliError::Usage(format!(
            "model expects {} classes, catalog has {}",
            params.config.num_classes,
            catalog.len()
        )));
    }
    Ok(params)
}

fn load_pair(initial: &Path, target: &Path) -> Result<(Scene, Scene), CliError> {
    require_file(initial, "--initial")?;
    require_file(target, "--target")?;
    Ok((load_scene(initial)?, load_scene(target)?))
}

fn align(a: AlignArgs, cfg: &FileConfig, catalog: &Catalog) -> Result<(), CliError> {
    let (initial, target) = load_pair(&a.initial, &a.target)?;
    require_out_parent(&a.out, "--out")?;
    let seed = cfg.seed(a.seed)?.unwrap_or(0);
    let obs = observation_config(&a.obs, cfg)?;
    let resolved = json!({"command": "align", "initial": a.initial, "target": a.target, "observation": obs, "out": a.out});
    let prov = Provenance::new("align", Some(seed), &resolved);
    emit_provenance(&prov);
    let oi = observe(&initial, catalog, &obs, seed)?;
    let ot = observe(&target, catalog, &obs, seed ^ 1)?;
    let map = correspond(&oi, &ot, catalog)?;
    write_json(&a.out, &json!({"provenance": prov, "correspondences": map}))
}

fn graph(a: GraphArgs, cfg: &FileConfig, catalog: &Catalog) -> Result<(), CliError> {
    require_file(&a.target, "--target")?;
    require_out_parent(&a.out, "--out")?;
    let target = load_scene(&a.target)?;
    let seed = cfg.seed(a.seed)?.unwrap_or(0);
    let t = tstar(a.tstar, cfg)?;
    let obs = observation_config(&a.obs, cfg)?;
    let (g, rho) = if a.oracle {
        (oracle_graph(&target, catalog)?, None)
    } else {
        let model = a
            .model
            .as_deref()
            .ok_or_else(|| CliError::Usage("graph requires --model or --oracle".into()))?;
        let params = load_model(model, catalog)?;
        let o = observe(&target, catalog, &obs, seed ^ 1)?;
        let encoder = PositionalEncoder::new(params.config.encoder.clone())?;
        let rho = predict(&params, &initial_graph(&o, &encoder, params.config.num_classes)?)?;
        (threshold_graph(&rho, t), Some(rho))
    };
    let resolved = json!({"command": "graph", "target": a.target, "model": a.model, "oracle": a.oracle, "tstar": t, "observation": obs, "out": a.out});
    let prov = Provenance::new("graph", Some(seed), &resolved);
    emit_provenance(&prov);
    let probs = rho.map(|r| r.matrix().outer_iter().map(|row| row.to_vec()).collect::<Vec<_>>());
    write_json(
        &a.out,
        &json!({"provenance": prov, "graph": g, "is_dag": is_dag(&g), "probabilities": probs}),
    )
}

fn plan(a: PlanArgs, cfg: &FileConfig, catalog: &Catalog) -> Result<(), CliError> {
    let (initial, target) = load_pair(&a.initial, &a.target)?;
    require_out_parent(&a.out, "--out")?;
    let seed = cfg.seed(a.seed)?.unwrap_or(0);
    let t = tstar(a.tstar, cfg)?;
    let obs = observation_config(&a.obs, cfg)?;
    let given: Option<DependencyGraph> = match &a.graph {
        Some(p) => {
            require_file(p, "--graph")?;
            Some(load_graph(p)?)
        }
        None => None,
    };
    let params = match (&a.model, &given) {
        (Some(m), _) => Some(load_model(m, catalog)?),
        (None, Some(_)) => None,
        (None, None) => return Err(CliError::Usage("plan requires --model or --graph".into())),
    };
    let resolved = json!({"command": "plan", "initial": a.initial, "target": a.target, "model": a.model, "graph": a.graph, "tstar": t, "observation": obs, "out": a.out});
    let prov = Provenance::new("plan", Some(seed), &resolved);
    emit_provenance(&prov);
    let oi = observe(&initial, catalog, &obs, seed)?;
    let ot = observe(&target, catalog, &obs, seed ^ 1)?;
    let source = match (&params, &given) {
        (Some(p), _) => GraphSource::Model { params: p, tstar: t },
        (None, Some(g)) => GraphSource::Given(g),
        _ => unreachable!(),
    };
    let details = scl_plan_detailed(&oi, &ot, catalog, source)?;
    match details.outcome {
        PlanOutcome::Planned(plan) => {
            let mut v = serde_json::to_value(&plan).expect("plan serializes");
            v["provenance"] = serde_json::to_value(&prov).expect("serializes");
            write_json(&a.out, &v)
        }
        PlanOutcome::CircularDependency => Err(CliError::Domain(format!(
            "circular dependency: inferred graph {:?} is not acyclic",
            details.graph.edges().collect::<Vec<_>>()
        ))),
    }
}

#[derive(Serialize)]
struct EvalResolved<'a> {
    command: &'static str,
    data: &'a Path,
    planner: PlannerKind,
    model: Option<&'a Path>,
    dataset_graphs: bool,
    eval: &'a EvalConfig,
    report: &'a Path,
}

fn eval(a: EvalArgs, cfg: &FileConfig, catalog: &Catalog) -> Result<(), CliError> {
    let seed = cfg.require_seed(a.seed, "eval")?;
    require_dir(&a.data, "--data")?;
    require_out_parent(&a.report, "--report")?;
    let planner: PlannerKind = cfg
        .pick_opt(a.planner.clone(), "planner")?
        .ok_or_else(|| CliError::Usage("eval requires --planner".into()))?
        .parse()
        .map_err(CliError::Usage)?;
    let model_path = cfg.pick_opt(a.model.clone(), "model")?;
    let dataset_graphs = a.dataset_graphs || cfg.get::<bool>("dataset_graphs")?.unwrap_or(false);
    let params = match (planner, &model_path, dataset_graphs) {
        (PlannerKind::Scl, Some(m), false) => Some(load_model(m, catalog)?),
        (PlannerKind::Scl, None, false) => {
            return Err(CliError::Usage("--planner scl requires --model or --dataset-graphs".into()))
        }
        _ => None,
    };
    let d = EvalConfig::default();
    let ec = EvalConfig {
        seed,
        tstar: tstar(a.tstar, cfg)?,
        noise: NoiseModel {
            sigma_pos: cfg.pick(a.noise_pos, "noise_pos", 0.0)?,
            sigma_rot: cfg.pick(a.noise_rot, "noise_rot", 0.0)?,
        },
        observation: observation_config(&a.obs, cfg)?,
        budget_factor: cfg.pick(a.budget_factor, "budget_factor", d.budget_factor)?,
    };
    ec.noise.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    let resolved = EvalResolved {
        command: "eval",
        data: &a.data,
        planner,
        model: model_path.as_deref(),
        dataset_graphs,
        eval: &ec,
        report: &a.report,
    };
    let prov = Provenance::new("eval", Some(seed), &resolved);
    emit_provenance(&prov);
    let (_, entries) = load_dataset(&a.data)?;
    let runner = match (&params, planner) {
        (Some(p), _) => Planner::Scl(p),
        (None, PlannerKind::Scl | PlannerKind::Oracle) => Planner::Oracle,
        (None, PlannerKind::Random) => Planner::Random,
        (None, PlannerKind::Iterative) => Planner::Iterative,
    };
    let results = run_dataset(&entries, catalog, &runner, &ec)?;
    let rep = report(planner, &ec, &results)?;
    let scenes: Vec<MetricsReport> = results.iter().map(MetricsReport::of).collect();
    write_json(
        &a.report,
        &json!({"provenance": prov, "report": rep, "scenes": scenes}),
    )?;
    let o = &rep.overall;
    println!(
        "{}",
        json!({"planner": planner, "scenes": o.scenes, "success_rate": o.success_rate, "completion": o.completion.mean})
    );
    if o.circular_dependencies > 0 {
        return Err(CliError::Domain(format!(
            "circular dependency in {} of {} scenes (report written to {})",
            o.circular_dependencies,
            o.scenes,
            a.report.display()
        )));
    }
    Ok(())
}

fn report_cmd(a: ReportArgs) -> Result<(), CliError> {
    let mut reports: Vec<EvalReport> = Vec::new();
    for p in &a.reports {
        require_file(p, "report")?;
        let text = std::fs::read_to_string(p).map_err(|e| CliError::Domain(format!("cannot read {}: {e}", p.display())))?;
        let v: Value = serde_json::from_str(&text)
            .map_err(|e| CliError::Domain(format!("parse error in {}: {e}", p.display())))?;
        let body = v.get("report").cloned().unwrap_or(v);
        let r: EvalReport = serde_json::from_value(body)
            .map_err(|e| CliError::Domain(format!("parse error in {}: not an evaluation report: {e}", p.display())))?;
        reports.push(r);
    }
    let text = render::render(&reports, a.format);
    match &a.out {
        Some(p) => {
            require_out_parent(p, "--out")?;
            std::fs::write(p, text).map_err(|e| CliError::Domain(format!("cannot write {}: {e}", p.display())))
        }
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn catalog_cmd(a: CatalogArgs, catalog: &Catalog) -> Result<(), CliError> {
    match &a.out {
        Some(p) => {
            require_out_parent(p, "--out")?;
            catalog.save(p)?;
            Ok(())
        }
        None => {
            println!("{}", catalog.to_json());
            Ok(())
        }
    }
}
