//! Command-line driver for the friction identification workflow: generate
//! or ingest velocity-torque data, fit models, prune, extract symbolic
//! expressions, and emit reports, prediction CSVs and SVG figures.

use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use frikan::data::{add_noise, generate_axis_dataset, subsample, FrictionDataset, NoiseSpec};
use frikan::friction::{axis_params, stribeck, StribeckParams};
use frikan::kan::{load_checkpoint, save_checkpoint, ArchSpec, KanNetwork};
use frikan::metrics::{pearson_correlation, r_squared, relative_error};
use frikan::optim::{fit_known_form, fit_network, fit_network_observed, Algorithm, FitConfig};
use frikan::prune::{attribution_scores, prune, PruneConfig};
use frikan::report::{
    residual_stats, write_json, write_prediction_csv, write_svg_plot, ResidualStats,
};
use frikan::symbolic::{parse_expr, symbolify, Expr, SymbolifyConfig};
use frikan::{Error, Result};

/// Default output directory when `--out-dir` is not given.
const OUT_DIR_ENV: &str = "FRIKAN_OUT_DIR";

#[derive(Parser)]
#[command(
    name = "frikan",
    version,
    about = "Identify static friction laws of robot joints from velocity-torque data"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic velocity-torque CSV for one reference axis
    Generate(GenerateArgs),
    /// Fit the smoothed Stribeck model (known form) to a dataset
    FitKnown(FitKnownArgs),
    /// Fit a spline-edge network of a given architecture to a dataset
    FitKan(FitKanArgs),
    /// Prune a fitted checkpoint by attribution scores
    Prune(PruneArgs),
    /// Replace spline edges of a checkpoint by library functions
    Symbolify(SymbolifyArgs),
    /// Full workflow: fit, prune, refit, symbolify, joint refit, report
    Pipeline(PipelineArgs),
    /// Evaluate a checkpoint or expression file against a dataset
    Eval(EvalArgs),
    /// Pearson correlation of every input channel against the torque
    Correlate(CorrelateArgs),
}

#[derive(Args)]
struct OutDirArg {
    /// Output directory (default: $FRIKAN_OUT_DIR, then the working directory)
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

impl OutDirArg {
    fn resolve(&self) -> Result<PathBuf> {
        let dir = match &self.out_dir {
            Some(dir) => dir.clone(),
            None => std::env::var_os(OUT_DIR_ENV).map(PathBuf::from).unwrap_or_else(|| ".".into()),
        };
        std::fs::create_dir_all(&dir)?;
        Ok(dir)
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum AlgorithmArg {
    Adam,
    Lbfgs,
}

impl From<AlgorithmArg> for Algorithm {
    fn from(a: AlgorithmArg) -> Algorithm {
        match a {
            AlgorithmArg::Adam => Algorithm::Adam,
            AlgorithmArg::Lbfgs => Algorithm::Lbfgs,
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum NoiseArg {
    /// Clean torques
    None,
    /// Gaussian noise, standard deviation 25% of the torque range
    #[value(name = "quarter_range")]
    QuarterRange,
    /// Gaussian noise, standard deviation (lambda/2) of the torque range
    #[value(name = "half_lambda")]
    HalfLambda,
}

#[derive(Args)]
struct GenerateArgs {
    /// Reference axis, 1 through 6
    #[arg(long)]
    axis: usize,
    /// Number of samples
    #[arg(long, default_value_t = 1000)]
    n: usize,
    /// Lower end of the sampled velocity range
    #[arg(long, default_value_t = -1.0, allow_hyphen_values = true)]
    v_min: f64,
    /// Upper end of the sampled velocity range
    #[arg(long, default_value_t = 1.0, allow_hyphen_values = true)]
    v_max: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Keep this fraction of samples (uniform without replacement)
    #[arg(long)]
    subsample: Option<f64>,
    /// Torque noise model
    #[arg(long, value_enum, default_value_t = NoiseArg::None)]
    noise: NoiseArg,
    /// Noise fraction for half_lambda mode (0.05 means 5%)
    #[arg(long, default_value_t = 0.05)]
    lambda: f64,
    /// Output CSV path (default: axis<N>.csv in the output directory)
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    out_dir: OutDirArg,
}

#[derive(Args)]
struct FitKnownArgs {
    /// Training CSV with velocity,torque columns
    #[arg(long)]
    data: PathBuf,
    /// Initial parameters k1,k2,k3,k4
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true,
          default_values_t = [10.0, 5.0, 0.5, 0.0])]
    init: Vec<f64>,
    #[arg(long, default_value_t = 30000)]
    iters: usize,
    /// Step size (default: 0.01 for adam, 1.0 for lbfgs)
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long, value_enum, default_value_t = AlgorithmArg::Adam)]
    algorithm: AlgorithmArg,
    /// Axis whose table parameters serve as ground truth for relative
    /// errors and the clean-curve r^2
    #[arg(long)]
    truth_axis: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    out_dir: OutDirArg,
}

#[derive(Args)]
struct FitKanArgs {
    /// Training CSV with velocity,torque columns
    #[arg(long)]
    data: PathBuf,
    /// Architecture in bracket form, e.g. [1,5,1] or [1,[5,2],1]
    #[arg(long, default_value = "[1,5,1]")]
    arch: String,
    /// Spline grid intervals per edge
    #[arg(long, default_value_t = 10)]
    grid: usize,
    /// Spline order
    #[arg(long, default_value_t = 3)]
    order: usize,
    #[arg(long, default_value_t = 300)]
    steps: usize,
    #[arg(long, value_enum, default_value_t = AlgorithmArg::Lbfgs)]
    optimizer: AlgorithmArg,
    /// Step size (default: 1.0 for lbfgs, 0.01 for adam)
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Write intermediate checkpoints at i/K of the step budget
    #[arg(long)]
    snapshots: Option<usize>,
    /// Extra CSVs to evaluate the fitted model on (repeatable)
    #[arg(long = "test")]
    test: Vec<PathBuf>,
    #[command(flatten)]
    out_dir: OutDirArg,
}

#[derive(Args)]
struct PruneArgs {
    /// Fitted network checkpoint
    #[arg(long)]
    checkpoint: PathBuf,
    /// Dataset used to compute attribution scores
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value_t = 1e-2)]
    node_threshold: f64,
    #[arg(long, default_value_t = 3e-2)]
    edge_threshold: f64,
    /// L-BFGS steps of fine-tuning after pruning (0 to skip)
    #[arg(long, default_value_t = 0)]
    refit_steps: usize,
    #[command(flatten)]
    out_dir: OutDirArg,
}

#[derive(Args)]
struct SymbolifyArgs {
    /// Fitted (typically pruned) network checkpoint
    #[arg(long)]
    checkpoint: PathBuf,
    /// Dataset the edges are fit against
    #[arg(long)]
    data: PathBuf,
    /// Minimum per-edge r^2 for a replacement to stick
    #[arg(long, default_value_t = 0.9)]
    accept: f64,
    /// L-BFGS steps of the joint refinement
    #[arg(long, default_value_t = 50)]
    refit_steps: usize,
    #[command(flatten)]
    out_dir: OutDirArg,
}

#[derive(Args)]
struct PipelineArgs {
    /// Training CSV with velocity,torque columns
    #[arg(long)]
    data: PathBuf,
    /// Architecture in bracket form
    #[arg(long, default_value = "[1,[5,2],1]")]
    arch: String,
    #[arg(long, default_value_t = 3)]
    grid: usize,
    #[arg(long, default_value_t = 3)]
    order: usize,
    /// L-BFGS steps of the initial fit
    #[arg(long, default_value_t = 300)]
    fit_steps: usize,
    #[arg(long, default_value_t = 1e-2)]
    node_threshold: f64,
    #[arg(long, default_value_t = 3e-2)]
    edge_threshold: f64,
    /// L-BFGS steps of the post-prune refit and the joint symbolic refit
    #[arg(long, default_value_t = 50)]
    refit_steps: usize,
    /// Minimum per-edge r^2 for a symbolic replacement to stick
    #[arg(long, default_value_t = 0.9)]
    accept: f64,
    /// Axis whose clean curve serves as ground truth for the final r^2
    #[arg(long)]
    truth_axis: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Also write an SVG figure of truth versus prediction
    #[arg(long)]
    svg: bool,
    #[command(flatten)]
    out_dir: OutDirArg,
}

#[derive(Args)]
struct EvalArgs {
    /// Checkpoint (JSON) or expression (text) file
    #[arg(long)]
    model: PathBuf,
    /// CSV to evaluate against
    #[arg(long)]
    data: PathBuf,
    /// Also write an SVG figure of truth versus prediction
    #[arg(long)]
    svg: bool,
    #[command(flatten)]
    out_dir: OutDirArg,
}

#[derive(Args)]
struct CorrelateArgs {
    /// CSV with velocity,torque and any extra channels
    #[arg(long)]
    data: PathBuf,
    #[command(flatten)]
    out_dir: OutDirArg,
}

fn main() {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Generate(args) => cmd_generate(args),
        Command::FitKnown(args) => cmd_fit_known(args),
        Command::FitKan(args) => cmd_fit_kan(args),
        Command::Prune(args) => cmd_prune(args),
        Command::Symbolify(args) => cmd_symbolify(args),
        Command::Pipeline(args) => cmd_pipeline(args),
        Command::Eval(args) => cmd_eval(args),
        Command::Correlate(args) => cmd_correlate(args),
    };
    if let Err(e) = result {
        eprintln!("error: {e}");
        std::process::exit(1);
    }
}

fn cmd_generate(args: GenerateArgs) -> Result<()> {
    let mut data = generate_axis_dataset(args.axis, args.n, (args.v_min, args.v_max), args.seed)?;
    if let Some(fraction) = args.subsample {
        data = subsample(&data, fraction, args.seed)?;
    }
    match args.noise {
        NoiseArg::None => {}
        NoiseArg::QuarterRange => data = add_noise(&data, &NoiseSpec::quarter_range(args.seed))?,
        NoiseArg::HalfLambda => {
            data = add_noise(&data, &NoiseSpec::half_lambda(args.lambda, args.seed))?
        }
    }
    let path = match args.out {
        Some(path) => path,
        None => args.out_dir.resolve()?.join(format!("axis{}.csv", args.axis)),
    };
    data.write_csv(&path)?;
    println!("wrote {} samples of axis {} to {}", data.len(), args.axis, path.display());
    Ok(())
}

fn cmd_fit_known(args: FitKnownArgs) -> Result<()> {
    if args.init.len() != 4 {
        return Err(Error::invalid(format!(
            "--init takes exactly k1,k2,k3,k4, got {} values",
            args.init.len()
        )));
    }
    let dir = args.out_dir.resolve()?;
    let data = FrictionDataset::read_csv(&args.data)?;
    let init = StribeckParams::new(args.init[0], args.init[1], args.init[2], args.init[3])?;
    let mut config = match args.algorithm {
        AlgorithmArg::Adam => FitConfig::adam(),
        AlgorithmArg::Lbfgs => FitConfig::lbfgs(args.iters),
    };
    config.iterations = args.iters;
    config.seed = args.seed;
    if let Some(lr) = args.lr {
        config.learning_rate = lr;
    }

    let started = Instant::now();
    let (params, trace) = fit_known_form(&data, &init, &config)?;
    let elapsed = started.elapsed().as_secs_f64();

    let predictions: Vec<f64> = data.velocities.iter().map(|&v| stribeck(v, &params)).collect();
    let fit_r2 = r_squared(&data.torques, &predictions)?;

    let mut truth_block = json!(null);
    if let Some(axis) = args.truth_axis {
        let truth = axis_params(axis)?;
        let clean: Vec<f64> = data.velocities.iter().map(|&v| stribeck(v, &truth)).collect();
        truth_block = json!({
            "axis": axis,
            "relative_errors": {
                "k1": relative_error(params.k1, truth.k1)?,
                "k2": relative_error(params.k2, truth.k2)?,
                "k3": relative_error(params.k3, truth.k3)?,
                "k4": relative_error(params.k4, truth.k4)?,
            },
            "r_squared_vs_clean": r_squared(&clean, &predictions)?,
        });
    }

    let report = json!({
        "command": "fit-known",
        "data": args.data.display().to_string(),
        "config": config,
        "init": init,
        "params": params,
        "r_squared": fit_r2,
        "final_loss": trace.final_loss,
        "loss_history": trace.loss_history,
        "truth": truth_block,
        "timing_seconds": elapsed,
    });
    write_json(dir.join("known_fit_report.json"), &report)?;
    write_prediction_csv(
        dir.join("known_fit_predictions.csv"),
        &data.velocities,
        &data.torques,
        &predictions,
    )?;

    println!(
        "fit-known: k = ({}, {}, {}, {})",
        params.k1, params.k2, params.k3, params.k4
    );
    println!("r^2 = {fit_r2:.6}, final loss = {:.3e}", trace.final_loss);
    if let Some(errors) = report["truth"]["relative_errors"].as_object() {
        let worst = errors.values().filter_map(|v| v.as_f64()).fold(0.0, f64::max);
        println!("max relative parameter error = {worst:.3e}");
    }
    println!("wrote known_fit_report.json, known_fit_predictions.csv in {}", dir.display());
    Ok(())
}

fn cmd_fit_kan(args: FitKanArgs) -> Result<()> {
    let dir = args.out_dir.resolve()?;
    let data = FrictionDataset::read_csv(&args.data)?;
    let arch = ArchSpec::parse(&args.arch, args.grid, args.order)?;
    let mut config = match args.optimizer {
        AlgorithmArg::Adam => FitConfig::adam(),
        AlgorithmArg::Lbfgs => FitConfig::lbfgs(args.steps),
    };
    config.iterations = args.steps;
    config.seed = args.seed;
    if let Some(lr) = args.lr {
        config.learning_rate = lr;
    }

    let mut net = KanNetwork::init(&arch, args.seed)?;
    let marks: Vec<usize> = match args.snapshots {
        Some(k) if k >= 2 => (1..k).map(|i| args.steps * i / k).filter(|&s| s > 0).collect(),
        _ => Vec::new(),
    };
    let started = Instant::now();
    let trace = fit_network_observed(&mut net, &data, &config, &mut |done, snapshot| {
        if marks.contains(&done) {
            save_checkpoint(snapshot, dir.join(format!("kan_checkpoint_step_{done}.json")))?;
        }
        Ok(())
    })?;
    let elapsed = started.elapsed().as_secs_f64();
    save_checkpoint(&net, dir.join("kan_checkpoint.json"))?;

    let predictions = net.predict(&data.velocities)?;
    let train_r2 = r_squared(&data.torques, &predictions)?;
    write_prediction_csv(
        dir.join("kan_predictions.csv"),
        &data.velocities,
        &data.torques,
        &predictions,
    )?;

    let mut tests = Vec::new();
    for path in &args.test {
        let held_out = FrictionDataset::read_csv(path)?;
        let pred = net.predict(&held_out.velocities)?;
        let r2 = r_squared(&held_out.torques, &pred)?;
        let stats = residual_stats(&held_out.torques, &pred)?;
        println!("test {}: r^2 = {r2:.6}, rmse = {:.4}", path.display(), stats.rmse);
        tests.push(json!({
            "data": path.display().to_string(),
            "r_squared": r2,
            "residuals": stats,
        }));
    }

    let report = json!({
        "command": "fit-kan",
        "data": args.data.display().to_string(),
        "arch": arch.to_string(),
        "config": config,
        "parameters": net.total_parameters(),
        "r_squared": train_r2,
        "final_loss": trace.final_loss,
        "loss_history": trace.loss_history,
        "tests": tests,
        "snapshots": marks,
        "timing_seconds": elapsed,
    });
    write_json(dir.join("kan_fit_report.json"), &report)?;

    println!("fit-kan {}: train r^2 = {train_r2:.6}, final loss = {:.3e}", arch, trace.final_loss);
    println!("wrote kan_checkpoint.json, kan_fit_report.json in {}", dir.display());
    Ok(())
}

fn cmd_prune(args: PruneArgs) -> Result<()> {
    let dir = args.out_dir.resolve()?;
    let data = FrictionDataset::read_csv(&args.data)?;
    let net = load_checkpoint(&args.checkpoint)?;
    let scores = attribution_scores(&net, &data)?;
    let config =
        PruneConfig { node_threshold: args.node_threshold, edge_threshold: args.edge_threshold };
    let (mut pruned, report) = prune(&net, &scores, &config)?;
    if args.refit_steps > 0 {
        fit_network(&mut pruned, &data, &FitConfig::lbfgs(args.refit_steps))?;
    }

    save_checkpoint(&pruned, dir.join("pruned_checkpoint.json"))?;
    std::fs::write(dir.join("prune_report.txt"), format!("{report}"))?;
    write_json(dir.join("prune_report.json"), &report)?;

    print!("{report}");
    println!("wrote pruned_checkpoint.json, prune_report.txt in {}", dir.display());
    Ok(())
}

fn cmd_symbolify(args: SymbolifyArgs) -> Result<()> {
    let dir = args.out_dir.resolve()?;
    let data = FrictionDataset::read_csv(&args.data)?;
    let net = load_checkpoint(&args.checkpoint)?;
    let config = SymbolifyConfig { accept_threshold: args.accept, refit_steps: args.refit_steps };
    let started = Instant::now();
    let model = symbolify(&net, &data, &config)?;
    let elapsed = started.elapsed().as_secs_f64();

    std::fs::write(dir.join("expression.txt"), format!("{}\n", model.rendered))?;
    let report = json!({
        "command": "symbolify",
        "data": args.data.display().to_string(),
        "checkpoint": args.checkpoint.display().to_string(),
        "config": config,
        "model": model,
        "timing_seconds": elapsed,
    });
    write_json(dir.join("symbolic_report.json"), &report)?;

    println!("F(v) = {}", model.rendered);
    println!(
        "fully symbolic: {}, r^2 vs data = {:.6}, r^2 vs network = {:.6}",
        model.fully_symbolic, model.r_squared_train, model.r_squared_vs_network
    );
    println!("wrote expression.txt, symbolic_report.json in {}", dir.display());
    Ok(())
}

fn cmd_pipeline(args: PipelineArgs) -> Result<()> {
    let dir = args.out_dir.resolve()?;
    let data = FrictionDataset::read_csv(&args.data)?;
    let arch = ArchSpec::parse(&args.arch, args.grid, args.order)?;

    // Stage 1: fit the full network.
    let started = Instant::now();
    let mut net = KanNetwork::init(&arch, args.seed)?;
    let mut fit_config = FitConfig::lbfgs(args.fit_steps);
    fit_config.seed = args.seed;
    let fit_trace = fit_network(&mut net, &data, &fit_config)?;
    save_checkpoint(&net, dir.join("pre_prune_checkpoint.json"))?;
    let fit_r2 = r_squared(&data.torques, &net.predict(&data.velocities)?)?;
    println!("fit {}: r^2 = {fit_r2:.6}", arch);

    // Stage 2: prune and fine-tune the survivors.
    let scores = attribution_scores(&net, &data)?;
    let prune_config =
        PruneConfig { node_threshold: args.node_threshold, edge_threshold: args.edge_threshold };
    let (mut pruned, prune_report) = prune(&net, &scores, &prune_config)?;
    std::fs::write(dir.join("prune_report.txt"), format!("{prune_report}"))?;
    if args.refit_steps > 0 {
        fit_network(&mut pruned, &data, &FitConfig::lbfgs(args.refit_steps))?;
    }
    save_checkpoint(&pruned, dir.join("post_prune_checkpoint.json"))?;
    let pruned_r2 = r_squared(&data.torques, &pruned.predict(&data.velocities)?)?;
    println!(
        "prune: removed {} nodes, {} edges; refit r^2 = {pruned_r2:.6}",
        prune_report.nodes_removed.len(),
        prune_report.edges_removed.len()
    );

    // Stage 3: symbolic extraction with joint refinement.
    let sym_config =
        SymbolifyConfig { accept_threshold: args.accept, refit_steps: args.refit_steps };
    let model = symbolify(&pruned, &data, &sym_config)?;
    std::fs::write(dir.join("expression.txt"), format!("{}\n", model.rendered))?;
    write_json(dir.join("symbolic_report.json"), &model)?;
    println!("F(v) = {}", model.rendered);

    let predictions = model.eval(&data.velocities)?;
    write_prediction_csv(
        dir.join("pipeline_predictions.csv"),
        &data.velocities,
        &data.torques,
        &predictions,
    )?;
    if args.svg {
        write_svg_plot(
            dir.join("pipeline_plot.svg"),
            &format!("pipeline {}", args.data.display()),
            &data.velocities,
            &data.torques,
            &predictions,
        )?;
    }

    let mut truth_r2 = None;
    if let Some(axis) = args.truth_axis {
        let truth = axis_params(axis)?;
        let clean: Vec<f64> = data.velocities.iter().map(|&v| stribeck(v, &truth)).collect();
        truth_r2 = Some(r_squared(&clean, &predictions)?);
        println!("r^2 vs clean axis-{axis} truth = {:.6}", truth_r2.unwrap());
    }

    let elapsed = started.elapsed().as_secs_f64();
    let report = json!({
        "command": "pipeline",
        "data": args.data.display().to_string(),
        "arch": arch.to_string(),
        "seed": args.seed,
        "stages": {
            "fit": { "steps": args.fit_steps, "r_squared": fit_r2,
                     "final_loss": fit_trace.final_loss },
            "prune": { "nodes_removed": prune_report.nodes_removed,
                       "edges_removed": prune_report.edges_removed,
                       "refit_steps": args.refit_steps, "r_squared": pruned_r2 },
            "symbolic": { "accept_threshold": args.accept,
                          "fully_symbolic": model.fully_symbolic,
                          "expression": model.rendered,
                          "r_squared_train": model.r_squared_train,
                          "r_squared_vs_network": model.r_squared_vs_network,
                          "r_squared_vs_truth": truth_r2 },
        },
        "timing_seconds": elapsed,
    });
    write_json(dir.join("pipeline_report.json"), &report)?;
    println!(
        "pipeline done: symbolic r^2 vs data = {:.6} ({} edges audited)",
        model.r_squared_train,
        model.edges.len()
    );
    println!("artifacts in {}", dir.display());
    Ok(())
}

enum LoadedModel {
    Network(Box<KanNetwork>),
    Expression(Expr),
}

/// Checkpoints are JSON objects; anything else is treated as an expression.
fn load_model(path: &Path) -> Result<LoadedModel> {
    let text = std::fs::read_to_string(path)?;
    if text.trim_start().starts_with('{') {
        Ok(LoadedModel::Network(Box::new(load_checkpoint(path)?)))
    } else {
        Ok(LoadedModel::Expression(parse_expr(text.trim())?))
    }
}

fn cmd_eval(args: EvalArgs) -> Result<()> {
    let dir = args.out_dir.resolve()?;
    let data = FrictionDataset::read_csv(&args.data)?;
    let (kind, predictions) = match load_model(&args.model)? {
        LoadedModel::Network(net) => ("checkpoint", net.predict(&data.velocities)?),
        LoadedModel::Expression(expr) => (
            "expression",
            data.velocities.iter().map(|&v| expr.eval(v)).collect::<Result<Vec<f64>>>()?,
        ),
    };
    let r2 = r_squared(&data.torques, &predictions)?;
    let stats: ResidualStats = residual_stats(&data.torques, &predictions)?;

    write_prediction_csv(
        dir.join("predictions.csv"),
        &data.velocities,
        &data.torques,
        &predictions,
    )?;
    if args.svg {
        write_svg_plot(
            dir.join("plot.svg"),
            &format!("{} vs {}", args.model.display(), args.data.display()),
            &data.velocities,
            &data.torques,
            &predictions,
        )?;
    }
    let report = json!({
        "command": "eval",
        "model": args.model.display().to_string(),
        "model_kind": kind,
        "data": args.data.display().to_string(),
        "samples": data.len(),
        "r_squared": r2,
        "residuals": stats,
    });
    write_json(dir.join("eval_report.json"), &report)?;

    println!(
        "eval {kind}: r^2 = {r2:.6}, rmse = {:.4}, max |residual| = {:.4}",
        stats.rmse, stats.max_abs
    );
    println!("wrote eval_report.json, predictions.csv in {}", dir.display());
    Ok(())
}

fn cmd_correlate(args: CorrelateArgs) -> Result<()> {
    let dir = args.out_dir.resolve()?;
    let data = FrictionDataset::read_csv(&args.data)?;

    let mut table = Vec::new();
    let mut columns: Vec<(&str, &[f64])> = vec![("velocity", &data.velocities)];
    for (name, values) in &data.channels {
        columns.push((name, values));
    }
    for (name, values) in columns {
        let r = pearson_correlation(values, &data.torques).map_err(|e| match e {
            Error::InvalidArgument(msg) => Error::invalid(format!("channel {name}: {msg}")),
            other => other,
        })?;
        table.push((name.to_string(), r));
    }

    println!("{:<12} corr(channel, torque)", "channel");
    for (name, r) in &table {
        println!("{name:<12} {r:+.6}");
    }
    let report = json!({
        "command": "correlate",
        "data": args.data.display().to_string(),
        "samples": data.len(),
        "correlations": table.iter().cloned().collect::<std::collections::BTreeMap<_, _>>(),
    });
    write_json(dir.join("correlation_report.json"), &report)?;
    println!("wrote correlation_report.json in {}", dir.display());
    Ok(())
}
