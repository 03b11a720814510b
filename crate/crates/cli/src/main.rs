use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, ensure, Context, Result};
use clap::{Parser, Subcommand};
use serde::Serialize;

use grove::baselines::KnnMatcher;
use grove::dataset::load_points;
use grove::harness::{
    qq_diagnostic, run_table, write_cells_csv, write_metadata, write_qq_csv, write_table_layout, ForestSpec,
    RunMetadata, TableId,
};
use grove::inference::{write_predictions_csv, DEFAULT_CI_LEVEL};
use grove::sampling::{derive_stream_in, SIMULATE_DOMAIN};
use grove::simgen::{Design, DesignKind, CORNER_DIM};
use grove::{Dataset, Exec, Forest, ForestConfig, ForestMode, PredictionResult, VarianceKind};

#[derive(Parser)]
#[command(name = "grove", version, about = "Honest random forests with confidence intervals for treatment effects")]
struct Cli {
    /// Run everything on the calling thread.
    #[arg(long, global = true)]
    sequential: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Draw a synthetic dataset and record the true effect at fresh test points.
    Simulate(SimulateArgs),
    /// Train a forest on a dataset CSV and save it as JSON.
    Train(TrainArgs),
    /// Predict with confidence intervals at query points.
    Predict(PredictArgs),
    /// Run a replicated simulation experiment.
    Experiment(ExperimentArgs),
}

#[derive(clap::Args)]
struct SimulateArgs {
    /// confounded, smooth, spike, dense or corner.
    #[arg(long)]
    design: DesignKind,
    #[arg(long)]
    n: usize,
    /// Feature dimension (the corner design is always 10-dimensional).
    #[arg(long)]
    d: Option<usize>,
    /// Number of signal features of the dense design.
    #[arg(long, default_value_t = 2)]
    q: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Number of test points in the sidecar.
    #[arg(long, default_value_t = 100)]
    test_points: usize,
    /// Dataset CSV; the sidecar goes next to it with extension `.truth.json`.
    #[arg(long)]
    out: PathBuf,
    /// Also write the test points as a CSV ready for `predict`.
    #[arg(long)]
    points_out: Option<PathBuf>,
}

#[derive(clap::Args)]
struct TrainArgs {
    #[arg(long)]
    data: PathBuf,
    /// JSON config; explicit flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    /// regression_double_sample, causal_double_sample, propensity or causal_adaptive.
    #[arg(long)]
    mode: Option<ForestMode>,
    /// Number of trees B (default: n).
    #[arg(long)]
    trees: Option<usize>,
    /// Subsample size s (default: n / 2).
    #[arg(long)]
    subsample: Option<usize>,
    #[arg(long)]
    min_leaf: Option<usize>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    pi: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    model_out: PathBuf,
}

#[derive(clap::Args)]
struct PredictArgs {
    /// Forest JSON written by `train`.
    #[arg(long, required_unless_present = "knn")]
    model: Option<PathBuf>,
    /// CSV with columns x1..xd (trailing y,w are ignored).
    #[arg(long)]
    points: PathBuf,
    #[arg(long, default_value_t = DEFAULT_CI_LEVEL)]
    ci_level: f64,
    /// raw, corrected or calibrated.
    #[arg(long, default_value_t = VarianceKind::default())]
    variance: VarianceKind,
    /// Use k-nearest-neighbour matching on `--data` instead of a forest.
    #[arg(long, requires = "data", conflicts_with = "model")]
    knn: Option<usize>,
    /// Training data for `--knn`.
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(clap::Args)]
struct ExperimentArgs {
    /// t1, t2, t3, grid, dense, honesty or qq.
    #[arg(long)]
    table: String,
    /// Fraction of the full-size run, in (0, 1].
    #[arg(long, default_value_t = 1.0)]
    scale: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let exec = if cli.sequential { Exec::Sequential } else { Exec::Parallel };
    match cli.command {
        Command::Simulate(args) => simulate(args),
        Command::Train(args) => train(args, exec),
        Command::Predict(args) => predict(args, exec),
        Command::Experiment(args) => experiment(args, exec),
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    let file = File::create(path).with_context(|| format!("cannot create {}", path.display()))?;
    Ok(BufWriter::new(file))
}

#[derive(Serialize)]
struct Truth<'a> {
    design: &'a str,
    n: usize,
    d: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    q: Option<usize>,
    seed: u64,
    data: String,
    test_points: Vec<Vec<f64>>,
    true_tau: Vec<f64>,
}

fn sidecar_path(out: &Path) -> PathBuf {
    out.with_extension("truth.json")
}

fn simulate(args: SimulateArgs) -> Result<()> {
    let d = match (args.design, args.d) {
        (DesignKind::Corner, Some(d)) if d != CORNER_DIM => bail!("the corner design has d = {CORNER_DIM}"),
        (DesignKind::Corner, _) => CORNER_DIM,
        (_, Some(d)) => d,
        (kind, None) => bail!("--d is required for the {kind} design"),
    };
    let design = Design::new(args.design, d, args.q)?;
    let (data, _) = design.generate(args.n, &mut derive_stream_in(SIMULATE_DOMAIN, args.seed, 0))?;
    let points = design.draw_points(args.test_points, &mut derive_stream_in(SIMULATE_DOMAIN, args.seed, 1));
    let true_tau = points.iter().map(|x| design.tau(x)).collect();
    data.save(&args.out).with_context(|| format!("cannot write {}", args.out.display()))?;

    let truth = Truth {
        design: design.name(),
        n: args.n,
        d,
        q: (design.kind == DesignKind::Dense).then_some(design.q),
        seed: args.seed,
        data: args.out.display().to_string(),
        test_points: points,
        true_tau,
    };
    let sidecar = sidecar_path(&args.out);
    serde_json::to_writer_pretty(create(&sidecar)?, &truth)?;
    if let Some(path) = &args.points_out {
        let mut wtr = create(path)?;
        write_points(&mut wtr, &truth.test_points)?;
    }
    log::info!("wrote {} rows to {} and truth to {}", args.n, args.out.display(), sidecar.display());
    Ok(())
}

fn write_points<W: std::io::Write>(mut w: W, points: &[Vec<f64>]) -> Result<()> {
    let d = points.first().map_or(0, Vec::len);
    let header: Vec<String> = (1..=d).map(|j| format!("x{j}")).collect();
    writeln!(w, "{}", header.join(","))?;
    for x in points {
        let row: Vec<String> = x.iter().map(f64::to_string).collect();
        writeln!(w, "{}", row.join(","))?;
    }
    Ok(())
}

fn train(args: TrainArgs, exec: Exec) -> Result<()> {
    let base = match &args.config {
        Some(path) => {
            let text = fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
            Some(ForestConfig::from_json(&text).with_context(|| format!("invalid config {}", path.display()))?)
        }
        None => None,
    };
    let mode = match (args.mode, &base) {
        (Some(m), _) => m,
        (None, Some(cfg)) => cfg.mode,
        (None, None) => bail!("--mode is required without --config"),
    };
    let data = Dataset::load(&args.data, mode.is_causal())
        .with_context(|| format!("cannot load dataset {}", args.data.display()))?;
    let mut cfg = base.unwrap_or_else(|| ForestConfig::new(mode, data.n()));
    cfg.mode = mode;
    if let Some(b) = args.trees {
        cfg.num_trees = b;
    }
    if let Some(s) = args.subsample {
        cfg.subsample_size = s;
    }
    if let Some(k) = args.min_leaf {
        cfg.min_leaf = k;
    }
    if let Some(a) = args.alpha {
        cfg.alpha = a;
    }
    if let Some(p) = args.pi {
        cfg.pi = p;
    }
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    let start = Instant::now();
    let forest = Forest::train_with(&data, &cfg, exec)?;
    forest.save(&args.model_out).with_context(|| format!("cannot write {}", args.model_out.display()))?;
    log::info!(
        "trained {} {} trees on {} rows in {:.2}s; saved to {}",
        cfg.num_trees,
        cfg.mode,
        data.n(),
        start.elapsed().as_secs_f64(),
        args.model_out.display()
    );
    Ok(())
}

fn predict(args: PredictArgs, exec: Exec) -> Result<()> {
    ensure!(args.ci_level > 0.0 && args.ci_level < 1.0, "--ci-level must lie in (0, 1)");
    let points = load_points(&args.points).with_context(|| format!("cannot load points {}", args.points.display()))?;
    let (results, method) = if let Some(k) = args.knn {
        let path = args.data.as_ref().expect("clap enforces --data");
        let data = Dataset::load(path, true).with_context(|| format!("cannot load dataset {}", path.display()))?;
        let matcher = KnnMatcher::new(&data)?;
        let results = points
            .iter()
            .map(|x| matcher.estimate(x, k)?.to_prediction(args.ci_level))
            .collect::<grove::Result<Vec<PredictionResult>>>()?;
        (results, Some(format!("knn-{k}")))
    } else {
        let path = args.model.as_ref().expect("clap enforces --model");
        let forest = Forest::load(path).with_context(|| format!("cannot load model {}", path.display()))?;
        (forest.predict_with_ci_using(&points, args.ci_level, args.variance, exec)?, None)
    };
    write_predictions_csv(create(&args.out)?, &points, &results, method.as_deref())?;
    log::info!("wrote {} predictions to {}", results.len(), args.out.display());
    Ok(())
}

fn experiment(args: ExperimentArgs, exec: Exec) -> Result<()> {
    fs::create_dir_all(&args.out).with_context(|| format!("cannot create {}", args.out.display()))?;
    let start = Instant::now();
    let mut meta = RunMetadata::new(&args.table, args.scale, args.seed);
    meta.parallel = exec.is_parallel();
    let variance = VarianceKind::default();
    meta.notes.push(format!("forest variance estimate: {variance}"));

    if args.table == "qq" {
        ensure!(args.scale > 0.0 && args.scale <= 1.0, "--scale must lie in (0, 1]");
        let sets = ((20.0 * args.scale).round() as usize).max(10);
        let points = ((1000.0 * args.scale).round() as usize).max(100);
        let spec = ForestSpec::new(ForestMode::Propensity, 1000, 80);
        let report = qq_diagnostic(&Design::confounded(20)?, 800, &spec, sets, points, args.seed, exec)?;
        write_qq_csv(create(&args.out.join("qq_pairs.csv"))?, &report)?;
        meta.notes.extend([
            "confounded design, n = 800, d = 20, propensity forest with B = 1000 and s = 80".to_string(),
            format!("training sets: {sets}, test points: {points}, constant points: {}", report.constant_points),
            format!("qq correlation: {}", report.correlation),
            format!("skewness: {}", report.skewness),
        ]);
        println!("qq correlation {:.4}, skewness {:.4}", report.correlation, report.skewness);
    } else {
        let table: TableId = args.table.parse()?;
        let cells = run_table(table, args.scale, args.seed, exec)?;
        write_cells_csv(create(&args.out.join(format!("{table}_cells.csv")))?, &cells)?;
        write_table_layout(create(&args.out.join(format!("{table}_table.csv")))?, &cells, table.layout_metrics())?;
        let failed: usize = cells.iter().map(|c| c.failed).sum();
        if failed > 0 {
            meta.notes.push(format!("{failed} replicate evaluations failed and were excluded"));
        }
        println!("{} cells written to {}", cells.len(), args.out.display());
    }
    meta.elapsed_seconds = start.elapsed().as_secs_f64();
    write_metadata(create(&args.out.join(format!("{}_metadata.json", args.table)))?, &meta)?;
    Ok(())
}
