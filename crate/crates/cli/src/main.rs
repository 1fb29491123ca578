//! `adascale` command-line driver.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use adascale_core::demo::{prepare, run_demo, DemoConfig, DemoReport};
use adascale_core::dump::{read_dump, write_dump, Dataset, LOGIT_CHECK_TOL};
use adascale_core::latency::{bench_percentile, DEFAULT_DIMS, DEFAULT_TRIALS};
use adascale_core::metrics::{auroc, fpr_at_95_tpr};
use adascale_core::pipeline::{
    default_p_max_grid, load_calibration, load_scores, react_clip_from, run_calibration,
    run_evaluation, run_scoring_with, run_sweep, save_calibration, save_report, save_scores,
};
use adascale_core::{compute_q, Hyperparams, Method, MethodConfig, PixelMode, ReferenceNet};
use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "adascale", version, about = "Adaptive activation scaling for OOD detection")]
struct Cli {
    /// Worker threads for per-record work.
    #[arg(long, global = true, env = "ADASCALE_THREADS")]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build the eCDF calibration from an ID dump.
    Calibrate(CalibrateArgs),
    /// Score every record of a dump with one method.
    Score(ScoreArgs),
    /// AUROC and FPR@95 from an ID and an OOD score file.
    Evaluate(EvaluateArgs),
    /// Tune p_max on validation data with p_min fixed.
    Sweep(SweepArgs),
    /// Synthetic end-to-end experiment on Gaussian blobs.
    Demo(DemoArgs),
    /// Fixed- vs variable-percentile latency.
    BenchPercentile(BenchArgs),
    /// Raw shift term Q as a detection score, without scaling.
    RawQ(RawQArgs),
}

#[derive(Args, Clone)]
struct HpArgs {
    #[arg(long, default_value_t = 10.0)]
    lambda: f64,
    #[arg(long, default_value_t = 0.01)]
    k1: f64,
    #[arg(long, default_value_t = 0.05)]
    k2: f64,
    #[arg(long, default_value_t = 0.05)]
    o: f64,
    #[arg(long, default_value_t = 0.5, allow_negative_numbers = true)]
    epsilon: f64,
    #[arg(long, default_value_t = 60.0)]
    p_min: f64,
    #[arg(long, default_value_t = 85.0)]
    p_max: f64,
    #[arg(long, default_value = "trivial", value_parser = parse_pixel_mode)]
    pixel_mode: PixelMode,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

impl HpArgs {
    fn hyperparams(&self) -> Hyperparams {
        Hyperparams {
            lambda: self.lambda,
            k1_frac: self.k1,
            k2_frac: self.k2,
            o_frac: self.o,
            epsilon: self.epsilon,
            p_min: self.p_min,
            p_max: self.p_max,
            pixel_mode: self.pixel_mode,
            seed: self.seed,
        }
    }
}

fn parse_pixel_mode(s: &str) -> Result<PixelMode, String> {
    s.parse().map_err(|e: adascale_core::Error| e.to_string())
}

fn parse_method(s: &str) -> Result<Method, String> {
    s.parse().map_err(|e: adascale_core::Error| e.to_string())
}

#[derive(Args)]
struct CalibrateArgs {
    #[arg(long)]
    dump: PathBuf,
    /// Network used to generate perturbed activations when the dump has none.
    #[arg(long)]
    net: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    /// Check W·a + b against stored logits.
    #[arg(long)]
    verify_logits: bool,
    #[command(flatten)]
    hp: HpArgs,
}

#[derive(Args)]
struct ScoreArgs {
    #[arg(long)]
    dump: PathBuf,
    #[arg(long, value_parser = parse_method)]
    method: Method,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    calibration: Option<PathBuf>,
    #[arg(long)]
    net: Option<PathBuf>,
    /// Fixed percentile for scale, lts and ash_s (default 85, ash_s 90).
    #[arg(long)]
    p: Option<f64>,
    /// ReAct clip threshold.
    #[arg(long, allow_negative_numbers = true, conflicts_with = "clip_from")]
    clip: Option<f64>,
    /// ID dump whose activations set the ReAct clip.
    #[arg(long)]
    clip_from: Option<PathBuf>,
    #[arg(long, default_value_t = 90.0)]
    clip_percentile: f64,
    #[arg(long)]
    verify_logits: bool,
    #[command(flatten)]
    hp: HpArgs,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    id: PathBuf,
    #[arg(long)]
    ood: PathBuf,
    /// Write the report here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long)]
    id_dump: PathBuf,
    #[arg(long)]
    ood_dump: PathBuf,
    #[arg(long)]
    calibration: PathBuf,
    #[arg(long, default_value = "adascale_a", value_parser = parse_method)]
    method: Method,
    /// Comma-separated p_max values (default 60,65,…,95).
    #[arg(long, value_delimiter = ',')]
    grid: Option<Vec<f64>>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    hp: HpArgs,
}

#[derive(Args)]
struct DemoArgs {
    #[arg(long, default_value_t = 7)]
    seed: u64,
    /// Metrics JSON destination.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write the generated splits and trained network as dumps.
    #[arg(long)]
    export_dir: Option<PathBuf>,
    #[arg(long, default_value = "trivial", value_parser = parse_pixel_mode)]
    pixel_mode: PixelMode,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long, value_delimiter = ',')]
    dims: Option<Vec<usize>>,
    #[arg(long, default_value_t = DEFAULT_TRIALS)]
    trials: usize,
    #[arg(long, default_value_t = 3)]
    repeats: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct RawQArgs {
    #[arg(long)]
    id_dump: PathBuf,
    #[arg(long)]
    ood_dump: PathBuf,
    #[arg(long, default_value_t = 0.01)]
    k1: f64,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn load(path: &Path, verify: bool) -> Result<Dataset> {
    let ds = read_dump(path).with_context(|| format!("reading dump {}", path.display()))?;
    if verify {
        ds.verify_logits(LOGIT_CHECK_TOL)?;
    }
    Ok(ds)
}

fn load_net(path: Option<&PathBuf>) -> Result<Option<ReferenceNet>> {
    path.map(|p| ReferenceNet::load(p).with_context(|| format!("reading network {}", p.display())))
        .transpose()
}

fn emit_json(out: Option<&Path>, value: &impl serde::Serialize) -> Result<()> {
    let text = serde_json::to_string_pretty(value)? + "\n";
    match out {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display()))?,
        None => print!("{text}"),
    }
    Ok(())
}

fn calibrate(args: CalibrateArgs) -> Result<()> {
    let ds = load(&args.dump, args.verify_logits)?;
    let net = load_net(args.net.as_ref())?;
    let cal = run_calibration(&ds, &args.hp.hyperparams(), net.as_ref())?;
    save_calibration(&args.out, &cal)?;
    Ok(())
}

fn score(args: ScoreArgs) -> Result<()> {
    let ds = load(&args.dump, args.verify_logits)?;
    let net = load_net(args.net.as_ref())?;
    let mut cfg = MethodConfig::new(args.method).with_hyperparams(args.hp.hyperparams());
    if args.method.is_adaptive() {
        let Some(path) = &args.calibration else {
            bail!("method {} requires --calibration", args.method);
        };
        cfg = cfg.with_calibration(load_calibration(path)?);
    }
    if args.method.needs_fixed_percentile() {
        let default = if args.method == Method::AshS { 90.0 } else { 85.0 };
        cfg = cfg.with_fixed_p(args.p.unwrap_or(default));
    }
    if args.method == Method::React {
        let clip = match (args.clip, &args.clip_from) {
            (Some(c), _) => c,
            (None, Some(id)) => react_clip_from(&load(id, false)?, args.clip_percentile)?,
            (None, None) => bail!("method react requires --clip or --clip-from"),
        };
        cfg = cfg.with_clip(clip);
    }
    let scores = run_scoring_with(&ds, &cfg, net.as_ref())?;
    save_scores(&args.out, &scores)?;
    Ok(())
}

fn evaluate(args: EvaluateArgs) -> Result<()> {
    let report = run_evaluation(&load_scores(&args.id)?, &load_scores(&args.ood)?)?;
    match &args.out {
        Some(p) => save_report(p, &report)?,
        None => emit_json(None, &report)?,
    }
    Ok(())
}

fn sweep(args: SweepArgs) -> Result<()> {
    let id = load(&args.id_dump, false)?;
    let ood = load(&args.ood_dump, false)?;
    let cfg = MethodConfig::new(args.method)
        .with_hyperparams(args.hp.hyperparams())
        .with_calibration(load_calibration(&args.calibration)?);
    let grid = args.grid.unwrap_or_else(default_p_max_grid);
    let result = run_sweep(&id, &ood, &cfg, &grid)?;
    emit_json(args.out.as_deref(), &result)
}

fn print_demo_table(rep: &DemoReport) {
    println!(
        "reference net: train acc {:.4}, test acc {:.4}",
        rep.train_accuracy, rep.test_accuracy
    );
    println!(
        "mean Q: ID {:.6}, OOD {:.6} (ratio {:.4})",
        rep.mean_q_id,
        rep.mean_q_ood,
        rep.mean_q_ood / rep.mean_q_id
    );
    println!("{:<12} {:>8} {:>9}", "method", "AUROC", "FPR@95");
    for r in &rep.results {
        println!("{:<12} {:>8.4} {:>9.4}", r.method.as_str(), r.auroc, r.fpr_at_95);
    }
}

fn demo(args: DemoArgs) -> Result<()> {
    let mut cfg = DemoConfig {
        seed: args.seed,
        ..DemoConfig::default()
    };
    cfg.hyperparams.pixel_mode = args.pixel_mode;
    let report = run_demo(&cfg)?;
    print_demo_table(&report);
    if let Some(out) = &args.out {
        emit_json(Some(out), &report)?;
    }
    if let Some(dir) = &args.export_dir {
        let data = prepare(&cfg)?;
        write_dump(dir.join("id_calib"), &data.calib)?;
        write_dump(dir.join("id_test"), &data.test)?;
        write_dump(dir.join("ood"), &data.ood)?;
        data.net.save(dir.join("net"))?;
    }
    Ok(())
}

fn bench(args: BenchArgs) -> Result<()> {
    let dims = args.dims.unwrap_or_else(|| DEFAULT_DIMS.to_vec());
    let rows = bench_percentile(&dims, args.trials, args.repeats, args.seed)?;
    println!("{:>6} {:>12} {:>14} {:>7}", "D", "fixed (us)", "variable (us)", "ratio");
    for r in &rows {
        println!("{:>6} {:>12.3} {:>14.3} {:>7.2}", r.dim, r.fixed_us, r.variable_us, r.ratio);
    }
    if let Some(out) = &args.out {
        emit_json(Some(out), &rows)?;
    }
    Ok(())
}

#[derive(serde::Serialize)]
struct RawQReport {
    k1: usize,
    auroc: f64,
    fpr_at_95: f64,
    tau: f64,
    n_id: usize,
    n_ood: usize,
}

fn raw_q(args: RawQArgs) -> Result<()> {
    let id = load(&args.id_dump, false)?;
    let ood = load(&args.ood_dump, false)?;
    let k1 = adascale_core::types::count_from_frac(args.k1, id.head.dim());
    let q = |ds: &Dataset| -> Result<Vec<f64>> {
        ds.records
            .iter()
            .map(|r| Ok(compute_q(&r.a, r.perturbed()?, k1)?))
            .collect()
    };
    let (qi, qo) = (q(&id)?, q(&ood)?);
    let (fpr_at_95, tau) = fpr_at_95_tpr(&qi, &qo)?;
    let report = RawQReport {
        k1,
        auroc: auroc(&qi, &qo)?,
        fpr_at_95,
        tau,
        n_id: qi.len(),
        n_ood: qo.len(),
    };
    emit_json(args.out.as_deref(), &report)
}

fn run(cli: Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build_global()
            .context("configuring worker threads")?;
    }
    match cli.command {
        Command::Calibrate(a) => calibrate(a),
        Command::Score(a) => score(a),
        Command::Evaluate(a) => evaluate(a),
        Command::Sweep(a) => sweep(a),
        Command::Demo(a) => demo(a),
        Command::BenchPercentile(a) => bench(a),
        Command::RawQ(a) => raw_q(a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let msg = format!("{e:#}").replace('\n', " ");
            eprintln!("error: {msg}");
            ExitCode::FAILURE
        }
    }
}
