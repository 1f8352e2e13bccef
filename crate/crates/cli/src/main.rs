//! `mvhawkes` command-line interface.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::Value;

use mvhawkes::infer::{self, check_assumptions, fit_mle, AssumptionReport, FitOptions, FitResult};
use mvhawkes::represent::{build_ansatz, l1_discrepancy};
use mvhawkes::simulate::simulate_target;
use mvhawkes::stability::{branching_matrix, Stationarity};
use mvhawkes::study::{mae_slope, run_study, RunOptions, StudyConfig};
use mvhawkes::{
    EventStream, KernelConvention, MarkPartition, MvParams, SimConfig, SquareMatrix, TargetSpec,
};

#[derive(Parser)]
#[command(name = "mvhawkes", version, about = "Multivariate Hawkes representations of marked Hawkes processes")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a marked target process and write events CSV plus sidecar JSON.
    Simulate(SimulateArgs),
    /// Build ansatz parameters for several K and tabulate their L1 discrepancy.
    Represent(RepresentArgs),
    /// Fit a K-component representation by maximum likelihood.
    Fit(FitArgs),
    /// Branching matrix, spectral radius and identifiability checks.
    Check(CheckArgs),
    /// Run the simulate-fit-aggregate study.
    Study(StudyArgs),
}

#[derive(Args)]
struct SimulateArgs {
    /// Target process description (JSON).
    #[arg(long)]
    spec: PathBuf,
    #[arg(long)]
    horizon: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 0)]
    stream: u64,
    #[arg(long)]
    max_events: Option<usize>,
    /// Output CSV; the descriptor goes next to it with a `.json` extension.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct RepresentArgs {
    #[arg(long)]
    spec: PathBuf,
    /// Comma-separated component counts.
    #[arg(long, value_delimiter = ',', required = true)]
    k: Vec<usize>,
    /// Condition both intensities on this stream instead of simulating one.
    #[arg(long, conflicts_with_all = ["horizon", "seed"])]
    events: Option<PathBuf>,
    #[arg(long, required_unless_present = "events")]
    horizon: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum Init {
    Poisson,
    Ansatz,
    File,
}

#[derive(Args)]
struct FitArgs {
    #[arg(long)]
    events: PathBuf,
    #[arg(long)]
    k: usize,
    #[arg(long, default_value = "density")]
    kernel_convention: KernelConvention,
    #[arg(long, value_enum, default_value = "poisson")]
    init: Init,
    /// Target spec for `--init ansatz`.
    #[arg(long, required_if_eq("init", "ansatz"))]
    spec: Option<PathBuf>,
    /// Parameter JSON for `--init file`.
    #[arg(long, required_if_eq("init", "file"))]
    init_file: Option<PathBuf>,
    #[arg(long, default_value_t = 3)]
    restarts: usize,
    #[arg(long, default_value_t = 1e-6)]
    tol: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CheckArgs {
    /// Parameters: a bare parameter object, a fit result or an ansatz file.
    #[arg(long)]
    params: PathBuf,
    /// Stream for the observation check; also fixes the partition.
    #[arg(long)]
    events: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct StudyArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    resume: bool,
    #[arg(long)]
    workers: Option<usize>,
    /// Stop after this many new work items.
    #[arg(long)]
    max_items: Option<usize>,
}

fn main() {
    if let Err(e) = run(Cli::parse()) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate(a) => simulate(a),
        Command::Represent(a) => represent(a),
        Command::Fit(a) => fit(a),
        Command::Check(a) => check(a),
        Command::Study(a) => study(a),
    }
}

fn read_json(path: &Path) -> Result<Value> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn read_spec(path: &Path) -> Result<TargetSpec> {
    serde_json::from_value(read_json(path)?).with_context(|| format!("target spec {}", path.display()))
}

fn write_output(out: Option<&Path>, body: &str) -> Result<()> {
    match out {
        Some(path) => {
            if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
                fs::create_dir_all(dir)?;
            }
            fs::write(path, body).with_context(|| format!("writing {}", path.display()))
        }
        None => {
            print!("{body}");
            Ok(())
        }
    }
}

fn simulate(a: SimulateArgs) -> Result<()> {
    let spec = read_spec(&a.spec)?;
    let mut cfg = SimConfig::new(a.horizon, a.seed)?.with_stream(a.stream);
    if let Some(m) = a.max_events {
        cfg = cfg.with_max_events(m)?;
    }
    let stream = simulate_target(&spec, &cfg)?;
    let sidecar = stream.write(&a.out)?;
    eprintln!(
        "{} events on [0, {}] -> {} ({})",
        stream.len(),
        stream.horizon(),
        a.out.display(),
        sidecar.display()
    );
    Ok(())
}

fn represent(a: RepresentArgs) -> Result<()> {
    let spec = read_spec(&a.spec)?;
    let stream = match (&a.events, a.horizon) {
        (Some(path), _) => EventStream::read(path)?,
        (None, Some(h)) => simulate_target(&spec, &SimConfig::new(h, a.seed.unwrap_or(0))?)?,
        (None, None) => bail!("either --events or --horizon is required"),
    };
    fs::create_dir_all(&a.out_dir)?;
    let mut table = String::from("K,l1,nodes\n");
    for &k in &a.k {
        let partition = MarkPartition::uniform(&spec.space, k)?;
        let ansatz = build_ansatz(&spec, &partition)?;
        let doc = serde_json::json!({ "k": k, "partition": partition, "ansatz": ansatz });
        let path = a.out_dir.join(format!("ansatz_k{k}.json"));
        fs::write(&path, serde_json::to_string_pretty(&doc)? + "\n")?;
        let report = l1_discrepancy(&spec, &ansatz.params, &partition, &stream)?;
        writeln!(table, "{k},{},{}", report.l1, report.quadrature_nodes)?;
        eprintln!("K={k}: l1 {:.6}", report.l1);
    }
    fs::write(a.out_dir.join("discrepancy.csv"), table)?;
    Ok(())
}

/// Fit output: the fit result plus the partition it refers to.
#[derive(Serialize)]
struct FitDocument {
    k: usize,
    partition: MarkPartition,
    #[serde(flatten)]
    fit: FitResult,
}

/// Accepts a bare parameter object or any document with a `params` field,
/// including `{"ansatz": {"params": ...}}`.
fn extract_params(doc: &Value) -> Result<MvParams> {
    let node = doc
        .get("params")
        .or_else(|| doc.get("ansatz").and_then(|a| a.get("params")))
        .unwrap_or(doc);
    Ok(serde_json::from_value(node.clone())?)
}

fn fit(a: FitArgs) -> Result<()> {
    let stream = EventStream::read(&a.events)?;
    let partition = MarkPartition::uniform(stream.space(), a.k)?;
    let init = match a.init {
        Init::Poisson => infer::poisson_start(&partition, &stream, a.kernel_convention)?,
        Init::Ansatz => {
            let spec = read_spec(a.spec.as_deref().expect("required by clap"))?;
            if spec.space != *stream.space() {
                bail!("target spec and events use different mark spaces");
            }
            let mut p = build_ansatz(&spec, &partition)?.params;
            convert_kernel(&mut p, a.kernel_convention);
            p
        }
        Init::File => {
            let mut p = extract_params(&read_json(a.init_file.as_deref().expect("required by clap"))?)?;
            if p.dim() != a.k {
                bail!("initial parameters have {} components, --k is {}", p.dim(), a.k);
            }
            convert_kernel(&mut p, a.kernel_convention);
            p
        }
    };
    let opts = FitOptions {
        restarts: a.restarts,
        seed: a.seed,
        tol: a.tol,
        ..FitOptions::default()
    };
    let result = fit_mle(&partition, &stream, &init, &opts)?;
    eprintln!(
        "loglik {:.6}, {:?} after {} iterations",
        result.loglik, result.termination, result.iterations
    );
    let doc = FitDocument {
        k: a.k,
        partition,
        fit: result,
    };
    write_output(a.out.as_deref(), &(serde_json::to_string_pretty(&doc)? + "\n"))
}

/// Rescales excitation so the kernel masses are unchanged under `to`.
fn convert_kernel(p: &mut MvParams, to: KernelConvention) {
    if p.kernel == to {
        return;
    }
    let k = p.dim();
    let mass = p.kernel_mass();
    p.excitation = SquareMatrix::from_fn(k, |i, j| mass[(i, j)] / to.mass(p.decay[(i, j)]));
    p.kernel = to;
}

#[derive(Serialize)]
struct CheckReport {
    branching_matrix: SquareMatrix,
    spectral_radius: f64,
    verdict: Stationarity,
    assumptions: AssumptionReport,
}

fn check(a: CheckArgs) -> Result<()> {
    let doc = read_json(&a.params)?;
    let params = extract_params(&doc)?;
    let stream = a.events.as_deref().map(EventStream::read).transpose()?;
    let partition = match (doc.get("partition"), &stream) {
        (Some(p), _) => serde_json::from_value::<MarkPartition>(p.clone())?,
        (None, Some(s)) => MarkPartition::uniform(s.space(), params.dim())?,
        (None, None) => bail!("parameters carry no partition; supply --events"),
    };
    if let Some(s) = &stream {
        if s.space() != partition.space() {
            bail!("events and partition use different mark spaces");
        }
    }
    let b = branching_matrix(&params, &partition)?;
    let report = CheckReport {
        verdict: Stationarity::classify(b.spectral_radius),
        spectral_radius: b.spectral_radius,
        assumptions: check_assumptions(&params, &partition, stream.as_ref())?,
        branching_matrix: b.matrix,
    };
    eprintln!("spectral radius {:.6} ({:?})", report.spectral_radius, report.verdict);
    write_output(a.out.as_deref(), &(serde_json::to_string_pretty(&report)? + "\n"))
}

fn study(a: StudyArgs) -> Result<()> {
    let mut cfg = StudyConfig::read(&a.config)?;
    if let Some(w) = a.workers {
        cfg.workers = w;
    }
    let opts = RunOptions {
        resume: a.resume,
        max_items: a.max_items,
    };
    let out = run_study(&cfg, &opts)?;
    if !out.complete {
        eprintln!(
            "stopped early with {} rows; rerun with --resume to continue",
            out.rows.len()
        );
        return Ok(());
    }
    for &k in &cfg.k_values {
        match mae_slope(&out.summary, k) {
            Ok(s) => eprintln!("K={k}: log-log MAE slope {s:.3}"),
            Err(e) => eprintln!("K={k}: {e}"),
        }
    }
    eprintln!("results in {}", out.output_dir.display());
    Ok(())
}
