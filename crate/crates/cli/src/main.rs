//! `objassoc`: generate synthetic sequences, run the association pipeline,
//! score maps and compare the grouped pipeline against the per-keyframe
//! baseline.
//!
//! Exit codes: 0 success, 2 configuration error, 3 data error.

use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use objassoc::io::{self, RunManifest, FILE_EXTENSION};
use objassoc::{
    evaluate, generate, preset, run_association, Dataset, EvalReport, LandmarkSummary,
    PipelineConfig,
};
use objassoc::{ScenarioConfig, PRESETS};
use sha2::{Digest, Sha256};

#[derive(Parser)]
#[command(
    name = "objassoc",
    version,
    about = "Hierarchical object data association"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset.
    Synth(SynthArgs),
    /// Run the association pipeline on a dataset.
    Run(RunArgs),
    /// Score a map against the dataset's ground truth.
    Eval(EvalArgs),
    /// Grouped pipeline versus the per-keyframe baseline over several seeds.
    Compare(CompareArgs),
}

#[derive(Args)]
#[group(id = "scenario", required = true, multiple = false)]
struct ScenarioSource {
    /// Built-in scenario name.
    #[arg(long, group = "scenario")]
    preset: Option<String>,
    /// Scenario file (TOML).
    #[arg(long = "config", group = "scenario")]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct SynthArgs {
    #[command(flatten)]
    source: ScenarioSource,
    /// Overrides the scenario seed.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(short, long)]
    out: PathBuf,
}

#[derive(Args)]
struct RunArgs {
    dataset: PathBuf,
    /// Pipeline configuration (TOML).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Per-keyframe baseline: group size 1, overlap 0.
    #[arg(long)]
    flat: bool,
    /// Overrides the association seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Map output.
    #[arg(short, long)]
    out: PathBuf,
    /// Assignment output; defaults to the map path with an `.assignments` infix.
    #[arg(long)]
    assignments: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    map: PathBuf,
    dataset: PathBuf,
    /// Report output.
    #[arg(short, long)]
    out: PathBuf,
    /// CSV file to append a summary row to.
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Args)]
struct CompareArgs {
    /// Dataset to compare on; its association seed is varied.
    #[arg(required_unless_present = "preset", conflicts_with = "preset")]
    dataset: Option<PathBuf>,
    /// Built-in scenario; dataset and association seeds are both varied.
    #[arg(long)]
    preset: Option<String>,
    /// Pipeline configuration (TOML) for the grouped run.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value_t = 10)]
    seeds: u64,
    /// CSV file receiving the per-seed rows.
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Debug)]
enum CliError {
    Config(String),
    Data(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Data(_) => 3,
        }
    }
}

impl From<objassoc::Error> for CliError {
    fn from(e: objassoc::Error) -> Self {
        match e {
            objassoc::Error::InvalidConfig(_) => CliError::Config(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

type CliResult<T> = Result<T, CliError>;

fn data_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Data(format!("{}: {e}", path.display()))
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn load_scenario(src: &ScenarioSource) -> CliResult<ScenarioConfig> {
    match (&src.preset, &src.config) {
        (Some(name), _) => preset(name).map_err(|_| {
            CliError::Config(format!(
                "unknown preset '{name}', expected one of {}",
                PRESETS.join(", ")
            ))
        }),
        (None, Some(path)) => Ok(ScenarioConfig::load(path)?),
        (None, None) => Err(CliError::Config("need --preset or --config".into())),
    }
}

fn load_pipeline(path: Option<&Path>) -> CliResult<PipelineConfig> {
    Ok(match path {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::default(),
    })
}

fn read_dataset(path: &Path) -> CliResult<(Dataset, String)> {
    let text = fs::read_to_string(path).map_err(|e| data_err(path, e))?;
    let ds = io::parse_dataset(&text).map_err(|e| data_err(path, e))?;
    Ok((ds, sha256_hex(text.as_bytes())))
}

fn write_file(path: &Path, text: &str) -> CliResult<()> {
    fs::write(path, text).map_err(|e| data_err(path, e))
}

fn default_assignments_path(map: &Path) -> PathBuf {
    let name = map
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    let stem = name.strip_suffix(FILE_EXTENSION).unwrap_or(&name);
    map.with_file_name(format!("{stem}.assignments{FILE_EXTENSION}"))
}

fn cmd_synth(args: &SynthArgs) -> CliResult<()> {
    let mut cfg = load_scenario(&args.source)?;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    let ds = generate(&cfg)?;
    write_file(&args.out, &io::dataset_to_string(&ds))?;
    println!(
        "{}: {} gt landmarks, {} keyframes, {} measurements -> {}",
        cfg.name,
        ds.gt_landmarks.len(),
        ds.keyframes.len(),
        ds.measurement_count(),
        args.out.display()
    );
    Ok(())
}

fn cmd_run(args: &RunArgs) -> CliResult<()> {
    let mut cfg = load_pipeline(args.config.as_deref())?;
    if args.flat {
        cfg = cfg.flat();
    }
    if let Some(seed) = args.seed {
        cfg = cfg.with_seed(seed);
    }
    cfg.validate()?;
    let (ds, digest) = read_dataset(&args.dataset)?;
    let run = run_association(&ds.keyframes, &cfg)?;
    let manifest = RunManifest {
        tool_version: env!("CARGO_PKG_VERSION").into(),
        scenario: ds.config.name.clone(),
        dataset_seed: ds.config.seed,
        dataset_digest: Some(digest),
        pipeline: cfg,
    };
    let summaries: Vec<LandmarkSummary> = run.landmarks.iter().map(LandmarkSummary::from).collect();
    write_file(&args.out, &io::map_to_string(&manifest, &summaries))?;
    let assignments_path = args
        .assignments
        .clone()
        .unwrap_or_else(|| default_assignments_path(&args.out));
    write_file(
        &assignments_path,
        &io::assignments_to_string(&run.assignments),
    )?;
    println!(
        "{} groups, {} tracks, {} landmarks -> {}, {}",
        run.group_count,
        run.track_count,
        summaries.len(),
        args.out.display(),
        assignments_path.display()
    );
    Ok(())
}

const CSV_HEADER: &str =
    "scenario,dataset_seed,group_size,group_overlap,assoc_seed,association_accuracy,predicted_count,gt_count,count_error,landmark_pose_rmse_pos,landmark_pose_rmse_rot";

fn csv_row(r: &EvalReport) -> String {
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    format!(
        "{},{},{},{},{},{},{},{},{},{},{}",
        r.scenario,
        r.dataset_seed,
        r.group_size,
        r.group_overlap,
        r.assoc_seed,
        r.association_accuracy,
        r.predicted_count,
        r.gt_count,
        r.count_error,
        opt(r.landmark_pose_rmse_pos),
        opt(r.landmark_pose_rmse_rot)
    )
}

fn append_csv(path: &Path, header: &str, rows: &[String]) -> CliResult<()> {
    let fresh = fs::metadata(path).map(|m| m.len() == 0).unwrap_or(true);
    let mut f = OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(|e| data_err(path, e))?;
    let mut text = String::new();
    if fresh {
        text.push_str(header);
        text.push('\n');
    }
    for r in rows {
        text.push_str(r);
        text.push('\n');
    }
    f.write_all(text.as_bytes()).map_err(|e| data_err(path, e))
}

fn cmd_eval(args: &EvalArgs) -> CliResult<()> {
    let text = fs::read_to_string(&args.map).map_err(|e| data_err(&args.map, e))?;
    let (manifest, landmarks) = io::parse_map(&text).map_err(|e| data_err(&args.map, e))?;
    let (ds, _) = read_dataset(&args.dataset)?;
    let mut report = evaluate(&landmarks, &ds);
    if let Some(m) = &manifest {
        report.group_size = m.pipeline.group_size;
        report.group_overlap = m.pipeline.group_overlap;
        report.assoc_seed = m.pipeline.assoc.seed;
        report.manifest_hash = Some(sha256_hex(io::manifest_to_string(m).as_bytes()));
    }
    write_file(&args.out, &io::report_to_string(&report))?;
    if let Some(csv) = &args.csv {
        append_csv(csv, CSV_HEADER, &[csv_row(&report)])?;
    }
    println!(
        "accuracy {:.2}%, landmarks {} (gt {}) -> {}",
        report.association_accuracy,
        report.predicted_count,
        report.gt_count,
        args.out.display()
    );
    Ok(())
}

struct Outcome {
    accuracy: f64,
    count: usize,
}

struct SeedRow {
    seed: u64,
    gt_count: usize,
    grouped: Outcome,
    flat: Outcome,
}

fn score(ds: &Dataset, cfg: &PipelineConfig) -> objassoc::Result<Outcome> {
    let run = run_association(&ds.keyframes, cfg)?;
    let summaries: Vec<LandmarkSummary> = run.landmarks.iter().map(LandmarkSummary::from).collect();
    let report = evaluate(&summaries, ds);
    Ok(Outcome {
        accuracy: report.association_accuracy,
        count: report.predicted_count,
    })
}

fn compare_seed(
    base: Option<&Dataset>,
    scenario: Option<&ScenarioConfig>,
    cfg: &PipelineConfig,
    seed: u64,
) -> objassoc::Result<SeedRow> {
    let generated;
    let ds = match (base, scenario) {
        (Some(ds), _) => ds,
        (None, Some(sc)) => {
            let mut sc = sc.clone();
            sc.seed = seed;
            generated = generate(&sc)?;
            &generated
        }
        (None, None) => unreachable!("compare needs a dataset or a preset"),
    };
    let grouped_cfg = cfg.clone().with_seed(seed);
    let flat_cfg = grouped_cfg.clone().flat();
    Ok(SeedRow {
        seed,
        gt_count: ds.gt_landmarks.len(),
        grouped: score(ds, &grouped_cfg)?,
        flat: score(ds, &flat_cfg)?,
    })
}

fn cmd_compare(args: &CompareArgs) -> CliResult<()> {
    if args.seeds == 0 {
        return Err(CliError::Config("--seeds must be at least 1".into()));
    }
    let cfg = load_pipeline(args.config.as_deref())?;
    cfg.validate()?;
    let base = match &args.dataset {
        Some(p) => Some(read_dataset(p)?.0),
        None => None,
    };
    let scenario = match &args.preset {
        Some(name) => Some(load_scenario(&ScenarioSource {
            preset: Some(name.clone()),
            config: None,
        })?),
        None => None,
    };

    // seeds are independent; each run is sequential internally
    let results: Vec<objassoc::Result<SeedRow>> = std::thread::scope(|s| {
        let handles: Vec<_> = (0..args.seeds)
            .map(|seed| {
                let (base, scenario, cfg) = (base.as_ref(), scenario.as_ref(), &cfg);
                s.spawn(move || compare_seed(base, scenario, cfg, seed))
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("compare worker panicked"))
            .collect()
    });
    let rows = results.into_iter().collect::<objassoc::Result<Vec<_>>>()?;

    let name = base
        .as_ref()
        .map(|d| d.config.name.clone())
        .or_else(|| scenario.as_ref().map(|s| s.name.clone()))
        .unwrap_or_default();
    println!(
        "{name}: grouped (M={}, j={}) vs flat (M=1, j=0)",
        cfg.group_size, cfg.group_overlap
    );
    println!(
        "{:>6} {:>8} {:>12} {:>8} {:>12} {:>8} {:>9}",
        "seed", "gt", "grouped_acc", "count", "flat_acc", "count", "delta"
    );
    for r in &rows {
        println!(
            "{:>6} {:>8} {:>12.2} {:>8} {:>12.2} {:>8} {:>9.2}",
            r.seed,
            r.gt_count,
            r.grouped.accuracy,
            r.grouped.count,
            r.flat.accuracy,
            r.flat.count,
            r.grouped.accuracy - r.flat.accuracy
        );
    }
    if rows.len() > 1 {
        let n = rows.len() as f64;
        let mean = |f: &dyn Fn(&SeedRow) -> f64| rows.iter().map(f).sum::<f64>() / n;
        let (ga, fa) = (mean(&|r| r.grouped.accuracy), mean(&|r| r.flat.accuracy));
        println!(
            "{:>6} {:>8.2} {:>12.2} {:>8.2} {:>12.2} {:>8.2} {:>9.2}",
            "mean",
            mean(&|r| r.gt_count as f64),
            ga,
            mean(&|r| r.grouped.count as f64),
            fa,
            mean(&|r| r.flat.count as f64),
            ga - fa
        );
        println!("means over {} seeds", rows.len());
    }

    if let Some(csv) = &args.csv {
        let lines: Vec<String> = rows
            .iter()
            .map(|r| {
                format!(
                    "{name},{},{},{},{},{},{},{}",
                    r.seed,
                    r.gt_count,
                    r.grouped.accuracy,
                    r.grouped.count,
                    r.flat.accuracy,
                    r.flat.count,
                    r.grouped.accuracy - r.flat.accuracy
                )
            })
            .collect();
        append_csv(
            csv,
            "scenario,seed,gt_count,grouped_accuracy,grouped_count,flat_accuracy,flat_count,delta",
            &lines,
        )?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Synth(a) => cmd_synth(a),
        Command::Run(a) => cmd_run(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Compare(a) => cmd_compare(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let (CliError::Config(msg) | CliError::Data(msg)) = &e;
            eprintln!("error: {msg}");
            ExitCode::from(e.exit_code())
        }
    }
}
