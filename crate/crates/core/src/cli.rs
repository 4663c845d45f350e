//! Command-line front end: instance generation, sampling, pairwise
//! reduction, success curves, the scaling test, the survey grid, and
//! report folding. Every run drops a `manifest.json` into its output
//! directory describing exactly what produced the files there.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};
use serde_json::json;
use sha2::{Digest, Sha256};

use crate::experiment::{
    self, curve_rows, samples_to_solution, InitialConfig, StsMode, SurveyConfig,
};
use crate::fcl::{self, FclConfig, FclInstance, OverlapLimit, ProblemType};
use crate::mqc;
use crate::sampler::{
    anneal_batch, ingest_batch, random_batch, write_batch, AnnealConfig, BatchSource, Schedule,
};
use crate::{Error, Result};

/// Environment variable naming the default output directory.
pub const OUT_ENV_VAR: &str = "FCLMQC_OUT";

/// Frustrated-loop benchmark instances with tournament-style sample correction.
#[derive(Parser)]
#[command(name = "fclmqc", version, disable_help_subcommand = true)]
struct Cli {
    /// Key=value file supplying defaults; explicit flags win.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Worker threads (results never depend on this).
    #[arg(long, global = true, value_name = "N")]
    jobs: Option<usize>,
    /// Output directory; falls back to $FCLMQC_OUT, then the config file.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate one loop-built instance and write it to instance.txt.
    Generate(GenerateArgs),
    /// Sample an instance file, writing samples.txt.
    Sample(SampleArgs),
    /// Reduce a sample file pairwise down to a single corrected sample.
    Reduce(ReduceArgs),
    /// Success probability per power-of-two group size for one sample file.
    Curve(CurveArgs),
    /// Scaling test: pooled success curves over several loop densities.
    Initial(InitialArgs),
    /// Survey success statistics over an (overlap, size, density) grid.
    Survey(SurveyArgs),
    /// Fold a survey directory into survey.csv and summary.txt.
    Report(ReportArgs),
}

#[derive(Args)]
struct GenerateArgs {
    /// Problem type: 1 (loops of 8+ qubits) or 2 (loops spanning cells).
    #[arg(long = "type", value_name = "T")]
    problem_type: Option<u8>,
    /// Region side length in unit cells.
    #[arg(long, value_name = "C")]
    c: Option<usize>,
    /// Loops per qubit.
    #[arg(long, value_name = "A")]
    alpha: Option<f64>,
    /// Per-coupler loop limit: a positive integer or "inf".
    #[arg(long, value_name = "R")]
    r: Option<String>,
    /// Generation seed.
    #[arg(long, value_name = "SEED")]
    seed: Option<u64>,
}

#[derive(Args)]
struct SampleArgs {
    /// Instance file to sample.
    #[arg(long, value_name = "FILE")]
    problem: Option<PathBuf>,
    /// Number of samples to draw.
    #[arg(long, value_name = "N")]
    samples: Option<usize>,
    /// Sampler: "anneal" or "random".
    #[arg(long, value_name = "SRC")]
    source: Option<String>,
    /// Sweeps per annealed sample.
    #[arg(long, value_name = "N")]
    sweeps: Option<u32>,
    #[arg(long, value_name = "B")]
    beta_start: Option<f64>,
    #[arg(long, value_name = "B")]
    beta_end: Option<f64>,
    /// Inverse-temperature schedule: "linear" or "geometric".
    #[arg(long, value_name = "S")]
    schedule: Option<String>,
    /// Visit qubits in random order within each sweep.
    #[arg(long)]
    random_order: bool,
    /// Base seed; sample i uses seed + i.
    #[arg(long, value_name = "SEED")]
    seed: Option<u64>,
}

#[derive(Args)]
struct ReduceArgs {
    /// Instance file the samples answer.
    #[arg(long, value_name = "FILE")]
    problem: Option<PathBuf>,
    /// Sample file to reduce.
    #[arg(long, value_name = "FILE")]
    samples: Option<PathBuf>,
    /// Also write trace.csv with every tournament node's energy.
    #[arg(long)]
    trace: bool,
}

#[derive(Args)]
struct CurveArgs {
    /// Instance file the samples answer.
    #[arg(long, value_name = "FILE")]
    problem: Option<PathBuf>,
    /// Sample file to judge (length must be a power of two).
    #[arg(long, value_name = "FILE")]
    samples: Option<PathBuf>,
}

#[derive(Args)]
struct InitialArgs {
    /// "desk" (minutes) or "paper" (full scale, hours).
    #[arg(long, value_name = "P")]
    preset: Option<String>,
    /// Problem type: 1 or 2.
    #[arg(long = "type", value_name = "T")]
    problem_type: Option<u8>,
    /// Region side override.
    #[arg(long, value_name = "C")]
    c: Option<usize>,
    /// Comma-separated loop densities override.
    #[arg(long, value_name = "A,A,..")]
    alpha: Option<String>,
    /// Cases per density.
    #[arg(long, value_name = "N")]
    cases: Option<usize>,
    /// Total samples per case.
    #[arg(long, value_name = "N")]
    samples: Option<usize>,
    /// Pooled batch size (power of two).
    #[arg(long, value_name = "N")]
    batch: Option<usize>,
    /// Sweeps per annealed sample.
    #[arg(long, value_name = "N")]
    sweeps: Option<u32>,
    /// Master seed.
    #[arg(long, value_name = "SEED")]
    seed: Option<u64>,
}

#[derive(Args)]
struct SurveyArgs {
    /// "desk" (minutes) or "paper" (full scale, hours).
    #[arg(long, value_name = "P")]
    preset: Option<String>,
    /// Problem type: 1 or 2.
    #[arg(long = "type", value_name = "T")]
    problem_type: Option<u8>,
    /// Comma-separated overlap limits (integers or "inf").
    #[arg(long, value_name = "R,R,..")]
    r: Option<String>,
    /// Comma-separated region sides.
    #[arg(long, value_name = "C,C,..")]
    c: Option<String>,
    /// Comma-separated loop densities.
    #[arg(long, value_name = "A,A,..")]
    alpha: Option<String>,
    /// Cases per cell.
    #[arg(long, value_name = "N")]
    cases: Option<usize>,
    /// Samples per case (power of two).
    #[arg(long, value_name = "N")]
    samples: Option<usize>,
    /// Sweeps per annealed sample.
    #[arg(long, value_name = "N")]
    sweeps: Option<u32>,
    /// Master seed.
    #[arg(long, value_name = "SEED")]
    seed: Option<u64>,
}

#[derive(Args)]
struct ReportArgs {
    /// Survey output directory to fold (defaults to the output directory).
    #[arg(long, value_name = "DIR")]
    dir: Option<PathBuf>,
}

/// A usage mistake (exit 1) as opposed to a library failure (exit 2 or 3).
#[derive(Debug)]
enum Failure {
    Usage(String),
    Lib(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

type CliResult<T> = std::result::Result<T, Failure>;

fn usage<T>(msg: impl Into<String>) -> CliResult<T> {
    Err(Failure::Usage(msg.into()))
}

/// Entry point; returns the process exit code.
pub fn main() -> i32 {
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .try_init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli) {
        Ok(()) => 0,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            1
        }
        Err(Failure::Lib(e)) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

/// Key=value defaults loaded from `--config`.
#[derive(Debug)]
struct FileConfig(BTreeMap<String, String>);

const CONFIG_KEYS: &[&str] = &[
    "out", "jobs", "type", "c", "alpha", "r", "seed", "samples", "source", "sweeps",
    "beta_start", "beta_end", "schedule", "random_order", "cases", "batch", "preset",
    "problem", "dir",
];

impl FileConfig {
    fn load(path: Option<&Path>) -> Result<FileConfig> {
        let mut map = BTreeMap::new();
        let Some(path) = path else {
            return Ok(FileConfig(map));
        };
        let text = fs::read_to_string(path)?;
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(Error::Format {
                    line: idx + 1,
                    message: format!("expected key=value, got {line:?}"),
                });
            };
            let key = key.trim().to_string();
            if !CONFIG_KEYS.contains(&key.as_str()) {
                return Err(Error::Format {
                    line: idx + 1,
                    message: format!("unknown configuration key {key:?}"),
                });
            }
            map.insert(key, value.trim().to_string());
        }
        Ok(FileConfig(map))
    }

    /// Parses the config-file value for `key`, if present.
    fn get<T: FromStr>(&self, key: &str) -> CliResult<Option<T>> {
        match self.0.get(key) {
            None => Ok(None),
            Some(raw) => match raw.parse() {
                Ok(v) => Ok(Some(v)),
                Err(_) => usage(format!("bad config value {raw:?} for key {key:?}")),
            },
        }
    }
}

/// Flag beats config file beats built-in default.
fn pick<T>(flag: Option<T>, file: Option<T>, default: T) -> T {
    flag.or(file).unwrap_or(default)
}

fn resolve_out(flag: Option<PathBuf>, config: &FileConfig) -> CliResult<PathBuf> {
    if let Some(p) = flag {
        return Ok(p);
    }
    if let Ok(p) = std::env::var(OUT_ENV_VAR) {
        if !p.is_empty() {
            return Ok(PathBuf::from(p));
        }
    }
    if let Some(p) = config.0.get("out") {
        return Ok(PathBuf::from(p));
    }
    usage(format!(
        "no output directory: pass --out, set ${OUT_ENV_VAR}, or put out= in the config file"
    ))
}

fn parse_problem_type(flag: Option<u8>, config: &FileConfig) -> CliResult<ProblemType> {
    let code = pick(flag, config.get("type")?, 1);
    match ProblemType::from_code(code) {
        Ok(t) => Ok(t),
        Err(_) => usage(format!("problem type must be 1 or 2, got {code}")),
    }
}

fn parse_r(token: &str) -> CliResult<OverlapLimit> {
    token
        .parse()
        .map_err(|_| Failure::Usage(format!("bad overlap limit {token:?}: use a positive integer or \"inf\"")))
}

fn parse_list<T>(raw: &str, what: &str, parse: impl Fn(&str) -> CliResult<T>) -> CliResult<Vec<T>> {
    let items: Vec<T> = raw
        .split(',')
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .map(parse)
        .collect::<CliResult<_>>()?;
    if items.is_empty() {
        return usage(format!("empty {what} list"));
    }
    Ok(items)
}

fn check_positive(name: &str, value: f64) -> CliResult<()> {
    if !(value.is_finite() && value > 0.0) {
        return usage(format!("{name} must be a positive finite number, got {value}"));
    }
    Ok(())
}

fn sampler_from(
    sweeps: u32,
    beta_start: f64,
    beta_end: f64,
    schedule: &str,
    random_order: bool,
) -> CliResult<AnnealConfig> {
    if sweeps == 0 {
        return usage("sweeps must be at least 1");
    }
    check_positive("beta_start", beta_start)?;
    check_positive("beta_end", beta_end)?;
    if beta_end < beta_start {
        return usage("beta_end must be at least beta_start");
    }
    let schedule: Schedule = schedule
        .parse()
        .map_err(|_| Failure::Usage(format!("bad schedule {schedule:?}: use linear or geometric")))?;
    let mut cfg = AnnealConfig::survey_default(0);
    cfg.sweeps = sweeps;
    cfg.beta_start = beta_start;
    cfg.beta_end = beta_end;
    cfg.schedule = schedule;
    cfg.random_sweep_order = random_order;
    Ok(cfg)
}

fn execute(cli: Cli) -> CliResult<()> {
    let config = FileConfig::load(cli.config.as_deref())?;
    let jobs: Option<usize> = match cli.jobs {
        Some(j) => Some(j),
        None => config.get("jobs")?,
    };
    if let Some(jobs) = jobs {
        if jobs == 0 {
            return usage("--jobs must be at least 1");
        }
        // Only fails if a pool already exists (e.g. in-process tests).
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global() {
            log::debug!("thread pool already initialized: {e}");
        }
    }
    let out = resolve_out(cli.out, &config)?;
    match cli.command {
        Command::Generate(args) => cmd_generate(args, &config, &out),
        Command::Sample(args) => cmd_sample(args, &config, &out),
        Command::Reduce(args) => cmd_reduce(args, &config, &out),
        Command::Curve(args) => cmd_curve(args, &config, &out),
        Command::Initial(args) => cmd_initial(args, &config, &out),
        Command::Survey(args) => cmd_survey(args, &config, &out),
        Command::Report(args) => cmd_report(args, &config, &out),
    }
}

fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path)?;
    let digest = Sha256::digest(&bytes);
    Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
}

/// Writes the single provenance manifest for an output directory: the
/// command, its fully resolved configuration, input file hashes, and the
/// files produced. Worker count and timestamps are deliberately absent so
/// repeated runs are byte-identical.
fn write_manifest(
    out: &Path,
    command: &str,
    config_echo: serde_json::Value,
    inputs: &[&Path],
    outputs: &[String],
) -> Result<()> {
    let mut input_entries = Vec::new();
    for path in inputs {
        input_entries.push(json!({
            "path": path.display().to_string(),
            "sha256": sha256_file(path)?,
        }));
    }
    let manifest = json!({
        "tool": "fclmqc",
        "version": env!("CARGO_PKG_VERSION"),
        "command": command,
        "config": config_echo,
        "inputs": input_entries,
        "outputs": outputs,
    });
    let text = format!(
        "{}\n",
        serde_json::to_string_pretty(&manifest).expect("manifest values always serialize")
    );
    fs::write(out.join("manifest.json"), text)?;
    Ok(())
}

fn create_out(out: &Path) -> Result<()> {
    fs::create_dir_all(out)?;
    Ok(())
}

fn cmd_generate(args: GenerateArgs, config: &FileConfig, out: &Path) -> CliResult<()> {
    let problem_type = parse_problem_type(args.problem_type, config)?;
    let Some(c) = args.c.or(config.get("c")?) else {
        return usage("missing --c (region side length)");
    };
    let Some(alpha) = args.alpha.or(config.get("alpha")?) else {
        return usage("missing --alpha (loops per qubit)");
    };
    if c == 0 {
        return usage("--c must be at least 1");
    }
    check_positive("alpha", alpha)?;
    let r_token = pick(args.r, config.get("r")?, "inf".to_string());
    let r_limit = parse_r(&r_token)?;
    let seed = pick(args.seed, config.get("seed")?, 0);
    let fcl_config = FclConfig {
        problem_type,
        c,
        alpha,
        r_limit,
        seed,
    };
    let instance = FclInstance::generate(&fcl_config)?;
    create_out(out)?;
    let path = out.join("instance.txt");
    let mut file = fs::File::create(&path).map_err(Error::from)?;
    fcl::write_instance(&mut file, &instance)?;
    write_manifest(
        out,
        "generate",
        json!({
            "type": problem_type.code(),
            "c": c,
            "alpha": alpha,
            "r": r_limit.to_string(),
            "seed": seed,
        }),
        &[],
        &["instance.txt".into()],
    )?;
    println!(
        "wrote {} ({} qubits, {} loops, ground energy {})",
        path.display(),
        instance.problem.num_qubits(),
        instance.loops.len(),
        instance.ground_energy
    );
    Ok(())
}

fn load_instance(path: &Path) -> Result<FclInstance> {
    let file = fs::File::open(path)?;
    fcl::read_instance(BufReader::new(file))
}

fn cmd_sample(args: SampleArgs, config: &FileConfig, out: &Path) -> CliResult<()> {
    let Some(problem) = args.problem.or(config.get("problem")?) else {
        return usage("missing --problem (instance file)");
    };
    let samples = pick(args.samples, config.get("samples")?, 1024);
    if samples == 0 {
        return usage("--samples must be at least 1");
    }
    let source = pick(args.source, config.get("source")?, "anneal".to_string());
    let seed = pick(args.seed, config.get("seed")?, 0);
    let sampler = sampler_from(
        pick(args.sweeps, config.get("sweeps")?, 30),
        pick(args.beta_start, config.get("beta_start")?, 0.1),
        pick(args.beta_end, config.get("beta_end")?, 3.0),
        &pick(args.schedule, config.get("schedule")?, "geometric".to_string()),
        args.random_order || config.get("random_order")?.unwrap_or(false),
    )?
    .with_seed(seed);
    let instance = load_instance(&problem)?;
    let batch = match source.as_str() {
        "anneal" => anneal_batch(&instance.problem, samples, &sampler)?,
        "random" => random_batch(&instance.problem, samples, seed)?,
        other => return usage(format!("bad source {other:?}: use anneal or random")),
    };
    create_out(out)?;
    let path = out.join("samples.txt");
    let mut file = fs::File::create(&path).map_err(Error::from)?;
    write_batch(&mut file, &batch)?;
    let mut best = f64::INFINITY;
    for s in &batch.samples {
        best = best.min(instance.problem.energy(s)?);
    }
    let mut echo = json!({
        "problem": problem.display().to_string(),
        "samples": samples,
        "source": source,
        "seed": seed,
    });
    if batch.source == BatchSource::Anneal {
        echo["sweeps"] = json!(sampler.sweeps);
        echo["beta_start"] = json!(sampler.beta_start);
        echo["beta_end"] = json!(sampler.beta_end);
        echo["schedule"] = json!(sampler.schedule.to_string());
        echo["random_order"] = json!(sampler.random_sweep_order);
    }
    write_manifest(out, "sample", echo, &[&problem], &["samples.txt".into()])?;
    println!(
        "wrote {} ({} samples, best energy {}, ground {})",
        path.display(),
        batch.len(),
        best,
        instance.ground_energy
    );
    Ok(())
}

fn load_batch(path: &Path, instance: &FclInstance) -> Result<crate::sampler::SampleBatch> {
    let file = fs::File::open(path)?;
    ingest_batch(BufReader::new(file), &instance.problem)
}

fn cmd_reduce(args: ReduceArgs, config: &FileConfig, out: &Path) -> CliResult<()> {
    let Some(problem) = args.problem.or(config.get("problem")?) else {
        return usage("missing --problem (instance file)");
    };
    let Some(samples) = args.samples.or(config.get("samples")?) else {
        return usage("missing --samples (sample file)");
    };
    let instance = load_instance(&problem)?;
    let batch = load_batch(&samples, &instance)?;
    create_out(out)?;
    let mut outputs = vec!["reduced.txt".into()];
    let (reduced, trace) = if args.trace {
        let (sample, trace) = mqc::reduce_with_trace(&instance.problem, &batch)?;
        (sample, Some(trace))
    } else {
        (mqc::reduce(&instance.problem, &batch)?, None)
    };
    let energy = instance.problem.energy(&reduced)?;
    let reduced_batch = crate::sampler::SampleBatch {
        problem_id: batch.problem_id.clone(),
        samples: vec![reduced],
        source: batch.source,
        seed: batch.seed,
        hardware_sample_time: batch.hardware_sample_time,
    };
    let path = out.join("reduced.txt");
    let mut file = fs::File::create(&path).map_err(Error::from)?;
    write_batch(&mut file, &reduced_batch)?;
    if let Some(trace) = trace {
        let trace_path = out.join("trace.csv");
        let mut w = fs::File::create(&trace_path).map_err(Error::from)?;
        let mut text = String::from("# columns level,node,energy\n");
        for node in &trace {
            text.push_str(&format!("{},{},{}\n", node.level, node.node, node.energy));
        }
        w.write_all(text.as_bytes()).map_err(Error::from)?;
        outputs.push("trace.csv".into());
    }
    write_manifest(
        out,
        "reduce",
        json!({
            "problem": problem.display().to_string(),
            "samples": samples.display().to_string(),
            "trace": args.trace,
        }),
        &[&problem, &samples],
        &outputs,
    )?;
    println!(
        "reduced {} samples to energy {} (ground {}{})",
        batch.len(),
        energy,
        instance.ground_energy,
        if energy == instance.ground_energy {
            ", attained"
        } else {
            ""
        }
    );
    Ok(())
}

fn cmd_curve(args: CurveArgs, config: &FileConfig, out: &Path) -> CliResult<()> {
    let Some(problem) = args.problem.or(config.get("problem")?) else {
        return usage("missing --problem (instance file)");
    };
    let Some(samples) = args.samples.or(config.get("samples")?) else {
        return usage("missing --samples (sample file)");
    };
    let instance = load_instance(&problem)?;
    let batch = load_batch(&samples, &instance)?;
    let curve = experiment::success_curve(&instance, &batch)?;
    let raw_sts = samples_to_solution(&curve, StsMode::Raw);
    let mqc_sts = samples_to_solution(&curve, StsMode::Mqc);
    create_out(out)?;
    let mut text = format!(
        "# tool fclmqc {}\n# problem {}\n# columns log2_size,raw_prob,mqc_prob\n",
        env!("CARGO_PKG_VERSION"),
        batch.problem_id
    );
    text.push_str(&curve_rows(&curve));
    let path = out.join("curve.csv");
    fs::write(&path, &text).map_err(Error::from)?;
    write_manifest(
        out,
        "curve",
        json!({
            "problem": problem.display().to_string(),
            "samples": samples.display().to_string(),
        }),
        &[&problem, &samples],
        &["curve.csv".into()],
    )?;
    print!("{}", curve_rows(&curve));
    println!("raw_sts_log2 {raw_sts}");
    println!("mqc_sts_log2 {mqc_sts}");
    Ok(())
}

fn preset_token(args_preset: Option<String>, config: &FileConfig) -> CliResult<String> {
    Ok(pick(args_preset, config.get("preset")?, "desk".to_string()))
}

fn cmd_initial(args: InitialArgs, config: &FileConfig, out: &Path) -> CliResult<()> {
    let problem_type = parse_problem_type(args.problem_type, config)?;
    let preset = preset_token(args.preset, config)?;
    let seed = pick(args.seed, config.get("seed")?, 0);
    let mut cfg = match preset.as_str() {
        "desk" => InitialConfig::desk(problem_type, seed),
        "paper" => InitialConfig::paper(problem_type, seed),
        other => return usage(format!("bad preset {other:?}: use desk or paper")),
    };
    if let Some(c) = args.c.or(config.get("c")?) {
        if c == 0 {
            return usage("--c must be at least 1");
        }
        cfg.c = c;
    }
    if let Some(raw) = args.alpha.or(config.get("alpha")?) {
        cfg.alphas = parse_list(&raw, "alpha", |t| {
            let v: f64 = t
                .parse()
                .map_err(|_| Failure::Usage(format!("bad loop density {t:?}")))?;
            check_positive("alpha", v)?;
            Ok(v)
        })?;
    }
    if let Some(cases) = args.cases.or(config.get("cases")?) {
        cfg.cases_per_alpha = cases;
    }
    if let Some(samples) = args.samples.or(config.get("samples")?) {
        cfg.samples_per_case = samples;
    }
    if let Some(batch) = args.batch.or(config.get("batch")?) {
        cfg.batch_size = batch;
    }
    if let Some(sweeps) = args.sweeps.or(config.get("sweeps")?) {
        if sweeps == 0 {
            return usage("sweeps must be at least 1");
        }
        cfg.sampler.sweeps = sweeps;
    }
    create_out(out)?;
    let curves = experiment::run_initial(&cfg, out)?;
    let outputs: Vec<String> = curves.iter().map(|c| format!("{}.csv", c.case_id)).collect();
    write_manifest(
        out,
        "initial",
        json!({
            "type": problem_type.code(),
            "preset": preset,
            "c": cfg.c,
            "alphas": cfg.alphas,
            "cases_per_alpha": cfg.cases_per_alpha,
            "samples_per_case": cfg.samples_per_case,
            "batch_size": cfg.batch_size,
            "r": cfg.r_limit.to_string(),
            "sweeps": cfg.sampler.sweeps,
            "beta_start": cfg.sampler.beta_start,
            "beta_end": cfg.sampler.beta_end,
            "schedule": cfg.sampler.schedule.to_string(),
            "master_seed": seed,
        }),
        &[],
        &outputs,
    )?;
    println!("wrote {} pooled curves to {}", curves.len(), out.display());
    Ok(())
}

fn cmd_survey(args: SurveyArgs, config: &FileConfig, out: &Path) -> CliResult<()> {
    let problem_type = parse_problem_type(args.problem_type, config)?;
    let preset = preset_token(args.preset, config)?;
    let seed = pick(args.seed, config.get("seed")?, 0);
    let mut cfg = match preset.as_str() {
        "desk" => SurveyConfig::desk(problem_type, seed),
        "paper" => SurveyConfig::paper(problem_type, seed),
        other => return usage(format!("bad preset {other:?}: use desk or paper")),
    };
    if let Some(raw) = args.r.or(config.get("r")?) {
        cfg.grid.r_limits = parse_list(&raw, "overlap limit", parse_r)?;
    }
    if let Some(raw) = args.c.or(config.get("c")?) {
        cfg.grid.c_values = parse_list(&raw, "region side", |t| {
            let v: usize = t
                .parse()
                .map_err(|_| Failure::Usage(format!("bad region side {t:?}")))?;
            if v == 0 {
                return usage("region side must be at least 1");
            }
            Ok(v)
        })?;
    }
    if let Some(raw) = args.alpha.or(config.get("alpha")?) {
        cfg.grid.alphas = parse_list(&raw, "alpha", |t| {
            let v: f64 = t
                .parse()
                .map_err(|_| Failure::Usage(format!("bad loop density {t:?}")))?;
            check_positive("alpha", v)?;
            Ok(v)
        })?;
    }
    if let Some(cases) = args.cases.or(config.get("cases")?) {
        cfg.cases_per_cell = cases;
    }
    if let Some(samples) = args.samples.or(config.get("samples")?) {
        cfg.samples_per_case = samples;
    }
    if let Some(sweeps) = args.sweeps.or(config.get("sweeps")?) {
        if sweeps == 0 {
            return usage("sweeps must be at least 1");
        }
        cfg.sampler.sweeps = sweeps;
    }
    create_out(out)?;
    let cells = experiment::run_survey(&cfg, out)?;
    let mut outputs = vec!["survey.csv".into()];
    for &r in &cfg.grid.r_limits {
        for &c in &cfg.grid.c_values {
            for &alpha in &cfg.grid.alphas {
                outputs.push(format!("cells/{}.csv", experiment::cell_file_stem(r, c, alpha)));
            }
        }
    }
    write_manifest(
        out,
        "survey",
        json!({
            "type": problem_type.code(),
            "preset": preset,
            "r": cfg.grid.r_limits.iter().map(|r| r.to_string()).collect::<Vec<_>>(),
            "c": cfg.grid.c_values,
            "alphas": cfg.grid.alphas,
            "cases_per_cell": cfg.cases_per_cell,
            "samples_per_case": cfg.samples_per_case,
            "sweeps": cfg.sampler.sweeps,
            "beta_start": cfg.sampler.beta_start,
            "beta_end": cfg.sampler.beta_end,
            "schedule": cfg.sampler.schedule.to_string(),
            "random_order": cfg.sampler.random_sweep_order,
            "master_seed": seed,
        }),
        &[],
        &outputs,
    )?;
    println!(
        "surveyed {} cells ({} cases each) into {}",
        cells.len(),
        cfg.cases_per_cell,
        out.display()
    );
    Ok(())
}

fn cmd_report(args: ReportArgs, config: &FileConfig, out: &Path) -> CliResult<()> {
    let dir = match args.dir.or(config.get("dir")?) {
        Some(d) => d,
        None => out.to_path_buf(),
    };
    let (cells, header) = experiment::load_survey_cells(&dir)?;
    if cells.is_empty() {
        log::warn!("no case records under {}", dir.display());
        println!("no case records found; nothing to report");
        return Ok(());
    }
    let all_records: Vec<experiment::CaseRecord> = cells
        .iter()
        .flat_map(|(records, _)| records.iter().cloned())
        .collect();
    let summary = experiment::ReportSummary::from_records(&all_records, cells.len());
    create_out(out)?;
    let mut text = String::new();
    for line in &header {
        text.push_str(line);
        text.push('\n');
    }
    text.push_str(&format!("# columns {}\n", experiment::SurveyCell::CSV_COLUMNS));
    for (_, cell) in &cells {
        text.push_str(&cell.to_csv_line());
        text.push('\n');
    }
    fs::write(out.join("survey.csv"), &text).map_err(Error::from)?;
    fs::write(out.join("summary.txt"), summary.render()).map_err(Error::from)?;
    let cell_dir = dir.join("cells");
    let mut cell_paths: Vec<PathBuf> = fs::read_dir(&cell_dir)
        .map_err(Error::from)?
        .collect::<std::io::Result<Vec<_>>>()
        .map_err(Error::from)?
        .into_iter()
        .map(|e| e.path())
        .filter(|p| p.extension() == Some(std::ffi::OsStr::new("csv")))
        .collect();
    cell_paths.sort();
    let input_refs: Vec<&Path> = cell_paths.iter().map(PathBuf::as_path).collect();
    write_manifest(
        out,
        "report",
        json!({ "dir": dir.display().to_string() }),
        &input_refs,
        &["survey.csv".into(), "summary.txt".into()],
    )?;
    print!("{}", summary.render());
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_file_parsing() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.conf");
        fs::write(&path, "# defaults\nsamples = 2048\nout=results\nr = inf\n").unwrap();
        let cfg = FileConfig::load(Some(&path)).unwrap();
        assert_eq!(cfg.get::<usize>("samples").unwrap(), Some(2048));
        assert_eq!(cfg.0.get("out").map(String::as_str), Some("results"));
        assert_eq!(cfg.get::<String>("r").unwrap(), Some("inf".to_string()));
        assert_eq!(cfg.get::<u64>("seed").unwrap(), None);

        fs::write(&path, "samples = 2048\nbogus = 1\n").unwrap();
        match FileConfig::load(Some(&path)) {
            Err(Error::Format { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected format error, got {other:?}"),
        }
        fs::write(&path, "no equals sign\n").unwrap();
        assert!(FileConfig::load(Some(&path)).is_err());
        assert!(FileConfig::load(None).unwrap().0.is_empty());
    }

    #[test]
    fn flag_beats_config_beats_default() {
        assert_eq!(pick(Some(1), Some(2), 3), 1);
        assert_eq!(pick(None, Some(2), 3), 2);
        assert_eq!(pick(None::<u32>, None, 3), 3);
    }

    #[test]
    fn list_parsing() {
        let rs = parse_list("2, 3,inf", "overlap limit", parse_r).unwrap();
        assert_eq!(
            rs,
            vec![
                OverlapLimit::Bounded(2),
                OverlapLimit::Bounded(3),
                OverlapLimit::Unlimited
            ]
        );
        assert!(parse_list(" , ", "overlap limit", parse_r).is_err());
        assert!(parse_r("0").is_err());
        assert!(parse_r("-1").is_err());
    }

    #[test]
    fn sampler_flag_validation() {
        assert!(sampler_from(0, 0.1, 3.0, "geometric", false).is_err());
        assert!(sampler_from(10, -0.1, 3.0, "geometric", false).is_err());
        assert!(sampler_from(10, 0.1, 0.05, "geometric", false).is_err());
        assert!(sampler_from(10, 0.1, 3.0, "sideways", false).is_err());
        let cfg = sampler_from(10, 0.1, 3.0, "linear", true).unwrap();
        assert_eq!(cfg.sweeps, 10);
        assert!(cfg.random_sweep_order);
    }

    #[test]
    fn manifest_has_no_worker_count() {
        let dir = tempfile::tempdir().unwrap();
        write_manifest(
            dir.path(),
            "survey",
            json!({"seed": 5}),
            &[],
            &["survey.csv".into()],
        )
        .unwrap();
        let text = fs::read_to_string(dir.path().join("manifest.json")).unwrap();
        assert!(text.contains("\"command\": \"survey\""));
        assert!(text.contains("\"version\""));
        assert!(!text.contains("jobs"));
        assert!(!text.contains("time"));
        let parsed: serde_json::Value = serde_json::from_str(&text).unwrap();
        assert_eq!(parsed["config"]["seed"], 5);
    }

    #[test]
    fn manifest_hashes_inputs() {
        let dir = tempfile::tempdir().unwrap();
        let input = dir.path().join("instance.txt");
        fs::write(&input, "hello\n").unwrap();
        write_manifest(dir.path(), "sample", json!({}), &[&input], &["samples.txt".into()])
            .unwrap();
        let parsed: serde_json::Value =
            serde_json::from_str(&fs::read_to_string(dir.path().join("manifest.json")).unwrap())
                .unwrap();
        // sha256 of "hello\n".
        assert_eq!(
            parsed["inputs"][0]["sha256"],
            "5891b5b522d5df086d0ff0b110fbd9d21bb4fc7163af34d08286a2e846f6be03"
        );
    }

    #[test]
    fn out_resolution_precedence() {
        let cfg = FileConfig(BTreeMap::from([("out".to_string(), "from_config".to_string())]));
        let flag = resolve_out(Some(PathBuf::from("from_flag")), &cfg).unwrap();
        assert_eq!(flag, PathBuf::from("from_flag"));
        // Env beats config; the var itself is exercised in the binary tests
        // to keep this process's environment untouched.
        let from_config = resolve_out(None, &cfg).unwrap();
        assert!(
            from_config.as_path() == std::path::Path::new("from_config")
                || std::env::var(OUT_ENV_VAR).is_ok()
        );
        let empty = FileConfig(BTreeMap::new());
        if std::env::var(OUT_ENV_VAR).is_err() {
            assert!(resolve_out(None, &empty).is_err());
        }
    }
}
