//! Command-line front end: calibration, procedure runs on user data, the two
//! bundled simulation studies, and the verification suite.
//!
//! Exit codes: 0 success, 1 validation or configuration error, 2 failed
//! verification bound, 3 I/O error.

mod config;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::{
    CalibrateConfig, CalibrateKind, FamilySpec, ProcedureKind, RunConfig, SamplerConfig,
    VerifyConfig,
};
use seqfwer::calibration::{
    calibrate_dual, calibrate_ladder, calibrate_single, validate_lower_ladder,
    validate_upper_ladder, CalibrationReport, CalibrationSpec, ModelPathSampler, PathSampler,
    SignedRankNullSampler,
};
use seqfwer::experiments::{
    bundled_triples, load_triples, run_chromosome_study, run_maxsd_study, ChromosomeConfig,
    MaxsdScenario, Render, ReportFormat,
};
use seqfwer::procedures::{run_closed, run_dual, run_in_order, run_step_down};
use seqfwer::verify::suite::run_ci_suite;
use seqfwer::{
    build_chain_family, build_closed_partition, CriticalLadder, DecisionTrace, Error,
    HypothesisFamily, OrderedPartition, ProcedureConfig, SampleSchedule, StreamSet,
};

#[derive(Parser)]
#[command(
    name = "seqfwer",
    about = "Sequential multiple hypothesis testing with familywise error control",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct CommonOpts {
    /// JSON configuration file
    #[arg(long)]
    config: PathBuf,
    /// Override the config seed
    #[arg(long)]
    seed: Option<u64>,
    /// Override the replicate count
    #[arg(long)]
    reps: Option<usize>,
    /// Override the error budget alpha
    #[arg(long)]
    alpha: Option<f64>,
    /// Write the report here instead of stdout
    #[arg(long)]
    out: Option<PathBuf>,
    /// Report format: json, csv, or markdown
    #[arg(long, default_value = "json")]
    format: String,
    /// Cap worker threads (falls back to SEQFWER_THREADS, then all cores)
    #[arg(long)]
    threads: Option<usize>,
    /// Chatty progress on stderr
    #[arg(long)]
    verbose: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Monte Carlo critical-value calibration
    Calibrate(CommonOpts),
    /// Run a procedure on user-supplied stream data
    Run {
        #[command(flatten)]
        common: CommonOpts,
        /// CSV stream data: one column per stream, row n = observation n
        #[arg(long)]
        data: PathBuf,
    },
    /// Permutation study on the bundled chromosome-aberration data
    SimulateChromosome {
        #[command(flatten)]
        common: CommonOpts,
        /// Alternative dataset (CSV with header y_c,y_b,y_a)
        #[arg(long)]
        data: Option<PathBuf>,
    },
    /// Operating characteristics of the maximum-safe-dose procedure
    SimulateMaxsd(CommonOpts),
    /// Run the verification suite; exits 2 on any failed bound
    Verify(CommonOpts),
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // keep help and version on the success path; everything else is
            // an invocation error (exit 1, never clap's default 2, which is
            // reserved for failed verification bounds)
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match dispatch(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Io(_) | Error::Parse { .. } => ExitCode::from(3),
                _ => ExitCode::from(1),
            }
        }
    }
}

fn dispatch(cli: Cli) -> Result<ExitCode, Error> {
    match cli.command {
        Command::Calibrate(common) => {
            init_threads(&common)?;
            let mut cfg: CalibrateConfig = read_config(&common.config)?;
            if let Some(seed) = common.seed {
                cfg.seed = seed;
            }
            if let Some(reps) = common.reps {
                cfg.reps = reps;
            }
            if let Some(alpha) = common.alpha {
                cfg.alpha = alpha;
            }
            let report = run_calibrate(&cfg, common.verbose)?;
            emit(&report, &common)?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Run { common, data } => {
            init_threads(&common)?;
            let cfg: RunConfig = read_config(&common.config)?;
            let streams = read_stream_csv(&data)?;
            let trace = run_procedure(&cfg, &streams)?;
            emit_trace(&trace, &common)?;
            Ok(ExitCode::SUCCESS)
        }
        Command::SimulateChromosome { common, data } => {
            init_threads(&common)?;
            let mut cfg: ChromosomeConfig = read_config(&common.config)?;
            if let Some(seed) = common.seed {
                cfg.seed = seed;
            }
            if let Some(reps) = common.reps {
                cfg.permutations = reps;
            }
            if let Some(alpha) = common.alpha {
                cfg.alpha = alpha;
            }
            let triples = match data {
                Some(path) => load_triples(&path)?,
                None => bundled_triples(),
            };
            if common.verbose {
                eprintln!(
                    "running {} permutations over {} schedules",
                    cfg.permutations,
                    cfg.schedules.len()
                );
            }
            let study = run_chromosome_study(&cfg, &triples)?;
            emit(&study, &common)?;
            Ok(ExitCode::SUCCESS)
        }
        Command::SimulateMaxsd(common) => {
            init_threads(&common)?;
            let mut scenario: MaxsdScenario = read_config(&common.config)?;
            if let Some(seed) = common.seed {
                scenario.seed = seed;
            }
            if let Some(reps) = common.reps {
                scenario.reps = reps;
            }
            if let Some(alpha) = common.alpha {
                scenario.alpha = alpha;
            }
            if common.verbose {
                eprintln!("simulating {} replicates", scenario.reps);
            }
            let study = run_maxsd_study(&scenario)?;
            emit(&study, &common)?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Verify(common) => {
            init_threads(&common)?;
            let mut cfg: VerifyConfig = read_config(&common.config)?;
            if let Some(seed) = common.seed {
                cfg.seed = seed;
            }
            if let Some(reps) = common.reps {
                cfg.reps = reps;
            }
            if let Some(alpha) = common.alpha {
                cfg.alpha = alpha;
            }
            let report = run_ci_suite(
                cfg.alpha,
                cfg.beta,
                cfg.reps,
                cfg.calibration_reps,
                cfg.seed,
            )?;
            let pass = report.pass;
            emit(&report, &common)?;
            if pass {
                Ok(ExitCode::SUCCESS)
            } else {
                eprintln!("verification failed: at least one bound exceeded");
                Ok(ExitCode::from(2))
            }
        }
    }
}

fn init_threads(common: &CommonOpts) -> Result<(), Error> {
    let threads = common.threads.or_else(|| {
        std::env::var("SEQFWER_THREADS")
            .ok()
            .and_then(|v| v.parse().ok())
    });
    if let Some(n) = threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    }
    Ok(())
}

fn read_config<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, Error> {
    let text = std::fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

fn parse_format(common: &CommonOpts) -> Result<ReportFormat, Error> {
    common.format.parse()
}

fn emit<R: Render>(report: &R, common: &CommonOpts) -> Result<(), Error> {
    let format = parse_format(common)?;
    let rendered = report.render(format);
    match &common.out {
        Some(path) => std::fs::write(path, rendered)?,
        None => print!("{rendered}"),
    }
    Ok(())
}

fn build_sampler(cfg: &SamplerConfig) -> Box<dyn PathSampler> {
    match cfg {
        SamplerConfig::SignedRank => Box::new(SignedRankNullSampler),
        SamplerConfig::Statistic {
            statistic,
            models,
            equicorrelation,
        } => Box::new(ModelPathSampler {
            statistic: statistic.clone(),
            models: models.clone(),
            equicorrelation: *equicorrelation,
        }),
    }
}

fn run_calibrate(cfg: &CalibrateConfig, verbose: bool) -> Result<CalibrationReport, Error> {
    let schedule = SampleSchedule::new(cfg.schedule.clone())?;
    let null = build_sampler(&cfg.null);
    let validation_reps = cfg.validation_reps.unwrap_or(cfg.reps);
    let validation_seed = cfg.seed ^ 0xFE57_AB1E;
    if verbose {
        eprintln!(
            "calibrating over {} looks with {} replicates",
            schedule.len(),
            cfg.reps
        );
    }
    let (upper, lower) = match cfg.kind {
        CalibrateKind::Single => {
            let b = calibrate_single(null.as_ref(), &schedule, cfg.alpha, cfg.reps, cfg.seed)?;
            (vec![b], None)
        }
        CalibrateKind::Ladder => {
            let spec = CalibrationSpec {
                alpha: cfg.alpha,
                beta: None,
                reps: cfg.reps,
                seed: cfg.seed,
                k: cfg.k,
            };
            (calibrate_ladder(null.as_ref(), &schedule, &spec)?, None)
        }
        CalibrateKind::Dual => {
            let alt_cfg = cfg
                .alt
                .as_ref()
                .ok_or_else(|| Error::Config("dual calibration requires an alt sampler".into()))?;
            let alt = build_sampler(alt_cfg);
            let spec = CalibrationSpec {
                alpha: cfg.alpha,
                beta: cfg.beta,
                reps: cfg.reps,
                seed: cfg.seed,
                k: cfg.k,
            };
            let (lo, up) = calibrate_dual(null.as_ref(), alt.as_ref(), &schedule, &spec)?;
            (up, Some(lo))
        }
    };

    let k = upper.len();
    let rungs: Vec<(f64, f64)> = upper
        .iter()
        .enumerate()
        .map(|(i, &b)| (cfg.alpha / (k - i) as f64, b))
        .collect();
    let mut validation = validate_upper_ladder(
        null.as_ref(),
        &schedule,
        &rungs,
        validation_reps,
        validation_seed,
    )?;
    if let (Some(lo), Some(alt_cfg)) = (&lower, &cfg.alt) {
        let beta = cfg.beta.unwrap_or(cfg.alpha);
        let alt = build_sampler(alt_cfg);
        let rungs: Vec<(f64, f64)> = lo
            .iter()
            .enumerate()
            .map(|(i, &a)| (beta / (k - i) as f64, a))
            .collect();
        validation.extend(validate_lower_ladder(
            alt.as_ref(),
            &schedule,
            &rungs,
            validation_reps,
            validation_seed ^ 1,
        )?);
    }

    Ok(CalibrationReport {
        k: cfg.k,
        schedule: cfg.schedule.clone(),
        alpha: cfg.alpha,
        beta: cfg.beta,
        reps: cfg.reps,
        seed: cfg.seed,
        upper: vec![upper; cfg.k],
        lower: lower.map(|lo| vec![lo; cfg.k]),
        validation,
    })
}

fn build_family(spec: &FamilySpec) -> Result<(HypothesisFamily, Option<OrderedPartition>), Error> {
    match spec {
        FamilySpec::Elementary { k } => Ok((HypothesisFamily::elementary(*k)?, None)),
        FamilySpec::Chain { k } => {
            let (family, partition) = build_chain_family(*k)?;
            Ok((family, Some(partition)))
        }
        FamilySpec::Closed { k } => {
            let (family, partition) = build_closed_partition(*k)?;
            Ok((family, Some(partition)))
        }
    }
}

fn run_procedure(cfg: &RunConfig, data: &StreamSet) -> Result<DecisionTrace, Error> {
    let (family, built_partition) = build_family(&cfg.family)?;
    let schedule = SampleSchedule::new(cfg.schedule.clone())?;
    for stat in &cfg.statistics {
        stat.validate(data.len())?;
    }
    let statistics = cfg.statistics.clone();

    let mut config = match cfg.procedure {
        ProcedureKind::StepDown | ProcedureKind::Dual => {
            let specs = cfg.ladders.as_ref().ok_or_else(|| {
                Error::Config("field 'ladders' is required for this procedure".into())
            })?;
            let ladders: Vec<CriticalLadder> = specs
                .iter()
                .map(|l| match &l.lower {
                    Some(lower) => CriticalLadder::with_lower(l.upper.clone(), lower.clone()),
                    None => CriticalLadder::new(l.upper.clone()),
                })
                .collect::<Result<_, _>>()?;
            if cfg.procedure == ProcedureKind::Dual {
                ProcedureConfig::dual(family, schedule, statistics, ladders)?
            } else {
                ProcedureConfig::step_down(family, schedule, statistics, ladders)?
            }
        }
        ProcedureKind::InOrder | ProcedureKind::Closed => {
            let thresholds = cfg.thresholds.clone().ok_or_else(|| {
                Error::Config("field 'thresholds' is required for this procedure".into())
            })?;
            let partition = match (&cfg.partition, built_partition) {
                (Some(blocks), _) => OrderedPartition::new(blocks.clone()),
                (None, Some(p)) => p,
                (None, None) => {
                    return Err(Error::Config(
                        "field 'partition' is required for in-order over an elementary family"
                            .into(),
                    ))
                }
            };
            ProcedureConfig::in_order(family, schedule, statistics, thresholds, partition)?
        }
    };
    config.record_values = cfg.record_values;

    match cfg.procedure {
        ProcedureKind::StepDown => run_step_down(&config, data),
        ProcedureKind::Dual => run_dual(&config, data),
        ProcedureKind::InOrder => run_in_order(&config, data),
        ProcedureKind::Closed => run_closed(&config, data),
    }
}

/// One column per stream; an optional non-numeric header row is skipped.
/// Columns may have different lengths: trailing empty fields are allowed.
fn read_stream_csv(path: &Path) -> Result<StreamSet, Error> {
    let text = std::fs::read_to_string(path)?;
    let mut streams: Vec<Vec<f64>> = Vec::new();
    let mut first_row = true;
    for (idx, line) in text.lines().enumerate() {
        let line_no = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if first_row {
            first_row = false;
            streams = vec![Vec::new(); fields.len()];
            let header = fields
                .iter()
                .any(|f| !f.trim().is_empty() && f.trim().parse::<f64>().is_err());
            if header {
                continue;
            }
        }
        if fields.len() != streams.len() {
            return Err(Error::Parse {
                line: line_no,
                message: format!("expected {} fields, found {}", streams.len(), fields.len()),
            });
        }
        for (s, field) in fields.iter().enumerate() {
            let trimmed = field.trim();
            if trimmed.is_empty() {
                continue;
            }
            let value = trimmed.parse::<f64>().map_err(|_| Error::Parse {
                line: line_no,
                message: format!("non-numeric field '{trimmed}' in column {s}"),
            })?;
            streams[s].push(value);
        }
    }
    if streams.is_empty() {
        return Err(Error::Parse {
            line: 1,
            message: "no data rows".into(),
        });
    }
    Ok(StreamSet::new(streams))
}

fn emit_trace(trace: &DecisionTrace, common: &CommonOpts) -> Result<(), Error> {
    let format = parse_format(common)?;
    let rendered = match format {
        ReportFormat::Json => {
            let mut s = serde_json::to_string_pretty(trace).unwrap();
            s.push('\n');
            s
        }
        ReportFormat::Csv => {
            let mut out = String::from("stage,sample_size,rejected,accepted\n");
            for r in &trace.records {
                out.push_str(&format!(
                    "{},{},\"{}\",\"{}\"\n",
                    r.stage,
                    r.sample_size,
                    join(&r.rejected),
                    join(&r.accepted)
                ));
            }
            out
        }
        ReportFormat::Markdown => {
            let mut out = String::from("| Stage | n | Rejected | Accepted |\n|---|---|---|---|\n");
            for r in &trace.records {
                out.push_str(&format!(
                    "| {} | {} | {} | {} |\n",
                    r.stage,
                    r.sample_size,
                    join(&r.rejected),
                    join(&r.accepted)
                ));
            }
            out
        }
    };
    match &common.out {
        Some(path) => std::fs::write(path, rendered)?,
        None => print!("{rendered}"),
    }
    Ok(())
}

fn join(xs: &[usize]) -> String {
    xs.iter()
        .map(|x| x.to_string())
        .collect::<Vec<_>>()
        .join(" ")
}
