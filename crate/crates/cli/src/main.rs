//! Command-line front end: run one simulation, compare policies, sweep
//! interference or load, generate traces, and verify the pair-scheduling
//! endpoint property.
//!
//! Exit codes: 0 success, 2 configuration error, 3 invariant violation.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use gpushare::cluster::ClusterSpec;
use gpushare::defaults::{default_interference, default_profiles, DEFAULT_GPU_MEMORY};
use gpushare::pair_sched::endpoint_optimality_samples;
use gpushare::perf_model::{InterferenceTable, ProfileSet};
use gpushare::policies::PolicyKind;
use gpushare::report;
use gpushare::simulator::{run as simulate, SimMetrics, SimOptions};
use gpushare::trace::{generate_workload, load_trace, save_trace, WorkloadSpec};

#[derive(Parser)]
#[command(
    name = "gpushare",
    version,
    about = "Trace-driven GPU cluster scheduling simulator with GPU sharing"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate one trace under one policy and write per-job and summary reports.
    Run(RunArgs),
    /// Run several policies over the identical trace and tabulate the metrics.
    Compare(CompareArgs),
    /// Grid-run a swept dimension (constant interference ratio, or load scale).
    Sweep(SweepArgs),
    /// Generate a synthetic workload trace (and optionally the default
    /// profile/interference documents for editing).
    GenTrace(GenTraceArgs),
    /// Check endpoint optimality of the pair schedule against a brute-force
    /// insertion-time grid.
    VerifyTheorem(VerifyArgs),
}

#[derive(Args)]
struct SimBaseArgs {
    /// Trace file, one JSON job record per line.
    #[arg(long)]
    trace: PathBuf,
    /// Cluster: a JSON file or inline `SERVERSxGPUS[xMEM_GB]`, e.g. 16x4x11.
    #[arg(long, default_value = "16x4x11")]
    cluster: String,
    /// Profile document; omitted means the builtin synthetic profiles.
    #[arg(long)]
    profiles: Option<PathBuf>,
    /// Interference: "default", a constant ratio like "1.3", or a table file.
    #[arg(long, default_value = "default")]
    interference: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Output formats: csv, json or both.
    #[arg(long, default_value = "both")]
    format: String,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    base: SimBaseArgs,
    /// fifo | sjf | tiresias | sjf-ffs | sjf-bsbf
    #[arg(long, default_value = "sjf-bsbf")]
    policy: String,
}

#[derive(Args)]
struct CompareArgs {
    #[command(flatten)]
    base: SimBaseArgs,
    /// Comma-separated policies; defaults to all five.
    #[arg(long, default_value = "fifo,sjf,tiresias,sjf-ffs,sjf-bsbf")]
    policy: String,
}

#[derive(Args)]
struct SweepArgs {
    /// "interference" (constant ratio grid) or "load" (job-count scale grid).
    #[arg(long)]
    dimension: String,
    /// Comma-separated grid values; defaults per dimension.
    #[arg(long)]
    grid: Option<String>,
    /// Workload preset regenerated per grid point: physical | simulation.
    #[arg(long, default_value = "simulation")]
    preset: String,
    /// Fixed trace file for interference sweeps (load sweeps regenerate).
    #[arg(long)]
    trace: Option<PathBuf>,
    #[arg(long, default_value = "16x4x11")]
    cluster: String,
    #[arg(long)]
    profiles: Option<PathBuf>,
    /// Comma-separated policies; defaults to all five.
    #[arg(long, default_value = "fifo,sjf,tiresias,sjf-ffs,sjf-bsbf")]
    policy: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Args)]
struct GenTraceArgs {
    /// physical (30 jobs, 16-GPU scale) or simulation (240 jobs, 64-GPU scale).
    #[arg(long, default_value = "simulation")]
    preset: String,
    /// Scales the preset's job count (0.5 to 2 covers the load sweep range).
    #[arg(long, default_value_t = 1.0)]
    load_scale: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory; the trace lands in `<out>/trace.jsonl`.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Also write the builtin profile and interference documents next to the
    /// trace, as editable starting points.
    #[arg(long)]
    emit_defaults: bool,
}

#[derive(Args)]
struct VerifyArgs {
    #[arg(long, default_value_t = 1000)]
    samples: usize,
    #[arg(long, default_value_t = 201)]
    grid_points: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

/// Configuration problems exit 2; simulation invariant violations exit 3.
enum CliError {
    Config(String),
    Invariant(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Invariant(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Config(m) | CliError::Invariant(m) => m,
        }
    }
}

fn config_err<E: std::fmt::Display>(e: E) -> CliError {
    CliError::Config(e.to_string())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(args) => cmd_run(args),
        Command::Compare(args) => cmd_compare(args),
        Command::Sweep(args) => cmd_sweep(args),
        Command::GenTrace(args) => cmd_gen_trace(args),
        Command::VerifyTheorem(args) => cmd_verify_theorem(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message());
            ExitCode::from(e.code())
        }
    }
}

fn parse_cluster(spec: &str) -> Result<ClusterSpec, CliError> {
    let path = Path::new(spec);
    if path.exists() {
        let text = fs::read_to_string(path).map_err(config_err)?;
        let cluster: ClusterSpec = serde_json::from_str(&text)
            .map_err(|e| CliError::Config(format!("cluster file {spec}: {e}")))?;
        return Ok(cluster);
    }
    let parts: Vec<&str> = spec.split('x').collect();
    if parts.len() < 2 || parts.len() > 3 {
        return Err(CliError::Config(format!(
            "cluster `{spec}` is neither a file nor SERVERSxGPUS[xMEM_GB]"
        )));
    }
    let num_servers: u32 = parts[0]
        .parse()
        .map_err(|_| CliError::Config(format!("bad server count in `{spec}`")))?;
    let gpus_per_server: u32 = parts[1]
        .parse()
        .map_err(|_| CliError::Config(format!("bad GPU count in `{spec}`")))?;
    let gpu_memory = match parts.get(2) {
        Some(gb) => {
            let gb: f64 = gb
                .parse()
                .map_err(|_| CliError::Config(format!("bad memory size in `{spec}`")))?;
            gb * 1e9
        }
        None => DEFAULT_GPU_MEMORY,
    };
    if num_servers == 0 || gpus_per_server == 0 || gpu_memory <= 0.0 {
        return Err(CliError::Config(format!(
            "cluster `{spec}` has zero-sized fields"
        )));
    }
    Ok(ClusterSpec {
        num_servers,
        gpus_per_server,
        gpu_memory,
    })
}

fn load_profiles(arg: &Option<PathBuf>) -> Result<(ProfileSet, String), CliError> {
    match arg {
        None => Ok((default_profiles(), "builtin".to_string())),
        Some(path) => {
            let text = fs::read_to_string(path)
                .map_err(|e| CliError::Config(format!("profiles {}: {e}", path.display())))?;
            let set = ProfileSet::from_json(&text).map_err(config_err)?;
            Ok((set, path.display().to_string()))
        }
    }
}

fn parse_interference(arg: &str) -> Result<(InterferenceTable, String), CliError> {
    if arg == "default" {
        return Ok((default_interference(), "default".to_string()));
    }
    if let Ok(xi) = arg.parse::<f64>() {
        let table = InterferenceTable::constant(xi).map_err(config_err)?;
        return Ok((table, format!("constant:{xi}")));
    }
    let path = Path::new(arg);
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("interference `{arg}`: {e}")))?;
    let table: InterferenceTable = serde_json::from_str(&text)
        .map_err(|e| CliError::Config(format!("interference {arg}: {e}")))?;
    Ok((table, arg.to_string()))
}

fn parse_policies(arg: &str) -> Result<Vec<PolicyKind>, CliError> {
    arg.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|name| {
            PolicyKind::parse(name).ok_or_else(|| {
                CliError::Config(format!(
                    "unknown policy `{name}` (expected one of {})",
                    PolicyKind::ALL_NAMES.join(", ")
                ))
            })
        })
        .collect()
}

fn read_trace(path: &Path) -> Result<Vec<gpushare::trace::JobSpec>, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("trace {}: {e}", path.display())))?;
    load_trace(&text).map_err(config_err)
}

fn run_once(
    trace: &[gpushare::trace::JobSpec],
    cluster: &ClusterSpec,
    policy: &PolicyKind,
    profiles: &ProfileSet,
    interference: &InterferenceTable,
    seed: u64,
) -> Result<gpushare::simulator::SimOutcome, CliError> {
    simulate(
        trace,
        cluster,
        policy,
        profiles,
        interference,
        seed,
        &SimOptions::default(),
    )
    .map_err(|e| match &e {
        gpushare::simulator::SimError::Invariant { .. } => CliError::Invariant(e.to_string()),
        _ => CliError::Config(e.to_string()),
    })
}

fn ensure_out_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir)
        .map_err(|e| CliError::Config(format!("output dir {}: {e}", dir.display())))
}

fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    fs::write(path, contents).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

#[derive(Clone, Copy, PartialEq, Eq)]
struct Formats {
    csv: bool,
    json: bool,
}

fn parse_format(arg: &str) -> Result<Formats, CliError> {
    match arg {
        "csv" => Ok(Formats {
            csv: true,
            json: false,
        }),
        "json" => Ok(Formats {
            csv: false,
            json: true,
        }),
        "both" => Ok(Formats {
            csv: true,
            json: true,
        }),
        other => Err(CliError::Config(format!(
            "format `{other}` is not csv, json or both"
        ))),
    }
}

fn summary_json(
    command: &str,
    base: &SimBaseArgs,
    cluster: &ClusterSpec,
    policies: &[(String, SimMetrics)],
    profiles_label: &str,
    interference_label: &str,
) -> String {
    let policies_json: Vec<serde_json::Value> = policies
        .iter()
        .map(|(name, metrics)| serde_json::json!({ "policy": name, "metrics": metrics }))
        .collect();
    let doc = serde_json::json!({
        "command": command,
        "config": {
            "trace": base.trace.display().to_string(),
            "cluster": cluster,
            "profiles": profiles_label,
            "interference": interference_label,
            "seed": base.seed,
        },
        "results": policies_json,
    });
    serde_json::to_string_pretty(&doc).expect("summary serializes")
}

fn cmd_run(args: RunArgs) -> Result<(), CliError> {
    let formats = parse_format(&args.base.format)?;
    let policy = parse_policies(&args.policy)?
        .into_iter()
        .next()
        .ok_or_else(|| CliError::Config("no policy given".into()))?;
    let cluster = parse_cluster(&args.base.cluster)?;
    let (profiles, profiles_label) = load_profiles(&args.base.profiles)?;
    let (interference, interference_label) = parse_interference(&args.base.interference)?;
    let trace = read_trace(&args.base.trace)?;
    let outcome = run_once(
        &trace,
        &cluster,
        &policy,
        &profiles,
        &interference,
        args.base.seed,
    )?;

    ensure_out_dir(&args.base.out)?;
    if formats.csv {
        write_file(
            &args.base.out.join("per_job.csv"),
            &report::per_job_csv(&outcome.per_job),
        )?;
        write_file(
            &args.base.out.join("summary.csv"),
            &report::summary_csv(policy.name(), &outcome.metrics),
        )?;
    }
    if formats.json {
        let doc = summary_json(
            "run",
            &args.base,
            &cluster,
            &[(policy.name().to_string(), outcome.metrics.clone())],
            &profiles_label,
            &interference_label,
        );
        write_file(&args.base.out.join("summary.json"), &doc)?;
    }
    let m = &outcome.metrics;
    println!(
        "{}: {} jobs, makespan {:.1} s, average JCT {:.2} s, average queuing {:.2} s",
        policy.name(),
        m.jobs,
        m.makespan,
        m.average_jct,
        m.average_queuing
    );
    Ok(())
}

fn cmd_compare(args: CompareArgs) -> Result<(), CliError> {
    let formats = parse_format(&args.base.format)?;
    let policies = parse_policies(&args.policy)?;
    if policies.is_empty() {
        return Err(CliError::Config("no policies given".into()));
    }
    let cluster = parse_cluster(&args.base.cluster)?;
    let (profiles, profiles_label) = load_profiles(&args.base.profiles)?;
    let (interference, interference_label) = parse_interference(&args.base.interference)?;
    let trace = read_trace(&args.base.trace)?;

    let mut rows: Vec<(String, SimMetrics)> = Vec::new();
    for policy in &policies {
        let outcome = run_once(
            &trace,
            &cluster,
            policy,
            &profiles,
            &interference,
            args.base.seed,
        )?;
        rows.push((policy.name().to_string(), outcome.metrics));
    }

    ensure_out_dir(&args.base.out)?;
    if formats.csv {
        write_file(
            &args.base.out.join("compare.csv"),
            &report::compare_csv(&rows),
        )?;
    }
    if formats.json {
        let doc = summary_json(
            "compare",
            &args.base,
            &cluster,
            &rows,
            &profiles_label,
            &interference_label,
        );
        write_file(&args.base.out.join("compare.json"), &doc)?;
    }
    print!("{}", report::render_compare_table(&rows));
    Ok(())
}

fn preset_spec(preset: &str, seed: u64) -> Result<WorkloadSpec, CliError> {
    match preset {
        "physical" => Ok(WorkloadSpec::physical(seed)),
        "simulation" => Ok(WorkloadSpec::simulation(seed)),
        other => Err(CliError::Config(format!(
            "unknown preset `{other}` (expected physical or simulation)"
        ))),
    }
}

fn cmd_sweep(args: SweepArgs) -> Result<(), CliError> {
    let policies = parse_policies(&args.policy)?;
    if policies.is_empty() {
        return Err(CliError::Config("no policies given".into()));
    }
    let cluster = parse_cluster(&args.cluster)?;
    let (profiles, _) = load_profiles(&args.profiles)?;

    let grid: Vec<f64> = match &args.grid {
        Some(text) => text
            .split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(|s| {
                s.parse::<f64>()
                    .map_err(|_| CliError::Config(format!("bad grid value `{s}`")))
            })
            .collect::<Result<_, _>>()?,
        None => match args.dimension.as_str() {
            "interference" => vec![1.0, 1.25, 1.5, 1.75, 2.0],
            "load" => vec![0.5, 1.0, 1.5, 2.0],
            _ => vec![],
        },
    };
    if grid.is_empty() {
        return Err(CliError::Config("sweep grid is empty".into()));
    }

    let mut rows: Vec<(f64, String, SimMetrics)> = Vec::new();
    match args.dimension.as_str() {
        "interference" => {
            let trace = match &args.trace {
                Some(path) => read_trace(path)?,
                None => {
                    generate_workload(&preset_spec(&args.preset, args.seed)?).map_err(config_err)?
                }
            };
            for &xi in &grid {
                let interference = InterferenceTable::constant(xi).map_err(config_err)?;
                for policy in &policies {
                    let outcome = run_once(
                        &trace,
                        &cluster,
                        policy,
                        &profiles,
                        &interference,
                        args.seed,
                    )?;
                    rows.push((xi, policy.name().to_string(), outcome.metrics));
                }
            }
        }
        "load" => {
            if args.trace.is_some() {
                return Err(CliError::Config(
                    "load sweeps regenerate the workload per point; use --preset, not --trace"
                        .into(),
                ));
            }
            let interference = default_interference();
            for &scale in &grid {
                let mut spec = preset_spec(&args.preset, args.seed)?;
                spec.load_scale = scale;
                let trace = generate_workload(&spec).map_err(config_err)?;
                for policy in &policies {
                    let outcome = run_once(
                        &trace,
                        &cluster,
                        policy,
                        &profiles,
                        &interference,
                        args.seed,
                    )?;
                    rows.push((scale, policy.name().to_string(), outcome.metrics));
                }
            }
        }
        other => {
            return Err(CliError::Config(format!(
                "unknown dimension `{other}` (expected interference or load)"
            )));
        }
    }

    ensure_out_dir(&args.out)?;
    let csv = report::sweep_csv(&args.dimension, &rows);
    write_file(&args.out.join("sweep.csv"), &csv)?;
    println!(
        "swept {} over {} values x {} policies -> {}",
        args.dimension,
        grid.len(),
        policies.len(),
        args.out.join("sweep.csv").display()
    );
    Ok(())
}

fn cmd_gen_trace(args: GenTraceArgs) -> Result<(), CliError> {
    let mut spec = preset_spec(&args.preset, args.seed)?;
    spec.load_scale = args.load_scale;
    let jobs = generate_workload(&spec).map_err(config_err)?;
    ensure_out_dir(&args.out)?;
    let trace_path = args.out.join("trace.jsonl");
    write_file(&trace_path, &save_trace(&jobs))?;
    println!("wrote {} jobs to {}", jobs.len(), trace_path.display());
    if args.emit_defaults {
        let profiles_path = args.out.join("profiles.json");
        write_file(&profiles_path, &default_profiles().to_json())?;
        let interference_path = args.out.join("interference.json");
        let table = default_interference();
        write_file(
            &interference_path,
            &serde_json::to_string_pretty(&table).expect("table serializes"),
        )?;
        println!(
            "wrote default documents to {} and {}",
            profiles_path.display(),
            interference_path.display()
        );
    }
    Ok(())
}

fn cmd_verify_theorem(args: VerifyArgs) -> Result<(), CliError> {
    if args.samples == 0 {
        return Err(CliError::Config("need at least one sample".into()));
    }
    if args.grid_points < 2 {
        return Err(CliError::Config("need at least two grid points".into()));
    }
    let samples = endpoint_optimality_samples(args.samples, args.grid_points, args.seed)
        .map_err(config_err)?;

    ensure_out_dir(&args.out)?;
    let mut csv = String::from(
        "t_running,iters_running,xi_running,t_arriving,iters_arriving,xi_arriving,endpoint_avg,grid_avg,grid_kappa,violation\n",
    );
    for s in &samples {
        csv.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{}\n",
            s.running.solo_iter,
            s.running.remaining_iters,
            s.running.xi,
            s.arriving.solo_iter,
            s.arriving.remaining_iters,
            s.arriving.xi,
            s.endpoint_avg,
            s.grid_avg,
            s.grid_kappa,
            s.violation
        ));
    }
    write_file(&args.out.join("theorem.csv"), &csv)?;

    let worst = samples
        .iter()
        .max_by(|a, b| a.violation.total_cmp(&b.violation))
        .expect("samples are non-empty");
    let violations = samples.iter().filter(|s| s.violation > 1e-9).count();
    println!(
        "{} samples, {} grid points: max violation {:.3e}, {} above tolerance",
        args.samples, args.grid_points, worst.violation, violations
    );
    println!(
        "worst pair: running (t={:.4}, i={}, xi={:.3}), arriving (t={:.4}, i={}, xi={:.3}), endpoint {:.4} vs grid {:.4}",
        worst.running.solo_iter,
        worst.running.remaining_iters,
        worst.running.xi,
        worst.arriving.solo_iter,
        worst.arriving.remaining_iters,
        worst.arriving.xi,
        worst.endpoint_avg,
        worst.grid_avg
    );
    if violations > 0 {
        return Err(CliError::Invariant(format!(
            "{violations} of {} samples violated endpoint optimality",
            args.samples
        )));
    }
    Ok(())
}
