use std::fs;
use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use hybrid_cran::harness::experiment::revalidate;
use hybrid_cran::harness::oracle::mean_gap;
use hybrid_cran::harness::results::{plot_series, plot_table, read_means, read_metadata, read_solutions, write_plot_table, PlotMetric};
use hybrid_cran::harness::{compare_with_oracle, run_experiment, write_results, Algorithm, ExperimentSpec, OutputPaths, Preset};
use hybrid_cran::igsbpo::IterationConfig;

#[derive(Parser)]
#[command(name = "hybrid-cran", version, about = "Cloud-RAN network power simulations with hybrid wireline/wireless backhaul")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a Monte Carlo sweep and write results, means and metadata.
    Run(RunArgs),
    /// Compare the outer loop with exhaustive search on small instances.
    Oracle(OracleArgs),
    /// Reshape a means file into one column per algorithm.
    Plotdata(PlotArgs),
    /// Re-check the solutions dumped by a sweep against every constraint.
    Validate(ValidateArgs),
}

#[derive(Args)]
struct RunArgs {
    /// JSON experiment description; flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Comma-separated SINR targets in dB.
    #[arg(long, value_delimiter = ',')]
    targets_db: Option<Vec<f64>>,
    #[arg(long)]
    realizations: Option<usize>,
    /// Comma-separated algorithm labels (igsbpo, gsbf, sp, cb, gs, oracle, sp+loop, cb+loop, gs+loop).
    #[arg(long, value_delimiter = ',')]
    algos: Option<Vec<String>>,
    #[arg(long)]
    seed: Option<u64>,
    /// Results `.csv` path or output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, env = "HYBRID_CRAN_WORKERS")]
    workers: Option<usize>,
    /// Store every feasible solution for `validate`.
    #[arg(long)]
    dump_solutions: bool,
}

#[derive(Args)]
struct OracleArgs {
    #[arg(long, default_value_t = 20)]
    realizations: usize,
    #[arg(long, default_value_t = 10.0)]
    target_db: f64,
    #[arg(long, default_value_t = 2024)]
    seed: u64,
    /// JSON preset; defaults to the three-wireline, three-wireless, two-user network.
    #[arg(long)]
    preset: Option<PathBuf>,
    #[arg(long, default_value_t = hybrid_cran::baselines::DEFAULT_ORACLE_CAP)]
    cap: usize,
    /// Per-instance CSV; printed to stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct PlotArgs {
    /// A `.means.csv` file written by `run`.
    means: PathBuf,
    /// network-power, total-tx-power or active-bs.
    #[arg(long, default_value = "network-power")]
    metric: String,
    /// Output CSV; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ValidateArgs {
    /// Results `.csv` path or directory given to `run --out`.
    results: PathBuf,
    #[arg(long, default_value_t = hybrid_cran::model::DEFAULT_VALIDATION_TOL)]
    tol: f64,
}

fn load_spec(args: &RunArgs) -> Result<ExperimentSpec> {
    let mut spec = match &args.config {
        Some(path) => {
            let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            ExperimentSpec::from_json(&text).with_context(|| format!("parsing {}", path.display()))?
        }
        None => ExperimentSpec::default(),
    };
    if let Some(t) = &args.targets_db {
        spec.targets_db = t.clone();
    }
    if let Some(r) = args.realizations {
        spec.realizations = r;
    }
    if let Some(a) = &args.algos {
        spec.algorithms = a.iter().map(|s| s.parse::<Algorithm>()).collect::<Result<_, _>>()?;
    }
    if let Some(s) = args.seed {
        spec.seed = s;
    }
    if let Some(o) = &args.out {
        spec.output = Some(o.clone());
    }
    if args.workers.is_some() {
        spec.workers = args.workers;
    }
    spec.dump_solutions |= args.dump_solutions;
    spec.validate()?;
    Ok(spec)
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|v| format!("{v:.4}")).unwrap_or_else(|| "-".into())
}

fn cmd_run(args: RunArgs) -> Result<ExitCode> {
    let spec = load_spec(&args)?;
    let out = spec.output.clone().unwrap_or_else(|| PathBuf::from("results"));
    let paths = OutputPaths::new(&out);
    log::info!(
        "{} targets x {} realizations, algorithms {:?}",
        spec.targets_db.len(),
        spec.realizations,
        spec.labels()
    );
    let result = run_experiment(&spec)?;
    write_results(&spec, &result, &paths)?;
    println!("{:>8}  {:<14} {:>9} {:>12} {:>12} {:>7}", "target", "algorithm", "feasible", "network W", "tx W", "active");
    for m in &result.means {
        println!(
            "{:>6} dB  {:<14} {:>4}/{:<4} {:>12} {:>12} {:>7}",
            m.target_sinr_db,
            m.algorithm,
            m.feasible,
            m.feasible + m.infeasible + m.failed,
            fmt_opt(m.mean_network_power_w),
            fmt_opt(m.mean_total_tx_power_w),
            m.mean_active_bs.map(|v| format!("{v:.2}")).unwrap_or_else(|| "-".into()),
        );
    }
    println!("results: {}", paths.results.display());
    println!("means:   {}", paths.means.display());
    if !result.failures.is_empty() {
        eprintln!("{} cells crashed; see {}", result.failures.len(), paths.metadata.display());
    }
    if !result.invalid.is_empty() {
        eprintln!("{} solutions failed validation", result.invalid.len());
        return Ok(ExitCode::FAILURE);
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_oracle(args: OracleArgs) -> Result<ExitCode> {
    let preset = match &args.preset {
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            Preset::from_json(&text).with_context(|| format!("parsing {}", p.display()))?
        }
        None => Preset::small(),
    };
    let rows = compare_with_oracle(
        &preset,
        args.target_db,
        args.realizations,
        args.seed,
        &IterationConfig::default(),
        args.cap,
    )?;
    let mut text = String::from("realization,igsbpo_w,oracle_w,gap,igsbpo_active,oracle_active\n");
    let join = |v: &[usize]| v.iter().map(|l| l.to_string()).collect::<Vec<_>>().join(" ");
    let opt = |v: Option<f64>| v.map(|v| v.to_string()).unwrap_or_default();
    for r in &rows {
        text.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.realization,
            opt(r.igsbpo_w),
            opt(r.oracle_w),
            opt(r.gap()),
            join(&r.igsbpo_active),
            join(&r.oracle_active)
        ));
    }
    match &args.out {
        Some(p) => fs::write(p, &text).with_context(|| format!("writing {}", p.display()))?,
        None => std::io::stdout().write_all(text.as_bytes())?,
    }
    let feasible = rows.iter().filter(|r| r.gap().is_some()).count();
    match mean_gap(&rows) {
        Some(g) => eprintln!("mean gap {:.3}% over {feasible} of {} instances", 100.0 * g, rows.len()),
        None => eprintln!("no instance was feasible for both methods"),
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_plotdata(args: PlotArgs) -> Result<ExitCode> {
    let metric: PlotMetric = args.metric.parse()?;
    let means = read_means(&args.means)?;
    let series = plot_series(&means, metric);
    match &args.out {
        Some(p) => write_plot_table(p, &series)?,
        None => print!("{}", plot_table(&series)),
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_validate(args: ValidateArgs) -> Result<ExitCode> {
    let paths = OutputPaths::new(&args.results);
    let meta = read_metadata(&paths.metadata)?;
    if !paths.solutions.exists() {
        bail!(
            "{} not found; rerun the sweep with --dump-solutions",
            paths.solutions.display()
        );
    }
    let records = read_solutions(&paths.solutions)?;
    let bad = revalidate(&meta.spec, &records, args.tol)?;
    for b in &bad {
        println!("{} dB realization {} {}: {}", b.target_sinr_db, b.realization, b.algorithm, b.violations);
    }
    println!("{} solutions checked, {} with violations", records.len(), bad.len());
    Ok(if bad.is_empty() { ExitCode::SUCCESS } else { ExitCode::FAILURE })
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Run(a) => cmd_run(a),
        Command::Oracle(a) => cmd_oracle(a),
        Command::Plotdata(a) => cmd_plotdata(a),
        Command::Validate(a) => cmd_validate(a),
    };
    match outcome {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
