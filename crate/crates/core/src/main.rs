use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use segfdr::analysis::{
    AnalysisInput, AnalyzeOptions, EstimatorChoice, analyze, validate_segments, write_report,
    write_validation_csv,
};
use segfdr::estimators::{
    BootstrapScheme, DEFAULT_BOOTSTRAP_REPLICATES, EffectSet, PValueSet, estimate_all,
};
use segfdr::io::{load_segments, load_summary};
use segfdr::lrt::{ModelCache, SampleSizes, TestProblem};
use segfdr::rng::substream;
use segfdr::simulation::{
    Allocation, Setting, SimConfig, run_study, write_metrics, write_power_curve,
};
use segfdr::{Error, Result};

#[derive(Parser)]
#[command(
    name = "segfdr",
    version,
    about = "Adaptive FDR control for segmented exponential lifetimes"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Test every segment against a benchmark mean and apply adaptive BH
    Analyze(AnalyzeArgs),
    /// Run the Monte Carlo comparison of π₀ estimators
    Simulate(SimulateArgs),
    /// Check each segment for exponentiality
    Validate(ValidateArgs),
    /// Print all π₀ estimates for a summary file
    EstimatePi0(EstimateArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Raw,
    Summary,
}

#[derive(Clone, Copy, ValueEnum)]
enum Scheme {
    Analytic,
    Resample,
}

#[derive(Args)]
struct BootstrapArgs {
    /// How the bootstrap π₀ (also the initial estimate for U and E) is formed
    #[arg(long, value_enum, default_value = "analytic")]
    pi0_bootstrap: Scheme,
    /// Resamples for --pi0-bootstrap resample
    #[arg(long, default_value_t = DEFAULT_BOOTSTRAP_REPLICATES)]
    pi0_replicates: usize,
}

impl BootstrapArgs {
    fn scheme(&self) -> BootstrapScheme {
        match self.pi0_bootstrap {
            Scheme::Analytic => BootstrapScheme::Analytic,
            Scheme::Resample => BootstrapScheme::Resample {
                replicates: self.pi0_replicates,
            },
        }
    }
}

#[derive(Args)]
struct AnalyzeArgs {
    /// Long-format lifetimes (raw) or per-segment summaries (summary)
    #[arg(long)]
    input: PathBuf,
    #[arg(long, value_enum, default_value = "raw")]
    format: Format,
    /// Benchmark mean (raw input only); defaults to the grand mean
    #[arg(long)]
    theta0: Option<f64>,
    /// FDR levels, comma separated
    #[arg(long, value_delimiter = ',', default_value = "0.05,0.1")]
    q: Vec<f64>,
    /// u, e, bootstrap, average, or all (all adjusts with u)
    #[arg(long, default_value = "all")]
    estimator: String,
    /// Adjust with this π₀ instead of an estimate
    #[arg(long)]
    pi0: Option<f64>,
    /// Test only for longer lifetimes instead of any difference
    #[arg(long)]
    one_sided: bool,
    /// Parametric bootstrap replicates for the exponentiality check
    #[arg(long, default_value_t = 999)]
    ks_replicates: usize,
    /// Skip the exponentiality check
    #[arg(long)]
    no_validate: bool,
    #[command(flatten)]
    bootstrap: BootstrapArgs,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Directory for the CSV/JSON report
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long, default_value_t = 100)]
    m: usize,
    #[arg(long, default_value_t = 50)]
    n: usize,
    /// One or more true proportions, comma separated
    #[arg(
        long,
        value_delimiter = ',',
        default_value = "0.1,0.2,0.3,0.4,0.5,0.6,0.7,0.8,0.9"
    )]
    pi0: Vec<f64>,
    #[arg(long, default_value = "uniform")]
    setting: String,
    /// LEFT:RIGHT percentages of poor and better non-null segments
    #[arg(long, default_value = "50:50")]
    alloc: String,
    #[arg(long, default_value_t = 1000)]
    reps: usize,
    #[arg(long, default_value_t = 0.05)]
    q: f64,
    #[arg(long, default_value = "one-sample-two-sided")]
    problem: String,
    #[command(flatten)]
    bootstrap: BootstrapArgs,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Directory for metrics.csv and plots/power_curve.csv
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ValidateArgs {
    #[arg(long)]
    input: PathBuf,
    /// Parametric bootstrap replicates
    #[arg(long, default_value_t = 999)]
    bootstrap: usize,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Write the table here as CSV
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct EstimateArgs {
    #[arg(long)]
    input: PathBuf,
    #[command(flatten)]
    bootstrap: BootstrapArgs,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Print JSON instead of a table
    #[arg(long)]
    json: bool,
}

fn run_analyze(a: AnalyzeArgs) -> Result<()> {
    let opts = AnalyzeOptions {
        theta0: a.theta0,
        q_levels: a.q,
        estimator: a.estimator.parse::<EstimatorChoice>()?,
        pi0_override: a.pi0,
        bootstrap: a.bootstrap.scheme(),
        problem: if a.one_sided {
            TestProblem::OneSampleGreater
        } else {
            TestProblem::OneSampleTwoSided
        },
        ks_replicates: (!a.no_validate).then_some(a.ks_replicates),
        ci_level: 0.95,
        seed: a.seed,
    };
    let report = match a.format {
        Format::Raw => {
            let segs = load_segments(&a.input)?;
            analyze(AnalysisInput::Segments(&segs), &opts)?
        }
        Format::Summary => {
            let rows = load_summary(&a.input)?;
            analyze(AnalysisInput::Summary(&rows), &opts)?
        }
    };
    if let Some(t) = report.theta0 {
        println!("theta0\t{t}");
    }
    for e in &report.estimates {
        println!("pi0_{}\t{:.5}", e.method.label(), e.value);
    }
    println!("pi0_used\t{:.5}", report.pi0_used);
    for (k, q) in report.q_levels.iter().enumerate() {
        println!(
            "rejected_q{q}\t{}\t(non-adaptive {})",
            report.rejected(k).len(),
            report.nonadaptive_rejected(k).len()
        );
    }
    if !report.validation.is_empty() {
        let failing = report
            .validation
            .iter()
            .filter(|v| v.ks_pval <= 0.05)
            .count();
        println!("ks_fail_0.05\t{failing}/{}", report.validation.len());
    }
    if let Some(dir) = a.out {
        write_report(&report, &dir)?;
        println!("report written to {}", dir.display());
    }
    Ok(())
}

fn run_simulate(a: SimulateArgs) -> Result<()> {
    let setting: Setting = a.setting.parse()?;
    let allocation: Allocation = a.alloc.parse()?;
    let problem: TestProblem = a.problem.parse()?;
    let grid: Vec<SimConfig> = a
        .pi0
        .iter()
        .map(|&pi0| SimConfig {
            m: a.m,
            n: a.n,
            pi0,
            setting,
            allocation,
            reps: a.reps,
            seed: a.seed,
            q: a.q,
            problem,
            bootstrap: a.bootstrap.scheme(),
        })
        .collect();
    let rows = run_study(&grid)?;
    println!("pi0\testimator\tmean\tbias\tmse\tpower\tnonadaptive\tfdr");
    for r in &rows {
        println!(
            "{}\t{}\t{:.5}\t{:+.5}\t{:.5}\t{:.5}\t{:.5}\t{:.5}",
            r.pi0, r.estimator, r.mean_estimate, r.bias, r.mse, r.power, r.nonadaptive_power, r.fdr
        );
    }
    if let Some(dir) = a.out {
        let plots = dir.join("plots");
        std::fs::create_dir_all(&plots).map_err(|e| Error::Io {
            path: plots.clone(),
            source: e,
        })?;
        write_metrics(&rows, &dir.join("metrics.csv"))?;
        write_power_curve(&rows, &plots.join("power_curve.csv"))?;
        println!("results written to {}", dir.display());
    }
    Ok(())
}

fn run_validate(a: ValidateArgs) -> Result<()> {
    let segs = load_segments(&a.input)?;
    let rows = validate_segments(&segs, a.bootstrap, a.seed)?;
    println!("segment\tn\tD\tpval");
    for r in &rows {
        println!("{}\t{}\t{:.4}\t{:.4}", r.segment, r.n, r.ks_d, r.ks_pval);
    }
    let failing = rows.iter().filter(|r| r.ks_pval <= a.alpha).count();
    println!(
        "{failing} of {} segments fail at alpha = {}",
        rows.len(),
        a.alpha
    );
    if segs.len() > rows.len() {
        println!(
            "{} segments with fewer than 3 observations skipped",
            segs.len() - rows.len()
        );
    }
    if let Some(path) = a.out {
        write_validation_csv(&rows, &path)?;
    }
    Ok(())
}

fn run_estimate(a: EstimateArgs) -> Result<()> {
    let rows = load_summary(&a.input)?;
    let pvals = PValueSet::new(rows.iter().map(|r| r.pval).collect())?;
    let problem = TestProblem::OneSampleTwoSided;
    let effects = EffectSet::new(
        rows.iter().map(|r| r.del).collect(),
        rows.iter().map(|r| SampleSizes::One(r.n)).collect(),
        problem,
    )?;
    let mut rng = substream(a.seed, "pi0", 0);
    let suite = estimate_all(
        &pvals,
        &effects,
        a.bootstrap.scheme(),
        &mut rng,
        &mut ModelCache::new(problem),
    )?;
    if a.json {
        println!("{}", serde_json::to_string_pretty(&suite)?);
    } else {
        println!("m\t{}", pvals.len());
        for e in suite.iter() {
            println!("{}\t{:.5}", e.method.label(), e.value);
        }
    }
    Ok(())
}

fn input_exists(path: &Path) -> Result<()> {
    if path.exists() {
        Ok(())
    } else {
        Err(Error::Io {
            path: path.to_path_buf(),
            source: std::io::Error::new(std::io::ErrorKind::NotFound, "no such file"),
        })
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::Analyze(a) => input_exists(&a.input).and_then(|_| run_analyze(a)),
        Command::Simulate(a) => run_simulate(a),
        Command::Validate(a) => input_exists(&a.input).and_then(|_| run_validate(a)),
        Command::EstimatePi0(a) => input_exists(&a.input).and_then(|_| run_estimate(a)),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
