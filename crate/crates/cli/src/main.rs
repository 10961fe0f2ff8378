//! `osumc` — optimal subsampling for generalized linear models.
//!
//! Subcommands: `fit` (estimate coefficients from a CSV), `weights` (export
//! a sampling distribution without fitting), `simulate` (generate synthetic
//! datasets), `bench` (Monte Carlo method comparison from a config file),
//! `qq` (chi-square Q-Q diagnostic over per-replication records), and
//! `eval-real` (held-out evaluation on a fixed dataset).
//!
//! Exit codes: 0 success, 2 when an estimate failed to converge, 1 for any
//! other error. Errors go to standard error as `error[<code>]: <message>`.

use std::fs;
use std::io::{BufReader, BufWriter, Write};
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use nalgebra::{DMatrix, DVector};
use rand_chacha::rand_core::SeedableRng;

use osumc_core::io::{self, CsvSchema, FeatureColumns, LoadedCsv};
use osumc_core::linalg::{inv_sqrt_spd, SymSolve};
use osumc_core::{
    full_mle, generic_sampling_estimate, leverage_weights, linear_fast_path, osmac_mmse_weights,
    osumc_estimate, pilot_fit, plug_in_information, qq_statistics, real_data_eval,
    run_mse_experiment, slev_weights, uniform_weights, Dataset, DesignKind, Error,
    ExperimentResult, Family, FitResult, Method, RealDataConfig, Result, SamplingWeights,
    ScenarioSpec, StreamRng,
};
use osumc_core::{asymptotic_variance, gen_scenario, osumc_weights};

#[derive(Parser)]
#[command(
    name = "osumc",
    version,
    about = "Optimal subsampling estimators for generalized linear models"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit coefficients on a CSV dataset with a chosen sampling method.
    Fit(FitArgs),
    /// Compute and export a sampling distribution without fitting.
    Weights(WeightsArgs),
    /// Generate a synthetic dataset to CSV.
    Simulate(SimulateArgs),
    /// Run a Monte Carlo method comparison from a run-configuration file.
    Bench(BenchArgs),
    /// Chi-square Q-Q diagnostic over per-replication records.
    Qq(QqArgs),
    /// Held-out evaluation of subsampling methods on a fixed dataset.
    EvalReal(EvalRealArgs),
}

/// CSV interpretation flags shared by data-reading subcommands.
#[derive(Args)]
struct SchemaArgs {
    /// Header name of the response column (default: the first column).
    #[arg(long)]
    response_column: Option<String>,
    /// Comma-separated feature column names (default: all non-response columns).
    #[arg(long)]
    feature_columns: Option<String>,
    /// Field delimiter.
    #[arg(long, default_value_t = ',')]
    delimiter: char,
    /// The file has no header row.
    #[arg(long)]
    no_header: bool,
    /// Cell content marking an unobserved response.
    #[arg(long, default_value = "")]
    missing_token: String,
}

impl SchemaArgs {
    fn to_schema(&self) -> Result<CsvSchema> {
        if !self.delimiter.is_ascii() {
            return Err(Error::InvalidValue {
                key: "delimiter".into(),
                message: format!("`{}` is not an ASCII character", self.delimiter),
            });
        }
        Ok(CsvSchema {
            response_column: self.response_column.clone(),
            feature_columns: match &self.feature_columns {
                None => FeatureColumns::AllOthers,
                Some(list) => FeatureColumns::List(
                    list.split(',')
                        .map(str::trim)
                        .filter(|s| !s.is_empty())
                        .map(String::from)
                        .collect(),
                ),
            },
            delimiter: self.delimiter as u8,
            has_header: !self.no_header,
            missing_token: self.missing_token.clone(),
        })
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum FitMethod {
    Osumc,
    Uniform,
    Leverage,
    Slev,
    Osmac,
    Mle,
    LinearFast,
}

#[derive(Args)]
struct FitArgs {
    /// Model family: linear, logistic, or poisson.
    #[arg(long)]
    family: String,
    /// Dataset CSV path.
    #[arg(long)]
    data: PathBuf,
    #[command(flatten)]
    schema: SchemaArgs,
    #[arg(long, value_enum)]
    method: FitMethod,
    /// Pilot subsample size (two-stage methods).
    #[arg(long, default_value_t = 200)]
    r0: usize,
    /// Second-stage subsample size.
    #[arg(long, default_value_t = 1000)]
    r: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value_t = 1e-8)]
    tol: f64,
    #[arg(long, default_value_t = 50)]
    max_iter: usize,
    /// Mix the sampling distribution toward uniform by this amount in [0, 1).
    #[arg(long, default_value_t = 0.0)]
    weight_floor: f64,
    /// Mixing constant for the shrinkage-leverage strategy.
    #[arg(long, default_value_t = 0.9)]
    slev_alpha: f64,
    /// Gate responses behind a pay-per-access store that counts distinct
    /// measurements.
    #[arg(long)]
    measurement_constraint: bool,
    /// Also print the plug-in asymptotic variance diagonal.
    #[arg(long)]
    with_variance: bool,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum WeightsMethod {
    Osumc,
    Uniform,
    Leverage,
    Slev,
    Osmac,
}

#[derive(Args)]
struct WeightsArgs {
    /// Model family; only the two-stage and mMSE strategies use it.
    #[arg(long, default_value = "linear")]
    family: String,
    #[arg(long)]
    data: PathBuf,
    #[command(flatten)]
    schema: SchemaArgs,
    #[arg(long, value_enum)]
    method: WeightsMethod,
    /// Pilot subsample size (two-stage and mMSE strategies).
    #[arg(long, default_value_t = 200)]
    r0: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value_t = 1e-8)]
    tol: f64,
    #[arg(long, default_value_t = 50)]
    max_iter: usize,
    #[arg(long, default_value_t = 0.0)]
    weight_floor: f64,
    #[arg(long, default_value_t = 0.9)]
    slev_alpha: f64,
    /// Output CSV path (default: standard output).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SimulateArgs {
    /// Design name (mzNormal, nzNormal, unNormal, mixNormal, GA, T1, T3, T9,
    /// case1, case2).
    #[arg(long)]
    design: String,
    /// Override the design's default family.
    #[arg(long)]
    family: Option<String>,
    #[arg(long)]
    n: usize,
    #[arg(long)]
    p: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Comma-separated true coefficients (default: the design's convention).
    #[arg(long)]
    beta0: Option<String>,
    /// Linear-family noise standard deviation.
    #[arg(long)]
    noise_sd: Option<f64>,
    /// Replication index within the seed's stream.
    #[arg(long, default_value_t = 0)]
    replication: usize,
    /// Output CSV path.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct BenchArgs {
    /// Run-configuration file (flat `key = value`; defaults apply when
    /// omitted). Flags below override file values.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    family: Option<String>,
    #[arg(long)]
    design: Option<String>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    p: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Comma-separated method names.
    #[arg(long)]
    methods: Option<String>,
    /// Comma-separated ascending subsample sizes.
    #[arg(long)]
    r_values: Option<String>,
    #[arg(long)]
    r0: Option<usize>,
    #[arg(long)]
    replications: Option<usize>,
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    max_iter: Option<usize>,
    #[arg(long)]
    slev_alpha: Option<f64>,
    #[arg(long)]
    weight_floor: Option<f64>,
    #[arg(long)]
    parallelism: Option<usize>,
    #[arg(long)]
    gated: Option<bool>,
    #[arg(long)]
    output_dir: Option<PathBuf>,
    /// Write 0 for all wall-time fields, making output files byte-identical
    /// across runs.
    #[arg(long)]
    zero_timing: bool,
}

#[derive(Args)]
struct QqArgs {
    /// Per-replication records CSV written by `bench`.
    #[arg(long)]
    records: PathBuf,
    /// Method to select when the records hold several.
    #[arg(long)]
    method: Option<String>,
    /// Subsample size to select when the records hold several.
    #[arg(long)]
    r: Option<usize>,
    /// Output CSV path for the pairs (default: standard output).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct EvalRealArgs {
    #[arg(long)]
    family: String,
    #[arg(long)]
    data: PathBuf,
    #[command(flatten)]
    schema: SchemaArgs,
    /// Comma-separated method names.
    #[arg(long, default_value = "osumc,uniform,full-mle")]
    methods: String,
    /// Comma-separated subsample sizes.
    #[arg(long, default_value = "500,1000")]
    r_values: String,
    #[arg(long, default_value_t = 200)]
    r0: usize,
    #[arg(long, default_value_t = 100)]
    replications: usize,
    /// Fraction of rows held out for prediction scoring.
    #[arg(long, default_value_t = 0.2)]
    test_fraction: f64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value_t = 1e-8)]
    tol: f64,
    #[arg(long, default_value_t = 50)]
    max_iter: usize,
    #[arg(long, default_value_t = 0.9)]
    slev_alpha: f64,
    #[arg(long, default_value_t = 0.0)]
    weight_floor: f64,
    /// Output CSV path (default: standard output).
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() {
    env_logger::init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            std::process::exit(code);
        }
    };
    let outcome = match cli.command {
        Command::Fit(args) => run_fit(&args),
        Command::Weights(args) => run_weights(&args),
        Command::Simulate(args) => run_simulate(&args),
        Command::Bench(args) => run_bench(&args),
        Command::Qq(args) => run_qq(&args),
        Command::EvalReal(args) => run_eval_real(&args),
    };
    match outcome {
        Ok(code) => std::process::exit(code),
        Err(e) => {
            eprintln!("error[{}]: {e}", e.code());
            let code = if matches!(e, Error::NotConverged { .. }) {
                2
            } else {
                1
            };
            std::process::exit(code);
        }
    }
}

fn parse_comma_list<T: std::str::FromStr>(key: &str, text: &str) -> Result<Vec<T>>
where
    T::Err: std::fmt::Display,
{
    let items: Vec<&str> = text
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .collect();
    if items.is_empty() {
        return Err(Error::InvalidValue {
            key: key.into(),
            message: "empty list".into(),
        });
    }
    items
        .into_iter()
        .map(|s| {
            s.parse::<T>().map_err(|e| Error::InvalidValue {
                key: key.into(),
                message: format!("`{s}`: {e}"),
            })
        })
        .collect()
}

fn parse_methods(text: &str) -> Result<Vec<Method>> {
    let names: Vec<String> = parse_comma_list("methods", text)?;
    names.iter().map(|s| Method::parse(s)).collect()
}

fn open_out(path: &PathBuf) -> Result<BufWriter<fs::File>> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent)?;
        }
    }
    Ok(BufWriter::new(fs::File::create(path)?))
}

// ---------------------------------------------------------------------------
// fit
// ---------------------------------------------------------------------------

fn run_fit(args: &FitArgs) -> Result<i32> {
    let family = Family::parse(&args.family)?;
    let schema = args.schema.to_schema()?;
    let loaded: LoadedCsv = io::load_csv(&args.data, &schema)?;
    let data = if args.measurement_constraint {
        loaded.dataset.fork_oracle()
    } else {
        loaded.dataset
    };
    let mut rng = StreamRng::seed_from_u64(args.seed);
    let floor = args.weight_floor;

    // Each arm yields the fit plus the sampling distribution it used (when
    // one exists), for the optional variance report.
    let (fit, weights, r_used, label): (FitResult, Option<SamplingWeights>, usize, &str) =
        match args.method {
            FitMethod::Osumc => {
                let res = osumc_estimate(
                    family,
                    &data,
                    args.r0,
                    args.r,
                    args.tol,
                    args.max_iter,
                    floor,
                    &mut rng,
                )?;
                let w = if args.with_variance {
                    let pilot = res.pilot.as_ref().expect("two-stage fit keeps its pilot");
                    Some(osumc_weights(family, data.x(), pilot)?.with_floor(floor)?)
                } else {
                    None
                };
                (res.fit, w, args.r, "osumc")
            }
            FitMethod::LinearFast => {
                if family != Family::Linear {
                    return Err(Error::InvalidValue {
                        key: "method".into(),
                        message: "linear-fast requires --family linear".into(),
                    });
                }
                let res = linear_fast_path(&data, args.r0, args.r, args.tol, floor, &mut rng)?;
                let w = if args.with_variance {
                    let pilot = res.pilot.as_ref().expect("two-stage fit keeps its pilot");
                    Some(osumc_weights(family, data.x(), pilot)?.with_floor(floor)?)
                } else {
                    None
                };
                (res.fit, w, args.r, "linear-fast")
            }
            FitMethod::Uniform => {
                let w = uniform_weights(data.n())?;
                let res = generic_sampling_estimate(
                    family,
                    &data,
                    &w,
                    args.r,
                    args.tol,
                    args.max_iter,
                    &mut rng,
                )?;
                (res.fit, Some(w), args.r, "uniform")
            }
            FitMethod::Leverage => {
                let w = leverage_weights(data.x())?.with_floor(floor)?;
                let res = generic_sampling_estimate(
                    family,
                    &data,
                    &w,
                    args.r,
                    args.tol,
                    args.max_iter,
                    &mut rng,
                )?;
                (res.fit, Some(w), args.r, "leverage")
            }
            FitMethod::Slev => {
                let w = slev_weights(data.x(), args.slev_alpha)?.with_floor(floor)?;
                let res = generic_sampling_estimate(
                    family,
                    &data,
                    &w,
                    args.r,
                    args.tol,
                    args.max_iter,
                    &mut rng,
                )?;
                (res.fit, Some(w), args.r, "slev")
            }
            FitMethod::Osmac => {
                if family != Family::Logistic {
                    return Err(Error::InfeasibleMethod {
                        method: "osmac".into(),
                        reason: "the mMSE benchmark is defined for logistic regression only"
                            .into(),
                    });
                }
                let pilot = pilot_fit(family, &data, args.r0, args.tol, args.max_iter, &mut rng)?;
                let y = data.full_responses()?;
                let w = osmac_mmse_weights(data.x(), &y, &pilot.beta_tilde)?.with_floor(floor)?;
                let mut res = generic_sampling_estimate(
                    family,
                    &data,
                    &w,
                    args.r,
                    args.tol,
                    args.max_iter,
                    &mut rng,
                )?;
                res.fit.responses_measured = data.n();
                (res.fit, Some(w), args.r, "osmac")
            }
            FitMethod::Mle => {
                let mut fit = full_mle(family, &data, args.tol, args.max_iter)?;
                fit.responses_measured = data.n();
                (fit, None, data.n(), "mle")
            }
        };

    println!("method: {label}");
    println!("family: {family}");
    println!(
        "data: {} (n = {}, p = {}, responses observed = {})",
        args.data.display(),
        data.n(),
        data.p(),
        loaded.observed_responses
    );
    println!(
        "converged: {} after {} iterations (final score norm {:.3e})",
        fit.converged, fit.iterations, fit.final_score_norm
    );
    let measured = if args.measurement_constraint {
        data.responses_measured()
    } else {
        fit.responses_measured
    };
    println!("responses measured: {measured}");
    println!("coefficients:");
    print_named_vector(&loaded.feature_names, &fit.beta);

    if args.with_variance {
        let diag = variance_diagonal(family, &data, &fit.beta, weights.as_ref(), r_used)?;
        println!("asymptotic variance diagonal:");
        print_named_vector(&loaded.feature_names, &diag);
    }

    Ok(if fit.converged { 0 } else { 2 })
}

fn print_named_vector(names: &[String], values: &DVector<f64>) {
    let width = names.iter().map(String::len).max().unwrap_or(1).max(4);
    for (name, &v) in names.iter().zip(values.iter()) {
        println!("  {name:<width$}  {}", io::fmt17(v));
    }
}

/// Diagonal of the plug-in asymptotic covariance: the sandwich formula for
/// subsampling fits, the inverse total information for the full-data fit.
fn variance_diagonal(
    family: Family,
    data: &Dataset,
    beta: &DVector<f64>,
    weights: Option<&SamplingWeights>,
    r: usize,
) -> Result<DVector<f64>> {
    let cov = match weights {
        Some(w) => asymptotic_variance(family, data.x(), beta, w.pi(), r)?,
        None => {
            let phi = plug_in_information(family, data.x(), beta)?;
            let total = phi * data.n() as f64;
            let solver = SymSolve::factor(&total, "full-data covariance")?;
            solver.solve_matrix(&DMatrix::identity(data.p(), data.p()))
        }
    };
    Ok(cov.diagonal())
}

// ---------------------------------------------------------------------------
// weights
// ---------------------------------------------------------------------------

fn run_weights(args: &WeightsArgs) -> Result<i32> {
    let family = Family::parse(&args.family)?;
    let schema = args.schema.to_schema()?;
    let loaded = io::load_csv(&args.data, &schema)?;
    // Always gate the store here: the counter proves how many responses each
    // strategy needed.
    let data = loaded.dataset.fork_oracle();
    let mut rng = StreamRng::seed_from_u64(args.seed);

    let (weights, label) = match args.method {
        WeightsMethod::Uniform => (uniform_weights(data.n())?, "uniform"),
        WeightsMethod::Leverage => (leverage_weights(data.x())?, "leverage"),
        WeightsMethod::Slev => (slev_weights(data.x(), args.slev_alpha)?, "slev"),
        WeightsMethod::Osumc => {
            let pilot = pilot_fit(family, &data, args.r0, args.tol, args.max_iter, &mut rng)?;
            (osumc_weights(family, data.x(), &pilot)?, "osumc")
        }
        WeightsMethod::Osmac => {
            if family != Family::Logistic {
                return Err(Error::InfeasibleMethod {
                    method: "osmac".into(),
                    reason: "the mMSE benchmark is defined for logistic regression only".into(),
                });
            }
            let pilot = pilot_fit(family, &data, args.r0, args.tol, args.max_iter, &mut rng)?;
            let y = data.full_responses()?;
            (
                osmac_mmse_weights(data.x(), &y, &pilot.beta_tilde)?,
                "osmac",
            )
        }
    };
    let measured = data.responses_measured();
    match args.method {
        WeightsMethod::Uniform | WeightsMethod::Leverage | WeightsMethod::Slev => assert_eq!(
            measured, 0,
            "response-free strategy touched {measured} responses"
        ),
        WeightsMethod::Osumc => assert!(
            measured <= args.r0,
            "pilot measured {measured} responses, more than r0 = {}",
            args.r0
        ),
        WeightsMethod::Osmac => {}
    }
    let weights = weights.with_floor(args.weight_floor)?;

    let hash = io::hash_of(&(
        "weights",
        label,
        args.r0,
        args.seed,
        args.weight_floor,
        args.slev_alpha,
    ));
    let header = io::output_header(&hash, args.seed);
    match &args.out {
        Some(path) => {
            let mut w = open_out(path)?;
            io::write_weights_csv(&mut w, &header, &weights)?;
            w.flush()?;
            println!("wrote {}", path.display());
        }
        None => {
            let stdout = std::io::stdout();
            let mut w = BufWriter::new(stdout.lock());
            io::write_weights_csv(&mut w, &header, &weights)?;
            w.flush()?;
        }
    }
    eprintln!("strategy: {label}");
    eprintln!("responses measured during weight construction: {measured}");
    Ok(0)
}

// ---------------------------------------------------------------------------
// simulate
// ---------------------------------------------------------------------------

fn run_simulate(args: &SimulateArgs) -> Result<i32> {
    let design = DesignKind::parse(&args.design)?;
    let mut spec = ScenarioSpec::new(design, args.n, args.p, args.seed);
    if let Some(family) = &args.family {
        spec.family = Family::parse(family)?;
    }
    if let Some(text) = &args.beta0 {
        spec.beta0 = Some(DVector::from_vec(parse_comma_list("beta0", text)?));
    }
    if let Some(sd) = args.noise_sd {
        spec.noise_sd = Some(sd);
    }
    spec.validate()?;
    let (dataset, beta0) = gen_scenario(&spec, args.replication)?;

    let header = io::output_header(&io::hash_of(&(&spec, args.replication)), args.seed);
    let mut w = open_out(&args.out)?;
    io::export_csv(&mut w, &dataset, &header)?;
    w.flush()?;

    println!(
        "wrote {} (family = {}, design = {}, n = {}, p = {}, replication = {})",
        args.out.display(),
        spec.family,
        spec.design,
        dataset.n(),
        dataset.p(),
        args.replication
    );
    println!("true coefficients:");
    let names: Vec<String> = (1..=dataset.p()).map(|j| format!("x{j}")).collect();
    print_named_vector(&names, &beta0);
    Ok(0)
}

// ---------------------------------------------------------------------------
// bench
// ---------------------------------------------------------------------------

fn run_bench(args: &BenchArgs) -> Result<i32> {
    let text = match &args.config {
        Some(path) => fs::read_to_string(path)?,
        None => String::new(),
    };
    let mut config = io::parse_run_config(&text)?;

    // Flag overrides; like the file, the design resets the family default
    // before an explicit family takes precedence.
    if let Some(design) = &args.design {
        let design = DesignKind::parse(design)?;
        config.spec.scenario.design = design;
        config.spec.scenario.family = design.family();
    }
    if let Some(family) = &args.family {
        config.spec.scenario.family = Family::parse(family)?;
    }
    if let Some(n) = args.n {
        config.spec.scenario.n = n;
    }
    if let Some(p) = args.p {
        config.spec.scenario.p = p;
    }
    if let Some(seed) = args.seed {
        config.spec.scenario.seed = seed;
    }
    if let Some(methods) = &args.methods {
        config.spec.methods = parse_methods(methods)?;
    }
    if let Some(r_values) = &args.r_values {
        config.spec.r_values = parse_comma_list("r_values", r_values)?;
    }
    if let Some(r0) = args.r0 {
        config.spec.r0 = r0;
    }
    if let Some(s) = args.replications {
        config.spec.replications = s;
    }
    if let Some(tol) = args.tol {
        config.spec.tol = tol;
    }
    if let Some(max_iter) = args.max_iter {
        config.spec.max_iter = max_iter;
    }
    if let Some(alpha) = args.slev_alpha {
        config.spec.slev_alpha = alpha;
    }
    if let Some(floor) = args.weight_floor {
        config.spec.weight_floor = floor;
    }
    if let Some(k) = args.parallelism {
        config.spec.parallelism = Some(k);
    }
    if let Some(gated) = args.gated {
        config.spec.gated = gated;
    }
    if let Some(dir) = &args.output_dir {
        config.output_dir = dir.clone();
    }
    config.validate()?;

    let hash = config.hash();
    let header = io::output_header(&hash, config.spec.scenario.seed);
    let mut result: ExperimentResult = run_mse_experiment(&config.spec)?;
    if args.zero_timing {
        for rec in &mut result.records {
            rec.time_ms = 0.0;
        }
        result.cells = ExperimentResult::recompute_cells(&result.records);
    }

    fs::create_dir_all(&config.output_dir)?;
    let records_path = config.output_dir.join("records.csv");
    let results_path = config.output_dir.join("results.csv");
    let long_path = config.output_dir.join("results_long.csv");
    let mut w = open_out(&records_path)?;
    io::write_records_csv(&mut w, &header, &result.records)?;
    w.flush()?;
    let mut w = open_out(&results_path)?;
    io::write_cells_csv(&mut w, &header, &result.cells)?;
    w.flush()?;
    let mut w = open_out(&long_path)?;
    io::write_long_csv(&mut w, &header, &result.cells)?;
    w.flush()?;

    println!("config hash: {hash}");
    println!(
        "{:<14} {:>7} {:>14} {:>14} {:>10} {:>7}",
        "method", "r", "mse", "std_error", "converged", "failed"
    );
    for cell in &result.cells {
        println!(
            "{:<14} {:>7} {:>14.6e} {:>14.6e} {:>10} {:>7}",
            cell.method.name(),
            cell.r,
            cell.mse,
            cell.std_error,
            cell.converged,
            cell.failed
        );
    }
    println!("wrote {}", records_path.display());
    println!("wrote {}", results_path.display());
    println!("wrote {}", long_path.display());
    Ok(0)
}

// ---------------------------------------------------------------------------
// qq
// ---------------------------------------------------------------------------

fn run_qq(args: &QqArgs) -> Result<i32> {
    let file = fs::File::open(&args.records)?;
    let records = io::read_records_csv(BufReader::new(file))?;
    let wanted_method = args
        .method
        .as_deref()
        .map(Method::parse)
        .transpose()?;
    let selected: Vec<_> = records
        .iter()
        .filter(|rec| rec.converged)
        .filter(|rec| wanted_method.is_none_or(|m| rec.method == m))
        .filter(|rec| args.r.is_none_or(|r| rec.r == r))
        .collect();
    if selected.is_empty() {
        return Err(Error::InvalidValue {
            key: "records".into(),
            message: "no converged records match the selection".into(),
        });
    }
    let mut cells: Vec<(Method, usize)> = selected.iter().map(|rec| (rec.method, rec.r)).collect();
    cells.sort_by_key(|(m, r)| (m.lane_index(), *r));
    cells.dedup();
    if cells.len() > 1 {
        let listing: Vec<String> = cells
            .iter()
            .map(|(m, r)| format!("{}@r={r}", m.name()))
            .collect();
        return Err(Error::InvalidValue {
            key: "records".into(),
            message: format!(
                "records hold several cells ({}); select one with --method and --r",
                listing.join(", ")
            ),
        });
    }

    let betas: Vec<DVector<f64>> = selected
        .iter()
        .map(|rec| DVector::from_vec(rec.beta.clone()))
        .collect();
    let p = betas[0].len();
    let s = betas.len();
    let mean = betas.iter().fold(DVector::zeros(p), |acc, b| acc + b) / s as f64;
    let mut cov = DMatrix::zeros(p, p);
    for b in &betas {
        let d = b - &mean;
        cov += &d * d.transpose();
    }
    cov /= (s - 1).max(1) as f64;
    let normalizer = inv_sqrt_spd(&cov, "empirical estimate covariance")?;
    let report = qq_statistics(&betas, &mean, &normalizer)?;

    let (method, r) = cells[0];
    let hash = io::hash_of(&("qq", method.name(), r, s));
    let header = io::output_header(&hash, selected[0].seed);
    match &args.out {
        Some(path) => {
            let mut w = open_out(path)?;
            io::write_qq_csv(&mut w, &header, &report)?;
            w.flush()?;
            println!("wrote {}", path.display());
        }
        None => {
            let stdout = std::io::stdout();
            let mut w = BufWriter::new(stdout.lock());
            io::write_qq_csv(&mut w, &header, &report)?;
            w.flush()?;
        }
    }
    eprintln!(
        "cell: {} at r = {r} ({s} replications, {} degrees of freedom)",
        method.name(),
        report.df
    );
    eprintln!("qq correlation: {:.6}", report.correlation);
    Ok(0)
}

// ---------------------------------------------------------------------------
// eval-real
// ---------------------------------------------------------------------------

fn run_eval_real(args: &EvalRealArgs) -> Result<i32> {
    let family = Family::parse(&args.family)?;
    let schema = args.schema.to_schema()?;
    let loaded = io::load_csv(&args.data, &schema)?;
    let config = RealDataConfig {
        methods: parse_methods(&args.methods)?,
        r_values: parse_comma_list("r_values", &args.r_values)?,
        r0: args.r0,
        replications: args.replications,
        test_fraction: args.test_fraction,
        seed: args.seed,
        tol: args.tol,
        max_iter: args.max_iter,
        slev_alpha: args.slev_alpha,
        weight_floor: args.weight_floor,
    };
    let report = real_data_eval(family, &loaded.dataset, &config)?;

    let hash = io::hash_of(&(&config, family.name()));
    let header = io::output_header(&hash, args.seed);
    match &args.out {
        Some(path) => {
            let mut w = open_out(path)?;
            io::write_real_data_csv(&mut w, &header, &report)?;
            w.flush()?;
            println!("wrote {}", path.display());
        }
        None => {
            let stdout = std::io::stdout();
            let mut w = BufWriter::new(stdout.lock());
            io::write_real_data_csv(&mut w, &header, &report)?;
            w.flush()?;
        }
    }
    eprintln!(
        "split: {} train / {} test rows, {} replications",
        report.n_train, report.n_test, report.replications
    );
    eprintln!(
        "{:<14} {:>7} {:>16} {:>18} {:>10} {:>7}",
        "method", "r", "median_rel_mse", "median_pred_ratio", "converged", "failed"
    );
    for row in &report.rows {
        eprintln!(
            "{:<14} {:>7} {:>16.6e} {:>18.6} {:>10} {:>7}",
            row.method.name(),
            row.r,
            row.median_rel_mse,
            row.median_pred_ratio,
            row.converged,
            row.failed
        );
    }
    Ok(0)
}
