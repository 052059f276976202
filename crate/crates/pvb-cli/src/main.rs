//! Command line front end: dataset loading, estimator dispatch, and
//! text/JSON/CSV reports.

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::Rng;
use serde_json::{json, Value};

use pvb_core::closed::EbgConfig;
use pvb_core::uncertainty::bootstrap_accuracy;
use pvb_core::{
    acc_em, acc_mi, bg, cca, ebg, generate, parse_sim_spec, BootCiType, BootConfig, Dataset,
    EmConfig, EmState, ErrorCategory, MiConfig, MiPooled, SimSpec,
};

type AccuracyResult = pvb_core::AccuracyResult<f64>;

mod report;

/// The coronary artery disease screening cohort shipped with the library:
/// 2688 SPECT test results, 471 of them verified by angiography.
const BUNDLED_DATA: &str = include_str!("../../pvb-core/data/spect_cad.csv");

#[derive(Parser)]
#[command(
    name = "pvb",
    version,
    about = "Diagnostic test accuracy estimation when disease verification is partial"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Cross-classify test result against verified disease status
    Table(TableArgs),
    /// Complete case analysis of the verified records (no correction)
    Cca(SimpleArgs),
    /// Count-based Bayes correction, no covariates
    Bg(SimpleArgs),
    /// Regression-extended Bayes correction
    Ebg(EbgArgs),
    /// Multiple imputation of the missing disease labels
    Mi(MiArgs),
    /// Joint likelihood of disease, test, and verification fitted by EM
    Em(EmArgs),
    /// Generate a synthetic cohort from a spec file
    Simulate(SimulateArgs),
    /// Run several estimators side by side
    Compare(CompareArgs),
}

#[derive(Args)]
struct IoArgs {
    /// Input CSV with columns T, D, and covariates; the bundled screening
    /// cohort when omitted
    input: Option<PathBuf>,
    /// Report format
    #[arg(long, value_enum, default_value_t = Format::Text)]
    format: Format,
    /// Write the report to a file instead of stdout
    #[arg(long)]
    output: Option<PathBuf>,
    /// Cap the worker thread pool
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Args)]
struct TableArgs {
    #[command(flatten)]
    io: IoArgs,
}

#[derive(Args)]
struct SimpleArgs {
    #[command(flatten)]
    io: IoArgs,
    /// Two-sided error rate of the confidence intervals
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
}

#[derive(Args)]
struct SeedArgs {
    /// RNG seed; stochastic runs require one
    #[arg(long)]
    seed: Option<u64>,
    /// Draw the seed from entropy instead of requiring --seed
    #[arg(long, conflicts_with = "seed")]
    no_seed: bool,
}

impl SeedArgs {
    fn resolve(&self) -> Result<u64, CliError> {
        match (self.seed, self.no_seed) {
            (Some(s), _) => Ok(s),
            (None, true) => Ok(rand::rng().random()),
            (None, false) => Err(CliError::Usage(
                "this run is stochastic; pass --seed N for a reproducible run, \
                 or --no-seed to draw a seed from entropy"
                    .to_string(),
            )),
        }
    }
}

#[derive(ValueEnum, Clone, Copy, PartialEq, Eq)]
enum Format {
    Text,
    Json,
    Csv,
}

#[derive(ValueEnum, Clone, Copy, PartialEq, Eq)]
enum CiTypeArg {
    Bca,
    Percentile,
}

impl CiTypeArg {
    fn to_boot(self) -> BootCiType {
        match self {
            CiTypeArg::Bca => BootCiType::Bca,
            CiTypeArg::Percentile => BootCiType::Percentile,
        }
    }

    fn label(self) -> &'static str {
        match self {
            CiTypeArg::Bca => "bca",
            CiTypeArg::Percentile => "percentile",
        }
    }
}

#[derive(Args)]
struct EbgArgs {
    #[command(flatten)]
    io: IoArgs,
    /// Covariate columns for the disease model (comma separated)
    #[arg(long, value_delimiter = ',')]
    covariates: Vec<String>,
    /// Include every test-by-covariate interaction in the disease model
    #[arg(long)]
    saturated: bool,
    /// Bootstrap replicates for interval estimation; 0 for points only
    #[arg(long = "R", default_value_t = 0)]
    replicates: usize,
    /// Bootstrap interval flavour
    #[arg(long = "ci-type", value_enum, default_value_t = CiTypeArg::Bca)]
    ci_type: CiTypeArg,
    #[command(flatten)]
    seed: SeedArgs,
    /// Two-sided error rate of the confidence intervals
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
}

#[derive(Args)]
struct MiArgs {
    #[command(flatten)]
    io: IoArgs,
    /// Covariate columns for the imputation model (comma separated)
    #[arg(long, value_delimiter = ',')]
    covariates: Vec<String>,
    /// Number of imputations (default: the percentage of missing labels)
    #[arg(long)]
    m: Option<usize>,
    #[command(flatten)]
    seed: SeedArgs,
    /// Two-sided error rate of the confidence intervals
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
}

#[derive(Args)]
struct EmArgs {
    #[command(flatten)]
    io: IoArgs,
    /// Covariate columns for the disease and test models (comma separated)
    #[arg(long, value_delimiter = ',')]
    covariates: Vec<String>,
    /// Verification-model covariates: a comma list, or `none` to exclude
    /// covariates from that model (default: same as --covariates)
    #[arg(long)]
    verification_covariates: Option<String>,
    /// Let verification depend on the unobserved disease status
    #[arg(
        long,
        action = clap::ArgAction::Set,
        default_value_t = true,
        num_args = 0..=1,
        default_missing_value = "true"
    )]
    mnar: bool,
    /// EM cycle budget (default 5000, or 50000 with covariates)
    #[arg(long = "t-max")]
    t_max: Option<usize>,
    /// Convergence threshold on the largest absolute coefficient change
    #[arg(long, default_value_t = 2e-4)]
    cutoff: f64,
    /// Bootstrap replicates for interval estimation; 0 for points only
    #[arg(long = "R", default_value_t = 0)]
    replicates: usize,
    /// Bootstrap interval flavour
    #[arg(long = "ci-type", value_enum, default_value_t = CiTypeArg::Bca)]
    ci_type: CiTypeArg,
    #[command(flatten)]
    seed: SeedArgs,
    /// Two-sided error rate of the confidence intervals
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
}

#[derive(Args)]
struct SimulateArgs {
    /// Generator configuration file (key = value lines)
    #[arg(long)]
    spec: PathBuf,
    /// Override the seed from the spec file
    #[arg(long)]
    seed: Option<u64>,
    /// Draw the seed from entropy instead
    #[arg(long, conflicts_with = "seed")]
    no_seed: bool,
    /// Where to write the generated cohort CSV
    #[arg(long)]
    output: Option<PathBuf>,
    /// Report format; `csv` streams the cohort itself
    #[arg(long, value_enum, default_value_t = Format::Text)]
    format: Format,
    /// Cap the worker thread pool
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(ValueEnum, Clone, Copy, PartialEq, Eq)]
enum MethodArg {
    Cca,
    Bg,
    Ebg,
    Mi,
    Em,
}

impl MethodArg {
    fn name(self) -> &'static str {
        match self {
            MethodArg::Cca => "cca",
            MethodArg::Bg => "bg",
            MethodArg::Ebg => "ebg",
            MethodArg::Mi => "mi",
            MethodArg::Em => "em",
        }
    }
}

#[derive(Args)]
struct CompareArgs {
    #[command(flatten)]
    io: IoArgs,
    /// Estimators to run, in column order
    #[arg(
        long,
        value_enum,
        value_delimiter = ',',
        default_value = "cca,bg,ebg,mi,em"
    )]
    methods: Vec<MethodArg>,
    /// Covariate columns passed to every covariate-capable method
    #[arg(long, value_delimiter = ',')]
    covariates: Vec<String>,
    /// Saturated disease model for ebg
    #[arg(long)]
    saturated: bool,
    /// Number of imputations for mi (default: percentage of missing labels)
    #[arg(long)]
    m: Option<usize>,
    /// Verification depends on disease status in the em fit
    #[arg(
        long,
        action = clap::ArgAction::Set,
        default_value_t = true,
        num_args = 0..=1,
        default_missing_value = "true"
    )]
    mnar: bool,
    /// EM cycle budget
    #[arg(long = "t-max")]
    t_max: Option<usize>,
    /// EM convergence threshold
    #[arg(long, default_value_t = 2e-4)]
    cutoff: f64,
    /// Bootstrap replicates for ebg/em intervals; 0 for points only
    #[arg(long = "R", default_value_t = 0)]
    replicates: usize,
    /// Bootstrap interval flavour
    #[arg(long = "ci-type", value_enum, default_value_t = CiTypeArg::Bca)]
    ci_type: CiTypeArg,
    #[command(flatten)]
    seed: SeedArgs,
    /// Two-sided error rate of the confidence intervals
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
}

enum CliError {
    Usage(String),
    Core(pvb_core::Error),
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) => f.write_str(m),
            CliError::Core(e) => write!(f, "{e}"),
        }
    }
}

impl From<pvb_core::Error> for CliError {
    fn from(e: pvb_core::Error) -> Self {
        CliError::Core(e)
    }
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Core(e) => match e.category() {
                ErrorCategory::Numerical => 4,
                ErrorCategory::Data | ErrorCategory::Io => 3,
            },
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Table(a) => run_table(a),
        Command::Cca(a) => run_simple(a, false),
        Command::Bg(a) => run_simple(a, true),
        Command::Ebg(a) => run_ebg(a),
        Command::Mi(a) => run_mi(a),
        Command::Em(a) => run_em(a),
        Command::Simulate(a) => run_simulate(a),
        Command::Compare(a) => run_compare(a),
    }
}

fn init_threads(threads: Option<usize>) -> Result<(), CliError> {
    let Some(n) = threads else { return Ok(()) };
    if n == 0 {
        return Err(CliError::Usage("--threads must be at least 1".to_string()));
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Usage(format!("thread pool: {e}")))
}

fn check_alpha(alpha: f64) -> Result<(), CliError> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(CliError::Usage(
            "--alpha must lie strictly between 0 and 1".to_string(),
        ))
    }
}

fn load_input(input: &Option<PathBuf>) -> Result<(Dataset, String), CliError> {
    match input {
        Some(p) => Ok((Dataset::load_csv(p)?, p.display().to_string())),
        None => Ok((
            Dataset::read_csv(BUNDLED_DATA.as_bytes())?,
            "bundled".to_string(),
        )),
    }
}

fn emit(io: &IoArgs, content: &str) -> Result<(), CliError> {
    match &io.output {
        Some(p) => fs::write(p, content).map_err(|e| CliError::Core(e.into())),
        None => {
            print!("{content}");
            Ok(())
        }
    }
}

fn to_json_string(v: &Value) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("report is serializable");
    s.push('\n');
    s
}

fn input_json(data: &Dataset, source: &str) -> Value {
    json!({
        "source": source,
        "records": data.n(),
        "verified": data.verified_count(),
        "missing_percentage": data.missing_percentage(),
    })
}

/// Reproducibility and convergence metadata; `null` marks a field the
/// command does not produce.
#[derive(serde::Serialize, Default, Clone)]
struct RunMeta {
    seed: Option<u64>,
    replicates: Option<usize>,
    failed_replicates: Option<usize>,
    imputations: Option<usize>,
    converged: Option<bool>,
    iterations: Option<usize>,
}

#[allow(clippy::too_many_arguments)]
fn emit_accuracy(
    io: &IoArgs,
    command: &'static str,
    data: &Dataset,
    source: &str,
    options: Value,
    method_line: &str,
    interval_line: &str,
    acc: &AccuracyResult,
    meta: &RunMeta,
    details: Option<(&'static str, Value)>,
) -> Result<(), CliError> {
    for w in &acc.warnings {
        eprintln!("warning: {w}");
    }
    let content = match io.format {
        Format::Text => format!(
            "Estimates of accuracy measures\n\
             Method: {method_line}\n\
             Intervals: {interval_line}\n\
             Data: {} records, {} verified ({:.2}% unverified)\n\n{}",
            data.n(),
            data.verified_count(),
            data.missing_percentage(),
            report::accuracy_table(acc)
        ),
        Format::Json => {
            let mut obj = json!({
                "schema_version": 1,
                "command": command,
                "input": input_json(data, source),
                "options": options,
                "result": serde_json::to_value(acc).expect("result serializes"),
                "run": serde_json::to_value(meta).expect("metadata serializes"),
            });
            if let Some((key, value)) = details {
                obj.as_object_mut()
                    .expect("report object")
                    .insert(key.to_string(), value);
            }
            to_json_string(&obj)
        }
        Format::Csv => report::accuracy_csv(acc),
    };
    emit(io, &content)
}

fn run_table(a: TableArgs) -> Result<(), CliError> {
    let (data, source) = load_input(&a.io.input)?;
    let t = data.cross_table();
    let content = match a.io.format {
        Format::Text => report::cross_table_text(&t),
        Format::Json => to_json_string(&json!({
            "schema_version": 1,
            "command": "table",
            "input": input_json(&data, &source),
            "table": serde_json::to_value(t).expect("table serializes"),
            "totals": {
                "n1": t.n1(),
                "n0": t.n0(),
                "verified": t.verified(),
                "unverified": t.unverified(),
                "total": t.total(),
            },
        })),
        Format::Csv => report::table_csv(&t),
    };
    emit(&a.io, &content)
}

fn run_simple(a: SimpleArgs, use_bg: bool) -> Result<(), CliError> {
    init_threads(a.io.threads)?;
    check_alpha(a.alpha)?;
    let (data, source) = load_input(&a.io.input)?;
    let table = data.cross_table();
    let (acc, command, method_line) = if use_bg {
        (
            bg(&table, a.alpha)?,
            "bg",
            "count-based Bayes correction",
        )
    } else {
        (
            cca(&table, a.alpha)?,
            "cca",
            "complete case analysis (no correction)",
        )
    };
    emit_accuracy(
        &a.io,
        command,
        &data,
        &source,
        json!({ "alpha": a.alpha }),
        method_line,
        &format!("wald, alpha = {}", a.alpha),
        &acc,
        &RunMeta::default(),
        None,
    )
}

struct BootOpts {
    replicates: usize,
    ci_type: CiTypeArg,
    alpha: f64,
}

fn ebg_core(
    data: &Dataset,
    covariates: &[String],
    saturated: bool,
    boot: &BootOpts,
    seed: Option<u64>,
) -> Result<(AccuracyResult, RunMeta), CliError> {
    let config = EbgConfig {
        covariates: covariates.to_vec(),
        saturated,
    };
    if boot.replicates == 0 {
        return Ok((ebg(data, &config, boot.alpha)?, RunMeta::default()));
    }
    let seed = seed.expect("seed resolved before a bootstrap run");
    let bc = BootConfig {
        replicates: boot.replicates,
        seed,
        ci_type: boot.ci_type.to_boot(),
        alpha: boot.alpha,
        ..BootConfig::default()
    };
    let out = bootstrap_accuracy(data, |d| ebg(d, &config, boot.alpha), &bc)?;
    let meta = RunMeta {
        seed: Some(seed),
        replicates: Some(boot.replicates),
        failed_replicates: Some(out.failed),
        ..RunMeta::default()
    };
    Ok((out.accuracy, meta))
}

fn mi_core(
    data: &Dataset,
    covariates: &[String],
    m: Option<usize>,
    seed: u64,
    alpha: f64,
) -> Result<(AccuracyResult, MiPooled<f64>, RunMeta), CliError> {
    let config = MiConfig {
        m,
        seed,
        covariates: covariates.to_vec(),
        alpha,
    };
    let (acc, pooled) = acc_mi(data, &config)?;
    let meta = RunMeta {
        seed: Some(seed),
        imputations: Some(pooled.m),
        ..RunMeta::default()
    };
    Ok((acc, pooled, meta))
}

#[allow(clippy::too_many_arguments)]
fn em_core(
    data: &Dataset,
    covariates: &[String],
    verification_covariates: Option<Vec<String>>,
    mnar: bool,
    t_max: Option<usize>,
    cutoff: f64,
    boot: &BootOpts,
    seed: Option<u64>,
) -> Result<(AccuracyResult, EmState<f64>, RunMeta), CliError> {
    let config = EmConfig {
        covariates: covariates.to_vec(),
        verification_covariates,
        mnar,
        verification_interaction: false,
        t_max,
        cutoff,
        boot: None,
    };
    let (point, state) = acc_em(data, &config)?;
    let mut meta = RunMeta {
        converged: Some(state.converged),
        iterations: Some(state.iterations),
        ..RunMeta::default()
    };
    if boot.replicates == 0 {
        return Ok((point, state, meta));
    }
    let seed = seed.expect("seed resolved before a bootstrap run");
    let bc = BootConfig {
        replicates: boot.replicates,
        seed,
        ci_type: boot.ci_type.to_boot(),
        alpha: boot.alpha,
        ..BootConfig::default()
    };
    let out = bootstrap_accuracy(data, |d| Ok(acc_em(d, &config)?.0), &bc)?;
    meta.seed = Some(seed);
    meta.replicates = Some(boot.replicates);
    meta.failed_replicates = Some(out.failed);
    Ok((out.accuracy, state, meta))
}

fn interval_line(boot: &BootOpts, meta: &RunMeta) -> String {
    match meta.replicates {
        Some(r) => format!(
            "{} bootstrap, R = {}, seed = {}",
            boot.ci_type.label(),
            r,
            meta.seed.expect("bootstrap metadata carries its seed")
        ),
        None => "none (pass --R for bootstrap intervals)".to_string(),
    }
}

fn run_ebg(a: EbgArgs) -> Result<(), CliError> {
    init_threads(a.io.threads)?;
    check_alpha(a.alpha)?;
    let (data, source) = load_input(&a.io.input)?;
    let boot = BootOpts {
        replicates: a.replicates,
        ci_type: a.ci_type,
        alpha: a.alpha,
    };
    let seed = if a.replicates > 0 {
        Some(a.seed.resolve()?)
    } else {
        a.seed.seed
    };
    let (acc, meta) = ebg_core(&data, &a.covariates, a.saturated, &boot, seed)?;
    let options = json!({
        "alpha": a.alpha,
        "covariates": a.covariates,
        "saturated": a.saturated,
        "ci_type": a.ci_type.label(),
        "replicates": a.replicates,
    });
    let method_line = if a.saturated {
        "regression-extended Bayes correction (saturated)"
    } else {
        "regression-extended Bayes correction"
    };
    emit_accuracy(
        &a.io,
        "ebg",
        &data,
        &source,
        options,
        method_line,
        &interval_line(&boot, &meta),
        &acc,
        &meta,
        None,
    )
}

fn run_mi(a: MiArgs) -> Result<(), CliError> {
    init_threads(a.io.threads)?;
    check_alpha(a.alpha)?;
    let (data, source) = load_input(&a.io.input)?;
    let seed = a.seed.resolve()?;
    let (acc, pooled, meta) = mi_core(&data, &a.covariates, a.m, seed, a.alpha)?;
    let options = json!({
        "alpha": a.alpha,
        "covariates": a.covariates,
        "m": a.m,
    });
    emit_accuracy(
        &a.io,
        "mi",
        &data,
        &source,
        options,
        "multiple imputation of missing disease labels",
        &format!("rubin pooling, m = {}, seed = {}", pooled.m, seed),
        &acc,
        &meta,
        Some((
            "pooling",
            serde_json::to_value(&pooled).expect("pooling serializes"),
        )),
    )
}

fn parse_verification_covariates(raw: Option<&str>) -> Option<Vec<String>> {
    let raw = raw?;
    let trimmed = raw.trim();
    if trimmed.is_empty() || trimmed == "none" {
        return Some(Vec::new());
    }
    Some(trimmed.split(',').map(|s| s.trim().to_string()).collect())
}

fn run_em(a: EmArgs) -> Result<(), CliError> {
    init_threads(a.io.threads)?;
    check_alpha(a.alpha)?;
    let (data, source) = load_input(&a.io.input)?;
    let boot = BootOpts {
        replicates: a.replicates,
        ci_type: a.ci_type,
        alpha: a.alpha,
    };
    let seed = if a.replicates > 0 {
        Some(a.seed.resolve()?)
    } else {
        a.seed.seed
    };
    let verification_covariates =
        parse_verification_covariates(a.verification_covariates.as_deref());
    let (acc, state, meta) = em_core(
        &data,
        &a.covariates,
        verification_covariates.clone(),
        a.mnar,
        a.t_max,
        a.cutoff,
        &boot,
        seed,
    )?;
    let options = json!({
        "alpha": a.alpha,
        "covariates": a.covariates,
        "verification_covariates": verification_covariates,
        "mnar": a.mnar,
        "t_max": a.t_max,
        "cutoff": a.cutoff,
        "ci_type": a.ci_type.label(),
        "replicates": a.replicates,
    });
    let fit = json!({
        "disease_model": state.alpha,
        "test_model": state.beta,
        "verification_model": state.gamma,
        "converged": state.converged,
        "iterations": state.iterations,
        "loglik": state.loglik_trace.last(),
    });
    let method_line = if a.mnar {
        "joint likelihood fit by EM (verification may depend on disease)"
    } else {
        "joint likelihood fit by EM (verification independent of disease)"
    };
    emit_accuracy(
        &a.io,
        "em",
        &data,
        &source,
        options,
        method_line,
        &interval_line(&boot, &meta),
        &acc,
        &meta,
        Some(("fit", fit)),
    )
}

/// Whether the spec file itself pins a seed; mirrors the parser's comment
/// and key handling.
fn spec_has_seed(text: &str) -> bool {
    text.lines().any(|raw| {
        let line = match raw.find('#') {
            Some(pos) => &raw[..pos],
            None => raw,
        };
        line.split_once('=')
            .is_some_and(|(key, _)| key.trim() == "seed")
    })
}

fn run_simulate(a: SimulateArgs) -> Result<(), CliError> {
    init_threads(a.threads)?;
    let text = fs::read_to_string(&a.spec).map_err(|e| CliError::Core(e.into()))?;
    let mut spec: SimSpec<f64> = parse_sim_spec(&text)?;
    spec.seed = match (a.seed, a.no_seed) {
        (Some(s), _) => s,
        (None, true) => rand::rng().random(),
        (None, false) if spec_has_seed(&text) => spec.seed,
        (None, false) => {
            return Err(CliError::Usage(
                "the spec file sets no seed; pass --seed, --no-seed, or add a seed line"
                    .to_string(),
            ))
        }
    };
    let (data, truth) = generate(&spec)?;
    match (&a.output, a.format) {
        (Some(path), _) => data.write_csv(path)?,
        (None, Format::Csv) => {
            let mut buf = Vec::new();
            data.write_csv_to(&mut buf)?;
            print!("{}", String::from_utf8(buf).expect("csv is utf8"));
            return Ok(());
        }
        (None, _) => {
            return Err(CliError::Usage(
                "simulate needs --output FILE for the cohort, or --format csv to stream it"
                    .to_string(),
            ))
        }
    }
    match a.format {
        Format::Text => {
            print!(
                "Simulated cohort: {} records, {} verified ({:.2}%)\n\
                 Mechanism: {} (seed {})\n\
                 Truth: marginal Se = {}, marginal Sp = {}, \
                 expected verified fraction = {}\n\
                 Cohort written to {}\n",
                data.n(),
                data.verified_count(),
                100.0 * data.verified_count() as f64 / data.n() as f64,
                spec.mechanism.label(),
                spec.seed,
                report::sig7(truth.marginal_se),
                report::sig7(truth.marginal_sp),
                report::sig7(truth.expected_verified_fraction),
                a.output.as_ref().expect("output checked above").display(),
            );
        }
        Format::Json => {
            let obj = json!({
                "schema_version": 1,
                "command": "simulate",
                "options": {
                    "spec": a.spec.display().to_string(),
                    "seed": spec.seed,
                },
                "mechanism": spec.mechanism.label(),
                "records": data.n(),
                "verified": data.verified_count(),
                "table": serde_json::to_value(data.cross_table())
                    .expect("table serializes"),
                "truth": serde_json::to_value(truth).expect("truth serializes"),
                "output": a.output.as_ref().map(|p| p.display().to_string()),
            });
            print!("{}", to_json_string(&obj));
        }
        Format::Csv => {}
    }
    Ok(())
}

fn run_compare(a: CompareArgs) -> Result<(), CliError> {
    init_threads(a.io.threads)?;
    check_alpha(a.alpha)?;
    let mut seen: Vec<MethodArg> = Vec::new();
    for m in &a.methods {
        if seen.contains(m) {
            return Err(CliError::Usage(format!(
                "method `{}` listed twice",
                m.name()
            )));
        }
        seen.push(*m);
    }
    let (data, source) = load_input(&a.io.input)?;
    let table = data.cross_table();
    let boot = BootOpts {
        replicates: a.replicates,
        ci_type: a.ci_type,
        alpha: a.alpha,
    };
    let stochastic = a.methods.contains(&MethodArg::Mi)
        || (a.replicates > 0
            && (a.methods.contains(&MethodArg::Ebg) || a.methods.contains(&MethodArg::Em)));
    let seed = if stochastic {
        Some(a.seed.resolve()?)
    } else {
        a.seed.seed
    };
    let verification_covariates: Option<Vec<String>> = None;

    let mut results: Vec<(String, AccuracyResult, RunMeta)> = Vec::new();
    for method in &a.methods {
        let (acc, meta) = match method {
            MethodArg::Cca => (cca(&table, a.alpha)?, RunMeta::default()),
            MethodArg::Bg => (bg(&table, a.alpha)?, RunMeta::default()),
            MethodArg::Ebg => ebg_core(&data, &a.covariates, a.saturated, &boot, seed)?,
            MethodArg::Mi => {
                let (acc, _, meta) = mi_core(
                    &data,
                    &a.covariates,
                    a.m,
                    seed.expect("mi implies a resolved seed"),
                    a.alpha,
                )?;
                (acc, meta)
            }
            MethodArg::Em => {
                let (acc, _, meta) = em_core(
                    &data,
                    &a.covariates,
                    verification_covariates.clone(),
                    a.mnar,
                    a.t_max,
                    a.cutoff,
                    &boot,
                    seed,
                )?;
                (acc, meta)
            }
        };
        for w in &acc.warnings {
            eprintln!("warning: {}: {w}", method.name());
        }
        results.push((method.name().to_string(), acc, meta));
    }

    let pairs: Vec<(String, AccuracyResult)> = results
        .iter()
        .map(|(n, acc, _)| (n.clone(), acc.clone()))
        .collect();
    let content = match a.io.format {
        Format::Text => format!(
            "Comparison of accuracy estimates\n\
             Data: {} records, {} verified ({:.2}% unverified)\n\n{}",
            data.n(),
            data.verified_count(),
            data.missing_percentage(),
            report::compare_table(&pairs, a.alpha)
        ),
        Format::Json => {
            let entries: Vec<Value> = results
                .iter()
                .map(|(name, acc, meta)| {
                    json!({
                        "method": name,
                        "result": serde_json::to_value(acc).expect("result serializes"),
                        "run": serde_json::to_value(meta).expect("metadata serializes"),
                    })
                })
                .collect();
            to_json_string(&json!({
                "schema_version": 1,
                "command": "compare",
                "input": input_json(&data, &source),
                "options": {
                    "alpha": a.alpha,
                    "methods": a.methods.iter().map(|m| m.name()).collect::<Vec<_>>(),
                    "covariates": a.covariates,
                    "saturated": a.saturated,
                    "m": a.m,
                    "mnar": a.mnar,
                    "t_max": a.t_max,
                    "cutoff": a.cutoff,
                    "ci_type": a.ci_type.label(),
                    "replicates": a.replicates,
                    "seed": seed,
                },
                "results": entries,
            }))
        }
        Format::Csv => report::compare_csv(&pairs),
    };
    emit(&a.io, &content)
}
