//! Command-line front end: SNR sweeps, erasure-channel queries and DoF values.
//!
//! [`run`] returns the text destined for stdout so that tests can drive the
//! CLI in-process; the binary only prints it and maps errors to exit codes.

use std::io::Read;
use std::path::{Path, PathBuf};

use bcfeed_core::channel::symmetric_pmf;
use bcfeed_core::ebc::{
    jsc_ebc_feasible, mu_solver_symmetric, sym_capacity_region_check, sym_rate_ebc, RegionMethod,
    MAX_ENUMERATED_USERS,
};
use bcfeed_core::gbc::{dof_sym, dof_sym_f64};
use bcfeed_core::montecarlo::DEFAULT_SEED;
use bcfeed_core::sweep::SnrAxis;
use bcfeed_core::{
    BetaGrid, BetaVector, EbcSchemeParams, ErasurePmf, McPlan, Scheme, SweepSpec, SymmetricDeltas,
};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

/// Environment variable that, when set, replaces `--seed`.
pub const SEED_ENV: &str = "BCFEED_SEED";

pub const EXIT_VALIDATION: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Validation(String),
    #[error("{0}")]
    Numerical(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => EXIT_VALIDATION,
            CliError::Numerical(_) => EXIT_NUMERICAL,
        }
    }
}

impl From<bcfeed_core::Error> for CliError {
    fn from(e: bcfeed_core::Error) -> Self {
        if e.is_numerical() {
            CliError::Numerical(e.to_string())
        } else {
            CliError::Validation(e.to_string())
        }
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

#[derive(Debug, Parser)]
#[command(
    name = "bcfeed",
    version,
    about = "Symmetric rates of broadcast channels with delayed feedback"
)]
pub struct Cli {
    /// Worker threads; results do not depend on this.
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Rate-versus-SNR sweep on the fading Gaussian channel.
    Sweep(Box<SweepArgs>),
    /// Erasure-channel queries; JSON input from a file or stdin.
    Ebc(EbcArgs),
    /// Optimal symmetric degrees of freedom per user.
    Dof(DofArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum AxisArg {
    PerAntenna,
    Total,
}

impl From<AxisArg> for SnrAxis {
    fn from(a: AxisArg) -> Self {
        match a {
            AxisArg::PerAntenna => SnrAxis::PerAntenna,
            AxisArg::Total => SnrAxis::Total,
        }
    }
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    /// Start from a figure preset; explicit flags override it.
    #[arg(long, value_parser = clap::builder::PossibleValuesParser::new(bcfeed_core::sweep::PRESETS))]
    pub preset: Option<String>,
    #[arg(long)]
    pub users: Option<usize>,
    /// Transmit antennas; defaults to the number of users.
    #[arg(long)]
    pub tx: Option<usize>,
    #[arg(long)]
    pub rx: Option<usize>,
    /// Single SNR point in dB.
    #[arg(long, conflicts_with_all = ["snr_start", "snr_stop", "snr_step"], allow_hyphen_values = true)]
    pub snr_db: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub snr_start: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub snr_stop: Option<f64>,
    #[arg(long)]
    pub snr_step: Option<f64>,
    /// Whether the SNR axis is `snr` or the total transmit SNR `n_t snr`.
    #[arg(long, value_enum)]
    pub snr_axis: Option<AxisArg>,
    #[arg(long)]
    pub samples: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Comma-separated scheme tags: TDMA, JSC, JSC_FIXED_BETA, MAT2, QMAT, UPPER.
    #[arg(long, value_delimiter = ',')]
    pub schemes: Option<Vec<String>>,
    /// Base-10 exponent of the smallest grid value.
    #[arg(long, allow_hyphen_values = true)]
    pub beta_min: Option<f64>,
    /// Base-10 exponent of the largest grid value.
    #[arg(long, allow_hyphen_values = true)]
    pub beta_max: Option<f64>,
    #[arg(long)]
    pub beta_points: Option<usize>,
    /// Compression-noise ratios of the fixed-beta JSC rows, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub fixed_betas: Option<Vec<f64>>,
    #[arg(long, value_enum, default_value = "csv")]
    pub format: Format,
    /// Write every optimizer result with its full grid table to this JSON file.
    #[arg(long)]
    pub dump_grid: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum EbcQuery {
    CapacitySym,
    RegionCheck,
    Feasible,
    MuSolve,
}

#[derive(Debug, Args)]
pub struct EbcArgs {
    #[arg(value_enum)]
    pub query: EbcQuery,
    /// JSON input file; `-` or absent reads stdin.
    #[arg(long)]
    pub input: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct DofArgs {
    #[arg(long)]
    pub users: usize,
    #[arg(long, value_enum, default_value = "text")]
    pub format: DofFormat,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum DofFormat {
    Text,
    Json,
}

/// Runs one invocation. `stdin` feeds `ebc` when no input file is given and
/// `seed_env` is the value of [`SEED_ENV`], if set.
pub fn run(cli: Cli, stdin: &mut dyn Read, seed_env: Option<&str>) -> CliResult<String> {
    let Cli { threads, command } = cli;
    let input = match &command {
        Command::Ebc(args) => Some(read_input(args.input.as_deref(), stdin)?),
        _ => None,
    };
    let go = || dispatch(&command, input.as_deref(), seed_env);
    match threads {
        Some(0) => Err(CliError::Validation("--threads must be at least 1".into())),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| CliError::Validation(format!("thread pool: {e}")))?
            .install(go),
        None => go(),
    }
}

fn dispatch(command: &Command, input: Option<&str>, seed_env: Option<&str>) -> CliResult<String> {
    match command {
        Command::Sweep(args) => sweep(args, seed_env),
        Command::Ebc(args) => ebc(args.query, input.unwrap_or_default()),
        Command::Dof(args) => dof(args),
    }
}

pub fn build_spec(args: &SweepArgs, seed_env: Option<&str>) -> CliResult<SweepSpec> {
    let mut spec = match &args.preset {
        Some(name) => SweepSpec::preset(name)?,
        None => SweepSpec::miso(2, vec![Scheme::Tdma, Scheme::Jsc, Scheme::Upper]),
    };
    if let Some(k) = args.users {
        spec.users = k;
        spec.tx_antennas = k;
    }
    if let Some(t) = args.tx {
        spec.tx_antennas = t;
    }
    if let Some(r) = args.rx {
        spec.rx_antennas = r;
    }
    if let Some(db) = args.snr_db {
        spec.snr_db_start = db;
        spec.snr_db_stop = db;
        spec.snr_db_step = 1.0;
    }
    if let Some(x) = args.snr_start {
        spec.snr_db_start = x;
    }
    if let Some(x) = args.snr_stop {
        spec.snr_db_stop = x;
    }
    if let Some(x) = args.snr_step {
        spec.snr_db_step = x;
    }
    if let Some(a) = args.snr_axis {
        spec.snr_axis = a.into();
    }
    let seed = match seed_env {
        Some(v) => v.trim().parse().map_err(|_| {
            CliError::Validation(format!("{SEED_ENV}={v:?} is not an unsigned integer"))
        })?,
        None => args.seed.unwrap_or(DEFAULT_SEED),
    };
    let samples = args.samples.unwrap_or(spec.plan.samples);
    spec.plan = McPlan::new(samples, seed)?.with_chunk(spec.plan.chunk)?;
    if let Some(tags) = &args.schemes {
        spec.schemes = tags
            .iter()
            .map(|t| t.parse::<Scheme>())
            .collect::<Result<_, _>>()?;
    }
    spec.grid = BetaGrid {
        log_min: args.beta_min.unwrap_or(spec.grid.log_min),
        log_max: args.beta_max.unwrap_or(spec.grid.log_max),
        points_per_dim: args.beta_points.unwrap_or(spec.grid.points_per_dim),
    };
    if let Some(b) = &args.fixed_betas {
        spec.fixed_betas = Some(BetaVector::new(b.clone())?);
    }
    spec.validate()?;
    Ok(spec)
}

fn sweep(args: &SweepArgs, seed_env: Option<&str>) -> CliResult<String> {
    let spec = build_spec(args, seed_env)?;
    let output = match &args.dump_grid {
        Some(path) => {
            let (output, dumps) = spec.run_with_grid_dump()?;
            let json = serde_json::to_string_pretty(&dumps).expect("optimizer results serialize");
            std::fs::write(path, json + "\n").map_err(|e| {
                CliError::Validation(format!("cannot write {}: {e}", path.display()))
            })?;
            output
        }
        None => spec.run()?,
    };
    match args.format {
        Format::Csv => Ok(output.to_csv()?),
        Format::Json => Ok(output.to_json()),
    }
}

fn read_input(path: Option<&Path>, stdin: &mut dyn Read) -> CliResult<String> {
    let mut text = String::new();
    match path {
        Some(p) if p != Path::new("-") => {
            text = std::fs::read_to_string(p)
                .map_err(|e| CliError::Validation(format!("cannot read {}: {e}", p.display())))?;
        }
        _ => {
            stdin
                .read_to_string(&mut text)
                .map_err(|e| CliError::Validation(format!("cannot read stdin: {e}")))?;
        }
    }
    Ok(text)
}

/// Parses `text`, reporting the path of the offending field on failure.
fn parse<T: for<'de> Deserialize<'de>>(text: &str) -> CliResult<T> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        CliError::Validation(format!("invalid input at `{path}`: {}", e.inner()))
    })
}

fn field_error(field: &str, e: bcfeed_core::Error) -> CliError {
    match CliError::from(e) {
        CliError::Validation(m) => CliError::Validation(format!("invalid input at `{field}`: {m}")),
        other => other,
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct DeltasInput {
    #[serde(rename = "K")]
    users: usize,
    deltas: Vec<f64>,
    #[serde(default = "one_bit")]
    alphabet_bits: f64,
}

fn one_bit() -> f64 {
    1.0
}

impl DeltasInput {
    fn deltas(&self) -> CliResult<SymmetricDeltas> {
        if self.deltas.len() != self.users {
            return Err(CliError::Validation(format!(
                "invalid input at `deltas`: K = {} needs {} entries, got {}",
                self.users,
                self.users,
                self.deltas.len()
            )));
        }
        SymmetricDeltas::new(self.deltas.clone()).map_err(|e| field_error("deltas", e))
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RegionInput {
    #[serde(rename = "K")]
    users: usize,
    deltas: Vec<f64>,
    #[serde(default = "one_bit")]
    alphabet_bits: f64,
    rates: Vec<f64>,
    #[serde(default)]
    method: Option<RegionMethod>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct FeasibleInput {
    rates: Vec<f64>,
    params: EbcSchemeParams,
    #[serde(default)]
    pmf: Option<ErasurePmf>,
    /// Symmetric alternative to `pmf`: `{"K": .., "deltas": [..]}`.
    #[serde(default)]
    symmetric: Option<SymmetricDeltas>,
}

#[derive(Serialize)]
struct CapacityOutput {
    #[serde(rename = "K")]
    users: usize,
    alphabet_bits: f64,
    rate: f64,
}

fn ebc(query: EbcQuery, text: &str) -> CliResult<String> {
    let json = match query {
        EbcQuery::CapacitySym => {
            let input: DeltasInput = parse(text)?;
            let deltas = input.deltas()?;
            let rate = sym_rate_ebc(&deltas, input.alphabet_bits)
                .map_err(|e| field_error("alphabet_bits", e))?;
            to_json(&CapacityOutput {
                users: input.users,
                alphabet_bits: input.alphabet_bits,
                rate,
            })
        }
        EbcQuery::MuSolve => {
            let input: DeltasInput = parse(text)?;
            to_json(&mu_solver_symmetric(&input.deltas()?)?)
        }
        EbcQuery::RegionCheck => {
            let input: RegionInput = parse(text)?;
            let deltas = DeltasInput {
                users: input.users,
                deltas: input.deltas,
                alphabet_bits: input.alphabet_bits,
            }
            .deltas()?;
            if input.rates.len() != input.users {
                return Err(CliError::Validation(format!(
                    "invalid input at `rates`: K = {} needs {} entries, got {}",
                    input.users,
                    input.users,
                    input.rates.len()
                )));
            }
            let method = input
                .method
                .unwrap_or(if input.users <= MAX_ENUMERATED_USERS {
                    RegionMethod::Enumerate
                } else {
                    RegionMethod::Sorted
                });
            let check =
                sym_capacity_region_check(&input.rates, &deltas, input.alphabet_bits, method)
                    .map_err(|e| field_error("rates", e))?;
            to_json(&check)
        }
        EbcQuery::Feasible => {
            let input: FeasibleInput = parse(text)?;
            let pmf = match (input.pmf, input.symmetric) {
                (Some(p), None) => p,
                (None, Some(d)) => symmetric_pmf(&d).map_err(|e| field_error("symmetric", e))?,
                _ => {
                    return Err(CliError::Validation(
                        "invalid input at `.`: give exactly one of `pmf` and `symmetric`".into(),
                    ))
                }
            };
            let report = jsc_ebc_feasible(&input.rates, &input.params, &pmf)
                .map_err(|e| field_error("rates", e))?;
            to_json(&report)
        }
    };
    Ok(json)
}

fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("results serialize");
    s.push('\n');
    s
}

#[derive(Serialize)]
struct DofOutput {
    #[serde(rename = "K")]
    users: usize,
    fraction: String,
    value: f64,
}

fn dof(args: &DofArgs) -> CliResult<String> {
    let exact = dof_sym(args.users)?;
    let value = dof_sym_f64(args.users)?;
    Ok(match args.format {
        DofFormat::Text => format!("{exact} = {value}\n"),
        DofFormat::Json => to_json(&DofOutput {
            users: args.users,
            fraction: exact.to_string(),
            value,
        }),
    })
}
