//! The `etherscope` command line.
//!
//! Every flag can also be set in a `key=value` config file passed with
//! `--config` (keys are the long flag names). Paths and `workers` can
//! additionally come from `ETHERSCOPE_<KEY>` environment variables.
//! Precedence: command line > environment > config file > built-in default.
//!
//! Exit codes: 0 success, 1 data defects found, 2 usage error,
//! 3 runtime failure.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fmt::Display;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};

use crate::chain::{parse_address, Wei};
use crate::derive::{derive_all, write_datasets, DeriveError, DATASET_FILES, DEFECTS_FILE};
use crate::flow::{build_flow_graph, export_flow_graph, flow_summary, ExportFormat, FlowError};
use crate::gas::{
    detect_periodicity, detrend_exponential, export_correlogram, export_moving_average, export_series, log_trend_slope,
    moving_average, per_block_gas_stats, GasError, GasField, DEFAULT_MICRO_WINDOW,
};
use crate::ingest::{read_raw, validate_chain, IngestError, RawBundle};
use crate::ponzi::{
    evaluate, extract_all_features, predict, read_features_csv, read_labels_csv, train, write_features_csv, Hyperparams,
    Label, Model, PonziError,
};
use crate::synth::{generate_to_dir, GenConfig, GenError};

pub const ENV_PREFIX: &str = "ETHERSCOPE_";
/// Keys that may be taken from the environment.
pub const ENV_KEYS: [&str; 7] = ["input", "out", "model", "features", "labels", "config", "workers"];

pub const EXIT_OK: i32 = 0;
pub const EXIT_DEFECTS: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_RUNTIME: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "etherscope", version, about = "Ethereum corpus extraction and analytics")]
pub struct Cli {
    #[command(flatten)]
    pub common: Common,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Common {
    /// key=value file with defaults for any flag
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads; never changes output bytes
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    /// First block to include
    #[arg(long, global = true)]
    pub from: Option<u64>,
    /// Last block to include
    #[arg(long, global = true)]
    pub to: Option<u64>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic corpus with ground truth
    Synth(SynthArgs),
    /// Check chain linkage and block/receipt/trace consistency
    Validate(InputArgs),
    /// Write the six datasets as CSV
    Derive(DeriveArgs),
    /// Gas-price series, moving average and periodicity
    Gas(GasArgs),
    /// Export one contract's Ether flow graph
    Flow(FlowArgs),
    /// Feature vectors for every contract
    Features(FeaturesArgs),
    /// Train the Ponzi classifier
    Train(TrainArgs),
    /// Score contracts with a trained model
    Classify(ClassifyArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub blocks: Option<u64>,
    #[arg(long)]
    pub wallets: Option<u32>,
    #[arg(long)]
    pub miners: Option<u32>,
    #[arg(long)]
    pub ponzi: Option<u32>,
    #[arg(long)]
    pub lottery: Option<u32>,
    #[arg(long)]
    pub erc20: Option<u32>,
    #[arg(long)]
    pub erc721: Option<u32>,
    #[arg(long = "gas-base")]
    pub gas_base: Option<Wei>,
    #[arg(long = "gas-decay")]
    pub gas_decay: Option<f64>,
    #[arg(long = "gas-period")]
    pub gas_period: Option<u32>,
    #[arg(long = "gas-amplitude")]
    pub gas_amplitude: Option<f64>,
    #[arg(long = "gas-noise")]
    pub gas_noise: Option<f64>,
    #[arg(long = "block-reward")]
    pub block_reward: Option<Wei>,
    #[arg(long = "start-block")]
    pub start_block: Option<u64>,
}

#[derive(Debug, Args)]
pub struct InputArgs {
    #[arg(long)]
    pub input: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct DeriveArgs {
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct GasArgs {
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Output directory for gas_series.csv, gas_moving_average.csv, gas_correlogram.csv
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// mean | median | min | max
    #[arg(long)]
    pub field: Option<GasField>,
    /// Blocks in the periodicity window, starting at --from
    #[arg(long)]
    pub window: Option<u64>,
    /// Points per moving-average window
    #[arg(long = "ma-window")]
    pub ma_window: Option<u32>,
    #[arg(long = "min-lag")]
    pub min_lag: Option<u32>,
    #[arg(long = "max-lag")]
    pub max_lag: Option<u32>,
    /// exp | none
    #[arg(long)]
    pub detrend: Option<Detrend>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Detrend {
    Exp,
    None,
}

impl FromStr for Detrend {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "exp" => Ok(Detrend::Exp),
            "none" => Ok(Detrend::None),
            other => Err(format!("unknown detrend mode {other:?} (expected exp|none)")),
        }
    }
}

#[derive(Debug, Args)]
pub struct FlowArgs {
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long)]
    pub contract: Option<String>,
    /// csv | svg
    #[arg(long)]
    pub format: Option<ExportFormat>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct FeaturesArgs {
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub features: Option<PathBuf>,
    #[arg(long)]
    pub labels: Option<PathBuf>,
    /// Model output path
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long = "learning-rate")]
    pub learning_rate: Option<f64>,
    #[arg(long = "l2-lambda")]
    pub l2_lambda: Option<f64>,
    #[arg(long)]
    pub epochs: Option<u32>,
}

#[derive(Debug, Args)]
pub struct ClassifyArgs {
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long)]
    pub features: Option<PathBuf>,
    /// Optional labels; when given, precision/recall/f1 are printed
    #[arg(long)]
    pub labels: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Defects(String),
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Defects(_) => EXIT_DEFECTS,
            CliError::Runtime(_) => EXIT_RUNTIME,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Usage(m) | CliError::Defects(m) | CliError::Runtime(m) => m,
        }
    }
}

fn runtime(e: impl Display) -> CliError {
    CliError::Runtime(e.to_string())
}

fn io_err(path: &Path, e: std::io::Error) -> CliError {
    CliError::Runtime(format!("{}: {e}", path.display()))
}

/// Resolves a setting from command line, environment and config file.
pub struct Settings<'a> {
    file: BTreeMap<String, String>,
    env: &'a dyn Fn(&str) -> Option<String>,
}

fn normalize(key: &str) -> String {
    key.trim().replace('_', "-")
}

pub fn parse_config_file(text: &str) -> Result<BTreeMap<String, String>, String> {
    let mut out = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| format!("line {}: expected key=value", i + 1))?;
        out.insert(normalize(k), v.trim().to_string());
    }
    Ok(out)
}

impl<'a> Settings<'a> {
    pub fn new(config: Option<&Path>, env: &'a dyn Fn(&str) -> Option<String>) -> Result<Settings<'a>, CliError> {
        let env_config = env(&format!("{ENV_PREFIX}CONFIG")).map(PathBuf::from);
        let file = match config.map(Path::to_path_buf).or(env_config) {
            Some(path) => {
                let text = std::fs::read_to_string(&path)
                    .map_err(|e| CliError::Usage(format!("config {}: {e}", path.display())))?;
                parse_config_file(&text).map_err(|e| CliError::Usage(format!("config {}: {e}", path.display())))?
            }
            None => BTreeMap::new(),
        };
        Ok(Settings { file, env })
    }

    pub fn opt<T: FromStr>(&self, cli: Option<T>, key: &str) -> Result<Option<T>, CliError>
    where
        T::Err: Display,
    {
        if cli.is_some() {
            return Ok(cli);
        }
        let parse = |source: &str, v: &str| {
            v.parse::<T>().map(Some).map_err(|e| CliError::Usage(format!("{source} {key}={v:?}: {e}")))
        };
        if ENV_KEYS.contains(&key) {
            let var = format!("{ENV_PREFIX}{}", key.to_ascii_uppercase().replace('-', "_"));
            if let Some(v) = (self.env)(&var) {
                return parse(&var, &v);
            }
        }
        match self.file.get(key) {
            Some(v) => parse("config", v),
            None => Ok(None),
        }
    }

    pub fn or<T: FromStr>(&self, cli: Option<T>, key: &str, default: T) -> Result<T, CliError>
    where
        T::Err: Display,
    {
        Ok(self.opt(cli, key)?.unwrap_or(default))
    }

    pub fn req<T: FromStr>(&self, cli: Option<T>, key: &str) -> Result<T, CliError>
    where
        T::Err: Display,
    {
        self.opt(cli, key)?.ok_or_else(|| CliError::Usage(format!("missing required --{key}")))
    }
}

struct Ctx<'a, 'o> {
    settings: Settings<'a>,
    seed: Option<u64>,
    workers: usize,
    from: Option<u64>,
    to: Option<u64>,
    out: &'o mut dyn Write,
    err: &'o mut dyn Write,
}

impl Ctx<'_, '_> {
    fn load(&self, input: &Path) -> Result<Vec<RawBundle>, CliError> {
        let bundles = read_raw(input).map_err(|e| match e {
            IngestError::Parse { .. } | IngestError::Join(_) => CliError::Defects(e.to_string()),
            other => runtime(other),
        })?;
        let from = self.from.unwrap_or(0);
        let to = self.to.unwrap_or(u64::MAX);
        Ok(bundles.into_iter().filter(|b| (from..=to).contains(&b.block.number)).collect())
    }

    fn say(&mut self, text: impl Display) -> Result<(), CliError> {
        writeln!(self.out, "{text}").map_err(runtime)
    }

    fn note(&mut self, text: impl Display) {
        let _ = writeln!(self.err, "{text}");
    }
}

/// Runs the command line against the process environment and standard
/// streams.
pub fn run() -> i32 {
    let stdout = std::io::stdout();
    let stderr = std::io::stderr();
    run_with(std::env::args_os(), &|k| std::env::var(k).ok(), &mut stdout.lock(), &mut stderr.lock())
}

pub fn run_with<I, T>(args: I, env: &dyn Fn(&str) -> Option<String>, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let text = e.render().to_string();
            if e.use_stderr() {
                let _ = write!(err, "{text}");
            } else {
                let _ = write!(out, "{text}");
            }
            return code;
        }
    };
    match dispatch(cli, env, out, err) {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {}", e.message());
            e.exit_code()
        }
    }
}

fn dispatch(cli: Cli, env: &dyn Fn(&str) -> Option<String>, out: &mut dyn Write, err: &mut dyn Write) -> Result<i32, CliError> {
    let settings = Settings::new(cli.common.config.as_deref(), env)?;
    let default_workers = std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1);
    let workers = settings.or(cli.common.workers, "workers", default_workers)?;
    if workers == 0 {
        return Err(CliError::Usage("--workers must be at least 1".into()));
    }
    let seed = settings.opt(cli.common.seed, "seed")?;
    let from = settings.opt(cli.common.from, "from")?;
    let to = settings.opt(cli.common.to, "to")?;
    if let (Some(f), Some(t)) = (from, to) {
        if f > t {
            return Err(CliError::Usage(format!("--from {f} is after --to {t}")));
        }
    }
    let mut ctx = Ctx { settings, seed, workers, from, to, out, err };
    match cli.command {
        Command::Synth(a) => cmd_synth(&mut ctx, a),
        Command::Validate(a) => cmd_validate(&mut ctx, a),
        Command::Derive(a) => cmd_derive(&mut ctx, a),
        Command::Gas(a) => cmd_gas(&mut ctx, a),
        Command::Flow(a) => cmd_flow(&mut ctx, a),
        Command::Features(a) => cmd_features(&mut ctx, a),
        Command::Train(a) => cmd_train(&mut ctx, a),
        Command::Classify(a) => cmd_classify(&mut ctx, a),
    }
}

fn cmd_synth(ctx: &mut Ctx, a: SynthArgs) -> Result<i32, CliError> {
    let s = &ctx.settings;
    let out: PathBuf = s.req(a.out, "out")?;
    let d = GenConfig::default();
    let mut cfg = GenConfig {
        seed: ctx.seed.unwrap_or(d.seed),
        n_blocks: s.or(a.blocks, "blocks", d.n_blocks)?,
        wallets: s.or(a.wallets, "wallets", d.wallets)?,
        miners: s.or(a.miners, "miners", d.miners)?,
        block_reward: s.or(a.block_reward, "block-reward", d.block_reward)?,
        start_block: s.or(a.start_block, "start-block", d.start_block)?,
        ..d
    };
    cfg.archetypes.ponzi = s.or(a.ponzi, "ponzi", cfg.archetypes.ponzi)?;
    cfg.archetypes.lottery = s.or(a.lottery, "lottery", cfg.archetypes.lottery)?;
    cfg.archetypes.erc20_token = s.or(a.erc20, "erc20", cfg.archetypes.erc20_token)?;
    cfg.archetypes.erc721_token = s.or(a.erc721, "erc721", cfg.archetypes.erc721_token)?;
    cfg.gas.base = s.or(a.gas_base, "gas-base", cfg.gas.base)?;
    cfg.gas.decay_per_block = s.or(a.gas_decay, "gas-decay", cfg.gas.decay_per_block)?;
    cfg.gas.period = s.or(a.gas_period, "gas-period", cfg.gas.period)?;
    cfg.gas.amplitude = s.or(a.gas_amplitude, "gas-amplitude", cfg.gas.amplitude)?;
    cfg.gas.noise = s.or(a.gas_noise, "gas-noise", cfg.gas.noise)?;
    cfg.validate().map_err(|e| CliError::Usage(e.to_string()))?;

    let corpus = generate_to_dir(&cfg, &out).map_err(|e| match e {
        GenError::InvalidConfig(m) => CliError::Usage(m),
        other => runtime(other),
    })?;
    let gt = &corpus.ground_truth;
    ctx.say(format!("blocks\t{}", corpus.bundles.len()))?;
    ctx.say(format!("transactions\t{}", gt.tx_count))?;
    ctx.say(format!("contracts\t{}", gt.contracts.len()))?;
    ctx.say(format!("labels\t{}", gt.labels.len()))?;
    ctx.note(format!("corpus written to {}", out.display()));
    Ok(EXIT_OK)
}

fn cmd_validate(ctx: &mut Ctx, a: InputArgs) -> Result<i32, CliError> {
    let input: PathBuf = ctx.settings.req(a.input, "input")?;
    let bundles = ctx.load(&input)?;
    let report = validate_chain(&bundles);
    for d in &report.defects {
        ctx.say(d)?;
    }
    if report.ok {
        ctx.note(format!("{} blocks, no defects", bundles.len()));
        Ok(EXIT_OK)
    } else {
        ctx.note(format!("{} blocks, {} defects", bundles.len(), report.defects.len()));
        Ok(EXIT_DEFECTS)
    }
}

fn derive_error(e: DeriveError) -> CliError {
    match e {
        DeriveError::DuplicateContractAddress { .. } => CliError::Defects(e.to_string()),
        other => runtime(other),
    }
}

fn cmd_derive(ctx: &mut Ctx, a: DeriveArgs) -> Result<i32, CliError> {
    let input: PathBuf = ctx.settings.req(a.input, "input")?;
    let out: PathBuf = ctx.settings.req(a.out, "out")?;
    let bundles = ctx.load(&input)?;
    let ds = derive_all(&bundles, ctx.workers).map_err(derive_error)?;
    let summary = write_datasets(&ds, &out).map_err(derive_error)?;
    ctx.say(format!("{:<28}rows", "dataset"))?;
    for (f, n) in DATASET_FILES.iter().zip(summary.rows) {
        ctx.say(format!("{:<28}{n}", f.name))?;
    }
    ctx.say(format!("{:<28}{}", DEFECTS_FILE, summary.defects))?;
    Ok(EXIT_OK)
}

fn gas_error(e: GasError) -> CliError {
    match e {
        GasError::InvalidWindow | GasError::InvalidLagRange { .. } => CliError::Usage(e.to_string()),
        other => runtime(other),
    }
}

fn cmd_gas(ctx: &mut Ctx, a: GasArgs) -> Result<i32, CliError> {
    let s = &ctx.settings;
    let input: PathBuf = s.req(a.input, "input")?;
    let out: PathBuf = s.req(a.out, "out")?;
    let field = s.or(a.field, "field", GasField::Mean)?;
    let window = s.or(a.window, "window", DEFAULT_MICRO_WINDOW)?;
    let ma_window = s.or(a.ma_window, "ma-window", 100)?;
    let min_lag = s.or(a.min_lag, "min-lag", 12)?;
    let max_lag = s.or(a.max_lag, "max-lag", 400)?;
    let detrend = s.or(a.detrend, "detrend", Detrend::Exp)?;
    if window == 0 {
        return Err(CliError::Usage("--window must be at least 1".into()));
    }
    if min_lag == 0 || min_lag > max_lag {
        return Err(CliError::Usage(format!("invalid lag range {min_lag}..={max_lag}")));
    }

    let bundles = ctx.load(&input)?;
    let series = per_block_gas_stats(&bundles);
    let ma = moving_average(&series, ma_window, field).map_err(gas_error)?;
    let start = series.points.first().map_or(0, |p| p.block_number);
    let micro = series.slice(start, start.saturating_add(window - 1));
    let values = micro.values(field);
    let values = match detrend {
        Detrend::Exp => detrend_exponential(&values),
        Detrend::None => values,
    };
    let result = detect_periodicity(&values, min_lag, max_lag).map_err(gas_error)?;

    std::fs::create_dir_all(&out).map_err(|e| io_err(&out, e))?;
    export_series(&series, out.join("gas_series.csv")).map_err(gas_error)?;
    export_moving_average(&ma, out.join("gas_moving_average.csv")).map_err(gas_error)?;
    export_correlogram(&result.correlogram, out.join("gas_correlogram.csv")).map_err(gas_error)?;

    ctx.say(format!("best_lag\t{}", result.best_lag))?;
    ctx.say(format!("autocorrelation\t{:.6}", result.autocorrelation))?;
    match log_trend_slope(&ma) {
        Some(slope) => ctx.say(format!("trend_log_slope_per_block\t{slope:.6e}"))?,
        None => ctx.note("moving average too short for a trend fit"),
    }
    Ok(EXIT_OK)
}

fn cmd_flow(ctx: &mut Ctx, a: FlowArgs) -> Result<i32, CliError> {
    let s = &ctx.settings;
    let input: PathBuf = s.req(a.input, "input")?;
    let out: PathBuf = s.req(a.out, "out")?;
    let contract: String = s.req(a.contract, "contract")?;
    let contract = parse_address(&contract).map_err(|e| CliError::Usage(format!("--contract: {e}")))?;
    let default_format = if out.extension().is_some_and(|e| e == "svg") { ExportFormat::Svg } else { ExportFormat::Csv };
    let format = s.or(a.format, "format", default_format)?;

    let bundles = ctx.load(&input)?;
    let fg = build_flow_graph(contract, &bundles).map_err(|e| match e {
        FlowError::UnknownContract(_) => CliError::Usage(e.to_string()),
        other => runtime(other),
    })?;
    export_flow_graph(&fg, &out, format).map_err(runtime)?;
    let sum = flow_summary(&fg);
    ctx.say(format!("investments\t{}", sum.n_investment))?;
    ctx.say(format!("payments\t{}", sum.n_payment))?;
    ctx.say(format!("total_in\t{}", sum.total_in))?;
    ctx.say(format!("total_out\t{}", sum.total_out))?;
    ctx.say(format!("participants\t{}", sum.participant_count))?;
    ctx.say(format!("lifetime_blocks\t{}", sum.lifetime_blocks))?;
    Ok(EXIT_OK)
}

fn ponzi_error(e: PonziError) -> CliError {
    match e {
        PonziError::Derive(d) => derive_error(d),
        other => runtime(other),
    }
}

fn cmd_features(ctx: &mut Ctx, a: FeaturesArgs) -> Result<i32, CliError> {
    let input: PathBuf = ctx.settings.req(a.input, "input")?;
    let out: PathBuf = ctx.settings.req(a.out, "out")?;
    let bundles = ctx.load(&input)?;
    let rows = extract_all_features(&bundles, ctx.workers).map_err(ponzi_error)?;
    write_features_csv(&rows, &out).map_err(ponzi_error)?;
    ctx.say(format!("contracts\t{}", rows.len()))?;
    Ok(EXIT_OK)
}

/// Feature rows matched to labels, in label-file order.
fn labeled_matrix(features: &Path, labels: &Path) -> Result<(Vec<String>, Vec<Vec<f64>>, Vec<Label>), CliError> {
    let table = read_features_csv(features).map_err(ponzi_error)?;
    let labels = read_labels_csv(labels).map_err(ponzi_error)?;
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for l in &labels {
        let x = table
            .get(&l.contract)
            .ok_or_else(|| CliError::Runtime(format!("labeled contract {} has no feature row", l.contract)))?;
        xs.push(x.to_vec());
        ys.push(l.label);
    }
    Ok((table.names, xs, ys))
}

fn cmd_train(ctx: &mut Ctx, a: TrainArgs) -> Result<i32, CliError> {
    let s = &ctx.settings;
    let features: PathBuf = s.req(a.features, "features")?;
    let labels: PathBuf = s.req(a.labels, "labels")?;
    let out: PathBuf = s.req(a.out, "out")?;
    let d = Hyperparams::default();
    let hp = Hyperparams {
        learning_rate: s.or(a.learning_rate, "learning-rate", d.learning_rate)?,
        l2_lambda: s.or(a.l2_lambda, "l2-lambda", d.l2_lambda)?,
        epochs: s.or(a.epochs, "epochs", d.epochs)?,
        seed: ctx.seed.unwrap_or(d.seed),
    };
    if !(hp.learning_rate > 0.0) || !(hp.l2_lambda >= 0.0) {
        return Err(CliError::Usage("learning rate must be > 0 and l2 lambda >= 0".into()));
    }
    let (names, xs, ys) = labeled_matrix(&features, &labels)?;
    let trained = train(&xs, &ys, hp, names).map_err(ponzi_error)?;
    trained.model.save(&out).map_err(ponzi_error)?;
    let last = trained.loss_history.last().copied().unwrap_or(f64::NAN);
    ctx.say(format!("examples\t{}", xs.len()))?;
    ctx.say(format!("final_loss\t{last:.6}"))?;
    Ok(EXIT_OK)
}

fn cmd_classify(ctx: &mut Ctx, a: ClassifyArgs) -> Result<i32, CliError> {
    let s = &ctx.settings;
    let model: PathBuf = s.req(a.model, "model")?;
    let features: PathBuf = s.req(a.features, "features")?;
    let out: PathBuf = s.req(a.out, "out")?;
    let labels: Option<PathBuf> = s.opt(a.labels, "labels")?;

    let model = Model::load(&model).map_err(ponzi_error)?;
    let table = read_features_csv(&features).map_err(ponzi_error)?;
    let mut text = String::from("contract_address,probability,label\n");
    for (addr, x) in &table.rows {
        let p = predict(&model, x).map_err(ponzi_error)?;
        text.push_str(&format!("{addr},{},{}\n", p.probability, p.label));
    }
    std::fs::write(&out, text).map_err(|e| io_err(&out, e))?;
    ctx.say(format!("scored\t{}", table.rows.len()))?;

    if let Some(labels) = labels {
        let (_, xs, ys) = labeled_matrix(&features, &labels)?;
        let e = evaluate(&model, &xs, &ys).map_err(ponzi_error)?;
        ctx.say(format!("precision\t{:.6}", e.precision))?;
        ctx.say(format!("recall\t{:.6}", e.recall))?;
        ctx.say(format!("f1\t{:.6}", e.f1))?;
        let c = e.confusion;
        ctx.say(format!("confusion\ttp={} fp={} tn={} fn={}", c.tp, c.fp, c.tn, c.fn_))?;
    }
    Ok(EXIT_OK)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run_args(args: &[&str], env: &[(&str, &str)]) -> (i32, String, String) {
        let env: BTreeMap<String, String> = env.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect();
        let lookup = move |k: &str| env.get(k).cloned();
        let mut out = Vec::new();
        let mut err = Vec::new();
        let code = run_with(std::iter::once("etherscope").chain(args.iter().copied()), &lookup, &mut out, &mut err);
        (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
    }

    #[test]
    fn usage_errors_exit_2() {
        assert_eq!(run_args(&["bogus"], &[]).0, EXIT_USAGE);
        let (code, _, err) = run_args(&["validate"], &[]);
        assert_eq!(code, EXIT_USAGE);
        assert!(err.contains("--input"));
        assert_eq!(run_args(&["validate", "--input", "x", "--from", "5", "--to", "2"], &[]).0, EXIT_USAGE);
        assert_eq!(run_args(&["derive", "--input", "x", "--out", "y", "--workers", "0"], &[]).0, EXIT_USAGE);
    }

    #[test]
    fn help_exits_0() {
        let (code, out, _) = run_args(&["--help"], &[]);
        assert_eq!(code, EXIT_OK);
        assert!(out.contains("synth"));
    }

    #[test]
    fn missing_input_is_runtime_failure() {
        let dir = tempfile::tempdir().unwrap();
        let missing = dir.path().join("nope");
        assert_eq!(run_args(&["validate", "--input", missing.to_str().unwrap()], &[]).0, EXIT_RUNTIME);
    }

    #[test]
    fn precedence_cli_env_file() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = dir.path().join("run.conf");
        std::fs::write(&cfg, "# defaults\nworkers = 3\nblocks=7\nout=/from/file\n").unwrap();
        let env = |k: &str| match k {
            "ETHERSCOPE_WORKERS" => Some("5".to_string()),
            "ETHERSCOPE_BLOCKS" => Some("999".to_string()),
            _ => None,
        };
        let s = Settings::new(Some(&cfg), &env).unwrap();
        assert_eq!(s.or(None, "workers", 1usize).unwrap(), 5);
        assert_eq!(s.or(Some(2usize), "workers", 1).unwrap(), 2);
        // blocks is an analytic parameter, so the environment is ignored.
        assert_eq!(s.or(None, "blocks", 1u64).unwrap(), 7);
        assert_eq!(s.req::<PathBuf>(None, "out").unwrap(), PathBuf::from("/from/file"));
        assert_eq!(s.or(None, "epochs", 500u32).unwrap(), 500);
    }

    #[test]
    fn bad_config_value_is_usage_error() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = dir.path().join("run.conf");
        std::fs::write(&cfg, "blocks=many\n").unwrap();
        let out = dir.path().join("c");
        let (code, _, err) =
            run_args(&["synth", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()], &[]);
        assert_eq!(code, EXIT_USAGE, "{err}");
    }

    #[test]
    fn validate_pristine_and_corrupted() {
        let dir = tempfile::tempdir().unwrap();
        let corpus = dir.path().join("c");
        let c = corpus.to_str().unwrap();
        assert_eq!(run_args(&["synth", "--out", c, "--blocks", "30", "--seed", "2"], &[]).0, EXIT_OK);
        let (code, out, _) = run_args(&["validate", "--input", c], &[]);
        assert_eq!((code, out.as_str()), (EXIT_OK, ""));

        let mut bundles = read_raw(&corpus).unwrap();
        bundles[5].block.timestamp = 0;
        crate::ingest::write_raw(&bundles, &corpus).unwrap();
        let (code, out, _) = run_args(&["validate", "--input", c], &[]);
        assert_eq!(code, EXIT_DEFECTS);
        assert_eq!(out.lines().count(), 1);
        assert!(out.contains("NonMonotoneTimestamp"));
    }
}
