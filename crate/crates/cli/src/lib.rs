//! `istd` command line over the `images/` + `masks/` dataset layout.
//!
//! ```text
//! istd prior    --input DIR --out DIR
//! istd infer    --input DIR --weights FILE --out DIR
//! istd baseline --input DIR --out DIR [--method tophat|mpcm]
//! istd eval     --input DIR --out DIR (--pred DIR | --method M [--weights FILE])
//! istd roc      --input DIR --out DIR (--pred DIR | --method M [--weights FILE])
//! istd synth    --out DIR [--family localization|roc|multi-target] [--count N] [--seed S]
//! istd init-weights --out FILE [--seed S]
//! ```
//!
//! Every command also takes `--config FILE` and `--threads N`.
//! Exit codes: 0 ok, 1 input error, 2 weight/config/usage error. Failures
//! print one `error: <kind>: <message>` line on stderr.

mod report;
mod score;

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};
use istd_core::io::{
    read_gray_png, read_raw_f32, save_weights, scan_dataset, write_mask_png, write_png16, write_raw_f32, DatasetEntry,
    DatasetMode, RunConfig,
};
use istd_core::metrics::{confusion, curve_from_sweeps, pd_fa, sweep_image, threshold_grid, Mask};
use istd_core::network::NetConfig;
use istd_core::scpem::GdKernelBank;
use istd_core::synthgen::{make_suite, SceneSpec, SuiteKind};
use istd_core::weights::WeightStore;
use istd_core::{Error, Tensor};
use rayon::prelude::*;
use serde::Serialize;

pub use report::{roc_csv, AggregateReport, DetectionReport, ImageCounts, ImageReport, REPORT_SCHEMA_VERSION};
pub use score::{Method, Scorer};

/// Threshold used to binarize score maps in `eval`.
pub const EVAL_THRESHOLD: f64 = 0.5;

#[derive(Debug, Parser)]
#[command(name = "istd", version, about = "Infrared small-target detection toolkit")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write the CP1 prior of every image.
    Prior(MapArgs),
    /// Run the network on every image.
    Infer(MapArgs),
    /// Run a classical baseline on every image.
    Baseline(MapArgs),
    /// Score against masks and write report.json / report.csv.
    Eval(EvalArgs),
    /// Sweep thresholds and write roc.csv.
    Roc(EvalArgs),
    /// Generate a synthetic dataset.
    Synth(SynthArgs),
    /// Write a seeded weight file for the configured width.
    InitWeights(InitArgs),
}

#[derive(Debug, Args)]
pub struct Common {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub threads: Option<usize>,
}

#[derive(Debug, Args)]
pub struct MapArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub weights: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub method: Option<Method>,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Directory of `<stem>.f32` or `<stem>.png` score maps.
    #[arg(long, conflicts_with = "method")]
    pub pred: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub method: Option<Method>,
    #[arg(long)]
    pub weights: Option<PathBuf>,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value = "localization")]
    pub family: SuiteKind,
    #[arg(long, default_value_t = 100)]
    pub count: usize,
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Args)]
pub struct InitArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub kind: String,
    pub message: String,
}

impl CliError {
    pub fn usage(message: impl Into<String>) -> Self {
        CliError {
            code: 2,
            kind: "usage".into(),
            message: message.into(),
        }
    }

    /// Any failure while reading a weight or config file exits with 2.
    pub fn weight_or_config(e: Error) -> Self {
        CliError {
            code: 2,
            ..CliError::from(e)
        }
    }

    pub fn line(&self) -> String {
        let msg = self.message.split_whitespace().collect::<Vec<_>>().join(" ");
        format!("error: {}: {}", self.kind, msg)
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError {
            code: if e.is_weight_or_config() { 2 } else { 1 },
            kind: e.kind().to_string(),
            message: match e {
                Error::Config(m) | Error::Input(m) => m,
                other => other.to_string(),
            },
        }
    }
}

/// Parses `args` (program name first), runs the command and returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => {
            let _ = e.print();
            return 0;
        }
        Err(e) => {
            let text = e.to_string();
            let first = text
                .lines()
                .find(|l| !l.trim().is_empty())
                .unwrap_or("invalid arguments");
            eprintln!("{}", CliError::usage(first.trim_start_matches("error: ")).line());
            return 2;
        }
    };
    match execute(&cli.command) {
        Ok(warnings) => {
            for w in warnings {
                eprintln!("warning: {w}");
            }
            0
        }
        Err(e) => {
            eprintln!("{}", e.line());
            e.code
        }
    }
}

/// Runs one command; returns the warnings to print.
pub fn execute(command: &Command) -> Result<Vec<String>, CliError> {
    match command {
        Command::Prior(a) => map_command(a, MapKind::Prior),
        Command::Infer(a) => map_command(a, MapKind::Infer),
        Command::Baseline(a) => map_command(a, MapKind::Baseline),
        Command::Eval(a) => eval_command(a),
        Command::Roc(a) => roc_command(a),
        Command::Synth(a) => synth_command(a),
        Command::InitWeights(a) => init_command(a),
    }
}

fn settings(common: &Common) -> Result<RunConfig, CliError> {
    let mut cfg = match &common.config {
        Some(p) => RunConfig::load(p).map_err(CliError::weight_or_config)?,
        None => RunConfig::default(),
    };
    if let Some(t) = common.threads {
        cfg.threads = t;
    }
    cfg.validate().map_err(CliError::weight_or_config)?;
    Ok(cfg)
}

/// Applies `f` to every item on a pool of `threads` workers. Results come
/// back in input order and the first failing item (in input order) wins.
fn par_map<T, R, F>(threads: usize, items: &[T], f: F) -> Result<Vec<R>, CliError>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> Result<R, CliError> + Sync,
{
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| CliError::usage(format!("cannot start {threads} worker threads: {e}")))?;
    let results: Vec<Result<R, CliError>> = pool.install(|| items.par_iter().map(&f).collect());
    results.into_iter().collect()
}

fn create_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::from(Error::Input(format!("cannot create `{}`: {e}", dir.display()))))
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    fs::write(path, bytes).map_err(|e| CliError::from(Error::Input(format!("cannot write `{}`: {e}", path.display()))))
}

fn empty_warning(input: &Path) -> Vec<String> {
    vec![format!("no images in `{}`", input.join("images").display())]
}

#[derive(Clone, Copy)]
enum MapKind {
    Prior,
    Infer,
    Baseline,
}

fn map_command(a: &MapArgs, kind: MapKind) -> Result<Vec<String>, CliError> {
    let cfg = settings(&a.common)?;
    let scorer = match kind {
        MapKind::Prior => Scorer::Cp1(GdKernelBank::standard(cfg.sigma_rule)?),
        MapKind::Infer => {
            if a.weights.is_none() {
                return Err(CliError::usage("`infer` needs `--weights FILE`"));
            }
            Scorer::build(Method::Net, &cfg, a.weights.as_deref())?
        }
        MapKind::Baseline => match a.method.unwrap_or(Method::Tophat) {
            m @ (Method::Tophat | Method::Mpcm) => Scorer::build(m, &cfg, None)?,
            m => {
                return Err(CliError::usage(format!(
                    "`baseline` takes tophat or mpcm, not {}",
                    m.name()
                )))
            }
        },
    };
    let entries = scan_dataset(&a.input, DatasetMode::Scored)?;
    if entries.is_empty() {
        return Ok(empty_warning(&a.input));
    }
    create_dir(&a.out)?;
    par_map(cfg.threads, &entries, |e| {
        let image = read_gray_png(&e.image)?;
        let score = scorer.score(&image)?;
        write_png16(&a.out.join(format!("{}.png", e.id)), &score)?;
        write_raw_f32(&a.out.join(format!("{}.f32", e.id)), &score)?;
        Ok(())
    })?;
    Ok(Vec::new())
}

enum ScoreSource {
    Files(PathBuf),
    Computed(Scorer, Method),
}

impl ScoreSource {
    fn name(&self) -> &'static str {
        match self {
            ScoreSource::Files(_) => "files",
            ScoreSource::Computed(_, m) => m.name(),
        }
    }

    /// Prefers the exact `.f32` dump over the quantized PNG.
    fn load(&self, e: &DatasetEntry, image: &Tensor) -> Result<Tensor, CliError> {
        match self {
            ScoreSource::Computed(s, _) => Ok(s.score(image)?),
            ScoreSource::Files(dir) => {
                let raw = dir.join(format!("{}.f32", e.id));
                let png = dir.join(format!("{}.png", e.id));
                if raw.is_file() {
                    Ok(read_raw_f32(&raw)?)
                } else if png.is_file() {
                    Ok(read_gray_png(&png)?)
                } else {
                    Err(Error::Input(format!("missing prediction for `{}` in `{}`", e.id, dir.display())).into())
                }
            }
        }
    }
}

/// Loads image, mask and score for one entry.
fn scored_sample(src: &ScoreSource, e: &DatasetEntry) -> Result<(Tensor, Mask), CliError> {
    let sample = e.load()?;
    let score = src.load(e, &sample.image)?;
    let mask = sample.mask.expect("masked mode yields masks");
    if score.channels() != 1 || (score.height(), score.width()) != (mask.height(), mask.width()) {
        return Err(Error::Input(format!(
            "prediction for `{}` is {}×{}×{}, mask is {}×{}",
            e.id,
            score.height(),
            score.width(),
            score.channels(),
            mask.height(),
            mask.width()
        ))
        .into());
    }
    Ok((score, mask))
}

/// Computes the detection report for a masked dataset without writing it.
pub fn evaluate(input: &Path, source: EvalSource<'_>, cfg: &RunConfig) -> Result<Option<DetectionReport>, CliError> {
    let src = source.resolve(cfg)?;
    let entries = scan_dataset(input, DatasetMode::Masked)?;
    if entries.is_empty() {
        return Ok(None);
    }
    let counts = par_map(cfg.threads, &entries, |e| {
        let (score, mask) = scored_sample(&src, e)?;
        let pred = Mask::threshold(&score, EVAL_THRESHOLD);
        Ok(ImageCounts {
            id: e.id.clone(),
            confusion: confusion(&pred, &mask)?,
            detection: pd_fa(&pred, &mask, cfg.match_radius)?,
        })
    })?;
    Ok(Some(DetectionReport::new(
        src.name(),
        EVAL_THRESHOLD,
        cfg.match_radius,
        &counts,
    )))
}

/// Where `evaluate` gets its score maps.
pub enum EvalSource<'a> {
    Pred(&'a Path),
    Method(Method, Option<&'a Path>),
}

impl EvalSource<'_> {
    fn resolve(&self, cfg: &RunConfig) -> Result<ScoreSource, CliError> {
        Ok(match *self {
            EvalSource::Pred(p) => ScoreSource::Files(p.to_path_buf()),
            EvalSource::Method(m, w) => ScoreSource::Computed(Scorer::build(m, cfg, w)?, m),
        })
    }
}

fn eval_source(a: &EvalArgs) -> Result<EvalSource<'_>, CliError> {
    match (&a.pred, a.method) {
        (Some(dir), _) => Ok(EvalSource::Pred(dir)),
        (None, Some(m)) => Ok(EvalSource::Method(m, a.weights.as_deref())),
        (None, None) => Err(CliError::usage("give either `--pred DIR` or `--method M`")),
    }
}

fn eval_command(a: &EvalArgs) -> Result<Vec<String>, CliError> {
    let cfg = settings(&a.common)?;
    let Some(report) = evaluate(&a.input, eval_source(a)?, &cfg)? else {
        return Ok(empty_warning(&a.input));
    };
    create_dir(&a.out)?;
    write_file(&a.out.join("report.json"), report.to_json().as_bytes())?;
    write_file(&a.out.join("report.csv"), report.to_csv().as_bytes())?;
    Ok(Vec::new())
}

fn roc_command(a: &EvalArgs) -> Result<Vec<String>, CliError> {
    let cfg = settings(&a.common)?;
    let src = eval_source(a)?.resolve(&cfg)?;
    let entries = scan_dataset(&a.input, DatasetMode::Masked)?;
    if entries.is_empty() {
        return Ok(empty_warning(&a.input));
    }
    let thresholds = threshold_grid(cfg.threshold_count);
    let sweeps = par_map(cfg.threads, &entries, |e| {
        let (score, mask) = scored_sample(&src, e)?;
        Ok(sweep_image(&score, &mask, &thresholds, cfg.match_radius)?)
    })?;
    let curve = curve_from_sweeps(&thresholds, &sweeps);
    create_dir(&a.out)?;
    write_file(&a.out.join("roc.csv"), roc_csv(&curve).as_bytes())?;
    Ok(Vec::new())
}

#[derive(Serialize)]
#[serde(rename_all = "camelCase")]
struct SceneRecord<'a> {
    id: String,
    snr: f64,
    spec: &'a SceneSpec,
}

/// Stem of the `index`-th synthetic scene; zero-padded so byte order is index order.
pub fn scene_stem(index: usize) -> String {
    format!("scene_{index:05}")
}

fn synth_command(a: &SynthArgs) -> Result<Vec<String>, CliError> {
    let cfg = settings(&a.common)?;
    let suite = make_suite(a.family, a.count, a.seed).map_err(CliError::weight_or_config)?;
    let (images, masks) = (a.out.join("images"), a.out.join("masks"));
    create_dir(&images)?;
    create_dir(&masks)?;
    let indexed: Vec<usize> = (0..suite.len()).collect();
    par_map(cfg.threads, &indexed, |&i| {
        let stem = scene_stem(i);
        write_png16(&images.join(format!("{stem}.png")), &suite[i].scene.image)?;
        write_mask_png(&masks.join(format!("{stem}.png")), &suite[i].scene.mask)?;
        Ok(())
    })?;
    let records: Vec<SceneRecord<'_>> = suite
        .iter()
        .enumerate()
        .map(|(i, s)| SceneRecord {
            id: scene_stem(i),
            snr: s.snr,
            spec: &s.spec,
        })
        .collect();
    let mut json = serde_json::to_string_pretty(&records).expect("scene records serialise");
    json.push('\n');
    write_file(&a.out.join("scenes.json"), json.as_bytes())?;
    Ok(Vec::new())
}

fn init_command(a: &InitArgs) -> Result<Vec<String>, CliError> {
    let cfg = settings(&a.common)?;
    let layout = NetConfig::new(cfg.base_channels)
        .layout()
        .map_err(CliError::weight_or_config)?;
    if let Some(dir) = a.out.parent().filter(|d| !d.as_os_str().is_empty()) {
        create_dir(dir)?;
    }
    save_weights(&WeightStore::seeded(&layout, a.seed), &a.out)?;
    Ok(Vec::new())
}
