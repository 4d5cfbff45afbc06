//! Command-line front end: `ecgnet <preprocess|train|evaluate|report>`.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use sha2::{Digest, Sha256};

use crate::ingest::{compute_norm_stats, load_manifest, normalize, segment_manifest, LabelScheme, NormScope, Segment};
use crate::kv::KvMap;
use crate::metrics::{confusion_matrix, parse_report_csv, render_report, MetricReport, ReportFormat};
use crate::model::{load_checkpoint, save_checkpoint, ModelConfig};
use crate::store::{self, norm_stats_text, parse_norm_stats, read_store, write_store};
use crate::synth::SynthSpec;
use crate::training::{predict_dataset, run_cross_validation, Dataset, TrainConfig};

pub const MANIFEST_FILE: &str = "manifest.txt";
pub const LOSS_FILE: &str = "loss.csv";
pub const REPORT_CSV: &str = "report.csv";
pub const REPORT_TXT: &str = "report.txt";
pub const MANIFEST_FORMAT: u32 = 1;

#[derive(Debug, Parser)]
#[command(name = "ecgnet", version, about = "ECG rhythm classification with an SE-VGG + LSTM network")]
pub struct Cli {
    /// Base seed; overrides any `seed` in the run configuration.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Segment and normalize recordings into a segment store.
    Preprocess(PreprocessArgs),
    /// Cross-validate the network on a segment store.
    Train(TrainArgs),
    /// Score a checkpoint on a segment store.
    Evaluate(EvaluateArgs),
    /// Collect the overall metrics of several runs into one table.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
pub struct PreprocessArgs {
    /// Directory the manifest's record paths are relative to.
    #[arg(long, required_unless_present = "synthetic", requires = "manifest")]
    pub data: Option<PathBuf>,
    /// CSV of `record_path,segment_index,label_code`.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// Generate a synthetic dataset instead, e.g. `classes=5,per_class=40,len=128`.
    #[arg(long, conflicts_with_all = ["data", "manifest"])]
    pub synthetic: Option<String>,
    #[arg(long, default_value_t = 10.0)]
    pub window_seconds: f64,
    /// Comma-separated class codes, in class-index order.
    #[arg(long, default_value = "N,V,L,R,A")]
    pub classes: String,
    /// `all` normalizes here with dataset-wide statistics; `train_only`
    /// leaves the store raw for per-fold normalization during training.
    #[arg(long, default_value = "all")]
    pub norm_scope: NormScope,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub segments: PathBuf,
    /// Run configuration (`key = value` lines).
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub segments: PathBuf,
    /// Statistics to normalize a raw store with (a fold's `norm_stats` file).
    #[arg(long)]
    pub norm_stats: Option<PathBuf>,
    /// Restrict scoring to the indices listed in a fold split file.
    #[arg(long, requires = "role")]
    pub split: Option<PathBuf>,
    /// Which side of `--split` to score: `train` or `test`.
    #[arg(long, requires = "split")]
    pub role: Option<String>,
    /// Report path; the text report goes to `<out>.txt`, the CSV to `<out>.csv`.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Run directories written by `train`.
    #[arg(long, num_args = 1.., required = true)]
    pub runs: Vec<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Preprocess(a) => cmd_preprocess(&a, cli.seed),
        Command::Train(a) => cmd_train(&a, cli.seed),
        Command::Evaluate(a) => cmd_evaluate(&a),
        Command::Report(a) => cmd_report(&a),
    }
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, contents).with_context(|| format!("cannot write {}", path.display()))
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))
}

fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

fn unix_now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs())
}

fn echo(out: &mut String, title: &str, text: &str) {
    let _ = writeln!(out, "\n# {title}");
    for line in text.lines() {
        let _ = writeln!(out, "#   {line}");
    }
}

pub fn cmd_preprocess(args: &PreprocessArgs, seed: Option<u64>) -> Result<()> {
    let (raw, scheme): (Vec<Segment>, LabelScheme) = match &args.synthetic {
        Some(text) => {
            let mut spec: SynthSpec = text.parse().map_err(|e: String| anyhow!("--synthetic: {e}"))?;
            if let Some(s) = seed {
                spec.seed = s;
            }
            (spec.generate(), spec.scheme())
        }
        None => {
            let scheme = LabelScheme::parse(&args.classes)?;
            let data_dir = args.data.as_deref().expect("clap enforces --data");
            let manifest = args.manifest.as_deref().context("--manifest is required with --data")?;
            let entries = load_manifest(manifest, &scheme)?;
            (segment_manifest(data_dir, &entries, args.window_seconds)?, scheme)
        }
    };
    if raw.is_empty() {
        bail!("no labelled segments produced");
    }
    let stats = compute_norm_stats(&raw)?;
    let (segments, kept_stats) = match args.norm_scope {
        NormScope::All => (
            raw.iter().map(|s| normalize(s, &stats)).collect::<Result<Vec<_>, _>>()?,
            Some(stats),
        ),
        NormScope::TrainOnly => {
            // still reject flat input up front
            normalize(&raw[0], &stats)?;
            (raw, None)
        }
    };
    let data = Dataset::new(segments, scheme)?;
    write_store(&args.out, &data, kept_stats.as_ref())?;
    Ok(())
}

/// Run configuration split into its model and training halves.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub train: TrainConfig,
}

impl RunConfig {
    /// `input_len` and `num_classes` default to the store's shape and must
    /// match it when given.
    pub fn resolve(text: &str, data: &Dataset, seed: Option<u64>) -> Result<Self> {
        let mut kv = KvMap::parse(text)?;
        let known: Vec<&str> = ModelConfig::KEYS.iter().chain(TrainConfig::KEYS.iter()).copied().collect();
        kv.check_known(&known)?;
        let len = data.segment_len().context("segment store is empty")?;
        for (key, actual) in [("input_len", len), ("num_classes", data.num_classes())] {
            match kv.get::<usize>(key)? {
                None => kv.insert(key, actual),
                Some(v) if v != actual => bail!("config {key} = {v} but the segment store has {actual}"),
                Some(_) => {}
            }
        }
        if let Some(s) = seed {
            kv.insert("seed", s);
        }
        Ok(Self {
            model: ModelConfig::from_kv(&kv)?,
            train: TrainConfig::from_kv(&kv)?,
        })
    }

    pub fn to_kv_text(&self) -> String {
        format!("{}{}", self.model.to_kv_text(), self.train.to_kv_text())
    }
}

fn split_text(train: &[usize], test: &[usize]) -> String {
    let mut out = String::from("index,role\n");
    let mut unique = train.to_vec();
    unique.sort_unstable();
    unique.dedup();
    for i in unique {
        let _ = writeln!(out, "{i},train");
    }
    for &i in test {
        let _ = writeln!(out, "{i},test");
    }
    out
}

fn parse_split(text: &str, role: &str) -> Result<Vec<usize>> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    if lines.next().map(str::trim) != Some("index,role") {
        bail!("split file lacks the `index,role` header");
    }
    let mut out = Vec::new();
    for line in lines {
        let (i, r) = line.split_once(',').with_context(|| format!("bad split line {line:?}"))?;
        if r.trim() == role {
            out.push(i.trim().parse().with_context(|| format!("bad index in {line:?}"))?);
        }
    }
    Ok(out)
}

pub fn cmd_train(args: &TrainArgs, seed: Option<u64>) -> Result<()> {
    let started = unix_now();
    let seg_path = args.segments.join(store::SEGMENTS_FILE);
    let store_bytes = fs::read(&seg_path).with_context(|| format!("cannot read {}", seg_path.display()))?;
    let data = store::decode(&store_bytes, &seg_path.display().to_string())?;
    let cfg_text = match &args.config {
        Some(p) => read_text(p)?,
        None => String::new(),
    };
    let cfg = RunConfig::resolve(&cfg_text, &data, seed)?;
    let outcome = run_cross_validation(&data, &cfg.model, &cfg.train)?;

    fs::create_dir_all(&args.out).with_context(|| format!("cannot create {}", args.out.display()))?;
    let resolved = cfg.to_kv_text();
    let mut artifacts = Vec::new();
    let mut loss = String::from("fold,epoch,loss,train_acc\n");
    let mut summary = String::from("fold,acc,sen,pre,f1\n");
    for f in &outcome.folds {
        let k = f.split.fold_index + 1;
        let model = f.model.as_ref().expect("trained fold keeps its model");
        let ckpt = format!("fold{k}.ckpt");
        save_checkpoint(model, &args.out.join(&ckpt))?;
        let csv = format!("fold{k}.metrics.csv");
        write_file(&args.out.join(&csv), render_report(&f.report, ReportFormat::Csv))?;
        let split = format!("fold{k}.split.csv");
        write_file(&args.out.join(&split), split_text(&f.train_sources, &f.test_sources))?;
        artifacts.extend([ckpt, csv, split]);
        if let Some(st) = &f.norm_stats {
            let name = format!("fold{k}.norm_stats.txt");
            write_file(&args.out.join(&name), norm_stats_text(st, NormScope::TrainOnly))?;
            artifacts.push(name);
        }
        for e in &f.history {
            let _ = writeln!(loss, "{k},{},{},{}", e.epoch, e.loss, e.accuracy);
        }
        let m = f.report.overall;
        let _ = writeln!(summary, "{k},{},{},{},{}", m.acc, m.sen, m.pre, m.f1);
    }
    write_file(&args.out.join(LOSS_FILE), &loss)?;
    write_file(&args.out.join(REPORT_CSV), render_report(&outcome.pooled_report, ReportFormat::Csv))?;
    let mut text = String::from("Cross-validated test-fold metrics (pooled over folds)\n\n");
    text.push_str(&render_report(&outcome.pooled_report, ReportFormat::Text));
    let fm = outcome.fold_mean;
    let _ = writeln!(
        text,
        "\nMean over folds: acc {:.4}  sen {:.4}  pre {:.4}  f1 {:.4}",
        fm.acc, fm.sen, fm.pre, fm.f1
    );
    echo(&mut text, "per-fold overall", &summary);
    echo(&mut text, "configuration", &resolved);
    write_file(&args.out.join(REPORT_TXT), &text)?;
    artifacts.extend([LOSS_FILE.to_string(), REPORT_CSV.to_string(), REPORT_TXT.to_string()]);

    let mut manifest = format!(
        "# ecgnet run manifest\nformat = {MANIFEST_FORMAT}\nsegments = {}\ndataset_sha256 = {}\nstarted_unix = {started}\nfinished_unix = {}\nartifacts = {}\n",
        args.segments.display(),
        sha256_hex(&store_bytes),
        unix_now(),
        artifacts.join(","),
    );
    manifest.push_str("# resolved configuration\n");
    manifest.push_str(&resolved);
    write_file(&args.out.join(MANIFEST_FILE), manifest)?;
    Ok(())
}

fn with_ext(path: &Path, ext: &str) -> PathBuf {
    let mut p = path.to_path_buf();
    if matches!(p.extension().and_then(|e| e.to_str()), Some("csv" | "txt")) {
        p.set_extension(ext);
    } else {
        let mut name = p.file_name().map(|n| n.to_os_string()).unwrap_or_default();
        name.push(format!(".{ext}"));
        p.set_file_name(name);
    }
    p
}

pub fn cmd_evaluate(args: &EvaluateArgs) -> Result<()> {
    let model = load_checkpoint(&args.checkpoint)?;
    let mut data = read_store(&args.segments)?;
    let raw = data.segments.iter().any(|s| !s.normalized);
    match (&args.norm_stats, raw) {
        (Some(p), true) => {
            let stats = parse_norm_stats(&read_text(p)?)?;
            for s in &mut data.segments {
                *s = normalize(s, &stats)?;
            }
        }
        (None, true) => bail!("segment store is not normalized; pass --norm-stats"),
        (Some(_), false) => bail!("segment store is already normalized; drop --norm-stats"),
        (None, false) => {}
    }
    if let (Some(split), Some(role)) = (&args.split, &args.role) {
        if role != "train" && role != "test" {
            bail!("--role must be train or test, got {role:?}");
        }
        let idx = parse_split(&read_text(split)?, role)?;
        if let Some(&bad) = idx.iter().find(|&&i| i >= data.len()) {
            bail!("split index {bad} outside a store of {} segments", data.len());
        }
        data = data.subset(&idx);
    }
    let cfg = model.config();
    let len = data.segment_len().context("nothing to evaluate")?;
    if len != cfg.input_len {
        bail!("shape mismatch: segments have {len} samples, checkpoint expects {}", cfg.input_len);
    }
    if data.num_classes() != cfg.num_classes {
        bail!(
            "shape mismatch: store has {} classes, checkpoint predicts {}",
            data.num_classes(),
            cfg.num_classes
        );
    }
    let preds = predict_dataset(&model, &data, 64)?;
    let cm = confusion_matrix(&data.labels(), &preds, cfg.num_classes)?;
    let report = MetricReport::from_confusion(&cm, data.scheme.codes());
    let correct = preds.iter().zip(data.labels()).filter(|(p, l)| **p == *l).count();
    let mut text = format!(
        "Evaluation of {} on {}\nsegments {}  correct {correct}  accuracy {}\n\n",
        args.checkpoint.display(),
        args.segments.display(),
        data.len(),
        correct as f64 / data.len() as f64,
    );
    text.push_str(&render_report(&report, ReportFormat::Text));
    echo(&mut text, "model configuration", &cfg.to_kv_text());
    if let Some(parent) = args.out.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).with_context(|| format!("cannot create {}", parent.display()))?;
    }
    write_file(&with_ext(&args.out, "txt"), text)?;
    write_file(&with_ext(&args.out, "csv"), render_report(&report, ReportFormat::Csv))?;
    Ok(())
}

/// Reads and checks a run manifest; every listed artifact must exist.
pub fn load_run_manifest(dir: &Path) -> Result<KvMap> {
    let path = dir.join(MANIFEST_FILE);
    let kv = KvMap::parse(&read_text(&path)?).with_context(|| format!("corrupt manifest {}", path.display()))?;
    let check = || -> Result<()> {
        let format: u32 = kv.require("format")?;
        if format != MANIFEST_FORMAT {
            bail!("manifest format {format}, expected {MANIFEST_FORMAT}");
        }
        kv.require::<String>("dataset_sha256")?;
        let artifacts: String = kv.require("artifacts")?;
        for a in artifacts.split(',') {
            if !dir.join(a).is_file() {
                bail!("listed artifact {a} is missing");
            }
        }
        if !artifacts.split(',').any(|a| a == REPORT_CSV) {
            bail!("no {REPORT_CSV} listed");
        }
        Ok(())
    };
    check().with_context(|| format!("corrupt manifest {}", path.display()))?;
    Ok(kv)
}

pub fn cmd_report(args: &ReportArgs) -> Result<()> {
    let mut out = String::from("run,acc,sen,pre,f1\n");
    for dir in &args.runs {
        load_run_manifest(dir)?;
        let path = dir.join(REPORT_CSV);
        let text = read_text(&path)?;
        parse_report_csv(&text).with_context(|| format!("corrupt report {}", path.display()))?;
        let overall = text
            .lines()
            .find(|l| l.starts_with("overall,"))
            .with_context(|| format!("{} has no overall row", path.display()))?;
        let _ = writeln!(out, "{},{}", dir.display(), &overall["overall,".len()..]);
    }
    write_file(&args.out, out)
}
