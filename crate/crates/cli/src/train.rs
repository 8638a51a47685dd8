//! `pretrain` and `synth`.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::Args;
use ctxsynth::corpus::load_corpus;
use ctxsynth::denoiser::{Checkpoint, DenoiserConfig};
use ctxsynth::encdec::{DecoderConfig, DefaultEncoder, Table, TableSchema};
use ctxsynth::pipeline::{
    ensure_disjoint, pretrain, select_checkpoint, synthesize, validation_tasks, LogRecord, SelectionReport,
    SynthConfig, TrainConfig, TrainObserver,
};
use ctxsynth::schedule::ScheduleConfig;
use ctxsynth::{seeds, Scalar};
use serde::{Deserialize, Serialize};

use crate::runconfig::{
    beside, preset_of, read_config_file, require_path, resolve, write_json, Overrides, Precision, Preset,
};

pub const LOG_FILE: &str = "train_log.jsonl";
pub const SELECTION_FILE: &str = "selection.json";

pub fn checkpoint_name(step: u64) -> String {
    format!("ckpt-{step:08}.bin")
}

/// `data.csv` → `data.schema.json`.
pub fn schema_for(csv: &Path) -> PathBuf {
    csv.with_extension("schema.json")
}

pub fn read_table(csv: &Path, schema: Option<&Path>) -> Result<Table> {
    let schema = schema.map(Path::to_path_buf).unwrap_or_else(|| schema_for(csv));
    Table::read_csv(csv, &schema).with_context(|| format!("reading {} with schema {}", csv.display(), schema.display()))
}

#[derive(Args, Debug)]
pub struct PretrainArgs {
    /// Materialized corpus directory.
    #[arg(long)]
    corpus: Option<PathBuf>,
    /// Output directory for checkpoints and logs.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Held-out corpus used to select a checkpoint by latent FID.
    #[arg(long)]
    validation: Option<PathBuf>,
    #[arg(long, value_enum)]
    preset: Option<Preset>,
    /// Training arithmetic; checkpoints are stored in f64 either way.
    #[arg(long, value_enum)]
    precision: Option<Precision>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    warmup_ratio: Option<f64>,
    #[arg(long)]
    weight_decay: Option<f64>,
    #[arg(long)]
    checkpoint_every: Option<usize>,
    /// Also save the untrained model as a step-0 checkpoint.
    #[arg(long)]
    initial_checkpoint: bool,
    #[arg(long)]
    query_cap: Option<usize>,
    #[arg(long)]
    latent_dim: Option<usize>,
    #[arg(long)]
    model_dim: Option<usize>,
    #[arg(long)]
    layers: Option<usize>,
    #[arg(long)]
    heads: Option<usize>,
    /// Training seed [default: 0].
    #[arg(long)]
    seed: Option<u64>,
    /// Encoder seed [default: 0].
    #[arg(long)]
    encoder_seed: Option<u64>,
    /// Seed for validation splits and sampling [default: 0].
    #[arg(long)]
    validation_seed: Option<u64>,
    #[arg(long)]
    config: Option<PathBuf>,
    /// Print the resolved run config and exit.
    #[arg(long)]
    print_config: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PretrainConfig {
    pub preset: Preset,
    pub precision: Precision,
    pub corpus: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub validation: Option<PathBuf>,
    pub encoder_seed: u64,
    pub validation_seed: u64,
    pub model: DenoiserConfig,
    pub train: TrainConfig,
    pub schedule: ScheduleConfig,
}

impl PretrainConfig {
    pub fn preset(preset: Preset) -> Self {
        let (model, train) = match preset {
            Preset::Desk => (DenoiserConfig::desk(), TrainConfig::desk()),
            Preset::Paper => (DenoiserConfig::paper(), TrainConfig::paper()),
        };
        Self {
            preset,
            precision: Precision::F64,
            corpus: None,
            out: None,
            validation: None,
            encoder_seed: 0,
            validation_seed: 0,
            model,
            train,
            schedule: ScheduleConfig::default(),
        }
    }
}

/// Writes checkpoints and log lines as training proceeds.
struct DiskObserver {
    dir: PathBuf,
    log: BufWriter<File>,
    failure: Option<std::io::Error>,
}

impl<T: Scalar> TrainObserver<T> for DiskObserver {
    fn on_log(&mut self, record: &LogRecord) {
        if self.failure.is_none() {
            let line = serde_json::to_string(record).expect("log record serializes");
            if let Err(e) = writeln!(self.log, "{line}") {
                self.failure = Some(e);
            }
        }
    }

    fn on_checkpoint(&mut self, ck: &Checkpoint<T>) -> ctxsynth::Result<()> {
        self.log.flush()?;
        ck.save(&self.dir.join(checkpoint_name(ck.step)))
    }
}

#[derive(Serialize)]
struct Selection<'a> {
    selected_checkpoint: String,
    #[serde(flatten)]
    report: &'a SelectionReport,
}

pub fn resolve_pretrain(args: &PretrainArgs) -> Result<PretrainConfig> {
    let file = args.config.as_deref().map(read_config_file).transpose()?;
    let preset = preset_of(args.preset, file.as_ref())?;
    let mut ov = Overrides::default();
    ov.set("preset", Some(preset))
        .set("precision", args.precision)
        .set("corpus", args.corpus.as_ref())
        .set("out", args.out.as_ref())
        .set("validation", args.validation.as_ref())
        .set("encoder_seed", args.encoder_seed)
        .set("validation_seed", args.validation_seed)
        .set("train.epochs", args.epochs)
        .set("train.lr", args.lr)
        .set("train.warmup_ratio", args.warmup_ratio)
        .set("train.weight_decay", args.weight_decay)
        .set("train.checkpoint_every", args.checkpoint_every)
        .flag("train.initial_checkpoint", args.initial_checkpoint)
        .set("train.batch_query_cap", args.query_cap)
        .set("train.seed", args.seed)
        .set("model.latent_dim", args.latent_dim)
        .set("model.model_dim", args.model_dim)
        .set("model.layers", args.layers)
        .set("model.heads", args.heads);
    resolve(&PretrainConfig::preset(preset), file.as_ref(), &ov)
}

pub fn pretrain_cmd(args: &PretrainArgs) -> Result<()> {
    let cfg = resolve_pretrain(args)?;
    if args.print_config {
        println!("{}", serde_json::to_string_pretty(&cfg)?);
        return Ok(());
    }
    match cfg.precision {
        Precision::F32 => run_pretrain::<f32>(&cfg),
        Precision::F64 => run_pretrain::<f64>(&cfg),
    }
}

fn run_pretrain<T: Scalar>(cfg: &PretrainConfig) -> Result<()> {
    let corpus_dir = require_path(&cfg.corpus, "corpus")?;
    let out = require_path(&cfg.out, "out")?;
    cfg.model.validate()?;
    cfg.train.validate()?;
    cfg.schedule.validate()?;
    let (manifest, entries) = load_corpus(&corpus_dir)?;
    let validation = match &cfg.validation {
        Some(dir) => {
            let (vm, ve) = load_corpus(dir)?;
            ensure_disjoint(&manifest, &vm)?;
            Some(ve)
        }
        None => None,
    };
    std::fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
    write_json(&out.join("run_config.json"), cfg)?;
    let encoder = DefaultEncoder::new(cfg.encoder_seed, cfg.model.latent_dim);
    let mut observer = DiskObserver {
        dir: out.clone(),
        log: BufWriter::new(File::create(out.join(LOG_FILE))?),
        failure: None,
    };
    let mut result = pretrain::<T>(&entries, &encoder, &cfg.model, &cfg.schedule, &cfg.train, &mut observer)?;
    observer.log.flush()?;
    if let Some(e) = observer.failure {
        return Err(e).context("writing training log");
    }
    let last = result.log.last().map(|r| r.loss).unwrap_or(f64::NAN);
    println!(
        "trained {} steps over {} tables; final loss {last:.4}; {} checkpoints in {}",
        result.log.len(),
        entries.len(),
        result.checkpoints.len(),
        out.display()
    );
    if let Some(ventries) = validation {
        let tasks = validation_tasks::<T>(&ventries, &encoder, cfg.validation_seed)?;
        let (best, report) = select_checkpoint(&mut result.checkpoints, &tasks, &cfg.schedule, cfg.validation_seed)?;
        for ck in &result.checkpoints {
            ck.save(&out.join(checkpoint_name(ck.step)))?;
        }
        let selected = checkpoint_name(result.checkpoints[best].step);
        write_json(
            &out.join(SELECTION_FILE),
            &Selection {
                selected_checkpoint: selected.clone(),
                report: &report,
            },
        )?;
        println!("selected {selected} by validation FID over {} tasks", tasks.len());
    }
    Ok(())
}

#[derive(Args, Debug)]
pub struct SynthArgs {
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Input table (CSV).
    #[arg(long)]
    data: Option<PathBuf>,
    /// Schema of the input table [default: beside the CSV as `.schema.json`].
    #[arg(long)]
    schema: Option<PathBuf>,
    /// Output CSV; its schema is written beside it.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Synthetic rows [default: 2500].
    #[arg(long)]
    rows: Option<usize>,
    /// Fraction of input rows used as context [default: 0.3].
    #[arg(long)]
    context_ratio: Option<f64>,
    /// Seed for split, sampling and decoders [default: 0].
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_enum)]
    preset: Option<Preset>,
    #[arg(long, value_enum)]
    precision: Option<Precision>,
    #[arg(long)]
    decoder_epochs: Option<usize>,
    #[arg(long)]
    decoder_hidden: Option<usize>,
    #[arg(long)]
    decoder_lr: Option<f64>,
    #[arg(long)]
    decoder_dropout: Option<f64>,
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthRunConfig {
    pub preset: Preset,
    pub precision: Precision,
    pub checkpoint: Option<PathBuf>,
    pub data: Option<PathBuf>,
    pub schema: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub rows: usize,
    pub context_ratio: f64,
    pub seed: u64,
    pub decoder: DecoderConfig,
}

impl SynthRunConfig {
    pub fn preset(preset: Preset) -> Self {
        let base = SynthConfig::default();
        Self {
            preset,
            precision: Precision::F64,
            checkpoint: None,
            data: None,
            schema: None,
            out: None,
            rows: base.rows,
            context_ratio: base.context_ratio,
            seed: 0,
            decoder: match preset {
                Preset::Desk => DecoderConfig::desk(),
                Preset::Paper => DecoderConfig::paper(),
            },
        }
    }

    pub fn synth_config(&self) -> SynthConfig {
        SynthConfig {
            rows: self.rows,
            context_ratio: self.context_ratio,
            decoder: self.decoder.clone(),
            seed: self.seed,
        }
    }
}

#[derive(Serialize)]
struct SynthSidecar {
    checkpoint_step: u64,
    rows: usize,
    seed: u64,
    split_seed: u64,
    sampling_seed: u64,
    decoder_seed: u64,
    context_rows: usize,
    query_rows: usize,
    decoder_losses: BTreeMap<String, f64>,
}

pub fn synth_cmd(args: &SynthArgs) -> Result<()> {
    let file = args.config.as_deref().map(read_config_file).transpose()?;
    let preset = preset_of(args.preset, file.as_ref())?;
    let mut ov = Overrides::default();
    ov.set("preset", Some(preset))
        .set("precision", args.precision)
        .set("checkpoint", args.checkpoint.as_ref())
        .set("data", args.data.as_ref())
        .set("schema", args.schema.as_ref())
        .set("out", args.out.as_ref())
        .set("rows", args.rows)
        .set("context_ratio", args.context_ratio)
        .set("seed", args.seed)
        .set("decoder.epochs", args.decoder_epochs)
        .set("decoder.hidden", args.decoder_hidden)
        .set("decoder.lr", args.decoder_lr)
        .set("decoder.dropout", args.decoder_dropout);
    let cfg: SynthRunConfig = resolve(&SynthRunConfig::preset(preset), file.as_ref(), &ov)?;
    match cfg.precision {
        Precision::F32 => run_synth::<f32>(&cfg),
        Precision::F64 => run_synth::<f64>(&cfg),
    }
}

fn run_synth<T: Scalar>(cfg: &SynthRunConfig) -> Result<()> {
    let ck_path = require_path(&cfg.checkpoint, "checkpoint")?;
    let data = require_path(&cfg.data, "data")?;
    let out = require_path(&cfg.out, "out")?;
    let ck = Checkpoint::<T>::load(&ck_path).with_context(|| format!("loading {}", ck_path.display()))?;
    let table = read_table(&data, cfg.schema.as_deref())?;
    let encoder = DefaultEncoder::new(ck.encoder_seed, ck.model.config().latent_dim);
    let s = synthesize(&table, &ck.model, &encoder, &ck.schedule, &cfg.synth_config())?;
    if let Some(dir) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    s.table.write_csv(&out, &schema_for(&out))?;
    write_json(&beside(&out, "run_config.json"), cfg)?;
    let names = |schema: &TableSchema| schema.columns.iter().map(|c| c.name.clone()).collect::<Vec<_>>();
    write_json(
        &beside(&out, "json"),
        &SynthSidecar {
            checkpoint_step: ck.step,
            rows: s.table.n_rows(),
            seed: cfg.seed,
            split_seed: seeds::derive(cfg.seed, &[0]),
            sampling_seed: seeds::derive(cfg.seed, &[1]),
            decoder_seed: seeds::derive(cfg.seed, &[2]),
            context_rows: s.context_rows.len(),
            query_rows: s.query_rows.len(),
            decoder_losses: names(table.schema()).into_iter().zip(s.decoder_losses.iter().copied()).collect(),
        },
    )?;
    println!("wrote {} synthetic rows to {}", s.table.n_rows(), out.display());
    Ok(())
}
