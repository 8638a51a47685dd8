//! `eval`, `frontier` and `ablate`.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::Args;
use ctxsynth::corpus::{build_corpus, split_indices, CorpusManifest, SplitSpec, DEFAULT_CONTEXT_RATIO};
use ctxsynth::denoiser::{Checkpoint, DenoiserConfig, DenoiserModel};
use ctxsynth::encdec::{DecoderConfig, DefaultEncoder, Table};
use ctxsynth::metrics::{dcr_overfit, evaluate, utility, DistanceConfig, EvalSets, Learner, MetricReport};
use ctxsynth::pipeline::{pretrain, synthesize, train_dataset_specific, SynthConfig, TrainConfig, DEFAULT_SYNTH_ROWS};
use ctxsynth::schedule::ScheduleConfig;
use ctxsynth::{seeds, Scalar};
use serde::{Deserialize, Serialize};

use crate::runconfig::{
    beside, preset_of, read_config_file, require_path, resolve, usage, write_json, Overrides, Precision, Preset,
};
use crate::train::read_table;

#[derive(Args, Debug)]
pub struct EvalArgs {
    /// Synthetic table (CSV).
    #[arg(long)]
    syn: Option<PathBuf>,
    #[arg(long)]
    train: Option<PathBuf>,
    /// Validation split; without it the overfit score is reported unavailable.
    #[arg(long)]
    val: Option<PathBuf>,
    #[arg(long)]
    test: Option<PathBuf>,
    /// Schema shared by all inputs [default: each CSV's own `.schema.json`].
    #[arg(long)]
    schema: Option<PathBuf>,
    /// Neighbour count for the density metrics [default: 5].
    #[arg(long)]
    k: Option<usize>,
    /// Labels recorded in the report for later aggregation.
    #[arg(long)]
    dataset: Option<String>,
    #[arg(long)]
    method: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output report (JSON).
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalConfig {
    pub syn: Option<PathBuf>,
    pub train: Option<PathBuf>,
    pub val: Option<PathBuf>,
    pub test: Option<PathBuf>,
    pub schema: Option<PathBuf>,
    pub k: Option<usize>,
    pub dataset: Option<String>,
    pub method: Option<String>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
}

pub fn eval_cmd(args: &EvalArgs) -> Result<()> {
    let file = args.config.as_deref().map(read_config_file).transpose()?;
    let mut ov = Overrides::default();
    ov.set("syn", args.syn.as_ref())
        .set("train", args.train.as_ref())
        .set("val", args.val.as_ref())
        .set("test", args.test.as_ref())
        .set("schema", args.schema.as_ref())
        .set("k", args.k)
        .set("dataset", args.dataset.as_ref())
        .set("method", args.method.as_ref())
        .set("seed", args.seed)
        .set("out", args.out.as_ref());
    let cfg: EvalConfig = resolve(&EvalConfig::default(), file.as_ref(), &ov)?;
    let out = require_path(&cfg.out, "out")?;
    let schema = cfg.schema.as_deref();
    let syn = read_table(&require_path(&cfg.syn, "syn")?, schema)?;
    let train = read_table(&require_path(&cfg.train, "train")?, schema)?;
    let test = read_table(&require_path(&cfg.test, "test")?, schema)?;
    let val = cfg.val.as_deref().map(|p| read_table(p, schema)).transpose()?;
    let mut report = evaluate(
        &syn,
        &EvalSets {
            train: &train,
            val: val.as_ref(),
            test: &test,
        },
        cfg.k,
    )?;
    report.dataset = cfg.dataset.clone();
    report.method = cfg.method.clone();
    report.seed = cfg.seed;
    write_json(&out, &report)?;
    write_json(&beside(&out, "run_config.json"), &cfg)?;
    println!("wrote report to {}", out.display());
    Ok(())
}

/// Train, validation and test splits carved from one table.
pub struct Holdout {
    pub train: Table,
    pub val: Table,
    pub test: Table,
}

/// `n_train` random rows for training; the rest is halved into validation
/// and test.
pub fn holdout(table: &Table, n_train: usize, seed: u64) -> Result<Holdout> {
    let n = table.n_rows();
    if n_train == 0 || n_train + 4 > n {
        return Err(ctxsynth::Error::Data(format!(
            "{n} rows cannot hold {n_train} training rows plus at least two validation and two test rows"
        ))
        .into());
    }
    let (train, rest) = split_indices(
        n,
        &SplitSpec {
            context_ratio: n_train as f64 / n as f64,
            seed: seeds::derive(seed, &[0]),
        },
    )?;
    let (val, test) = split_indices(
        rest.len(),
        &SplitSpec {
            context_ratio: 0.5,
            seed: seeds::derive(seed, &[1]),
        },
    )?;
    let pick = |idx: &[usize]| -> Vec<usize> { idx.iter().map(|&i| rest[i]).collect() };
    Ok(Holdout {
        train: table.select_rows(&train),
        val: table.select_rows(&pick(&val)),
        test: table.select_rows(&pick(&test)),
    })
}

/// Quality (boosted-stump utility on the test split) and privacy (DCR
/// overfit score against train vs validation) of one synthetic table.
pub fn quality_privacy(syn: &Table, h: &Holdout) -> Result<(f64, f64)> {
    let quality = utility(syn, &h.test, Learner::BoostedStumps)?;
    let dist = DistanceConfig::fit(&[&h.train, &h.val])?;
    let privacy = dcr_overfit(syn, &h.train, &h.val, &dist)?.score;
    Ok((quality, privacy))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum FrontierMode {
    DatasetSpecific,
    Icl,
}

/// Training defaults for a model fitted to one table: each epoch is a single
/// step, so the budget is counted in many more epochs.
pub fn single_dataset_train() -> TrainConfig {
    TrainConfig {
        epochs: 2000,
        lr: 1e-3,
        checkpoint_every: 200,
        ..TrainConfig::desk()
    }
}

#[derive(Args, Debug)]
pub struct StudyArgs {
    /// Input table (CSV), split into train/validation/test.
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    schema: Option<PathBuf>,
    /// Training rows N [default: 200].
    #[arg(long)]
    n_train: Option<usize>,
    /// Synthetic rows per evaluation [default: 2500].
    #[arg(long)]
    rows: Option<usize>,
    /// Seed for splits and synthesis [default: 0].
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_enum)]
    precision: Option<Precision>,
    #[arg(long, value_enum)]
    preset: Option<Preset>,
    /// Epochs of single-table training [default: 2000].
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    /// Checkpoint cadence in epochs [default: 200].
    #[arg(long)]
    checkpoint_every: Option<usize>,
    #[arg(long)]
    decoder_epochs: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    config: Option<PathBuf>,
}

impl StudyArgs {
    fn overrides(&self, preset: Preset) -> Overrides {
        let mut ov = Overrides::default();
        ov.set("preset", Some(preset))
            .set("data", self.data.as_ref())
            .set("schema", self.schema.as_ref())
            .set("n_train", self.n_train)
            .set("rows", self.rows)
            .set("seed", self.seed)
            .set("precision", self.precision)
            .set("train.epochs", self.epochs)
            .set("train.lr", self.lr)
            .set("train.checkpoint_every", self.checkpoint_every)
            .set("decoder.epochs", self.decoder_epochs)
            .set("out", self.out.as_ref());
        ov
    }
}

/// Settings shared by the frontier and ablation studies.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StudyConfig {
    pub preset: Preset,
    pub precision: Precision,
    pub data: Option<PathBuf>,
    pub schema: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub n_train: usize,
    pub rows: usize,
    pub context_ratio: f64,
    pub seed: u64,
    pub encoder_seed: u64,
    pub model: DenoiserConfig,
    pub train: TrainConfig,
    pub schedule: ScheduleConfig,
    pub decoder: DecoderConfig,
}

impl StudyConfig {
    pub fn preset(preset: Preset) -> Self {
        let (model, decoder) = match preset {
            Preset::Desk => (DenoiserConfig::desk(), DecoderConfig::desk()),
            Preset::Paper => (DenoiserConfig::paper(), DecoderConfig::paper()),
        };
        Self {
            preset,
            precision: Precision::F64,
            data: None,
            schema: None,
            out: None,
            n_train: 200,
            rows: DEFAULT_SYNTH_ROWS,
            context_ratio: DEFAULT_CONTEXT_RATIO,
            seed: 0,
            encoder_seed: 0,
            model,
            train: single_dataset_train(),
            schedule: ScheduleConfig::default(),
            decoder,
        }
    }

    fn synth(&self, context_ratio: f64) -> SynthConfig {
        SynthConfig {
            rows: self.rows,
            context_ratio,
            decoder: self.decoder.clone(),
            seed: seeds::derive(self.seed, &[2]),
        }
    }

    fn holdout(&self) -> Result<Holdout> {
        let data = require_path(&self.data, "data")?;
        holdout(&read_table(&data, self.schema.as_deref())?, self.n_train, self.seed)
    }
}

#[derive(Args, Debug)]
pub struct FrontierArgs {
    #[arg(long, value_enum)]
    mode: Option<FrontierMode>,
    /// Pretrained checkpoint (icl mode).
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    #[command(flatten)]
    study: StudyArgs,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FrontierConfig {
    pub mode: Option<FrontierMode>,
    pub checkpoint: Option<PathBuf>,
    /// Context ratios swept in icl mode.
    pub ratios: Vec<f64>,
    #[serde(flatten)]
    pub study: StudyConfig,
}

/// 0.2, 0.3, …, 0.8.
pub fn icl_ratios() -> Vec<f64> {
    (2..=8).map(|i| i as f64 / 10.0).collect()
}

#[derive(Serialize, Deserialize)]
pub struct FrontierRow {
    pub step_or_ratio: f64,
    pub quality: f64,
    pub privacy: f64,
}

pub fn frontier_cmd(args: &FrontierArgs) -> Result<()> {
    let file = args.study.config.as_deref().map(read_config_file).transpose()?;
    let preset = preset_of(args.study.preset, file.as_ref())?;
    let mut ov = args.study.overrides(preset);
    ov.set("mode", args.mode).set("checkpoint", args.checkpoint.as_ref());
    let defaults = FrontierConfig {
        mode: None,
        checkpoint: None,
        ratios: icl_ratios(),
        study: StudyConfig::preset(preset),
    };
    let cfg: FrontierConfig = resolve(&defaults, file.as_ref(), &ov)?;
    match cfg.study.precision {
        Precision::F32 => run_frontier::<f32>(&cfg),
        Precision::F64 => run_frontier::<f64>(&cfg),
    }
}

fn run_frontier<T: Scalar>(cfg: &FrontierConfig) -> Result<()> {
    let out = require_path(&cfg.study.out, "out")?;
    let mode = cfg.mode.ok_or_else(|| usage("missing --mode (dataset-specific or icl)"))?;
    let h = cfg.study.holdout()?;
    let mut rows = Vec::new();
    match mode {
        FrontierMode::DatasetSpecific => {
            let s = &cfg.study;
            let encoder = DefaultEncoder::new(s.encoder_seed, s.model.latent_dim);
            let trained = train_dataset_specific::<T>(&h.train, &encoder, &s.model, &s.schedule, &s.train, &mut ())?;
            for ck in &trained.checkpoints {
                let syn = synthesize(&h.train, &ck.model, &encoder, &s.schedule, &s.synth(s.context_ratio))?;
                let (quality, privacy) = quality_privacy(&syn.table, &h)?;
                println!("step {:>6}: quality {quality:.4} privacy {privacy:.4}", ck.step);
                rows.push(FrontierRow {
                    step_or_ratio: ck.step as f64,
                    quality,
                    privacy,
                });
            }
        }
        FrontierMode::Icl => {
            let path = require_path(&cfg.checkpoint, "checkpoint")?;
            let ck = Checkpoint::<T>::load(&path).with_context(|| format!("loading {}", path.display()))?;
            let encoder = DefaultEncoder::new(ck.encoder_seed, ck.model.config().latent_dim);
            for &r in &cfg.ratios {
                let syn = synthesize(&h.train, &ck.model, &encoder, &ck.schedule, &cfg.study.synth(r))?;
                let (quality, privacy) = quality_privacy(&syn.table, &h)?;
                println!("ratio {r:.2}: quality {quality:.4} privacy {privacy:.4}");
                rows.push(FrontierRow {
                    step_or_ratio: r,
                    quality,
                    privacy,
                });
            }
        }
    }
    write_frontier_rows(&rows, &out)?;
    write_json(&beside(&out, "run_config.json"), cfg)?;
    Ok(())
}

pub fn write_frontier_rows(rows: &[FrontierRow], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("writing {}", path.display()))?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
pub enum AblationVariant {
    /// Pretrain on the target training table alone.
    #[value(name = "s", alias = "S")]
    S,
    /// Pretrain on a corpus without permutation variants.
    #[value(name = "n", alias = "N")]
    N,
}

#[derive(Args, Debug)]
pub struct AblateArgs {
    #[arg(long, value_enum)]
    variant: Option<AblationVariant>,
    /// Task manifest for the corpus of variant N.
    #[arg(long)]
    manifest: Option<PathBuf>,
    #[command(flatten)]
    study: StudyArgs,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AblateConfig {
    pub variant: Option<AblationVariant>,
    pub manifest: Option<PathBuf>,
    /// Pretraining schedule of variant N (variant S uses `train`).
    pub corpus_train: TrainConfig,
    #[serde(flatten)]
    pub study: StudyConfig,
}

pub fn ablate_cmd(args: &AblateArgs) -> Result<()> {
    let file = args.study.config.as_deref().map(read_config_file).transpose()?;
    let preset = preset_of(args.study.preset, file.as_ref())?;
    let mut ov = args.study.overrides(preset);
    ov.set("variant", args.variant).set("manifest", args.manifest.as_ref());
    let defaults = AblateConfig {
        variant: None,
        manifest: None,
        corpus_train: match preset {
            Preset::Desk => TrainConfig::desk(),
            Preset::Paper => TrainConfig::paper(),
        },
        study: StudyConfig::preset(preset),
    };
    let cfg: AblateConfig = resolve(&defaults, file.as_ref(), &ov)?;
    match cfg.study.precision {
        Precision::F32 => run_ablate::<f32>(&cfg),
        Precision::F64 => run_ablate::<f64>(&cfg),
    }
}

fn run_ablate<T: Scalar>(cfg: &AblateConfig) -> Result<()> {
    let out = require_path(&cfg.study.out, "out")?;
    let variant = cfg.variant.ok_or_else(|| usage("missing --variant (s or n)"))?;
    let s = &cfg.study;
    let h = s.holdout()?;
    let encoder = DefaultEncoder::new(s.encoder_seed, s.model.latent_dim);
    let (model, label): (DenoiserModel<T>, &str) = match variant {
        AblationVariant::S => {
            let trained = train_dataset_specific::<T>(&h.train, &encoder, &s.model, &s.schedule, &s.train, &mut ())?;
            (trained.checkpoints.last().expect("at least one checkpoint").model.clone(), "ablation_s")
        }
        AblationVariant::N => {
            let path = require_path(&cfg.manifest, "manifest")?;
            let text = std::fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
            let mut manifest: CorpusManifest =
                serde_json::from_str(&text).map_err(|e| usage(format!("manifest {}: {e}", path.display())))?;
            manifest.permute = false;
            let corpus = build_corpus(&manifest)?;
            let trained = pretrain::<T>(&corpus, &encoder, &s.model, &s.schedule, &cfg.corpus_train, &mut ())?;
            (trained.checkpoints.last().expect("at least one checkpoint").model.clone(), "ablation_n")
        }
    };
    let syn = synthesize(&h.train, &model, &encoder, &s.schedule, &s.synth(s.context_ratio))?;
    let mut report: MetricReport = evaluate(
        &syn.table,
        &EvalSets {
            train: &h.train,
            val: Some(&h.val),
            test: &h.test,
        },
        None,
    )?;
    report.method = Some(label.to_string());
    report.dataset = s.data.as_ref().and_then(|p| p.file_stem()).map(|n| n.to_string_lossy().into_owned());
    report.seed = Some(s.seed);
    write_json(&out, &report)?;
    write_json(&beside(&out, "run_config.json"), cfg)?;
    println!("wrote {label} report to {}", out.display());
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use ctxsynth::corpus::{generate_dataset, Family, TaskSpec};

    #[test]
    fn holdout_partitions_rows() {
        let spec = TaskSpec {
            task_id: "t".into(),
            family: Family::LinearRegression { noise_scale: 0.1 },
            n_rows: 300,
            n_features: 3,
            seed: 1,
        };
        let t = generate_dataset(&spec).unwrap();
        let h = holdout(&t, 200, 4).unwrap();
        assert_eq!((h.train.n_rows(), h.val.n_rows(), h.test.n_rows()), (200, 50, 50));
        let mut all: Vec<String> = [&h.train, &h.val, &h.test]
            .iter()
            .flat_map(|s| (0..s.n_rows()).map(move |i| format!("{:?}", s.row(i))))
            .collect();
        all.sort();
        let mut orig: Vec<String> = (0..t.n_rows()).map(|i| format!("{:?}", t.row(i))).collect();
        orig.sort();
        assert_eq!(all, orig);
        assert!(holdout(&t, 297, 0).is_err());
    }

    #[test]
    fn icl_sweep_covers_point_two_to_point_eight() {
        let r = icl_ratios();
        assert_eq!(r.len(), 7);
        assert_eq!((r[0], r[6]), (0.2, 0.8));
    }
}
