//! Command-line interface.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use mainstage_core::cuesheet::{CueConfig, PresetMap};
use mainstage_core::dataset::{dataset_stats, validate_records, Genre, SoftLabel, Split};
use mainstage_core::features::FeatureConfig;
use mainstage_core::model::{LabelMode, ModelConfig, TrainConfig};
use mainstage_core::rng::derive_seed;
use mainstage_core::segmentation::SegmentationConfig;
use mainstage_core::Error;

use crate::checkpoint;
use crate::error::{AppError, AppResult};
use crate::files::{read_csv, read_json, read_wav, write_csv, write_json};
use crate::manifest::{
    build_manifest, feature_file, read_manifest, ClipEntry, LabelSpec, ManifestSource,
};
use crate::pipeline::{self, FEATURES_SIDECAR};
use crate::runner::Parallel;

const STAGE_CLIPS: u64 = 1;
const STAGE_SPLIT: u64 = 2;
const STAGE_INIT: u64 = 3;
const STAGE_SHUFFLE: u64 = 4;

#[derive(Parser, Debug)]
#[command(
    name = "mainstage",
    version,
    about = "House sub-genre classification pipeline"
)]
pub struct Cli {
    /// Base seed for every stochastic stage.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Detect drop segments in a track.
    Analyze {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        seg: SegArgs,
    },
    /// Sample clips from the drops of one or more tracks.
    Clips {
        #[arg(long = "in", required = true, num_args = 1..)]
        inputs: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        seg: SegArgs,
    },
    /// Compute patch tensors for clips (or whole files without --clips).
    Extract {
        #[arg(long = "in", required = true, num_args = 1..)]
        inputs: Vec<PathBuf>,
        #[arg(long)]
        clips: Option<PathBuf>,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        features: FeatureArgs,
    },
    /// Assemble a manifest from clips, track labels and extracted features.
    DatasetBuild {
        #[arg(long)]
        clips: PathBuf,
        /// JSON object mapping track id to a genre name or eight probabilities.
        #[arg(long)]
        labels: PathBuf,
        #[arg(long)]
        features: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0.2)]
        val_fraction: f64,
    },
    /// Print per-genre clip counts.
    DatasetStats {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train a classifier and write a checkpoint directory.
    Train {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        train: TrainArgs,
        #[command(flatten)]
        model: ModelArgs,
    },
    /// Score a checkpoint on one split.
    Eval {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value_t = SplitArg::Val)]
        split: SplitArg,
    },
    /// Write pre-head embeddings as CSV.
    Embed {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value_t = SplitArg::All)]
        split: SplitArg,
    },
    /// Project embeddings onto their principal axes.
    Pca {
        #[arg(long)]
        embeddings: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 3)]
        k: usize,
    },
    /// Build a genre cue sheet for a whole track.
    Cuesheet {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 7.5)]
        window_s: f64,
        #[arg(long, default_value_t = 7.5)]
        hop_s: f64,
        /// Override a preset, as GENRE=PRESET.
        #[arg(long = "preset")]
        presets: Vec<String>,
    },
}

#[derive(Args, Debug, Clone)]
pub struct SegArgs {
    #[arg(long, default_value_t = 1.5)]
    margin_db: f64,
    #[arg(long, default_value_t = 1.0)]
    smooth_s: f64,
    #[arg(long, default_value_t = 0.5)]
    merge_gap_s: f64,
    #[arg(long, default_value_t = 7.5)]
    clip_len_s: f64,
    #[arg(long, default_value_t = 8)]
    max_clips: usize,
}

impl SegArgs {
    fn config(&self, seed: u64) -> SegmentationConfig {
        SegmentationConfig {
            v_margin_db: self.margin_db,
            smooth_window_s: self.smooth_s,
            merge_gap_s: self.merge_gap_s,
            clip_len_s: self.clip_len_s,
            max_clips_per_segment: self.max_clips,
            rng_seed: derive_seed(seed, &[STAGE_CLIPS]),
            ..SegmentationConfig::default()
        }
    }
}

#[derive(Args, Debug, Clone)]
pub struct FeatureArgs {
    #[arg(long, default_value_t = 2048)]
    n_fft: usize,
    /// STFT hop in samples.
    #[arg(long, default_value_t = 512)]
    hop: usize,
    #[arg(long, default_value_t = 224)]
    n_mels: usize,
    /// VQT bandwidth offset in Hz; defaults to the ERB-style value.
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long, default_value_t = 112)]
    patch_hop: usize,
}

impl FeatureArgs {
    fn config(&self) -> FeatureConfig {
        let d = FeatureConfig::default();
        FeatureConfig {
            n_fft: self.n_fft,
            stft_hop: self.hop,
            n_mels: self.n_mels,
            vqt_gamma_hz: self.gamma.unwrap_or(d.vqt_gamma_hz),
            patch_hop_frames: self.patch_hop,
            ..d
        }
    }
}

#[derive(Args, Debug, Clone)]
pub struct TrainArgs {
    #[arg(long, default_value_t = 4)]
    batch_size: usize,
    #[arg(long, default_value_t = 5)]
    epochs: usize,
    #[arg(long, default_value_t = 1e-3)]
    lr: f64,
    #[arg(long, default_value_t = 0.9)]
    beta1: f64,
    #[arg(long, default_value_t = 0.999)]
    beta2: f64,
    #[arg(long, default_value_t = 1e-8)]
    eps: f64,
    /// Global gradient norm cap per batch; 0 disables clipping.
    #[arg(long, default_value_t = 1.0)]
    grad_clip: f64,
    #[arg(long, value_enum, default_value_t = LabelArg::Soft)]
    label_mode: LabelArg,
}

#[derive(Args, Debug, Clone)]
pub struct ModelArgs {
    #[arg(long, default_value_t = 64)]
    embed_dim: usize,
    #[arg(long, default_value_t = 4)]
    heads: usize,
    #[arg(long, default_value_t = 2)]
    layers: usize,
    #[arg(long, default_value_t = 128)]
    ffn_dim: usize,
    /// Output channels per convolution stage.
    #[arg(long, value_delimiter = ',', default_value = "16,32,64")]
    conv_channels: Vec<usize>,
    /// Read out the first patch position instead of a class token.
    #[arg(long)]
    no_class_token: bool,
    #[arg(long, default_value_t = 64)]
    max_seq_len: usize,
}

impl ModelArgs {
    fn config(&self) -> ModelConfig {
        ModelConfig {
            embed_dim: self.embed_dim,
            n_heads: self.heads,
            n_layers: self.layers,
            ffn_dim: self.ffn_dim,
            conv_channels: self.conv_channels.clone(),
            use_class_token: !self.no_class_token,
            max_seq_len: self.max_seq_len,
            ..ModelConfig::default()
        }
    }
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum LabelArg {
    Soft,
    Hard,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum SplitArg {
    Train,
    Val,
    All,
}

impl SplitArg {
    fn split(self) -> Option<Split> {
        match self {
            SplitArg::Train => Some(Split::Train),
            SplitArg::Val => Some(Split::Val),
            SplitArg::All => None,
        }
    }
}

/// Parse `argv`, run the subcommand and return the process exit status.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match dispatch(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

/// Feature settings recorded by `extract` next to the features of a manifest.
fn manifest_features(manifest: &Path) -> AppResult<FeatureConfig> {
    let root = manifest.parent().unwrap_or(Path::new(""));
    if let Some(first) = read_manifest(manifest)?.first() {
        if let Some(dir) = feature_file(root, first).parent() {
            let sidecar = dir.join(FEATURES_SIDECAR);
            if sidecar.is_file() {
                return read_json(&sidecar);
            }
        }
    }
    Ok(FeatureConfig::default())
}

fn read_labels(path: &Path) -> AppResult<BTreeMap<String, SoftLabel>> {
    let raw: BTreeMap<String, LabelSpec> = read_json(path)?;
    raw.into_iter()
        .map(|(k, v)| {
            v.resolve()
                .map(|l| (k.clone(), l))
                .map_err(|e| Error::InvalidLabel(format!("track `{k}`: {e}")).into())
        })
        .collect()
}

fn parse_presets(items: &[String]) -> AppResult<PresetMap> {
    let mut overrides = Vec::new();
    for item in items {
        let (g, p) = item
            .split_once('=')
            .ok_or_else(|| AppError::Usage(format!("preset `{item}` is not GENRE=PRESET")))?;
        let genre = Genre::parse(g.trim())
            .ok_or_else(|| AppError::Usage(format!("unknown genre `{g}`")))?;
        overrides.push((genre, p.trim().to_string()));
    }
    Ok(PresetMap::with_overrides(overrides))
}

fn dispatch(cli: Cli) -> AppResult<()> {
    let seed = cli.seed;
    let runner = Parallel::from_env();
    match cli.command {
        Command::Analyze { input, out, seg } => {
            let audio = read_wav(&input)?;
            let segments = pipeline::analyze_track(&audio, &seg.config(seed))?;
            write_json(&out, &segments)
        }
        Command::Clips { inputs, out, seg } => {
            let cfg = seg.config(seed);
            let mut entries = Vec::new();
            for path in &inputs {
                let audio = read_wav(path)?;
                let clips = pipeline::track_clips(&audio, &cfg)?;
                if clips.is_empty() {
                    eprintln!(
                        "warning: no drop long enough for a clip in {}",
                        path.display()
                    );
                }
                entries.extend(clips.into_iter().map(|(e, _)| e));
            }
            write_json(&out, &entries)
        }
        Command::Extract {
            inputs,
            clips,
            out,
            features,
        } => {
            let cfg = features.config();
            let entries: Option<Vec<ClipEntry>> = clips.as_deref().map(read_json).transpose()?;
            let mut jobs = Vec::new();
            for path in &inputs {
                let audio = read_wav(path)?;
                match &entries {
                    Some(entries) => jobs.extend(pipeline::cut_clips(&audio, entries)?),
                    None => {
                        let id = audio.source_id.clone();
                        jobs.push((id, mainstage_core::audio::AudioClip::whole(audio)));
                    }
                }
            }
            let paths = pipeline::extract_to_dir(&jobs, &cfg, &out, &runner)?;
            println!("wrote {} feature files to {}", paths.len(), out.display());
            Ok(())
        }
        Command::DatasetBuild {
            clips,
            labels,
            features,
            out,
            val_fraction,
        } => {
            let entries: Vec<ClipEntry> = read_json(&clips)?;
            let labels = read_labels(&labels)?;
            let root = out.parent().unwrap_or(Path::new(""));
            let rel = features.strip_prefix(root).unwrap_or(&features);
            let dir = rel.to_string_lossy().replace('\\', "/");
            let records = pipeline::dataset_records(
                &entries,
                &labels,
                &dir,
                val_fraction,
                derive_seed(seed, &[STAGE_SPLIT]),
            )?;
            build_manifest(&out, &records)?;
            println!("{}", dataset_stats(&records));
            Ok(())
        }
        Command::DatasetStats { manifest, out } => {
            let records = read_manifest(&manifest)?;
            validate_records(&records)?;
            let stats = dataset_stats(&records);
            println!("{stats}");
            if let Some(out) = out {
                write_json(&out, &stats)?;
            }
            Ok(())
        }
        Command::Train {
            manifest,
            out,
            train,
            model,
        } => {
            let model_cfg = model.config();
            let features = manifest_features(&manifest)?;
            let tc = TrainConfig {
                batch_size: train.batch_size,
                epochs: train.epochs,
                learning_rate: train.lr,
                adam_beta1: train.beta1,
                adam_beta2: train.beta2,
                adam_eps: train.eps,
                grad_clip_norm: train.grad_clip,
                shuffle_seed: derive_seed(seed, &[STAGE_SHUFFLE]),
                init_seed: derive_seed(seed, &[STAGE_INIT]),
                label_mode: match train.label_mode {
                    LabelArg::Soft => LabelMode::Soft,
                    LabelArg::Hard => LabelMode::Hard,
                },
            };
            let train_set = ManifestSource::open(&manifest, Some(Split::Train), features.clone())?;
            let val_set = ManifestSource::open(&manifest, Some(Split::Val), features.clone())?;
            let val = (!val_set.records.is_empty()).then_some(&val_set);
            let outcome = pipeline::train_model(&train_set, val, &model_cfg, &tc, &runner)?;
            for e in &outcome.log {
                match e.val_weighted_f1 {
                    Some(f1) => println!(
                        "epoch {}: train loss {:.4}, val weighted F1 {:.4}",
                        e.epoch, e.train_loss, f1
                    ),
                    None => println!("epoch {}: train loss {:.4}", e.epoch, e.train_loss),
                }
            }
            checkpoint::save(&out, &outcome.params, &model_cfg, &features, &tc)?;
            write_json(&out.join("train_log.json"), &outcome.log)
        }
        Command::Eval {
            manifest,
            checkpoint,
            out,
            split,
        } => {
            let ckpt = checkpoint::load(&checkpoint)?;
            let source =
                ManifestSource::open(&manifest, split.split(), ckpt.meta.features.clone())?;
            let ev = pipeline::evaluate_checkpoint(&ckpt, &source, &runner)?;
            println!(
                "weighted precision {:.4}, recall {:.4}, F1 {:.4} over {} clips",
                ev.report.weighted_precision,
                ev.report.weighted_recall,
                ev.report.weighted_f1,
                ev.report.total
            );
            write_json(&out, &ev)
        }
        Command::Embed {
            manifest,
            checkpoint,
            out,
            split,
        } => {
            let ckpt = checkpoint::load(&checkpoint)?;
            let source =
                ManifestSource::open(&manifest, split.split(), ckpt.meta.features.clone())?;
            let set = pipeline::embed_checkpoint(&ckpt, &source, &runner)?;
            let mut header = vec!["clip_id".to_string(), "truth".to_string()];
            header.extend((0..set.dim).map(|i| format!("e{i}")));
            let rows: Vec<_> = set
                .rows
                .into_iter()
                .map(|r| (r.clip_id, r.truth.slug().to_string(), r.embedding))
                .collect();
            write_csv(&out, &header, &rows)
        }
        Command::Pca { embeddings, out, k } => {
            let rows = read_csv(&embeddings)?;
            let vectors: Vec<Vec<f64>> = rows.iter().map(|r| r.2.clone()).collect();
            let pca = mainstage_core::eval::pca_project(&vectors, k)?;
            if pca.rank_deficient {
                eprintln!("warning: data has rank {} < {k}", pca.components.len());
            }
            let ratios: Vec<String> = pca
                .explained_variance_ratio
                .iter()
                .map(|r| format!("{r:.6}"))
                .collect();
            println!("explained variance ratios: {}", ratios.join(" "));
            let mut header = vec!["clip_id".to_string(), "truth".to_string()];
            header.extend((1..=k).map(|i| format!("pc{i}")));
            let out_rows: Vec<_> = rows
                .into_iter()
                .zip(pca.projected)
                .map(|((id, truth, _), p)| (id, truth, p))
                .collect();
            write_csv(&out, &header, &out_rows)
        }
        Command::Cuesheet {
            input,
            checkpoint,
            out,
            window_s,
            hop_s,
            presets,
        } => {
            let presets = parse_presets(&presets)?;
            let ckpt = checkpoint::load(&checkpoint)?;
            let track = read_wav(&input)?;
            let sheet = pipeline::cuesheet_for(
                &track,
                &ckpt,
                &CueConfig { window_s, hop_s },
                &presets,
                &runner,
            )?;
            write_json(&out, &sheet)
        }
    }
}
