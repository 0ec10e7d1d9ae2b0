//! Run configuration: TOML sections merged from a file, `--set` overrides and
//! dedicated flags. The snapshot written next to every output is the merged
//! result and reproduces the run when passed back with `--config`.

use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context};
use clap::ValueEnum;
use redlamp::augment::{AugmentParams, AugmentationKind};
use redlamp::data::{load_csv, load_ucr, minmax_normalize, CsvSchema, LabeledSeries, NormalizationScope};
use redlamp::eval::EvalConfig;
use redlamp::score::ScoreOptions;
use redlamp::train::{Architecture, TrainConfig};
use serde::{Deserialize, Serialize};

pub const SNAPSHOT_FILE: &str = "config.snapshot";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
#[derive(Default)]
pub struct RunConfig {
    pub seed: u64,
    /// Output directory.
    pub out: Option<PathBuf>,
    /// Model checkpoint read by `score` and `export-embeddings`.
    pub checkpoint: Option<PathBuf>,
    pub data: DataSection,
    pub augment: AugmentParams,
    pub train: TrainSection,
    pub model: Architecture,
    pub score: ScoreOptions,
    pub eval: EvalSection,
}


#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataSection {
    /// `ucr:<path>` or `csv:<path>`.
    pub source: Option<String>,
    pub window: usize,
    /// Stride between training windows; unset picks 1, 10 or 100 so that at
    /// most 10000 windows remain.
    pub train_stride: Option<usize>,
    pub normalization: NormalizationScope,
    /// CSV feature columns; empty takes every column but the label.
    pub features: Vec<String>,
    /// CSV label column.
    pub label: Option<String>,
    /// CSV training boundary; unset treats the whole file as training data.
    pub train_end: Option<usize>,
}

impl Default for DataSection {
    fn default() -> Self {
        DataSection {
            source: None,
            window: 100,
            train_stride: None,
            normalization: NormalizationScope::Full,
            features: Vec::new(),
            label: None,
            train_end: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub loss_weight: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub lr: f64,
    pub weight_decay: f64,
    /// Epochs without validation improvement before stopping; 0 never stops early.
    pub patience: usize,
    pub p_n: f64,
    pub p_a: f64,
    pub use_anomaly_mask: bool,
    pub use_backward_correction: bool,
    pub kinds: Vec<AugmentationKind>,
    pub binary_mode: bool,
    pub validation_fraction: f64,
    pub freeze_augmentation: bool,
    /// Pseudo-anomalous windows appended per 100 training windows.
    pub contamination: f64,
}

impl Default for TrainSection {
    fn default() -> Self {
        let t = TrainConfig::default();
        TrainSection {
            loss_weight: t.loss_weight,
            batch_size: t.batch_size,
            max_epochs: t.max_epochs,
            lr: t.lr,
            weight_decay: t.weight_decay,
            patience: t.patience.unwrap_or(0),
            p_n: t.p_n,
            p_a: t.p_a,
            use_anomaly_mask: t.use_anomaly_mask,
            use_backward_correction: t.use_backward_correction,
            kinds: t.kinds,
            binary_mode: t.binary_mode,
            validation_fraction: t.validation_fraction,
            freeze_augmentation: t.freeze_augmentation,
            contamination: 0.0,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    /// Largest VUS buffer; unset uses half the window.
    pub max_buffer: Option<usize>,
    pub ucr_margin: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Ablation {
    /// No anomaly mask in the reconstruction loss.
    NoAm,
    /// No backward correction (p_n = p_a = 0).
    NoBc,
    /// Classification loss only (λ = 1).
    NoMse,
    /// Reconstruction loss only (λ = 0).
    NoCe,
    /// No frequent anomaly adjustment (θ = 1).
    NoFaa,
    /// One normal and one pooled anomaly class.
    Binary,
}

impl RunConfig {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))
    }

    pub fn snapshot(&self) -> anyhow::Result<String> {
        Ok(toml::to_string(self)?)
    }

    pub fn write_snapshot(&self, dir: &Path) -> anyhow::Result<()> {
        let path = dir.join(SNAPSHOT_FILE);
        std::fs::write(&path, self.snapshot()?).with_context(|| format!("writing {}", path.display()))
    }

    /// Applies `section.key=value`. Values are read as TOML and fall back to
    /// a bare string.
    pub fn set(&mut self, assignment: &str) -> anyhow::Result<()> {
        let (key, raw) = assignment
            .split_once('=')
            .ok_or_else(|| anyhow!("override `{assignment}` is not of the form key=value"))?;
        let (key, raw) = (key.trim(), raw.trim());
        let value = toml::from_str::<toml::Table>(&format!("v = {raw}"))
            .ok()
            .and_then(|mut t| t.remove("v"))
            .unwrap_or_else(|| toml::Value::String(raw.to_string()));
        let mut table = toml::Table::try_from(&*self)?;
        let mut parts: Vec<&str> = key.split('.').collect();
        let leaf = parts.pop().filter(|s| !s.is_empty()).ok_or_else(|| anyhow!("empty key in `{assignment}`"))?;
        let mut node = &mut table;
        for part in parts {
            node = node
                .entry(part)
                .or_insert_with(|| toml::Value::Table(toml::Table::new()))
                .as_table_mut()
                .ok_or_else(|| anyhow!("`{part}` in `{key}` is not a section"))?;
        }
        node.insert(leaf.to_string(), value);
        *self = table.try_into().with_context(|| format!("applying `{assignment}`"))?;
        Ok(())
    }

    pub fn ablate(&mut self, ablation: Ablation) {
        match ablation {
            Ablation::NoAm => self.train.use_anomaly_mask = false,
            Ablation::NoBc => {
                self.train.p_n = 0.0;
                self.train.p_a = 0.0;
            }
            Ablation::NoMse => self.train.loss_weight = 1.0,
            Ablation::NoCe => self.train.loss_weight = 0.0,
            Ablation::NoFaa => self.score.faa_threshold = 1.0,
            Ablation::Binary => self.train.binary_mode = true,
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        let t = &self.train;
        TrainConfig {
            loss_weight: t.loss_weight,
            batch_size: t.batch_size,
            max_epochs: t.max_epochs,
            lr: t.lr,
            weight_decay: t.weight_decay,
            patience: (t.patience > 0).then_some(t.patience),
            p_n: t.p_n,
            p_a: t.p_a,
            seed: self.seed,
            use_anomaly_mask: t.use_anomaly_mask,
            use_backward_correction: t.use_backward_correction,
            kinds: t.kinds.clone(),
            binary_mode: t.binary_mode,
            validation_fraction: t.validation_fraction,
            freeze_augmentation: t.freeze_augmentation,
            augment: self.augment.clone(),
            architecture: self.model.clone(),
        }
    }

    pub fn eval_config(&self) -> EvalConfig {
        EvalConfig {
            max_buffer: self.eval.max_buffer.unwrap_or(self.data.window / 2),
            ucr_margin: self.eval.ucr_margin,
        }
    }
}

/// Loads and normalizes the series named by `source`.
pub fn load_series(data: &DataSection) -> anyhow::Result<LabeledSeries> {
    let source = data.source.as_deref().ok_or_else(|| anyhow!("no data source; pass --data ucr:<path> or csv:<path>"))?;
    let (kind, path) = source
        .split_once(':')
        .ok_or_else(|| anyhow!("data source `{source}` must start with `ucr:` or `csv:`"))?;
    let series = match kind {
        "ucr" => load_ucr(path)?,
        "csv" => {
            let features = if data.features.is_empty() {
                csv_columns(Path::new(path))?
                    .into_iter()
                    .filter(|c| Some(c) != data.label.as_ref())
                    .collect()
            } else {
                data.features.clone()
            };
            let schema = CsvSchema {
                features,
                label: data.label.clone(),
                train_end: data.train_end,
            };
            load_csv(path, &schema)?
        }
        other => bail!("unknown data source kind `{other}`; expected `ucr` or `csv`"),
    };
    Ok(minmax_normalize(&series, data.normalization)?)
}

fn csv_columns(path: &Path) -> anyhow::Result<Vec<String>> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .with_context(|| format!("opening {}", path.display()))?;
    Ok(reader.headers()?.iter().map(str::to_string).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_follow_the_reference_hyperparameters() {
        let c = RunConfig::default();
        let t = c.train_config();
        assert_eq!(t.num_classes().unwrap(), 12);
        assert_eq!((t.p_n, t.p_a, t.loss_weight), (0.1, 0.01, 0.1));
        assert_eq!((t.lr, t.batch_size), (1e-3, 128));
        assert_eq!(c.score.faa_threshold, 0.05);
        assert_eq!(c.data.window, 100);
        assert_eq!(c.eval_config().max_buffer, 50);
    }

    #[test]
    fn snapshot_round_trips() {
        let mut c = RunConfig {
            seed: 7,
            ..RunConfig::default()
        };
        c.data.source = Some("ucr:x_10_20_30.txt".into());
        c.train.kinds = vec![AugmentationKind::Normal, AugmentationKind::Spike];
        c.augment.average_window = Some(9);
        c.eval.max_buffer = Some(3);
        let back: RunConfig = toml::from_str(&c.snapshot().unwrap()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn partial_files_keep_defaults() {
        let c: RunConfig = toml::from_str("seed = 3\n[train]\nmax_epochs = 5\n[augment]\nnoise_std = 0.5\n").unwrap();
        assert_eq!(c.seed, 3);
        assert_eq!(c.train.max_epochs, 5);
        assert_eq!(c.train.batch_size, 128);
        assert_eq!(c.augment.noise_std, 0.5);
        assert_eq!(c.augment.spike_min_amplitude, 0.1);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(toml::from_str::<RunConfig>("[train]\nmax_epoch = 5\n").is_err());
    }

    #[test]
    fn overrides_parse_typed_values_and_strings() {
        let mut c = RunConfig::default();
        c.set("train.max_epochs=3").unwrap();
        c.set("score.smoothing = true").unwrap();
        c.set("data.source=csv:some/file.csv").unwrap();
        c.set("train.kinds=[\"normal\", \"flip\"]").unwrap();
        c.set("data.normalization=train-only").unwrap();
        assert_eq!(c.train.max_epochs, 3);
        assert!(c.score.smoothing);
        assert_eq!(c.data.source.as_deref(), Some("csv:some/file.csv"));
        assert_eq!(c.train.kinds, vec![AugmentationKind::Normal, AugmentationKind::Flip]);
        assert_eq!(c.data.normalization, NormalizationScope::TrainOnly);
        assert!(c.set("train.max_epochs=many").is_err());
        assert!(c.set("train.bogus=1").is_err());
        assert!(c.set("no_equals_sign").is_err());
    }

    #[test]
    fn ablations_set_their_switches() {
        let mut c = RunConfig::default();
        c.ablate(Ablation::NoBc);
        assert_eq!(c.train_config().correction(), (0.0, 0.0));
        c.ablate(Ablation::NoMse);
        assert_eq!(c.train.loss_weight, 1.0);
        c.ablate(Ablation::NoCe);
        assert_eq!(c.train.loss_weight, 0.0);
        c.ablate(Ablation::NoAm);
        assert!(!c.train.use_anomaly_mask);
        c.ablate(Ablation::NoFaa);
        assert_eq!(c.score.faa_threshold, 1.0);
        c.ablate(Ablation::Binary);
        assert_eq!(c.train_config().num_classes().unwrap(), 2);
    }

    #[test]
    fn patience_zero_disables_early_stopping() {
        let mut c = RunConfig::default();
        assert_eq!(c.train_config().patience, Some(10));
        c.train.patience = 0;
        assert_eq!(c.train_config().patience, None);
    }
}
