//! Losses and the training loop.

use std::fmt::Write as _;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::augment::{build_augmented_set, build_binary_set, class_layout, AugmentParams, AugmentationKind, AugmentedInstance};
use crate::data::{split_validation, Matrix};
use crate::error::{Error, Result};
use crate::labels::backward_correct;
use crate::nn::{adamw_step, AdamWConfig, AdamWState, Graph, Mode, Model, ModelConfig, Tensor};
use crate::seed::{derive_seed, substream};

const TAG_INIT: u64 = 1;
const TAG_SPLIT: u64 = 2;
const TAG_VALIDATION: u64 = 3;
const TAG_AUGMENT: u64 = 4;
const TAG_SHUFFLE: u64 = 5;

/// Network shape other than the data-dependent input and class counts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Architecture {
    pub conv_filters: Vec<usize>,
    pub kernel_size: usize,
    pub stride: usize,
    pub dropout: f64,
    pub embedding_dim: usize,
    pub classifier_hidden_dim: usize,
}

impl Default for Architecture {
    fn default() -> Self {
        let m = ModelConfig::new(1, 100, 12);
        Architecture {
            conv_filters: m.conv_filters,
            kernel_size: m.kernel_size,
            stride: m.stride,
            dropout: m.dropout,
            embedding_dim: m.embedding_dim,
            classifier_hidden_dim: m.classifier_hidden_dim,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    /// λ: weight of the cross-entropy term; `1 − λ` weighs reconstruction.
    pub loss_weight: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub lr: f64,
    pub weight_decay: f64,
    /// Epochs without validation improvement before stopping; `None` never stops early.
    pub patience: Option<usize>,
    pub p_n: f64,
    pub p_a: f64,
    pub seed: u64,
    pub use_anomaly_mask: bool,
    pub use_backward_correction: bool,
    pub kinds: Vec<AugmentationKind>,
    pub binary_mode: bool,
    pub validation_fraction: f64,
    /// Reuse epoch 0's augmented set for every epoch.
    pub freeze_augmentation: bool,
    pub augment: AugmentParams,
    pub architecture: Architecture,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            loss_weight: 0.1,
            batch_size: 128,
            max_epochs: 100,
            lr: 1e-3,
            weight_decay: 0.01,
            patience: Some(10),
            p_n: 0.1,
            p_a: 0.01,
            seed: 0,
            use_anomaly_mask: true,
            use_backward_correction: true,
            kinds: AugmentationKind::ALL.to_vec(),
            binary_mode: false,
            validation_fraction: 0.1,
            freeze_augmentation: false,
            augment: AugmentParams::default(),
            architecture: Architecture::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.loss_weight) {
            return Err(Error::Config(format!("loss_weight {} must lie in [0, 1]", self.loss_weight)));
        }
        if self.batch_size < 1 {
            return Err(Error::Config("batch_size must be at least 1".into()));
        }
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return Err(Error::Config(format!("lr {} must be finite and ≥ 0", self.lr)));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return Err(Error::Config(format!("weight_decay {} must be finite and ≥ 0", self.weight_decay)));
        }
        if self.patience == Some(0) {
            return Err(Error::Config("patience must be at least 1".into()));
        }
        self.augment.validate()?;
        let layout = class_layout(&self.kinds)?;
        if self.binary_mode && layout.len() < 2 {
            return Err(Error::Config("binary mode needs at least one anomaly kind".into()));
        }
        let (p_n, p_a) = self.correction();
        backward_correct(&one_hot(self.num_classes()?, 0), p_n, p_a)?;
        Ok(())
    }

    /// Label layout: Normal first, then the active anomaly kinds.
    pub fn class_names(&self) -> Result<Vec<String>> {
        if self.binary_mode {
            return Ok(vec!["normal".into(), "anomaly".into()]);
        }
        Ok(class_layout(&self.kinds)?.iter().map(|k| k.name().to_string()).collect())
    }

    pub fn num_classes(&self) -> Result<usize> {
        Ok(self.class_names()?.len())
    }

    /// `(p_n, p_a)` after the backward-correction switch.
    pub fn correction(&self) -> (f64, f64) {
        if self.use_backward_correction {
            (self.p_n, self.p_a)
        } else {
            (0.0, 0.0)
        }
    }

    pub fn model_config(&self, input_features: usize, window: usize) -> Result<ModelConfig> {
        let a = &self.architecture;
        Ok(ModelConfig {
            input_features,
            window,
            conv_filters: a.conv_filters.clone(),
            kernel_size: a.kernel_size,
            stride: a.stride,
            dropout: a.dropout,
            embedding_dim: a.embedding_dim,
            classifier_hidden_dim: a.classifier_hidden_dim,
            num_classes: self.num_classes()?,
        })
    }
}

fn one_hot(len: usize, pos: usize) -> Vec<f64> {
    let mut v = vec![0.0; len];
    v[pos] = 1.0;
    v
}

fn same_shape(a: &Matrix, b: &Matrix, what: &str) -> Result<()> {
    if (a.rows(), a.cols()) != (b.rows(), b.cols()) {
        return Err(Error::Shape(format!(
            "{what}: {}×{} vs {}×{}",
            a.rows(),
            a.cols(),
            b.rows(),
            b.cols()
        )));
    }
    Ok(())
}

/// Squared reconstruction error summed over cells where `mask` is 0.
pub fn masked_mse(instance: &Matrix, reconstruction: &Matrix, mask: &Matrix) -> Result<f64> {
    same_shape(instance, reconstruction, "masked_mse reconstruction")?;
    same_shape(instance, mask, "masked_mse mask")?;
    Ok(instance
        .data()
        .iter()
        .zip(reconstruction.data())
        .zip(mask.data())
        .map(|((x, r), m)| (1.0 - m) * (x - r) * (x - r))
        .sum())
}

/// `−Σ ỹ·log(max(ŷ, 1e-12))`.
pub fn cross_entropy(soft_label: &[f64], predicted: &[f64]) -> Result<f64> {
    if soft_label.len() != predicted.len() {
        return Err(Error::Shape(format!(
            "cross_entropy: label has {} classes, prediction {}",
            soft_label.len(),
            predicted.len()
        )));
    }
    let floor = crate::nn::graph::PROB_FLOOR;
    Ok(-soft_label
        .iter()
        .zip(predicted)
        .map(|(&y, &p)| y * p.max(floor).ln())
        .sum::<f64>())
}

/// `λ·mean(ce) + (1 − λ)·mean(mse)`.
pub fn total_loss(ce: &[f64], mse: &[f64], loss_weight: f64) -> Result<f64> {
    if ce.is_empty() || ce.len() != mse.len() {
        return Err(Error::Shape(format!(
            "total_loss needs equal non-empty batches, got {} and {}",
            ce.len(),
            mse.len()
        )));
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    Ok(loss_weight * mean(ce) + (1.0 - loss_weight) * mean(mse))
}

/// Losses of one epoch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_ce: f64,
    pub train_mse: f64,
    pub train_total: f64,
    pub val_ce: f64,
    pub val_mse: f64,
    pub val_total: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    /// Validation total loss of the untrained model.
    pub initial_val_total: f64,
    pub epochs: Vec<EpochRecord>,
    /// Epoch whose weights were kept.
    pub best_epoch: usize,
    pub stopped_early: bool,
}

impl TrainLog {
    pub fn best_val_total(&self) -> Option<f64> {
        self.epochs.get(self.best_epoch).map(|e| e.val_total)
    }

    /// One JSON object per epoch.
    pub fn to_jsonl(&self) -> Result<String> {
        let mut out = String::new();
        for e in &self.epochs {
            writeln!(out, "{}", serde_json::to_string(e)?).expect("writing to a String");
        }
        Ok(out)
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: Model,
    pub log: TrainLog,
}

struct Batch {
    x: Tensor<f32>,
    targets: Vec<f32>,
    recon_target: Vec<f32>,
    mask: Vec<f32>,
}

struct Prepared<'a> {
    config: &'a TrainConfig,
    soft: Vec<Vec<f64>>,
    d: usize,
    theta: usize,
}

impl Prepared<'_> {
    fn augment(&self, windows: &[Matrix], seed: u64) -> Result<Vec<AugmentedInstance>> {
        if self.config.binary_mode {
            build_binary_set(windows, &self.config.kinds, seed, &self.config.augment)
        } else {
            build_augmented_set(windows, &self.config.kinds, seed, &self.config.augment)
        }
    }

    fn class_of(inst: &AugmentedInstance) -> usize {
        inst.label.iter().position(|&l| l == 1.0).expect("one-hot label")
    }

    fn batch(&self, set: &[AugmentedInstance], idx: &[usize]) -> Result<Batch> {
        let k = self.soft.len();
        let cells = self.d * self.theta;
        let mut x = Vec::with_capacity(idx.len() * cells);
        let mut targets = Vec::with_capacity(idx.len() * k);
        let mut mask = Vec::with_capacity(idx.len() * cells);
        for &i in idx {
            let inst = &set[i];
            x.extend(inst.instance.data().iter().map(|&v| v as f32));
            targets.extend(self.soft[Self::class_of(inst)].iter().map(|&v| v as f32));
            if self.config.use_anomaly_mask {
                mask.extend(inst.mask.data().iter().map(|&v| v as f32));
            } else {
                mask.extend(std::iter::repeat_n(0.0f32, cells));
            }
        }
        Ok(Batch {
            x: Tensor::from_vec(&[idx.len(), self.d, self.theta], x.clone())?,
            targets,
            recon_target: x,
            mask,
        })
    }

    /// Mean CE, mean masked MSE and total over `set` in evaluation mode.
    fn evaluate(&self, model: &Model, set: &[AugmentedInstance]) -> Result<(f64, f64, f64)> {
        let order: Vec<usize> = (0..set.len()).collect();
        let mut ce = Vec::with_capacity(set.len());
        let mut mse = Vec::with_capacity(set.len());
        let k = self.soft.len();
        let cells = self.d * self.theta;
        for chunk in order.chunks(self.config.batch_size.max(1)) {
            let b = self.batch(set, chunk)?;
            let out = model.infer(&b.x)?;
            let probs = out.probs.data();
            let rec = out.reconstructions.data();
            for r in 0..chunk.len() {
                let p: Vec<f64> = probs[r * k..(r + 1) * k].iter().map(|&v| v as f64).collect();
                let y: Vec<f64> = b.targets[r * k..(r + 1) * k].iter().map(|&v| v as f64).collect();
                ce.push(cross_entropy(&y, &p)?);
                let s: f64 = (r * cells..(r + 1) * cells)
                    .map(|i| {
                        let diff = rec[i] as f64 - b.recon_target[i] as f64;
                        (1.0 - b.mask[i] as f64) * diff * diff
                    })
                    .sum();
                mse.push(s);
            }
        }
        let total = total_loss(&ce, &mse, self.config.loss_weight)?;
        let n = ce.len() as f64;
        Ok((ce.iter().sum::<f64>() / n, mse.iter().sum::<f64>() / n, total))
    }
}

/// Splits `0..n` into batches, folding a trailing single-element batch into
/// its predecessor (training-mode batch norm needs two values per channel).
fn batch_bounds(n: usize, batch: usize) -> Vec<(usize, usize)> {
    let mut out: Vec<(usize, usize)> = (0..n).step_by(batch).map(|s| (s, (s + batch).min(n))).collect();
    if out.len() > 1 && out.last().is_some_and(|&(s, e)| e - s == 1) {
        let (_, e) = out.pop().expect("non-empty");
        out.last_mut().expect("non-empty").1 = e;
    }
    out
}

/// Trains a model on `windows`; see [`fit_with`].
pub fn fit(windows: &[Matrix], config: &TrainConfig) -> Result<TrainOutcome> {
    fit_with(windows, config, |_| {})
}

/// Trains a model, calling `on_epoch` after every epoch.
///
/// A validation subset of the windows is held out before augmentation. The
/// training set is re-augmented every epoch (unless frozen), shuffled and fed
/// through AdamW. The weights with the lowest validation total loss are
/// returned.
pub fn fit_with(
    windows: &[Matrix],
    config: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<TrainOutcome> {
    config.validate()?;
    let first = windows
        .first()
        .ok_or_else(|| Error::Size("no training windows".into()))?;
    let (d, theta) = (first.rows(), first.cols());
    if windows.iter().any(|w| (w.rows(), w.cols()) != (d, theta)) {
        return Err(Error::Shape("training windows differ in shape".into()));
    }
    let seed = config.seed;
    let split = split_validation(windows.len(), config.validation_fraction, derive_seed(seed, &[TAG_SPLIT]))?;
    let train: Vec<Matrix> = split.train.iter().map(|&i| windows[i].clone()).collect();
    let val: Vec<Matrix> = split.validation.iter().map(|&i| windows[i].clone()).collect();

    let k = config.num_classes()?;
    let (p_n, p_a) = config.correction();
    let soft = (0..k)
        .map(|c| backward_correct(&one_hot(k, c), p_n, p_a).map(|s| s.probs))
        .collect::<Result<Vec<_>>>()?;
    let prep = Prepared { config, soft, d, theta };

    let mut model = Model::new(config.model_config(d, theta)?, derive_seed(seed, &[TAG_INIT]))?;
    let val_set = prep.augment(&val, derive_seed(seed, &[TAG_VALIDATION]))?;
    let mut log = TrainLog {
        initial_val_total: prep.evaluate(&model, &val_set)?.2,
        ..Default::default()
    };
    let adamw = AdamWConfig {
        lr: config.lr,
        weight_decay: config.weight_decay,
        ..Default::default()
    };
    let mut state = AdamWState::default();
    let mut best: Option<(f64, Model)> = None;
    let mut since_best = 0;
    let mut frozen: Option<Vec<AugmentedInstance>> = None;

    for epoch in 0..config.max_epochs {
        let set = match &frozen {
            Some(s) => s.clone(),
            None => {
                let aug_epoch = if config.freeze_augmentation { 0 } else { epoch as u64 };
                let s = prep.augment(&train, derive_seed(seed, &[TAG_AUGMENT, aug_epoch]))?;
                if config.freeze_augmentation {
                    frozen = Some(s.clone());
                }
                s
            }
        };
        if set.len() < 2 {
            return Err(Error::Size("training needs at least two augmented instances".into()));
        }
        let mut order: Vec<usize> = (0..set.len()).collect();
        order.shuffle(&mut substream(seed, &[TAG_SHUFFLE, epoch as u64]));

        model.set_mode(Mode::Train);
        let (mut sum_ce, mut sum_mse) = (0.0, 0.0);
        for (b_no, (s, e)) in batch_bounds(order.len(), config.batch_size).into_iter().enumerate() {
            let batch = prep.batch(&set, &order[s..e])?;
            let mut g = Graph::new();
            let params = model.bind(&mut g);
            let x = g.constant(batch.x);
            let out = model.forward(&mut g, &params, x)?;
            let ce = g.cross_entropy(out.probs, &batch.targets)?;
            let mse = g.masked_squared_error(out.reconstruction, &batch.recon_target, &batch.mask)?;
            let lw = config.loss_weight as f32;
            let loss = g.combine(&[(ce, lw), (mse, 1.0 - lw)])?;
            let value = g.value(loss).data()[0];
            if !value.is_finite() {
                return Err(Error::Numeric(format!(
                    "non-finite training loss at epoch {epoch}, batch {b_no}"
                )));
            }
            let rows = (e - s) as f64;
            sum_ce += g.value(ce).data()[0] as f64 * rows;
            sum_mse += g.value(mse).data()[0] as f64 * rows;
            let mut grads = g.backward(loss)?;
            let grads: Vec<Tensor<f32>> = params
                .iter()
                .map(|&p| grads.take(p).expect("leaf gradient"))
                .collect();
            adamw_step(model.params_mut(), &grads, &mut state, &adamw)
                .map_err(|e| Error::Numeric(format!("epoch {epoch}, batch {b_no}: {e}")))?;
        }
        model.set_mode(Mode::Eval);

        let n = set.len() as f64;
        let (train_ce, train_mse) = (sum_ce / n, sum_mse / n);
        let (val_ce, val_mse, val_total) = prep.evaluate(&model, &val_set)?;
        if !val_total.is_finite() {
            return Err(Error::Numeric(format!("non-finite validation loss at epoch {epoch}")));
        }
        let record = EpochRecord {
            epoch,
            train_ce,
            train_mse,
            train_total: config.loss_weight * train_ce + (1.0 - config.loss_weight) * train_mse,
            val_ce,
            val_mse,
            val_total,
        };
        on_epoch(&record);
        log.epochs.push(record);

        if best.as_ref().is_none_or(|(b, _)| val_total < *b) {
            best = Some((val_total, model.clone()));
            log.best_epoch = epoch;
            since_best = 0;
        } else {
            since_best += 1;
            if config.patience.is_some_and(|p| since_best >= p) {
                log.stopped_early = true;
                break;
            }
        }
    }
    let mut model = best.map_or(model, |(_, m)| m);
    model.set_mode(Mode::Eval);
    Ok(TrainOutcome { model, log })
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;
    use crate::nn::checkpoint;

    fn m(rows: &[Vec<f64>]) -> Matrix {
        Matrix::from_rows(rows).unwrap()
    }

    fn tiny_config() -> TrainConfig {
        TrainConfig {
            batch_size: 32,
            max_epochs: 3,
            architecture: Architecture {
                conv_filters: vec![4, 8],
                embedding_dim: 8,
                classifier_hidden_dim: 8,
                ..Default::default()
            },
            ..Default::default()
        }
    }

    fn sine_windows(n: usize, theta: usize) -> Vec<Matrix> {
        (0..n)
            .map(|t| m(&[(0..theta).map(|i| 0.5 + 0.4 * ((t + i) as f64 * 0.3).sin()).collect()]))
            .collect()
    }

    #[test]
    fn masked_mse_examples() {
        let x = m(&[vec![1.0, 2.0]]);
        assert_eq!(masked_mse(&x, &x, &m(&[vec![0.0, 0.0]])).unwrap(), 0.0);
        assert_eq!(masked_mse(&x, &m(&[vec![0.0, 0.0]]), &m(&[vec![1.0, 1.0]])).unwrap(), 0.0);
        assert_eq!(masked_mse(&x, &m(&[vec![0.0, 0.0]]), &m(&[vec![0.0, 1.0]])).unwrap(), 1.0);
        assert!(masked_mse(&x, &m(&[vec![0.0]]), &m(&[vec![0.0]])).is_err());
    }

    #[test]
    fn cross_entropy_examples() {
        let e3 = one_hot(12, 2);
        assert_eq!(cross_entropy(&e3, &e3).unwrap(), 0.0);
        let soft = backward_correct(&e3, 0.1, 0.01).unwrap().probs;
        let uniform = vec![1.0 / 12.0; 12];
        assert!((cross_entropy(&soft, &uniform).unwrap() - 12f64.ln()).abs() < 1e-12);
        assert!(cross_entropy(&e3, &[0.0; 12]).unwrap().is_finite());
        assert!(cross_entropy(&e3, &[0.5; 3]).is_err());
    }

    #[test]
    fn total_loss_examples() {
        assert!((total_loss(&[2.0], &[5.0], 0.1).unwrap() - 4.7).abs() < 1e-12);
        assert_eq!(total_loss(&[2.0, 4.0], &[5.0, 7.0], 0.0).unwrap(), 6.0);
        assert_eq!(total_loss(&[2.0, 4.0], &[5.0, 7.0], 1.0).unwrap(), 3.0);
    }

    #[test]
    fn batch_bounds_fold_single_remainder() {
        assert_eq!(batch_bounds(5, 2), vec![(0, 2), (2, 5)]);
        assert_eq!(batch_bounds(4, 2), vec![(0, 2), (2, 4)]);
        assert_eq!(batch_bounds(3, 128), vec![(0, 3)]);
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig::default().validate().is_ok());
        let bad = TrainConfig {
            loss_weight: 1.5,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let bad = TrainConfig {
            p_n: 0.5,
            p_a: 0.1,
            ..Default::default()
        };
        assert!(matches!(bad.validate(), Err(Error::Parameter(_))));
        let binary = TrainConfig {
            binary_mode: true,
            ..Default::default()
        };
        assert_eq!(binary.num_classes().unwrap(), 2);
    }

    #[test]
    fn one_epoch_runs_without_patience() {
        let cfg = TrainConfig {
            max_epochs: 1,
            patience: None,
            ..tiny_config()
        };
        let out = fit(&sine_windows(20, 16), &cfg).unwrap();
        assert_eq!(out.log.epochs.len(), 1);
        assert_eq!(out.log.to_jsonl().unwrap().lines().count(), 1);
    }

    #[test]
    fn training_is_deterministic() {
        let w = sine_windows(24, 16);
        let a = fit(&w, &tiny_config()).unwrap();
        let b = fit(&w, &tiny_config()).unwrap();
        assert_eq!(checkpoint::to_bytes(&a.model).unwrap(), checkpoint::to_bytes(&b.model).unwrap());
        assert_eq!(a.log, b.log);
    }

    #[test]
    fn validation_loss_improves_on_sine_windows() {
        let cfg = TrainConfig {
            max_epochs: 6,
            lr: 3e-3,
            ..tiny_config()
        };
        let out = fit(&sine_windows(200, 16), &cfg).unwrap();
        assert!(out.log.best_val_total().unwrap() < out.log.initial_val_total);
    }

    #[test]
    fn binary_and_ablated_runs_train() {
        let w = sine_windows(20, 16);
        for cfg in [
            TrainConfig { binary_mode: true, ..tiny_config() },
            TrainConfig { use_anomaly_mask: false, use_backward_correction: false, ..tiny_config() },
            TrainConfig { loss_weight: 0.0, ..tiny_config() },
            TrainConfig { loss_weight: 1.0, freeze_augmentation: true, ..tiny_config() },
        ] {
            let out = fit(&w, &cfg).unwrap();
            assert_eq!(out.model.config().num_classes, cfg.num_classes().unwrap());
        }
    }

    #[test]
    fn empty_input_is_rejected() {
        assert!(matches!(fit(&[], &tiny_config()), Err(Error::Size(_))));
    }

    proptest! {
        #[test]
        fn masked_cells_do_not_affect_loss(
            vals in prop::collection::vec(-3.0f64..3.0, 12),
            rec in prop::collection::vec(-3.0f64..3.0, 12),
            mask in prop::collection::vec(any::<bool>(), 12),
            noise in prop::collection::vec(-10.0f64..10.0, 12),
        ) {
            let x = Matrix::from_vec(2, 6, vals.clone()).unwrap();
            let r = Matrix::from_vec(2, 6, rec).unwrap();
            let mk = Matrix::from_vec(2, 6, mask.iter().map(|&b| b as u8 as f64).collect()).unwrap();
            let perturbed: Vec<f64> = vals.iter().zip(&mask).zip(&noise)
                .map(|((&v, &b), &n)| if b { v + n } else { v })
                .collect();
            let xp = Matrix::from_vec(2, 6, perturbed).unwrap();
            prop_assert_eq!(masked_mse(&x, &r, &mk).unwrap(), masked_mse(&xp, &r, &mk).unwrap());
        }

        #[test]
        fn clamped_cross_entropy_is_finite(p in prop::collection::vec(0.0f64..=1.0, 12), cls in 0usize..12) {
            let soft = backward_correct(&one_hot(12, cls), 0.1, 0.01).unwrap().probs;
            prop_assert!(cross_entropy(&soft, &p).unwrap().is_finite());
        }
    }
}
