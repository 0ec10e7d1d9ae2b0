//! Synthetic end-to-end fixture: two sinusoids with mild noise, a clean
//! training prefix, a frequency-doubled segment and a single spike.

#![allow(dead_code)]

use std::f64::consts::TAU;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use redlamp::data::{minmax_normalize, window_matrix, LabeledSeries, Matrix, NormalizationScope};
use redlamp::eval::{contaminate, ucr_accuracy, vus, ContaminationSpec, EvalConfig};
use redlamp::score::{score_series, ScoreOptions};
use redlamp::seed::substream;
use redlamp::train::{fit, TrainConfig};
use redlamp::Result;

pub const LEN: usize = 8000;
pub const TRAIN_END: usize = 3000;
pub const WINDOW: usize = 100;
/// Frequency-doubled segment, zero-based half-open.
pub const SPEEDUP: (usize, usize) = (5000, 5400);
pub const SPIKE_AT: usize = 6800;
pub const SPIKE_HEIGHT: f64 = 1.2;
pub const NOISE_STD: f64 = 0.05;

/// Stride between training windows.
pub const TRAIN_STRIDE: usize = 5;
/// Epoch cap of the twelve-class model.
pub const MAX_EPOCHS: usize = 12;

fn clean(t: f64) -> f64 {
    (TAU * t / 50.0).sin() + 0.5 * (TAU * t / 37.0).sin()
}

/// The labeled fixture series for one seed.
pub fn series(seed: u64) -> LabeledSeries {
    let mut rng = substream(seed, &[0xF1]);
    let noise = Normal::new(0.0, NOISE_STD).unwrap();
    let (s, e) = SPEEDUP;
    let mut values = Vec::with_capacity(LEN);
    let mut labels = vec![false; LEN];
    for t in 0..LEN {
        let phase = if (s..e).contains(&t) { (s + 2 * (t - s)) as f64 } else { t as f64 };
        values.push(clean(phase) + noise.sample(&mut rng));
    }
    labels[s..e].fill(true);
    values[SPIKE_AT] += SPIKE_HEIGHT * if rng.random::<bool>() { 1.0 } else { -1.0 };
    labels[SPIKE_AT] = true;
    let values = Matrix::from_vec(1, LEN, values).unwrap();
    let raw = LabeledSeries::new(values, Some(labels), TRAIN_END, "fixture").unwrap();
    minmax_normalize(&raw, NormalizationScope::Full).unwrap()
}

/// Labels of the dominant range only, over the test part.
pub fn dominant_labels() -> Vec<bool> {
    let mut l = vec![false; LEN - TRAIN_END];
    l[SPEEDUP.0 - TRAIN_END..SPEEDUP.1 - TRAIN_END].fill(true);
    l
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Variant {
    Full,
    /// Full model with the given λ.
    LossWeight(f64),
    Binary,
}

impl Variant {
    pub fn name(&self) -> String {
        match self {
            Variant::Full => "full".into(),
            Variant::LossWeight(l) => format!("λ={l}"),
            Variant::Binary => "binary".into(),
        }
    }

    /// Binary mode draws 2 instances per window instead of 12; its epoch cap
    /// and patience are scaled so that both see the same number of optimizer
    /// steps.
    pub fn config(&self, seed: u64) -> TrainConfig {
        let mut cfg = TrainConfig {
            seed,
            max_epochs: MAX_EPOCHS,
            ..TrainConfig::default()
        };
        match *self {
            Variant::Full => {}
            Variant::LossWeight(l) => cfg.loss_weight = l,
            Variant::Binary => {
                cfg.binary_mode = true;
                cfg.max_epochs = MAX_EPOCHS * 6;
                cfg.patience = cfg.patience.map(|p| p * 6);
            }
        }
        cfg
    }
}

#[derive(Debug, Clone)]
pub struct Outcome {
    pub vus_pr: f64,
    pub ucr_accuracy: f64,
    /// Timestep of the highest score.
    pub argmax: usize,
    pub epochs: usize,
}

/// Trains `variant` on the fixture's training windows, optionally
/// contaminated at `ratio` percent, and scores the test part.
pub fn run(seed: u64, variant: Variant, ratio: f64) -> Result<Outcome> {
    let series = series(seed);
    let cfg = variant.config(seed);
    let mut train = window_matrix(&series.train_values(), WINDOW, TRAIN_STRIDE)?.into_windows();
    if ratio > 0.0 {
        train = contaminate(&train, &ContaminationSpec::new(ratio, seed), &cfg.augment)?.windows;
    }
    let outcome = fit(&train, &cfg)?;
    let trace = score_series(&outcome.model, &series.test_values(), &ScoreOptions::default())?;
    let labels = series.test_labels().expect("fixture is labeled");
    let eval = EvalConfig::for_window(WINDOW);
    let (_, vus_pr) = vus(&trace.a, labels, eval.max_buffer)?;
    let ucr = ucr_accuracy(&trace.a, &dominant_labels(), eval.ucr_margin)?;
    let argmax = trace
        .a
        .iter()
        .enumerate()
        .fold(0, |best, (i, &v)| if v > trace.a[best] { i } else { best });
    Ok(Outcome {
        vus_pr,
        ucr_accuracy: ucr,
        argmax: argmax + TRAIN_END,
        epochs: outcome.log.epochs.len(),
    })
}
