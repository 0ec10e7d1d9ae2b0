//! Per-timestep anomaly scores from a trained model.
//!
//! Each window gets a reconstruction error and an anomaly-class mass. Anomaly
//! classes that fire on a large share of the test trace are treated as normal
//! (frequent anomaly adjustment) before both components are min-max scaled and
//! averaged.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::data::{window_matrix, Matrix};
use crate::error::{Error, Result};
use crate::nn::{Model, Tensor};

pub const DEFAULT_FAA_THRESHOLD: f64 = 0.05;
const SCORE_BATCH: usize = 256;

fn check_dims(model: &Model, rows: usize, cols: usize) -> Result<()> {
    let c = model.config();
    if rows != c.input_features || cols != c.window {
        return Err(Error::Config(format!(
            "model expects {}×{} windows, data gives {rows}×{cols}",
            c.input_features, c.window
        )));
    }
    Ok(())
}

fn stack(windows: &[Matrix]) -> Result<Tensor<f32>> {
    let (d, theta) = (windows[0].rows(), windows[0].cols());
    let data = windows
        .iter()
        .flat_map(|w| w.data().iter().map(|&v| v as f32))
        .collect();
    Tensor::from_vec(&[windows.len(), d, theta], data)
}

/// Per-window model outputs.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowOutputs {
    /// Squared reconstruction error summed over the window.
    pub s_mse: Vec<f64>,
    /// Class probabilities, one row per window.
    pub probs: Vec<Vec<f64>>,
    pub embeddings: Vec<Vec<f64>>,
}

/// Runs `model` in evaluation mode over `windows`.
pub fn window_outputs(model: &Model, windows: &[Matrix]) -> Result<WindowOutputs> {
    let mut out = WindowOutputs {
        s_mse: Vec::with_capacity(windows.len()),
        probs: Vec::with_capacity(windows.len()),
        embeddings: Vec::with_capacity(windows.len()),
    };
    for w in windows {
        check_dims(model, w.rows(), w.cols())?;
    }
    let k = model.config().num_classes;
    let e = model.config().embedding_dim;
    for chunk in windows.chunks(SCORE_BATCH) {
        let x = stack(chunk)?;
        let inf = model.infer(&x)?;
        let cells = x.len() / chunk.len();
        let xs = x.data();
        let rs = inf.reconstructions.data();
        for i in 0..chunk.len() {
            let err = (i * cells..(i + 1) * cells)
                .map(|j| {
                    let diff = xs[j] as f64 - rs[j] as f64;
                    diff * diff
                })
                .sum();
            out.s_mse.push(err);
            out.probs
                .push(inf.probs.data()[i * k..(i + 1) * k].iter().map(|&p| p as f64).collect());
            out.embeddings
                .push(inf.embeddings.data()[i * e..(i + 1) * e].iter().map(|&p| p as f64).collect());
        }
    }
    Ok(out)
}

/// `‖X − X̂‖²` over every cell of one window.
pub fn reconstruction_error(model: &Model, window: &Matrix) -> Result<f64> {
    Ok(window_outputs(model, std::slice::from_ref(window))?.s_mse[0])
}

#[derive(Debug, Clone, PartialEq)]
pub struct FaaOutcome {
    pub adjusted: Vec<Vec<f64>>,
    /// Mean probability of every class over all rows.
    pub class_means: Vec<f64>,
    /// Anomaly classes whose column was zeroed.
    pub zeroed: Vec<usize>,
}

/// Zeroes every anomaly-class column (index ≥ 1) whose mean probability over
/// the rows exceeds `threshold`. The normal column is never touched.
pub fn frequent_anomaly_adjustment(probs: &[Vec<f64>], threshold: f64) -> Result<FaaOutcome> {
    if !(threshold > 0.0 && threshold <= 1.0) {
        return Err(Error::Parameter(format!("FAA threshold {threshold} must lie in (0, 1]")));
    }
    let k = probs.first().map_or(0, Vec::len);
    if probs.iter().any(|r| r.len() != k) {
        return Err(Error::Shape("probability rows differ in length".into()));
    }
    let n = probs.len().max(1) as f64;
    let class_means: Vec<f64> = (0..k)
        .map(|c| probs.iter().map(|r| r[c]).sum::<f64>() / n)
        .collect();
    let zeroed: Vec<usize> = (1..k).filter(|&c| class_means[c] > threshold).collect();
    let adjusted = probs
        .iter()
        .map(|r| {
            let mut r = r.clone();
            zeroed.iter().for_each(|&c| r[c] = 0.0);
            r
        })
        .collect();
    Ok(FaaOutcome {
        adjusted,
        class_means,
        zeroed,
    })
}

/// Probability mass outside the normal class.
pub fn anomaly_class_score(row: &[f64]) -> f64 {
    row.iter().skip(1).sum()
}

/// Min-max scaling; a constant (or empty) sequence maps to zeros.
pub fn minmax(values: &[f64]) -> Vec<f64> {
    let (lo, hi) = values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    let span = hi - lo;
    values
        .iter()
        .map(|&v| if span > 0.0 { (v - lo) / span } else { 0.0 })
        .collect()
}

/// `½·minmax(s_mse) + ½·minmax(s_ce)`.
pub fn total_score(s_mse: &[f64], s_ce: &[f64]) -> Result<Vec<f64>> {
    if s_mse.len() != s_ce.len() {
        return Err(Error::Shape(format!(
            "score components differ in length: {} vs {}",
            s_mse.len(),
            s_ce.len()
        )));
    }
    Ok(minmax(s_mse)
        .into_iter()
        .zip(minmax(s_ce))
        .map(|(a, b)| 0.5 * a + 0.5 * b)
        .collect())
}

/// Centered moving average of width `w`; the kernel shrinks at the edges.
pub fn moving_average(values: &[f64], w: usize) -> Vec<f64> {
    let w = w.max(1);
    let n = values.len();
    let mut prefix = vec![0.0; n + 1];
    for (i, v) in values.iter().enumerate() {
        prefix[i + 1] = prefix[i] + v;
    }
    (0..n)
        .map(|i| {
            let from = i.saturating_sub(w / 2);
            let to = (i + w - w / 2).min(n);
            (prefix[to] - prefix[from]) / (to - from) as f64
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScoreOptions {
    /// FAA threshold θ; 1.0 disables the adjustment.
    pub faa_threshold: f64,
    /// Apply a centered moving average of half the window size.
    pub smoothing: bool,
    /// Step between scored windows.
    pub stride: usize,
}

impl Default for ScoreOptions {
    fn default() -> Self {
        ScoreOptions {
            faa_threshold: DEFAULT_FAA_THRESHOLD,
            smoothing: false,
            stride: 1,
        }
    }
}

/// Scores of a test series.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreTrace {
    pub window: usize,
    /// Zero-based last timestep of each scored window.
    pub end_indices: Vec<usize>,
    pub s_mse: Vec<f64>,
    pub probs: Vec<Vec<f64>>,
    pub faa: FaaOutcome,
    pub faa_threshold: f64,
    /// Anomaly-class mass before the adjustment, per window.
    pub s_ce_raw: Vec<f64>,
    /// Anomaly-class mass after the adjustment, per window.
    pub s_ce: Vec<f64>,
    /// Final score per timestep, in [0, 1].
    pub a: Vec<f64>,
}

impl ScoreTrace {
    pub fn len(&self) -> usize {
        self.a.len()
    }

    pub fn is_empty(&self) -> bool {
        self.a.is_empty()
    }

    /// Index of the window whose score timestep `t` carries: the latest window
    /// ending at or before `t`, or the first window for earlier timesteps.
    pub fn window_for(&self, t: usize) -> usize {
        self.end_indices.partition_point(|&e| e <= t).saturating_sub(1)
    }

    /// Writes `t, a, s_mse_raw, s_ce_raw_sum, s_ce_adjusted`; `t` counts from
    /// `offset`.
    pub fn write_csv<W: Write>(&self, writer: W, offset: usize) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["t", "a", "s_mse_raw", "s_ce_raw_sum", "s_ce_adjusted"])?;
        for (t, &a) in self.a.iter().enumerate() {
            let i = self.window_for(t);
            w.write_record([
                (t + offset).to_string(),
                a.to_string(),
                self.s_mse[i].to_string(),
                self.s_ce_raw[i].to_string(),
                self.s_ce[i].to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn faa_report(&self, class_names: &[String]) -> FaaReport {
        let name = |c: usize| class_names.get(c).cloned().unwrap_or_else(|| format!("class{c}"));
        FaaReport {
            threshold: self.faa_threshold,
            classes: self
                .faa
                .class_means
                .iter()
                .enumerate()
                .map(|(c, &mean)| ClassFrequency {
                    index: c,
                    name: name(c),
                    mean,
                    zeroed: self.faa.zeroed.contains(&c),
                })
                .collect(),
            zeroed: self.faa.zeroed.iter().map(|&c| name(c)).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassFrequency {
    pub index: usize,
    pub name: String,
    pub mean: f64,
    pub zeroed: bool,
}

/// Mean class frequencies and the classes removed by the adjustment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FaaReport {
    pub threshold: f64,
    pub classes: Vec<ClassFrequency>,
    pub zeroed: Vec<String>,
}

/// Scores every timestep of `test` (d×T).
pub fn score_series(model: &Model, test: &Matrix, options: &ScoreOptions) -> Result<ScoreTrace> {
    let theta = model.config().window;
    check_dims(model, test.rows(), theta)?;
    if test.cols() < theta {
        return Err(Error::Size(format!(
            "test series of length {} is shorter than the window {theta}",
            test.cols()
        )));
    }
    let ds = window_matrix(test, theta, options.stride)?;
    let outputs = window_outputs(model, ds.windows())?;
    let faa = frequent_anomaly_adjustment(&outputs.probs, options.faa_threshold)?;
    let s_ce_raw: Vec<f64> = outputs.probs.iter().map(|r| anomaly_class_score(r)).collect();
    let s_ce: Vec<f64> = faa.adjusted.iter().map(|r| anomaly_class_score(r)).collect();
    let per_window = total_score(&outputs.s_mse, &s_ce)?;
    let mut trace = ScoreTrace {
        window: theta,
        end_indices: ds.end_indices().to_vec(),
        s_mse: outputs.s_mse,
        probs: outputs.probs,
        faa,
        faa_threshold: options.faa_threshold,
        s_ce_raw,
        s_ce,
        a: Vec::new(),
    };
    let mut a: Vec<f64> = (0..test.cols()).map(|t| per_window[trace.window_for(t)]).collect();
    if options.smoothing {
        a = moving_average(&a, theta / 2);
    }
    trace.a = a;
    Ok(trace)
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;
    use crate::nn::ModelConfig;

    fn small_model(d: usize, theta: usize) -> Model {
        let cfg = ModelConfig {
            conv_filters: vec![4, 4],
            embedding_dim: 6,
            classifier_hidden_dim: 5,
            ..ModelConfig::new(d, theta, 12)
        };
        Model::new(cfg, 3).unwrap()
    }

    fn series(d: usize, t: usize) -> Matrix {
        Matrix::from_vec(d, t, (0..d * t).map(|i| (i as f64 * 0.37).sin()).collect()).unwrap()
    }

    #[test]
    fn faa_examples() {
        let probs = vec![vec![0.9, 0.08, 0.02], vec![0.9, 0.06, 0.04]];
        let out = frequent_anomaly_adjustment(&probs, 0.05).unwrap();
        assert_eq!(out.zeroed, vec![1]);
        assert!((out.class_means[1] - 0.07).abs() < 1e-12);
        assert_eq!(out.adjusted[0], vec![0.9, 0.0, 0.02]);

        let none = frequent_anomaly_adjustment(&probs, 1.0).unwrap();
        assert!(none.zeroed.is_empty());
        assert_eq!(none.adjusted, probs);

        let zero_col = vec![vec![1.0, 0.0], vec![1.0, 0.0]];
        assert_eq!(frequent_anomaly_adjustment(&zero_col, 0.05).unwrap().adjusted, zero_col);
        assert!(frequent_anomaly_adjustment(&probs, 0.0).is_err());
    }

    #[test]
    fn anomaly_class_score_examples() {
        let mut e1 = vec![0.0; 12];
        e1[0] = 1.0;
        assert_eq!(anomaly_class_score(&e1), 0.0);
        assert!((anomaly_class_score(&[1.0 / 12.0; 12]) - 11.0 / 12.0).abs() < 1e-12);
        let zeroed = frequent_anomaly_adjustment(&[vec![0.5, 0.5]], 0.05).unwrap();
        assert_eq!(anomaly_class_score(&zeroed.adjusted[0]), 0.0);
    }

    #[test]
    fn total_score_examples() {
        assert_eq!(total_score(&[0.0, 2.0, 4.0], &[1.0, 1.0, 3.0]).unwrap(), vec![0.0, 0.25, 1.0]);
        assert_eq!(total_score(&[0.0, 2.0, 4.0], &[7.0; 3]).unwrap(), vec![0.0, 0.25, 0.5]);
        let s = [3.0, 1.0, 2.0];
        assert_eq!(total_score(&s, &s).unwrap(), minmax(&s));
        assert!(total_score(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn moving_average_shrinks_at_edges() {
        assert_eq!(moving_average(&[0.0, 2.0, 4.0, 6.0], 2), vec![0.0, 1.0, 3.0, 5.0]);
        assert_eq!(moving_average(&[1.0, 5.0], 1), vec![1.0, 5.0]);
    }

    #[test]
    fn reconstruction_error_matches_manual_sum() {
        let model = small_model(2, 16);
        let w = series(2, 16);
        let inf = model.infer(&stack(std::slice::from_ref(&w)).unwrap()).unwrap();
        let manual: f64 = w
            .data()
            .iter()
            .zip(inf.reconstructions.data())
            .map(|(&x, &r)| (x as f32 as f64 - r as f64).powi(2))
            .sum();
        assert!((reconstruction_error(&model, &w).unwrap() - manual).abs() < 1e-9);
    }

    #[test]
    fn feature_permutation_leaves_error_unchanged() {
        let x = series(2, 5);
        let r = series(2, 5).data().iter().map(|v| v * 0.5).collect::<Vec<_>>();
        let err = |x: &[f64], r: &[f64]| x.iter().zip(r).map(|(a, b)| (a - b).powi(2)).sum::<f64>();
        let swap = |v: &[f64]| [&v[5..], &v[..5]].concat();
        assert!((err(x.data(), &r) - err(&swap(x.data()), &swap(&r))).abs() < 1e-12);
    }

    #[test]
    fn single_window_fills_every_timestep() {
        let model = small_model(1, 16);
        let trace = score_series(&model, &series(1, 16), &ScoreOptions::default()).unwrap();
        assert_eq!(trace.len(), 16);
        assert!(trace.a.iter().all(|&v| v == trace.a[0]));
    }

    #[test]
    fn trace_is_bounded_and_aligned() {
        let model = small_model(1, 16);
        let test = series(1, 80);
        for smoothing in [false, true] {
            let trace = score_series(&model, &test, &ScoreOptions { smoothing, ..Default::default() }).unwrap();
            assert_eq!(trace.len(), 80);
            assert_eq!(trace.end_indices.len(), 65);
            assert!(trace.a.iter().all(|&v| (0.0..=1.0).contains(&v)));
        }
        assert!(matches!(
            score_series(&model, &series(1, 10), &ScoreOptions::default()),
            Err(Error::Size(_))
        ));
        assert!(matches!(
            score_series(&model, &series(2, 40), &ScoreOptions::default()),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn csv_has_fixed_columns() {
        let model = small_model(1, 16);
        let trace = score_series(&model, &series(1, 20), &ScoreOptions::default()).unwrap();
        let mut buf = Vec::new();
        trace.write_csv(&mut buf, 100).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("t,a,s_mse_raw,s_ce_raw_sum,s_ce_adjusted"));
        assert!(lines.next().unwrap().starts_with("100,"));
        assert_eq!(text.lines().count(), 21);
        let report = trace.faa_report(&[]);
        assert_eq!(report.classes.len(), 12);
    }

    #[test]
    fn window_score_depends_only_on_its_own_values() {
        let model = small_model(1, 16);
        let a = series(1, 60);
        let mut b = a.clone();
        for c in 40..60 {
            b.set(0, c, 5.0);
        }
        let ta = window_outputs(&model, &window_matrix(&a, 16, 1).unwrap().into_windows()).unwrap();
        let tb = window_outputs(&model, &window_matrix(&b, 16, 1).unwrap().into_windows()).unwrap();
        // Windows ending before t = 40 see identical values.
        for i in 0..=(39 - 15) {
            assert_eq!(ta.s_mse[i], tb.s_mse[i]);
            assert_eq!(ta.probs[i], tb.probs[i]);
        }
    }

    fn prob_rows() -> impl Strategy<Value = Vec<Vec<f64>>> {
        (2usize..6, 1usize..30).prop_flat_map(|(k, n)| {
            prop::collection::vec(prop::collection::vec(0.0f64..1.0, k), n).prop_map(|rows| {
                rows.into_iter()
                    .map(|r| {
                        let s: f64 = r.iter().sum::<f64>() + 1e-9;
                        r.into_iter().map(|v| v / s).collect()
                    })
                    .collect()
            })
        })
    }

    proptest! {
        #[test]
        fn faa_is_idempotent(rows in prob_rows(), theta in 0.01f64..1.0) {
            let once = frequent_anomaly_adjustment(&rows, theta).unwrap();
            let twice = frequent_anomaly_adjustment(&once.adjusted, theta).unwrap();
            prop_assert_eq!(once.adjusted, twice.adjusted);
        }

        #[test]
        fn faa_zeroes_fewer_classes_at_higher_threshold(rows in prob_rows(), t1 in 0.01f64..1.0, dt in 0.0f64..0.5) {
            let t2 = (t1 + dt).min(1.0);
            let z1 = frequent_anomaly_adjustment(&rows, t1).unwrap().zeroed;
            let z2 = frequent_anomaly_adjustment(&rows, t2).unwrap().zeroed;
            prop_assert!(z2.iter().all(|c| z1.contains(c)));
        }

        #[test]
        fn final_score_ignores_affine_rescaling_of_mse(
            mse in prop::collection::vec(0.0f64..10.0, 2..50),
            scale in 0.01f64..100.0,
            shift in -50.0f64..50.0,
            seed in any::<u64>(),
        ) {
            let ce: Vec<f64> = (0..mse.len()).map(|i| ((i as u64 ^ seed) % 7) as f64).collect();
            let a = total_score(&mse, &ce).unwrap();
            let scaled: Vec<f64> = mse.iter().map(|v| v * scale + shift).collect();
            let b = total_score(&scaled, &ce).unwrap();
            for (x, y) in a.iter().zip(&b) {
                prop_assert!((x - y).abs() < 1e-9);
            }
        }
    }
}
