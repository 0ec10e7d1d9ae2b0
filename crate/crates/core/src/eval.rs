//! Range-based detection metrics, UCR accuracy and training-set contamination.
//!
//! # Range-AUC
//!
//! Point labels are relaxed around every labelled range `[s, e]` with buffer
//! `l`: for `j = 1..=⌊l/2⌋` the positions `s − j` and `e + j` receive weight
//! `sqrt(1 − j/l)`. Weights from neighbouring ranges add up and are clamped to
//! 1; labelled points keep weight 1. With `P` labelled points and relaxed
//! weights `r`, define `P' = (P + Σr)/2` and `N' = T − P'`. At a threshold `τ`
//! the prediction is `score ≥ τ` and
//!
//! ```text
//! TP        = Σ r over predicted points
//! TPR       = min(TP / P', 1)
//! FPR       = (#predicted − TP) / N'
//! precision = TP / #predicted
//! ```
//!
//! Every distinct score is a threshold. ROC area uses trapezoids from (0, 0)
//! through the sweep to (1, 1); PR area is the step sum `Σ ΔTPR · precision`.
//! With `l = 0` both reduce to the ordinary point-wise areas.
//!
//! # VUS
//!
//! Mean of the range-AUC over buffers `l = 0..=L`.
//!
//! # Range F-score
//!
//! Range recall uses existence weight α = 0.2, flat positional bias and
//! cardinality factor `1/x` for a range overlapped by `x` predicted ranges.
//! Range precision uses α = 0 with the same bias and cardinality. Thresholds are
//! the 256 quantiles `k/255` (linear interpolation) of the scores, predicting
//! `score > q`; the best F1 is reported. No predicted range gives precision 0.

use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::augment::{augment_instance, AugmentParams, AugmentationKind};
use crate::data::{label_ranges, Matrix};
use crate::error::{Error, Result};
use crate::seed::substream;

pub const REPORT_SCHEMA_VERSION: u32 = 1;
pub const FSCORE_GRID: usize = 256;
pub const RECALL_EXISTENCE_WEIGHT: f64 = 0.2;

/// Relaxed label weights for buffer `l`.
pub fn relaxed_labels(labels: &[bool], buffer: usize) -> Vec<f64> {
    let n = labels.len();
    let mut r: Vec<f64> = labels.iter().map(|&l| if l { 1.0 } else { 0.0 }).collect();
    if buffer == 0 {
        return r;
    }
    let l = buffer as f64;
    for (s, e) in label_ranges(labels) {
        for j in 1..=buffer / 2 {
            let w = (1.0 - j as f64 / l).sqrt();
            if s >= j {
                r[s - j] += w;
            }
            if e + j < n {
                r[e + j] += w;
            }
        }
    }
    r.iter_mut().for_each(|v| *v = v.min(1.0));
    r
}

fn check_inputs(scores: &[f64], labels: &[bool]) -> Result<usize> {
    if scores.len() != labels.len() {
        return Err(Error::Shape(format!(
            "{} scores for {} labels",
            scores.len(),
            labels.len()
        )));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::Numeric("scores must be finite".into()));
    }
    let p = labels.iter().filter(|&&l| l).count();
    if p == 0 || p == labels.len() {
        return Err(Error::UndefinedMetric(
            "labels must contain both anomalous and normal points".into(),
        ));
    }
    Ok(p)
}

/// `(roc_auc, pr_auc)` with label relaxation over buffer `l`.
pub fn range_auc(scores: &[f64], labels: &[bool], buffer: usize) -> Result<(f64, f64)> {
    let p = check_inputs(scores, labels)? as f64;
    let r = relaxed_labels(labels, buffer);
    let t = scores.len() as f64;
    let p_new = (p + r.iter().sum::<f64>()) / 2.0;
    let n_new = t - p_new;

    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));

    let (mut tp, mut count) = (0.0, 0usize);
    let (mut prev_tpr, mut prev_fpr) = (0.0, 0.0);
    let (mut roc, mut pr) = (0.0, 0.0);
    let mut i = 0;
    while i < order.len() {
        let tau = scores[order[i]];
        while i < order.len() && scores[order[i]] == tau {
            tp += r[order[i]];
            count += 1;
            i += 1;
        }
        let tpr = (tp / p_new).min(1.0);
        let fpr = (count as f64 - tp) / n_new;
        let precision = tp / count as f64;
        roc += (fpr - prev_fpr) * (tpr + prev_tpr) / 2.0;
        pr += (tpr - prev_tpr) * precision;
        prev_tpr = tpr;
        prev_fpr = fpr;
    }
    roc += (1.0 - prev_fpr) * (1.0 + prev_tpr) / 2.0;
    Ok((roc.clamp(0.0, 1.0), pr.clamp(0.0, 1.0)))
}

/// Range-AUC for every buffer `0..=max_buffer`.
pub fn range_auc_curve(scores: &[f64], labels: &[bool], max_buffer: usize) -> Result<Vec<(f64, f64)>> {
    (0..=max_buffer).map(|l| range_auc(scores, labels, l)).collect()
}

/// `(vus_roc, vus_pr)`: mean range-AUC over buffers `0..=max_buffer`.
pub fn vus(scores: &[f64], labels: &[bool], max_buffer: usize) -> Result<(f64, f64)> {
    let curve = range_auc_curve(scores, labels, max_buffer)?;
    let n = curve.len() as f64;
    Ok((
        curve.iter().map(|c| c.0).sum::<f64>() / n,
        curve.iter().map(|c| c.1).sum::<f64>() / n,
    ))
}

fn overlap(a: (usize, usize), b: (usize, usize)) -> usize {
    let lo = a.0.max(b.0);
    let hi = a.1.min(b.1);
    if lo <= hi {
        hi - lo + 1
    } else {
        0
    }
}

/// Range recall and precision of predicted ranges against real ones.
pub fn range_precision_recall(real: &[(usize, usize)], predicted: &[(usize, usize)]) -> (f64, f64) {
    let score_side = |a: &[(usize, usize)], b: &[(usize, usize)], alpha: f64| {
        if a.is_empty() {
            return 0.0;
        }
        let total: f64 = a
            .iter()
            .map(|&r| {
                let overlaps: Vec<usize> = b.iter().map(|&q| overlap(r, q)).filter(|&o| o > 0).collect();
                let covered: usize = overlaps.iter().sum();
                let existence = if covered > 0 { 1.0 } else { 0.0 };
                let cardinality = if overlaps.len() <= 1 { 1.0 } else { 1.0 / overlaps.len() as f64 };
                let size = (r.1 - r.0 + 1) as f64;
                alpha * existence + (1.0 - alpha) * cardinality * covered as f64 / size
            })
            .sum();
        (total / a.len() as f64).min(1.0)
    };
    let recall = score_side(real, predicted, RECALL_EXISTENCE_WEIGHT);
    let precision = score_side(predicted, real, 0.0);
    (precision, recall)
}

/// Linear-interpolation quantile of sorted data.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Best range-based F1 over the quantile threshold grid.
pub fn range_fscore(scores: &[f64], labels: &[bool]) -> Result<f64> {
    check_inputs(scores, labels)?;
    let real = label_ranges(labels);
    let mut sorted = scores.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut thresholds: Vec<f64> = (0..FSCORE_GRID)
        .map(|k| quantile(&sorted, k as f64 / (FSCORE_GRID - 1) as f64))
        .collect();
    thresholds.dedup();
    let mut best: f64 = 0.0;
    for q in thresholds {
        let pred: Vec<bool> = scores.iter().map(|&s| s > q).collect();
        let (p, r) = range_precision_recall(&real, &label_ranges(&pred));
        if p + r > 0.0 {
            best = best.max(2.0 * p * r / (p + r));
        }
    }
    Ok(best)
}

/// 1 when the earliest maximum of `scores` lies within the single labelled
/// range widened by `margin` on both sides, else 0.
pub fn ucr_accuracy(scores: &[f64], labels: &[bool], margin: usize) -> Result<f64> {
    if scores.len() != labels.len() || scores.is_empty() {
        return Err(Error::Shape(format!(
            "{} scores for {} labels",
            scores.len(),
            labels.len()
        )));
    }
    let ranges = label_ranges(labels);
    let &[(s, e)] = ranges.as_slice() else {
        return Err(Error::Usage(format!(
            "UCR accuracy needs exactly one anomaly range, found {}",
            ranges.len()
        )));
    };
    let argmax = scores
        .iter()
        .enumerate()
        .fold(0, |best, (i, &v)| if v > scores[best] { i } else { best });
    let hit = argmax + margin >= s && argmax <= e + margin;
    Ok(if hit { 1.0 } else { 0.0 })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContaminationSpec {
    /// Injected anomalies per 100 training windows.
    pub ratio: f64,
    pub kinds: Vec<AugmentationKind>,
    pub seed: u64,
}

impl ContaminationSpec {
    pub fn new(ratio: f64, seed: u64) -> Self {
        ContaminationSpec {
            ratio,
            kinds: AugmentationKind::anomalies().to_vec(),
            seed,
        }
    }

    /// `⌈ratio/100 · n⌉`.
    pub fn count(&self, n: usize) -> usize {
        (self.ratio * n as f64 / 100.0).ceil() as usize
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Contaminated {
    /// The original windows followed by the injected ones.
    pub windows: Vec<Matrix>,
    /// `(source window, kind)` of every injected window, in order.
    pub injected: Vec<(usize, AugmentationKind)>,
}

/// Appends `⌈ratio/100 · N⌉` pseudo-anomalous windows to `train`.
pub fn contaminate(train: &[Matrix], spec: &ContaminationSpec, params: &AugmentParams) -> Result<Contaminated> {
    if !(spec.ratio >= 0.0 && spec.ratio.is_finite()) {
        return Err(Error::Parameter(format!("contamination ratio {} must be ≥ 0", spec.ratio)));
    }
    let count = spec.count(train.len());
    if count > 0 && (spec.kinds.is_empty() || spec.kinds.contains(&AugmentationKind::Normal)) {
        return Err(Error::Config("contamination kinds must be non-empty anomaly kinds".into()));
    }
    let mut windows = train.to_vec();
    let mut injected = Vec::with_capacity(count);
    for i in 0..count {
        let mut rng = substream(spec.seed, &[i as u64]);
        let kind = spec.kinds[rng.random_range(0..spec.kinds.len())];
        let source = rng.random_range(0..train.len());
        let inst = augment_instance(&train[source], kind, &mut rng, train, source, params)?;
        windows.push(inst.instance);
        injected.push((source, kind));
    }
    Ok(Contaminated { windows, injected })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    /// Largest VUS buffer; also the buffer of the reported range-AUC.
    pub max_buffer: usize,
    /// Tolerance around the labelled range for UCR accuracy.
    pub ucr_margin: usize,
}

impl EvalConfig {
    /// Buffer of half the window size.
    pub fn for_window(window: usize) -> Self {
        EvalConfig {
            max_buffer: window / 2,
            ucr_margin: 0,
        }
    }
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self::for_window(100)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub schema_version: u32,
    pub series: String,
    pub vus_roc: f64,
    pub vus_pr: f64,
    pub range_auc_roc: f64,
    pub range_auc_pr: f64,
    pub range_fscore: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub ucr_accuracy: Option<f64>,
    pub config: EvalConfig,
}

/// All applicable metrics; UCR accuracy only for a single labelled range.
pub fn evaluate(series: &str, scores: &[f64], labels: Option<&[bool]>, config: &EvalConfig) -> Result<EvalReport> {
    let labels = labels.ok_or_else(|| Error::Usage(format!("series `{series}` has no labels")))?;
    let (vus_roc, vus_pr) = vus(scores, labels, config.max_buffer)?;
    let (range_auc_roc, range_auc_pr) = range_auc(scores, labels, config.max_buffer)?;
    let ucr = (label_ranges(labels).len() == 1)
        .then(|| ucr_accuracy(scores, labels, config.ucr_margin))
        .transpose()?;
    Ok(EvalReport {
        schema_version: REPORT_SCHEMA_VERSION,
        series: series.to_string(),
        vus_roc,
        vus_pr,
        range_auc_roc,
        range_auc_pr,
        range_fscore: range_fscore(scores, labels)?,
        ucr_accuracy: ucr,
        config: config.clone(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeanRow {
    pub vus_roc: f64,
    pub vus_pr: f64,
    pub range_auc_roc: f64,
    pub range_auc_pr: f64,
    pub range_fscore: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub ucr_accuracy: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchReport {
    pub schema_version: u32,
    pub rows: Vec<EvalReport>,
    pub mean: MeanRow,
}

/// Per-series rows plus their mean. UCR accuracy is averaged over the rows
/// that have it.
pub fn aggregate(rows: Vec<EvalReport>) -> Result<BatchReport> {
    if rows.is_empty() {
        return Err(Error::Usage("batch evaluation needs at least one series".into()));
    }
    let n = rows.len() as f64;
    let mean = |f: fn(&EvalReport) -> f64| rows.iter().map(f).sum::<f64>() / n;
    let ucr: Vec<f64> = rows.iter().filter_map(|r| r.ucr_accuracy).collect();
    let mean_row = MeanRow {
        vus_roc: mean(|r| r.vus_roc),
        vus_pr: mean(|r| r.vus_pr),
        range_auc_roc: mean(|r| r.range_auc_roc),
        range_auc_pr: mean(|r| r.range_auc_pr),
        range_fscore: mean(|r| r.range_fscore),
        ucr_accuracy: (!ucr.is_empty()).then(|| ucr.iter().sum::<f64>() / ucr.len() as f64),
    };
    Ok(BatchReport {
        schema_version: REPORT_SCHEMA_VERSION,
        rows,
        mean: mean_row,
    })
}

/// `(t, a)` pairs from a score CSV with at least columns `t` and `a`.
pub fn read_score_csv(path: impl AsRef<Path>) -> Result<Vec<(usize, f64)>> {
    let path = path.as_ref();
    let mut reader = csv::Reader::from_path(path)?;
    let headers = reader.headers()?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| Error::Schema(format!("{}: missing column `{name}`", path.display())))
    };
    let (ti, ai) = (col("t")?, col("a")?);
    let mut out = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| Error::parse(path, format!("row {}: {e}", i + 2)))?;
        let t = rec[ti]
            .trim()
            .parse()
            .map_err(|_| Error::parse(path, format!("row {}: bad timestep `{}`", i + 2, &rec[ti])))?;
        let a = rec[ai]
            .trim()
            .parse()
            .map_err(|_| Error::parse(path, format!("row {}: bad score `{}`", i + 2, &rec[ai])))?;
        out.push((t, a));
    }
    Ok(out)
}

/// Scores and labels for the timesteps listed in a score file.
pub fn align_scores(rows: &[(usize, f64)], labels: &[bool]) -> Result<(Vec<f64>, Vec<bool>)> {
    let mut scores = Vec::with_capacity(rows.len());
    let mut aligned = Vec::with_capacity(rows.len());
    for &(t, a) in rows {
        let l = *labels.get(t).ok_or_else(|| {
            Error::Validation(format!("score timestep {t} is beyond the series length {}", labels.len()))
        })?;
        scores.push(a);
        aligned.push(l);
    }
    Ok((scores, aligned))
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;
    use rand::seq::SliceRandom;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;

    /// Pairwise ROC-AUC: P(score⁺ > score⁻) + ½·P(tie).
    fn naive_auc(scores: &[f64], labels: &[bool]) -> f64 {
        let (mut wins, mut pairs) = (0.0, 0.0);
        for (i, &li) in labels.iter().enumerate() {
            if !li {
                continue;
            }
            for (j, &lj) in labels.iter().enumerate() {
                if lj {
                    continue;
                }
                pairs += 1.0;
                if scores[i] > scores[j] {
                    wins += 1.0;
                } else if scores[i] == scores[j] {
                    wins += 0.5;
                }
            }
        }
        wins / pairs
    }

    fn random_trace(rng: &mut ChaCha8Rng, t: usize, levels: u32) -> (Vec<f64>, Vec<bool>) {
        loop {
            let scores: Vec<f64> = (0..t).map(|_| rng.random_range(0..levels) as f64 / levels as f64).collect();
            let labels: Vec<bool> = (0..t).map(|_| rng.random_bool(0.2)).collect();
            if labels.iter().any(|&l| l) && labels.iter().any(|&l| !l) {
                return (scores, labels);
            }
        }
    }

    #[test]
    fn two_point_examples() {
        assert_eq!(range_auc(&[0.1, 0.9], &[false, true], 0).unwrap().0, 1.0);
        assert_eq!(range_auc(&[0.9, 0.1], &[false, true], 0).unwrap().0, 0.0);
        assert!(matches!(range_auc(&[0.1, 0.9], &[true, true], 0), Err(Error::UndefinedMetric(_))));
        assert!(matches!(range_auc(&[0.1, 0.9], &[false, false], 3), Err(Error::UndefinedMetric(_))));
    }

    #[test]
    fn buffer_zero_matches_pairwise_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for i in 0..20 {
            let (s, l) = random_trace(&mut rng, 50 + 37 * i, if i % 2 == 0 { 10 } else { 1_000_000 });
            let (roc, _) = range_auc(&s, &l, 0).unwrap();
            assert!((roc - naive_auc(&s, &l)).abs() < 1e-9);
        }
    }

    #[test]
    fn buffer_zero_pr_matches_average_precision() {
        // Distinct scores: AP = mean over positives of precision at their rank.
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (mut s, l) = random_trace(&mut rng, 300, 1);
        s.iter_mut().for_each(|v| *v = rng.random::<f64>());
        let mut order: Vec<usize> = (0..s.len()).collect();
        order.sort_by(|&a, &b| s[b].total_cmp(&s[a]));
        let p = l.iter().filter(|&&x| x).count() as f64;
        let (mut hits, mut ap) = (0.0, 0.0);
        for (rank, &i) in order.iter().enumerate() {
            if l[i] {
                hits += 1.0;
                ap += hits / (rank + 1) as f64 / p;
            }
        }
        assert!((range_auc(&s, &l, 0).unwrap().1 - ap).abs() < 1e-9);
    }

    #[test]
    fn random_scores_give_half_roc() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let s: Vec<f64> = (0..10_000).map(|_| rng.random()).collect();
        let l: Vec<bool> = (0..10_000).map(|_| rng.random_bool(0.5)).collect();
        assert!((range_auc(&s, &l, 0).unwrap().0 - 0.5).abs() < 0.02);
    }

    #[test]
    fn relaxation_weights() {
        let mut l = vec![false; 12];
        l[5] = true;
        l[6] = true;
        let r = relaxed_labels(&l, 4);
        assert_eq!(r[5], 1.0);
        assert!((r[4] - 0.75f64.sqrt()).abs() < 1e-15);
        assert!((r[3] - 0.5f64.sqrt()).abs() < 1e-15);
        assert!((r[7] - 0.75f64.sqrt()).abs() < 1e-15);
        assert!((r[8] - 0.5f64.sqrt()).abs() < 1e-15);
        assert_eq!((r[2], r[9]), (0.0, 0.0));
        assert_eq!(relaxed_labels(&l, 0), l.iter().map(|&b| b as u8 as f64).collect::<Vec<_>>());
    }

    #[test]
    fn buffer_rewards_near_misses() {
        let mut labels = vec![false; 200];
        labels[100..110].iter_mut().for_each(|l| *l = true);
        let scores: Vec<f64> = (0..200).map(|i| if (110..115).contains(&i) { 1.0 } else { 0.0 }).collect();
        let (roc0, pr0) = range_auc(&scores, &labels, 0).unwrap();
        let (roc20, pr20) = range_auc(&scores, &labels, 20).unwrap();
        assert!(roc20 > roc0 && pr20 > pr0);
    }

    #[test]
    fn perfect_trace_scores_one_everywhere() {
        let mut labels = vec![false; 500];
        labels[200..260].iter_mut().for_each(|l| *l = true);
        let scores: Vec<f64> = labels.iter().map(|&l| l as u8 as f64).collect();
        let r = evaluate("p", &scores, Some(&labels), &EvalConfig::default()).unwrap();
        assert_eq!(r.range_fscore, 1.0);
        assert_eq!(r.ucr_accuracy, Some(1.0));
        assert_eq!(range_auc(&scores, &labels, 0).unwrap(), (1.0, 1.0));
        // The relaxed buffer counts unflagged border points as partial misses.
        assert!(r.vus_roc > 0.9 && r.vus_pr > 0.8, "{r:?}");
        let json = serde_json::to_string(&r).unwrap();
        assert_eq!(serde_json::from_str::<EvalReport>(&json).unwrap(), r);
        assert!(matches!(evaluate("p", &scores, None, &EvalConfig::default()), Err(Error::Usage(_))));
    }

    #[test]
    fn vus_with_zero_buffer_equals_range_auc() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let (s, l) = random_trace(&mut rng, 400, 50);
        assert_eq!(vus(&s, &l, 0).unwrap(), range_auc(&s, &l, 0).unwrap());
        let curve = range_auc_curve(&s, &l, 30).unwrap();
        let (vr, vp) = vus(&s, &l, 30).unwrap();
        assert!((vr - curve.iter().map(|c| c.0).sum::<f64>() / 31.0).abs() < 1e-12);
        assert!((vp - curve.iter().map(|c| c.1).sum::<f64>() / 31.0).abs() < 1e-12);
    }

    #[test]
    fn shuffling_scores_lowers_expected_vus() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let mut labels = vec![false; 1000];
        labels[300..340].iter_mut().for_each(|l| *l = true);
        labels[700..720].iter_mut().for_each(|l| *l = true);
        let scores: Vec<f64> = labels
            .iter()
            .map(|&l| if l { 0.6 } else { 0.0 } + 0.5 * rng.random::<f64>())
            .collect();
        let base = vus(&scores, &labels, 50).unwrap().0;
        let mut shuffled_mean = 0.0;
        for _ in 0..10 {
            let mut s = scores.clone();
            s.shuffle(&mut rng);
            shuffled_mean += vus(&s, &labels, 50).unwrap().0 / 10.0;
        }
        assert!(shuffled_mean < base);
    }

    #[test]
    fn fscore_examples() {
        let labels: Vec<bool> = (0..10).map(|i| (3..6).contains(&i)).collect();
        let perfect: Vec<f64> = labels.iter().map(|&l| l as u8 as f64).collect();
        assert_eq!(range_fscore(&perfect, &labels).unwrap(), 1.0);
        assert_eq!(range_fscore(&[0.0; 10], &labels).unwrap(), 0.0);

        // Predicted [2, 7] covers the real range [3, 5] entirely.
        let (p, r) = range_precision_recall(&[(3, 5)], &[(2, 7)]);
        assert_eq!(r, 1.0);
        assert!((p - 0.5).abs() < 1e-12);
        // Two fragments over one range: existence 0.2 + 0.8 · ½ · (2/3).
        let (_, r) = range_precision_recall(&[(3, 5)], &[(3, 3), (5, 5)]);
        assert!((r - (0.2 + 0.8 * 0.5 * 2.0 / 3.0)).abs() < 1e-12);
        let (p, r) = range_precision_recall(&[(3, 5)], &[]);
        assert_eq!((p, r), (0.0, 0.0));
    }

    #[test]
    fn ucr_accuracy_examples() {
        let mut labels = vec![false; 6000];
        labels[5400..=5600].iter_mut().for_each(|l| *l = true);
        let mut s = vec![0.0; 6000];
        s[5500] = 1.0;
        assert_eq!(ucr_accuracy(&s, &labels, 0).unwrap(), 1.0);
        s[5500] = 0.0;
        s[100] = 1.0;
        assert_eq!(ucr_accuracy(&s, &labels, 0).unwrap(), 0.0);
        assert_eq!(ucr_accuracy(&[0.3; 6000], &labels, 0).unwrap(), 0.0);
        assert_eq!(ucr_accuracy(&[0.3; 6000], &labels, 5400).unwrap(), 1.0);
        labels[10] = true;
        assert!(matches!(ucr_accuracy(&s, &labels, 0), Err(Error::Usage(_))));
    }

    fn windows(n: usize) -> Vec<Matrix> {
        (0..n)
            .map(|t| Matrix::from_vec(1, 20, (0..20).map(|i| ((t + i) as f64 * 0.3).sin()).collect()).unwrap())
            .collect()
    }

    #[test]
    fn contamination_counts() {
        let w = windows(1000);
        let p = AugmentParams::default();
        let none = contaminate(&w, &ContaminationSpec::new(0.0, 1), &p).unwrap();
        assert_eq!(none.windows, w);
        let five = contaminate(&w, &ContaminationSpec::new(5.0, 1), &p).unwrap();
        assert_eq!(five.injected.len(), 50);
        assert_eq!(&five.windows[..1000], &w[..]);
        assert_eq!(five, contaminate(&w, &ContaminationSpec::new(5.0, 1), &p).unwrap());
        assert_eq!(ContaminationSpec::new(2.5, 0).count(3), 1);
    }

    #[test]
    fn contamination_kinds_are_uniform() {
        let w = windows(50);
        let spec = ContaminationSpec::new(4400.0, 7);
        let out = contaminate(&w, &spec, &AugmentParams::default()).unwrap();
        let n = out.injected.len() as f64;
        let expected = n / 11.0;
        let chi2: f64 = AugmentationKind::anomalies()
            .iter()
            .map(|k| {
                let c = out.injected.iter().filter(|(_, kk)| kk == k).count() as f64;
                (c - expected).powi(2) / expected
            })
            .sum();
        // 99.9% quantile of χ² with 10 degrees of freedom.
        assert!(chi2 < 29.59, "chi2 = {chi2}");
    }

    #[test]
    fn aggregate_means() {
        let mk = |v: f64, u: Option<f64>| EvalReport {
            schema_version: 1,
            series: "s".into(),
            vus_roc: v,
            vus_pr: v,
            range_auc_roc: v,
            range_auc_pr: v,
            range_fscore: v,
            ucr_accuracy: u,
            config: EvalConfig::default(),
        };
        let b = aggregate(vec![mk(0.2, Some(1.0)), mk(0.6, None)]).unwrap();
        assert!((b.mean.vus_pr - 0.4).abs() < 1e-12);
        assert_eq!(b.mean.ucr_accuracy, Some(1.0));
    }

    proptest! {
        #[test]
        fn metrics_are_bounded(
            scores in prop::collection::vec(0.0f64..1.0, 20..200),
            seed in any::<u64>(),
            buffer in 0usize..40,
        ) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let n = scores.len();
            let start = rng.random_range(0..n - 5);
            let labels: Vec<bool> = (0..n).map(|i| (start..start + 5).contains(&i)).collect();
            let (roc, pr) = range_auc(&scores, &labels, buffer).unwrap();
            prop_assert!((0.0..=1.0).contains(&roc) && (0.0..=1.0).contains(&pr));
            let f = range_fscore(&scores, &labels).unwrap();
            prop_assert!((0.0..=1.0).contains(&f));
        }

        #[test]
        fn ucr_accuracy_ignores_monotone_transforms(
            scores in prop::collection::vec(-5.0f64..5.0, 10..100),
            start in 0usize..5,
        ) {
            let labels: Vec<bool> = (0..scores.len()).map(|i| (start..start + 4).contains(&i)).collect();
            let transformed: Vec<f64> = scores.iter().map(|&s| s.exp() * 3.0 + 1.0).collect();
            prop_assert_eq!(ucr_accuracy(&scores, &labels, 0).unwrap(), ucr_accuracy(&transformed, &labels, 0).unwrap());
        }
    }
}
