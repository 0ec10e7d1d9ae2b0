//! Pseudo-anomaly generation.
//!
//! Every training window yields one unmodified copy and one variant per
//! anomaly kind. Each variant carries a one-hot label and a mask marking the
//! cells that were modified.

use std::fmt;
use std::ops::Range;
use std::str::FromStr;

use rand::seq::index::sample;
use rand::Rng;
use rand_distr::{Distribution, Normal as Gaussian, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::data::Matrix;
use crate::error::{Error, Result};
use crate::seed::substream;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AugmentationKind {
    Normal,
    Spike,
    Flip,
    Speedup,
    Noise,
    Cutoff,
    Average,
    Scale,
    Wander,
    Contextual,
    Upsidedown,
    Mixture,
}

impl AugmentationKind {
    pub const ALL: [AugmentationKind; 12] = [
        AugmentationKind::Normal,
        AugmentationKind::Spike,
        AugmentationKind::Flip,
        AugmentationKind::Speedup,
        AugmentationKind::Noise,
        AugmentationKind::Cutoff,
        AugmentationKind::Average,
        AugmentationKind::Scale,
        AugmentationKind::Wander,
        AugmentationKind::Contextual,
        AugmentationKind::Upsidedown,
        AugmentationKind::Mixture,
    ];

    /// The eleven anomaly kinds.
    pub fn anomalies() -> &'static [AugmentationKind] {
        &Self::ALL[1..]
    }

    /// Zero-based label position in the full 12-class layout.
    pub fn index(self) -> usize {
        self as usize
    }

    /// One-based ordinal; Normal is 1.
    pub fn ordinal(self) -> usize {
        self.index() + 1
    }

    pub fn name(self) -> &'static str {
        match self {
            AugmentationKind::Normal => "normal",
            AugmentationKind::Spike => "spike",
            AugmentationKind::Flip => "flip",
            AugmentationKind::Speedup => "speedup",
            AugmentationKind::Noise => "noise",
            AugmentationKind::Cutoff => "cutoff",
            AugmentationKind::Average => "average",
            AugmentationKind::Scale => "scale",
            AugmentationKind::Wander => "wander",
            AugmentationKind::Contextual => "contextual",
            AugmentationKind::Upsidedown => "upsidedown",
            AugmentationKind::Mixture => "mixture",
        }
    }
}

impl fmt::Display for AugmentationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for AugmentationKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().to_ascii_lowercase();
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown augmentation kind `{s}`")))
    }
}

/// Tunable constants of the individual transforms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AugmentParams {
    /// Per-element standard deviation of Noise.
    pub noise_std: f64,
    /// Spike amplitudes below this magnitude are redrawn.
    pub spike_min_amplitude: f64,
    /// Average kernel width; `None` uses a fifth of the window.
    pub average_window: Option<usize>,
    /// Contextual redraws when both `|a − 1|` and `|b|` are below this.
    pub contextual_guard: f64,
}

impl Default for AugmentParams {
    fn default() -> Self {
        AugmentParams {
            noise_std: 0.1f64.sqrt(),
            spike_min_amplitude: 0.1,
            average_window: None,
            contextual_guard: 0.05,
        }
    }
}

impl AugmentParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.noise_std >= 0.0 && self.noise_std.is_finite()) {
            return Err(Error::Config(format!("noise_std {} must be finite and ≥ 0", self.noise_std)));
        }
        if !(self.spike_min_amplitude >= 0.0 && self.spike_min_amplitude < 3.0) {
            return Err(Error::Config(format!(
                "spike_min_amplitude {} must lie in [0, 3)",
                self.spike_min_amplitude
            )));
        }
        if self.average_window == Some(0) {
            return Err(Error::Config("average_window must be at least 1".into()));
        }
        if !(self.contextual_guard >= 0.0 && self.contextual_guard < 1.0) {
            return Err(Error::Config(format!(
                "contextual_guard {} must lie in [0, 1)",
                self.contextual_guard
            )));
        }
        Ok(())
    }
}

/// One generated training instance.
#[derive(Debug, Clone, PartialEq)]
pub struct AugmentedInstance {
    pub instance: Matrix,
    /// One-hot label over the active class layout.
    pub label: Vec<f64>,
    /// 1 where a cell was modified, 0 elsewhere.
    pub mask: Matrix,
    /// Index of the source window in the training set.
    pub source_index: usize,
    pub kind: AugmentationKind,
}

fn one_hot(len: usize, pos: usize) -> Vec<f64> {
    let mut v = vec![0.0; len];
    v[pos] = 1.0;
    v
}

fn std_normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    StandardNormal.sample(rng)
}

fn lerp(seg: &[f64], pos: f64) -> f64 {
    let lo = pos.floor() as usize;
    let hi = (lo + 1).min(seg.len() - 1);
    let frac = pos - lo as f64;
    seg[lo] * (1.0 - frac) + seg[hi] * frac
}

/// Applies `kind` to `row[st..ed)` in place and returns the modified range.
fn apply_row<R: Rng + ?Sized>(
    kind: AugmentationKind,
    row: &mut [f64],
    st: usize,
    ed: usize,
    rng: &mut R,
    donor: Option<&[f64]>,
    params: &AugmentParams,
) -> Result<Range<usize>> {
    use AugmentationKind::*;
    let theta = row.len();
    let len = ed - st;
    let seg = st..ed;
    match kind {
        Normal => return Ok(0..0),
        Spike => {
            let a = loop {
                let a = std_normal(rng);
                if a.abs() >= params.spike_min_amplitude {
                    break a;
                }
            };
            row[st] += a;
            return Ok(st..st + 1);
        }
        Flip => row[seg.clone()].reverse(),
        Speedup => {
            let src = row.to_vec();
            if rng.random_bool(0.5) {
                let mut last = src[st];
                for i in 0..len {
                    let j = st + 2 * i;
                    if j < theta {
                        last = src[j];
                    }
                    row[st + i] = last;
                }
            } else {
                let half = &src[st..ed - len / 2];
                for i in 0..len {
                    let pos = if len > 1 {
                        i as f64 * (half.len() - 1) as f64 / (len - 1) as f64
                    } else {
                        0.0
                    };
                    row[st + i] = lerp(half, pos);
                }
            }
        }
        Noise => {
            let dist = Gaussian::new(0.0, params.noise_std)
                .map_err(|e| Error::Config(format!("noise distribution: {e}")))?;
            row[seg.clone()].iter_mut().for_each(|v| *v += dist.sample(rng));
        }
        Cutoff => {
            let (lo, hi) = row[seg.clone()]
                .iter()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
            let c = if hi > lo { rng.random_range(lo..=hi) } else { lo };
            row[seg.clone()].iter_mut().for_each(|v| *v = c);
        }
        Average => {
            let w = params.average_window.unwrap_or(theta / 5).max(1);
            let src = row[seg.clone()].to_vec();
            for i in 0..len {
                let from = i.saturating_sub(w / 2);
                let to = (i + w - w / 2).min(len);
                let from = from.min(to - 1);
                row[st + i] = src[from..to].iter().sum::<f64>() / (to - from) as f64;
            }
        }
        Scale => {
            let a = 1.0 + std_normal(rng);
            row[seg.clone()].iter_mut().for_each(|v| *v *= a);
        }
        Wander => {
            let a = std_normal(rng);
            for i in 0..len {
                let ramp = if len > 1 { a * i as f64 / (len - 1) as f64 } else { 0.0 };
                row[st + i] += ramp;
            }
            row[st..].iter_mut().for_each(|v| *v += a);
            return Ok(st..theta);
        }
        Contextual => {
            let (a, b) = loop {
                let a = 1.0 + std_normal(rng);
                let b = std_normal(rng);
                if (a - 1.0).abs() >= params.contextual_guard || b.abs() >= params.contextual_guard {
                    break (a, b);
                }
            };
            row[seg.clone()].iter_mut().for_each(|v| *v = a * *v + b);
        }
        Upsidedown => {
            let mean = row[seg.clone()].iter().sum::<f64>() / len as f64;
            row[seg.clone()].iter_mut().for_each(|v| *v = 2.0 * mean - *v);
        }
        Mixture => {
            let donor = donor.ok_or_else(|| Error::Config("Mixture needs a donor window".into()))?;
            row[seg.clone()].copy_from_slice(&donor[seg.clone()]);
        }
    }
    Ok(seg)
}

/// Picks a donor uniformly among `pool` excluding `source` (unless the pool
/// holds nothing else).
fn pick_donor<R: Rng + ?Sized>(pool: &[Matrix], source: usize, rng: &mut R) -> Result<usize> {
    match pool.len() {
        0 => Err(Error::Config("Mixture needs a non-empty donor pool".into())),
        1 => Ok(0),
        n if source < n => {
            let j = rng.random_range(0..n - 1);
            Ok(if j >= source { j + 1 } else { j })
        }
        n => Ok(rng.random_range(0..n)),
    }
}

/// Applies `kind` to feature `dim` over `[st, ed)`.
///
/// Returns the modified window and the masked range of that feature. Mixture
/// draws a donor from `donor_pool`, avoiding index `source`.
#[allow(clippy::too_many_arguments)]
pub fn apply_kind<R: Rng + ?Sized>(
    kind: AugmentationKind,
    window: &Matrix,
    dim: usize,
    st: usize,
    ed: usize,
    rng: &mut R,
    donor_pool: &[Matrix],
    source: usize,
    params: &AugmentParams,
) -> Result<(Matrix, Range<usize>)> {
    if dim >= window.rows() {
        return Err(Error::Parameter(format!("feature {dim} out of range for {} features", window.rows())));
    }
    if !(st < ed && ed <= window.cols()) {
        return Err(Error::Parameter(format!(
            "segment [{st}, {ed}) invalid for window length {}",
            window.cols()
        )));
    }
    let mut out = window.clone();
    let donor = if kind == AugmentationKind::Mixture {
        let j = pick_donor(donor_pool, source, rng)?;
        let d = &donor_pool[j];
        if d.rows() != window.rows() || d.cols() != window.cols() {
            return Err(Error::Shape("donor window shape differs from the source".into()));
        }
        Some(d.row(dim))
    } else {
        None
    };
    let range = apply_row(kind, out.row_mut(dim), st, ed, rng, donor, params)?;
    Ok((out, range))
}

/// Generates one instance of `kind` from `window`, labelled in the full
/// 12-class layout.
pub fn augment_instance<R: Rng + ?Sized>(
    window: &Matrix,
    kind: AugmentationKind,
    rng: &mut R,
    donor_pool: &[Matrix],
    source: usize,
    params: &AugmentParams,
) -> Result<AugmentedInstance> {
    let (d, theta) = (window.rows(), window.cols());
    let mut instance = window.clone();
    let mut mask = Matrix::zeros(d, theta);
    if kind != AugmentationKind::Normal {
        if theta < 2 || d == 0 {
            return Err(Error::Config(format!("cannot augment a {d}×{theta} window")));
        }
        let count = rng.random_range(1..=d);
        let dims = sample(rng, d, count).into_vec();
        for dim in dims {
            let (st, ed) = loop {
                let a = rng.random_range(0..theta);
                let b = rng.random_range(0..theta);
                if a != b {
                    break (a.min(b), a.max(b));
                }
            };
            let (out, range) = apply_kind(kind, &instance, dim, st, ed, rng, donor_pool, source, params)?;
            instance = out;
            for c in range {
                mask.set(dim, c, 1.0);
            }
        }
    }
    Ok(AugmentedInstance {
        instance,
        label: one_hot(AugmentationKind::ALL.len(), kind.index()),
        mask,
        source_index: source,
        kind,
    })
}

/// Sorted, deduplicated class layout. Normal must be present and comes first.
pub fn class_layout(kinds: &[AugmentationKind]) -> Result<Vec<AugmentationKind>> {
    let mut layout = kinds.to_vec();
    layout.sort_unstable();
    layout.dedup();
    if layout.first() != Some(&AugmentationKind::Normal) {
        return Err(Error::Config("augmentation kinds must include normal".into()));
    }
    Ok(layout)
}

/// One instance per `(window, kind)`; labels index the sorted `kinds` layout.
///
/// Instance `(t, k)` draws from its own substream, so the output depends only
/// on `(train, kinds, seed, params)`.
pub fn build_augmented_set(
    train: &[Matrix],
    kinds: &[AugmentationKind],
    seed: u64,
    params: &AugmentParams,
) -> Result<Vec<AugmentedInstance>> {
    params.validate()?;
    let layout = class_layout(kinds)?;
    let mut out = Vec::with_capacity(train.len() * layout.len());
    for (t, window) in train.iter().enumerate() {
        for (pos, &kind) in layout.iter().enumerate() {
            let mut rng = substream(seed, &[t as u64, kind.index() as u64]);
            let mut inst = augment_instance(window, kind, &mut rng, train, t, params)?;
            inst.label = one_hot(layout.len(), pos);
            out.push(inst);
        }
    }
    Ok(out)
}

/// Two-class set: per window one Normal copy (label `[1, 0]`) and one
/// pseudo-anomaly of a uniformly chosen kind (label `[0, 1]`).
pub fn build_binary_set(
    train: &[Matrix],
    kinds: &[AugmentationKind],
    seed: u64,
    params: &AugmentParams,
) -> Result<Vec<AugmentedInstance>> {
    params.validate()?;
    let layout = class_layout(kinds)?;
    let anomalies = &layout[1..];
    if anomalies.is_empty() {
        return Err(Error::Config("binary mode needs at least one anomaly kind".into()));
    }
    let mut out = Vec::with_capacity(train.len() * 2);
    for (t, window) in train.iter().enumerate() {
        let mut rng = substream(seed, &[t as u64, 0]);
        let mut normal = augment_instance(window, AugmentationKind::Normal, &mut rng, train, t, params)?;
        normal.label = vec![1.0, 0.0];
        out.push(normal);
        let mut rng = substream(seed, &[t as u64, 1]);
        let kind = anomalies[rng.random_range(0..anomalies.len())];
        let mut anomaly = augment_instance(window, kind, &mut rng, train, t, params)?;
        anomaly.label = vec![0.0, 1.0];
        out.push(anomaly);
    }
    Ok(out)
}

/// One instance of every kind from `pool[index]`, for visual inspection.
pub fn preview(
    pool: &[Matrix],
    index: usize,
    seed: u64,
    params: &AugmentParams,
) -> Result<Vec<AugmentedInstance>> {
    params.validate()?;
    let window = pool
        .get(index)
        .ok_or_else(|| Error::Parameter(format!("window {index} out of range ({} windows)", pool.len())))?;
    AugmentationKind::ALL
        .iter()
        .map(|&kind| {
            let mut rng = substream(seed, &[index as u64, kind.index() as u64]);
            augment_instance(window, kind, &mut rng, pool, index, params)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;

    fn row(v: &[f64]) -> Matrix {
        Matrix::from_rows(&[v.to_vec()]).unwrap()
    }

    fn apply(kind: AugmentationKind, v: &[f64], st: usize, ed: usize, seed: u64) -> (Vec<f64>, Range<usize>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let w = row(v);
        let pool = vec![w.clone(), row(&vec![9.0; v.len()])];
        let (out, r) = apply_kind(kind, &w, 0, st, ed, &mut rng, &pool, 0, &AugmentParams::default()).unwrap();
        (out.row(0).to_vec(), r)
    }

    fn sine_windows(n: usize, d: usize, theta: usize) -> Vec<Matrix> {
        (0..n)
            .map(|t| {
                let rows: Vec<Vec<f64>> = (0..d)
                    .map(|f| (0..theta).map(|i| ((t + i) as f64 * 0.2 + f as f64).sin()).collect())
                    .collect();
                Matrix::from_rows(&rows).unwrap()
            })
            .collect()
    }

    #[test]
    fn flip_reverses_half_open_slice() {
        assert_eq!(apply(AugmentationKind::Flip, &[1., 2., 3., 4.], 1, 3, 0).0, vec![1., 3., 2., 4.]);
    }

    #[test]
    fn upsidedown_mirrors_around_segment_mean() {
        assert_eq!(apply(AugmentationKind::Upsidedown, &[1., 2., 3.], 0, 3, 0).0, vec![3., 2., 1.]);
    }

    #[test]
    fn spike_changes_exactly_one_cell() {
        for seed in 0..50 {
            let (out, r) = apply(AugmentationKind::Spike, &[0.0; 10], 4, 8, seed);
            assert_eq!(r, 4..5);
            let changed: Vec<usize> = (0..10).filter(|&i| out[i] != 0.0).collect();
            assert_eq!(changed, vec![4]);
            assert!(out[4].abs() >= 0.1);
        }
    }

    #[test]
    fn normal_is_identity_with_empty_mask() {
        let (out, r) = apply(AugmentationKind::Normal, &[1., 2., 3.], 0, 2, 0);
        assert_eq!(out, vec![1., 2., 3.]);
        assert!(r.is_empty());
    }

    #[test]
    fn wander_ramps_then_offsets_suffix() {
        let (out, r) = apply(AugmentationKind::Wander, &[0.0; 8], 2, 5, 3);
        assert_eq!(r, 2..8);
        let a = out[7];
        assert_eq!(&out[..2], &[0.0, 0.0]);
        assert!((out[2] - a).abs() < 1e-12);
        assert!((out[3] - 1.5 * a).abs() < 1e-12);
        assert!((out[4] - 2.0 * a).abs() < 1e-12);
        assert!(out[5..].iter().all(|&v| v == a));
    }

    #[test]
    fn speedup_both_directions_stay_inside_segment() {
        let v: Vec<f64> = (0..10).map(f64::from).collect();
        let mut seen = [false; 2];
        for seed in 0..40 {
            let (out, r) = apply(AugmentationKind::Speedup, &v, 6, 10, seed);
            assert_eq!(r, 6..10);
            assert_eq!(&out[..6], &v[..6]);
            if out[6..] == [6.0, 8.0, 8.0, 8.0] {
                seen[0] = true;
            } else {
                // 4 samples stretched from [6, 7].
                let expected = [6.0, 6.0 + 1.0 / 3.0, 6.0 + 2.0 / 3.0, 7.0];
                for (o, e) in out[6..].iter().zip(expected) {
                    assert!((o - e).abs() < 1e-12, "{out:?}");
                }
                seen[1] = true;
            }
        }
        assert!(seen[0] && seen[1]);
    }

    #[test]
    fn cutoff_sets_one_constant_within_segment_range() {
        let (out, _) = apply(AugmentationKind::Cutoff, &[0., 5., 1., 3., 9.], 1, 4, 2);
        assert!(out[1] == out[2] && out[2] == out[3]);
        assert!((1.0..=5.0).contains(&out[1]));
        assert_eq!((out[0], out[4]), (0.0, 9.0));
    }

    #[test]
    fn average_of_constant_is_constant() {
        let (out, _) = apply(AugmentationKind::Average, &[2.0; 30], 3, 25, 0);
        assert!(out.iter().all(|&v| (v - 2.0).abs() < 1e-12));
    }

    #[test]
    fn average_uses_centered_shrinking_kernel() {
        let v: Vec<f64> = (0..10).map(f64::from).collect();
        // w = 10 / 5 = 2: mean of x[i-1], x[i] inside the segment.
        let (out, _) = apply(AugmentationKind::Average, &v, 2, 6, 0);
        assert_eq!(&out[2..6], &[2.0, 2.5, 3.5, 4.5]);
    }

    #[test]
    fn mixture_copies_the_other_window() {
        let (out, _) = apply(AugmentationKind::Mixture, &[1., 2., 3., 4.], 1, 3, 0);
        assert_eq!(out, vec![1., 9., 9., 4.]);
    }

    #[test]
    fn mixture_without_donors_is_a_configuration_error() {
        let w = row(&[1., 2., 3.]);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let err = apply_kind(AugmentationKind::Mixture, &w, 0, 0, 2, &mut rng, &[], 0, &AugmentParams::default());
        assert!(matches!(err, Err(Error::Config(_))));
    }

    #[test]
    fn kind_names_round_trip() {
        for k in AugmentationKind::ALL {
            assert_eq!(k.name().parse::<AugmentationKind>().unwrap(), k);
        }
        assert_eq!(AugmentationKind::Normal.ordinal(), 1);
        assert_eq!(AugmentationKind::Mixture.ordinal(), 12);
        assert!("bogus".parse::<AugmentationKind>().is_err());
    }

    #[test]
    fn full_set_is_balanced() {
        let train = sine_windows(100, 2, 20);
        let set = build_augmented_set(&train, &AugmentationKind::ALL, 1, &AugmentParams::default()).unwrap();
        assert_eq!(set.len(), 1200);
        for k in 0..12 {
            assert_eq!(set.iter().filter(|i| i.label[k] == 1.0).count(), 100);
        }
    }

    #[test]
    fn subsets_relabel_by_layout_position() {
        let train = sine_windows(50, 1, 16);
        let kinds = [AugmentationKind::Spike, AugmentationKind::Normal];
        let set = build_augmented_set(&train, &kinds, 1, &AugmentParams::default()).unwrap();
        assert_eq!(set.len(), 100);
        assert_eq!(set.iter().filter(|i| i.label == [0.0, 1.0]).count(), 50);
        assert!(set.iter().all(|i| (i.kind == AugmentationKind::Spike) == (i.label[1] == 1.0)));

        let normal_only = build_augmented_set(&train, &[AugmentationKind::Normal], 1, &AugmentParams::default()).unwrap();
        for (inst, w) in normal_only.iter().zip(&train) {
            assert_eq!(&inst.instance, w);
            assert!(inst.mask.data().iter().all(|&m| m == 0.0));
        }
        let err = build_augmented_set(&train, &[AugmentationKind::Spike], 1, &AugmentParams::default());
        assert!(matches!(err, Err(Error::Config(_))));
    }

    #[test]
    fn binary_set_has_one_anomaly_per_window() {
        let train = sine_windows(30, 1, 16);
        let set = build_binary_set(&train, &AugmentationKind::ALL, 4, &AugmentParams::default()).unwrap();
        assert_eq!(set.len(), 60);
        assert_eq!(set.iter().filter(|i| i.label == [0.0, 1.0]).count(), 30);
        assert!(set.iter().all(|i| (i.kind == AugmentationKind::Normal) == (i.label[0] == 1.0)));
    }

    #[test]
    fn univariate_always_selects_feature_zero() {
        let w = sine_windows(1, 1, 12).remove(0);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let inst = augment_instance(&w, AugmentationKind::Scale, &mut rng, &[], 0, &AugmentParams::default()).unwrap();
        assert!(inst.mask.data().contains(&1.0));
        assert_eq!(inst.label.iter().position(|&l| l == 1.0), Some(AugmentationKind::Scale.index()));
    }

    fn windows_strategy() -> impl Strategy<Value = (Vec<Matrix>, u64)> {
        (1usize..4, 4usize..40, 2usize..5, any::<u64>()).prop_flat_map(|(d, theta, n, seed)| {
            prop::collection::vec(prop::collection::vec(-5.0f64..5.0, d * theta), n).prop_map(move |data| {
                let ws = data
                    .into_iter()
                    .map(|v| Matrix::from_vec(d, theta, v).unwrap())
                    .collect();
                (ws, seed)
            })
        })
    }

    proptest! {
        #[test]
        fn unmasked_cells_are_untouched((train, seed) in windows_strategy()) {
            let set = build_augmented_set(&train, &AugmentationKind::ALL, seed, &AugmentParams::default()).unwrap();
            for inst in &set {
                let src = &train[inst.source_index];
                for (i, &m) in inst.mask.data().iter().enumerate() {
                    prop_assert!(m == 0.0 || m == 1.0);
                    if m == 0.0 {
                        prop_assert_eq!(inst.instance.data()[i], src.data()[i]);
                    }
                }
                prop_assert_eq!(inst.label.iter().filter(|&&l| l == 1.0).count(), 1);
                prop_assert_eq!(inst.label.iter().sum::<f64>(), 1.0);
            }
        }

        #[test]
        fn mask_shapes_follow_kind((train, seed) in windows_strategy()) {
            let set = build_augmented_set(&train, &AugmentationKind::ALL, seed, &AugmentParams::default()).unwrap();
            let theta = train[0].cols();
            for inst in &set {
                let mut any = false;
                for r in 0..inst.mask.rows() {
                    let cells: Vec<usize> = (0..theta).filter(|&c| inst.mask.get(r, c) == 1.0).collect();
                    if cells.is_empty() {
                        continue;
                    }
                    any = true;
                    let contiguous = cells.windows(2).all(|p| p[1] == p[0] + 1);
                    prop_assert!(contiguous);
                    match inst.kind {
                        AugmentationKind::Spike => prop_assert_eq!(cells.len(), 1),
                        AugmentationKind::Wander => prop_assert_eq!(*cells.last().unwrap(), theta - 1),
                        _ => prop_assert!(!cells.is_empty()),
                    }
                }
                prop_assert_eq!(any, inst.kind != AugmentationKind::Normal);
            }
        }

        #[test]
        fn same_seed_same_output((train, seed) in windows_strategy()) {
            let a = build_augmented_set(&train, &AugmentationKind::ALL, seed, &AugmentParams::default()).unwrap();
            let b = build_augmented_set(&train, &AugmentationKind::ALL, seed, &AugmentParams::default()).unwrap();
            prop_assert_eq!(a, b);
        }
    }
}
