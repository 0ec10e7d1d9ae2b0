use std::fmt::Write as _;
use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context};
use redlamp::augment::{build_augmented_set, preview, AugmentationKind};
use redlamp::data::{choose_ucr_stride, window_matrix, LabeledSeries, Matrix, WindowedDataset};
use redlamp::eval::{aggregate, align_scores, contaminate, evaluate, read_score_csv, ContaminationSpec, EvalReport};
use redlamp::nn::{checkpoint, Model};
use redlamp::score::{score_series, window_outputs};
use redlamp::train::fit_with;
use serde::Deserialize;

use crate::config::{load_series, RunConfig};
use crate::svg::score_plot;

pub const CHECKPOINT_FILE: &str = "model.ckpt";
pub const TRAIN_LOG_FILE: &str = "train.log";
pub const SCORES_FILE: &str = "scores.csv";
pub const FAA_FILE: &str = "faa.json";
pub const PLOT_FILE: &str = "scores.svg";
pub const EVAL_FILE: &str = "eval.json";
pub const BATCH_FILE: &str = "batch.json";
pub const CONTAMINATED_FILE: &str = "contaminated.csv";
pub const PREVIEW_FILE: &str = "preview.txt";
pub const EMBEDDINGS_FILE: &str = "embeddings.csv";

fn create_out(dir: &Path) -> anyhow::Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn create(path: &Path) -> anyhow::Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?))
}

fn train_windows(cfg: &RunConfig, series: &LabeledSeries) -> anyhow::Result<WindowedDataset> {
    let theta = cfg.data.window;
    let stride = match cfg.data.train_stride {
        Some(s) => s,
        None => choose_ucr_stride(series.train_end, theta)?,
    };
    Ok(window_matrix(&series.train_values(), theta, stride)?)
}

/// The part of the series that gets scored and its first timestep: the test
/// part, or the whole series when there is none.
fn scored_part(series: &LabeledSeries) -> (Matrix, usize) {
    if series.train_end < series.len() {
        (series.test_values(), series.train_end)
    } else {
        (series.values.clone(), 0)
    }
}

fn load_model(path: &Path) -> anyhow::Result<Model> {
    let file = File::open(path).with_context(|| format!("opening checkpoint {}", path.display()))?;
    Ok(checkpoint::read(BufReader::new(file))?)
}

fn checkpoint_path(cfg: &RunConfig, out: &Path) -> PathBuf {
    cfg.checkpoint.clone().unwrap_or_else(|| out.join(CHECKPOINT_FILE))
}

fn check_window(cfg: &RunConfig, model: &Model) -> anyhow::Result<()> {
    let w = model.config().window;
    if w != cfg.data.window {
        bail!(redlamp::Error::Config(format!(
            "checkpoint window {w} differs from configured window {}",
            cfg.data.window
        )));
    }
    Ok(())
}

pub fn train(cfg: &RunConfig, out: &Path) -> anyhow::Result<()> {
    let series = load_series(&cfg.data)?;
    let mut windows = train_windows(cfg, &series)?.into_windows();
    if cfg.train.contamination > 0.0 {
        let spec = ContaminationSpec::new(cfg.train.contamination, cfg.seed);
        let c = contaminate(&windows, &spec, &cfg.augment)?;
        eprintln!("appended {} contaminating windows", c.injected.len());
        windows = c.windows;
    }
    let tc = cfg.train_config();
    eprintln!("training on {} windows of {}", windows.len(), series.name);
    let outcome = fit_with(&windows, &tc, |e| {
        eprintln!(
            "epoch {:>3}  train {:.5}  val {:.5} (ce {:.5}, mse {:.5})",
            e.epoch, e.train_total, e.val_total, e.val_ce, e.val_mse
        )
    })?;
    create_out(out)?;
    let mut w = create(&out.join(CHECKPOINT_FILE))?;
    checkpoint::write(&outcome.model, &mut w)?;
    w.flush()?;
    fs::write(out.join(TRAIN_LOG_FILE), outcome.log.to_jsonl()?)?;
    cfg.write_snapshot(out)?;
    eprintln!(
        "best epoch {:?}, wrote {}",
        outcome.log.best_epoch,
        out.join(CHECKPOINT_FILE).display()
    );
    Ok(())
}

pub fn score(cfg: &RunConfig, out: &Path) -> anyhow::Result<()> {
    let model = load_model(&checkpoint_path(cfg, out))?;
    check_window(cfg, &model)?;
    let names = cfg.train_config().class_names()?;
    if names.len() != model.config().num_classes {
        bail!(redlamp::Error::Config(format!(
            "checkpoint has {} classes but the configuration names {}",
            model.config().num_classes,
            names.len()
        )));
    }
    let series = load_series(&cfg.data)?;
    let (values, offset) = scored_part(&series);
    let trace = score_series(&model, &values, &cfg.score)?;
    create_out(out)?;
    trace.write_csv(create(&out.join(SCORES_FILE))?, offset)?;
    fs::write(out.join(FAA_FILE), serde_json::to_string_pretty(&trace.faa_report(&names))?)?;
    let labels = series.labels.as_deref().map(|l| &l[offset..]);
    fs::write(out.join(PLOT_FILE), score_plot(&series.name, &trace.a, offset, labels))?;
    cfg.write_snapshot(out)?;
    eprintln!("scored {} timesteps into {}", trace.len(), out.join(SCORES_FILE).display());
    Ok(())
}

fn evaluate_one(cfg: &RunConfig, scores: &Path) -> anyhow::Result<EvalReport> {
    let series = load_series(&cfg.data)?;
    let labels = series
        .labels
        .as_deref()
        .ok_or_else(|| redlamp::Error::Usage(format!("series `{}` has no labels", series.name)))?;
    let rows = read_score_csv(scores)?;
    let (a, l) = align_scores(&rows, labels)?;
    Ok(evaluate(&series.name, &a, Some(&l), &cfg.eval_config())?)
}

#[derive(Debug, Deserialize)]
struct ManifestRow {
    series: String,
    scores: PathBuf,
}

pub fn evaluate_cmd(cfg: &RunConfig, out: &Path, scores: Option<&Path>, manifest: Option<&Path>) -> anyhow::Result<()> {
    create_out(out)?;
    let json = match manifest {
        Some(manifest) => {
            let base = manifest.parent().unwrap_or(Path::new(""));
            let mut reader = csv::ReaderBuilder::new()
                .trim(csv::Trim::All)
                .from_path(manifest)
                .with_context(|| format!("opening manifest {}", manifest.display()))?;
            let mut reports = Vec::new();
            for row in reader.deserialize() {
                let row: ManifestRow = row.with_context(|| format!("reading manifest {}", manifest.display()))?;
                let (kind, path) = row
                    .series
                    .split_once(':')
                    .ok_or_else(|| anyhow!("manifest series `{}` must start with `ucr:` or `csv:`", row.series))?;
                let mut c = cfg.clone();
                c.data.source = Some(format!("{kind}:{}", base.join(path).display()));
                reports.push(evaluate_one(&c, &base.join(&row.scores))?);
            }
            let batch = aggregate(reports)?;
            let json = serde_json::to_string_pretty(&batch)?;
            fs::write(out.join(BATCH_FILE), &json)?;
            json
        }
        None => {
            let scores = scores.map(Path::to_path_buf).unwrap_or_else(|| out.join(SCORES_FILE));
            let report = evaluate_one(cfg, &scores)?;
            let json = serde_json::to_string_pretty(&report)?;
            fs::write(out.join(EVAL_FILE), &json)?;
            json
        }
    };
    cfg.write_snapshot(out)?;
    println!("{json}");
    Ok(())
}

fn push_values(line: &mut String, values: impl IntoIterator<Item = f64>) {
    for v in values {
        let _ = write!(line, ",{v}");
    }
}

pub fn contaminate_cmd(cfg: &RunConfig, out: &Path) -> anyhow::Result<()> {
    let series = load_series(&cfg.data)?;
    let windows = train_windows(cfg, &series)?.into_windows();
    let spec = ContaminationSpec::new(cfg.train.contamination, cfg.seed);
    let c = contaminate(&windows, &spec, &cfg.augment)?;
    create_out(out)?;
    let mut w = create(&out.join(CONTAMINATED_FILE))?;
    let cells = windows.first().map_or(0, |m| m.data().len());
    let mut header = String::from("id,source,kind");
    for i in 0..cells {
        let _ = write!(header, ",v{i}");
    }
    writeln!(w, "{header}")?;
    for (id, m) in c.windows.iter().enumerate() {
        let (source, kind) = match id.checked_sub(windows.len()) {
            Some(j) => c.injected[j],
            None => (id, AugmentationKind::Normal),
        };
        let mut line = format!("{id},{source},{kind}");
        push_values(&mut line, m.data().iter().copied());
        writeln!(w, "{line}")?;
    }
    w.flush()?;
    cfg.write_snapshot(out)?;
    eprintln!(
        "appended {} of {} windows at ratio {}%",
        c.injected.len(),
        c.windows.len(),
        spec.ratio
    );
    Ok(())
}

pub fn augment_preview(cfg: &RunConfig, out: &Path, index: usize) -> anyhow::Result<()> {
    let series = load_series(&cfg.data)?;
    let windows = train_windows(cfg, &series)?.into_windows();
    let instances = preview(&windows, index, cfg.seed, &cfg.augment)?;
    let original = &windows[index];
    let mut text = String::new();
    for inst in &instances {
        let _ = writeln!(text, "[{}]", inst.kind);
        for f in 0..original.rows() {
            for (role, row) in [
                ("original", original.row(f)),
                ("augmented", inst.instance.row(f)),
                ("mask", inst.mask.row(f)),
            ] {
                let mut line = format!("{role}.{f}");
                push_values(&mut line, row.iter().copied());
                let _ = writeln!(text, "{line}");
            }
        }
        let _ = writeln!(text);
    }
    create_out(out)?;
    fs::write(out.join(PREVIEW_FILE), text)?;
    cfg.write_snapshot(out)?;
    Ok(())
}

pub fn export_embeddings(cfg: &RunConfig, out: &Path, augmented: bool) -> anyhow::Result<()> {
    let model = load_model(&checkpoint_path(cfg, out))?;
    check_window(cfg, &model)?;
    let series = load_series(&cfg.data)?;
    let theta = cfg.data.window;

    // (t, kind ordinal, split, kind name, window)
    let mut rows: Vec<(usize, usize, &str, String, Matrix)> = Vec::new();
    let train = train_windows(cfg, &series)?;
    if augmented {
        let kinds = cfg.train_config().kinds;
        let set = build_augmented_set(train.windows(), &kinds, cfg.seed, &cfg.augment)?;
        for inst in set {
            let t = train.end_indices()[inst.source_index];
            rows.push((t, inst.kind.ordinal(), "augmented", inst.kind.to_string(), inst.instance));
        }
    } else {
        for (&t, w) in train.end_indices().iter().zip(train.windows()) {
            rows.push((t, 0, "train", AugmentationKind::Normal.to_string(), w.clone()));
        }
    }
    if series.train_end < series.len() && series.len() - series.train_end >= theta {
        let test = window_matrix(&series.test_values(), theta, cfg.score.stride)?;
        for (&t, w) in test.end_indices().iter().zip(test.windows()) {
            rows.push((t + series.train_end, usize::MAX, "test", "unknown".to_string(), w.clone()));
        }
    }
    rows.sort_by_key(|r| (r.0, r.1));

    let windows: Vec<Matrix> = rows.iter().map(|r| r.4.clone()).collect();
    let outputs = window_outputs(&model, &windows)?;
    create_out(out)?;
    let mut w = create(&out.join(EMBEDDINGS_FILE))?;
    let mut header = String::from("id,split,kind");
    for i in 0..model.config().embedding_dim {
        let _ = write!(header, ",e{i}");
    }
    writeln!(w, "{header}")?;
    for ((t, _, split, kind, _), emb) in rows.iter().zip(&outputs.embeddings) {
        let mut line = format!("{t},{split},{kind}");
        push_values(&mut line, emb.iter().copied());
        writeln!(w, "{line}")?;
    }
    w.flush()?;
    cfg.write_snapshot(out)?;
    eprintln!("exported {} embeddings", rows.len());
    Ok(())
}
