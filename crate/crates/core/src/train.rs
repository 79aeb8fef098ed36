//! Training and evaluation drivers behind the CLI: data loading, the
//! epoch/batch loop combining surrogate backprop with SSDP, best-checkpoint
//! tracking, CSV export and a deterministic run manifest.

use std::path::{Path, PathBuf};

use ndarray::Array2;
use rand::seq::SliceRandom;

use crate::analysis::{
    export_run, jitter_from_rasters, stabilization_epoch, RunExports, TrainingHistory,
};
use crate::config::RunConfig;
use crate::data::{encode_latency, encode_rate, load_idx, EncoderKind};
use crate::error::{Error, Result};
use crate::network::{
    backward, forward, hybrid_update, param_sizes, predict, save_checkpoint, Model, RngCheckpoint,
    SpikeMode,
};
use crate::optim::{AdamState, CosineSchedule};
use crate::raster::SpikeRaster;
use crate::seeds;

/// Width of the rolling window used for the loss-variance column and the
/// stabilization detector.
pub const VARIANCE_WINDOW: usize = 10;

/// Final numbers recorded in the manifest.
#[derive(Debug, Clone)]
pub struct FinalMetrics {
    pub epochs_run: usize,
    pub final_train_loss: Option<f64>,
    pub final_val_loss: Option<f64>,
    pub best_val_acc: Option<f64>,
    pub best_epoch: Option<usize>,
    pub stabilization_epoch: Option<usize>,
}

/// Locations and numbers produced by one training run.
#[derive(Debug, Clone)]
pub struct RunArtifacts {
    pub run_dir: PathBuf,
    pub manifest_path: PathBuf,
    pub checkpoint_path: Option<PathBuf>,
    pub metrics: FinalMetrics,
    pub history: TrainingHistory,
}

fn encode(
    images: &Array2<u8>,
    encoder: EncoderKind,
    t_steps: usize,
    max_rate: f64,
    seed: u64,
) -> Result<SpikeRaster> {
    match encoder {
        EncoderKind::Latency => encode_latency(images.view(), t_steps),
        EncoderKind::Rate => encode_rate(images.view(), t_steps, max_rate, seed),
    }
}

fn gather(images: &Array2<u8>, labels: &[u8], idx: &[usize]) -> (Array2<u8>, Vec<u8>) {
    let cols = images.shape()[1];
    let mut out = Array2::zeros((idx.len(), cols));
    let mut lbl = Vec::with_capacity(idx.len());
    for (row, &i) in idx.iter().enumerate() {
        out.row_mut(row).assign(&images.row(i));
        lbl.push(labels[i]);
    }
    (out, lbl)
}

struct LoadedData {
    train_images: Array2<u8>,
    train_labels: Vec<u8>,
    val_images: Array2<u8>,
    val_labels: Vec<u8>,
    input_dim: usize,
}

fn load_training_data(cfg: &RunConfig) -> Result<LoadedData> {
    let mut train = load_idx(
        &cfg.resolve_data_path(&cfg.data.train_images),
        &cfg.resolve_data_path(&cfg.data.train_labels),
    )?;
    if let Some(limit) = cfg.data.train_limit {
        train.truncate(limit);
    }
    if train.is_empty() {
        return Err(Error::Data("training split is empty".into()));
    }
    let input_dim = train.pixels_per_image();
    if let Some(&bad) = train
        .labels
        .iter()
        .find(|&&l| l as usize >= cfg.model.output_dim)
    {
        return Err(Error::Data(format!(
            "label {bad} exceeds output_dim {}",
            cfg.model.output_dim
        )));
    }

    // Deterministic validation split.
    let n = train.len();
    let val_count = (cfg.data.val_fraction * n as f64).round() as usize;
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = seeds::component_rng(cfg.seed, "valsplit");
    order.shuffle(&mut rng);
    let (val_idx, train_idx) = order.split_at(val_count.min(n.saturating_sub(1)));
    let flat = train.flat_images();
    let (train_images, train_labels) = gather(&flat, &train.labels, train_idx);
    let (val_images, val_labels) = gather(&flat, &train.labels, val_idx);
    Ok(LoadedData {
        train_images,
        train_labels,
        val_images,
        val_labels,
        input_dim,
    })
}

/// Mean loss and accuracy of the frozen model over a split, in fixed-size
/// batches. Rate encoding uses per-batch seeds derived from `seed_tag`, so
/// repeated calls see identical rasters.
pub fn evaluate_split(
    model: &Model,
    images: &Array2<u8>,
    labels: &[u8],
    encoder: EncoderKind,
    max_rate: f64,
    batch_size: usize,
    seed: u64,
    seed_tag: &str,
) -> Result<(f64, f64)> {
    let n = labels.len();
    if n == 0 {
        return Err(Error::Data("evaluation split is empty".into()));
    }
    let mut total_loss = 0.0;
    let mut correct = 0usize;
    let mut start = 0usize;
    let mut batch_index = 0u64;
    while start < n {
        let end = (start + batch_size).min(n);
        let idx: Vec<usize> = (start..end).collect();
        let (batch_images, batch_labels) = gather(images, labels, &idx);
        let raster = encode(
            &batch_images,
            encoder,
            model.spec.t_steps,
            max_rate,
            seeds::component_seed(seed, &format!("{seed_tag}/{batch_index}")),
        )?;
        let record = forward(model, &raster)?;
        let loss = crate::network::loss(&record.logits, &batch_labels)?;
        total_loss += loss * batch_labels.len() as f64;
        let preds = predict(&record.logits);
        correct += preds
            .iter()
            .zip(batch_labels.iter())
            .filter(|(p, l)| p == l)
            .count();
        start = end;
        batch_index += 1;
    }
    Ok((total_loss / n as f64, correct as f64 / n as f64))
}

/// Per-class confusion counts: rows are true classes, columns predictions.
#[derive(Debug, Clone)]
pub struct EvalReport {
    pub accuracy: f64,
    pub confusion: Array2<u64>,
    pub samples: usize,
}

/// Top-1 accuracy and confusion matrix of a model over an image/label set.
pub fn evaluate_model(
    model: &Model,
    images: &Array2<u8>,
    labels: &[u8],
    encoder: EncoderKind,
    max_rate: f64,
    batch_size: usize,
    seed: u64,
) -> Result<EvalReport> {
    if images.shape()[1] != model.spec.input_dim {
        return Err(Error::Dimension(format!(
            "data has {} pixels per sample, checkpoint expects {}",
            images.shape()[1],
            model.spec.input_dim
        )));
    }
    let classes = model.spec.output_dim;
    let n = labels.len();
    let mut confusion = Array2::<u64>::zeros((classes, classes));
    let mut correct = 0usize;
    let mut start = 0usize;
    let mut batch_index = 0u64;
    while start < n {
        let end = (start + batch_size).min(n);
        let idx: Vec<usize> = (start..end).collect();
        let (batch_images, batch_labels) = gather(images, labels, &idx);
        let raster = encode(
            &batch_images,
            encoder,
            model.spec.t_steps,
            max_rate,
            seeds::component_seed(seed, &format!("eval-encoder/{batch_index}")),
        )?;
        let record = forward(model, &raster)?;
        let preds = predict(&record.logits);
        for (p, l) in preds.iter().zip(batch_labels.iter()) {
            if (*l as usize) >= classes {
                return Err(Error::Data(format!(
                    "label {l} exceeds output_dim {classes}"
                )));
            }
            confusion[(*l as usize, *p as usize)] += 1;
            if p == l {
                correct += 1;
            }
        }
        start = end;
        batch_index += 1;
    }
    Ok(EvalReport {
        accuracy: correct as f64 / n as f64,
        confusion,
        samples: n,
    })
}

/// Write the confusion matrix as CSV with a `true\pred` header row.
pub fn write_confusion_csv(report: &EvalReport, path: &Path) -> Result<()> {
    let classes = report.confusion.shape()[0];
    let mut out = String::from("true\\pred");
    for c in 0..classes {
        out.push_str(&format!(",{c}"));
    }
    out.push('\n');
    for r in 0..classes {
        out.push_str(&r.to_string());
        for c in 0..classes {
            out.push_str(&format!(",{}", report.confusion[(r, c)]));
        }
        out.push('\n');
    }
    std::fs::write(path, out)?;
    Ok(())
}

fn fmt_opt_f64(v: Option<f64>) -> String {
    match v {
        Some(x) => x.to_string(),
        None => "none".into(),
    }
}

fn fmt_opt_usize(v: Option<usize>) -> String {
    match v {
        Some(x) => x.to_string(),
        None => "none".into(),
    }
}

/// Build the manifest body: config echo, final metrics, content hash over
/// both (git-blob style `sha256("manifest <len>\0" + body)`). Byte-identical
/// for identical configs and seeds.
fn manifest_text(cfg: &RunConfig, metrics: &FinalMetrics) -> String {
    let mut body = String::new();
    body.push_str("# ssdp-lab run manifest\n");
    body.push_str(&format!("manifest_version = 1\nconfig_hash = \"{}\"\nseed = {}\n", cfg.config_hash(), cfg.seed));
    body.push_str("\n[metrics]\n");
    body.push_str(&format!("epochs_run = {}\n", metrics.epochs_run));
    body.push_str(&format!(
        "final_train_loss = \"{}\"\n",
        fmt_opt_f64(metrics.final_train_loss)
    ));
    body.push_str(&format!(
        "final_val_loss = \"{}\"\n",
        fmt_opt_f64(metrics.final_val_loss)
    ));
    body.push_str(&format!(
        "best_val_acc = \"{}\"\n",
        fmt_opt_f64(metrics.best_val_acc)
    ));
    body.push_str(&format!(
        "best_epoch = \"{}\"\n",
        fmt_opt_usize(metrics.best_epoch)
    ));
    body.push_str(&format!(
        "stabilization_epoch = \"{}\"\n",
        fmt_opt_usize(metrics.stabilization_epoch)
    ));
    body.push_str("\n[config_echo]\n");
    for line in cfg.to_toml_string().lines() {
        body.push_str(&format!("# {line}\n"));
    }
    let hash = {
        use sha2::{Digest, Sha256};
        let mut hasher = Sha256::new();
        hasher.update(format!("manifest {}\0", body.len()).as_bytes());
        hasher.update(body.as_bytes());
        crate::raster::hex_string(&hasher.finalize())
    };
    format!("content_hash = \"{hash}\"\n{body}")
}

/// Train per the config; writes everything under
/// `<output_dir>/<confighash8>-s<seed>/`: `manifest.toml`, `loss.csv`,
/// `raster.csv`, `hidden_repr.csv`, `jitter.csv` (when computable) and
/// `best.ckpt` (best validation accuracy).
pub fn run_training(cfg: &RunConfig) -> Result<RunArtifacts> {
    cfg.validate()?;
    let data = load_training_data(cfg)?;
    let run_dir = cfg.run_dir();
    std::fs::create_dir_all(&run_dir)?;

    let spec = cfg.model_spec(data.input_dim);
    let mut model = Model::init(spec, cfg.seed)?;
    let mut adam = AdamState::new(cfg.optimizer, &param_sizes(&model));
    let mut history = TrainingHistory::new(VARIANCE_WINDOW);
    let mut best: Option<(f64, usize)> = None;
    let checkpoint_path = run_dir.join("best.ckpt");
    let mut checkpoint_written = false;

    let lr_schedule = if cfg.schedule.lr_cosine && cfg.epochs > 0 {
        Some(CosineSchedule::new(cfg.optimizer.lr, cfg.schedule.lr_min, cfg.epochs)?)
    } else {
        None
    };
    let ssdp_schedule = if cfg.schedule.ssdp_anneal && cfg.epochs > 0 {
        Some(CosineSchedule::new(1.0, cfg.schedule.ssdp_floor_frac, cfg.epochs)?)
    } else {
        None
    };

    let n_train = data.train_labels.len();
    let rng_checkpoint = RngCheckpoint {
        seed: {
            // the run's entire randomness is derived from the global seed
            use rand_chacha::rand_core::SeedableRng;
            rand_chacha::ChaCha8Rng::seed_from_u64(cfg.seed).get_seed()
        },
        word_pos: 0,
    };

    for epoch in 0..cfg.epochs {
        if let Some(s) = &lr_schedule {
            adam.hp.lr = s.value(epoch)?;
        }
        let ssdp_scale = match &ssdp_schedule {
            Some(s) => s.value(epoch)?,
            None => 1.0,
        };

        let mut order: Vec<usize> = (0..n_train).collect();
        order.shuffle(&mut seeds::indexed_rng(cfg.seed, "shuffle", epoch as u64));

        let mut epoch_loss = 0.0;
        for (batch_index, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let (batch_images, batch_labels) = gather(&data.train_images, &data.train_labels, chunk);
            let raster = encode(
                &batch_images,
                cfg.data.encoder,
                cfg.model.t_steps,
                cfg.data.max_rate,
                seeds::component_seed(cfg.seed, &format!("encoder/{epoch}/{batch_index}")),
            )?;
            let record = forward(&model, &raster)?;
            let (loss, grads) = backward(&model, &record, &batch_labels, SpikeMode::Hard)?;
            epoch_loss += loss * batch_labels.len() as f64;
            hybrid_update(&mut model, &record, &grads, &mut adam, epoch, ssdp_scale)?;
        }
        let train_loss = epoch_loss / n_train as f64;

        let (val_loss, val_acc) = if data.val_labels.is_empty() {
            (f64::NAN, 0.0)
        } else {
            evaluate_split(
                &model,
                &data.val_images,
                &data.val_labels,
                cfg.data.encoder,
                cfg.data.max_rate,
                cfg.batch_size,
                cfg.seed,
                "val-encoder",
            )?
        };
        history.push(train_loss, val_loss);
        log::info!(
            "epoch {epoch}: train_loss {train_loss:.4} val_loss {val_loss:.4} val_acc {val_acc:.4}"
        );

        // without a validation split, keep the latest model instead
        let improved = data.val_labels.is_empty()
            || best.map_or(true, |(acc, _)| val_acc > acc);
        if improved {
            best = Some((val_acc, epoch));
            save_checkpoint(&model, &rng_checkpoint, &checkpoint_path)?;
            checkpoint_written = true;
        }
    }

    let metrics = FinalMetrics {
        epochs_run: cfg.epochs,
        final_train_loss: history.epochs.last().map(|e| e.train_loss),
        final_val_loss: history.epochs.last().map(|e| e.val_loss),
        best_val_acc: best.map(|(acc, _)| acc),
        best_epoch: best.map(|(_, e)| e),
        stabilization_epoch: stabilization_epoch(&history.train_losses(), VARIANCE_WINDOW),
    };

    // Export artifacts from a small frozen evaluation batch.
    let export_count = data.val_labels.len().min(64);
    let mut eval_raster = None;
    let mut hidden_counts: Option<(Array2<f64>, Vec<u8>)> = None;
    let mut jitter_report = None;
    if export_count > 0 && cfg.epochs > 0 {
        let idx: Vec<usize> = (0..export_count).collect();
        let (images, labels) = gather(&data.val_images, &data.val_labels, &idx);
        let raster = encode(
            &images,
            cfg.data.encoder,
            cfg.model.t_steps,
            cfg.data.max_rate,
            seeds::component_seed(cfg.seed, "export-encoder"),
        )?;
        let record = forward(&model, &raster)?;
        let (t_steps, batch, neurons) = record.hidden.dims();
        let mut counts = Array2::zeros((batch, neurons));
        for t in 0..t_steps {
            for b in 0..batch {
                for n in 0..neurons {
                    counts[(b, n)] += record.hidden.get(t, b, n) as f64;
                }
            }
        }
        // raster.csv keeps at most 8 samples to stay readable
        let keep = batch.min(8);
        let mut sampled = SpikeRaster::zeros(t_steps, keep, neurons);
        for t in 0..t_steps {
            for b in 0..keep {
                for n in 0..neurons {
                    sampled.set(t, b, n, record.hidden.get(t, b, n));
                }
            }
        }
        // jitter over repeated presentations of the first export samples
        let jitter_images = images.slice(ndarray::s![..batch.min(16), ..]).to_owned();
        let mut rasters = Vec::new();
        for r in 0..5u64 {
            let enc = encode(
                &jitter_images,
                cfg.data.encoder,
                cfg.model.t_steps,
                cfg.data.max_rate,
                seeds::component_seed(cfg.seed, &format!("jitter-encoder/{r}")),
            )?;
            rasters.push(forward(&model, &enc)?.hidden);
        }
        jitter_report = jitter_from_rasters(&rasters, crate::analysis::JITTER_MAX_NEURONS, cfg.seed).ok();
        eval_raster = Some(sampled);
        hidden_counts = Some((counts, labels));
    }

    let exports = RunExports {
        eval_raster: eval_raster.as_ref(),
        hidden_repr: hidden_counts.as_ref().map(|(c, l)| (c, l.as_slice())),
        jitter: jitter_report.as_ref(),
    };
    export_run(&run_dir, &history, &exports)?;

    let manifest_path = run_dir.join("manifest.toml");
    std::fs::write(&manifest_path, manifest_text(cfg, &metrics))?;

    Ok(RunArtifacts {
        run_dir,
        manifest_path,
        checkpoint_path: checkpoint_written.then_some(checkpoint_path),
        metrics,
        history,
    })
}

/// Load the test split named by the config and evaluate a model against it.
pub fn evaluate_on_test_split(model: &Model, cfg: &RunConfig) -> Result<EvalReport> {
    let mut test = load_idx(
        &cfg.resolve_data_path(&cfg.data.test_images),
        &cfg.resolve_data_path(&cfg.data.test_labels),
    )?;
    if let Some(limit) = cfg.data.test_limit {
        test.truncate(limit);
    }
    evaluate_model(
        model,
        &test.flat_images(),
        &test.labels,
        cfg.data.encoder,
        cfg.data.max_rate,
        cfg.batch_size,
        cfg.seed,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{save_idx, IdxDataset};
    use ndarray::Array3;

    /// Small synthetic IDX pair on disk: class = brightest quadrant.
    fn write_synthetic_dataset(
        dir: &Path,
        n: usize,
        classes: u8,
        seed: u64,
    ) -> (String, String) {
        use rand::Rng;
        let mut rng = seeds::component_rng(seed, "synthetic-idx");
        let mut images = Array3::<u8>::zeros((n, 6, 6));
        let mut labels = Vec::with_capacity(n);
        for i in 0..n {
            let class = rng.gen_range(0..classes);
            labels.push(class);
            for r in 0..6 {
                for c in 0..6 {
                    let quadrant = (r / 3) * 2 + (c / 3);
                    let base = if quadrant == (class as usize % 4) { 200 } else { 30 };
                    images[(i, r, c)] = (base + rng.gen_range(0..40)) as u8;
                }
            }
        }
        let ds = IdxDataset { images, labels };
        let img = dir.join(format!("img-{seed}"));
        let lbl = dir.join(format!("lbl-{seed}"));
        save_idx(&ds, &img, &lbl).unwrap();
        (
            img.to_string_lossy().into_owned(),
            lbl.to_string_lossy().into_owned(),
        )
    }

    fn small_config(dir: &Path) -> RunConfig {
        let (ti, tl) = write_synthetic_dataset(dir, 120, 4, 1);
        let (si, sl) = write_synthetic_dataset(dir, 40, 4, 2);
        let mut cfg = RunConfig::with_data(&ti, &tl, &si, &sl);
        cfg.output_dir = dir.join("runs").to_string_lossy().into_owned();
        cfg.epochs = 2;
        cfg.batch_size = 16;
        cfg.model.hidden_dim = 12;
        cfg.model.output_dim = 4;
        cfg.model.t_steps = 8;
        cfg.model.v_th = 0.05;
        cfg.model.init_std_scale = 1.5;
        cfg.optimizer.lr = 0.01;
        cfg
    }

    #[test]
    fn zero_epoch_run_writes_manifest_but_no_checkpoint() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = small_config(dir.path());
        cfg.epochs = 0;
        let artifacts = run_training(&cfg).unwrap();
        assert!(artifacts.manifest_path.exists());
        assert!(artifacts.checkpoint_path.is_none());
        let loss = std::fs::read_to_string(artifacts.run_dir.join("loss.csv")).unwrap();
        assert_eq!(loss.lines().count(), 1); // header only
        let manifest = std::fs::read_to_string(&artifacts.manifest_path).unwrap();
        assert!(manifest.contains("epochs_run = 0"));
    }

    #[test]
    fn identical_runs_produce_identical_manifests() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg_a = small_config(dir.path());
        cfg_a.output_dir = dir.path().join("runs-a").to_string_lossy().into_owned();
        let mut cfg_b = cfg_a.clone();
        cfg_b.output_dir = dir.path().join("runs-b").to_string_lossy().into_owned();
        // NOTE: output_dir differs, so hash/manifest would differ; force equal
        // configs but separate dirs by running the same config twice instead.
        let a = run_training(&cfg_a).unwrap();
        let manifest_a = std::fs::read(&a.manifest_path).unwrap();
        let loss_a = std::fs::read(a.run_dir.join("loss.csv")).unwrap();
        // second run of the identical config overwrites the same run dir
        let a2 = run_training(&cfg_a).unwrap();
        let manifest_a2 = std::fs::read(&a2.manifest_path).unwrap();
        let loss_a2 = std::fs::read(a2.run_dir.join("loss.csv")).unwrap();
        assert_eq!(manifest_a, manifest_a2);
        assert_eq!(loss_a, loss_a2);
        // different seed changes metrics but still completes
        cfg_b.seed = 7;
        let b = run_training(&cfg_b).unwrap();
        assert_ne!(std::fs::read(&b.manifest_path).unwrap(), manifest_a);
    }

    #[test]
    fn training_learns_the_synthetic_task() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = small_config(dir.path());
        cfg.epochs = 8;
        let artifacts = run_training(&cfg).unwrap();
        let acc = artifacts.metrics.best_val_acc.unwrap();
        assert!(acc > 0.5, "validation accuracy {acc} too low");

        // the saved checkpoint reproduces evaluation behavior
        let (model, _) = crate::network::load_checkpoint(
            artifacts.checkpoint_path.as_ref().unwrap(),
        )
        .unwrap();
        let report = evaluate_on_test_split(&model, &cfg).unwrap();
        assert!(report.accuracy > 0.5, "test accuracy {}", report.accuracy);
        // confusion matrix row sums equal per-class counts
        let mut test = load_idx(
            &cfg.resolve_data_path(&cfg.data.test_images),
            &cfg.resolve_data_path(&cfg.data.test_labels),
        )
        .unwrap();
        if let Some(limit) = cfg.data.test_limit {
            test.truncate(limit);
        }
        for class in 0..4usize {
            let expected = test.labels.iter().filter(|&&l| l as usize == class).count() as u64;
            let row_sum: u64 = (0..4).map(|c| report.confusion[(class, c)]).sum();
            assert_eq!(row_sum, expected);
        }
    }

    #[test]
    fn random_weights_score_chance_level() {
        let dir = tempfile::tempdir().unwrap();
        let (ti, tl) = write_synthetic_dataset(dir.path(), 10, 4, 3);
        let (_si, _sl) = (ti.clone(), tl.clone());
        use rand::Rng;
        // 3000 uniformly random-labeled samples against an untrained model
        let mut rng = seeds::component_rng(9, "chance");
        let n = 3000;
        let images = Array2::from_shape_fn((n, 36), |_| rng.gen_range(0..=255u8));
        let labels: Vec<u8> = (0..n).map(|_| rng.gen_range(0..10u8)).collect();
        let spec = crate::network::ModelSpec {
            input_dim: 36,
            hidden_dim: 20,
            output_dim: 10,
            t_steps: 8,
            v_th: 0.05,
            init_std_scale: 1.5,
            ..Default::default()
        };
        let model = Model::init(spec, 33).unwrap();
        let report = evaluate_model(
            &model,
            &images,
            &labels,
            EncoderKind::Latency,
            0.5,
            128,
            1,
        )
        .unwrap();
        assert!(
            (report.accuracy - 0.1).abs() < 0.02,
            "accuracy {} not at chance",
            report.accuracy
        );
    }

    #[test]
    fn memorizes_a_single_sample() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = small_config(dir.path());
        cfg.epochs = 25;
        cfg.batch_size = 1;
        cfg.data.train_limit = Some(1);
        cfg.data.val_fraction = 0.0; // no val: checkpoint tracks the latest model
        cfg.optimizer.lr = 0.02;
        let artifacts = run_training(&cfg).unwrap();
        let (model, _) = crate::network::load_checkpoint(
            artifacts.checkpoint_path.as_ref().unwrap(),
        )
        .unwrap();
        // evaluate on the single training sample itself
        let train = load_idx(
            &cfg.resolve_data_path(&cfg.data.train_images),
            &cfg.resolve_data_path(&cfg.data.train_labels),
        )
        .unwrap();
        let flat = train.flat_images();
        let images = flat.slice(ndarray::s![0..1, ..]).to_owned();
        let labels = vec![train.labels[0]];
        let report = evaluate_model(
            &model,
            &images,
            &labels,
            cfg.data.encoder,
            cfg.data.max_rate,
            1,
            cfg.seed,
        )
        .unwrap();
        assert_eq!(report.accuracy, 1.0);
    }
}
