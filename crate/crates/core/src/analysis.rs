//! Post-hoc and in-training metrics: spike-time jitter across repeated
//! presentations, a population synchrony index, loss-curve capture with a
//! stabilization detector, and CSV export of run artifacts.

use std::io::Write;
use std::path::Path;

use ndarray::{Array2, ArrayView2};
use rand::seq::SliceRandom;
use rand::Rng;

use crate::data::{encode_latency, encode_rate, EncoderKind};
use crate::error::{Error, Result};
use crate::network::{forward, Model};
use crate::plasticity::first_spike_times;
use crate::raster::SpikeRaster;
use crate::seeds;

/// Width of the exported jitter histogram bins, in steps.
pub const JITTER_BIN_WIDTH: f64 = 0.25;

/// Default cap on the number of neurons sampled into a jitter report.
pub const JITTER_MAX_NEURONS: usize = 300;

/// Per-neuron spike-time jitter across repeated presentations.
#[derive(Debug, Clone)]
pub struct JitterReport {
    /// `(neuron index, jitter in steps)` for each sampled responsive neuron.
    pub per_neuron: Vec<(usize, f64)>,
    /// Neurons that stayed silent on every presentation; excluded above.
    pub silent_neurons: usize,
    pub repeats: usize,
    /// Histogram over per-neuron jitter, bins of [`JITTER_BIN_WIDTH`]:
    /// `(bin lower edge, count)`.
    pub histogram: Vec<(f64, usize)>,
}

impl JitterReport {
    pub fn mean_jitter(&self) -> Option<f64> {
        if self.per_neuron.is_empty() {
            return None;
        }
        Some(self.per_neuron.iter().map(|(_, j)| j).sum::<f64>() / self.per_neuron.len() as f64)
    }

    pub fn max_jitter(&self) -> Option<f64> {
        self.per_neuron
            .iter()
            .map(|&(_, j)| j)
            .fold(None, |acc, j| Some(acc.map_or(j, |m: f64| m.max(j))))
    }
}

fn histogram(values: &[f64]) -> Vec<(f64, usize)> {
    let mut bins: Vec<(f64, usize)> = Vec::new();
    for &v in values {
        let idx = (v / JITTER_BIN_WIDTH).floor() as usize;
        if bins.len() <= idx {
            bins.resize(idx + 1, (0.0, 0));
        }
        bins[idx].1 += 1;
    }
    for (i, bin) in bins.iter_mut().enumerate() {
        bin.0 = i as f64 * JITTER_BIN_WIDTH;
    }
    bins
}

/// Jitter from pre-collected rasters of identical shape, one per repeat.
///
/// First-spike times are capped at the horizon `T` (the sentinel), so a
/// presentation without a spike contributes the capped value; `(sample,
/// neuron)` pairs silent on every repeat are excluded, and neurons silent on
/// every `(sample, repeat)` are only counted in `silent_neurons`. Jitter per
/// neuron is the population standard deviation over repeats, averaged over
/// the contributing samples. At most `max_neurons` neurons are sampled,
/// seeded by `sample_seed`.
pub fn jitter_from_rasters(
    rasters: &[SpikeRaster],
    max_neurons: usize,
    sample_seed: u64,
) -> Result<JitterReport> {
    if rasters.len() < 2 {
        return Err(Error::Contract("jitter needs at least 2 repeats".into()));
    }
    let dims = rasters[0].dims();
    if rasters.iter().any(|r| r.dims() != dims) {
        return Err(Error::Dimension("jitter repeats must share raster dims".into()));
    }
    let (_, batch, neurons) = dims;
    let repeats = rasters.len();
    let times: Vec<_> = rasters.iter().map(first_spike_times).collect();

    let mut chosen: Vec<usize> = (0..neurons).collect();
    if neurons > max_neurons {
        let mut rng = seeds::component_rng(sample_seed, "jitter");
        chosen.shuffle(&mut rng);
        chosen.truncate(max_neurons);
        chosen.sort_unstable();
    }

    let mut per_neuron = Vec::new();
    let mut silent_neurons = 0usize;
    for &n in &chosen {
        let mut sample_stds = Vec::new();
        let mut neuron_has_spike = false;
        for b in 0..batch {
            let vals: Vec<f64> = times.iter().map(|t| t.time(b, n) as f64).collect();
            let any_spike = times.iter().any(|t| t.fired(b, n));
            if !any_spike {
                continue;
            }
            neuron_has_spike = true;
            let mean = vals.iter().sum::<f64>() / repeats as f64;
            let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / repeats as f64;
            sample_stds.push(var.sqrt());
        }
        if neuron_has_spike {
            let jitter = sample_stds.iter().sum::<f64>() / sample_stds.len() as f64;
            per_neuron.push((n, jitter));
        } else {
            silent_neurons += 1;
        }
    }

    if per_neuron.is_empty() {
        return Err(Error::Check(
            "jitter report is empty: every sampled neuron was silent on all presentations".into(),
        ));
    }
    let values: Vec<f64> = per_neuron.iter().map(|&(_, j)| j).collect();
    Ok(JitterReport {
        histogram: histogram(&values),
        per_neuron,
        silent_neurons,
        repeats,
    })
}

/// Jitter of the model's hidden layer over repeated presentations of the
/// same images. The rate encoder re-draws spikes per repeat (seeded); the
/// latency encoder is deterministic, making jitter trivially zero.
#[allow(clippy::too_many_arguments)]
pub fn jitter(
    model: &Model,
    images: ArrayView2<'_, u8>,
    encoder: EncoderKind,
    max_rate: f64,
    repeats: usize,
    seed: u64,
    max_neurons: usize,
) -> Result<JitterReport> {
    if repeats < 2 {
        return Err(Error::Contract("jitter needs repeats >= 2".into()));
    }
    let t_steps = model.spec.t_steps;
    let mut rasters = Vec::with_capacity(repeats);
    for r in 0..repeats {
        let encoded = match encoder {
            EncoderKind::Latency => encode_latency(images, t_steps)?,
            EncoderKind::Rate => encode_rate(
                images,
                t_steps,
                max_rate,
                seeds::component_seed(seed, &format!("jitter-encode/{r}")),
            )?,
        };
        let record = forward(model, &encoded)?;
        rasters.push(record.hidden);
    }
    jitter_from_rasters(&rasters, max_neurons, seed)
}

/// Population synchrony in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SynchronyIndex(pub f64);

/// Fraction of the active population firing together, averaged over
/// spike-carrying steps and samples.
///
/// Per sample: let `A` be the set of neurons that fire at least once in the
/// window. For every step `t` with at least one spike, the coincidence is
/// `(# neurons firing at t) / |A|`; the sample's index is the mean over those
/// steps, and the returned index is the mean over samples with any activity.
/// An all-silent raster scores 0.
pub fn synchrony_index(raster: &SpikeRaster) -> SynchronyIndex {
    let (t_steps, batch, neurons) = raster.dims();
    let mut sample_indices = Vec::new();
    for b in 0..batch {
        let mut active = vec![false; neurons];
        for t in 0..t_steps {
            for n in 0..neurons {
                if raster.get(t, b, n) != 0 {
                    active[n] = true;
                }
            }
        }
        let population = active.iter().filter(|&&a| a).count();
        if population == 0 {
            continue;
        }
        let mut step_scores = Vec::new();
        for t in 0..t_steps {
            let count = (0..neurons).filter(|&n| raster.get(t, b, n) != 0).count();
            if count > 0 {
                step_scores.push(count as f64 / population as f64);
            }
        }
        sample_indices.push(step_scores.iter().sum::<f64>() / step_scores.len() as f64);
    }
    if sample_indices.is_empty() {
        return SynchronyIndex(0.0);
    }
    SynchronyIndex(sample_indices.iter().sum::<f64>() / sample_indices.len() as f64)
}

/// Per-epoch loss record.
#[derive(Debug, Clone, Copy)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
}

/// Captured loss curves plus the rolling-variance window width.
#[derive(Debug, Clone)]
pub struct TrainingHistory {
    pub epochs: Vec<EpochStats>,
    pub variance_window: usize,
}

impl TrainingHistory {
    pub fn new(variance_window: usize) -> Self {
        Self {
            epochs: Vec::new(),
            variance_window,
        }
    }

    pub fn push(&mut self, train_loss: f64, val_loss: f64) {
        self.epochs.push(EpochStats {
            epoch: self.epochs.len(),
            train_loss,
            val_loss,
        });
    }

    pub fn train_losses(&self) -> Vec<f64> {
        self.epochs.iter().map(|e| e.train_loss).collect()
    }
}

/// Population variance over the trailing `window` values (shorter prefixes
/// use what is available); one entry per input value.
pub fn rolling_variance(values: &[f64], window: usize) -> Vec<f64> {
    let window = window.max(1);
    values
        .iter()
        .enumerate()
        .map(|(i, _)| {
            let lo = (i + 1).saturating_sub(window);
            let slice = &values[lo..=i];
            let mean = slice.iter().sum::<f64>() / slice.len() as f64;
            slice.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / slice.len() as f64
        })
        .collect()
}

/// First epoch whose full-window rolling loss variance drops below 10% of the
/// series' maximum full-window variance. `None` when fewer than `window`
/// epochs exist or the variance never drops.
pub fn stabilization_epoch(losses: &[f64], window: usize) -> Option<usize> {
    if losses.len() < window {
        return None;
    }
    let variances = rolling_variance(losses, window);
    let full: Vec<(usize, f64)> = variances
        .iter()
        .enumerate()
        .skip(window - 1)
        .map(|(i, &v)| (i, v))
        .collect();
    let max = full.iter().map(|&(_, v)| v).fold(0.0f64, f64::max);
    if max <= 0.0 {
        return full.first().map(|&(i, _)| i);
    }
    full.iter()
        .find(|&&(_, v)| v < 0.1 * max)
        .map(|&(i, _)| i)
}

/// Optional artifacts exported next to the loss curves.
#[derive(Debug, Clone, Default)]
pub struct RunExports<'a> {
    /// Hidden-layer raster of an evaluation batch, sampled into raster.csv.
    pub eval_raster: Option<&'a SpikeRaster>,
    /// Per-sample hidden spike counts and their labels, for hidden_repr.csv.
    pub hidden_repr: Option<(&'a Array2<f64>, &'a [u8])>,
    pub jitter: Option<&'a JitterReport>,
}

/// Write loss.csv (epoch, train_loss, val_loss, loss_variance_window) and any
/// provided artifacts (raster.csv, hidden_repr.csv, jitter.csv,
/// jitter_hist.csv) under `dir`. Deterministic byte-for-byte given equal
/// inputs.
pub fn export_run(dir: &Path, history: &TrainingHistory, exports: &RunExports<'_>) -> Result<()> {
    std::fs::create_dir_all(dir)?;

    let mut loss = String::from("epoch,train_loss,val_loss,loss_variance_window\n");
    let variances = rolling_variance(&history.train_losses(), history.variance_window);
    for (stats, var) in history.epochs.iter().zip(variances.iter()) {
        loss.push_str(&format!(
            "{},{},{},{}\n",
            stats.epoch, stats.train_loss, stats.val_loss, var
        ));
    }
    write_file(&dir.join("loss.csv"), &loss)?;

    if let Some(raster) = exports.eval_raster {
        let (t_steps, batch, neurons) = raster.dims();
        let mut out = String::from("sample,t,neuron\n");
        for b in 0..batch {
            for t in 0..t_steps {
                for n in 0..neurons {
                    if raster.get(t, b, n) != 0 {
                        out.push_str(&format!("{b},{t},{n}\n"));
                    }
                }
            }
        }
        write_file(&dir.join("raster.csv"), &out)?;
    }

    if let Some((counts, labels)) = exports.hidden_repr {
        let (samples, hidden) = (counts.shape()[0], counts.shape()[1]);
        if labels.len() != samples {
            return Err(Error::Dimension(format!(
                "{} labels for {samples} hidden-count rows",
                labels.len()
            )));
        }
        let mut out = String::from("sample,label");
        for n in 0..hidden {
            out.push_str(&format!(",n{n}"));
        }
        out.push('\n');
        for s in 0..samples {
            out.push_str(&format!("{s},{}", labels[s]));
            for n in 0..hidden {
                out.push_str(&format!(",{}", counts[(s, n)]));
            }
            out.push('\n');
        }
        write_file(&dir.join("hidden_repr.csv"), &out)?;
    }

    if let Some(report) = exports.jitter {
        let mut out = String::from("neuron,jitter\n");
        for ( n, j) in &report.per_neuron {
            out.push_str(&format!("{n},{j}\n"));
        }
        write_file(&dir.join("jitter.csv"), &out)?;
        let mut hist = String::from("bin_lo,bin_hi,count\n");
        for (lo, count) in &report.histogram {
            hist.push_str(&format!("{lo},{},{count}\n", lo + JITTER_BIN_WIDTH));
        }
        write_file(&dir.join("jitter_hist.csv"), &hist)?;
    }

    Ok(())
}

fn write_file(path: &Path, content: &str) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path).map_err(|e| {
        Error::Data(format!("cannot write {}: {e}", path.display()))
    })?);
    f.write_all(content.as_bytes())?;
    f.flush()?;
    Ok(())
}

/// Exact mean/std of `min(Geometric(p), cap)` with support {0, 1, ...}:
/// the first-success step of a Bernoulli(p) process truncated at `cap`.
/// Test oracle for the jitter pipeline's Bernoulli control.
pub fn truncated_geometric_std(p: f64, cap: usize) -> f64 {
    let q = 1.0 - p;
    let mut mean = 0.0;
    let mut second = 0.0;
    for t in 0..cap {
        let prob = p * q.powi(t as i32);
        mean += t as f64 * prob;
        second += (t as f64).powi(2) * prob;
    }
    let tail = q.powi(cap as i32);
    mean += cap as f64 * tail;
    second += (cap as f64).powi(2) * tail;
    (second - mean * mean).sqrt()
}

/// Repeated Bernoulli rasters for a single control neuron; used by the
/// jitter verification alongside [`truncated_geometric_std`].
pub fn bernoulli_control_rasters(
    p: f64,
    t_steps: usize,
    repeats: usize,
    seed: u64,
) -> Vec<SpikeRaster> {
    let mut rng = seeds::component_rng(seed, "bernoulli-control");
    (0..repeats)
        .map(|_| {
            let mut r = SpikeRaster::zeros(t_steps, 1, 1);
            for t in 0..t_steps {
                if rng.gen::<f64>() < p {
                    r.set(t, 0, 0, 1);
                }
            }
            r
        })
        .collect()
}
