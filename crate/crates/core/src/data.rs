//! Dataset ingestion (IDX binary format), spike encoders and synthetic
//! synchrony-task generators.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{BigEndian, ReadBytesExt, WriteBytesExt};
use ndarray::{Array2, Array3, ArrayView2};
use rand::Rng;

use crate::error::{Error, Result};
use crate::raster::SpikeRaster;
use crate::seeds;

pub const IDX_IMAGE_MAGIC: u32 = 0x0000_0803;
pub const IDX_LABEL_MAGIC: u32 = 0x0000_0801;

/// Image/label pair parsed from a pair of IDX files.
#[derive(Debug, Clone, PartialEq)]
pub struct IdxDataset {
    /// `(count, rows, cols)` raw pixel bytes.
    pub images: Array3<u8>,
    pub labels: Vec<u8>,
}

impl IdxDataset {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn pixels_per_image(&self) -> usize {
        self.images.shape()[1] * self.images.shape()[2]
    }

    /// Images flattened to `(count, rows*cols)`.
    pub fn flat_images(&self) -> Array2<u8> {
        let (n, r, c) = (
            self.images.shape()[0],
            self.images.shape()[1],
            self.images.shape()[2],
        );
        let flat: Vec<u8> = self.images.iter().copied().collect();
        Array2::from_shape_vec((n, r * c), flat).expect("contiguous image tensor")
    }

    /// Keep only the first `limit` items (no-op when `limit >= len`).
    pub fn truncate(&mut self, limit: usize) {
        if limit >= self.len() {
            return;
        }
        self.images = self
            .images
            .slice(ndarray::s![..limit, .., ..])
            .to_owned();
        self.labels.truncate(limit);
    }
}

fn read_all(path: &Path) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    let mut f = BufReader::new(File::open(path).map_err(|e| {
        Error::Data(format!("cannot open {}: {e}", path.display()))
    })?);
    f.read_to_end(&mut buf)?;
    Ok(buf)
}

/// Parse a big-endian IDX image/label file pair.
///
/// Errors distinguish bad magic, truncated payloads and image/label count
/// mismatch.
pub fn load_idx(images_path: &Path, labels_path: &Path) -> Result<IdxDataset> {
    let img_bytes = read_all(images_path)?;
    let mut cur = &img_bytes[..];
    let magic = cur
        .read_u32::<BigEndian>()
        .map_err(|_| Error::Data(format!("{}: truncated header", images_path.display())))?;
    if magic != IDX_IMAGE_MAGIC {
        return Err(Error::Data(format!(
            "{}: bad image magic {magic:#010x}, expected {IDX_IMAGE_MAGIC:#010x}",
            images_path.display()
        )));
    }
    let count = cur.read_u32::<BigEndian>().map_err(|_| {
        Error::Data(format!("{}: truncated header", images_path.display()))
    })? as usize;
    let rows = cur.read_u32::<BigEndian>().map_err(|_| {
        Error::Data(format!("{}: truncated header", images_path.display()))
    })? as usize;
    let cols = cur.read_u32::<BigEndian>().map_err(|_| {
        Error::Data(format!("{}: truncated header", images_path.display()))
    })? as usize;
    let expected = count * rows * cols;
    if cur.len() != expected {
        return Err(Error::Data(format!(
            "{}: payload holds {} bytes, header promises {expected}",
            images_path.display(),
            cur.len()
        )));
    }
    let images = Array3::from_shape_vec((count, rows, cols), cur.to_vec())
        .expect("length checked above");

    let lbl_bytes = read_all(labels_path)?;
    let mut cur = &lbl_bytes[..];
    let magic = cur
        .read_u32::<BigEndian>()
        .map_err(|_| Error::Data(format!("{}: truncated header", labels_path.display())))?;
    if magic != IDX_LABEL_MAGIC {
        return Err(Error::Data(format!(
            "{}: bad label magic {magic:#010x}, expected {IDX_LABEL_MAGIC:#010x}",
            labels_path.display()
        )));
    }
    let lbl_count = cur.read_u32::<BigEndian>().map_err(|_| {
        Error::Data(format!("{}: truncated header", labels_path.display()))
    })? as usize;
    if cur.len() != lbl_count {
        return Err(Error::Data(format!(
            "{}: payload holds {} labels, header promises {lbl_count}",
            labels_path.display(),
            cur.len()
        )));
    }
    if lbl_count != count {
        return Err(Error::Data(format!(
            "image count {count} does not match label count {lbl_count}"
        )));
    }
    Ok(IdxDataset {
        images,
        labels: cur.to_vec(),
    })
}

/// Serialize back to the IDX byte layout; the exact inverse of [`load_idx`].
pub fn save_idx(dataset: &IdxDataset, images_path: &Path, labels_path: &Path) -> Result<()> {
    let (count, rows, cols) = (
        dataset.images.shape()[0],
        dataset.images.shape()[1],
        dataset.images.shape()[2],
    );
    let mut img = BufWriter::new(File::create(images_path)?);
    img.write_u32::<BigEndian>(IDX_IMAGE_MAGIC)?;
    img.write_u32::<BigEndian>(count as u32)?;
    img.write_u32::<BigEndian>(rows as u32)?;
    img.write_u32::<BigEndian>(cols as u32)?;
    for &px in dataset.images.iter() {
        img.write_u8(px)?;
    }
    img.flush()?;

    let mut lbl = BufWriter::new(File::create(labels_path)?);
    lbl.write_u32::<BigEndian>(IDX_LABEL_MAGIC)?;
    lbl.write_u32::<BigEndian>(dataset.labels.len() as u32)?;
    lbl.write_all(&dataset.labels)?;
    lbl.flush()?;
    Ok(())
}

/// Which spike encoder turns pixels into rasters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EncoderKind {
    /// Deterministic time-to-first-spike coding; the default for SSDP runs
    /// because it yields crisp first-spike times.
    Latency,
    /// Bernoulli rate coding with per-step probability `(pixel/255) * max_rate`.
    Rate,
}

/// Spike raster plus the class labels of the encoded samples.
#[derive(Debug, Clone)]
pub struct EncodedBatch {
    pub raster: SpikeRaster,
    pub labels: Vec<u8>,
}

/// Bernoulli rate coding: at each step, neuron `n` of sample `b` spikes with
/// probability `(pixel/255) * max_rate`. Deterministic per seed.
pub fn encode_rate(
    images: ArrayView2<'_, u8>,
    t_steps: usize,
    max_rate: f64,
    rng_seed: u64,
) -> Result<SpikeRaster> {
    if t_steps < 1 {
        return Err(Error::Config("rate encoder needs t_steps >= 1".into()));
    }
    if !(max_rate > 0.0 && max_rate <= 1.0) {
        return Err(Error::Config(format!(
            "max_rate must lie in (0, 1], got {max_rate}"
        )));
    }
    let (batch, neurons) = (images.shape()[0], images.shape()[1]);
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(rng_seed);
    use rand_chacha::rand_core::SeedableRng;
    let mut raster = SpikeRaster::zeros(t_steps, batch, neurons);
    for t in 0..t_steps {
        for b in 0..batch {
            for n in 0..neurons {
                let p = images[(b, n)] as f64 / 255.0 * max_rate;
                if rng.gen::<f64>() < p {
                    raster.set(t, b, n, 1);
                }
            }
        }
    }
    Ok(raster)
}

/// Latency coding: one spike per active pixel at step
/// `round((1 - pixel/255) * (t_steps - 1))`; zero pixels stay silent.
pub fn encode_latency(images: ArrayView2<'_, u8>, t_steps: usize) -> Result<SpikeRaster> {
    if t_steps < 2 {
        return Err(Error::Config("latency encoder needs t_steps >= 2".into()));
    }
    let (batch, neurons) = (images.shape()[0], images.shape()[1]);
    let mut raster = SpikeRaster::zeros(t_steps, batch, neurons);
    for b in 0..batch {
        for n in 0..neurons {
            let px = images[(b, n)];
            if px == 0 {
                continue;
            }
            let t = ((1.0 - px as f64 / 255.0) * (t_steps - 1) as f64).round() as usize;
            raster.set(t, b, n, 1);
        }
    }
    Ok(raster)
}

/// Encode a batch with the configured encoder, carrying labels along.
pub fn encode_batch(
    images: ArrayView2<'_, u8>,
    labels: &[u8],
    encoder: EncoderKind,
    t_steps: usize,
    max_rate: f64,
    rng_seed: u64,
) -> Result<EncodedBatch> {
    if images.shape()[0] != labels.len() {
        return Err(Error::Dimension(format!(
            "{} images vs {} labels",
            images.shape()[0],
            labels.len()
        )));
    }
    let raster = match encoder {
        EncoderKind::Latency => encode_latency(images, t_steps)?,
        EncoderKind::Rate => encode_rate(images, t_steps, max_rate, rng_seed)?,
    };
    Ok(EncodedBatch {
        raster,
        labels: labels.to_vec(),
    })
}

/// Synthetic synchrony task: disjoint neuron groups firing around a shared
/// anchor step with group-specific jitter, over optional background noise.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct SyntheticSynchronySpec {
    pub n_groups: usize,
    pub neurons_per_group: usize,
    /// Uniform jitter half-width per group, in steps.
    pub jitter_steps: Vec<u32>,
    /// Background Bernoulli spike probability per (step, neuron).
    pub base_rate: f64,
    pub t_steps: usize,
    pub batch: usize,
    pub seed: u64,
}

impl SyntheticSynchronySpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_groups == 0 || self.neurons_per_group == 0 {
            return Err(Error::Config("synchrony task needs at least one group and neuron".into()));
        }
        if self.jitter_steps.len() != self.n_groups {
            return Err(Error::Config(format!(
                "jitter_steps has {} entries for {} groups",
                self.jitter_steps.len(),
                self.n_groups
            )));
        }
        if self.t_steps < 2 {
            return Err(Error::Config("synchrony task needs t_steps >= 2".into()));
        }
        if self.batch == 0 {
            return Err(Error::Config("synchrony task needs batch >= 1".into()));
        }
        if !(0.0..=1.0).contains(&self.base_rate) {
            return Err(Error::Config(format!(
                "base_rate must lie in [0, 1], got {}",
                self.base_rate
            )));
        }
        Ok(())
    }

    pub fn total_neurons(&self) -> usize {
        self.n_groups * self.neurons_per_group
    }

    /// The shared anchor step all groups fire around.
    pub fn anchor(&self) -> usize {
        self.t_steps / 2
    }
}

/// Generate the task raster and the per-neuron group labels.
///
/// For every sample, each neuron of group `g` fires once at
/// `anchor + U[-jitter(g), +jitter(g)]` (clamped to the window), and every
/// (step, neuron) cell additionally spikes with probability `base_rate`.
pub fn gen_synchrony_task(spec: &SyntheticSynchronySpec) -> Result<(SpikeRaster, Vec<usize>)> {
    spec.validate()?;
    let neurons = spec.total_neurons();
    let anchor = spec.anchor() as i64;
    let mut rng = seeds::component_rng(spec.seed, "synthetic");
    let mut raster = SpikeRaster::zeros(spec.t_steps, spec.batch, neurons);
    for b in 0..spec.batch {
        for n in 0..neurons {
            let group = n / spec.neurons_per_group;
            let j = spec.jitter_steps[group] as i64;
            let offset = if j == 0 { 0 } else { rng.gen_range(-j..=j) };
            let t = (anchor + offset).clamp(0, spec.t_steps as i64 - 1) as usize;
            raster.set(t, b, n, 1);
        }
    }
    if spec.base_rate > 0.0 {
        for t in 0..spec.t_steps {
            for b in 0..spec.batch {
                for n in 0..neurons {
                    if rng.gen::<f64>() < spec.base_rate {
                        raster.set(t, b, n, 1);
                    }
                }
            }
        }
    }
    let labels = (0..neurons).map(|n| n / spec.neurons_per_group).collect();
    Ok((raster, labels))
}
