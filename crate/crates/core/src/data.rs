//! Dataset ingestion and synthesis: IDX image reading, binarization,
//! downsampling, and synthetic discrete/continuous benchmark distributions.

use crate::error::{Error, Result};
use crate::rng::{self, Rng};
use crate::tensor::Tensor;

use rand::Rng as _;
use rand_distr::StandardNormal;

use std::path::Path;

/// What one observation row contains.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ObservationKind {
    Binary,
    OneHotCategorical { positions: usize, classes: usize },
    Real,
}

impl ObservationKind {
    pub(crate) fn code(self) -> u32 {
        match self {
            ObservationKind::Binary => 0,
            ObservationKind::OneHotCategorical { .. } => 1,
            ObservationKind::Real => 2,
        }
    }
}

/// A set of observation vectors with shape metadata and optional
/// per-sample labels (class or mixture-mode indices).
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub samples: Tensor,
    pub kind: ObservationKind,
    /// Shape of one observation before flattening, e.g. `[14, 14]`.
    pub item_shape: Vec<usize>,
    pub labels: Option<Vec<usize>>,
}

impl Dataset {
    pub fn new_binary(samples: Tensor, item_shape: Vec<usize>) -> Result<Self> {
        if samples.data().iter().any(|&v| v != 0.0 && v != 1.0) {
            return Err(Error::InvalidParam(
                "binary dataset contains non-binary values".into(),
            ));
        }
        Ok(Dataset {
            samples,
            kind: ObservationKind::Binary,
            item_shape,
            labels: None,
        })
    }

    pub fn new_one_hot(
        samples: Tensor,
        positions: usize,
        classes: usize,
    ) -> Result<Self> {
        for i in 0..samples.rows() {
            let row = samples.row(i);
            for p in 0..positions {
                let cell = &row[p * classes..(p + 1) * classes];
                let s: f64 = cell.iter().sum();
                if (s - 1.0).abs() > 1e-12 || cell.iter().any(|&v| v != 0.0 && v != 1.0) {
                    return Err(Error::InvalidParam(format!(
                        "row {i} position {p} is not one-hot"
                    )));
                }
            }
        }
        Ok(Dataset {
            samples,
            kind: ObservationKind::OneHotCategorical { positions, classes },
            item_shape: vec![positions, classes],
            labels: None,
        })
    }

    pub fn new_real(samples: Tensor, item_shape: Vec<usize>) -> Result<Self> {
        samples.check_finite("real dataset")?;
        Ok(Dataset {
            samples,
            kind: ObservationKind::Real,
            item_shape,
            labels: None,
        })
    }

    pub fn len(&self) -> usize {
        self.samples.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn observed_dim(&self) -> usize {
        self.samples.cols()
    }

    /// Uniform with-replacement minibatch.
    pub fn sample_batch(&self, n: usize, rng: &mut Rng) -> Result<Tensor> {
        if self.is_empty() {
            return Err(Error::InvalidParam("sample_batch on empty dataset".into()));
        }
        let d = self.observed_dim();
        let mut out = Vec::with_capacity(n * d);
        for _ in 0..n {
            let i = rng.gen_range(0..self.len());
            out.extend_from_slice(self.samples.row(i));
        }
        Ok(Tensor::matrix(n, d, out))
    }

    /// Batch of `(x, one-hot label)` pairs; requires labels.
    pub fn sample_labeled_batch(
        &self,
        n: usize,
        classes: usize,
        rng: &mut Rng,
    ) -> Result<(Tensor, Tensor)> {
        let labels = self
            .labels
            .as_ref()
            .ok_or_else(|| Error::InvalidParam("dataset has no labels".into()))?;
        let d = self.observed_dim();
        let mut xs = Vec::with_capacity(n * d);
        let mut ys = vec![0.0; n * classes];
        for j in 0..n {
            let i = rng.gen_range(0..self.len());
            xs.extend_from_slice(self.samples.row(i));
            ys[j * classes + labels[i]] = 1.0;
        }
        Ok((Tensor::matrix(n, d, xs), Tensor::matrix(n, classes, ys)))
    }

    /// First `n` rows as a new dataset.
    pub fn take(&self, n: usize) -> Dataset {
        let n = n.min(self.len());
        let d = self.observed_dim();
        let samples = Tensor::matrix(n, d, self.samples.data()[..n * d].to_vec());
        Dataset {
            samples,
            kind: self.kind,
            item_shape: self.item_shape.clone(),
            labels: self.labels.as_ref().map(|l| l[..n].to_vec()),
        }
    }
}

/// Raw contents of an IDX file: dimension sizes and the u8 payload.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IdxData {
    pub dims: Vec<usize>,
    pub bytes: Vec<u8>,
}

pub const IDX_MAGIC_IMAGES: u32 = 0x0000_0803;
pub const IDX_MAGIC_LABELS: u32 = 0x0000_0801;

/// Parse an IDX file: big-endian magic (`0x00000803` for 3-d u8 images,
/// `0x00000801` for 1-d labels), big-endian u32 dimension sizes, payload.
pub fn read_idx(path: &Path) -> Result<IdxData> {
    let raw = std::fs::read(path)?;
    read_idx_bytes(&raw)
}

pub fn read_idx_bytes(raw: &[u8]) -> Result<IdxData> {
    if raw.len() < 4 {
        return Err(Error::Format("IDX file shorter than its magic".into()));
    }
    let magic = u32::from_be_bytes([raw[0], raw[1], raw[2], raw[3]]);
    let ndim = match magic {
        IDX_MAGIC_IMAGES => 3,
        IDX_MAGIC_LABELS => 1,
        other => {
            return Err(Error::Format(format!(
                "bad IDX magic 0x{other:08x}; expected images (0x{IDX_MAGIC_IMAGES:08x}) or labels (0x{IDX_MAGIC_LABELS:08x})"
            )))
        }
    };
    let header = 4 + 4 * ndim;
    if raw.len() < header {
        return Err(Error::Format("IDX header truncated".into()));
    }
    let mut dims = Vec::with_capacity(ndim);
    let mut total: usize = 1;
    for i in 0..ndim {
        let off = 4 + 4 * i;
        let d = u32::from_be_bytes([raw[off], raw[off + 1], raw[off + 2], raw[off + 3]]) as usize;
        total = total
            .checked_mul(d)
            .ok_or_else(|| Error::Format("IDX dimension overflow".into()))?;
        dims.push(d);
    }
    if raw.len() != header + total {
        return Err(Error::Format(format!(
            "IDX payload length {} does not match dimensions {:?}",
            raw.len() - header,
            dims
        )));
    }
    Ok(IdxData {
        dims,
        bytes: raw[header..].to_vec(),
    })
}

impl IdxData {
    /// Image stack as `[n, h, w]` intensities in 0..=255.
    pub fn to_images(&self) -> Result<Tensor> {
        if self.dims.len() != 3 {
            return Err(Error::Format(format!(
                "expected 3-d image data, got {:?}",
                self.dims
            )));
        }
        Ok(Tensor::new(
            self.dims.clone(),
            self.bytes.iter().map(|&b| b as f64).collect(),
        ))
    }
}

/// How to turn intensities into bits.
#[derive(Debug, Clone, Copy)]
pub enum Binarize {
    /// One Bernoulli(pixel/255) draw per pixel, fixed by the seed and
    /// reused across epochs.
    Stochastic { seed: u64 },
    /// `pixel >= t`.
    Threshold { t: f64 },
}

/// Binarize an `[n, h, w]` image stack into a binary dataset of
/// `[n, h*w]` rows.
pub fn binarize(images: &Tensor, mode: Binarize) -> Result<Dataset> {
    if images.rank() != 3 {
        return Err(Error::ShapeMismatch {
            context: "binarize input",
            expected: vec![0, 0, 0],
            got: images.shape().to_vec(),
        });
    }
    let (n, h, w) = (images.shape()[0], images.shape()[1], images.shape()[2]);
    let data = match mode {
        Binarize::Stochastic { seed } => {
            let mut r = rng::seeded(seed);
            images
                .data()
                .iter()
                .map(|&px| if r.gen::<f64>() < px / 255.0 { 1.0 } else { 0.0 })
                .collect()
        }
        Binarize::Threshold { t } => images
            .data()
            .iter()
            .map(|&px| if px >= t { 1.0 } else { 0.0 })
            .collect(),
    };
    Dataset::new_binary(Tensor::matrix(n, h * w, data), vec![h, w])
}

/// Block-mean pooling of an `[n, h, w]` stack by `factor` per side.
pub fn downsample(images: &Tensor, factor: usize) -> Result<Tensor> {
    if images.rank() != 3 {
        return Err(Error::ShapeMismatch {
            context: "downsample input",
            expected: vec![0, 0, 0],
            got: images.shape().to_vec(),
        });
    }
    let (n, h, w) = (images.shape()[0], images.shape()[1], images.shape()[2]);
    if h % factor != 0 || w % factor != 0 {
        return Err(Error::InvalidParam(format!(
            "dimensions {h}x{w} not divisible by factor {factor}"
        )));
    }
    let (oh, ow) = (h / factor, w / factor);
    let mut out = vec![0.0; n * oh * ow];
    let d = images.data();
    let inv = 1.0 / (factor * factor) as f64;
    for img in 0..n {
        for oy in 0..oh {
            for ox in 0..ow {
                let mut acc = 0.0;
                for dy in 0..factor {
                    for dx in 0..factor {
                        acc += d[img * h * w + (oy * factor + dy) * w + ox * factor + dx];
                    }
                }
                out[img * oh * ow + oy * ow + ox] = acc * inv;
            }
        }
    }
    Ok(Tensor::new(vec![n, oh, ow], out))
}

/// A synthetic categorical dataset together with its exact distribution
/// over all `classes^positions` outcomes.
#[derive(Debug, Clone)]
pub struct SynthGrid {
    pub dataset: Dataset,
    /// Exact outcome probabilities indexed like
    /// [`crate::oracle::EnumerableSpace::categorical`].
    pub distribution: Vec<f64>,
}

/// Exact distribution of a named pattern over `classes^positions` outcomes.
pub fn grid_pattern_distribution(
    positions: usize,
    classes: usize,
    pattern: &str,
) -> Result<Vec<f64>> {
    let total = classes
        .checked_pow(positions as u32)
        .ok_or_else(|| Error::BudgetExceeded("categorical grid too large".into()))?;
    let dist = match pattern {
        "uniform" => vec![1.0 / total as f64; total],
        "two-mode" => {
            if total < 2 {
                return Err(Error::InvalidParam("two-mode needs >= 2 outcomes".into()));
            }
            let mut d = vec![0.0; total];
            d[0] = 0.5;
            d[total - 1] = 0.5;
            d
        }
        "checker" => {
            // uniform over outcomes whose digit sum is even
            let mut d = vec![0.0; total];
            let mut count = 0usize;
            for (i, v) in d.iter_mut().enumerate() {
                let mut rem = i;
                let mut s = 0usize;
                for _ in 0..positions {
                    s += rem % classes;
                    rem /= classes;
                }
                if s % 2 == 0 {
                    *v = 1.0;
                    count += 1;
                }
            }
            for v in d.iter_mut() {
                *v /= count as f64;
            }
            d
        }
        other => {
            return Err(Error::UnknownName {
                what: "grid pattern",
                value: other.to_string(),
                expected: "uniform | two-mode | checker",
            })
        }
    };
    Ok(dist)
}

/// I.i.d. one-hot samples from a named exact distribution.
pub fn synth_categorical_grid(
    positions: usize,
    classes: usize,
    pattern: &str,
    size: usize,
    seed: u64,
) -> Result<SynthGrid> {
    let dist = grid_pattern_distribution(positions, classes, pattern)?;
    let mut r = rng::seeded(seed);
    let d = positions * classes;
    let mut data = vec![0.0; size * d];
    for row in 0..size {
        let u = r.gen::<f64>();
        let mut acc = 0.0;
        let mut outcome = dist.len() - 1;
        for (i, &p) in dist.iter().enumerate() {
            acc += p;
            if u < acc {
                outcome = i;
                break;
            }
        }
        // decode mixed-radix outcome index into one-hot blocks
        let mut rem = outcome;
        for p in 0..positions {
            let class = rem % classes;
            rem /= classes;
            data[row * d + p * classes + class] = 1.0;
        }
    }
    let dataset = Dataset::new_one_hot(Tensor::matrix(size, d, data), positions, classes)?;
    Ok(SynthGrid {
        dataset,
        distribution: dist,
    })
}

/// Centers of an `n_modes` ring of radius `radius` in the plane.
pub fn ring_centers(n_modes: usize, radius: f64) -> Vec<[f64; 2]> {
    (0..n_modes)
        .map(|j| {
            let a = 2.0 * std::f64::consts::PI * j as f64 / n_modes as f64;
            [radius * a.cos(), radius * a.sin()]
        })
        .collect()
}

/// Equal-weight 2-d Gaussian mixture on a circle; mode assignments are
/// recorded as labels for coverage metrics.
pub fn synth_gaussian_ring(
    n_modes: usize,
    radius: f64,
    sigma: f64,
    size: usize,
    seed: u64,
) -> Result<Dataset> {
    if n_modes < 1 {
        return Err(Error::InvalidParam("ring needs n_modes >= 1".into()));
    }
    let centers = ring_centers(n_modes, radius);
    let mut r = rng::seeded(seed);
    let mut data = Vec::with_capacity(size * 2);
    let mut labels = Vec::with_capacity(size);
    for _ in 0..size {
        let k = r.gen_range(0..n_modes);
        let dx: f64 = r.sample(StandardNormal);
        let dy: f64 = r.sample(StandardNormal);
        data.push(centers[k][0] + sigma * dx);
        data.push(centers[k][1] + sigma * dy);
        labels.push(k);
    }
    let mut ds = Dataset::new_real(Tensor::matrix(size, 2, data), vec![2])?;
    ds.labels = Some(labels);
    Ok(ds)
}

/// Two Gaussian blobs separated by `separation_sigmas` standard deviations,
/// labeled by class; the classification benchmark.
pub fn synth_blobs(size: usize, sigma: f64, separation_sigmas: f64, seed: u64) -> Result<Dataset> {
    synth_gaussian_ring(2, separation_sigmas * sigma / 2.0, sigma, size, seed)
}
