//! Binary artifact formats: named-tensor checkpoints, dataset files
//! sharing the same container, and PGM sample grids.
//!
//! Checkpoint layout, all integers little-endian u32 unless noted:
//! magic `b"BGAN"`, version, tensor count, then per tensor: name length,
//! name bytes (UTF-8), rank, dims, and the values as little-endian f64.

use crate::data::{Dataset, ObservationKind};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

use std::io::Write as _;
use std::path::Path;

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"BGAN";
pub const CHECKPOINT_VERSION: u32 = 1;

pub fn save_tensors(path: &Path, tensors: &[(&str, &Tensor)]) -> Result<()> {
    let mut buf = Vec::new();
    buf.extend_from_slice(CHECKPOINT_MAGIC);
    buf.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    buf.extend_from_slice(&(tensors.len() as u32).to_le_bytes());
    for (name, t) in tensors {
        let nb = name.as_bytes();
        buf.extend_from_slice(&(nb.len() as u32).to_le_bytes());
        buf.extend_from_slice(nb);
        buf.extend_from_slice(&(t.rank() as u32).to_le_bytes());
        for &d in t.shape() {
            buf.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for &v in t.data() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    let mut f = std::fs::File::create(path)?;
    f.write_all(&buf)?;
    Ok(())
}

pub fn load_tensors(path: &Path) -> Result<Vec<(String, Tensor)>> {
    let raw = std::fs::read(path)?;
    let mut cur = 0usize;
    let take = |cur: &mut usize, n: usize| -> Result<&[u8]> {
        if *cur + n > raw.len() {
            return Err(Error::Format("checkpoint truncated".into()));
        }
        let s = &raw[*cur..*cur + n];
        *cur += n;
        Ok(s)
    };
    let u32_at = |cur: &mut usize| -> Result<u32> {
        let b = take(cur, 4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    };

    if take(&mut cur, 4)? != CHECKPOINT_MAGIC {
        return Err(Error::Format("bad checkpoint magic".into()));
    }
    let version = u32_at(&mut cur)?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::Format(format!(
            "unsupported checkpoint version {version}"
        )));
    }
    let count = u32_at(&mut cur)? as usize;
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let name_len = u32_at(&mut cur)? as usize;
        let name = String::from_utf8(take(&mut cur, name_len)?.to_vec())
            .map_err(|_| Error::Format("tensor name is not UTF-8".into()))?;
        let rank = u32_at(&mut cur)? as usize;
        let mut shape = Vec::with_capacity(rank);
        let mut total = 1usize;
        for _ in 0..rank {
            let d = u32_at(&mut cur)? as usize;
            total = total
                .checked_mul(d)
                .ok_or_else(|| Error::Format("tensor dimension overflow".into()))?;
            shape.push(d);
        }
        let bytes = take(&mut cur, total * 8)?;
        let data = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes([c[0], c[1], c[2], c[3], c[4], c[5], c[6], c[7]]))
            .collect();
        out.push((name, Tensor::new(shape, data)));
    }
    if cur != raw.len() {
        return Err(Error::Format("trailing bytes after last tensor".into()));
    }
    Ok(out)
}

pub fn save_dataset(path: &Path, ds: &Dataset) -> Result<()> {
    let kind = Tensor::new(
        vec![3],
        match ds.kind {
            ObservationKind::OneHotCategorical { positions, classes } => {
                vec![ds.kind.code() as f64, positions as f64, classes as f64]
            }
            _ => vec![ds.kind.code() as f64, 0.0, 0.0],
        },
    );
    let item_shape = Tensor::new(
        vec![ds.item_shape.len()],
        ds.item_shape.iter().map(|&d| d as f64).collect(),
    );
    let mut tensors: Vec<(&str, &Tensor)> =
        vec![("samples", &ds.samples), ("kind", &kind), ("item_shape", &item_shape)];
    let labels_t = ds.labels.as_ref().map(|l| {
        Tensor::new(vec![l.len()], l.iter().map(|&v| v as f64).collect())
    });
    if let Some(ref t) = labels_t {
        tensors.push(("labels", t));
    }
    save_tensors(path, &tensors)
}

pub fn load_dataset(path: &Path) -> Result<Dataset> {
    let tensors = load_tensors(path)?;
    let get = |name: &str| -> Result<&Tensor> {
        tensors
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, t)| t)
            .ok_or_else(|| Error::Format(format!("dataset file missing tensor {name:?}")))
    };
    let samples = get("samples")?.clone();
    let kind_t = get("kind")?;
    let kind = match kind_t.data()[0] as u32 {
        0 => ObservationKind::Binary,
        1 => ObservationKind::OneHotCategorical {
            positions: kind_t.data()[1] as usize,
            classes: kind_t.data()[2] as usize,
        },
        2 => ObservationKind::Real,
        other => return Err(Error::Format(format!("unknown observation kind {other}"))),
    };
    let item_shape = get("item_shape")?
        .data()
        .iter()
        .map(|&v| v as usize)
        .collect();
    let labels = tensors
        .iter()
        .find(|(n, _)| n == "labels")
        .map(|(_, t)| t.data().iter().map(|&v| v as usize).collect());
    Ok(Dataset {
        samples,
        kind,
        item_shape,
        labels,
    })
}

/// Write a binary PGM (P5, maxval 255).
pub fn write_pgm(path: &Path, width: usize, height: usize, pixels: &[u8]) -> Result<()> {
    if pixels.len() != width * height {
        return Err(Error::ShapeMismatch {
            context: "write_pgm",
            expected: vec![height, width],
            got: vec![pixels.len()],
        });
    }
    let mut f = std::fs::File::create(path)?;
    write!(f, "P5\n{width} {height}\n255\n")?;
    f.write_all(pixels)?;
    Ok(())
}

/// Tile `[n, h*w]` rows of intensities in [0, 1] into a grid image with
/// 2-pixel separators. Returns `(width, height, pixels)`.
pub fn tile_grid(samples: &Tensor, h: usize, w: usize, cols: usize) -> (usize, usize, Vec<u8>) {
    const SEP: usize = 2;
    let n = samples.rows();
    assert_eq!(samples.cols(), h * w, "sample width does not match h*w");
    let rows = n.div_ceil(cols);
    let width = cols * w + (cols - 1) * SEP;
    let height = rows * h + (rows - 1) * SEP;
    let mut pixels = vec![0u8; width * height];
    for i in 0..n {
        let (gr, gc) = (i / cols, i % cols);
        let (oy, ox) = (gr * (h + SEP), gc * (w + SEP));
        for y in 0..h {
            for x in 0..w {
                let v = samples.get2(i, y * w + x).clamp(0.0, 1.0);
                pixels[(oy + y) * width + ox + x] = (v * 255.0).round() as u8;
            }
        }
    }
    (width, height, pixels)
}

/// Persist a generator (parameters plus family/prior/architecture metadata)
/// and a statistic network into one checkpoint file.
pub fn save_models(
    path: &Path,
    gen: Option<&crate::models::GeneratorModel>,
    stat: Option<&crate::models::StatisticNetwork>,
) -> Result<()> {
    use crate::models::{ConditionalFamily, Prior};
    let mut owned: Vec<(String, Tensor)> = Vec::new();
    if let Some(gen) = gen {
        let (pk, pd) = match gen.prior {
            Prior::Uniform01 { dim } => (0.0, dim as f64),
            Prior::StandardNormal { dim } => (1.0, dim as f64),
        };
        let (fk, fa, fb) = match gen.family {
            ConditionalFamily::Bernoulli { dims } => (0.0, dims as f64, 0.0),
            ConditionalFamily::Categorical { positions, classes } => {
                (1.0, positions as f64, classes as f64)
            }
            ConditionalFamily::Deterministic { dims } => (2.0, dims as f64, 0.0),
        };
        owned.push((
            "gen.meta".into(),
            Tensor::new(
                vec![6],
                vec![pk, pd, fk, fa, fb, activation_code(gen.net.activation)],
            ),
        ));
        for (name, t) in mlp_tensors("gen", &gen.net) {
            owned.push((name, t.clone()));
        }
    }
    if let Some(stat) = stat {
        owned.push((
            "disc.meta".into(),
            Tensor::new(vec![1], vec![activation_code(stat.net.activation)]),
        ));
        for (name, t) in mlp_tensors("disc", &stat.net) {
            owned.push((name, t.clone()));
        }
    }
    let refs: Vec<(&str, &Tensor)> = owned.iter().map(|(n, t)| (n.as_str(), t)).collect();
    save_tensors(path, &refs)
}

fn activation_code(a: crate::models::Activation) -> f64 {
    use crate::models::Activation;
    match a {
        Activation::Relu => 0.0,
        Activation::Tanh => 1.0,
        Activation::Sigmoid => 2.0,
        Activation::Square => 3.0,
    }
}

fn activation_from_code(c: f64) -> Result<crate::models::Activation> {
    use crate::models::Activation;
    Ok(match c as u32 {
        0 => Activation::Relu,
        1 => Activation::Tanh,
        2 => Activation::Sigmoid,
        3 => Activation::Square,
        other => return Err(Error::Format(format!("unknown activation code {other}"))),
    })
}

fn mlp_from_tensors(
    prefix: &str,
    tensors: &[(String, Tensor)],
    activation: crate::models::Activation,
) -> Result<crate::models::Mlp> {
    let mut dims: Vec<usize> = Vec::new();
    let mut i = 0;
    loop {
        let name = format!("{prefix}.w{i}");
        let Some((_, w)) = tensors.iter().find(|(n, _)| n == &name) else {
            break;
        };
        if i == 0 {
            dims.push(w.rows());
        }
        dims.push(w.cols());
        i += 1;
    }
    if dims.len() < 2 {
        return Err(Error::Format(format!("checkpoint has no {prefix} layers")));
    }
    let hidden = &dims[1..dims.len() - 1];
    let mut mlp = crate::models::Mlp::new(
        dims[0],
        hidden,
        dims[dims.len() - 1],
        activation,
        &mut crate::rng::seeded(0),
    );
    load_mlp_params(prefix, tensors, &mut mlp)?;
    Ok(mlp)
}

/// Restore a generator saved by [`save_models`].
pub fn load_generator(path: &Path) -> Result<crate::models::GeneratorModel> {
    use crate::models::{ConditionalFamily, GeneratorModel, Prior};
    let tensors = load_tensors(path)?;
    let meta = tensors
        .iter()
        .find(|(n, _)| n == "gen.meta")
        .map(|(_, t)| t)
        .ok_or_else(|| Error::Format("checkpoint has no generator".into()))?;
    let d = meta.data();
    let prior = match d[0] as u32 {
        0 => Prior::Uniform01 { dim: d[1] as usize },
        1 => Prior::StandardNormal { dim: d[1] as usize },
        other => return Err(Error::Format(format!("unknown prior code {other}"))),
    };
    let family = match d[2] as u32 {
        0 => ConditionalFamily::Bernoulli { dims: d[3] as usize },
        1 => ConditionalFamily::Categorical {
            positions: d[3] as usize,
            classes: d[4] as usize,
        },
        2 => ConditionalFamily::Deterministic { dims: d[3] as usize },
        other => return Err(Error::Format(format!("unknown family code {other}"))),
    };
    let net = mlp_from_tensors("gen", &tensors, activation_from_code(d[5])?)?;
    Ok(GeneratorModel::new(prior, net, family))
}

/// Restore a statistic network saved by [`save_models`].
pub fn load_statistic(path: &Path) -> Result<crate::models::StatisticNetwork> {
    let tensors = load_tensors(path)?;
    let meta = tensors
        .iter()
        .find(|(n, _)| n == "disc.meta")
        .map(|(_, t)| t)
        .ok_or_else(|| Error::Format("checkpoint has no statistic network".into()))?;
    let net = mlp_from_tensors("disc", &tensors, activation_from_code(meta.data()[0])?)?;
    Ok(crate::models::StatisticNetwork::new(net))
}

/// Save an MLP-backed model's parameters with a name prefix.
pub fn mlp_tensors<'a>(prefix: &str, mlp: &'a crate::models::Mlp) -> Vec<(String, &'a Tensor)> {
    let mut out = Vec::new();
    for (i, (w, b)) in mlp.weights.iter().zip(&mlp.biases).enumerate() {
        out.push((format!("{prefix}.w{i}"), w));
        out.push((format!("{prefix}.b{i}"), b));
    }
    out
}

/// Restore parameters saved by [`mlp_tensors`] into an architecture-matched
/// network.
pub fn load_mlp_params(
    prefix: &str,
    tensors: &[(String, Tensor)],
    mlp: &mut crate::models::Mlp,
) -> Result<()> {
    for i in 0..mlp.weights.len() {
        let wname = format!("{prefix}.w{i}");
        let bname = format!("{prefix}.b{i}");
        let find = |name: &str| -> Result<&Tensor> {
            tensors
                .iter()
                .find(|(n, _)| n == name)
                .map(|(_, t)| t)
                .ok_or_else(|| Error::Format(format!("checkpoint missing tensor {name:?}")))
        };
        let w = find(&wname)?;
        let b = find(&bname)?;
        if w.shape() != mlp.weights[i].shape() || b.shape() != mlp.biases[i].shape() {
            return Err(Error::ShapeMismatch {
                context: "load_mlp_params",
                expected: mlp.weights[i].shape().to_vec(),
                got: w.shape().to_vec(),
            });
        }
        mlp.weights[i] = w.clone();
        mlp.biases[i] = b.clone();
    }
    Ok(())
}
