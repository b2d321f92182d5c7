//! Slice-to-vector encoders and the FVEC feature file format.
//!
//! The built-in encoder is a fixed random projection of the standardized,
//! 32x32-resized slice. It stands in for a frozen foundation-model encoder;
//! externally computed features (e.g. 384-d ViT embeddings) are ingested
//! through FVEC files instead.

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::slicer::{Image, SliceStack};

pub const RESIZE: usize = 32;
const FLAT: usize = RESIZE * RESIZE;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FeatureSource {
    External,
    Builtin,
}

/// One feature row per slice, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    rows: usize,
    dim: usize,
    data: Vec<f32>,
    pub source: FeatureSource,
    pub manifest_hash: Option<String>,
}

impl FeatureMatrix {
    pub fn new(rows: usize, dim: usize, data: Vec<f32>, source: FeatureSource) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("feature dimension must be positive"));
        }
        if data.len() != rows * dim {
            return Err(Error::invalid(format!(
                "feature data length {} is not {rows} x {dim}",
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { row: pos / dim });
        }
        Ok(Self {
            rows,
            dim,
            data,
            source,
            manifest_hash: None,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    /// Rows reordered so that new row `k` is old row `perm[k]`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        let data = perm.iter().flat_map(|&i| self.row(i).iter().copied()).collect();
        Self {
            data,
            ..self.clone()
        }
    }

    pub fn to_fvec(&self) -> Vec<u8> {
        let hash = self.manifest_hash.as_deref().unwrap_or("-");
        let mut out = format!("FVEC {} {} {hash}\n", self.rows, self.dim).into_bytes();
        out.reserve(self.data.len() * 4);
        for v in &self.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_fvec(bytes: &[u8], expected_rows: Option<usize>) -> Result<Self> {
        let nl = bytes
            .iter()
            .position(|&b| b == b'\n')
            .ok_or_else(|| Error::malformed("FVEC header", "missing header line"))?;
        let header = std::str::from_utf8(&bytes[..nl])
            .map_err(|_| Error::malformed("FVEC header", "header is not ASCII"))?;
        let f: Vec<&str> = header.split_whitespace().collect();
        if f.len() != 4 || f[0] != "FVEC" {
            return Err(Error::malformed("FVEC header", format!("`{header}`")));
        }
        let rows: usize = f[1]
            .parse()
            .map_err(|_| Error::malformed("FVEC header", format!("bad row count `{}`", f[1])))?;
        let dim: usize = f[2]
            .parse()
            .map_err(|_| Error::malformed("FVEC header", format!("bad dimension `{}`", f[2])))?;
        if dim == 0 {
            return Err(Error::malformed("FVEC header", "dimension must be positive"));
        }
        if let Some(expected) = expected_rows {
            if rows != expected {
                return Err(Error::RowCount {
                    expected,
                    found: rows,
                });
            }
        }
        let payload = &bytes[nl + 1..];
        if payload.len() != rows * dim * 4 {
            return Err(Error::malformed(
                "FVEC data",
                format!("expected {} bytes, found {}", rows * dim * 4, payload.len()),
            ));
        }
        let data: Vec<f32> = payload
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        let mut m = Self::new(rows, dim, data, FeatureSource::External)?;
        if f[3] != "-" {
            m.manifest_hash = Some(f[3].to_string());
        }
        Ok(m)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_fvec()).map_err(|e| Error::io(path, e))
    }
}

/// Reads externally computed features, checking the row count.
pub fn load_external(path: &Path, expected_rows: usize) -> Result<FeatureMatrix> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    FeatureMatrix::from_fvec(&bytes, Some(expected_rows))
}

/// Bilinear resize with pixel-centre alignment and edge clamping.
pub fn resize_bilinear(img: &Image, out: usize) -> Vec<f64> {
    let s = img.size;
    let scale = s as f64 / out as f64;
    let src = |r: usize, c: usize| img.data[r * s + c] as f64;
    let coord = |dst: usize| -> (usize, usize, f64) {
        let x = ((dst as f64 + 0.5) * scale - 0.5).clamp(0.0, (s - 1) as f64);
        let lo = x.floor() as usize;
        (lo, (lo + 1).min(s - 1), x - lo as f64)
    };
    let mut res = Vec::with_capacity(out * out);
    for r in 0..out {
        let (r0, r1, tr) = coord(r);
        for c in 0..out {
            let (c0, c1, tc) = coord(c);
            let top = src(r0, c0) * (1.0 - tc) + src(r0, c1) * tc;
            let bottom = src(r1, c0) * (1.0 - tc) + src(r1, c1) * tc;
            res.push(top * (1.0 - tr) + bottom * tr);
        }
    }
    res
}

/// Zero mean, unit variance; a constant input maps to zeros.
fn standardize(v: &mut [f64]) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    let sd = var.sqrt();
    if sd <= 1e-12 * mean.abs().max(1.0) {
        v.iter_mut().for_each(|x| *x = 0.0);
    } else {
        v.iter_mut().for_each(|x| *x = (*x - mean) / sd);
    }
}

/// Deterministic Gaussian random-projection encoder.
#[derive(Debug, Clone)]
pub struct BuiltinEncoder {
    dim: usize,
    /// `FLAT x dim`, row-major, already scaled by 1/sqrt(FLAT).
    projection: Vec<f64>,
}

impl BuiltinEncoder {
    pub const DEFAULT_DIM: usize = 64;

    pub fn new(dim: usize, seed: u64) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("encoder dimension must be positive"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let scale = 1.0 / (FLAT as f64).sqrt();
        let projection = (0..FLAT * dim)
            .map(|_| {
                let g: f64 = StandardNormal.sample(&mut rng);
                g * scale
            })
            .collect();
        Ok(Self { dim, projection })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn encode_image(&self, img: &Image) -> Vec<f32> {
        let mut flat = resize_bilinear(img, RESIZE);
        standardize(&mut flat);
        let mut out = vec![0.0f64; self.dim];
        for (p, &x) in flat.iter().enumerate() {
            if x == 0.0 {
                continue;
            }
            let row = &self.projection[p * self.dim..(p + 1) * self.dim];
            for (o, w) in out.iter_mut().zip(row) {
                *o += x * w;
            }
        }
        out.into_iter().map(|v| v as f32).collect()
    }

    pub fn encode(&self, stack: &SliceStack) -> Result<FeatureMatrix> {
        if stack.is_empty() {
            return Err(Error::invalid("cannot encode an empty slice stack"));
        }
        let data: Vec<f32> = stack
            .slices
            .iter()
            .flat_map(|img| self.encode_image(img))
            .collect();
        let mut m = FeatureMatrix::new(stack.len(), self.dim, data, FeatureSource::Builtin)?;
        m.manifest_hash = Some(stack.manifest_hash());
        Ok(m)
    }
}

/// One-shot form of [`BuiltinEncoder::encode`].
pub fn encode_builtin(stack: &SliceStack, dim: usize, seed: u64) -> Result<FeatureMatrix> {
    BuiltinEncoder::new(dim, seed)?.encode(stack)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pattern(size: usize, f: impl Fn(usize, usize) -> f32) -> Image {
        let data = (0..size * size).map(|k| f(k / size, k % size)).collect();
        Image::new(size, data).unwrap()
    }

    #[test]
    fn constant_slice_encodes_to_zero() {
        let enc = BuiltinEncoder::new(16, 3).unwrap();
        let v = enc.encode_image(&pattern(20, |_, _| 0.7));
        assert!(v.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn encoding_is_deterministic() {
        let img = pattern(40, |r, c| ((r * 7 + c * 3) % 11) as f32);
        let a = BuiltinEncoder::new(24, 9).unwrap().encode_image(&img);
        let b = BuiltinEncoder::new(24, 9).unwrap().encode_image(&img);
        assert_eq!(a, b);
        let c = BuiltinEncoder::new(24, 10).unwrap().encode_image(&img);
        assert_ne!(a, c);
    }

    #[test]
    fn resize_identity_at_same_size() {
        let img = pattern(32, |r, c| (r * 32 + c) as f32);
        let out = resize_bilinear(&img, 32);
        for (a, b) in out.iter().zip(&img.data) {
            assert!((a - *b as f64).abs() < 1e-12);
        }
    }

    #[test]
    fn fvec_round_trip_and_errors() {
        let data: Vec<f32> = (0..24 * 384).map(|k| (k as f32 * 0.37).sin()).collect();
        let mut m = FeatureMatrix::new(24, 384, data, FeatureSource::External).unwrap();
        m.manifest_hash = Some("abc123".into());
        let bytes = m.to_fvec();
        let back = FeatureMatrix::from_fvec(&bytes, Some(24)).unwrap();
        assert_eq!(back, m);
        assert_eq!(back.dim(), 384);

        assert!(matches!(
            FeatureMatrix::from_fvec(&bytes, Some(23)),
            Err(Error::RowCount {
                expected: 23,
                found: 24
            })
        ));

        let mut nan = m.clone().to_fvec();
        let header_len = nan.iter().position(|&b| b == b'\n').unwrap() + 1;
        let at = header_len + (3 * 384 + 5) * 4;
        nan[at..at + 4].copy_from_slice(&f32::NAN.to_le_bytes());
        assert!(matches!(
            FeatureMatrix::from_fvec(&nan, Some(24)),
            Err(Error::NonFinite { row: 3 })
        ));

        assert!(matches!(
            FeatureMatrix::from_fvec(b"FVEX 1 2 -\n", None),
            Err(Error::Malformed { .. })
        ));
    }
}
