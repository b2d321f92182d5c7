//! Scalar volumes, binary masks, resampling and the z-axis alignment score.
//!
//! Voxel `(i, j, k)` is centred at `origin + (i, j, k) * spacing`; data is
//! stored with x varying fastest. Orientation is assumed to be axis aligned
//! (RAS+ reorientation happens upstream).

use nalgebra::{Matrix3, SymmetricEigen, Vector3};
use rayon::prelude::*;

use crate::error::{Error, Result};

/// Grid geometry shared by a volume and its mask.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Geometry {
    pub dims: [usize; 3],
    pub spacing: [f64; 3],
    pub origin: [f64; 3],
}

impl Geometry {
    pub fn new(dims: [usize; 3], spacing: [f64; 3], origin: [f64; 3]) -> Result<Self> {
        if dims.contains(&0) {
            return Err(Error::invalid(format!("dims must be positive, got {dims:?}")));
        }
        if spacing.iter().any(|&s| !(s > 0.0) || !s.is_finite()) {
            return Err(Error::invalid(format!(
                "spacing must be positive, got {spacing:?}"
            )));
        }
        if origin.iter().any(|o| !o.is_finite()) {
            return Err(Error::invalid("origin must be finite"));
        }
        Ok(Self {
            dims,
            spacing,
            origin,
        })
    }

    pub fn len(&self) -> usize {
        self.dims[0] * self.dims[1] * self.dims[2]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        i + self.dims[0] * (j + self.dims[1] * k)
    }

    /// Physical position of a voxel centre.
    pub fn voxel_center(&self, i: usize, j: usize, k: usize) -> [f64; 3] {
        [
            self.origin[0] + i as f64 * self.spacing[0],
            self.origin[1] + j as f64 * self.spacing[1],
            self.origin[2] + k as f64 * self.spacing[2],
        ]
    }

    /// Continuous voxel coordinates of a physical point.
    #[inline]
    pub fn continuous_index(&self, p: [f64; 3]) -> [f64; 3] {
        [
            (p[0] - self.origin[0]) / self.spacing[0],
            (p[1] - self.origin[1]) / self.spacing[1],
            (p[2] - self.origin[2]) / self.spacing[2],
        ]
    }

    /// Centre of the voxel grid in physical coordinates.
    pub fn center(&self) -> [f64; 3] {
        let mut c = [0.0; 3];
        for a in 0..3 {
            c[a] = self.origin[a] + 0.5 * (self.dims[a] - 1) as f64 * self.spacing[a];
        }
        c
    }

    /// The eight outer corners of the voxel footprint.
    pub fn corners(&self) -> [[f64; 3]; 8] {
        let lo: [f64; 3] = std::array::from_fn(|a| self.origin[a] - 0.5 * self.spacing[a]);
        let hi: [f64; 3] =
            std::array::from_fn(|a| lo[a] + self.dims[a] as f64 * self.spacing[a]);
        std::array::from_fn(|c| {
            [
                if c & 1 == 0 { lo[0] } else { hi[0] },
                if c & 2 == 0 { lo[1] } else { hi[1] },
                if c & 4 == 0 { lo[2] } else { hi[2] },
            ]
        })
    }

    /// Geometry after resampling to isotropic spacing `t`, keeping the outer
    /// edge of the first voxel fixed.
    pub fn resampled_isotropic(&self, t: f64) -> Result<Self> {
        if !(t > 0.0) || !t.is_finite() {
            return Err(Error::invalid(format!("target spacing must be positive, got {t}")));
        }
        let mut dims = [0; 3];
        let mut origin = [0.0; 3];
        for a in 0..3 {
            dims[a] = ceil_ratio(self.dims[a] as f64 * self.spacing[a], t);
            origin[a] = self.origin[a] + 0.5 * (t - self.spacing[a]);
        }
        Self::new(dims, [t; 3], origin)
    }

    fn with_z_spacing(&self, sz: f64) -> Result<Self> {
        let mut g = *self;
        g.dims[2] = ceil_ratio(self.dims[2] as f64 * self.spacing[2], sz);
        g.origin[2] = self.origin[2] + 0.5 * (sz - self.spacing[2]);
        g.spacing[2] = sz;
        Self::new(g.dims, g.spacing, g.origin)
    }
}

/// `ceil(a / b)` that ignores floating-point dust on exact multiples.
fn ceil_ratio(a: f64, b: f64) -> usize {
    let r = a / b;
    let rounded = r.round();
    if (r - rounded).abs() < 1e-9 * rounded.max(1.0) {
        rounded as usize
    } else {
        r.ceil() as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Interp {
    #[default]
    Linear,
    Nearest,
}

impl std::str::FromStr for Interp {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "linear" => Ok(Interp::Linear),
            "nearest" => Ok(Interp::Nearest),
            _ => Err(Error::invalid(format!("unknown interpolation mode `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Volume {
    geom: Geometry,
    data: Vec<f32>,
}

impl Volume {
    pub fn new(geom: Geometry, data: Vec<f32>) -> Result<Self> {
        if data.len() != geom.len() {
            return Err(Error::invalid(format!(
                "data length {} does not match dims {:?}",
                data.len(),
                geom.dims
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::Numeric(format!("non-finite voxel at linear index {pos}")));
        }
        Ok(Self { geom, data })
    }

    pub fn filled(geom: Geometry, value: f32) -> Self {
        Self {
            data: vec![value; geom.len()],
            geom,
        }
    }

    /// Fills the grid by evaluating `f` at every voxel centre.
    pub fn from_fn(geom: Geometry, f: impl Fn([f64; 3]) -> f32 + Sync) -> Result<Self> {
        let [nx, ny, nz] = geom.dims;
        let data: Vec<f32> = (0..nz)
            .into_par_iter()
            .flat_map_iter(|k| {
                let f = &f;
                (0..ny).flat_map(move |j| (0..nx).map(move |i| f(geom.voxel_center(i, j, k))))
            })
            .collect();
        Self::new(geom, data)
    }

    pub fn geometry(&self) -> &Geometry {
        &self.geom
    }

    pub fn dims(&self) -> [usize; 3] {
        self.geom.dims
    }

    pub fn spacing(&self) -> [f64; 3] {
        self.geom.spacing
    }

    pub fn origin(&self) -> [f64; 3] {
        self.geom.origin
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn get(&self, i: usize, j: usize, k: usize) -> f32 {
        self.data[self.geom.index(i, j, k)]
    }

    pub fn min_max(&self) -> (f32, f32) {
        self.data
            .iter()
            .fold((f32::INFINITY, f32::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            })
    }

    /// Samples at a physical point; points outside the voxel footprint
    /// return `fill`.
    pub fn sample_at(&self, p: [f64; 3], mode: Interp, fill: f64) -> Result<f64> {
        if p.iter().any(|c| c.is_nan()) {
            return Err(Error::invalid("NaN sample coordinate"));
        }
        Ok(self.sample_unchecked(p, mode, fill))
    }

    #[inline]
    pub(crate) fn sample_unchecked(&self, p: [f64; 3], mode: Interp, fill: f64) -> f64 {
        let c = self.geom.continuous_index(p);
        let d = self.geom.dims;
        for a in 0..3 {
            if !(c[a] >= -0.5 && c[a] < d[a] as f64 - 0.5) {
                return fill;
            }
        }
        match mode {
            Interp::Nearest => {
                let i = (c[0] + 0.5).floor() as usize;
                let j = (c[1] + 0.5).floor() as usize;
                let k = (c[2] + 0.5).floor() as usize;
                self.get(i, j, k) as f64
            }
            Interp::Linear => {
                let mut lo = [0usize; 3];
                let mut hi = [0usize; 3];
                let mut t = [0.0f64; 3];
                for a in 0..3 {
                    let x = c[a].clamp(0.0, (d[a] - 1) as f64);
                    let f = x.floor();
                    lo[a] = f as usize;
                    hi[a] = (lo[a] + 1).min(d[a] - 1);
                    t[a] = x - f;
                }
                let v = |i: usize, j: usize, k: usize| self.get(i, j, k) as f64;
                let c00 = v(lo[0], lo[1], lo[2]) * (1.0 - t[0]) + v(hi[0], lo[1], lo[2]) * t[0];
                let c10 = v(lo[0], hi[1], lo[2]) * (1.0 - t[0]) + v(hi[0], hi[1], lo[2]) * t[0];
                let c01 = v(lo[0], lo[1], hi[2]) * (1.0 - t[0]) + v(hi[0], lo[1], hi[2]) * t[0];
                let c11 = v(lo[0], hi[1], hi[2]) * (1.0 - t[0]) + v(hi[0], hi[1], hi[2]) * t[0];
                let c0 = c00 * (1.0 - t[1]) + c10 * t[1];
                let c1 = c01 * (1.0 - t[1]) + c11 * t[1];
                c0 * (1.0 - t[2]) + c1 * t[2]
            }
        }
    }

    /// Resamples onto an isotropic grid. Output voxels lying past the input
    /// footprint (from the ceil in the extent arithmetic) clamp to the edge.
    pub fn resample_isotropic(&self, target: f64, mode: Interp) -> Result<Volume> {
        let out = self.geom.resampled_isotropic(target)?;
        resample_into(out, |p| {
            let q = clamp_to_grid(&self.geom, p);
            self.sample_unchecked(q, mode, 0.0) as f32
        })
        .and_then(|data| Volume::new(out, data))
    }

    /// Coarsens the z axis to `z_spacing` by averaging the input slabs each
    /// output voxel covers, weighted by overlap. x and y are untouched.
    pub fn anisotropize(&self, z_spacing: f64) -> Result<Volume> {
        let sz = self.geom.spacing[2];
        if !z_spacing.is_finite() || z_spacing < sz {
            return Err(Error::invalid(format!(
                "z spacing {z_spacing} is smaller than the current {sz}"
            )));
        }
        let out = self.geom.with_z_spacing(z_spacing)?;
        let [nx, ny, nz_in] = self.geom.dims;
        let plane = nx * ny;
        let mut data = vec![0.0f32; out.len()];
        for (ko, slab) in data.chunks_mut(plane).enumerate() {
            // Output slab footprint, in input slice units from the first edge.
            let lo = ko as f64 * z_spacing / sz;
            let hi = ((ko + 1) as f64 * z_spacing / sz).min(nz_in as f64);
            let mut weights = Vec::new();
            let mut k = lo.floor() as usize;
            while (k as f64) < hi && k < nz_in {
                let w = (hi.min(k as f64 + 1.0) - lo.max(k as f64)).max(0.0);
                if w > 0.0 {
                    weights.push((k, w));
                }
                k += 1;
            }
            let total: f64 = weights.iter().map(|(_, w)| w).sum();
            for (idx, v) in slab.iter_mut().enumerate() {
                let acc: f64 = weights
                    .iter()
                    .map(|&(k, w)| w * self.data[k * plane + idx] as f64)
                    .sum();
                *v = (acc / total) as f32;
            }
        }
        Volume::new(out, data)
    }

    /// Rescales intensities to [0, 1]; a constant volume maps to zeros.
    pub fn min_max_normalized(&self) -> Volume {
        let (lo, hi) = self.min_max();
        let range = hi - lo;
        let data = if range > 0.0 {
            self.data.iter().map(|&v| (v - lo) / range).collect()
        } else {
            vec![0.0; self.data.len()]
        };
        Volume {
            geom: self.geom,
            data,
        }
    }
}

fn clamp_to_grid(g: &Geometry, p: [f64; 3]) -> [f64; 3] {
    let mut q = p;
    for a in 0..3 {
        let last = g.origin[a] + (g.dims[a] - 1) as f64 * g.spacing[a];
        q[a] = q[a].clamp(g.origin[a], last);
    }
    q
}

fn resample_into<T: Send>(out: Geometry, f: impl Fn([f64; 3]) -> T + Sync) -> Result<Vec<T>> {
    let [nx, ny, nz] = out.dims;
    Ok((0..nz)
        .into_par_iter()
        .flat_map_iter(|k| {
            let f = &f;
            (0..ny).flat_map(move |j| (0..nx).map(move |i| f(out.voxel_center(i, j, k))))
        })
        .collect())
}

/// Binary segmentation on the same grid as its volume.
#[derive(Debug, Clone, PartialEq)]
pub struct Mask {
    geom: Geometry,
    data: Vec<u8>,
}

impl Mask {
    pub fn new(geom: Geometry, data: Vec<u8>) -> Result<Self> {
        if data.len() != geom.len() {
            return Err(Error::invalid(format!(
                "mask length {} does not match dims {:?}",
                data.len(),
                geom.dims
            )));
        }
        if let Some(pos) = data.iter().position(|&v| v > 1) {
            return Err(Error::invalid(format!(
                "mask value {} at index {pos} is not 0/1",
                data[pos]
            )));
        }
        Ok(Self { geom, data })
    }

    pub fn from_fn(geom: Geometry, f: impl Fn([f64; 3]) -> bool + Sync) -> Result<Self> {
        let data = resample_into(geom, |p| u8::from(f(p)))?;
        Self::new(geom, data)
    }

    pub fn geometry(&self) -> &Geometry {
        &self.geom
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn get(&self, i: usize, j: usize, k: usize) -> bool {
        self.data[self.geom.index(i, j, k)] != 0
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&v| v != 0).count()
    }

    /// Nearest-neighbour lookup; outside the grid is background.
    #[inline]
    pub fn contains(&self, p: [f64; 3]) -> bool {
        let c = self.geom.continuous_index(p);
        let d = self.geom.dims;
        let mut idx = [0usize; 3];
        for a in 0..3 {
            if !(c[a] >= -0.5 && c[a] < d[a] as f64 - 0.5) {
                return false;
            }
            idx[a] = (c[a] + 0.5).floor() as usize;
        }
        self.get(idx[0], idx[1], idx[2])
    }

    /// Physical centres of all foreground voxels.
    pub fn foreground_points(&self) -> Vec<[f64; 3]> {
        let [nx, ny, nz] = self.geom.dims;
        let mut pts = Vec::new();
        for k in 0..nz {
            for j in 0..ny {
                for i in 0..nx {
                    if self.get(i, j, k) {
                        pts.push(self.geom.voxel_center(i, j, k));
                    }
                }
            }
        }
        pts
    }

    pub fn centroid(&self) -> Result<[f64; 3]> {
        let pts = self.foreground_points();
        if pts.is_empty() {
            return Err(Error::invalid("mask is empty"));
        }
        let mut c = [0.0; 3];
        for p in &pts {
            for a in 0..3 {
                c[a] += p[a];
            }
        }
        Ok(c.map(|v| v / pts.len() as f64))
    }

    pub fn resample_isotropic(&self, target: f64) -> Result<Mask> {
        let out = self.geom.resampled_isotropic(target)?;
        let data = resample_into(out, |p| u8::from(self.contains(clamp_to_grid(&self.geom, p))))?;
        Mask::new(out, data)
    }

    /// z coarsening by nearest-neighbour pick at each output slab centre.
    pub fn anisotropize(&self, z_spacing: f64) -> Result<Mask> {
        let sz = self.geom.spacing[2];
        if !z_spacing.is_finite() || z_spacing < sz {
            return Err(Error::invalid(format!(
                "z spacing {z_spacing} is smaller than the current {sz}"
            )));
        }
        let out = self.geom.with_z_spacing(z_spacing)?;
        let data = resample_into(out, |p| u8::from(self.contains(clamp_to_grid(&self.geom, p))))?;
        Mask::new(out, data)
    }
}

/// Outcome of the major-axis alignment measurement.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Alignment {
    /// |cos| between the principal axis and +z, in [0, 1].
    pub score: f64,
    /// The top eigenvalue was (numerically) repeated.
    pub tie: bool,
}

/// Absolute cosine between the principal axis of the mask's physical voxel
/// coordinates and the z axis.
pub fn z_axis_alignment(mask: &Mask) -> Result<Alignment> {
    let pts = mask.foreground_points();
    if pts.is_empty() {
        return Err(Error::invalid("z-axis alignment of an empty mask"));
    }
    let n = pts.len() as f64;
    let mut mean = Vector3::zeros();
    for p in &pts {
        mean += Vector3::from(*p);
    }
    mean /= n;
    let mut cov = Matrix3::zeros();
    for p in &pts {
        let d = Vector3::from(*p) - mean;
        cov += d * d.transpose();
    }
    cov /= n;

    let eig = SymmetricEigen::new(cov);
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let top = eig.eigenvalues[order[0]];
    let scale = top.abs().max(f64::MIN_POSITIVE);
    let tied: Vec<usize> = order
        .iter()
        .copied()
        .filter(|&k| (top - eig.eigenvalues[k]).abs() <= 1e-9 * scale)
        .collect();
    if tied.len() == 1 {
        let v = eig.eigenvectors.column(order[0]);
        return Ok(Alignment {
            score: v[2].abs().min(1.0),
            tie: false,
        });
    }
    // Inside a repeated eigenspace the direction closest to z is the
    // normalized projection of z onto it; its cosine is the projection length.
    let proj_sq: f64 = tied
        .iter()
        .map(|&k| eig.eigenvectors.column(k)[2].powi(2))
        .sum();
    Ok(Alignment {
        score: proj_sq.sqrt().min(1.0),
        tie: true,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn ramp(dims: [usize; 3], spacing: [f64; 3]) -> Volume {
        let g = Geometry::new(dims, spacing, [0.0; 3]).unwrap();
        Volume::from_fn(g, |p| (p[0] + 2.0 * p[1] + 3.0 * p[2]) as f32).unwrap()
    }

    #[test]
    fn identity_resample() {
        let v = ramp([10, 10, 10], [1.0; 3]);
        let r = v.resample_isotropic(1.0, Interp::Linear).unwrap();
        assert_eq!(r.geometry(), v.geometry());
        for (a, b) in r.data().iter().zip(v.data()) {
            assert!((a - b).abs() <= 1e-9);
        }
    }

    #[test]
    fn resample_extent_arithmetic() {
        let v = ramp([10, 10, 10], [1.0, 1.0, 2.0]);
        let r = v.resample_isotropic(1.0, Interp::Linear).unwrap();
        assert_eq!(r.dims(), [10, 10, 20]);
        assert_eq!(r.spacing(), [1.0; 3]);
    }

    #[test]
    fn resample_constant_stays_constant() {
        let g = Geometry::new([7, 5, 9], [0.7, 1.3, 2.1], [1.0, -2.0, 3.0]).unwrap();
        let v = Volume::filled(g, 4.25);
        for t in [0.5, 1.0, 1.7] {
            for mode in [Interp::Linear, Interp::Nearest] {
                let r = v.resample_isotropic(t, mode).unwrap();
                assert!(r.data().iter().all(|&x| x == 4.25));
            }
        }
    }

    #[test]
    fn resample_rejects_bad_spacing() {
        let v = ramp([4, 4, 4], [1.0; 3]);
        assert!(v.resample_isotropic(0.0, Interp::Linear).is_err());
        assert!(v.resample_isotropic(-1.0, Interp::Nearest).is_err());
    }

    #[test]
    fn sample_at_voxel_centres_and_midpoints() {
        let g = Geometry::new([2, 1, 1], [1.0; 3], [0.0; 3]).unwrap();
        let v = Volume::new(g, vec![0.0, 10.0]).unwrap();
        assert_eq!(v.sample_at([1.0, 0.0, 0.0], Interp::Linear, 0.0).unwrap(), 10.0);
        assert_eq!(v.sample_at([0.0, 0.0, 0.0], Interp::Nearest, 0.0).unwrap(), 0.0);
        assert_abs_diff_eq!(
            v.sample_at([0.5, 0.0, 0.0], Interp::Linear, 0.0).unwrap(),
            5.0
        );
        assert_eq!(v.sample_at([5.0, 0.0, 0.0], Interp::Linear, 0.0).unwrap(), 0.0);
        assert_eq!(v.sample_at([5.0, 0.0, 0.0], Interp::Linear, -7.0).unwrap(), -7.0);
        assert!(v.sample_at([f64::NAN, 0.0, 0.0], Interp::Linear, 0.0).is_err());
    }

    #[test]
    fn anisotropize_sixty_to_ten() {
        let g = Geometry::new([4, 4, 60], [1.0; 3], [0.0; 3]).unwrap();
        let v = Volume::from_fn(g, |p| p[2] as f32).unwrap();
        let a = v.anisotropize(6.0).unwrap();
        assert_eq!(a.dims(), [4, 4, 10]);
        assert_eq!(a.spacing(), [1.0, 1.0, 6.0]);
        // Box average of z = 0..5 is 2.5, which is also the new slab centre.
        assert_abs_diff_eq!(a.get(0, 0, 0) as f64, 2.5, epsilon = 1e-6);
        assert_abs_diff_eq!(a.origin()[2], 2.5);
        assert!(v.anisotropize(0.5).is_err());
    }

    #[test]
    fn anisotropize_identity_and_constant() {
        let v = ramp([5, 4, 6], [1.0, 1.0, 1.5]);
        assert_eq!(v.anisotropize(1.5).unwrap(), v);
        let c = Volume::filled(*v.geometry(), 3.0);
        assert!(c.anisotropize(4.0).unwrap().data().iter().all(|&x| x == 3.0));
    }

    #[test]
    fn alignment_line_and_disc() {
        let g = Geometry::new([11, 11, 11], [1.0; 3], [0.0; 3]).unwrap();
        let line = Mask::from_fn(g, |p| p[0] == 5.0 && p[1] == 5.0).unwrap();
        assert_abs_diff_eq!(z_axis_alignment(&line).unwrap().score, 1.0, epsilon = 1e-12);
        let disc = Mask::from_fn(g, |p| {
            p[2] == 5.0 && (p[0] - 5.0).powi(2) + (p[1] - 3.0).powi(2) * 4.0 <= 16.0
        })
        .unwrap();
        assert!(z_axis_alignment(&disc).unwrap().score < 1e-6);
    }

    #[test]
    fn alignment_tie_uses_best_z_direction() {
        // A round disc has a repeated top eigenvalue spanning the xy plane.
        let g = Geometry::new([11, 11, 11], [1.0; 3], [0.0; 3]).unwrap();
        let disc = Mask::from_fn(g, |p| {
            p[2] == 5.0 && (p[0] - 5.0).powi(2) + (p[1] - 5.0).powi(2) <= 16.0
        })
        .unwrap();
        let a = z_axis_alignment(&disc).unwrap();
        assert!(a.tie);
        assert!(a.score < 1e-6);
    }

    #[test]
    fn alignment_empty_mask_errors() {
        let g = Geometry::new([3, 3, 3], [1.0; 3], [0.0; 3]).unwrap();
        let m = Mask::new(g, vec![0; 27]).unwrap();
        assert!(z_axis_alignment(&m).is_err());
    }

    #[test]
    fn mask_rejects_non_binary() {
        let g = Geometry::new([2, 1, 1], [1.0; 3], [0.0; 3]).unwrap();
        assert!(Mask::new(g, vec![0, 2]).is_err());
    }
}
