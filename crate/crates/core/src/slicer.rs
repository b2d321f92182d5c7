//! Planar cross-sections of a volume under the five slicing strategies.
//!
//! Every plane belongs to a pencil of parallel planes through a reference
//! point (the lesion centroid when a mask is available) and is identified by
//! its signed offset along the normal. For each requested direction the
//! plane with the largest lesion cross-section is kept; all views of one
//! volume share a single square field of view cropped symmetrically around
//! the lesion.

use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::sphere::{SpherePointSet, Vec3};
use crate::volume::{Interp, Mask, Volume};

const FRAME_TOL: f64 = 1e-9;

/// In-plane frame for a unit normal, right handed (`u x v = normal`).
///
/// `u` is `normalize(z x normal)`, switching the reference to `x` when the
/// normal is within 1e-6 of the z axis.
pub fn plane_basis(normal: &Vec3) -> Result<(Vec3, Vec3)> {
    let len = normal.norm();
    if !(len > 1e-12) || !len.is_finite() {
        return Err(Error::invalid("plane normal must be non-zero"));
    }
    let n = normal / len;
    let reference = if n.z.abs() > 1.0 - 1e-6 {
        Vec3::x()
    } else {
        Vec3::z()
    };
    let u = reference.cross(&n).normalize();
    let v = n.cross(&u);
    Ok((u, v))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SlicePlane {
    pub normal: Vec3,
    pub basis_u: Vec3,
    pub basis_v: Vec3,
    /// Pencil origin; the image centre is `center + offset_mm * normal`.
    pub center: Vec3,
    pub offset_mm: f64,
    /// Index into the sphere point set, or -1 for canonical-strategy planes.
    pub source_point_index: i64,
}

impl SlicePlane {
    pub fn new(normal: Vec3, center: Vec3, offset_mm: f64, source_point_index: i64) -> Result<Self> {
        let n = normal.normalize();
        let (u, v) = plane_basis(&n)?;
        Ok(Self {
            normal: n,
            basis_u: u,
            basis_v: v,
            center,
            offset_mm,
            source_point_index,
        })
    }

    pub fn with_offset(&self, offset_mm: f64) -> Self {
        Self {
            offset_mm,
            ..self.clone()
        }
    }

    pub fn is_orthonormal(&self) -> bool {
        let (n, u, v) = (&self.normal, &self.basis_u, &self.basis_v);
        (n.norm() - 1.0).abs() < FRAME_TOL
            && (u.norm() - 1.0).abs() < FRAME_TOL
            && (v.norm() - 1.0).abs() < FRAME_TOL
            && u.dot(v).abs() < FRAME_TOL
            && u.dot(n).abs() < FRAME_TOL
            && v.dot(n).abs() < FRAME_TOL
            && (u.cross(v) - n).norm() < FRAME_TOL
    }

    /// Physical position of pixel `(row, col)` on an `size` x `size` grid.
    /// Column steps along `u`, row steps along `v`; pixel `(size/2, size/2)`
    /// sits on the plane centre.
    #[inline]
    pub fn pixel_position(&self, row: usize, col: usize, size: usize, spacing: f64) -> [f64; 3] {
        let half = (size / 2) as f64;
        let a = (col as f64 - half) * spacing;
        let b = (row as f64 - half) * spacing;
        let p = self.center + self.normal * self.offset_mm + self.basis_u * a + self.basis_v * b;
        [p.x, p.y, p.z]
    }
}

/// Square sampling grid shared by all views of one volume.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FieldOfView {
    pub size_px: usize,
    pub pixel_spacing: f64,
}

impl FieldOfView {
    pub fn new(size_px: usize, pixel_spacing: f64) -> Result<Self> {
        if size_px == 0 {
            return Err(Error::invalid("slice size must be at least one pixel"));
        }
        if !(pixel_spacing > 0.0) || !pixel_spacing.is_finite() {
            return Err(Error::invalid("pixel spacing must be positive"));
        }
        Ok(Self {
            size_px,
            pixel_spacing,
        })
    }

    /// Symmetric crop: side `2 * max |p - centroid| * (1 + margin)` over the
    /// lesion voxels, split into `size_px` pixels.
    pub fn around_lesion(mask: &Mask, centroid: &Vec3, size_px: usize, margin: f64) -> Result<Self> {
        let pts = mask.foreground_points();
        if pts.is_empty() {
            return Err(Error::invalid("mask is empty"));
        }
        let radius = pts
            .iter()
            .map(|p| (Vec3::from(*p) - centroid).norm())
            .fold(0.0, f64::max);
        // A single-voxel lesion still needs a footprint.
        let min_spacing = mask.geometry().spacing.iter().copied().fold(f64::INFINITY, f64::min);
        let side = 2.0 * radius.max(0.5 * min_spacing) * (1.0 + margin);
        Self::new(size_px, side / size_px as f64)
    }
}

/// Single-channel square image, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    pub size: usize,
    pub data: Vec<f32>,
}

impl Image {
    pub fn new(size: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != size * size {
            return Err(Error::invalid(format!(
                "image data length {} is not {size}x{size}",
                data.len()
            )));
        }
        Ok(Self { size, data })
    }

    pub fn get(&self, row: usize, col: usize) -> f32 {
        self.data[row * self.size + col]
    }
}

pub fn extract_slice(
    volume: &Volume,
    plane: &SlicePlane,
    fov: FieldOfView,
    mode: Interp,
    fill: f64,
) -> Image {
    let s = fov.size_px;
    let mut data = Vec::with_capacity(s * s);
    for row in 0..s {
        for col in 0..s {
            let p = plane.pixel_position(row, col, s, fov.pixel_spacing);
            data.push(volume.sample_unchecked(p, mode, fill) as f32);
        }
    }
    Image { size: s, data }
}

/// Number of grid pixels whose nearest mask voxel is foreground.
pub fn lesion_pixel_count(mask: &Mask, plane: &SlicePlane, fov: FieldOfView) -> usize {
    let s = fov.size_px;
    let mut count = 0;
    for row in 0..s {
        for col in 0..s {
            if mask.contains(plane.pixel_position(row, col, s, fov.pixel_spacing)) {
                count += 1;
            }
        }
    }
    count
}

/// Offset (relative to `center`) of the plane with the largest lesion
/// cross-section along `normal`. Offsets are swept on multiples of `step`
/// across the lesion's extent along the normal; planes outside it cut no
/// lesion. Ties go to the offset nearest the centroid projection, then to
/// the smaller offset.
pub fn largest_lesion_offset(
    mask: &Mask,
    normal: &Vec3,
    center: &Vec3,
    step: f64,
    fov: FieldOfView,
) -> Result<(f64, usize)> {
    if !(step > 0.0) || !step.is_finite() {
        return Err(Error::invalid("offset step must be positive"));
    }
    let pts = mask.foreground_points();
    if pts.is_empty() {
        return Err(Error::invalid("largest-lesion search on an empty mask"));
    }
    let plane = SlicePlane::new(*normal, *center, 0.0, -1)?;
    let n = plane.normal;
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    let mut centroid_proj = 0.0;
    for p in &pts {
        let d = (Vec3::from(*p) - center).dot(&n);
        lo = lo.min(d);
        hi = hi.max(d);
        centroid_proj += d;
    }
    centroid_proj /= pts.len() as f64;

    let k_lo = (lo / step).floor() as i64 - 1;
    let k_hi = (hi / step).ceil() as i64 + 1;
    let mut best: Option<(f64, usize)> = None;
    for k in k_lo..=k_hi {
        let offset = k as f64 * step;
        let count = lesion_pixel_count(mask, &plane.with_offset(offset), fov);
        let better = match best {
            None => true,
            Some((b_off, b_count)) => {
                count > b_count
                    || (count == b_count && {
                        let d_new = (offset - centroid_proj).abs();
                        let d_old = (b_off - centroid_proj).abs();
                        d_new < d_old - 1e-12 || ((d_new - d_old).abs() <= 1e-12 && offset < b_off)
                    })
            }
        };
        if better {
            best = Some((offset, count));
        }
    }
    Ok(best.expect("sweep visits at least one offset"))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Strategy {
    Axial,
    AxialPlus,
    TwoFiveD,
    TwoFiveDPlus,
    Omni,
}

impl Strategy {
    pub const ALL: [Strategy; 5] = [
        Strategy::Axial,
        Strategy::AxialPlus,
        Strategy::TwoFiveD,
        Strategy::TwoFiveDPlus,
        Strategy::Omni,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Strategy::Axial => "axial",
            Strategy::AxialPlus => "axial_plus",
            Strategy::TwoFiveD => "two5d",
            Strategy::TwoFiveDPlus => "two5d_plus",
            Strategy::Omni => "omni",
        }
    }

    /// Rejects view counts the strategy cannot produce.
    pub fn check_views(self, n_views: usize) -> Result<()> {
        let ok = match self {
            Strategy::Axial => n_views == 1,
            Strategy::TwoFiveD => n_views == 3,
            Strategy::AxialPlus | Strategy::TwoFiveDPlus | Strategy::Omni => n_views >= 1,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::invalid(format!(
                "strategy {} cannot produce {n_views} views",
                self.name()
            )))
        }
    }
}

impl std::fmt::Display for Strategy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Strategy::ALL
            .into_iter()
            .find(|st| st.name() == s)
            .ok_or_else(|| Error::invalid(format!("unknown slicing strategy `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SliceOptions {
    pub size_px: usize,
    /// Overrides the lesion-derived pixel spacing when set.
    pub pixel_spacing: Option<f64>,
    /// Fractional margin added to the lesion crop.
    pub margin: f64,
    /// Offset sweep step; defaults to the smallest voxel spacing.
    pub step: Option<f64>,
    pub mode: Interp,
    pub fill: f64,
    /// Min-max normalize the volume to [0, 1] before sampling.
    pub normalize: bool,
}

impl Default for SliceOptions {
    fn default() -> Self {
        Self {
            size_px: 64,
            pixel_spacing: None,
            margin: 0.2,
            step: None,
            mode: Interp::Linear,
            fill: 0.0,
            normalize: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SliceStack {
    pub strategy: Strategy,
    pub slices: Vec<Image>,
    pub planes: Vec<SlicePlane>,
    pub size_px: usize,
    pub pixel_spacing: f64,
    pub lesion_areas: Vec<usize>,
    /// Raw intensity range used for min-max normalization, if applied.
    pub intensity_range: Option<(f32, f32)>,
}

impl SliceStack {
    pub fn len(&self) -> usize {
        self.slices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slices.is_empty()
    }

    pub fn max_lesion_area(&self) -> usize {
        self.lesion_areas.iter().copied().max().unwrap_or(0)
    }

    pub fn manifest(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "# tomoview slice manifest");
        let _ = writeln!(out, "strategy {}", self.strategy);
        let _ = writeln!(out, "count {}", self.len());
        let _ = writeln!(out, "size_px {}", self.size_px);
        let _ = writeln!(out, "pixel_spacing_mm {:.17e}", self.pixel_spacing);
        match self.intensity_range {
            Some((lo, hi)) => {
                let _ = writeln!(out, "normalization minmax {lo:.9e} {hi:.9e}");
            }
            None => {
                let _ = writeln!(out, "normalization none");
            }
        }
        let _ = writeln!(
            out,
            "# file nx ny nz ux uy uz vx vy vz cx cy cz offset_mm source lesion_area"
        );
        for (i, (plane, area)) in self.planes.iter().zip(&self.lesion_areas).enumerate() {
            let _ = write!(out, "{}", slice_file_name(i));
            for v in [&plane.normal, &plane.basis_u, &plane.basis_v, &plane.center] {
                let _ = write!(out, " {:.17e} {:.17e} {:.17e}", v.x, v.y, v.z);
            }
            let _ = writeln!(
                out,
                " {:.17e} {} {}",
                plane.offset_mm, plane.source_point_index, area
            );
        }
        out
    }

    pub fn manifest_hash(&self) -> String {
        manifest_digest(&self.manifest())
    }

    /// Writes `manifest.txt` and one raw little-endian float32 file per slice.
    pub fn write_dir(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        for (i, img) in self.slices.iter().enumerate() {
            let path = dir.join(slice_file_name(i));
            let bytes: Vec<u8> = img.data.iter().flat_map(|v| v.to_le_bytes()).collect();
            std::fs::write(&path, bytes).map_err(|e| Error::io(&path, e))?;
        }
        let path = dir.join("manifest.txt");
        std::fs::write(&path, self.manifest()).map_err(|e| Error::io(&path, e))
    }

    pub fn read_dir(dir: &Path) -> Result<Self> {
        let path = dir.join("manifest.txt");
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let bad = |detail: String| Error::malformed("slice manifest", detail);

        let mut strategy = None;
        let mut size_px = None;
        let mut pixel_spacing = None;
        let mut intensity_range = None;
        let mut count = None;
        let mut planes = Vec::new();
        let mut lesion_areas = Vec::new();
        let mut files = Vec::new();
        for line in text.lines() {
            if line.starts_with('#') || line.trim().is_empty() {
                continue;
            }
            let f: Vec<&str> = line.split_whitespace().collect();
            let num = |s: &str| s.parse::<f64>().map_err(|_| bad(format!("bad number `{s}`")));
            match f[0] {
                "strategy" if f.len() == 2 => strategy = Some(f[1].parse::<Strategy>()?),
                "count" if f.len() == 2 => {
                    count = Some(f[1].parse::<usize>().map_err(|_| bad(line.into()))?)
                }
                "size_px" if f.len() == 2 => {
                    size_px = Some(f[1].parse::<usize>().map_err(|_| bad(line.into()))?)
                }
                "pixel_spacing_mm" if f.len() == 2 => pixel_spacing = Some(num(f[1])?),
                "normalization" if f.len() == 2 && f[1] == "none" => {}
                "normalization" if f.len() == 4 && f[1] == "minmax" => {
                    intensity_range = Some((num(f[2])? as f32, num(f[3])? as f32))
                }
                file if f.len() == 16 && file.ends_with(".f32") => {
                    let v = |k: usize| -> Result<Vec3> {
                        Ok(Vec3::new(num(f[k])?, num(f[k + 1])?, num(f[k + 2])?))
                    };
                    planes.push(SlicePlane {
                        normal: v(1)?,
                        basis_u: v(4)?,
                        basis_v: v(7)?,
                        center: v(10)?,
                        offset_mm: num(f[13])?,
                        source_point_index: f[14].parse().map_err(|_| bad(line.into()))?,
                    });
                    lesion_areas.push(f[15].parse().map_err(|_| bad(line.into()))?);
                    files.push(file.to_string());
                }
                _ => return Err(bad(format!("unrecognised line `{line}`"))),
            }
        }
        let strategy = strategy.ok_or_else(|| bad("missing strategy".into()))?;
        let size_px = size_px.ok_or_else(|| bad("missing size_px".into()))?;
        let pixel_spacing = pixel_spacing.ok_or_else(|| bad("missing pixel_spacing_mm".into()))?;
        if count != Some(planes.len()) {
            return Err(Error::RowCount {
                expected: count.unwrap_or(0),
                found: planes.len(),
            });
        }
        let mut slices = Vec::with_capacity(files.len());
        for file in &files {
            let path = dir.join(file);
            let bytes = std::fs::read(&path).map_err(|e| Error::io(&path, e))?;
            if bytes.len() != size_px * size_px * 4 {
                return Err(bad(format!("{file}: expected {} bytes", size_px * size_px * 4)));
            }
            let data = bytes
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect();
            slices.push(Image::new(size_px, data)?);
        }
        Ok(Self {
            strategy,
            slices,
            planes,
            size_px,
            pixel_spacing,
            lesion_areas,
            intensity_range,
        })
    }
}

pub(crate) fn manifest_digest(text: &str) -> String {
    let digest = Sha256::digest(text.as_bytes());
    digest[..8].iter().map(|b| format!("{b:02x}")).collect()
}

fn slice_file_name(i: usize) -> String {
    format!("slice_{i:03}.f32")
}

/// Integer offsets `-(n-1)/2 ..= n/2`: symmetric, extra slice on the positive side.
fn symmetric_steps(n: usize) -> impl Iterator<Item = i64> {
    let lo = -((n as i64 - 1) / 2);
    let hi = n as i64 / 2;
    lo..=hi
}

/// Extracts an `n_views` stack from `volume` following `strategy`.
pub fn slice_volume(
    volume: &Volume,
    mask: &Mask,
    strategy: Strategy,
    n_views: usize,
    points: Option<&SpherePointSet>,
    opts: &SliceOptions,
) -> Result<SliceStack> {
    strategy.check_views(n_views)?;
    if volume.geometry() != mask.geometry() {
        return Err(Error::invalid("volume and mask geometries differ"));
    }
    if strategy == Strategy::Omni {
        match points {
            None => return Err(Error::invalid("omni slicing needs a sphere point set")),
            Some(p) if p.len() != n_views => {
                return Err(Error::invalid(format!(
                    "omni slicing with {n_views} views got {} sphere points",
                    p.len()
                )))
            }
            Some(_) => {}
        }
    }
    let centroid = Vec3::from(mask.centroid()?);
    let fov = match opts.pixel_spacing {
        Some(ps) => FieldOfView::new(opts.size_px, ps)?,
        None => FieldOfView::around_lesion(mask, &centroid, opts.size_px, opts.margin)?,
    };
    let spacing = volume.spacing();
    let step = opts
        .step
        .unwrap_or_else(|| spacing.iter().copied().fold(f64::INFINITY, f64::min));

    // (normal, source index, voxel size along the normal, slice count)
    let axial = (Vec3::z(), spacing[2]);
    let coronal = (Vec3::y(), spacing[1]);
    let sagittal = (Vec3::x(), spacing[0]);
    let groups: Vec<(Vec3, i64, f64, usize)> = match strategy {
        Strategy::Axial => vec![(axial.0, -1, axial.1, 1)],
        Strategy::AxialPlus => vec![(axial.0, -1, axial.1, n_views)],
        Strategy::TwoFiveD => [axial, coronal, sagittal]
            .into_iter()
            .map(|(n, s)| (n, -1, s, 1))
            .collect(),
        Strategy::TwoFiveDPlus => [axial, coronal, sagittal]
            .into_iter()
            .enumerate()
            .map(|(d, (n, s))| (n, -1, s, n_views / 3 + usize::from(d < n_views % 3)))
            .filter(|g| g.3 > 0)
            .collect(),
        Strategy::Omni => points
            .expect("checked above")
            .points()
            .iter()
            .enumerate()
            .map(|(i, p)| (*p, i as i64, 0.0, 1))
            .collect(),
    };

    let planes: Vec<SlicePlane> = groups
        .par_iter()
        .map(|&(normal, source, voxel, count)| -> Result<Vec<SlicePlane>> {
            let (best, _) = largest_lesion_offset(mask, &normal, &centroid, step, fov)?;
            let base = SlicePlane::new(normal, centroid, best, source)?;
            Ok(symmetric_steps(count)
                .map(|k| base.with_offset(best + k as f64 * voxel))
                .collect())
        })
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .flatten()
        .collect();

    let (source, intensity_range) = if opts.normalize {
        let range = volume.min_max();
        (std::borrow::Cow::Owned(volume.min_max_normalized()), Some(range))
    } else {
        (std::borrow::Cow::Borrowed(volume), None)
    };
    let slices: Vec<Image> = planes
        .par_iter()
        .map(|plane| extract_slice(&source, plane, fov, opts.mode, opts.fill))
        .collect();
    let lesion_areas = planes
        .par_iter()
        .map(|plane| lesion_pixel_count(mask, plane, fov))
        .collect();

    Ok(SliceStack {
        strategy,
        slices,
        planes,
        size_px: fov.size_px,
        pixel_spacing: fov.pixel_spacing,
        lesion_areas,
        intensity_range,
    })
}
