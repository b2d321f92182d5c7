//! Synthetic lesion phantoms.
//!
//! A phantom is an ellipsoidal lesion in a noisy background. Class 1 lesions
//! carry a sinusoidal stripe texture running along the lesion's major axis;
//! class 0 lesions are flat. Because the major axis is tilted only moderately
//! away from z, axial cross-sections cut across the stripes and see an almost
//! uniform disc, while planes containing the axis see the full pattern.

use std::f64::consts::PI;

use nalgebra::{Rotation3, Unit};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::config::KeyValues;
use crate::error::{Error, Result};
use crate::sphere::Vec3;
use crate::volume::{Geometry, Mask, Volume};

/// Stripe texture along the lesion's major axis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StripeTexture {
    /// Stripe period in mm.
    pub wavelength: f64,
    pub amplitude: f64,
    /// Phase in radians at the lesion centroid.
    pub phase: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhantomSpec {
    pub dims: [usize; 3],
    pub spacing: [f64; 3],
    /// Semi-axes in mm; the third one lies along the major axis.
    pub semi_axes: [f64; 3],
    /// Rotation taking the lesion frame to the world frame.
    pub rotation_axis: [f64; 3],
    pub rotation_angle: f64,
    /// Lesion centre in mm, relative to the grid centre.
    pub centroid: [f64; 3],
    pub label: u8,
    pub texture: StripeTexture,
    /// Mean lesion intensity above the background.
    pub contrast: f64,
    pub noise_sigma: f64,
    pub seed: u64,
}

impl PhantomSpec {
    /// Grid with its centre voxel at the physical origin.
    pub fn geometry(&self) -> Result<Geometry> {
        let origin = [0, 1, 2].map(|a| -((self.dims[a] - 1) as f64) * self.spacing[a] / 2.0);
        Geometry::new(self.dims, self.spacing, origin)
    }

    pub fn rotation(&self) -> Rotation3<f64> {
        let axis = Vec3::from(self.rotation_axis);
        if self.rotation_angle == 0.0 || axis.norm() == 0.0 {
            return Rotation3::identity();
        }
        Rotation3::from_axis_angle(&Unit::new_normalize(axis), self.rotation_angle)
    }

    /// Unit vector along the lesion's major axis.
    pub fn major_axis(&self) -> Vec3 {
        self.rotation() * Vec3::z()
    }

    pub fn validate(&self) -> Result<()> {
        if self.semi_axes.iter().any(|&a| !(a > 0.0)) {
            return Err(Error::invalid("semi-axes must be positive"));
        }
        if self.label > 1 {
            return Err(Error::invalid("label must be 0 or 1"));
        }
        if !(self.noise_sigma >= 0.0) || !(self.texture.wavelength > 0.0) {
            return Err(Error::invalid("noise sigma must be >= 0 and wavelength > 0"));
        }
        let geom = self.geometry()?;
        let r = self.rotation();
        for a in 0..3 {
            // Half-extent of the rotated ellipsoid along world axis `a`.
            let half = (0..3)
                .map(|j| (r[(a, j)] * self.semi_axes[j]).powi(2))
                .sum::<f64>()
                .sqrt();
            let lo = geom.origin[a] - 0.5 * geom.spacing[a];
            let hi = lo + geom.dims[a] as f64 * geom.spacing[a];
            if self.centroid[a] - half < lo || self.centroid[a] + half > hi {
                return Err(Error::invalid(format!(
                    "lesion does not fit inside the grid along axis {a}"
                )));
            }
        }
        Ok(())
    }

    /// Lesion-frame coordinates of a world point.
    fn local(&self, r_inv: &Rotation3<f64>, p: [f64; 3]) -> Vec3 {
        r_inv * (Vec3::from(p) - Vec3::from(self.centroid))
    }

    fn inside(&self, q: &Vec3) -> bool {
        (0..3).map(|j| (q[j] / self.semi_axes[j]).powi(2)).sum::<f64>() <= 1.0
    }
}

#[derive(Debug, Clone)]
pub struct Phantom {
    pub volume: Volume,
    pub mask: Mask,
    pub label: u8,
}

/// Renders a phantom. Deterministic in `spec.seed`.
pub fn generate_phantom(spec: &PhantomSpec) -> Result<Phantom> {
    spec.validate()?;
    let geom = spec.geometry()?;
    let r_inv = spec.rotation().inverse();
    let mask = Mask::from_fn(geom, |p| spec.inside(&spec.local(&r_inv, p)))?;

    let k = 2.0 * PI / spec.texture.wavelength;
    let stripes = spec.label == 1;
    let clean = Volume::from_fn(geom, |p| {
        let q = spec.local(&r_inv, p);
        if !spec.inside(&q) {
            return 0.0;
        }
        let mut v = spec.contrast;
        if stripes {
            v += spec.texture.amplitude * (k * q[2] + spec.texture.phase).cos();
        }
        v as f32
    })?;

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let noise = Normal::new(0.0, spec.noise_sigma)
        .map_err(|e| Error::invalid(format!("noise sigma: {e}")))?;
    let data = clean
        .data()
        .iter()
        .map(|&v| v + noise.sample(&mut rng) as f32)
        .collect();
    Ok(Phantom {
        volume: Volume::new(geom, data)?,
        mask,
        label: spec.label,
    })
}

/// Distribution the phantoms of a data set are drawn from.
#[derive(Debug, Clone, PartialEq)]
pub struct PhantomSetSpec {
    pub n: usize,
    pub dims: [usize; 3],
    pub spacing: [f64; 3],
    /// Range of the major semi-axis, mm.
    pub major_axis: (f64, f64),
    /// Range of the two minor semi-axes, mm.
    pub minor_axis: (f64, f64),
    /// Range of the major axis' angle from z, degrees.
    pub tilt_deg: (f64, f64),
    /// Maximum centroid displacement from the grid centre per axis, mm.
    pub jitter: f64,
    pub contrast: (f64, f64),
    pub wavelength: (f64, f64),
    pub amplitude: f64,
    pub noise_sigma: f64,
    pub seed: u64,
}

impl Default for PhantomSetSpec {
    fn default() -> Self {
        Self {
            n: 200,
            dims: [40, 40, 40],
            spacing: [1.0, 1.0, 1.0],
            major_axis: (12.0, 15.0),
            minor_axis: (5.0, 7.0),
            tilt_deg: (20.0, 60.0),
            jitter: 1.5,
            contrast: (0.6, 1.4),
            wavelength: (12.0, 16.0),
            amplitude: 0.5,
            noise_sigma: 0.1,
            seed: 0,
        }
    }
}

fn range_of(kv: &KeyValues, key: &str, default: (f64, f64)) -> Result<(f64, f64)> {
    match kv.list::<f64>(key)? {
        None => Ok(default),
        Some(v) if v.len() == 2 && v[0] <= v[1] => Ok((v[0], v[1])),
        Some(_) => Err(Error::config(format!("key `{key}` needs `lo, hi` with lo <= hi"))),
    }
}

fn triple<T: Copy + std::str::FromStr>(kv: &KeyValues, key: &str, default: [T; 3]) -> Result<[T; 3]>
where
    T::Err: std::fmt::Display,
{
    match kv.list::<T>(key)? {
        None => Ok(default),
        Some(v) if v.len() == 3 => Ok([v[0], v[1], v[2]]),
        Some(_) => Err(Error::config(format!("key `{key}` needs three values"))),
    }
}

impl PhantomSetSpec {
    pub const KEYS: [&'static str; 12] = [
        "n",
        "dims",
        "spacing",
        "major_axis",
        "minor_axis",
        "tilt_deg",
        "jitter",
        "contrast",
        "wavelength",
        "amplitude",
        "noise_sigma",
        "phantom_seed",
    ];

    /// Reads the keys this spec knows from `kv`, leaving others alone.
    pub fn from_key_values(kv: &KeyValues) -> Result<Self> {
        let d = Self::default();
        let spec = Self {
            n: kv.parsed("n")?.unwrap_or(d.n),
            dims: triple(kv, "dims", d.dims)?,
            spacing: triple(kv, "spacing", d.spacing)?,
            major_axis: range_of(kv, "major_axis", d.major_axis)?,
            minor_axis: range_of(kv, "minor_axis", d.minor_axis)?,
            tilt_deg: range_of(kv, "tilt_deg", d.tilt_deg)?,
            jitter: kv.parsed("jitter")?.unwrap_or(d.jitter),
            contrast: range_of(kv, "contrast", d.contrast)?,
            wavelength: range_of(kv, "wavelength", d.wavelength)?,
            amplitude: kv.parsed("amplitude")?.unwrap_or(d.amplitude),
            noise_sigma: kv.parsed("noise_sigma")?.unwrap_or(d.noise_sigma),
            seed: kv.parsed("phantom_seed")?.unwrap_or(d.seed),
        };
        if spec.n < 2 {
            return Err(Error::config("phantom set needs n >= 2"));
        }
        Ok(spec)
    }

    /// Per-sample specs; labels alternate 0, 1, 0, ... so classes are balanced.
    pub fn sample_specs(&self) -> Vec<PhantomSpec> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let mut draw = |(lo, hi): (f64, f64)| {
            if hi > lo {
                rng.random_range(lo..hi)
            } else {
                lo
            }
        };
        (0..self.n)
            .map(|i| {
                let major = draw(self.major_axis);
                let minor = [draw(self.minor_axis), draw(self.minor_axis)];
                let tilt = draw(self.tilt_deg).to_radians();
                let azimuth = draw((0.0, 2.0 * PI));
                let spin = draw((0.0, 2.0 * PI));
                let centroid = [0; 3].map(|_| draw((-self.jitter, self.jitter)));
                let contrast = draw(self.contrast);
                let wavelength = draw(self.wavelength);
                let phase = draw((0.0, 2.0 * PI));
                let seed = draw((0.0, 1.0)).to_bits();
                // Spin about z, then tilt about a horizontal axis.
                let tilt_axis = Vec3::new(-azimuth.sin(), azimuth.cos(), 0.0);
                let rot = Rotation3::from_axis_angle(&Unit::new_normalize(tilt_axis), tilt)
                    * Rotation3::from_axis_angle(&Vec3::z_axis(), spin);
                let (axis, angle) = rot
                    .axis_angle()
                    .map(|(a, t)| ([a[0], a[1], a[2]], t))
                    .unwrap_or(([0.0, 0.0, 1.0], 0.0));
                PhantomSpec {
                    dims: self.dims,
                    spacing: self.spacing,
                    semi_axes: [minor[0], minor[1], major],
                    rotation_axis: axis,
                    rotation_angle: angle,
                    centroid,
                    label: (i % 2) as u8,
                    texture: StripeTexture {
                        wavelength,
                        amplitude: self.amplitude,
                        phase,
                    },
                    contrast,
                    noise_sigma: self.noise_sigma,
                    seed,
                }
            })
            .collect()
    }
}

/// Binary ball of `radius` mm around `center`.
pub fn ball_mask(geom: Geometry, center: [f64; 3], radius: f64) -> Result<Mask> {
    let c = Vec3::from(center);
    Mask::from_fn(geom, |p| (Vec3::from(p) - c).norm() <= radius)
}

/// Cylinder of `radius` mm and half-length `half_length` mm along `direction`.
pub fn rod_mask(
    geom: Geometry,
    center: [f64; 3],
    direction: [f64; 3],
    radius: f64,
    half_length: f64,
) -> Result<Mask> {
    let c = Vec3::from(center);
    let d = Vec3::from(direction);
    if d.norm() == 0.0 {
        return Err(Error::invalid("rod direction must be non-zero"));
    }
    let d = d.normalize();
    Mask::from_fn(geom, |p| {
        let v = Vec3::from(p) - c;
        let t = v.dot(&d);
        t.abs() <= half_length && (v - t * d).norm() <= radius
    })
}

/// Volume equal to 1 inside `mask` and 0 elsewhere.
pub fn mask_volume(mask: &Mask) -> Result<Volume> {
    Volume::new(
        *mask.geometry(),
        mask.data().iter().map(|&m| m as f32).collect(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::volume::z_axis_alignment;

    fn spec(label: u8) -> PhantomSpec {
        PhantomSpec {
            dims: [32, 32, 40],
            spacing: [1.0, 1.0, 1.0],
            semi_axes: [5.0, 6.0, 14.0],
            rotation_axis: [1.0, 1.0, 0.0],
            rotation_angle: 0.5,
            centroid: [0.5, -1.0, 0.0],
            label,
            texture: StripeTexture {
                wavelength: 8.0,
                amplitude: 0.4,
                phase: 0.3,
            },
            contrast: 1.0,
            noise_sigma: 0.0,
            seed: 7,
        }
    }

    #[test]
    fn classes_differ_only_inside_mask() {
        let a = generate_phantom(&spec(0)).unwrap();
        let b = generate_phantom(&spec(1)).unwrap();
        assert_eq!(a.mask, b.mask);
        let mut differing = 0;
        for (i, (x, y)) in a.volume.data().iter().zip(b.volume.data()).enumerate() {
            if x != y {
                assert_eq!(a.mask.data()[i], 1);
                differing += 1;
            }
        }
        assert!(differing > 100);
    }

    #[test]
    fn voxel_count_matches_ellipsoid_volume() {
        let s = spec(1);
        let p = generate_phantom(&s).unwrap();
        let analytic = 4.0 / 3.0 * PI * s.semi_axes.iter().product::<f64>();
        let rel = (p.mask.count() as f64 - analytic).abs() / analytic;
        assert!(rel < 0.05, "relative error {rel}");
    }

    #[test]
    fn z_aligned_phantom_scores_high() {
        let s = PhantomSpec {
            rotation_angle: 0.0,
            ..spec(1)
        };
        let p = generate_phantom(&s).unwrap();
        assert!(z_axis_alignment(&p.mask).unwrap().score > 0.99);
    }

    #[test]
    fn deterministic_and_noisy() {
        let s = PhantomSpec {
            noise_sigma: 0.1,
            ..spec(0)
        };
        let a = generate_phantom(&s).unwrap();
        let b = generate_phantom(&s).unwrap();
        assert_eq!(a.volume, b.volume);
        let c = generate_phantom(&PhantomSpec { seed: 8, ..s }).unwrap();
        assert_ne!(a.volume, c.volume);
    }

    #[test]
    fn oversized_lesion_rejected() {
        let s = PhantomSpec {
            semi_axes: [5.0, 5.0, 25.0],
            ..spec(0)
        };
        assert!(generate_phantom(&s).is_err());
    }

    #[test]
    fn set_specs_are_balanced_and_valid() {
        let set = PhantomSetSpec {
            n: 30,
            ..Default::default()
        };
        let specs = set.sample_specs();
        assert_eq!(specs.iter().filter(|s| s.label == 1).count(), 15);
        for s in &specs {
            s.validate().unwrap();
            let tilt = s.major_axis().z.abs().acos().to_degrees();
            assert!((20.0 - 1e-9..=60.0 + 1e-9).contains(&tilt));
        }
        assert_eq!(specs, set.sample_specs());
    }
}
