//! Approximately equidistant viewpoints on the unit sphere.
//!
//! Points behave like identical unit charges confined to the sphere. The
//! free points are moved one at a time down the gradient of their pairwise
//! inverse-square energy and pushed back onto the sphere after every step,
//! while a leading block of pinned points (usually the three canonical view
//! directions) never moves.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::Vector3;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};

pub type Vec3 = Vector3<f64>;

const UNIT_TOL: f64 = 1e-9;
/// Minimum angular separation (radians) accepted for a freshly drawn point.
const INIT_MIN_ANGLE: f64 = 1e-3;
/// Cap on the tangential move of a single update, in unit-sphere lengths.
/// Only active while two points are still close after random initialisation.
const MAX_STEP: f64 = 0.1;

/// The sagittal, coronal and axial view directions, in that order.
pub fn canonical_points() -> Vec<Vec3> {
    vec![Vec3::x(), Vec3::y(), Vec3::z()]
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpherePointSet {
    points: Vec<Vec3>,
    fixed_count: usize,
    energy: f64,
}

impl SpherePointSet {
    /// Builds a point set from explicit coordinates, checking the unit-norm
    /// and distinctness invariants.
    pub fn new(points: Vec<Vec3>, fixed_count: usize) -> Result<Self> {
        if fixed_count > points.len() {
            return Err(Error::invalid(format!(
                "fixed_count {fixed_count} exceeds point count {}",
                points.len()
            )));
        }
        for (i, p) in points.iter().enumerate() {
            if !p.iter().all(|c| c.is_finite()) || (p.norm() - 1.0).abs() > UNIT_TOL {
                return Err(Error::invalid(format!("point {i} is not a unit vector")));
            }
        }
        let energy = coulomb_energy(&points)?;
        Ok(Self {
            points,
            fixed_count,
            energy,
        })
    }

    pub fn points(&self) -> &[Vec3] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn fixed_count(&self) -> usize {
        self.fixed_count
    }

    pub fn energy(&self) -> f64 {
        self.energy
    }

    pub fn is_fixed(&self, i: usize) -> bool {
        i < self.fixed_count
    }

    /// Applies `rot` to every point. Used to build rotated test scenes.
    pub fn rotated(&self, rot: &nalgebra::Rotation3<f64>) -> Result<Self> {
        let pts = self.points.iter().map(|p| (rot * p).normalize()).collect();
        Self::new(pts, self.fixed_count)
    }

    /// Smallest pairwise angular distance, in radians.
    pub fn min_angular_distance(&self) -> f64 {
        let mut best = f64::INFINITY;
        for i in 0..self.points.len() {
            for j in (i + 1)..self.points.len() {
                best = best.min(angle_between(&self.points[i], &self.points[j]));
            }
        }
        best
    }

    /// Largest nearest-neighbour angular distance, in radians.
    pub fn max_nearest_neighbor_distance(&self) -> f64 {
        (0..self.points.len())
            .map(|i| {
                (0..self.points.len())
                    .filter(|&j| j != i)
                    .map(|j| angle_between(&self.points[i], &self.points[j]))
                    .fold(f64::INFINITY, f64::min)
            })
            .fold(0.0, f64::max)
    }

    /// `x y z fixed_flag` per line, 17 significant digits.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (i, p) in self.points.iter().enumerate() {
            let flag = u8::from(self.is_fixed(i));
            let _ = writeln!(out, "{:.16e} {:.16e} {:.16e} {flag}", p.x, p.y, p.z);
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut points = Vec::new();
        let mut fixed_count = 0;
        let mut seen_free = false;
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.len() != 4 {
                return Err(Error::malformed(
                    "point file",
                    format!("line {}: expected 4 fields, got {}", lineno + 1, fields.len()),
                ));
            }
            let mut xyz = [0.0; 3];
            for (k, slot) in xyz.iter_mut().enumerate() {
                *slot = fields[k].parse().map_err(|_| {
                    Error::malformed(
                        "point file",
                        format!("line {}: bad coordinate `{}`", lineno + 1, fields[k]),
                    )
                })?;
            }
            match fields[3] {
                "1" if seen_free => {
                    return Err(Error::malformed(
                        "point file",
                        format!("line {}: fixed points must come first", lineno + 1),
                    ))
                }
                "1" => fixed_count += 1,
                "0" => seen_free = true,
                other => {
                    return Err(Error::malformed(
                        "point file",
                        format!("line {}: bad fixed flag `{other}`", lineno + 1),
                    ))
                }
            }
            points.push(Vec3::new(xyz[0], xyz[1], xyz[2]));
        }
        Self::new(points, fixed_count)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_text(&text)
    }
}

pub(crate) fn angle_between(a: &Vec3, b: &Vec3) -> f64 {
    // atan2 form stays accurate for nearly parallel vectors.
    a.cross(b).norm().atan2(a.dot(b))
}

/// Pairwise inverse-square energy summed over ordered pairs, so every
/// unordered pair contributes twice.
pub fn coulomb_energy(points: &[Vec3]) -> Result<f64> {
    let mut e = 0.0;
    for i in 0..points.len() {
        for j in (i + 1)..points.len() {
            let d2 = (points[i] - points[j]).norm_squared();
            if d2 < 1e-12 {
                return Err(Error::Divergence { i, j });
            }
            e += 2.0 / d2;
        }
    }
    Ok(e)
}

/// Gradient of `sum_{j != i} 1/|x_i - x_j|^2` with respect to `x_i`.
fn point_gradient(points: &[Vec3], i: usize) -> Vec3 {
    let xi = points[i];
    let mut g = Vec3::zeros();
    for (j, xj) in points.iter().enumerate() {
        if j == i {
            continue;
        }
        let d = xi - xj;
        let d2 = d.norm_squared();
        g -= d * (2.0 / (d2 * d2));
    }
    g
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimizeParams {
    pub lr: f64,
    pub max_iters: usize,
    pub tol: f64,
    pub seed: u64,
}

impl Default for OptimizeParams {
    fn default() -> Self {
        Self {
            lr: 0.01,
            max_iters: 10_000,
            tol: 1e-7,
            seed: 0,
        }
    }
}

/// Result of a repulsion run, including the energy after every sweep.
#[derive(Debug, Clone)]
pub struct OptimizeReport {
    pub points: SpherePointSet,
    pub initial_energy: f64,
    pub energy_trace: Vec<f64>,
    pub sweeps: usize,
    pub converged: bool,
}

/// Convenience wrapper returning only the optimized set.
pub fn optimize(n_total: usize, fixed: &[Vec3], params: OptimizeParams) -> Result<SpherePointSet> {
    optimize_traced(n_total, fixed, params).map(|r| r.points)
}

pub fn optimize_traced(
    n_total: usize,
    fixed: &[Vec3],
    params: OptimizeParams,
) -> Result<OptimizeReport> {
    if n_total < fixed.len() {
        return Err(Error::invalid(format!(
            "n_total {n_total} is smaller than the {} fixed points",
            fixed.len()
        )));
    }
    if !(params.lr > 0.0) || !params.lr.is_finite() {
        return Err(Error::invalid("learning rate must be positive"));
    }
    for (i, p) in fixed.iter().enumerate() {
        if !p.iter().all(|c| c.is_finite()) || (p.norm() - 1.0).abs() > UNIT_TOL {
            return Err(Error::invalid(format!("fixed point {i} is not a unit vector")));
        }
    }

    let mut points = fixed.to_vec();
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    while points.len() < n_total {
        let v = Vec3::new(
            StandardNormal.sample(&mut rng),
            StandardNormal.sample(&mut rng),
            StandardNormal.sample(&mut rng),
        );
        let norm = v.norm();
        if norm < 1e-12 {
            continue;
        }
        let v = v / norm;
        if points.iter().all(|p| angle_between(p, &v) >= INIT_MIN_ANGLE) {
            points.push(v);
        }
    }

    let initial_energy = coulomb_energy(&points)?;
    let mut energy_trace = Vec::new();
    let mut sweeps = 0;
    let mut converged = n_total == fixed.len();

    while !converged && sweeps < params.max_iters {
        let mut max_move = 0.0_f64;
        for i in fixed.len()..n_total {
            let g = point_gradient(&points, i);
            let xi = points[i];
            let tangent = g - xi * g.dot(&xi);
            let mut step = tangent * params.lr;
            let len = step.norm();
            if len > MAX_STEP {
                step *= MAX_STEP / len;
            }
            let moved = (xi - step).normalize();
            max_move = max_move.max((moved - xi).norm());
            points[i] = moved;
        }
        sweeps += 1;
        energy_trace.push(coulomb_energy(&points)?);
        if max_move < params.tol {
            converged = true;
        }
    }

    let energy = coulomb_energy(&points)?;
    Ok(OptimizeReport {
        points: SpherePointSet {
            points,
            fixed_count: fixed.len(),
            energy,
        },
        initial_energy,
        energy_trace,
        sweeps,
        converged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn canonical_axes() {
        let c = canonical_points();
        assert_eq!(c, vec![Vec3::x(), Vec3::y(), Vec3::z()]);
        for i in 0..3 {
            assert_abs_diff_eq!(c[i].norm(), 1.0);
            for j in (i + 1)..3 {
                assert_eq!(c[i].dot(&c[j]), 0.0);
            }
        }
    }

    #[test]
    fn energy_of_small_configurations() {
        let pair = [Vec3::z(), -Vec3::z()];
        assert_abs_diff_eq!(coulomb_energy(&pair).unwrap(), 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(
            coulomb_energy(&canonical_points()).unwrap(),
            3.0,
            epsilon = 1e-12
        );
    }

    #[test]
    fn coincident_points_report_pair() {
        let pts = [Vec3::x(), Vec3::y(), Vec3::y()];
        match coulomb_energy(&pts) {
            Err(Error::Divergence { i, j }) => assert_eq!((i, j), (1, 2)),
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn all_pinned_is_identity() {
        let fixed = canonical_points();
        let report = optimize_traced(3, &fixed, OptimizeParams::default()).unwrap();
        assert_eq!(report.points.points(), fixed.as_slice());
        assert_eq!(report.sweeps, 0);
    }

    #[test]
    fn argument_errors() {
        let fixed = canonical_points();
        assert!(matches!(
            optimize(2, &fixed, OptimizeParams::default()),
            Err(Error::InvalidArgument(_))
        ));
        let bad = [Vec3::new(2.0, 0.0, 0.0)];
        assert!(matches!(
            optimize(4, &bad, OptimizeParams::default()),
            Err(Error::InvalidArgument(_))
        ));
        let p = OptimizeParams {
            lr: 0.0,
            ..Default::default()
        };
        assert!(optimize(4, &[], p).is_err());
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let pts = optimize_traced(
            6,
            &[],
            OptimizeParams {
                max_iters: 0,
                ..Default::default()
            },
        )
        .unwrap()
        .points
        .points()
        .to_vec();
        let per_point = |p: &[Vec3], i: usize| -> f64 {
            (0..p.len())
                .filter(|&j| j != i)
                .map(|j| 1.0 / (p[i] - p[j]).norm_squared())
                .sum()
        };
        let g = point_gradient(&pts, 2);
        let h = 1e-6;
        for k in 0..3 {
            let mut plus = pts.clone();
            let mut minus = pts.clone();
            plus[2][k] += h;
            minus[2][k] -= h;
            let fd = (per_point(&plus, 2) - per_point(&minus, 2)) / (2.0 * h);
            assert!((fd - g[k]).abs() < 1e-5 * fd.abs().max(1.0));
        }
    }

    #[test]
    fn text_round_trip_is_exact() {
        let set = optimize(10, &canonical_points(), OptimizeParams::default()).unwrap();
        let back = SpherePointSet::from_text(&set.to_text()).unwrap();
        assert_eq!(back.points(), set.points());
        assert_eq!(back.fixed_count(), 3);
    }

    #[test]
    fn text_rejects_bad_flag_order() {
        let text = "1 0 0 0\n0 1 0 1\n";
        assert!(SpherePointSet::from_text(text).is_err());
    }
}
