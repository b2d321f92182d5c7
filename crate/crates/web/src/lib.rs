//! Browser bindings for the static demo page in `www/`.
//!
//! Three operations are exposed: optimizing a viewpoint sphere and meshing
//! it, cutting a slice through a synthetic lesion at any orientation, and
//! tabulating view-graph edge weights by hop distance.

use tomoview::eval::phantom::{generate_phantom, PhantomSpec, StripeTexture};
use tomoview::graph::{delaunay_sphere, Topology, ViewGraph, Weighting};
use tomoview::slicer::{extract_slice, lesion_pixel_count, FieldOfView, SlicePlane};
use tomoview::sphere::{canonical_points, optimize, OptimizeParams, Vec3};
use tomoview::volume::Interp;
use wasm_bindgen::prelude::*;

fn js_err(e: tomoview::Error) -> JsError {
    JsError::new(&e.to_string())
}

/// Optimized viewpoints with their spherical mesh.
#[wasm_bindgen]
pub struct SphereView {
    points: Vec<f64>,
    edges: Vec<u32>,
    energy: f64,
    fixed: usize,
}

#[wasm_bindgen]
impl SphereView {
    /// Flat `x, y, z` triples.
    #[wasm_bindgen(getter)]
    pub fn points(&self) -> Vec<f64> {
        self.points.clone()
    }

    /// Flat vertex index pairs.
    #[wasm_bindgen(getter)]
    pub fn edges(&self) -> Vec<u32> {
        self.edges.clone()
    }

    #[wasm_bindgen(getter)]
    pub fn energy(&self) -> f64 {
        self.energy
    }

    /// The first `fixed` points are the pinned canonical normals.
    #[wasm_bindgen(getter)]
    pub fn fixed(&self) -> usize {
        self.fixed
    }
}

#[wasm_bindgen]
pub fn sphere_view(n: usize, seed: u64) -> Result<SphereView, JsError> {
    let params = OptimizeParams {
        seed,
        max_iters: 2000,
        ..Default::default()
    };
    let set = optimize(n, &canonical_points(), params).map_err(js_err)?;
    let mesh = delaunay_sphere(&set).map_err(js_err)?;
    Ok(SphereView {
        points: set.points().iter().flat_map(|p| [p.x, p.y, p.z]).collect(),
        edges: mesh
            .edges
            .iter()
            .flat_map(|&(a, b)| [a as u32, b as u32])
            .collect(),
        energy: set.energy(),
        fixed: set.fixed_count(),
    })
}

/// A grey-level slice plus the lesion area it shows.
#[wasm_bindgen]
pub struct SliceView {
    size: usize,
    pixels: Vec<f32>,
    lesion_pixels: usize,
}

#[wasm_bindgen]
impl SliceView {
    #[wasm_bindgen(getter)]
    pub fn size(&self) -> usize {
        self.size
    }

    /// Row-major intensities in [0, 1].
    #[wasm_bindgen(getter)]
    pub fn pixels(&self) -> Vec<f32> {
        self.pixels.clone()
    }

    #[wasm_bindgen(getter)]
    pub fn lesion_pixels(&self) -> usize {
        self.lesion_pixels
    }
}

/// Slices a striped (or flat) ellipsoidal lesion, tilted `tilt_deg` from z,
/// through its centre with the plane normal at polar angle `theta_deg` and
/// azimuth `phi_deg`.
#[wasm_bindgen]
pub fn slice_phantom(
    tilt_deg: f64,
    striped: bool,
    theta_deg: f64,
    phi_deg: f64,
    size: usize,
) -> Result<SliceView, JsError> {
    let spec = PhantomSpec {
        dims: [40, 40, 40],
        spacing: [1.0; 3],
        semi_axes: [6.0, 6.0, 15.0],
        rotation_axis: [0.0, 1.0, 0.0],
        rotation_angle: tilt_deg.to_radians(),
        centroid: [0.0; 3],
        label: u8::from(striped),
        texture: StripeTexture {
            wavelength: 8.0,
            amplitude: 0.4,
            phase: 0.0,
        },
        contrast: 1.0,
        noise_sigma: 0.05,
        seed: 1,
    };
    let phantom = generate_phantom(&spec).map_err(js_err)?;
    let (t, p) = (theta_deg.to_radians(), phi_deg.to_radians());
    let normal = Vec3::new(t.sin() * p.cos(), t.sin() * p.sin(), t.cos());
    let centre = Vec3::from(phantom.mask.centroid().map_err(js_err)?);
    let plane = SlicePlane::new(normal, centre, 0.0, -1).map_err(js_err)?;
    let fov = FieldOfView::new(size, 40.0 / size as f64).map_err(js_err)?;
    let volume = phantom.volume.min_max_normalized();
    let img = extract_slice(&volume, &plane, fov, Interp::Linear, 0.0);
    Ok(SliceView {
        size,
        pixels: img.data,
        lesion_pixels: lesion_pixel_count(&phantom.mask, &plane, fov),
    })
}

/// Dense `n x n` adjacency of the view graph over `n` optimized viewpoints.
/// `topology` is `local` or `complete`; `weighting` one of `uniform`,
/// `linear_decay`, `inverse`, `inverse_square`.
#[wasm_bindgen]
pub fn edge_weights(
    n: usize,
    seed: u64,
    topology: &str,
    weighting: &str,
) -> Result<Vec<f64>, JsError> {
    let topology: Topology = topology.parse().map_err(js_err)?;
    let weighting: Weighting = weighting.parse().map_err(js_err)?;
    let params = OptimizeParams {
        seed,
        max_iters: 2000,
        ..Default::default()
    };
    let set = optimize(n, &canonical_points(), params).map_err(js_err)?;
    let graph = ViewGraph::spherical(&set, topology, weighting).map_err(js_err)?;
    Ok(graph.adjacency)
}

/// Weight of an edge `hop` steps long when the graph's largest hop is `max_hop`.
#[wasm_bindgen]
pub fn weight_for_hop(weighting: &str, hop: u32, max_hop: u32) -> Result<f64, JsError> {
    let w: Weighting = weighting.parse().map_err(js_err)?;
    Ok(w.weight(hop, max_hop))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sphere_view_has_planar_mesh() {
        let v = sphere_view(12, 0).ok().unwrap();
        assert_eq!(v.points().len(), 36);
        assert_eq!(v.edges().len() / 2, 3 * 12 - 6);
        assert_eq!(v.fixed(), 3);
    }

    #[test]
    fn slice_contains_lesion() {
        let s = slice_phantom(20.0, true, 90.0, 0.0, 48).ok().unwrap();
        assert_eq!(s.pixels().len(), 48 * 48);
        assert!(s.lesion_pixels() > 100);
    }

    #[test]
    fn weights_are_symmetric() {
        let a = edge_weights(10, 1, "complete", "inverse").ok().unwrap();
        for i in 0..10 {
            for j in 0..10 {
                assert_eq!(a[i * 10 + j], a[j * 10 + i]);
            }
        }
        assert_eq!(weight_for_hop("inverse", 2, 3).ok(), Some(0.5));
    }
}
