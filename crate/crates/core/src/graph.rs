//! Spherical mesh graph over the viewpoints.
//!
//! For points on a sphere the Delaunay triangulation is the convex hull, so
//! the mesh comes from an incremental 3-D hull inserted in index order.
//! Mesh edges always weigh 1; the complete topology adds cross-connections
//! whose weight decays with hop distance on the mesh.

use std::collections::{BTreeSet, HashSet, VecDeque};
use std::fmt::Write as _;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::sphere::{SpherePointSet, Vec3};

/// Below this |orientation| a point is treated as coplanar with a face.
const COPLANAR_EPS: f64 = 1e-12;
const JITTER: f64 = 1e-9;
const MAX_JITTER_ATTEMPTS: u64 = 8;

#[derive(Debug, Clone, PartialEq)]
pub struct Mesh {
    pub n_vertices: usize,
    /// Outward-oriented triangles.
    pub triangles: Vec<[usize; 3]>,
    /// Sorted `(i, j)` pairs with `i < j`.
    pub edges: BTreeSet<(usize, usize)>,
    /// Whether the points had to be perturbed to break a degeneracy.
    pub jittered: bool,
}

impl Mesh {
    pub fn from_triangles(n_vertices: usize, triangles: Vec<[usize; 3]>) -> Self {
        let edges = edges_of(&triangles);
        Self {
            n_vertices,
            triangles,
            edges,
            jittered: false,
        }
    }
}

fn edges_of(triangles: &[[usize; 3]]) -> BTreeSet<(usize, usize)> {
    let mut edges = BTreeSet::new();
    for t in triangles {
        for k in 0..3 {
            let (a, b) = (t[k], t[(k + 1) % 3]);
            edges.insert((a.min(b), a.max(b)));
        }
    }
    edges
}

fn orient(a: &Vec3, b: &Vec3, c: &Vec3, p: &Vec3) -> f64 {
    (b - a).cross(&(c - a)).dot(&(p - a))
}

enum HullFailure {
    Degenerate(String),
}

fn convex_hull(points: &[Vec3]) -> std::result::Result<Vec<[usize; 3]>, HullFailure> {
    let n = points.len();
    // Seed tetrahedron from the first non-degenerate quadruple in index order.
    let (i0, i1) = (0, 1);
    let i2 = (2..n)
        .find(|&k| (points[i1] - points[i0]).cross(&(points[k] - points[i0])).norm() > 1e-9)
        .ok_or_else(|| HullFailure::Degenerate("all points collinear".into()))?;
    let i3 = (2..n)
        .filter(|&k| k != i2)
        .find(|&k| orient(&points[i0], &points[i1], &points[i2], &points[k]).abs() > 1e-9)
        .ok_or_else(|| HullFailure::Degenerate("all points coplanar".into()))?;

    let mut faces: Vec<[usize; 3]> = Vec::new();
    let seed = [i0, i1, i2, i3];
    let centroid = seed.iter().map(|&k| points[k]).sum::<Vec3>() / 4.0;
    for skip in 0..4 {
        let f: Vec<usize> = (0..4).filter(|&k| k != skip).map(|k| seed[k]).collect();
        let mut face = [f[0], f[1], f[2]];
        if orient(&points[face[0]], &points[face[1]], &points[face[2]], &centroid) > 0.0 {
            face.swap(1, 2);
        }
        faces.push(face);
    }

    for p in 0..n {
        if seed.contains(&p) {
            continue;
        }
        let mut visible = Vec::new();
        for (fi, f) in faces.iter().enumerate() {
            let o = orient(&points[f[0]], &points[f[1]], &points[f[2]], &points[p]);
            if o.abs() <= COPLANAR_EPS {
                return Err(HullFailure::Degenerate(format!(
                    "point {p} is coplanar with face {f:?}"
                )));
            }
            if o > 0.0 {
                visible.push(fi);
            }
        }
        if visible.is_empty() {
            return Err(HullFailure::Degenerate(format!("point {p} is not on the hull")));
        }
        let directed: HashSet<(usize, usize)> = visible
            .iter()
            .flat_map(|&fi| {
                let f = faces[fi];
                [(f[0], f[1]), (f[1], f[2]), (f[2], f[0])]
            })
            .collect();
        let mut horizon: Vec<(usize, usize)> = directed
            .iter()
            .copied()
            .filter(|&(a, b)| !directed.contains(&(b, a)))
            .collect();
        horizon.sort_unstable();
        let mut keep = vec![true; faces.len()];
        for &fi in &visible {
            keep[fi] = false;
        }
        let mut next: Vec<[usize; 3]> = faces
            .iter()
            .zip(&keep)
            .filter(|(_, &k)| k)
            .map(|(f, _)| *f)
            .collect();
        next.extend(horizon.into_iter().map(|(a, b)| [a, b, p]));
        faces = next;
    }
    Ok(faces)
}

/// Delaunay triangulation of points on the unit sphere.
///
/// Coplanar configurations are resolved by re-running on a deterministically
/// jittered copy (amplitude 1e-9); the mesh records whether that happened.
pub fn delaunay_sphere(points: &SpherePointSet) -> Result<Mesh> {
    let n = points.len();
    if n < 4 {
        return Err(Error::invalid(format!("triangulation needs at least 4 points, got {n}")));
    }
    let mut coords = points.points().to_vec();
    let mut jittered = false;
    for attempt in 0..=MAX_JITTER_ATTEMPTS {
        match convex_hull(&coords) {
            Ok(mut triangles) => {
                for t in &mut triangles {
                    // Rotate so the smallest index leads; keeps orientation.
                    let m = (0..3).min_by_key(|&k| t[k]).unwrap();
                    t.rotate_left(m);
                }
                triangles.sort_unstable();
                let edges = edges_of(&triangles);
                if edges.len() != 3 * n - 6 || triangles.len() != 2 * n - 4 {
                    return Err(Error::Degenerate(format!(
                        "hull is not a closed triangulation: {} edges, {} faces",
                        edges.len(),
                        triangles.len()
                    )));
                }
                if jittered {
                    log::warn!("triangulation needed jitter to break a degeneracy");
                }
                return Ok(Mesh {
                    n_vertices: n,
                    triangles,
                    edges,
                    jittered,
                });
            }
            Err(HullFailure::Degenerate(msg)) => {
                if attempt == MAX_JITTER_ATTEMPTS {
                    return Err(Error::Degenerate(msg));
                }
                let mut rng = ChaCha8Rng::seed_from_u64(attempt);
                coords = points
                    .points()
                    .iter()
                    .map(|p| {
                        let d = Vec3::new(
                            rng.random_range(-1.0..1.0),
                            rng.random_range(-1.0..1.0),
                            rng.random_range(-1.0..1.0),
                        );
                        (p + d * JITTER).normalize()
                    })
                    .collect();
                jittered = true;
            }
        }
    }
    unreachable!("loop returns on the final attempt")
}

/// All-pairs hop counts on the mesh by breadth-first search.
pub fn hop_distances(edges: &BTreeSet<(usize, usize)>, n: usize) -> Result<Vec<Vec<u32>>> {
    let mut adj = vec![Vec::new(); n];
    for &(a, b) in edges {
        if a >= n || b >= n {
            return Err(Error::invalid(format!("edge ({a}, {b}) out of range for {n} nodes")));
        }
        adj[a].push(b);
        adj[b].push(a);
    }
    let mut hops = vec![vec![u32::MAX; n]; n];
    for (src, row) in hops.iter_mut().enumerate() {
        row[src] = 0;
        let mut queue = VecDeque::from([src]);
        while let Some(u) = queue.pop_front() {
            for &w in &adj[u] {
                if row[w] == u32::MAX {
                    row[w] = row[u] + 1;
                    queue.push_back(w);
                }
            }
        }
        if let Some(j) = row.iter().position(|&h| h == u32::MAX) {
            return Err(Error::Degenerate(format!(
                "mesh is disconnected: node {j} unreachable from {src}"
            )));
        }
    }
    Ok(hops)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Topology {
    Local,
    Complete,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Weighting {
    Uniform,
    LinearDecay,
    Inverse,
    InverseSquare,
}

impl Topology {
    pub fn name(self) -> &'static str {
        match self {
            Topology::Local => "local",
            Topology::Complete => "complete",
        }
    }
}

impl Weighting {
    pub const ALL: [Weighting; 4] = [
        Weighting::Uniform,
        Weighting::LinearDecay,
        Weighting::Inverse,
        Weighting::InverseSquare,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Weighting::Uniform => "uniform",
            Weighting::LinearDecay => "linear_decay",
            Weighting::Inverse => "inverse",
            Weighting::InverseSquare => "inverse_square",
        }
    }

    /// Weight of a pair `hop` edges apart in a mesh whose largest hop is
    /// `max_hop`. Mesh neighbours (hop 1) weigh 1 under every scheme.
    pub fn weight(self, hop: u32, max_hop: u32) -> f64 {
        if hop == 0 {
            return 0.0;
        }
        let d = hop as f64;
        match self {
            Weighting::Uniform => 1.0,
            // Straight line through (1, 1) reaching zero at max_hop + 1.
            Weighting::LinearDecay => (1.0 - (d - 1.0) / max_hop.max(1) as f64).max(0.0),
            Weighting::Inverse => 1.0 / d,
            Weighting::InverseSquare => 1.0 / (d * d),
        }
    }
}

impl std::fmt::Display for Topology {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::fmt::Display for Weighting {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Topology {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "local" => Ok(Topology::Local),
            "complete" => Ok(Topology::Complete),
            _ => Err(Error::invalid(format!("unknown topology `{s}`"))),
        }
    }
}

impl FromStr for Weighting {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Weighting::ALL
            .into_iter()
            .find(|w| w.name() == s)
            .ok_or_else(|| Error::invalid(format!("unknown weighting `{s}`")))
    }
}

/// Dense symmetric adjacency (row-major `n * n`) from hop counts.
pub fn apply_weighting(hops: &[Vec<u32>], topology: Topology, weighting: Weighting) -> Vec<f64> {
    let n = hops.len();
    let max_hop = hops.iter().flatten().copied().max().unwrap_or(0);
    let mut adj = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            let h = hops[i][j];
            adj[i * n + j] = match (h, topology) {
                (0, _) => 0.0,
                (1, _) => 1.0,
                (_, Topology::Local) => 0.0,
                (_, Topology::Complete) => weighting.weight(h, max_hop),
            };
        }
    }
    adj
}

/// Node set, mesh, hop matrix and weighted adjacency.
#[derive(Debug, Clone, PartialEq)]
pub struct ViewGraph {
    pub n_nodes: usize,
    pub mesh: Mesh,
    pub hops: Vec<Vec<u32>>,
    pub adjacency: Vec<f64>,
    pub topology: Topology,
    pub weighting: Weighting,
}

impl ViewGraph {
    pub fn from_mesh(mesh: Mesh, topology: Topology, weighting: Weighting) -> Result<Self> {
        let hops = hop_distances(&mesh.edges, mesh.n_vertices)?;
        let adjacency = apply_weighting(&hops, topology, weighting);
        Ok(Self {
            n_nodes: mesh.n_vertices,
            mesh,
            hops,
            adjacency,
            topology,
            weighting,
        })
    }

    /// Spherical mesh graph over a viewpoint set.
    pub fn spherical(points: &SpherePointSet, topology: Topology, weighting: Weighting) -> Result<Self> {
        Self::from_mesh(delaunay_sphere(points)?, topology, weighting)
    }

    /// Path graph over stack order, for stacks without sphere geometry
    /// (parallel-slice strategies).
    pub fn chain(n: usize, topology: Topology, weighting: Weighting) -> Result<Self> {
        if n == 0 {
            return Err(Error::invalid("graph needs at least one node"));
        }
        let edges: BTreeSet<(usize, usize)> = (1..n).map(|i| (i - 1, i)).collect();
        let mesh = Mesh {
            n_vertices: n,
            triangles: Vec::new(),
            edges,
            jittered: false,
        };
        Self::from_mesh(mesh, topology, weighting)
    }

    #[inline]
    pub fn weight(&self, i: usize, j: usize) -> f64 {
        self.adjacency[i * self.n_nodes + j]
    }

    pub fn max_hop(&self) -> u32 {
        self.hops.iter().flatten().copied().max().unwrap_or(0)
    }

    /// Same graph with nodes renumbered so that new node `k` is old `perm[k]`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        let n = self.n_nodes;
        if perm.len() != n || perm.iter().collect::<BTreeSet<_>>().len() != n {
            return Err(Error::invalid("not a permutation"));
        }
        let mut inverse = vec![0; n];
        for (new, &old) in perm.iter().enumerate() {
            inverse[old] = new;
        }
        let triangles = self
            .mesh
            .triangles
            .iter()
            .map(|t| t.map(|v| inverse[v]))
            .collect();
        let edges = self
            .mesh
            .edges
            .iter()
            .map(|&(a, b)| {
                let (a, b) = (inverse[a], inverse[b]);
                (a.min(b), a.max(b))
            })
            .collect();
        let hops = (0..n)
            .map(|i| (0..n).map(|j| self.hops[perm[i]][perm[j]]).collect())
            .collect();
        let adjacency = (0..n * n)
            .map(|k| self.adjacency[perm[k / n] * n + perm[k % n]])
            .collect();
        Ok(Self {
            n_nodes: n,
            mesh: Mesh {
                n_vertices: n,
                triangles,
                edges,
                jittered: self.mesh.jittered,
            },
            hops,
            adjacency,
            topology: self.topology,
            weighting: self.weighting,
        })
    }

    pub fn adjacency_csv(&self) -> String {
        matrix_csv(self.n_nodes, |i, j| format!("{}", self.weight(i, j)))
    }

    pub fn hops_csv(&self) -> String {
        matrix_csv(self.n_nodes, |i, j| self.hops[i][j].to_string())
    }
}

fn matrix_csv(n: usize, cell: impl Fn(usize, usize) -> String) -> String {
    let mut out = String::new();
    for i in 0..n {
        let row: Vec<String> = (0..n).map(|j| cell(i, j)).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

/// Wavefront OBJ: `v` lines for the points, 1-indexed triangular `f` lines.
pub fn export_obj(points: &SpherePointSet, mesh: &Mesh) -> String {
    let mut out = String::from("# tomoview spherical view mesh\n");
    for p in points.points() {
        let _ = writeln!(out, "v {:.16e} {:.16e} {:.16e}", p.x, p.y, p.z);
    }
    for t in &mesh.triangles {
        let _ = writeln!(out, "f {} {} {}", t[0] + 1, t[1] + 1, t[2] + 1);
    }
    out
}

/// Parses the subset of OBJ written by [`export_obj`].
pub fn import_obj(text: &str) -> Result<(Vec<Vec3>, Mesh)> {
    let mut verts = Vec::new();
    let mut tris = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let mut it = line.split_whitespace();
        let bad = || Error::malformed("OBJ", format!("line {}: `{line}`", lineno + 1));
        match it.next() {
            Some("v") => {
                let c: Vec<f64> = it
                    .map(|t| t.parse::<f64>())
                    .collect::<Result<_, _>>()
                    .map_err(|_| bad())?;
                if c.len() < 3 {
                    return Err(bad());
                }
                verts.push(Vec3::new(c[0], c[1], c[2]));
            }
            Some("f") => {
                let idx: Vec<usize> = it
                    .map(|t| t.split('/').next().unwrap_or("").parse::<usize>())
                    .collect::<Result<_, _>>()
                    .map_err(|_| bad())?;
                if idx.len() != 3 || idx.iter().any(|&k| k == 0 || k > verts.len()) {
                    return Err(bad());
                }
                tris.push([idx[0] - 1, idx[1] - 1, idx[2] - 1]);
            }
            _ => {}
        }
    }
    let n = verts.len();
    Ok((verts, Mesh::from_triangles(n, tris)))
}
