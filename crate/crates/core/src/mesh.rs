//! Conforming P1 triangulations of convex polygons.
//!
//! Every triangle carries its area, the constant gradients of its three hat
//! functions and a three-point mid-edge quadrature rule whose weights include
//! the Gaussian factor `exp(-|q|^2 / 2)`. The `(2 pi)^(-1)` normalisation of
//! the Gaussian measure is dropped throughout: all reported eigenvalues are
//! ratios of weighted integrals and do not depend on it.

use std::collections::HashMap;
use std::io::{self, Write};

use spade::{DelaunayTriangulation, Point2, Triangulation};
use thiserror::Error;

use crate::geometry::{contains, cross, norm, sub, ConvexPolygon, Point};

#[derive(Debug, Error)]
pub enum MeshError {
    #[error("mesh construction failed: {0}")]
    MeshFailure(String),
    #[error("resolution too coarse: {0}")]
    ResolutionTooCoarse(String),
}

/// Gaussian weight without normalising constant.
#[inline]
pub fn gaussian_weight(x: Point) -> f64 {
    (-0.5 * (x[0] * x[0] + x[1] * x[1])).exp()
}

/// Per-triangle precomputed data.
#[derive(Debug, Clone)]
pub struct Element {
    pub area: f64,
    /// Gradient of the hat function of local vertex `i`.
    pub grads: [Point; 3],
    /// `qpoints[k]` is the midpoint of the edge from local vertex `k` to `k + 1`.
    pub qpoints: [Point; 3],
    /// `area / 3 * exp(-|q_k|^2 / 2)`
    pub qweights: [f64; 3],
}

impl Element {
    /// Value of local hat function `i` at quadrature point `k`.
    #[inline]
    pub fn basis_at(i: usize, k: usize) -> f64 {
        if i == k || i == (k + 1) % 3 {
            0.5
        } else {
            0.0
        }
    }
}

#[derive(Debug, Clone)]
pub struct TriMesh {
    domain: ConvexPolygon,
    nodes: Vec<Point>,
    triangles: Vec<[usize; 3]>,
    boundary: Vec<bool>,
    h: f64,
    elements: Vec<Element>,
    locator: Locator,
}

/// Triangulate `poly` with target edge length `h`.
///
/// Boundary edges are split uniformly at spacing `<= h`; interior nodes come
/// from a hexagonal lattice of pitch `h` anchored at the origin, clipped to
/// the polygon shrunk by `h / 2`. The point set is Delaunay triangulated.
pub fn triangulate(poly: &ConvexPolygon, h: f64) -> Result<TriMesh, MeshError> {
    if !(h > 0.0 && h.is_finite()) {
        return Err(MeshError::MeshFailure(format!("mesh size must be positive, got {h}")));
    }
    let diam = poly.diameter();
    if h >= diam {
        return Err(MeshError::ResolutionTooCoarse(format!(
            "h = {h} is not below the domain diameter {diam}"
        )));
    }

    let mut nodes: Vec<Point> = Vec::new();
    for (a, b) in poly.edges() {
        let len = norm(sub(b, a));
        let segs = (len / h).ceil().max(1.0) as usize;
        for s in 0..segs {
            let t = s as f64 / segs as f64;
            nodes.push([a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])]);
        }
    }
    let n_boundary = nodes.len();

    let (lo, hi) = poly.bounding_box();
    let dy = h * 3f64.sqrt() / 2.0;
    let j0 = (lo[1] / dy).floor() as i64;
    let j1 = (hi[1] / dy).ceil() as i64;
    for j in j0..=j1 {
        let y = j as f64 * dy;
        let shift = if j.rem_euclid(2) == 1 { 0.5 * h } else { 0.0 };
        let i0 = ((lo[0] - shift) / h).floor() as i64;
        let i1 = ((hi[0] - shift) / h).ceil() as i64;
        for i in i0..=i1 {
            let p = [i as f64 * h + shift, y];
            if contains(poly, p, 0.5 * h) {
                nodes.push(p);
            }
        }
    }
    if nodes.len() == n_boundary {
        return Err(MeshError::ResolutionTooCoarse(format!(
            "no interior lattice node at h = {h}"
        )));
    }

    let mut dt: DelaunayTriangulation<Point2<f64>> = DelaunayTriangulation::new();
    for (i, p) in nodes.iter().enumerate() {
        let handle = dt
            .insert(Point2::new(p[0], p[1]))
            .map_err(|e| MeshError::MeshFailure(format!("insertion of node {i} failed: {e:?}")))?;
        if handle.index() != i {
            return Err(MeshError::MeshFailure(format!("duplicate node {i}")));
        }
    }

    let sliver = 1e-10 * h * h;
    let mut triangles = Vec::with_capacity(dt.num_inner_faces());
    for face in dt.inner_faces() {
        let [a, b, c] = face.vertices().map(|v| v.fix().index());
        let area = 0.5 * cross(sub(nodes[b], nodes[a]), sub(nodes[c], nodes[a]));
        // Near-collinear boundary runs can produce hull slivers.
        if area.abs() < sliver && a < n_boundary && b < n_boundary && c < n_boundary {
            continue;
        }
        triangles.push(if area > 0.0 { [a, b, c] } else { [a, c, b] });
    }

    let boundary: Vec<bool> = (0..nodes.len()).map(|i| i < n_boundary).collect();
    let mesh = TriMesh::from_parts(poly.clone(), nodes, triangles, boundary, h)?;

    let total: f64 = mesh.elements.iter().map(|e| e.area).sum();
    let area = poly.area();
    if (total - area).abs() > 1e-10 * area {
        return Err(MeshError::MeshFailure(format!(
            "triangle areas sum to {total}, polygon area is {area}"
        )));
    }
    Ok(mesh)
}

impl TriMesh {
    /// Assemble a mesh from explicit parts, precomputing element data.
    /// Clockwise triangles are reoriented; degenerate ones are rejected.
    pub fn from_parts(
        domain: ConvexPolygon,
        nodes: Vec<Point>,
        mut triangles: Vec<[usize; 3]>,
        boundary: Vec<bool>,
        h: f64,
    ) -> Result<Self, MeshError> {
        if boundary.len() != nodes.len() {
            return Err(MeshError::MeshFailure("boundary mask length mismatch".into()));
        }
        let mut elements = Vec::with_capacity(triangles.len());
        for (t, tri) in triangles.iter_mut().enumerate() {
            if tri.iter().any(|&i| i >= nodes.len()) {
                return Err(MeshError::MeshFailure(format!("triangle {t} references a missing node")));
            }
            let mut area = 0.5 * cross(sub(nodes[tri[1]], nodes[tri[0]]), sub(nodes[tri[2]], nodes[tri[0]]));
            if area < 0.0 {
                tri.swap(1, 2);
                area = -area;
            }
            if !(area > 1e-14 * h * h) {
                return Err(MeshError::MeshFailure(format!("degenerate triangle {t} (area {area:e})")));
            }
            let p = tri.map(|i| nodes[i]);
            // grad phi_i = rot90(edge opposite i) / (2 area), edge taken CCW.
            let mut grads = [[0.0; 2]; 3];
            for i in 0..3 {
                let e = sub(p[(i + 2) % 3], p[(i + 1) % 3]);
                grads[i] = [-e[1] / (2.0 * area), e[0] / (2.0 * area)];
            }
            let qpoints: [Point; 3] =
                std::array::from_fn(|k| [0.5 * (p[k][0] + p[(k + 1) % 3][0]), 0.5 * (p[k][1] + p[(k + 1) % 3][1])]);
            let qweights = qpoints.map(|q| area / 3.0 * gaussian_weight(q));
            elements.push(Element {
                area,
                grads,
                qpoints,
                qweights,
            });
        }
        let locator = Locator::build(&nodes, &triangles, h);
        Ok(Self {
            domain,
            nodes,
            triangles,
            boundary,
            h,
            elements,
            locator,
        })
    }

    pub fn domain(&self) -> &ConvexPolygon {
        &self.domain
    }

    pub fn nodes(&self) -> &[Point] {
        &self.nodes
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn elements(&self) -> &[Element] {
        &self.elements
    }

    pub fn boundary_mask(&self) -> &[bool] {
        &self.boundary
    }

    pub fn is_boundary(&self, node: usize) -> bool {
        self.boundary[node]
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn num_triangles(&self) -> usize {
        self.triangles.len()
    }

    pub fn interior_nodes(&self) -> Vec<usize> {
        (0..self.nodes.len()).filter(|&i| !self.boundary[i]).collect()
    }

    pub fn num_interior(&self) -> usize {
        self.boundary.iter().filter(|b| !**b).count()
    }

    pub fn max_edge_length(&self) -> f64 {
        self.triangles
            .iter()
            .flat_map(|t| (0..3).map(move |k| (t[k], t[(k + 1) % 3])))
            .map(|(a, b)| norm(sub(self.nodes[a], self.nodes[b])))
            .fold(0.0, f64::max)
    }

    /// `sum_k w_k f(q_k)`, approximating `int f exp(-|x|^2/2) dx`.
    pub fn quadrature_integrate<F: Fn(Point) -> f64>(&self, f: F) -> f64 {
        let mut sum = 0.0;
        for e in &self.elements {
            for k in 0..3 {
                sum += e.qweights[k] * f(e.qpoints[k]);
            }
        }
        sum
    }

    /// Weighted lumped mass `int phi_i dgamma` for every node.
    pub fn lumped_mass(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.nodes.len()];
        for (tri, e) in self.triangles.iter().zip(&self.elements) {
            for k in 0..3 {
                m[tri[k]] += 0.5 * e.qweights[k];
                m[tri[(k + 1) % 3]] += 0.5 * e.qweights[k];
            }
        }
        m
    }

    /// Interior nodes that share a triangle with a boundary node.
    pub fn first_ring(&self) -> Vec<usize> {
        let mut ring = vec![false; self.nodes.len()];
        for tri in &self.triangles {
            if tri.iter().any(|&i| self.boundary[i]) {
                for &i in tri {
                    if !self.boundary[i] {
                        ring[i] = true;
                    }
                }
            }
        }
        (0..ring.len()).filter(|&i| ring[i]).collect()
    }

    /// Node-to-triangle incidence.
    pub fn node_triangles(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.nodes.len()];
        for (t, tri) in self.triangles.iter().enumerate() {
            for &i in tri {
                adj[i].push(t);
            }
        }
        adj
    }

    /// Find a triangle containing `x` and its barycentric coordinates.
    pub fn locate(&self, x: Point) -> Option<(usize, [f64; 3])> {
        self.locator.locate(x, &self.nodes, &self.triangles)
    }

    /// P1 interpolation of nodal `values` at `x`; `None` outside the mesh.
    pub fn interpolate(&self, values: &[f64], x: Point) -> Option<f64> {
        self.locate(x).map(|(t, b)| {
            let tri = self.triangles[t];
            b[0] * values[tri[0]] + b[1] * values[tri[1]] + b[2] * values[tri[2]]
        })
    }

    /// Split every triangle into four through its edge midpoints.
    pub fn refine_uniform(&self) -> Result<TriMesh, MeshError> {
        let mut edge_count: HashMap<(usize, usize), usize> = HashMap::new();
        for tri in &self.triangles {
            for k in 0..3 {
                let (a, b) = (tri[k], tri[(k + 1) % 3]);
                *edge_count.entry((a.min(b), a.max(b))).or_default() += 1;
            }
        }
        let mut nodes = self.nodes.clone();
        let mut boundary = self.boundary.clone();
        let mut midpoint: HashMap<(usize, usize), usize> = HashMap::new();
        let mut triangles = Vec::with_capacity(4 * self.triangles.len());
        for tri in &self.triangles {
            let mids: [usize; 3] = std::array::from_fn(|k| {
                let (a, b) = (tri[k], tri[(k + 1) % 3]);
                let key = (a.min(b), a.max(b));
                *midpoint.entry(key).or_insert_with(|| {
                    let (pa, pb) = (self.nodes[a], self.nodes[b]);
                    nodes.push([0.5 * (pa[0] + pb[0]), 0.5 * (pa[1] + pb[1])]);
                    boundary.push(edge_count[&key] == 1);
                    nodes.len() - 1
                })
            });
            triangles.push([tri[0], mids[0], mids[2]]);
            triangles.push([mids[0], tri[1], mids[1]]);
            triangles.push([mids[2], mids[1], tri[2]]);
            triangles.push([mids[0], mids[1], mids[2]]);
        }
        TriMesh::from_parts(self.domain.clone(), nodes, triangles, boundary, 0.5 * self.h)
    }

    /// Plain-text dump: `# nodes N`, then `x y boundary_flag` rows,
    /// then `# triangles M` and `i j k` rows.
    pub fn write_dump<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "# nodes {}", self.nodes.len())?;
        for (p, &b) in self.nodes.iter().zip(&self.boundary) {
            writeln!(w, "{} {} {}", p[0], p[1], u8::from(b))?;
        }
        writeln!(w, "# triangles {}", self.triangles.len())?;
        for t in &self.triangles {
            writeln!(w, "{} {} {}", t[0], t[1], t[2])?;
        }
        Ok(())
    }
}

/// Uniform bucket grid over triangle bounding boxes.
#[derive(Debug, Clone)]
struct Locator {
    origin: Point,
    cell: f64,
    dims: [usize; 2],
    buckets: Vec<Vec<u32>>,
}

impl Locator {
    fn build(nodes: &[Point], triangles: &[[usize; 3]], h: f64) -> Self {
        let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
        for p in nodes {
            for k in 0..2 {
                lo[k] = lo[k].min(p[k]);
                hi[k] = hi[k].max(p[k]);
            }
        }
        if nodes.is_empty() {
            lo = [0.0; 2];
            hi = [0.0; 2];
        }
        let cell = h.max(1e-12);
        let dims = [
            ((hi[0] - lo[0]) / cell).floor() as usize + 1,
            ((hi[1] - lo[1]) / cell).floor() as usize + 1,
        ];
        let mut buckets = vec![Vec::new(); dims[0] * dims[1]];
        for (t, tri) in triangles.iter().enumerate() {
            let (mut tlo, mut thi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
            for &i in tri {
                for k in 0..2 {
                    tlo[k] = tlo[k].min(nodes[i][k]);
                    thi[k] = thi[k].max(nodes[i][k]);
                }
            }
            let c0 = Self::cell_of(lo, cell, dims, tlo);
            let c1 = Self::cell_of(lo, cell, dims, thi);
            for cy in c0[1]..=c1[1] {
                for cx in c0[0]..=c1[0] {
                    buckets[cy * dims[0] + cx].push(t as u32);
                }
            }
        }
        Self {
            origin: lo,
            cell,
            dims,
            buckets,
        }
    }

    fn cell_of(origin: Point, cell: f64, dims: [usize; 2], x: Point) -> [usize; 2] {
        std::array::from_fn(|k| {
            let c = ((x[k] - origin[k]) / cell).floor();
            (c.max(0.0) as usize).min(dims[k] - 1)
        })
    }

    fn locate(&self, x: Point, nodes: &[Point], triangles: &[[usize; 3]]) -> Option<(usize, [f64; 3])> {
        const SLACK: f64 = 1e-10;
        let rel = [(x[0] - self.origin[0]) / self.cell, (x[1] - self.origin[1]) / self.cell];
        if rel[0] < -SLACK
            || rel[1] < -SLACK
            || rel[0] > self.dims[0] as f64 + SLACK
            || rel[1] > self.dims[1] as f64 + SLACK
        {
            return None;
        }
        let c = Self::cell_of(self.origin, self.cell, self.dims, x);
        let mut best: Option<(usize, [f64; 3], f64)> = None;
        for &t in &self.buckets[c[1] * self.dims[0] + c[0]] {
            let tri = triangles[t as usize];
            let (a, b, cc) = (nodes[tri[0]], nodes[tri[1]], nodes[tri[2]]);
            let det = cross(sub(b, a), sub(cc, a));
            let l1 = cross(sub(x, a), sub(cc, a)) / det;
            let l2 = cross(sub(b, a), sub(x, a)) / det;
            let bary = [1.0 - l1 - l2, l1, l2];
            let worst = bary.iter().copied().fold(f64::INFINITY, f64::min);
            if worst >= 0.0 {
                return Some((t as usize, bary));
            }
            if best.as_ref().is_none_or(|b| worst > b.2) {
                best = Some((t as usize, bary, worst));
            }
        }
        match best {
            Some((t, bary, worst)) if worst >= -SLACK => {
                let clipped = bary.map(|v| v.max(0.0));
                let s: f64 = clipped.iter().sum();
                Some((t, clipped.map(|v| v / s)))
            }
            _ => None,
        }
    }
}
