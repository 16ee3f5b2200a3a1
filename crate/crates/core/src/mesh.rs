//! Piecewise-linear triangle meshes for planar domains.
//!
//! Two generators cover the domains used by the experiments: structured
//! squares (alternating diagonals, all right triangles) and polar disks
//! (concentric rings with ~6k nodes on ring k, near-equilateral elements).
//! Metric balls are realized as node/element subsets of a mesh that covers
//! them, so no ball-shaped generator exists. Meshes are immutable after
//! construction and shared via `Arc`.

use crate::linalg::{Covector, Point};
use serde::Serialize;
use std::io::{BufRead, Write};
use std::sync::Arc;

#[derive(Debug, thiserror::Error)]
pub enum MeshError {
    #[error("mesh csv parse error on line {line}: {message}")]
    Csv { line: usize, message: String },
    #[error("invalid topology: {0}")]
    InvalidTopology(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("field has {got} values but mesh has {expected} nodes")]
    FieldSize { expected: usize, got: usize },
}

pub type MeshRef = Arc<Mesh>;

/// An immutable triangle mesh with precomputed element geometry.
#[derive(Debug)]
pub struct Mesh {
    nodes: Vec<Point>,
    triangles: Vec<[u32; 3]>,
    boundary: Vec<bool>,
    /// Characteristic element size requested at generation time.
    h: f64,
    areas: Vec<f64>,
    centroids: Vec<Point>,
    /// Gradients of the three hat functions on each element.
    hat_gradients: Vec<[Covector; 3]>,
    /// CSR node -> incident triangles.
    node_tri_offsets: Vec<usize>,
    node_tri: Vec<u32>,
}

impl Mesh {
    /// Structured square `[cx-r, cx+r] x [cy-r, cy+r]` with cell size ~ `h`
    /// and alternating diagonals (all elements are right triangles, which
    /// keeps the Euclidean stiffness matrix an M-matrix).
    pub fn square(center: Point, half_width: f64, h: f64) -> MeshRef {
        assert!(half_width > 0.0 && h > 0.0);
        let m = ((2.0 * half_width / h).round() as usize).max(2);
        let step = 2.0 * half_width / m as f64;
        let x0 = center.get(0) - half_width;
        let y0 = center.get(1) - half_width;
        let idx = |i: usize, j: usize| (j * (m + 1) + i) as u32;
        let mut nodes = Vec::with_capacity((m + 1) * (m + 1));
        for j in 0..=m {
            for i in 0..=m {
                nodes.push(Point::xy(x0 + i as f64 * step, y0 + j as f64 * step));
            }
        }
        let mut triangles = Vec::with_capacity(2 * m * m);
        for j in 0..m {
            for i in 0..m {
                let (a, b, c, d) = (idx(i, j), idx(i + 1, j), idx(i + 1, j + 1), idx(i, j + 1));
                if (i + j) % 2 == 0 {
                    triangles.push([a, b, c]);
                    triangles.push([a, c, d]);
                } else {
                    triangles.push([a, b, d]);
                    triangles.push([b, c, d]);
                }
            }
        }
        Arc::new(Self::build(nodes, triangles, h).expect("square mesh is valid"))
    }

    /// Polar disk mesh: ring `k` of `K` sits at radius `R k/K` and carries
    /// `6k` nodes, so elements stay near-equilateral at every radius.
    pub fn disk(center: Point, radius: f64, h: f64) -> MeshRef {
        assert!(radius > 0.0 && h > 0.0);
        let rings = ((radius / h).round() as usize).max(2);
        let mut nodes = vec![center];
        let mut ring_start = vec![0usize]; // index of first node of ring k
        for k in 1..=rings {
            ring_start.push(nodes.len());
            let n_k = 6 * k;
            let r_k = radius * k as f64 / rings as f64;
            for t in 0..n_k {
                let ang = t as f64 * std::f64::consts::TAU / n_k as f64;
                nodes.push(Point::xy(
                    center.get(0) + r_k * ang.cos(),
                    center.get(1) + r_k * ang.sin(),
                ));
            }
        }
        let ring_count = |k: usize| if k == 0 { 1 } else { 6 * k };
        let mut triangles = Vec::new();
        for k in 0..rings {
            let n_i = ring_count(k);
            let n_o = ring_count(k + 1);
            let inner = |t: usize| (ring_start[k] + t % n_i) as u32;
            let outer = |s: usize| (ring_start[k + 1] + s % n_o) as u32;
            if k == 0 {
                for s in 0..n_o {
                    triangles.push([inner(0), outer(s), outer(s + 1)]);
                }
                continue;
            }
            // march around both rings by angle
            let (mut t, mut s) = (0usize, 0usize);
            while t < n_i || s < n_o {
                let inner_next = (t + 1) as f64 / n_i as f64;
                let outer_next = (s + 1) as f64 / n_o as f64;
                if s >= n_o || (t < n_i && inner_next <= outer_next) {
                    triangles.push([inner(t), outer(s), inner(t + 1)]);
                    t += 1;
                } else {
                    triangles.push([inner(t), outer(s), outer(s + 1)]);
                    s += 1;
                }
            }
        }
        Arc::new(Self::build(nodes, triangles, h).expect("disk mesh is valid"))
    }

    /// Assemble derived data; orientations are fixed to counter-clockwise.
    pub fn build(
        nodes: Vec<Point>,
        mut triangles: Vec<[u32; 3]>,
        h: f64,
    ) -> Result<Self, MeshError> {
        let n = nodes.len();
        if n < 3 || triangles.is_empty() {
            return Err(MeshError::InvalidTopology("mesh needs nodes and triangles".into()));
        }
        for t in &mut triangles {
            if t.iter().any(|&i| i as usize >= n) {
                return Err(MeshError::InvalidTopology("triangle index out of range".into()));
            }
            let [a, b, c] = *t;
            let (pa, pb, pc) = (nodes[a as usize], nodes[b as usize], nodes[c as usize]);
            let cross = (pb.get(0) - pa.get(0)) * (pc.get(1) - pa.get(1))
                - (pb.get(1) - pa.get(1)) * (pc.get(0) - pa.get(0));
            if cross == 0.0 {
                return Err(MeshError::InvalidTopology("degenerate triangle".into()));
            }
            if cross < 0.0 {
                t.swap(1, 2);
            }
        }
        // boundary nodes: endpoints of edges used by exactly one triangle
        let mut edge_use = std::collections::HashMap::new();
        for t in &triangles {
            for e in 0..3 {
                let (a, b) = (t[e], t[(e + 1) % 3]);
                let key = (a.min(b), a.max(b));
                *edge_use.entry(key).or_insert(0u32) += 1;
            }
        }
        let mut boundary = vec![false; n];
        for ((a, b), uses) in &edge_use {
            match uses {
                1 => {
                    boundary[*a as usize] = true;
                    boundary[*b as usize] = true;
                }
                2 => {}
                _ => {
                    return Err(MeshError::InvalidTopology(
                        "edge shared by more than two triangles".into(),
                    ))
                }
            }
        }
        let mut areas = Vec::with_capacity(triangles.len());
        let mut centroids = Vec::with_capacity(triangles.len());
        let mut hat_gradients = Vec::with_capacity(triangles.len());
        for t in &triangles {
            let p: Vec<Point> = t.iter().map(|&i| nodes[i as usize]).collect();
            let area = 0.5
                * ((p[1].get(0) - p[0].get(0)) * (p[2].get(1) - p[0].get(1))
                    - (p[1].get(1) - p[0].get(1)) * (p[2].get(0) - p[0].get(0)));
            areas.push(area);
            centroids.push(Point::xy(
                (p[0].get(0) + p[1].get(0) + p[2].get(0)) / 3.0,
                (p[0].get(1) + p[1].get(1) + p[2].get(1)) / 3.0,
            ));
            // grad of hat i is the inward normal of the opposite edge / (2A)
            let mut grads = [Covector::zeros(2); 3];
            for i in 0..3 {
                let (pj, pk) = (p[(i + 1) % 3], p[(i + 2) % 3]);
                grads[i] = Covector::new(&[
                    (pj.get(1) - pk.get(1)) / (2.0 * area),
                    (pk.get(0) - pj.get(0)) / (2.0 * area),
                ]);
            }
            hat_gradients.push(grads);
        }
        // CSR adjacency
        let mut counts = vec![0usize; n];
        for t in &triangles {
            for &i in t {
                counts[i as usize] += 1;
            }
        }
        let mut node_tri_offsets = vec![0usize; n + 1];
        for i in 0..n {
            node_tri_offsets[i + 1] = node_tri_offsets[i] + counts[i];
        }
        let mut cursor = node_tri_offsets.clone();
        let mut node_tri = vec![0u32; node_tri_offsets[n]];
        for (ti, t) in triangles.iter().enumerate() {
            for &i in t {
                node_tri[cursor[i as usize]] = ti as u32;
                cursor[i as usize] += 1;
            }
        }
        Ok(Self {
            nodes,
            triangles,
            boundary,
            h,
            areas,
            centroids,
            hat_gradients,
            node_tri_offsets,
            node_tri,
        })
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn tri_count(&self) -> usize {
        self.triangles.len()
    }

    pub fn node(&self, i: usize) -> Point {
        self.nodes[i]
    }

    pub fn nodes(&self) -> &[Point] {
        &self.nodes
    }

    pub fn triangle(&self, t: usize) -> [u32; 3] {
        self.triangles[t]
    }

    pub fn triangles(&self) -> &[[u32; 3]] {
        &self.triangles
    }

    pub fn is_boundary(&self, i: usize) -> bool {
        self.boundary[i]
    }

    pub fn boundary_nodes(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.nodes.len()).filter(|&i| self.boundary[i])
    }

    pub fn interior_nodes(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.nodes.len()).filter(|&i| !self.boundary[i])
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn area(&self, t: usize) -> f64 {
        self.areas[t]
    }

    pub fn total_area(&self) -> f64 {
        self.areas.iter().sum()
    }

    pub fn centroid(&self, t: usize) -> Point {
        self.centroids[t]
    }

    pub fn hat_gradient(&self, t: usize, corner: usize) -> Covector {
        self.hat_gradients[t][corner]
    }

    /// Triangles incident to a node.
    pub fn tris_of_node(&self, i: usize) -> &[u32] {
        &self.node_tri[self.node_tri_offsets[i]..self.node_tri_offsets[i + 1]]
    }

    /// Lumped node mass: one third of the incident element area.
    pub fn lumped_mass(&self, i: usize) -> f64 {
        self.tris_of_node(i)
            .iter()
            .map(|&t| self.areas[t as usize] / 3.0)
            .sum()
    }

    pub fn export_csv(
        &self,
        nodes_out: &mut impl Write,
        tris_out: &mut impl Write,
    ) -> Result<(), MeshError> {
        writeln!(nodes_out, "id,x,y,boundary")?;
        for (i, p) in self.nodes.iter().enumerate() {
            writeln!(
                nodes_out,
                "{i},{:.17e},{:.17e},{}",
                p.get(0),
                p.get(1),
                u8::from(self.boundary[i])
            )?;
        }
        writeln!(tris_out, "id,n0,n1,n2")?;
        for (t, tri) in self.triangles.iter().enumerate() {
            writeln!(tris_out, "{t},{},{},{}", tri[0], tri[1], tri[2])?;
        }
        Ok(())
    }

    pub fn import_csv(
        nodes_in: impl BufRead,
        tris_in: impl BufRead,
        h: f64,
    ) -> Result<MeshRef, MeshError> {
        let mut nodes = Vec::new();
        for (lineno, line) in nodes_in.lines().enumerate() {
            let line = line?;
            if lineno == 0 || line.trim().is_empty() {
                continue;
            }
            let cols: Vec<&str> = line.split(',').collect();
            if cols.len() < 3 {
                return Err(MeshError::Csv {
                    line: lineno + 1,
                    message: "expected id,x,y,boundary".into(),
                });
            }
            let x: f64 = cols[1].trim().parse().map_err(|e| MeshError::Csv {
                line: lineno + 1,
                message: format!("bad x: {e}"),
            })?;
            let y: f64 = cols[2].trim().parse().map_err(|e| MeshError::Csv {
                line: lineno + 1,
                message: format!("bad y: {e}"),
            })?;
            nodes.push(Point::xy(x, y));
        }
        let mut triangles = Vec::new();
        for (lineno, line) in tris_in.lines().enumerate() {
            let line = line?;
            if lineno == 0 || line.trim().is_empty() {
                continue;
            }
            let cols: Vec<&str> = line.split(',').collect();
            if cols.len() < 4 {
                return Err(MeshError::Csv {
                    line: lineno + 1,
                    message: "expected id,n0,n1,n2".into(),
                });
            }
            let mut tri = [0u32; 3];
            for (k, slot) in tri.iter_mut().enumerate() {
                *slot = cols[k + 1].trim().parse().map_err(|e| MeshError::Csv {
                    line: lineno + 1,
                    message: format!("bad node index: {e}"),
                })?;
            }
            triangles.push(tri);
        }
        Ok(Arc::new(Self::build(nodes, triangles, h)?))
    }
}

/// Nodal values of a piecewise-linear function on a shared mesh.
#[derive(Debug, Clone)]
pub struct ScalarField {
    mesh: MeshRef,
    values: Vec<f64>,
}

impl ScalarField {
    pub fn new(mesh: MeshRef, values: Vec<f64>) -> Result<Self, MeshError> {
        if values.len() != mesh.node_count() {
            return Err(MeshError::FieldSize {
                expected: mesh.node_count(),
                got: values.len(),
            });
        }
        Ok(Self { mesh, values })
    }

    pub fn from_fn(mesh: MeshRef, f: impl Fn(Point) -> f64) -> Self {
        let values = mesh.nodes().iter().map(|&p| f(p)).collect();
        Self { mesh, values }
    }

    pub fn constant(mesh: MeshRef, c: f64) -> Self {
        let values = vec![c; mesh.node_count()];
        Self { mesh, values }
    }

    pub fn mesh(&self) -> &MeshRef {
        &self.mesh
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn value(&self, i: usize) -> f64 {
        self.values[i]
    }

    /// Differential of the linear interpolant on element `t` (constant).
    pub fn element_differential(&self, t: usize) -> Covector {
        let tri = self.mesh.triangle(t);
        let mut out = Covector::zeros(2);
        for (corner, &node) in tri.iter().enumerate() {
            let g = self.mesh.hat_gradient(t, corner);
            out = out + g * self.values[node as usize];
        }
        out
    }

    /// Mean of the nodal values over element `t` (= centroid value for PL).
    pub fn element_mean(&self, t: usize) -> f64 {
        let tri = self.mesh.triangle(t);
        (self.values[tri[0] as usize] + self.values[tri[1] as usize] + self.values[tri[2] as usize])
            / 3.0
    }

    pub fn export_csv(&self, out: &mut impl Write) -> Result<(), MeshError> {
        writeln!(out, "id,value")?;
        for (i, v) in self.values.iter().enumerate() {
            writeln!(out, "{i},{v:.17e}")?;
        }
        Ok(())
    }

    pub fn import_csv(mesh: MeshRef, input: impl BufRead) -> Result<Self, MeshError> {
        let mut values = Vec::new();
        for (lineno, line) in input.lines().enumerate() {
            let line = line?;
            if lineno == 0 || line.trim().is_empty() {
                continue;
            }
            let cols: Vec<&str> = line.split(',').collect();
            if cols.len() < 2 {
                return Err(MeshError::Csv {
                    line: lineno + 1,
                    message: "expected id,value".into(),
                });
            }
            values.push(cols[1].trim().parse().map_err(|e| MeshError::Csv {
                line: lineno + 1,
                message: format!("bad value: {e}"),
            })?);
        }
        Self::new(mesh, values)
    }
}

/// Degree-2 exact quadrature (edge midpoints) of a function given per
/// corner-pair midpoint value; used where integrands are products of PL
/// functions.
pub fn edge_midpoint_quadrature(mesh: &Mesh, t: usize, f: impl Fn(Point) -> f64) -> f64 {
    let tri = mesh.triangle(t);
    let p: Vec<Point> = tri.iter().map(|&i| mesh.node(i as usize)).collect();
    let mids = [
        p[0].midpoint(p[1]),
        p[1].midpoint(p[2]),
        p[2].midpoint(p[0]),
    ];
    mesh.area(t) / 3.0 * (f(mids[0]) + f(mids[1]) + f(mids[2]))
}

/// Degree-4 exact triangle quadrature (6-point rule), for quartic integrands
/// such as `|u - c|^4` of a PL field.
pub fn degree4_quadrature(mesh: &Mesh, t: usize, f: impl Fn(Point) -> f64) -> f64 {
    const A1: f64 = 0.445948490915965;
    const W1: f64 = 0.223381589678011;
    const A2: f64 = 0.091576213509771;
    const W2: f64 = 0.109951743655322;
    let tri = mesh.triangle(t);
    let p: Vec<Point> = tri.iter().map(|&i| mesh.node(i as usize)).collect();
    let at = |l0: f64, l1: f64, l2: f64| {
        Point::xy(
            l0 * p[0].get(0) + l1 * p[1].get(0) + l2 * p[2].get(0),
            l0 * p[0].get(1) + l1 * p[1].get(1) + l2 * p[2].get(1),
        )
    };
    let mut acc = 0.0;
    for (a, w) in [(A1, W1), (A2, W2)] {
        let b = 1.0 - 2.0 * a;
        acc += w * (f(at(b, a, a)) + f(at(a, b, a)) + f(at(a, a, b)));
    }
    mesh.area(t) * acc
}

/// Summary row describing a mesh, for manifests and logs.
#[derive(Debug, Clone, Serialize)]
pub struct MeshStats {
    pub nodes: usize,
    pub triangles: usize,
    pub boundary_nodes: usize,
    pub h: f64,
    pub total_area: f64,
}

impl MeshStats {
    pub fn of(mesh: &Mesh) -> Self {
        Self {
            nodes: mesh.node_count(),
            triangles: mesh.tri_count(),
            boundary_nodes: mesh.boundary_nodes().count(),
            h: mesh.h(),
            total_area: mesh.total_area(),
        }
    }
}
