//! Geodesics, exponential map, directed distance, forward balls and their
//! volumes, flag/Ricci curvature, and weighted Ricci curvature.
//!
//! Geodesics are integrated in momentum form: the state is `(x, xi)` with
//! `xi` the fiber derivative of `F^2/2`, so the equations read
//! `dx/dt = l^{-1}(xi)`, `dxi/dt = grad_x(F^2)/2`. This keeps the system
//! first-order symmetric and reuses the Legendre solver with warm starts.
//! Distances are computed on a mesh: directed Dijkstra on edge costs
//! `F(x_mid, dx)`, improved by Hopf-Lax sweeps (for one-to-all fields) or by
//! direct minimization of the discrete length over a polyline (for
//! point-to-point queries). Curvature is estimated from the growth rate of
//! numerical Jacobi fields.

use crate::linalg::{Covector, LinalgError, Point, Vector};
use crate::mesh::{Mesh, MeshRef, ScalarField};
use crate::norms::{FinslerStructure, NormError};
use crate::report::InequalityReport;
use std::collections::BinaryHeap;

/// Default local error tolerance for the adaptive geodesic integrator.
pub const GEODESIC_TOL: f64 = 1e-10;

/// Fiber step used when differencing nearby geodesics for curvature.
pub const JACOBI_FD_STEP: f64 = 1e-2;

/// Parameter half-step for the measure decomposition along a geodesic.
pub const MEASURE_FD_STEP: f64 = 1e-2;

/// Threshold on |Psi'(0)| beyond which `Ric_n` takes its -inf branch.
pub const RIC_N_EQUAL_DIM_TOL: f64 = 1e-6;

#[derive(Debug, thiserror::Error)]
pub enum GeomError {
    #[error(transparent)]
    Norm(#[from] NormError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(transparent)]
    Mesh(#[from] crate::mesh::MeshError),
    #[error("geodesic left the chart domain near t = {t:.6}")]
    LeftDomain { t: f64 },
    #[error("integrator step size collapsed near t = {t:.6}")]
    StepCollapse { t: f64 },
    #[error("target is not reachable on this mesh")]
    Unreachable,
    #[error("forward ball of radius {radius} reaches the mesh boundary; volume would only be a lower bound")]
    BallTruncated { radius: f64 },
    #[error("{0}")]
    InvalidParameter(String),
}

/// Integrator controls for `shoot_geodesic`.
#[derive(Debug, Clone, Copy)]
pub struct GeodesicOptions {
    /// Relative local error tolerance per step (Richardson estimate).
    pub tol: f64,
    /// Hard cap on accepted+rejected steps.
    pub max_steps: usize,
    /// Number of uniform sample intervals recorded on `[0, T]`.
    pub samples: usize,
}

impl Default for GeodesicOptions {
    fn default() -> Self {
        Self {
            tol: GEODESIC_TOL,
            max_steps: 200_000,
            samples: 32,
        }
    }
}

/// A constant-speed geodesic sampled at uniform parameter values.
#[derive(Debug, Clone)]
pub struct Geodesic {
    pub times: Vec<f64>,
    pub points: Vec<Point>,
    pub velocities: Vec<Vector>,
    pub momenta: Vec<Covector>,
    /// Initial speed `F(x0, v0)`; conserved along the curve.
    pub speed: f64,
    /// Largest observed relative deviation of `F(x, v)` from `speed`.
    pub speed_drift: f64,
    /// True when the curve exited the chart domain before reaching `T`;
    /// samples then stop at the last in-domain state.
    pub truncated: bool,
}

impl Geodesic {
    pub fn endpoint(&self) -> Point {
        *self.points.last().expect("geodesic has samples")
    }

    /// Max-norm defect of the momentum equation `dxi/dt = grad_x(F^2)/2`,
    /// estimated with centered differences on the stored samples. Decays
    /// quadratically in the sample spacing on smooth structures.
    pub fn euler_lagrange_residual(&self, structure: &FinslerStructure) -> f64 {
        let mut worst: f64 = 0.0;
        for k in 1..self.times.len().saturating_sub(1) {
            let dt = self.times[k + 1] - self.times[k - 1];
            if dt == 0.0 {
                continue;
            }
            let rate = (self.momenta[k + 1] - self.momenta[k - 1]) * (1.0 / dt);
            let expected =
                structure.norm_sq_x_gradient(&self.points[k], &self.velocities[k]) * 0.5;
            let defect = rate - expected;
            for i in 0..defect.dim() {
                worst = worst.max(defect.get(i).abs());
            }
        }
        worst
    }
}

#[derive(Clone, Copy)]
struct OdeState {
    x: Point,
    xi: Covector,
}

impl OdeState {
    fn advanced(&self, dx: &Vector, dxi: &Covector, h: f64) -> OdeState {
        OdeState {
            x: self.x.offset(*dx * h),
            xi: self.xi + *dxi * h,
        }
    }
}

fn geodesic_rhs(
    structure: &FinslerStructure,
    state: &OdeState,
    sign: f64,
    warm: &mut Option<Vector>,
) -> Result<(Vector, Covector), GeomError> {
    let v = structure.legendre_inverse(&state.x, &state.xi, *warm)?;
    *warm = Some(v);
    let dxi = structure.norm_sq_x_gradient(&state.x, &v) * 0.5;
    Ok((v * sign, dxi * sign))
}

fn rk4_step(
    structure: &FinslerStructure,
    state: &OdeState,
    h: f64,
    sign: f64,
    warm: &mut Option<Vector>,
) -> Result<OdeState, GeomError> {
    let (k1x, k1xi) = geodesic_rhs(structure, state, sign, warm)?;
    let s2 = state.advanced(&k1x, &k1xi, 0.5 * h);
    let (k2x, k2xi) = geodesic_rhs(structure, &s2, sign, warm)?;
    let s3 = state.advanced(&k2x, &k2xi, 0.5 * h);
    let (k3x, k3xi) = geodesic_rhs(structure, &s3, sign, warm)?;
    let s4 = state.advanced(&k3x, &k3xi, h);
    let (k4x, k4xi) = geodesic_rhs(structure, &s4, sign, warm)?;
    let dx = (k1x + k2x * 2.0 + k3x * 2.0 + k4x) * (1.0 / 6.0);
    let dxi = (k1xi + k2xi * 2.0 + k3xi * 2.0 + k4xi) * (1.0 / 6.0);
    Ok(state.advanced(&dx, &dxi, h))
}

/// Integrate the geodesic from `p` with initial velocity `v` up to parameter
/// `t_end` (negative values integrate backwards in the parameter, which is
/// not the same as reversing the norm). Samples are recorded at uniform
/// parameter values including both endpoints.
pub fn shoot_geodesic(
    structure: &FinslerStructure,
    p: Point,
    v: Vector,
    t_end: f64,
    opts: &GeodesicOptions,
) -> Result<Geodesic, GeomError> {
    if v.euclid_norm() == 0.0 {
        return Err(GeomError::InvalidParameter(
            "geodesics need a nonzero initial velocity".into(),
        ));
    }
    if !structure.domain().contains(&p) {
        return Err(GeomError::InvalidParameter(
            "geodesic base point lies outside the chart domain".into(),
        ));
    }
    let speed = structure.norm(&p, &v);
    let n_samp = opts.samples.max(1);
    let sample_times: Vec<f64> = (0..=n_samp)
        .map(|k| t_end * k as f64 / n_samp as f64)
        .collect();

    // Locally Minkowski structures have straight geodesics with constant
    // momentum; sampling the line is exact and avoids integrator cost.
    if structure.is_x_independent() {
        let xi = structure.legendre(&p, &v);
        let mut out = Geodesic {
            times: Vec::new(),
            points: Vec::new(),
            velocities: Vec::new(),
            momenta: Vec::new(),
            speed,
            speed_drift: 0.0,
            truncated: false,
        };
        for &t in &sample_times {
            let x = p.offset(v * t);
            if !structure.domain().contains(&x) {
                out.truncated = true;
                break;
            }
            out.times.push(t);
            out.points.push(x);
            out.velocities.push(v);
            out.momenta.push(xi);
        }
        return Ok(out);
    }

    let sign = if t_end < 0.0 { -1.0 } else { 1.0 };
    let total = t_end.abs();
    let pos_scale = structure.domain().scale().max(1.0);
    let mut state = OdeState {
        x: p,
        xi: structure.legendre(&p, &v),
    };
    let mut warm = Some(v);
    let mut out = Geodesic {
        times: vec![0.0],
        points: vec![p],
        velocities: vec![v],
        momenta: vec![state.xi],
        speed,
        speed_drift: 0.0,
        truncated: false,
    };
    if total == 0.0 {
        return Ok(out);
    }
    let mut sigma = 0.0_f64; // progress along |t|
    let mut h = (total / 64.0).max(1e-12);
    let mut steps = 0usize;
    'samples: for &t_k in &sample_times[1..] {
        let sigma_k = t_k.abs();
        while sigma < sigma_k {
            let remaining = sigma_k - sigma;
            if remaining <= 1e-14 * total {
                sigma = sigma_k;
                break;
            }
            let h_try = h.min(remaining);
            // step doubling: one full step vs two half steps
            let full = rk4_step(structure, &state, h_try, sign, &mut warm)?;
            let half = rk4_step(structure, &state, 0.5 * h_try, sign, &mut warm)?;
            let fine = rk4_step(structure, &half, 0.5 * h_try, sign, &mut warm)?;
            let xi_scale = state
                .xi
                .as_slice()
                .iter()
                .fold(1e-12_f64, |m, c| m.max(c.abs()));
            let mut err: f64 = 0.0;
            for i in 0..structure.dim() {
                err = err.max((full.x.get(i) - fine.x.get(i)).abs() / pos_scale);
                err = err.max((full.xi.get(i) - fine.xi.get(i)).abs() / xi_scale);
            }
            steps += 1;
            if steps > opts.max_steps {
                return Err(GeomError::StepCollapse { t: sign * sigma });
            }
            if err <= opts.tol {
                // local extrapolation: the doubled step is fourth order, so
                // the combination gains one order
                let mut next = fine;
                for i in 0..structure.dim() {
                    next.x
                        .set(i, fine.x.get(i) + (fine.x.get(i) - full.x.get(i)) / 15.0);
                    next.xi
                        .set(i, fine.xi.get(i) + (fine.xi.get(i) - full.xi.get(i)) / 15.0);
                }
                if !structure.domain().contains(&next.x) {
                    out.truncated = true;
                    break 'samples;
                }
                state = next;
                sigma = if h_try >= remaining { sigma_k } else { sigma + h_try };
                let grow = if err > 0.0 {
                    0.9 * (opts.tol / err).powf(0.2)
                } else {
                    4.0
                };
                h = (h_try * grow.clamp(0.25, 4.0)).min(total);
            } else {
                h = h_try * (0.9 * (opts.tol / err).powf(0.2)).clamp(0.1, 0.9);
                if h < total * 1e-14 {
                    return Err(GeomError::StepCollapse { t: sign * sigma });
                }
            }
        }
        let v_k = structure.legendre_inverse(&state.x, &state.xi, warm)?;
        warm = Some(v_k);
        let f_k = structure.norm(&state.x, &v_k);
        out.speed_drift = out
            .speed_drift
            .max((f_k - speed).abs() / speed.max(1e-300));
        out.times.push(t_k);
        out.points.push(state.x);
        out.velocities.push(v_k);
        out.momenta.push(state.xi);
    }
    Ok(out)
}

/// Endpoint of the unit-parameter geodesic with initial velocity `v`.
pub fn exp_map(structure: &FinslerStructure, p: Point, v: Vector) -> Result<Point, GeomError> {
    if v.euclid_norm() == 0.0 {
        return Ok(p);
    }
    let geo = shoot_geodesic(structure, p, v, 1.0, &GeodesicOptions::default())?;
    if geo.truncated {
        return Err(GeomError::LeftDomain {
            t: *geo.times.last().unwrap_or(&0.0),
        });
    }
    Ok(geo.endpoint())
}

// ---------------------------------------------------------------------------
// Round-sphere chart helpers (stereographic coordinates, unit sphere). These
// give closed-form geodesics and distances for the conformal patch metric
// `4 delta / (1 + |x|^2)^2` and serve as reference values in tests and runs.
// ---------------------------------------------------------------------------

/// Chart point -> unit sphere in R^3 (the chart origin maps to the south pole).
pub fn sphere_chart_embed(p: Point) -> [f64; 3] {
    let (x, y) = (p.get(0), p.get(1));
    let d = 1.0 + x * x + y * y;
    [2.0 * x / d, 2.0 * y / d, (x * x + y * y - 1.0) / d]
}

/// Inverse of `sphere_chart_embed`; valid away from the north pole.
pub fn sphere_chart_project(e: [f64; 3]) -> Point {
    let denom = 1.0 - e[2];
    Point::xy(e[0] / denom, e[1] / denom)
}

/// Push a chart tangent vector forward to the embedded sphere.
pub fn sphere_chart_push_forward(p: Point, v: Vector) -> [f64; 3] {
    let (x, y) = (p.get(0), p.get(1));
    let (vx, vy) = (v.get(0), v.get(1));
    let d = 1.0 + x * x + y * y;
    let dd = 2.0 * (x * vx + y * vy); // derivative of d along v
    [
        2.0 * vx / d - 2.0 * x * dd / (d * d),
        2.0 * vy / d - 2.0 * y * dd / (d * d),
        dd / d - (x * x + y * y - 1.0) * dd / (d * d),
    ]
}

/// Great-circle distance between two chart points.
pub fn sphere_chart_exact_distance(p: Point, q: Point) -> f64 {
    let a = sphere_chart_embed(p);
    let b = sphere_chart_embed(q);
    let dot: f64 = a.iter().zip(&b).map(|(u, w)| u * w).sum();
    dot.clamp(-1.0, 1.0).acos()
}

/// Great-circle position after parameter `t` from `p` with chart velocity `v`.
pub fn sphere_chart_exact_geodesic(p: Point, v: Vector, t: f64) -> Point {
    let base = sphere_chart_embed(p);
    let dir = sphere_chart_push_forward(p, v);
    let w = (dir.iter().map(|c| c * c).sum::<f64>()).sqrt();
    if w == 0.0 {
        return p;
    }
    let (c, s) = ((w * t).cos(), (w * t).sin());
    let e = [
        c * base[0] + s * dir[0] / w,
        c * base[1] + s * dir[1] / w,
        c * base[2] + s * dir[2] / w,
    ];
    sphere_chart_project(e)
}

// ---------------------------------------------------------------------------
// Directed distance on a mesh
// ---------------------------------------------------------------------------

/// Midpoint-rule cost of the straight segment from `a` to `b`; exact for
/// locally Minkowski structures by homogeneity.
fn segment_cost(structure: &FinslerStructure, a: Point, b: Point) -> f64 {
    structure.norm(&a.midpoint(b), &b.displacement_from(a))
}

#[derive(PartialEq)]
struct HeapItem {
    d: f64,
    node: u32,
}

impl Eq for HeapItem {}

impl Ord for HeapItem {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        // reversed: BinaryHeap is a max-heap, we want smallest distance first
        other
            .d
            .partial_cmp(&self.d)
            .expect("distances are not NaN")
            .then_with(|| other.node.cmp(&self.node))
    }
}

impl PartialOrd for HeapItem {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

fn nearest_node(mesh: &Mesh, p: Point) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (i, q) in mesh.nodes().iter().enumerate() {
        let d = q.displacement_from(p).euclid_norm();
        if d < best_d {
            best_d = d;
            best = i;
        }
    }
    best
}

fn node_neighbors(mesh: &Mesh) -> Vec<Vec<u32>> {
    let mut out = vec![Vec::new(); mesh.node_count()];
    for (i, adj) in out.iter_mut().enumerate() {
        for &t in mesh.tris_of_node(i) {
            for &n in &mesh.triangle(t as usize) {
                if n as usize != i && !adj.contains(&n) {
                    adj.push(n);
                }
            }
        }
        adj.sort_unstable();
    }
    out
}

/// Seed nodes near the source point with direct segment costs (upper bounds),
/// then run directed Dijkstra over mesh edges. Returns per-node distances and
/// the predecessor of each node (`u32::MAX` marks a seed).
fn dijkstra_from_point(
    structure: &FinslerStructure,
    mesh: &Mesh,
    neighbors: &[Vec<u32>],
    p: Point,
) -> (Vec<f64>, Vec<u32>) {
    let n = mesh.node_count();
    let mut dist = vec![f64::INFINITY; n];
    let mut parent = vec![u32::MAX; n];
    let mut settled = vec![false; n];
    let mut heap = BinaryHeap::new();
    let seed_radius = 2.5 * mesh.h();
    let mut seeded = false;
    for (i, q) in mesh.nodes().iter().enumerate() {
        if q.displacement_from(p).euclid_norm() <= seed_radius {
            dist[i] = segment_cost(structure, p, *q);
            heap.push(HeapItem { d: dist[i], node: i as u32 });
            seeded = true;
        }
    }
    if !seeded {
        let i = nearest_node(mesh, p);
        dist[i] = segment_cost(structure, p, mesh.node(i));
        heap.push(HeapItem { d: dist[i], node: i as u32 });
    }
    while let Some(HeapItem { d, node }) = heap.pop() {
        let u = node as usize;
        if settled[u] || d > dist[u] {
            continue;
        }
        settled[u] = true;
        let pu = mesh.node(u);
        for &vn in &neighbors[u] {
            let vi = vn as usize;
            if settled[vi] {
                continue;
            }
            let cand = d + segment_cost(structure, pu, mesh.node(vi));
            if cand < dist[vi] {
                dist[vi] = cand;
                parent[vi] = node;
                heap.push(HeapItem { d: cand, node: vn });
            }
        }
    }
    (dist, parent)
}

fn golden_min(mut f: impl FnMut(f64) -> f64, iters: usize) -> f64 {
    const INV_PHI: f64 = 0.618_033_988_749_894_9;
    let (mut a, mut b) = (0.0_f64, 1.0_f64);
    let mut best = f(0.0).min(f(1.0));
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..iters {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = f(d);
        }
        best = best.min(fc.min(fd));
    }
    best
}

/// One-to-all directed distances from `p` over the meshed region.
///
/// Dijkstra on the edge graph yields an upper bound whose error comes from
/// the restricted direction cone; Hopf-Lax sweeps then relax every node
/// against the linear interpolant on the opposite edge of each incident
/// triangle, which lets discrete paths cross element interiors. Sweep
/// updates never increase values, so the field stays an upper bound built
/// from admissible paths.
pub fn distance_field(
    structure: &FinslerStructure,
    mesh: &MeshRef,
    p: Point,
) -> Result<ScalarField, GeomError> {
    let neighbors = node_neighbors(mesh);
    let (mut dist, _) = dijkstra_from_point(structure, mesh, &neighbors, p);

    const MAX_SWEEPS: usize = 60;
    const GOLDEN_ITERS: usize = 24;
    let scale: f64 = dist
        .iter()
        .filter(|d| d.is_finite())
        .fold(0.0_f64, |m, &d| m.max(d))
        .max(1e-300);
    let n = mesh.node_count();
    for sweep in 0..MAX_SWEEPS {
        let mut max_drop = 0.0_f64;
        let order: Box<dyn Iterator<Item = usize>> = if sweep % 2 == 0 {
            Box::new(0..n)
        } else {
            Box::new((0..n).rev())
        };
        for i in order {
            let pi = mesh.node(i);
            let mut best = dist[i];
            for &t in mesh.tris_of_node(i) {
                let tri = mesh.triangle(t as usize);
                let mut others = tri.iter().filter(|&&m| m as usize != i);
                let j = *others.next().expect("triangle has three nodes") as usize;
                let k = *others.next().expect("triangle has three nodes") as usize;
                let (dj, dk) = (dist[j], dist[k]);
                if !dj.is_finite() && !dk.is_finite() {
                    continue;
                }
                let (pj, pk) = (mesh.node(j), mesh.node(k));
                if dj.is_finite() && dk.is_finite() {
                    let edge = pk.displacement_from(pj);
                    let cand = golden_min(
                        |lam| {
                            let y = pj.offset(edge * lam);
                            (1.0 - lam) * dj + lam * dk + segment_cost(structure, y, pi)
                        },
                        GOLDEN_ITERS,
                    );
                    best = best.min(cand);
                } else {
                    let (dn, pn) = if dj.is_finite() { (dj, pj) } else { (dk, pk) };
                    best = best.min(dn + segment_cost(structure, pn, pi));
                }
            }
            if best < dist[i] {
                max_drop = max_drop.max(dist[i] - best);
                dist[i] = best;
            }
        }
        if max_drop < 1e-12 * scale {
            break;
        }
    }
    Ok(ScalarField::new(mesh.clone(), dist)?)
}

/// Point-to-point directed distance estimate.
#[derive(Debug, Clone)]
pub struct DistanceEstimate {
    /// Cost of the best path found on the mesh edge graph.
    pub graph_value: f64,
    /// Cost after polyline refinement; never exceeds `graph_value`.
    pub value: f64,
    /// The refined polyline from source to target.
    pub polyline: Vec<Point>,
}

const REFINE_NODES: usize = 20;

fn polyline_cost(structure: &FinslerStructure, poly: &[Point]) -> f64 {
    poly.windows(2)
        .map(|w| segment_cost(structure, w[0], w[1]))
        .sum()
}

/// Redistribute `m + 1` points along the polyline by Euclidean arc length,
/// keeping both endpoints fixed.
fn resample_polyline(poly: &[Point], m: usize) -> Vec<Point> {
    let mut cum = vec![0.0];
    for w in poly.windows(2) {
        let step = w[1].displacement_from(w[0]).euclid_norm();
        cum.push(cum.last().unwrap() + step);
    }
    let total = *cum.last().unwrap();
    if total == 0.0 {
        return vec![poly[0]; m + 1];
    }
    let mut out = Vec::with_capacity(m + 1);
    let mut seg = 0usize;
    for k in 0..=m {
        let target = total * k as f64 / m as f64;
        while seg + 1 < cum.len() - 1 && cum[seg + 1] < target {
            seg += 1;
        }
        let span = (cum[seg + 1] - cum[seg]).max(1e-300);
        let lam = ((target - cum[seg]) / span).clamp(0.0, 1.0);
        out.push(poly[seg].offset(poly[seg + 1].displacement_from(poly[seg]) * lam));
    }
    out
}

/// Coordinate descent over interior polyline nodes; each accepted move
/// strictly decreases the discrete length, so the result never exceeds the
/// starting value. Candidate positions outside the chart domain are skipped.
fn refine_polyline(structure: &FinslerStructure, poly: &mut Vec<Point>) -> f64 {
    let domain = structure.domain();
    let scale = polyline_cost(structure, poly).max(1e-300);
    let mut total = polyline_cost(structure, poly);
    const MAX_PASSES: usize = 80;
    for _ in 0..MAX_PASSES {
        let mut improved = 0.0;
        for i in 1..poly.len() - 1 {
            let (prev, next) = (poly[i - 1], poly[i + 1]);
            let local = |z: Point| {
                segment_cost(structure, prev, z) + segment_cost(structure, z, next)
            };
            let mut z = poly[i];
            let mut fz = local(z);
            let span = next
                .displacement_from(prev)
                .euclid_norm()
                .max(1e-12);
            // eight-direction pattern search; growing the step after a win
            // keeps walks through narrow diagonal valleys logarithmic
            const DIAG: f64 = std::f64::consts::FRAC_1_SQRT_2;
            const DIRS: [(f64, f64); 8] = [
                (1.0, 0.0),
                (-1.0, 0.0),
                (0.0, 1.0),
                (0.0, -1.0),
                (DIAG, DIAG),
                (DIAG, -DIAG),
                (-DIAG, DIAG),
                (-DIAG, -DIAG),
            ];
            let step_cap = 0.5 * span;
            let step_floor = 1e-7 * span;
            let mut step = 0.25 * span;
            let mut evals = 0usize;
            while step > step_floor && evals < 600 {
                let mut moved = false;
                for (dx, dy) in DIRS {
                    let cand = Point::xy(z.get(0) + step * dx, z.get(1) + step * dy);
                    if !domain.contains(&cand) {
                        continue;
                    }
                    let fc = local(cand);
                    evals += 1;
                    if fc < fz {
                        z = cand;
                        fz = fc;
                        moved = true;
                        break;
                    }
                }
                if moved {
                    step = (step * 1.6).min(step_cap);
                } else {
                    step *= 0.5;
                }
            }
            let before = segment_cost(structure, prev, poly[i])
                + segment_cost(structure, poly[i], next);
            if fz < before {
                improved += before - fz;
                poly[i] = z;
            }
        }
        total = polyline_cost(structure, poly);
        if improved < 1e-13 * scale {
            break;
        }
    }
    total
}

/// Directed distance `d(p, q)` on the meshed region. The mesh graph gives an
/// initial path; the polyline refinement (and, when the chord between the
/// endpoints stays in the domain, a refined straight chord) then removes the
/// graph metrication error. The reported value is the best cost seen and is
/// never above the graph value.
pub fn distance(
    structure: &FinslerStructure,
    p: Point,
    q: Point,
    mesh: &MeshRef,
) -> Result<DistanceEstimate, GeomError> {
    let neighbors = node_neighbors(mesh);
    let (dist, parent) = dijkstra_from_point(structure, mesh, &neighbors, p);
    let tq = nearest_node(mesh, q);
    let mut best_node = usize::MAX;
    let mut graph_value = f64::INFINITY;
    let mut candidates: Vec<u32> = neighbors[tq].clone();
    candidates.push(tq as u32);
    for &c in &candidates {
        let ci = c as usize;
        if !dist[ci].is_finite() {
            continue;
        }
        let total = dist[ci] + segment_cost(structure, mesh.node(ci), q);
        if total < graph_value {
            graph_value = total;
            best_node = ci;
        }
    }
    if best_node == usize::MAX {
        return Err(GeomError::Unreachable);
    }
    // reconstruct p -> ... -> q through the predecessor chain
    let mut chain = vec![q];
    let mut cur = best_node as u32;
    loop {
        chain.push(mesh.node(cur as usize));
        if parent[cur as usize] == u32::MAX {
            break;
        }
        cur = parent[cur as usize];
    }
    chain.push(p);
    chain.reverse();

    let mut best_poly = resample_polyline(&chain, REFINE_NODES);
    let mut best_value = refine_polyline(structure, &mut best_poly);
    // re-equidistribute along the improved path and polish once more
    let mut second = resample_polyline(&best_poly, REFINE_NODES);
    let second_value = refine_polyline(structure, &mut second);
    if second_value < best_value {
        best_value = second_value;
        best_poly = second;
    }
    // the straight chord is a strong candidate whenever it is admissible
    let chord = resample_polyline(&[p, q], REFINE_NODES);
    if chord.iter().all(|z| structure.domain().contains(z)) {
        let mut chord_poly = chord;
        let chord_value = refine_polyline(structure, &mut chord_poly);
        if chord_value < best_value {
            best_value = chord_value;
            best_poly = chord_poly;
        }
    }
    Ok(DistanceEstimate {
        graph_value,
        value: best_value.min(graph_value),
        polyline: best_poly,
    })
}

// ---------------------------------------------------------------------------
// Forward balls and volumes
// ---------------------------------------------------------------------------

/// Forward metric ball `B_R^+(p) = { q : d(p, q) < R }` realized on a mesh.
#[derive(Debug, Clone)]
pub struct Ball {
    pub center: Point,
    pub radius: f64,
    /// Per-node indicator `d(p, node) < R`.
    pub node_inside: Vec<bool>,
    /// Weighted area of the sublevel set of the nodal distance field.
    pub volume: f64,
    /// Set when the ball reaches the mesh boundary; the volume is then only
    /// a lower bound.
    pub truncated: bool,
    /// The distance field used to cut the ball out of the mesh.
    pub distances: ScalarField,
}

impl Ball {
    /// Elements fully inside the ball (all three corners inside).
    pub fn interior_elements(&self) -> Vec<usize> {
        let mesh = self.distances.mesh();
        (0..mesh.tri_count())
            .filter(|&t| {
                mesh.triangle(t)
                    .iter()
                    .all(|&n| self.node_inside[n as usize])
            })
            .collect()
    }
}

/// Weighted area of `{ interpolated d < level }` inside one element, with the
/// measure weight evaluated at the centroid of the clipped region.
fn clipped_weighted_area(
    structure: &FinslerStructure,
    mesh: &Mesh,
    t: usize,
    d: [f64; 3],
    level: f64,
) -> f64 {
    // guard against unreachable corners: enormous but finite values keep the
    // clipping formulas well defined
    let cap = 1e9 * (level.abs() + 1.0);
    let d = [d[0].min(cap), d[1].min(cap), d[2].min(cap)];
    let tri = mesh.triangle(t);
    let p: Vec<Point> = tri.iter().map(|&i| mesh.node(i as usize)).collect();
    let inside: Vec<usize> = (0..3).filter(|&i| d[i] < level).collect();
    let area = mesh.area(t);
    match inside.len() {
        0 => 0.0,
        3 => area * structure.measure_weight(&mesh.centroid(t)),
        1 => {
            let a = inside[0];
            let (b, c) = ((a + 1) % 3, (a + 2) % 3);
            let sb = (level - d[a]) / (d[b] - d[a]);
            let sc = (level - d[a]) / (d[c] - d[a]);
            let yb = p[a].offset(p[b].displacement_from(p[a]) * sb);
            let yc = p[a].offset(p[c].displacement_from(p[a]) * sc);
            let sub_area = sb * sc * area;
            let centroid = Point::xy(
                (p[a].get(0) + yb.get(0) + yc.get(0)) / 3.0,
                (p[a].get(1) + yb.get(1) + yc.get(1)) / 3.0,
            );
            sub_area * structure.measure_weight(&centroid)
        }
        2 => {
            // clip away the single outside corner
            let c = (0..3).find(|i| !inside.contains(i)).expect("one outside");
            let (a, b) = ((c + 1) % 3, (c + 2) % 3);
            let ua = (d[c] - level) / (d[c] - d[a]);
            let ub = (d[c] - level) / (d[c] - d[b]);
            let ya = p[c].offset(p[a].displacement_from(p[c]) * ua);
            let yb = p[c].offset(p[b].displacement_from(p[c]) * ub);
            let out_area = ua * ub * area;
            let out_centroid = Point::xy(
                (p[c].get(0) + ya.get(0) + yb.get(0)) / 3.0,
                (p[c].get(1) + ya.get(1) + yb.get(1)) / 3.0,
            );
            let full = area * structure.measure_weight(&mesh.centroid(t));
            let removed = out_area * structure.measure_weight(&out_centroid);
            (full - removed).max(0.0)
        }
        _ => unreachable!(),
    }
}

/// Cut the forward ball of radius `R` about `p` out of the meshed region and
/// integrate the measure over it.
pub fn forward_ball(
    structure: &FinslerStructure,
    p: Point,
    radius: f64,
    mesh: &MeshRef,
) -> Result<Ball, GeomError> {
    if !(radius > 0.0) {
        return Err(GeomError::InvalidParameter(
            "ball radius must be positive".into(),
        ));
    }
    let distances = distance_field(structure, mesh, p)?;
    let node_inside: Vec<bool> = distances.values().iter().map(|&d| d < radius).collect();
    let truncated = mesh
        .boundary_nodes()
        .any(|i| node_inside[i]);
    let mut volume = 0.0;
    for t in 0..mesh.tri_count() {
        let tri = mesh.triangle(t);
        let d = [
            distances.value(tri[0] as usize),
            distances.value(tri[1] as usize),
            distances.value(tri[2] as usize),
        ];
        volume += clipped_weighted_area(structure, mesh, t, d, radius);
    }
    Ok(Ball {
        center: p,
        radius,
        node_inside,
        volume,
        truncated,
        distances,
    })
}

// ---------------------------------------------------------------------------
// Comparison function and curvature
// ---------------------------------------------------------------------------

/// Comparison profile `s_{K,N}` for curvature lower bound `-K`:
/// `sqrt((N-1)/K) sinh(sqrt(K/(N-1)) t)` for `K > 0`, and `t` at `K = 0`.
pub fn s_comparison(k: f64, n: f64, t: f64) -> Result<f64, GeomError> {
    if k < 0.0 {
        return Err(GeomError::InvalidParameter(
            "comparison profile expects K >= 0 (lower bound Ric >= -K)".into(),
        ));
    }
    if t < 0.0 {
        return Err(GeomError::InvalidParameter(
            "comparison profile expects t >= 0".into(),
        ));
    }
    if k == 0.0 {
        return Ok(t);
    }
    if !(n > 1.0) || !n.is_finite() {
        return Err(GeomError::InvalidParameter(
            "comparison profile with K > 0 needs finite N > 1".into(),
        ));
    }
    let a = (k / (n - 1.0)).sqrt();
    Ok((a * t).sinh() / a)
}

/// How flag curvatures are obtained.
#[derive(Debug, Clone, Copy)]
pub enum CurvatureMethod {
    /// Use the stored constant flag curvature of the structure (available
    /// for locally Minkowski structures and the sphere patch).
    Analytic,
    /// Difference nearby geodesics to read curvature off Jacobi-field
    /// growth: `|J(t)| = t - K t^3/6 + O(t^5)` for unit transverse data.
    JacobiFd {
        /// Largest geodesic parameter used in the stencil.
        t_max: f64,
        /// Fiber perturbation size.
        step: f64,
    },
}

impl CurvatureMethod {
    pub fn jacobi_default() -> Self {
        CurvatureMethod::JacobiFd {
            t_max: 0.4,
            step: JACOBI_FD_STEP,
        }
    }

    fn tag(&self) -> &'static str {
        match self {
            CurvatureMethod::Analytic => "analytic",
            CurvatureMethod::JacobiFd { .. } => "jacobi-fd",
        }
    }
}

/// Curvature data at a base flagpole `(x, V)`.
#[derive(Debug, Clone)]
pub struct CurvatureReport {
    pub base_point: Point,
    pub base_vector: Vector,
    /// Ricci curvature `Ric(V)`, scaled to the input vector.
    pub ric: f64,
    /// Flag curvatures `K(V; e_i)` over a transverse orthonormal frame
    /// (unit flagpole).
    pub flag_samples: Vec<f64>,
    pub method: &'static str,
    /// `(N, Ric_N(V))` pairs; populated by `weighted_ricci`. The value
    /// `-inf` marks the `N = n` branch with nonvanishing drift.
    pub ric_n: Vec<(f64, f64)>,
    /// Drift and second derivative of the measure decomposition along the
    /// geodesic through `(x, V/F(V))`, when computed.
    pub psi_prime: Option<f64>,
    pub psi_double_prime: Option<f64>,
}

/// Complete `u` (assumed `F(x,u) = 1`) to a `g_u`-orthonormal frame and
/// return the transverse vectors.
fn transverse_frame(
    structure: &FinslerStructure,
    x: &Point,
    u: &Vector,
) -> Result<Vec<Vector>, GeomError> {
    let g = structure.fundamental_tensor(x, u)?;
    let dim = structure.dim();
    let mut frame: Vec<Vector> = vec![*u];
    let mut out = Vec::new();
    for k in 0..dim {
        if out.len() == dim - 1 {
            break;
        }
        let mut cand = Vector::zeros(dim);
        cand.set(k, 1.0);
        // Gram-Schmidt against the flagpole and the transverse vectors found
        // so far, all under g_u
        for b in &frame {
            let coef = g.bilinear(&cand, b) / g.quad(b);
            cand = cand - *b * coef;
        }
        let len = g.quad(&cand);
        if len > 1e-16 {
            let e = cand * (1.0 / len.sqrt());
            frame.push(e);
            out.push(e);
        }
    }
    if out.len() != dim - 1 {
        return Err(GeomError::InvalidParameter(
            "failed to complete a transverse frame".into(),
        ));
    }
    Ok(out)
}

/// Sample a geodesic at `t_max/2` and `t_max` (plus the base point).
fn shoot_for_jacobi(
    structure: &FinslerStructure,
    x: Point,
    v: Vector,
    t_max: f64,
) -> Result<Geodesic, GeomError> {
    let opts = GeodesicOptions {
        samples: 2,
        ..GeodesicOptions::default()
    };
    let geo = shoot_geodesic(structure, x, v, t_max, &opts)?;
    if geo.truncated {
        return Err(GeomError::LeftDomain {
            t: *geo.times.last().unwrap_or(&0.0),
        });
    }
    Ok(geo)
}

/// Ricci curvature as the trace of flag curvatures over a transverse frame.
pub fn ricci(
    structure: &FinslerStructure,
    x: &Point,
    v: &Vector,
    method: CurvatureMethod,
) -> Result<CurvatureReport, GeomError> {
    let f_v = structure.norm(x, v);
    if f_v == 0.0 {
        return Err(GeomError::InvalidParameter(
            "curvature needs a nonzero flagpole".into(),
        ));
    }
    let dim = structure.dim();
    let flags = match method {
        CurvatureMethod::Analytic => {
            let k0 = structure.known_flag_curvature().ok_or_else(|| {
                GeomError::InvalidParameter(
                    "no closed-form curvature stored for this structure; use the jacobi-fd method"
                        .into(),
                )
            })?;
            vec![k0; dim - 1]
        }
        CurvatureMethod::JacobiFd { t_max, step } => {
            let u = *v * (1.0 / f_v);
            let frame = transverse_frame(structure, x, &u)?;
            let base = shoot_for_jacobi(structure, *x, u, t_max)?;
            let mut flags = Vec::with_capacity(frame.len());
            for e in &frame {
                let plus = shoot_for_jacobi(structure, *x, u + *e * step, t_max)?;
                let minus = shoot_for_jacobi(structure, *x, u - *e * step, t_max)?;
                // transverse Jacobi norm at the two positive sample times
                let mut k_of_t = [0.0_f64; 2];
                for (slot, idx) in [(0usize, 1usize), (1, 2)] {
                    let t = base.times[idx];
                    let j = plus.points[idx]
                        .displacement_from(minus.points[idx])
                        * (1.0 / (2.0 * step));
                    let vt = base.velocities[idx];
                    let ft = structure.norm(&base.points[idx], &vt);
                    let unit_t = vt * (1.0 / ft);
                    let gt = structure.fundamental_tensor(&base.points[idx], &vt)?;
                    let j_perp = j - unit_t * gt.bilinear(&j, &unit_t);
                    let norm_j = gt.quad(&j_perp).max(0.0).sqrt();
                    k_of_t[slot] = 6.0 * (t - norm_j) / (t * t * t);
                }
                // Richardson in t: k(t) = K + O(t^2)
                flags.push((4.0 * k_of_t[0] - k_of_t[1]) / 3.0);
            }
            flags
        }
    };
    let ric = f_v * f_v * flags.iter().sum::<f64>();
    Ok(CurvatureReport {
        base_point: *x,
        base_vector: *v,
        ric,
        flag_samples: flags,
        method: method.tag(),
        ric_n: Vec::new(),
        psi_prime: None,
        psi_double_prime: None,
    })
}

/// Log-density of the reference measure against the geodesic volume form:
/// `Psi = log sqrt(det g_{\dot\gamma}) - Phi`, evaluated along the geodesic.
fn measure_decomposition_psi(
    structure: &FinslerStructure,
    x: &Point,
    v: &Vector,
) -> Result<f64, GeomError> {
    let g = structure.fundamental_tensor(x, v)?;
    let det = g.g.det();
    if det <= 0.0 {
        return Err(GeomError::InvalidParameter(
            "fundamental tensor lost positivity along the geodesic".into(),
        ));
    }
    Ok(0.5 * det.ln() - structure.log_density(x))
}

/// Weighted Ricci curvature for each requested effective dimension.
///
/// The input flagpole is normalized to unit norm, the measure is decomposed
/// along the geodesic through it, and five-point stencils give the first two
/// parameter derivatives of `Psi`. `N` may be `f64::INFINITY`; `N = n`
/// returns `-inf` when the drift `Psi'(0)` does not vanish. Values scale by
/// `c^2` under `V -> cV`.
pub fn weighted_ricci(
    structure: &FinslerStructure,
    x: &Point,
    v: &Vector,
    n_list: &[f64],
    method: CurvatureMethod,
) -> Result<CurvatureReport, GeomError> {
    let c = structure.norm(x, v);
    if c == 0.0 {
        return Err(GeomError::InvalidParameter(
            "weighted curvature needs a nonzero flagpole".into(),
        ));
    }
    let dim = structure.dim() as f64;
    for &n in n_list {
        if n < dim - 1e-12 {
            return Err(GeomError::InvalidParameter(format!(
                "effective dimension N = {n} is below the chart dimension {dim}"
            )));
        }
    }
    let u = *v * (1.0 / c);
    let eps = MEASURE_FD_STEP;
    let opts = GeodesicOptions {
        samples: 2,
        ..GeodesicOptions::default()
    };
    let fwd = shoot_geodesic(structure, *x, u, 2.0 * eps, &opts)?;
    let bwd = shoot_geodesic(structure, *x, u, -2.0 * eps, &opts)?;
    if fwd.truncated || bwd.truncated {
        return Err(GeomError::LeftDomain { t: 2.0 * eps });
    }
    // stencil values at -2e, -e, 0, e, 2e
    let psi = [
        measure_decomposition_psi(structure, &bwd.points[2], &bwd.velocities[2])?,
        measure_decomposition_psi(structure, &bwd.points[1], &bwd.velocities[1])?,
        measure_decomposition_psi(structure, x, &u)?,
        measure_decomposition_psi(structure, &fwd.points[1], &fwd.velocities[1])?,
        measure_decomposition_psi(structure, &fwd.points[2], &fwd.velocities[2])?,
    ];
    let psi_p = (psi[0] - 8.0 * psi[1] + 8.0 * psi[3] - psi[4]) / (12.0 * eps);
    let psi_pp =
        (-psi[0] + 16.0 * psi[1] - 30.0 * psi[2] + 16.0 * psi[3] - psi[4]) / (12.0 * eps * eps);

    let mut base = ricci(structure, x, &u, method)?;
    let ric_unit = base.ric;
    let mut ric_n = Vec::with_capacity(n_list.len());
    for &n in n_list {
        let value = if n.is_infinite() {
            ric_unit + psi_pp
        } else if n <= dim + 1e-12 {
            if psi_p.abs() > RIC_N_EQUAL_DIM_TOL {
                f64::NEG_INFINITY
            } else {
                ric_unit + psi_pp
            }
        } else {
            ric_unit + psi_pp - psi_p * psi_p / (n - dim)
        };
        // quadratic scaling back to the input vector; -inf stays -inf
        ric_n.push((n, c * c * value));
    }
    base.base_vector = *v;
    base.ric = c * c * ric_unit;
    base.ric_n = ric_n;
    base.psi_prime = Some(psi_p);
    base.psi_double_prime = Some(psi_pp);
    Ok(base)
}

// ---------------------------------------------------------------------------
// Volume comparison
// ---------------------------------------------------------------------------

fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, intervals: usize) -> f64 {
    let n = intervals.max(2) & !1; // even
    let h = (b - a) / n as f64;
    let mut acc = f(a) + f(b);
    for k in 1..n {
        let w = if k % 2 == 1 { 4.0 } else { 2.0 };
        acc += w * f(a + k as f64 * h);
    }
    acc * h / 3.0
}

/// Ratio form of the volume comparison under `Ric_N >= -K`:
/// `m(B_{R1}) / m(B_{R2}) <= int_0^{R1} s_{K,N}^{N-1} / int_0^{R2} s_{K,N}^{N-1}`,
/// together with the coarser exponential bound `e^{2 sqrt(K) R1} (R1/R2)^N`.
pub fn bishop_gromov_check(
    structure: &FinslerStructure,
    p: Point,
    r1: f64,
    r2: f64,
    k: f64,
    n: f64,
    mesh: &MeshRef,
) -> Result<InequalityReport, GeomError> {
    if !(r1 >= r2 && r2 > 0.0) {
        return Err(GeomError::InvalidParameter(
            "volume comparison expects R1 >= R2 > 0".into(),
        ));
    }
    if !n.is_finite() || n < structure.dim() as f64 {
        return Err(GeomError::InvalidParameter(
            "volume comparison needs finite N >= chart dimension".into(),
        ));
    }
    let big = forward_ball(structure, p, r1, mesh)?;
    if big.truncated {
        return Err(GeomError::BallTruncated { radius: r1 });
    }
    let small = forward_ball(structure, p, r2, mesh)?;
    let profile = |t: f64| s_comparison(k, n, t).expect("validated args").powf(n - 1.0);
    let num = simpson(profile, 0.0, r1, 4096);
    let den = simpson(profile, 0.0, r2, 4096);
    let lhs = big.volume / small.volume;
    let rhs = num / den;
    let coarse = (2.0 * k.sqrt() * r1).exp() * (r1 / r2).powf(n);
    let tolerance = 0.02 * rhs.abs();
    Ok(
        InequalityReport::new("volume-ratio-comparison", lhs, rhs, tolerance)
            .with_param("radius_large", r1)
            .with_param("radius_small", r2)
            .with_param("curvature_bound", k)
            .with_param("effective_dim", n)
            .with_param("volume_large", big.volume)
            .with_param("volume_small", small.volume)
            .with_param("coarse_rhs", coarse),
    )
}
