//! Grid functions and the pointwise geometry of their graphs.
//!
//! A [`GraphFunction`] holds samples of a convex function on one of three
//! grids: a 1-D interval, a 2-D square box, or a radial grid `r = k h`
//! describing a rotationally symmetric function on `R^n`. All derivative
//! information comes from second-order centered differences.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{GcfError, Result};

/// Grid on which a [`GraphFunction`] is sampled.
#[derive(Clone, Debug, PartialEq)]
pub enum Domain {
    /// Nodes `lo + i h`, `i = 0..N`.
    Interval { h: f64, lo: f64, hi: f64 },
    /// Tensor grid `[lo, hi]^2`, row-major with `x` the slow index.
    Box { h: f64, lo: f64, hi: f64 },
    /// Radial nodes `r = k h`, `k = 0..N`, for rotationally symmetric data.
    Radial { h: f64, r_max: f64 },
}

impl Domain {
    pub fn spacing(&self) -> f64 {
        match *self {
            Domain::Interval { h, .. } | Domain::Box { h, .. } | Domain::Radial { h, .. } => h,
        }
    }

    fn extent(&self) -> (f64, f64) {
        match *self {
            Domain::Interval { lo, hi, .. } | Domain::Box { lo, hi, .. } => (lo, hi),
            Domain::Radial { r_max, .. } => (0.0, r_max),
        }
    }

    fn kind(&self) -> &'static str {
        match self {
            Domain::Interval { .. } => "interval",
            Domain::Box { .. } => "box",
            Domain::Radial { .. } => "radial",
        }
    }

    /// Number of nodes along one axis.
    pub fn nodes_per_axis(&self) -> Result<usize> {
        let h = self.spacing();
        let (lo, hi) = self.extent();
        if !(h > 0.0) || !h.is_finite() || !lo.is_finite() || !hi.is_finite() || hi <= lo {
            return Err(GcfError::InvalidGrid(format!(
                "spacing {h} and extent [{lo}, {hi}] do not define a grid"
            )));
        }
        let steps = ((hi - lo) / h).round();
        let end = lo + steps * h;
        if (end - hi).abs() > 1e-9 * hi.abs().max(1.0) {
            return Err(GcfError::InvalidGrid(format!(
                "extent [{lo}, {hi}] is not a multiple of the spacing {h}"
            )));
        }
        let n = steps as usize + 1;
        if n < 4 {
            return Err(GcfError::InvalidGrid(format!("{n} nodes per axis, need at least 4")));
        }
        Ok(n)
    }
}

#[derive(Serialize, Deserialize)]
struct DomainRepr {
    kind: String,
    h: f64,
    extent: [f64; 2],
}

#[derive(Serialize, Deserialize)]
struct GraphRepr {
    dim: usize,
    domain: DomainRepr,
    values: Vec<f64>,
    height_cap: Option<f64>,
}

/// Samples of a convex function on a grid, with an optional height cap.
///
/// Nodes whose value reaches the cap are treated as lying outside the
/// domain of the function (the graph has escaped to infinity there).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "GraphRepr", into = "GraphRepr")]
pub struct GraphFunction {
    dim: usize,
    domain: Domain,
    values: Vec<f64>,
    height_cap: Option<f64>,
    n_axis: usize,
}

impl TryFrom<GraphRepr> for GraphFunction {
    type Error = GcfError;
    fn try_from(r: GraphRepr) -> Result<Self> {
        let [lo, hi] = r.domain.extent;
        let h = r.domain.h;
        let domain = match r.domain.kind.as_str() {
            "interval" => Domain::Interval { h, lo, hi },
            "box" => Domain::Box { h, lo, hi },
            "radial" => {
                if lo != 0.0 {
                    return Err(GcfError::InvalidGrid("radial extent must start at 0".into()));
                }
                Domain::Radial { h, r_max: hi }
            }
            other => return Err(GcfError::InvalidGrid(format!("unknown domain kind '{other}'"))),
        };
        GraphFunction::new(r.dim, domain, r.values, r.height_cap)
    }
}

impl From<GraphFunction> for GraphRepr {
    fn from(g: GraphFunction) -> Self {
        let (lo, hi) = g.domain.extent();
        GraphRepr {
            dim: g.dim,
            domain: DomainRepr { kind: g.domain.kind().to_string(), h: g.domain.spacing(), extent: [lo, hi] },
            values: g.values,
            height_cap: g.height_cap,
        }
    }
}

/// How to treat the outermost ring of nodes when forming derivatives.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EdgePolicy {
    /// Boundary nodes have no jet.
    Interior,
    /// Ghost values continue the last three nodes with constant second difference.
    Extrapolate,
}

/// First and second derivatives at one node.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Jet {
    Line { ux: f64, uxx: f64 },
    /// `ur_over_r` is replaced by `urr` at the origin.
    Radial { r: f64, ur: f64, urr: f64, ur_over_r: f64 },
    Planar { ux: f64, uy: f64, uxx: f64, uyy: f64, uxy: f64 },
}

/// Pointwise geometric data derived from a [`Jet`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PointGeometry {
    pub gauss: f64,
    pub mean: f64,
    pub kappa_min: f64,
    pub kappa_max: f64,
    pub upsilon: f64,
    pub det_hessian: f64,
    pub hessian_min_eig: f64,
}

fn sym2_eigs(a: f64, b: f64, c: f64) -> (f64, f64) {
    // eigenvalues of [[a, b], [b, c]]
    let m = 0.5 * (a + c);
    let d = (0.25 * (a - c) * (a - c) + b * b).sqrt();
    (m - d, m + d)
}

impl Jet {
    pub fn grad_sq(&self) -> f64 {
        match *self {
            Jet::Line { ux, .. } => ux * ux,
            Jet::Radial { ur, .. } => ur * ur,
            Jet::Planar { ux, uy, .. } => ux * ux + uy * uy,
        }
    }

    /// Geometry of the graph at this node in dimension `n`.
    pub fn geometry(&self, n: usize) -> PointGeometry {
        let v2 = 1.0 + self.grad_sq();
        let ups = v2.sqrt();
        match *self {
            Jet::Line { uxx, .. } => {
                let k = uxx / (v2 * ups);
                PointGeometry {
                    gauss: k,
                    mean: k,
                    kappa_min: k,
                    kappa_max: k,
                    upsilon: ups,
                    det_hessian: uxx,
                    hessian_min_eig: uxx,
                }
            }
            Jet::Radial { urr, ur_over_r, .. } => {
                let kr = urr / (v2 * ups);
                if n == 1 {
                    return PointGeometry {
                        gauss: kr,
                        mean: kr,
                        kappa_min: kr,
                        kappa_max: kr,
                        upsilon: ups,
                        det_hessian: urr,
                        hessian_min_eig: urr,
                    };
                }
                let kt = ur_over_r / ups;
                let m = (n - 1) as i32;
                let det = urr * ur_over_r.powi(m);
                PointGeometry {
                    gauss: kr * kt.powi(m),
                    mean: kr + (n - 1) as f64 * kt,
                    kappa_min: kr.min(kt),
                    kappa_max: kr.max(kt),
                    upsilon: ups,
                    det_hessian: det,
                    hessian_min_eig: urr.min(ur_over_r),
                }
            }
            Jet::Planar { ux, uy, uxx, uyy, uxy } => {
                let (g11, g22, g12) = (1.0 + ux * ux, 1.0 + uy * uy, ux * uy);
                let (h11, h22, h12) = (uxx / ups, uyy / ups, uxy / ups);
                let det_g = v2;
                let det_h = h11 * h22 - h12 * h12;
                let tr = g11 * h22 + g22 * h11 - 2.0 * g12 * h12;
                let mean = tr / det_g;
                let gauss = det_h / det_g;
                let disc = (0.25 * mean * mean - gauss).max(0.0).sqrt();
                let (e0, _) = sym2_eigs(uxx, uxy, uyy);
                PointGeometry {
                    gauss,
                    mean,
                    kappa_min: 0.5 * mean - disc,
                    kappa_max: 0.5 * mean + disc,
                    upsilon: ups,
                    det_hessian: uxx * uyy - uxy * uxy,
                    hessian_min_eig: e0,
                }
            }
        }
    }

    /// First fundamental form `g = I + Du Du^T` and second fundamental form
    /// `h = D^2u / upsilon`, in `n` dimensions.
    pub fn forms(&self, n: usize) -> (DMatrix<f64>, DMatrix<f64>) {
        let ups = (1.0 + self.grad_sq()).sqrt();
        match *self {
            Jet::Line { ux, uxx } => (
                DMatrix::from_element(1, 1, 1.0 + ux * ux),
                DMatrix::from_element(1, 1, uxx / ups),
            ),
            Jet::Radial { ur, urr, ur_over_r, .. } => {
                // frame aligned with the radial direction e_1
                let mut g = DMatrix::identity(n, n);
                let mut h = DMatrix::zeros(n, n);
                g[(0, 0)] = 1.0 + ur * ur;
                h[(0, 0)] = urr / ups;
                for i in 1..n {
                    h[(i, i)] = ur_over_r / ups;
                }
                (g, h)
            }
            Jet::Planar { ux, uy, uxx, uyy, uxy } => {
                let g = DMatrix::from_row_slice(2, 2, &[1.0 + ux * ux, ux * uy, ux * uy, 1.0 + uy * uy]);
                let h = DMatrix::from_row_slice(2, 2, &[uxx, uxy, uxy, uyy]) / ups;
                (g, h)
            }
        }
    }
}

impl GraphFunction {
    /// Build a graph function, validating the grid. Values above the cap are clamped to it.
    pub fn new(dim: usize, domain: Domain, mut values: Vec<f64>, height_cap: Option<f64>) -> Result<Self> {
        let n_axis = domain.nodes_per_axis()?;
        match domain {
            Domain::Interval { .. } if dim != 1 => {
                return Err(GcfError::InvalidGrid("interval grids require dim = 1".into()))
            }
            Domain::Box { .. } if dim != 2 => return Err(GcfError::InvalidGrid("box grids require dim = 2".into())),
            _ if dim == 0 => return Err(GcfError::InvalidGrid("dim must be positive".into())),
            _ => {}
        }
        let expected = match domain {
            Domain::Box { .. } => n_axis * n_axis,
            _ => n_axis,
        };
        if values.len() != expected {
            return Err(GcfError::InvalidGrid(format!("expected {expected} values, got {}", values.len())));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(GcfError::InvalidGrid(format!("non-finite value at node {i}")));
        }
        if let Some(cap) = height_cap {
            if !cap.is_finite() {
                return Err(GcfError::InvalidGrid("height cap must be finite".into()));
            }
            for v in values.iter_mut() {
                if *v > cap {
                    *v = cap;
                }
            }
        }
        Ok(GraphFunction { dim, domain, values, height_cap, n_axis })
    }

    /// Sample `f` at every node. For radial grids `f` receives `(r, 0, ..)`.
    pub fn from_fn(dim: usize, domain: Domain, height_cap: Option<f64>, f: impl Fn(&[f64]) -> f64) -> Result<Self> {
        let n_axis = domain.nodes_per_axis()?;
        let len = if matches!(domain, Domain::Box { .. }) { n_axis * n_axis } else { n_axis };
        let probe = GraphFunction { dim, domain: domain.clone(), values: vec![0.0; len], height_cap, n_axis };
        let mut values = Vec::with_capacity(len);
        for i in 0..len {
            let v = f(&probe.point(i));
            values.push(match height_cap {
                Some(c) if !(v < c) => c,
                _ => v,
            });
        }
        GraphFunction::new(dim, domain, values, height_cap)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }
    pub fn domain(&self) -> &Domain {
        &self.domain
    }
    pub fn spacing(&self) -> f64 {
        self.domain.spacing()
    }
    pub fn values(&self) -> &[f64] {
        &self.values
    }
    pub fn height_cap(&self) -> Option<f64> {
        self.height_cap
    }
    pub fn nodes_per_axis(&self) -> usize {
        self.n_axis
    }
    pub fn len(&self) -> usize {
        self.values.len()
    }
    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Replace the values, keeping the grid. Values above the cap are clamped.
    pub fn with_values(&self, values: Vec<f64>) -> Result<Self> {
        GraphFunction::new(self.dim, self.domain.clone(), values, self.height_cap)
    }

    pub(crate) fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    /// Whether the node has reached the height cap.
    pub fn is_capped(&self, idx: usize) -> bool {
        matches!(self.height_cap, Some(c) if self.values[idx] >= c)
    }

    /// Grid coordinates `(i, j)` of a box node.
    fn ij(&self, idx: usize) -> (usize, usize) {
        (idx / self.n_axis, idx % self.n_axis)
    }

    /// Position of a node in `R^dim`; radial nodes sit on the first axis.
    pub fn point(&self, idx: usize) -> Vec<f64> {
        match self.domain {
            Domain::Interval { h, lo, .. } => vec![lo + idx as f64 * h],
            Domain::Box { h, lo, .. } => {
                let (i, j) = self.ij(idx);
                vec![lo + i as f64 * h, lo + j as f64 * h]
            }
            Domain::Radial { h, .. } => {
                let mut p = vec![0.0; self.dim];
                p[0] = idx as f64 * h;
                p
            }
        }
    }

    /// Grid-plane coordinates used in tabular output (`x` or `x, y`).
    pub fn table_coords(&self, idx: usize) -> Vec<f64> {
        match self.domain {
            Domain::Radial { h, .. } => vec![idx as f64 * h],
            _ => self.point(idx),
        }
    }

    /// Euclidean norm of the node position.
    pub fn radius(&self, idx: usize) -> f64 {
        match self.domain {
            Domain::Interval { h, lo, .. } => (lo + idx as f64 * h).abs(),
            Domain::Radial { h, .. } => idx as f64 * h,
            Domain::Box { .. } => self.point(idx).iter().map(|x| x * x).sum::<f64>().sqrt(),
        }
    }

    /// True for the outermost ring of nodes (the origin of a radial grid is interior).
    pub fn is_boundary(&self, idx: usize) -> bool {
        let n = self.n_axis;
        match self.domain {
            Domain::Interval { .. } => idx == 0 || idx == n - 1,
            Domain::Radial { .. } => idx == n - 1,
            Domain::Box { .. } => {
                let (i, j) = self.ij(idx);
                i == 0 || j == 0 || i == n - 1 || j == n - 1
            }
        }
    }

    /// Indices of grid neighbours (radial origin has a single neighbour).
    pub fn neighbours(&self, idx: usize) -> Vec<usize> {
        let n = self.n_axis;
        let mut out = Vec::with_capacity(4);
        match self.domain {
            Domain::Interval { .. } | Domain::Radial { .. } => {
                if idx > 0 {
                    out.push(idx - 1);
                }
                if idx + 1 < n {
                    out.push(idx + 1);
                }
            }
            Domain::Box { .. } => {
                let (i, j) = self.ij(idx);
                if i > 0 {
                    out.push(idx - n);
                }
                if i + 1 < n {
                    out.push(idx + n);
                }
                if j > 0 {
                    out.push(idx - 1);
                }
                if j + 1 < n {
                    out.push(idx + 1);
                }
            }
        }
        out
    }

    fn line_value(v: &[f64], k: isize, n: usize) -> f64 {
        // constant-second-difference continuation past either end
        if k < 0 {
            let k = (-k) as usize;
            let (a, b, c) = (v[0], v[1], v[2]);
            // repeated application of u_{-1} = 3u_0 - 3u_1 + u_2
            let mut w = [c, b, a];
            for _ in 0..k {
                let next = 3.0 * w[2] - 3.0 * w[1] + w[0];
                w = [w[1], w[2], next];
            }
            w[2]
        } else if k as usize >= n {
            let extra = k as usize - (n - 1);
            let mut w = [v[n - 3], v[n - 2], v[n - 1]];
            for _ in 0..extra {
                let next = 3.0 * w[2] - 3.0 * w[1] + w[0];
                w = [w[1], w[2], next];
            }
            w[2]
        } else {
            v[k as usize]
        }
    }

    fn box_value(&self, i: isize, j: isize) -> f64 {
        let n = self.n_axis;
        let inside = |k: isize| k >= 0 && (k as usize) < n;
        if inside(i) && inside(j) {
            return self.values[i as usize * n + j as usize];
        }
        if !inside(i) {
            let col: Vec<f64> = (0..n as isize).map(|ii| self.box_value(ii, j)).collect();
            return Self::line_value(&col, i, n);
        }
        let row = &self.values[i as usize * n..(i as usize + 1) * n];
        Self::line_value(row, j, n)
    }

    /// Jet at a node whose outer neighbour is capped, from the local model
    /// `u = a - sqrt(2 rho d)` (a curve turning vertical at the capped node,
    /// `d` the distance to it) fitted through the node and its inner
    /// neighbour. Exact for circles tangent to the wall. `None` when the node
    /// has no such neighbour or the data do not rise towards it.
    pub fn wall_jet(&self, idx: usize) -> Option<Jet> {
        if self.is_capped(idx) {
            return None;
        }
        let n = self.values.len();
        let h = self.spacing();
        let c = std::f64::consts::SQRT_2 - 1.0;
        match self.domain {
            Domain::Interval { .. } => {
                let right = idx + 1 < n && self.is_capped(idx + 1);
                let left = idx > 0 && self.is_capped(idx - 1);
                if right == left {
                    return None;
                }
                let inner = if right { idx.checked_sub(1)? } else { idx + 1 };
                if inner >= n || self.is_capped(inner) {
                    return None;
                }
                let du = self.values[idx] - self.values[inner];
                if !(du > 0.0) {
                    return None;
                }
                let m = du / (2.0 * h * c);
                Some(Jet::Line { ux: if right { m } else { -m }, uxx: du / (4.0 * h * h * c) })
            }
            Domain::Radial { .. } => {
                if idx == 0 || idx + 1 >= n || !self.is_capped(idx + 1) || self.is_capped(idx - 1) {
                    return None;
                }
                let du = self.values[idx] - self.values[idx - 1];
                if !(du > 0.0) {
                    return None;
                }
                let m = du / (2.0 * h * c);
                let r = idx as f64 * h;
                Some(Jet::Radial { r, ur: m, urr: du / (4.0 * h * h * c), ur_over_r: m / r })
            }
            Domain::Box { .. } => None,
        }
    }

    /// Derivative jet at a node; `None` at boundary nodes under [`EdgePolicy::Interior`].
    pub fn jet(&self, idx: usize, policy: EdgePolicy) -> Option<Jet> {
        if policy == EdgePolicy::Interior && self.is_boundary(idx) {
            return None;
        }
        let h = self.spacing();
        let n = self.n_axis;
        let v = &self.values;
        match self.domain {
            Domain::Interval { .. } => {
                let k = idx as isize;
                let um = Self::line_value(v, k - 1, n);
                let up = Self::line_value(v, k + 1, n);
                Some(Jet::Line { ux: (up - um) / (2.0 * h), uxx: (up - 2.0 * v[idx] + um) / (h * h) })
            }
            Domain::Radial { .. } => {
                if idx == 0 {
                    let urr = 2.0 * (v[1] - v[0]) / (h * h);
                    return Some(Jet::Radial { r: 0.0, ur: 0.0, urr, ur_over_r: urr });
                }
                let k = idx as isize;
                let um = v[idx - 1];
                let up = Self::line_value(v, k + 1, n);
                let r = idx as f64 * h;
                let ur = (up - um) / (2.0 * h);
                Some(Jet::Radial { r, ur, urr: (up - 2.0 * v[idx] + um) / (h * h), ur_over_r: ur / r })
            }
            Domain::Box { .. } => {
                let (i, j) = self.ij(idx);
                let (i, j) = (i as isize, j as isize);
                let f = |a: isize, b: isize| self.box_value(a, b);
                let c = f(i, j);
                let ux = (f(i + 1, j) - f(i - 1, j)) / (2.0 * h);
                let uy = (f(i, j + 1) - f(i, j - 1)) / (2.0 * h);
                let uxx = (f(i + 1, j) - 2.0 * c + f(i - 1, j)) / (h * h);
                let uyy = (f(i, j + 1) - 2.0 * c + f(i, j - 1)) / (h * h);
                let uxy = (f(i + 1, j + 1) - f(i + 1, j - 1) - f(i - 1, j + 1) + f(i - 1, j - 1)) / (4.0 * h * h);
                Some(Jet::Planar { ux, uy, uxx, uyy, uxy })
            }
        }
    }

    /// Default convexity tolerance `1e-8 * max|u| / h^2`.
    pub fn default_convexity_tol(&self) -> f64 {
        let m = self.values.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        let h = self.spacing();
        1e-8 * m / (h * h)
    }

    /// Maximum sampled height over nodes that have not reached the cap.
    pub fn max_finite_height(&self) -> f64 {
        (0..self.len()).filter(|&i| !self.is_capped(i)).map(|i| self.values[i]).fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Per-point geometric quantities of a discrete graph.
///
/// Boundary nodes and capped nodes are marked unavailable and carry `NaN`.
#[derive(Clone, Debug)]
pub struct GeomQuantities {
    pub dim: usize,
    pub available: Vec<bool>,
    pub gauss_curvature: Vec<f64>,
    pub mean_curvature: Vec<f64>,
    pub lambda_min: Vec<f64>,
    pub upsilon: Vec<f64>,
    /// Discrete Hessian positive definite.
    pub strictly_convex: Vec<bool>,
    pub metric: Vec<DMatrix<f64>>,
    pub second_form: Vec<DMatrix<f64>>,
    /// Inverse of the second fundamental form, `None` where it is singular.
    pub inverse_second_form: Vec<Option<DMatrix<f64>>>,
}

/// Geometry of the graph with the default convexity tolerance.
pub fn compute_quantities(u: &GraphFunction) -> Result<GeomQuantities> {
    compute_quantities_with_tol(u, u.default_convexity_tol())
}

/// Geometry of the graph, rejecting Hessian eigenvalues below `-tol`.
pub fn compute_quantities_with_tol(u: &GraphFunction, tol: f64) -> Result<GeomQuantities> {
    let n = u.dim();
    let len = u.len();
    let nan = DMatrix::from_element(n, n, f64::NAN);
    let mut q = GeomQuantities {
        dim: n,
        available: vec![false; len],
        gauss_curvature: vec![f64::NAN; len],
        mean_curvature: vec![f64::NAN; len],
        lambda_min: vec![f64::NAN; len],
        upsilon: vec![f64::NAN; len],
        strictly_convex: vec![false; len],
        metric: vec![nan.clone(); len],
        second_form: vec![nan; len],
        inverse_second_form: vec![None; len],
    };
    for idx in 0..len {
        if u.is_capped(idx) {
            continue;
        }
        let Some(jet) = u.jet(idx, EdgePolicy::Interior) else { continue };
        let pg = jet.geometry(n);
        if pg.hessian_min_eig < -tol {
            return Err(GcfError::NonConvex {
                location: format!("{:?}", u.point(idx)),
                min_eig: pg.hessian_min_eig,
                tol,
            });
        }
        let (g, h) = jet.forms(n);
        q.available[idx] = true;
        q.gauss_curvature[idx] = pg.gauss;
        q.mean_curvature[idx] = pg.mean;
        q.lambda_min[idx] = pg.kappa_min;
        q.upsilon[idx] = pg.upsilon;
        q.strictly_convex[idx] = pg.hessian_min_eig > 0.0;
        q.inverse_second_form[idx] = if pg.hessian_min_eig > 0.0 { h.clone().try_inverse() } else { None };
        q.metric[idx] = g;
        q.second_form[idx] = h;
    }
    Ok(q)
}

/// `upsilon = sqrt(1 + |Du|^2)` at every node; one-sided second-order
/// differences at the boundary, `NaN` at capped nodes.
pub fn gradient_function(u: &GraphFunction) -> Vec<f64> {
    let h = u.spacing();
    let n = u.nodes_per_axis();
    let v = u.values();
    let d1 = |line: &dyn Fn(usize) -> f64, k: usize| -> f64 {
        if k == 0 {
            (-3.0 * line(0) + 4.0 * line(1) - line(2)) / (2.0 * h)
        } else if k == n - 1 {
            (3.0 * line(n - 1) - 4.0 * line(n - 2) + line(n - 3)) / (2.0 * h)
        } else {
            (line(k + 1) - line(k - 1)) / (2.0 * h)
        }
    };
    (0..u.len())
        .map(|idx| {
            if u.is_capped(idx) {
                return f64::NAN;
            }
            let g2 = match u.domain() {
                Domain::Interval { .. } => d1(&|k| v[k], idx).powi(2),
                Domain::Radial { .. } => {
                    if idx == 0 {
                        0.0
                    } else {
                        d1(&|k| v[k], idx).powi(2)
                    }
                }
                Domain::Box { .. } => {
                    let (i, j) = (idx / n, idx % n);
                    let gx = d1(&|k| v[k * n + j], i);
                    let gy = d1(&|k| v[i * n + k], j);
                    gx * gx + gy * gy
                }
            };
            (1.0 + g2).sqrt()
        })
        .collect()
}

/// Region of `R^n` over which a quantity is examined.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Region {
    Ball { center: Vec<f64>, radius: f64 },
    Box { lo: Vec<f64>, hi: Vec<f64> },
}

impl Region {
    /// Whether the node meets the region. For radial grids a node stands for
    /// the whole sphere `|x| = r`.
    pub fn meets(&self, u: &GraphFunction, idx: usize) -> bool {
        let radial = matches!(u.domain(), Domain::Radial { .. });
        match self {
            Region::Ball { center, radius } => {
                if radial {
                    let c = center.iter().map(|x| x * x).sum::<f64>().sqrt();
                    (c - u.radius(idx)).abs() <= *radius
                } else {
                    let p = u.point(idx);
                    p.iter().zip(center).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt() <= *radius
                }
            }
            Region::Box { lo, hi } => {
                if radial {
                    let r = u.radius(idx);
                    let dmin = lo
                        .iter()
                        .zip(hi)
                        .map(|(&a, &b)| if a > 0.0 { a } else if b < 0.0 { -b } else { 0.0 })
                        .map(|d| d * d)
                        .sum::<f64>()
                        .sqrt();
                    let dmax = lo.iter().zip(hi).map(|(a, b)| a.abs().max(b.abs()).powi(2)).sum::<f64>().sqrt();
                    dmin <= r && r <= dmax
                } else {
                    let p = u.point(idx);
                    p.iter().zip(lo.iter().zip(hi)).all(|(x, (a, b))| *a <= *x && *x <= *b)
                }
            }
        }
    }
}

/// Minimum of the smallest principal curvature over a region.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConvexityReport {
    pub min_lambda: f64,
    pub argmin: Vec<f64>,
    pub uniformly_convex: bool,
}

/// Smallest principal curvature over the available nodes in `region`.
pub fn local_uniform_convexity(u: &GraphFunction, region: &Region) -> Result<ConvexityReport> {
    let q = compute_quantities(u)?;
    let mut best: Option<(f64, usize)> = None;
    for idx in 0..u.len() {
        if !q.available[idx] || !region.meets(u, idx) {
            continue;
        }
        let l = q.lambda_min[idx];
        if best.is_none_or(|(b, _)| l < b) {
            best = Some((l, idx));
        }
    }
    let (min_lambda, idx) = best.ok_or(GcfError::EmptyRegion)?;
    Ok(ConvexityReport { min_lambda, argmin: u.point(idx), uniformly_convex: min_lambda > 0.0 })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn paraboloid_radial(n: usize, h: f64, r_max: f64) -> GraphFunction {
        GraphFunction::from_fn(n, Domain::Radial { h, r_max }, None, |p| 0.5 * p[0] * p[0]).unwrap()
    }

    #[test]
    fn paraboloid_lambda_at_unit_radius() {
        let u = paraboloid_radial(2, 0.01, 2.0);
        let q = compute_quantities(&u).unwrap();
        // |x| = 1: kappa_r = 2^{-3/2}, kappa_theta = 2^{-1/2}
        assert_relative_eq!(q.lambda_min[100], 2f64.powf(-1.5), max_relative = 1e-10);
        assert_relative_eq!(q.upsilon[100], 2f64.sqrt(), max_relative = 1e-10);
        assert_relative_eq!(q.gauss_curvature[100], 0.25, max_relative = 1e-10);
    }

    #[test]
    fn paraboloid_ball_minimum() {
        let u = paraboloid_radial(2, 0.01, 2.0);
        let rep = local_uniform_convexity(&u, &Region::Ball { center: vec![0.0, 0.0], radius: 1.0 }).unwrap();
        assert_relative_eq!(rep.min_lambda, 2f64.powf(-1.5), max_relative = 1e-9);
        assert_relative_eq!(rep.argmin[0], 1.0, epsilon = 1e-12);
        assert!(rep.uniformly_convex);
    }

    #[test]
    fn hemisphere_upsilon() {
        let u = GraphFunction::from_fn(2, Domain::Radial { h: 0.001, r_max: 0.9 }, None, |p| {
            -(1.0 - p[0] * p[0]).sqrt()
        })
        .unwrap();
        let ups = gradient_function(&u);
        assert_relative_eq!(ups[600], 1.25, max_relative = 1e-6);
        let q = compute_quantities(&u).unwrap();
        assert_relative_eq!(q.gauss_curvature[600], 1.0, max_relative = 1e-5);
    }

    #[test]
    fn tilted_line_gradient_function() {
        let u = GraphFunction::from_fn(1, Domain::Interval { h: 0.1, lo: -1.0, hi: 1.0 }, None, |p| p[0]).unwrap();
        for v in gradient_function(&u) {
            assert_relative_eq!(v, 2f64.sqrt(), max_relative = 1e-12);
        }
    }

    #[test]
    fn flat_graph_is_degenerate() {
        let u = GraphFunction::from_fn(2, Domain::Box { h: 0.1, lo: -1.0, hi: 1.0 }, None, |_| 0.0).unwrap();
        let q = compute_quantities(&u).unwrap();
        let idx = 10 * 21 + 10;
        assert!(q.available[idx]);
        assert_eq!(q.gauss_curvature[idx], 0.0);
        assert!(!q.strictly_convex[idx]);
        assert!(q.inverse_second_form[idx].is_none());
    }

    #[test]
    fn concave_graph_rejected() {
        let u = GraphFunction::from_fn(1, Domain::Interval { h: 0.1, lo: -1.0, hi: 1.0 }, None, |p| -p[0] * p[0])
            .unwrap();
        assert!(matches!(compute_quantities(&u), Err(GcfError::NonConvex { .. })));
    }

    #[test]
    fn box_paraboloid_forms() {
        let u = GraphFunction::from_fn(2, Domain::Box { h: 0.05, lo: -1.0, hi: 1.0 }, None, |p| {
            0.5 * (p[0] * p[0] + 2.0 * p[1] * p[1])
        })
        .unwrap();
        let q = compute_quantities(&u).unwrap();
        let n = u.nodes_per_axis();
        let idx = 30 * n + 25; // (0.5, 0.25)
        let p = u.point(idx);
        let (ux, uy) = (p[0], 2.0 * p[1]);
        let ups2: f64 = 1.0 + ux * ux + uy * uy;
        assert_relative_eq!(q.gauss_curvature[idx], 2.0 / (ups2 * ups2), max_relative = 1e-9);
        let b = q.inverse_second_form[idx].as_ref().unwrap();
        let prod = b * &q.second_form[idx];
        assert!((prod - DMatrix::<f64>::identity(2, 2)).abs().max() < 1e-12);
    }

    #[test]
    fn extrapolated_edge_keeps_constant_hessian() {
        let u = GraphFunction::from_fn(2, Domain::Box { h: 0.1, lo: -1.0, hi: 1.0 }, None, |p| {
            p[0] * p[0] + p[0] * p[1] + 3.0 * p[1] * p[1]
        })
        .unwrap();
        let corner = u.len() - 1;
        match u.jet(corner, EdgePolicy::Extrapolate).unwrap() {
            Jet::Planar { ux, uy, uxx, uyy, uxy } => {
                assert_relative_eq!(uxx, 2.0, epsilon = 1e-9);
                assert_relative_eq!(uyy, 6.0, epsilon = 1e-9);
                assert_relative_eq!(uxy, 1.0, epsilon = 1e-9);
                assert_relative_eq!(ux, 3.0, epsilon = 1e-9);
                assert_relative_eq!(uy, 7.0, epsilon = 1e-9);
            }
            _ => unreachable!(),
        }
        assert!(u.jet(corner, EdgePolicy::Interior).is_none());
    }

    #[test]
    fn json_roundtrip_is_exact() {
        let u = paraboloid_radial(3, 0.013, 1.3);
        let s = serde_json::to_string(&u).unwrap();
        let back: GraphFunction = serde_json::from_str(&s).unwrap();
        assert_eq!(u, back);
        assert!(s.contains("\"kind\":\"radial\""));
    }

    #[test]
    fn bad_grid_rejected() {
        let e = GraphFunction::new(1, Domain::Interval { h: 0.3, lo: 0.0, hi: 1.0 }, vec![0.0; 4], None);
        assert!(matches!(e, Err(GcfError::InvalidGrid(_))));
        let e = GraphFunction::new(2, Domain::Interval { h: 0.25, lo: 0.0, hi: 1.0 }, vec![0.0; 5], None);
        assert!(e.is_err());
    }

    #[test]
    fn cap_marks_nodes_outside() {
        let u = GraphFunction::from_fn(1, Domain::Interval { h: 0.25, lo: -1.0, hi: 1.0 }, Some(0.5), |p| {
            p[0] * p[0]
        })
        .unwrap();
        assert!(u.is_capped(0) && u.is_capped(1));
        assert!(!u.is_capped(2));
        let q = compute_quantities(&u).unwrap();
        assert!(!q.available[1]);
        assert!(q.available[2]);
    }
}
