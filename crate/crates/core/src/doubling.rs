//! Reflection doubling of planar convex graphs and the closed curve flow.
//!
//! A convex graph `u0` on an interval is cut at height `j`, reflected across
//! the line `y = j` and closed up into a convex curve. That curve is evolved by
//! `kappa^alpha` through its support function
//! `S_t = -(S'' + S)^(-alpha)`, and the lower half is read back as a graph
//! `u^j`. As `j` grows the `u^j` decrease towards the graph flow of `u0`.

use std::collections::VecDeque;
use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{GcfError, Result};
use crate::geometry::{compute_quantities, Domain, GraphFunction};
use crate::solver::{self, FlowParams, FlowTrace, WallModel};

const BLOWUP_CURVATURE: f64 = 1e12;

/// Support function `S(theta_k) = max <(cos, sin), Y - origin>` sampled at
/// `K` equally spaced angles.
///
/// A parallel radius is tracked separately from the samples so that adding
/// and removing a ball (envelope, erosion) is exact.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(into = "SupportRepr", try_from = "SupportRepr")]
pub struct SupportFunction {
    samples: Vec<f64>,
    origin: [f64; 2],
    parallel: f64,
}

#[derive(Serialize, Deserialize)]
struct SupportRepr {
    #[serde(rename = "K")]
    k: usize,
    origin: [f64; 2],
    samples: Vec<f64>,
}

impl From<SupportFunction> for SupportRepr {
    fn from(s: SupportFunction) -> Self {
        SupportRepr { k: s.k(), origin: s.origin, samples: s.values() }
    }
}

impl TryFrom<SupportRepr> for SupportFunction {
    type Error = GcfError;
    fn try_from(r: SupportRepr) -> Result<Self> {
        if r.k != r.samples.len() {
            return Err(GcfError::Serialization(format!("K = {} but {} samples", r.k, r.samples.len())));
        }
        SupportFunction::new(r.samples, r.origin)
    }
}

impl SupportFunction {
    pub fn new(samples: Vec<f64>, origin: [f64; 2]) -> Result<Self> {
        if samples.len() < 8 {
            return Err(GcfError::InvalidParameter(format!("need at least 8 angles, got {}", samples.len())));
        }
        if samples.iter().chain(origin.iter()).any(|v| !v.is_finite()) {
            return Err(GcfError::InvalidParameter("support samples must be finite".into()));
        }
        Ok(SupportFunction { samples, origin, parallel: 0.0 })
    }

    /// Circle of radius `r` centred at `origin`.
    pub fn circle(k: usize, r: f64, origin: [f64; 2]) -> Result<Self> {
        Self::new(vec![r; k], origin)
    }

    pub fn k(&self) -> usize {
        self.samples.len()
    }

    pub fn origin(&self) -> [f64; 2] {
        self.origin
    }

    pub fn d_theta(&self) -> f64 {
        2.0 * PI / self.k() as f64
    }

    pub fn angle(&self, k: usize) -> f64 {
        self.d_theta() * k as f64
    }

    /// Sample values including the parallel radius.
    pub fn values(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s + self.parallel).collect()
    }

    pub fn value(&self, k: usize) -> f64 {
        self.samples[k] + self.parallel
    }

    /// Radius of the ball added on top of the stored samples.
    pub fn parallel_radius(&self) -> f64 {
        self.parallel
    }

    /// Discrete `S'' + S`. The stencil
    /// `(S[k+1] + S[k-1] - 2 cos(d) S[k]) / (2 (1 - cos d))` annihilates
    /// `cos` and `sin` exactly, so the result is independent of the origin
    /// and exact on circles.
    pub fn radii_of_curvature(&self) -> Vec<f64> {
        let k = self.k();
        let c = self.d_theta().cos();
        let denom = 2.0 * (1.0 - c);
        (0..k)
            .map(|i| {
                let prev = self.samples[(i + k - 1) % k];
                let next = self.samples[(i + 1) % k];
                (prev + next - 2.0 * c * self.samples[i]) / denom + self.parallel
            })
            .collect()
    }

    pub fn min_radius_of_curvature(&self) -> f64 {
        self.radii_of_curvature().into_iter().fold(f64::INFINITY, f64::min)
    }

    /// Errors with `NonConvex` unless `S'' + S > 0` everywhere.
    pub fn check_convex(&self) -> Result<()> {
        let rho = self.radii_of_curvature();
        let (i, m) = rho.iter().enumerate().fold((0, f64::INFINITY), |acc, (i, r)| if *r < acc.1 { (i, *r) } else { acc });
        if !(m > 0.0) {
            return Err(GcfError::NonConvex { location: format!("theta = {:.6}", self.angle(i)), min_eig: m, tol: 0.0 });
        }
        Ok(())
    }

    /// Same body described from another reference point.
    pub fn with_origin(&self, origin: [f64; 2]) -> SupportFunction {
        let dx = self.origin[0] - origin[0];
        let dy = self.origin[1] - origin[1];
        let samples = (0..self.k())
            .map(|i| {
                let th = self.angle(i);
                self.samples[i] + dx * th.cos() + dy * th.sin()
            })
            .collect();
        SupportFunction { samples, origin, parallel: self.parallel }
    }

    /// Averages with the reflection across the horizontal line through the origin.
    pub fn symmetrize(&mut self) {
        let k = self.k();
        for i in 1..k.div_ceil(2) {
            let m = 0.5 * (self.samples[i] + self.samples[k - i]);
            self.samples[i] = m;
            self.samples[k - i] = m;
        }
    }

    /// Largest deviation from the horizontal-line reflection symmetry.
    pub fn asymmetry(&self) -> f64 {
        let k = self.k();
        (1..k).map(|i| (self.samples[i] - self.samples[k - i]).abs()).fold(0.0, f64::max)
    }

    /// Boundary points `S v + S' v_perp + origin`, with `S'` from the
    /// centred difference divided by `sin d` (exact on `cos`/`sin`).
    pub fn boundary_points(&self) -> Vec<[f64; 2]> {
        let k = self.k();
        let sd = self.d_theta().sin();
        (0..k)
            .map(|i| {
                let th = self.angle(i);
                let (s, c) = th.sin_cos();
                let ds = (self.samples[(i + 1) % k] - self.samples[(i + k - 1) % k]) / (2.0 * sd);
                let v = self.value(i);
                [self.origin[0] + v * c - ds * s, self.origin[1] + v * s + ds * c]
            })
            .collect()
    }

    /// Perimeter of the curve, `integral of S dtheta` (independent of the origin).
    pub fn perimeter(&self) -> f64 {
        self.d_theta() * self.values().iter().sum::<f64>()
    }

    /// `max_k |S_k - r|`.
    pub fn max_deviation_from(&self, r: f64) -> f64 {
        self.values().iter().map(|v| (v - r).abs()).fold(0.0, f64::max)
    }

    /// Radius and centre of the largest disc inside the polygon of support
    /// lines whose centre lies on the horizontal line through the origin.
    pub fn inscribed_radius(&self) -> (f64, [f64; 2]) {
        let vals = self.values();
        let angles: Vec<(f64, f64)> = (0..self.k()).map(|i| self.angle(i).sin_cos()).collect();
        let depth = |x: f64| -> f64 {
            vals.iter().zip(&angles).map(|(s, (_, c))| s - x * c).fold(f64::INFINITY, f64::min)
        };
        let m = vals.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        let (mut lo, mut hi) = (-m, m);
        // depth is concave in x: golden section
        let g = 0.5 * (5f64.sqrt() - 1.0);
        for _ in 0..200 {
            let a = hi - g * (hi - lo);
            let b = lo + g * (hi - lo);
            if depth(a) < depth(b) {
                lo = a;
            } else {
                hi = b;
            }
        }
        let x = 0.5 * (lo + hi);
        (depth(x), [self.origin[0] + x, self.origin[1]])
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

/// Reflection level, angular resolution and envelope radius `1/j`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DoublingConfig {
    pub j: u32,
    pub k: usize,
    pub eta: f64,
}

impl DoublingConfig {
    pub fn new(j: u32, k: usize) -> Result<Self> {
        let cfg = DoublingConfig { j, k, eta: 1.0 / j.max(1) as f64 };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.j < 1 {
            return Err(GcfError::InvalidParameter("reflection level j must be >= 1".into()));
        }
        if self.k < 64 {
            return Err(GcfError::InvalidParameter(format!("K = {} < 64 angles", self.k)));
        }
        if !(self.eta > 0.0) {
            return Err(GcfError::InvalidParameter("eta must be positive".into()));
        }
        Ok(())
    }

    pub fn level(&self) -> f64 {
        self.j as f64
    }
}

fn interval_nodes(u: &GraphFunction) -> Result<Vec<f64>> {
    if u.dim() != 1 || !matches!(u.domain(), Domain::Interval { .. }) {
        return Err(GcfError::InvalidGrid("doubling needs a one-dimensional interval grid".into()));
    }
    Ok((0..u.len()).map(|i| u.point(i)[0]).collect())
}

/// The closed curve obtained by reflecting `{u0 <= j}` across `y = j`,
/// described by its support function about `(0, j)`.
///
/// Capped nodes count as `+inf`: a capped node next to one below level `j`
/// is a vertical wall at the capped node. Other crossings of level `j` are
/// interpolated linearly.
pub fn double_graph(u0: &GraphFunction, cfg: &DoublingConfig) -> Result<SupportFunction> {
    cfg.validate()?;
    let xs = interval_nodes(u0)?;
    compute_quantities(u0)?;
    let level = cfg.level();
    let height = |i: usize| if u0.is_capped(i) { f64::INFINITY } else { u0.values()[i] };
    let n = xs.len();
    if height(0) <= level || height(n - 1) <= level {
        return Err(GcfError::GraphBelowLevel { level, max_height: u0.max_finite_height() });
    }
    let mut pts: Vec<[f64; 2]> = Vec::new();
    for i in 0..n {
        let hi = height(i);
        if hi <= level {
            pts.push([xs[i], hi]);
            pts.push([xs[i], 2.0 * level - hi]);
        }
        if i + 1 < n {
            let hn = height(i + 1);
            if (hi <= level) != (hn <= level) {
                let (a, b, ha, hb) = if hi <= level { (i, i + 1, hi, hn) } else { (i + 1, i, hn, hi) };
                // a capped node is a vertical wall
                let x = if hb.is_finite() { xs[a] + (xs[b] - xs[a]) * (level - ha) / (hb - ha) } else { xs[b] };
                pts.push([x, level]);
            }
        }
    }
    if pts.is_empty() {
        return Err(GcfError::GraphBelowLevel { level, max_height: u0.max_finite_height() });
    }
    let origin = [0.0, level];
    let d = 2.0 * PI / cfg.k as f64;
    let samples: Vec<f64> = (0..cfg.k)
        .into_par_iter()
        .map(|i| {
            let (s, c) = (d * i as f64).sin_cos();
            pts.iter().map(|p| c * (p[0] - origin[0]) + s * (p[1] - origin[1])).fold(f64::NEG_INFINITY, f64::max)
        })
        .collect();
    let out = SupportFunction::new(samples, origin)?;
    if let Some(v) = out.values().iter().find(|v| !(**v > 0.0)) {
        return Err(GcfError::InvalidParameter(format!("origin (0, {level}) is not interior to the doubled curve (S = {v})")));
    }
    Ok(out)
}

/// Outer parallel body at distance `eta` (Minkowski sum with the `eta`-disc).
pub fn envelope(s: &SupportFunction, eta: f64) -> SupportFunction {
    let mut out = s.clone();
    out.parallel += eta;
    out
}

/// Inverse of [`envelope`]: subtracts `eta` from the support function.
pub fn erode(s: &SupportFunction, eta: f64) -> SupportFunction {
    let mut out = s.clone();
    out.parallel -= eta;
    out
}

fn line_intersection(a: (f64, f64, f64), b: (f64, f64, f64)) -> [f64; 2] {
    // a = (cos, sin, c): cos x + sin y = c
    let det = a.0 * b.1 - a.1 * b.0;
    [(a.2 * b.1 - b.2 * a.1) / det, (a.0 * b.2 - b.0 * a.2) / det]
}

/// Vertices of the polygon `{Y : <v_k, Y - origin> <= c_k}` (relative to the origin).
fn half_plane_polygon(lines: &[(f64, f64, f64)]) -> Option<Vec<[f64; 2]>> {
    let scale = lines.iter().fold(1.0f64, |a, l| a.max(l.2.abs()));
    let eps = 1e-13 * scale;
    let outside = |l: usize, p: [f64; 2]| lines[l].0 * p[0] + lines[l].1 * p[1] > lines[l].2 + eps;
    let inter = |a: usize, b: usize| line_intersection(lines[a], lines[b]);
    let mut dq: VecDeque<usize> = VecDeque::new();
    for i in 0..lines.len() {
        while dq.len() >= 2 && outside(i, inter(dq[dq.len() - 2], dq[dq.len() - 1])) {
            dq.pop_back();
        }
        while dq.len() >= 2 && outside(i, inter(dq[0], dq[1])) {
            dq.pop_front();
        }
        dq.push_back(i);
    }
    while dq.len() >= 3 && outside(dq[0], inter(dq[dq.len() - 2], dq[dq.len() - 1])) {
        dq.pop_back();
    }
    while dq.len() >= 3 && outside(dq[dq.len() - 1], inter(dq[0], dq[1])) {
        dq.pop_front();
    }
    if dq.len() < 3 {
        return None;
    }
    let m = dq.len();
    let verts: Vec<[f64; 2]> = (0..m).map(|i| inter(dq[i], dq[(i + 1) % m])).collect();
    // every active line must keep its vertex pair on the right side
    for (i, &l) in dq.iter().enumerate() {
        let p = verts[(i + m - 1) % m];
        let q = verts[i];
        let dir = (-lines[l].1, lines[l].0);
        if (q[0] - p[0]) * dir.0 + (q[1] - p[1]) * dir.1 < -eps {
            return None;
        }
    }
    Some(verts)
}

/// Opening of the body by a disc of radius `eta`: the union of all
/// `eta`-discs inside it, computed as the support function of the eroded
/// polygon plus `eta`. The result has `S'' + S >= eta`, lies inside the
/// original body, and is monotone in both the body and `eta`.
pub fn inner_smoothing(s: &SupportFunction, eta: f64) -> Result<SupportFunction> {
    if !(eta > 0.0) {
        return Err(GcfError::InvalidParameter("smoothing radius must be positive".into()));
    }
    let vals = s.values();
    let lines: Vec<(f64, f64, f64)> = (0..s.k())
        .map(|i| {
            let (sn, c) = s.angle(i).sin_cos();
            (c, sn, vals[i] - eta)
        })
        .collect();
    let verts = half_plane_polygon(&lines)
        .ok_or_else(|| GcfError::InvalidParameter(format!("body has no interior point at depth {eta}")))?;
    let samples = lines
        .par_iter()
        .map(|l| verts.iter().map(|p| l.0 * p[0] + l.1 * p[1]).fold(f64::NEG_INFINITY, f64::max) + eta)
        .collect();
    SupportFunction::new(samples, s.origin)
}

/// Largest forward-Euler step keeping the update monotone, times `cfl`:
/// `cfl (1 - cos d) / cos d * rho_min^(alpha+1) / alpha`, about
/// `cfl d^2 rho_min^(alpha+1) / (2 alpha)`.
pub fn closed_flow_dt(s: &SupportFunction, alpha: f64, cfl: f64) -> Result<f64> {
    s.check_convex()?;
    let c = s.d_theta().cos();
    let rho = s.min_radius_of_curvature();
    Ok(cfl * (1.0 - c) / c * rho.powf(alpha + 1.0) / alpha)
}

/// One forward-Euler step of `S_t = -(S'' + S)^(-alpha)`.
pub fn closed_flow_step(s: &SupportFunction, alpha: f64, dt: f64) -> Result<SupportFunction> {
    if !(alpha > 0.0) || !(dt >= 0.0) {
        return Err(GcfError::InvalidParameter(format!("need alpha > 0 and dt >= 0 (alpha = {alpha}, dt = {dt})")));
    }
    s.check_convex()?;
    let rho = s.radii_of_curvature();
    let max_k = rho.iter().fold(0.0f64, |a, r| a.max(1.0 / r));
    if max_k > BLOWUP_CURVATURE {
        return Err(GcfError::CurvatureBlowup { max_k, t: f64::NAN });
    }
    let samples = (0..s.k()).map(|i| s.value(i) - dt * rho[i].powf(-alpha)).collect();
    SupportFunction::new(samples, s.origin)
}

/// Flows several curves with a shared step (so the discrete comparison
/// principle applies between them), symmetrizing after every step.
/// Returns, for each requested time, the states of all curves.
pub fn run_closed_lockstep(
    bodies: &[SupportFunction],
    alpha: f64,
    cfl: f64,
    times: &[f64],
) -> Result<Vec<Vec<SupportFunction>>> {
    if times.windows(2).any(|w| w[1] < w[0]) || times.first().is_some_and(|t| *t < 0.0) {
        return Err(GcfError::InvalidParameter("snapshot times must be non-negative and sorted".into()));
    }
    let mut cur: Vec<SupportFunction> = bodies.to_vec();
    let mut t = 0.0;
    let mut out = Vec::with_capacity(times.len());
    let at = |e: GcfError, t: f64| match e {
        GcfError::CurvatureBlowup { max_k, .. } => GcfError::CurvatureBlowup { max_k, t },
        e => e,
    };
    for &target in times {
        while t < target {
            let dts: Vec<f64> = cur.par_iter().map(|s| closed_flow_dt(s, alpha, cfl)).collect::<Result<_>>().map_err(|e| at(e, t))?;
            let mut dt = dts.into_iter().fold(f64::INFINITY, f64::min);
            let last = t + dt >= target - 1e-12 * target.max(1.0);
            if last {
                dt = target - t;
            }
            cur = cur
                .par_iter()
                .map(|s| {
                    let mut n = closed_flow_step(s, alpha, dt)?;
                    n.symmetrize();
                    Ok(n)
                })
                .collect::<Result<_>>()
                .map_err(|e| at(e, t))?;
            t = if last { target } else { t + dt };
        }
        out.push(cur.clone());
    }
    Ok(out)
}

/// Lower half `u(x) = max over sin < 0 of  y0 + (S - (x - x0) cos) / sin`
/// of the curve, resampled on `domain`. Nodes whose lower boundary is above
/// the reflection line `y = origin.y`, or outside the curve, are capped.
pub fn lower_half_graph(s: &SupportFunction, domain: Domain, cap: f64) -> Result<GraphFunction> {
    let level = s.origin[1];
    if !(cap > level) {
        return Err(GcfError::InvalidParameter(format!("cap {cap} must exceed the reflection level {level}")));
    }
    let template = GraphFunction::from_fn(1, domain.clone(), None, |_| 0.0)?;
    let xs = interval_nodes(&template)?;
    let vals = s.values();
    let dirs: Vec<(f64, f64, f64)> = (0..s.k())
        .filter_map(|i| {
            let (sn, c) = s.angle(i).sin_cos();
            (sn < -1e-12).then_some((c, sn, vals[i]))
        })
        .collect();
    let tol = 1e-12 * level.abs().max(1.0);
    let values: Vec<f64> = xs
        .par_iter()
        .map(|&x| {
            let dx = x - s.origin[0];
            let y = dirs.iter().map(|(c, sn, v)| level + (v - dx * c) / sn).fold(f64::NEG_INFINITY, f64::max);
            if y > level + tol { cap } else { y.min(level) }
        })
        .collect();
    if values.iter().all(|v| *v >= cap) {
        return Err(GcfError::ResampleGap { x: xs[xs.len() / 2] });
    }
    GraphFunction::new(1, domain, values, Some(cap))
}

/// Settings for [`approximation_suite`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SuiteConfig {
    pub alpha: f64,
    pub j_list: Vec<u32>,
    /// Angular resolution of every closed curve.
    pub k: usize,
    /// Final time; defaults to the survival horizon `R^(alpha+1) / (alpha+1)`.
    pub t_end: Option<f64>,
    /// Number of equally spaced snapshots after `t = 0`.
    pub snapshots: usize,
    pub cfl: f64,
    /// Comparison with the direct solve skips nodes closer than this (in x)
    /// to a capped node of either graph; the wall layer is under-resolved.
    pub wall_margin: f64,
    /// Ordering tolerance.
    pub tol: f64,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        SuiteConfig {
            alpha: 1.0,
            j_list: vec![2, 4, 8, 16],
            k: 1024,
            t_end: None,
            snapshots: 5,
            cfl: 0.4,
            wall_margin: 0.05,
            tol: 1e-6,
        }
    }
}

/// Per-level summary.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LevelReport {
    pub j: u32,
    /// `max |u^j - u_direct|` over snapshots and the common region.
    pub max_deviation: f64,
    /// Same, at the final time only.
    pub final_deviation: f64,
    /// Same quantities for the outer-envelope track.
    pub envelope_max_deviation: f64,
    pub envelope_final_deviation: f64,
    /// `min (S'' + S)` at `t = 0` after smoothing, and of the envelope.
    pub min_radius_smoothed: f64,
    pub min_radius_envelope: f64,
    /// Perimeter of the flowing curve at the final time.
    pub final_perimeter: f64,
}

/// Ordering and convergence summary.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SuiteReport {
    pub alpha: f64,
    pub t_end: f64,
    pub times: Vec<f64>,
    pub inscribed_radius: f64,
    /// `R^(alpha+1) / (alpha+1)`.
    pub survival_horizon: f64,
    /// All closed flows reached `max(t_end, horizon)` without extinction.
    pub survived_horizon: bool,
    pub levels: Vec<LevelReport>,
    /// Count of nodes with `u^j - u^(j+1) < -tol` or `u^(j+1) - u0 < -tol`.
    pub monotonicity_violations: usize,
    pub min_consecutive_margin: f64,
    pub min_lower_margin: f64,
    /// The same count for the outer-envelope track.
    pub envelope_monotonicity_violations: usize,
    pub envelope_min_consecutive_margin: f64,
    pub envelope_min_lower_margin: f64,
    /// `max_deviation` is non-increasing along `j_list`.
    pub deviation_decreasing: bool,
}

impl SuiteReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Everything [`approximation_suite`] computes.
#[derive(Clone, Debug)]
pub struct SuiteOutput {
    pub report: SuiteReport,
    /// `u_j[level][snapshot]`.
    pub u_j: Vec<Vec<GraphFunction>>,
    pub envelope_u_j: Vec<Vec<GraphFunction>>,
    pub curves: Vec<Vec<SupportFunction>>,
    pub direct: FlowTrace,
}

struct Ordering {
    violations: usize,
    min_consecutive: f64,
    min_lower: f64,
}

fn finite(u: &GraphFunction, i: usize) -> f64 {
    if u.is_capped(i) { f64::INFINITY } else { u.values()[i] }
}

fn ordering(tracks: &[Vec<GraphFunction>], floor: &GraphFunction, tol: f64) -> Ordering {
    let mut o = Ordering { violations: 0, min_consecutive: f64::INFINITY, min_lower: f64::INFINITY };
    for (lvl, track) in tracks.iter().enumerate() {
        for (s, u) in track.iter().enumerate() {
            for i in 0..u.len() {
                let a = finite(u, i);
                if lvl + 1 < tracks.len() {
                    // u^(j+1) <= u^j wherever u^j is defined
                    let b = finite(&tracks[lvl + 1][s], i);
                    if a.is_finite() {
                        let m = a - b;
                        o.min_consecutive = o.min_consecutive.min(m);
                        if m < -tol {
                            o.violations += 1;
                        }
                    }
                }
                if a.is_finite() && lvl > 0 {
                    let m = a - finite(floor, i);
                    o.min_lower = o.min_lower.min(m);
                    if m < -tol {
                        o.violations += 1;
                    }
                }
            }
        }
    }
    o
}

fn deviation(u: &GraphFunction, direct: &GraphFunction, margin: f64) -> f64 {
    let walls: Vec<f64> =
        (0..u.len()).filter(|&i| u.is_capped(i) || direct.is_capped(i)).map(|i| u.point(i)[0]).collect();
    (0..u.len())
        .filter(|&i| {
            let x = u.point(i)[0];
            !direct.is_capped(i) && !u.is_capped(i) && walls.iter().all(|w| (w - x).abs() >= margin - 1e-12)
        })
        .map(|i| (u.values()[i] - direct.values()[i]).abs())
        .fold(0.0, f64::max)
}

/// Doubling, smoothing, closed flow and reconstruction for every `j`,
/// against a direct graph solve of `u0`.
///
/// The ordered family that is checked uses the inner smoothing
/// ([`inner_smoothing`] with radius `1/j`); the outer `1/j`-envelope is run
/// alongside and reported separately, since adding `1/j` outside moves the
/// lower half below `u0`. The floor for the ordering check is the lower half
/// of the doubled curve at the largest `j` at `t = 0`, i.e. `u0` at the same
/// angular resolution.
pub fn approximation_suite(u0: &GraphFunction, cfg: &SuiteConfig) -> Result<SuiteOutput> {
    if cfg.j_list.is_empty() || cfg.j_list.windows(2).any(|w| w[1] <= w[0]) {
        return Err(GcfError::InvalidParameter("j_list must be non-empty and increasing".into()));
    }
    if !(cfg.alpha > 0.0) || cfg.snapshots == 0 || !(cfg.cfl > 0.0 && cfg.cfl <= 1.0) {
        return Err(GcfError::InvalidParameter("need alpha > 0, snapshots >= 1, cfl in (0, 1]".into()));
    }
    interval_nodes(u0)?;
    let domain = u0.domain().clone();
    let raw: Vec<SupportFunction> = cfg
        .j_list
        .iter()
        .map(|&j| double_graph(u0, &DoublingConfig::new(j, cfg.k)?))
        .collect::<Result<_>>()?;
    let smoothed: Vec<SupportFunction> =
        raw.iter().zip(&cfg.j_list).map(|(s, &j)| inner_smoothing(s, 1.0 / j as f64)).collect::<Result<_>>()?;
    let enveloped: Vec<SupportFunction> = raw.iter().zip(&cfg.j_list).map(|(s, &j)| envelope(s, 1.0 / j as f64)).collect();

    let (radius, _) = raw[0].inscribed_radius();
    let horizon = radius.powf(cfg.alpha + 1.0) / (cfg.alpha + 1.0);
    let t_end = cfg.t_end.unwrap_or(horizon);
    if !(t_end > 0.0) {
        return Err(GcfError::InvalidParameter("t_end must be positive".into()));
    }
    let mut times: Vec<f64> = (0..=cfg.snapshots).map(|i| t_end * i as f64 / cfg.snapshots as f64).collect();
    let run_to = t_end.max(horizon);
    let extra = run_to > t_end;
    if extra {
        times.push(run_to);
    }

    let (curves, env_curves) = rayon::join(
        || run_closed_lockstep(&smoothed, cfg.alpha, cfg.cfl, &times),
        || run_closed_lockstep(&enveloped, cfg.alpha, cfg.cfl, &times),
    );
    let (mut curves, mut env_curves) = (curves?, env_curves?);
    let survived = curves.last().into_iter().chain(env_curves.last()).flatten().all(|s| s.perimeter() > 0.0);
    if extra {
        curves.pop();
        env_curves.pop();
        times.pop();
    }

    let cap = u0.height_cap().unwrap_or(f64::INFINITY).max(2.0 * *cfg.j_list.last().unwrap() as f64 + 1.0);
    let reconstruct = |snaps: &Vec<Vec<SupportFunction>>| -> Result<Vec<Vec<GraphFunction>>> {
        (0..cfg.j_list.len())
            .map(|l| snaps.iter().map(|row| lower_half_graph(&row[l], domain.clone(), cap)).collect())
            .collect()
    };
    let u_j = reconstruct(&curves)?;
    let envelope_u_j = reconstruct(&env_curves)?;

    let params = FlowParams::new(1, cfg.alpha, t_end).with_wall(WallModel::Tangent);
    let direct = solver::run(u0, &params, &times).into_result()?;
    let floor = lower_half_graph(raw.last().unwrap(), domain.clone(), cap)?;

    let ord = ordering(&u_j, &floor, cfg.tol);
    let env_ord = ordering(&envelope_u_j, &floor, cfg.tol);

    let levels: Vec<LevelReport> = cfg
        .j_list
        .iter()
        .enumerate()
        .map(|(l, &j)| {
            let dev = |track: &Vec<GraphFunction>| -> (f64, f64) {
                let per: Vec<f64> =
                    track.iter().zip(&direct.snapshots).map(|(u, s)| deviation(u, &s.u, cfg.wall_margin)).collect();
                (per.iter().cloned().fold(0.0, f64::max), *per.last().unwrap())
            };
            let (max_deviation, final_deviation) = dev(&u_j[l]);
            let (envelope_max_deviation, envelope_final_deviation) = dev(&envelope_u_j[l]);
            LevelReport {
                j,
                max_deviation,
                final_deviation,
                envelope_max_deviation,
                envelope_final_deviation,
                min_radius_smoothed: smoothed[l].min_radius_of_curvature(),
                min_radius_envelope: enveloped[l].min_radius_of_curvature(),
                final_perimeter: curves.last().unwrap()[l].perimeter(),
            }
        })
        .collect();
    let deviation_decreasing = levels.windows(2).all(|w| w[1].max_deviation <= w[0].max_deviation + cfg.tol);

    let report = SuiteReport {
        alpha: cfg.alpha,
        t_end,
        times,
        inscribed_radius: radius,
        survival_horizon: horizon,
        survived_horizon: survived,
        levels,
        monotonicity_violations: ord.violations,
        min_consecutive_margin: ord.min_consecutive,
        min_lower_margin: ord.min_lower,
        envelope_monotonicity_violations: env_ord.violations,
        envelope_min_consecutive_margin: env_ord.min_consecutive,
        envelope_min_lower_margin: env_ord.min_lower,
        deviation_decreasing,
    };
    Ok(SuiteOutput { report, u_j, envelope_u_j, curves, direct })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn full_arc(j: f64, h: f64) -> GraphFunction {
        // walls at the capped end nodes x = +-j
        GraphFunction::from_fn(1, Domain::Interval { h, lo: -j, hi: j }, Some(10.0 * j), |p| {
            let q = j * j - p[0] * p[0];
            if q <= 1e-12 { 10.0 * j } else { j - q.sqrt() }
        })
        .unwrap()
    }

    #[test]
    fn half_circle_doubles_to_circle() {
        let u = full_arc(3.0, 1e-3);
        let s = double_graph(&u, &DoublingConfig::new(3, 256).unwrap()).unwrap();
        assert!(s.max_deviation_from(3.0) < 1e-3, "{}", s.max_deviation_from(3.0));
    }

    #[test]
    fn level_outside_grid_is_rejected() {
        let u = GraphFunction::from_fn(1, Domain::Interval { h: 0.1, lo: -1.0, hi: 1.0 }, None, |p| p[0] * p[0]).unwrap();
        let err = double_graph(&u, &DoublingConfig::new(2, 64).unwrap());
        assert!(matches!(err, Err(GcfError::GraphBelowLevel { .. })));
    }

    #[test]
    fn doubled_parabola_extremes() {
        let j = 4u32;
        let half = 2.0;
        let u = GraphFunction::from_fn(1, Domain::Interval { h: 0.01, lo: -half - 0.5, hi: half + 0.5 }, None, |p| p[0] * p[0]).unwrap();
        let s = double_graph(&u, &DoublingConfig::new(j, 128).unwrap()).unwrap();
        assert!((s.value(32) - 4.0).abs() < 1e-12);
        assert!((s.value(96) - 4.0).abs() < 1e-12);
        for i in 1..128 {
            assert!((s.value(i) - s.value(128 - i)).abs() < 1e-12);
            let m = (64 + 128 - i) % 128;
            assert!((s.value(i) - s.value(m)).abs() < 1e-9);
        }
    }

    #[test]
    fn envelope_round_trip_is_exact() {
        let u = GraphFunction::from_fn(1, Domain::Interval { h: 0.01, lo: -3.0, hi: 3.0 }, None, |p| p[0] * p[0]).unwrap();
        let s = double_graph(&u, &DoublingConfig::new(4, 256).unwrap()).unwrap();
        let e = envelope(&s, 0.25);
        assert_eq!(erode(&e, 0.25), s);
        assert!(e.min_radius_of_curvature() >= 0.25 - 1e-9);
        let c = SupportFunction::circle(64, 1.0, [0.0, 0.0]).unwrap();
        assert!(envelope(&c, 0.5).max_deviation_from(1.5) == 0.0);
    }

    #[test]
    fn inner_smoothing_keeps_smooth_bodies() {
        let c = SupportFunction::circle(256, 1.0, [0.0, 0.0]).unwrap().with_origin([0.2, -0.1]);
        let o = inner_smoothing(&c, 0.25).unwrap();
        let d = o.values().iter().zip(c.values()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(d < 1e-12, "{d}");
    }

    #[test]
    fn inner_smoothing_rounds_corners_from_inside() {
        let u = GraphFunction::from_fn(1, Domain::Interval { h: 0.01, lo: -3.0, hi: 3.0 }, None, |p| p[0] * p[0]).unwrap();
        let s = double_graph(&u, &DoublingConfig::new(4, 512).unwrap()).unwrap();
        assert!(s.min_radius_of_curvature() < 0.1);
        let o = inner_smoothing(&s, 0.25).unwrap();
        assert!(o.min_radius_of_curvature() >= 0.25 - 1e-9);
        for (a, b) in o.values().iter().zip(s.values()) {
            assert!(*a <= b + 1e-12);
        }
    }

    #[test]
    fn circle_shrinks_at_known_rate() {
        let r0: f64 = 1.5;
        let alpha = 0.7;
        let t = 0.3;
        let s = SupportFunction::circle(128, r0, [0.0, 2.0]).unwrap();
        let out = run_closed_lockstep(&[s], alpha, 0.4, &[t]).unwrap();
        let exact = (r0.powf(alpha + 1.0) - (alpha + 1.0) * t).powf(1.0 / (alpha + 1.0));
        assert!(out[0][0].max_deviation_from(exact) < 1e-4);
    }

    #[test]
    fn lower_half_of_circle() {
        let s = SupportFunction::circle(2048, 1.0, [0.0, 2.0]).unwrap();
        let u = lower_half_graph(&s, Domain::Interval { h: 0.05, lo: -1.5, hi: 1.5 }, 50.0).unwrap();
        for i in 0..u.len() {
            let x = u.point(i)[0];
            if x.abs() < 0.99 {
                assert!((u.values()[i] - (2.0 - (1.0 - x * x).sqrt())).abs() < 1e-5);
            }
            if x.abs() > 1.0 {
                assert!(u.is_capped(i));
            }
            if !u.is_capped(i) {
                assert!(u.values()[i] <= 2.0 + 1e-8);
            }
        }
    }

    #[test]
    fn json_shape() {
        let s = SupportFunction::circle(64, 1.0, [0.0, 3.0]).unwrap();
        let v: serde_json::Value = serde_json::from_str(&s.to_json().unwrap()).unwrap();
        assert_eq!(v["K"], 64);
        assert_eq!(v["origin"][1], 3.0);
        assert_eq!(SupportFunction::from_json(&s.to_json().unwrap()).unwrap(), s);
    }
}
