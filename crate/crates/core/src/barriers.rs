//! Rotationally symmetric supersolutions that keep a ball inside the domain.
//!
//! For `h` in `[m-1, m]` the surface `Phi_t = {(y, h) : |y - y0| = f(h, t)}`
//! with `f(h, t) = R0 - delta (h - m)^2 - 2^(1+n alpha) R0^(-n alpha) delta^alpha t`
//! moves faster than the flow, so a graph that starts outside the solid drum
//! it bounds can only touch it on the bottom rim. Choosing `m` above the
//! heights reachable with slope `1/(2 delta)` rules that out too, which
//! proves `B_{f(m, t0)}(y0)` stays inside the evolving domain.

use serde::{Deserialize, Serialize};

use crate::error::{GcfError, Result};
use crate::geometry::{gradient_function, Domain, GraphFunction};
use crate::solver::FlowTrace;

/// Parameters of one barrier.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BarrierSpec {
    pub r0: f64,
    /// Centre `y0`; empty means the origin.
    #[serde(default)]
    pub center: Vec<f64>,
    pub m: f64,
    pub delta: f64,
    pub n: usize,
    pub alpha: f64,
    pub t0: f64,
}

impl BarrierSpec {
    /// Barrier about the origin; checks the smallness condition.
    pub fn new(n: usize, alpha: f64, r0: f64, delta: f64, m: f64, t0: f64) -> Result<Self> {
        let s = BarrierSpec { r0, center: Vec::new(), m, delta, n, alpha, t0 };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(GcfError::InvalidSpec(m));
        if self.n == 0 || !(self.alpha > 0.0) {
            return bad(format!("need n >= 1 and alpha > 0 (n = {}, alpha = {})", self.n, self.alpha));
        }
        if !(self.r0 > 0.0 && self.r0 < 1.0) {
            return bad(format!("R0 = {} must lie in (0, 1)", self.r0));
        }
        if !(self.m >= 1.0) {
            return bad(format!("level m = {} must be at least 1", self.m));
        }
        if !(self.delta > 0.0) || !(self.t0 >= 0.0) {
            return bad(format!("need delta > 0 and t0 >= 0 (delta = {}, t0 = {})", self.delta, self.t0));
        }
        if !self.center.is_empty() && self.center.len() != self.n {
            return bad(format!("centre has {} coordinates, expected {}", self.center.len(), self.n));
        }
        let lhs = self.delta + self.drift() * self.t0;
        if !(lhs < 0.5 * self.r0) {
            return bad(format!("delta + drift * t0 = {lhs:.6e} is not below R0/2 = {}", 0.5 * self.r0));
        }
        Ok(())
    }

    /// `2^(1+n alpha) R0^(-n alpha) delta^alpha`, the inward speed of the drum.
    pub fn drift(&self) -> f64 {
        let na = self.n as f64 * self.alpha;
        2f64.powf(1.0 + na) * self.r0.powf(-na) * self.delta.powf(self.alpha)
    }

    /// `f(m, t0)`: radius of the ball guaranteed inside the domain at `t0`.
    pub fn guaranteed_radius(&self) -> f64 {
        self.r0 - self.drift() * self.t0
    }

    fn center_distance(&self, p: &[f64]) -> f64 {
        if self.center.is_empty() {
            p.iter().map(|x| x * x).sum::<f64>().sqrt()
        } else {
            p.iter().zip(&self.center).map(|(x, c)| (x - c) * (x - c)).sum::<f64>().sqrt()
        }
    }
}

/// `f(h, t)` on `[m-1, m] x [0, t0]`.
pub fn barrier_eval(spec: &BarrierSpec, h: f64, t: f64) -> Result<f64> {
    if !(h >= spec.m - 1.0 && h <= spec.m) {
        return Err(GcfError::OutOfDomain(format!("h = {h} outside [{}, {}]", spec.m - 1.0, spec.m)));
    }
    if !(t >= 0.0 && t <= spec.t0) {
        return Err(GcfError::OutOfDomain(format!("t = {t} outside [0, {}]", spec.t0)));
    }
    Ok(radius_unchecked(spec, h, t))
}

fn radius_unchecked(spec: &BarrierSpec, h: f64, t: f64) -> f64 {
    spec.r0 - spec.delta * (h - spec.m) * (h - spec.m) - spec.drift() * t
}

/// Geometry of `Phi_t` at height `h`, from `f` and its derivatives.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BarrierPoint {
    pub radius: f64,
    pub gauss: f64,
    pub upsilon: f64,
    /// Rise speed of the graph `phi = f^{-1}(|y|, t)`.
    pub speed: f64,
}

pub fn barrier_point(spec: &BarrierSpec, h: f64, t: f64) -> Result<BarrierPoint> {
    let r = barrier_eval(spec, h, t)?;
    if !(h < spec.m) {
        return Err(GcfError::OutOfDomain(format!("the graph of the barrier is vertical at h = m = {}", spec.m)));
    }
    let nf = spec.n as f64;
    let fh = 2.0 * spec.delta * (spec.m - h);
    let p = 1.0 / fh;
    let pp = 2.0 * spec.delta / (fh * fh * fh);
    let w2 = 1.0 + p * p;
    let gauss = pp * p.powf(nf - 1.0) / (r.powf(nf - 1.0) * w2.powf(0.5 * (nf + 2.0)));
    Ok(BarrierPoint { radius: r, gauss, upsilon: w2.sqrt(), speed: spec.drift() * p })
}

/// Smallest slack of the three supersolution inequalities over the samples.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SupersolutionMargins {
    /// `2^n R0^(-n) delta - K`.
    pub k_margin: f64,
    /// `1 / (delta (m - h)) - upsilon`.
    pub upsilon_margin: f64,
    /// `d_t f^{-1} - K^alpha upsilon`.
    pub speed_margin: f64,
}

impl SupersolutionMargins {
    pub fn all_positive(&self) -> bool {
        self.k_margin > 0.0 && self.upsilon_margin > 0.0 && self.speed_margin > 0.0
    }
}

pub fn verify_supersolution(spec: &BarrierSpec, h_samples: &[f64], t_samples: &[f64]) -> Result<SupersolutionMargins> {
    spec.validate()?;
    let nf = spec.n as f64;
    let k_bound = 2f64.powf(nf) * spec.r0.powf(-nf) * spec.delta;
    let mut out =
        SupersolutionMargins { k_margin: f64::INFINITY, upsilon_margin: f64::INFINITY, speed_margin: f64::INFINITY };
    for &h in h_samples {
        for &t in t_samples {
            let b = barrier_point(spec, h, t)?;
            out.k_margin = out.k_margin.min(k_bound - b.gauss);
            out.upsilon_margin = out.upsilon_margin.min(1.0 / (spec.delta * (spec.m - h)) - b.upsilon);
            out.speed_margin = out.speed_margin.min(b.speed - b.gauss.powf(spec.alpha) * b.upsilon);
        }
    }
    Ok(out)
}

/// `count x count` interior sample grid in `(m-1, m) x [0, t0]`.
pub fn sample_grid(spec: &BarrierSpec, count: usize) -> (Vec<f64>, Vec<f64>) {
    let hs = (1..=count).map(|i| spec.m - 1.0 + i as f64 / (count + 1) as f64).collect();
    let ts = (0..count).map(|i| spec.t0 * i as f64 / (count.max(2) - 1) as f64).collect();
    (hs, ts)
}

/// Where the graph entered the drum.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ContactLocus {
    /// The bottom rim, level `m-1`.
    Rim,
    /// The top disc, level `m`.
    Top,
    /// The curved side strictly between the levels.
    Interior,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Contact {
    pub t: f64,
    pub locus: ContactLocus,
    /// Height of the deepest penetration.
    pub height: f64,
    /// `f(h, t) - |y|` there (positive inside the drum).
    pub depth: f64,
}

/// Penetration `f(h, t) - rho(h)` over the slab, with `rho(h)` the radius of
/// the sublevel set `{u <= h}` of a radial graph.
fn radial_penetration(u: &GraphFunction, spec: &BarrierSpec, t: f64) -> Vec<(f64, f64)> {
    let h = u.spacing();
    let vals = u.values();
    let level_radius = |lvl: f64| -> f64 {
        for i in 0..vals.len() {
            let v = if u.is_capped(i) { f64::INFINITY } else { vals[i] };
            if v > lvl {
                if i == 0 {
                    return 0.0;
                }
                if v.is_infinite() {
                    return i as f64 * h;
                }
                let a = vals[i - 1];
                return (i as f64 - 1.0 + (lvl - a) / (v - a)) * h;
            }
        }
        vals.len() as f64 * h
    };
    let steps = 256;
    (0..=steps)
        .map(|k| {
            let lvl = spec.m - 1.0 + k as f64 / steps as f64;
            (lvl, radius_unchecked(spec, lvl, t) - level_radius(lvl))
        })
        .collect()
}

fn node_penetration(u: &GraphFunction, spec: &BarrierSpec, t: f64) -> Vec<(f64, f64)> {
    (0..u.len())
        .filter(|&i| !u.is_capped(i))
        .filter_map(|i| {
            let v = u.values()[i];
            (v >= spec.m - 1.0 && v <= spec.m).then(|| (v, radius_unchecked(spec, v, t) - spec.center_distance(&u.point(i))))
        })
        .collect()
}

fn reaches(u: &GraphFunction, level: f64) -> bool {
    (0..u.len()).any(|i| u.is_capped(i) || u.values()[i] >= level)
}

/// Result of [`contact_check`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContactReport {
    pub first_contact: Option<Contact>,
    pub snapshots_checked: usize,
}

/// Tests every snapshot with `t <= t0` for points of the graph inside the
/// drum bounded by `Phi_t`. Radial traces compare sublevel radii on a fine
/// grid of levels; other grids test the nodes in the slab.
pub fn contact_check(trace: &FlowTrace, spec: &BarrierSpec) -> Result<ContactReport> {
    spec.validate()?;
    let snaps: Vec<_> = trace.snapshots.iter().filter(|s| s.t <= spec.t0 * (1.0 + 1e-12)).collect();
    if !snaps.iter().any(|s| reaches(&s.u, spec.m - 1.0)) {
        let max_height = snaps.iter().map(|s| s.u.max_finite_height()).fold(f64::NEG_INFINITY, f64::max);
        return Err(GcfError::TraceDoesNotReachSlab { lo: spec.m - 1.0, hi: spec.m, max_height });
    }
    for s in &snaps {
        let t = s.t.min(spec.t0);
        let pen = if matches!(s.u.domain(), Domain::Radial { .. }) {
            radial_penetration(&s.u, spec, t)
        } else {
            node_penetration(&s.u, spec, t)
        };
        let inside: Vec<&(f64, f64)> = pen.iter().filter(|(_, d)| *d >= 0.0).collect();
        if inside.is_empty() {
            continue;
        }
        let deepest = inside.iter().fold(inside[0], |a, b| if b.1 > a.1 { b } else { a });
        let tol = 1e-9;
        let locus = if inside.iter().any(|(h, _)| *h <= spec.m - 1.0 + tol) {
            ContactLocus::Rim
        } else if inside.iter().all(|(h, _)| *h >= spec.m - tol) {
            ContactLocus::Top
        } else {
            ContactLocus::Interior
        };
        return Ok(ContactReport {
            first_contact: Some(Contact { t: s.t, locus, height: deepest.0, depth: deepest.1 }),
            snapshots_checked: snaps.len(),
        });
    }
    Ok(ContactReport { first_contact: None, snapshots_checked: snaps.len() })
}

/// `M_delta`: largest height over `|y| <= R0`, `|Du| <= 1/(2 delta)`,
/// `t <= t0` among the snapshots of the trace.
pub fn m_delta(trace: &FlowTrace, r0: f64, delta: f64, t0: f64) -> f64 {
    let slope = 0.5 / delta;
    let mut best = f64::NEG_INFINITY;
    for s in trace.snapshots.iter().filter(|s| s.t <= t0 * (1.0 + 1e-12)) {
        let ups = gradient_function(&s.u);
        for (i, w) in ups.iter().enumerate() {
            if s.u.is_capped(i) || !w.is_finite() {
                continue;
            }
            let p = s.u.point(i);
            let r = p.iter().map(|x| x * x).sum::<f64>().sqrt();
            if r <= r0 + 1e-12 && (w * w - 1.0).max(0.0).sqrt() <= slope {
                best = best.max(s.u.values()[i]);
            }
        }
    }
    best
}

/// One row of the domain-preservation verdict.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DeltaVerdict {
    pub delta: f64,
    pub m: f64,
    #[serde(rename = "M_delta")]
    pub m_delta: f64,
    pub guaranteed_radius: f64,
    pub contact: Option<Contact>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PreservationVerdict {
    pub r0: f64,
    pub t0: f64,
    pub rows: Vec<DeltaVerdict>,
    /// No contact for any delta and radii increasing as delta decreases.
    pub pass: bool,
    /// Guaranteed radius at the smallest delta divided by `R0`.
    pub final_radius_ratio: f64,
}

impl PreservationVerdict {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// For each `delta`: `m = ceil(M_delta) + 2`, a contact check, and the
/// guaranteed radius `f(m, t0)`.
pub fn domain_preservation(trace: &FlowTrace, r0: f64, t0: f64, delta_list: &[f64]) -> Result<PreservationVerdict> {
    if delta_list.is_empty() || delta_list.windows(2).any(|w| w[1] >= w[0]) {
        return Err(GcfError::InvalidParameter("delta_list must be non-empty and strictly decreasing".into()));
    }
    let n = trace.params.n;
    let alpha = trace.params.alpha;
    let mut rows = Vec::with_capacity(delta_list.len());
    for &delta in delta_list {
        let md = m_delta(trace, r0, delta, t0);
        if !md.is_finite() {
            return Err(GcfError::EmptyRegion);
        }
        let m = (md.ceil() + 2.0).max(1.0);
        let spec = BarrierSpec::new(n, alpha, r0, delta, m, t0)?;
        let report = contact_check(trace, &spec)?;
        rows.push(DeltaVerdict {
            delta,
            m,
            m_delta: md,
            guaranteed_radius: spec.guaranteed_radius(),
            contact: report.first_contact,
        });
    }
    let pass = rows.iter().all(|r| r.contact.is_none())
        && rows.windows(2).all(|w| w[1].guaranteed_radius > w[0].guaranteed_radius);
    let final_radius_ratio = rows.last().map(|r| r.guaranteed_radius / r0).unwrap_or(0.0);
    Ok(PreservationVerdict { r0, t0, rows, pass, final_radius_ratio })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec() -> BarrierSpec {
        BarrierSpec::new(2, 1.0, 0.5, 0.01, 5.0, 0.05).unwrap()
    }

    #[test]
    fn closed_form_values() {
        let s = spec();
        assert_eq!(barrier_eval(&s, 5.0, 0.0).unwrap(), 0.5);
        assert!((barrier_eval(&s, 4.0, 0.0).unwrap() - 0.49).abs() < 1e-15);
        assert!((s.drift() - 0.32).abs() < 1e-14);
    }

    #[test]
    fn long_horizon_is_rejected() {
        let err = BarrierSpec::new(2, 1.0, 0.5, 0.01, 5.0, 1.0);
        assert!(matches!(err, Err(GcfError::InvalidSpec(_))));
    }

    #[test]
    fn out_of_slab() {
        let s = spec();
        assert!(matches!(barrier_eval(&s, 3.9, 0.0), Err(GcfError::OutOfDomain(_))));
        assert!(matches!(barrier_eval(&s, 4.5, 0.06), Err(GcfError::OutOfDomain(_))));
    }

    #[test]
    fn margins_positive_mid_slab() {
        let s = spec();
        let m = verify_supersolution(&s, &[4.5], &[0.0]).unwrap();
        assert!(m.all_positive(), "{m:?}");
        let (hs, ts) = sample_grid(&s, 100);
        assert!(verify_supersolution(&s, &hs, &ts).unwrap().all_positive());
    }

    #[test]
    fn upsilon_margin_grows_near_top() {
        let s = spec();
        let a = verify_supersolution(&s, &[4.9], &[0.0]).unwrap().upsilon_margin;
        let b = verify_supersolution(&s, &[4.999], &[0.0]).unwrap().upsilon_margin;
        assert!(b > a);
    }

    #[test]
    fn guaranteed_radius_example() {
        let s = BarrierSpec::new(2, 1.0, 0.5, 1e-3, 3.0, 0.05).unwrap();
        assert!((s.guaranteed_radius() - 0.4984).abs() < 1e-12);
    }
}
