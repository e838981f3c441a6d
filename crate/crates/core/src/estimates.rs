//! Runtime checks of the a-priori estimates and evolution identities.
//!
//! Every monitor is a pure function of a [`FlowTrace`]: it evaluates both
//! sides of an inequality on each snapshot and reports the slack.

use serde::{Deserialize, Serialize};

use crate::error::{GcfError, Result};
use crate::geometry::{compute_quantities, Domain, EdgePolicy, GeomQuantities, GraphFunction, Jet};
use crate::solver::FlowTrace;

/// `Lambda` is capped here; reaching the cap flags the report.
pub const LAMBDA_CAP: f64 = 1e12;

/// Relative slack granted to discretisation error.
pub const TOL_DISC: f64 = 1e-3;

/// Height threshold `M` and decay rate `beta` of the cut-off
/// `psi_beta = (M - beta t - u)_+`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CutoffParams {
    pub m: f64,
    pub beta: f64,
}

impl CutoffParams {
    pub fn new(m: f64, beta: f64) -> Self {
        CutoffParams { m, beta }
    }

    pub fn psi(&self, u: f64, t: f64) -> f64 {
        (self.m - self.beta * t - u).max(0.0)
    }

    fn validate_decay(&self) -> Result<()> {
        if !(self.beta > 0.0) || !(self.m >= self.beta) {
            return Err(GcfError::InvalidParameter(format!(
                "need beta > 0 and M >= beta, got M = {}, beta = {}",
                self.m, self.beta
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimateKind {
    Gradient,
    CurvatureLower,
    Speed,
}

impl EstimateKind {
    pub fn name(&self) -> &'static str {
        match self {
            EstimateKind::Gradient => "gradient",
            EstimateKind::CurvatureLower => "curvature_lower",
            EstimateKind::Speed => "speed",
        }
    }
}

/// Auxiliary quantities entering a bound.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EstimateAux {
    pub theta: Option<f64>,
    pub lambda: Option<f64>,
    pub lambda_overflow: bool,
    /// `sup upsilon(., 0)` or `inf lambda_min(., 0)` over `Q_M`.
    pub q_m_value: Option<f64>,
    pub q_m_points: usize,
    pub eta: Option<f64>,
    /// The monitored set was empty at this time.
    pub vacuous: bool,
}

/// Both sides of one inequality at one time.
///
/// For upper bounds `margin = rhs - lhs`; for the curvature lower bound the
/// inequality reads `lhs >= rhs` and `margin = lhs - rhs`. A non-negative
/// margin always means the inequality holds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EstimateReport {
    pub kind: EstimateKind,
    pub t: f64,
    pub lhs: f64,
    pub rhs: f64,
    pub margin: f64,
    pub argmax: Option<Vec<f64>>,
    pub aux: EstimateAux,
}

impl EstimateReport {
    /// Margin within `tol_rel * |rhs|` of zero and no overflow.
    pub fn passes(&self, tol_rel: f64) -> bool {
        !self.aux.lambda_overflow && self.margin >= -tol_rel * self.rhs.abs()
    }
}

fn plus(x: f64) -> f64 {
    x.max(0.0)
}

/// Nodes strictly inside `{u < level}`: the node and its neighbours lie below the level.
fn strictly_below(u: &GraphFunction, q: &GeomQuantities, level: f64) -> Vec<usize> {
    let v = u.values();
    (0..u.len())
        .filter(|&i| {
            q.available[i]
                && v[i] < level
                && u.neighbours(i).into_iter().all(|j| !u.is_capped(j) && v[j] < level)
        })
        .collect()
}

fn initial(trace: &FlowTrace) -> Result<&GraphFunction> {
    match trace.snapshots.first() {
        Some(s) if s.t == 0.0 => Ok(&s.u),
        _ => Err(GcfError::MissingInitialSnapshot),
    }
}

fn quantities(trace: &FlowTrace) -> Result<Vec<GeomQuantities>> {
    trace.snapshots.iter().map(|s| compute_quantities(&s.u)).collect()
}

/// `upsilon psi_beta <= M max{ sup_{Q_M} upsilon(., 0), n^{1/(n alpha + 1)} (n alpha - 1)_+ / beta }`.
pub fn gradient_monitor(trace: &FlowTrace, cut: &CutoffParams) -> Result<Vec<EstimateReport>> {
    cut.validate_decay()?;
    let u0 = initial(trace)?;
    let qs = quantities(trace)?;
    let (n, alpha) = (trace.params.n as f64, trace.params.alpha);
    let q_m = strictly_below(u0, &qs[0], cut.m);
    if q_m.is_empty() {
        return Err(GcfError::EmptyRegion);
    }
    let sup_ups = q_m.iter().map(|&i| qs[0].upsilon[i]).fold(f64::NEG_INFINITY, f64::max);
    let second = n.powf(1.0 / (n * alpha + 1.0)) * plus(n * alpha - 1.0) / cut.beta;
    let rhs = cut.m * sup_ups.max(second);
    Ok(trace
        .snapshots
        .iter()
        .zip(&qs)
        .map(|(s, q)| {
            let mut best = (0.0, None);
            for i in 0..s.u.len() {
                if !q.available[i] {
                    continue;
                }
                let val = q.upsilon[i] * cut.psi(s.u.values()[i], s.t);
                if val > best.0 {
                    best = (val, Some(i));
                }
            }
            EstimateReport {
                kind: EstimateKind::Gradient,
                t: s.t,
                lhs: best.0,
                rhs,
                margin: rhs - best.0,
                argmax: best.1.map(|i| s.u.point(i)),
                aux: EstimateAux {
                    q_m_value: Some(sup_ups),
                    q_m_points: q_m.len(),
                    vacuous: best.1.is_none(),
                    ..Default::default()
                },
            }
        })
        .collect())
}

/// `psi_beta^{-n(1+1/alpha)} lambda_min >= M^{-n(1+1/alpha)} min{ inf_{Q_M} lambda_min(., 0),
/// beta^{n-1+1/alpha} / (n^2 (n+1) (n alpha - 1)_+)^{n-1+1/alpha} }`, the second term
/// being absent when `n alpha <= 1`.
pub fn curvature_lower_monitor(trace: &FlowTrace, cut: &CutoffParams) -> Result<Vec<EstimateReport>> {
    cut.validate_decay()?;
    let u0 = initial(trace)?;
    let qs = quantities(trace)?;
    let (n, alpha) = (trace.params.n as f64, trace.params.alpha);
    let q_m = strictly_below(u0, &qs[0], cut.m);
    if q_m.is_empty() {
        return Err(GcfError::EmptyRegion);
    }
    let inf_lambda = q_m.iter().map(|&i| qs[0].lambda_min[i]).fold(f64::INFINITY, f64::min);
    if !(inf_lambda > 0.0) {
        return Err(GcfError::HypothesisViolation(format!(
            "initial data not strictly convex on Q_M (inf lambda_min = {inf_lambda:.3e})"
        )));
    }
    let expo = n * (1.0 + 1.0 / alpha);
    let e2 = (n - 1.0) + 1.0 / alpha;
    let second = if n * alpha > 1.0 {
        cut.beta.powf(e2) / (n * n * (n + 1.0) * (n * alpha - 1.0)).powf(e2)
    } else {
        f64::INFINITY
    };
    let rhs = cut.m.powf(-expo) * inf_lambda.min(second);
    Ok(trace
        .snapshots
        .iter()
        .zip(&qs)
        .map(|(s, q)| {
            let mut best = (f64::INFINITY, None);
            for i in 0..s.u.len() {
                let psi = cut.psi(s.u.values()[i], s.t);
                if !q.available[i] || psi <= 0.0 {
                    continue;
                }
                let val = psi.powf(-expo) * q.lambda_min[i];
                if val < best.0 {
                    best = (val, Some(i));
                }
            }
            EstimateReport {
                kind: EstimateKind::CurvatureLower,
                t: s.t,
                lhs: best.0,
                rhs,
                margin: best.0 - rhs,
                argmax: best.1.map(|i| s.u.point(i)),
                aux: EstimateAux {
                    q_m_value: Some(inf_lambda),
                    q_m_points: q_m.len(),
                    vacuous: best.1.is_none(),
                    ..Default::default()
                },
            }
        })
        .collect())
}

/// `(t/(1+t)) psi^2 K^{1/n} <= (4 n alpha + 1)^2 (2 theta)^{1 + 1/(2 n alpha)} (theta Lambda + M^2)`
/// with `psi = (M - u)_+` and `theta`, `Lambda` the running suprema of `upsilon^2`
/// and `1/lambda_min` over `{u < M}`.
pub fn speed_monitor(trace: &FlowTrace, m: f64) -> Result<Vec<EstimateReport>> {
    if !(m >= 1.0) {
        return Err(GcfError::InvalidParameter(format!("speed bound needs M >= 1, got {m}")));
    }
    initial(trace)?;
    let qs = quantities(trace)?;
    let (n, alpha) = (trace.params.n as f64, trace.params.alpha);
    let cut = CutoffParams { m, beta: 0.0 };
    let mut theta: Option<f64> = None;
    let mut lambda = 0.0f64;
    let mut overflow = false;
    let mut out = Vec::with_capacity(trace.snapshots.len());
    for (s, q) in trace.snapshots.iter().zip(&qs) {
        for i in strictly_below(&s.u, q, m) {
            theta = Some(theta.unwrap_or(f64::NEG_INFINITY).max(q.upsilon[i] * q.upsilon[i]));
            let lm = q.lambda_min[i];
            if lm > 1.0 / LAMBDA_CAP {
                lambda = lambda.max(1.0 / lm);
            } else {
                overflow = true;
                lambda = LAMBDA_CAP;
            }
        }
        let th = theta.unwrap_or(1.0);
        if th < 1.0 {
            return Err(GcfError::HypothesisViolation(format!("theta = {th} < 1")));
        }
        let eta = s.t / (1.0 + s.t);
        let mut best = (0.0, None);
        for i in 0..s.u.len() {
            let psi = cut.psi(s.u.values()[i], s.t);
            if !q.available[i] || psi <= 0.0 {
                continue;
            }
            let val = eta * psi * psi * q.gauss_curvature[i].max(0.0).powf(1.0 / n);
            if val > best.0 || best.1.is_none() {
                best = (val, Some(i));
            }
        }
        let na = n * alpha;
        let rhs = (4.0 * na + 1.0).powi(2) * (2.0 * th).powf(1.0 + 1.0 / (2.0 * na)) * (th * lambda + m * m);
        out.push(EstimateReport {
            kind: EstimateKind::Speed,
            t: s.t,
            lhs: best.0,
            rhs,
            margin: rhs - best.0,
            argmax: best.1.map(|i| s.u.point(i)),
            aux: EstimateAux {
                theta: Some(th),
                lambda: Some(lambda),
                lambda_overflow: overflow,
                eta: Some(eta),
                vacuous: theta.is_none(),
                ..Default::default()
            },
        });
    }
    Ok(out)
}

/// All three monitors, snapshot by snapshot.
pub fn monitor_all(trace: &FlowTrace, cut: &CutoffParams) -> Result<Vec<EstimateReport>> {
    let mut all = gradient_monitor(trace, cut)?;
    all.extend(curvature_lower_monitor(trace, cut)?);
    all.extend(speed_monitor(trace, cut.m.max(1.0))?);
    Ok(all)
}

/// CSV summary `name,t,lhs,rhs,margin,argmax` (argmax coordinates joined by `;`).
pub fn reports_csv(reports: &[EstimateReport]) -> String {
    let mut s = String::from("name,t,lhs,rhs,margin,argmax\n");
    for r in reports {
        let arg = r
            .argmax
            .as_ref()
            .map(|p| p.iter().map(|x| format!("{x}")).collect::<Vec<_>>().join(";"))
            .unwrap_or_default();
        s.push_str(&format!("{},{},{},{},{},{}\n", r.kind.name(), r.t, r.lhs, r.rhs, r.margin, arg));
    }
    s
}

/// Evolution identities checked by [`evolution_residuals`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Identity {
    /// `d/dt psi_beta = L psi + (n alpha - 1) K^alpha / upsilon - beta`.
    Cutoff,
    /// `d/dt K^alpha = L K^alpha + alpha K^{2 alpha} H`.
    GaussPower,
    /// `d/dt upsilon = L upsilon - 2 |grad upsilon|_L^2 / upsilon - alpha K^alpha H upsilon`.
    GradientFunction,
}

impl Identity {
    pub const ALL: [Identity; 3] = [Identity::Cutoff, Identity::GaussPower, Identity::GradientFunction];
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResidualEntry {
    pub identity: Identity,
    pub max_residual: f64,
    pub t: f64,
    pub r: f64,
}

/// Pointwise radial fields of one snapshot.
struct RadialFields {
    u_r: Vec<f64>,
    ups: Vec<f64>,
    k_alpha: Vec<f64>,
    kappa_r: Vec<f64>,
    kappa_t: Vec<f64>,
    mean: Vec<f64>,
    psi: Vec<f64>,
}

fn radial_fields(u: &GraphFunction, n: usize, alpha: f64, cut: &CutoffParams, t: f64) -> Result<RadialFields> {
    let len = u.len() - 1;
    let mut f = RadialFields {
        u_r: Vec::with_capacity(len),
        ups: Vec::with_capacity(len),
        k_alpha: Vec::with_capacity(len),
        kappa_r: Vec::with_capacity(len),
        kappa_t: Vec::with_capacity(len),
        mean: Vec::with_capacity(len),
        psi: Vec::with_capacity(len),
    };
    let mut jets = Vec::with_capacity(len);
    for i in 0..len {
        if u.is_capped(i) {
            return Err(GcfError::HypothesisViolation("residuals need uncapped radial data".into()));
        }
        match u.jet(i, EdgePolicy::Interior) {
            Some(Jet::Radial { r, ur, urr, ur_over_r }) => jets.push((r, ur, urr, ur_over_r)),
            _ => return Err(GcfError::NonRadialTrace),
        }
    }
    for (i, &(r, ur, urr, ur_over_r)) in jets.iter().enumerate() {
        let g = Jet::Radial { r, ur, urr, ur_over_r }.geometry(n);
        let v2 = g.upsilon * g.upsilon;
        f.u_r.push(ur);
        f.ups.push(g.upsilon);
        f.k_alpha.push(g.gauss.max(0.0).powf(alpha));
        f.kappa_r.push(urr / (v2 * g.upsilon));
        f.kappa_t.push(ur_over_r / g.upsilon);
        f.mean.push(g.mean);
        f.psi.push(cut.m - cut.beta * t - u.values()[i]);
    }
    Ok(f)
}

/// Centered radial derivatives of an even function: `(w_r, w_rr, w_r / r)`.
fn radial_derivs(w: &[f64], k: usize, h: f64) -> (f64, f64, f64) {
    let wm = if k == 0 { w[1] } else { w[k - 1] };
    let wp = w[k + 1];
    let wr = (wp - wm) / (2.0 * h);
    let wrr = (wp - 2.0 * w[k] + wm) / (h * h);
    let wr_r = if k == 0 { wrr } else { wr / (k as f64 * h) };
    (wr, wrr, wr_r)
}

/// Maximum residual of each requested identity over the interior nodes with
/// radius in `r_window` and all interior snapshots of a radial trace. Time
/// derivatives are centered differences over neighbouring snapshots,
/// corrected to the derivative along the normal motion.
///
/// Spatial derivatives reuse the solver's stencils, including its origin
/// stencil, so the check is consistent on solver output. On data that did
/// not come from the solver the origin stencil's different error constant
/// shows up after further differencing; exclude the first few nodes there.
pub fn evolution_residuals(
    trace: &FlowTrace,
    which: &[Identity],
    cut: &CutoffParams,
    r_window: (f64, f64),
) -> Result<Vec<ResidualEntry>> {
    let snaps = &trace.snapshots;
    if snaps.len() < 3 {
        return Err(GcfError::InsufficientSnapshots { needed: 3, got: snaps.len() });
    }
    if !matches!(snaps[0].u.domain(), Domain::Radial { .. }) {
        return Err(GcfError::NonRadialTrace);
    }
    let (n, alpha) = (trace.params.n, trace.params.alpha);
    let nf = n as f64;
    let h = snaps[0].u.spacing();
    let fields: Vec<RadialFields> =
        snaps.iter().map(|s| radial_fields(&s.u, n, alpha, cut, s.t)).collect::<Result<_>>()?;
    let mut out: Vec<ResidualEntry> =
        which.iter().map(|&identity| ResidualEntry { identity, max_residual: 0.0, t: 0.0, r: 0.0 }).collect();
    for c in 1..snaps.len() - 1 {
        let (t0, t1, t2) = (snaps[c - 1].t, snaps[c].t, snaps[c + 1].t);
        let (d0, d2) = (t1 - t0, t2 - t1);
        // three-point derivative on a non-uniform stencil
        let w0 = -d2 / (d0 * (d0 + d2));
        let w1 = (d2 - d0) / (d0 * d2);
        let w2 = d0 / (d2 * (d0 + d2));
        let f = &fields[c];
        let len = f.ups.len();
        for k in 0..len - 1 {
            let r = k as f64 * h;
            if r < r_window.0 {
                continue;
            }
            if r > r_window.1 {
                break;
            }
            let dt_of = |sel: &dyn Fn(&RadialFields) -> &Vec<f64>| {
                w0 * sel(&fields[c - 1])[k] + w1 * sel(f)[k] + w2 * sel(&fields[c + 1])[k]
            };
            let ka = f.k_alpha[k];
            let ups = f.ups[k];
            let (ups_r, _, _) = radial_derivs(&f.ups, k, h);
            let (kr, kt) = (f.kappa_r[k], f.kappa_t[k]);
            let ell = |w: &[f64]| -> f64 {
                if ka == 0.0 {
                    return 0.0;
                }
                let (wr, wrr, wr_r) = radial_derivs(w, k, h);
                alpha * ka * ((wrr / (ups * ups) - wr * ups_r / (ups * ups * ups)) / kr + (nf - 1.0) * wr_r / (ups * ups * kt))
            };
            // transport term of the normal motion: x' = -K^alpha Du / upsilon
            let drift = |w: &[f64]| -> f64 { -ka * f.u_r[k] * radial_derivs(w, k, h).0 / ups };
            for e in out.iter_mut() {
                let res = match e.identity {
                    Identity::GaussPower => {
                        let lhs = dt_of(&|g| &g.k_alpha) + drift(&f.k_alpha);
                        lhs - (ell(&f.k_alpha) + alpha * ka * ka * f.mean[k])
                    }
                    Identity::Cutoff => {
                        let lhs = dt_of(&|g| &g.psi) + drift(&f.psi);
                        lhs - (ell(&f.psi) + (nf * alpha - 1.0) * ka / ups - cut.beta)
                    }
                    Identity::GradientFunction => {
                        let lhs = dt_of(&|g| &g.ups) + drift(&f.ups);
                        let grad_l = if ka == 0.0 { 0.0 } else { alpha * ka * ups_r * ups_r / (ups * ups * kr) };
                        lhs - (ell(&f.ups) - 2.0 * grad_l / ups - alpha * ka * f.mean[k] * ups)
                    }
                };
                if res.abs() > e.max_residual {
                    e.max_residual = res.abs();
                    e.t = t1;
                    e.r = k as f64 * h;
                }
            }
        }
    }
    Ok(out)
}
