//! Explicit monotone time stepping for the graph flow.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{GcfError, Result};
use crate::geometry::{Domain, EdgePolicy, GraphFunction};
use crate::oracles::SphereSolution;

/// Schema tag written into checkpoints.
pub const CHECKPOINT_SCHEMA: &str = "gcf-lab/1";

const PAR_THRESHOLD: usize = 2048;

/// Treatment of the outermost ring of grid nodes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BoundaryCondition {
    /// Continue the data past the edge with constant second differences.
    Extrapolate,
    /// Keep the edge values fixed.
    Frozen,
    /// Edge values follow a shrinking sphere of initial radius `radius`
    /// whose centre sits at height `center_height`.
    ShrinkingSphere { center_height: f64, radius: f64 },
    /// Edge values rise at constant speed.
    Translating { speed: f64 },
}

/// How a node next to a capped neighbour sees that neighbour.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WallModel {
    /// The capped value enters the stencil as is (a steep finite wall).
    #[default]
    Cap,
    /// The curve turns vertical at the capped node. Only for interval and
    /// radial grids; see [`GraphFunction::wall_jet`].
    Tangent,
}

/// Parameters of a flow run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlowParams {
    pub n: usize,
    pub alpha: f64,
    pub t_end: f64,
    pub cfl_safety: f64,
    pub dt_max: f64,
    /// Hessian eigenvalues below `-tol_convex` abort the run; defaults to
    /// `1e-8 * max|u| / h^2`.
    pub tol_convex: Option<f64>,
    pub boundary: BoundaryCondition,
    /// Abort when the Gauss curvature exceeds this value.
    pub blowup_k: f64,
    #[serde(default)]
    pub wall: WallModel,
}

impl FlowParams {
    pub fn new(n: usize, alpha: f64, t_end: f64) -> Self {
        FlowParams {
            n,
            alpha,
            t_end,
            cfl_safety: 0.4,
            dt_max: 1e-2,
            tol_convex: None,
            boundary: BoundaryCondition::Extrapolate,
            blowup_k: 1e12,
            wall: WallModel::Cap,
        }
    }

    pub fn with_boundary(mut self, bc: BoundaryCondition) -> Self {
        self.boundary = bc;
        self
    }

    pub fn with_wall(mut self, wall: WallModel) -> Self {
        self.wall = wall;
        self
    }

    pub fn validate(&self, u: &GraphFunction) -> Result<()> {
        let bad = |m: String| Err(GcfError::InvalidParameter(m));
        if self.wall == WallModel::Tangent && matches!(u.domain(), Domain::Box { .. }) {
            return bad("the tangent wall model needs an interval or radial grid".into());
        }
        if self.n == 0 || self.n != u.dim() {
            return bad(format!("n = {} does not match the grid dimension {}", self.n, u.dim()));
        }
        if !(self.alpha > 0.0) || !self.alpha.is_finite() {
            return bad(format!("alpha must be positive, got {}", self.alpha));
        }
        if !(self.t_end >= 0.0) || !self.t_end.is_finite() {
            return bad(format!("t_end must be non-negative, got {}", self.t_end));
        }
        if !(self.cfl_safety > 0.0 && self.cfl_safety <= 1.0) {
            return bad(format!("cfl_safety must lie in (0, 1], got {}", self.cfl_safety));
        }
        if !(self.dt_max > 0.0) {
            return bad(format!("dt_max must be positive, got {}", self.dt_max));
        }
        if let BoundaryCondition::ShrinkingSphere { radius, .. } = self.boundary {
            if !(radius > 0.0) {
                return bad("sphere radius must be positive".into());
            }
        }
        Ok(())
    }

    fn sphere(&self) -> Option<(f64, SphereSolution)> {
        match self.boundary {
            BoundaryCondition::ShrinkingSphere { center_height, radius } => {
                Some((center_height, SphereSolution { r0: radius, n: self.n, alpha: self.alpha }))
            }
            _ => None,
        }
    }
}

/// Extremes of the geometry over the evolving nodes.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub min_lambda: f64,
    pub max_gauss: f64,
    pub max_upsilon: f64,
}

impl Diagnostics {
    fn empty() -> Self {
        Diagnostics { min_lambda: f64::INFINITY, max_gauss: 0.0, max_upsilon: 1.0 }
    }
    fn merge(self, o: Self) -> Self {
        Diagnostics {
            min_lambda: self.min_lambda.min(o.min_lambda),
            max_gauss: self.max_gauss.max(o.max_gauss),
            max_upsilon: self.max_upsilon.max(o.max_upsilon),
        }
    }
}

/// Normal speed, time-step bound and diagnostics for one state.
#[derive(Clone, Debug)]
pub struct RhsEval {
    /// `du/dt` at every node.
    pub speed: Vec<f64>,
    /// `max alpha K^alpha / lambda_min` over evolving nodes.
    pub max_ratio: f64,
    pub diagnostics: Diagnostics,
}

#[derive(Clone, Copy)]
struct NodeEval {
    speed: f64,
    ratio: f64,
    diag: Diagnostics,
}

fn fast_pow(x: f64, a: f64) -> f64 {
    if a == 1.0 {
        x
    } else if a == 2.0 {
        x * x
    } else if a == 0.5 {
        x.sqrt()
    } else if a == 0.0 {
        1.0
    } else if a == 3.0 {
        x * x * x
    } else {
        x.powf(a)
    }
}

fn node_eval(u: &GraphFunction, idx: usize, p: &FlowParams, t: f64, tol: f64) -> Result<NodeEval> {
    let still = NodeEval { speed: 0.0, ratio: 0.0, diag: Diagnostics::empty() };
    if u.is_capped(idx) {
        return Ok(still);
    }
    if u.is_boundary(idx) {
        match p.boundary {
            BoundaryCondition::Extrapolate => {}
            BoundaryCondition::Frozen => return Ok(still),
            BoundaryCondition::Translating { speed } => return Ok(NodeEval { speed, ..still }),
            BoundaryCondition::ShrinkingSphere { .. } => {
                let (_, s) = p.sphere().expect("sphere boundary");
                return Ok(NodeEval { speed: s.height_speed(u.radius(idx), t)?, ..still });
            }
        }
    }
    let wall = if p.wall == WallModel::Tangent { u.wall_jet(idx) } else { None };
    let jet = wall.unwrap_or_else(|| u.jet(idx, EdgePolicy::Extrapolate).expect("extrapolated jet"));
    let g = jet.geometry(p.n);
    if g.hessian_min_eig < -tol {
        return Err(GcfError::NonConvex { location: format!("{:?} at t = {t}", u.point(idx)), min_eig: g.hessian_min_eig, tol });
    }
    let nf = p.n as f64;
    let det = g.det_hessian.max(0.0);
    let speed = fast_pow(det, p.alpha) / fast_pow(g.upsilon, (nf + 2.0) * p.alpha - 1.0);
    // speed = K^alpha * upsilon
    let ka = speed / g.upsilon;
    let ratio = if ka > 0.0 && g.kappa_min > 0.0 { p.alpha * ka / g.kappa_min } else { 0.0 };
    Ok(NodeEval {
        speed,
        ratio,
        diag: Diagnostics { min_lambda: g.kappa_min, max_gauss: g.gauss, max_upsilon: g.upsilon },
    })
}

/// Evaluate the right-hand side of the flow at time `t`.
pub fn evaluate(u: &GraphFunction, params: &FlowParams, t: f64) -> Result<RhsEval> {
    let tol = params.tol_convex.unwrap_or_else(|| u.default_convexity_tol());
    let mut speed = vec![0.0; u.len()];
    let mut max_ratio = 0.0f64;
    let mut diagnostics = Diagnostics::empty();
    if u.len() >= PAR_THRESHOLD {
        let evals: Vec<NodeEval> =
            (0..u.len()).into_par_iter().map(|i| node_eval(u, i, params, t, tol)).collect::<Result<_>>()?;
        for (s, e) in speed.iter_mut().zip(&evals) {
            *s = e.speed;
            max_ratio = max_ratio.max(e.ratio);
            diagnostics = diagnostics.merge(e.diag);
        }
    } else {
        for (i, s) in speed.iter_mut().enumerate() {
            let e = node_eval(u, i, params, t, tol)?;
            *s = e.speed;
            max_ratio = max_ratio.max(e.ratio);
            diagnostics = diagnostics.merge(e.diag);
        }
    }
    Ok(RhsEval { speed, max_ratio, diagnostics })
}

/// `du/dt` at every node.
pub fn rhs(u: &GraphFunction, params: &FlowParams) -> Result<Vec<f64>> {
    Ok(evaluate(u, params, 0.0)?.speed)
}

/// Largest time step keeping the explicit update monotone, scaled by the
/// safety factor and capped by `dt_max`.
pub fn stable_dt_from(eval: &RhsEval, u: &GraphFunction, params: &FlowParams) -> f64 {
    if eval.max_ratio <= 0.0 {
        return params.dt_max;
    }
    let h = u.spacing();
    (params.cfl_safety * h * h / (2.0 * params.n as f64 * eval.max_ratio)).min(params.dt_max)
}

pub fn stable_dt(u: &GraphFunction, params: &FlowParams) -> Result<f64> {
    Ok(stable_dt_from(&evaluate(u, params, 0.0)?, u, params))
}

/// State of a run between steps.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlowState {
    pub t: f64,
    pub u: GraphFunction,
    pub step_count: u64,
    pub last_dt: f64,
    pub diagnostics: Option<Diagnostics>,
}

impl FlowState {
    pub fn new(u: GraphFunction) -> Self {
        FlowState { t: 0.0, u, step_count: 0, last_dt: 0.0, diagnostics: None }
    }
}

fn apply(state: &FlowState, eval: &RhsEval, params: &FlowParams, dt: f64, t_new: f64) -> Result<FlowState> {
    if eval.diagnostics.max_gauss > params.blowup_k {
        return Err(GcfError::CurvatureBlowup { max_k: eval.diagnostics.max_gauss, t: state.t });
    }
    let mut u = state.u.clone();
    let cap = u.height_cap();
    let sphere = params.sphere();
    for i in 0..u.len() {
        let mut v = u.values()[i] + dt * eval.speed[i];
        if let Some((c, s)) = &sphere {
            if u.is_boundary(i) && !u.is_capped(i) {
                v = s.graph_height(*c, u.radius(i), t_new)?;
            }
        }
        if let Some(c) = cap {
            v = v.min(c);
        }
        u.values_mut()[i] = v;
    }
    Ok(FlowState { t: t_new, u, step_count: state.step_count + 1, last_dt: dt, diagnostics: Some(eval.diagnostics) })
}

/// Advance by the stable step (never past `t_end`).
pub fn step(state: &FlowState, params: &FlowParams) -> Result<FlowState> {
    params.validate(&state.u)?;
    let eval = evaluate(&state.u, params, state.t)?;
    let mut dt = stable_dt_from(&eval, &state.u, params);
    let mut t_new = state.t + dt;
    if t_new >= params.t_end {
        dt = (params.t_end - state.t).max(0.0);
        t_new = params.t_end;
    }
    apply(state, &eval, params, dt, t_new)
}

/// Advance by a prescribed step.
pub fn step_with_dt(state: &FlowState, params: &FlowParams, dt: f64) -> Result<FlowState> {
    let eval = evaluate(&state.u, params, state.t)?;
    apply(state, &eval, params, dt, state.t + dt)
}

/// Stored state at a snapshot time.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub t: f64,
    pub step_count: u64,
    pub diagnostics: Option<Diagnostics>,
    pub u: GraphFunction,
}

/// Why a run stopped early.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlowFailure {
    pub t: f64,
    pub message: String,
    #[serde(skip)]
    pub error: Option<GcfError>,
}

/// Snapshots of a run, ending early if the solver aborted.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlowTrace {
    pub params: FlowParams,
    pub snapshots: Vec<Snapshot>,
    pub failure: Option<FlowFailure>,
    /// Final state, usable as a checkpoint.
    pub last_state: FlowState,
}

impl FlowTrace {
    pub fn is_complete(&self) -> bool {
        self.failure.is_none()
    }
    pub fn times(&self) -> Vec<f64> {
        self.snapshots.iter().map(|s| s.t).collect()
    }
    pub fn final_snapshot(&self) -> &Snapshot {
        self.snapshots.last().expect("trace always holds the initial snapshot")
    }
    pub fn at(&self, t: f64) -> Option<&Snapshot> {
        self.snapshots.iter().find(|s| s.t == t)
    }
    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint::new(self.params.clone(), self.last_state.clone())
    }
    /// Convert a failed run into its error.
    pub fn into_result(self) -> Result<FlowTrace> {
        match &self.failure {
            Some(f) => Err(f.error.clone().unwrap_or_else(|| GcfError::InvalidParameter(f.message.clone()))),
            None => Ok(self),
        }
    }
}

fn schedule(times: &[f64], t_start: f64, t_end: f64) -> Vec<f64> {
    let mut out: Vec<f64> = times.iter().copied().filter(|&t| t > t_start && t <= t_end && t.is_finite()).collect();
    out.push(t_end);
    out.sort_by(|a, b| a.partial_cmp(b).unwrap());
    out.dedup();
    out.retain(|&t| t > t_start);
    out
}

fn snap(s: &FlowState) -> Snapshot {
    Snapshot { t: s.t, step_count: s.step_count, diagnostics: s.diagnostics, u: s.u.clone() }
}

/// Evolve `u0` to `params.t_end`, recording the initial state, every
/// requested time in `(0, t_end]`, and `t_end`.
pub fn run(u0: &GraphFunction, params: &FlowParams, snapshot_times: &[f64]) -> FlowTrace {
    run_from(FlowState::new(u0.clone()), params, snapshot_times)
}

/// Continue from an existing state.
pub fn run_from(state: FlowState, params: &FlowParams, snapshot_times: &[f64]) -> FlowTrace {
    run_lockstep_from(vec![state], params, snapshot_times).pop().expect("one trace")
}

/// Evolve several initial data with a shared time step, so that the
/// discrete comparison principle holds exactly between them.
pub fn run_lockstep(u0s: &[GraphFunction], params: &FlowParams, snapshot_times: &[f64]) -> Vec<FlowTrace> {
    run_lockstep_from(u0s.iter().cloned().map(FlowState::new).collect(), params, snapshot_times)
}

pub fn run_lockstep_from(states: Vec<FlowState>, params: &FlowParams, snapshot_times: &[f64]) -> Vec<FlowTrace> {
    let mut traces: Vec<FlowTrace> = states
        .iter()
        .map(|s| FlowTrace { params: params.clone(), snapshots: vec![snap(s)], failure: None, last_state: s.clone() })
        .collect();
    let fail_all = |traces: &mut Vec<FlowTrace>, states: &[FlowState], who: usize, t: f64, e: GcfError| {
        for (k, (tr, s)) in traces.iter_mut().zip(states).enumerate() {
            tr.last_state = s.clone();
            let (message, error) = if k == who {
                (e.to_string(), Some(e.clone()))
            } else {
                (format!("stopped with lockstep member {who}: {e}"), None)
            };
            tr.failure = Some(FlowFailure { t, message, error });
        }
    };
    if let Some(e) = states.iter().find_map(|s| params.validate(&s.u).err()) {
        fail_all(&mut traces, &states, 0, 0.0, e);
        return traces;
    }
    let Some(t0) = states.first().map(|s| s.t) else { return traces };
    let mut current = states;
    for target in schedule(snapshot_times, t0, params.t_end) {
        while current[0].t < target {
            let t = current[0].t;
            let mut evals = Vec::with_capacity(current.len());
            for (k, s) in current.iter().enumerate() {
                match evaluate(&s.u, params, t) {
                    Ok(e) => evals.push(e),
                    Err(e) => {
                        fail_all(&mut traces, &current, k, t, e);
                        return traces;
                    }
                }
            }
            let mut dt = current
                .iter()
                .zip(&evals)
                .map(|(s, e)| stable_dt_from(e, &s.u, params))
                .fold(f64::INFINITY, f64::min);
            let mut t_new = t + dt;
            if t_new >= target || target - t_new <= 1e-12 * dt {
                dt = target - t;
                t_new = target;
            }
            for (k, (s, e)) in current.iter_mut().zip(&evals).enumerate() {
                match apply(s, e, params, dt, t_new) {
                    Ok(ns) => *s = ns,
                    Err(err) => {
                        fail_all(&mut traces, &current, k, t, err);
                        return traces;
                    }
                }
            }
        }
        for (tr, s) in traces.iter_mut().zip(&current) {
            tr.snapshots.push(snap(s));
            tr.last_state = s.clone();
        }
    }
    traces
}

/// Resumable run state.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub schema: String,
    pub params: FlowParams,
    pub state: FlowState,
    pub rng_seed: Option<u64>,
}

impl Checkpoint {
    pub fn new(params: FlowParams, state: FlowState) -> Self {
        Checkpoint { schema: CHECKPOINT_SCHEMA.to_string(), params, state, rng_seed: None }
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let c: Checkpoint = serde_json::from_str(s)?;
        if c.schema != CHECKPOINT_SCHEMA {
            return Err(GcfError::Serialization(format!("unknown checkpoint schema '{}'", c.schema)));
        }
        Ok(c)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    /// Continue the stored run to `t_end`.
    pub fn resume(&self, t_end: f64, snapshot_times: &[f64]) -> FlowTrace {
        let mut params = self.params.clone();
        params.t_end = t_end;
        run_from(self.state.clone(), &params, snapshot_times)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Domain;

    fn paraboloid(h: f64) -> GraphFunction {
        GraphFunction::from_fn(2, Domain::Radial { h, r_max: 1.0 }, None, |p| 0.5 * p[0] * p[0]).unwrap()
    }

    #[test]
    fn flat_is_stationary() {
        let u = GraphFunction::from_fn(2, Domain::Box { h: 0.1, lo: -1.0, hi: 1.0 }, None, |_| 0.0).unwrap();
        let tr = run(&u, &FlowParams::new(2, 1.0, 0.5), &[0.1, 0.2]);
        assert!(tr.is_complete());
        for s in &tr.snapshots {
            assert_eq!(s.u, u);
        }
    }

    #[test]
    fn paraboloid_origin_speed() {
        // at the origin K = 1, upsilon = 1
        let u = paraboloid(0.01);
        let s = rhs(&u, &FlowParams::new(2, 0.7, 1.0)).unwrap();
        assert!((s[0] - 1.0).abs() < 1e-10);
    }

    #[test]
    fn snapshots_hit_requested_times() {
        let tr = run(&paraboloid(0.05), &FlowParams::new(2, 1.0, 0.05), &[0.013, 0.02, 0.5]);
        assert_eq!(tr.times(), vec![0.0, 0.013, 0.02, 0.05]);
    }

    #[test]
    fn nonconvex_data_aborts() {
        let u = GraphFunction::from_fn(1, Domain::Interval { h: 0.1, lo: -1.0, hi: 1.0 }, None, |p| {
            (3.0 * p[0]).sin()
        })
        .unwrap();
        let tr = run(&u, &FlowParams::new(1, 1.0, 0.1), &[]);
        assert!(matches!(tr.failure.and_then(|f| f.error), Some(GcfError::NonConvex { .. })));
    }

    #[test]
    fn resume_matches_uninterrupted_run() {
        let u = paraboloid(0.05);
        let p = FlowParams::new(2, 1.0, 0.04);
        let full = run(&u, &p, &[0.01, 0.02, 0.03]);
        let mut p_half = p.clone();
        p_half.t_end = 0.02;
        let half = run(&u, &p_half, &[0.01]);
        let text = half.checkpoint().to_json().unwrap();
        let resumed = Checkpoint::from_json(&text).unwrap().resume(0.04, &[0.01, 0.02, 0.03]);
        assert_eq!(resumed.final_snapshot().u, full.final_snapshot().u);
        assert_eq!(resumed.final_snapshot().step_count, full.final_snapshot().step_count);
    }

    #[test]
    fn invalid_params_rejected() {
        let u = paraboloid(0.05);
        let mut p = FlowParams::new(3, 1.0, 0.1);
        assert!(p.validate(&u).is_err());
        p.n = 2;
        p.alpha = -1.0;
        assert!(p.validate(&u).is_err());
    }
}
