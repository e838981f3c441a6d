//! The five subcommands. Each validates its whole configuration before
//! touching the output directory, then writes a versioned JSON report, data
//! files and a gnuplot script.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use gcf_core::barriers::{barrier_eval, domain_preservation, sample_grid, verify_supersolution, BarrierSpec};
use gcf_core::doubling::{approximation_suite, DoublingConfig, SuiteConfig};
use gcf_core::estimates::{evolution_residuals, monitor_all, reports_csv, CutoffParams, Identity};
use gcf_core::io::{gnuplot_margins, gnuplot_profiles, profile_blocks, trace_csv, trace_from_json, trace_to_json, versioned, write_atomic};
use gcf_core::oracles::{soliton_solve, sphere_radius, SphereSolution};
use gcf_core::solver::Checkpoint;
use gcf_core::{run, FlowTrace, GraphFunction};
use serde_json::{json, Value};

use crate::config::{Config, Tolerances};
use crate::setup::{flow_params, initial_data, snapshot_times};

/// Result of a command that ran to completion.
pub struct Verdict {
    pub pass: bool,
    pub message: String,
}

impl Verdict {
    fn new(pass: bool, message: String) -> Self {
        Verdict { pass, message }
    }
}

/// A solver abort after the outputs were written.
#[derive(Debug)]
pub struct SolverAbort(pub String);

impl std::fmt::Display for SolverAbort {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "solver aborted: {}", self.0)
    }
}

impl std::error::Error for SolverAbort {}

/// Output directory, created on first write.
pub struct Output {
    dir: PathBuf,
}

impl Output {
    pub fn new(dir: PathBuf) -> Self {
        Output { dir }
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    fn write(&self, name: &str, contents: &str) -> Result<()> {
        fs::create_dir_all(&self.dir).with_context(|| format!("cannot create output directory {}", self.dir.display()))?;
        write_atomic(&self.path(name), contents).with_context(|| format!("cannot write {name}"))
    }
}

fn read_trace(path: &Path) -> Result<FlowTrace> {
    let text = fs::read_to_string(path).with_context(|| format!("cannot read trace file {}", path.display()))?;
    trace_from_json(&text).with_context(|| format!("cannot parse trace file {}", path.display()))
}

fn write_profiles(out: &Output, stem: &str, title: &str, graphs: &[&GraphFunction], labels: Vec<String>) -> Result<()> {
    let data = format!("{stem}.dat");
    out.write(&data, &profile_blocks(graphs))?;
    out.write(&format!("{stem}.gp"), &gnuplot_profiles(&data, title, &labels, &format!("{stem}.png")))
}

fn write_trace_files(out: &Output, trace: &FlowTrace) -> Result<()> {
    out.write("trace.csv", &trace_csv(trace))?;
    out.write("trace.json", &trace_to_json(trace)?)?;
    out.write("checkpoint.json", &trace.checkpoint().to_json()?)?;
    let graphs: Vec<&GraphFunction> = trace.snapshots.iter().map(|s| &s.u).collect();
    let labels = trace.snapshots.iter().map(|s| format!("t = {}", s.t)).collect();
    write_profiles(out, "profiles", "u profiles", &graphs, labels)
}

fn centre_index(u: &GraphFunction) -> Option<usize> {
    (0..u.len()).find(|&i| u.point(i).iter().all(|x| x.abs() < 1e-12))
}

/// `max |rho_num - rho(t)|` with `rho_num = centre height - u(0, t)`.
fn sphere_check(trace: &FlowTrace, radius: f64, center: f64) -> Result<Value> {
    let i0 = centre_index(&trace.snapshots[0].u).ok_or_else(|| anyhow!("grid has no node at the origin"))?;
    let (n, alpha) = (trace.params.n, trace.params.alpha);
    let mut max_err: f64 = 0.0;
    for s in &trace.snapshots {
        let exact = sphere_radius(radius, n, alpha, s.t)?;
        max_err = max_err.max((center - s.u.values()[i0] - exact).abs());
    }
    let last = trace.final_snapshot();
    Ok(json!({
        "radius_exact_final": sphere_radius(radius, n, alpha, last.t)?,
        "radius_numeric_final": center - last.u.values()[i0],
        "max_rho_error": max_err,
    }))
}

pub fn cmd_run(cfg: &Config, out: &Output) -> Result<Verdict> {
    let t_end: f64 = cfg.get("t_end", 0.1)?;
    let times = snapshot_times(cfg, t_end, 10)?;
    let (trace, name, sphere) = if let Some(path) = cfg.opt::<String>("resume")? {
        let text = fs::read_to_string(&path).with_context(|| format!("cannot read checkpoint {path}"))?;
        let ck = Checkpoint::from_json(&text).with_context(|| format!("cannot parse checkpoint {path}"))?;
        if t_end < ck.state.t {
            bail!("t_end = {t_end} lies before the checkpoint time {}", ck.state.t);
        }
        cfg.finish()?;
        (ck.resume(t_end, &times), "checkpoint".to_string(), None)
    } else {
        let data = initial_data(cfg, "hemisphere")?;
        let params = flow_params(cfg, &data, t_end)?;
        cfg.finish()?;
        (run(&data.u0, &params, &times), data.name, data.sphere)
    };

    write_trace_files(out, &trace)?;
    let last = trace.final_snapshot();
    let mut summary = json!({
        "preset": name,
        "n": trace.params.n,
        "alpha": trace.params.alpha,
        "t_end": trace.params.t_end,
        "complete": trace.is_complete(),
        "failure": trace.failure.as_ref().map(|f| json!({"t": f.t, "message": f.message})),
        "final_t": last.t,
        "step_count": last.step_count,
        "snapshots": trace.snapshots.len(),
        "final_diagnostics": last.diagnostics,
    });
    if let Some((radius, center)) = sphere {
        summary["sphere_check"] = sphere_check(&trace, radius, center)?;
    }
    out.write("summary.json", &versioned("summary", &summary)?)?;
    if let Some(f) = &trace.failure {
        return Err(match &f.error {
            Some(e) => anyhow::Error::new(e.clone()).context(SolverAbort(f.message.clone())),
            None => anyhow::Error::new(SolverAbort(f.message.clone())),
        });
    }
    Ok(Verdict::new(true, format!("run reached t = {} in {} steps", last.t, last.step_count)))
}

pub fn cmd_verify(cfg: &Config, out: &Output, tol: &Tolerances) -> Result<Verdict> {
    let trace_path = cfg.get::<String>("trace", out.path("trace.json").to_string_lossy().into_owned())?;
    let cut = CutoffParams::new(cfg.get("m", 1.0)?, cfg.get("beta", 0.5)?);
    if !(cut.m.is_finite() && cut.beta > 0.0) {
        bail!("need finite m and beta > 0");
    }
    let residual_paths: Vec<String> = cfg.list("residual_traces", vec![])?;
    let window: Vec<f64> = cfg.list("r_window", vec![0.0, 0.4])?;
    if window.len() != 2 || window[0] > window[1] {
        bail!("r_window must be two increasing radii");
    }
    cfg.finish()?;
    if residual_paths.len() == 1 {
        bail!("residual_traces needs at least two traces of increasing resolution");
    }
    let trace = read_trace(Path::new(&trace_path))?;
    let residual_traces = residual_paths.iter().map(|p| read_trace(Path::new(p))).collect::<Result<Vec<_>>>()?;

    let reports = monitor_all(&trace, &cut)?;
    let failed: Vec<String> = reports
        .iter()
        .filter(|r| !r.passes(tol.tol_disc))
        .map(|r| format!("{} at t = {} (margin {:.3e})", r.kind.name(), r.t, r.margin))
        .collect();

    let mut residuals = Value::Null;
    let mut residual_failures = Vec::new();
    if !residual_traces.is_empty() {
        let mut levels = Vec::new();
        for tr in &residual_traces {
            let entries = evolution_residuals(tr, &Identity::ALL, &cut, (window[0], window[1]))?;
            levels.push((tr.snapshots[0].u.spacing(), entries));
        }
        let mut orders = serde_json::Map::new();
        for (k, id) in Identity::ALL.iter().enumerate() {
            let os: Vec<f64> = levels
                .windows(2)
                .map(|w| (w[0].1[k].max_residual / w[1].1[k].max_residual).ln() / (w[0].0 / w[1].0).ln())
                .collect();
            if os.iter().any(|o| !(*o >= tol.residual_order)) {
                residual_failures.push(format!("{id:?} orders {os:?}"));
            }
            orders.insert(format!("{id:?}"), json!(os));
        }
        residuals = json!({
            "r_window": window,
            "levels": levels.iter().map(|(h, e)| json!({"h": h, "entries": e})).collect::<Vec<_>>(),
            "orders": orders,
            "order_threshold": tol.residual_order,
        });
    }

    let pass = failed.is_empty() && residual_failures.is_empty();
    let report = json!({
        "trace": trace_path,
        "cutoff": {"m": cut.m, "beta": cut.beta},
        "tol_disc": tol.tol_disc,
        "reports": reports,
        "failed_reports": failed,
        "residuals": residuals,
        "pass": pass,
    });
    out.write("estimates.json", &versioned("estimates", &report)?)?;
    out.write("estimates.csv", &reports_csv(&reports))?;
    let mut names: Vec<&str> = reports.iter().map(|r| r.kind.name()).collect();
    names.dedup();
    out.write("margins.gp", &gnuplot_margins("estimates.csv", &names, "margins.png"))?;

    let msg = if pass {
        format!("{} estimate reports within tolerance", reports.len())
    } else {
        format!("verification failed: {}", [failed, residual_failures].concat().join("; "))
    };
    Ok(Verdict::new(pass, msg))
}

pub fn cmd_double(cfg: &Config, out: &Output, tol: &Tolerances) -> Result<Verdict> {
    let data = initial_data(cfg, "circle-arc")?;
    let d = SuiteConfig::default();
    let suite = SuiteConfig {
        alpha: cfg.get("alpha", d.alpha)?,
        j_list: cfg.list("j_list", d.j_list.clone())?,
        k: cfg.get("k", d.k)?,
        t_end: cfg.opt("t_end")?,
        snapshots: cfg.get("snapshots", d.snapshots)?,
        cfl: cfg.get("cfl", d.cfl)?,
        wall_margin: cfg.get("wall_margin", d.wall_margin)?,
        tol: tol.ordering,
    };
    cfg.finish()?;
    for &j in &suite.j_list {
        DoublingConfig::new(j, suite.k)?;
    }
    let res = approximation_suite(&data.u0, &suite)?;
    let rep = &res.report;

    let mut graphs: Vec<&GraphFunction> = vec![&data.u0];
    let mut labels = vec!["u_0".to_string()];
    for (lvl, snaps) in rep.levels.iter().zip(&res.u_j) {
        if let Some(u) = snaps.last() {
            graphs.push(u);
            labels.push(format!("u^{} (t = {})", lvl.j, rep.t_end));
        }
    }
    graphs.push(&res.direct.final_snapshot().u);
    labels.push("direct".into());
    write_profiles(out, "fan", "approximation fan", &graphs, labels)?;

    let finest = rep.levels.last().ok_or_else(|| anyhow!("j_list is empty"))?;
    let bound = 1.0 / finest.j as f64 + tol.deviation;
    let deviation_ok = finest.max_deviation <= bound;
    let pass = rep.monotonicity_violations == 0 && rep.survived_horizon && deviation_ok;
    let report = json!({
        "preset": data.name,
        "suite": rep,
        "deviation_bound": bound,
        "pass": pass,
    });
    out.write("doubling.json", &versioned("doubling", &report)?)?;
    Ok(Verdict::new(
        pass,
        format!(
            "doubling: {} ordering violations, finest deviation {:.3e} (bound {bound:.3e}), horizon survived {}",
            rep.monotonicity_violations, finest.max_deviation, rep.survived_horizon
        ),
    ))
}

pub fn cmd_barrier(cfg: &Config, out: &Output) -> Result<Verdict> {
    let alpha: f64 = cfg.get("alpha", 1.0)?;
    let r0: f64 = cfg.get("r0", 0.5)?;
    let t0: f64 = cfg.get("t0", 0.05)?;
    let delta_list: Vec<f64> = cfg.list("delta_list", vec![1e-2, 1e-3, 1e-4])?;
    let m_fixed: Option<f64> = cfg.opt("m")?;
    let samples: usize = cfg.get("samples", 100)?;
    let trace_path: Option<String> = cfg.opt("trace")?;
    let (trace, n) = match &trace_path {
        Some(p) => {
            cfg.finish()?;
            let tr = read_trace(Path::new(p))?;
            let n = tr.params.n;
            (Err(tr), n)
        }
        None => {
            let data = initial_data(cfg, "tan-profile")?;
            let params = flow_params(cfg, &data, t0)?;
            let times = snapshot_times(cfg, t0, 5)?;
            cfg.finish()?;
            let n = params.n;
            (Ok((data, params, times)), n)
        }
    };
    // smallness does not depend on m, so it can be checked before any run
    for &delta in &delta_list {
        BarrierSpec::new(n, alpha, r0, delta, m_fixed.unwrap_or(1.0), t0)?;
    }
    let trace = match trace {
        Err(tr) => tr,
        Ok((data, params, times)) => {
            let tr = run(&data.u0, &params, &times);
            if let Some(f) = &tr.failure {
                return Err(anyhow!(SolverAbort(f.message.clone())));
            }
            tr
        }
    };
    if trace.params.alpha != alpha {
        bail!("trace was run with alpha = {}, barrier uses alpha = {alpha}", trace.params.alpha);
    }

    let verdict = domain_preservation(&trace, r0, t0, &delta_list)?;
    let mut margins = Vec::new();
    let mut all_positive = true;
    let mut data = profile_blocks(&[&trace.final_snapshot().u]);
    let mut labels = vec![format!("u (t = {})", trace.final_snapshot().t)];
    for row in &verdict.rows {
        let spec = BarrierSpec::new(n, alpha, r0, row.delta, m_fixed.unwrap_or(row.m), t0)?;
        let (hs, ts) = sample_grid(&spec, samples);
        let m = verify_supersolution(&spec, &hs, &ts)?;
        all_positive &= m.all_positive();
        margins.push(json!({"delta": row.delta, "m": spec.m, "margins": m, "all_positive": m.all_positive()}));
        data.push_str("\n\n");
        data.push_str(&barrier_curve(&spec)?);
        labels.push(format!("barrier delta = {} (t = {t0})", row.delta));
    }
    out.write("barrier.dat", &data)?;
    out.write("barrier.gp", &gnuplot_profiles("barrier.dat", "barrier drums", &labels, "barrier.png"))?;

    let pass = verdict.pass && all_positive;
    let report = json!({
        "preservation": verdict,
        "supersolution": margins,
        "pass": pass,
    });
    out.write("barrier.json", &versioned("barrier", &report)?)?;
    Ok(Verdict::new(
        pass,
        format!(
            "barrier: preservation {}, supersolution margins positive {all_positive}, radius ratio {:.5}",
            verdict.pass, verdict.final_radius_ratio
        ),
    ))
}

/// The drum side `r = f(h, t0)` as `r h` rows on 64 heights.
fn barrier_curve(spec: &BarrierSpec) -> Result<String> {
    let mut s = String::new();
    for k in 0..=64 {
        let h = spec.m - 1.0 + k as f64 / 64.0;
        s.push_str(&format!("{:e} {h:e}\n", barrier_eval(spec, h, spec.t0)?));
    }
    Ok(s)
}

pub fn cmd_oracle(cfg: &Config, out: &Output, tol: &Tolerances) -> Result<Verdict> {
    let kind: String = cfg.get("kind", "sphere".to_string())?;
    let n: usize = cfg.get("n", 2)?;
    let alpha: f64 = cfg.get("alpha", 1.0)?;
    match kind.as_str() {
        "sphere" => {
            let radius: f64 = cfg.get("radius", 1.0)?;
            let sol = SphereSolution { r0: radius, n, alpha };
            let ext = sol.extinction_time();
            let t_end: f64 = cfg.get("t_end", 0.9 * ext)?;
            let times = snapshot_times(cfg, t_end, 20)?;
            cfg.finish()?;
            let mut rows = vec![(0.0, sol.radius(0.0)?)];
            for &t in &times {
                rows.push((t, sol.radius(t)?));
            }
            let data: String = rows.iter().map(|(t, r)| format!("{t:e} {r:e}\n")).collect();
            out.write("oracle.dat", &data)?;
            out.write("oracle.gp", &gnuplot_profiles("oracle.dat", "sphere radius", &["rho(t)".into()], "oracle.png"))?;
            let report = json!({
                "kind": "sphere",
                "n": n, "alpha": alpha, "radius": radius,
                "extinction_time": ext,
                "rows": rows.iter().map(|(t, r)| json!({"t": t, "rho": r})).collect::<Vec<_>>(),
                "pass": true,
            });
            out.write("oracle.json", &versioned("oracle", &report)?)?;
            Ok(Verdict::new(true, format!("sphere: extinction at t = {ext}")))
        }
        "soliton" => {
            let c: f64 = cfg.get("c", 1.0)?;
            let h: f64 = cfg.get("h", 5e-3)?;
            let r_max: f64 = cfg.get("r_max", 10.0)?;
            let ode_tol: f64 = cfg.get("tol", 1e-10)?;
            cfg.finish()?;
            let prof = soliton_solve(n, alpha, c, r_max, h, ode_tol)?;
            let wall = prof.blowup_radius.unwrap_or(prof.last_radius());
            let r_b = (0.5 * wall / h).floor() * h;
            let data: String = prof
                .heights
                .iter()
                .zip(&prof.slopes)
                .enumerate()
                .map(|(k, (u, p))| format!("{:e} {u:e} {p:e}\n", k as f64 * h))
                .collect();
            out.write("soliton.dat", &data)?;
            out.write("oracle.gp", &gnuplot_profiles("soliton.dat", "soliton profile", &["u(r)".into()], "oracle.png"))?;
            let pass = prof.residual <= tol.ode;
            let report = json!({
                "kind": "soliton",
                "n": n, "alpha": alpha, "c": c, "h": h,
                "blowup_radius": prof.blowup_radius,
                "last_radius": prof.last_radius(),
                "ode_residual": prof.residual,
                "tol_ode": tol.ode,
                "fd_residual_half_wall": if r_b > 2.0 * h { Some(prof.fd_residual(r_b)) } else { None },
                "pass": pass,
            });
            out.write("oracle.json", &versioned("oracle", &report)?)?;
            Ok(Verdict::new(
                pass,
                format!("soliton: ODE residual {:.3e} (tol {:.1e}), blow-up radius {:?}", prof.residual, tol.ode, prof.blowup_radius),
            ))
        }
        other => bail!("unknown oracle kind '{other}' (known: sphere, soliton)"),
    }
}
