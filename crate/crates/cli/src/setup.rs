//! Initial data and flow parameters from a [`Config`].

use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};
use gcf_core::io::unversioned;
use gcf_core::presets::Preset;
use gcf_core::solver::WallModel;
use gcf_core::{BoundaryCondition, FlowParams, GraphFunction};

use crate::config::Config;

/// Initial data plus what the preset implies for the flow.
pub struct InitialData {
    pub name: String,
    pub u0: GraphFunction,
    pub boundary: BoundaryCondition,
    /// `(radius, centre height)` when the data is a hemisphere.
    pub sphere: Option<(f64, f64)>,
}

pub fn read_graph(path: &Path) -> Result<GraphFunction> {
    let text = fs::read_to_string(path).with_context(|| format!("cannot read graph file {}", path.display()))?;
    if let Ok(u) = unversioned::<GraphFunction>("graph", &text) {
        return Ok(u);
    }
    serde_json::from_str(&text).with_context(|| format!("{} is not a graph file", path.display()))
}

pub fn initial_data(cfg: &Config, default_preset: &str) -> Result<InitialData> {
    let name = cfg.get::<String>("preset", default_preset.to_string())?;
    let extrapolate = BoundaryCondition::Extrapolate;
    let (preset, boundary, sphere) = match name.as_str() {
        "paraboloid" => (
            Preset::Paraboloid { n: cfg.get("n", 2)?, h: cfg.get("h", 0.02)?, r_max: cfg.get("r_max", 1.0)? },
            extrapolate,
            None,
        ),
        "hemisphere" => {
            let radius: f64 = cfg.get("radius", 1.0)?;
            let p = Preset::Hemisphere { n: cfg.get("n", 2)?, h: cfg.get("h", 0.01)?, r_max: cfg.get("r_max", 0.5)?, radius };
            (p, BoundaryCondition::ShrinkingSphere { center_height: radius, radius }, Some((radius, radius)))
        }
        "soliton" => {
            let c: f64 = cfg.get("c", 1.0)?;
            let p = Preset::Soliton {
                n: cfg.get("n", 2)?,
                h: cfg.get("h", 0.01)?,
                r_max: cfg.get("r_max", 0.5)?,
                alpha: cfg.get("alpha", 1.0)?,
                c,
            };
            (p, BoundaryCondition::Translating { speed: c }, None)
        }
        "tan-profile" | "tan_profile" => (
            Preset::TanProfile {
                n: cfg.get("n", 2)?,
                h: cfg.get("h", 0.01)?,
                r_omega: cfg.get("r_omega", 1.0)?,
                cap: cfg.get("cap", 50.0)?,
            },
            extrapolate,
            None,
        ),
        "flat" => (
            Preset::Flat { h: cfg.get("h", 0.1)?, half_width: cfg.get("half_width", 1.0)?, value: cfg.get("value", 0.0)? },
            extrapolate,
            None,
        ),
        "circle-arc" | "circle_arc" => (
            Preset::CircleArc { h: cfg.get("h", 4e-3)?, radius: cfg.get("radius", 1.0)?, cap: cfg.get("cap", 100.0)? },
            extrapolate,
            None,
        ),
        "custom-file" | "custom_file" => {
            let path: String = cfg.opt("file")?.context("preset custom-file needs file = PATH")?;
            let u0 = read_graph(Path::new(&path))?;
            return Ok(InitialData { name, u0, boundary: extrapolate, sphere: None });
        }
        other => bail!(
            "unknown preset '{other}' (known: paraboloid, hemisphere, soliton, tan-profile, flat, circle-arc, custom-file)"
        ),
    };
    let u0 = preset.build().with_context(|| format!("cannot build preset '{name}'"))?;
    Ok(InitialData { name, u0, boundary, sphere })
}

fn boundary(cfg: &Config, default: BoundaryCondition) -> Result<BoundaryCondition> {
    let Some(kind) = cfg.opt::<String>("boundary")? else {
        return Ok(match default {
            BoundaryCondition::ShrinkingSphere { center_height, radius } => BoundaryCondition::ShrinkingSphere {
                center_height: cfg.get("sphere_center", center_height)?,
                radius: cfg.get("sphere_radius", radius)?,
            },
            BoundaryCondition::Translating { speed } => BoundaryCondition::Translating { speed: cfg.get("speed", speed)? },
            other => other,
        });
    };
    Ok(match kind.replace('-', "_").as_str() {
        "extrapolate" => BoundaryCondition::Extrapolate,
        "frozen" => BoundaryCondition::Frozen,
        "shrinking_sphere" => BoundaryCondition::ShrinkingSphere {
            center_height: cfg.opt("sphere_center")?.context("shrinking-sphere boundary needs sphere_center")?,
            radius: cfg.opt("sphere_radius")?.context("shrinking-sphere boundary needs sphere_radius")?,
        },
        "translating" => BoundaryCondition::Translating { speed: cfg.opt("speed")?.context("translating boundary needs speed")? },
        other => bail!("unknown boundary '{other}' (known: extrapolate, frozen, shrinking-sphere, translating)"),
    })
}

/// Flow parameters for `u0`; validated against the grid.
pub fn flow_params(cfg: &Config, data: &InitialData, t_end: f64) -> Result<FlowParams> {
    let mut p = FlowParams::new(data.u0.dim(), cfg.get("alpha", 1.0)?, t_end).with_boundary(boundary(cfg, data.boundary.clone())?);
    p.cfl_safety = cfg.get("cfl", p.cfl_safety)?;
    p.dt_max = cfg.get("dt_max", p.dt_max)?;
    p.blowup_k = cfg.get("blowup_k", p.blowup_k)?;
    p.tol_convex = cfg.opt("tol_convex")?;
    p.wall = match cfg.get::<String>("wall", "cap".into())?.as_str() {
        "cap" => WallModel::Cap,
        "tangent" => WallModel::Tangent,
        other => bail!("unknown wall model '{other}' (known: cap, tangent)"),
    };
    p.validate(&data.u0)?;
    Ok(p)
}

/// `times = a,b,...` or `snapshots = N` evenly spaced points in `(0, t_end]`.
pub fn snapshot_times(cfg: &Config, t_end: f64, default_count: usize) -> Result<Vec<f64>> {
    if cfg.has("times") {
        let times: Vec<f64> = cfg.list("times", vec![])?;
        cfg.ignore(&["snapshots"]);
        if times.iter().any(|t| !(t.is_finite() && *t >= 0.0)) {
            bail!("snapshot times must be finite and non-negative");
        }
        return Ok(times);
    }
    let count: usize = cfg.get("snapshots", default_count)?;
    Ok((1..=count).map(|k| t_end * k as f64 / count as f64).collect())
}
