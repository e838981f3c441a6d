//! Export of traces and reports: CSV, versioned JSON, gnuplot scripts.
//!
//! Everything here is a pure function of its input so repeated runs give
//! byte-identical files.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::Value;

use crate::error::{GcfError, Result};
use crate::geometry::{compute_quantities_with_tol, Domain, GraphFunction};
use crate::solver::{FlowTrace, CHECKPOINT_SCHEMA};

/// Writes `contents` to `path` through a temporary file in the same directory.
pub fn write_atomic(path: &Path, contents: &str) -> Result<()> {
    let name = path
        .file_name()
        .ok_or_else(|| GcfError::Io(format!("{} has no file name", path.display())))?
        .to_string_lossy();
    let tmp = path.with_file_name(format!(".{name}.tmp"));
    fs::write(&tmp, contents)?;
    fs::rename(&tmp, path).inspect_err(|_| {
        let _ = fs::remove_file(&tmp);
    })?;
    Ok(())
}

/// `{"schema": "gcf-lab/1", <key>: value}`.
pub fn versioned<T: Serialize>(key: &str, value: &T) -> Result<String> {
    let mut map = serde_json::Map::new();
    map.insert("schema".into(), Value::String(CHECKPOINT_SCHEMA.into()));
    map.insert(key.into(), serde_json::to_value(value)?);
    Ok(serde_json::to_string_pretty(&Value::Object(map))?)
}

/// Inverse of [`versioned`]; rejects other schema tags.
pub fn unversioned<T: DeserializeOwned>(key: &str, text: &str) -> Result<T> {
    let v: Value = serde_json::from_str(text)?;
    match v.get("schema").and_then(Value::as_str) {
        Some(CHECKPOINT_SCHEMA) => {}
        Some(s) => return Err(GcfError::Serialization(format!("unknown schema '{s}'"))),
        None => return Err(GcfError::Serialization("missing \"schema\" field".into())),
    }
    let inner = v.get(key).ok_or_else(|| GcfError::Serialization(format!("missing \"{key}\" field")))?;
    Ok(T::deserialize(inner)?)
}

pub fn trace_to_json(trace: &FlowTrace) -> Result<String> {
    versioned("trace", trace)
}

pub fn trace_from_json(text: &str) -> Result<FlowTrace> {
    unversioned("trace", text)
}

fn num(out: &mut String, v: f64) {
    if v.is_finite() {
        let _ = write!(out, "{v:e}");
    }
}

fn coord_header(u: &GraphFunction) -> &'static str {
    match u.domain() {
        Domain::Box { .. } => "x,y",
        _ => "x",
    }
}

/// One row per node and snapshot: `t,x[,y],u,K,H,lambda_min,upsilon`.
/// Geometry columns are empty where unavailable (edges, capped nodes);
/// radial grids report the radius in `x`.
pub fn trace_csv(trace: &FlowTrace) -> String {
    let mut out = String::new();
    let Some(first) = trace.snapshots.first() else {
        return "t,x,u,K,H,lambda_min,upsilon\n".into();
    };
    let _ = writeln!(out, "t,{},u,K,H,lambda_min,upsilon", coord_header(&first.u));
    for s in &trace.snapshots {
        let q = compute_quantities_with_tol(&s.u, f64::INFINITY).ok();
        for i in 0..s.u.len() {
            num(&mut out, s.t);
            for c in s.u.table_coords(i) {
                out.push(',');
                num(&mut out, c);
            }
            out.push(',');
            num(&mut out, s.u.values()[i]);
            for col in 0..4 {
                out.push(',');
                if let Some(q) = q.as_ref().filter(|q| q.available[i]) {
                    let v = [q.gauss_curvature[i], q.mean_curvature[i], q.lambda_min[i], q.upsilon[i]][col];
                    num(&mut out, v);
                }
            }
            out.push('\n');
        }
    }
    out
}

/// Whitespace-separated `x u` columns (uncapped nodes only), one block per
/// graph separated by two blank lines, the gnuplot `index` convention.
/// Box grids are written as their `y = 0` row if present, else the middle row.
pub fn profile_blocks(graphs: &[&GraphFunction]) -> String {
    let mut out = String::new();
    for (b, u) in graphs.iter().enumerate() {
        if b > 0 {
            out.push_str("\n\n");
        }
        let nodes: Vec<usize> = match u.domain() {
            Domain::Box { .. } => {
                let n = u.nodes_per_axis();
                let mid = (0..n).min_by(|a, b| {
                    let ya = u.point(a * n)[0].abs();
                    let yb = u.point(b * n)[0].abs();
                    ya.total_cmp(&yb)
                });
                let row = mid.unwrap_or(n / 2);
                (row * n..(row + 1) * n).collect()
            }
            _ => (0..u.len()).collect(),
        };
        for i in nodes.into_iter().filter(|&i| !u.is_capped(i)) {
            let x = match u.domain() {
                Domain::Box { .. } => u.point(i)[1],
                _ => u.table_coords(i)[0],
            };
            let _ = writeln!(out, "{x:e} {:e}", u.values()[i]);
        }
    }
    out
}

/// Script drawing every block of `data_file` as a line, labelled by `labels`.
pub fn gnuplot_profiles(data_file: &str, title: &str, labels: &[String], output_png: &str) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "set terminal pngcairo size 900,600");
    let _ = writeln!(s, "set output '{output_png}'");
    let _ = writeln!(s, "set title '{title}'");
    let _ = writeln!(s, "set xlabel 'x'");
    let _ = writeln!(s, "set ylabel 'u'");
    let _ = writeln!(s, "set key outside right");
    let parts: Vec<String> = labels
        .iter()
        .enumerate()
        .map(|(i, l)| format!("'{data_file}' index {i} using 1:2 with lines title '{l}'"))
        .collect();
    let _ = writeln!(s, "plot {}", parts.join(", \\\n     "));
    s
}

/// Script plotting `margin` against `t` for every monitor in a
/// `name,t,lhs,rhs,margin,argmax` CSV.
pub fn gnuplot_margins(csv_file: &str, names: &[&str], output_png: &str) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "set terminal pngcairo size 900,600");
    let _ = writeln!(s, "set output '{output_png}'");
    let _ = writeln!(s, "set datafile separator ','");
    let _ = writeln!(s, "set title 'estimate margins'");
    let _ = writeln!(s, "set xlabel 't'");
    let _ = writeln!(s, "set ylabel 'margin'");
    let parts: Vec<String> = names
        .iter()
        .map(|n| format!("'{csv_file}' using 2:(strcol(1) eq '{n}' ? $5 : 1/0) with linespoints title '{n}'"))
        .collect();
    let _ = writeln!(s, "plot {}", parts.join(", \\\n     "));
    s
}
