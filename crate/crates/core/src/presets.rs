//! Named initial data.

use serde::{Deserialize, Serialize};

use crate::error::{GcfError, Result};
use crate::geometry::{Domain, GraphFunction};
use crate::oracles::{hemisphere_graph, soliton_solve};

/// Initial data selectable by name.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "preset", rename_all = "kebab-case")]
pub enum Preset {
    /// `|x|^2 / 2` on a radial grid.
    Paraboloid { n: usize, h: f64, r_max: f64 },
    /// Lower hemisphere of radius `radius` with centre at height `radius`.
    Hemisphere { n: usize, h: f64, r_max: f64, radius: f64 },
    /// Translating soliton profile truncated at `r_max`.
    Soliton { n: usize, h: f64, r_max: f64, alpha: f64, c: f64 },
    /// `tan(pi |x|^2 / (2 r_omega^2))`, a bounded-domain graph capped at `cap`.
    TanProfile { n: usize, h: f64, r_omega: f64, cap: f64 },
    /// Constant function on a box.
    Flat { h: f64, half_width: f64, value: f64 },
    /// Lower semicircle of radius `radius` touching zero, walls at `x = +-radius`.
    CircleArc { h: f64, radius: f64, cap: f64 },
}

impl Preset {
    pub fn build(&self) -> Result<GraphFunction> {
        match *self {
            Preset::Paraboloid { n, h, r_max } => {
                GraphFunction::from_fn(n, Domain::Radial { h, r_max }, None, |p| 0.5 * p[0] * p[0])
            }
            Preset::Hemisphere { n, h, r_max, radius } => {
                hemisphere_graph(radius, radius, n, Domain::Radial { h, r_max })
            }
            Preset::Soliton { n, h, r_max, alpha, c } => {
                let prof = soliton_solve(n, alpha, c, 4.0 * r_max.max(1.0), h, 1e-11)?;
                prof.graph(r_max, None)
            }
            Preset::TanProfile { n, h, r_omega, cap } => tan_profile(n, h, r_omega, cap),
            Preset::Flat { h, half_width, value } => {
                GraphFunction::from_fn(2, Domain::Box { h, lo: -half_width, hi: half_width }, None, |_| value)
            }
            Preset::CircleArc { h, radius, cap } => circle_arc(h, radius, cap),
        }
    }
}

/// Radial `tan(pi r^2 / (2 r_omega^2))`, capped; the last node sits on `|x| = r_omega`.
pub fn tan_profile(n: usize, h: f64, r_omega: f64, cap: f64) -> Result<GraphFunction> {
    GraphFunction::from_fn(n, Domain::Radial { h, r_max: r_omega }, Some(cap), |p| {
        let s = p[0] / r_omega;
        if s >= 1.0 {
            cap
        } else {
            (std::f64::consts::FRAC_PI_2 * s * s).tan()
        }
    })
}

/// Lower semicircle `R - sqrt(R^2 - x^2)` on `[-R, R]` (minimum 0); the end
/// nodes are capped, standing in for vertical walls.
pub fn circle_arc(h: f64, radius: f64, cap: f64) -> Result<GraphFunction> {
    if !(cap > 0.0) {
        return Err(GcfError::InvalidParameter("cap must be positive".into()));
    }
    GraphFunction::from_fn(1, Domain::Interval { h, lo: -radius, hi: radius }, Some(cap), |p| {
        let d = radius * radius - p[0] * p[0];
        if d <= 1e-14 * radius * radius {
            cap
        } else {
            radius - d.sqrt()
        }
    })
}

/// Piecewise-quadratic convex function on an interval built from breakpoints
/// and non-negative curvature densities: `u'' = curvatures[k]` on the k-th
/// cell of `knots`, with `u(lo) = value`, `u'(lo) = slope`.
pub fn convex_spline(
    domain: Domain,
    knots: &[f64],
    curvatures: &[f64],
    value: f64,
    slope: f64,
) -> Result<GraphFunction> {
    let Domain::Interval { lo, .. } = domain else {
        return Err(GcfError::InvalidGrid("convex_spline needs an interval grid".into()));
    };
    let f = spline(lo, knots, curvatures, value, slope)?;
    GraphFunction::from_fn(1, domain, None, |p| f(p[0]))
}

/// Radial version of [`convex_spline`] in `n` dimensions: `u(0) = value`,
/// `u_r(0) = 0`, `u_rr = curvatures[k]` on the k-th cell.
pub fn radial_convex_spline(
    n: usize,
    domain: Domain,
    knots: &[f64],
    curvatures: &[f64],
    value: f64,
) -> Result<GraphFunction> {
    if !matches!(domain, Domain::Radial { .. }) {
        return Err(GcfError::InvalidGrid("radial_convex_spline needs a radial grid".into()));
    }
    let f = spline(0.0, knots, curvatures, value, 0.0)?;
    GraphFunction::from_fn(n, domain, None, |p| f(p[0]))
}

fn spline(lo: f64, knots: &[f64], curvatures: &[f64], value: f64, slope: f64) -> Result<impl Fn(f64) -> f64> {
    if curvatures.is_empty() || knots.len() != curvatures.len() + 1 || knots.windows(2).any(|w| w[1] <= w[0]) {
        return Err(GcfError::InvalidParameter("knots must increase and bracket the curvature cells".into()));
    }
    if curvatures.iter().any(|c| !(*c >= 0.0)) {
        return Err(GcfError::InvalidParameter("curvatures must be non-negative".into()));
    }
    let knots = knots.to_vec();
    let curvatures = curvatures.to_vec();
    let last = curvatures.len() - 1;
    let cell = {
        let knots = knots.clone();
        move |x: f64| -> usize { knots.partition_point(|k| *k <= x).saturating_sub(1).min(last) }
    };
    // value and slope at each knot
    let mut vals = vec![0.0; knots.len()];
    let mut slopes = vec![0.0; knots.len()];
    let c0 = cell(lo);
    let d0 = knots[c0] - lo;
    slopes[c0] = slope + curvatures[c0] * d0;
    vals[c0] = value + slope * d0 + 0.5 * curvatures[c0] * d0 * d0;
    for k in c0..curvatures.len() {
        let d = knots[k + 1] - knots[k];
        slopes[k + 1] = slopes[k] + curvatures[k] * d;
        vals[k + 1] = vals[k] + slopes[k] * d + 0.5 * curvatures[k] * d * d;
    }
    for k in (0..c0).rev() {
        let d = knots[k + 1] - knots[k];
        slopes[k] = slopes[k + 1] - curvatures[k] * d;
        vals[k] = vals[k + 1] - slopes[k] * d - 0.5 * curvatures[k] * d * d;
    }
    Ok(move |x: f64| {
        let k = cell(x);
        let d = x - knots[k];
        vals[k] + slopes[k] * d + 0.5 * curvatures[k] * d * d
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::compute_quantities;

    #[test]
    fn tan_profile_is_capped_at_rim() {
        let u = tan_profile(2, 0.01, 1.0, 50.0).unwrap();
        assert!(u.is_capped(u.len() - 1));
        assert!(!u.is_capped(0));
        assert_eq!(u.values()[0], 0.0);
    }

    #[test]
    fn spline_matches_quadratic() {
        let d = Domain::Interval { h: 0.01, lo: -1.0, hi: 1.0 };
        let u = convex_spline(d, &[-1.0, 0.0, 1.0], &[2.0, 2.0], 1.0, -2.0).unwrap();
        for i in 0..u.len() {
            let x = u.point(i)[0];
            assert!((u.values()[i] - x * x).abs() < 1e-12);
        }
    }

    #[test]
    fn spline_is_convex() {
        let d = Domain::Interval { h: 0.01, lo: -1.0, hi: 1.0 };
        let u = convex_spline(d, &[-1.0, -0.3, 0.2, 1.0], &[0.5, 3.0, 1.0], 0.0, -1.0).unwrap();
        compute_quantities(&u).unwrap();
    }

    #[test]
    fn radial_spline_matches_paraboloid() {
        let d = Domain::Radial { h: 0.01, r_max: 1.0 };
        let u = radial_convex_spline(2, d, &[0.0, 0.4, 1.0], &[1.0, 1.0], 0.5).unwrap();
        for i in 0..u.len() {
            let r = u.radius(i);
            assert!((u.values()[i] - 0.5 - 0.5 * r * r).abs() < 1e-12);
        }
    }

    #[test]
    fn presets_build() {
        let ps = [
            Preset::Paraboloid { n: 2, h: 0.05, r_max: 3.0 },
            Preset::Hemisphere { n: 3, h: 0.01, r_max: 0.5, radius: 1.0 },
            Preset::Soliton { n: 2, h: 0.01, r_max: 0.5, alpha: 1.0, c: 1.0 },
            Preset::TanProfile { n: 2, h: 0.01, r_omega: 1.0, cap: 50.0 },
            Preset::Flat { h: 0.1, half_width: 1.0, value: 0.0 },
            Preset::CircleArc { h: 0.01, radius: 1.0, cap: 100.0 },
        ];
        for p in ps {
            p.build().unwrap();
        }
    }
}
