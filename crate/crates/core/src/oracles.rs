//! Exact and semi-exact solutions used to validate the solver.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{GcfError, Result};
use crate::geometry::{Domain, GraphFunction};
use crate::ode::{Advance, Dopri};

/// Slope at which a soliton profile is declared to have reached its wall.
pub const BLOWUP_SLOPE: f64 = 1e6;

/// Round sphere shrinking under the flow.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SphereSolution {
    pub r0: f64,
    pub n: usize,
    pub alpha: f64,
}

impl SphereSolution {
    fn exponent(&self) -> f64 {
        self.n as f64 * self.alpha + 1.0
    }

    pub fn extinction_time(&self) -> f64 {
        self.r0.powf(self.exponent()) / self.exponent()
    }

    /// `rho(t) = (R^(n alpha + 1) - (n alpha + 1) t)^(1/(n alpha + 1))`.
    pub fn radius(&self, t: f64) -> Result<f64> {
        if !(self.r0 > 0.0) || self.n == 0 || !(self.alpha > 0.0) {
            return Err(GcfError::InvalidParameter(format!("sphere {self:?}")));
        }
        if !(t >= 0.0) {
            return Err(GcfError::InvalidParameter(format!("negative time {t}")));
        }
        let e = self.exponent();
        let base = self.r0.powf(e) - e * t;
        if base <= 0.0 {
            return Err(GcfError::PastExtinction { t, extinction: self.extinction_time() });
        }
        Ok(base.powf(1.0 / e))
    }

    /// Height of the lower hemisphere centred at `center_height` over a point at distance `r`.
    pub fn graph_height(&self, center_height: f64, r: f64, t: f64) -> Result<f64> {
        let rho = self.radius(t)?;
        if r >= rho {
            return Err(GcfError::GridTooWide { r_max: r, radius: rho });
        }
        Ok(center_height - (rho * rho - r * r).sqrt())
    }

    /// Time derivative of [`Self::graph_height`] at fixed `r`.
    pub fn height_speed(&self, r: f64, t: f64) -> Result<f64> {
        let rho = self.radius(t)?;
        if r >= rho {
            return Err(GcfError::GridTooWide { r_max: r, radius: rho });
        }
        let nf = self.n as f64;
        Ok(rho.powf(1.0 - nf * self.alpha) / (rho * rho - r * r).sqrt())
    }
}

/// Radius at time `t` of a sphere of initial radius `r0`.
pub fn sphere_radius(r0: f64, n: usize, alpha: f64, t: f64) -> Result<f64> {
    SphereSolution { r0, n, alpha }.radius(t)
}

/// Lower hemisphere of radius `radius` centred at height `center_height`,
/// sampled on `domain`. The grid must stay strictly inside the sphere.
pub fn hemisphere_graph(radius: f64, center_height: f64, dim: usize, domain: Domain) -> Result<GraphFunction> {
    let probe = GraphFunction::from_fn(dim, domain.clone(), None, |_| 0.0)?;
    let widest = (0..probe.len()).map(|i| probe.radius(i)).fold(0.0, f64::max);
    if widest >= radius {
        return Err(GcfError::GridTooWide { r_max: widest, radius });
    }
    GraphFunction::from_fn(dim, domain, None, |p| {
        let r2: f64 = p.iter().map(|x| x * x).sum();
        center_height - (radius * radius - r2).sqrt()
    })
}

/// Rotationally symmetric translating solution `u(x) + c t`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolitonProfile {
    pub n: usize,
    pub alpha: f64,
    pub c: f64,
    pub h: f64,
    /// Heights at `r = k h` up to the last sample before the wall (or `r_max`).
    pub heights: Vec<f64>,
    /// Radial slopes at the same samples.
    pub slopes: Vec<f64>,
    /// Radius where the slope passed [`BLOWUP_SLOPE`], if it did.
    pub blowup_radius: Option<f64>,
    /// Largest local error estimate of the integrator, scaled by `1 + |y|`.
    pub residual: f64,
}

impl SolitonProfile {
    fn q(&self) -> f64 {
        (self.n as f64 + 2.0) * self.alpha - 1.0
    }

    /// Radius of the last stored sample.
    pub fn last_radius(&self) -> f64 {
        (self.heights.len() - 1) as f64 * self.h
    }

    /// Radial graph on `[0, r_b]`; `r_b` must be a multiple of the sample spacing
    /// within the stored range.
    pub fn graph(&self, r_b: f64, height_cap: Option<f64>) -> Result<GraphFunction> {
        let k = (r_b / self.h).round() as usize;
        if ((k as f64) * self.h - r_b).abs() > 1e-9 * r_b.max(1.0) || k >= self.heights.len() {
            return Err(GcfError::InvalidGrid(format!(
                "radius {r_b} is not a stored sample (spacing {}, last {})",
                self.h,
                self.last_radius()
            )));
        }
        GraphFunction::new(self.n, Domain::Radial { h: self.h, r_max: k as f64 * self.h }, self.heights[..=k].to_vec(), height_cap)
    }

    /// Largest finite-difference residual of the profile equation over
    /// samples with radius at most `r_b`, relative to `c`.
    pub fn fd_residual(&self, r_b: f64) -> f64 {
        let h = self.h;
        let nf = self.n as f64;
        let q = self.q();
        let u = &self.heights;
        let kmax = ((r_b / h).floor() as usize).min(u.len() - 2);
        let mut worst = 0.0f64;
        for k in 0..=kmax {
            let (urr, ur_r, ur) = if k == 0 {
                let urr = 2.0 * (u[1] - u[0]) / (h * h);
                (urr, urr, 0.0)
            } else {
                let ur = (u[k + 1] - u[k - 1]) / (2.0 * h);
                ((u[k + 1] - 2.0 * u[k] + u[k - 1]) / (h * h), ur / (k as f64 * h), ur)
            };
            let lhs = (urr * ur_r.powf(nf - 1.0)).powf(self.alpha);
            let rhs = self.c * (1.0 + ur * ur).powf(q / 2.0);
            worst = worst.max((lhs - rhs).abs() / self.c);
        }
        worst
    }
}

/// Integrate the rotationally symmetric translator ODE
/// `(u_rr (u_r / r)^(n-1))^alpha = c (1 + u_r^2)^(q/2)`, `q = (n+2) alpha - 1`,
/// from `u(0) = 0`, sampling at spacing `h` up to `r_max`.
pub fn soliton_solve(n: usize, alpha: f64, c: f64, r_max: f64, h: f64, tol: f64) -> Result<SolitonProfile> {
    if n == 0 || !(alpha > 0.0) || !(c > 0.0) || !(r_max > 0.0) || !(h > 0.0) || !(tol > 0.0) || h >= r_max {
        return Err(GcfError::InvalidParameter(format!(
            "soliton parameters n={n} alpha={alpha} c={c} r_max={r_max} h={h} tol={tol}"
        )));
    }
    let nf = n as f64;
    let q = (nf + 2.0) * alpha - 1.0;
    let a = c.powf(1.0 / (nf * alpha));
    let beta = q * a * a / (2.0 * alpha * (nf + 2.0));
    let series = |r: f64| -> [f64; 2] {
        let r2 = r * r;
        [a * r2 / 2.0 + a * beta * r2 * r2 / 4.0, a * r * (1.0 + beta * r2)]
    };
    let c_pow = c.powf(1.0 / alpha);
    let expo = q / (2.0 * alpha);
    let f = move |r: f64, y: &[f64; 2]| -> [f64; 2] {
        let p = y[1];
        let drive = c_pow * (1.0 + p * p).powf(expo);
        let prr = if n == 1 { drive } else { drive / (p / r).powf(nf - 1.0) };
        [p, prr]
    };
    let r_seed = (10.0 * h).min(tol.powf(0.25)).min(r_max);
    let n_samples = (r_max / h).floor() as usize + 1;
    let mut heights = Vec::with_capacity(n_samples);
    let mut slopes = Vec::with_capacity(n_samples);
    let mut k = 0usize;
    while k < n_samples && (k as f64) * h <= r_seed {
        let s = series(k as f64 * h);
        heights.push(s[0]);
        slopes.push(s[1]);
        k += 1;
    }
    let mut x = r_seed;
    let mut y = series(r_seed);
    let mut dopri = Dopri::<2>::new(tol, (h * 0.5).min(r_seed));
    let stop = |y: &[f64; 2]| y[1] > BLOWUP_SLOPE;
    let mut blowup_radius = None;
    while k < n_samples {
        let target = k as f64 * h;
        match dopri.advance(&f, x, y, target, &stop)? {
            Advance::Reached(yn) => {
                x = target;
                y = yn;
                heights.push(y[0]);
                slopes.push(y[1]);
                k += 1;
            }
            Advance::Stopped(xs, _) => {
                blowup_radius = Some(xs);
                break;
            }
        }
    }
    if blowup_radius.is_none() && k == n_samples && x < r_max {
        if let Advance::Stopped(xs, _) = dopri.advance(&f, x, y, r_max, &stop)? {
            blowup_radius = Some(xs);
        }
    }
    if alpha > 0.5 && blowup_radius.is_none() {
        return Err(GcfError::NoBlowupDetected { r_max, alpha });
    }
    if heights.len() < 2 {
        return Err(GcfError::InvalidParameter("sample spacing too coarse for the profile".into()));
    }
    Ok(SolitonProfile { n, alpha, c, h, heights, slopes, blowup_radius, residual: dopri.max_error })
}

/// Per-index slack of `b^ii / g^ii <= 1 / lambda_min` for a quadratic graph
/// seen through a linear chart.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EulerReport {
    pub lambda_min: f64,
    /// `1/lambda_min - b^ii/g^ii` for each coordinate index.
    pub slack: Vec<f64>,
    pub min_slack: f64,
}

/// Check the inequality for `u(x) = x^T A x / 2` at the origin in the chart
/// `x = C y`: there `g = C^T C` and `h = C^T A C`.
pub fn euler_inequality_check(a: &DMatrix<f64>, chart: &DMatrix<f64>) -> Result<EulerReport> {
    let n = a.nrows();
    if a.ncols() != n || chart.nrows() != n || chart.ncols() != n || n == 0 {
        return Err(GcfError::InvalidParameter("matrices must be square and of equal size".into()));
    }
    if (a - a.transpose()).abs().max() > 1e-12 * a.abs().max().max(1.0) {
        return Err(GcfError::InvalidParameter("Hessian must be symmetric".into()));
    }
    let sv = chart.clone().svd(false, false).singular_values;
    let (smin, smax) = (sv.min(), sv.max());
    if !(smin > 1e-12 * smax) {
        return Err(GcfError::SingularChart { sigma_min: smin });
    }
    let sym = 0.5 * (a + a.transpose());
    let lambda_min = sym.clone().symmetric_eigen().eigenvalues.min();
    if !(lambda_min > 0.0) {
        return Err(GcfError::HypothesisViolation(format!("Hessian not positive definite (min eigenvalue {lambda_min})")));
    }
    let g = chart.transpose() * chart;
    let h = chart.transpose() * &sym * chart;
    let g_inv = g.try_inverse().ok_or(GcfError::SingularChart { sigma_min: smin })?;
    let b = h.try_inverse().ok_or(GcfError::SingularChart { sigma_min: smin })?;
    let slack: Vec<f64> = (0..n).map(|i| 1.0 / lambda_min - b[(i, i)] / g_inv[(i, i)]).collect();
    let min_slack = slack.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(EulerReport { lambda_min, slack, min_slack })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn sphere_radius_values() {
        assert_relative_eq!(sphere_radius(1.0, 2, 1.0, 0.0).unwrap(), 1.0);
        // n alpha + 1 = 3: rho^3 = 1 - 3 t
        assert_relative_eq!(sphere_radius(1.0, 2, 1.0, 0.1).unwrap(), 0.7f64.cbrt(), max_relative = 1e-14);
        assert!(sphere_radius(1.0, 2, 1.0, 1.0 / 3.0).is_err());
        assert_relative_eq!(SphereSolution { r0: 1.0, n: 1, alpha: 1.0 }.extinction_time(), 0.5);
        assert!(matches!(sphere_radius(1.0, 2, 1.0, 0.34), Err(GcfError::PastExtinction { .. })));
    }

    #[test]
    fn sphere_speed_matches_time_derivative() {
        let s = SphereSolution { r0: 1.3, n: 3, alpha: 0.5 };
        let (r, t, dt) = (0.4, 0.05, 1e-6);
        let fd = (s.graph_height(2.0, r, t + dt).unwrap() - s.graph_height(2.0, r, t - dt).unwrap()) / (2.0 * dt);
        assert_relative_eq!(fd, s.height_speed(r, t).unwrap(), max_relative = 1e-7);
    }

    #[test]
    fn hemisphere_too_wide() {
        let e = hemisphere_graph(1.0, 1.0, 2, Domain::Box { h: 0.1, lo: -0.8, hi: 0.8 });
        assert!(matches!(e, Err(GcfError::GridTooWide { .. })));
        assert!(hemisphere_graph(1.0, 1.0, 2, Domain::Box { h: 0.1, lo: -0.7, hi: 0.7 }).is_ok());
    }

    #[test]
    fn one_dimensional_translator_is_closed_form() {
        // n = 1, alpha = 1: u'' = c (1 + u'^2), so u = -ln(cos(c r)) / c
        let prof = soliton_solve(1, 1.0, 1.0, 2.0, 0.01, 1e-11).unwrap();
        let wall = prof.blowup_radius.unwrap();
        assert!((wall - std::f64::consts::FRAC_PI_2).abs() < 1e-4, "wall {wall}");
        for (k, u) in prof.heights.iter().enumerate().step_by(10) {
            let r = k as f64 * 0.01;
            assert_relative_eq!(*u, -(r.cos()).ln(), epsilon = 1e-8);
        }
    }

    #[test]
    fn soliton_below_half_has_no_wall() {
        let prof = soliton_solve(2, 0.45, 1.0, 3.0, 0.01, 1e-10).unwrap();
        assert!(prof.blowup_radius.is_none());
        assert_eq!(prof.heights.len(), 301);
    }

    #[test]
    fn soliton_fd_residual_is_small() {
        let prof = soliton_solve(2, 1.0, 1.0, 5.0, 0.005, 1e-11).unwrap();
        let wall = prof.blowup_radius.unwrap();
        assert!(prof.residual < 1e-8);
        assert!(prof.fd_residual(0.8 * wall) < 1e-3);
    }

    #[test]
    fn euler_identity_chart() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 2.0]);
        let rep = euler_inequality_check(&a, &DMatrix::identity(2, 2)).unwrap();
        assert_relative_eq!(rep.slack[0], 0.0, epsilon = 1e-14);
        assert_relative_eq!(rep.slack[1], 0.5, epsilon = 1e-14);
    }

    #[test]
    fn euler_singular_chart() {
        let a = DMatrix::identity(2, 2);
        let c = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 4.0]);
        assert!(matches!(euler_inequality_check(&a, &c), Err(GcfError::SingularChart { .. })));
    }
}
