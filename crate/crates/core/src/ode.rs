//! Adaptive Dormand-Prince 5(4) integrator for small systems.

use crate::error::{GcfError, Result};

const C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
const B5: [f64; 7] = [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0, 0.0];
const B4: [f64; 7] = [
    5179.0 / 57600.0,
    0.0,
    7571.0 / 16695.0,
    393.0 / 640.0,
    -92097.0 / 339200.0,
    187.0 / 2100.0,
    1.0 / 40.0,
];

/// Outcome of integrating up to a target abscissa.
pub(crate) enum Advance<const N: usize> {
    Reached([f64; N]),
    /// The stop predicate fired at this abscissa.
    Stopped(f64, [f64; N]),
}

pub(crate) struct Dopri<const N: usize> {
    pub tol: f64,
    pub step: f64,
    /// Largest local error estimate among accepted steps, scaled by `1 + |y|`.
    pub max_error: f64,
}

impl<const N: usize> Dopri<N> {
    pub fn new(tol: f64, initial_step: f64) -> Self {
        Dopri { tol, step: initial_step, max_error: 0.0 }
    }

    fn trial(f: &impl Fn(f64, &[f64; N]) -> [f64; N], x: f64, y: &[f64; N], h: f64) -> ([f64; N], [f64; N]) {
        let mut k = [[0.0; N]; 7];
        for s in 0..7 {
            let mut ys = *y;
            for (j, kj) in k.iter().enumerate().take(s) {
                for i in 0..N {
                    ys[i] += h * A[s][j] * kj[i];
                }
            }
            k[s] = f(x + C[s] * h, &ys);
        }
        let mut y5 = *y;
        let mut err = [0.0; N];
        for i in 0..N {
            let mut d5 = 0.0;
            let mut d4 = 0.0;
            for s in 0..7 {
                d5 += B5[s] * k[s][i];
                d4 += B4[s] * k[s][i];
            }
            y5[i] += h * d5;
            err[i] = h * (d5 - d4);
        }
        (y5, err)
    }

    /// Integrate from `x` to `x_end`, stopping early when `stop` fires.
    pub fn advance(
        &mut self,
        f: &impl Fn(f64, &[f64; N]) -> [f64; N],
        mut x: f64,
        mut y: [f64; N],
        x_end: f64,
        stop: &impl Fn(&[f64; N]) -> bool,
    ) -> Result<Advance<N>> {
        while x < x_end {
            let mut h = self.step.min(x_end - x);
            loop {
                if h < 1e-14 * x.abs().max(1.0) {
                    return Err(GcfError::StiffnessFailure { r: x, step: h });
                }
                let (yn, err) = Self::trial(f, x, &y, h);
                let ok_vals = yn.iter().all(|v| v.is_finite());
                let e = if ok_vals {
                    err.iter().zip(&yn).map(|(e, v)| e.abs() / (self.tol * (1.0 + v.abs()))).fold(0.0, f64::max)
                } else {
                    f64::INFINITY
                };
                if e <= 1.0 {
                    let scaled = err.iter().zip(&yn).fold(0.0f64, |a, (e, v)| a.max(e.abs() / (1.0 + v.abs())));
                    self.max_error = self.max_error.max(scaled);
                    let last = h == x_end - x;
                    x = if last { x_end } else { x + h };
                    y = yn;
                    let grow = if e == 0.0 { 5.0 } else { (0.9 * e.powf(-0.2)).clamp(0.2, 5.0) };
                    if !last {
                        self.step = h * grow;
                    } else {
                        self.step = self.step.max(h * grow);
                    }
                    if stop(&y) {
                        return Ok(Advance::Stopped(x, y));
                    }
                    break;
                }
                let shrink = if e.is_finite() { (0.9 * e.powf(-0.2)).clamp(0.1, 0.5) } else { 0.1 };
                h *= shrink;
                self.step = h;
            }
        }
        Ok(Advance::Reached(y))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exponential_growth() {
        let mut d = Dopri::<1>::new(1e-10, 0.1);
        let f = |_x: f64, y: &[f64; 1]| [y[0]];
        match d.advance(&f, 0.0, [1.0], 1.0, &|_| false).unwrap() {
            Advance::Reached(y) => assert!((y[0] - 1f64.exp()).abs() < 1e-8),
            Advance::Stopped(..) => panic!("stopped"),
        }
    }

    #[test]
    fn blowup_is_caught() {
        // y' = y^2, y(0) = 1 blows up at x = 1
        let mut d = Dopri::<1>::new(1e-10, 0.01);
        let f = |_x: f64, y: &[f64; 1]| [y[0] * y[0]];
        match d.advance(&f, 0.0, [1.0], 2.0, &|y| y[0] > 1e6).unwrap() {
            Advance::Stopped(x, _) => assert!((x - 1.0).abs() < 1e-5),
            Advance::Reached(_) => panic!("no blow-up"),
        }
    }
}
