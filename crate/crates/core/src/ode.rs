//! Adaptive Dormand–Prince 5(4) integrator over real or complex state vectors.

use num_complex::Complex64;

use crate::error::{Error, Result};

pub trait OdeState: Clone {
    fn zeros_like(&self) -> Self;
    /// self += a * x
    fn axpy(&mut self, a: f64, x: &Self);
    /// RMS of err_i / (atol + rtol * max(|y0_i|, |y1_i|)).
    fn scaled_norm(err: &Self, y0: &Self, y1: &Self, atol: f64, rtol: f64) -> f64;
}

impl OdeState for Vec<f64> {
    fn zeros_like(&self) -> Self {
        vec![0.0; self.len()]
    }
    fn axpy(&mut self, a: f64, x: &Self) {
        self.iter_mut().zip(x).for_each(|(s, xi)| *s += a * xi);
    }
    fn scaled_norm(err: &Self, y0: &Self, y1: &Self, atol: f64, rtol: f64) -> f64 {
        let n = err.len().max(1) as f64;
        let sum: f64 = err
            .iter()
            .zip(y0.iter().zip(y1))
            .map(|(e, (a, b))| {
                let sc = atol + rtol * a.abs().max(b.abs());
                (e / sc).powi(2)
            })
            .sum();
        (sum / n).sqrt()
    }
}

impl OdeState for Vec<Complex64> {
    fn zeros_like(&self) -> Self {
        vec![Complex64::new(0.0, 0.0); self.len()]
    }
    fn axpy(&mut self, a: f64, x: &Self) {
        self.iter_mut().zip(x).for_each(|(s, xi)| *s += xi * a);
    }
    fn scaled_norm(err: &Self, y0: &Self, y1: &Self, atol: f64, rtol: f64) -> f64 {
        let n = err.len().max(1) as f64;
        let sum: f64 = err
            .iter()
            .zip(y0.iter().zip(y1))
            .map(|(e, (a, b))| {
                let sc = atol + rtol * a.norm().max(b.norm());
                e.norm_sqr() / (sc * sc)
            })
            .sum();
        (sum / n).sqrt()
    }
}

#[derive(Debug, Clone, Copy)]
pub struct OdeOptions {
    pub rtol: f64,
    pub atol: f64,
    pub initial_step: Option<f64>,
    pub max_steps: usize,
}

impl Default for OdeOptions {
    fn default() -> Self {
        Self {
            rtol: 1e-10,
            atol: 1e-12,
            initial_step: None,
            max_steps: 10_000_000,
        }
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct OdeStats {
    pub accepted: usize,
    pub rejected: usize,
    pub rhs_evaluations: usize,
}

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;
// fifth-order minus embedded fourth-order weights
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

/// Integrates `dy/dt = rhs(t, y)` from `t0`, returning the state at each time in
/// `outputs` (which must be non-decreasing and ≥ `t0`).
pub fn solve<S, F>(
    mut rhs: F,
    t0: f64,
    y0: &S,
    outputs: &[f64],
    opts: &OdeOptions,
) -> Result<(Vec<S>, OdeStats)>
where
    S: OdeState,
    F: FnMut(f64, &S, &mut S),
{
    let mut stats = OdeStats::default();
    let mut out = Vec::with_capacity(outputs.len());
    let mut t = t0;
    let mut y = y0.clone();
    let span = outputs.last().map_or(0.0, |&e| (e - t0).abs()).max(1e-300);
    let mut h = opts.initial_step.unwrap_or(span * 1e-3);

    let mut k1 = y.zeros_like();
    let mut k2 = y.zeros_like();
    let mut k3 = y.zeros_like();
    let mut k4 = y.zeros_like();
    let mut k5 = y.zeros_like();
    let mut k6 = y.zeros_like();
    let mut k7 = y.zeros_like();
    rhs(t, &y, &mut k1);
    stats.rhs_evaluations += 1;

    for &target in outputs {
        if target < t {
            return Err(Error::domain("ode", "output times must be non-decreasing"));
        }
        while t < target {
            if stats.accepted + stats.rejected >= opts.max_steps {
                return Err(Error::Integrator {
                    requested: opts.rtol,
                    achieved: f64::NAN,
                    time: t,
                });
            }
            let last = t + h >= target;
            let step = if last { target - t } else { h };

            let mut tmp = y.clone();
            tmp.axpy(step * A21, &k1);
            rhs(t + C2 * step, &tmp, &mut k2);

            tmp = y.clone();
            tmp.axpy(step * A31, &k1);
            tmp.axpy(step * A32, &k2);
            rhs(t + C3 * step, &tmp, &mut k3);

            tmp = y.clone();
            tmp.axpy(step * A41, &k1);
            tmp.axpy(step * A42, &k2);
            tmp.axpy(step * A43, &k3);
            rhs(t + C4 * step, &tmp, &mut k4);

            tmp = y.clone();
            tmp.axpy(step * A51, &k1);
            tmp.axpy(step * A52, &k2);
            tmp.axpy(step * A53, &k3);
            tmp.axpy(step * A54, &k4);
            rhs(t + C5 * step, &tmp, &mut k5);

            tmp = y.clone();
            tmp.axpy(step * A61, &k1);
            tmp.axpy(step * A62, &k2);
            tmp.axpy(step * A63, &k3);
            tmp.axpy(step * A64, &k4);
            tmp.axpy(step * A65, &k5);
            rhs(t + step, &tmp, &mut k6);

            let mut y_new = y.clone();
            y_new.axpy(step * B1, &k1);
            y_new.axpy(step * B3, &k3);
            y_new.axpy(step * B4, &k4);
            y_new.axpy(step * B5, &k5);
            y_new.axpy(step * B6, &k6);
            rhs(t + step, &y_new, &mut k7);
            stats.rhs_evaluations += 6;

            let mut err = y.zeros_like();
            err.axpy(step * E1, &k1);
            err.axpy(step * E3, &k3);
            err.axpy(step * E4, &k4);
            err.axpy(step * E5, &k5);
            err.axpy(step * E6, &k6);
            err.axpy(step * E7, &k7);
            let en = S::scaled_norm(&err, &y, &y_new, opts.atol, opts.rtol);

            if en <= 1.0 {
                stats.accepted += 1;
                t = if last { target } else { t + step };
                y = y_new;
                std::mem::swap(&mut k1, &mut k7);
                let fac = if en == 0.0 { 5.0 } else { (0.9 * en.powf(-0.2)).clamp(0.2, 5.0) };
                if !last || fac < 1.0 {
                    h = step * fac;
                }
            } else {
                stats.rejected += 1;
                if !en.is_finite() {
                    h = step * 0.1;
                } else {
                    h = step * (0.9 * en.powf(-0.2)).clamp(0.1, 1.0);
                }
                if h < 1e-14 * span {
                    return Err(Error::Integrator {
                        requested: opts.rtol,
                        achieved: en * opts.rtol,
                        time: t,
                    });
                }
            }
        }
        out.push(y.clone());
    }
    Ok((out, stats))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn exponential_decay() {
        let times: Vec<f64> = (0..=10).map(|i| i as f64 * 0.5).collect();
        let (ys, _) = solve(
            |_, y: &Vec<f64>, dy: &mut Vec<f64>| dy[0] = -0.7 * y[0],
            0.0,
            &vec![2.0],
            &times,
            &OdeOptions { rtol: 1e-12, atol: 1e-14, ..Default::default() },
        )
        .unwrap();
        for (t, y) in times.iter().zip(&ys) {
            assert_relative_eq!(y[0], 2.0 * (-0.7 * t).exp(), max_relative = 1e-10);
        }
    }

    #[test]
    fn complex_rotation_keeps_modulus() {
        let times = [0.0, 3.0, 20.0];
        let y0 = vec![Complex64::new(1.0, 0.0)];
        let (ys, _) = solve(
            |_, y: &Vec<Complex64>, dy: &mut Vec<Complex64>| dy[0] = Complex64::new(0.0, 2.0) * y[0],
            0.0,
            &y0,
            &times,
            &OdeOptions { rtol: 1e-12, atol: 1e-14, ..Default::default() },
        )
        .unwrap();
        for (t, y) in times.iter().zip(&ys) {
            let exact = Complex64::new(0.0, 2.0 * t).exp();
            assert!((y[0] - exact).norm() < 1e-9);
        }
    }
}
