//! Radiation-reaction field of a moving spin: the local third-derivative form
//! `−(α/3π²) S‴(t)` and the regulated spectral double integral
//! `−(α/3π²) ∫₀^W dω_k ω_k³ e^{−εω_k} ∫₀ᵗ dt′ S(t′) sin ω_k(t − t′)`.
//!
//! The ω_k integral is done in closed form, leaving a one-dimensional
//! convolution of the history with the kernel
//! `K(τ) = Im[(6 − e^{−zW}(z³W³ + 3z²W² + 6zW + 6))/z⁴]`, `z = ε − iτ`.
//! Its half-line moments are `2/ε³, 0, −2/ε, −3π`, so for small ε the raw
//! integral behaves as `2S/ε³ − S″/ε + (π/2)S‴`. The first two pieces are
//! reported separately as counterterms and removed from the finite part.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Vec3;
use crate::quadrature::integrate_piecewise;

/// Built-in analytic spin histories.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "family")]
pub enum HistoryFamily {
    Constant { value: Vec3 },
    /// `S(t) = c t³`
    Cubic { coefficient: Vec3 },
    /// `S(t) = a (cos ωt, sin ωt, 0)`
    Circular { omega: f64, amplitude: f64 },
    /// `S(t) = e_re Re f(t) + e_im Im f(t)` with
    /// `f(t) = exp(−(t − t0)²/(2σ²) + iωt)`: a precessing moment switched on
    /// smoothly, so that it and its derivatives are negligible at `t = 0`.
    Launched {
        omega: f64,
        sigma: f64,
        t0: f64,
        e_re: Vec3,
        e_im: Vec3,
    },
}

impl HistoryFamily {
    /// Gaussian-launched precession in the xy plane centred at `8σ`.
    pub fn launched(omega: f64, sigma: f64) -> Self {
        HistoryFamily::Launched {
            omega,
            sigma,
            t0: 8.0 * sigma,
            e_re: Vec3::x(),
            e_im: Vec3::y(),
        }
    }

    /// `order`-th derivative at `t`, for `order <= 3`.
    pub fn derivative(&self, t: f64, order: u8) -> Vec3 {
        match *self {
            HistoryFamily::Constant { value } => {
                if order == 0 {
                    value
                } else {
                    Vec3::zeros()
                }
            }
            HistoryFamily::Cubic { coefficient } => {
                let f = match order {
                    0 => t.powi(3),
                    1 => 3.0 * t * t,
                    2 => 6.0 * t,
                    3 => 6.0,
                    _ => 0.0,
                };
                coefficient * f
            }
            HistoryFamily::Circular { omega, amplitude } => {
                let z = Complex64::new(0.0, omega).powi(order as i32) * Complex64::new(0.0, omega * t).exp();
                Vec3::new(z.re, z.im, 0.0) * amplitude
            }
            HistoryFamily::Launched {
                omega,
                sigma,
                t0,
                e_re,
                e_im,
            } => {
                let s2 = sigma * sigma;
                let f = Complex64::new(-(t - t0).powi(2) / (2.0 * s2), omega * t).exp();
                let q1 = Complex64::new(-(t - t0) / s2, omega);
                let q2 = -1.0 / s2;
                let factor = match order {
                    0 => Complex64::new(1.0, 0.0),
                    1 => q1,
                    2 => q1 * q1 + q2,
                    _ => q1 * q1 * q1 + 3.0 * q1 * q2,
                };
                let z = factor * f;
                e_re * z.re + e_im * z.im
            }
        }
    }

    fn characteristic_frequency(&self) -> f64 {
        match *self {
            HistoryFamily::Constant { .. } | HistoryFamily::Cubic { .. } => 1.0,
            HistoryFamily::Circular { omega, .. } => omega.abs().max(f64::MIN_POSITIVE),
            HistoryFamily::Launched { omega, sigma, .. } => omega.abs() + 1.0 / sigma,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
enum Source {
    Analytic(HistoryFamily),
    Sampled(Vec<Vec3>),
}

/// A spin trajectory `S(t′)` on a strictly increasing grid, either backed by an
/// analytic family or by samples (interpolated locally with degree-7
/// Lagrange polynomials).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpinHistory {
    t_grid: Vec<f64>,
    source: Source,
}

const INTERP_POINTS: usize = 8;
const MIN_POINTS_EACH_SIDE: usize = 7;

fn check_grid(t_grid: &[f64]) -> Result<()> {
    if t_grid.len() < 2 * MIN_POINTS_EACH_SIDE + 1 {
        return Err(Error::domain(
            "spin_history",
            format!("need at least {} grid points", 2 * MIN_POINTS_EACH_SIDE + 1),
        ));
    }
    if t_grid.iter().any(|t| !t.is_finite()) || t_grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::domain("spin_history", "time grid must be finite and strictly increasing"));
    }
    Ok(())
}

impl SpinHistory {
    pub fn analytic(family: HistoryFamily, t_grid: Vec<f64>) -> Result<Self> {
        check_grid(&t_grid)?;
        Ok(Self {
            t_grid,
            source: Source::Analytic(family),
        })
    }

    pub fn sampled(t_grid: Vec<f64>, values: Vec<Vec3>) -> Result<Self> {
        check_grid(&t_grid)?;
        if values.len() != t_grid.len() {
            return Err(Error::domain("spin_history", "sample count differs from grid length"));
        }
        if values.iter().any(|v| !v.iter().all(|c| c.is_finite())) {
            return Err(Error::domain("spin_history", "non-finite spin component"));
        }
        Ok(Self {
            t_grid,
            source: Source::Sampled(values),
        })
    }

    /// Sample an analytic family onto its own grid.
    pub fn to_sampled(&self) -> Self {
        let values = self.t_grid.iter().map(|&t| self.value(t)).collect();
        Self {
            t_grid: self.t_grid.clone(),
            source: Source::Sampled(values),
        }
    }

    /// Apply `f` to each sample; analytic histories are sampled first.
    pub fn map_samples(&self, f: impl Fn(Vec3) -> Vec3) -> Self {
        let values = self.t_grid.iter().map(|&t| f(self.value(t))).collect();
        Self {
            t_grid: self.t_grid.clone(),
            source: Source::Sampled(values),
        }
    }

    /// Pointwise `a·self + b·other` on a shared grid.
    pub fn combine(&self, a: f64, other: &SpinHistory, b: f64) -> Result<Self> {
        if self.t_grid != other.t_grid {
            return Err(Error::domain("spin_history", "histories live on different grids"));
        }
        let values = self.t_grid.iter().map(|&t| self.value(t) * a + other.value(t) * b).collect();
        Ok(Self {
            t_grid: self.t_grid.clone(),
            source: Source::Sampled(values),
        })
    }

    pub fn t_grid(&self) -> &[f64] {
        &self.t_grid
    }

    pub fn family(&self) -> Option<&HistoryFamily> {
        match &self.source {
            Source::Analytic(f) => Some(f),
            Source::Sampled(_) => None,
        }
    }

    pub fn value(&self, t: f64) -> Vec3 {
        match &self.source {
            Source::Analytic(f) => f.derivative(t, 0),
            Source::Sampled(v) => self.interpolate(v, t),
        }
    }

    fn interpolate(&self, values: &[Vec3], t: f64) -> Vec3 {
        let g = &self.t_grid;
        let n = g.len();
        let i = g.partition_point(|&x| x <= t);
        let start = i.saturating_sub(INTERP_POINTS / 2).min(n - INTERP_POINTS);
        let nodes = &g[start..start + INTERP_POINTS];
        let mut out = Vec3::zeros();
        for (j, &tj) in nodes.iter().enumerate() {
            if t == tj {
                return values[start + j];
            }
            let w: f64 = nodes
                .iter()
                .enumerate()
                .filter(|&(m, _)| m != j)
                .map(|(_, &tm)| (t - tm) / (tj - tm))
                .product();
            out += values[start + j] * w;
        }
        out
    }

    fn local_step(&self, t: f64) -> f64 {
        let g = &self.t_grid;
        let i = g.partition_point(|&x| x <= t).clamp(1, g.len() - 1);
        g[i] - g[i - 1]
    }

    fn check_interior(&self, t: f64, context: &'static str) -> Result<()> {
        let below = self.t_grid.partition_point(|&x| x < t);
        let above = self.t_grid.len() - self.t_grid.partition_point(|&x| x <= t);
        if below < MIN_POINTS_EACH_SIDE || above < MIN_POINTS_EACH_SIDE {
            return Err(Error::domain(
                context,
                format!(
                    "t = {t} has {below} grid points before and {above} after; the stencil needs {MIN_POINTS_EACH_SIDE} on each side"
                ),
            ));
        }
        Ok(())
    }

    /// Centred 7-point finite difference of order `order` (2 or 3) with step `h`.
    pub fn derivative_fd(&self, t: f64, order: u8, h: f64) -> Vec3 {
        let s = |k: i32| self.value(t + k as f64 * h);
        match order {
            2 => (s(-3) * 2.0 - s(-2) * 27.0 + s(-1) * 270.0 - s(0) * 490.0 + s(1) * 270.0 - s(2) * 27.0 + s(3) * 2.0) / (180.0 * h * h),
            3 => (s(-3) - s(-2) * 8.0 + s(-1) * 13.0 - s(1) * 13.0 + s(2) * 8.0 - s(3)) / (8.0 * h.powi(3)),
            _ => panic!("derivative_fd supports orders 2 and 3"),
        }
    }

    /// Derivative of order 0..=3, analytic when the family provides it.
    pub fn derivative(&self, t: f64, order: u8) -> Vec3 {
        match (&self.source, order) {
            (Source::Analytic(f), _) => f.derivative(t, order),
            (Source::Sampled(v), 0) => self.interpolate(v, t),
            (Source::Sampled(_), _) => {
                let h = self.local_step(t);
                if order == 1 {
                    let s = |k: f64| self.value(t + k * h);
                    (s(-3.0) * -1.0 + s(-2.0) * 9.0 - s(-1.0) * 45.0 + s(1.0) * 45.0 - s(2.0) * 9.0 + s(3.0)) / (60.0 * h)
                } else {
                    self.derivative_fd(t, order, h)
                }
            }
        }
    }

    fn characteristic_frequency(&self) -> f64 {
        match &self.source {
            Source::Analytic(f) => f.characteristic_frequency(),
            Source::Sampled(_) => {
                let h = self.t_grid.windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min);
                1.0 / h
            }
        }
    }

    fn amplitude_scale(&self) -> f64 {
        match &self.source {
            Source::Sampled(v) => v.iter().map(|s| s.norm()).fold(0.0, f64::max),
            Source::Analytic(_) => self.t_grid.iter().map(|&t| self.value(t).norm()).fold(0.0, f64::max),
        }
    }
}

/// `−(α/3π²)`, the prefactor of the local form.
pub fn rr_prefactor(alpha: f64) -> f64 {
    -alpha / (3.0 * PI * PI)
}

/// `−(α/3π²) S‴(t)`.
pub fn rr_field_local(history: &SpinHistory, t: f64, alpha: f64) -> Result<Vec3> {
    history.check_interior(t, "rr_field_local")?;
    Ok(history.derivative(t, 3) * rr_prefactor(alpha))
}

/// Regulated spectral kernel `∫₀^W ω³ e^{−εω} sin ωτ dω`.
pub fn spectral_kernel(tau: f64, eps: f64, omega_max: f64) -> f64 {
    let (e2, t2) = (eps * eps, tau * tau);
    let main = 24.0 * eps * tau * (e2 - t2) / (e2 + t2).powi(4);
    let z = Complex64::new(eps, -tau);
    let zw = z * omega_max;
    let poly = zw * zw * zw + 3.0 * zw * zw + 6.0 * zw + 6.0;
    let tail = (-zw).exp() * poly / (z * z * z * z);
    main - tail.im
}

/// Outcome of the regulated spectral evaluation, all in field units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectralField {
    /// `−(α/3π²)(raw − 2S/ε³ + S″/ε)`.
    pub field: Vec3,
    /// `−(α/3π²)·raw`, the regulated double integral itself.
    pub raw: Vec3,
    /// `−(α/3π²)(2S/ε³ − S″/ε)`, the divergent pieces removed from `raw`.
    pub counterterm: Vec3,
    pub epsilon: f64,
    pub omega_max: f64,
}

/// Relative size of S and its first three derivatives at `t′ = 0` allowed by
/// the admissibility check.
pub const ADMISSIBILITY_TOL: f64 = 1e-9;

fn check_admissible(history: &SpinHistory) -> Result<()> {
    let t0 = history.t_grid[0];
    if t0 > 0.0 {
        return Err(Error::Admissibility(format!("history starts at t = {t0}, not at 0")));
    }
    let w = history.characteristic_frequency();
    let a = history.amplitude_scale();
    if a == 0.0 {
        return Ok(());
    }
    for order in 0..=3u8 {
        let d = history.derivative(0.0, order).norm();
        let scale = a * w.powi(order as i32);
        if d > ADMISSIBILITY_TOL * scale {
            return Err(Error::Admissibility(format!(
                "derivative of order {order} at t' = 0 is {d:e}, above {ADMISSIBILITY_TOL:e} x {scale:e}"
            )));
        }
    }
    Ok(())
}

const SPECTRAL_REL_TOL: f64 = 1e-13;

pub fn rr_field_spectral(history: &SpinHistory, t: f64, alpha: f64, epsilon: f64, omega_max: f64) -> Result<SpectralField> {
    if !(epsilon > 0.0) || !epsilon.is_finite() {
        return Err(Error::domain("rr_field_spectral", format!("regulator must be positive, got {epsilon}")));
    }
    if !(omega_max >= 50.0 / epsilon) {
        return Err(Error::domain(
            "rr_field_spectral",
            format!("omega_max = {omega_max} is below 50/epsilon = {}", 50.0 / epsilon),
        ));
    }
    history.check_interior(t, "rr_field_spectral")?;
    check_admissible(history)?;

    // breakpoints resolve the kernel peak of width ε at τ = 0
    let mut breaks = vec![0.0];
    let mut b = epsilon;
    while b < t {
        breaks.push(b);
        b *= 2.0;
    }
    breaks.push(t);

    let a = history.amplitude_scale();
    let abs_tol = 1e-14 * a / epsilon.powi(3);
    let mut raw = Vec3::zeros();
    for c in 0..3 {
        raw[c] = integrate_piecewise(
            |tau| history.value(t - tau)[c] * spectral_kernel(tau, epsilon, omega_max),
            &breaks,
            abs_tol,
            SPECTRAL_REL_TOL,
            4000,
        )
        .value;
    }
    let counter = history.value(t) * (2.0 / epsilon.powi(3)) - history.derivative(t, 2) / epsilon;
    let p = rr_prefactor(alpha);
    Ok(SpectralField {
        field: (raw - counter) * p,
        raw: raw * p,
        counterterm: counter * p,
        epsilon,
        omega_max,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LadderRung {
    pub epsilon: f64,
    pub field: Vec3,
    pub raw: Vec3,
    pub counterterm: Vec3,
    /// `|spectral − local| / |local|`
    pub rel_diff_local: f64,
    /// `|spectral − (π/2) local| / |(π/2) local|`
    pub rel_diff_half_pi: f64,
}

/// ε-ladder convergence study of the spectral form against the local form.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LadderReport {
    pub t: f64,
    pub omega_char: f64,
    pub local: Vec3,
    pub rungs: Vec<LadderRung>,
    /// Least-squares slope of ln|spectral − local| against ln ε.
    pub order_vs_local: f64,
    /// Same slope against `(π/2)·local`, the value the regulated integral tends to.
    pub order_vs_half_pi: f64,
    pub monotone_vs_local: bool,
    pub final_rel_diff_local: f64,
    /// `|spectral| / |local|` at the smallest ε.
    pub final_ratio: f64,
}

fn log_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    sxy / sxx
}

/// Regulator ladder `ε = f / ω_char` for each `f` in `fractions`, with the
/// cutoff held at `64/ε`.
pub fn epsilon_ladder(history: &SpinHistory, t: f64, alpha: f64, omega_char: f64, fractions: &[f64]) -> Result<LadderReport> {
    let local = rr_field_local(history, t, alpha)?;
    let half_pi = local * (PI / 2.0);
    let mut rungs = Vec::with_capacity(fractions.len());
    for &f in fractions {
        let eps = f / omega_char;
        let s = rr_field_spectral(history, t, alpha, eps, 64.0 / eps)?;
        rungs.push(LadderRung {
            epsilon: eps,
            field: s.field,
            raw: s.raw,
            counterterm: s.counterterm,
            rel_diff_local: (s.field - local).norm() / local.norm(),
            rel_diff_half_pi: (s.field - half_pi).norm() / half_pi.norm(),
        });
    }
    let eps: Vec<f64> = rungs.iter().map(|r| r.epsilon).collect();
    let dl: Vec<f64> = rungs.iter().map(|r| r.rel_diff_local).collect();
    let dh: Vec<f64> = rungs.iter().map(|r| r.rel_diff_half_pi).collect();
    let last = rungs.last().ok_or_else(|| Error::domain("epsilon_ladder", "empty ladder"))?;
    Ok(LadderReport {
        t,
        omega_char,
        local,
        order_vs_local: log_slope(&eps, &dl),
        order_vs_half_pi: log_slope(&eps, &dh),
        monotone_vs_local: dl.windows(2).all(|w| w[1] < w[0]),
        final_rel_diff_local: last.rel_diff_local,
        final_ratio: last.field.norm() / local.norm(),
        rungs,
    })
}

/// The reference configuration used by the verification suites: a launched
/// precession with `ω = 1`, `σ = 10`, sampled on `[0, 160]`, probed at `t = 100`.
pub fn reference_history() -> SpinHistory {
    let grid: Vec<f64> = (0..=3200).map(|i| i as f64 * 0.05).collect();
    SpinHistory::analytic(HistoryFamily::launched(1.0, 10.0), grid).expect("reference grid is valid")
}

pub const REFERENCE_TIME: f64 = 100.0;
pub const REFERENCE_LADDER: [f64; 3] = [0.1, 0.05, 0.025];

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn grid(n: usize, h: f64) -> Vec<f64> {
        (0..n).map(|i| i as f64 * h).collect()
    }

    #[test]
    fn local_constant_and_cubic() {
        let h = SpinHistory::analytic(HistoryFamily::Constant { value: Vec3::new(1.0, -2.0, 0.5) }, grid(40, 0.1)).unwrap();
        assert_eq!(rr_field_local(&h, 2.0, 1.0).unwrap(), Vec3::zeros());
        let h = SpinHistory::analytic(HistoryFamily::Cubic { coefficient: Vec3::x() }, grid(40, 0.1)).unwrap();
        let f = rr_field_local(&h, 2.0, 0.7).unwrap();
        assert_relative_eq!(f, Vec3::new(6.0, 0.0, 0.0) * rr_prefactor(0.7), max_relative = 1e-15);
        let fd = h.to_sampled().derivative(2.0, 3);
        assert_relative_eq!(fd.x, 6.0, max_relative = 1e-8);
    }

    #[test]
    fn local_circular_matches_differences() {
        let w = 1.0;
        let h = SpinHistory::analytic(HistoryFamily::Circular { omega: w, amplitude: 1.0 }, grid(200, 0.05)).unwrap();
        let t = 4.3;
        let f = rr_field_local(&h, t, 1.0).unwrap();
        let expect = Vec3::new((w * t).sin(), -(w * t).cos(), 0.0) * (w.powi(3) * rr_prefactor(1.0));
        assert!((f - expect).norm() < 1e-14);
        let fd = h.derivative_fd(t, 3, 0.01);
        assert!((fd - h.derivative(t, 3)).norm() < 1e-8);
    }

    #[test]
    fn boundary_is_rejected() {
        let h = SpinHistory::analytic(HistoryFamily::Cubic { coefficient: Vec3::x() }, grid(40, 0.1)).unwrap();
        assert!(rr_field_local(&h, 0.55, 1.0).is_err());
        assert!(rr_field_local(&h, 0.65, 1.0).is_ok());
        assert!(rr_field_local(&h, 3.35, 1.0).is_err());
    }

    #[test]
    fn sampled_history_derivatives() {
        let h = SpinHistory::analytic(HistoryFamily::launched(1.0, 5.0), grid(1600, 0.05)).unwrap();
        let s = h.to_sampled();
        for t in [30.0, 40.025, 51.3] {
            assert!((s.value(t) - h.value(t)).norm() < 1e-9);
            assert!((s.derivative(t, 3) - h.derivative(t, 3)).norm() < 1e-5);
        }
    }

    #[test]
    fn kernel_closed_form_matches_quadrature() {
        let (eps, w) = (0.3, 40.0);
        for tau in [0.0, 0.05, 0.4, 2.0] {
            let q = crate::quadrature::integrate(|x| x.powi(3) * (-eps * x).exp() * (x * tau).sin(), 0.0, w, 1e-12, 1e-13, 4000).value;
            assert!((spectral_kernel(tau, eps, w) - q).abs() < 1e-9 * (1.0 + q.abs()), "tau {tau}: {q}");
        }
    }

    #[test]
    fn kernel_moments() {
        let eps = 0.2;
        let m = |n: i32| {
            let mut breaks = vec![0.0];
            let mut b = eps;
            while b < 1e5 {
                breaks.push(b);
                b *= 2.0;
            }
            integrate_piecewise(|tau| tau.powi(n) * spectral_kernel(tau, eps, 1e4), &breaks, 1e-13, 1e-13, 2000).value
        };
        assert_relative_eq!(m(0), 2.0 / eps.powi(3), max_relative = 1e-8);
        assert_relative_eq!(m(2), -2.0 / eps, max_relative = 1e-6);
        assert_relative_eq!(m(3), -3.0 * PI, max_relative = 1e-3);
    }

    #[test]
    fn zero_history_gives_zero() {
        let h = SpinHistory::analytic(HistoryFamily::Constant { value: Vec3::zeros() }, grid(200, 0.1)).unwrap();
        for eps in [0.1, 0.05] {
            assert_eq!(rr_field_spectral(&h, 10.0, 1.0, eps, 64.0 / eps).unwrap().field, Vec3::zeros());
        }
    }

    #[test]
    fn inadmissible_histories() {
        let h = SpinHistory::analytic(HistoryFamily::Circular { omega: 1.0, amplitude: 1.0 }, grid(200, 0.1)).unwrap();
        let e = rr_field_spectral(&h, 10.0, 1.0, 0.1, 640.0).unwrap_err();
        assert!(matches!(e, Error::Admissibility(ref m) if m.contains("order 0")));
        let h = SpinHistory::analytic(HistoryFamily::Cubic { coefficient: Vec3::x() }, grid(200, 0.1)).unwrap();
        let e = rr_field_spectral(&h, 10.0, 1.0, 0.1, 640.0).unwrap_err();
        assert!(matches!(e, Error::Admissibility(ref m) if m.contains("order 3")));
        let h = reference_history();
        assert!(rr_field_spectral(&h, REFERENCE_TIME, 1.0, 0.1, 100.0).is_err());
    }

    #[test]
    fn cutoff_doubling_is_negligible() {
        let h = reference_history();
        let a = rr_field_spectral(&h, REFERENCE_TIME, 1.0, 0.05, 64.0 / 0.05).unwrap();
        let b = rr_field_spectral(&h, REFERENCE_TIME, 1.0, 0.05, 128.0 / 0.05).unwrap();
        assert!((a.field - b.field).norm() < 1e-6 * a.field.norm());
    }

    #[test]
    fn regulated_integral_tends_to_half_pi_times_local() {
        let h = reference_history();
        let r = epsilon_ladder(&h, REFERENCE_TIME, 1.0, 1.0, &REFERENCE_LADDER).unwrap();
        let diffs: Vec<f64> = r.rungs.iter().map(|x| x.rel_diff_half_pi).collect();
        assert!(diffs.windows(2).all(|w| w[1] < w[0]), "{diffs:?}");
        assert!(diffs[2] < 0.1);
        assert!((r.final_ratio - PI / 2.0).abs() < 0.05);
        assert!(r.final_rel_diff_local > 0.5);
    }

    #[test]
    fn linearity() {
        let g = grid(2401, 0.05);
        let x = SpinHistory::analytic(HistoryFamily::launched(1.0, 8.0), g.clone()).unwrap();
        let y = SpinHistory::analytic(
            HistoryFamily::Launched { omega: 1.6, sigma: 9.0, t0: 72.0, e_re: Vec3::z(), e_im: Vec3::x() },
            g,
        )
        .unwrap();
        let (a, b) = (0.7, -1.9);
        let xy = x.combine(a, &y, b).unwrap();
        let t = 70.0;
        let eps = 0.05;
        let fx = rr_field_spectral(&x.to_sampled(), t, 1.0, eps, 64.0 / eps).unwrap().field;
        let fy = rr_field_spectral(&y.to_sampled(), t, 1.0, eps, 64.0 / eps).unwrap().field;
        let fxy = rr_field_spectral(&xy, t, 1.0, eps, 64.0 / eps).unwrap().field;
        assert!((fxy - (fx * a + fy * b)).norm() < 1e-6 * fxy.norm());
    }

    #[test]
    fn component_permutation() {
        let h = reference_history();
        let eps = 0.1;
        let f = rr_field_spectral(&h, REFERENCE_TIME, 1.0, eps, 640.0).unwrap().field;
        for perm in [[2usize, 0, 1], [1, 2, 0], [0, 2, 1]] {
            let p = h.map_samples(|s| Vec3::new(s[perm[0]], s[perm[1]], s[perm[2]]));
            let fp = rr_field_spectral(&p, REFERENCE_TIME, 1.0, eps, 640.0).unwrap().field;
            let want = Vec3::new(f[perm[0]], f[perm[1]], f[perm[2]]);
            assert!((fp - want).norm() < 1e-6 * f.norm(), "{perm:?}: {fp} vs {want}");
        }
    }
}
