//! Closed-form Markovian dynamics: the finite-time memory kernels and their
//! large-time limits, longitudinal relaxation of ⟨S_z⟩ and damped precession
//! of ⟨S_+⟩.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::shift::ShiftResult;
use crate::trajectory::Trajectory;
use crate::units::SpinSystem;

/// Which frequency combination enters the kernel exponent.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Branch {
    /// ω_k − ω
    Minus,
    /// ω_k + ω
    Plus,
    /// ω_k
    Zero,
}

impl Branch {
    pub fn detuning(self, omega_k: f64, omega: f64) -> f64 {
        match self {
            Branch::Minus => omega_k - omega,
            Branch::Plus => omega_k + omega,
            Branch::Zero => omega_k,
        }
    }
}

/// `∫₀ᵗ dt′ e^{iΔ(t′−t)} = −i(1 − cos Δt)/Δ + sin(Δt)/Δ`.
///
/// Below `|Δt| < 1e-6` a three-term Taylor series replaces the quotient.
pub fn kernel_integral_finite(omega_k: f64, omega: f64, branch: Branch, t: f64) -> Result<Complex64> {
    if !(t >= 0.0) {
        return Err(Error::domain("kernel_integral_finite", format!("t must be >= 0, got {t}")));
    }
    let d = branch.detuning(omega_k, omega);
    let x = d * t;
    if x.abs() < 1e-6 {
        let x2 = x * x;
        let re = t * (1.0 - x2 / 6.0 + x2 * x2 / 120.0);
        let im = -t * (x / 2.0 - x * x2 / 24.0 + x * x2 * x2 / 720.0);
        return Ok(Complex64::new(re, im));
    }
    Ok(Complex64::new(x.sin() / d, -(1.0 - x.cos()) / d))
}

/// Large-time replacement `i·principal_coefficient·P(…) + delta_weight·δ(ω_k − ω)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelLimit {
    /// Coefficient `c` such that the principal-value part is `i·c`, i.e. `−1/Δ`.
    pub principal_coefficient: f64,
    /// Weight of δ(ω_k − ω): π on the resonant branch, 0 otherwise.
    pub delta_weight: f64,
}

pub fn kernel_asymptotic(omega_k: f64, omega: f64, branch: Branch) -> Result<KernelLimit> {
    let d = branch.detuning(omega_k, omega);
    if d == 0.0 {
        return Err(Error::domain(
            "kernel_asymptotic",
            "principal part is not defined pointwise at zero detuning",
        ));
    }
    Ok(KernelLimit {
        principal_coefficient: -1.0 / d,
        delta_weight: if branch == Branch::Minus { PI } else { 0.0 },
    })
}

/// Right-hand side of `d⟨S_z⟩/dt = −β⟨S_z⟩ − βħ/2`.
pub fn sz_rhs(beta: f64, hbar_half: f64, sz: f64) -> f64 {
    -beta * sz - beta * hbar_half
}

fn check_grid(t_grid: &[f64], context: &'static str) -> Result<()> {
    if t_grid.first().is_some_and(|&t| !(t >= 0.0)) {
        return Err(Error::domain(context, "time grid must be non-negative"));
    }
    if t_grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::domain(context, "time grid must be strictly increasing"));
    }
    Ok(())
}

/// `⟨S_z(t)⟩ = A e^{−βt} − ħ/2` with `A = sz0 + ħ/2`.
pub fn solve_sz(spin: &SpinSystem, sz0: f64, t_grid: &[f64]) -> Result<Vec<f64>> {
    let hh = spin.hbar_half;
    if sz0.abs() > hh * (1.0 + 1e-12) {
        return Err(Error::domain("solve_sz", format!("|sz0| = {} exceeds hbar/2 = {hh}", sz0.abs())));
    }
    check_grid(t_grid, "solve_sz")?;
    let beta = spin.decay_rate().value;
    let a = sz0 + hh;
    Ok(t_grid.iter().map(|t| a * (-beta * t).exp() - hh).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Shifts {
    pub delta1: f64,
    pub delta2: f64,
}

impl From<&ShiftResult> for Shifts {
    fn from(s: &ShiftResult) -> Self {
        Shifts {
            delta1: s.delta1,
            delta2: s.delta2,
        }
    }
}

/// `⟨S_+(t)⟩ = B e^{(−β/2 + iΩ)t}` with `B = splus0`, `Ω = ω + Δ₁ − Δ₂`.
pub fn solve_splus(spin: &SpinSystem, splus0: Complex64, shifts: Shifts, t_grid: &[f64]) -> Result<Vec<Complex64>> {
    check_grid(t_grid, "solve_splus")?;
    let beta = spin.decay_rate().value;
    let big_omega = spin.omega + shifts.delta1 - shifts.delta2;
    let rate = Complex64::new(-0.5 * beta, big_omega);
    Ok(t_grid.iter().map(|&t| splus0 * (rate * t).exp()).collect())
}

/// Parameters of the closed-form trajectories.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MarkovianSolution {
    pub beta: f64,
    pub omega: f64,
    pub delta1: f64,
    pub delta2: f64,
    pub omega_shifted: f64,
    pub amplitude_a: f64,
    pub amplitude_b: Complex64,
    pub cutoff: Option<f64>,
    pub hbar_half: f64,
}

impl MarkovianSolution {
    pub fn new(spin: &SpinSystem, sz0: f64, splus0: Complex64, shifts: Option<&ShiftResult>) -> Result<Self> {
        let hh = spin.hbar_half;
        if sz0.abs() > hh * (1.0 + 1e-12) {
            return Err(Error::domain("markovian", format!("|sz0| = {} exceeds hbar/2", sz0.abs())));
        }
        let (delta1, delta2, cutoff) = shifts.map_or((0.0, 0.0, None), |s| (s.delta1, s.delta2, Some(s.cutoff)));
        Ok(Self {
            beta: spin.decay_rate().value,
            omega: spin.omega,
            delta1,
            delta2,
            omega_shifted: spin.omega + delta1 - delta2,
            amplitude_a: sz0 + hh,
            amplitude_b: splus0,
            cutoff,
            hbar_half: hh,
        })
    }

    pub fn sz(&self, t: f64) -> f64 {
        self.amplitude_a * (-self.beta * t).exp() - self.hbar_half
    }

    pub fn splus(&self, t: f64) -> Complex64 {
        self.amplitude_b * (Complex64::new(-0.5 * self.beta, self.omega_shifted) * t).exp()
    }

    pub fn trajectory(&self, t_grid: &[f64]) -> Result<Trajectory> {
        check_grid(t_grid, "markovian trajectory")?;
        Ok(Trajectory::new(
            t_grid.to_vec(),
            t_grid.iter().map(|&t| self.sz(t)).collect(),
            t_grid.iter().map(|&t| self.splus(t)).collect(),
            "analytic",
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ode::{solve, OdeOptions};
    use crate::quadrature::integrate;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn kernel_edge_values() {
        assert_eq!(kernel_integral_finite(2.0, 1.0, Branch::Minus, 0.0).unwrap(), Complex64::new(0.0, 0.0));
        let z = kernel_integral_finite(1.0, 1.0, Branch::Minus, 3.7).unwrap();
        assert_eq!(z, Complex64::new(3.7, 0.0));
        let z = kernel_integral_finite(2.0, 1.0, Branch::Minus, PI).unwrap();
        assert!((z - Complex64::new(0.0, -2.0)).norm() < 1e-15);
        assert!(kernel_integral_finite(2.0, 1.0, Branch::Plus, -1.0).is_err());
    }

    #[test]
    fn kernel_matches_direct_quadrature() {
        for (wk, br, t) in [(1.3, Branch::Minus, 4.0), (0.2, Branch::Plus, 7.5), (2.5, Branch::Zero, 1.1), (1.0 + 1e-9, Branch::Minus, 50.0)] {
            let d = br.detuning(wk, 1.0);
            let re = integrate(|s| (d * (s - t)).cos(), 0.0, t, 1e-14, 1e-13, 500).value;
            let im = integrate(|s| (d * (s - t)).sin(), 0.0, t, 1e-14, 1e-13, 500).value;
            let z = kernel_integral_finite(wk, 1.0, br, t).unwrap();
            assert!((z - Complex64::new(re, im)).norm() < 1e-11 * t.max(1.0), "{z} vs {re} {im}");
        }
    }

    #[test]
    fn series_is_continuous_at_switch() {
        for d in [0.999e-6, 1.001e-6] {
            let z = kernel_integral_finite(d, 0.0, Branch::Minus, 1.0).unwrap();
            let direct = Complex64::new(d.sin() / d, -(1.0 - d.cos()) / d);
            assert!((z - direct).norm() < 1e-10);
        }
    }

    #[test]
    fn asymptotic_pairs() {
        let k = kernel_asymptotic(2.0, 1.0, Branch::Minus).unwrap();
        assert_eq!(k.principal_coefficient, -1.0);
        assert_eq!(k.delta_weight, PI);
        let k = kernel_asymptotic(2.0, 1.0, Branch::Plus).unwrap();
        assert_eq!(k.delta_weight, 0.0);
        assert_relative_eq!(k.principal_coefficient, -1.0 / 3.0);
        let k = kernel_asymptotic(2.0, 1.0, Branch::Zero).unwrap();
        assert_eq!(k.delta_weight, 0.0);
        assert!(kernel_asymptotic(1.0, 1.0, Branch::Minus).is_err());
    }

    /// Smearing oracle: ∫ f(ω_k) K_t(ω_k) dω_k against the distributional limit
    /// π f(ω) − i P∫ f(ω_k)/(ω_k − ω) dω_k, with f a narrow Gaussian.
    #[test]
    fn smeared_kernel_approaches_distributional_limit() {
        let omega = 1.0;
        let width = 0.05;
        let centre = omega + 0.5 * width;
        let f = |x: f64| (-(x - centre).powi(2) / (2.0 * width * width)).exp();
        let t = 200.0 / width;
        let lo = centre - 12.0 * width;
        let hi = centre + 12.0 * width;
        let mut breaks: Vec<f64> = (0..=400).map(|i| lo + (hi - lo) * i as f64 / 400.0).collect();
        breaks.push(omega);
        breaks.sort_by(f64::total_cmp);
        let mut re = 0.0;
        let mut im = 0.0;
        for w in breaks.windows(2) {
            re += integrate(|x| f(x) * kernel_integral_finite(x, omega, Branch::Minus, t).unwrap().re, w[0], w[1], 1e-14, 1e-12, 200).value;
            im += integrate(|x| f(x) * kernel_integral_finite(x, omega, Branch::Minus, t).unwrap().im, w[0], w[1], 1e-14, 1e-12, 200).value;
        }
        // principal value by symmetric subtraction around ω
        let half = hi - omega;
        let sym = integrate(|u| (f(omega + u) - f(omega - u)) / u, 0.0, omega - lo, 1e-14, 1e-12, 500).value;
        let tail = integrate(|x| f(x) / (x - omega), 2.0 * omega - lo, hi, 1e-14, 1e-12, 500).value;
        assert!(half > omega - lo);
        let pv = sym + tail;
        let lim = kernel_asymptotic(omega + 1.0, omega, Branch::Minus).unwrap();
        let expect_re = lim.delta_weight * f(omega);
        let expect_im = -pv;
        let err = ((re - expect_re).powi(2) + (im - expect_im).powi(2)).sqrt();
        let scale = (expect_re.powi(2) + expect_im.powi(2)).sqrt();
        assert!(err / scale < 0.02, "re {re} vs {expect_re}, im {im} vs {expect_im}");
    }

    fn spin() -> SpinSystem {
        SpinSystem::from_coupling(0.5, 1.3).unwrap()
    }

    #[test]
    fn sz_edge_cases() {
        let s = spin();
        let beta = s.decay_rate().value;
        assert_eq!(solve_sz(&s, 0.5, &[0.0]).unwrap()[0], 0.5);
        let down = solve_sz(&s, -0.5, &[0.0, 1.0, 1e6]).unwrap();
        assert!(down.iter().all(|&z| z == -0.5));
        let z = solve_sz(&s, 0.5, &[1.0 / beta]).unwrap()[0];
        assert_relative_eq!(z, (-1.0f64).exp() - 0.5, max_relative = 1e-14);
        assert_relative_eq!(z, -0.13212, max_relative = 1e-4);
        let late = solve_sz(&s, 0.5, &[60.0 / beta]).unwrap()[0];
        assert_relative_eq!(late, -0.5, max_relative = 1e-12);
        assert!(solve_sz(&s, 0.6, &[0.0]).is_err());
        assert!(solve_sz(&s, 0.1, &[1.0, 0.5]).is_err());
    }

    #[test]
    fn sz_matches_ode_integration() {
        let s = spin();
        let beta = s.decay_rate().value;
        let grid: Vec<f64> = (0..=100).map(|i| i as f64 * 0.1 / beta).collect();
        let closed = solve_sz(&s, 0.3, &grid).unwrap();
        let (num, _) = solve(
            |_, y: &Vec<f64>, dy: &mut Vec<f64>| dy[0] = sz_rhs(beta, 0.5, y[0]),
            0.0,
            &vec![0.3],
            &grid,
            &OdeOptions { rtol: 1e-12, atol: 1e-14, ..Default::default() },
        )
        .unwrap();
        for (c, n) in closed.iter().zip(&num) {
            assert!((c - n[0]).abs() < 1e-9);
        }
    }

    #[test]
    fn fixed_point_is_exact() {
        assert_eq!(sz_rhs(0.37, 0.5, -0.5), 0.0);
    }

    #[test]
    fn splus_cases() {
        let decoupled = SpinSystem::from_coupling(0.0, 2.0).unwrap();
        let b = Complex64::new(0.3, -0.1);
        let grid = [0.0, 0.7, 5.0];
        let p = solve_splus(&decoupled, b, Shifts::default(), &grid).unwrap();
        for (t, v) in grid.iter().zip(&p) {
            assert!((v - b * Complex64::new(0.0, 2.0 * t).exp()).norm() < 1e-15);
        }
        assert_eq!(p[0], b);
        let s = spin();
        let beta = s.decay_rate().value;
        let p = solve_splus(&s, b, Shifts { delta1: 0.01, delta2: 0.03 }, &[2.0 / beta]).unwrap();
        assert_relative_eq!(p[0].norm() / b.norm(), (-1.0f64).exp(), max_relative = 1e-12);
    }

    #[test]
    fn spin_up_has_no_transverse_part() {
        let sol = MarkovianSolution::new(&spin(), 0.5, Complex64::new(0.0, 0.0), None).unwrap();
        let tr = sol.trajectory(&[0.0, 1.0, 100.0]).unwrap();
        assert!(tr.splus.iter().all(|p| p.norm() == 0.0));
        assert_eq!(sol.omega_shifted, sol.omega + sol.delta1 - sol.delta2);
    }

    proptest! {
        #[test]
        fn bloch_cone_and_monotonicity(theta in 0.0f64..PI, phi in 0.0f64..(2.0 * PI), alpha in 0.05f64..2.0) {
            let s = SpinSystem::from_coupling(alpha, 1.0).unwrap();
            let sz0 = 0.5 * theta.cos();
            let b = Complex64::from_polar(0.5 * theta.sin(), phi);
            let sol = MarkovianSolution::new(&s, sz0, b, None).unwrap();
            let grid: Vec<f64> = (0..50).map(|i| i as f64 * 0.2 / sol.beta).collect();
            let tr = sol.trajectory(&grid).unwrap();
            prop_assert!(tr.max_cone_excess(0.5) <= 1e-12);
            for (sx, p) in tr.sx().zip(&tr.splus) {
                prop_assert_eq!(sx, p.re);
            }
            if sz0 > -0.5 + 1e-9 {
                prop_assert!(tr.sz.windows(2).all(|w| w[1] < w[0]));
            }
        }
    }
}
