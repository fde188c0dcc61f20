//! Radiative frequency shifts Δ₁, Δ₂ with an explicit hard cutoff Λ.
//!
//! Δ₁ = C ∫₀^Λ x³/(x + ω) dx and Δ₂ = C P∫₀^Λ x³/(x − ω) dx with C = α²ħ/(12π²).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature::integrate;
use crate::units::{decay_rate, SpinSystem};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShiftMethod {
    ClosedForm,
    Quadrature,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShiftResult {
    pub delta1: f64,
    pub delta2: f64,
    pub omega_shifted: f64,
    pub cutoff: f64,
    pub method: ShiftMethod,
}

impl ShiftResult {
    fn new(spin: &SpinSystem, delta1: f64, delta2: f64, cutoff: f64, method: ShiftMethod) -> Self {
        Self {
            delta1,
            delta2,
            omega_shifted: spin.omega + delta1 - delta2,
            cutoff,
            method,
        }
    }

    /// Δ₂ − Δ₁, the net downward pull on the precession frequency.
    pub fn net(&self) -> f64 {
        self.delta2 - self.delta1
    }
}

/// `C = α²ħ/(12π²)` in the spin's unit system, i.e. β/(2ω³).
pub fn shift_prefactor(spin: &SpinSystem) -> f64 {
    0.5 * decay_rate(spin.alpha, 1.0, spin.units)
        .expect("unit frequency is in range")
        .value
}

fn check_cutoff(spin: &SpinSystem, cutoff: f64, context: &'static str) -> Result<()> {
    let w = spin.omega;
    if !(w > 0.0) {
        return Err(Error::domain(context, "Larmor frequency must be positive"));
    }
    if !(cutoff > 2.0 * w) || !cutoff.is_finite() {
        return Err(Error::domain(
            context,
            format!("cutoff {cutoff} must exceed 2*omega = {}", 2.0 * w),
        ));
    }
    Ok(())
}

pub fn shift_closed_form(spin: &SpinSystem, cutoff: f64) -> Result<ShiftResult> {
    check_cutoff(spin, cutoff, "shift_closed_form")?;
    let c = shift_prefactor(spin);
    let (w, l) = (spin.omega, cutoff);
    let poly = l.powi(3) / 3.0 + w * w * l;
    let d1 = c * (poly - 0.5 * w * l * l - w.powi(3) * (l / w).ln_1p());
    let d2 = c * (poly + 0.5 * w * l * l + w.powi(3) * ((l - w) / w).ln());
    Ok(ShiftResult::new(spin, d1, d2, cutoff, ShiftMethod::ClosedForm))
}

const QUAD_ABS: f64 = 0.0;
const QUAD_REL: f64 = 1e-13;
const QUAD_SEGMENTS: usize = 2000;

/// Principal-value quadrature with a symmetric exclusion window `[ω − ε, ω + ε]`.
///
/// The excluded sliver contributes exactly `6ω²ε + 2ε³/3`. Either side of the
/// window is integrated in the variable `u = ln|x − ω|`, where the integrand
/// becomes the smooth `x³`.
pub fn shift_quadrature(spin: &SpinSystem, cutoff: f64, eps_exclusion: f64) -> Result<ShiftResult> {
    check_cutoff(spin, cutoff, "shift_quadrature")?;
    let w = spin.omega;
    let eps = eps_exclusion;
    if !(eps > 0.0) || !(eps < 0.1 * w) {
        return Err(Error::domain(
            "shift_quadrature",
            format!("exclusion half-width {eps} must lie in (0, omega/10)"),
        ));
    }
    if w - eps <= 0.0 || w + eps >= cutoff {
        return Err(Error::domain("shift_quadrature", "exclusion window touches 0 or the cutoff"));
    }
    let c = shift_prefactor(spin);

    let plus = integrate(|x| x.powi(3) / (x + w), 0.0, cutoff, QUAD_ABS, QUAD_REL, QUAD_SEGMENTS).value;

    let le = eps.ln();
    let left = -integrate(|u| (w - u.exp()).powi(3), le, w.ln(), QUAD_ABS, QUAD_REL, QUAD_SEGMENTS).value;
    let right = integrate(|u| (w + u.exp()).powi(3), le, (cutoff - w).ln(), QUAD_ABS, QUAD_REL, QUAD_SEGMENTS).value;
    let sliver = 6.0 * w * w * eps + 2.0 * eps.powi(3) / 3.0;
    let minus = left + sliver + right;

    Ok(ShiftResult::new(spin, c * plus, c * minus, cutoff, ShiftMethod::Quadrature))
}
