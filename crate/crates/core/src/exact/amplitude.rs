use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::{mode_expectation, observe, propagate, EvolveOptions, Hamiltonian, JointState};
use crate::error::{Error, Result};

pub const MIN_SAMPLES_PER_PERIOD: f64 = 40.0;

/// Direct `⟨a_m(t)⟩` against the formal solution of its Heisenberg equation
/// `ȧ_m = −iω_m a_m − α g_m·S` evaluated on the evolved spin history.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AmplitudeCheck {
    pub lhs: Complex64,
    pub rhs: Complex64,
    pub residual: f64,
    /// `residual / max(|lhs|, |rhs|)`, zero when both sides vanish.
    pub relative_residual: f64,
    pub samples_per_period: f64,
    pub intervals: usize,
}

/// `rhs = a_m(0)e^{−iω_m t} − α ∫₀ᵗ g_m·⟨S(t′)⟩ e^{−iω_m(t−t′)} dt′`, the
/// integral by composite Simpson on a uniform grid of at least
/// `samples_per_period` points per period of `ω_m`.
pub fn mode_amplitude_check(
    h: &Hamiltonian,
    psi0: &JointState,
    mode: usize,
    t: f64,
    samples_per_period: f64,
    opts: &EvolveOptions,
) -> Result<AmplitudeCheck> {
    if mode >= h.n_modes() {
        return Err(Error::domain("mode_amplitude_check", format!("mode {mode} out of range")));
    }
    if !(t > 0.0) {
        return Err(Error::domain("mode_amplitude_check", "t must be positive"));
    }
    if !(samples_per_period >= MIN_SAMPLES_PER_PERIOD) {
        return Err(Error::Resolution {
            actual: samples_per_period,
            required: MIN_SAMPLES_PER_PERIOD,
        });
    }
    let wm = h.mode_omega(mode);
    let period = 2.0 * PI / wm;
    let mut n = (samples_per_period * t / period).ceil() as usize;
    n += n % 2;
    let dt = t / n as f64;
    let grid: Vec<f64> = (0..=n).map(|i| i as f64 * dt).collect();
    let g = h.coupling(mode);
    let a0 = mode_expectation(&h.trunc, &psi0.amplitudes, mode);

    let mut integral = Complex64::new(0.0, 0.0);
    let mut lhs = Complex64::new(0.0, 0.0);
    propagate(h, psi0, &grid, opts, |i, tp, psi| {
        let o = observe(&h.trunc, psi);
        let gs = g[0] * o.splus.re + g[1] * o.splus.im + g[2] * o.sz;
        let w = if i == 0 || i == n {
            1.0
        } else if i % 2 == 1 {
            4.0
        } else {
            2.0
        };
        integral += Complex64::from_polar(gs * w, -wm * (t - tp));
        if i == n {
            lhs = mode_expectation(&h.trunc, psi, mode);
        }
        Ok(())
    })?;
    let rhs = a0 * Complex64::from_polar(1.0, -wm * t) - integral * (h.alpha * dt / 3.0);
    let residual = (lhs - rhs).norm();
    let scale = lhs.norm().max(rhs.norm());
    Ok(AmplitudeCheck {
        lhs,
        rhs,
        residual,
        relative_residual: if scale > 0.0 { residual / scale } else { 0.0 },
        samples_per_period: n as f64 * period / t,
        intervals: n,
    })
}

#[cfg(test)]
mod tests {
    use super::super::tests::single_mode;
    use super::super::*;
    use super::*;
    use crate::geometry::Vec3;
    use crate::units::SpinSystem;

    fn setup(g: f64) -> (Hamiltonian, JointState) {
        let spin = SpinSystem::from_coupling(1.0, 1.0).unwrap();
        let modes = single_mode(1.0, Vec3::new(g, 0.5 * g, 0.3 * g), 1.0);
        let t = FockTruncation::new(1, 4).unwrap();
        let h = build_hamiltonian(&spin, &modes, t, CouplingTerms::Full, DEFAULT_DIMENSION_CAP).unwrap();
        (h, JointState::spin_vacuum(&t, PI / 2.0, 0.0))
    }

    fn dense() -> EvolveOptions {
        EvolveOptions {
            engine: Engine::Dense,
            ..Default::default()
        }
    }

    #[test]
    fn zero_coupling_gives_zero() {
        let (h, psi) = setup(0.0);
        let c = mode_amplitude_check(&h, &psi, 0, 30.0, 40.0, &dense()).unwrap();
        assert_eq!(c.lhs, Complex64::new(0.0, 0.0));
        assert_eq!(c.rhs, Complex64::new(0.0, 0.0));
    }

    #[test]
    fn formal_solution_holds_and_converges() {
        let (h, psi) = setup(0.004);
        let t = 20.3 * 2.0 * PI;
        let coarse = mode_amplitude_check(&h, &psi, 0, t, 40.0, &dense()).unwrap();
        let fine = mode_amplitude_check(&h, &psi, 0, t, 80.0, &dense()).unwrap();
        assert!(coarse.relative_residual <= 1e-3, "{coarse:?}");
        assert!(coarse.residual >= 4.0 * fine.residual, "{coarse:?} {fine:?}");
        assert!(coarse.lhs.norm() > 1e-3);
    }

    #[test]
    fn coarse_grid_is_rejected() {
        let (h, psi) = setup(0.004);
        match mode_amplitude_check(&h, &psi, 0, 10.0, 20.0, &dense()) {
            Err(Error::Resolution { required, .. }) => assert_eq!(required, 40.0),
            other => panic!("{other:?}"),
        }
    }
}
