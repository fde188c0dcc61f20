use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::{build_hamiltonian, evolve, fit_decay_rate, CouplingTerms, DecayFit, Engine, EvolveOptions, FockTruncation, JointState};
use crate::error::Result;
use crate::geometry::{build_resonant_bath, golden_rule_rate, CouplingNormalization};
use crate::trajectory::Trajectory;
use crate::units::SpinSystem;

/// Spontaneous-decay comparison of the exact solver against the closed-form rate.
///
/// The bath is a uniform comb of `n_modes` modes with spacing
/// `spacing_over_beta · β` centred on ω, so the comb looks continuous to the
/// decaying spin until the recurrence time `2π/spacing`. The fit window ends
/// at `window_fraction` of that time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OracleSetup {
    pub omega: f64,
    pub beta_over_omega: f64,
    pub n_modes: usize,
    pub spacing_over_beta: f64,
    pub n_max: usize,
    pub n_samples: usize,
    pub window_fraction: f64,
    pub normalization: CouplingNormalization,
    pub terms: CouplingTerms,
    pub engine: Engine,
    pub dimension_cap: usize,
}

impl Default for OracleSetup {
    fn default() -> Self {
        Self {
            omega: 1.0,
            beta_over_omega: 1e-3,
            n_modes: 12,
            spacing_over_beta: 0.8,
            n_max: 1,
            n_samples: 240,
            window_fraction: 0.75,
            normalization: CouplingNormalization::RateMatched,
            terms: CouplingTerms::Full,
            engine: Engine::Chebyshev,
            dimension_cap: super::DEFAULT_DIMENSION_CAP,
        }
    }
}

impl OracleSetup {
    pub fn spin(&self) -> Result<SpinSystem> {
        let alpha = (6.0 * PI * PI * self.beta_over_omega / (self.omega * self.omega)).sqrt();
        SpinSystem::from_coupling(alpha, self.omega)
    }

    pub fn beta(&self) -> f64 {
        self.beta_over_omega * self.omega
    }

    pub fn spacing(&self) -> f64 {
        self.spacing_over_beta * self.beta()
    }

    pub fn recurrence_time(&self) -> f64 {
        2.0 * PI / self.spacing()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OracleRun {
    pub coupling_scale: f64,
    /// `s² β` from the closed form.
    pub beta_closed_form: f64,
    pub beta_golden_rule: f64,
    pub fit: DecayFit,
    pub recurrence_time: f64,
    pub window_end: f64,
    pub final_sz: f64,
    /// Largest upward step of ⟨S_z⟩ between consecutive samples.
    pub max_increase: f64,
    pub energy_drift: f64,
    pub norm_drift: f64,
    pub dimension: usize,
    #[serde(skip)]
    pub trajectory: Option<Trajectory>,
}

impl OracleRun {
    pub fn ratio(&self) -> f64 {
        self.fit.beta / self.beta_closed_form
    }
}

/// Evolve spin-up ⊗ vacuum with every coupling scaled by `coupling_scale` and fit the decay.
pub fn run_decay_oracle(setup: &OracleSetup, coupling_scale: f64) -> Result<OracleRun> {
    let spin = setup.spin()?;
    let half_width = 0.5 * setup.n_modes as f64 * setup.spacing();
    let modes = build_resonant_bath(setup.n_modes, half_width, &spin, setup.normalization)?.scaled(coupling_scale);
    let trunc = FockTruncation::new(setup.n_modes, setup.n_max)?;
    let h = build_hamiltonian(&spin, &modes, trunc, setup.terms, setup.dimension_cap)?;
    let t_r = setup.recurrence_time();
    let window_end = setup.window_fraction * t_r;
    let grid: Vec<f64> = (0..setup.n_samples).map(|i| window_end * i as f64 / (setup.n_samples - 1) as f64).collect();
    let psi0 = JointState::spin_vacuum(&trunc, 0.0, 0.0);
    let ev = evolve(
        &h,
        &psi0,
        &grid,
        &EvolveOptions {
            engine: setup.engine,
            ..Default::default()
        },
    )?;
    let fit = fit_decay_rate(&ev.trajectory, (0.0, window_end), 0.5)?;
    let sz = &ev.trajectory.sz;
    let max_increase = sz.windows(2).map(|w| w[1] - w[0]).fold(f64::NEG_INFINITY, f64::max);
    Ok(OracleRun {
        coupling_scale,
        beta_closed_form: coupling_scale * coupling_scale * setup.beta(),
        beta_golden_rule: golden_rule_rate(&modes, spin.omega, None)?,
        fit,
        recurrence_time: t_r,
        window_end,
        final_sz: *sz.last().expect("non-empty grid"),
        max_increase,
        energy_drift: ev.energy_drift,
        norm_drift: ev.norm_drift,
        dimension: trunc.dimension,
        trajectory: Some(ev.trajectory),
    })
}
