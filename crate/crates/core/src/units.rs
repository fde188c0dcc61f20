//! Unit system, CODATA constants and the base spin-system parameters.
//!
//! All internal computation runs in natural units (ħ = c = 1, unit vacuum
//! prefactor, seconds as the time unit). SI values are produced only for
//! reporting.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// CODATA 2018 values.
pub mod codata {
    pub const ELEMENTARY_CHARGE: f64 = 1.602176634e-19;
    pub const ELECTRON_MASS: f64 = 9.1093837015e-31;
    pub const HBAR: f64 = 1.054571817e-34;
    pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;
    pub const VACUUM_PERMEABILITY: f64 = 1.25663706212e-6;
    pub const VACUUM_PERMITTIVITY: f64 = 8.8541878128e-12;
    pub const TESLA_PER_GAUSS: f64 = 1e-4;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum UnitMode {
    #[default]
    Natural,
    #[serde(rename = "si")]
    SI,
}

impl UnitMode {
    pub fn hbar(self) -> f64 {
        match self {
            UnitMode::Natural => 1.0,
            UnitMode::SI => codata::HBAR,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            UnitMode::Natural => "natural",
            UnitMode::SI => "si",
        }
    }
}

/// Dimension of a scalar for natural/SI conversion.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QuantityKind {
    Time,
    AngularFrequency,
    Length,
    Energy,
    Mass,
}

impl QuantityKind {
    /// Multiplier taking an SI value to natural units.
    fn si_to_natural(self) -> f64 {
        use codata::*;
        match self {
            QuantityKind::Time | QuantityKind::AngularFrequency => 1.0,
            QuantityKind::Length => 1.0 / SPEED_OF_LIGHT,
            QuantityKind::Energy => 1.0 / HBAR,
            QuantityKind::Mass => SPEED_OF_LIGHT * SPEED_OF_LIGHT / HBAR,
        }
    }
}

pub fn to_natural(kind: QuantityKind, si_value: f64) -> f64 {
    si_value * kind.si_to_natural()
}

pub fn to_si(kind: QuantityKind, natural_value: f64) -> f64 {
    natural_value / kind.si_to_natural()
}

/// Magnetic flux density, stored in tesla.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
pub struct MagneticField(f64);

impl MagneticField {
    pub fn from_tesla(t: f64) -> Self {
        Self(t)
    }

    pub fn from_gauss(g: f64) -> Self {
        Self(g * codata::TESLA_PER_GAUSS)
    }

    pub fn tesla(self) -> f64 {
        self.0
    }
}

/// Larmor frequency ω = |e| B_L / m.
pub fn larmor_frequency(charge_magnitude: f64, mass: f64, lab_field: f64) -> Result<f64> {
    if !(mass > 0.0) || !mass.is_finite() {
        return Err(Error::domain("larmor_frequency", format!("mass must be positive, got {mass}")));
    }
    if !(lab_field >= 0.0) {
        return Err(Error::domain(
            "larmor_frequency",
            format!("lab field must be non-negative, got {lab_field}"),
        ));
    }
    Ok(charge_magnitude.abs() * lab_field / mass)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecayRate {
    pub value: f64,
    pub units: UnitMode,
    /// Formula that produced `value`.
    pub convention: &'static str,
}

pub const NATURAL_RATE_CONVENTION: &str = "beta = alpha^2 omega^3 / (6 pi^2)  [hbar = c = 1]";
pub const SI_RATE_CONVENTION: &str = "beta = mu0 alpha^2 hbar omega^3 / (6 pi^2 c^3)";

/// Spontaneous spin-flip rate β of the closed-form Markovian model.
pub fn decay_rate(alpha: f64, omega: f64, units: UnitMode) -> Result<DecayRate> {
    if !(omega >= 0.0) {
        return Err(Error::domain("decay_rate", format!("omega must be non-negative, got {omega}")));
    }
    let natural = alpha * alpha * omega.powi(3) / (6.0 * PI * PI);
    let (value, convention) = match units {
        UnitMode::Natural => (natural, NATURAL_RATE_CONVENTION),
        UnitMode::SI => {
            let c = codata::SPEED_OF_LIGHT;
            (
                codata::VACUUM_PERMEABILITY * codata::HBAR * natural / (c * c * c),
                SI_RATE_CONVENTION,
            )
        }
    };
    Ok(DecayRate {
        value,
        units,
        convention,
    })
}

/// Natural-unit shorthand for [`decay_rate`].
pub fn natural_decay_rate(alpha: f64, omega: f64) -> f64 {
    alpha * alpha * omega.max(0.0).powi(3) / (6.0 * PI * PI)
}

/// A spin-½ moment in a static field along z.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpinSystem {
    pub charge_magnitude: f64,
    pub mass: f64,
    pub lab_field: f64,
    /// Charge-to-mass coupling |e|/m.
    pub alpha: f64,
    /// Larmor angular frequency, always `alpha * lab_field` for physical constructions.
    pub omega: f64,
    pub hbar_half: f64,
    pub units: UnitMode,
}

impl SpinSystem {
    pub fn new(charge_magnitude: f64, mass: f64, lab_field: f64, units: UnitMode) -> Result<Self> {
        larmor_frequency(charge_magnitude, mass, lab_field)?;
        let alpha = charge_magnitude.abs() / mass;
        Ok(Self {
            charge_magnitude: charge_magnitude.abs(),
            mass,
            lab_field,
            alpha,
            omega: alpha * lab_field,
            hbar_half: 0.5 * units.hbar(),
            units,
        })
    }

    /// Electron in SI units.
    pub fn electron(field: MagneticField) -> Result<Self> {
        Self::new(
            codata::ELEMENTARY_CHARGE,
            codata::ELECTRON_MASS,
            field.tesla(),
            UnitMode::SI,
        )
    }

    /// Natural-unit system parametrised directly by coupling and Larmor frequency.
    ///
    /// With `alpha = 0` the field is reported as zero and `omega` is kept as given,
    /// which is how a decoupled spin is represented.
    pub fn from_coupling(alpha: f64, omega: f64) -> Result<Self> {
        if !(alpha >= 0.0) || !alpha.is_finite() {
            return Err(Error::domain("spin_system", format!("alpha must be >= 0, got {alpha}")));
        }
        if !(omega >= 0.0) || !omega.is_finite() {
            return Err(Error::domain("spin_system", format!("omega must be >= 0, got {omega}")));
        }
        let lab_field = if alpha > 0.0 { omega / alpha } else { 0.0 };
        Ok(Self {
            charge_magnitude: alpha,
            mass: 1.0,
            lab_field,
            alpha,
            omega,
            hbar_half: 0.5,
            units: UnitMode::Natural,
        })
    }

    pub fn decay_rate(&self) -> DecayRate {
        // omega >= 0 by construction
        decay_rate(self.alpha, self.omega, self.units).expect("omega validated at construction")
    }

    /// Copy with the vacuum coupling scaled and the Larmor frequency unchanged.
    pub fn with_alpha(&self, alpha: f64) -> Result<Self> {
        Self::from_coupling(alpha, self.omega)
    }
}
