//! Photon-mode geometry: polarization bases, the angular polarization-sum
//! integrals, and discretized free-space mode sets.
//!
//! Field couplings follow the mode expansion of the magnetic field at the
//! origin, `B = Σ_m i g_m (a_m − a_m†)`, with
//! `g_m = w_m (k × e_λ) / √(2ω_k)` and `w_m² = N · ω_k² Δω ΔΩ / (2π)³`
//! where Δω ΔΩ is the mode's share of frequency and solid angle and `N` is
//! set by [`CouplingNormalization`].

use std::f64::consts::PI;
use std::path::Path;

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature::{gauss_legendre, gauss_legendre_on};
use crate::units::SpinSystem;

pub type Vec3 = Vector3<f64>;

/// Below this transverse magnitude `ẑ × k̂` is considered degenerate and
/// `e1` falls back to the projection of `x̂`.
const POLE_THRESHOLD: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolarizationBasis {
    pub k_hat: Vec3,
    pub e1: Vec3,
    pub e2: Vec3,
}

impl PolarizationBasis {
    pub fn polarization(&self, lambda: u8) -> Vec3 {
        if lambda == 1 {
            self.e1
        } else {
            self.e2
        }
    }
}

/// Deterministic transverse basis for a propagation direction.
///
/// Convention: `e1 = normalize(ẑ × k̂)`, or the normalized projection of `x̂`
/// transverse to `k̂` when `k̂` is within 1e-6 of the z axis; `e2 = k̂ × e1`.
pub fn polarization_basis(k_hat: Vec3) -> Result<PolarizationBasis> {
    let n = k_hat.norm();
    if !n.is_finite() || (n - 1.0).abs() > 1e-12 {
        return Err(Error::domain(
            "polarization_basis",
            format!("direction must be a unit vector, |k| = {n}"),
        ));
    }
    let k = k_hat / n;
    let zx = Vec3::z().cross(&k);
    let e1 = if zx.norm() > POLE_THRESHOLD {
        zx.normalize()
    } else {
        let x = Vec3::x();
        (x - k * x.dot(&k)).normalize()
    };
    let e2 = k.cross(&e1);
    Ok(PolarizationBasis { k_hat: k, e1, e2 })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    X,
    Y,
    Z,
}

impl Axis {
    pub fn index(self) -> usize {
        match self {
            Axis::X => 0,
            Axis::Y => 1,
            Axis::Z => 2,
        }
    }

    pub fn from_index(i: usize) -> Result<Self> {
        match i {
            0 => Ok(Axis::X),
            1 => Ok(Axis::Y),
            2 => Ok(Axis::Z),
            _ => Err(Error::domain("axis", format!("axis index {i} is not one of 0, 1, 2"))),
        }
    }
}

impl std::str::FromStr for Axis {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "x" | "0" => Ok(Axis::X),
            "y" | "1" => Ok(Axis::Y),
            "z" | "2" => Ok(Axis::Z),
            other => Err(Error::domain("axis", format!("unknown axis {other:?}"))),
        }
    }
}

/// Product-rule directions on the unit sphere: Gauss–Legendre in cos θ and
/// the periodic trapezoid rule in φ. Returns `(k̂, solid-angle weight)`.
pub fn sphere_rule(n_theta: usize, n_phi: usize) -> Vec<(Vec3, f64)> {
    let (mu, w_mu) = gauss_legendre(n_theta);
    let dphi = 2.0 * PI / n_phi as f64;
    let mut out = Vec::with_capacity(n_theta * n_phi);
    for (c, wc) in mu.iter().zip(&w_mu) {
        let s = (1.0 - c * c).max(0.0).sqrt();
        for b in 0..n_phi {
            let phi = b as f64 * dphi;
            out.push((Vec3::new(s * phi.cos(), s * phi.sin(), *c), wc * dphi));
        }
    }
    out
}

/// Quadrature value of `∫dΩ Σ_λ (k̂×e_λ)_i (k̂×e_λ)_j`.
pub fn angular_polarization_integral(i: Axis, j: Axis, n_theta: usize, n_phi: usize) -> Result<f64> {
    if n_theta < 2 || n_phi < 2 {
        return Err(Error::domain(
            "angular_polarization_integral",
            format!("need at least 2x2 nodes, got {n_theta}x{n_phi}"),
        ));
    }
    let mut total = 0.0;
    for (k, w) in sphere_rule(n_theta, n_phi) {
        let basis = polarization_basis(k)?;
        for e in [basis.e1, basis.e2] {
            let v = k.cross(&e);
            total += w * v[i.index()] * v[j.index()];
        }
    }
    Ok(total)
}

/// Overall scale applied to `|g|²`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CouplingNormalization {
    /// `|g|²` scaled by 1/π so the discretized golden-rule flip rate converges
    /// to the closed-form `decay_rate`.
    #[default]
    RateMatched,
    /// Bare vector-potential normalization. Its golden-rule flip rate
    /// converges to π × `decay_rate`.
    Field,
}

impl CouplingNormalization {
    pub fn factor(self) -> f64 {
        match self {
            CouplingNormalization::RateMatched => 1.0 / PI,
            CouplingNormalization::Field => 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mode {
    pub omega_k: f64,
    pub k_hat: Vec3,
    /// Polarization index, 1 or 2.
    pub lambda: u8,
    pub coupling: Vec3,
}

impl Mode {
    /// `|⟨↓, 1_m| α i(g·S)(a − a†) |↑, 0⟩|²` with ħ = 1.
    pub fn flip_strength(&self, alpha: f64) -> f64 {
        0.25 * alpha * alpha * (self.coupling.x.powi(2) + self.coupling.y.powi(2))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrequencyNode {
    pub omega: f64,
    pub weight: f64,
}

/// Immutable set of discretized vacuum modes.
#[derive(Debug, Clone, PartialEq)]
pub struct ModeSet {
    pub modes: Vec<Mode>,
    pub frequency_nodes: Vec<FrequencyNode>,
    pub omega_min: f64,
    pub omega_max: f64,
    pub alpha: f64,
    pub normalization: CouplingNormalization,
}

fn coupling_for(omega: f64, measure: f64, dir: Vec3, polarization: Vec3, norm: CouplingNormalization) -> Vec3 {
    // w² = N ω² (Δω ΔΩ) / (2π)³ ; k × e = ω (k̂ × e)
    let w2 = norm.factor() * omega * omega * measure / (2.0 * PI).powi(3);
    let k_cross_e = dir.cross(&polarization) * omega;
    k_cross_e * (w2 / (2.0 * omega)).sqrt()
}

/// Composite Gauss–Legendre frequency nodes over `[omega_min, omega_max]`,
/// with panels four times narrower within `|ω_k − ω| < 0.2ω`.
pub fn frequency_nodes(n_freq: usize, omega_min: f64, omega_max: f64, omega: f64) -> Vec<FrequencyNode> {
    let lo = omega_min.max(0.8 * omega).min(omega_max);
    let hi = omega_max.min(1.2 * omega).max(lo);
    let zones: Vec<(f64, f64, f64)> = [(omega_min, lo, 1.0), (lo, hi, 4.0), (hi, omega_max, 1.0)]
        .into_iter()
        .filter(|(a, b, _)| b > a)
        .collect();
    let per_panel = if n_freq.is_multiple_of(4) && n_freq / 4 >= zones.len() {
        4
    } else if n_freq.is_multiple_of(2) && n_freq / 2 >= zones.len() {
        2
    } else {
        1
    };
    let panels = n_freq / per_panel;
    let zones = if panels < zones.len() {
        vec![(omega_min, omega_max, 1.0)]
    } else {
        zones
    };

    // largest-remainder apportionment, at least one panel per zone
    let weights: Vec<f64> = zones.iter().map(|(a, b, d)| (b - a) * d).collect();
    let total: f64 = weights.iter().sum();
    let spare = panels - zones.len();
    let mut counts: Vec<usize> = vec![1; zones.len()];
    let quotas: Vec<f64> = weights.iter().map(|w| w / total * spare as f64).collect();
    let mut assigned = 0;
    for (c, q) in counts.iter_mut().zip(&quotas) {
        *c += q.floor() as usize;
        assigned += q.floor() as usize;
    }
    let mut order: Vec<usize> = (0..zones.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = quotas[a] - quotas[a].floor();
        let rb = quotas[b] - quotas[b].floor();
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    for &z in order.iter().take(spare - assigned) {
        counts[z] += 1;
    }

    let mut nodes = Vec::with_capacity(n_freq);
    for ((a, b, _), count) in zones.iter().zip(&counts) {
        let width = (b - a) / *count as f64;
        for p in 0..*count {
            let pa = a + p as f64 * width;
            for (x, w) in gauss_legendre_on(per_panel, pa, pa + width) {
                nodes.push(FrequencyNode { omega: x, weight: w });
            }
        }
    }
    nodes
}

/// Free-space mode set on a frequency × direction × polarization product grid.
///
/// `n_angular` Gauss–Legendre nodes in cos θ and `2·n_angular − 1` trapezoid
/// nodes in φ; the angular sums are exact for `n_angular ≥ 2`.
pub fn build_mode_set(
    n_freq: usize,
    n_angular: usize,
    omega_min: f64,
    omega_max: f64,
    spin: &SpinSystem,
    normalization: CouplingNormalization,
) -> Result<ModeSet> {
    if !(omega_min > 0.0) || !(omega_max > omega_min) || !omega_max.is_finite() {
        return Err(Error::domain(
            "build_mode_set",
            format!("empty or invalid frequency window [{omega_min}, {omega_max}]"),
        ));
    }
    if n_freq == 0 || n_angular == 0 {
        return Err(Error::domain("build_mode_set", "n_freq and n_angular must be >= 1"));
    }
    let nodes = frequency_nodes(n_freq, omega_min, omega_max, spin.omega);
    let directions = sphere_rule(n_angular, 2 * n_angular - 1);
    let mut modes = Vec::with_capacity(nodes.len() * directions.len() * 2);
    for node in &nodes {
        for (dir, dw) in &directions {
            let basis = polarization_basis(*dir)?;
            for lambda in [1u8, 2] {
                let g = coupling_for(node.omega, node.weight * dw, basis.k_hat, basis.polarization(lambda), normalization);
                modes.push(Mode {
                    omega_k: node.omega,
                    k_hat: basis.k_hat,
                    lambda,
                    coupling: g,
                });
            }
        }
    }
    Ok(ModeSet {
        modes,
        frequency_nodes: nodes,
        omega_min,
        omega_max,
        alpha: spin.alpha,
        normalization,
    })
}

/// Compact bath for the exact solver: `n_modes` single modes on a uniform
/// midpoint grid over `ω ± half_width`, each carrying the full solid angle
/// and both polarizations of its frequency slice.
///
/// Coupling directions `u_j = (√⅔ cos φ_j, √⅔ sin φ_j, 1/√3)` with
/// `φ_j = 2πj/3`, so every mode drives spin flips equally and each
/// consecutive triple has an isotropic coupling tensor.
pub fn build_resonant_bath(
    n_modes: usize,
    half_width: f64,
    spin: &SpinSystem,
    normalization: CouplingNormalization,
) -> Result<ModeSet> {
    let omega = spin.omega;
    if n_modes == 0 {
        return Err(Error::domain("build_resonant_bath", "need at least one mode"));
    }
    if !(half_width > 0.0) || !(omega - half_width > 0.0) {
        return Err(Error::domain(
            "build_resonant_bath",
            format!("window {omega} ± {half_width} must be positive and non-empty"),
        ));
    }
    let spacing = 2.0 * half_width / n_modes as f64;
    let mut modes = Vec::with_capacity(n_modes);
    let mut nodes = Vec::with_capacity(n_modes);
    let uz = 1.0 / 3f64.sqrt();
    let ur = (2.0f64 / 3.0).sqrt();
    for j in 0..n_modes {
        let w = omega - half_width + (j as f64 + 0.5) * spacing;
        let phi = 2.0 * PI * (j % 3) as f64 / 3.0;
        let u = Vec3::new(ur * phi.cos(), ur * phi.sin(), uz);
        let k_hat = (Vec3::z() - u * uz).normalize();
        let basis = polarization_basis(k_hat)?;
        let g = coupling_for(w, spacing * 8.0 * PI, basis.k_hat, basis.e1, normalization);
        nodes.push(FrequencyNode { omega: w, weight: spacing });
        modes.push(Mode {
            omega_k: w,
            k_hat: basis.k_hat,
            lambda: 1,
            coupling: g,
        });
    }
    Ok(ModeSet {
        modes,
        frequency_nodes: nodes,
        omega_min: omega - half_width,
        omega_max: omega + half_width,
        alpha: spin.alpha,
        normalization,
    })
}

impl ModeSet {
    /// Wrap explicit modes; the frequency window is their span.
    pub fn from_modes(modes: Vec<Mode>, alpha: f64, normalization: CouplingNormalization) -> Result<ModeSet> {
        if modes.is_empty() {
            return Err(Error::domain("mode_set", "no modes given"));
        }
        if modes.iter().any(|m| !(m.omega_k > 0.0)) {
            return Err(Error::domain("mode_set", "mode frequencies must be positive"));
        }
        let omega_min = modes.iter().map(|m| m.omega_k).fold(f64::INFINITY, f64::min);
        let omega_max = modes.iter().map(|m| m.omega_k).fold(f64::NEG_INFINITY, f64::max);
        let frequency_nodes = modes.iter().map(|m| FrequencyNode { omega: m.omega_k, weight: 0.0 }).collect();
        Ok(ModeSet {
            modes,
            frequency_nodes,
            omega_min,
            omega_max,
            alpha,
            normalization,
        })
    }

    pub fn len(&self) -> usize {
        self.modes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.modes.is_empty()
    }

    /// Copy with every coupling multiplied by `s`.
    pub fn scaled(&self, s: f64) -> ModeSet {
        let mut out = self.clone();
        for m in &mut out.modes {
            m.coupling *= s;
        }
        out
    }

    /// Gap between the frequency nodes bracketing `omega`.
    pub fn local_spacing(&self, omega: f64) -> f64 {
        let mut freqs: Vec<f64> = self.frequency_nodes.iter().map(|n| n.omega).collect();
        freqs.sort_by(f64::total_cmp);
        freqs.dedup();
        if freqs.len() < 2 {
            return self.omega_max - self.omega_min;
        }
        let i = freqs.partition_point(|&w| w < omega).clamp(1, freqs.len() - 1);
        let lo = i.saturating_sub(1);
        let hi = (i + 1).min(freqs.len() - 1);
        (freqs[hi] - freqs[lo]) / (hi - lo) as f64
    }

    /// Normalized angular tensor of the modes with `ω_k ∈ [lo, hi)`:
    /// `(2π)³/N · Σ g gᵀ 2ω_k/ω_k² / Σ ω_f² Δω_f`, which equals
    /// `∫dΩ Σ_λ (k̂×e)(k̂×e)ᵀ` for an exact angular rule.
    pub fn angular_tensor(&self, lo: f64, hi: f64) -> Matrix3<f64> {
        let mut t = Matrix3::zeros();
        for m in self.modes.iter().filter(|m| m.omega_k >= lo && m.omega_k < hi) {
            t += m.coupling * m.coupling.transpose() * (2.0 / m.omega_k);
        }
        let measure: f64 = self
            .frequency_nodes
            .iter()
            .filter(|n| n.omega >= lo && n.omega < hi)
            .map(|n| n.omega.powi(2) * n.weight)
            .sum();
        t * ((2.0 * PI).powi(3) / (self.normalization.factor() * measure))
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["omega_k", "khat_x", "khat_y", "khat_z", "lambda", "g_x", "g_y", "g_z"])?;
        for m in &self.modes {
            w.write_record([
                fmt17(m.omega_k),
                fmt17(m.k_hat.x),
                fmt17(m.k_hat.y),
                fmt17(m.k_hat.z),
                m.lambda.to_string(),
                fmt17(m.coupling.x),
                fmt17(m.coupling.y),
                fmt17(m.coupling.z),
            ])?;
        }
        w.flush().map_err(|e| Error::io(path, e))?;
        Ok(())
    }
}

/// Reads the mode table written by [`ModeSet::write_csv`].
pub fn read_modes_csv(path: &Path) -> Result<Vec<Mode>> {
    let mut r = csv::Reader::from_path(path)?;
    let mut modes = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let num = |i: usize| -> Result<f64> {
            rec.get(i)
                .and_then(|s| s.trim().parse::<f64>().ok())
                .ok_or_else(|| Error::domain("read_modes_csv", format!("bad field {i} in {rec:?}")))
        };
        let lambda = num(4)? as u8;
        modes.push(Mode {
            omega_k: num(0)?,
            k_hat: Vec3::new(num(1)?, num(2)?, num(3)?),
            lambda,
            coupling: Vec3::new(num(5)?, num(6)?, num(7)?),
        });
    }
    Ok(modes)
}

/// Smoothed golden-rule spin-flip rate `2π Σ_m |V_m|² K_h(ω_m − ω)` with a
/// Gaussian kernel `K_h`. `bandwidth` defaults to twice the local node spacing.
pub fn golden_rule_rate(modes: &ModeSet, omega: f64, bandwidth: Option<f64>) -> Result<f64> {
    if !(omega >= modes.omega_min && omega <= modes.omega_max) {
        return Err(Error::domain(
            "golden_rule_rate",
            format!("omega {omega} outside the mode window [{}, {}]", modes.omega_min, modes.omega_max),
        ));
    }
    let h = bandwidth.unwrap_or_else(|| 2.0 * modes.local_spacing(omega));
    if !(h > 0.0) {
        return Err(Error::domain("golden_rule_rate", format!("bandwidth must be positive, got {h}")));
    }
    let norm = 1.0 / (h * (2.0 * PI).sqrt());
    let density: f64 = modes
        .modes
        .iter()
        .map(|m| {
            let x = (m.omega_k - omega) / h;
            m.flip_strength(modes.alpha) * norm * (-0.5 * x * x).exp()
        })
        .sum();
    Ok(2.0 * PI * density)
}

pub(crate) fn fmt17(x: f64) -> String {
    format!("{x:.16e}")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::units::natural_decay_rate;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn check_basis(b: &PolarizationBasis) {
        let tol = 1e-14;
        assert!((b.e1.dot(&b.e1) - 1.0).abs() < tol);
        assert!((b.e2.dot(&b.e2) - 1.0).abs() < tol);
        assert!(b.e1.dot(&b.e2).abs() < tol);
        assert!(b.k_hat.dot(&b.e1).abs() < tol);
        assert!(b.k_hat.dot(&b.e2).abs() < tol);
        assert!((b.e1.cross(&b.e2) - b.k_hat).norm() < tol);
    }

    #[test]
    fn canonical_axes() {
        let b = polarization_basis(Vec3::z()).unwrap();
        assert_eq!(b.e1, Vec3::x());
        assert_eq!(b.e2, Vec3::y());
        let b = polarization_basis(Vec3::x()).unwrap();
        check_basis(&b);
        assert!(b.e1.dot(&Vec3::x()).abs() < 1e-15 && b.e2.dot(&Vec3::x()).abs() < 1e-15);
        let b = polarization_basis(Vec3::new(1.0, 1.0, 1.0).normalize()).unwrap();
        check_basis(&b);
        check_basis(&polarization_basis(-Vec3::z()).unwrap());
    }

    #[test]
    fn non_unit_direction_rejected() {
        assert!(polarization_basis(Vec3::zeros()).is_err());
        assert!(polarization_basis(Vec3::new(1.0, 1.0, 0.0)).is_err());
    }

    proptest! {
        #[test]
        fn basis_invariants_hold(th in 0.0f64..PI, ph in 0.0f64..(2.0 * PI)) {
            let k = Vec3::new(th.sin() * ph.cos(), th.sin() * ph.sin(), th.cos());
            check_basis(&polarization_basis(k).unwrap());
        }

        #[test]
        fn basis_stable_under_tiny_perturbation(th in 0.01f64..3.13, ph in 0.0f64..(2.0 * PI)) {
            let k = Vec3::new(th.sin() * ph.cos(), th.sin() * ph.sin(), th.cos());
            let kp = (k + Vec3::new(3e-14, -2e-14, 1e-14)).normalize();
            let a = polarization_basis(k).unwrap();
            let b = polarization_basis(kp).unwrap();
            // ẑ × k̂ shrinks like sin θ, so sensitivity grows like 1/sin θ
            let tol = 1e-13 / th.sin();
            prop_assert!((a.e1 - b.e1).norm() < tol);
            prop_assert!((a.e2 - b.e2).norm() < tol);
        }
    }

    #[test]
    fn basis_stable_at_pole() {
        let a = polarization_basis(Vec3::z()).unwrap();
        let b = polarization_basis(Vec3::new(5e-14, -5e-14, 1.0).normalize()).unwrap();
        assert!((a.e1 - b.e1).norm() < 1e-12);
    }

    #[test]
    fn angular_integrals() {
        let target = 8.0 * PI / 3.0;
        for a in [Axis::X, Axis::Y, Axis::Z] {
            for b in [Axis::X, Axis::Y, Axis::Z] {
                let v = angular_polarization_integral(a, b, 32, 32).unwrap();
                let expect = if a == b { target } else { 0.0 };
                assert!((v - expect).abs() < 1e-10, "{a:?}{b:?} {v}");
            }
        }
        let coarse = angular_polarization_integral(Axis::Z, Axis::Z, 4, 4).unwrap();
        let fine = angular_polarization_integral(Axis::Z, Axis::Z, 64, 64).unwrap();
        assert!((coarse - target).abs() < 1e-3);
        assert!((fine - target).abs() < 1e-10);
    }

    #[test]
    fn angular_integral_rejects_bad_input() {
        assert!(Axis::from_index(3).is_err());
        assert!(angular_polarization_integral(Axis::X, Axis::X, 1, 8).is_err());
    }

    #[test]
    fn convention_independence_of_angular_sum() {
        // rotating each basis about k̂ leaves Σ_λ (k̂×e)(k̂×e)ᵀ unchanged
        for (k, _) in sphere_rule(5, 9) {
            let b = polarization_basis(k).unwrap();
            let t0: Matrix3<f64> = [b.e1, b.e2].iter().map(|e| { let v = k.cross(e); v * v.transpose() }).sum();
            let (s, c) = 0.83f64.sin_cos();
            let r1 = b.e1 * c + b.e2 * s;
            let r2 = -b.e1 * s + b.e2 * c;
            let t1: Matrix3<f64> = [r1, r2].iter().map(|e| { let v = k.cross(e); v * v.transpose() }).sum();
            assert!((t0 - t1).abs().max() < 1e-14);
        }
    }

    #[test]
    fn frequency_nodes_cover_window() {
        for n in [1, 2, 3, 7, 12, 200] {
            let nodes = frequency_nodes(n, 0.2, 5.0, 1.0);
            assert_eq!(nodes.len(), n);
            let total: f64 = nodes.iter().map(|n| n.weight).sum();
            assert_relative_eq!(total, 4.8, max_relative = 1e-13);
            assert!(nodes.iter().all(|n| n.omega > 0.2 && n.omega < 5.0));
        }
        // refined zone is denser
        let nodes = frequency_nodes(200, 0.2, 5.0, 1.0);
        let near = nodes.iter().filter(|n| (n.omega - 1.0).abs() < 0.2).count() as f64 / 0.4;
        let far = nodes.iter().filter(|n| n.omega > 1.2).count() as f64 / 3.8;
        assert!(near > 3.0 * far);
    }

    #[test]
    fn one_point_mode_set() {
        let spin = SpinSystem::from_coupling(0.3, 1.0).unwrap();
        let ms = build_mode_set(1, 1, 0.9, 1.1, &spin, CouplingNormalization::Field).unwrap();
        assert_eq!(ms.len(), 2);
        assert!(ms.modes.iter().all(|m| (m.omega_k - 1.0).abs() < 1e-15));
        // hand value: Σ_λ |g|² = 4π ω³ Δω · 2 / (2 (2π)³) = ω³ Δω / (2π²)
        let sum: f64 = ms.modes.iter().map(|m| m.coupling.norm_squared()).sum();
        assert_relative_eq!(sum, 0.2 / (2.0 * PI * PI), max_relative = 1e-13);
    }

    #[test]
    fn empty_window_rejected() {
        let spin = SpinSystem::from_coupling(0.3, 1.0).unwrap();
        assert!(build_mode_set(4, 2, 1.0, 1.0, &spin, CouplingNormalization::Field).is_err());
        assert!(build_mode_set(4, 2, 0.0, 1.0, &spin, CouplingNormalization::Field).is_err());
    }

    #[test]
    fn all_modes_in_window_with_nonzero_coupling() {
        let spin = SpinSystem::from_coupling(0.3, 1.0).unwrap();
        let ms = build_mode_set(8, 3, 0.2, 5.0, &spin, CouplingNormalization::RateMatched).unwrap();
        assert_eq!(ms.len(), 8 * 3 * 5 * 2);
        assert!(ms.modes.iter().all(|m| m.omega_k > 0.0 && m.omega_k <= 5.0 && m.coupling.norm() > 0.0));
    }

    #[test]
    fn shell_sum_rule_is_isotropic() {
        let spin = SpinSystem::from_coupling(0.3, 1.0).unwrap();
        for norm in [CouplingNormalization::Field, CouplingNormalization::RateMatched] {
            let ms = build_mode_set(40, 6, 0.2, 5.0, &spin, norm).unwrap();
            let t = ms.angular_tensor(0.9, 1.1);
            let expect = Matrix3::identity() * (8.0 * PI / 3.0);
            assert!((t - expect).abs().max() < 1e-10, "{t}");
        }
    }

    #[test]
    fn resonant_bath_triples_are_isotropic() {
        let spin = SpinSystem::from_coupling(0.2, 1.0).unwrap();
        let ms = build_resonant_bath(12, 0.01, &spin, CouplingNormalization::Field).unwrap();
        // equal flip strength for every mode up to the ω³ variation
        let s0 = ms.modes[0].flip_strength(1.0) / ms.modes[0].omega_k.powi(3);
        for m in &ms.modes {
            assert_relative_eq!(m.flip_strength(1.0) / m.omega_k.powi(3), s0, max_relative = 1e-12);
            let b = polarization_basis(m.k_hat).unwrap();
            assert!(m.coupling.normalize().cross(&b.e2).norm() < 1e-12);
        }
        let mut t = Matrix3::zeros();
        for m in &ms.modes[0..3] {
            t += m.coupling.normalize() * m.coupling.normalize().transpose();
        }
        assert!((t - Matrix3::identity()).abs().max() < 1e-14);
    }

    #[test]
    fn golden_rule_converges_to_closed_form() {
        let spin = SpinSystem::from_coupling(0.4, 1.0).unwrap();
        let beta = natural_decay_rate(spin.alpha, spin.omega);
        let ms = build_mode_set(200, 16, 0.2, 5.0, &spin, CouplingNormalization::RateMatched).unwrap();
        let g = golden_rule_rate(&ms, 1.0, None).unwrap();
        assert!((g / beta - 1.0).abs() < 0.05, "ratio {}", g / beta);
        let h = 2.0 * ms.local_spacing(1.0);
        let g_half = golden_rule_rate(&ms, 1.0, Some(0.5 * h)).unwrap();
        assert!((g_half / g - 1.0).abs() < 0.02);
    }

    #[test]
    fn field_normalization_rate_is_pi_times_closed_form() {
        let spin = SpinSystem::from_coupling(0.4, 1.0).unwrap();
        let beta = natural_decay_rate(spin.alpha, spin.omega);
        let ms = build_mode_set(200, 4, 0.2, 5.0, &spin, CouplingNormalization::Field).unwrap();
        let g = golden_rule_rate(&ms, 1.0, None).unwrap();
        assert!((g / (PI * beta) - 1.0).abs() < 0.05, "ratio {}", g / beta);
    }

    #[test]
    fn golden_rule_zero_couplings_and_window() {
        let spin = SpinSystem::from_coupling(0.4, 1.0).unwrap();
        let ms = build_mode_set(20, 2, 0.2, 5.0, &spin, CouplingNormalization::RateMatched).unwrap();
        assert_eq!(golden_rule_rate(&ms.scaled(0.0), 1.0, None).unwrap(), 0.0);
        assert!(golden_rule_rate(&ms, 6.0, None).is_err());
    }

    #[test]
    fn resonant_bath_golden_rule() {
        let spin = SpinSystem::from_coupling(0.24, 1.0).unwrap();
        let beta = natural_decay_rate(spin.alpha, spin.omega);
        let ms = build_resonant_bath(60, 30.0 * beta, &spin, CouplingNormalization::RateMatched).unwrap();
        let g = golden_rule_rate(&ms, 1.0, None).unwrap();
        assert!((g / beta - 1.0).abs() < 0.02, "ratio {}", g / beta);
    }

    #[test]
    fn csv_round_trip() {
        let spin = SpinSystem::from_coupling(0.4, 1.0).unwrap();
        let ms = build_mode_set(4, 2, 0.5, 2.0, &spin, CouplingNormalization::Field).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("modes.csv");
        ms.write_csv(&p).unwrap();
        let back = read_modes_csv(&p).unwrap();
        assert_eq!(back, ms.modes);
    }
}
