//! Exact evolution of the spin ⊗ truncated-Fock system
//! `H = ωS_z + α Σ_m i(g_m·S)(a_m − a_m†) + Σ_m ω_m(n_m + ½)` with ħ = 1.
//!
//! Basis index `j = s + 2 Σ_m n_m (n_max+1)^m`, `s = 0` for spin up.
//! The Hamiltonian is never stored: [`Hamiltonian::apply`] gathers each
//! output amplitude from its at most `4·n_modes + 1` neighbours.

mod amplitude;
mod fit;
mod oracle;
mod propagate;

pub use amplitude::{mode_amplitude_check, AmplitudeCheck, MIN_SAMPLES_PER_PERIOD};
pub use fit::{fit_decay_rate, DecayFit};
pub use oracle::{run_decay_oracle, OracleRun, OracleSetup};
pub use propagate::{evolve, propagate, Engine, Evolution, EvolveOptions, DENSE_LIMIT};

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::ModeSet;
use crate::units::{SpinSystem, UnitMode};

/// Default cap on the joint Hilbert-space dimension.
pub const DEFAULT_DIMENSION_CAP: usize = 1 << 16;

const I: Complex64 = Complex64::new(0.0, 1.0);
const ZERO: Complex64 = Complex64::new(0.0, 0.0);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FockTruncation {
    pub n_modes: usize,
    pub n_max: usize,
    pub dimension: usize,
}

impl FockTruncation {
    pub fn new(n_modes: usize, n_max: usize) -> Result<Self> {
        if n_modes == 0 || n_max == 0 {
            return Err(Error::domain("fock_truncation", "need n_modes >= 1 and n_max >= 1"));
        }
        let dimension = u32::try_from(n_modes)
            .ok()
            .and_then(|m| (n_max + 1).checked_pow(m))
            .and_then(|d| d.checked_mul(2))
            .unwrap_or(usize::MAX);
        Ok(Self {
            n_modes,
            n_max,
            dimension,
        })
    }

    fn base(&self) -> usize {
        self.n_max + 1
    }

    /// Occupation of mode `m` in basis state `j`.
    pub fn occupation(&self, j: usize, m: usize) -> usize {
        (j >> 1) / self.base().pow(m as u32) % self.base()
    }

    /// Index offset produced by adding one photon to mode `m`.
    pub fn stride(&self, m: usize) -> usize {
        2 * self.base().pow(m as u32)
    }
}

/// Which parts of the spin–field coupling are kept.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CouplingTerms {
    /// Every term of `i(g·S)(a − a†)`.
    #[default]
    Full,
    /// Only the energy-conserving `S_+ a` and `S_− a†` pieces.
    RotatingWave,
}

type SpinBlock = [[Complex64; 2]; 2];

/// Matrix-free Hamiltonian on the truncated joint space.
#[derive(Debug, Clone)]
pub struct Hamiltonian {
    pub trunc: FockTruncation,
    pub omega: f64,
    pub alpha: f64,
    pub terms: CouplingTerms,
    mode_omega: Vec<f64>,
    couplings: Vec<[f64; 3]>,
    /// `α⟨s′|g·S|s⟩` blocks multiplying the annihilation and creation parts.
    annihilate: Vec<SpinBlock>,
    create: Vec<SpinBlock>,
    /// The same blocks times `i` and `−i`, as they enter the matrix elements.
    annihilate_i: Vec<SpinBlock>,
    create_i: Vec<SpinBlock>,
    diag: Vec<f64>,
    sqrt_n: Vec<f64>,
}

/// `⟨s′|g·S|s⟩` in the (up, down) basis with ħ = 1.
fn spin_matrix(g: [f64; 3]) -> SpinBlock {
    let [gx, gy, gz] = g;
    [
        [Complex64::new(0.5 * gz, 0.0), Complex64::new(0.5 * gx, -0.5 * gy)],
        [Complex64::new(0.5 * gx, 0.5 * gy), Complex64::new(-0.5 * gz, 0.0)],
    ]
}

pub fn build_hamiltonian(
    spin: &SpinSystem,
    modes: &ModeSet,
    trunc: FockTruncation,
    terms: CouplingTerms,
    dimension_cap: usize,
) -> Result<Hamiltonian> {
    if spin.units != UnitMode::Natural {
        return Err(Error::domain("build_hamiltonian", "the exact solver works in natural units"));
    }
    if trunc.n_modes != modes.len() {
        return Err(Error::domain(
            "build_hamiltonian",
            format!("truncation has {} modes but the mode set has {}", trunc.n_modes, modes.len()),
        ));
    }
    if trunc.dimension > dimension_cap {
        return Err(Error::Resource {
            dimension: trunc.dimension,
            cap: dimension_cap,
        });
    }
    let alpha = spin.alpha;
    let mode_omega: Vec<f64> = modes.modes.iter().map(|m| m.omega_k).collect();
    let couplings: Vec<[f64; 3]> = modes.modes.iter().map(|m| [m.coupling.x, m.coupling.y, m.coupling.z]).collect();
    let mut annihilate = Vec::with_capacity(couplings.len());
    let mut create = Vec::with_capacity(couplings.len());
    for &g in &couplings {
        let mut b = spin_matrix(g);
        for row in &mut b {
            for v in row.iter_mut() {
                *v *= alpha;
            }
        }
        match terms {
            CouplingTerms::Full => {
                annihilate.push(b);
                create.push(b);
            }
            CouplingTerms::RotatingWave => {
                // S_+ a: down → up while a photon is absorbed; S_− a†: the reverse
                annihilate.push([[ZERO, b[0][1]], [ZERO, ZERO]]);
                create.push([[ZERO, ZERO], [b[1][0], ZERO]]);
            }
        }
    }
    let zero_point: f64 = 0.5 * mode_omega.iter().sum::<f64>();
    let diag = (0..trunc.dimension)
        .into_par_iter()
        .map(|j| {
            let spin_e = if j & 1 == 0 { 0.5 * spin.omega } else { -0.5 * spin.omega };
            let field: f64 = (0..trunc.n_modes).map(|m| mode_omega[m] * trunc.occupation(j, m) as f64).sum();
            spin_e + field + zero_point
        })
        .collect();
    let sqrt_n = (0..=trunc.n_max + 1).map(|n| (n as f64).sqrt()).collect();
    let times = |blocks: &[SpinBlock], f: Complex64| -> Vec<SpinBlock> {
        blocks.iter().map(|b| [[b[0][0] * f, b[0][1] * f], [b[1][0] * f, b[1][1] * f]]).collect()
    };
    let annihilate_i = times(&annihilate, I);
    let create_i = times(&create, -I);
    Ok(Hamiltonian {
        trunc,
        omega: spin.omega,
        alpha,
        terms,
        mode_omega,
        couplings,
        annihilate,
        create,
        annihilate_i,
        create_i,
        diag,
        sqrt_n,
    })
}

impl Hamiltonian {
    pub fn dimension(&self) -> usize {
        self.trunc.dimension
    }

    pub fn n_modes(&self) -> usize {
        self.trunc.n_modes
    }

    pub fn mode_omega(&self, m: usize) -> f64 {
        self.mode_omega[m]
    }

    pub fn coupling(&self, m: usize) -> [f64; 3] {
        self.couplings[m]
    }

    /// `H_{j,j}`.
    pub fn diagonal(&self) -> &[f64] {
        &self.diag
    }

    fn row(&self, j: usize, psi: &[Complex64]) -> Complex64 {
        let t = &self.trunc;
        let s_out = j & 1;
        let base_j = j & !1;
        let mut acc = psi[j] * self.diag[j];
        let mut q = j >> 1;
        if t.n_max == 1 {
            let ladder = [&self.annihilate_i, &self.create_i];
            for m in 0..t.n_modes {
                let k = base_j ^ (2 << m);
                let b = &ladder[q & 1][m][s_out];
                acc += b[0] * psi[k] + b[1] * psi[k + 1];
                q >>= 1;
            }
            return acc;
        }
        let base = t.n_max + 1;
        let mut stride = 2;
        for m in 0..t.n_modes {
            let n = q % base;
            q /= base;
            if n < t.n_max {
                let k = base_j + stride;
                let b = &self.annihilate_i[m][s_out];
                acc += (b[0] * psi[k] + b[1] * psi[k + 1]) * self.sqrt_n[n + 1];
            }
            if n > 0 {
                let k = base_j - stride;
                let b = &self.create_i[m][s_out];
                acc += (b[0] * psi[k] + b[1] * psi[k + 1]) * self.sqrt_n[n];
            }
            stride *= base;
        }
        acc
    }

    /// One fused Chebyshev recurrence step on the rescaled operator
    /// `H̃ = (H − centre)/radius`: `prev ← 2H̃cur − prev`, then `acc += coef·prev`.
    pub(crate) fn chebyshev_step(
        &self,
        cur: &[Complex64],
        prev: &mut [Complex64],
        acc: &mut [Complex64],
        centre: f64,
        radius: f64,
        coef: Complex64,
    ) {
        let two_over_r = 2.0 / radius;
        prev.par_iter_mut()
            .zip(acc.par_iter_mut())
            .with_min_len(1024)
            .enumerate()
            .for_each(|(j, (p, a))| {
                let hv = self.row(j, cur) - cur[j] * centre;
                *p = hv * two_over_r - *p;
                *a += *p * coef;
            });
    }

    /// `out = H psi`.
    pub fn apply(&self, psi: &[Complex64], out: &mut [Complex64]) {
        out.par_iter_mut()
            .with_min_len(512)
            .enumerate()
            .for_each(|(j, o)| *o = self.row(j, psi));
    }

    /// `⟨psi|H|psi⟩`, summed in fixed-size blocks so the result does not
    /// depend on the thread count.
    pub fn expectation(&self, psi: &[Complex64]) -> f64 {
        const BLOCK: usize = 1024;
        let partial: Vec<f64> = psi
            .par_chunks(BLOCK)
            .enumerate()
            .map(|(b, chunk)| {
                chunk
                    .iter()
                    .enumerate()
                    .map(|(i, p)| (p.conj() * self.row(b * BLOCK + i, psi)).re)
                    .sum()
            })
            .collect();
        partial.iter().sum()
    }

    /// Off-diagonal element `⟨j|H|k⟩` for `k = j ± stride(m)` along mode `m`.
    fn coupling_element(&self, j: usize, k: usize, m: usize) -> Complex64 {
        let t = &self.trunc;
        let n = t.occupation(j, m);
        let (so, si) = (j & 1, k & 1);
        if (k & !1) == (j & !1) + t.stride(m) {
            I * self.sqrt_n[n + 1] * self.annihilate[m][so][si]
        } else {
            -I * self.sqrt_n[n] * self.create[m][so][si]
        }
    }

    /// `max |H − H†|` over all structurally nonzero elements.
    pub fn hermiticity_error(&self) -> f64 {
        let t = &self.trunc;
        (0..t.dimension)
            .into_par_iter()
            .map(|j| {
                let mut worst: f64 = 0.0;
                for m in 0..t.n_modes {
                    let n = t.occupation(j, m);
                    let mut partners = Vec::with_capacity(4);
                    if n < t.n_max {
                        let b = (j & !1) + t.stride(m);
                        partners.extend([b, b + 1]);
                    }
                    if n > 0 {
                        let b = (j & !1) - t.stride(m);
                        partners.extend([b, b + 1]);
                    }
                    for k in partners {
                        let hjk = self.coupling_element(j, k, m);
                        let hkj = self.coupling_element(k, j, m);
                        worst = worst.max((hjk - hkj.conj()).norm());
                    }
                }
                worst
            })
            .reduce(|| 0.0, f64::max)
    }

    /// Dense copy, for small systems.
    pub fn to_dense(&self) -> nalgebra::DMatrix<Complex64> {
        let d = self.dimension();
        let mut h = nalgebra::DMatrix::zeros(d, d);
        let mut e = vec![ZERO; d];
        let mut col = vec![ZERO; d];
        for k in 0..d {
            e[k] = Complex64::new(1.0, 0.0);
            self.apply(&e, &mut col);
            for (j, v) in col.iter().enumerate() {
                h[(j, k)] = *v;
            }
            e[k] = ZERO;
        }
        h
    }

    /// Bounds `[lo, hi]` on the spectrum: the diagonal range widened by the
    /// largest Gershgorin off-diagonal row sum.
    pub fn spectral_bounds(&self) -> (f64, f64) {
        let t = &self.trunc;
        let (lo, hi) = self
            .diag
            .par_iter()
            .fold(|| (f64::INFINITY, f64::NEG_INFINITY), |(a, b), &d| (a.min(d), b.max(d)))
            .reduce(|| (f64::INFINITY, f64::NEG_INFINITY), |(a, b), (c, d)| (a.min(c), b.max(d)));
        let row_bound = |b: &SpinBlock, s: usize| b[s][0].norm() + b[s][1].norm();
        let mut off = 0.0;
        for m in 0..t.n_modes {
            let a = row_bound(&self.annihilate[m], 0).max(row_bound(&self.annihilate[m], 1));
            let c = row_bound(&self.create[m], 0).max(row_bound(&self.create[m], 1));
            off += (a + c) * self.sqrt_n[t.n_max];
        }
        (lo - off, hi + off)
    }
}

/// Pure joint state of spin and field.
#[derive(Debug, Clone, PartialEq)]
pub struct JointState {
    pub amplitudes: Vec<Complex64>,
}

impl JointState {
    /// `(cos θ/2 |↑⟩ + e^{iφ} sin θ/2 |↓⟩) ⊗ |0⟩_F`.
    pub fn spin_vacuum(trunc: &FockTruncation, theta: f64, phi: f64) -> Self {
        let mut amplitudes = vec![ZERO; trunc.dimension];
        amplitudes[0] = Complex64::new((0.5 * theta).cos(), 0.0);
        amplitudes[1] = Complex64::from_polar((0.5 * theta).sin(), phi);
        Self { amplitudes }
    }

    /// Spin-vacuum state with the given pure-state spin expectations (ħ = 1).
    pub fn from_expectations(trunc: &FockTruncation, sz0: f64, splus0: Complex64) -> Result<Self> {
        let r2 = sz0 * sz0 + splus0.norm_sqr();
        if (r2.sqrt() - 0.5).abs() > 1e-9 {
            return Err(Error::domain(
                "joint_state",
                format!("the exact engine needs a pure spin state with |S| = 1/2, got {}", r2.sqrt()),
            ));
        }
        let theta = (2.0 * sz0).clamp(-1.0, 1.0).acos();
        Ok(Self::spin_vacuum(trunc, theta, splus0.arg()))
    }

    pub fn norm(&self) -> f64 {
        self.amplitudes.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt()
    }
}

/// Spin and photon expectations of a joint state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Observables {
    pub sz: f64,
    pub splus: Complex64,
    pub photon_number: f64,
}

/// Blocks are reduced in a fixed order, so the result is independent of the thread count.
pub fn observe(trunc: &FockTruncation, psi: &[Complex64]) -> Observables {
    const BLOCK: usize = 2048;
    let partial: Vec<(f64, f64, Complex64, f64)> = psi
        .par_chunks(BLOCK)
        .enumerate()
        .map(|(b, chunk)| {
            let mut acc = (0.0, 0.0, ZERO, 0.0);
            for (c, p) in chunk.chunks_exact(2).enumerate() {
                let j = b * BLOCK + 2 * c;
                let n: usize = (0..trunc.n_modes).map(|m| trunc.occupation(j, m)).sum();
                let (u, d) = (p[0].norm_sqr(), p[1].norm_sqr());
                acc.0 += u;
                acc.1 += d;
                acc.2 += p[0].conj() * p[1];
                acc.3 += n as f64 * (u + d);
            }
            acc
        })
        .collect();
    let (up, down, splus, photons) = partial
        .iter()
        .fold((0.0, 0.0, ZERO, 0.0), |a, b| (a.0 + b.0, a.1 + b.1, a.2 + b.2, a.3 + b.3));
    Observables {
        sz: 0.5 * (up - down),
        splus,
        photon_number: photons,
    }
}

/// `⟨a_m⟩`.
pub fn mode_expectation(trunc: &FockTruncation, psi: &[Complex64], m: usize) -> Complex64 {
    let stride = trunc.stride(m);
    (0..psi.len())
        .filter(|&j| trunc.occupation(j, m) < trunc.n_max)
        .map(|j| psi[j].conj() * psi[j + stride] * ((trunc.occupation(j, m) + 1) as f64).sqrt())
        .sum()
}

/// Operator order used to assemble a mixed spin–field expectation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OperatorOrder {
    /// `⟨S_+ a_m⟩`: the field annihilator acts first.
    Normal,
    /// `⟨a_m S_+⟩`: the spin raiser acts first.
    Antinormal,
}

fn apply_annihilator(trunc: &FockTruncation, psi: &[Complex64], m: usize) -> Vec<Complex64> {
    let stride = trunc.stride(m);
    (0..psi.len())
        .map(|j| {
            let n = trunc.occupation(j, m);
            if n < trunc.n_max {
                psi[j + stride] * ((n + 1) as f64).sqrt()
            } else {
                ZERO
            }
        })
        .collect()
}

fn apply_raiser(psi: &[Complex64]) -> Vec<Complex64> {
    let mut out = vec![ZERO; psi.len()];
    for (o, p) in out.chunks_mut(2).zip(psi.chunks(2)) {
        o[0] = p[1];
    }
    out
}

/// `⟨ψ| S_+ a_m |ψ⟩` assembled in the requested operator order.
pub fn spin_field_correlator(trunc: &FockTruncation, psi: &[Complex64], m: usize, order: OperatorOrder) -> Complex64 {
    let chi = match order {
        OperatorOrder::Normal => apply_raiser(&apply_annihilator(trunc, psi, m)),
        OperatorOrder::Antinormal => apply_annihilator(trunc, &apply_raiser(psi), m),
    };
    psi.iter().zip(&chi).map(|(p, c)| p.conj() * c).sum()
}
