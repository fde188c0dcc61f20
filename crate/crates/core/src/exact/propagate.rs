use nalgebra::DVector;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{observe, Hamiltonian, JointState};
use crate::error::{Error, Result};
use crate::ode::{solve, OdeOptions};
use crate::trajectory::Trajectory;

/// Largest dimension accepted by the dense eigen-decomposition engine.
pub const DENSE_LIMIT: usize = 256;

/// Tolerance on `|‖ψ‖ − 1|` along every trajectory.
pub const NORM_TOLERANCE: f64 = 1e-10;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Engine {
    /// Chebyshev expansion of `e^{−iHΔt}` between samples.
    #[default]
    Chebyshev,
    /// Adaptive Dormand–Prince 5(4) on `ψ̇ = −iHψ`.
    RungeKutta,
    /// `V e^{−iEt} V†` from a dense Hermitian eigen-decomposition.
    Dense,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvolveOptions {
    pub engine: Engine,
    /// Accuracy target for the state along the trajectory. The Runge–Kutta
    /// engine runs its local error control at `tolerance * 1e-3`; the Chebyshev
    /// series is truncated where its Bessel coefficients fall below `tolerance * 1e-6`.
    pub tolerance: f64,
    /// Keep the joint state at every sample time.
    pub keep_states: bool,
}

impl Default for EvolveOptions {
    fn default() -> Self {
        Self {
            engine: Engine::Chebyshev,
            tolerance: 1e-10,
            keep_states: false,
        }
    }
}

/// Bessel functions `J_0(x) … J_n(x)` by Miller's backward recurrence,
/// normalized with `J_0 + 2 Σ J_{2k} = 1`.
pub(crate) fn bessel_j_sequence(x: f64, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; n + 1];
    if x == 0.0 {
        out[0] = 1.0;
        return out;
    }
    let start = (n.max(x as usize) + 40 + (20.0 * x.cbrt()) as usize) | 1;
    let mut j_next = 0.0;
    let mut j_cur = 1e-300;
    let mut norm = 0.0;
    for k in (1..=start).rev() {
        let j_prev = 2.0 * k as f64 / x * j_cur - j_next;
        j_next = j_cur;
        j_cur = j_prev;
        let idx = k - 1;
        if idx <= n {
            out[idx] = j_cur;
        }
        if idx % 2 == 0 {
            norm += if idx == 0 { j_cur } else { 2.0 * j_cur };
        }
        if j_cur.abs() > 1e250 {
            j_cur *= 1e-250;
            j_next *= 1e-250;
            norm *= 1e-250;
            for v in out.iter_mut() {
                *v *= 1e-250;
            }
        }
    }
    for v in out.iter_mut() {
        *v /= norm;
    }
    out
}

/// Largest `rΔt` handled in one Chebyshev expansion.
const MAX_CHEBYSHEV_ARGUMENT: f64 = 400.0;

struct Chebyshev<'a> {
    h: &'a Hamiltonian,
    centre: f64,
    radius: f64,
    cutoff: f64,
    t0: Vec<Complex64>,
    t1: Vec<Complex64>,
    acc: Vec<Complex64>,
}

impl<'a> Chebyshev<'a> {
    fn new(h: &'a Hamiltonian, tolerance: f64) -> Self {
        let (lo, hi) = h.spectral_bounds();
        let radius = 0.5 * (hi - lo) * 1.01 + 1e-12;
        let d = h.dimension();
        Self {
            h,
            centre: 0.5 * (hi + lo),
            radius,
            cutoff: tolerance * 1e-6,
            t0: vec![ZERO; d],
            t1: vec![ZERO; d],
            acc: vec![ZERO; d],
        }
    }

    /// `ψ ← e^{−iHΔt} ψ` with `rΔt ≤ MAX_CHEBYSHEV_ARGUMENT`.
    fn step(&mut self, psi: &mut [Complex64], dt: f64) {
        let x = self.radius * dt;
        let n_max = (x + 40.0 + 20.0 * x.cbrt()) as usize;
        let bessel = bessel_j_sequence(x, n_max);
        let mut k_last = n_max;
        for k in (x as usize)..=n_max {
            if bessel[k..].iter().all(|b| b.abs() < self.cutoff) {
                k_last = k;
                break;
            }
        }
        let (c, r) = (self.centre, self.radius);
        // coefficients (2 − δ_k0)(−i)^k J_k(x)
        let coef = |k: usize| {
            let phase = match k % 4 {
                0 => Complex64::new(1.0, 0.0),
                1 => Complex64::new(0.0, -1.0),
                2 => Complex64::new(-1.0, 0.0),
                _ => Complex64::new(0.0, 1.0),
            };
            phase * if k == 0 { bessel[0] } else { 2.0 * bessel[k] }
        };
        // T_0 = ψ, T_1 = H̃ψ
        self.t0.copy_from_slice(psi);
        let c0 = coef(0);
        self.acc.par_iter_mut().zip(self.t0.par_iter()).for_each(|(a, &v)| *a = v * c0);
        if k_last >= 1 {
            self.h.apply(&self.t0, &mut self.t1);
            let c1 = coef(1);
            self.t1
                .par_iter_mut()
                .zip(self.t0.par_iter())
                .zip(self.acc.par_iter_mut())
                .with_min_len(1024)
                .for_each(|((t1, &t0), a)| {
                    *t1 = (*t1 - t0 * c) / r;
                    *a += *t1 * c1;
                });
        }
        for k in 2..=k_last {
            // t0 ← 2H̃ t1 − t0 = T_k, then roll
            self.h.chebyshev_step(&self.t1, &mut self.t0, &mut self.acc, c, r, coef(k));
            std::mem::swap(&mut self.t0, &mut self.t1);
        }
        let phase = Complex64::from_polar(1.0, -c * dt);
        psi.par_iter_mut().zip(self.acc.par_iter()).for_each(|(p, &a)| *p = a * phase);
    }

    fn advance(&mut self, psi: &mut [Complex64], dt: f64) {
        if dt <= 0.0 {
            return;
        }
        let pieces = (self.radius * dt / MAX_CHEBYSHEV_ARGUMENT).ceil().max(1.0) as usize;
        for _ in 0..pieces {
            self.step(psi, dt / pieces as f64);
        }
    }
}

fn check_grid(t_grid: &[f64]) -> Result<()> {
    if t_grid.is_empty() {
        return Err(Error::domain("evolve", "empty time grid"));
    }
    if !(t_grid[0] >= 0.0) || t_grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::domain("evolve", "time grid must be non-negative and strictly increasing"));
    }
    Ok(())
}

/// Evolve `psi0` (given at `t = 0`) and hand the state at each grid time to `visit`.
pub fn propagate<F>(h: &Hamiltonian, psi0: &JointState, t_grid: &[f64], opts: &EvolveOptions, mut visit: F) -> Result<()>
where
    F: FnMut(usize, f64, &[Complex64]) -> Result<()>,
{
    check_grid(t_grid)?;
    if psi0.amplitudes.len() != h.dimension() {
        return Err(Error::domain("evolve", "state length differs from the Hamiltonian dimension"));
    }
    let n0 = psi0.norm();
    if (n0 - 1.0).abs() > NORM_TOLERANCE {
        return Err(Error::domain("evolve", format!("initial state has norm {n0}")));
    }
    let check_norm = |psi: &[Complex64], t: f64| -> Result<()> {
        let n = psi.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
        if (n - 1.0).abs() > NORM_TOLERANCE {
            return Err(Error::Integrator {
                requested: NORM_TOLERANCE,
                achieved: (n - 1.0).abs(),
                time: t,
            });
        }
        Ok(())
    };
    match opts.engine {
        Engine::Chebyshev => {
            let mut cheb = Chebyshev::new(h, opts.tolerance);
            let mut psi = psi0.amplitudes.clone();
            let mut t = 0.0;
            for (i, &target) in t_grid.iter().enumerate() {
                cheb.advance(&mut psi, target - t);
                t = target;
                check_norm(&psi, t)?;
                visit(i, t, &psi)?;
            }
        }
        Engine::RungeKutta => {
            let d = h.dimension();
            let ode_opts = OdeOptions {
                // local error control tighter than the trajectory target, so
                // the accumulated norm error stays inside it
                rtol: opts.tolerance * 1e-3,
                atol: opts.tolerance * 1e-5,
                max_steps: 50_000_000,
                ..Default::default()
            };
            let mut hy = vec![ZERO; d];
            let (states, _) = solve(
                |_, y: &Vec<Complex64>, dy: &mut Vec<Complex64>| {
                    h.apply(y, &mut hy);
                    for (o, v) in dy.iter_mut().zip(&hy) {
                        *o = Complex64::new(v.im, -v.re);
                    }
                },
                0.0,
                &psi0.amplitudes,
                t_grid,
                &ode_opts,
            )?;
            for (i, (&t, psi)) in t_grid.iter().zip(&states).enumerate() {
                check_norm(psi, t)?;
                visit(i, t, psi)?;
            }
        }
        Engine::Dense => {
            let d = h.dimension();
            if d > DENSE_LIMIT {
                return Err(Error::domain(
                    "evolve",
                    format!("dense engine is limited to dimension {DENSE_LIMIT}, got {d}"),
                ));
            }
            let eig = h.to_dense().symmetric_eigen();
            let v = eig.eigenvectors;
            let coeffs = v.adjoint() * DVector::from_column_slice(&psi0.amplitudes);
            for (i, &t) in t_grid.iter().enumerate() {
                let rotated = DVector::from_iterator(
                    d,
                    coeffs.iter().zip(eig.eigenvalues.iter()).map(|(c, &e)| c * Complex64::from_polar(1.0, -e * t)),
                );
                let psi: DVector<Complex64> = &v * rotated;
                check_norm(psi.as_slice(), t)?;
                visit(i, t, psi.as_slice())?;
            }
        }
    }
    Ok(())
}

/// Sampled evolution with its conservation diagnostics.
#[derive(Debug, Clone)]
pub struct Evolution {
    pub trajectory: Trajectory,
    pub energy: Vec<f64>,
    /// `max |E(t) − E(0)| / |E(0)|`.
    pub energy_drift: f64,
    /// `max |‖ψ(t)‖ − 1|`.
    pub norm_drift: f64,
    /// Joint states at each sample, when requested.
    pub states: Vec<Vec<Complex64>>,
}

pub fn evolve(h: &Hamiltonian, psi0: &JointState, t_grid: &[f64], opts: &EvolveOptions) -> Result<Evolution> {
    let n = t_grid.len();
    let mut sz = Vec::with_capacity(n);
    let mut splus = Vec::with_capacity(n);
    let mut photons = Vec::with_capacity(n);
    let mut energy = Vec::with_capacity(n);
    let mut norm_drift: f64 = 0.0;
    let mut states = Vec::new();
    propagate(h, psi0, t_grid, opts, |_, _, psi| {
        let o = observe(&h.trunc, psi);
        sz.push(o.sz);
        splus.push(o.splus);
        photons.push(o.photon_number);
        energy.push(h.expectation(psi));
        norm_drift = norm_drift.max((psi.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt() - 1.0).abs());
        if opts.keep_states {
            states.push(psi.to_vec());
        }
        Ok(())
    })?;
    let e0 = h.expectation(&psi0.amplitudes);
    let energy_drift = energy.iter().map(|e| (e - e0).abs()).fold(0.0, f64::max) / e0.abs().max(f64::MIN_POSITIVE);
    let engine = match opts.engine {
        Engine::Chebyshev => "exact/chebyshev",
        Engine::RungeKutta => "exact/rk45",
        Engine::Dense => "exact/dense",
    };
    let mut trajectory = Trajectory::new(t_grid.to_vec(), sz, splus, engine);
    trajectory.photon_number = Some(photons);
    Ok(Evolution {
        trajectory,
        energy,
        energy_drift,
        norm_drift,
        states,
    })
}
