use levenberg_marquardt::{LeastSquaresProblem, LevenbergMarquardt};
use nalgebra::storage::Owned;
use nalgebra::{DVector, Dyn, OMatrix, OVector, Vector2, U2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::trajectory::Trajectory;

/// Least-squares fit of `⟨S_z(t)⟩ = A e^{−βt} − ħ/2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    pub beta: f64,
    pub amplitude: f64,
    /// Standard error of β from the fit covariance.
    pub beta_stderr: f64,
    /// `‖residual‖₂` over the window.
    pub residual_norm: f64,
    pub n_points: usize,
    pub window: (f64, f64),
}

struct DecayProblem<'a> {
    t: &'a [f64],
    y: &'a [f64],
    hbar_half: f64,
    p: Vector2<f64>,
}

impl LeastSquaresProblem<f64, Dyn, U2> for DecayProblem<'_> {
    type ResidualStorage = Owned<f64, Dyn>;
    type JacobianStorage = Owned<f64, Dyn, U2>;
    type ParameterStorage = Owned<f64, U2>;

    fn set_params(&mut self, p: &Vector2<f64>) {
        self.p = *p;
    }

    fn params(&self) -> Vector2<f64> {
        self.p
    }

    fn residuals(&self) -> Option<OVector<f64, Dyn>> {
        let (a, b) = (self.p[0], self.p[1]);
        Some(DVector::from_iterator(
            self.t.len(),
            self.t.iter().zip(self.y).map(|(&t, &y)| a * (-b * t).exp() - self.hbar_half - y),
        ))
    }

    fn jacobian(&self) -> Option<OMatrix<f64, Dyn, U2>> {
        let (a, b) = (self.p[0], self.p[1]);
        let mut j = OMatrix::<f64, Dyn, U2>::zeros(self.t.len());
        for (r, &t) in self.t.iter().enumerate() {
            let e = (-b * t).exp();
            j[(r, 0)] = e;
            j[(r, 1)] = -a * t * e;
        }
        Some(j)
    }
}

/// Fit β and A over the samples with `t ∈ [window.0, window.1]`.
pub fn fit_decay_rate(traj: &Trajectory, window: (f64, f64), hbar_half: f64) -> Result<DecayFit> {
    let (lo, hi) = window;
    let first = traj.times.first().copied().unwrap_or(f64::NAN);
    let last = traj.times.last().copied().unwrap_or(f64::NAN);
    if !(lo < hi) || lo < first || hi > last {
        return Err(Error::domain(
            "fit_decay_rate",
            format!("window [{lo}, {hi}] is not inside the trajectory span [{first}, {last}]"),
        ));
    }
    let (t, y): (Vec<f64>, Vec<f64>) = traj
        .times
        .iter()
        .zip(&traj.sz)
        .filter(|(&t, _)| t >= lo && t <= hi)
        .map(|(&t, &y)| (t, y))
        .unzip();
    if t.len() < 3 {
        return Err(Error::Fit(format!("only {} samples in the window", t.len())));
    }
    let spread = y.iter().cloned().fold(f64::NEG_INFINITY, f64::max) - y.iter().cloned().fold(f64::INFINITY, f64::min);
    if !(spread > 1e-9 * hbar_half) {
        return Err(Error::Fit("⟨S_z⟩ is flat on the window".into()));
    }

    // log-linear start from the samples still clearly above −ħ/2
    let pts: Vec<(f64, f64)> = t
        .iter()
        .zip(&y)
        .filter(|(_, &y)| y + hbar_half > 1e-3 * hbar_half)
        .map(|(&t, &y)| (t, (y + hbar_half).ln()))
        .collect();
    let (a0, b0) = if pts.len() >= 2 {
        let n = pts.len() as f64;
        let mt = pts.iter().map(|p| p.0).sum::<f64>() / n;
        let ml = pts.iter().map(|p| p.1).sum::<f64>() / n;
        let stt: f64 = pts.iter().map(|p| (p.0 - mt).powi(2)).sum();
        let slope = pts.iter().map(|p| (p.0 - mt) * (p.1 - ml)).sum::<f64>() / stt;
        ((ml - slope * mt).exp(), -slope)
    } else {
        (y[0] + hbar_half, 1.0 / (hi - lo))
    };

    let problem = DecayProblem {
        t: &t,
        y: &y,
        hbar_half,
        p: Vector2::new(a0, b0),
    };
    let (fitted, report) = LevenbergMarquardt::new().with_tol(1e-15).minimize(problem);
    if !report.termination.was_successful() {
        return Err(Error::Fit(format!("minimizer stopped: {:?}", report.termination)));
    }
    let p = fitted.params();
    let r = fitted.residuals().ok_or_else(|| Error::Fit("non-finite residuals".into()))?;
    let j = fitted.jacobian().ok_or_else(|| Error::Fit("non-finite jacobian".into()))?;
    let rss = r.norm_squared();
    let dof = (t.len() - 2).max(1) as f64;
    let cov = (j.transpose() * &j)
        .try_inverse()
        .ok_or_else(|| Error::Fit("singular normal matrix".into()))?
        * (rss / dof);
    if !p.iter().all(|v| v.is_finite()) {
        return Err(Error::Fit("non-finite parameters".into()));
    }
    Ok(DecayFit {
        beta: p[1],
        amplitude: p[0],
        beta_stderr: cov[(1, 1)].max(0.0).sqrt(),
        residual_norm: rss.sqrt(),
        n_points: t.len(),
        window,
    })
}
