//! Run orchestration: engines, artifacts, sweeps.

use std::f64::consts::PI;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{is_sweepable, BathSpec, Cutoff, EngineChoice, RawConfig, SimulationConfig, SpinParams, TimeSpan};
use crate::error::{Error, Result};
use crate::exact::{build_hamiltonian, evolve, fit_decay_rate, DecayFit, EvolveOptions, FockTruncation, JointState};
use crate::geometry::{build_mode_set, build_resonant_bath, fmt17, ModeSet};
use crate::markovian::MarkovianSolution;
use crate::output::write_json_17;
use crate::shift::{shift_closed_form, shift_quadrature, ShiftMethod, ShiftResult};
use crate::trajectory::Trajectory;
use crate::units::{codata, MagneticField, SpinSystem, UnitMode};

pub const SUMMARY_FILE: &str = "summary.json";
pub const LOG_FILE: &str = "run.log";

/// Published spin-flip time estimate for an electron at 1 T, in seconds.
pub const CLAIMED_FLIP_TIME_S: f64 = 5e6;

/// Side-by-side comparison of the published electron estimate with the SI evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PaperClaims {
    pub reference_system: String,
    pub claimed_flip_time_s: f64,
    pub computed_flip_time_s: f64,
    /// computed / claimed.
    pub ratio: f64,
    /// True when the two differ by more than a factor of 10.
    pub discrepancy: bool,
    pub convention: String,
    /// Whether this run's own spin system is the reference one.
    pub run_matches_reference: bool,
    pub note: String,
}

impl PaperClaims {
    pub fn evaluate(run_spin: Option<&SpinSystem>) -> Result<Self> {
        let electron = SpinSystem::electron(MagneticField::from_tesla(1.0))?;
        let rate = electron.decay_rate();
        let computed = 1.0 / rate.value;
        let ratio = computed / CLAIMED_FLIP_TIME_S;
        let close = |a: f64, b: f64| (a - b).abs() <= 1e-9 * b.abs();
        let matches = run_spin.is_some_and(|s| {
            s.units == UnitMode::SI && close(s.alpha, electron.alpha) && close(s.omega, electron.omega)
        });
        Ok(Self {
            reference_system: "electron, B_L = 1 T (1e4 gauss)".into(),
            claimed_flip_time_s: CLAIMED_FLIP_TIME_S,
            computed_flip_time_s: computed,
            ratio,
            discrepancy: ratio.log10().abs() > 1.0,
            convention: rate.convention.into(),
            run_matches_reference: matches,
            note: "open unit-convention question: the rate formula mixes conventions (vacuum permittivity \
                   in the mode expansion, none in the coupling, c^5 in the rate); the dimensionally \
                   consistent SI completion used here gives about 7e10 s, not 5e6 s, and no single \
                   consistent convention tried reproduces the published estimate"
                .into(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalyticDiagnostics {
    pub final_sz: f64,
    pub omega_shifted: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExactDiagnostics {
    pub integrator: String,
    pub dimension: usize,
    pub n_modes: usize,
    pub n_max: usize,
    pub energy_drift: f64,
    pub norm_drift: f64,
    pub final_sz: f64,
    /// Largest upward step of ⟨S_z⟩ between consecutive samples.
    pub max_sz_increase: f64,
    pub recurrence_time: Option<f64>,
    pub fit: Option<DecayFit>,
    pub fit_error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub config_hash: String,
    pub engine: EngineChoice,
    pub units: UnitMode,
    pub rate_convention: String,
    pub alpha: f64,
    pub omega: f64,
    pub coupling_scale: f64,
    pub beta_analytic: f64,
    /// 1/β, absent when β = 0.
    pub flip_time: Option<f64>,
    pub shift: Option<ShiftResult>,
    pub beta_fitted: Option<f64>,
    /// β_fitted / β_analytic.
    pub beta_ratio: Option<f64>,
    pub t_max: f64,
    pub n_samples: usize,
    pub analytic: Option<AnalyticDiagnostics>,
    pub exact: Option<ExactDiagnostics>,
    pub manifest: Vec<String>,
    pub paper_claims: Option<PaperClaims>,
    #[serde(skip)]
    pub wall_clock_seconds: f64,
}

impl RunSummary {
    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

pub fn spin_system(cfg: &SimulationConfig) -> Result<SpinSystem> {
    match cfg.spin {
        SpinParams::Physical { charge, mass, b_field } => SpinSystem::new(charge, mass, b_field, cfg.units),
        SpinParams::Coupling { alpha, omega } => {
            let mut s = SpinSystem::from_coupling(alpha, omega)?;
            if cfg.units == UnitMode::SI {
                s.units = UnitMode::SI;
                s.hbar_half = 0.5 * codata::HBAR;
            }
            Ok(s)
        }
    }
}

/// The spin with its vacuum coupling scaled by `s`, Larmor frequency kept.
fn scaled_spin(spin: &SpinSystem, s: f64) -> SpinSystem {
    let mut out = *spin;
    out.alpha *= s;
    out.charge_magnitude *= s;
    out
}

fn shifts(cfg: &SimulationConfig, spin: &SpinSystem) -> Result<Option<ShiftResult>> {
    if !(spin.omega > 0.0) {
        return Ok(None);
    }
    let cutoff = match cfg.cutoff {
        Cutoff::Absolute(l) => l,
        Cutoff::Ratio(r) => r * spin.omega,
    };
    let res = match cfg.shift_method {
        ShiftMethod::ClosedForm => shift_closed_form(spin, cutoff)?,
        ShiftMethod::Quadrature => shift_quadrature(spin, cutoff, 1e-3 * spin.omega)?,
    };
    Ok(Some(res))
}

fn bath(cfg: &SimulationConfig, spin: &SpinSystem) -> Result<(ModeSet, Option<f64>)> {
    match cfg.bath {
        BathSpec::Resonant { n_modes, spacing_over_beta } => {
            let beta = spin.decay_rate().value;
            if !(beta > 0.0) {
                return Err(Error::domain("bath", "the resonant bath is sized by beta, which vanishes here"));
            }
            let spacing = spacing_over_beta * beta;
            let modes = build_resonant_bath(n_modes, 0.5 * n_modes as f64 * spacing, spin, cfg.coupling_normalization)?;
            Ok((modes.scaled(cfg.coupling_scale), Some(2.0 * PI / spacing)))
        }
        BathSpec::Product {
            n_freq,
            n_angular,
            window_min,
            window_max,
        } => {
            let modes = build_mode_set(
                n_freq,
                n_angular,
                window_min * spin.omega,
                window_max * spin.omega,
                spin,
                cfg.coupling_normalization,
            )?;
            Ok((modes.scaled(cfg.coupling_scale), None))
        }
    }
}

fn time_grid(cfg: &SimulationConfig, beta: f64, recurrence: Option<f64>) -> Result<Vec<f64>> {
    let t_end = match cfg.t_max {
        TimeSpan::Absolute(t) => t,
        TimeSpan::DecayTimes(k) => {
            if !(beta > 0.0) {
                return Err(Error::domain("time_grid", "t_max_decay needs beta > 0; set t_max instead"));
            }
            k / beta
        }
        TimeSpan::Recurrence(f) => f * recurrence.ok_or_else(|| Error::domain("time_grid", "no recurrence time"))?,
    };
    let n = cfg.n_samples;
    Ok((0..n).map(|i| t_end * i as f64 / (n - 1) as f64).collect())
}

struct ExactOutcome {
    trajectory: Trajectory,
    diagnostics: ExactDiagnostics,
}

fn run_exact(cfg: &SimulationConfig, spin: &SpinSystem, grid_for: impl Fn(Option<f64>) -> Result<Vec<f64>>) -> Result<ExactOutcome> {
    let (modes, recurrence) = bath(cfg, spin)?;
    let trunc = FockTruncation::new(modes.len(), cfg.n_max)?;
    let h = build_hamiltonian(spin, &modes, trunc, cfg.coupling_terms, cfg.dimension_cap)?;
    let (sz0, splus0) = cfg.initial.expectations(spin.hbar_half);
    let psi0 = JointState::from_expectations(&trunc, sz0, splus0)?;
    let grid = grid_for(recurrence)?;
    let ev = evolve(
        &h,
        &psi0,
        &grid,
        &EvolveOptions {
            engine: cfg.integrator,
            tolerance: cfg.tolerance,
            keep_states: false,
        },
    )?;
    let t_end = *grid.last().expect("n_samples >= 2");
    let (fit, fit_error) = match fit_decay_rate(&ev.trajectory, (0.0, t_end), spin.hbar_half) {
        Ok(f) => (Some(f), None),
        Err(e) => (None, Some(e.to_string())),
    };
    let sz = &ev.trajectory.sz;
    let diagnostics = ExactDiagnostics {
        integrator: ev.trajectory.meta.engine.clone(),
        dimension: trunc.dimension,
        n_modes: trunc.n_modes,
        n_max: trunc.n_max,
        energy_drift: ev.energy_drift,
        norm_drift: ev.norm_drift,
        final_sz: *sz.last().expect("non-empty grid"),
        max_sz_increase: sz.windows(2).map(|w| w[1] - w[0]).fold(f64::NEG_INFINITY, f64::max),
        recurrence_time: recurrence,
        fit,
        fit_error,
    };
    Ok(ExactOutcome {
        trajectory: ev.trajectory,
        diagnostics,
    })
}

/// Files written so far, removed again if the run fails part-way.
struct Artifacts {
    dir: PathBuf,
    created_dir: bool,
    files: Vec<String>,
}

impl Artifacts {
    fn open(dir: &Path) -> Result<Self> {
        let created_dir = !dir.exists();
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            created_dir,
            files: Vec::new(),
        })
    }

    fn write(&mut self, name: &str, f: impl FnOnce(&Path) -> Result<()>) -> Result<()> {
        self.files.push(name.to_string());
        f(&self.dir.join(name))
    }

    fn discard(&self) {
        for f in &self.files {
            let _ = fs::remove_file(self.dir.join(f));
        }
        if self.created_dir {
            let _ = fs::remove_dir(&self.dir);
        }
    }
}

/// Run the configured engines and write the trajectory CSVs, plot data,
/// `summary.json` and the `run.log` sidecar into `cfg.output_dir`.
///
/// Every computation finishes before the first file is written, and any
/// file already written is removed when a later write fails.
pub fn run(cfg: &SimulationConfig) -> Result<RunSummary> {
    let started = Instant::now();
    let hash = cfg.hash();
    let spin = spin_system(cfg)?;
    let eff = scaled_spin(&spin, cfg.coupling_scale);
    let rate = eff.decay_rate();
    let beta = rate.value;
    let shift = shifts(cfg, &eff)?;
    let grid_for = |recurrence: Option<f64>| time_grid(cfg, beta, recurrence);

    let exact = if cfg.engine.exact() {
        if spin.units != UnitMode::Natural {
            return Err(Error::domain("run", "the exact engine runs in natural units only"));
        }
        Some(run_exact(cfg, &spin, grid_for)?)
    } else {
        None
    };
    let grid = match &exact {
        Some(x) => x.trajectory.times.clone(),
        None => grid_for(None)?,
    };
    let analytic = if cfg.engine.analytic() {
        let (sz0, splus0) = cfg.initial.expectations(eff.hbar_half);
        let sol = MarkovianSolution::new(&eff, sz0, splus0, shift.as_ref())?;
        Some((sol, sol.trajectory(&grid)?))
    } else {
        None
    };

    let beta_fitted = exact.as_ref().and_then(|x| x.diagnostics.fit.map(|f| f.beta));
    let mut summary = RunSummary {
        config_hash: hash.clone(),
        engine: cfg.engine,
        units: cfg.units,
        rate_convention: rate.convention.to_string(),
        alpha: spin.alpha,
        omega: spin.omega,
        coupling_scale: cfg.coupling_scale,
        beta_analytic: beta,
        flip_time: (beta > 0.0).then(|| 1.0 / beta),
        shift,
        beta_fitted,
        beta_ratio: beta_fitted.filter(|_| beta > 0.0).map(|b| b / beta),
        t_max: *grid.last().expect("n_samples >= 2"),
        n_samples: grid.len(),
        analytic: analytic.as_ref().map(|(sol, tr)| AnalyticDiagnostics {
            final_sz: *tr.sz.last().expect("non-empty grid"),
            omega_shifted: sol.omega_shifted,
        }),
        exact: exact.as_ref().map(|x| x.diagnostics.clone()),
        manifest: Vec::new(),
        paper_claims: if cfg.units == UnitMode::SI {
            Some(PaperClaims::evaluate(Some(&spin))?)
        } else {
            None
        },
        wall_clock_seconds: 0.0,
    };

    let mut art = Artifacts::open(&cfg.output_dir)?;
    let hbar = spin.units.hbar();
    let result = (|| -> Result<()> {
        let mut names = Vec::new();
        let mut tagged: Vec<(&str, Trajectory)> = Vec::new();
        if let Some((_, tr)) = analytic {
            tagged.push(("analytic", tr));
        }
        if let Some(x) = exact {
            tagged.push(("exact", x.trajectory));
        }
        for (tag, mut tr) in tagged {
            tr.meta.config_hash = Some(hash.clone());
            let csv = format!("trajectory_{tag}.csv");
            let plot = format!("plot_{tag}.dat");
            art.write(&csv, |p| tr.write_csv(p))?;
            art.write(&plot, |p| tr.write_plot_data(p, hbar))?;
            names.push(csv);
            names.push(plot);
        }
        names.push(SUMMARY_FILE.into());
        names.push(LOG_FILE.into());
        summary.manifest = names;
        art.write(SUMMARY_FILE, |p| write_json_17(p, &summary))?;
        summary.wall_clock_seconds = started.elapsed().as_secs_f64();
        let stamp = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
        let log = format!(
            "finished_unix_s = {stamp}\nwall_clock_s = {}\nconfig_hash = {hash}\n",
            fmt17(summary.wall_clock_seconds)
        );
        art.write(LOG_FILE, |p| fs::write(p, log).map_err(|e| Error::io(p, e)))
    })();
    if let Err(e) = result {
        art.discard();
        return Err(e);
    }
    Ok(summary)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub index: usize,
    pub value: f64,
    pub run_dir: PathBuf,
    pub summary: Option<RunSummary>,
    pub error: Option<String>,
}

impl SweepRow {
    pub fn omega_shifted(&self) -> Option<f64> {
        let s = self.summary.as_ref()?;
        s.shift.map(|x| x.omega_shifted).or(Some(s.omega))
    }
}

pub const SWEEP_FILE: &str = "sweep.csv";

/// One run per value of `axis`, each in `out_dir/run_NNN`; failures stay in
/// their row. Rows follow the input order and the table is written to
/// `out_dir/sweep.csv`.
pub fn sweep(base: &RawConfig, axis: &str, values: &[f64], out_dir: &Path) -> Result<Vec<SweepRow>> {
    if !is_sweepable(axis) {
        return Err(Error::domain("sweep", format!("{axis:?} is not a sweepable numeric key")));
    }
    if let Some(v) = values.iter().find(|v| !v.is_finite()) {
        return Err(Error::domain("sweep", format!("non-finite sweep value {v}")));
    }
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let rows: Vec<SweepRow> = values
        .par_iter()
        .enumerate()
        .map(|(index, &value)| {
            let run_dir = out_dir.join(format!("run_{index:03}"));
            let outcome = (|| {
                let mut raw = base.clone();
                raw.set(axis, &sweep_value_text(value))?;
                let mut cfg = raw.resolve()?;
                cfg.output_dir = run_dir.clone();
                run(&cfg)
            })();
            let (summary, error) = match outcome {
                Ok(s) => (Some(s), None),
                Err(e) => (None, Some(e.to_string())),
            };
            SweepRow {
                index,
                value,
                run_dir,
                summary,
                error,
            }
        })
        .collect();
    write_sweep_csv(&out_dir.join(SWEEP_FILE), axis, &rows)?;
    Ok(rows)
}

/// Integers are written without an exponent so integer keys can be swept.
fn sweep_value_text(v: f64) -> String {
    if v.fract() == 0.0 && v.abs() < 1e15 {
        format!("{}", v as i64)
    } else {
        fmt17(v)
    }
}

fn write_sweep_csv(path: &Path, axis: &str, rows: &[SweepRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record([
        "index",
        axis,
        "status",
        "beta_analytic",
        "beta_fitted",
        "omega_shifted",
        "delta1",
        "delta2",
        "error",
    ])?;
    let opt = |x: Option<f64>| x.map(fmt17).unwrap_or_default();
    for r in rows {
        let s = r.summary.as_ref();
        let shift = s.and_then(|s| s.shift);
        w.write_record([
            r.index.to_string(),
            fmt17(r.value),
            if r.error.is_none() { "ok".into() } else { "error".into() },
            opt(s.map(|s| s.beta_analytic)),
            opt(s.and_then(|s| s.beta_fitted)),
            opt(r.omega_shifted()),
            opt(shift.map(|x| x.delta1)),
            opt(shift.map(|x| x.delta2)),
            r.error.clone().unwrap_or_default().replace('\n', " "),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::parse_config;
    use approx::assert_relative_eq;

    fn cfg(text: &str, dir: &Path) -> SimulationConfig {
        let mut c = parse_config(text).unwrap();
        c.output_dir = dir.to_path_buf();
        c
    }

    #[test]
    fn analytic_run_writes_manifest() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("run");
        let s = run(&cfg("alpha = 1\nomega = 1\nn_samples = 11\n", &out)).unwrap();
        assert_relative_eq!(s.beta_analytic, 1.0 / (6.0 * PI * PI), max_relative = 1e-14);
        assert_eq!(s.flip_time, Some(1.0 / s.beta_analytic));
        for f in &s.manifest {
            assert!(out.join(f).exists(), "{f}");
        }
        assert!(s.manifest.contains(&"trajectory_analytic.csv".to_string()));
        let back = RunSummary::read(&out.join(SUMMARY_FILE)).unwrap();
        assert_eq!(back.beta_analytic, s.beta_analytic);
        assert_eq!(back.shift, s.shift);
        assert!(s.paper_claims.is_none());
    }

    #[test]
    fn identical_configs_give_identical_bytes() {
        let dir = tempfile::tempdir().unwrap();
        let text = "engine = both\nalpha = 0.2\nomega = 1\nn_modes = 4\nn_samples = 30\ntheta = 0.3\n";
        let (a, b) = (dir.path().join("a"), dir.path().join("b"));
        run(&cfg(text, &a)).unwrap();
        run(&cfg(text, &b)).unwrap();
        for f in ["summary.json", "trajectory_exact.csv", "trajectory_analytic.csv", "plot_exact.dat"] {
            assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
        }
    }

    #[test]
    fn over_cap_leaves_nothing_behind() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("capped");
        let c = cfg("engine = exact\nalpha = 0.1\nomega = 1\nn_modes = 10\ndimension_cap = 1000\n", &out);
        assert!(matches!(run(&c), Err(Error::Resource { .. })));
        assert!(!out.exists());
    }

    #[test]
    fn si_electron_reports_claims() {
        let dir = tempfile::tempdir().unwrap();
        let c = cfg("charge = 1 e\nmass = 1 me\nb_field = 1e4 gauss\nn_samples = 5\n", dir.path());
        let s = run(&c).unwrap();
        let pc = s.paper_claims.unwrap();
        assert!(pc.run_matches_reference && pc.discrepancy);
        assert_relative_eq!(pc.computed_flip_time_s, s.flip_time.unwrap(), max_relative = 1e-12);
        assert!(pc.computed_flip_time_s > 5e10 && pc.computed_flip_time_s < 1e11);
    }

    #[test]
    fn sweep_keeps_order_and_row_errors() {
        let dir = tempfile::tempdir().unwrap();
        let base = RawConfig::parse("alpha = 1\nomega = 1\nn_samples = 5\n");
        let rows = sweep(&base, "omega", &[0.5, 1.0, 2.0, -1.0], dir.path()).unwrap();
        let b: Vec<f64> = rows[..3].iter().map(|r| r.summary.as_ref().unwrap().beta_analytic).collect();
        assert_relative_eq!(b[1] / b[0], 8.0, max_relative = 1e-9);
        assert_relative_eq!(b[2] / b[0], 64.0, max_relative = 1e-9);
        assert!(rows[3].error.is_some());
        let table = fs::read_to_string(dir.path().join(SWEEP_FILE)).unwrap();
        assert_eq!(table.lines().count(), 5);
        assert!(table.lines().nth(4).unwrap().contains(",error,"));
        assert!(sweep(&base, "engine", &[1.0], dir.path()).is_err());
    }
}
