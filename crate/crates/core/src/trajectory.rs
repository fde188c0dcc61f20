use std::path::Path;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::fmt17;

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TrajectoryMeta {
    pub engine: String,
    pub config_hash: Option<String>,
}

/// Spin expectation values on a time grid, in units where ħ is the
/// unit system's ħ (1 in natural units).
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub sz: Vec<f64>,
    pub splus: Vec<Complex64>,
    pub photon_number: Option<Vec<f64>>,
    pub meta: TrajectoryMeta,
}

impl Trajectory {
    pub fn new(times: Vec<f64>, sz: Vec<f64>, splus: Vec<Complex64>, engine: &str) -> Self {
        debug_assert_eq!(times.len(), sz.len());
        debug_assert_eq!(times.len(), splus.len());
        Self {
            times,
            sz,
            splus,
            photon_number: None,
            meta: TrajectoryMeta {
                engine: engine.to_string(),
                config_hash: None,
            },
        }
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn sx(&self) -> impl Iterator<Item = f64> + '_ {
        self.splus.iter().map(|s| s.re)
    }

    pub fn sy(&self) -> impl Iterator<Item = f64> + '_ {
        self.splus.iter().map(|s| s.im)
    }

    /// Largest `sx² + sy² + sz² − (ħ/2)²` over the trajectory.
    pub fn max_cone_excess(&self, hbar_half: f64) -> f64 {
        self.sz
            .iter()
            .zip(&self.splus)
            .map(|(z, p)| z * z + p.norm_sqr() - hbar_half * hbar_half)
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        let mut header = vec!["t", "sz", "splus_re", "splus_im", "sx", "sy"];
        if self.photon_number.is_some() {
            header.push("photon_number");
        }
        w.write_record(&header)?;
        for i in 0..self.len() {
            let p = self.splus[i];
            let mut row = vec![
                fmt17(self.times[i]),
                fmt17(self.sz[i]),
                fmt17(p.re),
                fmt17(p.im),
                fmt17(p.re),
                fmt17(p.im),
            ];
            if let Some(n) = &self.photon_number {
                row.push(fmt17(n[i]));
            }
            w.write_record(&row)?;
        }
        w.flush().map_err(|e| Error::io(path, e))?;
        Ok(())
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let mut r = csv::Reader::from_path(path)?;
        let has_photons = r.headers()?.iter().any(|h| h == "photon_number");
        let mut t = Vec::new();
        let mut sz = Vec::new();
        let mut sp = Vec::new();
        let mut np = Vec::new();
        for rec in r.records() {
            let rec = rec?;
            let num = |i: usize| -> Result<f64> {
                rec.get(i)
                    .and_then(|s| s.trim().parse::<f64>().ok())
                    .ok_or_else(|| Error::domain("read_trajectory", format!("bad field {i} in {rec:?}")))
            };
            t.push(num(0)?);
            sz.push(num(1)?);
            sp.push(Complex64::new(num(2)?, num(3)?));
            if has_photons {
                np.push(num(6)?);
            }
        }
        let mut traj = Trajectory::new(t, sz, sp, "csv");
        if has_photons {
            traj.photon_number = Some(np);
        }
        Ok(traj)
    }

    /// Gnuplot-style data: `t  sz/ħ` block, two blank lines, `t  |s+|/ħ` block.
    pub fn write_plot_data(&self, path: &Path, hbar: f64) -> Result<()> {
        let mut s = String::from("# t  <S_z>/hbar\n");
        for (t, z) in self.times.iter().zip(&self.sz) {
            s.push_str(&format!("{} {}\n", fmt17(*t), fmt17(z / hbar)));
        }
        s.push_str("\n\n# t  |<S_+>|/hbar\n");
        for (t, p) in self.times.iter().zip(&self.splus) {
            s.push_str(&format!("{} {}\n", fmt17(*t), fmt17(p.norm() / hbar)));
        }
        std::fs::write(path, s).map_err(|e| Error::io(path, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn csv_round_trip_is_exact(vals in proptest::collection::vec((-1e3f64..1e3, -1.0f64..1.0, -1.0f64..1.0), 1..20),
                                   photons in any::<bool>()) {
            let times: Vec<f64> = (0..vals.len()).map(|i| i as f64 / 3.0).collect();
            let mut tr = Trajectory::new(
                times,
                vals.iter().map(|v| v.0).collect(),
                vals.iter().map(|v| Complex64::new(v.1, v.2)).collect(),
                "test",
            );
            if photons {
                tr.photon_number = Some(vals.iter().map(|v| v.1.abs() / 7.0).collect());
            }
            let dir = tempfile::tempdir().unwrap();
            let p = dir.path().join("t.csv");
            tr.write_csv(&p).unwrap();
            let back = Trajectory::read_csv(&p).unwrap();
            prop_assert_eq!(back.times, tr.times);
            prop_assert_eq!(back.sz, tr.sz);
            prop_assert_eq!(back.splus, tr.splus);
            prop_assert_eq!(back.photon_number, tr.photon_number);
        }
    }
}
