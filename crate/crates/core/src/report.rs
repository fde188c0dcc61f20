//! Human-readable rendering of a run summary and its published-claim comparison.

use std::fmt::Write;

use crate::runner::{PaperClaims, RunSummary};

fn sci(x: f64) -> String {
    format!("{x:.6e}")
}

fn opt(x: Option<f64>) -> String {
    x.map_or_else(|| "n/a".into(), sci)
}

pub fn render_claims(pc: &PaperClaims) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "published spin-flip estimate vs SI evaluation");
    let _ = writeln!(s, "  reference system       {}", pc.reference_system);
    let _ = writeln!(s, "  claimed 1/beta         {} s", sci(pc.claimed_flip_time_s));
    let _ = writeln!(s, "  computed 1/beta        {} s", sci(pc.computed_flip_time_s));
    let _ = writeln!(s, "  computed / claimed     {}", sci(pc.ratio));
    let _ = writeln!(s, "  rate convention        {}", pc.convention);
    let _ = writeln!(s, "  run is reference       {}", if pc.run_matches_reference { "yes" } else { "no" });
    if pc.discrepancy {
        let _ = writeln!(
            s,
            "  DISCREPANCY: the values differ by a factor of {:.1e}; see the unit-convention open question",
            pc.ratio
        );
    } else {
        let _ = writeln!(s, "  values agree within a factor of 10");
    }
    let _ = writeln!(s, "  note: {}", pc.note);
    s
}

pub fn render_report(summary: &RunSummary) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "run {}", summary.config_hash);
    let _ = writeln!(s, "  engine                 {}", format!("{:?}", summary.engine).to_lowercase());
    let _ = writeln!(s, "  units                  {}", summary.units.name());
    let _ = writeln!(s, "  alpha                  {}", sci(summary.alpha));
    let _ = writeln!(s, "  omega                  {}", sci(summary.omega));
    let _ = writeln!(s, "  beta (closed form)     {}", sci(summary.beta_analytic));
    let _ = writeln!(s, "  1/beta                 {}", opt(summary.flip_time));
    let _ = writeln!(s, "  beta (fitted)          {}", opt(summary.beta_fitted));
    let _ = writeln!(s, "  fitted / closed form   {}", opt(summary.beta_ratio));
    if let Some(sh) = &summary.shift {
        let _ = writeln!(s, "  delta1                 {}", sci(sh.delta1));
        let _ = writeln!(s, "  delta2                 {}", sci(sh.delta2));
        let _ = writeln!(s, "  Omega                  {}", sci(sh.omega_shifted));
        let _ = writeln!(s, "  cutoff                 {}", sci(sh.cutoff));
    }
    if let Some(x) = &summary.exact {
        let _ = writeln!(s, "  exact dimension        {}", x.dimension);
        let _ = writeln!(s, "  energy drift           {}", sci(x.energy_drift));
        let _ = writeln!(s, "  norm drift             {}", sci(x.norm_drift));
        let _ = writeln!(s, "  recurrence time        {}", opt(x.recurrence_time));
    }
    s.push('\n');
    match &summary.paper_claims {
        Some(pc) => s.push_str(&render_claims(pc)),
        None => s.push_str("no published-claim comparison in this summary (it is produced for units = si)\n"),
    }
    s
}
