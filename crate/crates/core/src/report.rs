//! Text and CSV rendering with a fixed numeric format.

use std::fmt::Write as _;

use crate::operator::RevenueSurface;
use crate::scenario::{PhaseCell, Scenario};

/// Significant digits used for every number written out.
pub const SIGNIFICANT_DIGITS: i32 = 12;

/// Decimal notation (never exponent) with 12 significant digits.
pub fn fmt_num(x: f64) -> String {
    if x.is_nan() {
        return "NaN".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return "0".into();
    }
    let mut exp = x.abs().log10().floor() as i32;
    // rounding can carry into the next decade
    let probe = format!("{:.*e}", (SIGNIFICANT_DIGITS - 1) as usize, x);
    if let Some(e) = probe.split('e').nth(1).and_then(|e| e.parse::<i32>().ok()) {
        exp = e;
    }
    let decimals = SIGNIFICANT_DIGITS - 1 - exp;
    if decimals >= 0 {
        format!("{:.*}", decimals as usize, x)
    } else {
        let scale = 10f64.powi(-decimals);
        format!("{:.0}", (x / scale).round() * scale)
    }
}

/// Leading comment recording how a file was produced.
pub fn provenance_line(command: &str, scenario: &Scenario, gamma: Option<f64>) -> String {
    let e = &scenario.expectation;
    let mode = match e.mode {
        crate::expectation::ExpectationMode::Exact => "exact",
        crate::expectation::ExpectationMode::MonteCarlo => "mc",
    };
    let mut line = format!("# wcn {command} seed={} mode={mode} rng=chacha8", scenario.seed);
    if e.mode == crate::expectation::ExpectationMode::MonteCarlo {
        let _ = write!(line, " samples={}", e.sample_count);
    }
    if let Some(g) = gamma {
        let _ = write!(line, " gamma={}", fmt_num(g));
    }
    line.push('\n');
    line
}

pub const SWEEP_HEADER: &str = "p,delta,revenue,converged,argmax";
pub const PHASE_HEADER: &str = "rho,eta_home,alpha,converged";

/// Sweep surface as CSV, row-major over `p` then `delta`. Failed cells have an
/// empty revenue field.
pub fn surface_csv(surface: &RevenueSurface, provenance: &str) -> String {
    let mut out = String::from(provenance);
    out.push_str(SWEEP_HEADER);
    out.push('\n');
    for (i, p) in surface.p_grid.iter().enumerate() {
        for (j, d) in surface.delta_grid.iter().enumerate() {
            let cell = surface.cell(i, j);
            let revenue = cell.revenue_mean().map(fmt_num).unwrap_or_default();
            let argmax = surface.argmax == Some((i, j));
            let _ = writeln!(out, "{},{},{},{},{}", fmt_num(*p), fmt_num(*d), revenue, cell.converged, argmax);
        }
    }
    out
}

pub fn phase_csv(cells: &[PhaseCell], provenance: &str) -> String {
    let mut out = String::from(provenance);
    out.push_str(PHASE_HEADER);
    out.push('\n');
    for c in cells {
        let _ = writeln!(out, "{},{},{},{}", fmt_num(c.rho), fmt_num(c.eta_home), fmt_num(c.alpha), c.converged);
    }
    out
}
