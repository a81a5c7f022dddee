//! Flat `key = value` reports.

use std::fmt::Write as _;

use esbgk_core::diagnostics::{DerivedConstants, HypothesisReport};

fn f(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn hypothesis_text(r: &HypothesisReport) -> String {
    let mut s = String::new();
    let rows: [(&str, String); 19] = [
        ("nu", f(r.nu)),
        ("beta", f(r.beta)),
        ("C0_inf", f(r.c0_inf)),
        ("E_func0", f(r.e_func0)),
        ("streamed_deviation", f(r.streamed_deviation)),
        ("eps_quantity", f(r.eps_quantity)),
        ("t1", f(r.t1)),
        ("C_beta", f(r.c_beta)),
        ("N_beta0", f(r.n_beta0)),
        ("t_samples", r.t_samples.to_string()),
        ("x_samples", r.x_samples.to_string()),
        ("c0_threshold", f(r.c0_threshold)),
        ("eps0_threshold", f(r.eps0_threshold)),
        ("c0_verdict", verdict(r.c0_ok)),
        ("eps_verdict", verdict(r.eps_ok)),
        ("beta_verdict", verdict(r.beta_ok)),
        ("verdict", verdict(r.passed())),
        ("t_max", f(20.0 * (1.0 - r.nu))),
        ("t_spacing", "log".into()),
    ];
    for (k, v) in rows {
        let _ = writeln!(s, "{k} = {v}");
    }
    s
}

fn verdict(ok: bool) -> String {
    if ok { "pass" } else { "fail" }.into()
}

pub fn constants_text(d: &DerivedConstants) -> String {
    let c = &d.calibration;
    let mut s = String::new();
    let _ = writeln!(s, "nu = {}", f(d.nu));
    let _ = writeln!(s, "beta = {}", f(d.beta));
    let _ = writeln!(s, "C_beta = {}", f(d.c_beta));
    let _ = writeln!(s, "calibration.samples = {}", c.samples);
    let _ = writeln!(s, "calibration.seed = {}", c.seed);
    let _ = writeln!(s, "calibration.wM_const = {}", f(c.wm_const));
    let _ = writeln!(s, "calibration.ratio_n0_max = {}", f(c.ratio_n0_max));
    let _ = writeln!(s, "calibration.ratio_energy_max = {}", f(c.ratio_energy_max));
    let _ = writeln!(s, "calibration.ratio_bulk_max = {}", f(c.ratio_bulk_max));
    s
}

/// Parses a report produced by this module back into pairs.
pub fn parse_pairs(text: &str) -> Vec<(String, String)> {
    text.lines()
        .filter_map(|l| l.split_once(" = "))
        .map(|(k, v)| (k.to_string(), v.to_string()))
        .collect()
}
