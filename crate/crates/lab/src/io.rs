//! Output files: CSV with a comment header carrying the command, config hash
//! and seed; curves as JSON-lines with a leading metadata record. Formatting
//! uses shortest round-trip floats, so identical runs produce identical bytes.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use anyhow::{Context, Result};

use msle_core::conformal::DrivingFunction;
use msle_core::drift::DriftReport;
use msle_core::lattice::{GridDomain, LatticeCurve};
use msle_core::potential::ScalarField;

pub fn header(cmd: &str, config_hash: &str, seed: u64) -> String {
    format!("# msle-lab {cmd}\n# config_hash = {config_hash}\n# seed = {seed}\n")
}

fn write(path: &Path, contents: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, contents).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

/// One row per driving step of every record: `sample,k,dt,xi,t`.
pub fn write_drivings_csv(path: &Path, head: &str, drivings: &[DrivingFunction]) -> Result<()> {
    let mut s = String::from(head);
    s.push_str("sample,k,dt,xi,t\n");
    for (i, df) in drivings.iter().enumerate() {
        let mut t = 0.0;
        for (k, st) in df.steps.iter().enumerate() {
            t += st.dt;
            let _ = writeln!(s, "{i},{k},{},{},{}", st.dt, st.xi, t);
        }
    }
    write(path, &s)
}

/// Marginal values: `sample,t,xi`.
pub fn write_marginals_csv(
    path: &Path,
    head: &str,
    t_grid: &[f64],
    rows: &[Vec<Option<f64>>],
) -> Result<()> {
    let mut s = String::from(head);
    s.push_str("sample,t,xi\n");
    for (i, row) in rows.iter().enumerate() {
        for (k, v) in row.iter().enumerate() {
            if let Some(x) = v {
                let _ = writeln!(s, "{i},{},{}", t_grid[k], x);
            }
        }
    }
    write(path, &s)
}

/// Drift reports: `sample,t,n_m,lambda,int_p,int_p_pm,int_qk`.
pub fn write_reports_csv(path: &Path, head: &str, reports: &[(usize, &[DriftReport])]) -> Result<()> {
    let mut s = String::from(head);
    s.push_str("sample,t,n_m,lambda,int_p,int_p_pm,int_qk\n");
    for (i, rs) in reports {
        for r in *rs {
            let _ = writeln!(
                s,
                "{i},{},{},{},{},{},{}",
                r.t, r.n_m, r.lambda, r.int_p, r.int_p_pm, r.int_qk
            );
        }
    }
    write(path, &s)
}

/// Curves as JSON lines; the first record carries the run metadata.
pub fn write_curves_jsonl(
    path: &Path,
    config_hash: &str,
    seed: u64,
    mass: f64,
    mesh: f64,
    curves: &[LatticeCurve],
    log_densities: Option<&[f64]>,
) -> Result<()> {
    let mut s = String::new();
    let meta = serde_json::json!({
        "config_hash": config_hash,
        "seed": seed,
        "mass": mass,
        "mesh": mesh,
        "count": curves.len(),
    });
    let _ = writeln!(s, "{meta}");
    for (i, c) in curves.iter().enumerate() {
        let pts: Vec<[i32; 2]> = c.vertices.iter().map(|&(a, b)| [a, b]).collect();
        let mut rec = serde_json::json!({
            "stream": i,
            "m": mass,
            "curve": pts,
        });
        if let Some(ld) = log_densities {
            rec["log_density"] = serde_json::json!(ld[i]);
        }
        let _ = writeln!(s, "{rec}");
    }
    write(path, &s)
}

/// Scalar field over a grid domain: `i,j,value`.
pub fn write_field_csv(path: &Path, head: &str, dom: &GridDomain, f: &ScalarField) -> Result<()> {
    let mut s = String::from(head);
    s.push_str("i,j,value\n");
    for (idx, &(i, j)) in dom.interior().iter().enumerate() {
        let _ = writeln!(s, "{i},{j},{}", f.values[idx]);
    }
    write(path, &s)
}

pub fn write_json(path: &Path, value: &serde_json::Value) -> Result<()> {
    write(path, &format!("{:#}\n", value))
}
