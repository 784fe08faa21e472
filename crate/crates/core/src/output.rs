//! CSV tables, JSON run manifests and PGM heatmaps.
//!
//! Floats are written with Rust's shortest round-trip representation, so
//! identical results always produce identical bytes.

use std::io::Write;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::analysis::{CriticalTable, PhaseDiagram, TransitionOrder, TransitionReport};
use crate::classical::{CpTrajectory, SurvivalStats};
use crate::error::Result;
use crate::exact::Evolution;
use crate::meanfield::MFState;

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Long format: one `lambda,p_branch,n_inf` row per grid point, λ-major.
pub fn write_phase_diagram_csv<W: Write>(w: W, diagram: &PhaseDiagram) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["lambda", "p_branch", "n_inf"])?;
    for (lambda, row) in diagram.lambda_grid.iter().zip(&diagram.n_inf) {
        for (p, n) in diagram.p_branch_grid.iter().zip(row) {
            out.write_record([lambda.to_string(), p.to_string(), n.to_string()])?;
        }
    }
    out.flush()?;
    Ok(())
}

/// `t, mean_density, purity`, then `n_k, sx_k, sy_k` for every site `k`.
/// Trajectory runs append a final `mean_density_stderr` column.
pub fn write_time_series_csv<W: Write>(w: W, evolution: &Evolution) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    let sites = evolution.snapshots.first().map_or(0, |s| s.n.len());
    let with_err = evolution.density_stderr.is_some();
    let mut header = vec!["t".to_string(), "mean_density".to_string(), "purity".to_string()];
    for k in 0..sites {
        header.extend([format!("n_{k}"), format!("sx_{k}"), format!("sy_{k}")]);
    }
    if with_err {
        header.push("mean_density_stderr".into());
    }
    out.write_record(&header)?;
    for (t, s) in evolution.snapshots.iter().enumerate() {
        let mut rec = vec![t.to_string(), s.mean_density.to_string(), s.purity.to_string()];
        for k in 0..sites {
            rec.extend([s.n[k].to_string(), s.sx[k].to_string(), s.sy[k].to_string()]);
        }
        if let Some(err) = &evolution.density_stderr {
            rec.push(err[t].to_string());
        }
        out.write_record(&rec)?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_classical_csv<W: Write>(w: W, stats: &SurvivalStats) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["t", "density", "density_stderr", "p_surv", "p_surv_stderr"])?;
    for t in 0..stats.density.len() {
        out.write_record([
            t.to_string(),
            stats.density[t].to_string(),
            stats.density_stderr[t].to_string(),
            stats.survival[t].to_string(),
            stats.survival_stderr[t].to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_cp_ode_csv<W: Write>(w: W, traj: &CpTrajectory) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["time", "density"])?;
    for (t, n) in traj.times.iter().zip(&traj.density) {
        out.write_record([t.to_string(), n.to_string()])?;
    }
    out.flush()?;
    Ok(())
}

fn order_label(order: TransitionOrder) -> &'static str {
    match order {
        TransitionOrder::Continuous => "continuous",
        TransitionOrder::FirstOrder => "first_order",
    }
}

pub fn write_transitions_csv<W: Write>(w: W, reports: &[TransitionReport]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["lambda", "p_c", "order", "jump", "hysteresis"])?;
    for r in reports {
        out.write_record([
            r.lambda.to_string(),
            opt(r.p_c),
            order_label(r.order).to_string(),
            r.jump.to_string(),
            r.hysteresis.to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

/// `(λ, p_c, g_c)` rows; undefined entries are left empty.
pub fn write_critical_csv<W: Write>(w: W, table: &CriticalTable) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["lambda", "p_c", "g_c"])?;
    for r in &table.rows {
        out.write_record([r.lambda.to_string(), opt(r.p_c), opt(r.g_c)])?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_mf_trajectory_csv<W: Write>(w: W, states: &[MFState]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["t", "n", "x", "y"])?;
    for (t, s) in states.iter().enumerate() {
        out.write_record([t.to_string(), s.n.to_string(), s.x.to_string(), s.y.to_string()])?;
    }
    out.flush()?;
    Ok(())
}

/// Binary greyscale heatmap of `n_inf`: rows are λ (largest on top), columns
/// are `p_branch`; white is `n = 1`.
pub fn write_pgm<W: Write>(mut w: W, diagram: &PhaseDiagram) -> Result<()> {
    let rows = diagram.lambda_grid.len();
    let cols = diagram.p_branch_grid.len();
    write!(w, "P5\n{cols} {rows}\n255\n")?;
    let mut pixels = Vec::with_capacity(rows * cols);
    for row in diagram.n_inf.iter().rev() {
        pixels.extend(row.iter().map(|n| (n.clamp(0.0, 1.0) * 255.0).round() as u8));
    }
    w.write_all(&pixels)?;
    Ok(())
}

/// Record of one CLI run: everything required to reproduce its outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub config: serde_json::Value,
    pub seed: Option<u64>,
    pub config_hash: String,
    pub outputs: Vec<String>,
    #[serde(default)]
    pub notes: Vec<String>,
}

impl Manifest {
    pub fn new(command: &str, config: serde_json::Value, seed: Option<u64>) -> Result<Self> {
        let config_hash = config_hash(&config)?;
        Ok(Self {
            tool: "qca".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: command.into(),
            config,
            seed,
            config_hash,
            outputs: Vec::new(),
            notes: Vec::new(),
        })
    }

    pub fn write<W: Write>(&self, mut w: W) -> Result<()> {
        serde_json::to_writer_pretty(&mut w, self)?;
        writeln!(w)?;
        Ok(())
    }
}

/// SHA-256 hex digest of the compact JSON serialization (keys sorted).
pub fn config_hash(config: &serde_json::Value) -> Result<String> {
    let bytes = serde_json::to_vec(config)?;
    let digest = Sha256::digest(&bytes);
    Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::{BaseParams, InitialCondition};

    fn toy() -> PhaseDiagram {
        PhaseDiagram {
            lambda_grid: vec![0.0, 1.0],
            p_branch_grid: vec![0.0, 0.5, 1.0],
            n_inf: vec![vec![0.0, 0.25, 1.0], vec![0.0, 0.0, 0.5]],
            init: InitialCondition::High,
            iters: 1,
            base: BaseParams::REFERENCE,
        }
    }

    #[test]
    fn phase_csv_is_long_format() {
        let mut buf = Vec::new();
        write_phase_diagram_csv(&mut buf, &toy()).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<_> = text.lines().collect();
        assert_eq!(lines[0], "lambda,p_branch,n_inf");
        assert_eq!(lines.len(), 7);
        assert_eq!(lines[2], "0,0.5,0.25");
    }

    #[test]
    fn pgm_layout() {
        let mut buf = Vec::new();
        write_pgm(&mut buf, &toy()).unwrap();
        let header = b"P5\n3 2\n255\n";
        assert_eq!(&buf[..header.len()], header);
        assert_eq!(&buf[header.len()..], &[0, 0, 128, 0, 64, 255]);
    }

    #[test]
    fn hash_is_key_order_independent() {
        let a: serde_json::Value = serde_json::from_str(r#"{"a":1,"b":2}"#).unwrap();
        let b: serde_json::Value = serde_json::from_str(r#"{"b":2,"a":1}"#).unwrap();
        assert_eq!(config_hash(&a).unwrap(), config_hash(&b).unwrap());
        assert_eq!(config_hash(&a).unwrap().len(), 64);
    }
}
