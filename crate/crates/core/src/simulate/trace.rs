use std::fmt::Write as _;
use std::io::Write;

use crate::spectral::reconstruct_field;

use super::ClosedLoopState;

#[derive(Debug, Clone, PartialEq)]
pub struct TraceSample {
    pub t: f64,
    /// All retained modal coefficients.
    pub x: Vec<f64>,
    pub x_s: Vec<f64>,
    pub x_f_norm: f64,
    pub x_hat: Vec<Vec<f64>>,
    pub u: Vec<f64>,
    pub w: Vec<f64>,
    pub y: Vec<Vec<f64>>,
    pub v_bar: Vec<Vec<f64>>,
    /// `∫ x_sᵀQx_s + uᵀRu` up to `t`.
    pub perf_integral: f64,
    /// `∫ w̃ᵀw̃` up to `t`.
    pub dist_integral: f64,
}

impl TraceSample {
    /// `‖x_s − x̂_i‖` per observer.
    pub fn estimation_errors(&self) -> Vec<f64> {
        self.x_hat
            .iter()
            .map(|xh| {
                xh.iter()
                    .zip(&self.x_s)
                    .map(|(a, b)| (a - b).powi(2))
                    .sum::<f64>()
                    .sqrt()
            })
            .collect()
    }

    pub fn x_s_norm(&self) -> f64 {
        self.x_s.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// L² norm of the field, equal to the modal norm for an orthonormal basis.
    pub fn field_norm(&self) -> f64 {
        self.x.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationTrace {
    pub samples: Vec<TraceSample>,
    pub n: usize,
    pub p: usize,
    pub wavenumbers: Vec<u32>,
    pub dt: f64,
    pub final_state: ClosedLoopState,
}

fn num(v: f64) -> String {
    format!("{v:.11e}")
}

/// Writes the trace as CSV: `t`, `x_s`, `‖x_f‖`, every estimate, `u`, and the
/// two running integrals. Values carry 12 significant digits.
pub fn write_trace_csv(trace: &SimulationTrace, mut out: impl Write) -> std::io::Result<()> {
    let q_u = trace.samples.first().map_or(0, |s| s.u.len());
    let mut header = String::from("t");
    for r in 0..trace.n {
        write!(header, ",x_s{}", r + 1).unwrap();
    }
    header.push_str(",x_f_norm");
    for i in 0..trace.p {
        for r in 0..trace.n {
            write!(header, ",xhat{}_{}", i + 1, r + 1).unwrap();
        }
    }
    for r in 0..q_u {
        write!(header, ",u{}", r + 1).unwrap();
    }
    header.push_str(",perf_integral,dist_integral");
    writeln!(out, "{header}")?;
    for s in &trace.samples {
        let mut row = vec![num(s.t)];
        row.extend(s.x_s.iter().map(|v| num(*v)));
        row.push(num(s.x_f_norm));
        for xh in &s.x_hat {
            row.extend(xh.iter().map(|v| num(*v)));
        }
        row.extend(s.u.iter().map(|v| num(*v)));
        row.push(num(s.perf_integral));
        row.push(num(s.dist_integral));
        writeln!(out, "{}", row.join(","))?;
    }
    Ok(())
}

/// Field snapshots: one row per sample, `t` followed by `U(z_k, t)` on the grid.
pub fn write_field_csv(trace: &SimulationTrace, z_grid: &[f64], mut out: impl Write) -> std::io::Result<()> {
    let mut header = String::from("t");
    for z in z_grid {
        write!(header, ",z={}", num(*z)).unwrap();
    }
    writeln!(out, "{header}")?;
    for s in &trace.samples {
        let u = reconstruct_field(&trace.wavenumbers, &s.x, z_grid);
        let mut row = vec![num(s.t)];
        row.extend(u.into_iter().map(num));
        writeln!(out, "{}", row.join(","))?;
    }
    Ok(())
}
