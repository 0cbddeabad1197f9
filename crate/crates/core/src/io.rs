//! JSON artifacts for gains, certificates and design results, plus CSV
//! trace output. Node ids are 1-based on disk.

use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::design::{DesignResult, GainSet, IterationRecord, LyapunovCertificate};
use crate::error::{Error, Result};
use crate::linalg::{from_rows, to_rows, Mat};
use crate::network::SensorNetwork;
use crate::simulate::{write_field_csv, write_trace_csv, SimulationTrace};

pub const GAINS_SCHEMA_VERSION: u32 = 1;

type Rows = Vec<Vec<f64>>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeMatrix {
    pub node: usize,
    pub matrix: Rows,
}

/// A consensus block on edge `from → to`. `g` is the unweighted gain,
/// `g_bar = m_ij·g` is what the observer applies; when both are present
/// `g_bar` wins.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConsensusEntry {
    pub from: usize,
    pub to: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub g: Option<Rows>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub g_bar: Option<Rows>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CertificateFile {
    pub tau: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rho: Option<f64>,
    /// Lower-triangle blocks `P_ij`, `j ≤ i`, row by row.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p_blocks: Option<Vec<Vec<Rows>>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DesignSummary {
    pub gamma: f64,
    pub kappa1: f64,
    pub seed_alternations: usize,
    pub seed_beta: f64,
    pub converged: bool,
    pub rho_history: Vec<f64>,
    pub log: Vec<IterationRecord>,
}

/// On-disk form of a gain set with an optional certificate and design log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GainsFile {
    pub schema_version: u32,
    pub slow_modes: usize,
    pub inputs: usize,
    pub nodes: usize,
    /// `K_i`; nodes left out are zero.
    pub k: Vec<NodeMatrix>,
    /// `L_i`; nodes left out are zero.
    pub l: Vec<NodeMatrix>,
    #[serde(default)]
    pub consensus: Vec<ConsensusEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub certificate: Option<CertificateFile>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub design: Option<DesignSummary>,
}

fn bad(msg: impl Into<String>) -> Error {
    Error::Gains(msg.into())
}

fn matrix(rows: &Rows, shape: (usize, usize), what: &str) -> Result<Mat> {
    if rows.len() != shape.0 || rows.iter().any(|r| r.len() != shape.1) {
        return Err(bad(format!("{what} must be {}x{}", shape.0, shape.1)));
    }
    if rows.iter().flatten().any(|v| !v.is_finite()) {
        return Err(bad(format!("{what} has non-finite entries")));
    }
    Ok(from_rows(rows))
}

impl GainsFile {
    /// Serializes `gains`; consensus blocks carry both `g` and `g_bar`.
    pub fn new(gains: &GainSet, net: &SensorNetwork, cert: Option<&LyapunovCertificate>) -> Self {
        let nm = |i: usize, m: &Mat| NodeMatrix {
            node: i + 1,
            matrix: to_rows(m),
        };
        let consensus = gains
            .g_bar
            .iter()
            .map(|(&(i, j), gb)| {
                let m = net.weight(i, j);
                ConsensusEntry {
                    from: i + 1,
                    to: j + 1,
                    g: (m != 0.0).then(|| to_rows(&(gb / m))),
                    g_bar: Some(to_rows(gb)),
                }
            })
            .collect();
        Self {
            schema_version: GAINS_SCHEMA_VERSION,
            slow_modes: gains.n,
            inputs: gains.q_u,
            nodes: gains.node_count(),
            k: gains
                .k
                .iter()
                .enumerate()
                .filter(|(i, k)| net.is_controller(*i) || k.iter().any(|v| *v != 0.0))
                .map(|(i, k)| nm(i, k))
                .collect(),
            l: gains.l.iter().enumerate().map(|(i, l)| nm(i, l)).collect(),
            consensus,
            certificate: cert.map(|c| CertificateFile {
                tau: c.tau,
                rho: Some(c.rho),
                p_blocks: Some(
                    c.lower_blocks(gains.n)
                        .iter()
                        .map(|row| row.iter().map(to_rows).collect())
                        .collect(),
                ),
            }),
            design: None,
        }
    }

    pub fn from_design(result: &DesignResult, net: &SensorNetwork) -> Self {
        let mut f = Self::new(&result.gains, net, Some(&result.cert));
        f.design = Some(DesignSummary {
            gamma: result.gamma,
            kappa1: result.kappa1,
            seed_alternations: result.seed_alternations,
            seed_beta: result.seed_beta,
            converged: result.converged,
            rho_history: result.rho_history.clone(),
            log: result.log.clone(),
        });
        f
    }

    /// Rebuilds the gain set for `net`. Shapes and node ids are checked here;
    /// the sparsity pattern is left to the caller so that a verification can
    /// still report it.
    pub fn gains(&self, net: &SensorNetwork, n: usize, q_u: usize) -> Result<GainSet> {
        if self.schema_version != GAINS_SCHEMA_VERSION {
            return Err(bad(format!("unsupported schema_version {}", self.schema_version)));
        }
        let p = net.node_count();
        if self.nodes != p || self.slow_modes != n || self.inputs != q_u {
            return Err(bad(format!(
                "file is for {} nodes, {} slow modes and {} inputs; the model has {p}, {n} and {q_u}",
                self.nodes, self.slow_modes, self.inputs
            )));
        }
        let node = |id: usize| -> Result<usize> {
            if id >= 1 && id <= p {
                Ok(id - 1)
            } else {
                Err(bad(format!("unknown node {id}")))
            }
        };
        let mut g = GainSet::zeros(net, n, q_u);
        for e in &self.k {
            let i = node(e.node)?;
            g.k[i] = matrix(&e.matrix, (q_u, n), &format!("K_{}", e.node))?;
        }
        let dims = net.output_dims();
        for e in &self.l {
            let i = node(e.node)?;
            g.l[i] = matrix(&e.matrix, (n, dims[i]), &format!("L_{}", e.node))?;
        }
        for e in &self.consensus {
            let (i, j) = (node(e.from)?, node(e.to)?);
            let what = format!("G_{}{}", e.from, e.to);
            let gb = match (&e.g_bar, &e.g) {
                (Some(gb), _) => matrix(gb, (n, n), &what)?,
                (None, Some(gi)) => {
                    let m = net.weight(i, j);
                    if m == 0.0 {
                        return Err(bad(format!("{what} is given without g_bar on a non-edge")));
                    }
                    matrix(gi, (n, n), &what)? * m
                }
                (None, None) => return Err(bad(format!("{what} has neither g nor g_bar"))),
            };
            g.g_bar.insert((i, j), gb);
        }
        Ok(g)
    }

    /// The stored certificate when it is complete (`P`, `τ`, `ρ`).
    pub fn full_certificate(&self, n: usize) -> Result<Option<LyapunovCertificate>> {
        let Some(c) = &self.certificate else {
            return Ok(None);
        };
        let (Some(blocks), Some(rho)) = (&c.p_blocks, c.rho) else {
            return Ok(None);
        };
        let mats = blocks
            .iter()
            .enumerate()
            .map(|(i, row)| {
                row.iter()
                    .enumerate()
                    .map(|(j, b)| matrix(b, (n, n), &format!("P_{}{}", i + 1, j + 1)))
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        LyapunovCertificate::from_blocks(&mats, n, c.tau, rho)
            .map(Some)
            .map_err(|e| bad(e.to_string()))
    }

    pub fn tau(&self) -> Option<f64> {
        self.certificate.as_ref().map(|c| c.tau)
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| bad(e.to_string()))
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("gains serialize")
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::from_json_str(&read_text(path)?)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_text(path, &(self.to_json_pretty() + "\n"))
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.display().to_string(),
        source,
    }
}

pub fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(io_err(path))
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(io_err(path))
}

pub fn write_trace(path: &Path, trace: &SimulationTrace) -> Result<()> {
    let f = File::create(path).map_err(io_err(path))?;
    write_trace_csv(trace, BufWriter::new(f)).map_err(io_err(path))
}

pub fn write_field(path: &Path, trace: &SimulationTrace, grid: &[f64]) -> Result<()> {
    let f = File::create(path).map_err(io_err(path))?;
    write_field_csv(trace, grid, BufWriter::new(f)).map_err(io_err(path))
}
