//! Sensor-network topology, point-sensor output operators and the gain
//! sparsity pattern induced by the graph.
//!
//! Nodes are 0-based here. Serialized artifacts use 1-based ids.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::design::GainSet;
use crate::linalg::{Mat, Vector};
use crate::spectral::{check_location, eigenfunction, Eigensystem};

#[derive(Debug, Error, PartialEq)]
pub enum NetworkError {
    #[error("unknown node {0}")]
    UnknownNode(usize),
    #[error("({0}, {1}) is not an edge; m_ij = 0")]
    NotAnEdge(usize, usize),
    #[error("invalid network: {0}")]
    Invalid(String),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub from: usize,
    pub to: usize,
    pub weight: f64,
}

/// Graph and sensing layout, before it is bound to a modal basis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub node_count: usize,
    pub edges: Vec<Edge>,
    /// Point-sensor locations per node.
    pub sensor_locations: Vec<Vec<f64>>,
    pub sensor_gain: f64,
    pub controller_nodes: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SensorNetwork {
    pub spec: NetworkSpec,
    /// Original node index of each node; differs from the position only in
    /// reduced variants such as [`SensorNetwork::single_observer`].
    pub labels: Vec<usize>,
    pub c_s: Vec<Mat>,
    pub c_f: Vec<Mat>,
}

/// Admissible gain structure: K only on controller nodes, consensus blocks
/// only on edges, L block-diagonal.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SparsityPattern {
    pub k_mask: Vec<bool>,
    pub g_mask: Vec<Vec<bool>>,
    pub l_dims: Vec<usize>,
}

impl SparsityPattern {
    pub fn allowed_edges(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for (i, row) in self.g_mask.iter().enumerate() {
            for (j, &ok) in row.iter().enumerate() {
                if ok {
                    out.push((i, j));
                }
            }
        }
        out
    }
}

impl SensorNetwork {
    pub fn new(spec: NetworkSpec, eigen: &Eigensystem) -> Result<Self, NetworkError> {
        let p = spec.node_count;
        if p == 0 {
            return Err(NetworkError::Invalid("network has no nodes".into()));
        }
        if spec.sensor_locations.len() != p {
            return Err(NetworkError::Invalid(format!(
                "{} sensor lists for {p} nodes",
                spec.sensor_locations.len()
            )));
        }
        let mut seen = vec![vec![false; p]; p];
        for e in &spec.edges {
            if e.from >= p {
                return Err(NetworkError::UnknownNode(e.from));
            }
            if e.to >= p {
                return Err(NetworkError::UnknownNode(e.to));
            }
            if e.from == e.to {
                return Err(NetworkError::Invalid(format!("self-loop on node {}", e.from)));
            }
            if !(e.weight > 0.0 && e.weight.is_finite()) {
                return Err(NetworkError::Invalid(format!(
                    "edge ({}, {}) has non-positive weight {}",
                    e.from, e.to, e.weight
                )));
            }
            if seen[e.from][e.to] {
                return Err(NetworkError::Invalid(format!(
                    "duplicate edge ({}, {})",
                    e.from, e.to
                )));
            }
            seen[e.from][e.to] = true;
        }
        if spec.controller_nodes.is_empty() {
            return Err(NetworkError::Invalid("controller node set is empty".into()));
        }
        for &u in &spec.controller_nodes {
            if u >= p {
                return Err(NetworkError::UnknownNode(u));
            }
        }
        for (i, locs) in spec.sensor_locations.iter().enumerate() {
            if locs.is_empty() {
                return Err(NetworkError::Invalid(format!("node {i} has no sensors")));
            }
            for &z in locs {
                check_location(z).map_err(|e| NetworkError::Invalid(e.to_string()))?;
            }
        }

        let n = eigen.n_slow;
        let (c_s, c_f) = spec
            .sensor_locations
            .iter()
            .map(|locs| {
                let full = Mat::from_fn(locs.len(), eigen.n_total(), |r, c| {
                    spec.sensor_gain * eigenfunction(eigen.wavenumbers[c], locs[r])
                });
                (
                    full.columns(0, n).into_owned(),
                    full.columns(n, eigen.n_total() - n).into_owned(),
                )
            })
            .unzip();
        Ok(Self {
            labels: (0..p).collect(),
            spec,
            c_s,
            c_f,
        })
    }

    pub fn node_count(&self) -> usize {
        self.spec.node_count
    }

    pub fn output_dims(&self) -> Vec<usize> {
        self.c_s.iter().map(|c| c.nrows()).collect()
    }

    pub fn total_outputs(&self) -> usize {
        self.output_dims().iter().sum()
    }

    pub fn is_controller(&self, i: usize) -> bool {
        self.spec.controller_nodes.contains(&i)
    }

    /// `m_ij`, zero off the edge set.
    pub fn weight(&self, i: usize, j: usize) -> f64 {
        self.spec
            .edges
            .iter()
            .find(|e| e.from == i && e.to == j)
            .map_or(0.0, |e| e.weight)
    }

    pub fn neighbors(&self, i: usize) -> Result<Vec<usize>, NetworkError> {
        if i >= self.node_count() {
            return Err(NetworkError::UnknownNode(i));
        }
        let mut out: Vec<usize> = self
            .spec
            .edges
            .iter()
            .filter(|e| e.from == i)
            .map(|e| e.to)
            .collect();
        out.sort_unstable();
        Ok(out)
    }

    pub fn sparsity_pattern(&self) -> SparsityPattern {
        let p = self.node_count();
        let mut g_mask = vec![vec![false; p]; p];
        for e in &self.spec.edges {
            g_mask[e.from][e.to] = true;
        }
        SparsityPattern {
            k_mask: (0..p).map(|i| self.is_controller(i)).collect(),
            g_mask,
            l_dims: self.output_dims(),
        }
    }

    /// Stacked slow output matrix `[C_s,1; …; C_s,p]`.
    pub fn c_s_stacked(&self) -> Mat {
        let refs: Vec<&Mat> = self.c_s.iter().collect();
        crate::linalg::vstack(&refs)
    }

    /// `y_i = C_s,i x_s + C_f,i x_f + v_i` and `v̄_i = y_i − C_s,i x_s`.
    pub fn measure(
        &self,
        x_s: &Vector,
        x_f: &Vector,
        v: &[Vector],
    ) -> Result<(Vec<Vector>, Vec<Vector>), NetworkError> {
        let p = self.node_count();
        if v.len() != p {
            return Err(NetworkError::Dimension(format!("{} noise vectors for {p} nodes", v.len())));
        }
        let mut ys = Vec::with_capacity(p);
        let mut vbars = Vec::with_capacity(p);
        for i in 0..p {
            let cs = &self.c_s[i];
            let cf = &self.c_f[i];
            if x_s.len() != cs.ncols() || x_f.len() != cf.ncols() || v[i].len() != cs.nrows() {
                return Err(NetworkError::Dimension(format!("node {i}")));
            }
            let slow = cs * x_s;
            let y = &slow + cf * x_f + &v[i];
            vbars.push(&y - &slow);
            ys.push(y);
        }
        Ok((ys, vbars))
    }

    /// Network reduced to `node` alone: no edges, the node is the only
    /// controller, and it keeps its original label for noise lookup.
    pub fn single_observer(&self, node: usize) -> Result<Self, NetworkError> {
        if node >= self.node_count() {
            return Err(NetworkError::UnknownNode(node));
        }
        Ok(Self {
            spec: NetworkSpec {
                node_count: 1,
                edges: Vec::new(),
                sensor_locations: vec![self.spec.sensor_locations[node].clone()],
                sensor_gain: self.spec.sensor_gain,
                controller_nodes: vec![0],
            },
            labels: vec![self.labels[node]],
            c_s: vec![self.c_s[node].clone()],
            c_f: vec![self.c_f[node].clone()],
        })
    }
}

/// `G_ij = Ḡ_ij / m_ij` for every consensus block present in `gains`.
pub fn recover_consensus_gains(
    gains: &GainSet,
    net: &SensorNetwork,
) -> Result<BTreeMap<(usize, usize), Mat>, NetworkError> {
    gains
        .g_bar
        .keys()
        .map(|&(i, j)| recover_consensus_gain(gains, net, i, j).map(|g| ((i, j), g)))
        .collect()
}

/// Single-block form of [`recover_consensus_gains`]; errors on non-edges.
pub fn recover_consensus_gain(
    gains: &GainSet,
    net: &SensorNetwork,
    i: usize,
    j: usize,
) -> Result<Mat, NetworkError> {
    let m = net.weight(i, j);
    if m == 0.0 {
        return Err(NetworkError::NotAnEdge(i, j));
    }
    let n = gains.n;
    Ok(gains
        .g_bar
        .get(&(i, j))
        .cloned()
        .unwrap_or_else(|| Mat::zeros(n, n))
        / m)
}

/// The sensor graph of the worked example (0-based).
pub fn kse_example_network_spec() -> NetworkSpec {
    use std::f64::consts::PI;
    let edge = |from, to| Edge { from, to, weight: 1.0 };
    NetworkSpec {
        node_count: 4,
        edges: vec![edge(0, 1), edge(0, 3), edge(1, 0), edge(2, 0), edge(3, 2)],
        sensor_locations: vec![
            vec![-0.6 * PI],
            vec![-0.3 * PI],
            vec![0.2 * PI],
            vec![0.5 * PI],
        ],
        sensor_gain: 1.0,
        controller_nodes: vec![0],
    }
}
