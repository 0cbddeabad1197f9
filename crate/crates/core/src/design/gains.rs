use std::collections::BTreeMap;

use crate::linalg::{block_diag, hstack, Mat};
use crate::network::{SensorNetwork, SparsityPattern};

use super::DesignError;

/// Controller, observer and consensus gains.
///
/// `k[i]` is `q_u × n` and must vanish off the controller set, `l[i]` is
/// `n × q_y,i`, and `g_bar[(i, j)] = m_ij G_ij` is present only on edges.
#[derive(Debug, Clone, PartialEq)]
pub struct GainSet {
    pub n: usize,
    pub q_u: usize,
    pub k: Vec<Mat>,
    pub l: Vec<Mat>,
    pub g_bar: BTreeMap<(usize, usize), Mat>,
}

impl GainSet {
    /// All-zero gains shaped for `net`, with a zero block on every edge.
    pub fn zeros(net: &SensorNetwork, n: usize, q_u: usize) -> Self {
        let p = net.node_count();
        Self {
            n,
            q_u,
            k: vec![Mat::zeros(q_u, n); p],
            l: net.output_dims().into_iter().map(|q| Mat::zeros(n, q)).collect(),
            g_bar: net
                .spec
                .edges
                .iter()
                .map(|e| ((e.from, e.to), Mat::zeros(n, n)))
                .collect(),
        }
    }

    pub fn node_count(&self) -> usize {
        self.k.len()
    }

    /// `K̄ = [K_1 … K_p]`.
    pub fn k_bar(&self) -> Mat {
        let refs: Vec<&Mat> = self.k.iter().collect();
        hstack(&refs)
    }

    pub fn k_sum(&self) -> Mat {
        self.k
            .iter()
            .fold(Mat::zeros(self.q_u, self.n), |acc, k| acc + k)
    }

    /// `L̄ = blockdiag(L_i)`.
    pub fn l_bar(&self) -> Mat {
        block_diag(&self.l)
    }

    /// Laplacian-like consensus matrix: diagonal block `Σ_j Ḡ_ij`,
    /// off-diagonal block `−Ḡ_ij`.
    pub fn g_matrix(&self) -> Mat {
        let n = self.n;
        let p = self.node_count();
        let mut g = Mat::zeros(n * p, n * p);
        for (&(i, j), blk) in &self.g_bar {
            let mut diag = g.view_mut((i * n, i * n), (n, n));
            diag += blk;
            let mut off = g.view_mut((i * n, j * n), (n, n));
            off -= blk;
        }
        g
    }

    /// Exact membership in the admissible set: zero `K_i` off the controller
    /// set, consensus blocks only on edges, and consistent block shapes.
    pub fn check_pattern(&self, pattern: &SparsityPattern) -> Result<(), DesignError> {
        let p = pattern.k_mask.len();
        if self.k.len() != p || self.l.len() != p {
            return Err(DesignError::PatternViolation(format!(
                "gain set has {} K and {} L blocks for {p} nodes",
                self.k.len(),
                self.l.len()
            )));
        }
        for (i, k) in self.k.iter().enumerate() {
            if k.shape() != (self.q_u, self.n) {
                return Err(DesignError::PatternViolation(format!("K_{} has shape {:?}", i + 1, k.shape())));
            }
            if !pattern.k_mask[i] && k.iter().any(|v| *v != 0.0) {
                return Err(DesignError::PatternViolation(format!(
                    "K_{} is nonzero but node {} is not a controller node",
                    i + 1,
                    i + 1
                )));
            }
        }
        for (i, l) in self.l.iter().enumerate() {
            if l.shape() != (self.n, pattern.l_dims[i]) {
                return Err(DesignError::PatternViolation(format!("L_{} has shape {:?}", i + 1, l.shape())));
            }
        }
        for (&(i, j), g) in &self.g_bar {
            if i >= p || j >= p {
                return Err(DesignError::PatternViolation(format!("consensus block ({}, {}) names an unknown node", i + 1, j + 1)));
            }
            if g.shape() != (self.n, self.n) {
                return Err(DesignError::PatternViolation(format!("G_{}{} has shape {:?}", i + 1, j + 1, g.shape())));
            }
            if !pattern.g_mask[i][j] && g.iter().any(|v| *v != 0.0) {
                return Err(DesignError::PatternViolation(format!(
                    "consensus block ({}, {}) is nonzero off the edge set",
                    i + 1,
                    j + 1
                )));
            }
        }
        Ok(())
    }
}

/// Position of every free gain entry inside a flat decision vector. Entries
/// outside the sparsity pattern have no slot, so they stay exactly zero.
#[derive(Debug, Clone)]
pub struct GainLayout {
    pub n: usize,
    pub q_u: usize,
    pub k_nodes: Vec<usize>,
    pub l_dims: Vec<usize>,
    pub edges: Vec<(usize, usize)>,
}

impl GainLayout {
    pub fn new(pattern: &SparsityPattern, n: usize, q_u: usize) -> Self {
        Self {
            n,
            q_u,
            k_nodes: pattern
                .k_mask
                .iter()
                .enumerate()
                .filter(|(_, b)| **b)
                .map(|(i, _)| i)
                .collect(),
            l_dims: pattern.l_dims.clone(),
            edges: pattern.allowed_edges(),
        }
    }

    pub fn len(&self) -> usize {
        self.k_nodes.len() * self.q_u * self.n
            + self.l_dims.iter().map(|q| q * self.n).sum::<usize>()
            + self.edges.len() * self.n * self.n
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn names(&self) -> Vec<String> {
        let mut out = Vec::with_capacity(self.len());
        for &i in &self.k_nodes {
            for r in 0..self.q_u {
                for c in 0..self.n {
                    out.push(format!("K{}[{},{}]", i + 1, r + 1, c + 1));
                }
            }
        }
        for (i, &q) in self.l_dims.iter().enumerate() {
            for r in 0..self.n {
                for c in 0..q {
                    out.push(format!("L{}[{},{}]", i + 1, r + 1, c + 1));
                }
            }
        }
        for &(i, j) in &self.edges {
            for r in 0..self.n {
                for c in 0..self.n {
                    out.push(format!("Gbar{}_{}[{},{}]", i + 1, j + 1, r + 1, c + 1));
                }
            }
        }
        out
    }

    pub fn unpack(&self, theta: &[f64]) -> GainSet {
        let p = self.l_dims.len();
        let n = self.n;
        let mut pos = 0;
        let mut take = |rows: usize, cols: usize| {
            let m = Mat::from_fn(rows, cols, |r, c| theta[pos + r * cols + c]);
            pos += rows * cols;
            m
        };
        let mut k = vec![Mat::zeros(self.q_u, n); p];
        for &i in &self.k_nodes {
            k[i] = take(self.q_u, n);
        }
        let l = self.l_dims.iter().map(|&q| take(n, q)).collect();
        let g_bar = self.edges.iter().map(|&e| (e, take(n, n))).collect();
        GainSet {
            n,
            q_u: self.q_u,
            k,
            l,
            g_bar,
        }
    }

    pub fn pack(&self, gains: &GainSet) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.len());
        let mut put = |m: &Mat| {
            for r in 0..m.nrows() {
                for c in 0..m.ncols() {
                    out.push(m[(r, c)]);
                }
            }
        };
        for &i in &self.k_nodes {
            put(&gains.k[i]);
        }
        for l in &gains.l {
            put(l);
        }
        for e in &self.edges {
            match gains.g_bar.get(e) {
                Some(g) => put(g),
                None => put(&Mat::zeros(self.n, self.n)),
            }
        }
        out
    }
}

/// Lower-triangle parameterization of a symmetric `d × d` matrix.
pub fn sym_len(d: usize) -> usize {
    d * (d + 1) / 2
}

pub fn sym_from_lower(theta: &[f64], d: usize) -> Mat {
    let mut m = Mat::zeros(d, d);
    let mut pos = 0;
    for c in 0..d {
        for r in c..d {
            m[(r, c)] = theta[pos];
            m[(c, r)] = theta[pos];
            pos += 1;
        }
    }
    m
}

pub fn lower_of(m: &Mat) -> Vec<f64> {
    let d = m.nrows();
    let mut out = Vec::with_capacity(sym_len(d));
    for c in 0..d {
        for r in c..d {
            out.push(m[(r, c)]);
        }
    }
    out
}
