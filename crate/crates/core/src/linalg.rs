//! Small dense helpers on top of nalgebra.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

pub type Mat = DMatrix<f64>;
pub type Vector = DVector<f64>;

/// Block-diagonal concatenation.
pub fn block_diag(blocks: &[Mat]) -> Mat {
    let rows = blocks.iter().map(|b| b.nrows()).sum();
    let cols = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = Mat::zeros(rows, cols);
    let (mut r, mut c) = (0, 0);
    for b in blocks {
        out.view_mut((r, c), (b.nrows(), b.ncols())).copy_from(b);
        r += b.nrows();
        c += b.ncols();
    }
    out
}

/// Vertical stack of equally wide blocks.
pub fn vstack(blocks: &[&Mat]) -> Mat {
    let cols = blocks.first().map_or(0, |b| b.ncols());
    let rows = blocks.iter().map(|b| b.nrows()).sum();
    let mut out = Mat::zeros(rows, cols);
    let mut r = 0;
    for b in blocks {
        assert_eq!(b.ncols(), cols, "vstack width mismatch");
        out.view_mut((r, 0), (b.nrows(), cols)).copy_from(*b);
        r += b.nrows();
    }
    out
}

/// Horizontal stack of equally tall blocks.
pub fn hstack(blocks: &[&Mat]) -> Mat {
    let rows = blocks.first().map_or(0, |b| b.nrows());
    let cols = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = Mat::zeros(rows, cols);
    let mut c = 0;
    for b in blocks {
        assert_eq!(b.nrows(), rows, "hstack height mismatch");
        out.view_mut((0, c), (rows, b.ncols())).copy_from(*b);
        c += b.ncols();
    }
    out
}

/// Writes `block` into `target` with its top-left corner at `(row, col)`.
pub fn put(target: &mut Mat, row: usize, col: usize, block: &Mat) {
    target
        .view_mut((row, col), (block.nrows(), block.ncols()))
        .copy_from(block);
}

/// Adds `block` into `target` at `(row, col)`.
pub fn add_at(target: &mut Mat, row: usize, col: usize, block: &Mat) {
    let mut view = target.view_mut((row, col), (block.nrows(), block.ncols()));
    view += block;
}

/// `I_k ⊗ m`.
pub fn kron_eye(k: usize, m: &Mat) -> Mat {
    Mat::identity(k, k).kronecker(m)
}

/// `1_k ⊗ m` (k copies of `m` stacked vertically).
pub fn kron_ones(k: usize, m: &Mat) -> Mat {
    Mat::from_element(k, 1, 1.0).kronecker(m)
}

/// Largest absolute entry of `m - mᵀ`.
pub fn asymmetry(m: &Mat) -> f64 {
    let mut worst: f64 = 0.0;
    for i in 0..m.nrows() {
        for j in (i + 1)..m.ncols() {
            worst = worst.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    worst
}

pub fn symmetrize(m: &Mat) -> Mat {
    (m + m.transpose()) * 0.5
}

/// `m + mᵀ`, the `[M + *]` shorthand.
pub fn plus_transpose(m: &Mat) -> Mat {
    m + m.transpose()
}

/// Eigenvalues of the symmetric part of `m`, ascending.
pub fn sym_eigenvalues(m: &Mat) -> Vec<f64> {
    if m.nrows() == 0 {
        return Vec::new();
    }
    let eig = SymmetricEigen::new(symmetrize(m));
    let mut vals: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    vals.sort_by(|a, b| a.total_cmp(b));
    vals
}

pub fn lambda_max(m: &Mat) -> f64 {
    sym_eigenvalues(m).last().copied().unwrap_or(f64::NEG_INFINITY)
}

pub fn lambda_min(m: &Mat) -> f64 {
    sym_eigenvalues(m).first().copied().unwrap_or(f64::INFINITY)
}

pub fn max_abs(m: &Mat) -> f64 {
    m.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()))
}

/// Dense matrix from nested rows; panics on ragged input.
pub fn from_rows(rows: &[Vec<f64>]) -> Mat {
    let nrows = rows.len();
    let ncols = rows.first().map_or(0, |r| r.len());
    Mat::from_fn(nrows, ncols, |i, j| {
        assert_eq!(rows[i].len(), ncols, "ragged matrix rows");
        rows[i][j]
    })
}

pub fn to_rows(m: &Mat) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kron_helpers() {
        let m = from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]);
        let k = kron_eye(2, &m);
        assert_eq!(k.nrows(), 4);
        assert_eq!(k[(2, 3)], 2.0);
        assert_eq!(k[(0, 2)], 0.0);
        let o = kron_ones(3, &m);
        assert_eq!(o.shape(), (6, 2));
        assert_eq!(o[(5, 1)], 4.0);
    }

    #[test]
    fn block_diag_layout() {
        let a = Mat::from_element(1, 2, 1.0);
        let b = Mat::from_element(2, 1, 2.0);
        let d = block_diag(&[a, b]);
        assert_eq!(d.shape(), (3, 3));
        assert_eq!(d[(0, 1)], 1.0);
        assert_eq!(d[(2, 2)], 2.0);
        assert_eq!(d[(0, 2)], 0.0);
    }

    #[test]
    fn eigen_extremes() {
        let m = Mat::from_diagonal(&Vector::from_vec(vec![3.0, -1.0, 2.0]));
        assert_eq!(lambda_max(&m), 3.0);
        assert_eq!(lambda_min(&m), -1.0);
    }
}
