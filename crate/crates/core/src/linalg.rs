//! Small dense linear-algebra helpers on top of nalgebra.

use nalgebra::DMatrix;

/// Relative threshold for numerical rank: singular values above
/// `tol * sigma_max` count.
pub const DEFAULT_RANK_TOL: f64 = 1e-8;

/// Singular values in non-increasing order.
pub fn singular_values(m: &DMatrix<f64>) -> Vec<f64> {
    if m.is_empty() {
        return Vec::new();
    }
    let mut sv: Vec<f64> = m.singular_values().iter().copied().collect();
    sv.sort_by(|a, b| b.total_cmp(a));
    sv
}

pub fn rank_of_singular_values(sv: &[f64], rel_tol: f64) -> usize {
    match sv.first() {
        Some(&smax) if smax > 0.0 => sv.iter().filter(|&&s| s > rel_tol * smax).count(),
        _ => 0,
    }
}

pub fn numerical_rank(m: &DMatrix<f64>, rel_tol: f64) -> usize {
    rank_of_singular_values(&singular_values(m), rel_tol)
}

/// Solves `H X = R` for square `H` through an SVD. Returns the numerical rank
/// as the error when `H` is rank deficient.
pub fn solve_full_rank(
    h: &DMatrix<f64>,
    rhs: &DMatrix<f64>,
    rel_tol: f64,
) -> Result<DMatrix<f64>, usize> {
    let svd = h.clone().svd(true, true);
    let sv: Vec<f64> = svd.singular_values.iter().copied().collect();
    let smax = sv.iter().copied().fold(0.0, f64::max);
    let rank = if smax > 0.0 {
        sv.iter().filter(|&&s| s > rel_tol * smax).count()
    } else {
        0
    };
    if rank < h.ncols() {
        return Err(rank);
    }
    svd.solve(rhs, 0.0).map_err(|_| rank)
}

/// Moore-Penrose pseudo-inverse with a relative cutoff.
pub fn pinv(m: &DMatrix<f64>, rel_tol: f64) -> DMatrix<f64> {
    let svd = m.clone().svd(true, true);
    let smax = svd.singular_values.iter().copied().fold(0.0, f64::max);
    svd.pseudo_inverse(rel_tol * smax.max(f64::MIN_POSITIVE))
        .expect("both singular vector sets were computed")
}

pub fn kron(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    a.kronecker(b)
}

pub fn spectral_radius(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.complex_eigenvalues()
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max)
}

/// Largest absolute entry.
pub fn max_norm(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        0.0
    } else {
        m.amax()
    }
}

pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

pub fn is_symmetric(m: &DMatrix<f64>, tol: f64) -> bool {
    m.is_square() && max_norm(&(m - m.transpose())) <= tol * (1.0 + max_norm(m))
}

/// Symmetric positive definite, tested through a Cholesky factorization.
pub fn is_spd(m: &DMatrix<f64>) -> bool {
    is_symmetric(m, 1e-9) && m.clone().cholesky().is_some()
}

/// Horizontal concatenation of matrices with equal row counts.
pub fn hstack(blocks: &[&DMatrix<f64>]) -> DMatrix<f64> {
    let rows = blocks.first().map_or(0, |b| b.nrows());
    let cols: usize = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = DMatrix::zeros(rows, cols);
    let mut at = 0;
    for b in blocks {
        out.view_mut((0, at), (rows, b.ncols())).copy_from(*b);
        at += b.ncols();
    }
    out
}

/// Vertical concatenation of matrices with equal column counts.
pub fn vstack(blocks: &[&DMatrix<f64>]) -> DMatrix<f64> {
    let cols = blocks.first().map_or(0, |b| b.ncols());
    let rows: usize = blocks.iter().map(|b| b.nrows()).sum();
    let mut out = DMatrix::zeros(rows, cols);
    let mut at = 0;
    for b in blocks {
        out.view_mut((at, 0), (b.nrows(), cols)).copy_from(*b);
        at += b.nrows();
    }
    out
}

/// Converts row-major nested vectors into a matrix; `None` on ragged input.
pub fn from_rows(rows: &[Vec<f64>]) -> Option<DMatrix<f64>> {
    let ncols = rows.first().map_or(0, |r| r.len());
    if rows.iter().any(|r| r.len() != ncols) {
        return None;
    }
    Some(DMatrix::from_fn(rows.len(), ncols, |i, j| rows[i][j]))
}

pub fn to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rank_of_outer_product() {
        let v = DMatrix::from_column_slice(3, 1, &[1.0, 2.0, 3.0]);
        assert_eq!(numerical_rank(&(&v * v.transpose()), DEFAULT_RANK_TOL), 1);
        assert_eq!(numerical_rank(&DMatrix::zeros(3, 3), DEFAULT_RANK_TOL), 0);
        assert_eq!(numerical_rank(&DMatrix::identity(4, 4), DEFAULT_RANK_TOL), 4);
    }

    #[test]
    fn solve_refuses_singular() {
        let h = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 4.0]);
        assert_eq!(solve_full_rank(&h, &DMatrix::identity(2, 2), 1e-8), Err(1));
        let h = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 3.0]);
        let x = solve_full_rank(&h, &DMatrix::identity(2, 2), 1e-8).unwrap();
        assert!((&h * x - DMatrix::identity(2, 2)).amax() < 1e-14);
    }

    #[test]
    fn spectral_radius_of_rotation() {
        let r = DMatrix::from_row_slice(2, 2, &[0.0, -0.5, 0.5, 0.0]);
        assert!((spectral_radius(&r) - 0.5).abs() < 1e-14);
    }

    #[test]
    fn stacking() {
        let a = DMatrix::from_element(2, 1, 1.0);
        let b = DMatrix::from_element(2, 2, 2.0);
        let h = hstack(&[&a, &b]);
        assert_eq!(h.shape(), (2, 3));
        assert_eq!(h[(1, 2)], 2.0);
        let v = vstack(&[&b, &b.transpose()]);
        assert_eq!(v.shape(), (4, 2));
        assert!(from_rows(&[vec![1.0], vec![1.0, 2.0]]).is_none());
        assert_eq!(to_rows(&h)[0], vec![1.0, 2.0, 2.0]);
    }
}
