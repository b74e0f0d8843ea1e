//! Small dense helpers on top of nalgebra.

use nalgebra::DMatrix;

pub type Mat = DMatrix<f64>;

/// Frobenius inner product tr(A Bᵀ), summed in row-major order.
pub fn frob_inner(a: &Mat, b: &Mat) -> f64 {
    debug_assert_eq!(a.shape(), b.shape());
    let (r, c) = a.shape();
    let mut s = 0.0;
    for i in 0..r {
        for j in 0..c {
            s += a[(i, j)] * b[(i, j)];
        }
    }
    s
}

pub fn frob_norm_sq(a: &Mat) -> f64 {
    frob_inner(a, a)
}

pub fn frob_norm(a: &Mat) -> f64 {
    frob_norm_sq(a).sqrt()
}

pub fn skew_part(m: &Mat) -> Mat {
    (m - m.transpose()) * 0.5
}

pub fn sym_part(m: &Mat) -> Mat {
    (m + m.transpose()) * 0.5
}

/// Largest absolute entry of `m`, zero for an empty matrix.
pub fn max_abs(m: &Mat) -> f64 {
    m.iter().fold(0.0_f64, |acc, x| acc.max(x.abs()))
}

pub fn is_symmetric(m: &Mat, tol: f64) -> bool {
    m.is_square() && max_abs(&(m - m.transpose())) <= tol * (1.0 + max_abs(m))
}

/// Row-major flattening.
pub fn flatten_row_major(m: &Mat) -> Vec<f64> {
    let (r, c) = m.shape();
    let mut out = Vec::with_capacity(r * c);
    for i in 0..r {
        for j in 0..c {
            out.push(m[(i, j)]);
        }
    }
    out
}

pub fn from_row_major(rows: usize, cols: usize, data: &[f64]) -> Mat {
    DMatrix::from_row_slice(rows, cols, data)
}

pub fn rows_of(m: &Mat) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
        .collect()
}

/// Singular values in decreasing order.
pub fn singular_values(m: &Mat) -> Vec<f64> {
    if m.nrows() == 0 || m.ncols() == 0 {
        return Vec::new();
    }
    let mut s: Vec<f64> = m.clone().svd(false, false).singular_values.iter().copied().collect();
    s.sort_by(|a, b| b.partial_cmp(a).unwrap_or(std::cmp::Ordering::Equal));
    s
}

/// Numerical rank with a threshold relative to the largest singular value.
pub fn numerical_rank(m: &Mat, rel_tol: f64) -> usize {
    let s = singular_values(m);
    match s.first() {
        None => 0,
        Some(&0.0) => 0,
        Some(&top) => s.iter().filter(|&&x| x > rel_tol * top).count(),
    }
}

/// Orthonormal basis (as columns) of the right nullspace of `m`.
pub fn nullspace(m: &Mat, rel_tol: f64) -> Mat {
    let n = m.ncols();
    if n == 0 {
        return Mat::zeros(0, 0);
    }
    // Pad to at least n rows so the SVD returns a full Vᵀ.
    let a = if m.nrows() < n {
        let mut a = Mat::zeros(n, n);
        a.view_mut((0, 0), (m.nrows(), n)).copy_from(m);
        a
    } else {
        m.clone()
    };
    let svd = a.svd(false, true);
    let vt = svd.v_t.expect("v_t requested");
    let sv = &svd.singular_values;
    let top = sv.iter().fold(0.0_f64, |acc, x| acc.max(*x));
    let cols: Vec<_> = (0..sv.len())
        .filter(|&i| top == 0.0 || sv[i] <= rel_tol * top)
        .map(|i| vt.row(i).transpose())
        .collect();
    if cols.is_empty() {
        Mat::zeros(n, 0)
    } else {
        Mat::from_columns(&cols)
    }
}

/// Orthonormal basis (as columns) of the column space of `m`.
pub fn column_space(m: &Mat, rel_tol: f64) -> Mat {
    let rows = m.nrows();
    if m.ncols() == 0 || rows == 0 {
        return Mat::zeros(rows, 0);
    }
    let svd = m.clone().svd(true, false);
    let u = svd.u.expect("u requested");
    let sv = &svd.singular_values;
    let top = sv.iter().fold(0.0_f64, |acc, x| acc.max(*x));
    if top == 0.0 {
        return Mat::zeros(rows, 0);
    }
    let cols: Vec<_> = (0..sv.len())
        .filter(|&i| sv[i] > rel_tol * top)
        .map(|i| u.column(i).into_owned())
        .collect();
    if cols.is_empty() {
        Mat::zeros(rows, 0)
    } else {
        Mat::from_columns(&cols)
    }
}

/// Symmetric eigenvalues in increasing order.
pub fn sym_eigenvalues(m: &Mat) -> Vec<f64> {
    let mut ev: Vec<f64> = m.clone().symmetric_eigenvalues().iter().copied().collect();
    ev.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    ev
}

/// Cayley transform (I − S/2)⁻¹(I + S/2), orthogonal for skew S.
pub fn orthogonal_from_skew(s: &Mat) -> Mat {
    let n = s.nrows();
    let id = Mat::identity(n, n);
    let a = &id - s * 0.5;
    let b = &id + s * 0.5;
    a.lu().solve(&b).expect("I - S/2 is invertible for skew S")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nullspace_of_rank_one() {
        let m = from_row_major(1, 3, &[1.0, 0.0, 0.0]);
        let n = nullspace(&m, 1e-10);
        assert_eq!(n.ncols(), 2);
        assert!((m * n).norm() < 1e-14);
    }

    #[test]
    fn cayley_is_orthogonal() {
        let s = from_row_major(3, 3, &[0.0, 1.0, -2.0, -1.0, 0.0, 0.5, 2.0, -0.5, 0.0]);
        let q = orthogonal_from_skew(&s);
        let err = (&q * q.transpose() - Mat::identity(3, 3)).norm();
        assert!(err < 1e-14);
    }

    #[test]
    fn rank_counts_independent_rows() {
        let m = from_row_major(3, 3, &[1.0, 2.0, 3.0, 2.0, 4.0, 6.0, 0.0, 1.0, 1.0]);
        assert_eq!(numerical_rank(&m, 1e-12), 2);
    }
}
