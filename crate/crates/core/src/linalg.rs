//! Dense linear-algebra helpers built on nalgebra's SVD and symmetric eigensolver.
//!
//! Rank decisions use a singular-value threshold of `1e-10 * sigma_max`.

use nalgebra::{DMatrix, DVector};

use crate::Scalar;

/// Relative singular-value threshold used for every rank decision.
pub const RANK_RTOL: f64 = 1e-10;

fn rank_cutoff<T: Scalar>(sigma: &DVector<T>) -> T {
    let smax = sigma.iter().fold(T::zero(), |m, s| m.max(*s));
    smax * T::tol(RANK_RTOL)
}

/// Numerical rank.
pub fn rank<T: Scalar>(a: &DMatrix<T>) -> usize {
    if a.is_empty() {
        return 0;
    }
    let sv = a.clone().svd(false, false).singular_values;
    let cut = rank_cutoff(&sv);
    sv.iter().filter(|s| **s > cut && **s > T::zero()).count()
}

/// Orthonormal basis (as columns) of `{x : a x = 0}`.
pub fn null_space<T: Scalar>(a: &DMatrix<T>) -> DMatrix<T> {
    let (r, c) = a.shape();
    if c == 0 {
        return DMatrix::zeros(0, 0);
    }
    if r == 0 {
        return DMatrix::identity(c, c);
    }
    // Pad to at least square so the SVD returns a full right basis.
    let padded = if r < c {
        let mut p = DMatrix::zeros(c, c);
        p.view_mut((0, 0), (r, c)).copy_from(a);
        p
    } else {
        a.clone()
    };
    let svd = padded.svd(false, true);
    let v_t = svd.v_t.expect("requested V^T");
    let cut = rank_cutoff(&svd.singular_values);
    let cols: Vec<DVector<T>> = svd
        .singular_values
        .iter()
        .enumerate()
        .filter(|(_, s)| **s <= cut || **s == T::zero())
        .map(|(i, _)| v_t.row(i).transpose())
        .collect();
    if cols.is_empty() {
        DMatrix::zeros(c, 0)
    } else {
        DMatrix::from_columns(&cols)
    }
}

/// Orthonormal basis (as rows) of `{w : w^T a = 0}`.
pub fn left_null_space<T: Scalar>(a: &DMatrix<T>) -> DMatrix<T> {
    let n = null_space(&a.transpose());
    if n.ncols() == 0 {
        DMatrix::zeros(0, a.nrows())
    } else {
        n.transpose()
    }
}

/// Orthonormal basis (as rows) of the row space of `a`.
pub fn row_space<T: Scalar>(a: &DMatrix<T>) -> DMatrix<T> {
    let (r, c) = a.shape();
    if r == 0 || c == 0 {
        return DMatrix::zeros(0, c);
    }
    let svd = a.clone().svd(false, true);
    let v_t = svd.v_t.expect("requested V^T");
    let cut = rank_cutoff(&svd.singular_values);
    let rows: Vec<_> = svd
        .singular_values
        .iter()
        .enumerate()
        .filter(|(_, s)| **s > cut && **s > T::zero())
        .map(|(i, _)| v_t.row(i).into_owned())
        .collect();
    if rows.is_empty() {
        DMatrix::zeros(0, c)
    } else {
        DMatrix::from_rows(&rows)
    }
}

/// Moore-Penrose pseudoinverse with the crate-wide rank threshold.
pub fn pinv<T: Scalar>(a: &DMatrix<T>) -> DMatrix<T> {
    let (r, c) = a.shape();
    if r == 0 || c == 0 {
        return DMatrix::zeros(c, r);
    }
    let svd = a.clone().svd(true, true);
    let cut = rank_cutoff(&svd.singular_values);
    svd.pseudo_inverse(cut).expect("SVD computed with U and V")
}

/// Least-squares solution of minimum norm for `a x = b`.
pub fn solve_min_norm<T: Scalar>(a: &DMatrix<T>, b: &DVector<T>) -> DVector<T> {
    pinv(a) * b
}

/// Largest absolute entry, zero for empty matrices.
pub fn max_abs<T: Scalar>(a: &DMatrix<T>) -> T {
    a.iter().fold(T::zero(), |m, v| m.max(v.abs()))
}

/// Largest absolute entry of a vector.
pub fn max_abs_vec<T: Scalar>(a: &DVector<T>) -> T {
    a.iter().fold(T::zero(), |m, v| m.max(v.abs()))
}

/// `max |a + a^T|`.
pub fn skew_violation<T: Scalar>(a: &DMatrix<T>) -> T {
    if !a.is_square() {
        return T::max_value().unwrap_or(T::one());
    }
    max_abs(&(a + a.transpose()))
}

/// `max |a - a^T|`.
pub fn symmetry_violation<T: Scalar>(a: &DMatrix<T>) -> T {
    if !a.is_square() {
        return T::max_value().unwrap_or(T::one());
    }
    max_abs(&(a - a.transpose()))
}

/// Eigenvalues of the symmetric part of `a`, ascending.
pub fn sym_eigenvalues<T: Scalar>(a: &DMatrix<T>) -> Vec<T> {
    if a.is_empty() {
        return Vec::new();
    }
    let half = T::lit(0.5);
    let s = (a + a.transpose()) * half;
    let mut ev: Vec<T> = s.symmetric_eigen().eigenvalues.iter().copied().collect();
    ev.sort_by(|x, y| x.partial_cmp(y).unwrap_or(std::cmp::Ordering::Equal));
    ev
}

/// Smallest eigenvalue of the symmetric part; `+inf`-like for empty input.
pub fn min_sym_eigenvalue<T: Scalar>(a: &DMatrix<T>) -> T {
    sym_eigenvalues(a)
        .first()
        .copied()
        .unwrap_or_else(|| T::max_value().unwrap_or(T::one()))
}

/// Block-diagonal assembly.
pub fn block_diag<T: Scalar>(a: &DMatrix<T>, b: &DMatrix<T>) -> DMatrix<T> {
    let (ra, ca) = a.shape();
    let (rb, cb) = b.shape();
    let mut out = DMatrix::zeros(ra + rb, ca + cb);
    out.view_mut((0, 0), (ra, ca)).copy_from(a);
    out.view_mut((ra, ca), (rb, cb)).copy_from(b);
    out
}

/// Flips the sign of each column so its first clearly nonzero entry is positive.
pub fn canonical_signs<T: Scalar>(mut basis: DMatrix<T>) -> DMatrix<T> {
    let eps = T::tol(1e-12);
    for mut col in basis.column_iter_mut() {
        if let Some(v) = col.iter().find(|v| v.abs() > eps).copied() {
            if v < T::zero() {
                col.neg_mut();
            }
        }
    }
    basis
}
