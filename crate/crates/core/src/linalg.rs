//! Small complex linear-algebra helpers shared by the evaluators and builders.

use nalgebra::{DMatrix, DVector};
pub use num_complex::Complex64 as C64;

pub type CVector = DVector<C64>;
pub type CMatrix = DMatrix<C64>;

/// Row-vector/column-vector product `h w` without conjugation.
#[inline]
pub fn row_times(h: &CVector, w: &CVector) -> C64 {
    h.iter().zip(w.iter()).map(|(a, b)| a * b).sum()
}

/// `h A` for a channel row `h` and an `N x J` matrix `A`, returned as a length-`J` vector.
pub fn row_times_matrix(h: &CVector, a: &CMatrix) -> CVector {
    DVector::from_iterator(a.ncols(), a.column_iter().map(|c| row_times(h, &c.into_owned())))
}

pub fn norm(v: &CVector) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

pub fn norm_sqr(v: &CVector) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum()
}

pub fn frobenius_sqr(a: &CMatrix) -> f64 {
    a.iter().map(|z| z.norm_sqr()).sum()
}

/// Largest entrywise deviation from Hermitian symmetry.
pub fn hermitian_defect(a: &CMatrix) -> f64 {
    let n = a.nrows();
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in 0..n {
            worst = worst.max((a[(i, j)] - a[(j, i)].conj()).norm());
        }
    }
    worst
}

/// Eigen-decomposition of a Hermitian matrix, eigenvalues ascending.
pub fn hermitian_eigen(a: &CMatrix) -> (Vec<f64>, CMatrix) {
    let eig = nalgebra::linalg::SymmetricEigen::new(a.clone());
    let mut order: Vec<usize> = (0..a.nrows()).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let vals = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vecs = CMatrix::from_columns(&order.iter().map(|&i| eig.eigenvectors.column(i).into_owned()).collect::<Vec<_>>());
    (vals, vecs)
}

/// A factor `L` with `L L^H = W` for a Hermitian PSD `W` (negative eigenvalues clipped).
pub fn psd_factor(w: &CMatrix) -> CMatrix {
    let (vals, vecs) = hermitian_eigen(w);
    let mut l = vecs;
    for (j, v) in vals.iter().enumerate() {
        let s = v.max(0.0).sqrt();
        l.column_mut(j).scale_mut(s);
    }
    l
}

/// Real `2n x 2n` embedding `[[Re, -Im], [Im, Re]]` of a complex square matrix.
pub fn real_embedding(a: &CMatrix) -> DMatrix<f64> {
    let n = a.nrows();
    DMatrix::from_fn(2 * n, 2 * n, |i, j| {
        let z = a[(i % n, j % n)];
        match (i < n, j < n) {
            (true, true) | (false, false) => z.re,
            (true, false) => -z.im,
            (false, true) => z.im,
        }
    })
}
