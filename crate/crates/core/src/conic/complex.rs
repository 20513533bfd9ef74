//! Complex affine expressions and their real embedding.
//!
//! A complex scalar is carried as a pair of real affine expressions; a
//! Hermitian matrix `H` of such scalars becomes the real symmetric matrix
//! `[[Re H, -Im H], [Im H, Re H]]`, which is PSD iff `H` is.

use nalgebra::{DMatrix, DVector};

use super::{AffExpr, ConicProgram, Var};
use crate::error::{Error, Result};
use crate::linalg::{hermitian_defect, real_embedding, CMatrix, CVector, C64};

/// Complex affine scalar `re + i·im`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CAff {
    pub re: AffExpr,
    pub im: AffExpr,
}

impl CAff {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn constant(z: C64) -> Self {
        Self { re: AffExpr::constant(z.re), im: AffExpr::constant(z.im) }
    }

    pub fn real(e: AffExpr) -> Self {
        Self { re: e, im: AffExpr::zero() }
    }

    pub fn conj(&self) -> Self {
        Self { re: self.re.clone(), im: self.im.scaled(-1.0) }
    }

    /// `z · self` for a complex constant `z`.
    pub fn times(&self, z: C64) -> Self {
        let mut re = self.re.scaled(z.re);
        re.add_expr(&self.im, -z.im);
        let mut im = self.im.scaled(z.re);
        im.add_expr(&self.re, z.im);
        Self { re, im }
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self { re: self.re.scaled(s), im: self.im.scaled(s) }
    }

    pub fn add(&mut self, other: &CAff) {
        self.re.add_expr(&other.re, 1.0);
        self.im.add_expr(&other.im, 1.0);
    }

    pub fn minus(&self, other: &CAff) -> Self {
        let mut out = self.clone();
        out.re.add_expr(&other.re, -1.0);
        out.im.add_expr(&other.im, -1.0);
        out
    }

    pub fn eval(&self, x: &[f64]) -> C64 {
        C64::new(self.re.eval(x), self.im.eval(x))
    }
}

/// A complex `rows x cols` matrix variable stored as separate real and imaginary blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct CMatVar {
    pub rows: usize,
    pub cols: usize,
    re: Vec<Var>,
    im: Vec<Var>,
}

impl CMatVar {
    pub fn new(prog: &mut ConicProgram, name: &str, rows: usize, cols: usize) -> Self {
        let re = prog.vector(&format!("{name}.re"), rows * cols);
        let im = prog.vector(&format!("{name}.im"), rows * cols);
        Self { rows, cols, re, im }
    }

    #[inline]
    fn idx(&self, i: usize, j: usize) -> usize {
        j * self.rows + i
    }

    pub fn entry(&self, i: usize, j: usize) -> CAff {
        let t = self.idx(i, j);
        CAff { re: AffExpr::var(self.re[t]), im: AffExpr::var(self.im[t]) }
    }

    pub fn column(&self, j: usize) -> Vec<CAff> {
        (0..self.rows).map(|i| self.entry(i, j)).collect()
    }

    /// All matrix entries as a column-major list.
    pub fn entries(&self) -> Vec<CAff> {
        (0..self.cols).flat_map(|j| (0..self.rows).map(move |i| (i, j))).map(|(i, j)| self.entry(i, j)).collect()
    }

    /// Real and imaginary parts of every entry, for norm constraints.
    pub fn real_parts(&self) -> Vec<AffExpr> {
        self.re.iter().chain(self.im.iter()).map(|&v| AffExpr::var(v)).collect()
    }

    /// Columns `cols` of this matrix, as an `N x J` matrix of expressions.
    pub fn select_columns(&self, cols: &[usize]) -> Vec<Vec<CAff>> {
        (0..self.rows).map(|i| cols.iter().map(|&j| self.entry(i, j)).collect()).collect()
    }

    pub fn as_expr(&self) -> Vec<Vec<CAff>> {
        let all: Vec<usize> = (0..self.cols).collect();
        self.select_columns(&all)
    }

    pub fn value(&self, x: &[f64]) -> CMatrix {
        CMatrix::from_fn(self.rows, self.cols, |i, j| {
            let t = self.idx(i, j);
            C64::new(x[self.re[t].0], x[self.im[t].0])
        })
    }
}

/// `h · col` for a constant row `h` and a column of complex expressions.
pub fn row_times_exprs(h: &CVector, col: &[CAff]) -> CAff {
    let mut acc = CAff::zero();
    for (hi, e) in h.iter().zip(col) {
        acc.add(&e.times(*hi));
    }
    acc
}

/// `h · Ξ` for an `N x J` matrix of expressions, as a length-`J` row.
pub fn row_times_matrix_exprs(h: &CVector, xi: &[Vec<CAff>]) -> Vec<CAff> {
    let j = xi.first().map_or(0, |r| r.len());
    (0..j)
        .map(|c| {
            let mut acc = CAff::zero();
            for (i, hi) in h.iter().enumerate() {
                acc.add(&xi[i][c].times(*hi));
            }
            acc
        })
        .collect()
}

/// Hermitian matrix of complex affine expressions; only the upper triangle is stored
/// and the lower triangle is implied by conjugate symmetry.
#[derive(Debug, Clone, PartialEq)]
pub struct HermitianExpr {
    dim: usize,
    upper: Vec<CAff>,
}

impl HermitianExpr {
    pub fn zeros(dim: usize) -> Self {
        Self { dim, upper: vec![CAff::zero(); dim * (dim + 1) / 2] }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    fn slot(&self, i: usize, j: usize) -> usize {
        debug_assert!(i <= j && j < self.dim);
        j * (j + 1) / 2 + i
    }

    /// Sets entry `(i, j)`; `(j, i)` becomes its conjugate. Diagonal entries keep only the real part.
    pub fn set(&mut self, i: usize, j: usize, value: CAff) {
        if i <= j {
            let s = self.slot(i, j);
            self.upper[s] = if i == j { CAff::real(value.re) } else { value };
        } else {
            let s = self.slot(j, i);
            self.upper[s] = value.conj();
        }
    }

    pub fn get(&self, i: usize, j: usize) -> CAff {
        if i <= j {
            self.upper[self.slot(i, j)].clone()
        } else {
            self.upper[self.slot(j, i)].conj()
        }
    }

    /// The real symmetric `2d x 2d` embedding as a full matrix of expressions.
    pub fn realify(&self) -> Vec<Vec<AffExpr>> {
        let d = self.dim;
        let mut out = vec![vec![AffExpr::zero(); 2 * d]; 2 * d];
        for i in 0..d {
            for j in 0..d {
                let z = self.get(i, j);
                out[i][j] = z.re.clone();
                out[i + d][j + d] = z.re.clone();
                out[i][j + d] = z.im.scaled(-1.0);
                out[i + d][j] = z.im.clone();
            }
        }
        out
    }

    pub fn eval(&self, x: &[f64]) -> CMatrix {
        CMatrix::from_fn(self.dim, self.dim, |i, j| self.get(i, j).eval(x))
    }

    /// Adds `H ⪰ 0` to the program through its real embedding.
    pub fn constrain_psd(&self, prog: &mut ConicProgram) {
        prog.add_psd(&self.realify());
    }
}

/// Real embedding of a numeric Hermitian matrix; rejects non-Hermitian input.
pub fn realify_hermitian(h: &CMatrix) -> Result<DMatrix<f64>> {
    if h.nrows() != h.ncols() {
        return Err(Error::ShapeMismatch(format!("{}x{} matrix is not square", h.nrows(), h.ncols())));
    }
    let scale = 1.0 + h.iter().map(|z| z.norm()).fold(0.0, f64::max);
    let defect = hermitian_defect(h);
    if defect > 1e-12 * scale {
        return Err(Error::NotHermitian(defect));
    }
    Ok(real_embedding(h))
}

/// Complex affine map `z ↦ A z + c`.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexAffine {
    pub a: CMatrix,
    pub c: CVector,
}

impl ComplexAffine {
    pub fn eval(&self, z: &CVector) -> CVector {
        &self.a * z + &self.c
    }
}

/// Real form of a complex affine map acting on stacked `(Re z, Im z)`:
/// returns `([[Re A, -Im A], [Im A, Re A]], (Re c, Im c))`.
pub fn realify_affine(f: &ComplexAffine) -> (DMatrix<f64>, DVector<f64>) {
    let (m, n) = f.a.shape();
    let a = DMatrix::from_fn(2 * m, 2 * n, |i, j| {
        let z = f.a[(i % m, j % n)];
        match (i < m, j < n) {
            (true, true) | (false, false) => z.re,
            (true, false) => -z.im,
            (false, true) => z.im,
        }
    });
    let c = DVector::from_fn(2 * m, |i, _| if i < m { f.c[i].re } else { f.c[i - m].im });
    (a, c)
}

/// Stacks a complex vector as `(Re, Im)`.
pub fn stack(z: &CVector) -> DVector<f64> {
    let n = z.len();
    DVector::from_fn(2 * n, |i, _| if i < n { z[i].re } else { z[i - n].im })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::C64;

    #[test]
    fn identity_embeds_to_identity() {
        let r = realify_hermitian(&CMatrix::identity(2, 2)).unwrap();
        assert_eq!(r, DMatrix::identity(4, 4));
    }

    #[test]
    fn indefinite_hermitian_is_flagged() {
        let i = C64::new(0.0, 1.0);
        let h = CMatrix::from_row_slice(2, 2, &[C64::new(0.0, 0.0), i, -i, C64::new(0.0, 0.0)]);
        let r = realify_hermitian(&h).unwrap();
        let mut eig: Vec<f64> = r.symmetric_eigen().eigenvalues.iter().copied().collect();
        eig.sort_by(f64::total_cmp);
        for (got, want) in eig.iter().zip([-1.0, -1.0, 1.0, 1.0]) {
            assert!((got - want).abs() < 1e-12);
        }
    }

    #[test]
    fn non_hermitian_is_rejected() {
        let h = CMatrix::from_row_slice(2, 2, &[C64::new(1.0, 0.0), C64::new(1.0, 0.0), C64::new(0.0, 0.0), C64::new(1.0, 0.0)]);
        assert!(matches!(realify_hermitian(&h), Err(Error::NotHermitian(_))));
    }

    #[test]
    fn expression_realify_matches_numeric_embedding() {
        let mut prog = ConicProgram::new();
        let v = CMatVar::new(&mut prog, "v", 2, 1);
        let mut h = HermitianExpr::zeros(2);
        h.set(0, 0, CAff::real(AffExpr::constant(2.0)));
        h.set(0, 1, v.entry(0, 0).times(C64::new(0.5, -1.0)));
        h.set(1, 1, CAff::real(AffExpr::constant(3.0)));
        let x = [0.3, -0.7, 1.1, 0.2];
        let numeric = h.eval(&x);
        let r = h.realify();
        let want = real_embedding(&numeric);
        for i in 0..4 {
            for j in 0..4 {
                assert!((r[i][j].eval(&x) - want[(i, j)]).abs() < 1e-14);
            }
        }
    }
}
