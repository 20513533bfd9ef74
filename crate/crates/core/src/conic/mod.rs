//! Real-valued cone-program IR.
//!
//! A [`ConicProgram`] holds named variable blocks, a linear objective and a
//! list of constraint blocks. Every constraint block is a list of affine
//! expressions ("rows") that must lie in its cone:
//!
//! * `Zero`: every row equals zero;
//! * `Nonneg`: every row is non-negative;
//! * `Soc`: `rows[0] >= ‖rows[1..]‖₂`;
//! * `Psd(d)`: the rows are the upper triangle (column-major, `i <= j`) of a
//!   symmetric `d x d` matrix that must be positive semidefinite. Entries
//!   are plain matrix entries; any solver-specific scaling happens in
//!   [`solve`].
//!
//! Complex quantities are handled by [`complex`], robust constraints by
//! [`robust`], and the text dump by [`dump`].

pub mod complex;
pub mod dump;
pub mod robust;
mod solve;

pub use complex::{realify_affine, realify_hermitian, CAff, CMatVar, ComplexAffine, HermitianExpr};
pub use robust::{build_power_soc, build_s_lemma_lmi, build_soc_own_channel, LmiForm};
pub use solve::{solve, verify, SolveReport, SolveStatus, Tolerances};

use std::collections::BTreeMap;

/// Index of one real scalar variable.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Var(pub usize);

/// Affine expression `constant + Σ coef·x[var]`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct AffExpr {
    pub terms: Vec<(usize, f64)>,
    pub constant: f64,
}

impl AffExpr {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn constant(c: f64) -> Self {
        Self { terms: Vec::new(), constant: c }
    }

    pub fn var(v: Var) -> Self {
        Self { terms: vec![(v.0, 1.0)], constant: 0.0 }
    }

    pub fn term(v: Var, coef: f64) -> Self {
        Self { terms: vec![(v.0, coef)], constant: 0.0 }
    }

    pub fn add_term(&mut self, v: Var, coef: f64) {
        if coef != 0.0 {
            self.terms.push((v.0, coef));
        }
    }

    pub fn add_expr(&mut self, other: &AffExpr, scale: f64) {
        if scale == 0.0 {
            return;
        }
        self.constant += scale * other.constant;
        self.terms.extend(other.terms.iter().map(|&(j, c)| (j, c * scale)));
    }

    pub fn plus(mut self, other: &AffExpr) -> Self {
        self.add_expr(other, 1.0);
        self
    }

    pub fn minus(mut self, other: &AffExpr) -> Self {
        self.add_expr(other, -1.0);
        self
    }

    pub fn scaled(&self, s: f64) -> Self {
        let mut out = AffExpr::zero();
        out.add_expr(self, s);
        out
    }

    pub fn plus_const(mut self, c: f64) -> Self {
        self.constant += c;
        self
    }

    /// Merges duplicate variables and drops zero coefficients.
    pub fn compact(&self) -> Self {
        let mut map: BTreeMap<usize, f64> = BTreeMap::new();
        for &(j, c) in &self.terms {
            *map.entry(j).or_insert(0.0) += c;
        }
        Self { terms: map.into_iter().filter(|&(_, c)| c != 0.0).collect(), constant: self.constant }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.constant + self.terms.iter().map(|&(j, c)| c * x[j]).sum::<f64>()
    }

    pub fn is_constant(&self) -> bool {
        self.terms.iter().all(|&(_, c)| c == 0.0)
    }
}

impl From<Var> for AffExpr {
    fn from(v: Var) -> Self {
        AffExpr::var(v)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Cone {
    Zero,
    Nonneg,
    Soc,
    Psd(usize),
}

impl Cone {
    pub fn name(&self) -> &'static str {
        match self {
            Cone::Zero => "zero",
            Cone::Nonneg => "nonneg",
            Cone::Soc => "soc",
            Cone::Psd(_) => "psd",
        }
    }
}

/// Number of upper-triangle entries of a `d x d` matrix.
pub fn triangle_len(d: usize) -> usize {
    d * (d + 1) / 2
}

#[derive(Debug, Clone, PartialEq)]
pub struct Constraint {
    pub cone: Cone,
    pub rows: Vec<AffExpr>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VarBlock {
    pub name: String,
    pub offset: usize,
    pub len: usize,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConicProgram {
    blocks: Vec<VarBlock>,
    nvars: usize,
    objective: AffExpr,
    constraints: Vec<Constraint>,
}

impl ConicProgram {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn num_vars(&self) -> usize {
        self.nvars
    }

    pub fn blocks(&self) -> &[VarBlock] {
        &self.blocks
    }

    pub fn constraints(&self) -> &[Constraint] {
        &self.constraints
    }

    pub fn objective(&self) -> &AffExpr {
        &self.objective
    }

    pub fn num_rows(&self) -> usize {
        self.constraints.iter().map(|c| c.rows.len()).sum()
    }

    /// Declares a block of `len` real variables.
    pub fn vector(&mut self, name: &str, len: usize) -> Vec<Var> {
        let offset = self.nvars;
        self.blocks.push(VarBlock { name: name.to_string(), offset, len });
        self.nvars += len;
        (offset..offset + len).map(Var).collect()
    }

    pub fn scalar(&mut self, name: &str) -> Var {
        self.vector(name, 1)[0]
    }

    pub fn block(&self, name: &str) -> Option<&VarBlock> {
        self.blocks.iter().find(|b| b.name == name)
    }

    /// Minimizes the given expression (its constant is carried into the reported objective).
    pub fn minimize(&mut self, objective: AffExpr) {
        self.objective = objective.compact();
    }

    pub fn add(&mut self, cone: Cone, rows: Vec<AffExpr>) {
        if let Cone::Psd(d) = cone {
            assert_eq!(rows.len(), triangle_len(d), "PSD block needs d(d+1)/2 rows");
        }
        if rows.is_empty() {
            return;
        }
        let rows = rows.iter().map(AffExpr::compact).collect();
        self.constraints.push(Constraint { cone, rows });
    }

    pub fn add_eq(&mut self, lhs: AffExpr, rhs: AffExpr) {
        self.add(Cone::Zero, vec![lhs.minus(&rhs)]);
    }

    /// `lhs <= rhs`.
    pub fn add_le(&mut self, lhs: AffExpr, rhs: AffExpr) {
        self.add(Cone::Nonneg, vec![rhs.minus(&lhs)]);
    }

    /// `‖rest‖₂ <= t`.
    pub fn add_soc(&mut self, t: AffExpr, rest: Vec<AffExpr>) {
        let mut rows = Vec::with_capacity(rest.len() + 1);
        rows.push(t);
        rows.extend(rest);
        self.add(Cone::Soc, rows);
    }

    /// Symmetric matrix of affine expressions `⪰ 0`; only the upper triangle is read.
    pub fn add_psd(&mut self, matrix: &[Vec<AffExpr>]) {
        let d = matrix.len();
        let mut rows = Vec::with_capacity(triangle_len(d));
        for j in 0..d {
            for i in 0..=j {
                rows.push(matrix[i][j].clone());
            }
        }
        self.add(Cone::Psd(d), rows);
    }

    /// Checks that every constraint only references declared variables and that
    /// all coefficients are finite.
    pub fn check(&self) -> crate::Result<()> {
        let bad = |e: &AffExpr| !e.constant.is_finite() || e.terms.iter().any(|&(j, c)| j >= self.nvars || !c.is_finite());
        if bad(&self.objective) {
            return Err(crate::Error::InvalidProgram("objective references an undeclared variable or is non-finite".into()));
        }
        for (i, c) in self.constraints.iter().enumerate() {
            if let Cone::Psd(d) = c.cone {
                if c.rows.len() != triangle_len(d) {
                    return Err(crate::Error::InvalidProgram(format!("constraint {i}: PSD size mismatch")));
                }
            }
            if c.rows.iter().any(bad) {
                return Err(crate::Error::InvalidProgram(format!("constraint {i}: undeclared variable or non-finite coefficient")));
            }
        }
        Ok(())
    }

    pub(crate) fn from_parts(blocks: Vec<VarBlock>, nvars: usize, objective: AffExpr, constraints: Vec<Constraint>) -> Self {
        Self { blocks, nvars, objective, constraints }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn affine_compaction_merges_duplicates() {
        let mut e = AffExpr::constant(1.0);
        e.add_term(Var(2), 1.5);
        e.add_term(Var(0), 1.0);
        e.add_term(Var(2), -1.5);
        let c = e.compact();
        assert_eq!(c.terms, vec![(0, 1.0)]);
        assert_eq!(c.eval(&[2.0, 0.0, 9.0]), 3.0);
    }

    #[test]
    fn undeclared_variable_is_rejected() {
        let mut p = ConicProgram::new();
        let x = p.scalar("x");
        p.add_le(AffExpr::var(x), AffExpr::var(Var(5)));
        assert!(p.check().is_err());
    }
}
