//! Builders for the robust constraints used by every design problem.

use super::complex::{row_times_exprs, row_times_matrix_exprs, CAff, CMatVar, HermitianExpr};
use super::{AffExpr, ConicProgram, Var};
use crate::linalg::{CVector, C64};

/// Which bound the S-lemma LMI certifies on `x(Δ) = (h̃+Δ)Ξ − r`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LmiForm {
    /// `‖x(Δ)‖ ≤ e` for every `‖Δ‖ ≤ ε` (`e I` in the middle block).
    Norm,
    /// `‖x(Δ)‖² ≤ s` for every `‖Δ‖ ≤ ε` (identity in the middle block).
    Squared,
}

/// Robust own-channel constraint `ε‖w‖ ≤ Re(h̃w) − √a·t` together with `Im(h̃w) = 0`.
///
/// Pinning the imaginary part fixes the free phase of the beam, which leaves
/// the worst-case quantities unchanged.
pub fn build_soc_own_channel(prog: &mut ConicProgram, h: &CVector, eps: f64, a: f64, t: &AffExpr, w: &[CAff]) {
    let hw = row_times_exprs(h, w);
    prog.add_eq(hw.im.clone(), AffExpr::zero());
    let mut lhs = hw.re;
    lhs.add_expr(t, -a.max(0.0).sqrt());
    if eps == 0.0 {
        prog.add_le(AffExpr::zero(), lhs);
        return;
    }
    let mut rest = Vec::with_capacity(2 * w.len());
    rest.extend(w.iter().map(|z| z.re.scaled(eps)));
    rest.extend(w.iter().map(|z| z.im.scaled(eps)));
    prog.add_soc(lhs, rest);
}

/// S-lemma LMI certifying a bound on `‖(h̃+Δ)Ξ − r‖` over the ball `‖Δ‖ ≤ ε`.
///
/// `xi` is an `N x J` matrix of expressions, `offset` the optional length-`J`
/// row `r`. The emitted Hermitian block is
///
/// ```text
/// [ e − λ      h̃Ξ − r     0    ]
/// [ (·)ᴴ       e·I_J     −εΞᴴ  ]
/// [ 0          −εΞ        λ·I_N ]
/// ```
///
/// with `e·I_J` replaced by `I_J` in the squared form. Returns the
/// multiplier `λ`, or `None` when `ε = 0` and the last block row is dropped.
pub fn build_s_lemma_lmi(
    prog: &mut ConicProgram,
    h: &CVector,
    xi: &[Vec<CAff>],
    offset: Option<&[CAff]>,
    eps: f64,
    bound: &AffExpr,
    form: LmiForm,
) -> Option<Var> {
    let n = xi.len();
    let j = xi.first().map_or(0, |r| r.len());
    if let Some(r) = offset {
        assert_eq!(r.len(), j, "offset length must match the column count");
    }
    if j == 0 {
        prog.add_le(AffExpr::zero(), bound.clone());
        return None;
    }
    let mut x = row_times_matrix_exprs(h, xi);
    if let Some(r) = offset {
        x = x.iter().zip(r).map(|(a, b)| a.minus(b)).collect();
    }
    let robust = eps > 0.0;
    let dim = 1 + j + if robust { n } else { 0 };
    let mut lmi = HermitianExpr::zeros(dim);
    let lambda = robust.then(|| prog.scalar("lambda"));
    let mut corner = bound.clone();
    if let Some(l) = lambda {
        corner.add_term(l, -1.0);
    }
    lmi.set(0, 0, CAff::real(corner));
    for (c, xc) in x.into_iter().enumerate() {
        lmi.set(0, 1 + c, xc);
        let diag = match form {
            LmiForm::Norm => bound.clone(),
            LmiForm::Squared => AffExpr::constant(1.0),
        };
        lmi.set(1 + c, 1 + c, CAff::real(diag));
    }
    if let Some(l) = lambda {
        for c in 0..j {
            for i in 0..n {
                // (1+c, 1+j+i) entry is −ε conj(Ξ[i][c]).
                lmi.set(1 + c, 1 + j + i, xi[i][c].conj().times(C64::new(-eps, 0.0)));
            }
        }
        for i in 0..n {
            lmi.set(1 + j + i, 1 + j + i, CAff::real(AffExpr::var(l)));
        }
    }
    lmi.constrain_psd(prog);
    lambda
}

/// `‖vec Φ‖₂ ≤ bound`.
pub fn build_power_soc(prog: &mut ConicProgram, phi: &CMatVar, bound: &AffExpr) {
    prog.add_soc(bound.clone(), phi.real_parts());
}

#[cfg(test)]
mod tests {
    use super::super::{solve, Tolerances};
    use super::*;
    use crate::conic::SolveStatus;

    #[test]
    fn zero_radius_own_channel_is_a_halfspace() {
        // max Re(w) s.t. Re(w) ≥ 0, |w|² ≤ 1, scalar h = 1.
        let mut p = ConicProgram::new();
        let w = CMatVar::new(&mut p, "w", 1, 1);
        let t = AffExpr::zero();
        build_soc_own_channel(&mut p, &CVector::from_vec(vec![C64::new(1.0, 0.0)]), 0.0, 0.0, &t, &w.column(0));
        build_power_soc(&mut p, &w, &AffExpr::constant(1.0));
        p.minimize(w.entry(0, 0).re.scaled(1.0));
        let r = solve(&p, &Tolerances::default());
        assert_eq!(r.status, SolveStatus::Optimal);
        assert!(r.objective.abs() < 1e-6, "{}", r.objective);
    }
}
