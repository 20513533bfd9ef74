//! Robust weighted sum-rate lower-bound maximization.
//!
//! With slack rates `u`, the sum rate is bounded below by
//! `Σ α (u − e^{u−1}·mse)` for any equalizers, where `mse` is the worst-case
//! MSE. For fixed `u` this is maximized by alternating between per-cell
//! precoder SDPs and per-user equalizer searches; then `u` is reset to
//! `1 − log mse`, which makes the bound equal `Σ α (−log mse)`.

use log::{debug, warn};
use rayon::prelude::*;
use serde::Serialize;

use crate::conic::{build_power_soc, build_s_lemma_lmi, solve, AffExpr, CAff, CMatVar, ConicProgram, LmiForm, SolveStatus, Tolerances};
use crate::error::{Error, Result};
use crate::instance::{EqualizerSet, NetworkInstance, PrecoderSet};
use crate::linalg::{CMatrix, C64};
use crate::worst_case::{max_quadratic_over_ball, worst_case_mse, worst_case_mse_with};

/// Largest equalizer ever stored; bounds `1/g` when a user's best gain is ~0.
const MAX_EQUALIZER: f64 = 1e12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SumRateOptions {
    /// Outer stop: lower-bound improvement below this (nats).
    pub outer_tol: f64,
    pub max_outer: usize,
    /// Inner stop: weighted-MSE improvement below this (relative to `max(1, J)`).
    pub inner_tol: f64,
    pub max_inner: usize,
    pub tolerances: Tolerances,
}

impl Default for SumRateOptions {
    fn default() -> Self {
        Self { outer_tol: 1e-4, max_outer: 100, inner_tol: 1e-6, max_inner: 50, tolerances: Tolerances::default() }
    }
}

/// Iterate of the alternating scheme.
#[derive(Debug, Clone, PartialEq)]
pub struct AOState {
    /// Slack rates in nats, cell-major.
    pub u: Vec<f64>,
    pub precoders: PrecoderSet,
    pub equalizers: EqualizerSet,
    /// Lower bound after initialization and after every outer iteration.
    pub trace: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SumRateStats {
    pub outer_iterations: usize,
    pub inner_iterations: usize,
    pub converged: bool,
    /// Precoder steps discarded because they did not lower the objective.
    pub rejected_steps: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SumRateSolution {
    pub precoders: PrecoderSet,
    pub equalizers: EqualizerSet,
    /// Certified weighted sum-rate lower bound `Σ α (−log mse)` in nats.
    pub lower_bound: f64,
    pub trace: Vec<f64>,
    pub stats: SumRateStats,
}

fn worst_mses(instance: &NetworkInstance, precoders: &PrecoderSet, equalizers: &EqualizerSet) -> Result<Vec<f64>> {
    let c = instance.config();
    let mut out = Vec::with_capacity(c.users());
    for m in 0..c.m {
        for k in 0..c.k {
            out.push(worst_case_mse(instance, precoders, equalizers, m, k)?);
        }
    }
    Ok(out)
}

/// `u = 1 − log(worst-case mse)` per user.
pub fn update_u(instance: &NetworkInstance, precoders: &PrecoderSet, equalizers: &EqualizerSet) -> Result<Vec<f64>> {
    Ok(worst_mses(instance, precoders, equalizers)?.into_iter().map(|e| 1.0 - e.ln()).collect())
}

/// `Σ α e^{u−1} · worst-case mse`, the quantity the alternating steps decrease.
pub fn weighted_mse_objective(instance: &NetworkInstance, precoders: &PrecoderSet, equalizers: &EqualizerSet, u: &[f64]) -> Result<f64> {
    let mses = worst_mses(instance, precoders, equalizers)?;
    check_u(instance, u)?;
    Ok(mses.iter().zip(u).zip(instance.weights()).map(|((e, u), a)| a * (u - 1.0).exp() * e).sum())
}

/// Weighted sum-rate lower bound `Σ α (−log mse)` in nats.
pub fn sum_rate_lower_bound(instance: &NetworkInstance, precoders: &PrecoderSet, equalizers: &EqualizerSet) -> Result<f64> {
    let mses = worst_mses(instance, precoders, equalizers)?;
    Ok(mses.iter().zip(instance.weights()).map(|(e, a)| -a * e.ln()).sum())
}

fn check_u(instance: &NetworkInstance, u: &[f64]) -> Result<()> {
    if u.len() != instance.config().users() {
        return Err(Error::ShapeMismatch(format!("expected {} slack rates, got {}", instance.config().users(), u.len())));
    }
    Ok(())
}

/// Worst-case MSE of user `(m, k)` as a function of `g = 1/f`; `φ(0) = 1`.
fn mse_of_g(instance: &NetworkInstance, precoders: &PrecoderSet, m: usize, k: usize, g: f64) -> f64 {
    if g <= 0.0 {
        return 1.0;
    }
    worst_case_mse_with(instance, precoders, m, k, 1.0 / g).unwrap_or(f64::INFINITY)
}

/// Minimizer of the convex map `g ↦ mse(1/g)` over `g ≥ 0` by doubling then golden section.
fn best_g(instance: &NetworkInstance, precoders: &PrecoderSet, m: usize, k: usize) -> f64 {
    let phi = |g: f64| mse_of_g(instance, precoders, m, k, g);
    let mut hi = 1e-8;
    let mut f_hi = phi(hi);
    for _ in 0..200 {
        let next = phi(2.0 * hi);
        if next >= f_hi {
            break;
        }
        hi *= 2.0;
        f_hi = next;
    }
    let (mut a, mut b) = (0.0, 2.0 * hi);
    let r = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = b - r * (b - a);
    let mut x2 = a + r * (b - a);
    let (mut f1, mut f2) = (phi(x1), phi(x2));
    for _ in 0..120 {
        if f1 <= f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - r * (b - a);
            f1 = phi(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + r * (b - a);
            f2 = phi(x2);
        }
        if b - a <= 1e-14 * b.max(1e-300) {
            break;
        }
    }
    if f1 <= f2 {
        x1
    } else {
        x2
    }
}

fn g_to_f(g: f64) -> f64 {
    if g * MAX_EQUALIZER > 1.0 {
        1.0 / g
    } else {
        MAX_EQUALIZER
    }
}

/// Per-user worst-case-MSE-optimal equalizers for fixed precoders. The
/// slack weights only scale each user's term, so they do not enter.
pub fn optimize_equalizers(instance: &NetworkInstance, precoders: &PrecoderSet) -> Result<EqualizerSet> {
    let c = instance.config();
    let vals: Vec<f64> = (0..c.users()).into_par_iter().map(|i| g_to_f(best_g(instance, precoders, i / c.k, i % c.k))).collect();
    EqualizerSet::new(c, vals)
}

/// Same as [`optimize_equalizers`] but each user solves a small SDP in `g`.
pub fn optimize_equalizers_sdp(instance: &NetworkInstance, precoders: &PrecoderSet) -> Result<EqualizerSet> {
    let c = instance.config();
    let tol = Tolerances::default();
    let mut vals = Vec::with_capacity(c.users());
    for m in 0..c.m {
        for k in 0..c.k {
            let mut rest = 1.0;
            for n in (0..c.m).filter(|&n| n != m) {
                rest += max_quadratic_over_ball(instance.estimate(m, n, k), precoders.matrix(n), instance.radius(m, n, k));
            }
            let mut prog = ConicProgram::new();
            let g = prog.scalar("g");
            let s = prog.scalar("s");
            let r = prog.scalar("r");
            prog.add_le(AffExpr::zero(), AffExpr::var(g));
            let xi = scaled_matrix(precoders.matrix(m), &AffExpr::var(g));
            let mut offset = vec![CAff::zero(); c.k];
            offset[k] = CAff::constant(C64::new(1.0, 0.0));
            build_s_lemma_lmi(
                &mut prog,
                instance.estimate(m, m, k),
                &xi,
                Some(&offset),
                instance.radius(m, m, k),
                &AffExpr::var(s),
                LmiForm::Squared,
            );
            // r ≥ g²
            prog.add_soc(AffExpr::var(r).plus_const(1.0), vec![AffExpr::term(g, 2.0), AffExpr::var(r).plus_const(-1.0)]);
            prog.minimize(AffExpr::var(s).plus(&AffExpr::term(r, rest)));
            let rep = solve(&prog, &tol);
            if rep.status != SolveStatus::Optimal {
                return Err(Error::Solver(format!("equalizer SDP for user ({m},{k}) ended with {:?}", rep.status)));
            }
            vals.push(g_to_f(rep.value(g)));
        }
    }
    EqualizerSet::new(c, vals)
}

/// `g · Φ` as an expression matrix, `g` a scalar expression.
fn scaled_matrix(phi: &CMatrix, g: &AffExpr) -> Vec<Vec<CAff>> {
    (0..phi.nrows())
        .map(|i| (0..phi.ncols()).map(|j| CAff { re: g.scaled(phi[(i, j)].re), im: g.scaled(phi[(i, j)].im) }).collect())
        .collect()
}

/// Cell-`m` precoder SDP for fixed equalizers and slack rates.
///
/// With `c = α e^{u−1}` and `g = 1/f`, cell `m` minimizes
/// `Σ_l cₘˡ max‖gₘˡ h̃ˡₘₘ Φ − e_l‖² + Σ_{n≠m, l} cₙˡ (gₙˡ)² max‖h̃ˡₙₘ Φ‖²`
/// over `‖Φ‖² ≤ Pₘ`; no other cell's variables appear.
pub fn build_cell_program(instance: &NetworkInstance, equalizers: &EqualizerSet, u: &[f64], m: usize) -> (ConicProgram, CMatVar) {
    let c = instance.config();
    let mut prog = ConicProgram::new();
    let phi = CMatVar::new(&mut prog, "phi", c.n, c.k);
    let mut objective = AffExpr::zero();
    let expr = phi.as_expr();
    for n in 0..c.m {
        for l in 0..c.k {
            let idx = c.user_index(n, l);
            let weight = instance.weight(n, l) * (u[idx] - 1.0).exp();
            let g = 1.0 / equalizers.get(n, l);
            let s = prog.scalar(&format!("s{n}.{l}"));
            let h = instance.estimate(n, m, l);
            let eps = instance.radius(n, m, l);
            let xi: Vec<Vec<CAff>> = expr.iter().map(|row| row.iter().map(|z| z.scaled(g)).collect()).collect();
            if n == m {
                let mut offset = vec![CAff::zero(); c.k];
                offset[l] = CAff::constant(C64::new(1.0, 0.0));
                build_s_lemma_lmi(&mut prog, h, &xi, Some(&offset), eps, &AffExpr::var(s), LmiForm::Squared);
            } else {
                build_s_lemma_lmi(&mut prog, h, &xi, None, eps, &AffExpr::var(s), LmiForm::Squared);
            }
            objective.add_term(s, weight);
        }
    }
    build_power_soc(&mut prog, &phi, &AffExpr::constant(instance.power(m).sqrt()));
    prog.minimize(objective);
    (prog, phi)
}

/// Solves every cell's precoder SDP, in parallel.
pub fn optimize_precoders(instance: &NetworkInstance, equalizers: &EqualizerSet, u: &[f64]) -> Result<PrecoderSet> {
    optimize_precoders_with(instance, equalizers, u, &Tolerances::default())
}

pub fn optimize_precoders_with(instance: &NetworkInstance, equalizers: &EqualizerSet, u: &[f64], tol: &Tolerances) -> Result<PrecoderSet> {
    check_u(instance, u)?;
    let c = instance.config();
    let cells: Result<Vec<CMatrix>> = (0..c.m)
        .into_par_iter()
        .map(|m| {
            let (prog, phi) = build_cell_program(instance, equalizers, u, m);
            let rep = solve(&prog, tol);
            if rep.status != SolveStatus::Optimal {
                return Err(Error::Solver(format!("precoder SDP for cell {m} ended with {:?}", rep.status)));
            }
            let mut p = phi.value(&rep.x);
            // Clip tiny budget overshoot from solver tolerance.
            let pow: f64 = p.iter().map(|z| z.norm_sqr()).sum();
            if pow > instance.power(m) {
                p *= C64::new((instance.power(m) / pow).sqrt(), 0.0);
            }
            Ok(p)
        })
        .collect();
    PrecoderSet::new(cells?)
}

/// Matched-filter precoders at `√(P/K)` per beam with their worst-case-optimal equalizers.
pub fn initial_state(instance: &NetworkInstance) -> Result<(PrecoderSet, EqualizerSet)> {
    let prec = PrecoderSet::matched_filter(instance);
    let eq = optimize_equalizers(instance, &prec)?;
    Ok((prec, eq))
}

/// Runs the alternating scheme with default inner settings.
pub fn weighted_sumrate_ao(instance: &NetworkInstance, outer_tol: f64, max_outer: usize) -> Result<SumRateSolution> {
    let opts = SumRateOptions { outer_tol, max_outer, ..SumRateOptions::default() };
    weighted_sumrate_ao_with(instance, &opts, None)
}

/// Alternating optimization from `start` (or [`initial_state`]). Precoder
/// steps that fail or raise the exactly evaluated objective are discarded,
/// so the lower bound cannot decrease between outer iterations.
pub fn weighted_sumrate_ao_with(instance: &NetworkInstance, opts: &SumRateOptions, start: Option<&PrecoderSet>) -> Result<SumRateSolution> {
    let mut state = AOState::new(instance, start)?;
    let mut stats = SumRateStats { outer_iterations: 0, inner_iterations: 0, converged: false, rejected_steps: 0 };
    for _ in 0..opts.max_outer {
        let before = state.lower_bound();
        let after = state.outer_iteration(instance, opts, &mut stats)?;
        if after - before < opts.outer_tol {
            stats.converged = true;
            break;
        }
    }
    let lower_bound = state.lower_bound();
    Ok(SumRateSolution { precoders: state.precoders, equalizers: state.equalizers, lower_bound, trace: state.trace, stats })
}

impl AOState {
    /// Starts from `start` (or matched filters) with optimal equalizers and matching `u`.
    pub fn new(instance: &NetworkInstance, start: Option<&PrecoderSet>) -> Result<Self> {
        let (precoders, equalizers) = match start {
            Some(p) => (p.clone(), optimize_equalizers(instance, p)?),
            None => initial_state(instance)?,
        };
        let u = update_u(instance, &precoders, &equalizers)?;
        let lb = sum_rate_lower_bound(instance, &precoders, &equalizers)?;
        Ok(Self { u, precoders, equalizers, trace: vec![lb] })
    }

    pub fn lower_bound(&self) -> f64 {
        *self.trace.last().expect("trace starts non-empty")
    }

    /// Inner alternating steps at fixed `u`, then the `u` update. Returns the new lower bound.
    pub fn outer_iteration(&mut self, instance: &NetworkInstance, opts: &SumRateOptions, stats: &mut SumRateStats) -> Result<f64> {
        let mut j = weighted_mse_objective(instance, &self.precoders, &self.equalizers, &self.u)?;
        for _ in 0..opts.max_inner {
            stats.inner_iterations += 1;
            let before = j;
            match optimize_precoders_with(instance, &self.equalizers, &self.u, &opts.tolerances) {
                Ok(p) => {
                    let e = optimize_equalizers(instance, &p)?;
                    let jn = weighted_mse_objective(instance, &p, &e, &self.u)?;
                    if jn <= j {
                        self.precoders = p;
                        self.equalizers = e;
                        j = jn;
                    } else {
                        stats.rejected_steps += 1;
                    }
                }
                Err(err) => {
                    warn!("precoder step failed: {err}");
                    stats.rejected_steps += 1;
                }
            }
            if before - j < opts.inner_tol * before.max(1.0) {
                break;
            }
        }
        self.u = update_u(instance, &self.precoders, &self.equalizers)?;
        let lb = sum_rate_lower_bound(instance, &self.precoders, &self.equalizers)?;
        stats.outer_iterations += 1;
        debug!("outer iteration {}: lower bound {lb:.8}", stats.outer_iterations);
        self.trace.push(lb);
        Ok(lb)
    }
}
