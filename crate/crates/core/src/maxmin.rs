//! Centralized robust max-min design.
//!
//! Two routes are provided. The power route bisects on a common SINR target
//! `a` and, for each probe, minimizes the largest normalized transmit power
//! `b` needed to certify `a` for every user; the target is feasible with the
//! real budgets iff `b ≤ 1`. The MSE route bisects on a common bound `a` on
//! the root worst-case MSE, each probe being an SDP feasibility problem in
//! the precoders and equalizers jointly.

use log::{debug, warn};
use serde::Serialize;

use crate::conic::{
    build_power_soc, build_s_lemma_lmi, build_soc_own_channel, solve, AffExpr, CAff, CMatVar, ConicProgram, LmiForm, SolveStatus,
    Tolerances, Var,
};
use crate::error::{Error, Result};
use crate::instance::{EqualizerSet, NetworkInstance, PrecoderSet};
use crate::linalg::norm;
use crate::worst_case::{sinr_lower_bound, worst_case_mse};

/// Result of one power-minimization SDP.
#[derive(Debug, Clone, PartialEq)]
pub enum PowerOutcome {
    /// Optimal value and precoders attaining it.
    Feasible { b: f64, precoders: PrecoderSet },
    /// No precoders certify the target at any power.
    Infeasible,
    /// The solver stopped without a verified answer.
    NumericalFailure(SolveStatus),
}

impl PowerOutcome {
    pub fn value(&self) -> Option<f64> {
        match self {
            PowerOutcome::Feasible { b, .. } => Some(*b),
            _ => None,
        }
    }

    /// Whether the probed target fits the real budgets. Numerical failures
    /// count as infeasible so that bisection stays conservative.
    pub fn fits_budget(&self) -> bool {
        self.value().is_some_and(|b| b <= 1.0)
    }
}

/// What the power SDP minimizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PowerObjective {
    /// `max_m ‖Φ_m‖ / √P_m`, the quantity bisected on.
    #[default]
    MaxNormalized,
    /// `Σ_m ‖Φ_m‖²` subject to the per-cell budgets.
    SumPower,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PowerOptions {
    pub objective: PowerObjective,
    pub tolerances: Tolerances,
}

/// The power SDP for target `a` together with handles to its precoder blocks
/// and objective variable.
pub struct PowerProgram {
    pub program: ConicProgram,
    pub precoders: Vec<CMatVar>,
    pub objective: Var,
}

fn check_target(a: f64) -> Result<()> {
    if !(a >= 0.0) || !a.is_finite() {
        return Err(Error::InvalidConfig(format!("SINR target must be finite and non-negative, got {a}")));
    }
    Ok(())
}

/// Builds the multi-user power SDP: own-channel SOCs with phase pinning,
/// S-lemma LMIs for inter-cell and intra-cell interference, and the power
/// constraints selected by `objective`.
pub fn build_power_program(instance: &NetworkInstance, a: f64, objective: PowerObjective) -> Result<PowerProgram> {
    check_target(a)?;
    let c = instance.config();
    let mut prog = ConicProgram::new();
    let phis: Vec<CMatVar> = (0..c.m).map(|m| CMatVar::new(&mut prog, &format!("phi{m}"), c.n, c.k)).collect();
    let obj = prog.scalar("b");
    for m in 0..c.m {
        for k in 0..c.k {
            let t = AffExpr::var(prog.scalar(&format!("t{m}.{k}")));
            let h = instance.estimate(m, m, k);
            build_soc_own_channel(&mut prog, h, instance.radius(m, m, k), a, &t, &phis[m].column(k));
            let mut es = Vec::new();
            if c.k > 1 {
                let e = AffExpr::var(prog.scalar(&format!("e{m}.{m}.{k}")));
                let others: Vec<usize> = (0..c.k).filter(|&q| q != k).collect();
                let psi = phis[m].select_columns(&others);
                build_s_lemma_lmi(&mut prog, h, &psi, None, instance.radius(m, m, k), &e, LmiForm::Norm);
                es.push(e);
            }
            for n in (0..c.m).filter(|&n| n != m) {
                let e = AffExpr::var(prog.scalar(&format!("e{m}.{n}.{k}")));
                let hn = instance.estimate(m, n, k);
                build_s_lemma_lmi(&mut prog, hn, &phis[n].as_expr(), None, instance.radius(m, n, k), &e, LmiForm::Norm);
                es.push(e);
            }
            es.push(AffExpr::constant(1.0));
            prog.add_soc(t, es);
        }
    }
    match objective {
        PowerObjective::MaxNormalized => {
            for m in 0..c.m {
                build_power_soc(&mut prog, &phis[m], &AffExpr::term(obj, instance.power(m).sqrt()));
            }
        }
        PowerObjective::SumPower => {
            let mut total = AffExpr::zero();
            for m in 0..c.m {
                build_power_soc(&mut prog, &phis[m], &AffExpr::constant(instance.power(m).sqrt()));
                // p_m ≥ ‖Φ_m‖² as ‖(2 vec Φ_m, p_m − 1)‖ ≤ p_m + 1.
                let p = prog.scalar(&format!("p{m}"));
                let mut rest: Vec<AffExpr> = phis[m].real_parts().iter().map(|e| e.scaled(2.0)).collect();
                rest.push(AffExpr::var(p).plus_const(-1.0));
                prog.add_soc(AffExpr::var(p).plus_const(1.0), rest);
                total.add_term(p, 1.0);
            }
            prog.add_eq(AffExpr::var(obj), total);
        }
    }
    prog.minimize(AffExpr::var(obj));
    Ok(PowerProgram { program: prog, precoders: phis, objective: obj })
}

fn run_power_program(pp: PowerProgram, tol: &Tolerances) -> Result<PowerOutcome> {
    let report = solve(&pp.program, tol);
    Ok(match report.status {
        SolveStatus::Optimal => {
            let cells = pp.precoders.iter().map(|v| v.value(&report.x)).collect();
            PowerOutcome::Feasible { b: report.value(pp.objective).max(0.0), precoders: PrecoderSet::new(cells)? }
        }
        SolveStatus::Infeasible => PowerOutcome::Infeasible,
        s => PowerOutcome::NumericalFailure(s),
    })
}

/// Power minimization for a common worst-case SINR lower-bound target `a`.
pub fn power_opt_multi(instance: &NetworkInstance, a: f64) -> Result<PowerOutcome> {
    power_opt_multi_with(instance, a, &PowerOptions::default())
}

pub fn power_opt_multi_with(instance: &NetworkInstance, a: f64, opts: &PowerOptions) -> Result<PowerOutcome> {
    let pp = build_power_program(instance, a, opts.objective)?;
    run_power_program(pp, &opts.tolerances)
}

/// Single-user-per-cell power minimization as a pure SOCP with separate
/// slacks for the nominal interference gain and its uncertainty margin.
pub fn power_opt_single(instance: &NetworkInstance, a: f64) -> Result<PowerOutcome> {
    check_target(a)?;
    let c = instance.config();
    if c.k != 1 {
        return Err(Error::RequiresSingleUser(c.k));
    }
    let mut prog = ConicProgram::new();
    let ws: Vec<CMatVar> = (0..c.m).map(|m| CMatVar::new(&mut prog, &format!("w{m}"), c.n, 1)).collect();
    let b = prog.scalar("b");
    for m in 0..c.m {
        let t = AffExpr::var(prog.scalar(&format!("t{m}")));
        build_soc_own_channel(&mut prog, instance.estimate(m, m, 0), instance.radius(m, m, 0), a, &t, &ws[m].column(0));
        let mut es = Vec::new();
        for n in (0..c.m).filter(|&n| n != m) {
            let cv = AffExpr::var(prog.scalar(&format!("c{m}.{n}")));
            let dv = AffExpr::var(prog.scalar(&format!("d{m}.{n}")));
            let ev = AffExpr::var(prog.scalar(&format!("e{m}.{n}")));
            prog.add_le(cv.clone().plus(&dv), ev.clone());
            let hw = crate::conic::complex::row_times_exprs(instance.estimate(m, n, 0), &ws[n].column(0));
            prog.add_soc(cv, vec![hw.re, hw.im]);
            let eps = instance.radius(m, n, 0);
            prog.add_soc(dv, ws[n].real_parts().iter().map(|e| e.scaled(eps)).collect());
            es.push(ev);
        }
        es.push(AffExpr::constant(1.0));
        prog.add_soc(t, es);
        build_power_soc(&mut prog, &ws[m], &AffExpr::term(b, instance.power(m).sqrt()));
    }
    prog.minimize(AffExpr::var(b));
    run_power_program(PowerProgram { program: prog, precoders: ws, objective: b }, &Tolerances::default())
}

/// `min_{m,k} P_m ((‖h̃ᵏₘₘ‖ − εᵏₘₘ)⁺)²`: no user can exceed this SINR even
/// without interference.
pub fn interference_free_ceiling(instance: &NetworkInstance) -> f64 {
    let c = instance.config();
    let mut best = f64::INFINITY;
    for m in 0..c.m {
        for k in 0..c.k {
            let g = (norm(instance.estimate(m, m, k)) - instance.radius(m, m, k)).max(0.0);
            best = best.min(instance.power(m) * g * g);
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BisectionStep {
    /// Probed target.
    pub a: f64,
    /// Bracket after processing the probe.
    pub a_min: f64,
    pub a_max: f64,
    /// Optimal `b` at the probe, `None` when infeasible or failed.
    pub b: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BisectionTrace {
    pub steps: Vec<BisectionStep>,
    pub a_star: f64,
    pub delta: f64,
    /// True when no positive target was found feasible.
    pub degenerate: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MaxMinSolution {
    /// Certified common worst-case SINR lower bound.
    pub a_star: f64,
    pub precoders: PrecoderSet,
    pub trace: BisectionTrace,
}

impl MaxMinSolution {
    /// `log(1 + a*)` in nats.
    pub fn min_rate(&self) -> f64 {
        self.a_star.max(0.0).ln_1p()
    }
}

fn check_delta(delta: f64) -> Result<()> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::InvalidConfig(format!("bisection tolerance must lie in (0, 1), got {delta}")));
    }
    Ok(())
}

/// Bisection on the SINR target using [`power_opt_multi`]. The bracket
/// starts at `[0, ceiling]`, and bisection stops once its width is at most
/// `delta` times the initial ceiling. Returned precoders are the last
/// feasible probe's, rescaled to use the full budget.
pub fn maxmin_via_power(instance: &NetworkInstance, delta: f64) -> Result<MaxMinSolution> {
    maxmin_via_power_with(instance, delta, &Tolerances::default())
}

pub fn maxmin_via_power_with(instance: &NetworkInstance, delta: f64, tol: &Tolerances) -> Result<MaxMinSolution> {
    check_delta(delta)?;
    let ceiling = interference_free_ceiling(instance);
    let (mut lo, mut hi) = (0.0, ceiling);
    let mut best: Option<PrecoderSet> = None;
    let mut steps = Vec::new();
    let opts = PowerOptions { tolerances: *tol, ..PowerOptions::default() };
    while ceiling > 0.0 && hi - lo > delta * ceiling {
        let a = 0.5 * (lo + hi);
        let out = power_opt_multi_with(instance, a, &opts)?;
        if let PowerOutcome::NumericalFailure(s) = &out {
            warn!("power SDP at a = {a:.6e} ended with {s:?}; treating as infeasible");
        }
        let b = out.value();
        if out.fits_budget() {
            lo = a;
            if let PowerOutcome::Feasible { b, precoders } = out {
                best = Some(if b > 0.0 { precoders.scaled(1.0 / b) } else { precoders });
            }
        } else {
            hi = a;
        }
        debug!("bisection a = {a:.6e}, b = {b:?}, bracket [{lo:.6e}, {hi:.6e}]");
        steps.push(BisectionStep { a, a_min: lo, a_max: hi, b });
    }
    let degenerate = best.is_none();
    let precoders = best.unwrap_or_else(|| PrecoderSet::matched_filter(instance));
    let a_star = if degenerate { 0.0 } else { lo };
    Ok(MaxMinSolution { a_star, precoders, trace: BisectionTrace { steps, a_star, delta, degenerate } })
}

/// Outcome of the MSE route.
#[derive(Debug, Clone, PartialEq)]
pub struct GevpSolution {
    /// Certified bound on the root worst-case MSE of every user.
    pub a_star: f64,
    pub precoders: PrecoderSet,
    pub equalizers: EqualizerSet,
    pub trace: BisectionTrace,
}

impl GevpSolution {
    /// Worst-case rate lower bound `−log(a*²)` in nats, clipped at zero.
    pub fn rate_lower_bound(&self) -> f64 {
        (-(self.a_star * self.a_star).ln()).max(0.0)
    }
}

/// Feasibility SDP of the MSE route at level `a`: minimizes the normalized
/// power `β` over designs whose worst-case MSE is at most `a²` when every
/// budget is scaled by `β²`.
pub fn build_mse_program(instance: &NetworkInstance, a: f64) -> Result<(ConicProgram, Vec<CMatVar>, Vec<Var>, Var)> {
    if !(a > 0.0) || !a.is_finite() {
        return Err(Error::InvalidConfig(format!("MSE level must be positive, got {a}")));
    }
    let c = instance.config();
    let mut prog = ConicProgram::new();
    let phis: Vec<CMatVar> = (0..c.m).map(|m| CMatVar::new(&mut prog, &format!("phi{m}"), c.n, c.k)).collect();
    let fs = prog.vector("f", c.users());
    let beta = prog.scalar("beta");
    for m in 0..c.m {
        for k in 0..c.k {
            let f = fs[c.user_index(m, k)];
            prog.add_le(AffExpr::zero(), AffExpr::var(f));
            let mut offset = vec![CAff::zero(); c.k];
            offset[k] = CAff::real(AffExpr::var(f));
            let own = AffExpr::var(prog.scalar(&format!("b{m}.{m}.{k}")));
            let h = instance.estimate(m, m, k);
            build_s_lemma_lmi(&mut prog, h, &phis[m].as_expr(), Some(&offset), instance.radius(m, m, k), &own, LmiForm::Norm);
            let mut bs = vec![own];
            for n in (0..c.m).filter(|&n| n != m) {
                let bv = AffExpr::var(prog.scalar(&format!("b{m}.{n}.{k}")));
                let hn = instance.estimate(m, n, k);
                build_s_lemma_lmi(&mut prog, hn, &phis[n].as_expr(), None, instance.radius(m, n, k), &bv, LmiForm::Norm);
                bs.push(bv);
            }
            bs.push(AffExpr::constant(1.0));
            prog.add_soc(AffExpr::term(f, a), bs);
        }
    }
    for m in 0..c.m {
        build_power_soc(&mut prog, &phis[m], &AffExpr::term(beta, instance.power(m).sqrt()));
    }
    prog.minimize(AffExpr::var(beta));
    Ok((prog, phis, fs, beta))
}

/// Result of one MSE-level probe: normalized power and the design rescaled to full budget.
fn probe_mse(instance: &NetworkInstance, a: f64, tol: &Tolerances) -> Result<Option<(f64, PrecoderSet, EqualizerSet)>> {
    let (prog, phis, fs, beta) = build_mse_program(instance, a)?;
    let r = solve(&prog, tol);
    if r.status != SolveStatus::Optimal {
        if r.status != SolveStatus::Infeasible {
            warn!("MSE SDP at a = {a:.6e} ended with {:?}; treating as infeasible", r.status);
        }
        return Ok(None);
    }
    let b = r.value(beta);
    if !(b <= 1.0) {
        return Ok(Some((b, PrecoderSet::zeros(instance.config()), EqualizerSet::constant(instance.config(), 1.0)?)));
    }
    // Scaling Φ, f and the slacks by 1/β keeps every constraint satisfied.
    let s = if b > 0.0 { 1.0 / b } else { 1.0 };
    let prec = PrecoderSet::new(phis.iter().map(|v| v.value(&r.x) * crate::linalg::C64::new(s, 0.0)).collect())?;
    let vals: Vec<f64> = fs.iter().map(|&f| (r.value(f) * s).max(f64::MIN_POSITIVE)).collect();
    Ok(Some((b, prec, EqualizerSet::new(instance.config(), vals)?)))
}

/// Min-max worst-case MSE via bisection on the root-MSE level `a`. The
/// bracket is `[√(1/(1+ceiling)), 1]`; the level `1` is always attainable
/// with zero precoders. Stops when the bracket is at most `delta` wide.
pub fn minmax_mse_gevp(instance: &NetworkInstance, delta: f64) -> Result<GevpSolution> {
    minmax_mse_gevp_with(instance, delta, &Tolerances::default())
}

pub fn minmax_mse_gevp_with(instance: &NetworkInstance, delta: f64, tol: &Tolerances) -> Result<GevpSolution> {
    check_delta(delta)?;
    let c = instance.config();
    let ceiling = interference_free_ceiling(instance);
    let (mut lo, mut hi) = ((1.0 / (1.0 + ceiling)).sqrt(), 1.0);
    let mut best: Option<(PrecoderSet, EqualizerSet)> = None;
    let mut steps = Vec::new();
    while hi - lo > delta {
        let a = 0.5 * (lo + hi);
        let out = probe_mse(instance, a, tol)?;
        let b = out.as_ref().map(|(b, _, _)| *b);
        match out {
            Some((b, prec, eq)) if b <= 1.0 => {
                hi = a;
                best = Some((prec, eq));
            }
            _ => lo = a,
        }
        debug!("MSE bisection a = {a:.6e}, beta = {b:?}, bracket [{lo:.6e}, {hi:.6e}]");
        steps.push(BisectionStep { a, a_min: lo, a_max: hi, b });
    }
    let degenerate = best.is_none();
    let (precoders, equalizers) = match best {
        Some(d) => d,
        None => (PrecoderSet::zeros(c), EqualizerSet::constant(c, 1.0)?),
    };
    let a_star = if degenerate { 1.0 } else { hi };
    Ok(GevpSolution { a_star, precoders, equalizers, trace: BisectionTrace { steps, a_star, delta, degenerate } })
}

/// Smallest certified SINR lower bound over all users of a design.
pub fn min_sinr_lower_bound(instance: &NetworkInstance, precoders: &PrecoderSet) -> f64 {
    let c = instance.config();
    let mut v = f64::INFINITY;
    for m in 0..c.m {
        for k in 0..c.k {
            v = v.min(sinr_lower_bound(instance, precoders, m, k));
        }
    }
    v
}

/// Largest exact worst-case MSE over all users of a design.
pub fn max_worst_case_mse(instance: &NetworkInstance, precoders: &PrecoderSet, equalizers: &EqualizerSet) -> Result<f64> {
    let c = instance.config();
    let mut v = 0.0f64;
    for m in 0..c.m {
        for k in 0..c.k {
            v = v.max(worst_case_mse(instance, precoders, equalizers, m, k)?);
        }
    }
    Ok(v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instance::{sample_instance, ChannelTensor, NetworkConfig, PowerSpec, RadiiSpec, WeightSpec};
    use crate::linalg::{CVector, C64};

    fn scalar_instance(h: &[f64], eps: f64, p: f64) -> NetworkInstance {
        let cfg = NetworkConfig::new(1, 1, h.len()).unwrap();
        let hv = CVector::from_iterator(h.len(), h.iter().map(|&x| C64::new(x, 0.0)));
        let est = ChannelTensor::from_vec(cfg, vec![hv]).unwrap();
        NetworkInstance::new(est, vec![eps], vec![p], vec![1.0]).unwrap()
    }

    fn random(m: usize, k: usize, n: usize, eps: f64, seed: u64) -> NetworkInstance {
        let cfg = NetworkConfig::new(m, k, n).unwrap();
        sample_instance(cfg, &RadiiSpec::Uniform(eps), &PowerSpec::UniformDb(10.0), &WeightSpec::Uniform(1.0), seed).unwrap()
    }

    #[test]
    fn single_matched_filter_at_ceiling() {
        let inst = scalar_instance(&[1.0, 0.0], 0.1, 1.0);
        match power_opt_single(&inst, 0.81).unwrap() {
            PowerOutcome::Feasible { b, precoders } => {
                assert!((b - 1.0).abs() < 1e-5, "{b}");
                let w = precoders.beam(0, 0);
                assert!((w[0].norm() - 1.0).abs() < 1e-4 && w[1].norm() < 1e-4);
            }
            o => panic!("{o:?}"),
        }
    }

    #[test]
    fn single_power_scales_with_root_target() {
        let inst = scalar_instance(&[1.0, 0.0], 0.1, 1.0);
        let b = power_opt_single(&inst, 0.2025).unwrap().value().unwrap();
        assert!((b - 0.5).abs() < 1e-5, "{b}");
        let b2 = power_opt_single(&inst, 1.62).unwrap();
        assert!(!b2.fits_budget());
    }

    #[test]
    fn multi_agrees_with_single_when_k_is_one() {
        for seed in 0..3 {
            let inst = random(2, 1, 2, 0.1, seed);
            let a = 0.5 * interference_free_ceiling(&inst);
            let s = power_opt_single(&inst, a).unwrap().value();
            let m = power_opt_multi(&inst, a).unwrap().value();
            match (s, m) {
                (Some(s), Some(m)) => assert!((s - m).abs() < 1e-5 * (1.0 + s), "{s} vs {m}"),
                (None, None) => {}
                other => panic!("{other:?}"),
            }
        }
    }

    #[test]
    fn multi_certifies_its_target() {
        let inst = random(2, 2, 2, 0.1, 3);
        let a = 0.3;
        if let PowerOutcome::Feasible { precoders, .. } = power_opt_multi(&inst, a).unwrap() {
            assert!(min_sinr_lower_bound(&inst, &precoders) >= a - 1e-5);
        } else {
            panic!("expected a feasible target");
        }
    }

    #[test]
    fn bisection_recovers_isolated_ceiling() {
        let inst = scalar_instance(&[1.0, 0.0], 0.1, 1.0);
        let sol = maxmin_via_power(&inst, 1e-4).unwrap();
        assert!((sol.a_star - 0.81).abs() <= 1e-4 * 0.81 + 1e-6, "{}", sol.a_star);
        assert!(!sol.trace.degenerate);
    }

    #[test]
    fn bisection_trace_halves() {
        let inst = random(2, 1, 2, 0.05, 1);
        let sol = maxmin_via_power(&inst, 1e-2).unwrap();
        let ceiling = interference_free_ceiling(&inst);
        let mut width = ceiling;
        for s in &sol.trace.steps {
            assert!(((s.a_max - s.a_min) - width / 2.0).abs() <= 1e-12 * ceiling);
            width /= 2.0;
        }
        assert!(sol.precoders.respects_budget(&inst, 1e-6));
        assert!(min_sinr_lower_bound(&inst, &sol.precoders) >= sol.a_star * (1.0 - 1e-5) - 1e-6);
    }

    #[test]
    fn gevp_scalar_nominal_matches_mmse() {
        // Interference-free, perfect CSI: minimal worst-case MSE is 1/(1+P|h|²).
        let inst = scalar_instance(&[1.0], 0.0, 4.0);
        let sol = minmax_mse_gevp(&inst, 1e-5).unwrap();
        let want = (1.0f64 / 5.0).sqrt();
        assert!((sol.a_star - want).abs() < 1e-4, "{} vs {want}", sol.a_star);
        let mse = max_worst_case_mse(&inst, &sol.precoders, &sol.equalizers).unwrap();
        assert!(mse <= sol.a_star * sol.a_star + 1e-4);
    }

    #[test]
    fn rejects_bad_inputs() {
        let inst = scalar_instance(&[1.0], 0.1, 1.0);
        assert!(power_opt_multi(&inst, -1.0).is_err());
        assert!(maxmin_via_power(&inst, 0.0).is_err());
        let two = random(1, 2, 2, 0.0, 0);
        assert!(matches!(power_opt_single(&two, 0.1), Err(Error::RequiresSingleUser(2))));
    }
}
