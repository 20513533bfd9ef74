//! Dual decomposition of the power feasibility problem.
//!
//! Every inter-cell bound `β` on the interference from BS `n` onto user
//! `(m, k)` gets two copies: the receiver's (`recv`, held by BS `m`) and the
//! transmitter's (`intf`, held by BS `n`). Relaxing their equality with free
//! multipliers `λ` splits the problem into one SDP per cell. All per-link
//! vectors are indexed by `NetworkConfig::link_index(m, n, k)`; entries with
//! `m == n` are unused and stay zero.

use log::debug;
use rayon::prelude::*;
use serde::Serialize;

use super::messages::{EventLog, Message};
use crate::conic::{
    build_power_soc, build_s_lemma_lmi, build_soc_own_channel, solve, AffExpr, CMatVar, ConicProgram, LmiForm, SolveStatus, Tolerances, Var,
};
use crate::error::{Error, Result};
use crate::instance::{NetworkInstance, PrecoderSet};
use crate::linalg::{norm, CMatrix};
use crate::maxmin::{interference_free_ceiling, min_sinr_lower_bound, BisectionStep, BisectionTrace};

/// Multiplier step size, in units of the mean per-cell power budget.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum StepSize {
    /// `μ_i = μ₀/√i` at iteration `i ≥ 1`.
    Diminishing(f64),
    Constant(f64),
}

impl StepSize {
    pub fn at(&self, iter: usize, scale: f64) -> f64 {
        scale
            * match *self {
                StepSize::Diminishing(mu0) => mu0 / (iter.max(1) as f64).sqrt(),
                StepSize::Constant(mu) => mu,
            }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DualOptions {
    pub step: StepSize,
    pub max_iters: usize,
    pub consensus_tol: f64,
    /// Iteration from which the copies are averaged over the remaining iterates.
    pub averaging_start: Option<usize>,
    /// Set both copies to their mean and re-solve the cells with `β` fixed.
    pub force_equality: bool,
    /// The last subgradient iterate counts as feasible when its exact
    /// worst-case SINR bound is at least `a·(1 − certify_slack)`.
    pub certify_slack: f64,
    pub tolerances: Tolerances,
}

impl Default for DualOptions {
    fn default() -> Self {
        Self {
            step: StepSize::Diminishing(0.5),
            max_iters: 200,
            consensus_tol: 1e-3,
            averaging_start: Some(50),
            force_equality: true,
            certify_slack: 1e-2,
            tolerances: Tolerances::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DualState {
    pub lambda: Vec<f64>,
    pub beta_recv: Vec<f64>,
    pub beta_intf: Vec<f64>,
    /// Step size used in the last multiplier update.
    pub mu: f64,
    pub residual: f64,
    pub iterations: usize,
    pub residual_trace: Vec<f64>,
}

impl DualState {
    pub fn new(instance: &NetworkInstance) -> Self {
        let links = instance.config().links();
        Self {
            lambda: vec![0.0; links],
            beta_recv: vec![0.0; links],
            beta_intf: vec![0.0; links],
            mu: 0.0,
            residual: f64::INFINITY,
            iterations: 0,
            residual_trace: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DualOutcome {
    pub feasible: bool,
    /// First cell whose subproblem failed, if any.
    pub culprit: Option<usize>,
    pub precoders: Option<PrecoderSet>,
    pub state: DualState,
    pub log: EventLog,
}

impl DualOutcome {
    pub fn total_power(&self) -> Option<f64> {
        let p = self.precoders.as_ref()?;
        Some((0..p.cells()).map(|m| p.power(m)).sum())
    }
}

/// Largest value any interference bound can usefully take.
fn beta_cap(instance: &NetworkInstance, m: usize, n: usize, k: usize) -> f64 {
    (norm(instance.estimate(m, n, k)) + instance.radius(m, n, k)) * instance.power(n).sqrt()
}

fn cross_links(instance: &NetworkInstance) -> impl Iterator<Item = (usize, usize, usize)> {
    let c = instance.config();
    (0..c.m).flat_map(move |m| (0..c.m).filter(move |&n| n != m).flat_map(move |n| (0..c.k).map(move |k| (m, n, k))))
}

enum Betas<'a> {
    /// Free copies priced by the multipliers.
    Priced(&'a [f64]),
    /// Both copies pinned to one value per link.
    Fixed(&'a [f64]),
}

struct CellResult {
    phi: CMatrix,
    /// `(link, value)` for the receiver copies held by this cell.
    recv: Vec<(usize, f64)>,
    intf: Vec<(usize, f64)>,
}

fn solve_cell(
    instance: &NetworkInstance,
    m: usize,
    a: f64,
    betas: &Betas,
    tol: &Tolerances,
) -> std::result::Result<CellResult, SolveStatus> {
    let c = instance.config();
    let mut prog = ConicProgram::new();
    let phi = CMatVar::new(&mut prog, "phi", c.n, c.k);
    let p = prog.scalar("p");
    build_power_soc(&mut prog, &phi, &AffExpr::constant(instance.power(m).sqrt()));
    let mut rest: Vec<AffExpr> = phi.real_parts().iter().map(|e| e.scaled(2.0)).collect();
    rest.push(AffExpr::var(p).plus_const(-1.0));
    prog.add_soc(AffExpr::var(p).plus_const(1.0), rest);
    let mut objective = AffExpr::var(p);

    let mut bound = |prog: &mut ConicProgram, name: String, link: usize, cap: f64, sign: f64| -> (AffExpr, Option<(usize, Var)>) {
        match betas {
            Betas::Fixed(v) => (AffExpr::constant(v[link]), None),
            Betas::Priced(lambda) => {
                let b = prog.scalar(&name);
                prog.add_le(AffExpr::zero(), AffExpr::var(b));
                prog.add_le(AffExpr::var(b), AffExpr::constant(cap));
                objective.add_term(b, sign * lambda[link]);
                (AffExpr::var(b), Some((link, b)))
            }
        }
    };

    let mut recv_vars = Vec::new();
    let mut intf_vars = Vec::new();
    for k in 0..c.k {
        let h = instance.estimate(m, m, k);
        let eps = instance.radius(m, m, k);
        let t = AffExpr::var(prog.scalar(&format!("t{k}")));
        build_soc_own_channel(&mut prog, h, eps, a, &t, &phi.column(k));
        let mut es = Vec::new();
        if c.k > 1 {
            let e = AffExpr::var(prog.scalar(&format!("e{k}")));
            let others: Vec<usize> = (0..c.k).filter(|&q| q != k).collect();
            build_s_lemma_lmi(&mut prog, h, &phi.select_columns(&others), None, eps, &e, LmiForm::Norm);
            es.push(e);
        }
        for n in (0..c.m).filter(|&n| n != m) {
            let link = c.link_index(m, n, k);
            let (e, v) = bound(&mut prog, format!("recv{n}.{k}"), link, beta_cap(instance, m, n, k), 1.0);
            recv_vars.extend(v);
            es.push(e);
        }
        es.push(AffExpr::constant(1.0));
        prog.add_soc(t, es);
    }
    for n in (0..c.m).filter(|&n| n != m) {
        for j in 0..c.k {
            let link = c.link_index(n, m, j);
            let (e, v) = bound(&mut prog, format!("intf{n}.{j}"), link, beta_cap(instance, n, m, j), -1.0);
            intf_vars.extend(v);
            build_s_lemma_lmi(&mut prog, instance.estimate(n, m, j), &phi.as_expr(), None, instance.radius(n, m, j), &e, LmiForm::Norm);
        }
    }
    prog.minimize(objective);
    let r = solve(&prog, tol);
    if r.status != SolveStatus::Optimal {
        return Err(r.status);
    }
    let read = |vars: Vec<(usize, Var)>| vars.into_iter().map(|(l, v)| (l, r.value(v).max(0.0))).collect();
    Ok(CellResult { phi: phi.value(&r.x), recv: read(recv_vars), intf: read(intf_vars) })
}

fn consensus_residual(instance: &NetworkInstance, recv: &[f64], intf: &[f64]) -> f64 {
    let c = instance.config();
    cross_links(instance).map(|(m, n, k)| (recv[c.link_index(m, n, k)] - intf[c.link_index(m, n, k)]).abs()).fold(0.0, f64::max)
}

/// Subgradient iterations on the consensus multipliers followed by the
/// forced-equality re-solve. `state` carries multipliers in and out, so a
/// bisection can warm start successive probes.
pub fn dual_feasibility_check_from(instance: &NetworkInstance, a: f64, opts: &DualOptions, mut state: DualState) -> Result<DualOutcome> {
    if !(a >= 0.0) || !a.is_finite() {
        return Err(Error::InvalidConfig(format!("SINR target must be finite and non-negative, got {a}")));
    }
    let c = instance.config();
    let links = c.links();
    if state.lambda.len() != links {
        return Err(Error::ShapeMismatch(format!("expected {links} multipliers, got {}", state.lambda.len())));
    }
    let scale = instance.powers().iter().sum::<f64>() / c.m as f64;
    let mut log = EventLog::new();
    let mut avg: Option<(Vec<f64>, Vec<f64>, usize)> = None;
    let mut last_phis: Vec<CMatrix> = Vec::new();
    state.residual_trace.clear();
    for iter in 1..=opts.max_iters.max(1) {
        let lambda = state.lambda.clone();
        let results: Vec<_> =
            (0..c.m).into_par_iter().map(|m| solve_cell(instance, m, a, &Betas::Priced(&lambda), &opts.tolerances)).collect();
        let mut cells = Vec::with_capacity(c.m);
        for (m, r) in results.into_iter().enumerate() {
            match r {
                Ok(cell) => cells.push(cell),
                Err(status) => {
                    debug!("dual probe a = {a:.6e}: cell {m} subproblem {status:?} at iteration {iter}");
                    state.iterations = iter;
                    return Ok(DualOutcome { feasible: false, culprit: Some(m), precoders: None, state, log });
                }
            }
        }
        for (m, cell) in cells.iter().enumerate() {
            for &(l, v) in &cell.recv {
                state.beta_recv[l] = v;
                let (mm, n, k) = (m, n_of(c, l), k_of(c, l));
                log.push(iter, Message::BetaExchange { from: m, k, m: mm, n, value: v });
            }
            for &(l, v) in &cell.intf {
                state.beta_intf[l] = v;
                log.push(iter, Message::BetaExchange { from: m, k: k_of(c, l), m: m_of(c, l), n: m, value: v });
            }
        }
        last_phis = cells.into_iter().map(|cell| cell.phi).collect();
        state.mu = opts.step.at(iter, scale);
        for (m, n, k) in cross_links(instance) {
            let l = c.link_index(m, n, k);
            state.lambda[l] += state.mu * (state.beta_recv[l] - state.beta_intf[l]);
        }
        if opts.averaging_start.is_some_and(|s| iter >= s) {
            let (r, i, cnt) = avg.get_or_insert_with(|| (vec![0.0; links], vec![0.0; links], 0));
            *cnt += 1;
            let w = 1.0 / *cnt as f64;
            for l in 0..links {
                r[l] += w * (state.beta_recv[l] - r[l]);
                i[l] += w * (state.beta_intf[l] - i[l]);
            }
        }
        state.residual = consensus_residual(instance, &state.beta_recv, &state.beta_intf);
        let avg_residual = avg.as_ref().map_or(f64::INFINITY, |(r, i, _)| consensus_residual(instance, r, i));
        state.residual_trace.push(state.residual);
        state.iterations = iter;
        if state.residual.min(avg_residual) < opts.consensus_tol {
            break;
        }
    }
    let (recv, intf) = match &avg {
        Some((r, i, _)) if consensus_residual(instance, r, i) < state.residual => (r.clone(), i.clone()),
        _ => (state.beta_recv.clone(), state.beta_intf.clone()),
    };
    // The last iterate is certified exactly; it stands in whenever the
    // forced-equality re-solve is skipped or fails.
    let last = PrecoderSet::new(last_phis)?;
    let last_ok = min_sinr_lower_bound(instance, &last) >= a * (1.0 - opts.certify_slack);
    let fallback = |culprit: Option<usize>, state: DualState, log: EventLog| DualOutcome {
        feasible: last_ok,
        culprit: if last_ok { None } else { culprit },
        precoders: last_ok.then(|| last.clone()),
        state,
        log,
    };
    if !opts.force_equality {
        return Ok(fallback(None, state, log));
    }
    let fixed: Vec<f64> = recv.iter().zip(&intf).map(|(r, i)| 0.5 * (r + i)).collect();
    let results: Vec<_> = (0..c.m).into_par_iter().map(|m| solve_cell(instance, m, a, &Betas::Fixed(&fixed), &opts.tolerances)).collect();
    let mut phis = Vec::with_capacity(c.m);
    for (m, r) in results.into_iter().enumerate() {
        match r {
            Ok(cell) => phis.push(cell.phi),
            Err(status) => {
                debug!("dual probe a = {a:.6e}: forced-equality re-solve of cell {m} ended with {status:?}");
                return Ok(fallback(Some(m), state, log));
            }
        }
    }
    Ok(DualOutcome { feasible: true, culprit: None, precoders: Some(PrecoderSet::new(phis)?), state, log })
}

fn m_of(c: crate::instance::NetworkConfig, link: usize) -> usize {
    link / (c.m * c.k)
}

fn n_of(c: crate::instance::NetworkConfig, link: usize) -> usize {
    (link / c.k) % c.m
}

fn k_of(c: crate::instance::NetworkConfig, link: usize) -> usize {
    link % c.k
}

/// Decides whether the common target `a` is reachable, starting from zero multipliers.
pub fn dual_feasibility_check(instance: &NetworkInstance, a: f64, opts: &DualOptions) -> Result<DualOutcome> {
    dual_feasibility_check_from(instance, a, opts, DualState::new(instance))
}

#[derive(Debug, Clone, PartialEq)]
pub struct DistributedSolution {
    pub a_star: f64,
    pub precoders: PrecoderSet,
    pub trace: BisectionTrace,
    /// Subgradient iterations summed over all probes.
    pub iterations: usize,
    /// Message log of the last feasible probe.
    pub log: EventLog,
}

impl DistributedSolution {
    pub fn min_rate(&self) -> f64 {
        self.a_star.max(0.0).ln_1p()
    }
}

/// Bisection over the common SINR target with the dual feasibility check
/// as the oracle. Multipliers carry over between probes.
pub fn distributed_maxmin(instance: &NetworkInstance, delta: f64) -> Result<DistributedSolution> {
    distributed_maxmin_with(instance, delta, &DualOptions::default())
}

pub fn distributed_maxmin_with(instance: &NetworkInstance, delta: f64, opts: &DualOptions) -> Result<DistributedSolution> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::InvalidConfig(format!("bisection tolerance must lie in (0, 1), got {delta}")));
    }
    let ceiling = interference_free_ceiling(instance);
    let (mut lo, mut hi) = (0.0, ceiling);
    let mut steps = Vec::new();
    let mut best: Option<(PrecoderSet, EventLog)> = None;
    let mut lambda = DualState::new(instance).lambda;
    let mut iterations = 0;
    while ceiling > 0.0 && hi - lo > delta * ceiling {
        let a = 0.5 * (lo + hi);
        let state = DualState { lambda: lambda.clone(), ..DualState::new(instance) };
        let out = dual_feasibility_check_from(instance, a, opts, state)?;
        iterations += out.state.iterations;
        if out.culprit.is_none() || out.feasible {
            lambda = out.state.lambda.clone();
        }
        let b = out.total_power();
        if out.feasible {
            lo = a;
            best = Some((out.precoders.expect("feasible outcomes carry precoders"), out.log));
        } else {
            hi = a;
        }
        steps.push(BisectionStep { a, a_min: lo, a_max: hi, b });
    }
    let degenerate = best.is_none();
    let (precoders, log) = best.unwrap_or_else(|| (PrecoderSet::matched_filter(instance), EventLog::new()));
    // Report what the returned design certifies, which can sit just below `lo`.
    let a_star = if degenerate { 0.0 } else { min_sinr_lower_bound(instance, &precoders) };
    Ok(DistributedSolution { a_star, precoders, trace: BisectionTrace { steps, a_star, delta, degenerate }, iterations, log })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instance::{sample_instance, NetworkConfig, PowerSpec, RadiiSpec, WeightSpec};
    use crate::maxmin::{maxmin_via_power, min_sinr_lower_bound, power_opt_multi_with, PowerObjective, PowerOptions, PowerOutcome};

    fn random(m: usize, k: usize, n: usize, eps: f64, seed: u64) -> NetworkInstance {
        let cfg = NetworkConfig::new(m, k, n).unwrap();
        sample_instance(cfg, &RadiiSpec::Uniform(eps), &PowerSpec::UniformDb(10.0), &WeightSpec::Uniform(1.0), seed).unwrap()
    }

    #[test]
    fn link_index_round_trip() {
        let c = NetworkConfig::new(3, 2, 2).unwrap();
        for (m, n, k) in (0..3).flat_map(|m| (0..3).flat_map(move |n| (0..2).map(move |k| (m, n, k)))) {
            let l = c.link_index(m, n, k);
            assert_eq!((m_of(c, l), n_of(c, l), k_of(c, l)), (m, n, k));
        }
    }

    #[test]
    fn consensus_power_matches_centralized() {
        let inst = random(2, 1, 2, 0.05, 4);
        let a = 0.5 * maxmin_via_power(&inst, 1e-3).unwrap().a_star;
        let central =
            match power_opt_multi_with(&inst, a, &PowerOptions { objective: PowerObjective::SumPower, ..Default::default() }).unwrap() {
                PowerOutcome::Feasible { b, .. } => b,
                other => panic!("{other:?}"),
            };
        let opts = DualOptions { max_iters: 400, consensus_tol: 1e-5, ..DualOptions::default() };
        let out = dual_feasibility_check(&inst, a, &opts).unwrap();
        assert!(out.feasible);
        let p = out.total_power().unwrap();
        assert!((p - central).abs() <= 1e-2 * central, "dual {p} vs centralized {central}");
        let prec = out.precoders.unwrap();
        assert!(min_sinr_lower_bound(&inst, &prec) >= a * (1.0 - 1e-5));
    }

    #[test]
    fn frozen_multipliers_keep_copies_apart() {
        let inst = random(2, 1, 2, 0.05, 4);
        let a = 0.5 * maxmin_via_power(&inst, 1e-3).unwrap().a_star;
        let opts = DualOptions { step: StepSize::Constant(0.0), max_iters: 5, averaging_start: None, ..DualOptions::default() };
        let out = dual_feasibility_check(&inst, a, &opts).unwrap();
        assert!(out.state.lambda.iter().all(|&l| l == 0.0));
        assert_eq!(out.state.iterations, 5);
        let t = &out.state.residual_trace;
        assert!(t.iter().all(|&r| (r - t[0]).abs() <= 1e-6 * (1.0 + t[0])));
    }

    #[test]
    fn infeasible_target_names_a_cell() {
        let inst = random(2, 1, 2, 0.05, 4);
        let out = dual_feasibility_check(&inst, 2.0 * interference_free_ceiling(&inst), &DualOptions::default()).unwrap();
        assert!(!out.feasible);
        assert!(out.culprit.is_some());
    }

    #[test]
    fn distributed_bisection_close_to_centralized() {
        let inst = random(2, 1, 2, 0.1, 7);
        let central = maxmin_via_power(&inst, 1e-3).unwrap();
        let dist = distributed_maxmin(&inst, 1e-3).unwrap();
        assert!(dist.precoders.respects_budget(&inst, 1e-6));
        assert!(dist.a_star <= central.a_star * (1.0 + 2e-3));
        assert!(dist.a_star >= 0.95 * central.a_star, "{} vs {}", dist.a_star, central.a_star);
        assert!(min_sinr_lower_bound(&inst, &dist.precoders) >= dist.a_star * (1.0 - 1e-5));
    }
}
