//! Limited-cooperation max-min design.
//!
//! Two schemes are simulated in-process over an ordered, lossless message
//! log. In the unilateral scheme each BS, in turn, re-optimizes its own
//! precoder against the interference covariances `W_n = Φ_nΦ_nᴴ` broadcast
//! by the others; the proposal is committed unless some other BS would see
//! its local worst-case SINR bound drop. The dual scheme ([`dual`]) splits the
//! centralized power problem with local copies of the interference bounds
//! and drives the copies together with subgradient steps on their multipliers.

pub mod dual;
pub mod messages;

use log::{debug, warn};
use serde::Serialize;

use crate::conic::{
    build_power_soc, build_s_lemma_lmi, build_soc_own_channel, solve, AffExpr, CMatVar, ConicProgram, LmiForm, SolveStatus, Tolerances,
};
use crate::error::{Error, Result};
use crate::instance::{NetworkInstance, PrecoderSet};
use crate::linalg::{norm, psd_factor, CMatrix, C64};
use crate::maxmin::{BisectionStep, BisectionTrace};
use crate::worst_case::{gain_extrema, max_quadratic_over_ball};

pub use dual::{
    distributed_maxmin, distributed_maxmin_with, dual_feasibility_check, dual_feasibility_check_from, DistributedSolution, DualOptions,
    DualOutcome, DualState, StepSize,
};
pub use messages::{Envelope, EventLog, Message, Proposal, WireMatrix};

/// Interference-plus-noise seen by each user of cell `m` from the other
/// cells, given factors `L_n` with `L_nL_nᴴ = W_n`. Entry `m` of `factors` is ignored.
fn inter_cell_interference(instance: &NetworkInstance, m: usize, factors: &[CMatrix]) -> Vec<f64> {
    let c = instance.config();
    (0..c.k)
        .map(|k| {
            (0..c.m)
                .filter(|&n| n != m)
                .map(|n| max_quadratic_over_ball(instance.estimate(m, n, k), &factors[n], instance.radius(m, n, k)))
                .sum()
        })
        .collect()
}

/// Smallest certified SINR lower bound in cell `m` for own precoder `phi`
/// and the broadcast factors of the other cells.
pub fn cell_min_sinr(instance: &NetworkInstance, m: usize, phi: &CMatrix, factors: &[CMatrix]) -> f64 {
    let c = instance.config();
    let inter = inter_cell_interference(instance, m, factors);
    (0..c.k)
        .map(|k| {
            let h = instance.estimate(m, m, k);
            let eps = instance.radius(m, m, k);
            let w = phi.column(k).into_owned();
            let (num, _) = gain_extrema(h, &w, eps);
            let intra = max_quadratic_over_ball(h, &phi.clone().remove_column(k), eps);
            num / (1.0 + intra + inter[k])
        })
        .fold(f64::INFINITY, f64::min)
}

/// Result of one BS's local max-min update.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalSolution {
    /// Certified common SINR bound of the cell's users.
    pub a_star: f64,
    pub precoder: CMatrix,
    pub trace: BisectionTrace,
}

fn local_power(instance: &NetworkInstance, m: usize, inter: &[f64], a: f64, tol: &Tolerances) -> Option<(f64, CMatrix)> {
    let c = instance.config();
    let mut prog = ConicProgram::new();
    let phi = CMatVar::new(&mut prog, "phi", c.n, c.k);
    let b = prog.scalar("b");
    for k in 0..c.k {
        let t = AffExpr::var(prog.scalar(&format!("t{k}")));
        let h = instance.estimate(m, m, k);
        let eps = instance.radius(m, m, k);
        build_soc_own_channel(&mut prog, h, eps, a, &t, &phi.column(k));
        let mut rest = Vec::new();
        if c.k > 1 {
            let e = AffExpr::var(prog.scalar(&format!("e{k}")));
            let others: Vec<usize> = (0..c.k).filter(|&q| q != k).collect();
            build_s_lemma_lmi(&mut prog, h, &phi.select_columns(&others), None, eps, &e, LmiForm::Norm);
            rest.push(e);
        }
        rest.push(AffExpr::constant((1.0 + inter[k]).sqrt()));
        prog.add_soc(t, rest);
    }
    build_power_soc(&mut prog, &phi, &AffExpr::term(b, instance.power(m).sqrt()));
    prog.minimize(AffExpr::var(b));
    let r = solve(&prog, tol);
    match r.status {
        SolveStatus::Optimal => Some((r.value(b).max(0.0), phi.value(&r.x))),
        SolveStatus::Infeasible => None,
        s => {
            warn!("local power SDP of cell {m} at a = {a:.6e} ended with {s:?}");
            None
        }
    }
}

/// Robust max-min update of cell `m` with the other cells' covariances
/// fixed. `interference[n]` is `W_n`; entry `m` is ignored.
pub fn local_maxmin_update(instance: &NetworkInstance, m: usize, interference: &[CMatrix], delta: f64) -> Result<LocalSolution> {
    let c = instance.config();
    if interference.len() != c.m {
        return Err(Error::ShapeMismatch(format!("expected {} covariances, got {}", c.m, interference.len())));
    }
    let factors: Vec<CMatrix> = interference.iter().map(psd_factor).collect();
    local_update_from_factors(instance, m, &factors, delta, &Tolerances::default())
}

fn local_update_from_factors(
    instance: &NetworkInstance,
    m: usize,
    factors: &[CMatrix],
    delta: f64,
    tol: &Tolerances,
) -> Result<LocalSolution> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::InvalidConfig(format!("bisection tolerance must lie in (0, 1), got {delta}")));
    }
    let c = instance.config();
    let inter = inter_cell_interference(instance, m, factors);
    let ceiling = (0..c.k)
        .map(|k| {
            let g = (norm(instance.estimate(m, m, k)) - instance.radius(m, m, k)).max(0.0);
            instance.power(m) * g * g
        })
        .fold(f64::INFINITY, f64::min);
    let (mut lo, mut hi) = (0.0, ceiling);
    let mut best: Option<CMatrix> = None;
    let mut steps = Vec::new();
    while ceiling > 0.0 && hi - lo > delta * ceiling {
        let a = 0.5 * (lo + hi);
        let out = local_power(instance, m, &inter, a, tol);
        let b = out.as_ref().map(|(b, _)| *b);
        match out {
            Some((b, phi)) if b <= 1.0 => {
                lo = a;
                best = Some(if b > 0.0 { phi * C64::new(1.0 / b, 0.0) } else { phi });
            }
            _ => hi = a,
        }
        steps.push(BisectionStep { a, a_min: lo, a_max: hi, b });
    }
    let degenerate = best.is_none();
    let precoder = best.unwrap_or_else(|| PrecoderSet::matched_filter(instance).matrix(m).clone());
    let a_star = if degenerate { 0.0 } else { lo };
    Ok(LocalSolution { a_star, precoder, trace: BisectionTrace { steps, a_star, delta, degenerate } })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Alg2Options {
    pub delta: f64,
    pub max_rounds: usize,
    /// A proposal must raise the proposer's own metric by this relative amount.
    pub improve_tol: f64,
    /// Relative slack below which a drop in a neighbour's metric is ignored.
    pub veto_tol: f64,
    pub tolerances: Tolerances,
}

impl Default for Alg2Options {
    fn default() -> Self {
        Self { delta: 1e-3, max_rounds: 100, improve_tol: 1e-6, veto_tol: 1e-9, tolerances: Tolerances::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CommitRecord {
    pub round: usize,
    pub cell: usize,
    /// Per-cell minimum SINR bounds before and after the commit.
    pub before: Vec<f64>,
    pub after: Vec<f64>,
}

impl CommitRecord {
    pub fn network_min_after(&self) -> f64 {
        self.after.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Alg2Result {
    pub precoders: PrecoderSet,
    pub log: EventLog,
    pub commits: Vec<CommitRecord>,
    /// Network minimum SINR bound after initialization and after every commit.
    pub network_trace: Vec<f64>,
    pub rounds: usize,
}

impl Alg2Result {
    pub fn min_sinr(&self) -> f64 {
        *self.network_trace.last().expect("trace starts non-empty")
    }

    pub fn min_rate(&self) -> f64 {
        self.min_sinr().max(0.0).ln_1p()
    }
}

/// Shared protocol state: committed precoders, the factors every BS
/// holds for the others, and each cell's current metric.
struct Network<'a> {
    instance: &'a NetworkInstance,
    precoders: PrecoderSet,
    factors: Vec<CMatrix>,
    metrics: Vec<f64>,
    log: EventLog,
}

impl<'a> Network<'a> {
    fn init(instance: &'a NetworkInstance) -> Self {
        let precoders = PrecoderSet::matched_filter(instance);
        let mut log = EventLog::new();
        let c = instance.config();
        let mut factors = Vec::with_capacity(c.m);
        for m in 0..c.m {
            let w = precoders.gram(m);
            log.push(0, Message::BroadcastW { from: m, w: WireMatrix::from_matrix(&w) });
            factors.push(psd_factor(&w));
        }
        let metrics = (0..c.m).map(|m| cell_min_sinr(instance, m, precoders.matrix(m), &factors)).collect();
        Self { instance, precoders, factors, metrics, log }
    }

    fn network_min(&self) -> f64 {
        self.metrics.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Local update of cell `m`; `None` unless it strictly improves the cell's own metric.
    fn candidate(&self, m: usize, opts: &Alg2Options) -> Result<Option<(CMatrix, CMatrix)>> {
        let sol = local_update_from_factors(self.instance, m, &self.factors, opts.delta, &opts.tolerances)?;
        if sol.trace.degenerate {
            return Ok(None);
        }
        let own = cell_min_sinr(self.instance, m, &sol.precoder, &self.factors);
        if own <= self.metrics[m] * (1.0 + opts.improve_tol) + f64::MIN_POSITIVE {
            return Ok(None);
        }
        let w = &sol.precoder * sol.precoder.adjoint();
        Ok(Some((sol.precoder, w)))
    }

    /// Broadcasts a proposal and collects vetoes. Returns the metrics every
    /// cell would have after the commit and whether anyone objected.
    fn propose(&mut self, round: usize, m: usize, w: &CMatrix, phi: &CMatrix, opts: &Alg2Options) -> (Vec<f64>, bool) {
        self.log.push(round, Message::BroadcastW { from: m, w: WireMatrix::from_matrix(w) });
        let mut factors = self.factors.clone();
        factors[m] = psd_factor(w);
        let mut vetoed = false;
        let mut after = self.metrics.clone();
        for n in 0..self.metrics.len() {
            let own = if n == m { phi } else { self.precoders.matrix(n) };
            after[n] = cell_min_sinr(self.instance, n, own, &factors);
            if n != m && after[n] < self.metrics[n] * (1.0 - opts.veto_tol) {
                self.log.push(round, Message::Error { from: n, to: m });
                vetoed = true;
            }
        }
        (after, vetoed)
    }

    fn commit(&mut self, round: usize, m: usize, phi: CMatrix, w: &CMatrix, after: Vec<f64>) -> CommitRecord {
        self.log.push(round, Message::Update { from: m });
        self.factors[m] = psd_factor(w);
        self.precoders.set_matrix(m, phi);
        let before = std::mem::replace(&mut self.metrics, after.clone());
        CommitRecord { round, cell: m, before, after }
    }
}

/// Round-robin unilateral updates with veto. Stops after a full round without a commit.
pub fn run_algorithm2(instance: &NetworkInstance, delta: f64) -> Result<Alg2Result> {
    run_algorithm2_with(instance, &Alg2Options { delta, ..Alg2Options::default() })
}

pub fn run_algorithm2_with(instance: &NetworkInstance, opts: &Alg2Options) -> Result<Alg2Result> {
    let mut net = Network::init(instance);
    let mut trace = vec![net.network_min()];
    let mut commits = Vec::new();
    let mut rounds = 0;
    for round in 1..=opts.max_rounds {
        rounds = round;
        let mut any = false;
        for m in 0..instance.config().m {
            let Some((phi, w)) = net.candidate(m, opts)? else { continue };
            let (after, vetoed) = net.propose(round, m, &w, &phi, opts);
            if !vetoed {
                commits.push(net.commit(round, m, phi, &w, after));
                trace.push(net.network_min());
                any = true;
                debug!("round {round}: cell {m} committed, network min {:.6e}", net.network_min());
            }
        }
        if !any {
            break;
        }
    }
    Ok(Alg2Result { precoders: net.precoders, log: net.log, commits, network_trace: trace, rounds })
}

/// Greedy variant: every BS proposes each round and only the unvetoed
/// proposal with the best resulting network minimum commits.
pub fn run_algorithm2_greedy(instance: &NetworkInstance, delta: f64) -> Result<Alg2Result> {
    run_algorithm2_greedy_with(instance, &Alg2Options { delta, ..Alg2Options::default() })
}

pub fn run_algorithm2_greedy_with(instance: &NetworkInstance, opts: &Alg2Options) -> Result<Alg2Result> {
    let mut net = Network::init(instance);
    let mut trace = vec![net.network_min()];
    let mut commits = Vec::new();
    let mut rounds = 0;
    for round in 1..=opts.max_rounds {
        rounds = round;
        let mut bids = Vec::new();
        for m in 0..instance.config().m {
            let Some((phi, w)) = net.candidate(m, opts)? else { continue };
            let (after, vetoed) = net.propose(round, m, &w, &phi, opts);
            if !vetoed {
                bids.push((m, phi, w, after));
            }
        }
        let best = bids.into_iter().max_by(|a, b| {
            let fa = a.3.iter().copied().fold(f64::INFINITY, f64::min);
            let fb = b.3.iter().copied().fold(f64::INFINITY, f64::min);
            fa.total_cmp(&fb).then(b.0.cmp(&a.0))
        });
        let Some((m, phi, w, after)) = best else { break };
        commits.push(net.commit(round, m, phi, &w, after));
        trace.push(net.network_min());
    }
    Ok(Alg2Result { precoders: net.precoders, log: net.log, commits, network_trace: trace, rounds })
}
