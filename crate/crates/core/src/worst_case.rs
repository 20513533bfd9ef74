//! Worst-case SINR, MSE and SLINR evaluation for fixed precoders.
//!
//! Exact values exist for single-user cells and for every quantity whose
//! uncertainty decouples per channel (MSE, SLINR, the interference bounds);
//! the multi-user worst-case SINR is only bracketed by
//! [`sinr_lower_bound`] and [`sinr_upper_bound`], with
//! [`oracle_sinr_estimate`] searching for bad perturbations in between.

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::instance::{sample_in_ball, BallSampling, EqualizerSet, NetworkInstance, PrecoderSet};
use crate::linalg::{hermitian_defect, hermitian_eigen, norm, norm_sqr, row_times, row_times_matrix, CMatrix, CVector, C64};

/// Extrema of `|(h̃+Δ)w|²` over the ellipsoid `ΔQΔᴴ ≤ ε²`:
/// `((|h̃w| − ε√(wᴴQ⁻¹w))⁺)²` and `(|h̃w| + ε√(wᴴQ⁻¹w))²`.
/// With `Q = I` the ellipsoid is the ball `‖Δ‖ ≤ ε`.
pub fn robust_gain_extrema(h: &CVector, w: &CVector, eps: f64, q: &CMatrix) -> Result<(f64, f64)> {
    let n = h.len();
    if w.len() != n || q.shape() != (n, n) {
        return Err(Error::ShapeMismatch("h, w and Q must agree in dimension".into()));
    }
    let scale = 1.0 + q.iter().map(|z| z.norm()).fold(0.0, f64::max);
    if hermitian_defect(q) > 1e-12 * scale {
        return Err(Error::NotPositiveDefinite);
    }
    // Complex Cholesky happily takes square roots of negative pivots, so check the spectrum.
    let (eig, _) = hermitian_eigen(q);
    if !(eig[0] > 1e-14 * scale) {
        return Err(Error::NotPositiveDefinite);
    }
    let chol = q.clone().cholesky().ok_or(Error::NotPositiveDefinite)?;
    let qinv_w = chol.solve(w);
    let quad = w.iter().zip(qinv_w.iter()).map(|(a, b)| a.conj() * b).sum::<C64>().re.max(0.0);
    let s = row_times(h, w).norm();
    let r = eps * quad.sqrt();
    let low = (s - r).max(0.0);
    Ok((low * low, (s + r) * (s + r)))
}

/// Ball version of [`robust_gain_extrema`] with `Q = I`.
pub fn gain_extrema(h: &CVector, w: &CVector, eps: f64) -> (f64, f64) {
    let s = row_times(h, w).norm();
    let r = eps * norm(w);
    let low = (s - r).max(0.0);
    (low * low, (s + r) * (s + r))
}

/// Exact `max_{‖Δ‖≤ε} ‖(h̃+Δ)A‖²`.
pub fn max_quadratic_over_ball(h: &CVector, a: &CMatrix, eps: f64) -> f64 {
    if a.ncols() == 0 {
        return 0.0;
    }
    if a.ncols() == 1 {
        let w = a.column(0).into_owned();
        return gain_extrema(h, &w, eps).1;
    }
    worst_perturbation(h, a, None, eps).0
}

/// Exact `max_{‖Δ‖≤ε} ‖(h̃+Δ)A − r‖²` together with a maximizing `Δ`.
///
/// The objective is a convex quadratic in `Δ`, so the maximum sits on the
/// sphere. In the eigenbasis of `G = AAᴴ` the stationarity condition gives
/// `y_i = β_i / (ν − σ_i)` with `ν ≥ σ_max` fixed by the secular equation
/// `Σ |β_i|²/(ν − σ_i)² = ε²`, which is solved by log-space bisection on
/// `ν − σ_max`.
pub fn worst_perturbation(h: &CVector, a: &CMatrix, r: Option<&CVector>, eps: f64) -> (f64, CVector) {
    let n = h.len();
    let ha = row_times_matrix(h, a);
    let resid = match r {
        Some(r) => &ha - r,
        None => ha.clone(),
    };
    let c0 = norm_sqr(&resid);
    if eps == 0.0 || a.ncols() == 0 {
        return (c0, CVector::zeros(n));
    }
    let g = a * a.adjoint();
    // b = G h̃ᴴ − A rᴴ = A (h̃A − r)ᴴ
    let b = a * resid.map(|z| z.conj());
    let (sig, u) = hermitian_eigen(&g);
    let beta: Vec<C64> = (0..n).map(|i| u.column(i).iter().zip(b.iter()).map(|(ui, bi)| ui.conj() * bi).sum()).collect();
    let smax = sig[n - 1];
    let cluster_tol = 1e-12 * (1.0 + smax.abs());
    let top: Vec<usize> = (0..n).filter(|&i| smax - sig[i] <= cluster_tol).collect();
    let beta_top: f64 = top.iter().map(|&i| beta[i].norm_sqr()).sum();
    let bnorm2: f64 = beta.iter().map(|z| z.norm_sqr()).sum();
    let e2 = eps * eps;

    let phi = |d: f64| -> f64 {
        (0..n)
            .map(|i| {
                let gap = if top.contains(&i) { d } else { smax - sig[i] + d };
                beta[i].norm_sqr() / (gap * gap)
            })
            .sum()
    };

    let tiny = 1e-30 * (1.0 + bnorm2);
    if beta_top <= tiny {
        let rest_val: f64 = (0..n).filter(|i| !top.contains(i)).map(|i| beta[i].norm_sqr() / ((smax - sig[i]) * (smax - sig[i]))).sum();
        if rest_val <= e2 {
            // Hard case: ν = σ_max, the leftover radius goes into the top eigenspace.
            let mut value = c0;
            let mut y = vec![C64::new(0.0, 0.0); n];
            for i in 0..n {
                if top.contains(&i) {
                    continue;
                }
                let gap = smax - sig[i];
                y[i] = beta[i] / gap;
                value += sig[i] * beta[i].norm_sqr() / (gap * gap) + 2.0 * beta[i].norm_sqr() / gap;
            }
            let leftover = (e2 - rest_val).max(0.0);
            value += smax * leftover;
            y[top[0]] = C64::new(leftover.sqrt(), 0.0);
            return (value, to_delta(&u, &y));
        }
    }

    // φ is decreasing in d; bracket the root of φ(d) = ε².
    let mut hi = bnorm2.sqrt() / eps;
    if !(hi > 0.0) {
        hi = 1.0;
    }
    while phi(hi) > e2 {
        hi *= 2.0;
    }
    let mut lo = if beta_top > tiny { beta_top.sqrt() / eps } else { hi };
    while phi(lo) < e2 && lo > 1e-300 {
        lo *= 0.5;
    }
    lo = lo.min(hi);
    for _ in 0..200 {
        let mid = (lo * hi).sqrt();
        if !(mid > lo && mid < hi) {
            break;
        }
        if phi(mid) > e2 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let d = (lo * hi).sqrt();
    let mut value = c0;
    let mut y = vec![C64::new(0.0, 0.0); n];
    for i in 0..n {
        let gap = if top.contains(&i) { d } else { smax - sig[i] + d };
        y[i] = beta[i] / gap;
        value += sig[i] * beta[i].norm_sqr() / (gap * gap) + 2.0 * beta[i].norm_sqr() / gap;
    }
    (value, to_delta(&u, &y))
}

/// `Δ = (U y)ᴴ`, returned entrywise as a row vector.
fn to_delta(u: &CMatrix, y: &[C64]) -> CVector {
    let d = u * DVector::from_column_slice(y);
    d.map(|z| z.conj())
}

fn require_single(instance: &NetworkInstance) -> Result<()> {
    let k = instance.config().k;
    if k != 1 {
        return Err(Error::RequiresSingleUser(k));
    }
    Ok(())
}

/// Exact worst-case SINR of cell `m` when every cell serves one user.
pub fn worst_case_sinr_single(instance: &NetworkInstance, precoders: &PrecoderSet, m: usize) -> Result<f64> {
    require_single(instance)?;
    let c = instance.config();
    let w = precoders.beam(m, 0);
    let (num, _) = gain_extrema(instance.estimate(m, m, 0), &w, instance.radius(m, m, 0));
    let mut den = 1.0;
    for n in 0..c.m {
        if n != m {
            den += gain_extrema(instance.estimate(m, n, 0), &precoders.beam(n, 0), instance.radius(m, n, 0)).1;
        }
    }
    Ok(num / den)
}

/// Worst-case interference-plus-noise bound used by the certified lower bound.
fn interference_bound(instance: &NetworkInstance, precoders: &PrecoderSet, m: usize, k: usize) -> f64 {
    let c = instance.config();
    let mut den = 1.0 + max_quadratic_over_ball(instance.estimate(m, m, k), &precoders.without_beam(m, k), instance.radius(m, m, k));
    for n in 0..c.m {
        if n != m {
            den += max_quadratic_over_ball(instance.estimate(m, n, k), precoders.matrix(n), instance.radius(m, n, k));
        }
    }
    den
}

/// Certified lower bound on the worst-case SINR of user `(m, k)`: the signal
/// and interference terms are worst-cased separately.
pub fn sinr_lower_bound(instance: &NetworkInstance, precoders: &PrecoderSet, m: usize, k: usize) -> f64 {
    let (num, _) = gain_extrema(instance.estimate(m, m, k), &precoders.beam(m, k), instance.radius(m, m, k));
    num / interference_bound(instance, precoders, m, k)
}

fn aligned_term(h: &CVector, w: &CVector, eps: f64) -> f64 {
    let p = norm(w);
    if p == 0.0 {
        return 0.0;
    }
    let s = row_times(h, w).norm() / p;
    (s + eps) * (s + eps) * p * p
}

/// Upper bound on the worst-case SINR obtained by fixing one adversarial
/// perturbation per channel (the strongest single interfering beam is
/// maximized, the signal term is bounded by `(‖h̃‖+ε)²‖w‖²`).
pub fn sinr_upper_bound(instance: &NetworkInstance, precoders: &PrecoderSet, m: usize, k: usize) -> f64 {
    let c = instance.config();
    let h = instance.estimate(m, m, k);
    let eps = instance.radius(m, m, k);
    let num = (norm(h) + eps).powi(2) * norm_sqr(&precoders.beam(m, k));
    let mut den = 1.0;
    den += (0..c.k).filter(|&q| q != k).map(|q| aligned_term(h, &precoders.beam(m, q), eps)).fold(0.0, f64::max);
    for n in 0..c.m {
        if n != m {
            let hn = instance.estimate(m, n, k);
            let en = instance.radius(m, n, k);
            den += (0..c.k).map(|q| aligned_term(hn, &precoders.beam(n, q), en)).fold(0.0, f64::max);
        }
    }
    num / den
}

/// Exact worst-case MSE of user `(m, k)` with equalizer `f > 0`.
pub fn worst_case_mse_with(instance: &NetworkInstance, precoders: &PrecoderSet, m: usize, k: usize, f: f64) -> Result<f64> {
    if !(f > 0.0) {
        return Err(Error::NonPositiveEqualizer(f));
    }
    let c = instance.config();
    let mut offset = CVector::zeros(c.k);
    offset[k] = C64::new(f, 0.0);
    let (own, _) = worst_perturbation(instance.estimate(m, m, k), precoders.matrix(m), Some(&offset), instance.radius(m, m, k));
    let mut total = own + 1.0;
    for n in 0..c.m {
        if n != m {
            total += max_quadratic_over_ball(instance.estimate(m, n, k), precoders.matrix(n), instance.radius(m, n, k));
        }
    }
    Ok(total / (f * f))
}

pub fn worst_case_mse(instance: &NetworkInstance, precoders: &PrecoderSet, equalizers: &EqualizerSet, m: usize, k: usize) -> Result<f64> {
    worst_case_mse_with(instance, precoders, m, k, equalizers.get(m, k))
}

/// Exact worst-case signal-to-leakage-plus-noise ratio of beam `(m, k)`.
pub fn worst_case_slinr(instance: &NetworkInstance, precoders: &PrecoderSet, m: usize, k: usize) -> f64 {
    slinr_of_beam(instance, &precoders.beam(m, k), m, k)
}

pub(crate) fn slinr_of_beam(instance: &NetworkInstance, w: &CVector, m: usize, k: usize) -> f64 {
    let c = instance.config();
    let (num, _) = gain_extrema(instance.estimate(m, m, k), w, instance.radius(m, m, k));
    let mut den = 1.0;
    for j in 0..c.k {
        if j != k {
            den += gain_extrema(instance.estimate(m, m, j), w, instance.radius(m, m, j)).1;
        }
    }
    for n in 0..c.m {
        if n != m {
            for l in 0..c.k {
                den += gain_extrema(instance.estimate(n, m, l), w, instance.radius(n, m, l)).1;
            }
        }
    }
    num / den
}

/// Sampling-oracle settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleOptions {
    pub samples: usize,
    pub descent_steps: usize,
    /// Initial projected-gradient step, relative to the largest radius.
    pub step: f64,
    /// Fraction of sampled perturbations placed on the sphere rather than inside.
    pub surface_bias: f64,
}

impl Default for OracleOptions {
    fn default() -> Self {
        Self { samples: 10_000, descent_steps: 50, step: 1e-2, surface_bias: 0.8 }
    }
}

/// Nominal SINR of user `(m, k)` under perturbations `deltas[n]` of its `M` incoming channels.
fn sinr_at(instance: &NetworkInstance, precoders: &PrecoderSet, m: usize, k: usize, deltas: &[CVector]) -> f64 {
    let c = instance.config();
    let mut den = 1.0;
    let mut sig = 0.0;
    for n in 0..c.m {
        let h = instance.estimate(m, n, k) + &deltas[n];
        let phi = precoders.matrix(n);
        for l in 0..c.k {
            let g = row_times(&h, &phi.column(l).into_owned()).norm_sqr();
            if n == m && l == k {
                sig = g;
            } else {
                den += g;
            }
        }
    }
    sig / den
}

fn sinr_gradient(instance: &NetworkInstance, precoders: &PrecoderSet, m: usize, k: usize, deltas: &[CVector]) -> (f64, Vec<CVector>) {
    let c = instance.config();
    let mut sig = 0.0;
    let mut den = 1.0;
    let mut gsig = vec![CVector::zeros(c.n); c.m];
    let mut gden = vec![CVector::zeros(c.n); c.m];
    for n in 0..c.m {
        let h = instance.estimate(m, n, k) + &deltas[n];
        let phi = precoders.matrix(n);
        for l in 0..c.k {
            let w = phi.column(l).into_owned();
            let hw = row_times(&h, &w);
            // ∇_Δ |(h̃+Δ)w|² = 2 (hw) w̄
            let grad = w.map(|z| z.conj() * hw * 2.0);
            if n == m && l == k {
                sig = hw.norm_sqr();
                gsig[n] += grad;
            } else {
                den += hw.norm_sqr();
                gden[n] += grad;
            }
        }
    }
    let val = sig / den;
    let grads = (0..c.m).map(|n| (&gsig[n] * C64::from(den) - &gden[n] * C64::from(sig)) / C64::from(den * den)).collect();
    (val, grads)
}

fn project(d: &mut CVector, eps: f64) {
    let r = norm(d);
    if r > eps {
        *d *= C64::from(if r > 0.0 { eps / r } else { 0.0 });
    }
}

fn descend(instance: &NetworkInstance, precoders: &PrecoderSet, m: usize, k: usize, start: Vec<CVector>, opts: &OracleOptions) -> f64 {
    let c = instance.config();
    let radii: Vec<f64> = (0..c.m).map(|n| instance.radius(m, n, k)).collect();
    let emax = radii.iter().cloned().fold(0.0, f64::max);
    let mut cur = start;
    let (mut val, mut grads) = sinr_gradient(instance, precoders, m, k, &cur);
    let mut step = opts.step * emax;
    for _ in 0..opts.descent_steps {
        let gnorm = grads.iter().map(norm_sqr).sum::<f64>().sqrt();
        if gnorm == 0.0 || step < 1e-14 * (1.0 + emax) {
            break;
        }
        let mut cand = cur.clone();
        for n in 0..c.m {
            cand[n] -= &grads[n] * C64::from(step / gnorm);
            project(&mut cand[n], radii[n]);
        }
        let v = sinr_at(instance, precoders, m, k, &cand);
        if v < val {
            cur = cand;
            let (nv, ng) = sinr_gradient(instance, precoders, m, k, &cur);
            val = nv;
            grads = ng;
            step *= 2.0;
        } else {
            step *= 0.5;
        }
    }
    val
}

/// Structured adversarial perturbations: the per-term maximizers used by the
/// lower and upper bounds. Any of them is a legal joint perturbation.
fn structured_candidates(instance: &NetworkInstance, precoders: &PrecoderSet, m: usize, k: usize) -> Vec<Vec<CVector>> {
    let c = instance.config();
    let n_ant = c.n;
    let align = |h: &CVector, w: &CVector, eps: f64, sign: f64| -> CVector {
        let p = norm(w);
        if p == 0.0 || eps == 0.0 {
            return CVector::zeros(n_ant);
        }
        let hw = row_times(h, w);
        let phase = if hw.norm() > 0.0 { hw / hw.norm() } else { C64::new(1.0, 0.0) };
        // Δ = ±ε e^{iθ} wᴴ/‖w‖ moves h̃w along its own phase.
        w.map(|z| z.conj() * phase * (sign * eps / p))
    };
    let mut others = vec![CVector::zeros(n_ant); c.m];
    let mut others_ub = vec![CVector::zeros(n_ant); c.m];
    for n in 0..c.m {
        if n == m {
            continue;
        }
        let h = instance.estimate(m, n, k);
        let eps = instance.radius(m, n, k);
        others[n] = worst_perturbation(h, precoders.matrix(n), None, eps).1;
        let best_q = (0..c.k)
            .max_by(|&a, &b| aligned_term(h, &precoders.beam(n, a), eps).total_cmp(&aligned_term(h, &precoders.beam(n, b), eps)))
            .unwrap_or(0);
        others_ub[n] = align(h, &precoders.beam(n, best_q), eps, 1.0);
    }
    let h = instance.estimate(m, m, k);
    let eps = instance.radius(m, m, k);
    let own_sig = align(h, &precoders.beam(m, k), eps, -1.0);
    let own_intf = worst_perturbation(h, &precoders.without_beam(m, k), None, eps).1;
    let own_ub = (0..c.k)
        .filter(|&q| q != k)
        .max_by(|&a, &b| aligned_term(h, &precoders.beam(m, a), eps).total_cmp(&aligned_term(h, &precoders.beam(m, b), eps)))
        .map(|q| align(h, &precoders.beam(m, q), eps, 1.0))
        .unwrap_or_else(|| CVector::zeros(n_ant));
    let mut out = Vec::new();
    for own in [own_sig, own_intf, own_ub.clone()] {
        let mut d = others.clone();
        d[m] = own;
        out.push(d);
    }
    let mut d = others_ub;
    d[m] = own_ub;
    out.push(d);
    out
}

/// Smallest SINR of user `(m, k)` found by searching joint perturbations.
///
/// The search starts from structured adversarial perturbations, then draws
/// `samples` random perturbations (sphere-biased); every new record is
/// refined by projected gradient descent. The result is an upper estimate of
/// the true worst case and, for a fixed seed, non-increasing in `samples`.
pub fn oracle_sinr_estimate_with(
    instance: &NetworkInstance,
    precoders: &PrecoderSet,
    m: usize,
    k: usize,
    seed: u64,
    opts: &OracleOptions,
) -> f64 {
    let c = instance.config();
    let radii: Vec<f64> = (0..c.m).map(|n| instance.radius(m, n, k)).collect();
    let zero = vec![CVector::zeros(c.n); c.m];
    let mut best = sinr_at(instance, precoders, m, k, &zero);
    if radii.iter().all(|&e| e == 0.0) {
        return best;
    }
    for cand in structured_candidates(instance, precoders, m, k) {
        best = best.min(sinr_at(instance, precoders, m, k, &cand));
        best = best.min(descend(instance, precoders, m, k, cand, opts));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..opts.samples {
        let deltas: Vec<CVector> = radii
            .iter()
            .map(|&e| {
                let mode = if rng.gen::<f64>() < opts.surface_bias { BallSampling::Surface } else { BallSampling::Interior };
                sample_in_ball(&mut rng, c.n, e, mode)
            })
            .collect();
        let v = sinr_at(instance, precoders, m, k, &deltas);
        if v < best {
            best = v.min(descend(instance, precoders, m, k, deltas, opts));
        }
    }
    best
}

pub fn oracle_sinr_estimate(instance: &NetworkInstance, precoders: &PrecoderSet, m: usize, k: usize, samples: usize, seed: u64) -> f64 {
    let opts = OracleOptions { samples, ..OracleOptions::default() };
    oracle_sinr_estimate_with(instance, precoders, m, k, seed, &opts)
}

/// `log(1 + sinr)` in nats.
pub fn rate(sinr: f64) -> Result<f64> {
    if sinr < 0.0 || sinr.is_nan() {
        return Err(Error::NegativeSinr(sinr));
    }
    Ok(sinr.ln_1p())
}

pub fn rates_from(sinrs: &[f64]) -> Result<Vec<f64>> {
    sinrs.iter().map(|&s| rate(s)).collect()
}

pub fn weighted_sum(weights: &[f64], rates: &[f64]) -> f64 {
    weights.iter().zip(rates).map(|(a, r)| a * r).sum()
}

pub fn nats_to_bits(x: f64) -> f64 {
    x / std::f64::consts::LN_2
}

/// Per-user worst-case figures for one design.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct UserReport {
    pub m: usize,
    pub k: usize,
    pub sinr_lower: f64,
    pub sinr_upper: f64,
    /// Exact worst case, available when `K = 1`.
    pub sinr_exact: Option<f64>,
    pub sinr_oracle: Option<f64>,
    pub mse: Option<f64>,
    pub slinr: f64,
    /// `log(1 + sinr_lower)` in nats.
    pub rate_lower: f64,
}

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct WorstCaseReport {
    pub users: Vec<UserReport>,
}

impl WorstCaseReport {
    pub fn evaluate(
        instance: &NetworkInstance,
        precoders: &PrecoderSet,
        equalizers: Option<&EqualizerSet>,
        oracle: Option<(&OracleOptions, u64)>,
    ) -> Result<Self> {
        let c = instance.config();
        let mut users = Vec::with_capacity(c.users());
        for m in 0..c.m {
            for k in 0..c.k {
                let lower = sinr_lower_bound(instance, precoders, m, k);
                let exact = if c.k == 1 { Some(worst_case_sinr_single(instance, precoders, m)?) } else { None };
                let mse = match equalizers {
                    Some(eq) => Some(worst_case_mse(instance, precoders, eq, m, k)?),
                    None => None,
                };
                let oracle = oracle
                    .map(|(o, seed)| oracle_sinr_estimate_with(instance, precoders, m, k, seed.wrapping_add(c.user_index(m, k) as u64), o));
                users.push(UserReport {
                    m,
                    k,
                    sinr_lower: lower,
                    sinr_upper: sinr_upper_bound(instance, precoders, m, k),
                    sinr_exact: exact,
                    sinr_oracle: oracle,
                    mse,
                    slinr: worst_case_slinr(instance, precoders, m, k),
                    rate_lower: rate(lower)?,
                });
            }
        }
        Ok(Self { users })
    }

    pub fn min_rate(&self) -> f64 {
        self.users.iter().map(|u| u.rate_lower).fold(f64::INFINITY, f64::min)
    }

    pub fn weighted_sum_rate(&self, instance: &NetworkInstance) -> f64 {
        self.users.iter().map(|u| instance.weight(u.m, u.k) * u.rate_lower).sum()
    }
}

/// Lower-bound worst-case rates of every user, cell-major.
pub fn lower_bound_rates(instance: &NetworkInstance, precoders: &PrecoderSet) -> Vec<f64> {
    let c = instance.config();
    (0..c.m)
        .flat_map(|m| (0..c.k).map(move |k| (m, k)))
        .map(|(m, k)| sinr_lower_bound(instance, precoders, m, k).max(0.0).ln_1p())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instance::{ChannelTensor, NetworkConfig};

    fn cv(v: &[(f64, f64)]) -> CVector {
        CVector::from_iterator(v.len(), v.iter().map(|&(a, b)| C64::new(a, b)))
    }

    #[test]
    fn lemma_collinear_case() {
        let (lo, hi) =
            robust_gain_extrema(&cv(&[(1.0, 0.0), (0.0, 0.0)]), &cv(&[(1.0, 0.0), (0.0, 0.0)]), 0.5, &CMatrix::identity(2, 2)).unwrap();
        assert!((lo - 0.25).abs() < 1e-15 && (hi - 2.25).abs() < 1e-15);
    }

    #[test]
    fn lemma_orthogonal_case_clamps() {
        let (lo, hi) =
            robust_gain_extrema(&cv(&[(1.0, 0.0), (0.0, 0.0)]), &cv(&[(0.0, 0.0), (1.0, 0.0)]), 0.5, &CMatrix::identity(2, 2)).unwrap();
        assert_eq!(lo, 0.0);
        assert!((hi - 0.25).abs() < 1e-15);
    }

    #[test]
    fn lemma_rejects_indefinite_weight() {
        let q = CMatrix::from_diagonal(&cv(&[(1.0, 0.0), (-1.0, 0.0)]));
        let h = cv(&[(1.0, 0.0), (0.0, 0.0)]);
        assert!(matches!(robust_gain_extrema(&h, &h, 0.1, &q), Err(Error::NotPositiveDefinite)));
    }

    #[test]
    fn isotropic_quadratic_max() {
        let h = cv(&[(0.3, -0.4), (1.0, 0.2), (0.0, 0.5)]);
        let v = max_quadratic_over_ball(&h, &CMatrix::identity(3, 3), 0.2);
        assert!((v - (norm(&h) + 0.2).powi(2)).abs() < 1e-12);
        let zero = max_quadratic_over_ball(&h, &CMatrix::identity(3, 3), 0.0);
        assert!((zero - norm_sqr(&h)).abs() < 1e-12);
    }

    #[test]
    fn hard_case_is_handled() {
        // h̃ orthogonal to the dominant direction of A.
        let h = cv(&[(0.0, 0.0), (1.0, 0.0)]);
        let a = CMatrix::from_diagonal(&cv(&[(2.0, 0.0), (1.0, 0.0)]));
        let (v, d) = worst_perturbation(&h, &a, None, 0.1);
        // Either put all of Δ on the strong axis (4·0.01 + 1) or grow h̃ (1.1² = 1.21).
        assert!((v - 1.21f64.max(1.04)).abs() < 1e-9, "{v}");
        assert!((norm(&d) - 0.1).abs() < 1e-9);
        let h2 = cv(&[(0.0, 0.0), (0.01, 0.0)]);
        let (v2, d2) = worst_perturbation(&h2, &a, None, 1.0);
        let direct = norm_sqr(&row_times_matrix(&(&h2 + &d2), &a));
        assert!((v2 - direct).abs() < 1e-9 * v2);
        assert!(v2 >= 4.0 - 1e-9);
    }

    #[test]
    fn maximizer_attains_reported_value() {
        let h = cv(&[(0.3, -0.4), (1.0, 0.2)]);
        let a = CMatrix::from_fn(2, 3, |i, j| C64::new((i + j) as f64 * 0.3 - 0.2, (i as f64) - 0.5 * j as f64));
        let r = cv(&[(0.5, 0.0), (0.0, 0.0), (-0.2, 0.1)]);
        let (v, d) = worst_perturbation(&h, &a, Some(&r), 0.3);
        let direct = norm_sqr(&(row_times_matrix(&(&h + &d), &a) - &r));
        assert!((v - direct).abs() < 1e-10 * v);
        assert!(norm(&d) <= 0.3 + 1e-12);
    }

    fn scalar_two_cell() -> (NetworkInstance, PrecoderSet) {
        let c = NetworkConfig::new(2, 1, 1).unwrap();
        let one = |x: f64| CVector::from_element(1, C64::new(x, 0.0));
        // (m, n) order: (0,0), (0,1), (1,0), (1,1)
        let t = ChannelTensor::from_vec(c, vec![one(2.0), one(1.0), one(1.0), one(2.0)]).unwrap();
        let inst = NetworkInstance::new(t, vec![0.5; 4], vec![1.0, 1.0], vec![1.0, 1.0]).unwrap();
        let p = PrecoderSet::new(vec![CMatrix::from_element(1, 1, C64::new(1.0, 0.0)); 2]).unwrap();
        (inst, p)
    }

    #[test]
    fn scalar_single_user_value() {
        let (inst, p) = scalar_two_cell();
        let v = worst_case_sinr_single(&inst, &p, 0).unwrap();
        assert!((v - 2.25 / 3.25).abs() < 1e-15);
        assert_eq!(sinr_lower_bound(&inst, &p, 0, 0), v);
    }

    #[test]
    fn single_user_requires_k_one() {
        let c = NetworkConfig::new(1, 2, 2).unwrap();
        let inst = crate::instance::sample_instance(
            c,
            &crate::instance::RadiiSpec::Uniform(0.0),
            &crate::instance::PowerSpec::UniformLinear(1.0),
            &crate::instance::WeightSpec::Uniform(1.0),
            1,
        )
        .unwrap();
        let p = PrecoderSet::matched_filter(&inst);
        assert!(matches!(worst_case_sinr_single(&inst, &p, 0), Err(Error::RequiresSingleUser(2))));
    }

    #[test]
    fn scalar_mse_value() {
        let c = NetworkConfig::new(1, 1, 1).unwrap();
        let t = ChannelTensor::from_vec(c, vec![CVector::from_element(1, C64::new(1.0, 0.0))]).unwrap();
        let inst = NetworkInstance::new(t, vec![0.5], vec![1.0], vec![1.0]).unwrap();
        let p = PrecoderSet::new(vec![CMatrix::from_element(1, 1, C64::new(1.0, 0.0))]).unwrap();
        assert!((worst_case_mse_with(&inst, &p, 0, 0, 1.0).unwrap() - 1.25).abs() < 1e-12);
        assert!(matches!(worst_case_mse_with(&inst, &p, 0, 0, 0.0), Err(Error::NonPositiveEqualizer(_))));
    }

    #[test]
    fn rates() {
        assert_eq!(rate(0.0).unwrap(), 0.0);
        assert!((rate(std::f64::consts::E - 1.0).unwrap() - 1.0).abs() < 1e-15);
        assert!(rate(-0.1).is_err());
        let r = rates_from(&[1.0, 3.0, 7.0]).unwrap();
        let want = 0.5 * 2f64.ln() + 1.0 * 4f64.ln() + 2.0 * 8f64.ln();
        assert!((weighted_sum(&[0.5, 1.0, 2.0], &r) - want).abs() < 1e-14);
    }

    #[test]
    fn upper_bound_single_isolated_user() {
        let c = NetworkConfig::new(1, 1, 2).unwrap();
        let h = cv(&[(0.6, 0.0), (0.0, 0.8)]);
        let t = ChannelTensor::from_vec(c, vec![h]).unwrap();
        let inst = NetworkInstance::new(t, vec![0.1], vec![1.0], vec![1.0]).unwrap();
        let p = PrecoderSet::new(vec![CMatrix::from_column_slice(2, 1, &[C64::new(0.3, 0.1), C64::new(-0.2, 0.4)])]).unwrap();
        let w2 = norm_sqr(&p.beam(0, 0));
        assert!((sinr_upper_bound(&inst, &p, 0, 0) - 1.1f64.powi(2) * w2).abs() < 1e-14);
    }
}
