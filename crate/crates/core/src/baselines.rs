//! Non-robust and heuristic comparators.
//!
//! Zero-forcing ignores the other cells and the estimation error: each BS
//! inverts its own in-cell estimates and shares its power over the fixed
//! directions. SLINR beamforming picks every beam on its own, maximizing the
//! worst-case ratio of useful power to leakage onto all other users plus noise.

use rayon::prelude::*;
use serde::Serialize;

use crate::conic::{build_s_lemma_lmi, build_soc_own_channel, solve, AffExpr, CMatVar, ConicProgram, LmiForm, SolveStatus, Tolerances};
use crate::error::{Error, Result};
use crate::instance::{NetworkInstance, PrecoderSet};
use crate::linalg::{hermitian_eigen, norm, CMatrix, CVector, C64};
use crate::worst_case::slinr_of_beam;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ZfObjective {
    /// Equal nominal SNR for every user of the cell.
    MaxMin,
    /// Weighted waterfilling on the nominal SNRs.
    SumRate,
}

/// Unit-norm columns of the pseudo-inverse of the stacked in-cell estimates of cell `m`.
pub fn zf_directions(instance: &NetworkInstance, m: usize) -> Result<CMatrix> {
    let c = instance.config();
    if c.k > c.n {
        return Err(Error::RankDeficient(m));
    }
    let h = CMatrix::from_fn(c.k, c.n, |k, i| instance.estimate(m, m, k)[i]);
    let gram = &h * h.adjoint();
    let (vals, _) = hermitian_eigen(&gram);
    let top = vals.last().copied().unwrap_or(0.0);
    if !(vals[0] > 1e-12 * top) {
        return Err(Error::RankDeficient(m));
    }
    let inv = gram.try_inverse().ok_or(Error::RankDeficient(m))?;
    let mut d = h.adjoint() * inv;
    for mut col in d.column_iter_mut() {
        let n = col.norm();
        col.unscale_mut(n);
    }
    Ok(d)
}

/// Nominal-gain power allocation on fixed ZF directions. `gains[k]` is
/// `|h̃ᵏ dᵏ|²`, so user `k` sees SNR `p_k·gains[k]`.
pub fn zf_allocation(gains: &[f64], weights: &[f64], budget: f64, objective: ZfObjective) -> Vec<f64> {
    match objective {
        ZfObjective::MaxMin => {
            let c = budget / gains.iter().map(|g| 1.0 / g).sum::<f64>();
            gains.iter().map(|g| c / g).collect()
        }
        ZfObjective::SumRate => {
            // p_k = (α_k ν − 1/g_k)⁺ with ν fixed by the budget.
            let used = |nu: f64| gains.iter().zip(weights).map(|(g, a)| (a * nu - 1.0 / g).max(0.0)).sum::<f64>();
            let (mut lo, mut hi) = (0.0, 1.0);
            while used(hi) < budget {
                hi *= 2.0;
            }
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if used(mid) < budget {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            let p: Vec<f64> = gains.iter().zip(weights).map(|(g, a)| (a * hi - 1.0 / g).max(0.0)).collect();
            let total: f64 = p.iter().sum();
            p.into_iter().map(|x| x * budget / total).collect()
        }
    }
}

/// Per-cell zero-forcing with the chosen nominal power allocation.
pub fn zero_forcing(instance: &NetworkInstance, objective: ZfObjective) -> Result<PrecoderSet> {
    let c = instance.config();
    let mut cells = Vec::with_capacity(c.m);
    for m in 0..c.m {
        let mut d = zf_directions(instance, m)?;
        let gains: Vec<f64> = (0..c.k).map(|k| (instance.estimate(m, m, k).transpose() * d.column(k))[(0, 0)].norm_sqr()).collect();
        let weights: Vec<f64> = (0..c.k).map(|k| instance.weight(m, k)).collect();
        let p = zf_allocation(&gains, &weights, instance.power(m), objective);
        for (k, mut col) in d.column_iter_mut().enumerate() {
            col.scale_mut(p[k].sqrt());
        }
        cells.push(d);
    }
    PrecoderSet::new(cells)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlinrOptions {
    /// Bisection stops when the bracket is narrower than `delta` times the ceiling.
    pub delta: f64,
    pub tolerances: Tolerances,
}

impl Default for SlinrOptions {
    fn default() -> Self {
        Self { delta: 1e-4, tolerances: Tolerances::default() }
    }
}

/// Per-user power profile indexed by `NetworkConfig::user_index`.
pub fn equal_profile(instance: &NetworkInstance) -> Vec<f64> {
    let c = instance.config();
    (0..c.m).flat_map(|m| std::iter::repeat(instance.power(m) / c.k as f64).take(c.k)).collect()
}

fn slinr_probe(instance: &NetworkInstance, m: usize, k: usize, power: f64, t: f64, tol: &Tolerances) -> Option<CVector> {
    let c = instance.config();
    let mut prog = ConicProgram::new();
    let w = CMatVar::new(&mut prog, "w", c.n, 1);
    let s = AffExpr::var(prog.scalar("s"));
    build_soc_own_channel(&mut prog, instance.estimate(m, m, k), instance.radius(m, m, k), t, &s, &w.column(0));
    let mut rest = Vec::new();
    for n in 0..c.m {
        for j in 0..c.k {
            if (n, j) == (m, k) {
                continue;
            }
            let e = AffExpr::var(prog.scalar(&format!("e{n}.{j}")));
            build_s_lemma_lmi(&mut prog, instance.estimate(n, m, j), &w.as_expr(), None, instance.radius(n, m, j), &e, LmiForm::Norm);
            rest.push(e);
        }
    }
    rest.push(AffExpr::constant(1.0));
    prog.add_soc(s, rest);
    prog.add_soc(AffExpr::constant(power.sqrt()), w.real_parts());
    let r = solve(&prog, tol);
    (r.status == SolveStatus::Optimal).then(|| w.value(&r.x).column(0).into_owned())
}

/// Robust SLINR-maximizing beam for user `(m, k)` with `‖w‖² ≤ power`.
/// Returns the certified SLINR and the beam.
pub fn slinr_beam(instance: &NetworkInstance, m: usize, k: usize, power: f64, opts: &SlinrOptions) -> Result<(f64, CVector)> {
    if !(power >= 0.0) || !power.is_finite() {
        return Err(Error::InvalidConfig(format!("beam power must be finite and non-negative, got {power}")));
    }
    let h = instance.estimate(m, m, k);
    let g = (norm(h) - instance.radius(m, m, k)).max(0.0);
    let ceiling = power * g * g;
    let fallback = || {
        let n = norm(h);
        let w = if n > 0.0 { h.map(|z| z.conj()) * C64::new(power.sqrt() / n, 0.0) } else { CVector::zeros(h.len()) };
        (slinr_of_beam(instance, &w, m, k), w)
    };
    if ceiling <= 0.0 {
        return Ok(fallback());
    }
    let (mut lo, mut hi) = (0.0, ceiling);
    let mut best = None;
    while hi - lo > opts.delta * ceiling {
        let t = 0.5 * (lo + hi);
        match slinr_probe(instance, m, k, power, t, &opts.tolerances) {
            Some(w) => {
                lo = t;
                best = Some(w);
            }
            None => hi = t,
        }
    }
    Ok(match best {
        Some(w) => (slinr_of_beam(instance, &w, m, k), w),
        None => fallback(),
    })
}

/// Independent per-beam SLINR designs under the given power profile.
pub fn slinr_beamforming(instance: &NetworkInstance, profile: &[f64]) -> Result<PrecoderSet> {
    slinr_beamforming_with(instance, profile, &SlinrOptions::default())
}

pub fn slinr_beamforming_with(instance: &NetworkInstance, profile: &[f64], opts: &SlinrOptions) -> Result<PrecoderSet> {
    let c = instance.config();
    if profile.len() != c.users() {
        return Err(Error::ShapeMismatch(format!("expected {} per-user powers, got {}", c.users(), profile.len())));
    }
    for m in 0..c.m {
        let total: f64 = profile[m * c.k..(m + 1) * c.k].iter().sum();
        if total > instance.power(m) * (1.0 + 1e-9) {
            return Err(Error::InvalidConfig(format!("profile of cell {m} sums to {total}, above the budget {}", instance.power(m))));
        }
    }
    let beams: Vec<CVector> = (0..c.users())
        .into_par_iter()
        .map(|u| slinr_beam(instance, u / c.k, u % c.k, profile[u], opts).map(|(_, w)| w))
        .collect::<Result<_>>()?;
    let cells = (0..c.m).map(|m| CMatrix::from_columns(&beams[m * c.k..(m + 1) * c.k])).collect();
    PrecoderSet::new(cells)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProfileSearch {
    pub precoders: PrecoderSet,
    pub profile: Vec<f64>,
    pub sum_slinr: f64,
}

/// Exhaustive search over per-cell profiles `P_m·(i_1, …, i_K)/r` with
/// `Σ i_k = r`, maximizing the sum of worst-case SLINRs.
///
/// Each beam's SLINR depends only on its own power, so every beam is
/// designed once per grid level and the best composition per cell is then
/// found by dynamic programming over the levels.
pub fn slinr_profile_search(instance: &NetworkInstance, resolution: usize) -> Result<ProfileSearch> {
    slinr_profile_search_with(instance, resolution, &SlinrOptions::default())
}

pub fn slinr_profile_search_with(instance: &NetworkInstance, resolution: usize, opts: &SlinrOptions) -> Result<ProfileSearch> {
    if resolution == 0 {
        return Err(Error::InvalidConfig("profile grid resolution must be positive".into()));
    }
    let c = instance.config();
    let r = resolution;
    // table[u][i]: (SLINR, beam) of user u at power P_m·i/r.
    let table: Vec<Vec<(f64, CVector)>> = (0..c.users())
        .into_par_iter()
        .map(|u| {
            let m = u / c.k;
            (0..=r).map(|i| slinr_beam(instance, m, u % c.k, instance.power(m) * i as f64 / r as f64, opts)).collect()
        })
        .collect::<Result<_>>()?;
    let mut profile = vec![0.0; c.users()];
    let mut cells = Vec::with_capacity(c.m);
    let mut total = 0.0;
    for m in 0..c.m {
        let users = &table[m * c.k..(m + 1) * c.k];
        // best[j][b]: largest sum over the first j users spending exactly b levels.
        let mut best = vec![vec![f64::NEG_INFINITY; r + 1]; c.k + 1];
        let mut pick = vec![vec![0usize; r + 1]; c.k + 1];
        best[0][0] = 0.0;
        for j in 0..c.k {
            for b in 0..=r {
                if best[j][b] == f64::NEG_INFINITY {
                    continue;
                }
                for i in 0..=r - b {
                    let v = best[j][b] + users[j][i].0;
                    if v > best[j + 1][b + i] {
                        best[j + 1][b + i] = v;
                        pick[j + 1][b + i] = i;
                    }
                }
            }
        }
        total += best[c.k][r];
        let mut levels = vec![0usize; c.k];
        let mut b = r;
        for j in (0..c.k).rev() {
            levels[j] = pick[j + 1][b];
            b -= levels[j];
        }
        let cols: Vec<CVector> = levels.iter().enumerate().map(|(k, &i)| users[k][i].1.clone()).collect();
        for (k, &i) in levels.iter().enumerate() {
            profile[m * c.k + k] = instance.power(m) * i as f64 / r as f64;
        }
        cells.push(CMatrix::from_columns(&cols));
    }
    Ok(ProfileSearch { precoders: PrecoderSet::new(cells)?, profile, sum_slinr: total })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instance::{sample_instance, NetworkConfig, PowerSpec, RadiiSpec, WeightSpec};
    use crate::linalg::row_times;
    use crate::worst_case::worst_case_slinr;

    fn random(m: usize, k: usize, n: usize, eps: f64, seed: u64) -> NetworkInstance {
        let cfg = NetworkConfig::new(m, k, n).unwrap();
        sample_instance(cfg, &RadiiSpec::Uniform(eps), &PowerSpec::UniformDb(10.0), &WeightSpec::Uniform(1.0), seed).unwrap()
    }

    #[test]
    fn zf_nulls_in_cell_interference_and_uses_the_budget() {
        let inst = random(2, 3, 4, 0.1, 2);
        for obj in [ZfObjective::MaxMin, ZfObjective::SumRate] {
            let p = zero_forcing(&inst, obj).unwrap();
            for m in 0..2 {
                assert!((p.power(m) - inst.power(m)).abs() <= 1e-9 * inst.power(m));
                for k in 0..3 {
                    for l in (0..3).filter(|&l| l != k) {
                        assert!(row_times(inst.estimate(m, m, k), &p.beam(m, l)).norm() < 1e-10);
                    }
                }
            }
        }
        let p = zero_forcing(&inst, ZfObjective::MaxMin).unwrap();
        let snr: Vec<f64> = (0..3).map(|k| row_times(inst.estimate(0, 0, k), &p.beam(0, k)).norm_sqr()).collect();
        assert!(snr.iter().all(|s| (s - snr[0]).abs() <= 1e-9 * snr[0]));
    }

    #[test]
    fn zf_rejects_more_users_than_antennas() {
        let inst = random(1, 3, 2, 0.1, 2);
        assert!(matches!(zero_forcing(&inst, ZfObjective::MaxMin), Err(Error::RankDeficient(0))));
    }

    #[test]
    fn waterfilling_satisfies_kkt() {
        let gains = [4.0, 1.0, 0.05];
        let weights = [1.0, 1.0, 1.0];
        let p = zf_allocation(&gains, &weights, 2.0, ZfObjective::SumRate);
        assert!((p.iter().sum::<f64>() - 2.0).abs() < 1e-12);
        assert_eq!(p[2], 0.0);
        // Active users share one water level 1/g + p.
        assert!(((1.0 / gains[0] + p[0]) - (1.0 / gains[1] + p[1])).abs() < 1e-9);
        assert!(1.0 / gains[2] >= 1.0 / gains[0] + p[0]);
    }

    #[test]
    fn single_user_slinr_is_full_power_matched_filter() {
        let inst = random(1, 1, 3, 0.1, 5);
        let p = slinr_beamforming(&inst, &[inst.power(0)]).unwrap();
        let h = inst.estimate(0, 0, 0);
        let w = p.beam(0, 0);
        let cos = row_times(h, &w).norm() / (norm(h) * norm(&w));
        assert!(cos > 1.0 - 1e-6);
        assert!((p.power(0) - inst.power(0)).abs() <= 1e-4 * inst.power(0));
    }

    #[test]
    fn slinr_beam_certifies_its_value() {
        let inst = random(2, 2, 3, 0.1, 8);
        let opts = SlinrOptions::default();
        let (v, w) = slinr_beam(&inst, 1, 0, 5.0, &opts).unwrap();
        assert!(w.norm_squared() <= 5.0 * (1.0 + 1e-6));
        let mut p = PrecoderSet::zeros(inst.config());
        p.matrix_mut(1).set_column(0, &w);
        assert!((worst_case_slinr(&inst, &p, 1, 0) - v).abs() <= 1e-12 * (1.0 + v));
    }

    #[test]
    fn profile_search_single_user_uses_full_power() {
        let inst = random(2, 1, 2, 0.1, 3);
        let s = slinr_profile_search(&inst, 4).unwrap();
        assert_eq!(s.profile, vec![inst.power(0), inst.power(1)]);
    }
}
