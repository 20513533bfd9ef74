//! Design and evaluation routines checked against independent oracles.

mod common;

use nalgebra::DVector;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use robustbf::baselines::{slinr_beam, slinr_profile_search, zero_forcing, zf_allocation, zf_directions, SlinrOptions, ZfObjective};
use robustbf::harness::{run_experiment, write_csv, ExperimentConfig};
use robustbf::instance::{ChannelTensor, NetworkConfig};
use robustbf::linalg::{CMatrix, CVector, C64};
use robustbf::maxmin::maxmin_via_power;
use robustbf::worst_case::{oracle_sinr_estimate, sinr_lower_bound, sinr_upper_bound, worst_case_sinr_single, worst_perturbation};
use robustbf::NetworkInstance;

use common::{random_cmatrix, random_cvector, sampled_min_sinr, trust_region_max};

fn cv(v: &[(f64, f64)]) -> CVector {
    CVector::from_iterator(v.len(), v.iter().map(|&(a, b)| C64::new(a, b)))
}

fn from_channels(m: usize, k: usize, n: usize, data: Vec<CVector>, eps: f64, power: f64) -> NetworkInstance {
    let c = NetworkConfig::new(m, k, n).unwrap();
    NetworkInstance::new(ChannelTensor::from_vec(c, data).unwrap(), vec![eps; c.links()], vec![power; m], vec![1.0; c.users()]).unwrap()
}

#[test]
fn zf_orthonormal_rows_give_unit_directions() {
    let inst = from_channels(1, 2, 2, vec![cv(&[(1.0, 0.0), (0.0, 0.0)]), cv(&[(0.0, 0.0), (1.0, 0.0)])], 0.0, 4.0);
    let d = zf_directions(&inst, 0).unwrap();
    assert!((d - CMatrix::identity(2, 2)).norm() < 1e-12);
    let p = zero_forcing(&inst, ZfObjective::MaxMin).unwrap();
    assert!((p.matrix(0) - CMatrix::identity(2, 2) * C64::from(2f64.sqrt())).norm() < 1e-12);
}

#[test]
fn zf_rejects_more_users_than_antennas() {
    let inst = common::instance(1, 3, 2, 0.0, 10.0, 1);
    assert!(zero_forcing(&inst, ZfObjective::MaxMin).is_err());
}

#[test]
fn zf_waterfilling_matches_grid_search() {
    let gains = [0.3, 2.0];
    let weights = [1.0, 1.0];
    let p = zf_allocation(&gains, &weights, 1.0, ZfObjective::SumRate);
    let value = |p0: f64| (1.0 + gains[0] * p0).ln() + (1.0 + gains[1] * (1.0 - p0)).ln();
    let best = (0..=100_000).map(|i| i as f64 / 100_000.0).fold(f64::NEG_INFINITY, |b, x| b.max(value(x)));
    assert!((value(p[0]) - best).abs() < 1e-9, "{} vs {best}", value(p[0]));
    assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
}

/// `max |hw|²/(‖w‖²/p + Σ|g_j w|²)` is attained at `w ∝ (I/p + Σ g_jᴴg_j)⁻¹ hᴴ`.
fn slinr_closed_form(inst: &NetworkInstance, m: usize, k: usize, power: f64) -> (f64, CVector) {
    let c = inst.config();
    let mut a = CMatrix::identity(c.n, c.n) * C64::from(1.0 / power);
    for n in 0..c.m {
        for j in 0..c.k {
            if (n, j) != (m, k) {
                let g = inst.estimate(n, m, j);
                a += g.conjugate() * g.transpose();
            }
        }
    }
    let h = inst.estimate(m, m, k);
    let w = a.clone().try_inverse().unwrap() * h.conjugate();
    let value = (h.transpose() * &w)[(0, 0)].re;
    (value, w)
}

#[test]
fn slinr_without_uncertainty_is_a_generalized_eigenvector() {
    let opts = SlinrOptions { delta: 1e-7, ..SlinrOptions::default() };
    for seed in 0..3 {
        let inst = common::instance(2, 2, 3, 0.0, 10.0, seed);
        let power = 5.0;
        let (got, w) = slinr_beam(&inst, 1, 0, power, &opts).unwrap();
        let (want, v) = slinr_closed_form(&inst, 1, 0, power);
        assert!((got - want).abs() <= 1e-5 * want, "{got} vs {want}");
        let cos = w.dotc(&v).norm() / (w.norm() * v.norm());
        assert!(1.0 - cos < 1e-4, "angle cosine {cos}");
    }
}

#[test]
fn slinr_profile_grid_refinement_never_hurts() {
    let inst = common::instance(2, 2, 2, 0.05, 10.0, 3);
    let coarse = slinr_profile_search(&inst, 2).unwrap();
    let fine = slinr_profile_search(&inst, 4).unwrap();
    assert!(fine.sum_slinr >= coarse.sum_slinr * (1.0 - 1e-6), "{} < {}", fine.sum_slinr, coarse.sum_slinr);
    for m in 0..2 {
        assert!(fine.precoders.power(m) <= inst.power(m) * (1.0 + 1e-6));
    }
}

#[test]
fn single_cell_maxmin_without_uncertainty_is_matched_filter() {
    let inst = common::instance(1, 1, 3, 0.0, 10.0, 9);
    let sol = maxmin_via_power(&inst, 1e-6).unwrap();
    let want = inst.power(0) * inst.estimate(0, 0, 0).norm_squared();
    assert!((sol.a_star - want).abs() <= 2e-6 * want, "{} vs {want}", sol.a_star);
}

#[test]
fn harness_is_deterministic() {
    let cfg = ExperimentConfig::from_json(
        r#"{"network":{"m":2,"k":1,"n":2},"eps":[0.0,0.1],"gamma_db":[0.0,10.0],"seeds":[3,4],"algorithms":["maxmin","zf_maxmin","slinr"]}"#,
    )
    .unwrap();
    let a = write_csv(&run_experiment(&cfg).unwrap().rows);
    let b = write_csv(&run_experiment(&ExperimentConfig { threads: Some(1), ..cfg }).unwrap().rows);
    assert_eq!(a, b);
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 48, ..ProptestConfig::default() })]

    #[test]
    fn worst_perturbation_matches_trust_region(seed in any::<u64>(), n in 1usize..4, j in 1usize..4, eps in 0.01..1.5f64, offset in any::<bool>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let h = random_cvector(&mut rng, n);
        let a = random_cmatrix(&mut rng, n, j);
        let r = offset.then(|| random_cvector(&mut rng, j));
        let (got, delta) = worst_perturbation(&h, &a, r.as_ref(), eps);
        let want = trust_region_max(&h, &a, r.as_ref(), eps);
        prop_assert!((got - want).abs() <= 1e-8 * want.max(1.0), "{} vs {}", got, want);
        prop_assert!(delta.norm() <= eps * (1.0 + 1e-9));
        let mut x = (&h + &delta).transpose() * &a;
        if let Some(r) = &r {
            x -= r.transpose();
        }
        prop_assert!((x.norm_squared() - got).abs() <= 1e-8 * got.max(1.0));
    }

    #[test]
    fn zf_nulls_in_cell_interference(seed in 0u64..1000, n in 2usize..5) {
        let k = n.min(3);
        let inst = common::instance(2, k, n, 0.0, 10.0, seed);
        let p = zero_forcing(&inst, ZfObjective::MaxMin).unwrap();
        for m in 0..2 {
            prop_assert!((p.power(m) - inst.power(m)).abs() <= 1e-9 * inst.power(m));
            let snr: Vec<f64> = (0..k).map(|u| (inst.estimate(m, m, u).transpose() * p.beam(m, u))[(0, 0)].norm_sqr()).collect();
            for u in 0..k {
                prop_assert!((snr[u] - snr[0]).abs() <= 1e-8 * snr[0]);
                for v in (0..k).filter(|&v| v != u) {
                    prop_assert!((inst.estimate(m, m, v).transpose() * p.beam(m, u))[(0, 0)].norm() < 1e-9);
                }
            }
        }
    }

    #[test]
    fn sinr_bounds_bracket_sampled_channels(seed in 0u64..1000, k in 1usize..3, eps in 0.01..0.2f64) {
        let inst = common::instance(2, k, 2, eps, 10.0, seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let cells = (0..2).map(|_| random_cmatrix(&mut rng, 2, k)).collect();
        let prec = robustbf::PrecoderSet::new(cells).unwrap();
        for m in 0..2 {
            for u in 0..k {
                let lower = sinr_lower_bound(&inst, &prec, m, u);
                let sampled = sampled_min_sinr(&inst, &prec, m, u, 200, seed);
                let oracle = oracle_sinr_estimate(&inst, &prec, m, u, 100, seed);
                prop_assert!(lower <= oracle * (1.0 + 1e-9) + 1e-12);
                prop_assert!(lower <= sampled * (1.0 + 1e-9) + 1e-12);
                if k == 1 {
                    let exact = worst_case_sinr_single(&inst, &prec, m).unwrap();
                    prop_assert!(exact <= oracle.min(sampled) * (1.0 + 1e-9));
                    prop_assert!(exact >= lower * (1.0 - 1e-9));
                    prop_assert!(sinr_upper_bound(&inst, &prec, m, u) >= exact * (1.0 - 1e-9));
                    // Single-user cells: the structured search reaches the exact worst case.
                    prop_assert!((oracle - exact).abs() <= 1e-3 * exact.max(1e-9), "{} vs {}", oracle, exact);
                }
            }
        }
    }
}

#[test]
fn oracle_helper_self_check() {
    // ‖(h+Δ)a‖² for a scalar channel: (|h a| + ε|a|)².
    let h = DVector::from_vec(vec![C64::new(0.6, 0.8)]);
    let a = CMatrix::from_element(1, 1, C64::new(2.0, 0.0));
    assert!((trust_region_max(&h, &a, None, 0.5) - 9.0).abs() < 1e-9);
}
