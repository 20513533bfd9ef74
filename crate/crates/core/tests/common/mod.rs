//! Brute-force oracles shared by the integration tests. None of them call
//! into the closed forms they are used to check.

#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use robustbf::instance::{sample_instance, sample_perturbation, sinr_on_channels, BallSampling, PowerSpec, RadiiSpec, WeightSpec};
use robustbf::linalg::{CMatrix, CVector, C64};
use robustbf::{NetworkConfig, NetworkInstance, PrecoderSet};

pub fn random_cvector(rng: &mut ChaCha8Rng, n: usize) -> CVector {
    CVector::from_fn(n, |_, _| C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
}

pub fn random_cmatrix(rng: &mut ChaCha8Rng, r: usize, c: usize) -> CMatrix {
    CMatrix::from_fn(r, c, |_, _| C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
}

fn hw(h: &CVector, w: &CVector) -> C64 {
    h.iter().zip(w.iter()).map(|(a, b)| a * b).sum()
}

fn project(d: &mut CVector, eps: f64) {
    let r = d.norm();
    if r > eps {
        *d *= C64::from(eps / r);
    }
}

/// Min and max of `|(h+Δ)w|²` over `‖Δ‖ ≤ ε` by multi-start projected
/// gradient on `Δ` itself.
pub fn ball_search_gain(h: &CVector, w: &CVector, eps: f64, seed: u64) -> (f64, f64) {
    let n = h.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ww = w.norm_squared().max(1e-300);
    let wc = w.map(|z| z.conj());
    let f = |d: &CVector| (hw(h, w) + hw(d, w)).norm_sqr();
    let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
    for start in 0..8 {
        for sign in [-1.0, 1.0] {
            let mut d = if start == 0 { CVector::zeros(n) } else { random_cvector(&mut rng, n) };
            project(&mut d, eps);
            for _ in 0..400 {
                // d/dΔ̄ |s + Δw|² = (s + Δw) w̄, step 1/(2‖w‖²).
                let g = &wc * (hw(h, w) + hw(&d, w));
                d += &g * C64::from(sign / (2.0 * ww));
                project(&mut d, eps);
            }
            if sign < 0.0 {
                lo = lo.min(f(&d));
            } else {
                hi = hi.max(f(&d));
            }
        }
    }
    (lo, hi)
}

/// `max_{‖Δ‖≤ε} ‖(h+Δ)A − r‖²` through the real embedding: with `y ∈ R^{2N}`
/// the objective is `‖c + By‖²`, and the maximizer on the sphere solves
/// `(νI − BᵀB) y = Bᵀc` for the `ν > λ_max(BᵀB)` with `‖y‖ = ε`.
pub fn trust_region_max(h: &CVector, a: &CMatrix, r: Option<&CVector>, eps: f64) -> f64 {
    let (n, j) = a.shape();
    let mut c = DVector::<f64>::zeros(2 * j);
    let mut b = DMatrix::<f64>::zeros(2 * j, 2 * n);
    for col in 0..j {
        let mut v: C64 = (0..n).map(|i| h[i] * a[(i, col)]).sum();
        if let Some(r) = r {
            v -= r[col];
        }
        c[col] = v.re;
        c[j + col] = v.im;
        for i in 0..n {
            // (x + iy)(p + iq) = (xp − yq) + i(xq + yp), with Δ_i = x + iy.
            let z = a[(i, col)];
            b[(col, i)] = z.re;
            b[(col, n + i)] = -z.im;
            b[(j + col, i)] = z.im;
            b[(j + col, n + i)] = z.re;
        }
    }
    if eps == 0.0 {
        return c.norm_squared();
    }
    let g = b.transpose() * &b;
    let bc = b.transpose() * &c;
    let eig = g.clone().symmetric_eigen();
    let top = eig.eigenvalues.iter().copied().fold(0.0, f64::max);
    let coef = eig.eigenvectors.transpose() * &bc;
    let y_norm = |nu: f64| coef.iter().zip(eig.eigenvalues.iter()).map(|(b, s)| (b / (nu - s)).powi(2)).sum::<f64>().sqrt();
    let value = |y: &DVector<f64>| (&c + &b * y).norm_squared();
    let scale = 1.0 + top;
    let mut lo = top + 1e-14 * scale;
    if y_norm(lo) <= eps {
        // Hard case: fill the remainder along the top eigenvector, both signs.
        let y0 = DVector::from_iterator(
            2 * n,
            (0..2 * n).map(|i| (0..2 * n).map(|k| eig.eigenvectors[(i, k)] * coef[k] / (lo - eig.eigenvalues[k])).sum::<f64>()),
        );
        let k_top = (0..2 * n).max_by(|a, b| eig.eigenvalues[*a].total_cmp(&eig.eigenvalues[*b])).unwrap();
        let v = eig.eigenvectors.column(k_top).into_owned();
        let extra = (eps * eps - y0.norm_squared()).max(0.0).sqrt();
        return value(&(&y0 + &v * extra)).max(value(&(&y0 - &v * extra)));
    }
    let mut hi = lo + 1.0;
    while y_norm(hi) > eps {
        hi = lo + 2.0 * (hi - lo);
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if y_norm(mid) > eps {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let nu = 0.5 * (lo + hi);
    let d = DMatrix::<f64>::identity(2 * n, 2 * n) * nu - &g;
    let y = d.lu().solve(&bc).expect("shifted Gram matrix is nonsingular");
    value(&y)
}

pub fn instance(m: usize, k: usize, n: usize, eps: f64, power_db: f64, seed: u64) -> NetworkInstance {
    sample_instance(
        NetworkConfig::new(m, k, n).unwrap(),
        &RadiiSpec::Uniform(eps),
        &PowerSpec::UniformDb(power_db),
        &WeightSpec::Uniform(1.0),
        seed,
    )
    .unwrap()
}

/// Smallest realized SINR of user `(m, k)` over `count` sampled perturbations.
pub fn sampled_min_sinr(inst: &NetworkInstance, prec: &PrecoderSet, m: usize, k: usize, count: usize, seed: u64) -> f64 {
    let mut best = f64::INFINITY;
    for s in 0..count as u64 {
        let mode = if s % 2 == 0 { BallSampling::Surface } else { BallSampling::Interior };
        let p = sample_perturbation(inst, seed.wrapping_mul(1_000_003).wrapping_add(s), mode);
        best = best.min(sinr_on_channels(&p.true_channels(inst), prec, m, k));
    }
    best
}
