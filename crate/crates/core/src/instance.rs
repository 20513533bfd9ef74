//! Network data model: channel estimates, uncertainty radii, power budgets,
//! rate weights, plus the design variables (precoders, equalizers) and
//! the perturbations used by the validation oracles.
//!
//! Indexing follows the downlink convention throughout the crate: the
//! channel `(m, n, k)` is the link from base station `n` to user `k` of
//! cell `m`. All indices are zero-based in the API and one-based in
//! human-readable diagnostics.

use std::fmt;
use std::path::Path;

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::Deserialize;

use crate::error::{Error, Result};
use crate::linalg::{norm, norm_sqr, row_times, CMatrix, CVector, C64};

/// Network dimensions: `m` cells, `k` users per cell, `n` antennas per base station.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, Deserialize)]
pub struct NetworkConfig {
    pub m: usize,
    pub k: usize,
    pub n: usize,
}

impl NetworkConfig {
    pub fn new(m: usize, k: usize, n: usize) -> Result<Self> {
        let cfg = Self { m, k, n };
        cfg.check()?;
        Ok(cfg)
    }

    pub fn check(&self) -> Result<()> {
        if self.m == 0 || self.k == 0 || self.n == 0 {
            return Err(Error::InvalidConfig(format!("M, K, N must be positive (got M={}, K={}, N={})", self.m, self.k, self.n)));
        }
        Ok(())
    }

    pub fn users(&self) -> usize {
        self.m * self.k
    }

    pub fn links(&self) -> usize {
        self.m * self.m * self.k
    }

    #[inline]
    pub fn link_index(&self, m: usize, n: usize, k: usize) -> usize {
        debug_assert!(m < self.m && n < self.m && k < self.k);
        (m * self.m + n) * self.k + k
    }

    #[inline]
    pub fn user_index(&self, m: usize, k: usize) -> usize {
        m * self.k + k
    }
}

/// One complex row vector of length `N` per link `(m, n, k)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelTensor {
    config: NetworkConfig,
    data: Vec<CVector>,
}

impl ChannelTensor {
    pub fn zeros(config: NetworkConfig) -> Self {
        Self { config, data: vec![CVector::zeros(config.n); config.links()] }
    }

    pub fn from_vec(config: NetworkConfig, data: Vec<CVector>) -> Result<Self> {
        if data.len() != config.links() {
            return Err(Error::ShapeMismatch(format!("expected {} channel vectors, got {}", config.links(), data.len())));
        }
        if let Some(bad) = data.iter().position(|h| h.len() != config.n) {
            return Err(Error::ShapeMismatch(format!("channel vector {bad} has length {}, expected N={}", data[bad].len(), config.n)));
        }
        Ok(Self { config, data })
    }

    pub fn config(&self) -> NetworkConfig {
        self.config
    }

    #[inline]
    pub fn get(&self, m: usize, n: usize, k: usize) -> &CVector {
        &self.data[self.config.link_index(m, n, k)]
    }

    pub fn get_mut(&mut self, m: usize, n: usize, k: usize) -> &mut CVector {
        let i = self.config.link_index(m, n, k);
        &mut self.data[i]
    }

    pub fn iter(&self) -> impl Iterator<Item = &CVector> {
        self.data.iter()
    }

    /// Entrywise sum, used to form true channels `estimate + perturbation`.
    pub fn plus(&self, other: &ChannelTensor) -> ChannelTensor {
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a + b).collect();
        ChannelTensor { config: self.config, data }
    }
}

/// Complete problem data.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkInstance {
    config: NetworkConfig,
    estimates: ChannelTensor,
    radii: Vec<f64>,
    powers: Vec<f64>,
    weights: Vec<f64>,
}

/// A violated instance invariant. Indices are zero-based; `Display` is one-based.
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    NegativeRadius { m: usize, n: usize, k: usize },
    NonPositivePower { m: usize },
    NonPositiveWeight { m: usize, k: usize },
    NonFinite { what: &'static str, index: usize },
    OwnRadiusTooLarge { m: usize, k: usize },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            Violation::NegativeRadius { m, n, k } => {
                write!(f, "negative radius at (m={},n={},k={})", m + 1, n + 1, k + 1)
            }
            Violation::NonPositivePower { m } => write!(f, "non-positive power budget at cell {}", m + 1),
            Violation::NonPositiveWeight { m, k } => {
                write!(f, "non-positive rate weight at (m={},k={})", m + 1, k + 1)
            }
            Violation::NonFinite { what, index } => write!(f, "non-finite {what} entry at flat index {index}"),
            Violation::OwnRadiusTooLarge { m, k } => write!(f, "own-channel radius exceeds estimate norm at (m={},k={})", m + 1, k + 1),
        }
    }
}

impl NetworkInstance {
    /// Builds an instance after checking array shapes. Value invariants are
    /// reported by [`NetworkInstance::validate`], not enforced here.
    pub fn new(estimates: ChannelTensor, radii: Vec<f64>, powers: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        let config = estimates.config();
        config.check()?;
        if radii.len() != config.links() {
            return Err(Error::ShapeMismatch(format!("expected {} radii, got {}", config.links(), radii.len())));
        }
        if powers.len() != config.m {
            return Err(Error::ShapeMismatch(format!("expected {} power entries (M={}), got {}", config.m, config.m, powers.len())));
        }
        if weights.len() != config.users() {
            return Err(Error::ShapeMismatch(format!("expected {} weights, got {}", config.users(), weights.len())));
        }
        Ok(Self { config, estimates, radii, powers, weights })
    }

    pub fn config(&self) -> NetworkConfig {
        self.config
    }

    pub fn estimates(&self) -> &ChannelTensor {
        &self.estimates
    }

    /// Estimate of the channel from base station `n` to user `k` of cell `m`.
    #[inline]
    pub fn estimate(&self, m: usize, n: usize, k: usize) -> &CVector {
        self.estimates.get(m, n, k)
    }

    #[inline]
    pub fn radius(&self, m: usize, n: usize, k: usize) -> f64 {
        self.radii[self.config.link_index(m, n, k)]
    }

    #[inline]
    pub fn power(&self, m: usize) -> f64 {
        self.powers[m]
    }

    #[inline]
    pub fn weight(&self, m: usize, k: usize) -> f64 {
        self.weights[self.config.user_index(m, k)]
    }

    pub fn radii(&self) -> &[f64] {
        &self.radii
    }

    pub fn powers(&self) -> &[f64] {
        &self.powers
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Same channels with every radius replaced by `eps`.
    pub fn with_uniform_radius(&self, eps: f64) -> Self {
        let mut out = self.clone();
        out.radii.iter_mut().for_each(|r| *r = eps);
        out
    }

    /// Same channels with every power budget multiplied by `gamma`.
    pub fn with_power_scale(&self, gamma: f64) -> Self {
        let mut out = self.clone();
        out.powers.iter_mut().for_each(|p| *p *= gamma);
        out
    }

    pub fn with_radii(&self, radii: Vec<f64>) -> Result<Self> {
        Self::new(self.estimates.clone(), radii, self.powers.clone(), self.weights.clone())
    }

    pub fn with_powers(&self, powers: Vec<f64>) -> Result<Self> {
        Self::new(self.estimates.clone(), self.radii.clone(), powers, self.weights.clone())
    }

    /// All invariant violations; empty iff the instance is usable for robust design.
    pub fn validate(&self) -> Vec<Violation> {
        let c = self.config;
        let mut out = Vec::new();
        for (i, h) in self.estimates.iter().enumerate() {
            if h.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
                out.push(Violation::NonFinite { what: "estimate", index: i });
            }
        }
        for m in 0..c.m {
            for n in 0..c.m {
                for k in 0..c.k {
                    let r = self.radius(m, n, k);
                    if !r.is_finite() {
                        out.push(Violation::NonFinite { what: "radius", index: c.link_index(m, n, k) });
                    } else if r < 0.0 {
                        out.push(Violation::NegativeRadius { m, n, k });
                    }
                }
            }
        }
        for (m, &p) in self.powers.iter().enumerate() {
            if !p.is_finite() {
                out.push(Violation::NonFinite { what: "power", index: m });
            } else if p <= 0.0 {
                out.push(Violation::NonPositivePower { m });
            }
        }
        for m in 0..c.m {
            for k in 0..c.k {
                let a = self.weight(m, k);
                if !a.is_finite() {
                    out.push(Violation::NonFinite { what: "weight", index: c.user_index(m, k) });
                } else if a <= 0.0 {
                    out.push(Violation::NonPositiveWeight { m, k });
                }
            }
        }
        for m in 0..c.m {
            for k in 0..c.k {
                if norm(self.estimate(m, m, k)) <= self.radius(m, m, k) {
                    out.push(Violation::OwnRadiusTooLarge { m, k });
                }
            }
        }
        out
    }

    pub fn is_valid(&self) -> bool {
        self.validate().is_empty()
    }
}

/// How uncertainty radii are assigned when sampling.
#[derive(Debug, Clone, PartialEq)]
pub enum RadiiSpec {
    Uniform(f64),
    PerLink(Vec<f64>),
}

/// How power budgets are assigned when sampling.
#[derive(Debug, Clone, PartialEq)]
pub enum PowerSpec {
    UniformLinear(f64),
    UniformDb(f64),
    PerCell(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub enum WeightSpec {
    Uniform(f64),
    PerUser(Vec<f64>),
}

pub const SAMPLING_REJECTION_LIMIT: usize = 1000;

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub fn linear_to_db(x: f64) -> f64 {
    10.0 * x.log10()
}

/// Circularly-symmetric complex Gaussian with unit variance.
pub fn sample_cn<R: Rng + ?Sized>(rng: &mut R) -> C64 {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    C64::new(s * re, s * im)
}

/// Draws i.i.d. CN(0,1) channel estimates, resampling until the instance validates.
pub fn sample_instance(
    config: NetworkConfig,
    radii: &RadiiSpec,
    power: &PowerSpec,
    weights: &WeightSpec,
    seed: u64,
) -> Result<NetworkInstance> {
    config.check()?;
    let radii = match radii {
        RadiiSpec::Uniform(e) => vec![*e; config.links()],
        RadiiSpec::PerLink(v) => v.clone(),
    };
    let powers = match power {
        PowerSpec::UniformLinear(p) => vec![*p; config.m],
        PowerSpec::UniformDb(db) => vec![db_to_linear(*db); config.m],
        PowerSpec::PerCell(v) => v.clone(),
    };
    let weights = match weights {
        WeightSpec::Uniform(a) => vec![*a; config.users()],
        WeightSpec::PerUser(v) => v.clone(),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..SAMPLING_REJECTION_LIMIT {
        let data = (0..config.links()).map(|_| DVector::from_fn(config.n, |_, _| sample_cn(&mut rng))).collect();
        let inst = NetworkInstance::new(ChannelTensor::from_vec(config, data)?, radii.clone(), powers.clone(), weights.clone())?;
        let violations = inst.validate();
        if violations.is_empty() {
            return Ok(inst);
        }
        // Only the own-channel condition depends on the draw; anything else never clears.
        if violations.iter().any(|v| !matches!(v, Violation::OwnRadiusTooLarge { .. })) {
            return Err(Error::InvalidConfig(format!("sampled instance invalid: {}", violations[0])));
        }
    }
    Err(Error::RejectionLimit(SAMPLING_REJECTION_LIMIT))
}

/// Perturbations `Δ` with `‖Δ(m,n,k)‖ ≤ radius(m,n,k)`, used by oracles only.
#[derive(Debug, Clone, PartialEq)]
pub struct PerturbationSet(pub ChannelTensor);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BallSampling {
    /// Uniform on the sphere of radius `ε`.
    Surface,
    /// Uniform in the ball of radius `ε`.
    Interior,
}

/// Uniform direction on the unit sphere of `C^n` (as `R^{2n}`).
pub fn sample_unit_direction<R: Rng + ?Sized>(rng: &mut R, n: usize) -> CVector {
    loop {
        let v = DVector::from_fn(n, |_, _| sample_cn(rng));
        let r = norm(&v);
        if r > 1e-300 {
            return v / C64::from(r);
        }
    }
}

pub fn sample_in_ball<R: Rng + ?Sized>(rng: &mut R, n: usize, eps: f64, mode: BallSampling) -> CVector {
    if eps == 0.0 {
        return CVector::zeros(n);
    }
    let dir = sample_unit_direction(rng, n);
    let r = match mode {
        BallSampling::Surface => eps,
        BallSampling::Interior => eps * rng.gen::<f64>().powf(1.0 / (2 * n) as f64),
    };
    dir * C64::from(r)
}

pub fn sample_perturbation(instance: &NetworkInstance, seed: u64, mode: BallSampling) -> PerturbationSet {
    let c = instance.config();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut t = ChannelTensor::zeros(c);
    for m in 0..c.m {
        for n in 0..c.m {
            for k in 0..c.k {
                *t.get_mut(m, n, k) = sample_in_ball(&mut rng, c.n, instance.radius(m, n, k), mode);
            }
        }
    }
    PerturbationSet(t)
}

impl PerturbationSet {
    pub fn zeros(config: NetworkConfig) -> Self {
        Self(ChannelTensor::zeros(config))
    }

    /// True channels `estimate + Δ`.
    pub fn true_channels(&self, instance: &NetworkInstance) -> ChannelTensor {
        instance.estimates().plus(&self.0)
    }

    pub fn within_radii(&self, instance: &NetworkInstance, tol: f64) -> bool {
        let c = instance.config();
        (0..c.m).all(|m| (0..c.m).all(|n| (0..c.k).all(|k| norm(self.0.get(m, n, k)) <= instance.radius(m, n, k) + tol)))
    }
}

/// One `N x K` precoding matrix per cell; column `k` is the beam of user `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct PrecoderSet {
    cells: Vec<CMatrix>,
}

impl PrecoderSet {
    pub fn new(cells: Vec<CMatrix>) -> Result<Self> {
        if let Some(first) = cells.first() {
            let (r, c) = first.shape();
            if cells.iter().any(|p| p.shape() != (r, c)) {
                return Err(Error::ShapeMismatch("precoders of unequal shape".into()));
            }
        }
        Ok(Self { cells })
    }

    pub fn zeros(config: NetworkConfig) -> Self {
        Self { cells: vec![CMatrix::zeros(config.n, config.k); config.m] }
    }

    /// Unit-direction matched filters at equal per-user power `P/K`.
    pub fn matched_filter(instance: &NetworkInstance) -> Self {
        let c = instance.config();
        let cells = (0..c.m)
            .map(|m| {
                let amp = (instance.power(m) / c.k as f64).sqrt();
                CMatrix::from_fn(c.n, c.k, |i, k| {
                    let h = instance.estimate(m, m, k);
                    h[i].conj() * (amp / norm(h))
                })
            })
            .collect();
        Self { cells }
    }

    pub fn cells(&self) -> usize {
        self.cells.len()
    }

    pub fn matrix(&self, m: usize) -> &CMatrix {
        &self.cells[m]
    }

    pub fn matrix_mut(&mut self, m: usize) -> &mut CMatrix {
        &mut self.cells[m]
    }

    pub fn set_matrix(&mut self, m: usize, phi: CMatrix) {
        self.cells[m] = phi;
    }

    pub fn beam(&self, m: usize, k: usize) -> CVector {
        self.cells[m].column(k).into_owned()
    }

    /// The cell-`m` precoder with column `k` removed.
    pub fn without_beam(&self, m: usize, k: usize) -> CMatrix {
        self.cells[m].clone().remove_column(k)
    }

    /// Transmit power `‖Φ_m‖²_F`.
    pub fn power(&self, m: usize) -> f64 {
        self.cells[m].iter().map(|z| z.norm_sqr()).sum()
    }

    pub fn gram(&self, m: usize) -> CMatrix {
        let p = &self.cells[m];
        p * p.adjoint()
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self { cells: self.cells.iter().map(|p| p * C64::from(s)).collect() }
    }

    pub fn respects_budget(&self, instance: &NetworkInstance, rel_tol: f64) -> bool {
        (0..self.cells.len()).all(|m| self.power(m) <= instance.power(m) * (1.0 + rel_tol))
    }

    /// Rotates every beam so that its nominal own-channel gain is real and non-negative.
    pub fn align_phases(&mut self, instance: &NetworkInstance) {
        let c = instance.config();
        for m in 0..c.m {
            for k in 0..c.k {
                let s = row_times(instance.estimate(m, m, k), &self.beam(m, k));
                if s.norm() > 0.0 {
                    let rot = s.conj() / s.norm();
                    let mut col = self.cells[m].column_mut(k);
                    col.iter_mut().for_each(|z| *z *= rot);
                }
            }
        }
    }
}

/// Real, strictly positive single-tap receive equalizers, one per user.
#[derive(Debug, Clone, PartialEq)]
pub struct EqualizerSet {
    k: usize,
    values: Vec<f64>,
}

impl EqualizerSet {
    pub fn new(config: NetworkConfig, values: Vec<f64>) -> Result<Self> {
        if values.len() != config.users() {
            return Err(Error::ShapeMismatch(format!("expected {} equalizers, got {}", config.users(), values.len())));
        }
        if let Some(&bad) = values.iter().find(|&&f| !(f > 0.0)) {
            return Err(Error::NonPositiveEqualizer(bad));
        }
        Ok(Self { k: config.k, values })
    }

    pub fn constant(config: NetworkConfig, f: f64) -> Result<Self> {
        Self::new(config, vec![f; config.users()])
    }

    pub fn get(&self, m: usize, k: usize) -> f64 {
        self.values[m * self.k + k]
    }

    pub fn set(&mut self, m: usize, k: usize, f: f64) {
        assert!(f > 0.0, "equalizer must stay positive");
        self.values[m * self.k + k] = f;
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self { k: self.k, values: self.values.iter().map(|f| f * s).collect() }
    }

    /// Nominal (zero-radius) MMSE equalizers restricted to the positive reals.
    ///
    /// Beams whose own gain has a non-positive real part get `f = 1`.
    pub fn nominal_mmse(instance: &NetworkInstance, precoders: &PrecoderSet) -> Self {
        let c = instance.config();
        let mut values = Vec::with_capacity(c.users());
        for m in 0..c.m {
            for k in 0..c.k {
                let h = instance.estimate(m, m, k);
                let s = row_times(h, &precoders.beam(m, k));
                let mut total = 1.0;
                for n in 0..c.m {
                    let hn = instance.estimate(m, n, k);
                    let phi = precoders.matrix(n);
                    for l in 0..c.k {
                        total += row_times(hn, &phi.column(l).into_owned()).norm_sqr();
                    }
                }
                values.push(if s.re > 0.0 { total / s.re } else { 1.0 });
            }
        }
        Self { k: c.k, values }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawInstance {
    config: NetworkConfig,
    estimates: Vec<Vec<Vec<Vec<[f64; 2]>>>>,
    radii: Vec<Vec<Vec<f64>>>,
    powers: Vec<f64>,
    weights: Vec<Vec<f64>>,
}

fn shape(what: &str, expected: usize, got: usize, at: &str) -> Error {
    Error::ShapeMismatch(format!("{what}{at}: expected {expected} entries, got {got}"))
}

fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

impl NetworkInstance {
    /// Serializes to the instance JSON format with 17 significant digits per float.
    pub fn to_json(&self) -> Result<String> {
        let c = self.config;
        let finite = |x: f64| -> Result<String> {
            if x.is_finite() {
                Ok(fmt_f64(x))
            } else {
                Err(Error::InvalidConfig("cannot serialize non-finite value".into()))
            }
        };
        let mut s = String::new();
        s.push_str(&format!("{{\"config\":{{\"m\":{},\"k\":{},\"n\":{}}},\"estimates\":[", c.m, c.k, c.n));
        for m in 0..c.m {
            if m > 0 {
                s.push(',');
            }
            s.push('[');
            for n in 0..c.m {
                if n > 0 {
                    s.push(',');
                }
                s.push('[');
                for k in 0..c.k {
                    if k > 0 {
                        s.push(',');
                    }
                    s.push('[');
                    for (i, z) in self.estimate(m, n, k).iter().enumerate() {
                        if i > 0 {
                            s.push(',');
                        }
                        s.push_str(&format!("[{},{}]", finite(z.re)?, finite(z.im)?));
                    }
                    s.push(']');
                }
                s.push(']');
            }
            s.push(']');
        }
        s.push_str("],\"radii\":[");
        for m in 0..c.m {
            if m > 0 {
                s.push(',');
            }
            s.push('[');
            for n in 0..c.m {
                if n > 0 {
                    s.push(',');
                }
                let row: Result<Vec<String>> = (0..c.k).map(|k| finite(self.radius(m, n, k))).collect();
                s.push_str(&format!("[{}]", row?.join(",")));
            }
            s.push(']');
        }
        let powers: Result<Vec<String>> = self.powers.iter().map(|&p| finite(p)).collect();
        s.push_str(&format!("],\"powers\":[{}],\"weights\":[", powers?.join(",")));
        for m in 0..c.m {
            if m > 0 {
                s.push(',');
            }
            let row: Result<Vec<String>> = (0..c.k).map(|k| finite(self.weight(m, k))).collect();
            s.push_str(&format!("[{}]", row?.join(",")));
        }
        s.push_str("]}\n");
        Ok(s)
    }

    /// Parses the instance JSON format; reports byte offsets for syntax errors.
    pub fn from_json(text: &str) -> Result<Self> {
        let raw: RawInstance = serde_json::from_str(text).map_err(|e| json_error(text, &e))?;
        let c = raw.config;
        c.check()?;
        if raw.estimates.len() != c.m {
            return Err(shape("estimates", c.m, raw.estimates.len(), ""));
        }
        let mut data = Vec::with_capacity(c.links());
        for (m, per_m) in raw.estimates.iter().enumerate() {
            if per_m.len() != c.m {
                return Err(shape("estimates", c.m, per_m.len(), &format!("[{m}]")));
            }
            for (n, per_n) in per_m.iter().enumerate() {
                if per_n.len() != c.k {
                    return Err(shape("estimates", c.k, per_n.len(), &format!("[{m}][{n}]")));
                }
                for (k, h) in per_n.iter().enumerate() {
                    if h.len() != c.n {
                        return Err(shape("estimates", c.n, h.len(), &format!("[{m}][{n}][{k}]")));
                    }
                    data.push(DVector::from_iterator(c.n, h.iter().map(|p| C64::new(p[0], p[1]))));
                }
            }
        }
        if raw.radii.len() != c.m {
            return Err(shape("radii", c.m, raw.radii.len(), ""));
        }
        let mut radii = Vec::with_capacity(c.links());
        for (m, per_m) in raw.radii.iter().enumerate() {
            if per_m.len() != c.m {
                return Err(shape("radii", c.m, per_m.len(), &format!("[{m}]")));
            }
            for (n, per_n) in per_m.iter().enumerate() {
                if per_n.len() != c.k {
                    return Err(shape("radii", c.k, per_n.len(), &format!("[{m}][{n}]")));
                }
                radii.extend_from_slice(per_n);
            }
        }
        if raw.powers.len() != c.m {
            return Err(shape("powers", c.m, raw.powers.len(), ""));
        }
        if raw.weights.len() != c.m {
            return Err(shape("weights", c.m, raw.weights.len(), ""));
        }
        let mut weights = Vec::with_capacity(c.users());
        for (m, row) in raw.weights.iter().enumerate() {
            if row.len() != c.k {
                return Err(shape("weights", c.k, row.len(), &format!("[{m}]")));
            }
            weights.extend_from_slice(row);
        }
        NetworkInstance::new(ChannelTensor::from_vec(c, data)?, radii, raw.powers, weights)
    }
}

/// Converts a serde_json error position (line/column) into a byte offset.
pub(crate) fn json_error(text: &str, e: &serde_json::Error) -> Error {
    let (line, col) = (e.line(), e.column());
    let offset = if line == 0 {
        0
    } else {
        let mut off = 0usize;
        for (i, l) in text.split_inclusive('\n').enumerate() {
            if i + 1 == line {
                off += col.min(l.len());
                break;
            }
            off += l.len();
        }
        off.min(text.len())
    };
    Error::Parse { offset, message: e.to_string() }
}

pub fn save_instance(instance: &NetworkInstance, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, instance.to_json()?)?;
    Ok(())
}

pub fn load_instance(path: impl AsRef<Path>) -> Result<NetworkInstance> {
    let text = std::fs::read_to_string(path)?;
    NetworkInstance::from_json(&text)
}

/// Nominal SINR of user `(m, k)` for the given true channels.
pub fn sinr_on_channels(channels: &ChannelTensor, precoders: &PrecoderSet, m: usize, k: usize) -> f64 {
    let c = channels.config();
    let h = channels.get(m, m, k);
    let phi = precoders.matrix(m);
    let signal = row_times(h, &phi.column(k).into_owned()).norm_sqr();
    let mut denom = 1.0;
    for l in 0..c.k {
        if l != k {
            denom += row_times(h, &phi.column(l).into_owned()).norm_sqr();
        }
    }
    for n in 0..c.m {
        if n == m {
            continue;
        }
        let hn = channels.get(m, n, k);
        let phin = precoders.matrix(n);
        for l in 0..c.k {
            denom += row_times(hn, &phin.column(l).into_owned()).norm_sqr();
        }
    }
    signal / denom
}

/// Squared norm helper re-exported for callers composing their own metrics.
pub fn channel_energy(h: &CVector) -> f64 {
    norm_sqr(h)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy(eps: f64) -> NetworkInstance {
        let c = NetworkConfig::new(2, 2, 2).unwrap();
        sample_instance(c, &RadiiSpec::Uniform(eps), &PowerSpec::UniformLinear(10.0), &WeightSpec::Uniform(1.0), 7).unwrap()
    }

    #[test]
    fn own_radius_violation_is_reported_one_based() {
        let c = NetworkConfig::new(1, 1, 2).unwrap();
        let h = ChannelTensor::from_vec(c, vec![DVector::from_vec(vec![C64::new(1.0, 0.0), C64::new(0.0, 0.0)])]).unwrap();
        let inst = NetworkInstance::new(h, vec![1.5], vec![1.0], vec![1.0]).unwrap();
        let v = inst.validate();
        assert_eq!(v, vec![Violation::OwnRadiusTooLarge { m: 0, k: 0 }]);
        assert_eq!(v[0].to_string(), "own-channel radius exceeds estimate norm at (m=1,k=1)");
    }

    #[test]
    fn zero_radius_instance_validates() {
        assert!(toy(0.0).validate().is_empty());
    }

    #[test]
    fn zero_power_flags_the_cell() {
        let inst = toy(0.0).with_powers(vec![10.0, 0.0]).unwrap();
        assert_eq!(inst.validate(), vec![Violation::NonPositivePower { m: 1 }]);
        assert!(inst.validate()[0].to_string().contains("cell 2"));
    }

    #[test]
    fn sampling_is_deterministic() {
        assert_eq!(toy(0.1), toy(0.1));
    }

    #[test]
    fn pathological_radii_hit_the_rejection_limit() {
        let c = NetworkConfig::new(1, 1, 1).unwrap();
        let err = sample_instance(c, &RadiiSpec::Uniform(50.0), &PowerSpec::UniformLinear(1.0), &WeightSpec::Uniform(1.0), 1).unwrap_err();
        assert!(matches!(err, Error::RejectionLimit(1000)));
    }

    #[test]
    fn zero_radius_perturbations_vanish() {
        let inst = toy(0.0);
        let p = sample_perturbation(&inst, 3, BallSampling::Interior);
        assert!(p.0.iter().all(|d| norm(d) == 0.0));
    }

    #[test]
    fn surface_perturbations_have_exact_radius() {
        let inst = toy(0.1);
        let p = sample_perturbation(&inst, 3, BallSampling::Surface);
        for d in p.0.iter() {
            assert!((norm(d) - 0.1).abs() < 1e-12);
        }
    }

    #[test]
    fn json_round_trip_is_bitwise() {
        let inst = toy(0.05);
        let back = NetworkInstance::from_json(&inst.to_json().unwrap()).unwrap();
        assert_eq!(inst, back);
    }

    #[test]
    fn truncated_json_reports_offset() {
        let text = toy(0.05).to_json().unwrap();
        let cut = &text[..text.len() / 2];
        match NetworkInstance::from_json(cut) {
            Err(Error::Parse { offset, .. }) => assert!(offset > 0 && offset <= cut.len()),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn extra_power_entry_is_shape_mismatch() {
        let text = toy(0.05).to_json().unwrap();
        let v: serde_json::Value = serde_json::from_str(&text).unwrap();
        let mut v = v;
        v["powers"] = serde_json::json!([10.0, 10.0, 10.0]);
        let err = NetworkInstance::from_json(&v.to_string()).unwrap_err();
        assert!(matches!(err, Error::ShapeMismatch(ref s) if s.contains("powers")), "{err}");
    }

    #[test]
    fn matched_filter_spends_the_budget() {
        let inst = toy(0.1);
        let p = PrecoderSet::matched_filter(&inst);
        for m in 0..2 {
            assert!((p.power(m) - 10.0).abs() < 1e-9);
        }
    }
}
