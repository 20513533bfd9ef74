//! Experiment configuration, Monte-Carlo sweeps, result persistence and plots.
//!
//! A sweep runs every algorithm on every `(seed, ε, γ)` cell. Channels depend
//! only on the seed; `ε` replaces every radius and `γ` (in dB) scales every
//! power budget. Each row reports certified lower bounds on the worst-case
//! rates (nats), so a failed design degrades to the trivial bound 0 instead
//! of aborting the sweep.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::time::Instant;

use log::warn;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::{equal_profile, slinr_beamforming_with, slinr_profile_search_with, zero_forcing, SlinrOptions, ZfObjective};
use crate::distributed::{distributed_maxmin_with, run_algorithm2_greedy_with, run_algorithm2_with, Alg2Options, DualOptions};
use crate::error::{Error, Result};
use crate::instance::{
    db_to_linear, json_error, sample_instance, EqualizerSet, NetworkConfig, NetworkInstance, PowerSpec, PrecoderSet, RadiiSpec, WeightSpec,
};
use crate::maxmin::{maxmin_via_power, minmax_mse_gevp};
use crate::sumrate::{weighted_sumrate_ao_with, SumRateOptions};
use crate::worst_case::{lower_bound_rates, worst_case_mse};

/// Column header of the results CSV.
pub const CSV_HEADER: &str = "seed,eps,gamma_db,algo,min_rate,sum_rate,per_user_rates,wall_ms,iters";
/// Version tag of the CSV schema, recorded in the summary.
pub const CSV_SCHEMA: &str = "v1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    /// Centralized max-min through power minimization.
    Maxmin,
    /// Centralized min-max worst-case MSE.
    MseMaxmin,
    /// Weighted sum-rate alternating optimization.
    Sumrate,
    /// Unilateral updates with veto.
    Alg2,
    Alg2Greedy,
    /// Dual decomposition wrapped in bisection.
    Dual,
    ZfMaxmin,
    ZfSumrate,
    /// Robust SLINR beams with an equal power split.
    Slinr,
    /// Robust SLINR beams with a grid search over power profiles.
    SlinrSearch,
}

impl Algorithm {
    pub const ALL: [Algorithm; 10] = [
        Algorithm::Maxmin,
        Algorithm::MseMaxmin,
        Algorithm::Sumrate,
        Algorithm::Alg2,
        Algorithm::Alg2Greedy,
        Algorithm::Dual,
        Algorithm::ZfMaxmin,
        Algorithm::ZfSumrate,
        Algorithm::Slinr,
        Algorithm::SlinrSearch,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Maxmin => "maxmin",
            Algorithm::MseMaxmin => "mse_maxmin",
            Algorithm::Sumrate => "sumrate",
            Algorithm::Alg2 => "alg2",
            Algorithm::Alg2Greedy => "alg2_greedy",
            Algorithm::Dual => "dual",
            Algorithm::ZfMaxmin => "zf_maxmin",
            Algorithm::ZfSumrate => "zf_sumrate",
            Algorithm::Slinr => "slinr",
            Algorithm::SlinrSearch => "slinr_search",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|a| a.name() == s)
    }
}

impl std::fmt::Display for Algorithm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputPaths {
    #[serde(default)]
    pub csv: Option<String>,
    #[serde(default)]
    pub summary: Option<String>,
    /// Directory receiving the SVG figures.
    #[serde(default)]
    pub figures: Option<String>,
}

fn default_power_db() -> f64 {
    10.0
}

fn default_gamma() -> Vec<f64> {
    (0..=8).map(|i| 5.0 * i as f64).collect()
}

fn default_delta() -> f64 {
    1e-3
}

fn default_outer_tol() -> f64 {
    1e-4
}

fn default_max_outer() -> usize {
    100
}

fn default_slinr_grid() -> usize {
    8
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub network: NetworkConfig,
    /// Base per-cell power budget in dB; `γ` is added on top.
    #[serde(default = "default_power_db")]
    pub power_db: f64,
    pub eps: Vec<f64>,
    #[serde(default = "default_gamma")]
    pub gamma_db: Vec<f64>,
    pub seeds: Vec<u64>,
    pub algorithms: Vec<Algorithm>,
    /// Per-user weights, cell-major; all ones when absent.
    #[serde(default)]
    pub weights: Option<Vec<f64>>,
    /// Relative bisection tolerance shared by every bisection-based design.
    #[serde(default = "default_delta")]
    pub delta: f64,
    #[serde(default = "default_outer_tol")]
    pub outer_tol: f64,
    #[serde(default = "default_max_outer")]
    pub max_outer: usize,
    #[serde(default = "default_slinr_grid")]
    pub slinr_grid: usize,
    #[serde(default)]
    pub threads: Option<usize>,
    /// Record wall-clock times; off by default so output bytes are reproducible.
    #[serde(default)]
    pub timing: bool,
    #[serde(default)]
    pub output: OutputPaths,
}

impl ExperimentConfig {
    /// Parses and validates a JSON config.
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| json_error(text, &e))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("configs always serialize")
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |s: String| Err(Error::InvalidExperiment(s));
        self.network.check()?;
        if self.eps.is_empty() || self.gamma_db.is_empty() || self.seeds.is_empty() || self.algorithms.is_empty() {
            return bad("eps, gamma_db, seeds and algorithms must all be non-empty".into());
        }
        if let Some(e) = self.eps.iter().find(|e| !(**e >= 0.0) || !e.is_finite()) {
            return bad(format!("radius {e} must be finite and non-negative"));
        }
        if !self.power_db.is_finite() || self.gamma_db.iter().any(|g| !g.is_finite()) {
            return bad("power levels must be finite".into());
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return bad(format!("delta must lie in (0, 1), got {}", self.delta));
        }
        if !(self.outer_tol > 0.0) || self.max_outer == 0 || self.slinr_grid == 0 {
            return bad("outer_tol, max_outer and slinr_grid must be positive".into());
        }
        if let Some(w) = &self.weights {
            if w.len() != self.network.users() {
                return bad(format!("expected {} weights, got {}", self.network.users(), w.len()));
            }
            if w.iter().any(|a| !(*a > 0.0) || !a.is_finite()) {
                return bad("weights must be finite and positive".into());
            }
        }
        if self.threads == Some(0) {
            return bad("threads must be positive".into());
        }
        Ok(())
    }

    /// Instance of `seed` at the base power with every radius set to `eps`.
    /// Channels are drawn at the largest configured radius so that they do
    /// not change across the `ε` levels.
    pub fn instance(&self, seed: u64, eps: f64, gamma_db: f64) -> Result<NetworkInstance> {
        let eps_max = self.eps.iter().copied().fold(eps, f64::max);
        let weights = match &self.weights {
            Some(w) => WeightSpec::PerUser(w.clone()),
            None => WeightSpec::Uniform(1.0),
        };
        let base = sample_instance(self.network, &RadiiSpec::Uniform(eps_max), &PowerSpec::UniformDb(self.power_db), &weights, seed)?;
        Ok(base.with_uniform_radius(eps).with_power_scale(db_to_linear(gamma_db)))
    }
}

/// Settings shared by every algorithm run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunSettings {
    pub delta: f64,
    pub outer_tol: f64,
    pub max_outer: usize,
    pub slinr_grid: usize,
}

impl Default for RunSettings {
    fn default() -> Self {
        Self { delta: default_delta(), outer_tol: default_outer_tol(), max_outer: default_max_outer(), slinr_grid: default_slinr_grid() }
    }
}

impl From<&ExperimentConfig> for RunSettings {
    fn from(c: &ExperimentConfig) -> Self {
        Self { delta: c.delta, outer_tol: c.outer_tol, max_outer: c.max_outer, slinr_grid: c.slinr_grid }
    }
}

/// A design and how it was reached.
#[derive(Debug, Clone, PartialEq)]
pub struct Design {
    pub precoders: PrecoderSet,
    pub equalizers: Option<EqualizerSet>,
    pub iterations: usize,
}

pub fn run_algorithm(instance: &NetworkInstance, algo: Algorithm, s: &RunSettings) -> Result<Design> {
    let plain = |precoders: PrecoderSet, iterations: usize| Design { precoders, equalizers: None, iterations };
    Ok(match algo {
        Algorithm::Maxmin => {
            let r = maxmin_via_power(instance, s.delta)?;
            plain(r.precoders, r.trace.steps.len())
        }
        Algorithm::MseMaxmin => {
            let r = minmax_mse_gevp(instance, s.delta)?;
            Design { precoders: r.precoders, equalizers: Some(r.equalizers), iterations: r.trace.steps.len() }
        }
        Algorithm::Sumrate => {
            let opts = SumRateOptions { outer_tol: s.outer_tol, max_outer: s.max_outer, ..SumRateOptions::default() };
            let r = weighted_sumrate_ao_with(instance, &opts, None)?;
            Design { precoders: r.precoders, equalizers: Some(r.equalizers), iterations: r.stats.outer_iterations }
        }
        Algorithm::Alg2 => {
            let r = run_algorithm2_with(instance, &Alg2Options { delta: s.delta, ..Alg2Options::default() })?;
            plain(r.precoders, r.commits.len())
        }
        Algorithm::Alg2Greedy => {
            let r = run_algorithm2_greedy_with(instance, &Alg2Options { delta: s.delta, ..Alg2Options::default() })?;
            plain(r.precoders, r.commits.len())
        }
        Algorithm::Dual => {
            let r = distributed_maxmin_with(instance, s.delta, &DualOptions::default())?;
            plain(r.precoders, r.iterations)
        }
        Algorithm::ZfMaxmin => plain(zero_forcing(instance, ZfObjective::MaxMin)?, 0),
        Algorithm::ZfSumrate => plain(zero_forcing(instance, ZfObjective::SumRate)?, 0),
        Algorithm::Slinr => {
            let opts = SlinrOptions { delta: s.delta, ..SlinrOptions::default() };
            plain(slinr_beamforming_with(instance, &equal_profile(instance), &opts)?, 0)
        }
        Algorithm::SlinrSearch => {
            let opts = SlinrOptions { delta: s.delta, ..SlinrOptions::default() };
            plain(slinr_profile_search_with(instance, s.slinr_grid, &opts)?.precoders, 0)
        }
    })
}

/// Certified per-user worst-case rate lower bounds of a design, in nats:
/// `log(1 + sinr_lower)`, raised to `−log(wcmse)` when equalizers are known.
pub fn certified_rates(instance: &NetworkInstance, design: &Design) -> Result<Vec<f64>> {
    let mut rates = lower_bound_rates(instance, &design.precoders);
    if let Some(eq) = &design.equalizers {
        let c = instance.config();
        for m in 0..c.m {
            for k in 0..c.k {
                let mse = worst_case_mse(instance, &design.precoders, eq, m, k)?;
                let u = c.user_index(m, k);
                rates[u] = rates[u].max((-mse.ln()).max(0.0));
            }
        }
    }
    Ok(rates)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResultRow {
    pub seed: u64,
    pub eps: f64,
    pub gamma_db: f64,
    pub algo: Algorithm,
    pub min_rate: f64,
    /// Weighted sum of the per-user rates.
    pub sum_rate: f64,
    pub per_user_rates: Vec<f64>,
    pub wall_ms: u64,
    pub iters: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RowFailure {
    pub seed: u64,
    pub eps: f64,
    pub gamma_db: f64,
    pub algo: Algorithm,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentResult {
    pub rows: Vec<ResultRow>,
    pub failures: Vec<RowFailure>,
}

fn run_row(cfg: &ExperimentConfig, seed: u64, eps: f64, gamma_db: f64, algo: Algorithm) -> (ResultRow, Option<RowFailure>) {
    let start = Instant::now();
    let outcome = cfg.instance(seed, eps, gamma_db).and_then(|inst| {
        let design = run_algorithm(&inst, algo, &RunSettings::from(cfg))?;
        let rates = certified_rates(&inst, &design)?;
        Ok((inst, design, rates))
    });
    let wall_ms = if cfg.timing { start.elapsed().as_millis() as u64 } else { 0 };
    match outcome {
        Ok((inst, design, rates)) => {
            let min_rate = rates.iter().copied().fold(f64::INFINITY, f64::min);
            let sum_rate = rates.iter().zip(inst.weights()).map(|(r, a)| r * a).sum();
            (ResultRow { seed, eps, gamma_db, algo, min_rate, sum_rate, per_user_rates: rates, wall_ms, iters: design.iterations }, None)
        }
        Err(e) => {
            warn!("{algo} failed on seed {seed}, eps {eps}, gamma {gamma_db} dB: {e}");
            let users = cfg.network.users();
            let row =
                ResultRow { seed, eps, gamma_db, algo, min_rate: 0.0, sum_rate: 0.0, per_user_rates: vec![0.0; users], wall_ms, iters: 0 };
            (row, Some(RowFailure { seed, eps, gamma_db, algo, error: e.to_string() }))
        }
    }
}

fn row_order(a: &ResultRow, b: &ResultRow) -> std::cmp::Ordering {
    a.seed.cmp(&b.seed).then(a.eps.total_cmp(&b.eps)).then(a.gamma_db.total_cmp(&b.gamma_db)).then(a.algo.cmp(&b.algo))
}

/// Runs one row per `(seed, ε, γ, algorithm)`, sorted in that order.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentResult> {
    cfg.validate()?;
    let mut tasks = Vec::new();
    for &seed in &cfg.seeds {
        for &eps in &cfg.eps {
            for &g in &cfg.gamma_db {
                for &algo in &cfg.algorithms {
                    tasks.push((seed, eps, g, algo));
                }
            }
        }
    }
    let work = || tasks.par_iter().map(|&(s, e, g, a)| run_row(cfg, s, e, g, a)).collect::<Vec<_>>();
    let out = match cfg.threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::InvalidExperiment(format!("cannot build thread pool: {e}")))?
            .install(work),
        None => work(),
    };
    let (mut rows, failures): (Vec<_>, Vec<_>) = out.into_iter().unzip();
    rows.sort_by(row_order);
    Ok(ExperimentResult { rows, failures: failures.into_iter().flatten().collect() })
}

pub fn write_csv(rows: &[ResultRow]) -> String {
    let mut s = String::from(CSV_HEADER);
    s.push('\n');
    for r in rows {
        let rates: Vec<String> = r.per_user_rates.iter().map(|x| x.to_string()).collect();
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{},{}",
            r.seed,
            r.eps,
            r.gamma_db,
            r.algo,
            r.min_rate,
            r.sum_rate,
            rates.join(";"),
            r.wall_ms,
            r.iters
        );
    }
    s
}

/// Parses a results CSV. Columns are located by header name; extra columns are ignored.
pub fn parse_csv(text: &str) -> Result<Vec<ResultRow>> {
    let mut lines = text.split_inclusive('\n');
    let header = lines.next().unwrap_or("");
    let names: Vec<&str> = header.trim_end_matches(['\r', '\n']).split(',').map(str::trim).collect();
    let col = |name: &str| names.iter().position(|n| *n == name).ok_or_else(|| Error::MissingColumn(name.to_string()));
    let idx = [
        col("seed")?,
        col("eps")?,
        col("gamma_db")?,
        col("algo")?,
        col("min_rate")?,
        col("sum_rate")?,
        col("per_user_rates")?,
        col("wall_ms")?,
        col("iters")?,
    ];
    let mut offset = header.len();
    let mut rows = Vec::new();
    for line in lines {
        let body = line.trim_end_matches(['\r', '\n']);
        if !body.trim().is_empty() {
            let fields: Vec<&str> = body.split(',').collect();
            let err = |message: String| Error::Parse { offset, message };
            let get = |i: usize| {
                fields.get(idx[i]).map(|f| f.trim()).ok_or_else(|| err(format!("expected {} fields, found {}", names.len(), fields.len())))
            };
            let float = |i: usize| -> Result<f64> {
                let f = get(i)?;
                let v: f64 = f.parse().map_err(|_| err(format!("`{f}` is not a number")))?;
                if v.is_finite() {
                    Ok(v)
                } else {
                    Err(err(format!("`{f}` is not finite")))
                }
            };
            let int = |i: usize| -> Result<u64> {
                let f = get(i)?;
                f.parse().map_err(|_| err(format!("`{f}` is not a non-negative integer")))
            };
            let algo_name = get(3)?;
            let algo = Algorithm::from_name(algo_name).ok_or_else(|| err(format!("unknown algorithm `{algo_name}`")))?;
            let rates_field = get(6)?;
            let per_user_rates = if rates_field.is_empty() {
                Vec::new()
            } else {
                rates_field
                    .split(';')
                    .map(|x| x.trim().parse::<f64>().ok().filter(|v| v.is_finite()).ok_or_else(|| err(format!("bad per-user rate `{x}`"))))
                    .collect::<Result<_>>()?
            };
            rows.push(ResultRow {
                seed: int(0)?,
                eps: float(1)?,
                gamma_db: float(2)?,
                algo,
                min_rate: float(4)?,
                sum_rate: float(5)?,
                per_user_rates,
                wall_ms: int(7)?,
                iters: int(8)? as usize,
            });
        }
        offset += line.len();
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroupSummary {
    pub algo: Algorithm,
    pub eps: f64,
    pub gamma_db: f64,
    pub count: usize,
    pub mean_min_rate: f64,
    pub mean_sum_rate: f64,
    /// Mean of per-seed ratios to the `ε = 0` reference; `None` without one.
    pub mean_normalized_min_rate: Option<f64>,
    pub mean_normalized_sum_rate: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Summary {
    pub schema: String,
    pub rows: usize,
    pub groups: Vec<GroupSummary>,
    pub failures: Vec<RowFailure>,
}

/// `ε = 0` reference of a row: max-min rates are normalized by the centralized
/// max-min design when it ran, sum rates by the sum-rate design, and otherwise
/// each algorithm by itself.
fn reference<'a>(rows: &'a [ResultRow], r: &ResultRow, preferred: Algorithm) -> Option<&'a ResultRow> {
    let find = |a: Algorithm| rows.iter().find(|x| x.algo == a && x.seed == r.seed && x.eps == 0.0 && x.gamma_db == r.gamma_db);
    find(preferred).or_else(|| find(r.algo))
}

/// Normalized max-min rate of every row, `None` where no reference exists or it is zero.
pub fn normalized_min_rates(rows: &[ResultRow]) -> Vec<Option<f64>> {
    rows.iter().map(|r| reference(rows, r, Algorithm::Maxmin).filter(|b| b.min_rate > 0.0).map(|b| r.min_rate / b.min_rate)).collect()
}

pub fn normalized_sum_rates(rows: &[ResultRow]) -> Vec<Option<f64>> {
    rows.iter().map(|r| reference(rows, r, Algorithm::Sumrate).filter(|b| b.sum_rate > 0.0).map(|b| r.sum_rate / b.sum_rate)).collect()
}

fn mean(v: impl Iterator<Item = f64>) -> Option<f64> {
    let (s, n) = v.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    (n > 0).then(|| s / n as f64)
}

pub fn summarize(result: &ExperimentResult) -> Summary {
    let rows = &result.rows;
    let nmin = normalized_min_rates(rows);
    let nsum = normalized_sum_rates(rows);
    let mut groups: BTreeMap<(Algorithm, u64, u64), Vec<usize>> = BTreeMap::new();
    for (i, r) in rows.iter().enumerate() {
        groups.entry((r.algo, r.eps.to_bits(), r.gamma_db.to_bits())).or_default().push(i);
    }
    let mut out: Vec<GroupSummary> = groups
        .into_values()
        .map(|idx| {
            let first = &rows[idx[0]];
            let all_some = |v: &[Option<f64>]| -> Option<f64> {
                let vals: Option<Vec<f64>> = idx.iter().map(|&i| v[i]).collect();
                mean(vals?.into_iter())
            };
            GroupSummary {
                algo: first.algo,
                eps: first.eps,
                gamma_db: first.gamma_db,
                count: idx.len(),
                mean_min_rate: mean(idx.iter().map(|&i| rows[i].min_rate)).unwrap_or(0.0),
                mean_sum_rate: mean(idx.iter().map(|&i| rows[i].sum_rate)).unwrap_or(0.0),
                mean_normalized_min_rate: all_some(&nmin),
                mean_normalized_sum_rate: all_some(&nsum),
            }
        })
        .collect();
    out.sort_by(|a, b| a.algo.cmp(&b.algo).then(a.eps.total_cmp(&b.eps)).then(a.gamma_db.total_cmp(&b.gamma_db)));
    Summary { schema: CSV_SCHEMA.into(), rows: rows.len(), groups: out, failures: result.failures.clone() }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MonotoneViolation {
    pub seed: u64,
    pub from_db: f64,
    pub to_db: f64,
    pub drop: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SaturationLevel {
    pub algo: Algorithm,
    pub eps: f64,
    pub seeds: usize,
    pub violations: Vec<MonotoneViolation>,
    /// Mean relative min-rate gain over the last `γ` step.
    pub last_step_gain: f64,
    /// Mean relative min-rate gain over the last 10 dB, when the grid covers it.
    pub decade_gain: Option<f64>,
    /// Whether the last-step gain is below the threshold; `None` at `ε = 0`,
    /// where no saturation is predicted.
    pub saturated: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SaturationReport {
    pub tolerance: f64,
    pub threshold: f64,
    pub levels: Vec<SaturationLevel>,
}

/// Checks that min rates grow monotonically in `γ` (up to `tolerance`,
/// absolute in nats) and measures how much they still grow at the top of the grid.
pub fn snr_saturation_check(rows: &[ResultRow], tolerance: f64, threshold: f64) -> SaturationReport {
    let mut by_level: BTreeMap<(Algorithm, u64), BTreeMap<u64, Vec<(f64, f64)>>> = BTreeMap::new();
    for r in rows {
        by_level.entry((r.algo, r.eps.to_bits())).or_default().entry(r.seed).or_default().push((r.gamma_db, r.min_rate));
    }
    let mut levels = Vec::new();
    for ((algo, eps_bits), seeds) in by_level {
        let eps = f64::from_bits(eps_bits);
        let mut violations = Vec::new();
        let mut last = Vec::new();
        let mut decade = Vec::new();
        for (seed, mut pts) in seeds.clone() {
            pts.sort_by(|a, b| a.0.total_cmp(&b.0));
            for w in pts.windows(2) {
                if w[1].1 < w[0].1 - tolerance {
                    violations.push(MonotoneViolation { seed, from_db: w[0].0, to_db: w[1].0, drop: w[0].1 - w[1].1 });
                }
            }
            let gain = |a: f64, b: f64| if a > 0.0 { (b - a) / a } else { 0.0 };
            if let [.., a, b] = pts.as_slice() {
                last.push(gain(a.1, b.1));
            }
            if let Some(&(top_db, top)) = pts.last() {
                if let Some(&(_, base)) = pts.iter().find(|p| (p.0 - (top_db - 10.0)).abs() < 1e-9) {
                    decade.push(gain(base, top));
                }
            }
        }
        let last_step_gain = mean(last.into_iter()).unwrap_or(0.0);
        levels.push(SaturationLevel {
            algo,
            eps,
            seeds: seeds.len(),
            violations,
            last_step_gain,
            decade_gain: mean(decade.into_iter()),
            saturated: (eps > 0.0).then_some(last_step_gain < threshold),
        });
    }
    SaturationReport { tolerance, threshold, levels }
}

/// One plotted line.
#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub name: String,
    pub points: Vec<(f64, f64)>,
}

const PALETTE: [&str; 8] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf"];

fn nice_range(lo: f64, hi: f64) -> (f64, f64) {
    if !(lo.is_finite() && hi.is_finite()) {
        return (0.0, 1.0);
    }
    if hi - lo < 1e-12 {
        return (lo - 0.5, hi + 0.5);
    }
    let pad = 0.05 * (hi - lo);
    (lo - pad, hi + pad)
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// Deterministic SVG line plot with markers and a legend.
pub fn svg_plot(title: &str, x_label: &str, y_label: &str, series: &[Series]) -> String {
    let (w, h) = (640.0, 420.0);
    let (left, right, top, bottom) = (70.0, 170.0, 40.0, 50.0);
    let pw = w - left - right;
    let ph = h - top - bottom;
    let pts = series.iter().flat_map(|s| s.points.iter());
    let (x0, x1) =
        nice_range(pts.clone().map(|p| p.0).fold(f64::INFINITY, f64::min), pts.clone().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max));
    let (y0, y1) = nice_range(pts.clone().map(|p| p.1).fold(f64::INFINITY, f64::min), pts.map(|p| p.1).fold(f64::NEG_INFINITY, f64::max));
    let sx = |x: f64| left + (x - x0) / (x1 - x0) * pw;
    let sy = |y: f64| top + ph - (y - y0) / (y1 - y0) * ph;
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{}" y="22" text-anchor="middle" font-size="14">{}</text>"#, left + pw / 2.0, xml_escape(title));
    let _ = writeln!(s, r#"<rect x="{left}" y="{top}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#);
    for i in 0..=4 {
        let t = i as f64 / 4.0;
        let (xv, yv) = (x0 + t * (x1 - x0), y0 + t * (y1 - y0));
        let (px, py) = (sx(xv), sy(yv));
        let _ = writeln!(s, r##"<line x1="{px:.2}" y1="{}" x2="{px:.2}" y2="{}" stroke="#ddd"/>"##, top, top + ph);
        let _ = writeln!(s, r##"<line x1="{left}" y1="{py:.2}" x2="{}" y2="{py:.2}" stroke="#ddd"/>"##, left + pw);
        let _ = writeln!(s, r#"<text x="{px:.2}" y="{}" text-anchor="middle">{xv:.3}</text>"#, top + ph + 16.0);
        let _ = writeln!(s, r#"<text x="{}" y="{:.2}" text-anchor="end">{yv:.3}</text>"#, left - 6.0, py + 4.0);
    }
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#, left + pw / 2.0, h - 12.0, xml_escape(x_label));
    let _ = writeln!(
        s,
        r#"<text x="16" y="{:.2}" text-anchor="middle" transform="rotate(-90 16 {:.2})">{}</text>"#,
        top + ph / 2.0,
        top + ph / 2.0,
        xml_escape(y_label)
    );
    for (i, ser) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        if ser.points.len() > 1 {
            let path: Vec<String> = ser.points.iter().map(|p| format!("{:.2},{:.2}", sx(p.0), sy(p.1))).collect();
            let _ = writeln!(s, r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#, path.join(" "));
        }
        for p in &ser.points {
            let _ = writeln!(s, r#"<circle cx="{:.2}" cy="{:.2}" r="3" fill="{color}"/>"#, sx(p.0), sy(p.1));
        }
        let ly = top + 14.0 + 18.0 * i as f64;
        let lx = left + pw + 12.0;
        let _ = writeln!(s, r#"<line x1="{lx}" y1="{ly}" x2="{}" y2="{ly}" stroke="{color}" stroke-width="2"/>"#, lx + 20.0);
        let _ = writeln!(s, r#"<text x="{}" y="{}">{}</text>"#, lx + 26.0, ly + 4.0, xml_escape(&ser.name));
    }
    s.push_str("</svg>\n");
    s
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Figure {
    /// Normalized max-min rate per seed, one series per (algorithm, ε).
    NormalizedMinRate,
    /// Mean min rate against γ, one series per (algorithm, ε).
    MinRateVsSnr,
    /// Mean weighted sum rate against γ, one series per (algorithm, ε).
    SumRateVsSnr,
}

impl Figure {
    pub const ALL: [Figure; 3] = [Figure::NormalizedMinRate, Figure::MinRateVsSnr, Figure::SumRateVsSnr];

    pub fn file_name(self) -> &'static str {
        match self {
            Figure::NormalizedMinRate => "normalized_min_rate.svg",
            Figure::MinRateVsSnr => "min_rate_vs_snr.svg",
            Figure::SumRateVsSnr => "sum_rate_vs_snr.svg",
        }
    }
}

fn series_name(algo: Algorithm, eps: f64) -> String {
    format!("{algo} eps={eps}")
}

pub fn emit_figure(rows: &[ResultRow], figure: Figure) -> String {
    let mut groups: BTreeMap<(Algorithm, u64), BTreeMap<u64, Vec<f64>>> = BTreeMap::new();
    match figure {
        Figure::NormalizedMinRate => {
            // Lowest γ only, one point per seed.
            let g0 = rows.iter().map(|r| r.gamma_db).fold(f64::INFINITY, f64::min);
            for (r, v) in rows.iter().zip(normalized_min_rates(rows)) {
                if let (true, Some(v)) = (r.gamma_db == g0, v) {
                    groups.entry((r.algo, r.eps.to_bits())).or_default().entry(r.seed).or_default().push(v);
                }
            }
        }
        Figure::MinRateVsSnr | Figure::SumRateVsSnr => {
            for r in rows {
                let v = if figure == Figure::MinRateVsSnr { r.min_rate } else { r.sum_rate };
                groups.entry((r.algo, r.eps.to_bits())).or_default().entry(r.gamma_db.to_bits()).or_default().push(v);
            }
        }
    }
    let series: Vec<Series> = groups
        .into_iter()
        .map(|((algo, eps), pts)| {
            let mut points: Vec<(f64, f64)> = pts
                .into_iter()
                .map(|(x, v)| {
                    let x = if figure == Figure::NormalizedMinRate { x as f64 } else { f64::from_bits(x) };
                    (x, v.iter().sum::<f64>() / v.len() as f64)
                })
                .collect();
            points.sort_by(|a, b| a.0.total_cmp(&b.0));
            Series { name: series_name(algo, f64::from_bits(eps)), points }
        })
        .collect();
    match figure {
        Figure::NormalizedMinRate => svg_plot("Normalized max-min rate", "seed", "rate / nominal optimum", &series),
        Figure::MinRateVsSnr => svg_plot("Min worst-case rate vs SNR", "gamma (dB)", "rate (nats)", &series),
        Figure::SumRateVsSnr => svg_plot("Weighted sum rate vs SNR", "gamma (dB)", "rate (nats)", &series),
    }
}

/// Runs the experiment and writes whatever outputs the config names.
fn write_creating_dirs(path: &str, contents: &str) -> Result<()> {
    if let Some(dir) = std::path::Path::new(path).parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    std::fs::write(path, contents)?;
    Ok(())
}

pub fn run_and_write(cfg: &ExperimentConfig) -> Result<(ExperimentResult, Summary)> {
    let result = run_experiment(cfg)?;
    let summary = summarize(&result);
    if let Some(p) = &cfg.output.csv {
        write_creating_dirs(p, &write_csv(&result.rows))?;
    }
    if let Some(p) = &cfg.output.summary {
        write_creating_dirs(p, &(serde_json::to_string_pretty(&summary).expect("summaries always serialize") + "\n"))?;
    }
    if let Some(dir) = &cfg.output.figures {
        std::fs::create_dir_all(dir)?;
        for f in Figure::ALL {
            std::fs::write(std::path::Path::new(dir).join(f.file_name()), emit_figure(&result.rows, f))?;
        }
    }
    Ok((result, summary))
}
