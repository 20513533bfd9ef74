use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use robustbf::distributed::{run_algorithm2_greedy_with, run_algorithm2_with, Alg2Options};
use robustbf::harness::{
    certified_rates, emit_figure, parse_csv, run_algorithm, run_and_write, snr_saturation_check, Algorithm, Design, ExperimentConfig,
    Figure, RunSettings,
};
use robustbf::instance::{db_to_linear, load_instance, sample_instance, NetworkConfig, NetworkInstance, PowerSpec, RadiiSpec, WeightSpec};

#[derive(Args, Clone)]
struct Common {
    /// Experiment config (JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Uniform uncertainty radius.
    #[arg(long, global = true)]
    eps: Option<f64>,
    /// Per-cell power budget in dB.
    #[arg(long = "snr-db", global = true)]
    snr_db: Option<f64>,
    /// Bisection tolerance, or outer tolerance for sumrate.
    #[arg(long, global = true)]
    tol: Option<f64>,
    /// Output file (directory for `plot`); stdout when absent.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Args, Clone)]
struct Source {
    /// Instance JSON; sampled from --seed/--eps/--snr-db when absent.
    #[arg(long)]
    instance: Option<PathBuf>,
    #[arg(long, default_value_t = 2)]
    m: usize,
    #[arg(long, default_value_t = 2)]
    k: usize,
    #[arg(long, default_value_t = 2)]
    n: usize,
}

#[derive(Subcommand)]
enum Command {
    /// Check an instance file or an experiment config.
    Validate { path: Option<PathBuf> },
    /// Draw a random instance and write it as JSON.
    Sample {
        #[command(flatten)]
        source: Source,
    },
    /// Centralized robust max-min via power minimization.
    Maxmin {
        #[command(flatten)]
        source: Source,
    },
    /// Centralized min-max worst-case MSE.
    MseMaxmin {
        #[command(flatten)]
        source: Source,
    },
    /// Weighted sum-rate alternating optimization.
    Sumrate {
        #[command(flatten)]
        source: Source,
    },
    /// Limited-cooperation max-min designs.
    Distributed {
        #[command(flatten)]
        source: Source,
        #[arg(long, value_enum, default_value_t = Method::Alg2)]
        method: Method,
        /// Write the message log as JSON lines (alg2 and greedy).
        #[arg(long)]
        log: Option<PathBuf>,
    },
    /// Zero-forcing and SLINR comparators.
    Baseline {
        #[command(flatten)]
        source: Source,
        #[arg(long, value_enum, default_value_t = Baseline::ZfMaxmin)]
        kind: Baseline,
    },
    /// Run the experiment described by --config.
    Sweep {
        /// Also print the SNR saturation report.
        #[arg(long)]
        saturation: bool,
    },
    /// Render SVG figures from a results CSV.
    Plot {
        csv: PathBuf,
        #[arg(long, value_enum)]
        figure: Option<FigureArg>,
    },
}

#[derive(ValueEnum, Clone, Copy)]
enum Method {
    Alg2,
    Greedy,
    Dual,
}

#[derive(ValueEnum, Clone, Copy)]
enum Baseline {
    ZfMaxmin,
    ZfSumrate,
    Slinr,
    SlinrSearch,
}

#[derive(ValueEnum, Clone, Copy)]
enum FigureArg {
    NormalizedMinRate,
    MinRateVsSnr,
    SumRateVsSnr,
}

#[derive(Parser)]
#[command(name = "robustbf", version, about = "Worst-case robust precoder design for multi-cell MISO downlinks")]
struct Top {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Serialize)]
struct WireCell {
    re: Vec<Vec<f64>>,
    im: Vec<Vec<f64>>,
}

#[derive(Serialize)]
struct Report {
    algo: String,
    min_rate: f64,
    sum_rate: f64,
    per_user_rates: Vec<f64>,
    iterations: usize,
    precoders: Vec<WireCell>,
    #[serde(skip_serializing_if = "Option::is_none")]
    equalizers: Option<Vec<f64>>,
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => std::fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn load_config(common: &Common) -> Result<Option<ExperimentConfig>> {
    let Some(p) = &common.config else { return Ok(None) };
    let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
    Ok(Some(ExperimentConfig::from_json(&text).with_context(|| format!("parsing {}", p.display()))?))
}

fn instance(common: &Common, source: &Source) -> Result<NetworkInstance> {
    let mut inst = match &source.instance {
        Some(p) => load_instance(p).with_context(|| format!("loading {}", p.display()))?,
        None => {
            let cfg = load_config(common)?;
            let network = match &cfg {
                Some(c) => c.network,
                None => NetworkConfig::new(source.m, source.k, source.n)?,
            };
            let eps = common.eps.or(cfg.as_ref().map(|c| c.eps[0])).unwrap_or(0.1);
            let db = common.snr_db.or(cfg.as_ref().map(|c| c.power_db)).unwrap_or(10.0);
            let seed = common.seed.or(cfg.as_ref().map(|c| c.seeds[0])).unwrap_or(0);
            sample_instance(network, &RadiiSpec::Uniform(eps), &PowerSpec::UniformDb(db), &WeightSpec::Uniform(1.0), seed)?
        }
    };
    if source.instance.is_some() {
        if let Some(e) = common.eps {
            inst = inst.with_uniform_radius(e);
        }
        if let Some(db) = common.snr_db {
            inst = inst.with_powers(vec![db_to_linear(db); inst.config().m])?;
        }
    }
    let violations = inst.validate();
    if let Some(v) = violations.first() {
        bail!("instance is not usable: {v}");
    }
    Ok(inst)
}

fn settings(common: &Common, algo: Algorithm) -> RunSettings {
    let mut s = RunSettings::default();
    if let Some(t) = common.tol {
        if algo == Algorithm::Sumrate {
            s.outer_tol = t;
        } else {
            s.delta = t;
        }
    }
    s
}

fn report(inst: &NetworkInstance, algo: &str, design: &Design) -> Result<String> {
    let rates = certified_rates(inst, design)?;
    let min_rate = rates.iter().copied().fold(f64::INFINITY, f64::min);
    let sum_rate = rates.iter().zip(inst.weights()).map(|(r, a)| r * a).sum();
    let precoders = (0..design.precoders.cells())
        .map(|m| {
            let phi = design.precoders.matrix(m);
            WireCell {
                re: phi.row_iter().map(|r| r.iter().map(|z| z.re).collect()).collect(),
                im: phi.row_iter().map(|r| r.iter().map(|z| z.im).collect()).collect(),
            }
        })
        .collect();
    let r = Report {
        algo: algo.to_string(),
        min_rate,
        sum_rate,
        per_user_rates: rates,
        iterations: design.iterations,
        precoders,
        equalizers: design.equalizers.as_ref().map(|e| e.values().to_vec()),
    };
    Ok(serde_json::to_string_pretty(&r)? + "\n")
}

fn solve(common: &Common, source: &Source, algo: Algorithm) -> Result<()> {
    let inst = instance(common, source)?;
    let design = run_algorithm(&inst, algo, &settings(common, algo))?;
    emit(common.out.as_deref(), &report(&inst, algo.name(), &design)?)
}

fn run(top: Top) -> Result<()> {
    let common = top.common;
    match top.command {
        Command::Validate { path } => {
            if let Some(cfg) = load_config(&common)? {
                println!("config ok: {} rows", cfg.seeds.len() * cfg.eps.len() * cfg.gamma_db.len() * cfg.algorithms.len());
            }
            if let Some(p) = path {
                let inst = load_instance(&p).with_context(|| format!("loading {}", p.display()))?;
                let violations = inst.validate();
                for v in &violations {
                    println!("{v}");
                }
                if !violations.is_empty() {
                    bail!("{} violation(s)", violations.len());
                }
                println!("instance ok");
            } else if common.config.is_none() {
                bail!("nothing to validate: pass an instance path or --config");
            }
            Ok(())
        }
        Command::Sample { source } => {
            let inst = instance(&common, &source)?;
            emit(common.out.as_deref(), &(inst.to_json()? + "\n"))
        }
        Command::Maxmin { source } => solve(&common, &source, Algorithm::Maxmin),
        Command::MseMaxmin { source } => solve(&common, &source, Algorithm::MseMaxmin),
        Command::Sumrate { source } => solve(&common, &source, Algorithm::Sumrate),
        Command::Distributed { source, method, log } => {
            let inst = instance(&common, &source)?;
            let s = settings(&common, Algorithm::Alg2);
            let opts = Alg2Options { delta: s.delta, ..Alg2Options::default() };
            let (name, design) = match method {
                Method::Dual => ("dual", run_algorithm(&inst, Algorithm::Dual, &s)?),
                Method::Alg2 | Method::Greedy => {
                    let (name, r) = if matches!(method, Method::Alg2) {
                        ("alg2", run_algorithm2_with(&inst, &opts)?)
                    } else {
                        ("alg2_greedy", run_algorithm2_greedy_with(&inst, &opts)?)
                    };
                    if let Some(p) = &log {
                        std::fs::write(p, r.log.to_json_lines()).with_context(|| format!("writing {}", p.display()))?;
                    }
                    (name, Design { precoders: r.precoders, equalizers: None, iterations: r.commits.len() })
                }
            };
            emit(common.out.as_deref(), &report(&inst, name, &design)?)
        }
        Command::Baseline { source, kind } => {
            let algo = match kind {
                Baseline::ZfMaxmin => Algorithm::ZfMaxmin,
                Baseline::ZfSumrate => Algorithm::ZfSumrate,
                Baseline::Slinr => Algorithm::Slinr,
                Baseline::SlinrSearch => Algorithm::SlinrSearch,
            };
            solve(&common, &source, algo)
        }
        Command::Sweep { saturation } => {
            let Some(mut cfg) = load_config(&common)? else { bail!("sweep needs --config") };
            if let Some(s) = common.seed {
                cfg.seeds = vec![s];
            }
            if let Some(e) = common.eps {
                cfg.eps = vec![e];
            }
            if let Some(db) = common.snr_db {
                cfg.power_db = db;
            }
            if let Some(t) = common.tol {
                cfg.delta = t;
            }
            if let Some(o) = &common.out {
                cfg.output.csv = Some(o.display().to_string());
            }
            cfg.validate()?;
            let (result, summary) = run_and_write(&cfg)?;
            if cfg.output.csv.is_none() {
                print!("{}", robustbf::harness::write_csv(&result.rows));
            }
            if !summary.failures.is_empty() {
                eprintln!("{} row(s) failed; see the summary", summary.failures.len());
            }
            if saturation {
                let rep = snr_saturation_check(&result.rows, 1e-4, 0.05);
                eprintln!("{}", serde_json::to_string_pretty(&rep)?);
            }
            Ok(())
        }
        Command::Plot { csv, figure } => {
            let text = std::fs::read_to_string(&csv).with_context(|| format!("reading {}", csv.display()))?;
            let rows = parse_csv(&text).with_context(|| format!("parsing {}", csv.display()))?;
            let figures: Vec<Figure> = match figure {
                Some(FigureArg::NormalizedMinRate) => vec![Figure::NormalizedMinRate],
                Some(FigureArg::MinRateVsSnr) => vec![Figure::MinRateVsSnr],
                Some(FigureArg::SumRateVsSnr) => vec![Figure::SumRateVsSnr],
                None => Figure::ALL.to_vec(),
            };
            match &common.out {
                Some(dir) => {
                    std::fs::create_dir_all(dir)?;
                    for f in figures {
                        std::fs::write(dir.join(f.file_name()), emit_figure(&rows, f))?;
                    }
                }
                None if figures.len() == 1 => print!("{}", emit_figure(&rows, figures[0])),
                None => bail!("plotting several figures needs --out <dir>"),
            }
            Ok(())
        }
    }
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    run(Top::parse())
}
