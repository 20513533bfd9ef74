//! Every parser entry point against the checked-in fuzz corpus, plus
//! round-trip properties.

use std::path::PathBuf;

use proptest::prelude::*;
use robustbf::conic::dump::{parse_program, write_program};
use robustbf::distributed::{run_algorithm2, EventLog, Message, WireMatrix};
use robustbf::harness::{parse_csv, write_csv, Algorithm, ExperimentConfig, ResultRow};
use robustbf::instance::{sample_instance, PowerSpec, RadiiSpec, WeightSpec};
use robustbf::maxmin::{build_power_program, PowerObjective};
use robustbf::{NetworkConfig, NetworkInstance};

fn corpus(target: &str) -> Vec<(String, String)> {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fuzz/corpus").join(target);
    let mut out: Vec<_> = std::fs::read_dir(&dir)
        .unwrap_or_else(|e| panic!("{}: {e}", dir.display()))
        .map(|e| {
            let p = e.unwrap().path();
            (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read_to_string(&p).unwrap())
        })
        .collect();
    out.sort();
    assert!(!out.is_empty(), "empty corpus for {target}");
    out
}

fn expect_invalid(name: &str) -> bool {
    ["truncated", "unknown", "missing"].iter().any(|p| name.starts_with(p))
}

#[test]
fn instance_corpus() {
    for (name, text) in corpus("instance_json") {
        let r = NetworkInstance::from_json(&text);
        assert_eq!(r.is_err(), expect_invalid(&name), "{name}: {r:?}");
    }
}

#[test]
fn config_corpus() {
    for (name, text) in corpus("experiment_config") {
        let r = ExperimentConfig::from_json(&text);
        assert_eq!(r.is_err(), expect_invalid(&name), "{name}: {r:?}");
    }
}

#[test]
fn checked_in_configs_parse() {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    for e in std::fs::read_dir(dir).unwrap() {
        let p = e.unwrap().path();
        ExperimentConfig::from_json(&std::fs::read_to_string(&p).unwrap()).unwrap_or_else(|e| panic!("{}: {e}", p.display()));
    }
}

#[test]
fn csv_corpus() {
    for (name, text) in corpus("results_csv") {
        let r = parse_csv(&text);
        assert_eq!(r.is_err(), expect_invalid(&name), "{name}: {r:?}");
    }
    let rows = parse_csv(&corpus("results_csv").into_iter().find(|(n, _)| n == "reordered.csv").unwrap().1).unwrap();
    assert_eq!(rows[0].algo, Algorithm::ZfMaxmin);
    assert_eq!(rows[0].per_user_rates, vec![0.2, 0.2]);
}

#[test]
fn event_log_corpus() {
    for (name, text) in corpus("event_log") {
        let r = EventLog::from_json_lines(&text);
        assert_eq!(r.is_err(), expect_invalid(&name), "{name}: {r:?}");
    }
}

#[test]
fn program_corpus() {
    for (name, text) in corpus("program_dump") {
        let r = parse_program(&text);
        assert_eq!(r.is_err(), expect_invalid(&name), "{name}: {r:?}");
        if let Ok(p) = r {
            assert_eq!(write_program(&p), text, "{name}");
        }
    }
}

#[test]
fn algorithm2_log_replays() {
    let inst = sample_instance(
        NetworkConfig::new(2, 2, 2).unwrap(),
        &RadiiSpec::Uniform(0.1),
        &PowerSpec::UniformDb(10.0),
        &WeightSpec::Uniform(1.0),
        5,
    )
    .unwrap();
    let res = run_algorithm2(&inst, 1e-3).unwrap();
    let back = EventLog::from_json_lines(&res.log.to_json_lines()).unwrap();
    assert_eq!(back, res.log);
    back.check(2, inst.powers()).unwrap();
    // Every committed proposal shows up as a commit record, in order.
    let committed: Vec<usize> = back.proposals().iter().filter(|p| p.commits > 0).map(|p| p.from).collect();
    assert_eq!(committed, res.commits.iter().map(|c| c.cell).collect::<Vec<_>>());
}

fn finite() -> impl Strategy<Value = f64> {
    prop_oneof![-1e6..1e6f64, Just(0.0), 1e-300..1e-200f64]
}

fn row() -> impl Strategy<Value = ResultRow> {
    (any::<u64>(), 0.0..1.0f64, -10.0..50.0f64, 0..Algorithm::ALL.len(), prop::collection::vec(finite(), 1..6), any::<u32>(), 0..500usize)
        .prop_map(|(seed, eps, gamma_db, a, rates, wall, iters)| ResultRow {
            seed,
            eps,
            gamma_db,
            algo: Algorithm::ALL[a],
            min_rate: rates.iter().copied().fold(f64::INFINITY, f64::min),
            sum_rate: rates.iter().sum(),
            per_user_rates: rates,
            wall_ms: wall as u64,
            iters,
        })
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 64, ..ProptestConfig::default() })]

    #[test]
    fn csv_round_trips(rows in prop::collection::vec(row(), 0..8)) {
        prop_assert_eq!(parse_csv(&write_csv(&rows)).unwrap(), rows);
    }

    #[test]
    fn instance_json_round_trips(m in 1usize..4, k in 1usize..3, n in 1usize..4, seed in any::<u64>(), eps in 0.0..0.2f64) {
        let inst = sample_instance(NetworkConfig::new(m, k, n).unwrap(), &RadiiSpec::Uniform(eps), &PowerSpec::UniformDb(10.0), &WeightSpec::Uniform(1.0), seed).unwrap();
        let back = NetworkInstance::from_json(&inst.to_json().unwrap()).unwrap();
        prop_assert_eq!(back.to_json().unwrap(), inst.to_json().unwrap());
    }

    #[test]
    fn event_log_round_trips(entries in prop::collection::vec((0usize..3, 0usize..3, 0usize..4, 0.0..10.0f64), 0..10)) {
        let mut log = EventLog::new();
        for (i, &(from, to, kind, v)) in entries.iter().enumerate() {
            let message = match kind {
                0 => Message::Update { from },
                1 => Message::Error { from, to },
                2 => Message::BetaExchange { from, k: 0, m: to, n: from, value: v },
                _ => Message::BroadcastW { from, w: WireMatrix { dim: 1, re: vec![v], im: vec![0.0] } },
            };
            log.push(i / 2, message);
        }
        prop_assert_eq!(EventLog::from_json_lines(&log.to_json_lines()).unwrap(), log);
    }

    #[test]
    fn truncated_program_dumps_never_panic(cut in 0usize..2000, seed in 0u64..4) {
        let inst = sample_instance(NetworkConfig::new(2, 1, 2).unwrap(), &RadiiSpec::Uniform(0.1), &PowerSpec::UniformDb(10.0), &WeightSpec::Uniform(1.0), seed).unwrap();
        let text = write_program(&build_power_program(&inst, 1.0, PowerObjective::MaxNormalized).unwrap().program);
        let cut = cut.min(text.len());
        if let Ok(p) = parse_program(&text[..cut]) {
            prop_assert!(p.check().is_ok());
        }
    }
}
