use std::fs;

use bcucb::contract::ChainMode;
use bcucb::metrics::CSV_HEADER;
use bcucb::runner::{self, plan, run_replicas, RunRequest, ScenarioSource, SweepReport};
use bcucb::sim::{run_scenario, RunOptions};
use bcucb::{load_scenario, ConfigError, Error, Preset};

fn preset(p: Preset, horizon: u64, seed: u64) -> bcucb::ScenarioConfig {
    load_scenario(&format!("preset = \"{}\"\nhorizon = {horizon}\nmaster_seed = {seed}\n", p.name()))
        .unwrap()
        .config
}

fn csv(cfg: &bcucb::ScenarioConfig, chain: ChainMode) -> String {
    let out = run_scenario(
        cfg,
        RunOptions {
            chain,
            keep_records: true,
        },
    )
    .unwrap();
    out.ledger.records.iter().map(|r| r.csv_row() + "\n").collect()
}

#[test]
fn every_preset_resolves_and_round_trips() {
    for p in Preset::ALL {
        let cfg = preset(p, 400, 3);
        p.check_regime(&cfg).unwrap();
        let again = load_scenario(&cfg.to_toml()).unwrap();
        assert_eq!(again.config, cfg, "{p}");
    }
}

#[test]
fn overrides_beat_the_preset() {
    let cfg = load_scenario("preset = \"theorem1\"\nT = 700\nepsilon = 0.2\nseed = 9\n").unwrap().config;
    assert_eq!((cfg.horizon, cfg.epsilon, cfg.master_seed), (700, 0.2, 9));
    let base = preset(Preset::Theorem1, 700, 9);
    assert_eq!(cfg.malicious, base.malicious);
}

#[test]
fn config_errors_are_typed() {
    assert!(matches!(load_scenario("preset = \"theorem9\"\n"), Err(ConfigError::UnknownPreset(_))));
    assert!(matches!(load_scenario("K = ["), Err(ConfigError::Parse(_))));
    let err = load_scenario("preset = \"no-attack\"\nnum_arms = 0\n").unwrap_err();
    assert!(matches!(err, ConfigError::Invalid { .. }), "{err}");
}

#[test]
fn runs_are_byte_identical_for_a_seed() {
    for p in [Preset::NoAttack, Preset::Theorem1, Preset::Theorem3] {
        let cfg = preset(p, 300, 11);
        assert_eq!(csv(&cfg, ChainMode::HeadOnly), csv(&cfg, ChainMode::HeadOnly), "{p}");
    }
    let a = csv(&preset(Preset::Theorem1, 300, 11), ChainMode::HeadOnly);
    let b = csv(&preset(Preset::Theorem1, 300, 12), ChainMode::HeadOnly);
    assert_ne!(a, b);
}

#[test]
fn chain_mode_does_not_change_the_trajectory() {
    let cfg = preset(Preset::Theorem3, 250, 5);
    let full = csv(&cfg, ChainMode::Full);
    assert_eq!(full, csv(&cfg, ChainMode::HeadOnly));
    assert_eq!(full, csv(&cfg, ChainMode::Off));

    let head = |mode| {
        run_scenario(&cfg, RunOptions { chain: mode, keep_records: false })
            .unwrap()
            .head
    };
    assert_eq!(head(ChainMode::Full), head(ChainMode::HeadOnly));
}

#[test]
fn job_count_does_not_change_results() {
    let mut req = RunRequest::new(ScenarioSource::Preset(Preset::Theorem1));
    req.horizons = vec![200, 300];
    req.seeds = (0..4).collect();
    let (replicas, _) = plan(&req).unwrap();
    let options = RunOptions {
        chain: ChainMode::Off,
        keep_records: false,
    };
    let seq: Vec<_> = run_replicas(&replicas, 1, options).unwrap().into_iter().map(|o| o.summary).collect();
    let par: Vec<_> = run_replicas(&replicas, 3, options).unwrap().into_iter().map(|o| o.summary).collect();
    assert_eq!(seq, par);
}

#[test]
fn runner_writes_csv_json_and_sweep() {
    let dir = tempfile::tempdir().unwrap();
    let mut req = RunRequest::new(ScenarioSource::Preset(Preset::NoAttack));
    req.horizons = vec![100, 200, 400];
    req.seeds = vec![1, 2];
    req.out = Some(dir.path().to_path_buf());
    req.chain = ChainMode::Full;
    let report = runner::run(&req).unwrap();
    assert_eq!(report.rows.len(), 3);
    assert!(report.diagnostics.is_some());
    assert!(report.rows.iter().all(|r| r.mean_cost == 0.0));

    let base = dir.path().join("no-attack");
    let csv = fs::read_to_string(base.join("T200_seed2.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some(CSV_HEADER));
    assert_eq!(lines.count(), 200);
    assert!(base.join("T400_seed1.json").exists());
    assert!(base.join("T100_seed1.chain.jsonl").exists());

    let sweep: SweepReport = serde_json::from_str(&fs::read_to_string(base.join("sweep.json")).unwrap()).unwrap();
    assert_eq!(sweep, report);
}

#[test]
fn documents_name_their_output_directory() {
    let dir = tempfile::tempdir().unwrap();
    let mut req = RunRequest::new(ScenarioSource::Document {
        name: "tiny".into(),
        text: "preset = \"theorem2\"\nT = 120\nseed = 4\n".into(),
    });
    req.out = Some(dir.path().to_path_buf());
    req.chain = ChainMode::Off;
    let report = runner::run(&req).unwrap();
    assert_eq!(report.scenario, "tiny");
    assert!(report.diagnostics.is_none());
    assert!(dir.path().join("tiny/T120_seed4.csv").exists());
    assert!(!dir.path().join("tiny/T120_seed4.chain.jsonl").exists());
}

#[test]
fn unwritable_output_is_an_io_error() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("occupied");
    fs::write(&file, "x").unwrap();
    let mut req = RunRequest::new(ScenarioSource::Preset(Preset::NoAttack));
    req.horizons = vec![50];
    req.out = Some(file);
    assert!(matches!(runner::run(&req), Err(Error::Io { .. })));
}
