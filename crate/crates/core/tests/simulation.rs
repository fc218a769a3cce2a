use std::collections::BTreeSet;
use std::sync::OnceLock;

use proptest::prelude::*;
use rhythmsim::assignment::InventoryContext;
use rhythmsim::estimation::fit_artifacts;
use rhythmsim::simulator::{run_monte_carlo, Parallelism, SimLog};
use rhythmsim::synth::{synthesize_corpus, SynthSpec};
use rhythmsim::{PoiInventory, RhythmArtifacts, SimConfig};

struct Fixture {
    inventory: PoiInventory,
    artifacts: RhythmArtifacts,
}

fn fixture() -> &'static Fixture {
    static CELL: OnceLock<Fixture> = OnceLock::new();
    CELL.get_or_init(|| {
        let spec = SynthSpec {
            n_users: 40,
            n_days: 4,
            seed: 3,
            ..SynthSpec::default()
        };
        let corpus = synthesize_corpus(&spec).unwrap();
        let cfg = SimConfig {
            sim_n_days: 4,
            ..SimConfig::default()
        };
        let (artifacts, _) = fit_artifacts(&corpus.events, &corpus.inventory, &cfg, None).unwrap();
        Fixture {
            inventory: corpus.inventory,
            artifacts,
        }
    })
}

fn simulate(cfg: &SimConfig, par: Parallelism) -> SimLog {
    let f = fixture();
    let ctx = InventoryContext::new(f.inventory.clone(), f.artifacts.poi_priors.clone(), BTreeSet::new(), cfg).unwrap();
    run_monte_carlo(&f.artifacts, &ctx, cfg, "baseline", par).unwrap()
}

#[test]
fn artifacts_survive_a_json_round_trip() {
    let f = fixture();
    let json = f.artifacts.to_json().unwrap();
    let back = RhythmArtifacts::from_json(&json).unwrap();
    assert_eq!(back, f.artifacts);
    assert_eq!(back.to_json().unwrap(), json);

    let cfg = SimConfig {
        sim_users_n: 300,
        sim_n_days: 4,
        ..SimConfig::default()
    };
    let ctx = InventoryContext::new(f.inventory.clone(), back.poi_priors.clone(), BTreeSet::new(), &cfg).unwrap();
    let reloaded = run_monte_carlo(&back, &ctx, &cfg, "baseline", Parallelism::Auto).unwrap();
    assert_eq!(reloaded, simulate(&cfg, Parallelism::Auto));
}

#[test]
fn tampered_artifacts_are_rejected() {
    let json = fixture().artifacts.to_json().unwrap();
    let mut v: serde_json::Value = serde_json::from_str(&json).unwrap();
    v["stop_hazard"]["hazard"][3] = serde_json::json!(1.5);
    assert!(RhythmArtifacts::from_json(&v.to_string()).is_err());
    assert!(RhythmArtifacts::from_json("{}").is_err());
}

#[test]
fn worker_count_does_not_change_the_log() {
    let cfg = SimConfig {
        sim_users_n: 700,
        mc_runs: 2,
        sim_n_days: 4,
        ..SimConfig::default()
    };
    let seq = simulate(&cfg, Parallelism::Sequential);
    for n in [1, 3, 8] {
        assert_eq!(simulate(&cfg, Parallelism::Threads(n)), seq, "{n} threads");
    }
}

#[test]
fn sim_log_csv_round_trips() {
    let cfg = SimConfig {
        sim_users_n: 150,
        mc_runs: 2,
        sim_n_days: 4,
        ..SimConfig::default()
    };
    let log = simulate(&cfg, Parallelism::Auto);
    let bytes = log.to_csv_bytes();
    let back = SimLog::read_csv(bytes.as_slice(), "mem").unwrap();
    assert_eq!(back.to_csv_bytes(), bytes);
    // Start times are written at nanosecond resolution.
    assert_eq!(back.n_events(), log.n_events());
    for ((ca, a), (cb, b)) in back.events().zip(log.events()) {
        assert_eq!((ca.run, ca.user, ca.day), (cb.run, cb.user, cb.day));
        assert!((a.start_s - b.start_s).abs() < 1e-6);
        assert_eq!((a.seq, a.hour, a.category, a.dwell_min, &a.poi_id, a.terminal), (b.seq, b.hour, b.category, b.dwell_min, &b.poi_id, b.terminal));
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 24, ..ProptestConfig::default() })]

    #[test]
    fn chains_respect_the_day_contract(
        seed in any::<u64>(),
        users in 1usize..60,
        runs in 1usize..3,
        max_events in 1usize..60,
        min_dwell in 1.0f64..30.0,
    ) {
        let cfg = SimConfig {
            random_seed: seed,
            sim_users_n: users,
            mc_runs: runs,
            max_events,
            min_dwell_min: min_dwell,
            sim_n_days: 4,
            ..SimConfig::default()
        };
        let log = simulate(&cfg, Parallelism::Sequential);
        prop_assert_eq!(log.chains.len(), users * runs);
        let cap = cfg.cap_seconds();
        for chain in &log.chains {
            let ev = &chain.events;
            prop_assert!(!ev.is_empty() && ev.len() <= max_events);
            prop_assert!(ev.last().unwrap().terminal);
            prop_assert_eq!(ev.iter().filter(|e| e.terminal).count(), 1);
            for (i, e) in ev.iter().enumerate() {
                let last = i + 1 == ev.len();
                prop_assert_eq!(e.seq as usize, i);
                prop_assert!(e.dwell_min >= min_dwell || (last && e.truncated));
                prop_assert!(e.end_s() <= cap + 1e-9);
                prop_assert_eq!(e.hour as usize, (e.start_s / 3600.0).floor() as usize);
                prop_assert!(!e.truncated || last);
                if i > 0 {
                    prop_assert!((ev[i - 1].end_s() - e.start_s).abs() < 1e-6);
                }
            }
        }
    }

    #[test]
    fn same_seed_same_log(seed in any::<u64>(), users in 1usize..40) {
        let cfg = SimConfig { random_seed: seed, sim_users_n: users, sim_n_days: 4, ..SimConfig::default() };
        prop_assert_eq!(simulate(&cfg, Parallelism::Auto), simulate(&cfg, Parallelism::Sequential));
    }
}
