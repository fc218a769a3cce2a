//! Person-day chain generation and paired-seed Monte Carlo orchestration.

use std::io::{Read, Write};

use chrono::{Duration, NaiveDate, NaiveDateTime, Timelike};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::assignment::{instantiate, sample_start_poi, InventoryContext};
use crate::config::SimConfig;
use crate::error::{invalid, Error, Result};
use crate::estimation::RhythmArtifacts;
use crate::event::StayEvent;
use crate::io::{fmt_f64, fmt_timestamp};
use crate::rng::{inverse_cdf, seeded_rng, UniformSource};
use crate::taxonomy::{Mid10, SoftLabel};

pub const RNG_NAME: &str = "chacha8/sha256(seed,[scenario],run,user)";

/// Independent variate stream for one (run, user).
#[derive(Debug, Clone)]
pub struct RngStream(ChaCha8Rng);

impl UniformSource for RngStream {
    #[inline]
    fn uniform(&mut self) -> f64 {
        self.0.uniform()
    }
}

/// Streams are a pure function of their identifiers. With `reset_per_scenario`
/// the scenario id is left out, so all scenarios share streams.
pub fn derive_stream(base_seed: u64, scenario_id: &str, run: u32, user: u32, reset_per_scenario: bool) -> RngStream {
    let seed = base_seed.to_le_bytes();
    let run = run.to_le_bytes();
    let user = user.to_le_bytes();
    let rng = if reset_per_scenario {
        seeded_rng(&[b"sim", &seed, &run, &user])
    } else {
        seeded_rng(&[b"sim-scenario", &seed, scenario_id.as_bytes(), &run, &user])
    };
    RngStream(rng)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimEvent {
    pub seq: u32,
    /// Seconds after midnight.
    pub start_s: f64,
    pub hour: u8,
    pub category: Mid10,
    pub dwell_min: f64,
    pub poi_id: String,
    pub lon: f64,
    pub lat: f64,
    pub terminal: bool,
    /// Dwell was cut at the end-of-day cap.
    pub truncated: bool,
}

impl SimEvent {
    pub fn end_s(&self) -> f64 {
        self.start_s + self.dwell_min * 60.0
    }
}

/// Runs one person-day chain.
///
/// Variates per chain: start hour, start category, start POI; then per event
/// dwell component plus two normals, exploration flag, POI draw, hazard draw,
/// and one next-category draw when the chain continues.
pub fn generate_person_day<U: UniformSource>(
    artifacts: &RhythmArtifacts,
    ctx: &InventoryContext,
    cfg: &SimConfig,
    rng: &mut U,
) -> Result<Vec<SimEvent>> {
    let cap = cfg.cap_seconds();
    let start = &artifacts.start_priors;
    let h0 = inverse_cdf(&start.p_h, rng.uniform());
    let c0 = inverse_cdf(&start.p_c_given_h[h0], rng.uniform());
    let mut category = Mid10::from_index(c0).unwrap();
    let mut anchor = ctx.poi(sample_start_poi(category, ctx, rng)).location();
    let mut clock = (h0 * 3600) as f64;
    let mut events: Vec<SimEvent> = Vec::new();

    loop {
        let hour = ((clock / 3600.0).floor() as usize).min(23);
        let mixture = artifacts.dwell.resolve(hour, category);
        let (u_pick, u1, u2) = (rng.uniform(), rng.uniform(), rng.uniform());
        let mut dwell = mixture.sample_log(u_pick, u1, u2).exp().max(cfg.min_dwell_min);
        let mut truncated = false;
        if clock + dwell * 60.0 > cap {
            dwell = (cap - clock) / 60.0;
            truncated = true;
        }

        let poi = ctx.poi(instantiate(anchor, category, ctx, rng)?);
        anchor = poi.location();
        events.push(SimEvent {
            seq: events.len() as u32,
            start_s: clock,
            hour: hour as u8,
            category,
            dwell_min: dwell,
            poi_id: poi.poi_id.clone(),
            lon: poi.lon,
            lat: poi.lat,
            terminal: false,
            truncated,
        });

        let next_clock = clock + dwell * 60.0;
        let u_stop = rng.uniform();
        let stop = cfg.use_stop_hazard && u_stop < cfg.hazard_scale * artifacts.stop_hazard.hazard[hour];
        if stop || truncated || next_clock >= cap || events.len() >= cfg.max_events {
            break;
        }
        let update_hour = (next_clock / 3600.0).floor() as usize;
        let kernel = artifacts.kernels.for_hour(update_hour, cfg.use_t_block);
        let next = inverse_cdf(&kernel.probs[category.index()], rng.uniform());
        category = Mid10::from_index(next).unwrap();
        clock = next_clock;
    }
    events.last_mut().unwrap().terminal = true;
    Ok(events)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PersonDayChain {
    pub run: u32,
    pub user: u32,
    pub day: NaiveDate,
    pub events: Vec<SimEvent>,
}

/// Calendar day of person-day `k` of `user`.
pub fn simulated_day(cfg: &SimConfig, user: u32, k: usize) -> NaiveDate {
    let offset = (user as usize * cfg.persondays_per_user + k) % cfg.sim_n_days;
    cfg.sim_start_date + Duration::days(offset as i64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Parallelism {
    Sequential,
    /// Rayon's global pool.
    Auto,
    Threads(usize),
}

/// Provenance written next to a log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimLogMeta {
    pub scenario_id: String,
    pub config_fingerprint: String,
    pub artifact_fingerprint: String,
    pub inventory_fingerprint: String,
    pub n_chains: usize,
    pub n_events: usize,
    pub rng: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimLog {
    pub scenario_id: String,
    pub config_fingerprint: String,
    pub artifact_fingerprint: String,
    pub inventory_fingerprint: String,
    /// Canonical order: run, user, person-day.
    pub chains: Vec<PersonDayChain>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn config_fingerprint(cfg: &SimConfig) -> String {
    sha256_hex(cfg.to_json().as_bytes())
}

pub fn inventory_fingerprint(inv: &crate::event::PoiInventory) -> String {
    let mut buf = Vec::new();
    crate::io::write_inventory(&mut buf, inv).expect("in-memory write");
    sha256_hex(&buf)
}

/// Every (run, user) chain set for one inventory context. Output does not
/// depend on scheduling.
pub fn run_monte_carlo(
    artifacts: &RhythmArtifacts,
    ctx: &InventoryContext,
    cfg: &SimConfig,
    scenario_id: &str,
    parallelism: Parallelism,
) -> Result<SimLog> {
    cfg.check()?;
    artifacts.check_compatible(cfg)?;
    let jobs: Vec<(u32, u32)> = (0..cfg.mc_runs as u32)
        .flat_map(|r| (0..cfg.sim_users_n as u32).map(move |u| (r, u)))
        .collect();
    let job = |&(run, user): &(u32, u32)| -> Result<Vec<PersonDayChain>> {
        let mut rng = derive_stream(cfg.random_seed, scenario_id, run, user, cfg.reset_seed_per_scenario);
        (0..cfg.persondays_per_user)
            .map(|k| {
                Ok(PersonDayChain {
                    run,
                    user,
                    day: simulated_day(cfg, user, k),
                    events: generate_person_day(artifacts, ctx, cfg, &mut rng)?,
                })
            })
            .collect()
    };
    let nested: Vec<Result<Vec<PersonDayChain>>> = match parallelism {
        Parallelism::Sequential => jobs.iter().map(job).collect(),
        Parallelism::Auto => jobs.par_iter().map(job).collect(),
        Parallelism::Threads(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build()
            .map_err(|e| invalid(format!("thread pool: {e}")))?
            .install(|| jobs.par_iter().map(job).collect()),
    };
    let mut chains = Vec::with_capacity(jobs.len() * cfg.persondays_per_user);
    for r in nested {
        chains.extend(r?);
    }
    Ok(SimLog {
        scenario_id: scenario_id.to_string(),
        config_fingerprint: config_fingerprint(cfg),
        artifact_fingerprint: artifacts.fingerprint.clone(),
        inventory_fingerprint: inventory_fingerprint(ctx.inventory()),
        chains,
    })
}

pub const SIM_LOG_HEADER: [&str; 11] = [
    "scenario_id",
    "run",
    "user",
    "seq",
    "start_iso",
    "hour",
    "category",
    "dwell_min",
    "poi_id",
    "lon",
    "lat",
];

/// Treated as the cap when re-reading a log without its config.
const READ_CAP_S: f64 = 86_399.0;

impl SimLog {
    pub fn n_events(&self) -> usize {
        self.chains.iter().map(|c| c.events.len()).sum()
    }

    pub fn events(&self) -> impl Iterator<Item = (&PersonDayChain, &SimEvent)> {
        self.chains.iter().flat_map(|c| c.events.iter().map(move |e| (c, e)))
    }

    /// True when both logs hold the same chains, ignoring scenario id and fingerprints.
    pub fn same_events(&self, other: &SimLog) -> bool {
        self.chains == other.chains
    }

    pub fn meta(&self) -> SimLogMeta {
        SimLogMeta {
            scenario_id: self.scenario_id.clone(),
            config_fingerprint: self.config_fingerprint.clone(),
            artifact_fingerprint: self.artifact_fingerprint.clone(),
            inventory_fingerprint: self.inventory_fingerprint.clone(),
            n_chains: self.chains.len(),
            n_events: self.n_events(),
            rng: RNG_NAME.to_string(),
        }
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(SIM_LOG_HEADER)?;
        for (c, e) in self.events() {
            out.write_record([
                self.scenario_id.as_str(),
                &c.run.to_string(),
                &c.user.to_string(),
                &e.seq.to_string(),
                &fmt_timestamp(start_timestamp(c.day, e.start_s)),
                &e.hour.to_string(),
                e.category.label(),
                &fmt_f64(e.dwell_min),
                &e.poi_id,
                &fmt_f64(e.lon),
                &fmt_f64(e.lat),
            ])?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn to_csv_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("in-memory write");
        buf
    }

    /// Parses a log written by `write_csv`; a new chain starts at `seq` 0.
    /// Fingerprints are left empty (they live in the sidecar).
    pub fn read_csv<R: Read>(r: R, source: &str) -> Result<SimLog> {
        let mut rdr = csv::Reader::from_reader(r);
        let header: Vec<String> = rdr.headers()?.iter().map(|s| s.to_string()).collect();
        if header != SIM_LOG_HEADER {
            return Err(Error::Row {
                source_name: source.to_string(),
                row: 1,
                reason: format!("unexpected header {header:?}"),
            });
        }
        let mut scenario_id: Option<String> = None;
        let mut chains: Vec<PersonDayChain> = Vec::new();
        for rec in rdr.records() {
            let rec = rec?;
            let line = rec.position().map_or(0, |p| p.line()) as usize;
            let bad = |reason: String| Error::Row {
                source_name: source.to_string(),
                row: line,
                reason,
            };
            let field = |i: usize| rec.get(i).unwrap_or("");
            macro_rules! parse {
                ($i:expr, $t:ty) => {
                    field($i)
                        .parse::<$t>()
                        .map_err(|e| bad(format!("bad `{}` value {:?}: {e}", SIM_LOG_HEADER[$i], field($i))))?
                };
            }
            let sid = field(0).to_string();
            match &scenario_id {
                None => scenario_id = Some(sid),
                Some(s) if *s != sid => return Err(bad(format!("mixed scenario ids `{s}` and `{sid}`"))),
                _ => {}
            }
            let run = parse!(1, u32);
            let user = parse!(2, u32);
            let seq = parse!(3, u32);
            let start = parse!(4, NaiveDateTime);
            let hour = parse!(5, u8);
            let category = parse!(6, Mid10);
            let dwell_min = parse!(7, f64);
            let lon = parse!(9, f64);
            let lat = parse!(10, f64);
            let start_s = start.num_seconds_from_midnight() as f64 + start.nanosecond() as f64 * 1e-9;
            if hour as u32 != start.hour() {
                return Err(bad(format!("hour {hour} disagrees with start_iso {start}")));
            }
            let event = SimEvent {
                seq,
                start_s,
                hour,
                category,
                dwell_min,
                poi_id: field(8).to_string(),
                lon,
                lat,
                terminal: false,
                truncated: false,
            };
            if seq == 0 {
                chains.push(PersonDayChain {
                    run,
                    user,
                    day: start.date(),
                    events: vec![event],
                });
            } else {
                let chain = chains
                    .last_mut()
                    .filter(|c| c.run == run && c.user == user && c.day == start.date())
                    .filter(|c| c.events.len() as u32 == seq)
                    .ok_or_else(|| bad(format!("event seq {seq} does not continue a chain")))?;
                chain.events.push(event);
            }
        }
        for c in &mut chains {
            let last = c.events.last_mut().unwrap();
            last.terminal = true;
            last.truncated = last.end_s() >= READ_CAP_S - 1e-6;
        }
        Ok(SimLog {
            scenario_id: scenario_id.unwrap_or_default(),
            config_fingerprint: String::new(),
            artifact_fingerprint: String::new(),
            inventory_fingerprint: String::new(),
            chains,
        })
    }

    /// Hard-labelled stay events, one user id per (run, user).
    pub fn to_stay_events(&self) -> Vec<StayEvent> {
        self.events()
            .map(|(c, e)| StayEvent {
                user_id: format!("r{}u{}", c.run, c.user),
                day: c.day,
                start: start_timestamp(c.day, e.start_s),
                dwell_min: e.dwell_min,
                lon: e.lon,
                lat: e.lat,
                label: SoftLabel::one_hot(e.category),
            })
            .collect()
    }
}

pub fn start_timestamp(day: NaiveDate, start_s: f64) -> NaiveDateTime {
    day.and_hms_opt(0, 0, 0).unwrap() + Duration::nanoseconds((start_s * 1e9).round() as i64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assignment::empty_prior_table;
    use crate::estimation::{
        bundle_artifacts, derive_start_priors, DwellModel, Kernel, LogMixture, StopHazard,
        TransitionKernels,
    };
    use crate::event::{Poi, PoiInventory};
    use crate::matrix::{HourCategoryMatrix, MatrixKind};
    use crate::rng::UniformSource;
    use crate::taxonomy::{N_CATEGORIES, N_HOURS};

    /// One category, one POI, fixed 60-minute dwell, H = 0, start at 09:00.
    fn degenerate(cfg: &SimConfig) -> (RhythmArtifacts, InventoryContext) {
        let mut s = [[0.0; N_CATEGORIES]; N_HOURS];
        s[9][Mid10::Culture.index()] = 1.0;
        let s_ipf = HourCategoryMatrix::from_rows(MatrixKind::TargetMass, s).unwrap();
        let mut identity = [[0.0; N_CATEGORIES]; N_CATEGORIES];
        for (i, row) in identity.iter_mut().enumerate() {
            row[i] = 1.0;
        }
        let k = Kernel::from_probs(identity).unwrap();
        let kernels = TransitionKernels {
            alpha: cfg.alpha,
            block_edges: cfg.block_edges.clone(),
            global: k.clone(),
            blocks: vec![k; cfg.n_blocks()],
        };
        let inv = PoiInventory::new(vec![Poi {
            poi_id: "only".into(),
            lon: 139.1,
            lat: 35.23,
            category: Mid10::Culture,
        }])
        .unwrap();
        let priors = empty_prior_table(&inv, cfg);
        let a = bundle_artifacts(
            derive_start_priors(&s_ipf).unwrap(),
            StopHazard::from_values([0.0; N_HOURS]).unwrap(),
            kernels,
            DwellModel::uniform(LogMixture::single(60f64.ln(), 0.0).unwrap()),
            priors.clone(),
            s_ipf,
            cfg,
        )
        .unwrap();
        let ctx = InventoryContext::new(inv, priors, Default::default(), cfg).unwrap();
        (a, ctx)
    }

    #[test]
    fn hand_traced_degenerate_chain() {
        let cfg = SimConfig::default();
        let (a, ctx) = degenerate(&cfg);
        let mut rng = derive_stream(1, "x", 0, 0, true);
        let ev = generate_person_day(&a, &ctx, &cfg, &mut rng).unwrap();
        assert_eq!(ev.len(), 15);
        for (t, e) in ev.iter().enumerate() {
            assert_eq!(e.hour as usize, 9 + t);
            assert!((e.start_s - ((9 + t) * 3600) as f64).abs() < 1e-6);
        }
        let last = ev.last().unwrap();
        assert!(last.truncated && last.terminal);
        assert!((last.end_s() - 86_399.0).abs() < 1e-6);
        assert!((last.dwell_min - 59.0 - 59.0 / 60.0).abs() < 1e-9);
    }

    #[test]
    fn variates_per_chain_are_fixed() {
        // 3 start + 15 events x (3 dwell + 2 poi + 1 hazard) + 14 transitions.
        let cfg = SimConfig::default();
        let (a, ctx) = degenerate(&cfg);
        let mut inner = derive_stream(1, "x", 0, 0, true);
        let mut counted = crate::rng::CountingSource { inner: &mut inner, count: 0 };
        generate_person_day(&a, &ctx, &cfg, &mut counted).unwrap();
        assert_eq!(counted.count, 3 + 15 * 6 + 14);
    }

    #[test]
    fn streams() {
        let draw = |s: &mut RngStream| (0..1000).map(|_| s.uniform()).collect::<Vec<_>>();
        let a = draw(&mut derive_stream(20251209, "S1", 3, 7, true));
        assert_eq!(a, draw(&mut derive_stream(20251209, "S1", 3, 7, true)));
        assert_eq!(a, draw(&mut derive_stream(20251209, "S2", 3, 7, true)));
        let b = draw(&mut derive_stream(20251209, "S1", 3, 7, false));
        let c = draw(&mut derive_stream(20251209, "S2", 3, 7, false));
        assert!(b.iter().zip(&c).any(|(x, y)| x != y));
        assert_ne!(a, draw(&mut derive_stream(20251209, "S1", 3, 8, true)));
    }

    #[test]
    fn csv_round_trip() {
        let cfg = SimConfig {
            sim_users_n: 3,
            mc_runs: 2,
            persondays_per_user: 2,
            ..SimConfig::default()
        };
        let (a, ctx) = degenerate(&cfg);
        let log = run_monte_carlo(&a, &ctx, &cfg, "base", Parallelism::Sequential).unwrap();
        assert_eq!(log.chains.len(), 12);
        let bytes = log.to_csv_bytes();
        let back = SimLog::read_csv(bytes.as_slice(), "t").unwrap();
        assert_eq!(back.to_csv_bytes(), bytes);
        assert_eq!(back.chains.len(), 12);
        assert!(back.chains.iter().all(|c| c.events.last().unwrap().truncated));
    }
}
