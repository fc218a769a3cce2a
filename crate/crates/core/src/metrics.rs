//! Observed-vs-simulated and scenario-vs-baseline evaluation.

use std::io::Write;

use chrono::NaiveDate;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::estimation::{estimate_transition_kernels, SequenceStep, TransitionKernels};
use crate::event::StayEvent;
use crate::geo::{BallTree, GeoPoint, GridSpec};
use crate::io::fmt_f64;
use crate::matrix::{HourCategoryMatrix, MatrixKind};
use crate::rng::seeded_rng;
use crate::simulator::SimLog;
use crate::taxonomy::{Mid10, N_CATEGORIES, N_HOURS};

pub type Grid24x10 = [[f64; N_CATEGORIES]; N_HOURS];

/// Expected stays (counts) or expected dwell minutes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum AggMode {
    Es,
    Edm,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Labeling {
    Soft,
    /// Whole mass on the arg-max category.
    Hard,
}

fn event_mass(mode: AggMode, dwell_min: f64) -> f64 {
    match mode {
        AggMode::Es => 1.0,
        AggMode::Edm => dwell_min,
    }
}

fn kind_of(mode: AggMode) -> MatrixKind {
    match mode {
        AggMode::Es => MatrixKind::Counts,
        AggMode::Edm => MatrixKind::Minutes,
    }
}

/// Adds `p_c` (ES) or `p_c * d` (EDM) to cell (start hour, c).
pub fn aggregate_hour_category(events: &[StayEvent], mode: AggMode, labeling: Labeling) -> HourCategoryMatrix {
    let mut m = HourCategoryMatrix::zeros(kind_of(mode));
    for e in events {
        let w = event_mass(mode, e.dwell_min);
        let h = e.start_hour();
        match labeling {
            Labeling::Soft => {
                for (c, p) in e.label.probs().iter().enumerate() {
                    if *p != 0.0 {
                        m.add(h, c, p * w);
                    }
                }
            }
            Labeling::Hard => m.add(h, e.label.argmax().index(), w),
        }
    }
    m
}

/// Hard aggregation of a simulation log.
pub fn aggregate_sim_log(log: &SimLog, mode: AggMode) -> HourCategoryMatrix {
    let mut m = HourCategoryMatrix::zeros(kind_of(mode));
    for (_, e) in log.events() {
        m.add(e.hour as usize, e.category.index(), event_mass(mode, e.dwell_min));
    }
    m
}

/// Per-category 24-hour share vectors plus each category's total mass.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiurnalProfile {
    pub shares: [[f64; N_HOURS]; N_CATEGORIES],
    pub mass: [f64; N_CATEGORIES],
}

impl DiurnalProfile {
    pub fn from_matrix(m: &HourCategoryMatrix) -> Self {
        let mass = m.col_sums();
        let mut shares = [[0.0; N_HOURS]; N_CATEGORIES];
        for c in 0..N_CATEGORIES {
            if mass[c] > 0.0 {
                for h in 0..N_HOURS {
                    shares[c][h] = m.m[h][c] / mass[c];
                }
            }
        }
        DiurnalProfile { shares, mass }
    }
}

pub fn rmse(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    (a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>() / n).sqrt()
}

/// Pearson correlation; `None` when either side has zero variance (relative to
/// its raw second moment, so round-off on a constant vector counts as zero).
pub fn pearson(a: &[f64], b: &[f64]) -> Option<f64> {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma).powi(2);
        sbb += (y - mb).powi(2);
    }
    let raw = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>();
    if saa <= 1e-15 * raw(a) || sbb <= 1e-15 * raw(b) {
        return None;
    }
    Some((sab / (saa.sqrt() * sbb.sqrt())).clamp(-1.0, 1.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategorySimilarity {
    pub category: Mid10,
    /// Observed share of total mass.
    pub obs_mass_share: f64,
    pub rmse: f64,
    pub pearson: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiurnalReport {
    pub per_category: Vec<CategorySimilarity>,
    pub macro_rmse: Option<f64>,
    pub macro_pearson: Option<f64>,
    pub weighted_rmse: Option<f64>,
    pub weighted_pearson: Option<f64>,
}

fn mean_of(pairs: impl Iterator<Item = (f64, f64)>) -> Option<f64> {
    let (mut num, mut den) = (0.0, 0.0);
    for (v, w) in pairs {
        num += v * w;
        den += w;
    }
    (den > 0.0).then(|| num / den)
}

/// RMSE and Pearson per category over the 24 hourly shares. Categories without
/// mass on both sides are left out of the summaries; missing Pearson values
/// are excluded from the Pearson averages.
pub fn diurnal_similarity(obs: &DiurnalProfile, sim: &DiurnalProfile) -> DiurnalReport {
    let total: f64 = obs.mass.iter().sum();
    let mut per_category = Vec::new();
    for c in Mid10::ALL {
        let i = c.index();
        if obs.mass[i] <= 0.0 && sim.mass[i] <= 0.0 {
            continue;
        }
        per_category.push(CategorySimilarity {
            category: c,
            obs_mass_share: if total > 0.0 { obs.mass[i] / total } else { 0.0 },
            rmse: rmse(&obs.shares[i], &sim.shares[i]),
            pearson: pearson(&obs.shares[i], &sim.shares[i]),
        });
    }
    let macro_rmse = mean_of(per_category.iter().map(|s| (s.rmse, 1.0)));
    let macro_pearson = mean_of(per_category.iter().filter_map(|s| s.pearson.map(|p| (p, 1.0))));
    let weighted_rmse = mean_of(per_category.iter().map(|s| (s.rmse, s.obs_mass_share)));
    let weighted_pearson =
        mean_of(per_category.iter().filter_map(|s| s.pearson.map(|p| (p, s.obs_mass_share))));
    DiurnalReport {
        per_category,
        macro_rmse,
        macro_pearson,
        weighted_rmse,
        weighted_pearson,
    }
}

/// Per-category day x hour maps, each normalized to total 1 (or all zero).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DayHourHeatmaps {
    pub days: Vec<NaiveDate>,
    /// `maps[c][d][h]`
    pub maps: Vec<Vec<[f64; N_HOURS]>>,
    /// Events whose day falls outside `days`.
    pub dropped: usize,
}

/// Contiguous list of days from the first to the last.
pub fn day_range(first: NaiveDate, last: NaiveDate) -> Vec<NaiveDate> {
    first.iter_days().take_while(|d| *d <= last).collect()
}

pub fn evaluation_period(events: &[StayEvent]) -> Option<Vec<NaiveDate>> {
    let first = events.iter().map(|e| e.day).min()?;
    let last = events.iter().map(|e| e.day).max()?;
    Some(day_range(first, last))
}

pub fn day_hour_heatmaps(
    events: &[StayEvent],
    mode: AggMode,
    labeling: Labeling,
    days: &[NaiveDate],
) -> DayHourHeatmaps {
    let mut maps = vec![vec![[0.0; N_HOURS]; days.len()]; N_CATEGORIES];
    let mut dropped = 0;
    for e in events {
        let Ok(d) = days.binary_search(&e.day) else {
            dropped += 1;
            continue;
        };
        let w = event_mass(mode, e.dwell_min);
        let h = e.start_hour();
        match labeling {
            Labeling::Soft => {
                for (c, p) in e.label.probs().iter().enumerate() {
                    maps[c][d][h] += p * w;
                }
            }
            Labeling::Hard => maps[e.label.argmax().index()][d][h] += w,
        }
    }
    for map in &mut maps {
        let total: f64 = map.iter().flatten().sum();
        if total > 0.0 {
            map.iter_mut().flatten().for_each(|v| *v /= total);
        }
    }
    DayHourHeatmaps {
        days: days.to_vec(),
        maps,
        dropped,
    }
}

/// Heatmaps of one simulation log split by run.
pub fn sim_heatmaps_by_run(log: &SimLog, mode: AggMode, days: &[NaiveDate]) -> Vec<DayHourHeatmaps> {
    let mut runs: Vec<u32> = log.chains.iter().map(|c| c.run).collect();
    runs.sort_unstable();
    runs.dedup();
    let events = log.to_stay_events();
    runs.iter()
        .map(|&r| {
            let subset: Vec<StayEvent> = log
                .chains
                .iter()
                .zip(chain_ranges(log))
                .filter(|(c, _)| c.run == r)
                .flat_map(|(_, range)| events[range].iter().cloned())
                .collect();
            day_hour_heatmaps(&subset, mode, Labeling::Hard, days)
        })
        .collect()
}

fn chain_ranges(log: &SimLog) -> Vec<std::ops::Range<usize>> {
    let mut start = 0;
    log.chains
        .iter()
        .map(|c| {
            let r = start..start + c.events.len();
            start = r.end;
            r
        })
        .collect()
}

/// Linear-interpolation percentile (`q` in [0, 100]) of unsorted values.
pub fn percentile(values: &[f64], q: f64) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    if v.is_empty() {
        return f64::NAN;
    }
    let pos = q / 100.0 * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    v[lo] + (v[hi] - v[lo]) * (pos - lo as f64)
}

pub fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualStats {
    pub category: Mid10,
    pub mar: f64,
    pub p95: f64,
    pub frobenius: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualReport {
    pub per_category: Vec<ResidualStats>,
    pub macro_mar: f64,
    pub macro_p95: f64,
    pub macro_frobenius: f64,
}

/// Residual = cellwise median over runs minus observation; MAR, P95 of |R|
/// and the Frobenius norm per category.
pub fn residual_stats(sim_runs: &[DayHourHeatmaps], obs: &DayHourHeatmaps) -> Result<ResidualReport> {
    if sim_runs.is_empty() {
        return Err(invalid("residual statistics need at least one simulated run"));
    }
    for s in sim_runs {
        if s.days != obs.days || s.maps.len() != obs.maps.len() {
            return Err(Error::Mismatch(format!(
                "simulated period {}..{} ({} days) differs from observed {}..{} ({} days)",
                s.days.first().map_or("-".into(), |d| d.to_string()),
                s.days.last().map_or("-".into(), |d| d.to_string()),
                s.days.len(),
                obs.days.first().map_or("-".into(), |d| d.to_string()),
                obs.days.last().map_or("-".into(), |d| d.to_string()),
                obs.days.len()
            )));
        }
    }
    let mut per_category = Vec::with_capacity(N_CATEGORIES);
    let mut buf = vec![0.0; sim_runs.len()];
    for c in Mid10::ALL {
        let ci = c.index();
        let mut abs = Vec::with_capacity(obs.days.len() * N_HOURS);
        let mut sq = 0.0;
        for d in 0..obs.days.len() {
            for h in 0..N_HOURS {
                for (slot, run) in buf.iter_mut().zip(sim_runs) {
                    *slot = run.maps[ci][d][h];
                }
                let r = median(&mut buf) - obs.maps[ci][d][h];
                abs.push(r.abs());
                sq += r * r;
            }
        }
        let n = abs.len().max(1) as f64;
        per_category.push(ResidualStats {
            category: c,
            mar: abs.iter().sum::<f64>() / n,
            p95: percentile(&abs, 95.0),
            frobenius: sq.sqrt(),
        });
    }
    let k = per_category.len() as f64;
    Ok(ResidualReport {
        macro_mar: per_category.iter().map(|s| s.mar).sum::<f64>() / k,
        macro_p95: per_category.iter().map(|s| s.p95).sum::<f64>() / k,
        macro_frobenius: per_category.iter().map(|s| s.frobenius).sum::<f64>() / k,
        per_category,
    })
}

/// Jensen-Shannon divergence in nats.
pub fn js_divergence(p: &[f64], q: &[f64]) -> f64 {
    let kl = |a: &[f64], m: &[f64]| -> f64 {
        a.iter()
            .zip(m)
            .filter(|(x, _)| **x > 0.0)
            .map(|(x, y)| x * (x / y).ln())
            .sum()
    };
    let m: Vec<f64> = p.iter().zip(q).map(|(a, b)| 0.5 * (a + b)).collect();
    (0.5 * kl(p, &m) + 0.5 * kl(q, &m)).max(0.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelDistance {
    /// `None` for the global kernel.
    pub block: Option<usize>,
    pub hours: String,
    pub n_transitions: u64,
    pub frobenius: f64,
    pub cosine: f64,
    pub js_mean: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitionDistanceReport {
    pub log_base: String,
    pub global: KernelDistance,
    pub blocks: Vec<KernelDistance>,
}

pub fn kernel_distance(a: &[[f64; N_CATEGORIES]; N_CATEGORIES], b: &[[f64; N_CATEGORIES]; N_CATEGORIES]) -> (f64, f64, f64) {
    let (mut fro, mut dot, mut na, mut nb) = (0.0, 0.0, 0.0, 0.0);
    for i in 0..N_CATEGORIES {
        for j in 0..N_CATEGORIES {
            fro += (a[i][j] - b[i][j]).powi(2);
            dot += a[i][j] * b[i][j];
            na += a[i][j] * a[i][j];
            nb += b[i][j] * b[i][j];
        }
    }
    let cosine = if na > 0.0 && nb > 0.0 {
        (dot / (na.sqrt() * nb.sqrt())).clamp(-1.0, 1.0)
    } else {
        0.0
    };
    let js = (0..N_CATEGORIES).map(|i| js_divergence(&a[i], &b[i])).sum::<f64>() / N_CATEGORIES as f64;
    (fro.sqrt(), cosine, js)
}

/// Compares kernels block by block; `n_transitions` is taken from `b`.
pub fn compare_kernels(a: &TransitionKernels, b: &TransitionKernels) -> Result<TransitionDistanceReport> {
    if a.block_edges != b.block_edges {
        return Err(Error::Mismatch("kernels use different block edges".into()));
    }
    let (f, c, j) = kernel_distance(&a.global.probs, &b.global.probs);
    let global = KernelDistance {
        block: None,
        hours: "0-24".into(),
        n_transitions: b.global.n_pairs,
        frobenius: f,
        cosine: c,
        js_mean: j,
    };
    let blocks = (0..a.blocks.len())
        .map(|k| {
            let (f, c, j) = kernel_distance(&a.blocks[k].probs, &b.blocks[k].probs);
            KernelDistance {
                block: Some(k),
                hours: format!("{}-{}", a.block_edges[k], a.block_edges[k + 1]),
                n_transitions: b.blocks[k].n_pairs,
                frobenius: f,
                cosine: c,
                js_mean: j,
            }
        })
        .collect();
    Ok(TransitionDistanceReport {
        log_base: "e".into(),
        global,
        blocks,
    })
}

/// One-hot category sequences of every chain.
pub fn sim_sequences(log: &SimLog) -> Vec<Vec<SequenceStep>> {
    log.chains
        .iter()
        .map(|c| {
            c.events
                .iter()
                .map(|e| {
                    let mut probs = [0.0; N_CATEGORIES];
                    probs[e.category.index()] = 1.0;
                    SequenceStep {
                        hour: e.hour as usize,
                        probs,
                    }
                })
                .collect()
        })
        .collect()
}

/// Re-estimates kernels from a simulated log with the observed-side estimator
/// and compares them with `obs`.
pub fn reestimate_and_compare_kernels(
    obs: &TransitionKernels,
    log: &SimLog,
    alpha: f64,
    block_edges: &[u8],
) -> Result<(TransitionKernels, TransitionDistanceReport)> {
    let sim = estimate_transition_kernels(&sim_sequences(log), alpha, block_edges)?;
    let report = compare_kernels(obs, &sim)?;
    Ok((sim, report))
}

/// Simulated first-event hour x category counts.
pub fn first_event_matrix(log: &SimLog) -> HourCategoryMatrix {
    let mut m = HourCategoryMatrix::zeros(MatrixKind::Counts);
    for c in &log.chains {
        if let Some(e) = c.events.first() {
            m.add(e.hour as usize, e.category.index(), 1.0);
        }
    }
    m
}

/// ||A/sum A - B/sum B||_F / ||B/sum B||_F.
pub fn relative_frobenius(a: &HourCategoryMatrix, b: &HourCategoryMatrix) -> Result<f64> {
    let an = a.normalized().ok_or_else(|| invalid("empty simulated matrix"))?;
    let bn = b.normalized().ok_or_else(|| invalid("empty target matrix"))?;
    let mut num = 0.0;
    for h in 0..N_HOURS {
        for c in 0..N_CATEGORIES {
            num += (an.m[h][c] - bn.m[h][c]).powi(2);
        }
    }
    Ok(num.sqrt() / bn.frobenius())
}

pub fn first_event_compliance(log: &SimLog, s_ipf: &HourCategoryMatrix) -> Result<f64> {
    relative_frobenius(&first_event_matrix(log), s_ipf)
}

/// Relative Frobenius deviations of `draws` multinomial samples of size `n`
/// from `target`, sorted ascending.
pub fn multinomial_null(target: &HourCategoryMatrix, n: usize, draws: usize, seed: u64) -> Result<Vec<f64>> {
    let p = target.normalized().ok_or_else(|| invalid("empty target matrix"))?;
    let mut cum = Vec::with_capacity(N_HOURS * N_CATEGORIES);
    let mut acc = 0.0;
    for h in 0..N_HOURS {
        for c in 0..N_CATEGORIES {
            acc += p.m[h][c];
            cum.push(acc);
        }
    }
    let last_positive = cum.len() - 1 - cum.iter().rev().zip(cum.iter().rev().skip(1)).take_while(|(a, b)| a == b).count();
    let mut rng = seeded_rng(&[b"multinomial-null", &seed.to_le_bytes()]);
    let mut out = Vec::with_capacity(draws);
    for _ in 0..draws {
        let mut counts = HourCategoryMatrix::zeros(MatrixKind::Counts);
        for _ in 0..n {
            let u: f64 = rng.random::<f64>() * acc;
            let i = cum.partition_point(|x| *x < u).min(last_positive);
            counts.m[i / N_CATEGORIES][i % N_CATEGORIES] += 1.0;
        }
        out.push(relative_frobenius(&counts, &p)?);
    }
    out.sort_by(f64::total_cmp);
    Ok(out)
}

/// Fraction of points within `radius_m` of any reference location.
pub fn hit_rate(points: impl IntoIterator<Item = GeoPoint>, reference: &[GeoPoint], radius_m: f64) -> Result<f64> {
    if reference.is_empty() {
        return Err(invalid("hit rate needs at least one reference POI"));
    }
    if !(radius_m > 0.0) {
        return Err(invalid("hit radius must be > 0"));
    }
    let tree = BallTree::build(reference.iter().copied().enumerate());
    let (mut hits, mut n) = (0usize, 0usize);
    for p in points {
        n += 1;
        if !tree.knn(p, 1).first().is_some_and(|nb| nb.distance_m <= radius_m) {
            continue;
        }
        hits += 1;
    }
    Ok(if n == 0 { 0.0 } else { hits as f64 / n as f64 })
}

pub fn sim_log_points(log: &SimLog) -> impl Iterator<Item = GeoPoint> + '_ {
    log.events().map(|(_, e)| GeoPoint { lon: e.lon, lat: e.lat })
}

/// Per-cell totals of one log on a grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridAggregate {
    pub values: Vec<f64>,
    pub out_of_box: usize,
}

pub fn grid_aggregate(log: &SimLog, grid: &GridSpec, mode: AggMode) -> GridAggregate {
    let mut values = vec![0.0; grid.n_cells()];
    let mut out_of_box = 0;
    for (_, e) in log.events() {
        match grid.cell(GeoPoint { lon: e.lon, lat: e.lat }) {
            Ok(cell) => values[grid.linear(cell)] += event_mass(mode, e.dwell_min),
            Err(_) => out_of_box += 1,
        }
    }
    GridAggregate { values, out_of_box }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpatialDiff {
    pub mode: AggMode,
    /// Scenario minus baseline per cell, row-major.
    pub values: Vec<f64>,
    pub out_of_box_baseline: usize,
    pub out_of_box_scenario: usize,
}

pub fn spatial_diff_grid(baseline: &SimLog, scenario: &SimLog, grid: &GridSpec, mode: AggMode) -> SpatialDiff {
    let b = grid_aggregate(baseline, grid, mode);
    let s = grid_aggregate(scenario, grid, mode);
    SpatialDiff {
        mode,
        values: s.values.iter().zip(&b.values).map(|(x, y)| x - y).collect(),
        out_of_box_baseline: b.out_of_box,
        out_of_box_scenario: s.out_of_box,
    }
}

/// Grid over the bounding box of the given points, padded by one cell and
/// centered on `origin` for the projection.
pub fn grid_covering(origin: GeoPoint, cell_m: f64, points: impl IntoIterator<Item = GeoPoint>) -> Result<GridSpec> {
    let mut bbox = [f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY];
    for p in points {
        bbox[0] = bbox[0].min(p.lon);
        bbox[1] = bbox[1].min(p.lat);
        bbox[2] = bbox[2].max(p.lon);
        bbox[3] = bbox[3].max(p.lat);
    }
    if !bbox[0].is_finite() {
        return Err(invalid("no points to cover"));
    }
    let pad_lat = cell_m / crate::geo::EARTH_RADIUS_M * 180.0 / std::f64::consts::PI;
    let pad_lon = pad_lat / origin.lat.to_radians().cos();
    GridSpec::new(
        origin,
        cell_m,
        [bbox[0] - pad_lon, bbox[1] - pad_lat, bbox[2] + pad_lon, bbox[3] + pad_lat],
    )
}

pub fn write_grid_csv<W: Write>(w: W, grid: &GridSpec, values: &[f64]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["row", "col", "lon", "lat", "value"])?;
    for row in 0..grid.n_rows() {
        for col in 0..grid.n_cols() {
            let cell = crate::geo::CellId { row, col };
            let center = grid.cell_center(cell);
            out.write_record([
                row.to_string(),
                col.to_string(),
                fmt_f64(center.lon),
                fmt_f64(center.lat),
                fmt_f64(values[grid.linear(cell)]),
            ])?;
        }
    }
    out.flush()?;
    Ok(())
}

fn opt(v: Option<f64>) -> String {
    v.map_or(String::new(), fmt_f64)
}

pub fn write_diurnal_csv<W: Write>(w: W, r: &DiurnalReport) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["category", "obs_mass_share", "rmse", "pearson"])?;
    for s in &r.per_category {
        out.write_record([s.category.label(), &fmt_f64(s.obs_mass_share), &fmt_f64(s.rmse), &opt(s.pearson)])?;
    }
    out.write_record(["macro", "", &opt(r.macro_rmse), &opt(r.macro_pearson)])?;
    out.write_record(["weighted", "", &opt(r.weighted_rmse), &opt(r.weighted_pearson)])?;
    out.flush()?;
    Ok(())
}

pub fn write_residual_csv<W: Write>(w: W, r: &ResidualReport) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["category", "mar", "p95", "frobenius"])?;
    for s in &r.per_category {
        out.write_record([s.category.label(), &fmt_f64(s.mar), &fmt_f64(s.p95), &fmt_f64(s.frobenius)])?;
    }
    out.write_record(["macro", &fmt_f64(r.macro_mar), &fmt_f64(r.macro_p95), &fmt_f64(r.macro_frobenius)])?;
    out.flush()?;
    Ok(())
}

pub fn write_transition_csv<W: Write>(w: W, r: &TransitionDistanceReport) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["block", "hours", "n_transitions", "frobenius", "cosine", "js_mean"])?;
    for k in r.blocks.iter().chain(std::iter::once(&r.global)) {
        out.write_record([
            k.block.map_or("global".to_string(), |b| b.to_string()),
            k.hours.clone(),
            k.n_transitions.to_string(),
            fmt_f64(k.frobenius),
            fmt_f64(k.cosine),
            fmt_f64(k.js_mean),
        ])?;
    }
    out.flush()?;
    Ok(())
}

/// Signed 24 x 10 difference `a - b`.
pub fn matrix_delta(a: &HourCategoryMatrix, b: &HourCategoryMatrix) -> Grid24x10 {
    a.diff(b)
}
