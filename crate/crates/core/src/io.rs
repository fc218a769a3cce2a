//! File formats: stay-event and inventory CSVs, GeoJSON inventories, JSON
//! documents and atomic writes.

use std::fs::File;
use std::io::{BufReader, Read, Write};
use std::path::Path;

use chrono::{NaiveDate, NaiveDateTime};
use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::event::{Poi, PoiInventory, StayEvent};
use crate::taxonomy::{Mid10, SoftLabel, N_CATEGORIES, SOFT_LABEL_TOL};

/// Soft vectors whose sum is off by less than this are renormalized on load.
pub const LOAD_RENORMALIZE_TOL: f64 = 1e-6;

const TIMESTAMP_FMT: &str = "%Y-%m-%dT%H:%M:%S%.f";

/// Shortest decimal string that parses back to the same f64.
pub fn fmt_f64(x: f64) -> String {
    format!("{x}")
}

pub fn fmt_timestamp(t: NaiveDateTime) -> String {
    t.format(TIMESTAMP_FMT).to_string()
}

pub fn stay_event_header() -> Vec<String> {
    let mut h: Vec<String> = ["user_id", "day", "start_iso", "end_iso", "start_hour", "dwell_min", "lon", "lat"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    h.extend(Mid10::ALL.iter().map(|c| format!("p_{c}")));
    h
}

pub fn write_stay_events<W: Write>(w: W, events: &[StayEvent]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(stay_event_header())?;
    for e in events {
        let mut rec = vec![
            e.user_id.clone(),
            e.day.to_string(),
            fmt_timestamp(e.start),
            fmt_timestamp(e.end()),
            e.start_hour().to_string(),
            fmt_f64(e.dwell_min),
            fmt_f64(e.lon),
            fmt_f64(e.lat),
        ];
        rec.extend(e.label.probs().iter().map(|p| fmt_f64(*p)));
        out.write_record(&rec)?;
    }
    out.flush()?;
    Ok(())
}

fn row_err(source: &str, line: u64, reason: impl Into<String>) -> Error {
    Error::Row {
        source_name: source.to_string(),
        row: line as usize,
        reason: reason.into(),
    }
}

fn parse_field<T: std::str::FromStr>(
    rec: &csv::StringRecord,
    i: usize,
    name: &str,
    source: &str,
    line: u64,
) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    let raw = rec.get(i).ok_or_else(|| row_err(source, line, format!("missing `{name}`")))?;
    raw.trim()
        .parse()
        .map_err(|e| row_err(source, line, format!("bad `{name}` value {raw:?}: {e}")))
}

/// Accepts sums within the label tolerance as-is and renormalizes sums off by
/// less than `LOAD_RENORMALIZE_TOL`.
pub fn soft_label_from_file(p: [f64; N_CATEGORIES]) -> std::result::Result<SoftLabel, String> {
    if p.iter().any(|x| !x.is_finite() || *x < 0.0) {
        return Err("label probabilities must be finite and non-negative".into());
    }
    let s: f64 = p.iter().sum();
    if (s - 1.0).abs() <= SOFT_LABEL_TOL {
        SoftLabel::new(p).map_err(|e| e.to_string())
    } else if (s - 1.0).abs() < LOAD_RENORMALIZE_TOL {
        SoftLabel::from_weights(p).map_err(|e| e.to_string())
    } else {
        Err(format!("label probabilities sum to {s}"))
    }
}

/// Reads a stay-event CSV; errors carry the 1-based file line.
pub fn read_stay_events<R: Read>(r: R, source: &str) -> Result<Vec<StayEvent>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(r);
    let header: Vec<String> = rdr.headers()?.iter().map(|s| s.to_string()).collect();
    if header != stay_event_header() {
        return Err(row_err(source, 1, format!("unexpected header {header:?}")));
    }
    let mut events = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        let user_id: String = parse_field(&rec, 0, "user_id", source, line)?;
        let day: NaiveDate = parse_field(&rec, 1, "day", source, line)?;
        let start: NaiveDateTime = parse_field(&rec, 2, "start_iso", source, line)?;
        let end: NaiveDateTime = parse_field(&rec, 3, "end_iso", source, line)?;
        let start_hour: usize = parse_field(&rec, 4, "start_hour", source, line)?;
        let dwell_min: f64 = parse_field(&rec, 5, "dwell_min", source, line)?;
        let lon: f64 = parse_field(&rec, 6, "lon", source, line)?;
        let lat: f64 = parse_field(&rec, 7, "lat", source, line)?;
        let mut p = [0.0; N_CATEGORIES];
        for (c, slot) in p.iter_mut().enumerate() {
            *slot = parse_field(&rec, 8 + c, &header[8 + c], source, line)?;
        }
        let label = soft_label_from_file(p).map_err(|e| row_err(source, line, e))?;
        let e = StayEvent {
            user_id,
            day,
            start,
            dwell_min,
            lon,
            lat,
            label,
        };
        e.validate().map_err(|err| row_err(source, line, err.to_string()))?;
        if e.start_hour() != start_hour {
            return Err(row_err(
                source,
                line,
                format!("start_hour {start_hour} disagrees with start_iso {start}"),
            ));
        }
        if (end - e.end()).num_milliseconds().abs() > 1000 {
            return Err(row_err(source, line, format!("end_iso {end} disagrees with start + dwell")));
        }
        events.push(e);
    }
    Ok(events)
}

pub fn load_stay_events(path: &Path) -> Result<Vec<StayEvent>> {
    read_stay_events(BufReader::new(File::open(path)?), &path.display().to_string())
}

pub fn write_inventory<W: Write>(w: W, inventory: &PoiInventory) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["poi_id", "lon", "lat", "mid10"])?;
    for p in inventory.pois() {
        out.write_record([p.poi_id.clone(), fmt_f64(p.lon), fmt_f64(p.lat), p.category.to_string()])?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_inventory<R: Read>(r: R, source: &str, bbox: Option<[f64; 4]>) -> Result<PoiInventory> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(r);
    let header: Vec<String> = rdr.headers()?.iter().map(|s| s.to_string()).collect();
    if header != ["poi_id", "lon", "lat", "mid10"] {
        return Err(row_err(source, 1, format!("unexpected header {header:?}")));
    }
    let mut pois = Vec::new();
    let mut seen = std::collections::HashMap::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        let poi = Poi {
            poi_id: parse_field(&rec, 0, "poi_id", source, line)?,
            lon: parse_field(&rec, 1, "lon", source, line)?,
            lat: parse_field(&rec, 2, "lat", source, line)?,
            category: parse_field(&rec, 3, "mid10", source, line)?,
        };
        if let Some(first) = seen.insert(poi.poi_id.clone(), line) {
            return Err(row_err(
                source,
                line,
                format!("duplicate poi_id `{}` (first on line {first})", poi.poi_id),
            ));
        }
        pois.push(poi);
    }
    PoiInventory::with_bbox(pois, bbox)
}

/// Reads a CSV inventory, or a GeoJSON FeatureCollection when the file name
/// ends in `.geojson` or `.json`.
pub fn load_inventory(path: &Path, bbox: Option<[f64; 4]>) -> Result<PoiInventory> {
    let source = path.display().to_string();
    let ext = path.extension().and_then(|e| e.to_str()).unwrap_or("");
    if ext.eq_ignore_ascii_case("geojson") || ext.eq_ignore_ascii_case("json") {
        let mut s = String::new();
        File::open(path)?.read_to_string(&mut s)?;
        parse_geojson_inventory(&s, &source, bbox)
    } else {
        read_inventory(BufReader::new(File::open(path)?), &source, bbox)
    }
}

/// FeatureCollection of Point features with `poi_id` and `mid10` properties.
pub fn parse_geojson_inventory(s: &str, source: &str, bbox: Option<[f64; 4]>) -> Result<PoiInventory> {
    let v: serde_json::Value = serde_json::from_str(s)?;
    if v.get("type").and_then(|t| t.as_str()) != Some("FeatureCollection") {
        return Err(row_err(source, 0, "expected a GeoJSON FeatureCollection"));
    }
    let features = v
        .get("features")
        .and_then(|f| f.as_array())
        .ok_or_else(|| row_err(source, 0, "missing `features` array"))?;
    let mut pois = Vec::with_capacity(features.len());
    for (i, f) in features.iter().enumerate() {
        let bad = |reason: &str| row_err(source, i as u64, format!("feature {i}: {reason}"));
        let geom = f.get("geometry").ok_or_else(|| bad("missing geometry"))?;
        if geom.get("type").and_then(|t| t.as_str()) != Some("Point") {
            return Err(bad("geometry is not a Point"));
        }
        let coords = geom
            .get("coordinates")
            .and_then(|c| c.as_array())
            .filter(|c| c.len() >= 2)
            .ok_or_else(|| bad("bad coordinates"))?;
        let lon = coords[0].as_f64().ok_or_else(|| bad("bad longitude"))?;
        let lat = coords[1].as_f64().ok_or_else(|| bad("bad latitude"))?;
        let props = f.get("properties").ok_or_else(|| bad("missing properties"))?;
        let poi_id = match props.get("poi_id") {
            Some(serde_json::Value::String(s)) => s.clone(),
            Some(serde_json::Value::Number(n)) => n.to_string(),
            _ => return Err(bad("missing poi_id")),
        };
        let category: Mid10 = props
            .get("mid10")
            .and_then(|m| m.as_str())
            .ok_or_else(|| bad("missing mid10"))?
            .parse()
            .map_err(|e: Error| bad(&e.to_string()))?;
        pois.push(Poi {
            poi_id,
            lon,
            lat,
            category,
        });
    }
    PoiInventory::with_bbox(pois, bbox)
}

/// Writes `bytes` to a temporary file next to `path`, then renames it.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}

/// Builds a file in memory through a writer callback and writes it atomically.
pub fn write_atomic_with(path: &Path, f: impl FnOnce(&mut Vec<u8>) -> Result<()>) -> Result<()> {
    let mut buf = Vec::new();
    f(&mut buf)?;
    write_atomic(path, &buf)
}

pub fn to_json_pretty<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    write_atomic(path, to_json_pretty(value)?.as_bytes())
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let f = BufReader::new(File::open(path)?);
    Ok(serde_json::from_reader(f)?)
}
