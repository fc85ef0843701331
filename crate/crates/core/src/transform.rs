//! Deterministic analytics over parsed records: offset conversion, distances,
//! spatial/chronological grouping, day buckets, cross-device co-location,
//! CSV reduction and offline place lookup.
//!
//! Ties are always broken by (instant, input order).

use std::collections::BTreeMap;
use std::time::Duration;

use chrono::{FixedOffset, NaiveDate, TimeDelta};
use serde::{Deserialize, Serialize};

use crate::case_model::{LocationRecord, MessageRecord, Timestamp};
use crate::ingest::lex::{format_dmy_timestamp, parse_decimal};

pub const EARTH_RADIUS_M: f64 = 6_371_000.0;
pub const DEFAULT_RADIUS_M: f64 = 200.0;
pub const DEFAULT_WINDOW: Duration = Duration::from_secs(60 * 60);

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum TransformError {
    #[error("unknown column `{0}`")]
    UnknownColumn(String),
    #[error("gazetteer line {line}: {message}")]
    Gazetteer { line: usize, message: String },
}

pub trait Timestamped {
    fn timestamp(&self) -> Timestamp;
    fn set_timestamp(&mut self, ts: Timestamp);
}

impl Timestamped for LocationRecord {
    fn timestamp(&self) -> Timestamp {
        self.timestamp
    }
    fn set_timestamp(&mut self, ts: Timestamp) {
        self.timestamp = ts;
    }
}

impl Timestamped for MessageRecord {
    fn timestamp(&self) -> Timestamp {
        self.timestamp
    }
    fn set_timestamp(&mut self, ts: Timestamp) {
        self.timestamp = ts;
    }
}

/// Same instant, shown in `target`.
pub fn convert_offset<T: Timestamped + Clone>(record: &T, target: FixedOffset) -> T {
    let mut out = record.clone();
    out.set_timestamp(record.timestamp().with_timezone(&target));
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeoPoint {
    pub lat: f64,
    pub lon: f64,
}

impl GeoPoint {
    pub fn new(lat: f64, lon: f64) -> GeoPoint {
        GeoPoint { lat, lon }
    }

    pub fn of(record: &LocationRecord) -> GeoPoint {
        GeoPoint::new(record.latitude, record.longitude)
    }
}

/// Great-circle distance in meters on a sphere of radius [`EARTH_RADIUS_M`].
pub fn haversine_m(p1: GeoPoint, p2: GeoPoint) -> f64 {
    let (phi1, phi2) = (p1.lat.to_radians(), p2.lat.to_radians());
    let dphi = phi2 - phi1;
    let dlambda = (p2.lon - p1.lon).to_radians();
    let a = (dphi / 2.0).sin().powi(2) + phi1.cos() * phi2.cos() * (dlambda / 2.0).sin().powi(2);
    let a = a.clamp(0.0, 1.0);
    2.0 * EARTH_RADIUS_M * a.sqrt().atan2((1.0 - a).sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocationCluster {
    pub member_indices: Vec<usize>,
    pub centroid: GeoPoint,
    pub time_span: (Timestamp, Timestamp),
    pub label: String,
}

impl LocationCluster {
    fn from_members(records: &[LocationRecord], mut members: Vec<usize>) -> LocationCluster {
        members.sort_unstable();
        members.dedup();
        let n = members.len() as f64;
        let (lat, lon) = members.iter().fold((0.0, 0.0), |(a, b), &i| {
            (a + records[i].latitude, b + records[i].longitude)
        });
        let centroid = GeoPoint::new(lat / n, lon / n);
        let earliest = members
            .iter()
            .map(|&i| records[i].timestamp)
            .min()
            .expect("cluster has members");
        let latest = members
            .iter()
            .map(|&i| records[i].timestamp)
            .max()
            .expect("cluster has members");
        let label = majority_place(records, &members)
            .unwrap_or_else(|| format!("({:.6}, {:.6})", centroid.lat, centroid.lon));
        LocationCluster {
            member_indices: members,
            centroid,
            time_span: (earliest, latest),
            label,
        }
    }
}

fn majority_place(records: &[LocationRecord], members: &[usize]) -> Option<String> {
    let mut counts: Vec<(&str, usize)> = Vec::new();
    for &i in members {
        if let Some(place) = records[i].related_location.as_deref() {
            match counts.iter_mut().find(|(p, _)| *p == place) {
                Some((_, c)) => *c += 1,
                None => counts.push((place, 1)),
            }
        }
    }
    // First-seen wins ties.
    let best = counts.iter().map(|(_, c)| *c).max()?;
    counts
        .into_iter()
        .find(|(_, c)| *c == best)
        .map(|(p, _)| p.to_string())
}

fn order_clusters(clusters: &mut [LocationCluster]) {
    clusters.sort_by(|a, b| {
        a.time_span
            .0
            .cmp(&b.time_span.0)
            .then(a.member_indices[0].cmp(&b.member_indices[0]))
    });
}

struct DisjointSet {
    parent: Vec<usize>,
}

impl DisjointSet {
    fn new(n: usize) -> DisjointSet {
        DisjointSet {
            parent: (0..n).collect(),
        }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
            self.parent[hi] = lo;
        }
    }
}

/// Single-linkage clusters: records joined by any chain of hops of at most
/// `radius_m`.
pub fn group_locations_spatial(records: &[LocationRecord], radius_m: f64) -> Vec<LocationCluster> {
    let mut sets = DisjointSet::new(records.len());
    for i in 0..records.len() {
        for j in (i + 1)..records.len() {
            if haversine_m(GeoPoint::of(&records[i]), GeoPoint::of(&records[j])) <= radius_m {
                sets.union(i, j);
            }
        }
    }
    let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for i in 0..records.len() {
        groups.entry(sets.find(i)).or_default().push(i);
    }
    let mut clusters: Vec<LocationCluster> = groups
        .into_values()
        .map(|m| LocationCluster::from_members(records, m))
        .collect();
    order_clusters(&mut clusters);
    clusters
}

fn chrono_order<T: Timestamped>(records: &[T]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..records.len()).collect();
    order.sort_by_key(|&i| (records[i].timestamp(), i));
    order
}

/// Split the time-ordered records wherever consecutive records are more than
/// `max_gap` apart.
pub fn group_locations_chronological(records: &[LocationRecord], max_gap: Duration) -> Vec<LocationCluster> {
    let max_gap = TimeDelta::from_std(max_gap).unwrap_or(TimeDelta::MAX);
    let mut clusters = Vec::new();
    let mut current: Vec<usize> = Vec::new();
    let mut previous: Option<Timestamp> = None;
    for i in chrono_order(records) {
        let ts = records[i].timestamp;
        if let Some(prev) = previous {
            if ts - prev > max_gap {
                clusters.push(LocationCluster::from_members(
                    records,
                    std::mem::take(&mut current),
                ));
            }
        }
        current.push(i);
        previous = Some(ts);
    }
    if !current.is_empty() {
        clusters.push(LocationCluster::from_members(records, current));
    }
    clusters
}

/// Calendar day (in `display_offset`) → records of that day, ascending.
pub fn bucket_by_day<T: Timestamped>(
    records: &[T],
    display_offset: FixedOffset,
) -> BTreeMap<NaiveDate, Vec<&T>> {
    let mut buckets: BTreeMap<NaiveDate, Vec<&T>> = BTreeMap::new();
    for i in chrono_order(records) {
        let day = records[i].timestamp().with_timezone(&display_offset).date_naive();
        buckets.entry(day).or_default().push(&records[i]);
    }
    buckets
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeetingCandidate {
    pub record_a: usize,
    pub record_b: usize,
    pub distance_m: f64,
    pub time_gap: Duration,
}

/// Pairs within `radius_m` meters and `window` of each other, ordered by the
/// instant of `a`, then of `b`.
pub fn detect_colocations(
    records_a: &[LocationRecord],
    records_b: &[LocationRecord],
    radius_m: f64,
    window: Duration,
) -> Vec<MeetingCandidate> {
    let window_td = TimeDelta::from_std(window).unwrap_or(TimeDelta::MAX);
    let b_order = chrono_order(records_b);
    let b_times: Vec<Timestamp> = b_order.iter().map(|&i| records_b[i].timestamp).collect();

    let mut found: Vec<MeetingCandidate> = Vec::new();
    for (ia, a) in records_a.iter().enumerate() {
        let lo = a.timestamp.checked_sub_signed(window_td);
        let hi = a.timestamp.checked_add_signed(window_td);
        let start = lo.map_or(0, |lo| b_times.partition_point(|t| *t < lo));
        let end = hi.map_or(b_times.len(), |hi| b_times.partition_point(|t| *t <= hi));
        for &ib in &b_order[start..end] {
            let b = &records_b[ib];
            let distance_m = haversine_m(GeoPoint::of(a), GeoPoint::of(b));
            if distance_m <= radius_m {
                let gap = (a.timestamp - b.timestamp).abs();
                found.push(MeetingCandidate {
                    record_a: ia,
                    record_b: ib,
                    distance_m,
                    time_gap: gap.to_std().unwrap_or_default(),
                });
            }
        }
    }
    found.sort_by(|x, y| {
        (
            records_a[x.record_a].timestamp,
            records_b[x.record_b].timestamp,
            x.record_a,
            x.record_b,
        )
            .cmp(&(
                records_a[y.record_a].timestamp,
                records_b[y.record_b].timestamp,
                y.record_a,
                y.record_b,
            ))
    });
    found
}

/// A record type that can be flattened into ` ; `-delimited rows.
pub trait CsvRow {
    /// Header label for a field name, or `None` if the type has no such field.
    fn header_label(column: &str) -> Option<&'static str>;
    fn cell(&self, column: &str) -> String;
    /// The column whose text may span several lines.
    fn multiline_column() -> Option<&'static str>;
}

fn canonical_message_column(column: &str) -> Option<&'static str> {
    Some(match column.trim().to_lowercase().as_str() {
        "from" | "sender" => "sender",
        "body" => "body",
        "timestamp" | "time" => "timestamp",
        "app" => "app",
        "direction" => "direction",
        "deleted" => "deleted",
        "source_files" | "source files" => "source_files",
        _ => return None,
    })
}

impl CsvRow for MessageRecord {
    fn header_label(column: &str) -> Option<&'static str> {
        Some(match canonical_message_column(column)? {
            "sender" => "From",
            "body" => "Body",
            "timestamp" => "Timestamp: Time",
            "app" => "App",
            "direction" => "Direction",
            "deleted" => "Deleted",
            _ => "Source Files",
        })
    }

    fn cell(&self, column: &str) -> String {
        match canonical_message_column(column) {
            Some("sender") => self.sender.as_ref().map(|s| s.label()).unwrap_or_default(),
            Some("body") => self.body.clone(),
            Some("timestamp") => format_dmy_timestamp(&self.timestamp),
            Some("app") => self.app.clone(),
            Some("direction") => self.direction.map(|d| format!("{d:?}")).unwrap_or_default(),
            Some("deleted") => match self.deleted {
                Some(true) => "Yes".into(),
                Some(false) => "No".into(),
                None => String::new(),
            },
            Some(_) => self.source_files.join(" & "),
            None => String::new(),
        }
    }

    fn multiline_column() -> Option<&'static str> {
        Some("body")
    }
}

fn canonical_location_column(column: &str) -> Option<&'static str> {
    Some(match column.trim().to_lowercase().as_str() {
        "name" => "name",
        "timestamp" | "time" => "timestamp",
        "category" => "category",
        "latitude" => "latitude",
        "longitude" => "longitude",
        "related_location" | "related location" => "related_location",
        "source_file" | "source file" => "source_file",
        "size_bytes" | "size" => "size_bytes",
        _ => return None,
    })
}

impl CsvRow for LocationRecord {
    fn header_label(column: &str) -> Option<&'static str> {
        Some(match canonical_location_column(column)? {
            "name" => "Name",
            "timestamp" => "Time",
            "category" => "Category",
            "latitude" => "Latitude",
            "longitude" => "Longitude",
            "related_location" => "Related Location",
            "source_file" => "Source File",
            _ => "Size",
        })
    }

    fn cell(&self, column: &str) -> String {
        match canonical_location_column(column) {
            Some("name") => self.name.clone(),
            Some("timestamp") => format_dmy_timestamp(&self.timestamp),
            Some("category") => self.category.clone(),
            Some("latitude") => self.latitude.to_string(),
            Some("longitude") => self.longitude.to_string(),
            Some("related_location") => self.related_location.clone().unwrap_or_default(),
            Some("source_file") => self.source_file.clone().unwrap_or_default(),
            Some(_) => self.size_bytes.map(|s| s.to_string()).unwrap_or_default(),
            None => String::new(),
        }
    }

    fn multiline_column() -> Option<&'static str> {
        None
    }
}

pub const STANDARD_MESSAGE_COLUMNS: [&str; 3] = ["sender", "body", "timestamp"];
pub const STANDARD_LOCATION_COLUMNS: [&str; 5] =
    ["name", "timestamp", "latitude", "longitude", "related_location"];

/// Header plus one aligned row per record; extra lines of the multi-line
/// column become continuation rows with every other cell empty.
pub fn reduce_to_csv<R: CsvRow>(records: &[R], columns: &[&str]) -> Result<String, TransformError> {
    let mut header = Vec::with_capacity(columns.len());
    for c in columns {
        header.push(R::header_label(c).ok_or_else(|| TransformError::UnknownColumn(c.to_string()))?);
    }
    let multiline = R::multiline_column().and_then(|m| {
        columns
            .iter()
            .position(|c| R::header_label(c) == R::header_label(m))
    });

    let mut rows: Vec<Vec<String>> = vec![header.iter().map(|h| h.to_string()).collect()];
    for rec in records {
        let cells: Vec<String> = columns.iter().map(|c| rec.cell(c)).collect();
        match multiline {
            Some(mi) => {
                let text = cells[mi].clone();
                let mut lines = text.split('\n');
                let mut first = cells.clone();
                first[mi] = lines.next().unwrap_or_default().to_string();
                rows.push(first);
                for extra in lines {
                    let mut cont = vec![String::new(); columns.len()];
                    cont[mi] = extra.to_string();
                    rows.push(cont);
                }
            }
            None => rows.push(cells.into_iter().map(|c| c.replace('\n', " ")).collect()),
        }
    }

    let widths: Vec<usize> = (0..columns.len())
        .map(|i| rows.iter().map(|r| r[i].chars().count()).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    for row in &rows {
        let line: Vec<String> = row
            .iter()
            .enumerate()
            .map(|(i, cell)| {
                if i + 1 == row.len() {
                    cell.clone()
                } else {
                    format!("{cell:<width$}", width = widths[i])
                }
            })
            .collect();
        out.push_str(line.join(" ; ").trim_end());
        out.push('\n');
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GazetteerRow {
    pub point: GeoPoint,
    pub radius_m: f64,
    pub place: String,
}

/// Offline coordinate → place table, one `lat ; lon ; radius_m ; place` row
/// per line. `#` starts a comment line.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Gazetteer {
    pub rows: Vec<GazetteerRow>,
}

impl Gazetteer {
    pub fn parse(text: &str) -> Result<Gazetteer, TransformError> {
        let mut rows = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let t = line.trim();
            if t.is_empty() || t.starts_with('#') {
                continue;
            }
            let err = |message: &str| TransformError::Gazetteer {
                line: i + 1,
                message: message.to_string(),
            };
            let cells: Vec<&str> = t.splitn(4, ';').map(str::trim).collect();
            if cells.len() != 4 {
                return Err(err("expected `lat ; lon ; radius_m ; place`"));
            }
            let lat = parse_decimal(cells[0]).ok_or_else(|| err("bad latitude"))?;
            let lon = parse_decimal(cells[1]).ok_or_else(|| err("bad longitude"))?;
            if !crate::ingest::lex::in_bounds(lat, lon) {
                return Err(err("coordinates out of bounds"));
            }
            let radius_m = parse_decimal(cells[2])
                .filter(|r| *r >= 0.0)
                .ok_or_else(|| err("bad radius"))?;
            if cells[3].is_empty() {
                return Err(err("empty place"));
            }
            rows.push(GazetteerRow {
                point: GeoPoint::new(lat, lon),
                radius_m,
                place: cells[3].to_string(),
            });
        }
        Ok(Gazetteer { rows })
    }
}

/// Place of the nearest row whose radius covers the point; earlier rows win
/// exact ties.
pub fn resolve_place(lat: f64, lon: f64, gazetteer: &Gazetteer) -> Option<&str> {
    let p = GeoPoint::new(lat, lon);
    let mut best: Option<(f64, &GazetteerRow)> = None;
    for row in &gazetteer.rows {
        let d = haversine_m(p, row.point);
        if d <= row.radius_m && best.is_none_or(|(bd, _)| d < bd) {
            best = Some((d, row));
        }
    }
    best.map(|(_, r)| r.place.as_str())
}
