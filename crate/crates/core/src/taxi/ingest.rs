//! Trip CSV ingestion into a time-indexed per-cell demand tensor.
//!
//! Expected header: `pickup_datetime,pickup_lat,pickup_lon,dropoff_lat,dropoff_lon`.
//! Timestamps are ISO-8601. Each trip is binned to the ten-minute slot and
//! the grid cell of its pickup; cells are laid out north-up (row 0 holds the
//! northernmost latitudes).

use std::collections::BTreeMap;
use std::io::Read;

use chrono::{DateTime, Duration, NaiveDateTime, Timelike};
use serde::{Deserialize, Serialize};

use super::EnvError;
use crate::grid::{CellIndex, Grid, GridSpec};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundingBox {
    pub min_lat: f64,
    pub max_lat: f64,
    pub min_lon: f64,
    pub max_lon: f64,
}

impl BoundingBox {
    pub fn contains(&self, lat: f64, lon: f64) -> bool {
        lat >= self.min_lat && lat <= self.max_lat && lon >= self.min_lon && lon <= self.max_lon
    }

    pub fn center(&self) -> (f64, f64) {
        (
            (self.min_lat + self.max_lat) / 2.0,
            (self.min_lon + self.max_lon) / 2.0,
        )
    }

    /// Grid cell of a point, or `None` when outside the box.
    pub fn cell_of(&self, grid: GridSpec, lat: f64, lon: f64) -> Option<CellIndex> {
        if !self.contains(lat, lon) {
            return None;
        }
        let fx = (lon - self.min_lon) / (self.max_lon - self.min_lon);
        let fy = (self.max_lat - lat) / (self.max_lat - self.min_lat);
        let x = ((fx * grid.width() as f64) as usize).min(grid.width() - 1);
        let y = ((fy * grid.height() as f64) as usize).min(grid.height() - 1);
        Some(CellIndex::new(x, y))
    }
}

/// Truncates a timestamp to the start of its ten-minute slot.
pub fn slot_start(t: &NaiveDateTime) -> NaiveDateTime {
    let minute = t.minute() - t.minute() % 10;
    t.date()
        .and_hms_opt(t.hour(), minute, 0)
        .expect("valid truncated time")
}

#[derive(Debug, Clone, PartialEq)]
pub struct DemandTensor {
    grid: GridSpec,
    slots: BTreeMap<NaiveDateTime, Grid<u32>>,
    dropoffs: Grid<u64>,
}

impl DemandTensor {
    pub fn empty(grid: GridSpec) -> Self {
        Self {
            grid,
            slots: BTreeMap::new(),
            dropoffs: Grid::filled(grid, 0),
        }
    }

    pub fn grid(&self) -> GridSpec {
        self.grid
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    pub fn slot_count(&self) -> usize {
        self.slots.len()
    }

    pub fn total_trips(&self) -> u64 {
        self.slots
            .values()
            .flat_map(|g| g.as_slice().iter())
            .map(|&v| v as u64)
            .sum()
    }

    pub fn slots(&self) -> impl Iterator<Item = (&NaiveDateTime, &Grid<u32>)> {
        self.slots.iter()
    }

    /// Requests in the slot containing `clock`; zero when no trips were
    /// recorded then.
    pub fn at(&self, clock: &NaiveDateTime) -> Grid<u32> {
        self.slots
            .get(&slot_start(clock))
            .cloned()
            .unwrap_or_else(|| Grid::filled(self.grid, 0))
    }

    pub fn first_slot(&self) -> Option<NaiveDateTime> {
        self.slots.keys().next().copied()
    }

    pub fn last_slot(&self) -> Option<NaiveDateTime> {
        self.slots.keys().next_back().map(|t| *t + Duration::minutes(10))
    }

    /// Drop-off counts as sampling weights, uniform when none were seen.
    pub fn destination_weights(&self) -> Vec<f64> {
        let w: Vec<f64> = self.dropoffs.as_slice().iter().map(|&v| v as f64).collect();
        if w.iter().sum::<f64>() > 0.0 {
            w
        } else {
            vec![1.0; self.grid.len()]
        }
    }

    pub fn add_trip(&mut self, slot: NaiveDateTime, pickup: CellIndex, dropoff: Option<CellIndex>) {
        let grid = self.grid;
        *self
            .slots
            .entry(slot_start(&slot))
            .or_insert_with(|| Grid::filled(grid, 0))
            .get_mut(pickup) += 1;
        if let Some(d) = dropoff {
            *self.dropoffs.get_mut(d) += 1;
        }
    }
}

#[derive(Debug, Clone)]
pub struct IngestReport {
    pub tensor: DemandTensor,
    /// Well-formed trips whose pickup fell outside the bounding box.
    pub dropped: usize,
    /// Rows that failed to parse.
    pub malformed: usize,
}

pub const TRIP_COLUMNS: [&str; 5] = [
    "pickup_datetime",
    "pickup_lat",
    "pickup_lon",
    "dropoff_lat",
    "dropoff_lon",
];

pub fn parse_timestamp(s: &str) -> Option<NaiveDateTime> {
    let s = s.trim();
    if let Ok(t) = DateTime::parse_from_rfc3339(s) {
        return Some(t.naive_utc());
    }
    ["%Y-%m-%dT%H:%M:%S%.f", "%Y-%m-%d %H:%M:%S%.f", "%Y-%m-%dT%H:%M", "%Y-%m-%d %H:%M"]
        .iter()
        .find_map(|f| NaiveDateTime::parse_from_str(s, f).ok())
}

pub fn ingest_trips<R: Read>(
    reader: R,
    grid: GridSpec,
    bbox: BoundingBox,
) -> Result<IngestReport, EnvError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut report = IngestReport {
        tensor: DemandTensor::empty(grid),
        dropped: 0,
        malformed: 0,
    };
    let headers = rdr
        .headers()
        .map_err(|e| EnvError::Ingest(e.to_string()))?
        .clone();
    if headers.is_empty() || (headers.len() == 1 && headers[0].is_empty()) {
        return Ok(report);
    }
    let mut idx = [0usize; 5];
    for (slot, name) in idx.iter_mut().zip(TRIP_COLUMNS) {
        *slot = headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| EnvError::Ingest(format!("missing column `{name}`")))?;
    }

    for row in rdr.records() {
        let Ok(row) = row else {
            report.malformed += 1;
            continue;
        };
        let field = |i: usize| row.get(idx[i]);
        let parsed = (|| {
            let t = parse_timestamp(field(0)?)?;
            let plat: f64 = field(1)?.parse().ok()?;
            let plon: f64 = field(2)?.parse().ok()?;
            let dlat: f64 = field(3)?.parse().ok()?;
            let dlon: f64 = field(4)?.parse().ok()?;
            [plat, plon, dlat, dlon]
                .iter()
                .all(|v| v.is_finite())
                .then_some((t, plat, plon, dlat, dlon))
        })();
        let Some((t, plat, plon, dlat, dlon)) = parsed else {
            report.malformed += 1;
            continue;
        };
        match bbox.cell_of(grid, plat, plon) {
            Some(pickup) => {
                let dropoff = bbox.cell_of(grid, dlat, dlon);
                report.tensor.add_trip(t, pickup, dropoff);
            }
            None => report.dropped += 1,
        }
    }
    Ok(report)
}
