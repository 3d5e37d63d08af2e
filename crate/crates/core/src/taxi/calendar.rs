//! Static calendar/weather table feeding the location-independent
//! predictor features.
//!
//! CSV columns (header required):
//! `date,hour,temperature,wind,humidity,pressure,view,snow,precipitation,clouds,holiday`
//! where `date` is `YYYY-MM-DD`, `hour` is 0-23 and the three flags are 0/1.
//! `view` is carried as an opaque numeric column.

use std::collections::HashMap;
use std::io::{Read, Write};

use chrono::{Datelike, NaiveDate, NaiveDateTime, Timelike};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::EnvError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeatherRow {
    pub date: NaiveDate,
    pub hour: u32,
    pub temperature: f64,
    pub wind: f64,
    pub humidity: f64,
    pub pressure: f64,
    pub view: f64,
    #[serde(with = "flag")]
    pub snow: bool,
    pub precipitation: f64,
    #[serde(with = "flag")]
    pub clouds: bool,
    #[serde(with = "flag")]
    pub holiday: bool,
}

mod flag {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &bool, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_u8(*v as u8)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<bool, D::Error> {
        let v = u8::deserialize(d)?;
        match v {
            0 => Ok(false),
            1 => Ok(true),
            _ => Err(serde::de::Error::custom("flag must be 0 or 1")),
        }
    }
}

impl WeatherRow {
    /// All-zero weather, no holiday.
    pub fn neutral(date: NaiveDate, hour: u32) -> Self {
        Self {
            date,
            hour,
            temperature: 0.0,
            wind: 0.0,
            humidity: 0.0,
            pressure: 0.0,
            view: 0.0,
            snow: false,
            precipitation: 0.0,
            clouds: false,
            holiday: false,
        }
    }

    pub fn matches(&self, clock: &NaiveDateTime) -> bool {
        self.date == clock.date() && self.hour == clock.hour()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WeatherLookup {
    pub row: WeatherRow,
    /// True when the table had no row and the neutral default was used.
    pub neutral_default: bool,
}

#[derive(Debug, Clone, Default)]
pub struct Calendar {
    rows: HashMap<(NaiveDate, u32), WeatherRow>,
    neutral_fallback: bool,
}

impl Calendar {
    /// An empty table that answers every lookup with the neutral row.
    pub fn neutral() -> Self {
        Self {
            rows: HashMap::new(),
            neutral_fallback: true,
        }
    }

    pub fn from_rows(rows: impl IntoIterator<Item = WeatherRow>) -> Self {
        Self {
            rows: rows.into_iter().map(|r| ((r.date, r.hour), r)).collect(),
            neutral_fallback: false,
        }
    }

    pub fn with_neutral_fallback(mut self, on: bool) -> Self {
        self.neutral_fallback = on;
        self
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn lookup(&self, clock: &NaiveDateTime) -> Option<WeatherLookup> {
        match self.rows.get(&(clock.date(), clock.hour())) {
            Some(row) => Some(WeatherLookup {
                row: row.clone(),
                neutral_default: false,
            }),
            None if self.neutral_fallback => Some(WeatherLookup {
                row: WeatherRow::neutral(clock.date(), clock.hour()),
                neutral_default: true,
            }),
            None => None,
        }
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<Self, EnvError> {
        let mut rdr = csv::Reader::from_reader(reader);
        let rows = rdr
            .deserialize::<WeatherRow>()
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| EnvError::Ingest(format!("calendar table: {e}")))?;
        Ok(Self::from_rows(rows))
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), EnvError> {
        let mut rows: Vec<&WeatherRow> = self.rows.values().collect();
        rows.sort_by_key(|r| (r.date, r.hour));
        let mut w = csv::Writer::from_writer(writer);
        for r in rows {
            w.serialize(r).map_err(|e| EnvError::Ingest(e.to_string()))?;
        }
        w.flush().map_err(|e| EnvError::Ingest(e.to_string()))?;
        Ok(())
    }

    /// Plausible hourly weather for `days` days starting at `start`, with
    /// weekends flagged as holidays.
    pub fn synthetic<R: Rng + ?Sized>(start: NaiveDate, days: u32, rng: &mut R) -> Self {
        let mut rows = Vec::with_capacity(days as usize * 24);
        for d in 0..days {
            let date = start + chrono::Duration::days(d as i64);
            let season = (date.ordinal() as f64 / 365.0 * std::f64::consts::TAU).cos();
            let holiday = date.weekday().number_from_monday() >= 6;
            let cloudy_day = rng.random_bool(0.4);
            for hour in 0..24u32 {
                let diurnal = ((hour as f64 - 15.0) / 24.0 * std::f64::consts::TAU).cos();
                let temperature = 12.0 - 10.0 * season + 4.0 * diurnal + rng.random_range(-1.5..1.5);
                let precipitation = if cloudy_day && rng.random_bool(0.3) {
                    rng.random_range(0.1..4.0)
                } else {
                    0.0
                };
                rows.push(WeatherRow {
                    date,
                    hour,
                    temperature,
                    wind: rng.random_range(0.0..12.0),
                    humidity: rng.random_range(30.0..95.0),
                    pressure: 1013.0 + rng.random_range(-15.0..15.0),
                    view: if cloudy_day { rng.random_range(2.0..10.0) } else { 10.0 },
                    snow: temperature < 0.0 && precipitation > 0.0,
                    precipitation,
                    clouds: cloudy_day,
                    holiday,
                });
            }
        }
        Self::from_rows(rows)
    }
}
