use chrono::{NaiveDateTime, Timelike};
use rand::Rng;
use rand::distr::weighted::WeightedIndex;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use super::ingest::DemandTensor;
use super::EnvError;
use crate::grid::{CellIndex, Grid, GridSpec};

/// Ten-minute slots in a day.
pub const SLOTS_PER_DAY: usize = 144;

pub fn slot_of_day(clock: &NaiveDateTime) -> usize {
    (clock.hour() as usize * 60 + clock.minute() as usize) / 10
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hotspot {
    pub cell: CellIndex,
    pub rate: f64,
}

/// Synthetic per-cell request intensity: a Gaussian mixture of hotspots
/// modulated by a time-of-day multiplier.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DemandModel {
    pub grid: GridSpec,
    pub hotspots: Vec<Hotspot>,
    /// Standard deviation (cells) of each hotspot's kernel; 0 puts all mass
    /// on the hotspot cell.
    #[serde(default)]
    pub spread: f64,
    pub time_profile: Vec<f64>,
    pub destination_weights: Vec<f64>,
}

impl DemandModel {
    pub fn validate(&self) -> Result<(), EnvError> {
        let bad = |m: &str| Err(EnvError::Demand(m.to_string()));
        if self.time_profile.len() != SLOTS_PER_DAY {
            return bad("time_profile must have exactly 144 entries");
        }
        if self.destination_weights.len() != self.grid.len() {
            return bad("destination_weights must have one entry per cell");
        }
        let finite_nonneg = |v: &f64| v.is_finite() && *v >= 0.0;
        if !self.time_profile.iter().all(finite_nonneg)
            || !self.destination_weights.iter().all(finite_nonneg)
            || !self.hotspots.iter().all(|h| finite_nonneg(&h.rate))
            || !finite_nonneg(&self.spread)
        {
            return bad("rates, multipliers and weights must be finite and non-negative");
        }
        if self.destination_weights.iter().sum::<f64>() <= 0.0 {
            return bad("destination_weights must not all be zero");
        }
        for h in &self.hotspots {
            self.grid.check(h.cell)?;
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self, EnvError> {
        let m: DemandModel =
            serde_json::from_str(text).map_err(|e| EnvError::Demand(e.to_string()))?;
        m.validate()?;
        Ok(m)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("demand model serializes")
    }

    /// A desk-scale default: a handful of tight hotspots, a two-peak daily
    /// profile and uniform destinations.
    pub fn synthetic<R: Rng + ?Sized>(grid: GridSpec, rng: &mut R) -> Self {
        Self::synthetic_with(grid, (grid.len() / 40).max(2), rng)
    }

    pub fn synthetic_with<R: Rng + ?Sized>(grid: GridSpec, n: usize, rng: &mut R) -> Self {
        let hotspots = (0..n)
            .map(|_| Hotspot {
                cell: CellIndex::new(
                    rng.random_range(0..grid.width()),
                    rng.random_range(0..grid.height()),
                ),
                rate: rng.random_range(1.5..3.0),
            })
            .collect();
        let time_profile = (0..SLOTS_PER_DAY)
            .map(|s| {
                let h = s as f64 / 6.0;
                let morning = (-(h - 8.5).powi(2) / 4.0).exp();
                let evening = (-(h - 18.5).powi(2) / 6.0).exp();
                0.5 + 0.5 * morning + 0.6 * evening
            })
            .collect();
        Self {
            grid,
            hotspots,
            spread: 0.7,
            time_profile,
            destination_weights: vec![1.0; grid.len()],
        }
    }

    /// Time-independent base intensity per cell.
    pub fn cell_rates(&self) -> Grid<f64> {
        let two_var = 2.0 * self.spread * self.spread;
        Grid::from_fn(self.grid, |c| {
            self.hotspots
                .iter()
                .map(|h| {
                    if self.spread == 0.0 {
                        if h.cell == c {
                            h.rate
                        } else {
                            0.0
                        }
                    } else {
                        let dx = c.x as f64 - h.cell.x as f64;
                        let dy = c.y as f64 - h.cell.y as f64;
                        h.rate * (-(dx * dx + dy * dy) / two_var).exp()
                    }
                })
                .sum()
        })
    }

    pub fn rates_at(&self, clock: &NaiveDateTime) -> Grid<f64> {
        let m = self.time_profile[slot_of_day(clock)];
        self.cell_rates().map(|r| r * m)
    }
}

/// Independent Poisson draw per cell at the clock's intensity.
pub fn sample_requests<R: Rng + ?Sized>(
    model: &DemandModel,
    clock: &NaiveDateTime,
    rng: &mut R,
) -> Grid<u32> {
    sample_from_rates(&model.rates_at(clock), rng)
}

pub(crate) fn sample_from_rates<R: Rng + ?Sized>(rates: &Grid<f64>, rng: &mut R) -> Grid<u32> {
    rates.map(|&rate| {
        if rate > 0.0 {
            Poisson::new(rate).map(|p| p.sample(rng) as u32).unwrap_or(0)
        } else {
            0
        }
    })
}

/// Where requests come from during an episode.
#[derive(Debug, Clone)]
pub enum DemandSource {
    Synthetic(DemandModel),
    Replay(DemandTensor),
}

impl DemandSource {
    pub fn grid(&self) -> GridSpec {
        match self {
            DemandSource::Synthetic(m) => m.grid,
            DemandSource::Replay(t) => t.grid(),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, clock: &NaiveDateTime, rng: &mut R) -> Grid<u32> {
        match self {
            DemandSource::Synthetic(m) => sample_requests(m, clock, rng),
            DemandSource::Replay(t) => t.at(clock),
        }
    }

    /// Expected request count per cell; used as the oracle target when the
    /// demand is synthetic.
    pub fn expected(&self, clock: &NaiveDateTime) -> Grid<f64> {
        match self {
            DemandSource::Synthetic(m) => m.rates_at(clock),
            DemandSource::Replay(t) => t.at(clock).map(|&v| v as f64),
        }
    }

    pub fn sample_destination<R: Rng + ?Sized>(&self, rng: &mut R) -> CellIndex {
        let grid = self.grid();
        let weights: Vec<f64> = match self {
            DemandSource::Synthetic(m) => m.destination_weights.clone(),
            DemandSource::Replay(t) => t.destination_weights(),
        };
        match WeightedIndex::new(&weights) {
            Ok(dist) => grid.cell_at(dist.sample(rng)),
            Err(_) => grid.cell_at(rng.random_range(0..grid.len())),
        }
    }
}
