//! Station-side logic: first-come-first-served port scheduling and the
//! time-of-day waiting-time forecast used to answer distant trucks.

use std::fmt::Write as _;

use thiserror::Error;

use crate::scenario::TruckId;

/// Earliest-available time of every port at one station.
#[derive(Debug, Clone, PartialEq)]
pub struct PortSchedule {
    available: Vec<f64>,
}

/// Result of committing a charging decision.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Assignment {
    pub port: usize,
    pub wait: f64,
    pub start: f64,
    pub end: f64,
}

impl PortSchedule {
    /// All ports free from minute 0.
    pub fn new(port_count: usize) -> Self {
        assert!(port_count >= 1, "a station needs at least one port");
        Self {
            available: vec![0.0; port_count],
        }
    }

    pub fn from_times(available: Vec<f64>) -> Self {
        assert!(!available.is_empty(), "a station needs at least one port");
        assert!(available.iter().all(|t| t.is_finite()));
        Self { available }
    }

    pub fn times(&self) -> &[f64] {
        &self.available
    }

    pub fn port_count(&self) -> usize {
        self.available.len()
    }

    /// Port with the smallest available time; ties go to the lowest index.
    fn best_port(&self) -> usize {
        let mut best = 0;
        for (c, &t) in self.available.iter().enumerate().skip(1) {
            if t < self.available[best] {
                best = c;
            }
        }
        best
    }

    /// Wait for a truck reaching the station at `arrival`:
    /// `max(min_c(t_c - arrival), 0)`.
    pub fn nearby_waiting_time(&self, arrival: f64) -> f64 {
        (self.available[self.best_port()] - arrival).max(0.0)
    }

    /// Commits a nearby truck's decision. Declined charging leaves the
    /// schedule untouched.
    pub fn assign_port(&mut self, arrival: f64, charge: bool, duration: f64) -> Option<Assignment> {
        debug_assert!(duration >= 0.0);
        if !charge {
            return None;
        }
        let port = self.best_port();
        let wait = self.nearby_waiting_time(arrival);
        let start = arrival + wait;
        let end = start + duration;
        self.available[port] = end;
        Some(Assignment {
            port,
            wait,
            start,
            end,
        })
    }
}

/// Whether a station is still gathering history or answering from it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Collection,
    Nominal,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WaitObservation {
    /// Arrival at the station (min since epoch).
    pub arrival: f64,
    pub wait: f64,
    pub port: usize,
    pub truck: TruckId,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DistantQuery {
    /// First round: earliest arrival at the station.
    Earliest(f64),
    /// Second round: the full arrival window.
    Window { lo: f64, hi: f64 },
}

#[derive(Debug, Error, PartialEq)]
pub enum StationError {
    #[error("arrival window [{lo}, {hi}] is reversed")]
    ReversedWindow { lo: f64, hi: f64 },
}

/// Periodic piecewise-constant map from time of day to mean observed wait.
#[derive(Debug, Clone, PartialEq)]
pub struct ForecastModel {
    bin_width: f64,
    day_length: f64,
    sums: Vec<f64>,
    counts: Vec<u64>,
    phase: Phase,
    keep_learning: bool,
}

impl ForecastModel {
    pub fn new(bin_width: f64, day_length: f64) -> Self {
        let bins = (day_length / bin_width).round() as usize;
        assert!(bins >= 1, "bin width must not exceed the day length");
        Self {
            bin_width,
            day_length,
            sums: vec![0.0; bins],
            counts: vec![0; bins],
            phase: Phase::Collection,
            keep_learning: false,
        }
    }

    /// Builds a model whose bins already hold the given means (one
    /// observation each), in the nominal phase.
    pub fn from_means(bin_width: f64, means: &[f64]) -> Self {
        let mut m = Self::new(bin_width, bin_width * means.len() as f64);
        m.sums.copy_from_slice(means);
        m.counts.iter_mut().for_each(|c| *c = 1);
        m.phase = Phase::Nominal;
        m
    }

    pub fn phase(&self) -> Phase {
        self.phase
    }

    pub fn set_phase(&mut self, phase: Phase) {
        self.phase = phase;
    }

    /// Keep updating bins during the nominal phase.
    pub fn set_keep_learning(&mut self, on: bool) {
        self.keep_learning = on;
    }

    pub fn bin_width(&self) -> f64 {
        self.bin_width
    }

    pub fn bin_count(&self) -> usize {
        self.sums.len()
    }

    pub fn bin_of(&self, t: f64) -> usize {
        let tod = t.rem_euclid(self.day_length);
        ((tod / self.bin_width) as usize).min(self.sums.len() - 1)
    }

    pub fn bin_mean(&self, bin: usize) -> f64 {
        if self.counts[bin] == 0 {
            0.0
        } else {
            self.sums[bin] / self.counts[bin] as f64
        }
    }

    pub fn bin_count_at(&self, bin: usize) -> u64 {
        self.counts[bin]
    }

    /// `f(t)`; empty bins read as 0.
    pub fn lookup(&self, t: f64) -> f64 {
        self.bin_mean(self.bin_of(t))
    }

    pub fn record_observation(&mut self, obs: &WaitObservation) {
        if self.phase == Phase::Nominal && !self.keep_learning {
            return;
        }
        debug_assert!(obs.wait >= 0.0);
        let b = self.bin_of(obs.arrival);
        self.sums[b] += obs.wait;
        self.counts[b] += 1;
    }

    /// Maximum of `f` over one full period starting at `earliest`'s bin,
    /// i.e. `sup_{a ≥ earliest} f(a)` for a periodic `f`.
    pub fn max_waiting_since(&self, earliest: f64) -> f64 {
        let start = self.bin_of(earliest);
        let n = self.sums.len();
        (0..n)
            .map(|i| self.bin_mean((start + i) % n))
            .fold(0.0, f64::max)
    }

    /// `∫_0^t f` over absolute time.
    fn integral_to(&self, t: f64) -> f64 {
        let n = self.sums.len();
        let per_day: f64 = (0..n).map(|b| self.bin_mean(b) * self.bin_width).sum();
        let days = (t / self.day_length).floor();
        let tod = t - days * self.day_length;
        let bin = ((tod / self.bin_width) as usize).min(n - 1);
        let whole: f64 = (0..bin).map(|b| self.bin_mean(b) * self.bin_width).sum();
        days * per_day + whole + self.bin_mean(bin) * (tod - bin as f64 * self.bin_width)
    }

    /// Average of `f` over `[lo, hi]`; `f(lo)` for a point window.
    pub fn window_waiting_estimate(&self, lo: f64, hi: f64) -> f64 {
        debug_assert!(lo <= hi);
        if hi <= lo {
            return self.lookup(lo);
        }
        ((self.integral_to(hi) - self.integral_to(lo)) / (hi - lo)).max(0.0)
    }

    /// Answers one round of the distant-truck exchange. Both rounds return
    /// 0 while the station is still collecting data.
    pub fn respond_distant(&self, query: DistantQuery) -> Result<f64, StationError> {
        if let DistantQuery::Window { lo, hi } = query {
            if hi < lo {
                return Err(StationError::ReversedWindow { lo, hi });
            }
        }
        if self.phase == Phase::Collection {
            return Ok(0.0);
        }
        Ok(match query {
            DistantQuery::Earliest(t) => self.max_waiting_since(t),
            DistantQuery::Window { lo, hi } => self.window_waiting_estimate(lo, hi),
        })
    }

    /// `bin_start,mean_wait,count` rows.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("bin_start_min,mean_wait_min,count\n");
        for b in 0..self.sums.len() {
            let _ = writeln!(
                out,
                "{},{},{}",
                b as f64 * self.bin_width,
                self.bin_mean(b),
                self.counts[b]
            );
        }
        out
    }
}
