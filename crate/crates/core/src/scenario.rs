//! World description: stations, trucks, routes and bounded disturbances.
//!
//! Units are minutes, kWh, kWh/min, € and €/min throughout. Minute 0 is
//! 00:00 of the first simulated day; the time of day is `t mod day_length`.

use std::collections::HashMap;
use std::fmt;
use std::path::Path;

use rand::distributions::{Distribution, WeightedIndex};
use rand::seq::index::sample;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Version written as the first key of every scenario file.
pub const SCENARIO_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct StationId(pub u32);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TruckId(pub u32);

impl fmt::Display for StationId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "S{}", self.0)
    }
}

impl fmt::Display for TruckId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "T{}", self.0)
    }
}

/// A charging station.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StationSpec {
    pub id: StationId,
    pub port_count: u32,
    /// Power delivered per port (kWh/min).
    pub charge_power: f64,
    /// €/kWh.
    pub electricity_price: f64,
}

impl StationSpec {
    /// Charging rate seen by a truck that accepts at most `max_charge_power`.
    pub fn effective_rate(&self, max_charge_power: f64) -> f64 {
        self.charge_power.min(max_charge_power)
    }

    /// Electricity cost per minute of charging (€/min) at the effective rate.
    pub fn cost_per_minute(&self, max_charge_power: f64) -> f64 {
        self.electricity_price * self.effective_rate(max_charge_power)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruckSpec {
    pub id: TruckId,
    /// Installed capacity (kWh).
    pub battery_full: f64,
    /// Battery at the origin (kWh).
    pub battery_initial: f64,
    /// Absolute reserve that must never be crossed (kWh).
    pub safety_margin: f64,
    /// Consumption while driving (kWh/min).
    pub consumption_rate: f64,
    /// Highest charging power the battery accepts (kWh/min).
    pub max_charge_power: f64,
    /// €/min for detours, charging and waiting.
    pub labor_rate: f64,
    /// €/min past the deadline.
    pub deadline_penalty_rate: f64,
    /// Departure on the first day, minutes since epoch.
    pub departure_time: f64,
    /// Deadline on the first day, minutes since epoch.
    pub deadline: f64,
}

impl TruckSpec {
    pub fn departure_on(&self, day: u32, day_length: f64) -> f64 {
        self.departure_time + f64::from(day) * day_length
    }

    pub fn deadline_on(&self, day: u32, day_length: f64) -> f64 {
        self.deadline + f64::from(day) * day_length
    }
}

/// One stretch of main road between consecutive ramps.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Leg {
    /// Nominal travel time (min).
    pub travel: f64,
    /// Relative travel-time noise bound, in `[0, 1)`.
    pub travel_uncertainty: f64,
    /// Relative energy noise bound, in `[0, 1)`.
    pub energy_uncertainty: f64,
}

impl Leg {
    pub fn travel_noise_bound(&self) -> f64 {
        self.travel_uncertainty * self.travel
    }

    pub fn energy_noise_bound(&self, consumption_rate: f64) -> f64 {
        self.energy_uncertainty * consumption_rate * self.travel
    }
}

/// A station along a route, with the leg that follows its ramp.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RouteStop {
    pub station: StationId,
    /// One-way detour between ramp and station (min).
    pub detour: f64,
    /// Leg from this ramp to the next ramp, or to the destination.
    pub leg: Leg,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RouteSpec {
    /// Leg from the origin to the first ramp.
    pub origin_leg: Leg,
    #[serde(default)]
    pub stops: Vec<RouteStop>,
}

impl RouteSpec {
    /// Number of stations `N` on the route.
    pub fn len(&self) -> usize {
        self.stops.len()
    }

    pub fn is_empty(&self) -> bool {
        self.stops.is_empty()
    }

    /// Leg `k` in `0..=N`: leg 0 leaves the origin, leg `k` leaves ramp `k`.
    pub fn leg(&self, k: usize) -> &Leg {
        if k == 0 {
            &self.origin_leg
        } else {
            &self.stops[k - 1].leg
        }
    }

    pub fn legs(&self) -> impl Iterator<Item = &Leg> {
        std::iter::once(&self.origin_leg).chain(self.stops.iter().map(|s| &s.leg))
    }

    pub fn nominal_duration(&self) -> f64 {
        self.legs().map(|l| l.travel).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruckRoute {
    pub truck: TruckSpec,
    pub route: RouteSpec,
}

/// Immutable description of a whole experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub schema_version: u32,
    pub seed: u64,
    pub day_length: f64,
    pub collection_days: u32,
    pub evaluation_days: u32,
    pub forecast_bin_width: f64,
    pub stations: Vec<StationSpec>,
    pub trucks: Vec<TruckRoute>,
}

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("unknown truck {0}")]
    UnknownTruck(TruckId),
    #[error("day {day} outside the {horizon}-day horizon")]
    DayOutOfRange { day: u32, horizon: u32 },
    #[error("invalid generation config field `{field}`: {reason}")]
    InvalidField { field: &'static str, reason: String },
    #[error("cannot parse scenario: {0}")]
    Parse(String),
    #[error("unsupported scenario schema version {0}")]
    SchemaVersion(u32),
    #[error("i/o error on {path}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl Scenario {
    pub fn total_days(&self) -> u32 {
        self.collection_days + self.evaluation_days
    }

    pub fn station(&self, id: StationId) -> Option<&StationSpec> {
        self.stations.iter().find(|s| s.id == id)
    }

    pub fn truck(&self, id: TruckId) -> Option<&TruckRoute> {
        self.trucks.iter().find(|t| t.truck.id == id)
    }

    pub fn station_index(&self) -> HashMap<StationId, usize> {
        self.stations
            .iter()
            .enumerate()
            .map(|(i, s)| (s.id, i))
            .collect()
    }

    /// Overrides every leg's travel and energy uncertainty with `level`.
    pub fn with_uncertainty(mut self, level: f64) -> Self {
        for tr in &mut self.trucks {
            for leg in std::iter::once(&mut tr.route.origin_leg)
                .chain(tr.route.stops.iter_mut().map(|s| &mut s.leg))
            {
                leg.travel_uncertainty = level;
                leg.energy_uncertainty = level;
            }
        }
        self
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario is always representable as TOML")
    }

    pub fn from_toml(text: &str) -> Result<Self, ScenarioError> {
        #[derive(Deserialize)]
        struct Header {
            schema_version: u32,
        }
        let header: Header =
            toml::from_str(text).map_err(|e| ScenarioError::Parse(e.to_string()))?;
        if header.schema_version != SCENARIO_SCHEMA_VERSION {
            return Err(ScenarioError::SchemaVersion(header.schema_version));
        }
        toml::from_str(text).map_err(|e| ScenarioError::Parse(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, ScenarioError> {
        let text = std::fs::read_to_string(path).map_err(|source| ScenarioError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml(&text)
    }

    pub fn save(&self, path: &Path) -> Result<(), ScenarioError> {
        std::fs::write(path, self.to_toml()).map_err(|source| ScenarioError::Io {
            path: path.display().to_string(),
            source,
        })
    }
}

// ---------------------------------------------------------------------------
// Validation

/// A broken invariant, naming the offending entity and field.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub entity: String,
    pub field: String,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}: {}", self.entity, self.field, self.message)
    }
}

struct Collector(Vec<Violation>);

impl Collector {
    fn check(&mut self, ok: bool, entity: impl Into<String>, field: &str, message: String) {
        if !ok {
            self.0.push(Violation {
                entity: entity.into(),
                field: field.to_string(),
                message,
            });
        }
    }
}

fn in_unit_interval(x: f64) -> bool {
    (0.0..1.0).contains(&x)
}

/// Every broken type invariant of `scenario`; empty when well-formed.
///
/// Beyond per-field checks this also flags legs that no charging schedule
/// can cover under worst-case energy noise, since those make the truck
/// planners infeasible.
pub fn validate_scenario(scenario: &Scenario) -> Vec<Violation> {
    let mut c = Collector(Vec::new());
    c.check(
        scenario.schema_version == SCENARIO_SCHEMA_VERSION,
        "scenario",
        "schema_version",
        format!(
            "expected {SCENARIO_SCHEMA_VERSION}, got {}",
            scenario.schema_version
        ),
    );
    c.check(
        scenario.day_length > 0.0 && scenario.day_length.is_finite(),
        "scenario",
        "day_length",
        format!("must be positive, got {}", scenario.day_length),
    );
    let bins = scenario.day_length / scenario.forecast_bin_width;
    c.check(
        scenario.forecast_bin_width > 0.0 && bins.is_finite() && (bins - bins.round()).abs() < 1e-9,
        "scenario",
        "forecast_bin_width",
        format!(
            "{} does not divide day_length {}",
            scenario.forecast_bin_width, scenario.day_length
        ),
    );

    let mut seen = HashMap::new();
    for s in &scenario.stations {
        let name = format!("station {}", s.id);
        c.check(
            seen.insert(s.id, ()).is_none(),
            name.clone(),
            "id",
            "duplicate station id".into(),
        );
        c.check(
            s.port_count >= 1,
            name.clone(),
            "port_count",
            "must be at least 1".into(),
        );
        c.check(
            s.charge_power > 0.0,
            name.clone(),
            "charge_power",
            format!("must be positive, got {}", s.charge_power),
        );
        c.check(
            s.electricity_price >= 0.0,
            name,
            "electricity_price",
            format!("must be nonnegative, got {}", s.electricity_price),
        );
    }

    let mut seen_trucks = HashMap::new();
    for TruckRoute { truck: t, route } in &scenario.trucks {
        let name = format!("truck {}", t.id);
        c.check(
            seen_trucks.insert(t.id, ()).is_none(),
            name.clone(),
            "id",
            "duplicate truck id".into(),
        );
        c.check(
            t.safety_margin > 0.0,
            name.clone(),
            "safety_margin",
            format!("must be positive, got {}", t.safety_margin),
        );
        c.check(
            t.safety_margin < t.battery_initial,
            name.clone(),
            "safety_margin",
            format!(
                "{} is not below battery_initial {}",
                t.safety_margin, t.battery_initial
            ),
        );
        c.check(
            t.battery_initial <= t.battery_full,
            name.clone(),
            "battery_initial",
            format!(
                "{} exceeds battery_full {}",
                t.battery_initial, t.battery_full
            ),
        );
        c.check(
            t.consumption_rate > 0.0,
            name.clone(),
            "consumption_rate",
            format!("must be positive, got {}", t.consumption_rate),
        );
        c.check(
            t.max_charge_power > 0.0,
            name.clone(),
            "max_charge_power",
            format!("must be positive, got {}", t.max_charge_power),
        );
        c.check(
            t.labor_rate >= 0.0 && t.deadline_penalty_rate >= 0.0,
            name.clone(),
            "labor_rate",
            "cost rates must be nonnegative".into(),
        );
        c.check(
            t.departure_time < t.deadline,
            name.clone(),
            "deadline",
            format!(
                "{} is not after departure_time {}",
                t.deadline, t.departure_time
            ),
        );

        for (k, leg) in route.legs().enumerate() {
            let seg = format!("truck {} route leg {k}", t.id);
            c.check(
                leg.travel > 0.0 && leg.travel.is_finite(),
                seg.clone(),
                "travel",
                format!("must be positive, got {}", leg.travel),
            );
            c.check(
                in_unit_interval(leg.travel_uncertainty),
                seg.clone(),
                "travel_uncertainty",
                format!("must lie in [0,1), got {}", leg.travel_uncertainty),
            );
            c.check(
                in_unit_interval(leg.energy_uncertainty),
                seg,
                "energy_uncertainty",
                format!("must lie in [0,1), got {}", leg.energy_uncertainty),
            );
        }
        for (i, stop) in route.stops.iter().enumerate() {
            let seg = format!("truck {} route segment {}", t.id, i + 1);
            c.check(
                scenario.station(stop.station).is_some(),
                seg.clone(),
                "station",
                format!("dangling station reference {}", stop.station),
            );
            c.check(
                stop.detour >= 0.0 && stop.detour.is_finite(),
                seg,
                "detour",
                format!("must be nonnegative, got {}", stop.detour),
            );
        }
        reachability(&mut c, t, route);
    }
    c.0
}

/// Worst-case energy of every leg must fit in the usable battery, and the
/// initial charge must cover the origin leg.
fn reachability(c: &mut Collector, t: &TruckSpec, route: &RouteSpec) {
    let usable = t.battery_full - t.safety_margin;
    let p = t.consumption_rate;
    let detour = |k: usize| route.stops.get(k.wrapping_sub(1)).map_or(0.0, |s| s.detour);
    let first = route.origin_leg;
    let need0 = p * (first.travel + detour(1)) + first.energy_noise_bound(p);
    c.check(
        t.battery_initial - t.safety_margin >= need0 - 1e-9,
        format!("truck {}", t.id),
        "battery_initial",
        format!("cannot reach the first ramp: needs {need0} kWh above the margin"),
    );
    for k in 1..=route.len() {
        let leg = route.leg(k);
        let need = p * (detour(k) + leg.travel + detour(k + 1)) + leg.energy_noise_bound(p);
        c.check(
            need <= usable + 1e-9,
            format!("truck {} route segment {k}", t.id),
            "travel",
            format!("leg needs {need} kWh but only {usable} kWh is usable"),
        );
    }
}

// ---------------------------------------------------------------------------
// Disturbances

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LegNoise {
    /// Added to the leg's travel time (min).
    pub travel: f64,
    /// Added to the battery on leg completion (kWh).
    pub energy: f64,
}

/// Noise for every leg of one truck's trip on one day. Index 0 is the
/// origin leg.
#[derive(Debug, Clone, PartialEq)]
pub struct DisturbanceRealization {
    pub legs: Vec<LegNoise>,
}

const TRAVEL_CHANNEL: u64 = 0;
const ENERGY_CHANNEL: u64 = 1;

/// Uniform draw in `[-1, 1)` from the ChaCha stream keyed by
/// `(seed, day, truck)`, at the word offset fixed by `(leg, channel)`.
fn keyed_unit(seed: u64, day: u32, truck: TruckId, leg: usize, channel: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream((u64::from(day) << 32) | u64::from(truck.0));
    rng.set_word_pos(u128::from((leg as u64) * 4 + channel * 2));
    let u: f64 = rng.gen();
    2.0 * u - 1.0
}

pub fn sample_disturbances(
    scenario: &Scenario,
    day: u32,
    truck_id: TruckId,
) -> Result<DisturbanceRealization, ScenarioError> {
    let tr = scenario
        .truck(truck_id)
        .ok_or(ScenarioError::UnknownTruck(truck_id))?;
    let horizon = scenario.total_days();
    if day >= horizon {
        return Err(ScenarioError::DayOutOfRange { day, horizon });
    }
    let p = tr.truck.consumption_rate;
    let legs = tr
        .route
        .legs()
        .enumerate()
        .map(|(k, leg)| {
            let tb = leg.travel_noise_bound();
            let eb = leg.energy_noise_bound(p);
            LegNoise {
                travel: if tb > 0.0 {
                    tb * keyed_unit(scenario.seed, day, truck_id, k, TRAVEL_CHANNEL)
                } else {
                    0.0
                },
                energy: if eb > 0.0 {
                    eb * keyed_unit(scenario.seed, day, truck_id, k, ENERGY_CHANNEL)
                } else {
                    0.0
                },
            }
        })
        .collect();
    Ok(DisturbanceRealization { legs })
}

// ---------------------------------------------------------------------------
// Generation

/// Closed range `[min, max]` used by the generator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Span {
    pub min: f64,
    pub max: f64,
}

impl Span {
    pub const fn new(min: f64, max: f64) -> Self {
        Self { min, max }
    }

    fn check(&self, field: &'static str, nonneg: bool) -> Result<(), ScenarioError> {
        if !(self.min.is_finite() && self.max.is_finite()) {
            return Err(invalid(field, "bounds must be finite"));
        }
        if self.min > self.max {
            return Err(invalid(
                field,
                format!("empty range [{}, {}]", self.min, self.max),
            ));
        }
        if nonneg && self.min < 0.0 {
            return Err(invalid(field, format!("negative lower bound {}", self.min)));
        }
        Ok(())
    }

    fn draw<R: Rng>(&self, rng: &mut R) -> f64 {
        if self.min == self.max {
            self.min
        } else {
            rng.gen_range(self.min..=self.max)
        }
    }
}

fn invalid(field: &'static str, reason: impl Into<String>) -> ScenarioError {
    ScenarioError::InvalidField {
        field,
        reason: reason.into(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TruckTemplate {
    pub battery_full: f64,
    /// Safety margin as a fraction of `battery_full`.
    pub safety_fraction: f64,
    pub consumption_rate: f64,
    pub max_charge_power: f64,
    pub labor_rate: f64,
    pub deadline_penalty_rate: f64,
    /// Fraction of the feasible range `[needed, battery_full]` used for the
    /// initial battery.
    pub initial_battery: Span,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StationTemplate {
    pub charge_power: f64,
    pub electricity_price: f64,
}

/// Parameters of the synthetic corridor network.
///
/// The generator draws `corridor_count` origin-destination corridors, each
/// an ordered list of distinct stations. Trucks pick a corridor with
/// probability proportional to its flow weight.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenerationConfig {
    pub station_count: u32,
    pub truck_count: u32,
    pub corridor_count: u32,
    /// Stations per route (inclusive range).
    pub stops_per_route: (u32, u32),
    pub origin_travel: Span,
    pub leg_travel: Span,
    pub detour: Span,
    /// Relative weight per corridor; empty means uniform.
    #[serde(default)]
    pub flow_weights: Vec<f64>,
    /// Ports per truck whose route contains the station (rounded up, min 1).
    pub ports_per_truck: f64,
    /// Departure time-of-day window (min).
    pub departure_window: Span,
    /// Deadline minus nominal trip duration (min).
    pub deadline_slack: Span,
    /// Relative travel and energy uncertainty written to every leg.
    pub uncertainty: f64,
    /// Uncertainty level for which legs are kept coverable by one full charge.
    pub feasibility_uncertainty: f64,
    pub truck: TruckTemplate,
    pub station: StationTemplate,
    pub day_length: f64,
    pub collection_days: u32,
    pub evaluation_days: u32,
    pub forecast_bin_width: f64,
}

impl GenerationConfig {
    /// Truck and station parameters of the Swedish-network case study,
    /// on a small synthetic corridor network.
    pub fn paper_sv() -> Self {
        Self {
            station_count: 8,
            truck_count: 50,
            corridor_count: 6,
            stops_per_route: (3, 6),
            origin_travel: Span::new(40.0, 120.0),
            leg_travel: Span::new(40.0, 110.0),
            detour: Span::new(2.0, 10.0),
            flow_weights: Vec::new(),
            ports_per_truck: 0.05,
            departure_window: Span::new(7.0 * 60.0, 10.0 * 60.0),
            deadline_slack: Span::new(120.0, 240.0),
            uncertainty: 0.05,
            feasibility_uncertainty: 0.1,
            truck: TruckTemplate {
                battery_full: 624.0,
                safety_fraction: 0.25,
                consumption_rate: 1.83,
                max_charge_power: 350.0 / 60.0,
                labor_rate: 2.0,
                deadline_penalty_rate: 10.0,
                initial_battery: Span::new(0.0, 1.0),
            },
            station: StationTemplate {
                charge_power: 300.0 / 60.0,
                electricity_price: 0.36,
            },
            day_length: 1440.0,
            collection_days: 10,
            evaluation_days: 30,
            forecast_bin_width: 5.0,
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("generation config is always representable as TOML")
    }

    pub fn from_toml(text: &str) -> Result<Self, ScenarioError> {
        toml::from_str(text).map_err(|e| ScenarioError::Parse(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, ScenarioError> {
        let text = std::fs::read_to_string(path).map_err(|source| ScenarioError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml(&text)
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        if self.station_count == 0 {
            return Err(invalid("station_count", "must be at least 1"));
        }
        if self.corridor_count == 0 && self.truck_count > 0 {
            return Err(invalid(
                "corridor_count",
                "must be at least 1 when trucks exist",
            ));
        }
        let (lo, hi) = self.stops_per_route;
        if lo > hi {
            return Err(invalid(
                "stops_per_route",
                format!("empty range [{lo}, {hi}]"),
            ));
        }
        if lo > self.station_count {
            return Err(invalid(
                "stops_per_route",
                format!(
                    "needs {lo} distinct stations but only {} exist",
                    self.station_count
                ),
            ));
        }
        self.origin_travel.check("origin_travel", true)?;
        self.leg_travel.check("leg_travel", true)?;
        if self.origin_travel.min <= 0.0 || self.leg_travel.min <= 0.0 {
            return Err(invalid("leg_travel", "travel times must be positive"));
        }
        self.detour.check("detour", true)?;
        self.departure_window.check("departure_window", true)?;
        self.deadline_slack.check("deadline_slack", false)?;
        self.truck
            .initial_battery
            .check("truck.initial_battery", true)?;
        if self.truck.initial_battery.max > 1.0 {
            return Err(invalid(
                "truck.initial_battery",
                "fractions must not exceed 1",
            ));
        }
        if !self.flow_weights.is_empty() {
            if self.flow_weights.len() != self.corridor_count as usize {
                return Err(invalid(
                    "flow_weights",
                    format!(
                        "{} weights for {} corridors",
                        self.flow_weights.len(),
                        self.corridor_count
                    ),
                ));
            }
            if self
                .flow_weights
                .iter()
                .any(|w| !(*w >= 0.0 && w.is_finite()))
                || self.flow_weights.iter().sum::<f64>() <= 0.0
            {
                return Err(invalid(
                    "flow_weights",
                    "weights must be nonnegative with a positive sum",
                ));
            }
        }
        if !(self.ports_per_truck >= 0.0 && self.ports_per_truck.is_finite()) {
            return Err(invalid("ports_per_truck", "must be nonnegative"));
        }
        for (field, v) in [
            ("uncertainty", self.uncertainty),
            ("feasibility_uncertainty", self.feasibility_uncertainty),
        ] {
            if !in_unit_interval(v) {
                return Err(invalid(field, format!("must lie in [0,1), got {v}")));
            }
        }
        let t = &self.truck;
        if !(t.battery_full > 0.0) {
            return Err(invalid("truck.battery_full", "must be positive"));
        }
        if !(t.safety_fraction > 0.0 && t.safety_fraction < 1.0) {
            return Err(invalid("truck.safety_fraction", "must lie in (0,1)"));
        }
        if !(t.consumption_rate > 0.0) {
            return Err(invalid("truck.consumption_rate", "must be positive"));
        }
        if !(t.max_charge_power > 0.0) {
            return Err(invalid("truck.max_charge_power", "must be positive"));
        }
        if t.labor_rate < 0.0 || t.deadline_penalty_rate < 0.0 {
            return Err(invalid(
                "truck.labor_rate",
                "cost rates must be nonnegative",
            ));
        }
        if !(self.station.charge_power > 0.0) {
            return Err(invalid("station.charge_power", "must be positive"));
        }
        if self.station.electricity_price < 0.0 {
            return Err(invalid("station.electricity_price", "must be nonnegative"));
        }
        if !(self.day_length > 0.0) {
            return Err(invalid("day_length", "must be positive"));
        }
        let bins = self.day_length / self.forecast_bin_width;
        if !(self.forecast_bin_width > 0.0 && (bins - bins.round()).abs() < 1e-9) {
            return Err(invalid("forecast_bin_width", "must divide day_length"));
        }
        let reach = self.usable_minutes() - self.detour.max;
        if reach <= self.detour.max {
            return Err(invalid(
                "detour",
                "detours alone exhaust the usable battery",
            ));
        }
        Ok(())
    }

    /// Driving minutes covered by the usable battery.
    fn usable_minutes(&self) -> f64 {
        self.truck.battery_full * (1.0 - self.truck.safety_fraction) / self.truck.consumption_rate
    }
}

struct Corridor {
    origin_travel: f64,
    stops: Vec<(StationId, f64, f64)>,
}

/// Builds a scenario as a pure function of `(config, seed)`.
pub fn generate_scenario(config: &GenerationConfig, seed: u64) -> Result<Scenario, ScenarioError> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let margin = 1.0 + config.uncertainty.max(config.feasibility_uncertainty);
    let usable_min = config.usable_minutes();

    let corridors: Vec<Corridor> = (0..config.corridor_count)
        .map(|_| {
            let (lo, hi) = config.stops_per_route;
            let hi = hi.min(config.station_count);
            let n = rng.gen_range(lo..=hi) as usize;
            let mut picked = sample(&mut rng, config.station_count as usize, n).into_vec();
            picked.sort_unstable();
            if rng.next_u32() & 1 == 1 {
                picked.reverse();
            }
            let detours: Vec<f64> = picked
                .iter()
                .map(|_| config.detour.draw(&mut rng))
                .collect();
            let first_cap = (usable_min - detours.first().copied().unwrap_or(0.0)) / margin;
            let origin_travel = config.origin_travel.draw(&mut rng).min(first_cap);
            let stops = picked
                .iter()
                .enumerate()
                .map(|(i, &s)| {
                    let next = detours.get(i + 1).copied().unwrap_or(0.0);
                    let cap = (usable_min - detours[i] - next) / margin;
                    let travel = config.leg_travel.draw(&mut rng).min(cap);
                    (StationId(s as u32), detours[i], travel)
                })
                .collect();
            Corridor {
                origin_travel,
                stops,
            }
        })
        .collect();

    let picker = if config.flow_weights.is_empty() {
        None
    } else {
        Some(
            WeightedIndex::new(&config.flow_weights)
                .map_err(|e| invalid("flow_weights", e.to_string()))?,
        )
    };

    let tt = &config.truck;
    let safety = tt.battery_full * tt.safety_fraction;
    let leg = |travel: f64| Leg {
        travel,
        travel_uncertainty: config.uncertainty,
        energy_uncertainty: config.uncertainty,
    };
    let mut trucks = Vec::with_capacity(config.truck_count as usize);
    for i in 0..config.truck_count {
        let c = match &picker {
            Some(w) => w.sample(&mut rng),
            None => rng.gen_range(0..corridors.len()),
        };
        let corridor = &corridors[c];
        let route = RouteSpec {
            origin_leg: leg(corridor.origin_travel),
            stops: corridor
                .stops
                .iter()
                .map(|&(station, detour, travel)| RouteStop {
                    station,
                    detour,
                    leg: leg(travel),
                })
                .collect(),
        };
        let first_detour = route.stops.first().map_or(0.0, |s| s.detour);
        let needed = (safety
            + tt.consumption_rate * (corridor.origin_travel * margin + first_detour))
            .min(tt.battery_full);
        let frac = tt.initial_battery.draw(&mut rng);
        let battery_initial = needed + frac * (tt.battery_full - needed);
        let departure = config.departure_window.draw(&mut rng);
        let slack = config.deadline_slack.draw(&mut rng);
        let deadline = departure + route.nominal_duration() + slack.max(1.0);
        trucks.push(TruckRoute {
            truck: TruckSpec {
                id: TruckId(i),
                battery_full: tt.battery_full,
                battery_initial,
                safety_margin: safety,
                consumption_rate: tt.consumption_rate,
                max_charge_power: tt.max_charge_power,
                labor_rate: tt.labor_rate,
                deadline_penalty_rate: tt.deadline_penalty_rate,
                departure_time: departure,
                deadline,
            },
            route,
        });
    }

    let mut usage = vec![0u32; config.station_count as usize];
    for tr in &trucks {
        for s in &tr.route.stops {
            usage[s.station.0 as usize] += 1;
        }
    }
    let stations = usage
        .iter()
        .enumerate()
        .map(|(i, &n)| StationSpec {
            id: StationId(i as u32),
            port_count: ports_for(config.ports_per_truck, n),
            charge_power: config.station.charge_power,
            electricity_price: config.station.electricity_price,
        })
        .collect();

    Ok(Scenario {
        schema_version: SCENARIO_SCHEMA_VERSION,
        seed,
        day_length: config.day_length,
        collection_days: config.collection_days,
        evaluation_days: config.evaluation_days,
        forecast_bin_width: config.forecast_bin_width,
        stations,
        trucks,
    })
}

/// `max(1, ceil(ports_per_truck * routes))`.
pub fn ports_for(ports_per_truck: f64, routes: u32) -> u32 {
    let raw = (ports_per_truck * f64::from(routes) - 1e-9).ceil();
    (raw.max(1.0)) as u32
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn minimal_config() -> GenerationConfig {
        GenerationConfig {
            station_count: 1,
            truck_count: 1,
            corridor_count: 1,
            stops_per_route: (1, 1),
            ..GenerationConfig::paper_sv()
        }
    }

    #[test]
    fn generation_config_round_trips_through_toml() {
        let cfg = GenerationConfig::paper_sv();
        assert_eq!(GenerationConfig::from_toml(&cfg.to_toml()).unwrap(), cfg);
        assert!(GenerationConfig::from_toml("station_count = 1").is_err());
    }

    #[test]
    fn minimal_instance_has_one_stop_and_one_port() {
        let s = generate_scenario(&minimal_config(), 7).unwrap();
        assert_eq!(s.stations.len(), 1);
        assert_eq!(s.stations[0].port_count, 1);
        assert_eq!(s.trucks.len(), 1);
        assert_eq!(s.trucks[0].route.len(), 1);
        assert!(
            validate_scenario(&s).is_empty(),
            "{:?}",
            validate_scenario(&s)
        );
    }

    #[test]
    fn generation_is_deterministic() {
        let cfg = GenerationConfig::paper_sv();
        let a = generate_scenario(&cfg, 11).unwrap().to_toml();
        let b = generate_scenario(&cfg, 11).unwrap().to_toml();
        assert_eq!(a, b);
        let c = generate_scenario(&cfg, 12).unwrap().to_toml();
        assert_ne!(a, c);
    }

    #[test]
    fn paper_template_parameters() {
        let cfg = GenerationConfig::paper_sv();
        let s = generate_scenario(&cfg, 1).unwrap();
        let t = &s.trucks[0].truck;
        assert_eq!(t.battery_full, 624.0);
        assert_eq!(t.safety_margin, 156.0);
        assert_eq!(t.battery_full - t.safety_margin, 468.0);
        assert_eq!(t.consumption_rate, 1.83);
        assert!((t.max_charge_power - 5.833).abs() < 1e-3);
        assert_eq!(t.labor_rate, 2.0);
        assert_eq!(t.deadline_penalty_rate, 10.0);
        let st = &s.stations[0];
        assert_eq!(st.charge_power, 5.0);
        assert_eq!(st.electricity_price, 0.36);
        assert!((st.cost_per_minute(t.max_charge_power) - 1.8).abs() < 1e-12);
        for tr in &s.trucks {
            let d = tr.truck.departure_time;
            assert!((420.0..=600.0).contains(&d), "departure {d}");
        }
        assert!(
            validate_scenario(&s).is_empty(),
            "{:?}",
            validate_scenario(&s)
        );
    }

    #[test]
    fn invalid_ranges_name_the_field() {
        let mut cfg = GenerationConfig::paper_sv();
        cfg.leg_travel = Span::new(50.0, 10.0);
        match generate_scenario(&cfg, 0) {
            Err(ScenarioError::InvalidField { field, .. }) => assert_eq!(field, "leg_travel"),
            other => panic!("unexpected {other:?}"),
        }
        let mut cfg = GenerationConfig::paper_sv();
        cfg.detour = Span::new(-1.0, 3.0);
        match generate_scenario(&cfg, 0) {
            Err(ScenarioError::InvalidField { field, .. }) => assert_eq!(field, "detour"),
            other => panic!("unexpected {other:?}"),
        }
        let mut cfg = GenerationConfig::paper_sv();
        cfg.flow_weights = vec![1.0];
        assert!(matches!(
            generate_scenario(&cfg, 0),
            Err(ScenarioError::InvalidField {
                field: "flow_weights",
                ..
            })
        ));
    }

    #[test]
    fn flow_weights_steer_corridor_choice() {
        let mut cfg = GenerationConfig::paper_sv();
        cfg.corridor_count = 2;
        cfg.flow_weights = vec![1.0, 0.0];
        let s = generate_scenario(&cfg, 3).unwrap();
        let first = &s.trucks[0].route;
        assert!(s.trucks.iter().all(|t| t.route == *first));
    }

    #[test]
    fn zero_bounds_give_zero_noise() {
        let s = generate_scenario(&minimal_config(), 5)
            .unwrap()
            .with_uncertainty(0.0);
        let d = sample_disturbances(&s, 0, TruckId(0)).unwrap();
        assert!(d.legs.iter().all(|n| n.travel == 0.0 && n.energy == 0.0));
    }

    #[test]
    fn travel_noise_within_five_percent_of_hundred() {
        let mut s = generate_scenario(&minimal_config(), 5)
            .unwrap()
            .with_uncertainty(0.05);
        s.trucks[0].route.origin_leg.travel = 100.0;
        for day in 0..s.total_days() {
            let d = sample_disturbances(&s, day, TruckId(0)).unwrap();
            assert!((-5.0..=5.0).contains(&d.legs[0].travel));
        }
    }

    #[test]
    fn same_key_same_realization() {
        let s = generate_scenario(&GenerationConfig::paper_sv(), 9).unwrap();
        let a = sample_disturbances(&s, 3, TruckId(4)).unwrap();
        let b = sample_disturbances(&s, 3, TruckId(4)).unwrap();
        assert_eq!(a, b);
        let c = sample_disturbances(&s, 4, TruckId(4)).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn disturbance_preconditions() {
        let s = generate_scenario(&minimal_config(), 5).unwrap();
        assert!(matches!(
            sample_disturbances(&s, 0, TruckId(99)),
            Err(ScenarioError::UnknownTruck(_))
        ));
        assert!(matches!(
            sample_disturbances(&s, 40, TruckId(0)),
            Err(ScenarioError::DayOutOfRange { .. })
        ));
    }

    #[test]
    fn disturbances_stay_inside_bounds_over_many_draws() {
        let mut s = generate_scenario(&GenerationConfig::paper_sv(), 2).unwrap();
        s.collection_days = 500;
        s.evaluation_days = 0;
        let mut draws = 0usize;
        for day in 0..s.total_days() {
            for tr in &s.trucks {
                let d = sample_disturbances(&s, day, tr.truck.id).unwrap();
                for (leg, n) in tr.route.legs().zip(&d.legs) {
                    let tb = leg.travel_noise_bound();
                    let eb = leg.energy_noise_bound(tr.truck.consumption_rate);
                    assert!(n.travel >= -tb && n.travel <= tb);
                    assert!(n.energy >= -eb && n.energy <= eb);
                    draws += 2;
                }
            }
        }
        assert!(draws >= 100_000, "only {draws} draws");
    }

    #[test]
    fn well_formed_scenario_has_no_violations() {
        let s = generate_scenario(&GenerationConfig::paper_sv(), 21).unwrap();
        assert_eq!(validate_scenario(&s), vec![]);
    }

    #[test]
    fn safety_margin_above_battery_full_is_flagged_once() {
        let mut s = generate_scenario(&minimal_config(), 1).unwrap();
        let t = &mut s.trucks[0].truck;
        t.safety_margin = t.battery_full + 1.0;
        t.battery_initial = t.battery_full;
        let v: Vec<_> = validate_scenario(&s)
            .into_iter()
            .filter(|v| v.field == "safety_margin")
            .collect();
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].entity, "truck T0");
    }

    #[test]
    fn dangling_station_reference_names_segment() {
        let mut s = generate_scenario(&minimal_config(), 1).unwrap();
        s.trucks[0].route.stops[0].station = StationId(42);
        let v = validate_scenario(&s);
        assert_eq!(v.len(), 1, "{v:?}");
        assert_eq!(v[0].entity, "truck T0 route segment 1");
        assert_eq!(v[0].field, "station");
    }

    #[test]
    fn toml_has_leading_version_and_rejects_unknown_versions() {
        let s = generate_scenario(&minimal_config(), 1).unwrap();
        let text = s.to_toml();
        assert!(text.starts_with("schema_version = 1"), "{text}");
        let bumped = text.replacen("schema_version = 1", "schema_version = 9", 1);
        assert!(matches!(
            Scenario::from_toml(&bumped),
            Err(ScenarioError::SchemaVersion(9))
        ));
    }

    #[test]
    fn port_counts_round_up_with_minimum_one() {
        assert_eq!(ports_for(0.05, 0), 1);
        assert_eq!(ports_for(0.05, 20), 1);
        assert_eq!(ports_for(0.05, 21), 2);
        assert_eq!(ports_for(0.5, 3), 2);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn toml_round_trip(seed in any::<u64>(), trucks in 1u32..12) {
            let cfg = GenerationConfig { truck_count: trucks, ..GenerationConfig::paper_sv() };
            let s = generate_scenario(&cfg, seed).unwrap();
            let back = Scenario::from_toml(&s.to_toml()).unwrap();
            prop_assert_eq!(s, back);
        }

        #[test]
        fn port_count_monotone_in_routes(rate in 0.0f64..2.0, n in 0u32..200) {
            prop_assert!(ports_for(rate, n + 1) >= ports_for(rate, n));
        }
    }
}
