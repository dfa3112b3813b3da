use std::fmt;

use crate::planner::ChargingPlan;
use crate::scenario::{StationId, TruckId};
use crate::station::{ForecastModel, Phase};

use super::Strategy;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EventKind {
    DepartOrigin,
    ReachRamp,
    ArriveStation,
    StartCharge,
    FinishCharge,
    ReturnToRamp,
    ReachDestination,
}

impl EventKind {
    pub fn name(self) -> &'static str {
        match self {
            EventKind::DepartOrigin => "depart_origin",
            EventKind::ReachRamp => "reach_ramp",
            EventKind::ArriveStation => "arrive_station",
            EventKind::StartCharge => "start_charge",
            EventKind::FinishCharge => "finish_charge",
            EventKind::ReturnToRamp => "return_to_ramp",
            EventKind::ReachDestination => "reach_destination",
        }
    }
}

impl fmt::Display for EventKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// One processed event.
#[derive(Debug, Clone, PartialEq)]
pub struct EventRecord {
    pub time: f64,
    pub day: u32,
    pub truck: TruckId,
    pub kind: EventKind,
    pub stop: Option<usize>,
    pub station: Option<StationId>,
    pub port: Option<usize>,
    /// Wait at the station (min), on station arrivals.
    pub wait: Option<f64>,
    /// Battery after the event (kWh).
    pub battery: f64,
}

/// One completed trip.
#[derive(Debug, Clone, PartialEq)]
pub struct TripRecord {
    pub truck: TruckId,
    pub day: u32,
    pub departure: f64,
    pub arrival: f64,
    pub deadline: f64,
    pub total_wait: f64,
    pub stops: usize,
    pub charge_minutes: f64,
    pub energy_charged: f64,
    pub labor_cost: f64,
    pub electricity_cost: f64,
    pub penalty_cost: f64,
    /// Wait the nearby station reported when the truck reached each ramp.
    pub ramp_waits: Vec<Option<f64>>,
    /// Energy reserve breaches during the trip.
    pub energy_violations: usize,
    /// Trips after the collection phase count towards evaluation metrics.
    pub evaluation: bool,
}

impl TripRecord {
    pub fn delay(&self) -> f64 {
        (self.arrival - self.deadline).max(0.0)
    }

    pub fn total_cost(&self) -> f64 {
        self.labor_cost + self.electricity_cost + self.penalty_cost
    }
}

/// One charging session.
#[derive(Debug, Clone, PartialEq)]
pub struct ChargeRecord {
    pub truck: TruckId,
    pub day: u32,
    pub station: StationId,
    pub stop: usize,
    pub port: usize,
    pub arrival: f64,
    pub wait: f64,
    pub duration: f64,
    pub evaluation: bool,
}

/// Everything a truck computed when it replanned at a ramp.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplanRecord {
    pub truck: TruckId,
    pub day: u32,
    pub stop: usize,
    pub time: f64,
    pub battery: f64,
    pub deadline: f64,
    pub phase: Phase,
    pub nearby_wait: f64,
    /// Earliest ramp arrivals, indexed by route stop.
    pub earliest: Vec<Option<f64>>,
    /// First-round responses (maximum waits), indexed by route stop.
    pub max_waits: Vec<Option<f64>>,
    /// Latest ramp arrivals, indexed by route stop.
    pub latest: Vec<Option<f64>>,
    /// Second-round responses (window averages), indexed by route stop.
    pub window_waits: Vec<Option<f64>>,
    pub plan: ChargingPlan,
}

/// Invariant breaches found while running. All zero on a healthy run,
/// except energy reserve breaches under open-loop plans.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct InvariantCounts {
    pub energy: usize,
    pub capacity: usize,
    pub ports: usize,
    pub causality: usize,
    pub cost: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunResult {
    pub strategy: Strategy,
    pub days: u32,
    pub collection_days: u32,
    pub trips: Vec<TripRecord>,
    pub charges: Vec<ChargeRecord>,
    pub replans: Vec<ReplanRecord>,
    pub events: Vec<EventRecord>,
    /// Station forecasts at the end of the run, in scenario order.
    pub forecasts: Vec<(StationId, ForecastModel)>,
    pub invariants: InvariantCounts,
}

impl RunResult {
    pub fn evaluation_trips(&self) -> impl Iterator<Item = &TripRecord> {
        self.trips.iter().filter(|t| t.evaluation)
    }

    /// Mean total waiting time per evaluation trip (min).
    pub fn mean_wait(&self) -> f64 {
        mean(self.evaluation_trips().map(|t| t.total_wait))
    }

    /// Mean operational cost per evaluation trip (€).
    pub fn mean_cost(&self) -> f64 {
        mean(self.evaluation_trips().map(|t| t.total_cost()))
    }

    pub fn mean_delay(&self) -> f64 {
        mean(self.evaluation_trips().map(|t| t.delay()))
    }
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}
