//! Discrete-event simulation of a truck fleet sharing charging stations.
//!
//! Each truck repeats its trip every simulated day. Stations start in the
//! collection phase and switch to answering distant trucks from their
//! forecast once the collection days are over.

mod records;
mod sim;

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::planner::PlannerError;
use crate::scenario::{validate_scenario, Scenario, ScenarioError, Violation};
use crate::station::StationError;

pub use records::{
    ChargeRecord, EventKind, EventRecord, InvariantCounts, ReplanRecord, RunResult, TripRecord,
};

/// How trucks choose where and how long to charge.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Strategy {
    /// Replans at every ramp with the nearby station's exact wait and
    /// forecast waits from distant stations.
    Proposed,
    /// Replans at every ramp with the nearby station's exact wait and no
    /// waiting assumed elsewhere.
    Dynamic,
    /// Plans once before departure and follows the plan.
    Offline,
}

impl Strategy {
    pub const ALL: [Strategy; 3] = [Strategy::Proposed, Strategy::Dynamic, Strategy::Offline];

    pub fn name(self) -> &'static str {
        match self {
            Strategy::Proposed => "proposed",
            Strategy::Dynamic => "dynamic",
            Strategy::Offline => "offline",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Strategy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Strategy::ALL
            .into_iter()
            .find(|st| st.name() == s)
            .ok_or_else(|| {
                format!("unknown strategy `{s}` (expected proposed, dynamic or offline)")
            })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunOptions {
    pub strategy: Strategy,
    /// Keep updating forecasts after the collection phase.
    pub keep_learning: bool,
    /// Keep the full event log in the result.
    pub record_events: bool,
}

impl RunOptions {
    pub fn new(strategy: Strategy) -> Self {
        Self {
            strategy,
            keep_learning: false,
            record_events: false,
        }
    }
}

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("scenario is invalid: {}", format_violations(.0))]
    Invalid(Vec<Violation>),
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error("truck {truck} found no feasible charging plan at stop {stop} on day {day}")]
    Infeasible {
        truck: crate::scenario::TruckId,
        day: u32,
        stop: usize,
    },
    #[error(transparent)]
    Planner(PlannerError),
    #[error(transparent)]
    Station(#[from] StationError),
}

impl EngineError {
    pub(crate) fn planning(e: PlannerError, day: u32) -> Self {
        match e {
            PlannerError::NoFeasiblePlan { truck, stop } => {
                EngineError::Infeasible { truck, day, stop }
            }
            other => EngineError::Planner(other),
        }
    }
}

fn format_violations(v: &[Violation]) -> String {
    v.iter()
        .map(|x| format!("{} {}: {}", x.entity, x.field, x.message))
        .collect::<Vec<_>>()
        .join("; ")
}

/// Simulates every collection and evaluation day of `scenario`.
pub fn run_simulation(scenario: &Scenario, options: &RunOptions) -> Result<RunResult, EngineError> {
    let violations = validate_scenario(scenario);
    if !violations.is_empty() {
        return Err(EngineError::Invalid(violations));
    }
    sim::Simulation::new(scenario, *options)?.run()
}

/// Collection then evaluation with default options for `strategy`.
pub fn run_two_phase(scenario: &Scenario, strategy: Strategy) -> Result<RunResult, EngineError> {
    run_simulation(scenario, &RunOptions::new(strategy))
}

/// Runs each strategy on the same scenario and disturbances.
pub fn compare_strategies(
    scenario: &Scenario,
    strategies: &[Strategy],
) -> Result<Vec<RunResult>, EngineError> {
    strategies
        .iter()
        .map(|&s| run_two_phase(scenario, s))
        .collect()
}
