//! Truck-side planning: arrival windows at distant stations and the
//! charging plan chosen at each ramp.

use thiserror::Error;

use crate::scenario::{Leg, RouteSpec, Scenario, StationSpec, TruckId, TruckRoute, TruckSpec};
use crate::solver::{solve_mixed, MixedError, MixedPlanProblem, MixedStatus, PlanMode, StopData};

#[derive(Debug, Error, PartialEq)]
pub enum PlannerError {
    #[error("truck {0} is not in the scenario")]
    UnknownTruck(TruckId),
    #[error("station {station} on the route of truck {truck} is not in the scenario")]
    UnknownStation { truck: TruckId, station: String },
    #[error("truck {truck} has no feasible charging plan at stop {stop}")]
    NoFeasiblePlan { truck: TruckId, stop: usize },
    #[error("stop {stop} is past the end of a {len}-station route")]
    StopOutOfRange { stop: usize, len: usize },
    #[error(transparent)]
    Solver(#[from] MixedError),
}

/// A truck together with the per-station quantities its plans need.
#[derive(Debug, Clone, PartialEq)]
pub struct TripModel {
    pub truck: TruckSpec,
    pub route: RouteSpec,
    /// Effective charge rate at each stop (kWh/min).
    pub rates: Vec<f64>,
    /// Electricity cost per charging minute at each stop (€/min).
    pub energy_costs: Vec<f64>,
}

impl TripModel {
    pub fn new(route: &TruckRoute, stations: &[StationSpec]) -> Result<Self, PlannerError> {
        let truck = route.truck.clone();
        let mut rates = Vec::with_capacity(route.route.len());
        let mut energy_costs = Vec::with_capacity(route.route.len());
        for stop in &route.route.stops {
            let st = stations
                .iter()
                .find(|s| s.id == stop.station)
                .ok_or_else(|| PlannerError::UnknownStation {
                    truck: truck.id,
                    station: stop.station.to_string(),
                })?;
            rates.push(st.effective_rate(truck.max_charge_power));
            energy_costs.push(st.cost_per_minute(truck.max_charge_power));
        }
        Ok(Self {
            truck,
            route: route.route.clone(),
            rates,
            energy_costs,
        })
    }

    pub fn from_scenario(scenario: &Scenario, truck: TruckId) -> Result<Self, PlannerError> {
        let route = scenario
            .truck(truck)
            .ok_or(PlannerError::UnknownTruck(truck))?;
        Self::new(route, &scenario.stations)
    }

    /// Number of stations on the route.
    pub fn len(&self) -> usize {
        self.route.len()
    }

    pub fn is_empty(&self) -> bool {
        self.route.is_empty()
    }

    pub fn detour(&self, stop: usize) -> f64 {
        self.route.stops[stop].detour
    }

    /// Leg leaving the ramp of `stop`.
    pub fn leg_after(&self, stop: usize) -> &Leg {
        &self.route.stops[stop].leg
    }

    fn energy_noise_after(&self, stop: usize) -> f64 {
        self.leg_after(stop)
            .energy_noise_bound(self.truck.consumption_rate)
    }

    /// Same trip with every noise bound set to zero.
    pub fn nominal(&self) -> Self {
        let mut m = self.clone();
        let zero = |l: &mut Leg| {
            l.travel_uncertainty = 0.0;
            l.energy_uncertainty = 0.0;
        };
        zero(&mut m.route.origin_leg);
        m.route.stops.iter_mut().for_each(|s| zero(&mut s.leg));
        m
    }
}

/// Where a truck is when it plans: on the ramp of `stop` (0-based index
/// into the route's stations).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TruckState {
    pub stop: usize,
    /// Ramp arrival time (min).
    pub time: f64,
    /// Battery on reaching the ramp (kWh).
    pub battery: f64,
    /// Deadline of the current trip (min).
    pub deadline: f64,
}

/// Waiting times used by a plan, indexed by route stop. Entries at or
/// before the current stop other than the nearby one are ignored; `None`
/// marks a station that cannot be reached and must not be used.
#[derive(Debug, Clone, PartialEq)]
pub struct WaitingEstimates {
    pub nearby: f64,
    pub distant: Vec<Option<f64>>,
}

impl WaitingEstimates {
    /// Nearby wait only; every distant station is reachable at no wait.
    pub fn nearby_only(len: usize, nearby: f64) -> Self {
        Self {
            nearby,
            distant: vec![Some(0.0); len],
        }
    }
}

/// Decision for the remaining stations, starting at `first_stop`.
#[derive(Debug, Clone, PartialEq)]
pub struct ChargingPlan {
    pub first_stop: usize,
    pub charge: Vec<bool>,
    /// Charging minutes per remaining stop.
    pub durations: Vec<f64>,
    /// Waiting estimates the plan was optimized against.
    pub waits: Vec<f64>,
    /// Planned operational cost (€).
    pub objective: f64,
}

impl ChargingPlan {
    pub fn charges_at(&self, stop: usize) -> bool {
        stop >= self.first_stop && self.charge[stop - self.first_stop]
    }

    pub fn duration_at(&self, stop: usize) -> f64 {
        if self.charges_at(stop) {
            self.durations[stop - self.first_stop]
        } else {
            0.0
        }
    }
}

fn stop_data(model: &TripModel, j: usize, wait: f64, allowed: bool) -> StopData {
    StopData {
        charge_rate: model.rates[j],
        detour: model.detour(j),
        travel: model.leg_after(j).travel,
        wait,
        energy_cost: model.energy_costs[j],
        energy_noise: model.energy_noise_after(j),
        allowed,
    }
}

fn check_stop(model: &TripModel, state: &TruckState) -> Result<(), PlannerError> {
    if state.stop >= model.len() {
        return Err(PlannerError::StopOutOfRange {
            stop: state.stop,
            len: model.len(),
        });
    }
    Ok(())
}

/// Minimum-detour-and-charging program from the current ramp to the ramp
/// of `target`, with energy noise at its favorable extreme.
pub fn earliest_problem(model: &TripModel, state: &TruckState, target: usize) -> MixedPlanProblem {
    debug_assert!(target > state.stop && target < model.len());
    let t = &model.truck;
    MixedPlanProblem {
        mode: PlanMode::Earliest,
        stops: (state.stop..target)
            .map(|j| stop_data(model, j, 0.0, true))
            .collect(),
        start_energy: state.battery,
        start_time: state.time,
        battery_full: t.battery_full,
        safety_margin: t.safety_margin,
        consumption_rate: t.consumption_rate,
        labor_rate: t.labor_rate,
        penalty_rate: t.deadline_penalty_rate,
        deadline: state.deadline,
        final_detour: model.detour(target),
    }
}

/// Earliest ramp arrival at every distant stop, indexed by route stop;
/// `None` at and before the current stop and for unreachable stops.
pub fn earliest_arrivals(
    model: &TripModel,
    state: &TruckState,
) -> Result<Vec<Option<f64>>, PlannerError> {
    check_stop(model, state)?;
    let mut out = vec![None; model.len()];
    for target in state.stop + 1..model.len() {
        let problem = earliest_problem(model, state, target);
        let sol = solve_mixed(&problem)?;
        if sol.status == MixedStatus::Infeasible {
            // Every later target needs this prefix too.
            break;
        }
        let mut time = state.time;
        for (i, j) in (state.stop..target).enumerate() {
            if sol.charge[i] {
                time += 2.0 * model.detour(j) + sol.durations[i];
            }
            let leg = model.leg_after(j);
            time += leg.travel - leg.travel_noise_bound();
        }
        out[target] = Some(time);
    }
    Ok(out)
}

/// Latest ramp arrival at every distant stop when the truck charges at
/// every station on the way, each time waiting `max_waits` (the nearby
/// one waits `nearby_wait`), charging back what the previous leg used and
/// meeting the unfavorable noise extremes. Indexed like
/// [`earliest_arrivals`]; `None` entries in `max_waits` count as 0.
pub fn latest_arrivals(
    model: &TripModel,
    state: &TruckState,
    nearby_wait: f64,
    max_waits: &[Option<f64>],
) -> Result<Vec<Option<f64>>, PlannerError> {
    check_stop(model, state)?;
    let t = &model.truck;
    let p = t.consumption_rate;
    let k = state.stop;
    let mut out = vec![None; model.len()];
    let mut time = state.time;
    for h in k..model.len() - 1 {
        let recharge = if h == k {
            t.battery_full - (state.battery - p * model.detour(k))
        } else {
            let prev = model.leg_after(h - 1);
            p * (model.detour(h - 1) + prev.travel + model.detour(h))
                + model.energy_noise_after(h - 1)
        };
        let wait = if h == k {
            nearby_wait
        } else {
            max_waits.get(h).copied().flatten().unwrap_or(0.0)
        };
        let leg = model.leg_after(h);
        time += 2.0 * model.detour(h)
            + recharge / model.rates[h]
            + wait
            + leg.travel
            + leg.travel_noise_bound();
        out[h + 1] = Some(time);
    }
    Ok(out)
}

/// Charging-plan program at the current ramp.
pub fn plan_problem(
    model: &TripModel,
    state: &TruckState,
    estimates: &WaitingEstimates,
) -> MixedPlanProblem {
    let t = &model.truck;
    let k = state.stop;
    let stops = (k..model.len())
        .map(|j| {
            if j == k {
                stop_data(model, j, estimates.nearby, true)
            } else {
                let est = estimates.distant.get(j).copied().flatten();
                stop_data(model, j, est.unwrap_or(0.0), est.is_some())
            }
        })
        .collect();
    MixedPlanProblem {
        mode: PlanMode::Plan,
        stops,
        start_energy: state.battery,
        start_time: state.time,
        battery_full: t.battery_full,
        safety_margin: t.safety_margin,
        consumption_rate: t.consumption_rate,
        labor_rate: t.labor_rate,
        penalty_rate: t.deadline_penalty_rate,
        deadline: state.deadline,
        final_detour: 0.0,
    }
}

/// Cost-minimizing charging plan for the rest of the trip.
pub fn optimize_plan(
    model: &TripModel,
    state: &TruckState,
    estimates: &WaitingEstimates,
) -> Result<ChargingPlan, PlannerError> {
    check_stop(model, state)?;
    let problem = plan_problem(model, state, estimates);
    let sol = solve_mixed(&problem)?;
    if sol.status == MixedStatus::Infeasible {
        return Err(PlannerError::NoFeasiblePlan {
            truck: model.truck.id,
            stop: state.stop,
        });
    }
    Ok(ChargingPlan {
        first_stop: state.stop,
        charge: sol.charge,
        durations: sol.durations,
        waits: problem.stops.iter().map(|s| s.wait).collect(),
        objective: sol.objective,
    })
}

/// Operational cost of `plan` when the waits turn out to be
/// `actual_waits` (one per remaining stop), with nominal travel times.
pub fn evaluate_cost(
    model: &TripModel,
    state: &TruckState,
    plan: &ChargingPlan,
    actual_waits: &[f64],
) -> f64 {
    let t = &model.truck;
    let mut time = state.time;
    let mut cost = 0.0;
    for (i, j) in (plan.first_stop..model.len()).enumerate() {
        if plan.charge[i] {
            let dur = plan.durations[i];
            let stop_time = 2.0 * model.detour(j) + dur + actual_waits[i];
            cost += t.labor_rate * stop_time + model.energy_costs[j] * dur;
            time += stop_time;
        }
        time += model.leg_after(j).travel;
    }
    cost + (t.deadline_penalty_rate * (time - state.deadline)).max(0.0)
}

/// Worst-case cost increase from waits exceeding their estimates by
/// `wait_excess`: `(ξ + γ) Σ Δw`.
pub fn cost_bound(labor_rate: f64, penalty_rate: f64, wait_excess: &[f64]) -> f64 {
    (labor_rate + penalty_rate) * wait_excess.iter().sum::<f64>()
}

/// Plan fixed before departure from the predicted state at the first
/// ramp, with noise ignored and no waiting assumed anywhere.
pub fn open_loop_plan(
    model: &TripModel,
    departure: f64,
    deadline: f64,
) -> Result<ChargingPlan, PlannerError> {
    let nominal = model.nominal();
    let t = &model.truck;
    let origin = model.route.origin_leg.travel;
    let state = TruckState {
        stop: 0,
        time: departure + origin,
        battery: t.battery_initial - t.consumption_rate * origin,
        deadline,
    };
    optimize_plan(
        &nominal,
        &state,
        &WaitingEstimates::nearby_only(model.len(), 0.0),
    )
}
