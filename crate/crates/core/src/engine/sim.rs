use std::cmp::{Ordering, Reverse};
use std::collections::BinaryHeap;

use crate::planner::{
    earliest_arrivals, latest_arrivals, open_loop_plan, optimize_plan, ChargingPlan, TripModel,
    TruckState, WaitingEstimates,
};
use crate::scenario::{sample_disturbances, DisturbanceRealization, Scenario, StationId};
use crate::station::{
    Assignment, DistantQuery, ForecastModel, Phase, PortSchedule, WaitObservation,
};

use super::records::*;
use super::{EngineError, RunOptions, Strategy};

/// Tolerance on energy and capacity checks (kWh) and on cost audits (€).
const CHECK_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
enum Action {
    Depart,
    Ramp(usize),
    Arrive(usize),
    Start(usize),
    Finish(usize),
    Return(usize),
    Destination,
}

impl Action {
    fn kind(self) -> EventKind {
        match self {
            Action::Depart => EventKind::DepartOrigin,
            Action::Ramp(_) => EventKind::ReachRamp,
            Action::Arrive(_) => EventKind::ArriveStation,
            Action::Start(_) => EventKind::StartCharge,
            Action::Finish(_) => EventKind::FinishCharge,
            Action::Return(_) => EventKind::ReturnToRamp,
            Action::Destination => EventKind::ReachDestination,
        }
    }

    /// Port releases go first among simultaneous events.
    fn rank(self) -> u8 {
        match self {
            Action::Finish(_) => 0,
            _ => 1,
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Event {
    time: f64,
    rank: u8,
    truck: u32,
    seq: u64,
    trip: usize,
    action: Action,
}

impl Event {
    fn key(&self) -> (f64, u8, u32, u64) {
        (self.time, self.rank, self.truck, self.seq)
    }
}

impl PartialEq for Event {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Event {}

impl PartialOrd for Event {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Event {
    fn cmp(&self, other: &Self) -> Ordering {
        let (a, b) = (self.key(), other.key());
        a.0.total_cmp(&b.0)
            .then(a.1.cmp(&b.1))
            .then(a.2.cmp(&b.2))
            .then(a.3.cmp(&b.3))
    }
}

struct Session {
    station: usize,
    assignment: Assignment,
    duration: f64,
}

struct Trip {
    model: usize,
    day: u32,
    noise: DisturbanceRealization,
    departure: f64,
    deadline: f64,
    battery: f64,
    plan: Option<ChargingPlan>,
    session: Option<Session>,
    /// Actual travel time of every leg driven so far.
    driven: f64,
    record: TripRecord,
}

struct StationState {
    id: StationId,
    ports: usize,
    schedule: PortSchedule,
    forecast: ForecastModel,
    active: usize,
}

pub(super) struct Simulation {
    options: RunOptions,
    models: Vec<TripModel>,
    /// Route stop → station index, per model.
    stop_stations: Vec<Vec<usize>>,
    stations: Vec<StationState>,
    trips: Vec<Trip>,
    queue: BinaryHeap<Reverse<Event>>,
    seq: u64,
    now: f64,
    switch_time: f64,
    phase: Phase,
    result: RunResult,
}

impl Simulation {
    pub(super) fn new(scenario: &Scenario, options: RunOptions) -> Result<Self, EngineError> {
        let index = scenario.station_index();
        let mut models = Vec::with_capacity(scenario.trucks.len());
        let mut stop_stations = Vec::with_capacity(scenario.trucks.len());
        for tr in &scenario.trucks {
            models.push(TripModel::new(tr, &scenario.stations).map_err(EngineError::Planner)?);
            stop_stations.push(tr.route.stops.iter().map(|s| index[&s.station]).collect());
        }
        let stations = scenario
            .stations
            .iter()
            .map(|s| {
                let mut forecast =
                    ForecastModel::new(scenario.forecast_bin_width, scenario.day_length);
                forecast.set_keep_learning(options.keep_learning);
                StationState {
                    id: s.id,
                    ports: s.port_count as usize,
                    schedule: PortSchedule::new(s.port_count as usize),
                    forecast,
                    active: 0,
                }
            })
            .collect();
        let days = scenario.total_days();
        let mut sim = Self {
            options,
            models,
            stop_stations,
            stations,
            trips: Vec::new(),
            queue: BinaryHeap::new(),
            seq: 0,
            now: f64::NEG_INFINITY,
            switch_time: f64::from(scenario.collection_days) * scenario.day_length,
            phase: Phase::Collection,
            result: RunResult {
                strategy: options.strategy,
                days,
                collection_days: scenario.collection_days,
                trips: Vec::new(),
                charges: Vec::new(),
                replans: Vec::new(),
                events: Vec::new(),
                forecasts: Vec::new(),
                invariants: InvariantCounts::default(),
            },
        };
        for day in 0..days {
            for (m, tr) in scenario.trucks.iter().enumerate() {
                let departure = tr.truck.departure_on(day, scenario.day_length);
                let deadline = tr.truck.deadline_on(day, scenario.day_length);
                let trip = Trip {
                    model: m,
                    day,
                    noise: sample_disturbances(scenario, day, tr.truck.id)?,
                    departure,
                    deadline,
                    battery: tr.truck.battery_initial,
                    plan: None,
                    session: None,
                    driven: 0.0,
                    record: TripRecord {
                        truck: tr.truck.id,
                        day,
                        departure,
                        arrival: f64::NAN,
                        deadline,
                        total_wait: 0.0,
                        stops: 0,
                        charge_minutes: 0.0,
                        energy_charged: 0.0,
                        labor_cost: 0.0,
                        electricity_cost: 0.0,
                        penalty_cost: 0.0,
                        ramp_waits: vec![None; tr.route.len()],
                        energy_violations: 0,
                        evaluation: day >= scenario.collection_days,
                    },
                };
                sim.trips.push(trip);
                let id = sim.trips.len() - 1;
                sim.schedule(departure, id, Action::Depart);
            }
        }
        Ok(sim)
    }

    fn schedule(&mut self, time: f64, trip: usize, action: Action) {
        let truck = self.trips[trip].record.truck.0;
        self.seq += 1;
        self.queue.push(Reverse(Event {
            time,
            rank: action.rank(),
            truck,
            seq: self.seq,
            trip,
            action,
        }));
    }

    pub(super) fn run(mut self) -> Result<RunResult, EngineError> {
        while let Some(Reverse(event)) = self.queue.pop() {
            if event.time < self.now {
                self.result.invariants.causality += 1;
            }
            self.now = event.time;
            if self.phase == Phase::Collection && self.now >= self.switch_time {
                self.phase = Phase::Nominal;
                for s in &mut self.stations {
                    s.forecast.set_phase(Phase::Nominal);
                }
            }
            self.handle(event)?;
        }
        let mut trips: Vec<TripRecord> = self.trips.into_iter().map(|t| t.record).collect();
        trips.sort_by_key(|t| (t.day, t.truck));
        self.result.trips = trips;
        self.result.forecasts = self
            .stations
            .into_iter()
            .map(|s| (s.id, s.forecast))
            .collect();
        Ok(self.result)
    }

    fn log(&mut self, event: &Event, stop: Option<usize>, port: Option<usize>, wait: Option<f64>) {
        if !self.options.record_events {
            return;
        }
        let trip = &self.trips[event.trip];
        let station = stop.map(|k| self.stations[self.stop_stations[trip.model][k]].id);
        self.result.events.push(EventRecord {
            time: event.time,
            day: trip.day,
            truck: trip.record.truck,
            kind: event.action.kind(),
            stop,
            station,
            port,
            wait,
            battery: trip.battery,
        });
    }

    fn handle(&mut self, event: Event) -> Result<(), EngineError> {
        let id = event.trip;
        match event.action {
            Action::Depart => {
                self.log(&event, None, None, None);
                if self.options.strategy == Strategy::Offline {
                    let trip = &self.trips[id];
                    let model = &self.models[trip.model];
                    let plan = open_loop_plan(model, trip.departure, trip.deadline)
                        .map_err(|e| EngineError::planning(e, trip.day))?;
                    self.trips[id].plan = Some(plan);
                }
                self.drive_leg(id, 0, event.time);
            }
            Action::Ramp(k) => self.reach_ramp(&event, k)?,
            Action::Arrive(k) => {
                let trip = &self.trips[id];
                let session = trip
                    .session
                    .as_ref()
                    .expect("station arrival without a session");
                let (station, a) = (session.station, session.assignment);
                let obs = WaitObservation {
                    arrival: event.time,
                    wait: a.wait,
                    port: a.port,
                    truck: trip.record.truck,
                };
                self.stations[station].forecast.record_observation(&obs);
                self.log(&event, Some(k), Some(a.port), Some(a.wait));
                self.schedule(a.start, id, Action::Start(k));
            }
            Action::Start(k) => {
                let session = self.trips[id]
                    .session
                    .as_ref()
                    .expect("charge without a session");
                let (station, port, end) = (
                    session.station,
                    session.assignment.port,
                    session.assignment.end,
                );
                let st = &mut self.stations[station];
                st.active += 1;
                if st.active > st.ports {
                    self.result.invariants.ports += 1;
                }
                self.log(&event, Some(k), Some(port), None);
                self.schedule(end, id, Action::Finish(k));
            }
            Action::Finish(k) => {
                let session = self.trips[id]
                    .session
                    .take()
                    .expect("finish without a session");
                self.stations[session.station].active -= 1;
                let trip = &mut self.trips[id];
                let model = &self.models[trip.model];
                let rate = model.rates[k];
                let d = model.detour(k);
                trip.battery += rate * session.duration;
                let r = &mut trip.record;
                let labor = model.truck.labor_rate;
                r.total_wait += session.assignment.wait;
                r.stops += 1;
                r.charge_minutes += session.duration;
                r.energy_charged += rate * session.duration;
                r.labor_cost += labor * (2.0 * d + session.assignment.wait + session.duration);
                r.electricity_cost += model.energy_costs[k] * session.duration;
                self.result.charges.push(ChargeRecord {
                    truck: r.truck,
                    day: trip.day,
                    station: self.stations[session.station].id,
                    stop: k,
                    port: session.assignment.port,
                    arrival: session.assignment.start - session.assignment.wait,
                    wait: session.assignment.wait,
                    duration: session.duration,
                    evaluation: r.evaluation,
                });
                self.log(&event, Some(k), Some(session.assignment.port), None);
                let back = event.time + d;
                self.trips[id].battery -=
                    self.models[self.trips[id].model].truck.consumption_rate * d;
                self.schedule(back, id, Action::Return(k));
            }
            Action::Return(k) => {
                self.log(&event, Some(k), None, None);
                self.drive_leg(id, k + 1, event.time);
            }
            Action::Destination => {
                let trip = &mut self.trips[id];
                let model = &self.models[trip.model];
                let t = &model.truck;
                if trip.battery < t.safety_margin - CHECK_TOL {
                    trip.record.energy_violations += 1;
                    self.result.invariants.energy += 1;
                }
                let r = &mut trip.record;
                r.arrival = event.time;
                r.penalty_cost = t.deadline_penalty_rate * (event.time - trip.deadline).max(0.0);
                // Labor is charged on stop time only: the trip length minus
                // time spent driving must match the per-stop ledger.
                let stop_time = event.time - trip.departure - trip.driven;
                let audited = t.labor_rate * stop_time;
                if (audited - r.labor_cost).abs() > CHECK_TOL * (1.0 + r.labor_cost.abs()) {
                    self.result.invariants.cost += 1;
                }
                self.log(&event, None, None, None);
            }
        }
        Ok(())
    }

    /// Drives leg `leg` (0 = origin leg) starting at `time`.
    fn drive_leg(&mut self, id: usize, leg: usize, time: f64) {
        let trip = &mut self.trips[id];
        let model = &self.models[trip.model];
        let spec = model.route.leg(leg);
        let noise = trip.noise.legs[leg];
        let travel = spec.travel + noise.travel;
        trip.battery += noise.energy - model.truck.consumption_rate * spec.travel;
        trip.driven += travel;
        let next = if leg < model.len() {
            Action::Ramp(leg)
        } else {
            Action::Destination
        };
        self.schedule(time + travel, id, next);
    }

    fn reach_ramp(&mut self, event: &Event, k: usize) -> Result<(), EngineError> {
        let id = event.trip;
        let now = event.time;
        let model_idx = self.trips[id].model;
        let station = self.stop_stations[model_idx][k];
        let (d, reserve, len) = {
            let model = &self.models[model_idx];
            let t = &model.truck;
            let d = model.detour(k);
            (d, t.safety_margin + t.consumption_rate * d, model.len())
        };

        if self.trips[id].battery < reserve - CHECK_TOL {
            self.trips[id].record.energy_violations += 1;
            self.result.invariants.energy += 1;
        }
        let nearby = self.stations[station].schedule.nearby_waiting_time(now + d);
        self.trips[id].record.ramp_waits[k] = Some(nearby);
        self.log(event, Some(k), None, None);

        let state = TruckState {
            stop: k,
            time: now,
            battery: self.trips[id].battery,
            deadline: self.trips[id].deadline,
        };
        match self.options.strategy {
            Strategy::Proposed => {
                let plan = self.exchange_and_plan(id, &state, nearby)?;
                self.trips[id].plan = Some(plan);
            }
            Strategy::Dynamic => {
                let est = WaitingEstimates::nearby_only(len, nearby);
                let plan = optimize_plan(&self.models[model_idx], &state, &est)
                    .map_err(|e| EngineError::planning(e, self.trips[id].day))?;
                self.trips[id].plan = Some(plan);
            }
            Strategy::Offline => {}
        }

        let plan = self.trips[id].plan.as_ref().expect("trip has a plan");
        if !plan.charges_at(k) {
            self.drive_leg(id, k + 1, now);
            return Ok(());
        }
        let model = &self.models[model_idx];
        let t = &model.truck;
        let rate = model.rates[k];
        let at_station = self.trips[id].battery - t.consumption_rate * d;
        let room = ((t.battery_full - at_station) / rate).max(0.0);
        let mut duration = plan.duration_at(k);
        if duration > room {
            if self.options.strategy != Strategy::Offline && (duration - room) * rate > CHECK_TOL {
                self.result.invariants.capacity += 1;
            }
            duration = room;
        }
        let assignment = self.stations[station]
            .schedule
            .assign_port(now + d, true, duration)
            .expect("charging assignment");
        let trip = &mut self.trips[id];
        trip.battery = at_station;
        trip.session = Some(Session {
            station,
            assignment,
            duration,
        });
        self.schedule(now + d, id, Action::Arrive(k));
        Ok(())
    }

    /// Two-round exchange with the distant stations, then the plan.
    fn exchange_and_plan(
        &mut self,
        id: usize,
        state: &TruckState,
        nearby: f64,
    ) -> Result<ChargingPlan, EngineError> {
        let trip = &self.trips[id];
        let model = &self.models[trip.model];
        let stations = &self.stop_stations[trip.model];
        let n = model.len();
        let day = trip.day;
        let earliest =
            earliest_arrivals(model, state).map_err(|e| EngineError::planning(e, day))?;

        let mut max_waits = vec![None; n];
        for j in state.stop + 1..n {
            if let Some(a) = earliest[j] {
                let q = DistantQuery::Earliest(a + model.detour(j));
                max_waits[j] = Some(self.stations[stations[j]].forecast.respond_distant(q)?);
            }
        }
        let latest = latest_arrivals(model, state, nearby, &max_waits)
            .map_err(|e| EngineError::planning(e, day))?;
        let mut window_waits = vec![None; n];
        for j in state.stop + 1..n {
            if let (Some(lo), Some(hi)) = (earliest[j], latest[j]) {
                let d = model.detour(j);
                let q = DistantQuery::Window {
                    lo: lo + d,
                    hi: hi + d,
                };
                window_waits[j] = Some(self.stations[stations[j]].forecast.respond_distant(q)?);
            }
        }
        let est = WaitingEstimates {
            nearby,
            distant: window_waits.clone(),
        };
        let plan = optimize_plan(model, state, &est).map_err(|e| EngineError::planning(e, day))?;
        self.result.replans.push(ReplanRecord {
            truck: trip.record.truck,
            day: trip.day,
            stop: state.stop,
            time: state.time,
            battery: state.battery,
            deadline: state.deadline,
            phase: self.phase,
            nearby_wait: nearby,
            earliest,
            max_waits,
            latest,
            window_waits,
            plan: plan.clone(),
        });
        Ok(plan)
    }
}
