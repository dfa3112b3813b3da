//! Charging-plan programs with binary stop decisions.
//!
//! Once the stop vector `b` is fixed, energy and arrival recursions are
//! linear in the charging durations, so each program is solved exactly by
//! enumerating every `b` and solving one LP per vector.

use std::cmp::Ordering;

use thiserror::Error;

use super::lp::{solve_lp, LinearProgram, LpError, LpStatus, Relation, FEAS_TOL};

/// Default limit on the number of binary decisions.
pub const DEFAULT_ENUMERATION_CAP: usize = 16;
/// Objective difference below which two stop vectors count as tied.
pub const TIE_TOL: f64 = 1e-6;

/// Which objective and constraint family a problem encodes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlanMode {
    /// Operational cost with certainty-equivalent dynamics and a soft
    /// deadline; the first leg's safety margin is inflated by its energy
    /// noise bound.
    Plan,
    /// Minimal detour plus charging time to reach the end of the horizon,
    /// with energy noise at its favorable extreme on every leg.
    Earliest,
}

/// Per-station data for one position of the planning horizon.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StopData {
    /// `min(P_station, P_max)` (kWh/min).
    pub charge_rate: f64,
    /// One-way ramp-to-station time (min).
    pub detour: f64,
    /// Nominal travel to the next ramp or destination (min).
    pub travel: f64,
    /// Waiting-time estimate (min), used in `Plan` mode.
    pub wait: f64,
    /// Electricity cost per charging minute (€/min).
    pub energy_cost: f64,
    /// Bound on the energy noise of the following leg (kWh).
    pub energy_noise: f64,
    /// `false` pins the stop decision to 0.
    pub allowed: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MixedPlanProblem {
    pub mode: PlanMode,
    pub stops: Vec<StopData>,
    /// Battery on arrival at the first ramp of the horizon (kWh).
    pub start_energy: f64,
    /// Arrival time at the first ramp of the horizon (min).
    pub start_time: f64,
    pub battery_full: f64,
    pub safety_margin: f64,
    pub consumption_rate: f64,
    pub labor_rate: f64,
    pub penalty_rate: f64,
    pub deadline: f64,
    /// Detour of the station right after the horizon, or 0 when the
    /// horizon ends at the destination.
    pub final_detour: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MixedStatus {
    Optimal,
    Infeasible,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MixedPlanSolution {
    pub status: MixedStatus,
    pub charge: Vec<bool>,
    /// Charging minutes; 0 wherever `charge` is false.
    pub durations: Vec<f64>,
    pub objective: f64,
}

impl MixedPlanSolution {
    fn infeasible(horizon: usize) -> Self {
        Self {
            status: MixedStatus::Infeasible,
            charge: vec![false; horizon],
            durations: vec![0.0; horizon],
            objective: f64::INFINITY,
        }
    }

    pub fn stop_count(&self) -> usize {
        self.charge.iter().filter(|b| **b).count()
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum MixedError {
    #[error("planning horizon is empty")]
    EmptyHorizon,
    #[error(
        "horizon of {horizon} stations exceeds the enumeration cap of {cap}; \
         reduce the number of stations per route"
    )]
    HorizonTooLong { horizon: usize, cap: usize },
    #[error("inconsistent problem data: {0}")]
    BadData(&'static str),
    #[error(transparent)]
    Lp(#[from] LpError),
}

/// Direct forward evaluation of a fixed decision.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Evaluation {
    /// Largest constraint violation (kWh or min); ≤ 0 means feasible.
    pub violation: f64,
    pub objective: f64,
    /// Battery at the end of the horizon.
    pub final_energy: f64,
    /// Arrival time at the end of the horizon.
    pub final_time: f64,
}

impl MixedPlanProblem {
    pub fn horizon(&self) -> usize {
        self.stops.len()
    }

    fn check(&self, cap: usize) -> Result<(), MixedError> {
        let h = self.horizon();
        if h == 0 {
            return Err(MixedError::EmptyHorizon);
        }
        if h > cap {
            return Err(MixedError::HorizonTooLong { horizon: h, cap });
        }
        if self.stops.iter().any(|s| !(s.charge_rate > 0.0)) {
            return Err(MixedError::BadData("charge rates must be positive"));
        }
        if !(self.consumption_rate > 0.0) {
            return Err(MixedError::BadData("consumption rate must be positive"));
        }
        Ok(())
    }

    /// Energy change over stop `j` and its following leg, excluding the
    /// charged energy.
    fn drift(&self, j: usize, charge: bool) -> f64 {
        let s = &self.stops[j];
        let detours = if charge { 2.0 * s.detour } else { 0.0 };
        let base = -self.consumption_rate * (detours + s.travel);
        match self.mode {
            PlanMode::Plan => base,
            PlanMode::Earliest => base + s.energy_noise,
        }
    }

    /// Minimum battery required on reaching the ramp after stop `j`.
    fn requirement(&self, j: usize) -> f64 {
        let next_detour = self
            .stops
            .get(j + 1)
            .map_or(self.final_detour, |s| s.detour);
        let inflation = match (self.mode, j) {
            (PlanMode::Plan, 0) => self.stops[0].energy_noise,
            _ => 0.0,
        };
        self.safety_margin + inflation + self.consumption_rate * next_detour
    }

    /// Implied upper bound on the charging time at stop `j`.
    pub fn duration_bound(&self, j: usize) -> f64 {
        let s = &self.stops[j];
        let headroom = if j == 0 {
            self.battery_full - self.start_energy + self.consumption_rate * s.detour
        } else {
            self.battery_full - self.safety_margin
        };
        (headroom / s.charge_rate).max(0.0)
    }

    /// Evaluates `(charge, durations)` by running the recursions forward.
    pub fn evaluate(&self, charge: &[bool], durations: &[f64]) -> Evaluation {
        let mut energy = self.start_energy;
        let mut time = self.start_time;
        let mut violation = f64::NEG_INFINITY;
        let mut cost = 0.0;
        for (j, s) in self.stops.iter().enumerate() {
            let b = charge[j];
            let t = if b { durations[j] } else { 0.0 };
            violation = violation.max(-t);
            if b && !s.allowed {
                violation = f64::INFINITY;
            }
            let gained = s.charge_rate * t;
            if b {
                let cap = self.battery_full - (energy - self.consumption_rate * s.detour);
                violation = violation.max(gained - cap);
                match self.mode {
                    PlanMode::Plan => {
                        cost += self.labor_rate * (2.0 * s.detour + t + s.wait) + s.energy_cost * t;
                        time += t + s.wait + 2.0 * s.detour;
                    }
                    PlanMode::Earliest => {
                        cost += 2.0 * s.detour + t;
                        time += t + 2.0 * s.detour;
                    }
                }
            }
            energy += gained + self.drift(j, b);
            time += s.travel;
            violation = violation.max(self.requirement(j) - energy);
        }
        if self.mode == PlanMode::Plan {
            cost += (self.penalty_rate * (time - self.deadline)).max(0.0);
        }
        Evaluation {
            violation,
            objective: cost,
            final_energy: energy,
            final_time: time,
        }
    }

    /// The LP in the charging durations for a fixed stop vector, plus the
    /// objective constant. Columns are the charged stops in order, then the
    /// hinge variable in `Plan` mode.
    pub fn residual_lp(&self, charge: &[bool]) -> (LinearProgram, Vec<usize>, f64) {
        let h = self.horizon();
        let charged: Vec<usize> = (0..h).filter(|&j| charge[j]).collect();
        let hinge = self.mode == PlanMode::Plan;
        let nvars = charged.len() + usize::from(hinge);
        let col_of = |j: usize| charged.iter().position(|&c| c == j);

        let mut objective = vec![0.0; nvars];
        let mut constant = 0.0;
        for (c, &j) in charged.iter().enumerate() {
            let s = &self.stops[j];
            match self.mode {
                PlanMode::Plan => {
                    objective[c] = self.labor_rate + s.energy_cost;
                    constant += self.labor_rate * (2.0 * s.detour + s.wait);
                }
                PlanMode::Earliest => {
                    objective[c] = 1.0;
                    constant += 2.0 * s.detour;
                }
            }
        }
        if hinge {
            objective[nvars - 1] = 1.0;
        }
        let mut lp = LinearProgram::new(objective);
        for (c, &j) in charged.iter().enumerate() {
            lp.upper[c] = self.duration_bound(j);
        }

        // energy before stop j = level[j] + Σ_{charged h<j} rate_h t_h
        let mut level = Vec::with_capacity(h + 1);
        level.push(self.start_energy);
        for j in 0..h {
            level.push(level[j] + self.drift(j, charge[j]));
        }
        let prefix = |upto: usize| -> Vec<f64> {
            let mut row = vec![0.0; nvars];
            for &j in charged.iter().filter(|&&j| j <= upto) {
                row[col_of(j).unwrap()] = self.stops[j].charge_rate;
            }
            row
        };
        for j in 0..h {
            let s = &self.stops[j];
            if charge[j] {
                let cap = self.battery_full - level[j] + self.consumption_rate * s.detour;
                lp.add(prefix(j), Relation::LessEq, cap);
            }
            lp.add(
                prefix(j),
                Relation::GreaterEq,
                self.requirement(j) - level[j + 1],
            );
        }
        if hinge {
            let mut fixed_time = self.start_time;
            let mut row = vec![0.0; nvars];
            for (j, s) in self.stops.iter().enumerate() {
                fixed_time += s.travel;
                if charge[j] {
                    fixed_time += s.wait + 2.0 * s.detour;
                    row[col_of(j).unwrap()] = -self.penalty_rate;
                }
            }
            row[nvars - 1] = 1.0;
            lp.add(
                row,
                Relation::GreaterEq,
                self.penalty_rate * (fixed_time - self.deadline),
            );
        }
        (lp, charged, constant)
    }
}

/// Orders stop vectors: fewer stops first, then lexicographically smaller.
pub fn stop_vector_order(a: &[bool], b: &[bool]) -> Ordering {
    let count = |v: &[bool]| v.iter().filter(|x| **x).count();
    count(a).cmp(&count(b)).then_with(|| a.cmp(b))
}

/// `true` when `candidate` should replace `incumbent`.
pub fn improves(candidate: (f64, &[bool]), incumbent: Option<(f64, &[bool])>) -> bool {
    match incumbent {
        None => true,
        Some((best, best_b)) => {
            if candidate.0 < best - TIE_TOL {
                true
            } else if candidate.0 <= best + TIE_TOL {
                stop_vector_order(candidate.1, best_b) == Ordering::Less
            } else {
                false
            }
        }
    }
}

pub fn solve_mixed(problem: &MixedPlanProblem) -> Result<MixedPlanSolution, MixedError> {
    solve_mixed_capped(problem, DEFAULT_ENUMERATION_CAP)
}

pub fn solve_mixed_capped(
    problem: &MixedPlanProblem,
    cap: usize,
) -> Result<MixedPlanSolution, MixedError> {
    problem.check(cap)?;
    let h = problem.horizon();
    let mut best: Option<MixedPlanSolution> = None;
    for mask in 0u32..(1u32 << h) {
        let charge: Vec<bool> = (0..h).map(|j| mask >> j & 1 == 1).collect();
        if charge
            .iter()
            .zip(&problem.stops)
            .any(|(b, s)| *b && !s.allowed)
        {
            continue;
        }
        let (lp, charged, constant) = problem.residual_lp(&charge);
        let sol = solve_lp(&lp)?;
        if sol.status != LpStatus::Optimal {
            continue;
        }
        let mut durations = vec![0.0; h];
        for (c, &j) in charged.iter().enumerate() {
            durations[j] = sol.values[c];
        }
        let objective = sol.objective + constant;
        let incumbent = best.as_ref().map(|b| (b.objective, b.charge.as_slice()));
        if improves((objective, &charge), incumbent) {
            best = Some(MixedPlanSolution {
                status: MixedStatus::Optimal,
                charge,
                durations,
                objective,
            });
        }
    }
    let best = best.unwrap_or_else(|| MixedPlanSolution::infeasible(h));
    if best.status == MixedStatus::Optimal {
        debug_assert!(
            problem.evaluate(&best.charge, &best.durations).violation <= FEAS_TOL * 1e3,
            "mixed solution violates constraints: {:?}",
            problem.evaluate(&best.charge, &best.durations)
        );
    }
    Ok(best)
}
