//! Exhaustive grid search used to cross-check [`solve_mixed`].
//!
//! [`solve_mixed`]: super::solve_mixed

use super::mixed::{improves, MixedPlanProblem, MixedPlanSolution, MixedStatus, PlanMode};

/// Largest horizon the oracle accepts.
pub const ORACLE_MAX_HORIZON: usize = 4;
const GRID_FEAS_TOL: f64 = 1e-9;

/// Best feasible point over all stop vectors and a `step`-minute grid on
/// each charging duration's bound interval.
///
/// # Panics
///
/// When the horizon exceeds [`ORACLE_MAX_HORIZON`] or `step` is not
/// positive.
pub fn brute_force_oracle(problem: &MixedPlanProblem, step: f64) -> MixedPlanSolution {
    let h = problem.horizon();
    assert!(h <= ORACLE_MAX_HORIZON, "oracle horizon {h} too long");
    assert!(step > 0.0, "grid step must be positive");

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
        let grids: Vec<Vec<f64>> = (0..h)
            .map(|j| {
                if charge[j] {
                    let upper = problem.duration_bound(j);
                    let n = (upper / step + 1e-9).floor() as usize;
                    (0..=n).map(|i| i as f64 * step).collect()
                } else {
                    vec![0.0]
                }
            })
            .collect();
        let mut point = vec![0.0; h];
        let mut local: Option<(f64, Vec<f64>)> = None;
        search(problem, &charge, &grids, 0, &mut point, &mut local);
        if let Some((objective, durations)) = local {
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
    }
    best.unwrap_or(MixedPlanSolution {
        status: MixedStatus::Infeasible,
        charge: vec![false; h],
        durations: vec![0.0; h],
        objective: f64::INFINITY,
    })
}

/// Depth-first over grid points; a prefix that already breaks a
/// constraint involving only earlier durations is skipped.
fn search(
    problem: &MixedPlanProblem,
    charge: &[bool],
    grids: &[Vec<f64>],
    depth: usize,
    point: &mut Vec<f64>,
    best: &mut Option<(f64, Vec<f64>)>,
) {
    if depth == grids.len() {
        let eval = problem.evaluate(charge, point);
        if eval.violation <= GRID_FEAS_TOL && best.as_ref().is_none_or(|(b, _)| eval.objective < *b)
        {
            *best = Some((eval.objective, point.clone()));
        }
        return;
    }
    for &t in &grids[depth] {
        point[depth] = t;
        if !prefix_feasible(problem, charge, point, depth) {
            // Larger durations only add energy; the cap can still fail, the
            // requirement can recover. Keep scanning.
            continue;
        }
        search(problem, charge, grids, depth + 1, point, best);
    }
}

fn prefix_feasible(
    problem: &MixedPlanProblem,
    charge: &[bool],
    point: &[f64],
    depth: usize,
) -> bool {
    let mut energy = problem.start_energy;
    let p = problem.consumption_rate;
    for j in 0..=depth {
        let s = &problem.stops[j];
        let t = if charge[j] { point[j] } else { 0.0 };
        if charge[j] {
            let cap = problem.battery_full - (energy - p * s.detour);
            if s.charge_rate * t > cap + GRID_FEAS_TOL {
                return false;
            }
        }
        let detours = if charge[j] { 2.0 * s.detour } else { 0.0 };
        energy += s.charge_rate * t - p * (detours + s.travel);
        if problem.mode == PlanMode::Earliest {
            energy += s.energy_noise;
        }
        let next_detour = problem
            .stops
            .get(j + 1)
            .map_or(problem.final_detour, |n| n.detour);
        let inflation = if problem.mode == PlanMode::Plan && j == 0 {
            s.energy_noise
        } else {
            0.0
        };
        if energy < problem.safety_margin + inflation + p * next_detour - GRID_FEAS_TOL {
            return false;
        }
    }
    true
}
