#![allow(dead_code)]

use chargecoord::solver::{MixedPlanProblem, PlanMode, StopData};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Random plan problems whose optimal vertices fall on a 0.05-minute grid:
/// charge rates of 2.5 or 5 kWh/min, energies in quarter-kWh steps and
/// whole-minute travel times.
pub fn aligned_instance(seed: u64, mode: PlanMode) -> MixedPlanProblem {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let horizon = rng.gen_range(1..=4);
    let quarter = |rng: &mut ChaCha8Rng, lo: u32, hi: u32| rng.gen_range(lo..=hi) as f64 * 0.25;
    let consumption = if rng.gen_bool(0.5) { 0.25 } else { 0.5 };
    let battery_full = 8.0;
    let safety_margin = 3.0;
    let stops: Vec<StopData> = (0..horizon)
        .map(|_| StopData {
            charge_rate: if rng.gen_bool(0.5) { 2.5 } else { 5.0 },
            detour: rng.gen_range(0..=2) as f64,
            travel: rng.gen_range(1..=8) as f64,
            wait: rng.gen_range(0..=6) as f64 * 0.5,
            energy_cost: [0.5, 1.0, 1.8][rng.gen_range(0..3)],
            energy_noise: quarter(&mut rng, 0, 2),
            allowed: rng.gen_bool(0.9),
        })
        .collect();
    let min_start = safety_margin + consumption * stops[0].detour;
    let start_energy = quarter(&mut rng, (min_start * 4.0) as u32, 32);
    let start_time = rng.gen_range(0..=600) as f64;
    let nominal: f64 = stops.iter().map(|s| s.travel).sum();
    let deadline = start_time + nominal + rng.gen_range(0..=6) as f64;
    let final_detour = match mode {
        PlanMode::Plan => 0.0,
        PlanMode::Earliest => rng.gen_range(0..=2) as f64,
    };
    MixedPlanProblem {
        mode,
        stops,
        start_energy,
        start_time,
        battery_full,
        safety_margin,
        consumption_rate: consumption,
        labor_rate: [1.0, 2.0][rng.gen_range(0..2)],
        penalty_rate: [0.0, 10.0][rng.gen_range(0..2)],
        deadline,
        final_detour,
    }
}

/// Alternates plan-mode and earliest-arrival instances.
pub fn aligned_instances(count: u64) -> Vec<MixedPlanProblem> {
    (0..count)
        .map(|i| {
            let mode = if i % 3 == 2 {
                PlanMode::Earliest
            } else {
                PlanMode::Plan
            };
            aligned_instance(1000 + i, mode)
        })
        .collect()
}
