//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit if
//! any criterion fails.

mod common;

use std::collections::{BTreeMap, HashMap};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use chargecoord::engine::{
    run_simulation, run_two_phase, ReplanRecord, RunOptions, RunResult, Strategy, TripRecord,
};
use chargecoord::planner::{cost_bound, evaluate_cost, TripModel, TruckState};
use chargecoord::report;
use chargecoord::scenario::{
    generate_scenario, ports_for, validate_scenario, GenerationConfig, Scenario, TruckId,
};
use chargecoord::solver::{
    brute_force_oracle, solve_lp, solve_mixed, LinearProgram, LpStatus, MixedStatus, Relation,
};
use chargecoord::station::{ForecastModel, PortSchedule};

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn feasibility_scenario(seed: u64) -> Scenario {
    let mut cfg = GenerationConfig::paper_sv();
    cfg.collection_days = 2;
    cfg.evaluation_days = 8;
    generate_scenario(&cfg, seed).expect("generation")
}

const FEASIBILITY_SEEDS: [u64; 3] = [11, 12, 13];

/// Proposed and Dynamic runs shared by criteria 2-4.
struct FeasibilityRuns {
    scenarios: Vec<Scenario>,
    proposed: Vec<RunResult>,
    dynamic: Vec<RunResult>,
    elapsed: Duration,
}

fn feasibility_runs() -> FeasibilityRuns {
    let start = Instant::now();
    let scenarios: Vec<Scenario> = FEASIBILITY_SEEDS
        .iter()
        .map(|&s| feasibility_scenario(s))
        .collect();
    let proposed = scenarios
        .iter()
        .map(|s| run_two_phase(s, Strategy::Proposed).expect("proposed run"))
        .collect();
    let dynamic = scenarios
        .iter()
        .map(|s| run_two_phase(s, Strategy::Dynamic).expect("dynamic run"))
        .collect();
    FeasibilityRuns {
        scenarios,
        proposed,
        dynamic,
        elapsed: start.elapsed(),
    }
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let instances = common::aligned_instances(100);
    let mut worst: f64 = 0.0;
    let mut infeasible = 0;
    for (i, p) in instances.iter().enumerate() {
        let sol = solve_mixed(p).map_err(|e| e.to_string())?;
        let oracle = brute_force_oracle(p, 0.05);
        ensure(sol.status == oracle.status, || {
            format!("instance {i}: status differs")
        })?;
        if sol.status == MixedStatus::Infeasible {
            infeasible += 1;
            continue;
        }
        ensure(sol.charge == oracle.charge, || {
            format!(
                "instance {i}: stop vector {:?} vs oracle {:?}",
                sol.charge, oracle.charge
            )
        })?;
        let gap = (sol.objective - oracle.objective).abs();
        ensure(gap <= 0.1, || format!("instance {i}: objective gap {gap}"))?;
        worst = worst.max(gap);
    }
    let elapsed = start.elapsed();
    ensure(elapsed < Duration::from_secs(60), || {
        format!("took {elapsed:?}")
    })?;
    Ok(format!(
        "100 instances ({infeasible} infeasible), max objective gap {worst:.4}, {elapsed:.1?}"
    ))
}

fn criterion_2(runs: &FeasibilityRuns) -> Outcome {
    for (label, results) in [("proposed", &runs.proposed), ("dynamic", &runs.dynamic)] {
        for (seed, r) in FEASIBILITY_SEEDS.iter().zip(results.iter()) {
            let inv = r.invariants;
            ensure(inv == Default::default(), || {
                format!("{label} seed {seed}: {inv:?}")
            })?;
            let trips_violating = r.trips.iter().filter(|t| t.energy_violations > 0).count();
            ensure(trips_violating == 0, || {
                format!("{label} seed {seed}: {trips_violating} trips breach reserve")
            })?;
        }
    }
    ensure(runs.elapsed < Duration::from_secs(300), || {
        format!("took {:?}", runs.elapsed)
    })?;
    let trips: usize = runs
        .proposed
        .iter()
        .chain(&runs.dynamic)
        .map(|r| r.trips.len())
        .sum();
    Ok(format!(
        "{trips} trips over seeds {FEASIBILITY_SEEDS:?}, zero violations, {:.1?}",
        runs.elapsed
    ))
}

fn trip_index(r: &RunResult) -> HashMap<(TruckId, u32), &TripRecord> {
    r.trips.iter().map(|t| ((t.truck, t.day), t)).collect()
}

fn replans_by_trip(r: &RunResult) -> BTreeMap<(u32, u32), Vec<&ReplanRecord>> {
    let mut m: BTreeMap<(u32, u32), Vec<&ReplanRecord>> = BTreeMap::new();
    for rec in &r.replans {
        m.entry((rec.truck.0, rec.day)).or_default().push(rec);
    }
    for v in m.values_mut() {
        v.sort_by_key(|r| r.stop);
    }
    m
}

/// Arrival windows at later stations shrink between consecutive ramps.
fn criterion_3(runs: &FeasibilityRuns) -> Outcome {
    const TOL: f64 = 1e-6;
    let mut steps = 0usize;
    let mut earliest_breaks = 0usize;
    let mut latest_breaks = 0usize;
    let mut unexplained = 0usize;
    for (scenario, r) in runs.scenarios.iter().zip(&runs.proposed) {
        let trips = trip_index(r);
        for ((truck, day), recs) in replans_by_trip(r) {
            let model = TripModel::from_scenario(scenario, TruckId(truck)).unwrap();
            let trip = trips[&(TruckId(truck), day)];
            for pair in recs.windows(2) {
                let (a, b) = (pair[0], pair[1]);
                let k = a.stop;
                if b.stop != k + 1 || k + 2 >= model.len() {
                    continue;
                }
                // Premise: equal charge rates at the two stations and a
                // realized wait at the nearby station within its estimate.
                let realized = trip.ramp_waits[k].unwrap();
                if model.rates[k] != model.rates[k + 1] || realized > a.nearby_wait + TOL {
                    continue;
                }
                steps += 1;
                let later = k + 2..model.len();
                let earliest_ok = later.clone().all(|l| match (a.earliest[l], b.earliest[l]) {
                    (Some(prev), Some(next)) => prev <= next + TOL,
                    (None, Some(_)) => false,
                    _ => true,
                });
                let latest_ok = later.clone().all(|l| match (a.latest[l], b.latest[l]) {
                    (Some(prev), Some(next)) => next <= prev + TOL,
                    _ => true,
                });
                earliest_breaks += usize::from(!earliest_ok);
                latest_breaks += usize::from(!latest_ok);
                // The latest-arrival argument also treats every maximum wait
                // as fixed between the two ramps: the next nearby wait must
                // stay within the maximum that station reported one ramp
                // earlier, and the remaining maxima must not change.
                let maxima_fixed = a.phase == b.phase
                    && a.max_waits[k + 1].is_some_and(|m| b.nearby_wait <= m + TOL)
                    && later.clone().all(|l| a.max_waits[l] == b.max_waits[l]);
                unexplained += usize::from(!(earliest_ok && (latest_ok || !maxima_fixed)));
            }
        }
    }
    let detail = format!(
        "{steps} steps; earliest arrivals fell {earliest_breaks} times, latest arrivals grew \
{latest_breaks} times (tolerance {TOL:e}); {unexplained} breaks remain once the maximum waits \
are held fixed between ramps"
    );
    if steps >= 1000 && earliest_breaks == 0 && latest_breaks == 0 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

/// Cost error from waiting-time estimates stays within the bound.
fn criterion_4(runs: &FeasibilityRuns) -> Outcome {
    const TOL: f64 = 1e-6;
    let mut checked = 0usize;
    let mut last_stop = 0usize;
    let mut tightest: f64 = f64::INFINITY;
    for (scenario, r) in runs.scenarios.iter().zip(&runs.proposed) {
        let trips = trip_index(r);
        for rec in &r.replans {
            let model = TripModel::from_scenario(scenario, rec.truck).unwrap();
            let trip = trips[&(rec.truck, rec.day)];
            let k = rec.stop;
            let realized: Vec<f64> = (k..model.len())
                .map(|l| {
                    if l == k {
                        rec.nearby_wait
                    } else {
                        trip.ramp_waits[l].unwrap()
                    }
                })
                .collect();
            let excess: Vec<f64> = realized
                .iter()
                .zip(&rec.plan.waits)
                .skip(1)
                .map(|(w, e)| (w - e).abs())
                .collect();
            let bound = cost_bound(
                model.truck.labor_rate,
                model.truck.deadline_penalty_rate,
                &excess,
            );
            let state = TruckState {
                stop: k,
                time: rec.time,
                battery: rec.battery,
                deadline: rec.deadline,
            };
            let j_hat = evaluate_cost(&model, &state, &rec.plan, &realized);
            let gap = (j_hat - rec.plan.objective).abs();
            ensure(gap <= bound + TOL, || {
                format!(
                    "truck {} day {} stop {k}: |Ĵ-J*| = {gap} > bound {bound}",
                    rec.truck, rec.day
                )
            })?;
            if k + 1 == model.len() {
                last_stop += 1;
                ensure(bound == 0.0 && gap <= TOL, || {
                    format!(
                        "truck {} day {}: last-stop gap {gap}, bound {bound}",
                        rec.truck, rec.day
                    )
                })?;
            }
            if bound > 0.0 {
                tightest = tightest.min(bound - gap);
            }
            checked += 1;
        }
    }
    ensure(last_stop > 0, || "no replans at the last stop".into())?;
    Ok(format!(
        "{checked} replans within bound ({last_stop} at the last stop with zero bound), smallest slack {tightest:.2e} €"
    ))
}

fn congested_config() -> GenerationConfig {
    let mut cfg = GenerationConfig::paper_sv();
    cfg.ports_per_truck = 0.1;
    cfg
}

fn criterion_5() -> Outcome {
    let start = Instant::now();
    let cfg = congested_config();
    let mut lines = Vec::new();
    let mut ordered = true;
    let mut reductions = Vec::new();
    for seed in 1..=5u64 {
        let s = generate_scenario(&cfg, seed).map_err(|e| e.to_string())?;
        let w: Vec<f64> = Strategy::ALL
            .iter()
            .map(|&st| run_two_phase(&s, st).map(|r| r.mean_wait()))
            .collect::<Result<_, _>>()
            .map_err(|e| e.to_string())?;
        let (p, d, o) = (w[0], w[1], w[2]);
        let ok = p <= d && d <= o;
        ordered &= ok;
        reductions.push(report::reduction_percent(o, p));
        lines.push(format!(
            "seed {seed}: proposed {p:.2} dynamic {d:.2} offline {o:.2} min{}",
            if ok { "" } else { " (order broken)" }
        ));
    }
    let mean_reduction = reductions.iter().sum::<f64>() / reductions.len() as f64;
    let elapsed = start.elapsed();
    let detail = format!(
        "{}; mean reduction vs offline {mean_reduction:.1}%; {elapsed:.1?}",
        lines.join("; ")
    );
    if ordered && mean_reduction >= 20.0 && elapsed < Duration::from_secs(900) {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn parse_f64(s: &str) -> f64 {
    s.parse().unwrap_or_else(|_| panic!("bad float {s:?}"))
}

/// Forecast bins recomputed from the exported event log.
fn criterion_6() -> Outcome {
    let scenario = feasibility_scenario(FEASIBILITY_SEEDS[0]);
    let options = RunOptions {
        record_events: true,
        ..RunOptions::new(Strategy::Proposed)
    };
    let r = run_simulation(&scenario, &options).map_err(|e| e.to_string())?;
    let log = report::events_csv(&r.events);
    let switch = f64::from(scenario.collection_days) * scenario.day_length;
    let bins = (scenario.day_length / scenario.forecast_bin_width) as usize;

    let mut header = log.lines().next().unwrap().split(',');
    let cols: Vec<&str> = header.by_ref().collect();
    let col = |name: &str| cols.iter().position(|c| *c == name).unwrap();
    let (c_time, c_event, c_station, c_wait) = (
        col("time_min"),
        col("event"),
        col("station"),
        col("wait_min"),
    );
    let mut acc: BTreeMap<(u32, usize), (f64, u64)> = BTreeMap::new();
    for line in log.lines().skip(1) {
        let f: Vec<&str> = line.split(',').collect();
        if f[c_event] != "arrive_station" {
            continue;
        }
        let time = parse_f64(f[c_time]);
        if time >= switch {
            continue;
        }
        let tod = time.rem_euclid(scenario.day_length);
        let bin = ((tod / scenario.forecast_bin_width) as usize).min(bins - 1);
        let e = acc
            .entry((f[c_station].parse().unwrap(), bin))
            .or_insert((0.0, 0));
        e.0 += parse_f64(f[c_wait]);
        e.1 += 1;
    }

    let exported = report::forecast_csv(&r);
    let mut compared = 0;
    let mut nonzero = 0;
    for line in exported.lines().skip(1) {
        let f: Vec<&str> = line.split(',').collect();
        let station: u32 = f[0].parse().unwrap();
        let bin = (parse_f64(f[1]) / scenario.forecast_bin_width).round() as usize;
        let mean = parse_f64(f[2]);
        let count: u64 = f[3].parse().unwrap();
        let (sum, n) = acc.get(&(station, bin)).copied().unwrap_or((0.0, 0));
        let expected = if n == 0 { 0.0 } else { sum / n as f64 };
        ensure(count == n && mean.to_bits() == expected.to_bits(), || {
            format!(
                "station {station} bin {bin}: exported {mean} ({count}) vs log {expected} ({n})"
            )
        })?;
        compared += 1;
        nonzero += usize::from(mean > 0.0);
    }
    ensure(nonzero > 0, || "no bin saw any waiting".into())?;
    Ok(format!(
        "{compared} bins match exactly ({nonzero} with nonzero mean)"
    ))
}

fn all_csv(scenario: &Scenario) -> Result<Vec<String>, String> {
    let mut results = Vec::new();
    let mut out = Vec::new();
    for st in Strategy::ALL {
        let options = RunOptions {
            record_events: true,
            ..RunOptions::new(st)
        };
        let r = run_simulation(scenario, &options).map_err(|e| e.to_string())?;
        out.push(report::events_csv(&r.events));
        out.push(report::forecast_csv(&r));
        results.push(r);
    }
    out.push(report::trips_csv(&results));
    out.push(report::daily_csv(&results));
    out.push(report::stations_csv(&results));
    out.push(report::summary_csv(&results));
    Ok(out)
}

fn criterion_7() -> Outcome {
    let mut cfg = GenerationConfig::paper_sv();
    cfg.truck_count = 20;
    cfg.collection_days = 2;
    cfg.evaluation_days = 3;
    let scenario = generate_scenario(&cfg, 7).map_err(|e| e.to_string())?;
    let first = all_csv(&scenario)?;
    let second = all_csv(&scenario)?;
    let reloaded = chargecoord::scenario::Scenario::from_toml(&scenario.to_toml())
        .map_err(|e| e.to_string())?;
    let third = all_csv(&reloaded)?;
    ensure(first == second && first == third, || {
        "CSV output differs between runs".into()
    })?;
    let bytes: usize = first.iter().map(String::len).sum();
    Ok(format!(
        "{} files, {bytes} bytes identical across three runs",
        first.len()
    ))
}

/// The closed-form examples, checked through the public API.
fn criterion_8() -> Outcome {
    let mut n = 0;
    let mut check = |cond: bool, what: &str| -> Result<(), String> {
        n += 1;
        ensure(cond, || format!("{what} failed"))
    };
    let s = PortSchedule::from_times(vec![100.0, 120.0]);
    check(s.nearby_waiting_time(90.0) == 10.0, "nearby wait 10")?;
    check(
        PortSchedule::from_times(vec![80.0, 120.0]).nearby_waiting_time(90.0) == 0.0,
        "free port",
    )?;
    let mut s2 = s.clone();
    s2.assign_port(90.0, true, 30.0);
    check(s2.times() == [130.0, 120.0], "schedule update")?;
    let mut s3 = s.clone();
    s3.assign_port(90.0, false, 30.0);
    check(s3 == s, "declined charge")?;
    check(
        ForecastModel::new(5.0, 1440.0).max_waiting_since(100.0) == 0.0,
        "empty model",
    )?;
    let toy = ForecastModel::from_means(1.0, &[5.0, 10.0, 7.0]);
    check(toy.max_waiting_since(0.3) == 10.0, "periodic maximum")?;
    let flat = ForecastModel::from_means(5.0, &[3.5; 288]);
    check(
        (flat.window_waiting_estimate(100.0, 900.0) - 3.5).abs() < 1e-12,
        "constant window",
    )?;
    let two = ForecastModel::from_means(10.0, &[0.0, 10.0]);
    check(
        two.window_waiting_estimate(10.0, 20.0) == 10.0,
        "single-bin window",
    )?;
    check(cost_bound(2.0, 10.0, &[3.0, 1.0]) == 48.0, "cost bound 48")?;
    check(cost_bound(2.0, 10.0, &[]) == 0.0, "empty cost bound")?;
    let mut lp = LinearProgram::new(vec![1.0]);
    lp.add(vec![1.0], Relation::GreaterEq, 3.0)
        .add(vec![1.0], Relation::LessEq, 10.0);
    let sol = solve_lp(&lp).map_err(|e| e.to_string())?;
    check(
        sol.status == LpStatus::Optimal && (sol.values[0] - 3.0).abs() < 1e-9,
        "lp t = 3",
    )?;
    let mut lp = LinearProgram::new(vec![1.0]);
    lp.add(vec![1.0], Relation::GreaterEq, 3.0)
        .add(vec![1.0], Relation::LessEq, 2.0);
    check(
        solve_lp(&lp).map_err(|e| e.to_string())?.status == LpStatus::Infeasible,
        "lp infeasible",
    )?;
    check(
        (report::reduction_percent(103.49, 36.71) - 64.5).abs() < 0.05,
        "reduction formula",
    )?;
    let template =
        generate_scenario(&GenerationConfig::paper_sv(), 1).map_err(|e| e.to_string())?;
    check(
        validate_scenario(&template).is_empty(),
        "template validates",
    )?;
    let st = &template.stations[0];
    let t = &template.trucks[0].truck;
    check(
        (st.cost_per_minute(t.max_charge_power) - 1.8).abs() < 1e-12,
        "1.8 €/min",
    )?;
    check(
        t.safety_margin == 156.0 && t.battery_full == 624.0,
        "battery template",
    )?;
    check(
        ports_for(0.1, 25) == 3 && ports_for(0.01, 3) == 1,
        "port sizing",
    )?;
    let mut single = template.clone();
    single.trucks.truncate(1);
    single.collection_days = 1;
    single.evaluation_days = 1;
    for st in Strategy::ALL {
        let r = run_two_phase(&single, st).map_err(|e| e.to_string())?;
        check(
            r.trips.iter().all(|t| t.total_wait == 0.0),
            "lone truck never waits",
        )?;
    }
    Ok(format!(
        "{n} examples hold; the full set also runs as unit tests"
    ))
}

fn run(id: u32, name: &str, f: impl FnOnce() -> Outcome) -> bool {
    let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
        let msg = p
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_else(|| "panic".into());
        Err(format!("panicked: {msg}"))
    });
    match &outcome {
        Ok(detail) => println!("criterion {id} ({name}): PASS: {detail}"),
        Err(detail) => println!("criterion {id} ({name}): FAIL: {detail}"),
    }
    outcome.is_ok()
}

fn main() {
    let mut ok = true;
    ok &= run(1, "solver matches grid oracle", criterion_1);
    let runs = feasibility_runs();
    ok &= run(2, "plan feasibility under noise", || criterion_2(&runs));
    ok &= run(3, "arrival windows shrink", || criterion_3(&runs));
    ok &= run(4, "cost error within bound", || criterion_4(&runs));
    ok &= run(5, "strategy ordering when congested", criterion_5);
    ok &= run(6, "forecast equals event-log means", criterion_6);
    ok &= run(7, "byte-identical reruns", criterion_7);
    ok &= run(8, "closed-form examples", criterion_8);
    if !ok {
        std::process::exit(1);
    }
}
