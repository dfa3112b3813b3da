//! CSV renderings of run results. Floats use Rust's shortest round-trip
//! formatting, so a file can be parsed back to the exact values and two
//! runs of the same binary produce byte-identical output.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::engine::{EventRecord, RunResult, Strategy};
use crate::scenario::StationId;

fn opt<T: std::fmt::Display>(v: Option<T>) -> String {
    v.map_or_else(String::new, |x| x.to_string())
}

pub const EVENTS_HEADER: &str = "time_min,day,truck,event,stop,station,port,wait_min,battery_kwh";

pub fn events_csv(events: &[EventRecord]) -> String {
    let mut out = format!("{EVENTS_HEADER}\n");
    for e in events {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            e.time,
            e.day,
            e.truck.0,
            e.kind,
            opt(e.stop),
            opt(e.station.map(|s| s.0)),
            opt(e.port),
            opt(e.wait),
            e.battery
        );
    }
    out
}

pub const TRIPS_HEADER: &str = "strategy,truck,day,evaluation,departure_min,arrival_min,deadline_min,\
wait_min,delay_min,stops,charge_min,energy_kwh,labor_eur,electricity_eur,penalty_eur,total_eur,energy_violations";

pub fn trips_csv(results: &[RunResult]) -> String {
    let mut out = format!("{TRIPS_HEADER}\n");
    for r in results {
        for t in &r.trips {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
                r.strategy,
                t.truck.0,
                t.day,
                u8::from(t.evaluation),
                t.departure,
                t.arrival,
                t.deadline,
                t.total_wait,
                t.delay(),
                t.stops,
                t.charge_minutes,
                t.energy_charged,
                t.labor_cost,
                t.electricity_cost,
                t.penalty_cost,
                t.total_cost(),
                t.energy_violations
            );
        }
    }
    out
}

/// Per-station forecast bins at the end of a run.
pub fn forecast_csv(result: &RunResult) -> String {
    let mut out = String::from("station,bin_start_min,mean_wait_min,count\n");
    for (id, model) in &result.forecasts {
        let w = model.bin_width();
        for b in 0..model.bin_count() {
            let _ = writeln!(
                out,
                "{},{},{},{}",
                id.0,
                b as f64 * w,
                model.bin_mean(b),
                model.bin_count_at(b)
            );
        }
    }
    out
}

/// Totals for one simulated day.
#[derive(Debug, Clone, PartialEq)]
pub struct DayTotals {
    pub day: u32,
    pub evaluation: bool,
    pub trips: usize,
    pub total_wait: f64,
    pub total_delay: f64,
    pub delayed_trips: usize,
    pub mean_cost: f64,
}

pub fn day_totals(result: &RunResult) -> Vec<DayTotals> {
    let mut days: Vec<DayTotals> = (0..result.days)
        .map(|day| DayTotals {
            day,
            evaluation: day >= result.collection_days,
            trips: 0,
            total_wait: 0.0,
            total_delay: 0.0,
            delayed_trips: 0,
            mean_cost: 0.0,
        })
        .collect();
    for t in &result.trips {
        let d = &mut days[t.day as usize];
        d.trips += 1;
        d.total_wait += t.total_wait;
        d.total_delay += t.delay();
        d.delayed_trips += usize::from(t.delay() > 0.0);
        d.mean_cost += t.total_cost();
    }
    for d in &mut days {
        if d.trips > 0 {
            d.mean_cost /= d.trips as f64;
        }
    }
    days
}

pub fn daily_csv(results: &[RunResult]) -> String {
    let mut out = String::from(
        "strategy,day,evaluation,trips,total_wait_min,total_delay_min,cumulative_delay_min,delayed_trips,mean_cost_eur\n",
    );
    for r in results {
        let mut cumulative = 0.0;
        for d in day_totals(r) {
            if d.evaluation {
                cumulative += d.total_delay;
            }
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{}",
                r.strategy,
                d.day,
                u8::from(d.evaluation),
                d.trips,
                d.total_wait,
                d.total_delay,
                cumulative,
                d.delayed_trips,
                d.mean_cost
            );
        }
    }
    out
}

/// Charging sessions and mean wait per station over evaluation days.
pub fn station_waits(result: &RunResult) -> BTreeMap<StationId, (usize, f64)> {
    let mut per: BTreeMap<StationId, (usize, f64)> = result
        .forecasts
        .iter()
        .map(|(id, _)| (*id, (0, 0.0)))
        .collect();
    for c in result.charges.iter().filter(|c| c.evaluation) {
        let e = per.entry(c.station).or_default();
        e.0 += 1;
        e.1 += c.wait;
    }
    per.into_iter()
        .map(|(id, (n, w))| (id, (n, if n == 0 { 0.0 } else { w / n as f64 })))
        .collect()
}

pub fn stations_csv(results: &[RunResult]) -> String {
    let mut out = String::from("strategy,station,charges,mean_wait_min\n");
    for r in results {
        for (id, (n, w)) in station_waits(r) {
            let _ = writeln!(out, "{},{},{},{}", r.strategy, id.0, n, w);
        }
    }
    out
}

/// Per-truck averages over evaluation trips.
pub fn trucks_csv(results: &[RunResult]) -> String {
    let mut out = String::from("strategy,truck,trips,mean_wait_min,mean_delay_min,mean_cost_eur\n");
    for r in results {
        let mut per: BTreeMap<u32, (usize, f64, f64, f64)> = BTreeMap::new();
        for t in r.evaluation_trips() {
            let e = per.entry(t.truck.0).or_default();
            e.0 += 1;
            e.1 += t.total_wait;
            e.2 += t.delay();
            e.3 += t.total_cost();
        }
        for (truck, (n, w, d, c)) in per {
            let n_f = n as f64;
            let _ = writeln!(
                out,
                "{},{},{},{},{},{}",
                r.strategy,
                truck,
                n,
                w / n_f,
                d / n_f,
                c / n_f
            );
        }
    }
    out
}

/// Daily mean wait per station over evaluation days that saw a charge.
pub fn station_daily_waits(result: &RunResult) -> BTreeMap<StationId, Vec<f64>> {
    let mut per: BTreeMap<(StationId, u32), (usize, f64)> = BTreeMap::new();
    for c in result.charges.iter().filter(|c| c.evaluation) {
        let e = per.entry((c.station, c.day)).or_default();
        e.0 += 1;
        e.1 += c.wait;
    }
    let mut out: BTreeMap<StationId, Vec<f64>> = result
        .forecasts
        .iter()
        .map(|(id, _)| (*id, Vec::new()))
        .collect();
    for ((id, _), (n, w)) in per {
        out.entry(id).or_default().push(w / n as f64);
    }
    out
}

/// Box-plot quantiles of each station's daily mean wait.
pub fn station_quantiles_csv(results: &[RunResult]) -> String {
    let mut out = String::from(
        "strategy,station,days,q1_wait_min,median_wait_min,q3_wait_min,iqr_wait_min\n",
    );
    for r in results {
        for (id, mut days) in station_daily_waits(r) {
            days.sort_by(f64::total_cmp);
            let (q1, q2, q3) = (
                quantile(&days, 0.25),
                quantile(&days, 0.5),
                quantile(&days, 0.75),
            );
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{}",
                r.strategy,
                id.0,
                days.len(),
                q1,
                q2,
                q3,
                q3 - q1
            );
        }
    }
    out
}

/// Linearly interpolated quantile of sorted data.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return 0.0;
    }
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Headline numbers for one strategy over the evaluation days.
#[derive(Debug, Clone, PartialEq)]
pub struct StrategySummary {
    pub strategy: Strategy,
    pub trips: usize,
    pub mean_wait: f64,
    pub mean_daily_wait: f64,
    pub mean_delay: f64,
    pub delayed_share: f64,
    pub mean_cost: f64,
    pub station_median_wait: f64,
    pub station_iqr_wait: f64,
    pub energy_violations: usize,
}

pub fn summarize(result: &RunResult) -> StrategySummary {
    let trips = result.evaluation_trips().count();
    let eval_days: Vec<DayTotals> = day_totals(result)
        .into_iter()
        .filter(|d| d.evaluation)
        .collect();
    let mean_daily_wait = if eval_days.is_empty() {
        0.0
    } else {
        eval_days.iter().map(|d| d.total_wait).sum::<f64>() / eval_days.len() as f64
    };
    let delayed = result
        .evaluation_trips()
        .filter(|t| t.delay() > 0.0)
        .count();
    let mut station: Vec<f64> = station_waits(result).values().map(|v| v.1).collect();
    station.sort_by(f64::total_cmp);
    StrategySummary {
        strategy: result.strategy,
        trips,
        mean_wait: result.mean_wait(),
        mean_daily_wait,
        mean_delay: result.mean_delay(),
        delayed_share: if trips == 0 {
            0.0
        } else {
            delayed as f64 / trips as f64
        },
        mean_cost: result.mean_cost(),
        station_median_wait: quantile(&station, 0.5),
        station_iqr_wait: quantile(&station, 0.75) - quantile(&station, 0.25),
        energy_violations: result.evaluation_trips().map(|t| t.energy_violations).sum(),
    }
}

/// `(x - y) · 100 / x`; 0 when the baseline is 0.
pub fn reduction_percent(baseline: f64, value: f64) -> f64 {
    if baseline == 0.0 {
        0.0
    } else {
        (baseline - value) * 100.0 / baseline
    }
}

pub fn summary_csv(results: &[RunResult]) -> String {
    let summaries: Vec<StrategySummary> = results.iter().map(summarize).collect();
    let baseline = summaries
        .iter()
        .find(|s| s.strategy == Strategy::Offline)
        .map(|s| s.mean_wait);
    let mut out = String::from(
        "strategy,trips,mean_wait_min,mean_daily_total_wait_min,mean_delay_min,delayed_share,\
mean_cost_eur,station_median_wait_min,station_iqr_wait_min,energy_violations,wait_reduction_vs_offline_pct\n",
    );
    for s in &summaries {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{}",
            s.strategy,
            s.trips,
            s.mean_wait,
            s.mean_daily_wait,
            s.mean_delay,
            s.delayed_share,
            s.mean_cost,
            s.station_median_wait,
            s.station_iqr_wait,
            s.energy_violations,
            opt(baseline.map(|b| reduction_percent(b, s.mean_wait)))
        );
    }
    out
}
