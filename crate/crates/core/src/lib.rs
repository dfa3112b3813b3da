//! Distributed charging coordination for electric trucks on highway
//! corridors: scenario model, exact plan solver, truck-side planner,
//! station-side forecasting, and a discrete-event simulation engine.

pub mod engine;
pub mod planner;
pub mod report;
pub mod scenario;
pub mod solver;
pub mod station;
