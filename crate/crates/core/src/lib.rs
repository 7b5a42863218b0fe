//! Financial instruction-tuning benchmark: corpus ingestion, instruction
//! construction, phase mixing, scoring, reporting and run orchestration.

pub mod corpus;
pub mod fixtures;
pub mod gold;
pub mod instruct;
pub mod io;
pub mod mixer;
pub mod report;
pub mod runner;
pub mod scorer;
pub mod seed;
pub mod task;
