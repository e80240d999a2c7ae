pub mod event_data;
pub mod model;
pub mod statistics;
pub mod sampler;
pub mod bf_tests;
pub mod simulator;
pub mod fit_diagnostics;
pub mod config;
pub mod fit;
