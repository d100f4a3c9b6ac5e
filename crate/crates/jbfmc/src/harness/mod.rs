//! Experiment harness (config, sweeps, CSV, plots, selftest).
