//! Distributed demand-flexibility control for clusters of buildings with
//! thermostatically controlled loads.
//!
//! A central [`aggregator`] plans a district target load with a learnable
//! convolutional filter, apportions the required shift across buildings and
//! is trained online with natural evolution strategies. Each building runs a
//! [`controller`] that models its thermal storage as a virtual battery
//! ([`vbattery`]), tracks the apportioned command with a small quadratic
//! program ([`qpsolver`]) and re-identifies its own parameters from prediction
//! errors. Everything runs against the self-contained cluster simulator in
//! [`simenv`], fed by synthetic data from [`dataio`] and forecasts from
//! [`forecaster`], and is scored by [`evaluation`]. [`harness`] wires the
//! pieces into complete experiments.

pub mod aggregator;
pub mod controller;
pub mod dataio;
pub mod evaluation;
pub mod forecaster;
pub mod harness;
pub mod qpsolver;
pub mod simenv;
pub mod vbattery;

mod linalg;

pub use aggregator::{AggregatorPolicy, NesConfig, NesState};
pub use controller::{BuildingController, DeviceKind, Kappa};
pub use dataio::{BuildingAttributes, BuildingType, ClusterDataset, HourlyRecord, ZoneProfile};
pub use evaluation::{CostReport, Metrics};
pub use forecaster::{ForecastBundle, LinearForecaster};
pub use harness::{ExperimentConfig, HarnessError, RunOutcome};
pub use qpsolver::{QpSolution, QpStatus, TrackingProblem};
pub use simenv::{EnvAction, EnvConfig, Environment};
pub use vbattery::{TrajectoryMatrices, VirtualBattery};

/// Planning horizon in hours used throughout the control stack.
pub const DEFAULT_HORIZON: usize = 12;
