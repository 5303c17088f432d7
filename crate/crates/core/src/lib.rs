//! Greenhouse climate and lettuce growth simulation with an economic
//! nonlinear model predictive controller.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod actuators;
pub mod ad;
pub mod climate;
pub mod crop;
pub mod empc;
pub mod error;
pub mod external_data;
pub mod integrate;
pub mod params;
pub mod report;
pub mod scenario;
pub mod simulator;
pub mod solar;

pub use actuators::{ActuatorKind, ActuatorSet, ActuatorSpec, ControlInput, CostLedger, LEDGER_ROWS};
pub use climate::{ClimateModel, ClimateState, ExchangeLink, ExternalConditions};
pub use crop::CropParams;
pub use empc::{NempcConfig, NempcController, SolveDiagnostics};
pub use error::{Error, Result};
pub use params::{default_parameters, Compartment, CompartmentProps, EconomicParams, ParameterSet, PhysicalConstants};
pub use report::{execute, Comparison, Controller, ResultDocument, Summary};
pub use scenario::{PreparedScenario, ScenarioConfig};
pub use simulator::{run_scenario, ExogenousTrack, Policy, Trajectory};
pub use solar::{GreenhouseGeometry, Plane, SunPosition};
