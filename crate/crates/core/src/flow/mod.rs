//! Numerical flows of model Hamiltonians and the experiments built on them.

pub mod experiments;
pub mod integrator;
pub mod report;
pub mod trajectory;

pub use experiments::{
    coupled_escape, delta_experiment, gronwall_scaling, plot_script, resonant_escape, rotating_frame_compare,
    CompareOptions, CoupledOptions, DeltaClosedForm, Experiment, FlowSettings, MethodName,
};
pub use integrator::{Method, Output};
pub use report::{Check, Criterion, ExperimentReport, Num};
pub use trajectory::{integrate, Curve, Escape, EscapeMeasure, Frame, IntegrateOptions, Trajectory};
