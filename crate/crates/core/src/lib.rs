//! Pseudo-spectral simulation of the 2D stochastic Navier-Stokes equations on a
//! periodic torus with spectrally colored additive noise, and spectral
//! estimators of the viscosity from a single observed sample path.

pub mod basis;
pub mod config;
pub mod error;
pub mod estimators;
pub mod io;
mod fft;
pub mod linear;
pub mod noise;
pub mod nse;
pub mod experiments;
pub mod stats;
pub mod trajectory;

pub use basis::{project, project_complement, Parity, SpectralState, StokesBasis, StokesMode, TorusSpec, VelocityField};
pub use error::{Error, Result};
pub use estimators::{EstimatorConfig, EstimatorKind, EstimatorResult, PathStatistics, Regime, TheoreticalVariance};
pub use linear::{ou_exact_step, ou_time_integral_moments, simulate_linear, OuParams};
pub use noise::{color, sample_increments, NoiseIncrementBlock, NoiseSpec};
pub use nse::{nonlinear_term, simulate, sobolev_norm, step_spde, InitialCondition, NonlinearOperator, Solver, SolverConfig};
pub use trajectory::Trajectory;
pub use config::{parse_config, ParsedConfig, ResolvedConfig};
pub use io::{write_report, ReportFormat, RunManifest};
