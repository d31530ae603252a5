//! P1 finite elements for the nonlinear bidomain system, integrated in time as
//! an implicit-Euler gradient flow of the energy
//! `E = ∫_Ω Q_i(∇u_i) + ∫_Ω̂ Q_e(∇u_e) + ∫_Ω F(u_i − u_e, w)`.
//!
//! The tissue `Ω` may be surrounded by a passive shell `Ω̂ ∖ Ω` that conducts
//! only the extracellular potential.

pub mod config;
pub mod energy;
pub mod experiment;
pub mod fem;
pub mod linalg;
pub mod mesh;
pub mod output;
pub mod physics;
pub mod stepper;

pub use config::{parse_config, render_config, RunConfig};
pub use energy::{energy_eval, EnergyReport, TauInnerProduct};
pub use experiment::Experiment;
pub use mesh::TriMesh;
pub use physics::{BidomainLaws, FluxLaw, IonicModel, Tensor2};
pub use stepper::{State, StepConfig, Stepper, StimulusSpec, Trajectory};
