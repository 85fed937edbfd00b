//! Population-composition control: chemostat co-cultures actuated through
//! the dilution rate, the dual-chamber reactor actuated through the transfer
//! rate, and the coupling of reactor densities into the consortium model.

pub mod control;
pub mod coupling;
pub mod growth;
pub mod reactor;
pub mod sim;

pub use control::{switching_controller, BiomassBand, CompositionController, CompositionKind, SwitchingPolicy};
pub use coupling::{couple_composition, simulate_coupled, CoupledModel, CoupledTrace, Coupling};
pub use growth::GrowthLaw;
pub use reactor::{chemostat_rhs, dual_chamber_rhs, ReactorState, Reservoir, Topology};
pub use sim::{simulate, simulate_constant, CompositionSample, CompositionTrace, Injection, Measurement, ReactorConfig};
