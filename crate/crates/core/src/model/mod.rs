//! Domain types, parameters and right-hand sides shared by every engine.

pub mod hill;
pub mod params;
pub mod reference;
pub mod rhs;
pub mod state;

pub use hill::{hill, hill_activation};
pub use params::{ConsortiumParams, NOMINAL_PARAMS_TOML, PARAM_NAMES, TARGET_SIDE};
pub use reference::ReferenceSignal;
pub use rhs::{closed_loop_rhs, qs_channel_rhs, LoopMode};
pub use state::{AggregateState, QsChannelState, STATE_DIM, STATE_NAMES};
