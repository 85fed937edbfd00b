//! Spatial agent engine: individual rod-shaped cells with heterogeneous
//! parameters growing and dividing in a 2-D chamber, coupled to lattice
//! fields of the two extracellular QS species.
//!
//! One step runs four phases in fixed order: field diffusion and decay,
//! membrane exchange between each cell and its grid cell, intracellular
//! reactions, then growth, division and overlap relaxation.

pub mod cell;
pub mod export;
pub mod field;
pub mod readout;
pub mod world;

pub use cell::{divide, Cell, DivisionConfig, Partition, Population};
pub use field::{Boundaries, Boundary, Field};
pub use readout::{population_readout, PopulationSummary};
pub use world::{Placement, World, WorldConfig};

use crate::error::Result;

/// One recorded sample of an agent run.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentSample {
    pub t: f64,
    pub controllers: usize,
    pub targets: usize,
    pub yd: f64,
    pub mean_xc: f64,
    pub cv_xc: f64,
    pub mean_qu_e: f64,
    pub mean_qx_e: f64,
}

impl AgentSample {
    pub const HEADER: [&'static str; 8] =
        ["t", "controllers", "targets", "Yd", "mean_Xc", "cv_Xc", "mean_Qu_e", "mean_Qx_e"];

    pub fn of(world: &World) -> Result<Self> {
        let xc = population_readout(world, Population::Target, "Xc")?;
        let n_c = world.cells.iter().filter(|c| c.tag == Population::Controller).count();
        let cells = (world.qu.data.len()) as f64;
        Ok(AgentSample {
            t: world.t,
            controllers: n_c,
            targets: xc.count,
            yd: world.reference.value_at(world.t),
            mean_xc: xc.mean,
            cv_xc: xc.cv,
            mean_qu_e: world.qu.total() / cells,
            mean_qx_e: world.qx.total() / cells,
        })
    }
}

/// Runs `world` to `horizon`, sampling every `every` minutes (rounded to
/// whole steps), including t = 0 and the end point.
pub fn run_recording(world: &mut World, horizon: f64, every: f64) -> Result<Vec<AgentSample>> {
    let stride = ((every / world.config.dt).round() as u64).max(1);
    let mut out = vec![AgentSample::of(world)?];
    while world.t + 0.5 * world.config.dt < horizon {
        world.step()?;
        if world.steps.is_multiple_of(stride) || world.t + 0.5 * world.config.dt >= horizon {
            out.push(AgentSample::of(world)?);
        }
    }
    Ok(out)
}
