use serde::{Deserialize, Serialize};

use super::cell::Population;
use super::world::World;
use crate::error::{Error, Result};

/// Population statistics of one intracellular species.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PopulationSummary {
    pub tag: Population,
    pub species: String,
    pub count: usize,
    pub mean: f64,
    /// Population coefficient of variation (n denominator), 0 for a single
    /// cell or a zero mean.
    pub cv: f64,
    /// Per-cell values in id order.
    pub values: Vec<f64>,
}

/// Mean, CV and per-cell values of `species` over the cells tagged `tag`.
pub fn population_readout(world: &World, tag: Population, species: &str) -> Result<PopulationSummary> {
    let slot = tag
        .species_index(species)
        .ok_or_else(|| Error::Domain(format!("population `{}` has no species `{species}`", tag.name())))?;
    let values: Vec<f64> = world.cells.iter().filter(|c| c.tag == tag).map(|c| c.state[slot]).collect();
    summarise(tag, species, values)
}

/// Statistics of an explicit list of per-cell values.
pub fn summarise(tag: Population, species: &str, values: Vec<f64>) -> Result<PopulationSummary> {
    if values.is_empty() {
        return Err(Error::EmptyPopulation(tag.name().into()));
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let cv = if mean == 0.0 { 0.0 } else { var.sqrt() / mean.abs() };
    Ok(PopulationSummary {
        tag,
        species: species.into(),
        count: values.len(),
        mean,
        cv,
        values,
    })
}
