use rand::Rng;
use rand_distr::{Binomial, Distribution};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::hill::hill;
use crate::model::ConsortiumParams;
use crate::ode::{implicit_pair_step, rk4_step, Rk4Scratch, StiffPair};

/// Volume per µm of cell length (µm³/µm): a 1 µm cell is the 1 µm³
/// reference volume used for density and count conversion.
pub const VOLUME_PER_LENGTH: f64 = 1.0;
/// Capsule radius (µm) used by the overlap relaxation.
pub const CELL_RADIUS: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Population {
    Controller,
    Target,
}

impl Population {
    pub fn name(&self) -> &'static str {
        match self {
            Population::Controller => "controller",
            Population::Target => "target",
        }
    }

    /// Species names in state-vector order.
    pub fn species(&self) -> &'static [&'static str] {
        match self {
            Population::Controller => &["Z1", "Z2", "Qu", "Qx"],
            Population::Target => &["Xc", "Qu", "Qx"],
        }
    }

    pub fn species_index(&self, name: &str) -> Option<usize> {
        self.species().iter().position(|s| *s == name)
    }

    /// Slot of the control-signal (Qu) and feedback-signal (Qx) species.
    pub fn qs_slots(&self) -> (usize, usize) {
        match self {
            Population::Controller => (2, 3),
            Population::Target => (1, 2),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Cell {
    pub id: u64,
    pub tag: Population,
    /// Centre (µm).
    pub x: f64,
    pub y: f64,
    /// Axis angle (rad).
    pub angle: f64,
    /// Length (µm); volume is `length · VOLUME_PER_LENGTH`.
    pub length: f64,
    /// Elongation rate (µm·min⁻¹).
    pub growth_rate: f64,
    pub division_length: f64,
    pub params: ConsortiumParams,
    /// Intracellular concentrations, layout per [`Population::species`].
    pub state: Vec<f64>,
    pub parent: Option<u64>,
    /// Number of divisions in this lineage branch (RNG stream counter).
    pub generation: u32,
}

impl Cell {
    pub fn volume(&self) -> f64 {
        self.length * VOLUME_PER_LENGTH
    }

    /// Endpoints of the capsule axis.
    pub fn segment(&self) -> ((f64, f64), (f64, f64)) {
        let half = 0.5 * (self.length - 2.0 * CELL_RADIUS).max(0.0);
        let (c, s) = (self.angle.cos(), self.angle.sin());
        ((self.x - half * c, self.y - half * s), (self.x + half * c, self.y + half * s))
    }

    /// Advances the non-exchange intracellular terms over `dt`: production,
    /// dilution, sequestration and Hill activation. Controllers treat the
    /// Z pair semi-implicitly so large windup cannot destabilise the step.
    pub fn react(&mut self, t: f64, yd: f64, dt: f64, scratch: &mut Rk4Scratch) {
        let p = self.params;
        match self.tag {
            Population::Controller => {
                let pair = |s: &[f64]| StiffPair {
                    i1: 0,
                    i2: 1,
                    prod1: p.mu * yd,
                    prod2: p.theta * s[3],
                    gamma: p.gamma,
                    gamma_z: p.gamma_z,
                };
                let (a, b) = implicit_pair_step(self.state[0], self.state[1], &pair(&self.state), 0.5 * dt);
                self.state[0] = a;
                self.state[1] = b;
                rk4_step(
                    |_, s, d| {
                        d[0] = 0.0;
                        d[1] = 0.0;
                        d[2] = p.beta_u * s[0] - p.gamma * s[2];
                        d[3] = -p.gamma * s[3];
                    },
                    t,
                    &mut self.state,
                    dt,
                    scratch,
                );
                let (a, b) = implicit_pair_step(self.state[0], self.state[1], &pair(&self.state), 0.5 * dt);
                self.state[0] = a;
                self.state[1] = b;
            }
            Population::Target => {
                rk4_step(
                    |_, s, d| {
                        d[0] = hill(s[1].max(0.0), p.alpha_0, p.alpha_max, p.k_u, p.n_u) - p.gamma * s[0];
                        d[1] = -p.gamma * s[1];
                        d[2] = p.beta_x * s[0] - p.gamma * s[2];
                    },
                    t,
                    &mut self.state,
                    dt,
                    scratch,
                );
            }
        }
        for v in self.state.iter_mut() {
            if *v < 0.0 {
                *v = 0.0;
            }
        }
    }
}

/// How intracellular molecules are shared between daughters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Partition {
    /// Each molecule goes to daughter 1 with probability equal to its
    /// volume share.
    #[default]
    Binomial,
    /// Counts split in proportion to volume, no noise.
    Proportional,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DivisionConfig {
    /// Mean division length (µm).
    pub threshold_mean: f64,
    /// Coefficient of variation of per-cell division lengths.
    pub threshold_cv: f64,
    /// Standard deviation of daughter-1's length fraction around 0.5.
    pub split_noise: f64,
    pub partition: Partition,
    /// Molecules per concentration unit per µm³ of cell volume.
    pub molecules_per_unit: f64,
}

impl Default for DivisionConfig {
    fn default() -> Self {
        DivisionConfig {
            threshold_mean: 2.0,
            threshold_cv: 0.1,
            split_noise: 0.05,
            partition: Partition::Binomial,
            molecules_per_unit: 100.0,
        }
    }
}

/// Splits a molecule amount (possibly fractional) between two daughters.
/// The integer part is partitioned binomially with success probability
/// `frac`, the fractional remainder proportionally. The two shares add to
/// the input exactly when it is an integer.
pub fn partition_count<R: Rng + ?Sized>(amount: f64, frac: f64, mode: Partition, rng: &mut R) -> (f64, f64) {
    let whole = amount.floor();
    let rem = amount - whole;
    let n = whole as u64;
    let k1 = match mode {
        Partition::Binomial if n > 0 && frac > 0.0 && frac < 1.0 => {
            Binomial::new(n, frac).expect("valid binomial").sample(rng) as f64
        }
        Partition::Binomial => (n as f64 * frac).round(),
        Partition::Proportional => n as f64 * frac,
    };
    let d1 = k1 + rem * frac;
    let d2 = (whole - k1) + (rem - rem * frac);
    (d1, d2)
}

/// Divides `cell` end-to-end along its axis. `next_id` supplies the two
/// daughter ids. Errors if the cell is below its division length.
pub fn divide<R: Rng + ?Sized>(
    cell: &Cell,
    cfg: &DivisionConfig,
    next_id: &mut u64,
    rng: &mut R,
) -> Result<(Cell, Cell)> {
    if cell.length < cell.division_length {
        return Err(Error::Contract(format!(
            "cell {} divided at length {} below its threshold {}",
            cell.id, cell.length, cell.division_length
        )));
    }
    let mut frac = 0.5;
    if cfg.split_noise > 0.0 {
        let z: f64 = rand_distr::StandardNormal.sample(rng);
        frac = (0.5 + cfg.split_noise * z).clamp(0.2, 0.8);
    }
    let v = cell.volume();
    let (v1, v2) = (v * frac, v * (1.0 - frac));
    let mut s1 = vec![0.0; cell.state.len()];
    let mut s2 = vec![0.0; cell.state.len()];
    for (k, &c) in cell.state.iter().enumerate() {
        let count = c * v * cfg.molecules_per_unit;
        let (n1, n2) = partition_count(count, frac, cfg.partition, rng);
        s1[k] = n1 / (v1 * cfg.molecules_per_unit);
        s2[k] = n2 / (v2 * cfg.molecules_per_unit);
    }
    let l1 = cell.length * frac;
    let l2 = cell.length - l1;
    let (c, s) = (cell.angle.cos(), cell.angle.sin());
    // Daughter centres sit at the centres of the two halves of the mother.
    let off1 = -0.5 * cell.length + 0.5 * l1;
    let off2 = 0.5 * cell.length - 0.5 * l2;
    let threshold = |rng: &mut R| {
        if cfg.threshold_cv > 0.0 {
            let z: f64 = rand_distr::StandardNormal.sample(rng);
            (cfg.threshold_mean * (1.0 + cfg.threshold_cv * z)).max(cfg.threshold_mean * 0.5)
        } else {
            cfg.threshold_mean
        }
    };
    let mk = |id: u64, len: f64, off: f64, state: Vec<f64>, div: f64| Cell {
        id,
        tag: cell.tag,
        x: cell.x + off * c,
        y: cell.y + off * s,
        angle: cell.angle,
        length: len,
        growth_rate: cell.growth_rate,
        division_length: div,
        params: cell.params,
        state,
        parent: Some(cell.id),
        generation: cell.generation + 1,
    };
    let id1 = *next_id;
    let id2 = *next_id + 1;
    *next_id += 2;
    let d1 = threshold(rng);
    let d2 = threshold(rng);
    Ok((mk(id1, l1, off1, s1, d1), mk(id2, l2, off2, s2, d2)))
}
