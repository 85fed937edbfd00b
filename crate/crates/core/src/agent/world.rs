use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::cell::{divide, Cell, DivisionConfig, Population, CELL_RADIUS, VOLUME_PER_LENGTH};
use super::field::{pairwise_sum, Boundaries, Boundary, Field};
use crate::aggregate::{initial_state, InitialCondition};
use crate::error::{Error, Result};
use crate::model::rhs::LoopMode;
use crate::model::{AggregateState, ConsortiumParams, ReferenceSignal};
use crate::ode::Rk4Scratch;

/// Depth of the quasi-2-D chamber (µm); grid-cell volume is h²·depth.
pub const DOMAIN_DEPTH: f64 = 1.0;

/// Initial seeding of the two populations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Placement {
    /// Both populations uniformly over the whole domain.
    Mixed { controllers: usize, targets: usize },
    /// Controller and target discs of radius `radius` whose centres lie
    /// `distance` apart on the horizontal mid-line of the domain.
    Separated {
        controllers: usize,
        targets: usize,
        distance: f64,
        radius: f64,
    },
}

impl Placement {
    pub fn counts(&self) -> (usize, usize) {
        match *self {
            Placement::Mixed { controllers, targets } | Placement::Separated { controllers, targets, .. } => {
                (controllers, targets)
            }
        }
    }
}

impl Default for Placement {
    fn default() -> Self {
        Placement::Mixed {
            controllers: 250,
            targets: 250,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WorldConfig {
    /// Domain size (µm).
    pub width: f64,
    pub height: f64,
    pub boundaries: Boundaries,
    /// Agent step (min).
    pub dt: f64,
    /// Lattice spacing (µm); ignored when `well_mixed`.
    pub grid_spacing: f64,
    /// Replace the lattice by a single well-mixed compartment.
    pub well_mixed: bool,
    /// Diffusion sub-steps per agent step. `None` picks the smallest count
    /// meeting the explicit stability bound.
    pub diffusion_substeps: Option<usize>,
    pub division: DivisionConfig,
    /// Mean elongation rate (µm·min⁻¹); 0 disables growth and division.
    pub growth_rate: f64,
    /// Length of seeded cells (µm).
    pub initial_length: f64,
    /// Log-normal coefficient of variation of per-cell parameters.
    pub heterogeneity_cv: f64,
    /// Maximum number of cells.
    pub capacity: usize,
    /// Resolve capsule overlaps after every step.
    pub mechanics: bool,
    pub relax_iterations: usize,
    pub seed: u64,
    pub placement: Placement,
    pub initial: InitialCondition,
}

impl Default for WorldConfig {
    fn default() -> Self {
        WorldConfig {
            width: 100.0,
            height: 100.0,
            boundaries: Boundaries::chamber(),
            dt: 0.05,
            grid_spacing: 10.0,
            well_mixed: false,
            diffusion_substeps: None,
            division: DivisionConfig::default(),
            growth_rate: 0.0,
            initial_length: 1.0,
            heterogeneity_cv: 0.2,
            capacity: 20_000,
            mechanics: true,
            relax_iterations: 4,
            seed: 0,
            placement: Placement::default(),
            initial: InitialCondition::Basal,
        }
    }
}

impl WorldConfig {
    /// Lattice dimensions (nx, ny) and spacings (dx, dy).
    pub fn lattice(&self) -> Result<(usize, usize, f64, f64)> {
        if self.well_mixed {
            return Ok((1, 1, self.width, self.height));
        }
        let h = self.grid_spacing;
        let nx = (self.width / h).round();
        let ny = (self.height / h).round();
        if nx < 1.0 || ny < 1.0 || (nx * h - self.width).abs() > 1e-9 * self.width
            || (ny * h - self.height).abs() > 1e-9 * self.height
        {
            return Err(Error::Geometry(format!(
                "domain {}x{} µm is not a whole number of {h} µm grid cells",
                self.width, self.height
            )));
        }
        Ok((nx as usize, ny as usize, h, h))
    }

    /// Largest diffusion sub-step allowed for coefficient `theta`.
    pub fn stability_limit(&self, theta: f64) -> f64 {
        if self.well_mixed {
            f64::INFINITY
        } else {
            Field::stability_limit(self.grid_spacing, theta)
        }
    }

    /// Number of diffusion sub-steps per agent step.
    pub fn substeps(&self, theta: f64) -> usize {
        match self.diffusion_substeps {
            Some(n) => n,
            None => {
                let lim = self.stability_limit(theta);
                if lim.is_finite() {
                    ((self.dt / lim) * (1.0 + 1e-12)).ceil().max(1.0) as usize
                } else {
                    1
                }
            }
        }
    }

    pub fn validate(&self, p: &ConsortiumParams) -> Result<()> {
        let pos = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::validation(name, format!("must be positive and finite, got {v}")))
            }
        };
        pos("width", self.width)?;
        pos("height", self.height)?;
        pos("dt", self.dt)?;
        pos("grid_spacing", self.grid_spacing)?;
        pos("initial_length", self.initial_length)?;
        pos("division.molecules_per_unit", self.division.molecules_per_unit)?;
        pos("division.threshold_mean", self.division.threshold_mean)?;
        if !(self.growth_rate >= 0.0) {
            return Err(Error::validation("growth_rate", "must be non-negative"));
        }
        if !(0.0..1.0).contains(&self.heterogeneity_cv) {
            return Err(Error::validation("heterogeneity_cv", "must lie in [0, 1)"));
        }
        if self.initial_length > self.division.threshold_mean {
            return Err(Error::validation("initial_length", "exceeds the division threshold"));
        }
        self.lattice()?;
        if let Some(n) = self.diffusion_substeps {
            if n == 0 {
                return Err(Error::validation("diffusion_substeps", "must be at least 1"));
            }
            let lim = self.stability_limit(p.diffusion);
            let sub = self.dt / n as f64;
            if sub > lim * (1.0 + 1e-12) {
                return Err(Error::Config(format!(
                    "diffusion sub-step {sub} min exceeds the stability bound h²/(4Θ) = {lim} min; \
                     use at least {} sub-steps or a smaller dt",
                    (self.dt / lim).ceil()
                )));
            }
        }
        let (c, t) = self.placement.counts();
        if c + t > self.capacity {
            return Err(Error::Config(format!("{} seeded cells exceed the capacity {}", c + t, self.capacity)));
        }
        if let Placement::Separated { distance, radius, .. } = self.placement {
            if !(distance >= 0.0) || !(radius > 0.0) {
                return Err(Error::Geometry(format!("separation {distance} and radius {radius} must be non-negative")));
            }
            if distance + 2.0 * radius > self.width || 2.0 * radius > self.height {
                return Err(Error::Geometry(format!(
                    "two discs of radius {radius} µm at separation {distance} µm do not fit in {}x{} µm",
                    self.width, self.height
                )));
            }
        }
        Ok(())
    }
}

/// Running record of the membrane-exchange conservation check.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ExchangeLedger {
    /// Relative change of total QS amount across the exchange phase in the
    /// most recent step, per species (Qu, Qx).
    pub last: [f64; 2],
    /// Largest value of `last` seen so far.
    pub worst: f64,
    pub steps: u64,
}

impl ExchangeLedger {
    pub fn balanced(&self, tol: f64) -> bool {
        self.worst <= tol
    }
}

/// The spatial consortium: cells, extracellular fields and the clock.
#[derive(Debug, Clone)]
pub struct World {
    pub config: WorldConfig,
    pub params: ConsortiumParams,
    pub reference: ReferenceSignal,
    pub t: f64,
    pub steps: u64,
    /// Living cells, always sorted by id.
    pub cells: Vec<Cell>,
    pub qu: Field,
    pub qx: Field,
    pub ledger: ExchangeLedger,
    pub warnings: Vec<String>,
    next_id: u64,
    dx: f64,
    dy: f64,
    substeps: usize,
    scratch: Vec<f64>,
    capped: bool,
}

fn mix_seed(seed: u64, a: u64, b: u64) -> u64 {
    // SplitMix64 finaliser over a simple combination.
    let mut z = seed ^ a.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ b.wrapping_mul(0xD1B5_4A32_D192_ED03);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// RNG stream of one cell at one point of its lineage.
pub fn cell_rng(seed: u64, id: u64, counter: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(mix_seed(seed, id.wrapping_add(1), counter))
}

impl World {
    /// Seeds a world per `config.placement`. Intracellular and field values
    /// start from the aggregate steady state at Y_d = 0 (or zero) evaluated
    /// at the seeded densities.
    pub fn new(config: WorldConfig, params: ConsortiumParams, reference: ReferenceSignal) -> Result<Self> {
        params.validate()?;
        reference.validate()?;
        config.validate(&params)?;
        let (nx, ny, dx, dy) = config.lattice()?;
        let mut world = World {
            config,
            params,
            reference,
            t: 0.0,
            steps: 0,
            cells: Vec::new(),
            qu: Field::new(nx, ny, dx)?,
            qx: Field::new(nx, ny, dx)?,
            ledger: ExchangeLedger::default(),
            warnings: Vec::new(),
            next_id: 0,
            dx,
            dy,
            substeps: config.substeps(params.diffusion),
            scratch: Vec::new(),
            capped: false,
        };
        world.seed_cells()?;
        world.initialise_state()?;
        Ok(world)
    }

    fn seed_cells(&mut self) -> Result<()> {
        let cfg = self.config;
        let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(cfg.seed, 0, u64::MAX));
        let (n_c, n_t) = cfg.placement.counts();
        let (w, h) = (cfg.width, cfg.height);
        let spot = |rng: &mut ChaCha8Rng, centre: Option<(f64, f64, f64)>| match centre {
            None => (rng.random::<f64>() * w, rng.random::<f64>() * h),
            Some((cx, cy, r)) => {
                let rad = r * rng.random::<f64>().sqrt();
                let phi = std::f64::consts::TAU * rng.random::<f64>();
                (cx + rad * phi.cos(), cy + rad * phi.sin())
            }
        };
        let discs = match cfg.placement {
            Placement::Mixed { .. } => (None, None),
            Placement::Separated { distance, radius, .. } => {
                let (cx, cy) = (0.5 * w, 0.5 * h);
                (
                    Some((cx - 0.5 * distance, cy, radius)),
                    Some((cx + 0.5 * distance, cy, radius)),
                )
            }
        };
        for (tag, count, disc) in [(Population::Controller, n_c, discs.0), (Population::Target, n_t, discs.1)] {
            for _ in 0..count {
                let (x, y) = spot(&mut rng, disc);
                let angle = std::f64::consts::PI * rng.random::<f64>();
                let params = perturb(&self.params, tag, cfg.heterogeneity_cv, &mut rng);
                let division_length = if cfg.division.threshold_cv > 0.0 {
                    let z: f64 = rand_distr::StandardNormal.sample(&mut rng);
                    (cfg.division.threshold_mean * (1.0 + cfg.division.threshold_cv * z))
                        .max(cfg.division.threshold_mean * 0.5)
                        .max(cfg.initial_length)
                } else {
                    cfg.division.threshold_mean
                };
                let growth_rate = cfg.growth_rate;
                let cell = Cell {
                    id: self.next_id,
                    tag,
                    x,
                    y,
                    angle,
                    length: cfg.initial_length,
                    growth_rate,
                    division_length,
                    params,
                    state: vec![0.0; tag.species().len()],
                    parent: None,
                    generation: 0,
                };
                self.next_id += 1;
                self.cells.push(cell);
            }
        }
        Ok(())
    }

    fn initialise_state(&mut self) -> Result<()> {
        if self.config.initial == InitialCondition::Zero || self.cells.is_empty() {
            return Ok(());
        }
        let (n_c, n_t) = self.densities();
        let p = ConsortiumParams {
            n_c: n_c.max(1e-12),
            n_t: n_t.max(1e-12),
            ..self.params
        };
        let s: AggregateState = initial_state(&p, LoopMode::Closed, self.config.initial)?;
        self.qu.data.fill(s.qu_e);
        self.qx.data.fill(s.qx_e);
        for c in &mut self.cells {
            c.state = match c.tag {
                Population::Controller => vec![s.z1, s.z2, s.qu_i, s.qx_i],
                Population::Target => vec![s.xc, s.qu_t, s.qx_t],
            };
        }
        Ok(())
    }

    /// Volume fractions (n_c, n_t) of the two populations over the domain.
    pub fn densities(&self) -> (f64, f64) {
        let total = self.config.width * self.config.height * DOMAIN_DEPTH;
        let mut v = [0.0, 0.0];
        for c in &self.cells {
            v[(c.tag == Population::Target) as usize] += c.volume();
        }
        (v[0] / total, v[1] / total)
    }

    pub fn grid_volume(&self) -> f64 {
        self.dx * self.dy * DOMAIN_DEPTH
    }

    pub fn substeps(&self) -> usize {
        self.substeps
    }

    /// Lattice index of the grid cell containing (x, y).
    pub fn grid_index(&self, x: f64, y: f64) -> usize {
        let i = ((x / self.dx).floor().max(0.0) as usize).min(self.qu.nx - 1);
        let j = ((y / self.dy).floor().max(0.0) as usize).min(self.qu.ny - 1);
        j * self.qu.nx + i
    }

    /// Total amount of each QS species (Qu, Qx) in cells plus medium.
    pub fn qs_totals(&self) -> [f64; 2] {
        let vg = self.grid_volume();
        let mut out = [0.0; 2];
        for (k, field) in [&self.qu, &self.qx].into_iter().enumerate() {
            let mut terms: Vec<f64> = self
                .cells
                .iter()
                .map(|c| {
                    let (a, b) = c.tag.qs_slots();
                    c.volume() * c.state[if k == 0 { a } else { b }]
                })
                .collect();
            terms.push(field.total() * vg);
            out[k] = pairwise_sum(&terms);
        }
        out
    }

    /// Advances the world by one `dt`.
    pub fn step(&mut self) -> Result<()> {
        let dt = self.config.dt;
        self.diffuse_fields(dt);
        self.exchange(dt);
        self.react(dt)?;
        self.grow_and_divide(dt)?;
        self.t = (self.steps + 1) as f64 * dt;
        self.steps += 1;
        Ok(())
    }

    /// Steps until `t` reaches `horizon` (to within half a step).
    pub fn run_until(&mut self, horizon: f64) -> Result<()> {
        while self.t + 0.5 * self.config.dt < horizon {
            self.step()?;
        }
        Ok(())
    }

    fn diffuse_fields(&mut self, dt: f64) {
        let n = self.substeps.max(1);
        let sub = dt / n as f64;
        let (theta, ge) = (self.params.diffusion, self.params.gamma_e);
        let bc = self.config.boundaries;
        for field in [&mut self.qu, &mut self.qx] {
            for _ in 0..n {
                field.diffuse(theta, ge, sub, &bc, &mut self.scratch);
            }
        }
    }

    /// Exact pairwise relaxation of each cell with its grid cell, in id
    /// order. The amount v·q + V_g·Q_e is invariant under each update.
    fn exchange(&mut self, dt: f64) {
        let before = self.qs_totals();
        let vg = self.grid_volume();
        let idx: Vec<usize> = self.cells.iter().map(|c| self.grid_index(c.x, c.y)).collect();
        for (cell, &g) in self.cells.iter_mut().zip(&idx) {
            let v = cell.volume();
            let decay = (-cell.params.eta * (1.0 + v / vg) * dt).exp();
            let (a, b) = cell.tag.qs_slots();
            for (slot, field) in [(a, &mut self.qu), (b, &mut self.qx)] {
                let qi = cell.state[slot];
                let qe = field.data[g];
                let amount = v * qi + vg * qe;
                let diff = (qi - qe) * decay;
                let qi_new = (amount + vg * diff) / (v + vg);
                cell.state[slot] = qi_new.max(0.0);
                field.data[g] = (qi_new - diff).max(0.0);
            }
        }
        let after = self.qs_totals();
        let mut last = [0.0; 2];
        for k in 0..2 {
            let scale = before[k].abs().max(f64::MIN_POSITIVE);
            last[k] = if before[k] == 0.0 && after[k] == 0.0 { 0.0 } else { (after[k] - before[k]).abs() / scale };
        }
        self.ledger.last = last;
        self.ledger.worst = self.ledger.worst.max(last[0]).max(last[1]);
        self.ledger.steps += 1;
    }

    fn react(&mut self, dt: f64) -> Result<()> {
        let t = self.t;
        let yd = self.reference.eval(t + 0.5 * dt)?;
        self.cells
            .par_iter_mut()
            .for_each_init(Rk4Scratch::default, |scratch, cell| cell.react(t, yd, dt, scratch));
        Ok(())
    }

    fn grow_and_divide(&mut self, dt: f64) -> Result<()> {
        let cfg = self.config;
        if cfg.growth_rate > 0.0 {
            let open = cfg.boundaries.any_open();
            let mut out = Vec::with_capacity(self.cells.len() + 8);
            let mut count = self.cells.len();
            let cells = std::mem::take(&mut self.cells);
            for mut cell in cells {
                cell.length += cell.growth_rate * dt;
                if cell.length >= cell.division_length {
                    if count >= cfg.capacity && !open {
                        cell.length = cell.division_length;
                        if !self.capped {
                            self.capped = true;
                            let msg = format!("capacity {} reached at t = {:.3} min; growth paused", cfg.capacity, self.t);
                            log::warn!("{msg}");
                            self.warnings.push(msg);
                        }
                        out.push(cell);
                        continue;
                    }
                    let mut rng = cell_rng(cfg.seed, cell.id, cell.generation as u64);
                    let (d1, d2) = divide(&cell, &cfg.division, &mut self.next_id, &mut rng)?;
                    out.push(d1);
                    out.push(d2);
                    count += 1;
                } else {
                    out.push(cell);
                }
            }
            out.sort_by_key(|c| c.id);
            self.cells = out;
        }
        if cfg.mechanics {
            relax_overlaps(&mut self.cells, cfg.relax_iterations);
        }
        self.apply_boundaries();
        Ok(())
    }

    /// Washout through open edges, clamping at closed ones, and the
    /// capacity policy for open chambers.
    fn apply_boundaries(&mut self) {
        let (w, h) = (self.config.width, self.config.height);
        let bc = self.config.boundaries;
        self.cells.retain(|c| {
            !((c.x < 0.0 && bc.left == Boundary::OpenOutflow)
                || (c.x > w && bc.right == Boundary::OpenOutflow)
                || (c.y < 0.0 && bc.bottom == Boundary::OpenOutflow)
                || (c.y > h && bc.top == Boundary::OpenOutflow))
        });
        for c in &mut self.cells {
            c.x = c.x.clamp(0.0, w);
            c.y = c.y.clamp(0.0, h);
        }
        let cap = self.config.capacity;
        if self.cells.len() > cap && bc.any_open() {
            let edge_distance = |c: &Cell| {
                let mut d = f64::INFINITY;
                if bc.left == Boundary::OpenOutflow {
                    d = d.min(c.x);
                }
                if bc.right == Boundary::OpenOutflow {
                    d = d.min(w - c.x);
                }
                if bc.bottom == Boundary::OpenOutflow {
                    d = d.min(c.y);
                }
                if bc.top == Boundary::OpenOutflow {
                    d = d.min(h - c.y);
                }
                d
            };
            let mut order: Vec<(f64, u64)> = self.cells.iter().map(|c| (edge_distance(c), c.id)).collect();
            order.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            let excess = self.cells.len() - cap;
            let mut gone: Vec<u64> = order[..excess].iter().map(|x| x.1).collect();
            gone.sort_unstable();
            self.cells.retain(|c| gone.binary_search(&c.id).is_err());
        }
    }

    /// Mean of a named species over one population.
    pub fn mean_species(&self, tag: Population, species: &str) -> Result<f64> {
        super::readout::population_readout(self, tag, species).map(|s| s.mean)
    }
}

/// Log-normal, mean-preserving perturbation of the population's own
/// parameters.
fn perturb<R: Rng + ?Sized>(p: &ConsortiumParams, tag: Population, cv: f64, rng: &mut R) -> ConsortiumParams {
    let mut q = *p;
    if cv <= 0.0 {
        return q;
    }
    let dist = LogNormal::from_mean_cv(1.0, cv).expect("valid log-normal");
    let mut f = || dist.sample(rng);
    match tag {
        Population::Controller => {
            q.mu *= f();
            q.theta *= f();
            q.beta_u *= f();
        }
        Population::Target => {
            q.alpha_max *= f();
            q.beta_x *= f();
            q.k_u *= f();
        }
    }
    q
}

/// Closest points between segments p0–p1 and q0–q1; returns the squared
/// distance and the offset vector from the q point to the p point.
fn segment_offset(p0: (f64, f64), p1: (f64, f64), q0: (f64, f64), q1: (f64, f64)) -> (f64, f64) {
    let d1 = (p1.0 - p0.0, p1.1 - p0.1);
    let d2 = (q1.0 - q0.0, q1.1 - q0.1);
    let r = (p0.0 - q0.0, p0.1 - q0.1);
    let a = d1.0 * d1.0 + d1.1 * d1.1;
    let e = d2.0 * d2.0 + d2.1 * d2.1;
    let f = d2.0 * r.0 + d2.1 * r.1;
    let eps = 1e-12;
    let (s, t);
    if a <= eps && e <= eps {
        s = 0.0;
        t = 0.0;
    } else if a <= eps {
        s = 0.0;
        t = (f / e).clamp(0.0, 1.0);
    } else {
        let c = d1.0 * r.0 + d1.1 * r.1;
        if e <= eps {
            t = 0.0;
            s = (-c / a).clamp(0.0, 1.0);
        } else {
            let b = d1.0 * d2.0 + d1.1 * d2.1;
            let denom = a * e - b * b;
            let mut s0 = if denom > eps { ((b * f - c * e) / denom).clamp(0.0, 1.0) } else { 0.0 };
            let mut t0 = (b * s0 + f) / e;
            if t0 < 0.0 {
                t0 = 0.0;
                s0 = (-c / a).clamp(0.0, 1.0);
            } else if t0 > 1.0 {
                t0 = 1.0;
                s0 = ((b - c) / a).clamp(0.0, 1.0);
            }
            s = s0;
            t = t0;
        }
    }
    let cp = (p0.0 + d1.0 * s, p0.1 + d1.1 * s);
    let cq = (q0.0 + d2.0 * t, q0.1 + d2.1 * t);
    (cp.0 - cq.0, cp.1 - cq.1)
}

/// Symmetric displacement iterations resolving capsule overlaps. Pairs are
/// found with a uniform bucket grid and visited in a fixed order.
pub fn relax_overlaps(cells: &mut [Cell], iterations: usize) {
    if cells.len() < 2 {
        return;
    }
    let max_len = cells.iter().map(|c| c.length).fold(0.0, f64::max);
    let bucket = max_len + 2.0 * CELL_RADIUS;
    let min_x = cells.iter().map(|c| c.x).fold(f64::INFINITY, f64::min);
    let min_y = cells.iter().map(|c| c.y).fold(f64::INFINITY, f64::min);
    let mut shift = vec![(0.0, 0.0); cells.len()];
    for _ in 0..iterations {
        let key = |c: &Cell| (((c.x - min_x) / bucket).floor() as i64, ((c.y - min_y) / bucket).floor() as i64);
        let mut buckets: std::collections::BTreeMap<(i64, i64), Vec<usize>> = Default::default();
        for (i, c) in cells.iter().enumerate() {
            buckets.entry(key(c)).or_default().push(i);
        }
        shift.iter_mut().for_each(|s| *s = (0.0, 0.0));
        let mut any = false;
        for i in 0..cells.len() {
            let (bx, by) = key(&cells[i]);
            let (a0, a1) = cells[i].segment();
            for ox in -1..=1 {
                for oy in -1..=1 {
                    let Some(list) = buckets.get(&(bx + ox, by + oy)) else { continue };
                    for &j in list {
                        if j <= i {
                            continue;
                        }
                        let (b0, b1) = cells[j].segment();
                        let (vx, vy) = segment_offset(a0, a1, b0, b1);
                        let d2 = vx * vx + vy * vy;
                        let contact = 2.0 * CELL_RADIUS;
                        if d2 >= contact * contact {
                            continue;
                        }
                        let d = d2.sqrt();
                        let (nx, ny) = if d > 1e-9 {
                            (vx / d, vy / d)
                        } else {
                            // Coincident axes: separate along a direction fixed by the ids.
                            let phi = (mix_seed(cells[i].id, cells[j].id, 0) >> 11) as f64 / (1u64 << 53) as f64
                                * std::f64::consts::TAU;
                            (phi.cos(), phi.sin())
                        };
                        let push = 0.5 * (contact - d);
                        shift[i].0 += push * nx;
                        shift[i].1 += push * ny;
                        shift[j].0 -= push * nx;
                        shift[j].1 -= push * ny;
                        any = true;
                    }
                }
            }
        }
        if !any {
            break;
        }
        for (c, s) in cells.iter_mut().zip(&shift) {
            c.x += s.0;
            c.y += s.1;
        }
    }
}

/// Cell volume for a given length, re-exported for conversions.
pub fn cell_volume(length: f64) -> f64 {
    length * VOLUME_PER_LENGTH
}
