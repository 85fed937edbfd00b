use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Behaviour of one domain edge for the extracellular fields.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Boundary {
    #[default]
    NoFlux,
    /// Zero-concentration ghost layer: molecules crossing the edge are lost.
    OpenOutflow,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Boundaries {
    pub left: Boundary,
    pub right: Boundary,
    pub bottom: Boundary,
    pub top: Boundary,
}

impl Boundaries {
    pub fn no_flux() -> Self {
        Self::default()
    }

    /// The chamber default: open right edge, closed elsewhere.
    pub fn chamber() -> Self {
        Boundaries {
            right: Boundary::OpenOutflow,
            ..Self::default()
        }
    }

    pub fn any_open(&self) -> bool {
        [self.left, self.right, self.bottom, self.top].contains(&Boundary::OpenOutflow)
    }
}

/// Extracellular concentration of one QS species on a regular lattice.
/// Row-major, `data[j * nx + i]` is the grid cell at column i, row j.
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    pub nx: usize,
    pub ny: usize,
    /// Grid spacing (µm).
    pub h: f64,
    pub data: Vec<f64>,
}

impl Field {
    pub fn new(nx: usize, ny: usize, h: f64) -> Result<Self> {
        if nx == 0 || ny == 0 || !(h > 0.0) {
            return Err(Error::Geometry(format!("lattice {nx}x{ny} with spacing {h} is empty")));
        }
        Ok(Field {
            nx,
            ny,
            h,
            data: vec![0.0; nx * ny],
        })
    }

    pub fn uniform(nx: usize, ny: usize, h: f64, value: f64) -> Result<Self> {
        let mut f = Self::new(nx, ny, h)?;
        f.data.fill(value);
        Ok(f)
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.data[j * self.nx + i]
    }

    /// Σ concentration over grid cells (multiply by the grid-cell volume
    /// for a molecule amount).
    pub fn total(&self) -> f64 {
        // Pairwise summation keeps the conservation check at round-off.
        pairwise_sum(&self.data)
    }

    pub fn max(&self) -> f64 {
        self.data.iter().cloned().fold(0.0, f64::max)
    }

    /// Largest stable explicit step for diffusion coefficient `theta`.
    pub fn stability_limit(h: f64, theta: f64) -> f64 {
        if theta <= 0.0 {
            f64::INFINITY
        } else {
            h * h / (4.0 * theta)
        }
    }

    /// One explicit FTCS step of Θ∇²Q followed by exact decay at `gamma_e`.
    ///
    /// Interior fluxes are computed once per face and applied with opposite
    /// signs, so with no-flux edges and no decay the total is conserved to
    /// round-off.
    pub fn diffuse(&mut self, theta: f64, gamma_e: f64, dt: f64, bc: &Boundaries, scratch: &mut Vec<f64>) {
        let (nx, ny) = (self.nx, self.ny);
        if theta > 0.0 && nx * ny > 1 {
            let r = theta * dt / (self.h * self.h);
            scratch.clear();
            scratch.extend_from_slice(&self.data);
            let old = &*scratch;
            let d = &mut self.data;
            // Horizontal faces.
            for j in 0..ny {
                let row = j * nx;
                for i in 0..nx - 1 {
                    let flux = r * (old[row + i + 1] - old[row + i]);
                    d[row + i] += flux;
                    d[row + i + 1] -= flux;
                }
            }
            // Vertical faces.
            for j in 0..ny - 1 {
                let (a, b) = (j * nx, (j + 1) * nx);
                for i in 0..nx {
                    let flux = r * (old[b + i] - old[a + i]);
                    d[a + i] += flux;
                    d[b + i] -= flux;
                }
            }
            // Open edges: flux to a zero ghost cell.
            if bc.left == Boundary::OpenOutflow {
                for j in 0..ny {
                    d[j * nx] -= r * old[j * nx];
                }
            }
            if bc.right == Boundary::OpenOutflow {
                for j in 0..ny {
                    d[j * nx + nx - 1] -= r * old[j * nx + nx - 1];
                }
            }
            if bc.bottom == Boundary::OpenOutflow {
                for i in 0..nx {
                    d[i] -= r * old[i];
                }
            }
            if bc.top == Boundary::OpenOutflow {
                for i in 0..nx {
                    d[(ny - 1) * nx + i] -= r * old[(ny - 1) * nx + i];
                }
            }
        }
        if gamma_e > 0.0 {
            let decay = (-gamma_e * dt).exp();
            for v in self.data.iter_mut() {
                *v *= decay;
            }
        }
        for v in self.data.iter_mut() {
            if *v < 0.0 {
                *v = 0.0;
            }
        }
    }
}

pub(crate) fn pairwise_sum(v: &[f64]) -> f64 {
    if v.len() <= 32 {
        return v.iter().sum();
    }
    let mid = v.len() / 2;
    pairwise_sum(&v[..mid]) + pairwise_sum(&v[mid..])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_field_is_unchanged() {
        let mut f = Field::uniform(20, 10, 5.0, 3.25).unwrap();
        let mut s = Vec::new();
        let dt = Field::stability_limit(5.0, 100.0);
        for _ in 0..100 {
            f.diffuse(100.0, 0.0, dt, &Boundaries::no_flux(), &mut s);
        }
        assert!(f.data.iter().all(|&v| v == 3.25));
    }

    #[test]
    fn point_source_spreads_symmetrically() {
        let mut f = Field::new(11, 11, 1.0).unwrap();
        f.data[5 * 11 + 5] = 1.0;
        let mut s = Vec::new();
        for _ in 0..20 {
            f.diffuse(0.2, 0.0, 1.0, &Boundaries::no_flux(), &mut s);
        }
        assert!((f.at(4, 5) - f.at(6, 5)).abs() < 1e-15);
        assert!((f.at(5, 4) - f.at(5, 6)).abs() < 1e-15);
        assert!((f.total() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn open_edge_loses_mass() {
        let mut f = Field::uniform(10, 4, 1.0, 1.0).unwrap();
        let mut s = Vec::new();
        f.diffuse(0.2, 0.0, 1.0, &Boundaries::chamber(), &mut s);
        assert!(f.total() < 40.0);
    }

    #[test]
    fn decay_is_exact() {
        let mut f = Field::uniform(3, 3, 1.0, 2.0).unwrap();
        let mut s = Vec::new();
        f.diffuse(0.0, 0.5, 2.0, &Boundaries::no_flux(), &mut s);
        assert!((f.at(1, 1) - 2.0 * (-1.0f64).exp()).abs() < 1e-15);
    }
}
