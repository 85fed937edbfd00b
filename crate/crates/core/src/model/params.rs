use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Versioned default parameter file shipped with the crate.
pub const NOMINAL_PARAMS_TOML: &str = include_str!("../../defaults/nominal.toml");

/// Rate constants and Hill parameters of the two-population closed loop.
///
/// Concentrations are in arbitrary units (a.u.), times in minutes, lengths in
/// µm. Population densities `n_c`, `n_t` are volume fractions: total cell
/// volume per culture volume.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConsortiumParams {
    /// Z1 production per unit reference (conc·min⁻¹ per conc of Y_d).
    pub mu: f64,
    /// Z2 activation by the intracellular feedback signal (min⁻¹).
    pub theta: f64,
    /// Z1/Z2 sequestration rate (conc⁻¹·min⁻¹).
    pub gamma_z: f64,
    /// Dilution rate shared by all intracellular species (min⁻¹).
    pub gamma: f64,
    /// Control-signal production per unit free Z1 (min⁻¹).
    pub beta_u: f64,
    /// Feedback-signal production per unit X_c (min⁻¹).
    pub beta_x: f64,
    /// Membrane exchange rate of the closed-loop QS species (min⁻¹).
    pub eta: f64,
    /// Sender membrane exchange rate of a standalone QS channel (min⁻¹).
    pub eta_s: f64,
    /// Receiver membrane exchange rate of a standalone QS channel (min⁻¹).
    pub eta_r: f64,
    /// Intracellular QS loss in a standalone channel (min⁻¹).
    pub gamma_q: f64,
    /// Extracellular QS degradation (min⁻¹).
    pub gamma_e: f64,
    /// Spatial diffusion coefficient of extracellular QS (µm²·min⁻¹).
    pub diffusion: f64,
    /// Basal expression of X_c (conc·min⁻¹).
    pub alpha_0: f64,
    /// Maximal expression of X_c (conc·min⁻¹).
    pub alpha_max: f64,
    /// Hill dissociation constant (conc).
    pub k_u: f64,
    /// Hill coefficient.
    pub n_u: f64,
    /// Controller density (volume fraction).
    pub n_c: f64,
    /// Target density (volume fraction).
    pub n_t: f64,
}

impl Default for ConsortiumParams {
    fn default() -> Self {
        Self::nominal()
    }
}

/// Names accepted by [`ConsortiumParams::get`] / [`ConsortiumParams::set`].
pub const PARAM_NAMES: [&str; 18] = [
    "mu", "theta", "gamma_z", "gamma", "beta_u", "beta_x", "eta", "eta_s", "eta_r", "gamma_q",
    "gamma_e", "diffusion", "alpha_0", "alpha_max", "k_u", "n_u", "n_c", "n_t",
];

/// Parameters living in target cells.
pub const TARGET_SIDE: [&str; 4] = ["alpha_max", "k_u", "n_u", "beta_x"];

#[derive(Deserialize)]
struct ParamFile {
    version: u32,
    params: ConsortiumParams,
}

impl ConsortiumParams {
    /// The calibrated nominal set from `defaults/nominal.toml`.
    pub fn nominal() -> Self {
        Self::from_toml_str(NOMINAL_PARAMS_TOML).expect("embedded nominal parameter file is valid")
    }

    /// Parses a parameter file (`version = 1` plus a `[params]` table).
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let file: ParamFile = toml::from_str(text).map_err(|e| crate::harness::config::parse_error(text, &e))?;
        if file.version != 1 {
            return Err(Error::validation(
                "version",
                format!("unsupported parameter file version {}", file.version),
            ));
        }
        file.params.validate()?;
        Ok(file.params)
    }

    pub fn validate(&self) -> Result<()> {
        for name in PARAM_NAMES {
            let v = self.get(name).unwrap_or(f64::NAN);
            if !v.is_finite() || v < 0.0 {
                return Err(Error::ParameterDomain {
                    name,
                    value: v,
                    reason: "must be finite and non-negative",
                });
            }
        }
        if self.k_u <= 0.0 {
            return Err(Error::ParameterDomain {
                name: "k_u",
                value: self.k_u,
                reason: "dissociation constant must be positive",
            });
        }
        if self.n_u < 1.0 {
            return Err(Error::ParameterDomain {
                name: "n_u",
                value: self.n_u,
                reason: "Hill coefficient must be at least 1",
            });
        }
        if self.alpha_max < self.alpha_0 {
            return Err(Error::ParameterDomain {
                name: "alpha_max",
                value: self.alpha_max,
                reason: "maximal expression must not be below basal expression",
            });
        }
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        Some(match name {
            "mu" => self.mu,
            "theta" => self.theta,
            "gamma_z" => self.gamma_z,
            "gamma" => self.gamma,
            "beta_u" => self.beta_u,
            "beta_x" => self.beta_x,
            "eta" => self.eta,
            "eta_s" => self.eta_s,
            "eta_r" => self.eta_r,
            "gamma_q" => self.gamma_q,
            "gamma_e" => self.gamma_e,
            "diffusion" => self.diffusion,
            "alpha_0" => self.alpha_0,
            "alpha_max" => self.alpha_max,
            "k_u" => self.k_u,
            "n_u" => self.n_u,
            "n_c" => self.n_c,
            "n_t" => self.n_t,
            _ => return None,
        })
    }

    pub fn set(&mut self, name: &str, value: f64) -> Result<()> {
        let slot = match name {
            "mu" => &mut self.mu,
            "theta" => &mut self.theta,
            "gamma_z" => &mut self.gamma_z,
            "gamma" => &mut self.gamma,
            "beta_u" => &mut self.beta_u,
            "beta_x" => &mut self.beta_x,
            "eta" => &mut self.eta,
            "eta_s" => &mut self.eta_s,
            "eta_r" => &mut self.eta_r,
            "gamma_q" => &mut self.gamma_q,
            "gamma_e" => &mut self.gamma_e,
            "diffusion" => &mut self.diffusion,
            "alpha_0" => &mut self.alpha_0,
            "alpha_max" => &mut self.alpha_max,
            "k_u" => &mut self.k_u,
            "n_u" => &mut self.n_u,
            "n_c" => &mut self.n_c,
            "n_t" => &mut self.n_t,
            _ => return Err(Error::validation(name, "unknown parameter name")),
        };
        *slot = value;
        Ok(())
    }

    /// Copy with a controller:target ratio applied at fixed target density.
    pub fn with_ratio(&self, controller_per_target: f64) -> Self {
        Self {
            n_c: self.n_t * controller_per_target,
            ..*self
        }
    }

    /// Parameters of the open-loop configuration: the feedback channel is
    /// severed (`theta = 0`) and Z1 is produced at the feed-forward rate
    /// `mu_ff` per unit reference.
    pub fn open_loop(&self, mu_ff: f64) -> Self {
        Self {
            theta: 0.0,
            mu: mu_ff,
            ..*self
        }
    }
}
