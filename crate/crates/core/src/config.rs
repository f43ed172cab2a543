//! Experiment configuration (TOML).
//!
//! ```toml
//! model = "semi-lattice"
//! ells = [100]
//! replicas = 20000
//! seed = 7
//!
//! [field]
//! family = "constant"
//! value = 1.0
//!
//! [limit]
//! dt = 1e-4
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::env::{EnvironmentProfile, FieldRole, ProfileFamily, ScaledField, Window};
use crate::error::{Error, Result};
use crate::lattice::half_width;
use crate::limit::{LimitSpec, Model, StepControl};
use crate::semilattice::RunOptions;

/// A profile as written in the file: a family with its named parameters and
/// an optional validation window (everywhere by default).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProfileDecl {
    #[serde(flatten)]
    pub family: ProfileFamily,
    #[serde(default)]
    pub window: Option<Window>,
}

impl ProfileDecl {
    pub fn constant(value: f64) -> Self {
        Self {
            family: ProfileFamily::Constant { value },
            window: None,
        }
    }

    pub fn build(&self, role: FieldRole) -> Result<EnvironmentProfile> {
        EnvironmentProfile::new(
            self.family.clone(),
            role,
            self.window.unwrap_or(Window::EVERYWHERE),
        )
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LimitConfig {
    #[serde(default = "default_dt")]
    pub dt: f64,
    #[serde(default = "default_t_max")]
    pub t_max: f64,
    /// Defaults to the replica count.
    #[serde(default)]
    pub samples: Option<u64>,
    /// Sample the semi-lattice limit through the closed-form time change.
    #[serde(default)]
    pub time_change: bool,
}

fn default_dt() -> f64 {
    1e-4
}

fn default_t_max() -> f64 {
    50.0
}

impl Default for LimitConfig {
    fn default() -> Self {
        Self {
            dt: default_dt(),
            t_max: default_t_max(),
            samples: None,
            time_change: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleConfig {
    /// Replica indices `0..seeds` are checked.
    #[serde(default = "default_oracle_seeds")]
    pub seeds: u64,
    /// Columns generated per realization; defaults to `4ℓ² + 50`.
    #[serde(default)]
    pub horizon: Option<u64>,
    /// Window half-height; defaults to [`crate::oracle::default_height`].
    #[serde(default)]
    pub height: Option<f64>,
}

fn default_oracle_seeds() -> u64 {
    1000
}

impl Default for OracleConfig {
    fn default() -> Self {
        Self {
            seeds: default_oracle_seeds(),
            horizon: None,
            height: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Thresholds {
    /// KS bound between τ/ℓ² and θ.
    #[serde(default = "default_ks_tau")]
    pub ks_tau: f64,
    /// KS bound between T/ℓ³ and the limiting integral.
    #[serde(default = "default_ks_integral")]
    pub ks_integral: f64,
}

fn default_ks_tau() -> f64 {
    0.025
}

fn default_ks_integral() -> f64 {
    0.03
}

impl Default for Thresholds {
    fn default() -> Self {
        Self {
            ks_tau: default_ks_tau(),
            ks_integral: default_ks_integral(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: Model,
    pub ells: Vec<u64>,
    #[serde(default)]
    pub anchor: [f64; 2],
    pub replicas: u64,
    /// Column budget per replica; defaults to `50ℓ²`.
    #[serde(default)]
    pub max_steps: Option<u64>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_out")]
    pub out: PathBuf,
    /// Use the O(1) column samplers when the fields allow it.
    #[serde(default = "default_true")]
    pub fast_path: bool,
    /// λ for the semi-lattice, p for the diluted lattice; ignored for the
    /// pure lattice.
    #[serde(default)]
    pub field: Option<ProfileDecl>,
    /// μ; defaults to 1.
    #[serde(default)]
    pub mu: Option<ProfileDecl>,
    #[serde(default)]
    pub limit: LimitConfig,
    #[serde(default)]
    pub oracle: OracleConfig,
    #[serde(default)]
    pub thresholds: Thresholds,
}

fn default_out() -> PathBuf {
    PathBuf::from("out")
}

fn default_true() -> bool {
    true
}

impl ExperimentConfig {
    /// Minimal config with constant fields.
    pub fn homogeneous(model: Model, ell: u64, field: f64, replicas: u64, seed: u64) -> Self {
        Self {
            model,
            ells: vec![ell],
            anchor: [0.0, 0.0],
            replicas,
            max_steps: None,
            seed,
            out: default_out(),
            fast_path: true,
            field: (model != Model::PureLattice).then(|| ProfileDecl::constant(field)),
            mu: None,
            limit: LimitConfig::default(),
            oracle: OracleConfig::default(),
            thresholds: Thresholds::default(),
        }
    }

    pub fn parse(text: &str) -> Result<Self> {
        let config: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let config: Self = toml::from_str(&text).map_err(|source| Error::ConfigParse {
            path: path.to_owned(),
            source,
        })?;
        config.validate()?;
        Ok(config)
    }

    pub fn field_role(&self) -> FieldRole {
        match self.model {
            Model::SemiLattice => FieldRole::Intensity,
            Model::DilutedLattice | Model::PureLattice => FieldRole::Retention,
        }
    }

    pub fn field_profile(&self) -> Result<EnvironmentProfile> {
        match (&self.field, self.model) {
            (_, Model::PureLattice) => EnvironmentProfile::constant(1.0, FieldRole::Retention),
            (Some(decl), _) => decl.build(self.field_role()),
            (None, model) => Err(Error::Config(format!(
                "model {model} needs a [field] section"
            ))),
        }
    }

    pub fn mu_profile(&self) -> Result<EnvironmentProfile> {
        self.mu
            .clone()
            .unwrap_or_else(|| ProfileDecl::constant(1.0))
            .build(FieldRole::Traffic)
    }

    pub fn anchor(&self) -> (f64, f64) {
        (self.anchor[0], self.anchor[1])
    }

    pub fn max_steps_for(&self, ell: u64) -> u64 {
        self.max_steps
            .unwrap_or_else(|| RunOptions::default_for(ell as f64).max_steps)
    }

    pub fn run_options(&self, ell: u64) -> RunOptions {
        RunOptions {
            fast_path: self.fast_path,
            ..RunOptions::new(self.max_steps_for(ell))
        }
    }

    /// `(field, μ)` rescaled for `ell`.
    pub fn scaled_fields(&self, ell: u64) -> Result<(ScaledField, ScaledField)> {
        Ok((
            ScaledField::new(self.field_profile()?, ell as f64, self.anchor())?,
            ScaledField::new(self.mu_profile()?, ell as f64, self.anchor())?,
        ))
    }

    pub fn limit_spec(&self) -> Result<LimitSpec> {
        Ok(LimitSpec {
            model: self.model,
            field: self.field_profile()?,
            mu: self.mu_profile()?,
            anchor: self.anchor(),
        })
    }

    pub fn step_control(&self) -> StepControl {
        StepControl::new(self.limit.dt, self.limit.t_max)
    }

    pub fn limit_samples(&self) -> u64 {
        self.limit.samples.unwrap_or(self.replicas)
    }

    pub fn oracle_horizon(&self, ell: u64) -> u64 {
        self.oracle.horizon.unwrap_or(4 * ell * ell + 50)
    }

    pub fn oracle_height(&self, ell: u64) -> Result<f64> {
        if let Some(h) = self.oracle.height {
            return Ok(h);
        }
        let density = self.field_profile()?.lower_bound;
        Ok(crate::oracle::default_height(
            ell as f64,
            self.oracle_horizon(ell),
            density,
        ))
    }

    /// Half-height of the band the walks are expected to stay in over
    /// `max_steps` columns: the slit plus eight diffusive standard deviations.
    fn expected_height(&self, ell: u64, density: f64) -> f64 {
        ell as f64 / 2.0 + 8.0 * (self.max_steps_for(ell) as f64).sqrt() / density
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.ells.is_empty() {
            return bad("ells must not be empty".into());
        }
        if self.anchor.iter().any(|v| !v.is_finite()) {
            return bad(format!("anchor {:?} must be finite", self.anchor));
        }
        if !(self.limit.dt > 0.0 && self.limit.t_max > 0.0 && self.limit.dt < self.limit.t_max) {
            return bad(format!(
                "limit dt {} and t_max {} must satisfy 0 < dt < t_max",
                self.limit.dt, self.limit.t_max
            ));
        }
        if !(self.thresholds.ks_tau > 0.0 && self.thresholds.ks_integral > 0.0) {
            return bad("thresholds must be positive".into());
        }
        if self.max_steps == Some(0) {
            return bad("max_steps must be positive".into());
        }
        if self.model != Model::PureLattice && self.field.is_none() {
            return bad(format!("model {} needs a [field] section", self.model));
        }
        let field = self.field_profile()?;
        let mu = self.mu_profile()?;
        for &ell in &self.ells {
            match self.model {
                Model::SemiLattice if ell == 0 => return bad("ell must be positive".into()),
                Model::SemiLattice => {}
                _ => {
                    half_width(ell).map_err(|e| Error::Config(e.to_string()))?;
                }
            }
            let height = self.expected_height(ell, field.lower_bound);
            let columns = self.max_steps_for(ell);
            for profile in [&field, &mu] {
                ScaledField::new(profile.clone(), ell as f64, self.anchor())?
                    .check_window(columns, height)
                    .map_err(|e| Error::Config(format!("ell = {ell}: {e}")))?;
            }
        }
        Ok(())
    }
}
