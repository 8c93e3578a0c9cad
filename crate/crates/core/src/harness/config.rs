//! Scenario files: TOML with the keys documented in the README.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::SpaceTimeField;
use crate::grid::{build_grid, Grid, Interval};
use crate::time::TimeGrid;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    Forward,
    EnergyCheck,
    IdentityCheck,
    Runge,
    InvertLinear,
    InvertNonlinear,
}

impl Experiment {
    pub fn name(self) -> &'static str {
        match self {
            Experiment::Forward => "forward",
            Experiment::EnergyCheck => "energy-check",
            Experiment::IdentityCheck => "identity-check",
            Experiment::Runge => "runge",
            Experiment::InvertLinear => "invert-linear",
            Experiment::InvertNonlinear => "invert-nonlinear",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Identity {
    SelfAdjoint,
    Alessandrini,
    NonlinearIntegral,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    #[serde(rename = "box")]
    pub box_: [f64; 2],
    pub n_nodes: usize,
    pub omega: [f64; 2],
    pub w1: [f64; 2],
    pub w2: [f64; 2],
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            box_: [-1.0, 2.0],
            n_nodes: 61,
            omega: [0.0, 1.0],
            w1: [-0.8, -0.2],
            w2: [1.2, 1.8],
        }
    }
}

impl GridConfig {
    pub fn build(&self) -> Result<Grid> {
        build_grid(
            self.box_[0],
            self.box_[1],
            self.n_nodes,
            self.omega[0],
            self.omega[1],
            Interval::new(self.w1[0], self.w1[1]),
            Interval::new(self.w2[0], self.w2[1]),
        )
    }
}

/// Spatial profile of a potential or coefficient.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "profile", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Profile {
    Zero,
    Constant {
        value: f64,
    },
    Gaussian {
        amplitude: f64,
        center: f64,
        sharpness: f64,
    },
    Sine {
        offset: f64,
        amplitude: f64,
        frequency: f64,
    },
    Linear {
        slope: f64,
        intercept: f64,
    },
}

impl Profile {
    pub fn eval(&self, x: f64) -> f64 {
        match *self {
            Profile::Zero => 0.0,
            Profile::Constant { value } => value,
            Profile::Gaussian {
                amplitude,
                center,
                sharpness,
            } => amplitude * (-sharpness * (x - center).powi(2)).exp(),
            Profile::Sine {
                offset,
                amplitude,
                frequency,
            } => offset + amplitude * (2.0 * std::f64::consts::PI * frequency * x).sin(),
            Profile::Linear { slope, intercept } => intercept + slope * x,
        }
    }
}

/// Time factor multiplying a potential profile.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TimeFactor {
    #[default]
    Constant,
    /// `t`
    Linear,
    /// `T - t`
    Reversed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    #[default]
    Linear,
    Nonlinear,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    #[serde(default)]
    pub kind: ModelKind,
    /// Potential (linear) or coefficient (nonlinear) profile.
    #[serde(flatten)]
    pub profile: Profile,
    #[serde(default)]
    pub time: TimeFactor,
    /// Exponent of `q |u|^r u` for nonlinear models.
    #[serde(default = "default_r")]
    pub r: f64,
}

fn default_r() -> f64 {
    2.0
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            kind: ModelKind::Linear,
            profile: Profile::Zero,
            time: TimeFactor::Constant,
            r: 2.0,
        }
    }
}

impl ModelConfig {
    /// Nodal profile over the whole grid.
    pub fn profile_values(&self, grid: &Grid) -> Vec<f64> {
        grid.coords()
            .iter()
            .map(|&x| self.profile.eval(x))
            .collect()
    }

    /// Space-time potential for linear models.
    pub fn potential(&self, grid: &Grid, time: &TimeGrid) -> SpaceTimeField {
        let p = self.profile_values(grid);
        let tf = time.t_final();
        SpaceTimeField::from_fn(time.n_times(), grid.n_nodes, |n, i| {
            let t = time.t(n);
            let w = match self.time {
                TimeFactor::Constant => 1.0,
                TimeFactor::Linear => t,
                TimeFactor::Reversed => tf - t,
            };
            w * p[i]
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ControlConfig {
    pub amplitude: f64,
    /// The bump is active on `[0, active_fraction T]`.
    pub active_fraction: f64,
}

impl Default for ControlConfig {
    fn default() -> Self {
        Self {
            amplitude: 1.0,
            active_fraction: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RungeConfig {
    pub alpha: f64,
    /// Knot-interval counts for the `runge` experiment.
    pub levels: Vec<usize>,
    /// Knot intervals of the basis used by the inversions.
    pub intervals: usize,
}

impl Default for RungeConfig {
    fn default() -> Self {
        Self {
            alpha: 1e-8,
            levels: vec![4, 8, 16],
            intervals: 8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InversionConfig {
    pub alpha: f64,
    pub time_knots: usize,
    /// Target time windows as `[center, half_width]` pairs.
    pub windows: Vec<[f64; 2]>,
    pub eps0: f64,
    pub eps_list: Vec<f64>,
    pub drive_bumps: usize,
    /// Standard deviation of additive pairing noise relative to the largest
    /// DN difference.
    pub noise: f64,
    pub use_estimated_r: bool,
    /// Also report the residual obtained with `r - 0.5` and `r + 0.5`.
    pub check_wrong_r: bool,
    /// Drive and probe indices used for the exponent estimate.
    pub exponent_drive: usize,
    pub exponent_probe: usize,
}

impl Default for InversionConfig {
    fn default() -> Self {
        Self {
            alpha: 1e-6,
            time_knots: 1,
            windows: Vec::new(),
            eps0: 0.1,
            eps_list: vec![1e-1, 3e-2, 1e-2],
            drive_bumps: 3,
            noise: 0.0,
            use_estimated_r: false,
            check_wrong_r: false,
            exponent_drive: 1,
            exponent_probe: 7,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RefineConfig {
    /// Number of resolutions, each halving `dt`.
    pub levels: usize,
    /// Also halve the grid spacing at each level.
    pub space: bool,
}

impl Default for RefineConfig {
    fn default() -> Self {
        Self {
            levels: 1,
            space: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub experiment: Experiment,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub identity: Option<Identity>,
    #[serde(default)]
    pub seed: u64,
    pub s: f64,
    pub dt: f64,
    pub t_final: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<String>,
    #[serde(default)]
    pub grid: GridConfig,
    #[serde(default)]
    pub model: ModelConfig,
    #[serde(default)]
    pub control: ControlConfig,
    #[serde(default)]
    pub runge: RungeConfig,
    #[serde(default)]
    pub inversion: InversionConfig,
    #[serde(default)]
    pub refine: RefineConfig,
}

impl ScenarioConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// Checks everything that can be checked without solving.
    pub fn validate(&self) -> Result<()> {
        self.grid.build()?;
        if !(self.s > 0.0 && self.s < 1.0) {
            return Err(Error::UnsupportedOrder(self.s));
        }
        TimeGrid::new(self.dt, self.t_final)?;
        let cfg = |m: &str| Err(Error::Config(m.to_string()));
        if self.experiment == Experiment::IdentityCheck && self.identity.is_none() {
            return cfg("identity-check needs `identity`");
        }
        let needs_nonlinear = self.experiment == Experiment::InvertNonlinear
            || self.identity == Some(Identity::NonlinearIntegral)
                && self.experiment == Experiment::IdentityCheck;
        if needs_nonlinear && self.model.kind != ModelKind::Nonlinear {
            return cfg("this experiment needs model.kind = \"nonlinear\"");
        }
        if self.experiment == Experiment::InvertLinear && self.model.kind != ModelKind::Linear {
            return cfg("invert-linear needs model.kind = \"linear\"");
        }
        if self.experiment == Experiment::EnergyCheck && self.model.kind != ModelKind::Linear {
            return cfg("energy-check needs model.kind = \"linear\"");
        }
        if self.model.kind == ModelKind::Nonlinear && self.model.time != TimeFactor::Constant {
            return cfg("nonlinear coefficients are time independent");
        }
        if !(self.model.r >= 0.0) {
            return cfg("model.r must be >= 0");
        }
        if self.refine.levels == 0 {
            return cfg("refine.levels must be at least 1");
        }
        if !(self.control.active_fraction > 0.0 && self.control.active_fraction <= 1.0) {
            return cfg("control.active_fraction must lie in (0, 1]");
        }
        if self.runge.levels.windows(2).any(|w| w[1] % w[0] != 0) {
            return cfg("runge.levels must be nested, each dividing the next");
        }
        if !(self.runge.alpha > 0.0) || !(self.inversion.alpha > 0.0) {
            return cfg("regularization weights must be positive");
        }
        if self.inversion.windows.iter().any(|w| !(w[1] > 0.0)) {
            return cfg("inversion window half-widths must be positive");
        }
        if !(self.inversion.noise >= 0.0) {
            return cfg("inversion.noise must be >= 0");
        }
        Ok(())
    }

    pub fn with_param(&self, name: &str, value: f64) -> Result<Self> {
        let mut c = self.clone();
        match name {
            "dt" => c.dt = value,
            "s" => c.s = value,
            "t_final" => c.t_final = value,
            "n_nodes" => c.grid.n_nodes = value as usize,
            "amplitude" => c.control.amplitude = value,
            "alpha" => c.inversion.alpha = value,
            "noise" => c.inversion.noise = value,
            "eps0" => c.inversion.eps0 = value,
            "seed" => c.seed = value as u64,
            _ => return Err(Error::Config(format!("unknown sweep parameter {name:?}"))),
        }
        Ok(c)
    }
}
