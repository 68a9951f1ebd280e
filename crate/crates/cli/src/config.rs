//! JSON experiment configuration. Every field is optional.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use vbtrack_core::cavi::{CaviConfig, ForgettingSchedule};
use vbtrack_core::metrics::OspaConfig;
use vbtrack_core::scenario::{preset_config, AngleLayout, Heading, PresetName, ScenarioConfig};

use crate::error::{HarnessError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    /// Known rates, no loss detection.
    Vb,
    VbRateLearning,
    VbRelo,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Vb => "vb",
            Self::VbRateLearning => "vb-rate-learning",
            Self::VbRelo => "vb-relo",
        }
    }
}

impl FromStr for Mode {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "vb" => Ok(Self::Vb),
            "vb-rate-learning" => Ok(Self::VbRateLearning),
            "vb-relo" => Ok(Self::VbRelo),
            other => Err(HarnessError::Config(format!("unknown mode '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HeadingSpec {
    Inward,
    Outward,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LayoutSpec {
    Random,
    EquallySpaced,
}

/// Serializable mirror of [`ScenarioConfig`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSpec {
    pub num_objects: usize,
    pub steps: usize,
    pub dt: f64,
    pub initial_radius: f64,
    pub initial_speed: f64,
    pub heading: HeadingSpec,
    pub layout: LayoutSpec,
    pub object_rates: Vec<f64>,
    pub clutter_density: f64,
    pub region_side: f64,
    pub noise_var: f64,
    pub accel_var: f64,
}

impl From<&ScenarioConfig> for ScenarioSpec {
    fn from(c: &ScenarioConfig) -> Self {
        Self {
            num_objects: c.num_objects,
            steps: c.steps,
            dt: c.dt,
            initial_radius: c.initial_radius,
            initial_speed: c.initial_speed,
            heading: match c.heading {
                Heading::Inward => HeadingSpec::Inward,
                Heading::Outward => HeadingSpec::Outward,
            },
            layout: match c.layout {
                AngleLayout::Random => LayoutSpec::Random,
                AngleLayout::EquallySpaced => LayoutSpec::EquallySpaced,
            },
            object_rates: c.object_rates.clone(),
            clutter_density: c.clutter_density,
            region_side: c.region_side,
            noise_var: c.noise_var,
            accel_var: c.accel_var,
        }
    }
}

impl ScenarioSpec {
    pub fn to_config(&self) -> ScenarioConfig {
        ScenarioConfig {
            num_objects: self.num_objects,
            steps: self.steps,
            dt: self.dt,
            initial_radius: self.initial_radius,
            initial_speed: self.initial_speed,
            heading: match self.heading {
                HeadingSpec::Inward => Heading::Inward,
                HeadingSpec::Outward => Heading::Outward,
            },
            layout: match self.layout {
                LayoutSpec::Random => AngleLayout::Random,
                LayoutSpec::EquallySpaced => AngleLayout::EquallySpaced,
            },
            object_rates: self.object_rates.clone(),
            clutter_density: self.clutter_density,
            region_side: self.region_side,
            noise_var: self.noise_var,
            accel_var: self.accel_var,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CaviSpec {
    pub max_iters: usize,
    pub tolerance: f64,
}

impl Default for CaviSpec {
    fn default() -> Self {
        let c = CaviConfig::default();
        Self {
            max_iters: c.max_iters,
            tolerance: c.tolerance,
        }
    }
}

impl CaviSpec {
    pub fn to_config(&self) -> CaviConfig {
        CaviConfig {
            max_iters: self.max_iters,
            tolerance: self.tolerance,
        }
    }
}

/// Relocation settings; unset fields take the preset's value.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RelocationSpec {
    pub init_std: Option<f64>,
    pub new_loss_std: Option<f64>,
    pub old_loss_std: Option<f64>,
    pub velocity_var: Option<f64>,
    pub p_los: Option<f64>,
    pub p_reloc: Option<f64>,
    pub gap: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RateLearningSpec {
    pub prior_shape: f64,
    pub prior_scale: f64,
    pub forgetting_amplitude: f64,
    pub forgetting_delay: f64,
    pub forgetting_exponent: f64,
}

impl Default for RateLearningSpec {
    fn default() -> Self {
        Self {
            prior_shape: 1.0,
            prior_scale: 5.0,
            forgetting_amplitude: 0.1,
            forgetting_delay: 10.0,
            forgetting_exponent: 0.9,
        }
    }
}

impl RateLearningSpec {
    pub fn schedule(&self) -> ForgettingSchedule {
        ForgettingSchedule::PowerDecay {
            amplitude: self.forgetting_amplitude,
            delay: self.forgetting_delay,
            exponent: self.forgetting_exponent,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub preset: String,
    pub num_objects: usize,
    /// Replaces the preset when present.
    pub scenario: Option<ScenarioSpec>,
    pub mode: Mode,
    pub datasets: usize,
    pub seed: u64,
    pub initial_var: f64,
    pub cavi: CaviSpec,
    pub relocation: RelocationSpec,
    pub rate_learning: RateLearningSpec,
    pub ospa_order: f64,
    pub ospa_cutoff: f64,
    pub threads: Option<usize>,
    pub out: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            preset: "moderate".into(),
            num_objects: 5,
            scenario: None,
            mode: Mode::VbRelo,
            datasets: 1,
            seed: 0,
            initial_var: 1.0,
            cavi: CaviSpec::default(),
            relocation: RelocationSpec::default(),
            rate_learning: RateLearningSpec::default(),
            ospa_order: 1.0,
            ospa_cutoff: 50.0,
            threads: None,
            out: None,
        }
    }
}

/// Relocation settings with every field filled in.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResolvedRelocation {
    pub init_std: f64,
    pub new_loss_std: f64,
    pub old_loss_std: f64,
    pub velocity_var: f64,
    pub p_los: f64,
    pub p_reloc: f64,
    pub gap: f64,
}

impl ExperimentConfig {
    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())))
    }

    pub fn preset_name(&self) -> Result<PresetName> {
        PresetName::from_str(&self.preset).map_err(|e| HarnessError::Config(e.to_string()))
    }

    fn heavy_clutter(&self) -> bool {
        self.scenario.is_none() && self.preset_name().ok() == Some(PresetName::Coalescence)
    }

    /// Scenario for dataset `seed`; presets with random parameters depend on it.
    pub fn scenario_config(&self, seed: u64) -> Result<ScenarioConfig> {
        let cfg = match &self.scenario {
            Some(s) => s.to_config(),
            None => preset_config(self.preset_name()?, self.num_objects, seed)
                .map_err(|e| HarnessError::Config(e.to_string()))?,
        };
        cfg.validate().map_err(|e| HarnessError::Config(e.to_string()))?;
        Ok(cfg)
    }

    pub fn resolved_relocation(&self) -> ResolvedRelocation {
        let heavy = self.heavy_clutter();
        let r = &self.relocation;
        ResolvedRelocation {
            init_std: r.init_std.unwrap_or(if heavy { 20.0 } else { 35.0 }),
            new_loss_std: r.new_loss_std.unwrap_or(200.0),
            old_loss_std: r.old_loss_std.unwrap_or(700.0),
            velocity_var: r.velocity_var.unwrap_or(1600.0),
            p_los: r.p_los.unwrap_or(if heavy { 5e-4 } else { 7e-4 }),
            p_reloc: r.p_reloc.unwrap_or(0.5),
            gap: r.gap.unwrap_or(1.0),
        }
    }

    pub fn ospa(&self) -> Result<OspaConfig> {
        OspaConfig::new(self.ospa_order, self.ospa_cutoff).map_err(|e| HarnessError::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(HarnessError::Config(m.into()));
        if self.datasets == 0 {
            return bad("datasets must be at least 1");
        }
        if !(self.initial_var > 0.0) {
            return bad("initial_var must be positive");
        }
        if self.cavi.max_iters == 0 {
            return bad("cavi.max_iters must be at least 1");
        }
        if self.threads == Some(0) {
            return bad("threads must be at least 1");
        }
        let r = self.resolved_relocation();
        if !(r.p_los > 0.0 && r.p_los < 1.0) || !(r.p_reloc > 0.0 && r.p_reloc < 1.0) {
            return bad("relocation probabilities must lie in (0, 1)");
        }
        if !(r.init_std > 0.0 && r.new_loss_std > 0.0 && r.old_loss_std > 0.0 && r.velocity_var > 0.0 && r.gap > 0.0) {
            return bad("relocation spreads and gap must be positive");
        }
        let rl = &self.rate_learning;
        if !(rl.prior_shape > 0.0 && rl.prior_scale > 0.0) {
            return bad("rate prior shape and scale must be positive");
        }
        self.ospa()?;
        self.scenario_config(self.seed)?;
        Ok(())
    }

    /// The configuration with preset-dependent defaults written out.
    pub fn resolved_json(&self) -> Result<serde_json::Value> {
        let mut v = serde_json::to_value(self).map_err(|e| HarnessError::Config(e.to_string()))?;
        let r = self.resolved_relocation();
        v["relocation"] = serde_json::to_value(r).map_err(|e| HarnessError::Config(e.to_string()))?;
        if self.scenario.is_none() {
            v["scenario"] = serde_json::to_value(ScenarioSpec::from(&self.scenario_config(self.seed)?))
                .map_err(|e| HarnessError::Config(e.to_string()))?;
        }
        Ok(v)
    }
}
