//! JSON scenario configuration. Every field is optional; omitted values fall
//! back to the five-vehicle synthetic preset.

use std::fs::File;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::DEFAULT_WINDOW;
use crate::objective::{FollowerPayoff, Horizon, ObjectiveParams, SvoAngle};
use crate::pmp::SolverConfig;
use crate::scenario::{load_lead_profile, InitialConditions, LeadProfile, Scenario};
use crate::vehicle::{
    ControlBounds, IdmParams, OvrvParams, VehicleKind, VehicleSpec, DEFAULT_LENGTH,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VehicleConfig {
    pub kind: VehicleKind,
    #[serde(default)]
    pub length: Option<f64>,
    /// Overrides for a human driver.
    #[serde(default)]
    pub idm: Option<IdmParams>,
    /// Overrides for the autonomous vehicle.
    #[serde(default)]
    pub ovrv: Option<OvrvParams>,
}

impl VehicleConfig {
    fn spec(&self, index: usize) -> Result<VehicleSpec> {
        let length = self.length.unwrap_or(DEFAULT_LENGTH);
        match self.kind {
            VehicleKind::HumanDriven if self.ovrv.is_none() => {
                Ok(VehicleSpec::human(length, self.idm.unwrap_or_default()))
            }
            VehicleKind::Autonomous if self.idm.is_none() => Ok(VehicleSpec::autonomous(
                length,
                self.ovrv.unwrap_or_default(),
            )),
            _ => Err(Error::invalid(format!(
                "vehicle {}: parameters do not match its kind",
                index + 1
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum LeadSource {
    #[default]
    Synthetic,
    /// `t,v` CSV; relative paths resolve against the config file's directory.
    Csv(PathBuf),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ObjectiveConfig {
    pub phi: f64,
    pub lambda: f64,
    pub desired_spacing: f64,
    pub desired_speed: f64,
    pub follower_payoff: FollowerPayoff,
}

impl Default for ObjectiveConfig {
    fn default() -> Self {
        let p = ObjectiveParams::default();
        Self {
            phi: p.phi.radians(),
            lambda: p.lambda,
            desired_spacing: p.desired_spacing,
            desired_speed: p.desired_speed,
            follower_payoff: p.follower_payoff,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HorizonConfig {
    pub t0: f64,
    pub tf: f64,
    pub dt: f64,
}

impl Default for HorizonConfig {
    fn default() -> Self {
        Self {
            t0: 0.0,
            tf: 120.0,
            dt: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub platoon: Vec<VehicleConfig>,
    pub lead_profile: LeadSource,
    pub lead_position: f64,
    pub horizon: HorizonConfig,
    pub objective: ObjectiveConfig,
    pub bounds: Option<ControlBounds>,
    pub solver: SolverConfig,
    pub initial: Option<InitialConditions>,
    pub window: (f64, f64),
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        let vehicle = |kind| VehicleConfig {
            kind,
            length: None,
            idm: None,
            ovrv: None,
        };
        let hv = vehicle(VehicleKind::HumanDriven);
        Self {
            platoon: vec![
                hv.clone(),
                vehicle(VehicleKind::Autonomous),
                hv.clone(),
                hv.clone(),
                hv,
            ],
            lead_profile: LeadSource::Synthetic,
            lead_position: 0.0,
            horizon: HorizonConfig::default(),
            objective: ObjectiveConfig::default(),
            bounds: None,
            solver: SolverConfig::default(),
            initial: None,
            window: DEFAULT_WINDOW,
        }
    }
}

impl ScenarioConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    /// Builds and validates the scenario. `base_dir` anchors relative CSV
    /// paths.
    pub fn to_scenario(&self, base_dir: &Path) -> Result<Scenario> {
        let platoon = self
            .platoon
            .iter()
            .enumerate()
            .map(|(i, v)| v.spec(i))
            .collect::<Result<Vec<_>>>()?;
        let lead_profile = match &self.lead_profile {
            LeadSource::Synthetic => LeadProfile::synthetic_two_stop(),
            LeadSource::Csv(p) => {
                let path = base_dir.join(p);
                load_lead_profile(File::open(&path).map_err(|e| Error::io(&path, e))?)?
            }
        };
        let o = &self.objective;
        let scenario = Scenario {
            platoon,
            lead_profile,
            horizon: Horizon::new(self.horizon.t0, self.horizon.tf, self.horizon.dt)?,
            objective: ObjectiveParams {
                phi: SvoAngle::snapped(o.phi)?,
                lambda: o.lambda,
                desired_spacing: o.desired_spacing,
                desired_speed: o.desired_speed,
                follower_payoff: o.follower_payoff,
            },
            bounds: self.bounds.unwrap_or_default(),
            solver: self.solver,
            initial: self.initial.clone(),
            lead_position: self.lead_position,
        };
        scenario.validate()?;
        Ok(scenario)
    }
}
