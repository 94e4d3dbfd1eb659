//! Car-following laws for human-driven (IDM) and autonomous (OVRV) vehicles.
//!
//! Spacing is always bumper-to-bumper: `gap = x_{i-1} - x_i - l_{i-1}`.
//! Relative speed is `v_{i-1} - v_i`, positive when the leader pulls away.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default vehicle length (m).
pub const DEFAULT_LENGTH: f64 = 5.0;

/// Speed difference between a leader and its follower, `v_{i-1} - v_i`.
pub fn relative_speed(leader_v: f64, follower_v: f64) -> f64 {
    leader_v - follower_v
}

/// Intelligent driver model parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IdmParams {
    /// Desired speed (m/s).
    pub v0: f64,
    /// Desired time headway (s).
    pub tau1: f64,
    /// Minimum spacing (m).
    pub s0: f64,
    /// Maximum acceleration (m/s²).
    pub a: f64,
    /// Comfortable deceleration (m/s²).
    pub b: f64,
}

impl Default for IdmParams {
    fn default() -> Self {
        Self {
            v0: 30.0,
            tau1: 1.5,
            s0: 2.0,
            a: 1.0,
            b: 1.5,
        }
    }
}

/// Partial derivatives of the IDM acceleration at one operating point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IdmPartials {
    pub d_gap: f64,
    pub d_relative_speed: f64,
    pub d_speed: f64,
}

impl IdmParams {
    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("v0", self.v0),
            ("tau1", self.tau1),
            ("s0", self.s0),
            ("a", self.a),
            ("b", self.b),
        ];
        for (name, value) in fields {
            if !(value.is_finite() && value > 0.0) {
                return Err(Error::invalid(format!(
                    "IDM {name} must be positive, got {value}"
                )));
            }
        }
        Ok(())
    }

    /// Desired dynamic gap `s*(v, dv)`. May go negative under strong closing.
    pub fn desired_gap(&self, v: f64, dv: f64) -> f64 {
        self.s0 + self.tau1 * v - v * dv / (2.0 * (self.a * self.b).sqrt())
    }

    pub fn accel(&self, gap: f64, v: f64, dv: f64) -> Result<f64> {
        if !(gap > 0.0) {
            return Err(Error::Domain(format!(
                "IDM acceleration needs a positive gap, got {gap}"
            )));
        }
        let s_star = self.desired_gap(v, dv);
        Ok(self.a * (1.0 - (v / self.v0).powi(4) - (s_star / gap).powi(2)))
    }

    /// Gap at which the IDM produces zero acceleration with matched speeds.
    pub fn equilibrium_gap(&self, v: f64) -> Result<f64> {
        if !(v >= 0.0 && v < self.v0) {
            return Err(Error::Domain(format!(
                "no finite IDM equilibrium gap at v = {v} (v0 = {})",
                self.v0
            )));
        }
        Ok(self.desired_gap(v, 0.0) / (1.0 - (v / self.v0).powi(4)).sqrt())
    }

    /// Analytic partials with respect to gap, relative speed, and own speed.
    /// Caller guarantees `gap > 0`.
    pub fn partials(&self, gap: f64, v: f64, dv: f64) -> IdmPartials {
        let s_star = self.desired_gap(v, dv);
        let sqrt_ab = (self.a * self.b).sqrt();
        let gap2 = gap * gap;
        IdmPartials {
            d_gap: 2.0 * self.a * s_star * s_star / (gap2 * gap),
            d_relative_speed: self.a * s_star * v / (gap2 * sqrt_ab),
            d_speed: -4.0 * self.a * v.powi(3) / self.v0.powi(4)
                - 2.0 * self.a * s_star / gap2 * (self.tau1 - dv / (2.0 * sqrt_ab)),
        }
    }
}

/// Optimal velocity with relative velocity (OVRV) parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OvrvParams {
    /// Gain on the gap term (1/s²).
    pub k1: f64,
    /// Gain on relative speed (1/s).
    pub k2: f64,
    /// Jam distance (m).
    pub eta: f64,
    /// Desired time gap (s).
    pub tau2: f64,
}

impl Default for OvrvParams {
    fn default() -> Self {
        Self {
            k1: 0.1,
            k2: 0.6,
            eta: 21.51,
            tau2: 1.71,
        }
    }
}

impl OvrvParams {
    pub fn validate(&self) -> Result<()> {
        let ok = self.k1 > 0.0
            && self.k2 > 0.0
            && self.eta >= 0.0
            && self.tau2 > 0.0
            && [self.k1, self.k2, self.eta, self.tau2]
                .iter()
                .all(|x| x.is_finite());
        if ok {
            Ok(())
        } else {
            Err(Error::invalid(format!(
                "OVRV parameters out of range: {self:?}"
            )))
        }
    }

    pub fn accel(&self, gap: f64, v: f64, leader_v: f64) -> f64 {
        self.k1 * (gap - self.eta - self.tau2 * v) + self.k2 * (leader_v - v)
    }

    pub fn equilibrium_gap(&self, v: f64) -> f64 {
        self.eta + self.tau2 * v
    }

    /// `d accel / d gap`.
    pub fn d_gap(&self) -> f64 {
        self.k1
    }

    /// `d accel / d v` with gap and leader speed held fixed.
    pub fn d_speed(&self) -> f64 {
        -self.k1 * self.tau2 - self.k2
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VehicleKind {
    HumanDriven,
    Autonomous,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CarFollowingModel {
    Idm(IdmParams),
    Ovrv(OvrvParams),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VehicleSpec {
    pub length: f64,
    pub model: CarFollowingModel,
}

impl VehicleSpec {
    pub fn human(length: f64, params: IdmParams) -> Self {
        Self {
            length,
            model: CarFollowingModel::Idm(params),
        }
    }

    pub fn autonomous(length: f64, params: OvrvParams) -> Self {
        Self {
            length,
            model: CarFollowingModel::Ovrv(params),
        }
    }

    pub fn kind(&self) -> VehicleKind {
        match self.model {
            CarFollowingModel::Idm(_) => VehicleKind::HumanDriven,
            CarFollowingModel::Ovrv(_) => VehicleKind::Autonomous,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.length.is_finite() && self.length > 0.0) {
            return Err(Error::invalid(format!(
                "vehicle length must be positive, got {}",
                self.length
            )));
        }
        match &self.model {
            CarFollowingModel::Idm(p) => p.validate(),
            CarFollowingModel::Ovrv(p) => p.validate(),
        }
    }

    /// Gap at which this vehicle's law is at rest relative to a leader moving at `v`.
    pub fn equilibrium_gap(&self, v: f64) -> Result<f64> {
        match &self.model {
            CarFollowingModel::Idm(p) => p.equilibrium_gap(v),
            CarFollowingModel::Ovrv(p) => Ok(p.equilibrium_gap(v)),
        }
    }
}

/// Position and speed of one vehicle at one instant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VehicleState {
    pub x: f64,
    pub v: f64,
}

/// Bounds on the additive control.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControlBounds {
    pub u_min: f64,
    pub u_max: f64,
}

impl Default for ControlBounds {
    fn default() -> Self {
        Self {
            u_min: -0.6,
            u_max: 0.6,
        }
    }
}

impl ControlBounds {
    pub fn new(u_min: f64, u_max: f64) -> Result<Self> {
        let bounds = Self { u_min, u_max };
        bounds.validate()?;
        Ok(bounds)
    }

    pub fn validate(&self) -> Result<()> {
        if self.u_min <= 0.0 && 0.0 <= self.u_max {
            Ok(())
        } else {
            Err(Error::invalid(format!(
                "control bounds must satisfy u_min <= 0 <= u_max, got [{}, {}]",
                self.u_min, self.u_max
            )))
        }
    }

    pub fn clamp(&self, u: f64) -> f64 {
        u.clamp(self.u_min, self.u_max)
    }

    pub fn contains(&self, u: f64) -> bool {
        self.u_min <= u && u <= self.u_max
    }
}
