//! SVO weighting, payoff functionals and the augmented running cost.
//!
//! The running cost minimized by the controller is
//!
//! ```text
//! l = 1/2 [ cos(phi) (f_AV + u)^2 + sin(phi) F(y) + lambda (s - s_d)^2 ]
//! ```
//!
//! where `F` is the follower penalty selected by [`FollowerPayoff`]
//! (`(v_f - v0)^2`, `-v_f^2` or `(v_f - v_av)^2`) and `s` is the AV's gap to
//! its predecessor. Integrals are trapezoidal on the simulation grid.

use std::f64::consts::{FRAC_PI_2, FRAC_PI_4};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pmp::{ExoSample, ExogenousTrajectory, OcpState};
use crate::vehicle::OvrvParams;

/// Social value orientation angle in radians, restricted to `[0, pi/2]`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct SvoAngle(f64);

impl SvoAngle {
    pub const EGOISTIC: SvoAngle = SvoAngle(0.1);
    pub const PROSOCIAL: SvoAngle = SvoAngle(FRAC_PI_4);
    pub const ALTRUISTIC: SvoAngle = SvoAngle(FRAC_PI_2);

    pub fn new(phi: f64) -> Result<Self> {
        if (0.0..=FRAC_PI_2).contains(&phi) {
            Ok(Self(phi))
        } else {
            Err(Error::invalid(format!(
                "SVO angle must lie in [0, pi/2], got {phi}"
            )))
        }
    }

    /// Like `new`, but values within 1e-9 of a preset become that preset, so
    /// rounded decimals such as 1.5707963268 are accepted.
    pub fn snapped(phi: f64) -> Result<Self> {
        [Self::EGOISTIC, Self::PROSOCIAL, Self::ALTRUISTIC, Self(0.0)]
            .into_iter()
            .find(|p| (p.0 - phi).abs() <= 1e-9)
            .map_or_else(|| Self::new(phi), Ok)
    }

    pub fn radians(self) -> f64 {
        self.0
    }

    /// `(cos phi, sin phi)`: weights on self and on the follower.
    ///
    /// The upper half of the range is evaluated through the complementary
    /// angle so both endpoints give exact zeros.
    pub fn weights(self) -> (f64, f64) {
        if self.0 <= FRAC_PI_4 {
            (self.0.cos(), self.0.sin())
        } else {
            let c = FRAC_PI_2 - self.0;
            (c.sin(), c.cos())
        }
    }
}

impl TryFrom<f64> for SvoAngle {
    type Error = Error;

    fn try_from(phi: f64) -> Result<Self> {
        SvoAngle::new(phi)
    }
}

impl From<SvoAngle> for f64 {
    fn from(phi: SvoAngle) -> f64 {
        phi.0
    }
}

pub fn svo_weights(phi: SvoAngle) -> (f64, f64) {
    phi.weights()
}

/// What the human follower is assumed to care about.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FollowerPayoff {
    /// Track the desired speed `v0`.
    #[default]
    DesiredSpeed,
    /// Go as fast as possible. Positive-valued payoff.
    MaxSpeed,
    /// Match the AV's speed.
    Smoothness,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObjectiveParams {
    pub phi: SvoAngle,
    /// Soft spacing-constraint weight.
    pub lambda: f64,
    /// Desired spacing to the predecessor (m).
    pub desired_spacing: f64,
    /// Follower desired speed (m/s).
    pub desired_speed: f64,
    pub follower_payoff: FollowerPayoff,
}

impl Default for ObjectiveParams {
    fn default() -> Self {
        Self {
            phi: SvoAngle::EGOISTIC,
            lambda: 0.01,
            desired_spacing: 10.0,
            desired_speed: 30.0,
            follower_payoff: FollowerPayoff::DesiredSpeed,
        }
    }
}

impl ObjectiveParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::invalid(format!(
                "lambda must be non-negative, got {}",
                self.lambda
            )));
        }
        if !(self.desired_spacing > 0.0 && self.desired_spacing.is_finite()) {
            return Err(Error::invalid(format!(
                "desired spacing must be positive, got {}",
                self.desired_spacing
            )));
        }
        if !self.desired_speed.is_finite() {
            return Err(Error::invalid("desired speed must be finite"));
        }
        Ok(())
    }
}

/// Uniform time grid `t0, t0 + dt, ..., tf`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "HorizonRepr", into = "HorizonRepr")]
pub struct Horizon {
    t0: f64,
    tf: f64,
    dt: f64,
    steps: usize,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct HorizonRepr {
    t0: f64,
    tf: f64,
    dt: f64,
}

impl TryFrom<HorizonRepr> for Horizon {
    type Error = Error;

    fn try_from(r: HorizonRepr) -> Result<Self> {
        Horizon::new(r.t0, r.tf, r.dt)
    }
}

impl From<Horizon> for HorizonRepr {
    fn from(h: Horizon) -> Self {
        HorizonRepr {
            t0: h.t0,
            tf: h.tf,
            dt: h.dt,
        }
    }
}

impl Horizon {
    pub fn new(t0: f64, tf: f64, dt: f64) -> Result<Self> {
        if !(t0.is_finite() && tf.is_finite() && tf > t0) {
            return Err(Error::invalid(format!(
                "horizon needs tf > t0, got [{t0}, {tf}]"
            )));
        }
        if !(dt.is_finite() && dt > 0.0) {
            return Err(Error::invalid(format!("dt must be positive, got {dt}")));
        }
        let ratio = (tf - t0) / dt;
        let steps = ratio.round();
        if steps < 1.0 || (ratio - steps).abs() > 1e-9 * ratio.max(1.0) {
            return Err(Error::invalid(format!(
                "horizon length {} is not a whole number of dt = {dt} steps",
                tf - t0
            )));
        }
        Ok(Self {
            t0,
            tf,
            dt,
            steps: steps as usize,
        })
    }

    pub fn t0(&self) -> f64 {
        self.t0
    }

    pub fn tf(&self) -> f64 {
        self.tf
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn nodes(&self) -> usize {
        self.steps + 1
    }

    pub fn time(&self, k: usize) -> f64 {
        self.t0 + k as f64 * self.dt
    }

    pub fn times(&self) -> Vec<f64> {
        (0..self.nodes()).map(|k| self.time(k)).collect()
    }

    pub fn check_len(&self, len: usize) -> Result<()> {
        if len == self.nodes() {
            Ok(())
        } else {
            Err(Error::GridMismatch {
                expected: self.nodes(),
                got: len,
            })
        }
    }
}

/// Trapezoidal quadrature weight of node `k` out of `nodes`.
pub fn trapezoid_weight(k: usize, nodes: usize, dt: f64) -> f64 {
    if k == 0 || k + 1 == nodes {
        0.5 * dt
    } else {
        dt
    }
}

pub fn trapezoid(values: &[f64], dt: f64) -> f64 {
    match values {
        [] | [_] => 0.0,
        [first, inner @ .., last] => dt * (0.5 * (first + last) + inner.iter().sum::<f64>()),
    }
}

/// `-int 1/2 a^2 dt` for the AV's realized acceleration.
pub fn payoff_self(accel: &[f64], dt: f64) -> f64 {
    let sq: Vec<f64> = accel.iter().map(|a| 0.5 * a * a).collect();
    -trapezoid(&sq, dt)
}

/// Follower payoff for the configured kind.
pub fn payoff_follower(
    follower_speed: &[f64],
    self_speed: &[f64],
    params: &ObjectiveParams,
    dt: f64,
) -> Result<f64> {
    if follower_speed.len() != self_speed.len() {
        return Err(Error::GridMismatch {
            expected: follower_speed.len(),
            got: self_speed.len(),
        });
    }
    let v0 = params.desired_speed;
    let integrand: Vec<f64> = follower_speed
        .iter()
        .zip(self_speed)
        .map(|(&vf, &vs)| match params.follower_payoff {
            FollowerPayoff::DesiredSpeed => -0.5 * (vf - v0).powi(2),
            FollowerPayoff::MaxSpeed => 0.5 * vf * vf,
            FollowerPayoff::Smoothness => -0.5 * (vf - vs).powi(2),
        })
        .collect();
    Ok(trapezoid(&integrand, dt))
}

/// SVO-weighted utility `cos(phi) U_self + sin(phi) U_follower`.
pub fn social_utility(phi: SvoAngle, payoff_self: f64, payoff_follower: f64) -> f64 {
    let (w_self, w_other) = phi.weights();
    w_self * payoff_self + w_other * payoff_follower
}

/// Follower penalty `F` entering the running cost (sign-flipped payoff density).
fn follower_penalty(y: &OcpState, params: &ObjectiveParams) -> f64 {
    match params.follower_payoff {
        FollowerPayoff::DesiredSpeed => (y.follower_speed() - params.desired_speed).powi(2),
        FollowerPayoff::MaxSpeed => -y.follower_speed().powi(2),
        FollowerPayoff::Smoothness => (y.follower_speed() - y.av_speed()).powi(2),
    }
}

/// AV gap to its predecessor.
pub fn av_spacing(y: &OcpState, exo: &ExoSample) -> f64 {
    exo.x - y.av_position() - exo.length
}

/// Free OVRV response of the AV to its predecessor.
pub fn av_free_accel(y: &OcpState, exo: &ExoSample, ovrv: &OvrvParams) -> f64 {
    ovrv.accel(av_spacing(y, exo), y.av_speed(), exo.v)
}

pub fn running_cost(
    y: &OcpState,
    u: f64,
    exo: &ExoSample,
    params: &ObjectiveParams,
    ovrv: &OvrvParams,
) -> f64 {
    let (w_self, w_other) = params.phi.weights();
    let accel = av_free_accel(y, exo, ovrv) + u;
    let spacing_err = av_spacing(y, exo) - params.desired_spacing;
    0.5 * (w_self * accel * accel
        + w_other * follower_penalty(y, params)
        + params.lambda * spacing_err * spacing_err)
}

/// Gradient of the running cost: `(dl/dy, dl/du)`.
pub fn running_cost_gradient(
    y: &OcpState,
    u: f64,
    exo: &ExoSample,
    params: &ObjectiveParams,
    ovrv: &OvrvParams,
) -> ([f64; 4], f64) {
    let (w_self, w_other) = params.phi.weights();
    let accel = av_free_accel(y, exo, ovrv) + u;
    let spacing_err = av_spacing(y, exo) - params.desired_spacing;
    let mut grad = [
        -w_self * accel * ovrv.d_gap() - params.lambda * spacing_err,
        w_self * accel * ovrv.d_speed(),
        0.0,
        0.0,
    ];
    match params.follower_payoff {
        FollowerPayoff::DesiredSpeed => {
            grad[3] = w_other * (y.follower_speed() - params.desired_speed);
        }
        FollowerPayoff::MaxSpeed => {
            grad[3] = -w_other * y.follower_speed();
        }
        FollowerPayoff::Smoothness => {
            let d = y.follower_speed() - y.av_speed();
            grad[1] -= w_other * d;
            grad[3] = w_other * d;
        }
    }
    (grad, w_self * accel)
}

/// Trapezoidal J3 over the horizon.
pub fn evaluate_objective(
    states: &[OcpState],
    controls: &[f64],
    exo: &ExogenousTrajectory,
    params: &ObjectiveParams,
    ovrv: &OvrvParams,
    horizon: &Horizon,
) -> Result<f64> {
    horizon.check_len(states.len())?;
    horizon.check_len(controls.len())?;
    horizon.check_len(exo.len())?;
    let costs: Vec<f64> = states
        .iter()
        .zip(controls)
        .enumerate()
        .map(|(k, (y, &u))| running_cost(y, u, &exo.sample(k), params, ovrv))
        .collect();
    Ok(trapezoid(&costs, horizon.dt()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use std::f64::consts::SQRT_2;

    fn exo_at(x: f64, v: f64) -> ExoSample {
        ExoSample { x, v, length: 5.0 }
    }

    #[test]
    #[allow(clippy::approx_constant)]
    fn snapped_accepts_rounded_presets() {
        assert_eq!(
            SvoAngle::snapped(1.5707963268).unwrap(),
            SvoAngle::ALTRUISTIC
        );
        assert_eq!(
            SvoAngle::snapped(0.7853981634).unwrap(),
            SvoAngle::PROSOCIAL
        );
        assert_eq!(SvoAngle::snapped(0.3).unwrap().radians(), 0.3);
        assert!(SvoAngle::snapped(1.6).is_err());
        assert!(SvoAngle::new(1.5707963268).is_err());
    }

    #[test]
    fn weights_examples() {
        assert_eq!(SvoAngle::new(0.0).unwrap().weights(), (1.0, 0.0));
        let (c, s) = SvoAngle::PROSOCIAL.weights();
        assert_abs_diff_eq!(c, SQRT_2 / 2.0, epsilon = 1e-15);
        assert_abs_diff_eq!(s, SQRT_2 / 2.0, epsilon = 1e-15);
        assert_eq!(SvoAngle::ALTRUISTIC.weights(), (0.0, 1.0));
    }

    #[test]
    fn angle_range_enforced() {
        assert!(SvoAngle::new(-0.01).is_err());
        assert!(SvoAngle::new(FRAC_PI_2 + 1e-9).is_err());
        assert!(SvoAngle::new(f64::NAN).is_err());
    }

    #[test]
    fn payoff_self_examples() {
        assert_eq!(payoff_self(&[0.0; 11], 1.0), 0.0);
        assert_abs_diff_eq!(payoff_self(&[1.0; 101], 0.1), -5.0, epsilon = 1e-12);
    }

    #[test]
    fn payoff_follower_examples() {
        let p = ObjectiveParams::default();
        let at_v0 = vec![30.0; 101];
        assert_eq!(payoff_follower(&at_v0, &at_v0, &p, 0.1).unwrap(), 0.0);
        let slow = vec![28.0; 101];
        assert_abs_diff_eq!(
            payoff_follower(&slow, &at_v0, &p, 0.1).unwrap(),
            -20.0,
            epsilon = 1e-12
        );
        let smooth = ObjectiveParams {
            follower_payoff: FollowerPayoff::Smoothness,
            ..p
        };
        assert_eq!(payoff_follower(&slow, &slow, &smooth, 0.1).unwrap(), 0.0);
        let fast = ObjectiveParams {
            follower_payoff: FollowerPayoff::MaxSpeed,
            ..p
        };
        assert_abs_diff_eq!(
            payoff_follower(&[2.0; 11], &slow[..11], &fast, 1.0).unwrap(),
            20.0,
            epsilon = 1e-12
        );
        assert!(payoff_follower(&slow, &slow[..3], &p, 0.1).is_err());
    }

    #[test]
    fn running_cost_zero_when_all_terms_vanish() {
        let ovrv = OvrvParams::default();
        let p = ObjectiveParams {
            phi: SvoAngle::PROSOCIAL,
            ..Default::default()
        };
        // AV at 30 m/s behind a 30 m/s predecessor, spacing s_d = 10.
        let y = OcpState::new(0.0, 30.0, -40.0, 30.0);
        let exo = exo_at(15.0, 30.0);
        let u = -av_free_accel(&y, &exo, &ovrv);
        assert_abs_diff_eq!(running_cost(&y, u, &exo, &p, &ovrv), 0.0, epsilon = 1e-15);
    }

    #[test]
    fn running_cost_hand_evaluation() {
        let ovrv = OvrvParams::default();
        let p = ObjectiveParams {
            phi: SvoAngle::PROSOCIAL,
            lambda: 0.01,
            desired_spacing: 10.0,
            desired_speed: 30.0,
            follower_payoff: FollowerPayoff::DesiredSpeed,
        };
        let y = OcpState::new(0.0, 12.0, -30.0, 28.0);
        let exo = exo_at(17.0, 12.0);
        assert_abs_diff_eq!(av_spacing(&y, &exo), 12.0, epsilon = 1e-12);
        let u = 1.0 - av_free_accel(&y, &exo, &ovrv);
        assert_abs_diff_eq!(
            running_cost(&y, u, &exo, &p, &ovrv),
            1.7877669529663687,
            epsilon = 1e-9
        );
    }

    #[test]
    fn trapezoid_exact_for_constants_and_lines() {
        assert_abs_diff_eq!(trapezoid(&[3.0; 31], 0.1), 9.0, epsilon = 1e-12);
        let ramp: Vec<f64> = (0..=10).map(|k| k as f64).collect();
        assert_abs_diff_eq!(trapezoid(&ramp, 1.0), 50.0, epsilon = 1e-12);
        assert_eq!(trapezoid(&[], 0.1), 0.0);
        assert_eq!(trapezoid(&[4.0], 0.1), 0.0);
    }

    #[test]
    fn horizon_rejects_fractional_steps() {
        assert!(Horizon::new(0.0, 1.05, 0.1).is_err());
        assert!(Horizon::new(0.0, 0.0, 0.1).is_err());
        assert!(Horizon::new(0.0, 1.0, -0.1).is_err());
        let h = Horizon::new(0.0, 120.0, 0.1).unwrap();
        assert_eq!(h.nodes(), 1201);
    }

    proptest! {
        #[test]
        fn weights_on_unit_circle(phi in 0.0..=FRAC_PI_2) {
            let (c, s) = SvoAngle::new(phi).unwrap().weights();
            prop_assert!((c * c + s * s - 1.0).abs() <= 1e-12);
            prop_assert!((c - phi.cos()).abs() <= 1e-15 && (s - phi.sin()).abs() <= 1e-15);
        }

        #[test]
        fn prosocial_utility_is_scaled_sum(a in -1e3..0.0f64, b in -1e3..0.0f64) {
            let j = social_utility(SvoAngle::PROSOCIAL, a, b);
            let expected = (SQRT_2 / 2.0) * (a + b);
            prop_assert!((j - expected).abs() <= 1e-12 * (1.0 + expected.abs()));
        }

        #[test]
        fn payoff_signs(accel in prop::collection::vec(-3.0..3.0f64, 2..50),
                        speeds in prop::collection::vec(0.0..35.0f64, 2..50)) {
            prop_assert!(payoff_self(&accel, 0.1) <= 0.0);
            let p = ObjectiveParams::default();
            let other: Vec<f64> = speeds.iter().map(|v| v * 0.9).collect();
            prop_assert!(payoff_follower(&speeds, &other, &p, 0.1).unwrap() <= 0.0);
            let smooth = ObjectiveParams { follower_payoff: FollowerPayoff::Smoothness, ..p };
            prop_assert!(payoff_follower(&speeds, &other, &smooth, 0.1).unwrap() <= 0.0);
        }
    }
}
