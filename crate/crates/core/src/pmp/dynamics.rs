use crate::error::{Error, Result};
use crate::objective::{av_free_accel, av_spacing, running_cost, running_cost_gradient, SvoAngle};
use crate::pmp::{ExoSample, OcpState, PairModel};
use crate::vehicle::OvrvParams;

/// Accelerations of the pair, with the standstill clamp applied: a vehicle
/// at zero speed cannot decelerate further.
struct PairAccel {
    av: f64,
    follower: f64,
    av_clamped: bool,
    follower_clamped: bool,
    follower_gap: f64,
}

fn pair_accel(
    t: f64,
    y: &OcpState,
    u: f64,
    exo: &ExoSample,
    model: &PairModel,
) -> Result<PairAccel> {
    let lead_gap = av_spacing(y, exo);
    if !(lead_gap > 0.0) {
        return Err(Error::Collision {
            vehicle: 0,
            time: t,
            gap: lead_gap,
        });
    }
    let follower_gap = y.av_position() - y.follower_position() - model.av_length;
    if !(follower_gap > 0.0) {
        return Err(Error::Collision {
            vehicle: 1,
            time: t,
            gap: follower_gap,
        });
    }
    let av = av_free_accel(y, exo, &model.ovrv) + u;
    let follower = model.idm.accel(
        follower_gap,
        y.follower_speed(),
        y.av_speed() - y.follower_speed(),
    )?;
    let av_clamped = y.av_speed() <= 0.0 && av < 0.0;
    let follower_clamped = y.follower_speed() <= 0.0 && follower < 0.0;
    Ok(PairAccel {
        av: if av_clamped { 0.0 } else { av },
        follower: if follower_clamped { 0.0 } else { follower },
        av_clamped,
        follower_clamped,
        follower_gap,
    })
}

/// `g(t, y, u) = [v_av, f_AV + u, v_f, f_HV]`.
pub fn system_dynamics(
    t: f64,
    y: &OcpState,
    u: f64,
    exo: &ExoSample,
    model: &PairModel,
) -> Result<[f64; 4]> {
    let acc = pair_accel(t, y, u, exo, model)?;
    Ok([y.av_speed(), acc.av, y.follower_speed(), acc.follower])
}

/// Jacobian `g_y` (row-major, `jac[i][j] = dg_i / dy_j`) and `g_u`.
pub fn state_jacobian(
    t: f64,
    y: &OcpState,
    u: f64,
    exo: &ExoSample,
    model: &PairModel,
) -> Result<([[f64; 4]; 4], [f64; 4])> {
    let acc = pair_accel(t, y, u, exo, model)?;
    let mut jac = [[0.0; 4]; 4];
    let mut g_u = [0.0; 4];
    jac[0][1] = 1.0;
    jac[2][3] = 1.0;
    if !acc.av_clamped {
        // The predecessor gap shrinks as the AV advances.
        jac[1][0] = -model.ovrv.d_gap();
        jac[1][1] = model.ovrv.d_speed();
        g_u[1] = 1.0;
    }
    if !acc.follower_clamped {
        let vf = y.follower_speed();
        let d = model.idm.partials(acc.follower_gap, vf, y.av_speed() - vf);
        jac[3][0] = d.d_gap;
        jac[3][1] = d.d_relative_speed;
        jac[3][2] = -d.d_gap;
        jac[3][3] = -d.d_relative_speed + d.d_speed;
    }
    Ok((jac, g_u))
}

/// `H = <g, psi> + l`.
pub fn hamiltonian(
    t: f64,
    y: &OcpState,
    u: f64,
    psi: &[f64; 4],
    exo: &ExoSample,
    model: &PairModel,
) -> Result<f64> {
    let g = system_dynamics(t, y, u, exo, model)?;
    let inner: f64 = g.iter().zip(psi).map(|(a, b)| a * b).sum();
    Ok(inner + running_cost(y, u, exo, &model.objective, &model.ovrv))
}

/// `dpsi/dt = -g_y^T psi - l_y`.
pub fn adjoint_rhs(
    t: f64,
    y: &OcpState,
    u: f64,
    psi: &[f64; 4],
    exo: &ExoSample,
    model: &PairModel,
) -> Result<[f64; 4]> {
    let (jac, _) = state_jacobian(t, y, u, exo, model)?;
    let (l_y, _) = running_cost_gradient(y, u, exo, &model.objective, &model.ovrv);
    let mut out = [0.0; 4];
    for (j, o) in out.iter_mut().enumerate() {
        let gt_psi: f64 = (0..4).map(|i| jac[i][j] * psi[i]).sum();
        *o = -gt_psi - l_y[j];
    }
    Ok(out)
}

/// `H_u = psi_2 + cos(phi) (f_AV + u)`.
pub fn hamiltonian_gradient(
    y: &OcpState,
    u: f64,
    psi2: f64,
    exo: &ExoSample,
    phi: SvoAngle,
    ovrv: &OvrvParams,
) -> f64 {
    let (w_self, _) = phi.weights();
    psi2 + w_self * (av_free_accel(y, exo, ovrv) + u)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::objective::ObjectiveParams;
    use crate::vehicle::{IdmParams, OvrvParams};
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn model(phi: f64) -> PairModel {
        PairModel {
            ovrv: OvrvParams::default(),
            idm: IdmParams::default(),
            av_length: 5.0,
            objective: ObjectiveParams {
                phi: SvoAngle::new(phi).unwrap(),
                ..Default::default()
            },
        }
    }

    /// Pair at speed `v` with both vehicles at their equilibrium gaps.
    fn equilibrium(v: f64) -> (OcpState, ExoSample) {
        let m = model(0.1);
        let av_gap = m.ovrv.equilibrium_gap(v);
        let f_gap = m.idm.equilibrium_gap(v).unwrap();
        let exo = ExoSample {
            x: 100.0,
            v,
            length: 5.0,
        };
        let x_av = exo.x - exo.length - av_gap;
        let y = OcpState::new(x_av, v, x_av - m.av_length - f_gap, v);
        (y, exo)
    }

    #[test]
    fn fixed_point_has_zero_acceleration() {
        let (y, exo) = equilibrium(15.0);
        let g = system_dynamics(0.0, &y, 0.0, &exo, &model(0.1)).unwrap();
        assert_abs_diff_eq!(g[1], 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(g[3], 0.0, epsilon = 1e-12);
        assert_eq!(g[0], 15.0);
        assert_eq!(g[2], 15.0);
    }

    #[test]
    fn control_enters_additively() {
        let (y, exo) = equilibrium(15.0);
        let g = system_dynamics(0.0, &y, 0.5, &exo, &model(0.1)).unwrap();
        assert_abs_diff_eq!(g[1], 0.5, epsilon = 1e-12);
    }

    #[test]
    fn collision_is_reported() {
        let m = model(0.1);
        let exo = ExoSample {
            x: 100.0,
            v: 10.0,
            length: 5.0,
        };
        let y = OcpState::new(80.0, 10.0, 76.0, 10.0);
        assert!(matches!(
            system_dynamics(1.5, &y, 0.0, &exo, &m),
            Err(Error::Collision { vehicle: 1, .. })
        ));
        let y = OcpState::new(96.0, 10.0, 60.0, 10.0);
        assert!(matches!(
            system_dynamics(1.5, &y, 0.0, &exo, &m),
            Err(Error::Collision { vehicle: 0, .. })
        ));
    }

    #[test]
    fn standstill_clamp() {
        let m = model(0.1);
        let exo = ExoSample {
            x: 30.0,
            v: 0.0,
            length: 5.0,
        };
        // AV stopped too close; OVRV would command reverse.
        let y = OcpState::new(20.0, 0.0, 13.5, 0.0);
        let g = system_dynamics(0.0, &y, -0.6, &exo, &m).unwrap();
        assert_eq!(g[1], 0.0);
        assert_eq!(g[3], 0.0);
        let (jac, g_u) = state_jacobian(0.0, &y, -0.6, &exo, &m).unwrap();
        assert_eq!(jac[1], [0.0; 4]);
        assert_eq!(jac[3], [0.0; 4]);
        assert_eq!(g_u, [0.0; 4]);
    }

    #[test]
    fn hamiltonian_examples() {
        let m = model(0.1);
        let (y, exo) = equilibrium(12.0);
        let l = running_cost(&y, 0.3, &exo, &m.objective, &m.ovrv);
        assert_eq!(hamiltonian(0.0, &y, 0.3, &[0.0; 4], &exo, &m).unwrap(), l);

        // All penalties zero: AV and follower at 30 m/s, spacing 10, u cancels f_AV.
        let m = model(std::f64::consts::FRAC_PI_4);
        let exo = ExoSample {
            x: 100.0,
            v: 30.0,
            length: 5.0,
        };
        let y = OcpState::new(85.0, 30.0, 20.0, 30.0);
        let u = -av_free_accel(&y, &exo, &m.ovrv);
        assert_abs_diff_eq!(
            running_cost(&y, u, &exo, &m.objective, &m.ovrv),
            0.0,
            epsilon = 1e-14
        );
        let h = hamiltonian(0.0, &y, u, &[1.0, 0.0, 0.0, 0.0], &exo, &m).unwrap();
        assert_abs_diff_eq!(h, 30.0, epsilon = 1e-12);
        let zero = adjoint_rhs(0.0, &y, u, &[0.0; 4], &exo, &m).unwrap();
        for c in zero {
            assert_abs_diff_eq!(c, 0.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn hamiltonian_gradient_examples() {
        let ovrv = OvrvParams::default();
        // f_AV = 1.339 from the OVRV example, u = 0.
        let y = OcpState::new(0.0, 10.0, -50.0, 10.0);
        let exo = ExoSample {
            x: 45.0,
            v: 12.0,
            length: 5.0,
        };
        assert_abs_diff_eq!(
            hamiltonian_gradient(&y, 0.0, 0.0, &exo, SvoAngle::new(0.0).unwrap(), &ovrv),
            1.339,
            epsilon = 1e-12
        );
        assert_eq!(
            hamiltonian_gradient(&y, 0.4, -3.25, &exo, SvoAngle::ALTRUISTIC, &ovrv),
            -3.25
        );
        let u = 2.0 - av_free_accel(&y, &exo, &ovrv);
        assert_abs_diff_eq!(
            hamiltonian_gradient(&y, u, 0.5, &exo, SvoAngle::EGOISTIC, &ovrv),
            2.4900083305560514,
            epsilon = 1e-12
        );
    }

    #[test]
    fn adjoint_rhs_with_zero_costate_is_minus_cost_gradient() {
        let m = model(0.6);
        let (y, exo) = equilibrium(9.0);
        let rhs = adjoint_rhs(0.0, &y, 0.2, &[0.0; 4], &exo, &m).unwrap();
        let (l_y, _) = running_cost_gradient(&y, 0.2, &exo, &m.objective, &m.ovrv);
        for (a, b) in rhs.iter().zip(l_y) {
            assert_eq!(*a, -b);
        }
    }

    fn arb_case() -> impl Strategy<Value = (f64, OcpState, f64, [f64; 4], ExoSample)> {
        (
            0.0..std::f64::consts::FRAC_PI_2,
            2.0..25.0f64,
            5.0..60.0f64,
            2.0..25.0f64,
            5.0..60.0f64,
            -0.6..0.6f64,
            prop::array::uniform4(-5.0..5.0f64),
            0.0..25.0f64,
        )
            .prop_map(|(phi, v_av, lead_gap, v_f, f_gap, u, psi, v_p)| {
                let exo = ExoSample {
                    x: 200.0,
                    v: v_p,
                    length: 5.0,
                };
                let x_av = exo.x - exo.length - lead_gap;
                let y = OcpState::new(x_av, v_av, x_av - 5.0 - f_gap, v_f);
                (phi, y, u, psi, exo)
            })
    }

    proptest! {
        #[test]
        fn dynamics_match_vehicle_laws((phi, y, u, _psi, exo) in arb_case()) {
            let m = model(phi);
            let g = system_dynamics(0.0, &y, u, &exo, &m).unwrap();
            let ovrv = m.ovrv.accel(exo.x - y.av_position() - exo.length, y.av_speed(), exo.v) + u;
            let idm = m.idm.accel(
                y.av_position() - y.follower_position() - 5.0,
                y.follower_speed(),
                crate::vehicle::relative_speed(y.av_speed(), y.follower_speed()),
            ).unwrap();
            prop_assert_eq!(g[1], ovrv);
            prop_assert_eq!(g[3], idm);
        }

        #[test]
        fn hamiltonian_is_inner_product_plus_cost((phi, y, u, psi, exo) in arb_case()) {
            let m = model(phi);
            let g = system_dynamics(0.0, &y, u, &exo, &m).unwrap();
            let l = running_cost(&y, u, &exo, &m.objective, &m.ovrv);
            let h = hamiltonian(0.0, &y, u, &psi, &exo, &m).unwrap();
            let expected = g[0] * psi[0] + g[1] * psi[1] + g[2] * psi[2] + g[3] * psi[3] + l;
            prop_assert!((h - expected).abs() <= 1e-12 * (1.0 + expected.abs()));
        }

        #[test]
        fn adjoint_rhs_matches_hamiltonian_differences((phi, y, u, psi, exo) in arb_case()) {
            let m = model(phi);
            let rhs = adjoint_rhs(0.0, &y, u, &psi, &exo, &m).unwrap();
            let h = 1e-6;
            for (j, r) in rhs.iter().enumerate() {
                let mut up = y;
                let mut dn = y;
                up.0[j] += h;
                dn.0[j] -= h;
                let dh = (hamiltonian(0.0, &up, u, &psi, &exo, &m).unwrap()
                    - hamiltonian(0.0, &dn, u, &psi, &exo, &m).unwrap()) / (2.0 * h);
                prop_assert!((r + dh).abs() <= 1e-5 * dh.abs().max(1.0),
                    "component {j}: {} vs {}", r, -dh);
            }
        }

        #[test]
        fn hamiltonian_gradient_matches_du((phi, y, u, psi, exo) in arb_case()) {
            let m = model(phi);
            let h = 1e-6;
            let dh = (hamiltonian(0.0, &y, u + h, &psi, &exo, &m).unwrap()
                - hamiltonian(0.0, &y, u - h, &psi, &exo, &m).unwrap()) / (2.0 * h);
            let hu = hamiltonian_gradient(&y, u, psi[1], &exo, m.objective.phi, &m.ovrv);
            prop_assert!((hu - dh).abs() <= 1e-6 * dh.abs().max(1.0));
        }
    }
}
