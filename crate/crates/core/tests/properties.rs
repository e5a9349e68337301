use std::f64::consts::{FRAC_PI_2, FRAC_PI_3, PI, TAU};

use cavity_nbody::analysis::{find_fixed_points, flow_at, sample_flow_field, Grid};
use cavity_nbody::dicke::{coherent_spin_state, spin_vector, CollectiveOperator, DickeSpace, OperatorKind};
use cavity_nbody::dynamics::MeanFieldModel;
use cavity_nbody::effective::{effective_model_second_order, InverseMode, LadderModel, Monomial};
use cavity_nbody::linalg::max_abs_diff;
use cavity_nbody::params::{calibrate_alpha_product, chi3_closed_form, with_alpha_product, PhysicalParams};
use cavity_nbody::C64;
use proptest::prelude::*;

fn params(alpha1: C64, alpha2: C64) -> PhysicalParams {
    PhysicalParams::two_tone(1000, TAU * 0.48e6, TAU * 500e6, TAU * 56e3, TAU * 500e3, 3, alpha1, alpha2, 0.0, None).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn angular_momentum_algebra(n in 1usize..40) {
        let s = DickeSpace::new(n).unwrap();
        let b = |k| CollectiveOperator::build(s, k);
        let (x, y, z) = (b(OperatorKind::X), b(OperatorKind::Y), b(OperatorKind::Z));
        let iz = z.scale(C64::i());
        prop_assert!(max_abs_diff(x.commutator(&y).unwrap().matrix(), iz.matrix()) < 1e-10);
        let ix = x.scale(C64::i());
        prop_assert!(max_abs_diff(y.commutator(&z).unwrap().matrix(), ix.matrix()) < 1e-10);
        let casimir = x.pow(2).add(&y.pow(2)).unwrap().add(&z.pow(2)).unwrap();
        let j = s.spin();
        let expect = CollectiveOperator::identity(s).scale(C64::new(j * (j + 1.0), 0.0));
        prop_assert!(max_abs_diff(casimir.matrix(), expect.matrix()) < 1e-9 * (1.0 + j * j));
    }

    #[test]
    fn coherent_state_points_along_bloch_vector(n in 1usize..60, theta in 0.0..PI, phi in -PI..PI) {
        let s = DickeSpace::new(n).unwrap();
        let psi = coherent_spin_state(s, theta, phi).unwrap();
        prop_assert!(psi.validate().is_ok());
        let v = spin_vector(&psi);
        let h = n as f64 / 2.0;
        let want = [h * theta.sin() * phi.cos(), h * theta.sin() * phi.sin(), h * theta.cos()];
        for k in 0..3 {
            prop_assert!((v[k] - want[k]).abs() < 1e-9 * h);
        }
    }

    #[test]
    fn calibration_round_trip(target_hz in 1.0..5000.0f64, a in 0.5..10.0f64) {
        let p = params(C64::new(a, 0.0), C64::new(a, 0.0));
        let prod = calibrate_alpha_product(&p, TAU * target_hz).unwrap();
        let q = with_alpha_product(&p, prod).unwrap();
        let hz = chi3_closed_form(&q).unwrap().abs() * 1e6 / TAU;
        prop_assert!((hz - target_hz).abs() < 1e-9 * target_hz);
    }

    #[test]
    fn tone_phase_steers_interaction_phase(beta in -PI..PI, a in 1.0..6.0f64) {
        let p0 = params(C64::new(a, 0.0), C64::new(a, 0.0));
        let p1 = params(C64::new(a, 0.0), C64::from_polar(a, beta));
        prop_assert!((chi3_closed_form(&p0).unwrap() - chi3_closed_form(&p1).unwrap()).abs() < 1e-12 * chi3_closed_form(&p0).unwrap().abs());
        let c = |p: &PhysicalParams| {
            let m = LadderModel::from_params(p, 3).unwrap();
            effective_model_second_order(&m, 12, InverseMode::LeadingOrder).unwrap().coefficient(Monomial::RaiseN)
        };
        let (c0, c1) = (c(&p0), c(&p1));
        prop_assert!((c1 - c0 * C64::from_polar(1.0, beta)).norm() < 1e-10 * c0.norm());
        prop_assert!((p1.interaction_phase(3).unwrap() - beta / 3.0).abs() < 1e-12);
    }

    #[test]
    fn flow_covariance_and_symmetries(phi_d in -PI..PI, chi in 0.1..1e4f64) {
        let m0 = MeanFieldModel::new(3, chi, 0.0);
        let md = MeanFieldModel::new(3, chi, phi_d);
        let scale = 3.0 * chi;
        for f in sample_flow_field(&m0, Grid { n_theta: 20, n_phi: 40 }) {
            let (th, ph) = (f.theta, f.phi);
            let rotated = flow_at(&md, th, ph - phi_d);
            prop_assert!((rotated.dtheta_dt - f.dtheta_dt).abs() < 1e-10 * scale);
            prop_assert!((rotated.dphi_dt - f.dphi_dt).abs() < 1e-10 * scale);
            let shifted = flow_at(&m0, th, ph + 2.0 * FRAC_PI_3);
            prop_assert!((shifted.dtheta_dt - f.dtheta_dt).abs() < 1e-10 * scale);
            prop_assert!((shifted.dphi_dt - f.dphi_dt).abs() < 1e-10 * scale);
            let mirrored = flow_at(&m0, PI - th, -ph);
            prop_assert!((mirrored.dtheta_dt + f.dtheta_dt).abs() < 1e-10 * scale);
            prop_assert!((mirrored.dphi_dt + f.dphi_dt).abs() < 1e-10 * scale);
        }
    }

    #[test]
    fn equator_carries_no_net_flux(phi_d in -PI..PI, n_body in 2u32..6) {
        let m = MeanFieldModel::new(n_body, 100.0, phi_d);
        let k = 240;
        let net: f64 = (0..k).map(|j| flow_at(&m, FRAC_PI_2, TAU * j as f64 / k as f64).dtheta_dt).sum::<f64>() / k as f64;
        prop_assert!(net.abs() < 1e-10 * 100.0);
    }
}

#[test]
fn fixed_points_do_not_depend_on_coupling_scale() {
    let base = find_fixed_points(&MeanFieldModel::new(3, 1.0, 0.0)).unwrap();
    for chi in [1e-3, 37.0, 2450.0, -5.0] {
        let fps = find_fixed_points(&MeanFieldModel::new(3, chi, 0.0)).unwrap();
        assert_eq!(fps.len(), base.len());
        for f in &fps {
            let b = base.iter().find(|b| (b.theta - f.theta).abs() < 1e-9 && (b.phi - f.phi).abs() < 1e-9);
            assert_eq!(b.map(|b| b.classification), Some(f.classification));
        }
    }
}
