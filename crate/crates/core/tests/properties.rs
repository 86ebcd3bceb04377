use esta_core::control::ControlFunction;
use esta_core::deviation::{control_deviation, L1_TOLERANCE};
use esta_core::quadrature::adaptive_simpson;
use esta_core::robustness::{error_bound, sensitivity_tdpt};
use esta_core::units::{scaled, PhysicalParams};
use esta_core::{esta_trajectory, DerivativeMethod, DimensionlessParams, ErrorKind, EstaInputs, Family, Numerics, Simulator, SystematicError};
use proptest::prelude::*;

fn params() -> DimensionlessParams {
    scaled(&PhysicalParams::default()).unwrap()
}

fn pair(family: Family, tf: f64) -> (ControlFunction, ControlFunction) {
    let inputs = EstaInputs::for_family(family, params(), tf).unwrap();
    let (q, _) = esta_trajectory(&inputs).unwrap();
    (inputs.q0, q)
}

#[test]
fn esta_beats_sta_under_correlated_error() {
    let sim = Simulator::new(params(), Numerics::default()).unwrap();
    for family in [Family::QuasiOptimal, Family::QuasiOptimalClassical] {
        let (sta, esta) = pair(family, 1.1);
        for delta in [-0.05, 0.0, 0.05] {
            let err = SystematicError::new(ErrorKind::Correlated, delta).unwrap();
            let f_sta = sim.simulate_transport(&sta, Some(&err)).unwrap();
            let f_esta = sim.simulate_transport(&esta, Some(&err)).unwrap();
            assert!(f_esta > f_sta, "{family:?} δ = {delta}: {f_esta} vs {f_sta}");
        }
    }
}

#[test]
fn slow_transport_is_insensitive() {
    let sim = Simulator::new(params(), Numerics::default()).unwrap();
    let (sta, _) = pair(Family::QuasiOptimal, 4.0);
    for s in sensitivity_tdpt(&sim, &sta, &ErrorKind::ALL).unwrap() {
        assert!(s.sensitivity < 0.05, "{s:?}");
        assert!(s.fidelity() > 0.999);
    }
}

#[test]
fn deviation_is_converged_in_the_l1_tolerance() {
    let inputs = EstaInputs::for_family(Family::QuasiOptimal, params(), 1.2).unwrap();
    let r = control_deviation(&inputs, ErrorKind::Correlated, DerivativeMethod::FiniteDifference).unwrap();
    // the correlated error leaves ω0 fixed, so only the correction moves
    let correction = inputs.basis.combine(&r.d_epsilon_d_delta);
    let tighter = adaptive_simpson(&|t| correction.value(t).abs(), 0.0, 1.2, 0.5 * L1_TOLERANCE);
    assert!((tighter - r.c_q).abs() < 1e-5 * r.c_q, "{tighter} vs {}", r.c_q);
}

proptest! {
    #[test]
    fn bound_is_monotone_in_the_reference(f0 in 0.5f64..1.0, s in 1e-3f64..10.0, a in 0.0f64..1.0, b in 0.0f64..1.0) {
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        prop_assert!(error_bound(f0, s, lo) >= error_bound(f0, s, hi));
        prop_assert!(error_bound(f0, s, hi) >= 0.0);
    }
}
