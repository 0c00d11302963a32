use ttcbf::barrier::{ClassK, ClassKKind};
use ttcbf::scenarios::corridor::CorridorParams;
use ttcbf::scenarios::sim::{Method, StepStatus};
use ttcbf::scenarios::spring_mass::SpringMassParams;
use ttcbf::scenarios::Scenario;

fn corridor(duration: f64) -> Scenario {
    Scenario::Corridor(CorridorParams {
        duration,
        ..CorridorParams::default()
    })
}

#[test]
fn filtered_corridor_runs_stay_safe() {
    let sc = corridor(4.0);
    for kind in ClassKKind::ALL {
        for (method, gain) in [(Method::Ttcbf, 0.3), (Method::Attcbf, 1.0)] {
            let tr = sc.run(method, ClassK::new(kind, gain).unwrap()).unwrap();
            assert!(tr.initial_condition_ok);
            assert_eq!(tr.fallback_count(), 0, "{method} {kind}");
            assert!(tr.min_barrier() >= -1e-6, "{method} {kind}: {}", tr.min_barrier());
            for s in &tr.samples {
                assert!(s.eta.iter().all(|e| (-1e-9..=1.0 + 1e-9).contains(e)));
                assert!(s.zeta.iter().all(|&z| z >= -1e-9));
            }
        }
    }
}

#[test]
fn hocbf_keeps_every_auxiliary_function_nonnegative() {
    let tr = corridor(4.0).run(Method::Hocbf, ClassK::linear(1.0)).unwrap();
    assert!(tr.min_barrier() >= -1e-6);
    for s in &tr.samples {
        assert_eq!(s.psi.len(), 18);
        assert!(s.psi.iter().all(|&p| p >= -1e-6), "t = {}", s.t);
    }
}

#[test]
fn initial_condition_check_holds_for_both_defaults() {
    let sm = Scenario::SpringMass(SpringMassParams::default());
    assert!(sm.run(Method::Ttcbf, ClassK::linear(0.95)).unwrap().initial_condition_ok);
    assert!(corridor(1.0).run(Method::Attcbf, ClassK::linear(1.0)).unwrap().initial_condition_ok);
}

#[test]
fn normalized_efforts_lie_in_unit_interval() {
    let sc = corridor(2.0);
    for method in Method::ALL {
        let tr = sc.run(method, sc.default_classk()).unwrap();
        let m = sc.metrics(&tr).unwrap();
        assert!(m.normalized_effort.iter().all(|e| (0.0..=1.0).contains(e)), "{method}: {:?}", m.normalized_effort);
    }
}

#[test]
fn zero_duration_logs_one_sample() {
    for sc in [corridor(0.0), Scenario::SpringMass(SpringMassParams { duration: 0.0, ..Default::default() })] {
        let tr = sc.run(Method::Ttcbf, sc.default_classk()).unwrap();
        assert_eq!(tr.samples.len(), 1);
        assert_eq!(tr.samples[0].status, StepStatus::Optimal);
    }
}

#[test]
fn nominal_method_applies_the_nominal_input() {
    let sc = Scenario::SpringMass(SpringMassParams { duration: 1.0, ..Default::default() });
    let tr = sc.run(Method::Nominal, sc.default_classk()).unwrap();
    assert!(tr.samples.iter().all(|s| s.u == s.u_nom && s.status == StepStatus::Nominal));
    assert_eq!(tr.qp_solves, 0);
}
