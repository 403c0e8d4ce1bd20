use std::sync::LazyLock;

use bulksurf_core::diagnostics::{self, EnergyMode};
use bulksurf_core::diskfem::{assemble, gen_disk_mesh, DiscreteOperators};
use bulksurf_core::graphs::PotentialPair;
use bulksurf_core::stepper::{self, interpolation_gap, ProblemData, SchemeParams, Source};
use proptest::prelude::*;

static OPS: LazyLock<DiscreteOperators> = LazyLock::new(|| assemble(&gen_disk_mesh(3, 12).unwrap()).unwrap());

fn pairs() -> [PotentialPair; 3] {
    [
        PotentialPair::regular(),
        PotentialPair::logarithmic(2.0).unwrap(),
        PotentialPair::double_obstacle(1.0).unwrap(),
    ]
}

fn field(len: usize, amp: f64) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-amp..amp, len)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    // Both augmented masses are invariants of the linear equations, whatever
    // the potential and the sources.
    #[test]
    fn augmented_masses_are_conserved(
        phi0 in field(OPS.n_bulk(), 0.5),
        family in 0usize..3,
        fa in -2.0f64..2.0,
        ga in -2.0f64..2.0,
    ) {
        let ops = &*OPS;
        let data = ProblemData::from_bulk(ops, phi0, pairs()[family])
            .with_sources(Source::Ramp(vec![fa; ops.n_bulk()]), Source::Constant(vec![ga; ops.n_bdry()]));
        let params = SchemeParams::new(2e-3, 2e-2, 0.1, 0.1, 0.1);
        let traj = stepper::run_quiet(&data, &params, ops).unwrap();
        let (m0, g0) = diagnostics::augmented_masses(&traj.states[0], params.h, ops);
        for s in &traj.states {
            let (m, g) = diagnostics::augmented_masses(s, params.h, ops);
            prop_assert!((m - m0).abs() <= 1e-9 && (g - g0).abs() <= 1e-9, "{} {}", m - m0, g - g0);
        }
    }

    // Without sources and below the step bound, the Lyapunov functional
    // never increases.
    #[test]
    fn lyapunov_is_nonincreasing(phi0 in field(OPS.n_bulk(), 0.8), family in 0usize..3, eps in 0.05f64..0.5) {
        let ops = &*OPS;
        let pair = pairs()[family];
        let data = ProblemData::from_bulk(ops, phi0, pair);
        let params = SchemeParams::new(1e-3, 1.5e-2, 0.1, 0.1, eps);
        prop_assert!(stepper::step_guard(&params, &pair).ok);
        let traj = stepper::run_quiet(&data, &params, ops).unwrap();
        let l: Vec<f64> = traj.states.iter().map(|s| diagnostics::lyapunov(s, &pair, eps, params.h, ops)).collect();
        for w in l.windows(2) {
            prop_assert!(w[1] - w[0] <= 1e-10, "increase {}", w[1] - w[0]);
        }
    }

    #[test]
    fn interpolant_gap_identity_on_scheme_output(phi0 in field(OPS.n_bulk(), 0.6)) {
        let ops = &*OPS;
        let data = ProblemData::from_bulk(ops, phi0, PotentialPair::regular());
        let params = SchemeParams::new(5e-3, 5e-2, 0.2, 0.2, 0.1);
        let traj = stepper::run_quiet(&data, &params, ops).unwrap();
        let (lhs, rhs) = interpolation_gap(&traj, ops).unwrap();
        prop_assert!((lhs - rhs).abs() <= 1e-12 * rhs.max(f64::MIN_POSITIVE));
    }

    // The regularized energy never exceeds the true one.
    #[test]
    fn regularized_energy_below_true(phi in field(OPS.n_bulk(), 1.0), family in 0usize..3, eps in 0.01f64..1.0) {
        let ops = &*OPS;
        let pair = pairs()[family];
        let psi = ops.trace(&phi);
        let e = diagnostics::energy(&phi, &psi, &pair, EnergyMode::True, ops);
        let er = diagnostics::energy(&phi, &psi, &pair, EnergyMode::Regularized(eps), ops);
        prop_assert!(er <= e + 1e-12 * e.abs().max(1.0) || e.is_infinite());
    }
}

#[test]
fn constant_state_is_stationary_for_every_family() {
    let ops = &*OPS;
    for pair in pairs() {
        let data = ProblemData::from_bulk(ops, vec![0.0; ops.n_bulk()], pair);
        let params = SchemeParams::new(1e-2, 5e-2, 0.1, 0.1, 0.1);
        let traj = stepper::run_quiet(&data, &params, ops).unwrap();
        for s in &traj.states {
            assert!(s.phi.iter().chain(&s.mu).chain(&s.psi).chain(&s.w).all(|&x| x == 0.0));
        }
        assert!(traj.reports.iter().all(|r| r.linsolves == 0));
    }
}

#[test]
fn zero_viscosity_runs_are_flagged() {
    let ops = &*OPS;
    let phi0: Vec<f64> = ops.mesh.vertices.iter().map(|p| 0.3 * p[0]).collect();
    let data = ProblemData::from_bulk(ops, phi0, PotentialPair::regular());
    let params = SchemeParams::new(1e-3, 5e-3, 0.0, 0.0, 0.1);
    let guard = stepper::step_guard(&params, &data.pair);
    assert!(guard.outside_theory);
    let traj = stepper::run_quiet(&data, &params, ops).unwrap();
    assert!(traj.outside_theory);
}

#[test]
fn repeated_runs_agree_bitwise() {
    let ops = &*OPS;
    let phi0: Vec<f64> = ops.mesh.vertices.iter().map(|p| 0.4 * (3.0 * p[0]).sin() * p[1]).collect();
    let data = ProblemData::from_bulk(ops, phi0, PotentialPair::double_obstacle(1.0).unwrap());
    let params = SchemeParams::new(2e-3, 2e-2, 0.1, 0.1, 0.05);
    let a = stepper::run_quiet(&data, &params, ops).unwrap();
    let b = stepper::run_quiet(&data, &params, ops).unwrap();
    assert_eq!(stepper::write_checkpoints(&a, 1), stepper::write_checkpoints(&b, 1));
}
