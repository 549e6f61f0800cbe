use predeco::collision::{self, EvolveOptions};
use predeco::denmat;
use predeco::exec::trial_rng;
use predeco::linalg;
use predeco::transport::{self, BoundaryMode, FrontField, WalkConfig, WalkPopulation};

#[test]
fn omega_stays_traceless_under_random_schedules() {
    for seed in 0..4 {
        let dim = 6;
        let basis = linalg::haar_unitary(dim, &mut trial_rng(seed, 0));
        let levels = linalg::from_real_diagonal(&(0..dim).map(|i| i as f64 * 0.5).collect::<Vec<_>>());
        let h = linalg::hermitian_part(&(&basis * levels * basis.adjoint()));
        let rho0 = denmat::thermal_state(&h, 2.0).unwrap();
        let events = collision::random_collision_schedule(2.0, 5.0, dim, 3, seed).unwrap();
        let traj = collision::evolve_with_source(&rho0, &h, &events, EvolveOptions::new(5.0, 0.05)).unwrap();
        assert!(traj.max_abs_omega_trace() <= 1e-10);
        for (p, m) in traj.trace_plus.iter().zip(&traj.trace_minus) {
            assert!((p - m).abs() <= 1e-10);
        }
    }
}

#[test]
fn walk_and_pde_fronts_both_advance() {
    let walk = transport::duplication_walk(&WalkPopulation::single(0), 30, WalkConfig::default()).unwrap();
    assert_eq!(walk.last().unwrap().front(), Some(30));

    let init = FrontField::step_profile(80.0, transport::DEFAULT_GRID_SPACING, 0.0).unwrap();
    let h = transport::run_kpp(init, transport::DEFAULT_DT, 30.0, BoundaryMode::Free, 40).unwrap();
    let first = h.first().unwrap().level_crossing(0.5).unwrap();
    let last = h.last().unwrap().level_crossing(0.5).unwrap();
    assert!(last > first + 30.0);
}
