use dnls::analytic::{solve_theta_c, ThermoParams};
use dnls::experiments::{
    breather_persistence, gaussian_coordinate_test, h1_growth, mode_wandering, phase_scan, sample_chain, EnsembleSettings,
};
use dnls::sampler::Schedule;
use dnls::{make_torus, AutomorphismGroup, Error, GraphTopology};

fn torus_params(g: &GraphTopology, theta: f64, cutoff: f64) -> ThermoParams {
    ThermoParams::new(theta / (cutoff * cutoff), cutoff, g.spacing(), g.n()).unwrap()
}

fn settings() -> EnsembleSettings {
    EnsembleSettings { samples: 2, horizon: 0.5, dt: 1e-3, record_every: 50 }
}

#[test]
fn gauss_rejects_bad_coordinate_counts_and_the_critical_point() {
    let g = make_torus(4, 2).unwrap();
    let group = AutomorphismGroup::torus_translations(&g).unwrap();
    let schedule = Schedule::new(100, 1);
    for k in [0, 1, 17] {
        let err = gaussian_coordinate_test(&torus_params(&g, 1.0, 4.0), &g, &group, &schedule, k).unwrap_err();
        assert!(matches!(err, Error::InvalidParameter { .. }), "{err}");
    }
    let critical = torus_params(&g, solve_theta_c(), 4.0);
    assert!(gaussian_coordinate_test(&critical, &g, &group, &schedule, 3).is_err());
}

#[test]
fn gauss_scales_by_the_bulk_share() {
    let g = make_torus(4, 2).unwrap();
    let group = AutomorphismGroup::torus_translations(&g).unwrap();
    let schedule = Schedule::new(400, 2);
    let sub = gaussian_coordinate_test(&torus_params(&g, 1.0, 8.0), &g, &group, &schedule, 3).unwrap();
    assert_eq!(sub.scale, 8.0);
    assert!(sub.ks_unscaled.is_none());
    assert_eq!(sub.coordinates.len(), 3);
    assert_eq!(sub.correlations.len(), 3);
    let sup = gaussian_coordinate_test(&torus_params(&g, 4.0, 8.0), &g, &group, &schedule, 3).unwrap();
    assert!(sup.scale < 8.0 && sup.ks_unscaled.is_some());
    assert_eq!(sup.pooled, sup.samples * (g.n() - 1));
}

#[test]
fn breather_experiments_check_the_branch() {
    let g = make_torus(4, 2).unwrap();
    let schedule = Schedule::new(200, 3);
    assert!(breather_persistence(&torus_params(&g, 1.0, 8.0), &g, &schedule, &settings()).is_err());
    assert!(mode_wandering(&torus_params(&g, 4.0, 8.0), &g, &schedule, &settings()).is_err());
}

#[test]
fn breather_runs_are_reproducible() {
    let g = make_torus(4, 2).unwrap();
    let p = torus_params(&g, 4.0, 8.0);
    let schedule = Schedule::new(200, 4);
    let a = breather_persistence(&p, &g, &schedule, &settings()).unwrap();
    let b = breather_persistence(&p, &g, &schedule, &settings()).unwrap();
    assert_eq!(a.trajectories.len(), 2);
    assert_eq!(a.csv(), b.csv());
    assert!(a.max_power_drift() < 1e-12);
}

#[test]
fn scans_need_increasing_couplings() {
    let g = make_torus(4, 2).unwrap();
    let schedule = Schedule::new(100, 5);
    assert!(phase_scan(1.0, &[], &g, &schedule).is_err());
    assert!(phase_scan(1.0, &[2.0, 1.0], &g, &schedule).is_err());
    assert!(phase_scan(1.0, &[1.0, 1.0], &g, &schedule).is_err());
    assert_eq!(phase_scan(1.0, &[0.5, 1.0, 2.0], &g, &schedule).unwrap().len(), 3);
}

#[test]
fn h1_fit_needs_three_sizes() {
    let sizes: Vec<_> = [3, 4].iter().map(|&l| make_torus(l, 2).unwrap()).collect();
    assert!(h1_growth(1.0, 1.0, &sizes, &Schedule::new(100, 6)).is_err());
}

#[test]
fn chains_are_seed_deterministic() {
    let g = make_torus(4, 2).unwrap();
    let p = torus_params(&g, 2.0, 2.0);
    let run = |seed| {
        sample_chain(&p, &g, &Schedule::new(300, seed)).unwrap().records.iter().map(|r| r.energy).collect::<Vec<_>>()
    };
    assert_eq!(run(7), run(7));
    assert_ne!(run(7), run(8));
}
