use leraylab::lab::{linear_block_estimate_sweep, profile_linear_force};
use leraylab::picard::{picard_profile_solve, PicardOptions};
use leraylab::semigroup::{duhamel_map_profile, DuhamelQuadrature};
use leraylab::solver::*;
use leraylab::spectral::{fractional_laplacian, leray_project, relative_divergence};
use leraylab::{Grid, Rank, SpectralField};
use std::f64::consts::PI;

fn random_solenoidal(g: &Grid, seed: u64, band: f64, amp: f64) -> SpectralField {
    let u = leray_project(&SpectralField::random_band(g, Rank::Vector, seed, band)).unwrap();
    let m = u.lp_norm(f64::INFINITY);
    u.scale(amp / m)
}

fn end_state(u: &SpectralField, dt: f64, t_end: f64) -> SpectralField {
    let ts = TimeStepper { dt, ..TimeStepper::default() };
    let opts = EvolveOptions { snapshot_times: vec![t_end], nonlinear: true };
    evolve_fns(u, 1.0, t_end, &ts, &opts).unwrap().snapshot(t_end).unwrap().clone()
}

#[test]
fn halving_dt_shows_second_order() {
    let g = Grid::new(3, 16, 2.0 * PI).unwrap();
    let u = random_solenoidal(&g, 5, 3.0, 1.0);
    let t_end = 0.2;
    let states: Vec<SpectralField> = [0.02, 0.01, 0.005].iter().map(|&dt| end_state(&u, dt, t_end)).collect();
    let e1 = states[0].sub(&states[1]).unwrap().l2_norm();
    let e2 = states[1].sub(&states[2]).unwrap().l2_norm();
    let ratio = e1 / e2;
    assert!((3.5..=4.5).contains(&ratio), "successive-difference ratio {ratio}");
}

#[test]
fn pure_dissipation_energy_identity() {
    let g = Grid::new(2, 16, 2.0 * PI).unwrap();
    let u = random_solenoidal(&g, 9, 3.0, 1.0);
    let alpha = 0.9;
    let d = 2e-3;
    let centers = [0.05, 0.1, 0.2];
    let mut times: Vec<f64> = centers.iter().flat_map(|&t| [t - d, t, t + d]).collect();
    times.sort_by(f64::total_cmp);
    let ts = TimeStepper { dt: 1e-3, ..TimeStepper::default() };
    let run = evolve_fns(&u, alpha, 0.2 + d, &ts, &EvolveOptions { snapshot_times: times.clone(), nonlinear: false }).unwrap();
    let norms: Vec<f64> = run.snapshots.iter().map(|s| s.velocity.l2_norm()).collect();
    assert!(norms.windows(2).all(|w| w[1] <= w[0]), "{norms:?}");
    for &t in &centers {
        let e = |t: f64| run.snapshot(t).unwrap().l2_norm().powi(2);
        let rate = (e(t + d) - e(t - d)) / (2.0 * d);
        let diss = -2.0 * fractional_laplacian(run.snapshot(t).unwrap(), alpha).unwrap().l2_norm().powi(2);
        assert!((rate / diss - 1.0).abs() <= 0.01, "t = {t}: {rate} vs {diss}");
    }
}

#[test]
fn zero_data_evolves_to_zero() {
    let g = Grid::new(3, 8, 2.0 * PI).unwrap();
    let z = SpectralField::zeros(&g, Rank::Vector);
    let run = evolve_fns(&z, 1.0, 0.1, &TimeStepper::default(), &EvolveOptions::default()).unwrap();
    assert!(run.snapshots.iter().all(|s| s.velocity.l2_norm() == 0.0));
}

#[test]
fn zero_amplitude_gives_zero_profile() {
    let g = Grid::new(3, 16, 4.0 * PI).unwrap();
    let (init, run) = evolve_from_sigma(&SigmaSpec::canonical(0.0), 1.0, &g, 1.0, &TimeStepper::default(), &EvolveOptions::default()).unwrap();
    assert_eq!(init.u0.l2_norm(), 0.0);
    let p = profile_extract(&run).unwrap();
    assert_eq!(p.v.l2_norm(), 0.0);
    assert_eq!(p.pressure.l2_norm(), 0.0);
    let pic = picard_profile_solve(&init.data, None, 1.0, &PicardOptions::default()).unwrap();
    assert_eq!(pic.v.l2_norm(), 0.0);
}

#[test]
fn pressure_has_zero_mean_and_snapshots_are_solenoidal() {
    let g = Grid::new(3, 16, 4.0 * PI).unwrap();
    let (_, run) = evolve_from_sigma(&SigmaSpec::canonical(0.1), 1.0, &g, 1.0, &TimeStepper::default(), &EvolveOptions::default()).unwrap();
    for s in &run.snapshots {
        assert!(relative_divergence(&s.velocity).unwrap() <= 1e-10);
    }
    let p = profile_extract(&run).unwrap();
    assert_eq!(p.pressure.mean()[0].norm(), 0.0);
    assert!(relative_divergence(&p.v).unwrap() <= 1e-10);
}

fn quick_quad() -> DuhamelQuadrature {
    DuhamelQuadrature { s_min: 1e-2, nodes: 6, grading: 2.0 }
}

#[test]
fn doubling_quadrature_nodes_changes_little() {
    let g = Grid::new(3, 24, 6.0 * PI).unwrap();
    let init = make_initial_data(&SigmaSpec::canonical(0.1), 1.0, &g).unwrap();
    let zero = SpectralField::zeros(&g, Rank::Vector);
    let a = duhamel_map_profile(&init.data, &zero, 1.0, &quick_quad()).unwrap().field;
    let b = duhamel_map_profile(&init.data, &zero, 1.0, &DuhamelQuadrature { nodes: 12, ..quick_quad() }).unwrap().field;
    let rel = a.sub(&b).unwrap().l2_norm() / b.l2_norm();
    assert!(rel <= 1e-4, "{rel}");
}

#[test]
fn one_duhamel_application_matches_time_marching() {
    // At small amplitude the profile is quadratic in the data to leading
    // order, so one application from v = 0 is the linearized solution.
    let g = Grid::new(3, 32, 8.0 * PI).unwrap();
    let quad = DuhamelQuadrature { s_min: 1e-3, ..quick_quad() };
    let (init, run) = evolve_from_sigma(&SigmaSpec::canonical(0.02), 1.0, &g, 1.0, &TimeStepper::default(), &EvolveOptions::default()).unwrap();
    let marched = profile_extract(&run).unwrap().v;
    let zero = SpectralField::zeros(&g, Rank::Vector);
    let once = duhamel_map_profile(&init.data, &zero, 1.0, &quad).unwrap().field;
    let r = WINDOW_INNER * g.box_length();
    let rel = once.sub(&marched).unwrap().l2_norm_within(r) / marched.l2_norm_within(r);
    assert!(rel <= 0.02, "{rel}");
}

#[test]
fn block_estimate_ratios_are_bounded_on_a_profile() {
    // Desk-scale boxes only resolve blocks q <= 0, where the left side carries
    // 2^{2 q alpha} and the force/pressure terms do not shrink; the log-ratio
    // therefore climbs at most at the dissipation rate 2 alpha ln 2.
    let g = Grid::new(3, 24, 6.0 * PI).unwrap();
    let init = make_initial_data(&SigmaSpec::canonical(0.1), 1.0, &g).unwrap();
    let opts = PicardOptions { tol: 1e-8, quad: DuhamelQuadrature { s_min: 5e-2, nodes: 4, grading: 2.0 }, ..PicardOptions::default() };
    let pic = picard_profile_solve(&init.data, None, 1.0, &opts).unwrap();
    let f = profile_linear_force(&init.u0, &pic.v).unwrap();
    let fam = leraylab::lp::DyadicFamily::new(&g);
    let qs: Vec<i32> = (fam.q_min() + 1..=fam.q_max_interior()).collect();
    let (reports, slope) = linear_block_estimate_sweep(&pic.v, &pic.pressure, &f, &qs, 2.0, 1.0).unwrap();
    assert!(reports.iter().all(|r| r.passed()));
    let rate = 2.0 * std::f64::consts::LN_2;
    assert!(slope > 0.0 && slope <= rate + 0.1, "slope {slope}");
}
