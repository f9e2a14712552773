use east_kcm::crj::{self, GSource};
use east_kcm::east_sim::occupation_fractions;
use east_kcm::model::stationary_vector;
use east_kcm::paths;
use east_kcm::spectral::{build_generator, exact_gap, variational_ratio};
use east_kcm::wave_sim::wave_occupation_fractions;

#[test]
fn crj_test_function_ratio_is_below_relaxation_time() {
    let (n, p) = (6, 0.2);
    let g = crj::g_table(n, p).unwrap();
    let gen = build_generator(n, p, 1).unwrap();
    let pi = stationary_vector(n, p).unwrap();
    let r = variational_ratio(&g, &gen, &pi).unwrap();
    let tau = exact_gap(n, p, 1).unwrap().tau;
    assert!(r.ratio <= tau + 1e-9, "{} > {}", r.ratio, tau);
    assert!(r.ratio > 1.0);
}

#[test]
fn gap_eigenfunction_attains_relaxation_time() {
    for (n, p, v) in [(6, 0.3, 1), (6, 0.3, 2), (7, 0.6, 7)] {
        let rep = exact_gap(n, p, v).unwrap();
        let gen = build_generator(n, p, v).unwrap();
        let pi = stationary_vector(n, p).unwrap();
        let r = variational_ratio(&rep.eigenfunction(&pi), &gen, &pi).unwrap();
        assert!((r.ratio / rep.tau - 1.0).abs() < 1e-8, "n={n} v={v}: {} vs {}", r.ratio, rep.tau);
    }
}

#[test]
fn monte_carlo_pipeline_tracks_exact_pipeline() {
    let exact = crj::lower_bound_pipeline(6, 0.25, GSource::Exact).unwrap();
    let mc = crj::lower_bound_pipeline(6, 0.25, GSource::MonteCarlo { reps: 4000, seed: 3 }).unwrap();
    assert!((mc.var_g / exact.var_g - 1.0).abs() < 0.1);
    assert_eq!(exact.certified, Some(true));
}

#[test]
fn simulators_preserve_product_measure() {
    let p = 0.3;
    for est in occupation_fractions(p, 6, 40.0, 400, 11).unwrap() {
        assert!(est.within(p, 4.0), "east {est:?}");
    }
    for est in wave_occupation_fractions(p, 3, 6, 40.0, 400, 12).unwrap() {
        assert!(est.within(p, 4.0), "wave {est:?}");
    }
}

#[test]
fn comparison_constants_agree_with_sanity_check() {
    let c = paths::comparison_bound(3, 0.5).unwrap();
    let s = paths::comparison_sanity(6, 0.5, 3).unwrap();
    assert!((s.bl / (c.b * c.l) - 1.0).abs() < 1e-12);
    assert!((c.log_tau_upper - (c.tau_wave_bound.ln() + c.log_b + c.log_l)).abs() < 1e-12);
    assert!(s.holds);
}
