use east_kcm::crj::{self, SiteSet};
use east_kcm::east_sim::{EastSim, Event, Lattice};
use east_kcm::model::stationary_vector;
use east_kcm::paths::{self, Barrier};
use east_kcm::rng::stream_rng;
use east_kcm::spectral::{build_generator, exact_gap, variational_ratio, TestFunction};
use east_kcm::Configuration;
use proptest::prelude::*;

fn barrier(x: &Configuration, y: &Configuration) -> usize {
    match paths::h_oracle(x, y, 16, 1 << 20).unwrap() {
        Barrier::Exact(k) => k,
        Barrier::ExceedsCap => panic!("cap"),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn stationary_measure_is_normalised(n in 1usize..11, p in 0.01f64..0.99) {
        let s: f64 = stationary_vector(n, p).unwrap().iter().sum();
        prop_assert!((s - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rayleigh_quotient_never_exceeds_tau(
        n in 1usize..6,
        p in 0.1f64..0.9,
        v in 1usize..4,
        raw in proptest::collection::vec(-1.0f64..1.0, 32),
    ) {
        let dim = 1usize << n;
        let values: Vec<f64> = raw[..dim].to_vec();
        prop_assume!(values.iter().any(|&x| (x - values[0]).abs() > 1e-3));
        let gen = build_generator(n, p, v).unwrap();
        let pi = stationary_vector(n, p).unwrap();
        let r = variational_ratio(&TestFunction::new(values).unwrap(), &gen, &pi).unwrap();
        let tau = exact_gap(n, p, v).unwrap().tau;
        prop_assert!(r.ratio <= tau * (1.0 + 1e-9));
    }

    #[test]
    fn crj_exact_quantities_are_consistent(mask in 1u64..(1 << 10), p in 0.05f64..0.95) {
        let s = SiteSet::from_mask(10, mask);
        let dist = crj::crj_last_distribution(&s, p).unwrap();
        let total: f64 = dist.iter().map(|d| d.1).sum();
        prop_assert!((total - 1.0).abs() < 1e-12);
        let g = crj::crj_exact_g(&s, p).unwrap();
        let upper: f64 = dist.iter().filter(|d| d.0 > 5).map(|d| d.1).sum();
        prop_assert!((g - upper).abs() < 1e-12);
        let table = crj::g_table(10, p).unwrap();
        prop_assert!((table.values()[mask as usize] - g).abs() < 1e-12);
    }

    #[test]
    fn distinguished_paths_are_legal(m in 1u32..4, p in 0.1f64..0.9, seed in any::<u64>()) {
        let mut rng = stream_rng(seed, 0);
        let w = paths::sample_endpoint(m, p, &mut rng);
        let w2 = paths::sample_endpoint(m, p, &mut rng);
        let path = paths::distinguished_path(m, &w, &w2).unwrap();
        prop_assert!(path.is_legal());
        prop_assert_eq!(path.len(), 2 * 3usize.pow(m));
        prop_assert_eq!(path.source(), &w);
        prop_assert_eq!(path.target(), &w2);
    }

    #[test]
    fn energy_barrier_is_a_symmetric_ultrametric(a in 0u64..64, b in 0u64..64, c in 0u64..64) {
        let cfg = |w: u64| Configuration::from_index(6, w as usize).unwrap();
        let (x, y, z) = (cfg(a), cfg(b), cfg(c));
        let hxy = barrier(&x, &y);
        prop_assert_eq!(hxy, barrier(&y, &x));
        prop_assert!(barrier(&x, &z) <= hxy.max(barrier(&y, &z)));
    }

    #[test]
    fn east_simulation_resumes_exactly(seed in any::<u64>(), split in 0.1f64..9.9) {
        let run = |cuts: &[f64]| {
            let mut sim = EastSim::new(0.4, Lattice::Finite(8), [2usize, 5], stream_rng(seed, 1)).unwrap();
            let mut events: Vec<Event> = Vec::new();
            for &t in cuts {
                sim.advance_to(t, |e| events.push(e)).unwrap();
            }
            events
        };
        prop_assert_eq!(run(&[10.0]), run(&[split, 10.0]));
    }
}
