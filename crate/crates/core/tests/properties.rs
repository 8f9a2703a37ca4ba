use circlemap_core::config::{parse_config, ProfileChoice, RunConfig};
use circlemap_core::constants::{build_profile, ProfileSpec};
use circlemap_core::map::{circle_distance, wrap, DriveFunction, MapFamily, Model};
use circlemap_core::orbit::{compute_ladder, critical_orbit, iterate_orbit};
use circlemap_core::returns::{decompose, CriticalOrbits, ReturnMode, SegmentKind};
use proptest::prelude::*;

fn drive() -> impl Strategy<Value = DriveFunction> {
    prop_oneof![
        Just(DriveFunction::Sine),
        Just(DriveFunction::fourier(vec![0.3], vec![1.0]).unwrap()),
        Just(DriveFunction::fourier(vec![0.0, 0.1], vec![1.0, 0.0]).unwrap()),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn lift_is_degree_one(phi in drive(), a in 0.0..1.0f64, l in 1.0..1e4f64, x in 0.0..1.0f64) {
        let f = MapFamily::new(phi, a, l).unwrap();
        let d = f.lift(x + 1.0) - f.lift(x) - 1.0;
        prop_assert!(d.abs() <= 1e-12 * (1.0 + l));
        prop_assert!(circle_distance(f.eval_map(x + 1.0), f.eval_map(x)) <= 1e-12 * (1.0 + l));
    }

    #[test]
    fn parameter_translates_image(phi in drive(), a in 0.0..1.0f64, b in 0.0..1.0f64, x in 0.0..1.0f64) {
        let l = 100.0;
        let fa = MapFamily::new(phi.clone(), a, l).unwrap();
        let fb = fa.with_a(wrap(a + b));
        prop_assert!(circle_distance(fb.eval_map(x), wrap(fa.eval_map(x) + b)) <= 1e-11);
        prop_assert_eq!(fa.eval_deriv(x), fb.eval_deriv(x));
    }

    #[test]
    fn orbit_prefixes_agree(a in 0.0..1.0f64, theta in 0.0..1.0f64, n in 1usize..60, m in 0usize..60) {
        let model = Model::new(DriveFunction::Sine, 1e3).unwrap();
        let family = model.family(a);
        let m = m.min(n);
        let long = iterate_orbit(&family, model.critical(), theta, n);
        let short = iterate_orbit(&family, model.critical(), theta, m);
        let k = short.horizon();
        prop_assert_eq!(&long.points[..=k], &short.points[..]);
        prop_assert_eq!(&long.log_deriv[..=k], &short.log_deriv[..]);
    }

    #[test]
    fn distortion_radii_shrink(a in 0.0..1.0f64, c in 0usize..2, n in 1usize..80) {
        let model = Model::new(DriveFunction::Sine, 1e3).unwrap();
        let trace = critical_orbit(&model.family(a), model.critical(), c, n);
        prop_assume!(trace.critical_hit.is_none());
        let ladder = compute_ladder(&trace, 1.75).unwrap();
        for k in 1..ladder.horizon() {
            prop_assert!(ladder.log_big_d(k + 1) <= ladder.log_big_d(k));
        }
    }

    #[test]
    fn segments_partition_horizon(a in 0.0..1.0f64, deep in any::<bool>()) {
        let model = Model::new(DriveFunction::Sine, 1e3).unwrap();
        let profile = build_profile(model.phi(), 1e3, &ProfileSpec::empirical(0.05, 0.02, 0.01)).unwrap();
        let orbits = CriticalOrbits::compute(&model, a, 60, profile.beta);
        let mode = if deep { ReturnMode::Deep } else { ReturnMode::Shallow };
        for t in &orbits.traces {
            let Ok(dec) = decompose(t, model.critical(), &orbits.bound, &profile, mode) else { continue };
            let mut next = 0;
            for s in &dec.segments {
                prop_assert_eq!(s.start, next);
                prop_assert!(s.end > s.start);
                next = s.end;
            }
            prop_assert_eq!(next, dec.horizon + 1);
            for e in &dec.events {
                let seg = dec.segments.iter().find(|s| s.start == e.time).unwrap();
                prop_assert_eq!(seg.kind, SegmentKind::Bound);
            }
        }
    }

    #[test]
    fn config_round_trips(seed in any::<u64>(), n_max in 0usize..500, samples in 1000usize..1_000_000, beta in 1.51..1.99f64, emp in any::<bool>()) {
        let mut cfg = RunConfig { seed, n_max, samples, ..RunConfig::default() };
        cfg.profile.beta = beta;
        if emp {
            cfg.profile.kind = ProfileChoice::Empirical;
            cfg.profile.sigma = Some(0.01);
            cfg.profile.delta0 = Some(0.005);
            cfg.profile.delta = Some(0.001);
        }
        prop_assert_eq!(parse_config(&cfg.to_toml()).unwrap(), cfg);
    }
}
