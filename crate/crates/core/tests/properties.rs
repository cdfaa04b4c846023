use absnorm_core::badsets::{g_set, h_set, BadSetIndex};
use absnorm_core::discrepancy::{extreme_discrepancy, orbit_points, star_discrepancy, PointSet};
use absnorm_core::enclosure::{self, to_f64};
use absnorm_core::mc::{mc_measure_set, SamplerSpec};
use absnorm_core::measure::{int, rat};
use absnorm_core::orbit::{self, Band, Window};
use absnorm_core::schedule::ParamSchedule;
use absnorm_core::{Interval, IntervalSet, Rational};
use num_bigint::BigInt;
use proptest::prelude::*;

fn unit_rational() -> impl Strategy<Value = Rational> {
    (1i64..=60).prop_flat_map(|q| (0..q, Just(q))).prop_map(|(p, q)| rat(p, q))
}

fn interval() -> impl Strategy<Value = Interval> {
    (1i64..=24).prop_flat_map(|q| (0..q, Just(q))).prop_flat_map(|(a, q)| (Just(a), a + 1..=q, Just(q))).prop_map(
        |(a, c, q)| Interval::new(rat(a, q), rat(c, q)).unwrap(),
    )
}

fn interval_set() -> impl Strategy<Value = IntervalSet> {
    prop::collection::vec(interval(), 0..5).prop_map(IntervalSet::from_parts)
}

fn window_and_band() -> impl Strategy<Value = (Window, Band)> {
    (2u64..=3, 0u64..=2, 1u64..=5, 1u32..=3)
        .prop_flat_map(|(b, m, n, k)| (Just(b), Just(m), Just(n), Just(k), 0..1u64 << k))
        .prop_map(|(b, m, n, k, a)| (Window::new(b, m, n).unwrap(), Band::dyadic(a, k).unwrap()))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn set_algebra(a in interval_set(), b in interval_set()) {
        let u = a.union(&b);
        let i = a.intersect(&b);
        prop_assert!(u.is_canonical() && i.is_canonical());
        prop_assert_eq!(&u, &b.union(&a));
        prop_assert_eq!(&i, &b.intersect(&a));
        prop_assert_eq!(u.measure() + i.measure(), a.measure() + b.measure());
        prop_assert!(a.is_subset_of(&u) && i.is_subset_of(&a));
        prop_assert_eq!(a.difference(&b), a.intersect(&b.complement_in_unit()));
    }

    #[test]
    fn complement_partitions_unit(a in interval_set()) {
        let c = a.complement_in_unit();
        prop_assert_eq!(c.measure(), int(1) - a.measure());
        prop_assert_eq!(a.union(&c), IntervalSet::unit());
        prop_assert!(a.intersect(&c).is_empty());
        prop_assert_eq!(c.complement_in_unit(), a);
    }

    #[test]
    fn membership_matches_parts(a in interval_set(), x in unit_rational()) {
        prop_assert_eq!(a.contains(&x), a.parts().iter().any(|p| p.contains(&x)));
    }

    #[test]
    fn pullback_preserves_measure_and_membership(a in interval_set(), b in 2u64..=4, j in 0u64..=3, x in unit_rational()) {
        let p = a.pullback(b, j);
        prop_assert!(p.is_canonical());
        prop_assert_eq!(p.measure(), a.measure());
        let bj = int(b.pow(j as u32) as i64);
        let y = &x * &bj;
        let frac = &y - Rational::from_integer(y.floor().to_integer());
        prop_assert_eq!(p.contains(&x), a.contains(&frac));
    }

    #[test]
    fn region_membership_is_the_counting_function((w, band) in window_and_band(), pick in 0usize..64, x in unit_rational()) {
        let values = orbit::attainable_f_values(w.len, &band);
        let t = values[pick % values.len()].clone();
        let region = orbit::deviation_region(&w, &band, &t, 1 << 20).unwrap();
        prop_assert_eq!(region.contains(&x), orbit::f_value(&x, &w, &band) >= t);
        let strict = orbit::deviation_region_strict(&w, &band, &t, 1 << 20).unwrap();
        prop_assert!(strict.is_subset_of(&region));
        prop_assert_eq!(strict.contains(&x), orbit::f_value(&x, &w, &band) > t);
    }

    #[test]
    fn sweep_and_count_law_agree((w, band) in window_and_band(), pick in 0usize..64) {
        let values = orbit::attainable_f_values(w.len, &band);
        let t = values[pick % values.len()].clone();
        let swept = orbit::deviation_region(&w, &band, &t, 1 << 20).unwrap().measure();
        prop_assert_eq!(swept, orbit::deviation_measure(&w, &band, &t).unwrap());
    }

    #[test]
    fn regions_shrink_as_threshold_grows((w, band) in window_and_band(), s in 0i64..=12, d in 0i64..=12) {
        let lo = rat(s, 4);
        let hi = rat(s + d, 4);
        let big = orbit::deviation_region(&w, &band, &lo, 1 << 20).unwrap();
        let small = orbit::deviation_region(&w, &band, &hi, 1 << 20).unwrap();
        prop_assert!(small.is_subset_of(&big));
    }

    #[test]
    fn exp_and_sqrt_enclose(p in -400i64..=400, q in 1i64..=50) {
        let x = rat(p, q);
        let e = enclosure::exp(&x, 80);
        let v = (p as f64 / q as f64).exp();
        prop_assert!(to_f64(e.lo()) <= v * (1.0 + 1e-12) && v * (1.0 - 1e-12) <= to_f64(e.hi()));
        prop_assert!(enclosure::exp(&x, 120).is_subset_of(&e) || enclosure::exp(&x, 120).width() <= e.width());
        let y = rat(p.abs() + 1, q);
        let r = enclosure::sqrt(&y, 80).unwrap();
        prop_assert!(r.lo() * r.lo() <= y && y <= r.hi() * r.hi());
    }

    #[test]
    fn ln_encloses(p in 1i64..=10_000, q in 1i64..=100) {
        let e = enclosure::ln(&rat(p, q), 80).unwrap();
        let v = (p as f64 / q as f64).ln();
        prop_assert!(to_f64(e.lo()) - 1e-12 <= v && v <= to_f64(e.hi()) + 1e-12);
        prop_assert!(e.width() < rat(1, 1 << 40));
    }

    #[test]
    fn discrepancy_bounds(points in prop::collection::vec(unit_rational(), 1..20)) {
        let n = points.len() as i64;
        let ps = PointSet::new(points.clone()).unwrap();
        let d = extreme_discrepancy(&ps).unwrap();
        let ds = star_discrepancy(&ps).unwrap();
        prop_assert!(rat(1, n) <= d && d <= int(1));
        prop_assert!(ds <= d && d <= &ds * int(2));
        let mut rev = points;
        rev.reverse();
        prop_assert_eq!(extreme_discrepancy(&PointSet::new(rev).unwrap()).unwrap(), d);
    }

    #[test]
    fn orbit_points_are_fractional_parts(x in unit_rational(), b in 2u64..=5, n in 1u64..=12) {
        let ps = orbit_points(&x, b, n).unwrap();
        for (j, p) in ps.points().iter().enumerate() {
            let y = &x * Rational::from_integer(BigInt::from(b).pow(j as u32));
            prop_assert_eq!(p, &(&y - Rational::from_integer(y.floor().to_integer())));
        }
    }

    #[test]
    fn schedule_toml_roundtrip(dn in -7i64..=16, en in 1i64..=8, z in 2u64..=5) {
        let mut s = ParamSchedule::builtin("toy-small").unwrap();
        s.delta = rat(dn, 16);
        s.eta = rat(en, 64);
        if let absnorm_core::schedule::ZRule::Table { default, .. } = &mut s.z_rule {
            *default = z;
        }
        let back = ParamSchedule::from_toml(&s.to_toml()).unwrap();
        prop_assert_eq!(back.hash(), s.hash());
        prop_assert_eq!(back, s);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn bad_set_enclosures_are_ordered(n in 2u64..=3, h in 1u64..=2, a in 0u64..4, lm in any::<bool>()) {
        let sched = ParamSchedule::builtin("toy-small").unwrap();
        let t = absnorm_core::badsets::t_pow2(n);
        let h = h.min(t);
        let mut idx = if lm { BadSetIndex::h(2, n, 0, h, n, 1) } else { BadSetIndex::g(2, n, 0, h) };
        idx.a = a % (1 << idx.depth().min(t));
        let set = if lm { h_set(&idx, &sched, 32, 1 << 24) } else { g_set(&idx, &sched, 32, 1 << 24) };
        let set = set.unwrap();
        prop_assert!(set.inner.is_subset_of(&set.outer));
        let m = set.measure();
        prop_assert!(m.lo() >= &int(0) && m.hi() <= &int(1));
    }

    #[test]
    fn sampling_is_reproducible(seed in any::<u64>(), a in interval_set()) {
        let spec = SamplerSpec::new(seed, 300);
        prop_assert_eq!(mc_measure_set(&a, &spec).unwrap(), mc_measure_set(&a, &spec).unwrap());
        prop_assert_eq!(spec.draw_range(100, 140), spec.draw_range(0, 300)[100..140].to_vec());
    }
}
