use lockwalk_core::construction::{build_levels, verify_folner, GrowthSchedule, Limits, Tolerance};
use lockwalk_core::diagnostics::{convolve, l1_atoms, translate, ConvolveOptions};
use lockwalk_core::heavy_tail::LevelSampler;
use lockwalk_core::sampler::{
    left_products, right_products, sample_trajectory, Color, Step, StepTable, Trajectory, TrajectorySeed,
};
use lockwalk_core::tail::{record_times, stabilization_index, tau, TauOutcome, WSets};
use lockwalk_core::{ElementSet, GroupElement, GroupSpec, TruncatedMeasure};
use proptest::collection::{btree_set, vec};
use proptest::prelude::*;

fn lamplighter() -> impl Strategy<Value = GroupElement> {
    (-20i64..=20, btree_set(-15i64..=15, 0..6)).prop_map(|(t, l)| GroupElement::lamplighter(t, l))
}

fn product_element() -> impl Strategy<Value = GroupElement> {
    (vec(-5i64..=5, 0..3), -10i64..=10, btree_set(-8i64..=8, 0..4))
        .prop_map(|(f, t, l)| GroupElement::with_free(f, t, l))
}

fn small_measure() -> impl Strategy<Value = TruncatedMeasure> {
    vec((lamplighter(), 1u32..10), 1..5).prop_map(|atoms| {
        let total: u32 = atoms.iter().map(|(_, w)| w).sum();
        let mut m = TruncatedMeasure::default();
        for (g, w) in atoms {
            m.add(g, f64::from(w) / f64::from(total));
        }
        m
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn group_axioms(a in lamplighter(), b in lamplighter(), c in lamplighter()) {
        prop_assert_eq!(a.mul(&b).mul(&c), a.mul(&b.mul(&c)));
        let e = GroupElement::identity();
        prop_assert_eq!(a.mul(&e), a.clone());
        prop_assert_eq!(e.mul(&a), a.clone());
        prop_assert!(a.mul(&a.inv()).is_identity());
        prop_assert!(a.inv().mul(&a).is_identity());
        prop_assert_eq!(a.mul(&b).inv(), b.inv().mul(&a.inv()));
    }

    #[test]
    fn product_group_axioms(a in product_element(), b in product_element(), c in product_element()) {
        prop_assert_eq!(a.mul(&b).mul(&c), a.mul(&b.mul(&c)));
        prop_assert!(a.mul(&a.inv()).is_identity());
    }

    #[test]
    fn factor_map_is_a_homomorphism(a in product_element(), b in product_element()) {
        let spec = GroupSpec::free_times_lamplighter(3).unwrap();
        prop_assert_eq!(spec.phi(&a.mul(&b)), spec.phi(&a).mul(&spec.phi(&b)));
        prop_assert_eq!(spec.phi(&a.inv()), spec.phi(&a).inv());
    }

    #[test]
    fn serialization_round_trips(a in product_element()) {
        let s = a.to_string();
        prop_assert_eq!(s.parse::<GroupElement>().unwrap(), a);
    }

    #[test]
    fn set_product_laws(xs in vec(lamplighter(), 1..5), ys in vec(lamplighter(), 1..5), zs in vec(lamplighter(), 1..4)) {
        let (x, y, z): (ElementSet, ElementSet, ElementSet) =
            (xs.into_iter().collect(), ys.into_iter().collect(), zs.into_iter().collect());
        let cap = 10_000;
        let left = x.product(&y, cap).unwrap().product(&z, cap).unwrap();
        let right = x.product(&y.product(&z, cap).unwrap(), cap).unwrap();
        prop_assert_eq!(left, right);
        prop_assert_eq!(x.product(&y, cap).unwrap().inverse(), y.inverse().product(&x.inverse(), cap).unwrap());
        prop_assert!(x.product(&y, cap).unwrap().len() <= x.len() * y.len());
    }

    #[test]
    fn convolution_is_associative(a in small_measure(), b in small_measure(), c in small_measure()) {
        let o = ConvolveOptions::default();
        let left = convolve(&convolve(&a, &b, o).unwrap().0, &c, o).unwrap().0;
        let right = convolve(&a, &convolve(&b, &c, o).unwrap().0, o).unwrap().0;
        prop_assert_eq!(left.atoms.keys().collect::<Vec<_>>(), right.atoms.keys().collect::<Vec<_>>());
        for (g, m) in &left.atoms {
            prop_assert!((m - right.mass(g)).abs() < 1e-12);
        }
        prop_assert!(left.normalization_error() < 1e-12);
    }

    #[test]
    fn distance_is_a_metric(a in small_measure(), b in small_measure(), c in small_measure()) {
        let (ab, ba) = (l1_atoms(&a, &b), l1_atoms(&b, &a));
        prop_assert!((ab - ba).abs() < 1e-12);
        prop_assert!(ab <= l1_atoms(&a, &c) + l1_atoms(&c, &b) + 1e-12);
        prop_assert!(ab <= 2.0 + 1e-12);
        prop_assert_eq!(l1_atoms(&a, &a), 0.0);
    }

    #[test]
    fn distance_counts_escaping_points(fs in btree_set(lamplighter(), 1..30), g in lamplighter()) {
        let f: ElementSet = fs.into_iter().collect();
        let lam = TruncatedMeasure::uniform(&f);
        let d = l1_atoms(&lam, &translate(&g, &lam));
        let escaped = f.iter().filter(|x| !f.contains(&g.mul(x))).count() as f64;
        prop_assert!((d - 2.0 * escaped / f.len() as f64).abs() < 1e-12);
        let worst = verify_folner(&f, &ElementSet::singleton(g), Tolerance::new(1, 1).unwrap()).worst.unwrap().1;
        prop_assert!((d - 2.0 * worst).abs() < 1e-12);
    }

    #[test]
    fn records_are_consistent(ks in vec(1u128..12, 1..40)) {
        let recs = record_times(&ks);
        prop_assert_eq!(recs[0], (1, true));
        for &(t, simple) in &recs {
            let before = &ks[..t - 1];
            prop_assert!(before.iter().all(|&k| k <= ks[t - 1]));
            if t > 1 {
                prop_assert_eq!(simple, before.iter().all(|&k| k < ks[t - 1]));
            }
        }
        let count = (1..=ks.len()).filter(|&t| ks[..t - 1].iter().all(|&k| k <= ks[t - 1])).count();
        prop_assert_eq!(recs.len(), count);
    }

    #[test]
    fn stabilization_conditions_hold(ks in vec(1u128..60, 1..40), reds in vec(any::<bool>(), 40)) {
        let steps: Vec<Step> = ks.iter().zip(&reds)
            .map(|(&k, &r)| Step { k, y: if r { Color::Red } else { Color::Blue }, x: None })
            .collect();
        let n = steps.len();
        if let Some(i0) = stabilization_index(&steps) {
            let recs = record_times(&ks);
            for i in i0..=n {
                prop_assert!(*ks[..i].iter().max().unwrap() > i as u128);
            }
            for &(t, simple) in &recs {
                if t >= i0 {
                    prop_assert!(simple && steps[t - 1].y == Color::Blue);
                }
            }
            // minimality: i0 - 1 fails one of the conditions
            if i0 > 1 {
                let j = i0 - 1;
                let max_ok = *ks[..j].iter().max().unwrap() > j as u128;
                let rec = recs.iter().find(|r| r.0 == j);
                let rec_ok = rec.is_none_or(|&(_, s)| s && steps[j - 1].y == Color::Blue);
                prop_assert!(!(max_ok && rec_ok));
            }
        }
    }

    #[test]
    fn reversing_steps_swaps_products(xs in vec(lamplighter(), 1..8)) {
        let mk = |xs: &[GroupElement]| Trajectory {
            seed: TrajectorySeed { master: 0, index: 0 },
            steps: xs.iter().map(|x| Step { k: 1, y: Color::Blue, x: Some(x.clone()) }).collect(),
        };
        let fwd = mk(&xs);
        let rev: Vec<GroupElement> = xs.iter().rev().cloned().collect();
        let back = mk(&rev);
        let n = xs.len();
        prop_assert_eq!(right_products(&fwd).unwrap()[n - 1].clone(), left_products(&back).unwrap()[n - 1].clone());
        prop_assert_eq!(right_products(&fwd).unwrap()[0].clone(), left_products(&fwd).unwrap()[0].clone());
    }
}

#[test]
fn tau_uniqueness_and_monotonicity_on_samples() {
    let cons = build_levels(&GroupSpec::lamplighter(), &GrowthSchedule::desk(), 2, Limits::default()).unwrap();
    let table = StepTable::new(&cons);
    let wsets = WSets::new(&cons);
    let mut sampler = LevelSampler::new();
    for index in 0..2000 {
        let t = sample_trajectory(TrajectorySeed { master: 77, index }, 64, &table, &mut sampler);
        let mut prev = None;
        for h in [8, 16, 32, 64] {
            let out = tau(&t, &wsets, h).unwrap();
            if let TauOutcome::Value(v) = &out {
                if let Some(p) = &prev {
                    assert!(lockwalk_core::TailValue::is_contained_in(p, v));
                }
                prev = Some(v.clone());
            }
        }
    }
}
