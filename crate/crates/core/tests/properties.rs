//! Invariants checked on random inputs.

use std::collections::HashSet;

use proptest::prelude::*;

use cwexp_core::analysis::{e_alpha_probe, ProbeConfig, Verdict};
use cwexp_core::continua::{dynamical_ball_component, orbit_diam_sup, FiniteContinuum, TorusGrid};
use cwexp_core::decomp::{
    twist_apply, twist_inverse, Compose, Decomposition, Domain, IdentityMap, Rotation, TwistSpec,
};
use cwexp_core::geometry::{torus_dist, torus_negate, Coord, DiskPoint, Space};
use cwexp_core::maps::{stable_dir, BumpSpec, MapHandle};
use cwexp_core::quotient::{alpha_classes, QuotientPartition};

fn coord() -> impl Strategy<Value = Coord> {
    (0.0f64..1.0, 0.0f64..1.0).prop_map(|(x, y)| [x, y])
}

fn da() -> MapHandle {
    MapHandle::da(BumpSpec::tuned().unwrap())
}

fn pda() -> MapHandle {
    MapHandle::pda(BumpSpec::tuned().unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(2000))]

    #[test]
    fn da_is_odd(p in coord()) {
        let f = da();
        let lhs = f.apply(torus_negate(p)).unwrap();
        let rhs = torus_negate(f.apply(p).unwrap());
        prop_assert!(torus_dist(lhs, rhs) < 1e-9);
    }

    #[test]
    fn maps_invert(p in coord()) {
        for f in [MapHandle::anosov(), da(), pda()] {
            let q = f.apply_inverse(f.apply(p).unwrap()).unwrap();
            prop_assert!(f.space().dist(p, q) < 1e-9, "{}: {p:?} -> {q:?}", f.name());
        }
    }

    #[test]
    fn da_keeps_stable_segments_straight_off_the_bump(p in coord()) {
        // Segments that stay well clear of the bump ball and its first image.
        let r0 = BumpSpec::DEFAULT_R0;
        prop_assume!(torus_dist(p, [0.0, 0.0]) > 2.0 * r0);
        let f = da();
        let s = stable_dir();
        let len = 1e-3;
        let q = [p[0] + len * s[0], p[1] + len * s[1]];
        prop_assume!(torus_dist(q, [0.0, 0.0]) > 2.0 * r0);
        let (fp, fq) = (f.apply(p).unwrap(), f.apply(q).unwrap());
        let mut d = [fq[0] - fp[0], fq[1] - fp[1]];
        for c in &mut d {
            *c -= c.round();
        }
        let cross = (d[0] * s[1] - d[1] * s[0]).abs() / d[0].hypot(d[1]);
        prop_assert!(cross < 1e-8, "residual {cross}");
    }

    #[test]
    fn twist_preserves_radius_and_fixes_the_rim(
        radii in proptest::collection::btree_set(1u32..999, 1..6),
        amps in proptest::collection::vec(0.0f64..2.0, 6),
        r in 0.0f64..=1.0,
        theta in 0.0f64..std::f64::consts::TAU,
    ) {
        let knots: Vec<(f64, f64)> = radii.iter().zip(&amps).map(|(&k, &s)| (k as f64 / 1000.0, s)).collect();
        let spec = TwistSpec::new(knots).unwrap();
        let p = DiskPoint::new(r, theta).unwrap();
        let q = twist_apply(&spec, p);
        prop_assert_eq!(q.r(), p.r());
        let back = twist_inverse(&spec, q);
        prop_assert!(back.dist(&p) < 1e-12);
        for rim in [0.0, 1.0] {
            let e = DiskPoint::new(rim, theta).unwrap();
            prop_assert_eq!(twist_apply(&spec, e).to_cartesian(), e.to_cartesian());
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn pullback_is_contravariant(
        name in prop::sample::select(vec!["vertical", "horizontal", "stable_da", "unstable_da", "whole"]),
        k1 in 0i32..4,
        k2 in 0i32..4,
    ) {
        let q = Decomposition::builtin(name, Domain::Square { n: 48 }).unwrap();
        let quarter = std::f64::consts::FRAC_PI_2;
        let h1 = Rotation { center: [0.5, 0.5], angle: k1 as f64 * quarter };
        let h2 = Rotation { center: [0.5, 0.5], angle: k2 as f64 * quarter };
        let both = q.pullback(&Compose { outer: &h2, inner: &h1 }).unwrap();
        let staged = q.pullback(&h2).unwrap().pullback(&h1).unwrap();
        prop_assert_eq!(both.plaque_ids(), staged.plaque_ids());
        let id = q.pullback(&IdentityMap).unwrap();
        prop_assert_eq!(id.plaque_ids(), q.plaque_ids());
    }

    #[test]
    fn dynamical_balls_are_monotone(
        p in coord(),
        a1 in 0.04f64..0.3,
        t in 0.1f64..1.0,
        n1 in 1usize..8,
        dn in 0usize..6,
    ) {
        let grid = TorusGrid::new(128, Space::Torus).unwrap();
        let f = da();
        let a0 = (a1 * t).max(0.032);
        let set = |c: &FiniteContinuum| -> HashSet<usize> { c.points().iter().map(|&q| grid.snap(q)).collect() };
        let small = dynamical_ball_component(p, &f, a0, n1, &grid).unwrap();
        let big = dynamical_ball_component(p, &f, a1, n1, &grid).unwrap();
        prop_assert!(set(&small).is_subset(&set(&big)));
        let longer = dynamical_ball_component(p, &f, a1, n1 + dn, &grid).unwrap();
        prop_assert!(set(&longer).is_subset(&set(&big)));
        for c in [&small, &big, &longer] {
            let alpha = if std::ptr::eq(c, &small) { a0 } else { a1 };
            let window = if std::ptr::eq(c, &longer) { n1 + dn } else { n1 };
            prop_assert!(orbit_diam_sup(c, &f, window).unwrap().sup_diam <= alpha + 1e-12);
        }
        let id = MapHandle::identity(Space::Torus);
        prop_assert_eq!(orbit_diam_sup(&big, &id, 3).unwrap().sup_diam, big.diameter());
    }
}

fn assert_partition_laws(p: &QuotientPartition) -> Result<(), TestCaseError> {
    let grid = p.grid();
    let mut seen = vec![false; grid.len()];
    for c in 0..p.class_count() {
        let members = p.members(c);
        prop_assert!(!members.is_empty());
        let set: HashSet<usize> = members.iter().map(|&m| m as usize).collect();
        for &m in &set {
            prop_assert!(!seen[m], "node {m} in two classes");
            seen[m] = true;
            prop_assert_eq!(p.class_of(m), c);
        }
        // Flood fill through 8-neighbours inside the class.
        let start = members[0] as usize;
        let mut reached = HashSet::from([start]);
        let mut stack = vec![start];
        while let Some(k) = stack.pop() {
            for nb in grid.neighbors(k) {
                if set.contains(&nb) && reached.insert(nb) {
                    stack.push(nb);
                }
            }
        }
        prop_assert_eq!(reached.len(), set.len(), "class {} is disconnected", c);
    }
    prop_assert!(seen.iter().all(|&s| s), "classes do not cover the grid");
    Ok(())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn alpha_classes_partition_and_refine(
        a1 in 0.12f64..0.3,
        t in 0.55f64..1.0,
        window in 1usize..5,
        sphere in any::<bool>(),
    ) {
        let (f, space) = if sphere { (pda(), Space::Sphere) } else { (da(), Space::Torus) };
        let grid = TorusGrid::new(64, space).unwrap();
        let a0 = a1 * t;
        let fine = alpha_classes(&f, a0, window, &grid).unwrap();
        let coarse = alpha_classes(&f, a1, window, &grid).unwrap();
        for p in [&fine, &coarse] {
            assert_partition_laws(p)?;
            prop_assert!(p.mesh() <= p.alpha() + 1e-12);
        }
        for c in 0..fine.class_count() {
            let m = fine.members(c);
            let target = coarse.class_of(m[0] as usize);
            prop_assert!(m.iter().all(|&k| coarse.class_of(k as usize) == target), "class {} split", c);
        }
    }

    #[test]
    fn e_alpha_passes_are_monotone(a in 0.05f64..0.3, t in 0.1f64..1.0, seed in 0u64..1000) {
        let grid = TorusGrid::new(128, Space::Torus).unwrap();
        let cfg = ProbeConfig::new(40, seed);
        let small = (a * t).max(0.035);
        for f in [MapHandle::anosov(), da()] {
            let big = e_alpha_probe(&f, a, 10, &grid, &cfg).unwrap();
            let lower = e_alpha_probe(&f, small, 10, &grid, &cfg).unwrap();
            if big.verdict == Verdict::Pass {
                prop_assert_eq!(lower.verdict, Verdict::Pass, "{} at {} vs {}", f.name(), a, small);
            }
            for r in [&big, &lower] {
                if r.verdict == Verdict::Fail {
                    prop_assert!(r.witness_rechecked);
                }
            }
        }
        let id = MapHandle::identity(Space::Torus);
        prop_assert_eq!(e_alpha_probe(&id, a, 10, &grid, &cfg).unwrap().verdict, Verdict::Fail);
    }
}
