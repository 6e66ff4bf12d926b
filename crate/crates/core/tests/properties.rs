use num_rational::BigRational;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use shadowlab::critical::{check_no_cycles, check_trapping, ConnectionGraph, CriticalElement, Edge, Stability};
use shadowlab::pseudo::{derive_config, random_pseudotrajectory};
use shadowlab::reparam::align::{brute_force_oriented, oriented_minimax, Matrix};
use shadowlab::sectors::{DiskNeighborhood, SingularityClass};
use shadowlab::witnesses::multisector_witness;
use shadowlab::{jump_size, CatalogField, Flow, Point, Reparametrization, Surface};

fn q(n: i64, d: i64) -> BigRational {
    BigRational::new(n.into(), d.into())
}

fn torus() -> Surface {
    Surface::torus(2.0 * std::f64::consts::PI, 2.0 * std::f64::consts::PI).unwrap()
}

fn coord() -> impl Strategy<Value = f64> {
    -20.0..20.0f64
}

/// Increasing knots with slopes `1 + k / 1000`, `|k| < 1000 * eps`.
fn rep_strategy(eps_milli: i64) -> impl Strategy<Value = Reparametrization<BigRational>> {
    let slope = move || (-(eps_milli - 1)..eps_milli).prop_map(|k| q(1000 + k, 1000));
    (
        -10i64..10,
        proptest::collection::vec((1i64..30, slope()), 0..6),
        slope(),
        slope(),
    )
        .prop_map(|(t0, segs, left, right)| {
            let mut t = q(t0, 1);
            let mut h = q(t0, 2);
            let mut knots = vec![(t.clone(), h.clone())];
            for (dt, s) in segs {
                let dt = q(dt, 4);
                h += s * dt.clone();
                t += dt;
                knots.push((t.clone(), h.clone()));
            }
            Reparametrization::new(knots, left, right).unwrap()
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn torus_metric_axioms(ax in coord(), ay in coord(), bx in coord(), by in coord(), cx in coord(), cy in coord()) {
        let s = torus();
        let (a, b, c) = (Point::new(ax, ay), Point::new(bx, by), Point::new(cx, cy));
        prop_assert!(s.dist(a, a) < 1e-12);
        prop_assert!((s.dist(a, b) - s.dist(b, a)).abs() < 1e-12);
        prop_assert!(s.dist(a, c) <= s.dist(a, b) + s.dist(b, c) + 1e-12);
        prop_assert!(s.dist(a, b) <= std::f64::consts::PI * 2f64.sqrt() + 1e-12);
        // Translating both points by a full period changes nothing.
        let shift = Point::new(2.0 * std::f64::consts::PI, -4.0 * std::f64::consts::PI);
        prop_assert!((s.dist(a + shift, b) - s.dist(a, b)).abs() < 1e-9);
    }

    #[test]
    fn group_property_on_the_torus(x in 0.0..6.2f64, y in 0.0..6.2f64, s in -2.0..2.0f64, t in -2.0..2.0f64) {
        let flow = Flow::catalog(CatalogField::TorusGradient);
        let p = Point::new(x, y);
        let a = flow.flow_map(s + t, p).unwrap();
        let b = flow.flow_map(s, flow.flow_map(t, p).unwrap()).unwrap();
        prop_assert!(flow.dist(a, b) <= 1e-5, "residual {}", flow.dist(a, b));
    }

    #[test]
    fn sink_matches_closed_form(x in -1.5..1.5f64, y in -1.5..1.5f64, t in 0.0..3.0f64) {
        let flow = Flow::catalog(CatalogField::Sink);
        let p = flow.flow_map(t, Point::new(x, y)).unwrap();
        let e = (-t).exp();
        prop_assert!((p - Point::new(x * e, y * e)).norm() < 1e-9);
    }

    #[test]
    fn rep_composition_multiplies_slopes(a in rep_strategy(200), b in rep_strategy(300)) {
        let c = a.compose(&b);
        let (alo, ahi) = a.slope_range();
        let (blo, bhi) = b.slope_range();
        let (clo, chi) = c.slope_range();
        prop_assert!(clo >= alo * blo);
        prop_assert!(chi <= ahi * bhi);
        prop_assert!(c.is_member(&q(56, 100)));
        for t in [q(-13, 3), q(1, 7), q(9, 2)] {
            prop_assert_eq!(c.eval(&t), a.eval(&b.eval(&t)));
        }
    }

    #[test]
    fn rep_inverse_is_exact(a in rep_strategy(250), n in -100i64..100) {
        let inv = a.invert();
        let t = q(n, 9);
        prop_assert_eq!(inv.eval(&a.eval(&t)), t.clone());
        prop_assert_eq!(a.eval(&inv.eval(&t)), t);
        // eps / (1 - eps) with eps = 1/4.
        prop_assert!(inv.is_member(&q(1, 3)));
    }

    #[test]
    fn dp_equals_enumeration(rows in proptest::collection::vec(proptest::collection::vec(0u8..12, 1..8), 1..8)) {
        let m = rows.iter().map(|r| r.len()).min().unwrap();
        let costs: Vec<Vec<f64>> = rows.iter().map(|r| r[..m].iter().map(|&c| c as f64 / 4.0).collect()).collect();
        let mut g = Matrix(costs);
        let dp = oriented_minimax(&mut g, f64::INFINITY).unwrap();
        let (v, col) = brute_force_oriented(&mut g).unwrap();
        prop_assert_eq!(dp.value, v);
        prop_assert_eq!(dp.end_col, col);
    }

    #[test]
    fn cycle_check_ignores_node_order(
        n in 2usize..9,
        pairs in proptest::collection::vec((0usize..9, 0usize..9), 0..20),
        back in any::<bool>(),
        perm_seed in any::<u64>(),
    ) {
        // Edges only go up in index, optionally closed by one back edge.
        let mut edges: Vec<(usize, usize)> = pairs
            .into_iter()
            .map(|(a, b)| (a % n, b % n))
            .filter(|(a, b)| a < b)
            .collect();
        let cyclic = back && !edges.is_empty();
        if cyclic {
            let (a, b) = edges[0];
            edges.push((b, a));
        }
        let mut order: Vec<usize> = (0..n).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(perm_seed);
        rand::seq::SliceRandom::shuffle(order.as_mut_slice(), &mut rng);
        let build = |pos: &dyn Fn(usize) -> usize| ConnectionGraph {
            nodes: (0..n).map(|k| CriticalElement::singularity(Point::new(k as f64, 0.0))).collect(),
            edges: edges
                .iter()
                .map(|&(a, b)| Edge { from: pos(a), to: pos(b), witness: Point::ORIGIN })
                .collect(),
            unknown: Vec::new(),
        };
        let plain = check_no_cycles(&build(&|k| k));
        let shuffled = check_no_cycles(&build(&|k| order[k]));
        prop_assert_eq!(plain.acyclic, !cyclic);
        prop_assert_eq!(shuffled.acyclic, !cyclic);
        if let Some(cycle) = shuffled.cycle {
            prop_assert_eq!(cycle.first(), cycle.last());
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn random_pt_respects_its_jump_bound(seed in any::<u64>(), d in 0.01..0.3f64, x in -1.0..1.0f64, y in -1.0..1.0f64) {
        let flow = Flow::catalog(CatalogField::LimitCycle);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let xi = random_pseudotrajectory(&flow, Point::new(x, y), 1.0, 6, d, &mut rng).unwrap();
        prop_assert!(jump_size(&flow, &xi) < d);
        let rev = xi.time_reversed(&flow);
        prop_assert!((jump_size(&flow.reversed(), &rev) - jump_size(&flow, &xi)).abs() < 1e-6);
    }

    // The sink is linear, so shrinking the start radius and the jump bound together shrinks
    // every trial pseudotrajectory: a certified neighbourhood stays certified.
    #[test]
    fn trapping_is_monotone_under_scaling(u in 0.05..0.3f64, d in 0.01..0.2f64, lambda in 0.1..1.0f64, seed in any::<u64>()) {
        let flow = Flow::catalog(CatalogField::Sink);
        let mut sink = CriticalElement::singularity(Point::ORIGIN);
        sink.stability = Stability::SectorType(SingularityClass::AsymptoticallyStable);
        let config = derive_config(&flow, std::slice::from_ref(&sink)).unwrap();
        if check_trapping(&flow, &sink, &config, u, d, 6, seed).unwrap() {
            prop_assert!(check_trapping(&flow, &sink, &config, lambda * u, lambda * d, 6, seed).unwrap());
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(4))]

    #[test]
    fn multisector_witness_validates_at_its_d(d in 0.03..0.2f64) {
        let flow = Flow::catalog(CatalogField::Monkey);
        let w = multisector_witness(&flow, &DiskNeighborhood::new(Point::ORIGIN, 0.5), d).unwrap();
        prop_assert!(w.validate(&flow).valid);
        prop_assert!(w.params.jump < d);
        prop_assert!(w.eps_claim > 0.0);
    }
}
