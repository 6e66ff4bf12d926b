//! End-to-end acceptance suite. Runs without the libtest harness so that every criterion
//! prints one PASS/FAIL line with its wall time. Pass substrings as arguments to run a
//! subset, e.g. `cargo test --test acceptance -- c5 c6`.

use std::time::{Duration, Instant};

use num_rational::BigRational;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use shadowlab::critical::{
    check_no_cycles, classify_closed_orbit, classify_elements, connection_graph, diagnose_case,
    find_critical_elements, Case, CaseNeighborhood, CriticalElement, ElementKind, GraphConfig, Role, SearchGrid,
    Stability,
};
use shadowlab::pseudo::derive_config;
use shadowlab::reparam::align::{brute_force_banded, brute_force_oriented, Band};
use shadowlab::reparam::{cost_grid, random_trial, threshold_curve, upgrade_to_standard, UpgradeOutcome};
use shadowlab::sectors::{classify_singularity, DiskNeighborhood, SectorType, SingularityClass};
use shadowlab::witnesses::{confirm_failure, parabolic_witness, multisector_witness, semistable_cycle_witness, Witness};
use shadowlab::{
    verify_shadowing, CatalogField, ExtensionRule, Flow, Mode, Point, Pseudotrajectory, Reparametrization,
    SearchConfig, ShadowingConfig,
};

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn err<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

// ---------------------------------------------------------------------------
// Criterion 1: singularity classification on the catalog.

fn c1_classification() -> Outcome {
    use SectorType::*;
    let cases = [
        (CatalogField::Sink, SingularityClass::AsymptoticallyStable),
        (CatalogField::Source, SingularityClass::BackwardAsymptoticallyStable),
        (CatalogField::Saddle, SingularityClass::FourHyperbolic),
        (CatalogField::Monkey, SingularityClass::Other(vec![Hyperbolic; 6])),
        (
            CatalogField::SaddleNode,
            SingularityClass::Other({
                let mut v = vec![Hyperbolic, Hyperbolic, ParabolicPositive];
                v.sort();
                v
            }),
        ),
    ];
    let mut runs = 0;
    for (field, expected) in cases {
        let flow = Flow::catalog(field);
        for (radius, samples) in [(0.5, 720), (0.25, 720), (0.5, 1440)] {
            let disk = DiskNeighborhood::new(Point::ORIGIN, radius).with_samples(samples);
            let report = classify_singularity(&flow, &disk).map_err(err)?;
            // A saddle-node's parabolic sector may be attracting or repelling depending on
            // orientation; accept either sign but require exactly one.
            let ok = match (&expected, &report.verdict) {
                (SingularityClass::Other(e), SingularityClass::Other(got)) if field == CatalogField::SaddleNode => {
                    got.len() == e.len()
                        && report.verdict.count(Hyperbolic) == 2
                        && report.verdict.count(ParabolicPositive) + report.verdict.count(ParabolicNegative) == 1
                }
                (e, got) => e == got,
            };
            ensure(ok, || {
                format!("{field} at r={radius}, n={samples}: expected {expected:?}, got {:?}", report.verdict)
            })?;
            runs += 1;
        }
    }
    Ok(format!("5 fields x 3 resolutions = {runs} stable verdicts"))
}

// ---------------------------------------------------------------------------
// Criterion 2: return-map classification of closed orbits.

fn closed_orbit(flow: &Flow) -> Result<CriticalElement, String> {
    let elements = find_critical_elements(flow, &SearchGrid::default()).map_err(err)?;
    let orbits: Vec<_> = elements
        .into_iter()
        .filter(|e| matches!(e.kind, ElementKind::ClosedOrbit { .. }))
        .collect();
    ensure(orbits.len() == 1, || format!("expected one closed orbit, found {}", orbits.len()))?;
    Ok(orbits.into_iter().next().unwrap())
}

fn c2_poincare() -> Outcome {
    let cases = [
        ("limit_cycle", Flow::catalog(CatalogField::LimitCycle), Stability::Stable),
        ("reversed limit_cycle", Flow::catalog(CatalogField::LimitCycle).reversed(), Stability::Unstable),
        ("semistable_cycle", Flow::catalog(CatalogField::SemistableCycle), Stability::SemiStable),
    ];
    let mut worst: f64 = 0.0;
    for (name, flow, expected) in cases {
        let orbit = closed_orbit(&flow)?;
        let (stability, map) = classify_closed_orbit(&flow, &orbit).map_err(err)?;
        ensure(stability == expected, || format!("{name}: expected {expected:?}, got {stability:?}"))?;
        ensure(map.is_monotone(), || format!("{name}: return map is not monotone"))?;
        let r = map.transversal.point_at(map.fixed_point).norm();
        worst = worst.max((r - 1.0).abs());
        ensure((r - 1.0).abs() < 1e-3, || format!("{name}: fixed point at r={r}"))?;
    }
    Ok(format!("verdicts as expected, maps monotone, |r*-1| <= {worst:.2e}"))
}

// ---------------------------------------------------------------------------
// Criterion 3: witnesses against oriented shadowing.

fn check_witness(flow: &Flow, name: &str, w: &Witness, d: f64) -> Result<String, String> {
    let v = w.validate(flow);
    ensure(v.valid, || format!("{name}: not a Pt({d}) (violation {:.3e})", v.max_violation))?;
    ensure(!w.is_degenerate(), || format!("{name}: degenerate witness"))?;
    let report = confirm_failure(flow, w, &SearchConfig::default()).map_err(err)?;
    ensure(report.pass && report.min_sup_dist >= w.eps_claim, || {
        format!("{name}: min sup {:.4} below eps_claim {:.4}", report.min_sup_dist, w.eps_claim)
    })?;
    ensure(report.margin_cells >= 2.0, || format!("{name}: margin {:.2} cells", report.margin_cells))?;
    Ok(format!(
        "{name} eps={:.4} min={:.4} margin={:.1} cells",
        w.eps_claim, report.min_sup_dist, report.margin_cells
    ))
}

fn c3_witnesses() -> Outcome {
    let d = 0.1;
    let disk = DiskNeighborhood::new(Point::ORIGIN, 0.5);
    let mut lines = Vec::new();

    let monkey = Flow::catalog(CatalogField::Monkey);
    let w = multisector_witness(&monkey, &disk, d).map_err(err)?;
    lines.push(check_witness(&monkey, "monkey", &w, d)?);

    let sn = Flow::catalog(CatalogField::SaddleNode);
    let w = parabolic_witness(&sn, &disk, d).map_err(err)?;
    lines.push(check_witness(&sn, "saddle_node", &w, d)?);

    let semi = Flow::catalog(CatalogField::SemistableCycle);
    let orbit = closed_orbit(&semi)?;
    let w = semistable_cycle_witness(&semi, &orbit, d).map_err(err)?;
    lines.push(check_witness(&semi, "semistable_cycle", &w, d)?);
    Ok(lines.join("; "))
}

// ---------------------------------------------------------------------------
// Criterion 4: shadowing and Rep upgrade on fields with finitely many critical elements.

const C4_SEED: u64 = 20_240_601;
const C4_TRIALS: usize = 100;

/// The hypothesis of the local upgrade: the pseudotrajectory stays in `K~` on its window,
/// checked at the knot rows the upgrade itself checks.
fn in_k_tilde_throughout(flow: &Flow, config: &ShadowingConfig, xi: &Pseudotrajectory, step: f64) -> bool {
    let (a, b) = xi.window();
    let n = ((b - a) / step).round() as usize;
    (0..=n).all(|i| config.in_k_tilde(flow, xi.at(flow, a + (b - a) * i as f64 / n as f64)))
}

fn c4_threshold_and_upgrade() -> Outcome {
    let search = SearchConfig::default();
    let mut summary = Vec::new();
    for (field, blocks, upgrade_blocks) in [(CatalogField::TorusGradient, 8, 2), (CatalogField::LimitCycle, 8, 8)] {
        let flow = Flow::catalog(field);
        let elements = find_critical_elements(&flow, &SearchGrid::default()).map_err(err)?;
        let config = derive_config(&flow, &elements).map_err(err)?;
        let classified = classify_elements(&flow, &elements, config.eps0).map_err(err)?;
        let graph = connection_graph(&flow, &classified, &GraphConfig::new(config.eps0)).map_err(err)?;
        let cycles = check_no_cycles(&graph);
        ensure(cycles.acyclic, || format!("{field}: connection graph has a cycle {:?}", cycles.cycle))?;

        let eps_list = [0.1, 0.2];
        let rows =
            threshold_curve(&flow, &config, true, &eps_list, C4_TRIALS, C4_SEED, blocks, &search).map_err(err)?;
        for row in &rows {
            let eps = row.eps;
            ensure(!row.below_resolution, || format!("{field}: eps={eps} below resolution"))?;
            let d = row.d_hat;
            // Levels the bisection already verified on the same seeds need no rerun.
            if !row.tested.iter().any(|&(td, ok)| td == d && ok) {
                for k in 0..C4_TRIALS as u64 {
                    let xi = random_trial(&flow, &config, blocks, d, C4_SEED, k).map_err(err)?;
                    let r = verify_shadowing(&flow, &xi, Mode::Standard { eps }, eps, &search).map_err(err)?;
                    ensure(r.shadowed && r.warp.is_member(&eps), || {
                        format!("{field}: eps={eps} trial {k} at d_hat={d}: sup {:.4}", r.sup_dist)
                    })?;
                }
            }

            // Upgrade population: pseudotrajectories whose knots stay inside K~
            // that the oriented verifier shadows within eps/4.
            let small = eps * search.upgrade_fraction;
            let d_up = eps / 8.0;
            let (mut upgraded, mut drawn, mut outside, mut not_oriented) = (0, 0u64, 0, 0);
            while upgraded < C4_TRIALS {
                ensure(drawn < 100_000, || format!("{field}: too few trials inside K~"))?;
                let xi = random_trial(&flow, &config, upgrade_blocks, d_up, C4_SEED + 1, drawn).map_err(err)?;
                drawn += 1;
                if !in_k_tilde_throughout(&flow, &config, &xi, 0.25) {
                    outside += 1;
                    continue;
                }
                let o = verify_shadowing(&flow, &xi, Mode::Oriented, small, &search).map_err(err)?;
                if !o.shadowed {
                    not_oriented += 1;
                    continue;
                }
                let up = upgrade_to_standard(&flow, &config, &xi, xi.window(), o.point, &o.warp, eps, &search)
                    .map_err(|e| format!("{field}: eps={eps} trial {}: {e}", drawn - 1))?;
                match up {
                    UpgradeOutcome::Upgraded { warp, sup_dist } => {
                        ensure(warp.is_member(&eps) && sup_dist < eps, || {
                            format!("{field}: upgraded warp misses Rep({eps}) or sup {sup_dist}")
                        })?;
                        upgraded += 1;
                    }
                    UpgradeOutcome::Failed { reason, .. } => {
                        return Err(format!("{field}: eps={eps} trial {}: {reason}", drawn - 1))
                    }
                }
            }
            summary.push(format!(
                "{field} eps={eps}: d_hat={d:.4} 100/100 shadowed, upgraded {upgraded}/{upgraded} \
                 (drawn {drawn}, {outside} outside K~, {not_oriented} not oriented-shadowed)"
            ));
        }
    }
    Ok(summary.join("; "))
}

// ---------------------------------------------------------------------------
// Criterion 5: the alignment DP against exhaustive enumeration.

fn c5_dp_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(55);
    let fields = [
        CatalogField::Sink,
        CatalogField::Saddle,
        CatalogField::LimitCycle,
        CatalogField::TorusGradient,
        CatalogField::Monkey,
    ];
    let (mut oriented_checked, mut standard_checked) = (0, 0);
    for instance in 0..50 {
        let flow = Flow::catalog(fields[instance % fields.len()]);
        let n_xi = rng.gen_range(2..=8usize);
        let n_y = rng.gen_range(1..=8usize);
        let dt = 0.1;
        let start = Point::new(rng.gen_range(-0.8..0.8), rng.gen_range(-0.8..0.8));
        let mut krng = ChaCha8Rng::seed_from_u64(instance as u64);
        let xi = shadowlab::pseudo::random_pseudotrajectory(&flow, start, 0.2, 2, 0.05, &mut krng).map_err(err)?;
        let window = (0.0, dt * (n_xi - 1) as f64);
        let search = SearchConfig {
            grid: 3,
            dt,
            q: 2,
            chord_window: 2,
            orbit_samples: Some(n_y),
            radius: Some(0.1),
            ..Default::default()
        };
        let modes = [Mode::Oriented, Mode::Standard { eps: 0.5 }];
        for mode in modes {
            let r = shadowlab::reparam::verify_curve(&flow, &xi, window, mode, 10.0, &search);
            // Enumerate every candidate and every admissible path.
            let cands = shadowlab::reparam::candidate_points(&flow, xi.at(&flow, 0.0), 0.1, search.grid);
            let mut best: Option<(f64, usize, Point)> = None;
            for (lex, p) in cands {
                let mut m = cost_grid(&flow, &xi, window, p, mode, &search).map_err(err)?;
                let v = match mode {
                    Mode::Oriented => brute_force_oriented(&mut m),
                    Mode::Standard { eps } => brute_force_banded(
                        &mut m,
                        Band {
                            window: search.chord_window,
                            q: search.q,
                            eps,
                        },
                    ),
                };
                if let Some((v, _)) = v {
                    if best.is_none_or(|(b, l, _)| v < b || (v == b && lex < l)) {
                        best = Some((v, lex, p));
                    }
                }
            }
            match (r, best) {
                (Ok(r), Some((v, _, p))) => {
                    ensure(r.sup_dist == v && r.point == p, || {
                        format!(
                            "instance {instance} {mode:?}: dp {} at {:?}, enumeration {v} at {p:?}",
                            r.sup_dist, r.point
                        )
                    })?;
                    match mode {
                        Mode::Oriented => oriented_checked += 1,
                        Mode::Standard { .. } => standard_checked += 1,
                    }
                }
                (Err(_), None) => {}
                (r, b) => return Err(format!("instance {instance} {mode:?}: dp {r:?} vs enumeration {b:?}")),
            }
        }
    }
    ensure(oriented_checked == 50, || format!("only {oriented_checked} oriented instances produced a value"))?;
    Ok(format!("50/50 oriented instances exact; {standard_checked} with an admissible chord band also exact"))
}

// ---------------------------------------------------------------------------
// Criterion 6: exact Rep algebra.

fn q(n: i64, d: i64) -> BigRational {
    BigRational::new(n.into(), d.into())
}

/// Random piecewise-linear member of `Rep(eps)` with slopes `1 + eps * k / 1000`.
fn random_rep(rng: &mut ChaCha8Rng, eps_milli: i64) -> Reparametrization<BigRational> {
    let slope = |rng: &mut ChaCha8Rng| q(1000 * 1000 + eps_milli * rng.gen_range(-999..=999i64), 1000 * 1000);
    let n = rng.gen_range(1..=6);
    let mut t = q(rng.gen_range(-5..5), 1);
    let mut h = q(rng.gen_range(-5..5), 1);
    let mut knots = vec![(t.clone(), h.clone())];
    for _ in 1..n {
        let dt = q(rng.gen_range(1..40), 8);
        h += slope(rng) * dt.clone();
        t += dt;
        knots.push((t.clone(), h.clone()));
    }
    Reparametrization::new(knots, slope(rng), slope(rng)).unwrap()
}

fn c6_rep_algebra() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(66);
    let one = q(1, 1);
    for k in 0..1000 {
        let (ea, eb) = (rng.gen_range(1..=500i64), rng.gen_range(1..=500i64));
        let a = random_rep(&mut rng, ea);
        let b = random_rep(&mut rng, eb);
        let (eps_a, eps_b) = (q(ea, 1000), q(eb, 1000));
        ensure(a.is_member(&eps_a) && b.is_member(&eps_b), || format!("pair {k}: generator left Rep"))?;

        // Composition: slopes multiply, so the range sits inside the product of ranges.
        let c = a.compose(&b);
        let (alo, ahi) = a.slope_range();
        let (blo, bhi) = b.slope_range();
        let (clo, chi) = c.slope_range();
        ensure(clo >= alo.clone() * blo.clone() && chi <= ahi.clone() * bhi.clone(), || {
            format!("pair {k}: composition slopes escape the product bound")
        })?;
        let eps_c = eps_a.clone() + eps_b.clone() + eps_a.clone() * eps_b.clone();
        ensure(c.is_member(&eps_c), || format!("pair {k}: composition outside Rep(ea+eb+ea*eb)"))?;
        for t in [q(-7, 3), q(0, 1), q(5, 2), q(11, 1)] {
            ensure(c.eval(&t) == a.eval(&b.eval(&t)), || format!("pair {k}: composition misevaluates"))?;
        }

        // Inversion: Rep(eps) maps into Rep(eps / (1 - eps)).
        let inv = a.invert();
        let eps_inv = eps_a.clone() / (one.clone() - eps_a.clone());
        ensure(inv.is_member(&eps_inv), || format!("pair {k}: inverse outside Rep(eps/(1-eps))"))?;
        let t = q(rng.gen_range(-50..50), 7);
        ensure(inv.eval(&a.eval(&t)) == t, || format!("pair {k}: inverse is not exact"))?;
    }

    // Chains of three Rep(eps/4) factors land in Rep(eps) for eps = 0.4, with or without an inverse.
    for k in 0..1000 {
        let f: Vec<_> = (0..3).map(|_| random_rep(&mut rng, 100)).collect();
        let plain = f[0].compose(&f[1]).compose(&f[2]);
        let mixed = f[0].compose(&f[1].invert()).compose(&f[2]);
        ensure(plain.is_member(&q(4, 10)) && mixed.is_member(&q(4, 10)), || {
            format!("chain {k}: three Rep(0.1) factors leave Rep(0.4)")
        })?;
    }
    Ok("1000 pairs and 1000 chains exact".into())
}

// ---------------------------------------------------------------------------
// Criterion 7: flow-map numerics.

fn c7_flow_numerics() -> Outcome {
    let mut worst: f64 = 0.0;
    for field in CatalogField::ALL {
        let flow = Flow::catalog(field);
        let (lo, hi) = flow.surface().bounds();
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let mut done = 0;
        let mut tries = 0;
        while done < 100 {
            tries += 1;
            ensure(tries < 100_000, || format!("{field}: could not draw triples inside the domain"))?;
            let x = Point::new(rng.gen_range(lo.x..hi.x), rng.gen_range(lo.y..hi.y));
            let s = rng.gen_range(-1.0..1.0);
            let t = rng.gen_range(-1.0..1.0);
            let (Ok(a), Ok(mid)) = (flow.flow_map(s + t, x), flow.flow_map(t, x)) else {
                continue;
            };
            let Ok(b) = flow.flow_map(s, mid) else {
                continue;
            };
            let res = flow.dist(a, b);
            worst = worst.max(res);
            ensure(res <= 1e-5, || format!("{field}: residual {res:.3e} at x={x:?}, s={s}, t={t}"))?;
            done += 1;
        }
    }

    // Fourth order: halving the step divides the error by about 16.
    let mut ratios = Vec::new();
    for (field, x) in [
        (CatalogField::LimitCycle, Point::new(0.3, 0.2)),
        (CatalogField::Monkey, Point::new(-0.5, 0.3)),
        (CatalogField::TorusGradient, Point::new(0.4, 2.0)),
        (CatalogField::SemistableCycle, Point::new(0.5, 0.0)),
    ] {
        let at = |h: f64| -> Result<Point, String> {
            Flow::catalog(field).with_step(h).map_err(err)?.flow_map(1.0, x).map_err(err)
        };
        let reference = at(1e-3)?;
        let e1 = (at(0.1)? - reference).norm();
        let e2 = (at(0.05)? - reference).norm();
        let ratio = e1 / e2;
        ensure((8.0..=32.0).contains(&ratio), || format!("{field}: error ratio {ratio:.2}"))?;
        ratios.push(format!("{field} {ratio:.1}"));
    }
    Ok(format!("max group residual {worst:.2e}; RK4 ratios {}", ratios.join(", ")))
}

// ---------------------------------------------------------------------------
// Criterion 8: case diagnosis.

fn neighborhoods(flow: &Flow, radius: f64) -> Result<Vec<CaseNeighborhood>, String> {
    let elements = find_critical_elements(flow, &SearchGrid::default()).map_err(err)?;
    let classified = classify_elements(flow, &elements, 0.79).map_err(err)?;
    Ok(classified
        .into_iter()
        .filter_map(|e| CaseNeighborhood::new(e, radius))
        .collect())
}

fn diagnose(flow: &Flow, xi: &Pseudotrajectory, u: &[CaseNeighborhood], expected: Case) -> Result<(), String> {
    let d = diagnose_case(flow, xi, u).map_err(err)?;
    ensure(d.case == expected, || format!("expected {expected:?}, got {:?} (S = {:?})", d.case, d.s_xi))
}

fn c8_case_diagnosis() -> Outcome {
    let exact = |x: Point, a: f64, b: f64| Pseudotrajectory::exact_orbit(x, a, b).map_err(err);

    // C1: an orbit arc falling onto the attracting cycle, far from the source.
    let lc = Flow::catalog(CatalogField::LimitCycle);
    let u_lc = neighborhoods(&lc, 0.2)?;
    let roles: Vec<Role> = u_lc.iter().map(|u| u.role).collect();
    ensure(roles.contains(&Role::Stable) && roles.contains(&Role::Unstable), || {
        format!("limit_cycle roles {roles:?}")
    })?;
    let c1 = exact(Point::new(1.6, 0.0), 0.0, 10.0)?;
    diagnose(&lc, &c1, &u_lc, Case::C1)?;

    // C2: an orbit arc leaving the source only.
    let src = Flow::catalog(CatalogField::Source);
    let u_src = neighborhoods(&src, 0.2)?;
    diagnose(&src, &exact(Point::new(0.05, 0.05), 0.0, 2.0)?, &u_src, Case::C2)?;

    // C3: a source-exiting arc glued to an arc that settles on the cycle.
    let p0 = Point::new(0.05, 0.0);
    let p1 = lc.flow_map(3.0, p0).map_err(err)? + Point::new(0.01, 0.0);
    let c3 = Pseudotrajectory::from_arcs(1.0, &[(0.0, p0), (3.0, p1)], 15.0, ExtensionRule::ClampEnds).map_err(err)?;
    diagnose(&lc, &c3, &u_lc, Case::C3)?;

    // Saddle cases.
    let saddle = Flow::catalog(CatalogField::Saddle);
    let u_s = neighborhoods(&saddle, 0.3)?;
    ensure(u_s.len() == 1 && u_s[0].role == Role::Saddle, || "saddle neighbourhood missing".into())?;
    diagnose(&saddle, &exact(Point::ORIGIN, 0.0, 5.0)?, &u_s, Case::C4)?;
    diagnose(&saddle, &exact(Point::new(0.01, 1.0), 0.0, 4.6)?, &u_s, Case::C7)?;

    // C5 and C6 through time reversal: reversing the flow, the pseudotrajectory and the roles
    // swaps C1 with C2 and C5 with C6.
    let c5 = exact(Point::new(0.0, 1.0), 0.0, 5.0)?;
    diagnose(&saddle, &c5, &u_s, Case::C5)?;
    let saddle_rev = saddle.reversed();
    let u_s_rev: Vec<_> = u_s.iter().map(|u| u.reversed()).collect();
    diagnose(&saddle_rev, &c5.time_reversed(&saddle), &u_s_rev, Case::C5.reversed())?;
    let lc_rev = lc.reversed();
    let u_lc_rev: Vec<_> = u_lc.iter().map(|u| u.reversed()).collect();
    diagnose(&lc_rev, &c1.time_reversed(&lc), &u_lc_rev, Case::C1.reversed())?;
    diagnose(&lc_rev, &c3.time_reversed(&lc), &u_lc_rev, Case::C3)?;
    Ok("C1, C2, C3, C4, C7 as designed; C5/C6 and C1/C2 swap under reversal".into())
}

// ---------------------------------------------------------------------------

fn main() {
    let criteria: [(&str, u64, fn() -> Outcome); 8] = [
        ("c1_classification", 60, c1_classification),
        ("c2_poincare", 30, c2_poincare),
        ("c3_witnesses", 300, c3_witnesses),
        ("c4_threshold_and_upgrade", 600, c4_threshold_and_upgrade),
        ("c5_dp_oracle", 10, c5_dp_oracle),
        ("c6_rep_algebra", 5, c6_rep_algebra),
        ("c7_flow_numerics", 30, c7_flow_numerics),
        ("c8_case_diagnosis", 60, c8_case_diagnosis),
    ];
    let filters: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    let mut ran = 0;
    for (name, limit, run) in criteria {
        if !filters.is_empty() && !filters.iter().any(|f| name.contains(f.as_str())) {
            continue;
        }
        ran += 1;
        let start = Instant::now();
        let outcome = run();
        let elapsed = start.elapsed();
        let over = elapsed > Duration::from_secs(limit);
        match (&outcome, over) {
            (Ok(detail), false) => println!("{name}: PASS ({:.2}s, limit {limit}s) {detail}", elapsed.as_secs_f64()),
            (Ok(detail), true) => {
                failed += 1;
                println!("{name}: FAIL ({:.2}s, over the {limit}s limit) {detail}", elapsed.as_secs_f64());
            }
            (Err(why), _) => {
                failed += 1;
                println!("{name}: FAIL ({:.2}s, limit {limit}s) {why}", elapsed.as_secs_f64());
            }
        }
    }
    println!("acceptance: {} of {ran} criteria passed", ran - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
