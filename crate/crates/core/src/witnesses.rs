//! Pseudotrajectories built around singularities and closed orbits that no true orbit
//! shadows with an increasing time change, and a numerical check of that failure.
//!
//! Every constructor glues two (or, for the periodic loop witness, one) orbit arcs at the
//! smallest gluing time that brings the jump below `d / 2`, and derives `eps_claim` from
//! sampled geometric distances times a 0.9 safety factor.

use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use crate::critical::{classify_closed_orbit, find_singularities, polyline_distance, CriticalElement, ElementKind, Stability};
use crate::error::{Error, Result};
use crate::flow::Flow;
use crate::geom::{point_polyline_distance, Point};
use crate::pseudo::{jump_size, make_glued, validate_pseudotrajectory, ExtensionRule, GlueArc, Pseudotrajectory, Validation};
use crate::reparam::{verify_shadowing, Mode, SearchConfig, SearchStats, ShadowingResult};
use crate::sectors::{classify_singularity, sharpen_ray, BaseOrbit, DiskNeighborhood, SectorType, Sign};

/// Factor keeping numerically estimated constants strictly inside the strict inequalities.
const SAFETY: f64 = 0.9;
/// Resolution of gluing-time scans.
const SCAN_DT: f64 = 0.01;
/// Longest gluing time tried before giving up.
const MAX_GLUE_TIME: f64 = 2000.0;
/// Offsets of the two launch points from a semistable cycle, attracting and repelling side.
const CYCLE_OFFSETS: (f64, f64) = (0.3, 0.5);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Construction {
    /// Periodic pseudotrajectory around a loop through a singularity.
    SelfConnection,
    /// In through a parabolic sector, out along a negative base orbit.
    Parabolic,
    /// In along one separatrix, out along a non-adjacent one.
    MultiSector,
    /// From the attracting side of a semistable cycle to its repelling side.
    SemiStableCycle,
}

impl Construction {
    pub const ALL: [Construction; 4] = [
        Construction::SelfConnection,
        Construction::Parabolic,
        Construction::MultiSector,
        Construction::SemiStableCycle,
    ];

    /// Command-line name.
    pub fn name(self) -> &'static str {
        match self {
            Construction::SelfConnection => "self-connection",
            Construction::Parabolic => "parabolic",
            Construction::MultiSector => "multisector",
            Construction::SemiStableCycle => "semistable",
        }
    }
}

impl std::str::FromStr for Construction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Construction::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| {
                Error::InvalidInput(format!(
                    "unknown witness kind `{s}` (expected one of {})",
                    Construction::ALL.map(|c| c.name()).join(", ")
                ))
            })
    }
}

/// How a witness was glued.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WitnessParams {
    /// The witness is a pseudotrajectory with jumps below this bound.
    pub d: f64,
    /// Half-length of the construction: time spent on the first arc before the glue.
    pub glue_time: f64,
    /// Time the second arc runs before reaching its launch point (closed-orbit construction).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lead_time: Option<f64>,
    /// Launch points of the glued arcs, in order.
    pub gluing_points: Vec<Point>,
    /// Largest jump, measured.
    pub jump: f64,
    /// Singularity or closed-orbit seed the construction is built around.
    pub anchor: Point,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub disk_radius: Option<f64>,
    /// Built on the reversed flow and reversed in time.
    #[serde(default)]
    pub time_reversed: bool,
    /// Geometric distances `eps_claim` was derived from, before the safety factor.
    pub distances: Vec<f64>,
    /// Closest approach of the loop point's orbits to the singularity.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub loop_tracking_error: Option<f64>,
    /// Set when the construction is formally valid but too coarse to mean anything.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub degenerate: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Witness {
    pub construction: Construction,
    pub params: WitnessParams,
    pub xi: Pseudotrajectory,
    /// The shadowing accuracy the construction is designed to defeat.
    pub eps_claim: f64,
}

impl Witness {
    /// Checks the pseudotrajectory condition at the recorded `d` over the window.
    pub fn validate(&self, flow: &Flow) -> Validation {
        validate_pseudotrajectory(flow, &self.xi, self.params.d, self.xi.window())
    }

    pub fn is_degenerate(&self) -> bool {
        self.params.degenerate.is_some()
    }
}

/// Verdict of [`confirm_failure`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FailureReport {
    /// Every searched candidate stays at least `eps_claim` away somewhere.
    pub pass: bool,
    pub eps_claim: f64,
    pub min_sup_dist: f64,
    /// `(min_sup_dist - eps_claim)` in candidate-grid cells.
    pub margin_cells: f64,
    /// Candidate achieving the minimum.
    pub best_point: Point,
    pub budget: SearchStats,
}

impl FailureReport {
    /// Reads the verdict off an oriented search run at `eps_claim`.
    pub fn from_result(eps_claim: f64, result: &ShadowingResult) -> Self {
        let cell = result.stats.cell;
        let margin = result.sup_dist - eps_claim;
        FailureReport {
            pass: result.sup_dist >= eps_claim,
            eps_claim,
            min_sup_dist: result.sup_dist,
            margin_cells: if cell > 0.0 { margin / cell } else { margin.signum() * f64::INFINITY },
            best_point: result.point,
            budget: result.stats.clone(),
        }
    }
}

/// The search [`confirm_failure`] runs: candidates fill the `eps_claim` ball unless the
/// caller fixed a radius.
pub fn confirm_search(witness: &Witness, search: &SearchConfig) -> SearchConfig {
    let mut s = search.clone();
    s.radius.get_or_insert(witness.eps_claim);
    s
}

/// Runs the oriented verifier against the witness at `eps_claim`.
///
/// A shadowing orbit must start within `eps_claim` of the first sample, so the candidate
/// ball defaults to that radius. PASS means no candidate got below `eps_claim`.
pub fn confirm_failure(flow: &Flow, witness: &Witness, search: &SearchConfig) -> Result<FailureReport> {
    let search = confirm_search(witness, search);
    let result = verify_shadowing(flow, &witness.xi, Mode::Oriented, witness.eps_claim, &search)?;
    Ok(FailureReport::from_result(witness.eps_claim, &result))
}

fn check_d(d: f64) -> Result<()> {
    if d > 0.0 && d.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!("d must be positive, got {d}")))
    }
}

fn ang_dist(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(TAU);
    d.min(TAU - d)
}

/// Counterclockwise angle from `a` to `b`, in `[0, 2pi)`.
fn ccw(a: f64, b: f64) -> f64 {
    (b - a).rem_euclid(TAU)
}

/// Orbit samples every `SCAN_DT` in the given time direction until `stop` fires; `None` if
/// the orbit leaves the domain or the horizon runs out first. Returns the samples and the
/// time reached.
fn trace_until(
    flow: &Flow,
    x: Point,
    backward: bool,
    horizon: f64,
    mut stop: impl FnMut(Point) -> bool,
) -> Option<(Vec<Point>, f64)> {
    let h = if backward { -SCAN_DT } else { SCAN_DT };
    let mut p = x;
    let mut out = vec![x];
    let steps = (horizon / SCAN_DT).ceil() as usize;
    for k in 1..=steps {
        let end = flow.walk(p, h, |_, _| true);
        if end.escaped.is_some() {
            return None;
        }
        p = end.point;
        out.push(p);
        if stop(p) {
            return Some((out, k as f64 * SCAN_DT));
        }
    }
    None
}

/// The orbit of `x` until it comes within `tol` of `p`, staying in the disk; `p` appended.
fn orbit_into(flow: &Flow, disk: &DiskNeighborhood, x: Point, backward: bool, tol: f64) -> Option<Vec<Point>> {
    let p = disk.center;
    let r = disk.radius * (1.0 + 1e-6);
    let mut left = false;
    let (mut pts, _) = trace_until(flow, x, backward, MAX_GLUE_TIME, |q| {
        let dq = (q - p).norm();
        left |= dq > r;
        left || dq < tol
    })?;
    if left {
        return None;
    }
    pts.push(p);
    Some(pts)
}

/// Smallest `T` on the scan grid with `dist(phi(T, a), phi(-T, b)) < d / 2`.
fn glue_time(flow: &Flow, a: Point, b: Point, d: f64) -> Option<f64> {
    let mut pa = a;
    let mut pb = b;
    let steps = (MAX_GLUE_TIME / SCAN_DT) as usize;
    for k in 1..=steps {
        let ea = flow.walk(pa, SCAN_DT, |_, _| true);
        let eb = flow.walk(pb, -SCAN_DT, |_, _| true);
        if ea.escaped.is_some() || eb.escaped.is_some() {
            return None;
        }
        pa = ea.point;
        pb = eb.point;
        if flow.dist(pa, pb) < 0.5 * d {
            return Some(k as f64 * SCAN_DT);
        }
    }
    None
}

/// Glues `a` (arc time `t + shift_a`) to `b` (arc time `t - 2T`) on `[0, 2T]`, nudging `T`
/// up until the measured jump is below `d / 2`.
fn glue_pair(flow: &Flow, a: Point, shift_a: f64, b: Point, t: f64, d: f64) -> Result<(Pseudotrajectory, f64, f64)> {
    let mut t = t;
    loop {
        let (xi, jump) = make_glued(
            flow,
            &[
                GlueArc {
                    point: a,
                    base_time: -shift_a,
                },
                GlueArc {
                    point: b,
                    base_time: 2.0 * t,
                },
            ],
            &[t],
            (0.0, 2.0 * t),
            1.0,
            ExtensionRule::ClampEnds,
        )?;
        if jump < 0.5 * d || t > MAX_GLUE_TIME {
            return Ok((xi, jump, t));
        }
        t += SCAN_DT;
    }
}

fn point_in_polygon(poly: &[Point], x: Point) -> bool {
    let n = poly.len();
    let mut inside = false;
    for i in 0..n {
        let a = poly[i];
        let b = poly[(i + 1) % n];
        if (a.y > x.y) != (b.y > x.y) {
            let cross = a.x + (x.y - a.y) / (b.y - a.y) * (b.x - a.x);
            if x.x < cross {
                inside = !inside;
            }
        }
    }
    inside
}

fn closed_polyline_distance(poly: &[Point], x: Point) -> f64 {
    let mut closed = poly.to_vec();
    closed.push(poly[0]);
    point_polyline_distance(x, &closed)
}

fn refuse_unless_glued(what: &str, t: Option<f64>) -> Result<f64> {
    t.ok_or_else(|| {
        Error::Inconclusive(format!(
            "{what}: the gluing jump stays above d/2 up to T = {MAX_GLUE_TIME}"
        ))
    })
}

fn disk_degeneracy(disk: &DiskNeighborhood, d: f64) -> Option<String> {
    (d >= disk.radius).then(|| {
        format!(
            "d = {d} is not below the disk radius {}; the jump is as large as the sector geometry",
            disk.radius
        )
    })
}

fn sharpened_point(flow: &Flow, disk: &DiskNeighborhood, ray: &BaseOrbit) -> Point {
    disk.boundary_point(sharpen_ray(flow, disk, ray))
}

/// Witness for a singularity with six or more hyperbolic sectors.
///
/// `x0` is a positive separatrix whose two neighbouring sectors `S1`, `S2` are hyperbolic,
/// bounded by negative separatrices `y1`, `y2`; `y3` is the negative separatrix farthest
/// from `x0`. The witness runs into the singularity along `x0` and out along `y3`:
/// `xi(t) = phi(1 + t, x0)` up to `T`, then `phi(t - 2T, y3)`, on `[0, 2T]`.
pub fn multisector_witness(flow: &Flow, disk: &DiskNeighborhood, d: f64) -> Result<Witness> {
    check_d(d)?;
    let p = disk.center;
    let report = classify_singularity(flow, disk)?;
    let hyperbolic = report.verdict.count(SectorType::Hyperbolic);
    if hyperbolic < 6 {
        return Err(Error::Refused(format!(
            "multisector witness needs at least 6 hyperbolic sectors; {p:?} has {hyperbolic} ({:?})",
            report.verdict
        )));
    }
    let same = |a: f64, b: f64| ang_dist(a, b) < 1e-9;
    let ray_at = |angle: f64, sign: Sign| report.rays.iter().find(|r| r.sign == sign && same(r.angle, angle));
    // (x0, y1, y2, arc from y1 through x0 to y2)
    let mut pick = None;
    for x in report.rays.iter().filter(|r| r.sign == Sign::Positive) {
        let before = report.sectors.iter().find(|s| same(s.bounding.1, x.angle));
        let after = report.sectors.iter().find(|s| same(s.bounding.0, x.angle));
        let (Some(before), Some(after)) = (before, after) else { continue };
        if before.kind != SectorType::Hyperbolic || after.kind != SectorType::Hyperbolic {
            continue;
        }
        let (Some(y1), Some(y2)) = (ray_at(before.bounding.0, Sign::Negative), ray_at(after.bounding.1, Sign::Negative)) else {
            continue;
        };
        pick = Some((x, y1, y2));
        break;
    }
    let Some((x0_ray, y1_ray, y2_ray)) = pick else {
        return Err(Error::Refused(format!(
            "no positive separatrix at {p:?} between two hyperbolic sectors"
        )));
    };
    let y3_ray = report
        .rays
        .iter()
        .filter(|r| r.sign == Sign::Negative && !same(r.angle, y1_ray.angle) && !same(r.angle, y2_ray.angle))
        .max_by(|a, b| ang_dist(a.angle, x0_ray.angle).total_cmp(&ang_dist(b.angle, x0_ray.angle)))
        .ok_or_else(|| Error::Refused(format!("no third negative separatrix at {p:?}")))?;

    let x0 = sharpened_point(flow, disk, x0_ray);
    let y3 = sharpened_point(flow, disk, y3_ray);
    let y1 = y1_ray.boundary_point;
    let y2 = y2_ray.boundary_point;
    let tol = 0.01 * disk.radius;
    let missing = |what: &str| Error::Inconclusive(format!("separatrix {what} at {p:?} does not reach the singularity"));
    let orb_x0 = orbit_into(flow, disk, x0, false, tol).ok_or_else(|| missing("x0"))?;
    let orb_y3 = orbit_into(flow, disk, y3, true, tol).ok_or_else(|| missing("y3"))?;
    let orb_y1 = orbit_into(flow, disk, y1, true, tol).ok_or_else(|| missing("y1"))?;
    let orb_y2 = orbit_into(flow, disk, y2, true, tol).ok_or_else(|| missing("y2"))?;

    // Pre-images of the exits must stay away from the path the witness takes.
    let path_dist = |q: Point| {
        point_polyline_distance(q, &orb_x0)
            .min((q - p).norm())
            .min(point_polyline_distance(q, &orb_y3))
    };
    let exits = path_dist(flow.flow_map_clamped(-1.0, y1)).min(path_dist(flow.flow_map_clamped(-1.0, y2)));
    // The exit point must stay away from the closure of S1 and S2.
    let span = ccw(y1_ray.angle, y2_ray.angle);
    let n_arc = ((span / TAU) * disk.boundary_samples as f64).ceil().max(2.0) as usize;
    let arc: Vec<Point> = (0..=n_arc)
        .map(|k| disk.boundary_point(y1_ray.angle + span * k as f64 / n_arc as f64))
        .collect();
    let sectors = point_polyline_distance(y3, &orb_y1)
        .min(point_polyline_distance(y3, &orb_y2))
        .min((y3 - p).norm())
        .min(point_polyline_distance(y3, &arc));
    let eps_claim = SAFETY * exits.min(sectors);

    let start = flow.flow_map_clamped(1.0, x0);
    let t = refuse_unless_glued("multisector witness", glue_time(flow, start, y3, d))?;
    let (xi, jump, t) = glue_pair(flow, x0, 1.0, y3, t, d)?;
    Ok(Witness {
        construction: Construction::MultiSector,
        params: WitnessParams {
            d,
            glue_time: t,
            lead_time: None,
            gluing_points: vec![x0, y3],
            jump,
            anchor: p,
            disk_radius: Some(disk.radius),
            time_reversed: false,
            distances: vec![exits, sectors],
            loop_tracking_error: None,
            degenerate: disk_degeneracy(disk, d),
        },
        xi,
        eps_claim,
    })
}

/// Witness for a singularity with a parabolic sector that is neither stable nor unstable.
///
/// Inside a positive parabolic sector a thin region `S0` between two converging orbits is
/// cut off by a transversal near the sector's edge; `x0` sits in its middle. The witness
/// follows `x0` into the singularity and leaves along a negative base orbit `w`:
/// `xi(t) = phi(t, x0)` up to `T`, then `phi(t - 2T, w)`, on `[0, 2T]`. Negative parabolic
/// sectors are handled on the reversed flow and the result reversed in time.
pub fn parabolic_witness(flow: &Flow, disk: &DiskNeighborhood, d: f64) -> Result<Witness> {
    check_d(d)?;
    let report = classify_singularity(flow, disk)?;
    let kinds: Vec<SectorType> = report.sectors.iter().map(|s| s.kind).collect();
    if kinds.contains(&SectorType::ParabolicPositive) {
        return positive_parabolic(flow, disk, d);
    }
    if kinds.contains(&SectorType::ParabolicNegative) {
        let rev = flow.reversed();
        let mut w = positive_parabolic(&rev, disk, d)?;
        w.xi = w.xi.time_reversed(&rev);
        w.params.time_reversed = true;
        return Ok(w);
    }
    Err(Error::Refused(format!(
        "parabolic witness needs a parabolic sector; {:?} has {:?}",
        disk.center, report.verdict
    )))
}

fn positive_parabolic(flow: &Flow, disk: &DiskNeighborhood, d: f64) -> Result<Witness> {
    let p = disk.center;
    let r = disk.radius;
    let report = classify_singularity(flow, disk)?;
    let sector = report
        .sectors
        .iter()
        .find(|s| s.kind == SectorType::ParabolicPositive)
        .ok_or_else(|| Error::Refused(format!("no positive parabolic sector at {p:?}")))?;

    // A negative base orbit to leave along.
    let w = match report.rays.iter().find(|ray| ray.sign == Sign::Negative) {
        Some(ray) => sharpened_point(flow, disk, ray),
        None => match report.continua.iter().find(|c| c.sign == Sign::Negative) {
            Some(c) => disk.boundary_point(c.ends.0 + 0.5 * ccw(c.ends.0, c.ends.1)),
            None => {
                return Err(Error::Refused(format!(
                    "no negative base orbit at {p:?}: the singularity is asymptotically stable"
                )))
            }
        },
    };

    let (a, b) = sector.bounding;
    let inside_sector = |q: Point| {
        let th = (q - p).angle();
        ccw(a, th) < ccw(a, b)
    };
    let x1 = disk.boundary_point(a);
    let foot = flow.flow_map_clamped(1.0, x1);
    let field = flow.velocity(foot);
    let along = field
        .perp()
        .normalized()
        .ok_or_else(|| Error::Transversal(format!("field vanishes at {foot:?}")))?;
    let tol = 0.01 * r;
    let mut s0 = 0.2 * r;
    let mut region = None;
    'search: for _ in 0..5 {
        for sign in [1.0, -1.0] {
            let dir = along * sign;
            let inner = foot + dir * (0.25 * s0);
            let outer = foot + dir * s0;
            if !inside_sector(outer) {
                continue;
            }
            let (Some(orb_in), Some(orb_out)) = (
                orbit_into(flow, disk, inner, false, tol),
                orbit_into(flow, disk, outer, false, tol),
            ) else {
                continue;
            };
            region = Some((dir, orb_in, orb_out));
            break 'search;
        }
        s0 *= 0.5;
    }
    let Some((dir, orb_in, orb_out)) = region else {
        return Err(Error::Inconclusive(format!(
            "no transversal near the parabolic sector edge at angle {a:.4} with converging ends"
        )));
    };
    // Boundary of S0: transversal piece, outer orbit, singularity, inner orbit back.
    let mut poly: Vec<Point> = (0..=16).map(|k| foot + dir * (s0 * (0.25 + 0.75 * k as f64 / 16.0))).collect();
    poly.extend(orb_out.iter().skip(1).step_by(5));
    poly.push(p);
    poly.extend(orb_in.iter().rev().skip(1).step_by(5));
    let x0 = flow.flow_map_clamped(1.0, foot + dir * (0.625 * s0));
    if !point_in_polygon(&poly, x0) {
        return Err(Error::Inconclusive(format!(
            "launch point {x0:?} is not inside the region cut off in the parabolic sector"
        )));
    }
    let inner_gap = closed_polyline_distance(&poly, x0);
    let boundary_gap = r - poly.iter().map(|q| (*q - p).norm()).fold(0.0, f64::max);
    let eps_claim = SAFETY * inner_gap.min(boundary_gap);
    if !(eps_claim > 0.0) {
        return Err(Error::Inconclusive(format!(
            "parabolic region reaches the disk boundary (gap {boundary_gap:.3e})"
        )));
    }

    let t = refuse_unless_glued("parabolic witness", glue_time(flow, x0, w, d))?;
    let (xi, jump, t) = glue_pair(flow, x0, 0.0, w, t, d)?;
    Ok(Witness {
        construction: Construction::Parabolic,
        params: WitnessParams {
            d,
            glue_time: t,
            lead_time: None,
            gluing_points: vec![x0, w],
            jump,
            anchor: p,
            disk_radius: Some(r),
            time_reversed: false,
            distances: vec![inner_gap, boundary_gap],
            loop_tracking_error: None,
            degenerate: disk_degeneracy(disk, d),
        },
        xi,
        eps_claim,
    })
}

/// Witness for a semistable closed orbit.
///
/// `p0` lies on the attracting side, `p1` on the repelling side. The witness
/// `xi(t) = phi(t + tau0, p0)` for `t <= 0`, `phi(t - tau1, p1)` after, on `[-tau0, tau1]`,
/// creeps up to the cycle from one side and leaves it on the other, which orbits starting
/// near `p0` cannot do.
pub fn semistable_cycle_witness(flow: &Flow, orbit: &CriticalElement, d: f64) -> Result<Witness> {
    check_d(d)?;
    let ElementKind::ClosedOrbit { polyline, .. } = &orbit.kind else {
        return Err(Error::InvalidInput(format!("{} is not a closed orbit", orbit.label())));
    };
    let (stability, map) = classify_closed_orbit(flow, orbit)?;
    if stability != Stability::SemiStable {
        return Err(Error::Refused(format!(
            "semistable-cycle witness needs a semistable orbit; {} is {stability:?}",
            orbit.label()
        )));
    }
    let surface = *flow.surface();
    let lambda = |q: Point| polyline_distance(&surface, polyline, q);
    // Side of the transversal whose points the forward flow pulls in.
    let toward = map
        .samples
        .iter()
        .filter(|(s, _)| *s > map.fixed_point)
        .all(|(s, ps)| (ps - map.fixed_point).abs() < (s - map.fixed_point).abs());
    let forward_toward = match map.direction {
        crate::sectors::Direction::Forward => toward,
        crate::sectors::Direction::Backward => !toward,
    };
    let side = if forward_toward { 1.0 } else { -1.0 };
    let tr = &map.transversal;
    let sings = find_singularities(flow, 16)?;

    let mut scale = 1.0;
    for _ in 0..3 {
        let p0 = surface.wrap(tr.point_at(map.fixed_point + side * CYCLE_OFFSETS.0 * scale));
        let p1 = surface.wrap(tr.point_at(map.fixed_point - side * CYCLE_OFFSETS.1 * scale));
        scale *= 0.5;
        // tau0: p0 creeps up to the cycle.
        let Some((_, tau0)) = trace_until(flow, p0, false, MAX_GLUE_TIME, |q| lambda(q) < 0.25 * d) else {
            continue;
        };
        let q0 = flow.flow_map_clamped(tau0, p0);
        // tau1: the backward orbit of p1 passes close to q0.
        let Some((_, tau1)) = trace_until(flow, p1, true, MAX_GLUE_TIME, |q| flow.dist(q, q0) < 0.5 * d) else {
            continue;
        };

        let eps_a = sings.iter().map(|s| flow.dist(*s, p0)).fold(lambda(p0), f64::min);
        let trapped = trapped_hull_distance(flow, p0, eps_a, p1, &lambda);
        let eps_claim = SAFETY * eps_a.min(trapped);
        if !(eps_claim > 0.0) {
            continue;
        }
        let (xi, jump) = make_glued(
            flow,
            &[
                GlueArc {
                    point: p0,
                    base_time: -tau0,
                },
                GlueArc {
                    point: p1,
                    base_time: tau1,
                },
            ],
            &[0.0],
            (-tau0, tau1),
            1.0,
            ExtensionRule::ClampEnds,
        )?;
        let degenerate = (d >= eps_a).then(|| format!("d = {d} is not below the launch offset {eps_a:.4}"));
        return Ok(Witness {
            construction: Construction::SemiStableCycle,
            params: WitnessParams {
                d,
                glue_time: tau1,
                lead_time: Some(tau0),
                gluing_points: vec![p0, p1],
                jump,
                anchor: orbit.anchor(),
                disk_radius: None,
                time_reversed: false,
                distances: vec![eps_a, trapped],
                loop_tracking_error: None,
                degenerate,
            },
            xi,
            eps_claim,
        });
    }
    Err(Error::Inconclusive(format!(
        "no launch points near {} whose orbits reach the cycle from both sides",
        orbit.label()
    )))
}

/// Distance from `p1` to the forward hull of the ball `B(radius, p0)`, estimated from the
/// orbits of its center and 32 boundary points, each followed until it is within `tol` of the
/// cycle (the rest of the hull is charged as `dist(p1, cycle) - tol`).
fn trapped_hull_distance(flow: &Flow, p0: Point, radius: f64, p1: Point, lambda: &dyn Fn(Point) -> f64) -> f64 {
    let tol = 0.02;
    let probe = flow.clone().with_step(1e-2).unwrap_or_else(|_| flow.clone());
    let mut best = (lambda(p1) - tol).min(flow.dist(p0, p1) - radius);
    let starts = std::iter::once(p0).chain((0..32).map(|k| p0 + Point::polar(radius, TAU * k as f64 / 32.0)));
    for x in starts {
        let mut k = 0usize;
        let pts = trace_until(&probe, x, false, 500.0, |q| {
            k += 1;
            k.is_multiple_of(10) && lambda(q) < tol
        });
        let pts = match pts {
            Some((pts, _)) => pts,
            // Orbits that do not settle still bound the hull by what was traced.
            None => {
                let mut pts = Vec::new();
                probe.walk(x, 500.0, |_, q| {
                    pts.push(q);
                    true
                });
                pts
            }
        };
        for q in pts.iter().step_by(2) {
            best = best.min(flow.dist(*q, p1));
        }
    }
    best
}

/// User-designated loop through a singularity.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LoopData {
    /// Point on or near the loop whose orbit should approach the singularity both ways.
    pub point: Point,
    /// How long to follow the orbit in each direction.
    #[serde(default = "default_loop_horizon")]
    pub horizon: f64,
}

fn default_loop_horizon() -> f64 {
    200.0
}

impl LoopData {
    pub fn new(point: Point) -> Self {
        LoopData {
            point,
            horizon: default_loop_horizon(),
        }
    }
}

/// Periodic witness around a loop through the singularity `p`.
///
/// Finds the smallest `T` with `phi(T + t, x1)` and `phi(-T + t, x1)` in `B(d / 2, p)` for
/// `t` in `[0, 1]` and repeats the arc `phi(t, x1)`, `t` in `[-T, T)`, periodically.
/// `eps_claim` is `0.9 * dist(x1, p) / 2`. How closely the loop is really tracked is reported
/// as the larger of the two closest approaches to `p`.
pub fn self_connection_witness(flow: &Flow, p: Point, loop_data: &LoopData, d: f64) -> Result<Witness> {
    check_d(d)?;
    let speed = flow.velocity(p).norm();
    if speed > 1e-6 {
        return Err(Error::Refused(format!("{p:?} is not a singularity (|f| = {speed:.3e})")));
    }
    let x1 = loop_data.point;
    let gap = flow.dist(x1, p);
    if gap == 0.0 {
        return Err(Error::InvalidInput("loop point coincides with the singularity".into()));
    }
    let run = |backward: bool| -> Vec<f64> {
        let mut dists = vec![gap];
        let _ = trace_until(flow, x1, backward, loop_data.horizon, |q| {
            dists.push(flow.dist(q, p));
            false
        });
        dists
    };
    let fwd = run(false);
    let bwd = run(true);
    let closest = |v: &[f64]| v.iter().copied().fold(f64::INFINITY, f64::min);
    let tracking = closest(&fwd).max(closest(&bwd));
    let ball = 0.5 * d;
    let unit = (1.0 / SCAN_DT).round() as usize;
    // All samples of `v` in [k, k + unit] inside the ball.
    let dwell = |v: &[f64], k: usize| k + unit < v.len() && v[k..=k + unit].iter().all(|&x| x < ball);
    // Backward-in-time window [-T, -T + 1] covers backward samples T - 1 .. T.
    let t_index = (unit..fwd.len().min(bwd.len())).find(|&k| dwell(&fwd, k) && dwell(&bwd, k - unit));
    let Some(k) = t_index else {
        return Err(Error::Refused(format!(
            "loop point {x1:?} does not return to {p:?}: closest approaches {:.3e} forward, {:.3e} backward, need dwell in B({ball}, p)",
            closest(&fwd),
            closest(&bwd)
        )));
    };
    let t = k as f64 * SCAN_DT;
    let start = flow.flow_map_clamped(-t, x1);
    let xi = Pseudotrajectory::from_arcs(1.0, &[(-t, start)], t, ExtensionRule::PeriodicAnchors)?;
    let jump = jump_size(flow, &xi);
    let diameter = fwd[..=k].iter().chain(&bwd[..=k]).copied().fold(0.0, f64::max);
    let degenerate = (d >= diameter).then(|| format!("d = {d} exceeds the loop diameter {diameter:.4}"));
    Ok(Witness {
        construction: Construction::SelfConnection,
        params: WitnessParams {
            d,
            glue_time: t,
            lead_time: None,
            gluing_points: vec![start],
            jump,
            anchor: p,
            disk_radius: None,
            time_reversed: false,
            distances: vec![0.5 * gap],
            loop_tracking_error: Some(tracking),
            degenerate,
        },
        xi,
        eps_claim: SAFETY * 0.5 * gap,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flow::{CatalogField, Surface, TermTable, VectorField};
    use crate::flow::Term;

    fn disk() -> DiskNeighborhood {
        DiskNeighborhood::new(Point::ORIGIN, 0.5)
    }

    fn unit_circle() -> CriticalElement {
        let line = (0..400).map(|k| Point::polar(1.0, TAU * k as f64 / 400.0)).collect();
        CriticalElement::closed_orbit(Point::new(1.0, 0.0), TAU, line)
    }

    pub(crate) fn damped_loop(delta: f64) -> Flow {
        let table = TermTable {
            x: vec![Term::monomial(1.0, 0, 1)],
            y: vec![Term::monomial(1.0, 1, 0), Term::monomial(-1.0, 2, 0), Term::monomial(delta, 0, 1)],
        };
        Flow::new(VectorField::table(table, Surface::square(3.0).unwrap()).unwrap())
    }

    #[test]
    fn multisector_on_monkey() {
        let flow = Flow::catalog(CatalogField::Monkey);
        let w = multisector_witness(&flow, &disk(), 0.1).unwrap();
        // Separatrix geometry: exits at radius 1/3, 60 degrees off the incoming ray.
        let expected = SAFETY * 0.5 / 1.5 * (TAU / 6.0).sin();
        assert!((w.eps_claim - expected).abs() < 0.01, "{} vs {expected}", w.eps_claim);
        assert!(w.params.jump < 0.05, "{}", w.params.jump);
        assert!(w.validate(&flow).valid);
        assert!(!w.is_degenerate());
        // Out along a separatrix opposite the incoming one.
        let (x0, y3) = (w.params.gluing_points[0], w.params.gluing_points[1]);
        assert!(ang_dist(x0.angle(), y3.angle()) > 3.0, "{x0:?} {y3:?}");
    }

    #[test]
    fn multisector_refusals_and_degeneracy() {
        let saddle = Flow::catalog(CatalogField::Saddle);
        assert!(matches!(multisector_witness(&saddle, &disk(), 0.1), Err(Error::Refused(_))));
        let monkey = Flow::catalog(CatalogField::Monkey);
        assert!(multisector_witness(&monkey, &disk(), 0.6).unwrap().is_degenerate());
    }

    #[test]
    fn parabolic_on_saddle_node() {
        let flow = Flow::catalog(CatalogField::SaddleNode);
        let w = parabolic_witness(&flow, &disk(), 0.1).unwrap();
        assert!(w.eps_claim > 0.02 && w.eps_claim < 0.05, "{}", w.eps_claim);
        assert!(w.validate(&flow).valid);
        // Leaves along the unstable x-axis.
        let wpt = w.params.gluing_points[1];
        assert!((wpt - Point::new(0.5, 0.0)).norm() < 1e-2, "{wpt:?}");
        // The launch point sits in the attracting left half.
        assert!(w.params.gluing_points[0].x < 0.0);
    }

    #[test]
    fn parabolic_refusals() {
        for c in [CatalogField::Saddle, CatalogField::Sink] {
            let r = parabolic_witness(&Flow::catalog(c), &disk(), 0.01);
            assert!(matches!(r, Err(Error::Refused(_))), "{c}: {r:?}");
        }
    }

    #[test]
    fn parabolic_negative_sector_by_reversal() {
        let flow = Flow::catalog(CatalogField::SaddleNode).reversed();
        let w = parabolic_witness(&flow, &disk(), 0.1).unwrap();
        assert!(w.params.time_reversed);
        assert!(w.validate(&flow).valid);
        assert!(w.xi.window().1 <= 1e-12);
    }

    #[test]
    fn semistable_sides() {
        let flow = Flow::catalog(CatalogField::SemistableCycle);
        let w = semistable_cycle_witness(&flow, &unit_circle(), 0.1).unwrap();
        let (p0, p1) = (w.params.gluing_points[0], w.params.gluing_points[1]);
        assert!((p0.norm() - 0.7).abs() < 1e-6 && (p1.norm() - 1.5).abs() < 1e-6, "{p0:?} {p1:?}");
        assert!((w.eps_claim - 0.27).abs() < 0.01, "{}", w.eps_claim);
        assert!(w.params.jump < 0.05);
        assert!(w.validate(&flow).valid);

        let rev = flow.reversed();
        let w = semistable_cycle_witness(&rev, &unit_circle(), 0.1).unwrap();
        let (p0, p1) = (w.params.gluing_points[0], w.params.gluing_points[1]);
        assert!(p0.norm() > 1.0 && p1.norm() < 1.0, "{p0:?} {p1:?}");
        assert!(w.validate(&rev).valid);
    }

    #[test]
    fn semistable_refuses_stable_cycle() {
        let flow = Flow::catalog(CatalogField::LimitCycle);
        let r = semistable_cycle_witness(&flow, &unit_circle(), 0.1);
        assert!(matches!(r, Err(Error::Refused(_))), "{r:?}");
    }

    #[test]
    fn self_connection_on_damped_loop() {
        let flow = damped_loop(1e-4);
        let data = LoopData::new(Point::new(1.5, 0.0));
        let w = self_connection_witness(&flow, Point::ORIGIN, &data, 0.1).unwrap();
        assert!(w.params.jump < 0.1, "{}", w.params.jump);
        assert!(w.validate(&flow).valid);
        assert!((w.eps_claim - 0.675).abs() < 1e-12);
        let err = w.params.loop_tracking_error.unwrap();
        assert!(err > 0.0 && err < 0.05, "{err}");
        assert!(!w.is_degenerate());

        assert!(self_connection_witness(&flow, Point::ORIGIN, &data, 5.0).unwrap().is_degenerate());
    }

    #[test]
    fn self_connection_refusals() {
        let saddle = Flow::catalog(CatalogField::Saddle);
        let data = LoopData::new(Point::new(1.5, 0.0));
        let r = self_connection_witness(&saddle, Point::ORIGIN, &data, 0.1);
        assert!(matches!(r, Err(Error::Refused(_))), "{r:?}");
        let r = self_connection_witness(&damped_loop(1e-4), Point::new(0.5, 0.0), &data, 0.1);
        assert!(matches!(r, Err(Error::Refused(_))), "{r:?}");
    }

    #[test]
    fn exact_orbit_is_not_a_failure() {
        let flow = Flow::catalog(CatalogField::Saddle);
        let x = Point::new(0.3, 0.4);
        let xi = Pseudotrajectory::exact_orbit(x, 0.0, 2.0).unwrap();
        let w = Witness {
            construction: Construction::MultiSector,
            params: WitnessParams {
                d: 1e-3,
                glue_time: 1.0,
                lead_time: None,
                gluing_points: vec![x],
                jump: 0.0,
                anchor: Point::ORIGIN,
                disk_radius: None,
                time_reversed: false,
                distances: vec![],
                loop_tracking_error: None,
                degenerate: None,
            },
            xi,
            eps_claim: 1e-3,
        };
        let r = confirm_failure(&flow, &w, &SearchConfig::default()).unwrap();
        assert!(!r.pass);
        assert!(r.min_sup_dist < 1e-4, "{}", r.min_sup_dist);
        assert!(r.margin_cells < 0.0);
    }

    #[test]
    fn construction_names_round_trip() {
        for c in Construction::ALL {
            assert_eq!(c.name().parse::<Construction>().unwrap(), c);
        }
        assert!("elliptic".parse::<Construction>().is_err());
    }
}
