//! Base orbits on a disk boundary around a singularity, sector decomposition, and the
//! resulting singularity verdict.

use std::f64::consts::TAU;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::critical::{polyline_distance, CriticalElement, ElementKind};
use crate::error::{Error, Result};
use crate::flow::{build_transversal, Flow, OrbitSegment};
use crate::geom::Point;

/// Exit angles further apart than this (radians) mark a separatrix between two samples.
const JUMP: f64 = 0.5;
/// Clusters of converging samples longer than this are continua, not isolated rays.
const MAX_RAY_CLUSTER: usize = 3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SectorType {
    Elliptic,
    Hyperbolic,
    ParabolicPositive,
    ParabolicNegative,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SingularityClass {
    AsymptoticallyStable,
    BackwardAsymptoticallyStable,
    FourHyperbolic,
    TwoHyperbolic,
    /// Any other decomposition, as a sorted multiset of sector types.
    Other(Vec<SectorType>),
}

impl SingularityClass {
    fn from_sectors(sectors: &[Sector]) -> Self {
        let mut kinds: Vec<SectorType> = sectors.iter().map(|s| s.kind).collect();
        kinds.sort();
        let all_hyperbolic = kinds.iter().all(|k| *k == SectorType::Hyperbolic);
        match (kinds.len(), all_hyperbolic) {
            (4, true) => SingularityClass::FourHyperbolic,
            (2, true) => SingularityClass::TwoHyperbolic,
            _ => SingularityClass::Other(kinds),
        }
    }

    pub fn count(&self, kind: SectorType) -> usize {
        match self {
            SingularityClass::FourHyperbolic if kind == SectorType::Hyperbolic => 4,
            SingularityClass::TwoHyperbolic if kind == SectorType::Hyperbolic => 2,
            SingularityClass::Other(v) => v.iter().filter(|k| **k == kind).count(),
            _ => 0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sign {
    /// Forward orbit converges to the singularity.
    Positive,
    /// Backward orbit converges to the singularity.
    Negative,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Forward,
    Backward,
}

/// A closed disk around a singularity, sampled on its boundary.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DiskNeighborhood {
    pub center: Point,
    pub radius: f64,
    pub boundary_samples: usize,
    /// Integration horizon for convergence tests.
    pub horizon: f64,
    /// "Converged" radius as a fraction of `radius`.
    pub conv_fraction: f64,
    /// Integrator step for boundary probes.
    pub probe_step: f64,
}

impl Default for DiskNeighborhood {
    fn default() -> Self {
        DiskNeighborhood {
            center: Point::ORIGIN,
            radius: 0.5,
            boundary_samples: 720,
            horizon: 100.0,
            conv_fraction: 0.05,
            probe_step: 1e-2,
        }
    }
}

impl DiskNeighborhood {
    pub fn new(center: Point, radius: f64) -> Self {
        DiskNeighborhood {
            center,
            radius,
            ..Default::default()
        }
    }

    pub fn with_samples(mut self, n: usize) -> Self {
        self.boundary_samples = n;
        self
    }

    pub fn conv_tol(&self) -> f64 {
        self.conv_fraction * self.radius
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.radius > 0.0) || self.boundary_samples < 8 || !(self.horizon > 0.0) {
            return Err(Error::InvalidInput(format!(
                "disk needs positive radius, horizon and >= 8 samples (radius {}, samples {})",
                self.radius, self.boundary_samples
            )));
        }
        if !(self.conv_fraction > 0.0 && self.conv_fraction < 0.5) {
            return Err(Error::InvalidInput(
                "boundary samples sit within the convergence tolerance (radius too small)".into(),
            ));
        }
        Ok(())
    }

    /// Checks that no other critical element meets the disk.
    pub fn check_isolated(&self, flow: &Flow, elements: &[CriticalElement]) -> Result<()> {
        for e in elements {
            let d = e.distance_to(flow.surface(), self.center);
            if d > 1e-6 && d <= self.radius {
                return Err(Error::InvalidInput(format!(
                    "{} lies inside the disk of radius {} around {:?}",
                    e.label(),
                    self.radius,
                    self.center
                )));
            }
        }
        Ok(())
    }

    pub fn angle_of(&self, k: f64) -> f64 {
        TAU * k / self.boundary_samples as f64
    }

    pub fn boundary_point(&self, theta: f64) -> Point {
        self.center + Point::polar(self.radius, theta)
    }

    fn probe_flow(&self, flow: &Flow) -> Flow {
        flow.clone().with_step(self.probe_step).unwrap_or_else(|_| flow.clone())
    }
}

/// Where an orbit from a boundary point goes, in one time direction.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "fate", rename_all = "snake_case")]
pub enum Fate {
    /// Entered the convergence ball at `time` and stayed within twice its radius.
    Converge { time: f64 },
    /// Left the disk at polar angle `angle` after `time`.
    Exit { angle: f64, time: f64 },
    /// Neither by the horizon.
    Inconclusive,
}

impl Fate {
    pub fn converges(&self) -> bool {
        matches!(self, Fate::Converge { .. })
    }
}

/// Follows `x` for `|duration|` (sign gives the direction) relative to the ball of radius
/// `radius` about `dist(.)`'s zero set.
fn fate_with<F>(probe: &Flow, x: Point, duration: f64, radius: f64, conv_tol: f64, dist: F, angle_of: impl Fn(Point) -> f64) -> Fate
where
    F: Fn(Point) -> f64,
{
    let mut entered: Option<f64> = None;
    let mut exit: Option<(f64, f64)> = None;
    let surface = *probe.surface();
    let end = probe.walk(x, duration, |t, p| {
        let p = surface.wrap(p);
        let d = dist(p);
        if d > radius * (1.0 + 1e-9) {
            exit = Some((angle_of(p), t.abs()));
            return false;
        }
        match entered {
            None if d < conv_tol => entered = Some(t.abs()),
            Some(_) if d > 2.0 * conv_tol => entered = None,
            _ => {}
        }
        true
    });
    if let Some((angle, time)) = exit {
        return Fate::Exit { angle, time };
    }
    if let Some(t) = end.escaped {
        return Fate::Exit {
            angle: angle_of(surface.wrap(end.point)),
            time: t.abs(),
        };
    }
    match entered {
        Some(time) => Fate::Converge { time },
        None => Fate::Inconclusive,
    }
}

fn disk_fate(probe: &Flow, disk: &DiskNeighborhood, x: Point, dir: Direction) -> Fate {
    let surface = *probe.surface();
    let c = disk.center;
    let duration = match dir {
        Direction::Forward => disk.horizon,
        Direction::Backward => -disk.horizon,
    };
    fate_with(
        probe,
        x,
        duration,
        disk.radius,
        disk.conv_tol(),
        |p| surface.dist(c, p),
        |p| surface.displacement(c, p).angle(),
    )
}

fn ang_dist(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(TAU);
    d.min(TAU - d)
}

/// An isolated base-orbit ray.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BaseOrbit {
    pub sign: Sign,
    pub angle: f64,
    pub boundary_point: Point,
    /// Position among boundary samples (fractional after refinement).
    pub entry_index: f64,
    pub segment: OrbitSegment,
}

/// A run of boundary samples that all generate base orbits of one sign.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Continuum {
    pub sign: Sign,
    /// Inclusive sample index range, counterclockwise (may wrap).
    pub arc: (usize, usize),
    /// Refined end angles, counterclockwise from `.0` to `.1`.
    pub ends: (f64, f64),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BaseOrbitScan {
    pub rays: Vec<BaseOrbit>,
    pub continua: Vec<Continuum>,
    /// Set when every boundary sample generates a base orbit of this sign.
    pub full_boundary: Option<Sign>,
    /// Angles of samples whose fate stayed undecided at the horizon.
    pub inconclusive_rays: Vec<f64>,
    pub forward: Vec<Fate>,
    pub backward: Vec<Fate>,
}

fn base_segment(probe: &Flow, x: Point, dir: Direction, fate: &Fate) -> OrbitSegment {
    let t = match fate {
        Fate::Converge { time } => time + 1.0,
        _ => 1.0,
    };
    let seg = match dir {
        Direction::Forward => probe.sample_orbit(x, 0.0, t, 0.05),
        Direction::Backward => probe.sample_orbit(x, -t, 0.0, 0.05),
    };
    seg.unwrap_or(OrbitSegment {
        start: x,
        t_begin: 0.0,
        t_end: 0.0,
        samples: vec![(0.0, x)],
        escaped_at: None,
    })
}

/// Scans the disk boundary for base orbits: isolated rays (refined by bisection to
/// `1e-3 * radius`) and continua of converging samples.
pub fn find_base_orbits(flow: &Flow, disk: &DiskNeighborhood) -> Result<BaseOrbitScan> {
    disk.validate()?;
    let probe = disk.probe_flow(flow);
    let n = disk.boundary_samples;
    let points: Vec<Point> = (0..n).map(|k| disk.boundary_point(disk.angle_of(k as f64))).collect();
    let fates: Vec<(Fate, Fate)> = points
        .par_iter()
        .map(|&x| {
            (
                disk_fate(&probe, disk, x, Direction::Forward),
                disk_fate(&probe, disk, x, Direction::Backward),
            )
        })
        .collect();
    let forward: Vec<Fate> = fates.iter().map(|f| f.0).collect();
    let backward: Vec<Fate> = fates.iter().map(|f| f.1).collect();

    let mut scan = BaseOrbitScan {
        rays: Vec::new(),
        continua: Vec::new(),
        full_boundary: None,
        inconclusive_rays: Vec::new(),
        forward: forward.clone(),
        backward: backward.clone(),
    };
    for k in 0..n {
        if forward[k] == Fate::Inconclusive || backward[k] == Fate::Inconclusive {
            scan.inconclusive_rays.push(disk.angle_of(k as f64));
        }
    }
    for (sign, dir, fs) in [
        (Sign::Positive, Direction::Forward, &forward),
        (Sign::Negative, Direction::Backward, &backward),
    ] {
        if fs.iter().all(Fate::converges) {
            if scan.full_boundary.is_none() {
                scan.full_boundary = Some(sign);
            }
            continue;
        }
        scan_direction(&probe, disk, sign, dir, fs, &mut scan);
    }
    scan.rays.sort_by(|a, b| a.angle.total_cmp(&b.angle));
    Ok(scan)
}

fn scan_direction(probe: &Flow, disk: &DiskNeighborhood, sign: Sign, dir: Direction, fs: &[Fate], scan: &mut BaseOrbitScan) {
    let n = fs.len();
    // Start just after a non-converging sample so clusters do not wrap around index 0.
    let start = (0..n).find(|&k| !fs[k].converges()).unwrap();
    let mut k = 0;
    while k < n {
        let idx = (start + k) % n;
        if fs[idx].converges() {
            let mut len = 0;
            while len < n && fs[(idx + len) % n].converges() {
                len += 1;
            }
            let last = (idx + len - 1) % n;
            if len <= MAX_RAY_CLUSTER {
                let mid = idx as f64 + (len - 1) as f64 / 2.0;
                let angle = disk.angle_of(mid).rem_euclid(TAU);
                push_ray(probe, disk, sign, dir, angle, mid % n as f64, scan);
            } else {
                let lo = refine_edge(probe, disk, dir, (idx + n - 1) % n, idx);
                let hi = refine_edge(probe, disk, dir, (last + 1) % n, last);
                scan.continua.push(Continuum {
                    sign,
                    arc: (idx, last),
                    ends: (lo, hi),
                });
            }
            k += len;
            continue;
        }
        let next = (idx + 1) % n;
        if let (Fate::Exit { angle: a, .. }, Fate::Exit { angle: b, .. }) = (fs[idx], fs[next]) {
            if ang_dist(a, b) > JUMP {
                if let Some(angle) = refine_jump(probe, disk, dir, idx, a, b) {
                    let frac = angle / TAU * n as f64;
                    push_ray(probe, disk, sign, dir, angle, frac, scan);
                }
            }
        }
        k += 1;
    }
}

fn push_ray(probe: &Flow, disk: &DiskNeighborhood, sign: Sign, dir: Direction, angle: f64, index: f64, scan: &mut BaseOrbitScan) {
    let x = disk.boundary_point(angle);
    let fate = disk_fate(probe, disk, x, dir);
    scan.rays.push(BaseOrbit {
        sign,
        angle,
        boundary_point: x,
        entry_index: index,
        segment: base_segment(probe, x, dir, &fate),
    });
}

/// Bisects between sample `k` and `k + 1` while the exit-angle jump persists.
fn refine_jump(probe: &Flow, disk: &DiskNeighborhood, dir: Direction, k: usize, a0: f64, b0: f64) -> Option<f64> {
    let mut lo = disk.angle_of(k as f64);
    let mut hi = disk.angle_of(k as f64 + 1.0);
    let (mut a, b) = (a0, b0);
    let tol = 1e-3;
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        match disk_fate(probe, disk, disk.boundary_point(mid), dir) {
            Fate::Exit { angle, .. } => {
                if ang_dist(a, angle) > JUMP {
                    hi = mid;
                } else if ang_dist(angle, b) > JUMP {
                    lo = mid;
                    a = angle;
                } else {
                    // The jump smoothed out: a steep but continuous exit map.
                    return None;
                }
            }
            _ => return Some(mid.rem_euclid(TAU)),
        }
    }
    Some((0.5 * (lo + hi)).rem_euclid(TAU))
}

/// Bisects between a non-converging sample and a converging one.
fn refine_edge(probe: &Flow, disk: &DiskNeighborhood, dir: Direction, outside: usize, inside: usize) -> f64 {
    let n = disk.boundary_samples as f64;
    let mut out_a = disk.angle_of(outside as f64);
    let mut in_a = disk.angle_of(inside as f64);
    // Unwrap so the two are adjacent.
    if (in_a - out_a).abs() > TAU / 2.0 {
        if in_a < out_a {
            in_a += TAU;
        } else {
            out_a += TAU;
        }
    }
    let _ = n;
    while (in_a - out_a).abs() > 1e-3 {
        let mid = 0.5 * (in_a + out_a);
        if disk_fate(probe, disk, disk.boundary_point(mid), dir).converges() {
            in_a = mid;
        } else {
            out_a = mid;
        }
    }
    in_a.rem_euclid(TAU)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sector {
    #[serde(rename = "type")]
    pub kind: SectorType,
    /// Boundary sample indices strictly inside the sector, counterclockwise.
    pub arc: (usize, usize),
    /// Angles of the bounding base orbits, counterclockwise.
    pub bounding: (f64, f64),
    pub bounding_signs: (Sign, Sign),
}

/// Splits the disk into sectors between consecutive bounding base orbits and types them.
pub fn decompose_sectors(flow: &Flow, disk: &DiskNeighborhood, scan: &BaseOrbitScan) -> Result<Vec<Sector>> {
    let n = disk.boundary_samples;
    // Bounding orbits: isolated rays and continuum ends, with what lies just after each.
    let mut bounds: Vec<(f64, Sign, Option<Sign>)> = Vec::new();
    for r in &scan.rays {
        bounds.push((r.angle, r.sign, None));
    }
    for c in &scan.continua {
        bounds.push((c.ends.0, c.sign, Some(c.sign)));
        bounds.push((c.ends.1, c.sign, None));
    }
    if bounds.is_empty() {
        return Err(Error::UnresolvedSector(
            "no isolated base orbit; the verdict rests on stability tests".into(),
        ));
    }
    bounds.sort_by(|a, b| a.0.total_cmp(&b.0));
    let probe = disk.probe_flow(flow);
    let m = bounds.len();
    let mut sectors = Vec::with_capacity(m);
    for s in 0..m {
        let (a, sa, inside) = bounds[s];
        let (mut b, sb, _) = bounds[(s + 1) % m];
        if b <= a {
            b += TAU;
        }
        let i0 = (a / TAU * n as f64).floor() as usize + 1;
        let i1 = (b / TAU * n as f64).ceil() as usize - 1;
        let kind = if let Some(sign) = inside {
            match sign {
                Sign::Positive => SectorType::ParabolicPositive,
                Sign::Negative => SectorType::ParabolicNegative,
            }
        } else {
            type_interior(&probe, disk, scan, i0, i1, (a, b), (sa, sb))?
        };
        sectors.push(Sector {
            kind,
            arc: (i0 % n, i1 % n),
            bounding: (a, b.rem_euclid(TAU)),
            bounding_signs: (sa, sb),
        });
    }
    Ok(sectors)
}

fn type_interior(
    probe: &Flow,
    disk: &DiskNeighborhood,
    scan: &BaseOrbitScan,
    i0: usize,
    i1: usize,
    angles: (f64, f64),
    signs: (Sign, Sign),
) -> Result<SectorType> {
    let n = disk.boundary_samples;
    let mut pos = false;
    let mut neg = false;
    // Undecided samples are tolerated only in runs touching either end of the arc, where
    // orbits shadow a bounding base orbit for longer than the horizon.
    let idx: Vec<usize> = if i1 >= i0 { (i0..=i1).map(|i| i % n).collect() } else { Vec::new() };
    let undecided = |k: usize| scan.forward[k] == Fate::Inconclusive || scan.backward[k] == Fate::Inconclusive;
    let first = idx.iter().position(|&k| !undecided(k));
    let last = idx.iter().rposition(|&k| !undecided(k));
    let (Some(first), Some(last)) = (first, last) else {
        return Err(Error::UnresolvedSector(format!(
            "undecided boundary orbits between angles {:.4} and {:.4}",
            angles.0, angles.1
        )));
    };
    for &k in &idx[first..=last] {
        if undecided(k) {
            return Err(Error::UnresolvedSector(format!(
                "undecided boundary orbit at angle {:.4} inside a sector",
                disk.angle_of(k as f64)
            )));
        }
        pos |= scan.forward[k].converges();
        neg |= scan.backward[k].converges();
    }
    // Elliptic: the two bounding base orbits trace one orbit.
    if signs.0 != signs.1 {
        let ends = |theta: f64, sign: Sign| {
            let x = disk.boundary_point(theta.rem_euclid(TAU));
            let dir = match sign {
                Sign::Positive => Direction::Forward,
                Sign::Negative => Direction::Backward,
            };
            let fate = disk_fate(probe, disk, x, dir);
            base_segment(probe, x, dir, &fate)
        };
        let s0 = ends(angles.0, signs.0);
        let s1 = ends(angles.1, signs.1);
        let a: Vec<Point> = s0.points().collect();
        let b: Vec<Point> = s1.points().collect();
        if crate::geom::hausdorff(&a, &b) < disk.conv_tol() && !pos && !neg {
            return Ok(SectorType::Elliptic);
        }
    }
    match (pos, neg) {
        (false, false) => Ok(SectorType::Hyperbolic),
        (true, false) => Ok(SectorType::ParabolicPositive),
        (false, true) => Ok(SectorType::ParabolicNegative),
        (true, true) => Err(Error::UnresolvedSector(format!(
            "both positive and negative base orbits between angles {:.4} and {:.4}",
            angles.0, angles.1
        ))),
    }
}

/// Finite-horizon asymptotic stability of a critical element: for `V_k = B(radius / 2^k)`,
/// `k = 0..4`, some smaller neighbourhood must have all sampled orbits stay in `V_k` and
/// converge. Orbits that neither leave nor converge make the answer inconclusive.
pub fn test_asymptotic_stability(
    flow: &Flow,
    element: &CriticalElement,
    radius: f64,
    direction: Direction,
    horizon: f64,
) -> Result<bool> {
    let flow = match direction {
        Direction::Forward => flow.clone(),
        Direction::Backward => flow.reversed(),
    };
    let probe = flow.clone().with_step(1e-2)?;
    let surface = *flow.surface();
    let (samples, dist): (Box<dyn Fn(f64) -> Vec<Point> + Sync>, Box<dyn Fn(Point) -> f64 + Sync>) = match &element.kind {
        ElementKind::Singularity { point } => {
            let p = *point;
            (
                Box::new(move |u: f64| {
                    (0..24)
                        .flat_map(|k| {
                            let th = TAU * k as f64 / 24.0;
                            [p + Point::polar(u, th), p + Point::polar(0.5 * u, th + TAU / 48.0)]
                        })
                        .collect()
                }),
                Box::new(move |x: Point| surface.dist(p, x)),
            )
        }
        ElementKind::ClosedOrbit { polyline, .. } => {
            let stride = (polyline.len() / 200).max(1);
            let line: Vec<Point> = polyline.iter().step_by(stride).copied().collect();
            let line2 = line.clone();
            (
                Box::new(move |u: f64| {
                    let m = line2.len();
                    (0..12)
                        .flat_map(|k| {
                            let i = k * m / 12;
                            let tangent = line2[(i + 1) % m] - line2[(i + m - 1) % m];
                            let nrm = tangent.normalized().unwrap_or(Point::new(1.0, 0.0)).perp();
                            [u, -u, 0.5 * u, -0.5 * u].map(|s| line2[i] + nrm * s)
                        })
                        .collect()
                }),
                Box::new(move |x: Point| polyline_distance(&surface, &line, x)),
            )
        }
    };
    for k in 0..5 {
        let vk = radius / f64::powi(2.0, k);
        let conv = 0.05 * vk;
        let mut found = false;
        let mut undecided = false;
        for frac in [0.5, 0.25, 0.125, 0.0625] {
            let pts = samples(vk * frac);
            let fates: Vec<Fate> = pts
                .par_iter()
                .map(|&x| fate_with(&probe, x, horizon, vk, conv, &dist, |_| 0.0))
                .collect();
            if fates.iter().all(Fate::converges) {
                found = true;
                break;
            }
            if fates.contains(&Fate::Inconclusive) && !fates.iter().any(|f| matches!(f, Fate::Exit { .. })) {
                undecided = true;
            }
        }
        if !found {
            if undecided {
                return Err(Error::Inconclusive(format!(
                    "orbits near {} neither leave B({vk}) nor converge within {horizon}",
                    element.label()
                )));
            }
            return Ok(false);
        }
    }
    Ok(true)
}

/// Full verdict for one singularity.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SingularityReport {
    pub p: Point,
    pub radius: f64,
    pub verdict: SingularityClass,
    pub sectors: Vec<Sector>,
    pub rays: Vec<BaseOrbit>,
    pub continua: Vec<Continuum>,
    pub inconclusive_rays: Vec<f64>,
}

/// Classifies the singularity at `disk.center`: stability tests first, then the sector
/// decomposition of the boundary scan.
pub fn classify_singularity(flow: &Flow, disk: &DiskNeighborhood) -> Result<SingularityReport> {
    disk.validate()?;
    let speed = flow.velocity(disk.center).norm();
    if speed > 1e-6 {
        return Err(Error::InvalidInput(format!(
            "{:?} is not a singularity (field speed {speed:.3e})",
            disk.center
        )));
    }
    let element = CriticalElement::singularity(disk.center);
    let mut report = SingularityReport {
        p: disk.center,
        radius: disk.radius,
        verdict: SingularityClass::Other(Vec::new()),
        sectors: Vec::new(),
        rays: Vec::new(),
        continua: Vec::new(),
        inconclusive_rays: Vec::new(),
    };
    for (dir, verdict) in [
        (Direction::Forward, SingularityClass::AsymptoticallyStable),
        (Direction::Backward, SingularityClass::BackwardAsymptoticallyStable),
    ] {
        if let Ok(true) = test_asymptotic_stability(flow, &element, disk.radius, dir, disk.horizon) {
            report.verdict = verdict;
            return Ok(report);
        }
    }
    let scan = find_base_orbits(flow, disk)?;
    let sectors = decompose_sectors(flow, disk, &scan)?;
    let verdict = SingularityClass::from_sectors(&sectors);
    let plain = sectors.iter().all(|s| s.kind == SectorType::Hyperbolic);
    if plain && sectors.len() % 2 == 1 {
        return Err(Error::UnresolvedSector(format!(
            "odd number ({}) of hyperbolic sectors",
            sectors.len()
        )));
    }
    report.verdict = verdict;
    report.sectors = sectors;
    report.rays = scan.rays;
    report.continua = scan.continua;
    report.inconclusive_rays = scan.inconclusive_rays;
    Ok(report)
}

/// One sample of a hyperbolic transit map.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransitSample {
    pub entry_offset: f64,
    pub exit_offset: f64,
    pub time: f64,
}

/// Transit through a hyperbolic sector: orbits entering next to the positive bounding orbit
/// (on a transversal through its boundary point, half-length `0.1 * radius`) and leaving
/// through a transversal at the negative bounding orbit.
///
/// Offsets are measured into the sector. Transit time must grow without bound as the entry
/// offset shrinks: the time at `1e-4 * radius` has to be at least twice that at `1e-2 * radius`.
pub fn hyperbolic_transit(flow: &Flow, disk: &DiskNeighborhood, sector: &Sector, offsets: &[f64]) -> Result<Vec<TransitSample>> {
    if sector.kind != SectorType::Hyperbolic {
        return Err(Error::NotTransit(format!("sector is {:?}, not hyperbolic", sector.kind)));
    }
    let (a, b) = sector.bounding;
    let (entry_angle, exit_angle) = match sector.bounding_signs {
        (Sign::Positive, Sign::Negative) => (a, b),
        (Sign::Negative, Sign::Positive) => (b, a),
        _ => return Err(Error::NotTransit("bounding orbits have equal signs".into())),
    };
    let probe = disk.probe_flow(flow);
    let entry_angle = sharpen(&probe, disk, entry_angle, Direction::Forward);
    let exit_angle = sharpen(&probe, disk, exit_angle, Direction::Backward);
    let half = 0.1 * disk.radius;
    let entry = build_transversal(flow, disk.boundary_point(entry_angle), half)?;
    let exit = build_transversal(flow, disk.boundary_point(exit_angle), half)?;
    // Orient offsets into the sector: towards the other bounding angle.
    let into = |t: &crate::flow::Transversal, from: f64, to: f64| -> f64 {
        let probe = t.point_at(1e-3 * disk.radius);
        let th = flow.surface().displacement(disk.center, probe).angle();
        let span = (to - from).rem_euclid(TAU);
        let off = (th - from).rem_euclid(TAU);
        if span < TAU / 2.0 {
            if off < span { 1.0 } else { -1.0 }
        } else if off > span {
            1.0
        } else {
            -1.0
        }
    };
    let s_in = into(&entry, entry_angle, exit_angle);
    let s_out = into(&exit, exit_angle, entry_angle);
    let mut out = Vec::with_capacity(offsets.len());
    for &off in offsets {
        let x = entry.point_at(s_in * off);
        let hit = exit.first_crossing(flow, x, disk.horizon, 0.0, 1.0);
        let Some((time, coord)) = hit else {
            return Err(Error::NotTransit(format!(
                "orbit from entry offset {off:.3e} does not reach the exit transversal within {}",
                disk.horizon
            )));
        };
        // The orbit must stay in the disk until it crosses.
        let mut left = false;
        let c = disk.center;
        let surface = *flow.surface();
        flow.walk(x, time * 0.999, |_, p| {
            if surface.dist(c, surface.wrap(p)) > disk.radius * 1.05 {
                left = true;
                return false;
            }
            true
        });
        if left {
            return Err(Error::NotTransit(format!(
                "orbit from entry offset {off:.3e} leaves the disk before the exit transversal"
            )));
        }
        out.push(TransitSample {
            entry_offset: off,
            exit_offset: s_out * coord,
            time,
        });
    }
    Ok(out)
}

/// Relocates a separatrix ray far below the scan resolution, so transit offsets down to
/// `1e-4 * radius` start on the intended side. Rays without a nearby exit jump are kept.
fn sharpen(probe: &Flow, disk: &DiskNeighborhood, angle: f64, dir: Direction) -> f64 {
    let w = 4e-3;
    let (mut lo, mut hi) = (angle - w, angle + w);
    let exit_angle = |th: f64| match disk_fate(probe, disk, disk.boundary_point(th), dir) {
        Fate::Exit { angle, .. } => Some(angle),
        _ => None,
    };
    let (Some(mut a), Some(b)) = (exit_angle(lo), exit_angle(hi)) else {
        return angle;
    };
    if ang_dist(a, b) <= JUMP {
        return angle;
    }
    while hi - lo > 1e-12 {
        let mid = 0.5 * (lo + hi);
        match exit_angle(mid) {
            Some(m) if ang_dist(a, m) > JUMP => hi = mid,
            Some(m) if ang_dist(m, b) > JUMP => {
                lo = mid;
                a = m;
            }
            _ => return mid.rem_euclid(TAU),
        }
    }
    (0.5 * (lo + hi)).rem_euclid(TAU)
}

/// Angle of `ray` re-bisected well below the scan resolution.
pub fn sharpen_ray(flow: &Flow, disk: &DiskNeighborhood, ray: &BaseOrbit) -> f64 {
    let dir = match ray.sign {
        Sign::Positive => Direction::Forward,
        Sign::Negative => Direction::Backward,
    };
    sharpen(&disk.probe_flow(flow), disk, ray.angle, dir)
}

/// Checks the divergence requirement on transit samples at offsets `1e-2 r` and `1e-4 r`.
pub fn transit_diverges(flow: &Flow, disk: &DiskNeighborhood, sector: &Sector) -> Result<bool> {
    let r = disk.radius;
    let s = hyperbolic_transit(flow, disk, sector, &[1e-2 * r, 1e-4 * r])?;
    Ok(s[1].time >= 2.0 * s[0].time)
}
