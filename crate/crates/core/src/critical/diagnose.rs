use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::element::{CriticalElement, ElementKind, Stability};
use crate::error::{Error, Result};
use crate::flow::{Flow, Term, TermTable};
use crate::geom::Point;
use crate::pseudo::{random_pseudotrajectory, Curve, Pseudotrajectory, ShadowingConfig};
use crate::reparam::{verify_shadowing, Mode, SearchConfig};
use crate::sectors::{Direction, SingularityClass};

/// A ball around a critical element (a tube for closed orbits).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Neighborhood {
    pub element: CriticalElement,
    pub radius: f64,
}

impl Neighborhood {
    pub fn new(element: CriticalElement, radius: f64) -> Self {
        Neighborhood { element, radius }
    }

    pub fn contains(&self, flow: &Flow, p: Point) -> bool {
        self.element.distance_to(flow.surface(), p) < self.radius
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BirkhoffReport {
    /// Longest excursion outside `U`, plus a 10% margin.
    pub r_hat: f64,
    pub longest: f64,
    pub samples: usize,
    /// Orbits that left a plane patch; their excursions end at the exit.
    pub escaped: usize,
}

/// Estimates a bound on the time any sampled orbit spends outside the union `u`.
///
/// An excursion still open at the horizon means `u` does not cover the nonwandering set (or
/// the horizon is too short) and is reported as an error.
pub fn birkhoff_constant(flow: &Flow, u: &[Neighborhood], samples: &[Point], horizon: f64) -> Result<BirkhoffReport> {
    let inside = |p: Point| u.iter().any(|n| n.contains(flow, p));
    let results: Vec<(f64, bool, bool)> = samples
        .par_iter()
        .map(|&x| {
            let mut longest: f64 = 0.0;
            let mut open_since: Option<f64> = (!inside(x)).then_some(0.0);
            let end = flow.walk(x, horizon, |t, p| {
                let p = flow.surface().wrap(p);
                match (open_since, inside(p)) {
                    (Some(s), true) => {
                        longest = longest.max(t - s);
                        open_since = None;
                    }
                    (None, false) => open_since = Some(t),
                    _ => {}
                }
                true
            });
            let escaped = end.escaped.is_some();
            let mut still_open = false;
            if let Some(s) = open_since {
                if escaped {
                    longest = longest.max(end.t - s);
                } else {
                    still_open = true;
                }
            }
            (longest, escaped, still_open)
        })
        .collect();
    if let Some(i) = results.iter().position(|r| r.2) {
        return Err(Error::Inconclusive(format!(
            "R unbounded at this horizon: orbit from ({:.3}, {:.3}) still outside U at t = {horizon}",
            samples[i].x, samples[i].y
        )));
    }
    let longest = results.iter().map(|r| r.0).fold(0.0, f64::max);
    Ok(BirkhoffReport {
        r_hat: 1.1 * longest,
        longest,
        samples: samples.len(),
        escaped: results.iter().filter(|r| r.1).count(),
    })
}

/// A scalar function given as a term list.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalarField {
    pub terms: Vec<Term>,
}

impl ScalarField {
    pub fn new(terms: Vec<Term>) -> Self {
        ScalarField { terms }
    }

    pub fn eval(&self, p: Point) -> f64 {
        TermTable::eval_scalar(&self.terms, p)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConleyReport {
    pub increasing: bool,
    pub separates: bool,
    pub pass: bool,
    pub orbits: usize,
    /// Smallest finite-difference increment seen.
    pub min_increment: f64,
    /// First decrease found: start point and time.
    pub witness: Option<(Point, f64)>,
    /// Values on each element (midrange over closed-orbit samples).
    pub element_values: Vec<f64>,
}

/// Checks that `l0` strictly increases along sampled orbits away from the elements and that
/// it separates the elements (constant on each, distinct between them).
pub fn conley_check(flow: &Flow, l0: &ScalarField, elements: &[CriticalElement]) -> ConleyReport {
    let surface = *flow.surface();
    let away = 0.05;
    let (lo, hi) = surface.bounds();
    let n = 12;
    let starts: Vec<Point> = (0..n)
        .flat_map(|i| (0..n).map(move |j| (i, j)))
        .map(|(i, j)| {
            Point::new(
                lo.x + (hi.x - lo.x) * (i as f64 + 0.5) / n as f64,
                lo.y + (hi.y - lo.y) * (j as f64 + 0.5) / n as f64,
            )
        })
        .filter(|x| elements.iter().all(|e| e.distance_to(&surface, *x) > away))
        .collect();
    let per_orbit: Vec<(f64, Option<(Point, f64)>)> = starts
        .par_iter()
        .map(|&x| {
            let mut prev = l0.eval(x);
            let mut min_inc = f64::INFINITY;
            let mut witness = None;
            let mut k = 0usize;
            flow.walk_with_step(x, 2.0, 1e-2, |t, p| {
                k += 1;
                let p = surface.wrap(p);
                let v = l0.eval(p);
                let inc = v - prev;
                prev = v;
                min_inc = min_inc.min(inc);
                if inc <= 0.0 {
                    witness = Some((x, t));
                    return false;
                }
                // Stop near elements where increments underflow.
                elements.iter().all(|e| e.distance_to(&surface, p) > 0.2 * away)
            });
            (min_inc, witness)
        })
        .collect();
    let increasing = per_orbit.iter().all(|o| o.1.is_none());
    let witness = per_orbit.iter().find_map(|o| o.1);
    let min_increment = per_orbit.iter().map(|o| o.0).fold(f64::INFINITY, f64::min);

    let mut element_values = Vec::new();
    let mut separates = true;
    for e in elements {
        let vals: Vec<f64> = e.points().iter().map(|p| l0.eval(*p)).collect();
        let lo = vals.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if hi - lo > 1e-6 {
            separates = false;
        }
        element_values.push(0.5 * (lo + hi));
    }
    for i in 0..element_values.len() {
        for j in i + 1..element_values.len() {
            if (element_values[i] - element_values[j]).abs() < 1e-6 {
                separates = false;
            }
        }
    }
    ConleyReport {
        increasing,
        separates,
        pass: increasing && separates,
        orbits: starts.len(),
        min_increment,
        witness,
        element_values,
    }
}

/// One-sided stability of an element, if it has one.
pub fn trapping_direction(e: &CriticalElement) -> Option<Direction> {
    match &e.stability {
        Stability::Stable | Stability::SectorType(SingularityClass::AsymptoticallyStable) => Some(Direction::Forward),
        Stability::Unstable | Stability::SectorType(SingularityClass::BackwardAsymptoticallyStable) => {
            Some(Direction::Backward)
        }
        _ => None,
    }
}

/// Empirical trapping neighbourhood of a one-sided stable element.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NeighborhoodCertificate {
    pub element: CriticalElement,
    pub direction: Direction,
    /// Radius of `U`.
    pub u: f64,
    /// Jump bound.
    pub d: f64,
    /// Shadow-start radius.
    pub r: f64,
    pub eps0: f64,
    pub trials: usize,
    /// "identity" for singularities, "rep" for closed orbits.
    pub warp: String,
}

fn random_point_near<R: Rng>(e: &CriticalElement, radius: f64, rng: &mut R) -> Point {
    match &e.kind {
        ElementKind::Singularity { point } => {
            let r = radius * rng.gen::<f64>().sqrt();
            *point + Point::polar(r, std::f64::consts::TAU * rng.gen::<f64>())
        }
        ElementKind::ClosedOrbit { polyline, .. } => {
            let m = polyline.len();
            let i = rng.gen_range(0..m);
            let tangent = polyline[(i + 1) % m] - polyline[(i + m - 1) % m];
            let normal = tangent.normalized().unwrap_or(Point::new(1.0, 0.0)).perp();
            polyline[i] + normal * (radius * rng.gen_range(-1.0..1.0))
        }
    }
}

const CERT_HORIZON: f64 = 20.0;

/// Runs the trapping test for one `(u, d)`; `Ok(false)` when some trial escapes.
pub fn check_trapping(flow: &Flow, e: &CriticalElement, config: &ShadowingConfig, u: f64, d: f64, trials: usize, seed: u64) -> Result<bool> {
    let dir = trapping_direction(e)
        .ok_or_else(|| Error::Refused(format!("{} is not one-sided stable", e.label())))?;
    let work = match dir {
        Direction::Forward => flow.clone(),
        Direction::Backward => flow.reversed(),
    };
    let blocks = (CERT_HORIZON / config.t0).ceil() as usize;
    let limit = 0.5 * config.eps0;
    let surface = *flow.surface();
    let results: Vec<bool> = (0..trials)
        .into_par_iter()
        .map(|k| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(k as u64));
            let start = random_point_near(e, u, &mut rng);
            let Ok(xi) = random_pseudotrajectory(&work, start, config.t0, blocks, d, &mut rng) else {
                return false;
            };
            let (a, b) = xi.window();
            let times: Vec<f64> = (0..=((b - a) / 0.05) as usize).map(|i| a + 0.05 * i as f64).collect();
            xi.sample(&work, &times)
                .iter()
                .all(|p| e.distance_to(&surface, *p) < limit)
        })
        .collect();
    Ok(results.into_iter().all(|ok| ok))
}

/// Property (b): orbits from points within `r` of `xi(start)` shadow `xi` within `eps0`.
fn check_shadow_start(flow: &Flow, e: &CriticalElement, config: &ShadowingConfig, u: f64, d: f64, r: f64, seed: u64) -> Result<bool> {
    let dir = trapping_direction(e).unwrap_or(Direction::Forward);
    let work = match dir {
        Direction::Forward => flow.clone(),
        Direction::Backward => flow.reversed(),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let start = random_point_near(e, u, &mut rng);
    let blocks = (CERT_HORIZON / config.t0).ceil() as usize;
    let xi = random_pseudotrajectory(&work, start, config.t0, blocks, d, &mut rng)?;
    let (a, b) = xi.window();
    let x0 = xi.at(&work, a);
    let probes: Vec<Point> = (0..4)
        .map(|k| x0 + Point::polar(r, std::f64::consts::FRAC_PI_2 * k as f64))
        .collect();
    match &e.kind {
        ElementKind::Singularity { .. } => {
            let times: Vec<f64> = (0..=((b - a) / 0.05) as usize).map(|i| a + 0.05 * i as f64).collect();
            let curve = xi.sample(&work, &times);
            Ok(probes.iter().all(|&x| {
                let orbit = Pseudotrajectory::exact_orbit(x, a, b)
                    .map(|o| o.sample(&work, &times))
                    .unwrap_or_default();
                orbit.len() == curve.len() && orbit.iter().zip(&curve).all(|(p, q)| work.dist(*p, *q) < config.eps0)
            }))
        }
        ElementKind::ClosedOrbit { .. } => {
            for x in probes {
                let search = SearchConfig {
                    radius: Some(0.0),
                    center: Some(x),
                    grid: 1,
                    dt: 0.1,
                    ..Default::default()
                };
                let res = verify_shadowing(&work, &xi, Mode::Standard { eps: config.eps0 }, config.eps0, &search)?;
                if !res.shadowed {
                    return Ok(false);
                }
            }
            Ok(true)
        }
    }
}

/// Searches `(u, d)` by halving from `(eps0 / 4, eps0 / 8)` until `trials` random
/// pseudotrajectories starting in `U` stay in `B(eps0 / 2, element)` (forward for stable,
/// backward for unstable elements), then checks the shadow-start property.
pub fn certify_neighborhood(flow: &Flow, e: &CriticalElement, config: &ShadowingConfig, trials: usize, seed: u64) -> Result<NeighborhoodCertificate> {
    let Some(direction) = trapping_direction(e) else {
        return Err(Error::Refused(format!(
            "{} is {:?}; no one-sided trapping neighbourhood exists",
            e.label(),
            e.stability
        )));
    };
    let mut u = 0.25 * config.eps0;
    let mut d = 0.125 * config.eps0;
    for _ in 0..8 {
        if check_trapping(flow, e, config, u, d, trials, seed)? {
            let r = 0.5 * u;
            if check_shadow_start(flow, e, config, u, d, r, seed)? {
                return Ok(NeighborhoodCertificate {
                    element: e.clone(),
                    direction,
                    u,
                    d,
                    r,
                    eps0: config.eps0,
                    trials,
                    warp: if e.is_singularity() { "identity" } else { "rep" }.into(),
                });
            }
        }
        u *= 0.5;
        d *= 0.5;
    }
    Err(Error::Refused(format!(
        "no trapping neighbourhood of {} above resolution",
        e.label()
    )))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Case {
    C1,
    C2,
    C3,
    C4,
    C5,
    C6,
    C7,
}

impl Case {
    /// The case of the time-reversed pseudotrajectory on the time-reversed flow.
    pub fn reversed(self) -> Case {
        match self {
            Case::C1 => Case::C2,
            Case::C2 => Case::C1,
            Case::C5 => Case::C6,
            Case::C6 => Case::C5,
            c => c,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Stable,
    Unstable,
    /// A singularity with four or two hyperbolic sectors.
    Saddle,
}

/// Neighbourhood `U` used by the case table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CaseNeighborhood {
    pub element: CriticalElement,
    pub role: Role,
    pub radius: f64,
}

impl CaseNeighborhood {
    /// Role from the element's stability; `None` for elements outside the case table.
    pub fn new(element: CriticalElement, radius: f64) -> Option<Self> {
        let role = match &element.stability {
            Stability::Stable | Stability::SectorType(SingularityClass::AsymptoticallyStable) => Role::Stable,
            Stability::Unstable | Stability::SectorType(SingularityClass::BackwardAsymptoticallyStable) => Role::Unstable,
            Stability::SectorType(SingularityClass::FourHyperbolic | SingularityClass::TwoHyperbolic) => Role::Saddle,
            _ => return None,
        };
        Some(CaseNeighborhood { element, role, radius })
    }

    pub fn from_certificate(c: &NeighborhoodCertificate) -> Self {
        let role = match c.direction {
            Direction::Forward => Role::Stable,
            Direction::Backward => Role::Unstable,
        };
        CaseNeighborhood {
            element: c.element.clone(),
            role,
            radius: c.u,
        }
    }

    pub fn reversed(&self) -> Self {
        let role = match self.role {
            Role::Stable => Role::Unstable,
            Role::Unstable => Role::Stable,
            Role::Saddle => Role::Saddle,
        };
        CaseNeighborhood {
            element: self.element.clone(),
            role,
            radius: self.radius,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Diagnosis {
    pub case: Case,
    /// Indices of neighbourhoods the pseudotrajectory enters.
    pub s_xi: Vec<usize>,
    /// Saddle neighbourhood that decided a C4-C7 case.
    pub saddle: Option<usize>,
    pub inside_at_start: Option<bool>,
    pub inside_at_end: Option<bool>,
}

/// Sorts a pseudotrajectory into the case table. Unbounded entry-time sets are read off
/// the window ends: `xi` inside `U_p` at the window start stands for an infimum of -inf.
pub fn diagnose_case(flow: &Flow, xi: &Pseudotrajectory, neighborhoods: &[CaseNeighborhood]) -> Result<Diagnosis> {
    let (a, b) = xi.window();
    let n = ((b - a) / 0.05).ceil().max(1.0) as usize;
    let times: Vec<f64> = (0..=n).map(|i| a + (b - a) * i as f64 / n as f64).collect();
    let pts = xi.sample_sorted(flow, &times);
    let surface = *flow.surface();
    let inside = |k: usize, p: Point| neighborhoods[k].element.distance_to(&surface, p) < neighborhoods[k].radius;
    let s_xi: Vec<usize> = (0..neighborhoods.len())
        .filter(|&k| pts.iter().any(|p| inside(k, *p)))
        .collect();
    if s_xi.is_empty() {
        return Err(Error::Inconclusive(format!(
            "S(xi) is empty on [{a}, {b}]: the pseudotrajectory avoids every neighbourhood (Birkhoff bound violated at this horizon)"
        )));
    }
    if let Some(&k) = s_xi.iter().find(|&&k| neighborhoods[k].role == Role::Saddle) {
        let start = inside(k, pts[0]);
        let end = inside(k, pts[pts.len() - 1]);
        let case = match (start, end) {
            (true, true) => Case::C4,
            (false, true) => Case::C5,
            (true, false) => Case::C6,
            (false, false) => Case::C7,
        };
        return Ok(Diagnosis {
            case,
            s_xi,
            saddle: Some(k),
            inside_at_start: Some(start),
            inside_at_end: Some(end),
        });
    }
    let stable = s_xi.iter().filter(|&&k| neighborhoods[k].role == Role::Stable).count();
    let unstable = s_xi.iter().filter(|&&k| neighborhoods[k].role == Role::Unstable).count();
    let case = match (stable, unstable) {
        (1, 0) => Case::C1,
        (0, 1) => Case::C2,
        (1, 1) => Case::C3,
        _ => {
            return Err(Error::Inconclusive(format!(
                "S(xi) holds {stable} stable and {unstable} unstable elements; outside the case table"
            )))
        }
    };
    Ok(Diagnosis {
        case,
        s_xi,
        saddle: None,
        inside_at_start: None,
        inside_at_end: None,
    })
}
