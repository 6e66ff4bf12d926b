//! Pseudotrajectories built from glued orbit arcs, their validation, and the
//! reduction constants (`eps0`, `T0`, trap sets) derived from the critical elements.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::critical::{CriticalElement, ElementKind};
use crate::error::{Error, Result};
use crate::flow::{Flow, VectorField};
use crate::geom::Point;

/// Cap on `eps0`, keeping it below 4/5.
pub const EPS0_CAP: f64 = 0.79;

/// Behaviour of a pseudotrajectory outside its window.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExtensionRule {
    /// The first and last arcs continue as true orbits.
    #[default]
    ClampEnds,
    /// The window repeats with period `end - start`.
    PeriodicAnchors,
}

/// One orbit arc: `xi(t) = phi(t - time, point)` from `time` until the next arc starts.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Anchor {
    pub index: i64,
    pub time: f64,
    pub point: Point,
}

/// A right-continuous curve made of orbit arcs glued at anchor times.
///
/// For the uniform class `Pt_T0(d)` anchor `n` sits at time `n * T0`; glued witnesses use
/// arbitrary increasing anchor times, with `t0` kept as the nominal block length.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PseudoRepr", into = "PseudoRepr")]
pub struct Pseudotrajectory {
    t0: f64,
    anchors: Vec<Anchor>,
    end: f64,
    extension_rule: ExtensionRule,
}

#[derive(Serialize, Deserialize)]
struct PseudoRepr {
    #[serde(rename = "T0")]
    t0: f64,
    anchors: Vec<(i64, f64, f64)>,
    #[serde(default)]
    extension_rule: ExtensionRule,
    /// Anchor times; omitted when anchor `n` sits at `n * T0`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    times: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    end: Option<f64>,
}

impl TryFrom<PseudoRepr> for Pseudotrajectory {
    type Error = Error;

    fn try_from(r: PseudoRepr) -> Result<Self> {
        let n = r.anchors.len();
        let times = match r.times {
            Some(ts) if ts.len() != n => {
                return Err(Error::InvalidInput(format!(
                    "{} anchor times for {} anchors",
                    ts.len(),
                    n
                )))
            }
            Some(ts) => ts,
            None => r.anchors.iter().map(|a| a.0 as f64 * r.t0).collect(),
        };
        let end = match (r.end, r.anchors.last()) {
            (Some(e), _) => e,
            (None, Some(last)) if r.t0 > 0.0 => (last.0 + 1) as f64 * r.t0,
            _ => f64::NAN,
        };
        let anchors = r
            .anchors
            .iter()
            .zip(times)
            .map(|(&(index, x, y), time)| Anchor {
                index,
                time,
                point: Point::new(x, y),
            })
            .collect();
        Pseudotrajectory::new(r.t0, anchors, end, r.extension_rule)
    }
}

impl From<Pseudotrajectory> for PseudoRepr {
    fn from(p: Pseudotrajectory) -> Self {
        let uniform = p.is_uniform();
        PseudoRepr {
            t0: p.t0,
            anchors: p.anchors.iter().map(|a| (a.index, a.point.x, a.point.y)).collect(),
            extension_rule: p.extension_rule,
            times: (!uniform).then(|| p.anchors.iter().map(|a| a.time).collect()),
            end: (!uniform).then_some(p.end),
        }
    }
}

/// A pseudotrajectory file: the curve plus the field it is a pseudotrajectory of.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PseudoFile {
    #[serde(flatten)]
    pub xi: Pseudotrajectory,
    pub field: VectorField,
}

impl Pseudotrajectory {
    pub fn new(t0: f64, anchors: Vec<Anchor>, end: f64, extension_rule: ExtensionRule) -> Result<Self> {
        if !(t0 > 0.0 && t0.is_finite()) {
            return Err(Error::InvalidInput(format!("T0 must be positive, got {t0}")));
        }
        if anchors.is_empty() {
            return Err(Error::InvalidInput("anchor window is empty".into()));
        }
        for w in anchors.windows(2) {
            if !(w[1].time > w[0].time) || w[1].index <= w[0].index {
                return Err(Error::InvalidInput(format!(
                    "anchors must be strictly increasing (index {} at t={}, index {} at t={})",
                    w[0].index, w[0].time, w[1].index, w[1].time
                )));
            }
        }
        let last = anchors[anchors.len() - 1];
        if !(end > last.time) || !end.is_finite() {
            return Err(Error::InvalidInput(format!(
                "window end {end} must follow the last anchor time {}",
                last.time
            )));
        }
        if anchors.iter().any(|a| !a.point.is_finite() || !a.time.is_finite()) {
            return Err(Error::InvalidInput("non-finite anchor".into()));
        }
        Ok(Pseudotrajectory {
            t0,
            anchors,
            end,
            extension_rule,
        })
    }

    /// Uniform anchors: `points[k]` is `xi((first_index + k) * T0)`.
    pub fn from_anchors(
        t0: f64,
        first_index: i64,
        points: &[Point],
        extension_rule: ExtensionRule,
    ) -> Result<Self> {
        let anchors: Vec<Anchor> = points
            .iter()
            .enumerate()
            .map(|(k, &point)| {
                let index = first_index + k as i64;
                Anchor {
                    index,
                    time: index as f64 * t0,
                    point,
                }
            })
            .collect();
        let end = (first_index + points.len() as i64) as f64 * t0;
        Self::new(t0, anchors, end, extension_rule)
    }

    /// Arcs `(start time, point)` with explicit start times and window end.
    pub fn from_arcs(t0: f64, arcs: &[(f64, Point)], end: f64, extension_rule: ExtensionRule) -> Result<Self> {
        let anchors = arcs
            .iter()
            .enumerate()
            .map(|(k, &(time, point))| Anchor {
                index: k as i64,
                time,
                point,
            })
            .collect();
        Self::new(t0, anchors, end, extension_rule)
    }

    /// The exact orbit through `x` at time `start`, as a single-arc pseudotrajectory on `[start, end]`.
    pub fn exact_orbit(x: Point, start: f64, end: f64) -> Result<Self> {
        Self::from_arcs((end - start).min(1.0).max(f64::MIN_POSITIVE), &[(start, x)], end, ExtensionRule::ClampEnds)
    }

    pub fn t0(&self) -> f64 {
        self.t0
    }

    pub fn anchors(&self) -> &[Anchor] {
        &self.anchors
    }

    pub fn extension_rule(&self) -> ExtensionRule {
        self.extension_rule
    }

    pub fn start(&self) -> f64 {
        self.anchors[0].time
    }

    pub fn end(&self) -> f64 {
        self.end
    }

    pub fn window(&self) -> (f64, f64) {
        (self.start(), self.end)
    }

    /// Anchor `n` at time `n * T0` for every arc, with the window ending one block after the last.
    pub fn is_uniform(&self) -> bool {
        self.anchors.iter().all(|a| a.time == a.index as f64 * self.t0)
            && self.end == (self.anchors[self.anchors.len() - 1].index + 1) as f64 * self.t0
            && self.anchors.windows(2).all(|w| w[1].index == w[0].index + 1)
    }

    /// Length of arc `k` (up to the next anchor or the window end).
    pub fn arc_len(&self, k: usize) -> f64 {
        let next = self.anchors.get(k + 1).map_or(self.end, |a| a.time);
        next - self.anchors[k].time
    }

    /// The arc containing `t` and the local time on it.
    fn locate(&self, t: f64) -> (usize, f64) {
        let (start, end) = self.window();
        let t = match self.extension_rule {
            ExtensionRule::PeriodicAnchors if t < start || t >= end => {
                start + (t - start).rem_euclid(end - start)
            }
            _ => t,
        };
        let k = self.anchors.partition_point(|a| a.time <= t).max(1) - 1;
        (k, t - self.anchors[k].time)
    }

    /// `xi(t)`, with plane patches acting as absorbing boundaries.
    pub fn at(&self, flow: &Flow, t: f64) -> Point {
        let (k, tau) = self.locate(t);
        flow.flow_map_clamped(tau, self.anchors[k].point)
    }

    /// `xi` at non-decreasing times, integrating incrementally along each arc.
    pub fn sample_sorted(&self, flow: &Flow, times: &[f64]) -> Vec<Point> {
        let surface = flow.surface();
        let mut out = Vec::with_capacity(times.len());
        let mut cur: Option<(usize, f64, Point)> = None;
        for &t in times {
            let (k, tau) = self.locate(t);
            let p = match cur {
                Some((ck, ctau, cp)) if ck == k && tau >= ctau => {
                    flow.walk(cp, tau - ctau, |_, _| true).point
                }
                _ => flow.walk(self.anchors[k].point, tau, |_, _| true).point,
            };
            cur = Some((k, tau, p));
            out.push(surface.wrap(p));
        }
        out
    }

    /// Shift in time: the result at `t + dt` equals `self` at `t`.
    pub fn shifted(&self, dt: f64) -> Self {
        let mut out = self.clone();
        for a in &mut out.anchors {
            a.time += dt;
        }
        out.end += dt;
        out
    }

    /// `t -> xi(-t)`, a pseudotrajectory of the reversed flow with the same jumps.
    ///
    /// Arc `k` on `[s_k, s_{k+1})` becomes an arc starting at `-s_{k+1}` from
    /// `phi(s_{k+1} - s_k, a_k)`.
    pub fn time_reversed(&self, flow: &Flow) -> Self {
        let anchors = (0..self.anchors.len())
            .rev()
            .map(|k| {
                let a = self.anchors[k];
                let len = self.arc_len(k);
                Anchor {
                    index: -a.index - 1,
                    time: -(a.time + len),
                    point: flow.flow_map_clamped(len, a.point),
                }
            })
            .collect();
        Pseudotrajectory {
            t0: self.t0,
            anchors,
            end: -self.start(),
            extension_rule: self.extension_rule,
        }
    }
}

/// Anything that can be sampled at sorted times: pseudotrajectories and sampled curves.
pub trait Curve: Sync {
    /// Values at non-decreasing `times`.
    fn sample(&self, flow: &Flow, times: &[f64]) -> Vec<Point>;
}

impl Curve for Pseudotrajectory {
    fn sample(&self, flow: &Flow, times: &[f64]) -> Vec<Point> {
        self.sample_sorted(flow, times)
    }
}

/// A curve given by samples, linearly interpolated and held constant outside its range.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampledCurve {
    pub samples: Vec<(f64, Point)>,
}

impl SampledCurve {
    pub fn constant(p: Point) -> Self {
        SampledCurve {
            samples: vec![(0.0, p)],
        }
    }
}

impl Curve for SampledCurve {
    fn sample(&self, flow: &Flow, times: &[f64]) -> Vec<Point> {
        let surface = flow.surface();
        let s = &self.samples;
        times
            .iter()
            .map(|&t| {
                if s.len() == 1 || t <= s[0].0 {
                    return s[0].1;
                }
                if t >= s[s.len() - 1].0 {
                    return s[s.len() - 1].1;
                }
                let i = s.partition_point(|(ti, _)| *ti <= t) - 1;
                let (t0, p0) = s[i];
                let (t1, p1) = s[i + 1];
                surface.wrap(p0 + surface.displacement(p0, p1) * ((t - t0) / (t1 - t0)))
            })
            .collect()
    }
}

/// Outcome of [`validate_pseudotrajectory`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Validation {
    pub valid: bool,
    pub max_violation: f64,
    /// `(t, s)` where the largest violation occurs.
    pub witness: (f64, f64),
}

const VALIDATE_DT: f64 = 0.1;
const VALIDATE_DS: f64 = 0.05;

/// Checks `dist(xi(t + s), phi(s, xi(t))) < d` for `t` on a 0.1 grid of `horizon`
/// and `s` in `[0, 1]` on a 0.05 grid.
pub fn validate_pseudotrajectory(flow: &Flow, xi: &dyn Curve, d: f64, horizon: (f64, f64)) -> Validation {
    let (a, b) = horizon;
    let nt = ((b - a) / VALIDATE_DT + 1e-9).floor().max(0.0) as usize;
    let ns = (1.0 / VALIDATE_DS).round() as usize;
    // t_k + s_m = a + (2k + m) * 0.05
    let grid: Vec<f64> = (0..=2 * nt + ns).map(|j| a + VALIDATE_DS * j as f64).collect();
    let values = xi.sample(flow, &grid);
    let surface = flow.surface();
    let mut worst = Validation {
        valid: true,
        max_violation: 0.0,
        witness: (a, 0.0),
    };
    for k in 0..=nt {
        let x = values[2 * k];
        let mut p = x;
        for m in 1..=ns {
            p = flow.walk(p, VALIDATE_DS, |_, _| true).point;
            let dist = surface.dist(surface.wrap(p), values[2 * k + m]);
            if dist > worst.max_violation {
                worst.max_violation = dist;
                worst.witness = (a + VALIDATE_DT * k as f64, VALIDATE_DS * m as f64);
            }
        }
    }
    worst.valid = worst.max_violation < d;
    worst
}

/// Largest anchor jump `dist(phi(len_k, a_k), a_{k+1})`, including the wrap-around
/// jump for periodic pseudotrajectories.
pub fn jump_size(flow: &Flow, xi: &Pseudotrajectory) -> f64 {
    let a = xi.anchors();
    let n = a.len();
    let mut worst: f64 = 0.0;
    for k in 0..n {
        let next = if k + 1 < n {
            a[k + 1].point
        } else if xi.extension_rule() == ExtensionRule::PeriodicAnchors {
            a[0].point
        } else {
            continue;
        };
        let reached = flow.flow_map_clamped(xi.arc_len(k), a[k].point);
        worst = worst.max(flow.dist(reached, next));
    }
    worst
}

/// One orbit piece for [`make_glued`]: `xi(t) = phi(t - base_time, point)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GlueArc {
    pub point: Point,
    pub base_time: f64,
}

/// Glues orbit arcs: arc `k` is used on `[switch_times[k-1], switch_times[k])`, clipped to `window`.
/// Returns the pseudotrajectory and its jump size. `t0` is the nominal block length.
pub fn make_glued(
    flow: &Flow,
    arcs: &[GlueArc],
    switch_times: &[f64],
    window: (f64, f64),
    t0: f64,
    extension_rule: ExtensionRule,
) -> Result<(Pseudotrajectory, f64)> {
    if arcs.is_empty() || switch_times.len() + 1 != arcs.len() {
        return Err(Error::InvalidInput(format!(
            "{} arcs need {} switch times, got {}",
            arcs.len(),
            arcs.len().saturating_sub(1),
            switch_times.len()
        )));
    }
    let (start, end) = window;
    if !(end > start) {
        return Err(Error::InvalidInput(format!("empty window [{start}, {end}]")));
    }
    if switch_times.windows(2).any(|w| !(w[1] > w[0]))
        || switch_times.iter().any(|&s| !(s > start && s < end))
    {
        return Err(Error::InvalidInput(
            "switch times must be increasing and inside the window".into(),
        ));
    }
    let mut pieces = Vec::with_capacity(arcs.len());
    for (k, arc) in arcs.iter().enumerate() {
        let s = if k == 0 { start } else { switch_times[k - 1] };
        pieces.push((s, flow.flow_map_clamped(s - arc.base_time, arc.point)));
    }
    let xi = Pseudotrajectory::from_arcs(t0, &pieces, end, extension_rule)?;
    let jump = jump_size(flow, &xi);
    Ok((xi, jump))
}

/// Random `Pt_T0(d)`: `a_{n+1} = phi(T0, a_n)` plus a kick uniform in the open disk of radius `d`.
pub fn random_pseudotrajectory<R: Rng>(
    flow: &Flow,
    start: Point,
    t0: f64,
    blocks: usize,
    d: f64,
    rng: &mut R,
) -> Result<Pseudotrajectory> {
    if blocks == 0 {
        return Err(Error::InvalidInput("need at least one block".into()));
    }
    let surface = flow.surface();
    let mut points = Vec::with_capacity(blocks);
    let mut a = surface.wrap(start);
    points.push(a);
    for _ in 1..blocks {
        let r = d * rng.gen::<f64>().sqrt();
        let theta = std::f64::consts::TAU * rng.gen::<f64>();
        let next = flow.flow_map_clamped(t0, a) + Point::polar(r, theta);
        a = surface.wrap(surface.clamp(next));
        points.push(a);
    }
    Pseudotrajectory::from_anchors(t0, 0, &points, ExtensionRule::ClampEnds)
}

/// Reduction constants: `eps0`, `T0`, and the singularity balls that define `K` and `K~`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShadowingConfig {
    pub eps0: f64,
    #[serde(rename = "T0")]
    pub t0: f64,
    /// Radius of the balls around singularities removed to form `K` (`eps0 / 2`).
    pub trap_set_margin: f64,
    pub singularities: Vec<Point>,
    pub metric: String,
}

impl ShadowingConfig {
    /// `x` in `K`: outside every `trap_set_margin` ball around a singularity.
    pub fn in_k(&self, flow: &Flow, x: Point) -> bool {
        self.singularities
            .iter()
            .all(|s| flow.dist(*s, x) >= self.trap_set_margin)
    }

    /// `x` in `K~`: `phi(s, x)` stays in `K` for `|s| <= 2 T0`.
    pub fn in_k_tilde(&self, flow: &Flow, x: Point) -> bool {
        if !self.in_k(flow, x) {
            return false;
        }
        let span = 2.0 * self.t0;
        [span, -span].iter().all(|&dur| {
            let end = flow.walk(x, dur, |_, p| self.in_k(flow, p));
            !end.stopped
        })
    }

    /// Uniform random point of the domain outside the singularity balls.
    pub fn random_start<R: Rng>(&self, flow: &Flow, rng: &mut R) -> Point {
        let (lo, hi) = flow.surface().bounds();
        loop {
            let p = Point::new(rng.gen_range(lo.x..hi.x), rng.gen_range(lo.y..hi.y));
            if self.in_k(flow, p) {
                return p;
            }
        }
    }
}

/// Derives `eps0` and `T0` from the detected critical elements.
pub fn derive_config(flow: &Flow, elements: &[CriticalElement]) -> Result<ShadowingConfig> {
    if elements.is_empty() {
        return Err(Error::InvalidInput("no critical elements".into()));
    }
    let surface = flow.surface();
    let mut min_dist = f64::INFINITY;
    for (i, a) in elements.iter().enumerate() {
        for b in &elements[i + 1..] {
            min_dist = min_dist.min(a.distance_between(surface, b));
        }
    }
    if min_dist < 10.0 * flow.step {
        return Err(Error::Inseparable(format!(
            "critical elements {min_dist:.3e} apart, below 10 integrator steps"
        )));
    }
    let eps0 = EPS0_CAP.min((1.0 / 3.0 - 1e-3) * min_dist);
    let singularities: Vec<Point> = elements.iter().filter_map(|e| e.point()).collect();
    let mut config = ShadowingConfig {
        eps0,
        t0: 1.0,
        trap_set_margin: eps0 / 2.0,
        singularities,
        metric: surface.metric_name().to_string(),
    };

    let (lo, hi) = surface.bounds();
    let grid = 16;
    let k_points: Vec<Point> = (0..grid)
        .flat_map(|i| (0..grid).map(move |j| (i, j)))
        .map(|(i, j)| {
            Point::new(
                lo.x + (hi.x - lo.x) * (i as f64 + 0.5) / grid as f64,
                lo.y + (hi.y - lo.y) * (j as f64 + 0.5) / grid as f64,
            )
        })
        .filter(|p| config.in_k(flow, *p))
        .collect();
    let tube: Vec<Point> = elements
        .iter()
        .filter_map(|e| match &e.kind {
            ElementKind::ClosedOrbit { polyline, .. } => Some(polyline),
            _ => None,
        })
        .flat_map(|line| tube_samples(line, eps0))
        .collect();

    let mut t0 = 1.0;
    while t0 >= 1.0 / 64.0 {
        config.t0 = t0;
        let no_return = k_points.iter().all(|p| !returns_within(flow, *p, 2.0 * t0));
        let tube_ok = tube.iter().all(|p| config.in_k_tilde(flow, *p));
        if no_return && tube_ok {
            return Ok(config);
        }
        t0 *= 0.5;
    }
    Err(Error::Inseparable(
        "no T0 >= 1/64 keeps the closed-orbit neighbourhoods inside K~".into(),
    ))
}

/// Points of `B(eps0, line)` sampled along normals of the polyline.
fn tube_samples(line: &[Point], eps0: f64) -> Vec<Point> {
    let n = line.len();
    if n < 3 {
        return line.to_vec();
    }
    let stride = (n / 64).max(1);
    let mut out = Vec::new();
    for k in (0..n).step_by(stride) {
        let tangent = line[(k + 1) % n] - line[(k + n - 1) % n];
        let Some(unit) = tangent.normalized() else {
            continue;
        };
        let normal = unit.perp();
        for f in [-0.999, -0.5, 0.0, 0.5, 0.999] {
            out.push(line[k] + normal * (f * eps0));
        }
    }
    out
}

/// True when the orbit of `x` leaves a small ball and comes back to it within `span`.
fn returns_within(flow: &Flow, x: Point, span: f64) -> bool {
    let surface = flow.surface();
    let far = 1e-2;
    let mut left = false;
    let mut back = false;
    flow.walk(x, span, |_, p| {
        let d = surface.dist(surface.wrap(p), x);
        if d > far {
            left = true;
        } else if left && d < far / 2.0 {
            back = true;
            return false;
        }
        true
    });
    back
}
