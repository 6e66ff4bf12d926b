use std::sync::atomic::{AtomicU64, Ordering};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::align::{self, Band, CostGrid};
use super::Reparametrization;
use crate::error::{Error, Result};
use crate::flow::Flow;
use crate::geom::Point;
use crate::pseudo::{random_pseudotrajectory, Curve, Pseudotrajectory, ShadowingConfig};

/// Which time changes are allowed.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Mode {
    /// Any increasing time change.
    Oriented,
    /// Time changes in `Rep(eps)`.
    Standard { eps: f64 },
}

impl Mode {
    pub fn name(&self) -> String {
        match self {
            Mode::Oriented => "oriented".into(),
            Mode::Standard { eps } => format!("standard({eps})"),
        }
    }
}

/// Search budget for [`verify_shadowing`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SearchConfig {
    /// Candidate ball radius around the curve's first sample; `2 * eps_target` when unset.
    pub radius: Option<f64>,
    /// Candidate ball center; the curve's first sample when unset.
    pub center: Option<Point>,
    /// Candidate grid side (points per axis).
    pub grid: usize,
    /// Curve sampling step.
    pub dt: f64,
    /// Orbit samples per curve sample.
    pub q: usize,
    /// Curve samples per chord window in standard mode.
    pub chord_window: usize,
    /// Largest admissible lattice size per candidate.
    pub cell_budget: u64,
    /// Orbit horizon relative to the window; 1.5 (oriented) or `1 + eps` (standard) when unset.
    pub horizon_factor: Option<f64>,
    /// Explicit orbit sample count, overriding `horizon_factor`.
    pub orbit_samples: Option<usize>,
    /// Upgrade precondition: the oriented error must be below this fraction of `eps`.
    pub upgrade_fraction: f64,
}

impl Default for SearchConfig {
    fn default() -> Self {
        SearchConfig {
            radius: None,
            center: None,
            grid: 21,
            dt: 0.05,
            q: 4,
            chord_window: 5,
            cell_budget: 200_000_000,
            horizon_factor: None,
            orbit_samples: None,
            upgrade_fraction: 0.25,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SearchStats {
    /// Candidate grid side.
    pub grid: usize,
    /// Candidates inside the search ball.
    pub candidates: usize,
    /// Candidates whose alignment completed below the running bound.
    pub evaluated: usize,
    pub dp_cells: u64,
    pub n_xi: usize,
    pub n_y: usize,
    pub dt: f64,
    pub q: usize,
    pub chord_window: usize,
    pub radius: f64,
    /// Distance between neighbouring candidates.
    pub cell: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShadowingResult {
    pub mode: Mode,
    /// Target accuracy.
    pub eps: f64,
    pub sup_dist: f64,
    /// `sup_dist < eps`.
    pub shadowed: bool,
    pub point: Point,
    pub warp: Reparametrization,
    #[serde(rename = "budget")]
    pub stats: SearchStats,
}

/// Candidate orbit sampled lazily at spacing `h`.
struct LazyOrbit<'a> {
    flow: &'a Flow,
    h: f64,
    raw: Point,
    points: Vec<Point>,
    /// Cumulative polyline length through the samples.
    arc: Vec<f64>,
}

impl<'a> LazyOrbit<'a> {
    fn new(flow: &'a Flow, x: Point, h: f64) -> Self {
        LazyOrbit {
            flow,
            h,
            raw: x,
            points: vec![x],
            arc: vec![0.0],
        }
    }

    fn extend(&mut self) {
        let last = self.raw;
        self.raw = self.flow.walk(self.raw, self.h, |_, _| true).point;
        let len = self.arc[self.arc.len() - 1] + (self.raw - last).norm();
        self.arc.push(len);
        self.points.push(self.flow.surface().wrap(self.raw));
    }

    fn get(&mut self, j: usize) -> Point {
        while self.points.len() <= j {
            self.extend();
        }
        self.points[j]
    }

    /// First sample after `j` at polyline distance at least `len` from sample `j`, capped at `limit`.
    fn advance(&mut self, j: usize, len: f64, limit: usize) -> usize {
        // Rounding slack keeps the skip conservative.
        let target = self.arc[j] + len * (1.0 - 1e-9);
        let mut k = j + 1;
        loop {
            if k >= limit {
                return limit;
            }
            if k >= self.arc.len() {
                self.extend();
            }
            if self.arc[k] >= target {
                return k;
            }
            k += 1;
        }
    }
}

struct OrbitGrid<'a> {
    flow: &'a Flow,
    xi: &'a [Point],
    orbit: LazyOrbit<'a>,
    n_y: usize,
}

impl CostGrid for OrbitGrid<'_> {
    fn n_rows(&self) -> usize {
        self.xi.len()
    }
    fn n_cols(&self) -> usize {
        self.n_y
    }
    fn cost(&mut self, i: usize, j: usize) -> f64 {
        let y = self.orbit.get(j);
        self.flow.dist(self.xi[i], y)
    }

    // Costs are 1-Lipschitz in the orbit's arc length.
    fn skip(&mut self, _i: usize, j: usize, excess: f64) -> usize {
        self.orbit.advance(j, excess, self.n_y)
    }
}

struct Lattice {
    t_min: f64,
    xi: Vec<Point>,
    n_y: usize,
}

fn lattice(flow: &Flow, xi: &dyn Curve, window: (f64, f64), mode: Mode, search: &SearchConfig) -> Result<Lattice> {
    let (t_min, t_max) = window;
    if !(t_max >= t_min) || !(search.dt > 0.0) || search.q == 0 || search.chord_window == 0 {
        return Err(Error::InvalidInput(format!(
            "bad window [{t_min}, {t_max}] or search resolution"
        )));
    }
    let n_xi = ((t_max - t_min) / search.dt + 1e-9).floor() as usize + 1;
    let n_y = match search.orbit_samples {
        Some(n) => n,
        None => {
            let factor = search.horizon_factor.unwrap_or(match mode {
                Mode::Oriented => 1.5,
                Mode::Standard { eps } => 1.0 + eps,
            });
            (factor * ((n_xi - 1) * search.q) as f64).ceil() as usize + 1
        }
    };
    let cells = n_xi as u64 * n_y as u64;
    if cells > search.cell_budget {
        return Err(Error::BudgetExceeded {
            cells,
            budget: search.cell_budget,
        });
    }
    let times: Vec<f64> = (0..n_xi).map(|i| t_min + search.dt * i as f64).collect();
    Ok(Lattice {
        t_min,
        xi: xi.sample(flow, &times),
        n_y,
    })
}

/// Candidate starting points: a `grid x grid` square of half-side `radius` around `center`,
/// restricted to the closed ball, as `(lexicographic index, point)`.
pub fn candidate_points(flow: &Flow, center: Point, radius: f64, grid: usize) -> Vec<(usize, Point)> {
    let surface = flow.surface();
    if grid <= 1 || radius == 0.0 {
        return vec![(0, center)];
    }
    let mut out = Vec::new();
    for ix in 0..grid {
        for iy in 0..grid {
            let o = Point::new(
                radius * (2.0 * ix as f64 / (grid - 1) as f64 - 1.0),
                radius * (2.0 * iy as f64 / (grid - 1) as f64 - 1.0),
            );
            if o.norm() > radius * (1.0 + 1e-12) {
                continue;
            }
            let p = center + o;
            if !surface.contains(p) {
                continue;
            }
            out.push((ix * grid + iy, surface.wrap(p)));
        }
    }
    out
}

/// The dense cost lattice for one candidate point (small instances, tests).
pub fn cost_grid(
    flow: &Flow,
    xi: &dyn Curve,
    window: (f64, f64),
    point: Point,
    mode: Mode,
    search: &SearchConfig,
) -> Result<align::Matrix> {
    let lat = lattice(flow, xi, window, mode, search)?;
    let mut g = OrbitGrid {
        flow,
        xi: &lat.xi,
        orbit: LazyOrbit::new(flow, point, search.dt / search.q as f64),
        n_y: lat.n_y,
    };
    Ok(align::Matrix(
        (0..g.n_rows())
            .map(|i| (0..lat.n_y).map(|j| g.cost(i, j)).collect())
            .collect(),
    ))
}

struct CandidateOutcome {
    value: f64,
    lex: usize,
    point: Point,
    knots: Vec<(usize, usize)>,
}

/// Minimax shadowing search over the candidate grid; see [`verify_curve`].
pub fn verify_shadowing(
    flow: &Flow,
    xi: &Pseudotrajectory,
    mode: Mode,
    eps_target: f64,
    search: &SearchConfig,
) -> Result<ShadowingResult> {
    verify_curve(flow, xi, xi.window(), mode, eps_target, search)
}

/// Searches for a point and a time change minimizing the sup distance to `xi` on `window`.
///
/// The curve is sampled every `dt`, each candidate orbit every `dt / q`; the alignment is
/// solved exactly on that lattice. The result is the smallest value over candidates, ties
/// broken by lexicographic grid position.
pub fn verify_curve(
    flow: &Flow,
    xi: &dyn Curve,
    window: (f64, f64),
    mode: Mode,
    eps_target: f64,
    search: &SearchConfig,
) -> Result<ShadowingResult> {
    if !(eps_target > 0.0) {
        return Err(Error::InvalidInput(format!("eps must be positive, got {eps_target}")));
    }
    if let Mode::Standard { eps } = mode {
        if !(eps > 0.0 && eps < 1.0) {
            return Err(Error::InvalidInput(format!("standard mode needs eps in (0, 1), got {eps}")));
        }
    }
    let lat = lattice(flow, xi, window, mode, search)?;
    let radius = search.radius.unwrap_or(2.0 * eps_target);
    let center = search.center.map_or(lat.xi[0], |c| flow.surface().wrap(c));
    let mut cands: Vec<(f64, usize, Point)> = candidate_points(flow, center, radius, search.grid)
        .into_iter()
        .map(|(lex, p)| (flow.dist(center, p), lex, p))
        .collect();
    if cands.is_empty() {
        return Err(Error::EmptySearch);
    }
    cands.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));

    let h = search.dt / search.q as f64;
    let band = Band {
        window: search.chord_window,
        q: search.q,
        eps: match mode {
            Mode::Standard { eps } => eps,
            Mode::Oriented => 0.0,
        },
    };
    let run = |point: Point, bound: f64| -> (Option<(f64, Vec<(usize, usize)>)>, u64) {
        let mut g = OrbitGrid {
            flow,
            xi: &lat.xi,
            orbit: LazyOrbit::new(flow, point, h),
            n_y: lat.n_y,
        };
        match mode {
            Mode::Oriented => match align::oriented_minimax(&mut g, bound) {
                Some(a) => (Some((a.value, Vec::new())), a.cells),
                None => (None, 0),
            },
            Mode::Standard { .. } => match align::banded_minimax(&mut g, band, bound, &[]) {
                Ok(a) => (Some((a.value, a.knots)), a.cells),
                Err(_) => (None, 0),
            },
        }
    };

    // Fixed-size batches share one bound, so the work done is independent of thread count.
    const BATCH: usize = 16;
    let bound = AtomicU64::new(f64::INFINITY.to_bits());
    let mut best: Option<CandidateOutcome> = None;
    let mut stats = SearchStats {
        grid: search.grid,
        candidates: cands.len(),
        n_xi: lat.xi.len(),
        n_y: lat.n_y,
        dt: search.dt,
        q: search.q,
        chord_window: search.chord_window,
        radius,
        cell: if search.grid > 1 {
            2.0 * radius / (search.grid - 1) as f64
        } else {
            0.0
        },
        ..Default::default()
    };
    for batch in cands.chunks(BATCH) {
        let b = f64::from_bits(bound.load(Ordering::Relaxed));
        // Candidates farther from the first sample than the bound cannot win.
        if search.center.is_none() && batch[0].0 > b {
            break;
        }
        let outcomes: Vec<_> = batch
            .par_iter()
            .map(|&(_, lex, p)| {
                let (res, cells) = run(p, b);
                (lex, p, res, cells)
            })
            .collect();
        for (lex, point, res, cells) in outcomes {
            stats.dp_cells += cells;
            if let Some((value, knots)) = res {
                stats.evaluated += 1;
                let better = match &best {
                    None => true,
                    Some(o) => value < o.value || (value == o.value && lex < o.lex),
                };
                if better {
                    best = Some(CandidateOutcome {
                        value,
                        lex,
                        point,
                        knots,
                    });
                }
            }
        }
        if let Some(o) = &best {
            bound.store(o.value.to_bits(), Ordering::Relaxed);
        }
    }
    let best = best.ok_or(Error::EmptySearch)?;

    let knots: Vec<(usize, usize)> = match mode {
        Mode::Oriented => {
            let mut g = OrbitGrid {
                flow,
                xi: &lat.xi,
                orbit: LazyOrbit::new(flow, best.point, h),
                n_y: lat.n_y,
            };
            align::oriented_path(&mut g, best.value).into_iter().enumerate().collect()
        }
        Mode::Standard { .. } => best.knots,
    };
    let warp = warp_from_cells(&knots, lat.t_min, search.dt, h);
    Ok(ShadowingResult {
        mode,
        eps: eps_target,
        sup_dist: best.value,
        shadowed: best.value < eps_target,
        point: best.point,
        warp,
        stats,
    })
}

/// Warp through lattice cells, keeping only cells that advance in both coordinates.
fn warp_from_cells(cells: &[(usize, usize)], t_min: f64, dt: f64, h: f64) -> Reparametrization {
    let mut knots: Vec<(f64, f64)> = Vec::with_capacity(cells.len());
    let mut last: Option<(usize, usize)> = None;
    for &(i, j) in cells {
        if last.is_none_or(|(a, b)| i > a && j > b) {
            knots.push((t_min + dt * i as f64, h * j as f64));
            last = Some((i, j));
        }
    }
    if knots.is_empty() {
        knots.push((t_min, 0.0));
    }
    Reparametrization::new(knots, 1.0, 1.0).unwrap_or_else(|_| Reparametrization::identity())
}

/// Result of [`upgrade_to_standard`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum UpgradeOutcome {
    Upgraded {
        warp: Reparametrization,
        sup_dist: f64,
    },
    Failed {
        /// Anchor block (counted from the window start) no admissible warp gets through.
        block: usize,
        time: f64,
        reason: String,
    },
}

impl UpgradeOutcome {
    pub fn is_upgraded(&self) -> bool {
        matches!(self, UpgradeOutcome::Upgraded { .. })
    }
}

/// Re-solves an oriented alignment of `xi` with the orbit of `candidate` inside `Rep(eps)`.
///
/// The oriented warp must track within `upgrade_fraction * eps`. At every anchor time the
/// standard warp is pinned to the columns matched within that accuracy around the oriented
/// warp, so block endpoints are preserved. Both curves must stay in `K~`.
#[allow(clippy::too_many_arguments)]
pub fn upgrade_to_standard(
    flow: &Flow,
    config: &ShadowingConfig,
    xi: &Pseudotrajectory,
    window: (f64, f64),
    candidate: Point,
    oriented_warp: &Reparametrization,
    eps: f64,
    search: &SearchConfig,
) -> Result<UpgradeOutcome> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::InvalidInput(format!("eps must lie in (0, 1), got {eps}")));
    }
    let eps_small = search.upgrade_fraction * eps;
    let mode = Mode::Standard { eps };
    let lat = lattice(flow, xi, window, mode, search)?;
    let h = search.dt / search.q as f64;
    let n = lat.xi.len();
    let rows = Band {
        window: search.chord_window,
        q: search.q,
        eps,
    }
    .knot_rows(n);

    for &i in &rows {
        let t = lat.t_min + search.dt * i as f64;
        if !config.in_k_tilde(flow, lat.xi[i]) {
            return Err(Error::LeftTrapSet(format!("pseudotrajectory at t={t:.3}")));
        }
    }

    let mut g = OrbitGrid {
        flow,
        xi: &lat.xi,
        orbit: LazyOrbit::new(flow, candidate, h),
        n_y: lat.n_y,
    };
    // Oriented accuracy along the given warp, checked on the curve samples.
    let col = |t: f64| (oriented_warp.eval(&t) / h).round().max(0.0) as usize;
    let mut oriented_err: f64 = 0.0;
    for i in 0..n {
        let j = col(lat.t_min + search.dt * i as f64);
        if j >= lat.n_y {
            oriented_err = f64::INFINITY;
            break;
        }
        oriented_err = oriented_err.max(g.cost(i, j));
    }
    if !(oriented_err < eps_small) {
        return Err(Error::InvalidInput(format!(
            "oriented warp tracks within {oriented_err:.4}, not below {eps_small:.4}"
        )));
    }
    for i in 0..n {
        let j = col(lat.t_min + search.dt * i as f64);
        let y = g.orbit.get(j);
        if !config.in_k(flow, y) {
            let t = lat.t_min + search.dt * i as f64;
            return Err(Error::LeftTrapSet(format!("shadowing orbit near t={t:.3}")));
        }
    }

    // Pin block ends to the connected match range around the oriented warp.
    let mut pins: Vec<Option<(usize, usize)>> = vec![None; rows.len()];
    for a in xi.anchors() {
        if a.time <= window.0 || a.time >= window.1 {
            continue;
        }
        let i = ((a.time - lat.t_min) / search.dt).round() as usize;
        let Some(b) = rows.iter().position(|&r| r == i) else {
            continue;
        };
        let j = col(a.time).min(lat.n_y - 1);
        let (mut lo, mut hi) = (j, j);
        while lo > 0 && g.cost(i, lo - 1) < eps_small {
            lo -= 1;
        }
        while hi + 1 < lat.n_y && g.cost(i, hi + 1) < eps_small {
            hi += 1;
        }
        pins[b] = Some((lo, hi));
    }

    let bound = eps * (1.0 - f64::EPSILON);
    let band = Band {
        window: search.chord_window,
        q: search.q,
        eps,
    };
    match align::banded_minimax(&mut g, band, bound, &pins) {
        Ok(a) => {
            let warp = warp_from_cells(&a.knots, lat.t_min, search.dt, h);
            Ok(UpgradeOutcome::Upgraded {
                warp,
                sup_dist: a.value,
            })
        }
        Err(b) => {
            let t = lat.t_min + search.dt * rows[b.min(rows.len() - 1)] as f64;
            let block = xi.anchors().iter().filter(|a| a.time > window.0 && a.time <= t).count();
            Ok(UpgradeOutcome::Failed {
                block,
                time: t,
                reason: format!("no Rep({eps}) warp within {eps} reaches t={t:.3}"),
            })
        }
    }
}

/// Random `Pt_T0(d)` trial `k` for seed `seed`: start uniform in `K`, then `blocks - 1` kicks.
/// The same `(seed, k)` gives the same start and kick directions for every `d`.
pub fn random_trial(
    flow: &Flow,
    config: &ShadowingConfig,
    blocks: usize,
    d: f64,
    seed: u64,
    k: u64,
) -> Result<Pseudotrajectory> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(k));
    let start = config.random_start(flow, &mut rng);
    random_pseudotrajectory(flow, start, config.t0, blocks, d, &mut rng)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThresholdRow {
    pub eps: f64,
    pub d_hat: f64,
    /// Set when no tested `d > 0` passed: the verifier cannot resolve this `eps`.
    pub below_resolution: bool,
    /// Every tested `(d, all shadowed)`.
    pub tested: Vec<(f64, bool)>,
}

/// For each `eps`, the largest tested `d` at which `trials` random `Pt(d)` are all
/// `eps`-shadowed (standard mode uses `Rep(eps)`), by bisection on `[0, eps]`; made
/// nondecreasing in `eps` by a running maximum.
#[allow(clippy::too_many_arguments)]
pub fn threshold_curve(
    flow: &Flow,
    config: &ShadowingConfig,
    standard: bool,
    eps_list: &[f64],
    trials: usize,
    seed: u64,
    blocks: usize,
    search: &SearchConfig,
) -> Result<Vec<ThresholdRow>> {
    let mut order: Vec<usize> = (0..eps_list.len()).collect();
    order.sort_by(|&a, &b| eps_list[a].total_cmp(&eps_list[b]));
    let all_pass = |eps: f64, d: f64| -> Result<bool> {
        let mode = if standard { Mode::Standard { eps } } else { Mode::Oriented };
        for k in 0..trials {
            let xi = random_trial(flow, config, blocks, d, seed, k as u64)?;
            if !verify_shadowing(flow, &xi, mode, eps, search)?.shadowed {
                return Ok(false);
            }
        }
        Ok(true)
    };
    let mut rows = vec![None; eps_list.len()];
    let mut running: f64 = 0.0;
    for idx in order {
        let eps = eps_list[idx];
        let mut tested = Vec::new();
        let top = all_pass(eps, eps)?;
        tested.push((eps, top));
        let mut lo = 0.0;
        if top {
            lo = eps;
        } else {
            let mut hi = eps;
            for _ in 0..6 {
                let mid = 0.5 * (lo + hi);
                let ok = all_pass(eps, mid)?;
                tested.push((mid, ok));
                if ok {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
        }
        running = running.max(lo);
        rows[idx] = Some(ThresholdRow {
            eps,
            d_hat: running,
            below_resolution: running == 0.0,
            tested,
        });
    }
    Ok(rows.into_iter().map(|r| r.unwrap()).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flow::CatalogField;

    fn small_search() -> SearchConfig {
        SearchConfig {
            grid: 5,
            ..Default::default()
        }
    }

    #[test]
    fn exact_orbit_shadows_itself() {
        let flow = Flow::catalog(CatalogField::Sink);
        let xi = Pseudotrajectory::exact_orbit(Point::new(1.0, 0.0), 0.0, 3.0).unwrap();
        for mode in [Mode::Oriented, Mode::Standard { eps: 0.1 }] {
            let r = verify_shadowing(&flow, &xi, mode, 0.1, &small_search()).unwrap();
            assert!(r.sup_dist < 1e-4, "{mode:?}: {}", r.sup_dist);
            assert_eq!(r.point, Point::new(1.0, 0.0));
            for t in [0.5, 1.0, 2.5] {
                assert!((r.warp.eval(&t) - t).abs() < 0.05);
            }
        }
    }

    #[test]
    fn standard_dominates_oriented() {
        let flow = Flow::catalog(CatalogField::LimitCycle);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let xi = random_pseudotrajectory(&flow, Point::new(0.6, 0.1), 1.0, 4, 0.1, &mut rng).unwrap();
        let o = verify_shadowing(&flow, &xi, Mode::Oriented, 0.2, &small_search()).unwrap();
        let s = verify_shadowing(&flow, &xi, Mode::Standard { eps: 0.2 }, 0.2, &small_search()).unwrap();
        assert!(s.sup_dist >= o.sup_dist);
        assert!(s.warp.is_member(&0.2));
    }

    #[test]
    fn budget_and_empty_grid_errors() {
        let flow = Flow::catalog(CatalogField::Sink);
        let xi = Pseudotrajectory::exact_orbit(Point::new(1.0, 0.0), 0.0, 3.0).unwrap();
        let tight = SearchConfig {
            cell_budget: 10,
            ..small_search()
        };
        assert!(matches!(
            verify_shadowing(&flow, &xi, Mode::Oriented, 0.1, &tight),
            Err(Error::BudgetExceeded { .. })
        ));
    }

    #[test]
    fn upgrade_of_identity_is_identity() {
        let flow = Flow::catalog(CatalogField::LimitCycle);
        let config = ShadowingConfig {
            eps0: 0.33,
            t0: 1.0,
            trap_set_margin: 0.165,
            singularities: vec![Point::ORIGIN],
            metric: "euclidean".into(),
        };
        let x = Point::new(1.0, 0.0);
        let xi = Pseudotrajectory::from_anchors(
            1.0,
            0,
            &(0..4).map(|k| flow.flow_map(k as f64, x).unwrap()).collect::<Vec<_>>(),
            crate::pseudo::ExtensionRule::ClampEnds,
        )
        .unwrap();
        // Identity knots with steep end slopes: only the interior matters.
        let warp = Reparametrization::new(vec![(0.0, 0.0), (4.0, 4.0)], 1.3, 1.3).unwrap();
        let out = upgrade_to_standard(&flow, &config, &xi, xi.window(), x, &warp, 0.33, &SearchConfig::default())
            .unwrap();
        match out {
            UpgradeOutcome::Upgraded { warp, sup_dist } => {
                assert!(sup_dist < 1e-3);
                assert!(warp.is_member(&0.33));
                for t in [1.0, 2.0, 3.0] {
                    assert!((warp.eval(&t) - t).abs() < 1e-9);
                }
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn upgrade_refuses_outside_trap_set() {
        let flow = Flow::catalog(CatalogField::Sink);
        let config = ShadowingConfig {
            eps0: 0.79,
            t0: 1.0,
            trap_set_margin: 0.395,
            singularities: vec![Point::ORIGIN],
            metric: "euclidean".into(),
        };
        let xi = Pseudotrajectory::exact_orbit(Point::new(0.2, 0.0), 0.0, 2.0).unwrap();
        let err = upgrade_to_standard(
            &flow,
            &config,
            &xi,
            xi.window(),
            Point::new(0.2, 0.0),
            &Reparametrization::identity(),
            0.4,
            &SearchConfig::default(),
        )
        .unwrap_err();
        assert!(err.to_string().contains("left K~"));
    }
}
