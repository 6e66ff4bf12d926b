use rayon::prelude::*;

use super::element::{polyline_distance, CriticalElement};
use crate::error::{Error, Result};
use crate::flow::{build_transversal, Flow};
use crate::geom::Point;

/// Roots closer than this are the same singularity.
const DEDUPE: f64 = 1e-3;
/// A root cluster wider than this means a non-isolated zero set.
const CLUSTER_MAX: f64 = 1e-2;

/// Search controls for [`find_critical_elements`].
#[derive(Clone, Debug, PartialEq)]
pub struct SearchGrid {
    /// Newton seeds per axis.
    pub seeds: usize,
    /// Closed-orbit seeds per axis.
    pub orbit_seeds: usize,
    /// Length of the pre-run before return maps are iterated.
    pub horizon: f64,
    /// Cap on return-map iterations per seed.
    pub max_returns: usize,
}

impl Default for SearchGrid {
    fn default() -> Self {
        SearchGrid {
            seeds: 24,
            orbit_seeds: 8,
            horizon: 200.0,
            max_returns: 600,
        }
    }
}

fn grid_points(flow: &Flow, n: usize) -> Vec<Point> {
    let (lo, hi) = flow.surface().bounds();
    let torus = flow.surface().is_torus();
    // Cell centres on the plane; on the torus the lattice includes 0 and half periods.
    (0..n)
        .flat_map(|i| (0..n).map(move |j| (i, j)))
        .map(|(i, j)| {
            let (fi, fj) = if torus {
                (i as f64 / n as f64, j as f64 / n as f64)
            } else {
                ((i as f64 + 0.5) / n as f64, (j as f64 + 0.5) / n as f64)
            };
            Point::new(lo.x + (hi.x - lo.x) * fi, lo.y + (hi.y - lo.y) * fj)
        })
        .collect()
}

fn solve2(j: [[f64; 2]; 2], b: Point) -> Option<Point> {
    let det = j[0][0] * j[1][1] - j[0][1] * j[1][0];
    if det.abs() < 1e-300 {
        return None;
    }
    Some(Point::new(
        (b.x * j[1][1] - b.y * j[0][1]) / det,
        (j[0][0] * b.y - j[1][0] * b.x) / det,
    ))
}

/// Damped Newton from `x`; `None` when it stalls or leaves the domain.
fn newton(flow: &Flow, x: Point) -> Option<(Point, f64)> {
    let surface = flow.surface();
    let field = &flow.field;
    let mut p = x;
    let mut f = field.eval(p);
    let mut fnorm = f.norm();
    for _ in 0..200 {
        if fnorm < 1e-12 {
            break;
        }
        let jac = field.jacobian(p);
        let step = solve2(jac, f).unwrap_or_else(|| {
            // Gradient direction of |F|^2 when the Jacobian is singular.
            Point::new(jac[0][0] * f.x + jac[1][0] * f.y, jac[0][1] * f.x + jac[1][1] * f.y)
        });
        let mut lambda = 1.0;
        let mut moved = false;
        for _ in 0..40 {
            let q = p - step * lambda;
            if surface.contains(q) {
                let fq = field.eval(q);
                if fq.norm() < fnorm {
                    p = q;
                    f = fq;
                    fnorm = fq.norm();
                    moved = true;
                    break;
                }
            }
            lambda *= 0.5;
        }
        if !moved {
            break;
        }
    }
    (fnorm < 1e-9).then(|| (surface.wrap(p), fnorm))
}

/// Singularities by damped Newton from grid seeds.
pub fn find_singularities(flow: &Flow, seeds: usize) -> Result<Vec<Point>> {
    let surface = *flow.surface();
    let mut roots: Vec<(Point, f64)> = grid_points(flow, seeds)
        .par_iter()
        .filter_map(|&x| newton(flow, x))
        .collect();
    roots.sort_by(|a, b| a.0.x.total_cmp(&b.0.x).then(a.0.y.total_cmp(&b.0.y)));
    // Single-linkage clusters at the dedupe distance.
    let mut cluster_of: Vec<usize> = (0..roots.len()).collect();
    fn find(c: &mut [usize], i: usize) -> usize {
        let mut r = i;
        while c[r] != r {
            r = c[r];
        }
        c[i] = r;
        r
    }
    for i in 0..roots.len() {
        for j in i + 1..roots.len() {
            if surface.dist(roots[i].0, roots[j].0) < DEDUPE {
                let (a, b) = (find(&mut cluster_of, i), find(&mut cluster_of, j));
                cluster_of[a.max(b)] = a.min(b);
            }
        }
    }
    let mut clusters: Vec<Vec<usize>> = Vec::new();
    let mut label: Vec<Option<usize>> = vec![None; roots.len()];
    for i in 0..roots.len() {
        let r = find(&mut cluster_of, i);
        match label[r] {
            Some(c) => clusters[c].push(i),
            None => {
                label[r] = Some(clusters.len());
                clusters.push(vec![i]);
            }
        }
    }
    let mut out = Vec::new();
    for c in clusters {
        let diam = c
            .iter()
            .flat_map(|&i| c.iter().map(move |&j| (i, j)))
            .map(|(i, j)| surface.dist(roots[i].0, roots[j].0))
            .fold(0.0, f64::max);
        if diam > CLUSTER_MAX {
            return Err(Error::DegenerateField(format!(
                "zeros near ({:.4}, {:.4}) spread over {diam:.3e}; zero set is not isolated",
                roots[c[0]].0.x, roots[c[0]].0.y
            )));
        }
        let best = c.iter().min_by(|&&i, &&j| roots[i].1.total_cmp(&roots[j].1)).unwrap();
        out.push(roots[*best].0);
    }
    Ok(out)
}

/// Iterates the return map on a transversal through `y` until it settles; returns the
/// orbit as `(seed, period, polyline)`.
fn settle_cycle(flow: &Flow, y: Point, max_returns: usize) -> Option<(Point, f64, Vec<Point>)> {
    let tr = build_transversal(flow, y, 0.1).ok()?;
    let mut x = y;
    let mut s_prev = 0.0;
    let mut period = f64::NAN;
    let mut settled = false;
    let mut steps: Vec<f64> = Vec::new();
    for _ in 0..max_returns {
        let (t, s) = tr.first_crossing(flow, x, 100.0, 1e-2, 1.0)?;
        period = t;
        x = tr.point_at(s);
        let step = s - s_prev;
        s_prev = s;
        if step.abs() < 1e-7 {
            settled = true;
            break;
        }
        steps.push(step);
    }
    // Algebraic approach (one-sided attraction): accept a one-signed, shrinking tail.
    if !settled && steps.len() >= 20 {
        let tail = &steps[steps.len() - 20..];
        let one_sign = tail.iter().all(|d| d.signum() == tail[0].signum());
        let shrinking = tail.windows(2).all(|w| w[1].abs() <= w[0].abs());
        settled = one_sign && shrinking && tail[19].abs() < 1e-5;
    }
    if !settled {
        return None;
    }
    let n = 400;
    let seg = flow.sample_orbit(x, 0.0, period, period / n as f64).ok()?;
    let close = flow.dist(seg.first(), seg.last());
    if close > 10.0 * flow.step.max(1e-3) {
        return None;
    }
    let mut polyline: Vec<Point> = seg.points().map(|p| flow.surface().wrap(p)).collect();
    polyline.pop();
    Some((x, period, polyline))
}

/// Singularities and closed orbits of the flow.
///
/// Closed orbits come from long forward and backward runs off a seed grid: when a run ends
/// away from every singularity, the return map on a transversal there is iterated until it
/// converges. Orbits are deduplicated by Hausdorff distance.
pub fn find_critical_elements(flow: &Flow, grid: &SearchGrid) -> Result<Vec<CriticalElement>> {
    let sings = find_singularities(flow, grid.seeds)?;
    let mut elements: Vec<CriticalElement> = sings.iter().map(|p| CriticalElement::singularity(*p)).collect();
    let coarse = flow.clone().with_step(1e-2)?;
    let surface = *flow.surface();
    let near_sing = |p: Point| sings.iter().any(|s| surface.dist(*s, p) < 0.05);
    let mut orbits: Vec<CriticalElement> = Vec::new();
    for (dir_flow, pre) in [(flow.clone(), coarse.clone()), (flow.reversed(), coarse.reversed())] {
        // Pre-runs are independent; the settling step is sequential for stable dedupe.
        let ends: Vec<Option<Point>> = grid_points(flow, grid.orbit_seeds)
            .par_iter()
            .map(|&x| {
                if near_sing(x) {
                    return None;
                }
                let end = pre.walk(x, grid.horizon, |_, _| true);
                if end.escaped.is_some() {
                    return None;
                }
                let y = surface.wrap(end.point);
                (!near_sing(y)).then_some(y)
            })
            .collect();
        for y in ends.into_iter().flatten() {
            let known = orbits.iter().any(|o| o.distance_to(&surface, y) < 1e-2);
            if known {
                continue;
            }
            let Some((seed, period, line)) = settle_cycle(&dir_flow, y, grid.max_returns) else {
                continue;
            };
            let dup = orbits.iter().any(|o| {
                let h1 = line.iter().map(|p| o.distance_to(&surface, *p)).fold(0.0, f64::max);
                let h2 = o.points().iter().map(|p| polyline_distance(&surface, &line, *p)).fold(0.0, f64::max);
                h1.max(h2) < 0.05
            });
            if !dup {
                orbits.push(CriticalElement::closed_orbit(seed, period, line));
            }
        }
    }
    elements.extend(orbits);
    Ok(elements)
}
