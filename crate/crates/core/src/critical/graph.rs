use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::element::{CriticalElement, Stability};
use crate::error::Result;
use crate::flow::Flow;
use crate::geom::Point;
use crate::sectors::{find_base_orbits, DiskNeighborhood, SectorType, Sign, SingularityClass};

/// `from ⇀ to`: some orbit has its alpha limit in `from` and omega limit in `to`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub from: usize,
    pub to: usize,
    pub witness: Point,
}

/// An orbit whose limit in one direction was not near any element.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UnknownLimit {
    pub start: Point,
    pub forward: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConnectionGraph {
    pub nodes: Vec<CriticalElement>,
    pub edges: Vec<Edge>,
    pub unknown: Vec<UnknownLimit>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CycleReport {
    pub acyclic: bool,
    /// Node indices along a cycle, first node repeated at the end.
    pub cycle: Option<Vec<usize>>,
}

/// Tuning for [`connection_graph`].
#[derive(Clone, Debug, PartialEq)]
pub struct GraphConfig {
    /// Limits are the elements whose `eps0 / 2` ball an orbit enters.
    pub eps0: f64,
    /// Grid samples per axis for generic orbits.
    pub grid: usize,
    pub horizon: f64,
}

impl GraphConfig {
    pub fn new(eps0: f64) -> Self {
        GraphConfig {
            eps0,
            grid: 12,
            horizon: 200.0,
        }
    }
}

fn saddle_type(e: &CriticalElement) -> bool {
    match &e.stability {
        Stability::SectorType(SingularityClass::FourHyperbolic | SingularityClass::TwoHyperbolic) => true,
        Stability::SectorType(SingularityClass::Other(kinds)) => kinds.contains(&SectorType::Hyperbolic),
        _ => false,
    }
}

enum Limit {
    Element(usize),
    Escaped,
    Unknown,
}

/// First element (other than `skip`, until the orbit has left it) whose `radius` ball the
/// orbit from `x` enters.
fn first_entered(flow: &Flow, nodes: &[CriticalElement], x: Point, duration: f64, radius: f64, skip: Option<usize>) -> Limit {
    let surface = *flow.surface();
    let mut left_home = skip.is_none();
    let mut hit = None;
    let mut check = 0usize;
    let end = flow.walk(x, duration, |_, p| {
        check += 1;
        // Distances to polylines are costly; look every few steps.
        if !check.is_multiple_of(4) {
            return true;
        }
        let p = surface.wrap(p);
        for (k, e) in nodes.iter().enumerate() {
            let d = e.distance_to(&surface, p);
            if Some(k) == skip && !left_home {
                if d > radius {
                    left_home = true;
                }
                continue;
            }
            if d < radius {
                hit = Some(k);
                return false;
            }
        }
        true
    });
    match hit {
        Some(k) => Limit::Element(k),
        None if end.escaped.is_some() => Limit::Escaped,
        None => Limit::Unknown,
    }
}

/// Builds the connection relation between critical elements.
///
/// Saddle-type singularities (stability already set to a sector class with hyperbolic
/// sectors) launch orbits from their base-orbit rays: unstable rays forward, stable rays
/// backward. A grid of generic points adds their alpha and omega limits.
pub fn connection_graph(flow: &Flow, elements: &[CriticalElement], config: &GraphConfig) -> Result<ConnectionGraph> {
    let nodes = elements.to_vec();
    let surface = *flow.surface();
    let ball = 0.5 * config.eps0;
    let mut edges: Vec<Edge> = Vec::new();
    let mut unknown = Vec::new();

    for (k, e) in nodes.iter().enumerate() {
        if !saddle_type(e) {
            continue;
        }
        let Some(p) = e.point() else { continue };
        let nearest = nodes
            .iter()
            .enumerate()
            .filter(|(j, _)| *j != k)
            .map(|(_, o)| o.distance_to(&surface, p))
            .fold(f64::INFINITY, f64::min);
        let radius = (0.9 * ball).min(0.45 * nearest);
        let disk = DiskNeighborhood::new(p, radius);
        let scan = find_base_orbits(flow, &disk)?;
        for ray in &scan.rays {
            let forward = ray.sign == Sign::Negative;
            let dur = if forward { config.horizon } else { -config.horizon };
            match first_entered(flow, &nodes, ray.boundary_point, dur, ball, Some(k)) {
                Limit::Element(j) => {
                    let (from, to) = if forward { (k, j) } else { (j, k) };
                    edges.push(Edge {
                        from,
                        to,
                        witness: ray.boundary_point,
                    });
                }
                Limit::Escaped => {}
                Limit::Unknown => unknown.push(UnknownLimit {
                    start: ray.boundary_point,
                    forward,
                }),
            }
        }
    }

    let (lo, hi) = surface.bounds();
    let n = config.grid;
    let starts: Vec<Point> = (0..n)
        .flat_map(|i| (0..n).map(move |j| (i, j)))
        .map(|(i, j)| {
            Point::new(
                lo.x + (hi.x - lo.x) * (i as f64 + 0.37) / n as f64,
                lo.y + (hi.y - lo.y) * (j as f64 + 0.61) / n as f64,
            )
        })
        .filter(|x| nodes.iter().all(|e| e.distance_to(&surface, *x) > ball))
        .collect();
    let limits: Vec<(Point, Limit, Limit)> = starts
        .par_iter()
        .map(|&x| {
            (
                x,
                first_entered(flow, &nodes, x, -config.horizon, ball, None),
                first_entered(flow, &nodes, x, config.horizon, ball, None),
            )
        })
        .collect();
    for (x, alpha, omega) in limits {
        match (alpha, omega) {
            (Limit::Element(a), Limit::Element(b)) => edges.push(Edge {
                from: a,
                to: b,
                witness: x,
            }),
            (a, b) => {
                if matches!(a, Limit::Unknown) {
                    unknown.push(UnknownLimit { start: x, forward: false });
                }
                if matches!(b, Limit::Unknown) {
                    unknown.push(UnknownLimit { start: x, forward: true });
                }
            }
        }
    }
    edges.sort_by_key(|a| (a.from, a.to));
    edges.dedup_by(|a, b| a.from == b.from && a.to == b.to);
    Ok(ConnectionGraph { nodes, edges, unknown })
}

impl ConnectionGraph {
    pub fn successors(&self, k: usize) -> Vec<usize> {
        let mut s: Vec<usize> = self.edges.iter().filter(|e| e.from == k).map(|e| e.to).collect();
        s.sort_unstable();
        s.dedup();
        s
    }

    pub fn to_dot(&self) -> String {
        let mut out = String::from("digraph connections {\n");
        for (k, n) in self.nodes.iter().enumerate() {
            let _ = writeln!(out, "  n{k} [label=\"{}\"];", n.label());
        }
        for e in &self.edges {
            let _ = writeln!(out, "  n{} -> n{};", e.from, e.to);
        }
        out.push_str("}\n");
        out
    }
}

/// Depth-first search for a directed cycle (self-loops included), visiting nodes in index order.
pub fn check_no_cycles(graph: &ConnectionGraph) -> CycleReport {
    let n = graph.nodes.len();
    let succ: Vec<Vec<usize>> = (0..n).map(|k| graph.successors(k)).collect();
    // 0 = unvisited, 1 = on stack, 2 = done
    let mut state = vec![0u8; n];
    let mut stack: Vec<usize> = Vec::new();

    fn dfs(v: usize, succ: &[Vec<usize>], state: &mut [u8], stack: &mut Vec<usize>) -> Option<Vec<usize>> {
        state[v] = 1;
        stack.push(v);
        for &w in &succ[v] {
            if state[w] == 1 {
                let pos = stack.iter().position(|&u| u == w).unwrap();
                let mut cycle = stack[pos..].to_vec();
                cycle.push(w);
                return Some(cycle);
            }
            if state[w] == 0 {
                if let Some(c) = dfs(w, succ, state, stack) {
                    return Some(c);
                }
            }
        }
        stack.pop();
        state[v] = 2;
        None
    }

    for v in 0..n {
        if state[v] == 0 {
            if let Some(cycle) = dfs(v, &succ, &mut state, &mut stack) {
                return CycleReport {
                    acyclic: false,
                    cycle: Some(cycle),
                };
            }
        }
    }
    CycleReport {
        acyclic: true,
        cycle: None,
    }
}
