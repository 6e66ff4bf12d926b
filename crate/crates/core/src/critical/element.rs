use serde::{Deserialize, Serialize};

use crate::flow::Surface;
use crate::geom::Point;
use crate::sectors::SingularityClass;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ElementKind {
    Singularity {
        point: Point,
    },
    ClosedOrbit {
        seed: Point,
        period: f64,
        polyline: Vec<Point>,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stability {
    Stable,
    Unstable,
    SemiStable,
    SectorType(SingularityClass),
    /// Not classified yet.
    Unknown,
}

/// A singularity or a closed orbit of the flow.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CriticalElement {
    pub kind: ElementKind,
    pub stability: Stability,
}

impl CriticalElement {
    pub fn singularity(point: Point) -> Self {
        CriticalElement {
            kind: ElementKind::Singularity { point },
            stability: Stability::Unknown,
        }
    }

    pub fn closed_orbit(seed: Point, period: f64, polyline: Vec<Point>) -> Self {
        CriticalElement {
            kind: ElementKind::ClosedOrbit {
                seed,
                period,
                polyline,
            },
            stability: Stability::Unknown,
        }
    }

    pub fn with_stability(mut self, stability: Stability) -> Self {
        self.stability = stability;
        self
    }

    pub fn is_singularity(&self) -> bool {
        matches!(self.kind, ElementKind::Singularity { .. })
    }

    pub fn point(&self) -> Option<Point> {
        match &self.kind {
            ElementKind::Singularity { point } => Some(*point),
            ElementKind::ClosedOrbit { .. } => None,
        }
    }

    /// A representative point: the singularity itself or the orbit's seed.
    pub fn anchor(&self) -> Point {
        match &self.kind {
            ElementKind::Singularity { point } => *point,
            ElementKind::ClosedOrbit { seed, .. } => *seed,
        }
    }

    /// Points sampled on the element.
    pub fn points(&self) -> &[Point] {
        match &self.kind {
            ElementKind::Singularity { point } => std::slice::from_ref(point),
            ElementKind::ClosedOrbit { polyline, .. } => polyline,
        }
    }

    /// Distance from `p` to the element (to the closed polyline for orbits).
    pub fn distance_to(&self, surface: &Surface, p: Point) -> f64 {
        match &self.kind {
            ElementKind::Singularity { point } => surface.dist(*point, p),
            ElementKind::ClosedOrbit { polyline, .. } => polyline_distance(surface, polyline, p),
        }
    }

    /// Set distance between two elements.
    pub fn distance_between(&self, surface: &Surface, other: &CriticalElement) -> f64 {
        match (&self.kind, &other.kind) {
            (ElementKind::Singularity { point }, _) => other.distance_to(surface, *point),
            (_, ElementKind::Singularity { point }) => self.distance_to(surface, *point),
            _ => self
                .points()
                .iter()
                .map(|p| other.distance_to(surface, *p))
                .fold(f64::INFINITY, f64::min),
        }
    }

    pub fn label(&self) -> String {
        match &self.kind {
            ElementKind::Singularity { point } => format!("sing({:.4},{:.4})", point.x, point.y),
            ElementKind::ClosedOrbit { seed, period, .. } => {
                format!("orbit({:.4},{:.4};T={:.4})", seed.x, seed.y, period)
            }
        }
    }
}

/// Distance from `p` to a closed polyline, using minimum-image segments on the torus.
pub fn polyline_distance(surface: &Surface, line: &[Point], p: Point) -> f64 {
    let n = line.len();
    if n == 0 {
        return f64::INFINITY;
    }
    if n == 1 {
        return surface.dist(line[0], p);
    }
    let mut best = f64::INFINITY;
    for k in 0..n {
        let a = line[k];
        let b = line[(k + 1) % n];
        // Work in the chart centred at `a`.
        let ab = surface.displacement(a, b);
        let ap = surface.displacement(a, p);
        let len_sq = ab.norm_sq();
        let s = if len_sq > 0.0 {
            (ap.dot(ab) / len_sq).clamp(0.0, 1.0)
        } else {
            0.0
        };
        best = best.min((ap - ab * s).norm());
    }
    best
}

#[cfg(test)]
mod tests {
    use std::f64::consts::PI;

    use super::*;

    fn circle(r: f64, n: usize) -> Vec<Point> {
        (0..n)
            .map(|k| Point::polar(r, 2.0 * PI * k as f64 / n as f64))
            .collect()
    }

    #[test]
    fn distances_between_elements() {
        let s = Surface::square(3.0).unwrap();
        let origin = CriticalElement::singularity(Point::ORIGIN);
        let cycle = CriticalElement::closed_orbit(Point::new(1.0, 0.0), 2.0 * PI, circle(1.0, 720));
        assert!((origin.distance_between(&s, &cycle) - 1.0).abs() < 1e-4);
        assert!((cycle.distance_to(&s, Point::new(0.0, 1.5)) - 0.5).abs() < 1e-4);
        let other = CriticalElement::closed_orbit(Point::new(2.0, 0.0), 1.0, circle(2.0, 720));
        assert!((cycle.distance_between(&s, &other) - 1.0).abs() < 1e-4);
    }
}
