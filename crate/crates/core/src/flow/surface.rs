use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::Point;

/// The phase space: a rectangular chart of the plane, or a flat torus.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Surface {
    /// Non-compact chart; orbits leaving the rectangle are absorbed on its boundary.
    PlanePatch { min: Point, max: Point },
    /// `R^2` modulo the lattice generated by `(periods.0, 0)` and `(0, periods.1)`.
    FlatTorus { periods: (f64, f64) },
}

impl Surface {
    pub fn plane(min: Point, max: Point) -> Result<Self> {
        let s = Surface::PlanePatch { min, max };
        s.validate()?;
        Ok(s)
    }

    pub fn square(half_width: f64) -> Result<Self> {
        Self::plane(
            Point::new(-half_width, -half_width),
            Point::new(half_width, half_width),
        )
    }

    pub fn torus(px: f64, py: f64) -> Result<Self> {
        let s = Surface::FlatTorus { periods: (px, py) };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            Surface::PlanePatch { min, max } => {
                let w = max.x - min.x;
                let h = max.y - min.y;
                if !(w > 0.0 && h > 0.0 && w.is_finite() && h.is_finite()) {
                    return Err(Error::InvalidInput(format!(
                        "plane patch must have positive area, got {min:?}..{max:?}"
                    )));
                }
            }
            Surface::FlatTorus { periods: (px, py) } => {
                if !(px > 0.0 && py > 0.0 && px.is_finite() && py.is_finite()) {
                    return Err(Error::InvalidInput(format!(
                        "torus periods must be positive, got ({px}, {py})"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn is_torus(&self) -> bool {
        matches!(self, Surface::FlatTorus { .. })
    }

    /// Shortest displacement from `a` to `b`.
    ///
    /// On the torus this is the minimum-image vector over the period lattice.
    #[inline]
    pub fn displacement(&self, a: Point, b: Point) -> Point {
        let mut d = b - a;
        if let Surface::FlatTorus { periods: (px, py) } = *self {
            d.x -= px * (d.x / px).round();
            d.y -= py * (d.y / py).round();
        }
        d
    }

    #[inline]
    pub fn dist(&self, a: Point, b: Point) -> f64 {
        self.displacement(a, b).norm()
    }

    /// Canonical representative: wrapped into `[0, p)` on the torus, identity on the plane.
    #[inline]
    pub fn wrap(&self, p: Point) -> Point {
        match *self {
            Surface::FlatTorus { periods: (px, py) } => {
                Point::new(p.x.rem_euclid(px), p.y.rem_euclid(py))
            }
            Surface::PlanePatch { .. } => p,
        }
    }

    #[inline]
    pub fn contains(&self, p: Point) -> bool {
        match *self {
            Surface::PlanePatch { min, max } => {
                p.x >= min.x && p.x <= max.x && p.y >= min.y && p.y <= max.y
            }
            Surface::FlatTorus { .. } => p.is_finite(),
        }
    }

    /// Nearest point of the patch (identity on the torus).
    pub fn clamp(&self, p: Point) -> Point {
        match *self {
            Surface::PlanePatch { min, max } => {
                Point::new(p.x.clamp(min.x, max.x), p.y.clamp(min.y, max.y))
            }
            Surface::FlatTorus { .. } => self.wrap(p),
        }
    }

    /// Bounding box of the fundamental domain.
    pub fn bounds(&self) -> (Point, Point) {
        match *self {
            Surface::PlanePatch { min, max } => (min, max),
            Surface::FlatTorus { periods: (px, py) } => (Point::ORIGIN, Point::new(px, py)),
        }
    }

    /// Human-readable description of the metric, embedded in artifacts.
    pub fn metric_name(&self) -> String {
        match *self {
            Surface::PlanePatch { .. } => "euclidean".to_string(),
            Surface::FlatTorus { periods: (px, py) } => {
                format!("flat torus, minimum image over periods ({px}, {py})")
            }
        }
    }
}
