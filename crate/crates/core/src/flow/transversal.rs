use serde::{Deserialize, Serialize};

use super::Flow;
use crate::error::{Error, Result};
use crate::geom::Point;

const MIN_SPEED: f64 = 1e-6;
const MIN_SINE: f64 = 0.1;
const SAMPLES: usize = 21;

/// A flow-box cross-section: a short segment through `center`, nowhere tangent to the field.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Transversal {
    pub center: Point,
    pub endpoints: (Point, Point),
    pub samples: Vec<Point>,
    pub flow_time_halfwidth: f64,
    /// Unit vector along the segment, from `endpoints.0` to `endpoints.1`.
    pub direction: Point,
    /// Unit field direction at the center; crossings are counted in this direction.
    pub normal: Point,
    pub half_length: f64,
}

impl Transversal {
    /// Signed coordinate of `p` along the segment (relative to the center).
    pub fn coord(&self, flow: &Flow, p: Point) -> f64 {
        flow.surface().displacement(self.center, p).dot(self.direction)
    }

    /// Signed height of `p` above the segment's line, in the field direction.
    pub fn height(&self, flow: &Flow, p: Point) -> f64 {
        flow.surface().displacement(self.center, p).dot(self.normal)
    }

    pub fn point_at(&self, s: f64) -> Point {
        self.center + self.direction * s
    }

    /// First crossing of the segment line from below to above (in field direction)
    /// within `|coord| <= half_length * reach`, after at least `min_time`.
    /// Returns (time, coordinate) with linear interpolation between steps.
    pub fn first_crossing(
        &self,
        flow: &Flow,
        x: Point,
        duration: f64,
        min_time: f64,
        reach: f64,
    ) -> Option<(f64, f64)> {
        let sign = duration.signum();
        let mut prev_t = 0.0;
        let mut prev_h = sign * self.height(flow, x);
        let mut prev_p = x;
        let mut hit = None;
        flow.walk(x, duration, |t, p| {
            let h = sign * self.height(flow, p);
            if t.abs() >= min_time && prev_h < 0.0 && h >= 0.0 {
                let w = prev_h / (prev_h - h);
                let q = prev_p + flow.surface().displacement(prev_p, p) * w;
                let s = self.coord(flow, q);
                if s.abs() <= self.half_length * reach {
                    hit = Some((prev_t + (t - prev_t) * w, s));
                    return false;
                }
            }
            prev_t = t;
            prev_h = h;
            prev_p = p;
            true
        });
        hit
    }
}

/// Builds a transversal through `x0` perpendicular to the field, shrinking it until the
/// field makes an angle with sine at least 0.1 everywhere along it, and picking the largest
/// flow-box half-time in `{1, 1/2, ...}` with no sample returning to the segment.
pub fn build_transversal(flow: &Flow, x0: Point, half_length: f64) -> Result<Transversal> {
    if !(half_length > 0.0) {
        return Err(Error::InvalidInput(format!("half_length must be positive, got {half_length}")));
    }
    let v = flow.velocity(x0);
    let speed = v.norm();
    if !(speed >= MIN_SPEED) {
        return Err(Error::NearSingularity { point: x0, speed });
    }
    let normal = v * (1.0 / speed);
    let direction = normal.perp();

    let mut len = half_length;
    let samples = loop {
        let samples: Vec<Point> = (0..SAMPLES)
            .map(|i| x0 + direction * (len * (2.0 * i as f64 / (SAMPLES - 1) as f64 - 1.0)))
            .collect();
        let ok = samples.iter().all(|p| {
            let f = flow.velocity(*p);
            let n = f.norm();
            n >= MIN_SPEED && (direction.cross(f) / n).abs() >= MIN_SINE
        });
        if ok {
            break samples;
        }
        len *= 0.5;
        if len < half_length * 1e-6 {
            return Err(Error::Transversal(format!(
                "field is tangent to every segment through {x0:?}"
            )));
        }
    };

    let mut t = Transversal {
        center: x0,
        endpoints: (samples[0], samples[SAMPLES - 1]),
        samples,
        flow_time_halfwidth: 0.0,
        direction,
        normal,
        half_length: len,
    };

    let mut tau: f64 = 1.0;
    while tau >= 1.0 / 1024.0 {
        let returns = t.samples.iter().any(|p| {
            // Skip the departure from the segment itself.
            let skip = 4.0 * flow.step;
            t.first_crossing(flow, *p, tau, skip, 1.0).is_some()
                || t.first_crossing(flow, *p, -tau, skip, 1.0).is_some()
        });
        if !returns {
            t.flow_time_halfwidth = tau;
            return Ok(t);
        }
        tau *= 0.5;
    }
    Err(Error::Transversal(format!(
        "no flow box around {x0:?}: orbits return to the segment immediately"
    )))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flow::CatalogField;

    #[test]
    fn saddle_transversal_is_vertical() {
        let flow = Flow::catalog(CatalogField::Saddle);
        let t = build_transversal(&flow, Point::new(1.0, 0.0), 0.2).unwrap();
        assert!(t.direction.x.abs() < 1e-12);
        assert!((t.endpoints.0.x - 1.0).abs() < 1e-12 && (t.endpoints.1.x - 1.0).abs() < 1e-12);
        assert!(t.flow_time_halfwidth > 0.0);
    }

    #[test]
    fn limit_cycle_transversal_is_radial() {
        let flow = Flow::catalog(CatalogField::LimitCycle);
        let t = build_transversal(&flow, Point::new(1.0, 0.0), 0.2).unwrap();
        assert!(t.direction.y.abs() < 1e-12);
        assert!((t.direction.x.abs() - 1.0).abs() < 1e-12);
        // One revolution takes 2 pi, so no return within the flow box.
        assert!(t.flow_time_halfwidth >= 1.0);
    }

    #[test]
    fn rejects_singularity() {
        let flow = Flow::catalog(CatalogField::Sink);
        let err = build_transversal(&flow, Point::ORIGIN, 0.1).unwrap_err();
        assert!(matches!(err, Error::NearSingularity { .. }));
        assert!(err.to_string().contains("near singularity"));
    }

    #[test]
    fn limit_cycle_returns_after_one_period() {
        let flow = Flow::catalog(CatalogField::LimitCycle);
        let t = build_transversal(&flow, Point::new(1.0, 0.0), 0.2).unwrap();
        let (time, s) = t.first_crossing(&flow, Point::new(1.0, 0.0), 10.0, 0.5, 1.0).unwrap();
        assert!((time - 2.0 * std::f64::consts::PI).abs() < 1e-3);
        assert!(s.abs() < 1e-6);
    }
}
