//! Surfaces, vector fields and their numerical flows.

mod field;
mod surface;
mod transversal;

pub use field::{CatalogField, FieldSpec, Term, TermTable, Trig, VectorField};
pub use surface::Surface;
pub use transversal::{build_transversal, Transversal};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::Point;

pub const DEFAULT_STEP: f64 = 1e-3;
pub const DEFAULT_GROUP_TOLERANCE: f64 = 1e-6;
pub const DEFAULT_HORIZON: f64 = 1e4;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Integrator {
    #[default]
    Rk4,
}

/// Numerical flow of a vector field: fixed-step RK4.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Flow {
    pub field: VectorField,
    #[serde(default)]
    pub integrator: Integrator,
    pub step: f64,
    pub group_tolerance: f64,
    pub horizon: f64,
}

/// Where a step-level walk stopped.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WalkEnd {
    /// Signed elapsed time.
    pub t: f64,
    pub point: Point,
    /// Exit time from the plane patch, if the orbit escaped (the point is then frozen on the boundary).
    pub escaped: Option<f64>,
    /// True when the visitor stopped the walk early.
    pub stopped: bool,
}

/// Sampled orbit arc `t -> phi(t, start)` on `[t_begin, t_end]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OrbitSegment {
    pub start: Point,
    pub t_begin: f64,
    pub t_end: f64,
    pub samples: Vec<(f64, Point)>,
    /// Escape time from the plane patch; later samples sit frozen on the boundary.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub escaped_at: Option<f64>,
}

impl OrbitSegment {
    pub fn points(&self) -> impl Iterator<Item = Point> + '_ {
        self.samples.iter().map(|s| s.1)
    }

    pub fn first(&self) -> Point {
        self.samples[0].1
    }

    pub fn last(&self) -> Point {
        self.samples[self.samples.len() - 1].1
    }

    /// Dense output by linear interpolation (minimum-image on the torus).
    pub fn at(&self, surface: &Surface, t: f64) -> Point {
        let s = &self.samples;
        if t <= s[0].0 {
            return s[0].1;
        }
        if t >= s[s.len() - 1].0 {
            return s[s.len() - 1].1;
        }
        let i = s.partition_point(|(ti, _)| *ti <= t).max(1) - 1;
        let (t0, p0) = s[i];
        let (t1, p1) = s[i + 1];
        let w = (t - t0) / (t1 - t0);
        surface.wrap(p0 + surface.displacement(p0, p1) * w)
    }
}

impl Flow {
    pub fn new(field: VectorField) -> Self {
        Flow {
            field,
            integrator: Integrator::Rk4,
            step: DEFAULT_STEP,
            group_tolerance: DEFAULT_GROUP_TOLERANCE,
            horizon: DEFAULT_HORIZON,
        }
    }

    pub fn catalog(c: CatalogField) -> Self {
        Self::new(VectorField::catalog(c))
    }

    pub fn named(name: &str) -> Result<Self> {
        Ok(Self::new(VectorField::named(name)?))
    }

    pub fn with_step(mut self, step: f64) -> Result<Self> {
        if !(step > 0.0 && step.is_finite()) {
            return Err(Error::InvalidInput(format!("integrator step must be positive, got {step}")));
        }
        self.step = step;
        Ok(self)
    }

    pub fn with_horizon(mut self, horizon: f64) -> Self {
        self.horizon = horizon;
        self
    }

    pub fn reversed(&self) -> Self {
        Flow {
            field: self.field.reversed(),
            ..self.clone()
        }
    }

    #[inline]
    pub fn surface(&self) -> &Surface {
        &self.field.surface
    }

    #[inline]
    pub fn velocity(&self, p: Point) -> Point {
        self.field.eval(p)
    }

    #[inline]
    pub fn dist(&self, a: Point, b: Point) -> f64 {
        self.field.surface.dist(a, b)
    }

    #[inline]
    fn rk4(&self, p: Point, h: f64) -> Point {
        let f = &self.field;
        let k1 = f.eval(p);
        let k2 = f.eval(p + k1 * (0.5 * h));
        let k3 = f.eval(p + k2 * (0.5 * h));
        let k4 = f.eval(p + k3 * h);
        p + (k1 + (k2 + k3) * 2.0 + k4) * (h / 6.0)
    }

    /// Integrates for signed time `duration` with at most `step`-sized substeps,
    /// calling `visit(t, p)` after every substep; the walk stops when `visit` returns false.
    ///
    /// Points are not wrapped on the torus (the field is periodic); on a plane patch the walk
    /// ends at the first substep outside the patch with the point clamped onto the boundary.
    pub fn walk_with_step<F>(&self, x: Point, duration: f64, step: f64, mut visit: F) -> WalkEnd
    where
        F: FnMut(f64, Point) -> bool,
    {
        let n = (duration.abs() / step).ceil() as usize;
        if n == 0 {
            return WalkEnd {
                t: 0.0,
                point: x,
                escaped: None,
                stopped: false,
            };
        }
        let h = duration / n as f64;
        let surface = self.field.surface;
        let mut p = x;
        for i in 1..=n {
            let q = self.rk4(p, h);
            let t = if i == n { duration } else { h * i as f64 };
            if !surface.contains(q) {
                return WalkEnd {
                    t,
                    point: surface.clamp(q),
                    escaped: Some(t),
                    stopped: false,
                };
            }
            p = q;
            if !visit(t, p) {
                return WalkEnd {
                    t,
                    point: p,
                    escaped: None,
                    stopped: true,
                };
            }
        }
        WalkEnd {
            t: duration,
            point: p,
            escaped: None,
            stopped: false,
        }
    }

    pub fn walk<F>(&self, x: Point, duration: f64, visit: F) -> WalkEnd
    where
        F: FnMut(f64, Point) -> bool,
    {
        self.walk_with_step(x, duration, self.step, visit)
    }

    /// `phi(t, x)`. Errors if `|t|` exceeds the horizon or the orbit leaves a plane patch.
    pub fn flow_map(&self, t: f64, x: Point) -> Result<Point> {
        if !t.is_finite() || t.abs() > self.horizon {
            return Err(Error::HorizonExceeded {
                t,
                horizon: self.horizon,
            });
        }
        if t == 0.0 {
            return Ok(x);
        }
        let end = self.walk(x, t, |_, _| true);
        match end.escaped {
            Some(time) => Err(Error::EscapedDomain {
                time,
                point: end.point,
            }),
            None => Ok(self.field.surface.wrap(end.point)),
        }
    }

    /// `phi(t, x)` with the plane patch acting as an absorbing boundary.
    pub fn flow_map_clamped(&self, t: f64, x: Point) -> Point {
        if t == 0.0 {
            return x;
        }
        self.field.surface.wrap(self.walk(x, t, |_, _| true).point)
    }

    /// Samples `phi(t, x)` on the grid `t_begin, t_begin + dt, ...` up to `t_end`.
    ///
    /// The grid always includes both endpoints; each grid interval is integrated in whole
    /// substeps so that samples are exact RK4 states, not interpolants.
    pub fn sample_orbit(&self, x: Point, t_begin: f64, t_end: f64, dt: f64) -> Result<OrbitSegment> {
        if !(t_begin <= t_end) || !(dt > 0.0) {
            return Err(Error::InvalidInput(format!(
                "bad sampling window [{t_begin}, {t_end}] with dt {dt}"
            )));
        }
        if t_begin.abs().max(t_end.abs()) > self.horizon {
            return Err(Error::HorizonExceeded {
                t: t_begin.abs().max(t_end.abs()),
                horizon: self.horizon,
            });
        }
        let surface = self.field.surface;
        let (mut p, mut escaped_at) = {
            let end = self.walk(x, t_begin, |_, _| true);
            (end.point, end.escaped)
        };
        let m = ((t_end - t_begin) / dt - 1e-9).ceil().max(0.0) as usize;
        let mut samples = Vec::with_capacity(m + 1);
        samples.push((t_begin, surface.wrap(p)));
        let mut t = t_begin;
        for k in 1..=m {
            let tk = if k == m { t_end } else { t_begin + dt * k as f64 };
            if escaped_at.is_none() {
                let end = self.walk(p, tk - t, |_, _| true);
                if let Some(e) = end.escaped {
                    escaped_at = Some(t + e);
                }
                p = end.point;
            }
            t = tk;
            samples.push((t, surface.wrap(p)));
        }
        Ok(OrbitSegment {
            start: x,
            t_begin,
            t_end,
            samples,
            escaped_at,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sink_closed_form() {
        let flow = Flow::catalog(CatalogField::Sink);
        let p = flow.flow_map(2f64.ln(), Point::new(1.0, 0.0)).unwrap();
        assert!((p - Point::new(0.5, 0.0)).norm() < 1e-6);
    }

    #[test]
    fn saddle_closed_form() {
        let flow = Flow::catalog(CatalogField::Saddle);
        let p = flow.flow_map(1.0, Point::new(0.0, 1.0)).unwrap();
        assert!((p - Point::new(0.0, (-1f64).exp())).norm() < 1e-6);
    }

    #[test]
    fn zero_time_is_exact_identity() {
        let flow = Flow::catalog(CatalogField::Monkey);
        let x = Point::new(0.123456789, -1.5);
        assert_eq!(flow.flow_map(0.0, x).unwrap(), x);
    }

    #[test]
    fn escape_and_horizon_errors() {
        let flow = Flow::catalog(CatalogField::Source);
        match flow.flow_map(5.0, Point::new(1.0, 0.0)) {
            Err(Error::EscapedDomain { time, .. }) => assert!((time - 2f64.ln()).abs() < 2e-3),
            other => panic!("expected escape, got {other:?}"),
        }
        let flow = flow.with_horizon(10.0);
        assert!(matches!(
            flow.flow_map(11.0, Point::ORIGIN),
            Err(Error::HorizonExceeded { .. })
        ));
    }

    #[test]
    fn torus_output_is_wrapped() {
        let flow = Flow::catalog(CatalogField::TorusGradient);
        let p = flow.flow_map(3.0, Point::new(-0.5, 7.0)).unwrap();
        let (lo, hi) = flow.surface().bounds();
        assert!(p.x >= lo.x && p.x < hi.x && p.y >= lo.y && p.y < hi.y);
    }

    #[test]
    fn sampled_orbit_hits_grid_exactly() {
        let flow = Flow::catalog(CatalogField::Sink);
        let seg = flow.sample_orbit(Point::new(0.5, 0.5), -1.0, 2.0, 0.25).unwrap();
        assert_eq!(seg.samples.len(), 13);
        assert_eq!(seg.samples[0].0, -1.0);
        assert_eq!(seg.samples[12].0, 2.0);
        for (t, p) in &seg.samples {
            assert!((p.x - 0.5 * (-t).exp()).abs() < 1e-9);
        }
        let mid = seg.at(flow.surface(), 0.1);
        assert!((mid.x - 0.5 * (-0.1f64).exp()).abs() < 1e-2);
    }

    #[test]
    fn escaped_samples_freeze() {
        let flow = Flow::catalog(CatalogField::Source);
        let seg = flow.sample_orbit(Point::new(1.0, 0.0), 0.0, 2.0, 0.5).unwrap();
        assert!(seg.escaped_at.is_some());
        assert_eq!(seg.last(), Point::new(2.0, 0.0));
    }
}
