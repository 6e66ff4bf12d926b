use serde::{Deserialize, Serialize};

use super::element::{CriticalElement, ElementKind, Stability};
use crate::error::{Error, Result};
use crate::flow::{build_transversal, Flow, Transversal};
use crate::sectors::Direction;

/// First-return map on a transversal through a closed orbit, in transversal coordinates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PoincareMap {
    pub transversal: Transversal,
    /// Which map was sampled: forward returns, or backward returns (the inverse map).
    pub direction: Direction,
    /// `(s, P(s))` sorted by `s`.
    pub samples: Vec<(f64, f64)>,
    /// Coordinate of the closed orbit on the transversal.
    pub fixed_point: f64,
    /// `|P(fixed_point) - fixed_point|`.
    pub residual: f64,
    /// Largest offset sampled.
    pub delta0: f64,
}

impl PoincareMap {
    pub fn is_increasing(&self) -> bool {
        self.samples.windows(2).all(|w| w[1].1 > w[0].1)
    }

    pub fn is_decreasing(&self) -> bool {
        self.samples.windows(2).all(|w| w[1].1 < w[0].1)
    }

    pub fn is_monotone(&self) -> bool {
        self.is_increasing() || self.is_decreasing()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Drift {
    Toward,
    Away,
    Mixed,
}

fn side_drift(samples: &[(f64, f64)], a0: f64, positive: bool) -> Drift {
    let mut toward = 0;
    let mut away = 0;
    for &(s, p) in samples {
        let off = s - a0;
        if (off > 0.0) != positive || off == 0.0 {
            continue;
        }
        if (p - a0).abs() < off.abs() && (p - a0) * off >= 0.0 {
            toward += 1;
        } else if (p - a0).abs() > off.abs() {
            away += 1;
        } else if (p - a0) * off < 0.0 {
            // Crossed to the other side: only possible for orientation-reversing maps.
            return Drift::Mixed;
        }
    }
    match (toward, away) {
        (t, 0) if t > 0 => Drift::Toward,
        (0, a) if a > 0 => Drift::Away,
        _ => Drift::Mixed,
    }
}

/// Samples the return map at offsets `a0 + sign * delta0 * 2^-k`; `None` if any return fails.
fn sample_map(flow: &Flow, tr: &Transversal, period: f64, dir: Direction, a0: f64, delta0: f64, twice: bool) -> Option<Vec<(f64, f64)>> {
    let duration = match dir {
        Direction::Forward => 3.0 * period,
        Direction::Backward => -3.0 * period,
    };
    let ret = |s: f64| -> Option<f64> {
        let (_, p) = tr.first_crossing(flow, tr.point_at(s), duration, 0.5 * period, 1.0)?;
        Some(p)
    };
    let mut out = Vec::new();
    for k in 0..6 {
        for sign in [-1.0, 1.0] {
            let s = a0 + sign * delta0 * 0.5f64.powi(k);
            let mut p = ret(s)?;
            if twice {
                p = ret(p)?;
            }
            out.push((s, p));
        }
    }
    out.sort_by(|a, b| a.0.total_cmp(&b.0));
    Some(out)
}

/// Stability of a closed orbit from its return map.
///
/// Both sides of the orbit are sampled on a geometric ladder of offsets. An increasing map
/// that pulls both sides in is `Stable`, one that pushes both out is `Unstable`, and one
/// that moves both sides the same way across the orbit is `SemiStable`. Decreasing maps are
/// analysed through their second iterate. When forward returns leave the transversal the
/// backward (inverse) map is used instead, and the verdict flipped.
pub fn classify_closed_orbit(flow: &Flow, orbit: &CriticalElement) -> Result<(Stability, PoincareMap)> {
    let ElementKind::ClosedOrbit { seed, period, .. } = &orbit.kind else {
        return Err(Error::InvalidInput(format!("{} is not a closed orbit", orbit.label())));
    };
    let (seed, period) = (*seed, *period);
    let mut half = 0.2;
    for _ in 0..4 {
        let tr = build_transversal(flow, seed, half)?;
        let mut delta0 = 0.25 * tr.half_length;
        for _ in 0..6 {
            for dir in [Direction::Forward, Direction::Backward] {
                let Some(samples) = sample_map(flow, &tr, period, dir, 0.0, delta0, false) else {
                    continue;
                };
                let mut map = PoincareMap {
                    transversal: tr.clone(),
                    direction: dir,
                    samples,
                    fixed_point: 0.0,
                    residual: 0.0,
                    delta0,
                };
                if !map.is_monotone() {
                    continue;
                }
                let duration = match dir {
                    Direction::Forward => 3.0 * period,
                    Direction::Backward => -3.0 * period,
                };
                map.residual = tr
                    .first_crossing(flow, tr.point_at(0.0), duration, 0.5 * period, 1.0)
                    .map_or(f64::INFINITY, |(_, p)| p.abs());
                let analysed = if map.is_increasing() {
                    map.samples.clone()
                } else {
                    match sample_map(flow, &tr, period, dir, 0.0, delta0, true) {
                        Some(s) => s,
                        None => continue,
                    }
                };
                let up = side_drift(&analysed, 0.0, true);
                let down = side_drift(&analysed, 0.0, false);
                let forward = match (up, down) {
                    (Drift::Toward, Drift::Toward) => Stability::Stable,
                    (Drift::Away, Drift::Away) => Stability::Unstable,
                    (Drift::Toward, Drift::Away) | (Drift::Away, Drift::Toward) => Stability::SemiStable,
                    _ => {
                        return Err(Error::Inconclusive(format!(
                            "return map of {} has no consistent drift at offset {delta0:.2e}",
                            orbit.label()
                        )))
                    }
                };
                let stability = match (dir, forward) {
                    (Direction::Backward, Stability::Stable) => Stability::Unstable,
                    (Direction::Backward, Stability::Unstable) => Stability::Stable,
                    (_, s) => s,
                };
                return Ok((stability, map));
            }
            delta0 *= 0.25;
        }
        half *= 0.5;
    }
    Err(Error::Inconclusive(format!(
        "return map of {} not monotone on any sampled scale",
        orbit.label()
    )))
}

#[cfg(test)]
mod tests {
    use std::f64::consts::{PI, TAU};

    use super::*;
    use crate::flow::CatalogField;
    use crate::geom::Point;

    fn unit_circle() -> CriticalElement {
        let line = (0..400).map(|k| Point::polar(1.0, TAU * k as f64 / 400.0)).collect();
        CriticalElement::closed_orbit(Point::new(1.0, 0.0), 2.0 * PI, line)
    }

    #[test]
    fn limit_cycle_stable_and_reversal_unstable() {
        let flow = Flow::catalog(CatalogField::LimitCycle);
        let (s, map) = classify_closed_orbit(&flow, &unit_circle()).unwrap();
        assert_eq!(s, Stability::Stable);
        assert!(map.is_increasing());
        assert!(map.residual < 1e-6);
        let (s, _) = classify_closed_orbit(&flow.reversed(), &unit_circle()).unwrap();
        assert_eq!(s, Stability::Unstable);
    }

    #[test]
    fn semistable_cycle() {
        let flow = Flow::catalog(CatalogField::SemistableCycle);
        let (s, map) = classify_closed_orbit(&flow, &unit_circle()).unwrap();
        assert_eq!(s, Stability::SemiStable);
        // Both sides drift outward along the radius.
        let t = map.transversal.direction;
        for (a, p) in &map.samples {
            let r0 = (map.transversal.center + t * *a).norm();
            let r1 = (map.transversal.center + t * *p).norm();
            assert!(r1 > r0, "{a} -> {p}");
        }
    }
}
