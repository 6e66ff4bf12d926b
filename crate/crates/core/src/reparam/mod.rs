//! Piecewise-linear time changes (`Rep`, `Rep(eps)`) and the shadowing verifiers built on
//! minimax monotone alignment.

pub mod align;
mod verify;

use std::cmp::Ordering;
use std::fmt::Debug;

use num_traits::{Num, ToPrimitive};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use verify::{
    candidate_points, cost_grid, random_trial, threshold_curve, upgrade_to_standard, verify_curve,
    verify_shadowing, Mode, SearchConfig, SearchStats, ShadowingResult, ThresholdRow, UpgradeOutcome,
};

/// Scalars a reparametrization can be built over (`f64`, exact rationals).
pub trait Scalar: Num + Clone + PartialOrd + Debug {}

impl<T: Num + Clone + PartialOrd + Debug> Scalar for T {}

fn cmp<S: PartialOrd>(a: &S, b: &S) -> Ordering {
    a.partial_cmp(b).unwrap_or(Ordering::Equal)
}

/// An increasing piecewise-linear bijection of the line, given by knots `(t, h(t))` and
/// linear extension with separate end slopes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Reparametrization<S = f64> {
    knots: Vec<(S, S)>,
    left_slope: S,
    right_slope: S,
}

impl<S: Scalar> Reparametrization<S> {
    pub fn new(knots: Vec<(S, S)>, left_slope: S, right_slope: S) -> Result<Self> {
        if knots.is_empty() {
            return Err(Error::NonMonotone("no knots".into()));
        }
        for (k, w) in knots.windows(2).enumerate() {
            if !(w[1].0 > w[0].0 && w[1].1 > w[0].1) {
                return Err(Error::NonMonotone(format!("knots {k} and {} are not increasing", k + 1)));
            }
        }
        if !(left_slope > S::zero() && right_slope > S::zero()) {
            return Err(Error::NonMonotone("end slopes must be positive".into()));
        }
        Ok(Reparametrization {
            knots,
            left_slope,
            right_slope,
        })
    }

    /// Knots only; the ends continue with the first and last segment slopes.
    pub fn from_knots(knots: Vec<(S, S)>) -> Result<Self> {
        if knots.len() < 2 {
            return Self::new(knots, S::one(), S::one());
        }
        let n = knots.len();
        let left = segment_slope(&knots[0], &knots[1]);
        let right = segment_slope(&knots[n - 2], &knots[n - 1]);
        Self::new(knots, left, right)
    }

    pub fn identity() -> Self {
        Reparametrization {
            knots: vec![(S::zero(), S::zero())],
            left_slope: S::one(),
            right_slope: S::one(),
        }
    }

    /// `t -> slope * t`.
    pub fn linear(slope: S) -> Result<Self> {
        Self::new(vec![(S::zero(), S::zero())], slope.clone(), slope)
    }

    pub fn knots(&self) -> &[(S, S)] {
        &self.knots
    }

    pub fn end_slopes(&self) -> (S, S) {
        (self.left_slope.clone(), self.right_slope.clone())
    }

    pub fn eval(&self, t: &S) -> S {
        eval_pl(&self.knots, &self.left_slope, &self.right_slope, t, |k| (&k.0, &k.1))
    }

    pub fn eval_inverse(&self, h: &S) -> S {
        let left = S::one() / self.left_slope.clone();
        let right = S::one() / self.right_slope.clone();
        eval_pl(&self.knots, &left, &right, h, |k| (&k.1, &k.0))
    }

    /// All slopes: end slopes and every segment slope.
    pub fn slopes(&self) -> Vec<S> {
        let mut out = vec![self.left_slope.clone()];
        out.extend(self.knots.windows(2).map(|w| segment_slope(&w[0], &w[1])));
        out.push(self.right_slope.clone());
        out
    }

    /// `(min, max)` over all slopes.
    pub fn slope_range(&self) -> (S, S) {
        let s = self.slopes();
        let lo = s.iter().min_by(|a, b| cmp(*a, *b)).cloned().unwrap();
        let hi = s.iter().max_by(|a, b| cmp(*a, *b)).cloned().unwrap();
        (lo, hi)
    }

    /// Membership in `Rep(eps)`: every chord slope lies in `(1 - eps, 1 + eps)`.
    ///
    /// For a piecewise-linear map the chord slopes are averages of segment slopes, so
    /// checking segments and end slopes is equivalent.
    pub fn is_member(&self, eps: &S) -> bool {
        let lo = S::one() - eps.clone();
        let hi = S::one() + eps.clone();
        self.slopes().iter().all(|s| *s > lo && *s < hi)
    }

    /// `self ∘ other`, i.e. `t -> self(other(t))`.
    pub fn compose(&self, other: &Self) -> Self {
        let mut ts: Vec<S> = other.knots.iter().map(|k| k.0.clone()).collect();
        ts.extend(self.knots.iter().map(|k| other.eval_inverse(&k.0)));
        ts.sort_by(cmp);
        ts.dedup_by(|a, b| a == b);
        let knots = ts
            .into_iter()
            .map(|t| {
                let h = self.eval(&other.eval(&t));
                (t, h)
            })
            .collect();
        Reparametrization {
            knots,
            left_slope: self.left_slope.clone() * other.left_slope.clone(),
            right_slope: self.right_slope.clone() * other.right_slope.clone(),
        }
    }

    pub fn invert(&self) -> Self {
        Reparametrization {
            knots: self.knots.iter().map(|(t, h)| (h.clone(), t.clone())).collect(),
            left_slope: S::one() / self.left_slope.clone(),
            right_slope: S::one() / self.right_slope.clone(),
        }
    }
}

impl<S: Scalar + ToPrimitive> Reparametrization<S> {
    pub fn to_f64(&self) -> Reparametrization<f64> {
        let f = |s: &S| s.to_f64().unwrap_or(f64::NAN);
        Reparametrization {
            knots: self.knots.iter().map(|(t, h)| (f(t), f(h))).collect(),
            left_slope: f(&self.left_slope),
            right_slope: f(&self.right_slope),
        }
    }
}

fn segment_slope<S: Scalar>(a: &(S, S), b: &(S, S)) -> S {
    (b.1.clone() - a.1.clone()) / (b.0.clone() - a.0.clone())
}

fn eval_pl<S: Scalar, F>(knots: &[(S, S)], left: &S, right: &S, x: &S, key: F) -> S
where
    F: for<'b> Fn(&'b (S, S)) -> (&'b S, &'b S),
{
    let (x0, y0) = key(&knots[0]);
    if *x <= *x0 {
        return y0.clone() + left.clone() * (x.clone() - x0.clone());
    }
    let (xn, yn) = key(&knots[knots.len() - 1]);
    if *x >= *xn {
        return yn.clone() + right.clone() * (x.clone() - xn.clone());
    }
    let i = knots.partition_point(|k| *key(k).0 <= *x) - 1;
    let (xa, ya) = key(&knots[i]);
    let (xb, yb) = key(&knots[i + 1]);
    ya.clone() + (yb.clone() - ya.clone()) * (x.clone() - xa.clone()) / (xb.clone() - xa.clone())
}
