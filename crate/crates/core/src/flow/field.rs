use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::surface::Surface;
use crate::error::{Error, Result};
use crate::geom::Point;

/// Named fields with fixed closed-form formulas.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CatalogField {
    Sink,
    Source,
    Saddle,
    Center,
    Monkey,
    SaddleNode,
    LimitCycle,
    SemistableCycle,
    TorusGradient,
}

impl CatalogField {
    pub const ALL: [CatalogField; 9] = [
        CatalogField::Sink,
        CatalogField::Source,
        CatalogField::Saddle,
        CatalogField::Center,
        CatalogField::Monkey,
        CatalogField::SaddleNode,
        CatalogField::LimitCycle,
        CatalogField::SemistableCycle,
        CatalogField::TorusGradient,
    ];

    pub fn name(self) -> &'static str {
        match self {
            CatalogField::Sink => "sink",
            CatalogField::Source => "source",
            CatalogField::Saddle => "saddle",
            CatalogField::Center => "center",
            CatalogField::Monkey => "monkey",
            CatalogField::SaddleNode => "saddle_node",
            CatalogField::LimitCycle => "limit_cycle",
            CatalogField::SemistableCycle => "semistable_cycle",
            CatalogField::TorusGradient => "torus_gradient",
        }
    }

    /// Surface the field is defined on when none is given explicitly.
    pub fn default_surface(self) -> Surface {
        match self {
            CatalogField::TorusGradient => Surface::FlatTorus {
                periods: (2.0 * PI, 2.0 * PI),
            },
            _ => Surface::PlanePatch {
                min: Point::new(-2.0, -2.0),
                max: Point::new(2.0, 2.0),
            },
        }
    }

    #[inline]
    fn eval(self, p: Point) -> Point {
        let Point { x, y } = p;
        match self {
            CatalogField::Sink => Point::new(-x, -y),
            CatalogField::Source => Point::new(x, y),
            CatalogField::Saddle => Point::new(x, -y),
            CatalogField::Center => Point::new(-y, x),
            CatalogField::Monkey => Point::new(x * x - y * y, -2.0 * x * y),
            CatalogField::SaddleNode => Point::new(x * x, -y),
            CatalogField::LimitCycle => {
                let g = 1.0 - x.hypot(y);
                Point::new(x * g - y, y * g + x)
            }
            CatalogField::SemistableCycle => {
                let g = 1.0 - x.hypot(y);
                let g = g * g;
                Point::new(x * g - y, y * g + x)
            }
            CatalogField::TorusGradient => Point::new(x.sin(), y.sin()),
        }
    }
}

impl fmt::Display for CatalogField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for CatalogField {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        CatalogField::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| Error::UnknownField(s.to_string()))
    }
}

/// Factor applied to one coordinate inside a term.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Trig {
    #[default]
    One,
    Sin,
    Cos,
}

impl Trig {
    #[inline]
    fn apply(self, v: f64) -> f64 {
        match self {
            Trig::One => 1.0,
            Trig::Sin => v.sin(),
            Trig::Cos => v.cos(),
        }
    }
}

/// `coef * x^px * y^py * fx(x) * fy(y)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(from = "TermRepr")]
pub struct Term {
    pub coef: f64,
    pub px: u32,
    pub py: u32,
    #[serde(default)]
    pub fx: Trig,
    #[serde(default)]
    pub fy: Trig,
}

// Accepts the compact `[c, px, py]` form as well as the full object.
#[derive(Deserialize)]
#[serde(untagged)]
enum TermRepr {
    Monomial(f64, u32, u32),
    Full {
        coef: f64,
        #[serde(default)]
        px: u32,
        #[serde(default)]
        py: u32,
        #[serde(default)]
        fx: Trig,
        #[serde(default)]
        fy: Trig,
    },
}

impl From<TermRepr> for Term {
    fn from(r: TermRepr) -> Self {
        match r {
            TermRepr::Monomial(coef, px, py) => Term::monomial(coef, px, py),
            TermRepr::Full {
                coef,
                px,
                py,
                fx,
                fy,
            } => Term {
                coef,
                px,
                py,
                fx,
                fy,
            },
        }
    }
}

impl Term {
    pub fn monomial(coef: f64, px: u32, py: u32) -> Self {
        Term {
            coef,
            px,
            py,
            fx: Trig::One,
            fy: Trig::One,
        }
    }

    #[inline]
    fn eval(&self, p: Point) -> f64 {
        self.coef
            * p.x.powi(self.px as i32)
            * p.y.powi(self.py as i32)
            * self.fx.apply(p.x)
            * self.fy.apply(p.y)
    }
}

/// One term list per component.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TermTable {
    pub x: Vec<Term>,
    pub y: Vec<Term>,
}

impl TermTable {
    /// A scalar function given by a single term list, evaluated on the `x` slot.
    pub fn eval_scalar(terms: &[Term], p: Point) -> f64 {
        terms.iter().map(|t| t.eval(p)).sum()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum FieldSpec {
    Catalog(CatalogField),
    Table(TermTable),
}

impl fmt::Display for FieldSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FieldSpec::Catalog(c) => write!(f, "{c}"),
            FieldSpec::Table(t) => write!(f, "table({}+{} terms)", t.x.len(), t.y.len()),
        }
    }
}

/// A smooth vector field on a surface; `reversed` flips its sign (time reversal).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VectorField {
    pub spec: FieldSpec,
    pub surface: Surface,
    #[serde(default)]
    pub reversed: bool,
}

impl VectorField {
    pub fn catalog(c: CatalogField) -> Self {
        VectorField {
            spec: FieldSpec::Catalog(c),
            surface: c.default_surface(),
            reversed: false,
        }
    }

    pub fn named(name: &str) -> Result<Self> {
        Ok(Self::catalog(name.parse()?))
    }

    pub fn table(table: TermTable, surface: Surface) -> Result<Self> {
        let f = VectorField {
            spec: FieldSpec::Table(table),
            surface,
            reversed: false,
        };
        f.validate()?;
        Ok(f)
    }

    pub fn with_surface(mut self, surface: Surface) -> Result<Self> {
        surface.validate()?;
        self.surface = surface;
        Ok(self)
    }

    /// The time-reversed field `-f`.
    pub fn reversed(&self) -> Self {
        VectorField {
            reversed: !self.reversed,
            ..self.clone()
        }
    }

    pub fn catalog_name(&self) -> Option<CatalogField> {
        match self.spec {
            FieldSpec::Catalog(c) => Some(c),
            FieldSpec::Table(_) => None,
        }
    }

    /// Checks the surface and that the field is finite on a coarse grid of the domain.
    pub fn validate(&self) -> Result<()> {
        self.surface.validate()?;
        let (lo, hi) = self.surface.bounds();
        for i in 0..=16 {
            for j in 0..=16 {
                let p = Point::new(
                    lo.x + (hi.x - lo.x) * i as f64 / 16.0,
                    lo.y + (hi.y - lo.y) * j as f64 / 16.0,
                );
                if !self.eval(p).is_finite() {
                    return Err(Error::InvalidInput(format!(
                        "field {} is not finite at {p:?}",
                        self.spec
                    )));
                }
            }
        }
        Ok(())
    }

    #[inline]
    pub fn eval(&self, p: Point) -> Point {
        let v = match &self.spec {
            FieldSpec::Catalog(c) => c.eval(p),
            FieldSpec::Table(t) => Point::new(
                TermTable::eval_scalar(&t.x, p),
                TermTable::eval_scalar(&t.y, p),
            ),
        };
        if self.reversed {
            -v
        } else {
            v
        }
    }

    /// Central-difference Jacobian `[[dfx/dx, dfx/dy], [dfy/dx, dfy/dy]]`.
    pub fn jacobian(&self, p: Point) -> [[f64; 2]; 2] {
        let h = 1e-6 * (1.0 + p.norm());
        let dx = (self.eval(p + Point::new(h, 0.0)) - self.eval(p - Point::new(h, 0.0))) * (0.5 / h);
        let dy = (self.eval(p + Point::new(0.0, h)) - self.eval(p - Point::new(0.0, h))) * (0.5 / h);
        [[dx.x, dy.x], [dx.y, dy.y]]
    }

    pub fn describe(&self) -> String {
        if self.reversed {
            format!("reversed {}", self.spec)
        } else {
            self.spec.to_string()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn catalog_names_round_trip() {
        for c in CatalogField::ALL {
            assert_eq!(c.name().parse::<CatalogField>().unwrap(), c);
            let json = serde_json::to_string(&c).unwrap();
            assert_eq!(json, format!("\"{}\"", c.name()));
        }
        assert!("vortex".parse::<CatalogField>().is_err());
    }

    #[test]
    fn catalog_formulas() {
        let p = Point::new(0.5, -2.0);
        let f = |c| VectorField::catalog(c).eval(p);
        assert_eq!(f(CatalogField::Monkey), Point::new(0.25 - 4.0, 2.0));
        assert_eq!(f(CatalogField::SaddleNode), Point::new(0.25, 2.0));
        assert_eq!(f(CatalogField::Center), Point::new(2.0, 0.5));
        // Polar form of the limit cycle: r' = r(1-r), theta' = 1.
        let q = Point::polar(1.5, 0.3);
        let v = VectorField::catalog(CatalogField::LimitCycle).eval(q);
        let r_dot = v.dot(q) / q.norm();
        let theta_dot = q.cross(v) / q.norm_sq();
        assert!((r_dot - 1.5 * (1.0 - 1.5)).abs() < 1e-12);
        assert!((theta_dot - 1.0).abs() < 1e-12);
    }

    #[test]
    fn table_matches_catalog_and_parses_both_term_forms() {
        let json = r#"{"x": [[1, 2, 0], [-1, 0, 2]], "y": [{"coef": -2, "px": 1, "py": 1}]}"#;
        let table: TermTable = serde_json::from_str(json).unwrap();
        let custom = VectorField::table(table, Surface::square(2.0).unwrap()).unwrap();
        let monkey = VectorField::catalog(CatalogField::Monkey);
        for p in [Point::new(0.3, 0.7), Point::new(-1.1, 0.2)] {
            let d = custom.eval(p) - monkey.eval(p);
            assert!(d.norm() < 1e-14);
        }
    }

    #[test]
    fn trig_terms_and_reversal() {
        let json = r#"{"x": [{"coef": 1, "fx": "sin"}], "y": [{"coef": 1, "fy": "sin"}]}"#;
        let table: TermTable = serde_json::from_str(json).unwrap();
        let surface = Surface::torus(2.0 * PI, 2.0 * PI).unwrap();
        let f = VectorField::table(table, surface).unwrap();
        let g = VectorField::catalog(CatalogField::TorusGradient);
        let p = Point::new(1.0, 2.0);
        assert_eq!(f.eval(p), g.eval(p));
        assert_eq!(g.reversed().eval(p), -g.eval(p));
        assert_eq!(g.reversed().reversed(), g);
    }

    #[test]
    fn field_spec_serde_forms() {
        let f: VectorField = serde_json::from_str(
            r#"{"spec": "saddle", "surface": {"kind": "plane_patch", "min": [-1, -1], "max": [1, 1]}}"#,
        )
        .unwrap();
        assert_eq!(f.catalog_name(), Some(CatalogField::Saddle));
        assert!(!f.reversed);
    }

    #[test]
    fn jacobian_of_saddle() {
        let j = VectorField::catalog(CatalogField::Saddle).jacobian(Point::ORIGIN);
        assert!((j[0][0] - 1.0).abs() < 1e-8 && (j[1][1] + 1.0).abs() < 1e-8);
        assert!(j[0][1].abs() < 1e-8 && j[1][0].abs() < 1e-8);
    }
}
