use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::Serialize;
use serde_json::Value;
use shadowlab::{CatalogField, Flow, Point, VectorField};

/// Everything needed to rerun an invocation; embedded in every artifact.
#[derive(Debug, Clone, Serialize)]
pub struct Scenario {
    pub operation: &'static str,
    pub field: VectorField,
    pub integrator: Integrator,
    /// Operation-specific parameters, as given or defaulted.
    pub params: Value,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub format: Format,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
    pub version: &'static str,
}

#[derive(Debug, Clone, Serialize)]
pub struct Integrator {
    pub method: &'static str,
    pub step: f64,
    pub horizon: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Json,
    Csv,
}

impl Scenario {
    pub fn new(operation: &'static str, flow: &Flow, params: Value, seed: Option<u64>, out: &Output) -> Self {
        Scenario {
            operation,
            field: flow.field.clone(),
            integrator: Integrator {
                method: "rk4",
                step: flow.step,
                horizon: flow.horizon,
            },
            params,
            seed,
            format: out.format,
            output: out.path.clone(),
            version: env!("CARGO_PKG_VERSION"),
        }
    }
}

/// Where and how results are written.
#[derive(Debug, Clone)]
pub struct Output {
    pub format: Format,
    pub path: Option<PathBuf>,
}

impl Output {
    pub fn write_json<T: Serialize>(&self, scenario: &Scenario, result: &T) -> Result<()> {
        if self.format != Format::Json {
            bail!("csv output is only available for threshold tables");
        }
        let doc = serde_json::json!({ "scenario": scenario, "result": result });
        let mut text = serde_json::to_string_pretty(&doc)?;
        text.push('\n');
        self.emit(&text)
    }

    pub fn write_text(&self, text: &str) -> Result<()> {
        self.emit(text)
    }

    fn emit(&self, text: &str) -> Result<()> {
        match &self.path {
            Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display())),
            None => {
                let mut out = std::io::stdout().lock();
                out.write_all(text.as_bytes())?;
                Ok(())
            }
        }
    }
}

/// A catalog name, or a JSON file holding a field (`{"spec": ..., "surface": ...}`).
pub fn load_field(spec: &str, reverse: bool, step: Option<f64>) -> Result<Flow> {
    let field = match spec.parse::<CatalogField>() {
        Ok(c) => VectorField::catalog(c),
        Err(e) => {
            let path = Path::new(spec);
            if !path.exists() {
                return Err(e.into());
            }
            let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            let field: VectorField =
                serde_json::from_str(&text).with_context(|| format!("parsing field file {}", path.display()))?;
            field.validate()?;
            field
        }
    };
    let field = if reverse { field.reversed() } else { field };
    let mut flow = Flow::new(field);
    if let Some(h) = step {
        flow = flow.with_step(h)?;
    }
    Ok(flow)
}

pub fn parse_point(s: &str) -> std::result::Result<Point, String> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    if parts.len() != 2 {
        return Err(format!("expected `x,y`, got `{s}`"));
    }
    let x: f64 = parts[0].parse().map_err(|e| format!("bad x in `{s}`: {e}"))?;
    let y: f64 = parts[1].parse().map_err(|e| format!("bad y in `{s}`: {e}"))?;
    Ok(Point::new(x, y))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn points() {
        assert_eq!(parse_point("0.5, -1").unwrap(), Point::new(0.5, -1.0));
        assert!(parse_point("1").is_err());
    }

    #[test]
    fn catalog_and_unknown_fields() {
        assert!(load_field("saddle", false, None).is_ok());
        let err = load_field("no_such_field", false, None).unwrap_err();
        assert!(err.to_string().contains("no_such_field"));
        assert!(load_field("sink", true, None).unwrap().field.reversed);
    }
}
