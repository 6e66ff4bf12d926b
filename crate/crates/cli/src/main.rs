mod scenario;

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::{json, Value};
use shadowlab::critical::{
    check_no_cycles, classify_elements, connection_graph, find_critical_elements, ElementKind, GraphConfig, SearchGrid,
};
use shadowlab::pseudo::derive_config;
use shadowlab::reparam::threshold_curve;
use shadowlab::sectors::{classify_singularity, DiskNeighborhood};
use shadowlab::witnesses::{
    confirm_failure, confirm_search, multisector_witness, parabolic_witness, self_connection_witness,
    semistable_cycle_witness, Construction, FailureReport, LoopData, Witness,
};
use shadowlab::{verify_shadowing, Flow, Mode, Point, Pseudotrajectory, SearchConfig};

use scenario::{load_field, parse_point, Format, Output, Scenario};

/// Shadowing experiments on planar and toroidal flows.
#[derive(Debug, Parser)]
#[command(name = "shadowlab", version)]
struct Cli {
    /// Output format; csv is only available for threshold tables.
    #[arg(long, global = true, value_enum, default_value = "json")]
    format: Format,
    /// Write the artifact here instead of stdout.
    #[arg(long, short, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args, Serialize)]
struct FieldArgs {
    /// Catalog name or path to a field JSON file.
    #[arg(long)]
    field: String,
    /// Use the time-reversed field.
    #[arg(long)]
    reverse: bool,
    /// Integrator step.
    #[arg(long)]
    step: Option<f64>,
}

impl FieldArgs {
    fn flow(&self) -> Result<Flow> {
        load_field(&self.field, self.reverse, self.step)
    }
}

#[derive(Debug, Args, Serialize)]
struct SearchArgs {
    /// Candidate grid points per axis.
    #[arg(long)]
    grid: Option<usize>,
    /// Curve sampling step.
    #[arg(long)]
    dt: Option<f64>,
    /// Orbit samples per curve sample.
    #[arg(long)]
    q: Option<usize>,
    /// Candidate ball radius.
    #[arg(long)]
    search_radius: Option<f64>,
    /// Largest DP lattice per candidate.
    #[arg(long)]
    cell_budget: Option<u64>,
}

impl SearchArgs {
    fn apply(&self, mut s: SearchConfig) -> SearchConfig {
        if let Some(g) = self.grid {
            s.grid = g;
        }
        if let Some(dt) = self.dt {
            s.dt = dt;
        }
        if let Some(q) = self.q {
            s.q = q;
        }
        if self.search_radius.is_some() {
            s.radius = self.search_radius;
        }
        if let Some(b) = self.cell_budget {
            s.cell_budget = b;
        }
        s
    }
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum ModeArg {
    Oriented,
    Standard,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Sector decomposition of a singularity.
    Classify {
        #[command(flatten)]
        field: FieldArgs,
        #[arg(long, value_parser = parse_point, default_value = "0,0")]
        center: Point,
        #[arg(long, default_value_t = 0.5)]
        radius: f64,
        /// Boundary samples.
        #[arg(long, default_value_t = 720)]
        samples: usize,
    },
    /// Shadowing search for a pseudotrajectory or witness file.
    Shadow {
        #[command(flatten)]
        field: FieldArgs,
        /// Pseudotrajectory JSON, or a witness artifact.
        #[arg(long)]
        pseudo: PathBuf,
        #[arg(long, value_enum)]
        mode: ModeArg,
        /// Target accuracy; defaults to a witness's eps_claim.
        #[arg(long)]
        eps: Option<f64>,
        #[command(flatten)]
        search: SearchArgs,
    },
    /// Builds a pseudotrajectory that defeats oriented shadowing.
    Witness {
        #[command(flatten)]
        field: FieldArgs,
        /// self-connection, parabolic, multisector or semistable.
        #[arg(long)]
        kind: String,
        #[arg(long)]
        d: f64,
        /// Singularity the construction is built around.
        #[arg(long, value_parser = parse_point, default_value = "0,0")]
        center: Point,
        /// Disk radius around the singularity.
        #[arg(long, default_value_t = 0.5)]
        radius: f64,
        /// Loop point for the self-connection construction.
        #[arg(long, value_parser = parse_point)]
        loop_point: Option<Point>,
        /// Also run the oriented verifier against it.
        #[arg(long)]
        confirm: bool,
        #[command(flatten)]
        search: SearchArgs,
    },
    /// Critical elements and the connections between them.
    Graph {
        #[command(flatten)]
        field: FieldArgs,
        /// Print DOT text instead of JSON.
        #[arg(long)]
        dot: bool,
    },
    /// Largest jump size at which random pseudotrajectories are still shadowed.
    Threshold {
        #[command(flatten)]
        field: FieldArgs,
        #[arg(long, value_delimiter = ',', required = true)]
        eps_list: Vec<f64>,
        #[arg(long, default_value_t = 20)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Blocks per random pseudotrajectory.
        #[arg(long, default_value_t = 8)]
        blocks: usize,
        /// Threshold for oriented instead of standard shadowing.
        #[arg(long)]
        oriented: bool,
        #[command(flatten)]
        search: SearchArgs,
    },
    /// Derived reduction constants (eps0, T0, trap set).
    ConfigDerive {
        #[command(flatten)]
        field: FieldArgs,
    },
}

fn init_threads() -> Result<()> {
    if let Ok(v) = std::env::var("SHADOWLAB_THREADS") {
        let n: usize = v
            .parse()
            .with_context(|| format!("SHADOWLAB_THREADS must be a positive integer, got `{v}`"))?;
        if n == 0 {
            bail!("SHADOWLAB_THREADS must be positive");
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    Ok(())
}

fn params<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).unwrap_or(Value::Null)
}

fn classify(out: &Output, field: &FieldArgs, center: Point, radius: f64, samples: usize) -> Result<()> {
    let flow = field.flow()?;
    let disk = DiskNeighborhood::new(center, radius).with_samples(samples);
    let report = classify_singularity(&flow, &disk)?;
    let rays: Vec<Value> = report
        .rays
        .iter()
        .map(|r| json!({ "sign": r.sign, "angle": r.angle, "boundary_point": r.boundary_point }))
        .collect();
    let result = json!({
        "p": report.p,
        "radius": report.radius,
        "verdict": report.verdict,
        "verdict_label": format!("{:?}", report.verdict),
        "sectors": report.sectors,
        "rays": rays,
        "continua": report.continua,
        "inconclusive_rays": report.inconclusive_rays,
    });
    let scenario = Scenario::new(
        "classify",
        &flow,
        json!({ "field": params(field), "center": center, "radius": radius, "samples": samples }),
        None,
        out,
    );
    out.write_json(&scenario, &result)
}

/// What a `--pseudo` file may hold.
struct PseudoInput {
    xi: Pseudotrajectory,
    witness: Option<Witness>,
    /// The search a witness artifact was confirmed with.
    search: Option<SearchConfig>,
}

fn read_pseudo(path: &PathBuf) -> Result<PseudoInput> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let doc: Value = serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    // Witness artifact, bare witness bundle, or bare pseudotrajectory.
    let body = doc.get("result").unwrap_or(&doc);
    if body.get("construction").is_some() {
        let witness: Witness = serde_json::from_value(body.clone()).context("malformed witness bundle")?;
        let search = match body.get("search") {
            Some(s) => Some(serde_json::from_value(s.clone()).context("malformed search config")?),
            None => None,
        };
        return Ok(PseudoInput {
            xi: witness.xi.clone(),
            witness: Some(witness),
            search,
        });
    }
    let xi: Pseudotrajectory = serde_json::from_value(body.clone()).context("malformed pseudotrajectory")?;
    Ok(PseudoInput {
        xi,
        witness: None,
        search: None,
    })
}

fn shadow(out: &Output, field: &FieldArgs, pseudo: &PathBuf, mode: ModeArg, eps: Option<f64>, search: &SearchArgs) -> Result<()> {
    let flow = field.flow()?;
    let input = read_pseudo(pseudo)?;
    let eps = match (eps, &input.witness) {
        (Some(e), _) => e,
        (None, Some(w)) => w.eps_claim,
        (None, None) => bail!("--eps is required for a plain pseudotrajectory"),
    };
    let base = match (&input.search, &input.witness) {
        (Some(s), _) => s.clone(),
        (None, Some(w)) => confirm_search(w, &SearchConfig::default()),
        (None, None) => SearchConfig::default(),
    };
    let config = search.apply(base);
    let m = match mode {
        ModeArg::Oriented => Mode::Oriented,
        ModeArg::Standard => Mode::Standard { eps },
    };
    let result = verify_shadowing(&flow, &input.xi, m, eps, &config)?;
    // A witness replayed in oriented mode at its own eps reproduces the confirmation verdict.
    let verdict = match (&input.witness, mode) {
        (Some(w), ModeArg::Oriented) if w.eps_claim == eps => Some(FailureReport::from_result(eps, &result)),
        _ => None,
    };
    let warp_knots = result.warp.knots().to_vec();
    let scenario = Scenario::new(
        "shadow",
        &flow,
        json!({
            "field": params(field),
            "pseudo": pseudo,
            "mode": mode,
            "eps": eps,
            "search": config,
            "xi": input.xi,
        }),
        None,
        out,
    );
    let mut body = serde_json::to_value(&result)?;
    body["warp_knots"] = json!(warp_knots);
    if let Some(v) = verdict {
        body["confirm_failure"] = serde_json::to_value(v)?;
    }
    out.write_json(&scenario, &body)
}

#[allow(clippy::too_many_arguments)]
fn witness(
    out: &Output,
    field: &FieldArgs,
    kind: &str,
    d: f64,
    center: Point,
    radius: f64,
    loop_point: Option<Point>,
    confirm: bool,
    search: &SearchArgs,
) -> Result<()> {
    let flow = field.flow()?;
    let construction: Construction = kind.parse()?;
    let disk = DiskNeighborhood::new(center, radius);
    let w = match construction {
        Construction::MultiSector => multisector_witness(&flow, &disk, d)?,
        Construction::Parabolic => parabolic_witness(&flow, &disk, d)?,
        Construction::SelfConnection => {
            let Some(x1) = loop_point else {
                bail!("the self-connection construction needs --loop-point x,y");
            };
            self_connection_witness(&flow, center, &LoopData::new(x1), d)?
        }
        Construction::SemiStableCycle => semistable_from_search(&flow, d)?,
    };
    let validation = w.validate(&flow);
    let config = confirm_search(&w, &search.apply(SearchConfig::default()));
    let report = if confirm {
        Some(confirm_failure(&flow, &w, &config)?)
    } else {
        None
    };
    let scenario = Scenario::new(
        "witness",
        &flow,
        json!({
            "field": params(field),
            "kind": construction.name(),
            "d": d,
            "center": center,
            "radius": radius,
            "loop_point": loop_point,
            "confirm": confirm,
        }),
        None,
        out,
    );
    let mut body = serde_json::to_value(&w)?;
    body["validation"] = serde_json::to_value(validation)?;
    body["search"] = serde_json::to_value(&config)?;
    if let Some(r) = report {
        body["confirm"] = serde_json::to_value(r)?;
    }
    out.write_json(&scenario, &body)
}

/// Tries every closed orbit the search finds; refusals only if all refuse.
fn semistable_from_search(flow: &Flow, d: f64) -> Result<Witness> {
    let elements = find_critical_elements(flow, &SearchGrid::default())?;
    let orbits: Vec<_> = elements
        .iter()
        .filter(|e| matches!(e.kind, ElementKind::ClosedOrbit { .. }))
        .collect();
    if orbits.is_empty() {
        return Err(shadowlab::Error::Refused("no closed orbit found".into()).into());
    }
    let mut last = None;
    for o in orbits {
        match semistable_cycle_witness(flow, o, d) {
            Ok(w) => return Ok(w),
            Err(e) if e.is_refusal() => last = Some(e),
            Err(e) => return Err(e.into()),
        }
    }
    Err(last.expect("at least one orbit").into())
}

fn graph(out: &Output, field: &FieldArgs, dot: bool) -> Result<()> {
    let flow = field.flow()?;
    let elements = find_critical_elements(&flow, &SearchGrid::default())?;
    let config = derive_config(&flow, &elements)?;
    let classified = classify_elements(&flow, &elements, config.eps0)?;
    let g = connection_graph(&flow, &classified, &GraphConfig::new(config.eps0))?;
    let cycles = check_no_cycles(&g);
    if dot {
        return out.write_text(&g.to_dot());
    }
    let scenario = Scenario::new("graph", &flow, json!({ "field": params(field), "eps0": config.eps0 }), None, out);
    let result = json!({
        "nodes": g.nodes.iter().map(|n| json!({ "label": n.label(), "element": n })).collect::<Vec<_>>(),
        "edges": g.edges,
        "unknown_limits": g.unknown,
        "cycles": cycles,
        "dot": g.to_dot(),
    });
    out.write_json(&scenario, &result)
}

#[allow(clippy::too_many_arguments)]
fn threshold(
    out: &Output,
    field: &FieldArgs,
    eps_list: &[f64],
    trials: usize,
    seed: u64,
    blocks: usize,
    oriented: bool,
    search: &SearchArgs,
) -> Result<()> {
    if eps_list.is_empty() {
        bail!("--eps-list needs at least one value");
    }
    let flow = field.flow()?;
    let elements = find_critical_elements(&flow, &SearchGrid::default())?;
    let config = derive_config(&flow, &elements)?;
    let search_config = search.apply(SearchConfig::default());
    let rows = threshold_curve(&flow, &config, !oriented, eps_list, trials, seed, blocks, &search_config)?;
    let scenario = Scenario::new(
        "threshold",
        &flow,
        json!({
            "field": params(field),
            "eps_list": eps_list,
            "trials": trials,
            "blocks": blocks,
            "mode": if oriented { "oriented" } else { "standard" },
            "search": search_config,
            "config": config,
        }),
        Some(seed),
        out,
    );
    match out.format {
        Format::Json => out.write_json(&scenario, &rows),
        Format::Csv => {
            let mut text = format!("# scenario: {}\n", serde_json::to_string(&scenario)?);
            text.push_str("eps,d_hat,below_resolution,tests\n");
            for r in &rows {
                text.push_str(&format!("{},{},{},{}\n", r.eps, r.d_hat, r.below_resolution, r.tested.len()));
            }
            out.write_text(&text)
        }
    }
}

fn config_derive(out: &Output, field: &FieldArgs) -> Result<()> {
    let flow = field.flow()?;
    let elements = find_critical_elements(&flow, &SearchGrid::default())?;
    let config = derive_config(&flow, &elements)?;
    let scenario = Scenario::new("config-derive", &flow, json!({ "field": params(field) }), None, out);
    let result = json!({
        "config": config,
        "elements": elements.iter().map(|e| e.label()).collect::<Vec<_>>(),
    });
    out.write_json(&scenario, &result)
}

fn run(cli: Cli) -> Result<()> {
    init_threads()?;
    let out = Output {
        format: cli.format,
        path: cli.out.clone(),
    };
    match &cli.command {
        Command::Classify {
            field,
            center,
            radius,
            samples,
        } => classify(&out, field, *center, *radius, *samples),
        Command::Shadow {
            field,
            pseudo,
            mode,
            eps,
            search,
        } => shadow(&out, field, pseudo, *mode, *eps, search),
        Command::Witness {
            field,
            kind,
            d,
            center,
            radius,
            loop_point,
            confirm,
            search,
        } => witness(&out, field, kind, *d, *center, *radius, *loop_point, *confirm, search),
        Command::Graph { field, dot } => graph(&out, field, *dot),
        Command::Threshold {
            field,
            eps_list,
            trials,
            seed,
            blocks,
            oriented,
            search,
        } => {
            threshold(&out, field, eps_list, *trials, *seed, *blocks, *oriented, search)
        }
        Command::ConfigDerive { field } => config_derive(&out, field),
    }
}

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<shadowlab::Error>() {
        Some(e) if e.is_refusal() => 2,
        _ => 1,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
