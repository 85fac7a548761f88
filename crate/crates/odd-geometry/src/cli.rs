//! The `odd` command line: one thin binary in front of the library.
//!
//! Artifacts are deterministic: identical argv and input files produce
//! byte-identical CSV and JSON-lines output. Floats in CSV carry 17
//! significant digits; JSON objects have sorted keys. Exit codes: 0 on
//! success, 1 when a computation or check fails (with a structured error
//! on stderr), 2 for usage errors.

use std::ffi::OsString;
use std::fs;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use crate::connection::{christoffel, verify_connection, Connection};
use crate::curve::{PiecewiseCurve, Segment};
use crate::distance::{
    comparison_lemma_check, distance_estimate, metric_space_check, DistanceQuery,
};
use crate::error::OddError;
use crate::expr::{parse, Expr};
use crate::flow::{
    integrate_flow, perturbed_flow_experiment, radial_directions, FlowOptions,
};
use crate::frame::{divergence, gradient, laplacian, orthonormal_frame, volume};
use crate::geodesic::{geodesic, GeodesicSystem};
use crate::metric::{OddMetric, ValidateOptions};
use crate::plot::emit_field_plot;

/// Which library entry points each subcommand fronts. The coverage test
/// keeps this honest: every entry point is reachable from exactly one
/// subcommand, and every subcommand fronts at least one.
pub const COMMAND_TABLE: [(&str, &[&str]); 15] = [
    (
        "validate",
        &[
            "OddMetric::validate",
            "OddMetric::degenerate_rank",
            "OddMetric::restrict",
            "connection::verify_connection",
        ],
    ),
    ("frame", &["frame::orthonormal_frame", "Frame::coframe"]),
    (
        "christoffel",
        &[
            "connection::christoffel",
            "Connection::covariant_derivative",
        ],
    ),
    ("grad", &["frame::gradient"]),
    ("div", &["frame::divergence"]),
    ("laplacian", &["frame::laplacian"]),
    ("volume", &["frame::volume", "frame::volume_form"]),
    (
        "curve-length",
        &["PiecewiseCurve::length", "PiecewiseCurve::speed"],
    ),
    ("curve-check", &["PiecewiseCurve::check_odd_regular"]),
    ("flow", &["flow::integrate_flow", "flow::invert_time_map"]),
    ("geodesic", &["geodesic::geodesic"]),
    (
        "directions",
        &["flow::radial_directions", "plot::emit_field_plot"],
    ),
    ("distance", &["distance::distance_estimate"]),
    (
        "metric-check",
        &[
            "distance::metric_space_check",
            "distance::comparison_lemma_check",
        ],
    ),
    ("experiment", &["flow::perturbed_flow_experiment"]),
];

#[derive(Parser)]
#[command(
    name = "odd",
    version,
    about = "Geometry on metrics that degenerate along coordinate subspaces"
)]
pub struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args)]
struct MetricArg {
    /// Metric spec file (see the fixtures/ directory for the format)
    #[arg(long)]
    metric: PathBuf,
}

#[derive(Subcommand)]
enum Cmd {
    /// Validate a metric file: PSD sampling, locus ranks, stratum
    /// restrictions, connection compatibility. JSON-lines report.
    Validate {
        #[command(flatten)]
        metric: MetricArg,
        /// RNG seed for the sample points
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Eigenvalue / determinant tolerance
        #[arg(long)]
        tol: Option<f64>,
    },
    /// Print the orthonormal frame and coframe of the chart
    Frame {
        #[command(flatten)]
        metric: MetricArg,
    },
    /// Christoffel symbols, symbolic or evaluated; with --field and
    /// --wrt, the covariant derivative of one field along another
    Christoffel {
        #[command(flatten)]
        metric: MetricArg,
        /// Evaluate at this point instead of printing expressions
        #[arg(long, allow_hyphen_values = true)]
        at: Option<String>,
        /// Field to differentiate (components "1:expr,2:expr" or E<k>)
        #[arg(long, allow_hyphen_values = true)]
        field: Option<String>,
        /// Direction field for the covariant derivative
        #[arg(long, allow_hyphen_values = true)]
        wrt: Option<String>,
    },
    /// Metric gradient of a scalar expression
    Grad {
        #[command(flatten)]
        metric: MetricArg,
        /// Scalar expression in the chart coordinates
        #[arg(long, allow_hyphen_values = true)]
        field: String,
    },
    /// Metric divergence of a vector field
    Div {
        #[command(flatten)]
        metric: MetricArg,
        /// Vector field (components "1:expr,2:expr" or E<k> / E1+E2)
        #[arg(long, allow_hyphen_values = true)]
        field: String,
    },
    /// Laplacian of a scalar expression
    Laplacian {
        #[command(flatten)]
        metric: MetricArg,
        /// Scalar expression in the chart coordinates
        #[arg(long, allow_hyphen_values = true)]
        field: String,
    },
    /// Metric volume of an axis box (default: the whole domain box)
    Volume {
        #[command(flatten)]
        metric: MetricArg,
        /// Sub-box "a..b,c..d"; defaults to the domain box
        #[arg(long, allow_hyphen_values = true)]
        region: Option<String>,
        #[arg(long, default_value_t = 1e-9)]
        tol: f64,
    },
    /// Length of a symbolic curve t -> (expr, ...) over a span
    CurveLength {
        #[command(flatten)]
        metric: MetricArg,
        /// Curve components as expressions in t, comma separated
        #[arg(long, allow_hyphen_values = true)]
        curve: String,
        /// Parameter span "a,b"
        #[arg(long, allow_hyphen_values = true)]
        tspan: String,
        #[arg(long, default_value_t = 1e-10)]
        tol: f64,
        /// Also write sample rows (t, coords, speed) as CSV
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Regularity of a symbolic curve where it crosses the locus
    CurveCheck {
        #[command(flatten)]
        metric: MetricArg,
        /// Curve components as expressions in t, comma separated
        #[arg(long, allow_hyphen_values = true)]
        curve: String,
        /// Parameter span "a,b"
        #[arg(long, allow_hyphen_values = true)]
        tspan: String,
    },
    /// Integrate a vector field from a point; trajectory CSV
    Flow {
        #[command(flatten)]
        metric: MetricArg,
        /// Vector field (components "1:expr,2:expr" or E<k> / E1+E2)
        #[arg(long, allow_hyphen_values = true)]
        field: String,
        /// Start point "x,y,..."
        #[arg(long, allow_hyphen_values = true)]
        from: String,
        /// Time span "0,b" (integration starts at 0)
        #[arg(long, allow_hyphen_values = true)]
        tspan: String,
        /// CSV destination; stdout when omitted
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Shoot a geodesic from a point with a velocity; trajectory CSV
    Geodesic {
        #[command(flatten)]
        metric: MetricArg,
        /// Start point "x,y,..."
        #[arg(long, allow_hyphen_values = true)]
        from: String,
        /// Initial coordinate velocity "vx,vy,..."
        #[arg(long, allow_hyphen_values = true)]
        v0: String,
        /// Time span "0,b" (integration starts at 0)
        #[arg(long, allow_hyphen_values = true)]
        tspan: String,
        /// CSV destination; stdout when omitted
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Rays through a center that a field leaves invariant; with an
    /// --out ending in .svg, also a quiver plot of the field
    Directions {
        #[command(flatten)]
        metric: MetricArg,
        /// Vector field (components "1:expr,2:expr" or E<k> / E1+E2)
        #[arg(long, allow_hyphen_values = true)]
        field: String,
        /// Center point; defaults to the origin
        #[arg(long, allow_hyphen_values = true)]
        at: Option<String>,
        /// Probe radius; defaults to a quarter of the box extent
        #[arg(long)]
        radius: Option<f64>,
        /// Quiver grid nodes per axis for the SVG
        #[arg(long, default_value_t = 21)]
        grid: usize,
        /// SVG destination
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Upper bound for the metric distance between two points
    Distance {
        #[command(flatten)]
        metric: MetricArg,
        /// First point "x,y,..."
        #[arg(long, allow_hyphen_values = true)]
        from: String,
        /// Second point "x,y,..."
        #[arg(long, allow_hyphen_values = true)]
        to: String,
        /// Lattice cells per axis
        #[arg(long)]
        grid: Option<usize>,
        /// Relative improvement cutoff for the refinement stage
        #[arg(long)]
        tol: Option<f64>,
        /// Write the witness path as CSV
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Metric-space axioms on sampled points; with --at, the ball
    /// comparison constants around that point over the --eps radii
    MetricCheck {
        #[command(flatten)]
        metric: MetricArg,
        /// Explicit points "x,y;x,y;..."; 10 drawn from --seed if absent
        #[arg(long, allow_hyphen_values = true)]
        points: Option<String>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Center for the ball comparison
        #[arg(long, allow_hyphen_values = true)]
        at: Option<String>,
        /// Radii for the ball comparison "r1,r2,..."
        #[arg(long, allow_hyphen_values = true)]
        eps: Option<String>,
    },
    /// Perturbed-flow statistics: push the rescaled field by epsilon and
    /// record where trajectories hit a transversal plane
    Experiment {
        #[command(flatten)]
        metric: MetricArg,
        /// Vector field (components "1:expr,2:expr" or E<k> / E1+E2)
        #[arg(long, allow_hyphen_values = true)]
        field: String,
        /// Start points "x,y;x,y;..."
        #[arg(long, allow_hyphen_values = true)]
        from: String,
        /// Plane center; defaults to the origin
        #[arg(long, allow_hyphen_values = true)]
        at: Option<String>,
        /// Plane normal; defaults to the last coordinate axis
        #[arg(long, allow_hyphen_values = true)]
        normal: Option<String>,
        /// Perturbation sizes "1e-1,1e-2,..."
        #[arg(long, default_value = "1e-1,1e-2,1e-3,1e-4", allow_hyphen_values = true)]
        eps: String,
        /// CSV destination; stdout when omitted
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

enum Failure {
    Usage(String),
    Domain(OddError),
}

impl From<OddError> for Failure {
    fn from(e: OddError) -> Failure {
        Failure::Domain(e)
    }
}

type CliResult<T> = std::result::Result<T, Failure>;

/// Parse argv and run; returns the process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli.cmd) {
        Ok(()) => 0,
        Err(Failure::Usage(msg)) => {
            eprintln!("usage error: {msg}");
            2
        }
        Err(Failure::Domain(e)) => {
            eprintln!("{}", json!({ "error": e.to_string() }));
            1
        }
    }
}

fn dispatch(cmd: Cmd) -> CliResult<()> {
    match cmd {
        Cmd::Validate { metric, seed, tol } => cmd_validate(metric, seed, tol),
        Cmd::Frame { metric } => cmd_frame(metric),
        Cmd::Christoffel {
            metric,
            at,
            field,
            wrt,
        } => cmd_christoffel(metric, at, field, wrt),
        Cmd::Grad { metric, field } => cmd_grad(metric, field),
        Cmd::Div { metric, field } => cmd_div(metric, field),
        Cmd::Laplacian { metric, field } => cmd_laplacian(metric, field),
        Cmd::Volume {
            metric,
            region,
            tol,
        } => cmd_volume(metric, region, tol),
        Cmd::CurveLength {
            metric,
            curve,
            tspan,
            tol,
            out,
        } => cmd_curve_length(metric, curve, tspan, tol, out),
        Cmd::CurveCheck {
            metric,
            curve,
            tspan,
        } => cmd_curve_check(metric, curve, tspan),
        Cmd::Flow {
            metric,
            field,
            from,
            tspan,
            out,
        } => cmd_flow(metric, field, from, tspan, out),
        Cmd::Geodesic {
            metric,
            from,
            v0,
            tspan,
            out,
        } => cmd_geodesic(metric, from, v0, tspan, out),
        Cmd::Directions {
            metric,
            field,
            at,
            radius,
            grid,
            out,
        } => cmd_directions(metric, field, at, radius, grid, out),
        Cmd::Distance {
            metric,
            from,
            to,
            grid,
            tol,
            out,
        } => cmd_distance(metric, from, to, grid, tol, out),
        Cmd::MetricCheck {
            metric,
            points,
            seed,
            at,
            eps,
        } => cmd_metric_check(metric, points, seed, at, eps),
        Cmd::Experiment {
            metric,
            field,
            from,
            at,
            normal,
            eps,
            out,
        } => cmd_experiment(metric, field, from, at, normal, eps, out),
    }
}

// ---------------------------------------------------------------------
// Shared parsing and formatting

fn load_metric(arg: &MetricArg) -> CliResult<OddMetric> {
    let text = fs::read_to_string(&arg.metric).map_err(|e| {
        Failure::Usage(format!("--metric {}: {e}", arg.metric.display()))
    })?;
    Ok(OddMetric::parse_spec(&text).map_err(OddError::from)?)
}

fn parse_floats(flag: &str, s: &str) -> CliResult<Vec<f64>> {
    s.split(',')
        .map(|p| {
            p.trim()
                .parse::<f64>()
                .map_err(|_| Failure::Usage(format!("{flag}: bad number {p:?}")))
        })
        .collect()
}

fn parse_point(flag: &str, s: &str, dim: usize) -> CliResult<Vec<f64>> {
    let v = parse_floats(flag, s)?;
    if v.len() != dim {
        return Err(Failure::Usage(format!(
            "{flag}: expected {dim} coordinates, got {}",
            v.len()
        )));
    }
    Ok(v)
}

fn parse_point_list(flag: &str, s: &str, dim: usize) -> CliResult<Vec<Vec<f64>>> {
    s.split(';')
        .filter(|p| !p.trim().is_empty())
        .map(|p| parse_point(flag, p, dim))
        .collect()
}

fn parse_tspan(s: &str) -> CliResult<(f64, f64)> {
    let v = parse_floats("--tspan", s)?;
    if v.len() != 2 {
        return Err(Failure::Usage(format!("--tspan: expected \"a,b\", got {s:?}")));
    }
    Ok((v[0], v[1]))
}

fn parse_region(s: &str, dim: usize) -> CliResult<Vec<(f64, f64)>> {
    let parts: Vec<&str> = s.split(',').collect();
    if parts.len() != dim {
        return Err(Failure::Usage(format!(
            "--region: expected {dim} ranges, got {}",
            parts.len()
        )));
    }
    parts
        .iter()
        .map(|p| {
            let (a, b) = p.split_once("..").ok_or_else(|| {
                Failure::Usage(format!("--region: range {p:?} is not \"a..b\""))
            })?;
            let lo = a.trim().parse::<f64>();
            let hi = b.trim().parse::<f64>();
            match (lo, hi) {
                (Ok(lo), Ok(hi)) if lo < hi => Ok((lo, hi)),
                _ => Err(Failure::Usage(format!("--region: bad range {p:?}"))),
            }
        })
        .collect()
}

/// A `--field` value: frame combinations ("E2", "E1+E2", "-E1"), explicit
/// components ("1:y,2:0-x"), or a bare scalar expression for the
/// commands that take functions.
fn parse_vector_field(m: &OddMetric, s: &str) -> CliResult<Vec<Expr>> {
    let names = m.coord_names();
    let n = m.dim();
    if s.contains(':') {
        let mut comps = vec![Expr::zero(); n];
        let mut seen = vec![false; n];
        for part in s.split(',') {
            let (idx, expr) = part.split_once(':').ok_or_else(|| {
                Failure::Usage(format!("--field: component {part:?} is not \"i:expr\""))
            })?;
            let i: usize = idx
                .trim()
                .parse()
                .map_err(|_| Failure::Usage(format!("--field: bad index {idx:?}")))?;
            if i == 0 || i > n {
                return Err(Failure::Usage(format!(
                    "--field: index {i} out of 1..{n}"
                )));
            }
            if seen[i - 1] {
                return Err(Failure::Usage(format!("--field: component {i} given twice")));
            }
            seen[i - 1] = true;
            comps[i - 1] = parse(expr.trim(), &names)
                .map_err(|e| Failure::Usage(format!("--field: {e}")))?;
        }
        return Ok(comps);
    }
    // Frame combination: terms E<k> joined by + or -.
    let mut comps = vec![Expr::zero(); n];
    let frame = orthonormal_frame(m)?;
    let mut rest = s.trim();
    let mut sign = 1.0;
    if let Some(r) = rest.strip_prefix('-') {
        sign = -1.0;
        rest = r;
    }
    loop {
        let term_end = rest
            .find(['+', '-'])
            .unwrap_or(rest.len());
        let term = rest[..term_end].trim();
        let k: usize = term
            .strip_prefix('E')
            .and_then(|d| d.parse().ok())
            .filter(|k| (1..=n).contains(k))
            .ok_or_else(|| {
                Failure::Usage(format!(
                    "--field: {term:?} is not E1..E{n}; use \"i:expr,...\" for explicit components"
                ))
            })?;
        for (c, e) in comps.iter_mut().zip(frame.vector(k - 1)) {
            let signed = if sign > 0.0 {
                e.clone()
            } else {
                e.clone().neg()
            };
            *c = Expr::add(c.clone(), signed).simplify();
        }
        if term_end == rest.len() {
            break;
        }
        sign = if rest.as_bytes()[term_end] == b'+' { 1.0 } else { -1.0 };
        rest = &rest[term_end + 1..];
    }
    Ok(comps)
}

fn parse_scalar(m: &OddMetric, s: &str) -> CliResult<Expr> {
    if s.contains(':') || s.trim().starts_with('E') {
        return Err(Failure::Usage(format!(
            "--field: expected a scalar expression in the coordinates, got {s:?}"
        )));
    }
    parse(s.trim(), &m.coord_names()).map_err(|e| Failure::Usage(format!("--field: {e}")))
}

fn parse_curve(m: &OddMetric, curve: &str, tspan: &str) -> CliResult<PiecewiseCurve> {
    let (a, b) = parse_tspan(tspan)?;
    if !(b > a) {
        return Err(Failure::Usage(format!("--tspan: empty span {a}..{b}")));
    }
    let comps: CliResult<Vec<Expr>> = curve
        .split(',')
        .map(|p| parse(p.trim(), &["t"]).map_err(|e| Failure::Usage(format!("--curve: {e}"))))
        .collect();
    let comps = comps?;
    if comps.len() != m.dim() {
        return Err(Failure::Usage(format!(
            "--curve: expected {} components, got {}",
            m.dim(),
            comps.len()
        )));
    }
    Ok(PiecewiseCurve::from_symbolic(comps, a, b)?.detect_marks(m))
}

/// 17 significant digits, enough to round-trip an f64.
fn sig(v: f64) -> String {
    format!("{v:.16e}")
}

fn emit(path: &Option<PathBuf>, content: &str) -> CliResult<()> {
    match path {
        Some(p) => {
            fs::write(p, content).map_err(|e| {
                Failure::Usage(format!("--out {}: {e}", p.display()))
            })?;
        }
        None => print!("{content}"),
    }
    Ok(())
}

/// Sample parameters for trajectory CSV: spline knots where the curve is
/// sampled data, 33 uniform nodes per segment otherwise.
fn curve_sample_nodes(c: &PiecewiseCurve) -> Vec<f64> {
    let mut ts: Vec<f64> = Vec::new();
    for seg in c.segments() {
        let (a, b) = seg.t_range();
        match seg {
            Segment::Sampled(h) => ts.extend_from_slice(h.knots()),
            _ => ts.extend((0..=32).map(|i| a + (b - a) * i as f64 / 32.0)),
        }
    }
    ts.sort_by(f64::total_cmp);
    ts.dedup_by(|x, y| (*x - *y).abs() < 1e-12 * (1.0 + y.abs()));
    ts
}

fn curve_csv(m: &OddMetric, c: &PiecewiseCurve) -> String {
    let mut out = String::new();
    out.push_str(&format!("t,{},speed\n", m.coords().join(",")));
    for t in curve_sample_nodes(c) {
        let p = c.position(t);
        let s = c.speed(m, t);
        out.push_str(&sig(t));
        for x in &p {
            out.push(',');
            out.push_str(&sig(*x));
        }
        out.push(',');
        out.push_str(&sig(s));
        out.push('\n');
    }
    out
}

// ---------------------------------------------------------------------
// Subcommands

fn cmd_validate(metric: MetricArg, seed: u64, tol: Option<f64>) -> CliResult<()> {
    let m = load_metric(&metric)?;
    let mut opts = ValidateOptions {
        seed,
        ..ValidateOptions::default()
    };
    if let Some(t) = tol {
        opts.tol = t;
    }
    let report = m.validate(&opts)?;
    println!(
        "{}",
        json!({
            "check": "psd",
            "points": report.samples_used,
            "value": report.psd_min_eigenvalue,
            "bound": -opts.tol,
            "pass": report.psd_min_eigenvalue >= -opts.tol,
        })
    );
    if let Some(det) = report.off_locus_min_det {
        println!(
            "{}",
            json!({
                "check": "off_locus_det",
                "points": report.samples_used,
                "value": det,
                "bound": 0.0,
                "pass": det > 0.0,
            })
        );
    }
    for s in &report.strata_reports {
        let ids: Vec<usize> = s.stratum.vanishing().iter().map(|i| i + 1).collect();
        println!(
            "{}",
            json!({
                "check": "degenerate_rank",
                "points": ids,
                "value": s.rank_at_probe,
                "bound": s.stratum.codim(),
                "pass": s.report.verdict,
            })
        );
    }
    let conn = christoffel(&m)?;
    let cc = verify_connection(&conn, 60, seed, 1e-5, 1e-5)?;
    println!(
        "{}",
        json!({
            "check": "connection_compat",
            "points": cc.points,
            "value": cc.max_metric_defect,
            "bound": cc.tol,
            "pass": cc.pass && cc.torsion_structurally_zero,
        })
    );
    let ok = report.verdict && cc.pass && cc.torsion_structurally_zero;
    if !ok {
        return Err(Failure::Domain(OddError::InvalidArgument {
            what: format!("validation failed: {:?}", report.failures),
        }));
    }
    Ok(())
}

fn cmd_frame(metric: MetricArg) -> CliResult<()> {
    let m = load_metric(&metric)?;
    let f = orthonormal_frame(&m)?;
    let coords = m.coords();
    for i in 0..f.dim() {
        let terms: Vec<String> = f
            .vector(i)
            .iter()
            .zip(coords)
            .filter(|(e, _)| !e.is_const(0.0))
            .map(|(e, c)| format!("({e}) d_{c}"))
            .collect();
        println!("E{} = {}", i + 1, terms.join(" + "));
    }
    for (i, row) in f.coframe()?.iter().enumerate() {
        let terms: Vec<String> = row
            .iter()
            .zip(coords)
            .filter(|(e, _)| !e.is_const(0.0))
            .map(|(e, c)| format!("({e}) d{c}"))
            .collect();
        println!("eps{} = {}", i + 1, terms.join(" + "));
    }
    Ok(())
}

fn print_symbols_at(conn: &Connection, at: &[f64]) -> CliResult<()> {
    let n = conn.dim();
    for k in 0..n {
        for i in 0..n {
            for j in i..n {
                let e = conn.symbol(k, i, j);
                if e.is_const(0.0) {
                    continue;
                }
                match e.eval(at).as_finite() {
                    Some(v) if v == 0.0 => {}
                    Some(v) => println!("Γ[{}][{}][{}] = {v:?}", k + 1, i + 1, j + 1),
                    None => println!("Γ[{}][{}][{}] = pole", k + 1, i + 1, j + 1),
                }
            }
        }
    }
    Ok(())
}

fn cmd_christoffel(
    metric: MetricArg,
    at: Option<String>,
    field: Option<String>,
    wrt: Option<String>,
) -> CliResult<()> {
    let m = load_metric(&metric)?;
    let conn = christoffel(&m)?;
    let at: Option<Vec<f64>> = match at {
        Some(s) => Some(parse_point("--at", &s, m.dim())?),
        None => None,
    };
    match (field, wrt) {
        (Some(y), Some(x)) => {
            let y = parse_vector_field(&m, &y)?;
            let x = parse_vector_field(&m, &x)?;
            let d = conn.covariant_derivative(&x, &y)?;
            for (k, e) in d.iter().enumerate() {
                match &at {
                    Some(p) => match e.eval(p).as_finite() {
                        Some(v) => println!("(∇_X Y)[{}] = {v:?}", k + 1),
                        None => println!("(∇_X Y)[{}] = pole", k + 1),
                    },
                    None => println!("(∇_X Y)[{}] = {e}", k + 1),
                }
            }
            Ok(())
        }
        (None, None) => {
            match &at {
                Some(p) => print_symbols_at(&conn, p)?,
                None => {
                    let n = conn.dim();
                    for k in 0..n {
                        for i in 0..n {
                            for j in i..n {
                                let e = conn.symbol(k, i, j);
                                if !e.is_const(0.0) {
                                    println!("Γ[{}][{}][{}] = {e}", k + 1, i + 1, j + 1);
                                }
                            }
                        }
                    }
                }
            }
            Ok(())
        }
        _ => Err(Failure::Usage(
            "--field and --wrt must be given together".into(),
        )),
    }
}

fn cmd_grad(metric: MetricArg, field: String) -> CliResult<()> {
    let m = load_metric(&metric)?;
    let f = parse_scalar(&m, &field)?;
    for (k, e) in gradient(&m, &f)?.iter().enumerate() {
        println!("grad[{}] = {e}", k + 1);
    }
    Ok(())
}

fn cmd_div(metric: MetricArg, field: String) -> CliResult<()> {
    let m = load_metric(&metric)?;
    let x = parse_vector_field(&m, &field)?;
    println!("{}", divergence(&m, &x)?);
    Ok(())
}

fn cmd_laplacian(metric: MetricArg, field: String) -> CliResult<()> {
    let m = load_metric(&metric)?;
    let f = parse_scalar(&m, &field)?;
    println!("{}", laplacian(&m, &f)?);
    Ok(())
}

fn cmd_volume(metric: MetricArg, region: Option<String>, tol: f64) -> CliResult<()> {
    let m = load_metric(&metric)?;
    let region = match region {
        Some(s) => Some(parse_region(&s, m.dim())?),
        None => None,
    };
    let v = volume(&m, region.as_deref(), tol)?;
    println!("{}", sig(v));
    Ok(())
}

fn cmd_curve_length(
    metric: MetricArg,
    curve: String,
    tspan: String,
    tol: f64,
    out: Option<PathBuf>,
) -> CliResult<()> {
    let m = load_metric(&metric)?;
    let c = parse_curve(&m, &curve, &tspan)?;
    let l = c.length(&m, tol)?;
    if out.is_some() {
        emit(&out, &curve_csv(&m, &c))?;
    }
    println!("{}", sig(l));
    Ok(())
}

fn cmd_curve_check(metric: MetricArg, curve: String, tspan: String) -> CliResult<()> {
    let m = load_metric(&metric)?;
    let c = parse_curve(&m, &curve, &tspan)?;
    let report = c.check_odd_regular(&m)?;
    for mark in &report.marks {
        println!(
            "{}",
            json!({
                "check": "mark_regular",
                "points": [mark.point.clone()],
                "value": mark.t,
                "bound": 0.0,
                "pass": mark.regular,
                "speed_minus": mark.speed_minus,
                "speed_plus": mark.speed_plus,
            })
        );
    }
    println!(
        "{}",
        json!({
            "check": "odd_regular",
            "points": report.marks.len(),
            "value": report.min_interior_speed,
            "bound": 0.0,
            "pass": report.regular,
        })
    );
    if !report.regular {
        return Err(Failure::Domain(OddError::InvalidArgument {
            what: "curve is not regular across its marks".into(),
        }));
    }
    Ok(())
}

fn cmd_flow(
    metric: MetricArg,
    field: String,
    from: String,
    tspan: String,
    out: Option<PathBuf>,
) -> CliResult<()> {
    let m = load_metric(&metric)?;
    let x = parse_vector_field(&m, &field)?;
    let x0 = parse_point("--from", &from, m.dim())?;
    let (a, b) = parse_tspan(&tspan)?;
    if a != 0.0 {
        return Err(Failure::Usage(format!(
            "--tspan: integration starts at 0, got start {a}"
        )));
    }
    let (curve, trace) = integrate_flow(&m, &x, &x0, b, &FlowOptions::default())?;
    emit(&out, &curve_csv(&m, &curve))?;
    eprintln!(
        "{}",
        json!({
            "crossings": trace.crossings.len(),
            "ended_at_fold": trace.ended_at_fold,
            "reached_time": trace.reached_time,
            "raw_segments": trace.raw_segments,
            "cleared_segments": trace.cleared_segments,
        })
    );
    Ok(())
}

fn cmd_geodesic(
    metric: MetricArg,
    from: String,
    v0: String,
    tspan: String,
    out: Option<PathBuf>,
) -> CliResult<()> {
    let m = load_metric(&metric)?;
    let x0 = parse_point("--from", &from, m.dim())?;
    let v = parse_point("--v0", &v0, m.dim())?;
    let (a, b) = parse_tspan(&tspan)?;
    if a != 0.0 {
        return Err(Failure::Usage(format!(
            "--tspan: integration starts at 0, got start {a}"
        )));
    }
    let sys = GeodesicSystem::new(&m)?;
    let (curve, trace) = geodesic(&sys, &x0, &v, b, &FlowOptions::default())?;
    emit(&out, &curve_csv(&m, &curve))?;
    eprintln!(
        "{}",
        json!({
            "crossings": trace.crossings.len(),
            "max_residual": trace.max_residual,
            "energy_drift": trace.energy_drift,
            "initial_energy": trace.initial_energy,
            "ended_at_fold": trace.ended_at_fold,
            "reached_time": trace.reached_time,
        })
    );
    Ok(())
}

fn cmd_directions(
    metric: MetricArg,
    field: String,
    at: Option<String>,
    radius: Option<f64>,
    grid: usize,
    out: Option<PathBuf>,
) -> CliResult<()> {
    let m = load_metric(&metric)?;
    let x = parse_vector_field(&m, &field)?;
    let center = match at {
        Some(s) => parse_point("--at", &s, m.dim())?,
        None => vec![0.0; m.dim()],
    };
    let radius = radius.unwrap_or_else(|| {
        0.25 * m
            .domain_box()
            .iter()
            .map(|(lo, hi)| hi - lo)
            .fold(f64::INFINITY, f64::min)
    });
    if !(radius > 0.0) {
        return Err(Failure::Usage(format!("--radius: must be positive, got {radius}")));
    }
    let dirs = radial_directions(&x, &center, radius)?;
    for d in &dirs {
        println!(
            "{}",
            json!({
                "angle": d.angle,
                "slope": d.slope,
                "direction": d.direction,
                "inbound": d.inbound,
            })
        );
    }
    if let Some(p) = out {
        emit_field_plot(&m, &x, grid, &p)?;
    }
    Ok(())
}

fn cmd_distance(
    metric: MetricArg,
    from: String,
    to: String,
    grid: Option<usize>,
    tol: Option<f64>,
    out: Option<PathBuf>,
) -> CliResult<()> {
    let m = load_metric(&metric)?;
    let p = parse_point("--from", &from, m.dim())?;
    let q = parse_point("--to", &to, m.dim())?;
    let mut query = DistanceQuery::new(p, q);
    if let Some(g) = grid {
        query.grid = g;
    }
    if let Some(t) = tol {
        query.tolerance = t;
    }
    let est = distance_estimate(&m, &query)?;
    if out.is_some() {
        emit(&out, &curve_csv(&m, &est.witness))?;
    }
    println!(
        "{}",
        json!({
            "check": "distance",
            "points": [query.p, query.q],
            "value": est.value,
            "bound": est.value,
            "pass": true,
        })
    );
    Ok(())
}

fn cmd_metric_check(
    metric: MetricArg,
    points: Option<String>,
    seed: u64,
    at: Option<String>,
    eps: Option<String>,
) -> CliResult<()> {
    let m = load_metric(&metric)?;
    if let Some(center) = at {
        let p = parse_point("--at", &center, m.dim())?;
        let radii = match eps {
            Some(s) => parse_floats("--eps", &s)?,
            None => vec![0.2, 0.1, 0.05],
        };
        let report = comparison_lemma_check(&m, &p, &radii)?;
        for row in &report.rows {
            println!(
                "{}",
                json!({
                    "check": "comparison",
                    "points": [report.point.clone()],
                    "value": row.c_factor,
                    "bound": row.d_floor,
                    "pass": row.d_floor > 0.0,
                    "radius": row.radius,
                    "d_ceil": row.d_ceil,
                    "samples": row.samples,
                })
            );
        }
        return Ok(());
    }
    let pts = match points {
        Some(s) => parse_point_list("--points", &s, m.dim())?,
        None => Vec::new(),
    };
    let report = metric_space_check(&m, &pts, seed)?;
    for v in &report.violations {
        println!(
            "{}",
            json!({
                "check": v.check,
                "points": v.points,
                "value": v.value,
                "bound": v.bound,
                "pass": false,
            })
        );
    }
    println!(
        "{}",
        json!({
            "check": "metric_space",
            "points": report.points.len(),
            "value": report.violations.len(),
            "bound": 0,
            "pass": report.pass,
        })
    );
    if !report.pass {
        return Err(Failure::Domain(OddError::InvalidArgument {
            what: format!("{} metric-space violations", report.violations.len()),
        }));
    }
    Ok(())
}

fn cmd_experiment(
    metric: MetricArg,
    field: String,
    from: String,
    at: Option<String>,
    normal: Option<String>,
    eps: String,
    out: Option<PathBuf>,
) -> CliResult<()> {
    let m = load_metric(&metric)?;
    let x = parse_vector_field(&m, &field)?;
    let starts = parse_point_list("--from", &from, m.dim())?;
    if starts.is_empty() {
        return Err(Failure::Usage("--from: no start points".into()));
    }
    let center = match at {
        Some(s) => parse_point("--at", &s, m.dim())?,
        None => vec![0.0; m.dim()],
    };
    let normal = match normal {
        Some(s) => parse_point("--normal", &s, m.dim())?,
        None => {
            let mut v = vec![0.0; m.dim()];
            v[m.dim() - 1] = 1.0;
            v
        }
    };
    let epsilons = parse_floats("--eps", &eps)?;
    let rows = perturbed_flow_experiment(
        &m,
        &x,
        &center,
        &normal,
        &epsilons,
        &starts,
        &FlowOptions::default(),
    )?;
    let mut csv = String::new();
    let dir_cols: Vec<String> = m.coords().iter().map(|c| format!("dir_{c}")).collect();
    csv.push_str(&format!(
        "epsilon,seed_id,dist_to_p,{},exit_tag\n",
        dir_cols.join(",")
    ));
    for r in &rows {
        csv.push_str(&sig(r.epsilon));
        csv.push_str(&format!(",{}", r.seed));
        csv.push(',');
        csv.push_str(&sig(r.dist_to_center));
        for d in &r.direction {
            csv.push(',');
            csv.push_str(&sig(*d));
        }
        csv.push_str(&format!(",{}\n", r.exit));
    }
    emit(&out, &csv)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn command_table_matches_the_clap_tree() {
        let cmd = Cli::command();
        let clap_names: Vec<String> = cmd
            .get_subcommands()
            .map(|c| c.get_name().to_string())
            .collect();
        assert_eq!(clap_names.len(), COMMAND_TABLE.len());
        for (name, ops) in COMMAND_TABLE {
            assert!(
                clap_names.iter().any(|c| c == name),
                "{name} is in the table but not in the parser"
            );
            assert!(!ops.is_empty(), "{name} fronts nothing");
        }
    }

    #[test]
    fn every_entry_point_has_exactly_one_subcommand() {
        let mut seen: Vec<&str> = Vec::new();
        for (name, ops) in COMMAND_TABLE {
            for op in ops {
                assert!(
                    !seen.contains(op),
                    "{op} reachable from {name} and an earlier subcommand"
                );
                seen.push(op);
            }
        }
        for must in [
            "OddMetric::validate",
            "frame::orthonormal_frame",
            "connection::christoffel",
            "Connection::covariant_derivative",
            "connection::verify_connection",
            "frame::gradient",
            "frame::divergence",
            "frame::laplacian",
            "frame::volume",
            "PiecewiseCurve::length",
            "PiecewiseCurve::check_odd_regular",
            "flow::integrate_flow",
            "flow::invert_time_map",
            "flow::radial_directions",
            "flow::perturbed_flow_experiment",
            "geodesic::geodesic",
            "distance::distance_estimate",
            "distance::metric_space_check",
            "distance::comparison_lemma_check",
            "plot::emit_field_plot",
        ] {
            assert!(seen.contains(&must), "{must} is unreachable");
        }
    }

    #[test]
    fn usage_errors_exit_with_two() {
        assert_eq!(run(["odd", "no-such-command"]), 2);
        assert_eq!(run(["odd", "validate"]), 2); // missing --metric
    }

    #[test]
    fn help_exits_clean() {
        assert_eq!(run(["odd", "--help"]), 0);
    }
}
