//! The metric type and its validation.
//!
//! A metric here is a symmetric matrix of expressions in the chart
//! coordinates, positive semidefinite on a box, together with a declared
//! list of *strata*: coordinate subspaces (given by the set of vanishing
//! coordinates) whose union is allowed to carry the degeneracy. Off that
//! union the matrix must be positive definite; on each stratum the
//! restriction must again be a metric of the same kind, one dimension
//! down. Validation checks all of this by sampling, deliberately
//! including structured probe points *on* coordinate subspaces, since
//! uniform sampling never lands on the interesting set.

use crate::error::{OddError, Result};
use crate::expr::{Expr, EvalResult};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

/// A coordinate subspace `{ x_i = 0 : i in vanishing }`, indices 0-based
/// and strictly increasing.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Stratum {
    vanishing: Vec<usize>,
}

impl Stratum {
    pub fn new(mut vanishing: Vec<usize>) -> Stratum {
        vanishing.sort_unstable();
        vanishing.dedup();
        Stratum { vanishing }
    }

    pub fn vanishing(&self) -> &[usize] {
        &self.vanishing
    }

    pub fn codim(&self) -> usize {
        self.vanishing.len()
    }

    /// Euclidean distance from `point` to the subspace.
    pub fn distance(&self, point: &[f64]) -> f64 {
        self.vanishing
            .iter()
            .map(|&i| point[i] * point[i])
            .sum::<f64>()
            .sqrt()
    }

    pub fn contains(&self, point: &[f64], tol: f64) -> bool {
        self.distance(point) <= tol
    }
}

pub const DEFAULT_VALIDATE_SAMPLES: usize = 500;
pub const DEFAULT_VALIDATE_TOL: f64 = 1e-9;

#[derive(Clone, Debug)]
pub struct OddMetric {
    dim: usize,
    coords: Vec<String>,
    /// Upper triangle, packed row-major: entry (i,j) with i <= j sits at
    /// `i*dim - i*(i+1)/2 + j`. Symmetry is by construction.
    entries: Vec<Expr>,
    strata: Vec<Stratum>,
    domain_box: Vec<(f64, f64)>,
}

#[derive(Debug, Error)]
pub enum MetricFileError {
    #[error("line {line}: {what}")]
    Malformed { line: usize, what: String },
    #[error("line {line}: {err}")]
    BadExpr {
        line: usize,
        err: crate::expr::ParseError,
    },
    #[error("missing required key {key:?}")]
    MissingKey { key: &'static str },
}

impl OddMetric {
    /// Build from the packed upper triangle (`entries[(i,j)]` for `i <= j`,
    /// row-major). Panics on arity mismatches; returns an error only for
    /// out-of-range strata.
    pub fn new(
        coords: Vec<String>,
        entries: Vec<Expr>,
        strata: Vec<Stratum>,
        domain_box: Vec<(f64, f64)>,
    ) -> Result<OddMetric> {
        let dim = coords.len();
        assert!(dim >= 1, "metric needs at least one coordinate");
        assert_eq!(
            entries.len(),
            dim * (dim + 1) / 2,
            "expected a packed upper triangle"
        );
        assert_eq!(domain_box.len(), dim, "box must have one range per coordinate");
        for (lo, hi) in &domain_box {
            assert!(lo < hi, "empty box range {lo}..{hi}");
        }
        for e in &entries {
            if let Some(v) = e.max_var() {
                assert!(v < dim, "entry uses coordinate index {v}, dim is {dim}");
            }
        }
        for s in &strata {
            if let Some(&worst) = s.vanishing().iter().max() {
                if worst >= dim {
                    return Err(OddError::InvalidStratum {
                        what: format!("coordinate index {} out of range for dim {}", worst + 1, dim),
                    });
                }
            }
            if s.vanishing().is_empty() {
                return Err(OddError::InvalidStratum {
                    what: "empty vanishing set".into(),
                });
            }
        }
        Ok(OddMetric {
            dim,
            coords,
            entries,
            strata,
            domain_box,
        })
    }

    /// Convenience constructor for a diagonal metric.
    pub fn diagonal(
        coords: Vec<String>,
        diag: Vec<Expr>,
        strata: Vec<Stratum>,
        domain_box: Vec<(f64, f64)>,
    ) -> Result<OddMetric> {
        let dim = coords.len();
        let mut entries = vec![Expr::zero(); dim * (dim + 1) / 2];
        for (i, e) in diag.into_iter().enumerate() {
            entries[pack_index(dim, i, i)] = e;
        }
        OddMetric::new(coords, entries, strata, domain_box)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn coords(&self) -> &[String] {
        &self.coords
    }

    pub fn coord_names(&self) -> Vec<&str> {
        self.coords.iter().map(|s| s.as_str()).collect()
    }

    pub fn strata(&self) -> &[Stratum] {
        &self.strata
    }

    pub fn domain_box(&self) -> &[(f64, f64)] {
        &self.domain_box
    }

    /// Entry g_ij; the (j,i) query returns the same expression.
    pub fn entry(&self, i: usize, j: usize) -> &Expr {
        let (i, j) = if i <= j { (i, j) } else { (j, i) };
        &self.entries[pack_index(self.dim, i, j)]
    }

    pub fn entries_packed(&self) -> &[Expr] {
        &self.entries
    }

    /// Evaluate the full matrix at a point.
    pub fn matrix_at(&self, point: &[f64]) -> Result<DMatrix<f64>> {
        let mut m = DMatrix::zeros(self.dim, self.dim);
        for i in 0..self.dim {
            for j in i..self.dim {
                match self.entry(i, j).eval(point) {
                    EvalResult::Finite(v) => {
                        m[(i, j)] = v;
                        m[(j, i)] = v;
                    }
                    other => {
                        return Err(OddError::EvaluationFailure {
                            i: i + 1,
                            j: j + 1,
                            point: point.to_vec(),
                            what: format!("{other:?}"),
                        })
                    }
                }
            }
        }
        Ok(m)
    }

    /// Inner product of two coordinate vectors at a point.
    pub fn inner_at(&self, point: &[f64], u: &[f64], v: &[f64]) -> Result<f64> {
        let m = self.matrix_at(point)?;
        let mut acc = 0.0;
        for i in 0..self.dim {
            for j in 0..self.dim {
                acc += m[(i, j)] * u[i] * v[j];
            }
        }
        Ok(acc)
    }

    /// Euclidean distance from `point` to the nearest declared stratum;
    /// infinite when no strata are declared.
    pub fn locus_distance(&self, point: &[f64]) -> f64 {
        self.strata
            .iter()
            .map(|s| s.distance(point))
            .fold(f64::INFINITY, f64::min)
    }

    pub fn contains(&self, point: &[f64]) -> bool {
        point.len() == self.dim
            && point
                .iter()
                .zip(&self.domain_box)
                .all(|(x, (lo, hi))| *x >= *lo && *x <= *hi)
    }

    /// Number of (numerically) vanishing eigenvalues at a point.
    pub fn degenerate_rank(&self, point: &[f64], tol: f64) -> Result<usize> {
        let m = self.matrix_at(point)?;
        let eigs = m.symmetric_eigenvalues();
        Ok(eigs.iter().filter(|l| l.abs() <= tol).count())
    }

    /// Restrict to a stratum: delete the vanishing coordinates from the
    /// chart, substitute zero for them in the surviving entries, and
    /// intersect the remaining strata.
    pub fn restrict(&self, stratum: &Stratum) -> Result<OddMetric> {
        let vanish = stratum.vanishing();
        if vanish.iter().any(|&i| i >= self.dim) {
            return Err(OddError::InvalidStratum {
                what: "vanishing coordinate out of range".into(),
            });
        }
        let keep: Vec<usize> = (0..self.dim).filter(|i| !vanish.contains(i)).collect();
        if keep.is_empty() {
            return Err(OddError::InvalidStratum {
                what: "restriction to a point has no coordinates left".into(),
            });
        }
        // old index -> substitution: 0 on the stratum, renumbered otherwise
        let subs: Vec<Expr> = (0..self.dim)
            .map(|i| match keep.iter().position(|&k| k == i) {
                Some(new) => Expr::var(new),
                None => Expr::zero(),
            })
            .collect();

        let k = keep.len();
        let mut entries = Vec::with_capacity(k * (k + 1) / 2);
        for a in 0..k {
            for b in a..k {
                let e = self.entry(keep[a], keep[b]).substitute(&subs);
                entries.push(e.simplify());
            }
        }
        let coords = keep.iter().map(|&i| self.coords[i].clone()).collect();
        let domain_box = keep.iter().map(|&i| self.domain_box[i]).collect();

        let mut strata = Vec::new();
        for other in &self.strata {
            if other == stratum {
                continue;
            }
            let inherited: Vec<usize> = other
                .vanishing()
                .iter()
                .filter_map(|&i| keep.iter().position(|&kk| kk == i))
                .collect();
            if inherited.is_empty() {
                continue;
            }
            let s = Stratum::new(inherited);
            if !strata.contains(&s) {
                strata.push(s);
            }
        }
        OddMetric::new(coords, entries, strata, domain_box)
    }

    /// Sample-based validation; see the module docs. Returns a report with
    /// a verdict. An entry that fails to *evaluate* off the declared
    /// strata is a hard error, not a failed verdict.
    pub fn validate(&self, opts: &ValidateOptions) -> Result<ValidationReport> {
        let points = self.sample_points(opts);
        let margin = opts.tol.sqrt();

        // Rows are evaluated in parallel; the reductions below are pure
        // min/max so the schedule cannot change the outcome.
        let rows: Vec<Result<PointRow>> = points
            .par_iter()
            .map(|p| self.point_row(p, margin))
            .collect();

        let mut psd_min = f64::INFINITY;
        let mut psd_worst = Vec::new();
        let mut det_min = f64::INFINITY;
        let mut det_worst = None;
        for row in rows {
            let row = row?;
            if row.min_eig < psd_min {
                psd_min = row.min_eig;
                psd_worst = row.point.clone();
            }
            if let Some(det) = row.off_locus_det {
                if det < det_min {
                    det_min = det;
                    det_worst = Some(row.point.clone());
                }
            }
        }

        let mut failures = Vec::new();
        if psd_min < -opts.tol {
            failures.push(format!(
                "matrix has eigenvalue {psd_min:.6e} at {psd_worst:?}"
            ));
        }
        if det_min <= opts.tol {
            failures.push(format!(
                "determinant {det_min:.6e} at {:?}, {margin:.3e} away from every declared stratum",
                det_worst.clone().unwrap_or_default()
            ));
        }

        // Inductive step: each declared stratum carries a metric again.
        let mut strata_reports = Vec::new();
        for s in &self.strata {
            if s.codim() >= self.dim {
                continue; // a point stratum has nothing left to check
            }
            let restricted = self.restrict(s)?;
            let probe = self.stratum_probe(s, opts.seed);
            let rank = self.degenerate_rank(&probe, opts.tol.max(1e-12))?;
            let sub_opts = ValidateOptions {
                samples: (opts.samples / 2).max(50),
                ..*opts
            };
            let sub = restricted.validate(&sub_opts)?;
            if !sub.verdict {
                failures.push(format!(
                    "restriction to stratum {:?} fails: {}",
                    s.vanishing().iter().map(|i| i + 1).collect::<Vec<_>>(),
                    sub.failures.join("; ")
                ));
            }
            strata_reports.push(StratumReport {
                stratum: s.clone(),
                rank_at_probe: rank,
                probe,
                report: sub,
            });
        }

        Ok(ValidationReport {
            verdict: failures.is_empty(),
            psd_min_eigenvalue: psd_min,
            psd_worst_point: psd_worst,
            off_locus_min_det: if det_worst.is_some() { Some(det_min) } else { None },
            det_worst_point: det_worst,
            samples_used: points.len(),
            failures,
            strata_reports,
        })
    }

    fn point_row(&self, p: &[f64], margin: f64) -> Result<PointRow> {
        let off_locus = self.locus_distance(p) > margin;
        // Entries must evaluate everywhere except possibly on the declared
        // strata themselves.
        let m = match self.matrix_at(p) {
            Ok(m) => m,
            Err(e) => {
                if off_locus {
                    return Err(e);
                } else {
                    return Ok(PointRow {
                        point: p.to_vec(),
                        min_eig: f64::INFINITY,
                        off_locus_det: None,
                    });
                }
            }
        };
        let eigs = m.symmetric_eigenvalues();
        let min_eig = eigs.iter().copied().fold(f64::INFINITY, f64::min);
        let det = m.determinant();
        Ok(PointRow {
            point: p.to_vec(),
            min_eig,
            off_locus_det: off_locus.then_some(det),
        })
    }

    /// Uniform samples plus probes on every coordinate subspace of
    /// codimension one and two (and the origin in low dimension). The
    /// probes are what catch undeclared degeneracy: uniform samples are
    /// never on a subspace.
    fn sample_points(&self, opts: &ValidateOptions) -> Vec<Vec<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
        let mut points = Vec::with_capacity(opts.samples + 8 * self.dim * self.dim);
        for _ in 0..opts.samples {
            points.push(self.random_point(&mut rng));
        }
        let mut subsets: Vec<Vec<usize>> = (0..self.dim).map(|i| vec![i]).collect();
        for i in 0..self.dim {
            for j in i + 1..self.dim {
                subsets.push(vec![i, j]);
            }
        }
        if self.dim <= 3 {
            subsets.push((0..self.dim).collect());
        }
        for subset in subsets {
            for _ in 0..4 {
                let mut p = self.random_point(&mut rng);
                for &i in &subset {
                    p[i] = 0.0;
                }
                points.push(p);
            }
        }
        points
    }

    fn random_point(&self, rng: &mut ChaCha8Rng) -> Vec<f64> {
        self.domain_box
            .iter()
            .map(|(lo, hi)| rng.gen_range(*lo..*hi))
            .collect()
    }

    /// A deterministic generic point of a stratum (coordinates on the
    /// stratum zero, the rest random but fixed by the seed).
    fn stratum_probe(&self, s: &Stratum, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
        let mut p = self.random_point(&mut rng);
        for &i in s.vanishing() {
            p[i] = 0.0;
        }
        p
    }

    /// Parse the textual metric format; see [`OddMetric::to_spec_string`]
    /// for the emitted shape.
    pub fn parse_spec(text: &str) -> std::result::Result<OddMetric, MetricFileError> {
        parse_spec(text)
    }

    /// Canonical emission: stable ordering, one entry per nonzero upper
    /// triangle slot, 1-based indices, ranges joined by `..`.
    pub fn to_spec_string(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("dim = {}\n", self.dim));
        out.push_str(&format!("coords = {}\n", self.coords.join(", ")));
        for i in 0..self.dim {
            for j in i..self.dim {
                let e = self.entry(i, j);
                if e.is_const(0.0) {
                    continue;
                }
                out.push_str(&format!("g[{}][{}] = {}\n", i + 1, j + 1, e));
            }
        }
        for s in &self.strata {
            let ids: Vec<String> = s.vanishing().iter().map(|i| (i + 1).to_string()).collect();
            out.push_str(&format!("stratum = {}\n", ids.join(", ")));
        }
        let ranges: Vec<String> = self
            .domain_box
            .iter()
            .map(|(lo, hi)| format!("{lo}..{hi}"))
            .collect();
        out.push_str(&format!("box = {}\n", ranges.join(", ")));
        out
    }
}

struct PointRow {
    point: Vec<f64>,
    min_eig: f64,
    off_locus_det: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct ValidateOptions {
    pub samples: usize,
    pub seed: u64,
    pub tol: f64,
}

impl Default for ValidateOptions {
    fn default() -> Self {
        ValidateOptions {
            samples: DEFAULT_VALIDATE_SAMPLES,
            seed: 0,
            tol: DEFAULT_VALIDATE_TOL,
        }
    }
}

#[derive(Debug)]
pub struct ValidationReport {
    pub verdict: bool,
    pub psd_min_eigenvalue: f64,
    pub psd_worst_point: Vec<f64>,
    /// Minimum determinant over samples off the declared strata, if any
    /// sample qualified.
    pub off_locus_min_det: Option<f64>,
    pub det_worst_point: Option<Vec<f64>>,
    pub samples_used: usize,
    pub failures: Vec<String>,
    pub strata_reports: Vec<StratumReport>,
}

#[derive(Debug)]
pub struct StratumReport {
    pub stratum: Stratum,
    /// Count of vanishing eigenvalues of the ambient metric at a generic
    /// point of this stratum.
    pub rank_at_probe: usize,
    pub probe: Vec<f64>,
    pub report: ValidationReport,
}

pub(crate) fn pack_index(dim: usize, i: usize, j: usize) -> usize {
    debug_assert!(i <= j && j < dim);
    i * dim - i * (i + 1) / 2 + j
}

fn parse_spec(text: &str) -> std::result::Result<OddMetric, MetricFileError> {
    let mut dim: Option<usize> = None;
    let mut coords: Option<Vec<String>> = None;
    let mut raw_entries: Vec<(usize, usize, String, usize)> = Vec::new();
    let mut strata: Vec<Stratum> = Vec::new();
    let mut domain_box: Option<Vec<(f64, f64)>> = None;

    for (lineno, raw) in text.lines().enumerate() {
        let line = lineno + 1;
        let content = match raw.find('#') {
            Some(i) => &raw[..i],
            None => raw,
        }
        .trim();
        if content.is_empty() {
            continue;
        }
        let (key, value) = content.split_once('=').ok_or_else(|| MetricFileError::Malformed {
            line,
            what: "expected key = value".into(),
        })?;
        let key = key.trim();
        let value = value.trim();
        match key {
            "dim" => {
                dim = Some(value.parse().map_err(|_| MetricFileError::Malformed {
                    line,
                    what: format!("bad dimension {value:?}"),
                })?);
            }
            "coords" => {
                coords = Some(value.split(',').map(|c| c.trim().to_string()).collect());
            }
            "stratum" => {
                let mut ids = Vec::new();
                for tok in value.split(',') {
                    let one: usize = tok.trim().parse().map_err(|_| MetricFileError::Malformed {
                        line,
                        what: format!("bad coordinate index {tok:?}"),
                    })?;
                    if one == 0 {
                        return Err(MetricFileError::Malformed {
                            line,
                            what: "stratum indices are 1-based".into(),
                        });
                    }
                    ids.push(one - 1);
                }
                strata.push(Stratum::new(ids));
            }
            "box" => {
                let mut ranges = Vec::new();
                for tok in value.split(',') {
                    let tok = tok.trim();
                    let (lo, hi) = tok.split_once("..").ok_or_else(|| MetricFileError::Malformed {
                        line,
                        what: format!("bad range {tok:?}, expected lo..hi"),
                    })?;
                    let lo: f64 = lo.trim().parse().map_err(|_| MetricFileError::Malformed {
                        line,
                        what: format!("bad number {lo:?}"),
                    })?;
                    let hi: f64 = hi.trim().parse().map_err(|_| MetricFileError::Malformed {
                        line,
                        what: format!("bad number {hi:?}"),
                    })?;
                    ranges.push((lo, hi));
                }
                domain_box = Some(ranges);
            }
            _ if key.starts_with("g[") => {
                let idx: Vec<&str> = key
                    .trim_start_matches("g[")
                    .trim_end_matches(']')
                    .split("][")
                    .collect();
                if idx.len() != 2 {
                    return Err(MetricFileError::Malformed {
                        line,
                        what: format!("bad entry key {key:?}"),
                    });
                }
                let i: usize = idx[0].parse().map_err(|_| MetricFileError::Malformed {
                    line,
                    what: format!("bad index {:?}", idx[0]),
                })?;
                let j: usize = idx[1].parse().map_err(|_| MetricFileError::Malformed {
                    line,
                    what: format!("bad index {:?}", idx[1]),
                })?;
                if i == 0 || j == 0 || j < i {
                    return Err(MetricFileError::Malformed {
                        line,
                        what: "entries are 1-based upper triangle (i <= j)".into(),
                    });
                }
                raw_entries.push((i - 1, j - 1, value.to_string(), line));
            }
            _ => {
                return Err(MetricFileError::Malformed {
                    line,
                    what: format!("unknown key {key:?}"),
                })
            }
        }
    }

    let dim = dim.ok_or(MetricFileError::MissingKey { key: "dim" })?;
    let coords = coords.ok_or(MetricFileError::MissingKey { key: "coords" })?;
    if coords.len() != dim {
        return Err(MetricFileError::Malformed {
            line: 0,
            what: format!("dim = {dim} but {} coordinates listed", coords.len()),
        });
    }
    let domain_box = domain_box.ok_or(MetricFileError::MissingKey { key: "box" })?;
    if domain_box.len() != dim {
        return Err(MetricFileError::Malformed {
            line: 0,
            what: format!("dim = {dim} but {} box ranges listed", domain_box.len()),
        });
    }

    let names: Vec<&str> = coords.iter().map(|s| s.as_str()).collect();
    let mut entries = vec![Expr::zero(); dim * (dim + 1) / 2];
    for (i, j, src, line) in raw_entries {
        if j >= dim {
            return Err(MetricFileError::Malformed {
                line,
                what: format!("entry index {} out of range for dim {dim}", j + 1),
            });
        }
        let e = crate::expr::parse(&src, &names)
            .map_err(|err| MetricFileError::BadExpr { line, err })?;
        entries[pack_index(dim, i, j)] = e;
    }

    OddMetric::new(coords, entries, strata, domain_box).map_err(|e| MetricFileError::Malformed {
        line: 0,
        what: e.to_string(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::parse;

    fn line_x2() -> OddMetric {
        OddMetric::new(
            vec!["x".into()],
            vec![parse("x^2", &["x"]).unwrap()],
            vec![Stratum::new(vec![0])],
            vec![(-2.0, 2.0)],
        )
        .unwrap()
    }

    fn r3_h() -> OddMetric {
        let names = ["x", "y", "z"];
        OddMetric::diagonal(
            names.iter().map(|s| s.to_string()).collect(),
            vec![
                parse("x^2 + z^2", &names).unwrap(),
                Expr::one(),
                parse("(x^2 + z^2)*(y^2 + z^2)", &names).unwrap(),
            ],
            vec![Stratum::new(vec![0, 2]), Stratum::new(vec![1, 2])],
            vec![(-1.0, 1.0); 3],
        )
        .unwrap()
    }

    #[test]
    fn symmetry_is_shared_storage() {
        let m = r3_h();
        assert!(std::ptr::eq(m.entry(0, 2), m.entry(2, 0)));
    }

    #[test]
    fn validate_passes_with_declared_strata() {
        let report = line_x2().validate(&ValidateOptions::default()).unwrap();
        assert!(report.verdict, "failures: {:?}", report.failures);
        assert!(report.psd_min_eigenvalue >= -1e-9);
    }

    #[test]
    fn validate_fails_when_strata_are_missing() {
        // same entries as the cross metric but nothing declared: the probe
        // points on the axes see a vanishing determinant
        let names = ["x", "y"];
        let m = OddMetric::new(
            vec!["x".into(), "y".into()],
            vec![
                parse("x^2 + y^2", &names).unwrap(),
                parse("y^2 - x^2", &names).unwrap(),
                parse("x^2 + y^2", &names).unwrap(),
            ],
            vec![],
            vec![(-5.0, 5.0); 2],
        )
        .unwrap();
        let report = m.validate(&ValidateOptions::default()).unwrap();
        assert!(!report.verdict);
    }

    #[test]
    fn entry_pole_off_locus_is_a_hard_error() {
        let m = OddMetric::new(
            vec!["x".into()],
            vec![parse("1/x", &["x"]).unwrap()],
            vec![],
            vec![(-1.0, 1.0)],
        )
        .unwrap();
        assert!(matches!(
            m.validate(&ValidateOptions::default()),
            Err(OddError::EvaluationFailure { .. })
        ));
    }

    #[test]
    fn degenerate_ranks_on_the_axes() {
        let m = r3_h();
        // y-axis: two vanishing eigenvalues; x-axis: one
        assert_eq!(m.degenerate_rank(&[0.0, 0.5, 0.0], 1e-9).unwrap(), 2);
        assert_eq!(m.degenerate_rank(&[0.7, 0.0, 0.0], 1e-9).unwrap(), 1);
        assert_eq!(m.degenerate_rank(&[0.5, 0.5, 0.5], 1e-9).unwrap(), 0);
    }

    #[test]
    fn restriction_to_the_x_axis() {
        let m = r3_h();
        // {y = z = 0} leaves the 1-dimensional metric x^2 dx^2
        let r = m.restrict(&Stratum::new(vec![1, 2])).unwrap();
        assert_eq!(r.dim(), 1);
        assert_eq!(r.entry(0, 0), &parse("x^2", &["x"]).unwrap());
        // the inherited origin stratum comes from {x = z = 0}
        assert_eq!(r.strata().len(), 1);
        assert_eq!(r.strata()[0].vanishing(), &[0]);
    }

    #[test]
    fn restriction_is_a_valid_metric_again() {
        let m = r3_h();
        for s in m.strata() {
            let r = m.restrict(s).unwrap();
            let report = r.validate(&ValidateOptions::default()).unwrap();
            assert!(report.verdict, "failures: {:?}", report.failures);
        }
    }

    #[test]
    fn spec_file_roundtrip_is_byte_stable() {
        let m = r3_h();
        let text = m.to_spec_string();
        let back = OddMetric::parse_spec(&text).unwrap();
        assert_eq!(back.to_spec_string(), text);
        assert_eq!(back.dim(), 3);
        assert_eq!(back.strata().len(), 2);
    }

    #[test]
    fn spec_file_errors_carry_line_numbers() {
        let bad = "dim = 2\ncoords = x, y\ng[2][1] = x\nbox = 0..1, 0..1\n";
        match OddMetric::parse_spec(bad) {
            Err(MetricFileError::Malformed { line, .. }) => assert_eq!(line, 3),
            other => panic!("expected malformed entry, got {other:?}"),
        }
        let bad = "dim = 2\ncoords = x, y\ng[1][2] = x +\nbox = 0..1, 0..1\n";
        assert!(matches!(
            OddMetric::parse_spec(bad),
            Err(MetricFileError::BadExpr { line: 3, .. })
        ));
    }
}
