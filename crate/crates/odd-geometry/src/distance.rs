//! Distance estimates from shortest grid paths, refined in place.
//!
//! The distance between two points is the infimum of lengths over
//! piecewise regular curves joining them; everything here approaches it
//! from above. Stage one lays a lattice over the domain box, joins each
//! node to its full diagonal neighborhood, weighs every edge with an open
//! five-point Gauss rule on the straight segment (the speed may vanish or
//! kink where the segment meets the locus, so the rule avoids endpoints),
//! and runs Dijkstra. Stage two perturbs the interior polyline vertices
//! coordinate by coordinate with a halving step, inserting midpoints as
//! the step shrinks, until a full sweep improves the length by less than
//! the query tolerance. The reported value is the measured length of the
//! witness curve, so it stays an upper bound no matter how early the
//! descent was cut off; checks that compare estimates against each other
//! carry slack in multiples of the tolerance.

use std::collections::BinaryHeap;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::curve::{PiecewiseCurve, Segment};
use crate::error::{OddError, Result};
use crate::expr::{Program, EPS_POLE};
use crate::metric::OddMetric;
use crate::spline::CubicHermite;

/// Endpoints plus the estimator's effort knobs.
#[derive(Clone, Debug)]
pub struct DistanceQuery {
    pub p: Vec<f64>,
    pub q: Vec<f64>,
    /// Lattice cells per axis in the shortest-path stage.
    pub grid: usize,
    /// Maximum descent sweeps in the refinement stage.
    pub refine_budget: usize,
    /// Relative improvement below which a sweep counts as stalled; also
    /// the accuracy scale assumed by downstream comparisons.
    pub tolerance: f64,
}

impl DistanceQuery {
    pub fn new(p: Vec<f64>, q: Vec<f64>) -> DistanceQuery {
        DistanceQuery {
            p,
            q,
            grid: 32,
            refine_budget: 48,
            tolerance: 1e-4,
        }
    }
}

/// An upper bound for the distance and the curve that attains it.
#[derive(Clone, Debug)]
pub struct DistanceEstimate {
    pub value: f64,
    pub witness: PiecewiseCurve,
}

/// Upper bound for the distance between `query.p` and `query.q` with a
/// witness polyline. The witness length is re-measured with an adaptive
/// quadrature at 1e-10, so `value` and `witness.length` agree to that
/// accuracy by construction.
pub fn distance_estimate(m: &OddMetric, query: &DistanceQuery) -> Result<DistanceEstimate> {
    for pt in [&query.p, &query.q] {
        if !m.contains(pt) {
            return Err(OddError::UnreachableWithinBox {
                from: query.p.clone(),
                to: query.q.clone(),
            });
        }
    }
    if points_coincide(&query.p, &query.q) {
        let witness = constant_curve(&query.p)?;
        return Ok(DistanceEstimate {
            value: 0.0,
            witness,
        });
    }
    let table = SpeedTable::new(m);
    let lattice = Lattice::build(m, &table, query.grid)?;
    let verts = solve_polyline(m, &table, &lattice, query)?;
    let witness = polyline_curve(&verts)?;
    let value = witness.length(m, 1e-10)?;
    Ok(DistanceEstimate { value, witness })
}

/// One symmetrized pair distance inside a report.
#[derive(Clone, Debug)]
pub struct PairDistance {
    pub i: usize,
    pub j: usize,
    pub value: f64,
}

/// A failed check with its witnesses; `points` are indices into the
/// report's point list.
#[derive(Clone, Debug)]
pub struct CheckViolation {
    pub check: &'static str,
    pub points: Vec<usize>,
    pub value: f64,
    pub bound: f64,
}

#[derive(Clone, Debug)]
pub struct MetricSpaceReport {
    pub points: Vec<Vec<f64>>,
    pub pairs: Vec<PairDistance>,
    pub violations: Vec<CheckViolation>,
    /// Estimator accuracy scale the slacks were computed from.
    pub tolerance: f64,
    pub pass: bool,
}

/// Check the metric-space axioms on sampled points: identity of
/// indiscernibles at the estimator floor, positivity for distinct points,
/// and the triangle inequality with slack. Symmetry holds by construction
/// because each unordered pair is estimated exactly once. With an empty
/// point list, ten points are drawn from the domain box using the seed.
///
/// The estimator only produces upper bounds, so a triple can violate the
/// raw triangle inequality by the estimation error of its long side; the
/// slack 3 * tolerance * max(1, d(p,q) + d(q,r)) covers that.
pub fn metric_space_check(
    m: &OddMetric,
    sample_points: &[Vec<f64>],
    seed: u64,
) -> Result<MetricSpaceReport> {
    let tolerance = 1e-2;
    let points: Vec<Vec<f64>> = if sample_points.is_empty() {
        draw_points(m, 10, seed)
    } else {
        sample_points.to_vec()
    };
    for p in &points {
        if !m.contains(p) {
            return Err(OddError::InvalidArgument {
                what: format!("sample point {p:?} is outside the domain box"),
            });
        }
    }
    let query_shape = DistanceQuery {
        p: Vec::new(),
        q: Vec::new(),
        grid: 32,
        refine_budget: 16,
        tolerance,
    };
    let table = SpeedTable::new(m);
    let lattice = Lattice::build(m, &table, query_shape.grid)?;

    let k = points.len();
    let mut dist = vec![vec![0.0f64; k]; k];
    let mut pairs = Vec::with_capacity(k * (k - 1) / 2);
    for i in 0..k {
        for j in (i + 1)..k {
            let mut q = query_shape.clone();
            q.p = points[i].clone();
            q.q = points[j].clone();
            let value = if points_coincide(&q.p, &q.q) {
                0.0
            } else {
                let verts = solve_polyline(m, &table, &lattice, &q)?;
                polyline_gauss_length(&table, &verts)
            };
            dist[i][j] = value;
            dist[j][i] = value;
            pairs.push(PairDistance { i, j, value });
        }
    }

    let mut violations = Vec::new();
    for i in 0..k {
        // d(p,p) through the estimator, not by fiat.
        let mut q = query_shape.clone();
        q.p = points[i].clone();
        q.q = points[i].clone();
        let dii = distance_estimate(m, &q)?.value;
        if dii != 0.0 {
            violations.push(CheckViolation {
                check: "identity",
                points: vec![i],
                value: dii,
                bound: 0.0,
            });
        }
    }
    for pr in &pairs {
        let apart = !points_coincide(&points[pr.i], &points[pr.j]);
        if apart && pr.value <= 1e-9 {
            violations.push(CheckViolation {
                check: "positivity",
                points: vec![pr.i, pr.j],
                value: pr.value,
                bound: 1e-9,
            });
        }
    }
    for i in 0..k {
        for j in 0..k {
            for l in 0..k {
                if i == j || j == l || i == l {
                    continue;
                }
                let lhs = dist[i][l];
                let sum = dist[i][j] + dist[j][l];
                let bound = sum + 3.0 * tolerance * sum.max(1.0);
                if lhs > bound {
                    violations.push(CheckViolation {
                        check: "triangle",
                        points: vec![i, j, l],
                        value: lhs,
                        bound,
                    });
                }
            }
        }
    }
    let pass = violations.is_empty();
    Ok(MetricSpaceReport {
        points,
        pairs,
        violations,
        tolerance,
        pass,
    })
}

/// Distance behavior on one ball around the base point.
#[derive(Clone, Debug)]
pub struct ComparisonRow {
    pub radius: f64,
    /// Largest ratio of metric distance to Euclidean distance over the
    /// sampled ball.
    pub c_factor: f64,
    /// Smallest metric distance to the sampled boundary sphere.
    pub d_floor: f64,
    /// Largest metric distance to the sampled boundary sphere.
    pub d_ceil: f64,
    pub samples: usize,
}

#[derive(Clone, Debug)]
pub struct ComparisonReport {
    pub point: Vec<f64>,
    pub rows: Vec<ComparisonRow>,
}

/// Sample the comparison constants around a point: for each radius, the
/// factor C bounding d(p, q) <= C |p - q| over the ball, and the floor
/// D = min d(p, q) over the boundary sphere, which is positive when the
/// estimator sees the ball the way the metric does. Both are estimates
/// from finitely many directions with no ground truth; out-of-box sample
/// points are skipped and reduce the count.
pub fn comparison_lemma_check(
    m: &OddMetric,
    p: &[f64],
    radii: &[f64],
) -> Result<ComparisonReport> {
    if !m.contains(p) {
        return Err(OddError::UnreachableWithinBox {
            from: p.to_vec(),
            to: p.to_vec(),
        });
    }
    let table = SpeedTable::new(m);
    let query_shape = DistanceQuery {
        p: Vec::new(),
        q: Vec::new(),
        grid: 24,
        refine_budget: 16,
        tolerance: 1e-3,
    };
    let lattice = Lattice::build(m, &table, query_shape.grid)?;
    let dirs = unit_directions(m.dim());
    let fractions = [0.25, 0.5, 0.75, 1.0];

    let mut rows = Vec::with_capacity(radii.len());
    for &radius in radii {
        let mut c_factor = f64::NEG_INFINITY;
        let mut d_floor = f64::INFINITY;
        let mut d_ceil = f64::NEG_INFINITY;
        let mut samples = 0usize;
        for dir in &dirs {
            for &f in &fractions {
                let q_pt: Vec<f64> = p
                    .iter()
                    .zip(dir)
                    .map(|(pi, di)| pi + f * radius * di)
                    .collect();
                if !m.contains(&q_pt) || points_coincide(p, &q_pt) {
                    continue;
                }
                let mut q = query_shape.clone();
                q.p = p.to_vec();
                q.q = q_pt.clone();
                let verts = solve_polyline(m, &table, &lattice, &q)?;
                let value = polyline_gauss_length(&table, &verts);
                let euclid = euclid_dist(p, &q_pt);
                c_factor = c_factor.max(value / euclid);
                if f == 1.0 {
                    d_floor = d_floor.min(value);
                    d_ceil = d_ceil.max(value);
                }
                samples += 1;
            }
        }
        rows.push(ComparisonRow {
            radius,
            c_factor,
            d_floor,
            d_ceil,
            samples,
        });
    }
    Ok(ComparisonReport {
        point: p.to_vec(),
        rows,
    })
}

// ---------------------------------------------------------------------
// Segment lengths

/// Gauss-Legendre nodes and weights on [0, 1].
const GAUSS5: [(f64, f64); 5] = [
    (0.046910077030668074, 0.118463442528094544),
    (0.230765344947158454, 0.239314335249683234),
    (0.5, 0.284444444444444444),
    (0.769234655052841546, 0.239314335249683234),
    (0.953089922969331926, 0.118463442528094544),
];

/// Compiled packed metric entries for tight evaluation loops.
struct SpeedTable {
    dim: usize,
    entries: Vec<Program>,
}

impl SpeedTable {
    fn new(m: &OddMetric) -> SpeedTable {
        SpeedTable {
            dim: m.dim(),
            entries: m.entries_packed().iter().map(|e| e.compile()).collect(),
        }
    }

    /// g(d, d) at a point; None when an entry fails to evaluate.
    fn speed_sq(&self, point: &[f64], d: &[f64], stack: &mut Vec<f64>) -> Option<f64> {
        let n = self.dim;
        let mut acc = 0.0;
        let mut idx = 0;
        for i in 0..n {
            for j in i..n {
                let g = self.entries[idx]
                    .eval_with(point, EPS_POLE, stack)
                    .as_finite()?;
                let w = if i == j { 1.0 } else { 2.0 };
                acc += w * g * d[i] * d[j];
                idx += 1;
            }
        }
        Some(acc)
    }

    /// Length of the straight segment from a to b by the open 5-point
    /// rule; infinite when the metric fails to evaluate on it.
    fn segment_length(&self, a: &[f64], b: &[f64], stack: &mut Vec<f64>) -> f64 {
        let n = self.dim;
        let mut d = vec![0.0; n];
        for i in 0..n {
            d[i] = b[i] - a[i];
        }
        self.gauss_span(a, &d, 0.0, 1.0, stack)
    }

    fn gauss_span(&self, a: &[f64], d: &[f64], t0: f64, t1: f64, stack: &mut Vec<f64>) -> f64 {
        let n = self.dim;
        let mut point = vec![0.0; n];
        let mut acc = 0.0;
        for (t, w) in GAUSS5 {
            let tt = t0 + t * (t1 - t0);
            for i in 0..n {
                point[i] = a[i] + tt * d[i];
            }
            match self.speed_sq(&point, d, stack) {
                // Roundoff can push a degenerate form slightly negative.
                Some(s) if s.is_finite() => acc += w * s.max(0.0).sqrt(),
                _ => return f64::INFINITY,
            }
        }
        acc * (t1 - t0)
    }

    /// Segment length by adaptive bisection of the 5-point rule. Edge
    /// weights need this accuracy: Dijkstra compares paths across nested
    /// lattices, and the fixed rule's error on segments whose speed is
    /// singular at an endpoint is large enough to reorder them.
    fn segment_length_tight(&self, a: &[f64], b: &[f64], stack: &mut Vec<f64>) -> f64 {
        let n = self.dim;
        let mut d = vec![0.0; n];
        for i in 0..n {
            d[i] = b[i] - a[i];
        }
        let whole = self.gauss_span(a, &d, 0.0, 1.0, stack);
        if !whole.is_finite() {
            return f64::INFINITY;
        }
        let tol = 1e-12 * (1.0 + whole.abs());
        self.bisect_span(a, &d, 0.0, 1.0, whole, tol, 14, stack)
    }

    fn bisect_span(
        &self,
        a: &[f64],
        d: &[f64],
        t0: f64,
        t1: f64,
        whole: f64,
        tol: f64,
        depth: usize,
        stack: &mut Vec<f64>,
    ) -> f64 {
        let tm = 0.5 * (t0 + t1);
        let left = self.gauss_span(a, d, t0, tm, stack);
        let right = self.gauss_span(a, d, tm, t1, stack);
        let split = left + right;
        if !split.is_finite() {
            return f64::INFINITY;
        }
        if depth == 0 || (split - whole).abs() <= tol {
            return split;
        }
        self.bisect_span(a, d, t0, tm, left, 0.5 * tol, depth - 1, stack)
            + self.bisect_span(a, d, tm, t1, right, 0.5 * tol, depth - 1, stack)
    }
}

fn polyline_gauss_length(table: &SpeedTable, verts: &[Vec<f64>]) -> f64 {
    let mut stack = Vec::new();
    verts
        .windows(2)
        .map(|w| table.segment_length(&w[0], &w[1], &mut stack))
        .sum()
}

// ---------------------------------------------------------------------
// Stage one: lattice shortest path

struct Lattice {
    cells: usize,
    nodes_per_axis: usize,
    node_count: usize,
    lo: Vec<f64>,
    spacing: Vec<f64>,
    /// Adjacency as (neighbor, weight), both directions stored.
    adj: Vec<Vec<(u32, f64)>>,
}

impl Lattice {
    fn build(m: &OddMetric, table: &SpeedTable, cells: usize) -> Result<Lattice> {
        let n = m.dim();
        let cells = cells.max(2);
        let nodes_per_axis = cells + 1;
        let node_count = nodes_per_axis.pow(n as u32);
        if node_count > 2_000_000 {
            return Err(OddError::InvalidArgument {
                what: format!(
                    "grid of {cells} cells in dimension {n} needs {node_count} nodes"
                ),
            });
        }
        let box_ = m.domain_box();
        let lo: Vec<f64> = box_.iter().map(|(a, _)| *a).collect();
        let spacing: Vec<f64> = box_
            .iter()
            .map(|(a, b)| (b - a) / cells as f64)
            .collect();

        // Offsets with a positive leading component cover each undirected
        // edge exactly once.
        let offsets: Vec<Vec<i64>> = moore_offsets(n)
            .into_iter()
            .filter(|off| off.iter().find(|&&d| d != 0) == Some(&1))
            .collect();

        let lat = Lattice {
            cells,
            nodes_per_axis,
            node_count,
            lo,
            spacing,
            adj: Vec::new(),
        };
        let halves: Vec<(u32, u32, f64)> = (0..node_count)
            .into_par_iter()
            .map_init(Vec::new, |stack, a| {
                let ka = lat.unflatten(a);
                let pa = lat.point(&ka);
                let mut out = Vec::new();
                for off in &offsets {
                    let mut kb = ka.clone();
                    let mut inside = true;
                    for (c, d) in kb.iter_mut().zip(off) {
                        let v = *c as i64 + d;
                        if v < 0 || v > lat.cells as i64 {
                            inside = false;
                            break;
                        }
                        *c = v as usize;
                    }
                    if !inside {
                        continue;
                    }
                    let b = lat.flatten(&kb);
                    let w = table.segment_length_tight(&pa, &lat.point(&kb), stack);
                    if w.is_finite() {
                        out.push((a as u32, b as u32, w));
                    }
                }
                out
            })
            .flatten()
            .collect();

        let mut adj: Vec<Vec<(u32, f64)>> = vec![Vec::new(); node_count];
        for (a, b, w) in halves {
            adj[a as usize].push((b, w));
            adj[b as usize].push((a, w));
        }
        Ok(Lattice { adj, ..lat })
    }

    fn unflatten(&self, mut idx: usize) -> Vec<usize> {
        let n = self.spacing.len();
        let mut k = vec![0usize; n];
        for j in (0..n).rev() {
            k[j] = idx % self.nodes_per_axis;
            idx /= self.nodes_per_axis;
        }
        k
    }

    fn flatten(&self, k: &[usize]) -> usize {
        let mut idx = 0usize;
        for &kj in k {
            idx = idx * self.nodes_per_axis + kj;
        }
        idx
    }

    fn point(&self, k: &[usize]) -> Vec<f64> {
        k.iter()
            .enumerate()
            .map(|(j, &kj)| self.lo[j] + kj as f64 * self.spacing[j])
            .collect()
    }

    /// Corner nodes of the cell containing a free point, for tying query
    /// endpoints into the graph. Links must not span more than one cell:
    /// longer ones are absent from finer lattices and would break the
    /// monotonicity of the estimate under grid refinement.
    fn nearby_nodes(&self, x: &[f64]) -> Vec<usize> {
        let n = self.spacing.len();
        let mut ranges: Vec<Vec<usize>> = Vec::with_capacity(n);
        for j in 0..n {
            let c = ((x[j] - self.lo[j]) / self.spacing[j]).floor() as i64;
            let mut opts = Vec::new();
            for d in 0..=1i64 {
                let v = (c + d).clamp(0, self.cells as i64);
                if opts.last() != Some(&(v as usize)) {
                    opts.push(v as usize);
                }
            }
            ranges.push(opts);
        }
        let mut nodes = vec![Vec::new()];
        for r in &ranges {
            let mut next = Vec::with_capacity(nodes.len() * r.len());
            for partial in &nodes {
                for &v in r {
                    let mut k: Vec<usize> = partial.clone();
                    k.push(v);
                    next.push(k);
                }
            }
            nodes = next;
        }
        nodes.iter().map(|k| self.flatten(k)).collect()
    }
}

fn moore_offsets(n: usize) -> Vec<Vec<i64>> {
    let mut out = Vec::with_capacity(3usize.pow(n as u32) - 1);
    for code in 0..3usize.pow(n as u32) {
        let mut c = code;
        let mut off = vec![0i64; n];
        for item in off.iter_mut() {
            *item = (c % 3) as i64 - 1;
            c /= 3;
        }
        if off.iter().any(|&d| d != 0) {
            out.push(off);
        }
    }
    out
}

#[derive(PartialEq)]
struct HeapEntry(f64, u32);

impl Eq for HeapEntry {}

impl Ord for HeapEntry {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        // Reversed: BinaryHeap is a max-heap, Dijkstra wants the minimum.
        other.0.total_cmp(&self.0)
    }
}

impl PartialOrd for HeapEntry {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

/// Dijkstra from p to q over the lattice plus the two endpoint nodes,
/// then refinement; returns the polyline vertices.
fn solve_polyline(
    m: &OddMetric,
    table: &SpeedTable,
    lattice: &Lattice,
    query: &DistanceQuery,
) -> Result<Vec<Vec<f64>>> {
    let total = lattice.node_count + 2;
    let (src, dst) = (lattice.node_count, lattice.node_count + 1);
    let mut stack = Vec::new();

    // Endpoint links into the surrounding cells.
    let link = |x: &[f64], stack: &mut Vec<f64>| -> Vec<(u32, f64)> {
        lattice
            .nearby_nodes(x)
            .into_iter()
            .filter_map(|node| {
                let k = lattice.unflatten(node);
                let w = table.segment_length_tight(x, &lattice.point(&k), stack);
                w.is_finite().then_some((node as u32, w))
            })
            .collect()
    };
    let p_links = link(&query.p, &mut stack);
    let q_links = link(&query.q, &mut stack);
    let direct = {
        let near = query
            .p
            .iter()
            .zip(&query.q)
            .zip(&lattice.spacing)
            .all(|((a, b), h)| (a - b).abs() <= 2.0 * h);
        if near {
            table.segment_length_tight(&query.p, &query.q, &mut stack)
        } else {
            f64::INFINITY
        }
    };

    let mut dist = vec![f64::INFINITY; total];
    let mut prev = vec![u32::MAX; total];
    let mut done = vec![false; total];
    let mut heap = BinaryHeap::new();
    dist[src] = 0.0;
    heap.push(HeapEntry(0.0, src as u32));
    while let Some(HeapEntry(d, u)) = heap.pop() {
        let u = u as usize;
        if done[u] {
            continue;
        }
        done[u] = true;
        if u == dst {
            break;
        }
        let mut relax = |v: usize, w: f64| {
            if d + w < dist[v] {
                dist[v] = d + w;
                prev[v] = u as u32;
                heap.push(HeapEntry(dist[v], v as u32));
            }
        };
        if u == src {
            for &(v, w) in &p_links {
                relax(v as usize, w);
            }
            if direct.is_finite() {
                relax(dst, direct);
            }
        } else {
            for &(v, w) in &lattice.adj[u] {
                relax(v as usize, w);
            }
            for &(v, w) in &q_links {
                if v as usize == u {
                    relax(dst, w);
                }
            }
        }
    }
    if !dist[dst].is_finite() {
        return Err(OddError::UnreachableWithinBox {
            from: query.p.clone(),
            to: query.q.clone(),
        });
    }

    let mut verts: Vec<Vec<f64>> = Vec::new();
    let mut at = dst;
    while at != src {
        let pt = if at == dst {
            query.q.clone()
        } else {
            lattice.point(&lattice.unflatten(at))
        };
        verts.push(pt);
        at = prev[at] as usize;
    }
    verts.push(query.p.clone());
    verts.reverse();
    verts.dedup_by(|a, b| points_coincide(a, b));

    Ok(refine_polyline(m, table, lattice, verts, query))
}

// ---------------------------------------------------------------------
// Stage two: descent on the polyline

/// Coarse-to-fine descent with the endpoints pinned: resample the path to
/// a handful of segments, relax the vertices coordinate by coordinate
/// with a halving step, then insert midpoints and relax again until the
/// segment budget is reached. Coordinate relaxation alone propagates
/// shape changes one vertex per sweep, so starting fine would take a
/// number of sweeps quadratic in the vertex count; converging each coarse
/// level first makes the fine levels local touch-ups. The caller gets
/// whichever polyline measures shorter, the refined one or the input.
fn refine_polyline(
    m: &OddMetric,
    table: &SpeedTable,
    lattice: &Lattice,
    verts: Vec<Vec<f64>>,
    query: &DistanceQuery,
) -> Vec<Vec<f64>> {
    if verts.len() < 2 || query.refine_budget == 0 {
        return verts;
    }
    let _ = lattice;
    let box_ = m.domain_box();
    let max_segments = (2 * query.grid).clamp(32, 256);
    let mut stack = Vec::new();

    let mut current = resample(&verts, 8.min(max_segments));
    loop {
        descend(table, box_, &mut current, query, &mut stack);
        if current.len() - 1 >= max_segments {
            break;
        }
        current = resample(&current, 2 * (current.len() - 1));
    }

    // A coarse resample can straighten through an expensive region and
    // descend into a worse valley; never return a longer path.
    if polyline_gauss_length(table, &current) < polyline_gauss_length(table, &verts) {
        current
    } else {
        verts
    }
}

/// Relax interior vertices at one resolution until a sweep at the floor
/// step stops paying.
fn descend(
    table: &SpeedTable,
    box_: &[(f64, f64)],
    verts: &mut [Vec<f64>],
    query: &DistanceQuery,
    stack: &mut Vec<f64>,
) {
    let n = table.dim;
    let mut seglen: Vec<f64> = verts
        .windows(2)
        .map(|w| table.segment_length(&w[0], &w[1], stack))
        .collect();
    let mean_chord = verts
        .windows(2)
        .map(|w| euclid_dist(&w[0], &w[1]))
        .sum::<f64>()
        / seglen.len() as f64;
    let mut step = 0.5 * mean_chord;
    let step_floor = (query.tolerance * mean_chord).max(1e-10);

    for _ in 0..query.refine_budget {
        let before: f64 = seglen.iter().sum();
        for i in 1..verts.len() - 1 {
            for j in 0..n {
                'dir: for s in [step, -step] {
                    // Slide while the move keeps paying off, so a sweep is
                    // not limited to one step per vertex.
                    let mut moved = false;
                    for _ in 0..64 {
                        let mut cand = verts[i].clone();
                        cand[j] = (cand[j] + s).clamp(box_[j].0, box_[j].1);
                        if cand[j] == verts[i][j] {
                            break;
                        }
                        let l0 = table.segment_length(&verts[i - 1], &cand, stack);
                        let l1 = table.segment_length(&cand, &verts[i + 1], stack);
                        if l0 + l1 + 1e-15 < seglen[i - 1] + seglen[i] {
                            verts[i] = cand;
                            seglen[i - 1] = l0;
                            seglen[i] = l1;
                            moved = true;
                        } else {
                            break;
                        }
                    }
                    if moved {
                        break 'dir;
                    }
                }
            }
        }
        let after: f64 = seglen.iter().sum();
        if before - after >= query.tolerance * after.max(1e-12) {
            continue;
        }
        if step <= step_floor {
            break;
        }
        step = (0.5 * step).max(step_floor);
    }
}

/// Evenly spaced points along the polyline by Euclidean chord length,
/// endpoints preserved.
fn resample(verts: &[Vec<f64>], segments: usize) -> Vec<Vec<f64>> {
    let segments = segments.max(1);
    let mut cum = Vec::with_capacity(verts.len());
    cum.push(0.0);
    for w in verts.windows(2) {
        let last = *cum.last().unwrap();
        cum.push(last + euclid_dist(&w[0], &w[1]));
    }
    let total = *cum.last().unwrap();
    if total <= 0.0 {
        return vec![verts[0].clone(), verts.last().unwrap().clone()];
    }
    let mut out = Vec::with_capacity(segments + 1);
    out.push(verts[0].clone());
    for s in 1..segments {
        let target = total * s as f64 / segments as f64;
        let i = cum.partition_point(|c| *c < target).clamp(1, cum.len() - 1);
        let (c0, c1) = (cum[i - 1], cum[i]);
        let f = if c1 > c0 { (target - c0) / (c1 - c0) } else { 0.0 };
        let pt: Vec<f64> = verts[i - 1]
            .iter()
            .zip(&verts[i])
            .map(|(a, b)| a + f * (b - a))
            .collect();
        out.push(pt);
    }
    out.push(verts.last().unwrap().clone());
    out
}

// ---------------------------------------------------------------------
// Witness assembly and small helpers

/// Exact polyline as a curve: one linear Hermite span per edge,
/// parametrized by cumulative Euclidean chord length.
fn polyline_curve(verts: &[Vec<f64>]) -> Result<PiecewiseCurve> {
    if verts.len() < 2 {
        return constant_curve(&verts[0]);
    }
    let mut segments = Vec::with_capacity(verts.len() - 1);
    let mut t = 0.0;
    for w in verts.windows(2) {
        let chord = euclid_dist(&w[0], &w[1]).max(1e-14);
        let slope: Vec<f64> = w[0]
            .iter()
            .zip(&w[1])
            .map(|(a, b)| (b - a) / chord)
            .collect();
        segments.push(Segment::Sampled(CubicHermite::new(
            vec![t, t + chord],
            vec![w[0].clone(), w[1].clone()],
            vec![slope.clone(), slope],
        )));
        t += chord;
    }
    PiecewiseCurve::new(segments)
}

fn constant_curve(p: &[f64]) -> Result<PiecewiseCurve> {
    let zero = vec![0.0; p.len()];
    PiecewiseCurve::new(vec![Segment::Sampled(CubicHermite::new(
        vec![0.0, 1.0],
        vec![p.to_vec(), p.to_vec()],
        vec![zero.clone(), zero],
    ))])
}

fn points_coincide(a: &[f64], b: &[f64]) -> bool {
    a.iter()
        .zip(b)
        .all(|(x, y)| (x - y).abs() <= 1e-13 * (1.0 + x.abs().max(y.abs())))
}

fn euclid_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

fn unit_directions(n: usize) -> Vec<Vec<f64>> {
    moore_offsets(n)
        .into_iter()
        .map(|off| {
            let norm = off.iter().map(|d| (*d * *d) as f64).sum::<f64>().sqrt();
            off.iter().map(|d| *d as f64 / norm).collect()
        })
        .collect()
}

fn draw_points(m: &OddMetric, count: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let box_ = m.domain_box();
    (0..count)
        .map(|_| {
            box_.iter()
                .map(|(lo, hi)| {
                    let u: f64 = rng.gen();
                    lo + (0.025 + 0.95 * u) * (hi - lo)
                })
                .collect()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::parse;
    use crate::metric::Stratum;

    fn euclid2() -> OddMetric {
        let names = ["x", "y"];
        let e = |s: &str| parse(s, &names).unwrap();
        OddMetric::new(
            vec!["x".into(), "y".into()],
            vec![e("1"), e("0"), e("1")],
            vec![],
            vec![(-5.0, 5.0), (-5.0, 5.0)],
        )
        .unwrap()
    }

    fn line_x2() -> OddMetric {
        OddMetric::new(
            vec!["x".into()],
            vec![parse("x^2", &["x"]).unwrap()],
            vec![Stratum::new(vec![0])],
            vec![(-2.0, 2.0)],
        )
        .unwrap()
    }

    fn r2_cross() -> OddMetric {
        let names = ["x", "y"];
        let e = |s: &str| parse(s, &names).unwrap();
        OddMetric::new(
            vec!["x".into(), "y".into()],
            vec![e("x^2 + y^2"), e("y^2 - x^2"), e("x^2 + y^2")],
            vec![Stratum::new(vec![0]), Stratum::new(vec![1])],
            vec![(-5.0, 5.0), (-5.0, 5.0)],
        )
        .unwrap()
    }

    #[test]
    fn euclidean_distance_is_the_chord() {
        let m = euclid2();
        let q = DistanceQuery::new(vec![0.0, 0.0], vec![3.0, 4.0]);
        let est = distance_estimate(&m, &q).unwrap();
        assert!((est.value - 5.0).abs() < 1e-3, "{}", est.value);
        let relen = est.witness.length(&m, 1e-10).unwrap();
        assert!((est.value - relen).abs() < 1e-9);
    }

    #[test]
    fn line_distances_match_the_integral_of_abs_x() {
        let m = line_x2();
        // d(a, b) = |x^2/2| summed on each side of the origin.
        for (a, b, want) in [(0.0, 1.0, 0.5), (-0.5, 0.5, 0.25), (-1.0, 1.0, 1.0)] {
            let q = DistanceQuery::new(vec![a], vec![b]);
            let est = distance_estimate(&m, &q).unwrap();
            assert!(
                (est.value - want).abs() < 1e-4,
                "d({a},{b}) = {} want {want}",
                est.value
            );
        }
    }

    #[test]
    fn estimate_decreases_with_grid_refinement() {
        let m = r2_cross();
        // Endpoints sit on the 16-cell lattice so the three node sets nest.
        let mut values = Vec::new();
        for cells in [16usize, 32, 64] {
            let mut q = DistanceQuery::new(vec![-1.25, -1.25], vec![1.25, 0.625]);
            q.grid = cells;
            q.refine_budget = 0;
            values.push(distance_estimate(&m, &q).unwrap().value);
        }
        assert!(values[1] <= values[0] + 1e-9, "{values:?}");
        assert!(values[2] <= values[1] + 1e-9, "{values:?}");
    }

    #[test]
    fn refinement_only_improves_the_bound() {
        let m = r2_cross();
        let mut coarse = DistanceQuery::new(vec![-1.0, -1.3], vec![1.2, 0.7]);
        coarse.refine_budget = 0;
        let plain = distance_estimate(&m, &coarse).unwrap().value;
        let refined = distance_estimate(
            &m,
            &DistanceQuery::new(vec![-1.0, -1.3], vec![1.2, 0.7]),
        )
        .unwrap()
        .value;
        assert!(refined <= plain + 1e-12, "{refined} vs {plain}");
    }

    #[test]
    fn out_of_box_endpoint_is_rejected() {
        let m = line_x2();
        let q = DistanceQuery::new(vec![0.0], vec![3.0]);
        match distance_estimate(&m, &q) {
            Err(OddError::UnreachableWithinBox { .. }) => {}
            other => panic!("expected UnreachableWithinBox, got {other:?}"),
        }
    }

    #[test]
    fn euclidean_points_satisfy_the_axioms() {
        let m = euclid2();
        let report = metric_space_check(&m, &[], 7).unwrap();
        assert!(report.pass, "{:?}", report.violations);
        assert_eq!(report.points.len(), 10);
        assert_eq!(report.pairs.len(), 45);
    }

    #[test]
    fn line_points_satisfy_the_axioms_with_positive_gaps() {
        let m = line_x2();
        let pts: Vec<Vec<f64>> =
            [-1.0, -0.1, 0.0, 0.1, 1.0].iter().map(|&x| vec![x]).collect();
        let report = metric_space_check(&m, &pts, 0).unwrap();
        assert!(report.pass, "{:?}", report.violations);
        let d = |i: usize, j: usize| {
            report
                .pairs
                .iter()
                .find(|p| (p.i, p.j) == (i, j))
                .unwrap()
                .value
        };
        // d(0, 0.1) = 0.1^2/2.
        assert!((d(2, 3) - 0.005).abs() < 1e-6, "{}", d(2, 3));
        assert!(d(1, 2) > 1e-9);
    }

    #[test]
    fn cross_points_satisfy_the_axioms() {
        let m = r2_cross();
        let pts: Vec<Vec<f64>> = vec![
            vec![0.0, 1.3],
            vec![1.2, 0.0],
            vec![0.7, 0.9],
            vec![-1.1, 0.4],
            vec![-0.6, -1.2],
            vec![1.5, -0.8],
            vec![0.3, 2.1],
            vec![-2.0, -0.3],
        ];
        let report = metric_space_check(&m, &pts, 0).unwrap();
        assert!(report.pass, "{:?}", report.violations);
    }

    #[test]
    fn euclidean_comparison_constants() {
        let m = euclid2();
        let report = comparison_lemma_check(&m, &[0.3, -0.4], &[0.5]).unwrap();
        let row = &report.rows[0];
        assert!((row.c_factor - 1.0).abs() < 1e-3, "{row:?}");
        assert!((row.d_floor - 0.5).abs() < 1e-3, "{row:?}");
        assert!((row.d_ceil - 0.5).abs() < 1e-3, "{row:?}");
    }

    #[test]
    fn line_comparison_sees_the_quadratic_ball() {
        let m = line_x2();
        let report = comparison_lemma_check(&m, &[0.0], &[0.5]).unwrap();
        let row = &report.rows[0];
        // d(0, q) = q^2/2, so the ratio tops out at r/2.
        assert!(row.c_factor <= 0.25 * 1.01, "{row:?}");
        assert!((row.d_floor - 0.125).abs() < 1e-3, "{row:?}");
    }

    #[test]
    fn cross_comparison_shrinks_with_the_ball() {
        let m = r2_cross();
        let report =
            comparison_lemma_check(&m, &[0.0, 0.0], &[0.2, 0.1, 0.05]).unwrap();
        for row in &report.rows {
            assert!(row.c_factor.is_finite() && row.c_factor > 0.0, "{row:?}");
            assert!(row.d_floor > 0.0, "{row:?}");
        }
        // Boundary distances shrink with the radius: the metric topology
        // refines the Euclidean one at this scale.
        let ceils: Vec<f64> = report.rows.iter().map(|r| r.d_ceil).collect();
        assert!(ceils[1] <= ceils[0] * 1.05, "{ceils:?}");
        assert!(ceils[2] <= ceils[1] * 1.05, "{ceils:?}");
    }
}
