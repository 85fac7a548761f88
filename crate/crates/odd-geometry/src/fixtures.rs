//! Built-in example metrics with their frozen expected values.
//!
//! Each fixture bundles a metric with named vector fields and curves and
//! an expectation table. The table is data, not test code: every entry
//! records what to measure, the value it must have, a tolerance, and
//! where the number comes from, so a single generic runner can assert
//! all of them. Adding an expectation to a fixture automatically puts it
//! under test; there is no way to ship an unchecked one.

use std::fs;
use std::path::{Path, PathBuf};

use crate::connection::christoffel;
use crate::curve::PiecewiseCurve;
use crate::distance::{distance_estimate, DistanceQuery};
use crate::error::{OddError, Result};
use crate::expr::{parse, Expr};
use crate::flow::radial_directions;
use crate::frame::{orthonormal_frame, volume};
use crate::metric::{OddMetric, Stratum};

/// Where a frozen expected value comes from.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Origin {
    /// Forced by the construction itself; the measurement is a smoke test.
    Definition,
    /// Worked out by hand in closed form from the metric entries.
    ClosedForm,
    /// Frozen output of an independent numerical method (quadrature or
    /// brute force), not of this crate.
    CrossCheck,
}

/// One measurable claim about a fixture.
#[derive(Clone, Debug)]
pub enum Check {
    /// A single Christoffel symbol (upper, lower, lower indices, 0-based)
    /// evaluated at a point.
    ChristoffelEntry {
        at: Vec<f64>,
        index: [usize; 3],
        value: f64,
    },
    /// Every Christoffel symbol vanishes at the point.
    ChristoffelsVanish { at: Vec<f64> },
    /// The named curve has this metric speed at each parameter value.
    CurveSpeed {
        curve: &'static str,
        ts: Vec<f64>,
        value: f64,
    },
    /// Metric volume of an axis box.
    Volume {
        region: Vec<(f64, f64)>,
        value: f64,
    },
    /// Slopes of the lines through the origin left invariant by the
    /// named field, deduplicated (each line shows up as two rays).
    InvariantSlopes {
        field: &'static str,
        radius: f64,
        slopes: Vec<f64>,
    },
    /// Dimension of the kernel of the metric at a point.
    DegenerateRank { at: Vec<f64>, rank: usize },
    /// Two-point distance estimate with the default query.
    Distance {
        from: Vec<f64>,
        to: Vec<f64>,
        value: f64,
    },
}

#[derive(Clone, Debug)]
pub struct Expectation {
    pub label: &'static str,
    pub origin: Origin,
    pub tolerance: f64,
    pub check: Check,
}

/// Result of measuring one expectation.
#[derive(Clone, Debug)]
pub struct Outcome {
    pub pass: bool,
    pub detail: String,
}

#[derive(Clone, Debug)]
pub struct NamedField {
    pub name: &'static str,
    pub components: Vec<Expr>,
}

#[derive(Clone, Debug)]
pub struct NamedCurve {
    pub name: &'static str,
    pub curve: PiecewiseCurve,
}

#[derive(Debug)]
pub struct Fixture {
    pub name: String,
    pub metric: OddMetric,
    pub fields: Vec<NamedField>,
    pub curves: Vec<NamedCurve>,
    pub expectations: Vec<Expectation>,
}

impl Fixture {
    pub fn field(&self, name: &str) -> Option<&[Expr]> {
        self.fields
            .iter()
            .find(|f| f.name == name)
            .map(|f| f.components.as_slice())
    }

    pub fn curve(&self, name: &str) -> Option<&PiecewiseCurve> {
        self.curves.iter().find(|c| c.name == name).map(|c| &c.curve)
    }
}

impl Expectation {
    /// Measure the claim against the fixture. `Err` means the measurement
    /// itself could not run; a wrong value is a `pass: false` outcome.
    pub fn verify(&self, fx: &Fixture) -> Result<Outcome> {
        let m = &fx.metric;
        let tol = self.tolerance;
        match &self.check {
            Check::ChristoffelEntry { at, index, value } => {
                let conn = christoffel(m)?;
                let got = conn.symbol(index[0], index[1], index[2]).eval(at);
                let Some(got) = got.as_finite() else {
                    return Err(OddError::InvalidArgument {
                        what: format!("{}: symbol not finite at {at:?}", self.label),
                    });
                };
                Ok(outcome_scalar(got, *value, tol))
            }
            Check::ChristoffelsVanish { at } => {
                let conn = christoffel(m)?;
                let n = m.dim();
                let mut worst = 0.0f64;
                for k in 0..n {
                    for i in 0..n {
                        for j in 0..n {
                            let v = conn.symbol(k, i, j).eval(at).as_finite().unwrap_or(f64::NAN);
                            worst = worst.max(v.abs());
                        }
                    }
                }
                Ok(outcome_scalar(worst, 0.0, tol))
            }
            Check::CurveSpeed { curve, ts, value } => {
                let c = fx.curve(curve).ok_or_else(|| OddError::InvalidArgument {
                    what: format!("fixture {} has no curve {curve:?}", fx.name),
                })?;
                let mut worst = (0.0f64, 0.0f64);
                for &t in ts {
                    let s = c.speed(m, t);
                    if (s - value).abs() >= worst.1 {
                        worst = (t, (s - value).abs());
                    }
                }
                Ok(Outcome {
                    pass: worst.1 <= tol,
                    detail: format!(
                        "worst speed deviation {:.3e} at t = {} (want {value} +- {tol:.0e})",
                        worst.1, worst.0
                    ),
                })
            }
            Check::Volume { region, value } => {
                let quad_tol = (0.05 * tol).max(1e-10);
                let got = volume(m, Some(region), quad_tol)?;
                Ok(outcome_scalar(got, *value, tol))
            }
            Check::InvariantSlopes {
                field,
                radius,
                slopes,
            } => {
                let f = fx.field(field).ok_or_else(|| OddError::InvalidArgument {
                    what: format!("fixture {} has no field {field:?}", fx.name),
                })?;
                let dirs = radial_directions(f, &vec![0.0; m.dim()], *radius)?;
                let mut got: Vec<f64> = dirs.iter().map(|d| d.slope).collect();
                got.sort_by(f64::total_cmp);
                got.dedup_by(|a, b| (*a - *b).abs() < 1e-6);
                let mut want = slopes.clone();
                want.sort_by(f64::total_cmp);
                let pass = got.len() == want.len()
                    && got.iter().zip(&want).all(|(g, w)| (g - w).abs() <= tol);
                Ok(Outcome {
                    pass,
                    detail: format!("slopes {got:?} (want {want:?} +- {tol:.0e})"),
                })
            }
            Check::DegenerateRank { at, rank } => {
                let got = m.degenerate_rank(at, tol)?;
                Ok(Outcome {
                    pass: got == *rank,
                    detail: format!("kernel dimension {got} at {at:?} (want {rank})"),
                })
            }
            Check::Distance { from, to, value } => {
                let est = distance_estimate(m, &DistanceQuery::new(from.clone(), to.clone()))?;
                Ok(outcome_scalar(est.value, *value, tol))
            }
        }
    }
}

fn outcome_scalar(got: f64, want: f64, tol: f64) -> Outcome {
    Outcome {
        pass: (got - want).abs() <= tol,
        detail: format!("measured {got:.12} (want {want} +- {tol:.0e})"),
    }
}

/// The registry; every name here also gets a spec file from
/// [`write_spec_files`].
pub const NAMES: [&str; 6] = [
    "euclid_2", "euclid_3", "line_x2", "r2_cross", "r3_g", "r3_h",
];

/// Look a fixture up by name. `euclid_<n>` is accepted for n = 1..6.
pub fn fixture(name: &str) -> Result<Fixture> {
    if let Some(rest) = name.strip_prefix("euclid_") {
        if let Ok(n) = rest.parse::<usize>() {
            if (1..=6).contains(&n) {
                return Ok(euclid(n));
            }
        }
    }
    match name {
        "line_x2" => Ok(line_x2()),
        "r2_cross" => Ok(r2_cross()),
        "r3_g" => Ok(r3_g()),
        "r3_h" => Ok(r3_h()),
        _ => Err(OddError::UnknownFixture {
            name: name.into(),
            available: "euclid_<n> (n = 1..6), line_x2, r2_cross, r3_g, r3_h".into(),
        }),
    }
}

/// Emit every registry fixture as a metric spec file under `dir`,
/// one `<name>.odd` each. Output is deterministic byte for byte.
pub fn write_spec_files(dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let mut out = Vec::with_capacity(NAMES.len());
    for name in NAMES {
        let fx = fixture(name)?;
        let path = dir.join(format!("{name}.odd"));
        fs::write(&path, fx.metric.to_spec_string())?;
        out.push(path);
    }
    Ok(out)
}

fn coord_names(n: usize) -> Vec<String> {
    match n {
        1 => vec!["x".into()],
        2 => vec!["x".into(), "y".into()],
        3 => vec!["x".into(), "y".into(), "z".into()],
        _ => (1..=n).map(|i| format!("x{i}")).collect(),
    }
}

fn euclid(n: usize) -> Fixture {
    let metric = OddMetric::diagonal(
        coord_names(n),
        vec![Expr::one(); n],
        vec![],
        vec![(-5.0, 5.0); n],
    )
    .expect("euclidean metric");
    let probe: Vec<f64> = [0.3, -1.2, 0.7, 2.1, -3.4, 1.9][..n].to_vec();
    let mut expectations = vec![Expectation {
        label: "flat chart has no connection coefficients",
        origin: Origin::Definition,
        tolerance: 1e-15,
        check: Check::ChristoffelsVanish { at: probe },
    }];
    if n == 2 {
        expectations.push(Expectation {
            label: "unit square has unit area",
            origin: Origin::Definition,
            tolerance: 1e-10,
            check: Check::Volume {
                region: vec![(0.0, 1.0), (0.0, 1.0)],
                value: 1.0,
            },
        });
        expectations.push(Expectation {
            label: "distance is the chord",
            origin: Origin::ClosedForm,
            tolerance: 1e-3,
            check: Check::Distance {
                from: vec![0.0, 0.0],
                to: vec![3.0, 4.0],
                value: 5.0,
            },
        });
    }
    Fixture {
        name: format!("euclid_{n}"),
        metric,
        fields: vec![],
        curves: vec![],
        expectations,
    }
}

fn line_x2() -> Fixture {
    let metric = OddMetric::new(
        vec!["x".into()],
        vec![parse("x^2", &["x"]).expect("entry")],
        vec![Stratum::new(vec![0])],
        vec![(-2.0, 2.0)],
    )
    .expect("line metric");
    let frame = orthonormal_frame(&metric).expect("frame");
    // x(t) = sgn(t) sqrt(|t|): unit-speed up to the constant 1/2, crosses
    // the degenerate point at t = 0.
    let sqrt_curve = PiecewiseCurve::from_symbolic(
        vec![parse("t / sqrt(abs(t))", &["t"]).expect("component")],
        -1.0,
        1.0,
    )
    .expect("sqrt curve")
    .detect_marks(&metric);
    let expectations = vec![
        Expectation {
            label: "connection coefficient is 1/x",
            origin: Origin::ClosedForm,
            tolerance: 1e-12,
            check: Check::ChristoffelEntry {
                at: vec![0.5],
                index: [0, 0, 0],
                value: 2.0,
            },
        },
        Expectation {
            label: "square-root curve moves at speed 1/2",
            origin: Origin::ClosedForm,
            tolerance: 1e-10,
            check: Check::CurveSpeed {
                curve: "sqrt",
                ts: vec![-0.75, -0.3, 0.2, 0.49, 0.9],
                value: 0.5,
            },
        },
        Expectation {
            label: "volume of [-1,1] is the integral of |x|",
            origin: Origin::ClosedForm,
            tolerance: 1e-8,
            check: Check::Volume {
                region: vec![(-1.0, 1.0)],
                value: 1.0,
            },
        },
        Expectation {
            label: "distance from the degenerate point",
            origin: Origin::ClosedForm,
            tolerance: 1e-3,
            check: Check::Distance {
                from: vec![0.0],
                to: vec![1.0],
                value: 0.5,
            },
        },
        Expectation {
            label: "crossing distance, half box",
            origin: Origin::ClosedForm,
            tolerance: 1e-3,
            check: Check::Distance {
                from: vec![-0.5],
                to: vec![0.5],
                value: 0.25,
            },
        },
        Expectation {
            label: "crossing distance, unit radius",
            origin: Origin::ClosedForm,
            tolerance: 1e-3,
            check: Check::Distance {
                from: vec![-1.0],
                to: vec![1.0],
                value: 1.0,
            },
        },
    ];
    Fixture {
        name: "line_x2".into(),
        metric,
        fields: vec![NamedField {
            name: "E",
            components: frame.vector(0).to_vec(),
        }],
        curves: vec![NamedCurve {
            name: "sqrt",
            curve: sqrt_curve,
        }],
        expectations,
    }
}

fn r2_cross() -> Fixture {
    let names = ["x", "y"];
    let e = |s: &str| parse(s, &names).expect("entry");
    let metric = OddMetric::new(
        vec!["x".into(), "y".into()],
        vec![e("x^2 + y^2"), e("y^2 - x^2"), e("x^2 + y^2")],
        vec![Stratum::new(vec![0]), Stratum::new(vec![1])],
        vec![(-5.0, 5.0), (-5.0, 5.0)],
    )
    .expect("cross metric");
    let frame = orthonormal_frame(&metric).expect("frame");
    let e1 = frame.vector(0).to_vec();
    let e2 = frame.vector(1).to_vec();
    let sum: Vec<Expr> = e1
        .iter()
        .zip(&e2)
        .map(|(a, b)| Expr::add(a.clone(), b.clone()).simplify())
        .collect();
    let expectations = vec![
        Expectation {
            // Real root of a^3 + a^2 - a + 1.
            label: "second frame field fixes one line",
            origin: Origin::ClosedForm,
            tolerance: 1e-3,
            check: Check::InvariantSlopes {
                field: "E2",
                radius: 1.0,
                slopes: vec![-1.839286755214161],
            },
        },
        Expectation {
            // Real root of a^3 + 3a^2 - a + 1, plus the diagonal where
            // the defect has a double zero.
            label: "frame sum fixes two lines",
            origin: Origin::ClosedForm,
            tolerance: 1e-3,
            check: Check::InvariantSlopes {
                field: "E1+E2",
                radius: 1.0,
                slopes: vec![-3.3829757679062375, 1.0],
            },
        },
        Expectation {
            label: "one null direction on the y axis",
            origin: Origin::Definition,
            tolerance: 1e-9,
            check: Check::DegenerateRank {
                at: vec![0.0, 1.3],
                rank: 1,
            },
        },
        Expectation {
            label: "fully degenerate at the origin",
            origin: Origin::Definition,
            tolerance: 1e-9,
            check: Check::DegenerateRank {
                at: vec![0.0, 0.0],
                rank: 2,
            },
        },
    ];
    Fixture {
        name: "r2_cross".into(),
        metric,
        fields: vec![
            NamedField {
                name: "E1",
                components: e1,
            },
            NamedField {
                name: "E2",
                components: e2,
            },
            NamedField {
                name: "E1+E2",
                components: sum,
            },
        ],
        curves: vec![],
        expectations,
    }
}

fn r3_g() -> Fixture {
    let names = ["x", "y", "z"];
    let metric = OddMetric::diagonal(
        names.iter().map(|s| s.to_string()).collect(),
        vec![
            Expr::one(),
            Expr::one(),
            parse("(x^2 + z^2)*(y^2 + z^2)", &names).expect("entry"),
        ],
        vec![Stratum::new(vec![0, 2]), Stratum::new(vec![1, 2])],
        vec![(-1.0, 1.0); 3],
    )
    .expect("r3_g metric");
    let expectations = vec![
        Expectation {
            // d/dz of g_33 over 2 g_33 at (.5,.5,.5).
            label: "z-z-z connection coefficient",
            origin: Origin::ClosedForm,
            tolerance: 1e-12,
            check: Check::ChristoffelEntry {
                at: vec![0.5, 0.5, 0.5],
                index: [2, 2, 2],
                value: 2.0,
            },
        },
        Expectation {
            label: "one null direction on the y axis",
            origin: Origin::Definition,
            tolerance: 1e-9,
            check: Check::DegenerateRank {
                at: vec![0.0, 0.5, 0.0],
                rank: 1,
            },
        },
        Expectation {
            label: "one null direction on the x axis",
            origin: Origin::Definition,
            tolerance: 1e-9,
            check: Check::DegenerateRank {
                at: vec![0.5, 0.0, 0.0],
                rank: 1,
            },
        },
        Expectation {
            label: "volume of the whole box",
            origin: Origin::CrossCheck,
            tolerance: 2e-6,
            check: Check::Volume {
                region: vec![(-1.0, 1.0); 3],
                value: 4.998003049001,
            },
        },
    ];
    Fixture {
        name: "r3_g".into(),
        metric,
        fields: vec![],
        curves: vec![],
        expectations,
    }
}

fn r3_h() -> Fixture {
    let names = ["x", "y", "z"];
    let metric = OddMetric::diagonal(
        names.iter().map(|s| s.to_string()).collect(),
        vec![
            parse("x^2 + z^2", &names).expect("entry"),
            Expr::one(),
            parse("(x^2 + z^2)*(y^2 + z^2)", &names).expect("entry"),
        ],
        vec![Stratum::new(vec![0, 2]), Stratum::new(vec![1, 2])],
        vec![(-1.0, 1.0); 3],
    )
    .expect("r3_h metric");
    let expectations = vec![
        Expectation {
            // d/dx of g_11 over 2 g_11 at (.5,0,.5).
            label: "x-x-x connection coefficient",
            origin: Origin::ClosedForm,
            tolerance: 1e-12,
            check: Check::ChristoffelEntry {
                at: vec![0.5, 0.0, 0.5],
                index: [0, 0, 0],
                value: 1.0,
            },
        },
        Expectation {
            label: "two null directions on the y axis",
            origin: Origin::Definition,
            tolerance: 1e-9,
            check: Check::DegenerateRank {
                at: vec![0.0, 0.7, 0.0],
                rank: 2,
            },
        },
        Expectation {
            label: "one null direction on the x axis",
            origin: Origin::Definition,
            tolerance: 1e-9,
            check: Check::DegenerateRank {
                at: vec![0.7, 0.0, 0.0],
                rank: 1,
            },
        },
        Expectation {
            label: "volume of the whole box",
            origin: Origin::CrossCheck,
            tolerance: 2e-6,
            check: Check::Volume {
                region: vec![(-1.0, 1.0); 3],
                value: 4.549245050105,
            },
        },
    ];
    Fixture {
        name: "r3_h".into(),
        metric,
        fields: vec![],
        curves: vec![],
        expectations,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metric::ValidateOptions;

    #[test]
    fn every_fixture_validates() {
        for name in NAMES {
            let fx = fixture(name).unwrap();
            let report = fx.metric.validate(&ValidateOptions::default()).unwrap();
            assert!(report.verdict, "{name}: {:?}", report.failures);
        }
    }

    #[test]
    fn every_expectation_holds() {
        for name in NAMES {
            let fx = fixture(name).unwrap();
            assert!(!fx.expectations.is_empty(), "{name} ships no expectations");
            for e in &fx.expectations {
                let out = e.verify(&fx).unwrap();
                assert!(out.pass, "{name}: {} -- {}", e.label, out.detail);
            }
        }
    }

    #[test]
    fn unknown_names_list_the_registry() {
        let err = fixture("klein_bottle").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("klein_bottle") && msg.contains("r2_cross"), "{msg}");
    }

    #[test]
    fn euclid_accepts_a_dimension_suffix() {
        assert_eq!(fixture("euclid_4").unwrap().metric.dim(), 4);
        assert!(fixture("euclid_0").is_err());
        assert!(fixture("euclid_99").is_err());
    }

    #[test]
    fn committed_spec_files_are_current() {
        let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures");
        for name in NAMES {
            let fx = fixture(name).unwrap();
            let path = dir.join(format!("{name}.odd"));
            let on_disk = fs::read_to_string(&path)
                .unwrap_or_else(|e| panic!("{}: {e}; regenerate with write_spec_files", path.display()));
            assert_eq!(on_disk, fx.metric.to_spec_string(), "{name}.odd is stale");
        }
    }

    #[test]
    fn spec_files_are_byte_stable() {
        let dir = tempfile::tempdir().unwrap();
        let first = write_spec_files(dir.path()).unwrap();
        let before: Vec<Vec<u8>> = first.iter().map(|p| fs::read(p).unwrap()).collect();
        let second = write_spec_files(dir.path()).unwrap();
        assert_eq!(first, second);
        for (path, b) in second.iter().zip(&before) {
            assert_eq!(&fs::read(path).unwrap(), b, "{path:?} changed bytes");
        }
        // Round trip through the parser preserves the metric.
        for path in &first {
            let text = fs::read_to_string(path).unwrap();
            let m = OddMetric::parse_spec(&text).unwrap();
            assert_eq!(m.to_spec_string(), text);
        }
    }
}
