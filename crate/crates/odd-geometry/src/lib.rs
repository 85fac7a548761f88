//! Computational differential geometry for analytic metrics on a
//! coordinate chart that are positive semidefinite everywhere and
//! degenerate exactly on a finite union of coordinate subspaces.
//!
//! The crate takes such a metric symbolically (entries are rational
//! expressions in the chart coordinates closed under `sqrt` and `abs`),
//! builds the classical objects on the nondegenerate part — orthonormal
//! frames, musical isomorphisms, volume, Levi-Civita connection — and
//! integrates curves, flows, and geodesics *through* the degeneracy
//! locus, where the naive equations have poles. The degeneracy is not
//! an error condition anywhere: evaluation tags poles, integrators
//! reparametrize around them, and distances stay honest upper bounds.
//!
//! Entry points, bottom-up:
//!
//! * [`expr`]: expression trees, parsing, exact differentiation,
//!   simplification with syntactic cancellation.
//! * [`metric`]: the metric type, validation by sampling, restriction to
//!   strata of the degeneracy locus.
//! * [`frame`]: Gram-Schmidt orthonormal frames, flats/sharps, gradient,
//!   divergence, Laplacian, volume integration.
//! * [`connection`]: Christoffel symbols and covariant differentiation,
//!   including along curves that touch the locus.
//! * [`curve`]: piecewise curves, metric speed and length, the
//!   regularity check at breakpoints, reparametrization.
//! * [`flow`] and [`geodesic`]: integration of frame fields and
//!   geodesics across the locus by clearing radical denominators and
//!   re-inverting the time map.
//! * [`distance`]: grid-plus-descent upper bounds for the induced
//!   distance and the metric-space sanity check.
//! * [`fixtures`]: the built-in example metrics with their frozen
//!   expected values.
//!
//! The `examples/` directory of this crate is the guided tour: one
//! runnable example per capability. The `odd` binary exposes the same
//! operations as subcommands for scripting.

pub mod connection;
pub mod curve;
pub mod distance;
pub mod error;
pub mod expr;
pub mod fixtures;
pub mod flow;
pub mod frame;
pub mod geodesic;
pub mod metric;
pub mod ode;
pub mod plot;
pub mod quad;
pub mod spline;
pub mod timemap;

pub mod cli;

pub use error::{OddError, Result};
pub use expr::{Expr, EvalResult};
pub use metric::{OddMetric, Stratum};
