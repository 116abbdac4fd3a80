//! Expected-cost analysis toolkit for APPL, a small imperative probabilistic
//! language with recursion, continuous sampling, and a `tick` cost model.
//!
//! The crate is organised along the analysis pipeline:
//!
//! * [`surface`]: lexing, parsing, pretty-printing, and validation of `.appl` sources.
//! * [`runtime`]: the small-step continuation semantics and its sampler.
//! * [`poly`]: exact-rational multivariate polynomials and distribution moments.
//! * [`logic`]: the potential-annotation checker, its entailment engine, and the
//!   annotated transition kernel.
//! * [`simulate`]: Monte Carlo traces, martingale diagnostics, and tail fits.
//! * [`ost`]: optional-stopping side conditions that turn a checked derivation
//!   into a sound bound.
//! * [`oracle`]: exact finite-horizon expectation for discrete programs.
//! * [`pipeline`]: the end-to-end certification procedure.

pub mod logic;
pub mod oracle;
pub mod ost;
pub mod pipeline;
pub mod poly;
pub mod runtime;
pub mod simulate;
pub mod surface;

mod num;

pub use num::{parse_rational, rational_to_f64, Constant, Rational};
