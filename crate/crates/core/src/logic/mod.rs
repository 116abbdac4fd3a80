//! Potential-annotation checker.

mod check;
mod context;
pub mod entail;
mod kernel;

pub use check::{
    check_context, check_program, check_triple, CallFrame, CheckOptions, CheckResult, CtxKey, Derivation, LogEntry,
    SiteDerivation, SpecContext, Triple, Verdict,
};
pub use context::{cond_atoms, Atom, LogicalContext, Rel};
pub use entail::{entail, entail_atom, entail_ctx, entail_with, EntailConfig, EntailVerdict};
pub use kernel::{Annotation, AnnotationTable, Potential};
