//! Front end for `.appl` sources.
//!
//! ```text
//! vars x, d, t;
//! pre d > 0;
//! {# spec rdwalk : {d > 0, x <= d + 2 ; 2*(d - x) + 4} -> {d > 0 ; 0} #}
//! func rdwalk() {
//!   if x < d { t ~ uniform(-1, 2); x := x + t; call rdwalk; tick(1) }
//! }
//! func main() { x := 0; call rdwalk }
//! ```
//!
//! `{# Γ ; Q #}` before a `while` is that loop's invariant; before any other
//! statement it marks a weakening point.

pub mod ast;
mod lexer;
mod parser;
mod pretty;

use serde::Serialize;
use thiserror::Error;

pub use ast::*;
pub use parser::{parse_context_with, parse_expr_with, parse_poly_with};
pub use pretty::pretty;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{span}: {message}")]
pub struct ParseError {
    pub span: Span,
    pub message: String,
}

impl ParseError {
    pub fn new(span: Span, message: impl Into<String>) -> ParseError {
        ParseError { span, message: message.into() }
    }

    /// `file:line:col: message`.
    pub fn render(&self, file: &str) -> String {
        format!("{file}:{}:{}: {}", self.span.line, self.span.col, self.message)
    }
}

pub fn parse(source: &str) -> Result<(Program, AnnotationSet), ParseError> {
    parser::parse_program(source)
}

/// Validator finding. Diagnostics are data; an empty list means the program
/// is ready for checking.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Diagnostic {
    pub code: &'static str,
    pub span: Span,
    pub site: Option<SiteId>,
    pub message: String,
}

impl Diagnostic {
    pub fn render(&self, file: &str) -> String {
        format!("{file}:{}:{}: {}: {}", self.span.line, self.span.col, self.code, self.message)
    }
}

/// Structural checks beyond what the parser enforces. With
/// `require_invariants`, every loop must carry an invariant.
pub fn validate(program: &Program, ann: &AnnotationSet, require_invariants: bool) -> Vec<Diagnostic> {
    let mut out = Vec::new();
    for (name, span) in &ann.unbound {
        out.push(Diagnostic {
            code: "unbound-variable",
            span: *span,
            site: None,
            message: format!("annotation mentions undeclared variable `{name}`"),
        });
    }
    let statements = program.statements();
    for (_, s) in &statements {
        match &s.kind {
            StmtKind::While(..) if require_invariants && !ann.loop_invariants.contains_key(&s.site) => {
                out.push(Diagnostic {
                    code: "missing-invariant",
                    span: s.span,
                    site: Some(s.site),
                    message: format!("loop at site {} has no invariant annotation", s.site),
                });
            }
            StmtKind::Call(f) if f.index() >= program.funcs.len() => out.push(Diagnostic {
                code: "unbound-function",
                span: s.span,
                site: Some(s.site),
                message: format!("call to unknown function #{}", f.0),
            }),
            _ => {}
        }
        let mut check_var = |v: VarId| {
            if v.index() >= program.vars.len() {
                out.push(Diagnostic {
                    code: "unbound-variable",
                    span: s.span,
                    site: Some(s.site),
                    message: format!("statement uses undeclared variable #{}", v.0),
                });
            }
        };
        match &s.kind {
            StmtKind::Assign(x, e) => {
                check_var(*x);
                e.for_each_var(&mut check_var);
            }
            StmtKind::Sample(x, _) => check_var(*x),
            StmtKind::While(c, _) | StmtKind::If(c, _, _) => c.for_each_var(&mut check_var),
            _ => {}
        }
    }
    let site_kind = |site: &SiteId| statements.iter().find(|(_, s)| s.site == *site).map(|(_, s)| s);
    for (site, a) in &ann.loop_invariants {
        if !matches!(site_kind(site).map(|s| &s.kind), Some(StmtKind::While(..))) {
            out.push(Diagnostic {
                code: "stray-annotation",
                span: a.span,
                site: Some(*site),
                message: format!("loop invariant attached to non-loop site {site}"),
            });
        }
    }
    for (site, a) in &ann.weaken_sites {
        if site_kind(site).is_none() {
            out.push(Diagnostic {
                code: "stray-annotation",
                span: a.span,
                site: Some(*site),
                message: format!("weakening point refers to unknown site {site}"),
            });
        }
    }
    for (f, specs) in &ann.specs {
        if f.index() >= program.funcs.len() {
            for s in specs {
                out.push(Diagnostic {
                    code: "unbound-function",
                    span: s.span,
                    site: None,
                    message: format!("specification for unknown function #{}", f.0),
                });
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::num::int;
    use crate::poly::Poly;

    const RDWALK: &str = "
vars x, d, t;
pre d > 0;
{# spec rdwalk : {d > 0, x <= d + 2 ; 2*(d - x) + 4} -> {d > 0 ; 0} #}
func rdwalk() {
  if x < d {
    t ~ uniform(-1, 2);
    x := x + t;
    call rdwalk;
    tick(1)
  }
}
func main() {
  x := 0;
  call rdwalk
}
";

    #[test]
    fn smallest_program() {
        let (p, ann) = parse("func main() { tick(1) }").unwrap();
        assert_eq!(p.main.kind, StmtKind::Tick(crate::Constant::from_int(1)));
        assert!(p.funcs.is_empty());
        assert!(validate(&p, &ann, true).is_empty());
    }

    #[test]
    fn rdwalk_parses_with_spec() {
        let (p, ann) = parse(RDWALK).unwrap();
        assert_eq!(p.vars, vec!["x", "d", "t"]);
        assert_eq!(p.funcs.len(), 1);
        assert_eq!(p.funcs[0].name, "rdwalk");
        assert_eq!(p.precondition.len(), 1);
        let spec = &ann.specs_for(FuncId(0))[0];
        let (x, d) = (Poly::var(VarId(0)), Poly::var(VarId(1)));
        assert_eq!(spec.pre, d.sub(&x).scale(&int(2)).add_const(&int(4)));
        assert!(spec.post.is_zero());
        assert!(validate(&p, &ann, true).is_empty());
    }

    #[test]
    fn degenerate_uniform_is_rejected() {
        let err = parse("vars x;\nfunc main() { x ~ uniform(2, -1) }").unwrap_err();
        assert!(err.message.contains("a < b"), "{}", err.message);
        assert_eq!(err.span, Span { line: 2, col: 19 });
    }

    #[test]
    fn parse_errors_carry_positions() {
        let err = parse("vars x;\nfunc main() {\n  y := 1\n}").unwrap_err();
        assert_eq!(err.render("p.appl"), "p.appl:3:3: unbound variable `y`");
        assert!(parse("func main() { call g }").unwrap_err().message.contains("unbound function"));
        assert!(parse("func main() { if prob(3/2) { skip } }").is_err());
        assert!(parse("vars x; func main() { x ~ discrete(1: 1/2, 2: 1/3) }").is_err());
        assert!(parse("vars x; func f() { skip }").unwrap_err().message.contains("main"));
    }

    #[test]
    fn missing_invariant_is_reported() {
        let (p, ann) = parse("vars x; func main() { while x < 3 { x := x + 1 } }").unwrap();
        let diags = validate(&p, &ann, true);
        assert_eq!(diags.len(), 1);
        assert_eq!(diags[0].code, "missing-invariant");
        assert_eq!(diags[0].site, Some(p.main.site));
        assert!(validate(&p, &ann, false).is_empty());
    }

    #[test]
    fn undeclared_spec_variable_is_reported() {
        let src = "vars x; {# spec f : {true ; z} -> {true ; 0} #} func f() { skip } func main() { call f }";
        let (p, ann) = parse(src).unwrap();
        let diags = validate(&p, &ann, true);
        assert_eq!(diags.len(), 1);
        assert_eq!(diags[0].code, "unbound-variable");
        assert!(diags[0].message.contains("`z`"));
    }

    #[test]
    fn sugar_lowers_to_core_forms() {
        let (p, _) = parse("vars x, y; func main() { if x >= 2 && !(y == 1) { x := x - y^2 } }").unwrap();
        let StmtKind::If(c, s1, _) = &p.main.kind else { panic!() };
        let Cond::And(lhs, _) = c else { panic!() };
        assert_eq!(**lhs, Cond::Le(Expr::int(2), Expr::var(VarId(0))));
        let StmtKind::Assign(_, e) = &s1.kind else { panic!() };
        let expected = Poly::var(VarId(0)).sub(&Poly::var(VarId(1)).pow(2));
        assert_eq!(Poly::from_expr(e), expected);
    }

    #[test]
    fn annotations_attach_to_sites() {
        let src = "vars x; func main() { x := 0; {# x >= 0 ; 5 #} while x < 3 { {# true ; 1 #} x := x + 1 } }";
        let (p, ann) = parse(src).unwrap();
        assert_eq!(ann.loop_invariants.len(), 1);
        assert_eq!(ann.weaken_sites.len(), 1);
        let (site, _) = ann.loop_invariants.iter().next().unwrap();
        assert!(matches!(p.find_site(*site).unwrap().kind, StmtKind::While(..)));
        let (wsite, _) = ann.weaken_sites.iter().next().unwrap();
        assert!(matches!(p.find_site(*wsite).unwrap().kind, StmtKind::Assign(..)));
        assert!(validate(&p, &ann, true).is_empty());
    }

    #[test]
    fn sites_are_preorder() {
        let (p, _) = parse("vars x; func main() { x := 1; tick(2); skip }").unwrap();
        let sites: Vec<u32> = p.statements().iter().map(|(_, s)| s.site.0).collect();
        assert_eq!(sites, (0..sites.len() as u32).collect::<Vec<_>>());
    }
}
