use std::fmt::Write;

use super::ast::*;
use crate::logic::LogicalContext;
use crate::poly::Poly;

/// Renders a program and its annotations in a form that re-parses to the same
/// trees. Sugar is never reintroduced: conditions print as `true`, `!(c)`,
/// `(a && b)`, `a <= b`.
pub fn pretty(program: &Program, ann: &AnnotationSet) -> String {
    let mut names = program.vars.clone();
    names.extend(ann.unbound.iter().map(|(n, _)| n.clone()));
    let pp = Printer { names: &names, ann };
    let mut out = String::new();
    if !program.vars.is_empty() {
        writeln!(out, "vars {};", program.vars.join(", ")).unwrap();
    }
    if !program.precondition.is_tt() {
        writeln!(out, "pre {};", pp.ctx(&program.precondition)).unwrap();
    }
    for (f, specs) in &ann.specs {
        let fname = program.funcs.get(f.index()).map(|f| f.name.as_str()).unwrap_or("?");
        for s in specs {
            writeln!(
                out,
                "{{# spec {fname} : {{{} ; {}}} -> {{{} ; {}}} #}}",
                pp.ctx(&s.pre_ctx),
                pp.poly(&s.pre),
                pp.ctx(&s.post_ctx),
                pp.poly(&s.post)
            )
            .unwrap();
        }
    }
    for f in &program.funcs {
        writeln!(out, "func {}() {}", f.name, pp.block(&f.body, program)).unwrap();
    }
    writeln!(out, "func main() {}", pp.block(&program.main, program)).unwrap();
    out
}

struct Printer<'a> {
    names: &'a [String],
    ann: &'a AnnotationSet,
}

impl Printer<'_> {
    fn ctx(&self, c: &LogicalContext) -> String {
        c.display(self.names).to_string()
    }

    fn poly(&self, p: &Poly) -> String {
        p.display(self.names).to_string()
    }

    fn block(&self, s: &Stmt, prog: &Program) -> String {
        format!("{{ {} }}", self.list(s, prog))
    }

    fn list(&self, s: &Stmt, prog: &Program) -> String {
        match &s.kind {
            StmtKind::Seq(a, b) if !self.annotated(s) => format!("{}; {}", self.item(a, prog), self.list(b, prog)),
            _ => self.item(s, prog),
        }
    }

    fn annotated(&self, s: &Stmt) -> bool {
        self.ann.loop_invariants.contains_key(&s.site) || self.ann.weaken_sites.contains_key(&s.site)
    }

    fn item(&self, s: &Stmt, prog: &Program) -> String {
        let mut out = String::new();
        if let Some(a) = self.ann.loop_invariants.get(&s.site).or_else(|| self.ann.weaken_sites.get(&s.site)) {
            write!(out, "{{# {} ; {} #}} ", self.ctx(&a.ctx), self.poly(&a.potential)).unwrap();
        }
        let body = match &s.kind {
            StmtKind::Skip => "skip".to_string(),
            StmtKind::Tick(c) => format!("tick({c})"),
            StmtKind::Assign(x, e) => format!("{} := {}", self.names[x.index()], self.expr(e)),
            StmtKind::Sample(x, d) => format!("{} ~ {}", self.names[x.index()], dist(d)),
            StmtKind::Call(f) => format!("call {}", prog.funcs[f.index()].name),
            StmtKind::While(c, b) => format!("while {} {}", self.cond(c), self.block(b, prog)),
            StmtKind::Prob(p, a, b) => {
                format!("if prob({p}) {} else {}", self.block(a, prog), self.block(b, prog))
            }
            StmtKind::If(c, a, b) => {
                format!("if {} {} else {}", self.cond(c), self.block(a, prog), self.block(b, prog))
            }
            StmtKind::Seq(a, b) => format!("{{ {}; {} }}", self.item(a, prog), self.list(b, prog)),
        };
        out.push_str(&body);
        out
    }

    fn expr(&self, e: &Expr) -> String {
        match e {
            Expr::Var(v) => self.names[v.index()].clone(),
            Expr::Const(c) => c.to_string(),
            Expr::Add(a, b) => format!("({} + {})", self.expr(a), self.expr(b)),
            Expr::Mul(a, b) => format!("({} * {})", self.expr(a), self.expr(b)),
        }
    }

    fn cond(&self, c: &Cond) -> String {
        match c {
            Cond::True => "true".to_string(),
            Cond::Not(c) => format!("!({})", self.cond(c)),
            Cond::And(a, b) => format!("({} && {})", self.cond(a), self.cond(b)),
            Cond::Le(a, b) => format!("{} <= {}", self.expr(a), self.expr(b)),
        }
    }
}

fn dist(d: &Dist) -> String {
    match d {
        Dist::Uniform { lo, hi } => format!("uniform({lo}, {hi})"),
        Dist::Discrete(items) => {
            let parts: Vec<String> = items.iter().map(|(v, p)| format!("{v}: {p}")).collect();
            format!("discrete({})", parts.join(", "))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::surface::parse;

    #[test]
    fn round_trips_annotated_program() {
        let src = "
vars x, n, f;
pre n >= 1;
{# spec g : {n >= 1 ; n - 1} -> {true ; 0} #}
func g() { if prob(1/3) { tick(-3/4) } else { x := x * x + -2 } }
func main() {
  x := 0;
  {# x < n + 1, n >= 1 ; n - 1 #}
  while x < n && !(f == 1) {
    {# true ; 2 #} { x ~ discrete(1: 1/2, -1: 1/2); f ~ uniform(0, 1/2) };
    call g
  };
  if true { skip }
}";
        let (p, ann) = parse(src).unwrap();
        let text = pretty(&p, &ann);
        let (p2, ann2) = parse(&text).unwrap();
        assert_eq!(p, p2, "{text}");
        assert_eq!(ann.specs, ann2.specs);
        assert_eq!(ann.loop_invariants, ann2.loop_invariants);
        assert_eq!(ann.weaken_sites, ann2.weaken_sites);
        assert_eq!(pretty(&p2, &ann2), text);
    }
}
