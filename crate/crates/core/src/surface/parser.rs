//! Recursive-descent parser for `.appl` sources.
//!
//! Surface sugar is lowered to the core forms on the way in: `a - b` becomes
//! `a + (-1 * b)` (or a negated literal), `a < b` becomes `!(b <= a)`,
//! `a == b` becomes `a <= b && b <= a`, `x^k` becomes a product chain.

use std::collections::{BTreeMap, HashMap};

use num_traits::{One, Zero};

use super::ast::*;
use super::lexer::{tokenize, Tok, Token};
use super::ParseError;
use crate::logic::{Atom, LogicalContext};
use crate::poly::Poly;
use crate::{parse_rational, Constant, Rational};

const KEYWORDS: &[&str] = &[
    "vars", "pre", "func", "if", "else", "while", "call", "tick", "skip", "prob", "uniform", "discrete", "true",
    "false", "spec",
];

type PResult<T> = Result<T, ParseError>;

pub fn parse_program(src: &str) -> PResult<(Program, AnnotationSet)> {
    let toks = tokenize(src)?;
    let mut p = Parser::new(toks)?;
    p.parse_items()?;
    p.finish()
}

/// Parses a standalone expression over `vars` (used by tests and the CLI).
pub fn parse_expr_with(src: &str, vars: &[String]) -> PResult<Expr> {
    let toks = tokenize(src)?;
    let mut p = Parser::bare(toks, vars.to_vec());
    let e = p.expr()?;
    p.expect(&Tok::Eof)?;
    Ok(e)
}

/// Parses a polynomial in annotation syntax over `vars`.
pub fn parse_poly_with(src: &str, vars: &[String]) -> PResult<Poly> {
    parse_expr_with(src, vars).map(|e| Poly::from_expr(&e))
}

/// Parses a comma-separated conjunction of comparisons over `vars`.
pub fn parse_context_with(src: &str, vars: &[String]) -> PResult<LogicalContext> {
    let toks = tokenize(src)?;
    let mut p = Parser::bare(toks, vars.to_vec());
    let ctx = p.context()?;
    p.expect(&Tok::Eof)?;
    Ok(ctx)
}

struct Parser {
    toks: Vec<Token>,
    pos: usize,
    vars: Vec<String>,
    funcs: Vec<String>,
    /// Undeclared names met inside annotations, numbered after `vars`.
    extra_vars: Vec<(String, Span)>,
    in_annotation: bool,
    next_site: u32,
    bodies: HashMap<String, Stmt>,
    main: Option<Stmt>,
    precondition: LogicalContext,
    specs: BTreeMap<FuncId, Vec<FuncSpec>>,
    invariants: BTreeMap<SiteId, Assertion>,
    weakens: BTreeMap<SiteId, Assertion>,
}

impl Parser {
    fn bare(toks: Vec<Token>, vars: Vec<String>) -> Parser {
        Parser {
            toks,
            pos: 0,
            vars,
            funcs: Vec::new(),
            extra_vars: Vec::new(),
            in_annotation: false,
            next_site: 0,
            bodies: HashMap::new(),
            main: None,
            precondition: LogicalContext::tt(),
            specs: BTreeMap::new(),
            invariants: BTreeMap::new(),
            weakens: BTreeMap::new(),
        }
    }

    fn new(toks: Vec<Token>) -> PResult<Parser> {
        let mut vars: Vec<String> = Vec::new();
        let mut funcs: Vec<String> = Vec::new();
        let mut i = 0;
        // Declarations are collected up front so their order in the file does not matter.
        while i < toks.len() {
            match (&toks[i].tok, toks.get(i + 1).map(|t| &t.tok)) {
                (Tok::Ident(kw), _) if kw == "vars" => {
                    i += 1;
                    loop {
                        let t = &toks[i];
                        let Tok::Ident(name) = &t.tok else {
                            return Err(ParseError::new(t.span, "expected variable name"));
                        };
                        if KEYWORDS.contains(&name.as_str()) {
                            return Err(ParseError::new(t.span, format!("`{name}` is a keyword")));
                        }
                        if vars.contains(name) {
                            return Err(ParseError::new(t.span, format!("variable `{name}` declared twice")));
                        }
                        vars.push(name.clone());
                        i += 1;
                        match toks[i].tok {
                            Tok::Comma => i += 1,
                            Tok::Semi => break,
                            _ => return Err(ParseError::new(toks[i].span, "expected `,` or `;` in vars")),
                        }
                    }
                }
                (Tok::Ident(kw), Some(Tok::Ident(name))) if kw == "func" => {
                    if KEYWORDS.contains(&name.as_str()) {
                        return Err(ParseError::new(toks[i + 1].span, format!("`{name}` is a keyword")));
                    }
                    if funcs.contains(name) || (name == "main" && funcs.iter().any(|f| f == "main")) {
                        return Err(ParseError::new(toks[i + 1].span, format!("function `{name}` defined twice")));
                    }
                    funcs.push(name.clone());
                    i += 1;
                }
                _ => {}
            }
            i += 1;
        }
        let mut p = Parser::bare(toks, vars);
        p.funcs = funcs.into_iter().filter(|f| f != "main").collect();
        Ok(p)
    }

    // ---------------------------------------------------------------- tokens

    fn peek(&self) -> &Tok {
        &self.toks[self.pos].tok
    }

    fn peek_at(&self, k: usize) -> &Tok {
        let i = (self.pos + k).min(self.toks.len() - 1);
        &self.toks[i].tok
    }

    fn span(&self) -> Span {
        self.toks[self.pos].span
    }

    fn bump(&mut self) -> Token {
        let t = self.toks[self.pos].clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn eat(&mut self, t: &Tok) -> bool {
        if self.peek() == t {
            self.bump();
            true
        } else {
            false
        }
    }

    fn expect(&mut self, t: &Tok) -> PResult<Span> {
        if self.peek() == t {
            Ok(self.bump().span)
        } else {
            Err(self.unexpected(&t.describe()))
        }
    }

    fn unexpected(&self, wanted: &str) -> ParseError {
        ParseError::new(self.span(), format!("expected {wanted}, found {}", self.peek().describe()))
    }

    fn is_kw(&self, kw: &str) -> bool {
        matches!(self.peek(), Tok::Ident(s) if s == kw)
    }

    fn eat_kw(&mut self, kw: &str) -> bool {
        if self.is_kw(kw) {
            self.bump();
            true
        } else {
            false
        }
    }

    fn expect_kw(&mut self, kw: &str) -> PResult<Span> {
        if self.is_kw(kw) {
            Ok(self.bump().span)
        } else {
            Err(self.unexpected(&format!("`{kw}`")))
        }
    }

    fn ident(&mut self) -> PResult<(String, Span)> {
        match self.peek().clone() {
            Tok::Ident(s) if !KEYWORDS.contains(&s.as_str()) => {
                let span = self.bump().span;
                Ok((s, span))
            }
            _ => Err(self.unexpected("an identifier")),
        }
    }

    // ---------------------------------------------------------------- items

    fn parse_items(&mut self) -> PResult<()> {
        loop {
            match self.peek().clone() {
                Tok::Eof => return Ok(()),
                Tok::Ident(kw) if kw == "vars" => {
                    while !self.eat(&Tok::Semi) {
                        self.bump();
                    }
                }
                Tok::Ident(kw) if kw == "pre" => {
                    self.bump();
                    let ctx = self.context()?;
                    self.expect(&Tok::Semi)?;
                    self.precondition = self.precondition.and(&ctx);
                }
                Tok::Ident(kw) if kw == "func" => self.function()?,
                Tok::AnnOpen if matches!(self.peek_at(1), Tok::Ident(s) if s == "spec") => self.spec()?,
                _ => return Err(self.unexpected("`vars`, `pre`, `func`, or a `{# spec ... #}` annotation")),
            }
        }
    }

    fn function(&mut self) -> PResult<()> {
        self.expect_kw("func")?;
        let (name, _) = self.ident()?;
        if self.eat(&Tok::LParen) {
            self.expect(&Tok::RParen)?;
        }
        let body = self.block()?;
        if name == "main" {
            self.main = Some(body);
        } else {
            self.bodies.insert(name, body);
        }
        Ok(())
    }

    fn spec(&mut self) -> PResult<()> {
        let span = self.expect(&Tok::AnnOpen)?;
        self.expect_kw("spec")?;
        let (name, name_span) = self.ident()?;
        let f = self.func_id(&name, name_span)?;
        self.expect(&Tok::Colon)?;
        self.in_annotation = true;
        self.expect(&Tok::LBrace)?;
        let (pre_ctx, pre) = self.ctx_and_poly()?;
        self.expect(&Tok::RBrace)?;
        self.expect(&Tok::Arrow)?;
        self.expect(&Tok::LBrace)?;
        let (post_ctx, post) = self.ctx_and_poly()?;
        self.expect(&Tok::RBrace)?;
        self.in_annotation = false;
        self.expect(&Tok::AnnClose)?;
        self.specs.entry(f).or_default().push(FuncSpec { pre_ctx, pre, post_ctx, post, span });
        Ok(())
    }

    fn ctx_and_poly(&mut self) -> PResult<(LogicalContext, Poly)> {
        let ctx = if self.peek() == &Tok::Semi { LogicalContext::tt() } else { self.context()? };
        self.expect(&Tok::Semi)?;
        let q = Poly::from_expr(&self.expr()?);
        Ok((ctx, q))
    }

    fn assertion(&mut self) -> PResult<Assertion> {
        let span = self.expect(&Tok::AnnOpen)?;
        self.in_annotation = true;
        let (ctx, potential) = self.ctx_and_poly()?;
        self.in_annotation = false;
        self.expect(&Tok::AnnClose)?;
        Ok(Assertion { ctx, potential, span })
    }

    fn func_id(&self, name: &str, span: Span) -> PResult<FuncId> {
        self.funcs
            .iter()
            .position(|f| f == name)
            .map(|i| FuncId(i as u32))
            .ok_or_else(|| ParseError::new(span, format!("unbound function `{name}`")))
    }

    fn finish(mut self) -> PResult<(Program, AnnotationSet)> {
        let main = self.main.take().ok_or_else(|| ParseError::new(self.span(), "program has no `main` function"))?;
        let mut funcs = Vec::new();
        for name in &self.funcs {
            let body = self.bodies.remove(name).expect("function collected in the declaration pass");
            funcs.push(Function { name: name.clone(), body });
        }
        let mut program = Program { vars: self.vars, funcs, main, precondition: self.precondition };
        let renumber = program.number_sites();
        let remap = |m: BTreeMap<SiteId, Assertion>| -> BTreeMap<SiteId, Assertion> {
            m.into_iter().map(|(k, v)| (renumber[&k], v)).collect()
        };
        let ann = AnnotationSet {
            specs: self.specs,
            loop_invariants: remap(self.invariants),
            weaken_sites: remap(self.weakens),
            unbound: self.extra_vars,
        };
        Ok((program, ann))
    }

    // ------------------------------------------------------------ statements

    fn mk(&mut self, kind: StmtKind, span: Span) -> Stmt {
        let site = SiteId(self.next_site);
        self.next_site += 1;
        Stmt { site, span, kind }
    }

    fn block(&mut self) -> PResult<Stmt> {
        let open = self.expect(&Tok::LBrace)?;
        let s = self.stmts(open)?;
        self.expect(&Tok::RBrace)?;
        Ok(s)
    }

    fn stmts(&mut self, open: Span) -> PResult<Stmt> {
        let mut items = Vec::new();
        while self.peek() != &Tok::RBrace {
            items.push(self.stmt()?);
            if !self.eat(&Tok::Semi) {
                break;
            }
        }
        let Some(mut acc) = items.pop() else {
            return Ok(self.mk(StmtKind::Skip, open));
        };
        while let Some(prev) = items.pop() {
            let span = prev.span;
            acc = self.mk(StmtKind::Seq(Box::new(prev), Box::new(acc)), span);
        }
        Ok(acc)
    }

    fn stmt(&mut self) -> PResult<Stmt> {
        if self.peek() == &Tok::AnnOpen {
            let a = self.assertion()?;
            let s = self.stmt_inner()?;
            if matches!(s.kind, StmtKind::While(..)) {
                self.invariants.insert(s.site, a);
            } else {
                self.weakens.insert(s.site, a);
            }
            return Ok(s);
        }
        self.stmt_inner()
    }

    fn stmt_inner(&mut self) -> PResult<Stmt> {
        let span = self.span();
        match self.peek().clone() {
            Tok::LBrace => self.block(),
            Tok::Ident(kw) => match kw.as_str() {
                "skip" => {
                    self.bump();
                    Ok(self.mk(StmtKind::Skip, span))
                }
                "tick" => {
                    self.bump();
                    self.expect(&Tok::LParen)?;
                    let c = self.signed_literal()?;
                    self.expect(&Tok::RParen)?;
                    Ok(self.mk(StmtKind::Tick(Constant::new(c)), span))
                }
                "call" => {
                    self.bump();
                    let (name, nspan) = self.ident()?;
                    let f = self.func_id(&name, nspan)?;
                    Ok(self.mk(StmtKind::Call(f), span))
                }
                "while" => {
                    self.bump();
                    let c = self.cond()?;
                    let body = self.block()?;
                    Ok(self.mk(StmtKind::While(c, Box::new(body)), span))
                }
                "if" => self.if_stmt(),
                _ => {
                    let (name, nspan) = self.ident()?;
                    let v = self.var(&name, nspan)?;
                    if self.eat(&Tok::Assign) {
                        let e = self.expr()?;
                        Ok(self.mk(StmtKind::Assign(v, e), span))
                    } else if self.eat(&Tok::Tilde) {
                        let d = self.dist()?;
                        Ok(self.mk(StmtKind::Sample(v, d), span))
                    } else {
                        Err(self.unexpected("`:=` or `~`"))
                    }
                }
            },
            _ => Err(self.unexpected("a statement")),
        }
    }

    fn if_stmt(&mut self) -> PResult<Stmt> {
        let span = self.expect_kw("if")?;
        if self.is_kw("prob") && self.peek_at(1) == &Tok::LParen {
            self.bump();
            self.expect(&Tok::LParen)?;
            let pspan = self.span();
            let p = self.signed_literal()?;
            self.expect(&Tok::RParen)?;
            if p < Rational::zero() || p > Rational::one() {
                return Err(ParseError::new(pspan, "branch probability must lie in [0, 1]"));
            }
            let s1 = self.block()?;
            let s2 = self.else_branch(span)?;
            return Ok(self.mk(StmtKind::Prob(Constant::new(p), Box::new(s1), Box::new(s2)), span));
        }
        let c = self.cond()?;
        let s1 = self.block()?;
        let s2 = self.else_branch(span)?;
        Ok(self.mk(StmtKind::If(c, Box::new(s1), Box::new(s2)), span))
    }

    fn else_branch(&mut self, span: Span) -> PResult<Stmt> {
        if !self.eat_kw("else") {
            return Ok(self.mk(StmtKind::Skip, span));
        }
        if self.is_kw("if") {
            self.if_stmt()
        } else {
            self.block()
        }
    }

    fn dist(&mut self) -> PResult<Dist> {
        let span = self.span();
        if self.eat_kw("uniform") {
            self.expect(&Tok::LParen)?;
            let lo = self.signed_literal()?;
            self.expect(&Tok::Comma)?;
            let hi = self.signed_literal()?;
            self.expect(&Tok::RParen)?;
            if lo >= hi {
                return Err(ParseError::new(span, "uniform(a, b) requires a < b"));
            }
            return Ok(Dist::Uniform { lo: Constant::new(lo), hi: Constant::new(hi) });
        }
        if self.eat_kw("discrete") {
            self.expect(&Tok::LParen)?;
            let mut items = Vec::new();
            let mut total = Rational::zero();
            loop {
                let v = self.signed_literal()?;
                self.expect(&Tok::Colon)?;
                let pspan = self.span();
                let p = self.signed_literal()?;
                if p < Rational::zero() || p > Rational::one() {
                    return Err(ParseError::new(pspan, "discrete probability must lie in [0, 1]"));
                }
                total += &p;
                items.push((Constant::new(v), Constant::new(p)));
                if !self.eat(&Tok::Comma) {
                    break;
                }
            }
            self.expect(&Tok::RParen)?;
            if !total.is_one() {
                return Err(ParseError::new(span, "discrete probabilities must sum to exactly 1"));
            }
            return Ok(Dist::Discrete(items));
        }
        Err(self.unexpected("`uniform` or `discrete`"))
    }

    fn signed_literal(&mut self) -> PResult<Rational> {
        let neg = self.eat(&Tok::Minus);
        let v = self.unsigned_literal()?;
        Ok(if neg { -v } else { v })
    }

    fn unsigned_literal(&mut self) -> PResult<Rational> {
        let span = self.span();
        let Tok::Number(n) = self.peek().clone() else {
            return Err(self.unexpected("a number"));
        };
        self.bump();
        let mut text = n;
        if self.peek() == &Tok::Slash {
            self.bump();
            let Tok::Number(d) = self.peek().clone() else {
                return Err(self.unexpected("a literal denominator"));
            };
            self.bump();
            text = format!("{text}/{d}");
        }
        parse_rational(&text).ok_or_else(|| ParseError::new(span, format!("malformed number `{text}`")))
    }

    // ----------------------------------------------------------- expressions

    fn var(&mut self, name: &str, span: Span) -> PResult<VarId> {
        if let Some(i) = self.vars.iter().position(|v| v == name) {
            return Ok(VarId(i as u32));
        }
        if self.in_annotation {
            let k = match self.extra_vars.iter().position(|(v, _)| v == name) {
                Some(k) => k,
                None => {
                    self.extra_vars.push((name.to_string(), span));
                    self.extra_vars.len() - 1
                }
            };
            return Ok(VarId((self.vars.len() + k) as u32));
        }
        Err(ParseError::new(span, format!("unbound variable `{name}`")))
    }

    fn expr(&mut self) -> PResult<Expr> {
        let mut acc = self.term()?;
        loop {
            if self.eat(&Tok::Plus) {
                let rhs = self.term()?;
                acc = Expr::add(acc, rhs);
            } else if self.eat(&Tok::Minus) {
                let rhs = self.term()?;
                acc = Expr::add(acc, negate(rhs));
            } else {
                return Ok(acc);
            }
        }
    }

    fn term(&mut self) -> PResult<Expr> {
        let mut acc = self.unary()?;
        while self.eat(&Tok::Star) {
            let rhs = self.unary()?;
            acc = Expr::mul(acc, rhs);
        }
        Ok(acc)
    }

    fn unary(&mut self) -> PResult<Expr> {
        if self.eat(&Tok::Minus) {
            return Ok(negate(self.unary()?));
        }
        self.power()
    }

    fn power(&mut self) -> PResult<Expr> {
        let base = self.atom()?;
        if !self.eat(&Tok::Caret) {
            return Ok(base);
        }
        let span = self.span();
        let Tok::Number(n) = self.peek().clone() else {
            return Err(self.unexpected("a natural exponent"));
        };
        self.bump();
        let k: u32 = n.parse().map_err(|_| ParseError::new(span, "exponent must be a natural number"))?;
        if k == 0 {
            return Ok(Expr::int(1));
        }
        let mut acc = base.clone();
        for _ in 1..k {
            acc = Expr::mul(acc, base.clone());
        }
        Ok(acc)
    }

    fn atom(&mut self) -> PResult<Expr> {
        match self.peek().clone() {
            Tok::Number(_) => Ok(Expr::Const(Constant::new(self.unsigned_literal()?))),
            Tok::LParen => {
                self.bump();
                let e = self.expr()?;
                self.expect(&Tok::RParen)?;
                Ok(e)
            }
            Tok::Ident(_) => {
                let (name, span) = self.ident()?;
                Ok(Expr::Var(self.var(&name, span)?))
            }
            _ => Err(self.unexpected("an expression")),
        }
    }

    // ------------------------------------------------------------ conditions

    fn cond(&mut self) -> PResult<Cond> {
        let mut acc = self.cond_and()?;
        while self.eat(&Tok::OrOr) {
            let rhs = self.cond_and()?;
            acc = or(acc, rhs);
        }
        Ok(acc)
    }

    fn cond_and(&mut self) -> PResult<Cond> {
        let mut acc = self.cond_unary()?;
        while self.eat(&Tok::AndAnd) {
            let rhs = self.cond_unary()?;
            acc = Cond::And(Box::new(acc), Box::new(rhs));
        }
        Ok(acc)
    }

    fn cond_unary(&mut self) -> PResult<Cond> {
        if self.eat(&Tok::Bang) {
            return Ok(Cond::Not(Box::new(self.cond_unary()?)));
        }
        if self.eat_kw("true") {
            return Ok(Cond::True);
        }
        if self.eat_kw("false") {
            return Ok(Cond::Not(Box::new(Cond::True)));
        }
        if self.peek() == &Tok::LParen {
            // `(` opens either a parenthesised condition or an expression operand.
            let save = self.pos;
            self.bump();
            if let Ok(c) = self.cond() {
                if self.eat(&Tok::RParen) && !is_relop(self.peek()) && !is_arith(self.peek()) {
                    return Ok(c);
                }
            }
            self.pos = save;
        }
        self.comparison()
    }

    fn comparison(&mut self) -> PResult<Cond> {
        let lhs = self.expr()?;
        let op = self.peek().clone();
        if !is_relop(&op) {
            return Err(self.unexpected("a comparison operator"));
        }
        self.bump();
        let rhs = self.expr()?;
        Ok(match op {
            Tok::Le => Cond::Le(lhs, rhs),
            Tok::Lt => Cond::Not(Box::new(Cond::Le(rhs, lhs))),
            Tok::Ge => Cond::Le(rhs, lhs),
            Tok::Gt => Cond::Not(Box::new(Cond::Le(lhs, rhs))),
            Tok::EqEq => Cond::And(Box::new(Cond::Le(lhs.clone(), rhs.clone())), Box::new(Cond::Le(rhs, lhs))),
            Tok::Ne => Cond::Not(Box::new(Cond::And(
                Box::new(Cond::Le(lhs.clone(), rhs.clone())),
                Box::new(Cond::Le(rhs, lhs)),
            ))),
            _ => unreachable!(),
        })
    }

    /// `true` or atoms separated by `,` / `&&`.
    fn context(&mut self) -> PResult<LogicalContext> {
        if self.eat_kw("true") {
            return Ok(LogicalContext::tt());
        }
        let mut ctx = LogicalContext::tt();
        loop {
            let lhs = Poly::from_expr(&self.expr()?);
            let op = self.peek().clone();
            self.bump();
            let rhs = Poly::from_expr(&self.expr()?);
            let atom = match op {
                Tok::Le => Atom::ge(&rhs, &lhs),
                Tok::Lt => Atom::gt(&rhs, &lhs),
                Tok::Ge => Atom::ge(&lhs, &rhs),
                Tok::Gt => Atom::gt(&lhs, &rhs),
                Tok::EqEq => Atom::eq(&lhs, &rhs),
                _ => {
                    self.pos -= 1;
                    return Err(self.unexpected("`<=`, `<`, `>=`, `>`, or `==`"));
                }
            };
            ctx.push(atom);
            if !(self.eat(&Tok::Comma) || self.eat(&Tok::AndAnd)) {
                return Ok(ctx);
            }
        }
    }
}

fn is_relop(t: &Tok) -> bool {
    matches!(t, Tok::Le | Tok::Lt | Tok::Ge | Tok::Gt | Tok::EqEq | Tok::Ne)
}

fn is_arith(t: &Tok) -> bool {
    matches!(t, Tok::Plus | Tok::Minus | Tok::Star | Tok::Caret)
}

fn negate(e: Expr) -> Expr {
    match e {
        Expr::Const(c) => Expr::Const(Constant::new(-c.exact().clone())),
        other => Expr::mul(Expr::int(-1), other),
    }
}

fn or(a: Cond, b: Cond) -> Cond {
    Cond::Not(Box::new(Cond::And(Box::new(Cond::Not(Box::new(a))), Box::new(Cond::Not(Box::new(b))))))
}
