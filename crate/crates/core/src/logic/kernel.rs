//! Annotated transition kernel: the plain kernel with a potential carried
//! alongside every configuration.
//!
//! The annotation of a successor depends only on which rule fired, never on
//! sampled values, so the annotated step reuses [`runtime::step`] and
//! [`runtime::advance`] unchanged. Erasing annotations therefore yields the
//! plain kernel exactly.
//!
//! Each continuation frame remembers the body (`CtxKey`) and accumulated call
//! frame shift of the code it will resume.

use std::collections::HashMap;
use std::sync::Arc;

use rand::Rng;

use super::check::{CtxKey, Derivation};
use super::context::LogicalContext;
use crate::num::rational_to_f64;
use crate::poly::{CompiledPoly, Poly};
use crate::runtime::{self, Configuration, Frame, Kont, Scalar, StepDistribution, SKIP};
use crate::surface::{FuncId, Program, SiteId, Stmt, StmtKind};
use crate::Rational;

#[derive(Debug)]
pub struct Potential {
    pub poly: Poly,
    compiled: CompiledPoly,
}

impl Potential {
    pub fn new(poly: Poly) -> Potential {
        let compiled = poly.compile();
        Potential { poly, compiled }
    }
}

#[derive(Debug)]
struct Entry {
    pre: Arc<Potential>,
    post: Arc<Potential>,
    pre_ctx: Arc<LogicalContext>,
    post_ctx: Arc<LogicalContext>,
    call: Option<(usize, Rational)>,
}

/// Derivation entries indexed for the kernel.
#[derive(Debug)]
pub struct AnnotationTable {
    entries: HashMap<(CtxKey, SiteId), Entry>,
}

#[derive(Debug)]
struct AnnFrame {
    ctx: CtxKey,
    shift: Rational,
    shift_f: f64,
    next: Option<Arc<AnnFrame>>,
}

/// `(Γ, Q)` of an annotated configuration; `Q(γ) = poly(γ) + shift`.
#[derive(Clone, Debug)]
pub struct Annotation {
    pub ctx: CtxKey,
    pub shift: Rational,
    shift_f: f64,
    pub potential: Arc<Potential>,
    pub context: Arc<LogicalContext>,
    frames: Option<Arc<AnnFrame>>,
}

impl Annotation {
    /// Exact or binary64 value of the carried potential.
    pub fn value<V: Scalar>(&self, gamma: &[V]) -> V {
        V::eval_poly(&self.potential.poly, gamma).add(&V::from_const(&self.shift.clone().into()))
    }

    pub fn value_f64(&self, gamma: &[f64]) -> f64 {
        self.potential.compiled.eval(gamma) + self.shift_f
    }

    /// Number of annotated continuation frames; equals the plain depth.
    pub fn depth(&self) -> usize {
        let mut n = 0;
        let mut f = &self.frames;
        while let Some(fr) = f {
            n += 1;
            f = &fr.next;
        }
        n
    }
}

impl AnnotationTable {
    pub fn new(derivation: &Derivation) -> AnnotationTable {
        let entries = derivation
            .entries
            .iter()
            .map(|(k, d)| {
                let e = Entry {
                    pre: Arc::new(Potential::new(d.pre.clone())),
                    post: Arc::new(Potential::new(d.post.clone())),
                    pre_ctx: Arc::new(d.pre_ctx.clone()),
                    post_ctx: Arc::new(d.post_ctx.clone()),
                    call: d.call.as_ref().map(|c| (c.spec, c.frame.clone())),
                };
                (*k, e)
            })
            .collect();
        AnnotationTable { entries }
    }

    fn entry(&self, ctx: CtxKey, site: SiteId) -> &Entry {
        self.entries.get(&(ctx, site)).unwrap_or_else(|| panic!("no derivation entry for {ctx:?} at {site}"))
    }

    /// Annotation of `⟨γ0, S_main, Kstop, 0⟩`.
    pub fn initial(&self, program: &Program) -> Annotation {
        let e = self.entry(CtxKey::Main, program.main.site);
        Annotation {
            ctx: CtxKey::Main,
            shift: Rational::from_integer(0.into()),
            shift_f: 0.0,
            potential: e.pre.clone(),
            context: e.pre_ctx.clone(),
            frames: None,
        }
    }

    fn enter(&self, base: &Annotation, ctx: CtxKey, shift: Rational, shift_f: f64, stmt: &Stmt) -> Annotation {
        let e = self.entry(ctx, stmt.site);
        Annotation {
            ctx,
            shift,
            shift_f,
            potential: e.pre.clone(),
            context: e.pre_ctx.clone(),
            frames: base.frames.clone(),
        }
    }

    /// Annotation of a successor of `(stmt, kont)` carrying `parent`.
    /// `succ_stmt` is the successor's control statement.
    pub fn successor(&self, parent: &Annotation, stmt: &Stmt, kont: &Kont<'_>, succ_stmt: &Stmt) -> Annotation {
        let same = |p: &Annotation| (p.ctx, p.shift.clone(), p.shift_f);
        match &stmt.kind {
            StmtKind::Skip => {
                let (Some(frame), Some(af)) = (kont.frame(), parent.frames.as_ref()) else {
                    return parent.clone();
                };
                match frame {
                    Frame::Loop { stmt: w, .. } if std::ptr::eq(succ_stmt, &SKIP) => {
                        let e = self.entry(af.ctx, w.site);
                        Annotation {
                            ctx: af.ctx,
                            shift: af.shift.clone(),
                            shift_f: af.shift_f,
                            potential: e.post.clone(),
                            context: e.post_ctx.clone(),
                            frames: af.next.clone(),
                        }
                    }
                    Frame::Loop { .. } => self.enter(parent, af.ctx, af.shift.clone(), af.shift_f, succ_stmt),
                    Frame::Seq { stmt: s2, .. } => {
                        let mut a = self.enter(parent, af.ctx, af.shift.clone(), af.shift_f, s2);
                        a.frames = af.next.clone();
                        a
                    }
                }
            }
            StmtKind::Tick(_) | StmtKind::Assign(..) | StmtKind::Sample(..) => {
                let e = self.entry(parent.ctx, stmt.site);
                Annotation { potential: e.post.clone(), context: e.post_ctx.clone(), ..parent.clone() }
            }
            StmtKind::Call(f) => {
                let (j, c) =
                    self.entry(parent.ctx, stmt.site).call.clone().expect("call entry records its specification");
                let ctx = CtxKey::Spec { func: *f, index: j };
                let shift_f = parent.shift_f + rational_to_f64(&c);
                self.enter(parent, ctx, &parent.shift + &c, shift_f, succ_stmt)
            }
            StmtKind::Prob(..) | StmtKind::If(..) => {
                let (ctx, shift, shift_f) = same(parent);
                self.enter(parent, ctx, shift, shift_f, succ_stmt)
            }
            StmtKind::While(..) => Annotation { frames: Some(push(parent)), ..parent.clone() },
            StmtKind::Seq(s1, _) => {
                let (ctx, shift, shift_f) = same(parent);
                let mut a = self.enter(parent, ctx, shift, shift_f, s1);
                a.frames = Some(push(parent));
                a
            }
        }
    }

    /// One annotated step: the plain successor distribution plus the
    /// annotation of each outcome (one shared annotation for a pushforward).
    pub fn step<'p, V: Scalar>(
        &self,
        program: &'p Program,
        sigma: &Configuration<'p, V>,
        ann: &Annotation,
    ) -> (StepDistribution<'p, V>, Vec<Annotation>) {
        let dist = runtime::step(program, sigma);
        let anns = match &dist {
            StepDistribution::Finite(outs) => {
                outs.iter().map(|(_, c)| self.successor(ann, sigma.stmt, &sigma.kont, c.stmt)).collect()
            }
            StepDistribution::Pushforward { base, .. } => {
                vec![self.successor(ann, sigma.stmt, &sigma.kont, base.stmt)]
            }
        };
        (dist, anns)
    }

    /// In-place annotated draw; consumes `rng` exactly as [`runtime::advance`].
    pub fn advance<'p, R: Rng + ?Sized>(
        &self,
        rng: &mut R,
        program: &'p Program,
        sigma: &mut Configuration<'p, f64>,
        ann: &mut Annotation,
    ) {
        let (stmt, kont) = (sigma.stmt, sigma.kont.clone());
        runtime::advance(rng, program, sigma);
        *ann = self.successor(ann, stmt, &kont, sigma.stmt);
    }

    /// Accumulated frame shifts are all nonnegative iff every recorded call
    /// frame is.
    pub fn frames_nonnegative(&self) -> bool {
        self.entries.values().all(|e| e.call.as_ref().is_none_or(|(_, c)| *c >= Rational::from_integer(0.into())))
    }

    /// Bodies referenced by call entries.
    pub fn called(&self) -> Vec<(FuncId, usize)> {
        let mut out: Vec<(FuncId, usize)> = self
            .entries
            .keys()
            .filter_map(|(k, _)| match k {
                CtxKey::Spec { func, index } => Some((*func, *index)),
                CtxKey::Main => None,
            })
            .collect();
        out.sort();
        out.dedup();
        out
    }
}

fn push(parent: &Annotation) -> Arc<AnnFrame> {
    Arc::new(AnnFrame {
        ctx: parent.ctx,
        shift: parent.shift.clone(),
        shift_f: parent.shift_f,
        next: parent.frames.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::logic::{check_program, CheckOptions};
    use crate::runtime::Valuation;
    use crate::surface::parse;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    const RDWALK: &str = "
vars x, d, t;
pre d > 0;
{# spec rdwalk : {d > 0, x <= d + 2 ; 2*(d - x) + 4} -> {d > 0 ; 0} #}
func rdwalk() {
  if x < d { t ~ uniform(-1, 2); x := x + t; call rdwalk; tick(1) }
}
func main() { x := 0; call rdwalk }
";

    #[test]
    fn erasure_and_potential_track_cost() {
        let (p, ann) = parse(RDWALK).unwrap();
        let r = check_program(&p, &ann, &CheckOptions::default());
        assert!(r.is_accepted());
        let table = AnnotationTable::new(&r.derivation);
        let mut rng_a = ChaCha8Rng::seed_from_u64(3);
        let mut rng_b = ChaCha8Rng::seed_from_u64(3);
        let mut sigma = Configuration::initial(&p, Valuation(vec![0.0, 4.0, 0.0]));
        let mut plain = sigma.clone();
        let mut a = table.initial(&p);
        assert_eq!(a.value_f64(&sigma.gamma.0), 12.0);
        for _ in 0..10_000 {
            table.advance(&mut rng_a, &p, &mut sigma, &mut a);
            runtime::advance(&mut rng_b, &p, &mut plain);
            assert_eq!(sigma.stmt.site, plain.stmt.site);
            assert_eq!(sigma.gamma.0, plain.gamma.0);
            assert_eq!(sigma.kont, plain.kont);
            assert_eq!(a.depth(), sigma.kont.depth());
            assert!(a.value_f64(&sigma.gamma.0) >= -1e-9);
            if sigma.is_terminal() {
                break;
            }
        }
        assert!(sigma.is_terminal());
        assert_eq!(a.value_f64(&sigma.gamma.0), 0.0);
    }

    #[test]
    fn finite_step_annotates_each_branch() {
        let src = "vars x; func main() { if prob(1/4) { tick(2) } else { x := 1; tick(1) } }";
        let (p, ann) = parse(src).unwrap();
        let r = check_program(&p, &ann, &CheckOptions::default());
        assert!(r.is_accepted());
        let table = AnnotationTable::new(&r.derivation);
        let sigma = Configuration::<Rational>::initial(&p, Valuation::zeros(1));
        let a = table.initial(&p);
        let (dist, anns) = table.step(&p, &sigma, &a);
        let StepDistribution::Finite(outs) = dist else { panic!() };
        let expected: Rational = outs.iter().zip(&anns).map(|((w, c), a)| w * a.value::<Rational>(&c.gamma.0)).sum();
        assert_eq!(expected, a.value::<Rational>(&sigma.gamma.0));
    }
}
