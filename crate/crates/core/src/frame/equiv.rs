//! Bounded static equivalence.
//!
//! Two frames are statically equivalent when every equality test `M = N`
//! between recipes holds in one exactly when it holds in the other. The
//! search below builds a table of candidate recipes, each evaluated in both
//! frames, and keeps one representative per pair of values. A witness is
//! found as soon as two candidates agree on one side and disagree on the
//! other.
//!
//! Candidates are generated in a fixed order:
//!
//! 1. every alias, the generator, the constants and the attacker-owned
//!    names occurring in either frame;
//! 2. the building blocks of both saturated frames;
//! 3. closure rounds, each of which
//!    * synthesizes recipes for the subterms of the values already in the
//!      table (on each side, using the table as knowledge) — an application
//!      of a free constructor can only equal a term with the same head, so
//!      shapes that occur in the frames are the only interesting ones;
//!    * tries the homomorphism `checkV(V, s·X) = s·checkV(V, X)` for every
//!      key and Verheul signature in the table, which holds exactly when
//!      the signature verifies;
//!    * compares the candidates' scalar classes (point plus underivable
//!      scalar factors), which decides every Diffie–Hellman style test
//!      `s·X = t·Y` whose values need not occur in either frame.
//!
//! Only recipes with at most `test_bound` function-symbol applications are
//! considered. `Equivalent` is therefore a bounded guarantee.

use std::collections::{HashMap, HashSet};
use std::fmt;

use crate::term::{Name, Sort, Term};

use super::deduce::{Deducer, Knowledge};
use super::{Frame, FrameError, Recipe};

/// One of the two frames under comparison.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Side {
    Left,
    Right,
}

impl Side {
    pub fn other(self) -> Side {
        match self {
            Side::Left => Side::Right,
            Side::Right => Side::Left,
        }
    }
}

impl fmt::Display for Side {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Side::Left => "left",
            Side::Right => "right",
        })
    }
}

/// An equality test that holds in one frame only.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Witness {
    pub left: Recipe,
    pub right: Recipe,
    /// The frame in which `left = right` holds; it fails in the other.
    pub holds_in: Side,
}

impl fmt::Display for Witness {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} = {} holds only in {} frame",
            self.left, self.right, self.holds_in
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Verdict {
    /// No distinguishing test with at most `bound` applications was found.
    Equivalent { bound: usize },
    Distinguished(Witness),
}

impl Verdict {
    pub fn is_equivalent(&self) -> bool {
        matches!(self, Verdict::Equivalent { .. })
    }
}

struct Cand {
    recipe: Term,
    va: Term,
    vb: Term,
}

struct Table<'f> {
    fa: &'f Frame,
    fb: &'f Frame,
    bound: usize,
    cands: Vec<Cand>,
    by_a: HashMap<Term, usize>,
    by_b: HashMap<Term, usize>,
    seen: HashSet<Term>,
}

impl<'f> Table<'f> {
    fn offer(&mut self, recipe: Term) -> Result<(), Witness> {
        if recipe.size() > self.bound || !self.seen.insert(recipe.clone()) {
            return Ok(());
        }
        let va = self.fa.eval_term(&recipe);
        let vb = self.fb.eval_term(&recipe);
        if let Some(&i) = self.by_a.get(&va) {
            if self.cands[i].vb != vb {
                return Err(Witness {
                    left: Recipe(self.cands[i].recipe.clone()),
                    right: Recipe(recipe),
                    holds_in: Side::Left,
                });
            }
            return Ok(());
        }
        if let Some(&j) = self.by_b.get(&vb) {
            // The value pair is new on the left but not on the right.
            return Err(Witness {
                left: Recipe(self.cands[j].recipe.clone()),
                right: Recipe(recipe),
                holds_in: Side::Right,
            });
        }
        let idx = self.cands.len();
        self.by_a.insert(va.clone(), idx);
        self.by_b.insert(vb.clone(), idx);
        self.cands.push(Cand { recipe, va, vb });
        Ok(())
    }

    fn value(&self, i: usize, side: Side) -> &Term {
        match side {
            Side::Left => &self.cands[i].va,
            Side::Right => &self.cands[i].vb,
        }
    }

    fn frame(&self, side: Side) -> &Frame {
        match side {
            Side::Left => self.fa,
            Side::Right => self.fb,
        }
    }

    fn known(&self, side: Side, t: &Term) -> bool {
        match side {
            Side::Left => self.by_a.contains_key(t),
            Side::Right => self.by_b.contains_key(t),
        }
    }

    /// Splits the value of candidate `i` on `side` into its point, the
    /// scalar factors the attacker cannot derive, and recipes for the
    /// factors it can.
    fn scalar_class(&self, i: usize, side: Side) -> (&Term, Vec<&Term>, Vec<Term>) {
        let (base, factors): (&Term, Vec<&Term>) = match self.value(i, side) {
            Term::SMult(s, p) => match &**s {
                Term::Mult(fs) => (p, fs.iter().collect()),
                f => (p, vec![f]),
            },
            v => (v, Vec::new()),
        };
        let by_value = match side {
            Side::Left => &self.by_a,
            Side::Right => &self.by_b,
        };
        let mut secret = Vec::new();
        let mut public = Vec::new();
        for f in factors {
            match by_value.get(f) {
                Some(&j) => public.push(self.cands[j].recipe.clone()),
                None => secret.push(f),
            }
        }
        (base, secret, public)
    }

    /// Scalar-multiplication tests `s·X = t·Y` for attacker-derivable
    /// products `s`, `t`.
    ///
    /// Values are in normal form, so such a test holds exactly when `X`
    /// and `Y` have the same point and the same underivable scalar
    /// factors; the derivable factors can then be supplied crosswise. Two
    /// candidates in one class on one side but not on the other yield a
    /// witness, provided both recipes respect the size bound.
    fn scalar_classes(&self) -> Result<(), Witness> {
        let classes = |side: Side| {
            let mut first: HashMap<(&Term, Vec<&Term>), usize> = HashMap::new();
            (0..self.cands.len())
                .map(|i| {
                    let (base, secret, _) = self.scalar_class(i, side);
                    *first.entry((base, secret)).or_insert(i)
                })
                .collect::<Vec<usize>>()
        };
        let (ca, cb) = (classes(Side::Left), classes(Side::Right));
        for i in 0..self.cands.len() {
            for (side, j) in [(Side::Left, ca[i]), (Side::Right, cb[i])] {
                if j == i || ca[i] == ca[j] && cb[i] == cb[j] {
                    continue;
                }
                if let Some(w) = self.scalar_witness(j, i, side) {
                    return Err(w);
                }
            }
        }
        Ok(())
    }

    /// The test `pub(Y)·X = pub(X)·Y` for candidates `x`, `y` in one class
    /// on `side`, if it fits the bound and fails on the other side.
    fn scalar_witness(&self, x: usize, y: usize, side: Side) -> Option<Witness> {
        let times = |scalars: Vec<Term>, r: &Term| match scalars.len() {
            0 => r.clone(),
            _ => Term::SMult(Box::new(Term::mult_all(scalars)), Box::new(r.clone())),
        };
        let (_, _, mut px) = self.scalar_class(x, side);
        let (_, _, mut py) = self.scalar_class(y, side);
        // Factors common to both sides cancel.
        px.retain(|f| match py.iter().position(|g| g == f) {
            Some(k) => {
                py.remove(k);
                false
            }
            None => true,
        });
        let lhs = times(py, &self.cands[x].recipe);
        let rhs = times(px, &self.cands[y].recipe);
        if lhs.size() > self.bound || rhs.size() > self.bound {
            return None;
        }
        let here = self.frame(side);
        let there = self.frame(side.other());
        (here.eval_term(&lhs) == here.eval_term(&rhs) && there.eval_term(&lhs) != there.eval_term(&rhs))
            .then(|| Witness { left: Recipe(lhs), right: Recipe(rhs), holds_in: side })
    }

    /// For every key `V` and (possibly blinded) Verheul signature `X` in
    /// the table, both sides of `checkV(V, s·X) = s·checkV(V, X)`, which
    /// holds exactly when `X` verifies under `V`.
    fn verheul_homomorphisms(&self, s: &Term) -> Vec<Term> {
        let is = |i: usize, pred: &dyn Fn(&Term) -> bool| pred(&self.cands[i].va) || pred(&self.cands[i].vb);
        let key = |t: &Term| matches!(t, Term::Pkv(_));
        let signature = |t: &Term| match t {
            Term::Sigv(..) => true,
            Term::SMult(_, p) => matches!(**p, Term::Sigv(..)),
            _ => false,
        };
        let keys: Vec<usize> = (0..self.cands.len()).filter(|&i| is(i, &key)).collect();
        let sigs: Vec<usize> = (0..self.cands.len()).filter(|&i| is(i, &signature)).collect();
        let mut out = Vec::new();
        for &k in &keys {
            for &x in &sigs {
                let (v, x) = (&self.cands[k].recipe, &self.cands[x].recipe);
                if v.size() + x.size() + 2 > self.bound {
                    continue;
                }
                out.push(Term::CheckSigv(
                    Box::new(v.clone()),
                    Box::new(Term::SMult(Box::new(s.clone()), Box::new(x.clone()))),
                ));
                out.push(Term::SMult(
                    Box::new(s.clone()),
                    Box::new(Term::CheckSigv(Box::new(v.clone()), Box::new(x.clone()))),
                ));
            }
        }
        out
    }

    /// Recipes for subterms of table values on `side`.
    fn shape_recipes(&self, side: Side) -> Vec<Term> {
        let mut shapes = Vec::new();
        let mut seen = HashSet::new();
        for i in 0..self.cands.len() {
            self.value(i, side).visit(&mut |t: &Term| {
                let leaf = matches!(t, Term::Gen | Term::Const(_) | Term::Name(_) | Term::Var(_));
                if !leaf && seen.insert(t) {
                    shapes.push(t);
                }
            });
        }
        let kb = Knowledge::from_blocks(
            self.frame(side).restricted(),
            (0..self.cands.len())
                .map(|i| (self.cands[i].recipe.clone(), self.value(i, side).clone())),
        );
        let mut ded = Deducer::new(&kb);
        let mut out = Vec::new();
        for t in shapes {
            if self.known(side, t) {
                // Alternative constructions of a value already in the table.
                out.extend(ded.alternatives(t, self.bound).into_iter().map(|(r, _)| r));
            } else if let Some((r, _)) = ded.best(t, self.bound) {
                out.push(r);
            }
        }
        out
    }
}

fn atoms(fa: &Frame, fb: &Frame) -> Vec<Term> {
    let mut consts = std::collections::BTreeSet::new();
    for f in [fa, fb] {
        for (_, t) in f.bindings() {
            t.visit(&mut |s| {
                if let Term::Const(c) = s {
                    consts.insert(*c);
                }
            });
        }
    }
    let mut out = vec![Term::Gen];
    out.extend(consts.into_iter().map(Term::Const));
    out.extend(public_names(fa, fb).into_iter().map(Term::Name));
    out
}

fn public_names(fa: &Frame, fb: &Frame) -> Vec<Name> {
    let mut names: Vec<Name> = fa
        .public_names()
        .into_iter()
        .chain(fb.public_names())
        .filter(|n| !fa.is_restricted(n) && !fb.is_restricted(n))
        .collect();
    names.sort();
    names.dedup();
    names
}

/// A scalar the attacker may use freely: a public scalar name of the
/// frames, or else a name unused by either frame.
fn attacker_scalar(fa: &Frame, fb: &Frame) -> Term {
    if let Some(n) = public_names(fa, fb).into_iter().find(|n| n.sort == Sort::Scalar) {
        return Term::Name(n);
    }
    let used: HashSet<Name> = fa.public_names().into_iter().chain(fb.public_names()).collect();
    (0..)
        .map(|i| Name::scalar(format!("e{i}")))
        .find(|n| !used.contains(n) && !fa.is_restricted(n) && !fb.is_restricted(n))
        .map(Term::Name)
        .expect("infinitely many candidates")
}

/// Searches for an equality test of size at most `test_bound` that holds
/// in exactly one of the frames. The first witness in the deterministic
/// enumeration order is reported.
pub fn static_equiv(fa: &Frame, fb: &Frame, test_bound: usize) -> Result<Verdict, FrameError> {
    if fa.len() != fb.len() {
        return Err(FrameError::DomainMismatch(fa.len(), fb.len()));
    }
    match search(fa, fb, test_bound) {
        Ok(()) => Ok(Verdict::Equivalent { bound: test_bound }),
        Err(w) => Ok(Verdict::Distinguished(w)),
    }
}

fn search(fa: &Frame, fb: &Frame, bound: usize) -> Result<(), Witness> {
    let mut table = Table {
        fa,
        fb,
        bound,
        cands: Vec::new(),
        by_a: HashMap::new(),
        by_b: HashMap::new(),
        seen: HashSet::new(),
    };
    for (a, _) in fa.bindings() {
        table.offer(Term::Var(a))?;
    }
    for t in atoms(fa, fb) {
        table.offer(t)?;
    }
    let ka = Knowledge::saturate(fa, bound);
    let kb = Knowledge::saturate(fb, bound);
    for blk in ka.blocks().iter().chain(kb.blocks()) {
        table.offer(blk.recipe.clone())?;
    }

    let scalar = attacker_scalar(fa, fb);
    for _round in 0..bound {
        let before = table.cands.len();
        for side in [Side::Left, Side::Right] {
            for r in table.shape_recipes(side) {
                table.offer(r)?;
            }
        }
        for r in table.verheul_homomorphisms(&scalar) {
            table.offer(r)?;
        }
        table.scalar_classes()?;
        if table.cands.len() == before {
            break;
        }
    }
    Ok(())
}
