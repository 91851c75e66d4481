//! Independent test oracles.
//!
//! * [`random_term`] — a seeded generator of raw (unnormalized) terms that
//!   is biased towards redexes.
//! * [`rewrite_randomly`] — a small-step rewriter that applies one rule at a
//!   randomly chosen redex until none is left. It shares no code with the
//!   engine's normalizer; its result is compared through [`ac_canonical`].
//! * [`Enumerator`] — exhaustive bottom-up enumeration of *all* recipes up
//!   to a size bound over a frame (or a pair of frames), used to
//!   cross-validate deduction and static equivalence.
#![allow(dead_code)]

use std::collections::{BTreeSet, HashMap};

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use utx_core::frame::Frame;
use utx_core::term::{Const, Name, Sort, Term};

fn bx(t: Term) -> Box<Term> {
    Box::new(t)
}

// ---------------------------------------------------------------------------
// Random terms
// ---------------------------------------------------------------------------

pub fn scalar_pool() -> Vec<Term> {
    ["a", "b", "c", "x"]
        .iter()
        .map(|s| Term::Name(Name::scalar(*s)))
        .collect()
}

pub fn data_pool() -> Vec<Term> {
    ["k", "m", "n"]
        .iter()
        .map(|s| Term::Name(Name::data(*s)))
        .collect()
}

fn leaf(rng: &mut ChaCha8Rng) -> Term {
    match rng.gen_range(0..10) {
        0 => Term::Gen,
        1 => Term::Const(Const::FIXED[rng.gen_range(0..Const::FIXED.len())]),
        2 => Term::Const(Const::Month(rng.gen_range(0..3))),
        3..=5 => scalar_pool().choose(rng).unwrap().clone(),
        _ => data_pool().choose(rng).unwrap().clone(),
    }
}

fn scalar_term(rng: &mut ChaCha8Rng, depth: usize) -> Term {
    if depth <= 1 || rng.gen_bool(0.6) {
        scalar_pool().choose(rng).unwrap().clone()
    } else {
        let n = rng.gen_range(2..=3);
        Term::Mult((0..n).map(|_| scalar_term(rng, depth - 1)).collect())
    }
}

/// A raw term of depth at most `depth`.
pub fn random_term(rng: &mut ChaCha8Rng, depth: usize) -> Term {
    if depth <= 1 {
        return leaf(rng);
    }
    let d = depth - 1;
    match rng.gen_range(0..22) {
        0 => leaf(rng),
        1 => Term::Hash(bx(random_term(rng, d))),
        2 => Term::Enc(bx(random_term(rng, d)), bx(random_term(rng, d))),
        3 => {
            let n = rng.gen_range(2..=4);
            Term::Tuple((0..n).map(|_| random_term(rng, d)).collect())
        }
        4 => Term::Pk(bx(random_term(rng, d))),
        5 => Term::Sig(bx(random_term(rng, d)), bx(random_term(rng, d))),
        6 => Term::Pkv(bx(random_term(rng, d))),
        7 => Term::Sigv(bx(random_term(rng, d)), bx(random_term(rng, d))),
        8 => Term::SMult(bx(scalar_term(rng, d)), bx(random_term(rng, d))),
        9 => Term::Mult(vec![scalar_term(rng, d), scalar_term(rng, d)]),
        10 => Term::Proj(rng.gen_range(1..=4), bx(random_term(rng, d))),
        11 => Term::Dec(bx(random_term(rng, d)), bx(random_term(rng, d))),
        12 => Term::CheckSig(bx(random_term(rng, d)), bx(random_term(rng, d))),
        13 => Term::CheckSigv(bx(random_term(rng, d)), bx(random_term(rng, d))),
        // Redex-shaped terms, so that the rules actually fire.
        14 | 15 => {
            let k = random_term(rng, d.min(3));
            let m = random_term(rng, d);
            let k2 = if rng.gen_bool(0.8) { k.clone() } else { random_term(rng, 2) };
            Term::Dec(bx(k), bx(Term::Enc(bx(m), bx(k2))))
        }
        16 => {
            let n = rng.gen_range(2..=3);
            let items: Vec<Term> = (0..n).map(|_| random_term(rng, d)).collect();
            Term::Proj(rng.gen_range(1..=4), bx(Term::Tuple(items)))
        }
        17 => {
            let k = scalar_term(rng, 2);
            let m = random_term(rng, d);
            Term::CheckSig(bx(Term::Pk(bx(k.clone()))), bx(Term::Sig(bx(k), bx(m))))
        }
        18 | 19 => {
            let k = scalar_term(rng, 2);
            let p = random_term(rng, d);
            let s = Term::Sigv(bx(k.clone()), bx(p));
            let s = if rng.gen_bool(0.6) {
                Term::SMult(bx(scalar_term(rng, 3)), bx(s))
            } else {
                s
            };
            Term::CheckSigv(bx(Term::Pkv(bx(k))), bx(s))
        }
        20 => {
            let inner = Term::SMult(bx(scalar_term(rng, 2)), bx(random_term(rng, d)));
            Term::SMult(bx(scalar_term(rng, 2)), bx(inner))
        }
        _ => {
            let inner = Term::SMult(bx(scalar_term(rng, 2)), bx(random_term(rng, d)));
            Term::Sigv(bx(scalar_term(rng, 2)), bx(inner))
        }
    }
}

// ---------------------------------------------------------------------------
// Small-step rewriting
// ---------------------------------------------------------------------------

/// Flattens and sorts products everywhere; the result is a canonical
/// representative of the term modulo associativity and commutativity only.
pub fn ac_canonical(t: &Term) -> Term {
    match t {
        Term::Mult(fs) => {
            let mut out = Vec::new();
            for f in fs {
                match ac_canonical(f) {
                    Term::Mult(inner) => out.extend(inner),
                    g => out.push(g),
                }
            }
            out.sort();
            Term::Mult(out)
        }
        _ => map_children(t, &mut |c| ac_canonical(c)),
    }
}

fn map_children(t: &Term, f: &mut impl FnMut(&Term) -> Term) -> Term {
    match t {
        Term::Gen | Term::Const(_) | Term::Name(_) | Term::Var(_) => t.clone(),
        Term::Mult(xs) => Term::Mult(xs.iter().map(&mut *f).collect()),
        Term::Tuple(xs) => Term::Tuple(xs.iter().map(&mut *f).collect()),
        Term::SMult(x, y) => Term::SMult(bx(f(x)), bx(f(y))),
        Term::Hash(x) => Term::Hash(bx(f(x))),
        Term::Enc(x, y) => Term::Enc(bx(f(x)), bx(f(y))),
        Term::Pk(x) => Term::Pk(bx(f(x))),
        Term::Sig(x, y) => Term::Sig(bx(f(x)), bx(f(y))),
        Term::Pkv(x) => Term::Pkv(bx(f(x))),
        Term::Sigv(x, y) => Term::Sigv(bx(f(x)), bx(f(y))),
        Term::CheckSig(x, y) => Term::CheckSig(bx(f(x)), bx(f(y))),
        Term::CheckSigv(x, y) => Term::CheckSigv(bx(f(x)), bx(f(y))),
        Term::Proj(i, x) => Term::Proj(*i, bx(f(x))),
        Term::Dec(x, y) => Term::Dec(bx(f(x)), bx(f(y))),
    }
}

fn children(t: &Term) -> Vec<&Term> {
    match t {
        Term::Gen | Term::Const(_) | Term::Name(_) | Term::Var(_) => vec![],
        Term::Mult(xs) | Term::Tuple(xs) => xs.iter().collect(),
        Term::Hash(x) | Term::Pk(x) | Term::Pkv(x) | Term::Proj(_, x) => vec![x],
        Term::SMult(x, y)
        | Term::Enc(x, y)
        | Term::Sig(x, y)
        | Term::Sigv(x, y)
        | Term::CheckSig(x, y)
        | Term::CheckSigv(x, y)
        | Term::Dec(x, y) => vec![x, y],
    }
}

fn same(a: &Term, b: &Term) -> bool {
    ac_canonical(a) == ac_canonical(b)
}

/// One rewrite at the root, if a rule applies.
fn step_root(t: &Term) -> Option<Term> {
    match t {
        Term::Mult(fs) if fs.iter().any(|f| matches!(f, Term::Mult(_))) => {
            let mut out = Vec::new();
            for f in fs {
                match f {
                    Term::Mult(inner) => out.extend(inner.iter().cloned()),
                    g => out.push(g.clone()),
                }
            }
            Some(Term::Mult(out))
        }
        Term::SMult(s, p) => match &**p {
            Term::SMult(s2, q) => Some(Term::SMult(
                bx(Term::Mult(vec![(**s).clone(), (**s2).clone()])),
                q.clone(),
            )),
            _ => None,
        },
        Term::Sigv(k, m) => match &**m {
            Term::SMult(s, p) => Some(Term::SMult(s.clone(), bx(Term::Sigv(k.clone(), p.clone())))),
            _ => None,
        },
        Term::Dec(k, c) => match &**c {
            Term::Enc(m, k2) if same(k, k2) => Some((**m).clone()),
            _ => None,
        },
        Term::Proj(i, body) => match &**body {
            Term::Tuple(xs) if (*i as usize) <= xs.len() && *i >= 1 => {
                Some(xs[*i as usize - 1].clone())
            }
            _ => None,
        },
        Term::CheckSig(v, s) => match (&**v, &**s) {
            (Term::Pk(k), Term::Sig(k2, m)) if same(k, k2) => Some((**m).clone()),
            _ => None,
        },
        Term::CheckSigv(v, s) => match (&**v, &**s) {
            (Term::Pkv(k), Term::Sigv(k2, m)) if same(k, k2) => Some((**m).clone()),
            (Term::Pkv(k), Term::SMult(sc, inner)) => match &**inner {
                Term::Sigv(k2, m) if same(k, k2) => Some(Term::SMult(sc.clone(), m.clone())),
                _ => None,
            },
            _ => None,
        },
        _ => None,
    }
}

/// Paths (child index sequences) of every redex in `t`.
fn redexes(t: &Term, path: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
    if step_root(t).is_some() {
        out.push(path.clone());
    }
    for (i, c) in children(t).into_iter().enumerate() {
        path.push(i);
        redexes(c, path, out);
        path.pop();
    }
}

fn rewrite_at(t: &Term, path: &[usize]) -> Term {
    if path.is_empty() {
        return step_root(t).expect("redex");
    }
    let mut i = 0usize;
    map_children(t, &mut |c| {
        let r = if i == path[0] { rewrite_at(c, &path[1..]) } else { c.clone() };
        i += 1;
        r
    })
}

/// Rewrites `t` to a normal form, choosing the next redex at random.
/// Returns the AC-canonical form of the result.
pub fn rewrite_randomly(t: &Term, rng: &mut ChaCha8Rng) -> Term {
    let mut cur = t.clone();
    for _ in 0..100_000 {
        let mut found = Vec::new();
        redexes(&cur, &mut Vec::new(), &mut found);
        let Some(path) = found.choose(rng) else {
            return ac_canonical(&cur);
        };
        cur = rewrite_at(&cur, path);
    }
    panic!("rewriting did not terminate");
}

// ---------------------------------------------------------------------------
// Exhaustive recipe enumeration
// ---------------------------------------------------------------------------

#[derive(Clone, Copy)]
enum Op {
    Hash,
    Pk,
    Pkv,
    Proj(u32),
    Enc,
    Sig,
    Sigv,
    Check,
    CheckV,
    Dec,
    SMult,
    Mult,
}

fn apply_unary(op: Op, x: Term) -> Term {
    match op {
        Op::Hash => Term::hash(x),
        Op::Pk => Term::pk(x),
        Op::Pkv => Term::pkv(x),
        Op::Proj(i) => Term::proj(i, x),
        _ => unreachable!(),
    }
}

fn apply_binary(op: Op, x: Term, y: Term) -> Term {
    match op {
        Op::Enc => Term::enc(x, y),
        Op::Sig => Term::sig(x, y),
        Op::Sigv => Term::sigv(x, y),
        Op::Check => Term::check(x, y),
        Op::CheckV => Term::checkv(x, y),
        Op::Dec => Term::dec(x, y),
        Op::SMult => Term::smult(x, y),
        Op::Mult => Term::mult(x, y),
        _ => unreachable!(),
    }
}

/// A class of recipes with equal values in every frame under test.
#[derive(Clone)]
pub struct Class {
    pub recipe: Term,
    pub values: Vec<Term>,
}

/// Outcome of adding a recipe to the enumeration.
pub enum Added {
    New,
    Known,
    /// Two recipes agree in one frame and disagree in another.
    Split(Term, Term),
}

/// Bottom-up enumerator of all recipes by size, one representative per
/// vector of values (one value per frame).
pub struct Enumerator<'f> {
    frames: Vec<&'f Frame>,
    levels: Vec<Vec<usize>>,
    pub classes: Vec<Class>,
    index: Vec<HashMap<Term, usize>>,
    unary: Vec<Op>,
    binary: Vec<Op>,
    max_arity: usize,
    tuples: bool,
    /// A split already found among the leaves.
    leaf_split: Option<(Term, Term)>,
}

fn max_tuple_arity(f: &Frame) -> usize {
    let mut m = 2;
    for (_, t) in f.bindings() {
        t.visit(&mut |s| {
            if let Term::Tuple(xs) = s {
                m = m.max(xs.len());
            }
        });
    }
    m
}

impl<'f> Enumerator<'f> {
    /// Leaves: every alias, the generator, the constants and names
    /// occurring in the frames that are not restricted, and one fresh name
    /// of each sort.
    pub fn new(frames: Vec<&'f Frame>) -> Enumerator<'f> {
        let max_arity = frames.iter().map(|f| max_tuple_arity(f)).max().unwrap_or(2);
        let mut unary = vec![Op::Hash, Op::Pk, Op::Pkv];
        unary.extend((1..=max_arity as u32).map(Op::Proj));
        let binary = vec![
            Op::Enc,
            Op::Sig,
            Op::Sigv,
            Op::Check,
            Op::CheckV,
            Op::Dec,
            Op::SMult,
            Op::Mult,
        ];
        let mut e = Enumerator {
            index: vec![HashMap::new(); frames.len()],
            frames,
            levels: vec![Vec::new()],
            classes: Vec::new(),
            unary,
            binary,
            max_arity,
            tuples: true,
            leaf_split: None,
        };
        e.levels[0] = Vec::new();
        let mut leaves: Vec<Term> = Vec::new();
        let n = e.frames[0].len();
        leaves.extend((0..n as u32).map(Term::Var));
        leaves.push(Term::Gen);
        let mut consts = BTreeSet::new();
        let mut names = BTreeSet::new();
        for f in &e.frames {
            for (_, t) in f.bindings() {
                t.visit(&mut |s| match s {
                    Term::Const(c) => {
                        consts.insert(*c);
                    }
                    Term::Name(nm) => {
                        names.insert(nm.clone());
                    }
                    _ => {}
                });
            }
        }
        leaves.extend(consts.into_iter().map(Term::Const));
        leaves.extend(
            names
                .into_iter()
                .filter(|nm| e.frames.iter().all(|f| !f.is_restricted(nm)))
                .map(Term::Name),
        );
        leaves.push(Term::Name(Name::new("fresh_s", Sort::Scalar)));
        leaves.push(Term::Name(Name::new("fresh_d", Sort::Data)));
        for l in leaves {
            if let Added::Split(a, b) = e.add(l, 0) {
                e.leaf_split.get_or_insert((a, b));
            }
        }
        e
    }

    fn add(&mut self, recipe: Term, level: usize) -> Added {
        let values: Vec<Term> = self.frames.iter().map(|f| f.eval_term(&recipe)).collect();
        let hits: Vec<Option<usize>> = values
            .iter()
            .zip(&self.index)
            .map(|(v, ix)| ix.get(v).copied())
            .collect();
        if let Some(Some(first)) = hits.iter().find(|h| h.is_some()) {
            if hits.iter().all(|h| *h == Some(*first)) {
                return Added::Known;
            }
            let other = hits.iter().flatten().find(|&&h| h != *first).copied();
            let partner = other.unwrap_or(*first);
            return Added::Split(self.classes[partner].recipe.clone(), recipe);
        }
        let idx = self.classes.len();
        for (v, ix) in values.iter().zip(self.index.iter_mut()) {
            ix.insert(v.clone(), idx);
        }
        self.classes.push(Class { recipe, values });
        while self.levels.len() <= level {
            self.levels.push(Vec::new());
        }
        self.levels[level].push(idx);
        Added::New
    }

    /// Enumerates every recipe of size `level` (assuming all smaller levels
    /// are complete). Candidates are added as they are built. Returns the
    /// first split found, if any.
    pub fn grow(&mut self, level: usize) -> Option<(Term, Term)> {
        assert!(level >= 1 && self.levels.len() >= level);
        let recipes: Vec<Vec<Term>> = self
            .levels
            .iter()
            .map(|l| l.iter().map(|&i| self.classes[i].recipe.clone()).collect())
            .collect();
        if self.levels.len() <= level {
            self.levels.push(Vec::new());
        }
        macro_rules! try_add {
            ($t:expr) => {
                if let Added::Split(a, b) = self.add($t, level) {
                    return Some((a, b));
                }
            };
        }
        for op in self.unary.clone() {
            for r in &recipes[level - 1] {
                try_add!(apply_unary(op, r.clone()));
            }
        }
        for l in 0..level {
            let r = level - 1 - l;
            for op in self.binary.clone() {
                for x in &recipes[l] {
                    for y in &recipes[r] {
                        try_add!(apply_binary(op, x.clone(), y.clone()));
                    }
                }
            }
        }
        if !self.tuples {
            return None;
        }
        for arity in 2..=self.max_arity {
            for sizes in compositions(level - 1, arity) {
                let mut partial: Vec<Vec<Term>> = vec![Vec::new()];
                for s in sizes {
                    let mut next = Vec::new();
                    for p in &partial {
                        for x in &recipes[s] {
                            let mut q = p.clone();
                            q.push(x.clone());
                            next.push(q);
                        }
                    }
                    partial = next;
                }
                for t in partial {
                    try_add!(Term::Tuple(t));
                }
            }
        }
        None
    }

    /// Restricts enumeration to scalar multiplication, products, hashing
    /// and the Verheul operations, without tuples. On frames built from
    /// those operations alone the omitted free constructors can only equal
    /// terms with the same head, and their destructors stay stuck, so the
    /// omitted recipes give no new tests.
    pub fn group_ops_only(mut self) -> Self {
        self.unary = vec![Op::Hash, Op::Pkv];
        self.binary = vec![Op::Sigv, Op::CheckV, Op::SMult, Op::Mult];
        self.tuples = false;
        self
    }

    /// Grows to `bound`; returns the first split found.
    pub fn run(&mut self, bound: usize) -> Option<(Term, Term)> {
        if let Some(w) = self.leaf_split.clone() {
            return Some(w);
        }
        for level in 1..=bound {
            if let Some(w) = self.grow(level) {
                return Some(w);
            }
        }
        None
    }

    /// True if some enumerated recipe yields `target` in frame `i`.
    pub fn derives(&self, i: usize, target: &Term) -> bool {
        self.index[i].contains_key(target)
    }
}

/// All ways of writing `n` as an ordered sum of `k` non-negative parts.
fn compositions(n: usize, k: usize) -> Vec<Vec<usize>> {
    if k == 1 {
        return vec![vec![n]];
    }
    let mut out = Vec::new();
    for first in 0..=n {
        for mut rest in compositions(n - first, k - 1) {
            rest.insert(0, first);
            out.push(rest);
        }
    }
    out
}

/// Exhaustive static-equivalence check up to `bound`: returns a pair of
/// recipes that agree in exactly one frame, if any.
pub fn brute_force_distinguish(fa: &Frame, fb: &Frame, bound: usize) -> Option<(Term, Term)> {
    Enumerator::new(vec![fa, fb]).run(bound)
}

/// [`brute_force_distinguish`] over the group operations only; see
/// [`Enumerator::group_ops_only`].
pub fn brute_force_distinguish_group(fa: &Frame, fb: &Frame, bound: usize) -> Option<(Term, Term)> {
    Enumerator::new(vec![fa, fb]).group_ops_only().run(bound)
}

/// Exhaustive derivability check up to `bound`.
pub fn brute_force_derivable(f: &Frame, target: &Term, bound: usize) -> bool {
    let mut e = Enumerator::new(vec![f]);
    e.run(bound);
    e.derives(0, target)
}
