//! Attacker knowledge: frames, recipes, saturation, deduction and bounded
//! static equivalence.
//!
//! A [`Frame`] is a set of restricted (secret) names together with an
//! ordered list of bindings `alias ↦ term`, one per protocol output the
//! attacker has observed. Aliases are represented inside recipes as
//! [`Term::Var`] leaves, so evaluating a recipe is substitution followed by
//! normalization.

mod deduce;
mod equiv;

pub use deduce::{Block, Knowledge};
pub use equiv::{static_equiv, Side, Verdict, Witness};

use std::collections::BTreeSet;
use std::fmt;

use thiserror::Error;

use crate::term::{self, free_names, Name, Term, TermError};

/// Default bound on constructor applications used by [`derive`].
pub const DEFAULT_SIZE_BOUND: usize = 8;
/// Default bound on the size of equality tests used by [`static_equiv`].
pub const DEFAULT_TEST_BOUND: usize = 6;

/// Identifier of a frame binding.
pub type Alias = u32;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FrameError {
    #[error("alias domains differ: {0} vs {1} bindings")]
    DomainMismatch(usize, usize),
    #[error("not a recipe: {0}")]
    NotARecipe(String),
    #[error(transparent)]
    Term(#[from] TermError),
    #[error("frame parse error: {0}")]
    Parse(String),
}

/// Attacker knowledge.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Frame {
    restricted: BTreeSet<Name>,
    bindings: Vec<Term>,
}

/// A term built only from aliases, public constants, the generator and
/// names the attacker owns.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Recipe(Term);

impl Recipe {
    /// Wraps `t` after checking it against `frame`.
    pub fn new(t: Term, frame: &Frame) -> Result<Recipe, FrameError> {
        frame.check_recipe(&t)?;
        Ok(Recipe(t))
    }
    /// A recipe consisting of a single alias.
    pub fn alias(a: Alias) -> Recipe {
        Recipe(Term::Var(a))
    }
    pub fn term(&self) -> &Term {
        &self.0
    }
    pub fn into_term(self) -> Term {
        self.0
    }
    /// Number of function-symbol applications in the recipe.
    pub fn size(&self) -> usize {
        self.0.size()
    }
}

impl fmt::Display for Recipe {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

impl Frame {
    pub fn new() -> Frame {
        Frame::default()
    }

    /// Adds a name to the restricted set.
    pub fn restrict(&mut self, n: &Name) {
        self.restricted.insert(n.clone());
    }

    pub fn restricted(&self) -> &BTreeSet<Name> {
        &self.restricted
    }

    pub fn is_restricted(&self, n: &Name) -> bool {
        self.restricted.contains(n)
    }

    /// Records an output; `t` must already be in normal form.
    pub fn extend(&mut self, t: Term) -> Alias {
        debug_assert_eq!(term::normalize(&t).as_ref(), Ok(&t), "binding not normal");
        self.bindings.push(t);
        (self.bindings.len() - 1) as Alias
    }

    pub fn len(&self) -> usize {
        self.bindings.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bindings.is_empty()
    }

    pub fn image(&self, a: Alias) -> Option<&Term> {
        self.bindings.get(a as usize)
    }

    pub fn bindings(&self) -> impl Iterator<Item = (Alias, &Term)> {
        self.bindings.iter().enumerate().map(|(i, t)| (i as Alias, t))
    }

    /// Names occurring in bindings that the attacker owns (not restricted).
    pub fn public_names(&self) -> BTreeSet<Name> {
        let mut out = BTreeSet::new();
        for t in &self.bindings {
            for n in free_names(t) {
                if !self.restricted.contains(&n) {
                    out.insert(n);
                }
            }
        }
        out
    }

    /// Checks that `t` only refers to known aliases and public names.
    pub fn check_recipe(&self, t: &Term) -> Result<(), FrameError> {
        for v in t.vars() {
            if v as usize >= self.bindings.len() {
                return Err(FrameError::NotARecipe(format!("unknown alias {v}")));
            }
        }
        for n in free_names(t) {
            if self.restricted.contains(&n) {
                return Err(FrameError::NotARecipe(format!("restricted name {}", n.id)));
            }
        }
        term::normalize(t)?;
        Ok(())
    }

    /// Evaluates a recipe term: aliases are replaced by their images and
    /// the result is normalized.
    pub fn eval_term(&self, r: &Term) -> Term {
        eval_with(r, &self.bindings)
    }

    pub fn eval(&self, r: &Recipe) -> Term {
        self.eval_term(&r.0)
    }
}

/// Substitutes `Var(i) ↦ images[i]` and rebuilds through the normalizing
/// constructors. Unknown variables are left in place.
pub(crate) fn eval_with(r: &Term, images: &[Term]) -> Term {
    let e = |t: &Term| eval_with(t, images);
    match r {
        Term::Var(v) => images
            .get(*v as usize)
            .cloned()
            .unwrap_or_else(|| r.clone()),
        Term::Gen | Term::Const(_) | Term::Name(_) => r.clone(),
        Term::Mult(fs) => Term::mult_all(fs.iter().map(e).collect()),
        Term::Tuple(xs) => Term::Tuple(xs.iter().map(e).collect()),
        Term::SMult(s, p) => Term::smult(e(s), e(p)),
        Term::Hash(x) => Term::hash(e(x)),
        Term::Enc(m, k) => Term::enc(e(m), e(k)),
        Term::Pk(k) => Term::pk(e(k)),
        Term::Sig(k, m) => Term::sig(e(k), e(m)),
        Term::Pkv(k) => Term::pkv(e(k)),
        Term::Sigv(k, m) => Term::sigv(e(k), e(m)),
        Term::CheckSig(v, s) => Term::check(e(v), e(s)),
        Term::CheckSigv(v, s) => Term::checkv(e(v), e(s)),
        Term::Proj(i, x) => Term::proj(*i, e(x)),
        Term::Dec(k, c) => Term::dec(e(k), e(c)),
    }
}

/// Saturates the frame with the default size bound.
pub fn saturate(f: &Frame) -> Knowledge {
    Knowledge::saturate(f, DEFAULT_SIZE_BOUND)
}

/// Searches for a recipe producing `target` using at most `size_bound`
/// constructor applications on top of the saturated frame.
pub fn derive(f: &Frame, target: &Term, size_bound: usize) -> Option<Recipe> {
    let kb = Knowledge::saturate(f, size_bound);
    kb.derive(f, target, size_bound)
}

impl fmt::Display for Frame {
    /// One `restricted` header line followed by one `uN = term` line per
    /// binding.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("restricted")?;
        for n in &self.restricted {
            write!(f, " {}", Term::Name(n.clone()))?;
        }
        writeln!(f)?;
        for (a, t) in self.bindings() {
            writeln!(f, "u{a} = {t}")?;
        }
        Ok(())
    }
}

impl std::str::FromStr for Frame {
    type Err = FrameError;

    fn from_str(s: &str) -> Result<Frame, FrameError> {
        let mut lines = s.lines().filter(|l| !l.trim().is_empty());
        let header = lines
            .next()
            .ok_or_else(|| FrameError::Parse("missing header".into()))?;
        let rest = header
            .trim()
            .strip_prefix("restricted")
            .ok_or_else(|| FrameError::Parse("header must start with 'restricted'".into()))?;
        let mut frame = Frame::new();
        let names = term::parse(&format!("(tuple (gen) (gen) {rest})"))
            .map_err(|e| FrameError::Parse(e.to_string()))?;
        if let Term::Tuple(items) = names {
            for t in items.into_iter().skip(2) {
                match t {
                    Term::Name(n) => frame.restrict(&n),
                    other => return Err(FrameError::Parse(format!("not a name: {other}"))),
                }
            }
        }
        for (i, line) in lines.enumerate() {
            let (lhs, rhs) = line
                .split_once('=')
                .ok_or_else(|| FrameError::Parse(format!("missing '=' in {line:?}")))?;
            if lhs.trim() != format!("u{i}") {
                return Err(FrameError::Parse(format!("expected alias u{i}")));
            }
            let t = term::parse(rhs.trim()).map_err(|e| FrameError::Parse(e.to_string()))?;
            frame.extend(term::normalize(&t)?);
        }
        Ok(frame)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn s(id: &str) -> Name {
        Name::scalar(id)
    }
    fn d(id: &str) -> Name {
        Name::data(id)
    }
    fn n(x: &Name) -> Term {
        Term::name(x)
    }

    #[test]
    fn extend_allocates_fresh_aliases() {
        let mut f = Frame::new();
        assert_eq!(f.extend(Term::gen()), 0);
        assert_eq!(f.extend(Term::gen()), 1);
        assert_eq!(f.image(1), Some(&Term::gen()));
    }

    #[test]
    fn recipes_may_not_mention_restricted_names() {
        let mut f = Frame::new();
        f.restrict(&s("a"));
        f.extend(Term::gen());
        assert!(Recipe::new(Term::smult(n(&s("a")), Term::Var(0)), &f).is_err());
        assert!(Recipe::new(Term::smult(n(&s("x")), Term::Var(0)), &f).is_ok());
        assert!(Recipe::new(Term::Var(3), &f).is_err());
    }

    #[test]
    fn saturation_opens_encryption_with_known_key() {
        let mut f = Frame::new();
        f.restrict(&d("m"));
        f.restrict(&d("k"));
        f.extend(Term::enc(n(&d("m")), n(&d("k"))));
        f.extend(n(&d("k")));
        let kb = saturate(&f);
        let r = kb.lookup(&n(&d("m"))).expect("m exposed");
        assert_eq!(r, &Term::dec(Term::Var(1), Term::Var(0)));
    }

    #[test]
    fn saturation_adds_nothing_for_blinded_key() {
        let mut f = Frame::new();
        f.restrict(&s("a"));
        f.restrict(&s("c"));
        f.extend(Term::smult(n(&s("a")), Term::smult(n(&s("c")), Term::gen())));
        assert_eq!(saturate(&f).len(), 1);
    }

    #[test]
    fn derive_simple_decryption() {
        let mut f = Frame::new();
        f.restrict(&d("PIN"));
        f.restrict(&d("k"));
        f.extend(Term::enc(n(&d("PIN")), n(&d("k"))));
        f.extend(n(&d("k")));
        let r = derive(&f, &n(&d("PIN")), 4).unwrap();
        assert_eq!(r.term(), &Term::dec(Term::Var(1), Term::Var(0)));
    }

    #[test]
    fn derive_diffie_hellman_key() {
        // The attacker chose Z1 = φ(x, 𝔤) and saw Z2 = φ(a·c, 𝔤).
        let mut f = Frame::new();
        f.restrict(&s("a"));
        f.restrict(&s("c"));
        let x = n(&s("x"));
        let z2 = Term::smult(Term::mult(n(&s("a")), n(&s("c"))), Term::gen());
        f.extend(z2.clone());
        let key = Term::hash(Term::smult(x.clone(), z2));
        let r = derive(&f, &key, 3).unwrap();
        assert_eq!(f.eval(&r), key);
        assert!(derive(&f, &Term::smult(n(&s("c")), Term::gen()), 8).is_none());
    }

    #[test]
    fn derive_respects_bound() {
        let mut f = Frame::new();
        f.extend(Term::gen());
        let t = Term::hash(Term::hash(Term::hash(Term::gen())));
        assert!(derive(&f, &t, 2).is_none());
        assert!(derive(&f, &t, 3).is_some());
    }

    #[test]
    fn frame_text_round_trip() {
        let mut f = Frame::new();
        f.restrict(&s("a"));
        f.restrict(&d("m"));
        f.extend(Term::smult(n(&s("a")), Term::gen()));
        f.extend(Term::hash(n(&d("m"))));
        let text = f.to_string();
        let g: Frame = text.parse().unwrap();
        assert_eq!(f, g);
    }
}
