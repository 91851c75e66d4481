//! Symbolic message algebra and its normal forms.
//!
//! Terms are built from the generator `𝔤`, public constants, names, an
//! associative-commutative scalar product `·` (`Mult`), scalar
//! multiplication `φ` (`SMult`), hashing, authenticated symmetric
//! encryption, tuples, ordinary signatures and Verheul signatures, together
//! with the destructors `check`, `checkV`, `πi` and `dec`.
//!
//! Every constructor in this module returns a term in *weak normal form*:
//!
//! * products are flattened and their factors sorted;
//! * nested scalar multiplications are merged into a single `SMult` whose
//!   scalar is a product, so the point of an `SMult` is never an `SMult`;
//! * a scalar applied to a Verheul signature is always hoisted outside it,
//!   i.e. `sigv(K, φ(s, P))` is stored as `φ(s, sigv(K, P))`;
//! * destructors only survive when they are stuck.
//!
//! Equality modulo the equational theory is therefore syntactic equality of
//! normal forms.

mod sexpr;

pub use sexpr::{parse, ParseError};

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use thiserror::Error;

/// Sort annotation carried by a name. The algebra itself is unsorted; the
/// sort is a lint used by role logic and by the pretty printer.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Sort {
    Scalar,
    Data,
}

/// A name: a fresh secret, a public attacker-chosen value or a channel.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Name {
    pub id: String,
    pub sort: Sort,
}

impl Name {
    pub fn new(id: impl Into<String>, sort: Sort) -> Self {
        Name { id: id.into(), sort }
    }
    pub fn scalar(id: impl Into<String>) -> Self {
        Name::new(id, Sort::Scalar)
    }
    pub fn data(id: impl Into<String>) -> Self {
        Name::new(id, Sort::Data)
    }
}

/// Public constants of the protocol.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Const {
    Ok,
    Bot,
    /// Cryptogram flag for a PIN that was entered but did not match.
    No,
    Accept,
    /// Bank verdict for a declined high-value transaction.
    Reject,
    Auth,
    Lo,
    Hi,
    /// Month constant `mm(k)`.
    Month(u32),
    Unlinkable,
    Select,
}

impl Const {
    /// Every constant except months, in a fixed order.
    pub const FIXED: [Const; 10] = [
        Const::Ok,
        Const::Bot,
        Const::No,
        Const::Accept,
        Const::Reject,
        Const::Auth,
        Const::Lo,
        Const::Hi,
        Const::Unlinkable,
        Const::Select,
    ];
}

/// A symbolic term.
///
/// The derived ordering is the canonical total order used to sort the
/// factors of a product.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Term {
    Gen,
    Const(Const),
    Name(Name),
    Var(u32),
    Mult(Vec<Term>),
    SMult(Box<Term>, Box<Term>),
    Hash(Box<Term>),
    /// `Enc(body, key)`.
    Enc(Box<Term>, Box<Term>),
    Tuple(Vec<Term>),
    Pk(Box<Term>),
    /// `Sig(key, msg)`.
    Sig(Box<Term>, Box<Term>),
    Pkv(Box<Term>),
    /// `Sigv(key, msg)`.
    Sigv(Box<Term>, Box<Term>),
    /// `CheckSig(vkey, sig)`.
    CheckSig(Box<Term>, Box<Term>),
    /// `CheckSigv(vkey, sig)`.
    CheckSigv(Box<Term>, Box<Term>),
    /// `Proj(i, body)`, 1-based.
    Proj(u32, Box<Term>),
    /// `Dec(key, body)`.
    Dec(Box<Term>, Box<Term>),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TermError {
    #[error("malformed term: {0}")]
    MalformedTerm(String),
}

/// Variable bindings; applying a substitution replaces every bound `Var`.
pub type Substitution = BTreeMap<u32, Term>;

fn b(t: Term) -> Box<Term> {
    Box::new(t)
}

impl Term {
    // ----- leaves -------------------------------------------------------

    pub fn gen() -> Term {
        Term::Gen
    }
    pub fn constant(c: Const) -> Term {
        Term::Const(c)
    }
    pub fn month(k: u32) -> Term {
        Term::Const(Const::Month(k))
    }
    pub fn name(n: &Name) -> Term {
        Term::Name(n.clone())
    }
    pub fn var(id: u32) -> Term {
        Term::Var(id)
    }
    pub fn ok() -> Term {
        Term::Const(Const::Ok)
    }
    pub fn bot() -> Term {
        Term::Const(Const::Bot)
    }

    // ----- free constructors -------------------------------------------

    pub fn hash(body: Term) -> Term {
        Term::Hash(b(body))
    }
    pub fn enc(body: Term, key: Term) -> Term {
        Term::Enc(b(body), b(key))
    }
    /// Builds a tuple. Panics if fewer than two items are given; parsed or
    /// externally supplied terms go through [`normalize`] instead, which
    /// reports the problem as an error.
    pub fn tuple(items: Vec<Term>) -> Term {
        assert!(items.len() >= 2, "tuples have at least two components");
        Term::Tuple(items)
    }
    pub fn pair(a: Term, b: Term) -> Term {
        Term::Tuple(vec![a, b])
    }
    pub fn pk(key: Term) -> Term {
        Term::Pk(b(key))
    }
    pub fn sig(key: Term, msg: Term) -> Term {
        Term::Sig(b(key), b(msg))
    }
    pub fn pkv(key: Term) -> Term {
        Term::Pkv(b(key))
    }

    // ----- algebraic constructors --------------------------------------

    /// `M · N`, flattened and sorted.
    pub fn mult(a: Term, c: Term) -> Term {
        let mut factors = Vec::new();
        push_factors(&mut factors, a);
        push_factors(&mut factors, c);
        factors.sort();
        Term::Mult(factors)
    }

    /// Product of one or more scalars; a single scalar is returned as is.
    pub fn mult_all(mut scalars: Vec<Term>) -> Term {
        assert!(!scalars.is_empty(), "empty product");
        if scalars.len() == 1 {
            return scalars.pop().unwrap();
        }
        let mut factors = Vec::new();
        for s in scalars {
            push_factors(&mut factors, s);
        }
        factors.sort();
        Term::Mult(factors)
    }

    /// `φ(s, P)`: nested scalar multiplications merge into one product.
    pub fn smult(s: Term, p: Term) -> Term {
        match p {
            Term::SMult(inner, point) => Term::SMult(b(Term::mult(s, *inner)), point),
            p => Term::SMult(b(s), b(p)),
        }
    }

    /// `sigv(K, M)`: a scalar on the message is hoisted outside the
    /// signature.
    pub fn sigv(key: Term, msg: Term) -> Term {
        match msg {
            Term::SMult(s, point) => Term::SMult(s, b(Term::Sigv(b(key), point))),
            m => Term::Sigv(b(key), b(m)),
        }
    }

    // ----- destructors --------------------------------------------------

    /// `check(V, S)`: reduces when `V = pk(K)` and `S = sig(K, M)`.
    pub fn check(vkey: Term, sig: Term) -> Term {
        if let (Term::Pk(k1), Term::Sig(k2, _)) = (&vkey, &sig) {
            if k1 == k2 {
                if let Term::Sig(_, m) = sig {
                    return *m;
                }
            }
        }
        Term::CheckSig(b(vkey), b(sig))
    }

    /// `checkV(V, S)`: reduces when `V = pkv(K)` and `S` is a (possibly
    /// blinded) Verheul signature under `K`.
    pub fn checkv(vkey: Term, sig: Term) -> Term {
        if let Term::Pkv(k) = &vkey {
            match &sig {
                Term::Sigv(k2, m) if k2 == k => return (**m).clone(),
                Term::SMult(s, inner) => {
                    if let Term::Sigv(k2, m) = &**inner {
                        if k2 == k {
                            return Term::smult((**s).clone(), (**m).clone());
                        }
                    }
                }
                _ => {}
            }
        }
        Term::CheckSigv(b(vkey), b(sig))
    }

    /// `πi(M)`, 1-based. Out-of-range projections are stuck.
    pub fn proj(i: u32, body: Term) -> Term {
        assert!(i >= 1, "projections are 1-based");
        if let Term::Tuple(items) = &body {
            if (i as usize) <= items.len() {
                if let Term::Tuple(mut items) = body {
                    return items.swap_remove(i as usize - 1);
                }
            }
        }
        Term::Proj(i, b(body))
    }

    /// `dec(K, C)`: reduces only when `C = enc(M, K)` for the same key.
    pub fn dec(key: Term, body: Term) -> Term {
        if let Term::Enc(_, k2) = &body {
            if **k2 == key {
                if let Term::Enc(m, _) = body {
                    return *m;
                }
            }
        }
        Term::Dec(b(key), b(body))
    }

    // ----- inspection ---------------------------------------------------

    /// Factors of a product, or the term itself.
    pub fn factors(&self) -> Vec<Term> {
        match self {
            Term::Mult(fs) => fs.clone(),
            t => vec![t.clone()],
        }
    }

    /// True for the destructor heads.
    pub fn is_destructor(&self) -> bool {
        matches!(
            self,
            Term::CheckSig(..) | Term::CheckSigv(..) | Term::Proj(..) | Term::Dec(..)
        )
    }

    /// Immediate subterms, in order.
    pub fn children(&self) -> Vec<&Term> {
        match self {
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

    /// Number of function-symbol applications; a product of `k` factors
    /// counts as `k − 1` binary multiplications.
    pub fn size(&self) -> usize {
        let own = match self {
            Term::Gen | Term::Const(_) | Term::Name(_) | Term::Var(_) => 0,
            Term::Mult(xs) => xs.len() - 1,
            _ => 1,
        };
        own + self.children().iter().map(|c| c.size()).sum::<usize>()
    }

    /// Depth of the term tree (leaves have depth 0).
    pub fn depth(&self) -> usize {
        self.children()
            .iter()
            .map(|c| 1 + c.depth())
            .max()
            .unwrap_or(0)
    }

    /// Visits every subterm (including the term itself) in pre-order.
    pub fn visit<'a>(&'a self, f: &mut impl FnMut(&'a Term)) {
        f(self);
        for c in self.children() {
            c.visit(f);
        }
    }

    /// Variables occurring in the term.
    pub fn vars(&self) -> BTreeSet<u32> {
        let mut out = BTreeSet::new();
        self.visit(&mut |t| {
            if let Term::Var(v) = t {
                out.insert(*v);
            }
        });
        out
    }
}

fn push_factors(out: &mut Vec<Term>, t: Term) {
    match t {
        Term::Mult(fs) => out.extend(fs),
        t => out.push(t),
    }
}

/// Returns the weak normal form of `t`.
pub fn normalize(t: &Term) -> Result<Term, TermError> {
    Ok(match t {
        Term::Gen | Term::Const(_) | Term::Name(_) | Term::Var(_) => t.clone(),
        Term::Mult(fs) => {
            if fs.len() < 2 {
                return Err(TermError::MalformedTerm(format!(
                    "product with {} factor(s)",
                    fs.len()
                )));
            }
            let fs = fs.iter().map(normalize).collect::<Result<Vec<_>, _>>()?;
            Term::mult_all(fs)
        }
        Term::SMult(s, p) => Term::smult(normalize(s)?, normalize(p)?),
        Term::Hash(x) => Term::hash(normalize(x)?),
        Term::Enc(m, k) => Term::enc(normalize(m)?, normalize(k)?),
        Term::Tuple(xs) => {
            if xs.len() < 2 {
                return Err(TermError::MalformedTerm(format!(
                    "tuple with {} item(s)",
                    xs.len()
                )));
            }
            Term::Tuple(xs.iter().map(normalize).collect::<Result<Vec<_>, _>>()?)
        }
        Term::Pk(k) => Term::pk(normalize(k)?),
        Term::Sig(k, m) => Term::sig(normalize(k)?, normalize(m)?),
        Term::Pkv(k) => Term::pkv(normalize(k)?),
        Term::Sigv(k, m) => Term::sigv(normalize(k)?, normalize(m)?),
        Term::CheckSig(v, s) => Term::check(normalize(v)?, normalize(s)?),
        Term::CheckSigv(v, s) => Term::checkv(normalize(v)?, normalize(s)?),
        Term::Proj(i, x) => {
            if *i == 0 {
                return Err(TermError::MalformedTerm("projection index 0".into()));
            }
            Term::proj(*i, normalize(x)?)
        }
        Term::Dec(k, c) => Term::dec(normalize(k)?, normalize(c)?),
    })
}

/// True iff `a` and `b` are equal modulo the equational theory.
///
/// Malformed terms are only equal to structurally identical terms.
pub fn equal_mod_e(a: &Term, b: &Term) -> bool {
    match (normalize(a), normalize(b)) {
        (Ok(x), Ok(y)) => x == y,
        _ => a == b,
    }
}

/// Replaces every variable bound in `s`, then normalizes.
pub fn apply(s: &Substitution, t: &Term) -> Result<Term, TermError> {
    normalize(&substitute(s, t))
}

/// Replaces bound variables without normalizing.
pub fn substitute(s: &Substitution, t: &Term) -> Term {
    match t {
        Term::Var(v) => s.get(v).cloned().unwrap_or_else(|| t.clone()),
        Term::Gen | Term::Const(_) | Term::Name(_) => t.clone(),
        Term::Mult(fs) => Term::Mult(fs.iter().map(|f| substitute(s, f)).collect()),
        Term::Tuple(xs) => Term::Tuple(xs.iter().map(|x| substitute(s, x)).collect()),
        Term::SMult(x, y) => Term::SMult(b(substitute(s, x)), b(substitute(s, y))),
        Term::Hash(x) => Term::Hash(b(substitute(s, x))),
        Term::Enc(x, y) => Term::Enc(b(substitute(s, x)), b(substitute(s, y))),
        Term::Pk(x) => Term::Pk(b(substitute(s, x))),
        Term::Sig(x, y) => Term::Sig(b(substitute(s, x)), b(substitute(s, y))),
        Term::Pkv(x) => Term::Pkv(b(substitute(s, x))),
        Term::Sigv(x, y) => Term::Sigv(b(substitute(s, x)), b(substitute(s, y))),
        Term::CheckSig(x, y) => Term::CheckSig(b(substitute(s, x)), b(substitute(s, y))),
        Term::CheckSigv(x, y) => Term::CheckSigv(b(substitute(s, x)), b(substitute(s, y))),
        Term::Proj(i, x) => Term::Proj(*i, b(substitute(s, x))),
        Term::Dec(x, y) => Term::Dec(b(substitute(s, x)), b(substitute(s, y))),
    }
}

/// All names occurring in `t`.
pub fn free_names(t: &Term) -> BTreeSet<Name> {
    let mut out = BTreeSet::new();
    t.visit(&mut |s| {
        if let Term::Name(n) = s {
            out.insert(n.clone());
        }
    });
    out
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        sexpr::write_term(f, self)
    }
}

impl fmt::Display for Const {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        sexpr::write_term(f, &Term::Const(*self))
    }
}

impl fmt::Display for Name {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.id)
    }
}
