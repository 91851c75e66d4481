//! Differential test of the symbolic engine against the numeric backend.

use std::fmt;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::{eval, GroupEnv};
use crate::term::{equal_mod_e, normalize, Const, Name, Term};

/// Outcome of [`differential_test`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DiffReport {
    pub samples: usize,
    /// Pairs equal modulo the theory.
    pub symbolic_equal: usize,
    /// Symbolically equal pairs whose values differ. Must be zero.
    pub soundness_violations: usize,
    /// Symbolically different pairs whose values coincide.
    pub collisions: usize,
    /// First soundness violation, if any.
    pub first_violation: Option<(Term, Term)>,
}

impl DiffReport {
    pub fn collision_rate(&self) -> f64 {
        let unequal = self.samples - self.symbolic_equal;
        if unequal == 0 {
            0.0
        } else {
            self.collisions as f64 / unequal as f64
        }
    }
}

impl fmt::Display for DiffReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "CHECK difftest.soundness {} samples={} symbolic_equal={} violations={}\nCHECK difftest.collisions {} collisions={} rate={:.4}",
            if self.soundness_violations == 0 { "holds" } else { "violated" },
            self.samples,
            self.symbolic_equal,
            self.soundness_violations,
            if self.collision_rate() <= MAX_COLLISION_RATE { "holds" } else { "violated" },
            self.collisions,
            self.collision_rate(),
        )
    }
}

/// Tolerated share of symbolically different pairs that evaluate equal.
pub const MAX_COLLISION_RATE: f64 = 0.01;

fn bx(t: Term) -> Box<Term> {
    Box::new(t)
}

fn scalar_leaf(rng: &mut ChaCha8Rng) -> Term {
    Term::Name(Name::scalar(format!("x{}", rng.gen_range(0..5))))
}

fn scalar(rng: &mut ChaCha8Rng, depth: usize) -> Term {
    if depth <= 1 || rng.gen_bool(0.6) {
        scalar_leaf(rng)
    } else {
        Term::Mult((0..rng.gen_range(2..=3)).map(|_| scalar(rng, depth - 1)).collect())
    }
}

fn leaf(rng: &mut ChaCha8Rng) -> Term {
    match rng.gen_range(0..6) {
        0 => Term::Gen,
        1 => Term::Const(*[Const::Ok, Const::Bot, Const::Hi, Const::Month(1)].choose(rng).expect("nonempty")),
        2 | 3 => scalar_leaf(rng),
        _ => Term::Name(Name::data(format!("d{}", rng.gen_range(0..5)))),
    }
}

/// A raw (not normalized) term of depth at most `depth`, biased towards
/// redexes of every rewrite rule.
pub fn random_raw_term(rng: &mut ChaCha8Rng, depth: usize) -> Term {
    if depth <= 1 {
        return leaf(rng);
    }
    let d = depth - 1;
    let t = |rng: &mut ChaCha8Rng| random_raw_term(rng, d);
    match rng.gen_range(0..21) {
        0 => leaf(rng),
        1 => Term::Hash(bx(t(rng))),
        2 => Term::Enc(bx(t(rng)), bx(t(rng))),
        3 => Term::Tuple((0..rng.gen_range(2..=3)).map(|_| t(rng)).collect()),
        4 => Term::Pk(bx(t(rng))),
        5 => Term::Sig(bx(t(rng)), bx(t(rng))),
        6 => Term::Pkv(bx(t(rng))),
        7 => Term::Sigv(bx(scalar(rng, 2)), bx(t(rng))),
        8 | 9 => Term::SMult(bx(scalar(rng, d)), bx(t(rng))),
        10 => Term::Proj(rng.gen_range(1..=3), bx(t(rng))),
        11 => Term::Dec(bx(t(rng)), bx(t(rng))),
        12 => Term::CheckSigv(bx(t(rng)), bx(t(rng))),
        13 | 14 => {
            let k = random_raw_term(rng, d.min(3));
            let k2 = if rng.gen_bool(0.8) { k.clone() } else { t(rng) };
            Term::Dec(bx(k), bx(Term::Enc(bx(t(rng)), bx(k2))))
        }
        15 => Term::Proj(rng.gen_range(1..=3), bx(Term::Tuple((0..rng.gen_range(2..=3)).map(|_| t(rng)).collect()))),
        16 => {
            let k = scalar(rng, 2);
            Term::CheckSig(bx(Term::Pk(bx(k.clone()))), bx(Term::Sig(bx(k), bx(t(rng)))))
        }
        17 | 18 => {
            let k = scalar(rng, 2);
            let s = Term::Sigv(bx(k.clone()), bx(t(rng)));
            let s = if rng.gen_bool(0.6) { Term::SMult(bx(scalar(rng, 3)), bx(s)) } else { s };
            let k2 = if rng.gen_bool(0.85) { k } else { scalar(rng, 2) };
            Term::CheckSigv(bx(Term::Pkv(bx(k2))), bx(s))
        }
        19 => {
            let inner = Term::SMult(bx(scalar(rng, 2)), bx(t(rng)));
            Term::SMult(bx(scalar(rng, 2)), bx(inner))
        }
        _ => Term::Sigv(bx(scalar(rng, 2)), bx(Term::SMult(bx(scalar(rng, 2)), bx(t(rng))))),
    }
}

/// Rebuilds `t` bottom-up, reassociating products and pushing scalars
/// through Verheul signatures, without normalizing.
fn reshape(t: &Term, rng: &mut ChaCha8Rng) -> Term {
    let r = |x: &Term, rng: &mut ChaCha8Rng| bx(reshape(x, rng));
    match t {
        Term::Mult(fs) if fs.len() >= 2 => {
            let mut fs = fs.clone();
            fs.shuffle(rng);
            if fs.len() >= 3 {
                let rest = fs.split_off(1);
                Term::Mult(vec![fs.pop().expect("one"), Term::Mult(rest)])
            } else {
                Term::Mult(fs)
            }
        }
        Term::SMult(s, p) => match &**p {
            Term::Sigv(k, m) if rng.gen_bool(0.5) => Term::Sigv(k.clone(), bx(Term::SMult(s.clone(), m.clone()))),
            _ => Term::SMult(r(s, rng), r(p, rng)),
        },
        Term::Hash(x) => Term::Hash(r(x, rng)),
        Term::Enc(m, k) => Term::Enc(r(m, rng), r(k, rng)),
        Term::Tuple(xs) => Term::Tuple(xs.iter().map(|x| reshape(x, rng)).collect()),
        Term::Pk(k) => Term::Pk(r(k, rng)),
        Term::Sig(k, m) => Term::Sig(r(k, rng), r(m, rng)),
        Term::Pkv(k) => Term::Pkv(r(k, rng)),
        Term::Sigv(k, m) => Term::Sigv(r(k, rng), r(m, rng)),
        Term::CheckSig(v, s) => Term::CheckSig(r(v, rng), r(s, rng)),
        Term::CheckSigv(v, s) => Term::CheckSigv(r(v, rng), r(s, rng)),
        Term::Proj(i, x) => Term::Proj(*i, r(x, rng)),
        Term::Dec(k, c) => Term::Dec(r(k, rng), r(c, rng)),
        other => other.clone(),
    }
}

/// Evaluates random term pairs under fresh random valuations and checks
/// that equality modulo the theory implies equality of values.
///
/// Each sample draws a raw term `a` and a partner that is, with equal
/// probability, its normal form, a reshaped copy, or an independent term.
pub fn differential_test(samples: usize, depth: usize, seed: u64) -> DiffReport {
    let results: Vec<(bool, bool, Term, Term)> = (0..samples)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (i as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15));
            let a = random_raw_term(&mut rng, depth);
            let b = match rng.gen_range(0..3) {
                0 => normalize(&a).unwrap_or_else(|_| a.clone()),
                1 => reshape(&a, &mut rng),
                _ => random_raw_term(&mut rng, depth),
            };
            let mut env = GroupEnv::default();
            env.sample([&a, &b], &mut rng);
            let sym = equal_mod_e(&a, &b);
            let conc = eval(&a, &env).expect("all names valued") == eval(&b, &env).expect("all names valued");
            (sym, conc, a, b)
        })
        .collect();
    let mut report = DiffReport {
        samples,
        symbolic_equal: 0,
        soundness_violations: 0,
        collisions: 0,
        first_violation: None,
    };
    for (sym, conc, a, b) in results {
        match (sym, conc) {
            (true, true) => report.symbolic_equal += 1,
            (true, false) => {
                report.symbolic_equal += 1;
                report.soundness_violations += 1;
                report.first_violation.get_or_insert((a, b));
            }
            (false, true) => report.collisions += 1,
            (false, false) => {}
        }
    }
    report
}
