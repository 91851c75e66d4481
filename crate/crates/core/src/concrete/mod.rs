//! Differential numeric backend.
//!
//! Terms are evaluated in the order-`q` subgroup of `Z_p^*` for a 63-bit
//! safe prime `p = 2q + 1`: scalar products are products mod `q`, `φ(s, P)`
//! is exponentiation, hashes are SHA-256, and encryption is a SHA-256
//! keystream with a MAC tag. The evaluator is used to cross-check that
//! terms equal modulo the equational theory evaluate to equal values.
//!
//! **This backend is insecure by design.** Verheul signatures are values
//! `M^χ` that carry their signing exponent so that verification can be
//! answered by a trusted oracle that knows every discrete logarithm, in
//! place of a bilinear pairing. The parameters are toy-sized. Nothing here
//! demonstrates security; it demonstrates functional flow and
//! differential agreement with the symbolic engine.

mod diff;

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::term::{free_names, Const, Name, Sort, Term};

pub use diff::{differential_test, random_raw_term, DiffReport, MAX_COLLISION_RATE};

/// Order of the subgroup: a 62-bit prime.
pub const Q: u64 = 4_611_686_018_427_385_619;
/// The safe prime `2Q + 1`.
pub const P: u64 = 2 * Q + 1;
/// A generator of the order-`Q` subgroup (a quadratic residue ≠ 1).
pub const G: u64 = 4;

/// A concrete value.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Value {
    /// Element of `Z_q`.
    Scalar(u64),
    /// Element of the order-`q` subgroup of `Z_p^*`.
    Point(u64),
    Bytes(Vec<u8>),
    Const(String),
    Tuple(Vec<Value>),
    /// Ordinary verification key `g^k`.
    Pk(u64),
    /// Ordinary signature: verification key, message, tag.
    Sig { vk: u64, msg: Box<Value>, tag: Vec<u8> },
    /// Verheul signature `S = M^χ`. The exponent `χ` and the (possibly
    /// blinded) message ride along as oracle annotations: verification
    /// compares `g^χ` with the key and returns the message.
    Vsig { s: u64, chi: u64, msg: Box<Value> },
    /// Authenticated ciphertext.
    Cipher { ct: Vec<u8>, tag: Vec<u8> },
    /// Result of a destructor that does not apply; the digest identifies
    /// the failed application.
    Stuck(Vec<u8>),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EvalError {
    #[error("name {0} has no value")]
    UnvaluedName(String),
    #[error("variable {0} cannot be evaluated")]
    Variable(u32),
}

/// Group parameters and a valuation of names.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroupEnv {
    pub p: u64,
    pub q: u64,
    pub g: u64,
    pub valuation: BTreeMap<Name, Value>,
}

impl Default for GroupEnv {
    fn default() -> Self {
        GroupEnv { p: P, q: Q, g: G, valuation: BTreeMap::new() }
    }
}

impl GroupEnv {
    /// Assigns a random value to every name of `terms` not yet valued:
    /// scalars in `[1, q)`, data names 16 random bytes.
    pub fn sample<'a>(&mut self, terms: impl IntoIterator<Item = &'a Term>, rng: &mut impl Rng) {
        for t in terms {
            for n in free_names(t) {
                if !self.valuation.contains_key(&n) {
                    let v = match n.sort {
                        Sort::Scalar => Value::Scalar(rng.gen_range(1..self.q)),
                        Sort::Data => Value::Bytes(rng.gen::<[u8; 16]>().to_vec()),
                    };
                    self.valuation.insert(n, v);
                }
            }
        }
    }

    pub fn set(&mut self, n: &Name, v: Value) {
        self.valuation.insert(n.clone(), v);
    }

    fn mul(&self, a: u64, b: u64) -> u64 {
        ((a as u128 * b as u128) % self.q as u128) as u64
    }

    /// `base^e mod p`.
    pub fn pow(&self, base: u64, e: u64) -> u64 {
        let (mut acc, mut b, mut e) = (1u128, base as u128 % self.p as u128, e);
        let p = self.p as u128;
        while e > 0 {
            if e & 1 == 1 {
                acc = acc * b % p;
            }
            b = b * b % p;
            e >>= 1;
        }
        acc as u64
    }

    /// Scalar view of a value: scalars as is, anything else hashed to `Z_q`.
    fn scalar(&self, v: &Value) -> u64 {
        match v {
            Value::Scalar(x) => *x,
            other => {
                let d = digest(b"scalar", &[other]);
                u64::from_be_bytes(d[..8].try_into().expect("8 bytes")) % self.q
            }
        }
    }

    /// Group view of a value: points as is, a Verheul signature as its
    /// group element, anything else hashed into the group.
    fn point(&self, v: &Value) -> u64 {
        match v {
            Value::Point(x) => *x,
            Value::Vsig { s, .. } => *s,
            other => self.pow(self.g, self.scalar(&Value::Tuple(vec![Value::Const("h2g".into()), other.clone()]))),
        }
    }

    fn smult(&self, s: &Value, v: &Value) -> Value {
        let e = self.scalar(s);
        match v {
            Value::Vsig { s: sig, chi, msg } => Value::Vsig {
                s: self.pow(*sig, e),
                chi: *chi,
                msg: Box::new(self.smult(s, msg)),
            },
            other => Value::Point(self.pow(self.point(other), e)),
        }
    }
}

fn encode(v: &Value) -> Vec<u8> {
    serde_json::to_vec(v).expect("values always serialize")
}

fn digest(domain: &[u8], parts: &[&Value]) -> Vec<u8> {
    let mut h = Sha256::new();
    h.update((domain.len() as u32).to_be_bytes());
    h.update(domain);
    for p in parts {
        let e = encode(p);
        h.update((e.len() as u64).to_be_bytes());
        h.update(e);
    }
    h.finalize().to_vec()
}

fn keystream(key: &[u8], len: usize) -> Vec<u8> {
    let mut out = Vec::with_capacity(len + 32);
    let mut i = 0u64;
    while out.len() < len {
        let mut h = Sha256::new();
        h.update(key);
        h.update(i.to_be_bytes());
        out.extend(h.finalize());
        i += 1;
    }
    out.truncate(len);
    out
}

fn stuck(op: &str, args: &[&Value]) -> Value {
    Value::Stuck(digest(op.as_bytes(), args))
}

fn encrypt(body: &Value, key: &Value) -> Value {
    let kb = digest(b"key", &[key]);
    let pt = encode(body);
    let ct = pt.iter().zip(keystream(&kb, pt.len())).map(|(a, b)| a ^ b).collect();
    let tag = digest(b"tag", &[&Value::Bytes(kb), body]);
    Value::Cipher { ct, tag }
}

fn decrypt(key: &Value, c: &Value) -> Value {
    if let Value::Cipher { ct, tag } = c {
        let kb = digest(b"key", &[key]);
        let pt: Vec<u8> = ct.iter().zip(keystream(&kb, ct.len())).map(|(a, b)| a ^ b).collect();
        if let Ok(body) = serde_json::from_slice::<Value>(&pt) {
            if digest(b"tag", &[&Value::Bytes(kb), &body]) == *tag {
                return body;
            }
        }
    }
    stuck("dec", &[key, c])
}

fn constant(c: &Const) -> Value {
    Value::Const(format!("{c:?}"))
}

/// Evaluates `t` under `env`. Destructors that do not apply yield
/// [`Value::Stuck`].
pub fn eval(t: &Term, env: &GroupEnv) -> Result<Value, EvalError> {
    let ev = |x: &Term| eval(x, env);
    Ok(match t {
        Term::Gen => Value::Point(env.g),
        Term::Const(c) => constant(c),
        Term::Name(n) => env
            .valuation
            .get(n)
            .cloned()
            .ok_or_else(|| EvalError::UnvaluedName(Term::Name(n.clone()).to_string()))?,
        Term::Var(v) => return Err(EvalError::Variable(*v)),
        Term::Mult(fs) => {
            let mut acc = 1u64;
            for f in fs {
                acc = env.mul(acc, env.scalar(&ev(f)?));
            }
            Value::Scalar(acc)
        }
        Term::SMult(s, p) => env.smult(&ev(s)?, &ev(p)?),
        Term::Hash(x) => Value::Bytes(digest(b"hash", &[&ev(x)?])),
        Term::Enc(m, k) => encrypt(&ev(m)?, &ev(k)?),
        Term::Tuple(xs) => Value::Tuple(xs.iter().map(ev).collect::<Result<_, _>>()?),
        Term::Pk(k) => Value::Pk(env.pow(env.g, env.scalar(&ev(k)?))),
        Term::Sig(k, m) => {
            let (k, m) = (ev(k)?, ev(m)?);
            Value::Sig {
                vk: env.pow(env.g, env.scalar(&k)),
                tag: digest(b"sig", &[&k, &m]),
                msg: Box::new(m),
            }
        }
        Term::Pkv(k) => Value::Point(env.pow(env.g, env.scalar(&ev(k)?))),
        Term::Sigv(k, m) => {
            let (chi, m) = (env.scalar(&ev(k)?), ev(m)?);
            Value::Vsig { s: env.pow(env.point(&m), chi), chi, msg: Box::new(m) }
        }
        Term::CheckSig(v, s) => {
            let (v, s) = (ev(v)?, ev(s)?);
            match (&v, &s) {
                (Value::Pk(pk), Value::Sig { vk, msg, .. }) if pk == vk => (**msg).clone(),
                _ => stuck("check", &[&v, &s]),
            }
        }
        Term::CheckSigv(v, s) => {
            let (v, s) = (ev(v)?, ev(s)?);
            match (&v, &s) {
                // Oracle: the pairing equation is replaced by comparing
                // `g^χ` with the key.
                (Value::Point(pk), Value::Vsig { chi, msg, .. }) if *pk == env.pow(env.g, *chi) => {
                    (**msg).clone()
                }
                _ => stuck("checkv", &[&v, &s]),
            }
        }
        Term::Proj(i, x) => {
            let x = ev(x)?;
            match &x {
                Value::Tuple(items) if (*i as usize) >= 1 && (*i as usize) <= items.len() => {
                    items[*i as usize - 1].clone()
                }
                _ => stuck(&format!("proj{i}"), &[&x]),
            }
        }
        Term::Dec(k, c) => decrypt(&ev(k)?, &ev(c)?),
    })
}

#[cfg(test)]
mod tests;
