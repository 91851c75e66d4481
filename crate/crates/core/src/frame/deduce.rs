//! Saturation and top-down recipe synthesis.

use std::collections::{BTreeSet, HashMap};

use crate::term::{Name, Term};

use super::{Frame, Recipe};

/// A piece of attacker knowledge: a recipe and the normal form it yields.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Block {
    pub recipe: Term,
    pub value: Term,
}

/// A saturated knowledge base: the frame's bindings plus everything the
/// attacker obtains from them by projection, decryption and signature
/// verification. The values are the *building blocks* from which recipes
/// are synthesized.
#[derive(Debug, Clone, Default)]
pub struct Knowledge {
    restricted: BTreeSet<Name>,
    blocks: Vec<Block>,
    by_value: HashMap<Term, usize>,
    by_point: HashMap<Term, Vec<usize>>,
    /// Product blocks indexed by each of their (distinct) factors.
    mults_by_factor: HashMap<Term, Vec<usize>>,
}

impl Knowledge {
    /// An unsaturated knowledge base over the given blocks. Blocks whose
    /// value is already present are ignored.
    pub fn from_blocks(
        restricted: &BTreeSet<Name>,
        blocks: impl IntoIterator<Item = (Term, Term)>,
    ) -> Knowledge {
        let mut kb = Knowledge {
            restricted: restricted.clone(),
            ..Knowledge::default()
        };
        for (r, v) in blocks {
            kb.add(r, v);
        }
        kb
    }

    /// Adds a block; returns false if its value was already known.
    pub fn add(&mut self, recipe: Term, value: Term) -> bool {
        if self.by_value.contains_key(&value) {
            return false;
        }
        let idx = self.blocks.len();
        match &value {
            Term::SMult(_, p) => self.by_point.entry((**p).clone()).or_default().push(idx),
            Term::Mult(fs) => {
                for (i, f) in fs.iter().enumerate() {
                    if i == 0 || fs[i - 1] != *f {
                        self.mults_by_factor.entry(f.clone()).or_default().push(idx);
                    }
                }
            }
            _ => {}
        }
        self.by_value.insert(value.clone(), idx);
        self.blocks.push(Block { recipe, value });
        true
    }

    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    /// Recipe of a known value.
    pub fn lookup(&self, value: &Term) -> Option<&Term> {
        self.by_value.get(value).map(|&i| &self.blocks[i].recipe)
    }

    /// True if the attacker may use `n` directly in recipes.
    pub fn is_public(&self, n: &Name) -> bool {
        !self.restricted.contains(n)
    }

    /// Saturates `frame`, using `bound` constructor applications when
    /// deriving keys:
    ///
    /// 1. bindings enter as blocks (they are already in normal form);
    /// 2. derivable factors of products are added;
    /// 3. tuples are split into their projections;
    /// 4. encryptions whose key is derivable are opened;
    /// 5. signatures whose verification key `pk(K)` is derivable are
    ///    stripped to their message;
    /// 6. Verheul signatures, blinded or not, whose key `pkv(K)` is
    ///    derivable are verified, exposing the (blinded) message.
    ///
    /// The procedure repeats until no new value appears.
    pub fn saturate(frame: &Frame, bound: usize) -> Knowledge {
        let mut kb = Knowledge::from_blocks(
            frame.restricted(),
            frame.bindings().map(|(a, t)| (Term::Var(a), t.clone())),
        );
        let mut split = 0usize;
        let mut settled: Vec<bool> = Vec::new();
        loop {
            // Tuples: purely structural, done once per block.
            while split < kb.len() {
                if let Term::Tuple(items) = &kb.blocks[split].value {
                    let r = kb.blocks[split].recipe.clone();
                    let items = items.clone();
                    for (i, item) in items.into_iter().enumerate() {
                        kb.add(Term::proj(i as u32 + 1, r.clone()), item);
                    }
                }
                split += 1;
            }
            settled.resize(kb.len(), false);
            let mut additions = Vec::new();
            {
                let mut ded = Deducer::new(&kb);
                for (idx, blk) in kb.blocks.iter().enumerate() {
                    if settled[idx] {
                        continue;
                    }
                    let r = &blk.recipe;
                    match &blk.value {
                        Term::Enc(m, k) => {
                            if let Some((rk, _)) = ded.best(k, bound) {
                                additions.push((Term::dec(rk, r.clone()), (**m).clone()));
                                settled[idx] = true;
                            }
                        }
                        Term::Sig(k, m) => {
                            if let Some((rk, _)) = ded.best(&Term::pk((**k).clone()), bound) {
                                additions.push((Term::check(rk, r.clone()), (**m).clone()));
                                settled[idx] = true;
                            }
                        }
                        Term::Sigv(k, m) => {
                            if let Some((rk, _)) = ded.best(&Term::pkv((**k).clone()), bound) {
                                additions.push((Term::checkv(rk, r.clone()), (**m).clone()));
                                settled[idx] = true;
                            }
                        }
                        Term::SMult(s, p) => match &**p {
                            Term::Sigv(k, m) => {
                                if let Some((rk, _)) = ded.best(&Term::pkv((**k).clone()), bound) {
                                    let v = Term::smult((**s).clone(), (**m).clone());
                                    additions.push((Term::checkv(rk, r.clone()), v));
                                    settled[idx] = true;
                                }
                            }
                            _ => settled[idx] = true,
                        },
                        Term::Mult(fs) => {
                            let mut all = true;
                            for f in fs {
                                match ded.best(f, bound) {
                                    Some((rf, _)) => additions.push((rf, f.clone())),
                                    None => all = false,
                                }
                            }
                            settled[idx] = all;
                        }
                        _ => settled[idx] = true,
                    }
                }
            }
            let mut changed = false;
            for (r, v) in additions {
                changed |= kb.add(r, v);
            }
            if !changed && split == kb.len() {
                return kb;
            }
        }
    }

    /// Synthesizes a recipe for `target` with at most `bound` constructor
    /// applications over the blocks, and verifies it against `frame`.
    pub fn derive(&self, frame: &Frame, target: &Term, bound: usize) -> Option<Recipe> {
        let (r, _) = Deducer::new(self).best(target, bound)?;
        if frame.eval_term(&r) != *target {
            debug_assert!(false, "synthesized recipe {r} does not evaluate to {target}");
            return None;
        }
        Some(Recipe(r))
    }
}

#[derive(Clone)]
enum Memo {
    Found(Term, usize),
    /// No recipe of cost at most the stored cap.
    Absent(usize),
}

/// Cost-minimal top-down recipe synthesis over a knowledge base. The cost
/// of a recipe is the number of constructor applications placed on top of
/// blocks, public names, constants and the generator.
pub(crate) struct Deducer<'a> {
    kb: &'a Knowledge,
    memo: HashMap<Term, Memo>,
}

impl<'a> Deducer<'a> {
    pub(crate) fn new(kb: &'a Knowledge) -> Self {
        Deducer {
            kb,
            memo: HashMap::new(),
        }
    }

    /// Cheapest recipe for `t` with cost at most `cap`.
    pub(crate) fn best(&mut self, t: &Term, cap: usize) -> Option<(Term, usize)> {
        if let Some(r) = self.kb.lookup(t) {
            return Some((r.clone(), 0));
        }
        match t {
            Term::Gen | Term::Const(_) => return Some((t.clone(), 0)),
            Term::Name(n) => {
                return self.kb.is_public(n).then(|| (t.clone(), 0));
            }
            Term::Var(_) => return None,
            _ => {}
        }
        match self.memo.get(t) {
            Some(Memo::Found(r, c)) => return (*c <= cap).then(|| (r.clone(), *c)),
            Some(Memo::Absent(c)) if *c >= cap => return None,
            _ => {}
        }
        let res = if cap == 0 { None } else { self.compose(t, cap) };
        let memo = match &res {
            Some((r, c)) => Memo::Found(r.clone(), *c),
            None => Memo::Absent(cap),
        };
        self.memo.insert(t.clone(), memo);
        res
    }

    fn unary(&mut self, x: &Term, cap: usize, f: impl Fn(Term) -> Term) -> Option<(Term, usize)> {
        let (r, c) = self.best(x, cap - 1)?;
        Some((f(r), c + 1))
    }

    fn binary(
        &mut self,
        x: &Term,
        y: &Term,
        cap: usize,
        f: impl Fn(Term, Term) -> Term,
    ) -> Option<(Term, usize)> {
        let (rx, cx) = self.best(x, cap - 1)?;
        let (ry, cy) = self.best(y, cap - 1 - cx)?;
        Some((f(rx, ry), 1 + cx + cy))
    }

    fn compose(&mut self, t: &Term, cap: usize) -> Option<(Term, usize)> {
        self.alternatives(t, cap).into_iter().min_by_key(|a| a.1)
    }

    /// Every way of building `t` with a constructor (or an algebraic
    /// decomposition) at the root, each with its cheapest sub-recipes.
    /// Known blocks equal to `t` itself are not used at the root.
    pub(crate) fn alternatives(&mut self, t: &Term, cap: usize) -> Vec<(Term, usize)> {
        if cap == 0 {
            return Vec::new();
        }
        let single = |x: Option<(Term, usize)>| x.into_iter().collect::<Vec<_>>();
        match t {
            Term::Hash(x) => single(self.unary(x, cap, Term::hash)),
            Term::Pk(x) => single(self.unary(x, cap, Term::pk)),
            Term::Pkv(x) => single(self.unary(x, cap, Term::pkv)),
            Term::Proj(i, x) => {
                let i = *i;
                single(self.unary(x, cap, move |r| Term::proj(i, r)))
            }
            Term::Enc(m, k) => single(self.binary(m, k, cap, Term::enc)),
            Term::Sig(k, m) => single(self.binary(k, m, cap, Term::sig)),
            Term::Sigv(k, m) => single(self.binary(k, m, cap, Term::sigv)),
            Term::CheckSig(v, s) => single(self.binary(v, s, cap, Term::check)),
            Term::CheckSigv(v, s) => single(self.binary(v, s, cap, Term::checkv)),
            Term::Dec(k, c) => single(self.binary(k, c, cap, Term::dec)),
            Term::Tuple(xs) => {
                let mut used = 1;
                let mut rs = Vec::with_capacity(xs.len());
                for x in xs {
                    let Some((r, c)) = self.best(x, cap - used) else {
                        return Vec::new();
                    };
                    used += c;
                    rs.push(r);
                }
                vec![(Term::Tuple(rs), used)]
            }
            Term::Mult(fs) => self.product(fs, cap),
            Term::SMult(s, p) => self.scalar_mult(s, p, cap),
            Term::Gen | Term::Const(_) | Term::Name(_) | Term::Var(_) => Vec::new(),
        }
    }

    /// A product of at least two factors, split into derivable parts.
    /// Every partition has a part containing the first factor; that part is
    /// either the factor alone or a known product.
    fn product(&mut self, fs: &[Term], cap: usize) -> Vec<(Term, usize)> {
        let mut out = Vec::new();
        let f0 = &fs[0];
        if let Some((r0, c0)) = self.best(f0, cap - 1) {
            let rest = Term::mult_all(fs[1..].to_vec());
            if let Some((rr, cr)) = self.best(&rest, cap - 1 - c0) {
                out.push((Term::mult(r0, rr), 1 + c0 + cr));
            }
        }
        let kb = self.kb;
        for &idx in kb.mults_by_factor.get(f0).map(Vec::as_slice).unwrap_or(&[]) {
            let blk = &kb.blocks[idx];
            let Term::Mult(mf) = &blk.value else { continue };
            if mf.len() >= fs.len() {
                continue;
            }
            let Some(rem) = multiset_minus(fs, mf) else { continue };
            if let Some((rr, cr)) = self.best(&Term::mult_all(rem), cap - 1) {
                out.push((Term::mult(blk.recipe.clone(), rr), 1 + cr));
            }
        }
        out
    }

    fn scalar_mult(&mut self, s: &Term, p: &Term, cap: usize) -> Vec<(Term, usize)> {
        let mut out = Vec::new();
        // Scalar applied to a derivable point.
        if let Some((rp, cp)) = self.best(p, cap - 1) {
            if let Some((rs, cs)) = self.best(s, cap - 1 - cp) {
                out.push((Term::smult(rs, rp), 1 + cp + cs));
            }
        }
        // Extra scalars applied to a known multiple of the same point.
        let fs = s.factors();
        let kb = self.kb;
        for &idx in kb.by_point.get(p).map(Vec::as_slice).unwrap_or(&[]) {
            let blk = &kb.blocks[idx];
            let Term::SMult(s2, _) = &blk.value else { continue };
            let f2 = s2.factors();
            if f2.len() >= fs.len() {
                continue;
            }
            let Some(rem) = multiset_minus(&fs, &f2) else { continue };
            if let Some((rr, cr)) = self.best(&Term::mult_all(rem), cap - 1) {
                out.push((Term::smult(rr, blk.recipe.clone()), 1 + cr));
            }
        }
        // A blinded Verheul signature built by signing the blinded message.
        if let Term::Sigv(k, q) = p {
            if let Some((rk, ck)) = self.best(k, cap - 1) {
                let inner = Term::smult(s.clone(), (**q).clone());
                if let Some((rq, cq)) = self.best(&inner, cap - 1 - ck) {
                    out.push((Term::sigv(rk, rq), 1 + ck + cq));
                }
            }
        }
        out
    }
}

/// `a ∖ b` for sorted multisets, or `None` if `b ⊄ a`.
pub(crate) fn multiset_minus(a: &[Term], b: &[Term]) -> Option<Vec<Term>> {
    let mut rem = a.to_vec();
    for x in b {
        let pos = rem.iter().position(|y| y == x)?;
        rem.remove(pos);
    }
    Some(rem)
}
