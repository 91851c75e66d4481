//! Attacker strategies as world-agnostic scripts.
//!
//! A script is a list of [`Action`]s over *slots*: every `Start*` action
//! binds a fresh slot to a new session, and later actions refer to the
//! outputs of earlier slots. Slot 0 is the public bulletin. Injected
//! messages are templates whose `Var(slot << 8 | index)` leaves stand for
//! observed outputs; at run time they are resolved to frame aliases and
//! validated as recipes. Actions that refer to an output which does not
//! exist (because a session aborted) are skipped, identically in every
//! world, so a script depends only on what the attacker observes.

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::scenario::{Protocol, Scenario};
use super::HarnessError;
use crate::roles::Mode;
use crate::term::{parse, Const, Name, Term};

/// Index of a session within a script; 0 is the bulletin.
pub type Slot = usize;

/// The bulletin slot.
pub const BULLETIN: Slot = 0;

/// Which output of a slot an action refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutSel {
    Nth(usize),
    /// The most recent output at the time the action runs.
    Last,
}

/// One attacker decision.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Action {
    StartCard { card: usize, slot: Slot },
    StartTerminal { terminal: usize, slot: Slot },
    /// A bank session answering requests under `terminal`'s key.
    StartBank { terminal: usize, slot: Slot },
    /// Delivers an observed output unchanged.
    Forward { to: Slot, from: Slot, out: OutSel },
    /// Delivers an attacker-built message.
    Inject { to: Slot, template: Term },
    /// The cardholder types a PIN into a terminal.
    Pin { to: Slot },
}

impl Action {
    /// The slot whose session performs the step.
    pub fn target(&self) -> Slot {
        match self {
            Action::StartCard { slot, .. }
            | Action::StartTerminal { slot, .. }
            | Action::StartBank { slot, .. } => *slot,
            Action::Forward { to, .. } | Action::Inject { to, .. } | Action::Pin { to } => *to,
        }
    }
}

/// Placeholder for output `index` of `slot`.
pub fn output_ref(slot: Slot, index: usize) -> Term {
    assert!(index < 256, "output index out of range");
    Term::var(((slot as u32) << 8) | index as u32)
}

/// Inverse of [`output_ref`].
pub fn decode_ref(v: u32) -> (Slot, usize) {
    ((v >> 8) as Slot, (v & 0xff) as usize)
}

impl fmt::Display for OutSel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            OutSel::Nth(i) => write!(f, "{i}"),
            OutSel::Last => f.write_str("last"),
        }
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Action::StartCard { card, slot } => write!(f, "start card {card} as {slot}"),
            Action::StartTerminal { terminal, slot } => write!(f, "start terminal {terminal} as {slot}"),
            Action::StartBank { terminal, slot } => write!(f, "start bank {terminal} as {slot}"),
            Action::Forward { to, from, out } => write!(f, "forward {to} {from}.{out}"),
            Action::Inject { to, template } => write!(f, "inject {to} {template}"),
            Action::Pin { to } => write!(f, "pin {to}"),
        }
    }
}

impl FromStr for Action {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let words: Vec<&str> = s.split_whitespace().collect();
        let num = |w: &str| w.parse::<usize>().map_err(|_| format!("bad number {w:?} in {s:?}"));
        match words.as_slice() {
            ["start", kind, n, "as", slot] => {
                let (n, slot) = (num(n)?, num(slot)?);
                match *kind {
                    "card" => Ok(Action::StartCard { card: n, slot }),
                    "terminal" => Ok(Action::StartTerminal { terminal: n, slot }),
                    "bank" => Ok(Action::StartBank { terminal: n, slot }),
                    _ => Err(format!("unknown session kind {kind:?}")),
                }
            }
            ["forward", to, src] => {
                let (from, out) = src.split_once('.').ok_or_else(|| format!("bad source {src:?}"))?;
                let out = if out == "last" { OutSel::Last } else { OutSel::Nth(num(out)?) };
                Ok(Action::Forward { to: num(to)?, from: num(from)?, out })
            }
            ["inject", to, ..] => {
                let rest = s.trim_start()["inject".len()..].trim_start();
                let rest = rest[to.len()..].trim();
                let template = parse(rest).map_err(|e| e.to_string())?;
                Ok(Action::Inject { to: num(to)?, template })
            }
            ["pin", to] => Ok(Action::Pin { to: num(to)? }),
            _ => Err(format!("unknown action {s:?}")),
        }
    }
}

/// A full attacker script.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Script {
    pub actions: Vec<Action>,
}

/// Strategies other than the seeded fuzzer.
pub const NAMED_STRATEGIES: [&str; 9] = [
    "passive",
    "harvest",
    "fake_card",
    "month_probe",
    "message_replay",
    "cryptogram_replay",
    "reflection",
    "pin_probe",
    "key_probe",
];

/// Number of fuzzer seeds in the catalog.
pub const FUZZ_SEEDS: u64 = 42;

/// The strategy catalog: the named strategies followed by `fuzz:0` …
/// `fuzz:41`.
pub fn builtin_strategies() -> Vec<String> {
    NAMED_STRATEGIES
        .iter()
        .map(|s| s.to_string())
        .chain((0..FUZZ_SEEDS).map(|i| format!("fuzz:{i}")))
        .collect()
}

/// Position of the outputs of the public bulletin.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BulletinLayout {
    pub authority_key: usize,
    pub month_keys: Vec<(u32, usize)>,
    pub leaked_chi: Option<usize>,
    pub published_crt: Option<usize>,
    pub len: usize,
}

/// Months whose keys the bulletin publishes.
pub fn published_months(sc: &Scenario) -> std::ops::RangeInclusive<u32> {
    0..=sc.month
}

/// Bulletin layout of a scenario.
pub fn bulletin_layout(sc: &Scenario) -> BulletinLayout {
    let mut i = 1;
    let mut month_keys = Vec::new();
    for m in published_months(sc) {
        if m < sc.horizon {
            month_keys.push((m, i));
            i += 1;
        }
    }
    let leaked_chi = sc.options.chi_leaked.map(|_| {
        i += 1;
        i - 1
    });
    let published_crt = (sc.protocol == Protocol::Utxl).then(|| {
        i += 1;
        i - 1
    });
    BulletinLayout { authority_key: 0, month_keys, leaked_chi, published_crt, len: i }
}

/// Index of the first protocol output of a card session (after the
/// channel announcement and a leaked PIN).
pub fn card_base(sc: &Scenario) -> usize {
    if sc.options.pin_leaked {
        2
    } else {
        1
    }
}

/// Index of the bank request among a terminal's outputs in an honest run.
pub fn request_index(sc: &Scenario, mode: Mode) -> usize {
    if mode == Mode::OffHi && !sc.options.wrong_pin {
        5
    } else {
        4
    }
}

struct Tx {
    card_slot: Slot,
    terminal_slot: Slot,
    terminal: usize,
    actions: Vec<Action>,
}

struct Builder<'a> {
    sc: &'a Scenario,
    next_slot: Slot,
    att: u32,
    rng: ChaCha8Rng,
}

fn r(slot: Slot, i: usize) -> Term {
    output_ref(slot, i)
}

impl<'a> Builder<'a> {
    fn new(sc: &'a Scenario, salt: u64) -> Self {
        Builder {
            sc,
            next_slot: 1,
            att: 0,
            rng: ChaCha8Rng::seed_from_u64(sc.seed ^ salt.wrapping_mul(0x9e37_79b9_7f4a_7c15)),
        }
    }

    fn slot(&mut self) -> Slot {
        self.next_slot += 1;
        self.next_slot - 1
    }

    fn att_scalar(&mut self) -> Term {
        self.att += 1;
        Term::Name(Name::scalar(format!("att.e{}", self.att - 1)))
    }

    fn att_data(&mut self) -> Term {
        self.att += 1;
        Term::Name(Name::data(format!("att.d{}", self.att - 1)))
    }

    fn mode(&self, terminal: usize) -> Mode {
        self.sc.terminals[terminal].0
    }

    /// One transaction with every message forwarded faithfully.
    fn honest_tx(&mut self, card: usize, terminal: usize) -> Tx {
        let (t, c, b) = (self.slot(), self.slot(), self.slot());
        let cb = card_base(self.sc);
        let mode = self.mode(terminal);
        let mut a = vec![
            Action::StartTerminal { terminal, slot: t },
            Action::StartCard { card, slot: c },
            Action::Forward { to: c, from: t, out: OutSel::Nth(1) },
            Action::Forward { to: t, from: c, out: OutSel::Nth(cb) },
            Action::Forward { to: c, from: t, out: OutSel::Nth(2) },
            Action::Forward { to: t, from: c, out: OutSel::Nth(cb + 1) },
        ];
        if mode.is_hi() {
            a.push(Action::Pin { to: t });
        }
        a.extend([
            Action::Forward { to: c, from: t, out: OutSel::Nth(3) },
            Action::Forward { to: t, from: c, out: OutSel::Nth(cb + 2) },
            Action::StartBank { terminal, slot: b },
            Action::Forward { to: b, from: t, out: OutSel::Last },
            Action::Forward { to: t, from: b, out: OutSel::Nth(1) },
        ]);
        Tx { card_slot: c, terminal_slot: t, terminal, actions: a }
    }

    /// Random interleaving preserving the order within each list.
    fn interleave(&mut self, mut lists: Vec<Vec<Action>>) -> Vec<Action> {
        let mut out = Vec::new();
        for l in &mut lists {
            l.reverse();
        }
        loop {
            let live: Vec<usize> = (0..lists.len()).filter(|&i| !lists[i].is_empty()).collect();
            let Some(&i) = live.choose(&mut self.rng) else { break };
            out.push(lists[i].pop().unwrap());
        }
        out
    }

    fn passive(&mut self) -> (Vec<Action>, Vec<Tx>) {
        let mut txs: Vec<Tx> = self
            .sc
            .sessions
            .clone()
            .into_iter()
            .map(|(c, t)| self.honest_tx(c, t))
            .collect();
        let lists = txs.iter_mut().map(|tx| std::mem::take(&mut tx.actions)).collect();
        (self.interleave(lists), txs)
    }

    /// Plays a card towards `terminal` with an attacker key until the
    /// terminal reveals its bank certificate; returns the recipe for it.
    fn harvest(&mut self, terminal: usize) -> (Vec<Action>, Term) {
        let t = self.slot();
        let e = self.att_scalar();
        let crt = Term::dec(Term::hash(Term::smult(e.clone(), r(t, 1))), r(t, 2));
        let a = vec![
            Action::StartTerminal { terminal, slot: t },
            Action::Inject { to: t, template: Term::smult(e, Term::gen()) },
        ];
        (a, crt)
    }

    /// Plays a terminal towards a card using a harvested certificate;
    /// returns the actions, the card slot and the session key recipe.
    fn fake_terminal(&mut self, card: usize, crt: &Term, pin: Term, hi: bool) -> (Vec<Action>, Slot, Term) {
        let c = self.slot();
        let cb = card_base(self.sc);
        let e = self.att_scalar();
        let k = Term::hash(Term::smult(e.clone(), r(c, cb)));
        let tx = Term::pair(self.att_data(), Term::constant(if hi { Const::Hi } else { Const::Lo }));
        let a = vec![
            Action::StartCard { card, slot: c },
            Action::Inject { to: c, template: Term::smult(e, Term::gen()) },
            Action::Inject { to: c, template: Term::enc(crt.clone(), k.clone()) },
            Action::Inject { to: c, template: Term::enc(Term::pair(tx, pin), k.clone()) },
        ];
        (a, c, k)
    }

    /// Plays a card towards `terminal` with an attacker key, presenting
    /// `month_sig` as month certificate, and pushes the result to the bank.
    fn fake_card(&mut self, terminal: usize, month_sig: impl FnOnce(&Term) -> Term) -> Vec<Action> {
        let (t, b) = (self.slot(), self.slot());
        let e = self.att_scalar();
        let z2 = Term::smult(e.clone(), Term::gen());
        let k = Term::hash(Term::smult(e, r(t, 1)));
        let tx = Term::proj(1, Term::dec(k.clone(), r(t, 3)));
        let junk = Term::hash(self.att_data());
        let mut a = vec![
            Action::StartTerminal { terminal, slot: t },
            Action::Inject { to: t, template: z2.clone() },
            Action::Inject { to: t, template: Term::enc(Term::pair(z2.clone(), month_sig(&z2)), k.clone()) },
        ];
        if self.mode(terminal).is_hi() {
            a.push(Action::Pin { to: t });
        }
        a.extend([
            Action::Inject { to: t, template: Term::enc(Term::tuple(vec![junk, Term::bot(), tx]), k) },
            Action::StartBank { terminal, slot: b },
            Action::Forward { to: b, from: t, out: OutSel::Last },
            Action::Forward { to: t, from: b, out: OutSel::Nth(1) },
        ]);
        a
    }

    fn session_terminals(&self) -> Vec<usize> {
        let mut ts: Vec<usize> = self.sc.sessions.iter().map(|s| s.1).collect();
        ts.dedup();
        if ts.is_empty() {
            ts.push(0);
        }
        ts
    }

    fn session_cards(&self) -> Vec<usize> {
        let mut cs: Vec<usize> = self.sc.sessions.iter().map(|s| s.0).collect();
        cs.dedup();
        if cs.is_empty() {
            cs.push(0);
        }
        cs
    }

    fn build(&mut self, name: &str) -> Result<Script, HarnessError> {
        let mut out = Vec::new();
        match name {
            "passive" => out = self.passive().0,
            "harvest" => {
                for t in self.session_terminals() {
                    out.extend(self.harvest(t).0);
                }
                out.extend(self.passive().0);
            }
            "fake_card" => {
                let terminal0 = self.session_terminals()[0];
                let (h, crt) = self.harvest(terminal0);
                out.extend(h);
                // A blinded month certificate observed as a fake terminal.
                let card0 = self.session_cards()[0];
                let (probe, c, k) = self.fake_terminal(card0, &crt, Term::bot(), false);
                out.extend(probe);
                let seen = Term::proj(2, Term::dec(k, r(c, card_base(self.sc) + 1)));
                let leaked = bulletin_layout(self.sc).leaked_chi;
                for t in self.session_terminals() {
                    let seen = seen.clone();
                    out.extend(self.fake_card(t, |z2| match leaked {
                        Some(i) => Term::sigv(r(BULLETIN, i), z2.clone()),
                        None => seen,
                    }));
                }
                out.extend(self.passive().0);
            }
            "month_probe" => {
                let mut crts = Vec::new();
                for t in 0..self.sc.terminals.len() {
                    let (h, crt) = self.harvest(t);
                    out.extend(h);
                    crts.push(crt);
                }
                for card in self.session_cards() {
                    for crt in &crts {
                        out.extend(self.fake_terminal(card, crt, Term::bot(), false).0);
                    }
                }
                out.extend(self.passive().0);
            }
            "message_replay" => {
                let (p, txs) = self.passive();
                out.extend(p);
                let cb = card_base(self.sc);
                for (i, tx) in txs.iter().enumerate() {
                    // Card messages of one transaction shown to a new
                    // terminal session.
                    let t2 = self.slot();
                    out.extend([
                        Action::StartTerminal { terminal: tx.terminal, slot: t2 },
                        Action::Forward { to: t2, from: tx.card_slot, out: OutSel::Nth(cb) },
                        Action::Forward { to: t2, from: tx.card_slot, out: OutSel::Nth(cb + 1) },
                    ]);
                    // A bank request shown to the bank under another key.
                    let other = &txs[(i + 1) % txs.len()];
                    let b = self.slot();
                    let req = request_index(self.sc, self.mode(tx.terminal));
                    out.extend([
                        Action::StartBank { terminal: other.terminal, slot: b },
                        Action::Forward { to: b, from: tx.terminal_slot, out: OutSel::Nth(req) },
                    ]);
                }
            }
            "cryptogram_replay" => {
                let (p, txs) = self.passive();
                out.extend(p);
                for tx in &txs {
                    let b = self.slot();
                    let req = request_index(self.sc, self.mode(tx.terminal));
                    out.extend([
                        Action::StartBank { terminal: tx.terminal, slot: b },
                        Action::Forward { to: b, from: tx.terminal_slot, out: OutSel::Nth(req) },
                    ]);
                }
            }
            "reflection" => {
                let cb = card_base(self.sc);
                let cards = self.session_cards();
                let mut lists = Vec::new();
                for (i, &(card, terminal)) in self.sc.sessions.clone().iter().enumerate() {
                    let (t, c, c2) = (self.slot(), self.slot(), self.slot());
                    let other = cards[(i + 1) % cards.len()];
                    lists.push(vec![
                        Action::StartTerminal { terminal, slot: t },
                        Action::StartCard { card, slot: c },
                        Action::Forward { to: c, from: t, out: OutSel::Nth(1) },
                        Action::StartCard { card: other, slot: c2 },
                        Action::Forward { to: c2, from: c, out: OutSel::Nth(cb) },
                        Action::Forward { to: t, from: c2, out: OutSel::Nth(cb) },
                        Action::Forward { to: c2, from: t, out: OutSel::Nth(2) },
                        Action::Forward { to: c, from: t, out: OutSel::Nth(2) },
                        Action::Forward { to: t, from: c, out: OutSel::Nth(cb + 1) },
                    ]);
                }
                out = self.interleave(lists);
            }
            "pin_probe" => {
                let terminal0 = self.session_terminals()[0];
                let (h, crt) = self.harvest(terminal0);
                out.extend(h);
                let mut prev: Option<Slot> = None;
                for &(card, _) in &self.sc.sessions.clone() {
                    let pin = match prev {
                        Some(p) if self.sc.options.pin_leaked => r(p, 1),
                        _ => self.att_data(),
                    };
                    let (probe, c, _) = self.fake_terminal(card, &crt, pin, true);
                    out.extend(probe);
                    prev = Some(c);
                }
            }
            "key_probe" => {
                let mut crts = std::collections::BTreeMap::new();
                for &(card, terminal) in &self.sc.sessions.clone() {
                    if let std::collections::btree_map::Entry::Vacant(v) = crts.entry(terminal) {
                        let (h, crt) = self.harvest(terminal);
                        out.extend(h);
                        v.insert(crt);
                    }
                    let crt = crts[&terminal].clone();
                    out.extend(self.fake_terminal(card, &crt, Term::bot(), false).0);
                }
            }
            _ => {
                let seed = name
                    .strip_prefix("fuzz:")
                    .and_then(|s| s.parse::<u64>().ok())
                    .ok_or_else(|| HarnessError::ScenarioInvalid(format!("unknown strategy {name:?}")))?;
                out = self.fuzz(seed);
            }
        }
        Ok(Script { actions: out })
    }

    /// A random recipe template over earlier outputs.
    fn random_template(&mut self, refs: &[Term], depth: usize) -> Term {
        let leaf = |b: &mut Self| -> Term {
            match b.rng.gen_range(0..10) {
                0 => Term::gen(),
                1 => Term::bot(),
                2 => Term::ok(),
                3 => b.att_scalar(),
                4 => b.att_data(),
                _ => refs.choose(&mut b.rng).cloned().unwrap_or_else(Term::gen),
            }
        };
        if depth == 0 {
            return leaf(self);
        }
        let d = depth - 1;
        match self.rng.gen_range(0..12) {
            0 => Term::hash(self.random_template(refs, d)),
            1 => {
                let e = self.att_scalar();
                Term::enc(self.random_template(refs, d), Term::hash(Term::smult(e, refs.choose(&mut self.rng).cloned().unwrap_or_else(Term::gen))))
            }
            2 => Term::pair(self.random_template(refs, d), self.random_template(refs, d)),
            3 => Term::tuple(vec![
                self.random_template(refs, d),
                self.random_template(refs, d),
                self.random_template(refs, d),
            ]),
            4 => Term::smult(self.att_scalar(), self.random_template(refs, d)),
            5 => Term::dec(self.random_template(refs, d), self.random_template(refs, d)),
            6 => Term::proj(self.rng.gen_range(1..=3), self.random_template(refs, d)),
            7 => Term::enc(self.random_template(refs, d), self.random_template(refs, d)),
            _ => leaf(self),
        }
    }

    /// Honest transactions with some deliveries replaced by attacker
    /// messages and a few extra sessions and replays.
    fn fuzz(&mut self, seed: u64) -> Vec<Action> {
        self.rng = ChaCha8Rng::seed_from_u64(self.sc.seed.wrapping_mul(1_000_003) ^ seed);
        let (mut actions, txs) = self.passive();
        let budget = 1 + self.rng.gen_range(0..4);
        for _ in 0..budget {
            // Outputs observable before the chosen position.
            let pos = self.rng.gen_range(0..=actions.len());
            let mut refs = vec![r(BULLETIN, 0)];
            for a in &actions[..pos] {
                let s = a.target();
                for i in 0..4 {
                    refs.push(r(s, i));
                }
            }
            let targets: Vec<Slot> = actions[..pos].iter().map(Action::target).collect();
            let choice = self.rng.gen_range(0..5);
            if choice == 0 && !txs.is_empty() {
                // Extra bank session replaying something.
                let tx = &txs[self.rng.gen_range(0..txs.len())];
                let b = self.slot();
                let src = targets.choose(&mut self.rng).copied().unwrap_or(tx.terminal_slot);
                let out = OutSel::Nth(self.rng.gen_range(1..6));
                actions.splice(
                    pos..pos,
                    [
                        Action::StartBank { terminal: tx.terminal, slot: b },
                        Action::Forward { to: b, from: src, out },
                    ],
                );
            } else if let Some(&to) = targets.choose(&mut self.rng) {
                let depth = self.rng.gen_range(0..4);
                let template = self.random_template(&refs, depth);
                // Either replace a later delivery to the same slot or add one.
                let later = (pos..actions.len()).find(|&i| {
                    matches!(actions[i], Action::Forward { to: t, .. } if t == to)
                });
                let inject = Action::Inject { to, template };
                match later {
                    Some(i) if choice % 2 == 0 => actions[i] = inject,
                    _ => actions.insert(pos, inject),
                }
            }
        }
        actions
    }
}

/// Builds the script of the scenario's strategy.
pub fn build_script(sc: &Scenario) -> Result<Script, HarnessError> {
    Builder::new(sc, 0).build(&sc.strategy)
}
