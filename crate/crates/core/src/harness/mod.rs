//! Attacker-mediated execution of scenarios.
//!
//! Every message between honest sessions crosses the attacker: the
//! strategy script decides what is delivered where, every output is added
//! to the attacker frame, and injected messages must be recipes over that
//! frame. [`run_paired`] executes one script in the real and the ideal
//! world in lockstep, producing frames with aligned alias domains.

mod scenario;
mod strategy;
mod trace;

use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

pub use scenario::{Options, Protocol, Scenario, World, NAMED_SCENARIOS};
pub use strategy::{
    build_script, builtin_strategies, bulletin_layout, card_base, decode_ref, output_ref,
    request_index, Action, BulletinLayout, OutSel, Script, Slot, BULLETIN, FUZZ_SEEDS,
    NAMED_STRATEGIES,
};
pub use trace::{role_of, Record, Trace};

use crate::frame::{Alias, FrameError, Recipe};
use crate::roles::{
    bank_step, card_start, card_step, terminal_start, terminal_step, Bank, BankSession, Card,
    CardKind, CardSession, CardStage, DbEntry, EventTag, MonthState, RoleKind, Step,
    TerminalConfig, TerminalInput, TerminalSession, TerminalStage,
};
use crate::setup::{
    issue_card, issue_multimonth_card, provision_terminal, publish_bulletin, Authority,
    BankCredential, FreshSource, SetupError,
};
use crate::term::{Name, Substitution, Term};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum HarnessError {
    #[error("invalid scenario: {0}")]
    ScenarioInvalid(String),
    #[error("step {step}: injected message is not a recipe: {msg}")]
    NotARecipe { step: usize, msg: String },
    #[error(transparent)]
    Setup(#[from] SetupError),
    #[error("parse error: {0}")]
    Parse(String),
}

/// Result of a paired run.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PairedRun {
    pub real: Trace,
    pub ideal: Trace,
    /// First step after which the two worlds produced different numbers of
    /// outputs; both runs stop there.
    pub misaligned_at: Option<usize>,
}

enum Session {
    Card { index: usize, local: Option<Box<Card>>, state: CardSession },
    Terminal { index: usize, state: TerminalSession, z2_from: Option<Slot> },
    Bank { state: BankSession },
}

struct Runner<'a> {
    sc: &'a Scenario,
    world: World,
    fresh: FreshSource,
    bank: Bank,
    auth: Authority,
    cards: Vec<Card>,
    terminals: Vec<TerminalConfig>,
    sessions: BTreeMap<Slot, Session>,
    closed: BTreeSet<Slot>,
    outputs: BTreeMap<Slot, Vec<Alias>>,
    leaked_pin: BTreeSet<usize>,
    restricted_upto: usize,
    trace: Trace,
}

/// Card flavour of a scenario. Low-value cards refuse PINs; when a
/// low-value scenario also has a high-value terminal the cards are the
/// ordinary PIN-capable ones, which is the setting where a leaked PIN hurts.
fn card_kind(sc: &Scenario) -> CardKind {
    match sc.protocol {
        Protocol::Utx | Protocol::UtxMultimonth => CardKind::Utx,
        Protocol::Utxl if sc.terminals.iter().any(|t| t.0.is_hi()) => CardKind::Utx,
        Protocol::Utxl => CardKind::Contactless,
        Protocol::Bdh => CardKind::Bdh,
        Protocol::Ubdh => CardKind::Ubdh,
    }
}

fn channel(slot: Slot) -> Term {
    Term::Name(Name::data(format!("ch.{slot}")))
}

impl<'a> Runner<'a> {
    fn new(sc: &'a Scenario, world: World) -> Result<Runner<'a>, HarnessError> {
        sc.validate()?;
        let mut fresh = FreshSource::new();
        let auth = Authority::new(sc.horizon, &mut fresh);
        let cred = BankCredential::new(&auth, &mut fresh);
        let mut bank = Bank::new(cred.b_t.clone(), sc.options.replay_check);
        let mut cards = Vec::new();
        for &m in &sc.cards {
            let card = issue(sc, &auth, m, &mut fresh)?;
            if world == World::Real {
                register(&mut bank, &card);
            }
            cards.push(card);
        }
        let mut terminals = Vec::new();
        for &(mode, month) in &sc.terminals {
            let (mut cfg, _) = provision_terminal(&auth, &cred, month, mode, &mut fresh)?;
            cfg.checks_month_cert = sc.options.terminal_checks_month_cert;
            if sc.protocol == Protocol::Utxl {
                // One key shared by every contactless terminal.
                if let Some(first) = terminals.first() {
                    let first: &TerminalConfig = first;
                    cfg.kbt = first.kbt.clone();
                }
            }
            terminals.push(cfg);
        }
        let mut r = Runner {
            sc,
            world,
            fresh,
            bank,
            auth,
            cards,
            terminals,
            sessions: BTreeMap::new(),
            closed: BTreeSet::new(),
            outputs: BTreeMap::new(),
            leaked_pin: BTreeSet::new(),
            restricted_upto: 0,
            trace: Trace::new(world),
        };
        r.restrict_new();
        let mut bulletin = crate::frame::Frame::new();
        publish_bulletin(&r.auth, sc.month, &mut bulletin);
        let mut items: Vec<Term> = bulletin.bindings().map(|(_, t)| t.clone()).collect();
        if let Some(m) = sc.options.chi_leaked {
            items.push(Term::name(&r.auth.chi[&m]));
        }
        if sc.protocol == Protocol::Utxl {
            items.push(cred.crt_by_month[&sc.month].clone());
        }
        debug_assert_eq!(items.len(), bulletin_layout(sc).len);
        for t in items {
            r.output(BULLETIN, t);
        }
        Ok(r)
    }

    fn restrict_new(&mut self) {
        for n in &self.fresh.issued()[self.restricted_upto..] {
            self.trace.frame.restrict(n);
        }
        self.restricted_upto = self.fresh.issued().len();
    }

    fn output(&mut self, slot: Slot, t: Term) {
        let alias = self.trace.frame.extend(t.clone());
        let outs = self.outputs.entry(slot).or_default();
        self.trace.records.push(Record::Out { slot, index: outs.len(), term: t });
        outs.push(alias);
    }

    fn skip(&mut self, reason: String) -> usize {
        self.trace.records.push(Record::Skip { reason });
        0
    }

    fn lookup(&self, slot: Slot, out: OutSel) -> Option<Alias> {
        let outs = self.outputs.get(&slot)?;
        match out {
            OutSel::Nth(i) => outs.get(i).copied(),
            OutSel::Last => outs.last().copied(),
        }
    }

    /// Month state of the card behind `slot` (or of card `index` for a
    /// session about to start).
    fn month_state(&self, a: &Action) -> Option<MonthState> {
        match a {
            Action::StartCard { card, .. } => self.cards.get(*card).map(|c| c.months.clone()),
            _ => match self.sessions.get(&a.target()) {
                Some(Session::Card { index, .. }) => Some(self.cards[*index].months.clone()),
                _ => None,
            },
        }
    }

    fn fresh_slot(&self, slot: Slot) -> Result<(), HarnessError> {
        if slot == BULLETIN || self.sessions.contains_key(&slot) {
            return Err(HarnessError::ScenarioInvalid(format!("slot {slot} reused")));
        }
        Ok(())
    }

    /// Executes one action; returns the number of outputs it produced.
    /// `hint` is the month state of the corresponding real card, used by
    /// ideal-world cards.
    fn exec(&mut self, step: usize, a: &Action, hint: Option<MonthState>) -> Result<usize, HarnessError> {
        self.trace.records.push(Record::Step { index: step, action: a.clone() });
        let before = self.trace.frame.len();
        match a {
            Action::StartCard { card, slot } => {
                self.fresh_slot(*slot)?;
                let template = self
                    .cards
                    .get(*card)
                    .ok_or_else(|| HarnessError::ScenarioInvalid(format!("no card {card}")))?;
                let local = match self.world {
                    World::Real => None,
                    World::Ideal => {
                        let mut c = issue(self.sc, &self.auth, self.sc.cards[*card], &mut self.fresh)?;
                        c.months = hint.unwrap_or_else(|| template.months.clone());
                        register(&mut self.bank, &c);
                        Some(Box::new(c))
                    }
                };
                let leak = match (&local, self.sc.options.pin_leaked) {
                    (_, false) => None,
                    (Some(c), true) => Some(c.pin()),
                    (None, true) if self.leaked_pin.insert(*card) => Some(self.cards[*card].pin()),
                    // Later sessions of the same card publish the PIN of a
                    // card that is never used, as the ideal world does.
                    (None, true) => Some(Term::name(&self.fresh.data("pin"))),
                };
                self.sessions.insert(
                    *slot,
                    Session::Card { index: *card, local, state: card_start(*slot) },
                );
                self.output(*slot, channel(*slot));
                if let Some(p) = leak {
                    self.output(*slot, p);
                }
            }
            Action::StartTerminal { terminal, slot } => {
                self.fresh_slot(*slot)?;
                let cfg = self
                    .terminals
                    .get(*terminal)
                    .ok_or_else(|| HarnessError::ScenarioInvalid(format!("no terminal {terminal}")))?;
                let truncated = self.sc.protocol == Protocol::Ubdh;
                let (state, st) = terminal_start(cfg, *slot, truncated, &mut self.fresh);
                self.sessions.insert(*slot, Session::Terminal { index: *terminal, state, z2_from: None });
                self.output(*slot, channel(*slot));
                self.apply(*slot, st);
            }
            Action::StartBank { terminal, slot } => {
                self.fresh_slot(*slot)?;
                let cfg = self
                    .terminals
                    .get(*terminal)
                    .ok_or_else(|| HarnessError::ScenarioInvalid(format!("no terminal {terminal}")))?;
                let state = BankSession { id: *slot, kbt: cfg.kbt.clone() };
                self.sessions.insert(*slot, Session::Bank { state });
                self.output(*slot, channel(*slot));
            }
            Action::Forward { to, from, out } => match self.lookup(*from, *out) {
                None => {
                    self.skip(format!("missing output {from}.{out}"));
                }
                Some(alias) => {
                    let t = self.trace.frame.image(alias).cloned().expect("alias exists");
                    self.deliver(*to, t, Some(*from), hint);
                }
            },
            Action::Inject { to, template } => {
                let mut sub = Substitution::new();
                let mut missing = None;
                for v in template.vars() {
                    let (slot, i) = decode_ref(v);
                    match self.lookup(slot, OutSel::Nth(i)) {
                        Some(alias) => {
                            sub.insert(v, Term::var(alias));
                        }
                        None => missing = Some((slot, i)),
                    }
                }
                if let Some((s, i)) = missing {
                    self.skip(format!("missing output {s}.{i}"));
                } else {
                    let recipe_term = crate::term::substitute(&sub, template);
                    let recipe = Recipe::new(recipe_term, &self.trace.frame).map_err(|e| match e {
                        FrameError::NotARecipe(msg) => HarnessError::NotARecipe { step, msg },
                        other => HarnessError::NotARecipe { step, msg: other.to_string() },
                    })?;
                    let t = self.trace.frame.eval(&recipe);
                    self.deliver(*to, t, None, hint);
                }
            }
            Action::Pin { to } => {
                let pin = self.user_pin(*to);
                match (pin, self.sessions.get_mut(to)) {
                    (Some(pin), Some(Session::Terminal { state, index, .. }))
                        if state.stage == TerminalStage::AwaitPin && !self.closed.contains(to) =>
                    {
                        let cfg = self.terminals[*index].clone();
                        let st = terminal_step(&cfg, state, &TerminalInput::Pin(pin));
                        self.apply(*to, st);
                    }
                    _ => {
                        self.skip(format!("no terminal waiting for a PIN at {to}"));
                    }
                }
            }
        }
        self.restrict_new();
        Ok(self.trace.frame.len() - before)
    }

    /// The PIN the cardholder types into terminal `slot`: the PIN of the
    /// card whose key the terminal received, a fresh wrong PIN when the
    /// scenario says so, or an unrelated PIN when no honest card is
    /// involved.
    fn user_pin(&mut self, slot: Slot) -> Option<Term> {
        let Some(Session::Terminal { z2_from, .. }) = self.sessions.get(&slot) else {
            return None;
        };
        let card_pin = z2_from.and_then(|c| match self.sessions.get(&c) {
            Some(Session::Card { local: Some(card), .. }) => Some(card.pin()),
            Some(Session::Card { index, .. }) => Some(self.cards[*index].pin()),
            _ => None,
        });
        Some(match card_pin {
            Some(p) if !self.sc.options.wrong_pin => p,
            Some(_) => Term::name(&self.fresh.data("wpin")),
            None => Term::name(&self.fresh.data("pin")),
        })
    }

    fn deliver(&mut self, to: Slot, t: Term, from: Option<Slot>, hint: Option<MonthState>) {
        if self.closed.contains(&to) {
            self.skip(format!("session {to} is closed"));
            return;
        }
        let from_card = from.filter(|f| matches!(self.sessions.get(f), Some(Session::Card { .. })));
        let st = match self.sessions.get_mut(&to) {
            None => {
                self.skip(format!("no session {to}"));
                return;
            }
            Some(Session::Card { index, local, state }) => {
                let card = match local {
                    Some(c) => {
                        if state.stage == CardStage::C3 {
                            if let Some(h) = hint {
                                c.months = h;
                            }
                        }
                        &mut **c
                    }
                    None => &mut self.cards[*index],
                };
                let st = card_step(card, state, &t, &mut self.fresh);
                if state.stage == CardStage::C7 {
                    self.closed.insert(to);
                }
                st
            }
            Some(Session::Terminal { index, state, z2_from }) => {
                if state.stage == TerminalStage::AwaitZ2 {
                    *z2_from = from_card;
                }
                let st = terminal_step(&self.terminals[*index], state, &TerminalInput::Net(t));
                if state.stage == TerminalStage::Done {
                    self.closed.insert(to);
                }
                st
            }
            Some(Session::Bank { state }) => {
                let st = bank_step(&mut self.bank, state, &t);
                self.closed.insert(to);
                st
            }
        };
        self.apply(to, st);
    }

    fn apply(&mut self, slot: Slot, st: Step) {
        for t in st.out {
            self.output(slot, t);
        }
        for e in st.events {
            self.trace.records.push(Record::Event(e));
        }
        if let Some(reason) = st.abort {
            self.closed.insert(slot);
            let role = match self.sessions.get(&slot) {
                Some(Session::Card { .. }) => RoleKind::Card,
                Some(Session::Terminal { .. }) => RoleKind::Terminal,
                _ => RoleKind::Bank,
            };
            self.trace.records.push(Record::Abort { role, slot, reason });
        }
    }

    /// Secrets that must stay underivable: card keys and (unless leaked)
    /// PINs, and every session's cryptogram key and plaintext.
    fn finish(mut self) -> Trace {
        let mut secrets = Vec::new();
        let mut cards: Vec<&Card> = Vec::new();
        if self.world == World::Real {
            cards.extend(self.cards.iter());
        }
        for s in self.sessions.values() {
            if let Session::Card { local: Some(c), .. } = s {
                cards.push(c);
            }
        }
        for c in cards {
            secrets.push(Term::name(&c.secrets.c));
            secrets.push(Term::name(&c.secrets.mk));
            if !self.sc.options.pin_leaked {
                secrets.push(c.pin());
            }
        }
        for e in self.trace.events() {
            if e.tag == EventTag::CRunB {
                if let Term::Enc(body, key) = &e.args[0] {
                    secrets.push((**key).clone());
                    secrets.push(Term::proj(1, (**body).clone()));
                }
            }
        }
        secrets.sort();
        secrets.dedup();
        self.trace.secrets = secrets;
        self.trace
    }
}

fn issue(sc: &Scenario, auth: &Authority, month: u32, fresh: &mut FreshSource) -> Result<Card, SetupError> {
    match sc.protocol {
        Protocol::UtxMultimonth => issue_multimonth_card(auth, month, fresh),
        _ => issue_card(auth, month, card_kind(sc), fresh),
    }
}

fn register(bank: &mut Bank, card: &Card) {
    bank.register(
        Term::name(&card.secrets.pan),
        DbEntry {
            pin: card.pin(),
            mk: Term::name(&card.secrets.mk),
            pk_c: card.secrets.pk_c.clone(),
        },
    );
}

/// Runs a scenario in its configured world.
pub fn run_scenario(sc: &Scenario) -> Result<Trace, HarnessError> {
    let script = build_script(sc)?;
    run_script(sc, sc.world, &script)
}

/// Runs an explicit script in `world`.
pub fn run_script(sc: &Scenario, world: World, script: &Script) -> Result<Trace, HarnessError> {
    let mut r = Runner::new(sc, world)?;
    for (i, a) in script.actions.iter().enumerate() {
        r.exec(i, a, None)?;
    }
    Ok(r.finish())
}

/// Runs the scenario's strategy against the real and the ideal world in
/// lockstep.
pub fn run_paired(sc: &Scenario) -> Result<PairedRun, HarnessError> {
    let script = build_script(sc)?;
    run_paired_script(sc, &script)
}

/// [`run_paired`] with an explicit script.
pub fn run_paired_script(sc: &Scenario, script: &Script) -> Result<PairedRun, HarnessError> {
    let mut real = Runner::new(sc, World::Real)?;
    let mut ideal = Runner::new(sc, World::Ideal)?;
    let mut misaligned_at = None;
    for (i, a) in script.actions.iter().enumerate() {
        let hint = real.month_state(a);
        let nr = real.exec(i, a, None)?;
        let ni = ideal.exec(i, a, hint)?;
        if nr != ni {
            misaligned_at = Some(i);
            break;
        }
    }
    Ok(PairedRun { real: real.finish(), ideal: ideal.finish(), misaligned_at })
}
