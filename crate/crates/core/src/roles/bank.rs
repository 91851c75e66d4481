//! The bank: one merged agent holding the terminal-facing key and the card
//! database.

use std::collections::{BTreeMap, BTreeSet};

use super::{open_tuple, opened, split, AbortReason, Event, EventTag, RoleKind, Step};
use crate::term::{Const, Name, Term};

/// What the bank knows about one card, indexed by PAN.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DbEntry {
    pub pin: Term,
    pub mk: Term,
    pub pk_c: Term,
}

/// Bank state shared by all bank sessions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Bank {
    pub b_t: Name,
    pub db: BTreeMap<Term, DbEntry>,
    /// Accepted `(PAN, TX, a)` triples.
    pub replay_log: BTreeSet<(Term, Term, Term)>,
    pub replay_check: bool,
}

impl Bank {
    pub fn new(b_t: Name, replay_check: bool) -> Bank {
        Bank {
            b_t,
            db: BTreeMap::new(),
            replay_log: BTreeSet::new(),
            replay_check,
        }
    }

    pub fn register(&mut self, pan: Term, entry: DbEntry) {
        self.db.insert(pan, entry);
    }
}

/// A bank session serving requests under one terminal key.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BankSession {
    pub id: usize,
    pub kbt: Name,
}

/// Processes one authorisation request.
pub fn bank_step(bank: &mut Bank, s: &BankSession, x: &Term) -> Step {
    let kbt = Term::name(&s.kbt);
    let Some(req) = open_tuple(&kbt, x, 4) else {
        return Step::abort(AbortReason::MalformedInput);
    };
    let (tx_t, z2, eac, upin) = (&req[0], &req[1], &req[2], &req[3]);
    let k_bc = Term::hash(Term::smult(Term::name(&bank.b_t), z2.clone()));
    let Some(hac) = open_tuple(&k_bc, eac, 2) else {
        return Step::abort(AbortReason::MalformedInput);
    };
    let (ac, mac) = (&hac[0], &hac[1]);
    let Some(fields) = split(ac, 3) else {
        return Step::abort(AbortReason::MalformedInput);
    };
    let (x_a, pan, tx) = (&fields[0], &fields[1], &fields[2]);
    let pin_v = opened(Term::proj(4, ac.clone()));
    let Some(entry) = bank.db.get(pan).cloned() else {
        return Step::abort(AbortReason::UnknownPAN);
    };
    if Term::hash(Term::pair(ac.clone(), entry.mk.clone())) != *mac {
        return Step::abort(AbortReason::BadMac);
    }
    if tx != tx_t {
        return Step::abort(AbortReason::TxMismatch);
    }
    if Term::smult(x_a.clone(), entry.pk_c.clone()) != *z2 {
        return Step::abort(AbortReason::BadBlinding);
    }
    let triple = (pan.clone(), tx.clone(), x_a.clone());
    if bank.replay_check && bank.replay_log.contains(&triple) {
        return Step::abort(AbortReason::Replay);
    }
    bank.replay_log.insert(triple);
    let is_hi = Term::proj(2, tx_t.clone()) == Term::constant(Const::Hi);
    let accept = !is_hi || pin_v == Some(Term::ok()) || *upin == entry.pin;
    let verdict = Term::constant(if accept { Const::Accept } else { Const::Reject });
    let resp = Term::enc(Term::pair(tx_t.clone(), verdict), kbt.clone());
    let mut events = Vec::new();
    if !accept {
        events.push(Event::new(
            EventTag::BReject,
            vec![kbt, tx_t.clone()],
            RoleKind::Bank,
            s.id,
        ));
    }
    events.push(Event::new(EventTag::BComC, vec![eac.clone()], RoleKind::Bank, s.id));
    events.push(Event::new(
        EventTag::BRunT,
        vec![x.clone(), resp.clone()],
        RoleKind::Bank,
        s.id,
    ));
    events.push(Event::new(EventTag::BComTC, vec![x.clone()], RoleKind::Bank, s.id));
    Step { out: vec![resp], events, abort: None }
}
