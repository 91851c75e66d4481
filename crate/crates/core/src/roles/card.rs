//! The card role: key establishment, month certificate presentation and
//! cryptogram generation.

use std::collections::BTreeMap;

use super::{open_tuple, opened, split, AbortReason, Event, EventTag, RoleKind, Step};
use crate::setup::FreshSource;
use crate::term::{Const, Name, Term};

/// Protocol variant a card implements.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum CardKind {
    /// Full transaction, contact and contactless.
    Utx,
    /// Contactless low-value subsystem: refuses PIN-carrying requests.
    Contactless,
    /// Linkable control: reveals its signed public key after key
    /// establishment.
    Bdh,
    /// Unlinkable control: the full flow truncated after the month
    /// certificate.
    Ubdh,
}

/// Long-term card secrets.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CardSecrets {
    pub c: Name,
    pub pk_c: Term,
    pub pan: Name,
    pub pin: Name,
    pub mk: Name,
    pub authority_vk: Term,
    /// `sig(s, pk_c)`, used only by the linkable control.
    pub signed_pk: Term,
}

/// Which month certificates a card is willing to present.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum MonthState {
    /// Two-month window: the pointer month and the month before.
    Pointer(u32),
    /// Sliding window of explicit months; answering the last one shifts it.
    Window(Vec<u32>),
}

/// A card: secrets, month certificates and month state.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Card {
    pub secrets: CardSecrets,
    pub certs: BTreeMap<u32, Term>,
    pub months: MonthState,
    pub kind: CardKind,
}

impl Card {
    /// Decides whether the certificate for `month` may be presented,
    /// updating the month state, and returns it.
    pub fn answer_month(&mut self, month: u32) -> Result<Term, AbortReason> {
        match &mut self.months {
            MonthState::Pointer(p) => {
                if month + 1 < *p {
                    return Err(AbortReason::StaleMonth);
                }
                let cert = self.certs.get(&month).cloned().ok_or(AbortReason::UnknownMonth)?;
                if month > *p {
                    *p = month;
                }
                Ok(cert)
            }
            MonthState::Window(w) => {
                let pos = w.iter().position(|&m| m == month).ok_or(AbortReason::UnknownMonth)?;
                let cert = self.certs.get(&month).cloned().ok_or(AbortReason::UnknownMonth)?;
                if pos == 2 {
                    w.remove(0);
                    if self.certs.contains_key(&(month + 1)) {
                        w.push(month + 1);
                    }
                }
                Ok(cert)
            }
        }
    }

    /// The PIN entered by a cardholder of this card.
    pub fn pin(&self) -> Term {
        Term::name(&self.secrets.pin)
    }
}

/// Card session stages.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum CardStage {
    /// Waiting for the terminal's ephemeral key.
    C1,
    /// Waiting for the encrypted bank certificate.
    C3,
    /// Waiting for the transaction request.
    C5,
    /// Finished.
    C7,
}

/// Per-session card variables.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CardSession {
    pub id: usize,
    pub stage: CardStage,
    pub a: Option<Name>,
    pub z1: Term,
    pub z2: Term,
    pub k_c: Term,
    pub ec: Term,
    pub emc: Term,
    pub y_b: Term,
}

/// Opens a card session.
pub fn card_start(id: usize) -> CardSession {
    CardSession {
        id,
        stage: CardStage::C1,
        a: None,
        z1: Term::bot(),
        z2: Term::bot(),
        k_c: Term::bot(),
        ec: Term::bot(),
        emc: Term::bot(),
        y_b: Term::bot(),
    }
}

fn secret_product(card: &Card, a: &Name) -> Term {
    Term::mult(Term::name(a), Term::name(&card.secrets.c))
}

/// One card step on network input `input` (a normal form).
pub fn card_step(card: &mut Card, s: &mut CardSession, input: &Term, fresh: &mut FreshSource) -> Step {
    match s.stage {
        CardStage::C1 => {
            let a = fresh.scalar("a");
            s.z1 = input.clone();
            s.z2 = Term::smult(Term::name(&a), card.secrets.pk_c.clone());
            s.k_c = Term::hash(Term::smult(secret_product(card, &a), s.z1.clone()));
            s.a = Some(a.clone());
            if card.kind == CardKind::Bdh {
                s.stage = CardStage::C7;
                let reveal = Term::tuple(vec![
                    card.secrets.pk_c.clone(),
                    card.secrets.signed_pk.clone(),
                    Term::name(&a),
                ]);
                return Step::send(vec![s.z2.clone(), Term::enc(reveal, s.k_c.clone())]);
            }
            s.stage = CardStage::C3;
            Step::send(vec![s.z2.clone()])
        }
        CardStage::C3 => {
            s.stage = CardStage::C7;
            let Some(crt) = opened(Term::dec(s.k_c.clone(), input.clone())) else {
                return Step::abort(AbortReason::MalformedInput);
            };
            let Some(parts) = split(&crt, 2) else {
                return Step::abort(AbortReason::MalformedInput);
            };
            let (mc, mc_s) = (&parts[0], &parts[1]);
            if Term::check(card.secrets.authority_vk.clone(), mc_s.clone()) != *mc {
                return Step::abort(AbortReason::BadCertificate);
            }
            let Some(fields) = split(mc, 2) else {
                return Step::abort(AbortReason::BadCertificate);
            };
            let Term::Const(Const::Month(month)) = fields[0] else {
                return Step::abort(AbortReason::BadCertificate);
            };
            let cert = match card.answer_month(month) {
                Ok(c) => c,
                Err(r) => return Step::abort(r),
            };
            let a = Term::name(s.a.as_ref().expect("set in C1"));
            s.ec = input.clone();
            s.y_b = fields[1].clone();
            s.emc = Term::enc(Term::pair(s.z2.clone(), Term::smult(a, cert)), s.k_c.clone());
            s.stage = if card.kind == CardKind::Ubdh { CardStage::C7 } else { CardStage::C5 };
            Step::send(vec![s.emc.clone()])
        }
        CardStage::C5 => {
            s.stage = CardStage::C7;
            let Some(req) = open_tuple(&s.k_c, input, 2) else {
                return Step::abort(AbortReason::MalformedInput);
            };
            let (tx, upin) = (&req[0], &req[1]);
            let pin = card.pin();
            let a_name = s.a.clone().expect("set in C1");
            let a = Term::name(&a_name);
            let pan = Term::name(&card.secrets.pan);
            let (ac, flag) = if *upin == Term::bot() {
                (Term::tuple(vec![a, pan, tx.clone()]), Term::bot())
            } else if card.kind == CardKind::Contactless {
                return Step::abort(AbortReason::PinOverContactless);
            } else if *upin == pin {
                (Term::tuple(vec![a, pan, tx.clone(), Term::ok()]), Term::ok())
            } else {
                (Term::tuple(vec![a, pan, tx.clone(), Term::constant(Const::No)]), Term::constant(Const::No))
            };
            let k_cb = Term::hash(Term::smult(secret_product(card, &a_name), s.y_b.clone()));
            let mac = Term::hash(Term::pair(ac.clone(), Term::name(&card.secrets.mk)));
            let eac_inner = Term::enc(Term::pair(ac, mac), k_cb);
            let eac = Term::enc(Term::tuple(vec![eac_inner.clone(), flag, tx.clone()]), s.k_c.clone());
            let events = vec![
                Event::new(EventTag::CRunB, vec![eac_inner], RoleKind::Card, s.id),
                Event::new(
                    EventTag::CRun,
                    vec![
                        s.z1.clone(),
                        s.z2.clone(),
                        s.ec.clone(),
                        s.emc.clone(),
                        input.clone(),
                        eac.clone(),
                    ],
                    RoleKind::Card,
                    s.id,
                ),
            ];
            Step { out: vec![eac], events, abort: None }
        }
        CardStage::C7 => Step::abort(AbortReason::UnexpectedInput),
    }
}
