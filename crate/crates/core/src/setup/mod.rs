//! Authority key generation, card issuance, bank credentials and terminal
//! provisioning.
//!
//! Every secret comes from a [`FreshSource`], whose identifiers are derived
//! deterministically from a role label and a counter, so that a run can be
//! replayed bit-exactly.

use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

use crate::frame::{Alias, Frame};
use crate::roles::{Card, CardKind, CardSecrets, Mode, MonthState, TerminalConfig};
use crate::term::{Name, Sort, Term};

/// Default number of months with certificates.
pub const DEFAULT_HORIZON: u32 = 61;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SetupError {
    #[error("month {month} is beyond the certificate horizon {horizon}")]
    HorizonExceeded { month: u32, horizon: u32 },
    #[error("no bank certificate for month {0}")]
    NoCertForMonth(u32),
}

/// Deterministic supply of fresh names.
///
/// Honest names are recorded so the harness can restrict them in the
/// attacker frame; attacker names use the `att` label and are public.
#[derive(Debug, Clone, Default)]
pub struct FreshSource {
    counters: BTreeMap<String, u64>,
    issued: Vec<Name>,
    attacker: u64,
}

impl FreshSource {
    pub fn new() -> Self {
        Self::default()
    }

    fn next(&mut self, role: &str, sort: Sort) -> Name {
        let c = self.counters.entry(role.to_string()).or_insert(0);
        let n = Name::new(format!("{role}.{c}"), sort);
        *c += 1;
        self.issued.push(n.clone());
        n
    }

    /// A fresh secret scalar labelled by `role`.
    pub fn scalar(&mut self, role: &str) -> Name {
        self.next(role, Sort::Scalar)
    }

    /// A fresh secret datum labelled by `role`.
    pub fn data(&mut self, role: &str) -> Name {
        self.next(role, Sort::Data)
    }

    /// A fresh public attacker scalar.
    pub fn attacker_scalar(&mut self) -> Name {
        self.attacker += 1;
        Name::scalar(format!("att.{}", self.attacker - 1))
    }

    /// A fresh public attacker datum.
    pub fn attacker_data(&mut self) -> Name {
        self.attacker += 1;
        Name::data(format!("att.{}", self.attacker - 1))
    }

    /// Every honest name issued so far, in issue order.
    pub fn issued(&self) -> &[Name] {
        &self.issued
    }
}

/// The payment-system authority: a generic signing key and one Verheul
/// key per month.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Authority {
    pub s: Name,
    pub chi: BTreeMap<u32, Name>,
    pub horizon: u32,
}

impl Authority {
    pub fn new(horizon: u32, fresh: &mut FreshSource) -> Authority {
        let s = fresh.scalar("s");
        let chi = (0..horizon).map(|m| (m, fresh.scalar("chi"))).collect();
        Authority { s, chi, horizon }
    }

    /// `pk(s)`.
    pub fn verification_key(&self) -> Term {
        Term::pk(Term::name(&self.s))
    }

    /// `pkv(χ_m)`.
    pub fn month_key(&self, month: u32) -> Option<Term> {
        self.chi.get(&month).map(|x| Term::pkv(Term::name(x)))
    }

    /// `sigv(χ_m, P)`.
    pub fn month_cert(&self, month: u32, point: &Term) -> Option<Term> {
        self.chi
            .get(&month)
            .map(|x| Term::sigv(Term::name(x), point.clone()))
    }

    /// `⟨⟨mm(m), P⟩, sig(s, ⟨mm(m), P⟩)⟩`.
    pub fn bank_cert(&self, month: u32, point: &Term) -> Term {
        let body = Term::pair(Term::month(month), point.clone());
        Term::pair(body.clone(), Term::sig(Term::name(&self.s), body))
    }
}

/// The bank's terminal-facing key pair and its monthly certificates.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BankCredential {
    pub b_t: Name,
    pub crt_by_month: BTreeMap<u32, Term>,
}

impl BankCredential {
    pub fn new(auth: &Authority, fresh: &mut FreshSource) -> BankCredential {
        let b_t = fresh.scalar("bt");
        let y_b = Term::smult(Term::name(&b_t), Term::gen());
        let crt_by_month = (0..auth.horizon)
            .map(|m| (m, auth.bank_cert(m, &y_b)))
            .collect();
        BankCredential { b_t, crt_by_month }
    }

    /// `[b_t]g`.
    pub fn public_point(&self) -> Term {
        Term::smult(Term::name(&self.b_t), Term::gen())
    }
}

fn check_month(auth: &Authority, month: u32) -> Result<(), SetupError> {
    if month >= auth.horizon {
        return Err(SetupError::HorizonExceeded { month, horizon: auth.horizon });
    }
    Ok(())
}

fn card_secrets(auth: &Authority, fresh: &mut FreshSource) -> CardSecrets {
    let c = fresh.scalar("c");
    let pan = fresh.data("pan");
    let pin = fresh.data("pin");
    let mk = fresh.data("mk");
    let pk_c = Term::smult(Term::name(&c), Term::gen());
    CardSecrets {
        signed_pk: Term::sig(Term::name(&auth.s), pk_c.clone()),
        pk_c,
        c,
        pan,
        pin,
        mk,
        authority_vk: auth.verification_key(),
    }
}

fn certs_from(auth: &Authority, first: u32, pk_c: &Term) -> BTreeMap<u32, Term> {
    (first..auth.horizon)
        .filter_map(|m| auth.month_cert(m, pk_c).map(|s| (m, s)))
        .collect()
}

/// Issues a card at `issue_month`: it can immediately present the
/// certificates of the issue month and of the month before.
pub fn issue_card(
    auth: &Authority,
    issue_month: u32,
    kind: CardKind,
    fresh: &mut FreshSource,
) -> Result<Card, SetupError> {
    check_month(auth, issue_month)?;
    let secrets = card_secrets(auth, fresh);
    let certs = certs_from(auth, issue_month.saturating_sub(1), &secrets.pk_c);
    Ok(Card {
        secrets,
        certs,
        months: MonthState::Pointer(issue_month),
        kind,
    })
}

/// Issues a card with the three-month sliding window starting at `first`.
pub fn issue_multimonth_card(
    auth: &Authority,
    first: u32,
    fresh: &mut FreshSource,
) -> Result<Card, SetupError> {
    check_month(auth, first + 2)?;
    let secrets = card_secrets(auth, fresh);
    let certs = certs_from(auth, first, &secrets.pk_c);
    Ok(Card {
        secrets,
        certs,
        months: MonthState::Window(vec![first, first + 1, first + 2]),
        kind: CardKind::Utx,
    })
}

/// Provisions a terminal for `month`: it receives the month key, the
/// bank certificate and a fresh pre-shared key with the bank.
pub fn provision_terminal(
    auth: &Authority,
    cred: &BankCredential,
    month: u32,
    mode: Mode,
    fresh: &mut FreshSource,
) -> Result<(TerminalConfig, Name), SetupError> {
    let crt = cred
        .crt_by_month
        .get(&month)
        .cloned()
        .ok_or(SetupError::NoCertForMonth(month))?;
    let pk_mm = auth.month_key(month).ok_or(SetupError::NoCertForMonth(month))?;
    let kbt = fresh.data("kbt");
    let config = TerminalConfig {
        mode,
        pk_mm,
        crt,
        kbt: kbt.clone(),
        month,
        checks_month_cert: true,
    };
    Ok((config, kbt))
}

/// Publishes `pk(s)` and `pkv(χ_m)` for every month up to `current_month`.
pub fn publish_bulletin(auth: &Authority, current_month: u32, frame: &mut Frame) -> Vec<Alias> {
    let mut out = vec![frame.extend(auth.verification_key())];
    for m in 0..=current_month {
        if let Some(k) = auth.month_key(m) {
            out.push(frame.extend(k));
        }
    }
    out
}

/// Names that must never reach the attacker: the authority's keys.
pub fn authority_secrets(auth: &Authority) -> BTreeSet<Name> {
    let mut s: BTreeSet<Name> = auth.chi.values().cloned().collect();
    s.insert(auth.s.clone());
    s
}
