//! Card, terminal and bank state machines.
//!
//! Each role is split into long-lived state ([`Card`], [`TerminalConfig`],
//! [`Bank`]) and per-session state whose `stage` field names the point of
//! the protocol the session has reached. A step consumes one input and
//! returns the messages sent, the events emitted and possibly an abort.

mod bank;
mod card;
mod terminal;

use std::fmt;
use std::str::FromStr;

pub use bank::{bank_step, Bank, BankSession, DbEntry};
pub use card::{card_start, card_step, Card, CardKind, CardSecrets, CardSession, CardStage, MonthState};
pub use terminal::{
    terminal_start, terminal_step, TerminalConfig, TerminalInput, TerminalSession, TerminalStage,
};

use crate::term::Term;

/// Terminal operating mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Mode {
    /// High value, PIN verified online by the bank.
    OnHi,
    /// High value, PIN verified offline by the card.
    OffHi,
    /// Low value, no PIN.
    Lo,
}

impl Mode {
    pub const ALL: [Mode; 3] = [Mode::OnHi, Mode::OffHi, Mode::Lo];

    pub fn is_hi(self) -> bool {
        !matches!(self, Mode::Lo)
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::OnHi => "onhi",
            Mode::OffHi => "offhi",
            Mode::Lo => "lo",
        })
    }
}

impl FromStr for Mode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "onhi" => Ok(Mode::OnHi),
            "offhi" => Ok(Mode::OffHi),
            "lo" => Ok(Mode::Lo),
            _ => Err(format!("unknown terminal mode {s:?}")),
        }
    }
}

/// Which kind of agent a session belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum RoleKind {
    Card,
    Terminal,
    Bank,
}

impl fmt::Display for RoleKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RoleKind::Card => "card",
            RoleKind::Terminal => "terminal",
            RoleKind::Bank => "bank",
        })
    }
}

impl FromStr for RoleKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "card" => Ok(RoleKind::Card),
            "terminal" => Ok(RoleKind::Terminal),
            "bank" => Ok(RoleKind::Bank),
            _ => Err(format!("unknown role {s:?}")),
        }
    }
}

/// Instrumentation events used by the agreement checks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum EventTag {
    TComC,
    TRunBC,
    TComBC,
    TAccept,
    CRunB,
    CRun,
    BComC,
    BRunT,
    BComTC,
    BReject,
}

impl EventTag {
    pub const ALL: [EventTag; 10] = [
        EventTag::TComC,
        EventTag::TRunBC,
        EventTag::TComBC,
        EventTag::TAccept,
        EventTag::CRunB,
        EventTag::CRun,
        EventTag::BComC,
        EventTag::BRunT,
        EventTag::BComTC,
        EventTag::BReject,
    ];

    /// Number of arguments every event with this tag carries.
    pub fn arity(self) -> usize {
        match self {
            EventTag::TComC | EventTag::CRun => 6,
            EventTag::TRunBC => 7,
            EventTag::TComBC => 8,
            EventTag::TAccept | EventTag::BRunT | EventTag::BReject => 2,
            EventTag::CRunB | EventTag::BComC | EventTag::BComTC => 1,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            EventTag::TComC => "TComC",
            EventTag::TRunBC => "TRunBC",
            EventTag::TComBC => "TComBC",
            EventTag::TAccept => "TAccept",
            EventTag::CRunB => "CRunB",
            EventTag::CRun => "CRun",
            EventTag::BComC => "BComC",
            EventTag::BRunT => "BRunT",
            EventTag::BComTC => "BComTC",
            EventTag::BReject => "BReject",
        }
    }
}

impl fmt::Display for EventTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for EventTag {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        EventTag::ALL
            .into_iter()
            .find(|t| t.name() == s)
            .ok_or_else(|| format!("unknown event tag {s:?}"))
    }
}

/// An emitted event.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Event {
    pub tag: EventTag,
    pub args: Vec<Term>,
    pub role: RoleKind,
    pub session: usize,
}

impl Event {
    pub fn new(tag: EventTag, args: Vec<Term>, role: RoleKind, session: usize) -> Event {
        debug_assert_eq!(args.len(), tag.arity(), "arity of {tag}");
        Event { tag, args, role, session }
    }
}

/// Why a session stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum AbortReason {
    BadCertificate,
    StaleMonth,
    UnknownMonth,
    MalformedInput,
    BadMonthCert,
    BankReject,
    BadMac,
    TxMismatch,
    BadBlinding,
    Replay,
    UnknownPAN,
    PinOverContactless,
    UnexpectedInput,
}

impl AbortReason {
    pub const ALL: [AbortReason; 13] = [
        AbortReason::BadCertificate,
        AbortReason::StaleMonth,
        AbortReason::UnknownMonth,
        AbortReason::MalformedInput,
        AbortReason::BadMonthCert,
        AbortReason::BankReject,
        AbortReason::BadMac,
        AbortReason::TxMismatch,
        AbortReason::BadBlinding,
        AbortReason::Replay,
        AbortReason::UnknownPAN,
        AbortReason::PinOverContactless,
        AbortReason::UnexpectedInput,
    ];
}

impl fmt::Display for AbortReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

impl FromStr for AbortReason {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        AbortReason::ALL
            .into_iter()
            .find(|r| r.to_string() == s)
            .ok_or_else(|| format!("unknown abort reason {s:?}"))
    }
}

/// Result of one role step. Events emitted before an abort are kept.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Step {
    pub out: Vec<Term>,
    pub events: Vec<Event>,
    pub abort: Option<AbortReason>,
}

impl Step {
    fn send(out: Vec<Term>) -> Step {
        Step { out, ..Step::default() }
    }
    fn abort(reason: AbortReason) -> Step {
        Step { abort: Some(reason), ..Step::default() }
    }
}

/// The result of a destructor, or `None` when it is stuck.
fn opened(t: Term) -> Option<Term> {
    if t.is_destructor() {
        None
    } else {
        Some(t)
    }
}

/// Decrypts and takes the first `n` projections; `None` if any is stuck.
fn open_tuple(key: &Term, c: &Term, n: usize) -> Option<Vec<Term>> {
    let body = opened(Term::dec(key.clone(), c.clone()))?;
    split(&body, n)
}

/// The first `n` projections of `t`; `None` if any is stuck.
fn split(t: &Term, n: usize) -> Option<Vec<Term>> {
    (1..=n as u32).map(|i| opened(Term::proj(i, t.clone()))).collect()
}

#[cfg(test)]
mod tests;
