//! Execution traces and their line-oriented text format.
//!
//! ```text
//! TRACE real
//! STEP 0 start terminal 0 as 1
//! OUT 1.0 (name ch.1)
//! EV TComC <six terms>
//! ABORT terminal BadMonthCert
//! SKIP missing output 3.2
//! RESTRICTED (scalar s.0) (name pin.0) ...
//! SECRET (name pin.0)
//! END
//! ```
//!
//! Events and aborts belong to the session targeted by the preceding
//! `STEP`. The frame is rebuilt from the `OUT` lines in order.

use std::fmt;

use super::scenario::World;
use super::strategy::{Action, Slot};
use super::HarnessError;
use crate::frame::Frame;
use crate::roles::{AbortReason, Event, EventTag, RoleKind};
use crate::term::{parse, Term};

/// One trace record.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Record {
    Step { index: usize, action: Action },
    Out { slot: Slot, index: usize, term: Term },
    Event(Event),
    Abort { role: RoleKind, slot: Slot, reason: AbortReason },
    Skip { reason: String },
}

/// The record of one run.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Trace {
    pub world: World,
    pub records: Vec<Record>,
    /// Final attacker knowledge.
    pub frame: Frame,
    /// Terms that must stay underivable.
    pub secrets: Vec<Term>,
}

impl Trace {
    pub fn new(world: World) -> Trace {
        Trace { world, records: Vec::new(), frame: Frame::new(), secrets: Vec::new() }
    }

    pub fn events(&self) -> Vec<&Event> {
        self.records
            .iter()
            .filter_map(|r| match r {
                Record::Event(e) => Some(e),
                _ => None,
            })
            .collect()
    }

    /// Events with the index of the step that emitted them.
    pub fn events_with_steps(&self) -> Vec<(usize, &Event)> {
        let mut step = 0;
        let mut out = Vec::new();
        for r in &self.records {
            match r {
                Record::Step { index, .. } => step = *index,
                Record::Event(e) => out.push((step, e)),
                _ => {}
            }
        }
        out
    }

    pub fn aborts(&self) -> Vec<(RoleKind, Slot, AbortReason)> {
        self.records
            .iter()
            .filter_map(|r| match r {
                Record::Abort { role, slot, reason } => Some((*role, *slot, *reason)),
                _ => None,
            })
            .collect()
    }

    pub fn outputs(&self) -> Vec<(Slot, usize, &Term)> {
        self.records
            .iter()
            .filter_map(|r| match r {
                Record::Out { slot, index, term } => Some((*slot, *index, term)),
                _ => None,
            })
            .collect()
    }

    /// Parses the text format.
    pub fn parse(src: &str) -> Result<Trace, HarnessError> {
        let mut lines = src.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let err = |n: usize, m: String| HarnessError::Parse(format!("trace line {}: {m}", n + 1));
        let (n0, head) = lines.next().ok_or_else(|| HarnessError::Parse("empty trace".into()))?;
        let world = head
            .strip_prefix("TRACE ")
            .ok_or_else(|| err(n0, "missing TRACE header".into()))?
            .trim()
            .parse::<World>()
            .map_err(|e| err(n0, e))?;
        let mut tr = Trace::new(world);
        let mut target: Slot = 0;
        let mut restricted = Vec::new();
        let mut ended = false;
        for (n, line) in lines {
            let (key, rest) = line.split_once(' ').unwrap_or((line, ""));
            let terms = |s: &str| -> Result<Vec<Term>, HarnessError> {
                split_terms(s)
                    .into_iter()
                    .map(|t| parse(t).map_err(|e| err(n, e.to_string())))
                    .collect()
            };
            match key {
                "STEP" => {
                    let (i, a) = rest.split_once(' ').ok_or_else(|| err(n, "bad STEP".into()))?;
                    let index = i.parse().map_err(|_| err(n, "bad step index".into()))?;
                    let action: Action = a.parse().map_err(|e| err(n, e))?;
                    target = action.target();
                    tr.records.push(Record::Step { index, action });
                }
                "OUT" => {
                    let (at, t) = rest.split_once(' ').ok_or_else(|| err(n, "bad OUT".into()))?;
                    let (s, i) = at.split_once('.').ok_or_else(|| err(n, "bad OUT position".into()))?;
                    let slot = s.parse().map_err(|_| err(n, "bad slot".into()))?;
                    let index = i.parse().map_err(|_| err(n, "bad index".into()))?;
                    let term = parse(t).map_err(|e| err(n, e.to_string()))?;
                    tr.frame.extend(term.clone());
                    tr.records.push(Record::Out { slot, index, term });
                }
                "EV" => {
                    let (tag, args) = rest.split_once(' ').unwrap_or((rest, ""));
                    let tag: EventTag = tag.parse().map_err(|e| err(n, e))?;
                    let args = terms(args)?;
                    if args.len() != tag.arity() {
                        return Err(err(n, format!("{tag} takes {} arguments", tag.arity())));
                    }
                    tr.records.push(Record::Event(Event {
                        tag,
                        args,
                        role: role_of(tag),
                        session: target,
                    }));
                }
                "ABORT" => {
                    let (role, reason) = rest.split_once(' ').ok_or_else(|| err(n, "bad ABORT".into()))?;
                    tr.records.push(Record::Abort {
                        role: role.parse().map_err(|e| err(n, e))?,
                        slot: target,
                        reason: reason.trim().parse().map_err(|e| err(n, e))?,
                    });
                }
                "SKIP" => tr.records.push(Record::Skip { reason: rest.to_string() }),
                "RESTRICTED" => restricted = terms(rest)?,
                "SECRET" => tr.secrets.extend(terms(rest)?),
                "END" => ended = true,
                _ => return Err(err(n, format!("unknown record {key:?}"))),
            }
        }
        if !ended {
            return Err(HarnessError::Parse("truncated trace: no END".into()));
        }
        for t in restricted {
            match t {
                Term::Name(n) => tr.frame.restrict(&n),
                other => return Err(HarnessError::Parse(format!("not a name: {other}"))),
            }
        }
        Ok(tr)
    }
}

/// The role that emits events with `tag`.
pub fn role_of(tag: EventTag) -> RoleKind {
    match tag {
        EventTag::CRun | EventTag::CRunB => RoleKind::Card,
        EventTag::BComC | EventTag::BRunT | EventTag::BComTC | EventTag::BReject => RoleKind::Bank,
        _ => RoleKind::Terminal,
    }
}

/// Splits a line into top-level S-expressions and atoms.
fn split_terms(s: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let mut depth = 0usize;
    let mut start = None;
    for (i, c) in s.char_indices() {
        match c {
            '(' => {
                if depth == 0 {
                    start = Some(i);
                }
                depth += 1;
            }
            ')' => {
                depth = depth.saturating_sub(1);
                if depth == 0 {
                    if let Some(st) = start.take() {
                        out.push(&s[st..=i]);
                    }
                }
            }
            c if c.is_whitespace() => {
                if depth == 0 {
                    if let Some(st) = start.take() {
                        out.push(&s[st..i]);
                    }
                }
            }
            _ => {
                if depth == 0 && start.is_none() {
                    start = Some(i);
                }
            }
        }
    }
    if let Some(st) = start {
        out.push(&s[st..]);
    }
    out
}

impl fmt::Display for Trace {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "TRACE {}", self.world)?;
        for r in &self.records {
            match r {
                Record::Step { index, action } => writeln!(f, "STEP {index} {action}")?,
                Record::Out { slot, index, term } => writeln!(f, "OUT {slot}.{index} {term}")?,
                Record::Event(e) => {
                    write!(f, "EV {}", e.tag)?;
                    for a in &e.args {
                        write!(f, " {a}")?;
                    }
                    writeln!(f)?;
                }
                Record::Abort { role, reason, .. } => writeln!(f, "ABORT {role} {reason}")?,
                Record::Skip { reason } => writeln!(f, "SKIP {reason}")?,
            }
        }
        write!(f, "RESTRICTED")?;
        for n in self.frame.restricted() {
            write!(f, " {}", Term::Name(n.clone()))?;
        }
        writeln!(f)?;
        for s in &self.secrets {
            writeln!(f, "SECRET {s}")?;
        }
        writeln!(f, "END")
    }
}
