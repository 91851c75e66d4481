//! Property verdicts over traces and paired runs.
//!
//! * injective agreement for the four built-in correspondences,
//! * secrecy of card keys, PINs and cryptograms,
//! * the real/ideal distinguishing experiment for unlinkability.

mod suite;

use std::fmt;

use crate::frame::{derive, static_equiv, Frame, Verdict as FrameVerdict};
use crate::harness::{PairedRun, Trace};
use crate::roles::{Event, EventTag};
use crate::term::{equal_mod_e, Term};

pub use suite::{
    fuzz_scenario, run_suite, unlinkability_scenarios, SuiteCheck, SuiteConfig, SuiteName, SuiteReport,
    SUITES,
};

/// Outcome of one property check.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Status {
    Holds,
    Violated,
    /// No counterexample within the explored bound; not a proof.
    BoundedPass,
}

impl fmt::Display for Status {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Status::Holds => "holds",
            Status::Violated => "violated",
            Status::BoundedPass => "bounded-pass",
        })
    }
}

impl std::str::FromStr for Status {
    type Err = String;
    fn from_str(s: &str) -> Result<Status, String> {
        match s {
            "holds" => Ok(Status::Holds),
            "violated" => Ok(Status::Violated),
            "bounded-pass" => Ok(Status::BoundedPass),
            _ => Err(format!("unknown status {s:?}")),
        }
    }
}

/// A property verdict with an optional witness.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Verdict {
    pub property: String,
    pub status: Status,
    /// Human-readable witness or bound description.
    pub witness: Option<String>,
    /// Trace steps the witness refers to.
    pub steps: Vec<usize>,
}

impl Verdict {
    fn new(property: impl Into<String>, status: Status) -> Verdict {
        Verdict { property: property.into(), status, witness: None, steps: Vec::new() }
    }

    fn with_witness(mut self, w: impl Into<String>) -> Verdict {
        self.witness = Some(w.into());
        self
    }

    pub fn is_violated(&self) -> bool {
        self.status == Status::Violated
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "CHECK {} {}", self.property, self.status)?;
        if let Some(w) = &self.witness {
            write!(f, " {w}")?;
        }
        Ok(())
    }
}

/// The built-in injective-agreement correspondences.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Correspondence {
    /// The terminal agrees with the card on the exchanged messages.
    TerminalCard,
    /// The terminal agrees with the bank on request and response, and
    /// with the card.
    TerminalBank,
    /// The bank agrees with the terminal on the request, and the terminal
    /// run agrees with a card run.
    BankTerminal,
    /// The bank agrees with the card on the encrypted cryptogram.
    BankCard,
}

impl Correspondence {
    pub const ALL: [Correspondence; 4] = [
        Correspondence::TerminalCard,
        Correspondence::TerminalBank,
        Correspondence::BankTerminal,
        Correspondence::BankCard,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Correspondence::TerminalCard => "TComC=>CRun",
            Correspondence::TerminalBank => "TComBC=>BRunT&CRun",
            Correspondence::BankTerminal => "BComTC=>TRunBC&CRun",
            Correspondence::BankCard => "BComC=>CRunB",
        }
    }

    pub fn trigger(self) -> EventTag {
        match self {
            Correspondence::TerminalCard => EventTag::TComC,
            Correspondence::TerminalBank => EventTag::TComBC,
            Correspondence::BankTerminal => EventTag::BComTC,
            Correspondence::BankCard => EventTag::BComC,
        }
    }

    /// Candidate obligation tuples (indices into `events`) for `trigger`.
    fn candidates(self, trigger: &Event, events: &[(usize, &Event)]) -> Vec<Vec<usize>> {
        let with = |tag: EventTag, pred: &dyn Fn(&Event) -> bool| -> Vec<usize> {
            events
                .iter()
                .enumerate()
                .filter(|(_, (_, e))| e.tag == tag && pred(e))
                .map(|(i, _)| i)
                .collect()
        };
        let eq = |a: &[Term], b: &[Term]| a.len() == b.len() && a.iter().zip(b).all(|(x, y)| equal_mod_e(x, y));
        let a = &trigger.args;
        match self {
            Correspondence::TerminalCard => {
                with(EventTag::CRun, &|e| eq(&e.args, a)).into_iter().map(|i| vec![i]).collect()
            }
            Correspondence::BankCard => {
                with(EventTag::CRunB, &|e| eq(&e.args, a)).into_iter().map(|i| vec![i]).collect()
            }
            Correspondence::TerminalBank => {
                let banks = with(EventTag::BRunT, &|e| eq(&e.args, &a[..2]));
                let cards = with(EventTag::CRun, &|e| eq(&e.args, &a[2..]));
                product(&banks, &cards)
            }
            Correspondence::BankTerminal => {
                let mut out = Vec::new();
                for t in with(EventTag::TRunBC, &|e| eq(&e.args[..1], a)) {
                    let six = &events[t].1.args[1..];
                    for c in with(EventTag::CRun, &|e| eq(&e.args, six)) {
                        out.push(vec![t, c]);
                    }
                }
                out
            }
        }
    }
}

fn product(xs: &[usize], ys: &[usize]) -> Vec<Vec<usize>> {
    xs.iter().flat_map(|&x| ys.iter().map(move |&y| vec![x, y])).collect()
}

impl fmt::Display for Correspondence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Correspondence {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        Correspondence::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| format!("unknown correspondence {s:?}"))
    }
}

/// Assigns each trigger a candidate tuple so that no obligation event is
/// used twice. Returns the index of a trigger that cannot be served when
/// no such assignment exists.
fn injective_match(cands: &[Vec<Vec<usize>>]) -> Result<(), usize> {
    // Most constrained triggers first.
    let mut order: Vec<usize> = (0..cands.len()).collect();
    order.sort_by_key(|&i| cands[i].len());
    if let Some(&i) = order.first().filter(|&&i| cands[i].is_empty()) {
        return Err(i);
    }
    fn go(k: usize, order: &[usize], cands: &[Vec<Vec<usize>>], used: &mut Vec<usize>, deepest: &mut usize) -> bool {
        if k == order.len() {
            return true;
        }
        *deepest = (*deepest).max(k);
        for tuple in &cands[order[k]] {
            if tuple.iter().any(|e| used.contains(e)) {
                continue;
            }
            used.extend(tuple);
            if go(k + 1, order, cands, used, deepest) {
                return true;
            }
            used.truncate(used.len() - tuple.len());
        }
        false
    }
    let mut deepest = 0;
    if go(0, &order, cands, &mut Vec::new(), &mut deepest) {
        Ok(())
    } else {
        Err(order[deepest])
    }
}

/// Checks one correspondence on a trace.
///
/// The verdict depends only on the multiset of events, not on their
/// interleaving.
pub fn check_agreement(tr: &Trace, c: Correspondence) -> Verdict {
    let events = tr.events_with_steps();
    let triggers: Vec<usize> =
        (0..events.len()).filter(|&i| events[i].1.tag == c.trigger()).collect();
    let cands: Vec<Vec<Vec<usize>>> =
        triggers.iter().map(|&i| c.candidates(events[i].1, &events)).collect();
    match injective_match(&cands) {
        Ok(()) => Verdict::new(c.name(), Status::Holds),
        Err(k) => {
            let (step, ev) = events[triggers[k]];
            let what = if cands[k].is_empty() { "unmatched" } else { "not-injective" };
            let mut v = Verdict::new(c.name(), Status::Violated)
                .with_witness(format!("{what}@step{step}:{}", ev.tag));
            v.steps.push(step);
            for t in &cands[k] {
                v.steps.extend(t.iter().map(|&i| events[i].0));
            }
            v.steps.sort_unstable();
            v.steps.dedup();
            v
        }
    }
}

/// All four correspondences.
pub fn check_all_agreements(tr: &Trace) -> Vec<Verdict> {
    Correspondence::ALL.iter().map(|&c| check_agreement(tr, c)).collect()
}

/// Violated iff some target is derivable from `f` within `bound`.
pub fn check_secrecy(f: &Frame, targets: &[Term], bound: usize) -> Verdict {
    for t in targets {
        if let Some(r) = derive(f, t, bound) {
            return Verdict::new("secrecy", Status::Violated).with_witness(format!("{t} derived by {r}"));
        }
    }
    Verdict::new("secrecy", Status::Holds)
}

/// The distinguishing experiment on a paired run: the worlds must agree
/// on the number of outputs per step, on which sessions abort when, and
/// their final frames must be statically equivalent up to `test_bound`.
pub fn distinguish(p: &PairedRun, test_bound: usize) -> Verdict {
    let property = "unlinkability";
    if let Some(step) = p.misaligned_at {
        let mut v = Verdict::new(property, Status::Violated)
            .with_witness(format!("output-count@step{step}"));
        v.steps.push(step);
        return v;
    }
    if let Some(step) = abort_mismatch(&p.real, &p.ideal) {
        let mut v =
            Verdict::new(property, Status::Violated).with_witness(format!("abort@step{step}"));
        v.steps.push(step);
        return v;
    }
    match static_equiv(&p.real.frame, &p.ideal.frame, test_bound) {
        Ok(FrameVerdict::Equivalent { bound }) => Verdict::new(property, Status::BoundedPass)
            .with_witness(format!("bounded:test_bound={bound}")),
        Ok(FrameVerdict::Distinguished(w)) => {
            Verdict::new(property, Status::Violated).with_witness(w.to_string())
        }
        Err(e) => Verdict::new(property, Status::Violated).with_witness(format!("frames: {e}")),
    }
}

/// First step at which the two traces abort different sessions.
fn abort_mismatch(a: &Trace, b: &Trace) -> Option<usize> {
    let steps = |t: &Trace| {
        let mut step = 0;
        let mut out = Vec::new();
        for r in &t.records {
            match r {
                crate::harness::Record::Step { index, .. } => step = *index,
                crate::harness::Record::Abort { slot, .. } => out.push((step, *slot)),
                _ => {}
            }
        }
        out
    };
    let (sa, sb) = (steps(a), steps(b));
    if sa == sb {
        return None;
    }
    let i = sa.iter().zip(&sb).position(|(x, y)| x != y).unwrap_or(sa.len().min(sb.len()));
    Some(match (sa.get(i), sb.get(i)) {
        (Some(x), Some(y)) => x.0.min(y.0),
        (Some(x), None) | (None, Some(x)) => x.0,
        (None, None) => unreachable!("sequences differ"),
    })
}

#[cfg(test)]
mod tests;
