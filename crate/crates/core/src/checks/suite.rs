//! Named verification suites with expected verdicts.
//!
//! Every sub-check carries the verdict it is expected to produce; negative
//! controls are expected to be `violated`. A suite passes when every
//! observed verdict equals its expectation.

use std::fmt;

use rayon::prelude::*;

use super::{check_agreement, check_secrecy, distinguish, Correspondence, Status, Verdict};
use crate::frame::{DEFAULT_SIZE_BOUND, DEFAULT_TEST_BOUND};
use crate::harness::{
    builtin_strategies, run_paired, run_scenario, Action, HarnessError, Options, Record,
    Scenario, Trace, FUZZ_SEEDS,
};
use crate::roles::{AbortReason, Card, CardKind, EventTag, Mode, MonthState};
use crate::setup::{issue_card, issue_multimonth_card, Authority, FreshSource};
use crate::term::Term;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SuiteName {
    Security,
    Unlinkability,
    Multimonth,
    Utxl,
    Controls,
}

pub const SUITES: [SuiteName; 5] = [
    SuiteName::Security,
    SuiteName::Unlinkability,
    SuiteName::Multimonth,
    SuiteName::Utxl,
    SuiteName::Controls,
];

impl fmt::Display for SuiteName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SuiteName::Security => "security",
            SuiteName::Unlinkability => "unlinkability",
            SuiteName::Multimonth => "multimonth",
            SuiteName::Utxl => "utxl",
            SuiteName::Controls => "controls",
        })
    }
}

impl std::str::FromStr for SuiteName {
    type Err = String;
    fn from_str(s: &str) -> Result<SuiteName, String> {
        SUITES
            .into_iter()
            .find(|n| n.to_string() == s)
            .ok_or_else(|| format!("unknown suite {s:?} (expected one of security, unlinkability, multimonth, utxl, controls)"))
    }
}

/// Suite parameters.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SuiteConfig {
    /// First seed; seeds `seed .. seed + seeds` are used.
    pub seed: u64,
    pub seeds: u64,
    /// Maximum number of card sessions in unlinkability experiments.
    pub sessions: usize,
    pub derive_bound: usize,
    pub test_bound: usize,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        SuiteConfig {
            seed: 0,
            seeds: 20,
            sessions: 3,
            derive_bound: DEFAULT_SIZE_BOUND,
            test_bound: DEFAULT_TEST_BOUND,
        }
    }
}

/// One sub-check with its expected verdict.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SuiteCheck {
    pub verdict: Verdict,
    pub expected: Status,
    /// Marks results about conjectured rather than established properties.
    pub hypothesis: bool,
}

impl SuiteCheck {
    pub fn ok(&self) -> bool {
        self.verdict.status == self.expected
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SuiteReport {
    pub suite: SuiteName,
    pub checks: Vec<SuiteCheck>,
}

impl SuiteReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(SuiteCheck::ok)
    }
}

impl fmt::Display for SuiteReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for c in &self.checks {
            write!(f, "CHECK {} {}", c.verdict.property, c.verdict.status)?;
            if c.hypothesis {
                write!(f, " [hypothesis]")?;
            }
            if let Some(w) = &c.verdict.witness {
                write!(f, " {w}")?;
            }
            writeln!(f)?;
            if !c.ok() {
                writeln!(f, "UNEXPECTED {} expected {}", c.verdict.property, c.expected)?;
            }
        }
        let ok = self.checks.iter().filter(|c| c.ok()).count();
        writeln!(
            f,
            "SUITE {} {} {ok}/{}",
            self.suite,
            if self.passed() { "pass" } else { "fail" },
            self.checks.len()
        )
    }
}

struct Builder {
    prefix: String,
    checks: Vec<SuiteCheck>,
}

impl Builder {
    fn expect(&mut self, mut v: Verdict, name: &str, expected: Status) {
        v.property = format!("{}.{name}", self.prefix);
        self.checks.push(SuiteCheck { verdict: v, expected, hypothesis: false });
    }

    fn hypothesis(&mut self, v: Verdict, name: &str, expected: Status) {
        self.expect(v, name, expected);
        self.checks.last_mut().expect("just pushed").hypothesis = true;
    }
}

/// Folds per-run verdicts: violated if any run violates, with the first
/// violating run as witness.
fn fold(runs: Vec<(String, Verdict)>, pass: Status, bound: Option<String>) -> Verdict {
    match runs.iter().find(|(_, v)| v.is_violated()) {
        Some((tag, v)) => Verdict {
            property: String::new(),
            status: Status::Violated,
            witness: Some(format!("{tag}: {}", v.witness.as_deref().unwrap_or("-"))),
            steps: v.steps.clone(),
        },
        None => Verdict {
            property: String::new(),
            status: pass,
            witness: bound.or_else(|| Some(format!("runs={}", runs.len()))),
            steps: Vec::new(),
        },
    }
}

fn fact(ok: bool, what: &str) -> Verdict {
    Verdict {
        property: String::new(),
        status: if ok { Status::Holds } else { Status::Violated },
        witness: (!ok).then(|| what.to_string()),
        steps: Vec::new(),
    }
}

fn run(sc: &Scenario) -> Trace {
    run_scenario(sc).unwrap_or_else(|e| panic!("built-in scenario failed to run: {e}"))
}

fn has_tag(t: &Trace, tag: EventTag) -> bool {
    t.events().iter().any(|e| e.tag == tag)
}

fn has_abort(t: &Trace, reason: AbortReason) -> bool {
    t.aborts().iter().any(|a| a.2 == reason)
}

/// Per-correspondence verdicts over several traces.
fn agreements(b: &mut Builder, name: &str, traces: &[(String, Trace)], expected: [Status; 4]) {
    for (c, exp) in Correspondence::ALL.into_iter().zip(expected) {
        let runs = traces.iter().map(|(tag, t)| (tag.clone(), check_agreement(t, c))).collect();
        b.expect(fold(runs, Status::Holds, None), &format!("{name}.{c}"), exp);
    }
}

fn secrecy(b: &mut Builder, name: &str, traces: &[(String, Trace)], bound: usize) {
    let runs = traces
        .par_iter()
        .map(|(tag, t)| (tag.clone(), check_secrecy(&t.frame, &t.secrets, bound)))
        .collect();
    b.expect(fold(runs, Status::Holds, None), &format!("{name}.secrecy"), Status::Holds);
}

const HOLD4: [Status; 4] = [Status::Holds; 4];

/// The randomized multi-session setting: three cards, one terminal per
/// mode, and a fuzzing attacker.
pub fn fuzz_scenario(seed: u64) -> Scenario {
    Scenario {
        cards: vec![1, 1, 1],
        terminals: vec![(Mode::OnHi, 1), (Mode::OffHi, 1), (Mode::Lo, 1)],
        sessions: (0..4).map(|i| (i % 3, (i + seed as usize) % 3)).collect(),
        strategy: format!("fuzz:{}", seed % FUZZ_SEEDS),
        seed,
        ..Scenario::default()
    }
}

fn seeds(cfg: &SuiteConfig) -> impl Iterator<Item = u64> + Clone {
    cfg.seed..cfg.seed + cfg.seeds
}

fn traces(cfg: &SuiteConfig, sc: &Scenario) -> Vec<(String, Trace)> {
    seeds(cfg)
        .collect::<Vec<_>>()
        .into_par_iter()
        .map(|s| (format!("seed={s}"), run(&Scenario { seed: s, ..sc.clone() })))
        .collect()
}

fn security(cfg: &SuiteConfig, b: &mut Builder) {
    for name in ["honest_onhi", "honest_offhi", "honest_lo"] {
        let sc = Scenario::named(name).expect("built-in");
        let ts = traces(cfg, &sc);
        let done = ts.iter().all(|(_, t)| t.aborts().is_empty() && has_tag(t, EventTag::TAccept));
        b.expect(fact(done, "incomplete honest run"), &format!("{name}.completes"), Status::Holds);
        agreements(b, name, &ts, HOLD4);
        secrecy(b, name, &ts, cfg.derive_bound);
    }

    let fz: Vec<(String, Trace)> = seeds(cfg)
        .collect::<Vec<_>>()
        .into_par_iter()
        .map(|s| (format!("seed={s}"), run(&fuzz_scenario(s))))
        .collect();
    agreements(b, "fuzz", &fz, HOLD4);
    secrecy(b, "fuzz", &fz, cfg.derive_bound);

    let wrong = traces(cfg, &Scenario::named("wrong_pin_offhi").expect("built-in"));
    let refused = wrong.iter().all(|(_, t)| !has_tag(t, EventTag::TAccept));
    b.expect(fact(refused, "wrong PIN accepted"), "wrong_pin.refused", Status::Holds);
    agreements(b, "wrong_pin", &wrong, HOLD4);

    let replay = Scenario::named("cryptogram_replay").expect("built-in");
    let on = traces(cfg, &replay);
    let caught = on.iter().all(|(_, t)| has_abort(t, AbortReason::Replay));
    b.expect(fact(caught, "replay not rejected"), "replay_on.rejected", Status::Holds);
    agreements(b, "replay_on", &on, HOLD4);
    let off_sc = Scenario { options: Options { replay_check: false, ..replay.options }, ..replay };
    let off = traces(cfg, &off_sc);
    let served = off.iter().all(|(_, t)| {
        t.events().iter().filter(|e| e.tag == EventTag::BComTC).count() >= 2
            && !has_abort(t, AbortReason::Replay)
    });
    b.expect(fact(served, "replay not served"), "replay_off.accepted", Status::Holds);
    // The replayed request has one terminal run and one card run behind it
    // but is committed twice by the bank.
    agreements(
        b,
        "replay_off",
        &off,
        [Status::Holds, Status::Holds, Status::Violated, Status::Violated],
    );
}

/// Runs every strategy of the catalog on `sc` in both worlds.
fn unlinkable(cfg: &SuiteConfig, sc: &Scenario, strategies: &[String]) -> Verdict {
    let runs: Vec<(String, Verdict)> = strategies
        .par_iter()
        .map(|s| {
            let sc = Scenario { strategy: s.clone(), ..sc.clone() };
            let p = run_paired(&sc).unwrap_or_else(|e| panic!("paired run failed: {e}"));
            (format!("strategy={s}"), distinguish(&p, cfg.test_bound))
        })
        .collect();
    let bound = format!(
        "bounded: no distinguisher up to (sessions {}, bound {}, strategies {})",
        sc.sessions.len(),
        cfg.test_bound,
        strategies.len()
    );
    fold(runs, Status::BoundedPass, Some(bound))
}

/// Real-vs-ideal UTX settings with at most `sessions` card sessions.
pub fn unlinkability_scenarios(cfg: &SuiteConfig) -> Vec<(&'static str, Scenario)> {
    let base = Scenario {
        terminals: vec![(Mode::OnHi, 1), (Mode::OffHi, 1), (Mode::Lo, 1)],
        options: Options { replay_check: false, ..Options::default() },
        seed: cfg.seed,
        ..Scenario::default()
    };
    let cut = |mut v: Vec<(usize, usize)>| {
        v.truncate(cfg.sessions.max(1));
        v
    };
    vec![
        (
            "one_card",
            Scenario { sessions: cut(vec![(0, 0), (0, 1), (0, 2)]), ..base.clone() },
        ),
        (
            "two_cards",
            Scenario {
                cards: vec![1, 1],
                sessions: cut(vec![(0, 2), (1, 0), (0, 1)]),
                ..base.clone()
            },
        ),
    ]
}

fn unlinkability(cfg: &SuiteConfig, b: &mut Builder) {
    let all = builtin_strategies();
    for (name, sc) in unlinkability_scenarios(cfg) {
        b.expect(unlinkable(cfg, &sc, &all), &format!("utx.{name}"), Status::BoundedPass);
    }
    let probe = Scenario::named("month_probe").expect("built-in");
    let probe = Scenario { options: Options { replay_check: false, ..probe.options }, ..probe };
    let v = unlinkable(cfg, &probe, &["month_probe".into(), "passive".into(), "harvest".into()]);
    b.expect(v, "utx.month_probe", Status::BoundedPass);
}

/// Expected answer of a two-month pointer card at pointer `p` asked for
/// month `m`: the new pointer, or the abort.
fn pointer_rule(p: u32, m: u32) -> Result<u32, AbortReason> {
    if m + 1 < p {
        Err(AbortReason::StaleMonth)
    } else {
        Ok(p.max(m))
    }
}

fn window_matrix(horizon: u32) -> Verdict {
    let mut fresh = FreshSource::new();
    let auth = Authority::new(horizon, &mut fresh);
    for p in 0..horizon {
        for m in 0..horizon {
            let mut card = issue_card(&auth, p, CardKind::Utx, &mut fresh).expect("within horizon");
            let got = card.answer_month(m).map(|_| match card.months {
                MonthState::Pointer(q) => q,
                MonthState::Window(_) => unreachable!("pointer card"),
            });
            if got != pointer_rule(p, m) {
                return fact(false, &format!("pointer {p} month {m}: {got:?}"));
            }
        }
    }
    fact(true, "")
}

/// The multi-month card walks through its window: the first two months
/// answer without moving, the third answers and shifts, and the month that
/// dropped out is refused afterwards.
fn shift_branches() -> Verdict {
    let mut fresh = FreshSource::new();
    let auth = Authority::new(4, &mut fresh);
    let mut card: Card = issue_multimonth_card(&auth, 0, &mut fresh).expect("within horizon");
    let expected: [(u32, Result<(), AbortReason>, Vec<u32>); 6] = [
        (0, Ok(()), vec![0, 1, 2]),
        (1, Ok(()), vec![0, 1, 2]),
        (2, Ok(()), vec![1, 2, 3]),
        (0, Err(AbortReason::UnknownMonth), vec![1, 2, 3]),
        (3, Ok(()), vec![2, 3]),
        (1, Err(AbortReason::UnknownMonth), vec![2, 3]),
    ];
    for (i, (m, res, window)) in expected.into_iter().enumerate() {
        let got = card.answer_month(m).map(|_| ());
        if got != res || card.months != MonthState::Window(window.clone()) {
            return fact(false, &format!("step {i} month {m}: {got:?} {:?}", card.months));
        }
    }
    fact(true, "")
}

fn multimonth(cfg: &SuiteConfig, b: &mut Builder) {
    b.expect(window_matrix(3), "window_matrix", Status::Holds);
    b.expect(shift_branches(), "shift_branches", Status::Holds);
    let probe = run(&Scenario::named("month_probe").expect("built-in"));
    b.expect(
        fact(has_abort(&probe, AbortReason::StaleMonth), "no stale-month abort"),
        "stale_probe",
        Status::Holds,
    );
    let mm = Scenario { seed: cfg.seed, ..Scenario::named("utxmm").expect("built-in") };
    b.expect(unlinkable(cfg, &mm, &builtin_strategies()), "utxmm.paired", Status::BoundedPass);
}

fn utxl(cfg: &SuiteConfig, b: &mut Builder) {
    let lo = Scenario { seed: cfg.seed, ..Scenario::named("utxl").expect("built-in") };
    let mut strategies = builtin_strategies();
    strategies.push("pin_probe".into());
    strategies.dedup();
    b.hypothesis(unlinkable(cfg, &lo, &strategies), "lo_only.paired", Status::BoundedPass);

    let t = run(&lo);
    let pins: Vec<Term> = t
        .outputs()
        .into_iter()
        .filter(|(_, i, _)| *i == 1)
        .filter_map(|(slot, _, term)| {
            t.records
                .iter()
                .any(|r| matches!(r, Record::Step { action: Action::StartCard { slot: s, .. }, .. } if *s == slot))
                .then(|| term.clone())
        })
        .collect();
    b.expect(check_secrecy(&t.frame, &pins, cfg.derive_bound), "pin_secrecy", Status::Violated);

    let hi = Scenario {
        terminals: vec![(Mode::Lo, 1), (Mode::OnHi, 1)],
        sessions: vec![(0, 0), (0, 1)],
        strategy: "pin_probe".into(),
        ..lo
    };
    b.expect(unlinkable(cfg, &hi, &["pin_probe".into()]), "with_hi.paired", Status::Violated);
}

fn controls(cfg: &SuiteConfig, b: &mut Builder) {
    let paired = |name: &str, strategies: &[&str]| {
        let sc = Scenario { seed: cfg.seed, ..Scenario::named(name).expect("built-in") };
        let s: Vec<String> = strategies.iter().map(|s| s.to_string()).collect();
        unlinkable(cfg, &sc, &s)
    };
    b.expect(paired("bdh", &["key_probe"]), "bdh.paired", Status::Violated);
    b.expect(paired("ubdh", &["key_probe", "passive"]), "ubdh.paired", Status::BoundedPass);

    let violated_tc = [Status::Violated, Status::Holds, Status::Holds, Status::Holds];
    for name in ["compromised_terminal", "leaked_chi"] {
        let ts = traces(cfg, &Scenario::named(name).expect("built-in"));
        agreements(b, name, &ts, violated_tc);
    }
}

/// Runs a named suite.
pub fn run_suite(name: SuiteName, cfg: &SuiteConfig) -> Result<SuiteReport, HarnessError> {
    if cfg.seeds == 0 {
        return Err(HarnessError::ScenarioInvalid("a suite needs at least one seed".into()));
    }
    let mut b = Builder { prefix: name.to_string(), checks: Vec::new() };
    match name {
        SuiteName::Security => security(cfg, &mut b),
        SuiteName::Unlinkability => unlinkability(cfg, &mut b),
        SuiteName::Multimonth => multimonth(cfg, &mut b),
        SuiteName::Utxl => utxl(cfg, &mut b),
        SuiteName::Controls => controls(cfg, &mut b),
    }
    Ok(SuiteReport { suite: name, checks: b.checks })
}
