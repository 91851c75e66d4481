//! The terminal role in its three modes.

use super::{open_tuple, AbortReason, Event, EventTag, Mode, RoleKind, Step};
use crate::setup::FreshSource;
use crate::term::{Const, Name, Term};

/// Long-lived terminal configuration.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TerminalConfig {
    pub mode: Mode,
    /// `pkv(χ_MM)` for the terminal's month.
    pub pk_mm: Term,
    /// The bank certificate for the terminal's month.
    pub crt: Term,
    /// Key shared with the bank.
    pub kbt: Name,
    pub month: u32,
    /// When false the terminal skips the month-certificate signature check
    /// (compromised-terminal variant).
    pub checks_month_cert: bool,
}

/// Terminal session stages.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum TerminalStage {
    AwaitZ2,
    AwaitMonthCert,
    AwaitPin,
    AwaitCryptogram,
    AwaitBank,
    Done,
}

impl TerminalStage {
    /// Stage label in the `TONH` / `TOFH` / `TLO` numbering.
    pub fn label(self, mode: Mode) -> String {
        let prefix = match mode {
            Mode::OnHi => "TONH",
            Mode::OffHi => "TOFH",
            Mode::Lo => "TLO",
        };
        let n = match (self, mode) {
            (TerminalStage::AwaitZ2, _) => 2,
            (TerminalStage::AwaitMonthCert, _) => 4,
            (TerminalStage::AwaitPin, _) => 5,
            (TerminalStage::AwaitCryptogram, Mode::Lo) => 6,
            (TerminalStage::AwaitCryptogram, _) => 7,
            (TerminalStage::AwaitBank, Mode::Lo) => 8,
            (TerminalStage::AwaitBank, _) => 9,
            (TerminalStage::Done, Mode::Lo) => 10,
            (TerminalStage::Done, _) => 11,
        };
        format!("{prefix}{n}")
    }
}

/// Per-session terminal variables.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TerminalSession {
    pub id: usize,
    pub stage: TerminalStage,
    pub t: Name,
    pub tx: Term,
    pub z1: Term,
    pub z2: Term,
    pub k_t: Term,
    pub ec: Term,
    pub n: Term,
    pub etx: Term,
    pub upin: Term,
    pub y: Term,
    pub req: Term,
    pub auth_sent: bool,
    /// Stop after the month certificate has been verified.
    pub truncated: bool,
}

/// Input to a terminal: a network message or a PIN typed by the user on
/// the private keypad channel.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TerminalInput {
    Net(Term),
    Pin(Term),
}

/// Opens a terminal session: picks `t` and the transaction, and sends
/// `[t]g`.
pub fn terminal_start(
    config: &TerminalConfig,
    id: usize,
    truncated: bool,
    fresh: &mut FreshSource,
) -> (TerminalSession, Step) {
    let t = fresh.scalar("t");
    let txdata = fresh.data("txdata");
    let kind = if config.mode.is_hi() { Const::Hi } else { Const::Lo };
    let z1 = Term::smult(Term::name(&t), Term::gen());
    let s = TerminalSession {
        id,
        stage: TerminalStage::AwaitZ2,
        t,
        tx: Term::pair(Term::name(&txdata), Term::constant(kind)),
        z1: z1.clone(),
        z2: Term::bot(),
        k_t: Term::bot(),
        ec: Term::bot(),
        n: Term::bot(),
        etx: Term::bot(),
        upin: Term::bot(),
        y: Term::bot(),
        req: Term::bot(),
        auth_sent: false,
        truncated,
    };
    (s, Step::send(vec![z1]))
}

fn auth() -> Term {
    Term::constant(Const::Auth)
}

fn transcript(s: &TerminalSession) -> Vec<Term> {
    vec![
        s.z1.clone(),
        s.z2.clone(),
        s.ec.clone(),
        s.n.clone(),
        s.etx.clone(),
        s.y.clone(),
    ]
}

fn send_tx(config: &TerminalConfig, s: &mut TerminalSession) -> Step {
    let pin_for_card = if config.mode == Mode::OffHi { s.upin.clone() } else { Term::bot() };
    s.etx = Term::enc(Term::pair(s.tx.clone(), pin_for_card), s.k_t.clone());
    s.stage = TerminalStage::AwaitCryptogram;
    Step::send(vec![s.etx.clone()])
}

/// One terminal step.
pub fn terminal_step(config: &TerminalConfig, s: &mut TerminalSession, input: &TerminalInput) -> Step {
    let kbt = Term::name(&config.kbt);
    match (s.stage, input) {
        (TerminalStage::AwaitPin, TerminalInput::Pin(p)) => {
            s.upin = p.clone();
            send_tx(config, s)
        }
        (_, TerminalInput::Pin(_)) => Step::abort(AbortReason::UnexpectedInput),
        (TerminalStage::AwaitZ2, TerminalInput::Net(z2)) => {
            s.z2 = z2.clone();
            s.k_t = Term::hash(Term::smult(Term::name(&s.t), z2.clone()));
            s.ec = Term::enc(config.crt.clone(), s.k_t.clone());
            s.stage = TerminalStage::AwaitMonthCert;
            Step::send(vec![s.ec.clone()])
        }
        (TerminalStage::AwaitMonthCert, TerminalInput::Net(n)) => {
            s.stage = TerminalStage::Done;
            let Some(parts) = open_tuple(&s.k_t, n, 2) else {
                return Step::abort(AbortReason::MalformedInput);
            };
            let (b, b_s) = (&parts[0], &parts[1]);
            if config.checks_month_cert && Term::checkv(config.pk_mm.clone(), b_s.clone()) != *b {
                return Step::abort(AbortReason::BadMonthCert);
            }
            if *b != s.z2 {
                return Step::abort(AbortReason::BadMonthCert);
            }
            s.n = n.clone();
            if s.truncated {
                return Step::default();
            }
            if config.mode.is_hi() {
                s.stage = TerminalStage::AwaitPin;
                return Step::default();
            }
            send_tx(config, s)
        }
        (TerminalStage::AwaitCryptogram, TerminalInput::Net(y)) => {
            s.stage = TerminalStage::Done;
            let Some(parts) = open_tuple(&s.k_t, y, 3) else {
                return Step::abort(AbortReason::MalformedInput);
            };
            let (ehac, pin_v, tx) = (&parts[0], &parts[1], &parts[2]);
            if *tx != s.tx {
                return Step::abort(AbortReason::MalformedInput);
            }
            if config.mode == Mode::Lo && *pin_v == Term::constant(Const::No) {
                return Step::abort(AbortReason::MalformedInput);
            }
            s.y = y.clone();
            let pin_for_bank = if config.mode == Mode::OnHi { s.upin.clone() } else { Term::bot() };
            s.req = Term::enc(
                Term::tuple(vec![s.tx.clone(), s.z2.clone(), ehac.clone(), pin_for_bank]),
                kbt,
            );
            let mut args = transcript(s);
            let events = vec![
                Event::new(EventTag::TComC, args.clone(), RoleKind::Terminal, s.id),
                {
                    args.insert(0, s.req.clone());
                    Event::new(EventTag::TRunBC, args, RoleKind::Terminal, s.id)
                },
            ];
            let mut out = Vec::new();
            if config.mode == Mode::OffHi && *pin_v == Term::ok() {
                s.auth_sent = true;
                out.push(auth());
            }
            out.push(s.req.clone());
            s.stage = TerminalStage::AwaitBank;
            Step { out, events, abort: None }
        }
        (TerminalStage::AwaitBank, TerminalInput::Net(r)) => {
            s.stage = TerminalStage::Done;
            let Some(parts) = open_tuple(&kbt, r, 2) else {
                return Step::abort(AbortReason::MalformedInput);
            };
            if parts[0] != s.tx {
                return Step::abort(AbortReason::MalformedInput);
            }
            let mut args = transcript(s);
            args.insert(0, r.clone());
            args.insert(0, s.req.clone());
            let mut events = vec![Event::new(EventTag::TComBC, args, RoleKind::Terminal, s.id)];
            if parts[1] != Term::constant(Const::Accept) {
                return Step { out: vec![], events, abort: Some(AbortReason::BankReject) };
            }
            events.push(Event::new(
                EventTag::TAccept,
                vec![kbt, s.tx.clone()],
                RoleKind::Terminal,
                s.id,
            ));
            let out = if s.auth_sent { vec![] } else { vec![auth()] };
            Step { out, events, abort: None }
        }
        (TerminalStage::Done | TerminalStage::AwaitPin, TerminalInput::Net(_)) => {
            Step::abort(AbortReason::UnexpectedInput)
        }
    }
}
