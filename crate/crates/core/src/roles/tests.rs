use super::*;
use crate::setup::{issue_card, issue_multimonth_card, provision_terminal, Authority, BankCredential, FreshSource};
use crate::term::{Const, Name};

struct World {
    fresh: FreshSource,
    auth: Authority,
    bank: Bank,
    cred: BankCredential,
}

fn world(replay_check: bool) -> World {
    let mut fresh = FreshSource::new();
    let auth = Authority::new(3, &mut fresh);
    let cred = BankCredential::new(&auth, &mut fresh);
    let bank = Bank::new(cred.b_t.clone(), replay_check);
    World { fresh, auth, bank, cred }
}

fn new_card(w: &mut World, month: u32, kind: CardKind) -> Card {
    let card = issue_card(&w.auth, month, kind, &mut w.fresh).unwrap();
    w.bank.register(
        Term::name(&card.secrets.pan),
        DbEntry {
            pin: card.pin(),
            mk: Term::name(&card.secrets.mk),
            pk_c: card.secrets.pk_c.clone(),
        },
    );
    card
}

#[derive(Default)]
struct Log {
    card_out: Vec<Term>,
    terminal_out: Vec<Term>,
    events: Vec<Event>,
    aborts: Vec<AbortReason>,
}

impl Log {
    fn take(&mut self, step: Step, card: bool) -> Vec<Term> {
        self.events.extend(step.events);
        self.aborts.extend(step.abort);
        if card {
            self.card_out.extend(step.out.iter().cloned());
        } else {
            self.terminal_out.extend(step.out.iter().cloned());
        }
        step.out
    }
    fn tags(&self) -> Vec<EventTag> {
        self.events.iter().map(|e| e.tag).collect()
    }
}

/// Wires one card, one terminal and one bank session together with no
/// attacker in between.
fn honest_run(w: &mut World, card: &mut Card, config: &TerminalConfig, pin: Term) -> (Log, CardSession, TerminalSession) {
    let mut log = Log::default();
    let mut cs = card_start(0);
    let (mut ts, st) = terminal_start(config, 1, false, &mut w.fresh);
    let bs = BankSession { id: 2, kbt: config.kbt.clone() };
    let z1 = log.take(st, false);
    let z2 = log.take(card_step(card, &mut cs, &z1[0], &mut w.fresh), true);
    let ec = log.take(terminal_step(config, &mut ts, &TerminalInput::Net(z2[0].clone())), false);
    let n = log.take(card_step(card, &mut cs, &ec[0], &mut w.fresh), true);
    let mut etx = log.take(terminal_step(config, &mut ts, &TerminalInput::Net(n[0].clone())), false);
    if config.mode.is_hi() {
        assert!(etx.is_empty());
        assert_eq!(ts.stage, TerminalStage::AwaitPin);
        etx = log.take(terminal_step(config, &mut ts, &TerminalInput::Pin(pin)), false);
    }
    let y = log.take(card_step(card, &mut cs, &etx[0], &mut w.fresh), true);
    let req = log.take(terminal_step(config, &mut ts, &TerminalInput::Net(y[0].clone())), false);
    let resp = log.take(bank_step(&mut w.bank, &bs, req.last().unwrap()), false);
    log.take(terminal_step(config, &mut ts, &TerminalInput::Net(resp[0].clone())), false);
    (log, cs, ts)
}

fn request(log: &Log) -> Term {
    log.events.iter().find(|e| e.tag == EventTag::TRunBC).unwrap().args[0].clone()
}

fn auth() -> Term {
    Term::constant(Const::Auth)
}

#[test]
fn honest_runs_complete_in_every_mode() {
    for mode in Mode::ALL {
        let mut w = world(true);
        let mut card = new_card(&mut w, 1, CardKind::Utx);
        let (config, _) = provision_terminal(&w.auth, &w.cred, 1, mode, &mut w.fresh).unwrap();
        let pin = card.pin();
        let (log, cs, ts) = honest_run(&mut w, &mut card, &config, pin);
        assert!(log.aborts.is_empty(), "{mode}: {:?}", log.aborts);
        assert_eq!(log.terminal_out.iter().filter(|t| **t == auth()).count(), 1, "{mode}");
        assert_eq!(ts.stage, TerminalStage::Done);
        assert_eq!(cs.stage, CardStage::C7);
        assert_eq!(cs.k_c, ts.k_t);
        use EventTag::*;
        assert_eq!(
            log.tags(),
            vec![CRunB, CRun, TComC, TRunBC, BComC, BRunT, BComTC, TComBC, TAccept],
            "{mode}"
        );
    }
}

#[test]
fn offline_pin_ok_sends_auth_before_the_bank_request() {
    let mut w = world(true);
    let mut card = new_card(&mut w, 1, CardKind::Utx);
    let (config, _) = provision_terminal(&w.auth, &w.cred, 1, Mode::OffHi, &mut w.fresh).unwrap();
    let pin = card.pin();
    let (log, _, _) = honest_run(&mut w, &mut card, &config, pin);
    let pos = log.terminal_out.iter().position(|t| *t == auth()).unwrap();
    assert!(matches!(log.terminal_out[pos + 1], Term::Enc(..)));
}

#[test]
fn event_arities_match_the_schema() {
    for mode in Mode::ALL {
        let mut w = world(true);
        let mut card = new_card(&mut w, 1, CardKind::Utx);
        let (config, _) = provision_terminal(&w.auth, &w.cred, 1, mode, &mut w.fresh).unwrap();
        let pin = card.pin();
        let (log, _, _) = honest_run(&mut w, &mut card, &config, pin);
        for e in &log.events {
            assert_eq!(e.args.len(), e.tag.arity(), "{}", e.tag);
        }
        // Terminal and card agree on the six exchanged messages.
        let crun = log.events.iter().find(|e| e.tag == EventTag::CRun).unwrap();
        let tcomc = log.events.iter().find(|e| e.tag == EventTag::TComC).unwrap();
        assert_eq!(crun.args, tcomc.args);
        let crunb = log.events.iter().find(|e| e.tag == EventTag::CRunB).unwrap();
        let bcomc = log.events.iter().find(|e| e.tag == EventTag::BComC).unwrap();
        assert_eq!(crunb.args, bcomc.args);
    }
}

/// True if `needle` occurs in `t` outside every encryption body.
fn exposed(t: &Term, needle: &Term) -> bool {
    if t == needle {
        return true;
    }
    match t {
        Term::Enc(_, key) => exposed(key, needle),
        _ => t.children().into_iter().any(|c| exposed(c, needle)),
    }
}

#[test]
fn card_secrets_only_leave_encrypted() {
    // `c` itself only ever appears blinded, inside a product with `a`.
    for mode in Mode::ALL {
        let mut w = world(true);
        let mut card = new_card(&mut w, 1, CardKind::Utx);
        let (config, _) = provision_terminal(&w.auth, &w.cred, 1, mode, &mut w.fresh).unwrap();
        let pin = card.pin();
        let (log, _, _) = honest_run(&mut w, &mut card, &config, pin);
        let s = &card.secrets;
        for out in &log.card_out {
            for needle in [
                s.pk_c.clone(),
                Term::name(&s.pan),
                Term::name(&s.pin),
                Term::name(&s.mk),
            ] {
                assert!(!exposed(out, &needle), "{needle} exposed in {out}");
            }
        }
    }
}

#[test]
fn wrong_pin_offline_is_flagged_and_rejected() {
    let mut w = world(true);
    let mut card = new_card(&mut w, 1, CardKind::Utx);
    let (config, _) = provision_terminal(&w.auth, &w.cred, 1, Mode::OffHi, &mut w.fresh).unwrap();
    let wrong = Term::name(&Name::data("wrong"));
    let (log, _, _) = honest_run(&mut w, &mut card, &config, wrong);
    let crunb = log.events.iter().find(|e| e.tag == EventTag::CRunB).unwrap();
    let k = Term::hash(Term::smult(
        Term::name(&w.bank.b_t),
        log.events.iter().find(|e| e.tag == EventTag::CRun).unwrap().args[1].clone(),
    ));
    let ac = Term::proj(1, Term::dec(k, crunb.args[0].clone()));
    assert_eq!(Term::proj(4, ac), Term::constant(Const::No));
    assert!(log.tags().contains(&EventTag::BReject));
    assert_eq!(log.aborts, vec![AbortReason::BankReject]);
    assert!(!log.terminal_out.contains(&auth()));
}

#[test]
fn wrong_pin_online_is_rejected_by_the_bank() {
    let mut w = world(true);
    let mut card = new_card(&mut w, 1, CardKind::Utx);
    let (config, _) = provision_terminal(&w.auth, &w.cred, 1, Mode::OnHi, &mut w.fresh).unwrap();
    let (log, _, _) = honest_run(&mut w, &mut card, &config, Term::name(&Name::data("wrong")));
    assert!(log.tags().contains(&EventTag::BReject));
    assert_eq!(log.aborts, vec![AbortReason::BankReject]);
}

#[test]
fn replayed_request_is_refused_only_with_the_check_on() {
    for check in [true, false] {
        let mut w = world(check);
        let mut card = new_card(&mut w, 1, CardKind::Utx);
        let (config, _) = provision_terminal(&w.auth, &w.cred, 1, Mode::Lo, &mut w.fresh).unwrap();
        let (log, _, _) = honest_run(&mut w, &mut card, &config, Term::bot());
        let req = request(&log);
        let bs = BankSession { id: 9, kbt: config.kbt.clone() };
        let again = bank_step(&mut w.bank, &bs, &req);
        if check {
            assert_eq!(again.abort, Some(AbortReason::Replay));
        } else {
            assert_eq!(again.abort, None);
            assert!(again.events.iter().any(|e| e.tag == EventTag::BComTC));
        }
    }
}

#[test]
fn bank_refuses_foreign_cards_and_bad_blinding() {
    let mut w = world(true);
    let mut card = new_card(&mut w, 1, CardKind::Utx);
    let (config, _) = provision_terminal(&w.auth, &w.cred, 1, Mode::Lo, &mut w.fresh).unwrap();
    let (log, _, _) = honest_run(&mut w, &mut card, &config, Term::bot());
    let req = request(&log);
    let kbt = Term::name(&config.kbt);
    let body = Term::dec(kbt.clone(), req);
    let bs = BankSession { id: 9, kbt: config.kbt.clone() };
    let mut fresh_bank = Bank::new(w.bank.b_t.clone(), true);
    assert_eq!(bank_step(&mut fresh_bank, &bs, &Term::enc(body.clone(), kbt.clone())).abort, Some(AbortReason::UnknownPAN));
    // Same cryptogram presented with a different z2: the bank cannot open it.
    let mut items = match body {
        Term::Tuple(items) => items,
        _ => unreachable!(),
    };
    items[1] = Term::smult(Term::name(&Name::scalar("e")), Term::gen());
    let forged = Term::enc(Term::tuple(items), kbt);
    assert_eq!(bank_step(&mut w.bank, &bs, &forged).abort, Some(AbortReason::MalformedInput));
}

#[test]
fn terminal_rejects_a_month_certificate_for_another_key() {
    let mut w = world(true);
    let mut card = new_card(&mut w, 1, CardKind::Utx);
    let (config, _) = provision_terminal(&w.auth, &w.cred, 1, Mode::OnHi, &mut w.fresh).unwrap();
    let (mut ts, st) = terminal_start(&config, 1, false, &mut w.fresh);
    let mut cs = card_start(0);
    let z2 = card_step(&mut card, &mut cs, &st.out[0], &mut w.fresh).out;
    let ec = terminal_step(&config, &mut ts, &TerminalInput::Net(z2[0].clone())).out;
    let _ = card_step(&mut card, &mut cs, &ec[0], &mut w.fresh);
    // A certificate on some other point, encrypted under the session key.
    let other = Term::smult(Term::name(&Name::scalar("e")), Term::gen());
    let n = Term::enc(Term::pair(z2[0].clone(), other), ts.k_t.clone());
    let step = terminal_step(&config, &mut ts, &TerminalInput::Net(n));
    assert_eq!(step.abort, Some(AbortReason::BadMonthCert));
}

#[test]
fn card_month_window_has_width_two() {
    let mut w = world(true);
    for asked in 0..3u32 {
        for pointer in 0..3u32 {
            let mut card = new_card(&mut w, 0, CardKind::Utx);
            card.months = MonthState::Pointer(pointer);
            let got = card.answer_month(asked);
            if asked + 1 < pointer {
                assert_eq!(got, Err(AbortReason::StaleMonth));
                assert_eq!(card.months, MonthState::Pointer(pointer));
            } else {
                assert!(got.is_ok());
                assert_eq!(card.months, MonthState::Pointer(pointer.max(asked)));
            }
        }
    }
}

#[test]
fn multimonth_window_shifts_on_its_last_month() {
    let mut fresh = FreshSource::new();
    let auth = Authority::new(4, &mut fresh);
    let mut card = issue_multimonth_card(&auth, 0, &mut fresh).unwrap();
    assert!(card.answer_month(1).is_ok());
    assert_eq!(card.months, MonthState::Window(vec![0, 1, 2]));
    assert!(card.answer_month(2).is_ok());
    assert_eq!(card.months, MonthState::Window(vec![1, 2, 3]));
    assert_eq!(card.answer_month(0), Err(AbortReason::UnknownMonth));
    assert!(card.answer_month(1).is_ok());
}

#[test]
fn contactless_card_refuses_a_pin() {
    let mut w = world(true);
    let mut card = new_card(&mut w, 1, CardKind::Contactless);
    let (config, _) = provision_terminal(&w.auth, &w.cred, 1, Mode::OffHi, &mut w.fresh).unwrap();
    let pin = card.pin();
    let (log, _, _) = honest_run_until_cryptogram(&mut w, &mut card, &config, pin);
    assert_eq!(log.aborts, vec![AbortReason::PinOverContactless]);
}

fn honest_run_until_cryptogram(w: &mut World, card: &mut Card, config: &TerminalConfig, pin: Term) -> (Log, CardSession, TerminalSession) {
    let mut log = Log::default();
    let mut cs = card_start(0);
    let (mut ts, st) = terminal_start(config, 1, false, &mut w.fresh);
    let z1 = log.take(st, false);
    let z2 = log.take(card_step(card, &mut cs, &z1[0], &mut w.fresh), true);
    let ec = log.take(terminal_step(config, &mut ts, &TerminalInput::Net(z2[0].clone())), false);
    let n = log.take(card_step(card, &mut cs, &ec[0], &mut w.fresh), true);
    log.take(terminal_step(config, &mut ts, &TerminalInput::Net(n[0].clone())), false);
    let etx = log.take(terminal_step(config, &mut ts, &TerminalInput::Pin(pin)), false);
    log.take(card_step(card, &mut cs, &etx[0], &mut w.fresh), true);
    (log, cs, ts)
}

#[test]
fn bdh_card_reveals_its_key_to_whoever_chose_z1() {
    let mut w = world(true);
    let mut card = new_card(&mut w, 1, CardKind::Bdh);
    let e = Term::name(&Name::scalar("e"));
    let mut cs = card_start(0);
    let out = card_step(&mut card, &mut cs, &Term::smult(e.clone(), Term::gen()), &mut w.fresh).out;
    assert_eq!(out.len(), 2);
    let k = Term::hash(Term::smult(e, out[0].clone()));
    assert_eq!(Term::proj(1, Term::dec(k, out[1].clone())), card.secrets.pk_c);
}

#[test]
fn ubdh_stops_after_the_month_certificate() {
    let mut w = world(true);
    let mut card = new_card(&mut w, 1, CardKind::Ubdh);
    let (config, _) = provision_terminal(&w.auth, &w.cred, 1, Mode::OnHi, &mut w.fresh).unwrap();
    let (mut ts, st) = terminal_start(&config, 1, true, &mut w.fresh);
    let mut cs = card_start(0);
    let z2 = card_step(&mut card, &mut cs, &st.out[0], &mut w.fresh).out;
    let ec = terminal_step(&config, &mut ts, &TerminalInput::Net(z2[0].clone())).out;
    let n = card_step(&mut card, &mut cs, &ec[0], &mut w.fresh).out;
    assert_eq!(cs.stage, CardStage::C7);
    let step = terminal_step(&config, &mut ts, &TerminalInput::Net(n[0].clone()));
    assert!(step.out.is_empty() && step.abort.is_none());
    assert_eq!(ts.stage, TerminalStage::Done);
}
