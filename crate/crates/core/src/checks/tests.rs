use super::*;
use crate::harness::{run_paired, run_scenario, Record, Scenario, World};
use crate::roles::{Event, RoleKind};

fn ev(tag: EventTag, args: Vec<Term>) -> Record {
    Record::Event(Event { tag, args, role: crate::harness::role_of(tag), session: 0 })
}

fn d(s: &str) -> Term {
    Term::Name(crate::term::Name::data(s))
}

fn six(x: &str) -> Vec<Term> {
    (0..6).map(|i| d(&format!("{x}{i}"))).collect()
}

fn trace(records: Vec<Record>) -> Trace {
    let mut t = Trace::new(World::Real);
    t.records = records;
    t
}

#[test]
fn honest_trace_satisfies_all_correspondences() {
    for name in ["honest_onhi", "honest_offhi", "honest_lo"] {
        let t = run_scenario(&Scenario::named(name).unwrap()).unwrap();
        for v in check_all_agreements(&t) {
            assert_eq!(v.status, Status::Holds, "{name}: {v}");
        }
    }
}

#[test]
fn empty_trace_holds_vacuously() {
    let t = Trace::new(World::Real);
    assert!(check_all_agreements(&t).iter().all(|v| v.status == Status::Holds));
    assert_eq!(check_secrecy(&t.frame, &[], 8).status, Status::Holds);
}

#[test]
fn missing_run_event_is_a_violation() {
    let t = trace(vec![ev(EventTag::TComC, six("a"))]);
    let v = check_agreement(&t, Correspondence::TerminalCard);
    assert_eq!(v.status, Status::Violated);
    assert!(v.witness.unwrap().starts_with("unmatched"));
}

#[test]
fn differing_arguments_do_not_match() {
    let t = trace(vec![ev(EventTag::CRun, six("a")), ev(EventTag::TComC, six("b"))]);
    assert!(check_agreement(&t, Correspondence::TerminalCard).is_violated());
}

#[test]
fn duplicate_commit_breaks_injectivity() {
    // Two bank commits on one request, one terminal run behind it:
    // counting the multiset shows 2 triggers against 1 obligation.
    let req = d("req");
    let mut trbc = vec![req.clone()];
    trbc.extend(six("a"));
    let t = trace(vec![
        ev(EventTag::CRun, six("a")),
        ev(EventTag::TRunBC, trbc),
        ev(EventTag::BComTC, vec![req.clone()]),
        ev(EventTag::BComTC, vec![req]),
    ]);
    let v = check_agreement(&t, Correspondence::BankTerminal);
    assert_eq!(v.status, Status::Violated);
    assert!(v.witness.unwrap().starts_with("not-injective"));
}

#[test]
fn matching_needs_backtracking_not_greedy_choice() {
    // Trigger x can use run 1 or 2, trigger y only run 1.
    let t = trace(vec![
        ev(EventTag::CRunB, vec![d("m")]),
        ev(EventTag::CRunB, vec![d("m")]),
        ev(EventTag::BComC, vec![d("m")]),
        ev(EventTag::BComC, vec![d("m")]),
    ]);
    assert_eq!(check_agreement(&t, Correspondence::BankCard).status, Status::Holds);
}

#[test]
fn agreement_is_order_insensitive() {
    let t = run_scenario(&Scenario {
        sessions: vec![(0, 0), (0, 0)],
        ..Scenario::default()
    })
    .unwrap();
    let mut rev = t.clone();
    rev.records.reverse();
    assert_eq!(check_all_agreements(&t), check_all_agreements(&rev).into_iter().map(|mut v| {
        v.steps.clear();
        v
    }).collect::<Vec<_>>());
}

#[test]
fn compromised_terminal_breaks_only_terminal_card_agreement() {
    let t = run_scenario(&Scenario::named("compromised_terminal").unwrap()).unwrap();
    let got: Vec<Status> = check_all_agreements(&t).iter().map(|v| v.status).collect();
    assert_eq!(got, [Status::Violated, Status::Holds, Status::Holds, Status::Holds]);
}

#[test]
fn violation_witness_replays() {
    let sc = Scenario::named("compromised_terminal").unwrap();
    let v = check_agreement(&run_scenario(&sc).unwrap(), Correspondence::TerminalCard);
    let again = check_agreement(&run_scenario(&sc).unwrap(), Correspondence::TerminalCard);
    assert_eq!(v, again);
    assert!(!v.steps.is_empty());
}

#[test]
fn honest_secrets_stay_secret_and_leaked_pin_does_not() {
    let t = run_scenario(&Scenario::named("honest_onhi").unwrap()).unwrap();
    assert_eq!(check_secrecy(&t.frame, &t.secrets, 8).status, Status::Holds);
    let t = run_scenario(&Scenario::named("utxl").unwrap()).unwrap();
    let pin = t.outputs().into_iter().find(|o| o.0 == 2 && o.1 == 1).unwrap().2.clone();
    let v = check_secrecy(&t.frame, &[pin], 8);
    assert_eq!(v.status, Status::Violated);
    assert!(v.witness.unwrap().contains("(var "), "recipe is an alias");
}

#[test]
fn distinguish_finds_bdh_link_and_not_ubdh() {
    let bdh = run_paired(&Scenario::named("bdh").unwrap()).unwrap();
    assert_eq!(distinguish(&bdh, 6).status, Status::Violated);
    let ubdh = run_paired(&Scenario::named("ubdh").unwrap()).unwrap();
    assert_eq!(distinguish(&ubdh, 6).status, Status::BoundedPass);
}

#[test]
fn distinguish_is_symmetric() {
    for name in ["bdh", "ubdh", "honest_lo"] {
        let p = run_paired(&Scenario::named(name).unwrap()).unwrap();
        let swapped = crate::harness::PairedRun {
            real: p.ideal.clone(),
            ideal: p.real.clone(),
            misaligned_at: p.misaligned_at,
        };
        assert_eq!(distinguish(&p, 6).status, distinguish(&swapped, 6).status, "{name}");
    }
}

#[test]
fn aborts_are_observable() {
    let p = run_paired(&Scenario::default()).unwrap();
    let mut q = p.clone();
    q.ideal.records.push(Record::Abort {
        role: RoleKind::Terminal,
        slot: 1,
        reason: crate::roles::AbortReason::BankReject,
    });
    assert_eq!(distinguish(&p, 4).status, Status::BoundedPass);
    assert_eq!(distinguish(&q, 4).status, Status::Violated);
}

#[test]
fn status_and_correspondence_names_round_trip() {
    for s in [Status::Holds, Status::Violated, Status::BoundedPass] {
        assert_eq!(s.to_string().parse::<Status>().unwrap(), s);
    }
    for c in Correspondence::ALL {
        assert_eq!(c.name().parse::<Correspondence>().unwrap(), c);
    }
}
