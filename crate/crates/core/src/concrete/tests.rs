use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::*;

fn s(x: &str) -> Term {
    Term::Name(Name::scalar(x))
}

fn env_with(pairs: &[(&str, u64)]) -> GroupEnv {
    let mut env = GroupEnv::default();
    for (n, v) in pairs {
        env.set(&Name::scalar(*n), Value::Scalar(*v));
    }
    env
}

/// Recursive square-and-multiply, written independently of the backend.
fn modpow(b: u64, e: u64, m: u64) -> u64 {
    if e == 0 {
        return 1;
    }
    let half = modpow(b, e / 2, m) as u128;
    let sq = half * half % m as u128;
    (if e % 2 == 1 { sq * b as u128 % m as u128 } else { sq }) as u64
}

#[test]
fn parameters_form_a_prime_order_subgroup() {
    assert_eq!(P, 2 * Q + 1);
    assert_eq!(modpow(G, Q, P), 1);
    assert_ne!(G % P, 1);
}

#[test]
fn scalar_multiplication_is_exponentiation() {
    let env = env_with(&[("a", 12345)]);
    let v = eval(&Term::smult(s("a"), Term::gen()), &env).unwrap();
    assert_eq!(v, Value::Point(modpow(G, 12345, P)));
}

#[test]
fn key_agreement_identity_holds_numerically() {
    let (a, c, t) = (987_654_321u64, 123_456_789u64, 555_555u64);
    let env = env_with(&[("a", a), ("c", c), ("t", t)]);
    let z1 = Term::smult(s("t"), Term::gen());
    let z2 = Term::smult(s("a"), Term::smult(s("c"), Term::gen()));
    let kc = Term::hash(Term::smult(Term::mult(s("a"), s("c")), z1));
    let kt = Term::hash(Term::smult(s("t"), z2));
    assert_eq!(eval(&kc, &env).unwrap(), eval(&kt, &env).unwrap());
    // Direct modular arithmetic: g^(a·c·t).
    let act = (a as u128 * c as u128 % Q as u128 * t as u128 % Q as u128) as u64;
    let raw = Term::smult(s("a"), Term::smult(s("c"), Term::smult(s("t"), Term::gen())));
    assert_eq!(eval(&raw, &env).unwrap(), Value::Point(modpow(G, act, P)));
}

#[test]
fn blinded_certificate_verifies_to_blinded_key() {
    let (a, c) = (31_337u64, 4_242u64);
    let env = env_with(&[("a", a), ("c", c), ("chi", 777)]);
    let cert = Term::sigv(s("chi"), Term::smult(s("c"), Term::gen()));
    let raw = Term::CheckSigv(
        Box::new(Term::pkv(s("chi"))),
        Box::new(Term::SMult(Box::new(s("a")), Box::new(cert))),
    );
    let ac = (a as u128 * c as u128 % Q as u128) as u64;
    assert_eq!(eval(&raw, &env).unwrap(), Value::Point(modpow(G, ac, P)));
}

#[test]
fn wrong_keys_get_stuck() {
    let env = env_with(&[("k", 5), ("j", 6), ("chi", 7), ("psi", 8)]);
    let dec = Term::Dec(Box::new(s("j")), Box::new(Term::enc(Term::ok(), s("k"))));
    assert!(matches!(eval(&dec, &env).unwrap(), Value::Stuck(_)));
    let cv = Term::CheckSigv(Box::new(Term::pkv(s("psi"))), Box::new(Term::sigv(s("chi"), Term::gen())));
    assert!(matches!(eval(&cv, &env).unwrap(), Value::Stuck(_)));
    let pr = Term::Proj(3, Box::new(Term::pair(Term::ok(), Term::bot())));
    assert!(matches!(eval(&pr, &env).unwrap(), Value::Stuck(_)));
}

#[test]
fn encryption_round_trips_and_hash_differs_from_identity() {
    let mut env = GroupEnv::default();
    let m = Term::tuple(vec![Term::ok(), Term::Name(Name::data("d")), Term::gen()]);
    env.sample([&m, &s("k")], &mut ChaCha8Rng::seed_from_u64(1));
    let back = Term::Dec(Box::new(s("k")), Box::new(Term::enc(m.clone(), s("k"))));
    assert_eq!(eval(&back, &env).unwrap(), eval(&m, &env).unwrap());
    assert_ne!(eval(&Term::hash(m.clone()), &env).unwrap(), eval(&m, &env).unwrap());
}

#[test]
fn unvalued_names_and_variables_are_errors() {
    let env = GroupEnv::default();
    assert!(matches!(eval(&s("nope"), &env), Err(EvalError::UnvaluedName(_))));
    assert_eq!(eval(&Term::var(3), &env), Err(EvalError::Variable(3)));
}

#[test]
fn differential_test_finds_no_soundness_violation() {
    let r = differential_test(2_000, 6, 7);
    assert_eq!(r.soundness_violations, 0, "{:?}", r.first_violation);
    assert!(r.symbolic_equal > 500, "{r}");
    assert!(r.collision_rate() <= diff::MAX_COLLISION_RATE, "{r}");
}

#[test]
fn identical_terms_evaluate_equal() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..200 {
        let t = diff::random_raw_term(&mut rng, 5);
        let mut env = GroupEnv::default();
        env.sample([&t], &mut rng);
        assert_eq!(eval(&t, &env).unwrap(), eval(&t.clone(), &env).unwrap());
    }
}
