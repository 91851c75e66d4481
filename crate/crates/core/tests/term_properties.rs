//! Property tests of the equational engine against the small-step rewriting
//! oracle.

mod oracles;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use utx_core::term::{equal_mod_e, normalize, parse as sexpr_parse, Name, Term};

fn term_from_seed(seed: u64, depth: usize) -> Term {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    oracles::random_term(&mut rng, depth)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(512))]

    #[test]
    fn normalize_is_idempotent(seed in any::<u64>(), depth in 1usize..=8) {
        let t = term_from_seed(seed, depth);
        let n = normalize(&t).unwrap();
        prop_assert_eq!(normalize(&n).unwrap(), n);
    }

    #[test]
    fn normal_form_is_independent_of_rewrite_order(seed in any::<u64>(), depth in 1usize..=8) {
        let t = term_from_seed(seed, depth);
        let n = normalize(&t).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9);
        for _ in 0..3 {
            prop_assert_eq!(&oracles::rewrite_randomly(&t, &mut rng), &n);
        }
    }

    #[test]
    fn printing_round_trips(seed in any::<u64>(), depth in 1usize..=6) {
        let n = normalize(&term_from_seed(seed, depth)).unwrap();
        let back = sexpr_parse(&n.to_string()).unwrap();
        prop_assert_eq!(back, n);
    }

    #[test]
    fn key_agreement_identity(a in "[a-z]{1,6}", c in "[a-z]{1,6}", t in "[a-z]{1,6}") {
        let (a, c, t) = (
            Term::Name(Name::scalar(format!("a_{a}"))),
            Term::Name(Name::scalar(format!("c_{c}"))),
            Term::Name(Name::scalar(format!("t_{t}"))),
        );
        // Card side: h([a·c] Z1) with Z1 = [t]g; terminal side: h([t] Z2)
        // with Z2 = [a] pk(c) and pk(c) = [c]g.
        let card = Term::Hash(Box::new(Term::SMult(
            Box::new(Term::Mult(vec![a.clone(), c.clone()])),
            Box::new(Term::SMult(Box::new(t.clone()), Box::new(Term::Gen))),
        )));
        let z2 = Term::SMult(Box::new(a), Box::new(Term::SMult(Box::new(c), Box::new(Term::Gen))));
        let term = Term::Hash(Box::new(Term::SMult(Box::new(t), Box::new(z2))));
        prop_assert!(equal_mod_e(&card, &term));
    }

    #[test]
    fn blinded_signature_identity(a in "[a-z]{1,6}", x in "[a-z]{1,6}", c in "[a-z]{1,6}") {
        let (a, x, c) = (
            Term::Name(Name::scalar(format!("a_{a}"))),
            Term::Name(Name::scalar(format!("x_{x}"))),
            Term::Name(Name::scalar(format!("c_{c}"))),
        );
        let pkc = Term::SMult(Box::new(c.clone()), Box::new(Term::Gen));
        let blinded = Term::SMult(
            Box::new(a.clone()),
            Box::new(Term::Sigv(Box::new(x.clone()), Box::new(pkc))),
        );
        let checked = Term::CheckSigv(Box::new(Term::Pkv(Box::new(x))), Box::new(blinded));
        let expected = Term::SMult(Box::new(Term::Mult(vec![a, c])), Box::new(Term::Gen));
        prop_assert!(equal_mod_e(&checked, &expected));
    }
}

#[test]
fn integrity_dec_needs_the_same_key() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..2000 {
        let m = oracles::random_term(&mut rng, 4);
        let k1 = normalize(&oracles::random_term(&mut rng, 3)).unwrap();
        let k2 = normalize(&oracles::random_term(&mut rng, 3)).unwrap();
        let m = normalize(&m).unwrap();
        let t = Term::dec(k2.clone(), Term::enc(m.clone(), k1.clone()));
        if k1 == k2 {
            assert_eq!(t, m);
        } else {
            assert!(matches!(t, Term::Dec(..)), "{t}");
        }
    }
}
