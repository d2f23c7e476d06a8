use proptest::prelude::*;
use stonf_core::homological::{satisfies, solve};
use stonf_core::noise::conv;
use stonf_core::rational::{q, qi};
use stonf_core::{construct, parse_spec, verify_order, NoisePoly, NormalForm, Policy, Series, Q};

fn coeff() -> impl Strategy<Value = (i64, i64)> {
    (-3i64..=3, 1i64..=3)
}

fn lit((n, d): (i64, i64)) -> String {
    format!("({n}/{d})")
}

/// A two-variable slow-fast system with random nonlinear and noise terms.
fn system() -> impl Strategy<Value = String> {
    (prop::collection::vec(coeff(), 8), any::<bool>()).prop_map(|(c, anticipate)| {
        format!(
            "name random\nslow x\nfast y\nparam s\norder e4,s3\npolicy {}\n\
             dx = {}*x*y + {}*x^3 + {}*s*x*phi1 + {}*x^2*y\n\
             dy = -y + {}*x^2 + {}*y^2 + {}*x*y + s*phi1*(1 + {}*x)\n",
            if anticipate { "anticipate" } else { "no-anticipate" },
            lit(c[0]),
            lit(c[1]),
            lit(c[2]),
            lit(c[3]),
            lit(c[4]),
            lit(c[5]),
            lit(c[6]),
            lit(c[7]),
        )
    })
}

fn terms(nf: &NormalForm) -> usize {
    nf.xi.iter().chain(&nf.eta).chain(&nf.f).chain(&nf.g).map(Series::len).sum()
}

/// Adds `delta` to the `pick`-th coefficient across all four series lists.
fn corrupted(nf: &NormalForm, mut pick: usize, delta: Q) -> NormalForm {
    let mut out = nf.clone();
    for s in out.xi.iter_mut().chain(&mut out.eta).chain(&mut out.f).chain(&mut out.g) {
        if pick < s.len() {
            let (k, _) = s.iter().nth(pick).unwrap();
            let (exps, noise) = (k.exps.clone(), k.noise.clone());
            s.add_term(exps, noise, delta);
            return out;
        }
        pick -= s.len();
    }
    unreachable!("pick beyond the term count")
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn random_systems_certify(text in system()) {
        let doc = parse_spec(&text).unwrap();
        let b = doc.build(None).unwrap();
        let nf = construct(&b.spec, doc.policy.clone()).unwrap();
        let claimed = b.spec.ctx.trunc.total + 1;
        prop_assert_eq!(verify_order(&b.spec, &nf).unwrap(), claimed);
        prop_assert!(nf.invariant_violations().is_empty(), "{:?}", nf.invariant_violations());
        if doc.policy == Policy::no_anticipate() {
            for s in nf.xi.iter().chain(&nf.eta).chain(&nf.f).chain(&nf.g) {
                prop_assert!(s.iter().all(|(k, _)| !k.noise.has_positive_rate()));
            }
        }
    }

    #[test]
    fn corruption_is_detected(text in system(), pick in any::<prop::sample::Index>(), n in 1i64..4, d in 1i64..4) {
        let doc = parse_spec(&text).unwrap();
        let b = doc.build(None).unwrap();
        let nf = construct(&b.spec, doc.policy.clone()).unwrap();
        let claimed = b.spec.ctx.trunc.total + 1;
        let total = terms(&nf);
        prop_assume!(total > 0);
        let bad = corrupted(&nf, pick.index(total), q(n, d));
        let order = verify_order(&b.spec, &bad);
        prop_assert!(order.as_ref().map_or(true, |o| *o < claimed), "undetected: {:?}", order);
    }

    #[test]
    fn homological_solution_satisfies(mu in prop_oneof![Just(0i64), Just(-1), Just(1), Just(-2), Just(2)],
                                       r in prop_oneof![Just(-1i64), Just(1), Just(-2)],
                                       with_noise in any::<bool>(),
                                       anticipate in any::<bool>()) {
        prop_assume!(anticipate || r < 0);
        let zr = conv(&qi(r), &NoisePoly::bare(0)).unwrap();
        let c = if with_noise { zr.mul(&NoisePoly::bare(0)).add(&zr) } else { zr.mul(&zr).add(&NoisePoly::constant(qi(2))) };
        let policy = if anticipate { Policy::anticipate() } else { Policy::no_anticipate() };
        let t = solve(&c, &qi(mu), &policy).unwrap();
        prop_assert!(satisfies(&c, &qi(mu), &t).unwrap());
    }
}
