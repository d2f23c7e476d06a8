use stonf_core::io::{bundled, emit_report, parse_report, recertify, Analyses};
use stonf_core::{construct, parse_spec, verify_order};

#[test]
fn bundled_reports_round_trip() {
    for name in ["toy", "papavasiliou", "linear"] {
        let doc = parse_spec(bundled(name).unwrap()).unwrap();
        let b = doc.build(None).unwrap();
        let nf = construct(&b.spec, doc.policy.clone()).unwrap();
        let want = b.spec.order() + 1;
        assert_eq!(verify_order(&b.spec, &nf).unwrap(), want, "{name}");
        assert_eq!(nf.certified_order, Some(want), "{name}");
        let text = emit_report(&doc, &b, &nf, &Analyses::compute(&b.spec, &nf));
        let parsed = parse_report(&text).unwrap();
        assert_eq!(parsed.certified, Some(want), "{name}");
        let (rebuilt, back, order) = recertify(&parsed).unwrap();
        assert_eq!(order, want, "{name}");
        assert_eq!(back.transform(), nf.transform(), "{name}");
        assert_eq!(back.rates(&rebuilt.spec), nf.rates(&b.spec), "{name}");
        let again = emit_report(&parse_spec(&parsed.source).unwrap(), &rebuilt, &back, &Analyses::compute(&rebuilt.spec, &back));
        let body = |t: &str| t.split("\n[ssm]").next().unwrap().to_string();
        assert_eq!(body(&again), body(&text), "{name}");
    }
}

#[test]
fn report_without_certification_is_flagged() {
    let doc = parse_spec(bundled("linear").unwrap()).unwrap();
    let b = doc.build(None).unwrap();
    let mut nf = construct(&b.spec, doc.policy.clone()).unwrap();
    nf.certified_order = None;
    let text = emit_report(&doc, &b, &nf, &Analyses::compute(&b.spec, &nf));
    assert_eq!(parse_report(&text).unwrap().certified, None);
}
