//! Certificate runs on the reference base, with goldens from
//! `oracles/afs_oracle.py`.

use afs_lab::afs::{
    certify, derive_base, BaseInput, Count, EngineSettings, GrowthIndexing, L0Choice, Regime,
};
use rug::ops::Pow;
use rug::{Float, Integer, Rational};

const P: u32 = 256;

fn reference_input() -> BaseInput {
    BaseInput {
        d: 1,
        beta: Rational::from(1),
        b0: Rational::from(5),
        p0: Rational::from((1, Integer::from(23).pow(4))),
        l0: L0Choice::Value(Integer::from(11).pow(256)),
        p0_provenance: "exact".into(),
    }
}

fn golden(s: &str) -> Float {
    Float::with_val(P, Float::parse(s).unwrap())
}

fn within(i: &afs_lab::interval::Interval, g: &Float, tol: f64) -> bool {
    let lo = Float::with_val(P, i.lo() - g).abs();
    let hi = Float::with_val(P, i.hi() - g).abs();
    lo < tol && hi < tol
}

#[test]
fn reference_base_passes_to_scale_60() {
    let settings = EngineSettings::default();
    let base = derive_base(&reference_input(), &settings).unwrap();
    let cert = certify(&base, 60, &settings).unwrap();
    let failed: Vec<_> = cert.failures().map(|c| (c.name, c.scale)).collect();
    assert!(failed.is_empty(), "{failed:?}");
    assert!(cert.overall_pass);
    assert!(cert.esl_checks.iter().all(|c| c.passed));
    assert!(!cert.esl_checks.is_empty());
    assert_eq!(cert.base.switch_scale, 30);
    assert_eq!(cert.regimes.len(), 60);
    assert!(matches!(cert.regime(1), Some(Regime::A1 | Regime::A2)));
    assert!(matches!(cert.regime(31), Some(Regime::B1 | Regime::B2)));
    assert!(cert.check("integer-root", Some(31)).unwrap().passed);
    assert!(cert.check("Y-jump", Some(31)).unwrap().passed);
    assert!(cert.check("growth-sandwich", Some(30)).is_none());
}

#[test]
fn esl_goldens() {
    let settings = EngineSettings::default();
    let base = derive_base(&reference_input(), &settings).unwrap();
    let cert = certify(&base, 60, &settings).unwrap();
    let e30 = &cert.exponents[30];
    let e60 = &cert.exponents[60];
    assert!(within(&e30.delta, &golden("0.0505977979368180538666048559802735144650224218431725779263283"), 1e-50));
    assert!(within(&e30.kappa, &golden("0.0106734841072296990028313316492584355065413340833554190920954"), 1e-50));
    assert!(within(&e60.delta, &golden("0.839008780319713598994602207923500658266683375677291967680551"), 1e-50));
    assert!(within(&e60.kappa, &golden("0.763135652435772525163920136906612644947541516636932729607987"), 1e-50));
    assert!(e60.defined);
    let y31 = cert.scale_records[31].growth.as_ref().unwrap();
    assert_eq!(y31.exact().unwrap(), &Integer::from(2_828_053_804_207_817_693u64));
}

#[test]
fn table_indexing_breaks_the_wegner_chain() {
    let settings = EngineSettings {
        indexing: GrowthIndexing::Table,
        ..EngineSettings::default()
    };
    let base = derive_base(&reference_input(), &settings).unwrap();
    let cert = certify(&base, 45, &settings).unwrap();
    assert!(!cert.overall_pass);
    let first = cert
        .checks
        .iter()
        .filter(|c| c.name == "rho-le-wegner-exponent" && !c.passed)
        .map(|c| c.scale.unwrap())
        .min();
    assert_eq!(first, Some(41));
}

#[test]
fn enclosed_tail_still_certifies() {
    let settings = EngineSettings {
        exact_max_k: 40,
        ..EngineSettings::default()
    };
    let base = derive_base(&reference_input(), &settings).unwrap();
    let cert = certify(&base, 60, &settings).unwrap();
    assert!(!cert.records[41].exact);
    let failed: Vec<_> = cert.failures().map(|c| (c.name, c.scale)).collect();
    assert!(failed.is_empty(), "{failed:?}");
    let e60 = &cert.exponents[60];
    // enclosures widen through floor(exp(.)) but stay far below any check margin
    assert!(e60.delta.rel_width() < 1e-30);
    assert!(within(&e60.delta, &golden("0.839008780319713598994602207923500658266683375677291967680551"), 1e-30));
}

#[test]
fn synthetic_budget_violates_sandwich() {
    // S = Y/8 breaks S <= Y/9
    let y = Integer::from(800);
    let s = Integer::from(100);
    assert!(Integer::from(9u32 * &s) > y);
    let settings = EngineSettings::default();
    let base = derive_base(&reference_input(), &settings).unwrap();
    let mut records = afs_lab::afs::build_records(&base, 31, &settings).unwrap();
    let last = records.last_mut().unwrap();
    last.growth = Some(Count::Exact(y));
    last.budget = Some(Count::Exact(s));
    let good = 800 - 5 * 100 - 1;
    last.good = Some(Count::Exact(Integer::from(good)));
    // the certificate of a patched chain is recomputed through the public checker
    let cert = afs_lab::afs::certify_records(&base, &records).unwrap();
    assert!(!cert.check("growth-sandwich", Some(31)).unwrap().passed);
    assert!(!cert.overall_pass);
}

#[test]
fn desk_base_fails_only_the_l0_threshold() {
    let mut input = reference_input();
    input.l0 = L0Choice::Value(Integer::from(3));
    let settings = EngineSettings::default();
    let base = derive_base(&input, &settings).unwrap();
    let cert = certify(&base, 2, &settings).unwrap();
    assert!(!cert.check("L0-threshold", None).unwrap().passed);
    assert!(cert.check("p0-threshold", None).unwrap().passed);
    // the switch comes at once and L1 = 27 has 16th root 1
    assert_eq!(cert.base.switch_scale, 1);
    assert!(cert.check("wegner-closure", Some(1)).is_some());
    assert!(!cert.check("step-defined", Some(2)).unwrap().passed);
    assert_eq!(cert.exponents.len(), 2);
}

#[test]
fn certificate_serializes() {
    let settings = EngineSettings::default();
    let base = derive_base(&reference_input(), &settings).unwrap();
    let cert = certify(&base, 5, &settings).unwrap();
    let json = serde_json::to_value(&cert).unwrap();
    assert_eq!(json["base"]["switch_scale"], 30);
    assert_eq!(json["records"].as_array().unwrap().len(), 6);
    assert!(json["checks"].as_array().unwrap().iter().any(|c| c["name"] == "wegner-closure"));
}
