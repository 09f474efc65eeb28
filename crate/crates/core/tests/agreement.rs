mod common;

use common::oracle;
use patchswipe_core::analytics::{build_report, AgreementError, LabelMatrix};
use patchswipe_core::{cohen_kappa, fleiss_kappa, percent_agreement, ClassLabel};
use proptest::prelude::*;
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

const TOL: f64 = 1e-9;

fn strings(v: &[&str]) -> Vec<String> {
    v.iter().map(|s| s.to_string()).collect()
}

fn labels(v: &[String]) -> Vec<ClassLabel> {
    v.iter().map(ClassLabel::new).collect()
}

#[test]
fn percent_600_with_562_matches() {
    let a: Vec<String> = (0..600).map(|i| format!("c{}", i % 2)).collect();
    let mut b = a.clone();
    for x in b.iter_mut().take(38) {
        *x = if x == "c0" { "c1".into() } else { "c0".into() };
    }
    let expected = oracle::percent(&a, &b);
    assert!((expected - 93.666_666_666_666_67).abs() < 1e-9);
    assert!((percent_agreement(&a, &b).unwrap() - expected).abs() <= TOL);
}

#[test]
fn hand_contingency_fixtures() {
    // 2x2 table [[20, 5], [10, 15]]: p_o = 0.7, p_e = 0.5*0.6 + 0.5*0.4 = 0.5
    let mut a = Vec::new();
    let mut b = Vec::new();
    for (x, y, n) in [("x", "x", 20), ("x", "y", 5), ("y", "x", 10), ("y", "y", 15)] {
        for _ in 0..n {
            a.push(x.to_string());
            b.push(y.to_string());
        }
    }
    assert!((cohen_kappa(&a, &b).unwrap() - 0.4).abs() <= TOL);
    assert!((oracle::cohen(&a, &b).unwrap() - 0.4).abs() <= TOL);

    let a = strings(&["x", "x", "y", "y"]);
    let b = strings(&["x", "y", "x", "y"]);
    assert!(cohen_kappa(&a, &b).unwrap().abs() <= TOL);

    let c = strings(&["x", "x", "x"]);
    assert_eq!(cohen_kappa(&c, &c), Err(AgreementError::DegenerateMarginals));
    assert_eq!(oracle::cohen(&c, &c), None);
}

#[test]
fn randomized_cohen_matches_contingency_oracle() {
    for seed in 0..200u64 {
        let mut rng = StdRng::seed_from_u64(seed);
        let n = rng.gen_range(1..=20);
        let k = rng.gen_range(1..=3);
        let a: Vec<String> = (0..n).map(|_| format!("c{}", rng.gen_range(0..k))).collect();
        let b: Vec<String> = (0..n).map(|_| format!("c{}", rng.gen_range(0..k))).collect();
        match (cohen_kappa(&a, &b), oracle::cohen(&a, &b)) {
            (Ok(got), Some(want)) => assert!((got - want).abs() <= TOL, "seed {seed}"),
            (Err(AgreementError::DegenerateMarginals), None) => {}
            (got, want) => panic!("seed {seed}: {got:?} vs {want:?}"),
        }
    }
}

#[test]
fn fleiss_fixtures() {
    let rows = vec![strings(&["A", "A", "A"]), strings(&["A", "B", "B"])];
    let m = LabelMatrix::from_rows(&rows).unwrap();
    assert!((fleiss_kappa(&m).unwrap() - 0.25).abs() <= TOL);
    assert!((oracle::fleiss(&rows).unwrap() - 0.25).abs() <= TOL);
}

#[test]
fn fleiss_uniform_random_is_near_zero() {
    let mut rng = StdRng::seed_from_u64(7);
    let rows: Vec<Vec<String>> = (0..600)
        .map(|_| (0..4).map(|_| format!("c{}", rng.gen_range(0..2))).collect())
        .collect();
    let k = fleiss_kappa(&LabelMatrix::from_rows(&rows).unwrap()).unwrap();
    assert!(k.abs() < 0.1, "{k}");
    assert!((k - oracle::fleiss(&rows).unwrap()).abs() <= TOL);
}

#[test]
fn two_rater_fleiss_equals_cohen_when_marginals_match() {
    // both raters: 6 x, 4 y; disagreements are symmetric
    let a = strings(&["x", "x", "x", "x", "x", "x", "y", "y", "y", "y"]);
    let b = strings(&["x", "x", "x", "x", "y", "y", "x", "x", "y", "y"]);
    let rows: Vec<Vec<String>> = a.iter().zip(&b).map(|(x, y)| vec![x.clone(), y.clone()]).collect();
    let f = fleiss_kappa(&LabelMatrix::from_rows(&rows).unwrap()).unwrap();
    let c = cohen_kappa(&a, &b).unwrap();
    assert!((f - c).abs() <= TOL);
}

#[test]
fn report_matches_bruteforce() {
    let mut rng = StdRng::seed_from_u64(99);
    let rows: Vec<Vec<String>> = (0..50)
        .map(|_| (0..3).map(|_| format!("c{}", rng.gen_range(0..3))).collect())
        .collect();
    let m = LabelMatrix::from_rows(&rows).unwrap();
    let rep = build_report(&m, &[]).unwrap();
    assert_eq!(rep.pairwise.len(), 3);
    for p in &rep.pairwise {
        let i = m.raters().iter().position(|r| r == &p.rater_a).unwrap();
        let j = m.raters().iter().position(|r| r == &p.rater_b).unwrap();
        let a: Vec<String> = rows.iter().map(|r| r[i].clone()).collect();
        let b: Vec<String> = rows.iter().map(|r| r[j].clone()).collect();
        assert!((p.percent_agreement - oracle::percent(&a, &b)).abs() <= TOL);
        assert!((p.cohen_kappa.unwrap() - oracle::cohen(&a, &b).unwrap()).abs() <= TOL);
    }
    assert!((rep.fleiss_kappa.unwrap() - oracle::fleiss(&rows).unwrap()).abs() <= TOL);
}

fn label_vec(max: usize, k: usize) -> impl Strategy<Value = (Vec<String>, Vec<String>)> {
    (1..=max).prop_flat_map(move |n| {
        (
            prop::collection::vec((0..k).prop_map(|c| format!("c{c}")), n),
            prop::collection::vec((0..k).prop_map(|c| format!("c{c}")), n),
        )
    })
}

fn rename(v: &[String]) -> Vec<String> {
    // bijection on the alphabet
    v.iter().map(|s| format!("renamed-{}", s.chars().rev().collect::<String>())).collect()
}

proptest! {
    #[test]
    fn symmetry((a, b) in label_vec(30, 3)) {
        prop_assert_eq!(percent_agreement(&a, &b).unwrap(), percent_agreement(&b, &a).unwrap());
        match (cohen_kappa(&a, &b), cohen_kappa(&b, &a)) {
            (Ok(x), Ok(y)) => prop_assert!((x - y).abs() <= TOL),
            (x, y) => prop_assert_eq!(x, y),
        }
    }

    #[test]
    fn renaming_invariance((a, b) in label_vec(30, 4)) {
        let (ra, rb) = (rename(&a), rename(&b));
        prop_assert!((percent_agreement(&a, &b).unwrap() - percent_agreement(&ra, &rb).unwrap()).abs() <= TOL);
        match (cohen_kappa(&a, &b), cohen_kappa(&ra, &rb)) {
            (Ok(x), Ok(y)) => prop_assert!((x - y).abs() <= TOL),
            (x, y) => prop_assert_eq!(x, y),
        }
        let rows: Vec<Vec<String>> = a.iter().zip(&b).map(|(x, y)| vec![x.clone(), y.clone()]).collect();
        let rrows: Vec<Vec<String>> = rows.iter().map(|r| rename(r)).collect();
        match (fleiss_kappa(&LabelMatrix::from_rows(&rows).unwrap()), fleiss_kappa(&LabelMatrix::from_rows(&rrows).unwrap())) {
            (Ok(x), Ok(y)) => prop_assert!((x - y).abs() <= TOL),
            (x, y) => prop_assert_eq!(x, y),
        }
    }

    #[test]
    fn item_permutation_invariance(rows in prop::collection::vec(prop::collection::vec((0..3usize).prop_map(|c| format!("c{c}")), 3), 1..25), seed in any::<u64>()) {
        let mut shuffled = rows.clone();
        let mut rng = StdRng::seed_from_u64(seed);
        for i in (1..shuffled.len()).rev() {
            shuffled.swap(i, rng.gen_range(0..=i));
        }
        let m1 = LabelMatrix::from_rows(&rows).unwrap();
        let m2 = LabelMatrix::from_rows(&shuffled).unwrap();
        match (fleiss_kappa(&m1), fleiss_kappa(&m2)) {
            (Ok(x), Ok(y)) => prop_assert!((x - y).abs() <= TOL),
            (x, y) => prop_assert_eq!(x, y),
        }
        let a1: Vec<_> = m1.column(0); let b1: Vec<_> = m1.column(1);
        let a2: Vec<_> = m2.column(0); let b2: Vec<_> = m2.column(1);
        prop_assert!((percent_agreement(&a1, &b1).unwrap() - percent_agreement(&a2, &b2).unwrap()).abs() <= TOL);
        match (cohen_kappa(&a1, &b1), cohen_kappa(&a2, &b2)) {
            (Ok(x), Ok(y)) => prop_assert!((x - y).abs() <= TOL),
            (x, y) => prop_assert_eq!(x, y),
        }
    }

    #[test]
    fn kappa_one_iff_equal((a, b) in label_vec(20, 2)) {
        if let Ok(k) = cohen_kappa(&a, &b) {
            prop_assert_eq!(k == 1.0, a == b);
        }
        let rows: Vec<Vec<String>> = a.iter().zip(&b).map(|(x, y)| vec![x.clone(), y.clone()]).collect();
        if let Ok(k) = fleiss_kappa(&LabelMatrix::from_rows(&rows).unwrap()) {
            prop_assert_eq!(k == 1.0, a == b);
        }
    }

    #[test]
    fn kappa_bounds((a, b) in label_vec(30, 3)) {
        if let Ok(k) = cohen_kappa(&a, &b) {
            prop_assert!((-1.0 - TOL..=1.0 + TOL).contains(&k));
        }
        let p = percent_agreement(&a, &b).unwrap();
        prop_assert!((0.0..=100.0).contains(&p));
    }

    #[test]
    fn cohen_matches_oracle((a, b) in label_vec(40, 4)) {
        match (cohen_kappa(&a, &b), oracle::cohen(&a, &b)) {
            (Ok(x), Some(y)) => prop_assert!((x - y).abs() <= TOL),
            (Err(AgreementError::DegenerateMarginals), None) => {}
            (x, y) => prop_assert!(false, "{:?} vs {:?}", x, y),
        }
    }

    #[test]
    fn fleiss_matches_oracle(rows in prop::collection::vec(prop::collection::vec((0..3usize).prop_map(|c| format!("c{c}")), 4), 1..40)) {
        let got = fleiss_kappa(&LabelMatrix::from_rows(&rows).unwrap());
        match (got, oracle::fleiss(&rows)) {
            (Ok(x), Some(y)) => prop_assert!((x - y).abs() <= TOL),
            (Err(AgreementError::DegenerateMarginals), None) => {}
            (x, y) => prop_assert!(false, "{:?} vs {:?}", x, y),
        }
    }

    #[test]
    fn duplicated_agreeing_item_never_lowers_observed_agreement(rows in prop::collection::vec(prop::collection::vec((0..3usize).prop_map(|c| format!("c{c}")), 3), 1..20)) {
        // P̄ is the mean per-item agreement; an all-agree item scores 1.
        let p_bar = |rs: &[Vec<String>]| -> f64 {
            rs.iter().map(|r| {
                let n = r.len() as f64;
                let pairs: f64 = ["c0", "c1", "c2"].iter().map(|c| {
                    let k = r.iter().filter(|x| x == c).count() as f64;
                    k * (k - 1.0)
                }).sum();
                pairs / (n * (n - 1.0))
            }).sum::<f64>() / rs.len() as f64
        };
        let mut more = rows.clone();
        more.push(vec!["c0".to_string(); 3]);
        prop_assert!(p_bar(&more) + TOL >= p_bar(&rows));
        // and the library's matrix accepts the widened table
        prop_assert!(LabelMatrix::from_rows(&more).is_ok());
        let _ = labels(&more[0]);
    }
}
