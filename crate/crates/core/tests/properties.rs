use approx::assert_relative_eq;
use chrono::{TimeZone, Utc};
use nwd_lens::analytics::{ols, usable_points};
use nwd_lens::corpus::Document;
use nwd_lens::nwd::{PointFlag, NwdPoint};
use nwd_lens::store::RawSample;
use nwd_lens::*;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use std::collections::BTreeSet;

fn phrase_text() -> impl Strategy<Value = String> {
    "[a-zA-Z0-9 ()&|-]{0,6}[a-z][a-zA-Z ]{0,5}".prop_map(|s| s)
}

fn query_tree() -> impl Strategy<Value = Query> {
    let leaf = phrase_text().prop_map(Query::Phrase);
    leaf.prop_recursive(5, 64, 2, |inner| {
        prop_oneof![
            (inner.clone(), inner.clone()).prop_map(|(l, r)| Query::and(l, r)),
            (inner.clone(), inner).prop_map(|(l, r)| Query::or(l, r)),
        ]
    })
}

proptest! {
    #[test]
    fn render_then_parse_is_identity(q in query_tree()) {
        prop_assert!(q.depth() <= 6);
        let s = render_query(&q);
        prop_assert_eq!(parse_query(&s).unwrap(), q);
    }

    #[test]
    fn rendering_is_injective(a in query_tree(), b in query_tree()) {
        if render_query(&a) == render_query(&b) {
            prop_assert_eq!(a, b);
        }
    }

    #[test]
    fn homogeneous_scaling_leaves_distance_unchanged(
        mu in 1.0f64..1e3, dm in 1.0f64..50.0, dbig in 1.0f64..50.0, dn in 2.0f64..1e4, c in 1e-3f64..1e3,
    ) {
        let m = mu * dm;
        let big_m = m * dbig;
        let n = big_m * dn;
        let base = PairCounts::from_values(2001, (big_m, 0.0), (m, 0.0), (mu, 0.0), (n, 0.0));
        let scaled = PairCounts::from_values(2001, (c * big_m, 0.0), (c * m, 0.0), (c * mu, 0.0), (c * n, 0.0));
        let (a, b) = (compute_nwd(&base).value.unwrap(), compute_nwd(&scaled).value.unwrap());
        prop_assert!((a - b).abs() <= 1e-12, "{} vs {}", a, b);
    }

    #[test]
    fn distance_is_symmetric(u in 1.0f64..1e5, v in 1.0f64..1e5, frac in 0.01f64..1.0, n in 1e6f64..1e9) {
        let joint = (u.min(v) * frac).max(1.0);
        let pc = PairCounts::from_values(2001, (u, 1.0), (v, 2.0), (joint, 0.5), (n, 10.0));
        let (a, b) = (compute_nwd(&pc), compute_nwd(&pc.swapped()));
        prop_assert_eq!(a.value, b.value);
        prop_assert_eq!(propagate_error(&pc), propagate_error(&pc.swapped()));
    }

    #[test]
    fn aggregate_ignores_sample_order(mut counts in prop::collection::vec(0u32..100_000, 1..12), seed in any::<u64>()) {
        let xs: Vec<f64> = counts.iter().map(|&c| c as f64).collect();
        let a = CountStats::from_counts("\"q\"", 2001, &xs);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for i in (1..counts.len()).rev() {
            counts.swap(i, rng.gen_range(0..=i));
        }
        let ys: Vec<f64> = counts.iter().map(|&c| c as f64).collect();
        let b = CountStats::from_counts("\"q\"", 2001, &ys);
        prop_assert_eq!(&a, &b);
        assert_relative_eq!(a.stderr * (a.n as f64).sqrt(), a.std, epsilon = 1e-9, max_relative = 1e-12);
    }

    #[test]
    fn merging_stores_is_associative(
        a in prop::collection::vec(0u64..1000, 0..5),
        b in prop::collection::vec(0u64..1000, 0..5),
        c in prop::collection::vec(0u64..1000, 1..5),
    ) {
        let s = |v: &[u64]| v.iter().map(|&n| sample("\"q\"", 2001, n)).collect::<Vec<_>>();
        let mut left = SampleIndex::new(s(&a));
        left.extend(s(&b));
        left.extend(s(&c));
        let mut bc = s(&b);
        bc.extend(s(&c));
        let mut right = SampleIndex::new(s(&a));
        right.extend(bc);
        prop_assert_eq!(left.get("\"q\"", 2001), right.get("\"q\"", 2001));
    }

    #[test]
    fn oracle_satisfies_inclusion_exclusion(seed in any::<u64>(), i in 0usize..5, j in 0usize..5) {
        let corpus = random_corpus(seed, 40);
        let (u, v) = (Query::Phrase(VOCAB[i].into()), Query::Phrase(VOCAB[j].into()));
        for y in 2000..=2002 {
            let n_u = count_hits(&corpus, &u, y);
            let n_v = count_hits(&corpus, &v, y);
            let n_and = count_hits(&corpus, &Query::and(u.clone(), v.clone()), y);
            let n_or = count_hits(&corpus, &Query::or(u.clone(), v.clone()), y);
            prop_assert_eq!(n_or + n_and, n_u + n_v);
        }
    }

    #[test]
    fn adding_a_document_never_lowers_a_count(seed in any::<u64>(), q in query_over_vocab(), extra in doc_text()) {
        let corpus = random_corpus(seed, 30);
        let mut docs = corpus.documents().to_vec();
        let before = count_hits(&corpus, &q, 2001);
        docs.push(Document { id: 10_000, year: 2001, text: extra });
        let grown = Corpus::new(docs, corpus.year_range()).unwrap();
        prop_assert!(count_hits(&grown, &q, 2001) >= before);
    }

    #[test]
    fn brute_force_agrees_with_core(seed in any::<u64>(), i in 0usize..4, j in 0usize..4) {
        prop_assume!(i != j);
        let corpus = random_corpus(seed, 60);
        let config = vocab_config();
        let (u, v) = (TermSpec::new(VOCAB[i], TermRole::Key), TermSpec::new(VOCAB[j], TermRole::Positive));
        for y in 2000..=2002 {
            let c = |q: Query| count_hits(&corpus, &q, y) as f64;
            let pu = Query::Phrase(u.text.clone());
            let pv = Query::Phrase(v.text.clone());
            let pc = PairCounts::from_values(
                y,
                (c(pu.clone()), 0.0),
                (c(pv.clone()), 0.0),
                (c(Query::and(pu, pv)), 0.0),
                (100.0 * c(Query::Phrase("the".into())), 0.0),
            );
            match (brute_force_nwd(&corpus, &u, &v, y, &config), compute_nwd(&pc).value) {
                (Ok(a), Some(b)) => prop_assert!((a - b).abs() <= 1e-12),
                (Err(_), None) => {}
                (a, b) => prop_assert!(false, "disagree: {:?} vs {:?}", a, b),
            }
        }
    }

    #[test]
    fn ols_matches_two_pass_closed_form(ys in prop::collection::vec(-5.0f64..5.0, 3..20)) {
        let pts: Vec<(i32, f64)> = ys.iter().enumerate().map(|(i, &y)| (1994 + i as i32, y)).collect();
        let fit = ols(&pts).unwrap();
        let n = pts.len() as f64;
        let xbar = pts.iter().map(|p| p.0 as f64).sum::<f64>() / n;
        let ybar = pts.iter().map(|p| p.1).sum::<f64>() / n;
        let sxx: f64 = pts.iter().map(|p| (p.0 as f64 - xbar).powi(2)).sum();
        let sxy: f64 = pts.iter().map(|p| (p.0 as f64 - xbar) * (p.1 - ybar)).sum();
        let slope = sxy / sxx;
        let sse: f64 = pts.iter().map(|p| (p.1 - ybar - slope * (p.0 as f64 - xbar)).powi(2)).sum();
        let se = (sse / (n - 2.0) / sxx).sqrt();
        prop_assert!((fit.slope - slope).abs() <= 1e-9);
        prop_assert!((fit.slope_stderr.unwrap() - se).abs() <= 1e-9);
        prop_assert!((fit.intercept - (ybar - slope * xbar)).abs() <= 1e-9 * (1.0 + xbar.abs()));
    }

    #[test]
    fn excluded_points_cannot_move_a_fit(
        ys in prop::collection::vec(0.0f64..1.5, 20),
        junk in prop::collection::vec(-100.0f64..100.0, 20),
        artifact in prop::collection::vec(any::<bool>(), 20),
    ) {
        let config = StudyConfig::new(Vec::new(), (1994, 2013));
        let build = |values: &[f64]| NwdSeries {
            u: TermSpec::new("u", TermRole::Key),
            v: TermSpec::new("v", TermRole::Positive),
            points: (0..20)
                .map(|i| {
                    let year = 1994 + i as i32;
                    let mut flags = BTreeSet::new();
                    if year < 2001 {
                        flags.insert(PointFlag::PreCutoff);
                    }
                    if artifact[i] {
                        flags.insert(PointFlag::ArtifactYear);
                    }
                    NwdPoint { year, value: Some(values[i]), stderr: Some(0.01), flags }
                })
                .collect(),
        };
        let base = build(&ys);
        let excluded: Vec<bool> = (0..20).map(|i| i < 7 || artifact[i]).collect();
        let mutated: Vec<f64> = (0..20).map(|i| if excluded[i] { junk[i] } else { ys[i] }).collect();
        let other = build(&mutated);
        prop_assert_eq!(usable_points(&base, &config), usable_points(&other, &config));
        match (fit_trend(&base, &config), fit_trend(&other, &config)) {
            (Ok(a), Ok(b)) => prop_assert_eq!(a, b),
            (Err(_), Err(_)) => {}
            _ => prop_assert!(false),
        }
    }

    #[test]
    fn offset_does_not_change_the_verdict(ys in prop::collection::vec(0.0f64..1.0, 13), slope in -0.05f64..0.05, offset in -2.0f64..2.0) {
        let config = StudyConfig::new(Vec::new(), (2001, 2013));
        let pts: Vec<(i32, f64)> = ys.iter().enumerate().map(|(i, &y)| (2001 + i as i32, 0.1 * y + slope * i as f64)).collect();
        let shifted: Vec<(i32, f64)> = pts.iter().map(|&(x, y)| (x, y + offset)).collect();
        let (a, b) = (ols(&pts).unwrap(), ols(&shifted).unwrap());
        prop_assert!((a.slope - b.slope).abs() < 1e-9);
        if (a.slope.abs() - config.slope_threshold).abs() > 1e-9 {
            prop_assert_eq!(classify_trend(&a, &config).class, classify_trend(&b, &config).class);
        }
    }

    #[test]
    fn year_windows_partition_time(y in 1900i32..2100) {
        let (a, b) = (year_window(y), year_window(y + 1));
        prop_assert!(a.start <= a.end);
        prop_assert!(a.end < b.start);
        prop_assert_eq!(a.end.succ_opt().unwrap(), b.start);
    }

    #[test]
    fn validation_ignores_term_order(seed in any::<u64>()) {
        let mut terms = vec![
            TermSpec::new("alpha", TermRole::Key),
            TermSpec::new("beta", TermRole::Positive),
            TermSpec::new("alpha", TermRole::Control),
            TermSpec::new("", TermRole::Neutral),
        ];
        let mut config = StudyConfig::new(terms.clone(), (2013, 1994));
        let a: BTreeSet<String> = validate_config(&config).into_iter().collect();
        prop_assert_eq!(&a, &validate_config(&config).into_iter().collect());
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for i in (1..terms.len()).rev() {
            terms.swap(i, rng.gen_range(0..=i));
        }
        config.terms = terms;
        let b: BTreeSet<String> = validate_config(&config).into_iter().collect();
        prop_assert_eq!(a, b);
    }
}

const VOCAB: [&str; 5] = ["alpha", "beta", "gamma delta", "delta", "the"];

fn vocab_config() -> StudyConfig {
    let mut terms: Vec<TermSpec> = VOCAB.iter().map(|t| TermSpec::new(*t, TermRole::Neutral)).collect();
    terms[0].role = TermRole::Key;
    StudyConfig::new(terms, (2000, 2002))
}

fn doc_text() -> impl Strategy<Value = String> {
    prop::collection::vec(prop::sample::select(vec!["alpha", "beta", "gamma", "delta", "the", "x"]), 0..6)
        .prop_map(|w| w.join(" "))
}

fn query_over_vocab() -> impl Strategy<Value = Query> {
    let leaf = prop::sample::select(VOCAB.to_vec()).prop_map(|t| Query::Phrase(t.to_string()));
    leaf.prop_recursive(3, 16, 2, |inner| {
        prop_oneof![
            (inner.clone(), inner.clone()).prop_map(|(l, r)| Query::and(l, r)),
            (inner.clone(), inner).prop_map(|(l, r)| Query::or(l, r)),
        ]
    })
}

fn random_corpus(seed: u64, docs_per_year: usize) -> Corpus {
    let words = ["alpha", "beta", "gamma", "delta", "the", "the", "Alpha,", "betamax", "x"];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut docs = Vec::new();
    for year in 2000..=2002 {
        for _ in 0..docs_per_year {
            let len = rng.gen_range(1..8);
            let text: Vec<&str> = (0..len).map(|_| words[rng.gen_range(0..words.len())]).collect();
            docs.push(Document { id: docs.len() as u64, year, text: text.join(" ") });
        }
    }
    Corpus::new(docs, (2000, 2002)).unwrap()
}

fn sample(q: &str, year: i32, count: u64) -> RawSample {
    RawSample {
        query_canonical: q.to_string(),
        year,
        count,
        observed_at: Utc.with_ymd_and_hms(2014, 1, 1, 0, 0, 0).unwrap(),
        session_id: "s".into(),
        provider_id: "test".into(),
    }
}

#[test]
fn delta_method_matches_monte_carlo() {
    let pc = PairCounts::from_values(2005, (1000.0, 50.0), (100.0, 10.0), (50.0, 5.0), (1e6, 0.0));
    let analytic = propagate_error(&pc).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let draw = |mean: f64, sd: f64, rng: &mut ChaCha8Rng| Normal::new(mean, sd).unwrap().sample(rng);
    let values: Vec<f64> = (0..20_000)
        .filter_map(|_| {
            let p = PairCounts::from_values(
                2005,
                (draw(1000.0, 50.0, &mut rng), 0.0),
                (draw(100.0, 10.0, &mut rng), 0.0),
                (draw(50.0, 5.0, &mut rng), 0.0),
                (1e6, 0.0),
            );
            compute_nwd(&p).value
        })
        .collect();
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let sd = (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    assert_relative_eq!(sd, analytic, max_relative = 0.2);
}
