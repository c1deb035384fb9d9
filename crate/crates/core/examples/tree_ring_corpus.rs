// A synthetic tree-ring corpus: documents tagged with a year, generated to
// hit exact single and joint counts, then queried like a search engine.

use nwd_lens::corpus::{JointTarget, YearPlan};
use nwd_lens::{brute_force_nwd, count_hits, generate_corpus, parse_query, GrowthSpec, StudyConfig, TermRole, TermSpec};
use std::collections::BTreeMap;

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let singles: BTreeMap<String, u64> =
        [("u", 1000), ("v", 100), ("the", 10_000)].iter().map(|(k, n)| (k.to_string(), *n)).collect();
    let spec = GrowthSpec {
        seed: 1,
        year_range: (2005, 2005),
        years: vec![YearPlan {
            year: 2005,
            singles,
            joints: vec![JointTarget { u: "u".into(), v: "v".into(), count: 50 }],
        }],
    };
    let corpus = generate_corpus(&spec)?;
    println!("{} documents", corpus.documents().len());

    for q in [r#""u""#, r#""v""#, r#""u" AND "v""#, r#""u" OR "v""#, r#""the""#] {
        println!("{q:<16} {}", count_hits(&corpus, &parse_query(q)?, 2005));
    }
    assert_eq!(count_hits(&corpus, &parse_query(r#""u" OR "v""#)?, 2005), 1050);

    let config = StudyConfig::new(
        vec![
            TermSpec::new("the", TermRole::Neutral),
            TermSpec::new("u", TermRole::Key),
            TermSpec::new("v", TermRole::Positive),
        ],
        (2005, 2005),
    );
    let u = TermSpec::new("u", TermRole::Key);
    let v = TermSpec::new("v", TermRole::Positive);
    let d = brute_force_nwd(&corpus, &u, &v, 2005, &config)?;
    println!("brute-force NWD(u, v) = {d:.7}");

    // same seed, same bytes
    let (mut a, mut b) = (Vec::new(), Vec::new());
    corpus.write_jsonl(&mut a)?;
    generate_corpus(&spec)?.write_jsonl(&mut b)?;
    assert_eq!(a, b);
    Ok(())
}

#[allow(dead_code)]
fn main() {
    run_example().unwrap();
}
