// Frozen count estimates: a run of identical yearly means is flagged and
// kept out of every trend fit.

use chrono::{TimeZone, Utc};
use nwd_lens::store::RawSample;
use nwd_lens::{detect_count_artifacts, SampleIndex, StudyConfig, TermRole, TermSpec};

fn sample(term: &str, year: i32, count: u64) -> RawSample {
    RawSample {
        query_canonical: format!("\"{term}\""),
        year,
        count,
        observed_at: Utc.with_ymd_and_hms(2014, 4, 18, 0, 0, 0).unwrap(),
        session_id: "s1".into(),
        provider_id: "fixture".into(),
    }
}

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let config = StudyConfig::new(
        vec![TermSpec::new("the", TermRole::Neutral), TermSpec::new("peyote", TermRole::Positive)],
        (1994, 2013),
    );
    let mut samples = Vec::new();
    for year in 1994..=2013 {
        let peyote = if year <= 2000 { 16_200 } else { 16_200 + 900 * (year - 2000) as u64 };
        let rare = if year <= 2000 { 5 } else { 5 + (year - 2000) as u64 };
        for _ in 0..5 {
            samples.push(sample("peyote", year, peyote));
            samples.push(sample("rare", year, rare));
        }
    }
    let idx = SampleIndex::new(samples);

    let flagged = detect_count_artifacts(&idx, "peyote", &config);
    println!("peyote artifact years: {flagged:?}");
    assert_eq!(flagged, (1994..=2000).collect());

    // the same frozen run below the count floor is not an artifact
    assert!(detect_count_artifacts(&idx, "rare", &config).is_empty());
    Ok(())
}

#[allow(dead_code)]
fn main() {
    run_example().unwrap();
}
