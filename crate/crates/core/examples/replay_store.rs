// The append-only sample store, its aggregates, and replaying a stored
// session through the provider interface.

use chrono::{TimeZone, Utc};
use nwd_lens::store::RawSample;
use nwd_lens::{parse_query, CountProvider, JsonlStore, ReplayProvider};

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let dir = tempfile::tempdir()?;
    let path = dir.path().join("samples.jsonl");
    let q = r#""Wirikuta" AND "mines""#;

    let store = JsonlStore::open(&path)?;
    let samples: Vec<RawSample> = [100, 110, 90]
        .into_iter()
        .enumerate()
        .map(|(i, count)| RawSample {
            query_canonical: q.to_string(),
            year: 2005,
            count,
            observed_at: Utc.with_ymd_and_hms(2014, 4, 1, 12, i as u32, 0).unwrap(),
            session_id: "s1".into(),
            provider_id: "manual".into(),
        })
        .collect();
    println!("appended {}", store.append_samples(&samples)?);

    let reopened = JsonlStore::open_existing(&path)?;
    let stats = reopened.aggregate(q, 2005)?;
    println!("mean {} std {} stderr {:.4} (n = {})", stats.mean, stats.std, stats.stderr, stats.n);

    let replay = ReplayProvider::from_store(&reopened)?;
    let query = parse_query(q)?;
    for _ in 0..3 {
        println!("replayed {}", replay.fetch_count(&query, 2005)?.count);
    }
    println!("then: {}", replay.fetch_count(&query, 2005).unwrap_err());
    Ok(())
}

#[allow(dead_code)]
fn main() {
    run_example().unwrap();
}
