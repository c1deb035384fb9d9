// End-to-end study against the corpus oracle: generate a corpus, run the
// measurement protocol into a store, and write every report.

use nwd_lens::analytics::ErrorMethod;
use nwd_lens::provider::{ProtocolOptions, SystemClock};
use nwd_lens::report::write_reports;
use nwd_lens::{
    build_nwd_series, classify_trend, fit_trend, generate_corpus, run_protocol, GrowthSpec, JsonlStore, OracleProvider,
    SampleIndex, StudyConfig,
};
use std::sync::Arc;

const SPEC: &str = include_str!(concat!(env!("CARGO_MANIFEST_DIR"), "/examples/data/growth_spec.json"));
const STUDY: &str = include_str!(concat!(env!("CARGO_MANIFEST_DIR"), "/examples/data/study.json"));

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let corpus = Arc::new(generate_corpus(&GrowthSpec::from_json(SPEC)?)?);
    let mut config = StudyConfig::from_json(STUDY)?;
    config.cutoff_year = 2001;

    let dir = tempfile::tempdir()?;
    let store = JsonlStore::open(dir.path().join("samples.jsonl"))?;
    let provider = OracleProvider::new(corpus, "example", Arc::new(SystemClock::new()));
    let summary = run_protocol(&provider, &config, &store, ProtocolOptions { include_or_queries: true })?;
    println!("{} samples written, {} failures", summary.samples_written, summary.failures.len());

    let idx = SampleIndex::new(store.read_all()?);
    for (u, v) in config.measured_pairs() {
        let series = build_nwd_series(&idx, u, v, &config);
        let values: Vec<String> = series
            .points
            .iter()
            .map(|p| p.value.map_or("-".into(), |x| format!("{x:.3}")))
            .collect();
        let verdict = fit_trend(&series, &config)
            .map(|f| format!("{:?} (slope {:+.4})", classify_trend(&f, &config).class, f.slope))
            .unwrap_or_else(|e| e.to_string());
        println!("{:<18} {}  {verdict}", series.label(), values.join(" "));
    }

    let out = dir.path().join("report");
    std::fs::create_dir_all(&out)?;
    for path in write_reports(&idx, &config, &out, 6, ErrorMethod::DeltaMethod)? {
        println!("wrote {}", path.file_name().unwrap_or_default().to_string_lossy());
    }
    Ok(())
}

#[allow(dead_code)]
fn main() {
    run_example().unwrap();
}
