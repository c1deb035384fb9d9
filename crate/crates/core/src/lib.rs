//! Temporal normalized web distance.
//!
//! Measures how the semantic distance between terms drifts over time from
//! year-windowed hit counts: a query language for exact-phrase boolean queries,
//! count providers (synthetic corpus, replay, HTTP), an append-only sample
//! store, the distance with its error model and year-over-year decomposition,
//! and trend analysis with the data-quality filters needed for estimated counts.
//!
//! ```
//! use nwd_lens::nwd::{compute_nwd, PairCounts};
//!
//! let pc = PairCounts::from_values(2005, (1000.0, 0.0), (100.0, 0.0), (50.0, 0.0), (1e6, 0.0));
//! let d = compute_nwd(&pc).value.unwrap();
//! assert!((d - 0.3252575).abs() < 1e-7);
//! ```

pub mod analytics;
pub mod corpus;
pub mod nwd;
pub mod provider;
pub mod query;
pub mod report;
pub mod store;
pub mod study;

pub use analytics::{
    build_nwd_series, classify_trend, control_drift_report, detect_count_artifacts, fit_trend,
    growth_series, inclusion_exclusion_check, Drift, NwdSeries, TrendClass, TrendFit,
};
pub use corpus::{brute_force_nwd, count_hits, generate_corpus, Corpus, Document, GrowthSpec};
pub use nwd::{compute_nwd, delta_decomposition, propagate_error, NwdPoint, PairCounts};
pub use provider::{run_protocol, CountProvider, OracleProvider, ReplayProvider};
pub use query::{parse_query, render_query, Query};
pub use store::{CountStats, JsonlStore, RawSample, SampleIndex};
pub use study::{validate_config, year_window, StudyConfig, TermRole, TermSpec};
