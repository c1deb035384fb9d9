//! Hit-count providers and the repeated-measurement protocol.
//!
//! Three providers share one contract, [`CountProvider`]:
//! - [`OracleProvider`] counts exactly over a synthetic [`Corpus`], with optional noise;
//! - [`ReplayProvider`] hands back previously stored samples;
//! - [`LiveProvider`] fetches a search results page over HTTP and extracts the count.

use std::collections::{BTreeMap, HashMap};
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use chrono::{DateTime, Utc};
use percent_encoding::{utf8_percent_encode, NON_ALPHANUMERIC};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::corpus::{count_hits, Corpus};
use crate::query::{parse_query, render_query, Query};
use crate::store::{JsonlStore, RawSample, StoreError};
use crate::study::{year_window, StudyConfig};

/// Environment variable that, when set to `1`, makes the live provider refuse to fetch.
pub const OFFLINE_ENV: &str = "NWD_LENS_OFFLINE";

pub fn offline_mode() -> bool {
    std::env::var(OFFLINE_ENV).map(|v| v == "1").unwrap_or(false)
}

#[derive(Debug, thiserror::Error)]
pub enum ProviderError {
    #[error("offline mode: {OFFLINE_ENV}=1 forbids live fetches")]
    Offline,
    #[error("HTTP request for {url} failed after {attempts} attempt(s): {message}")]
    Http {
        url: String,
        attempts: u32,
        message: String,
    },
    #[error("extraction rule matched nothing in the response for {query} ({year}); the page format may have changed")]
    NoMatch { query: String, year: i32 },
    #[error("extracted text {0:?} is not a count")]
    BadCount(String),
    #[error("replay exhausted for {query} in {year}")]
    Exhausted { query: String, year: i32 },
    #[error("year {year} is outside the corpus range {first}..={last}")]
    YearOutOfRange { year: i32, first: i32, last: i32 },
    #[error("invalid live provider config: {0}")]
    Config(String),
}

/// Time source for sample timestamps and request spacing.
pub trait Clock: Send + Sync {
    fn now(&self) -> DateTime<Utc>;
    fn sleep(&self, d: Duration);
}

/// Wall clock whose `now` advances monotonically from construction.
#[derive(Debug)]
pub struct SystemClock {
    origin_wall: DateTime<Utc>,
    origin: Instant,
}

impl SystemClock {
    pub fn new() -> Self {
        SystemClock {
            origin_wall: Utc::now(),
            origin: Instant::now(),
        }
    }
}

impl Default for SystemClock {
    fn default() -> Self {
        Self::new()
    }
}

impl Clock for SystemClock {
    fn now(&self) -> DateTime<Utc> {
        self.origin_wall + chrono::Duration::from_std(self.origin.elapsed()).unwrap_or_default()
    }

    fn sleep(&self, d: Duration) {
        std::thread::sleep(d);
    }
}

/// Manually driven clock: `sleep` advances time instantly.
#[derive(Debug)]
pub struct VirtualClock {
    now: Mutex<DateTime<Utc>>,
}

impl VirtualClock {
    pub fn new(start: DateTime<Utc>) -> Self {
        VirtualClock {
            now: Mutex::new(start),
        }
    }

    pub fn advance(&self, d: Duration) {
        let mut now = self.now.lock().unwrap();
        *now += chrono::Duration::from_std(d).unwrap();
    }
}

impl Clock for VirtualClock {
    fn now(&self) -> DateTime<Utc> {
        *self.now.lock().unwrap()
    }

    fn sleep(&self, d: Duration) {
        self.advance(d);
    }
}

/// Serializes callers so that consecutive permits are at least `min_interval` apart.
pub struct RateLimiter {
    min_interval: Duration,
    last: Mutex<Option<DateTime<Utc>>>,
    clock: Arc<dyn Clock>,
}

impl RateLimiter {
    pub fn new(min_interval: Duration, clock: Arc<dyn Clock>) -> Self {
        RateLimiter {
            min_interval,
            last: Mutex::new(None),
            clock,
        }
    }

    /// Blocks until a request may be issued; returns the permit time.
    pub fn acquire(&self) -> DateTime<Utc> {
        let mut last = self.last.lock().unwrap();
        if let Some(prev) = *last {
            let earliest = prev + chrono::Duration::from_std(self.min_interval).unwrap();
            let now = self.clock.now();
            if now < earliest {
                self.clock.sleep((earliest - now).to_std().unwrap_or_default());
            }
        }
        let t = self.clock.now();
        *last = Some(t);
        t
    }
}

/// Anything that can produce one hit-count observation for a (query, year).
pub trait CountProvider: Send + Sync {
    fn provider_id(&self) -> &str;
    fn fetch_count(&self, q: &Query, year: i32) -> Result<RawSample, ProviderError>;
}

/// Noise applied by the oracle provider; both parts are off by default.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    /// Standard deviation of multiplicative Gaussian noise, relative to the exact count.
    pub relative_sigma: f64,
    /// Round reported counts to this many significant digits.
    pub significant_digits: Option<u32>,
}

impl NoiseModel {
    pub fn is_zero(&self) -> bool {
        self.relative_sigma == 0.0 && self.significant_digits.is_none()
    }
}

pub fn round_significant(count: u64, digits: u32) -> u64 {
    if count == 0 || digits == 0 {
        return count;
    }
    let magnitude = (count as f64).log10().floor() as i32 + 1;
    let drop = magnitude - digits as i32;
    if drop <= 0 {
        return count;
    }
    let unit = 10u64.pow(drop as u32);
    ((count + unit / 2) / unit) * unit
}

pub struct OracleProvider {
    corpus: Arc<Corpus>,
    noise: NoiseModel,
    rng: Mutex<ChaCha8Rng>,
    session_id: String,
    clock: Arc<dyn Clock>,
}

impl OracleProvider {
    pub fn new(corpus: Arc<Corpus>, session_id: impl Into<String>, clock: Arc<dyn Clock>) -> Self {
        OracleProvider {
            corpus,
            noise: NoiseModel::default(),
            rng: Mutex::new(ChaCha8Rng::seed_from_u64(0)),
            session_id: session_id.into(),
            clock,
        }
    }

    pub fn with_noise(mut self, noise: NoiseModel, seed: u64) -> Self {
        self.noise = noise;
        self.rng = Mutex::new(ChaCha8Rng::seed_from_u64(seed));
        self
    }
}

impl CountProvider for OracleProvider {
    fn provider_id(&self) -> &str {
        "oracle"
    }

    fn fetch_count(&self, q: &Query, year: i32) -> Result<RawSample, ProviderError> {
        if !self.corpus.contains_year(year) {
            let (first, last) = self.corpus.year_range();
            return Err(ProviderError::YearOutOfRange { year, first, last });
        }
        let exact = count_hits(&self.corpus, q, year);
        let mut count = exact;
        if self.noise.relative_sigma > 0.0 {
            let normal = Normal::new(1.0, self.noise.relative_sigma)
                .map_err(|e| ProviderError::Config(e.to_string()))?;
            let factor = normal.sample(&mut *self.rng.lock().unwrap());
            count = (exact as f64 * factor).round().max(0.0) as u64;
        }
        if let Some(d) = self.noise.significant_digits {
            count = round_significant(count, d);
        }
        Ok(RawSample {
            query_canonical: render_query(q),
            year,
            count,
            observed_at: self.clock.now(),
            session_id: self.session_id.clone(),
            provider_id: self.provider_id().to_string(),
        })
    }
}

/// Returns stored samples back, one per call, in store order per (query, year).
pub struct ReplayProvider {
    queues: Mutex<HashMap<(String, i32), std::collections::VecDeque<RawSample>>>,
}

impl ReplayProvider {
    pub fn new(samples: impl IntoIterator<Item = RawSample>) -> Self {
        let mut queues: HashMap<(String, i32), std::collections::VecDeque<RawSample>> =
            HashMap::new();
        for s in samples {
            queues
                .entry((s.query_canonical.clone(), s.year))
                .or_default()
                .push_back(s);
        }
        ReplayProvider {
            queues: Mutex::new(queues),
        }
    }

    pub fn from_store(store: &JsonlStore) -> Result<Self, StoreError> {
        Ok(Self::new(store.read_all()?))
    }
}

impl CountProvider for ReplayProvider {
    fn provider_id(&self) -> &str {
        "replay"
    }

    fn fetch_count(&self, q: &Query, year: i32) -> Result<RawSample, ProviderError> {
        let key = (render_query(q), year);
        let mut queues = self.queues.lock().unwrap();
        queues
            .get_mut(&key)
            .and_then(|q| q.pop_front())
            .ok_or(ProviderError::Exhausted {
                query: key.0,
                year,
            })
    }
}

fn default_date_format() -> String {
    "%m/%d/%Y".to_string()
}
fn default_user_agent() -> String {
    concat!("nwd-lens/", env!("CARGO_PKG_VERSION")).to_string()
}
fn default_interval_ms() -> u64 {
    10_000
}
fn default_retries() -> u32 {
    2
}
fn default_timeout_ms() -> u64 {
    30_000
}

/// Settings for the HTTP provider, read from a JSON file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LiveProviderConfig {
    /// Must contain `{query}`, `{start_date}` and `{end_date}`.
    pub url_template: String,
    /// Regex with exactly one capture group around the count.
    pub extraction_rule: String,
    #[serde(default = "default_interval_ms")]
    pub min_request_interval_ms: u64,
    #[serde(default = "default_retries")]
    pub max_retries: u32,
    #[serde(default = "default_timeout_ms")]
    pub timeout_ms: u64,
    /// strftime-style format for the date placeholders.
    #[serde(default = "default_date_format")]
    pub date_format: String,
    #[serde(default = "default_user_agent")]
    pub user_agent: String,
}

impl LiveProviderConfig {
    pub fn new(url_template: impl Into<String>, extraction_rule: impl Into<String>) -> Self {
        LiveProviderConfig {
            url_template: url_template.into(),
            extraction_rule: extraction_rule.into(),
            min_request_interval_ms: default_interval_ms(),
            max_retries: default_retries(),
            timeout_ms: default_timeout_ms(),
            date_format: default_date_format(),
            user_agent: default_user_agent(),
        }
    }

    pub fn validate(&self) -> Result<Regex, ProviderError> {
        for p in ["{query}", "{start_date}", "{end_date}"] {
            if !self.url_template.contains(p) {
                return Err(ProviderError::Config(format!(
                    "url_template is missing the {p} placeholder"
                )));
            }
        }
        let re = Regex::new(&self.extraction_rule)
            .map_err(|e| ProviderError::Config(format!("extraction_rule: {e}")))?;
        if re.captures_len() != 2 {
            return Err(ProviderError::Config(format!(
                "extraction_rule must have exactly one capture group, found {}",
                re.captures_len() - 1
            )));
        }
        Ok(re)
    }
}

/// Applies an extraction rule to a response body, stripping `,` and `.` grouping
/// separators from the captured digits.
pub fn extract_count(rule: &Regex, body: &str) -> Option<Result<u64, ProviderError>> {
    let caps = rule.captures(body)?;
    let raw = caps.get(1)?.as_str();
    let digits: String = raw.chars().filter(|c| *c != ',' && *c != '.').collect();
    Some(
        digits
            .trim()
            .parse::<u64>()
            .map_err(|_| ProviderError::BadCount(raw.to_string())),
    )
}

/// Best-effort HTTP adapter for a search engine with a date-range filter.
///
/// Requests are serialized through a [`RateLimiter`]. Automated querying may
/// violate an engine's terms of service; the adapter is opt-in.
pub struct LiveProvider {
    config: LiveProviderConfig,
    rule: Regex,
    agent: ureq::Agent,
    limiter: RateLimiter,
    session_id: String,
    clock: Arc<dyn Clock>,
}

impl LiveProvider {
    pub fn new(
        config: LiveProviderConfig,
        session_id: impl Into<String>,
        clock: Arc<dyn Clock>,
    ) -> Result<Self, ProviderError> {
        if offline_mode() {
            return Err(ProviderError::Offline);
        }
        let rule = config.validate()?;
        let agent = ureq::AgentBuilder::new()
            .timeout(Duration::from_millis(config.timeout_ms))
            .user_agent(&config.user_agent)
            .build();
        let limiter = RateLimiter::new(
            Duration::from_millis(config.min_request_interval_ms),
            clock.clone(),
        );
        Ok(LiveProvider {
            config,
            rule,
            agent,
            limiter,
            session_id: session_id.into(),
            clock,
        })
    }

    pub fn url_for(&self, q: &Query, year: i32) -> String {
        build_url(&self.config, q, year)
    }
}

pub fn build_url(config: &LiveProviderConfig, q: &Query, year: i32) -> String {
    let w = year_window(year);
    let query = utf8_percent_encode(&render_query(q), NON_ALPHANUMERIC).to_string();
    let start = utf8_percent_encode(
        &w.start.format(&config.date_format).to_string(),
        NON_ALPHANUMERIC,
    )
    .to_string();
    let end = utf8_percent_encode(
        &w.end.format(&config.date_format).to_string(),
        NON_ALPHANUMERIC,
    )
    .to_string();
    config
        .url_template
        .replace("{query}", &query)
        .replace("{start_date}", &start)
        .replace("{end_date}", &end)
}

impl CountProvider for LiveProvider {
    fn provider_id(&self) -> &str {
        "live"
    }

    fn fetch_count(&self, q: &Query, year: i32) -> Result<RawSample, ProviderError> {
        if offline_mode() {
            return Err(ProviderError::Offline);
        }
        let url = self.url_for(q, year);
        let mut attempts = 0;
        let body = loop {
            attempts += 1;
            self.limiter.acquire();
            let result = self
                .agent
                .get(&url)
                .call()
                .map_err(|e| e.to_string())
                .and_then(|r| r.into_string().map_err(|e| e.to_string()));
            match result {
                Ok(body) => break body,
                Err(message) if attempts > self.config.max_retries => {
                    return Err(ProviderError::Http {
                        url,
                        attempts,
                        message,
                    })
                }
                Err(_) => continue,
            }
        };
        let count = extract_count(&self.rule, &body).ok_or_else(|| ProviderError::NoMatch {
            query: render_query(q),
            year,
        })??;
        Ok(RawSample {
            query_canonical: render_query(q),
            year,
            count,
            observed_at: self.clock.now(),
            session_id: self.session_id.clone(),
            provider_id: self.provider_id().to_string(),
        })
    }
}

/// One planned measurement: a query fetched `repetitions` times for a year.
#[derive(Debug, Clone, PartialEq)]
pub struct PlannedQuery {
    pub query: Query,
    pub year: i32,
    pub repetitions: u32,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ProtocolOptions {
    /// Also measure `u OR v` for every measured pair (for the inclusion-exclusion check).
    pub include_or_queries: bool,
}

/// The full measurement plan: for each year, every term `repetitions_single`
/// times, then every measured pair's joint query `repetitions_joint` times.
pub fn plan_protocol(config: &StudyConfig, options: ProtocolOptions) -> Vec<PlannedQuery> {
    let mut plan = Vec::new();
    let pairs = config.measured_pairs();
    for year in config.years() {
        for t in &config.terms {
            plan.push(PlannedQuery {
                query: Query::Phrase(t.text.clone()),
                year,
                repetitions: config.repetitions_single,
            });
        }
        for (u, v) in &pairs {
            let (pu, pv) = (Query::Phrase(u.text.clone()), Query::Phrase(v.text.clone()));
            plan.push(PlannedQuery {
                query: Query::and(pu.clone(), pv.clone()),
                year,
                repetitions: config.repetitions_joint,
            });
            if options.include_or_queries {
                plan.push(PlannedQuery {
                    query: Query::or(pu, pv),
                    year,
                    repetitions: config.repetitions_joint,
                });
            }
        }
    }
    plan
}

#[derive(Debug)]
pub struct FetchFailure {
    pub query: String,
    pub year: i32,
    pub error: ProviderError,
}

#[derive(Debug, Default)]
pub struct ProtocolSummary {
    pub queries_run: usize,
    pub samples_written: usize,
    pub failures: Vec<FetchFailure>,
}

#[derive(Debug, thiserror::Error)]
pub enum ProtocolError {
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error("provider produced a sample whose query does not parse: {0}")]
    BadSample(String),
}

/// Runs the measurement plan against `provider`, appending each sample to
/// `store` as soon as it arrives. Fetch failures are tallied and skipped; a
/// store failure aborts the run.
pub fn run_protocol(
    provider: &dyn CountProvider,
    config: &StudyConfig,
    store: &JsonlStore,
    options: ProtocolOptions,
) -> Result<ProtocolSummary, ProtocolError> {
    let mut summary = ProtocolSummary::default();
    for item in plan_protocol(config, options) {
        for _ in 0..item.repetitions {
            summary.queries_run += 1;
            match provider.fetch_count(&item.query, item.year) {
                Ok(sample) => {
                    if parse_query(&sample.query_canonical).is_err() {
                        return Err(ProtocolError::BadSample(sample.query_canonical));
                    }
                    summary.samples_written += store.append_samples(&[sample])?;
                }
                Err(error) => summary.failures.push(FetchFailure {
                    query: render_query(&item.query),
                    year: item.year,
                    error,
                }),
            }
        }
    }
    Ok(summary)
}

/// Failure counts per error message, for reporting.
pub fn failure_digest(failures: &[FetchFailure]) -> BTreeMap<String, usize> {
    let mut out = BTreeMap::new();
    for f in failures {
        *out.entry(f.error.to_string()).or_insert(0) += 1;
    }
    out
}
