//! Command implementations behind the `nwd-lens` binary, and the report and
//! figure-data writers used by `analyze`.
//!
//! Exit codes: `0` clean, `1` fatal (bad config, unreadable store, ...),
//! `2` partial (some fetches failed but samples were still written).

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use chrono::{DateTime, SecondsFormat, Utc};
use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::analytics::{
    all_series, artifact_map, classify_trend, control_drift_report, fit_trend, growth_series,
    inclusion_exclusion_check, pair_label, ErrorMethod, NwdSeries,
};
use crate::corpus::{generate_corpus, Corpus, GrowthSpec};
use crate::nwd::NwdPoint;
use crate::provider::{
    failure_digest, run_protocol, CountProvider, LiveProvider, LiveProviderConfig, NoiseModel,
    OracleProvider, ProtocolOptions, ReplayProvider, SystemClock,
};
use crate::store::{JsonlStore, SampleIndex};
use crate::study::{validate_config, StudyConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FATAL: i32 = 1;
pub const EXIT_PARTIAL: i32 = 2;

pub const DEFAULT_PRECISION: usize = 6;

/// Rounds to `digits` significant digits (`0` leaves the value untouched).
pub fn round_sig(x: f64, digits: usize) -> f64 {
    if digits == 0 || x == 0.0 || !x.is_finite() {
        return x;
    }
    format!("{:.*e}", digits - 1, x).parse().unwrap_or(x)
}

/// Decimal rendering of `x` rounded to `digits` significant digits.
pub fn format_sig(x: f64, digits: usize) -> String {
    format!("{}", round_sig(x, digits))
}

fn round_json(v: &mut Value, digits: usize) {
    match v {
        Value::Number(n) if n.is_f64() => {
            let r = round_sig(n.as_f64().unwrap(), digits);
            if let Some(num) = serde_json::Number::from_f64(r) {
                *n = num;
            }
        }
        Value::Array(items) => items.iter_mut().for_each(|i| round_json(i, digits)),
        Value::Object(map) => map.values_mut().for_each(|i| round_json(i, digits)),
        _ => {}
    }
}

/// Writes via a temporary file in the same directory, then renames over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_data()?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}

pub fn config_digest(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Reproducibility record written next to every command's outputs.
#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub config_digest: String,
    pub command: String,
    pub started: String,
    pub finished: String,
    pub tool_version: String,
    pub input_stores: Vec<String>,
    pub outputs: Vec<String>,
}

fn rfc3339(t: DateTime<Utc>) -> String {
    t.to_rfc3339_opts(SecondsFormat::Millis, true)
}

impl RunManifest {
    fn new(command: &str, digest: String, started: DateTime<Utc>) -> Self {
        RunManifest {
            config_digest: digest,
            command: command.to_string(),
            started: rfc3339(started),
            finished: String::new(),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            input_stores: Vec::new(),
            outputs: Vec::new(),
        }
    }

    fn write(mut self, path: &Path) -> std::io::Result<()> {
        self.finished = rfc3339(Utc::now());
        let mut bytes = serde_json::to_vec_pretty(&self).map_err(std::io::Error::from)?;
        bytes.push(b'\n');
        write_atomic(path, &bytes)
    }
}

/// Loads and validates a study config; returns its raw bytes for digesting.
pub fn load_config(path: &Path) -> Result<(StudyConfig, Vec<u8>), String> {
    let raw = std::fs::read(path).map_err(|e| format!("reading {}: {e}", path.display()))?;
    let text = std::str::from_utf8(&raw).map_err(|e| format!("{}: {e}", path.display()))?;
    let config = StudyConfig::from_json(text).map_err(|e| e.to_string())?;
    let violations = validate_config(&config);
    if !violations.is_empty() {
        return Err(format!("invalid study config:\n  {}", violations.join("\n  ")));
    }
    Ok((config, raw))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProviderKind {
    Oracle,
    Replay,
    Live,
}

#[derive(Debug, Clone)]
pub struct FetchArgs {
    pub config: PathBuf,
    pub provider: ProviderKind,
    pub store: PathBuf,
    /// Corpus (JSON lines) for the oracle provider.
    pub corpus: Option<PathBuf>,
    /// Seed for the oracle provider's noise.
    pub seed: Option<u64>,
    pub noise: NoiseModel,
    /// Store to replay from, for the replay provider.
    pub replay_from: Option<PathBuf>,
    /// JSON file with a [`LiveProviderConfig`], for the live provider.
    pub live_config: Option<PathBuf>,
    pub session_id: String,
    pub options: ProtocolOptions,
}

impl FetchArgs {
    pub fn new(config: PathBuf, provider: ProviderKind, store: PathBuf) -> Self {
        FetchArgs {
            config,
            provider,
            store,
            corpus: None,
            seed: None,
            noise: NoiseModel::default(),
            replay_from: None,
            live_config: None,
            session_id: "session-1".to_string(),
            options: ProtocolOptions::default(),
        }
    }
}

fn make_provider(args: &FetchArgs) -> Result<Box<dyn CountProvider>, String> {
    let clock = Arc::new(SystemClock::new());
    match args.provider {
        ProviderKind::Oracle => {
            let path = args
                .corpus
                .as_ref()
                .ok_or("the oracle provider needs --corpus")?;
            let f = std::fs::File::open(path).map_err(|e| format!("{}: {e}", path.display()))?;
            let corpus = Corpus::read_jsonl(std::io::BufReader::new(f))
                .map_err(|e| format!("{}: {e}", path.display()))?;
            let p = OracleProvider::new(Arc::new(corpus), args.session_id.clone(), clock)
                .with_noise(args.noise, args.seed.unwrap_or(0));
            Ok(Box::new(p))
        }
        ProviderKind::Replay => {
            let path = args
                .replay_from
                .as_ref()
                .ok_or("the replay provider needs --replay-from")?;
            let store = JsonlStore::open_existing(path).map_err(|e| e.to_string())?;
            Ok(Box::new(
                ReplayProvider::from_store(&store).map_err(|e| e.to_string())?,
            ))
        }
        ProviderKind::Live => {
            if crate::provider::offline_mode() {
                return Err(crate::provider::ProviderError::Offline.to_string());
            }
            let path = args
                .live_config
                .as_ref()
                .ok_or("the live provider needs --live-config")?;
            let raw = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
            let cfg: LiveProviderConfig =
                serde_json::from_str(&raw).map_err(|e| format!("{}: {e}", path.display()))?;
            Ok(Box::new(
                LiveProvider::new(cfg, args.session_id.clone(), clock).map_err(|e| e.to_string())?,
            ))
        }
    }
}

pub fn cmd_fetch(args: &FetchArgs, err: &mut dyn Write) -> i32 {
    let started = Utc::now();
    let (config, raw) = match load_config(&args.config) {
        Ok(c) => c,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            return EXIT_FATAL;
        }
    };
    let provider = match make_provider(args) {
        Ok(p) => p,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            return EXIT_FATAL;
        }
    };
    let store = match JsonlStore::open(&args.store) {
        Ok(s) => s,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            return EXIT_FATAL;
        }
    };
    let summary = match run_protocol(provider.as_ref(), &config, &store, args.options) {
        Ok(s) => s,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            return EXIT_FATAL;
        }
    };
    let _ = writeln!(
        err,
        "{} queries run, {} samples written, {} failures",
        summary.queries_run,
        summary.samples_written,
        summary.failures.len()
    );
    for (msg, n) in failure_digest(&summary.failures) {
        let _ = writeln!(err, "  {n} x {msg}");
    }

    let mut manifest = RunManifest::new("fetch", config_digest(&raw), started);
    manifest.input_stores.push(args.store.display().to_string());
    let manifest_path = manifest_path_for_store(&args.store);
    manifest.outputs = vec![
        args.store.display().to_string(),
        manifest_path.display().to_string(),
    ];
    if let Err(e) = manifest.write(&manifest_path) {
        let _ = writeln!(err, "error: writing manifest: {e}");
        return EXIT_FATAL;
    }
    if summary.failures.is_empty() {
        EXIT_OK
    } else {
        EXIT_PARTIAL
    }
}

pub fn manifest_path_for_store(store: &Path) -> PathBuf {
    let mut name = store.file_name().unwrap_or_default().to_os_string();
    name.push(".manifest.json");
    store.with_file_name(name)
}

#[derive(Debug, Clone)]
pub struct AnalyzeArgs {
    pub config: PathBuf,
    pub store: PathBuf,
    pub out: PathBuf,
    pub precision: usize,
    pub error_method: ErrorMethod,
}

impl AnalyzeArgs {
    pub fn new(config: PathBuf, store: PathBuf, out: PathBuf) -> Self {
        AnalyzeArgs {
            config,
            store,
            out,
            precision: DEFAULT_PRECISION,
            error_method: ErrorMethod::DeltaMethod,
        }
    }
}

pub fn cmd_analyze(args: &AnalyzeArgs, err: &mut dyn Write) -> i32 {
    let started = Utc::now();
    let (config, raw) = match load_config(&args.config) {
        Ok(c) => c,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            return EXIT_FATAL;
        }
    };
    let samples = match JsonlStore::open_existing(&args.store).and_then(|s| s.read_all()) {
        Ok(s) => s,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            return EXIT_FATAL;
        }
    };
    if samples.is_empty() {
        let _ = writeln!(err, "error: store {} is empty", args.store.display());
        return EXIT_FATAL;
    }
    if let Err(e) = std::fs::create_dir_all(&args.out) {
        let _ = writeln!(err, "error: creating {}: {e}", args.out.display());
        return EXIT_FATAL;
    }
    let idx = SampleIndex::new(samples);
    let outputs = match write_reports(&idx, &config, &args.out, args.precision, args.error_method) {
        Ok(o) => o,
        Err(e) => {
            let _ = writeln!(err, "error: writing reports: {e}");
            return EXIT_FATAL;
        }
    };
    let mut manifest = RunManifest::new("analyze", config_digest(&raw), started);
    manifest.input_stores.push(args.store.display().to_string());
    let manifest_path = args.out.join("manifest.json");
    manifest.outputs = outputs
        .iter()
        .chain(std::iter::once(&manifest_path))
        .map(|p| p.display().to_string())
        .collect();
    if let Err(e) = manifest.write(&manifest_path) {
        let _ = writeln!(err, "error: writing manifest: {e}");
        return EXIT_FATAL;
    }
    let _ = writeln!(err, "wrote {} report files to {}", outputs.len() + 1, args.out.display());
    EXIT_OK
}

fn csv_bytes(header: &[&str], rows: Vec<Vec<String>>) -> std::io::Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).map_err(std::io::Error::from)?;
    for r in rows {
        w.write_record(&r).map_err(std::io::Error::from)?;
    }
    w.into_inner().map_err(|e| e.into_error())
}

fn json_bytes(mut v: Value, precision: usize) -> std::io::Result<Vec<u8>> {
    round_json(&mut v, precision);
    let mut bytes = serde_json::to_vec_pretty(&v).map_err(std::io::Error::from)?;
    bytes.push(b'\n');
    Ok(bytes)
}

fn opt(x: Option<f64>, precision: usize) -> String {
    x.map(|v| format_sig(v, precision)).unwrap_or_default()
}

/// File-name-safe form of a term.
pub fn slug(term: &str) -> String {
    let s: String = term
        .chars()
        .map(|c| if c.is_alphanumeric() { c.to_ascii_lowercase() } else { '_' })
        .collect();
    s
}

fn curve_rows(curve: &str, points: &[NwdPoint], precision: usize) -> Vec<Vec<String>> {
    points
        .iter()
        .map(|p| {
            vec![
                curve.to_string(),
                p.year.to_string(),
                opt(p.value, precision),
                opt(p.stderr, precision),
                p.flags_label(),
            ]
        })
        .collect()
}

fn to_value<T: Serialize>(x: &T) -> Value {
    serde_json::to_value(x).expect("report types serialize")
}

/// Computes every report from the sample index and writes them into `out`.
/// Returns the written paths in a fixed order.
pub fn write_reports(
    idx: &SampleIndex,
    config: &StudyConfig,
    out: &Path,
    precision: usize,
    method: ErrorMethod,
) -> std::io::Result<Vec<PathBuf>> {
    let mut written = Vec::new();
    let mut emit = |name: String, bytes: Vec<u8>| -> std::io::Result<()> {
        let path = out.join(name);
        write_atomic(&path, &bytes)?;
        written.push(path);
        Ok(())
    };

    let series = all_series(idx, config, method);

    // (a) distance series
    let mut rows = Vec::new();
    for s in &series {
        for p in &s.points {
            rows.push(vec![
                s.label(),
                p.year.to_string(),
                opt(p.value, precision),
                opt(p.stderr, precision),
                p.flags_label(),
            ]);
        }
    }
    emit(
        "nwd_series.csv".into(),
        csv_bytes(&["pair", "year", "value", "stderr", "flags"], rows)?,
    )?;

    // (b) trends
    let trends: Vec<Value> = series
        .iter()
        .map(|s| {
            let fit = fit_trend(s, config);
            let (fit_v, class_v, reasons) = match &fit {
                Ok(f) => {
                    let c = classify_trend(f, config);
                    (to_value(f), to_value(&c.class), to_value(&c.reasons))
                }
                Err(e) => (Value::Null, Value::Null, json!([e.to_string()])),
            };
            json!({
                "pair": s.label(),
                "u": s.u.text,
                "v": s.v.text,
                "fit": fit_v,
                "class": class_v,
                "reasons": reasons,
            })
        })
        .collect();
    emit(
        "trends.json".into(),
        json_bytes(
            json!({
                "error_method": method.as_str(),
                "slope_threshold": config.slope_threshold,
                "rel_error_max": config.rel_error_max,
                "cutoff_year": config.cutoff_year,
                "pairs": trends,
            }),
            precision,
        )?,
    )?;

    // (c) growth
    let growth: Vec<_> = config
        .terms
        .iter()
        .map(|t| growth_series(idx, &t.text, config))
        .collect();
    let mut rows = Vec::new();
    let mut fig1 = Vec::new();
    for g in &growth {
        for p in &g.points {
            rows.push(vec![
                g.term.clone(),
                p.year.to_string(),
                opt(p.log10_count, precision),
                opt(p.log10_stderr, precision),
                format_sig(p.mean, precision),
            ]);
            fig1.push(vec![
                g.term.clone(),
                p.year.to_string(),
                opt(p.log10_count, precision),
                opt(p.log10_stderr, precision),
            ]);
        }
    }
    emit(
        "growth.csv".into(),
        csv_bytes(&["term", "year", "log10_count", "log10_stderr", "mean_count"], rows)?,
    )?;
    let fits: BTreeMap<&str, Value> = growth
        .iter()
        .map(|g| (g.term.as_str(), g.fit.as_ref().map(to_value).unwrap_or(Value::Null)))
        .collect();
    let ordered: Vec<Value> = config
        .terms
        .iter()
        .map(|t| json!({"term": t.text, "fit": fits[t.text.as_str()]}))
        .collect();
    emit(
        "growth_fits.json".into(),
        json_bytes(json!({"cutoff_year": config.cutoff_year, "terms": ordered}), precision)?,
    )?;

    // (d) diagnostics
    let artifacts = artifact_map(idx, config);
    let mut ie = Vec::new();
    for (u, v) in config.measured_pairs() {
        for year in config.years() {
            ie.push(to_value(&inclusion_exclusion_check(idx, &u.text, &v.text, year, config)));
        }
    }
    let controls = control_drift_report(idx, config);
    emit(
        "diagnostics.json".into(),
        json_bytes(
            json!({
                "error_method": method.as_str(),
                "artifact_years": artifacts,
                "inclusion_exclusion": ie,
                "control_drift": {
                    "verdict": to_value(&controls.verdict),
                    "per_key": to_value(&controls.per_key),
                    "averaged": controls.averaged.iter().map(|a| json!({
                        "control": a.control,
                        "fit": a.fit.as_ref().map(to_value),
                        "class": a.class.as_ref().map(to_value),
                    })).collect::<Vec<_>>(),
                },
            }),
            precision,
        )?,
    )?;

    // (e) figure data
    let fig_header = ["curve", "x", "y", "y_err", "flags"];
    emit(
        "fig1_growth.csv".into(),
        csv_bytes(&["curve", "x", "y", "y_err"], fig1)?,
    )?;

    let by_label: BTreeMap<String, &NwdSeries> = series.iter().map(|s| (s.label(), s)).collect();
    let mut rows = Vec::new();
    for control in config.control_terms() {
        for key in config.key_terms() {
            if let Some(s) = by_label.get(&pair_label(&key.text, &control.text)) {
                let curve = format!("NWD({},{})", key.text, control.text);
                rows.extend(curve_rows(&curve, &s.points, precision));
            }
        }
        if let Some(avg) = controls.averaged.iter().find(|a| a.control == control.text) {
            let curve = format!("<NWD(u,{})>", control.text);
            rows.extend(curve_rows(&curve, &avg.series, precision));
        }
    }
    emit("fig2_controls.csv".into(), csv_bytes(&fig_header, rows)?)?;

    for key in config.key_terms() {
        let mut rows = Vec::new();
        for s in &series {
            let other = if s.u.text == key.text {
                &s.v.text
            } else if s.v.text == key.text {
                &s.u.text
            } else {
                continue;
            };
            let curve = format!("NWD({},{})", key.text, other);
            rows.extend(curve_rows(&curve, &s.points, precision));
        }
        emit(
            format!("fig_key_{}.csv", slug(&key.text)),
            csv_bytes(&fig_header, rows)?,
        )?;
    }

    Ok(written)
}

pub fn cmd_corpus(spec: &Path, out: &Path, seed: Option<u64>, err: &mut dyn Write) -> i32 {
    let raw = match std::fs::read_to_string(spec) {
        Ok(r) => r,
        Err(e) => {
            let _ = writeln!(err, "error: reading {}: {e}", spec.display());
            return EXIT_FATAL;
        }
    };
    let mut growth = match GrowthSpec::from_json(&raw) {
        Ok(g) => g,
        Err(e) => {
            let _ = writeln!(err, "error: parsing {}: {e}", spec.display());
            return EXIT_FATAL;
        }
    };
    if let Some(s) = seed {
        growth.seed = s;
    }
    let corpus = match generate_corpus(&growth) {
        Ok(c) => c,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            return EXIT_FATAL;
        }
    };
    let mut buf = Vec::new();
    if let Err(e) = corpus.write_jsonl(&mut buf).map_err(|e| e.to_string()).and_then(|_| {
        write_atomic(out, &buf).map_err(|e| e.to_string())
    }) {
        let _ = writeln!(err, "error: writing {}: {e}", out.display());
        return EXIT_FATAL;
    }
    let _ = writeln!(
        err,
        "wrote {} documents to {}",
        corpus.documents().len(),
        out.display()
    );
    EXIT_OK
}

pub fn cmd_validate(config: &Path, out: &mut dyn Write) -> i32 {
    let raw = match std::fs::read_to_string(config) {
        Ok(r) => r,
        Err(e) => {
            let _ = writeln!(out, "error: reading {}: {e}", config.display());
            return EXIT_FATAL;
        }
    };
    let cfg = match StudyConfig::from_json(&raw) {
        Ok(c) => c,
        Err(e) => {
            let _ = writeln!(out, "error: {e}");
            return EXIT_FATAL;
        }
    };
    let violations = validate_config(&cfg);
    if violations.is_empty() {
        let _ = writeln!(out, "ok: {} terms, years {}-{}", cfg.terms.len(), cfg.year_range.0, cfg.year_range.1);
        EXIT_OK
    } else {
        for v in &violations {
            let _ = writeln!(out, "violation: {v}");
        }
        EXIT_FATAL
    }
}
