//! Time series of distances and growth, data-quality filters, linear trends
//! and drift classification.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::nwd::{compute_nwd, normalization_constant, NwdPoint, PairCounts, PointFlag};
use crate::query::{render_query, Query};
use crate::store::{CountStats, SampleIndex};
use crate::study::{StudyConfig, TermSpec};

/// Source of the error bar attached to each distance.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorMethod {
    /// First-order propagation of the count standard errors.
    #[default]
    DeltaMethod,
    /// Standard error of the distances recomputed separately per session label.
    SessionSpread,
}

impl ErrorMethod {
    pub fn as_str(self) -> &'static str {
        match self {
            ErrorMethod::DeltaMethod => "delta_method",
            ErrorMethod::SessionSpread => "session_spread",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NwdSeries {
    pub u: TermSpec,
    pub v: TermSpec,
    pub points: Vec<NwdPoint>,
}

impl NwdSeries {
    pub fn label(&self) -> String {
        pair_label(&self.u.text, &self.v.text)
    }

    pub fn point(&self, year: i32) -> Option<&NwdPoint> {
        self.points.iter().find(|p| p.year == year)
    }
}

pub fn pair_label(u: &str, v: &str) -> String {
    format!("{u}|{v}")
}

fn phrase_key(term: &str) -> String {
    render_query(&Query::Phrase(term.to_string()))
}

fn joint_key(u: &str, v: &str) -> String {
    render_query(&Query::and(
        Query::Phrase(u.to_string()),
        Query::Phrase(v.to_string()),
    ))
}

fn or_key(u: &str, v: &str) -> String {
    render_query(&Query::or(
        Query::Phrase(u.to_string()),
        Query::Phrase(v.to_string()),
    ))
}

/// Joint statistics for a pair, whichever operand order was measured.
fn joint_stats(
    idx: &SampleIndex,
    u: &str,
    v: &str,
    year: i32,
    session: Option<&str>,
) -> Option<CountStats> {
    [joint_key(u, v), joint_key(v, u)].iter().find_map(|k| match session {
        None => idx.aggregate(k, year).ok(),
        Some(s) => idx.aggregate_session(k, year, s).ok(),
    })
}

fn pair_counts(
    idx: &SampleIndex,
    u: &str,
    v: &str,
    year: i32,
    config: &StudyConfig,
    session: Option<&str>,
) -> Option<PairCounts> {
    let get = |k: &str| match session {
        None => idx.aggregate(k, year).ok(),
        Some(s) => idx.aggregate_session(k, year, s).ok(),
    };
    let u_stats = get(&phrase_key(u))?;
    let v_stats = get(&phrase_key(v))?;
    let joint = joint_stats(idx, u, v, year, session)?;
    let reference = get(&phrase_key(&config.normalization_ref))?;
    let big_n = normalization_constant(&reference, config.normalization_factor);
    Some(PairCounts::new(year, u_stats, v_stats, joint, big_n))
}

/// Distance for `(u, v)` in every year of the study that has all four counts.
///
/// Points before the cutoff carry `pre_cutoff`; years in which any of the
/// underlying counts shows a frozen-estimate run carry `artifact_year`.
pub fn build_nwd_series(
    idx: &SampleIndex,
    u: &TermSpec,
    v: &TermSpec,
    config: &StudyConfig,
) -> NwdSeries {
    build_nwd_series_with(idx, u, v, config, ErrorMethod::DeltaMethod)
}

pub fn build_nwd_series_with(
    idx: &SampleIndex,
    u: &TermSpec,
    v: &TermSpec,
    config: &StudyConfig,
    method: ErrorMethod,
) -> NwdSeries {
    let mut artifacts = BTreeSet::new();
    for key in [phrase_key(&u.text), phrase_key(&v.text)] {
        artifacts.extend(detect_count_artifacts_for(idx, &key, config));
    }
    let joint_artifacts: BTreeSet<i32> = [joint_key(&u.text, &v.text), joint_key(&v.text, &u.text)]
        .iter()
        .flat_map(|k| detect_count_artifacts_for(idx, k, config))
        .collect();
    artifacts.extend(joint_artifacts);

    let mut points = Vec::new();
    for year in config.years() {
        let Some(pc) = pair_counts(idx, &u.text, &v.text, year, config, None) else {
            continue;
        };
        let mut point = compute_nwd(&pc);
        if method == ErrorMethod::SessionSpread && point.is_defined() {
            match session_spread(idx, &u.text, &v.text, year, config) {
                Some(se) => point.stderr = Some(se),
                None => {
                    point.stderr = Some(0.0);
                    point.flags.insert(PointFlag::SingleSample);
                }
            }
        }
        if year < config.cutoff_year {
            point.flags.insert(PointFlag::PreCutoff);
        }
        if artifacts.contains(&year) {
            point.flags.insert(PointFlag::ArtifactYear);
        }
        points.push(point);
    }
    NwdSeries {
        u: u.clone(),
        v: v.clone(),
        points,
    }
}

/// Standard error of the per-session distances; `None` with fewer than two sessions.
fn session_spread(
    idx: &SampleIndex,
    u: &str,
    v: &str,
    year: i32,
    config: &StudyConfig,
) -> Option<f64> {
    let sessions: BTreeSet<String> = idx.sessions(&phrase_key(u), year).into_iter().collect();
    let values: Vec<f64> = sessions
        .iter()
        .filter_map(|s| pair_counts(idx, u, v, year, config, Some(s)))
        .filter_map(|pc| compute_nwd(&pc).value)
        .collect();
    if values.len() < 2 {
        return None;
    }
    Some(CountStats::from_counts("", year, &values).stderr)
}

/// Ordinary least-squares line through a series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrendFit {
    pub slope: f64,
    /// `None` with only two points (no residual degrees of freedom).
    pub slope_stderr: Option<f64>,
    pub intercept: f64,
    /// `None` when every dependent value is identical.
    pub r2: Option<f64>,
    pub n_points: usize,
    pub first_year: i32,
    pub last_year: i32,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("need at least two usable points for a fit, found {0}")]
pub struct InsufficientPoints(pub usize);

/// OLS of `y` on `x`. Computed on centred abscissae.
pub fn ols(points: &[(i32, f64)]) -> Result<TrendFit, InsufficientPoints> {
    let n = points.len();
    if n < 2 {
        return Err(InsufficientPoints(n));
    }
    let nf = n as f64;
    let x_mean = points.iter().map(|p| p.0 as f64).sum::<f64>() / nf;
    let y_mean = points.iter().map(|p| p.1).sum::<f64>() / nf;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    let mut syy = 0.0;
    for &(x, y) in points {
        let dx = x as f64 - x_mean;
        let dy = y - y_mean;
        sxx += dx * dx;
        sxy += dx * dy;
        syy += dy * dy;
    }
    if sxx == 0.0 {
        // all points in one year
        return Err(InsufficientPoints(1));
    }
    let flat = points.iter().all(|p| p.1 == points[0].1);
    let (slope, intercept) = if flat {
        (0.0, points[0].1)
    } else {
        let slope = sxy / sxx;
        (slope, y_mean - slope * x_mean)
    };
    let ss_res: f64 = points
        .iter()
        .map(|&(x, y)| {
            let fitted = if flat { intercept } else { y_mean + slope * (x as f64 - x_mean) };
            (y - fitted).powi(2)
        })
        .sum();
    let r2 = if flat || syy == 0.0 {
        None
    } else {
        Some(1.0 - ss_res / syy)
    };
    let slope_stderr = (n > 2).then(|| (ss_res / (nf - 2.0) / sxx).sqrt());
    Ok(TrendFit {
        slope,
        slope_stderr,
        intercept,
        r2,
        n_points: n,
        first_year: points.iter().map(|p| p.0).min().unwrap(),
        last_year: points.iter().map(|p| p.0).max().unwrap(),
    })
}

/// A point enters a fit only if it is defined, not before the cutoff and not
/// in an artifact year.
pub fn usable_points(series: &NwdSeries, config: &StudyConfig) -> Vec<(i32, f64)> {
    series
        .points
        .iter()
        .filter(|p| {
            p.year >= config.cutoff_year
                && !p.has(PointFlag::PreCutoff)
                && !p.has(PointFlag::ArtifactYear)
        })
        .filter_map(|p| p.value.map(|v| (p.year, v)))
        .collect()
}

pub fn fit_trend(series: &NwdSeries, config: &StudyConfig) -> Result<TrendFit, InsufficientPoints> {
    ols(&usable_points(series, config))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Drift {
    Approaching,
    Receding,
    Constant,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrendClass {
    pub class: Drift,
    pub reasons: Vec<String>,
}

/// Approaching/receding needs `|slope| ≥ slope_threshold` with the matching
/// sign and `slope_stderr / |slope| ≤ rel_error_max`; anything else is constant.
pub fn classify_trend(fit: &TrendFit, config: &StudyConfig) -> TrendClass {
    let thr = config.slope_threshold;
    let mut reasons = Vec::new();
    let direction = if fit.slope <= -thr {
        reasons.push(format!("slope {} <= -{thr}", fit.slope));
        Some(Drift::Approaching)
    } else if fit.slope >= thr {
        reasons.push(format!("slope {} >= +{thr}", fit.slope));
        Some(Drift::Receding)
    } else {
        reasons.push(format!("|slope| {} < {thr}", fit.slope.abs()));
        None
    };
    let Some(direction) = direction else {
        return TrendClass {
            class: Drift::Constant,
            reasons,
        };
    };
    let class = match fit.slope_stderr {
        None => {
            reasons.push("slope stderr unavailable (two points)".to_string());
            Drift::Constant
        }
        Some(se) => {
            let rel = se / fit.slope.abs();
            if rel <= config.rel_error_max {
                reasons.push(format!(
                    "relative error {rel:.4} <= {:.4}",
                    config.rel_error_max
                ));
                direction
            } else {
                reasons.push(format!(
                    "relative error {rel:.4} > {:.4}",
                    config.rel_error_max
                ));
                Drift::Constant
            }
        }
    };
    TrendClass { class, reasons }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GrowthPoint {
    pub year: i32,
    pub mean: f64,
    /// `None` for zero-count years.
    pub log10_count: Option<f64>,
    /// Standard error of `log10_count`, propagated from the count's.
    pub log10_stderr: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GrowthSeries {
    pub term: String,
    pub points: Vec<GrowthPoint>,
    pub fit: Option<TrendFit>,
}

/// `log10` of the mean yearly count of a term, with an OLS fit over years at or
/// after the cutoff.
pub fn growth_series(idx: &SampleIndex, term: &str, config: &StudyConfig) -> GrowthSeries {
    let key = phrase_key(term);
    let mut points = Vec::new();
    for year in config.years() {
        let Some(s) = idx.get(&key, year) else { continue };
        let (log, err) = if s.mean > 0.0 {
            (
                Some(s.mean.log10()),
                Some(s.stderr / (s.mean * std::f64::consts::LN_10)),
            )
        } else {
            (None, None)
        };
        points.push(GrowthPoint {
            year,
            mean: s.mean,
            log10_count: log,
            log10_stderr: err,
        });
    }
    let fit_points: Vec<(i32, f64)> = points
        .iter()
        .filter(|p| p.year >= config.cutoff_year)
        .filter_map(|p| p.log10_count.map(|l| (p.year, l)))
        .collect();
    GrowthSeries {
        term: term.to_string(),
        points,
        fit: ols(&fit_points).ok(),
    }
}

/// Years of `term` whose mean count belongs to a run of at least
/// `artifact_min_run` consecutive years with exactly equal means above
/// `artifact_count_floor`.
pub fn detect_count_artifacts(idx: &SampleIndex, term: &str, config: &StudyConfig) -> BTreeSet<i32> {
    detect_count_artifacts_for(idx, &phrase_key(term), config)
}

/// Same as [`detect_count_artifacts`] for an arbitrary canonical query.
pub fn detect_count_artifacts_for(
    idx: &SampleIndex,
    query_canonical: &str,
    config: &StudyConfig,
) -> BTreeSet<i32> {
    let means: Vec<(i32, Option<f64>)> = config
        .years()
        .map(|y| (y, idx.get(query_canonical, y).map(|s| s.mean)))
        .collect();
    equal_runs(&means, config.artifact_min_run as usize, config.artifact_count_floor)
}

/// Maximal runs of consecutive, present, exactly equal values above `floor`.
pub fn equal_runs(values: &[(i32, Option<f64>)], min_run: usize, floor: f64) -> BTreeSet<i32> {
    let mut flagged = BTreeSet::new();
    let mut i = 0;
    while i < values.len() {
        let Some(v) = values[i].1 else {
            i += 1;
            continue;
        };
        let mut j = i + 1;
        while j < values.len() && values[j].1 == Some(v) && values[j].0 == values[j - 1].0 + 1 {
            j += 1;
        }
        if j - i >= min_run && v > floor {
            flagged.extend(values[i..j].iter().map(|p| p.0));
        }
        i = j;
    }
    flagged
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Consistency {
    Consistent,
    Inconsistent,
    Unavailable,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InclusionExclusion {
    pub u: String,
    pub v: String,
    pub year: i32,
    /// `n(u) + n(v) − n(u AND v) − n(u OR v)` on means.
    pub residual: Option<f64>,
    pub relative_residual: Option<f64>,
    pub status: Consistency,
}

/// Residual of the inclusion-exclusion identity from aggregated means.
pub fn inclusion_exclusion_from_means(
    n_u: f64,
    n_v: f64,
    n_and: f64,
    n_or: f64,
    tolerance: f64,
) -> (f64, Option<f64>, Consistency) {
    let residual = n_u + n_v - n_and - n_or;
    if n_or == 0.0 {
        let status = if residual == 0.0 {
            Consistency::Consistent
        } else {
            Consistency::Inconsistent
        };
        return (residual, None, status);
    }
    let rel = residual / n_or;
    let status = if rel.abs() <= tolerance {
        Consistency::Consistent
    } else {
        Consistency::Inconsistent
    };
    (residual, Some(rel), status)
}

pub fn inclusion_exclusion_check(
    idx: &SampleIndex,
    u: &str,
    v: &str,
    year: i32,
    config: &StudyConfig,
) -> InclusionExclusion {
    let or = [or_key(u, v), or_key(v, u)]
        .iter()
        .find_map(|k| idx.get(k, year));
    let parts = (
        idx.get(&phrase_key(u), year),
        idx.get(&phrase_key(v), year),
        joint_stats(idx, u, v, year, None),
        or,
    );
    let (residual, relative_residual, status) = match parts {
        (Some(a), Some(b), Some(j), Some(o)) => {
            let (r, rel, s) =
                inclusion_exclusion_from_means(a.mean, b.mean, j.mean, o.mean, config.incl_excl_tolerance);
            (Some(r), rel, s)
        }
        _ => (None, None, Consistency::Unavailable),
    };
    InclusionExclusion {
        u: u.to_string(),
        v: v.to_string(),
        year,
        residual,
        relative_residual,
        status,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlFit {
    pub key: String,
    pub control: String,
    pub fit: Option<TrendFit>,
    pub class: Option<TrendClass>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AveragedControl {
    pub control: String,
    pub series: Vec<NwdPoint>,
    pub fit: Option<TrendFit>,
    pub class: Option<TrendClass>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "verdict", content = "failing")]
pub enum ControlVerdict {
    /// Every available control fit classifies constant.
    AllConstant,
    /// Control fits that drifted, as `key|control` labels (`*|control` for averages).
    Drift(Vec<String>),
    /// No control fit could be made.
    Unavailable,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlDriftReport {
    pub per_key: Vec<ControlFit>,
    pub averaged: Vec<AveragedControl>,
    pub verdict: ControlVerdict,
}

/// Pointwise mean over key terms of the distance to one control. A year
/// enters only when every key has a defined distance for it.
pub fn average_series(series: &[NwdSeries], config: &StudyConfig) -> Vec<NwdPoint> {
    let mut out = Vec::new();
    if series.is_empty() {
        return out;
    }
    for year in config.years() {
        let pts: Vec<&NwdPoint> = series.iter().filter_map(|s| s.point(year)).collect();
        if pts.len() != series.len() || pts.iter().any(|p| !p.is_defined()) {
            continue;
        }
        let k = pts.len() as f64;
        let value = pts.iter().map(|p| p.value.unwrap()).sum::<f64>() / k;
        let stderr = pts
            .iter()
            .map(|p| p.stderr.unwrap_or(0.0).powi(2))
            .sum::<f64>()
            .sqrt()
            / k;
        let mut flags = BTreeSet::new();
        for p in &pts {
            flags.extend(p.flags.iter().copied());
        }
        flags.remove(&PointFlag::OutOfUnitRange);
        if !(0.0..=1.0).contains(&value) {
            flags.insert(PointFlag::OutOfUnitRange);
        }
        out.push(NwdPoint {
            year,
            value: Some(value),
            stderr: Some(stderr),
            flags,
        });
    }
    out
}

/// Fits of each key term's distance to each control (and neutral) term, plus
/// the fit of the distance averaged over key terms.
pub fn control_drift_report(idx: &SampleIndex, config: &StudyConfig) -> ControlDriftReport {
    let keys: Vec<&TermSpec> = config.key_terms().collect();
    let mut per_key = Vec::new();
    let mut averaged = Vec::new();
    let mut failing = Vec::new();
    let mut any_fit = false;

    for control in config.control_terms() {
        let mut series = Vec::new();
        for key in &keys {
            let s = build_nwd_series(idx, key, control, config);
            let fit = fit_trend(&s, config).ok();
            let class = fit.as_ref().map(|f| classify_trend(f, config));
            if let Some(c) = &class {
                any_fit = true;
                if c.class != Drift::Constant {
                    failing.push(pair_label(&key.text, &control.text));
                }
            }
            per_key.push(ControlFit {
                key: key.text.clone(),
                control: control.text.clone(),
                fit,
                class,
            });
            series.push(s);
        }
        let avg = average_series(&series, config);
        let avg_series = NwdSeries {
            u: control.clone(),
            v: control.clone(),
            points: avg.clone(),
        };
        let fit = fit_trend(&avg_series, config).ok();
        let class = fit.as_ref().map(|f| classify_trend(f, config));
        if let Some(c) = &class {
            any_fit = true;
            if c.class != Drift::Constant {
                failing.push(pair_label("*", &control.text));
            }
        }
        averaged.push(AveragedControl {
            control: control.text.clone(),
            series: avg,
            fit,
            class,
        });
    }

    let verdict = if !any_fit {
        ControlVerdict::Unavailable
    } else if failing.is_empty() {
        ControlVerdict::AllConstant
    } else {
        ControlVerdict::Drift(failing)
    };
    ControlDriftReport {
        per_key,
        averaged,
        verdict,
    }
}

/// Distance series for every measured pair, in the study's pair order.
pub fn all_series(idx: &SampleIndex, config: &StudyConfig, method: ErrorMethod) -> Vec<NwdSeries> {
    config
        .measured_pairs()
        .into_iter()
        .map(|(u, v)| build_nwd_series_with(idx, u, v, config, method))
        .collect()
}

/// Artifact years for each term that has any.
pub fn artifact_map(idx: &SampleIndex, config: &StudyConfig) -> BTreeMap<String, BTreeSet<i32>> {
    config
        .terms
        .iter()
        .map(|t| (t.text.clone(), detect_count_artifacts(idx, &t.text, config)))
        .filter(|(_, years)| !years.is_empty())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::store::RawSample;
    use crate::study::TermRole;
    use chrono::{TimeZone, Utc};

    fn cfg(first: i32, last: i32) -> StudyConfig {
        StudyConfig::new(
            vec![
                TermSpec::new("u", TermRole::Key),
                TermSpec::new("v", TermRole::Neutral),
                TermSpec::new("the", TermRole::Control),
            ],
            (first, last),
        )
    }

    fn sample(q: &str, year: i32, count: u64, session: &str) -> RawSample {
        RawSample {
            query_canonical: q.to_string(),
            year,
            count,
            observed_at: Utc.with_ymd_and_hms(2014, 2, 16, 0, 0, 0).unwrap(),
            session_id: session.to_string(),
            provider_id: "test".to_string(),
        }
    }

    fn series_of(values: &[(i32, f64)]) -> NwdSeries {
        NwdSeries {
            u: TermSpec::new("u", TermRole::Key),
            v: TermSpec::new("v", TermRole::Neutral),
            points: values
                .iter()
                .map(|&(year, v)| NwdPoint {
                    year,
                    value: Some(v),
                    stderr: Some(0.0),
                    flags: BTreeSet::new(),
                })
                .collect(),
        }
    }

    #[test]
    fn exact_line() {
        let pts: Vec<(i32, f64)> = (2001..=2013)
            .map(|y| (y, 0.5 + 0.01 * (y - 2001) as f64))
            .collect();
        let fit = fit_trend(&series_of(&pts), &cfg(2001, 2013)).unwrap();
        assert!((fit.slope - 0.01).abs() < 1e-12);
        assert!(fit.slope_stderr.unwrap() < 1e-12);
        assert!((fit.r2.unwrap() - 1.0).abs() < 1e-12);
        assert_eq!((fit.n_points, fit.first_year, fit.last_year), (13, 2001, 2013));
    }

    #[test]
    fn horizontal_line_has_no_r2() {
        let pts: Vec<(i32, f64)> = (2001..=2013).map(|y| (y, 0.75)).collect();
        let fit = fit_trend(&series_of(&pts), &cfg(2001, 2013)).unwrap();
        assert_eq!(fit.slope, 0.0);
        assert_eq!(fit.r2, None);
        assert_eq!(fit.slope_stderr, Some(0.0));
        assert_eq!(classify_trend(&fit, &cfg(2001, 2013)).class, Drift::Constant);
        // 0.1 is not exactly representable; still flat
        let pts: Vec<(i32, f64)> = (2001..=2013).map(|y| (y, 0.1)).collect();
        assert_eq!(ols(&pts).unwrap().r2, None);
    }

    #[test]
    fn too_few_points() {
        assert_eq!(ols(&[(2001, 1.0)]), Err(InsufficientPoints(1)));
        assert!(ols(&[(2001, 1.0), (2001, 2.0)]).is_err());
        let two = ols(&[(2001, 1.0), (2002, 2.0)]).unwrap();
        assert_eq!(two.slope_stderr, None);
        assert_eq!(classify_trend(&two, &cfg(2001, 2002)).class, Drift::Constant);
    }

    fn fit(slope: f64, se: f64) -> TrendFit {
        TrendFit {
            slope,
            slope_stderr: Some(se),
            intercept: 0.0,
            r2: None,
            n_points: 13,
            first_year: 2001,
            last_year: 2013,
        }
    }

    #[test]
    fn classification() {
        let c = cfg(2001, 2013);
        assert_eq!(classify_trend(&fit(0.0130, 0.001), &c).class, Drift::Receding);
        assert_eq!(classify_trend(&fit(-0.008, 0.002), &c).class, Drift::Approaching);
        assert_eq!(classify_trend(&fit(-0.001, 0.001), &c).class, Drift::Constant);
        assert_eq!(classify_trend(&fit(0.0, 0.0), &c).class, Drift::Constant);
        // steep but too noisy
        let noisy = classify_trend(&fit(0.01, 0.005), &c);
        assert_eq!(noisy.class, Drift::Constant);
        assert_eq!(noisy.reasons.len(), 2);
    }

    #[test]
    fn artifact_runs() {
        let vals = |v: &[f64]| -> Vec<(i32, Option<f64>)> {
            v.iter().enumerate().map(|(i, x)| (1994 + i as i32, Some(*x))).collect()
        };
        let mut peyote = vec![16200.0; 7];
        peyote.extend([20000.0, 25000.0, 31000.0]);
        assert_eq!(
            equal_runs(&vals(&peyote), 3, 100.0),
            (1994..=2000).collect::<BTreeSet<_>>()
        );
        assert!(equal_runs(&vals(&[5.0; 7]), 3, 100.0).is_empty());
        assert!(equal_runs(&vals(&[1.0, 2.0, 3.0, 400.0, 500.0]), 3, 0.0).is_empty());
        // run of two is below the minimum; the later run of three is flagged
        assert_eq!(
            equal_runs(&vals(&[300.0, 300.0, 1.0, 500.0, 500.0, 500.0]), 3, 100.0),
            [1997, 1998, 1999].into_iter().collect()
        );
        // a missing year breaks a run
        let mut gap = vals(&[300.0; 6]);
        gap[3].1 = None;
        assert!(equal_runs(&gap, 4, 100.0).is_empty());
    }

    #[test]
    fn inclusion_exclusion_arithmetic() {
        let (r, rel, s) = inclusion_exclusion_from_means(1000.0, 100.0, 50.0, 1050.0, 0.05);
        assert_eq!((r, rel, s), (0.0, Some(0.0), Consistency::Consistent));
        let (r, rel, s) = inclusion_exclusion_from_means(1000.0, 100.0, 50.0, 1200.0, 0.05);
        assert_eq!(r, -150.0);
        assert_eq!(rel, Some(-0.125));
        assert_eq!(s, Consistency::Inconsistent);
    }

    #[test]
    fn inclusion_exclusion_from_store() {
        let c = cfg(2001, 2001);
        let mut samples = vec![
            sample("\"u\"", 2001, 1000, "a"),
            sample("\"v\"", 2001, 100, "a"),
            sample("\"u\" AND \"v\"", 2001, 50, "a"),
        ];
        let idx = SampleIndex::new(samples.clone());
        assert_eq!(
            inclusion_exclusion_check(&idx, "u", "v", 2001, &c).status,
            Consistency::Unavailable
        );
        samples.push(sample("\"v\" OR \"u\"", 2001, 1200, "a"));
        let idx = SampleIndex::new(samples);
        let d = inclusion_exclusion_check(&idx, "u", "v", 2001, &c);
        assert_eq!(d.relative_residual, Some(-0.125));
        assert_eq!(d.status, Consistency::Inconsistent);
    }

    fn store_for(years: std::ops::RangeInclusive<i32>, skip_joint: Option<i32>) -> SampleIndex {
        let mut s = Vec::new();
        for y in years {
            for (q, c) in [("\"u\"", 1000), ("\"v\"", 100), ("\"the\"", 10000)] {
                s.push(sample(q, y, c, "a"));
                s.push(sample(q, y, c, "a"));
            }
            if Some(y) != skip_joint {
                s.push(sample("\"u\" AND \"v\"", y, 50, "a"));
                s.push(sample("\"u\" AND \"v\"", y, 50, "a"));
            }
        }
        SampleIndex::new(s)
    }

    #[test]
    fn series_with_gap_and_cutoff() {
        let c = cfg(1999, 2005);
        let idx = store_for(1999..=2005, Some(2003));
        let s = build_nwd_series(&idx, &c.terms[0], &c.terms[1], &c);
        let years: Vec<i32> = s.points.iter().map(|p| p.year).collect();
        assert_eq!(years, vec![1999, 2000, 2001, 2002, 2004, 2005]);
        assert!(s.point(1999).unwrap().has(PointFlag::PreCutoff));
        assert!(s.point(2000).unwrap().has(PointFlag::PreCutoff));
        assert!(!s.point(2001).unwrap().has(PointFlag::PreCutoff));
        assert!((s.point(2005).unwrap().value.unwrap() - 0.3252575).abs() < 1e-7);
        // constant counts above the floor are an artifact run by construction
        assert!(s.point(2005).unwrap().has(PointFlag::ArtifactYear));
    }

    #[test]
    fn session_spread_error_bars() {
        let c = cfg(2001, 2001);
        let mut s = Vec::new();
        for (sess, u) in [("a", 1000), ("b", 1100), ("c", 900)] {
            s.push(sample("\"u\"", 2001, u, sess));
            s.push(sample("\"v\"", 2001, 100, sess));
            s.push(sample("\"u\" AND \"v\"", 2001, 50, sess));
            s.push(sample("\"the\"", 2001, 10000, sess));
        }
        let idx = SampleIndex::new(s);
        let delta = build_nwd_series(&idx, &c.terms[0], &c.terms[1], &c);
        let spread =
            build_nwd_series_with(&idx, &c.terms[0], &c.terms[1], &c, ErrorMethod::SessionSpread);
        assert_eq!(delta.points[0].value, spread.points[0].value);
        let per: Vec<f64> = [1000f64, 1100.0, 900.0]
            .iter()
            .map(|u| (u.ln() - 50f64.ln()) / (1e6f64.ln() - 100f64.ln()))
            .collect();
        let want = CountStats::from_counts("", 2001, &per).stderr;
        assert!((spread.points[0].stderr.unwrap() - want).abs() < 1e-15);
    }

    #[test]
    fn growth() {
        let c = cfg(2001, 2013);
        let mut s = Vec::new();
        for y in 2001..=2013 {
            s.push(sample("\"u\"", y, 1u64 << (y - 2001), "a"));
            s.push(sample("\"v\"", y, 500, "a"));
            s.push(sample("\"the\"", y, if y == 2005 { 0 } else { 10 }, "a"));
        }
        let idx = SampleIndex::new(s);
        let g = growth_series(&idx, "u", &c);
        assert!((g.fit.as_ref().unwrap().slope - 2f64.log10()).abs() < 1e-12);
        let flat = growth_series(&idx, "v", &c);
        assert_eq!(flat.fit.as_ref().unwrap().slope, 0.0);
        let gap = growth_series(&idx, "the", &c);
        assert_eq!(gap.points.len(), 13);
        assert_eq!(gap.points[4].log10_count, None);
        assert_eq!(gap.fit.unwrap().n_points, 12);
    }

    #[test]
    fn averaged_controls() {
        let c = cfg(2001, 2003);
        let a = series_of(&[(2001, 0.7), (2002, 0.8), (2003, 0.9)]);
        let mut b = series_of(&[(2001, 0.9), (2002, 0.8)]);
        b.points[0].stderr = Some(0.2);
        let avg = average_series(&[a, b], &c);
        assert_eq!(avg.len(), 2);
        assert!((avg[0].value.unwrap() - 0.8).abs() < 1e-15);
        assert!((avg[0].stderr.unwrap() - 0.1).abs() < 1e-15);
    }

    #[test]
    fn single_year_controls_are_unavailable() {
        let c = cfg(2005, 2005);
        let idx = store_for(2005..=2005, None);
        let r = control_drift_report(&idx, &c);
        assert_eq!(r.verdict, ControlVerdict::Unavailable);
        assert!(r.per_key.iter().all(|f| f.fit.is_none()));
    }
}
