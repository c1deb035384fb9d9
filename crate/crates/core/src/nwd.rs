//! Normalized web distance for one year, its standard error, and the
//! year-over-year decomposition of a change in distance.
//!
//! For counts `n(u)`, `n(v)`, joint count `μ = n(u AND v)` and normalization `N`:
//!
//! ```text
//! NWD = (ln M − ln μ) / (ln N − ln m),   M = max(n(u), n(v)),  m = min(n(u), n(v))
//! ```
//!
//! Values outside `[0, 1]` are kept and flagged, never clamped.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::store::CountStats;

/// Normalization constant for one year and its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub value: f64,
    pub stderr: f64,
}

/// How the normalization constant is derived from the reference term's counts.
pub trait NormalizationRule {
    fn normalize(&self, ref_stats: &CountStats) -> Option<Normalization>;
}

/// `N = factor × mean(reference count)`; the windowed count of the reference
/// term is taken as that year's increment of the index.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScaledReference {
    pub factor: f64,
}

impl NormalizationRule for ScaledReference {
    fn normalize(&self, ref_stats: &CountStats) -> Option<Normalization> {
        normalization_constant(ref_stats, self.factor)
    }
}

/// `None` when the reference mean is not positive (undefined for that year).
pub fn normalization_constant(ref_stats: &CountStats, factor: f64) -> Option<Normalization> {
    if !(ref_stats.mean > 0.0) {
        return None;
    }
    Some(Normalization {
        value: factor * ref_stats.mean,
        stderr: factor * ref_stats.stderr,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PointFlag {
    OutOfUnitRange,
    JointExceedsMin,
    UndefinedJointZero,
    UndefinedDomain,
    PreCutoff,
    ArtifactYear,
    SingleSample,
}

impl PointFlag {
    pub fn as_str(self) -> &'static str {
        match self {
            PointFlag::OutOfUnitRange => "out_of_unit_range",
            PointFlag::JointExceedsMin => "joint_exceeds_min",
            PointFlag::UndefinedJointZero => "undefined_joint_zero",
            PointFlag::UndefinedDomain => "undefined_domain",
            PointFlag::PreCutoff => "pre_cutoff",
            PointFlag::ArtifactYear => "artifact_year",
            PointFlag::SingleSample => "single_sample",
        }
    }

    pub fn is_undefined(self) -> bool {
        matches!(self, PointFlag::UndefinedJointZero | PointFlag::UndefinedDomain)
    }
}

/// Per-year inputs of the distance. The max/min assignment is fixed at
/// construction: `M` comes from `u` unless `v` is strictly larger.
#[derive(Debug, Clone, PartialEq)]
pub struct PairCounts {
    pub year: i32,
    pub u_stats: CountStats,
    pub v_stats: CountStats,
    pub joint_stats: CountStats,
    pub big_n: Option<Normalization>,
}

impl PairCounts {
    pub fn new(
        year: i32,
        u_stats: CountStats,
        v_stats: CountStats,
        joint_stats: CountStats,
        big_n: Option<Normalization>,
    ) -> Self {
        PairCounts {
            year,
            u_stats,
            v_stats,
            joint_stats,
            big_n,
        }
    }

    /// Builds inputs from bare means and standard errors.
    pub fn from_values(
        year: i32,
        u: (f64, f64),
        v: (f64, f64),
        joint: (f64, f64),
        big_n: (f64, f64),
    ) -> Self {
        let stats = |q: &str, (mean, stderr): (f64, f64)| CountStats {
            query_canonical: q.to_string(),
            year,
            mean,
            std: stderr,
            stderr,
            n: 1,
            single_sample: false,
        };
        PairCounts {
            year,
            u_stats: stats("u", u),
            v_stats: stats("v", v),
            joint_stats: stats("u AND v", joint),
            big_n: Some(Normalization {
                value: big_n.0,
                stderr: big_n.1,
            }),
        }
    }

    fn max_min(&self) -> (&CountStats, &CountStats) {
        if self.v_stats.mean > self.u_stats.mean {
            (&self.v_stats, &self.u_stats)
        } else {
            (&self.u_stats, &self.v_stats)
        }
    }

    pub fn big_m(&self) -> f64 {
        self.max_min().0.mean
    }

    pub fn small_m(&self) -> f64 {
        self.max_min().1.mean
    }

    pub fn mu(&self) -> f64 {
        self.joint_stats.mean
    }

    /// Returns a copy with `u` and `v` exchanged.
    pub fn swapped(&self) -> Self {
        PairCounts {
            u_stats: self.v_stats.clone(),
            v_stats: self.u_stats.clone(),
            ..self.clone()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NwdPoint {
    pub year: i32,
    pub value: Option<f64>,
    pub stderr: Option<f64>,
    pub flags: BTreeSet<PointFlag>,
}

impl NwdPoint {
    pub fn is_defined(&self) -> bool {
        self.value.is_some()
    }

    pub fn has(&self, flag: PointFlag) -> bool {
        self.flags.contains(&flag)
    }

    pub fn flags_label(&self) -> String {
        self.flags
            .iter()
            .map(|f| f.as_str())
            .collect::<Vec<_>>()
            .join(";")
    }
}

/// Raw value of the distance, or the flags explaining why it is undefined.
fn nwd_value(pc: &PairCounts) -> Result<f64, BTreeSet<PointFlag>> {
    let mut undefined = BTreeSet::new();
    let (m_big, m_small, mu) = (pc.big_m(), pc.small_m(), pc.mu());
    if !(mu > 0.0) {
        undefined.insert(PointFlag::UndefinedJointZero);
    }
    match pc.big_n {
        Some(n) if m_small > 0.0 && n.value > m_small => {}
        _ => {
            undefined.insert(PointFlag::UndefinedDomain);
        }
    }
    if !undefined.is_empty() {
        return Err(undefined);
    }
    let n = pc.big_n.unwrap().value;
    Ok((m_big.ln() - mu.ln()) / (n.ln() - m_small.ln()))
}

pub fn compute_nwd(pc: &PairCounts) -> NwdPoint {
    let mut flags = BTreeSet::new();
    if pc.u_stats.single_sample || pc.v_stats.single_sample || pc.joint_stats.single_sample {
        flags.insert(PointFlag::SingleSample);
    }
    match nwd_value(pc) {
        Err(undefined) => {
            flags.extend(undefined);
            NwdPoint {
                year: pc.year,
                value: None,
                stderr: None,
                flags,
            }
        }
        Ok(value) => {
            if !(0.0..=1.0).contains(&value) {
                flags.insert(PointFlag::OutOfUnitRange);
            }
            if pc.mu() > pc.small_m() {
                flags.insert(PointFlag::JointExceedsMin);
            }
            NwdPoint {
                year: pc.year,
                value: Some(value),
                stderr: propagate_error(pc),
                flags,
            }
        }
    }
}

/// First-order (delta-method) standard error, treating `M`, `m`, `μ` and `N` as
/// independent:
///
/// ```text
/// σ = sqrt((σ_M/M)² + (σ_μ/μ)² + NWD²·((σ_m/m)² + (σ_N/N)²)) / (ln N − ln m)
/// ```
///
/// `None` when the distance itself is undefined.
pub fn propagate_error(pc: &PairCounts) -> Option<f64> {
    let value = nwd_value(pc).ok()?;
    let (max, min) = pc.max_min();
    let n = pc.big_n?;
    let rel = |s: f64, x: f64| s / x;
    let sum = rel(max.stderr, max.mean).powi(2)
        + rel(pc.joint_stats.stderr, pc.joint_stats.mean).powi(2)
        + value * value
            * (rel(min.stderr, min.mean).powi(2) + rel(n.stderr, n.value).powi(2));
    Some(sum.sqrt() / (n.value.ln() - min.mean.ln()))
}

/// Attribution of a year-over-year change in distance to its four inputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeltaBreakdown {
    pub year_from: i32,
    pub year_to: i32,
    /// δM/M
    pub term_dm_big: f64,
    /// −δμ/μ
    pub term_dmu: f64,
    /// NWD·δm/m
    pub term_dm_small: f64,
    /// −NWD·δN/N
    pub term_dn: f64,
    /// Sum of the four terms divided by `ln N − ln m`, all at `year_from`.
    pub predicted_delta: f64,
    /// Difference of the two exactly evaluated distances.
    pub exact_delta: f64,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("distance undefined in {year}; no decomposition for {from}->{to}")]
pub struct DecompositionUnavailable {
    pub year: i32,
    pub from: i32,
    pub to: i32,
}

pub fn delta_decomposition(
    pc_y: &PairCounts,
    pc_next: &PairCounts,
) -> Result<DeltaBreakdown, DecompositionUnavailable> {
    let unavailable = |year| DecompositionUnavailable {
        year,
        from: pc_y.year,
        to: pc_next.year,
    };
    let nwd_y = nwd_value(pc_y).map_err(|_| unavailable(pc_y.year))?;
    let nwd_next = nwd_value(pc_next).map_err(|_| unavailable(pc_next.year))?;
    let n_y = pc_y.big_n.unwrap().value;
    let n_next = pc_next.big_n.unwrap().value;

    let (big_m, small_m, mu) = (pc_y.big_m(), pc_y.small_m(), pc_y.mu());
    let term_dm_big = (pc_next.big_m() - big_m) / big_m;
    let term_dmu = -(pc_next.mu() - mu) / mu;
    let term_dm_small = nwd_y * (pc_next.small_m() - small_m) / small_m;
    let term_dn = -nwd_y * (n_next - n_y) / n_y;
    let predicted_delta =
        (term_dm_big + term_dmu + term_dm_small + term_dn) / (n_y.ln() - small_m.ln());
    Ok(DeltaBreakdown {
        year_from: pc_y.year,
        year_to: pc_next.year,
        term_dm_big,
        term_dmu,
        term_dm_small,
        term_dn,
        predicted_delta,
        exact_delta: nwd_next - nwd_y,
    })
}
