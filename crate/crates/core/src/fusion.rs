//! Windowed two-dimensional score fusion.
//!
//! Raw scores are z-normalized per classifier, averaged per classifier over
//! the authentication window (sample fusion), then averaged across the
//! classifiers that produced at least one in-window score (classifier
//! fusion).

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::history::History;
use crate::types::{ClassifierId, ContextLabel, TimeInstant, TimeSpan};

/// A fused score, or `Absent` when there was nothing to average.
///
/// `Absent` compares below every threshold, so a device with no in-window
/// evidence locks.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FusedScore {
    Value(f64),
    Absent,
}

impl FusedScore {
    pub fn value(self) -> Option<f64> {
        match self {
            FusedScore::Value(v) => Some(v),
            FusedScore::Absent => None,
        }
    }

    /// Lock test: `Absent` or strictly below `threshold`.
    pub fn is_below(self, threshold: f64) -> bool {
        match self {
            FusedScore::Value(v) => v < threshold,
            FusedScore::Absent => true,
        }
    }

    /// Maps `Absent` to negative infinity so it sorts below any real score.
    pub fn or_neg_infinity(self) -> f64 {
        self.value().unwrap_or(f64::NEG_INFINITY)
    }
}

impl fmt::Display for FusedScore {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FusedScore::Value(v) => write!(f, "{v}"),
            FusedScore::Absent => f.write_str("NA"),
        }
    }
}

/// Mean and population standard deviation of one classifier's training
/// scores.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ZScore {
    pub mu: f64,
    pub sigma: f64,
}

impl ZScore {
    pub const IDENTITY: ZScore = ZScore { mu: 0.0, sigma: 1.0 };

    pub fn apply(&self, raw: f64) -> f64 {
        (raw - self.mu) / self.sigma
    }
}

/// Fits z-score parameters using the population standard deviation.
pub fn zscore_fit(scores: &[f64]) -> Result<ZScore> {
    if scores.len() < 2 {
        return Err(Error::Fit(format!(
            "need at least 2 training scores, got {}",
            scores.len()
        )));
    }
    if let Some(bad) = scores.iter().find(|s| !s.is_finite()) {
        return Err(Error::Fit(format!("non-finite training score {bad}")));
    }
    let n = scores.len() as f64;
    let mu = scores.iter().sum::<f64>() / n;
    let var = scores.iter().map(|s| (s - mu).powi(2)).sum::<f64>() / n;
    let sigma = var.sqrt();
    if sigma <= 0.0 {
        return Err(Error::Fit("training scores have zero variance".into()));
    }
    Ok(ZScore { mu, sigma })
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NormParams {
    per_classifier: BTreeMap<ClassifierId, ZScore>,
}

impl NormParams {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn fit<'a, I>(training: I) -> Result<Self>
    where
        I: IntoIterator<Item = (&'a ClassifierId, &'a [f64])>,
    {
        let mut out = NormParams::new();
        for (cid, scores) in training {
            let z = zscore_fit(scores).map_err(|e| Error::Fit(format!("{cid}: {e}")))?;
            out.per_classifier.insert(cid.clone(), z);
        }
        Ok(out)
    }

    /// Pass-through normalization for scores that are already normalized.
    pub fn identity<'a>(cids: impl IntoIterator<Item = &'a ClassifierId>) -> Self {
        NormParams {
            per_classifier: cids.into_iter().map(|c| (c.clone(), ZScore::IDENTITY)).collect(),
        }
    }

    pub fn insert(&mut self, cid: ClassifierId, z: ZScore) -> Result<()> {
        if !(z.sigma > 0.0 && z.sigma.is_finite() && z.mu.is_finite()) {
            return Err(Error::Validation(format!(
                "normalization for {cid} needs finite mu and positive sigma"
            )));
        }
        self.per_classifier.insert(cid, z);
        Ok(())
    }

    pub fn get(&self, cid: &ClassifierId) -> Result<ZScore> {
        self.per_classifier
            .get(cid)
            .copied()
            .ok_or_else(|| Error::Config(format!("no normalization parameters for {cid}")))
    }

    pub fn apply(&self, cid: &ClassifierId, raw: f64) -> Result<f64> {
        Ok(self.get(cid)?.apply(raw))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&ClassifierId, &ZScore)> {
        self.per_classifier.iter()
    }
}

/// Average of one classifier's in-window scores.
pub fn sample_fusion(scores: &[f64]) -> FusedScore {
    if scores.is_empty() {
        FusedScore::Absent
    } else {
        FusedScore::Value(scores.iter().sum::<f64>() / scores.len() as f64)
    }
}

/// Average across classifiers, ignoring `Absent` entries.
pub fn classifier_fusion(per_classifier: &[FusedScore]) -> FusedScore {
    let present: Vec<f64> = per_classifier.iter().filter_map(|b| b.value()).collect();
    sample_fusion(&present)
}

/// Authentication window length per context.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct WindowPolicy {
    windows: BTreeMap<ContextLabel, TimeSpan>,
}

impl WindowPolicy {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, context: ContextLabel, window: TimeSpan) -> Result<()> {
        if window == TimeSpan::ZERO {
            return Err(Error::Validation(format!(
                "authentication window for {context} must be positive"
            )));
        }
        self.windows.insert(context, window);
        Ok(())
    }

    pub fn auth_window(&self, context: &ContextLabel) -> Result<TimeSpan> {
        self.windows
            .get(context)
            .copied()
            .ok_or_else(|| Error::Config(format!("no authentication window for context {context}")))
    }

    pub fn contexts(&self) -> impl Iterator<Item = &ContextLabel> {
        self.windows.keys()
    }

    /// Longest window over all contexts.
    pub fn max_window(&self) -> TimeSpan {
        self.windows.values().copied().max().unwrap_or(TimeSpan::ZERO)
    }
}

/// Fuses every score with `t > bound`.
pub fn fuse_after(
    cids: &BTreeSet<ClassifierId>,
    history: &History,
    bound: TimeInstant,
    norm: &NormParams,
) -> Result<FusedScore> {
    let mut betas = Vec::with_capacity(cids.len());
    let mut gamma = Vec::new();
    for cid in cids {
        let samples = history.since(cid, bound);
        gamma.clear();
        if !samples.is_empty() {
            let z = norm.get(cid)?;
            gamma.extend(samples.iter().map(|s| z.apply(s.alpha)));
        }
        betas.push(sample_fusion(&gamma));
    }
    Ok(classifier_fusion(&betas))
}

/// Fused score over the authentication window ending at `t_now`.
pub fn fuse(
    cids: &BTreeSet<ClassifierId>,
    history: &History,
    context: &ContextLabel,
    t_now: TimeInstant,
    policy: &WindowPolicy,
    norm: &NormParams,
) -> Result<FusedScore> {
    let window = policy.auth_window(context)?;
    fuse_after(cids, history, t_now - window, norm)
}

/// Time until the fused score drops below `th_beta` if no new scores arrive.
///
/// The window start slides forward from `t_now - window`; the fused value
/// only changes when it passes a score's timestamp, so each distinct
/// in-window timestamp is checked in order. Returns zero when the current
/// score is already below the threshold.
pub fn critical_time(
    cids: &BTreeSet<ClassifierId>,
    history: &History,
    context: &ContextLabel,
    t_now: TimeInstant,
    policy: &WindowPolicy,
    norm: &NormParams,
    th_beta: f64,
) -> Result<TimeSpan> {
    let start = t_now - policy.auth_window(context)?;
    if fuse_after(cids, history, start, norm)?.is_below(th_beta) {
        return Ok(TimeSpan::ZERO);
    }
    let mut expiries: Vec<TimeInstant> = cids
        .iter()
        .flat_map(|cid| history.since(cid, start).iter().map(|s| s.t))
        .collect();
    expiries.sort_unstable();
    expiries.dedup();
    for t in expiries {
        // Shifting the bound to `t` drops every score stamped `t` or earlier.
        if fuse_after(cids, history, t, norm)?.is_below(th_beta) {
            return Ok(t.since(start));
        }
    }
    unreachable!("fusing past the last score yields Absent, which is below any threshold")
}
