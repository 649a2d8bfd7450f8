//! Context-aware classifier scheduling.
//!
//! Every subset of the available classifiers is a potential candidate. A
//! subset qualifies when its combined acceptance probability, computed under
//! an independence assumption, is strictly above `th_p`. Time-critical
//! classifiers (those that could not complete a capture before the device
//! would lock) are added to every candidate regardless of cost, and the
//! cheapest resulting set wins. With no qualifying subset, every classifier
//! is activated.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{ClassifierId, ContextLabel, TimeSpan};

/// Largest classifier set accepted; enumeration visits `2^n` subsets.
pub const MAX_CLASSIFIERS: usize = 16;

/// Static description of one classifier.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifierSpec {
    /// Estimated true acceptance rate per context.
    pub auth_prob: BTreeMap<ContextLabel, f64>,
    /// Capture plus processing latency.
    pub time: TimeSpan,
    /// Resource cost of one activation, summed by [`AdditiveCost`].
    pub cost: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ClassifierProfile {
    classifiers: BTreeMap<ClassifierId, ClassifierSpec>,
}

impl ClassifierProfile {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, cid: ClassifierId, spec: ClassifierSpec) -> Result<()> {
        for (ctx, p) in &spec.auth_prob {
            if !(0.0..=1.0).contains(p) {
                return Err(Error::Validation(format!(
                    "auth_prob of {cid} in context {ctx} must lie in [0, 1], got {p}"
                )));
            }
        }
        if spec.time == TimeSpan::ZERO {
            return Err(Error::Validation(format!("time of {cid} must be positive")));
        }
        if !(spec.cost.is_finite() && spec.cost >= 0.0) {
            return Err(Error::Validation(format!(
                "cost of {cid} must be finite and non-negative, got {}",
                spec.cost
            )));
        }
        self.classifiers.insert(cid, spec);
        Ok(())
    }

    pub fn get(&self, cid: &ClassifierId) -> Result<&ClassifierSpec> {
        self.classifiers
            .get(cid)
            .ok_or_else(|| Error::Config(format!("no profile for classifier {cid}")))
    }

    pub fn auth_prob(&self, cid: &ClassifierId, context: &ContextLabel) -> Result<f64> {
        self.get(cid)?.auth_prob.get(context).copied().ok_or_else(|| {
            Error::Config(format!(
                "no auth_prob for classifier {cid} in context {context}"
            ))
        })
    }

    pub fn time(&self, cid: &ClassifierId) -> Result<TimeSpan> {
        Ok(self.get(cid)?.time)
    }

    pub fn ids(&self) -> BTreeSet<ClassifierId> {
        self.classifiers.keys().cloned().collect()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&ClassifierId, &ClassifierSpec)> {
        self.classifiers.iter()
    }

    pub fn len(&self) -> usize {
        self.classifiers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.classifiers.is_empty()
    }
}

/// Total resource cost of activating a set of classifiers.
///
/// Implementations must be monotone: a superset never costs less.
pub trait SetCost {
    /// `set` is sorted by classifier id.
    fn cost(&self, set: &[&ClassifierId]) -> Result<f64>;
}

/// Sum of the per-classifier costs stored in a profile.
#[derive(Debug, Clone, Copy)]
pub struct AdditiveCost<'a>(pub &'a ClassifierProfile);

impl SetCost for AdditiveCost<'_> {
    fn cost(&self, set: &[&ClassifierId]) -> Result<f64> {
        set.iter().map(|cid| Ok(self.0.get(cid)?.cost)).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SchedulerParams {
    pub th_p: f64,
    pub dt_delay: TimeSpan,
}

impl SchedulerParams {
    pub fn new(th_p: f64, dt_delay: TimeSpan) -> Result<Self> {
        if !(0.0..=1.0).contains(&th_p) {
            return Err(Error::Validation(format!(
                "th_p must lie in [0, 1], got {th_p}"
            )));
        }
        if dt_delay == TimeSpan::ZERO {
            return Err(Error::Validation("dt_delay must be positive".into()));
        }
        Ok(SchedulerParams { th_p, dt_delay })
    }
}

/// `1 - prod(1 - p)` over the subset; 0 for the empty set.
pub fn combined_prob<'a, I>(profile: &ClassifierProfile, subset: I, context: &ContextLabel) -> Result<f64>
where
    I: IntoIterator<Item = &'a ClassifierId>,
{
    let mut miss = 1.0;
    for cid in subset {
        miss *= 1.0 - profile.auth_prob(cid, context)?;
    }
    Ok(1.0 - miss)
}

/// Classifiers whose latency plus one loop delay reaches the critical time.
pub fn time_critical(
    profile: &ClassifierProfile,
    all_cids: &BTreeSet<ClassifierId>,
    dt_crit: TimeSpan,
    params: &SchedulerParams,
) -> Result<BTreeSet<ClassifierId>> {
    let mut crit = BTreeSet::new();
    for cid in all_cids {
        if profile.time(cid)? + params.dt_delay >= dt_crit {
            crit.insert(cid.clone());
        }
    }
    Ok(crit)
}

/// Chooses the classifiers to activate, using additive per-classifier costs.
pub fn schedule(
    profile: &ClassifierProfile,
    all_cids: &BTreeSet<ClassifierId>,
    context: &ContextLabel,
    dt_crit: TimeSpan,
    params: &SchedulerParams,
) -> Result<BTreeSet<ClassifierId>> {
    schedule_with_cost(profile, &AdditiveCost(profile), all_cids, context, dt_crit, params)
}

/// [`schedule`] with a caller-supplied set cost.
///
/// Among candidates of equal cost the one whose sorted id list is
/// lexicographically smallest is returned.
pub fn schedule_with_cost(
    profile: &ClassifierProfile,
    cost: &dyn SetCost,
    all_cids: &BTreeSet<ClassifierId>,
    context: &ContextLabel,
    dt_crit: TimeSpan,
    params: &SchedulerParams,
) -> Result<BTreeSet<ClassifierId>> {
    let n = all_cids.len();
    if n == 0 {
        return Err(Error::Validation("no classifiers to schedule".into()));
    }
    if n > MAX_CLASSIFIERS {
        return Err(Error::Validation(format!(
            "{n} classifiers exceed the scheduling limit of {MAX_CLASSIFIERS}"
        )));
    }

    let cids: Vec<&ClassifierId> = all_cids.iter().collect();
    let miss: Vec<f64> = cids
        .iter()
        .map(|cid| profile.auth_prob(cid, context).map(|p| 1.0 - p))
        .collect::<Result<_>>()?;
    let crit = time_critical(profile, all_cids, dt_crit, params)?;
    let crit_mask = cids
        .iter()
        .enumerate()
        .filter(|(_, cid)| crit.contains(**cid))
        .fold(0u32, |m, (i, _)| m | 1 << i);

    let members = |mask: u32| -> Vec<&ClassifierId> {
        (0..n).filter(|i| mask >> i & 1 == 1).map(|i| cids[i]).collect()
    };

    let mut best: Option<(f64, Vec<&ClassifierId>)> = None;
    for sub in 0u32..(1 << n) {
        let mut p_miss = 1.0;
        for (i, m) in miss.iter().enumerate() {
            if sub >> i & 1 == 1 {
                p_miss *= m;
            }
        }
        if 1.0 - p_miss <= params.th_p {
            continue;
        }
        let set = members(sub | crit_mask);
        let c = cost.cost(&set)?;
        if !c.is_finite() {
            return Err(Error::Config(format!("non-finite cost {c} for {set:?}")));
        }
        let better = match &best {
            None => true,
            Some((bc, bset)) => c < *bc || (c == *bc && set < *bset),
        };
        if better {
            best = Some((c, set));
        }
    }

    Ok(match best {
        Some((_, set)) => set.into_iter().cloned().collect(),
        None => all_cids.clone(),
    })
}
