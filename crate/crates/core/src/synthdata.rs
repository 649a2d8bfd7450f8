//! Calibrated synthetic score models and trial-set construction.
//!
//! Each (classifier, context) pair has unit-variance Gaussian impostor
//! scores centred on 0 and genuine scores centred on `mu_g > 0`. For this
//! equal-variance model the EER is `Phi(-mu_g / 2)`, so `mu_g` can be set
//! to reproduce a target EER exactly.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::baselines::{self, CwmaWeights, TrainingTrials};
use crate::error::{Error, Result};
use crate::fusion::{self, NormParams, WindowPolicy};
use crate::history::History;
use crate::scheduler::{self, ClassifierProfile, SchedulerParams};
use crate::types::{ClassifierId, ContextLabel, ScoreRecord, TimeInstant, TimeSpan};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Genuine,
    Impostor,
}

impl Label {
    fn stream_id(self) -> u64 {
        match self {
            Label::Genuine => 0,
            Label::Impostor => 1,
        }
    }
}

impl FromStr for Label {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "genuine" => Ok(Label::Genuine),
            "impostor" => Ok(Label::Impostor),
            other => Err(Error::Validation(format!(
                "subject label must be genuine or impostor, got {other:?}"
            ))),
        }
    }
}

fn std_normal() -> Normal {
    Normal::standard()
}

/// Genuine-score mean whose equal-variance model has EER `target_eer`.
pub fn calibrate(target_eer: f64) -> Result<f64> {
    if !(target_eer > 0.0 && target_eer < 0.5) {
        return Err(Error::Validation(format!(
            "target EER must lie in (0, 0.5), got {target_eer}"
        )));
    }
    Ok(-2.0 * std_normal().inverse_cdf(target_eer))
}

/// EER implied by a genuine mean of `mu_g`.
pub fn analytic_eer(mu_g: f64) -> f64 {
    std_normal().cdf(-mu_g / 2.0)
}

/// True acceptance rate at the EER threshold `mu_g / 2`, i.e. `1 - EER`.
pub fn analytic_tar(mu_g: f64) -> f64 {
    std_normal().cdf(mu_g / 2.0)
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ScoreModel {
    genuine_mean: BTreeMap<ClassifierId, BTreeMap<ContextLabel, f64>>,
}

impl ScoreModel {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn set_genuine_mean(&mut self, cid: ClassifierId, ctx: ContextLabel, mu_g: f64) -> Result<()> {
        if !(mu_g > 0.0 && mu_g.is_finite()) {
            return Err(Error::Validation(format!(
                "genuine mean for ({cid}, {ctx}) must be positive, got {mu_g}"
            )));
        }
        self.genuine_mean.entry(cid).or_default().insert(ctx, mu_g);
        Ok(())
    }

    pub fn set_target_eer(&mut self, cid: ClassifierId, ctx: ContextLabel, eer: f64) -> Result<()> {
        let mu = calibrate(eer)?;
        self.set_genuine_mean(cid, ctx, mu)
    }

    pub fn genuine_mean(&self, cid: &ClassifierId, ctx: &ContextLabel) -> Result<f64> {
        self.genuine_mean
            .get(cid)
            .and_then(|m| m.get(ctx))
            .copied()
            .ok_or_else(|| Error::Config(format!("no score model for ({cid}, {ctx})")))
    }

    pub fn classifiers(&self) -> BTreeSet<ClassifierId> {
        self.genuine_mean.keys().cloned().collect()
    }

    pub fn contexts(&self) -> BTreeSet<ContextLabel> {
        self.genuine_mean
            .values()
            .flat_map(|m| m.keys().cloned())
            .collect()
    }

    /// One draw from the labeled distribution.
    pub fn draw_score<R: Rng + ?Sized>(
        &self,
        cid: &ClassifierId,
        ctx: &ContextLabel,
        label: Label,
        rng: &mut R,
    ) -> Result<f64> {
        let mu = self.genuine_mean(cid, ctx)?;
        let z: f64 = StandardNormal.sample(rng);
        Ok(match label {
            Label::Genuine => mu + z,
            Label::Impostor => z,
        })
    }

    /// Acceptance probabilities for the scheduler: the true acceptance
    /// rate of each model at its EER threshold.
    pub fn auth_prob_table(&self) -> BTreeMap<ClassifierId, BTreeMap<ContextLabel, f64>> {
        self.genuine_mean
            .iter()
            .map(|(cid, m)| {
                let row = m.iter().map(|(ctx, &mu)| (ctx.clone(), analytic_tar(mu))).collect();
                (cid.clone(), row)
            })
            .collect()
    }
}

/// Stream namespaces so that different uses of one seed never share draws.
#[derive(Debug, Clone, Copy)]
#[repr(u64)]
pub enum Stream {
    Normalization = 1,
    CwmaTraining = 2,
    Trials = 3,
    Scenario = 4,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// FNV-1a; stable across platforms and releases, unlike `DefaultHasher`.
pub fn label_hash(s: &str) -> u64 {
    s.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| {
        (h ^ b as u64).wrapping_mul(0x0100_0000_01b3)
    })
}

/// Independent generator for one (seed, stream, coordinates) tuple.
pub fn stream_rng(seed: u64, stream: Stream, coords: &[u64]) -> ChaCha8Rng {
    let mut h = splitmix64(seed ^ splitmix64(stream as u64));
    for &c in coords {
        h = splitmix64(h ^ c);
    }
    ChaCha8Rng::seed_from_u64(h)
}

/// Scores of every classifier in `cids` (ascending order) for one trial
/// instant. Baselines use instant 0; the scheduled approach at `k` instants
/// uses instants `0..k`, so approaches share their draws.
pub fn instant_scores(
    model: &ScoreModel,
    cids: &BTreeSet<ClassifierId>,
    ctx: &ContextLabel,
    label: Label,
    seed: u64,
    trial: usize,
    instant: u32,
) -> Result<Vec<f64>> {
    let mut rng = stream_rng(
        seed,
        Stream::Trials,
        &[label_hash(ctx.as_str()), label.stream_id(), trial as u64, instant as u64],
    );
    cids.iter()
        .map(|cid| model.draw_score(cid, ctx, label, &mut rng))
        .collect()
}

/// Fits per-classifier z-score parameters on `n_per_label` genuine and
/// `n_per_label` impostor draws in every context the model covers.
pub fn fit_normalization(model: &ScoreModel, n_per_label: usize, seed: u64) -> Result<NormParams> {
    let mut pooled: BTreeMap<ClassifierId, Vec<f64>> = BTreeMap::new();
    for cid in model.classifiers() {
        let scores = pooled.entry(cid.clone()).or_default();
        for ctx in model.contexts() {
            for label in [Label::Genuine, Label::Impostor] {
                let mut rng = stream_rng(
                    seed,
                    Stream::Normalization,
                    &[label_hash(cid.as_str()), label_hash(ctx.as_str()), label.stream_id()],
                );
                for _ in 0..n_per_label {
                    scores.push(model.draw_score(&cid, &ctx, label, &mut rng)?);
                }
            }
        }
    }
    NormParams::fit(pooled.iter().map(|(c, v)| (c, v.as_slice())))
}

/// Normalized training rows for CWMA in one context.
pub fn cwma_training_trials(
    model: &ScoreModel,
    ctx: &ContextLabel,
    n_per_label: usize,
    norm: &NormParams,
    seed: u64,
) -> Result<TrainingTrials> {
    let cids = model.classifiers();
    let rows = |label: Label| -> Result<Vec<Vec<f64>>> {
        let mut rng = stream_rng(
            seed,
            Stream::CwmaTraining,
            &[label_hash(ctx.as_str()), label.stream_id()],
        );
        (0..n_per_label)
            .map(|_| {
                cids.iter()
                    .map(|cid| norm.apply(cid, model.draw_score(cid, ctx, label, &mut rng)?))
                    .collect()
            })
            .collect()
    };
    Ok(TrainingTrials {
        cids: cids.iter().cloned().collect(),
        genuine: rows(Label::Genuine)?,
        impostor: rows(Label::Impostor)?,
    })
}

/// A fusion approach under evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Approach {
    Max,
    Sum,
    Cwma,
    /// The scheduled windowed fusion run at `k` successive instants.
    Scheduled(u32),
}

impl Approach {
    pub fn name(&self) -> String {
        match self {
            Approach::Max => "max".into(),
            Approach::Sum => "sum".into(),
            Approach::Cwma => "cwma".into(),
            Approach::Scheduled(k) => format!("our_{k}x"),
        }
    }
}

impl fmt::Display for Approach {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name())
    }
}

impl FromStr for Approach {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "max" => Ok(Approach::Max),
            "sum" => Ok(Approach::Sum),
            "cwma" => Ok(Approach::Cwma),
            _ => s
                .strip_prefix("our_")
                .and_then(|r| r.strip_suffix('x'))
                .and_then(|k| k.parse::<u32>().ok())
                .filter(|&k| k >= 1)
                .map(Approach::Scheduled)
                .ok_or_else(|| {
                    Error::Validation(format!(
                        "unknown approach {s:?} (expected max, sum, cwma or our_<k>x)"
                    ))
                }),
        }
    }
}

/// Everything trial construction needs besides the approach itself.
#[derive(Debug, Clone, Copy)]
pub struct TrialSetup<'a> {
    pub model: &'a ScoreModel,
    pub profile: &'a ClassifierProfile,
    pub params: SchedulerParams,
    pub policy: &'a WindowPolicy,
    pub norm: &'a NormParams,
    pub cwma: Option<&'a CwmaWeights>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ContextTrials {
    pub genuine: Vec<f64>,
    pub impostor: Vec<f64>,
    /// Score calculations per trial, genuine trials first.
    pub score_calcs: Vec<u32>,
}

impl ContextTrials {
    pub fn mean_score_calcs(&self) -> f64 {
        if self.score_calcs.is_empty() {
            return 0.0;
        }
        self.score_calcs.iter().map(|&c| c as f64).sum::<f64>() / self.score_calcs.len() as f64
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrialSet {
    pub per_context: BTreeMap<ContextLabel, ContextTrials>,
}

/// Builds `n_trials` genuine and `n_trials` impostor fused scores per
/// context.
///
/// Baselines fuse one normalized score from every classifier at a single
/// instant. `Scheduled(k)` runs the scheduler at `k` instants spaced by the
/// loop delay, stores the selected classifiers' scores, and fuses the
/// window at the last instant. The user is assumed authenticated during a
/// trial, so no classifier is time-critical.
pub fn build_trials(
    setup: &TrialSetup<'_>,
    approach: Approach,
    contexts: &[ContextLabel],
    n_trials: usize,
    seed: u64,
) -> Result<TrialSet> {
    if n_trials == 0 {
        return Err(Error::Validation("n_trials must be positive".into()));
    }
    let cids = setup.model.classifiers();
    let mut out = TrialSet::default();
    for ctx in contexts {
        let plan = match approach {
            Approach::Scheduled(_) => Some(scheduler::schedule(
                setup.profile,
                &cids,
                ctx,
                TimeSpan::MAX,
                &setup.params,
            )?),
            _ => None,
        };
        if approach == Approach::Cwma && setup.cwma.is_none() {
            return Err(Error::Config("CWMA approach requires trained weights".into()));
        }
        let mut cell = ContextTrials::default();
        for label in [Label::Genuine, Label::Impostor] {
            for trial in 0..n_trials {
                let (score, calcs) = match (approach, &plan) {
                    (Approach::Scheduled(k), Some(plan)) => {
                        scheduled_trial(setup, &cids, plan, ctx, label, seed, trial, k)?
                    }
                    _ => {
                        let raw = instant_scores(setup.model, &cids, ctx, label, seed, trial, 0)?;
                        let norm: Vec<f64> = cids
                            .iter()
                            .zip(&raw)
                            .map(|(cid, &r)| setup.norm.apply(cid, r))
                            .collect::<Result<_>>()?;
                        let fused = match approach {
                            Approach::Max => baselines::fuse_max(&norm)?,
                            Approach::Sum => baselines::fuse_sum(&norm)?,
                            _ => {
                                let scores = cids.iter().cloned().zip(norm).collect();
                                baselines::cwma_fuse(setup.cwma.unwrap(), ctx, &scores)?
                            }
                        };
                        (fused, cids.len() as u32)
                    }
                };
                match label {
                    Label::Genuine => cell.genuine.push(score),
                    Label::Impostor => cell.impostor.push(score),
                }
                cell.score_calcs.push(calcs);
            }
        }
        out.per_context.insert(ctx.clone(), cell);
    }
    Ok(out)
}

#[allow(clippy::too_many_arguments)]
fn scheduled_trial(
    setup: &TrialSetup<'_>,
    cids: &BTreeSet<ClassifierId>,
    plan: &BTreeSet<ClassifierId>,
    ctx: &ContextLabel,
    label: Label,
    seed: u64,
    trial: usize,
    k: u32,
) -> Result<(f64, u32)> {
    let delay = setup.params.dt_delay.as_millis() as i64;
    let mut history = History::new();
    let mut calcs = 0;
    for instant in 0..k {
        let raw = instant_scores(setup.model, cids, ctx, label, seed, trial, instant)?;
        let t = TimeInstant(instant as i64 * delay);
        for (cid, alpha) in cids.iter().zip(raw) {
            if plan.contains(cid) {
                history.insert(ScoreRecord::new(cid.clone(), alpha, t))?;
                calcs += 1;
            }
        }
    }
    let t_now = TimeInstant((k as i64 - 1) * delay);
    let beta = fusion::fuse(cids, &history, ctx, t_now, setup.policy, setup.norm)?;
    Ok((beta.or_neg_infinity(), calcs))
}

/// Standalone EER of one classifier on the instant-0 trial draws.
pub fn standalone_eer(
    model: &ScoreModel,
    cid: &ClassifierId,
    ctx: &ContextLabel,
    n_pairs: usize,
    seed: u64,
) -> Result<f64> {
    let single: BTreeSet<ClassifierId> = [cid.clone()].into();
    let draw = |label| -> Result<Vec<f64>> {
        (0..n_pairs)
            .map(|trial| Ok(instant_scores(model, &single, ctx, label, seed, trial, 0)?[0]))
            .collect()
    };
    crate::eval::equal_error_rate(&draw(Label::Genuine)?, &draw(Label::Impostor)?)
}
