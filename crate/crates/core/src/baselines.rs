//! Parallel fusion rules used for comparison: all classifiers are run at a
//! single instant and their normalized scores combined by max, sum, or a
//! context-weighted sum (CWMA) whose weights minimize training EER.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval;
use crate::types::{ClassifierId, ContextLabel};

pub fn fuse_max(normalized_scores: &[f64]) -> Result<f64> {
    if normalized_scores.is_empty() {
        return Err(Error::Validation("max rule needs at least one score".into()));
    }
    Ok(normalized_scores.iter().copied().fold(f64::NEG_INFINITY, f64::max))
}

pub fn fuse_sum(normalized_scores: &[f64]) -> Result<f64> {
    if normalized_scores.is_empty() {
        return Err(Error::Validation("sum rule needs at least one score".into()));
    }
    Ok(normalized_scores.iter().sum())
}

/// Per-context classifier weights in `[0, 1]`, not normalized to sum to 1.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CwmaWeights {
    weights: BTreeMap<ContextLabel, BTreeMap<ClassifierId, f64>>,
}

impl CwmaWeights {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn set(&mut self, context: ContextLabel, cid: ClassifierId, w: f64) -> Result<()> {
        if !(0.0..=1.0).contains(&w) {
            return Err(Error::Validation(format!(
                "CWMA weight for ({context}, {cid}) must lie in [0, 1], got {w}"
            )));
        }
        self.weights.entry(context).or_default().insert(cid, w);
        Ok(())
    }

    pub fn get(&self, context: &ContextLabel, cid: &ClassifierId) -> Result<f64> {
        self.weights
            .get(context)
            .and_then(|m| m.get(cid))
            .copied()
            .ok_or_else(|| Error::Config(format!("no CWMA weight for ({context}, {cid})")))
    }

    pub fn context(&self, context: &ContextLabel) -> Option<&BTreeMap<ClassifierId, f64>> {
        self.weights.get(context)
    }
}

/// Weighted sum of scores using the weights of `context`.
pub fn cwma_fuse(
    weights: &CwmaWeights,
    context: &ContextLabel,
    scores: &BTreeMap<ClassifierId, f64>,
) -> Result<f64> {
    scores
        .iter()
        .map(|(cid, s)| Ok(weights.get(context, cid)? * s))
        .sum()
}

/// Labeled training trials for one context. Each row holds one normalized
/// score per classifier, in the order of `cids`.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingTrials {
    pub cids: Vec<ClassifierId>,
    pub genuine: Vec<Vec<f64>>,
    pub impostor: Vec<Vec<f64>>,
}

impl TrainingTrials {
    fn validate(&self, context: &ContextLabel) -> Result<()> {
        if self.genuine.is_empty() || self.impostor.is_empty() {
            return Err(Error::Validation(format!(
                "CWMA training for {context} needs genuine and impostor trials"
            )));
        }
        if self.cids.is_empty() {
            return Err(Error::Validation(format!("no classifiers for {context}")));
        }
        let k = self.cids.len();
        if self.genuine.iter().chain(&self.impostor).any(|r| r.len() != k) {
            return Err(Error::Validation(format!(
                "training rows for {context} must have {k} scores"
            )));
        }
        Ok(())
    }

    /// EER of the weighted sum `w . row`, reusing caller buffers.
    fn weighted_eer(&self, w: &[f64], gbuf: &mut Vec<f64>, ibuf: &mut Vec<f64>) -> f64 {
        let dot = |row: &Vec<f64>| row.iter().zip(w).map(|(s, w)| s * w).sum::<f64>();
        gbuf.clear();
        gbuf.extend(self.genuine.iter().map(dot));
        ibuf.clear();
        ibuf.extend(self.impostor.iter().map(dot));
        gbuf.sort_unstable_by(f64::total_cmp);
        ibuf.sort_unstable_by(f64::total_cmp);
        eval::eer_sorted(gbuf, ibuf)
    }

    /// Training EER of an explicit weight vector.
    pub fn eer_with(&self, w: &[f64]) -> f64 {
        self.weighted_eer(w, &mut Vec::new(), &mut Vec::new())
    }
}

/// Number of grid points per axis for `grid_step`, which must divide 1.
pub fn grid_points(grid_step: f64) -> Result<usize> {
    if !(grid_step > 0.0 && grid_step <= 1.0) {
        return Err(Error::Validation(format!(
            "grid_step must lie in (0, 1], got {grid_step}"
        )));
    }
    let n = (1.0 / grid_step).round();
    if (n * grid_step - 1.0).abs() > 1e-9 {
        return Err(Error::Validation(format!(
            "grid_step {grid_step} does not divide 1 evenly"
        )));
    }
    Ok(n as usize + 1)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContextTraining {
    pub weights: BTreeMap<ClassifierId, f64>,
    pub training_eer: f64,
    pub uniform_eer: f64,
    pub evaluated: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CwmaTraining {
    pub weights: CwmaWeights,
    pub per_context: BTreeMap<ContextLabel, ContextTraining>,
}

/// Exhaustive grid search for the weight vector minimizing training EER in
/// one context. Vectors are visited in lexicographic order and only a
/// strictly lower EER replaces the incumbent, so ties go to the
/// lexicographically smallest vector.
pub fn train_context(
    context: &ContextLabel,
    trials: &TrainingTrials,
    grid_step: f64,
) -> Result<ContextTraining> {
    trials.validate(context)?;
    let points = grid_points(grid_step)?;
    let k = trials.cids.len();
    let denom = (points - 1) as f64;

    let mut digits = vec![0usize; k];
    let mut w = vec![0.0; k];
    let (mut gbuf, mut ibuf) = (Vec::new(), Vec::new());
    let mut best: Option<(f64, Vec<f64>)> = None;
    let mut evaluated = 0usize;
    loop {
        for (wi, &d) in w.iter_mut().zip(&digits) {
            *wi = d as f64 / denom;
        }
        let e = trials.weighted_eer(&w, &mut gbuf, &mut ibuf);
        evaluated += 1;
        if best.as_ref().is_none_or(|(be, _)| e < *be) {
            best = Some((e, w.clone()));
        }
        // Odometer increment, last axis fastest.
        let mut axis = k;
        loop {
            if axis == 0 {
                let (training_eer, bw) = best.expect("grid has at least one vector");
                return Ok(ContextTraining {
                    weights: trials.cids.iter().cloned().zip(bw).collect(),
                    training_eer,
                    uniform_eer: trials.eer_with(&vec![1.0; k]),
                    evaluated,
                });
            }
            axis -= 1;
            digits[axis] += 1;
            if digits[axis] < points {
                break;
            }
            digits[axis] = 0;
        }
    }
}

/// Trains CWMA weights for every context.
pub fn cwma_train(
    training: &BTreeMap<ContextLabel, TrainingTrials>,
    grid_step: f64,
) -> Result<CwmaTraining> {
    if training.is_empty() {
        return Err(Error::Validation("CWMA training set is empty".into()));
    }
    let mut weights = CwmaWeights::new();
    let mut per_context = BTreeMap::new();
    for (ctx, trials) in training {
        let t = train_context(ctx, trials, grid_step)?;
        for (cid, w) in &t.weights {
            weights.set(ctx.clone(), cid.clone(), *w)?;
        }
        per_context.insert(ctx.clone(), t);
    }
    Ok(CwmaTraining {
        weights,
        per_context,
    })
}
