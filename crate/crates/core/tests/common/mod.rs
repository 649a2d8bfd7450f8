//! Independent oracles shared by the integration tests. Nothing here calls
//! into the code paths it is used to check.

#![allow(dead_code)]

use std::collections::BTreeSet;

use dynfuse::fusion::{self, NormParams, WindowPolicy};
use dynfuse::scheduler::ClassifierProfile;
use dynfuse::{ClassifierId, ContextLabel, FusedScore, History, TimeInstant, TimeSpan};

/// Brute-force scheduling: list every subset recursively, keep those whose
/// own combined probability exceeds `th_p`, add the time-critical set, and
/// take the first after sorting by (cost, sorted id list).
pub fn schedule_oracle(
    profile: &ClassifierProfile,
    ctx: &ContextLabel,
    dt_crit: TimeSpan,
    th_p: f64,
    dt_delay: TimeSpan,
) -> BTreeSet<ClassifierId> {
    let all: Vec<(ClassifierId, f64, u64, f64)> = profile
        .iter()
        .map(|(cid, spec)| {
            (
                cid.clone(),
                spec.auth_prob[ctx],
                spec.time.as_millis(),
                spec.cost,
            )
        })
        .collect();
    let crit: Vec<&ClassifierId> = all
        .iter()
        .filter(|(_, _, time, _)| time + dt_delay.as_millis() >= dt_crit.as_millis())
        .map(|(cid, ..)| cid)
        .collect();

    fn subsets<T: Clone>(items: &[T]) -> Vec<Vec<T>> {
        match items.split_first() {
            None => vec![vec![]],
            Some((head, rest)) => {
                let tails = subsets(rest);
                let mut out = tails.clone();
                for mut t in tails {
                    t.insert(0, head.clone());
                    out.push(t);
                }
                out
            }
        }
    }

    let mut candidates: Vec<(f64, Vec<String>)> = Vec::new();
    for sub in subsets(&all) {
        // Same multiplication order as ascending ids, to match rounding.
        let miss = sub.iter().fold(1.0, |acc, (_, p, _, _)| acc * (1.0 - p));
        if 1.0 - miss <= th_p {
            continue;
        }
        let mut names: BTreeSet<String> = sub.iter().map(|(c, ..)| c.as_str().to_owned()).collect();
        names.extend(crit.iter().map(|c| c.as_str().to_owned()));
        let cost: f64 = all
            .iter()
            .filter(|(c, ..)| names.contains(c.as_str()))
            .map(|(.., cost)| cost)
            .sum();
        candidates.push((cost, names.into_iter().collect()));
    }
    if candidates.is_empty() {
        return all.into_iter().map(|(c, ..)| c).collect();
    }
    candidates.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then_with(|| a.1.cmp(&b.1)));
    candidates[0].1.iter().map(|s| ClassifierId::from(s.as_str())).collect()
}

/// Critical time by advancing the window 1 ms at a time and re-fusing.
pub fn critical_time_dense(
    cids: &BTreeSet<ClassifierId>,
    history: &History,
    ctx: &ContextLabel,
    t_now: TimeInstant,
    policy: &WindowPolicy,
    norm: &NormParams,
    th_beta: f64,
) -> TimeSpan {
    let mut d = 0i64;
    loop {
        let beta = fusion::fuse(cids, history, ctx, TimeInstant(t_now.0 + d), policy, norm).unwrap();
        let below = match beta {
            FusedScore::Absent => true,
            FusedScore::Value(v) => v < th_beta,
        };
        if below {
            return TimeSpan::from_millis(d as u64);
        }
        d += 1;
    }
}

/// Plain-loop mean and population standard deviation.
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// EER by brute force over every candidate threshold: the point where
/// |FAR - FRR| is smallest, reporting their mean. Used only as a coarse
/// cross-check (it ignores interpolation).
pub fn eer_coarse(genuine: &[f64], impostor: &[f64]) -> f64 {
    let mut ths: Vec<f64> = genuine.iter().chain(impostor).copied().collect();
    ths.push(f64::INFINITY);
    let mut best = (f64::INFINITY, 0.5);
    for th in ths {
        let far = impostor.iter().filter(|&&s| s >= th).count() as f64 / impostor.len() as f64;
        let frr = genuine.iter().filter(|&&s| s < th).count() as f64 / genuine.len() as f64;
        let gap = (far - frr).abs();
        if gap < best.0 {
            best = (gap, (far + frr) / 2.0);
        }
    }
    best.1
}
