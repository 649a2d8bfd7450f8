//! The main authentication loop as a deterministic discrete-event
//! simulation.
//!
//! Each step ingests classifier results that completed since the previous
//! step, fuses the window, decides the device state, computes the critical
//! time and schedules new activations. Captures take `Time(cid)` and their
//! results are delivered on the first step at or after completion.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::Write;

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fusion::{self, FusedScore, NormParams, WindowPolicy};
use crate::history::History;
use crate::scheduler::{self, ClassifierProfile, SchedulerParams};
use crate::synthdata::{self, Label, ScoreModel, Stream};
use crate::types::{ClassifierId, ContextLabel, ScoreRecord, TimeInstant, TimeSpan};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DeviceState {
    Locked,
    Unlocked,
}

impl fmt::Display for DeviceState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DeviceState::Locked => "locked",
            DeviceState::Unlocked => "unlocked",
        })
    }
}

/// Loop parameters shared by every step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyConfig {
    pub scheduler: SchedulerParams,
    pub th_beta: f64,
    pub windows: WindowPolicy,
    pub norm: NormParams,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PendingActivation {
    pub cid: ClassifierId,
    pub start: TimeInstant,
    pub completes_at: TimeInstant,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub t: TimeInstant,
    pub context: ContextLabel,
    pub beta: FusedScore,
    pub state: DeviceState,
    pub dt_crit: TimeSpan,
    /// Output of the scheduler for this step.
    pub scheduled: BTreeSet<ClassifierId>,
    /// Scheduled classifiers that were idle and started a capture.
    pub started: Vec<ClassifierId>,
    pub arrived: usize,
}

/// Loop state: score history, device state and in-flight captures.
#[derive(Debug, Clone)]
pub struct AuthLoop<'a> {
    profile: &'a ClassifierProfile,
    config: &'a PolicyConfig,
    cids: BTreeSet<ClassifierId>,
    history: History,
    state: DeviceState,
    pending: BTreeMap<ClassifierId, PendingActivation>,
    last_step: Option<TimeInstant>,
}

impl<'a> AuthLoop<'a> {
    pub fn new(profile: &'a ClassifierProfile, config: &'a PolicyConfig) -> Result<Self> {
        let cids = profile.ids();
        if cids.is_empty() {
            return Err(Error::Config("no classifiers in profile".into()));
        }
        for cid in &cids {
            config.norm.get(cid)?;
        }
        Ok(AuthLoop {
            profile,
            config,
            cids,
            history: History::new(),
            state: DeviceState::Locked,
            pending: BTreeMap::new(),
            last_step: None,
        })
    }

    pub fn history(&self) -> &History {
        &self.history
    }

    pub fn state(&self) -> DeviceState {
        self.state
    }

    pub fn pending(&self) -> impl Iterator<Item = &PendingActivation> {
        self.pending.values()
    }

    /// Removes and returns captures finished by `t_now`, ordered by
    /// completion time then classifier id.
    pub fn take_completed(&mut self, t_now: TimeInstant) -> Vec<PendingActivation> {
        let done: Vec<ClassifierId> = self
            .pending
            .values()
            .filter(|p| p.completes_at <= t_now)
            .map(|p| p.cid.clone())
            .collect();
        let mut out: Vec<_> = done
            .iter()
            .filter_map(|cid| self.pending.remove(cid))
            .collect();
        out.sort_by(|a, b| a.completes_at.cmp(&b.completes_at).then(a.cid.cmp(&b.cid)));
        out
    }

    /// One loop iteration at `t_now`, which must be later than the previous
    /// step.
    pub fn step(
        &mut self,
        arrived: Vec<ScoreRecord>,
        context: &ContextLabel,
        t_now: TimeInstant,
    ) -> Result<StepOutcome> {
        if let Some(prev) = self.last_step {
            if t_now <= prev {
                return Err(Error::Validation(format!(
                    "loop step at {t_now} does not follow previous step at {prev}"
                )));
            }
        }
        let cfg = self.config;
        let n_arrived = arrived.len();
        for r in arrived {
            if !self.cids.contains(&r.cid) {
                return Err(Error::Config(format!("result from unknown classifier {}", r.cid)));
            }
            self.history.insert(r)?;
        }
        // No window query from here on reaches further back than this.
        self.history
            .prune_through(t_now - cfg.windows.max_window() - cfg.scheduler.dt_delay);

        let beta = fusion::fuse(&self.cids, &self.history, context, t_now, &cfg.windows, &cfg.norm)?;
        self.state = if beta.is_below(cfg.th_beta) {
            DeviceState::Locked
        } else {
            DeviceState::Unlocked
        };
        let dt_crit = fusion::critical_time(
            &self.cids,
            &self.history,
            context,
            t_now,
            &cfg.windows,
            &cfg.norm,
            cfg.th_beta,
        )?;
        let scheduled =
            scheduler::schedule(self.profile, &self.cids, context, dt_crit, &cfg.scheduler)?;
        let mut started = Vec::new();
        for cid in &scheduled {
            if self.pending.contains_key(cid) {
                continue;
            }
            let completes_at = t_now + self.profile.time(cid)?;
            self.pending.insert(
                cid.clone(),
                PendingActivation {
                    cid: cid.clone(),
                    start: t_now,
                    completes_at,
                },
            );
            started.push(cid.clone());
        }
        self.last_step = Some(t_now);
        Ok(StepOutcome {
            t: t_now,
            context: context.clone(),
            beta,
            state: self.state,
            dt_crit,
            scheduled,
            started,
            arrived: n_arrived,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub start: TimeInstant,
    pub end: TimeInstant,
    pub context: ContextLabel,
    pub subject: Label,
}

/// Piecewise-constant context and subject timeline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub duration: TimeSpan,
    pub segments: Vec<Segment>,
    pub seed: u64,
}

impl Scenario {
    /// Segments must tile `[0, duration)` in order, without gaps.
    pub fn new(duration: TimeSpan, segments: Vec<Segment>, seed: u64) -> Result<Self> {
        if duration == TimeSpan::ZERO {
            return Err(Error::Validation("scenario duration must be positive".into()));
        }
        let mut cursor = TimeInstant::ZERO;
        for s in &segments {
            if s.start != cursor {
                return Err(Error::Validation(format!(
                    "scenario segment starting at {} leaves a gap or overlap at {cursor}",
                    s.start
                )));
            }
            if s.end <= s.start {
                return Err(Error::Validation(format!(
                    "scenario segment [{}, {}) is empty",
                    s.start, s.end
                )));
            }
            cursor = s.end;
        }
        if cursor != TimeInstant::ZERO + duration {
            return Err(Error::Validation(format!(
                "scenario segments end at {cursor}, expected {}",
                TimeInstant::ZERO + duration
            )));
        }
        Ok(Scenario {
            duration,
            segments,
            seed,
        })
    }

    /// Segment covering `t`; instants past the end map to the last one.
    pub fn segment_at(&self, t: TimeInstant) -> &Segment {
        self.segments
            .iter()
            .find(|s| t < s.end)
            .unwrap_or_else(|| self.segments.last().expect("validated non-empty"))
    }
}

/// Supplies the score of a completed capture.
pub trait ScoreSource {
    fn score(
        &mut self,
        cid: &ClassifierId,
        context: &ContextLabel,
        subject: Label,
        t: TimeInstant,
    ) -> Result<f64>;
}

/// Draws scores from a calibrated [`ScoreModel`].
pub struct SyntheticSource<'a> {
    model: &'a ScoreModel,
    rng: ChaCha8Rng,
}

impl<'a> SyntheticSource<'a> {
    pub fn new(model: &'a ScoreModel, seed: u64) -> Self {
        SyntheticSource {
            model,
            rng: synthdata::stream_rng(seed, Stream::Scenario, &[]),
        }
    }
}

impl ScoreSource for SyntheticSource<'_> {
    fn score(
        &mut self,
        cid: &ClassifierId,
        context: &ContextLabel,
        subject: Label,
        _t: TimeInstant,
    ) -> Result<f64> {
        self.model.draw_score(cid, context, subject, &mut self.rng)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub t: TimeInstant,
    pub context: ContextLabel,
    pub subject: Label,
    pub beta: FusedScore,
    pub state: DeviceState,
    pub dt_crit: TimeSpan,
    pub scheduled: BTreeSet<ClassifierId>,
    pub started: Vec<ClassifierId>,
    pub completed: usize,
    /// Cumulative score calculations up to and including this step.
    pub score_calcs: u64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Trace {
    pub rows: Vec<TraceRow>,
}

impl Trace {
    pub fn total_score_calcs(&self) -> u64 {
        self.rows.last().map_or(0, |r| r.score_calcs)
    }

    pub fn final_state(&self) -> Option<DeviceState> {
        self.rows.last().map(|r| r.state)
    }

    /// Number of transitions from unlocked to locked.
    pub fn lock_events(&self) -> usize {
        self.rows
            .windows(2)
            .filter(|w| w[0].state == DeviceState::Unlocked && w[1].state == DeviceState::Locked)
            .count()
    }

    /// `t_ms,context,beta,state,activated,completed,score_calcs`; the
    /// activated column lists started classifiers separated by `;` and an
    /// absent fused score is written as `NA`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "t_ms,context,beta,state,activated,completed,score_calcs")?;
        for r in &self.rows {
            let activated: Vec<&str> = r.started.iter().map(ClassifierId::as_str).collect();
            writeln!(
                out,
                "{},{},{},{},{},{},{}",
                r.t.as_millis(),
                r.context,
                r.beta,
                r.state,
                activated.join(";"),
                r.completed,
                r.score_calcs
            )?;
        }
        Ok(())
    }
}

fn check_contexts(scenario: &Scenario, config: &PolicyConfig) -> Result<()> {
    for s in &scenario.segments {
        config.windows.auth_window(&s.context)?;
    }
    Ok(())
}

fn drive<F>(
    scenario: &Scenario,
    config: &PolicyConfig,
    profile: &ClassifierProfile,
    mut arrivals: F,
) -> Result<Trace>
where
    F: FnMut(&mut AuthLoop<'_>, TimeInstant) -> Result<Vec<ScoreRecord>>,
{
    check_contexts(scenario, config)?;
    let mut lp = AuthLoop::new(profile, config)?;
    let mut trace = Trace::default();
    let mut calcs = 0u64;
    let end = TimeInstant::ZERO + scenario.duration;
    let mut t = TimeInstant::ZERO;
    while t < end {
        let seg = scenario.segment_at(t);
        let arrived = arrivals(&mut lp, t)?;
        let completed = arrived.len();
        calcs += completed as u64;
        let out = lp.step(arrived, &seg.context, t)?;
        trace.rows.push(TraceRow {
            t,
            context: out.context,
            subject: seg.subject,
            beta: out.beta,
            state: out.state,
            dt_crit: out.dt_crit,
            scheduled: out.scheduled,
            started: out.started,
            completed,
            score_calcs: calcs,
        });
        t = t + config.scheduler.dt_delay;
    }
    Ok(trace)
}

/// Runs the loop every `dt_delay` over the scenario, drawing the score of
/// each completed capture from `source` for the context and subject at the
/// capture's start.
pub fn run_scenario(
    scenario: &Scenario,
    config: &PolicyConfig,
    profile: &ClassifierProfile,
    source: &mut dyn ScoreSource,
) -> Result<Trace> {
    drive(scenario, config, profile, |lp, t| {
        lp.take_completed(t)
            .into_iter()
            .map(|p| {
                let seg = scenario.segment_at(p.start);
                let alpha = source.score(&p.cid, &seg.context, seg.subject, p.completes_at)?;
                Ok(ScoreRecord::new(p.cid, alpha, p.completes_at))
            })
            .collect()
    })
}

/// Runs the loop over recorded scores instead of simulated captures.
///
/// Each step receives the records stamped after the previous step and up
/// to the current one. Activations are still scheduled and reported but
/// produce no scores.
pub fn replay_trace(
    scenario: &Scenario,
    config: &PolicyConfig,
    profile: &ClassifierProfile,
    records: &[ScoreRecord],
) -> Result<Trace> {
    let mut sorted = records.to_vec();
    sorted.sort_by(|a, b| a.t.cmp(&b.t).then_with(|| a.cid.cmp(&b.cid)));
    let mut next = 0;
    drive(scenario, config, profile, |lp, t| {
        lp.take_completed(t);
        let from = next;
        while next < sorted.len() && sorted[next].t <= t {
            next += 1;
        }
        Ok(sorted[from..next].to_vec())
    })
}
