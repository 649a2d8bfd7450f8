//! Experiment configuration files.
//!
//! The format is line oriented. Blank lines and lines starting with `#` are
//! ignored; everything else is either a `key = value` pair or a section
//! header. Keys before the first header are global settings.
//!
//! ```text
//! seed = 42
//! approaches = max, sum, cwma, our_1x, our_2x
//!
//! [context SF]
//! window_ms = 10000
//!
//! [classifier c1]
//! time_ms = 500
//! cost = 1
//! eer.SF = 0.027          # target EER of the synthetic model
//! auth_prob.SF = 0.97     # optional, defaults to 1 - eer
//!
//! [norm c1]               # optional fixed z-score parameters
//! mu = 1.2
//! sigma = 1.4
//!
//! [scenario]              # optional loop simulation
//! duration_ms = 60000
//! segment = 0, 30000, SF, genuine
//! ```
//!
//! Global keys: `seed`, `trials`, `train_trials`, `norm_trials`,
//! `grid_step`, `th_p`, `th_beta`, `delay_ms`, `approaches`, `out_dir`.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::authloop::{Scenario, Segment};
use crate::baselines;
use crate::error::{Error, Result};
use crate::fusion::{NormParams, WindowPolicy, ZScore};
use crate::scheduler::{ClassifierProfile, ClassifierSpec, SchedulerParams};
use crate::synthdata::{self, Approach, Label, ScoreModel};
use crate::types::{ClassifierId, ContextLabel, TimeInstant, TimeSpan};

#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierConfig {
    pub time: TimeSpan,
    pub cost: f64,
    pub eer: BTreeMap<ContextLabel, f64>,
    pub auth_prob: BTreeMap<ContextLabel, f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub trials: usize,
    pub train_trials: usize,
    pub norm_trials: usize,
    pub grid_step: f64,
    pub th_p: f64,
    pub th_beta: f64,
    pub delay: TimeSpan,
    pub approaches: Vec<Approach>,
    pub out_dir: PathBuf,
    pub contexts: BTreeMap<ContextLabel, TimeSpan>,
    pub classifiers: BTreeMap<ClassifierId, ClassifierConfig>,
    pub norm: BTreeMap<ClassifierId, ZScore>,
    pub scenario: Option<Scenario>,
    /// SHA-256 of the file contents, hex encoded.
    pub source_hash: String,
}

enum Section {
    Global,
    Context(ContextLabel),
    Classifier(ClassifierId),
    Norm(ClassifierId),
    Scenario,
}

struct Parser<'a> {
    origin: &'a str,
    line: usize,
}

impl Parser<'_> {
    fn err(&self, message: impl Into<String>) -> Error {
        Error::Parse {
            path: self.origin.to_owned(),
            line: self.line,
            message: message.into(),
        }
    }

    fn num<T: std::str::FromStr>(&self, key: &str, value: &str) -> Result<T> {
        value
            .parse()
            .map_err(|_| self.err(format!("{key}: cannot parse {value:?}")))
    }

    fn float(&self, key: &str, value: &str) -> Result<f64> {
        let v: f64 = self.num(key, value)?;
        if !v.is_finite() {
            return Err(self.err(format!("{key} must be finite, got {value}")));
        }
        Ok(v)
    }

    fn unit(&self, key: &str, value: &str) -> Result<f64> {
        let v = self.float(key, value)?;
        if !(0.0..=1.0).contains(&v) {
            return Err(self.err(format!("{key} must lie in [0, 1], got {value}")));
        }
        Ok(v)
    }

    fn positive_ms(&self, key: &str, value: &str) -> Result<TimeSpan> {
        let v: u64 = self.num(key, value)?;
        if v == 0 {
            return Err(self.err(format!("{key} must be positive")));
        }
        Ok(TimeSpan::from_millis(v))
    }
}

#[derive(Default)]
struct Partial {
    classifier: BTreeMap<ClassifierId, (Option<TimeSpan>, f64, usize)>,
    norm: BTreeMap<ClassifierId, (Option<f64>, Option<f64>, usize)>,
    scenario_duration: Option<TimeSpan>,
    scenario_seed: Option<u64>,
    segments: Vec<(Segment, usize)>,
    scenario_line: usize,
    context_lines: BTreeMap<ContextLabel, usize>,
}

impl ExperimentConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, &path.display().to_string())
    }

    /// Parses and validates config text. `origin` names the source in
    /// diagnostics.
    pub fn parse(text: &str, origin: &str) -> Result<Self> {
        let mut p = Parser { origin, line: 0 };
        let mut cfg = ExperimentConfig {
            seed: 0,
            trials: 10_000,
            train_trials: 1_000,
            norm_trials: 1_000,
            grid_step: 0.02,
            th_p: 0.9,
            th_beta: 0.0,
            delay: TimeSpan::from_millis(1000),
            approaches: Vec::new(),
            out_dir: PathBuf::from("out"),
            contexts: BTreeMap::new(),
            classifiers: BTreeMap::new(),
            norm: BTreeMap::new(),
            scenario: None,
            source_hash: hex(&Sha256::digest(text.as_bytes())),
        };
        let mut part = Partial::default();
        let mut approaches_line = 0;
        let mut section = Section::Global;

        for (i, raw) in text.lines().enumerate() {
            p.line = i + 1;
            let line = strip_comment(raw).trim();
            if line.is_empty() {
                continue;
            }
            if let Some(header) = line.strip_prefix('[') {
                let header = header
                    .strip_suffix(']')
                    .ok_or_else(|| p.err("unterminated section header"))?
                    .trim();
                let mut words = header.split_whitespace();
                let kind = words.next().unwrap_or("");
                let name = words.next();
                if words.next().is_some() {
                    return Err(p.err(format!("malformed section header [{header}]")));
                }
                section = match (kind, name) {
                    ("context", Some(n)) => {
                        let ctx = ContextLabel::from(n);
                        if part.context_lines.insert(ctx.clone(), p.line).is_some() {
                            return Err(p.err(format!("context {n} declared twice")));
                        }
                        Section::Context(ctx)
                    }
                    ("classifier", Some(n)) => {
                        let cid = ClassifierId::from(n);
                        if cfg.classifiers.contains_key(&cid) {
                            return Err(p.err(format!("classifier {n} declared twice")));
                        }
                        cfg.classifiers.insert(
                            cid.clone(),
                            ClassifierConfig {
                                time: TimeSpan::ZERO,
                                cost: 1.0,
                                eer: BTreeMap::new(),
                                auth_prob: BTreeMap::new(),
                            },
                        );
                        part.classifier.insert(cid.clone(), (None, 1.0, p.line));
                        Section::Classifier(cid)
                    }
                    ("norm", Some(n)) => {
                        let cid = ClassifierId::from(n);
                        part.norm.insert(cid.clone(), (None, None, p.line));
                        Section::Norm(cid)
                    }
                    ("scenario", None) => {
                        if part.scenario_line != 0 {
                            return Err(p.err("only one [scenario] section is allowed"));
                        }
                        part.scenario_line = p.line;
                        Section::Scenario
                    }
                    _ => return Err(p.err(format!("unknown section [{header}]"))),
                };
                continue;
            }

            let (key, value) = line
                .split_once('=')
                .map(|(k, v)| (k.trim(), v.trim()))
                .ok_or_else(|| p.err(format!("expected `key = value`, found {line:?}")))?;

            match &section {
                Section::Global => match key {
                    "seed" => cfg.seed = p.num(key, value)?,
                    "trials" => cfg.trials = positive_count(&p, key, value)?,
                    "train_trials" => cfg.train_trials = positive_count(&p, key, value)?,
                    "norm_trials" => cfg.norm_trials = positive_count(&p, key, value)?,
                    "grid_step" => {
                        let step = p.float(key, value)?;
                        baselines::grid_points(step).map_err(|e| p.err(format!("grid_step: {e}")))?;
                        cfg.grid_step = step;
                    }
                    "th_p" => cfg.th_p = p.unit(key, value)?,
                    "th_beta" => cfg.th_beta = p.float(key, value)?,
                    "delay_ms" => cfg.delay = p.positive_ms(key, value)?,
                    "out_dir" => cfg.out_dir = PathBuf::from(value),
                    "approaches" => {
                        approaches_line = p.line;
                        cfg.approaches = value
                            .split(',')
                            .map(|a| a.trim().parse::<Approach>().map_err(|e| p.err(format!("approaches: {e}"))))
                            .collect::<Result<_>>()?;
                    }
                    _ => return Err(p.err(format!("unknown setting {key:?}"))),
                },
                Section::Context(ctx) => match key {
                    "window_ms" => {
                        let w = p.positive_ms(key, value)?;
                        cfg.contexts.insert(ctx.clone(), w);
                    }
                    _ => return Err(p.err(format!("unknown context setting {key:?}"))),
                },
                Section::Classifier(cid) => {
                    let c = cfg.classifiers.get_mut(cid).expect("inserted with header");
                    let entry = part.classifier.get_mut(cid).expect("inserted with header");
                    if key == "time_ms" {
                        c.time = p.positive_ms(key, value)?;
                        entry.0 = Some(c.time);
                    } else if key == "cost" {
                        let cost = p.float(key, value)?;
                        if cost < 0.0 {
                            return Err(p.err(format!("cost must be non-negative, got {value}")));
                        }
                        c.cost = cost;
                        entry.1 = cost;
                    } else if let Some(ctx) = key.strip_prefix("eer.") {
                        let eer = p.float(key, value)?;
                        if !(eer > 0.0 && eer < 0.5) {
                            return Err(p.err(format!("{key} must lie in (0, 0.5), got {value}")));
                        }
                        c.eer.insert(ctx.into(), eer);
                    } else if let Some(ctx) = key.strip_prefix("auth_prob.") {
                        c.auth_prob.insert(ctx.into(), p.unit(key, value)?);
                    } else {
                        return Err(p.err(format!("unknown classifier setting {key:?}")));
                    }
                }
                Section::Norm(cid) => {
                    let entry = part.norm.get_mut(cid).expect("inserted with header");
                    match key {
                        "mu" => entry.0 = Some(p.float(key, value)?),
                        "sigma" => {
                            let s = p.float(key, value)?;
                            if s <= 0.0 {
                                return Err(p.err(format!("sigma must be positive, got {value}")));
                            }
                            entry.1 = Some(s);
                        }
                        _ => return Err(p.err(format!("unknown norm setting {key:?}"))),
                    }
                }
                Section::Scenario => match key {
                    "duration_ms" => part.scenario_duration = Some(p.positive_ms(key, value)?),
                    "seed" => part.scenario_seed = Some(p.num(key, value)?),
                    "segment" => {
                        let f: Vec<&str> = value.split(',').map(str::trim).collect();
                        let [start, end, ctx, subject] = f.as_slice() else {
                            return Err(p.err("segment needs `start_ms, end_ms, context, genuine|impostor`"));
                        };
                        let seg = Segment {
                            start: TimeInstant(p.num("segment start", start)?),
                            end: TimeInstant(p.num("segment end", end)?),
                            context: (*ctx).into(),
                            subject: subject.parse::<Label>().map_err(|e| p.err(e.to_string()))?,
                        };
                        part.segments.push((seg, p.line));
                    }
                    _ => return Err(p.err(format!("unknown scenario setting {key:?}"))),
                },
            }
        }
        cfg.finish(part, &mut p, approaches_line)?;
        Ok(cfg)
    }

    fn finish(&mut self, part: Partial, p: &mut Parser<'_>, approaches_line: usize) -> Result<()> {
        p.line = 0;
        if part.context_lines.is_empty() {
            return Err(p.err("no [context] sections"));
        }
        for (ctx, &line) in &part.context_lines {
            if !self.contexts.contains_key(ctx) {
                p.line = line;
                return Err(p.err(format!("context {ctx} has no window_ms")));
            }
        }
        if self.classifiers.is_empty() {
            return Err(p.err("no [classifier] sections"));
        }
        for (cid, c) in &self.classifiers {
            p.line = part.classifier[cid].2;
            if part.classifier[cid].0.is_none() {
                return Err(p.err(format!("classifier {cid} has no time_ms")));
            }
            for ctx in self.contexts.keys() {
                if !c.eer.contains_key(ctx) {
                    return Err(p.err(format!("classifier {cid} has no eer.{ctx}")));
                }
            }
            for ctx in c.eer.keys().chain(c.auth_prob.keys()) {
                if !self.contexts.contains_key(ctx) {
                    return Err(p.err(format!("classifier {cid} refers to undeclared context {ctx}")));
                }
            }
        }
        if self.classifiers.len() > crate::scheduler::MAX_CLASSIFIERS {
            return Err(p.err("too many classifiers"));
        }
        for (cid, (mu, sigma, line)) in part.norm {
            p.line = line;
            if !self.classifiers.contains_key(&cid) {
                return Err(p.err(format!("[norm {cid}] refers to an undeclared classifier")));
            }
            match (mu, sigma) {
                (Some(mu), Some(sigma)) => {
                    self.norm.insert(cid, ZScore { mu, sigma });
                }
                _ => return Err(p.err(format!("[norm {cid}] needs both mu and sigma"))),
            }
        }
        if !self.norm.is_empty() && self.norm.len() != self.classifiers.len() {
            p.line = 0;
            return Err(p.err("[norm] sections must cover every classifier or none"));
        }
        if self.approaches.is_empty() {
            p.line = approaches_line;
            return Err(p.err("approaches: at least one approach is required"));
        }
        if part.scenario_line != 0 {
            p.line = part.scenario_line;
            let duration = part
                .scenario_duration
                .ok_or_else(|| p.err("[scenario] needs duration_ms"))?;
            for (seg, line) in &part.segments {
                if !self.contexts.contains_key(&seg.context) {
                    p.line = *line;
                    return Err(p.err(format!("segment refers to undeclared context {}", seg.context)));
                }
            }
            p.line = part.scenario_line;
            let segments = part.segments.into_iter().map(|(s, _)| s).collect();
            let scenario = Scenario::new(duration, segments, part.scenario_seed.unwrap_or(self.seed))
                .map_err(|e| p.err(e.to_string()))?;
            self.scenario = Some(scenario);
        }
        Ok(())
    }

    pub fn context_labels(&self) -> Vec<ContextLabel> {
        self.contexts.keys().cloned().collect()
    }

    pub fn score_model(&self) -> Result<ScoreModel> {
        let mut model = ScoreModel::new();
        for (cid, c) in &self.classifiers {
            for (ctx, &eer) in &c.eer {
                model.set_target_eer(cid.clone(), ctx.clone(), eer)?;
            }
        }
        Ok(model)
    }

    /// Scheduler profile. Acceptance probabilities not given explicitly are
    /// the models' true acceptance rate at their EER threshold.
    pub fn profile(&self) -> Result<ClassifierProfile> {
        let mut profile = ClassifierProfile::new();
        for (cid, c) in &self.classifiers {
            let mut auth_prob = BTreeMap::new();
            for (ctx, &eer) in &c.eer {
                let p = match c.auth_prob.get(ctx) {
                    Some(&p) => p,
                    None => synthdata::analytic_tar(synthdata::calibrate(eer)?),
                };
                auth_prob.insert(ctx.clone(), p);
            }
            profile.insert(
                cid.clone(),
                ClassifierSpec {
                    auth_prob,
                    time: c.time,
                    cost: c.cost,
                },
            )?;
        }
        Ok(profile)
    }

    pub fn window_policy(&self) -> Result<WindowPolicy> {
        let mut policy = WindowPolicy::new();
        for (ctx, &w) in &self.contexts {
            policy.insert(ctx.clone(), w)?;
        }
        Ok(policy)
    }

    pub fn scheduler_params(&self) -> Result<SchedulerParams> {
        SchedulerParams::new(self.th_p, self.delay)
    }

    /// Fixed normalization from `[norm]` sections, if any were given.
    pub fn fixed_norm(&self) -> Result<Option<NormParams>> {
        if self.norm.is_empty() {
            return Ok(None);
        }
        let mut n = NormParams::new();
        for (cid, &z) in &self.norm {
            n.insert(cid.clone(), z)?;
        }
        Ok(Some(n))
    }
}

fn positive_count(p: &Parser<'_>, key: &str, value: &str) -> Result<usize> {
    let v: usize = p.num(key, value)?;
    if v == 0 {
        return Err(p.err(format!("{key} must be positive")));
    }
    Ok(v)
}

fn strip_comment(line: &str) -> &str {
    match line.find('#') {
        Some(i) => &line[..i],
        None => line,
    }
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}
