//! Experiment orchestration: builds models from a config, evaluates every
//! approach in every context and writes DET curves, the EER summary, CWMA
//! weights, an optional loop trace, and a run manifest.

use std::collections::BTreeMap;
use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::authloop::{self, PolicyConfig, SyntheticSource, Trace};
use crate::baselines::{self, CwmaTraining};
use crate::config::ExperimentConfig;
use crate::error::{Error, Result};
use crate::eval::{self, DetCurve};
use crate::fusion::NormParams;
use crate::synthdata::{self, Approach, ScoreModel, TrialSetup};
use crate::types::{ClassifierId, ContextLabel, ScoreRecord};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ApproachSummary {
    pub approach: String,
    /// Mean score calculations per trial, over all contexts.
    pub score_calculations: f64,
    pub eer: BTreeMap<ContextLabel, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassifierSummary {
    pub target_eer: f64,
    pub empirical_eer: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Summary {
    pub seed: u64,
    pub trials: usize,
    pub approaches: Vec<ApproachSummary>,
    pub classifiers: BTreeMap<ClassifierId, BTreeMap<ContextLabel, ClassifierSummary>>,
}

impl Summary {
    pub fn eer(&self, approach: Approach, ctx: &ContextLabel) -> Option<f64> {
        self.approaches
            .iter()
            .find(|a| a.approach == approach.name())
            .and_then(|a| a.eer.get(ctx).copied())
    }

    pub fn score_calculations(&self, approach: Approach) -> Option<f64> {
        self.approaches
            .iter()
            .find(|a| a.approach == approach.name())
            .map(|a| a.score_calculations)
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentResult {
    pub summary: Summary,
    pub det: BTreeMap<(String, ContextLabel), DetCurve>,
    pub cwma: Option<CwmaTraining>,
    pub norm: NormParams,
    pub trace: Option<Trace>,
}

/// Normalization from the config, or fitted on fresh synthetic draws.
pub fn normalization(cfg: &ExperimentConfig, model: &ScoreModel) -> Result<NormParams> {
    match cfg.fixed_norm()? {
        Some(n) => Ok(n),
        None => synthdata::fit_normalization(model, cfg.norm_trials, cfg.seed),
    }
}

pub fn policy(cfg: &ExperimentConfig, norm: NormParams) -> Result<PolicyConfig> {
    Ok(PolicyConfig {
        scheduler: cfg.scheduler_params()?,
        th_beta: cfg.th_beta,
        windows: cfg.window_policy()?,
        norm,
    })
}

/// Runs every configured approach; computation only, no files written.
pub fn run(cfg: &ExperimentConfig) -> Result<ExperimentResult> {
    let model = cfg.score_model()?;
    let profile = cfg.profile()?;
    let norm = normalization(cfg, &model)?;
    let policy_cfg = policy(cfg, norm.clone())?;
    let contexts = cfg.context_labels();

    let cwma = if cfg.approaches.contains(&Approach::Cwma) {
        let mut training = BTreeMap::new();
        for ctx in &contexts {
            training.insert(
                ctx.clone(),
                synthdata::cwma_training_trials(&model, ctx, cfg.train_trials, &norm, cfg.seed)?,
            );
        }
        Some(baselines::cwma_train(&training, cfg.grid_step)?)
    } else {
        None
    };

    let setup = TrialSetup {
        model: &model,
        profile: &profile,
        params: policy_cfg.scheduler,
        policy: &policy_cfg.windows,
        norm: &norm,
        cwma: cwma.as_ref().map(|c| &c.weights),
    };

    let mut det = BTreeMap::new();
    let mut approaches = Vec::new();
    for &approach in &cfg.approaches {
        let trials = synthdata::build_trials(&setup, approach, &contexts, cfg.trials, cfg.seed)?;
        let mut eer = BTreeMap::new();
        let (mut calc_sum, mut calc_n) = (0.0, 0usize);
        for (ctx, cell) in &trials.per_context {
            let curve = eval::det_curve(&cell.genuine, &cell.impostor)?;
            eer.insert(ctx.clone(), eval::eer(&curve));
            det.insert((approach.name(), ctx.clone()), curve);
            calc_sum += cell.score_calcs.iter().map(|&c| c as f64).sum::<f64>();
            calc_n += cell.score_calcs.len();
        }
        approaches.push(ApproachSummary {
            approach: approach.name(),
            score_calculations: calc_sum / calc_n as f64,
            eer,
        });
    }

    let mut classifiers = BTreeMap::new();
    for (cid, c) in &cfg.classifiers {
        let mut row = BTreeMap::new();
        for (ctx, &target) in &c.eer {
            let empirical = synthdata::standalone_eer(&model, cid, ctx, cfg.trials, cfg.seed)?;
            row.insert(
                ctx.clone(),
                ClassifierSummary {
                    target_eer: target,
                    empirical_eer: empirical,
                },
            );
        }
        classifiers.insert(cid.clone(), row);
    }

    let trace = match &cfg.scenario {
        Some(sc) => {
            let mut source = SyntheticSource::new(&model, sc.seed);
            Some(authloop::run_scenario(sc, &policy_cfg, &profile, &mut source)?)
        }
        None => None,
    };

    Ok(ExperimentResult {
        summary: Summary {
            seed: cfg.seed,
            trials: cfg.trials,
            approaches,
            classifiers,
        },
        det,
        cwma,
        norm,
        trace,
    })
}

#[derive(Debug, Serialize)]
struct Manifest<'a> {
    tool: &'static str,
    version: &'static str,
    seed: u64,
    config_sha256: &'a str,
    platform: String,
    files: Vec<String>,
}

#[derive(Debug, Serialize)]
struct WeightsFile<'a> {
    grid_step: f64,
    training: &'a CwmaTraining,
}

fn file_component(s: &str) -> String {
    s.chars()
        .map(|c| if c.is_ascii_alphanumeric() || "+-_.".contains(c) { c } else { '_' })
        .collect()
}

fn create(path: &Path) -> Result<BufWriter<fs::File>> {
    fs::File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::io(path, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Writes all outputs of `result` below `out_dir` and returns the paths
/// written, relative to `out_dir`.
pub fn write_outputs(
    cfg: &ExperimentConfig,
    result: &ExperimentResult,
    out_dir: &Path,
) -> Result<Vec<String>> {
    let det_dir = out_dir.join("det");
    fs::create_dir_all(&det_dir).map_err(|e| Error::io(&det_dir, e))?;
    let mut files = Vec::new();

    for ((approach, ctx), curve) in &result.det {
        let name = format!("det/{}_{}.csv", file_component(approach), file_component(ctx.as_str()));
        let path = out_dir.join(&name);
        let mut w = create(&path)?;
        eval::write_det_csv(curve, &mut w).map_err(|e| Error::io(&path, e))?;
        files.push(name);
    }

    write_json(&out_dir.join("summary.json"), &result.summary)?;
    files.push("summary.json".into());

    write_json(&out_dir.join("normalization.json"), &result.norm)?;
    files.push("normalization.json".into());

    if let Some(training) = &result.cwma {
        let weights = WeightsFile {
            grid_step: cfg.grid_step,
            training,
        };
        write_json(&out_dir.join("cwma_weights.json"), &weights)?;
        files.push("cwma_weights.json".into());
    }

    if let Some(trace) = &result.trace {
        let path = out_dir.join("trace.csv");
        let mut w = create(&path)?;
        trace.write_csv(&mut w).map_err(|e| Error::io(&path, e))?;
        files.push("trace.csv".into());
    }

    let manifest = Manifest {
        tool: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        seed: cfg.seed,
        config_sha256: &cfg.source_hash,
        platform: format!("{}-{}", std::env::consts::ARCH, std::env::consts::OS),
        files: files.clone(),
    };
    write_json(&out_dir.join("manifest.json"), &manifest)?;
    files.push("manifest.json".into());
    Ok(files)
}

/// Runs the experiment described by `cfg` and writes its outputs.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<(ExperimentResult, Vec<PathBuf>)> {
    let result = run(cfg)?;
    let files = write_outputs(cfg, &result, &cfg.out_dir)?;
    Ok((result, files.into_iter().map(|f| cfg.out_dir.join(f)).collect()))
}

/// Replays recorded scores through the authentication loop over the
/// config's scenario and writes `replay_trace.csv`.
pub fn run_replay(cfg: &ExperimentConfig, records: &[ScoreRecord]) -> Result<(Trace, PathBuf)> {
    let scenario = cfg
        .scenario
        .as_ref()
        .ok_or_else(|| Error::Validation("replay needs a [scenario] section in the config".into()))?;
    let model = cfg.score_model()?;
    let profile = cfg.profile()?;
    let policy_cfg = policy(cfg, normalization(cfg, &model)?)?;
    let trace = authloop::replay_trace(scenario, &policy_cfg, &profile, records)?;
    fs::create_dir_all(&cfg.out_dir).map_err(|e| Error::io(&cfg.out_dir, e))?;
    let path = cfg.out_dir.join("replay_trace.csv");
    let mut w = create(&path)?;
    trace.write_csv(&mut w).map_err(|e| Error::io(&path, e))?;
    Ok((trace, path))
}
