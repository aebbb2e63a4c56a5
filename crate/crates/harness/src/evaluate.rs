//! Offline metrics over the test split and closed-loop success tables.

use crate::report::{num, Table};
use crate::{episode_seed, thread_pool, HarnessConfig, HarnessError};
use aquasim::dataset::{decode_episode_with, DatasetManifest, Split};
use aquasim::learner::{e_action, e_target, episode_samples, mean_label, LearnedPolicy, Model, TargetPart};
use aquasim::tasks::{
    run_episode, select_tasks, success_check, Policy, RandomPolicy, RolloutOptions, ScriptedPolicy, TaskSpec, INSTRUCTIONS,
};
use rayon::prelude::*;
use std::collections::BTreeMap;
use std::path::Path;

/// Amplitude of the random-action baseline, as a fraction of full command.
/// Full-scale noise pushes the hull several metres off station.
pub const RANDOM_ACTION_SCALE: f64 = 0.2;

/// What produces the actions and target labels scored offline.
#[derive(Debug, Clone)]
pub enum OfflinePredictor {
    /// The recorded values themselves; every error is zero.
    Recorded,
    /// Train-split mean action and mean target label for every frame.
    MeanBaseline,
    Model(Box<Model>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct OfflineRow {
    /// `None` for the overall row.
    pub instruction: Option<u32>,
    pub frames: usize,
    pub e_action: f64,
    pub e_target: f64,
}

#[derive(Default)]
struct Group {
    pred_a: Vec<Vec<f64>>,
    rec_a: Vec<Vec<f64>>,
    pred_t: Vec<Vec<f64>>,
    rec_t: Vec<Vec<f64>>,
}

impl Group {
    fn row(&self, instruction: Option<u32>) -> Result<OfflineRow, HarnessError> {
        Ok(OfflineRow {
            instruction,
            frames: self.rec_a.len(),
            e_action: e_action(&self.pred_a, &self.rec_a)?,
            e_target: e_target(&self.pred_t, &self.rec_t, TargetPart::Position)?,
        })
    }
}

fn read_numeric(dir: &Path, file: &str) -> Result<aquasim::dataset::Episode, HarnessError> {
    let path = dir.join(file);
    let bytes = std::fs::read(&path).map_err(|e| HarnessError::io(path.display().to_string(), e))?;
    Ok(decode_episode_with(&bytes, false)?)
}

/// Scores the test split per instruction, followed by an overall row.
pub fn eval_offline(dataset: &Path, predictor: &OfflinePredictor) -> Result<Vec<OfflineRow>, HarnessError> {
    let manifest = DatasetManifest::load(dataset)?;
    let test: Vec<_> = manifest.episodes.iter().filter(|e| e.split == Split::Test).collect();
    if test.iter().all(|e| e.meta.frame_count == 0) {
        return Err(HarnessError::Usage("test split has no frames".into()));
    }
    let baseline = match predictor {
        OfflinePredictor::MeanBaseline => {
            let mut actions = Vec::new();
            let mut targets = Vec::new();
            for e in manifest.episodes.iter().filter(|e| e.split == Split::Train) {
                for f in read_numeric(dataset, &e.file)?.frames {
                    actions.push(f.action);
                    targets.push(f.target);
                }
            }
            let label = mean_label(&targets).ok_or_else(|| HarnessError::Usage("train split has no frames".into()))?;
            let n = actions.len() as f64;
            let action: Vec<f64> = (0..actions[0].len()).map(|i| actions.iter().map(|a| a[i]).sum::<f64>() / n).collect();
            Some((action, label.to_vec()))
        }
        _ => None,
    };

    let mut groups: BTreeMap<u32, Group> = BTreeMap::new();
    let mut all = Group::default();
    for e in test {
        let mut push = |instruction: u32, pa: Vec<f64>, ra: Vec<f64>, pt: Vec<f64>, rt: Vec<f64>| {
            for g in [groups.entry(instruction).or_default(), &mut all] {
                g.pred_a.push(pa.clone());
                g.rec_a.push(ra.clone());
                g.pred_t.push(pt.clone());
                g.rec_t.push(rt.clone());
            }
        };
        match predictor {
            OfflinePredictor::Model(model) => {
                let path = dataset.join(&e.file);
                let ep = aquasim::dataset::read_episode(&path)?;
                for (s, f) in episode_samples(&ep, &model.norm, model.grid_cells)?.iter().zip(&ep.frames) {
                    let p = model.predict_sample(s)?;
                    push(f.instruction, p.action.to_vec(), f.action.to_vec(), p.target.to_vec(), f.target.to_vec());
                }
            }
            _ => {
                for f in read_numeric(dataset, &e.file)?.frames {
                    let (pa, pt) = match &baseline {
                        Some((a, t)) => (a.clone(), t.clone()),
                        None => (f.action.to_vec(), f.target.to_vec()),
                    };
                    push(f.instruction, pa, f.action.to_vec(), pt, f.target.to_vec());
                }
            }
        }
    }
    let mut rows = groups.iter().map(|(i, g)| g.row(Some(*i))).collect::<Result<Vec<_>, _>>()?;
    rows.push(all.row(None)?);
    Ok(rows)
}

pub fn offline_table(rows: &[OfflineRow]) -> Table {
    let mut t = Table::new(&["instruction_id", "instruction", "frames", "e_action", "e_target_m"]);
    for r in rows {
        let (id, text) = match r.instruction {
            Some(i) => (i.to_string(), INSTRUCTIONS.get(i as usize).copied().unwrap_or("?").to_string()),
            None => ("all".into(), "overall".into()),
        };
        t.push(vec![id, text, r.frames.to_string(), num(r.e_action), num(r.e_target)]);
    }
    t
}

#[derive(Debug, Clone)]
pub enum PolicyKind {
    Scripted,
    /// Uniform random actions scaled by [`RANDOM_ACTION_SCALE`].
    Random,
    Learned(Box<Model>),
}

impl PolicyKind {
    fn build(&self, task: &TaskSpec, cfg: &HarnessConfig, seed: u64) -> Box<dyn Policy> {
        match self {
            PolicyKind::Scripted => Box::new(ScriptedPolicy::new(task, &cfg.sim)),
            PolicyKind::Random => Box::new(RandomPolicy::new(seed ^ 0x7a4d_0000_0000_0001, RANDOM_ACTION_SCALE)),
            PolicyKind::Learned(m) => Box::new(LearnedPolicy::new((**m).clone())),
        }
    }

    fn needs_images(&self) -> bool {
        matches!(self, PolicyKind::Learned(_))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClosedLoopRequest {
    pub tasks: String,
    pub episodes: usize,
    pub seed: u64,
    pub workers: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeResult {
    pub seed: u64,
    pub success: bool,
    pub final_distance: f64,
    pub failure: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TaskResult {
    pub task: String,
    pub family: &'static str,
    pub grasping: bool,
    pub episodes: Vec<EpisodeResult>,
}

impl TaskResult {
    pub fn successes(&self) -> usize {
        self.episodes.iter().filter(|e| e.success).count()
    }

    pub fn success_rate(&self) -> f64 {
        self.successes() as f64 / self.episodes.len() as f64
    }

    pub fn mean_final_distance(&self) -> f64 {
        self.episodes.iter().map(|e| e.final_distance).sum::<f64>() / self.episodes.len() as f64
    }
}

/// Runs `episodes` seeded rollouts per selected task. Results do not depend
/// on `workers`.
pub fn eval_closed_loop(cfg: &HarnessConfig, req: &ClosedLoopRequest, policy: &PolicyKind) -> Result<Vec<TaskResult>, HarnessError> {
    let tasks = select_tasks(&req.tasks).map_err(|e| HarnessError::Usage(e.to_string()))?;
    if req.episodes == 0 {
        return Err(HarnessError::Usage("--episodes must be at least 1".into()));
    }
    let opts = RolloutOptions {
        render: policy.needs_images(),
        max_duration: None,
    };
    let jobs: Vec<(usize, u64)> = (0..tasks.len())
        .flat_map(|t| (0..req.episodes).map(move |i| (t, i)))
        .map(|(t, i)| (t, episode_seed(req.seed, tasks[t].id, i)))
        .collect();
    let pool = thread_pool(req.workers)?;
    let runs: Vec<Result<EpisodeResult, HarnessError>> = pool.install(|| {
        jobs.par_iter()
            .map(|&(t, seed)| {
                let task = &tasks[t];
                let mut p = policy.build(task, cfg, seed);
                let r = run_episode(task, &cfg.sim, seed, p.as_mut(), &opts)?;
                let rep = success_check(task, &r.trace);
                Ok(EpisodeResult {
                    seed,
                    success: rep.success,
                    final_distance: rep.final_distance,
                    failure: r.failure,
                })
            })
            .collect()
    });
    let mut out: Vec<TaskResult> = tasks
        .iter()
        .map(|t| TaskResult {
            task: t.id.to_string(),
            family: t.family.name(),
            grasping: t.family.is_grasping(),
            episodes: Vec::new(),
        })
        .collect();
    for (&(t, _), run) in jobs.iter().zip(runs) {
        out[t].episodes.push(run?);
    }
    Ok(out)
}

pub fn closed_loop_table(results: &[TaskResult]) -> Table {
    let mut t = Table::new(&["task", "family", "episodes", "successes", "success_rate", "mean_final_distance_m"]);
    for r in results {
        let dist = if r.grasping { num(r.mean_final_distance()) } else { "-".into() };
        t.push(vec![
            r.task.clone(),
            r.family.to_string(),
            r.episodes.len().to_string(),
            r.successes().to_string(),
            num(r.success_rate()),
            dist,
        ]);
    }
    t
}
