//! Dataset commands: generate, validate, stats, split.

use crate::{episode_seed, thread_pool, HarnessConfig, HarnessError};
use aquasim::dataset::{
    compute_stats, episode_file_name, load_episodes, split_dataset, validate_dataset, write_episode, DatasetManifest, Episode,
    EpisodeEntry, EpisodeMeta, ImageInfo, Split, ValidationReport,
};
use aquasim::tasks::{run_episode, select_tasks, success_check, RolloutOptions, ScriptedPolicy, TaskSpec};
use rayon::prelude::*;
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, PartialEq)]
pub struct GenerateRequest {
    pub seed: u64,
    pub workers: usize,
    /// Overrides `generate.tasks`.
    pub tasks: Option<String>,
    /// Overrides `generate.episodes`.
    pub episodes: Option<usize>,
    pub out: PathBuf,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenerateSummary {
    pub episodes: usize,
    pub frames: usize,
    pub successes: usize,
    pub failures: Vec<(u32, String)>,
}

/// Stored when no meaningful distance exists (the rollout never started).
const NO_DISTANCE: f64 = -1.0;

fn record(task: &TaskSpec, cfg: &HarnessConfig, sim_version: &str, episode_id: u32, seed: u64) -> Episode {
    let opts = RolloutOptions {
        render: cfg.generate.render,
        max_duration: None,
    };
    let mut policy = ScriptedPolicy::new(task, &cfg.sim);
    let mut meta = EpisodeMeta {
        episode_id,
        task_id: task.id.to_string(),
        instruction_id: task.instruction_id,
        scenario: task.scenario.name().to_string(),
        scenario_seed: seed,
        frame_count: 0,
        duration_s: 0.0,
        success: false,
        final_distance: NO_DISTANCE,
        sim_version: sim_version.to_string(),
        failure: None,
    };
    match run_episode(task, &cfg.sim, seed, &mut policy, &opts) {
        Ok(r) => {
            let rep = success_check(task, &r.trace);
            meta.frame_count = r.frames.len() as u32;
            meta.duration_s = r.duration();
            meta.success = rep.success;
            meta.final_distance = if rep.final_distance.is_finite() { rep.final_distance } else { NO_DISTANCE };
            meta.failure = r.failure;
            Episode { meta, frames: r.frames }
        }
        Err(e) => {
            meta.failure = Some(e.to_string());
            Episode { meta, frames: Vec::new() }
        }
    }
}

fn image_info(cfg: &HarnessConfig) -> Option<ImageInfo> {
    let c = &cfg.sim.camera;
    cfg.generate.render.then_some(ImageInfo {
        width: c.width,
        height: c.height,
        focal_px: c.focal_px,
        baseline: c.baseline,
    })
}

/// Runs the scripted policies over the (task x episode) grid and writes a
/// complete dataset: episode files, split, statistics and manifest. Output
/// bytes do not depend on `workers`.
pub fn generate(cfg: &HarnessConfig, req: &GenerateRequest) -> Result<GenerateSummary, HarnessError> {
    let filter = req.tasks.as_deref().unwrap_or(&cfg.generate.tasks);
    let tasks = select_tasks(filter).map_err(|e| HarnessError::Usage(e.to_string()))?;
    let per_task = req.episodes.unwrap_or(cfg.generate.episodes);
    if per_task == 0 {
        return Err(HarnessError::Usage("--episodes must be at least 1".into()));
    }
    std::fs::create_dir_all(&req.out).map_err(|e| HarnessError::io(req.out.display().to_string(), e))?;
    let sim_version = cfg.sim_version();
    let jobs: Vec<(u32, &TaskSpec, u64)> = tasks
        .iter()
        .flat_map(|t| (0..per_task).map(move |i| (t, i)))
        .enumerate()
        .map(|(id, (t, i))| (id as u32, t, episode_seed(req.seed, t.id, i)))
        .collect();

    let pool = thread_pool(req.workers)?;
    let results: Vec<Result<Episode, HarnessError>> = pool.install(|| {
        jobs.par_iter()
            .map(|&(id, task, seed)| {
                let mut ep = record(task, cfg, &sim_version, id, seed);
                write_episode(&req.out.join(episode_file_name(id)), &ep)?;
                // keep the numeric part for statistics
                ep.frames.iter_mut().for_each(|f| f.images = None);
                Ok(ep)
            })
            .collect()
    });
    let episodes = results.into_iter().collect::<Result<Vec<_>, _>>()?;

    let mut manifest = DatasetManifest::new(&sim_version, req.seed, image_info(cfg), &tasks);
    manifest.episodes = episodes
        .iter()
        .map(|e| EpisodeEntry {
            file: episode_file_name(e.meta.episode_id),
            split: Split::Train,
            meta: e.meta.clone(),
        })
        .collect();
    manifest.refresh_totals();
    let mut manifest = split_dataset(&manifest, cfg.generate.test_fraction, req.seed);
    manifest.stats = Some(compute_stats(&manifest, &episodes)?);
    manifest.save(&req.out)?;

    Ok(GenerateSummary {
        episodes: manifest.total_episodes,
        frames: manifest.total_frames,
        successes: episodes.iter().filter(|e| e.meta.success).count(),
        failures: episodes
            .iter()
            .filter_map(|e| e.meta.failure.clone().map(|f| (e.meta.episode_id, f)))
            .collect(),
    })
}

pub fn validate(dir: &Path) -> ValidationReport {
    validate_dataset(dir)
}

/// Recomputes normalization statistics from the train split and stores them.
pub fn recompute_stats(dir: &Path) -> Result<DatasetManifest, HarnessError> {
    let mut manifest = DatasetManifest::load(dir)?;
    let episodes = load_episodes(dir, &manifest, false)?;
    manifest.stats = Some(compute_stats(&manifest, &episodes)?);
    manifest.save(dir)?;
    Ok(manifest)
}

/// Re-splits the dataset per task and refreshes the statistics.
pub fn resplit(dir: &Path, test_fraction: f64, seed: u64) -> Result<DatasetManifest, HarnessError> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(HarnessError::Usage(format!("test fraction {test_fraction} not in (0, 1)")));
    }
    let manifest = DatasetManifest::load(dir)?;
    split_dataset(&manifest, test_fraction, seed).save(dir)?;
    recompute_stats(dir)
}
