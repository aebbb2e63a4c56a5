//! Dataset manifest, normalization statistics, splits and validation.

use super::format::{checksum, label_residual, read_episode, DatasetError, FORMAT_VERSION};
use super::record::{frames_for_duration, frame_time, Episode, EpisodeMeta, FrameRecord, STATE_DIM, TARGET_DIM};
use crate::tasks::TaskSpec;
use crate::vehicle::ACTION_DIM;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, HashSet};
use std::path::Path;

pub const MANIFEST_FILE: &str = "manifest.json";
/// Lower bound applied to per-dimension standard deviations.
pub const STD_FLOOR: f64 = 1e-6;
/// Tolerance used when re-checking labels and statistics.
pub const CHECK_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskEntry {
    pub id: String,
    pub instruction: String,
    pub instruction_id: u32,
    pub scenario: String,
    pub nominal_duration: f64,
    pub timeout: f64,
}

impl From<&TaskSpec> for TaskEntry {
    fn from(t: &TaskSpec) -> Self {
        Self {
            id: t.id.to_string(),
            instruction: t.instruction().to_string(),
            instruction_id: t.instruction_id,
            scenario: t.scenario.name().to_string(),
            nominal_duration: t.nominal_duration,
            timeout: t.timeout,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeEntry {
    pub file: String,
    pub split: Split,
    #[serde(flatten)]
    pub meta: EpisodeMeta,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

impl ChannelStats {
    /// Population statistics per column; two passes for accuracy.
    pub fn from_rows<'a>(rows: impl Iterator<Item = &'a [f64]> + Clone, dim: usize) -> Option<Self> {
        let mut n = 0usize;
        let mut sum = vec![0.0; dim];
        let mut min = vec![f64::INFINITY; dim];
        let mut max = vec![f64::NEG_INFINITY; dim];
        for r in rows.clone() {
            n += 1;
            for i in 0..dim {
                sum[i] += r[i];
                min[i] = min[i].min(r[i]);
                max[i] = max[i].max(r[i]);
            }
        }
        if n == 0 {
            return None;
        }
        let mean: Vec<f64> = sum.iter().map(|s| s / n as f64).collect();
        let mut var = vec![0.0; dim];
        for r in rows {
            for i in 0..dim {
                let d = r[i] - mean[i];
                var[i] += d * d;
            }
        }
        let std = var.iter().map(|v| (v / n as f64).sqrt().max(STD_FLOOR)).collect();
        Some(Self { mean, std, min, max })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn normalize(&self, x: &[f64]) -> Vec<f64> {
        x.iter().enumerate().map(|(i, v)| (v - self.mean[i]) / self.std[i]).collect()
    }

    pub fn denormalize(&self, z: &[f64]) -> Vec<f64> {
        z.iter().enumerate().map(|(i, v)| v * self.std[i] + self.mean[i]).collect()
    }

    fn max_deviation(&self, other: &ChannelStats) -> f64 {
        let pairs = [
            (&self.mean, &other.mean),
            (&self.std, &other.std),
            (&self.min, &other.min),
            (&self.max, &other.max),
        ];
        pairs
            .iter()
            .flat_map(|(a, b)| {
                if a.len() != b.len() {
                    vec![f64::INFINITY]
                } else {
                    a.iter().zip(b.iter()).map(|(x, y)| (x - y).abs()).collect()
                }
            })
            .fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub frames: usize,
    pub state: ChannelStats,
    pub action: ChannelStats,
    pub target: ChannelStats,
}

impl NormStats {
    pub fn max_deviation(&self, other: &NormStats) -> f64 {
        self.state
            .max_deviation(&other.state)
            .max(self.action.max_deviation(&other.action))
            .max(self.target.max_deviation(&other.target))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageInfo {
    pub width: usize,
    pub height: usize,
    pub focal_px: f64,
    pub baseline: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitInfo {
    pub test_fraction: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub format_version: u32,
    pub sim_version: String,
    pub seed: u64,
    pub frame_rate_hz: f64,
    pub images: Option<ImageInfo>,
    pub tasks: Vec<TaskEntry>,
    pub episodes: Vec<EpisodeEntry>,
    pub total_episodes: usize,
    pub total_frames: usize,
    pub split: SplitInfo,
    pub stats: Option<NormStats>,
}

impl DatasetManifest {
    pub fn new(sim_version: &str, seed: u64, images: Option<ImageInfo>, tasks: &[TaskSpec]) -> Self {
        Self {
            format_version: FORMAT_VERSION,
            sim_version: sim_version.to_string(),
            seed,
            frame_rate_hz: 10.0,
            images,
            tasks: tasks.iter().map(TaskEntry::from).collect(),
            episodes: Vec::new(),
            total_episodes: 0,
            total_frames: 0,
            split: SplitInfo {
                test_fraction: 0.0,
                seed,
            },
            stats: None,
        }
    }

    pub fn refresh_totals(&mut self) {
        self.total_episodes = self.episodes.len();
        self.total_frames = self.episodes.iter().map(|e| e.meta.frame_count as usize).sum();
    }

    pub fn split_of(&self, episode_id: u32) -> Option<Split> {
        self.episodes.iter().find(|e| e.meta.episode_id == episode_id).map(|e| e.split)
    }

    pub fn count(&self, split: Split) -> usize {
        self.episodes.iter().filter(|e| e.split == split).count()
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("manifest serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self, DatasetError> {
        let m: DatasetManifest = serde_json::from_str(text).map_err(|e| DatasetError::Manifest(e.to_string()))?;
        if m.format_version != FORMAT_VERSION {
            return Err(DatasetError::Version {
                found: m.format_version,
                supported: FORMAT_VERSION,
            });
        }
        Ok(m)
    }

    pub fn load(dir: &Path) -> Result<Self, DatasetError> {
        let path = dir.join(MANIFEST_FILE);
        let text = std::fs::read_to_string(&path).map_err(|e| DatasetError::io(&path, e))?;
        Self::from_json(&text)
    }

    pub fn save(&self, dir: &Path) -> Result<(), DatasetError> {
        let path = dir.join(MANIFEST_FILE);
        std::fs::write(&path, self.to_json()).map_err(|e| DatasetError::io(&path, e))
    }
}

pub fn episode_file_name(episode_id: u32) -> String {
    format!("ep{episode_id:05}.bin")
}

/// Normalization statistics over the frames of `episodes` that the manifest
/// assigns to the train split.
pub fn compute_stats(manifest: &DatasetManifest, episodes: &[Episode]) -> Result<NormStats, DatasetError> {
    let train: Vec<&FrameRecord> = episodes
        .iter()
        .filter(|e| manifest.split_of(e.meta.episode_id) == Some(Split::Train))
        .flat_map(|e| e.frames.iter())
        .collect();
    stats_over(&train)
}

pub fn stats_over(frames: &[&FrameRecord]) -> Result<NormStats, DatasetError> {
    let state = ChannelStats::from_rows(frames.iter().map(|f| &f.state[..]), STATE_DIM);
    let action = ChannelStats::from_rows(frames.iter().map(|f| &f.action[..]), ACTION_DIM);
    let target = ChannelStats::from_rows(frames.iter().map(|f| &f.target[..]), TARGET_DIM);
    match (state, action, target) {
        (Some(state), Some(action), Some(target)) => Ok(NormStats {
            frames: frames.len(),
            state,
            action,
            target,
        }),
        _ => Err(DatasetError::EmptyTrainSplit),
    }
}

fn task_seed(seed: u64, task_id: &str) -> u64 {
    seed ^ checksum(task_id.as_bytes())
}

/// Per-task stratified split. Each task with `n >= 2` episodes sends
/// `round(n * fraction)` of them, clamped to `1..=n-1`, to the test split.
pub fn split_dataset(manifest: &DatasetManifest, test_fraction: f64, seed: u64) -> DatasetManifest {
    assert!(test_fraction > 0.0 && test_fraction < 1.0, "test fraction must be in (0, 1)");
    let mut out = manifest.clone();
    let mut by_task: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, e) in manifest.episodes.iter().enumerate() {
        by_task.entry(e.meta.task_id.as_str()).or_default().push(i);
    }
    for e in out.episodes.iter_mut() {
        e.split = Split::Train;
    }
    for (task, mut idx) in by_task {
        let n = idx.len();
        if n < 2 {
            continue;
        }
        let k = ((n as f64 * test_fraction).round() as usize).clamp(1, n - 1);
        idx.sort_by_key(|&i| manifest.episodes[i].meta.episode_id);
        let mut rng = ChaCha8Rng::seed_from_u64(task_seed(seed, task));
        idx.shuffle(&mut rng);
        for &i in &idx[..k] {
            out.episodes[i].split = Split::Test;
        }
    }
    out.split = SplitInfo { test_fraction, seed };
    out
}

/// One violated invariant, located as precisely as possible.
#[derive(Debug, Clone, PartialEq)]
pub struct Issue {
    pub episode: Option<String>,
    pub frame: Option<usize>,
    pub message: String,
}

impl std::fmt::Display for Issue {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match (&self.episode, self.frame) {
            (Some(e), Some(k)) => write!(f, "{e} frame {k}: {}", self.message),
            (Some(e), None) => write!(f, "{e}: {}", self.message),
            _ => f.write_str(&self.message),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ValidationReport {
    pub episodes_checked: usize,
    pub frames_checked: usize,
    pub issues: Vec<Issue>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.issues.is_empty()
    }
}

/// Checks every dataset invariant: container integrity, 10 Hz timestamps,
/// label recomputation, metadata agreement, totals, split partition and
/// statistics.
pub fn validate_dataset(dir: &Path) -> ValidationReport {
    let mut report = ValidationReport::default();
    let manifest = match DatasetManifest::load(dir) {
        Ok(m) => m,
        Err(e) => {
            report.issues.push(Issue {
                episode: None,
                frame: None,
                message: e.to_string(),
            });
            return report;
        }
    };
    let mut push = |episode: Option<&str>, frame: Option<usize>, message: String| {
        report.issues.push(Issue {
            episode: episode.map(str::to_string),
            frame,
            message,
        })
    };

    let mut ids = HashSet::new();
    let mut files = HashSet::new();
    let mut episodes = Vec::new();
    let known_tasks: HashSet<&str> = manifest.tasks.iter().map(|t| t.id.as_str()).collect();
    let mut frames_checked = 0;
    for entry in &manifest.episodes {
        let name = entry.file.as_str();
        if !ids.insert(entry.meta.episode_id) {
            push(Some(name), None, format!("duplicate episode id {}", entry.meta.episode_id));
        }
        if !files.insert(name) {
            push(Some(name), None, "file listed twice".into());
        }
        if !known_tasks.contains(entry.meta.task_id.as_str()) {
            push(Some(name), None, format!("task `{}` is not in the catalog", entry.meta.task_id));
        }
        let ep = match read_episode(&dir.join(name)) {
            Ok(ep) => ep,
            Err(e) => {
                push(Some(name), None, e.to_string());
                continue;
            }
        };
        if ep.meta != entry.meta {
            push(Some(name), None, "episode metadata differs from the manifest entry".into());
        }
        if ep.meta.frame_count as usize != ep.frames.len() {
            push(Some(name), None, format!("meta declares {} frames, file has {}", ep.meta.frame_count, ep.frames.len()));
        }
        if frames_for_duration(ep.meta.duration_s) != ep.frames.len() {
            push(
                Some(name),
                None,
                format!("{} frames for {} s violates the 10 Hz rule", ep.frames.len(), ep.meta.duration_s),
            );
        }
        for (k, f) in ep.frames.iter().enumerate() {
            if f.timestamp != frame_time(k) {
                push(
                    Some(name),
                    Some(k),
                    format!("timestamp {} violates the 10 Hz rule (expected {})", f.timestamp, frame_time(k)),
                );
            }
            if !f.all_finite() {
                push(Some(name), Some(k), "non-finite value".into());
            }
            let r = label_residual(f);
            if r.is_nan() || r > CHECK_TOLERANCE {
                push(Some(name), Some(k), format!("target label deviates from recomputation by {r:e}"));
            }
            if f.instruction != ep.meta.instruction_id {
                push(Some(name), Some(k), "instruction id differs from episode metadata".into());
            }
        }
        frames_checked += ep.frames.len();
        episodes.push(ep);
    }
    report.episodes_checked = episodes.len();
    report.frames_checked = frames_checked;

    let mut expected = manifest.clone();
    expected.refresh_totals();
    if expected.total_episodes != manifest.total_episodes || expected.total_frames != manifest.total_frames {
        report.issues.push(Issue {
            episode: None,
            frame: None,
            message: format!(
                "manifest totals ({} episodes, {} frames) differ from the episode list ({}, {})",
                manifest.total_episodes, manifest.total_frames, expected.total_episodes, expected.total_frames
            ),
        });
    }
    if let Some(stats) = &manifest.stats {
        if episodes.len() == manifest.episodes.len() {
            match compute_stats(&manifest, &episodes) {
                Ok(s) => {
                    let dev = s.max_deviation(stats);
                    if dev.is_nan() || dev > CHECK_TOLERANCE || s.frames != stats.frames {
                        report.issues.push(Issue {
                            episode: None,
                            frame: None,
                            message: format!("stored statistics differ from the train split by {dev:e}"),
                        });
                    }
                }
                Err(e) => report.issues.push(Issue {
                    episode: None,
                    frame: None,
                    message: e.to_string(),
                }),
            }
        }
    }
    report
}

/// Reads every episode listed in the manifest, in manifest order.
pub fn load_episodes(dir: &Path, manifest: &DatasetManifest, images: bool) -> Result<Vec<Episode>, DatasetError> {
    manifest
        .episodes
        .iter()
        .map(|e| {
            let path = dir.join(&e.file);
            let bytes = std::fs::read(&path).map_err(|err| DatasetError::io(&path, err))?;
            super::format::decode_episode_with(&bytes, images)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_and_alternating_channels() {
        let rows: Vec<Vec<f64>> = (0..10).map(|i| vec![3.5, if i % 2 == 0 { 1.0 } else { -1.0 }]).collect();
        let s = ChannelStats::from_rows(rows.iter().map(|r| r.as_slice()), 2).unwrap();
        assert_eq!(s.mean[0], 3.5);
        assert_eq!(s.std[0], STD_FLOOR);
        assert_eq!(s.mean[1], 0.0);
        assert_eq!(s.std[1], 1.0);
        assert_eq!((s.min[1], s.max[1]), (-1.0, 1.0));
    }

    #[test]
    fn no_rows_no_stats() {
        assert!(ChannelStats::from_rows(std::iter::empty(), 3).is_none());
        assert!(matches!(stats_over(&[]), Err(DatasetError::EmptyTrainSplit)));
    }
}
