//! The `train` command.

use crate::{HarnessConfig, HarnessError};
use aquasim::dataset::{read_episode, DatasetManifest, Split};
use aquasim::learner::{
    curve_ends, e_action, e_target, episode_samples, loss_curve_csv, mean_label, save_checkpoint, train, LossPoint, Model, Normalizer,
    Sample, TargetPart,
};
use std::path::{Path, PathBuf};

pub const CHECKPOINT_FILE: &str = "model.ckpt";
pub const CURVE_FILE: &str = "loss_curve.csv";

/// Frames of one split, converted for the learner.
pub fn load_samples(dir: &Path, manifest: &DatasetManifest, split: Split, model: &Model) -> Result<Vec<Sample>, HarnessError> {
    let mut out = Vec::new();
    for e in manifest.episodes.iter().filter(|e| e.split == split) {
        let ep = read_episode(&dir.join(&e.file))?;
        out.extend(episode_samples(&ep, &model.norm, model.grid_cells)?);
    }
    Ok(out)
}

pub fn normalizer(manifest: &DatasetManifest) -> Result<Normalizer, HarnessError> {
    let stats = manifest
        .stats
        .as_ref()
        .ok_or_else(|| HarnessError::Usage("dataset has no statistics; run `stats` first".into()))?;
    Ok(Normalizer::from_stats(stats))
}

/// Scores of a trained model and of the mean predictor on one split.
#[derive(Debug, Clone, PartialEq)]
pub struct OfflineScores {
    pub frames: usize,
    pub e_action: f64,
    pub e_target: f64,
    pub baseline_e_action: f64,
    pub baseline_e_target: f64,
}

pub fn score(model: &Model, samples: &[Sample], train: &[Sample]) -> Result<OfflineScores, HarnessError> {
    let mut pa = Vec::with_capacity(samples.len());
    let mut pt = Vec::with_capacity(samples.len());
    for s in samples {
        let p = model.predict_sample(s)?;
        pa.push(p.action.to_vec());
        pt.push(p.target.to_vec());
    }
    let ra: Vec<Vec<f64>> = samples.iter().map(|s| s.action.to_vec()).collect();
    let rt: Vec<Vec<f64>> = samples.iter().map(|s| s.target.to_vec()).collect();
    let train_targets: Vec<[f64; 7]> = train.iter().map(|s| s.target).collect();
    let mean_t = mean_label(&train_targets).ok_or_else(|| HarnessError::Usage("empty train split".into()))?;
    let mean_a: Vec<f64> = (0..ra[0].len())
        .map(|i| train.iter().map(|s| s.action[i]).sum::<f64>() / train.len() as f64)
        .collect();
    Ok(OfflineScores {
        frames: samples.len(),
        e_action: e_action(&pa, &ra)?,
        e_target: e_target(&pt, &rt, TargetPart::Position)?,
        baseline_e_action: e_action(&vec![mean_a; ra.len()], &ra)?,
        baseline_e_target: e_target(&vec![mean_t.to_vec(); rt.len()], &rt, TargetPart::Position)?,
    })
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: Model,
    pub curve: Vec<LossPoint>,
    /// Mean total loss over the first and last 100 steps.
    pub leading_mean: f64,
    pub trailing_mean: f64,
    pub train: OfflineScores,
    /// Scores on the test split, when it has frames.
    pub test: Option<OfflineScores>,
    pub checkpoint: PathBuf,
    pub curve_file: PathBuf,
}

/// Trains both heads on the train split, writes the checkpoint and the loss
/// curve into `out`, and scores the model against the mean predictor.
pub fn train_command(cfg: &HarnessConfig, dataset: &Path, out: &Path, seed: u64) -> Result<TrainOutcome, HarnessError> {
    let manifest = DatasetManifest::load(dataset)?;
    let norm = normalizer(&manifest)?;
    let init = Model::new(cfg.train.cap, norm, cfg.train.grid_cells, seed)?;
    let train_samples = load_samples(dataset, &manifest, Split::Train, &init)?;
    if train_samples.is_empty() {
        return Err(HarnessError::Usage("train split has no frames".into()));
    }
    let loss = aquasim::learner::LossConfig { seed, ..cfg.train.loss };
    let (model, curve) = train(init, &train_samples, &loss)?;
    let (leading_mean, trailing_mean) = curve_ends(&curve, 100).unwrap_or((f64::NAN, f64::NAN));

    std::fs::create_dir_all(out).map_err(|e| HarnessError::io(out.display().to_string(), e))?;
    let checkpoint = out.join(CHECKPOINT_FILE);
    save_checkpoint(&checkpoint, &model, Some(&loss))?;
    let curve_file = out.join(CURVE_FILE);
    std::fs::write(&curve_file, loss_curve_csv(&curve)).map_err(|e| HarnessError::io(curve_file.display().to_string(), e))?;

    let train_scores = score(&model, &train_samples, &train_samples)?;
    let test_samples = load_samples(dataset, &manifest, Split::Test, &model)?;
    let test = if test_samples.is_empty() {
        None
    } else {
        Some(score(&model, &test_samples, &train_samples)?)
    };
    Ok(TrainOutcome {
        model,
        curve,
        leading_mean,
        trailing_mean,
        train: train_scores,
        test,
        checkpoint,
        curve_file,
    })
}
