//! Per-episode pose and action traces as comma-separated text.

use crate::HarnessError;
use aquasim::dataset::{decode_episode_with, DatasetManifest, Episode};
use aquasim::tasks::select_tasks;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

pub fn trace_csv(ep: &Episode) -> String {
    let mut out = String::from("time,x,y,z,qw,qx,qy,qz,target_x,target_y,target_z");
    for i in 0..aquasim::vehicle::ACTION_DIM {
        let _ = write!(out, ",a{i}");
    }
    out.push('\n');
    for f in &ep.frames {
        let p = f.robot_pose();
        let q = p.rotation;
        let t = &f.target_world;
        let _ = write!(
            out,
            "{:.1},{},{},{},{},{},{},{},{},{},{}",
            f.timestamp, p.translation.x, p.translation.y, p.translation.z, q.w, q.i, q.j, q.k, t[4], t[5], t[6]
        );
        for a in &f.action {
            let _ = write!(out, ",{a}");
        }
        out.push('\n');
    }
    out
}

/// Writes `<episode file stem>.csv` for every episode whose task matches
/// `tasks`; returns the written paths.
pub fn replay_export(dataset: &Path, tasks: &str, out: &Path) -> Result<Vec<PathBuf>, HarnessError> {
    let keep: Vec<String> = select_tasks(tasks)
        .map_err(|e| HarnessError::Usage(e.to_string()))?
        .iter()
        .map(|t| t.id.to_string())
        .collect();
    let manifest = DatasetManifest::load(dataset)?;
    std::fs::create_dir_all(out).map_err(|e| HarnessError::io(out.display().to_string(), e))?;
    let mut written = Vec::new();
    for e in manifest.episodes.iter().filter(|e| keep.contains(&e.meta.task_id)) {
        let path = dataset.join(&e.file);
        let bytes = std::fs::read(&path).map_err(|err| HarnessError::io(path.display().to_string(), err))?;
        let ep = decode_episode_with(&bytes, false)?;
        let stem = Path::new(&e.file).file_stem().and_then(|s| s.to_str()).unwrap_or("episode");
        let dst = out.join(format!("{stem}.csv"));
        std::fs::write(&dst, trace_csv(&ep)).map_err(|err| HarnessError::io(dst.display().to_string(), err))?;
        written.push(dst);
    }
    Ok(written)
}
