//! Offline error measures.

use super::LearnerError;
use crate::geometry::Pose;
use serde::{Deserialize, Serialize};

/// Which part of a target label `[qw qx qy qz x y z]` an error refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetPart {
    /// Euclidean distance between positions, meters.
    #[default]
    Position,
    /// Geodesic angle between orientations, radians.
    Orientation,
}

fn same_shape<T: AsRef<[f64]>>(a: &[T], b: &[T]) -> Result<(), LearnerError> {
    if a.len() != b.len() || a.iter().zip(b).any(|(x, y)| x.as_ref().len() != y.as_ref().len()) {
        return Err(LearnerError::Shape("prediction and reference sets differ in shape".into()));
    }
    if a.is_empty() {
        return Err(LearnerError::Shape("no frames to score".into()));
    }
    Ok(())
}

/// Mean absolute error over every frame and action dimension.
pub fn e_action<T: AsRef<[f64]>>(predicted: &[T], recorded: &[T]) -> Result<f64, LearnerError> {
    same_shape(predicted, recorded)?;
    let mut sum = 0.0;
    let mut n = 0usize;
    for (p, r) in predicted.iter().zip(recorded) {
        for (a, b) in p.as_ref().iter().zip(r.as_ref()) {
            sum += (a - b).abs();
            n += 1;
        }
    }
    Ok(sum / n as f64)
}

/// Mean per-frame error of target labels.
pub fn e_target<T: AsRef<[f64]>>(predicted: &[T], truth: &[T], part: TargetPart) -> Result<f64, LearnerError> {
    same_shape(predicted, truth)?;
    let mut sum = 0.0;
    for (p, t) in predicted.iter().zip(truth) {
        let (p, t) = (p.as_ref(), t.as_ref());
        if p.len() != 7 {
            return Err(LearnerError::Shape(format!("target labels have 7 components, got {}", p.len())));
        }
        sum += match part {
            TargetPart::Position => ((p[4] - t[4]).powi(2) + (p[5] - t[5]).powi(2) + (p[6] - t[6]).powi(2)).sqrt(),
            TargetPart::Orientation => {
                let a = Pose::from_array(p.try_into().unwrap());
                let b = Pose::from_array(t.try_into().unwrap());
                a.rotation.angle_to(&b.rotation)
            }
        };
    }
    Ok(sum / predicted.len() as f64)
}

/// Label predicted by the mean-predictor baseline: mean position and the
/// normalized mean of quaternions sign-aligned with the first label.
pub fn mean_label<T: AsRef<[f64]>>(labels: &[T]) -> Option<[f64; 7]> {
    if labels.is_empty() {
        return None;
    }
    let mut out = [0.0; 7];
    let first = labels[0].as_ref();
    for l in labels {
        let l = l.as_ref();
        let dot: f64 = (0..4).map(|i| l[i] * first[i]).sum();
        let sign = if dot < 0.0 { -1.0 } else { 1.0 };
        for i in 0..4 {
            out[i] += sign * l[i];
        }
        for i in 4..7 {
            out[i] += l[i];
        }
    }
    let n = labels.len() as f64;
    out.iter_mut().for_each(|v| *v /= n);
    let q = (out[0] * out[0] + out[1] * out[1] + out[2] * out[2] + out[3] * out[3]).sqrt();
    if q > 1e-12 {
        out[..4].iter_mut().for_each(|v| *v /= q);
    } else {
        out[..4].copy_from_slice(&[1.0, 0.0, 0.0, 0.0]);
    }
    Some(out)
}
