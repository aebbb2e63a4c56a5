//! In-memory episode records.

use crate::geometry::Pose;
use crate::vehicle::ACTION_DIM;
use crate::world::{Image, StereoFrame, NO_HIT};
use serde::{Deserialize, Serialize};

pub const IMU_DIM: usize = 6;
pub const DVL_DIM: usize = 4;
pub const PRESSURE_DIM: usize = 2;
/// Previous action echo, pose, body velocities.
pub const STATE_DIM: usize = ACTION_DIM + 7 + 6;
pub const TARGET_DIM: usize = 7;
pub const ARM_DIM: usize = 5;

/// Number of `f64` values per frame in the numeric block.
pub const FRAME_STRIDE: usize =
    1 + IMU_DIM + DVL_DIM + PRESSURE_DIM + STATE_DIM + ACTION_DIM + TARGET_DIM + TARGET_DIM + ARM_DIM + 1;

/// Offsets into the numeric frame block.
pub mod layout {
    use super::*;
    pub const TIMESTAMP: usize = 0;
    pub const IMU: usize = 1;
    pub const DVL: usize = IMU + IMU_DIM;
    pub const PRESSURE: usize = DVL + DVL_DIM;
    pub const STATE: usize = PRESSURE + PRESSURE_DIM;
    pub const STATE_PREV_ACTION: usize = STATE;
    pub const STATE_POSE: usize = STATE + ACTION_DIM;
    pub const STATE_VELOCITY: usize = STATE_POSE + 7;
    pub const ACTION: usize = STATE + STATE_DIM;
    pub const TARGET: usize = ACTION + ACTION_DIM;
    pub const TARGET_WORLD: usize = TARGET + TARGET_DIM;
    pub const ARM: usize = TARGET_WORLD + TARGET_DIM;
    pub const INSTRUCTION: usize = ARM + ARM_DIM;
}

/// Value written for "no DVL bottom lock".
pub const DVL_NO_ALTITUDE: f64 = -1.0;
/// On-disk depth for pixels without a hit.
pub const DEPTH_SENTINEL: f32 = f32::MAX;

/// Quantized view as stored on disk: 8-bit RGB, 32-bit depth, 8-bit labels.
#[derive(Debug, Clone, PartialEq)]
pub struct StoredImage {
    pub width: usize,
    pub height: usize,
    pub rgb: Vec<u8>,
    pub depth: Vec<f32>,
    pub semantic: Vec<u8>,
}

impl StoredImage {
    pub fn from_image(img: &Image) -> Self {
        Self {
            width: img.width,
            height: img.height,
            rgb: img.rgb.iter().map(|c| (c.clamp(0.0, 1.0) * 255.0).round() as u8).collect(),
            depth: img
                .depth
                .iter()
                .map(|d| if *d == NO_HIT { DEPTH_SENTINEL } else { *d as f32 })
                .collect(),
            semantic: img.semantic.clone(),
        }
    }

    pub fn pixel_count(&self) -> usize {
        self.width * self.height
    }

    /// Depth in meters, `None` for the no-hit sentinel.
    pub fn depth_at(&self, i: usize) -> Option<f64> {
        let d = self.depth[i];
        (d != DEPTH_SENTINEL).then_some(d as f64)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StoredStereo {
    pub left: StoredImage,
    pub right: StoredImage,
}

impl StoredStereo {
    pub fn from_frame(frame: &StereoFrame) -> Self {
        Self {
            left: StoredImage::from_image(&frame.left),
            right: StoredImage::from_image(&frame.right),
        }
    }
}

/// One 10 Hz tick.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameRecord {
    pub timestamp: f64,
    pub images: Option<StoredStereo>,
    /// Gyro xyz then accelerometer xyz.
    pub imu: [f64; IMU_DIM],
    /// Body velocity xyz then altitude ([`DVL_NO_ALTITUDE`] without bottom lock).
    pub dvl: [f64; DVL_DIM],
    /// Pressure (Pa) and the depth estimate derived from it.
    pub pressure: [f64; PRESSURE_DIM],
    pub state: [f64; STATE_DIM],
    pub action: [f64; ACTION_DIM],
    /// Target pose in the robot frame.
    pub target: [f64; TARGET_DIM],
    pub target_world: [f64; TARGET_DIM],
    /// Joint angles then gripper opening.
    pub arm: [f64; ARM_DIM],
    pub instruction: u32,
}

impl FrameRecord {
    pub fn robot_pose(&self) -> Pose {
        let mut a = [0.0; 7];
        a.copy_from_slice(&self.state[ACTION_DIM..ACTION_DIM + 7]);
        Pose::from_array(&a)
    }

    pub fn to_numeric(&self) -> [f64; FRAME_STRIDE] {
        use layout::*;
        let mut out = [0.0; FRAME_STRIDE];
        out[TIMESTAMP] = self.timestamp;
        out[IMU..IMU + IMU_DIM].copy_from_slice(&self.imu);
        out[DVL..DVL + DVL_DIM].copy_from_slice(&self.dvl);
        out[PRESSURE..PRESSURE + PRESSURE_DIM].copy_from_slice(&self.pressure);
        out[STATE..STATE + STATE_DIM].copy_from_slice(&self.state);
        out[ACTION..ACTION + ACTION_DIM].copy_from_slice(&self.action);
        out[TARGET..TARGET + TARGET_DIM].copy_from_slice(&self.target);
        out[TARGET_WORLD..TARGET_WORLD + TARGET_DIM].copy_from_slice(&self.target_world);
        out[ARM..ARM + ARM_DIM].copy_from_slice(&self.arm);
        out[INSTRUCTION] = self.instruction as f64;
        out
    }

    pub fn from_numeric(v: &[f64]) -> Self {
        use layout::*;
        fn take<const N: usize>(v: &[f64], at: usize) -> [f64; N] {
            let mut a = [0.0; N];
            a.copy_from_slice(&v[at..at + N]);
            a
        }
        Self {
            timestamp: v[TIMESTAMP],
            images: None,
            imu: take(v, IMU),
            dvl: take(v, DVL),
            pressure: take(v, PRESSURE),
            state: take(v, STATE),
            action: take(v, ACTION),
            target: take(v, TARGET),
            target_world: take(v, TARGET_WORLD),
            arm: take(v, ARM),
            instruction: v[INSTRUCTION] as u32,
        }
    }

    pub fn all_finite(&self) -> bool {
        self.to_numeric().iter().all(|v| v.is_finite())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeMeta {
    pub episode_id: u32,
    pub task_id: String,
    pub instruction_id: u32,
    pub scenario: String,
    pub scenario_seed: u64,
    pub frame_count: u32,
    pub duration_s: f64,
    pub success: bool,
    pub final_distance: f64,
    pub sim_version: String,
    /// Set when the rollout itself failed (diverged, unreachable target, ...).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Episode {
    pub meta: EpisodeMeta,
    pub frames: Vec<FrameRecord>,
}

/// Frames recorded for an episode lasting `duration` seconds at 10 Hz.
pub fn frames_for_duration(duration: f64) -> usize {
    // duration is a multiple of 0.1 s up to rounding; absorb the rounding
    (duration * 10.0 - 1e-6).ceil().max(0.0) as usize
}

/// Exact timestamp of frame `k`.
pub fn frame_time(k: usize) -> f64 {
    k as f64 / 10.0
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stride_matches_layout() {
        assert_eq!(layout::INSTRUCTION + 1, FRAME_STRIDE);
        assert_eq!(FRAME_STRIDE, 72);
    }

    #[test]
    fn ten_hz_frame_counts() {
        assert_eq!(frames_for_duration(23.0), 230);
        assert_eq!(frames_for_duration(0.1 * 3.0), 3);
        assert_eq!(frames_for_duration(15.04), 151);
        assert_eq!(frames_for_duration(0.0), 0);
    }
}
