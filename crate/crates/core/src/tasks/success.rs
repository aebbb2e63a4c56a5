//! Per-family success predicates over recorded traces.

use super::rollout::EpisodeTrace;
use super::{TaskFamily, TaskSpec};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SuccessReport {
    pub success: bool,
    /// Robot-target separation at the end of the episode, meters. Grasping
    /// tasks measure from the gripper tip to the object.
    pub final_distance: f64,
}

/// Fraction of `route` points the robot passed within `radius` of.
pub fn route_coverage(trace: &EpisodeTrace, radius: f64) -> f64 {
    let route = &trace.context.route;
    if route.is_empty() {
        return 0.0;
    }
    let covered = route
        .iter()
        .filter(|w| trace.samples.iter().any(|s| (s.robot.translation - *w).norm() <= radius))
        .count();
    covered as f64 / route.len() as f64
}

pub fn success_check(task: &TaskSpec, trace: &EpisodeTrace) -> SuccessReport {
    let Some(last) = trace.samples.last() else {
        return SuccessReport {
            success: false,
            final_distance: f64::INFINITY,
        };
    };
    let p = &task.success;
    let robot = last.robot.translation;
    match task.family {
        TaskFamily::Goto => {
            let goal = trace.context.goal.unwrap_or(last.target.translation);
            let d = (robot - goal).norm();
            SuccessReport {
                success: d <= p.goal_radius,
                final_distance: d,
            }
        }
        TaskFamily::Follow => {
            let inside = trace
                .samples
                .iter()
                .filter(|s| {
                    let d = (s.robot.translation - s.target.translation).norm();
                    d >= p.standoff[0] && d <= p.standoff[1]
                })
                .count();
            SuccessReport {
                success: inside as f64 >= p.standoff_fraction * trace.samples.len() as f64,
                final_distance: (robot - last.target.translation).norm(),
            }
        }
        TaskFamily::Scan | TaskFamily::Inspect => SuccessReport {
            success: route_coverage(trace, p.coverage_radius) >= p.coverage_fraction,
            final_distance: (robot - last.target.translation).norm(),
        },
        TaskFamily::Pick | TaskFamily::Transfer => {
            let Some(obj) = last.object else {
                return SuccessReport {
                    success: false,
                    final_distance: f64::INFINITY,
                };
            };
            let final_distance = (last.gripper_tip - obj.translation).norm();
            let success = if task.family == TaskFamily::Pick {
                let spawn_z = trace.context.object_spawn.map_or(f64::INFINITY, |s| s.translation.z);
                last.attached && obj.translation.z - spawn_z >= p.lift_height
            } else {
                let was_grasped = trace.samples.iter().any(|s| s.attached);
                let o = obj.translation;
                let in_zone = trace.context.drop_zone.is_some_and(|b| {
                    o.x >= b.min[0] && o.x <= b.max[0] && o.y >= b.min[1] && o.y <= b.max[1]
                });
                was_grasped && !last.attached && in_zone
            };
            SuccessReport { success, final_distance }
        }
    }
}
