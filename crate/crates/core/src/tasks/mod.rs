//! Task catalog, episode rollouts, scripted experts and success criteria.

mod rollout;
mod scripted;
mod success;

pub use rollout::{
    run_episode, Observation, Policy, PolicyError, PolicyOutput, PolicyStatus, RandomPolicy, Rollout, RolloutError,
    RolloutOptions, SimConfig, TaskContext, TraceSample, World, EpisodeTrace, FRAME_DT, PHYSICS_DT, SUBSTEPS,
};
pub use scripted::ScriptedPolicy;
pub use success::{route_coverage, success_check, SuccessReport};

use crate::world::ScenarioId;
use serde::Serialize;
use std::fmt;
use std::str::FromStr;

/// Instruction strings, indexed by instruction id.
pub const INSTRUCTIONS: [&str; 9] = [
    "Inspect the pipeline.",
    "Scan the ship.",
    "Go to the water tower.",
    "Go to the charge station.",
    "Follow the boat.",
    "Pick up the red cylinder.",
    "Pick up the blue cylinder.",
    "Pick up the pipe.",
    "Pick up the red cylinder and transfer it to the box.",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskFamily {
    Goto,
    Follow,
    Scan,
    Inspect,
    Pick,
    Transfer,
}

impl TaskFamily {
    pub fn name(self) -> &'static str {
        match self {
            TaskFamily::Goto => "goto",
            TaskFamily::Follow => "follow",
            TaskFamily::Scan => "scan",
            TaskFamily::Inspect => "inspect",
            TaskFamily::Pick => "pick",
            TaskFamily::Transfer => "transfer",
        }
    }

    pub fn is_grasping(self) -> bool {
        matches!(self, TaskFamily::Pick | TaskFamily::Transfer)
    }

    /// Phases in the order a successful episode visits them.
    pub fn phase_order(self) -> &'static [TaskPhase] {
        use TaskPhase::*;
        match self {
            TaskFamily::Goto => &[Transit, Done],
            TaskFamily::Follow => &[Pursue],
            TaskFamily::Scan | TaskFamily::Inspect => &[Transit, Sweep, Done],
            TaskFamily::Pick => &[Approach, Align, Reach, Grasp, Lift, Done],
            TaskFamily::Transfer => &[Approach, Align, Reach, Grasp, Lift, Carry, Release, Done],
        }
    }

    /// Whether `from -> to` is a legal transition: the next phase in order,
    /// staying put, or falling back from align to approach.
    pub fn transition_allowed(self, from: TaskPhase, to: TaskPhase) -> bool {
        if from == to || (from == TaskPhase::Align && to == TaskPhase::Approach) {
            return true;
        }
        let order = self.phase_order();
        match order.iter().position(|p| *p == from) {
            Some(i) => order.get(i + 1) == Some(&to),
            None => false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskPhase {
    Transit,
    Pursue,
    Sweep,
    Approach,
    Align,
    Reach,
    Grasp,
    Lift,
    Carry,
    Release,
    Done,
}

/// Object a grasping task goes for. The `X` variants spawn with a larger,
/// randomized pose offset.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum PickObject {
    Red,
    RedX,
    Blue,
    BlueX,
    Pipe0,
    Pipe1,
}

impl PickObject {
    pub fn object_id(self) -> u32 {
        use crate::world::objects::*;
        match self {
            PickObject::Red | PickObject::RedX => RED_CYLINDER,
            PickObject::Blue | PickObject::BlueX => BLUE_CYLINDER,
            PickObject::Pipe0 => PIPE0,
            PickObject::Pipe1 => PIPE1,
        }
    }

    pub fn perturbed(self) -> bool {
        matches!(self, PickObject::RedX | PickObject::BlueX)
    }

    fn instruction_id(self) -> u32 {
        match self {
            PickObject::Red | PickObject::RedX => 5,
            PickObject::Blue | PickObject::BlueX => 6,
            PickObject::Pipe0 | PickObject::Pipe1 => 7,
        }
    }

    fn slug(self) -> &'static str {
        match self {
            PickObject::Red => "red",
            PickObject::RedX => "redx",
            PickObject::Blue => "blue",
            PickObject::BlueX => "bluex",
            PickObject::Pipe0 => "pipe0",
            PickObject::Pipe1 => "pipe1",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SuccessParams {
    /// Goto: final distance to the goal anchor.
    pub goal_radius: f64,
    /// Follow: acceptable robot-boat distance band.
    pub standoff: [f64; 2],
    pub standoff_fraction: f64,
    /// Scan and inspect: a waypoint counts as covered once the robot passes within this radius.
    pub coverage_radius: f64,
    pub coverage_fraction: f64,
    /// Pick: required rise of the object above its spawn height.
    pub lift_height: f64,
}

impl Default for SuccessParams {
    fn default() -> Self {
        Self {
            goal_radius: 1.0,
            standoff: [2.0, 4.0],
            standoff_fraction: 0.8,
            coverage_radius: 1.5,
            coverage_fraction: 0.9,
            lift_height: 0.3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TaskSpec {
    pub id: &'static str,
    pub family: TaskFamily,
    pub object: Option<PickObject>,
    pub instruction_id: u32,
    pub scenario: ScenarioId,
    /// Typical demonstration length, seconds.
    pub nominal_duration: f64,
    pub timeout: f64,
    pub success: SuccessParams,
}

impl TaskSpec {
    pub fn instruction(&self) -> &'static str {
        INSTRUCTIONS[self.instruction_id as usize]
    }

    pub fn is_valid(&self) -> bool {
        self.timeout > self.nominal_duration && (self.instruction_id as usize) < INSTRUCTIONS.len()
    }
}

impl fmt::Display for TaskSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown task id `{0}`")]
pub struct UnknownTask(pub String);

fn timeout_for(nominal: f64) -> f64 {
    2.0 * nominal + 30.0
}

fn spec(id: &'static str, family: TaskFamily, object: Option<PickObject>, instruction_id: u32, scenario: ScenarioId, nominal: f64) -> TaskSpec {
    TaskSpec {
        id,
        family,
        object,
        instruction_id,
        scenario,
        nominal_duration: nominal,
        timeout: timeout_for(nominal),
        success: SuccessParams::default(),
    }
}

const PICK_IDS: [[&str; 2]; 6] = [
    ["pick_red_factory", "pick_red_shallow"],
    ["pick_redx_factory", "pick_redx_shallow"],
    ["pick_blue_factory", "pick_blue_shallow"],
    ["pick_bluex_factory", "pick_bluex_shallow"],
    ["pick_pipe0_factory", "pick_pipe0_shallow"],
    ["pick_pipe1_factory", "pick_pipe1_shallow"],
];

/// Average demonstration lengths of the pick variants, (factory, shallow).
const PICK_DURATIONS: [[f64; 2]; 6] = [[23.0, 24.0], [22.0, 25.0], [23.0, 26.0], [22.0, 25.0], [22.0, 23.0], [22.0, 23.0]];

/// The 20 tasks in catalog order.
pub fn catalog() -> Vec<TaskSpec> {
    use PickObject::*;
    use ScenarioId::*;
    let mut out = Vec::with_capacity(20);
    for (i, obj) in [Red, RedX, Blue, BlueX, Pipe0, Pipe1].into_iter().enumerate() {
        debug_assert!(PICK_IDS[i][0].contains(obj.slug()));
        for (j, scenario) in [Factory, Seabed].into_iter().enumerate() {
            out.push(spec(PICK_IDS[i][j], TaskFamily::Pick, Some(obj), obj.instruction_id(), scenario, PICK_DURATIONS[i][j]));
        }
    }
    out.push(spec("transfer_red_shallow", TaskFamily::Transfer, Some(Red), 8, Seabed, 29.0));
    out.push(spec("goto_charge_station", TaskFamily::Goto, None, 3, ChargeStation, 15.0));
    out.push(spec("goto_water_tower", TaskFamily::Goto, None, 2, Lake, 28.0));
    let mut follow = spec("follow_boat", TaskFamily::Follow, None, 4, OpenSea, 36.0);
    follow.timeout = follow.nominal_duration + 30.0;
    out.push(follow);
    out.push(spec("scan_ship_modern", TaskFamily::Scan, None, 1, WreckModern, 67.0));
    out.push(spec("scan_ship_ancient", TaskFamily::Scan, None, 1, WreckAncient, 72.0));
    out.push(spec("inspect_pipeline_sea", TaskFamily::Inspect, None, 0, Pipeline, 65.0));
    out.push(spec("inspect_pipeline_pool", TaskFamily::Inspect, None, 0, IndustrialPool, 110.0));
    out
}

pub fn find_task(id: &str) -> Result<TaskSpec, UnknownTask> {
    catalog()
        .into_iter()
        .find(|t| t.id == id)
        .ok_or_else(|| UnknownTask(id.to_string()))
}

impl FromStr for TaskSpec {
    type Err = UnknownTask;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        find_task(s)
    }
}

/// Tasks selected by a comma-separated filter. Each entry is either a task
/// id or a family name (`goto`, `pick`, ...); `all` selects everything.
pub fn select_tasks(filter: &str) -> Result<Vec<TaskSpec>, UnknownTask> {
    let all = catalog();
    let mut keep = vec![false; all.len()];
    for token in filter.split(',').map(str::trim).filter(|t| !t.is_empty()) {
        let family = match token {
            "all" => None,
            "goto" => Some(TaskFamily::Goto),
            "follow" => Some(TaskFamily::Follow),
            "scan" => Some(TaskFamily::Scan),
            "inspect" => Some(TaskFamily::Inspect),
            "pick" => Some(TaskFamily::Pick),
            "transfer" => Some(TaskFamily::Transfer),
            id => {
                let i = all.iter().position(|t| t.id == id).ok_or_else(|| UnknownTask(id.to_string()))?;
                keep[i] = true;
                continue;
            }
        };
        for (k, t) in keep.iter_mut().zip(&all) {
            *k |= family.is_none_or(|f| t.family == f);
        }
    }
    Ok(all.into_iter().zip(keep).filter(|(_, k)| *k).map(|(t, _)| t).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    #[test]
    fn catalog_has_twenty_unique_valid_tasks() {
        let c = catalog();
        assert_eq!(c.len(), 20);
        let ids: HashSet<_> = c.iter().map(|t| t.id).collect();
        assert_eq!(ids.len(), 20);
        assert!(c.iter().all(TaskSpec::is_valid));
    }

    #[test]
    fn every_instruction_is_used() {
        let used: HashSet<_> = catalog().iter().map(|t| t.instruction()).collect();
        assert_eq!(used, INSTRUCTIONS.iter().copied().collect());
    }

    #[test]
    fn charge_station_is_fifteen_seconds() {
        assert_eq!(find_task("goto_charge_station").unwrap().nominal_duration, 15.0);
        assert!(find_task("goto_moon").is_err());
    }

    #[test]
    fn filters_by_family_and_id() {
        assert_eq!(select_tasks("goto").unwrap().len(), 2);
        assert_eq!(select_tasks("pick").unwrap().len(), 12);
        assert_eq!(select_tasks("all").unwrap().len(), 20);
        let ids: Vec<_> = select_tasks("follow_boat,scan").unwrap().iter().map(|t| t.id).collect();
        assert_eq!(ids, ["follow_boat", "scan_ship_modern", "scan_ship_ancient"]);
        assert!(select_tasks("nope").is_err());
    }

    #[test]
    fn transitions() {
        use TaskPhase::*;
        let f = TaskFamily::Pick;
        assert!(f.transition_allowed(Approach, Align));
        assert!(f.transition_allowed(Align, Approach));
        assert!(!f.transition_allowed(Approach, Reach));
        assert!(!f.transition_allowed(Lift, Carry));
        assert!(TaskFamily::Transfer.transition_allowed(Lift, Carry));
    }
}
