//! Randomized scenes, stereo rendering and navigation sensors.

mod render;
mod scene;
mod sensors;

pub use render::{
    cast_ray, intersect_primitive, render_stereo, render_view, shade, CameraParams, Hit, Image, StereoFrame, NO_HIT,
};
pub use scene::{
    build_scenario, objects, resample_polyline, Bounds, GroundPlane, OpticsRanges, Primitive, Range, ScenarioId,
    ScenarioSpec, SceneGraph, Semantic, Shape, WaterOptics,
};
pub use sensors::{
    depth_from_pressure, dvl_read, imu_read, pressure_at_depth, pressure_read, DvlNoise, DvlReading, ImuNoise,
    ImuReading, PressureReading, SensorParams, ATMOSPHERIC_PRESSURE, WATER_DENSITY,
};
