//! IMU, DVL and pressure sensor models.

use super::render::cast_ray;
use super::scene::SceneGraph;
use crate::vehicle::{VehicleState, GRAVITY};
use nalgebra::Vector3;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

pub const ATMOSPHERIC_PRESSURE: f64 = 101_325.0;
pub const WATER_DENSITY: f64 = 1025.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ImuNoise {
    pub gyro_sigma: f64,
    pub accel_sigma: f64,
    pub gyro_bias: [f64; 3],
    pub accel_bias: [f64; 3],
}

impl Default for ImuNoise {
    fn default() -> Self {
        Self {
            gyro_sigma: 0.002,
            accel_sigma: 0.02,
            gyro_bias: [0.0; 3],
            accel_bias: [0.0; 3],
        }
    }
}

impl ImuNoise {
    pub fn off() -> Self {
        Self {
            gyro_sigma: 0.0,
            accel_sigma: 0.0,
            ..Default::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DvlNoise {
    pub velocity_sigma: f64,
    pub altitude_sigma: f64,
    pub max_range: f64,
}

impl Default for DvlNoise {
    fn default() -> Self {
        Self {
            velocity_sigma: 0.005,
            altitude_sigma: 0.02,
            max_range: 50.0,
        }
    }
}

impl DvlNoise {
    pub fn off() -> Self {
        Self {
            velocity_sigma: 0.0,
            altitude_sigma: 0.0,
            ..Default::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SensorParams {
    pub imu: ImuNoise,
    pub dvl: DvlNoise,
    /// Pressure noise standard deviation, Pa.
    pub pressure_sigma: f64,
}

impl Default for SensorParams {
    fn default() -> Self {
        Self {
            imu: ImuNoise::default(),
            dvl: DvlNoise::default(),
            pressure_sigma: 20.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImuReading {
    pub gyro: Vector3<f64>,
    pub accel: Vector3<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DvlReading {
    pub velocity: Vector3<f64>,
    /// `None` when no terrain is within range below the vehicle.
    pub altitude: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PressureReading {
    pub pressure: f64,
    pub depth: f64,
}

fn gaussian<R: Rng + ?Sized>(sigma: f64, rng: &mut R) -> f64 {
    if sigma > 0.0 {
        Normal::new(0.0, sigma).expect("finite sigma").sample(rng)
    } else {
        0.0
    }
}

fn gaussian3<R: Rng + ?Sized>(sigma: f64, rng: &mut R) -> Vector3<f64> {
    Vector3::new(gaussian(sigma, rng), gaussian(sigma, rng), gaussian(sigma, rng))
}

/// Specific force and body rates. `accel_world` is the true world-frame
/// acceleration of the body origin.
pub fn imu_read<R: Rng + ?Sized>(
    state: &VehicleState,
    accel_world: &Vector3<f64>,
    noise: &ImuNoise,
    rng: &mut R,
) -> ImuReading {
    let gravity = Vector3::new(0.0, 0.0, -GRAVITY);
    let specific = state.pose.rotation.inverse() * (accel_world - gravity);
    ImuReading {
        gyro: state.angular_velocity + Vector3::from(noise.gyro_bias) + gaussian3(noise.gyro_sigma, rng),
        accel: specific + Vector3::from(noise.accel_bias) + gaussian3(noise.accel_sigma, rng),
    }
}

/// Body-frame velocity and altitude above whatever lies straight below.
pub fn dvl_read<R: Rng + ?Sized>(
    state: &VehicleState,
    scene: &SceneGraph,
    noise: &DvlNoise,
    rng: &mut R,
) -> DvlReading {
    let velocity = state.linear_velocity + gaussian3(noise.velocity_sigma, rng);
    let down = Vector3::new(0.0, 0.0, -1.0);
    let altitude = cast_ray(scene, &state.pose.translation, &down, noise.max_range)
        .map(|hit| hit.distance + gaussian(noise.altitude_sigma, rng));
    DvlReading { velocity, altitude }
}

pub fn pressure_at_depth(depth: f64) -> f64 {
    ATMOSPHERIC_PRESSURE + WATER_DENSITY * GRAVITY * depth
}

pub fn depth_from_pressure(pressure: f64) -> f64 {
    (pressure - ATMOSPHERIC_PRESSURE) / (WATER_DENSITY * GRAVITY)
}

pub fn pressure_read<R: Rng + ?Sized>(depth: f64, sigma: f64, rng: &mut R) -> PressureReading {
    let pressure = pressure_at_depth(depth) + gaussian(sigma, rng);
    PressureReading {
        pressure,
        depth: depth_from_pressure(pressure),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Pose;
    use crate::vehicle::VehicleParams;
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rest(pose: Pose) -> VehicleState {
        VehicleState::at_rest(pose, &VehicleParams::default())
    }

    #[test]
    fn imu_at_rest_reads_gravity() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let r = imu_read(&rest(Pose::identity()), &Vector3::zeros(), &ImuNoise::off(), &mut rng);
        assert_eq!(r.gyro, Vector3::zeros());
        assert_abs_diff_eq!(r.accel.z, 9.81, epsilon = 1e-15);
        assert_abs_diff_eq!(r.accel.norm(), 9.81, epsilon = 1e-15);

        let mut s = rest(Pose::identity());
        s.angular_velocity = Vector3::new(0.0, 0.0, 1.0);
        let r = imu_read(&s, &Vector3::zeros(), &ImuNoise::off(), &mut rng);
        assert_eq!(r.gyro, Vector3::new(0.0, 0.0, 1.0));
    }

    #[test]
    fn pressure_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(pressure_read(0.0, 0.0, &mut rng).pressure, 101_325.0);
        assert_abs_diff_eq!(pressure_read(10.0, 0.0, &mut rng).pressure, 201_877.5, epsilon = 1e-9);
        for d in [0.0, 0.5, 3.0, 10.0, 47.25] {
            assert_abs_diff_eq!(pressure_read(d, 0.0, &mut rng).depth, d, epsilon = 1e-12);
        }
    }
}
