//! Planar base poses, spatial end-effector poses and the coordinated
//! per-waypoint state.
//!
//! Orientation of the end-effector is stored as roll-pitch-yaw with the
//! `R = Rz(yaw) * Ry(pitch) * Rx(roll)` convention. Every angle handed out by
//! these types is wrapped to `(-pi, pi]`.

use nalgebra::{Isometry3, Rotation3, SVector, Translation3, UnitQuaternion, Vector2, Vector3};
use std::f64::consts::PI;

/// Pitch magnitudes closer than this to `pi/2` are reported as gimbal-locked.
pub const GIMBAL_BAND: f64 = 1e-3;

/// Wraps an angle to `(-pi, pi]`.
pub fn wrap_angle(a: f64) -> f64 {
    let r = (a + PI).rem_euclid(2.0 * PI) - PI;
    if r <= -PI {
        r + 2.0 * PI
    } else {
        r
    }
}

/// Pose of the tracked chassis on SE(2).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BasePose {
    pub x: f64,
    pub y: f64,
    yaw: f64,
}

impl Default for BasePose {
    fn default() -> Self {
        Self::new(0.0, 0.0, 0.0)
    }
}

impl BasePose {
    pub fn new(x: f64, y: f64, yaw: f64) -> Self {
        Self {
            x,
            y,
            yaw: wrap_angle(yaw),
        }
    }

    pub fn yaw(&self) -> f64 {
        self.yaw
    }

    pub fn set_yaw(&mut self, yaw: f64) {
        self.yaw = wrap_angle(yaw);
    }

    pub fn xy(&self) -> Vector2<f64> {
        Vector2::new(self.x, self.y)
    }

    /// Lifts the planar pose to SE(3) with `z = 0`, `roll = pitch = 0`.
    pub fn to_isometry(&self) -> Isometry3<f64> {
        Isometry3::from_parts(
            Translation3::new(self.x, self.y, 0.0),
            UnitQuaternion::from_euler_angles(0.0, 0.0, self.yaw),
        )
    }

    /// Planar composition `self ⊕ other`, i.e. `other` expressed in `self`'s frame.
    pub fn compose(&self, other: &BasePose) -> BasePose {
        let (s, c) = self.yaw.sin_cos();
        BasePose::new(
            self.x + c * other.x - s * other.y,
            self.y + s * other.x + c * other.y,
            self.yaw + other.yaw,
        )
    }

    pub fn inverse(&self) -> BasePose {
        let (s, c) = self.yaw.sin_cos();
        BasePose::new(-(c * self.x + s * self.y), s * self.x - c * self.y, -self.yaw)
    }

    /// Projects a spatial pose to SE(2), dropping height, roll and pitch.
    pub fn from_isometry(iso: &Isometry3<f64>) -> BasePose {
        let t = iso.translation.vector;
        // heading of the body x-axis in the ground plane
        let x_axis = iso.rotation * Vector3::x();
        BasePose::new(t.x, t.y, x_axis.y.atan2(x_axis.x))
    }
}

/// End-effector pose on SE(3): position plus roll-pitch-yaw.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EePose {
    pub position: Vector3<f64>,
    rpy: Vector3<f64>,
}

impl Default for EePose {
    fn default() -> Self {
        Self::new(Vector3::zeros(), Vector3::zeros())
    }
}

impl EePose {
    pub fn new(position: Vector3<f64>, rpy: Vector3<f64>) -> Self {
        Self {
            position,
            rpy: rpy.map(wrap_angle),
        }
    }

    pub fn from_parts(x: f64, y: f64, z: f64, roll: f64, pitch: f64, yaw: f64) -> Self {
        Self::new(Vector3::new(x, y, z), Vector3::new(roll, pitch, yaw))
    }

    pub fn rpy(&self) -> Vector3<f64> {
        self.rpy
    }

    pub fn set_rpy(&mut self, rpy: Vector3<f64>) {
        self.rpy = rpy.map(wrap_angle);
    }

    pub fn roll(&self) -> f64 {
        self.rpy.x
    }

    pub fn pitch(&self) -> f64 {
        self.rpy.y
    }

    pub fn yaw(&self) -> f64 {
        self.rpy.z
    }

    pub fn rotation(&self) -> Rotation3<f64> {
        Rotation3::from_euler_angles(self.rpy.x, self.rpy.y, self.rpy.z)
    }

    pub fn to_isometry(&self) -> Isometry3<f64> {
        Isometry3::from_parts(
            Translation3::from(self.position),
            UnitQuaternion::from_rotation_matrix(&self.rotation()),
        )
    }

    pub fn from_isometry(iso: &Isometry3<f64>) -> EePose {
        let (r, p, y) = iso.rotation.euler_angles();
        EePose::new(iso.translation.vector, Vector3::new(r, p, y))
    }

    /// True when pitch sits inside the roll/yaw-degenerate band around `±pi/2`.
    pub fn near_gimbal(&self) -> bool {
        self.rpy.y.cos().abs() < GIMBAL_BAND
    }

    /// Six-vector `[x, y, z, roll, pitch, yaw]`.
    pub fn to_vector(&self) -> SVector<f64, 6> {
        SVector::<f64, 6>::new(
            self.position.x,
            self.position.y,
            self.position.z,
            self.rpy.x,
            self.rpy.y,
            self.rpy.z,
        )
    }

    /// Componentwise difference `self ⊖ other` with wrapped angle components.
    pub fn difference(&self, other: &EePose) -> SVector<f64, 6> {
        let mut d = self.to_vector() - other.to_vector();
        for i in 3..6 {
            d[i] = wrap_angle(d[i]);
        }
        d
    }

    /// Rotation angle between the two orientations, in radians.
    pub fn angular_distance(&self, other: &EePose) -> f64 {
        // atan2 form: acos of the trace goes NaN for nearly equal rotations
        let rel = UnitQuaternion::from_rotation_matrix(&(self.rotation().inverse() * other.rotation()));
        2.0 * rel.imag().norm().atan2(rel.scalar().abs())
    }
}

/// Index layout of the 9-vector `[ee x y z, ee roll pitch yaw, base x y yaw]`.
pub mod layout {
    use std::ops::Range;

    pub const DIM: usize = 9;
    pub const EE_POS: Range<usize> = 0..3;
    pub const EE_RPY: Range<usize> = 3..6;
    pub const EE: Range<usize> = 0..6;
    pub const BASE: Range<usize> = 6..9;
    pub const BASE_X: usize = 6;
    pub const BASE_Y: usize = 7;
    pub const BASE_YAW: usize = 8;

    /// Whether coordinate `i` of the 9-vector is an angle.
    pub fn is_angle(i: usize) -> bool {
        EE_RPY.contains(&i) || i == BASE_YAW
    }
}

pub type StateVector = SVector<f64, 9>;

/// One coordinated waypoint: end-effector pose and base pose, optimized jointly.
#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub struct PathState {
    pub ee: EePose,
    pub base: BasePose,
}

impl PathState {
    pub fn new(ee: EePose, base: BasePose) -> Self {
        Self { ee, base }
    }

    pub fn to_vector(&self) -> StateVector {
        let e = self.ee.to_vector();
        StateVector::from_iterator(
            e.iter()
                .copied()
                .chain([self.base.x, self.base.y, self.base.yaw]),
        )
    }

    pub fn from_vector(v: &StateVector) -> Self {
        Self {
            ee: EePose::new(Vector3::new(v[0], v[1], v[2]), Vector3::new(v[3], v[4], v[5])),
            base: BasePose::new(v[6], v[7], v[8]),
        }
    }

    /// Horizontal end-effector/base distance `L`.
    pub fn horizontal_reach(&self) -> f64 {
        (self.ee.position.xy() - self.base.xy()).norm()
    }

    /// Workspace distance `D` between the end-effector and the shoulder height
    /// `base_height` above the base.
    pub fn workspace_distance(&self, base_height: f64) -> f64 {
        let l = self.horizontal_reach();
        let dz = self.ee.position.z - base_height;
        (l * l + dz * dz).sqrt()
    }
}

/// Joint configuration of the six-axis arm, radians.
#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub struct JointConfig(pub SVector<f64, 6>);

impl JointConfig {
    pub fn new(q: [f64; 6]) -> Self {
        Self(SVector::<f64, 6>::from(q))
    }

    pub fn zeros() -> Self {
        Self(SVector::<f64, 6>::zeros())
    }

    pub fn as_vector(&self) -> &SVector<f64, 6> {
        &self.0
    }

    /// Largest absolute joint difference.
    pub fn max_abs_diff(&self, other: &JointConfig) -> f64 {
        (self.0 - other.0).amax()
    }
}

impl From<SVector<f64, 6>> for JointConfig {
    fn from(v: SVector<f64, 6>) -> Self {
        Self(v)
    }
}

impl std::ops::Index<usize> for JointConfig {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

impl std::ops::IndexMut<usize> for JointConfig {
    fn index_mut(&mut self, i: usize) -> &mut f64 {
        &mut self.0[i]
    }
}
