//! Procedural heightmap and the base lift it induces.

use crate::error::{Error, Result};
use crate::kinematics::BasePose;
use nalgebra::Vector2;
use serde::{Deserialize, Serialize};

/// Gaussian bump `height * exp(-|p - center|^2 / (2 width^2))`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Bump {
    pub center: [f64; 2],
    pub height: f64,
    pub width: f64,
}

/// Base disturbance: height above the plane and tilt.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Lift {
    pub z: f64,
    pub roll: f64,
    pub pitch: f64,
}

impl Lift {
    pub fn as_array(&self) -> [f64; 3] {
        [self.z, self.roll, self.pitch]
    }

    pub fn from_array(a: [f64; 3]) -> Self {
        Self {
            z: a[0],
            roll: a[1],
            pitch: a[2],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Terrain {
    pub bumps: Vec<Bump>,
    /// Standard deviation of the filtered noise on `z`, `roll`, `pitch`.
    pub noise: [f64; 3],
    /// Noise filter cutoff, Hz.
    pub noise_cutoff: f64,
    /// Hard bounds on `|z|`, `|roll|`, `|pitch|`.
    pub bounds: [f64; 3],
    /// Half distance between front and back track sample points.
    pub track_half_length: f64,
    /// Half distance between left and right tracks.
    pub track_half_width: f64,
}

impl Default for Terrain {
    fn default() -> Self {
        Self {
            bumps: Vec::new(),
            noise: [0.0; 3],
            noise_cutoff: 2.0,
            bounds: [0.05, 0.1, 0.1],
            track_half_length: 0.3,
            track_half_width: 0.25,
        }
    }
}

impl Terrain {
    pub fn flat() -> Self {
        Self::default()
    }

    pub fn validate(&self) -> Result<()> {
        for (i, b) in self.bumps.iter().enumerate() {
            if !(b.width > 0.0) || !b.height.is_finite() {
                return Err(Error::validation(format!("terrain.bumps[{i}]"), "width must be > 0 and height finite"));
            }
        }
        if self.noise.iter().any(|n| !(*n >= 0.0)) {
            return Err(Error::validation("terrain.noise", "must be >= 0"));
        }
        if self.bounds.iter().any(|b| !(*b >= 0.0)) {
            return Err(Error::validation("terrain.bounds", "must be >= 0"));
        }
        if !(self.noise_cutoff > 0.0) {
            return Err(Error::validation("terrain.noise_cutoff", "must be > 0"));
        }
        if !(self.track_half_length > 0.0 && self.track_half_width > 0.0) {
            return Err(Error::validation("terrain.track_half_length", "track dimensions must be > 0"));
        }
        Ok(())
    }

    pub fn height(&self, p: &Vector2<f64>) -> f64 {
        self.bumps
            .iter()
            .map(|b| {
                let d2 = (p - Vector2::from(b.center)).norm_squared();
                b.height * (-d2 / (2.0 * b.width * b.width)).exp()
            })
            .sum()
    }

    /// Lift from the heights under the four track sample points, unclamped.
    pub fn lift(&self, base: &BasePose) -> Lift {
        let (s, c) = base.yaw().sin_cos();
        let fwd = Vector2::new(c, s) * self.track_half_length;
        let left = Vector2::new(-s, c) * self.track_half_width;
        let p = base.xy();
        let (hf, hb) = (self.height(&(p + fwd)), self.height(&(p - fwd)));
        let (hl, hr) = (self.height(&(p + left)), self.height(&(p - left)));
        Lift {
            z: 0.25 * (hf + hb + hl + hr),
            roll: ((hl - hr) / (2.0 * self.track_half_width)).atan(),
            pitch: -((hf - hb) / (2.0 * self.track_half_length)).atan(),
        }
    }

    pub fn clamp(&self, lift: Lift) -> (Lift, bool) {
        let mut a = lift.as_array();
        let mut clamped = false;
        for (v, b) in a.iter_mut().zip(self.bounds) {
            if v.abs() > b {
                *v = v.clamp(-b, b);
                clamped = true;
            }
        }
        (Lift::from_array(a), clamped)
    }

    pub fn within_bounds(&self, lift: &Lift) -> bool {
        lift.as_array().iter().zip(self.bounds).all(|(v, b)| v.abs() <= b)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flat_ground_has_no_lift() {
        let t = Terrain::flat();
        assert_eq!(t.lift(&BasePose::new(1.0, -2.0, 0.7)), Lift::default());
    }

    #[test]
    fn slope_signs() {
        // bump ahead of the robot: nose up means negative pitch
        let t = Terrain {
            bumps: vec![Bump { center: [1.0, 0.0], height: 0.1, width: 0.5 }],
            bounds: [1.0; 3],
            ..Terrain::default()
        };
        let l = t.lift(&BasePose::new(0.5, 0.0, 0.0));
        assert!(l.pitch < 0.0 && l.roll.abs() < 1e-12, "{l:?}");
        // bump on the left: left side up means positive roll
        let l = t.lift(&BasePose::new(1.0, -0.5, 0.0));
        assert!(l.roll > 0.0 && l.pitch.abs() < 1e-12, "{l:?}");
        let (c, hit) = Terrain::default().clamp(Lift { z: 1.0, roll: -1.0, pitch: 0.0 });
        assert!(hit && c.z == 0.05 && c.roll == -0.1);
    }
}
