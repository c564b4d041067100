//! Shaped drive pulses.

use std::f64::consts::{FRAC_PI_2, PI};

use crate::error::{invalid, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RampShape {
    Linear,
    /// Raised-cosine edges; same area as linear ones.
    Cosine,
}

/// Trapezoid pulses whose rotating-frame area equals the rotation angle.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PulseSpec {
    /// Peak Rabi rate (rad/s).
    pub drive_strength: f64,
    pub t_rise: f64,
    pub t_fall: f64,
    /// Idle time after every pulse.
    pub gap: f64,
    pub shape: RampShape,
}

impl Default for PulseSpec {
    fn default() -> Self {
        Self { drive_strength: 2.0 * PI * 260e6, t_rise: 0.6e-9, t_fall: 0.6e-9, gap: 0.5e-9, shape: RampShape::Linear }
    }
}

impl PulseSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.drive_strength > 0.0 && self.t_rise >= 0.0 && self.t_fall >= 0.0 && self.gap >= 0.0) {
            return invalid("drive strength must be positive and durations non-negative");
        }
        if self.t_rise + self.t_fall == 0.0 {
            return invalid("rise and fall cannot both be zero");
        }
        Ok(())
    }

    fn ramp_area(&self) -> f64 {
        self.drive_strength * (self.t_rise + self.t_fall) / 2.0
    }

    /// Peak amplitude and plateau length for a rotation angle. Angles
    /// smaller than the ramp area give all-ramp pulses at reduced peak.
    pub fn profile(&self, angle: f64) -> (f64, f64) {
        let ramps = self.ramp_area();
        if angle >= ramps {
            (self.drive_strength, (angle - ramps) / self.drive_strength)
        } else {
            (self.drive_strength * angle / ramps, 0.0)
        }
    }

    pub fn duration(&self, angle: f64) -> f64 {
        self.t_rise + self.profile(angle).1 + self.t_fall
    }

    pub fn t_half(&self) -> f64 {
        self.duration(FRAC_PI_2)
    }

    pub fn t_full(&self) -> f64 {
        self.duration(PI)
    }

    /// Rabi rate at time t into a pulse of the given angle.
    pub fn envelope(&self, angle: f64, t: f64) -> f64 {
        let (peak, plateau) = self.profile(angle);
        let edge = |x: f64| match self.shape {
            RampShape::Linear => x,
            RampShape::Cosine => 0.5 * (1.0 - (PI * x).cos()),
        };
        let end = self.t_rise + plateau + self.t_fall;
        if t < 0.0 || t > end {
            0.0
        } else if t < self.t_rise {
            peak * edge(t / self.t_rise)
        } else if t <= self.t_rise + plateau {
            peak
        } else {
            peak * edge((end - t) / self.t_fall)
        }
    }
}
