//! Parametric body-motion curves, one per activity class.
//!
//! Displacements are expressed in the subject frame: `x` points from the
//! subject towards its own device, `y` is lateral and `z` is up.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;
use std::sync::OnceLock;

use super::SimError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ActivityClass {
    PushPull,
    Sweep,
    DrawCircle,
    ZigZag,
    TypePhone,
    Handshake,
    Bend,
    Jump,
    Rotate,
    Walk,
}

pub const N_CLASSES: usize = 10;

impl ActivityClass {
    pub const ALL: [ActivityClass; N_CLASSES] = [
        Self::PushPull,
        Self::Sweep,
        Self::DrawCircle,
        Self::ZigZag,
        Self::TypePhone,
        Self::Handshake,
        Self::Bend,
        Self::Jump,
        Self::Rotate,
        Self::Walk,
    ];

    pub fn id(self) -> u8 {
        Self::ALL.iter().position(|&c| c == self).expect("listed") as u8
    }

    pub fn from_id(id: u8) -> Option<Self> {
        Self::ALL.get(id as usize).copied()
    }

    pub fn code(self) -> &'static str {
        match self {
            Self::PushPull => "PP",
            Self::Sweep => "SW",
            Self::DrawCircle => "DC",
            Self::ZigZag => "ZZ",
            Self::TypePhone => "TP",
            Self::Handshake => "HS",
            Self::Bend => "BD",
            Self::Jump => "JP",
            Self::Rotate => "RT",
            Self::Walk => "WK",
        }
    }

    /// Nominal `(amplitude_m, repetition_period_s)`.
    pub fn nominal(self) -> (f64, f64) {
        match self {
            Self::PushPull => (0.12, 1.0),
            Self::Sweep => (0.15, 1.8),
            Self::DrawCircle => (0.10, 1.5),
            Self::ZigZag => (0.12, 1.7),
            Self::TypePhone => (0.02, 0.4),
            Self::Handshake => (0.08, 0.5),
            Self::Bend => (0.25, 1.8),
            Self::Jump => (0.20, 0.8),
            Self::Rotate => (0.15, 1.6),
            Self::Walk => (0.30, 1.8),
        }
    }

    /// Displacement along a unit-amplitude curve at cycle position `u`.
    fn unit_shape(self, u: f64) -> [f64; 3] {
        let w = 2.0 * PI * u;
        match self {
            Self::PushPull => [w.sin(), 0.0, 0.0],
            Self::Sweep => [0.0, w.sin(), 0.0],
            Self::DrawCircle => [w.sin(), w.cos() - 1.0, 0.0],
            Self::ZigZag => [0.5 * triangle(u), triangle(4.0 * u), 0.0],
            Self::TypePhone => [0.3 * (3.0 * w).sin(), 0.0, (6.0 * w).sin()],
            Self::Handshake => [0.6 * w.sin(), 0.0, (2.0 * w).sin()],
            Self::Bend => [0.5 * (1.0 - w.cos()), 0.0, -0.5 * (1.0 - w.cos())],
            Self::Jump => [0.0, 0.0, w.sin().max(0.0).powi(2)],
            Self::Rotate => [w.sin() + 0.5 * (2.0 * w).sin(), 0.0, 0.3 * (w.cos() - 1.0)],
            Self::Walk => [0.8 * w.sin(), 0.25 * (4.0 * w).sin(), 0.0],
        }
    }

    /// Length of the unit-amplitude curve over one cycle.
    pub fn unit_path_length(self) -> f64 {
        static LENGTHS: OnceLock<[f64; N_CLASSES]> = OnceLock::new();
        LENGTHS.get_or_init(|| ActivityClass::ALL.map(|c| c.measure_path_length()))
            [self.id() as usize]
    }

    fn measure_path_length(self) -> f64 {
        const STEPS: usize = 4000;
        let mut prev = self.unit_shape(0.0);
        let mut total = 0.0;
        for i in 1..=STEPS {
            let p = self.unit_shape(i as f64 / STEPS as f64);
            total += super::scene::distance(p, prev);
            prev = p;
        }
        total
    }
}

fn triangle(u: f64) -> f64 {
    let f = u.rem_euclid(1.0);
    if f < 0.25 {
        4.0 * f
    } else if f < 0.75 {
        2.0 - 4.0 * f
    } else {
        4.0 * f - 4.0
    }
}

impl fmt::Display for ActivityClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

impl FromStr for ActivityClass {
    type Err = SimError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        Self::ALL
            .iter()
            .copied()
            .find(|c| c.code().eq_ignore_ascii_case(s))
            .ok_or_else(|| SimError::Invalid(format!("unknown activity code {s:?}")))
    }
}

/// One subject's motion: a class-specific curve scaled in space and time.
#[derive(Debug, Clone, PartialEq)]
pub struct ActivityTrajectory {
    pub activity: ActivityClass,
    pub amplitude_m: f64,
    /// Mean speed along the curve.
    pub base_speed_mps: f64,
    pub phase_offset_rad: f64,
}

impl ActivityTrajectory {
    pub fn nominal(activity: ActivityClass) -> Self {
        let (amplitude, period) = activity.nominal();
        Self {
            activity,
            amplitude_m: amplitude,
            base_speed_mps: activity.unit_path_length() * amplitude / period,
            phase_offset_rad: 0.0,
        }
    }

    /// Duration of one repetition at `speed_scale` times the base speed.
    pub fn period_s(&self, speed_scale: f64) -> f64 {
        self.activity.unit_path_length() * self.amplitude_m / (self.base_speed_mps * speed_scale)
    }

    /// Displacement from the subject center at time `t`.
    pub fn displacement(&self, t: f64, speed_scale: f64) -> [f64; 3] {
        let u = t / self.period_s(speed_scale) + self.phase_offset_rad / (2.0 * PI);
        let s = self.activity.unit_shape(u);
        [s[0] * self.amplitude_m, s[1] * self.amplitude_m, s[2] * self.amplitude_m]
    }

    pub fn validate(&self) -> Result<(), SimError> {
        if !(self.amplitude_m > 0.0 && self.amplitude_m <= 1.0) {
            return Err(SimError::Invalid(format!(
                "trajectory amplitude must lie in (0, 1], got {}",
                self.amplitude_m
            )));
        }
        if !(self.base_speed_mps > 0.0) {
            return Err(SimError::Invalid("trajectory speed must be positive".into()));
        }
        let period = self.period_s(1.0);
        if period > 2.0 + 1e-9 {
            return Err(SimError::Invalid(format!(
                "{} repetition takes {period:.3} s, more than 2 s",
                self.activity
            )));
        }
        Ok(())
    }
}
