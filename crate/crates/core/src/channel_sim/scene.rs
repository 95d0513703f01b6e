use num_complex::Complex64;

use super::radio::SPEED_OF_LIGHT;
use super::trajectory::ActivityTrajectory;
use super::SimError;

pub type Point = [f64; 3];

pub fn distance(a: Point, b: Point) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}

/// Cosine of the angle between the receive array axis (`x`) and the
/// direction from `ap` to `p`.
pub fn array_cosine(ap: Point, p: Point) -> f64 {
    let d = distance(ap, p);
    if d == 0.0 {
        0.0
    } else {
        (p[0] - ap[0]) / d
    }
}

/// A fixed propagation path: time of flight, angle of arrival, complex gain.
#[derive(Debug, Clone, PartialEq)]
pub struct StaticPath {
    pub delay_s: f64,
    pub aoa_rad: f64,
    pub gain: Complex64,
}

/// Per-subject deviations that make one person's link look different from
/// another's.
#[derive(Debug, Clone, PartialEq)]
pub struct DomainShift {
    pub gain_scale: f64,
    pub speed_scale: f64,
    /// Phase ramp applied per antenna index; survives the conjugate ratio.
    pub hardware_phase_drift_rad_per_s: f64,
    pub extra_static_paths: Vec<StaticPath>,
}

impl Default for DomainShift {
    fn default() -> Self {
        Self {
            gain_scale: 1.0,
            speed_scale: 1.0,
            hardware_phase_drift_rad_per_s: 0.0,
            extra_static_paths: Vec::new(),
        }
    }
}

impl DomainShift {
    pub fn validate(&self) -> Result<(), SimError> {
        for (name, v) in [("gain_scale", self.gain_scale), ("speed_scale", self.speed_scale)] {
            if !(0.5..=2.0).contains(&v) {
                return Err(SimError::Invalid(format!("{name} must lie in [0.5, 2], got {v}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SubjectSpec {
    pub center: Point,
    pub reflect_gain: f64,
    /// `None` for a subject that stays still.
    pub trajectory: Option<ActivityTrajectory>,
    pub domain: DomainShift,
}

impl SubjectSpec {
    pub fn effective_gain(&self) -> f64 {
        self.reflect_gain * self.domain.gain_scale
    }

    pub fn nominal_speed(&self) -> f64 {
        self.trajectory
            .as_ref()
            .map_or(0.0, |t| t.base_speed_mps * self.domain.speed_scale)
    }

    pub fn position(&self, t: f64) -> Point {
        match &self.trajectory {
            None => self.center,
            Some(tr) => {
                let d = tr.displacement(t, self.domain.speed_scale);
                [self.center[0] + d[0], self.center[1] + d[1], self.center[2] + d[2]]
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct UserEquipment {
    pub position: Point,
    pub subject: usize,
}

/// Geometry of one access point, the personal devices linked to it, and the
/// people next to those devices.
#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub ap_position: Point,
    pub ues: Vec<UserEquipment>,
    pub subjects: Vec<SubjectSpec>,
    /// Environment reflections shared by all links.
    pub static_paths: Vec<StaticPath>,
    pub noise_std: f64,
    pub dynamic_path_std: f64,
}

impl Scene {
    pub fn link_of(&self, subject: usize) -> Result<usize, SimError> {
        self.ues
            .iter()
            .position(|u| u.subject == subject)
            .ok_or_else(|| SimError::Invalid(format!("subject {subject} has no device")))
    }

    pub fn direct_delay(&self, link: usize) -> f64 {
        distance(self.ues[link].position, self.ap_position) / SPEED_OF_LIGHT
    }

    pub fn validate(&self) -> Result<(), SimError> {
        if self.subjects.is_empty() {
            return Err(SimError::Invalid("scene has no subjects".into()));
        }
        if self.ues.len() != self.subjects.len() {
            return Err(SimError::Invalid(format!(
                "{} devices for {} subjects; need exactly one each",
                self.ues.len(),
                self.subjects.len()
            )));
        }
        for s in 0..self.subjects.len() {
            let owners = self.ues.iter().filter(|u| u.subject == s).count();
            if owners != 1 {
                return Err(SimError::Invalid(format!("subject {s} owns {owners} devices")));
            }
        }
        if !(self.noise_std >= 0.0 && self.dynamic_path_std >= 0.0) {
            return Err(SimError::Invalid("noise scales must be non-negative".into()));
        }
        for (link, ue) in self.ues.iter().enumerate() {
            let subject = &self.subjects[ue.subject];
            if distance(ue.position, subject.center) <= 0.0 {
                return Err(SimError::Invalid(format!("subject {} sits on its device", ue.subject)));
            }
            if !(subject.reflect_gain > 0.0) {
                return Err(SimError::Invalid(format!(
                    "subject {} reflect_gain must be positive",
                    ue.subject
                )));
            }
            subject.domain.validate()?;
            if let Some(tr) = &subject.trajectory {
                tr.validate()?;
            }
            let direct = self.direct_delay(link);
            let paths = self.static_paths.iter().chain(&subject.domain.extra_static_paths);
            for p in paths {
                if p.delay_s < direct - 1e-15 {
                    return Err(SimError::Invalid(format!(
                        "static path delay {:.3e} s is shorter than link {link}'s direct path {:.3e} s",
                        p.delay_s, direct
                    )));
                }
            }
        }
        Ok(())
    }
}
