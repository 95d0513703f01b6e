//! Synthetic multi-subject, multi-environment activity corpus.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::Rng;
use rayon::prelude::*;

use super::radio::{RadioConfig, SPEED_OF_LIGHT};
use super::scene::{distance, DomainShift, Point, Scene, StaticPath, SubjectSpec, UserEquipment};
use super::synth::{synthesize_link, CsiSample};
use super::traffic::{sample_packet_times, TrafficParams};
use super::trajectory::{ActivityClass, ActivityTrajectory};
use super::SimError;
use crate::rng::{derive_seed, rng_for};

const ENV_STREAM: u64 = 1 << 40;
const SUBJECT_STREAM: u64 = 2 << 40;

/// Device offset in front of its owner.
pub const UE_OFFSET_M: f64 = 0.2;
/// Spacing between neighbouring seats.
pub const SEAT_SPACING_M: f64 = 0.6;
const SEAT_HEIGHT_M: f64 = 1.0;

#[derive(Debug, Clone, PartialEq)]
pub struct PopulationConfig {
    pub n_subjects: usize,
    pub n_environments: usize,
    pub reps_per_activity: usize,
    pub activities: Vec<ActivityClass>,
    /// Bystanders seated next to the recorded subject, each performing a
    /// random activity.
    pub neighbors: usize,
    /// Reflection gain of a recorded subject before its domain scaling.
    pub reflect_gain: f64,
    pub radio: RadioConfig,
    pub traffic: TrafficParams,
    pub noise_std: f64,
    pub dynamic_path_std: f64,
    pub seed: u64,
}

impl Default for PopulationConfig {
    fn default() -> Self {
        Self {
            n_subjects: 15,
            n_environments: 3,
            reps_per_activity: 40,
            activities: ActivityClass::ALL.to_vec(),
            neighbors: 1,
            reflect_gain: 2400.0,
            radio: RadioConfig::default(),
            traffic: TrafficParams::default(),
            noise_std: 2e-6,
            dynamic_path_std: 4e-6,
            seed: 1,
        }
    }
}

impl PopulationConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        if self.n_subjects == 0 || self.n_environments == 0 || self.reps_per_activity == 0 {
            return Err(SimError::Invalid(
                "population needs at least one subject, environment and repetition".into(),
            ));
        }
        if self.activities.is_empty() {
            return Err(SimError::Invalid("population lists no activities".into()));
        }
        if !(self.reflect_gain > 0.0) {
            return Err(SimError::Invalid("reflect_gain must be positive".into()));
        }
        if self.n_subjects > u16::MAX as usize || self.n_environments > u8::MAX as usize {
            return Err(SimError::Invalid("too many subjects or environments".into()));
        }
        self.radio.validate()?;
        self.traffic.validate()
    }

    pub fn n_samples(&self) -> usize {
        self.n_subjects * self.activities.len() * self.reps_per_activity
    }
}

/// Room-level constants shared by every subject recorded there.
#[derive(Debug, Clone, PartialEq)]
pub struct Environment {
    pub ap_position: Point,
    pub static_paths: Vec<StaticPath>,
}

/// Fixed per-subject properties.
#[derive(Debug, Clone, PartialEq)]
pub struct SubjectProfile {
    pub environment: usize,
    pub domain: DomainShift,
}

fn los_magnitude(radio: &RadioConfig, dist: f64) -> f64 {
    radio.wavelength() / (4.0 * PI * dist.powf(radio.pathloss_exponent / 2.0))
}

fn random_path<R: Rng>(rng: &mut R, min_delay: f64, magnitude: f64) -> StaticPath {
    StaticPath {
        delay_s: min_delay + rng.gen_range(3e-9..40e-9),
        aoa_rad: rng.gen_range(0.2..PI - 0.2),
        gain: Complex64::from_polar(magnitude, rng.gen_range(0.0..2.0 * PI)),
    }
}

fn seat(index: usize) -> Point {
    [0.0, index as f64 * SEAT_SPACING_M, SEAT_HEIGHT_M]
}

fn device_of(center: Point) -> Point {
    [center[0] + UE_OFFSET_M, center[1], center[2]]
}

/// Largest device-to-AP delay over the seats a sample can occupy.
fn max_direct_delay(ap: Point, seats: usize) -> f64 {
    (0..seats)
        .map(|i| distance(device_of(seat(i)), ap) / SPEED_OF_LIGHT)
        .fold(0.0, f64::max)
}

pub fn environments(config: &PopulationConfig) -> Vec<Environment> {
    (0..config.n_environments)
        .map(|e| {
            let mut rng = rng_for(config.seed, ENV_STREAM + e as u64);
            let ap = [
                rng.gen_range(4.0..5.5),
                rng.gen_range(-2.5..2.5),
                rng.gen_range(1.8..2.6),
            ];
            let min_delay = max_direct_delay(ap, config.neighbors + 1);
            let mag = los_magnitude(&config.radio, distance(ap, device_of(seat(0))));
            let static_paths = (0..3)
                .map(|_| {
                    let rel = rng.gen_range(0.2..0.8);
                    random_path(&mut rng, min_delay, mag * rel)
                })
                .collect();
            Environment {
                ap_position: ap,
                static_paths,
            }
        })
        .collect()
}

pub fn subject_profiles(config: &PopulationConfig) -> Vec<SubjectProfile> {
    let envs = environments(config);
    (0..config.n_subjects)
        .map(|s| {
            let environment = s % config.n_environments;
            let env = &envs[environment];
            let mut rng = rng_for(config.seed, SUBJECT_STREAM + s as u64);
            let min_delay = max_direct_delay(env.ap_position, config.neighbors + 1);
            let mag = los_magnitude(&config.radio, distance(env.ap_position, device_of(seat(0))));
            let domain = DomainShift {
                gain_scale: rng.gen_range(0.6..1.7),
                speed_scale: rng.gen_range(0.85..1.2),
                hardware_phase_drift_rad_per_s: rng.gen_range(-1.5..1.5),
                extra_static_paths: (0..2)
                    .map(|_| {
                        let rel = rng.gen_range(0.2..0.6);
                        random_path(&mut rng, min_delay, mag * rel)
                    })
                    .collect(),
            };
            SubjectProfile {
                environment,
                domain,
            }
        })
        .collect()
}

fn jittered<R: Rng>(activity: ActivityClass, rng: &mut R) -> ActivityTrajectory {
    let mut tr = ActivityTrajectory::nominal(activity);
    let scale = rng.gen_range(0.85..1.15);
    tr.amplitude_m *= scale;
    tr.base_speed_mps *= scale * rng.gen_range(0.92..1.1);
    tr.phase_offset_rad = rng.gen_range(0.0..2.0 * PI);
    tr
}

/// Scene for one recorded sample: the subject in seat 0 and bystanders in
/// the following seats.
pub fn sample_scene<R: Rng>(
    config: &PopulationConfig,
    env: &Environment,
    profile: &SubjectProfile,
    activity: ActivityClass,
    rng: &mut R,
) -> Scene {
    let mut subjects = Vec::with_capacity(config.neighbors + 1);
    let mut ues = Vec::with_capacity(config.neighbors + 1);
    let jitter = |rng: &mut R| rng.gen_range(-0.02..0.02);
    let own_center = seat(0);
    let own_center = [own_center[0] + jitter(rng), own_center[1] + jitter(rng), own_center[2]];
    subjects.push(SubjectSpec {
        center: own_center,
        reflect_gain: config.reflect_gain,
        trajectory: Some(jittered(activity, rng)),
        domain: profile.domain.clone(),
    });
    ues.push(UserEquipment {
        position: device_of(seat(0)),
        subject: 0,
    });
    for k in 1..=config.neighbors {
        let other = ActivityClass::ALL[rng.gen_range(0..ActivityClass::ALL.len())];
        subjects.push(SubjectSpec {
            center: seat(k),
            reflect_gain: config.reflect_gain * rng.gen_range(0.6..1.6),
            trajectory: Some(jittered(other, rng)),
            domain: DomainShift::default(),
        });
        ues.push(UserEquipment {
            position: device_of(seat(k)),
            subject: k,
        });
    }
    Scene {
        ap_position: env.ap_position,
        ues,
        subjects,
        static_paths: env.static_paths.clone(),
        noise_std: config.noise_std,
        dynamic_path_std: config.dynamic_path_std,
    }
}

/// Renders `n_subjects x activities x reps_per_activity` samples, ordered by
/// subject, then activity, then repetition. Each sample draws from its own
/// generator derived from `(seed, sample index)`, so the result does not
/// depend on the number of worker threads. Values are rounded to the
/// single precision of the on-disk format.
pub fn generate_population(config: &PopulationConfig) -> Result<Vec<CsiSample>, SimError> {
    config.validate()?;
    let envs = environments(config);
    let profiles = subject_profiles(config);
    let n_act = config.activities.len();
    (0..config.n_samples())
        .into_par_iter()
        .map(|index| {
            let subject = index / (n_act * config.reps_per_activity);
            let activity = config.activities[(index / config.reps_per_activity) % n_act];
            let profile = &profiles[subject];
            let env = &envs[profile.environment];
            let mut rng = rng_for(config.seed, index as u64);
            let scene = sample_scene(config, env, profile, activity, &mut rng);
            let times = sample_packet_times(&config.traffic, &mut rng)?;
            let mut link_rng = rng_for(derive_seed(config.seed, index as u64), 0);
            let mut sample = synthesize_link(&scene, &config.radio, 0, &times, &mut link_rng)?;
            sample.activity_label = activity.id();
            sample.subject_id = subject as u16;
            sample.environment_id = profile.environment as u8;
            sample.quantize();
            Ok(sample)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> PopulationConfig {
        PopulationConfig {
            n_subjects: 3,
            n_environments: 2,
            reps_per_activity: 2,
            radio: RadioConfig {
                n_subcarriers: 8,
                ..RadioConfig::default()
            },
            ..PopulationConfig::default()
        }
    }

    #[test]
    fn counts_and_labels() {
        let cfg = small();
        let data = generate_population(&cfg).unwrap();
        assert_eq!(data.len(), 3 * 10 * 2);
        let mut hist = [0usize; 10];
        for s in &data {
            hist[s.activity_label as usize] += 1;
            s.validate().unwrap();
            assert_eq!(s.environment_id as usize, s.subject_id as usize % 2);
        }
        assert!(hist.iter().all(|&h| h == 6));
    }

    #[test]
    fn same_seed_same_data() {
        let cfg = small();
        assert_eq!(generate_population(&cfg).unwrap(), generate_population(&cfg).unwrap());
    }

    #[test]
    fn scenes_are_valid() {
        let cfg = PopulationConfig::default();
        let envs = environments(&cfg);
        let profiles = subject_profiles(&cfg);
        let mut rng = crate::rng::rng(5);
        for p in &profiles {
            for a in ActivityClass::ALL {
                sample_scene(&cfg, &envs[p.environment], p, a, &mut rng).validate().unwrap();
            }
        }
    }

    #[test]
    fn subjects_do_not_share_domain_parameters() {
        let profiles = subject_profiles(&PopulationConfig::default());
        for (i, a) in profiles.iter().enumerate() {
            for b in &profiles[i + 1..] {
                assert_ne!(a.domain.gain_scale, b.domain.gain_scale);
                assert_ne!(a.domain.speed_scale, b.domain.speed_scale);
                assert_ne!(
                    a.domain.hardware_phase_drift_rad_per_s,
                    b.domain.hardware_phase_drift_rad_per_s
                );
            }
        }
    }
}
