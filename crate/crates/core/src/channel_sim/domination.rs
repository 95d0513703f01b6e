//! Side-by-side seating scene: how strongly one person's motion shows up on
//! their own link compared with their neighbours' links.

use std::f64::consts::PI;

use num_complex::Complex64;

use super::physics::domination_ratio;
use super::radio::{RadioConfig, SPEED_OF_LIGHT};
use super::scene::{distance, DomainShift, Scene, StaticPath, SubjectSpec, UserEquipment};
use super::synth::synthesize_csi;
use super::trajectory::{ActivityClass, ActivityTrajectory};
use super::population::{SEAT_SPACING_M, UE_OFFSET_M};
use super::SimError;

const ROOM_PATHS: usize = 4;
const ROOM_PATH_RELATIVE: f64 = 0.6;

/// Fixed room reflections: `k` paths from evenly spread arrival angles, each
/// `relative` times the line-of-sight magnitude at `dist_m`.
fn room_paths(radio: &RadioConfig, k: usize, relative: f64, dist_m: f64) -> Vec<StaticPath> {
    let los = radio.wavelength() / (4.0 * PI * dist_m.powf(radio.pathloss_exponent / 2.0));
    (0..k)
        .map(|i| {
            let u = (i as f64 + 0.5) / k as f64;
            StaticPath {
                delay_s: dist_m / SPEED_OF_LIGHT + 5e-9 + 30e-9 * u,
                aoa_rad: 0.3 + (PI - 0.6) * u,
                gain: Complex64::from_polar(los * relative, 2.0 * PI * u * 3.7),
            }
        })
        .collect()
}

/// `n` people in a row, `SEAT_SPACING_M` apart, each with a device
/// `UE_OFFSET_M` in front, in a room with a few static reflections; only
/// `active` moves.
pub fn row_scene(
    radio: &RadioConfig,
    n: usize,
    active: usize,
    activity: ActivityClass,
    reflect_gain: f64,
) -> Result<Scene, SimError> {
    if active >= n {
        return Err(SimError::Invalid(format!("active subject {active} outside a row of {n}")));
    }
    let width = (n.saturating_sub(1)) as f64 * SEAT_SPACING_M;
    let subjects = (0..n)
        .map(|i| SubjectSpec {
            center: [0.0, i as f64 * SEAT_SPACING_M, 1.0],
            reflect_gain,
            trajectory: (i == active).then(|| ActivityTrajectory::nominal(activity)),
            domain: DomainShift::default(),
        })
        .collect::<Vec<_>>();
    let ues = (0..n)
        .map(|i| UserEquipment {
            position: [UE_OFFSET_M, i as f64 * SEAT_SPACING_M, 1.0],
            subject: i,
        })
        .collect();
    let ap_position = [5.0, width / 2.0, 2.2];
    Ok(Scene {
        ap_position,
        ues,
        subjects,
        static_paths: room_paths(radio, ROOM_PATHS, ROOM_PATH_RELATIVE, distance(ap_position, [0.0, 0.0, 1.0])),
        noise_std: 0.0,
        dynamic_path_std: 0.0,
    })
}

/// Mean over antenna pairs and subcarriers of the circular variance-like
/// spread `mean(wrap(phi - mean_phi)^2)` of the conjugate-ratio phase.
pub fn conjugate_phase_variance(csi: &[Complex64], n_antennas: usize, n_subcarriers: usize) -> f64 {
    let stride = n_antennas * n_subcarriers;
    let packets = csi.len() / stride.max(1);
    if packets == 0 || n_antennas < 2 {
        return 0.0;
    }
    let mut total = 0.0;
    let mut series = 0;
    for n in 1..n_antennas {
        for m in 0..n_subcarriers {
            let ratio: Vec<Complex64> = (0..packets)
                .map(|p| csi[p * stride + m].conj() * csi[p * stride + n * n_subcarriers + m])
                .collect();
            let mean_dir: Complex64 = ratio.iter().map(|r| if r.norm() > 0.0 { r / r.norm() } else { *r }).sum();
            let mu = mean_dir.arg();
            let var = ratio
                .iter()
                .map(|r| {
                    let d = (r.arg() - mu + PI).rem_euclid(2.0 * PI) - PI;
                    d * d
                })
                .sum::<f64>()
                / packets as f64;
            total += var;
            series += 1;
        }
    }
    total / series as f64
}

/// One row of the domination table.
#[derive(Debug, Clone, PartialEq)]
pub struct DominationRow {
    pub active: usize,
    /// Phase spread on every link while `active` moves.
    pub phase_variance: Vec<f64>,
    /// Closed-form variation power on every link, relative to the active
    /// subject's own link.
    pub closed_form: Vec<f64>,
}

impl DominationRow {
    /// Smallest ratio of the own-link spread to any other link's spread.
    pub fn min_own_to_other(&self) -> f64 {
        let own = self.phase_variance[self.active];
        self.phase_variance
            .iter()
            .enumerate()
            .filter(|&(i, _)| i != self.active)
            .map(|(_, &v)| if v > 0.0 { own / v } else { f64::INFINITY })
            .fold(f64::INFINITY, f64::min)
    }
}

/// Moves each of `n` seated people in turn and measures every link over
/// evenly spaced packets spanning `duration_s`.
pub fn domination_table(
    radio: &RadioConfig,
    n: usize,
    activity: ActivityClass,
    reflect_gain: f64,
    duration_s: f64,
    packets: usize,
    seed: u64,
) -> Result<Vec<DominationRow>, SimError> {
    if packets < 2 {
        return Err(SimError::Invalid("need at least two packets".into()));
    }
    let times: Vec<f64> = (0..packets).map(|i| duration_s * i as f64 / (packets - 1) as f64).collect();
    (0..n)
        .map(|active| {
            let scene = row_scene(radio, n, active, activity, reflect_gain)?;
            let mut rng = crate::rng::rng_for(seed, active as u64);
            let links = synthesize_csi(&scene, radio, &times, &mut rng)?;
            let phase_variance = links
                .iter()
                .map(|s| conjugate_phase_variance(&s.csi, s.n_antennas, s.n_subcarriers))
                .collect();
            Ok(DominationRow {
                active,
                phase_variance,
                closed_form: domination_ratio(&scene, radio, active)?,
            })
        })
        .collect()
}
