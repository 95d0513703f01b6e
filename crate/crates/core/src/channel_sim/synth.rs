use std::f64::consts::PI;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use super::physics::subject_reflection;
use super::radio::{RadioConfig, SPEED_OF_LIGHT};
use super::scene::{array_cosine, distance, Point, Scene, StaticPath, SubjectSpec};
use super::SimError;

/// Correlation time of the dynamic (non-subject) scattering component.
const DYNAMIC_CORRELATION_S: f64 = 0.5;

/// One recorded activity instance on one link.
#[derive(Debug, Clone, PartialEq)]
pub struct CsiSample {
    pub timestamps_s: Vec<f64>,
    pub rssi_dbm: Vec<f64>,
    /// `[packet][antenna][subcarrier]`, row-major.
    pub csi: Vec<Complex64>,
    pub n_antennas: usize,
    pub n_subcarriers: usize,
    pub activity_label: u8,
    pub subject_id: u16,
    pub environment_id: u8,
}

impl CsiSample {
    pub fn n_packets(&self) -> usize {
        self.timestamps_s.len()
    }

    pub fn packet(&self, p: usize) -> &[Complex64] {
        let stride = self.n_antennas * self.n_subcarriers;
        &self.csi[p * stride..(p + 1) * stride]
    }

    /// Rounds RSSI and CSI to single precision, the resolution of the
    /// on-disk format.
    pub fn quantize(&mut self) {
        for r in &mut self.rssi_dbm {
            *r = *r as f32 as f64;
        }
        for c in &mut self.csi {
            *c = Complex64::new(c.re as f32 as f64, c.im as f32 as f64);
        }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let p = self.timestamps_s.len();
        if p < 2 {
            return Err(SimError::Invalid(format!("sample has {p} packets, need at least 2")));
        }
        if self.rssi_dbm.len() != p || self.csi.len() != p * self.n_antennas * self.n_subcarriers {
            return Err(SimError::Invalid("sample arrays disagree on packet count".into()));
        }
        if let Some(i) = self.timestamps_s.windows(2).position(|w| w[1] <= w[0]) {
            return Err(SimError::Invalid(format!("timestamps not increasing at packet {}", i + 1)));
        }
        if !self.csi.iter().all(|c| c.re.is_finite() && c.im.is_finite()) {
            return Err(SimError::Invalid("sample holds non-finite CSI".into()));
        }
        Ok(())
    }
}

/// Antenna-array phase factor for antenna `n` (zero-based) and arrival cosine.
fn antenna_phase(radio: &RadioConfig, n: usize, cos_theta: f64) -> Complex64 {
    let phase = -2.0 * PI * n as f64 * radio.antenna_spacing_m * cos_theta * radio.carrier_freq_hz
        / SPEED_OF_LIGHT;
    Complex64::from_polar(1.0, phase)
}

/// Reflection of `subject` on the link `ue -> subject -> ap` at time `t`,
/// before the antenna-array factor.
pub fn subject_term(
    radio: &RadioConfig,
    subject: &SubjectSpec,
    ue: Point,
    ap: Point,
    t: f64,
    freq_hz: f64,
) -> Result<Complex64, SimError> {
    let p = subject.position(t);
    subject_reflection(
        radio,
        subject.effective_gain(),
        distance(ue, p),
        distance(p, ap),
        freq_hz,
    )
}

fn add_path(
    radio: &RadioConfig,
    h: &mut [Complex64],
    gain: Complex64,
    delay_s: f64,
    cos_theta: f64,
) {
    let m_count = radio.n_subcarriers;
    for n in 0..radio.n_antennas {
        let a = gain * antenna_phase(radio, n, cos_theta);
        for m in 0..m_count {
            let tof = Complex64::from_polar(1.0, -2.0 * PI * radio.subcarrier_freq(m) * delay_s);
            h[n * m_count + m] += a * tof;
        }
    }
}

fn line_of_sight(radio: &RadioConfig, dist: f64) -> f64 {
    radio.wavelength() / (4.0 * PI * dist.powf(radio.pathloss_exponent / 2.0))
}

/// Renders the CSI of one device-to-AP link at each packet time.
///
/// Per packet the channel sums the owner's reflection, the other subjects'
/// reflections, the line-of-sight and static environment paths, one dynamic
/// scattering path and additive complex Gaussian noise.
pub fn synthesize_link<R: Rng + ?Sized>(
    scene: &Scene,
    radio: &RadioConfig,
    link: usize,
    packet_times: &[f64],
    rng: &mut R,
) -> Result<CsiSample, SimError> {
    if packet_times.is_empty() {
        return Err(SimError::Invalid("no packet times".into()));
    }
    let ue = scene
        .ues
        .get(link)
        .ok_or_else(|| SimError::Invalid(format!("no link {link}")))?;
    let owner = &scene.subjects[ue.subject];
    let (n_ant, n_sub) = (radio.n_antennas, radio.n_subcarriers);
    let stride = n_ant * n_sub;

    let los_dist = distance(ue.position, scene.ap_position);
    let los = StaticPath {
        delay_s: los_dist / SPEED_OF_LIGHT,
        aoa_rad: array_cosine(scene.ap_position, ue.position).acos(),
        gain: Complex64::new(line_of_sight(radio, los_dist), 0.0),
    };
    let statics: Vec<&StaticPath> = std::iter::once(&los)
        .chain(&scene.static_paths)
        .chain(&owner.domain.extra_static_paths)
        .collect();
    let mut static_h = vec![Complex64::new(0.0, 0.0); stride];
    for p in &statics {
        add_path(radio, &mut static_h, p.gain, p.delay_s, p.aoa_rad.cos());
    }

    let dyn_delay = los.delay_s + rng.gen_range(10e-9..60e-9);
    let dyn_cos = rng.gen_range(-1.0f64..1.0);
    let gauss = |rng: &mut R| -> f64 { rng.sample(StandardNormal) };
    let mut dynamic = Complex64::new(gauss(rng), gauss(rng)) * (scene.dynamic_path_std / 2f64.sqrt());

    let mut csi = Vec::with_capacity(packet_times.len() * stride);
    let mut rssi = Vec::with_capacity(packet_times.len());
    let mut prev_t = packet_times[0];
    for &t in packet_times {
        let rho = (-(t - prev_t) / DYNAMIC_CORRELATION_S).exp();
        let innovation = Complex64::new(gauss(rng), gauss(rng));
        dynamic = dynamic * rho
            + innovation * (scene.dynamic_path_std * ((1.0 - rho * rho) / 2.0).sqrt());
        prev_t = t;

        let mut h = static_h.clone();
        for subject in &scene.subjects {
            let p = subject.position(t);
            let cos_theta = array_cosine(scene.ap_position, p);
            for m in 0..n_sub {
                let r = subject_term(radio, subject, ue.position, scene.ap_position, t, radio.subcarrier_freq(m))?;
                for n in 0..n_ant {
                    h[n * n_sub + m] += r * antenna_phase(radio, n, cos_theta);
                }
            }
        }
        add_path(radio, &mut h, dynamic, dyn_delay, dyn_cos);

        let drift = owner.domain.hardware_phase_drift_rad_per_s * t;
        for n in 0..n_ant {
            let rot = Complex64::from_polar(1.0, drift * n as f64);
            for v in &mut h[n * n_sub..(n + 1) * n_sub] {
                *v *= rot;
            }
        }
        let noise_scale = scene.noise_std / 2f64.sqrt();
        for v in h.iter_mut() {
            let z = Complex64::new(gauss(rng), gauss(rng));
            *v += z * noise_scale;
        }

        let power = h.iter().map(|c| c.norm_sqr()).sum::<f64>() / stride as f64;
        rssi.push(10.0 * power.max(1e-30).log10() + radio.rssi_offset_db);
        csi.extend_from_slice(&h);
    }

    Ok(CsiSample {
        timestamps_s: packet_times.to_vec(),
        rssi_dbm: rssi,
        csi,
        n_antennas: n_ant,
        n_subcarriers: n_sub,
        activity_label: owner.trajectory.as_ref().map_or(0, |t| t.activity.id()),
        subject_id: ue.subject as u16,
        environment_id: 0,
    })
}

/// Renders every link of `scene`. Each link draws from its own generator
/// seeded from `rng`, in link order.
pub fn synthesize_csi<R: Rng + ?Sized>(
    scene: &Scene,
    radio: &RadioConfig,
    packet_times: &[f64],
    rng: &mut R,
) -> Result<Vec<CsiSample>, SimError> {
    scene.validate()?;
    radio.validate()?;
    let seeds: Vec<u64> = (0..scene.ues.len()).map(|_| rng.gen()).collect();
    seeds
        .iter()
        .enumerate()
        .map(|(link, &s)| synthesize_link(scene, radio, link, packet_times, &mut crate::rng::rng(s)))
        .collect()
}
