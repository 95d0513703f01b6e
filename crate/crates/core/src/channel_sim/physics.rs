//! Closed-form near-field reflection model and its channel-variation power.

use std::f64::consts::PI;

use num_complex::Complex64;

use super::radio::{RadioConfig, SPEED_OF_LIGHT};
use super::scene::{distance, Scene};
use super::SimError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PowerMode {
    /// Amplitude and phase terms.
    Full,
    /// Phase term only.
    Simplified,
}

fn check_positive(pairs: &[(&str, f64)]) -> Result<(), SimError> {
    for &(name, v) in pairs {
        if !(v > 0.0) || !v.is_finite() {
            return Err(SimError::Domain(format!("{name} must be positive, got {v}")));
        }
    }
    Ok(())
}

/// Reflection off a subject at distance `dist_ue_m` from the transmitter and
/// `dist_ap_m` from the receiver, evaluated at `freq_hz`:
///
/// `lambda^2 sqrt(G) exp(-i 2 pi (L1 + L2) / lambda) / ((4 pi)^2 (L1 L2)^(sigma/2))`
pub fn subject_reflection(
    radio: &RadioConfig,
    gain: f64,
    dist_ue_m: f64,
    dist_ap_m: f64,
    freq_hz: f64,
) -> Result<Complex64, SimError> {
    check_positive(&[("dist_ue_m", dist_ue_m), ("dist_ap_m", dist_ap_m), ("freq_hz", freq_hz)])?;
    if gain < 0.0 {
        return Err(SimError::Domain(format!("gain must be non-negative, got {gain}")));
    }
    let lambda = SPEED_OF_LIGHT / freq_hz;
    let magnitude = lambda * lambda * gain.sqrt()
        / ((4.0 * PI).powi(2) * (dist_ue_m * dist_ap_m).powf(radio.pathloss_exponent / 2.0));
    let phase = -2.0 * PI * (dist_ue_m + dist_ap_m) / lambda;
    Ok(Complex64::from_polar(magnitude, phase))
}

/// The two bracketed terms of the channel-variation power: `(amplitude, phase)`.
pub fn variation_terms(radio: &RadioConfig, dist_ue_m: f64, dist_ap_m: f64) -> (f64, f64) {
    let sigma = radio.pathloss_exponent;
    let lambda = radio.wavelength();
    let ratio = (dist_ue_m + dist_ap_m) / (dist_ue_m * dist_ap_m);
    let amplitude = sigma * sigma / 4.0 * ratio * ratio;
    let phase = 16.0 * PI * PI / (lambda * lambda);
    (amplitude, phase)
}

/// `|d h_i / dt|^2` for a subject whose distances to both ends change at
/// rate `speed_mps`.
pub fn channel_variation_power(
    radio: &RadioConfig,
    gain: f64,
    dist_ue_m: f64,
    dist_ap_m: f64,
    speed_mps: f64,
    mode: PowerMode,
) -> Result<f64, SimError> {
    check_positive(&[
        ("gain", gain),
        ("dist_ue_m", dist_ue_m),
        ("dist_ap_m", dist_ap_m),
        ("speed_mps", speed_mps),
    ])?;
    let sigma = radio.pathloss_exponent;
    let lambda = radio.wavelength();
    let prefactor = gain * lambda.powi(4) * speed_mps * speed_mps
        / ((4.0 * PI).powi(4) * (dist_ue_m * dist_ap_m).powf(sigma));
    let (amplitude, phase) = variation_terms(radio, dist_ue_m, dist_ap_m);
    Ok(match mode {
        PowerMode::Full => prefactor * (amplitude + phase),
        PowerMode::Simplified => prefactor * phase,
    })
}

/// Simplified variation power of `active_subject` as seen on every link,
/// relative to its own link.
pub fn domination_ratio(
    scene: &Scene,
    radio: &RadioConfig,
    active_subject: usize,
) -> Result<Vec<f64>, SimError> {
    scene.validate()?;
    let subject = scene.subjects.get(active_subject).ok_or_else(|| {
        SimError::Invalid(format!("no subject with index {active_subject}"))
    })?;
    let speed = subject.nominal_speed();
    let speed = if speed > 0.0 { speed } else { 1.0 };
    let dist_ap = distance(subject.center, scene.ap_position);
    let powers = scene
        .ues
        .iter()
        .map(|ue| {
            channel_variation_power(
                radio,
                subject.effective_gain(),
                distance(ue.position, subject.center),
                dist_ap,
                speed,
                PowerMode::Simplified,
            )
        })
        .collect::<Result<Vec<_>, _>>()?;
    let own = scene.link_of(active_subject)?;
    let reference = powers[own];
    Ok(powers.into_iter().map(|p| p / reference).collect())
}
