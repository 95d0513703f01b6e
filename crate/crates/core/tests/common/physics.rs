use std::f64::consts::PI;

use nfsense_core::channel_sim::{
    channel_variation_power, subject_term, ActivityClass, ActivityTrajectory, DomainShift, PowerMode, RadioConfig,
    SubjectSpec,
};
use nfsense_core::rng::rng;
use rand::Rng;

pub fn worked_radio() -> RadioConfig {
    RadioConfig {
        pathloss_exponent: 4.0,
        ..RadioConfig::with_wavelength(0.06)
    }
}

/// Relative gap between the full and the simplified variation power.
pub fn power_gap(l1: f64, l2: f64) -> f64 {
    let radio = worked_radio();
    let full = channel_variation_power(&radio, 1.0, l1, l2, 1.0, PowerMode::Full).unwrap();
    let simple = channel_variation_power(&radio, 1.0, l1, l2, 1.0, PowerMode::Simplified).unwrap();
    (full - simple) / full
}

/// 10 x 10 grid over the near-field region covered by the approximation.
pub fn gap_grid() -> Vec<(f64, f64)> {
    let mut g = Vec::new();
    for i in 0..10 {
        for j in 0..10 {
            g.push((0.05 + 0.25 * i as f64 / 9.0, 2.0 + 8.0 * j as f64 / 9.0));
        }
    }
    g
}

/// Places the device and the AP around the subject's position at time `t`
/// so that both path lengths change at the same rate while it moves along
/// x; returns the finite-difference and closed-form variation powers.
pub fn fd_versus_closed_form(seed: u64) -> (f64, f64) {
    let mut r = rng(seed);
    let radio = RadioConfig::default();
    let trajectory = ActivityTrajectory::nominal(ActivityClass::PushPull);
    let subject = SubjectSpec {
        center: [0.0, 0.0, 1.0],
        reflect_gain: r.gen_range(1.0..10.0),
        trajectory: Some(trajectory),
        domain: DomainShift::default(),
    };
    let period = subject.trajectory.as_ref().unwrap().period_s(1.0);
    // Stay clear of the turning points where the speed vanishes.
    let t = period * r.gen_range(0.05..0.15);
    let p = subject.position(t);
    let theta: f64 = r.gen_range(0.2..1.2);
    let tilt: f64 = r.gen_range(0.0..2.0 * PI);
    let l1 = r.gen_range(0.1..0.5);
    let l2 = r.gen_range(2.0..8.0);
    let (c, s) = (theta.cos(), theta.sin());
    let ue = [p[0] - l1 * c, p[1] + l1 * s * tilt.cos(), p[2] + l1 * s * tilt.sin()];
    let ap = [p[0] - l2 * c, p[1] - l2 * s * tilt.cos(), p[2] - l2 * s * tilt.sin()];

    let delta = 1e-6;
    let f = radio.carrier_freq_hz;
    let h0 = subject_term(&radio, &subject, ue, ap, t, f).unwrap();
    let h1 = subject_term(&radio, &subject, ue, ap, t + delta, f).unwrap();
    let fd = (h1 - h0).norm_sqr() / (delta * delta);

    let p1 = subject.position(t + delta);
    let vx = (p1[0] - p[0]) / delta;
    let rate = vx * c;
    let closed = channel_variation_power(&radio, subject.effective_gain(), l1, l2, rate.abs(), PowerMode::Full).unwrap();
    (fd, closed)
}

