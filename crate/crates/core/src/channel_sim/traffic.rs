use rand::Rng;
use rand_distr::{Distribution, LogNormal};

use super::SimError;

/// Renewal-process model of packet arrivals under ordinary application
/// traffic: log-normal gaps, redrawn when longer than `max_interval_s`.
#[derive(Debug, Clone, PartialEq)]
pub struct TrafficParams {
    pub mean_interval_s: f64,
    /// Log-normal shape parameter of the gap distribution.
    pub dispersion: f64,
    pub max_interval_s: f64,
    pub duration_s: f64,
}

impl Default for TrafficParams {
    fn default() -> Self {
        Self {
            mean_interval_s: 0.024,
            dispersion: 0.6,
            max_interval_s: 0.25,
            duration_s: 2.0,
        }
    }
}

impl TrafficParams {
    pub fn validate(&self) -> Result<(), SimError> {
        if !(self.mean_interval_s > 0.0 && self.mean_interval_s < self.max_interval_s) {
            return Err(SimError::Invalid(format!(
                "traffic needs 0 < mean_interval_s ({}) < max_interval_s ({})",
                self.mean_interval_s, self.max_interval_s
            )));
        }
        if !(self.duration_s > 0.0) || !(self.dispersion >= 0.0) {
            return Err(SimError::Invalid(
                "traffic duration must be positive and dispersion non-negative".into(),
            ));
        }
        Ok(())
    }
}

/// Strictly increasing arrival times in `(0, duration_s]`, at least two.
pub fn sample_packet_times<R: Rng + ?Sized>(
    params: &TrafficParams,
    rng: &mut R,
) -> Result<Vec<f64>, SimError> {
    params.validate()?;
    let sigma = params.dispersion;
    let gaps = if sigma > 0.0 {
        let mu = params.mean_interval_s.ln() - sigma * sigma / 2.0;
        Some(LogNormal::new(mu, sigma).map_err(|e| SimError::Invalid(e.to_string()))?)
    } else {
        None
    };
    let draw = |rng: &mut R| -> f64 {
        match &gaps {
            None => params.mean_interval_s,
            Some(d) => loop {
                let g = d.sample(rng);
                if g <= params.max_interval_s && g > 0.0 {
                    break g;
                }
            },
        }
    };
    loop {
        let mut times = Vec::with_capacity((params.duration_s / params.mean_interval_s) as usize + 8);
        let mut t = 0.0;
        loop {
            t += draw(rng);
            if t > params.duration_s {
                break;
            }
            times.push(t);
        }
        if times.len() >= 2 {
            return Ok(times);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng;

    #[test]
    fn times_are_increasing_and_bounded() {
        let p = TrafficParams::default();
        let mut r = rng(3);
        for _ in 0..200 {
            let t = sample_packet_times(&p, &mut r).unwrap();
            assert!(t.len() >= 2);
            assert!(t.windows(2).all(|w| w[1] > w[0]));
            assert!(t[0] > 0.0 && *t.last().unwrap() <= p.duration_s);
            assert!(t.windows(2).all(|w| w[1] - w[0] <= p.max_interval_s + 1e-12));
        }
    }

    #[test]
    fn zero_dispersion_is_uniform() {
        let p = TrafficParams {
            dispersion: 0.0,
            ..TrafficParams::default()
        };
        let t = sample_packet_times(&p, &mut rng(1)).unwrap();
        for w in t.windows(2) {
            assert!((w[1] - w[0] - p.mean_interval_s).abs() < 1e-9);
        }
    }

    #[test]
    fn rejects_bad_params() {
        let p = TrafficParams {
            mean_interval_s: 0.3,
            ..TrafficParams::default()
        };
        assert!(sample_packet_times(&p, &mut rng(0)).is_err());
    }

    #[test]
    fn short_window_still_yields_two_packets() {
        let p = TrafficParams {
            duration_s: 0.03,
            ..TrafficParams::default()
        };
        let t = sample_packet_times(&p, &mut rng(9)).unwrap();
        assert!(t.len() >= 2);
    }
}
