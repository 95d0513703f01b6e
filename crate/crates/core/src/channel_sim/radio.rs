use super::SimError;

pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Radio front-end parameters shared by every link of a scene.
#[derive(Debug, Clone, PartialEq)]
pub struct RadioConfig {
    pub carrier_freq_hz: f64,
    pub subcarrier_bw_hz: f64,
    pub n_antennas: usize,
    pub n_subcarriers: usize,
    pub antenna_spacing_m: f64,
    /// Path-loss exponent of the reflection and line-of-sight terms.
    pub pathloss_exponent: f64,
    /// Added to `10 log10(mean |h|^2)` when deriving RSSI.
    pub rssi_offset_db: f64,
}

impl Default for RadioConfig {
    fn default() -> Self {
        let carrier = 5.26e9;
        Self {
            carrier_freq_hz: carrier,
            subcarrier_bw_hz: 312.5e3,
            n_antennas: 2,
            n_subcarriers: 117,
            antenna_spacing_m: SPEED_OF_LIGHT / carrier / 2.0,
            pathloss_exponent: 4.0,
            rssi_offset_db: 30.0,
        }
    }
}

impl RadioConfig {
    /// Default radio retuned to a carrier with wavelength `lambda_m`.
    pub fn with_wavelength(lambda_m: f64) -> Self {
        let carrier = SPEED_OF_LIGHT / lambda_m;
        Self {
            carrier_freq_hz: carrier,
            antenna_spacing_m: lambda_m / 2.0,
            ..Self::default()
        }
    }

    pub fn wavelength(&self) -> f64 {
        SPEED_OF_LIGHT / self.carrier_freq_hz
    }

    /// Frequency of subcarrier `m` (zero-based); frequencies increase with `m`.
    pub fn subcarrier_freq(&self, m: usize) -> f64 {
        self.carrier_freq_hz + m as f64 * self.subcarrier_bw_hz
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let positive = [
            ("carrier_freq_hz", self.carrier_freq_hz),
            ("subcarrier_bw_hz", self.subcarrier_bw_hz),
            ("antenna_spacing_m", self.antenna_spacing_m),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(SimError::Invalid(format!("radio.{name} must be positive, got {v}")));
            }
        }
        if self.n_antennas == 0 || self.n_subcarriers == 0 {
            return Err(SimError::Invalid(
                "radio needs at least one antenna and one subcarrier".into(),
            ));
        }
        if !(2.0..=6.0).contains(&self.pathloss_exponent) {
            return Err(SimError::Invalid(format!(
                "radio.pathloss_exponent must lie in [2, 6], got {}",
                self.pathloss_exponent
            )));
        }
        Ok(())
    }
}
