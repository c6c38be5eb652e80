//! Scenario parameters and the two-BS geometry.
//!
//! Coordinates: the origin sits midway between the base stations, the serving
//! BS antenna is at `(-x_BS, 0, h_BS)` and the target at `(x_BS, 0, h_BS)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result, Violation, Violations};
use crate::SPEED_OF_LIGHT;

/// Full parameter set. Every default reproduces the reference deployment, so an
/// empty config file gives the nominal setup.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Scenario {
    /// Carrier frequency, Hz.
    pub fc: f64,
    /// Total system bandwidth B, Hz.
    pub bandwidth_b: f64,
    /// Total BS transmit power, dBm.
    pub p_sum_dbm: f64,
    /// UPA elements along x.
    pub nx: u32,
    /// UPA elements along y.
    pub ny: u32,
    /// Half the inter-site distance, m.
    pub bs_half_spacing: f64,
    /// BS antenna height, m.
    pub h_bs: f64,
    /// OFDM symbols per sensing frame, M.
    pub n_symbols: u32,
    /// Subcarriers, N.
    pub n_subcarriers: u32,
    /// Subcarrier spacing, Hz.
    pub delta_f: f64,
    /// Cyclic prefix duration, s.
    pub t_cp: f64,
    /// Fraction of subcarriers used for sensing, in (0, 1].
    pub pilot_ratio: f64,
    /// Drone radar cross section, m².
    pub rcs: f64,
    /// A3 hysteresis, dB.
    pub gamma_db: f64,
    /// Sensing distance threshold, m.
    pub d_th: f64,
    /// Noise power, dBm.
    pub noise_dbm: f64,
    /// Shadowing std `a * exp(-b * h)` dB.
    pub sf_coeff_a: f64,
    pub sf_coeff_b: f64,
    /// Fixed linear per-subcarrier sensing SNR replacing the link-budget value.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gamma_override: Option<f64>,
}

impl Default for Scenario {
    fn default() -> Self {
        Scenario {
            fc: 2.0e9,
            bandwidth_b: 10.0e6,
            p_sum_dbm: 42.0,
            nx: 8,
            ny: 4,
            bs_half_spacing: 1000.0,
            h_bs: 25.0,
            n_symbols: 64,
            n_subcarriers: 50,
            delta_f: 200.0e3,
            t_cp: 1.25e-6,
            pilot_ratio: 0.2,
            rcs: 0.1,
            gamma_db: 2.0,
            d_th: 50.0,
            noise_dbm: -100.0,
            sf_coeff_a: 4.64,
            sf_coeff_b: 0.0066,
            gamma_override: None,
        }
    }
}

/// Drone position in the BS-pair frame, m.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DronePosition {
    pub x: f64,
    pub y: f64,
    pub h_av: f64,
}

impl DronePosition {
    pub fn new(x: f64, y: f64, h_av: f64) -> Self {
        DronePosition { x, y, h_av }
    }
}

/// Drone-to-BS Euclidean distances, m.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LinkDistances {
    pub serving: f64,
    pub target: f64,
}

impl Scenario {
    /// Antenna count N_t = nx * ny.
    pub fn n_antennas(&self) -> u32 {
        self.nx * self.ny
    }

    /// Useful symbol duration T_u = 1/Δf.
    pub fn t_useful(&self) -> f64 {
        1.0 / self.delta_f
    }

    /// OFDM symbol duration including the cyclic prefix.
    pub fn symbol_duration(&self) -> f64 {
        self.t_useful() + self.t_cp
    }

    pub fn wavelength(&self) -> f64 {
        SPEED_OF_LIGHT / self.fc
    }

    /// Sensing subcarriers per symbol, ρN rounded to the nearest integer.
    pub fn sensing_subcarriers(&self) -> u32 {
        (self.pilot_ratio * f64::from(self.n_subcarriers)).round().max(0.0) as u32
    }

    /// Sensing bandwidth B_S = ρB.
    pub fn sensing_bandwidth(&self) -> f64 {
        self.pilot_ratio * self.bandwidth_b
    }

    pub fn distances(&self, p: &DronePosition) -> LinkDistances {
        let dy2 = p.y * p.y;
        let dz = p.h_av - self.h_bs;
        let dz2 = dz * dz;
        let xs = p.x + self.bs_half_spacing;
        let xt = p.x - self.bs_half_spacing;
        LinkDistances { serving: (xs * xs + dy2 + dz2).sqrt(), target: (xt * xt + dy2 + dz2).sqrt() }
    }

    /// Check every invariant and report all of the violated ones.
    pub fn validate(&self) -> Result<(), Violations> {
        let mut out = Vec::new();
        let positive: [(&'static str, f64); 10] = [
            ("fc", self.fc),
            ("bandwidth_b", self.bandwidth_b),
            ("bs_half_spacing", self.bs_half_spacing),
            ("h_bs", self.h_bs),
            ("delta_f", self.delta_f),
            ("rcs", self.rcs),
            ("sf_coeff_a", self.sf_coeff_a),
            ("pilot_ratio", self.pilot_ratio),
            ("n_symbols", f64::from(self.n_symbols)),
            ("n_subcarriers", f64::from(self.n_subcarriers)),
        ];
        for (field, value) in positive {
            if !(value > 0.0) || !value.is_finite() {
                out.push(Violation::NonPositive { field, value });
            }
        }
        for (field, value) in [("nx", self.nx), ("ny", self.ny)] {
            if value < 1 {
                out.push(Violation::NonPositive { field, value: f64::from(value) });
            }
        }
        if self.pilot_ratio > 1.0 {
            out.push(Violation::OutOfRange { field: "pilot_ratio", value: self.pilot_ratio });
        }
        if self.t_cp < 0.0 || !self.t_cp.is_finite() {
            out.push(Violation::OutOfRange { field: "t_cp", value: self.t_cp });
        }
        if self.sf_coeff_b < 0.0 || !self.sf_coeff_b.is_finite() {
            out.push(Violation::OutOfRange { field: "sf_coeff_b", value: self.sf_coeff_b });
        }
        for (field, value) in [
            ("p_sum_dbm", self.p_sum_dbm),
            ("noise_dbm", self.noise_dbm),
            ("gamma_db", self.gamma_db),
            ("d_th", self.d_th),
        ] {
            if !value.is_finite() {
                out.push(Violation::OutOfRange { field, value });
            }
        }
        if let Some(g) = self.gamma_override {
            if !(g > 0.0) {
                out.push(Violation::NonPositive { field: "gamma_override", value: g });
            }
        }
        let k = self.sensing_subcarriers();
        if k < 2 {
            out.push(Violation::CrlbDegenerate { sensing_subcarriers: k });
        }
        let n_delta_f = f64::from(self.n_subcarriers) * self.delta_f;
        if (n_delta_f - self.bandwidth_b).abs() > 1e-9 * self.bandwidth_b.abs() {
            out.push(Violation::GridInconsistent { n_delta_f, bandwidth: self.bandwidth_b });
        }
        if out.is_empty() {
            Ok(())
        } else {
            Err(Violations(out))
        }
    }

    /// [`Scenario::validate`] folded into the crate error type.
    pub fn validated(self) -> Result<Self> {
        self.validate().map_err(Error::InvalidScenario)?;
        Ok(self)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn reference_defaults_are_valid() {
        let s = Scenario::default();
        assert!(s.validate().is_ok());
        assert_eq!(s.n_antennas(), 32);
        assert_eq!(s.sensing_subcarriers(), 10);
        assert!((s.t_useful() - 5e-6).abs() < 1e-18);
        assert!((s.symbol_duration() - 6.25e-6).abs() < 1e-18);
        assert!((s.wavelength() - 0.15).abs() < 1e-15);
    }

    #[test]
    fn distances_at_midpoint() {
        let s = Scenario::default();
        let d = s.distances(&DronePosition::new(0.0, 0.0, 200.0));
        assert_eq!(d.serving, d.target);
        // sqrt(1000^2 + 175^2)
        assert!((d.serving - 1015.197).abs() < 1e-3);
    }

    #[test]
    fn distance_to_target_vanishes_at_collocation() {
        let s = Scenario::default();
        let eps = 1e-3;
        let d = s.distances(&DronePosition::new(1000.0, 0.0, 25.0 + eps));
        assert!((d.target - eps).abs() < 1e-12);
    }

    #[test]
    fn degenerate_pilot_count_is_reported() {
        let s = Scenario { pilot_ratio: 0.02, ..Scenario::default() };
        let err = s.validate().unwrap_err();
        assert!(err.contains_code("crlb-degenerate"));
    }

    #[test]
    fn inconsistent_grid_is_reported() {
        let s = Scenario { delta_f: 100e3, ..Scenario::default() };
        let err = s.validate().unwrap_err();
        assert!(err.contains_code("grid-inconsistent"));
    }

    #[test]
    fn all_violations_are_collected() {
        let s = Scenario { pilot_ratio: 0.02, delta_f: 100e3, h_bs: -1.0, nx: 0, ..Scenario::default() };
        let err = s.validate().unwrap_err();
        assert!(err.contains_code("crlb-degenerate"));
        assert!(err.contains_code("grid-inconsistent"));
        assert_eq!(err.0.iter().filter(|v| v.code() == "non-positive").count(), 2);
    }

    proptest! {
        #[test]
        fn mirror_in_x_swaps_links(x in -1000.0f64..1000.0, y in -1000.0f64..1000.0, h in 30.0f64..400.0) {
            let s = Scenario::default();
            let a = s.distances(&DronePosition::new(x, y, h));
            let b = s.distances(&DronePosition::new(-x, y, h));
            prop_assert!((a.serving - b.target).abs() < 1e-9);
            prop_assert!((a.target - b.serving).abs() < 1e-9);
            let c = s.distances(&DronePosition::new(x, -y, h));
            prop_assert_eq!(a, c);
        }

        #[test]
        fn distance_gap_increases_along_x(x in -999.0f64..999.0, dx in 0.01f64..1.0, y in -1000.0f64..1000.0, h in 30.0f64..400.0) {
            let s = Scenario::default();
            let a = s.distances(&DronePosition::new(x, y, h));
            let b = s.distances(&DronePosition::new((x + dx).min(1000.0), y, h));
            prop_assert!(b.serving - b.target > a.serving - a.target);
        }
    }
}
