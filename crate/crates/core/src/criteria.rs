//! Handover activation probabilities and the effective data rate.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::channel::{comm_rate_bps, pathloss_los_db, sigma_sf_db};
use crate::error::{Error, Result};
use crate::scenario::{DronePosition, Scenario};
use crate::sensing::crlb_at;

/// Probabilities are kept inside `[PROB_EPS, 1 - PROB_EPS]`.
pub const PROB_EPS: f64 = 1e-300;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Criterion {
    /// A3 event: target RSRP exceeds serving RSRP by the hysteresis.
    Rsrp,
    /// Sensed serving distance exceeds sensed target distance by `d_th`.
    #[serde(alias = "dist")]
    Sensing,
    /// Either of the two.
    Joint,
}

impl Criterion {
    pub const ALL: [Criterion; 3] = [Criterion::Rsrp, Criterion::Sensing, Criterion::Joint];

    pub fn as_str(self) -> &'static str {
        match self {
            Criterion::Rsrp => "rsrp",
            Criterion::Sensing => "sensing",
            Criterion::Joint => "joint",
        }
    }
}

impl fmt::Display for Criterion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Criterion {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rsrp" => Ok(Criterion::Rsrp),
            "sensing" | "dist" => Ok(Criterion::Sensing),
            "joint" => Ok(Criterion::Joint),
            other => Err(Error::InvalidArgument(format!("unknown criterion `{other}`"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HoProbabilities {
    pub p_rsrp: f64,
    pub p_dist: f64,
    pub p_joint: f64,
}

impl HoProbabilities {
    pub fn from_components(p_rsrp: f64, p_dist: f64) -> Self {
        HoProbabilities { p_rsrp, p_dist, p_joint: p_ho_joint(p_rsrp, p_dist) }
    }

    pub fn get(&self, c: Criterion) -> f64 {
        match c {
            Criterion::Rsrp => self.p_rsrp,
            Criterion::Sensing => self.p_dist,
            Criterion::Joint => self.p_joint,
        }
    }
}

/// Gaussian tail `Q(x) = P[N(0,1) > x]`.
pub fn q_function(x: f64) -> f64 {
    0.5 * libm::erfc(x / std::f64::consts::SQRT_2)
}

fn clamp_prob(p: f64) -> f64 {
    p.clamp(PROB_EPS, 1.0 - PROB_EPS)
}

/// `Q((Γ + L(d_T) - L(d_S)) / (√2 σ_SF(h)))`.
pub fn p_ho_rsrp(s: &Scenario, d_s: f64, d_t: f64, h_av: f64) -> Result<f64> {
    let margin = s.gamma_db + pathloss_los_db(s.fc, d_t)? - pathloss_los_db(s.fc, d_s)?;
    let spread = std::f64::consts::SQRT_2 * sigma_sf_db(s, h_av);
    Ok(clamp_prob(q_function(margin / spread)))
}

/// `Q((d_th + d_T - d_S) / sqrt(CRLB(d_T) + CRLB(d_S)))` with mean-budget CRLBs.
pub fn p_ho_dist(s: &Scenario, d_s: f64, d_t: f64) -> Result<f64> {
    let spread = (crlb_at(s, d_t)? + crlb_at(s, d_s)?).sqrt();
    Ok(clamp_prob(q_function((s.d_th + d_t - d_s) / spread)))
}

/// Union of two independent events.
pub fn p_ho_joint(p_rsrp: f64, p_dist: f64) -> f64 {
    // max() only absorbs last-bit rounding so dominance holds exactly
    (p_rsrp + p_dist - p_rsrp * p_dist).max(p_rsrp).max(p_dist).min(1.0)
}

/// `(1 - p) R_S + p R_T`, evaluated as `R_S + p (R_T - R_S)`.
pub fn effective_rate(p_ho: f64, r_s: f64, r_t: f64) -> f64 {
    r_s + p_ho * (r_t - r_s)
}

pub fn ho_probabilities(s: &Scenario, p: &DronePosition) -> Result<HoProbabilities> {
    let d = s.distances(p);
    Ok(HoProbabilities::from_components(p_ho_rsrp(s, d.serving, d.target, p.h_av)?, p_ho_dist(s, d.serving, d.target)?))
}

/// Probability of a single criterion; skips the CRLB for the RSRP rule.
pub fn probability(s: &Scenario, c: Criterion, p: &DronePosition) -> Result<f64> {
    let d = s.distances(p);
    match c {
        Criterion::Rsrp => p_ho_rsrp(s, d.serving, d.target, p.h_av),
        Criterion::Sensing => p_ho_dist(s, d.serving, d.target),
        Criterion::Joint => {
            Ok(p_ho_joint(p_ho_rsrp(s, d.serving, d.target, p.h_av)?, p_ho_dist(s, d.serving, d.target)?))
        }
    }
}

/// Mean rates to both BSs and the criterion probabilities at a point.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PointEvaluation {
    pub probs: HoProbabilities,
    pub rate_serving: f64,
    pub rate_target: f64,
}

impl PointEvaluation {
    pub fn effective_rate(&self, c: Criterion) -> f64 {
        effective_rate(self.probs.get(c), self.rate_serving, self.rate_target)
    }
}

pub fn evaluate_point(s: &Scenario, p: &DronePosition) -> Result<PointEvaluation> {
    let d = s.distances(p);
    Ok(PointEvaluation {
        probs: ho_probabilities(s, p)?,
        rate_serving: comm_rate_bps(s, d.serving, 0.0)?,
        rate_target: comm_rate_bps(s, d.target, 0.0)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn q_reference_points() {
        assert_eq!(q_function(0.0), 0.5);
        // 40-digit reference: Q(1.2816) = 0.09999150009767517
        assert!((q_function(1.2816) - 0.099_991_500_097_675_17).abs() < 1e-12);
        assert!((q_function(-1.2816) - 0.900_008_499_902_324_8).abs() < 1e-12);
        for x in [0.5, 1.0, 3.0] {
            assert!((q_function(x) + q_function(-x) - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn rsrp_equal_distances() {
        let s0 = Scenario { gamma_db: 0.0, ..Scenario::default() };
        assert_relative_eq!(p_ho_rsrp(&s0, 900.0, 900.0, 200.0).unwrap(), 0.5, epsilon = 1e-15);
        let s = Scenario::default();
        // frozen: Q(2 / (sqrt(2) * 4.64 e^-1.32)) from a 40-digit evaluation
        assert_relative_eq!(p_ho_rsrp(&s, 1015.0, 1015.0, 200.0).unwrap(), 0.126_945_845_991_603_82, epsilon = 1e-12);
        let huge = Scenario { gamma_db: 1e9, ..Scenario::default() };
        assert_eq!(p_ho_rsrp(&huge, 1015.0, 1015.0, 200.0).unwrap(), PROB_EPS);
    }

    #[test]
    fn dist_reference_points() {
        let s0 = Scenario { d_th: 0.0, ..Scenario::default() };
        assert_relative_eq!(p_ho_dist(&s0, 800.0, 800.0).unwrap(), 0.5, epsilon = 1e-15);
        let s = Scenario::default();
        assert_relative_eq!(p_ho_dist(&s, 1050.0, 1000.0).unwrap(), 0.5, epsilon = 1e-15);
        let p = ho_probabilities(&s, &DronePosition::new(0.0, 0.0, 200.0)).unwrap();
        // frozen: Q(50 / sqrt(2 * 464.8599)) from a 40-digit evaluation
        assert_relative_eq!(p.p_dist, 0.050_522_176_037_665_56, epsilon = 1e-10);
    }

    #[test]
    fn joint_identities() {
        assert_eq!(p_ho_joint(0.0, 0.37), 0.37);
        assert_eq!(p_ho_joint(1.0, 0.37), 1.0);
        assert_relative_eq!(p_ho_joint(0.3, 0.4), 0.58, epsilon = 1e-15);
    }

    #[test]
    fn effective_rate_endpoints() {
        assert_eq!(effective_rate(0.0, 100.0, 50.0), 100.0);
        assert_eq!(effective_rate(1.0, 100.0, 50.0), 50.0);
        assert_eq!(effective_rate(0.5, 100.0, 50.0), 75.0);
    }

    #[test]
    fn criterion_names() {
        assert_eq!("dist".parse::<Criterion>().unwrap(), Criterion::Sensing);
        for c in Criterion::ALL {
            assert_eq!(c.to_string().parse::<Criterion>().unwrap(), c);
        }
        assert!("a3".parse::<Criterion>().is_err());
    }

    #[test]
    fn probabilities_rise_along_the_axis() {
        // The sensing rule dips in its far tail near the serving BS (values
        // around 1e-85) where CRLB(d_T) shrinks faster than the numerator, so
        // monotonicity is checked to the same 1e-12 slack the region solver uses.
        let s = Scenario::default();
        for h in [120.0, 200.0, 300.0] {
            for y in [0.0, 400.0, 1000.0] {
                let mut prev = HoProbabilities { p_rsrp: 0.0, p_dist: 0.0, p_joint: 0.0 };
                for i in 0..=400 {
                    let x = -1000.0 + 5.0 * f64::from(i);
                    let p = ho_probabilities(&s, &DronePosition::new(x, y, h)).unwrap();
                    assert!(p.p_rsrp >= prev.p_rsrp, "rsrp x = {x}");
                    assert!(p.p_dist + 1e-12 >= prev.p_dist, "dist x = {x}");
                    assert!(p.p_joint + 1e-12 >= prev.p_joint, "joint x = {x}");
                    prev = p;
                }
            }
        }
    }

    #[test]
    fn zero_threshold_reflection() {
        let s = Scenario { d_th: 0.0, ..Scenario::default() };
        for x in [3.0, 40.0, 250.0] {
            let a = probability(&s, Criterion::Sensing, &DronePosition::new(x, 120.0, 160.0)).unwrap();
            let b = probability(&s, Criterion::Sensing, &DronePosition::new(-x, 120.0, 160.0)).unwrap();
            assert!((a + b - 1.0).abs() < 1e-12);
        }
    }

    proptest! {
        #[test]
        fn joint_dominates_and_is_inclusion_exclusion(
            x in -1000.0f64..1000.0, y in -1000.0f64..1000.0, h in 100.0f64..300.0,
            gamma_db in 0.0f64..4.0, d_th in 0.0f64..100.0,
        ) {
            let s = Scenario { gamma_db, d_th, ..Scenario::default() };
            let p = ho_probabilities(&s, &DronePosition::new(x, y, h)).unwrap();
            for v in [p.p_rsrp, p.p_dist, p.p_joint] {
                prop_assert!((0.0..=1.0).contains(&v));
            }
            prop_assert!(p.p_joint >= p.p_rsrp.max(p.p_dist));
            prop_assert!((p.p_joint - (p.p_rsrp + p.p_dist - p.p_rsrp * p.p_dist)).abs() <= 1e-12);
        }

        #[test]
        fn rsrp_increases_with_serving_distance(ds in 100.0f64..2000.0, dt in 100.0f64..2000.0, g in 0.0f64..3.0) {
            let s = Scenario { gamma_db: g, ..Scenario::default() };
            let a = p_ho_rsrp(&s, ds, dt, 200.0).unwrap();
            prop_assert!(p_ho_rsrp(&s, ds * 1.01, dt, 200.0).unwrap() >= a);
            let higher = Scenario { gamma_db: g + 0.5, ..Scenario::default() };
            prop_assert!(p_ho_rsrp(&higher, ds, dt, 200.0).unwrap() <= a);
        }

        #[test]
        fn effective_rate_is_bracketed(p in 0.0f64..=1.0, rs in 0.0f64..1e9, rt in 0.0f64..1e9) {
            let r = effective_rate(p, rs, rt);
            prop_assert!(r >= rs.min(rt) * (1.0 - 1e-12) && r <= rs.max(rt) * (1.0 + 1e-12));
        }
    }
}
