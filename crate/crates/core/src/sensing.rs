//! Monostatic sensing budget and the Cramér–Rao bound on ranging.
//!
//! The BS illuminates the drone with the OFDM frame and correlates the echo on
//! the `ρN` sensing subcarriers of each of the `M` symbols. Ranging accuracy is
//! summarised by the delay CRLB mapped to distance through `d = cτ/2`.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::channel::pathloss_los_db;
use crate::error::{Error, Result};
use crate::scenario::Scenario;
use crate::units::{db_to_linear, linear_to_db};
use crate::SPEED_OF_LIGHT;

/// Floor applied to the linear sensing SNR.
pub const GAMMA_FLOOR: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SensingBudget {
    pub pathloss_sens_db: f64,
    /// Linear per-subcarrier sensing SNR.
    pub gamma: f64,
    pub crlb_m2: f64,
    pub sigma_d: f64,
}

/// Two-way sensing path loss `2L - 10 log10(σ_RCS) + 10 log10(λ²/4π)`, dB.
pub fn sensing_pathloss_db(fc_hz: f64, d: f64, rcs: f64) -> Result<f64> {
    if !(rcs > 0.0) {
        return Err(Error::InvalidArgument(format!("rcs must be positive, got {rcs}")));
    }
    let lambda = SPEED_OF_LIGHT / fc_hz;
    Ok(2.0 * pathloss_los_db(fc_hz, d)? - linear_to_db(rcs) + linear_to_db(lambda * lambda / (4.0 * PI)))
}

/// Per-subcarrier sensing SNR `β_S N_t² P_sum / (N σ²)` with the mean budget.
/// Returns `gamma_override` unconditionally when the scenario sets one.
pub fn gamma_linear(s: &Scenario, d: f64) -> Result<f64> {
    gamma_linear_with_shadow(s, d, 0.0)
}

/// As [`gamma_linear`] with a shadow realisation inside `β_S`.
pub fn gamma_linear_with_shadow(s: &Scenario, d: f64, shadow_db: f64) -> Result<f64> {
    if let Some(g) = s.gamma_override {
        return Ok(g);
    }
    let gamma_db = s.p_sum_dbm + 20.0 * f64::from(s.n_antennas()).log10()
        - sensing_pathloss_db(s.fc, d, s.rcs)?
        - shadow_db
        - linear_to_db(f64::from(s.n_subcarriers))
        - s.noise_dbm;
    let gamma = db_to_linear(gamma_db);
    if gamma < GAMMA_FLOOR {
        log::warn!("sensing SNR {gamma_db:.1} dB at d = {d:.1} m clamped to {GAMMA_FLOOR:e}");
        return Ok(GAMMA_FLOOR);
    }
    Ok(gamma)
}

/// Closed-form distance CRLB for `ρN` contiguous sensing subcarriers
/// `3c² / (8π² γ Δf² M ρN (ρN-1)(2ρN-1))`, m².
pub fn crlb_exact_m2(gamma: f64, delta_f: f64, m_symbols: u32, rho_n: u32) -> Result<f64> {
    if rho_n < 2 {
        return Err(Error::CrlbDegenerate(rho_n));
    }
    check_gamma(gamma)?;
    let k = f64::from(rho_n);
    let c2 = SPEED_OF_LIGHT * SPEED_OF_LIGHT;
    Ok(3.0 * c2 / (8.0 * PI * PI * gamma * delta_f * delta_f * f64::from(m_symbols) * k * (k - 1.0) * (2.0 * k - 1.0)))
}

/// Large-`ρN` approximation `3c² / (16π² γ ρ M N B_S²)`, m².
pub fn crlb_approx_m2(gamma: f64, rho: f64, m_symbols: u32, n_subcarriers: u32, b_s: f64) -> Result<f64> {
    check_gamma(gamma)?;
    if rho * f64::from(n_subcarriers) < 1.0 {
        return Err(Error::InvalidArgument(format!(
            "approximation needs rho * N >= 1, got {}",
            rho * f64::from(n_subcarriers)
        )));
    }
    let c2 = SPEED_OF_LIGHT * SPEED_OF_LIGHT;
    Ok(3.0 * c2 / (16.0 * PI * PI * gamma * rho * f64::from(m_symbols) * f64::from(n_subcarriers) * b_s * b_s))
}

/// Distance CRLB for an arbitrary sensing subcarrier set used in every symbol.
///
/// The Fisher information of the delay is `γ M Σ (2π n Δf)²` with `γ` the
/// signal power over the per-dimension noise variance; for indices `0..K`
/// this coincides with [`crlb_exact_m2`].
pub fn crlb_for_subcarriers_m2(gamma: f64, delta_f: f64, m_symbols: u32, indices: &[u32]) -> Result<f64> {
    check_gamma(gamma)?;
    let sum_sq: f64 = indices.iter().map(|&n| f64::from(n) * f64::from(n)).sum();
    if !(sum_sq > 0.0) {
        return Err(Error::CrlbDegenerate(indices.len() as u32));
    }
    let fisher = gamma * f64::from(m_symbols) * 4.0 * PI * PI * delta_f * delta_f * sum_sq;
    Ok(SPEED_OF_LIGHT * SPEED_OF_LIGHT / (4.0 * fisher))
}

fn check_gamma(gamma: f64) -> Result<()> {
    if !(gamma > 0.0) {
        return Err(Error::InvalidArgument(format!("sensing SNR must be positive, got {gamma}")));
    }
    Ok(())
}

/// Mean-budget CRLB of the drone distance at `d`, m².
pub fn crlb_at(s: &Scenario, d: f64) -> Result<f64> {
    crlb_exact_m2(gamma_linear(s, d)?, s.delta_f, s.n_symbols, s.sensing_subcarriers())
}

pub fn sensing_budget(s: &Scenario, d: f64) -> Result<SensingBudget> {
    let pathloss_sens_db = sensing_pathloss_db(s.fc, d, s.rcs)?;
    let gamma = gamma_linear(s, d)?;
    let crlb_m2 = crlb_exact_m2(gamma, s.delta_f, s.n_symbols, s.sensing_subcarriers())?;
    Ok(SensingBudget { pathloss_sens_db, gamma, crlb_m2, sigma_d: crlb_m2.sqrt() })
}

/// Draw `d̂ ~ N(d, crlb)` from the supplied generator.
pub fn draw_distance_estimate<R: Rng + ?Sized>(rng: &mut R, d_true: f64, crlb: f64) -> f64 {
    if crlb <= 0.0 {
        return d_true;
    }
    // sigma > 0 and finite here, so the constructor cannot fail
    let normal = Normal::new(d_true, crlb.sqrt()).expect("finite positive sigma");
    normal.sample(rng)
}

/// Seeded single draw of the ranging model.
pub fn sample_distance_estimate(d_true: f64, crlb: f64, seed: u64) -> f64 {
    let mut rng = crate::rng::stream(seed, &[]);
    draw_distance_estimate(&mut rng, d_true, crlb)
}
