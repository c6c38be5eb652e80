//! Communication link budget: UMa-AV LoS path loss, altitude-dependent
//! shadowing, mean RSRP and the Shannon rate of the data subcarriers.

use crate::error::{Error, Result};
use crate::scenario::Scenario;
use crate::units::{db_to_linear, linear_to_db};

/// Below this distance the aerial LoS model is outside its calibrated range.
/// Evaluations still use the LoS formula but [`LinkBudget::los_extrapolated`]
/// is raised so callers can report it.
pub const LOS_MODEL_MIN_DISTANCE: f64 = 100.0;

/// Per-link quantities at one drone position. The mean RSRP excludes shadowing.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LinkBudget {
    pub distance_m: f64,
    pub pathloss_db: f64,
    pub sigma_sf_db: f64,
    pub rsrp_mean_dbm: f64,
    pub snr_comm: f64,
    pub rate_bps: f64,
    pub los_extrapolated: bool,
}

/// UMa-AV LoS path loss `28 + 22 log10(d) + 20 log10(fc_GHz)`, dB.
pub fn pathloss_los_db(fc_hz: f64, d: f64) -> Result<f64> {
    if !(d >= 1.0) {
        return Err(Error::PathLossDomain(d));
    }
    Ok(28.0 + 22.0 * d.log10() + 20.0 * (fc_hz / 1e9).log10())
}

/// Shadowing standard deviation at altitude `h_av`, dB.
pub fn sigma_sf_db(s: &Scenario, h_av: f64) -> f64 {
    s.sf_coeff_a * (-s.sf_coeff_b * h_av).exp()
}

/// Beamformed transmit EIRP term `P_sum + 20 log10(N_t)`, dBm.
fn eirp_dbm(s: &Scenario) -> f64 {
    s.p_sum_dbm + 20.0 * f64::from(s.n_antennas()).log10()
}

/// Received power with a given shadow realisation, dBm.
pub fn rsrp_dbm(s: &Scenario, d: f64, shadow_db: f64) -> Result<f64> {
    Ok(eirp_dbm(s) - pathloss_los_db(s.fc, d)? - shadow_db)
}

/// Linear communication SNR `β_C N_t² P_sum / (N σ²)` for a shadow realisation.
pub fn comm_snr(s: &Scenario, d: f64, shadow_db: f64) -> Result<f64> {
    let snr_db = rsrp_dbm(s, d, shadow_db)? - linear_to_db(f64::from(s.n_subcarriers)) - s.noise_dbm;
    Ok(db_to_linear(snr_db))
}

/// Shannon rate over the communication share `(1-ρ)B`, bit/s.
pub fn comm_rate_bps(s: &Scenario, d: f64, shadow_db: f64) -> Result<f64> {
    let snr = comm_snr(s, d, shadow_db)?;
    Ok(rate_from_snr(s, snr))
}

fn rate_from_snr(s: &Scenario, snr: f64) -> f64 {
    ((1.0 - s.pilot_ratio) * s.bandwidth_b * (1.0 + snr).log2()).max(0.0)
}

/// Mean-value link budget (shadow term set to zero).
pub fn link_budget(s: &Scenario, d: f64, h_av: f64) -> Result<LinkBudget> {
    let pathloss_db = pathloss_los_db(s.fc, d)?;
    let rsrp_mean_dbm = eirp_dbm(s) - pathloss_db;
    let snr_comm = db_to_linear(rsrp_mean_dbm - linear_to_db(f64::from(s.n_subcarriers)) - s.noise_dbm);
    Ok(LinkBudget {
        distance_m: d,
        pathloss_db,
        sigma_sf_db: sigma_sf_db(s, h_av),
        rsrp_mean_dbm,
        snr_comm,
        rate_bps: rate_from_snr(s, snr_comm),
        los_extrapolated: d < LOS_MODEL_MIN_DISTANCE,
    })
}
