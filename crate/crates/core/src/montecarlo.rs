//! Event-level Monte Carlo of the three activation rules.
//!
//! Each trial draws independent shadowing on both links and independent
//! ranging errors on both distances, then evaluates the A3 event and the
//! distance event on the same draws so the joint rule is their union
//! sample-wise.

use std::io::Write;

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use statrs::distribution::{Beta, ContinuousCDF};

use crate::channel::{pathloss_los_db, sigma_sf_db};
use crate::criteria::{self, Criterion};
use crate::error::{Error, Result};
use crate::rng;
use crate::scenario::{DronePosition, Scenario};
use crate::sensing::crlb_at;

/// Trials per independently seeded block.
pub const BLOCK_TRIALS: u64 = 4096;
/// Confidence level of the per-pair binomial interval.
pub const CI_LEVEL: f64 = 0.99;
/// Fraction of (point, criterion) pairs that must fall inside their interval.
pub const PASS_FRACTION: f64 = 0.99;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TrialBatch {
    pub point: DronePositionKey,
    pub trials: u64,
    pub seed: u64,
    pub hits_rsrp: u64,
    pub hits_dist: u64,
    pub hits_joint: u64,
}

/// Bit-exact copy of a [`DronePosition`] so batches compare with `Eq`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct DronePositionKey {
    x: u64,
    y: u64,
    h_av: u64,
}

impl From<DronePosition> for DronePositionKey {
    fn from(p: DronePosition) -> Self {
        DronePositionKey { x: p.x.to_bits(), y: p.y.to_bits(), h_av: p.h_av.to_bits() }
    }
}

impl From<DronePositionKey> for DronePosition {
    fn from(k: DronePositionKey) -> Self {
        DronePosition::new(f64::from_bits(k.x), f64::from_bits(k.y), f64::from_bits(k.h_av))
    }
}

impl TrialBatch {
    pub fn position(&self) -> DronePosition {
        self.point.into()
    }

    pub fn hits(&self, c: Criterion) -> u64 {
        match c {
            Criterion::Rsrp => self.hits_rsrp,
            Criterion::Sensing => self.hits_dist,
            Criterion::Joint => self.hits_joint,
        }
    }

    pub fn frequency(&self, c: Criterion) -> f64 {
        self.hits(c) as f64 / self.trials as f64
    }
}

/// Fixed per-point quantities shared by all trials.
struct TrialModel {
    pathloss_gap_db: f64,
    sigma_sf: f64,
    hysteresis_db: f64,
    d_serving: f64,
    d_target: f64,
    sigma_serving: f64,
    sigma_target: f64,
    d_th: f64,
}

impl TrialModel {
    fn new(s: &Scenario, p: &DronePosition) -> Result<Self> {
        let d = s.distances(p);
        Ok(TrialModel {
            pathloss_gap_db: pathloss_los_db(s.fc, d.serving)? - pathloss_los_db(s.fc, d.target)?,
            sigma_sf: sigma_sf_db(s, p.h_av),
            hysteresis_db: s.gamma_db,
            d_serving: d.serving,
            d_target: d.target,
            sigma_serving: crlb_at(s, d.serving)?.sqrt(),
            sigma_target: crlb_at(s, d.target)?.sqrt(),
            d_th: s.d_th,
        })
    }

    /// `(P_T - P_S - Γ, d̂_S - d̂_T - d_th)`; each event fires when its margin is positive.
    fn margins<R: Rng>(&self, rng: &mut R) -> (f64, f64) {
        let eps_s: f64 = rng.sample::<f64, _>(StandardNormal) * self.sigma_sf;
        let eps_t: f64 = rng.sample::<f64, _>(StandardNormal) * self.sigma_sf;
        let d_hat_s = self.d_serving + rng.sample::<f64, _>(StandardNormal) * self.sigma_serving;
        let d_hat_t = self.d_target + rng.sample::<f64, _>(StandardNormal) * self.sigma_target;
        let rsrp_gap = self.pathloss_gap_db + eps_s - eps_t;
        (rsrp_gap - self.hysteresis_db, d_hat_s - d_hat_t - self.d_th)
    }
}

fn blocks(trials: u64) -> impl ParallelIterator<Item = (u64, u64)> {
    let n_blocks = trials.div_ceil(BLOCK_TRIALS);
    (0..n_blocks).into_par_iter().map(move |b| {
        let start = b * BLOCK_TRIALS;
        (b, (trials - start).min(BLOCK_TRIALS))
    })
}

pub fn run_batch(s: &Scenario, p: &DronePosition, trials: u64, seed: u64) -> Result<TrialBatch> {
    if trials == 0 {
        return Err(Error::InvalidArgument("a batch needs at least one trial".into()));
    }
    let model = TrialModel::new(s, p)?;
    let (r, d, j) = blocks(trials)
        .map(|(b, n)| {
            let mut rng = rng::stream(seed, &[b]);
            let mut hits = (0u64, 0u64, 0u64);
            for _ in 0..n {
                let (mr, md) = model.margins(&mut rng);
                let (er, ed) = (mr > 0.0, md > 0.0);
                hits.0 += u64::from(er);
                hits.1 += u64::from(ed);
                hits.2 += u64::from(er || ed);
            }
            hits
        })
        .reduce(|| (0, 0, 0), |a, b| (a.0 + b.0, a.1 + b.1, a.2 + b.2));
    Ok(TrialBatch { point: (*p).into(), trials, seed, hits_rsrp: r, hits_dist: d, hits_joint: j })
}

/// Pearson correlation between the RSRP margin and the distance margin over
/// `trials` draws of the batch model.
pub fn margin_correlation(s: &Scenario, p: &DronePosition, trials: u64, seed: u64) -> Result<f64> {
    let model = TrialModel::new(s, p)?;
    let mut rng = rng::stream(seed, &[u64::MAX]);
    let pairs: Vec<(f64, f64)> = (0..trials).map(|_| model.margins(&mut rng)).collect();
    let n = pairs.len() as f64;
    let (ma, mb) = pairs.iter().fold((0.0, 0.0), |acc, &(a, b)| (acc.0 + a / n, acc.1 + b / n));
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for &(a, b) in &pairs {
        sab += (a - ma) * (b - mb);
        saa += (a - ma).powi(2);
        sbb += (b - mb).powi(2);
    }
    Ok(sab / (saa * sbb).sqrt())
}

/// Two-sided Clopper–Pearson interval for `hits` successes out of `trials`.
pub fn clopper_pearson(hits: u64, trials: u64, level: f64) -> (f64, f64) {
    let alpha = 1.0 - level;
    let (k, n) = (hits as f64, trials as f64);
    let lo = if hits == 0 { 0.0 } else { Beta::new(k, n - k + 1.0).map(|b| b.inverse_cdf(alpha / 2.0)).unwrap_or(0.0) };
    let hi = if hits == trials {
        1.0
    } else {
        Beta::new(k + 1.0, n - k).map(|b| b.inverse_cdf(1.0 - alpha / 2.0)).unwrap_or(1.0)
    };
    (lo, hi)
}

#[derive(Clone, Debug, PartialEq)]
pub struct ValidationRow {
    pub point_index: usize,
    pub point: DronePosition,
    pub criterion: Criterion,
    pub p_analytic: f64,
    pub p_empirical: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    pub pass: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ValidationReport {
    pub rows: Vec<ValidationRow>,
    pub trials: u64,
    pub seed: u64,
    pub pass_fraction: f64,
    pub passed: bool,
}

/// Compare the closed forms against empirical frequencies at every point.
/// `perturbation` is added to each analytic probability (clamped to
/// `[0, 1]`) for fault-injection runs; use 0 for a real validation.
pub fn validate_grid(
    s: &Scenario,
    points: &[DronePosition],
    trials: u64,
    seed: u64,
    perturbation: f64,
) -> Result<ValidationReport> {
    if points.is_empty() {
        return Err(Error::InvalidArgument("validation needs at least one point".into()));
    }
    let per_point = points
        .par_iter()
        .enumerate()
        .map(|(i, p)| {
            let analytic = criteria::ho_probabilities(s, p)?;
            let batch = run_batch(s, p, trials, rng::derive_seed(seed, &[i as u64]))?;
            Ok(Criterion::ALL
                .iter()
                .map(|&c| {
                    let p_analytic = (analytic.get(c) + perturbation).clamp(0.0, 1.0);
                    let (ci_lo, ci_hi) = clopper_pearson(batch.hits(c), trials, CI_LEVEL);
                    ValidationRow {
                        point_index: i,
                        point: *p,
                        criterion: c,
                        p_analytic,
                        p_empirical: batch.frequency(c),
                        ci_lo,
                        ci_hi,
                        pass: (ci_lo..=ci_hi).contains(&p_analytic),
                    }
                })
                .collect::<Vec<_>>())
        })
        .collect::<Result<Vec<_>>>()?;
    let rows: Vec<ValidationRow> = per_point.into_iter().flatten().collect();
    let pass_fraction = rows.iter().filter(|r| r.pass).count() as f64 / rows.len() as f64;
    Ok(ValidationReport { rows, trials, seed, pass_fraction, passed: pass_fraction >= PASS_FRACTION })
}

/// Fifty fixed points spanning the handover zone and its surroundings.
pub fn reference_points() -> Vec<DronePosition> {
    const XS: [f64; 10] = [-150.0, -100.0, -50.0, -25.0, 0.0, 25.0, 50.0, 100.0, 200.0, 300.0];
    const YH: [(f64, f64); 5] = [(0.0, 200.0), (200.0, 200.0), (-500.0, 150.0), (800.0, 250.0), (1000.0, 120.0)];
    YH.iter().flat_map(|&(y, h)| XS.iter().map(move |&x| DronePosition::new(x, y, h))).collect()
}

pub const REPORT_COLUMNS: [&str; 10] =
    ["point", "criterion", "p_analytic", "p_empirical", "ci_lo", "ci_hi", "pass", "x_m", "y_m", "h_m"];

pub fn write_report_csv<W: Write>(report: &ValidationReport, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(REPORT_COLUMNS)?;
    for r in &report.rows {
        w.write_record([
            r.point_index.to_string(),
            r.criterion.to_string(),
            r.p_analytic.to_string(),
            r.p_empirical.to_string(),
            r.ci_lo.to_string(),
            r.ci_hi.to_string(),
            r.pass.to_string(),
            r.point.x.to_string(),
            r.point.y.to_string(),
            r.point.h_av.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mid() -> DronePosition {
        DronePosition::new(0.0, 0.0, 200.0)
    }

    #[test]
    fn certain_and_impossible_events() {
        let s = Scenario { d_th: -1e9, ..Scenario::default() };
        let b = run_batch(&s, &mid(), 5000, 1).unwrap();
        assert_eq!(b.hits_dist, 5000);
        assert_eq!(b.hits_joint, 5000);
        let s = Scenario { gamma_db: 1e9, ..Scenario::default() };
        let b = run_batch(&s, &mid(), 5000, 1).unwrap();
        assert_eq!(b.hits_rsrp, 0);
        assert_eq!(b.hits_joint, b.hits_dist);
    }

    #[test]
    fn batches_are_seed_deterministic() {
        let s = Scenario::default();
        let p = DronePosition::new(20.0, 100.0, 180.0);
        let a = run_batch(&s, &p, 10_001, 8).unwrap();
        assert_eq!(a, run_batch(&s, &p, 10_001, 8).unwrap());
        assert_ne!(a, run_batch(&s, &p, 10_001, 9).unwrap());
        assert_eq!(a.position(), p);
    }

    #[test]
    fn union_consistency() {
        let s = Scenario::default();
        for x in [-40.0, 10.0, 30.0, 90.0] {
            let b = run_batch(&s, &DronePosition::new(x, 0.0, 200.0), 20_000, 4).unwrap();
            assert!(b.hits_joint >= b.hits_rsrp.max(b.hits_dist));
            assert!(b.hits_joint <= b.hits_rsrp + b.hits_dist);
        }
    }

    #[test]
    fn rsrp_frequency_at_the_midpoint() {
        let s = Scenario::default();
        let b = run_batch(&s, &mid(), 100_000, 2024).unwrap();
        let (lo, hi) = clopper_pearson(b.hits_rsrp, b.trials, CI_LEVEL);
        let analytic = criteria::ho_probabilities(&s, &mid()).unwrap().p_rsrp;
        assert!((analytic - 0.126_945_845_991_603_82).abs() < 1e-12);
        assert!(lo <= analytic && analytic <= hi, "{lo} {analytic} {hi}");
    }

    #[test]
    fn margins_are_uncorrelated() {
        let s = Scenario::default();
        let n = 100_000;
        let r = margin_correlation(&s, &DronePosition::new(15.0, 50.0, 200.0), n, 3).unwrap();
        assert!(r.abs() <= 3.0 / (n as f64).sqrt(), "r = {r}");
    }

    #[test]
    fn clopper_pearson_edges() {
        let (lo, hi) = clopper_pearson(0, 10, 0.99);
        assert_eq!(lo, 0.0);
        // 1 - 0.005^(1/10)
        assert!((hi - (1.0 - 0.005f64.powf(0.1))).abs() < 1e-9);
        let (lo, hi) = clopper_pearson(10, 10, 0.99);
        assert!((lo - 0.005f64.powf(0.1)).abs() < 1e-9);
        assert_eq!(hi, 1.0);
        let (lo, hi) = clopper_pearson(500, 1000, 0.99);
        assert!(lo < 0.5 && hi > 0.5 && hi - lo < 0.09);
    }

    #[test]
    fn validation_passes_and_detects_a_shift() {
        let s = Scenario::default();
        let pts = &reference_points()[..10];
        let r = validate_grid(&s, pts, 40_000, 5, 0.0).unwrap();
        assert!(r.passed, "pass fraction {}", r.pass_fraction);
        let bad = validate_grid(&s, pts, 40_000, 5, 0.05).unwrap();
        assert!(!bad.passed);
    }

    #[test]
    fn ten_trials_give_wide_intervals() {
        // A 99% interval still misses ~1% of the time, so at 150 pairs an
        // occasional miss is expected even with 10 trials.
        let s = Scenario::default();
        let r = validate_grid(&s, &reference_points(), 10, 5, 0.0).unwrap();
        assert!(r.rows.iter().all(|row| row.ci_hi - row.ci_lo > 0.4));
        assert!(r.pass_fraction >= 0.95, "{}", r.pass_fraction);
    }

    #[test]
    fn empty_point_list_is_rejected() {
        assert!(validate_grid(&Scenario::default(), &[], 10, 1, 0.0).is_err());
        assert!(run_batch(&Scenario::default(), &mid(), 0, 1).is_err());
    }

    #[test]
    fn reference_points_are_fifty_distinct() {
        let pts = reference_points();
        assert_eq!(pts.len(), 50);
        let keys: std::collections::HashSet<DronePositionKey> = pts.iter().map(|&p| p.into()).collect();
        assert_eq!(keys.len(), 50);
    }

    #[test]
    fn report_csv_layout() {
        let s = Scenario::default();
        let r = validate_grid(&s, &reference_points()[..2], 1000, 5, 0.0).unwrap();
        let mut buf = Vec::new();
        write_report_csv(&r, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "point,criterion,p_analytic,p_empirical,ci_lo,ci_hi,pass,x_m,y_m,h_m");
        assert_eq!(lines.count(), 6);
    }
}
