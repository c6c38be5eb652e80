//! Waveform-level check of the ranging bound.
//!
//! Synthesises frequency-domain echo samples
//! `r[m,n] = α a[m,n] exp(-j2π n Δf τ) + w[m,n]` on the sensing subcarriers,
//! runs the maximum-likelihood delay estimator with known pilots and compares
//! the empirical distance variance with the closed-form CRLB.
//!
//! Noise convention: `w` has variance `σ² = α²/γ` in each of its real and
//! imaginary parts. With that reading of σ² the delay Fisher information is
//! `γ M Σ (2π n Δf)²`, which is exactly the closed form the handover
//! criteria consume.

use std::f64::consts::PI;
use std::io::Write;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;
use crate::scenario::Scenario;
use crate::sensing::{crlb_exact_m2, crlb_for_subcarriers_m2, sensing_pathloss_db};
use crate::units::{db_to_linear, linear_to_db};
use crate::SPEED_OF_LIGHT;

/// Coarse-search oversampling relative to the subcarrier count.
pub const OVERSAMPLING: usize = 64;
pub const MIN_STUDY_TRIALS: usize = 500;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PilotPattern {
    /// The first ρN subcarriers of every symbol.
    #[default]
    Contiguous,
    /// Every `N / ρN`-th subcarrier, starting at 0.
    Comb,
}

impl PilotPattern {
    pub fn as_str(self) -> &'static str {
        match self {
            PilotPattern::Contiguous => "contiguous",
            PilotPattern::Comb => "comb",
        }
    }
}

/// Sensing subcarrier indices, identical for every symbol.
pub fn pilot_indices(n_subcarriers: u32, set_size: u32, pattern: PilotPattern) -> Result<Vec<u32>> {
    if set_size < 2 {
        return Err(Error::CrlbDegenerate(set_size));
    }
    if set_size > n_subcarriers {
        return Err(Error::InvalidArgument(format!("{set_size} sensing subcarriers requested out of {n_subcarriers}")));
    }
    Ok(match pattern {
        PilotPattern::Contiguous => (0..set_size).collect(),
        PilotPattern::Comb => {
            let spacing = n_subcarriers / set_size;
            (0..set_size).map(|j| j * spacing).collect()
        }
    })
}

/// Row-major `rows × cols` complex matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct ComplexMatrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<Complex64>,
}

impl ComplexMatrix {
    pub fn get(&self, r: usize, c: usize) -> Complex64 {
        self.data[r * self.cols + c]
    }
}

/// Unit-modulus QPSK pilots, `m` symbols by `set_size` subcarriers.
pub fn gen_symbols(m: usize, set_size: usize, seed: u64) -> ComplexMatrix {
    let mut rng = rng::stream(seed, &[]);
    let h = std::f64::consts::FRAC_1_SQRT_2;
    let data = (0..m * set_size)
        .map(|_| {
            let q: u8 = rng.random_range(0..4);
            let re = if q & 1 == 0 { h } else { -h };
            let im = if q & 2 == 0 { h } else { -h };
            Complex64::new(re, im)
        })
        .collect();
    ComplexMatrix { rows: m, cols: set_size, data }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EchoFrame {
    /// `M × |S|` received samples.
    pub samples: ComplexMatrix,
    pub symbols: ComplexMatrix,
    pub pilot_set: Vec<u32>,
    /// Equivalent gain `sqrt(P_sub β_S) N_t`.
    pub alpha: f64,
    pub tau_true: f64,
    pub delta_f: f64,
    /// Per-dimension noise standard deviation.
    pub noise_sigma: f64,
    /// Subcarrier count N, sets the coarse search resolution.
    pub n_subcarriers: u32,
}

impl EchoFrame {
    /// Noiseless sample at `(m, k)`.
    pub fn clean_sample(&self, m: usize, k: usize) -> Complex64 {
        let n = f64::from(self.pilot_set[k]);
        self.symbols.get(m, k) * Complex64::from_polar(self.alpha, -2.0 * PI * n * self.delta_f * self.tau_true)
    }
}

/// Equivalent echo gain of the mean sensing budget at distance `d`.
pub fn echo_gain(s: &Scenario, d: f64) -> Result<f64> {
    let p_sub_beta_db = s.p_sum_dbm - linear_to_db(f64::from(s.n_subcarriers)) - sensing_pathloss_db(s.fc, d, s.rcs)?;
    Ok(db_to_linear(p_sub_beta_db).sqrt() * f64::from(s.n_antennas()))
}

/// Echo frame at distance `d` with per-subcarrier SNR `gamma` (linear,
/// `f64::INFINITY` switches noise off).
pub fn gen_echo(s: &Scenario, d: f64, gamma: f64, seed: u64, pattern: PilotPattern) -> Result<EchoFrame> {
    gen_echo_with_gain(s, echo_gain(s, d)?, 2.0 * d / SPEED_OF_LIGHT, gamma, seed, pattern)
}

/// Echo frame for an explicit gain and round-trip delay.
pub fn gen_echo_with_gain(
    s: &Scenario,
    alpha: f64,
    tau_true: f64,
    gamma: f64,
    seed: u64,
    pattern: PilotPattern,
) -> Result<EchoFrame> {
    if !(gamma > 0.0) {
        return Err(Error::InvalidArgument(format!("sensing SNR must be positive, got {gamma}")));
    }
    if !(alpha > 0.0) || !alpha.is_finite() {
        return Err(Error::InvalidArgument(format!("echo gain must be positive, got {alpha}")));
    }
    let pilot_set = pilot_indices(s.n_subcarriers, s.sensing_subcarriers(), pattern)?;
    let m = s.n_symbols as usize;
    let k = pilot_set.len();
    let noise_sigma = if gamma.is_infinite() { 0.0 } else { alpha / gamma.sqrt() };
    let symbols = gen_symbols(m, k, rng::derive_seed(seed, &[0]));
    let mut noise_rng = rng::stream(seed, &[1]);
    let phases: Vec<Complex64> = pilot_set
        .iter()
        .map(|&n| Complex64::from_polar(alpha, -2.0 * PI * f64::from(n) * s.delta_f * tau_true))
        .collect();
    let data = symbols
        .data
        .iter()
        .enumerate()
        .map(|(i, &a)| {
            let re: f64 = noise_rng.sample(StandardNormal);
            let im: f64 = noise_rng.sample(StandardNormal);
            a * phases[i % k] + Complex64::new(re, im) * noise_sigma
        })
        .collect();
    Ok(EchoFrame {
        samples: ComplexMatrix { rows: m, cols: k, data },
        symbols,
        pilot_set,
        alpha,
        tau_true,
        delta_f: s.delta_f,
        noise_sigma,
        n_subcarriers: s.n_subcarriers,
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DelayEstimate {
    pub tau: f64,
    pub distance: f64,
}

/// Maximum-likelihood delay estimate with known pilots.
///
/// Maximises `Re Σ conj(a) r exp(+j2π n Δf τ)` over one ambiguity period:
/// coarse grid at `1/(64 N Δf)`, parabolic interpolation of the peak, then
/// Newton steps on the exact objective. The period is `1/(g Δf)` with `g` the
/// gcd of the pilot indices (`1/Δf` for contiguous pilots); the delay is
/// reported in `[-δ, period - δ)` with `δ` one coarse grid step.
pub fn ml_delay_estimate(frame: &EchoFrame) -> Result<DelayEstimate> {
    let k = frame.pilot_set.len();
    // matched filter per subcarrier, summed over symbols
    let mut z = vec![Complex64::new(0.0, 0.0); k];
    for m in 0..frame.samples.rows {
        for (j, zj) in z.iter_mut().enumerate() {
            *zj += frame.symbols.get(m, j).conj() * frame.samples.get(m, j);
        }
    }
    if z.iter().all(|v| v.norm_sqr() == 0.0) || z.iter().any(|v| !v.is_finite()) {
        return Err(Error::DegenerateFrame);
    }
    let g = frame.pilot_set.iter().fold(0u32, |a, &n| gcd(a, n)).max(1) as usize;
    let grid = (OVERSAMPLING * frame.n_subcarriers as usize / g).max(4);
    let twiddle: Vec<Complex64> =
        (0..grid).map(|i| Complex64::from_polar(1.0, 2.0 * PI * i as f64 / grid as f64)).collect();
    let objective_at = |i: usize| -> f64 {
        z.iter().zip(&frame.pilot_set).map(|(zj, &n)| (zj * twiddle[(n as usize / g * i) % grid]).re).sum()
    };
    let values: Vec<f64> = (0..grid).map(objective_at).collect();
    let (best, _) =
        values.iter().enumerate().fold((0, f64::NEG_INFINITY), |acc, (i, &v)| if v > acc.1 { (i, v) } else { acc });
    let prev = values[(best + grid - 1) % grid];
    let next = values[(best + 1) % grid];
    let curv = prev - 2.0 * values[best] + next;
    let offset = if curv < 0.0 { (0.5 * (prev - next) / curv).clamp(-0.5, 0.5) } else { 0.0 };

    let period = 1.0 / (g as f64 * frame.delta_f);
    let step = period / grid as f64;
    let mut tau = (best as f64 + offset) * step;
    let omegas: Vec<f64> = frame.pilot_set.iter().map(|&n| 2.0 * PI * f64::from(n) * frame.delta_f).collect();
    for _ in 0..20 {
        let (mut d1, mut d2) = (0.0, 0.0);
        for (zj, &w) in z.iter().zip(&omegas) {
            let u = zj * Complex64::from_polar(1.0, w * tau);
            d1 -= w * u.im;
            d2 -= w * w * u.re;
        }
        if !(d2 < 0.0) {
            break;
        }
        let delta = (-d1 / d2).clamp(-step, step);
        tau += delta;
        if delta.abs() <= 1e-18 {
            break;
        }
    }
    let tau = (tau + step).rem_euclid(period) - step;
    Ok(DelayEstimate { tau, distance: SPEED_OF_LIGHT * tau / 2.0 })
}

fn gcd(a: u32, b: u32) -> u32 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EfficiencyRow {
    pub gamma_db: f64,
    pub d_m: f64,
    pub var_emp_m2: f64,
    /// Closed-form bound for ρN contiguous subcarriers.
    pub crlb_m2: f64,
    pub ratio: f64,
    pub trials: usize,
    pub seed: u64,
    /// Bound recomputed for the pilot set actually used.
    pub crlb_pilot_m2: f64,
    pub mean_err_m: f64,
    pub rmse_m: f64,
    pub pattern: PilotPattern,
}

/// Monte-Carlo distance errors of the ML estimator, one per trial.
pub fn estimator_errors(
    s: &Scenario,
    d: f64,
    gamma: f64,
    trials: usize,
    seed: u64,
    pattern: PilotPattern,
) -> Result<Vec<f64>> {
    (0..trials)
        .into_par_iter()
        .map(|t| {
            let frame = gen_echo(s, d, gamma, rng::derive_seed(seed, &[t as u64]), pattern)?;
            Ok(ml_delay_estimate(&frame)?.distance - d)
        })
        .collect()
}

/// Empirical variance of the ML range estimate against the bound, per `(γ, d)`.
pub fn crlb_efficiency_study(
    s: &Scenario,
    distances: &[f64],
    gammas_db: &[f64],
    trials: usize,
    seed: u64,
    pattern: PilotPattern,
) -> Result<Vec<EfficiencyRow>> {
    if trials < MIN_STUDY_TRIALS {
        return Err(Error::InvalidArgument(format!(
            "efficiency study needs at least {MIN_STUDY_TRIALS} trials, got {trials}"
        )));
    }
    let k = s.sensing_subcarriers();
    let pilots = pilot_indices(s.n_subcarriers, k, pattern)?;
    let mut rows = Vec::with_capacity(distances.len() * gammas_db.len());
    for (gi, &g_db) in gammas_db.iter().enumerate() {
        let gamma = db_to_linear(g_db);
        let crlb = crlb_exact_m2(gamma, s.delta_f, s.n_symbols, k)?;
        let crlb_pilot = crlb_for_subcarriers_m2(gamma, s.delta_f, s.n_symbols, &pilots)?;
        for (di, &d) in distances.iter().enumerate() {
            let errs = estimator_errors(s, d, gamma, trials, rng::derive_seed(seed, &[gi as u64, di as u64]), pattern)?;
            let n = errs.len() as f64;
            let mean = errs.iter().sum::<f64>() / n;
            let var = errs.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / (n - 1.0);
            let mse = errs.iter().map(|e| e * e).sum::<f64>() / n;
            rows.push(EfficiencyRow {
                gamma_db: g_db,
                d_m: d,
                var_emp_m2: var,
                crlb_m2: crlb,
                ratio: var / crlb,
                trials,
                seed,
                crlb_pilot_m2: crlb_pilot,
                mean_err_m: mean,
                rmse_m: mse.sqrt(),
                pattern,
            });
        }
    }
    Ok(rows)
}

pub const STUDY_COLUMNS: [&str; 11] = [
    "gamma_db",
    "d_m",
    "var_emp_m2",
    "crlb_m2",
    "ratio",
    "trials",
    "seed",
    "crlb_pilot_m2",
    "mean_err_m",
    "rmse_m",
    "pattern",
];

pub fn write_study_csv<W: Write>(rows: &[EfficiencyRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(STUDY_COLUMNS)?;
    for r in rows {
        w.write_record([
            r.gamma_db.to_string(),
            r.d_m.to_string(),
            r.var_emp_m2.to_string(),
            r.crlb_m2.to_string(),
            r.ratio.to_string(),
            r.trials.to_string(),
            r.seed.to_string(),
            r.crlb_pilot_m2.to_string(),
            r.mean_err_m.to_string(),
            r.rmse_m.to_string(),
            r.pattern.as_str().to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn symbols_are_unit_modulus_and_seeded() {
        let a = gen_symbols(64, 10, 5);
        assert!(a.data.iter().all(|v| (v.norm() - 1.0).abs() < 1e-15));
        let energy = a.data.iter().map(|v| v.norm_sqr()).sum::<f64>() / a.data.len() as f64;
        assert!((energy - 1.0).abs() < 1e-14);
        assert_eq!(a, gen_symbols(64, 10, 5));
        assert_ne!(a, gen_symbols(64, 10, 6));
    }

    #[test]
    fn pilot_patterns() {
        assert_eq!(pilot_indices(50, 10, PilotPattern::Contiguous).unwrap(), (0..10).collect::<Vec<_>>());
        assert_eq!(pilot_indices(50, 10, PilotPattern::Comb).unwrap(), (0..10).map(|j| 5 * j).collect::<Vec<_>>());
        assert!(matches!(pilot_indices(50, 1, PilotPattern::Comb), Err(Error::CrlbDegenerate(1))));
        assert!(pilot_indices(5, 10, PilotPattern::Contiguous).is_err());
    }

    #[test]
    fn round_trip_delay() {
        let f = gen_echo(&Scenario::default(), 150.0, 10.0, 1, PilotPattern::Contiguous).unwrap();
        assert!((f.tau_true - 1e-6).abs() < 1e-20);
        assert_eq!(f.pilot_set.len(), 10);
        assert_eq!(f.samples.rows, 64);
    }

    #[test]
    fn noiseless_frame_is_the_closed_form_signal() {
        let f = gen_echo(&Scenario::default(), 321.0, f64::INFINITY, 9, PilotPattern::Contiguous).unwrap();
        for m in 0..f.samples.rows {
            for k in 0..f.samples.cols {
                assert_eq!(f.samples.get(m, k), f.clean_sample(m, k));
            }
        }
    }

    #[test]
    fn empirical_snr_matches_request() {
        // 10^4 symbols x 10 subcarriers = 10^5 samples
        let s = Scenario { n_symbols: 10_000, ..Scenario::default() };
        let gamma = 3.7;
        let f = gen_echo(&s, 400.0, gamma, 77, PilotPattern::Contiguous).unwrap();
        let mut noise_power = 0.0;
        for m in 0..f.samples.rows {
            for k in 0..f.samples.cols {
                noise_power += (f.samples.get(m, k) - f.clean_sample(m, k)).norm_sqr();
            }
        }
        let per_dim = noise_power / (2.0 * f.samples.data.len() as f64);
        let snr = f.alpha * f.alpha / per_dim;
        assert!((snr / gamma - 1.0).abs() < 0.02, "snr {snr}");
    }

    #[test]
    fn noiseless_estimate_is_exact() {
        let s = Scenario::default();
        for (d, seed) in [(150.0, 1u64), (612.34, 3)] {
            let f = gen_echo(&s, d, f64::INFINITY, seed, PilotPattern::Contiguous).unwrap();
            let e = ml_delay_estimate(&f).unwrap();
            assert!((e.tau - f.tau_true).abs() < 1e-10, "d = {d}: {} vs {}", e.tau, f.tau_true);
        }
        let f = gen_echo_with_gain(&s, 1e-6, 0.0, f64::INFINITY, 2, PilotPattern::Contiguous).unwrap();
        let e = ml_delay_estimate(&f).unwrap();
        assert!(e.tau.abs() < 1e-10, "{}", e.tau);
    }

    #[test]
    fn noiseless_estimate_ignores_symbol_realisation() {
        let s = Scenario::default();
        let a = ml_delay_estimate(&gen_echo(&s, 444.0, f64::INFINITY, 10, PilotPattern::Contiguous).unwrap()).unwrap();
        let b = ml_delay_estimate(&gen_echo(&s, 444.0, f64::INFINITY, 11, PilotPattern::Contiguous).unwrap()).unwrap();
        assert!((a.tau - b.tau).abs() < 1e-15);
    }

    #[test]
    fn zero_frame_is_rejected() {
        let s = Scenario::default();
        let mut f = gen_echo(&s, 100.0, f64::INFINITY, 1, PilotPattern::Contiguous).unwrap();
        f.samples.data.iter_mut().for_each(|v| *v = Complex64::new(0.0, 0.0));
        assert!(matches!(ml_delay_estimate(&f), Err(Error::DegenerateFrame)));
    }

    #[test]
    fn high_snr_rmse_and_bias() {
        let s = Scenario::default();
        let gamma = 10.0;
        let crlb = crlb_exact_m2(gamma, s.delta_f, s.n_symbols, 10).unwrap();
        let errs = estimator_errors(&s, 500.0, gamma, 2000, 99, PilotPattern::Contiguous).unwrap();
        let n = errs.len() as f64;
        let mean = errs.iter().sum::<f64>() / n;
        let rmse = (errs.iter().map(|e| e * e).sum::<f64>() / n).sqrt();
        assert!(rmse <= 1.5 * crlb.sqrt(), "rmse {rmse} vs {}", crlb.sqrt());
        assert!(mean.abs() <= 0.1 * crlb.sqrt(), "bias {mean}");
    }

    #[test]
    fn doubling_symbols_halves_variance() {
        let s1 = Scenario::default();
        let s2 = Scenario { n_symbols: 128, ..Scenario::default() };
        let a = crlb_efficiency_study(&s1, &[500.0], &[10.0], 2000, 5, PilotPattern::Contiguous).unwrap();
        let b = crlb_efficiency_study(&s2, &[500.0], &[10.0], 2000, 5, PilotPattern::Contiguous).unwrap();
        assert!((a[0].crlb_m2 / b[0].crlb_m2 - 2.0).abs() < 1e-12);
        let r = b[0].ratio / a[0].ratio;
        assert!((r - 1.0).abs() < 0.2, "ratio drift {r}");
    }

    #[test]
    fn comb_pattern_reports_its_own_bound() {
        let s = Scenario::default();
        // spacing 5 folds the delay every 1 us, so stay under 150 m
        let rows = crlb_efficiency_study(&s, &[100.0], &[10.0], 500, 3, PilotPattern::Comb).unwrap();
        // and scales the sum of squared indices by 25
        assert!((rows[0].crlb_m2 / rows[0].crlb_pilot_m2 - 25.0).abs() < 1e-9);
        assert!(rows[0].var_emp_m2 < rows[0].crlb_m2);
        let r = rows[0].var_emp_m2 / rows[0].crlb_pilot_m2;
        assert!((0.8..=2.0).contains(&r), "comb efficiency {r}");
    }

    #[test]
    fn study_requires_enough_trials() {
        let s = Scenario::default();
        assert!(crlb_efficiency_study(&s, &[300.0], &[10.0], 499, 3, PilotPattern::Contiguous).is_err());
    }

    #[test]
    fn study_csv_is_deterministic() {
        let s = Scenario::default();
        let run = || {
            let rows =
                crlb_efficiency_study(&s, &[200.0, 500.0], &[0.0, 10.0], 500, 42, PilotPattern::Contiguous).unwrap();
            let mut buf = Vec::new();
            write_study_csv(&rows, &mut buf).unwrap();
            buf
        };
        let a = run();
        assert_eq!(a, run());
        let text = String::from_utf8(a).unwrap();
        assert!(text.starts_with("gamma_db,d_m,var_emp_m2,crlb_m2,ratio,trials,seed"));
        assert_eq!(text.lines().count(), 5);
    }
}
