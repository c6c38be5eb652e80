//! Named experiments. Each one turns a resolved [`Config`] and a seed into a
//! list of CSV artifacts; nothing here touches the filesystem.

use clap::ValueEnum;
use lawnsim_core::criteria::Criterion;
use lawnsim_core::montecarlo::{self, ValidationReport};
use lawnsim_core::region::{
    altitude_lengths, combine_reduction, improvement_stats, probability_map, rate_diff_map, region_for, region_rows,
    union_of, HoRegion, ImprovementAveraging, LengthAveraging,
};
use lawnsim_core::sensing::{crlb_approx_m2, crlb_exact_m2};
use lawnsim_core::units::db_to_linear;
use lawnsim_core::waveform::{crlb_efficiency_study, write_study_csv};
use lawnsim_core::Scenario;

use crate::config::Config;
use crate::error::CliError;
use crate::plots::PlotKind;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, ValueEnum)]
pub enum Experiment {
    #[value(name = "fig2-probability-maps")]
    Fig2ProbabilityMaps,
    #[value(name = "fig3-threshold-sweep")]
    Fig3ThresholdSweep,
    #[value(name = "fig4-pilot-sweep")]
    Fig4PilotSweep,
    #[value(name = "fig5-altitude-lengths")]
    Fig5AltitudeLengths,
    #[value(name = "fig6-snr-improvement")]
    Fig6SnrImprovement,
    #[value(name = "fig7-rate-diff")]
    Fig7RateDiff,
    #[value(name = "mc-validate")]
    McValidate,
    #[value(name = "crlb-oracle")]
    CrlbOracle,
}

impl Experiment {
    pub fn name(self) -> &'static str {
        match self {
            Experiment::Fig2ProbabilityMaps => "fig2-probability-maps",
            Experiment::Fig3ThresholdSweep => "fig3-threshold-sweep",
            Experiment::Fig4PilotSweep => "fig4-pilot-sweep",
            Experiment::Fig5AltitudeLengths => "fig5-altitude-lengths",
            Experiment::Fig6SnrImprovement => "fig6-snr-improvement",
            Experiment::Fig7RateDiff => "fig7-rate-diff",
            Experiment::McValidate => "mc-validate",
            Experiment::CrlbOracle => "crlb-oracle",
        }
    }
}

/// One output file: its name, contents, and how to plot it (if at all).
#[derive(Clone, Debug, PartialEq)]
pub struct Artifact {
    pub file_name: String,
    pub plot: Option<PlotKind>,
    pub bytes: Vec<u8>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Outcome {
    pub artifacts: Vec<Artifact>,
    /// `Some(false)` when a validation experiment ran and failed.
    pub validation_passed: Option<bool>,
    pub summary: Vec<String>,
}

pub struct Context<'a> {
    pub config: &'a Config,
    pub seed: u64,
    /// Overrides `montecarlo.perturbation` when set.
    pub perturbation: Option<f64>,
}

impl Context<'_> {
    fn provenance(&self, experiment: Experiment) -> String {
        format!(
            "# lawnsim {} experiment={} config_sha256={} seed={}\n",
            env!("CARGO_PKG_VERSION"),
            experiment.name(),
            self.config.hash(),
            self.seed
        )
    }
}

/// Compact, round-trippable float formatting.
pub fn num(v: f64) -> String {
    if v == 0.0 || !v.is_finite() || (1e-4..1e15).contains(&v.abs()) {
        format!("{v}")
    } else {
        format!("{v:e}")
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

struct CsvTable {
    header: Vec<&'static str>,
    rows: Vec<Vec<String>>,
}

impl CsvTable {
    fn new(header: &[&'static str]) -> Self {
        CsvTable { header: header.to_vec(), rows: Vec::new() }
    }

    fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }
}

fn with_provenance<F>(prov: &str, body: F) -> Result<Vec<u8>, CliError>
where
    F: FnOnce(&mut Vec<u8>) -> Result<(), CliError>,
{
    let mut buf = prov.as_bytes().to_vec();
    body(&mut buf)?;
    Ok(buf)
}

fn table_bytes(prov: &str, t: &CsvTable) -> Result<Vec<u8>, CliError> {
    with_provenance(prov, |buf| {
        let mut w = csv::Writer::from_writer(buf);
        w.write_record(&t.header)?;
        for r in &t.rows {
            w.write_record(r)?;
        }
        w.flush()?;
        Ok(())
    })
}

fn region_cells(r: &HoRegion) -> [String; 4] {
    [opt(r.x_lo), opt(r.x_hi), opt(r.length), r.solver_status.to_string()]
}

pub fn run(exp: Experiment, ctx: &Context) -> Result<Outcome, CliError> {
    let prov = ctx.provenance(exp);
    let cfg = ctx.config;
    let s = &cfg.scenario;
    let h = cfg.sweep.plane_altitude;
    let mut out = Outcome { artifacts: Vec::new(), validation_passed: None, summary: Vec::new() };
    let mut emit = |name: &str, plot: Option<PlotKind>, bytes: Vec<u8>| {
        out.artifacts.push(Artifact { file_name: name.to_string(), plot, bytes });
    };
    let mut summary = Vec::new();
    let mut validation_passed = None;

    match exp {
        Experiment::Fig2ProbabilityMaps => {
            let (xs, ys) = (cfg.grid.xs(), cfg.grid.ys());
            let map = probability_map(s, h, &xs, &ys)?;
            let mut t = CsvTable::new(&["x_m", "y_m", "p_rsrp", "p_sensing", "p_joint"]);
            for (x, y, p) in map.iter() {
                t.push(vec![num(x), num(y), num(p.p_rsrp), num(p.p_dist), num(p.p_joint)]);
            }
            emit("fig2_probability_maps.csv", Some(PlotKind::Heatmap), table_bytes(&prov, &t)?);

            let mut rows_t = CsvTable::new(&["criterion", "y_m", "x_lo_m", "x_hi_m", "length_m", "solver_status"]);
            let mut union_t =
                CsvTable::new(&["criterion", "x_lo_m", "x_hi_m", "length_m", "rows_used", "rows_skipped"]);
            for c in Criterion::ALL {
                let rows = region_rows(s, c, h, &ys)?;
                for r in &rows {
                    let [a, b, l, st] = region_cells(r);
                    rows_t.push(vec![c.to_string(), num(r.y), a, b, l, st]);
                }
                let u = union_of(&rows)?;
                union_t.push(vec![
                    c.to_string(),
                    num(u.x_lo_min),
                    num(u.x_hi_max),
                    num(u.length()),
                    u.rows_used.to_string(),
                    u.rows_skipped.to_string(),
                ]);
                summary.push(format!("{c}: union [{:.1}, {:.1}] m", u.x_lo_min, u.x_hi_max));
            }
            emit("fig2_regions.csv", None, table_bytes(&prov, &rows_t)?);
            emit("fig2_union.csv", None, table_bytes(&prov, &union_t)?);
        }
        Experiment::Fig3ThresholdSweep => {
            let mut t =
                CsvTable::new(&["gamma_db", "d_th_m", "criterion", "x_lo_m", "x_hi_m", "length_m", "solver_status"]);
            for &g in &cfg.sweep.gamma_db {
                for &d_th in &cfg.sweep.d_th {
                    let sc = Scenario { gamma_db: g, d_th, ..s.clone() }.validated()?;
                    for c in Criterion::ALL {
                        let r = region_for(&sc, c, 0.0, h)?;
                        let [a, b, l, st] = region_cells(&r);
                        t.push(vec![num(g), num(d_th), c.to_string(), a, b, l, st]);
                    }
                }
            }
            emit("fig3_threshold_sweep.csv", None, table_bytes(&prov, &t)?);
        }
        Experiment::Fig4PilotSweep => {
            let mut t = CsvTable::new(&["rho", "L_rsrp_m", "L_sensing_m", "L_joint_m"]);
            for &rho in &cfg.sweep.pilot_ratios {
                let sc = Scenario { pilot_ratio: rho, ..s.clone() }.validated()?;
                let mut row = vec![num(rho)];
                for c in Criterion::ALL {
                    row.push(opt(region_for(&sc, c, 0.0, h)?.length));
                }
                t.push(row);
            }
            emit("fig4_pilot_sweep.csv", Some(PlotKind::Lines), table_bytes(&prov, &t)?);
        }
        Experiment::Fig5AltitudeLengths => {
            let rows = altitude_lengths(s, Criterion::Joint, Criterion::Rsrp, &cfg.grid.ys(), &cfg.grid.altitudes)?;
            let mut t = CsvTable::new(&["h_m", "L_rsrp_m", "L_joint_m", "reduction"]);
            for r in &rows {
                t.push(vec![num(r.h_av), num(r.baseline), num(r.candidate), num(r.reduction())]);
            }
            emit("fig5_altitude_lengths.csv", Some(PlotKind::Lines), table_bytes(&prov, &t)?);
            let mut sm = CsvTable::new(&["averaging", "reduction"]);
            for (name, avg) in
                [("per-altitude", LengthAveraging::PerAltitude), ("grand-means", LengthAveraging::GrandMeans)]
            {
                let red = combine_reduction(&rows, avg);
                sm.push(vec![name.to_string(), num(red)]);
                summary.push(format!("3D length reduction ({name}): {:.2}%", 100.0 * red));
            }
            emit("fig5_summary.csv", None, table_bytes(&prov, &sm)?);
        }
        Experiment::Fig6SnrImprovement => {
            let mut t = CsvTable::new(&[
                "snr_db",
                "sensing_ratio_of_means",
                "joint_ratio_of_means",
                "sensing_mean_of_ratios",
                "joint_mean_of_ratios",
                "region_points",
            ]);
            for &g_db in &cfg.sweep.snr_db {
                let g = Some(db_to_linear(g_db));
                let sens = improvement_stats(s, Criterion::Sensing, Criterion::Rsrp, &cfg.grid, g)?;
                let joint = improvement_stats(s, Criterion::Joint, Criterion::Rsrp, &cfg.grid, g)?;
                t.push(vec![
                    num(g_db),
                    num(sens.improvement(ImprovementAveraging::RatioOfMeans)),
                    num(joint.improvement(ImprovementAveraging::RatioOfMeans)),
                    num(sens.improvement(ImprovementAveraging::MeanOfRatios)),
                    num(joint.improvement(ImprovementAveraging::MeanOfRatios)),
                    sens.points.to_string(),
                ]);
            }
            emit("fig6_snr_improvement.csv", Some(PlotKind::Lines), table_bytes(&prov, &t)?);
        }
        Experiment::Fig7RateDiff => {
            let map = rate_diff_map(s, h, &cfg.grid.xs(), &cfg.grid.ys())?;
            let mut t = CsvTable::new(&["x_m", "y_m", "rate_diff_bps"]);
            let mut best = (f64::NEG_INFINITY, 0.0, 0.0);
            for (x, y, v) in map.iter() {
                t.push(vec![num(x), num(y), num(v)]);
                if v > best.0 {
                    best = (v, x, y);
                }
            }
            emit("fig7_rate_diff.csv", Some(PlotKind::Heatmap), table_bytes(&prov, &t)?);
            let mut sm = CsvTable::new(&["max_rate_diff_bps", "x_m", "y_m"]);
            sm.push(vec![num(best.0), num(best.1), num(best.2)]);
            emit("fig7_summary.csv", None, table_bytes(&prov, &sm)?);
            summary.push(format!("max rate gain {:.3} Mbit/s at ({}, {})", best.0 / 1e6, best.1, best.2));
        }
        Experiment::McValidate => {
            let perturbation = ctx.perturbation.unwrap_or(cfg.montecarlo.perturbation);
            let report: ValidationReport = montecarlo::validate_grid(
                s,
                &montecarlo::reference_points(),
                cfg.montecarlo.trials,
                ctx.seed,
                perturbation,
            )?;
            emit(
                "mc_validate.csv",
                None,
                with_provenance(&prov, |buf| Ok(montecarlo::write_report_csv(&report, buf)?))?,
            );
            summary.push(format!(
                "{:.2}% of pairs inside their {}% interval",
                100.0 * report.pass_fraction,
                100.0 * montecarlo::CI_LEVEL
            ));
            validation_passed = Some(report.passed);
        }
        Experiment::CrlbOracle => {
            let o = &cfg.oracle;
            let rows = crlb_efficiency_study(s, &o.distances, &o.gamma_db, o.trials, ctx.seed, o.pattern)?;
            emit("crlb_oracle.csv", None, with_provenance(&prov, |buf| Ok(write_study_csv(&rows, buf)?))?);
            emit("crlb_closed_form.csv", None, table_bytes(&prov, &closed_form_table(s)?)?);
        }
    }
    out.summary = summary;
    out.validation_passed = validation_passed;
    Ok(out)
}

/// Exact and wideband-approximate bound at unit SNR for every ρN in `2..=N`.
fn closed_form_table(s: &Scenario) -> Result<CsvTable, CliError> {
    let mut t = CsvTable::new(&["rho_n", "crlb_exact_m2", "crlb_approx_m2", "rel_err"]);
    let n = s.n_subcarriers;
    for k in 2..=n {
        let exact = crlb_exact_m2(1.0, s.delta_f, s.n_symbols, k)?;
        let rho = f64::from(k) / f64::from(n);
        let approx = crlb_approx_m2(1.0, rho, s.n_symbols, n, f64::from(k) * s.delta_f)?;
        t.push(vec![k.to_string(), num(exact), num(approx), num((approx - exact).abs() / exact)]);
    }
    Ok(t)
}
