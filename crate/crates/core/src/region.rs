//! Handover-region machinery.
//!
//! For a fixed lateral offset `y` and altitude `h`, the activation probability
//! of each criterion is a function `f(x)` along the inter-site axis. The
//! handover region is `[f⁻¹(0.1), f⁻¹(0.9)]` and its width is the region length.
//! Everything behind the plane maps, altitude sweeps and rate maps lives here.

use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::criteria::{self, Criterion, HoProbabilities, PointEvaluation};
use crate::error::{Error, Result};
use crate::scenario::{DronePosition, Scenario};

/// Lower edge of the handover region, probability.
pub const LEVEL_LO: f64 = 0.1;
/// Upper edge of the handover region, probability.
pub const LEVEL_HI: f64 = 0.9;
/// Required residual `|P(x*) - level|` of a bisection solve.
pub const BOUNDARY_TOL: f64 = 1e-6;
/// Points of the monotonicity pre-scan.
pub const PRESCAN_POINTS: usize = 201;
/// Resolution of the grid-fallback crossing search, m.
pub const FALLBACK_STEP: f64 = 1.0;

const MONOTONE_SLACK: f64 = 1e-12;
const X_TOL: f64 = 1e-9;

/// Evaluation grid over the plane and the altitude sweep.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalGrid {
    pub x_min: f64,
    pub x_max: f64,
    pub x_step: f64,
    pub y_min: f64,
    pub y_max: f64,
    pub y_step: f64,
    pub altitudes: Vec<f64>,
}

impl Default for EvalGrid {
    fn default() -> Self {
        EvalGrid {
            x_min: -1000.0,
            x_max: 1000.0,
            x_step: 5.0,
            y_min: -1000.0,
            y_max: 1000.0,
            y_step: 5.0,
            altitudes: (0..10).map(|i| 120.0 + 20.0 * f64::from(i)).collect(),
        }
    }
}

impl EvalGrid {
    pub fn xs(&self) -> Vec<f64> {
        axis(self.x_min, self.x_max, self.x_step)
    }

    pub fn ys(&self) -> Vec<f64> {
        axis(self.y_min, self.y_max, self.y_step)
    }

    pub fn check(&self) -> Result<()> {
        for (name, lo, hi, step) in
            [("x", self.x_min, self.x_max, self.x_step), ("y", self.y_min, self.y_max, self.y_step)]
        {
            if !(step > 0.0) || !(hi >= lo) || !lo.is_finite() || !hi.is_finite() {
                return Err(Error::InvalidArgument(format!("grid axis {name}: need finite min <= max and step > 0")));
            }
        }
        if self.altitudes.is_empty() {
            return Err(Error::InvalidArgument("grid has no altitudes".into()));
        }
        Ok(())
    }
}

/// Inclusive axis `min, min + step, ...` up to `max`, without accumulated drift.
pub fn axis(min: f64, max: f64, step: f64) -> Vec<f64> {
    if !(step > 0.0) || max < min {
        return Vec::new();
    }
    let n = ((max - min) / step + 1e-9).floor() as usize + 1;
    (0..n).map(|i| min + step * i as f64).collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolverStatus {
    Bisection,
    GridFallback,
    /// The level is not reached inside `[-x_BS, x_BS]`.
    Unbounded,
}

impl fmt::Display for SolverStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SolverStatus::Bisection => "bisection",
            SolverStatus::GridFallback => "grid-fallback",
            SolverStatus::Unbounded => "unbounded",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Boundary {
    pub x: Option<f64>,
    pub status: SolverStatus,
}

/// Find `x` in `[lo, hi]` with `f(x) = level`.
///
/// A pre-scan checks `f` for monotonicity. Monotone functions are bracketed
/// from the scan and bisected; otherwise the first upward crossing on a
/// [`FALLBACK_STEP`] grid is returned and flagged.
pub fn solve_level<F>(f: F, lo: f64, hi: f64, level: f64) -> Result<Boundary>
where
    F: Fn(f64) -> Result<f64>,
{
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::InvalidArgument(format!("level {level} outside (0, 1)")));
    }
    let xs: Vec<f64> = (0..PRESCAN_POINTS).map(|i| lo + (hi - lo) * i as f64 / (PRESCAN_POINTS - 1) as f64).collect();
    let ps = xs.iter().map(|&x| f(x)).collect::<Result<Vec<_>>>()?;
    let monotone = ps.windows(2).all(|w| w[1] + MONOTONE_SLACK >= w[0]);
    if !monotone {
        return grid_fallback(&f, lo, hi, level);
    }
    let unbounded = Boundary { x: None, status: SolverStatus::Unbounded };
    if ps[0] > level || ps[PRESCAN_POINTS - 1] < level {
        return Ok(unbounded);
    }
    let i = ps.windows(2).position(|w| w[0] <= level && level <= w[1]).unwrap_or(0);
    let (mut a, mut b) = (xs[i], xs[i + 1]);
    if ps[i] == level {
        return Ok(Boundary { x: Some(a), status: SolverStatus::Bisection });
    }
    for _ in 0..200 {
        if b - a <= X_TOL * (1.0 + a.abs().max(b.abs())) {
            break;
        }
        let mid = 0.5 * (a + b);
        if f(mid)? < level {
            a = mid;
        } else {
            b = mid;
        }
    }
    let x = 0.5 * (a + b);
    Ok(Boundary { x: Some(x), status: SolverStatus::Bisection })
}

fn grid_fallback<F>(f: &F, lo: f64, hi: f64, level: f64) -> Result<Boundary>
where
    F: Fn(f64) -> Result<f64>,
{
    let n = ((hi - lo) / FALLBACK_STEP).ceil() as usize;
    let mut x0 = lo;
    let mut p0 = f(x0)?;
    for i in 1..=n {
        let x1 = (lo + FALLBACK_STEP * i as f64).min(hi);
        let p1 = f(x1)?;
        if p0 < level && level <= p1 {
            let x = x0 + (x1 - x0) * (level - p0) / (p1 - p0);
            return Ok(Boundary { x: Some(x), status: SolverStatus::GridFallback });
        }
        x0 = x1;
        p0 = p1;
    }
    Ok(Boundary { x: None, status: SolverStatus::Unbounded })
}

/// Position along the axis where `criterion` reaches `level`, at offset `y` and altitude `h`.
pub fn solve_boundary(s: &Scenario, criterion: Criterion, y: f64, h: f64, level: f64) -> Result<Boundary> {
    let x_bs = s.bs_half_spacing;
    solve_level(|x| criteria::probability(s, criterion, &DronePosition::new(x, y, h)), -x_bs, x_bs, level)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HoRegion {
    pub criterion: Criterion,
    pub y: f64,
    pub h_av: f64,
    /// Where the probability crosses 0.1.
    pub x_lo: Option<f64>,
    /// Where the probability crosses 0.9.
    pub x_hi: Option<f64>,
    pub length: Option<f64>,
    /// Worst status of the two boundary solves.
    pub solver_status: SolverStatus,
}

impl HoRegion {
    pub fn is_bounded(&self) -> bool {
        self.length.is_some()
    }
}

pub fn region_for(s: &Scenario, criterion: Criterion, y: f64, h: f64) -> Result<HoRegion> {
    let lo = solve_boundary(s, criterion, y, h, LEVEL_LO)?;
    let hi = solve_boundary(s, criterion, y, h, LEVEL_HI)?;
    let length = match (lo.x, hi.x) {
        (Some(a), Some(b)) => Some(b - a),
        _ => None,
    };
    Ok(HoRegion { criterion, y, h_av: h, x_lo: lo.x, x_hi: hi.x, length, solver_status: lo.status.max(hi.status) })
}

/// One region per `y`, in the order of `ys`.
pub fn region_rows(s: &Scenario, criterion: Criterion, h: f64, ys: &[f64]) -> Result<Vec<HoRegion>> {
    ys.par_iter().map(|&y| region_for(s, criterion, y, h)).collect()
}

/// Extent of the union of the per-row regions over the plane.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct UnionRegion {
    pub x_lo_min: f64,
    pub x_hi_max: f64,
    pub rows_used: usize,
    pub rows_skipped: usize,
}

impl UnionRegion {
    pub fn length(&self) -> f64 {
        self.x_hi_max - self.x_lo_min
    }
}

pub fn union_of(rows: &[HoRegion]) -> Result<UnionRegion> {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    let mut used = 0;
    for r in rows {
        if let (Some(a), Some(b)) = (r.x_lo, r.x_hi) {
            lo = lo.min(a);
            hi = hi.max(b);
            used += 1;
        }
    }
    if used == 0 {
        return Err(Error::AllRowsUnbounded);
    }
    Ok(UnionRegion { x_lo_min: lo, x_hi_max: hi, rows_used: used, rows_skipped: rows.len() - used })
}

pub fn plane_union_region(s: &Scenario, criterion: Criterion, h: f64, ys: &[f64]) -> Result<UnionRegion> {
    nonempty(ys, "y grid")?;
    union_of(&region_rows(s, criterion, h, ys)?)
}

/// Arithmetic mean of the finite per-row lengths.
pub fn mean_length(rows: &[HoRegion]) -> Result<f64> {
    let lengths: Vec<f64> = rows.iter().filter_map(|r| r.length).collect();
    if lengths.is_empty() {
        return Err(Error::AllRowsUnbounded);
    }
    Ok(lengths.iter().sum::<f64>() / lengths.len() as f64)
}

pub fn avg_region_length(s: &Scenario, criterion: Criterion, h: f64, ys: &[f64]) -> Result<f64> {
    nonempty(ys, "y grid")?;
    mean_length(&region_rows(s, criterion, h, ys)?)
}

fn nonempty(v: &[f64], what: &str) -> Result<()> {
    if v.is_empty() {
        return Err(Error::InvalidArgument(format!("{what} is empty")));
    }
    Ok(())
}

/// How per-altitude lengths are combined into a 3D reduction.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LengthAveraging {
    /// Mean over altitudes of `1 - L̄_cand(h) / L̄_base(h)`.
    #[default]
    PerAltitude,
    /// `1 - mean_h L̄_cand / mean_h L̄_base`.
    GrandMeans,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AltitudeLengths {
    pub h_av: f64,
    pub candidate: f64,
    pub baseline: f64,
}

impl AltitudeLengths {
    pub fn reduction(&self) -> f64 {
        1.0 - self.candidate / self.baseline
    }
}

/// Plane-averaged lengths of two criteria at each altitude.
pub fn altitude_lengths(
    s: &Scenario,
    candidate: Criterion,
    baseline: Criterion,
    ys: &[f64],
    altitudes: &[f64],
) -> Result<Vec<AltitudeLengths>> {
    nonempty(ys, "y grid")?;
    nonempty(altitudes, "altitude grid")?;
    altitudes
        .iter()
        .map(|&h| {
            Ok(AltitudeLengths {
                h_av: h,
                candidate: avg_region_length(s, candidate, h, ys)?,
                baseline: avg_region_length(s, baseline, h, ys)?,
            })
        })
        .collect()
}

pub fn combine_reduction(rows: &[AltitudeLengths], averaging: LengthAveraging) -> f64 {
    let n = rows.len() as f64;
    match averaging {
        LengthAveraging::PerAltitude => rows.iter().map(AltitudeLengths::reduction).sum::<f64>() / n,
        LengthAveraging::GrandMeans => {
            let c = rows.iter().map(|r| r.candidate).sum::<f64>();
            let b = rows.iter().map(|r| r.baseline).sum::<f64>();
            1.0 - c / b
        }
    }
}

pub fn length_reduction(
    s: &Scenario,
    candidate: Criterion,
    baseline: Criterion,
    ys: &[f64],
    altitudes: &[f64],
    averaging: LengthAveraging,
) -> Result<f64> {
    let rows = altitude_lengths(s, candidate, baseline, ys, altitudes)?;
    Ok(combine_reduction(&rows, averaging))
}

/// Average region-length reduction of the joint rule over the RSRP rule in 3D.
pub fn reduction_3d(s: &Scenario, ys: &[f64], altitudes: &[f64]) -> Result<f64> {
    length_reduction(s, Criterion::Joint, Criterion::Rsrp, ys, altitudes, LengthAveraging::PerAltitude)
}

/// How relative activation gains are averaged over the baseline region.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ImprovementAveraging {
    /// `(mean P_cand - mean P_base) / mean P_base`.
    #[default]
    RatioOfMeans,
    /// `mean((P_cand - P_base) / P_base)`.
    MeanOfRatios,
}

/// Sums over the points of a baseline 3D region.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct ImprovementStats {
    pub points: usize,
    pub sum_baseline: f64,
    pub sum_candidate: f64,
    pub sum_relative: f64,
}

impl ImprovementStats {
    fn merge(self, o: Self) -> Self {
        ImprovementStats {
            points: self.points + o.points,
            sum_baseline: self.sum_baseline + o.sum_baseline,
            sum_candidate: self.sum_candidate + o.sum_candidate,
            sum_relative: self.sum_relative + o.sum_relative,
        }
    }

    pub fn improvement(&self, averaging: ImprovementAveraging) -> f64 {
        match averaging {
            ImprovementAveraging::RatioOfMeans => (self.sum_candidate - self.sum_baseline) / self.sum_baseline,
            ImprovementAveraging::MeanOfRatios => self.sum_relative / self.points as f64,
        }
    }
}

/// Accumulate candidate vs baseline probabilities over every grid point whose
/// baseline probability lies in `[0.1, 0.9]`.
pub fn improvement_stats(
    s: &Scenario,
    candidate: Criterion,
    baseline: Criterion,
    grid: &EvalGrid,
    gamma_override: Option<f64>,
) -> Result<ImprovementStats> {
    grid.check()?;
    let s = Scenario { gamma_override, ..s.clone() };
    let xs = grid.xs();
    let rows: Vec<(f64, f64)> =
        grid.altitudes.iter().flat_map(|&h| grid.ys().into_iter().map(move |y| (h, y))).collect();
    let per_row = rows
        .par_iter()
        .map(|&(h, y)| {
            let mut acc = ImprovementStats::default();
            for &x in &xs {
                let p = criteria::ho_probabilities(&s, &DronePosition::new(x, y, h))?;
                let base = p.get(baseline);
                if (LEVEL_LO..=LEVEL_HI).contains(&base) {
                    let cand = p.get(candidate);
                    acc.points += 1;
                    acc.sum_baseline += base;
                    acc.sum_candidate += cand;
                    acc.sum_relative += (cand - base) / base;
                }
            }
            Ok(acc)
        })
        .collect::<Result<Vec<_>>>()?;
    let total = per_row.into_iter().fold(ImprovementStats::default(), ImprovementStats::merge);
    if total.points == 0 {
        return Err(Error::InvalidArgument("baseline handover region is empty on this grid".into()));
    }
    Ok(total)
}

pub fn activation_improvement(
    s: &Scenario,
    candidate: Criterion,
    baseline: Criterion,
    grid: &EvalGrid,
    gamma_override: Option<f64>,
    averaging: ImprovementAveraging,
) -> Result<f64> {
    Ok(improvement_stats(s, candidate, baseline, grid, gamma_override)?.improvement(averaging))
}

/// Values on an `xs × ys` grid, stored x-major (`values[ix * ys.len() + iy]`).
#[derive(Clone, Debug, PartialEq)]
pub struct PlaneMap<T> {
    pub h_av: f64,
    pub xs: Vec<f64>,
    pub ys: Vec<f64>,
    pub values: Vec<T>,
}

impl<T: Copy> PlaneMap<T> {
    pub fn at(&self, ix: usize, iy: usize) -> T {
        self.values[ix * self.ys.len() + iy]
    }

    /// `(x, y, value)` in storage order.
    pub fn iter(&self) -> impl Iterator<Item = (f64, f64, T)> + '_ {
        let ny = self.ys.len();
        self.values.iter().enumerate().map(move |(i, &v)| (self.xs[i / ny], self.ys[i % ny], v))
    }
}

fn plane_map<T, F>(h: f64, xs: &[f64], ys: &[f64], f: F) -> Result<PlaneMap<T>>
where
    T: Send,
    F: Fn(&DronePosition) -> Result<T> + Sync,
{
    nonempty(xs, "x grid")?;
    nonempty(ys, "y grid")?;
    let values = xs
        .par_iter()
        .map(|&x| ys.iter().map(|&y| f(&DronePosition::new(x, y, h))).collect::<Result<Vec<T>>>())
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .flatten()
        .collect();
    Ok(PlaneMap { h_av: h, xs: xs.to_vec(), ys: ys.to_vec(), values })
}

/// All three activation probabilities over the plane at altitude `h`.
pub fn probability_map(s: &Scenario, h: f64, xs: &[f64], ys: &[f64]) -> Result<PlaneMap<HoProbabilities>> {
    plane_map(h, xs, ys, |p| criteria::ho_probabilities(s, p))
}

/// `R_eff(candidate) - R_eff(baseline)` per point.
pub fn rate_diff_map_between(
    s: &Scenario,
    candidate: Criterion,
    baseline: Criterion,
    h: f64,
    xs: &[f64],
    ys: &[f64],
) -> Result<PlaneMap<f64>> {
    plane_map(h, xs, ys, |p| {
        let e: PointEvaluation = criteria::evaluate_point(s, p)?;
        Ok(e.effective_rate(candidate) - e.effective_rate(baseline))
    })
}

/// Joint minus RSRP effective rate over the plane.
pub fn rate_diff_map(s: &Scenario, h: f64, xs: &[f64], ys: &[f64]) -> Result<PlaneMap<f64>> {
    rate_diff_map_between(s, Criterion::Joint, Criterion::Rsrp, h, xs, ys)
}
