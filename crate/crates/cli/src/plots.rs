//! Deterministic SVG rendering of experiment CSVs.
//!
//! Heatmaps expect `x_m` and `y_m` columns and draw one panel per remaining
//! numeric column. Line charts take the first column as the abscissa and draw
//! one panel per remaining numeric column. Rendering never recomputes
//! anything; it only reads the CSV.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::ValueEnum;

use crate::error::CliError;

/// Heatmaps are decimated to at most this many cells per axis.
pub const MAX_CELLS: usize = 120;

const PANEL_W: f64 = 360.0;
const PANEL_H: f64 = 260.0;
const MARGIN: f64 = 50.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, ValueEnum)]
pub enum PlotKind {
    Heatmap,
    Lines,
}

struct Frame {
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl Frame {
    fn parse(bytes: &[u8]) -> Result<Self, CliError> {
        let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(bytes);
        let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
        let rows = rdr
            .records()
            .map(|r| r.map(|r| r.iter().map(str::to_string).collect()))
            .collect::<Result<Vec<Vec<String>>, _>>()?;
        if header.iter().all(String::is_empty) || rows.is_empty() {
            return Err(CliError::Plot("CSV has no data rows".into()));
        }
        Ok(Frame { header, rows })
    }

    fn column(&self, name: &str) -> Result<usize, CliError> {
        self.header.iter().position(|h| h == name).ok_or_else(|| CliError::Plot(format!("missing column `{name}`")))
    }

    fn numbers(&self, col: usize) -> Option<Vec<f64>> {
        self.rows.iter().map(|r| r.get(col)?.parse::<f64>().ok()).collect()
    }

    /// Columns (other than `skip`) whose every cell parses as a number.
    fn numeric_columns(&self, skip: &[usize]) -> Vec<(String, Vec<f64>)> {
        (0..self.header.len())
            .filter(|c| !skip.contains(c))
            .filter_map(|c| Some((self.header[c].clone(), self.numbers(c)?)))
            .collect()
    }
}

/// Five-stop perceptual ramp, `t` in `[0, 1]`.
fn color(t: f64) -> String {
    const STOPS: [(f64, f64, f64); 5] =
        [(68.0, 1.0, 84.0), (59.0, 82.0, 139.0), (33.0, 145.0, 140.0), (94.0, 201.0, 98.0), (253.0, 231.0, 37.0)];
    let t = if t.is_finite() { t.clamp(0.0, 1.0) } else { 0.0 };
    let pos = t * (STOPS.len() - 1) as f64;
    let i = (pos.floor() as usize).min(STOPS.len() - 2);
    let f = pos - i as f64;
    let (a, b) = (STOPS[i], STOPS[i + 1]);
    let mix = |u: f64, v: f64| (u + f * (v - u)).round() as u8;
    format!("#{:02x}{:02x}{:02x}", mix(a.0, b.0), mix(a.1, b.1), mix(a.2, b.2))
}

fn range(v: &[f64]) -> (f64, f64) {
    let lo = v.iter().copied().filter(|x| x.is_finite()).fold(f64::INFINITY, f64::min);
    let hi = v.iter().copied().filter(|x| x.is_finite()).fold(f64::NEG_INFINITY, f64::max);
    if !lo.is_finite() {
        (0.0, 1.0)
    } else if hi > lo {
        (lo, hi)
    } else {
        (lo - 0.5, lo + 0.5)
    }
}

fn sorted_unique(v: &[f64]) -> Vec<f64> {
    let mut out = v.to_vec();
    out.sort_by(f64::total_cmp);
    out.dedup();
    out
}

fn decimate(v: &[f64]) -> Vec<f64> {
    let stride = v.len().div_ceil(MAX_CELLS).max(1);
    v.iter().step_by(stride).copied().collect()
}

fn svg_open(w: f64, h: f64) -> String {
    format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w:.0}\" height=\"{h:.0}\" viewBox=\"0 0 {w:.0} {h:.0}\" font-family=\"sans-serif\" font-size=\"11\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
    )
}

fn axes(svg: &mut String, ox: f64, oy: f64, title: &str, xr: (f64, f64), yr: (f64, f64), (xl, yl): (&str, &str)) {
    let _ = writeln!(
        svg,
        "<rect x=\"{ox:.1}\" y=\"{oy:.1}\" width=\"{PANEL_W:.1}\" height=\"{PANEL_H:.1}\" fill=\"none\" stroke=\"black\"/>"
    );
    let _ = writeln!(
        svg,
        "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"middle\" font-size=\"13\">{title}</text>",
        ox + PANEL_W / 2.0,
        oy - 8.0
    );
    let _ = writeln!(
        svg,
        "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"middle\">{xl}</text>",
        ox + PANEL_W / 2.0,
        oy + PANEL_H + 30.0
    );
    let _ = writeln!(
        svg,
        "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"middle\" transform=\"rotate(-90 {:.1} {:.1})\">{yl}</text>",
        ox - 36.0,
        oy + PANEL_H / 2.0,
        ox - 36.0,
        oy + PANEL_H / 2.0
    );
    for (v, x) in [(xr.0, ox), (xr.1, ox + PANEL_W)] {
        let _ = writeln!(
            svg,
            "<text x=\"{x:.1}\" y=\"{:.1}\" text-anchor=\"middle\">{}</text>",
            oy + PANEL_H + 14.0,
            tick(v)
        );
    }
    for (v, y) in [(yr.0, oy + PANEL_H), (yr.1, oy)] {
        let _ =
            writeln!(svg, "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"end\">{}</text>", ox - 4.0, y + 4.0, tick(v));
    }
}

fn tick(v: f64) -> String {
    if v != 0.0 && (v.abs() < 1e-2 || v.abs() >= 1e5) {
        format!("{v:.2e}")
    } else {
        format!("{v:.2}")
    }
}

fn heatmap(f: &Frame) -> Result<String, CliError> {
    let (cx, cy) = (f.column("x_m")?, f.column("y_m")?);
    let xs = f.numbers(cx).ok_or_else(|| CliError::Plot("column `x_m` is not numeric".into()))?;
    let ys = f.numbers(cy).ok_or_else(|| CliError::Plot("column `y_m` is not numeric".into()))?;
    let panels = f.numeric_columns(&[cx, cy]);
    if panels.is_empty() {
        return Err(CliError::Plot("no value column to draw".into()));
    }
    let (ux, uy) = (decimate(&sorted_unique(&xs)), decimate(&sorted_unique(&ys)));
    let keep_x: BTreeSet<u64> = ux.iter().map(|v| v.to_bits()).collect();
    let keep_y: BTreeSet<u64> = uy.iter().map(|v| v.to_bits()).collect();
    let (xr, yr) = (range(&ux), range(&uy));
    let cw = PANEL_W / ux.len() as f64;
    let ch = PANEL_H / uy.len() as f64;
    let idx = |v: f64, axis: &[f64]| axis.binary_search_by(|a| a.total_cmp(&v)).ok();

    let width = panels.len() as f64 * (PANEL_W + 2.0 * MARGIN);
    let mut svg = svg_open(width, PANEL_H + 2.0 * MARGIN);
    for (p, (name, vals)) in panels.iter().enumerate() {
        let ox = MARGIN + p as f64 * (PANEL_W + 2.0 * MARGIN);
        let oy = MARGIN;
        let vr = range(vals);
        let _ = writeln!(svg, "<g shape-rendering=\"crispEdges\">");
        for ((&x, &y), &v) in xs.iter().zip(&ys).zip(vals) {
            if !keep_x.contains(&x.to_bits()) || !keep_y.contains(&y.to_bits()) {
                continue;
            }
            let (Some(ix), Some(iy)) = (idx(x, &ux), idx(y, &uy)) else { continue };
            let _ = writeln!(
                svg,
                "<rect x=\"{:.2}\" y=\"{:.2}\" width=\"{:.2}\" height=\"{:.2}\" fill=\"{}\"/>",
                ox + ix as f64 * cw,
                oy + PANEL_H - (iy + 1) as f64 * ch,
                cw,
                ch,
                color((v - vr.0) / (vr.1 - vr.0))
            );
        }
        let _ = writeln!(svg, "</g>");
        axes(&mut svg, ox, oy, &format!("{name} [{}, {}]", tick(vr.0), tick(vr.1)), xr, yr, ("x_m", "y_m"));
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}

fn lines(f: &Frame) -> Result<String, CliError> {
    let x_name = f.header[0].clone();
    let xs = f.numbers(0).ok_or_else(|| CliError::Plot(format!("column `{x_name}` is not numeric")))?;
    let series = f.numeric_columns(&[0]);
    if series.is_empty() {
        return Err(CliError::Plot("no numeric series to draw".into()));
    }
    let xr = range(&xs);
    let height = series.len() as f64 * (PANEL_H + 2.0 * MARGIN);
    let mut svg = svg_open(PANEL_W + 2.0 * MARGIN, height);
    for (p, (name, vals)) in series.iter().enumerate() {
        let ox = MARGIN;
        let oy = MARGIN + p as f64 * (PANEL_H + 2.0 * MARGIN);
        let yr = range(vals);
        let sx = |x: f64| ox + (x - xr.0) / (xr.1 - xr.0) * PANEL_W;
        let sy = |y: f64| oy + PANEL_H - (y - yr.0) / (yr.1 - yr.0) * PANEL_H;
        let pts: Vec<String> = xs
            .iter()
            .zip(vals)
            .filter(|(x, y)| x.is_finite() && y.is_finite())
            .map(|(&x, &y)| format!("{:.2},{:.2}", sx(x), sy(y)))
            .collect();
        let _ = writeln!(
            svg,
            "<polyline fill=\"none\" stroke=\"#3b528b\" stroke-width=\"1.5\" points=\"{}\"/>",
            pts.join(" ")
        );
        for pt in &pts {
            let (a, b) = pt.split_once(',').unwrap_or(("0", "0"));
            let _ = writeln!(svg, "<circle cx=\"{a}\" cy=\"{b}\" r=\"2.5\" fill=\"#21918c\"/>");
        }
        axes(&mut svg, ox, oy, name, xr, yr, (&x_name, name));
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}

/// Render CSV bytes to an SVG document.
pub fn render(csv: &[u8], kind: PlotKind) -> Result<String, CliError> {
    let frame = Frame::parse(csv)?;
    match kind {
        PlotKind::Heatmap => heatmap(&frame),
        PlotKind::Lines => lines(&frame),
    }
}

/// Render `csv` next to `out_dir` as `<stem>.svg`. Nothing is written on error.
pub fn emit_plotdata(csv: &Path, kind: PlotKind, out_dir: &Path) -> Result<PathBuf, CliError> {
    let bytes = fs::read(csv)?;
    let svg = render(&bytes, kind)?;
    let stem = csv.file_stem().and_then(|s| s.to_str()).unwrap_or("plot");
    fs::create_dir_all(out_dir)?;
    let path = out_dir.join(format!("{stem}.svg"));
    fs::write(&path, svg)?;
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;

    const MAP: &str = "# provenance\nx_m,y_m,p_rsrp,p_sensing,p_joint\n0,0,0.1,0.2,0.3\n0,5,0.2,0.3,0.4\n5,0,0.3,0.4,0.5\n5,5,0.4,0.5,0.6\n";

    #[test]
    fn heatmap_has_one_panel_per_value_column() {
        let svg = render(MAP.as_bytes(), PlotKind::Heatmap).unwrap();
        for name in ["p_rsrp", "p_sensing", "p_joint"] {
            assert!(svg.contains(name), "{name}");
        }
        assert_eq!(svg.matches("fill=\"#").count(), 12);
    }

    #[test]
    fn rendering_is_deterministic() {
        assert_eq!(
            render(MAP.as_bytes(), PlotKind::Heatmap).unwrap(),
            render(MAP.as_bytes(), PlotKind::Heatmap).unwrap()
        );
    }

    #[test]
    fn empty_and_header_only_inputs_fail() {
        assert!(render(b"", PlotKind::Lines).is_err());
        assert!(render(b"# only a comment\nh_m,L\n", PlotKind::Lines).is_err());
    }

    #[test]
    fn missing_column_is_named() {
        let err = render(b"x_m,v\n1,2\n", PlotKind::Heatmap).unwrap_err().to_string();
        assert!(err.contains("y_m"), "{err}");
    }

    #[test]
    fn lines_skip_text_columns() {
        let svg = render(b"rho,name,L\n0.1,a,3\n0.2,b,4\n", PlotKind::Lines).unwrap();
        assert_eq!(svg.matches("<polyline").count(), 1);
    }

    #[test]
    fn large_maps_are_decimated() {
        let mut csv = String::from("x_m,y_m,v\n");
        for i in 0..401 {
            for j in 0..401 {
                let _ = writeln!(csv, "{},{},{}", i * 5, j * 5, i + j);
            }
        }
        let svg = render(csv.as_bytes(), PlotKind::Heatmap).unwrap();
        let cells = svg.matches("<rect x=").count() - 1;
        assert!(cells <= MAX_CELLS * MAX_CELLS, "{cells}");
    }

    #[test]
    fn ramp_endpoints() {
        assert_eq!(color(0.0), "#440154");
        assert_eq!(color(1.0), "#fde725");
    }
}
