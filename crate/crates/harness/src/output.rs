//! Files written next to a report.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use digs::metrics::{histogram, HistogramSpec};

use crate::error::{HarnessError, Result};
use crate::run::{RunReport, SweepResult};

/// Decimal with 17 significant digits and no exponent.
pub fn format_decimal(v: f64) -> String {
    if !v.is_finite() {
        return v.to_string();
    }
    if v == 0.0 {
        return "0.0000000000000000".to_string();
    }
    let sci = format!("{:.16e}", v);
    let (mantissa, exp) = sci.split_once('e').expect("exponent form");
    let exp: i32 = exp.parse().expect("integer exponent");
    let (sign, mantissa) = match mantissa.strip_prefix('-') {
        Some(m) => ("-", m),
        None => ("", mantissa),
    };
    let digits: String = mantissa.chars().filter(|c| *c != '.').collect();
    let point = exp + 1;
    let body = if point <= 0 {
        format!("0.{}{}", "0".repeat((-point) as usize), digits)
    } else if point as usize >= digits.len() {
        format!("{}{}", digits, "0".repeat(point as usize - digits.len()))
    } else {
        let (int, frac) = digits.split_at(point as usize);
        format!("{int}.{frac}")
    };
    format!("{sign}{body}")
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|source| HarnessError::Io {
        path: path.display().to_string(),
        source,
    })
}

pub fn samples_csv(report: &RunReport) -> String {
    let dim = report.cells.iter().find_map(|c| c.run.samples.first().map(|p| p.dim())).unwrap_or(0);
    let mut out = String::from("sampler,seed");
    for i in 0..dim {
        write!(out, ",x{i}").unwrap();
    }
    out.push('\n');
    for cell in &report.cells {
        for p in &cell.run.samples {
            write!(out, "{},{}", cell.label, cell.seed).unwrap();
            for v in p.iter() {
                out.push(',');
                out.push_str(&format_decimal(*v));
            }
            out.push('\n');
        }
    }
    out
}

/// Per-coordinate histograms of the first seed's samples, for targets
/// with more than two dimensions.
pub fn marginals_csv(report: &RunReport, bins: usize) -> Result<String> {
    let mut out = String::from("sampler,coordinate,bin_low,bin_high,count\n");
    let first_seed = report.cells.first().map(|c| c.seed);
    for cell in report.cells.iter().filter(|c| Some(c.seed) == first_seed) {
        let s = &cell.run.samples;
        let Some(first) = s.first() else { continue };
        for i in 0..first.dim() {
            let coord: Vec<digs::Point> = s.iter().map(|p| digs::Point::new(vec![p[i]]).expect("finite")).collect();
            let lo = coord.iter().map(|p| p[0]).fold(f64::INFINITY, f64::min);
            let hi = coord.iter().map(|p| p[0]).fold(f64::NEG_INFINITY, f64::max);
            let hi = if hi > lo { hi } else { lo + 1.0 };
            let spec = HistogramSpec {
                bins: vec![bins],
                ranges: vec![(lo, hi)],
                pseudocount: 1e-12,
            };
            let counts = histogram(&coord, &spec)?;
            let w = (hi - lo) / bins as f64;
            for (b, c) in counts.iter().enumerate() {
                let a = lo + b as f64 * w;
                writeln!(out, "{},{i},{},{},{c}", cell.label, format_decimal(a), format_decimal(a + w)).unwrap();
            }
        }
    }
    Ok(out)
}

const PANEL: f64 = 240.0;
const PAD: f64 = 24.0;

/// Scatter plots of the first seed, one panel per sampler, plus exact
/// draws when given. Two-dimensional samples only.
pub fn scatter_svg(report: &RunReport, reference: &[digs::Point]) -> Option<String> {
    let first_seed = report.cells.first()?.seed;
    let mut panels: Vec<(&str, Vec<[f64; 2]>)> = Vec::new();
    if !reference.is_empty() {
        panels.push(("exact", reference.iter().map(|p| [p[0], p[1]]).collect()));
    }
    for cell in report.cells.iter().filter(|c| c.seed == first_seed) {
        if cell.run.samples.iter().any(|p| p.dim() != 2) {
            return None;
        }
        panels.push((&cell.label, cell.run.samples.iter().map(|p| [p[0], p[1]]).collect()));
    }
    let all = panels.iter().flat_map(|(_, v)| v.iter());
    let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
    for p in all {
        for k in 0..2 {
            lo[k] = lo[k].min(p[k]);
            hi[k] = hi[k].max(p[k]);
        }
    }
    if !lo[0].is_finite() {
        return None;
    }
    let span = (hi[0] - lo[0]).max(hi[1] - lo[1]).max(1e-9);
    let width = panels.len() as f64 * (PANEL + PAD) + PAD;
    let height = PANEL + 2.0 * PAD + 16.0;
    let mut svg = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width}\" height=\"{height}\" font-family=\"sans-serif\" font-size=\"12\">\n"
    );
    for (i, (label, pts)) in panels.iter().enumerate() {
        let x0 = PAD + i as f64 * (PANEL + PAD);
        let y0 = PAD + 16.0;
        writeln!(svg, "<text x=\"{x0}\" y=\"{}\">{label}</text>", PAD + 8.0).unwrap();
        writeln!(
            svg,
            "<rect x=\"{x0}\" y=\"{y0}\" width=\"{PANEL}\" height=\"{PANEL}\" fill=\"none\" stroke=\"#888\"/>"
        )
        .unwrap();
        for p in pts {
            let cx = x0 + (p[0] - lo[0]) / span * PANEL;
            let cy = y0 + PANEL - (p[1] - lo[1]) / span * PANEL;
            writeln!(svg, "<circle cx=\"{cx:.2}\" cy=\"{cy:.2}\" r=\"1.2\" fill=\"#1f5fa8\" fill-opacity=\"0.5\"/>").unwrap();
        }
    }
    svg.push_str("</svg>\n");
    Some(svg)
}

/// Writes `report.json`, `samples.csv` and either `scatter.svg` (2-D) or
/// `marginals.csv` into `dir`.
pub fn write_report(report: &RunReport, reference: &[digs::Point], dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|source| HarnessError::Io {
        path: dir.display().to_string(),
        source,
    })?;
    let json = serde_json::to_string_pretty(report).map_err(|e| HarnessError::config(e.to_string()))?;
    write(&dir.join("report.json"), &(json + "\n"))?;
    write(&dir.join("samples.csv"), &samples_csv(report))?;
    match scatter_svg(report, reference) {
        Some(svg) => write(&dir.join("scatter.svg"), &svg)?,
        None => write(&dir.join("marginals.csv"), &marginals_csv(report, 40)?)?,
    }
    Ok(())
}

pub fn sweep_summary_csv(result: &SweepResult) -> String {
    let mut out = format!("{},sampler,mmd_mean,mmd_stderr,n_seeds,calls_per_seed\n", result.param);
    for row in result.rows() {
        let (m, s, n) = match row.mmd {
            Some(st) => (format_decimal(st.mean), format_decimal(st.stderr), st.n.to_string()),
            None => (String::new(), String::new(), "0".to_string()),
        };
        writeln!(out, "{},{},{m},{s},{n},{}", row.value, row.label, row.calls_per_seed).unwrap();
    }
    out
}
