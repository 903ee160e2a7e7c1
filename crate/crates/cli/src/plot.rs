//! Learning curves as a standalone SVG: per group, the mean over seeds and
//! a 95% confidence band.

use std::collections::BTreeMap;
use std::fmt::Write;

use anyhow::{bail, Result};
use sica_core::trainer::MetricsRow;

pub const COLUMNS: [&str; 10] = [
    "return",
    "optimal_return",
    "L_TD",
    "L_Align",
    "sigma",
    "alpha",
    "epsilon",
    "grad_norm",
    "eval_return_centralized",
    "eval_return_decentralized",
];

pub fn column(row: &MetricsRow, name: &str) -> Result<Option<f64>> {
    Ok(match name {
        "return" => Some(row.ret),
        "optimal_return" => row.optimal_return,
        "L_TD" => Some(row.l_td),
        "L_Align" => Some(row.l_align),
        "sigma" => Some(row.sigma),
        "alpha" => Some(row.alpha),
        "epsilon" => Some(row.epsilon),
        "grad_norm" => Some(row.grad_norm),
        "eval_return_centralized" => row.eval_return_centralized,
        "eval_return_decentralized" => row.eval_return_decentralized,
        _ => bail!("unknown column `{name}`; expected one of {}", COLUMNS.join(", ")),
    })
}

/// Two-sided 97.5% Student-t quantile for `df` degrees of freedom.
pub fn t_quantile(df: usize) -> f64 {
    const T: [f64; 30] = [
        12.706, 4.303, 3.182, 2.776, 2.571, 2.447, 2.365, 2.306, 2.262, 2.228, 2.201, 2.179, 2.160, 2.145, 2.131, 2.120,
        2.110, 2.101, 2.093, 2.086, 2.080, 2.074, 2.069, 2.064, 2.060, 2.056, 2.052, 2.048, 2.045, 2.042,
    ];
    match df {
        0 => 0.0,
        d if d <= 30 => T[d - 1],
        _ => 1.960,
    }
}

/// `(step, mean, half-width)` over the runs of one group, at the steps
/// where every run has a value.
pub fn band(runs: &[Vec<MetricsRow>], name: &str) -> Result<Vec<(u64, f64, f64)>> {
    let mut by_step: BTreeMap<u64, Vec<f64>> = BTreeMap::new();
    for run in runs {
        for row in run {
            if let Some(v) = column(row, name)? {
                by_step.entry(row.step).or_default().push(v);
            }
        }
    }
    Ok(by_step
        .into_iter()
        .filter(|(_, v)| v.len() == runs.len())
        .map(|(step, v)| {
            let n = v.len() as f64;
            let mean = v.iter().sum::<f64>() / n;
            let half = if v.len() > 1 {
                let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
                t_quantile(v.len() - 1) * (var / n).sqrt()
            } else {
                0.0
            };
            (step, mean, half)
        })
        .collect())
}

const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];

/// Renders `groups` (label, runs) for one column.
pub fn plot_svg(groups: &[(String, Vec<Vec<MetricsRow>>)], name: &str) -> Result<String> {
    let (w, h, ml, mr, mt, mb) = (720.0, 420.0, 70.0, 160.0, 30.0, 50.0);
    let bands: Vec<(String, Vec<(u64, f64, f64)>)> = groups
        .iter()
        .map(|(label, runs)| Ok((label.clone(), band(runs, name)?)))
        .collect::<Result<_>>()?;
    let pts = bands.iter().flat_map(|(_, b)| b.iter());
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for &(s, m, hw) in pts {
        x0 = x0.min(s as f64);
        x1 = x1.max(s as f64);
        y0 = y0.min(m - hw);
        y1 = y1.max(m + hw);
    }
    if !x0.is_finite() {
        bail!("no `{name}` values to plot");
    }
    if x1 <= x0 {
        x1 = x0 + 1.0;
    }
    if y1 - y0 < 1e-12 {
        y0 -= 0.5;
        y1 += 0.5;
    }
    let sx = |x: f64| ml + (x - x0) / (x1 - x0) * (w - ml - mr);
    let sy = |y: f64| mt + (y1 - y) / (y1 - y0) * (h - mt - mb);

    let mut s = String::new();
    writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="12">"#)?;
    writeln!(s, r#"<rect width="{w}" height="{h}" fill="white"/>"#)?;
    let (bx, by, bw, bh) = (ml, mt, w - ml - mr, h - mt - mb);
    writeln!(s, r#"<rect x="{bx}" y="{by}" width="{bw}" height="{bh}" fill="none" stroke="black"/>"#)?;
    for k in 0..=4 {
        let f = k as f64 / 4.0;
        let (xv, yv) = (x0 + f * (x1 - x0), y0 + f * (y1 - y0));
        let (px, py) = (sx(xv), sy(yv));
        writeln!(s, r#"<text x="{px:.1}" y="{:.1}" text-anchor="middle">{xv:.0}</text>"#, h - mb + 16.0)?;
        writeln!(s, r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{yv:.3}</text>"#, ml - 6.0, py + 4.0)?;
    }
    writeln!(s, r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">step</text>"#, ml + bw / 2.0, h - 12.0)?;
    writeln!(s, r#"<text x="{ml}" y="18">{name} (mean, 95% CI)</text>"#)?;
    for (k, (label, b)) in bands.iter().enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        if b.is_empty() {
            continue;
        }
        let upper: Vec<String> = b.iter().map(|&(st, m, hw)| format!("{:.2},{:.2}", sx(st as f64), sy(m + hw))).collect();
        let lower: Vec<String> = b.iter().rev().map(|&(st, m, hw)| format!("{:.2},{:.2}", sx(st as f64), sy(m - hw))).collect();
        writeln!(s, r#"<polygon points="{} {}" fill="{color}" fill-opacity="0.2" stroke="none"/>"#, upper.join(" "), lower.join(" "))?;
        let line: Vec<String> = b.iter().map(|&(st, m, _)| format!("{:.2},{:.2}", sx(st as f64), sy(m))).collect();
        writeln!(s, r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.5"/>"#, line.join(" "))?;
        let ly = mt + 14.0 + 18.0 * k as f64;
        writeln!(s, r#"<rect x="{:.1}" y="{:.1}" width="12" height="12" fill="{color}"/>"#, w - mr + 12.0, ly - 10.0)?;
        writeln!(s, r#"<text x="{:.1}" y="{ly:.1}">{}</text>"#, w - mr + 30.0, escape(label))?;
    }
    writeln!(s, "</svg>")?;
    Ok(s)
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
