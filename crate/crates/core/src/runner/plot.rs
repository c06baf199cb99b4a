//! SVG line plots of sweep aggregates.
//!
//! Every plotted point is a `<circle>` carrying `data-series`, `data-dz`,
//! `data-mean` and `data-std` attributes with the exact aggregate values, so
//! plots can be checked against the CSV.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use super::results::SweepResult;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dash {
    Solid,
    Dashed,
    Dotted,
}

impl Dash {
    fn attr(self) -> &'static str {
        match self {
            Dash::Solid => "",
            Dash::Dashed => " stroke-dasharray=\"6 4\"",
            Dash::Dotted => " stroke-dasharray=\"1.5 3\"",
        }
    }
}

#[derive(Debug, Clone)]
pub struct Series {
    pub label: String,
    pub color: &'static str,
    pub dash: Dash,
    /// `(x, mean, std)`.
    pub points: Vec<(f64, f64, f64)>,
}

#[derive(Debug, Clone, Default)]
pub struct Panel {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub series: Vec<Series>,
    /// Dotted vertical marker.
    pub vline: Option<f64>,
    /// Dotted horizontal reference with its legend label.
    pub hline: Option<(f64, String)>,
}

const W: f64 = 560.0;
const H: f64 = 380.0;
const ML: f64 = 60.0;
const MR: f64 = 150.0;
const MT: f64 = 36.0;
const MB: f64 = 48.0;

fn esc(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

impl Panel {
    pub fn to_svg(&self) -> String {
        let pts = self.series.iter().flat_map(|s| s.points.iter());
        let x_max = pts
            .clone()
            .map(|p| p.0)
            .chain(self.vline)
            .fold(1.0f64, f64::max);
        let y_max = pts
            .map(|p| p.1 + p.2.max(0.0))
            .chain(self.hline.as_ref().map(|h| h.0))
            .filter(|v| v.is_finite())
            .fold(1.0f64, f64::max)
            * 1.05;
        let (pw, ph) = (W - ML - MR, H - MT - MB);
        let sx = |x: f64| ML + x / x_max * pw;
        let sy = |y: f64| MT + ph - (y / y_max).clamp(-0.05, 1.05) * ph;

        let mut s = String::new();
        let _ = writeln!(
            s,
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W}\" height=\"{H}\" viewBox=\"0 0 {W} {H}\" font-family=\"sans-serif\" font-size=\"12\">"
        );
        let _ = writeln!(s, "<rect width=\"{W}\" height=\"{H}\" fill=\"white\"/>");
        let _ = writeln!(s, "<text x=\"{}\" y=\"20\" text-anchor=\"middle\" font-size=\"14\">{}</text>", ML + pw / 2.0, esc(&self.title));
        // Axes and ticks.
        let _ = writeln!(
            s,
            "<path d=\"M{ML} {MT} V{} H{}\" fill=\"none\" stroke=\"black\"/>",
            MT + ph,
            ML + pw
        );
        for i in 0..=5 {
            let y = y_max * i as f64 / 5.0;
            let _ = writeln!(
                s,
                "<text x=\"{}\" y=\"{:.1}\" text-anchor=\"end\">{:.2}</text>",
                ML - 6.0,
                sy(y) + 4.0,
                y
            );
            let x = x_max * i as f64 / 5.0;
            let _ = writeln!(s, "<text x=\"{:.1}\" y=\"{}\" text-anchor=\"middle\">{:.0}</text>", sx(x), MT + ph + 16.0, x);
        }
        let _ = writeln!(s, "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">{}</text>", ML + pw / 2.0, H - 10.0, esc(&self.x_label));
        let _ = writeln!(
            s,
            "<text transform=\"translate(16 {}) rotate(-90)\" text-anchor=\"middle\">{}</text>",
            MT + ph / 2.0,
            esc(&self.y_label)
        );
        if let Some(v) = self.vline {
            let _ = writeln!(
                s,
                "<line class=\"vline\" data-x=\"{v}\" x1=\"{x:.2}\" x2=\"{x:.2}\" y1=\"{MT}\" y2=\"{}\" stroke=\"gray\"{}/>",
                MT + ph,
                Dash::Dotted.attr(),
                x = sx(v)
            );
        }
        if let Some((v, _)) = &self.hline {
            let _ = writeln!(
                s,
                "<line class=\"hline\" data-y=\"{v}\" x1=\"{ML}\" x2=\"{}\" y1=\"{y:.2}\" y2=\"{y:.2}\" stroke=\"gray\"{}/>",
                ML + pw,
                Dash::Dotted.attr(),
                y = sy(*v)
            );
        }
        for series in &self.series {
            if series.points.is_empty() {
                continue;
            }
            // Band: mean + std forward, mean - std back.
            let mut band = String::new();
            for (i, p) in series.points.iter().enumerate() {
                let _ = write!(band, "{}{:.2} {:.2} ", if i == 0 { "M" } else { "L" }, sx(p.0), sy(p.1 + p.2));
            }
            for p in series.points.iter().rev() {
                let _ = write!(band, "L{:.2} {:.2} ", sx(p.0), sy(p.1 - p.2));
            }
            let _ = writeln!(s, "<path d=\"{band}Z\" fill=\"{}\" fill-opacity=\"0.2\" stroke=\"none\"/>", series.color);
            let line: Vec<String> = series.points.iter().map(|p| format!("{:.2},{:.2}", sx(p.0), sy(p.1))).collect();
            let _ = writeln!(
                s,
                "<polyline points=\"{}\" fill=\"none\" stroke=\"{}\" stroke-width=\"1.8\"{}/>",
                line.join(" "),
                series.color,
                series.dash.attr()
            );
            for p in &series.points {
                let _ = writeln!(
                    s,
                    "<circle data-series=\"{}\" data-dz=\"{}\" data-mean=\"{}\" data-std=\"{}\" cx=\"{:.2}\" cy=\"{:.2}\" r=\"2.5\" fill=\"{}\"/>",
                    esc(&series.label),
                    p.0,
                    p.1,
                    p.2,
                    sx(p.0),
                    sy(p.1),
                    series.color
                );
            }
        }
        // Legend.
        let mut ly = MT + 8.0;
        let lx = ML + pw + 14.0;
        let mut legend: Vec<(&str, &str, Dash)> = self.series.iter().map(|s| (s.label.as_str(), s.color, s.dash)).collect();
        if let Some((_, label)) = &self.hline {
            legend.push((label.as_str(), "gray", Dash::Dotted));
        }
        for (label, color, dash) in legend {
            let _ = writeln!(
                s,
                "<line x1=\"{lx}\" x2=\"{}\" y1=\"{ly}\" y2=\"{ly}\" stroke=\"{color}\" stroke-width=\"1.8\"{}/>",
                lx + 24.0,
                dash.attr()
            );
            let _ = writeln!(s, "<text x=\"{}\" y=\"{}\">{}</text>", lx + 30.0, ly + 4.0, esc(label));
            ly += 18.0;
        }
        s.push_str("</svg>\n");
        s
    }
}

fn curve_with_origin(result: &SweepResult, exp: &str, metric: &str, origin: Option<f64>) -> Vec<(f64, f64, f64)> {
    let mut pts: Vec<(f64, f64, f64)> = origin.map(|v| (0.0, v, 0.0)).into_iter().collect();
    pts.extend(result.curve(exp, metric).into_iter().map(|(d, m, s)| (d as f64, m, s)));
    pts
}

/// Shared vs exclusive readout error, with the analytic `(0, 1.0)` point.
pub fn synthetic_panel(result: &SweepResult, exp: &str, d_min: Option<usize>) -> Panel {
    Panel {
        title: exp.to_string(),
        x_label: "latent dimension d_z".into(),
        y_label: "readout MSE".into(),
        series: vec![
            Series {
                label: "r_e (exclusive)".into(),
                color: "#1f4fd8",
                dash: Dash::Solid,
                points: curve_with_origin(result, exp, "r_e", Some(1.0)),
            },
            Series {
                label: "r_m (shared)".into(),
                color: "#d62728",
                dash: Dash::Solid,
                points: curve_with_origin(result, exp, "r_m", Some(1.0)),
            },
        ],
        vline: d_min.map(|d| d as f64),
        hline: None,
    }
}

/// Per-stream readout errors. Solid: in both modalities; dashed: in one;
/// dotted: in neither.
pub fn robot_readout_panel(result: &SweepResult, exp: &str) -> Panel {
    let streams: [(&str, &str, &'static str, Dash); 6] = [
        ("right_pos", "right position", "#1f4fd8", Dash::Solid),
        ("right_ee", "right end effector", "#ff7f0e", Dash::Solid),
        ("right_vel", "right velocity", "#2ca02c", Dash::Dashed),
        ("left_pos", "left position", "#9467bd", Dash::Dashed),
        ("left_ee", "left end effector", "#d62728", Dash::Dashed),
        ("left_vel", "left velocity", "#7f7f7f", Dash::Dotted),
    ];
    Panel {
        title: format!("{exp}: readouts"),
        x_label: "latent dimension d_z".into(),
        y_label: "readout MSE".into(),
        series: streams
            .iter()
            .map(|&(metric, label, color, dash)| Series {
                label: label.into(),
                color,
                dash,
                points: curve_with_origin(result, exp, metric, Some(1.0)),
            })
            .collect(),
        vline: None,
        hline: None,
    }
}

/// Left/right half vision errors against the blank-predictor level.
pub fn robot_vision_panel(result: &SweepResult, exp: &str) -> Panel {
    let chance = result.curve(exp, "chance_left");
    let chance_r = result.curve(exp, "chance_right");
    let level = chance.first().zip(chance_r.first()).map(|(l, r)| (l.1 + r.1) / 2.0);
    let origin_l = chance.first().map(|c| c.1);
    let origin_r = chance_r.first().map(|c| c.1);
    Panel {
        title: format!("{exp}: vision error by half"),
        x_label: "latent dimension d_z".into(),
        y_label: "per-pixel MSE".into(),
        series: vec![
            Series {
                label: "left half".into(),
                color: "#d62728",
                dash: Dash::Solid,
                points: curve_with_origin(result, exp, "vision_left", origin_l),
            },
            Series {
                label: "right half".into(),
                color: "#1f4fd8",
                dash: Dash::Solid,
                points: curve_with_origin(result, exp, "vision_right", origin_r),
            },
        ],
        vline: None,
        hline: level.map(|l| (l, "chance".to_string())),
    }
}

/// Writes one or two panels per experiment into `dir`; `d_min` maps
/// synthetic experiment labels to their marker position.
pub fn emit_plots(result: &SweepResult, dir: &Path, d_min: &HashMap<String, usize>) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut written = Vec::new();
    for exp in result.experiments() {
        let has = |m: &str| result.aggregates.iter().any(|a| a.experiment == exp && a.metric == m);
        let panels = if has("r_m") || has("r_e") {
            vec![(format!("{exp}.svg"), synthetic_panel(result, &exp, d_min.get(&exp).copied()))]
        } else if has("left_pos") {
            vec![
                (format!("{exp}_readouts.svg"), robot_readout_panel(result, &exp)),
                (format!("{exp}_vision.svg"), robot_vision_panel(result, &exp)),
            ]
        } else {
            continue;
        };
        for (name, panel) in panels {
            let p = dir.join(name);
            std::fs::write(&p, panel.to_svg()).map_err(|e| Error::io(&p, e))?;
            written.push(p);
        }
    }
    Ok(written)
}

/// `(series, d_z, mean, std)` of every point in an SVG written by this module.
pub fn parse_points(svg: &str) -> Vec<(String, f64, f64, f64)> {
    let attr = |line: &str, key: &str| -> Option<String> {
        let start = line.find(&format!("{key}=\""))? + key.len() + 2;
        let end = start + line[start..].find('"')?;
        Some(line[start..end].to_string())
    };
    svg.lines()
        .filter(|l| l.starts_with("<circle"))
        .filter_map(|l| {
            Some((
                attr(l, "data-series")?,
                attr(l, "data-dz")?.parse().ok()?,
                attr(l, "data-mean")?.parse().ok()?,
                attr(l, "data-std")?.parse().ok()?,
            ))
        })
        .collect()
}
