//! Deterministic SVG rendering of result curves.
//!
//! The renderer is intentionally hand-rolled: output bytes are a pure
//! function of the input data (fixed canvas, fixed palette, fixed number
//! formatting, no randomness, no map-iteration order), so golden-file
//! tests can compare bytes across runs and platforms.

use crate::analysis::{Crossover, PointRecord, ThresholdFit};
use std::fmt::Write as _;

const WIDTH: f64 = 880.0;
const HEIGHT: f64 = 560.0;
const MARGIN_LEFT: f64 = 90.0;
const MARGIN_RIGHT: f64 = 230.0;
const MARGIN_TOP: f64 = 50.0;
const MARGIN_BOTTOM: f64 = 70.0;

const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf", "#e377c2",
];

#[derive(Debug, Clone, Copy)]
pub struct PlotPoint {
    pub x: f64,
    pub y: f64,
    /// Optional confidence band drawn as a vertical bar.
    pub y_lo: Option<f64>,
    pub y_hi: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct Series {
    pub label: String,
    pub points: Vec<PlotPoint>,
    pub draw_markers: bool,
    pub dashed: bool,
}

impl Series {
    pub fn from_xy(label: &str, pts: &[(f64, f64)]) -> Series {
        Series {
            label: label.to_string(),
            points: pts
                .iter()
                .map(|&(x, y)| PlotPoint {
                    x,
                    y,
                    y_lo: None,
                    y_hi: None,
                })
                .collect(),
            draw_markers: true,
            dashed: false,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Figure {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub log_x: bool,
    pub log_y: bool,
    pub series: Vec<Series>,
}

/// Pixel-coordinate formatting: two decimals, fixed.
fn px(v: f64) -> String {
    format!("{v:.2}")
}

/// Tick-label formatting: fixed notation in a readable range, scientific
/// elsewhere, trailing zeros trimmed.  Deterministic for equal inputs.
fn fmt_tick(v: f64) -> String {
    if v == 0.0 {
        return "0".to_string();
    }
    let a = v.abs();
    let s = if (1e-3..1e4).contains(&a) {
        format!("{v:.4}")
    } else {
        format!("{v:.3e}")
    };
    trim_zeros(&s)
}

fn trim_zeros(s: &str) -> String {
    if let Some(epos) = s.find('e') {
        let (m, e) = s.split_at(epos);
        let m = if m.contains('.') {
            m.trim_end_matches('0').trim_end_matches('.')
        } else {
            m
        };
        format!("{m}{e}")
    } else if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s.to_string()
    }
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// One axis: data domain plus the log flag, mapping values to [0, 1].
#[derive(Debug, Clone, Copy)]
struct Axis {
    lo: f64,
    hi: f64,
    log: bool,
}

impl Axis {
    /// Domain from observed values, padded 5% in transformed space.
    /// Falls back to a canonical default when no value is usable.
    fn fit(values: &[f64], log: bool) -> Axis {
        let usable: Vec<f64> = values
            .iter()
            .copied()
            .filter(|v| v.is_finite() && (!log || *v > 0.0))
            .collect();
        if usable.is_empty() {
            return if log {
                Axis { lo: 1e-3, hi: 1.0, log }
            } else {
                Axis { lo: 0.0, hi: 1.0, log }
            };
        }
        let mut lo = usable.iter().copied().fold(f64::INFINITY, f64::min);
        let mut hi = usable.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if log {
            let (mut llo, mut lhi) = (lo.ln(), hi.ln());
            if lhi - llo < 1e-9 {
                llo -= std::f64::consts::LN_2;
                lhi += std::f64::consts::LN_2;
            }
            let pad = 0.05 * (lhi - llo);
            lo = (llo - pad).exp();
            hi = (lhi + pad).exp();
        } else {
            if hi - lo < 1e-12 {
                lo -= 0.5;
                hi += 0.5;
            }
            let pad = 0.05 * (hi - lo);
            lo -= pad;
            hi += pad;
        }
        Axis { lo, hi, log }
    }

    /// Value -> [0, 1] along the axis.
    fn unit(&self, v: f64) -> f64 {
        if self.log {
            (v.ln() - self.lo.ln()) / (self.hi.ln() - self.lo.ln())
        } else {
            (v - self.lo) / (self.hi - self.lo)
        }
    }

    fn contains(&self, v: f64) -> bool {
        v.is_finite() && (!self.log || v > 0.0) && v >= self.lo && v <= self.hi
    }

    /// Tick positions.  Log axes prefer 1-2-5 decade ticks; linear axes
    /// (and degenerate log ranges) use six evenly spaced ticks.
    fn ticks(&self) -> Vec<f64> {
        if self.log {
            let mut out = vec![];
            let k_lo = self.lo.log10().floor() as i32 - 1;
            let k_hi = self.hi.log10().ceil() as i32 + 1;
            for k in k_lo..=k_hi {
                for m in [1.0, 2.0, 5.0] {
                    let v = m * 10f64.powi(k);
                    if v >= self.lo && v <= self.hi {
                        out.push(v);
                    }
                }
            }
            if out.len() > 9 {
                out.retain(|v| {
                    let l = v.log10();
                    (l - l.round()).abs() < 1e-9
                });
            }
            if out.len() >= 2 {
                return out;
            }
        }
        (0..=5)
            .map(|i| {
                let t = i as f64 / 5.0;
                if self.log {
                    (self.lo.ln() + t * (self.hi.ln() - self.lo.ln())).exp()
                } else {
                    self.lo + t * (self.hi - self.lo)
                }
            })
            .collect()
    }
}

impl Figure {
    pub fn render(&self) -> String {
        let plot_w = WIDTH - MARGIN_LEFT - MARGIN_RIGHT;
        let plot_h = HEIGHT - MARGIN_TOP - MARGIN_BOTTOM;

        let mut xs = vec![];
        let mut ys = vec![];
        for s in &self.series {
            for p in &s.points {
                xs.push(p.x);
                ys.push(p.y);
                if let Some(lo) = p.y_lo {
                    ys.push(lo);
                }
                if let Some(hi) = p.y_hi {
                    ys.push(hi);
                }
            }
        }
        let ax = Axis::fit(&xs, self.log_x);
        let ay = Axis::fit(&ys, self.log_y);
        let to_px = |x: f64, y: f64| -> (f64, f64) {
            (
                MARGIN_LEFT + ax.unit(x) * plot_w,
                MARGIN_TOP + (1.0 - ay.unit(y)) * plot_h,
            )
        };

        let mut out = String::new();
        let _ = writeln!(
            out,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{}" height="{}" viewBox="0 0 {} {}">"#,
            WIDTH as u32, HEIGHT as u32, WIDTH as u32, HEIGHT as u32
        );
        let _ = writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#);
        let _ = writeln!(
            out,
            r#"<text x="{}" y="30" font-family="sans-serif" font-size="18" text-anchor="middle">{}</text>"#,
            px(MARGIN_LEFT + plot_w / 2.0),
            xml_escape(&self.title)
        );

        // Grid lines and ticks.
        for tx in ax.ticks() {
            let (xp, _) = to_px(tx, ay.lo.max(1e-300));
            let _ = writeln!(
                out,
                r##"<line x1="{x}" y1="{y1}" x2="{x}" y2="{y2}" stroke="#dddddd" stroke-width="1"/>"##,
                x = px(xp),
                y1 = px(MARGIN_TOP),
                y2 = px(MARGIN_TOP + plot_h)
            );
            let _ = writeln!(
                out,
                r#"<text x="{x}" y="{y}" font-family="sans-serif" font-size="12" text-anchor="middle">{t}</text>"#,
                x = px(xp),
                y = px(MARGIN_TOP + plot_h + 18.0),
                t = fmt_tick(tx)
            );
        }
        for ty in ay.ticks() {
            let (_, yp) = to_px(ax.lo.max(1e-300), ty);
            let _ = writeln!(
                out,
                r##"<line x1="{x1}" y1="{y}" x2="{x2}" y2="{y}" stroke="#dddddd" stroke-width="1"/>"##,
                x1 = px(MARGIN_LEFT),
                x2 = px(MARGIN_LEFT + plot_w),
                y = px(yp)
            );
            let _ = writeln!(
                out,
                r#"<text x="{x}" y="{y}" font-family="sans-serif" font-size="12" text-anchor="end">{t}</text>"#,
                x = px(MARGIN_LEFT - 8.0),
                y = px(yp + 4.0),
                t = fmt_tick(ty)
            );
        }

        // Axis labels and frame.
        let _ = writeln!(
            out,
            r#"<rect x="{x}" y="{y}" width="{w}" height="{h}" fill="none" stroke="black" stroke-width="1"/>"#,
            x = px(MARGIN_LEFT),
            y = px(MARGIN_TOP),
            w = px(plot_w),
            h = px(plot_h)
        );
        let _ = writeln!(
            out,
            r#"<text x="{x}" y="{y}" font-family="sans-serif" font-size="14" text-anchor="middle">{t}</text>"#,
            x = px(MARGIN_LEFT + plot_w / 2.0),
            y = px(HEIGHT - 20.0),
            t = xml_escape(&self.x_label)
        );
        let _ = writeln!(
            out,
            r#"<text x="22" y="{y}" font-family="sans-serif" font-size="14" text-anchor="middle" transform="rotate(-90 22 {y})">{t}</text>"#,
            y = px(MARGIN_TOP + plot_h / 2.0),
            t = xml_escape(&self.y_label)
        );

        // Data: one polyline + optional CI bars + markers per series.
        for (si, s) in self.series.iter().enumerate() {
            let color = PALETTE[si % PALETTE.len()];
            let mut pts: Vec<&PlotPoint> = s
                .points
                .iter()
                .filter(|p| ax.contains(p.x) && ay.contains(p.y))
                .collect();
            pts.sort_by(|a, b| a.x.total_cmp(&b.x));
            if pts.len() >= 2 {
                let coords: Vec<String> = pts
                    .iter()
                    .map(|p| {
                        let (xp, yp) = to_px(p.x, p.y);
                        format!("{},{}", px(xp), px(yp))
                    })
                    .collect();
                let dash = if s.dashed {
                    r#" stroke-dasharray="6 4""#
                } else {
                    ""
                };
                let _ = writeln!(
                    out,
                    r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.5"{dash}/>"#,
                    coords.join(" ")
                );
            }
            for p in &pts {
                let (xp, yp) = to_px(p.x, p.y);
                if let (Some(lo), Some(hi)) = (p.y_lo, p.y_hi) {
                    let lo_c = if ay.contains(lo) { lo } else { ay.lo };
                    let hi_c = if ay.contains(hi) { hi } else { ay.hi };
                    let (_, ylo) = to_px(p.x, lo_c);
                    let (_, yhi) = to_px(p.x, hi_c);
                    let _ = writeln!(
                        out,
                        r#"<line x1="{x}" y1="{y1}" x2="{x}" y2="{y2}" stroke="{color}" stroke-width="1"/>"#,
                        x = px(xp),
                        y1 = px(ylo),
                        y2 = px(yhi)
                    );
                    for ycap in [ylo, yhi] {
                        let _ = writeln!(
                            out,
                            r#"<line x1="{x1}" y1="{y}" x2="{x2}" y2="{y}" stroke="{color}" stroke-width="1"/>"#,
                            x1 = px(xp - 3.0),
                            x2 = px(xp + 3.0),
                            y = px(ycap)
                        );
                    }
                }
                if s.draw_markers {
                    let _ = writeln!(
                        out,
                        r#"<circle cx="{x}" cy="{y}" r="3" fill="{color}"/>"#,
                        x = px(xp),
                        y = px(yp)
                    );
                }
            }
        }

        // Legend.
        let lx = MARGIN_LEFT + plot_w + 16.0;
        for (si, s) in self.series.iter().enumerate() {
            let color = PALETTE[si % PALETTE.len()];
            let ly = MARGIN_TOP + 10.0 + 22.0 * si as f64;
            let dash = if s.dashed {
                r#" stroke-dasharray="6 4""#
            } else {
                ""
            };
            let _ = writeln!(
                out,
                r#"<line x1="{x1}" y1="{y}" x2="{x2}" y2="{y}" stroke="{color}" stroke-width="2"{dash}/>"#,
                x1 = px(lx),
                x2 = px(lx + 24.0),
                y = px(ly)
            );
            let _ = writeln!(
                out,
                r#"<text x="{x}" y="{y}" font-family="sans-serif" font-size="12">{t}</text>"#,
                x = px(lx + 30.0),
                y = px(ly + 4.0),
                t = xml_escape(&s.label)
            );
        }

        out.push_str("</svg>\n");
        out
    }
}

// ---------------------------------------------------------------------
// Figure builders from result records
// ---------------------------------------------------------------------

/// Failure-rate-vs-p curves, one series per (scheme, decoder, d, r)
/// combination present in the records (plus s when it varies).
pub fn failure_rate_figure(records: &[PointRecord], log: bool) -> Figure {
    let n_s = {
        let mut svals: Vec<String> = records.iter().map(|r| format!("{}", r.s)).collect();
        svals.sort();
        svals.dedup();
        svals.len()
    };
    let mut groups: Vec<(String, Vec<PlotPoint>)> = vec![];
    let mut sorted: Vec<&PointRecord> = records.iter().collect();
    sorted.sort_by(|a, b| {
        (&a.scheme, &a.decoder, a.d, a.r, a.s, a.p)
            .partial_cmp(&(&b.scheme, &b.decoder, b.d, b.r, b.s, b.p))
            .unwrap()
    });
    for rec in sorted {
        let mut label = format!("{}/{} d={} r={}", rec.scheme, rec.decoder, rec.d, rec.r);
        if n_s > 1 {
            label.push_str(&format!(" s={}", rec.s));
        }
        let pt = PlotPoint {
            x: rec.p,
            y: rec.any_rate(),
            y_lo: Some(rec.ci_lo),
            y_hi: Some(rec.ci_hi),
        };
        match groups.last_mut() {
            Some((l, pts)) if *l == label => pts.push(pt),
            _ => groups.push((label, vec![pt])),
        }
    }
    Figure {
        title: format!(
            "Logical failure rate vs physical error rate{}",
            if log { " (log)" } else { "" }
        ),
        x_label: "physical error rate p".to_string(),
        y_label: "logical failure rate".to_string(),
        log_x: log,
        log_y: log,
        series: groups
            .into_iter()
            .map(|(label, points)| Series {
                label,
                points,
                draw_markers: true,
                dashed: false,
            })
            .collect(),
    }
}

/// Threshold-vs-r points with bootstrap CIs, plus optional fitted decay
/// model and the idealized slope-3/4 comparison curve.
pub fn threshold_figure(points: &[(f64, Crossover)], fit: Option<&ThresholdFit>) -> Figure {
    let mut series = vec![Series {
        label: "estimated threshold".to_string(),
        points: points
            .iter()
            .map(|&(r, c)| PlotPoint {
                x: r,
                y: c.p_th,
                y_lo: Some(c.ci_lo),
                y_hi: Some(c.ci_hi),
            })
            .collect(),
        draw_markers: true,
        dashed: false,
    }];
    if let Some(f) = fit {
        if let (Some(r_lo), Some(r_hi)) = (
            points.iter().map(|&(r, _)| r).reduce(f64::min),
            points.iter().map(|&(r, _)| r).reduce(f64::max),
        ) {
            let curve = |g: &dyn Fn(f64) -> f64| -> Vec<PlotPoint> {
                (0..=60)
                    .map(|i| {
                        let r = r_lo + (r_hi - r_lo) * i as f64 / 60.0;
                        PlotPoint {
                            x: r,
                            y: g(r),
                            y_lo: None,
                            y_hi: None,
                        }
                    })
                    .collect()
            };
            series.push(Series {
                label: format!("fit a/(1+br), a={:.4}, b={:.2}", f.alpha, f.beta),
                points: curve(&|r| f.model(r)),
                draw_markers: false,
                dashed: true,
            });
            series.push(Series {
                label: "idealized b=0.75".to_string(),
                points: curve(&|r| f.idealized(r)),
                draw_markers: false,
                dashed: true,
            });
        }
    }
    Figure {
        title: "Threshold vs relative leakage rate r".to_string(),
        x_label: "relative leakage rate r".to_string(),
        y_label: "threshold p_th".to_string(),
        log_x: false,
        log_y: false,
        series,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::binomial_ci;

    fn fnv1a(bytes: &[u8]) -> u64 {
        let mut h = 0xcbf29ce484222325u64;
        for &b in bytes {
            h ^= b as u64;
            h = h.wrapping_mul(0x100000001b3);
        }
        h
    }

    fn sample_records() -> Vec<PointRecord> {
        let mut out = vec![];
        for (d, scale) in [(5usize, 2.0f64), (7, 3.0)] {
            for i in 0..5 {
                let p = 0.005 + 0.001 * i as f64;
                let trials = 4000u64;
                let rate = 0.08 * (p / 0.007).powf(scale);
                let fails = (rate * trials as f64).round() as u64;
                let (ci_lo, ci_hi) = binomial_ci(fails, trials);
                out.push(PointRecord {
                    d,
                    scheme: "standard".into(),
                    decoder: "standard".into(),
                    p,
                    q: p,
                    r: 0.0,
                    s: 0.0,
                    trials,
                    x_fail: fails / 2,
                    z_fail: fails / 2,
                    any_fail: fails,
                    ci_lo,
                    ci_hi,
                    seed: 7,
                });
            }
        }
        out
    }

    #[test]
    fn rendering_is_deterministic_across_calls() {
        let recs = sample_records();
        let a = failure_rate_figure(&recs, false).render();
        let b = failure_rate_figure(&recs, false).render();
        assert_eq!(a, b);
        // Record order must not matter either: the builder sorts.
        let mut rev = recs.clone();
        rev.reverse();
        let c = failure_rate_figure(&rev, false).render();
        assert_eq!(a, c);
    }

    #[test]
    fn golden_failure_figure_bytes_are_pinned() {
        let svg = failure_rate_figure(&sample_records(), true).render();
        assert_eq!(
            fnv1a(svg.as_bytes()),
            0x068a736203a92be5,
            "SVG bytes changed; update the pinned hash only for intentional renderer changes"
        );
    }

    #[test]
    fn figure_contains_expected_structure() {
        let svg = failure_rate_figure(&sample_records(), false).render();
        assert!(svg.starts_with("<svg "));
        assert!(svg.trim_end().ends_with("</svg>"));
        assert_eq!(svg.matches("<polyline ").count(), 2, "one line per curve");
        assert!(svg.contains("standard/standard d=5 r=0"));
        assert!(svg.contains("standard/standard d=7 r=0"));
        assert!(svg.matches("<circle ").count() == 10, "markers per point");
        assert!(svg.contains("physical error rate p"));
    }

    #[test]
    fn empty_input_renders_axes_only() {
        for log in [false, true] {
            let svg = failure_rate_figure(&[], log).render();
            assert!(svg.starts_with("<svg "));
            assert!(!svg.contains("<polyline"));
            assert!(!svg.contains("<circle"));
            assert!(svg.contains("<rect"), "frame still drawn");
            assert!(svg.contains("<text"), "labels still drawn");
        }
    }

    #[test]
    fn log_scale_drops_zero_rate_points_instead_of_failing() {
        let mut recs = sample_records();
        recs[0].any_fail = 0;
        recs[0].ci_lo = 0.0;
        recs[0].ci_hi = 0.0;
        let svg = failure_rate_figure(&recs, true).render();
        // Nine markers survive out of ten points.
        assert_eq!(svg.matches("<circle ").count(), 9);
    }

    #[test]
    fn threshold_figure_draws_fit_overlays() {
        let mk = |p_th: f64| Crossover {
            p_th,
            ci_lo: p_th * 0.9,
            ci_hi: p_th * 1.1,
            bootstrap_yield: 1.0,
        };
        let pts = vec![(0.0, mk(0.0065)), (1.0, mk(0.0014)), (2.0, mk(0.0008))];
        let fit = crate::analysis::fit_threshold_decay(
            &pts.iter().map(|&(r, c)| (r, c.p_th)).collect::<Vec<_>>(),
            3,
        )
        .unwrap();
        let svg = threshold_figure(&pts, Some(&fit)).render();
        assert_eq!(svg.matches("<polyline ").count(), 3, "data + fit + idealized");
        assert!(svg.contains("idealized b=0.75"));
        assert!(svg.contains("stroke-dasharray"));
    }

    #[test]
    fn tick_formatting_is_stable() {
        assert_eq!(fmt_tick(0.0), "0");
        assert_eq!(fmt_tick(0.0065), "0.0065");
        assert_eq!(fmt_tick(0.00065), "6.5e-4");
        assert_eq!(fmt_tick(2.0), "2");
        assert_eq!(fmt_tick(12345.0), "1.234e4");
    }
}
