//! Minimal SVG scatter plots. Every figure is emitted together with a CSV of
//! the plotted points so tests compare numbers, not pixels.

use std::fmt::Write as _;

pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
    pub color: String,
    /// Draw as a connected polyline (reference curves) instead of markers.
    pub line: bool,
}

pub struct Plot {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub log_x: bool,
    pub log_y: bool,
    pub series: Vec<Series>,
}

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 480.0;
const MARGIN_L: f64 = 70.0;
const MARGIN_R: f64 = 20.0;
const MARGIN_T: f64 = 40.0;
const MARGIN_B: f64 = 55.0;

fn nice_ticks(lo: f64, hi: f64) -> Vec<f64> {
    if !(hi > lo) {
        return vec![lo];
    }
    let span = hi - lo;
    let raw_step = span / 5.0;
    let mag = 10f64.powf(raw_step.log10().floor());
    let norm = raw_step / mag;
    let step = mag * if norm < 1.5 {
        1.0
    } else if norm < 3.5 {
        2.0
    } else if norm < 7.5 {
        5.0
    } else {
        10.0
    };
    let first = (lo / step).ceil() * step;
    let mut ticks = Vec::new();
    let mut t = first;
    while t <= hi + 1e-9 * span {
        ticks.push(t);
        t += step;
    }
    ticks
}

fn log_ticks(lo: f64, hi: f64) -> Vec<f64> {
    let mut ticks = Vec::new();
    let mut decade = 10f64.powf(lo.log10().floor());
    while decade <= hi * 1.0001 {
        if decade >= lo * 0.9999 {
            ticks.push(decade);
        }
        decade *= 10.0;
    }
    if ticks.len() < 2 {
        return vec![lo, hi];
    }
    ticks
}

fn fmt_tick(v: f64) -> String {
    if v == 0.0 {
        "0".to_string()
    } else if v.abs() >= 1e4 || v.abs() < 1e-3 {
        format!("{v:.1e}")
    } else {
        format!("{v}")
    }
}

impl Plot {
    pub fn render(&self) -> String {
        let all: Vec<(f64, f64)> = self
            .series
            .iter()
            .flat_map(|s| s.points.iter().copied())
            .filter(|(x, y)| {
                x.is_finite() && y.is_finite() && (!self.log_x || *x > 0.0) && (!self.log_y || *y > 0.0)
            })
            .collect();
        let (mut x_lo, mut x_hi) = all
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), (x, _)| {
                (lo.min(*x), hi.max(*x))
            });
        let (mut y_lo, mut y_hi) = all
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), (_, y)| {
                (lo.min(*y), hi.max(*y))
            });
        if !x_lo.is_finite() {
            (x_lo, x_hi) = (0.0, 1.0);
            (y_lo, y_hi) = (0.0, 1.0);
        }
        if x_lo == x_hi {
            x_lo -= 0.5;
            x_hi += 0.5;
        }
        if y_lo == y_hi {
            y_lo -= 0.5;
            y_hi += 0.5;
        }
        // A little padding in data space.
        if self.log_x {
            let f = (x_hi / x_lo).powf(0.05);
            x_lo /= f;
            x_hi *= f;
        } else {
            let pad = 0.05 * (x_hi - x_lo);
            x_lo -= pad;
            x_hi += pad;
        }
        if self.log_y {
            let f = (y_hi / y_lo).powf(0.05);
            y_lo /= f;
            y_hi *= f;
        } else {
            let pad = 0.05 * (y_hi - y_lo);
            y_lo -= pad;
            y_hi += pad;
        }

        let map_x = |x: f64| -> f64 {
            let t = if self.log_x {
                (x.ln() - x_lo.ln()) / (x_hi.ln() - x_lo.ln())
            } else {
                (x - x_lo) / (x_hi - x_lo)
            };
            MARGIN_L + t * (WIDTH - MARGIN_L - MARGIN_R)
        };
        let map_y = |y: f64| -> f64 {
            let t = if self.log_y {
                (y.ln() - y_lo.ln()) / (y_hi.ln() - y_lo.ln())
            } else {
                (y - y_lo) / (y_hi - y_lo)
            };
            HEIGHT - MARGIN_B - t * (HEIGHT - MARGIN_T - MARGIN_B)
        };

        let mut svg = String::new();
        let _ = writeln!(
            svg,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#
        );
        let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="22" text-anchor="middle" font-family="sans-serif" font-size="15">{}</text>"#,
            WIDTH / 2.0,
            xml_escape(&self.title)
        );

        // Axes frame.
        let _ = writeln!(
            svg,
            r#"<rect x="{MARGIN_L}" y="{MARGIN_T}" width="{}" height="{}" fill="none" stroke="black"/>"#,
            WIDTH - MARGIN_L - MARGIN_R,
            HEIGHT - MARGIN_T - MARGIN_B
        );

        let x_ticks = if self.log_x {
            log_ticks(x_lo, x_hi)
        } else {
            nice_ticks(x_lo, x_hi)
        };
        for t in &x_ticks {
            let px = map_x(*t);
            let _ = writeln!(
                svg,
                r#"<line x1="{px}" y1="{}" x2="{px}" y2="{}" stroke="black"/>"#,
                HEIGHT - MARGIN_B,
                HEIGHT - MARGIN_B + 5.0
            );
            let _ = writeln!(
                svg,
                r#"<text x="{px}" y="{}" text-anchor="middle" font-family="sans-serif" font-size="11">{}</text>"#,
                HEIGHT - MARGIN_B + 18.0,
                fmt_tick(*t)
            );
        }
        let y_ticks = if self.log_y {
            log_ticks(y_lo, y_hi)
        } else {
            nice_ticks(y_lo, y_hi)
        };
        for t in &y_ticks {
            let py = map_y(*t);
            let _ = writeln!(
                svg,
                r#"<line x1="{}" y1="{py}" x2="{MARGIN_L}" y2="{py}" stroke="black"/>"#,
                MARGIN_L - 5.0
            );
            let _ = writeln!(
                svg,
                r#"<text x="{}" y="{}" text-anchor="end" font-family="sans-serif" font-size="11">{}</text>"#,
                MARGIN_L - 8.0,
                py + 4.0,
                fmt_tick(*t)
            );
        }
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="{}" text-anchor="middle" font-family="sans-serif" font-size="13">{}</text>"#,
            (MARGIN_L + WIDTH - MARGIN_R) / 2.0,
            HEIGHT - 12.0,
            xml_escape(&self.x_label)
        );
        let _ = writeln!(
            svg,
            r#"<text x="16" y="{}" text-anchor="middle" font-family="sans-serif" font-size="13" transform="rotate(-90 16 {})">{}</text>"#,
            (MARGIN_T + HEIGHT - MARGIN_B) / 2.0,
            (MARGIN_T + HEIGHT - MARGIN_B) / 2.0,
            xml_escape(&self.y_label)
        );

        // Legend.
        let mut legend_y = MARGIN_T + 14.0;
        for s in &self.series {
            let _ = writeln!(
                svg,
                r#"<circle cx="{}" cy="{}" r="4" fill="{}"/><text x="{}" y="{}" font-family="sans-serif" font-size="11">{}</text>"#,
                MARGIN_L + 12.0,
                legend_y - 4.0,
                s.color,
                MARGIN_L + 22.0,
                legend_y,
                xml_escape(&s.label)
            );
            legend_y += 15.0;
        }

        for s in &self.series {
            let visible: Vec<(f64, f64)> = s
                .points
                .iter()
                .copied()
                .filter(|(x, y)| {
                    x.is_finite()
                        && y.is_finite()
                        && (!self.log_x || *x > 0.0)
                        && (!self.log_y || *y > 0.0)
                })
                .collect();
            if s.line {
                let path: Vec<String> = visible
                    .iter()
                    .enumerate()
                    .map(|(i, (x, y))| {
                        format!(
                            "{}{:.2},{:.2}",
                            if i == 0 { "M" } else { "L" },
                            map_x(*x),
                            map_y(*y)
                        )
                    })
                    .collect();
                let _ = writeln!(
                    svg,
                    r#"<path d="{}" fill="none" stroke="{}" stroke-width="1.5" stroke-dasharray="5,3"/>"#,
                    path.join(" "),
                    s.color
                );
            } else {
                for (x, y) in visible {
                    let _ = writeln!(
                        svg,
                        r#"<circle cx="{:.2}" cy="{:.2}" r="4" fill="{}" fill-opacity="0.75"/>"#,
                        map_x(x),
                        map_y(y),
                        s.color
                    );
                }
            }
        }
        svg.push_str("</svg>\n");
        svg
    }

    /// CSV companion: `series,x,y`.
    pub fn points_csv(&self) -> String {
        let mut out = String::from("series,x,y\n");
        for s in &self.series {
            for (x, y) in &s.points {
                let _ = writeln!(out, "{},{},{}", s.label.replace(',', ";"), x, y);
            }
        }
        out
    }
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn renders_well_formed_svg() {
        let plot = Plot {
            title: "test".into(),
            x_label: "x".into(),
            y_label: "y".into(),
            log_x: false,
            log_y: false,
            series: vec![Series {
                label: "data".into(),
                points: vec![(0.0, 0.0), (1.0, 2.0), (2.0, 1.0)],
                color: "steelblue".into(),
                line: false,
            }],
        };
        let svg = plot.render();
        assert!(svg.starts_with("<svg"));
        assert!(svg.trim_end().ends_with("</svg>"));
        assert_eq!(svg.matches("<circle").count(), 3 + 1); // points + legend
    }

    #[test]
    fn log_axes_skip_non_positive_points() {
        let plot = Plot {
            title: "log".into(),
            x_label: "x".into(),
            y_label: "y".into(),
            log_x: true,
            log_y: true,
            series: vec![Series {
                label: "d".into(),
                points: vec![(1e-9, 1e5), (0.0, 1.0), (1e-7, 2e6)],
                color: "crimson".into(),
                line: false,
            }],
        };
        let svg = plot.render();
        assert_eq!(svg.matches("fill-opacity").count(), 2);
    }

    #[test]
    fn points_csv_lists_all_series() {
        let plot = Plot {
            title: "t".into(),
            x_label: "x".into(),
            y_label: "y".into(),
            log_x: false,
            log_y: false,
            series: vec![
                Series {
                    label: "a".into(),
                    points: vec![(1.0, 2.0)],
                    color: "black".into(),
                    line: false,
                },
                Series {
                    label: "b".into(),
                    points: vec![(3.0, 4.0)],
                    color: "gray".into(),
                    line: true,
                },
            ],
        };
        let csv = plot.points_csv();
        assert!(csv.contains("a,1,2"));
        assert!(csv.contains("b,3,4"));
    }
}
