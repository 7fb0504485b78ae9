//! Static scatter plots of the first two coordinates.

use std::fmt::Write;

use efs_core::particles::ParticleSet;

const SIZE: f64 = 800.0;
const MARGIN: f64 = 40.0;
const PALETTE: [&str; 8] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#17becf",
];

#[derive(Default)]
pub struct Scatter<'a> {
    pub points: Option<(&'a ParticleSet, Option<&'a [u32]>)>,
    /// Drawn as stars on top of the points.
    pub stars: Option<&'a ParticleSet>,
    /// Polylines drawn under the stars.
    pub lines: Vec<Vec<[f64; 2]>>,
}

fn xy(row: &[f64]) -> [f64; 2] {
    [row[0], row.get(1).copied().unwrap_or(0.0)]
}

fn star(cx: f64, cy: f64) -> String {
    let (outer, inner) = (8.0, 3.2);
    (0..10)
        .map(|k| {
            let r = if k % 2 == 0 { outer } else { inner };
            let a = -std::f64::consts::FRAC_PI_2 + k as f64 * std::f64::consts::PI / 5.0;
            format!("{:.2},{:.2}", cx + r * a.cos(), cy + r * a.sin())
        })
        .collect::<Vec<_>>()
        .join(" ")
}

impl Scatter<'_> {
    pub fn render(&self) -> String {
        let mut all: Vec<[f64; 2]> = Vec::new();
        if let Some((ps, _)) = self.points {
            all.extend(ps.rows().map(xy));
        }
        if let Some(ps) = self.stars {
            all.extend(ps.rows().map(xy));
        }
        all.extend(self.lines.iter().flatten().copied());
        let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
        for p in &all {
            for k in 0..2 {
                lo[k] = lo[k].min(p[k]);
                hi[k] = hi[k].max(p[k]);
            }
        }
        if all.is_empty() {
            (lo, hi) = ([-1.0; 2], [1.0; 2]);
        }
        let span = (hi[0] - lo[0]).max(hi[1] - lo[1]).max(1e-12);
        let scale = (SIZE - 2.0 * MARGIN) / span;
        let mid = [(lo[0] + hi[0]) / 2.0, (lo[1] + hi[1]) / 2.0];
        let map = |p: [f64; 2]| {
            (
                SIZE / 2.0 + (p[0] - mid[0]) * scale,
                SIZE / 2.0 - (p[1] - mid[1]) * scale,
            )
        };

        let mut out = String::new();
        let _ = writeln!(
            out,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="800" height="800" viewBox="0 0 800 800">"#
        );
        let _ = writeln!(out, r#"<rect width="800" height="800" fill="white"/>"#);
        if let Some((ps, labels)) = self.points {
            for (i, row) in ps.rows().enumerate() {
                let (x, y) = map(xy(row));
                let color = PALETTE[labels.map_or(0, |l| l[i] as usize % PALETTE.len())];
                let _ = writeln!(out, r#"<circle cx="{x:.2}" cy="{y:.2}" r="2" fill="{color}"/>"#);
            }
        }
        for line in &self.lines {
            let pts: Vec<String> = line
                .iter()
                .map(|p| {
                    let (x, y) = map(*p);
                    format!("{x:.2},{y:.2}")
                })
                .collect();
            let _ = writeln!(
                out,
                r#"<polyline points="{}" fill="none" stroke="black" stroke-width="1"/>"#,
                pts.join(" ")
            );
        }
        if let Some(ps) = self.stars {
            for row in ps.rows() {
                let (x, y) = map(xy(row));
                let _ = writeln!(
                    out,
                    r#"<polygon points="{}" fill="black" stroke="white" stroke-width="0.5"/>"#,
                    star(x, y)
                );
            }
        }
        out.push_str("</svg>\n");
        out
    }
}
