//! CSV and SVG scatter export.

use std::fmt::Write as _;
use std::io::Write;

use crate::error::{Error, Result};
use crate::grid::{Factor, Level};

use super::Embedding;

const SVG_SIZE: f64 = 640.0;
const SVG_MARGIN: f64 = 48.0;
const DEFAULT_FILL: &str = "#1f77b4";

#[derive(Debug, Clone)]
pub struct ScatterOptions {
    /// 1-based axis numbers plotted as (x, y).
    pub dims: (usize, usize),
    /// Factor (position in the point grid) used for point colors.
    pub color_by: Option<usize>,
    pub title: Option<String>,
}

impl Default for ScatterOptions {
    fn default() -> Self {
        ScatterOptions {
            dims: (1, 2),
            color_by: None,
            title: None,
        }
    }
}

fn parse_rgb(label: &str) -> Option<(u8, u8, u8)> {
    let mut it = label.split(',').map(|p| p.trim().parse::<u8>());
    let rgb = (it.next()?.ok()?, it.next()?.ok()?, it.next()?.ok()?);
    it.next().is_none().then_some(rgb)
}

fn hsv_to_rgb(h: f64, s: f64, v: f64) -> (u8, u8, u8) {
    let h = h.rem_euclid(360.0) / 60.0;
    let c = v * s;
    let x = c * (1.0 - ((h % 2.0) - 1.0).abs());
    let (r, g, b) = match h as u32 {
        0 => (c, x, 0.0),
        1 => (x, c, 0.0),
        2 => (0.0, c, x),
        3 => (0.0, x, c),
        4 => (x, 0.0, c),
        _ => (c, 0.0, x),
    };
    let m = v - c;
    let q = |u: f64| ((u + m) * 255.0).round().clamp(0.0, 255.0) as u8;
    (q(r), q(g), q(b))
}

/// Display color for level `t` of `factor`.
///
/// RGB-triple labels (`"r,g,b"`) are drawn in their own color; angular levels
/// (units `degrees`) map angle to hue; other numeric levels spread over the
/// hue wheel by value, and plain labels by position.
pub fn level_color(factor: &Factor, t: usize) -> String {
    let level: &Level = &factor.levels[t];
    if let Some((r, g, b)) = parse_rgb(&level.label) {
        return format!("#{r:02x}{g:02x}{b:02x}");
    }
    let hue = match level.value {
        Some(v) if level.units.as_deref() == Some("degrees") => v,
        Some(v) => {
            let vals = factor.levels.iter().filter_map(|l| l.value);
            let (lo, hi) = vals.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), x| {
                (a.min(x), b.max(x))
            });
            if hi > lo {
                300.0 * (v - lo) / (hi - lo)
            } else {
                0.0
            }
        }
        None if factor.len() > 1 => 300.0 * t as f64 / (factor.len() - 1) as f64,
        None => 0.0,
    };
    let (r, g, b) = hsv_to_rgb(hue, 0.85, 0.9);
    format!("#{r:02x}{g:02x}{b:02x}")
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

/// Writes the embedding as CSV (level labels, `x`, `y`, then every axis) and
/// as an SVG scatter of the chosen axis pair.
pub fn export_scatter<C: Write, S: Write>(
    embedding: &Embedding,
    opts: &ScatterOptions,
    csv_out: C,
    mut svg_out: S,
) -> Result<()> {
    let n_axes = embedding.coords.cols();
    let (a, b) = opts.dims;
    if a == 0 || b == 0 || a > n_axes || b > n_axes {
        return Err(Error::Param(format!(
            "dims ({a},{b}) out of range for {n_axes} axes"
        )));
    }
    if let (Some(k), Some(p)) = (opts.color_by, &embedding.points) {
        if k >= p.grid.n_factors() {
            return Err(Error::Param(format!("no factor #{k} to color by")));
        }
    }
    let (xi, yi) = (a - 1, b - 1);
    let coords = &embedding.coords;

    let csv_err = |e: csv::Error| Error::Param(format!("csv: {e}"));
    let mut w = csv::Writer::from_writer(csv_out);
    let mut header: Vec<String> = Vec::new();
    if let Some(p) = &embedding.points {
        header.extend(p.grid.factors().iter().map(|f| f.name.clone()));
    }
    header.push("x".into());
    header.push("y".into());
    header.extend(embedding.axes.iter().cloned());
    w.write_record(&header).map_err(csv_err)?;
    for i in 0..coords.rows() {
        let mut rec: Vec<String> = Vec::with_capacity(header.len());
        if let Some(p) = &embedding.points {
            for (f, &t) in p.grid.factors().iter().zip(&p.indices[i]) {
                rec.push(f.levels[t].label.clone());
            }
        }
        rec.push(format!("{}", coords[(i, xi)]));
        rec.push(format!("{}", coords[(i, yi)]));
        rec.extend(coords.row(i).iter().map(|v| format!("{v}")));
        w.write_record(&rec).map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::Param(format!("csv: {e}")))?;

    let svg = render_svg(embedding, opts, xi, yi);
    svg_out
        .write_all(svg.as_bytes())
        .map_err(|e| Error::Param(format!("svg: {e}")))?;
    Ok(())
}

fn render_svg(embedding: &Embedding, opts: &ScatterOptions, xi: usize, yi: usize) -> String {
    let coords = &embedding.coords;
    let n = coords.rows();
    let range = |j: usize| {
        let (lo, hi) = (0..n).fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), i| {
            (lo.min(coords[(i, j)]), hi.max(coords[(i, j)]))
        });
        if n == 0 {
            (-1.0, 1.0)
        } else if hi > lo {
            (lo, hi)
        } else {
            (lo - 1.0, hi + 1.0)
        }
    };
    let (x0, x1) = range(xi);
    let (y0, y1) = range(yi);
    let span = SVG_SIZE - 2.0 * SVG_MARGIN;
    let px = |v: f64| SVG_MARGIN + (v - x0) / (x1 - x0) * span;
    let py = |v: f64| SVG_SIZE - SVG_MARGIN - (v - y0) / (y1 - y0) * span;

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{SVG_SIZE}" height="{SVG_SIZE}" viewBox="0 0 {SVG_SIZE} {SVG_SIZE}">"#
    );
    let _ = writeln!(
        s,
        r#"<rect x="0" y="0" width="{SVG_SIZE}" height="{SVG_SIZE}" fill="white"/>"#
    );
    let _ = writeln!(
        s,
        r##"<rect x="{SVG_MARGIN}" y="{SVG_MARGIN}" width="{span}" height="{span}" fill="none" stroke="#888888"/>"##
    );
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" font-size="14" text-anchor="middle">{}</text>"#,
        SVG_SIZE / 2.0,
        SVG_SIZE - 12.0,
        escape(&embedding.axes[xi])
    );
    let _ = writeln!(
        s,
        r#"<text x="14" y="{}" font-size="14" text-anchor="middle" transform="rotate(-90 14 {})">{}</text>"#,
        SVG_SIZE / 2.0,
        SVG_SIZE / 2.0,
        escape(&embedding.axes[yi])
    );
    if let Some(t) = &opts.title {
        let _ = writeln!(
            s,
            r#"<text x="{}" y="28" font-size="16" text-anchor="middle">{}</text>"#,
            SVG_SIZE / 2.0,
            escape(t)
        );
    }
    for i in 0..n {
        let fill = match (&embedding.points, opts.color_by) {
            (Some(p), Some(k)) => level_color(&p.grid.factors()[k], p.indices[i][k]),
            _ => DEFAULT_FILL.to_string(),
        };
        let _ = writeln!(
            s,
            r#"<circle cx="{:.3}" cy="{:.3}" r="3" fill="{fill}" fill-opacity="0.85"/>"#,
            px(coords[(i, xi)]),
            py(coords[(i, yi)])
        );
    }
    s.push_str("</svg>\n");
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embed::PointLabels;
    use crate::grid::FactorGrid;
    use crate::linalg::Matrix;

    fn emb8() -> Embedding {
        let rows: Vec<Vec<f64>> = (0..8)
            .map(|i| vec![i as f64, -(i as f64) * 2.0, 0.5])
            .collect();
        let grid = FactorGrid::from_sizes(&[("a", 2), ("b", 4)]).unwrap();
        Embedding {
            coords: Matrix::from_rows(&rows).unwrap(),
            axes: vec!["PC1".into(), "PC2".into(), "PC3".into()],
            points: None,
        }
        .with_points(PointLabels::full(&grid))
        .unwrap()
    }

    fn run(e: &Embedding, opts: &ScatterOptions) -> (String, String) {
        let mut c = Vec::new();
        let mut s = Vec::new();
        export_scatter(e, opts, &mut c, &mut s).unwrap();
        (String::from_utf8(c).unwrap(), String::from_utf8(s).unwrap())
    }

    #[test]
    fn csv_has_header_and_rows() {
        let (csv, svg) = run(&emb8(), &ScatterOptions::default());
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 9);
        assert_eq!(lines[0], "a,b,x,y,PC1,PC2,PC3");
        assert_eq!(lines[3], "0,2,2,-4,2,-4,0.5");
        assert_eq!(svg.matches("<circle").count(), 8);
    }

    #[test]
    fn swapped_dims_transpose() {
        let e = emb8();
        let (a, _) = run(
            &e,
            &ScatterOptions {
                dims: (1, 2),
                ..Default::default()
            },
        );
        let (b, _) = run(
            &e,
            &ScatterOptions {
                dims: (2, 1),
                ..Default::default()
            },
        );
        for (la, lb) in a.lines().skip(1).zip(b.lines().skip(1)) {
            let fa: Vec<&str> = la.split(',').collect();
            let fb: Vec<&str> = lb.split(',').collect();
            assert_eq!((fa[2], fa[3]), (fb[3], fb[2]));
        }
    }

    #[test]
    fn out_of_range_dims() {
        let e = emb8();
        for dims in [(0, 1), (1, 4)] {
            let r = export_scatter(
                &e,
                &ScatterOptions {
                    dims,
                    ..Default::default()
                },
                Vec::new(),
                Vec::new(),
            );
            assert!(matches!(r, Err(Error::Param(_))));
        }
    }

    #[test]
    fn colors() {
        let f = Factor::new("rgb", vec![Level::new("255,0,16"), Level::new("0,0,0")]);
        assert_eq!(level_color(&f, 0), "#ff0010");
        let az = Factor::new(
            "az",
            vec![
                Level::numeric(0.0, "degrees"),
                Level::numeric(120.0, "degrees"),
            ],
        );
        assert_eq!(level_color(&az, 0), "#e62222");
        assert_eq!(level_color(&az, 1), "#22e622");
        let (_, svg) = run(
            &emb8(),
            &ScatterOptions {
                color_by: Some(1),
                ..Default::default()
            },
        );
        assert!(svg.contains(&level_color(&Factor::indexed("b", 4), 3)));
    }
}
