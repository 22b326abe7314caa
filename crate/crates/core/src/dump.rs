//! Curve dumps: CSV (`t,x,y`) and SVG polyline renderings of the
//! fundamental chart domain with orientation arrows.

use std::fmt::Write as _;

use crate::loops::{LoopPath, Multicurve};
use crate::scalar::{Real, V2};
use crate::surface::{chart_bounds, SurfaceModel};

/// CSV dump of one loop: header `t,x,y`, rows at `t_k = k p / N`,
/// coordinates unreduced.
pub fn loop_csv<S: Real>(lp: &LoopPath<S>) -> String {
    let mut out = String::from("t,x,y\n");
    let n = lp.samples.len();
    for (k, s) in lp.samples.iter().enumerate() {
        let t = lp.period.as_f64() * k as f64 / n as f64;
        let _ = writeln!(out, "{:.12},{:.12},{:.12}", t, s[0].as_f64(), s[1].as_f64());
    }
    out
}

const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];

/// SVG rendering of a multicurve over the fundamental domain. Curves are
/// reduced into the domain with split polylines at the wrap boundary and a
/// small arrowhead marks the orientation of each component.
pub fn multicurve_svg<S: Real>(surface: &SurfaceModel<S>, mc: &Multicurve<S>) -> String {
    let (lo, hi) = chart_bounds(surface);
    let (lo, hi) = (
        [lo[0].as_f64(), lo[1].as_f64()],
        [hi[0].as_f64(), hi[1].as_f64()],
    );
    let w = 512.0f64;
    let h = 512.0f64;
    let sx = |x: f64| (x - lo[0]) / (hi[0] - lo[0]) * w;
    let sy = |y: f64| h - (y - lo[1]) / (hi[1] - lo[1]) * h;

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\">"
    );
    let _ = writeln!(
        svg,
        "  <rect x=\"0\" y=\"0\" width=\"{w}\" height=\"{h}\" fill=\"white\" stroke=\"#999\"/>"
    );
    for (ci, lp) in mc.components.iter().enumerate() {
        let color = PALETTE[ci % PALETTE.len()];
        let n = lp.samples.len();
        let reduced: Vec<[f64; 2]> = (0..=n)
            .map(|k| {
                let q = surface.reduce(lp.sample_ext(k as isize));
                [q[0].as_f64(), q[1].as_f64()]
            })
            .collect();
        // split the polyline where the reduced trace jumps across the boundary
        let span = [(hi[0] - lo[0]) * 0.5, (hi[1] - lo[1]) * 0.5];
        let mut runs: Vec<Vec<[f64; 2]>> = vec![vec![reduced[0]]];
        for win in reduced.windows(2) {
            let (a, b) = (win[0], win[1]);
            if (a[0] - b[0]).abs() > span[0] || (a[1] - b[1]).abs() > span[1] {
                runs.push(Vec::new());
            }
            runs.last_mut().unwrap().push(b);
        }
        for run in runs.iter().filter(|r| r.len() >= 2) {
            let pts: Vec<String> = run
                .iter()
                .map(|p| format!("{:.2},{:.2}", sx(p[0]), sy(p[1])))
                .collect();
            let _ = writeln!(
                svg,
                "  <polyline points=\"{}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\"/>",
                pts.join(" ")
            );
        }
        // orientation arrowhead near the first sample
        let a = reduced[0];
        let b = reduced[1 % reduced.len()];
        let (ax, ay) = (sx(a[0]), sy(a[1]));
        let (bx, by) = (sx(b[0]), sy(b[1]));
        let (dx, dy) = (bx - ax, by - ay);
        let len = (dx * dx + dy * dy).sqrt().max(1e-9);
        let (ux, uy) = (dx / len, dy / len);
        let size = 6.0;
        let tip = (ax + ux * size * 2.0, ay + uy * size * 2.0);
        let left = (ax - uy * size * 0.6, ay + ux * size * 0.6);
        let right = (ax + uy * size * 0.6, ay - ux * size * 0.6);
        let _ = writeln!(
            svg,
            "  <polygon points=\"{:.2},{:.2} {:.2},{:.2} {:.2},{:.2}\" fill=\"{color}\"/>",
            tip.0, tip.1, left.0, left.1, right.0, right.1
        );
    }
    svg.push_str("</svg>\n");
    svg
}

/// Parse a `t,x,y` CSV back into samples; the period is the last `t` plus
/// one step (uniform spacing assumed).
pub fn loop_from_csv<S: Real>(
    surface: &SurfaceModel<S>,
    text: &str,
) -> crate::error::Result<LoopPath<S>> {
    let mut ts: Vec<f64> = Vec::new();
    let mut samples: Vec<V2<S>> = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || (lineno == 0 && line.starts_with('t')) {
            continue;
        }
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != 3 {
            return Err(crate::error::Error::Parse {
                pos: lineno + 1,
                msg: format!("expected 3 columns, got {}", cols.len()),
            });
        }
        let parse = |s: &str| -> crate::error::Result<f64> {
            s.trim().parse::<f64>().map_err(|_| crate::error::Error::Parse {
                pos: lineno + 1,
                msg: format!("invalid number '{s}'"),
            })
        };
        ts.push(parse(cols[0])?);
        samples.push([S::of(parse(cols[1])?), S::of(parse(cols[2])?)]);
    }
    if samples.len() < 2 {
        return Err(crate::error::Error::Invalid("curve file too short".into()));
    }
    let n = ts.len();
    let step = if n >= 2 { ts[1] - ts[0] } else { 1.0 };
    let period = ts[n - 1] + step;
    LoopPath::new(surface, samples, S::of(period.max(1e-3)))
}
