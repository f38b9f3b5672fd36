//! Static SVG heatmaps of grid files, with contour lines and transparent
//! masked cells. Cells on the `(t, s)` plane are drawn as parallelograms.

use std::fmt::Write as _;

use clap::ValueEnum;
use twoscale::Plane;

use crate::error::{CliError, Result};
use crate::io::GridFile;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, ValueEnum)]
pub enum Palette {
    #[default]
    Viridis,
    Greys,
    Heat,
}

impl Palette {
    fn stops(self) -> &'static [[u8; 3]] {
        match self {
            Palette::Viridis => &[[68, 1, 84], [59, 82, 139], [33, 145, 140], [94, 201, 98], [253, 231, 37]],
            Palette::Greys => &[[245, 245, 245], [20, 20, 20]],
            Palette::Heat => &[[255, 255, 204], [254, 178, 76], [240, 59, 32], [128, 0, 38]],
        }
    }

    /// Colour at `x` in `[0, 1]`.
    fn color(self, x: f64) -> String {
        let stops = self.stops();
        let pos = x.clamp(0.0, 1.0) * (stops.len() - 1) as f64;
        let k = (pos.floor() as usize).min(stops.len() - 2);
        let f = pos - k as f64;
        let mix = |c: usize| (stops[k][c] as f64 + f * (stops[k + 1][c] as f64 - stops[k][c] as f64)).round() as u8;
        format!("#{:02x}{:02x}{:02x}", mix(0), mix(1), mix(2))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RenderOptions {
    pub palette: Palette,
    /// Explicit contour levels; when empty, `n_levels` evenly spaced ones.
    pub levels: Vec<f64>,
    pub n_levels: usize,
    /// Plane to draw on; the grid's own when absent.
    pub plane: Option<Plane>,
    /// Hide cells with `u + s` beyond this.
    pub t_max: Option<f64>,
    /// Leave cells outside the data support transparent.
    pub cut_extrapolated: bool,
    pub title: Option<String>,
    pub x_label: Option<String>,
    pub y_label: Option<String>,
}

impl Default for RenderOptions {
    fn default() -> Self {
        Self {
            palette: Palette::default(),
            levels: Vec::new(),
            n_levels: 6,
            plane: None,
            t_max: None,
            cut_extrapolated: true,
            title: None,
            x_label: None,
            y_label: None,
        }
    }
}

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 480.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 110.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 55.0;

/// Maps data coordinates on the drawing plane to SVG pixels.
struct Frame {
    plane: Plane,
    x: (f64, f64),
    y: (f64, f64),
}

impl Frame {
    fn plane_xy(&self, u: f64, s: f64) -> (f64, f64) {
        match self.plane {
            Plane::Us => (u, s),
            Plane::Ts => (u + s, s),
        }
    }

    fn px(&self, u: f64, s: f64) -> (f64, f64) {
        let (x, y) = self.plane_xy(u, s);
        let fx = (x - self.x.0) / (self.x.1 - self.x.0);
        let fy = (y - self.y.0) / (self.y.1 - self.y.0);
        (LEFT + fx * (WIDTH - LEFT - RIGHT), HEIGHT - BOTTOM - fy * (HEIGHT - TOP - BOTTOM))
    }
}

/// Tick positions at a 1, 2 or 5 multiple of a power of ten.
fn ticks(lo: f64, hi: f64) -> (Vec<f64>, usize) {
    let raw = (hi - lo) / 5.0;
    if !(raw > 0.0) {
        return (vec![lo], 0);
    }
    let mag = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 5.0, 10.0].iter().map(|m| m * mag).find(|&s| s >= raw).unwrap_or(10.0 * mag);
    let decimals = (-step.log10().floor()).max(0.0) as usize;
    let first = (lo / step).ceil() as i64;
    let last = (hi / step).floor() as i64;
    ((first..=last).map(|k| k as f64 * step).collect(), decimals)
}

fn label(v: f64, decimals: usize) -> String {
    let s = format!("{v:.decimals$}");
    if s.starts_with('-') && s.trim_start_matches(['-', '0', '.']).is_empty() {
        s[1..].to_string()
    } else {
        s
    }
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// Contour segments of the level `z` through the lattice of cell centres,
/// in `(u, s)` coordinates.
fn contour_segments(grid: &GridFile, visible: &[Vec<bool>], z: f64) -> Vec<[(f64, f64); 2]> {
    let (u, s) = (&grid.meta.u_values, &grid.meta.s_values);
    let v = &grid.values;
    let mut out = Vec::new();
    for i in 0..u.len().saturating_sub(1) {
        for j in 0..s.len().saturating_sub(1) {
            // Corners counter-clockwise from bottom-left.
            let corners = [(i, j), (i + 1, j), (i + 1, j + 1), (i, j + 1)];
            if corners.iter().any(|&(a, b)| !visible[a][b]) {
                continue;
            }
            let val: Vec<f64> = corners.iter().map(|&(a, b)| v[[a, b]]).collect();
            let pos: Vec<(f64, f64)> = corners.iter().map(|&(a, b)| (u[a], s[b])).collect();
            let cross = |e: usize| {
                let (a, b) = (e, (e + 1) % 4);
                let t = (z - val[a]) / (val[b] - val[a]);
                (pos[a].0 + t * (pos[b].0 - pos[a].0), pos[a].1 + t * (pos[b].1 - pos[a].1))
            };
            let above: Vec<bool> = val.iter().map(|&x| x > z).collect();
            let edges: Vec<usize> = (0..4).filter(|&e| above[e] != above[(e + 1) % 4]).collect();
            match edges.len() {
                2 => out.push([cross(edges[0]), cross(edges[1])]),
                4 => {
                    // Saddle: the centre value decides which corners connect.
                    let centre_above = val.iter().sum::<f64>() / 4.0 > z;
                    if centre_above == above[0] {
                        out.push([cross(0), cross(1)]);
                        out.push([cross(2), cross(3)]);
                    } else {
                        out.push([cross(3), cross(0)]);
                        out.push([cross(1), cross(2)]);
                    }
                }
                _ => {}
            }
        }
    }
    out
}

pub fn render_svg(grid: &GridFile, options: &RenderOptions) -> Result<String> {
    let meta = &grid.meta;
    let (n_u, n_s) = (meta.u_values.len(), meta.s_values.len());
    if n_u == 0 || n_s == 0 || grid.values.dim() != (n_u, n_s) {
        return Err(CliError::Schema("grid has no cells".into()));
    }
    let plane = options.plane.unwrap_or(meta.plane);
    let (hu, hs) = (meta.du / 2.0, meta.ds / 2.0);
    let visible: Vec<Vec<bool>> = (0..n_u)
        .map(|i| {
            (0..n_s)
                .map(|j| {
                    let (u, s) = (meta.u_values[i], meta.s_values[j]);
                    grid.values[[i, j]].is_finite()
                        && (grid.present[[i, j]] || !options.cut_extrapolated)
                        && options.t_max.is_none_or(|t| u + s <= t)
                })
                .collect()
        })
        .collect();

    let shown: Vec<f64> =
        (0..n_u).flat_map(|i| (0..n_s).map(move |j| (i, j))).filter(|&(i, j)| visible[i][j]).map(|(i, j)| grid.values[[i, j]]).collect();
    let (v_min, v_max) = shown.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| (a.min(x), b.max(x)));
    let scale = |x: f64| if v_max > v_min { (x - v_min) / (v_max - v_min) } else { 0.5 };

    // Drawing extent covers every cell on the chosen plane.
    let mut frame = Frame { plane, x: (f64::INFINITY, f64::NEG_INFINITY), y: (f64::INFINITY, f64::NEG_INFINITY) };
    for &u in &meta.u_values {
        for &s in &meta.s_values {
            for (du, ds) in [(-hu, -hs), (hu, -hs), (hu, hs), (-hu, hs)] {
                let (x, y) = frame.plane_xy(u + du, s + ds);
                frame.x = (frame.x.0.min(x), frame.x.1.max(x));
                frame.y = (frame.y.0.min(y), frame.y.1.max(y));
            }
        }
    }
    if let (Plane::Ts, Some(t)) = (plane, options.t_max) {
        frame.x.1 = frame.x.1.min(t + hu + hs);
    }

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(svg, r#"<rect class="background" x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);

    let _ = writeln!(svg, r#"<g class="cells" stroke="none" shape-rendering="crispEdges">"#);
    for i in 0..n_u {
        for j in 0..n_s {
            let (u, s) = (meta.u_values[i], meta.s_values[j]);
            let (class, fill) = if visible[i][j] {
                ("cell", options.palette.color(scale(grid.values[[i, j]])))
            } else {
                ("masked", "none".to_string())
            };
            match plane {
                Plane::Us => {
                    let (x0, y0) = frame.px(u - hu, s + hs);
                    let (x1, y1) = frame.px(u + hu, s - hs);
                    let _ = writeln!(
                        svg,
                        r#"<rect class="{class}" x="{x0:.2}" y="{y0:.2}" width="{:.2}" height="{:.2}" fill="{fill}"/>"#,
                        x1 - x0,
                        y1 - y0
                    );
                }
                Plane::Ts => {
                    let pts: Vec<String> = [(-hu, -hs), (hu, -hs), (hu, hs), (-hu, hs)]
                        .iter()
                        .map(|&(du, ds)| {
                            let (x, y) = frame.px(u + du, s + ds);
                            format!("{x:.2},{y:.2}")
                        })
                        .collect();
                    let _ = writeln!(svg, r#"<polygon class="{class}" points="{}" fill="{fill}"/>"#, pts.join(" "));
                }
            }
        }
    }
    let _ = writeln!(svg, "</g>");

    let levels: Vec<f64> = if !options.levels.is_empty() {
        options.levels.clone()
    } else if v_max > v_min {
        let n = options.n_levels;
        (1..=n).map(|k| v_min + (v_max - v_min) * k as f64 / (n + 1) as f64).collect()
    } else {
        Vec::new()
    };
    let _ = writeln!(svg, r#"<g class="contours" fill="none" stroke="black" stroke-width="0.8">"#);
    for z in levels {
        let segments = contour_segments(grid, &visible, z);
        if segments.is_empty() {
            continue;
        }
        let mut d = String::new();
        for [a, b] in segments {
            let (pa, pb) = (frame.px(a.0, a.1), frame.px(b.0, b.1));
            let _ = write!(d, "M{:.2},{:.2}L{:.2},{:.2}", pa.0, pa.1, pb.0, pb.1);
        }
        let _ = writeln!(svg, r#"<path class="contour" data-level="{z}" d="{d}"/>"#);
    }
    let _ = writeln!(svg, "</g>");

    // Axes.
    let (x0, y0) = (LEFT, HEIGHT - BOTTOM);
    let (x1, y1) = (WIDTH - RIGHT, TOP);
    let _ = writeln!(svg, r#"<g class="axes" stroke="black" fill="black">"#);
    let _ = writeln!(svg, r#"<line x1="{x0}" y1="{y0}" x2="{x1}" y2="{y0}"/>"#);
    let _ = writeln!(svg, r#"<line x1="{x0}" y1="{y0}" x2="{x0}" y2="{y1}"/>"#);
    let (xt, xd) = ticks(frame.x.0, frame.x.1);
    for t in xt {
        let px = x0 + (t - frame.x.0) / (frame.x.1 - frame.x.0) * (x1 - x0);
        let _ = writeln!(svg, r#"<line x1="{px:.2}" y1="{y0}" x2="{px:.2}" y2="{:.2}"/>"#, y0 + 5.0);
        let _ = writeln!(svg, r#"<text x="{px:.2}" y="{:.2}" text-anchor="middle" stroke="none">{}</text>"#, y0 + 18.0, label(t, xd));
    }
    let (yt, yd) = ticks(frame.y.0, frame.y.1);
    for t in yt {
        let py = y0 - (t - frame.y.0) / (frame.y.1 - frame.y.0) * (y0 - y1);
        let _ = writeln!(svg, r#"<line x1="{:.2}" y1="{py:.2}" x2="{x0}" y2="{py:.2}"/>"#, x0 - 5.0);
        let _ = writeln!(svg, r#"<text x="{:.2}" y="{:.2}" text-anchor="end" stroke="none">{}</text>"#, x0 - 8.0, py + 4.0, label(t, yd));
    }
    let _ = writeln!(svg, "</g>");

    let default_x = match plane {
        Plane::Us => "u",
        Plane::Ts => "t",
    };
    let x_label = escape(options.x_label.as_deref().unwrap_or(default_x));
    let y_label = escape(options.y_label.as_deref().unwrap_or("s"));
    let title = escape(options.title.as_deref().unwrap_or(&meta.quantity));
    let _ = writeln!(svg, r#"<text class="title" x="{:.2}" y="24" text-anchor="middle" font-size="15">{title}</text>"#, (x0 + x1) / 2.0);
    let _ = writeln!(svg, r#"<text class="xlabel" x="{:.2}" y="{:.2}" text-anchor="middle">{x_label}</text>"#, (x0 + x1) / 2.0, HEIGHT - 12.0);
    let _ = writeln!(
        svg,
        r#"<text class="ylabel" x="18" y="{:.2}" text-anchor="middle" transform="rotate(-90 18 {:.2})">{y_label}</text>"#,
        (y0 + y1) / 2.0,
        (y0 + y1) / 2.0
    );

    // Colour bar.
    if !shown.is_empty() {
        let (bx, steps) = (WIDTH - RIGHT + 25.0, 50);
        let h = (y0 - y1) / steps as f64;
        let _ = writeln!(svg, r#"<g class="legend" stroke="none">"#);
        for k in 0..steps {
            let f = (k as f64 + 0.5) / steps as f64;
            let y = y0 - (k + 1) as f64 * h;
            let _ = writeln!(svg, r#"<rect x="{bx:.2}" y="{y:.2}" width="15" height="{:.2}" fill="{}"/>"#, h + 0.01, options.palette.color(f));
        }
        let fmt = |v: f64| format!("{:.3e}", v);
        let _ = writeln!(svg, r#"<text x="{:.2}" y="{:.2}">{}</text>"#, bx + 20.0, y0, fmt(v_min));
        let _ = writeln!(svg, r#"<text x="{:.2}" y="{:.2}">{}</text>"#, bx + 20.0, y1 + 10.0, fmt(v_max));
        let _ = writeln!(svg, "</g>");
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, Array2};

    fn grid2x2(present: Array2<bool>) -> GridFile {
        GridFile::new("hazard", Plane::Us, &[0.5, 1.5], &[0.5, 1.5], array![[1.0, 2.0], [3.0, 4.0]], present)
    }

    #[test]
    fn two_by_two_grid_has_four_coloured_cells() {
        let svg = render_svg(&grid2x2(Array2::from_elem((2, 2), true)), &RenderOptions::default()).unwrap();
        assert_eq!(svg.matches(r#"class="cell""#).count(), 4);
        assert_eq!(svg.matches(r#"class="masked""#).count(), 0);
    }

    #[test]
    fn masked_cells_are_transparent() {
        let present = array![[true, false], [true, true]];
        let svg = render_svg(&grid2x2(present.clone()), &RenderOptions::default()).unwrap();
        assert_eq!(svg.matches(r#"class="cell""#).count(), 3);
        assert!(svg.contains(r#"class="masked""#));
        let masked = svg.lines().find(|l| l.contains(r#"class="masked""#)).unwrap();
        assert!(masked.contains(r#"fill="none""#));
        let kept = RenderOptions { cut_extrapolated: false, ..Default::default() };
        let svg = render_svg(&grid2x2(present), &kept).unwrap();
        assert_eq!(svg.matches(r#"class="cell""#).count(), 4);
    }

    #[test]
    fn rendering_is_deterministic() {
        let g = grid2x2(Array2::from_elem((2, 2), true));
        let a = render_svg(&g, &RenderOptions::default()).unwrap();
        let b = render_svg(&g, &RenderOptions::default()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn ts_plane_draws_parallelograms_and_respects_t_max() {
        let g = grid2x2(Array2::from_elem((2, 2), true));
        let options = RenderOptions { plane: Some(Plane::Ts), t_max: Some(2.5), ..Default::default() };
        let svg = render_svg(&g, &options).unwrap();
        assert_eq!(svg.matches(r#"<polygon class="cell""#).count(), 3);
        assert_eq!(svg.matches(r#"<polygon class="masked""#).count(), 1);
    }

    #[test]
    fn contour_through_a_ramp_is_straight() {
        let u = [0.0, 1.0, 2.0];
        let values = Array2::from_shape_fn((3, 3), |(i, _)| i as f64);
        let g = GridFile::new("ramp", Plane::Us, &u, &u, values, Array2::from_elem((3, 3), true));
        let visible = vec![vec![true; 3]; 3];
        let segments = contour_segments(&g, &visible, 0.5);
        assert_eq!(segments.len(), 2);
        for seg in segments {
            assert!(seg.iter().all(|p| (p.0 - 0.5).abs() < 1e-12));
        }
    }

    #[test]
    fn saddle_emits_two_segments() {
        let g = GridFile::new("saddle", Plane::Us, &[0.0, 1.0], &[0.0, 1.0], array![[1.0, 0.0], [0.0, 1.0]], Array2::from_elem((2, 2), true));
        let segments = contour_segments(&g, &[vec![true; 2], vec![true; 2]], 0.5);
        assert_eq!(segments.len(), 2);
    }

    #[test]
    fn ticks_are_round_numbers() {
        let (t, d) = ticks(23.5, 90.5);
        assert_eq!(t, vec![40.0, 60.0, 80.0]);
        assert_eq!(d, 0);
        assert_eq!(ticks(0.0, 1.0).0.len(), 6);
    }
}
