//! SVG quiver plots for planar charts: the field direction at every grid
//! node, with the lines through the origin that the field leaves
//! invariant drawn in red on top.
//!
//! Output is deterministic byte for byte for identical inputs; floats are
//! printed with fixed precision and nothing depends on iteration order
//! of a map or on time.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{OddError, Result};
use crate::expr::Expr;
use crate::flow::radial_directions;
use crate::metric::OddMetric;

const SIZE: f64 = 560.0;
const MARGIN: f64 = 32.0;

/// Render the quiver. Arrows are unit-normalized; grid nodes where the
/// field does not evaluate to a finite nonzero vector (the degeneracy
/// locus, typically) are left empty.
pub fn field_plot_svg(m: &OddMetric, field: &[Expr], grid: usize) -> Result<String> {
    if m.dim() != 2 || field.len() != 2 {
        return Err(OddError::NotPlanar {
            dim: m.dim().max(field.len()),
        });
    }
    let grid = grid.max(2);
    let box_ = m.domain_box();
    let (lo_x, hi_x) = box_[0];
    let (lo_y, hi_y) = box_[1];
    let span = SIZE - 2.0 * MARGIN;
    let px = |x: f64, y: f64| -> (f64, f64) {
        (
            MARGIN + (x - lo_x) / (hi_x - lo_x) * span,
            SIZE - MARGIN - (y - lo_y) / (hi_y - lo_y) * span,
        )
    };

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{SIZE}\" height=\"{SIZE}\" viewBox=\"0 0 {SIZE} {SIZE}\">"
    );
    let _ = writeln!(svg, "<rect width=\"{SIZE}\" height=\"{SIZE}\" fill=\"white\"/>");

    // Frame around the data area.
    let _ = writeln!(
        svg,
        "<rect x=\"{MARGIN}\" y=\"{MARGIN}\" width=\"{span}\" height=\"{span}\" fill=\"none\" stroke=\"#999\" stroke-width=\"1\"/>"
    );

    // Arrow length in data units: a bit under one cell.
    let cell = ((hi_x - lo_x) / (grid - 1) as f64).min((hi_y - lo_y) / (grid - 1) as f64);
    let half = 0.38 * cell;

    let _ = writeln!(svg, "<g class=\"arrows\" stroke=\"#45618e\" stroke-width=\"1.1\" fill=\"none\">");
    for iy in 0..grid {
        for ix in 0..grid {
            let x = lo_x + (hi_x - lo_x) * ix as f64 / (grid - 1) as f64;
            let y = lo_y + (hi_y - lo_y) * iy as f64 / (grid - 1) as f64;
            let vx = field[0].eval(&[x, y]).as_finite();
            let vy = field[1].eval(&[x, y]).as_finite();
            let (Some(vx), Some(vy)) = (vx, vy) else {
                continue;
            };
            let norm = (vx * vx + vy * vy).sqrt();
            if !norm.is_finite() || norm < 1e-12 {
                continue;
            }
            let (ux, uy) = (vx / norm, vy / norm);
            let (x0, y0) = px(x - half * ux, y - half * uy);
            let (x1, y1) = px(x + half * ux, y + half * uy);
            // Head: two 4px barbs at 150 degrees off the shaft.
            let ang = (y1 - y0).atan2(x1 - x0);
            let barb = 4.0;
            let (ba, bb) = (ang + 2.6179938779914944, ang - 2.6179938779914944);
            let _ = writeln!(
                svg,
                "<path d=\"M{:.2} {:.2} L{:.2} {:.2} M{:.2} {:.2} L{:.2} {:.2} M{:.2} {:.2} L{:.2} {:.2}\"/>",
                x0, y0, x1, y1,
                x1 + barb * ba.cos(), y1 + barb * ba.sin(), x1, y1,
                x1, y1, x1 + barb * bb.cos(), y1 + barb * bb.sin(),
            );
        }
    }
    let _ = writeln!(svg, "</g>");

    // Invariant lines through the origin, one stroke per line even though
    // the sweep reports both rays.
    let radius = 0.25 * (hi_x - lo_x).min(hi_y - lo_y);
    let dirs = radial_directions(field, &[0.0, 0.0], radius)?;
    let mut slopes: Vec<(f64, [f64; 2])> = dirs.iter().map(|d| (d.slope, d.direction)).collect();
    slopes.sort_by(|a, b| a.0.total_cmp(&b.0));
    slopes.dedup_by(|a, b| (a.0 - b.0).abs() < 1e-6);
    let _ = writeln!(svg, "<g class=\"rays\" stroke=\"#cc2222\" stroke-width=\"1.8\" fill=\"none\">");
    for (_, dir) in &slopes {
        if let Some(((ax, ay), (bx, by))) = clip_through_origin(*dir, box_) {
            let (x0, y0) = px(ax, ay);
            let (x1, y1) = px(bx, by);
            let _ = writeln!(svg, "<path d=\"M{x0:.2} {y0:.2} L{x1:.2} {y1:.2}\"/>");
        }
    }
    let _ = writeln!(svg, "</g>");
    let _ = writeln!(svg, "</svg>");
    Ok(svg)
}

/// Render and write to a file.
pub fn emit_field_plot(m: &OddMetric, field: &[Expr], grid: usize, out: &Path) -> Result<()> {
    let svg = field_plot_svg(m, field, grid)?;
    fs::write(out, svg)?;
    Ok(())
}

/// Intersect the line t * dir through the origin with the box; None when
/// the origin line misses it (origin outside and direction pointing away).
fn clip_through_origin(
    dir: [f64; 2],
    box_: &[(f64, f64)],
) -> Option<((f64, f64), (f64, f64))> {
    let mut t_min = f64::NEG_INFINITY;
    let mut t_max = f64::INFINITY;
    for (d, &(lo, hi)) in dir.iter().zip(box_) {
        if d.abs() < 1e-300 {
            if 0.0 < lo || 0.0 > hi {
                return None;
            }
            continue;
        }
        let (a, b) = (lo / d, hi / d);
        t_min = t_min.max(a.min(b));
        t_max = t_max.min(a.max(b));
    }
    if t_min >= t_max {
        return None;
    }
    Some((
        (t_min * dir[0], t_min * dir[1]),
        (t_max * dir[0], t_max * dir[1]),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::parse;
    use crate::fixtures::fixture;

    #[test]
    fn constant_field_fills_the_grid_with_one_ray() {
        let fx = fixture("euclid_2").unwrap();
        let names = ["x", "y"];
        let field = vec![
            parse("1", &names).unwrap(),
            parse("1", &names).unwrap(),
        ];
        let svg = field_plot_svg(&fx.metric, &field, 9).unwrap();
        let arrows = svg.matches("L").count();
        assert!(arrows > 0);
        // 81 arrow paths, each with three strokes.
        let arrow_paths = svg
            .split("class=\"arrows\"")
            .nth(1)
            .unwrap()
            .split("</g>")
            .next()
            .unwrap()
            .matches("<path")
            .count();
        assert_eq!(arrow_paths, 81);
        let ray_paths = svg
            .split("class=\"rays\"")
            .nth(1)
            .unwrap()
            .split("</g>")
            .next()
            .unwrap()
            .matches("<path")
            .count();
        assert_eq!(ray_paths, 1);
    }

    #[test]
    fn cross_frame_field_skips_the_axes_and_marks_its_line() {
        let fx = fixture("r2_cross").unwrap();
        let field = fx.field("E2").unwrap().to_vec();
        let svg = field_plot_svg(&fx.metric, &field, 21).unwrap();
        let arrow_paths = svg
            .split("class=\"arrows\"")
            .nth(1)
            .unwrap()
            .split("</g>")
            .next()
            .unwrap()
            .matches("<path")
            .count();
        // 21 x 21 grid minus the two axes (41 nodes share x = 0 or y = 0).
        assert!(arrow_paths < 21 * 21, "axes were not skipped: {arrow_paths}");
        assert!(arrow_paths >= 21 * 21 - 41, "too many skips: {arrow_paths}");
        let ray_paths = svg
            .split("class=\"rays\"")
            .nth(1)
            .unwrap()
            .split("</g>")
            .next()
            .unwrap()
            .matches("<path")
            .count();
        assert_eq!(ray_paths, 1);
    }

    #[test]
    fn output_is_deterministic() {
        let fx = fixture("r2_cross").unwrap();
        let field = fx.field("E1+E2").unwrap().to_vec();
        let a = field_plot_svg(&fx.metric, &field, 13).unwrap();
        let b = field_plot_svg(&fx.metric, &field, 13).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn non_planar_charts_are_rejected() {
        let fx = fixture("euclid_3").unwrap();
        let field = vec![Expr::one(), Expr::one(), Expr::one()];
        assert!(matches!(
            field_plot_svg(&fx.metric, &field, 9),
            Err(OddError::NotPlanar { dim: 3 })
        ));
    }
}
