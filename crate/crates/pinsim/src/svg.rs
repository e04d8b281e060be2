//! Deterministic SVG rendering of 1D interface snapshots.
//!
//! The unit torus spans the horizontal axis with a uniform scale shared by
//! the vertical axis, so obstacle balls render as true disks. Identical
//! inputs produce identical bytes.

use std::fmt::Write;

use crate::obstacle::ObstacleField;
use crate::solver::TorusGrid;
use crate::{Error, Result};

const WIDTH: f64 = 800.0;
const MARGIN: f64 = 40.0;

fn px(v: f64) -> String {
    format!("{v:.4}")
}

/// Render the interface polyline over shaded obstacle disks.
pub fn render_profile_svg(grid: &TorusGrid, u: &[f64], field: &ObstacleField) -> Result<String> {
    if grid.dimension() != 1 {
        return Err(Error::UnsupportedDimension(grid.dimension()));
    }
    if u.len() != grid.nodes() {
        return Err(Error::Contract("snapshot length does not match the grid".into()));
    }
    let spec = field.spec();
    let reach = spec.slab_half_height + spec.support_radius();
    let mut y_min = -reach;
    let mut y_max = reach;
    for &v in u {
        y_min = y_min.min(v);
        y_max = y_max.max(v);
    }
    y_min -= 0.05 * (y_max - y_min);
    y_max += 0.05 * (y_max - y_min);

    let scale = (WIDTH - 2.0 * MARGIN) / 1.0;
    let height = 2.0 * MARGIN + (y_max - y_min) * scale;
    let to_x = |x: f64| MARGIN + x * scale;
    let to_y = |v: f64| MARGIN + (y_max - v) * scale;

    let mut out = String::new();
    write!(
        out,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"0 0 {} {}\">",
        px(WIDTH),
        px(height)
    )
    .unwrap();
    write!(
        out,
        "<rect x=\"0\" y=\"0\" width=\"{}\" height=\"{}\" fill=\"#ffffff\"/>",
        px(WIDTH),
        px(height)
    )
    .unwrap();
    for c in field.centers() {
        write!(
            out,
            "<circle class=\"obstacle\" cx=\"{}\" cy=\"{}\" r=\"{}\" fill=\"#444444\" fill-opacity=\"0.6\"/>",
            px(to_x(c.lateral[0])),
            px(to_y(c.height)),
            px(spec.radius * scale)
        )
        .unwrap();
    }
    out.push_str("<polyline class=\"interface\" fill=\"none\" stroke=\"#c02020\" stroke-width=\"2\" points=\"");
    for (i, &v) in u.iter().enumerate() {
        if i > 0 {
            out.push(' ');
        }
        write!(out, "{},{}", px(to_x(grid.coord(i)[0])), px(to_y(v))).unwrap();
    }
    // Close the periodic trace at x = 1 with the first height.
    write!(out, " {},{}", px(to_x(1.0)), px(to_y(u[0]))).unwrap();
    out.push_str("\"/></svg>");
    Ok(out)
}
