//! SVG rendering of a two-dimensional region scan.

use std::fmt::Write;

use super::{Classification, RegionScan};
use crate::error::{Error, Result};

const SIZE: f64 = 1000.0;

fn color(c: Classification) -> &'static str {
    match c {
        Classification::Stable => "#cfe8cf",
        Classification::Unstable => "#f4c7c3",
        Classification::Marginal => "#fff2a8",
    }
}

/// Heatmap of grid classes with the traced boundary and optimal points overlaid. The first
/// coordinate runs left to right and the second bottom to top.
pub fn render_svg(scan: &RegionScan) -> Result<String> {
    if scan.n != 2 {
        return Err(Error::Usage(
            "SVG rendering needs two subpopulations".into(),
        ));
    }
    let res = scan.resolution;
    let cell = SIZE / (res - 1) as f64;
    let sx = |v: f64| v * SIZE;
    let sy = |v: f64| (1.0 - v) * SIZE;
    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" viewBox="0 0 1000 1000" width="1000" height="1000">"#
    );
    let _ = writeln!(out, r#"<g shape-rendering="crispEdges">"#);
    for r in 0..res {
        let y0 = (sy(r as f64 / (res - 1) as f64) - cell / 2.0).max(0.0);
        let y1 = (sy(r as f64 / (res - 1) as f64) + cell / 2.0).min(SIZE);
        let mut c = 0;
        while c < res {
            let class = scan.classes[r * res + c];
            let mut end = c;
            while end + 1 < res && scan.classes[r * res + end + 1] == class {
                end += 1;
            }
            let x0 = (sx(c as f64 / (res - 1) as f64) - cell / 2.0).max(0.0);
            let x1 = (sx(end as f64 / (res - 1) as f64) + cell / 2.0).min(SIZE);
            let _ = writeln!(
                out,
                r#"<rect x="{x0:.3}" y="{y0:.3}" width="{:.3}" height="{:.3}" fill="{}"/>"#,
                x1 - x0,
                y1 - y0,
                color(class)
            );
            c = end + 1;
        }
    }
    let _ = writeln!(out, "</g>");
    for line in &scan.boundary {
        let pts: Vec<String> = line
            .points
            .iter()
            .map(|p| format!("{:.3},{:.3}", sx(p[0]), sy(p[1])))
            .collect();
        let tag = if line.closed { "polygon" } else { "polyline" };
        let _ = writeln!(
            out,
            r#"<{tag} points="{}" fill="none" stroke="black" stroke-width="3"/>"#,
            pts.join(" ")
        );
    }
    for p in &scan.x_star_set {
        let _ = writeln!(
            out,
            r##"<circle cx="{:.3}" cy="{:.3}" r="8" fill="#c0392b"/>"##,
            sx(p[0]),
            sy(p[1])
        );
    }
    out.push_str("</svg>\n");
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsl::InteractionSpec;
    use crate::stability::{scan_region, RegionOptions};
    use crate::state::ModelParams;
    use nalgebra::DMatrix;

    #[test]
    fn renders_heatmap_boundary_and_optimum() {
        let p = ModelParams::new(
            1.0,
            InteractionSpec::constant(DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 1.0, 2.0]))
                .unwrap(),
        )
        .unwrap();
        let scan = scan_region(
            &p,
            &RegionOptions {
                grid_resolution: 11,
                ..Default::default()
            },
        )
        .unwrap();
        let svg = render_svg(&scan).unwrap();
        assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));
        assert!(svg.contains(r#"viewBox="0 0 1000 1000""#));
        assert_eq!(svg.matches("<polyline").count(), 1);
        // (1, 0) maps to the bottom-right corner
        assert!(svg.contains(r#"cx="1000.000" cy="1000.000""#));
    }
}
