//! Self-contained SVG rendering: mesh wireframes with highlighted Dirichlet
//! nodes, and per-sample panels showing a heat-mapped scalar channel with
//! field-direction arrows (prediction next to ground truth when given).

use crate::dataset::SampleRecord;
use crate::mesh::Mesh;

const PANEL: f64 = 360.0;
const MARGIN: f64 = 20.0;

/// Piecewise-linear viridis approximation.
fn viridis(t: f64) -> (u8, u8, u8) {
    const STOPS: [(f64, f64, f64); 5] = [
        (68.0, 1.0, 84.0),
        (59.0, 82.0, 139.0),
        (33.0, 145.0, 140.0),
        (94.0, 201.0, 98.0),
        (253.0, 231.0, 37.0),
    ];
    let t = t.clamp(0.0, 1.0) * (STOPS.len() - 1) as f64;
    let i = (t.floor() as usize).min(STOPS.len() - 2);
    let f = t - i as f64;
    let lerp = |a: f64, b: f64| (a + f * (b - a)).round() as u8;
    (
        lerp(STOPS[i].0, STOPS[i + 1].0),
        lerp(STOPS[i].1, STOPS[i + 1].1),
        lerp(STOPS[i].2, STOPS[i + 1].2),
    )
}

fn map_point(x: f64, y: f64, x_off: f64) -> (f64, f64) {
    // SVG y grows downward.
    (x_off + MARGIN + x * PANEL, MARGIN + (1.0 - y) * PANEL)
}

/// Wireframe of the triangulation; Dirichlet-flagged nodes are drawn as
/// filled green circles.
pub fn mesh_svg(mesh: &Mesh) -> String {
    let w = PANEL + 2.0 * MARGIN;
    let h = PANEL + 2.0 * MARGIN;
    let mut s = String::new();
    s.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\">\n"
    ));
    s.push_str("<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n");
    for t in &mesh.triangles {
        let pts: Vec<String> = t
            .iter()
            .map(|&v| {
                let (x, y) = map_point(mesh.nodes[v].x, mesh.nodes[v].y, 0.0);
                format!("{x:.2},{y:.2}")
            })
            .collect();
        s.push_str(&format!(
            "<polygon points=\"{}\" fill=\"none\" stroke=\"#999\" stroke-width=\"0.7\"/>\n",
            pts.join(" ")
        ));
    }
    for (i, p) in mesh.nodes.iter().enumerate() {
        let (x, y) = map_point(p.x, p.y, 0.0);
        if mesh.boundary[i] {
            s.push_str(&format!(
                "<circle cx=\"{x:.2}\" cy=\"{y:.2}\" r=\"3\" fill=\"#2a2\"/>\n"
            ));
        } else {
            s.push_str(&format!(
                "<circle cx=\"{x:.2}\" cy=\"{y:.2}\" r=\"1.5\" fill=\"#333\"/>\n"
            ));
        }
    }
    s.push_str("</svg>\n");
    s
}

fn draw_panel(
    s: &mut String,
    record: &SampleRecord,
    values: &[Vec<f64>],
    label: &str,
    x_off: f64,
    pot_max: f64,
    field_max: f64,
) {
    let has_field = values.first().map_or(false, |row| row.len() >= 3);
    for t in &record.tris {
        let mean = t.iter().map(|&v| values[v][0]).sum::<f64>() / 3.0;
        let (r, g, b) = viridis(if pot_max > 0.0 {
            0.5 + 0.5 * mean / pot_max
        } else {
            0.5
        });
        let pts: Vec<String> = t
            .iter()
            .map(|&v| {
                let (x, y) = map_point(record.nodes[v][0], record.nodes[v][1], x_off);
                format!("{x:.2},{y:.2}")
            })
            .collect();
        s.push_str(&format!(
            "<polygon points=\"{}\" fill=\"rgb({r},{g},{b})\" stroke=\"rgb({r},{g},{b})\" stroke-width=\"0.4\"/>\n",
            pts.join(" ")
        ));
    }
    if has_field && field_max > 0.0 {
        let arrow = 0.035 * PANEL;
        for (i, row) in values.iter().enumerate() {
            let (fx, fy) = (row[1], row[2]);
            let mag = (fx * fx + fy * fy).sqrt();
            if mag < 1e-3 * field_max {
                continue;
            }
            let scale = arrow * (mag / field_max).min(1.0) / mag;
            let (x0, y0) = map_point(record.nodes[i][0], record.nodes[i][1], x_off);
            // Flip dy for SVG coordinates.
            let (dx, dy) = (fx * scale, -fy * scale);
            s.push_str(&format!(
                "<line x1=\"{x0:.2}\" y1=\"{y0:.2}\" x2=\"{:.2}\" y2=\"{:.2}\" stroke=\"white\" stroke-width=\"0.9\"/>\n",
                x0 + dx,
                y0 + dy
            ));
            s.push_str(&format!(
                "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"1.1\" fill=\"white\"/>\n",
                x0 + dx,
                y0 + dy
            ));
        }
    }
    s.push_str(&format!(
        "<text x=\"{:.1}\" y=\"{:.1}\" font-family=\"sans-serif\" font-size=\"13\">{label}</text>\n",
        x_off + MARGIN,
        MARGIN - 6.0
    ));
}

/// One sample as SVG: ground-truth panel, plus a prediction panel when
/// given. The scalar channel (potential or x-displacement) colors the
/// triangles; remaining channels are drawn as direction arrows.
pub fn sample_svg(record: &SampleRecord, prediction: Option<&[Vec<f64>]>) -> String {
    let panels = 1 + usize::from(prediction.is_some());
    let w = panels as f64 * (PANEL + 2.0 * MARGIN);
    let h = PANEL + 2.0 * MARGIN;
    let mut s = String::new();
    s.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\">\n"
    ));
    s.push_str("<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n");

    let pot_max = record
        .target
        .iter()
        .chain(prediction.into_iter().flatten())
        .map(|row| row[0].abs())
        .fold(0.0f64, f64::max);
    let field_max = record
        .target
        .iter()
        .chain(prediction.into_iter().flatten())
        .filter(|row| row.len() >= 3)
        .map(|row| (row[1] * row[1] + row[2] * row[2]).sqrt())
        .fold(0.0f64, f64::max);

    draw_panel(&mut s, record, &record.target, "gt", 0.0, pot_max, field_max);
    if let Some(pred) = prediction {
        draw_panel(
            &mut s,
            record,
            pred,
            "pred",
            PANEL + 2.0 * MARGIN,
            pot_max,
            field_max,
        );
    }
    s.push_str("</svg>\n");
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{generate_mesh, ShapeSpec, ShapeTag};

    #[test]
    fn mesh_svg_is_well_formed() {
        let mesh = generate_mesh(&ShapeSpec::default_for(ShapeTag::UMesh)).unwrap();
        let svg = mesh_svg(&mesh);
        assert!(svg.starts_with("<svg"));
        assert!(svg.ends_with("</svg>\n"));
        assert!(svg.matches("<circle").count() >= mesh.n_nodes());
    }
}
