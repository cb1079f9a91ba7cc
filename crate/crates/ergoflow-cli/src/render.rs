//! Deterministic SVG rendering of meshes, densities, flow fields and
//! trajectories.

use std::fmt::Write as _;

use ergoflow::flow::CombinedField;
use ergoflow::geom;
use ergoflow::mesh::{InfoDistribution, TriMesh};
use ergoflow::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ColorRamp {
    Viridis,
    Grey,
}

/// Layer toggles and canvas geometry.
#[derive(Debug, Clone)]
pub struct RenderSpec {
    pub width: u32,
    pub height: u32,
    pub wireframe: bool,
    pub density: bool,
    pub field_glyphs: bool,
    pub trajectories: bool,
    pub start_markers: bool,
    pub ramp: ColorRamp,
    pub stroke_width: f64,
}

impl Default for RenderSpec {
    fn default() -> Self {
        RenderSpec {
            width: 800,
            height: 800,
            wireframe: true,
            density: false,
            field_glyphs: false,
            trajectories: true,
            start_markers: true,
            ramp: ColorRamp::Viridis,
            stroke_width: 1.0,
        }
    }
}

const AGENT_COLORS: [&str; 8] = [
    "#e66100", "#5d3a9b", "#1a85ff", "#d41159", "#40b0a6", "#b0a800", "#994f00", "#006cd1",
];

fn viridis(t: f64) -> (u8, u8, u8) {
    // Eight control points of the viridis ramp, linearly interpolated.
    const STOPS: [(f64, [f64; 3]); 8] = [
        (0.0, [68.0, 1.0, 84.0]),
        (0.14, [70.0, 50.0, 127.0]),
        (0.29, [54.0, 92.0, 141.0]),
        (0.43, [39.0, 127.0, 143.0]),
        (0.57, [31.0, 161.0, 135.0]),
        (0.71, [74.0, 194.0, 109.0]),
        (0.86, [159.0, 218.0, 58.0]),
        (1.0, [253.0, 231.0, 37.0]),
    ];
    let t = t.clamp(0.0, 1.0);
    for w in STOPS.windows(2) {
        let (t0, c0) = w[0];
        let (t1, c1) = w[1];
        if t <= t1 {
            let f = if t1 > t0 { (t - t0) / (t1 - t0) } else { 0.0 };
            return (
                (c0[0] + f * (c1[0] - c0[0])) as u8,
                (c0[1] + f * (c1[1] - c0[1])) as u8,
                (c0[2] + f * (c1[2] - c0[2])) as u8,
            );
        }
    }
    (253, 231, 37)
}

fn color(ramp: ColorRamp, t: f64) -> String {
    match ramp {
        ColorRamp::Viridis => {
            let (r, g, b) = viridis(t);
            format!("#{r:02x}{g:02x}{b:02x}")
        }
        ColorRamp::Grey => {
            let v = (255.0 * (1.0 - 0.85 * t.clamp(0.0, 1.0))) as u8;
            format!("#{v:02x}{v:02x}{v:02x}")
        }
    }
}

struct Frame {
    x0: f64,
    y1: f64,
    scale: f64,
}

impl Frame {
    fn to_px(&self, p: [f64; 2]) -> (f64, f64) {
        ((p[0] - self.x0) * self.scale, (self.y1 - p[1]) * self.scale)
    }
}

/// Render the requested layers as an SVG 1.1 document. Byte output is a
/// deterministic function of the inputs.
pub fn render_svg(
    mesh: &TriMesh,
    density: Option<&InfoDistribution>,
    field: Option<&CombinedField>,
    trajectories: Option<&[Vec<[f64; 2]>]>,
    spec: &RenderSpec,
) -> Result<String> {
    if spec.width < 100 || spec.height < 100 {
        return Err(Error::InvalidArgument(
            "canvas must be at least 100x100".into(),
        ));
    }
    if !(spec.wireframe
        || spec.density
        || spec.field_glyphs
        || spec.trajectories
        || spec.start_markers)
    {
        return Err(Error::InvalidArgument("no layers enabled".into()));
    }
    if let Some(d) = density {
        if d.values.len() != mesh.num_vertices() {
            return Err(Error::InvalidArgument(
                "density is not defined on this mesh".into(),
            ));
        }
    }
    if let Some(f) = field {
        if f.velocity.len() != mesh.num_triangles() {
            return Err(Error::InvalidArgument(
                "field is not defined on this mesh".into(),
            ));
        }
    }

    let (lo, hi) = mesh.bounding_box();
    let margin = 0.03 * (hi[0] - lo[0]).max(hi[1] - lo[1]);
    let (x0, y0) = (lo[0] - margin, lo[1] - margin);
    let (x1, y1) = (hi[0] + margin, hi[1] + margin);
    let scale = (spec.width as f64 / (x1 - x0)).min(spec.height as f64 / (y1 - y0));
    let frame = Frame { x0, y1, scale };
    let px = |p: [f64; 2]| {
        let (x, y) = frame.to_px(p);
        format!("{x:.3},{y:.3}")
    };

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"{}\" height=\"{}\" viewBox=\"0 0 {:.3} {:.3}\">",
        spec.width,
        spec.height,
        (x1 - x0) * scale,
        (y1 - y0) * scale
    );
    let _ = writeln!(svg, "<rect width=\"100%\" height=\"100%\" fill=\"#ffffff\"/>");

    if spec.density {
        let d = density.ok_or_else(|| {
            Error::InvalidArgument("density layer enabled but no density given".into())
        })?;
        let values: Vec<f64> = (0..mesh.num_triangles())
            .map(|t| d.centroid_value(mesh, t))
            .collect();
        let max = values.iter().cloned().fold(f64::MIN, f64::max);
        let min = values.iter().cloned().fold(f64::MAX, f64::min);
        let span = (max - min).max(1e-300);
        let _ = writeln!(svg, "<g stroke=\"none\">");
        for (t, v) in values.iter().enumerate() {
            let [a, b, c] = mesh.triangle_points(t);
            let _ = writeln!(
                svg,
                "<path d=\"M {} L {} L {} Z\" fill=\"{}\"/>",
                px(a),
                px(b),
                px(c),
                color(spec.ramp, (v - min) / span)
            );
        }
        let _ = writeln!(svg, "</g>");
    }

    if spec.wireframe {
        let _ = writeln!(
            svg,
            "<g fill=\"none\" stroke=\"#404040\" stroke-width=\"{:.3}\">",
            0.5 * spec.stroke_width
        );
        for t in 0..mesh.num_triangles() {
            let [a, b, c] = mesh.triangle_points(t);
            let _ = writeln!(svg, "<path d=\"M {} L {} L {} Z\"/>", px(a), px(b), px(c));
        }
        let _ = writeln!(svg, "</g>");
    }

    if spec.field_glyphs {
        let f = field.ok_or_else(|| {
            Error::InvalidArgument("field layer enabled but no field given".into())
        })?;
        let max_speed = f
            .velocity
            .iter()
            .map(|v| geom::norm(*v))
            .fold(0.0f64, f64::max)
            .max(1e-300);
        // Global normalization: the fastest glyph spans about two cells.
        let max_len = 18.0;
        let _ = writeln!(
            svg,
            "<g stroke=\"#c03020\" stroke-width=\"{:.3}\" fill=\"#c03020\">",
            0.8 * spec.stroke_width
        );
        for t in 0..mesh.num_triangles() {
            let v = f.velocity[t];
            let speed = geom::norm(v);
            if speed < 1e-12 * max_speed {
                continue;
            }
            let c = mesh.centroid(t);
            let (cx, cy) = frame.to_px(c);
            let len = max_len * speed / max_speed;
            let dir = [v[0] / speed, -v[1] / speed];
            let tip = (cx + len * dir[0], cy + len * dir[1]);
            let left = (
                tip.0 - 0.3 * len * (dir[0] - 0.5 * dir[1]),
                tip.1 - 0.3 * len * (dir[1] + 0.5 * dir[0]),
            );
            let right = (
                tip.0 - 0.3 * len * (dir[0] + 0.5 * dir[1]),
                tip.1 - 0.3 * len * (dir[1] - 0.5 * dir[0]),
            );
            let _ = writeln!(
                svg,
                "<line x1=\"{cx:.3}\" y1=\"{cy:.3}\" x2=\"{:.3}\" y2=\"{:.3}\"/>",
                tip.0, tip.1
            );
            let _ = writeln!(
                svg,
                "<polygon points=\"{:.3},{:.3} {:.3},{:.3} {:.3},{:.3}\"/>",
                tip.0, tip.1, left.0, left.1, right.0, right.1
            );
        }
        let _ = writeln!(svg, "</g>");
    }

    if spec.trajectories {
        if let Some(paths) = trajectories {
            let _ = writeln!(svg, "<g fill=\"none\" stroke-width=\"{:.3}\">", 1.5 * spec.stroke_width);
            for (agent, path) in paths.iter().enumerate() {
                let mut points = String::new();
                for p in path {
                    if !points.is_empty() {
                        points.push(' ');
                    }
                    points.push_str(&px(*p));
                }
                let _ = writeln!(
                    svg,
                    "<polyline stroke=\"{}\" points=\"{points}\"/>",
                    AGENT_COLORS[agent % AGENT_COLORS.len()]
                );
            }
            let _ = writeln!(svg, "</g>");
        }
    }

    if spec.start_markers {
        if let Some(paths) = trajectories {
            let _ = writeln!(svg, "<g stroke=\"#000000\" stroke-width=\"1.000\">");
            for (agent, path) in paths.iter().enumerate() {
                if let Some(start) = path.first() {
                    let (cx, cy) = frame.to_px(*start);
                    let _ = writeln!(
                        svg,
                        "<circle cx=\"{cx:.3}\" cy=\"{cy:.3}\" r=\"4.000\" fill=\"{}\"/>",
                        AGENT_COLORS[agent % AGENT_COLORS.len()]
                    );
                }
            }
            let _ = writeln!(svg, "</g>");
        }
    }

    svg.push_str("</svg>\n");
    Ok(svg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ergoflow::mesh::{generate_map, DistSpec, MapSpec};

    fn mesh_only_spec() -> RenderSpec {
        RenderSpec {
            trajectories: false,
            start_markers: false,
            ..RenderSpec::default()
        }
    }

    #[test]
    fn mesh_render_has_one_path_per_triangle() {
        let mesh = generate_map(&MapSpec::square(1.0, 0.5)).unwrap();
        let svg = render_svg(&mesh, None, None, None, &mesh_only_spec()).unwrap();
        assert_eq!(svg.matches("<path ").count(), 8);
        assert!(svg.starts_with("<svg "));
        assert!(svg.trim_end().ends_with("</svg>"));
    }

    #[test]
    fn output_is_deterministic() {
        let mesh = generate_map(&MapSpec::square(1.0, 0.25)).unwrap();
        let d = InfoDistribution::build(&mesh, DistSpec::Uniform).unwrap();
        let spec = RenderSpec {
            density: true,
            ..mesh_only_spec()
        };
        let a = render_svg(&mesh, Some(&d), None, None, &spec).unwrap();
        let b = render_svg(&mesh, Some(&d), None, None, &spec).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn two_agents_two_polylines() {
        let mesh = generate_map(&MapSpec::square(1.0, 0.25)).unwrap();
        let paths = vec![
            vec![[0.1, 0.1], [0.2, 0.2]],
            vec![[0.8, 0.8], [0.7, 0.9]],
        ];
        let svg = render_svg(&mesh, None, None, Some(&paths), &RenderSpec::default()).unwrap();
        assert_eq!(svg.matches("<polyline ").count(), 2);
        assert_eq!(svg.matches("<circle ").count(), 2);
    }

    #[test]
    fn validation_errors() {
        let mesh = generate_map(&MapSpec::square(1.0, 0.5)).unwrap();
        let tiny = RenderSpec {
            width: 50,
            ..RenderSpec::default()
        };
        assert!(render_svg(&mesh, None, None, None, &tiny).is_err());
        let none = RenderSpec {
            wireframe: false,
            density: false,
            field_glyphs: false,
            trajectories: false,
            start_markers: false,
            ..RenderSpec::default()
        };
        assert!(render_svg(&mesh, None, None, None, &none).is_err());
        // Density from a different mesh is rejected.
        let other = generate_map(&MapSpec::square(1.0, 0.25)).unwrap();
        let d = InfoDistribution::build(&other, DistSpec::Uniform).unwrap();
        let spec = RenderSpec {
            density: true,
            ..RenderSpec::default()
        };
        assert!(render_svg(&mesh, Some(&d), None, None, &spec).is_err());
    }
}
