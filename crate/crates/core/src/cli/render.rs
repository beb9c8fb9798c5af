use std::fmt::Write as _;
use std::path::Path;

use super::{read_text, write_output, CliError};
use crate::benchgen::read_dataset;
use crate::scene_graph::{parse_scene_graph, Node, SceneGraph};

const PX_PER_M: f64 = 100.0;
const MARGIN_M: f64 = 0.5;

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

/// Top-down orthographic SVG: +x to the right, +y up.
pub fn render_svg(g: &SceneGraph) -> String {
    let (mut x0, mut y0, mut x1, mut y1) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
    for n in g.nodes() {
        let b = n.aabb();
        x0 = x0.min(b.min.x);
        y0 = y0.min(b.min.y);
        x1 = x1.max(b.max.x);
        y1 = y1.max(b.max.y);
    }
    let (x0, y0, x1, y1) = (x0 - MARGIN_M, y0 - MARGIN_M, x1 + MARGIN_M, y1 + MARGIN_M);
    let px = |x: f64| (x - x0) * PX_PER_M;
    let py = |y: f64| (y1 - y) * PX_PER_M;
    let (w, h) = ((x1 - x0) * PX_PER_M, (y1 - y0) * PX_PER_M);

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w:.3}" height="{h:.3}" viewBox="0 0 {w:.3} {h:.3}">"#
    );
    let _ = writeln!(
        s,
        r##"<rect x="0" y="0" width="{w:.3}" height="{h:.3}" fill="#ffffff"/>"##
    );
    let _ = writeln!(
        s,
        r##"<line class="axis" x1="{:.3}" y1="{:.3}" x2="{:.3}" y2="{:.3}" stroke="#999999"/>"##,
        px(x0),
        py(0.0),
        px(x1),
        py(0.0)
    );
    let _ = writeln!(
        s,
        r##"<line class="axis" x1="{:.3}" y1="{:.3}" x2="{:.3}" y2="{:.3}" stroke="#999999"/>"##,
        px(0.0),
        py(y0),
        px(0.0),
        py(y1)
    );
    let mut nodes: Vec<&Node> = g.nodes().collect();
    nodes.sort_by_key(|n| (!n.is_container(), n.id));
    for n in nodes {
        let b = n.aabb();
        let style = if n.is_container() {
            r##"class="container" fill="none" stroke="#555555" stroke-dasharray="6 4""##
        } else {
            r##"class="object" fill="#8fb3d9" fill-opacity="0.7" stroke="#1f3b57""##
        };
        let _ = writeln!(
            s,
            r#"<rect data-id="{}" x="{:.3}" y="{:.3}" width="{:.3}" height="{:.3}" {style}/>"#,
            n.id,
            px(b.min.x),
            py(b.max.y),
            (b.max.x - b.min.x) * PX_PER_M,
            (b.max.y - b.min.y) * PX_PER_M
        );
        let label = match &n.caption {
            Some(c) => format!("{} {}", n.id, escape(c)),
            None => n.id.to_string(),
        };
        let _ = writeln!(
            s,
            r#"<text x="{:.3}" y="{:.3}" font-size="10" text-anchor="middle">{label}</text>"#,
            px(n.center_location.x),
            py(n.center_location.y)
        );
    }
    s.push_str("</svg>\n");
    s
}

pub fn cmd_render(input: &Path, out: &Path) -> Result<(), CliError> {
    let text = read_text(input)?;
    if let Ok(g) = parse_scene_graph(&text) {
        return write_output(Some(out), render_svg(&g).as_bytes());
    }
    let instances = read_dataset(input)?;
    std::fs::create_dir_all(out).map_err(|e| CliError::Data(format!("{}: {e}", out.display())))?;
    for inst in &instances {
        for (suffix, g) in [("initial", &inst.initial_graph), ("target", &inst.target_graph)] {
            let path = out.join(format!("{}.{suffix}.svg", inst.id));
            write_output(Some(&path), render_svg(g).as_bytes())?;
        }
    }
    println!("rendered {} instances to {}", instances.len(), out.display());
    Ok(())
}
