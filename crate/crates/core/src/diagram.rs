//! Transition diagrams and bar charts as deterministic SVG.
//!
//! The transition diagram shows the hole charge distribution as bars at the
//! bottom, the particle distribution at the top, and cubic ribbons between
//! them scaled to the transferred charge; diagonal entries appear as
//! self-ribbons (local excitation). Output bytes depend only on the input:
//! fixed float formatting, no timestamps.

use serde::Serialize;

use crate::error::{Error, Result};

/// Fallback subgroup colors when the config assigns none.
const PALETTE: [[u8; 3]; 10] = [
    [0x1f, 0x77, 0xb4],
    [0xff, 0x7f, 0x0e],
    [0x2c, 0xa0, 0x2c],
    [0xd6, 0x27, 0x28],
    [0x94, 0x67, 0xbd],
    [0x8c, 0x56, 0x4b],
    [0xe3, 0x77, 0xc2],
    [0x7f, 0x7f, 0x7f],
    [0xbc, 0xbd, 0x22],
    [0x17, 0xbe, 0xcf],
];

pub fn default_color(index: usize) -> [u8; 3] {
    PALETTE[index % PALETTE.len()]
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiagramOptions {
    pub width: f64,
    pub height: f64,
    /// Horizontal gap between adjacent bars.
    pub gap: f64,
    pub margin: f64,
    pub bar_height: f64,
    /// Connectors below this value are kept in the data but not drawn.
    pub epsilon: f64,
    pub font_size: f64,
}

impl Default for DiagramOptions {
    fn default() -> Self {
        DiagramOptions {
            width: 640.0,
            height: 480.0,
            gap: 12.0,
            margin: 48.0,
            bar_height: 20.0,
            epsilon: 0.1,
            font_size: 13.0,
        }
    }
}

/// A laid-out bar: subgroup, left edge and width in pixels.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Bar {
    pub subgroup: usize,
    pub x: f64,
    pub width: f64,
    pub value: f64,
}

/// A laid-out ribbon from a bottom-bar span to a top-bar span.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Connector {
    pub from: usize,
    pub to: usize,
    pub value: f64,
    pub bottom_x: f64,
    pub bottom_width: f64,
    pub top_x: f64,
    pub top_width: f64,
    /// False when the value is below the drawing epsilon.
    pub drawn: bool,
}

/// Complete diagram geometry; rendering is a pure function of this.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiagramSpec {
    pub names: Vec<String>,
    pub colors: Vec<[u8; 3]>,
    /// Hole charge per subgroup (bottom row).
    pub hole: Vec<f64>,
    /// Particle charge per subgroup (top row).
    pub particle: Vec<f64>,
    pub bottom: Vec<Bar>,
    pub top: Vec<Bar>,
    pub connectors: Vec<Connector>,
    pub options: DiagramOptions,
}

/// Lay out a transition diagram for an M×M transfer matrix (row-major).
/// Row sums give the hole bars, column sums the particle bars; bars appear
/// in subgroup order left to right and connector spans are allocated within
/// each bar in subgroup order as well.
pub fn layout_transition_diagram(
    full_matrix: &[f64],
    names: &[String],
    colors: &[[u8; 3]],
    options: &DiagramOptions,
) -> Result<DiagramSpec> {
    let m = names.len();
    assert_eq!(full_matrix.len(), m * m, "matrix size mismatch");
    assert_eq!(colors.len(), m, "color count mismatch");

    for i in 0..m {
        for j in 0..m {
            let v = full_matrix[i * m + j];
            if v < 0.0 {
                return Err(Error::NegativeTransfer {
                    row: i,
                    col: j,
                    value: v,
                });
            }
        }
    }

    let hole: Vec<f64> = (0..m)
        .map(|i| (0..m).map(|j| full_matrix[i * m + j]).sum())
        .collect();
    let particle: Vec<f64> = (0..m)
        .map(|j| (0..m).map(|i| full_matrix[i * m + j]).sum())
        .collect();
    let total_hole: f64 = hole.iter().sum();
    let total_particle: f64 = particle.iter().sum();
    if !(total_hole.is_finite() && total_particle.is_finite())
        || total_hole <= 0.0
        || total_particle <= 0.0
    {
        return Err(Error::EmptyDiagram);
    }

    let drawable = options.width - 2.0 * options.margin - options.gap * (m as f64 - 1.0);
    let bottom_scale = drawable / total_hole;
    let top_scale = drawable / total_particle;

    let mut bottom = Vec::with_capacity(m);
    let mut top = Vec::with_capacity(m);
    let mut x_bottom = options.margin;
    let mut x_top = options.margin;
    for j in 0..m {
        bottom.push(Bar {
            subgroup: j,
            x: x_bottom,
            width: hole[j] * bottom_scale,
            value: hole[j],
        });
        top.push(Bar {
            subgroup: j,
            x: x_top,
            width: particle[j] * top_scale,
            value: particle[j],
        });
        x_bottom += hole[j] * bottom_scale + options.gap;
        x_top += particle[j] * top_scale + options.gap;
    }

    // Span offsets accumulate in subgroup order on both ends.
    let mut bottom_cursor: Vec<f64> = bottom.iter().map(|b| b.x).collect();
    let mut top_cursor: Vec<f64> = top.iter().map(|b| b.x).collect();
    let mut connectors = Vec::new();
    for from in 0..m {
        for to in 0..m {
            let value = full_matrix[from * m + to];
            let bottom_width = value * bottom_scale;
            let top_width = value * top_scale;
            let connector = Connector {
                from,
                to,
                value,
                bottom_x: bottom_cursor[from],
                bottom_width,
                top_x: top_cursor[to],
                top_width,
                drawn: value >= options.epsilon,
            };
            bottom_cursor[from] += bottom_width;
            top_cursor[to] += top_width;
            connectors.push(connector);
        }
    }

    Ok(DiagramSpec {
        names: names.to_vec(),
        colors: colors.to_vec(),
        hole,
        particle,
        bottom,
        top,
        connectors,
        options: options.clone(),
    })
}

fn px(v: f64) -> String {
    format!("{:.2}", v)
}

fn rgb(c: [u8; 3]) -> String {
    format!("#{:02x}{:02x}{:02x}", c[0], c[1], c[2])
}

fn escape_xml(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}

fn svg_open(width: f64, height: f64) -> String {
    format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" \
         viewBox=\"0 0 {w} {h}\">\n<rect width=\"{w}\" height=\"{h}\" fill=\"#ffffff\"/>\n",
        w = px(width),
        h = px(height)
    )
}

/// Render a laid-out transition diagram. Byte-identical for identical specs.
pub fn render_svg(spec: &DiagramSpec) -> String {
    let o = &spec.options;
    let top_y = o.margin + o.bar_height;
    let bottom_y = o.height - o.margin - o.bar_height;
    let mid_y = (top_y + bottom_y) / 2.0;
    let total_hole: f64 = spec.hole.iter().sum();
    let total_particle: f64 = spec.particle.iter().sum();

    let mut svg = svg_open(o.width, o.height);

    for c in &spec.connectors {
        if !c.drawn {
            continue;
        }
        let (bx0, bx1) = (c.bottom_x, c.bottom_x + c.bottom_width);
        let (tx0, tx1) = (c.top_x, c.top_x + c.top_width);
        svg.push_str(&format!(
            "<path d=\"M {bx0} {by} C {bx0} {mid} {tx0} {mid} {tx0} {ty} \
             L {tx1} {ty} C {tx1} {mid} {bx1} {mid} {bx1} {by} Z\" \
             fill=\"{color}\" fill-opacity=\"0.55\"/>\n",
            bx0 = px(bx0),
            bx1 = px(bx1),
            tx0 = px(tx0),
            tx1 = px(tx1),
            by = px(bottom_y),
            ty = px(top_y),
            mid = px(mid_y),
            color = rgb(spec.colors[c.from]),
        ));
    }

    for (bars, y, label_y, total) in [
        (
            &spec.bottom,
            bottom_y,
            bottom_y + o.bar_height + o.font_size + 4.0,
            total_hole,
        ),
        (&spec.top, o.margin, o.margin - 8.0, total_particle),
    ] {
        for bar in bars {
            svg.push_str(&format!(
                "<rect x=\"{x}\" y=\"{y}\" width=\"{w}\" height=\"{h}\" fill=\"{color}\"/>\n",
                x = px(bar.x),
                y = px(y),
                w = px(bar.width),
                h = px(o.bar_height),
                color = rgb(spec.colors[bar.subgroup]),
            ));
            let percent = bar.value / total * 100.0;
            svg.push_str(&format!(
                "<text x=\"{x}\" y=\"{y}\" font-family=\"sans-serif\" font-size=\"{fs}\" \
                 text-anchor=\"middle\">{name} {pct:.1}%</text>\n",
                x = px(bar.x + bar.width / 2.0),
                y = px(label_y),
                fs = px(o.font_size),
                name = escape_xml(&spec.names[bar.subgroup]),
                pct = percent,
            ));
        }
    }

    svg.push_str("</svg>\n");
    svg
}

/// Grouped hole/particle bar chart per subgroup, labels in percent.
pub fn render_bar_chart(
    hole: &[f64],
    particle: &[f64],
    names: &[String],
    colors: &[[u8; 3]],
    options: &DiagramOptions,
) -> Result<String> {
    let m = names.len();
    assert_eq!(hole.len(), m);
    assert_eq!(particle.len(), m);
    let total_hole: f64 = hole.iter().sum();
    let total_particle: f64 = particle.iter().sum();
    if !(total_hole.is_finite() && total_particle.is_finite())
        || total_hole <= 0.0
        || total_particle <= 0.0
    {
        return Err(Error::EmptyDiagram);
    }

    let o = options;
    let plot_height = o.height - 2.0 * o.margin - o.font_size - 8.0;
    let baseline = o.margin + plot_height;
    let slot = (o.width - 2.0 * o.margin) / m as f64;
    let bar_w = (slot - o.gap).max(2.0) / 2.0;
    let peak = hole
        .iter()
        .chain(particle)
        .fold(f64::MIN_POSITIVE, |acc, &v| acc.max(v));

    let mut svg = svg_open(o.width, o.height);
    svg.push_str(&format!(
        "<line x1=\"{x0}\" y1=\"{y}\" x2=\"{x1}\" y2=\"{y}\" stroke=\"#444444\"/>\n",
        x0 = px(o.margin),
        x1 = px(o.width - o.margin),
        y = px(baseline),
    ));

    for j in 0..m {
        let x0 = o.margin + j as f64 * slot + o.gap / 2.0;
        for (offset, value, total, opacity) in [
            (0.0, hole[j], total_hole, "1.0"),
            (bar_w, particle[j], total_particle, "0.55"),
        ] {
            let h = value / peak * plot_height;
            let x = x0 + offset;
            svg.push_str(&format!(
                "<rect x=\"{x}\" y=\"{y}\" width=\"{w}\" height=\"{h}\" fill=\"{color}\" \
                 fill-opacity=\"{opacity}\"/>\n",
                x = px(x),
                y = px(baseline - h),
                w = px(bar_w),
                h = px(h),
                color = rgb(colors[j]),
            ));
            svg.push_str(&format!(
                "<text x=\"{x}\" y=\"{y}\" font-family=\"sans-serif\" font-size=\"{fs}\" \
                 text-anchor=\"middle\">{pct:.1}%</text>\n",
                x = px(x + bar_w / 2.0),
                y = px(baseline - h - 4.0),
                fs = px(o.font_size * 0.85),
                pct = value / total * 100.0,
            ));
        }
        svg.push_str(&format!(
            "<text x=\"{x}\" y=\"{y}\" font-family=\"sans-serif\" font-size=\"{fs}\" \
             text-anchor=\"middle\">{name}</text>\n",
            x = px(x0 + bar_w),
            y = px(baseline + o.font_size + 4.0),
            fs = px(o.font_size),
            name = escape_xml(&names[j]),
        ));
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}
