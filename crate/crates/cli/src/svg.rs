//! Minimal self-contained SVG line charts for the dynamics plots.

pub struct Series<'a> {
    pub label: &'a str,
    pub color: &'a str,
    pub points: Vec<(f64, f64)>,
}

fn bounds(series: &[Series]) -> (f64, f64, f64, f64) {
    let mut x_min = f64::MAX;
    let mut x_max = f64::MIN;
    let mut y_min = f64::MAX;
    let mut y_max = f64::MIN;
    for s in series {
        for &(x, y) in &s.points {
            x_min = x_min.min(x);
            x_max = x_max.max(x);
            y_min = y_min.min(y);
            y_max = y_max.max(y);
        }
    }
    if x_min >= x_max {
        x_max = x_min + 1.0;
    }
    if y_min >= y_max {
        y_max = y_min + 1.0;
    }
    // pad the value axis a little
    let pad = (y_max - y_min) * 0.05;
    (x_min, x_max, y_min - pad, y_max + pad)
}

/// Render one chart panel as an SVG group.
fn panel(series: &[Series], title: &str, x0: f64, width: f64, height: f64) -> String {
    let (x_min, x_max, y_min, y_max) = bounds(series);
    let margin = 42.0;
    let plot_w = width - 2.0 * margin;
    let plot_h = height - 2.0 * margin;
    let sx = |x: f64| x0 + margin + (x - x_min) / (x_max - x_min) * plot_w;
    let sy = |y: f64| margin + (1.0 - (y - y_min) / (y_max - y_min)) * plot_h;

    let mut out = String::new();
    out.push_str(&format!(
        r#"<text x="{:.1}" y="20" font-size="14" font-family="sans-serif" text-anchor="middle">{title}</text>"#,
        x0 + width / 2.0
    ));
    out.push_str(&format!(
        r##"<rect x="{:.1}" y="{margin}" width="{plot_w:.1}" height="{plot_h:.1}" fill="none" stroke="#999"/>"##,
        x0 + margin
    ));
    for (i, tick) in [y_min, (y_min + y_max) / 2.0, y_max].iter().enumerate() {
        let y = sy(*tick);
        out.push_str(&format!(
            r#"<text x="{:.1}" y="{:.1}" font-size="10" font-family="sans-serif" text-anchor="end">{:.2}</text>"#,
            x0 + margin - 4.0,
            y + 3.0,
            tick
        ));
        if i == 1 {
            out.push_str(&format!(
                r##"<line x1="{:.1}" y1="{y:.1}" x2="{:.1}" y2="{y:.1}" stroke="#ddd"/>"##,
                x0 + margin,
                x0 + margin + plot_w
            ));
        }
    }
    for (xt, anchor) in [(x_min, "start"), (x_max, "end")] {
        out.push_str(&format!(
            r#"<text x="{:.1}" y="{:.1}" font-size="10" font-family="sans-serif" text-anchor="{anchor}">{xt:.0}</text>"#,
            sx(xt),
            margin + plot_h + 14.0
        ));
    }
    for (i, s) in series.iter().enumerate() {
        let path: Vec<String> = s
            .points
            .iter()
            .map(|&(x, y)| format!("{:.1},{:.1}", sx(x), sy(y)))
            .collect();
        out.push_str(&format!(
            r#"<polyline points="{}" fill="none" stroke="{}" stroke-width="1.5"/>"#,
            path.join(" "),
            s.color
        ));
        let ly = margin + 14.0 * (i as f64 + 1.0);
        out.push_str(&format!(
            r#"<line x1="{:.1}" y1="{ly:.1}" x2="{:.1}" y2="{ly:.1}" stroke="{}" stroke-width="2"/>"#,
            x0 + margin + 6.0,
            x0 + margin + 26.0,
            s.color
        ));
        out.push_str(&format!(
            r#"<text x="{:.1}" y="{:.1}" font-size="10" font-family="sans-serif">{}</text>"#,
            x0 + margin + 30.0,
            ly + 3.0,
            s.label
        ));
    }
    out
}

/// A row of chart panels in one SVG document.
pub fn chart(panels: &[(&str, Vec<Series>)], panel_width: f64, height: f64) -> String {
    let total = panel_width * panels.len() as f64;
    let mut out = format!(
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{total:.0}" height="{height:.0}" viewBox="0 0 {total:.0} {height:.0}">"#
    );
    out.push_str(r#"<rect width="100%" height="100%" fill="white"/>"#);
    for (i, (title, series)) in panels.iter().enumerate() {
        out.push_str(&panel(
            series,
            title,
            i as f64 * panel_width,
            panel_width,
            height,
        ));
    }
    out.push_str("</svg>");
    out
}
