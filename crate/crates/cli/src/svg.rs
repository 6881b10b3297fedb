//! Small hand-rolled SVG charts for the benchmark reports.

const W: f64 = 480.0;
const H: f64 = 320.0;
const ML: f64 = 56.0; // left margin
const MR: f64 = 16.0;
const MT: f64 = 24.0;
const MB: f64 = 48.0;

fn x_px(frac: f64) -> f64 {
    ML + frac * (W - ML - MR)
}

fn y_px(rate: f64) -> f64 {
    H - MB - rate.clamp(0.0, 1.0) * (H - MT - MB)
}

fn axes(title: &str, x_label: &str) -> String {
    let mut s = String::new();
    s.push_str(&format!(
        "<line x1=\"{ML}\" y1=\"{0}\" x2=\"{1}\" y2=\"{0}\" stroke=\"black\"/>\n",
        H - MB,
        W - MR
    ));
    s.push_str(&format!(
        "<line x1=\"{ML}\" y1=\"{MT}\" x2=\"{ML}\" y2=\"{0}\" stroke=\"black\"/>\n",
        H - MB
    ));
    for i in 0..=4 {
        let v = i as f64 / 4.0;
        let y = y_px(v);
        s.push_str(&format!(
            "<line x1=\"{0}\" y1=\"{y}\" x2=\"{ML}\" y2=\"{y}\" stroke=\"black\"/>\n",
            ML - 4.0
        ));
        s.push_str(&format!(
            "<text x=\"{0}\" y=\"{1}\" font-size=\"11\" text-anchor=\"end\">{v}</text>\n",
            ML - 8.0,
            y + 4.0
        ));
    }
    s.push_str(&format!(
        "<text x=\"{0}\" y=\"16\" font-size=\"13\" text-anchor=\"middle\">{title}</text>\n",
        (ML + W - MR) / 2.0
    ));
    s.push_str(&format!(
        "<text x=\"{0}\" y=\"{1}\" font-size=\"12\" text-anchor=\"middle\">{x_label}</text>\n",
        (ML + W - MR) / 2.0,
        H - 10.0
    ));
    s
}

/// Line chart of success rate against the blend weight. Point coordinates
/// are the linear maps `x = ML + phi * plot_width`, `y = base - rate *
/// plot_height`, so tests can recompute them from the CSV.
pub fn sweep_svg(points: &[(f64, f64)]) -> String {
    let mut s = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W}\" height=\"{H}\" viewBox=\"0 0 {W} {H}\">\n"
    );
    s.push_str(&axes("success rate vs blend weight", "phi"));
    for i in 0..=4 {
        let phi = i as f64 / 4.0;
        let x = x_px(phi);
        s.push_str(&format!(
            "<text x=\"{x}\" y=\"{0}\" font-size=\"11\" text-anchor=\"middle\">{phi}</text>\n",
            H - MB + 16.0
        ));
    }
    let coords: Vec<String> = points
        .iter()
        .map(|&(phi, rate)| format!("{},{}", x_px(phi), y_px(rate)))
        .collect();
    s.push_str(&format!(
        "<polyline points=\"{}\" fill=\"none\" stroke=\"steelblue\" stroke-width=\"2\"/>\n",
        coords.join(" ")
    ));
    for &(phi, rate) in points {
        s.push_str(&format!(
            "<circle cx=\"{}\" cy=\"{}\" r=\"4\" fill=\"steelblue\"/>\n",
            x_px(phi),
            y_px(rate)
        ));
    }
    s.push_str("</svg>\n");
    s
}

/// Bar chart of per-method success rates.
pub fn bar_svg(rows: &[(String, f64)]) -> String {
    let mut s = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W}\" height=\"{H}\" viewBox=\"0 0 {W} {H}\">\n"
    );
    s.push_str(&axes("success rate by method", ""));
    let n = rows.len().max(1) as f64;
    let span = (W - ML - MR) / n;
    let bar_w = span * 0.6;
    for (i, (label, rate)) in rows.iter().enumerate() {
        let cx = ML + (i as f64 + 0.5) * span;
        let y = y_px(*rate);
        s.push_str(&format!(
            "<rect x=\"{}\" y=\"{y}\" width=\"{bar_w}\" height=\"{}\" fill=\"darkseagreen\" data-rate=\"{rate}\"/>\n",
            cx - bar_w / 2.0,
            (H - MB - y).max(0.0)
        ));
        s.push_str(&format!(
            "<text x=\"{cx}\" y=\"{0}\" font-size=\"10\" text-anchor=\"middle\">{label}</text>\n",
            H - MB + 16.0
        ));
    }
    s.push_str("</svg>\n");
    s
}

/// Mapping used by the sweep chart, exposed for fidelity checks.
#[cfg_attr(not(test), allow(dead_code))]
pub fn sweep_point_px(phi: f64, rate: f64) -> (f64, f64) {
    (x_px(phi), y_px(rate))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sweep_points_land_where_the_mapping_says() {
        let pts = vec![(0.0, 0.2), (0.5, 0.9), (1.0, 0.55)];
        let svg = sweep_svg(&pts);
        for &(phi, rate) in &pts {
            let (x, y) = sweep_point_px(phi, rate);
            let needle = format!("<circle cx=\"{x}\" cy=\"{y}\"");
            assert!(svg.contains(&needle), "missing {needle}");
        }
    }

    #[test]
    fn bars_embed_their_rates() {
        let rows = vec![("hybrid".to_string(), 0.8), ("random".to_string(), 0.0)];
        let svg = bar_svg(&rows);
        assert!(svg.contains("data-rate=\"0.8\""));
        assert!(svg.contains("data-rate=\"0\""));
    }
}
