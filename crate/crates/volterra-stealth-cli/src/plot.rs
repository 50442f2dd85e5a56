//! Minimal self-contained SVG line plots.
//!
//! Each plot is a single polyline on a light grid with min/max annotations —
//! enough to eyeball a trajectory without pulling in a plotting stack. Output
//! is deterministic for a given signal.

use volterra_stealth::Signal;

const WIDTH: f64 = 800.0;
const HEIGHT: f64 = 400.0;
const MARGIN_L: f64 = 70.0;
const MARGIN_R: f64 = 20.0;
const MARGIN_T: f64 = 36.0;
const MARGIN_B: f64 = 44.0;

/// Maximum number of polyline vertices; longer signals are decimated by
/// stride (endpoints kept) so files stay small at fine step sizes.
const MAX_POINTS: usize = 2000;

/// Render `signal` as a standalone SVG document titled `title`.
pub fn line_plot_svg(signal: &Signal, title: &str) -> String {
    let n = signal.len();
    let t_end = signal.grid().t_end().max(f64::MIN_POSITIVE);
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for &v in signal.values() {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    if !lo.is_finite() || !hi.is_finite() {
        lo = 0.0;
        hi = 1.0;
    }
    if (hi - lo).abs() < 1e-300 {
        // Flat signal: open up a symmetric band so the line sits mid-plot.
        let pad = if hi.abs() > 0.0 { hi.abs() * 0.5 } else { 0.5 };
        lo -= pad;
        hi += pad;
    }

    let plot_w = WIDTH - MARGIN_L - MARGIN_R;
    let plot_h = HEIGHT - MARGIN_T - MARGIN_B;
    let x_of = |t: f64| MARGIN_L + t / t_end * plot_w;
    let y_of = |v: f64| MARGIN_T + (hi - v) / (hi - lo) * plot_h;

    let stride = n.div_ceil(MAX_POINTS).max(1);
    let mut points = String::new();
    for i in (0..n).step_by(stride).chain(std::iter::once(n - 1)) {
        let v = signal.values()[i];
        if !v.is_finite() {
            continue;
        }
        points.push_str(&format!("{:.2},{:.2} ", x_of(signal.grid().node(i)), y_of(v)));
    }

    let mut svg = String::with_capacity(points.len() + 2048);
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"0 0 {WIDTH} {HEIGHT}\" \
         font-family=\"monospace\" font-size=\"13\">\n"
    ));
    svg.push_str("<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n");
    svg.push_str(&format!(
        "<text x=\"{}\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">{}</text>\n",
        WIDTH / 2.0,
        xml_escape(title)
    ));

    // Frame and a zero line when zero is inside the value range.
    svg.push_str(&format!(
        "<rect x=\"{MARGIN_L}\" y=\"{MARGIN_T}\" width=\"{plot_w}\" height=\"{plot_h}\" \
         fill=\"none\" stroke=\"#999\"/>\n"
    ));
    if lo < 0.0 && hi > 0.0 {
        let y0 = y_of(0.0);
        svg.push_str(&format!(
            "<line x1=\"{MARGIN_L}\" y1=\"{y0:.2}\" x2=\"{:.2}\" y2=\"{y0:.2}\" \
             stroke=\"#ccc\" stroke-dasharray=\"4 4\"/>\n",
            MARGIN_L + plot_w
        ));
    }

    // Axis annotations: value range on the left, time range along the bottom.
    svg.push_str(&format!(
        "<text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"end\">{hi:.4}</text>\n",
        MARGIN_L - 6.0,
        MARGIN_T + 5.0
    ));
    svg.push_str(&format!(
        "<text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"end\">{lo:.4}</text>\n",
        MARGIN_L - 6.0,
        MARGIN_T + plot_h
    ));
    svg.push_str(&format!(
        "<text x=\"{MARGIN_L}\" y=\"{:.2}\">0</text>\n",
        HEIGHT - 18.0
    ));
    svg.push_str(&format!(
        "<text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"end\">t = {t_end}</text>\n",
        MARGIN_L + plot_w,
        HEIGHT - 18.0
    ));

    svg.push_str(&format!(
        "<polyline points=\"{}\" fill=\"none\" stroke=\"#1f6fb2\" stroke-width=\"1.5\"/>\n",
        points.trim_end()
    ));
    svg.push_str("</svg>\n");
    svg
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

#[cfg(test)]
mod tests {
    use super::*;
    use volterra_stealth::TimeGrid;

    fn ramp(n: usize) -> Signal {
        let grid = TimeGrid::from_steps(n, 0.01).unwrap();
        let values = (0..n).map(|i| i as f64 * 0.01).collect();
        Signal::new(grid, values).unwrap()
    }

    #[test]
    fn svg_is_well_formed_enough() {
        let svg = line_plot_svg(&ramp(101), "u_q");
        assert!(svg.starts_with("<svg"));
        assert!(svg.ends_with("</svg>\n"));
        assert!(svg.contains("<polyline"));
        assert_eq!(svg.matches("<svg").count(), svg.matches("</svg>").count());
    }

    #[test]
    fn long_signals_are_decimated() {
        let svg = line_plot_svg(&ramp(50_001), "u_q");
        let polyline = svg.split("points=\"").nth(1).unwrap();
        let count = polyline.split('"').next().unwrap().split_whitespace().count();
        assert!(count <= MAX_POINTS + 2, "got {count} vertices");
    }

    #[test]
    fn flat_signal_does_not_divide_by_zero() {
        let grid = TimeGrid::from_steps(11, 0.1).unwrap();
        let flat = Signal::new(grid, vec![2.0; 11]).unwrap();
        let svg = line_plot_svg(&flat, "const");
        assert!(svg.contains("<polyline"));
        assert!(!svg.contains("NaN"));
    }

    #[test]
    fn titles_are_escaped() {
        let svg = line_plot_svg(&ramp(11), "a<b&c");
        assert!(svg.contains("a&lt;b&amp;c"));
    }
}
