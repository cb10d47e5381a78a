//! Minimal static SVG 1.1 renderers: a matrix heatmap and an (E,k)
//! occupation plot. Text output only, no rendering dependencies.

const W: f64 = 640.0;
const H: f64 = 480.0;
const ML: f64 = 70.0;
const MR: f64 = 90.0;
const MT: f64 = 40.0;
const MB: f64 = 55.0;

fn color(t: f64) -> String {
    // dark blue -> teal -> yellow ramp
    let t = t.clamp(0.0, 1.0);
    let stops = [
        (68.0, 1.0, 84.0),
        (59.0, 82.0, 139.0),
        (33.0, 145.0, 140.0),
        (94.0, 201.0, 98.0),
        (253.0, 231.0, 37.0),
    ];
    let x = t * (stops.len() - 1) as f64;
    let i = (x.floor() as usize).min(stops.len() - 2);
    let f = x - i as f64;
    let (r0, g0, b0) = stops[i];
    let (r1, g1, b1) = stops[i + 1];
    format!(
        "rgb({},{},{})",
        (r0 + f * (r1 - r0)) as u8,
        (g0 + f * (g1 - g0)) as u8,
        (b0 + f * (b1 - b0)) as u8
    )
}

fn text(x: f64, y: f64, anchor: &str, size: f64, s: &str) -> String {
    format!(
        "<text x=\"{x:.1}\" y=\"{y:.1}\" text-anchor=\"{anchor}\" font-size=\"{size}\" font-family=\"sans-serif\">{s}</text>\n"
    )
}

fn open_svg(title: &str) -> String {
    let mut out = String::from(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"640\" height=\"480\" viewBox=\"0 0 640 480\">\n",
    );
    out.push_str("<rect width=\"640\" height=\"480\" fill=\"white\"/>\n");
    out.push_str(&text(W / 2.0, 22.0, "middle", 14.0, title));
    out
}

/// Heatmap of `values[i][j]` on a log color scale; x[j], y[i] are axis values.
pub fn heatmap(
    title: &str,
    x_label: &str,
    y_label: &str,
    x: &[f64],
    y: &[f64],
    values: &[Vec<f64>],
) -> String {
    let mut out = open_svg(title);
    let positive: Vec<f64> = values
        .iter()
        .flatten()
        .cloned()
        .filter(|v| *v > 0.0)
        .collect();
    let vmax = positive.iter().cloned().fold(f64::MIN, f64::max);
    let vmin = positive.iter().cloned().fold(f64::MAX, f64::min);
    let (l0, l1) = (vmin.ln(), vmax.ln().max(vmin.ln() + 1e-12));
    let cw = (W - ML - MR) / x.len() as f64;
    let ch = (H - MT - MB) / y.len() as f64;
    for (i, row) in values.iter().enumerate() {
        for (j, v) in row.iter().enumerate() {
            let t = if *v > 0.0 {
                (v.ln() - l0) / (l1 - l0)
            } else {
                0.0
            };
            let px = ML + j as f64 * cw;
            // y axis increases upward
            let py = H - MB - (i as f64 + 1.0) * ch;
            out.push_str(&format!(
                "<rect x=\"{px:.2}\" y=\"{py:.2}\" width=\"{:.2}\" height=\"{:.2}\" fill=\"{}\"/>\n",
                cw + 0.5,
                ch + 0.5,
                color(t)
            ));
        }
    }
    out.push_str(&text(
        ML,
        H - MB + 28.0,
        "start",
        11.0,
        &format!("{x_label}: {:.4} .. {:.4}", x[0], x[x.len() - 1]),
    ));
    out.push_str(&text(
        ML,
        MT - 8.0,
        "start",
        11.0,
        &format!("{y_label}: {:.4} .. {:.4}", y[0], y[y.len() - 1]),
    ));
    // color bar
    for s in 0..100 {
        let py = H - MB - (s as f64 + 1.0) * (H - MT - MB) / 100.0;
        out.push_str(&format!(
            "<rect x=\"{:.1}\" y=\"{py:.2}\" width=\"16\" height=\"{:.2}\" fill=\"{}\"/>\n",
            W - MR + 20.0,
            (H - MT - MB) / 100.0 + 0.5,
            color(s as f64 / 99.0)
        ));
    }
    out.push_str(&text(
        W - MR + 28.0,
        H - MB + 14.0,
        "start",
        10.0,
        &format!("{vmin:.2e}"),
    ));
    out.push_str(&text(
        W - MR + 28.0,
        MT - 2.0,
        "start",
        10.0,
        &format!("{vmax:.2e}"),
    ));
    out.push_str("</svg>\n");
    out
}

/// (E,k) occupation map: one filled circle per mode, area and color by
/// occupation on a log scale.
pub fn ek_plot(title: &str, points: &[(f64, f64, f64)]) -> String {
    let mut out = open_svg(title);
    let kmax = points.iter().map(|p| p.0).fold(0.0f64, f64::max).max(1e-9);
    let emin = points.iter().map(|p| p.1).fold(f64::MAX, f64::min);
    let emax = points.iter().map(|p| p.1).fold(f64::MIN, f64::max);
    let occ_pos: Vec<f64> = points.iter().map(|p| p.2).filter(|v| *v > 0.0).collect();
    if occ_pos.is_empty() {
        out.push_str(&text(
            W / 2.0,
            H / 2.0,
            "middle",
            12.0,
            "all occupations zero",
        ));
        out.push_str("</svg>\n");
        return out;
    }
    let omax = occ_pos.iter().cloned().fold(f64::MIN, f64::max);
    let omin = (omax * 1e-8).max(occ_pos.iter().cloned().fold(f64::MAX, f64::min));
    let span = (emax - emin).max(1e-9);
    for (k, e, occ) in points {
        let px = ML + (k / kmax) * (W - ML - MR);
        let py = H - MB - (e - emin) / span * (H - MT - MB);
        let t = if *occ > 0.0 {
            ((occ.ln() - omin.ln()) / (omax.ln() - omin.ln())).clamp(0.0, 1.0)
        } else {
            0.0
        };
        let r = 2.0 + 8.0 * t;
        out.push_str(&format!(
            "<circle cx=\"{px:.2}\" cy=\"{py:.2}\" r=\"{r:.2}\" fill=\"{}\" fill-opacity=\"0.9\"/>\n",
            color(t)
        ));
    }
    out.push_str(&text(
        W / 2.0,
        H - 18.0,
        "middle",
        11.0,
        &format!("k (1/um), 0 .. {kmax:.2}"),
    ));
    out.push_str(&text(
        14.0,
        MT - 8.0,
        "start",
        11.0,
        &format!(
            "E (meV), {emin:.1} .. {emax:.1}; color/size: occupation {omin:.1e} .. {omax:.1e}"
        ),
    ));
    out.push_str("</svg>\n");
    out
}
