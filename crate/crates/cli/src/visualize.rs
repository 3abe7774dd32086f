//! Static figures: segment overlays, the max-displacement snapshot and SVG
//! line plots of per-segment curves.

use std::fmt::Write as _;

use echowall::features::{AreaCurve, DisplacementCurve};
use echowall::imgproc::{GrayFrame, Pixel};
use echowall::wallgeom::{FrameGeometry, SegmentMap};
use image::{ImageBuffer, Rgb, RgbImage};

/// Colour of segment `k` is `PALETTE[k - 1]`.
pub const PALETTE: [[u8; 3]; 7] = [
    [230, 25, 75],
    [60, 180, 75],
    [255, 225, 25],
    [0, 130, 200],
    [245, 130, 48],
    [145, 30, 180],
    [70, 240, 240],
];

fn gray(frame: &GrayFrame, r: usize, c: usize) -> Rgb<u8> {
    let g = (frame.get(r, c).clamp(0.0, 1.0) * 255.0).round() as u8;
    Rgb([g, g, g])
}

/// Wall pixels in their segment colour, everything else the frame's gray.
pub fn segment_overlay(frame: &GrayFrame, map: &SegmentMap) -> RgbImage {
    ImageBuffer::from_fn(map.width() as u32, map.height() as u32, |x, y| {
        let (r, c) = (y as usize, x as usize);
        match map.get(r, c) {
            0 => gray(frame, r, c),
            k => Rgb(PALETTE[k as usize - 1]),
        }
    })
}

/// Segment label an overlay colour stands for; `None` for gray.
#[cfg(test)]
pub fn label_of(color: Rgb<u8>) -> Option<u8> {
    PALETTE.iter().position(|p| *p == color.0).map(|i| i as u8 + 1)
}

fn put(img: &mut RgbImage, p: Pixel, color: [u8; 3]) {
    if (p.row as u32) < img.height() && (p.col as u32) < img.width() {
        img.put_pixel(p.col as u32, p.row as u32, Rgb(color));
    }
}

/// Frame 0 with its boundary in white; each analyzed segment's arc drawn
/// in its colour at the frame of its peak boundary displacement, with a
/// 3×3 marker at the arc middle.
pub fn max_displacement_snapshot(frame0: &GrayFrame, geometry: &[FrameGeometry], boundary: &[DisplacementCurve]) -> RgbImage {
    let mut img: RgbImage = ImageBuffer::from_fn(frame0.width() as u32, frame0.height() as u32, |x, y| gray(frame0, y as usize, x as usize));
    for &p in geometry[0].arcs.path() {
        put(&mut img, p, [255, 255, 255]);
    }
    for curve in boundary {
        let peak = curve.values.iter().enumerate().fold(0, |best, (t, &v)| if v > curve.values[best] { t } else { best });
        let color = PALETTE[curve.segment as usize - 1];
        let arc = geometry[peak].arcs.arc(curve.segment);
        for &p in arc {
            put(&mut img, p, color);
        }
        if let Some(mid) = arc.get(arc.len() / 2) {
            for dr in -1..=1isize {
                for dc in -1..=1isize {
                    let (r, c) = (mid.row as isize + dr, mid.col as isize + dc);
                    if r >= 0 && c >= 0 {
                        put(&mut img, Pixel { row: r as usize, col: c as usize }, color);
                    }
                }
            }
        }
    }
    img
}

pub struct Series {
    pub name: String,
    pub color: [u8; 3],
    pub values: Vec<f64>,
}

pub fn displacement_series(curves: &[DisplacementCurve]) -> Vec<Series> {
    curves.iter().map(|c| Series { name: format!("seg{}", c.segment), color: PALETTE[c.segment as usize - 1], values: c.values.clone() }).collect()
}

pub fn area_series(curves: &[AreaCurve]) -> Vec<Series> {
    curves
        .iter()
        .map(|c| Series { name: format!("seg{}", c.segment), color: PALETTE[c.segment as usize - 1], values: c.values.iter().map(|&v| v as f64).collect() })
        .collect()
}

const W: f64 = 640.0;
const H: f64 = 400.0;
const LEFT: f64 = 60.0;
const RIGHT: f64 = 110.0;
const TOP: f64 = 30.0;
const BOTTOM: f64 = 45.0;

/// Line plot, one polyline per series, x = frame index.
pub fn line_plot(title: &str, y_label: &str, series: &[Series]) -> String {
    let n = series.iter().map(|s| s.values.len()).max().unwrap_or(0);
    let (mut lo, mut hi) = (0.0f64, 0.0f64);
    for v in series.iter().flat_map(|s| &s.values) {
        lo = lo.min(*v);
        hi = hi.max(*v);
    }
    if hi - lo <= 0.0 {
        hi = lo + 1.0;
    }
    let (pw, ph) = (W - LEFT - RIGHT, H - TOP - BOTTOM);
    let x_of = |t: usize| LEFT + if n > 1 { pw * t as f64 / (n - 1) as f64 } else { 0.0 };
    let y_of = |v: f64| TOP + ph * (1.0 - (v - lo) / (hi - lo));
    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="11">"#);
    let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{}" y="18" text-anchor="middle" font-size="13">{}</text>"#, LEFT + pw / 2.0, escape(title));
    let _ = writeln!(s, r#"<line x1="{LEFT}" y1="{}" x2="{}" y2="{}" stroke="black"/>"#, TOP + ph, LEFT + pw, TOP + ph);
    let _ = writeln!(s, r#"<line x1="{LEFT}" y1="{TOP}" x2="{LEFT}" y2="{}" stroke="black"/>"#, TOP + ph);
    for i in 0..=4 {
        let v = lo + (hi - lo) * i as f64 / 4.0;
        let y = y_of(v);
        let _ = writeln!(s, r##"<line x1="{}" y1="{y:.2}" x2="{LEFT}" y2="{y:.2}" stroke="black"/><text x="{}" y="{:.2}" text-anchor="end">{v:.2}</text>"##, LEFT - 4.0, LEFT - 6.0, y + 4.0);
    }
    let step = (n / 10).max(1);
    for t in (0..n).step_by(step) {
        let x = x_of(t);
        let _ = writeln!(s, r#"<line x1="{x:.2}" y1="{}" x2="{x:.2}" y2="{}" stroke="black"/><text x="{x:.2}" y="{}" text-anchor="middle">{t}</text>"#, TOP + ph, TOP + ph + 4.0, TOP + ph + 16.0);
    }
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">frame</text>"#, LEFT + pw / 2.0, H - 8.0);
    let _ = writeln!(s, r#"<text x="14" y="{}" text-anchor="middle" transform="rotate(-90 14 {})">{}</text>"#, TOP + ph / 2.0, TOP + ph / 2.0, escape(y_label));
    for (k, ser) in series.iter().enumerate() {
        let [r, g, b] = ser.color;
        let pts: Vec<String> = ser.values.iter().enumerate().map(|(t, &v)| format!("{:.2},{:.2}", x_of(t), y_of(v))).collect();
        let _ = writeln!(s, r#"<polyline class="series" data-name="{}" fill="none" stroke="rgb({r},{g},{b})" stroke-width="1.5" points="{}"/>"#, escape(&ser.name), pts.join(" "));
        let ly = TOP + 14.0 * k as f64 + 6.0;
        let lx = W - RIGHT + 12.0;
        let _ = writeln!(s, r#"<line x1="{lx}" y1="{ly}" x2="{}" y2="{ly}" stroke="rgb({r},{g},{b})" stroke-width="2"/><text x="{}" y="{}">{}</text>"#, lx + 18.0, lx + 22.0, ly + 4.0, escape(&ser.name));
    }
    s.push_str("</svg>\n");
    s
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn palette_is_distinct_and_never_gray() {
        for (i, a) in PALETTE.iter().enumerate() {
            assert!(!(a[0] == a[1] && a[1] == a[2]));
            for b in &PALETTE[i + 1..] {
                assert_ne!(a, b);
            }
        }
        assert_eq!(label_of(Rgb(PALETTE[3])), Some(4));
        assert_eq!(label_of(Rgb([9, 9, 9])), None);
    }

    #[test]
    fn flat_series_plot() {
        let s = vec![Series { name: "seg1".into(), color: PALETTE[0], values: vec![0.0; 5] }];
        let svg = line_plot("t", "px", &s);
        assert_eq!(svg.matches("<polyline").count(), 1);
        assert!(svg.starts_with("<svg"));
    }
}
