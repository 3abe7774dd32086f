//! Displacement and area curves per segment, and the per-echo feature
//! vector built from them.
//!
//! Frame 0 is the reference frame for every curve.

use std::fmt::Write as _;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::imgproc::{cumulative_length, Pixel, WallMask};
use crate::wallgeom::{analyze_frame, segment_moments, FrameGeometry, SegmentArcs, SegmentMap, SegmentRatios, ANALYZED_SEGMENTS};

pub const DEFAULT_SAMPLES: usize = 10;

#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, Default)]
pub enum FeatureMode {
    /// 18 values: three per analyzed segment.
    #[default]
    Six,
    /// 15 values: segment 5 dropped.
    Five,
}

impl FeatureMode {
    pub fn segments(self) -> &'static [u8] {
        match self {
            FeatureMode::Six => &ANALYZED_SEGMENTS,
            FeatureMode::Five => &[1, 2, 3, 6, 7],
        }
    }

    pub fn len(self) -> usize {
        3 * self.segments().len()
    }

    /// Column names in output order.
    pub fn names(self) -> Vec<String> {
        self.segments()
            .iter()
            .flat_map(|s| [format!("seg{s}_mf_boundary"), format!("seg{s}_mf_center"), format!("seg{s}_af")])
            .collect()
    }
}

impl std::str::FromStr for FeatureMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "six" | "6" => Ok(FeatureMode::Six),
            "five" | "5" => Ok(FeatureMode::Five),
            other => Err(Error::config("mode", format!("expected `six` or `five`, got `{other}`"))),
        }
    }
}

/// Per-frame displacement of one segment, in pixels.
#[derive(Clone, Debug, PartialEq)]
pub struct DisplacementCurve {
    pub segment: u8,
    pub values: Vec<f64>,
}

impl DisplacementCurve {
    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(0.0, f64::max)
    }
}

/// Per-frame pixel count of a segment that still overlaps its reference
/// footprint.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AreaCurve {
    pub segment: u8,
    pub values: Vec<usize>,
    pub reference_area: usize,
}

pub fn l1_displacement(p: (f64, f64), reference: (f64, f64)) -> f64 {
    (p.0 - reference.0).abs() + (p.1 - reference.1).abs()
}

/// `n` points of `arc` at arc positions `(k + 0.5) / n` of its length,
/// each snapped to the nearest existing point (ties to the earlier one).
pub fn sample_arc(arc: &[Pixel], n: usize) -> Vec<Pixel> {
    if arc.is_empty() || n == 0 {
        return Vec::new();
    }
    let cum = cumulative_length(arc);
    let len = cum[cum.len() - 1];
    (0..n)
        .map(|k| {
            let target = len * (k as f64 + 0.5) / n as f64;
            let hi = cum.partition_point(|&s| s < target);
            let idx = if hi == 0 {
                0
            } else if hi == cum.len() || target - cum[hi - 1] <= cum[hi] - target {
                hi - 1
            } else {
                hi
            };
            arc[idx]
        })
        .collect()
}

fn missing(segment: u8, frame: usize) -> Error {
    Error::MissingSegment { segment, frame: Some(frame) }
}

/// Mean L1 distance between paired arc samples, frame t vs frame 0.
pub fn boundary_displacement_curves(arcs: &[SegmentArcs], n: usize) -> Result<Vec<DisplacementCurve>> {
    if n == 0 {
        return Err(Error::config("samples", "must be at least 1"));
    }
    if arcs.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut samples = Vec::with_capacity(arcs.len());
    for (t, a) in arcs.iter().enumerate() {
        let mut per_seg = Vec::with_capacity(6);
        for &seg in &ANALYZED_SEGMENTS {
            let arc = a.arc(seg);
            if arc.is_empty() {
                return Err(missing(seg, t));
            }
            per_seg.push(sample_arc(arc, n));
        }
        samples.push(per_seg);
    }
    Ok(ANALYZED_SEGMENTS
        .iter()
        .enumerate()
        .map(|(k, &seg)| {
            let reference = &samples[0][k];
            let values = samples
                .iter()
                .map(|frame| {
                    let total: usize = frame[k]
                        .iter()
                        .zip(reference)
                        .map(|(p, r)| p.row.abs_diff(r.row) + p.col.abs_diff(r.col))
                        .sum();
                    total as f64 / n as f64
                })
                .collect();
            DisplacementCurve { segment: seg, values }
        })
        .collect())
}

/// Exact |a/b - c/d| for non-negative integer moments.
fn ratio_gap(a: u64, b: u64, c: u64, d: u64) -> f64 {
    let num = (i128::from(a) * i128::from(d) - i128::from(c) * i128::from(b)).unsigned_abs();
    num as f64 / (u128::from(b) * u128::from(d)) as f64
}

/// L1 distance between each segment's centre of mass at frame t and at
/// frame 0.
pub fn center_displacement_curves(maps: &[SegmentMap]) -> Result<Vec<DisplacementCurve>> {
    if maps.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let moments = maps
        .iter()
        .enumerate()
        .map(|(t, m)| {
            segment_moments(m).map_err(|e| match e {
                Error::MissingSegment { segment, .. } => missing(segment, t),
                other => other,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ANALYZED_SEGMENTS
        .iter()
        .enumerate()
        .map(|(k, &seg)| {
            let r = moments[0][k];
            let values = moments
                .iter()
                .map(|m| {
                    let m = m[k];
                    ratio_gap(m.sum_row, m.count, r.sum_row, r.count) + ratio_gap(m.sum_col, m.count, r.sum_col, r.count)
                })
                .collect();
            DisplacementCurve { segment: seg, values }
        })
        .collect())
}

/// Intersection of each segment at frame t with its frame-0 pixels.
pub fn area_curves(maps: &[SegmentMap]) -> Result<Vec<AreaCurve>> {
    let Some(reference) = maps.first() else {
        return Err(Error::EmptyDataset);
    };
    let mut out = Vec::with_capacity(6);
    for &seg in &ANALYZED_SEGMENTS {
        let reference_area = reference.count(seg);
        if reference_area == 0 {
            return Err(missing(seg, 0));
        }
        let mut values = Vec::with_capacity(maps.len());
        for (t, m) in maps.iter().enumerate() {
            if m.width() != reference.width() || m.height() != reference.height() {
                return Err(Error::Shape {
                    expected: format!("{}x{}", reference.width(), reference.height()),
                    actual: format!("{}x{} at frame {t}", m.width(), m.height()),
                });
            }
            let mut present = false;
            let mut inter = 0;
            for (&a, &b) in m.labels().iter().zip(reference.labels()) {
                present |= a == seg;
                inter += (a == seg && b == seg) as usize;
            }
            if !present {
                return Err(missing(seg, t));
            }
            values.push(inter);
        }
        out.push(AreaCurve { segment: seg, values, reference_area });
    }
    Ok(out)
}

/// Per-segment maxima divided by the largest of them. All-zero maxima
/// give all zeros.
pub fn normalize_maxima(maxima: &[f64]) -> Vec<f64> {
    let top = maxima.iter().copied().fold(0.0, f64::max);
    if top == 0.0 {
        return vec![0.0; maxima.len()];
    }
    maxima.iter().map(|&m| m / top).collect()
}

pub fn motion_feature(curves: &[DisplacementCurve]) -> Vec<f64> {
    normalize_maxima(&curves.iter().map(DisplacementCurve::max).collect::<Vec<_>>())
}

/// Smallest overlap with the reference footprint, as a fraction of it.
pub fn area_feature(curve: &AreaCurve) -> Result<f64> {
    if curve.reference_area == 0 {
        return Err(Error::MissingSegment { segment: curve.segment, frame: Some(0) });
    }
    let min = curve.values.iter().copied().min().unwrap_or(curve.reference_area);
    Ok(min as f64 / curve.reference_area as f64)
}

/// All three curve families of one echo.
#[derive(Clone, Debug, PartialEq)]
pub struct EchoCurves {
    pub boundary: Vec<DisplacementCurve>,
    pub center: Vec<DisplacementCurve>,
    pub area: Vec<AreaCurve>,
}

impl EchoCurves {
    pub fn from_geometry(frames: &[FrameGeometry], samples: usize) -> Result<Self> {
        let arcs: Vec<SegmentArcs> = frames.iter().map(|g| g.arcs.clone()).collect();
        let maps: Vec<SegmentMap> = frames.iter().map(|g| g.map.clone()).collect();
        Ok(Self {
            boundary: boundary_displacement_curves(&arcs, samples)?,
            center: center_displacement_curves(&maps)?,
            area: area_curves(&maps)?,
        })
    }

    pub fn features(&self, mode: FeatureMode) -> Result<FeatureVector> {
        let mf_b = motion_feature(&self.boundary);
        let mf_c = motion_feature(&self.center);
        let mut values = Vec::with_capacity(mode.len());
        for (k, seg) in ANALYZED_SEGMENTS.iter().enumerate() {
            if mode.segments().contains(seg) {
                values.extend([mf_b[k], mf_c[k], area_feature(&self.area[k])?]);
            }
        }
        Ok(FeatureVector { mode, values })
    }
}

/// Runs per-frame geometry on every mask.
pub fn analyze_echo(masks: &[WallMask], ratios: &SegmentRatios) -> Result<Vec<FrameGeometry>> {
    if masks.is_empty() {
        return Err(Error::EmptyDataset);
    }
    masks
        .par_iter()
        .enumerate()
        .map(|(t, m)| {
            analyze_frame(m, ratios).map_err(|e| match e {
                Error::MissingSegment { segment, frame: None } => missing(segment, t),
                other => other.in_frame(t),
            })
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct FeatureVector {
    pub mode: FeatureMode,
    pub values: Vec<f64>,
}

pub fn extract_features(masks: &[WallMask], ratios: &SegmentRatios, samples: usize, mode: FeatureMode) -> Result<FeatureVector> {
    let frames = analyze_echo(masks, ratios)?;
    EchoCurves::from_geometry(&frames, samples)?.features(mode)
}

/// Displacement curves as CSV: `frame,seg1,seg2,seg3,seg5,seg6,seg7`.
pub fn displacement_csv(curves: &[DisplacementCurve]) -> String {
    curves_csv(curves.iter().map(|c| (c.segment, c.values.clone())).collect())
}

pub fn area_csv(curves: &[AreaCurve]) -> String {
    curves_csv(curves.iter().map(|c| (c.segment, c.values.iter().map(|&v| v as f64).collect())).collect())
}

fn curves_csv(series: Vec<(u8, Vec<f64>)>) -> String {
    let mut out = String::from("frame");
    for (seg, _) in &series {
        let _ = write!(out, ",seg{seg}");
    }
    out.push('\n');
    let frames = series.iter().map(|(_, v)| v.len()).max().unwrap_or(0);
    for t in 0..frames {
        let _ = write!(out, "{t}");
        for (_, v) in &series {
            let _ = write!(out, ",{}", v[t]);
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::phantom::{generate_echo, PhantomConfig};
    use proptest::prelude::*;

    fn shift_map(map: &SegmentMap, dr: usize, dc: usize) -> SegmentMap {
        let (w, h) = (map.width(), map.height());
        let mut labels = vec![0u8; w * h];
        for r in 0..h {
            for c in 0..w {
                let l = map.get(r, c);
                if l != 0 {
                    labels[(r + dr) * w + c + dc] = l;
                }
            }
        }
        SegmentMap::new(w, h, labels).unwrap()
    }

    fn shift_mask(mask: &WallMask, dr: usize, dc: usize) -> WallMask {
        WallMask::from_fn(mask.width(), mask.height(), |r, c| r >= dr && c >= dc && mask.get(r - dr, c - dc))
    }

    /// Phantom wall closed off by a bar under its base, on a canvas with
    /// room to translate it without clipping.
    fn padded_phantom_mask() -> WallMask {
        let echo = generate_echo(&PhantomConfig { image_size: 48, speckle_sigma: 0.0, n_frames: 3, ..Default::default() }).unwrap();
        let m = &echo.truth_masks[0];
        let (w, h) = (m.width(), m.height());
        let last: Vec<usize> = (0..w).filter(|&c| m.get(h - 1, c)).collect();
        let (lo, hi) = (last[0], last[last.len() - 1]);
        let (top, left) = (2, 2);
        WallMask::from_fn(w + 8, h + 10, |r, c| {
            if r < top || c < left || c - left >= w {
                return false;
            }
            let (r, c) = (r - top, c - left);
            if r < h {
                m.get(r, c)
            } else {
                r < h + 2 && (lo..=hi).contains(&c)
            }
        })
    }

    #[test]
    fn l1_examples() {
        assert_eq!(l1_displacement((5.0, 5.0), (5.0, 5.0)), 0.0);
        assert_eq!(l1_displacement((8.0, 9.0), (5.0, 5.0)), 7.0);
    }

    proptest! {
        #[test]
        fn l1_is_symmetric(a in -1e3..1e3f64, b in -1e3..1e3f64, c in -1e3..1e3f64, d in -1e3..1e3f64) {
            prop_assert_eq!(l1_displacement((a, b), (c, d)), l1_displacement((c, d), (a, b)));
        }

        #[test]
        fn normalization_ignores_positive_scale(m in prop::collection::vec(0.0..100.0f64, 6), e in -20i32..20) {
            let scaled: Vec<f64> = m.iter().map(|v| v * 2f64.powi(e)).collect();
            prop_assert_eq!(normalize_maxima(&m), normalize_maxima(&scaled));
        }

        #[test]
        fn normalized_argmax_survives_any_scale(m in prop::collection::vec(0.01..100.0f64, 6), c in 1e-3..1e3f64) {
            let base = normalize_maxima(&m);
            let scaled = normalize_maxima(&m.iter().map(|v| v * c).collect::<Vec<_>>());
            let top = base.iter().position(|&v| v == 1.0).unwrap();
            prop_assert_eq!(scaled[top], 1.0);
            for (a, b) in base.iter().zip(&scaled) {
                prop_assert!((a - b).abs() <= 4.0 * f64::EPSILON);
            }
        }
    }

    #[test]
    fn motion_feature_examples() {
        assert_eq!(normalize_maxima(&[10.0, 8.0, 6.0, 4.0, 2.0, 1.0]), vec![1.0, 0.8, 0.6, 0.4, 0.2, 0.1]);
        assert_eq!(normalize_maxima(&[3.0; 6]), vec![1.0; 6]);
        assert_eq!(normalize_maxima(&[0.0; 6]), vec![0.0; 6]);
    }

    #[test]
    fn sampling_spreads_along_arc() {
        let arc: Vec<Pixel> = (0..20).map(|c| Pixel::new(0, c)).collect();
        let s = sample_arc(&arc, 4);
        // Length 19; targets 2.375, 7.125, 11.875, 16.625.
        assert_eq!(s.iter().map(|p| p.col).collect::<Vec<_>>(), vec![2, 7, 12, 17]);
        assert_eq!(sample_arc(&arc[..1], 3), vec![arc[0]; 3]);
    }

    #[test]
    fn rigid_translation_gives_exact_displacement() {
        let m0 = padded_phantom_mask();
        let m1 = shift_mask(&m0, 3, 4);
        assert_eq!(m0.count(), m1.count());
        let frames = analyze_echo(&[m0, m1], &SegmentRatios::default()).unwrap();
        for n in [1, 3, 10, 17] {
            let curves = EchoCurves::from_geometry(&frames, n).unwrap();
            for c in curves.boundary.iter().chain(&curves.center) {
                assert_eq!(c.values, vec![0.0, 7.0], "segment {} with {n} samples", c.segment);
            }
        }
    }

    #[test]
    fn static_echo_has_zero_motion_and_full_area() {
        let m = padded_phantom_mask();
        let f = extract_features(&[m.clone(), m.clone(), m], &SegmentRatios::default(), 10, FeatureMode::Six).unwrap();
        assert_eq!(f.values.len(), 18);
        for k in 0..6 {
            assert_eq!(&f.values[3 * k..3 * k + 3], &[0.0, 0.0, 1.0]);
        }
    }

    #[test]
    fn map_translation_moves_centers() {
        let m = padded_phantom_mask();
        let map = analyze_frame(&m, &SegmentRatios::default()).unwrap().map;
        let moved = shift_map(&map, 0, 2);
        let curves = center_displacement_curves(&[map, moved]).unwrap();
        for c in curves {
            assert_eq!(c.values, vec![0.0, 2.0]);
        }
    }

    fn block_map(w: usize, h: usize, r0: usize, c0: usize) -> SegmentMap {
        // Each analyzed segment gets a 10x10 block in its own row band.
        let mut labels = vec![0u8; w * h];
        for (k, &seg) in ANALYZED_SEGMENTS.iter().enumerate() {
            for r in 0..10 {
                for c in 0..10 {
                    labels[(r0 + 12 * k + r) * w + c0 + c] = seg;
                }
            }
        }
        SegmentMap::new(w, h, labels).unwrap()
    }

    #[test]
    fn shifted_block_overlap() {
        let a = block_map(32, 80, 2, 2);
        let b = block_map(32, 80, 2, 7);
        let far = block_map(32, 80, 2, 20);
        let curves = area_curves(&[a.clone(), b, far]).unwrap();
        for c in &curves {
            assert_eq!(c.reference_area, 100);
            assert_eq!(c.values, vec![100, 50, 0]);
            assert_eq!(area_feature(c).unwrap(), 0.0);
        }
        let curves = area_curves(&[a.clone(), block_map(32, 80, 2, 7)]).unwrap();
        assert_eq!(area_feature(&curves[0]).unwrap(), 0.5);
        assert_eq!(area_feature(&area_curves(&[a.clone(), a]).unwrap()[3]).unwrap(), 1.0);
    }

    #[test]
    fn missing_segment_reports_frame() {
        let a = block_map(32, 80, 2, 2);
        let mut labels = a.labels().to_vec();
        labels.iter_mut().filter(|l| **l == 6).for_each(|l| *l = 0);
        let b = SegmentMap::new(32, 80, labels).unwrap();
        for err in [area_curves(&[a.clone(), b.clone()]).unwrap_err(), center_displacement_curves(&[a, b]).unwrap_err()] {
            assert!(matches!(err, Error::MissingSegment { segment: 6, frame: Some(1) }), "{err}");
        }
    }

    /// Per-pixel recomputation of every curve on a small random-motion echo.
    #[test]
    fn curves_match_brute_force() {
        let echo = generate_echo(&PhantomConfig {
            image_size: 32,
            n_frames: 6,
            wall_thickness: 3.0,
            base_amplitude: 3.0,
            segment_amplitudes: [1.0, 0.2, 0.9, 0.5, 0.0, 1.0],
            ..Default::default()
        })
        .unwrap();
        let frames = analyze_echo(&echo.truth_masks, &SegmentRatios::default()).unwrap();
        let curves = EchoCurves::from_geometry(&frames, 10).unwrap();
        for (k, &seg) in ANALYZED_SEGMENTS.iter().enumerate() {
            let pix = |t: usize| -> Vec<(usize, usize)> {
                let m = &frames[t].map;
                let mut v = Vec::new();
                for r in 0..m.height() {
                    for c in 0..m.width() {
                        if m.get(r, c) == seg {
                            v.push((r, c));
                        }
                    }
                }
                v
            };
            let center = |v: &[(usize, usize)]| {
                let n = v.len() as f64;
                (v.iter().map(|p| p.0 as f64).sum::<f64>() / n, v.iter().map(|p| p.1 as f64).sum::<f64>() / n)
            };
            let p0 = pix(0);
            let c0 = center(&p0);
            for t in 0..frames.len() {
                let pt = pix(t);
                let inter = pt.iter().filter(|p| p0.contains(p)).count();
                assert_eq!(curves.area[k].values[t], inter);
                let d = l1_displacement(center(&pt), c0);
                assert!((curves.center[k].values[t] - d).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn boundary_peak_tracks_generator_excursion() {
        let config = PhantomConfig {
            image_size: 96,
            speckle_sigma: 0.0,
            segment_amplitudes: [1.0, 0.8, 0.5, 0.5, 0.8, 1.0],
            ..Default::default()
        };
        let echo = generate_echo(&config).unwrap();
        let frames = analyze_echo(&echo.truth_masks, &SegmentRatios::default()).unwrap();
        let curves = EchoCurves::from_geometry(&frames, 10).unwrap();
        // The generator moves the wall radially about (0.64 S, (S - 1) / 2),
        // so each sample's L1 excursion is the radial one times |cos| + |sin|.
        let s = config.image_size as f64;
        let (cy, cx) = (0.64 * s, (s - 1.0) / 2.0);
        // Segments 2 and 6 sit mid-wall, away from the ramps between plateaus.
        for k in [1, 4] {
            let samples = sample_arc(frames[0].arcs.arc(ANALYZED_SEGMENTS[k]), 10);
            let factor = samples
                .iter()
                .map(|p| {
                    let (dr, dc) = (p.row as f64 - cy, p.col as f64 - cx);
                    (dr.abs() + dc.abs()) / dr.hypot(dc)
                })
                .sum::<f64>()
                / samples.len() as f64;
            let peak = curves.boundary[k].max();
            let expected = config.peak_excursion(k) * factor;
            assert!((peak - expected).abs() <= 1.0, "segment {}: {peak} vs {expected}", ANALYZED_SEGMENTS[k]);
        }
    }

    #[test]
    fn five_segment_mode_drops_segment_five() {
        let m = padded_phantom_mask();
        let f = extract_features(&[m.clone(), m], &SegmentRatios::default(), 10, FeatureMode::Five).unwrap();
        assert_eq!(f.values.len(), 15);
        let names = FeatureMode::Five.names();
        assert_eq!(names.len(), 15);
        assert!(names.iter().all(|n| !n.starts_with("seg5_")));
        assert_eq!(FeatureMode::Six.names()[..3], ["seg1_mf_boundary", "seg1_mf_center", "seg1_af"]);
    }

    #[test]
    fn curves_csv_layout() {
        let c = vec![
            DisplacementCurve { segment: 1, values: vec![0.0, 1.5] },
            DisplacementCurve { segment: 7, values: vec![0.0, 2.0] },
        ];
        assert_eq!(displacement_csv(&c), "frame,seg1,seg7\n0,0,0\n1,1.5,2\n");
    }

    #[test]
    fn phantom_features_lie_in_unit_interval() {
        let echo = generate_echo(&PhantomConfig { segment_amplitudes: [1.0, 1.0, 0.1, 1.0, 0.9, 0.8], ..Default::default() }).unwrap();
        let f = extract_features(&echo.truth_masks, &SegmentRatios::default(), 10, FeatureMode::Six).unwrap();
        assert!(f.values.iter().all(|v| (0.0..=1.0).contains(v)));
        for fam in 0..2 {
            assert!((0..6).any(|k| f.values[3 * k + fam] == 1.0));
        }
    }

    #[test]
    fn area_feature_never_rises_with_amplitude() {
        let mut last = [f64::INFINITY; 6];
        for a in [0.0, 0.25, 0.5, 0.75, 1.0] {
            let echo = generate_echo(&PhantomConfig { speckle_sigma: 0.0, segment_amplitudes: [a; 6], ..Default::default() }).unwrap();
            let f = extract_features(&echo.truth_masks, &SegmentRatios::default(), 10, FeatureMode::Six).unwrap();
            for k in 0..6 {
                let af = f.values[3 * k + 2];
                assert!(af <= last[k], "segment {} AF rose to {af} at amplitude {a}", ANALYZED_SEGMENTS[k]);
                last[k] = af;
            }
        }
    }
}
