//! Seven-segment division of the LV wall along the endocardial boundary.
//!
//! The boundary runs basal-left → apex → basal-right. The left part (length
//! L) carries segments 1, 2, 3 and the right part (length R) segments 5, 6,
//! 7; segment 4 is an apical cap carved symmetrically out of segments 3 and
//! 5. Every wall pixel then takes the segment of its nearest boundary point.

use std::ops::Range;

use crate::error::{Error, Result};
use crate::imgproc::{arc_length, step_counts, BoundaryPath, Pixel, WallMask};

/// Segments that carry features; the apical cap (4) never does.
pub const ANALYZED_SEGMENTS: [u8; 6] = [1, 2, 3, 5, 6, 7];

#[derive(Clone, Debug, PartialEq)]
pub struct SegmentRatios {
    /// Segments 1, 2, 3 along L, base → apex.
    pub left_fractions: [f64; 3],
    /// Segments 7, 6, 5 along R, base → apex.
    pub right_fractions: [f64; 3],
    /// Share of the total boundary length given to segment 4.
    pub apical_fraction: f64,
}

impl Default for SegmentRatios {
    fn default() -> Self {
        Self { left_fractions: [1.0 / 3.0; 3], right_fractions: [1.0 / 3.0; 3], apical_fraction: 0.10 }
    }
}

impl SegmentRatios {
    pub fn validate(&self) -> Result<()> {
        for (name, fr) in [("left_fractions", &self.left_fractions), ("right_fractions", &self.right_fractions)] {
            if fr.iter().any(|f| !(*f > 0.0 && *f < 1.0)) {
                return Err(Error::config(name, "entries must lie in (0, 1)"));
            }
            if (fr.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
                return Err(Error::config(name, "entries must sum to 1"));
            }
        }
        if !(self.apical_fraction >= 0.0 && self.apical_fraction < 1.0) {
            return Err(Error::config("apical_fraction", "must lie in [0, 1)"));
        }
        Ok(())
    }
}

/// Topmost boundary point; ties go to the point whose arc position is
/// closest to the arc-length midpoint, then to the earlier index.
pub fn find_apex(boundary: &BoundaryPath) -> usize {
    let cum = boundary.cumulative_length();
    let half = cum[cum.len() - 1] / 2.0;
    let top = boundary.points().iter().map(|p| p.row).min().expect("non-empty path");
    let mut best = None::<(usize, f64)>;
    for (i, p) in boundary.points().iter().enumerate() {
        if p.row != top {
            continue;
        }
        let d = (cum[i] - half).abs();
        if best.is_none_or(|(_, bd)| d < bd) {
            best = Some((i, d));
        }
    }
    best.expect("topmost point exists").0
}

/// Arc lengths (L, R) of the boundary on either side of the apex.
pub fn split_lr(boundary: &BoundaryPath, apex_index: usize) -> (f64, f64) {
    let steps = step_counts(boundary.points());
    let (axis, diag) = steps[apex_index];
    let (total_axis, total_diag) = steps[steps.len() - 1];
    (arc_length(axis, diag), arc_length(total_axis - axis, total_diag - diag))
}

/// Index ranges of the seven boundary arcs, in path order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SegmentArcs {
    ranges: [Range<usize>; 7],
    points: Vec<Pixel>,
}

impl SegmentArcs {
    /// Arc of segment `id` (1–7).
    pub fn arc(&self, id: u8) -> &[Pixel] {
        &self.points[self.ranges[usize::from(id) - 1].clone()]
    }

    pub fn range(&self, id: u8) -> Range<usize> {
        self.ranges[usize::from(id) - 1].clone()
    }

    pub fn path(&self) -> &[Pixel] {
        &self.points
    }
}

/// Index whose arc position is nearest `target`; ties go to the earlier index.
fn nearest_index(cum: &[f64], target: f64) -> usize {
    let hi = cum.partition_point(|&s| s < target);
    if hi == 0 {
        return 0;
    }
    if hi == cum.len() {
        return cum.len() - 1;
    }
    if target - cum[hi - 1] <= cum[hi] - target {
        hi - 1
    } else {
        hi
    }
}

pub fn divide_segments(boundary: &BoundaryPath, apex_index: usize, ratios: &SegmentRatios) -> Result<SegmentArcs> {
    ratios.validate()?;
    let n = boundary.len();
    if n < 7 {
        return Err(Error::DegenerateBoundary { points: n, required: 7 });
    }
    if apex_index == 0 || apex_index + 1 >= n {
        return Err(Error::Geometry(format!("apex index {apex_index} is not interior to a {n}-point boundary")));
    }
    let cum = boundary.cumulative_length();
    let total = cum[n - 1];
    let (left, right) = split_lr(boundary, apex_index);
    let (lf, rf) = (&ratios.left_fractions, &ratios.right_fractions);
    let cap = ratios.apical_fraction * total / 2.0;
    let targets = [
        left * lf[0],
        left * (lf[0] + lf[1]),
        left - cap,
        left + cap,
        total - right * (rf[0] + rf[1]),
        total - right * rf[0],
    ];
    let mut cuts = [0usize; 6];
    for (k, &t) in targets.iter().enumerate() {
        cuts[k] = nearest_index(&cum, t);
    }
    // The cap can only eat into segments 3 and 5.
    cuts[2] = cuts[2].max(cuts[1]).min(apex_index);
    cuts[3] = cuts[3].max(apex_index).min(cuts[4]);
    for k in 1..6 {
        cuts[k] = cuts[k].max(cuts[k - 1]);
    }
    let bounds = [0, cuts[0], cuts[1], cuts[2], cuts[3], cuts[4], cuts[5], n];
    let ranges = std::array::from_fn(|k| bounds[k]..bounds[k + 1]);
    Ok(SegmentArcs { ranges, points: boundary.points().to_vec() })
}

/// Per-pixel segment labels: 0 off the wall, 1–7 on it.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SegmentMap {
    width: usize,
    height: usize,
    labels: Vec<u8>,
}

impl SegmentMap {
    pub fn new(width: usize, height: usize, labels: Vec<u8>) -> Result<Self> {
        if labels.len() != width * height {
            return Err(Error::Shape { expected: format!("{} labels", width * height), actual: labels.len().to_string() });
        }
        if let Some(l) = labels.iter().find(|&&l| l > 7) {
            return Err(Error::format("segment map", format!("label {l} out of range")));
        }
        Ok(Self { width, height, labels })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn get(&self, row: usize, col: usize) -> u8 {
        self.labels[row * self.width + col]
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn pixels_of(&self, segment: u8) -> impl Iterator<Item = Pixel> + '_ {
        self.labels
            .iter()
            .enumerate()
            .filter(move |(_, &l)| l == segment)
            .map(move |(i, _)| Pixel::new(i / self.width, i % self.width))
    }

    pub fn count(&self, segment: u8) -> usize {
        self.labels.iter().filter(|&&l| l == segment).count()
    }

    pub fn wall(&self) -> WallMask {
        WallMask::new(self.width, self.height, self.labels.iter().map(|&l| l != 0).collect())
            .expect("dimensions match")
    }
}

/// Labels each wall pixel with the segment of its nearest boundary point
/// (Euclidean; ties resolve to the lower segment number).
pub fn build_segment_map(mask: &WallMask, arcs: &SegmentArcs) -> Result<SegmentMap> {
    let mut anchors: Vec<(Pixel, u8)> = Vec::with_capacity(arcs.points.len());
    for id in 1..=7u8 {
        anchors.extend(arcs.arc(id).iter().map(|&p| (p, id)));
    }
    if anchors.is_empty() {
        return Err(Error::Geometry("no boundary arcs to assign wall pixels to".into()));
    }
    let mut labels = vec![0u8; mask.width() * mask.height()];
    for p in mask.pixels() {
        let mut best = (usize::MAX, 0u8);
        for &(q, id) in &anchors {
            let d = p.row.abs_diff(q.row).pow(2) + p.col.abs_diff(q.col).pow(2);
            if d < best.0 || (d == best.0 && id < best.1) {
                best = (d, id);
            }
        }
        labels[p.row * mask.width() + p.col] = best.1;
    }
    Ok(SegmentMap { width: mask.width(), height: mask.height(), labels })
}

/// Exact first-order moments of a pixel set.
#[derive(Copy, Clone, Debug, Default, PartialEq, Eq)]
pub struct Moments {
    pub sum_row: u64,
    pub sum_col: u64,
    pub count: u64,
}

impl Moments {
    pub fn center(&self) -> (f64, f64) {
        (self.sum_row as f64 / self.count as f64, self.sum_col as f64 / self.count as f64)
    }
}

/// Moments of segments 1, 2, 3, 5, 6, 7.
pub fn segment_moments(map: &SegmentMap) -> Result<[Moments; 6]> {
    let mut m = [Moments::default(); 8];
    for (i, &l) in map.labels.iter().enumerate() {
        let e = &mut m[usize::from(l)];
        e.sum_row += (i / map.width) as u64;
        e.sum_col += (i % map.width) as u64;
        e.count += 1;
    }
    let mut out = [Moments::default(); 6];
    for (k, &seg) in ANALYZED_SEGMENTS.iter().enumerate() {
        out[k] = m[usize::from(seg)];
        if out[k].count == 0 {
            return Err(Error::MissingSegment { segment: seg, frame: None });
        }
    }
    Ok(out)
}

/// Centre of mass (row, col) of segments 1, 2, 3, 5, 6, 7.
pub fn segment_centers(map: &SegmentMap) -> Result<[(f64, f64); 6]> {
    Ok(segment_moments(map)?.map(|m| m.center()))
}

/// Boundary, apex, arcs and segment map of one frame.
#[derive(Clone, Debug)]
pub struct FrameGeometry {
    pub boundary: BoundaryPath,
    pub apex: usize,
    pub arcs: SegmentArcs,
    pub map: SegmentMap,
}

pub fn analyze_frame(mask: &WallMask, ratios: &SegmentRatios) -> Result<FrameGeometry> {
    let boundary = crate::imgproc::extract_endocardial_boundary(mask)?;
    let apex = find_apex(&boundary);
    let arcs = divide_segments(&boundary, apex, ratios)?;
    let map = build_segment_map(mask, &arcs)?;
    Ok(FrameGeometry { boundary, apex, arcs, map })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::phantom::{generate_echo, PhantomConfig};

    /// Up the left column, across the top row, down the right column;
    /// every step is an axis step.
    fn u_path(arm: usize, top: usize) -> BoundaryPath {
        let mut pts = Vec::new();
        for k in 0..arm {
            pts.push(Pixel::new(arm - k, 0));
        }
        for k in 0..top {
            pts.push(Pixel::new(0, k));
        }
        for k in 0..arm {
            pts.push(Pixel::new(1 + k, top - 1));
        }
        BoundaryPath::new(pts).unwrap()
    }

    #[test]
    fn apex_of_symmetric_path_is_midpoint() {
        // Arms of 5 points meeting at a single top point.
        let mut pts: Vec<Pixel> = (0..5).map(|k| Pixel::new(10 - k, 5 + k)).collect();
        pts.push(Pixel::new(5, 10));
        pts.extend((0..5).map(|k| Pixel::new(6 + k, 11 + k)));
        let path = BoundaryPath::new(pts).unwrap();
        assert_eq!(find_apex(&path), 5);
        let (l, r) = split_lr(&path, 5);
        assert_eq!(l, r);
    }

    #[test]
    fn unique_topmost_point_wins() {
        let mut pts: Vec<Pixel> = (0..17).map(|k| Pixel::new(30 - k, k)).collect();
        pts.extend((0..10).map(|k| Pixel::new(14 + k, 17 + k)));
        let path = BoundaryPath::new(pts).unwrap();
        assert_eq!(find_apex(&path), 16);
    }

    #[test]
    fn plateau_tie_goes_to_center() {
        // 5-point plateau; brute force the arc position closest to half.
        let path = u_path(4, 5);
        let cum = path.cumulative_length();
        let half = cum[cum.len() - 1] / 2.0;
        let top = path.points().iter().map(|p| p.row).min().unwrap();
        let expected = (0..path.len())
            .filter(|&i| path.points()[i].row == top)
            .min_by(|&a, &b| (cum[a] - half).abs().total_cmp(&(cum[b] - half).abs()).then(a.cmp(&b)))
            .unwrap();
        assert_eq!(expected, 6);
        assert_eq!(find_apex(&path), expected);
    }

    #[test]
    fn split_counts_steps() {
        let pts: Vec<Pixel> = (0..11).map(|k| Pixel::new(0, k)).collect();
        let path = BoundaryPath::new(pts).unwrap();
        assert_eq!(split_lr(&path, 1), (1.0, 9.0));
    }

    fn equal_step_path() -> BoundaryPath {
        // 300 points, all axis steps: 100 up, 100 across, 100 down.
        u_path(100, 100)
    }

    #[test]
    fn thirds_without_cap() {
        let path = equal_step_path();
        let ratios = SegmentRatios { apical_fraction: 0.0, ..Default::default() };
        let arcs = divide_segments(&path, 150, &ratios).unwrap();
        let sizes: Vec<usize> = (1..=7).map(|id| arcs.arc(id).len()).collect();
        assert_eq!(sizes[3], 0);
        for (k, &s) in sizes.iter().enumerate().filter(|(k, _)| *k != 3) {
            assert!(s.abs_diff(50) <= 1, "segment {} has {s} points", k + 1);
        }
        let joined: Vec<Pixel> = (1..=7).flat_map(|id| arcs.arc(id).to_vec()).collect();
        assert_eq!(joined, path.points());
    }

    #[test]
    fn apical_cap_takes_fifteen_from_each_side() {
        let path = equal_step_path();
        let no_cap = divide_segments(&path, 150, &SegmentRatios { apical_fraction: 0.0, ..Default::default() }).unwrap();
        let cap = divide_segments(&path, 150, &SegmentRatios::default()).unwrap();
        // Total length 299; cap 29.9 spans [135.05, 164.95] → indices 135..165.
        assert_eq!(cap.range(4), 135..165);
        assert_eq!(no_cap.arc(3).len() - cap.arc(3).len(), 15);
        assert_eq!(no_cap.arc(5).len() - cap.arc(5).len(), 15);
    }

    #[test]
    fn short_boundary_is_degenerate() {
        let path = BoundaryPath::new((0..6).map(|k| Pixel::new(0, k)).collect()).unwrap();
        assert!(matches!(
            divide_segments(&path, 3, &SegmentRatios::default()),
            Err(Error::DegenerateBoundary { points: 6, .. })
        ));
    }

    #[test]
    fn segment_map_partitions_wall() {
        // Odd width puts the apex on a single column. Half-open cuts still
        // hand one extra boundary point to the right side, so the image
        // is large enough for that point to stay under the tolerance.
        let echo = generate_echo(&PhantomConfig { image_size: 257, speckle_sigma: 0.0, ..Default::default() }).unwrap();
        let mask = &echo.truth_masks[0];
        let g = analyze_frame(mask, &SegmentRatios::default()).unwrap();
        assert_eq!(g.map.wall(), *mask);
        for id in 1..=7u8 {
            for p in g.arcs.arc(id) {
                assert_eq!(g.map.get(p.row, p.col), id);
            }
        }
        // Symmetric phantom: mirrored segment pairs have near-equal areas.
        for (a, b) in [(1u8, 7u8), (2, 6), (3, 5)] {
            let (ca, cb) = (g.map.count(a) as f64, g.map.count(b) as f64);
            assert!(ca > 0.0);
            assert!((ca - cb).abs() <= 0.02 * ca.max(cb), "segments {a}/{b}: {ca} vs {cb}");
        }
    }

    #[test]
    fn mirroring_swaps_segments() {
        let echo = generate_echo(&PhantomConfig {
            image_size: 65,
            speckle_sigma: 0.0,
            segment_amplitudes: [0.2, 1.0, 0.6, 0.9, 0.3, 0.8],
            ..Default::default()
        })
        .unwrap();
        let mask = &echo.truth_masks[12];
        let w = mask.width();
        let mirrored = WallMask::from_fn(w, mask.height(), |r, c| mask.get(r, w - 1 - c));
        let a = analyze_frame(mask, &SegmentRatios::default()).unwrap();
        let b = analyze_frame(&mirrored, &SegmentRatios::default()).unwrap();
        for id in 1..=7u8 {
            let (la, lb) = (a.arcs.arc(id).len(), b.arcs.arc(8 - id).len());
            assert!(la.abs_diff(lb) <= 1, "segment {id}: {la} vs mirrored {lb}");
        }
    }

    #[test]
    fn centers_are_means() {
        let mut labels = vec![0u8; 400];
        for r in 9..=11 {
            for c in 9..=11 {
                labels[r * 20 + c] = 1;
            }
        }
        labels[0] = 2;
        labels[2] = 2;
        for (seg, at) in [(3u8, 50usize), (5, 60), (6, 70), (7, 80)] {
            labels[at] = seg;
        }
        let map = SegmentMap::new(20, 20, labels).unwrap();
        let c = segment_centers(&map).unwrap();
        assert_eq!(c[0], (10.0, 10.0));
        assert_eq!(c[1], (0.0, 1.0));
        let mut missing = map.labels().to_vec();
        missing[80] = 0;
        let map = SegmentMap::new(20, 20, missing).unwrap();
        assert!(matches!(segment_centers(&map), Err(Error::MissingSegment { segment: 7, .. })));
    }

    #[test]
    fn phantom_centers_match_brute_force() {
        let echo = generate_echo(&PhantomConfig { speckle_sigma: 0.0, ..Default::default() }).unwrap();
        let g = analyze_frame(&echo.truth_masks[5], &SegmentRatios::default()).unwrap();
        let centers = segment_centers(&g.map).unwrap();
        for (k, &seg) in ANALYZED_SEGMENTS.iter().enumerate() {
            let (mut sr, mut sc, mut n) = (0.0, 0.0, 0.0);
            for r in 0..g.map.height() {
                for c in 0..g.map.width() {
                    if g.map.get(r, c) == seg {
                        sr += r as f64;
                        sc += c as f64;
                        n += 1.0;
                    }
                }
            }
            assert_eq!(centers[k], (sr / n, sc / n));
        }
    }
}
