//! Binary-mask utilities: thresholding, morphological opening, connected
//! components, resizing and endocardial boundary tracing.
//!
//! All images are row-major. Pixels outside the image are background for
//! every operation here.

use std::collections::{HashMap, VecDeque};

use crate::error::{Error, Result};

/// Grayscale frame with intensities in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct GrayFrame {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl GrayFrame {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::Shape {
                expected: format!("{} intensities", width * height),
                actual: format!("{}", data.len()),
            });
        }
        if let Some(bad) = data.iter().find(|v| !(v.is_finite() && (0.0..=1.0).contains(*v))) {
            return Err(Error::format("frame", format!("intensity {bad} outside [0, 1]")));
        }
        Ok(Self { width, height, data })
    }

    pub fn filled(width: usize, height: usize, value: f64) -> Self {
        Self { width, height, data: vec![value.clamp(0.0, 1.0); width * height] }
    }

    /// Builds a frame from `f(row, col)`, clamping into `[0, 1]`.
    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for r in 0..height {
            for c in 0..width {
                let v = f(r, c);
                data.push(if v.is_nan() { 0.0 } else { v.clamp(0.0, 1.0) });
            }
        }
        Self { width, height, data }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.width + col]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }
}

/// Binary LV-wall mask (`true` = wall pixel).
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct WallMask {
    width: usize,
    height: usize,
    bits: Vec<bool>,
}

impl WallMask {
    pub fn new(width: usize, height: usize, bits: Vec<bool>) -> Result<Self> {
        if bits.len() != width * height {
            return Err(Error::Shape {
                expected: format!("{} bits", width * height),
                actual: format!("{}", bits.len()),
            });
        }
        Ok(Self { width, height, bits })
    }

    pub fn empty(width: usize, height: usize) -> Self {
        Self { width, height, bits: vec![false; width * height] }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut bits = Vec::with_capacity(width * height);
        for r in 0..height {
            for c in 0..width {
                bits.push(f(r, c));
            }
        }
        Self { width, height, bits }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> bool {
        self.bits[row * self.width + col]
    }

    /// Like [`get`](Self::get) but out-of-image coordinates read as background.
    #[inline]
    pub fn get_signed(&self, row: isize, col: isize) -> bool {
        row >= 0
            && col >= 0
            && (row as usize) < self.height
            && (col as usize) < self.width
            && self.bits[row as usize * self.width + col as usize]
    }

    pub fn set(&mut self, row: usize, col: usize, value: bool) {
        self.bits[row * self.width + col] = value;
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn pixels(&self) -> impl Iterator<Item = Pixel> + '_ {
        self.bits
            .iter()
            .enumerate()
            .filter(|(_, &b)| b)
            .map(move |(i, _)| Pixel::new(i / self.width, i % self.width))
    }

    /// Intersection over union; two empty masks have IoU 1.
    pub fn iou(&self, other: &WallMask) -> f64 {
        let (mut inter, mut union) = (0usize, 0usize);
        for (&a, &b) in self.bits.iter().zip(&other.bits) {
            inter += (a && b) as usize;
            union += (a || b) as usize;
        }
        if union == 0 {
            1.0
        } else {
            inter as f64 / union as f64
        }
    }

    pub fn is_subset_of(&self, other: &WallMask) -> bool {
        self.bits.iter().zip(&other.bits).all(|(&a, &b)| !a || b)
    }
}

/// Pixel coordinate, `row` increasing downward.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Pixel {
    pub row: usize,
    pub col: usize,
}

impl Pixel {
    pub const fn new(row: usize, col: usize) -> Self {
        Self { row, col }
    }

    pub fn is_8_adjacent(self, other: Pixel) -> bool {
        self != other && self.row.abs_diff(other.row) <= 1 && self.col.abs_diff(other.col) <= 1
    }

    /// Step length to an 8-adjacent pixel: 1 for axis steps, √2 for diagonals.
    pub fn step_length(self, other: Pixel) -> f64 {
        if self.row != other.row && self.col != other.col {
            std::f64::consts::SQRT_2
        } else {
            1.0
        }
    }
}

/// Ordered endocardial boundary chain, basal-left → apex → basal-right.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BoundaryPath {
    points: Vec<Pixel>,
}

impl BoundaryPath {
    /// Validates that the chain is simple, 8-connected and has ≥ 3 points.
    pub fn new(points: Vec<Pixel>) -> Result<Self> {
        if points.len() < 3 {
            return Err(Error::DegenerateBoundary { points: points.len(), required: 3 });
        }
        if let Some(w) = points.windows(2).find(|w| !w[0].is_8_adjacent(w[1])) {
            return Err(Error::Geometry(format!("boundary step {:?} -> {:?} is not 8-adjacent", w[0], w[1])));
        }
        let mut seen = std::collections::HashSet::with_capacity(points.len());
        if let Some(p) = points.iter().find(|p| !seen.insert(**p)) {
            return Err(Error::Geometry(format!("boundary revisits {p:?}")));
        }
        Ok(Self { points })
    }

    pub fn points(&self) -> &[Pixel] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Cumulative arc length at each point (first entry 0).
    pub fn cumulative_length(&self) -> Vec<f64> {
        cumulative_length(&self.points)
    }
}

/// Cumulative (axis, diagonal) step counts along a chain.
pub(crate) fn step_counts(points: &[Pixel]) -> Vec<(usize, usize)> {
    let mut acc = Vec::with_capacity(points.len());
    let (mut axis, mut diag) = (0, 0);
    for (i, p) in points.iter().enumerate() {
        if i > 0 {
            let q = points[i - 1];
            if q.row != p.row && q.col != p.col {
                diag += 1;
            } else {
                axis += 1;
            }
        }
        acc.push((axis, diag));
    }
    acc
}

/// Length of a chain with the given step counts. Equal counts give
/// bit-identical lengths wherever they occur on the chain.
pub(crate) fn arc_length(axis: usize, diag: usize) -> f64 {
    axis as f64 + diag as f64 * std::f64::consts::SQRT_2
}

pub(crate) fn cumulative_length(points: &[Pixel]) -> Vec<f64> {
    step_counts(points).into_iter().map(|(a, d)| arc_length(a, d)).collect()
}

/// Sets a bit wherever `prob ≥ threshold`.
pub fn binarize(prob_map: &GrayFrame, threshold: f64) -> WallMask {
    WallMask {
        width: prob_map.width,
        height: prob_map.height,
        bits: prob_map.data.iter().map(|&p| p >= threshold).collect(),
    }
}

/// 3×3 erosion; out-of-image neighbours are background.
pub fn erode(mask: &WallMask) -> WallMask {
    let (w, h) = (mask.width, mask.height);
    WallMask::from_fn(w, h, |r, c| {
        if r == 0 || c == 0 || r + 1 >= h || c + 1 >= w {
            return false;
        }
        (r - 1..=r + 1).all(|rr| (c - 1..=c + 1).all(|cc| mask.get(rr, cc)))
    })
}

/// 3×3 dilation; out-of-image neighbours are ignored.
pub fn dilate(mask: &WallMask) -> WallMask {
    let (w, h) = (mask.width, mask.height);
    WallMask::from_fn(w, h, |r, c| {
        let (r0, r1) = (r.saturating_sub(1), (r + 1).min(h - 1));
        let (c0, c1) = (c.saturating_sub(1), (c + 1).min(w - 1));
        (r0..=r1).any(|rr| (c0..=c1).any(|cc| mask.get(rr, cc)))
    })
}

/// Erosion followed by dilation with the 3×3 all-ones element.
pub fn morphological_open(mask: &WallMask) -> WallMask {
    dilate(&erode(mask))
}

const NEIGHBORS_8: [(isize, isize); 8] =
    [(-1, -1), (-1, 0), (-1, 1), (0, -1), (0, 1), (1, -1), (1, 0), (1, 1)];
const NEIGHBORS_4: [(isize, isize); 4] = [(-1, 0), (0, -1), (0, 1), (1, 0)];

/// Connected-component labels in raster discovery order; `None` off-set.
fn label_components(
    width: usize,
    height: usize,
    member: impl Fn(usize) -> bool,
    neighbors: &[(isize, isize)],
) -> (Vec<Option<usize>>, Vec<usize>) {
    let mut labels = vec![None; width * height];
    let mut sizes = Vec::new();
    let mut queue = VecDeque::new();
    for start in 0..width * height {
        if labels[start].is_some() || !member(start) {
            continue;
        }
        let id = sizes.len();
        let mut size = 0;
        labels[start] = Some(id);
        queue.push_back(start);
        while let Some(i) = queue.pop_front() {
            size += 1;
            let (r, c) = ((i / width) as isize, (i % width) as isize);
            for &(dr, dc) in neighbors {
                let (rr, cc) = (r + dr, c + dc);
                if rr < 0 || cc < 0 || rr >= height as isize || cc >= width as isize {
                    continue;
                }
                let j = rr as usize * width + cc as usize;
                if labels[j].is_none() && member(j) {
                    labels[j] = Some(id);
                    queue.push_back(j);
                }
            }
        }
        sizes.push(size);
    }
    (labels, sizes)
}

/// Number of 8-connected foreground components.
pub fn count_components(mask: &WallMask) -> usize {
    label_components(mask.width, mask.height, |i| mask.bits[i], &NEIGHBORS_8).1.len()
}

/// Keeps only the largest 8-connected component. Equal sizes resolve to
/// the component whose first pixel in raster order comes first.
pub fn largest_component(mask: &WallMask) -> Result<WallMask> {
    let (labels, sizes) = label_components(mask.width, mask.height, |i| mask.bits[i], &NEIGHBORS_8);
    let best = sizes
        .iter()
        .enumerate()
        .fold(None, |best: Option<(usize, usize)>, (id, &s)| match best {
            Some((_, bs)) if bs >= s => best,
            _ => Some((id, s)),
        })
        .ok_or(Error::EmptyMask)?
        .0;
    Ok(WallMask {
        width: mask.width,
        height: mask.height,
        bits: labels.iter().map(|l| *l == Some(best)).collect(),
    })
}

/// The blood-pool region enclosed (or cupped, through the bottom image
/// edge) by the wall.
#[derive(Clone, Debug)]
pub struct Cavity {
    width: usize,
    height: usize,
    members: Vec<bool>,
}

impl Cavity {
    #[inline]
    pub fn contains(&self, row: isize, col: isize) -> bool {
        row >= 0
            && col >= 0
            && (row as usize) < self.height
            && (col as usize) < self.width
            && self.members[row as usize * self.width + col as usize]
    }

    pub fn size(&self) -> usize {
        self.members.iter().filter(|&&b| b).count()
    }

    fn centroid_moments(&self) -> (usize, usize) {
        let (mut sum_col, mut n) = (0usize, 0usize);
        for (i, &m) in self.members.iter().enumerate() {
            if m {
                sum_col += i % self.width;
                n += 1;
            }
        }
        (sum_col, n)
    }
}

/// Finds the cavity: among 4-connected background components that touch
/// the wall and do not reach the top, left or right image edge, the one with
/// the most adjacent wall pixels.
pub fn find_cavity(mask: &WallMask) -> Result<Cavity> {
    let (w, h) = (mask.width, mask.height);
    let (labels, sizes) = label_components(w, h, |i| !mask.bits[i], &NEIGHBORS_4);
    let n = sizes.len();
    let mut excluded = vec![false; n];
    for (i, l) in labels.iter().enumerate() {
        if let Some(id) = l {
            let (r, c) = (i / w, i % w);
            if r == 0 || c == 0 || c + 1 == w {
                excluded[*id] = true;
            }
        }
    }
    // Distinct wall pixels 8-adjacent to each background component.
    let mut adjacency = vec![0usize; n];
    let mut seen: Vec<usize> = Vec::with_capacity(8);
    for p in mask.pixels() {
        seen.clear();
        for &(dr, dc) in &NEIGHBORS_8 {
            let (rr, cc) = (p.row as isize + dr, p.col as isize + dc);
            if rr < 0 || cc < 0 || rr >= h as isize || cc >= w as isize {
                continue;
            }
            if let Some(id) = labels[rr as usize * w + cc as usize] {
                if !seen.contains(&id) {
                    seen.push(id);
                    adjacency[id] += 1;
                }
            }
        }
    }
    let candidates: Vec<usize> = (0..n).filter(|&id| !excluded[id] && adjacency[id] > 0).collect();
    let best = candidates
        .iter()
        .map(|&id| adjacency[id])
        .max()
        .ok_or_else(|| Error::Geometry("no enclosed cavity next to the wall".into()))?;
    let top: Vec<usize> = candidates.iter().copied().filter(|&id| adjacency[id] == best).collect();
    if top.len() > 1 {
        return Err(Error::AmbiguousCavity { count: top.len() });
    }
    let id = top[0];
    Ok(Cavity { width: w, height: h, members: labels.iter().map(|l| *l == Some(id)).collect() })
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash)]
enum Dir {
    Up,
    Right,
    Down,
    Left,
}

impl Dir {
    fn clockwise(self) -> Dir {
        match self {
            Dir::Up => Dir::Right,
            Dir::Right => Dir::Down,
            Dir::Down => Dir::Left,
            Dir::Left => Dir::Up,
        }
    }

    fn counter_clockwise(self) -> Dir {
        match self {
            Dir::Up => Dir::Left,
            Dir::Right => Dir::Up,
            Dir::Down => Dir::Right,
            Dir::Left => Dir::Down,
        }
    }

    fn delta(self) -> (isize, isize) {
        match self {
            Dir::Up => (-1, 0),
            Dir::Right => (0, 1),
            Dir::Down => (1, 0),
            Dir::Left => (0, -1),
        }
    }

    /// (inside, outside) pixels flanking the crack leaving vertex `(y, x)`
    /// in this direction, with the inside on the walker's right.
    fn flanks(self, y: isize, x: isize) -> ((isize, isize), (isize, isize)) {
        match self {
            Dir::Right => ((y, x), (y - 1, x)),
            Dir::Down => ((y, x - 1), (y, x)),
            Dir::Left => ((y - 1, x - 1), (y, x - 1)),
            Dir::Up => ((y - 1, x), (y - 1, x - 1)),
        }
    }
}

/// Walks the cavity's crack boundary clockwise, keeping the cavity on the
/// right, and returns the outside pixel of every crack (None off-image).
fn trace_cavity_cracks(cavity: &Cavity) -> Vec<Option<Pixel>> {
    let is_edge = |y: isize, x: isize, d: Dir| {
        let (inside, outside) = d.flanks(y, x);
        cavity.contains(inside.0, inside.1) && !cavity.contains(outside.0, outside.1)
    };
    let (w, h) = (cavity.width as isize, cavity.height as isize);
    let mut visited: HashMap<(isize, isize, Dir), ()> = HashMap::new();
    let mut best: Vec<Option<Pixel>> = Vec::new();
    for y in 0..=h {
        for x in 0..=w {
            for d in [Dir::Right, Dir::Down, Dir::Left, Dir::Up] {
                if !is_edge(y, x, d) || visited.contains_key(&(y, x, d)) {
                    continue;
                }
                let mut loop_out = Vec::new();
                let (mut cy, mut cx, mut cd) = (y, x, d);
                loop {
                    visited.insert((cy, cx, cd), ());
                    let (_, outside) = cd.flanks(cy, cx);
                    let off_image = outside.0 < 0 || outside.1 < 0 || outside.0 >= h || outside.1 >= w;
                    loop_out.push(if off_image {
                        None
                    } else {
                        Some(Pixel::new(outside.0 as usize, outside.1 as usize))
                    });
                    let (dy, dx) = cd.delta();
                    let (ny, nx) = (cy + dy, cx + dx);
                    // Right turn first keeps diagonal-only cavity contacts apart.
                    let next = [cd.clockwise(), cd, cd.counter_clockwise()]
                        .into_iter()
                        .find(|&nd| is_edge(ny, nx, nd))
                        .expect("crack boundary is closed");
                    (cy, cx, cd) = (ny, nx, next);
                    if (cy, cx, cd) == (y, x, d) {
                        break;
                    }
                }
                if loop_out.len() > best.len() {
                    best = loop_out;
                }
            }
        }
    }
    best
}

/// Removes consecutive repeats and cuts loops so no pixel occurs twice.
fn simplify_chain(raw: impl IntoIterator<Item = Pixel>) -> Vec<Pixel> {
    let mut out: Vec<Pixel> = Vec::new();
    let mut index: HashMap<Pixel, usize> = HashMap::new();
    for p in raw {
        if let Some(&k) = index.get(&p) {
            for q in out.drain(k + 1..) {
                index.remove(&q);
            }
        } else {
            index.insert(p, out.len());
            out.push(p);
        }
    }
    out
}

/// Inner border of the wall as an ordered chain of wall pixels that share
/// an edge with the cavity, from the basal-left end through the apex to the
/// basal-right end.
pub fn extract_endocardial_boundary(mask: &WallMask) -> Result<BoundaryPath> {
    let cavity = find_cavity(mask)?;
    let cracks = trace_cavity_cracks(&cavity);
    if cracks.is_empty() {
        return Err(Error::Geometry("cavity has no boundary".into()));
    }
    let chain: Vec<Pixel> = if let Some(gap) = cracks.iter().position(Option::is_none) {
        // Open horseshoe: longest run of wall cracks between off-image gaps.
        let n = cracks.len();
        let mut runs: Vec<Vec<Pixel>> = vec![Vec::new()];
        for k in 1..=n {
            match cracks[(gap + k) % n] {
                Some(p) => runs.last_mut().unwrap().push(p),
                None => runs.push(Vec::new()),
            }
        }
        let longest = runs.into_iter().fold(Vec::new(), |a, r| if r.len() > a.len() { r } else { a });
        simplify_chain(longest)
    } else {
        let ring: Vec<Pixel> = cracks.into_iter().flatten().collect();
        cut_closed_ring(&ring, &cavity)?
    };
    let mut chain = chain;
    if chain.len() >= 2 && chain[0].col > chain[chain.len() - 1].col {
        chain.reverse();
    }
    BoundaryPath::new(chain).map_err(|e| match e {
        Error::DegenerateBoundary { .. } => Error::Geometry("endocardial boundary shorter than 3 pixels".into()),
        other => other,
    })
}

/// Opens a clockwise closed rim at its bottom: starts at the bottom-most
/// rim pixel left of the cavity centroid and ends at the bottom-most one
/// right of it, passing over the top.
fn cut_closed_ring(ring: &[Pixel], cavity: &Cavity) -> Result<Vec<Pixel>> {
    let (sum_col, n) = cavity.centroid_moments();
    // Compare col against sum_col / n exactly.
    let left_of = |p: &Pixel| p.col * n < sum_col;
    let right_of = |p: &Pixel| p.col * n > sum_col;
    let start = ring
        .iter()
        .enumerate()
        .filter(|(_, p)| left_of(p))
        .max_by(|(ia, a), (ib, b)| a.row.cmp(&b.row).then(b.col.cmp(&a.col)).then(ib.cmp(ia)))
        .map(|(i, _)| i);
    let end = ring
        .iter()
        .enumerate()
        .filter(|(_, p)| right_of(p))
        .max_by(|(ia, a), (ib, b)| a.row.cmp(&b.row).then(a.col.cmp(&b.col)).then(ib.cmp(ia)))
        .map(|(i, _)| i);
    let (Some(start), Some(end)) = (start, end) else {
        return Err(Error::Geometry("closed cavity has no left/right extent".into()));
    };
    let n = ring.len();
    let len = (end + n - start) % n + 1;
    Ok(simplify_chain((0..len).map(|k| ring[(start + k) % n])))
}

/// Bilinear resize with corner-aligned sampling.
pub fn resize_bilinear(frame: &GrayFrame, out_w: usize, out_h: usize) -> GrayFrame {
    let sx = axis_scale(frame.width, out_w);
    let sy = axis_scale(frame.height, out_h);
    GrayFrame::from_fn(out_w, out_h, |r, c| {
        let (y, x) = (r as f64 * sy, c as f64 * sx);
        let (y0, x0) = (y.floor() as usize, x.floor() as usize);
        let (y1, x1) = ((y0 + 1).min(frame.height - 1), (x0 + 1).min(frame.width - 1));
        let (fy, fx) = (y - y0 as f64, x - x0 as f64);
        let top = frame.get(y0, x0) * (1.0 - fx) + frame.get(y0, x1) * fx;
        let bottom = frame.get(y1, x0) * (1.0 - fx) + frame.get(y1, x1) * fx;
        top * (1.0 - fy) + bottom * fy
    })
}

/// Nearest-neighbour counterpart of [`resize_bilinear`] for masks.
pub fn resize_nearest(mask: &WallMask, out_w: usize, out_h: usize) -> WallMask {
    let sx = axis_scale(mask.width, out_w);
    let sy = axis_scale(mask.height, out_h);
    WallMask::from_fn(out_w, out_h, |r, c| {
        let y = ((r as f64 * sy).round() as usize).min(mask.height - 1);
        let x = ((c as f64 * sx).round() as usize).min(mask.width - 1);
        mask.get(y, x)
    })
}

fn axis_scale(input: usize, output: usize) -> f64 {
    if output <= 1 || input <= 1 {
        0.0
    } else {
        (input - 1) as f64 / (output - 1) as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn mask_from_rows(rows: &[&str]) -> WallMask {
        let h = rows.len();
        let w = rows[0].len();
        WallMask::from_fn(w, h, |r, c| rows[r].as_bytes()[c] == b'#')
    }

    #[test]
    fn binarize_is_inclusive() {
        let f = GrayFrame::filled(4, 3, 0.5);
        assert_eq!(binarize(&f, 0.5).count(), 12);
        assert_eq!(binarize(&GrayFrame::filled(4, 3, 0.0), 0.5).count(), 0);
        let f = GrayFrame::from_fn(5, 5, |r, c| if (r, c) == (2, 3) { 0.9 } else { 0.1 });
        let m = binarize(&f, 0.5);
        assert_eq!(m.count(), 1);
        assert!(m.get(2, 3));
    }

    #[test]
    fn opening_removes_isolated_pixel() {
        let mut m = WallMask::empty(7, 7);
        m.set(3, 3, true);
        assert_eq!(morphological_open(&m).count(), 0);
    }

    #[test]
    fn opening_restores_solid_block() {
        // Brute force: a 10×10 block away from the border erodes to its 8×8
        // core, whose dilation is exactly the original block.
        let block = WallMask::from_fn(16, 16, |r, c| (3..13).contains(&r) && (3..13).contains(&c));
        let eroded = erode(&block);
        let core = WallMask::from_fn(16, 16, |r, c| (4..12).contains(&r) && (4..12).contains(&c));
        assert_eq!(eroded, core);
        assert_eq!(morphological_open(&block), block);
    }

    #[test]
    fn largest_component_cases() {
        let mut m = WallMask::empty(20, 20);
        for r in 0..5 {
            for c in 0..10 {
                m.set(r + 10, c + 5, true);
            }
        }
        for c in 0..3 {
            m.set(1, c + 1, true);
        }
        let kept = largest_component(&m).unwrap();
        assert_eq!(kept.count(), 50);
        assert!(!kept.get(1, 1));
        assert_eq!(largest_component(&kept).unwrap(), kept);

        let tie = mask_from_rows(&["##...", "##...", ".....", "...##", "...##"]);
        let kept = largest_component(&tie).unwrap();
        assert_eq!(kept.count(), 4);
        assert!(kept.get(0, 0));
        assert!(matches!(largest_component(&WallMask::empty(3, 3)), Err(Error::EmptyMask)));
    }

    fn u_shape(w: usize, h: usize, r0: usize, c0: usize, c1: usize, t: usize) -> WallMask {
        // Cavity rows r0..h, cols c0..=c1; wall of thickness t around it.
        WallMask::from_fn(w, h, |r, c| {
            let in_outer = r + t >= r0 && c + t >= c0 && c <= c1 + t;
            let in_cavity = r >= r0 && c >= c0 && c <= c1;
            in_outer && !in_cavity
        })
    }

    #[test]
    fn u_annulus_boundary_matches_adjacency_scan() {
        let m = u_shape(30, 24, 6, 10, 19, 3);
        let path = extract_endocardial_boundary(&m).unwrap();
        // Brute force: wall pixels sharing an edge with the cavity.
        let cavity = |r: isize, c: isize| r >= 6 && r < 24 && (10..=19).contains(&c);
        let mut expected = 0;
        for p in m.pixels() {
            let (r, c) = (p.row as isize, p.col as isize);
            if NEIGHBORS_4.iter().any(|(dr, dc)| cavity(r + dr, c + dc)) {
                expected += 1;
            }
        }
        // Inner perimeter 2·18 + 2·10 minus the 10-pixel opening.
        assert_eq!(expected, 2 * 18 + 10);
        assert_eq!(path.len(), expected);
        assert_eq!(path.points()[0], Pixel::new(23, 9));
        assert_eq!(*path.points().last().unwrap(), Pixel::new(23, 20));
    }

    #[test]
    fn solid_disk_has_no_cavity() {
        let m = WallMask::from_fn(20, 20, |r, c| {
            let (dr, dc) = (r as f64 - 9.5, c as f64 - 9.5);
            dr * dr + dc * dc < 36.0
        });
        assert!(matches!(extract_endocardial_boundary(&m), Err(Error::Geometry(_))));
    }

    #[test]
    fn closed_ring_is_cut_at_bottom() {
        let m = WallMask::from_fn(24, 24, |r, c| {
            let (dr, dc) = (r as f64 - 11.5, c as f64 - 11.5);
            let d = (dr * dr + dc * dc).sqrt();
            (6.0..9.0).contains(&d)
        });
        let path = extract_endocardial_boundary(&m).unwrap();
        let top = path.points().iter().map(|p| p.row).min().unwrap();
        let first = path.points()[0];
        let last = *path.points().last().unwrap();
        assert!(first.col < 12 && last.col >= 12);
        assert!(first.row > 14 && last.row > 14);
        assert!(top < 7);
    }

    #[test]
    fn two_equal_cavities_are_ambiguous() {
        let m = mask_from_rows(&[
            ".........",
            ".#######.",
            ".#..#..#.",
            ".#..#..#.",
            ".#######.",
            ".........",
        ]);
        assert!(matches!(find_cavity(&m), Err(Error::AmbiguousCavity { count: 2 })));
    }

    #[test]
    fn resize_cases() {
        let f = GrayFrame::from_fn(5, 4, |r, c| (r * 5 + c) as f64 / 20.0);
        assert_eq!(resize_bilinear(&f, 5, 4), f);
        let k = GrayFrame::filled(7, 3, 0.7);
        let out = resize_bilinear(&k, 11, 9);
        assert!(out.data().iter().all(|&v| (v - 0.7).abs() < 1e-15));
        let two = GrayFrame::new(2, 1, vec![0.0, 1.0]).unwrap();
        assert_eq!(resize_bilinear(&two, 3, 1).data(), &[0.0, 0.5, 1.0]);
        let m = WallMask::from_fn(4, 4, |r, c| r < 2 && c < 2);
        assert_eq!(resize_nearest(&m, 4, 4), m);
        assert_eq!(resize_nearest(&m, 8, 8).count(), 16);
    }

    fn arb_mask(size: usize) -> impl Strategy<Value = WallMask> {
        proptest::collection::vec(any::<bool>(), size * size)
            .prop_map(move |bits| WallMask::new(size, size, bits).unwrap())
    }

    proptest! {
        #[test]
        fn opening_is_anti_extensive_and_idempotent(m in arb_mask(32)) {
            let o = morphological_open(&m);
            prop_assert!(o.is_subset_of(&m));
            prop_assert_eq!(morphological_open(&o), o);
        }

        #[test]
        fn opening_is_increasing(a in arb_mask(16), b in arb_mask(16)) {
            let union = WallMask::from_fn(16, 16, |r, c| a.get(r, c) || b.get(r, c));
            prop_assert!(morphological_open(&a).is_subset_of(&morphological_open(&union)));
        }

        #[test]
        fn binarize_is_monotone_in_threshold(
            data in proptest::collection::vec(0.0f64..=1.0, 64),
            t1 in 0.01f64..0.99,
            t2 in 0.01f64..0.99,
        ) {
            let f = GrayFrame::new(8, 8, data).unwrap();
            let (lo, hi) = if t1 <= t2 { (t1, t2) } else { (t2, t1) };
            prop_assert!(binarize(&f, hi).is_subset_of(&binarize(&f, lo)));
        }

        #[test]
        fn boundary_is_simple_rim_chain(
            r0 in 3usize..10, c0 in 4usize..10, w in 3usize..10, t in 1usize..4,
            noise in proptest::collection::vec((0usize..24, 0usize..28), 0..6),
        ) {
            let mut m = u_shape(28, 24, r0, c0, c0 + w, t);
            for (r, c) in noise {
                let v = m.get(r, c);
                m.set(r, c, !v);
            }
            if let Ok(path) = extract_endocardial_boundary(&m) {
                let cav = find_cavity(&m).unwrap();
                for p in path.points() {
                    prop_assert!(m.get(p.row, p.col));
                    let (r, c) = (p.row as isize, p.col as isize);
                    prop_assert!(NEIGHBORS_8.iter().any(|(dr, dc)| cav.contains(r + dr, c + dc)));
                }
                // `BoundaryPath::new` already enforces simplicity and adjacency.
                prop_assert!(BoundaryPath::new(path.points().to_vec()).is_ok());
            }
        }
    }
}
