//! Synthetic one-cycle echo sequences with ground-truth wall masks.
//!
//! The left-ventricle wall is drawn as an elliptical horseshoe with the apex
//! at the top and the mitral opening cut by the bottom image edge. Each
//! analysed segment moves radially inward along a half-sine over the cycle,
//! scaled by its own amplitude factor, so frame 0 is end-diastole and the
//! middle frame is end-systole.

use std::f64::consts::PI;

use rand::seq::SliceRandom;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::imgproc::{GrayFrame, WallMask};
use crate::wallgeom::ANALYZED_SEGMENTS;

const TISSUE: f64 = 0.2;
const WALL: f64 = 0.8;
const BLOOD: f64 = 0.05;

#[derive(Clone, Debug, PartialEq)]
pub struct PhantomConfig {
    pub image_size: usize,
    pub n_frames: usize,
    pub wall_thickness: f64,
    /// Peak inward excursion of a fully moving segment, in pixels.
    pub base_amplitude: f64,
    /// Scale factors for segments 1, 2, 3, 5, 6, 7.
    pub segment_amplitudes: [f64; 6],
    pub speckle_sigma: f64,
    pub contrast: f64,
    /// Segments whose factor is below this are labeled abnormal.
    pub abnormality_threshold: f64,
    pub rng_seed: u64,
}

impl Default for PhantomConfig {
    fn default() -> Self {
        Self {
            image_size: 64,
            n_frames: 25,
            wall_thickness: 7.0,
            base_amplitude: 6.0,
            segment_amplitudes: [1.0; 6],
            speckle_sigma: 0.1,
            contrast: 1.0,
            abnormality_threshold: 0.5,
            rng_seed: 0,
        }
    }
}

impl PhantomConfig {
    pub fn validate(&self) -> Result<()> {
        if self.image_size < 32 {
            return Err(Error::config("image_size", format!("must be ≥ 32, got {}", self.image_size)));
        }
        if self.n_frames < 3 {
            return Err(Error::config("n_frames", format!("must be ≥ 3, got {}", self.n_frames)));
        }
        if !(self.wall_thickness >= 2.0 && self.wall_thickness <= 0.15 * self.image_size as f64) {
            return Err(Error::config(
                "wall_thickness",
                format!("must lie in [2, {}], got {}", 0.15 * self.image_size as f64, self.wall_thickness),
            ));
        }
        if !(self.base_amplitude >= 0.0 && self.base_amplitude <= 0.15 * self.image_size as f64) {
            return Err(Error::config(
                "base_amplitude",
                format!("must lie in [0, {}], got {}", 0.15 * self.image_size as f64, self.base_amplitude),
            ));
        }
        if let Some(a) = self.segment_amplitudes.iter().find(|a| !(0.0..=1.0).contains(*a)) {
            return Err(Error::config("segment_amplitudes", format!("entries must lie in [0, 1], got {a}")));
        }
        if !(self.speckle_sigma >= 0.0 && self.speckle_sigma.is_finite()) {
            return Err(Error::config("speckle_sigma", format!("must be ≥ 0, got {}", self.speckle_sigma)));
        }
        if !(self.contrast > 0.0 && self.contrast <= 1.0) {
            return Err(Error::config("contrast", format!("must lie in (0, 1], got {}", self.contrast)));
        }
        if !(self.abnormality_threshold > 0.0 && self.abnormality_threshold <= 1.0) {
            return Err(Error::config(
                "abnormality_threshold",
                format!("must lie in (0, 1], got {}", self.abnormality_threshold),
            ));
        }
        Ok(())
    }

    /// Fraction of the peak excursion reached at frame `t`.
    pub fn motion_profile(&self, t: usize) -> f64 {
        (PI * t as f64 / (self.n_frames - 1) as f64).sin()
    }

    /// Largest inward excursion (pixels) of a segment's centre over the
    /// cycle, from the noiseless generator geometry. `index` follows the
    /// order 1, 2, 3, 5, 6, 7.
    pub fn peak_excursion(&self, index: usize) -> f64 {
        let peak = (0..self.n_frames).map(|t| self.motion_profile(t)).fold(0.0, f64::max);
        self.base_amplitude * self.segment_amplitudes[index] * peak
    }
}

#[derive(Clone, Debug)]
pub struct PhantomEcho {
    pub frames: Vec<GrayFrame>,
    pub truth_masks: Vec<WallMask>,
    /// `true` = abnormal, order 1, 2, 3, 5, 6, 7.
    pub truth_segment_labels: [bool; 6],
    /// `true` = MI.
    pub echo_label: bool,
    pub config: PhantomConfig,
}

/// Elliptical inner contour plus an arc-length table along its visible half.
struct Geometry {
    cy: f64,
    cx: f64,
    ay: f64,
    ax: f64,
    psi_max: f64,
    /// Cumulative arc length from the apex at uniform steps of `psi_max / (n-1)`.
    arc: Vec<f64>,
}

impl Geometry {
    fn new(size: usize) -> Self {
        let s = size as f64;
        let cy = 0.64 * s;
        let ay = 0.5 * s;
        let ax = 0.22 * s;
        let cx = (s - 1.0) / 2.0;
        let cos_max = ((cy - (s - 0.5)) / ay).clamp(-1.0, 1.0);
        let psi_max = cos_max.acos();
        let steps = 4096;
        let mut arc = Vec::with_capacity(steps + 1);
        let mut acc = 0.0;
        let point = |psi: f64| (cy - ay * psi.cos(), cx + ax * psi.sin());
        let mut prev = point(0.0);
        arc.push(0.0);
        for k in 1..=steps {
            let p = point(psi_max * k as f64 / steps as f64);
            acc += ((p.0 - prev.0).powi(2) + (p.1 - prev.1).powi(2)).sqrt();
            arc.push(acc);
            prev = p;
        }
        Self { cy, cx, ay, ax, psi_max, arc }
    }

    /// Position along one side, 0 at the base and 1 at the apex.
    fn base_to_apex(&self, psi_abs: f64) -> f64 {
        if psi_abs >= self.psi_max {
            return 0.0;
        }
        let steps = self.arc.len() - 1;
        let x = psi_abs / self.psi_max * steps as f64;
        let k = (x.floor() as usize).min(steps - 1);
        let f = x - k as f64;
        let s = self.arc[k] * (1.0 - f) + self.arc[k + 1] * f;
        1.0 - s / self.arc[steps]
    }
}

/// Amplitude factor along one side: plateaus per third with short linear
/// ramps between segments, meeting the other side at the apex.
fn side_weight(basal: f64, mid: f64, apical: f64, apex: f64, b: f64) -> f64 {
    const H: f64 = 1.0 / 24.0;
    let knots = [
        (0.0, basal),
        (1.0 / 3.0 - H, basal),
        (1.0 / 3.0 + H, mid),
        (2.0 / 3.0 - H, mid),
        (2.0 / 3.0 + H, apical),
        (1.0 - H, apical),
        (1.0, apex),
    ];
    let b = b.clamp(0.0, 1.0);
    for w in knots.windows(2) {
        let ((x0, y0), (x1, y1)) = (w[0], w[1]);
        if b <= x1 {
            return if x1 > x0 { y0 + (y1 - y0) * (b - x0) / (x1 - x0) } else { y1 };
        }
    }
    apex
}

fn render_mask(config: &PhantomConfig, geo: &Geometry, t: usize) -> WallMask {
    let a = &config.segment_amplitudes;
    let apex = 0.5 * (a[2] + a[3]);
    let profile = config.base_amplitude * config.motion_profile(t);
    let n = config.image_size;
    WallMask::from_fn(n, n, |r, c| {
        let dr = r as f64 - geo.cy;
        let dc = c as f64 - geo.cx;
        let rho = (dr * dr + dc * dc).sqrt();
        let q = ((dr / geo.ay).powi(2) + (dc / geo.ax).powi(2)).sqrt();
        if q == 0.0 {
            return false;
        }
        let psi = (dc / geo.ax).atan2(-dr / geo.ay);
        let b = geo.base_to_apex(psi.abs());
        let weight = if psi < 0.0 {
            side_weight(a[0], a[1], a[2], apex, b)
        } else {
            side_weight(a[5], a[4], a[3], apex, b)
        };
        let inner = rho / q - profile * weight;
        rho >= inner && rho < inner + config.wall_thickness
    })
}

/// Renders one echo. Pure function of `config`.
pub fn generate_echo(config: &PhantomConfig) -> Result<PhantomEcho> {
    config.validate()?;
    let geo = Geometry::new(config.image_size);
    let mut rng = ChaCha8Rng::seed_from_u64(config.rng_seed);
    let noise = Normal::new(0.0, config.speckle_sigma.max(f64::MIN_POSITIVE)).expect("finite sigma");
    let n = config.image_size;
    let mut frames = Vec::with_capacity(config.n_frames);
    let mut truth_masks = Vec::with_capacity(config.n_frames);
    for t in 0..config.n_frames {
        let mask = render_mask(config, &geo, t);
        let frame = GrayFrame::from_fn(n, n, |r, c| {
            let base = if mask.get(r, c) {
                WALL
            } else {
                let dr = (r as f64 - geo.cy) / geo.ay;
                let dc = (c as f64 - geo.cx) / geo.ax;
                if dr * dr + dc * dc < 1.0 {
                    BLOOD
                } else {
                    TISSUE
                }
            };
            let speckle = if config.speckle_sigma > 0.0 { noise.sample(&mut rng) } else { 0.0 };
            config.contrast * base + speckle
        });
        frames.push(frame);
        truth_masks.push(mask);
    }
    let truth_segment_labels = config.segment_amplitudes.map(|a| a < config.abnormality_threshold);
    Ok(PhantomEcho {
        frames,
        truth_masks,
        echo_label: truth_segment_labels.iter().any(|&x| x),
        truth_segment_labels,
        config: config.clone(),
    })
}

/// Amplitude-factor ranges for normal and abnormal segments.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AmplitudeRanges {
    pub normal: (f64, f64),
    pub abnormal: (f64, f64),
    /// Upper bound on abnormal segments in an MI echo (at least one).
    pub max_abnormal_segments: usize,
}

impl Default for AmplitudeRanges {
    fn default() -> Self {
        Self { normal: (0.7, 1.0), abnormal: (0.0, 0.4), max_abnormal_segments: 3 }
    }
}

/// Default MI prevalence: 72 MI echos out of 109.
pub const DEFAULT_MI_PREVALENCE: f64 = 72.0 / 109.0;

pub fn generate_dataset(
    n_echos: usize,
    mi_prevalence: f64,
    config_template: &PhantomConfig,
    rng_seed: u64,
) -> Result<Vec<PhantomEcho>> {
    generate_dataset_with(n_echos, mi_prevalence, config_template, rng_seed, &AmplitudeRanges::default())
}

/// Like [`generate_dataset`] with explicit amplitude ranges. Exactly
/// `round(n_echos · mi_prevalence)` echos carry at least one abnormal segment.
pub fn generate_dataset_with(
    n_echos: usize,
    mi_prevalence: f64,
    config_template: &PhantomConfig,
    rng_seed: u64,
    ranges: &AmplitudeRanges,
) -> Result<Vec<PhantomEcho>> {
    plan_dataset(n_echos, mi_prevalence, config_template, rng_seed, ranges)?
        .iter()
        .map(generate_echo)
        .collect()
}

/// Per-echo configurations that [`generate_dataset_with`] renders.
pub fn plan_dataset(
    n_echos: usize,
    mi_prevalence: f64,
    config_template: &PhantomConfig,
    rng_seed: u64,
    ranges: &AmplitudeRanges,
) -> Result<Vec<PhantomConfig>> {
    if n_echos == 0 {
        return Err(Error::EmptyDataset);
    }
    if !(0.0..=1.0).contains(&mi_prevalence) {
        return Err(Error::config("mi_prevalence", format!("must lie in [0, 1], got {mi_prevalence}")));
    }
    let thr = config_template.abnormality_threshold;
    if !(ranges.abnormal.0 <= ranges.abnormal.1 && ranges.abnormal.1 < thr) {
        return Err(Error::config("abnormal_range", format!("must be ordered and below the threshold {thr}")));
    }
    if !(thr <= ranges.normal.0 && ranges.normal.0 <= ranges.normal.1 && ranges.normal.1 <= 1.0) {
        return Err(Error::config("normal_range", format!("must be ordered within [{thr}, 1]")));
    }
    if ranges.max_abnormal_segments == 0 {
        return Err(Error::config("max_abnormal_segments", "must be ≥ 1"));
    }
    config_template.validate()?;
    let n_mi = (n_echos as f64 * mi_prevalence).round() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let mut is_mi: Vec<bool> = (0..n_echos).map(|i| i < n_mi).collect();
    is_mi.shuffle(&mut rng);
    let draw = |rng: &mut ChaCha8Rng, (lo, hi): (f64, f64)| if hi > lo { rng.random_range(lo..=hi) } else { lo };
    let mut plans = Vec::with_capacity(n_echos);
    for mi in is_mi {
        let mut cfg = config_template.clone();
        cfg.rng_seed = rng.next_u64();
        for a in cfg.segment_amplitudes.iter_mut() {
            *a = draw(&mut rng, ranges.normal);
        }
        if mi {
            let k = rng.random_range(1..=ranges.max_abnormal_segments.min(ANALYZED_SEGMENTS.len()));
            let mut order: Vec<usize> = (0..ANALYZED_SEGMENTS.len()).collect();
            order.shuffle(&mut rng);
            for &i in &order[..k] {
                cfg.segment_amplitudes[i] = draw(&mut rng, ranges.abnormal);
            }
        }
        plans.push(cfg);
    }
    Ok(plans)
}
