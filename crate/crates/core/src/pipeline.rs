//! Glue shared by the command line and end-to-end runs.

use std::fmt::Write as _;

use rayon::prelude::*;

use crate::dataset::{FeatureRow, FeatureTable};
use crate::error::{Error, Result};
use crate::features::{extract_features, FeatureMode};
use crate::imgproc::{resize_bilinear, resize_nearest, GrayFrame, WallMask};
use crate::wallgeom::SegmentRatios;

/// Echo identity, label and wall masks ready for feature extraction.
#[derive(Clone, Debug)]
pub struct MaskedEcho {
    pub id: String,
    pub label: bool,
    pub masks: Vec<WallMask>,
}

/// Feature rows for every echo that survives geometry, in input order,
/// plus `(echo_id, reason)` for the ones that did not.
pub fn feature_table(echos: &[MaskedEcho], ratios: &SegmentRatios, samples: usize, mode: FeatureMode) -> (FeatureTable, Vec<(String, String)>) {
    let results: Vec<Result<Vec<f64>>> = echos.par_iter().map(|e| extract_features(&e.masks, ratios, samples, mode).map(|f| f.values)).collect();
    let mut rows = Vec::new();
    let mut skipped = Vec::new();
    for (e, r) in echos.iter().zip(results) {
        match r {
            Ok(values) => rows.push(FeatureRow { echo_id: e.id.clone(), label: e.label, values }),
            Err(err) => {
                log::warn!("echo {}: skipped ({err})", e.id);
                skipped.push((e.id.clone(), err.to_string()));
            }
        }
    }
    (FeatureTable { names: mode.names(), rows }, skipped)
}

pub fn skipped_csv(skipped: &[(String, String)]) -> String {
    let mut s = String::from("echo_id,reason\n");
    for (id, reason) in skipped {
        let _ = writeln!(s, "{id},\"{}\"", reason.replace('"', "\"\""));
    }
    s
}

/// Resizes frames to `size`×`size` when they differ.
pub fn fit_frames(frames: Vec<GrayFrame>, size: usize) -> Vec<GrayFrame> {
    frames.into_iter().map(|f| if f.width() == size && f.height() == size { f } else { resize_bilinear(&f, size, size) }).collect()
}

pub fn fit_masks(masks: Vec<WallMask>, size: usize) -> Vec<WallMask> {
    masks.into_iter().map(|m| if m.width() == size && m.height() == size { m } else { resize_nearest(&m, size, size) }).collect()
}

/// Pixel-level confusion counts of predicted against true masks.
#[derive(Copy, Clone, Debug, Default, PartialEq, Eq)]
pub struct PixelCounts {
    pub true_pos: u64,
    pub false_pos: u64,
    pub false_neg: u64,
    pub true_neg: u64,
}

impl PixelCounts {
    pub fn add(&mut self, predicted: &WallMask, truth: &WallMask) -> Result<()> {
        if (predicted.width(), predicted.height()) != (truth.width(), truth.height()) {
            return Err(Error::Shape {
                expected: format!("{}x{}", truth.width(), truth.height()),
                actual: format!("{}x{}", predicted.width(), predicted.height()),
            });
        }
        for (&p, &t) in predicted.bits().iter().zip(truth.bits()) {
            match (p, t) {
                (true, true) => self.true_pos += 1,
                (true, false) => self.false_pos += 1,
                (false, true) => self.false_neg += 1,
                (false, false) => self.true_neg += 1,
            }
        }
        Ok(())
    }

    pub fn f1(&self) -> f64 {
        let d = 2 * self.true_pos + self.false_pos + self.false_neg;
        if d == 0 { 0.0 } else { 2.0 * self.true_pos as f64 / d as f64 }
    }

    pub fn specificity(&self) -> f64 {
        let d = self.true_neg + self.false_pos;
        if d == 0 { 0.0 } else { self.true_neg as f64 / d as f64 }
    }

    pub fn sensitivity(&self) -> f64 {
        let d = self.true_pos + self.false_neg;
        if d == 0 { 0.0 } else { self.true_pos as f64 / d as f64 }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::phantom::{generate_dataset, PhantomConfig};

    #[test]
    fn truth_masks_give_full_tables() {
        let data = generate_dataset(4, 0.5, &PhantomConfig { n_frames: 6, ..Default::default() }, 2).unwrap();
        let echos: Vec<MaskedEcho> =
            data.iter().enumerate().map(|(i, e)| MaskedEcho { id: format!("e{i}"), label: e.echo_label, masks: e.truth_masks.clone() }).collect();
        for (mode, n) in [(FeatureMode::Six, 18), (FeatureMode::Five, 15)] {
            let (t, skipped) = feature_table(&echos, &SegmentRatios::default(), 10, mode);
            assert!(skipped.is_empty());
            assert_eq!(t.rows.len(), 4);
            assert!(t.rows.iter().all(|r| r.values.len() == n));
            assert_eq!(t.names.len(), n);
        }
    }

    #[test]
    fn broken_echo_is_skipped() {
        let good = generate_dataset(1, 0.0, &PhantomConfig { n_frames: 4, ..Default::default() }, 0).unwrap().remove(0);
        let echos = vec![
            MaskedEcho { id: "ok".into(), label: false, masks: good.truth_masks.clone() },
            MaskedEcho { id: "blank".into(), label: true, masks: vec![WallMask::empty(64, 64); 4] },
        ];
        let (t, skipped) = feature_table(&echos, &SegmentRatios::default(), 10, FeatureMode::Six);
        assert_eq!(t.rows.len(), 1);
        assert_eq!(skipped[0].0, "blank");
        assert!(skipped_csv(&skipped).starts_with("echo_id,reason\nblank,\""));
    }

    #[test]
    fn pixel_counts() {
        let a = WallMask::from_fn(4, 4, |r, _| r < 2);
        let b = WallMask::from_fn(4, 4, |r, c| r < 2 && c < 2);
        let mut pc = PixelCounts::default();
        pc.add(&a, &b).unwrap();
        assert_eq!((pc.true_pos, pc.false_pos, pc.false_neg, pc.true_neg), (4, 4, 0, 8));
        assert_eq!(pc.f1(), 8.0 / 12.0);
        assert_eq!(pc.specificity(), 8.0 / 12.0);
    }
}
