//! Iterative pseudo labeling: train on the labeled pool, predict the rest,
//! let an acceptor vet whole echos, repeat.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use image::{ImageBuffer, Rgb, RgbImage};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::imgproc::{binarize, largest_component, morphological_open, GrayFrame, WallMask};
use crate::segnet::{build_net, train, NetConfig, NetParams, TrainConfig};

pub const DEFAULT_ROUNDS: usize = 8;
pub const DEFAULT_IOU: f64 = 0.8;
pub const ACCEPT_FILE: &str = "accepted.txt";

#[derive(Clone, Debug, PartialEq)]
pub struct LabeledEcho {
    pub id: String,
    pub frames: Vec<GrayFrame>,
    pub masks: Vec<WallMask>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct UnlabeledEcho {
    pub id: String,
    pub frames: Vec<GrayFrame>,
    /// Hidden truth, consulted only by the oracle acceptor.
    pub truth: Option<Vec<WallMask>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LabelPool {
    pub labeled: Vec<LabeledEcho>,
    pub unlabeled: Vec<UnlabeledEcho>,
    /// Per round, `(echo_id, reason)` for every echo left unlabeled.
    pub rejected_log: Vec<Vec<(String, String)>>,
}

impl LabelPool {
    pub fn new(labeled: Vec<LabeledEcho>, unlabeled: Vec<UnlabeledEcho>) -> Result<Self> {
        let mut ids = BTreeSet::new();
        for id in labeled.iter().map(|e| &e.id).chain(unlabeled.iter().map(|e| &e.id)) {
            if !ids.insert(id.clone()) {
                return Err(Error::config("echo_id", format!("`{id}` appears twice in the pool")));
            }
        }
        for e in &labeled {
            if e.frames.len() != e.masks.len() {
                return Err(Error::Echo {
                    id: e.id.clone(),
                    source: Box::new(Error::Shape { expected: format!("{} masks", e.frames.len()), actual: e.masks.len().to_string() }),
                });
            }
        }
        Ok(Self { labeled, unlabeled, rejected_log: Vec::new() })
    }

    pub fn len(&self) -> usize {
        self.labeled.len() + self.unlabeled.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Held-out echo with truth, scored after every round.
#[derive(Clone, Debug, PartialEq)]
pub struct ProbeEcho {
    pub frames: Vec<GrayFrame>,
    pub truth: Vec<WallMask>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Acceptor {
    /// Accept when every frame's IoU with the hidden truth reaches `threshold`.
    Oracle { threshold: f64 },
    /// Write overlays under `dir` and wait for an accept list.
    Review { dir: PathBuf, timeout: Duration, poll: Duration },
}

impl Acceptor {
    pub fn validate(&self) -> Result<()> {
        match self {
            // 0 is allowed: it accepts everything.
            Acceptor::Oracle { threshold } if !(0.0..=1.0).contains(threshold) => {
                Err(Error::config("oracle_threshold", format!("must lie in [0, 1], got {threshold}")))
            }
            Acceptor::Review { poll, .. } if poll.is_zero() => Err(Error::config("poll", "must be positive")),
            _ => Ok(()),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RoundStats {
    pub round: usize,
    /// Labeled echos after the round.
    pub labeled: usize,
    pub accepted: usize,
    pub probe_iou: Option<f64>,
}

pub fn stats_csv(stats: &[RoundStats]) -> String {
    let mut s = String::from("round,labeled,accepted,probe_iou\n");
    for r in stats {
        let iou = r.probe_iou.map(|v| format!("{v:.6}")).unwrap_or_default();
        let _ = writeln!(s, "{},{},{},{iou}", r.round, r.labeled, r.accepted);
    }
    s
}

/// Echo ids, one per line; blank lines and `#` comments are skipped.
pub fn parse_accept_list(text: &str) -> Result<Vec<String>> {
    let mut ids = Vec::new();
    let mut seen = BTreeSet::new();
    for (i, line) in text.lines().enumerate() {
        let id = line.trim();
        if id.is_empty() || id.starts_with('#') {
            continue;
        }
        if id.chars().any(|c| c.is_whitespace() || c.is_control()) {
            return Err(Error::format("accept list", format!("line {}: `{id}` is not a single echo id", i + 1)));
        }
        if seen.insert(id.to_owned()) {
            ids.push(id.to_owned());
        }
    }
    Ok(ids)
}

/// Forward, binarize, open, keep the largest component, one result per frame.
pub fn predict_masks(params: &NetParams, frames: &[GrayFrame]) -> Result<Vec<Result<WallMask>>> {
    let refs: Vec<&GrayFrame> = frames.iter().collect();
    let maps = params.forward_batch(&refs)?;
    Ok(maps.iter().map(|p| largest_component(&morphological_open(&binarize(p, 0.5)))).collect())
}

/// Mean per-frame IoU over the probe set; frames that fail to segment score 0.
pub fn probe_iou(params: &NetParams, probe: &[ProbeEcho]) -> Result<f64> {
    let per_echo = probe
        .par_iter()
        .map(|e| {
            Ok(predict_masks(params, &e.frames)?
                .into_iter()
                .zip(&e.truth)
                .map(|(m, t)| m.map_or(0.0, |m| m.iou(t)))
                .collect::<Vec<f64>>())
        })
        .collect::<Result<Vec<_>>>()?;
    let all: Vec<f64> = per_echo.into_iter().flatten().collect();
    Ok(if all.is_empty() { 0.0 } else { all.iter().sum::<f64>() / all.len() as f64 })
}

fn training_set(pool: &LabelPool) -> Vec<(GrayFrame, WallMask)> {
    pool.labeled.iter().flat_map(|e| e.frames.iter().cloned().zip(e.masks.iter().cloned())).collect()
}

/// Wall pixels tinted red over the frame.
fn overlay(frame: &GrayFrame, mask: &WallMask) -> RgbImage {
    ImageBuffer::from_fn(frame.width() as u32, frame.height() as u32, |x, y| {
        let (r, c) = (y as usize, x as usize);
        let g = (frame.get(r, c).clamp(0.0, 1.0) * 255.0).round() as u8;
        if mask.get(r, c) {
            Rgb([255, g / 2, g / 2])
        } else {
            Rgb([g, g, g])
        }
    })
}

fn review(dir: &Path, timeout: Duration, poll: Duration, round: usize, candidates: &[(usize, Vec<WallMask>)], pool: &LabelPool) -> Result<BTreeSet<String>> {
    let round_dir = dir.join(format!("round_{round:02}"));
    for (i, masks) in candidates {
        let echo = &pool.unlabeled[*i];
        let echo_dir = round_dir.join(&echo.id);
        fs::create_dir_all(&echo_dir).map_err(|e| Error::io(&echo_dir, e))?;
        for (t, (f, m)) in echo.frames.iter().zip(masks).enumerate() {
            let path = echo_dir.join(format!("overlay_{t:04}.png"));
            overlay(f, m).save(&path).map_err(|e| Error::Image { path: path.clone(), source: e })?;
        }
    }
    let list = round_dir.join(ACCEPT_FILE);
    log::info!("round {round}: waiting for {}", list.display());
    let start = Instant::now();
    loop {
        if list.is_file() {
            let text = fs::read_to_string(&list).map_err(|e| Error::io(&list, e))?;
            return Ok(parse_accept_list(&text)?.into_iter().collect());
        }
        if start.elapsed() >= timeout {
            return Err(Error::ReviewTimeout { path: list });
        }
        std::thread::sleep(poll.min(timeout.saturating_sub(start.elapsed())).max(Duration::from_millis(1)));
    }
}

/// Network seed for a round; training shuffles with the same value.
fn round_seed(base: u64, round: usize) -> u64 {
    base.wrapping_add(round as u64)
}

/// One round. `round` is 1-based and feeds the network seed. Returns the
/// updated pool, the stats row and the round's network (if one was trained).
pub fn pseudo_label_round(
    pool: &LabelPool,
    net_cfg: &NetConfig,
    train_cfg: &TrainConfig,
    acceptor: &Acceptor,
    round: usize,
    probe: &[ProbeEcho],
) -> Result<(LabelPool, RoundStats, Option<NetParams>)> {
    acceptor.validate()?;
    if pool.labeled.is_empty() {
        return Err(Error::EmptyLabeledPool);
    }
    let mut next = pool.clone();
    if pool.unlabeled.is_empty() && probe.is_empty() {
        next.rejected_log.push(Vec::new());
        return Ok((next, RoundStats { round, labeled: pool.labeled.len(), accepted: 0, probe_iou: None }, None));
    }
    let seed = round_seed(train_cfg.rng_seed, round);
    let init = build_net(net_cfg, seed)?;
    let cfg = TrainConfig { rng_seed: seed, ..train_cfg.clone() };
    let (params, _) = train(&init, &training_set(pool), &cfg)?;

    let predictions = pool
        .unlabeled
        .par_iter()
        .map(|e| predict_masks(&params, &e.frames).map_err(|err| Error::Echo { id: e.id.clone(), source: Box::new(err) }))
        .collect::<Result<Vec<_>>>()?;

    let mut rejected = Vec::new();
    let mut candidates = Vec::new();
    for (i, preds) in predictions.into_iter().enumerate() {
        let id = &pool.unlabeled[i].id;
        match preds.into_iter().enumerate().map(|(t, m)| m.map_err(|e| e.in_frame(t))).collect::<Result<Vec<_>>>() {
            Ok(masks) => candidates.push((i, masks)),
            Err(e) => rejected.push((id.clone(), format!("segmentation failed: {e}"))),
        }
    }

    let mut accepted = BTreeSet::new();
    match acceptor {
        Acceptor::Oracle { threshold } => {
            for (i, masks) in &candidates {
                let echo = &pool.unlabeled[*i];
                let Some(truth) = &echo.truth else {
                    rejected.push((echo.id.clone(), "no hidden truth for the oracle".into()));
                    continue;
                };
                let worst = masks.iter().zip(truth).enumerate().map(|(t, (m, g))| (t, m.iou(g))).find(|&(_, iou)| iou < *threshold);
                match worst {
                    None => {
                        accepted.insert(*i);
                    }
                    Some((t, iou)) => rejected.push((echo.id.clone(), format!("frame {t}: IoU {iou:.4} below {threshold}"))),
                }
            }
        }
        Acceptor::Review { dir, timeout, poll } => {
            let ids = review(dir, *timeout, *poll, round, &candidates, pool)?;
            for (i, _) in &candidates {
                let id = &pool.unlabeled[*i].id;
                if ids.contains(id) {
                    accepted.insert(*i);
                } else {
                    rejected.push((id.clone(), "not in the accept list".into()));
                }
            }
            let known: BTreeSet<&String> = pool.unlabeled.iter().map(|e| &e.id).collect();
            for id in ids.iter().filter(|id| !known.contains(id)) {
                log::warn!("accept list names unknown echo `{id}`");
            }
        }
    }

    let mut masks_of: Vec<Option<Vec<WallMask>>> = vec![None; pool.unlabeled.len()];
    for (i, m) in candidates {
        if accepted.contains(&i) {
            masks_of[i] = Some(m);
        }
    }
    next.unlabeled.clear();
    for (echo, masks) in pool.unlabeled.iter().zip(masks_of) {
        match masks {
            Some(masks) => next.labeled.push(LabeledEcho { id: echo.id.clone(), frames: echo.frames.clone(), masks }),
            None => next.unlabeled.push(echo.clone()),
        }
    }
    rejected.sort();
    next.rejected_log.push(rejected);
    let probe_iou = if probe.is_empty() { None } else { Some(probe_iou(&params, probe)?) };
    let stats = RoundStats { round, labeled: next.labeled.len(), accepted: accepted.len(), probe_iou };
    log::info!("round {round}: accepted {}, labeled {}, probe IoU {:?}", stats.accepted, stats.labeled, stats.probe_iou);
    Ok((next, stats, Some(params)))
}

#[derive(Clone, Debug)]
pub struct PseudoLabelRun {
    pub pool: LabelPool,
    pub stats: Vec<RoundStats>,
    /// Echos never accepted in any round.
    pub problematic: Vec<String>,
    /// Network from the last round that trained one.
    pub params: Option<NetParams>,
}

pub fn run_pseudo_labeling(
    pool: &LabelPool,
    net_cfg: &NetConfig,
    train_cfg: &TrainConfig,
    acceptor: &Acceptor,
    n_rounds: usize,
    probe: &[ProbeEcho],
) -> Result<PseudoLabelRun> {
    if n_rounds == 0 {
        return Err(Error::config("rounds", "must be at least 1"));
    }
    let mut pool = pool.clone();
    let mut stats = Vec::with_capacity(n_rounds);
    let mut last = None;
    for round in 1..=n_rounds {
        let (next, s, params) =
            pseudo_label_round(&pool, net_cfg, train_cfg, acceptor, round, probe).map_err(|e| Error::Round { round, source: Box::new(e) })?;
        pool = next;
        stats.push(s);
        if params.is_some() {
            last = params;
        }
    }
    let problematic = pool.unlabeled.iter().map(|e| e.id.clone()).collect();
    Ok(PseudoLabelRun { pool, stats, problematic, params: last })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::phantom::{generate_dataset, PhantomConfig};

    fn net() -> NetConfig {
        NetConfig { input_size: 64, scale_factor: 16, ..NetConfig::default() }
    }

    fn quick() -> TrainConfig {
        TrainConfig { epochs: 2, batch_size: 8, ..Default::default() }
    }

    fn pool(n: usize, seeds: usize) -> LabelPool {
        let data = generate_dataset(n, 0.5, &PhantomConfig { n_frames: 3, ..Default::default() }, 5).unwrap();
        let mut labeled = Vec::new();
        let mut unlabeled = Vec::new();
        for (i, e) in data.into_iter().enumerate() {
            let id = format!("echo_{i:04}");
            if i < seeds {
                labeled.push(LabeledEcho { id, frames: e.frames, masks: e.truth_masks });
            } else {
                unlabeled.push(UnlabeledEcho { id, frames: e.frames, truth: Some(e.truth_masks) });
            }
        }
        LabelPool::new(labeled, unlabeled).unwrap()
    }

    #[test]
    fn accept_list_parsing() {
        assert_eq!(parse_accept_list("a\n\n# note\n  b \na\n").unwrap(), vec!["a", "b"]);
        assert!(parse_accept_list("a b\n").is_err());
        assert!(parse_accept_list("").unwrap().is_empty());
    }

    #[test]
    fn duplicate_ids_rejected() {
        let p = pool(3, 1);
        let mut un = p.unlabeled.clone();
        un[0].id = p.labeled[0].id.clone();
        assert!(LabelPool::new(p.labeled.clone(), un).is_err());
    }

    #[test]
    fn empty_labeled_pool() {
        let p = pool(3, 0);
        let err = pseudo_label_round(&p, &net(), &quick(), &Acceptor::Oracle { threshold: 0.8 }, 1, &[]).unwrap_err();
        assert!(matches!(err, Error::EmptyLabeledPool));
    }

    #[test]
    fn zero_threshold_accepts_all_segmentable() {
        // Untrained-ish net still yields non-empty masks once 0.5 passes.
        let p = pool(4, 1);
        let (next, s, _) = pseudo_label_round(&p, &net(), &TrainConfig { learning_rate: 0.0, epochs: 1, ..quick() }, &Acceptor::Oracle { threshold: 0.0 }, 1, &[]).unwrap();
        assert!(next.rejected_log[0].is_empty(), "{:?}", next.rejected_log);
        assert_eq!(s.accepted, 3);
        assert_eq!(next.len(), p.len());
    }

    #[test]
    fn exact_match_threshold_rejects_noisy_predictions() {
        let p = pool(4, 1);
        let (next, s, _) = pseudo_label_round(&p, &net(), &quick(), &Acceptor::Oracle { threshold: 1.0 }, 1, &[]).unwrap();
        assert_eq!(s.accepted, 0);
        assert_eq!(next.unlabeled, p.unlabeled);
        assert_eq!(next.rejected_log[0].len(), 3);
    }

    #[test]
    fn all_prelabeled_means_no_acceptances() {
        let p = pool(3, 3);
        let run = run_pseudo_labeling(&p, &net(), &quick(), &Acceptor::Oracle { threshold: 0.8 }, 3, &[]).unwrap();
        assert!(run.stats.iter().all(|s| s.accepted == 0 && s.labeled == 3));
        assert!(run.problematic.is_empty());
    }

    #[test]
    fn one_round_run_equals_one_round() {
        let p = pool(4, 2);
        let acc = Acceptor::Oracle { threshold: 0.3 };
        let run = run_pseudo_labeling(&p, &net(), &quick(), &acc, 1, &[]).unwrap();
        let (next, s, _) = pseudo_label_round(&p, &net(), &quick(), &acc, 1, &[]).unwrap();
        assert_eq!(run.pool, next);
        assert_eq!(run.stats, vec![s]);
        assert_eq!(stats_csv(&run.stats).lines().count(), 2);
    }

    #[test]
    fn review_mode_reads_accept_list() {
        let dir = tempfile::tempdir().unwrap();
        let p = pool(3, 1);
        let round_dir = dir.path().join("round_01");
        fs::create_dir_all(&round_dir).unwrap();
        fs::write(round_dir.join(ACCEPT_FILE), "echo_0002\n").unwrap();
        let acc = Acceptor::Review { dir: dir.path().into(), timeout: Duration::from_secs(5), poll: Duration::from_millis(10) };
        let zero = TrainConfig { learning_rate: 0.0, epochs: 1, ..quick() };
        let (next, _, _) = pseudo_label_round(&p, &net(), &zero, &acc, 1, &[]).unwrap();
        assert_eq!(next.labeled.len(), 2);
        assert_eq!(next.labeled[1].id, "echo_0002");
        assert!(round_dir.join("echo_0002").join("overlay_0000.png").is_file());
        assert_eq!(next.unlabeled.len(), 1);
        assert_eq!(next.rejected_log[0].len(), 1);
    }

    #[test]
    fn review_times_out() {
        let dir = tempfile::tempdir().unwrap();
        let acc = Acceptor::Review { dir: dir.path().into(), timeout: Duration::from_millis(30), poll: Duration::from_millis(5) };
        let err = pseudo_label_round(&pool(2, 1), &net(), &quick(), &acc, 1, &[]).unwrap_err();
        assert!(matches!(err, Error::ReviewTimeout { .. }));
    }

    #[test]
    fn bad_threshold() {
        assert!(Acceptor::Oracle { threshold: 1.5 }.validate().is_err());
        assert!(Acceptor::Oracle { threshold: 0.0 }.validate().is_ok());
    }
}
