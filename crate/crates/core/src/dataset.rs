//! On-disk echo layout: one directory per echo holding `frame_0000.png`…,
//! optional `mask_0000.png`… (255 = wall) and an optional `labels.txt`.
//! Feature tables are CSV with an `echo_id,label,…` header.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use image::{GrayImage, ImageBuffer, Luma};

use crate::error::{Error, Result};
use crate::imgproc::{GrayFrame, WallMask};
use crate::phantom::PhantomEcho;

pub const LABELS_FILE: &str = "labels.txt";

pub fn frame_name(t: usize) -> String {
    format!("frame_{t:04}.png")
}

pub fn mask_name(t: usize) -> String {
    format!("mask_{t:04}.png")
}

/// MI label and per-segment labels (order 1, 2, 3, 5, 6, 7); `true` is
/// MI / abnormal, written as 1.
#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub struct EchoLabels {
    pub echo: bool,
    pub segments: [bool; 6],
}

impl EchoLabels {
    pub fn to_text(&self) -> String {
        let mut s = String::from(if self.echo { "1" } else { "0" });
        for &b in &self.segments {
            s.push_str(if b { " 1" } else { " 0" });
        }
        s.push('\n');
        s
    }

    /// Seven 0/1 integers separated by spaces or commas, on one line.
    pub fn parse(text: &str) -> Result<Self> {
        let bad = |r: String| Error::format("labels", r);
        let mut lines = text.lines().map(str::trim).filter(|l| !l.is_empty());
        let line = lines.next().ok_or_else(|| bad("file is empty".into()))?;
        if lines.next().is_some() {
            return Err(bad("expected a single line".into()));
        }
        let vals = line
            .split(|c: char| c == ',' || c.is_whitespace())
            .filter(|t| !t.is_empty())
            .map(|t| match t {
                "0" => Ok(false),
                "1" => Ok(true),
                other => Err(bad(format!("label `{other}` is not 0 or 1"))),
            })
            .collect::<Result<Vec<bool>>>()?;
        if vals.len() != 7 {
            return Err(bad(format!("expected 7 labels, got {}", vals.len())));
        }
        let mut segments = [false; 6];
        segments.copy_from_slice(&vals[1..]);
        if vals[0] != segments.iter().any(|&s| s) {
            log::warn!("echo label {} disagrees with its segment labels", vals[0] as u8);
        }
        Ok(Self { echo: vals[0], segments })
    }
}

fn to_u8(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

pub fn write_frame(path: &Path, frame: &GrayFrame) -> Result<()> {
    let img: GrayImage =
        ImageBuffer::from_fn(frame.width() as u32, frame.height() as u32, |x, y| Luma([to_u8(frame.get(y as usize, x as usize))]));
    img.save(path).map_err(|e| Error::Image { path: path.into(), source: e })
}

pub fn write_mask(path: &Path, mask: &WallMask) -> Result<()> {
    let img: GrayImage =
        ImageBuffer::from_fn(mask.width() as u32, mask.height() as u32, |x, y| Luma([if mask.get(y as usize, x as usize) { 255 } else { 0 }]));
    img.save(path).map_err(|e| Error::Image { path: path.into(), source: e })
}

fn read_gray(path: &Path) -> Result<GrayImage> {
    Ok(image::open(path).map_err(|e| Error::Image { path: path.into(), source: e })?.to_luma8())
}

pub fn read_frame(path: &Path) -> Result<GrayFrame> {
    let img = read_gray(path)?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    Ok(GrayFrame::from_fn(w, h, |r, c| img.get_pixel(c as u32, r as u32)[0] as f64 / 255.0))
}

/// Pixels ≥ 128 are wall.
pub fn read_mask(path: &Path) -> Result<WallMask> {
    let img = read_gray(path)?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    Ok(WallMask::from_fn(w, h, |r, c| img.get_pixel(c as u32, r as u32)[0] >= 128))
}

/// Consecutive numbered files starting at 0; stops at the first gap.
fn numbered(dir: &Path, name: fn(usize) -> String) -> Vec<PathBuf> {
    (0..).map(|t| dir.join(name(t))).take_while(|p| p.is_file()).collect()
}

pub fn has_frames(dir: &Path) -> bool {
    dir.join(frame_name(0)).is_file()
}

fn missing(dir: &Path, what: &str) -> Error {
    Error::io(dir.join(what), std::io::Error::new(std::io::ErrorKind::NotFound, format!("no {what} found")))
}

fn check_sizes<'a>(dir: &Path, sizes: impl Iterator<Item = (usize, usize)>) -> Result<()> {
    let mut first = None;
    for (t, s) in sizes.enumerate() {
        match first {
            None => first = Some(s),
            Some(f) if f != s => {
                return Err(Error::Shape { expected: format!("{}x{} like frame 0", f.0, f.1), actual: format!("{}x{}", s.0, s.1) }
                    .in_frame(t))
                .map_err(|e| Error::Echo { id: dir.display().to_string(), source: Box::new(e) })
            }
            _ => {}
        }
    }
    Ok(())
}

pub fn read_frames(dir: &Path) -> Result<Vec<GrayFrame>> {
    let paths = numbered(dir, frame_name);
    if paths.is_empty() {
        return Err(missing(dir, "frame_0000.png"));
    }
    let frames = paths.iter().map(|p| read_frame(p)).collect::<Result<Vec<_>>>()?;
    check_sizes(dir, frames.iter().map(|f| (f.width(), f.height())))?;
    Ok(frames)
}

pub fn read_masks(dir: &Path) -> Result<Vec<WallMask>> {
    let paths = numbered(dir, mask_name);
    if paths.is_empty() {
        return Err(missing(dir, "mask_0000.png"));
    }
    let masks = paths.iter().map(|p| read_mask(p)).collect::<Result<Vec<_>>>()?;
    check_sizes(dir, masks.iter().map(|m| (m.width(), m.height())))?;
    Ok(masks)
}

pub fn write_masks(dir: &Path, masks: &[WallMask]) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for (t, m) in masks.iter().enumerate() {
        write_mask(&dir.join(mask_name(t)), m)?;
    }
    Ok(())
}

pub fn read_labels(dir: &Path) -> Result<EchoLabels> {
    let path = dir.join(LABELS_FILE);
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    EchoLabels::parse(&text)
}

pub fn write_labels(dir: &Path, labels: &EchoLabels) -> Result<()> {
    let path = dir.join(LABELS_FILE);
    fs::write(&path, labels.to_text()).map_err(|e| Error::io(&path, e))
}

pub fn write_echo(dir: &Path, echo: &PhantomEcho) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for (t, f) in echo.frames.iter().enumerate() {
        write_frame(&dir.join(frame_name(t)), f)?;
    }
    write_masks(dir, &echo.truth_masks)?;
    write_labels(dir, &EchoLabels { echo: echo.echo_label, segments: echo.truth_segment_labels })
}

/// Echo directory name for dataset position `i`.
pub fn echo_id(i: usize) -> String {
    format!("echo_{i:04}")
}

/// Sub-directories of `root` that hold frames, sorted by name.
pub fn list_echos(root: &Path) -> Result<Vec<(String, PathBuf)>> {
    let entries = fs::read_dir(root).map_err(|e| Error::io(root, e))?;
    let mut out = Vec::new();
    for entry in entries {
        let entry = entry.map_err(|e| Error::io(root, e))?;
        let path = entry.path();
        if path.is_dir() && has_frames(&path) {
            out.push((entry.file_name().to_string_lossy().into_owned(), path));
        }
    }
    out.sort();
    if out.is_empty() {
        return Err(missing(root, "echo directory"));
    }
    Ok(out)
}

/// One feature-table row.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureRow {
    pub echo_id: String,
    pub label: bool,
    pub values: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FeatureTable {
    pub names: Vec<String>,
    pub rows: Vec<FeatureRow>,
}

impl FeatureTable {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("echo_id,label");
        for n in &self.names {
            let _ = write!(s, ",{n}");
        }
        s.push('\n');
        for r in &self.rows {
            let _ = write!(s, "{},{}", r.echo_id, r.label as u8);
            for v in &r.values {
                let _ = write!(s, ",{v}");
            }
            s.push('\n');
        }
        s
    }

    pub fn parse_csv(text: &str) -> Result<Self> {
        let bad = |r: String| Error::format("features csv", r);
        let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(text.as_bytes());
        let header = reader.headers().map_err(|e| bad(e.to_string()))?.clone();
        if header.len() < 2 || &header[0] != "echo_id" || &header[1] != "label" {
            return Err(bad("header must start with echo_id,label".into()));
        }
        let names: Vec<String> = header.iter().skip(2).map(str::to_owned).collect();
        let mut rows = Vec::new();
        for (i, rec) in reader.records().enumerate() {
            let rec = rec.map_err(|e| bad(e.to_string()))?;
            if rec.len() != header.len() {
                return Err(bad(format!("row {} has {} fields, header has {}", i + 1, rec.len(), header.len())));
            }
            let label = match &rec[1] {
                "0" => false,
                "1" => true,
                other => return Err(bad(format!("row {}: label `{other}` is not 0 or 1", i + 1))),
            };
            let values = rec
                .iter()
                .skip(2)
                .map(|v| match v.trim().parse::<f64>() {
                    Ok(x) if x.is_finite() => Ok(x),
                    _ => Err(bad(format!("row {}: `{v}` is not a finite number", i + 1))),
                })
                .collect::<Result<Vec<_>>>()?;
            rows.push(FeatureRow { echo_id: rec[0].to_owned(), label, values });
        }
        Ok(Self { names, rows })
    }

    pub fn x(&self) -> Vec<Vec<f64>> {
        self.rows.iter().map(|r| r.values.clone()).collect()
    }

    pub fn y(&self) -> Vec<bool> {
        self.rows.iter().map(|r| r.label).collect()
    }
}
