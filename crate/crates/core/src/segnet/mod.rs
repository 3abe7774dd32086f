//! Encoder-decoder segmentation network: 3×3 conv + ReLU stages with 2×2
//! max pooling on the way down, nearest 2× upsampling (plus optional skip
//! concatenation) on the way up, and a 1×1 conv + sigmoid head.

mod gradcheck;
mod tensor;
mod train;

use std::fmt::Write as _;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

pub use gradcheck::{check_gradient, gradient_check, GradCheck};
pub use train::{loss_csv, train, TrainConfig};

use crate::binio::{Reader, Writer};
use crate::error::{Error, Result};
use crate::imgproc::{binarize, largest_component, morphological_open, GrayFrame, WallMask};
use tensor::{col2im, gemm, im2col, maxpool, maxpool_backward, upsample, upsample_backward, Tensor};

pub const PAPER_ENCODER: [usize; 6] = [32, 64, 128, 256, 512, 1024];
pub const PAPER_DECODER: [usize; 5] = [512, 256, 128, 64, 32];

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NetConfig {
    pub input_size: usize,
    pub input_channels: usize,
    /// Filter counts before division by `scale_factor`.
    pub encoder_filters: Vec<usize>,
    pub decoder_filters: Vec<usize>,
    pub kernel_size: usize,
    pub skip_connections: bool,
    pub scale_factor: usize,
}

impl Default for NetConfig {
    /// 64×64 toy scale of the full topology.
    fn default() -> Self {
        Self { input_size: 64, scale_factor: 8, ..Self::paper() }
    }
}

impl NetConfig {
    pub fn paper() -> Self {
        Self {
            input_size: 224,
            input_channels: 1,
            encoder_filters: PAPER_ENCODER.to_vec(),
            decoder_filters: PAPER_DECODER.to_vec(),
            kernel_size: 3,
            skip_connections: true,
            scale_factor: 1,
        }
    }

    fn scaled(&self, f: &[usize]) -> Vec<usize> {
        f.iter().map(|&v| (v / self.scale_factor.max(1)).max(1)).collect()
    }

    pub fn effective_encoder(&self) -> Vec<usize> {
        self.scaled(&self.encoder_filters)
    }

    pub fn effective_decoder(&self) -> Vec<usize> {
        self.scaled(&self.decoder_filters)
    }

    pub fn validate(&self) -> Result<()> {
        let e = self.encoder_filters.len();
        if e == 0 {
            return Err(Error::config("encoder_filters", "needs at least one stage"));
        }
        if self.scale_factor == 0 {
            return Err(Error::config("scale_factor", "must be at least 1"));
        }
        if self.input_channels == 0 {
            return Err(Error::config("input_channels", "must be at least 1"));
        }
        if self.kernel_size == 0 || self.kernel_size % 2 == 0 {
            return Err(Error::config("kernel_size", format!("must be odd, got {}", self.kernel_size)));
        }
        if self.encoder_filters.iter().chain(&self.decoder_filters).any(|&f| f == 0) {
            return Err(Error::config("encoder_filters", "filter counts must be positive"));
        }
        let expected: Vec<usize> = self.encoder_filters[..e - 1].iter().rev().copied().collect();
        if self.decoder_filters != expected {
            return Err(Error::config(
                "decoder_filters",
                format!("must mirror the encoder without its last stage: expected {expected:?}, got {:?}", self.decoder_filters),
            ));
        }
        let div = 1usize.checked_shl((e - 1) as u32).unwrap_or(0);
        if self.input_size == 0 || div == 0 || self.input_size % div != 0 {
            return Err(Error::config("input_size", format!("{} is not divisible by 2^{}", self.input_size, e - 1)));
        }
        Ok(())
    }

    /// Canonical `key=value` lines, as stored in checkpoints.
    pub fn to_text(&self) -> String {
        let list = |v: &[usize]| v.iter().map(usize::to_string).collect::<Vec<_>>().join(",");
        let mut s = String::new();
        let _ = writeln!(s, "input_size={}", self.input_size);
        let _ = writeln!(s, "input_channels={}", self.input_channels);
        let _ = writeln!(s, "encoder_filters={}", list(&self.encoder_filters));
        let _ = writeln!(s, "decoder_filters={}", list(&self.decoder_filters));
        let _ = writeln!(s, "kernel_size={}", self.kernel_size);
        let _ = writeln!(s, "skip_connections={}", self.skip_connections);
        let _ = writeln!(s, "scale_factor={}", self.scale_factor);
        s
    }

    /// Parses [`to_text`](Self::to_text) output. Every key is required
    /// exactly once; the result is validated.
    pub fn parse(text: &str) -> Result<Self> {
        let bad = |reason: String| Error::format("net config", reason);
        let mut fields: [Option<&str>; 7] = [None; 7];
        const KEYS: [&str; 7] =
            ["input_size", "input_channels", "encoder_filters", "decoder_filters", "kernel_size", "skip_connections", "scale_factor"];
        for line in text.lines().map(str::trim).filter(|l| !l.is_empty()) {
            let (k, v) = line.split_once('=').ok_or_else(|| bad(format!("line `{line}` has no `=`")))?;
            let slot = KEYS.iter().position(|&key| key == k.trim()).ok_or_else(|| bad(format!("unknown key `{k}`")))?;
            if fields[slot].replace(v.trim()).is_some() {
                return Err(bad(format!("duplicate key `{k}`")));
            }
        }
        let get = |i: usize| fields[i].ok_or_else(|| bad(format!("missing key `{}`", KEYS[i])));
        let num = |i: usize| -> Result<usize> { get(i)?.parse().map_err(|_| bad(format!("`{}` is not a count", KEYS[i]))) };
        let list = |i: usize| -> Result<Vec<usize>> {
            let v = get(i)?;
            if v.is_empty() {
                return Ok(Vec::new());
            }
            v.split(',').map(|p| p.trim().parse().map_err(|_| bad(format!("`{}` has a bad entry `{p}`", KEYS[i])))).collect()
        };
        let skip = match get(5)? {
            "true" => true,
            "false" => false,
            other => return Err(bad(format!("skip_connections must be true or false, got `{other}`"))),
        };
        let cfg = Self {
            input_size: num(0)?,
            input_channels: num(1)?,
            encoder_filters: list(2)?,
            decoder_filters: list(3)?,
            kernel_size: num(4)?,
            skip_connections: skip,
            scale_factor: num(6)?,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Input channel count of every 3×3 conv, with its output count,
    /// kernel size and the side of the map it runs on.
    fn conv_shapes(&self) -> Vec<(usize, usize, usize, usize)> {
        let enc = self.effective_encoder();
        let dec = self.effective_decoder();
        let k = self.kernel_size;
        let mut shapes = Vec::new();
        let mut cin = self.input_channels;
        let mut side = self.input_size;
        for (i, &f) in enc.iter().enumerate() {
            if i > 0 {
                side /= 2;
            }
            shapes.push((cin, f, k, side));
            cin = f;
        }
        for (j, &f) in dec.iter().enumerate() {
            side *= 2;
            let skip = if self.skip_connections { enc.get(enc.len().wrapping_sub(2 + j)).copied().unwrap_or(0) } else { 0 };
            shapes.push((cin + skip, f, k, side));
            cin = f;
        }
        shapes
    }
}

/// Multiplications and additions of one conv layer.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LayerOps {
    pub n_in: u64,
    pub n_out: u64,
    pub map_size: u64,
    pub kernel: u64,
    pub mul: u64,
    pub add: u64,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct OpCount {
    pub layers: Vec<LayerOps>,
    pub mul: u64,
    pub add: u64,
}

/// Operation counts of the encoder and decoder convolutions. `map_size`
/// is the pixel count of the map each conv runs on, after any pooling or
/// upsampling. The 1×1 output head is not counted.
pub fn count_ops(config: &NetConfig) -> OpCount {
    let layers: Vec<LayerOps> = config
        .conv_shapes()
        .into_iter()
        .map(|(cin, cout, k, side)| {
            let (n_in, n_out, s, k) = (cin as u64, cout as u64, (side * side) as u64, k as u64);
            let base = n_in * n_out * s;
            LayerOps { n_in, n_out, map_size: s, kernel: k, mul: base * k * k, add: base * (k - 1) * (k - 1) + base }
        })
        .collect();
    let mul = layers.iter().map(|l| l.mul).sum();
    let add = layers.iter().map(|l| l.add).sum();
    OpCount { layers, mul, add }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConvLayer {
    pub cin: usize,
    pub cout: usize,
    pub k: usize,
    /// `cout × (cin·k·k)`, row-major.
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl ConvLayer {
    fn fan_in(&self) -> usize {
        self.cin * self.k * self.k
    }

    fn forward(&self, x: &Tensor) -> Tensor {
        let col = im2col(x, self.k);
        let n = x.cols();
        let mut out = Tensor::zeros(self.cout, x.b, x.h, x.w);
        for (o, &b) in self.bias.iter().enumerate() {
            out.data[o * n..(o + 1) * n].fill(b);
        }
        gemm(self.cout, self.fan_in(), n, &self.weights, false, &col, false, 1.0, &mut out.data);
        out
    }

    /// Accumulates parameter gradients from `dz` and returns the input
    /// gradient when asked.
    fn backward(&self, x: &Tensor, dz: &Tensor, grad: &mut LayerGrad, need_input: bool) -> Option<Tensor> {
        let col = im2col(x, self.k);
        let n = x.cols();
        gemm(self.cout, n, self.fan_in(), &dz.data, false, &col, true, 1.0, &mut grad.weights);
        for (o, g) in grad.bias.iter_mut().enumerate() {
            *g += dz.data[o * n..(o + 1) * n].iter().sum::<f64>();
        }
        need_input.then(|| {
            let mut dcol = vec![0.0; col.len()];
            gemm(self.fan_in(), self.cout, n, &self.weights, true, &dz.data, false, 0.0, &mut dcol);
            col2im(&dcol, x.c, x.b, x.h, x.w, self.k)
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub(crate) struct LayerGrad {
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

/// Network weights. Layers run encoder convs, decoder convs, then the head.
#[derive(Clone, Debug, PartialEq)]
pub struct NetParams {
    pub config: NetConfig,
    pub layers: Vec<ConvLayer>,
}

/// He-normal weights (std √(2/fan_in)) and zero biases, drawn in layer
/// order from one seeded stream.
pub fn build_net(config: &NetConfig, seed: u64) -> Result<NetParams> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut shapes: Vec<(usize, usize, usize)> = config.conv_shapes().into_iter().map(|(i, o, k, _)| (i, o, k)).collect();
    let last = shapes.last().map_or(config.input_channels, |s| s.1);
    shapes.push((last, 1, 1));
    let layers = shapes
        .into_iter()
        .map(|(cin, cout, k)| {
            let fan_in = cin * k * k;
            let normal = Normal::new(0.0, (2.0 / fan_in as f64).sqrt()).expect("positive std");
            let weights = (0..cout * fan_in).map(|_| normal.sample(&mut rng)).collect();
            ConvLayer { cin, cout, k, weights, bias: vec![0.0; cout] }
        })
        .collect();
    Ok(NetParams { config: config.clone(), layers })
}

/// Activations kept for the backward pass.
struct Cache {
    /// Input of each layer.
    inputs: Vec<Tensor>,
    /// ReLU output of each non-head layer.
    outputs: Vec<Tensor>,
    pool_args: Vec<Vec<u32>>,
}

impl NetParams {
    pub fn n_params(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }

    pub(crate) fn zero_grad(&self) -> Vec<LayerGrad> {
        self.layers.iter().map(|l| LayerGrad { weights: vec![0.0; l.weights.len()], bias: vec![0.0; l.bias.len()] }).collect()
    }

    /// Flat parameter `i`, weights before biases, layer by layer.
    pub fn param_mut(&mut self, mut i: usize) -> &mut f64 {
        for l in &mut self.layers {
            if i < l.weights.len() {
                return &mut l.weights[i];
            }
            i -= l.weights.len();
            if i < l.bias.len() {
                return &mut l.bias[i];
            }
            i -= l.bias.len();
        }
        panic!("parameter index out of range");
    }

    pub fn all_finite(&self) -> bool {
        self.layers.iter().all(|l| l.weights.iter().chain(&l.bias).all(|v| v.is_finite()))
    }

    fn encoder_len(&self) -> usize {
        self.config.encoder_filters.len()
    }

    fn check_frame(&self, f: &GrayFrame) -> Result<()> {
        let s = self.config.input_size;
        if f.width() != s || f.height() != s {
            return Err(Error::Shape { expected: format!("{s}x{s} frame"), actual: format!("{}x{}", f.width(), f.height()) });
        }
        Ok(())
    }

    /// Frames stacked as a batch; every input channel sees the frame.
    fn batch_input(&self, frames: &[&GrayFrame]) -> Result<Tensor> {
        let s = self.config.input_size;
        let plane = s * s;
        let mut t = Tensor::zeros(self.config.input_channels, frames.len(), s, s);
        for (bi, f) in frames.iter().enumerate() {
            self.check_frame(f)?;
            for c in 0..t.c {
                let n = t.cols();
                t.data[c * n + bi * plane..c * n + (bi + 1) * plane].copy_from_slice(f.data());
            }
        }
        Ok(t)
    }

    /// Logits for a batch, with the activations backprop needs.
    fn forward_cached(&self, x: Tensor) -> (Tensor, Cache) {
        let e = self.encoder_len();
        let mut cache = Cache { inputs: Vec::new(), outputs: Vec::new(), pool_args: Vec::new() };
        let mut cur = x;
        let mut skips = Vec::with_capacity(e);
        for i in 0..e {
            let mut a = self.layers[i].forward(&cur);
            a.data.iter_mut().for_each(|v| *v = v.max(0.0));
            cache.inputs.push(cur);
            if i + 1 < e {
                let (p, arg) = maxpool(&a);
                cache.pool_args.push(arg);
                cur = p;
            } else {
                cur = a.clone();
            }
            skips.push(a.clone());
            cache.outputs.push(a);
        }
        for j in 0..e - 1 {
            let u = upsample(&cur);
            let inp = if self.config.skip_connections { u.concat(&skips[e - 2 - j]) } else { u };
            let mut a = self.layers[e + j].forward(&inp);
            a.data.iter_mut().for_each(|v| *v = v.max(0.0));
            cache.inputs.push(inp);
            cur = a.clone();
            cache.outputs.push(a);
        }
        let logits = self.layers[2 * e - 1].forward(&cur);
        cache.inputs.push(cur);
        (logits, cache)
    }

    fn backward(&self, cache: &Cache, dlogits: &Tensor) -> Vec<LayerGrad> {
        let e = self.encoder_len();
        let mut grads = self.zero_grad();
        let head = 2 * e - 1;
        let mut d = self.layers[head].backward(&cache.inputs[head], dlogits, &mut grads[head], true).expect("input grad");
        let mut skip_grads: Vec<Option<Tensor>> = vec![None; e];
        for j in (0..e - 1).rev() {
            let l = e + j;
            relu_backward(&mut d, &cache.outputs[l]);
            let dinp = self.layers[l].backward(&cache.inputs[l], &d, &mut grads[l], true).expect("input grad");
            let du = if self.config.skip_connections {
                let up_c = self.layers[l].cin - self.layers[e - 2 - j].cout;
                let (du, ds) = dinp.split(up_c);
                skip_grads[e - 2 - j] = Some(ds);
                du
            } else {
                dinp
            };
            d = upsample_backward(&du);
        }
        for i in (0..e).rev() {
            let mut da = if i + 1 < e {
                let out = &cache.outputs[i];
                let mut da = Tensor::zeros(out.c, out.b, out.h, out.w);
                maxpool_backward(&d, &cache.pool_args[i], &mut da);
                da
            } else {
                d
            };
            if let Some(s) = skip_grads[i].take() {
                da.data.iter_mut().zip(&s.data).for_each(|(a, b)| *a += b);
            }
            relu_backward(&mut da, &cache.outputs[i]);
            match self.layers[i].backward(&cache.inputs[i], &da, &mut grads[i], i > 0) {
                Some(next) => d = next,
                None => break,
            }
        }
        grads
    }

    /// Per-sample mean BCE and its gradient w.r.t. parameters, averaged
    /// over the batch.
    pub(crate) fn loss_and_grad(&self, frames: &[&GrayFrame], masks: &[&WallMask]) -> Result<(Vec<f64>, Vec<LayerGrad>)> {
        let x = self.batch_input(frames)?;
        let (logits, cache) = self.forward_cached(x);
        let (losses, dlogits) = bce(&logits, masks, true)?;
        let grads = self.backward(&cache, &dlogits.expect("requested"));
        Ok((losses, grads))
    }

    /// Per-sample mean BCE without gradients.
    pub fn loss(&self, frames: &[&GrayFrame], masks: &[&WallMask]) -> Result<Vec<f64>> {
        let x = self.batch_input(frames)?;
        let (logits, _) = self.forward_cached(x);
        Ok(bce(&logits, masks, false)?.0)
    }

    /// Probability map for one frame.
    pub fn forward(&self, frame: &GrayFrame) -> Result<GrayFrame> {
        Ok(self.forward_batch(&[frame])?.pop().expect("one output"))
    }

    pub fn forward_batch(&self, frames: &[&GrayFrame]) -> Result<Vec<GrayFrame>> {
        let x = self.batch_input(frames)?;
        let (logits, _) = self.forward_cached(x);
        let s = self.config.input_size;
        Ok(logits
            .data
            .chunks(s * s)
            .map(|z| GrayFrame::from_fn(s, s, |r, c| sigmoid(z[r * s + c])))
            .collect())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new(CHECKPOINT_MAGIC, CHECKPOINT_VERSION);
        w.text(&self.config.to_text());
        w.usize(self.layers.len());
        for l in &self.layers {
            w.f64s(&l.weights);
            w.f64s(&l.bias);
        }
        w.finish()
    }

    /// Reads a checkpoint; every blob must match the embedded config.
    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let (mut r, version) = Reader::open("checkpoint", bytes, CHECKPOINT_MAGIC)?;
        if version != CHECKPOINT_VERSION {
            return Err(r.err(format!("unsupported version {version}")));
        }
        let config = NetConfig::parse(r.text()?)?;
        // Shapes come from a fresh build; the seed does not matter.
        let mut params = shape_only(&config);
        let n = r.usize()?;
        if n != params.layers.len() {
            return Err(r.err(format!("{n} layers, config implies {}", params.layers.len())));
        }
        for (i, l) in params.layers.iter_mut().enumerate() {
            let weights = r.f64s()?;
            let bias = r.f64s()?;
            if weights.len() != l.weights.len() || bias.len() != l.bias.len() {
                return Err(r.err(format!(
                    "layer {i}: {} weights and {} biases, expected {} and {}",
                    weights.len(),
                    bias.len(),
                    l.weights.len(),
                    l.bias.len()
                )));
            }
            l.weights = weights;
            l.bias = bias;
        }
        r.finish()?;
        Ok(params)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

const CHECKPOINT_MAGIC: &[u8] = b"EWSEGNET";
const CHECKPOINT_VERSION: u32 = 1;

/// Zero-filled params with the shapes `config` implies. Caller validates.
fn shape_only(config: &NetConfig) -> NetParams {
    let mut shapes: Vec<(usize, usize, usize)> = config.conv_shapes().into_iter().map(|(i, o, k, _)| (i, o, k)).collect();
    let last = shapes.last().map_or(config.input_channels, |s| s.1);
    shapes.push((last, 1, 1));
    let layers = shapes
        .into_iter()
        .map(|(cin, cout, k)| ConvLayer { cin, cout, k, weights: vec![0.0; cout * cin * k * k], bias: vec![0.0; cout] })
        .collect();
    NetParams { config: config.clone(), layers }
}

/// All-zero parameters (every output is exactly 0.5).
pub fn zero_net(config: &NetConfig) -> Result<NetParams> {
    config.validate()?;
    Ok(shape_only(config))
}

fn relu_backward(d: &mut Tensor, out: &Tensor) {
    d.data.iter_mut().zip(&out.data).for_each(|(g, &a)| {
        if a <= 0.0 {
            *g = 0.0;
        }
    });
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Per-sample pixel-mean binary cross-entropy on logits, and optionally
/// the gradient of the batch-mean loss.
fn bce(logits: &Tensor, masks: &[&WallMask], want_grad: bool) -> Result<(Vec<f64>, Option<Tensor>)> {
    let plane = logits.h * logits.w;
    let mut losses = Vec::with_capacity(logits.b);
    let mut grad = want_grad.then(|| Tensor::zeros(1, logits.b, logits.h, logits.w));
    if masks.len() != logits.b {
        return Err(Error::Shape { expected: format!("{} masks", logits.b), actual: masks.len().to_string() });
    }
    let scale = 1.0 / (plane as f64 * logits.b as f64);
    for (bi, m) in masks.iter().enumerate() {
        if m.width() != logits.w || m.height() != logits.h {
            return Err(Error::Shape {
                expected: format!("{}x{} mask", logits.w, logits.h),
                actual: format!("{}x{}", m.width(), m.height()),
            });
        }
        let z = &logits.data[bi * plane..(bi + 1) * plane];
        let mut sum = 0.0;
        for (i, (&zi, &yi)) in z.iter().zip(m.bits()).enumerate() {
            let y = if yi { 1.0 } else { 0.0 };
            sum += zi.max(0.0) - zi * y + (-zi.abs()).exp().ln_1p();
            if let Some(g) = grad.as_mut() {
                g.data[bi * plane + i] = (sigmoid(zi) - y) * scale;
            }
        }
        losses.push(sum / plane as f64);
    }
    Ok((losses, grad))
}

/// Forward, binarize at 0.5, open, keep the largest component; frames are
/// processed in parallel batches and returned in order.
pub fn segment_echo(params: &NetParams, frames: &[GrayFrame]) -> Result<Vec<WallMask>> {
    const CHUNK: usize = 16;
    let chunks: Vec<&[GrayFrame]> = frames.chunks(CHUNK).collect();
    let maps = chunks
        .par_iter()
        .enumerate()
        .map(|(ci, chunk)| {
            let refs: Vec<&GrayFrame> = chunk.iter().collect();
            params.forward_batch(&refs).map_err(|e| e.in_frame(ci * CHUNK))
        })
        .collect::<Result<Vec<_>>>()?;
    maps.into_iter()
        .flatten()
        .enumerate()
        .map(|(t, p)| largest_component(&morphological_open(&binarize(&p, 0.5))).map_err(|e| e.in_frame(t)))
        .collect()
}

/// Segments every echo; errors carry the echo position.
pub fn segment_many(params: &NetParams, echos: &[Vec<GrayFrame>]) -> Result<Vec<Vec<WallMask>>> {
    echos
        .iter()
        .enumerate()
        .map(|(i, frames)| segment_echo(params, frames).map_err(|e| Error::Echo { id: i.to_string(), source: Box::new(e) }))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::phantom::{generate_echo, PhantomConfig};
    use proptest::prelude::*;

    pub(crate) fn tiny() -> NetConfig {
        NetConfig {
            input_size: 16,
            input_channels: 1,
            encoder_filters: vec![2, 4, 8],
            decoder_filters: vec![4, 2],
            kernel_size: 3,
            skip_connections: true,
            scale_factor: 1,
        }
    }

    fn frame(seed: u64, s: usize) -> GrayFrame {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        GrayFrame::from_fn(s, s, |_, _| rng.random_range(0.0..1.0))
    }

    #[test]
    fn paper_topology() {
        let p = NetConfig::paper();
        p.validate().unwrap();
        assert_eq!(p.conv_shapes().len(), 11);
        let toy = NetConfig { scale_factor: 32, ..NetConfig::paper() };
        assert_eq!(toy.effective_encoder(), vec![1, 2, 4, 8, 16, 32]);
    }

    #[test]
    fn bad_configs_name_their_field() {
        let mut c = tiny();
        c.decoder_filters = vec![2, 4];
        assert!(matches!(c.validate(), Err(Error::Config { field: "decoder_filters", .. })));
        let c = NetConfig { input_size: 18, ..tiny() };
        assert!(matches!(c.validate(), Err(Error::Config { field: "input_size", .. })));
        let c = NetConfig { kernel_size: 2, ..tiny() };
        assert!(matches!(c.validate(), Err(Error::Config { field: "kernel_size", .. })));
    }

    #[test]
    fn config_text_round_trip() {
        for c in [tiny(), NetConfig::paper(), NetConfig::default(), NetConfig { skip_connections: false, ..tiny() }] {
            assert_eq!(NetConfig::parse(&c.to_text()).unwrap(), c);
        }
        assert!(NetConfig::parse("input_size=16\n").is_err());
        let dup = format!("{}input_size=16\n", tiny().to_text());
        assert!(NetConfig::parse(&dup).is_err());
    }

    #[test]
    fn worked_op_count() {
        let c = NetConfig { input_size: 224, encoder_filters: vec![32], decoder_filters: vec![], ..NetConfig::paper() };
        let ops = count_ops(&c);
        assert_eq!(ops.mul, 14_450_688);
        assert_eq!(ops.add, 8_028_160);
        let empty = NetConfig { encoder_filters: vec![], decoder_filters: vec![], ..NetConfig::paper() };
        assert_eq!((count_ops(&empty).mul, count_ops(&empty).add), (0, 0));
    }

    proptest! {
        #[test]
        fn op_count_scales_quadratically(k in 1usize..5, depth in 1usize..6, skip in any::<bool>(), base in 1usize..8) {
            let enc: Vec<usize> = (0..depth).map(|i| base << i).collect();
            let dec: Vec<usize> = enc[..depth - 1].iter().rev().copied().collect();
            let c = NetConfig { input_size: 64, input_channels: 1, encoder_filters: enc.clone(), decoder_filters: dec.clone(), kernel_size: 3, skip_connections: skip, scale_factor: 1 };
            let scaled = NetConfig {
                input_channels: k,
                encoder_filters: enc.iter().map(|f| f * k).collect(),
                decoder_filters: dec.iter().map(|f| f * k).collect(),
                ..c.clone()
            };
            prop_assert_eq!(count_ops(&scaled).mul, (k * k) as u64 * count_ops(&c).mul);
            prop_assert_eq!(count_ops(&scaled).add, (k * k) as u64 * count_ops(&c).add);
        }
    }

    #[test]
    fn zero_net_outputs_half() {
        let p = zero_net(&tiny()).unwrap();
        let out = p.forward(&frame(1, 16)).unwrap();
        assert!(out.data().iter().all(|&v| v == 0.5));
    }

    #[test]
    fn forward_is_seeded_and_in_range() {
        for skip in [true, false] {
            let c = NetConfig { skip_connections: skip, ..tiny() };
            let a = build_net(&c, 3).unwrap();
            assert_eq!(a, build_net(&c, 3).unwrap());
            let f = frame(2, 16);
            let out = a.forward(&f).unwrap();
            assert_eq!((out.width(), out.height()), (16, 16));
            assert!(out.data().iter().all(|&v| v > 0.0 && v < 1.0));
            assert_eq!(out, a.forward(&f).unwrap());
        }
    }

    #[test]
    fn batch_composition_does_not_change_outputs() {
        let p = build_net(&tiny(), 4).unwrap();
        let frames: Vec<GrayFrame> = (0..5).map(|i| frame(10 + i, 16)).collect();
        let refs: Vec<&GrayFrame> = frames.iter().collect();
        let batched = p.forward_batch(&refs).unwrap();
        for (f, b) in frames.iter().zip(&batched) {
            assert_eq!(&p.forward(f).unwrap(), b);
        }
    }

    #[test]
    fn wrong_frame_size_is_a_shape_error() {
        let p = build_net(&tiny(), 0).unwrap();
        assert!(matches!(p.forward(&frame(0, 8)), Err(Error::Shape { .. })));
    }

    #[test]
    fn checkpoint_round_trip_and_rejections() {
        let p = build_net(&tiny(), 9).unwrap();
        let bytes = p.to_bytes();
        assert_eq!(NetParams::from_bytes(&bytes).unwrap(), p);
        for cut in [0, 8, 20, bytes.len() - 1] {
            assert!(NetParams::from_bytes(&bytes[..cut]).is_err());
        }
        // Same layer count, different shapes.
        let other = build_net(&NetConfig { encoder_filters: vec![3, 4, 8], decoder_filters: vec![4, 3], ..tiny() }, 9).unwrap();
        let mut spliced = Writer::new(CHECKPOINT_MAGIC, CHECKPOINT_VERSION);
        spliced.text(&tiny().to_text());
        spliced.usize(other.layers.len());
        for l in &other.layers {
            spliced.f64s(&l.weights);
            spliced.f64s(&l.bias);
        }
        assert!(NetParams::from_bytes(&spliced.finish()).is_err());
    }

    #[test]
    fn untrained_segmentation_is_deterministic() {
        let p = zero_net(&tiny()).unwrap();
        let frames: Vec<GrayFrame> = (0..3).map(|i| frame(i, 16)).collect();
        let masks = segment_echo(&p, &frames).unwrap();
        assert_eq!(masks.len(), 3);
        // 0.5 passes the inclusive threshold, so every frame reduces the same full mask.
        let full = largest_component(&morphological_open(&WallMask::from_fn(16, 16, |_, _| true))).unwrap();
        assert!(masks.iter().all(|m| *m == full));
    }

    #[test]
    fn one_mask_per_phantom_frame() {
        let echo = generate_echo(&PhantomConfig { n_frames: 20, ..Default::default() }).unwrap();
        let p = zero_net(&NetConfig::default()).unwrap();
        assert_eq!(segment_echo(&p, &echo.frames).unwrap().len(), 20);
    }
}
