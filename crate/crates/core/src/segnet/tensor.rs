//! Channel-major batched feature maps (`[c][b][h][w]`) and the raw
//! kernels the network is built from.

#[derive(Clone, Debug, PartialEq)]
pub(crate) struct Tensor {
    pub c: usize,
    pub b: usize,
    pub h: usize,
    pub w: usize,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(c: usize, b: usize, h: usize, w: usize) -> Self {
        Self { c, b, h, w, data: vec![0.0; c * b * h * w] }
    }

    /// Columns per channel row: `b * h * w`.
    pub fn cols(&self) -> usize {
        self.b * self.h * self.w
    }

    pub fn channel(&self, c: usize) -> &[f64] {
        let n = self.cols();
        &self.data[c * n..(c + 1) * n]
    }

    /// Stacks `self` on top of `other` along channels.
    pub fn concat(&self, other: &Tensor) -> Tensor {
        debug_assert_eq!((self.b, self.h, self.w), (other.b, other.h, other.w));
        let mut data = Vec::with_capacity(self.data.len() + other.data.len());
        data.extend_from_slice(&self.data);
        data.extend_from_slice(&other.data);
        Tensor { c: self.c + other.c, b: self.b, h: self.h, w: self.w, data }
    }

    /// Inverse of [`concat`](Self::concat): first `c` channels, then the rest.
    pub fn split(self, c: usize) -> (Tensor, Tensor) {
        let n = self.cols();
        let mut head = self.data;
        let tail = head.split_off(c * n);
        (
            Tensor { c, b: self.b, h: self.h, w: self.w, data: head },
            Tensor { c: self.c - c, b: self.b, h: self.h, w: self.w, data: tail },
        )
    }
}

/// `C = A·B + beta·C` with optional transposes; row-major storage.
/// `a` is `m×k` (or `k×m` if `ta`), `b` is `k×n` (or `n×k` if `tb`).
#[allow(clippy::too_many_arguments)]
pub(crate) fn gemm(m: usize, k: usize, n: usize, a: &[f64], ta: bool, b: &[f64], tb: bool, beta: f64, c: &mut [f64]) {
    assert!(a.len() >= m * k && b.len() >= k * n && c.len() >= m * n);
    if m == 0 || n == 0 {
        return;
    }
    let (rsa, csa) = if ta { (1, m as isize) } else { (k as isize, 1) };
    let (rsb, csb) = if tb { (1, k as isize) } else { (n as isize, 1) };
    // SAFETY: the asserts above bound every index the strides can reach.
    unsafe {
        matrixmultiply::dgemm(m, k, n, 1.0, a.as_ptr(), rsa, csa, b.as_ptr(), rsb, csb, beta, c.as_mut_ptr(), n as isize, 1);
    }
}

/// Rows `(ci, ky, kx)`, columns `(b, y, x)`; zero outside the image.
pub(crate) fn im2col(x: &Tensor, k: usize) -> Vec<f64> {
    let (h, w) = (x.h, x.w);
    let plane = h * w;
    let n = x.cols();
    let pad = (k / 2) as isize;
    let mut col = vec![0.0; x.c * k * k * n];
    for ci in 0..x.c {
        let src = x.channel(ci);
        for ky in 0..k {
            for kx in 0..k {
                let row = &mut col[((ci * k + ky) * k + kx) * n..][..n];
                let (dy, dx) = (ky as isize - pad, kx as isize - pad);
                let (x0, x1) = ((-dx).max(0) as usize, (w as isize - dx).min(w as isize).max(0) as usize);
                if x0 >= x1 {
                    continue;
                }
                for bi in 0..x.b {
                    for y in 0..h {
                        let sy = y as isize + dy;
                        if sy < 0 || sy >= h as isize {
                            continue;
                        }
                        let dst = bi * plane + y * w;
                        let s = bi * plane + sy as usize * w;
                        let sx0 = (x0 as isize + dx) as usize;
                        row[dst + x0..dst + x1].copy_from_slice(&src[s + sx0..s + sx0 + (x1 - x0)]);
                    }
                }
            }
        }
    }
    col
}

/// Adjoint of [`im2col`].
pub(crate) fn col2im(col: &[f64], c: usize, b: usize, h: usize, w: usize, k: usize) -> Tensor {
    let mut out = Tensor::zeros(c, b, h, w);
    let plane = h * w;
    let n = b * plane;
    let pad = (k / 2) as isize;
    for ci in 0..c {
        let dst = &mut out.data[ci * n..(ci + 1) * n];
        for ky in 0..k {
            for kx in 0..k {
                let row = &col[((ci * k + ky) * k + kx) * n..][..n];
                let (dy, dx) = (ky as isize - pad, kx as isize - pad);
                let (x0, x1) = ((-dx).max(0) as usize, (w as isize - dx).min(w as isize).max(0) as usize);
                if x0 >= x1 {
                    continue;
                }
                for bi in 0..b {
                    for y in 0..h {
                        let sy = y as isize + dy;
                        if sy < 0 || sy >= h as isize {
                            continue;
                        }
                        let r = bi * plane + y * w;
                        let s = bi * plane + sy as usize * w;
                        let sx0 = (x0 as isize + dx) as usize;
                        for (d, v) in dst[s + sx0..s + sx0 + (x1 - x0)].iter_mut().zip(&row[r + x0..r + x1]) {
                            *d += v;
                        }
                    }
                }
            }
        }
    }
    out
}

/// 2×2 max pooling; the winner index (within the input) is kept per
/// output. Ties go to the first in raster order.
pub(crate) fn maxpool(x: &Tensor) -> (Tensor, Vec<u32>) {
    let (oh, ow) = (x.h / 2, x.w / 2);
    let mut out = Tensor::zeros(x.c, x.b, oh, ow);
    let mut arg = vec![0u32; out.data.len()];
    let mut o = 0;
    for cb in 0..x.c * x.b {
        let base = cb * x.h * x.w;
        for y in 0..oh {
            for xx in 0..ow {
                let mut best = base + 2 * y * x.w + 2 * xx;
                for (dy, dx) in [(0, 1), (1, 0), (1, 1)] {
                    let i = base + (2 * y + dy) * x.w + 2 * xx + dx;
                    if x.data[i] > x.data[best] {
                        best = i;
                    }
                }
                out.data[o] = x.data[best];
                arg[o] = best as u32;
                o += 1;
            }
        }
    }
    (out, arg)
}

pub(crate) fn maxpool_backward(d: &Tensor, arg: &[u32], into: &mut Tensor) {
    for (g, &i) in d.data.iter().zip(arg) {
        into.data[i as usize] += g;
    }
}

/// Nearest-neighbour 2× upsampling.
pub(crate) fn upsample(x: &Tensor) -> Tensor {
    let (oh, ow) = (2 * x.h, 2 * x.w);
    let mut out = Tensor::zeros(x.c, x.b, oh, ow);
    for cb in 0..x.c * x.b {
        let src = &x.data[cb * x.h * x.w..][..x.h * x.w];
        let dst = &mut out.data[cb * oh * ow..][..oh * ow];
        for y in 0..oh {
            for xx in 0..ow {
                dst[y * ow + xx] = src[(y / 2) * x.w + xx / 2];
            }
        }
    }
    out
}

pub(crate) fn upsample_backward(d: &Tensor) -> Tensor {
    let (h, w) = (d.h / 2, d.w / 2);
    let mut out = Tensor::zeros(d.c, d.b, h, w);
    for cb in 0..d.c * d.b {
        let src = &d.data[cb * d.h * d.w..][..d.h * d.w];
        let dst = &mut out.data[cb * h * w..][..h * w];
        for y in 0..d.h {
            for x in 0..d.w {
                dst[(y / 2) * w + x / 2] += src[y * d.w + x];
            }
        }
    }
    out
}
