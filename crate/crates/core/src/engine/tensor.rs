use crate::error::{Error, Result};

/// Dense `h × w × c` array of `f32`, row-major with channels fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    h: usize,
    w: usize,
    c: usize,
    data: Vec<f32>,
}

impl Tensor {
    pub fn zeros(h: usize, w: usize, c: usize) -> Self {
        Self::filled(h, w, c, 0.0)
    }

    pub fn filled(h: usize, w: usize, c: usize, value: f32) -> Self {
        assert!(h > 0 && w > 0 && c > 0, "tensor dimensions must be positive");
        Self {
            h,
            w,
            c,
            data: vec![value; h * w * c],
        }
    }

    /// Builds a tensor from external data, rejecting bad lengths and
    /// non-finite values.
    pub fn from_vec(h: usize, w: usize, c: usize, data: Vec<f32>) -> Result<Self> {
        if h == 0 || w == 0 || c == 0 {
            return Err(Error::InvalidArgument(format!(
                "tensor dimensions must be positive, got {h}x{w}x{c}"
            )));
        }
        if data.len() != h * w * c {
            return Err(Error::shape((h, w, c), format!("{} values", data.len())));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("tensor element {pos}")));
        }
        Ok(Self { h, w, c, data })
    }

    pub(crate) fn from_raw(h: usize, w: usize, c: usize, data: Vec<f32>) -> Self {
        debug_assert_eq!(data.len(), h * w * c);
        Self { h, w, c, data }
    }

    pub fn from_fn(h: usize, w: usize, c: usize, mut f: impl FnMut(usize, usize, usize) -> f32) -> Self {
        let mut data = Vec::with_capacity(h * w * c);
        for i in 0..h {
            for j in 0..w {
                for k in 0..c {
                    data.push(f(i, j, k));
                }
            }
        }
        Self::from_raw(h, w, c, data)
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.h, self.w, self.c)
    }

    pub fn height(&self) -> usize {
        self.h
    }

    pub fn width(&self) -> usize {
        self.w
    }

    pub fn channels(&self) -> usize {
        self.c
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f32> {
        self.data
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        (i * self.w + j) * self.c + k
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize, k: usize) -> f32 {
        self.data[self.index(i, j, k)]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, k: usize, v: f32) {
        let idx = self.index(i, j, k);
        self.data[idx] = v;
    }

    /// The `c` channel values at one spatial position.
    #[inline]
    pub fn pixel(&self, i: usize, j: usize) -> &[f32] {
        let start = self.index(i, j, 0);
        &self.data[start..start + self.c]
    }

    pub fn row(&self, i: usize) -> &[f32] {
        let len = self.w * self.c;
        &self.data[i * len..(i + 1) * len]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn map(&self, f: impl Fn(f32) -> f32) -> Tensor {
        Tensor::from_raw(self.h, self.w, self.c, self.data.iter().map(|&v| f(v)).collect())
    }

    /// Frobenius norm, accumulated in storage order.
    pub fn norm(&self) -> f32 {
        self.data.iter().fold(0.0f32, |acc, v| acc + v * v).sqrt()
    }

    pub fn min_max(&self) -> (f32, f32) {
        self.data
            .iter()
            .fold((f32::INFINITY, f32::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)))
    }

    /// Columns `start..start + width`, all rows and channels.
    pub fn crop_cols(&self, start: usize, width: usize) -> Result<Tensor> {
        if width == 0 || start + width > self.w {
            return Err(Error::InvalidArgument(format!(
                "column crop {start}..{} outside width {}",
                start + width,
                self.w
            )));
        }
        Ok(self.crop(0, start, self.h, width))
    }

    /// Keeps the top-left `h × w` region.
    pub fn crop_to(&self, h: usize, w: usize) -> Result<Tensor> {
        if h == 0 || w == 0 || h > self.h || w > self.w {
            return Err(Error::InvalidArgument(format!(
                "crop {h}x{w} does not fit in {}x{}",
                self.h, self.w
            )));
        }
        Ok(self.crop(0, 0, h, w))
    }

    fn crop(&self, top: usize, left: usize, h: usize, w: usize) -> Tensor {
        let mut data = Vec::with_capacity(h * w * self.c);
        for i in top..top + h {
            let start = self.index(i, left, 0);
            data.extend_from_slice(&self.data[start..start + w * self.c]);
        }
        Tensor::from_raw(h, w, self.c, data)
    }

    /// Swaps rows and columns.
    pub fn transpose(&self) -> Tensor {
        Tensor::from_fn(self.w, self.h, self.c, |i, j, k| self.get(j, i, k))
    }

    /// Single channel `k` as an `h × w × 1` tensor.
    pub fn channel(&self, k: usize) -> Tensor {
        Tensor::from_fn(self.h, self.w, 1, |i, j, _| self.get(i, j, k))
    }
}

/// Convolution weights laid out `kh × kw × c_in × c_out` (output channel
/// fastest) with one bias per output channel.
#[derive(Debug, Clone, PartialEq)]
pub struct Kernel {
    kh: usize,
    kw: usize,
    c_in: usize,
    c_out: usize,
    weights: Vec<f32>,
    bias: Vec<f32>,
}

impl Kernel {
    pub fn new(
        kh: usize,
        kw: usize,
        c_in: usize,
        c_out: usize,
        weights: Vec<f32>,
        bias: Vec<f32>,
    ) -> Result<Self> {
        if kh.is_multiple_of(2) || kw.is_multiple_of(2) {
            return Err(Error::InvalidArgument(format!(
                "kernel size must be odd, got {kh}x{kw}"
            )));
        }
        if c_in == 0 || c_out == 0 {
            return Err(Error::InvalidArgument("kernel channel counts must be positive".into()));
        }
        if weights.len() != kh * kw * c_in * c_out {
            return Err(Error::shape(
                (kh, kw, c_in, c_out),
                format!("{} weights", weights.len()),
            ));
        }
        if bias.len() != c_out {
            return Err(Error::shape(c_out, format!("{} biases", bias.len())));
        }
        if weights.iter().chain(&bias).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("kernel".into()));
        }
        Ok(Self {
            kh,
            kw,
            c_in,
            c_out,
            weights,
            bias,
        })
    }

    pub fn zeros(kh: usize, kw: usize, c_in: usize, c_out: usize) -> Self {
        Self::new(kh, kw, c_in, c_out, vec![0.0; kh * kw * c_in * c_out], vec![0.0; c_out])
            .expect("zero kernel")
    }

    pub fn shape(&self) -> (usize, usize, usize, usize) {
        (self.kh, self.kw, self.c_in, self.c_out)
    }

    pub fn weights(&self) -> &[f32] {
        &self.weights
    }

    pub fn bias(&self) -> &[f32] {
        &self.bias
    }

    #[inline]
    pub fn weight(&self, di: usize, dj: usize, ci: usize, co: usize) -> f32 {
        self.weights[((di * self.kw + dj) * self.c_in + ci) * self.c_out + co]
    }

    /// The `c_out` weights for one window offset and input channel.
    #[inline]
    pub(crate) fn taps(&self, di: usize, dj: usize, ci: usize) -> &[f32] {
        let start = ((di * self.kw + dj) * self.c_in + ci) * self.c_out;
        &self.weights[start..start + self.c_out]
    }
}
