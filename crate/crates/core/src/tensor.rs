//! Dense row-major `f64` tensors and the raw kernels shared by the forward
//! and backward passes of the autodiff engine.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let numel: usize = shape.iter().product();
        if shape.contains(&0) {
            return Err(Error::shape("tensor", format!("zero-sized dimension in {shape:?}")));
        }
        if numel != data.len() {
            return Err(Error::shape(
                "tensor",
                format!("shape {shape:?} holds {numel} values but data has {}", data.len()),
            ));
        }
        Ok(Tensor { shape, data })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self::full(shape, 0.0)
    }

    pub fn full(shape: &[usize], value: f64) -> Self {
        let numel = shape.iter().product();
        Tensor {
            shape: shape.to_vec(),
            data: vec![value; numel],
        }
    }

    pub fn scalar(value: f64) -> Self {
        Tensor {
            shape: vec![1],
            data: vec![value],
        }
    }

    pub fn from_vec(data: Vec<f64>) -> Self {
        Tensor {
            shape: vec![data.len()],
            data,
        }
    }

    /// Uniform in `[-limit, limit]` with `limit = sqrt(6 / (fan_in + fan_out))`.
    pub fn glorot_uniform<R: Rng + ?Sized>(shape: &[usize], fan_in: usize, fan_out: usize, rng: &mut R) -> Self {
        let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
        let numel = shape.iter().product();
        let data = (0..numel).map(|_| rng.random_range(-limit..=limit)).collect();
        Tensor {
            shape: shape.to_vec(),
            data,
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn is_scalar(&self) -> bool {
        self.data.len() == 1
    }

    pub fn item(&self) -> f64 {
        self.data[0]
    }

    pub fn reshape(mut self, shape: &[usize]) -> Result<Self> {
        let numel: usize = shape.iter().product();
        if numel != self.data.len() {
            return Err(Error::shape(
                "reshape",
                format!("cannot view {:?} as {shape:?}", self.shape),
            ));
        }
        self.shape = shape.to_vec();
        Ok(self)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Tensor {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn add_assign(&mut self, other: &Tensor) {
        debug_assert_eq!(self.shape, other.shape);
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    pub fn scale(&mut self, factor: f64) {
        self.data.iter_mut().for_each(|v| *v *= factor);
    }

    pub fn dot(&self, other: &Tensor) -> f64 {
        self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum()
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn same_shape(&self, other: &Tensor) -> bool {
        self.shape == other.shape
    }
}

/// Output length of a valid (unpadded) strided 1-D convolution.
pub fn conv_output_len(input_len: usize, kernel: usize, stride: usize) -> Option<usize> {
    if stride == 0 || kernel == 0 || input_len < kernel {
        return None;
    }
    Some((input_len - kernel) / stride + 1)
}

/// Largest length a transposed convolution may be padded out to: any longer
/// and the forward convolution over that length would produce more than
/// `input_len` positions.
pub fn deconv_max_target(input_len: usize, kernel: usize, stride: usize) -> usize {
    stride * (input_len - 1) + kernel + (stride - 1)
}

pub(crate) fn check_rank(op: &'static str, what: &str, t: &Tensor, rank: usize) -> Result<()> {
    if t.shape.len() != rank {
        return Err(Error::shape(
            op,
            format!("{what} must have rank {rank}, got shape {:?}", t.shape),
        ));
    }
    Ok(())
}

/// Geometry shared by conv1d and its transpose.
#[derive(Debug, Clone, Copy)]
pub(crate) struct ConvGeom {
    pub c_in: usize,
    pub c_out: usize,
    pub kernel: usize,
    pub stride: usize,
    /// Temporal length on the "wide" side (conv input / deconv output).
    pub long: usize,
    /// Temporal length on the "narrow" side (conv output / deconv input).
    pub short: usize,
}

pub(crate) fn conv1d_geometry(input: &Tensor, weights: &Tensor, bias: &Tensor, stride: usize) -> Result<ConvGeom> {
    check_rank("conv1d", "input", input, 2)?;
    check_rank("conv1d", "weights", weights, 3)?;
    check_rank("conv1d", "bias", bias, 1)?;
    let (c_in, t) = (input.shape[0], input.shape[1]);
    let (c_out, w_in, k) = (weights.shape[0], weights.shape[1], weights.shape[2]);
    if w_in != c_in {
        return Err(Error::shape(
            "conv1d",
            format!("input channels: input has {c_in}, weights expect {w_in}"),
        ));
    }
    if bias.shape[0] != c_out {
        return Err(Error::shape(
            "conv1d",
            format!("bias length {} does not match output channels {c_out}", bias.shape[0]),
        ));
    }
    if stride == 0 {
        return Err(Error::shape("conv1d", "stride must be positive"));
    }
    let short = conv_output_len(t, k, stride).ok_or_else(|| {
        Error::shape("conv1d", format!("temporal length {t} shorter than kernel width {k}"))
    })?;
    Ok(ConvGeom {
        c_in,
        c_out,
        kernel: k,
        stride,
        long: t,
        short,
    })
}

/// `out[o][j] = Σ_{i,κ} x[i][j·s+κ] · w[o][i][κ]`, accumulated into `out`.
/// `w` is laid out `[c_out × c_in × k]`, `x` is `[c_in × long]`, `out` is `[c_out × short]`.
pub(crate) fn conv_accumulate(g: ConvGeom, x: &[f64], w: &[f64], out: &mut [f64]) {
    let ConvGeom {
        c_in,
        c_out,
        kernel: k,
        stride: s,
        long,
        short,
    } = g;
    for o in 0..c_out {
        let out_row = &mut out[o * short..(o + 1) * short];
        for i in 0..c_in {
            let x_row = &x[i * long..(i + 1) * long];
            let w_row = &w[(o * c_in + i) * k..(o * c_in + i + 1) * k];
            for (j, acc) in out_row.iter_mut().enumerate() {
                let base = j * s;
                let window = &x_row[base..base + k];
                let mut sum = 0.0;
                for kk in 0..k {
                    sum += window[kk] * w_row[kk];
                }
                *acc += sum;
            }
        }
    }
}

/// Adjoint of [`conv_accumulate`] with respect to `x`:
/// `dx[i][j·s+κ] += Σ_o dy[o][j] · w[o][i][κ]`.
pub(crate) fn conv_adjoint_accumulate(g: ConvGeom, dy: &[f64], w: &[f64], dx: &mut [f64]) {
    let ConvGeom {
        c_in,
        c_out,
        kernel: k,
        stride: s,
        long,
        short,
    } = g;
    for o in 0..c_out {
        let dy_row = &dy[o * short..(o + 1) * short];
        for i in 0..c_in {
            let dx_row = &mut dx[i * long..(i + 1) * long];
            let w_row = &w[(o * c_in + i) * k..(o * c_in + i + 1) * k];
            for (j, &gy) in dy_row.iter().enumerate() {
                if gy == 0.0 {
                    continue;
                }
                let base = j * s;
                let window = &mut dx_row[base..base + k];
                for kk in 0..k {
                    window[kk] += gy * w_row[kk];
                }
            }
        }
    }
}

/// Weight gradient of [`conv_accumulate`]:
/// `dw[o][i][κ] += Σ_j dy[o][j] · x[i][j·s+κ]`.
pub(crate) fn conv_weight_grad_accumulate(g: ConvGeom, dy: &[f64], x: &[f64], dw: &mut [f64]) {
    let ConvGeom {
        c_in,
        c_out,
        kernel: k,
        stride: s,
        long,
        short,
    } = g;
    for o in 0..c_out {
        let dy_row = &dy[o * short..(o + 1) * short];
        for i in 0..c_in {
            let x_row = &x[i * long..(i + 1) * long];
            let dw_row = &mut dw[(o * c_in + i) * k..(o * c_in + i + 1) * k];
            for (j, &gy) in dy_row.iter().enumerate() {
                if gy == 0.0 {
                    continue;
                }
                let base = j * s;
                let window = &x_row[base..base + k];
                for kk in 0..k {
                    dw_row[kk] += gy * window[kk];
                }
            }
        }
    }
}

pub fn conv1d(input: &Tensor, weights: &Tensor, bias: &Tensor, stride: usize) -> Result<Tensor> {
    let g = conv1d_geometry(input, weights, bias, stride)?;
    let mut out = vec![0.0; g.c_out * g.short];
    for (o, row) in out.chunks_mut(g.short).enumerate() {
        row.iter_mut().for_each(|v| *v = bias.data[o]);
    }
    conv_accumulate(g, &input.data, &weights.data, &mut out);
    Tensor::new(vec![g.c_out, g.short], out)
}

/// Geometry for a transposed conv. Weights are `[c_in × c_out × k]` where
/// `c_in` is the channel count of the (short) deconv input; in conv terms the
/// same buffer is `[conv_out × conv_in × k]`, so the conv kernels apply with
/// the roles of `c_in`/`c_out` swapped.
pub(crate) fn deconv1d_geometry(
    input: &Tensor,
    weights: &Tensor,
    bias: &Tensor,
    stride: usize,
    target_len: usize,
) -> Result<ConvGeom> {
    check_rank("deconv1d", "input", input, 2)?;
    check_rank("deconv1d", "weights", weights, 3)?;
    check_rank("deconv1d", "bias", bias, 1)?;
    let (c_in, t) = (input.shape[0], input.shape[1]);
    let (w_in, c_out, k) = (weights.shape[0], weights.shape[1], weights.shape[2]);
    if w_in != c_in {
        return Err(Error::shape(
            "deconv1d",
            format!("input channels: input has {c_in}, weights expect {w_in}"),
        ));
    }
    if bias.shape[0] != c_out {
        return Err(Error::shape(
            "deconv1d",
            format!("bias length {} does not match output channels {c_out}", bias.shape[0]),
        ));
    }
    if stride == 0 {
        return Err(Error::shape("deconv1d", "stride must be positive"));
    }
    if target_len == 0 || target_len > deconv_max_target(t, k, stride) {
        return Err(Error::UnreachableTarget {
            input: t,
            target: target_len,
            kernel: k,
            stride,
        });
    }
    Ok(ConvGeom {
        // conv view: conv_in = deconv output channels, conv_out = deconv input channels
        c_in: c_out,
        c_out: c_in,
        kernel: k,
        stride,
        long: target_len,
        short: t,
    })
}

/// Scatter for the transposed conv. Handles right-edge cropping: taps that
/// fall past `long` are dropped.
pub(crate) fn deconv_scatter(g: ConvGeom, x: &[f64], w: &[f64], out: &mut [f64]) {
    let ConvGeom {
        c_in: conv_in,
        c_out: conv_out,
        kernel: k,
        stride: s,
        long,
        short,
    } = g;
    for o in 0..conv_out {
        let x_row = &x[o * short..(o + 1) * short];
        for i in 0..conv_in {
            let out_row = &mut out[i * long..(i + 1) * long];
            let w_row = &w[(o * conv_in + i) * k..(o * conv_in + i + 1) * k];
            for (j, &v) in x_row.iter().enumerate() {
                let base = j * s;
                if base >= long {
                    break;
                }
                let end = (base + k).min(long);
                for (kk, slot) in out_row[base..end].iter_mut().enumerate() {
                    *slot += v * w_row[kk];
                }
            }
        }
    }
}

/// Gather adjoint of [`deconv_scatter`]: `dx[o][j] += Σ_{i,κ} dy[i][j·s+κ]·w[o][i][κ]`
/// over taps that survive the crop.
pub(crate) fn deconv_gather(g: ConvGeom, dy: &[f64], w: &[f64], dx: &mut [f64]) {
    let ConvGeom {
        c_in: conv_in,
        c_out: conv_out,
        kernel: k,
        stride: s,
        long,
        short,
    } = g;
    for o in 0..conv_out {
        let dx_row = &mut dx[o * short..(o + 1) * short];
        for i in 0..conv_in {
            let dy_row = &dy[i * long..(i + 1) * long];
            let w_row = &w[(o * conv_in + i) * k..(o * conv_in + i + 1) * k];
            for (j, acc) in dx_row.iter_mut().enumerate() {
                let base = j * s;
                if base >= long {
                    break;
                }
                let end = (base + k).min(long);
                let mut sum = 0.0;
                for (kk, &gy) in dy_row[base..end].iter().enumerate() {
                    sum += gy * w_row[kk];
                }
                *acc += sum;
            }
        }
    }
}

/// Weight gradient of [`deconv_scatter`]: `dw[o][i][κ] += Σ_j x[o][j]·dy[i][j·s+κ]`.
pub(crate) fn deconv_weight_grad(g: ConvGeom, x: &[f64], dy: &[f64], dw: &mut [f64]) {
    let ConvGeom {
        c_in: conv_in,
        c_out: conv_out,
        kernel: k,
        stride: s,
        long,
        short,
    } = g;
    for o in 0..conv_out {
        let x_row = &x[o * short..(o + 1) * short];
        for i in 0..conv_in {
            let dy_row = &dy[i * long..(i + 1) * long];
            let dw_row = &mut dw[(o * conv_in + i) * k..(o * conv_in + i + 1) * k];
            for (j, &v) in x_row.iter().enumerate() {
                if v == 0.0 {
                    continue;
                }
                let base = j * s;
                if base >= long {
                    break;
                }
                let end = (base + k).min(long);
                for (kk, &gy) in dy_row[base..end].iter().enumerate() {
                    dw_row[kk] += v * gy;
                }
            }
        }
    }
}

pub fn deconv1d(input: &Tensor, weights: &Tensor, bias: &Tensor, stride: usize, target_len: usize) -> Result<Tensor> {
    let g = deconv1d_geometry(input, weights, bias, stride, target_len)?;
    let mut out = vec![0.0; g.c_in * g.long];
    for (o, row) in out.chunks_mut(g.long).enumerate() {
        row.iter_mut().for_each(|v| *v = bias.data[o]);
    }
    deconv_scatter(g, &input.data, &weights.data, &mut out);
    Tensor::new(vec![g.c_in, g.long], out)
}

pub fn dense(input: &Tensor, weights: &Tensor, bias: &Tensor) -> Result<Tensor> {
    check_dense(input, weights, bias)?;
    let (m, n) = (weights.shape[0], weights.shape[1]);
    let out = (0..m)
        .map(|r| {
            let row = &weights.data[r * n..(r + 1) * n];
            bias.data[r] + row.iter().zip(&input.data).map(|(w, x)| w * x).sum::<f64>()
        })
        .collect();
    Tensor::new(vec![m], out)
}

pub(crate) fn check_dense(input: &Tensor, weights: &Tensor, bias: &Tensor) -> Result<()> {
    check_rank("dense", "input", input, 1)?;
    check_rank("dense", "weights", weights, 2)?;
    check_rank("dense", "bias", bias, 1)?;
    if weights.shape[1] != input.shape[0] {
        return Err(Error::shape(
            "dense",
            format!("input length {} does not match weight columns {}", input.shape[0], weights.shape[1]),
        ));
    }
    if weights.shape[0] != bias.shape[0] {
        return Err(Error::shape(
            "dense",
            format!("bias length {} does not match weight rows {}", bias.shape[0], weights.shape[0]),
        ));
    }
    Ok(())
}

pub fn relu(input: &Tensor) -> Tensor {
    input.map(|v| v.max(0.0))
}

pub fn sigmoid_scalar(v: f64) -> f64 {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}

pub fn sigmoid(input: &Tensor) -> Tensor {
    input.map(sigmoid_scalar)
}

/// Log-softmax along the last dimension with max subtraction.
pub fn log_softmax(input: &Tensor) -> Tensor {
    let last = *input.shape.last().expect("tensor has at least one dimension");
    let mut data = input.data.clone();
    for row in data.chunks_mut(last) {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
        row.iter_mut().for_each(|v| *v -= lse);
    }
    Tensor {
        shape: input.shape.clone(),
        data,
    }
}
