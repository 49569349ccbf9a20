//! Forward kernels for the primitive operations.
//!
//! Every function here is pure and usable without a tape; [`super::Tape`]
//! calls the same kernels and adds the matching derivative rules.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Largest `f64` strictly below one.
const BELOW_ONE: f64 = 1.0 - f64::EPSILON / 2.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Tanh,
    Sigmoid,
}

impl Activation {
    /// Value of the activation. Saturated outputs are clamped to the open
    /// codomain so `tanh` stays in (−1, 1) and `sigmoid` in (0, 1).
    #[inline]
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Tanh => x.tanh().clamp(-BELOW_ONE, BELOW_ONE),
            Activation::Sigmoid => {
                let y = if x >= 0.0 {
                    1.0 / (1.0 + (-x).exp())
                } else {
                    let e = x.exp();
                    e / (1.0 + e)
                };
                y.clamp(f64::MIN_POSITIVE, BELOW_ONE)
            }
        }
    }

    /// Derivative expressed through the forward output `y`.
    #[inline]
    pub fn derivative_from_output(self, y: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - y * y,
            Activation::Sigmoid => y * (1.0 - y),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Padding {
    /// Left zero-padding only; output at `t` reads inputs at `t` and earlier.
    #[default]
    Causal,
    /// Padding split between both ends, extra element on the right.
    Same,
}

impl Padding {
    /// Number of zero rows prepended for a kernel of `kernel_len` taps.
    pub fn left_pad(self, kernel_len: usize, dilation: usize) -> usize {
        let total = (kernel_len - 1) * dilation;
        match self {
            Padding::Causal => total,
            Padding::Same => total / 2,
        }
    }
}

pub fn activation(input: &Tensor, kind: Activation) -> Tensor {
    input.map(|x| kind.apply(x))
}

/// `out[b, j] = Σ_i input[b, i]·weight[i, j] + bias[j]`.
pub fn affine(input: &Tensor, weight: &Tensor, bias: &Tensor) -> Result<Tensor> {
    let (rows, inner) = as_matrix("affine", input)?;
    let (w_in, out) = as_matrix("affine", weight)?;
    if inner != w_in {
        return Err(Error::dim("affine", input.shape(), weight.shape()));
    }
    if bias.numel() != out || bias.rank() > 1 {
        return Err(Error::dim("affine", weight.shape(), bias.shape()));
    }
    let mut data = Vec::with_capacity(rows * out);
    for _ in 0..rows {
        data.extend_from_slice(bias.data());
    }
    matmul_acc(input.data(), weight.data(), &mut data, rows, inner, out);
    Tensor::new(vec![rows, out], data)
}

/// Dilated 1-D convolution over `[T × C_in]` or batched `[B × T × C_in]` input
/// with kernels laid out `[K × C_in × C_out]`. Output keeps the time extent.
pub fn conv1d_dilated(
    input: &Tensor,
    kernels: &Tensor,
    bias: &Tensor,
    dilation: usize,
    padding: Padding,
) -> Result<Tensor> {
    let geom = ConvGeometry::new(input, kernels, bias, dilation, padding)?;
    let mut out = vec![0.0; geom.batch * geom.steps * geom.c_out];
    for row in out.chunks_exact_mut(geom.c_out) {
        row.copy_from_slice(bias.data());
    }
    let x = input.data();
    let k = kernels.data();
    for b in 0..geom.batch {
        for t in 0..geom.steps {
            let o_row = &mut out[(b * geom.steps + t) * geom.c_out..][..geom.c_out];
            for tap in 0..geom.kernel_len {
                let Some(src) = geom.source(t, tap) else {
                    continue;
                };
                let x_row = &x[(b * geom.steps + src) * geom.c_in..][..geom.c_in];
                for (c, &xv) in x_row.iter().enumerate() {
                    if xv == 0.0 {
                        continue;
                    }
                    let k_row = &k[(tap * geom.c_in + c) * geom.c_out..][..geom.c_out];
                    for (o, &kv) in o_row.iter_mut().zip(k_row) {
                        *o += xv * kv;
                    }
                }
            }
        }
    }
    let shape = if input.rank() == 2 {
        vec![geom.steps, geom.c_out]
    } else {
        vec![geom.batch, geom.steps, geom.c_out]
    };
    Tensor::new(shape, out)
}

/// Inverted dropout. In training mode each element is zeroed with
/// probability `rate` and survivors are scaled by `1/(1−rate)`.
pub fn dropout_mask(input: &Tensor, rate: f64, rng_seed: u64, training: bool) -> Result<Tensor> {
    let mask = dropout_scale_mask(input.numel(), rate, rng_seed, training)?;
    Ok(match mask {
        None => input.clone(),
        Some(mask) => {
            let data = input.data().iter().zip(&mask).map(|(x, m)| x * m).collect();
            Tensor::new(input.shape().to_vec(), data)?
        }
    })
}

/// The multiplicative mask applied by [`dropout_mask`], or `None` when the
/// operation is the identity.
pub(crate) fn dropout_scale_mask(
    len: usize,
    rate: f64,
    seed: u64,
    training: bool,
) -> Result<Option<Vec<f64>>> {
    if !(0.0..1.0).contains(&rate) {
        return Err(Error::Parameter(format!(
            "dropout rate must lie in [0, 1), got {rate}"
        )));
    }
    if !training || rate == 0.0 {
        return Ok(None);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let keep = 1.0 / (1.0 - rate);
    Ok(Some(
        (0..len)
            .map(|_| if rng.gen::<f64>() < rate { 0.0 } else { keep })
            .collect(),
    ))
}

pub(crate) fn as_matrix(op: &'static str, t: &Tensor) -> Result<(usize, usize)> {
    match *t.shape() {
        [r, c] => Ok((r, c)),
        _ => Err(Error::Contract(format!(
            "{op} expects a rank-2 tensor, got shape {:?}",
            t.shape()
        ))),
    }
}

/// `c[m×n] += a[m×k] · b[k×n]`.
pub(crate) fn matmul_acc(a: &[f64], b: &[f64], c: &mut [f64], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let c_row = &mut c[i * n..][..n];
        for (p, &av) in a[i * k..][..k].iter().enumerate() {
            if av == 0.0 {
                continue;
            }
            for (cv, &bv) in c_row.iter_mut().zip(&b[p * n..][..n]) {
                *cv += av * bv;
            }
        }
    }
}

/// `c[m×k] += a[m×n] · b[k×n]ᵀ`.
pub(crate) fn matmul_nt_acc(a: &[f64], b: &[f64], c: &mut [f64], m: usize, n: usize, k: usize) {
    // Transposing once lets the row-streaming kernel vectorize; a per-entry
    // dot product cannot, since float sums are not reassociated.
    let mut bt = vec![0.0; n * k];
    for p in 0..k {
        for (j, &v) in b[p * n..][..n].iter().enumerate() {
            bt[j * k + p] = v;
        }
    }
    matmul_acc(a, &bt, c, m, n, k);
}

/// `c[k×n] += a[m×k]ᵀ · b[m×n]`.
pub(crate) fn matmul_tn_acc(a: &[f64], b: &[f64], c: &mut [f64], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let b_row = &b[i * n..][..n];
        for (p, &av) in a[i * k..][..k].iter().enumerate() {
            if av == 0.0 {
                continue;
            }
            for (cv, &bv) in c[p * n..][..n].iter_mut().zip(b_row) {
                *cv += av * bv;
            }
        }
    }
}

/// Index bookkeeping shared by the convolution kernel and its derivative.
#[derive(Clone, Copy, Debug)]
pub(crate) struct ConvGeometry {
    pub batch: usize,
    pub steps: usize,
    pub c_in: usize,
    pub c_out: usize,
    pub kernel_len: usize,
    pub dilation: usize,
    pub left_pad: usize,
}

impl ConvGeometry {
    pub fn new(
        input: &Tensor,
        kernels: &Tensor,
        bias: &Tensor,
        dilation: usize,
        padding: Padding,
    ) -> Result<Self> {
        if dilation == 0 {
            return Err(Error::Parameter("dilation must be positive".into()));
        }
        let (batch, steps, c_in) = match *input.shape() {
            [t, c] => (1, t, c),
            [b, t, c] => (b, t, c),
            _ => {
                return Err(Error::Contract(format!(
                    "conv1d_dilated expects [T × C] or [B × T × C] input, got {:?}",
                    input.shape()
                )))
            }
        };
        let [kernel_len, k_in, c_out] = *kernels.shape() else {
            return Err(Error::Contract(format!(
                "conv1d_dilated expects [K × C_in × C_out] kernels, got {:?}",
                kernels.shape()
            )));
        };
        if kernel_len == 0 || c_out == 0 {
            return Err(Error::Parameter("convolution kernel is empty".into()));
        }
        if steps == 0 {
            return Err(Error::Parameter(
                "convolution input has no timesteps".into(),
            ));
        }
        if k_in != c_in {
            return Err(Error::dim("conv1d_dilated", input.shape(), kernels.shape()));
        }
        if bias.numel() != c_out || bias.rank() > 1 {
            return Err(Error::dim("conv1d_dilated", kernels.shape(), bias.shape()));
        }
        Ok(Self {
            batch,
            steps,
            c_in,
            c_out,
            kernel_len,
            dilation,
            left_pad: padding.left_pad(kernel_len, dilation),
        })
    }

    /// Input row read by tap `tap` for output row `t`, if inside the series.
    #[inline]
    pub fn source(&self, t: usize, tap: usize) -> Option<usize> {
        (t + tap * self.dilation)
            .checked_sub(self.left_pad)
            .filter(|&s| s < self.steps)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn series(values: &[f64]) -> Tensor {
        Tensor::new(vec![values.len(), 1], values.to_vec()).unwrap()
    }

    #[test]
    fn affine_examples() {
        let x = Tensor::matrix(&[&[1.0, 2.0]]);
        let eye = Tensor::matrix(&[&[1.0, 0.0], &[0.0, 1.0]]);
        let out = affine(&x, &eye, &Tensor::vector(vec![0.0, 0.0])).unwrap();
        assert_eq!(out.data(), &[1.0, 2.0]);

        let zero = Tensor::zeros(&[2, 2]);
        let out = affine(&x, &zero, &Tensor::vector(vec![3.0, 4.0])).unwrap();
        assert_eq!(out.data(), &[3.0, 4.0]);

        let ones = Tensor::full(&[2, 2], 1.0);
        let out = affine(&x, &ones, &Tensor::vector(vec![1.0, 1.0])).unwrap();
        assert_eq!(out.data(), &[4.0, 4.0]);
    }

    #[test]
    fn affine_shape_error_names_both_shapes() {
        let x = Tensor::matrix(&[&[1.0, 2.0, 3.0]]);
        let w = Tensor::zeros(&[2, 2]);
        let err = affine(&x, &w, &Tensor::zeros(&[2])).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("[1, 3]") && msg.contains("[2, 2]"), "{msg}");
    }

    #[test]
    fn activation_examples() {
        assert_eq!(Activation::Tanh.apply(0.0), 0.0);
        assert_eq!(Activation::Sigmoid.apply(0.0), 0.5);
        assert!((Activation::Tanh.apply(1.0) - 0.761594).abs() < 1e-6);
    }

    #[test]
    fn activations_stay_inside_open_codomain() {
        for x in [-1e300, -800.0, -40.0, 40.0, 800.0, 1e300] {
            let t = Activation::Tanh.apply(x);
            let s = Activation::Sigmoid.apply(x);
            assert!(t > -1.0 && t < 1.0, "tanh({x}) = {t}");
            assert!(s > 0.0 && s < 1.0, "sigmoid({x}) = {s}");
        }
    }

    #[test]
    fn causal_dilated_conv_matches_hand_sum() {
        let x = series(&[1.0, 2.0, 3.0, 4.0]);
        let k = Tensor::new(vec![2, 1, 1], vec![1.0, 1.0]).unwrap();
        let out = conv1d_dilated(&x, &k, &Tensor::zeros(&[1]), 2, Padding::Causal).unwrap();
        assert_eq!(out.shape(), &[4, 1]);
        assert_eq!(out.data(), &[1.0, 2.0, 4.0, 6.0]);
    }

    #[test]
    fn delta_kernel_is_identity() {
        let x = series(&[0.5, -1.5, 2.0, 7.0, 3.25]);
        let k = Tensor::new(vec![1, 1, 1], vec![1.0]).unwrap();
        for dilation in [1, 2, 5] {
            for padding in [Padding::Causal, Padding::Same] {
                let out = conv1d_dilated(&x, &k, &Tensor::zeros(&[1]), dilation, padding).unwrap();
                assert_eq!(out.data(), x.data());
            }
        }
    }

    #[test]
    fn zero_input_gives_zero_output() {
        let x = Tensor::zeros(&[6, 2]);
        let k = Tensor::full(&[3, 2, 4], 0.7);
        let out = conv1d_dilated(&x, &k, &Tensor::zeros(&[4]), 2, Padding::Same).unwrap();
        assert!(out.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn same_padding_centres_the_kernel() {
        // K=3, d=1: left pad 1, so out[t] = x[t-1] + 2x[t] + 3x[t+1].
        let x = series(&[1.0, 2.0, 3.0]);
        let k = Tensor::new(vec![3, 1, 1], vec![1.0, 2.0, 3.0]).unwrap();
        let out = conv1d_dilated(&x, &k, &Tensor::zeros(&[1]), 1, Padding::Same).unwrap();
        assert_eq!(out.data(), &[8.0, 14.0, 8.0]);
    }

    #[test]
    fn conv_rejects_bad_parameters() {
        let x = series(&[1.0, 2.0]);
        let k = Tensor::new(vec![1, 1, 1], vec![1.0]).unwrap();
        let b = Tensor::zeros(&[1]);
        assert!(matches!(
            conv1d_dilated(&x, &k, &b, 0, Padding::Causal),
            Err(Error::Parameter(_))
        ));
        let empty = Tensor::new(vec![0, 1, 1], vec![]).unwrap();
        assert!(matches!(
            conv1d_dilated(&x, &empty, &b, 1, Padding::Causal),
            Err(Error::Parameter(_))
        ));
    }

    #[test]
    fn dropout_identity_cases() {
        let x = Tensor::vector((0..50).map(|i| i as f64 * 0.37 - 3.0).collect());
        assert_eq!(dropout_mask(&x, 0.0, 9, true).unwrap(), x);
        assert_eq!(dropout_mask(&x, 0.5, 9, false).unwrap(), x);
        assert!(matches!(
            dropout_mask(&x, 1.0, 9, true),
            Err(Error::Parameter(_))
        ));
    }

    #[test]
    fn dropout_preserves_mean_in_expectation() {
        let x = Tensor::full(&[100_000], 1.0);
        let out = dropout_mask(&x, 0.2, 17, true).unwrap();
        let mean = out.data().iter().sum::<f64>() / out.numel() as f64;
        assert!((mean - 1.0).abs() < 0.01, "mean {mean}");
        let zeroed = out.data().iter().filter(|&&v| v == 0.0).count();
        assert!((zeroed as f64 / 1e5 - 0.2).abs() < 0.01);
    }
}
