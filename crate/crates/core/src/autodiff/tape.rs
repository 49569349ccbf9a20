//! Reverse-mode differentiation by operation recording.
//!
//! The forward pass appends one node per primitive to a [`Tape`]. Each node
//! keeps its output value plus whatever its derivative rule needs; `backward`
//! walks the nodes in reverse and accumulates gradients into every node that
//! depends on a differentiable leaf.

use crate::autodiff::ops::{self, Activation, ConvGeometry, Padding};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    Affine {
        input: Var,
        weight: Var,
        bias: Var,
    },
    MatMul {
        a: Var,
        b: Var,
    },
    Add {
        a: Var,
        b: Var,
    },
    Mul {
        a: Var,
        b: Var,
    },
    Activation {
        input: Var,
        kind: Activation,
    },
    Conv1d {
        input: Var,
        kernels: Var,
        bias: Var,
        geom: ConvGeometry,
    },
    Dropout {
        input: Var,
        mask: Vec<f64>,
    },
    SelectTime {
        input: Var,
        t: usize,
    },
    SliceCols {
        input: Var,
        start: usize,
    },
    Mse {
        pred: Var,
        target: Var,
    },
    Sum {
        input: Var,
    },
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Ordered record of the primitives applied during one forward pass.
///
/// A tape supports exactly one backward pass; later calls fail with
/// [`Error::Consumed`].
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    consumed: bool,
}

/// Gradients of a scalar loss with respect to the differentiable leaves.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    /// Gradient for `var`, or `None` when the loss does not depend on it.
    pub fn get(&self, var: Var) -> Option<&Tensor> {
        self.grads.get(var.0).and_then(Option::as_ref)
    }

    /// Moves the gradient out, substituting zeros of `shape` when the loss
    /// does not reach `var`.
    pub fn take_or_zeros(&mut self, var: Var, shape: &[usize]) -> Tensor {
        self.grads
            .get_mut(var.0)
            .and_then(Option::take)
            .unwrap_or_else(|| Tensor::zeros(shape))
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Records a differentiable input.
    pub fn variable(&mut self, value: Tensor) -> Var {
        self.push_node(value, Op::Leaf, true)
    }

    /// Records an input that receives no gradient.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push_node(value, Op::Leaf, false)
    }

    pub fn value(&self, var: Var) -> &Tensor {
        &self.nodes[var.0].value
    }

    fn shape(&self, var: Var) -> &[usize] {
        self.nodes[var.0].value.shape()
    }

    fn needs(&self, var: Var) -> bool {
        self.nodes[var.0].requires_grad
    }

    fn push_node(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn push(&mut self, name: &'static str, value: Tensor, op: Op, operands: &[Var]) -> Result<Var> {
        if cfg!(debug_assertions) && !value.is_finite() {
            return Err(Error::NonFinite(name.into()));
        }
        let requires_grad = operands.iter().any(|&v| self.needs(v));
        Ok(self.push_node(value, op, requires_grad))
    }

    pub fn affine(&mut self, input: Var, weight: Var, bias: Var) -> Result<Var> {
        let out = ops::affine(self.value(input), self.value(weight), self.value(bias))?;
        self.push(
            "affine",
            out,
            Op::Affine {
                input,
                weight,
                bias,
            },
            &[input, weight, bias],
        )
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, k) = ops::as_matrix("matmul", self.value(a))?;
        let (k2, n) = ops::as_matrix("matmul", self.value(b))?;
        if k != k2 {
            return Err(Error::dim("matmul", self.shape(a), self.shape(b)));
        }
        let mut data = vec![0.0; m * n];
        ops::matmul_acc(
            self.value(a).data(),
            self.value(b).data(),
            &mut data,
            m,
            k,
            n,
        );
        let out = Tensor::new(vec![m, n], data)?;
        self.push("matmul", out, Op::MatMul { a, b }, &[a, b])
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.zip_same("add", a, b, |x, y| x + y)?;
        self.push("add", out, Op::Add { a, b }, &[a, b])
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.zip_same("mul", a, b, |x, y| x * y)?;
        self.push("mul", out, Op::Mul { a, b }, &[a, b])
    }

    fn zip_same(
        &self,
        op: &'static str,
        a: Var,
        b: Var,
        f: impl Fn(f64, f64) -> f64,
    ) -> Result<Tensor> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape() != tb.shape() {
            return Err(Error::dim(op, ta.shape(), tb.shape()));
        }
        let data = ta
            .data()
            .iter()
            .zip(tb.data())
            .map(|(&x, &y)| f(x, y))
            .collect();
        Tensor::new(ta.shape().to_vec(), data)
    }

    pub fn activation(&mut self, input: Var, kind: Activation) -> Result<Var> {
        let out = ops::activation(self.value(input), kind);
        self.push("activation", out, Op::Activation { input, kind }, &[input])
    }

    pub fn tanh(&mut self, input: Var) -> Result<Var> {
        self.activation(input, Activation::Tanh)
    }

    pub fn sigmoid(&mut self, input: Var) -> Result<Var> {
        self.activation(input, Activation::Sigmoid)
    }

    pub fn conv1d_dilated(
        &mut self,
        input: Var,
        kernels: Var,
        bias: Var,
        dilation: usize,
        padding: Padding,
    ) -> Result<Var> {
        let (x, k, b) = (self.value(input), self.value(kernels), self.value(bias));
        let geom = ConvGeometry::new(x, k, b, dilation, padding)?;
        let out = ops::conv1d_dilated(x, k, b, dilation, padding)?;
        self.push(
            "conv1d_dilated",
            out,
            Op::Conv1d {
                input,
                kernels,
                bias,
                geom,
            },
            &[input, kernels, bias],
        )
    }

    /// Inverted dropout; the identity (and no node) outside training or at rate 0.
    pub fn dropout(&mut self, input: Var, rate: f64, seed: u64, training: bool) -> Result<Var> {
        let x = self.value(input);
        match ops::dropout_scale_mask(x.numel(), rate, seed, training)? {
            None => Ok(input),
            Some(mask) => {
                let data = x.data().iter().zip(&mask).map(|(v, m)| v * m).collect();
                let out = Tensor::new(x.shape().to_vec(), data)?;
                self.push("dropout", out, Op::Dropout { input, mask }, &[input])
            }
        }
    }

    /// Row `t` along the time axis of a `[B × T × C]` tensor, giving `[B × C]`.
    pub fn select_time(&mut self, input: Var, t: usize) -> Result<Var> {
        let x = self.value(input);
        let [batch, steps, channels] = *x.shape() else {
            return Err(Error::Contract(format!(
                "select_time expects [B × T × C], got {:?}",
                x.shape()
            )));
        };
        if t >= steps {
            return Err(Error::Contract(format!(
                "time index {t} outside {steps} steps"
            )));
        }
        let mut data = Vec::with_capacity(batch * channels);
        for b in 0..batch {
            data.extend_from_slice(&x.data()[(b * steps + t) * channels..][..channels]);
        }
        let out = Tensor::new(vec![batch, channels], data)?;
        self.push("select_time", out, Op::SelectTime { input, t }, &[input])
    }

    /// Columns `[start, start + len)` of a `[B × N]` matrix.
    pub fn slice_cols(&mut self, input: Var, start: usize, len: usize) -> Result<Var> {
        let (rows, cols) = ops::as_matrix("slice_cols", self.value(input))?;
        if start + len > cols {
            return Err(Error::Contract(format!(
                "column slice {start}..{} outside {cols} columns",
                start + len
            )));
        }
        let x = self.value(input).data();
        let mut data = Vec::with_capacity(rows * len);
        for r in 0..rows {
            data.extend_from_slice(&x[r * cols + start..][..len]);
        }
        let out = Tensor::new(vec![rows, len], data)?;
        self.push("slice_cols", out, Op::SliceCols { input, start }, &[input])
    }

    /// Mean squared error between two tensors with the same element count.
    pub fn mse(&mut self, pred: Var, target: Var) -> Result<Var> {
        let (p, t) = (self.value(pred), self.value(target));
        if p.numel() != t.numel() {
            return Err(Error::dim("mse", p.shape(), t.shape()));
        }
        let loss = crate::train::mse(p.data(), t.data())?;
        self.push(
            "mse",
            Tensor::scalar(loss),
            Op::Mse { pred, target },
            &[pred, target],
        )
    }

    pub fn sum(&mut self, input: Var) -> Result<Var> {
        let total = self.value(input).data().iter().sum();
        self.push("sum", Tensor::scalar(total), Op::Sum { input }, &[input])
    }

    /// Replays the record in reverse from the scalar `loss`.
    pub fn backward(&mut self, loss: Var) -> Result<Gradients> {
        if self.consumed {
            return Err(Error::Consumed);
        }
        let n = self.value(loss).numel();
        if n != 1 {
            return Err(Error::Contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.shape(loss)
            )));
        }
        self.consumed = true;

        let mut grads: Vec<Option<Tensor>> = Vec::with_capacity(self.nodes.len());
        grads.resize_with(self.nodes.len(), || None);
        if !self.needs(loss) {
            return Ok(Gradients { grads });
        }
        grads[loss.0] = Some(Tensor::full(self.shape(loss), 1.0));

        for i in (0..=loss.0).rev() {
            let node = &self.nodes[i];
            if matches!(node.op, Op::Leaf) || !node.requires_grad {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            self.propagate(i, &g, &mut grads);
        }
        for (node, g) in self.nodes.iter().zip(grads.iter_mut()) {
            if !(matches!(node.op, Op::Leaf) && node.requires_grad) {
                *g = None;
            }
        }
        Ok(Gradients { grads })
    }

    fn propagate(&self, i: usize, g: &Tensor, grads: &mut [Option<Tensor>]) {
        let node = &self.nodes[i];
        let gd = g.data();
        match node.op {
            Op::Leaf => {}
            Op::Affine {
                input,
                weight,
                bias,
            } => {
                let x = self.value(input);
                let w = self.value(weight);
                let (rows, inner) = (x.shape()[0], x.shape()[1]);
                let out = w.shape()[1];
                self.accumulate(grads, input, |gx| {
                    ops::matmul_nt_acc(gd, w.data(), gx, rows, out, inner)
                });
                self.accumulate(grads, weight, |gw| {
                    ops::matmul_tn_acc(x.data(), gd, gw, rows, inner, out)
                });
                self.accumulate(grads, bias, |gb| {
                    for row in gd.chunks_exact(out) {
                        for (acc, v) in gb.iter_mut().zip(row) {
                            *acc += v;
                        }
                    }
                });
            }
            Op::MatMul { a, b } => {
                let (ta, tb) = (self.value(a), self.value(b));
                let (m, k) = (ta.shape()[0], ta.shape()[1]);
                let n = tb.shape()[1];
                self.accumulate(grads, a, |ga| {
                    ops::matmul_nt_acc(gd, tb.data(), ga, m, n, k)
                });
                self.accumulate(grads, b, |gb| {
                    ops::matmul_tn_acc(ta.data(), gd, gb, m, k, n)
                });
            }
            Op::Add { a, b } => {
                self.accumulate(grads, a, |ga| add_into(ga, gd));
                self.accumulate(grads, b, |gb| add_into(gb, gd));
            }
            Op::Mul { a, b } => {
                let (ta, tb) = (self.value(a).data(), self.value(b).data());
                self.accumulate(grads, a, |ga| {
                    for ((acc, gv), bv) in ga.iter_mut().zip(gd).zip(tb) {
                        *acc += gv * bv;
                    }
                });
                self.accumulate(grads, b, |gb| {
                    for ((acc, gv), av) in gb.iter_mut().zip(gd).zip(ta) {
                        *acc += gv * av;
                    }
                });
            }
            Op::Activation { input, kind } => {
                let y = node.value.data();
                self.accumulate(grads, input, |gx| {
                    for ((acc, gv), &yv) in gx.iter_mut().zip(gd).zip(y) {
                        *acc += gv * kind.derivative_from_output(yv);
                    }
                });
            }
            Op::Conv1d {
                input,
                kernels,
                bias,
                geom,
            } => {
                self.conv_backward(gd, input, kernels, bias, geom, grads);
            }
            Op::Dropout { input, ref mask } => {
                self.accumulate(grads, input, |gx| {
                    for ((acc, gv), m) in gx.iter_mut().zip(gd).zip(mask) {
                        *acc += gv * m;
                    }
                });
            }
            Op::SelectTime { input, t } => {
                let [batch, steps, channels] = *self.shape(input) else {
                    unreachable!()
                };
                self.accumulate(grads, input, |gx| {
                    for b in 0..batch {
                        let dst = &mut gx[(b * steps + t) * channels..][..channels];
                        add_into(dst, &gd[b * channels..][..channels]);
                    }
                });
            }
            Op::SliceCols { input, start } => {
                let cols = self.shape(input)[1];
                let len = node.value.shape()[1];
                self.accumulate(grads, input, |gx| {
                    for (r, g_row) in gd.chunks_exact(len).enumerate() {
                        add_into(&mut gx[r * cols + start..][..len], g_row);
                    }
                });
            }
            Op::Mse { pred, target } => {
                let (p, t) = (self.value(pred).data(), self.value(target).data());
                let scale = 2.0 * gd[0] / p.len() as f64;
                self.accumulate(grads, pred, |gp| {
                    for ((acc, pv), tv) in gp.iter_mut().zip(p).zip(t) {
                        *acc += scale * (pv - tv);
                    }
                });
                self.accumulate(grads, target, |gt| {
                    for ((acc, pv), tv) in gt.iter_mut().zip(p).zip(t) {
                        *acc -= scale * (pv - tv);
                    }
                });
            }
            Op::Sum { input } => {
                self.accumulate(grads, input, |gx| {
                    for acc in gx.iter_mut() {
                        *acc += gd[0];
                    }
                });
            }
        }
    }

    fn conv_backward(
        &self,
        gd: &[f64],
        input: Var,
        kernels: Var,
        bias: Var,
        geom: ConvGeometry,
        grads: &mut [Option<Tensor>],
    ) {
        let x = self.value(input).data();
        let k = self.value(kernels).data();
        let (c_in, c_out) = (geom.c_in, geom.c_out);
        self.accumulate(grads, input, |gx| {
            for b in 0..geom.batch {
                for t in 0..geom.steps {
                    let g_row = &gd[(b * geom.steps + t) * c_out..][..c_out];
                    for tap in 0..geom.kernel_len {
                        let Some(src) = geom.source(t, tap) else {
                            continue;
                        };
                        let gx_row = &mut gx[(b * geom.steps + src) * c_in..][..c_in];
                        for (c, acc) in gx_row.iter_mut().enumerate() {
                            let k_row = &k[(tap * c_in + c) * c_out..][..c_out];
                            *acc += k_row.iter().zip(g_row).map(|(kv, gv)| kv * gv).sum::<f64>();
                        }
                    }
                }
            }
        });
        self.accumulate(grads, kernels, |gk| {
            for b in 0..geom.batch {
                for t in 0..geom.steps {
                    let g_row = &gd[(b * geom.steps + t) * c_out..][..c_out];
                    for tap in 0..geom.kernel_len {
                        let Some(src) = geom.source(t, tap) else {
                            continue;
                        };
                        let x_row = &x[(b * geom.steps + src) * c_in..][..c_in];
                        for (c, &xv) in x_row.iter().enumerate() {
                            if xv == 0.0 {
                                continue;
                            }
                            let gk_row = &mut gk[(tap * c_in + c) * c_out..][..c_out];
                            for (acc, gv) in gk_row.iter_mut().zip(g_row) {
                                *acc += xv * gv;
                            }
                        }
                    }
                }
            }
        });
        self.accumulate(grads, bias, |gb| {
            for g_row in gd.chunks_exact(c_out) {
                add_into(gb, g_row);
            }
        });
    }

    fn accumulate(&self, grads: &mut [Option<Tensor>], var: Var, f: impl FnOnce(&mut [f64])) {
        if !self.needs(var) {
            return;
        }
        let slot = &mut grads[var.0];
        let g = slot.get_or_insert_with(|| Tensor::zeros(self.nodes[var.0].value.shape()));
        f(g.data_mut());
    }
}

fn add_into(dst: &mut [f64], src: &[f64]) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}
