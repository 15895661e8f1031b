//! Reverse-mode automatic differentiation over a linear tape.
//!
//! A [`Graph`] records every operation as it is evaluated, so node order is a
//! topological order by construction. [`Graph::backward`] walks the tape in
//! reverse and accumulates vector-Jacobian products into per-node slots.
//!
//! Graphs are cheap, single-owner values: build one per segment, read the
//! gradients of the parameter leaves, and drop it.

use crate::error::{Error, Result};
use crate::tensor::{self, check_dense, conv1d_geometry, deconv1d_geometry, ConvGeom, Tensor};

/// Handle to a node on a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
enum Op {
    Input,
    Param,
    Conv1d { x: Var, w: Var, b: Var, geom: ConvGeom },
    Deconv1d { x: Var, w: Var, b: Var, geom: ConvGeom },
    Dense { x: Var, w: Var, b: Var },
    Relu(Var),
    Sigmoid(Var),
    LogSoftmax(Var),
    Reshape(Var),
    Slice { x: Var, start: usize },
    Add(Var, Var),
    Sub(Var, Var),
    Square(Var),
    Sum(Var),
    Bce { p: Var, target: Vec<f64>, eps: f64 },
    Nll { logp: Var, index: usize },
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

/// Gradients produced by [`Graph::backward`], indexed by [`Var`].
#[derive(Debug)]
pub struct Gradients {
    slots: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, var: Var) -> Option<&Tensor> {
        self.slots.get(var.0).and_then(Option::as_ref)
    }

    pub fn take(&mut self, var: Var) -> Option<Tensor> {
        self.slots.get_mut(var.0).and_then(Option::take)
    }
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn needs(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].requires_grad)
    }

    /// Constant leaf; no gradient is propagated into it.
    pub fn input(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Input, false)
    }

    /// Trainable leaf; always receives a gradient slot after `backward`.
    pub fn param(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Param, true)
    }

    pub fn value(&self, var: Var) -> &Tensor {
        &self.nodes[var.0].value
    }

    pub fn conv1d(&mut self, x: Var, w: Var, b: Var, stride: usize) -> Result<Var> {
        let (xv, wv, bv) = (self.value(x), self.value(w), self.value(b));
        let geom = conv1d_geometry(xv, wv, bv, stride)?;
        let out = tensor::conv1d(xv, wv, bv, stride)?;
        let rg = self.needs(&[x, w, b]);
        Ok(self.push(out, Op::Conv1d { x, w, b, geom }, rg))
    }

    /// Transposed convolution cropped or zero-padded on the right to `target_len`.
    pub fn deconv1d(&mut self, x: Var, w: Var, b: Var, stride: usize, target_len: usize) -> Result<Var> {
        let (xv, wv, bv) = (self.value(x), self.value(w), self.value(b));
        let geom = deconv1d_geometry(xv, wv, bv, stride, target_len)?;
        let out = tensor::deconv1d(xv, wv, bv, stride, target_len)?;
        let rg = self.needs(&[x, w, b]);
        Ok(self.push(out, Op::Deconv1d { x, w, b, geom }, rg))
    }

    pub fn dense(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let out = tensor::dense(self.value(x), self.value(w), self.value(b))?;
        let rg = self.needs(&[x, w, b]);
        Ok(self.push(out, Op::Dense { x, w, b }, rg))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let out = tensor::relu(self.value(x));
        let rg = self.needs(&[x]);
        self.push(out, Op::Relu(x), rg)
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        let out = tensor::sigmoid(self.value(x));
        let rg = self.needs(&[x]);
        self.push(out, Op::Sigmoid(x), rg)
    }

    pub fn log_softmax(&mut self, x: Var) -> Var {
        let out = tensor::log_softmax(self.value(x));
        let rg = self.needs(&[x]);
        self.push(out, Op::LogSoftmax(x), rg)
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let out = self.value(x).clone().reshape(shape)?;
        let rg = self.needs(&[x]);
        Ok(self.push(out, Op::Reshape(x), rg))
    }

    /// Contiguous range `[start, start + len)` of a rank-1 tensor.
    pub fn slice(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let xv = self.value(x);
        tensor::check_rank("slice", "input", xv, 1)?;
        if len == 0 || start + len > xv.numel() {
            return Err(Error::shape(
                "slice",
                format!("range {start}..{} out of bounds for length {}", start + len, xv.numel()),
            ));
        }
        let out = Tensor::from_vec(xv.data()[start..start + len].to_vec());
        let rg = self.needs(&[x]);
        Ok(self.push(out, Op::Slice { x, start }, rg))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.elementwise("add", a, b, |x, y| x + y)?;
        let rg = self.needs(&[a, b]);
        Ok(self.push(out, Op::Add(a, b), rg))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.elementwise("sub", a, b, |x, y| x - y)?;
        let rg = self.needs(&[a, b]);
        Ok(self.push(out, Op::Sub(a, b), rg))
    }

    fn elementwise(&self, op: &'static str, a: Var, b: Var, f: impl Fn(f64, f64) -> f64) -> Result<Tensor> {
        let (av, bv) = (self.value(a), self.value(b));
        if !av.same_shape(bv) {
            return Err(Error::shape(op, format!("{:?} vs {:?}", av.shape(), bv.shape())));
        }
        let data = av.data().iter().zip(bv.data()).map(|(&x, &y)| f(x, y)).collect();
        Tensor::new(av.shape().to_vec(), data)
    }

    pub fn square(&mut self, x: Var) -> Var {
        let out = self.value(x).map(|v| v * v);
        let rg = self.needs(&[x]);
        self.push(out, Op::Square(x), rg)
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let out = Tensor::scalar(self.value(x).sum());
        let rg = self.needs(&[x]);
        self.push(out, Op::Sum(x), rg)
    }

    /// `Σ (a - b)²`.
    pub fn sum_squared_error(&mut self, a: Var, b: Var) -> Result<Var> {
        let diff = self.sub(a, b)?;
        let sq = self.square(diff);
        Ok(self.sum(sq))
    }

    /// Binary cross-entropy summed over all entries, with probabilities
    /// clamped to `[eps, 1 - eps]`. Gradient is zero where the clamp is active.
    pub fn bce(&mut self, p: Var, target: &[f64], eps: f64) -> Result<Var> {
        let pv = self.value(p);
        if pv.numel() != target.len() {
            return Err(Error::shape(
                "bce",
                format!("{} probabilities vs {} targets", pv.numel(), target.len()),
            ));
        }
        let loss: f64 = pv
            .data()
            .iter()
            .zip(target)
            .map(|(&p, &y)| {
                let q = p.clamp(eps, 1.0 - eps);
                -(y * q.ln() + (1.0 - y) * (1.0 - q).ln())
            })
            .sum();
        let rg = self.needs(&[p]);
        Ok(self.push(
            Tensor::scalar(loss),
            Op::Bce {
                p,
                target: target.to_vec(),
                eps,
            },
            rg,
        ))
    }

    /// Negative log-likelihood `-logp[index]` of a log-probability vector.
    pub fn nll(&mut self, logp: Var, index: usize) -> Result<Var> {
        let lv = self.value(logp);
        tensor::check_rank("nll", "log-probabilities", lv, 1)?;
        if index >= lv.numel() {
            return Err(Error::shape(
                "nll",
                format!("class {index} out of range for {} classes", lv.numel()),
            ));
        }
        let loss = -lv.data()[index];
        let rg = self.needs(&[logp]);
        Ok(self.push(Tensor::scalar(loss), Op::Nll { logp, index }, rg))
    }

    /// Reverse pass from a scalar `loss`. Every `param` leaf gets a gradient
    /// of its own shape, zero if it does not influence the loss.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let lv = self.value(loss);
        if !lv.is_scalar() {
            return Err(Error::NonScalarLoss(lv.shape().to_vec()));
        }
        let mut slots: Vec<Option<Tensor>> = vec![None; self.nodes.len()];
        slots[loss.0] = Some(Tensor::full(lv.shape(), 1.0));

        for idx in (0..=loss.0).rev() {
            let node = &self.nodes[idx];
            if !node.requires_grad {
                continue;
            }
            let Some(grad) = slots[idx].take() else {
                continue;
            };
            self.propagate(node, &grad, &mut slots);
            slots[idx] = Some(grad);
        }

        for (idx, node) in self.nodes.iter().enumerate() {
            if matches!(node.op, Op::Param) && slots[idx].is_none() {
                slots[idx] = Some(Tensor::zeros(node.value.shape()));
            }
        }
        Ok(Gradients { slots })
    }

    fn accumulate(&self, slots: &mut [Option<Tensor>], var: Var, f: impl FnOnce(&mut Tensor)) {
        if !self.nodes[var.0].requires_grad {
            return;
        }
        let slot = slots[var.0].get_or_insert_with(|| Tensor::zeros(self.nodes[var.0].value.shape()));
        f(slot);
    }

    fn propagate(&self, node: &Node, grad: &Tensor, slots: &mut [Option<Tensor>]) {
        let g = grad.data();
        match &node.op {
            Op::Input | Op::Param => {}
            Op::Conv1d { x, w, b, geom } => {
                let geom = *geom;
                self.accumulate(slots, *x, |dx| {
                    tensor::conv_adjoint_accumulate(geom, g, self.value(*w).data(), dx.data_mut())
                });
                self.accumulate(slots, *w, |dw| {
                    tensor::conv_weight_grad_accumulate(geom, g, self.value(*x).data(), dw.data_mut())
                });
                self.accumulate(slots, *b, |db| {
                    for (o, row) in g.chunks(geom.short).enumerate() {
                        db.data_mut()[o] += row.iter().sum::<f64>();
                    }
                });
            }
            Op::Deconv1d { x, w, b, geom } => {
                let geom = *geom;
                self.accumulate(slots, *x, |dx| {
                    tensor::deconv_gather(geom, g, self.value(*w).data(), dx.data_mut())
                });
                self.accumulate(slots, *w, |dw| {
                    tensor::deconv_weight_grad(geom, self.value(*x).data(), g, dw.data_mut())
                });
                self.accumulate(slots, *b, |db| {
                    for (o, row) in g.chunks(geom.long).enumerate() {
                        db.data_mut()[o] += row.iter().sum::<f64>();
                    }
                });
            }
            Op::Dense { x, w, b } => {
                let (wv, xv) = (self.value(*w), self.value(*x));
                debug_assert!(check_dense(xv, wv, self.value(*b)).is_ok());
                let n = xv.numel();
                self.accumulate(slots, *x, |dx| {
                    let dx = dx.data_mut();
                    for (r, &gr) in g.iter().enumerate() {
                        let row = &wv.data()[r * n..(r + 1) * n];
                        for (d, &wv) in dx.iter_mut().zip(row) {
                            *d += gr * wv;
                        }
                    }
                });
                self.accumulate(slots, *w, |dw| {
                    for (r, &gr) in g.iter().enumerate() {
                        let row = &mut dw.data_mut()[r * n..(r + 1) * n];
                        for (d, &xv) in row.iter_mut().zip(xv.data()) {
                            *d += gr * xv;
                        }
                    }
                });
                self.accumulate(slots, *b, |db| {
                    for (d, &gr) in db.data_mut().iter_mut().zip(g) {
                        *d += gr;
                    }
                });
            }
            Op::Relu(x) => {
                let xv = self.value(*x).data();
                self.accumulate(slots, *x, |dx| {
                    for ((d, &gi), &xi) in dx.data_mut().iter_mut().zip(g).zip(xv) {
                        if xi > 0.0 {
                            *d += gi;
                        }
                    }
                });
            }
            Op::Sigmoid(x) => {
                let y = node.value.data();
                self.accumulate(slots, *x, |dx| {
                    for ((d, &gi), &yi) in dx.data_mut().iter_mut().zip(g).zip(y) {
                        *d += gi * yi * (1.0 - yi);
                    }
                });
            }
            Op::LogSoftmax(x) => {
                let y = &node.value;
                let last = *y.shape().last().expect("rank >= 1");
                self.accumulate(slots, *x, |dx| {
                    let rows = dx.data_mut().chunks_mut(last).zip(g.chunks(last)).zip(y.data().chunks(last));
                    for ((d_row, g_row), y_row) in rows {
                        let total: f64 = g_row.iter().sum();
                        for ((d, &gi), &yi) in d_row.iter_mut().zip(g_row).zip(y_row) {
                            *d += gi - yi.exp() * total;
                        }
                    }
                });
            }
            Op::Reshape(x) => {
                self.accumulate(slots, *x, |dx| {
                    for (d, &gi) in dx.data_mut().iter_mut().zip(g) {
                        *d += gi;
                    }
                });
            }
            Op::Slice { x, start } => {
                let start = *start;
                self.accumulate(slots, *x, |dx| {
                    for (d, &gi) in dx.data_mut()[start..start + g.len()].iter_mut().zip(g) {
                        *d += gi;
                    }
                });
            }
            Op::Add(a, b) => {
                self.accumulate(slots, *a, |da| da.add_assign(grad));
                self.accumulate(slots, *b, |db| db.add_assign(grad));
            }
            Op::Sub(a, b) => {
                self.accumulate(slots, *a, |da| da.add_assign(grad));
                self.accumulate(slots, *b, |db| {
                    for (d, &gi) in db.data_mut().iter_mut().zip(g) {
                        *d -= gi;
                    }
                });
            }
            Op::Square(x) => {
                let xv = self.value(*x).data();
                self.accumulate(slots, *x, |dx| {
                    for ((d, &gi), &xi) in dx.data_mut().iter_mut().zip(g).zip(xv) {
                        *d += 2.0 * xi * gi;
                    }
                });
            }
            Op::Sum(x) => {
                let gs = g[0];
                self.accumulate(slots, *x, |dx| dx.data_mut().iter_mut().for_each(|d| *d += gs));
            }
            Op::Bce { p, target, eps } => {
                let gs = g[0];
                let pv = self.value(*p).data();
                self.accumulate(slots, *p, |dp| {
                    for ((d, &pi), &y) in dp.data_mut().iter_mut().zip(pv).zip(target) {
                        if pi > *eps && pi < 1.0 - eps {
                            *d += gs * ((1.0 - y) / (1.0 - pi) - y / pi);
                        }
                    }
                });
            }
            Op::Nll { logp, index } => {
                let gs = g[0];
                self.accumulate(slots, *logp, |dl| dl.data_mut()[*index] -= gs);
            }
        }
    }
}
