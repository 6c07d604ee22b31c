//! Reverse-mode automatic differentiation over [`Tensor`] values.
//!
//! A [`Tape`] records every operation in evaluation order; `backward` walks
//! it in reverse and accumulates adjoints. Leaves (parameters, inputs,
//! constants) are ordinary nodes, so gradients are available for all of them.

use crate::error::{Error, Result};
use crate::histogram::{self, BinGrid};
use crate::tensor::{matmul_into, sigmoid, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Leaf,
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Offset(Var),
    Square(Var),
    MatMul(Var, Var),
    Sigmoid(Var),
    Tanh(Var),
    Relu(Var),
    Sum(Var),
    Reshape(Var),
    Gather {
        src: Var,
        index: Vec<usize>,
    },
    Dense {
        x: Var,
        p: Var,
        inputs: usize,
        outputs: usize,
        bias: bool,
    },
    Conv2d {
        x: Var,
        p: Var,
        in_ch: usize,
        out_ch: usize,
        k: usize,
    },
    MaxPool2d {
        x: Var,
        argmax: Vec<usize>,
    },
    SoftHistogram {
        points: Var,
        grid: BinGrid,
        bandwidth: f64,
    },
    Bce {
        pred: Var,
        target: Vec<f64>,
    },
    Mse {
        pred: Var,
        target: Vec<f64>,
    },
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
}

#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

const BCE_CLAMP: f64 = 1e-12;

fn shape_err(op: &'static str, detail: String) -> Error {
    Error::Shape { op, detail }
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

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn leaf(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    fn binary(
        &mut self,
        a: Var,
        b: Var,
        name: &'static str,
        f: impl Fn(f64, f64) -> f64,
    ) -> Result<Tensor> {
        let (va, vb) = (self.value(a), self.value(b));
        if va.shape() != vb.shape() {
            return Err(shape_err(
                name,
                format!("{:?} vs {:?}", va.shape(), vb.shape()),
            ));
        }
        let data = va
            .data()
            .iter()
            .zip(vb.data())
            .map(|(&x, &y)| f(x, y))
            .collect();
        Tensor::new(va.shape().to_vec(), data)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = self.binary(a, b, "add", |x, y| x + y)?;
        Ok(self.push(v, Op::Add(a, b)))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = self.binary(a, b, "sub", |x, y| x - y)?;
        Ok(self.push(v, Op::Sub(a, b)))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = self.binary(a, b, "mul", |x, y| x * y)?;
        Ok(self.push(v, Op::Mul(a, b)))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let v = self.value(a).map(|x| x * c);
        self.push(v, Op::Scale(a, c))
    }

    pub fn offset(&mut self, a: Var, c: f64) -> Var {
        let v = self.value(a).map(|x| x + c);
        self.push(v, Op::Offset(a))
    }

    pub fn square(&mut self, a: Var) -> Var {
        let v = self.value(a).map(|x| x * x);
        self.push(v, Op::Square(a))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = self.value(a).matmul(self.value(b))?;
        Ok(self.push(v, Op::MatMul(a, b)))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let v = self.value(a).map(sigmoid);
        self.push(v, Op::Sigmoid(a))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let v = self.value(a).map(f64::tanh);
        self.push(v, Op::Tanh(a))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let v = self.value(a).map(|x| x.max(0.0));
        self.push(v, Op::Relu(a))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let v = Tensor::scalar(self.value(a).sum());
        self.push(v, Op::Sum(a))
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let n = self.value(a).len().max(1) as f64;
        let s = self.sum(a);
        self.scale(s, 1.0 / n)
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Result<Var> {
        let v = self.value(a).clone().reshape(shape)?;
        Ok(self.push(v, Op::Reshape(a)))
    }

    /// `out.data[i] = src.data[index[i]]`, reshaped to `shape`. Repeated
    /// indices broadcast; gradients scatter-add back.
    pub fn gather(&mut self, src: Var, index: Vec<usize>, shape: &[usize]) -> Result<Var> {
        let s = self.value(src);
        if let Some(&bad) = index.iter().find(|&&i| i >= s.len()) {
            return Err(shape_err(
                "gather",
                format!("index {bad} out of {}", s.len()),
            ));
        }
        let data = index.iter().map(|&i| s.data()[i]).collect();
        let v = Tensor::new(shape.to_vec(), data)?;
        Ok(self.push(v, Op::Gather { src, index }))
    }

    /// Selects columns of a matrix.
    pub fn select_columns(&mut self, a: Var, cols: &[usize]) -> Result<Var> {
        let t = self.value(a);
        if t.shape().len() != 2 {
            return Err(shape_err("select_columns", format!("{:?}", t.shape())));
        }
        let (r, c) = (t.shape()[0], t.shape()[1]);
        let index = (0..r)
            .flat_map(|i| cols.iter().map(move |&j| i * c + j))
            .collect();
        self.gather(a, index, &[r, cols.len()])
    }

    /// Repeats a scalar (length-1) value into `shape`.
    pub fn broadcast_scalar(&mut self, a: Var, shape: &[usize]) -> Result<Var> {
        let n: usize = shape.iter().product();
        self.gather(a, vec![0; n], shape)
    }

    /// Repeats the elements of `a` as every row of an `(rows, len)` matrix.
    pub fn broadcast_rows(&mut self, a: Var, rows: usize) -> Result<Var> {
        let len = self.value(a).len();
        let index = (0..rows).flat_map(|_| 0..len).collect();
        self.gather(a, index, &[rows, len])
    }

    /// Side-by-side concatenation of two matrices with the same row count.
    pub fn concat_columns(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (
            self.value(a).shape().to_vec(),
            self.value(b).shape().to_vec(),
        );
        if sa.len() != 2 || sb.len() != 2 || sa[0] != sb[0] {
            return Err(shape_err("concat_columns", format!("{sa:?} and {sb:?}")));
        }
        let (ca, cb) = (sa[1], sb[1]);
        let place = |offset: usize, cols: usize| {
            let mut e = Tensor::zeros(&[cols, ca + cb]);
            for j in 0..cols {
                e.data_mut()[j * (ca + cb) + offset + j] = 1.0;
            }
            e
        };
        let ea = self.leaf(place(0, ca));
        let eb = self.leaf(place(ca, cb));
        let left = self.matmul(a, ea)?;
        let right = self.matmul(b, eb)?;
        self.add(left, right)
    }

    /// Sum of each row of a matrix, as an `(rows, 1)` column.
    pub fn row_sums(&mut self, a: Var) -> Result<Var> {
        let t = self.value(a);
        if t.shape().len() != 2 {
            return Err(shape_err("row_sums", format!("{:?}", t.shape())));
        }
        let ones = self.leaf(Tensor::filled(&[t.shape()[1], 1], 1.0));
        self.matmul(a, ones)
    }

    /// Fully connected layer: `x (batch, ..) -> (batch, outputs)` with
    /// parameters laid out as a row-major `inputs x outputs` weight matrix
    /// followed by `outputs` biases.
    pub fn dense(
        &mut self,
        x: Var,
        p: Var,
        inputs: usize,
        outputs: usize,
        bias: bool,
    ) -> Result<Var> {
        let xv = self.value(x);
        let pv = self.value(p);
        let batch = xv.rows();
        if xv.shape().len() < 2 || xv.row_len() != inputs {
            return Err(shape_err(
                "dense",
                format!("input {:?}, expected (batch, {inputs})", xv.shape()),
            ));
        }
        let want = inputs * outputs + if bias { outputs } else { 0 };
        if pv.len() != want {
            return Err(shape_err(
                "dense",
                format!("{} parameters, expected {want}", pv.len()),
            ));
        }
        let mut out = vec![0.0; batch * outputs];
        if bias {
            let b = &pv.data()[inputs * outputs..];
            for row in out.chunks_exact_mut(outputs) {
                row.copy_from_slice(b);
            }
        }
        matmul_into(
            xv.data(),
            &pv.data()[..inputs * outputs],
            &mut out,
            batch,
            inputs,
            outputs,
        );
        let v = Tensor::new(vec![batch, outputs], out)?;
        Ok(self.push(
            v,
            Op::Dense {
                x,
                p,
                inputs,
                outputs,
                bias,
            },
        ))
    }

    /// Valid (unpadded) 2-D convolution with square kernels and a bias per
    /// output channel. Input `(batch, in_ch, h, w)`; parameters
    /// `[out_ch][in_ch][k][k]` followed by `out_ch` biases.
    pub fn conv2d(&mut self, x: Var, p: Var, in_ch: usize, out_ch: usize, k: usize) -> Result<Var> {
        let xv = self.value(x);
        let pv = self.value(p);
        let s = xv.shape();
        if s.len() != 4 || s[1] != in_ch || s[2] < k || s[3] < k {
            return Err(shape_err(
                "conv2d",
                format!("input {s:?}, expected (batch, {in_ch}, >={k}, >={k})"),
            ));
        }
        if pv.len() != out_ch * in_ch * k * k + out_ch {
            return Err(shape_err("conv2d", format!("{} parameters", pv.len())));
        }
        let (batch, h, w) = (s[0], s[2], s[3]);
        let (oh, ow) = (h - k + 1, w - k + 1);
        let (xd, pd) = (xv.data(), pv.data());
        let bias = &pd[out_ch * in_ch * k * k..];
        let mut out = vec![0.0; batch * out_ch * oh * ow];
        for n in 0..batch {
            for oc in 0..out_ch {
                for oy in 0..oh {
                    for ox in 0..ow {
                        let mut acc = bias[oc];
                        for ic in 0..in_ch {
                            for ky in 0..k {
                                for kx in 0..k {
                                    let wv = pd[((oc * in_ch + ic) * k + ky) * k + kx];
                                    let iv = xd[((n * in_ch + ic) * h + oy + ky) * w + ox + kx];
                                    acc += wv * iv;
                                }
                            }
                        }
                        out[((n * out_ch + oc) * oh + oy) * ow + ox] = acc;
                    }
                }
            }
        }
        let v = Tensor::new(vec![batch, out_ch, oh, ow], out)?;
        Ok(self.push(
            v,
            Op::Conv2d {
                x,
                p,
                in_ch,
                out_ch,
                k,
            },
        ))
    }

    /// Non-overlapping max pooling over `size x size` windows; trailing rows
    /// and columns that do not fill a window are dropped. Ties go to the
    /// first cell in row-major order.
    pub fn maxpool2d(&mut self, x: Var, size: usize) -> Result<Var> {
        let xv = self.value(x);
        let s = xv.shape();
        if s.len() != 4 || s[2] < size || s[3] < size {
            return Err(shape_err("maxpool2d", format!("input {s:?}")));
        }
        let (batch, c, h, w) = (s[0], s[1], s[2], s[3]);
        let (oh, ow) = (h / size, w / size);
        let xd = xv.data();
        let mut out = Vec::with_capacity(batch * c * oh * ow);
        let mut argmax = Vec::with_capacity(out.capacity());
        for n in 0..batch {
            for ch in 0..c {
                let base = (n * c + ch) * h * w;
                for oy in 0..oh {
                    for ox in 0..ow {
                        let mut best = base + oy * size * w + ox * size;
                        for dy in 0..size {
                            for dx in 0..size {
                                let idx = base + (oy * size + dy) * w + ox * size + dx;
                                if xd[idx] > xd[best] {
                                    best = idx;
                                }
                            }
                        }
                        out.push(xd[best]);
                        argmax.push(best);
                    }
                }
            }
        }
        let v = Tensor::new(vec![batch, c, oh, ow], out)?;
        Ok(self.push(v, Op::MaxPool2d { x, argmax }))
    }

    /// Soft 2-D histogram: `(batch, m, 2) -> (batch, 1, bins, bins)`.
    pub fn soft_histogram(&mut self, points: Var, grid: BinGrid, bandwidth: f64) -> Result<Var> {
        let pv = self.value(points);
        let s = pv.shape();
        if s.len() != 3 || s[2] != 2 {
            return Err(shape_err(
                "soft_histogram",
                format!("input {s:?}, expected (batch, m, 2)"),
            ));
        }
        let b = grid.bins;
        let mut out = Vec::with_capacity(s[0] * b * b);
        for n in 0..s[0] {
            out.extend(histogram::soft_histogram(&grid, pv.row(n), bandwidth));
        }
        let v = Tensor::new(vec![s[0], 1, b, b], out)?;
        Ok(self.push(
            v,
            Op::SoftHistogram {
                points,
                grid,
                bandwidth,
            },
        ))
    }

    /// Mean binary cross-entropy of probabilities `pred` against `target`.
    pub fn bce(&mut self, pred: Var, target: &[f64]) -> Result<Var> {
        let p = self.value(pred);
        if p.len() != target.len() {
            return Err(shape_err(
                "bce",
                format!("{} predictions, {} targets", p.len(), target.len()),
            ));
        }
        let n = p.len().max(1) as f64;
        let loss = p
            .data()
            .iter()
            .zip(target)
            .map(|(&q, &t)| {
                let q = q.clamp(BCE_CLAMP, 1.0 - BCE_CLAMP);
                -(t * q.ln() + (1.0 - t) * (1.0 - q).ln())
            })
            .sum::<f64>()
            / n;
        Ok(self.push(
            Tensor::scalar(loss),
            Op::Bce {
                pred,
                target: target.to_vec(),
            },
        ))
    }

    /// Mean squared error of `pred` against `target`.
    pub fn mse(&mut self, pred: Var, target: &[f64]) -> Result<Var> {
        let p = self.value(pred);
        if p.len() != target.len() {
            return Err(shape_err(
                "mse",
                format!("{} predictions, {} targets", p.len(), target.len()),
            ));
        }
        let n = p.len().max(1) as f64;
        let loss = p
            .data()
            .iter()
            .zip(target)
            .map(|(&q, &t)| (q - t) * (q - t))
            .sum::<f64>()
            / n;
        Ok(self.push(
            Tensor::scalar(loss),
            Op::Mse {
                pred,
                target: target.to_vec(),
            },
        ))
    }

    /// Gradients of a scalar output w.r.t. every node.
    pub fn backward(&self, out: Var) -> Result<Gradients> {
        let v = self.value(out);
        if v.len() != 1 {
            return Err(shape_err(
                "backward",
                format!("output {:?} is not scalar", v.shape()),
            ));
        }
        self.backward_with(out, Tensor::filled(v.shape(), 1.0))
    }

    /// Gradients given an explicit adjoint for `out`.
    pub fn backward_with(&self, out: Var, seed: Tensor) -> Result<Gradients> {
        if seed.shape() != self.value(out).shape() {
            return Err(shape_err(
                "backward",
                format!(
                    "seed {:?} vs output {:?}",
                    seed.shape(),
                    self.value(out).shape()
                ),
            ));
        }
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[out.0] = Some(seed);

        for i in (0..=out.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            self.propagate(i, &g, &mut grads);
            grads[i] = Some(g);
        }
        Ok(Gradients { grads })
    }

    fn propagate(&self, i: usize, g: &Tensor, grads: &mut [Option<Tensor>]) {
        let node = &self.nodes[i];
        let gd = g.data();
        match &node.op {
            Op::Leaf => {}
            Op::Add(a, b) => {
                accumulate(grads, *a, self.value(*a), |d| add_into(d, gd));
                accumulate(grads, *b, self.value(*b), |d| add_into(d, gd));
            }
            Op::Sub(a, b) => {
                accumulate(grads, *a, self.value(*a), |d| add_into(d, gd));
                accumulate(grads, *b, self.value(*b), |d| {
                    d.iter_mut().zip(gd).for_each(|(x, &y)| *x -= y)
                });
            }
            Op::Mul(a, b) => {
                let (va, vb) = (self.value(*a).data(), self.value(*b).data());
                accumulate(grads, *a, self.value(*a), |d| {
                    for ((x, &gv), &bv) in d.iter_mut().zip(gd).zip(vb) {
                        *x += gv * bv;
                    }
                });
                accumulate(grads, *b, self.value(*b), |d| {
                    for ((x, &gv), &av) in d.iter_mut().zip(gd).zip(va) {
                        *x += gv * av;
                    }
                });
            }
            Op::Scale(a, c) => {
                accumulate(grads, *a, self.value(*a), |d| {
                    d.iter_mut().zip(gd).for_each(|(x, &y)| *x += c * y)
                });
            }
            Op::Offset(a) | Op::Reshape(a) => {
                accumulate(grads, *a, self.value(*a), |d| add_into(d, gd));
            }
            Op::Square(a) => {
                let va = self.value(*a).data();
                accumulate(grads, *a, self.value(*a), |d| {
                    for ((x, &gv), &av) in d.iter_mut().zip(gd).zip(va) {
                        *x += 2.0 * av * gv;
                    }
                });
            }
            Op::MatMul(a, b) => {
                let (ta, tb) = (self.value(*a), self.value(*b));
                let (n, k, m) = (ta.shape()[0], ta.shape()[1], tb.shape()[1]);
                let bt = tb.transpose();
                accumulate(grads, *a, ta, |d| matmul_into(gd, bt.data(), d, n, m, k));
                let at = ta.transpose();
                accumulate(grads, *b, tb, |d| matmul_into(at.data(), gd, d, k, n, m));
            }
            Op::Sigmoid(a) => {
                let y = node.value.data();
                accumulate(grads, *a, self.value(*a), |d| {
                    for ((x, &gv), &yv) in d.iter_mut().zip(gd).zip(y) {
                        *x += gv * yv * (1.0 - yv);
                    }
                });
            }
            Op::Tanh(a) => {
                let y = node.value.data();
                accumulate(grads, *a, self.value(*a), |d| {
                    for ((x, &gv), &yv) in d.iter_mut().zip(gd).zip(y) {
                        *x += gv * (1.0 - yv * yv);
                    }
                });
            }
            Op::Relu(a) => {
                let va = self.value(*a).data();
                accumulate(grads, *a, self.value(*a), |d| {
                    for ((x, &gv), &av) in d.iter_mut().zip(gd).zip(va) {
                        if av > 0.0 {
                            *x += gv;
                        }
                    }
                });
            }
            Op::Sum(a) => {
                let s = gd[0];
                accumulate(grads, *a, self.value(*a), |d| {
                    d.iter_mut().for_each(|x| *x += s)
                });
            }
            Op::Gather { src, index } => {
                accumulate(grads, *src, self.value(*src), |d| {
                    for (&j, &gv) in index.iter().zip(gd) {
                        d[j] += gv;
                    }
                });
            }
            Op::Dense {
                x,
                p,
                inputs,
                outputs,
                bias,
            } => {
                let (inputs, outputs) = (*inputs, *outputs);
                let (tx, tp) = (self.value(*x), self.value(*p));
                let batch = tx.rows();
                let w = &tp.data()[..inputs * outputs];
                let wt = Tensor::new(vec![inputs, outputs], w.to_vec())
                    .expect("dense weight shape")
                    .transpose();
                accumulate(grads, *x, tx, |d| {
                    matmul_into(gd, wt.data(), d, batch, outputs, inputs)
                });
                let xt = Tensor::new(vec![batch, inputs], tx.data().to_vec())
                    .expect("dense input shape")
                    .transpose();
                accumulate(grads, *p, tp, |d| {
                    matmul_into(
                        xt.data(),
                        gd,
                        &mut d[..inputs * outputs],
                        inputs,
                        batch,
                        outputs,
                    );
                    if *bias {
                        let db = &mut d[inputs * outputs..];
                        for row in gd.chunks_exact(outputs) {
                            add_into(db, row);
                        }
                    }
                });
            }
            Op::Conv2d {
                x,
                p,
                in_ch,
                out_ch,
                k,
            } => {
                let (in_ch, out_ch, k) = (*in_ch, *out_ch, *k);
                let (tx, tp) = (self.value(*x), self.value(*p));
                let s = tx.shape();
                let (batch, h, w) = (s[0], s[2], s[3]);
                let (oh, ow) = (h - k + 1, w - k + 1);
                let (xd, pd) = (tx.data(), tp.data());
                accumulate(grads, *x, tx, |dx| {
                    for n in 0..batch {
                        for oc in 0..out_ch {
                            for oy in 0..oh {
                                for ox in 0..ow {
                                    let gv = gd[((n * out_ch + oc) * oh + oy) * ow + ox];
                                    for ic in 0..in_ch {
                                        for ky in 0..k {
                                            for kx in 0..k {
                                                dx[((n * in_ch + ic) * h + oy + ky) * w
                                                    + ox
                                                    + kx] +=
                                                    gv * pd[((oc * in_ch + ic) * k + ky) * k + kx];
                                            }
                                        }
                                    }
                                }
                            }
                        }
                    }
                });
                accumulate(grads, *p, tp, |dp| {
                    let nw = out_ch * in_ch * k * k;
                    for n in 0..batch {
                        for oc in 0..out_ch {
                            for oy in 0..oh {
                                for ox in 0..ow {
                                    let gv = gd[((n * out_ch + oc) * oh + oy) * ow + ox];
                                    dp[nw + oc] += gv;
                                    for ic in 0..in_ch {
                                        for ky in 0..k {
                                            for kx in 0..k {
                                                dp[((oc * in_ch + ic) * k + ky) * k + kx] += gv
                                                    * xd[((n * in_ch + ic) * h + oy + ky) * w
                                                        + ox
                                                        + kx];
                                            }
                                        }
                                    }
                                }
                            }
                        }
                    }
                });
            }
            Op::MaxPool2d { x, argmax } => {
                accumulate(grads, *x, self.value(*x), |d| {
                    for (&j, &gv) in argmax.iter().zip(gd) {
                        d[j] += gv;
                    }
                });
            }
            Op::SoftHistogram {
                points,
                grid,
                bandwidth,
            } => {
                let tp = self.value(*points);
                let m2 = tp.row_len();
                let cells = grid.bins * grid.bins;
                accumulate(grads, *points, tp, |d| {
                    for n in 0..tp.rows() {
                        histogram::soft_histogram_backward(
                            grid,
                            tp.row(n),
                            *bandwidth,
                            &gd[n * cells..(n + 1) * cells],
                            &mut d[n * m2..(n + 1) * m2],
                        );
                    }
                });
            }
            Op::Bce { pred, target } => {
                let tp = self.value(*pred);
                let n = tp.len().max(1) as f64;
                let s = gd[0];
                accumulate(grads, *pred, tp, |d| {
                    for ((x, &q), &t) in d.iter_mut().zip(tp.data()).zip(target) {
                        let q = q.clamp(BCE_CLAMP, 1.0 - BCE_CLAMP);
                        *x += s * (q - t) / (q * (1.0 - q)) / n;
                    }
                });
            }
            Op::Mse { pred, target } => {
                let tp = self.value(*pred);
                let n = tp.len().max(1) as f64;
                let s = gd[0];
                accumulate(grads, *pred, tp, |d| {
                    for ((x, &q), &t) in d.iter_mut().zip(tp.data()).zip(target) {
                        *x += s * 2.0 * (q - t) / n;
                    }
                });
            }
        }
    }
}

fn add_into(d: &mut [f64], g: &[f64]) {
    d.iter_mut().zip(g).for_each(|(x, &y)| *x += y);
}

fn accumulate(grads: &mut [Option<Tensor>], v: Var, like: &Tensor, f: impl FnOnce(&mut [f64])) {
    let slot = grads[v.0].get_or_insert_with(|| Tensor::zeros(like.shape()));
    f(slot.data_mut());
}

/// Adjoints produced by [`Tape::backward`].
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    /// Gradient w.r.t. `v`; `None` when `v` does not influence the output.
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    /// Gradient w.r.t. `v`, zero-filled when `v` does not influence the output.
    pub fn wrt(&self, tape: &Tape, v: Var) -> Tensor {
        self.get(v)
            .cloned()
            .unwrap_or_else(|| Tensor::zeros(tape.value(v).shape()))
    }
}
