//! Reverse-mode differentiation over [`DenseArray`] values.
//!
//! Matrices are `[rows, cols]`; sequences for convolution are
//! `[batch, time, channels]`.

use super::array::{gemm, DenseArray};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

impl Var {
    pub(crate) fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    AddBias(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Sigmoid(Var),
    Tanh(Var),
    Relu(Var),
    SliceCols(Var, usize, usize),
    ConcatCols(Var, Var),
    /// Input `[B,T,Cin]`, kernel `[K,Cin,Cout]`, bias `[Cout]`.
    CausalConv {
        x: Var,
        w: Var,
        b: Var,
        dilation: usize,
    },
    LastStep(Var),
    /// Mean squared error against a constant target.
    Mse(Var, DenseArray),
}

#[derive(Debug, Default)]
pub struct Tape {
    values: Vec<DenseArray>,
    ops: Vec<Op>,
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl Tape {
    pub fn new() -> Self {
        Tape::default()
    }

    fn push(&mut self, value: DenseArray, op: Op) -> Var {
        self.values.push(value);
        self.ops.push(op);
        Var(self.values.len() - 1)
    }

    pub fn leaf(&mut self, value: DenseArray) -> Var {
        self.push(value, Op::Leaf)
    }

    pub fn value(&self, v: Var) -> &DenseArray {
        &self.values[v.0]
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let (av, bv) = (&self.values[a.0], &self.values[b.0]);
        let (m, k, n) = (av.rows(), av.cols(), bv.cols());
        assert_eq!(k, bv.rows(), "matmul inner dimensions");
        let mut out = DenseArray::zeros(vec![m, n]);
        gemm(m, k, n, av.data(), false, bv.data(), false, out.data_mut(), false);
        self.push(out, Op::MatMul(a, b))
    }

    pub fn add_bias(&mut self, a: Var, bias: Var) -> Var {
        let mut out = self.values[a.0].clone();
        let b = self.values[bias.0].data();
        let n = b.len();
        assert_eq!(out.cols(), n, "bias width");
        for row in out.data_mut().chunks_mut(n) {
            for (x, bb) in row.iter_mut().zip(b) {
                *x += bb;
            }
        }
        self.push(out, Op::AddBias(a, bias))
    }

    fn zip(&mut self, a: Var, b: Var, f: impl Fn(f64, f64) -> f64, op: Op) -> Var {
        let (av, bv) = (&self.values[a.0], &self.values[b.0]);
        assert_eq!(av.len(), bv.len(), "elementwise operand sizes");
        let data = av.data().iter().zip(bv.data()).map(|(x, y)| f(*x, *y)).collect();
        let out = DenseArray::new(av.shape().to_vec(), data).expect("same shape");
        self.push(out, op)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        self.zip(a, b, |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        self.zip(a, b, |x, y| x - y, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        self.zip(a, b, |x, y| x * y, Op::Mul(a, b))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let out = self.values[a.0].map(sigmoid);
        self.push(out, Op::Sigmoid(a))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let out = self.values[a.0].map(f64::tanh);
        self.push(out, Op::Tanh(a))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let out = self.values[a.0].map(|x| x.max(0.0));
        self.push(out, Op::Relu(a))
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, end: usize) -> Var {
        let av = &self.values[a.0];
        let cols = av.cols();
        let mut data = Vec::with_capacity(av.rows() * (end - start));
        for row in av.data().chunks(cols) {
            data.extend_from_slice(&row[start..end]);
        }
        let out = DenseArray::new(vec![av.rows(), end - start], data).expect("slice shape");
        self.push(out, Op::SliceCols(a, start, end))
    }

    pub fn concat_cols(&mut self, a: Var, b: Var) -> Var {
        let (av, bv) = (&self.values[a.0], &self.values[b.0]);
        assert_eq!(av.rows(), bv.rows(), "concat rows");
        let (ca, cb) = (av.cols(), bv.cols());
        let mut data = Vec::with_capacity(av.len() + bv.len());
        for (ra, rb) in av.data().chunks(ca).zip(bv.data().chunks(cb)) {
            data.extend_from_slice(ra);
            data.extend_from_slice(rb);
        }
        let out = DenseArray::new(vec![av.rows(), ca + cb], data).expect("concat shape");
        self.push(out, Op::ConcatCols(a, b))
    }

    /// Dilated causal convolution: output step `t` sees inputs at
    /// `t - (K-1-k) * dilation` for taps `k`, zero before the start.
    pub fn causal_conv(&mut self, x: Var, w: Var, b: Var, dilation: usize) -> Var {
        let (xv, wv, bv) = (&self.values[x.0], &self.values[w.0], &self.values[b.0]);
        let (batch, steps, cin) = (xv.shape()[0], xv.shape()[1], xv.shape()[2]);
        let (taps, wcin, cout) = (wv.shape()[0], wv.shape()[1], wv.shape()[2]);
        assert_eq!(cin, wcin, "conv input channels");
        let mut out = DenseArray::zeros(vec![batch, steps, cout]);
        {
            let o = out.data_mut();
            for row in o.chunks_mut(cout) {
                row.copy_from_slice(bv.data());
            }
            for k in 0..taps {
                let shift = (taps - 1 - k) * dilation;
                if shift >= steps {
                    continue;
                }
                let wk = &wv.data()[k * cin * cout..(k + 1) * cin * cout];
                let rows = steps - shift;
                for bi in 0..batch {
                    let xs = &xv.data()[bi * steps * cin..][..rows * cin];
                    let ys = &mut o[(bi * steps + shift) * cout..][..rows * cout];
                    gemm(rows, cin, cout, xs, false, wk, false, ys, true);
                }
            }
        }
        self.push(out, Op::CausalConv { x, w, b, dilation })
    }

    /// `[B,T,C] -> [B,C]` at the final step.
    pub fn last_step(&mut self, x: Var) -> Var {
        let xv = &self.values[x.0];
        let (batch, steps, c) = (xv.shape()[0], xv.shape()[1], xv.shape()[2]);
        let mut data = Vec::with_capacity(batch * c);
        for bi in 0..batch {
            data.extend_from_slice(&xv.data()[(bi * steps + steps - 1) * c..][..c]);
        }
        let out = DenseArray::new(vec![batch, c], data).expect("last step shape");
        self.push(out, Op::LastStep(x))
    }

    pub fn mse(&mut self, pred: Var, target: &DenseArray) -> Var {
        let p = &self.values[pred.0];
        assert_eq!(p.len(), target.len(), "target size");
        let n = p.len() as f64;
        let loss = p
            .data()
            .iter()
            .zip(target.data())
            .map(|(a, b)| (a - b).powi(2))
            .sum::<f64>()
            / n;
        let out = DenseArray::new(vec![1], vec![loss]).expect("scalar");
        self.push(out, Op::Mse(pred, target.clone()))
    }

    /// Gradients of the scalar `loss` with respect to every node.
    pub fn backward(&self, loss: Var) -> Vec<Option<DenseArray>> {
        let mut grads: Vec<Option<DenseArray>> = vec![None; self.values.len()];
        grads[loss.0] = Some(DenseArray::new(vec![1], vec![1.0]).expect("scalar"));
        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            self.propagate(i, &g, &mut grads);
            grads[i] = Some(g);
        }
        grads
    }

    fn propagate(&self, i: usize, g: &DenseArray, grads: &mut [Option<DenseArray>]) {
        let mut acc = |v: Var, d: DenseArray| match &mut grads[v.0] {
            Some(existing) => existing.add_assign(&d),
            slot => *slot = Some(d),
        };
        let val = |v: Var| &self.values[v.0];
        match &self.ops[i] {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (av, bv) = (val(*a), val(*b));
                let (m, k, n) = (av.rows(), av.cols(), bv.cols());
                let mut da = DenseArray::zeros(vec![m, k]);
                gemm(m, n, k, g.data(), false, bv.data(), true, da.data_mut(), false);
                let mut db = DenseArray::zeros(vec![k, n]);
                gemm(k, m, n, av.data(), true, g.data(), false, db.data_mut(), false);
                acc(*a, da);
                acc(*b, db);
            }
            Op::AddBias(a, b) => {
                let n = val(*b).len();
                let mut db = vec![0.0; n];
                for row in g.data().chunks(n) {
                    for (d, x) in db.iter_mut().zip(row) {
                        *d += x;
                    }
                }
                acc(*a, g.clone());
                acc(*b, DenseArray::new(val(*b).shape().to_vec(), db).expect("bias"));
            }
            Op::Add(a, b) => {
                acc(*a, g.clone());
                acc(*b, g.clone());
            }
            Op::Sub(a, b) => {
                acc(*a, g.clone());
                acc(*b, g.map(|x| -x));
            }
            Op::Mul(a, b) => {
                let (av, bv) = (val(*a), val(*b));
                let da = g.data().iter().zip(bv.data()).map(|(x, y)| x * y).collect();
                let db = g.data().iter().zip(av.data()).map(|(x, y)| x * y).collect();
                acc(*a, DenseArray::new(av.shape().to_vec(), da).expect("shape"));
                acc(*b, DenseArray::new(bv.shape().to_vec(), db).expect("shape"));
            }
            Op::Sigmoid(a) => {
                let y = &self.values[i];
                let d = g.data().iter().zip(y.data()).map(|(x, s)| x * s * (1.0 - s)).collect();
                acc(*a, DenseArray::new(y.shape().to_vec(), d).expect("shape"));
            }
            Op::Tanh(a) => {
                let y = &self.values[i];
                let d = g.data().iter().zip(y.data()).map(|(x, t)| x * (1.0 - t * t)).collect();
                acc(*a, DenseArray::new(y.shape().to_vec(), d).expect("shape"));
            }
            Op::Relu(a) => {
                let av = val(*a);
                let d = g
                    .data()
                    .iter()
                    .zip(av.data())
                    .map(|(x, v)| if *v > 0.0 { *x } else { 0.0 })
                    .collect();
                acc(*a, DenseArray::new(av.shape().to_vec(), d).expect("shape"));
            }
            Op::SliceCols(a, start, end) => {
                let av = val(*a);
                let cols = av.cols();
                let width = end - start;
                let mut d = DenseArray::zeros(av.shape().to_vec());
                for (row, grow) in d.data_mut().chunks_mut(cols).zip(g.data().chunks(width)) {
                    row[*start..*end].copy_from_slice(grow);
                }
                acc(*a, d);
            }
            Op::ConcatCols(a, b) => {
                let (av, bv) = (val(*a), val(*b));
                let (ca, cb) = (av.cols(), bv.cols());
                let mut da = Vec::with_capacity(av.len());
                let mut db = Vec::with_capacity(bv.len());
                for row in g.data().chunks(ca + cb) {
                    da.extend_from_slice(&row[..ca]);
                    db.extend_from_slice(&row[ca..]);
                }
                acc(*a, DenseArray::new(av.shape().to_vec(), da).expect("shape"));
                acc(*b, DenseArray::new(bv.shape().to_vec(), db).expect("shape"));
            }
            Op::CausalConv { x, w, b, dilation } => {
                let (xv, wv) = (val(*x), val(*w));
                let (batch, steps, cin) = (xv.shape()[0], xv.shape()[1], xv.shape()[2]);
                let (taps, cout) = (wv.shape()[0], wv.shape()[2]);
                let mut dx = DenseArray::zeros(xv.shape().to_vec());
                let mut dw = DenseArray::zeros(wv.shape().to_vec());
                let mut db = vec![0.0; cout];
                for row in g.data().chunks(cout) {
                    for (d, v) in db.iter_mut().zip(row) {
                        *d += v;
                    }
                }
                for k in 0..taps {
                    let shift = (taps - 1 - k) * dilation;
                    if shift >= steps {
                        continue;
                    }
                    let rows = steps - shift;
                    let wk = &wv.data()[k * cin * cout..(k + 1) * cin * cout];
                    for bi in 0..batch {
                        let gs = &g.data()[(bi * steps + shift) * cout..][..rows * cout];
                        let xs = &xv.data()[bi * steps * cin..][..rows * cin];
                        let dxs = &mut dx.data_mut()[bi * steps * cin..][..rows * cin];
                        gemm(rows, cout, cin, gs, false, wk, true, dxs, true);
                        let dwk = &mut dw.data_mut()[k * cin * cout..][..cin * cout];
                        gemm(cin, rows, cout, xs, true, gs, false, dwk, true);
                    }
                }
                acc(*x, dx);
                acc(*w, dw);
                acc(*b, DenseArray::new(val(*b).shape().to_vec(), db).expect("bias"));
            }
            Op::LastStep(x) => {
                let xv = val(*x);
                let (batch, steps, c) = (xv.shape()[0], xv.shape()[1], xv.shape()[2]);
                let mut d = DenseArray::zeros(xv.shape().to_vec());
                for bi in 0..batch {
                    d.data_mut()[(bi * steps + steps - 1) * c..][..c]
                        .copy_from_slice(&g.data()[bi * c..][..c]);
                }
                acc(*x, d);
            }
            Op::Mse(p, target) => {
                let pv = val(*p);
                let scale = 2.0 * g.data()[0] / pv.len() as f64;
                let d = pv
                    .data()
                    .iter()
                    .zip(target.data())
                    .map(|(a, b)| scale * (a - b))
                    .collect();
                acc(*p, DenseArray::new(pv.shape().to_vec(), d).expect("shape"));
            }
        }
    }
}
