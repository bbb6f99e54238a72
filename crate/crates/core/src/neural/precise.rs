//! Double-double reference forward passes for gradient checking.
//!
//! Central differences at h = 1e-5 lose about 1e-11 absolute to f64 rounding
//! in the loss, which swamps parameters whose true gradient is near 1e-8.
//! Re-running the forward pass with ~106-bit significands removes that floor
//! and independently re-derives each architecture's forward computation.

use std::ops::{Add, Mul, Neg, Sub};

use super::{Batch, DenseArray};

/// Unevaluated sum `hi + lo` with `|lo| <= ulp(hi) / 2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dd {
    hi: f64,
    lo: f64,
}

fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    (s, (a - (s - bb)) + (b - bb))
}

fn quick_two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    (s, b - (s - a))
}

impl Dd {
    pub const ZERO: Dd = Dd { hi: 0.0, lo: 0.0 };
    pub const ONE: Dd = Dd { hi: 1.0, lo: 0.0 };
    const LN2: Dd = Dd {
        hi: std::f64::consts::LN_2,
        lo: 2.319_046_813_846_299_6e-17,
    };

    pub fn from(v: f64) -> Dd {
        Dd { hi: v, lo: 0.0 }
    }

    pub fn to_f64(self) -> f64 {
        self.hi + self.lo
    }

    fn renorm(hi: f64, lo: f64) -> Dd {
        let (hi, lo) = quick_two_sum(hi, lo);
        Dd { hi, lo }
    }

    fn mul_f64(self, b: f64) -> Dd {
        let p = self.hi * b;
        let e = self.hi.mul_add(b, -p) + self.lo * b;
        Dd::renorm(p, e)
    }

    pub fn div(self, y: Dd) -> Dd {
        let q1 = self.hi / y.hi;
        let r = self - y.mul_f64(q1);
        let q2 = r.hi / y.hi;
        let r = r - y.mul_f64(q2);
        let q3 = r.hi / y.hi;
        let (q1, q2) = quick_two_sum(q1, q2);
        Dd { hi: q1, lo: q2 } + Dd::from(q3)
    }

    pub fn exp(self) -> Dd {
        if self.hi > 709.0 {
            return Dd::from(f64::INFINITY);
        }
        if self.hi < -745.0 {
            return Dd::ZERO;
        }
        // x = k ln2 + r, then exp(r) = (exp(r / 2^9))^(2^9)
        let k = (self.hi / std::f64::consts::LN_2).round();
        let r = (self - Dd::LN2.mul_f64(k)).mul_f64(1.0 / 512.0);
        let mut term = Dd::ONE;
        let mut sum = Dd::ONE;
        for n in 1..=14 {
            term = (term * r).mul_f64(1.0 / n as f64);
            sum = sum + term;
        }
        for _ in 0..9 {
            sum = sum * sum;
        }
        let scale = 2f64.powi(k as i32);
        Dd {
            hi: sum.hi * scale,
            lo: sum.lo * scale,
        }
    }

    pub fn tanh(self) -> Dd {
        // (1 - e^{-2|x|}) / (1 + e^{-2|x|}) never overflows
        let neg = self.hi < 0.0;
        let a = if neg { -self } else { self };
        let t = a.mul_f64(-2.0).exp();
        let v = (Dd::ONE - t).div(Dd::ONE + t);
        if neg {
            -v
        } else {
            v
        }
    }

    pub fn sigmoid(self) -> Dd {
        if self.hi >= 0.0 {
            Dd::ONE.div(Dd::ONE + (-self).exp())
        } else {
            let e = self.exp();
            e.div(Dd::ONE + e)
        }
    }

    pub fn relu(self) -> Dd {
        if self.hi > 0.0 {
            self
        } else {
            Dd::ZERO
        }
    }
}

impl Add for Dd {
    type Output = Dd;
    fn add(self, y: Dd) -> Dd {
        let (s1, s2) = two_sum(self.hi, y.hi);
        let (t1, t2) = two_sum(self.lo, y.lo);
        let (s1, s2) = quick_two_sum(s1, s2 + t1);
        Dd::renorm(s1, s2 + t2)
    }
}

impl Neg for Dd {
    type Output = Dd;
    fn neg(self) -> Dd {
        Dd {
            hi: -self.hi,
            lo: -self.lo,
        }
    }
}

impl Sub for Dd {
    type Output = Dd;
    fn sub(self, y: Dd) -> Dd {
        self + (-y)
    }
}

impl Mul for Dd {
    type Output = Dd;
    fn mul(self, y: Dd) -> Dd {
        let p = self.hi * y.hi;
        let e = self.hi.mul_add(y.hi, -p) + (self.hi * y.lo + self.lo * y.hi);
        Dd::renorm(p, e)
    }
}

/// Parameters in double-double, with one entry optionally shifted.
pub(crate) fn lift(params: &[DenseArray], shift: Option<(usize, usize, f64)>) -> Vec<Vec<Dd>> {
    let mut out: Vec<Vec<Dd>> = params
        .iter()
        .map(|p| p.data().iter().map(|v| Dd::from(*v)).collect())
        .collect();
    if let Some((p, j, delta)) = shift {
        out[p][j] = out[p][j] + Dd::from(delta);
    }
    out
}

fn mse(pred: &[Dd], batch: &Batch) -> Dd {
    let mut acc = Dd::ZERO;
    for (p, t) in pred.iter().zip(batch.targets.data()) {
        let r = *p - Dd::from(*t);
        acc = acc + r * r;
    }
    acc.mul_f64(1.0 / pred.len() as f64)
}

/// Same computation as the LSTM's taped forward pass.
pub(crate) fn lstm_loss(params: &[Vec<Dd>], hidden: usize, batch: &Batch) -> Dd {
    let shape = batch.inputs.shape();
    let (rows, steps, width) = (shape[0], shape[1], shape[2]);
    let (w, b, head_w, head_b) = (&params[0], &params[1], &params[2], &params[3]);
    let gates = 4 * hidden;
    let mut preds = Vec::with_capacity(rows);
    for r in 0..rows {
        let mut h = vec![Dd::ZERO; hidden];
        let mut c = vec![Dd::ZERO; hidden];
        for t in 0..steps {
            let x = &batch.inputs.data()[(r * steps + t) * width..][..width];
            let mut z: Vec<Dd> = b.clone();
            for (i, xi) in x.iter().enumerate() {
                if *xi == 0.0 {
                    continue;
                }
                let xi = Dd::from(*xi);
                for (g, zg) in z.iter_mut().enumerate() {
                    *zg = *zg + xi * w[i * gates + g];
                }
            }
            for (i, hi) in h.iter().enumerate() {
                for (g, zg) in z.iter_mut().enumerate() {
                    *zg = *zg + *hi * w[(width + i) * gates + g];
                }
            }
            for u in 0..hidden {
                let ig = z[u].sigmoid();
                let fg = z[hidden + u].sigmoid();
                let og = z[2 * hidden + u].sigmoid();
                let cand = z[3 * hidden + u].tanh();
                c[u] = fg * c[u] + ig * cand;
                h[u] = og * c[u].tanh();
            }
        }
        let mut y = head_b[0];
        for (u, hu) in h.iter().enumerate() {
            y = y + *hu * head_w[u];
        }
        preds.push(y);
    }
    mse(&preds, batch)
}

/// `[T, Cin] -> [T, Cout]` dilated causal convolution of one sequence.
fn conv(x: &[Vec<Dd>], w: &[Dd], b: &[Dd], taps: usize, dilation: usize, cout: usize) -> Vec<Vec<Dd>> {
    let cin = x[0].len();
    (0..x.len())
        .map(|t| {
            let mut out = b.to_vec();
            for k in 0..taps {
                let back = (taps - 1 - k) * dilation;
                if t < back {
                    continue;
                }
                for (ci, xv) in x[t - back].iter().enumerate() {
                    for (o, ov) in out.iter_mut().enumerate() {
                        *ov = *ov + *xv * w[(k * cin + ci) * cout + o];
                    }
                }
            }
            out
        })
        .collect()
}

/// Same computation as the TCN's taped forward pass.
pub(crate) fn tcn_loss(
    params: &[Vec<Dd>],
    kernel: usize,
    dilations: &[usize],
    channels: usize,
    batch: &Batch,
) -> Dd {
    let shape = batch.inputs.shape();
    let (rows, steps, width) = (shape[0], shape[1], shape[2]);
    let mut preds = Vec::with_capacity(rows);
    for r in 0..rows {
        let mut x: Vec<Vec<Dd>> = (0..steps)
            .map(|t| {
                batch.inputs.data()[(r * steps + t) * width..][..width]
                    .iter()
                    .map(|v| Dd::from(*v))
                    .collect()
            })
            .collect();
        let mut k = 0;
        for &d in dilations {
            let act: Vec<Vec<Dd>> = conv(&x, &params[k], &params[k + 1], kernel, d, channels)
                .into_iter()
                .map(|row| row.into_iter().map(Dd::relu).collect())
                .collect();
            k += 2;
            let residual = if x[0].len() != channels {
                let p = conv(&x, &params[k], &params[k + 1], 1, 1, channels);
                k += 2;
                p
            } else {
                x
            };
            x = act
                .into_iter()
                .zip(residual)
                .map(|(a, b)| a.into_iter().zip(b).map(|(u, v)| u + v).collect())
                .collect();
        }
        let last = &x[steps - 1];
        let mut y = params[k + 1][0];
        for (c, v) in last.iter().enumerate() {
            y = y + *v * params[k][c];
        }
        preds.push(y);
    }
    mse(&preds, batch)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: Dd, b: f64, tol: f64) {
        assert!((a.to_f64() - b).abs() <= tol * b.abs().max(1e-300), "{a:?} vs {b}");
    }

    #[test]
    fn elementary_functions_match_f64() {
        for x in [-30.0, -3.2, -0.5, -1e-7, 0.0, 1e-9, 0.3, 1.0, 7.5, 40.0] {
            close(Dd::from(x).exp(), f64::exp(x), 4e-16);
            close(Dd::from(x).tanh(), f64::tanh(x), 4e-16);
            let s = 1.0 / (1.0 + (-x).exp());
            close(Dd::from(x).sigmoid(), s, 4e-16);
        }
    }

    #[test]
    fn extra_precision_is_real() {
        // (1 + 2^-60)^2 - 1 is representable only with the low word
        let tiny = 2f64.powi(-60);
        let x = Dd::ONE + Dd::from(tiny);
        let sq = x * x - Dd::ONE;
        close(sq, 2.0 * tiny, 1e-15);
        let third = Dd::ONE.div(Dd::from(3.0));
        let back = third * Dd::from(3.0) - Dd::ONE;
        assert!(back.to_f64().abs() < 1e-31);
        // exp(ln 2) = 2 to double-double accuracy
        let two = Dd::LN2.exp() - Dd::from(2.0);
        assert!(two.to_f64().abs() < 1e-30);
    }
}
