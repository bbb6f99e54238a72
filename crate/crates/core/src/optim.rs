//! Derivative-free minimization with the Nelder–Mead simplex method.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy)]
pub struct NelderMead {
    pub max_iter: usize,
    /// Converged when the simplex's objective spread is below
    /// `f_tol * (1 + |f_best|)` ...
    pub f_tol: f64,
    /// ... and every vertex is within `x_tol * (1 + |x|)` of the best one.
    pub x_tol: f64,
}

impl Default for NelderMead {
    fn default() -> Self {
        NelderMead {
            max_iter: 2000,
            f_tol: 1e-12,
            x_tol: 1e-7,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
}

impl NelderMead {
    /// Minimizes `f` from `x0` with an initial simplex of axis steps `steps`.
    /// The simplex is restarted once around the first optimum found to guard
    /// against premature collapse. Non-finite objective values count as +inf.
    pub fn minimize(
        &self,
        mut f: impl FnMut(&[f64]) -> f64,
        x0: &[f64],
        steps: &[f64],
    ) -> Result<Minimum> {
        assert_eq!(x0.len(), steps.len(), "one step per coordinate");
        let mut eval = |x: &[f64]| {
            let v = f(x);
            if v.is_finite() {
                v
            } else {
                f64::INFINITY
            }
        };
        if x0.is_empty() {
            return Ok(Minimum {
                x: Vec::new(),
                value: eval(x0),
                iterations: 0,
            });
        }
        let first = self.run(&mut eval, x0, steps, self.max_iter)?;
        let left = self.max_iter - first.iterations;
        let restart_steps: Vec<f64> = steps.iter().map(|s| s * 0.1).collect();
        match self.run(&mut eval, &first.x, &restart_steps, left) {
            Ok(second) if second.value <= first.value => Ok(Minimum {
                iterations: first.iterations + second.iterations,
                ..second
            }),
            Ok(_) => Ok(first),
            Err(Error::NotConverged { objective, .. }) => Err(Error::NotConverged {
                iterations: self.max_iter,
                objective: objective.min(first.value),
            }),
            Err(e) => Err(e),
        }
    }

    fn run(
        &self,
        eval: &mut impl FnMut(&[f64]) -> f64,
        x0: &[f64],
        steps: &[f64],
        budget: usize,
    ) -> Result<Minimum> {
        let n = x0.len();
        let nf = n as f64;
        // dimension-adaptive coefficients (Gao & Han)
        let alpha = 1.0;
        let gamma = 1.0 + 2.0 / nf;
        let rho = 0.75 - 1.0 / (2.0 * nf);
        let sigma = 1.0 - 1.0 / nf;

        let mut simplex: Vec<Vec<f64>> = Vec::with_capacity(n + 1);
        simplex.push(x0.to_vec());
        for i in 0..n {
            let mut v = x0.to_vec();
            v[i] += steps[i];
            simplex.push(v);
        }
        let mut values: Vec<f64> = simplex.iter().map(|x| eval(x)).collect();

        let mut iterations = 0;
        loop {
            // order vertices, best first; index tie-break keeps this deterministic
            let mut order: Vec<usize> = (0..=n).collect();
            order.sort_by(|&a, &b| values[a].total_cmp(&values[b]).then(a.cmp(&b)));
            simplex = order.iter().map(|&i| simplex[i].clone()).collect();
            values = order.iter().map(|&i| values[i]).collect();

            if self.converged(&simplex, &values) {
                return Ok(Minimum {
                    x: simplex[0].clone(),
                    value: values[0],
                    iterations,
                });
            }
            if iterations >= budget {
                return Err(Error::NotConverged {
                    iterations,
                    objective: values[0],
                });
            }
            iterations += 1;

            let mut centroid = vec![0.0; n];
            for v in &simplex[..n] {
                for (c, x) in centroid.iter_mut().zip(v) {
                    *c += x / nf;
                }
            }
            let towards = |coef: f64| -> Vec<f64> {
                centroid
                    .iter()
                    .zip(&simplex[n])
                    .map(|(c, w)| c + coef * (c - w))
                    .collect()
            };

            let reflected = towards(alpha);
            let f_r = eval(&reflected);
            if f_r < values[0] {
                let expanded = towards(alpha * gamma);
                let f_e = eval(&expanded);
                if f_e < f_r {
                    simplex[n] = expanded;
                    values[n] = f_e;
                } else {
                    simplex[n] = reflected;
                    values[n] = f_r;
                }
                continue;
            }
            if f_r < values[n - 1] {
                simplex[n] = reflected;
                values[n] = f_r;
                continue;
            }
            let (contracted, f_c) = if f_r < values[n] {
                let c = towards(alpha * rho);
                let fc = eval(&c);
                (c, fc)
            } else {
                let c = towards(-rho);
                let fc = eval(&c);
                (c, fc)
            };
            if f_c < values[n].min(f_r) {
                simplex[n] = contracted;
                values[n] = f_c;
                continue;
            }
            // shrink towards the best vertex
            let best = simplex[0].clone();
            for i in 1..=n {
                for (x, b) in simplex[i].iter_mut().zip(&best) {
                    *x = b + sigma * (*x - b);
                }
                values[i] = eval(&simplex[i]);
            }
        }
    }

    fn converged(&self, simplex: &[Vec<f64>], values: &[f64]) -> bool {
        let best = values[0];
        let worst = values[values.len() - 1];
        if !best.is_finite() || worst - best > self.f_tol * (1.0 + best.abs()) {
            return false;
        }
        simplex[1..].iter().all(|v| {
            v.iter()
                .zip(&simplex[0])
                .all(|(a, b)| (a - b).abs() <= self.x_tol * (1.0 + b.abs()))
        })
    }
}
