//! Projected BFGS for smooth minimization over a box.

use nalgebra::{DMatrix, DVector};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuasiNewtonConfig {
    pub max_iter: usize,
    /// Stop when the infinity norm of the projected gradient falls below this.
    pub grad_tol: f64,
}

impl Default for QuasiNewtonConfig {
    fn default() -> Self {
        Self {
            max_iter: 500,
            grad_tol: 1e-8,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    Gradient,
    /// No further decrease is representable in floating point.
    Stagnation,
    IterationCap,
    /// The objective is `+inf` at the starting point.
    InfeasibleStart,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
    pub evaluations: usize,
    pub termination: Termination,
}

impl Minimum {
    pub fn converged(&self) -> bool {
        matches!(self.termination, Termination::Gradient | Termination::Stagnation)
    }
}

fn project(x: &mut [f64], lower: &[f64], upper: &[f64]) {
    for ((v, &l), &u) in x.iter_mut().zip(lower).zip(upper) {
        *v = v.clamp(l, u);
    }
}

/// Minimizes `f` over `[lower, upper]` from `x0`.
///
/// `f` writes the gradient into its second argument and returns the value;
/// `+inf` marks points outside the effective domain and is handled by
/// backtracking.
pub fn minimize_box<F>(mut f: F, x0: &[f64], lower: &[f64], upper: &[f64], cfg: &QuasiNewtonConfig) -> Minimum
where
    F: FnMut(&[f64], &mut [f64]) -> f64,
{
    let n = x0.len();
    let mut x = x0.to_vec();
    project(&mut x, lower, upper);
    let mut g = vec![0.0; n];
    let mut fx = f(&x, &mut g);
    let mut evaluations = 1;
    if n == 0 || !fx.is_finite() {
        return Minimum {
            x,
            value: fx,
            iterations: 0,
            evaluations,
            termination: if fx.is_finite() { Termination::Gradient } else { Termination::InfeasibleStart },
        };
    }

    let mut h = DMatrix::<f64>::identity(n, n);
    let mut h_fresh = true;
    let mut prev_free: Vec<bool> = Vec::new();
    let mut xn = vec![0.0; n];
    let mut gn = vec![0.0; n];
    let mut stalls = 0;

    for iter in 1..=cfg.max_iter {
        let free: Vec<bool> = (0..n)
            .map(|i| !((x[i] <= lower[i] && g[i] > 0.0) || (x[i] >= upper[i] && g[i] < 0.0)))
            .collect();
        let pg = (0..n).filter(|&i| free[i]).map(|i| g[i].abs()).fold(0.0, f64::max);
        if pg <= cfg.grad_tol {
            return Minimum { x, value: fx, iterations: iter - 1, evaluations, termination: Termination::Gradient };
        }
        if free != prev_free {
            h = DMatrix::identity(n, n);
            h_fresh = true;
            prev_free = free.clone();
        }

        let gf = DVector::from_iterator(n, (0..n).map(|i| if free[i] { g[i] } else { 0.0 }));
        let mut d: Vec<f64> = (&h * &gf).iter().enumerate().map(|(i, v)| if free[i] { -v } else { 0.0 }).collect();
        let slope: f64 = d.iter().zip(&g).map(|(a, b)| a * b).sum();
        if !(slope < 0.0) {
            h = DMatrix::identity(n, n);
            h_fresh = true;
            d = gf.iter().map(|v| -v).collect();
        }
        if h_fresh {
            // unit-free first step: move at most one unit in any coordinate
            let dmax = d.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            if dmax > 1.0 {
                d.iter_mut().for_each(|v| *v /= dmax);
            }
        }

        let mut step = 1.0;
        let mut accepted = false;
        for _ in 0..80 {
            for i in 0..n {
                xn[i] = x[i] + step * d[i];
            }
            project(&mut xn, lower, upper);
            let moved: f64 = xn.iter().zip(&x).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            if moved == 0.0 {
                break;
            }
            let fnew = f(&xn, &mut gn);
            evaluations += 1;
            let decrease: f64 = g.iter().zip(xn.iter().zip(&x)).map(|(gi, (a, b))| gi * (a - b)).sum();
            if fnew.is_finite() && fnew <= fx + 1e-4 * decrease.min(0.0) {
                accepted = true;
                let improvement = fx - fnew;
                let s = DVector::from_iterator(n, xn.iter().zip(&x).map(|(a, b)| a - b));
                let y = DVector::from_iterator(n, gn.iter().zip(&g).map(|(a, b)| a - b));
                let sy = s.dot(&y);
                if sy > 1e-12 * s.norm() * y.norm() && sy > 0.0 {
                    if h_fresh {
                        h *= sy / y.norm_squared();
                        h_fresh = false;
                    }
                    let rho = 1.0 / sy;
                    let hy = &h * &y;
                    let yhy = y.dot(&hy);
                    // BFGS inverse update
                    h += (&s * s.transpose()) * (rho * (1.0 + rho * yhy))
                        - (&hy * s.transpose() + &s * hy.transpose()) * rho;
                }
                x.copy_from_slice(&xn);
                g.copy_from_slice(&gn);
                fx = fnew;
                if improvement <= 1e-15 * fx.abs().max(1.0) {
                    stalls += 1;
                } else {
                    stalls = 0;
                }
                break;
            }
            step *= 0.5;
        }

        if !accepted {
            if !h_fresh {
                h = DMatrix::identity(n, n);
                h_fresh = true;
                continue;
            }
            return Minimum { x, value: fx, iterations: iter, evaluations, termination: Termination::Stagnation };
        }
        if stalls >= 3 {
            return Minimum { x, value: fx, iterations: iter, evaluations, termination: Termination::Stagnation };
        }
    }
    Minimum {
        x,
        value: fx,
        iterations: cfg.max_iter,
        evaluations,
        termination: Termination::IterationCap,
    }
}

/// Halton point `index` (1-based is customary) in `[0,1)^dim`.
pub fn halton(index: usize, dim: usize) -> Vec<f64> {
    const PRIMES: [usize; 32] = [
        2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53, 59, 61, 67, 71, 73, 79, 83, 89, 97, 101,
        103, 107, 109, 113, 127, 131,
    ];
    (0..dim)
        .map(|k| {
            let base = PRIMES[k % PRIMES.len()];
            let mut f = 1.0;
            let mut r = 0.0;
            let mut i = index;
            while i > 0 {
                f /= base as f64;
                r += f * (i % base) as f64;
                i /= base;
            }
            r
        })
        .collect()
}
