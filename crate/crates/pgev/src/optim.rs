//! Unconstrained numerical optimization: BFGS with backtracking line search
//! for smooth likelihoods with analytic gradients, and Nelder-Mead for the
//! small derivative-free variogram objectives. Both minimize; callers negate
//! log-likelihoods.
//!
//! Objectives may return non-finite values outside their support; the line
//! search treats those as failed steps and shrinks, which is how support
//! constraints are enforced without explicit bounds.

/// Outcome of a minimization run.
#[derive(Debug, Clone)]
pub struct OptimResult {
    pub x: Vec<f64>,
    pub value: f64,
    /// Gradient infinity norm at `x` (BFGS only; NaN for Nelder-Mead).
    pub grad_norm: f64,
    pub iterations: usize,
    /// True when the gradient tolerance (BFGS) or simplex tolerance
    /// (Nelder-Mead) was met before the iteration cap.
    pub converged: bool,
}

pub struct BfgsOptions {
    /// Gradient tolerance, applied relative to the objective scale:
    /// convergence requires inf-norm(g) <= grad_tol * max(1, |f|). The
    /// scaling keeps the criterion attainable in double precision for
    /// objectives that are large sums (a likelihood over thousands of
    /// observations cannot drive an absolute gradient below its own
    /// floating-point noise floor, which grows with |f|).
    pub grad_tol: f64,
    pub max_iters: usize,
}

impl Default for BfgsOptions {
    fn default() -> Self {
        BfgsOptions {
            grad_tol: 1e-6,
            max_iters: 500,
        }
    }
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

/// BFGS quasi-Newton minimization with an Armijo backtracking line search.
/// Convergence is declared when the gradient infinity norm drops to
/// `grad_tol * max(1, |f|)`; hitting the iteration cap or a stalled line
/// search leaves `converged` false unless the final gradient already passes
/// the test.
pub fn bfgs<F, G>(f: F, grad: G, x0: &[f64], opts: &BfgsOptions) -> OptimResult
where
    F: Fn(&[f64]) -> f64,
    G: Fn(&[f64]) -> Vec<f64>,
{
    let n = x0.len();
    let mut x = x0.to_vec();
    let mut fx = f(&x);
    if !fx.is_finite() {
        return OptimResult {
            x,
            value: fx,
            grad_norm: f64::INFINITY,
            iterations: 0,
            converged: false,
        };
    }
    let mut g = grad(&x);
    // inverse Hessian estimate, dense row-major
    let mut h = vec![0.0; n * n];
    for i in 0..n {
        h[i * n + i] = 1.0;
    }
    let mut iterations = 0;
    let mut first_step = true;
    while iterations < opts.max_iters {
        if inf_norm(&g) <= opts.grad_tol * fx.abs().max(1.0) {
            return OptimResult {
                x,
                value: fx,
                grad_norm: inf_norm(&g),
                iterations,
                converged: true,
            };
        }
        iterations += 1;
        // d = -H g
        let mut d = vec![0.0; n];
        for i in 0..n {
            let mut acc = 0.0;
            for j in 0..n {
                acc -= h[i * n + j] * g[j];
            }
            d[i] = acc;
        }
        let mut slope: f64 = d.iter().zip(&g).map(|(di, gi)| di * gi).sum();
        if slope >= 0.0 {
            // H lost positive definiteness; restart from steepest descent
            for i in 0..n {
                for j in 0..n {
                    h[i * n + j] = if i == j { 1.0 } else { 0.0 };
                }
            }
            for i in 0..n {
                d[i] = -g[i];
            }
            slope = -g.iter().map(|gi| gi * gi).sum::<f64>();
            if slope == 0.0 {
                break;
            }
        }
        // backtracking Armijo: non-finite trial values shrink the step too
        let mut step = 1.0;
        let mut x_new = vec![0.0; n];
        let mut f_new = f64::INFINITY;
        let mut accepted = false;
        for _ in 0..60 {
            for i in 0..n {
                x_new[i] = x[i] + step * d[i];
            }
            f_new = f(&x_new);
            if f_new.is_finite() && f_new <= fx + 1e-4 * step * slope {
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            break;
        }
        let g_new = grad(&x_new);
        let s: Vec<f64> = (0..n).map(|i| x_new[i] - x[i]).collect();
        let y: Vec<f64> = (0..n).map(|i| g_new[i] - g[i]).collect();
        let sy: f64 = s.iter().zip(&y).map(|(a, b)| a * b).sum();
        let yy: f64 = y.iter().map(|v| v * v).sum();
        if first_step && sy > 0.0 && yy > 0.0 {
            // scale the initial inverse Hessian to the problem's curvature
            let scale = sy / yy;
            for i in 0..n {
                for j in 0..n {
                    h[i * n + j] = if i == j { scale } else { 0.0 };
                }
            }
            first_step = false;
        }
        let s_norm: f64 = s.iter().map(|v| v * v).sum::<f64>().sqrt();
        let y_norm = yy.sqrt();
        if sy > 1e-12 * s_norm * y_norm {
            // standard BFGS inverse update
            let rho = 1.0 / sy;
            let mut hy = vec![0.0; n];
            for i in 0..n {
                let mut acc = 0.0;
                for j in 0..n {
                    acc += h[i * n + j] * y[j];
                }
                hy[i] = acc;
            }
            let yhy: f64 = y.iter().zip(&hy).map(|(a, b)| a * b).sum();
            for i in 0..n {
                for j in 0..n {
                    h[i * n + j] += (1.0 + rho * yhy) * rho * s[i] * s[j]
                        - rho * (hy[i] * s[j] + s[i] * hy[j]);
                }
            }
        }
        x = x_new;
        fx = f_new;
        g = g_new;
    }
    let gn = inf_norm(&g);
    OptimResult {
        converged: gn <= opts.grad_tol * fx.abs().max(1.0),
        x,
        value: fx,
        grad_norm: gn,
        iterations,
    }
}

/// Central-difference gradient; step scales with coordinate magnitude.
pub fn numerical_gradient<F>(f: &F, x: &[f64], h: f64) -> Vec<f64>
where
    F: Fn(&[f64]) -> f64,
{
    let mut g = vec![0.0; x.len()];
    let mut xp = x.to_vec();
    for i in 0..x.len() {
        let step = h * x[i].abs().max(1.0);
        xp[i] = x[i] + step;
        let f_hi = f(&xp);
        xp[i] = x[i] - step;
        let f_lo = f(&xp);
        xp[i] = x[i];
        g[i] = (f_hi - f_lo) / (2.0 * step);
    }
    g
}

/// Central-difference Hessian of `f` built by differencing the gradient
/// function `grad`; symmetrized. Used for observed-information standard
/// errors.
pub fn numerical_hessian<G>(grad: &G, x: &[f64], h: f64) -> Vec<Vec<f64>>
where
    G: Fn(&[f64]) -> Vec<f64>,
{
    let n = x.len();
    let mut hess = vec![vec![0.0; n]; n];
    let mut xp = x.to_vec();
    for j in 0..n {
        let step = h * x[j].abs().max(1.0);
        xp[j] = x[j] + step;
        let g_hi = grad(&xp);
        xp[j] = x[j] - step;
        let g_lo = grad(&xp);
        xp[j] = x[j];
        for i in 0..n {
            hess[i][j] = (g_hi[i] - g_lo[i]) / (2.0 * step);
        }
    }
    for i in 0..n {
        for j in (i + 1)..n {
            let m = 0.5 * (hess[i][j] + hess[j][i]);
            hess[i][j] = m;
            hess[j][i] = m;
        }
    }
    hess
}

pub struct NelderMeadOptions {
    pub f_tol: f64,
    pub max_iters: usize,
    pub initial_step: f64,
}

impl Default for NelderMeadOptions {
    fn default() -> Self {
        NelderMeadOptions {
            f_tol: 1e-12,
            max_iters: 2000,
            initial_step: 0.25,
        }
    }
}

/// Nelder-Mead simplex minimization (reflection 1, expansion 2,
/// contraction 1/2, shrink 1/2). Non-finite objective values are treated as
/// +inf so the simplex retreats from infeasible regions.
pub fn nelder_mead<F>(f: F, x0: &[f64], opts: &NelderMeadOptions) -> OptimResult
where
    F: Fn(&[f64]) -> f64,
{
    let n = x0.len();
    let eval = |x: &[f64]| -> f64 {
        let v = f(x);
        if v.is_finite() {
            v
        } else {
            f64::INFINITY
        }
    };
    let mut simplex: Vec<Vec<f64>> = Vec::with_capacity(n + 1);
    simplex.push(x0.to_vec());
    for i in 0..n {
        let mut v = x0.to_vec();
        v[i] += opts.initial_step * x0[i].abs().max(1.0);
        simplex.push(v);
    }
    let mut fv: Vec<f64> = simplex.iter().map(|v| eval(v)).collect();
    let mut iterations = 0;
    let mut converged = false;
    while iterations < opts.max_iters {
        iterations += 1;
        // order ascending by objective
        let mut order: Vec<usize> = (0..=n).collect();
        order.sort_by(|&a, &b| fv[a].partial_cmp(&fv[b]).unwrap());
        simplex = order.iter().map(|&i| simplex[i].clone()).collect();
        fv = order.iter().map(|&i| fv[i]).collect();
        if fv[n].is_finite() && (fv[n] - fv[0]).abs() <= opts.f_tol * (1.0 + fv[0].abs()) {
            converged = true;
            break;
        }
        let centroid: Vec<f64> = (0..n)
            .map(|d| simplex[..n].iter().map(|v| v[d]).sum::<f64>() / n as f64)
            .collect();
        let worst = simplex[n].clone();
        let reflect: Vec<f64> = (0..n).map(|d| 2.0 * centroid[d] - worst[d]).collect();
        let f_r = eval(&reflect);
        if f_r < fv[0] {
            let expand: Vec<f64> = (0..n).map(|d| 3.0 * centroid[d] - 2.0 * worst[d]).collect();
            let f_e = eval(&expand);
            if f_e < f_r {
                simplex[n] = expand;
                fv[n] = f_e;
            } else {
                simplex[n] = reflect;
                fv[n] = f_r;
            }
        } else if f_r < fv[n - 1] {
            simplex[n] = reflect;
            fv[n] = f_r;
        } else {
            let contract: Vec<f64> = if f_r < fv[n] {
                (0..n).map(|d| 1.5 * centroid[d] - 0.5 * worst[d]).collect()
            } else {
                (0..n).map(|d| 0.5 * centroid[d] + 0.5 * worst[d]).collect()
            };
            let f_c = eval(&contract);
            if f_c < fv[n].min(f_r) {
                simplex[n] = contract;
                fv[n] = f_c;
            } else {
                // shrink toward the best vertex
                for i in 1..=n {
                    for d in 0..n {
                        simplex[i][d] = 0.5 * (simplex[i][d] + simplex[0][d]);
                    }
                    fv[i] = eval(&simplex[i]);
                }
            }
        }
    }
    let best = fv
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.partial_cmp(b.1).unwrap())
        .map(|(i, _)| i)
        .unwrap();
    OptimResult {
        x: simplex[best].clone(),
        value: fv[best],
        grad_norm: f64::NAN,
        iterations,
        converged,
    }
}
