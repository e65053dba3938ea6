//! Per-pixel model fitting: stationary GEV baseline, threshold derivation,
//! the covariate PGEV log-likelihood, and quasi-Newton estimation of the
//! four model variants.
//!
//! The fitted model parametrizes the yearly exceedance rate and Pareto scale
//! log-linearly in a temporal covariate x_t:
//!   lambda_c(x_t) = exp(beta0 + beta1 x_t)
//!   sigma_c(x_t)  = exp(alpha0 + alpha1 x_t)
//! with a shared shape gamma and a fixed threshold c derived from a
//! stationary GEV fit. Variants fix one or both slopes at zero.
//!
//! Fitting is deterministic: the covariate is mean-centered internally for
//! conditioning (slopes unchanged, intercepts reported back on the original
//! scale), each variant is optimized from several starts including the
//! solutions of its nested sub-models — which guarantees the nested
//! log-likelihood ordering — and standard errors come from the numerically
//! differenced observed information at the optimum.

use crate::data::{Grid, Region};
use crate::error::{Error, Result};
use crate::evd::{GevParams, GAMMA_TOL};
use crate::optim::{bfgs, numerical_hessian, BfgsOptions, OptimResult};
use crate::parallel::par_map;

/// Covariate structure of a PGEV fit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Variant {
    /// Both slopes zero.
    Stationary,
    /// Rate slope free, scale slope zero.
    RateOnly,
    /// Scale slope free, rate slope zero.
    ScaleOnly,
    /// Both slopes free.
    Full,
}

impl Variant {
    /// All variants, in the tie-break order used by model selection.
    pub const ALL: [Variant; 4] = [
        Variant::Stationary,
        Variant::RateOnly,
        Variant::ScaleOnly,
        Variant::Full,
    ];

    /// Number of free parameters.
    pub fn k(self) -> usize {
        match self {
            Variant::Stationary => 3,
            Variant::RateOnly | Variant::ScaleOnly => 4,
            Variant::Full => 5,
        }
    }

    /// Which of (beta0, beta1, alpha0, alpha1, gamma) are free.
    pub fn free_mask(self) -> [bool; 5] {
        match self {
            Variant::Stationary => [true, false, true, false, true],
            Variant::RateOnly => [true, true, true, false, true],
            Variant::ScaleOnly => [true, false, true, true, true],
            Variant::Full => [true; 5],
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Variant::Stationary => "Stationary",
            Variant::RateOnly => "RateOnly",
            Variant::ScaleOnly => "ScaleOnly",
            Variant::Full => "Full",
        }
    }

    pub fn parse(s: &str) -> Option<Variant> {
        match s {
            "Stationary" | "stationary" => Some(Variant::Stationary),
            "RateOnly" | "rate-only" => Some(Variant::RateOnly),
            "ScaleOnly" | "scale-only" => Some(Variant::ScaleOnly),
            "Full" | "full" => Some(Variant::Full),
            _ => None,
        }
    }
}

impl std::fmt::Display for Variant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Daily quantile level defining the threshold, and the implied yearly
/// exceedance rate lambda_p = 365.25 (1 - p).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThresholdSpec {
    pub p: f64,
    pub lambda_p: f64,
}

impl ThresholdSpec {
    pub const DEFAULT_P: f64 = 0.99;

    pub fn new(p: f64) -> Result<Self> {
        if !(p > 0.0 && p < 1.0) {
            return Err(Error::domain(format!("threshold p must be in (0,1), got {p}")));
        }
        Ok(ThresholdSpec {
            p,
            lambda_p: 365.25 * (1.0 - p),
        })
    }
}

impl Default for ThresholdSpec {
    fn default() -> Self {
        ThresholdSpec::new(Self::DEFAULT_P).unwrap()
    }
}

/// PGEV parameters with covariate slopes, a fixed threshold, and the
/// variant whose constraints they satisfy (constrained slopes are exactly 0).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PgevTheta {
    pub beta0: f64,
    pub beta1: f64,
    pub alpha0: f64,
    pub alpha1: f64,
    pub gamma: f64,
    pub c: f64,
    pub variant: Variant,
}

impl PgevTheta {
    /// Build a parameter set, zeroing slopes the variant constrains.
    pub fn new(
        variant: Variant,
        beta0: f64,
        beta1: f64,
        alpha0: f64,
        alpha1: f64,
        gamma: f64,
        c: f64,
    ) -> Self {
        let mask = variant.free_mask();
        PgevTheta {
            beta0,
            beta1: if mask[1] { beta1 } else { 0.0 },
            alpha0,
            alpha1: if mask[3] { alpha1 } else { 0.0 },
            gamma,
            c,
            variant,
        }
    }

    fn as_array(&self) -> [f64; 5] {
        [self.beta0, self.beta1, self.alpha0, self.alpha1, self.gamma]
    }

    /// Rate parameter lambda_c at covariate value x.
    pub fn lambda_at(&self, x: f64) -> f64 {
        (self.beta0 + self.beta1 * x).exp()
    }

    /// Scale parameter sigma_c at covariate value x.
    pub fn sigma_at(&self, x: f64) -> f64 {
        (self.alpha0 + self.alpha1 * x).exp()
    }
}

/// Threshold at daily quantile level p implied by a stationary GEV fit:
/// c = mu - sigma (1 - lambda_p^(-gamma)) / gamma, with the log-limit for
/// |gamma| <= GAMMA_TOL.
pub fn threshold_from_gev(g: &GevParams, spec: &ThresholdSpec) -> f64 {
    let ln_lam = spec.lambda_p.ln();
    if g.gamma.abs() <= GAMMA_TOL {
        g.mu - g.sigma * ln_lam
    } else {
        g.mu + g.sigma * (-g.gamma * ln_lam).exp_m1() / g.gamma
    }
}

// ---------------------------------------------------------------------------
// log-likelihood and gradient
// ---------------------------------------------------------------------------

// Per-observation contribution with delta = z - c, a = alpha0 + alpha1 x,
// b = beta0 + beta1 x:
//   ell = b - (1 + 1/gamma) ln(gamma delta + e^a) + a/gamma - E,
//   E   = exp(b - [ln(gamma delta + e^a) - a] / gamma),
// valid while gamma delta + e^a > 0 (otherwise the likelihood is 0 and the
// sum returns -inf as a step-rejection sentinel). The Gumbel limit uses
// m = delta e^(-a): ell = b - a - m - exp(b - m).
fn loglik5(th: &[f64; 5], c: f64, z: &[f64], x: &[f64]) -> f64 {
    let [b0, b1, a0, a1, gamma] = *th;
    let gumbel = gamma.abs() <= GAMMA_TOL;
    let mut sum = 0.0;
    for (&zt, &xt) in z.iter().zip(x) {
        let a = a0 + a1 * xt;
        let b = b0 + b1 * xt;
        if !(-350.0..=350.0).contains(&a) {
            return f64::NEG_INFINITY;
        }
        let delta = zt - c;
        let ell = if gumbel {
            let m = delta * (-a).exp();
            if b - m > 700.0 {
                return f64::NEG_INFINITY;
            }
            b - a - m - (b - m).exp()
        } else {
            let q = gamma * delta * (-a).exp();
            if 1.0 + q <= 0.0 {
                return f64::NEG_INFINITY; // support violation
            }
            let ln_v = q.ln_1p(); // ln(gamma delta + e^a) - a
            let e_arg = b - ln_v / gamma;
            if e_arg > 700.0 {
                return f64::NEG_INFINITY;
            }
            b - a - (1.0 + 1.0 / gamma) * ln_v - e_arg.exp()
        };
        sum += ell;
    }
    if sum.is_finite() {
        sum
    } else {
        f64::NEG_INFINITY
    }
}

/// Covariate PGEV log-likelihood. Returns `-inf` when any observation
/// violates the support condition gamma (z - c) + exp(alpha0 + alpha1 x) > 0
/// (the optimizer treats such steps as rejected).
pub fn pgev_loglik(theta: &PgevTheta, z: &[f64], x: &[f64]) -> Result<f64> {
    if z.len() != x.len() {
        return Err(Error::Invalid(format!(
            "series and covariate lengths differ: {} vs {}",
            z.len(),
            x.len()
        )));
    }
    if z.iter().chain(x).any(|v| !v.is_finite()) || !theta.c.is_finite() {
        return Err(Error::domain("log-likelihood inputs must be finite"));
    }
    Ok(loglik5(&theta.as_array(), theta.c, z, x))
}

// Analytic gradient of loglik5 in (beta0, beta1, alpha0, alpha1, gamma).
// None when the point is infeasible. The Gumbel branch differentiates
// gamma by central differences through the general branch at +-1e-5.
fn grad5(th: &[f64; 5], c: f64, z: &[f64], x: &[f64]) -> Option<[f64; 5]> {
    let [b0, b1, a0, a1, gamma] = *th;
    let gumbel = gamma.abs() <= GAMMA_TOL;
    let mut g = [0.0f64; 5];
    for (&zt, &xt) in z.iter().zip(x) {
        let a = a0 + a1 * xt;
        let b = b0 + b1 * xt;
        if !(-350.0..=350.0).contains(&a) {
            return None;
        }
        let delta = zt - c;
        if gumbel {
            let m = delta * (-a).exp();
            if b - m > 700.0 {
                return None;
            }
            let e0 = (b - m).exp();
            let db = 1.0 - e0;
            let da = -1.0 + m * (1.0 - e0);
            g[0] += db;
            g[1] += xt * db;
            g[2] += da;
            g[3] += xt * da;
            // gamma component filled after the loop via finite differences
        } else {
            let q = gamma * delta * (-a).exp();
            if 1.0 + q <= 0.0 {
                return None;
            }
            let ln_v = q.ln_1p();
            let e_arg = b - ln_v / gamma;
            if e_arg > 700.0 {
                return None;
            }
            let e = e_arg.exp();
            let p = 1.0 / (1.0 + q); // e^a / (gamma delta + e^a)
            let d = delta / (gamma * delta + a.exp()); // delta / A
            let db = 1.0 - e;
            let da = -(1.0 + 1.0 / gamma) * p + 1.0 / gamma + e * (p - 1.0) / gamma;
            let l = a + ln_v; // ln(gamma delta + e^a)
            let dg = l / (gamma * gamma)
                - (1.0 + 1.0 / gamma) * d
                - a / (gamma * gamma)
                - e * ((l - a) / (gamma * gamma) - d / gamma);
            g[0] += db;
            g[1] += xt * db;
            g[2] += da;
            g[3] += xt * da;
            g[4] += dg;
        }
    }
    if gumbel {
        let h = 1e-5;
        let mut hi = *th;
        hi[4] = h;
        let mut lo = *th;
        lo[4] = -h;
        let (fh, fl) = (loglik5(&hi, c, z, x), loglik5(&lo, c, z, x));
        if !fh.is_finite() || !fl.is_finite() {
            return None;
        }
        g[4] = (fh - fl) / (2.0 * h);
    }
    if g.iter().all(|v| v.is_finite()) {
        Some(g)
    } else {
        None
    }
}

/// Analytic gradient of [`pgev_loglik`] in
/// (beta0, beta1, alpha0, alpha1, gamma); errors at infeasible points.
pub fn pgev_loglik_grad(theta: &PgevTheta, z: &[f64], x: &[f64]) -> Result<[f64; 5]> {
    if z.len() != x.len() {
        return Err(Error::Invalid("series and covariate lengths differ".into()));
    }
    grad5(&theta.as_array(), theta.c, z, x)
        .ok_or_else(|| Error::domain("gradient requested at an infeasible point"))
}

// ---------------------------------------------------------------------------
// stationary GEV baseline
// ---------------------------------------------------------------------------

/// A stationary GEV fit with asymptotic standard errors for (mu, sigma, gamma).
#[derive(Debug, Clone, PartialEq)]
pub struct GevFit {
    pub params: GevParams,
    pub loglik: f64,
    pub converged: bool,
    pub se: [f64; 3],
}

// Analytic gradient of `gev_nll` in (mu, ln sigma, gamma); None when the
// point is infeasible. With t = 1 + gamma w and T = t^(-1/gamma):
//   d/dmu       = -[(gamma + 1) - T] / (t sigma)
//   d/dln sigma = 1 - w [(gamma + 1) - T] / t
//   d/dgamma    = -ln t / gamma^2 + (1 + 1/gamma) w / t
//                 + T [ln t / gamma^2 - w / (t gamma)]
// The Gumbel branch fills the gamma slot by central differences through the
// general branch.
fn gev_nll_grad(th: &[f64], z: &[f64]) -> Option<Vec<f64>> {
    let (mu, ln_s, gamma) = (th[0], th[1], th[2]);
    if !(-350.0..=350.0).contains(&ln_s) {
        return None;
    }
    let sigma = ln_s.exp();
    let gumbel = gamma.abs() <= GAMMA_TOL;
    let mut g = vec![0.0f64; 3];
    for &zi in z {
        let w = (zi - mu) / sigma;
        if gumbel {
            let e = (-w).exp();
            g[0] += -(1.0 - e) / sigma;
            g[1] += 1.0 - w * (1.0 - e);
        } else {
            let s = gamma * w;
            if 1.0 + s <= 0.0 {
                return None;
            }
            let t = 1.0 + s;
            let ln_t = s.ln_1p();
            let tpow = (-ln_t / gamma).exp();
            let bracket = (gamma + 1.0) - tpow;
            g[0] += -bracket / (t * sigma);
            g[1] += 1.0 - w * bracket / t;
            g[2] += -ln_t / (gamma * gamma)
                + (1.0 + 1.0 / gamma) * w / t
                + tpow * (ln_t / (gamma * gamma) - w / (t * gamma));
        }
    }
    if gumbel {
        let h = 1e-5;
        let fh = gev_nll(&[mu, ln_s, h], z);
        let fl = gev_nll(&[mu, ln_s, -h], z);
        if !fh.is_finite() || !fl.is_finite() {
            return None;
        }
        g[2] = (fh - fl) / (2.0 * h);
    }
    if g.iter().all(|v| v.is_finite()) {
        Some(g)
    } else {
        None
    }
}

fn gev_nll(th: &[f64], z: &[f64]) -> f64 {
    let (mu, ln_s, gamma) = (th[0], th[1], th[2]);
    if !(-350.0..=350.0).contains(&ln_s) {
        return f64::INFINITY;
    }
    let sigma = ln_s.exp();
    let mut nll = 0.0;
    for &zi in z {
        let w = (zi - mu) / sigma;
        if gamma.abs() <= GAMMA_TOL {
            if w < -700.0 {
                return f64::INFINITY;
            }
            nll += ln_s + w + (-w).exp();
        } else {
            let s = gamma * w;
            if 1.0 + s <= 0.0 {
                return f64::INFINITY;
            }
            let ln_t = s.ln_1p();
            nll += ln_s + (1.0 / gamma + 1.0) * ln_t + (-ln_t / gamma).exp();
        }
    }
    if nll.is_finite() {
        nll
    } else {
        f64::INFINITY
    }
}

/// Maximum-likelihood stationary GEV fit with Gumbel moment initialization
/// (sigma0 = sqrt(6) sd / pi, mu0 = mean - 0.5772 sigma0) and shape
/// multi-starts. Requires >= 10 finite values with positive spread.
pub fn fit_gev_stationary(z: &[f64]) -> Result<GevFit> {
    if z.len() < 10 {
        return Err(Error::Invalid(format!(
            "GEV fit needs >= 10 values, got {}",
            z.len()
        )));
    }
    if z.iter().any(|v| !v.is_finite()) {
        return Err(Error::domain("GEV fit inputs must be finite"));
    }
    let n = z.len() as f64;
    let mean = z.iter().sum::<f64>() / n;
    let var = z.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    if var <= 0.0 {
        return Err(Error::Invalid("degenerate (constant) series".into()));
    }
    let sigma0 = (6.0 * var).sqrt() / std::f64::consts::PI;
    let mu0 = mean - 0.5772 * sigma0;

    let f = |th: &[f64]| gev_nll(th, z);
    let grad = |th: &[f64]| gev_nll_grad(th, z).unwrap_or_else(|| vec![f64::NAN; 3]);
    let opts = BfgsOptions::default();
    let mut best: Option<OptimResult> = None;
    for g0 in [0.1, 1e-8, -0.1, 0.3] {
        let r = bfgs(&f, &grad, &[mu0, sigma0.ln(), g0], &opts);
        let better = match &best {
            None => true,
            Some(b) => (r.converged, -r.value) > (b.converged, -b.value),
        };
        if better {
            best = Some(r);
        }
    }
    let best = best.unwrap();
    let params = GevParams::new(best.x[0], best.x[1].exp(), best.x[2])?;

    // observed information in (mu, ln sigma, gamma), delta-method back to sigma
    let mut se = [f64::NAN; 3];
    if best.converged {
        let h = numerical_hessian(&grad, &best.x, 1e-5);
        if let Some(cov) = invert_spd(&h) {
            let s = params.sigma;
            se = [
                cov[(0, 0)].max(0.0).sqrt(),
                (cov[(1, 1)].max(0.0)).sqrt() * s, // d sigma / d ln sigma = sigma
                cov[(2, 2)].max(0.0).sqrt(),
            ];
        }
    }
    Ok(GevFit {
        params,
        loglik: -best.value,
        converged: best.converged,
        se,
    })
}

fn invert_spd(h: &[Vec<f64>]) -> Option<nalgebra::DMatrix<f64>> {
    let n = h.len();
    if h.iter().any(|row| row.len() != n || row.iter().any(|v| !v.is_finite())) {
        return None;
    }
    nalgebra::DMatrix::from_fn(n, n, |i, j| h[i][j]).try_inverse()
}

// ---------------------------------------------------------------------------
// variant fitting
// ---------------------------------------------------------------------------

/// One fitted variant at one pixel. Slopes the variant constrains have
/// `se` = NaN; t-values are estimate/SE for the free slopes.
#[derive(Debug, Clone, PartialEq)]
pub struct VariantFit {
    pub theta: PgevTheta,
    pub loglik: f64,
    pub converged: bool,
    pub iterations: usize,
    /// Standard errors for (beta0, beta1, alpha0, alpha1, gamma); NaN where
    /// fixed or unavailable.
    pub se: [f64; 5],
    pub t_beta1: f64,
    pub t_alpha1: f64,
}

fn embed(free: &[f64], mask: &[bool; 5], base: &[f64; 5]) -> [f64; 5] {
    let mut th = *base;
    let mut j = 0;
    for i in 0..5 {
        if mask[i] {
            th[i] = free[j];
            j += 1;
        }
    }
    th
}

fn restrict(th: &[f64; 5], mask: &[bool; 5]) -> Vec<f64> {
    (0..5).filter(|&i| mask[i]).map(|i| th[i]).collect()
}

struct CenteredFit {
    th: [f64; 5],
    loglik: f64,
    converged: bool,
    iterations: usize,
}

fn optimize_variant(
    z: &[f64],
    xc: &[f64],
    c: f64,
    variant: Variant,
    starts: &[[f64; 5]],
) -> CenteredFit {
    let mask = variant.free_mask();
    let zeros = [0.0f64; 5];
    let f = |free: &[f64]| -loglik5(&embed(free, &mask, &zeros), c, z, xc);
    let grad = |free: &[f64]| -> Vec<f64> {
        match grad5(&embed(free, &mask, &zeros), c, z, xc) {
            Some(g) => (0..5).filter(|&i| mask[i]).map(|i| -g[i]).collect(),
            // infeasible: signal a bad direction; bfgs only calls this at
            // points with finite f, so this is a defensive fallback
            None => vec![f64::NAN; free.len()],
        }
    };
    let opts = BfgsOptions::default();
    let mut best: Option<OptimResult> = None;
    for s in starts {
        let s = {
            // constrained slopes must start at zero for the embedding
            let mut t = *s;
            for i in 0..5 {
                if !mask[i] {
                    t[i] = 0.0;
                }
            }
            t
        };
        let r = bfgs(&f, &grad, &restrict(&s, &mask), &opts);
        let better = match &best {
            None => true,
            // highest loglik wins; converged breaks exact ties
            Some(b) => (-r.value, r.converged) > (-b.value, b.converged),
        };
        if better {
            best = Some(r);
        }
    }
    let best = best.unwrap();
    CenteredFit {
        th: embed(&best.x, &mask, &zeros),
        loglik: -best.value,
        converged: best.converged && best.value.is_finite(),
        iterations: best.iterations,
    }
}

fn finalize_fit(
    z: &[f64],
    x: &[f64],
    x_mean: f64,
    c: f64,
    variant: Variant,
    cf: &CenteredFit,
) -> VariantFit {
    // uncenter: slopes unchanged, intercepts absorb slope * mean
    let th = [
        cf.th[0] - cf.th[1] * x_mean,
        cf.th[1],
        cf.th[2] - cf.th[3] * x_mean,
        cf.th[3],
        cf.th[4],
    ];
    let mask = variant.free_mask();
    let mut se5 = [f64::NAN; 5];
    if cf.converged {
        // observed information on the uncentered likelihood at the optimum
        let g = |free: &[f64]| -> Vec<f64> {
            match grad5(&embed(free, &mask, &th), c, z, x) {
                Some(g) => (0..5).filter(|&i| mask[i]).map(|i| -g[i]).collect(),
                None => vec![f64::NAN; free.len()],
            }
        };
        let free = restrict(&th, &mask);
        let hess = numerical_hessian(&g, &free, 1e-5);
        if let Some(cov) = invert_spd(&hess) {
            let mut j = 0;
            for i in 0..5 {
                if mask[i] {
                    let v = cov[(j, j)];
                    se5[i] = if v > 0.0 { v.sqrt() } else { f64::NAN };
                    j += 1;
                }
            }
        }
    }
    let theta = PgevTheta::new(variant, th[0], th[1], th[2], th[3], th[4], c);
    VariantFit {
        theta,
        loglik: cf.loglik,
        converged: cf.converged,
        iterations: cf.iterations,
        se: se5,
        t_beta1: if mask[1] { theta.beta1 / se5[1] } else { f64::NAN },
        t_alpha1: if mask[3] { theta.alpha1 / se5[3] } else { f64::NAN },
    }
}

/// Fit one variant by multi-start BFGS. `init` is the stationary GEV fit,
/// mapped through the reparametrization (lambda_c = lambda_p,
/// sigma_c = sigma lambda_p^(-gamma), gamma unchanged); a Gumbel-shape
/// retry start (gamma = 1e-8) is always included.
pub fn fit_pgev(
    z: &[f64],
    x: &[f64],
    c: f64,
    lambda_p: f64,
    variant: Variant,
    init: &GevParams,
) -> Result<VariantFit> {
    fit_pgev_with_starts(z, x, c, lambda_p, variant, init, &[])
}

fn base_starts(lambda_p: f64, init: &GevParams) -> [[f64; 5]; 2] {
    let ln_lam = lambda_p.ln();
    let beta0 = ln_lam;
    let alpha0 = init.sigma.ln() - init.gamma * ln_lam;
    [
        [beta0, 0.0, alpha0, 0.0, init.gamma],
        [beta0, 0.0, init.sigma.ln(), 0.0, 1e-8],
    ]
}

fn fit_pgev_with_starts(
    z: &[f64],
    x: &[f64],
    c: f64,
    lambda_p: f64,
    variant: Variant,
    init: &GevParams,
    extra_centered: &[[f64; 5]],
) -> Result<VariantFit> {
    if z.len() != x.len() || z.is_empty() {
        return Err(Error::Invalid(
            "series and covariate must be nonempty and equal-length".into(),
        ));
    }
    let n = x.len() as f64;
    let x_mean = x.iter().sum::<f64>() / n;
    let xc: Vec<f64> = x.iter().map(|v| v - x_mean).collect();
    let mut starts: Vec<[f64; 5]> = base_starts(lambda_p, init).to_vec();
    starts.extend_from_slice(extra_centered);
    let cf = optimize_variant(z, &xc, c, variant, &starts);
    Ok(finalize_fit(z, x, x_mean, c, variant, &cf))
}

/// All four variant fits at one pixel, sharing one threshold.
#[derive(Debug, Clone, PartialEq)]
pub struct PixelFit {
    pub pixel_id: u64,
    pub lat: f64,
    pub lon: f64,
    pub region: Region,
    pub c: f64,
    pub gev: GevFit,
    /// Indexed like [`Variant::ALL`].
    pub variants: [VariantFit; 4],
}

impl PixelFit {
    pub fn variant(&self, v: Variant) -> &VariantFit {
        &self.variants[Variant::ALL.iter().position(|&w| w == v).unwrap()]
    }

    pub fn all_converged(&self) -> bool {
        self.variants.iter().all(|f| f.converged)
    }
}

/// A pixel the pipeline could not fit, with the reason.
#[derive(Debug, Clone, PartialEq)]
pub struct SkippedPixel {
    pub pixel_id: u64,
    pub region: Region,
    pub reason: String,
}

/// Grid-level fit results: fitted pixels plus explicitly skipped ones.
#[derive(Debug, Clone, PartialEq)]
pub struct GridFit {
    pub pixels: Vec<PixelFit>,
    pub skipped: Vec<SkippedPixel>,
}

/// Fit the four variants at one pixel: stationary GEV for the threshold and
/// initialization, then Stationary -> RateOnly/ScaleOnly -> Full, feeding
/// each nested solution in as an extra start of the larger model (this makes
/// the nested log-likelihood ordering hold by construction).
pub fn fit_pixel_series(z: &[f64], x: &[f64], thr: &ThresholdSpec) -> Result<(GevFit, f64, [VariantFit; 4])> {
    let gev = fit_gev_stationary(z)?;
    if !gev.converged {
        return Err(Error::Optim("stationary GEV fit did not converge".into()));
    }
    let c = threshold_from_gev(&gev.params, thr);
    let n = x.len() as f64;
    let x_mean = x.iter().sum::<f64>() / n;
    let xc: Vec<f64> = x.iter().map(|v| v - x_mean).collect();
    if z.len() != x.len() {
        return Err(Error::Invalid("series and covariate lengths differ".into()));
    }

    let base = base_starts(thr.lambda_p, &gev.params).to_vec();
    let run = |variant: Variant, extra: &[[f64; 5]]| -> CenteredFit {
        let mut starts = base.clone();
        starts.extend_from_slice(extra);
        optimize_variant(z, &xc, c, variant, &starts)
    };
    let st = run(Variant::Stationary, &[]);
    let ro = run(Variant::RateOnly, &[st.th]);
    let so = run(Variant::ScaleOnly, &[st.th]);
    let fu = run(Variant::Full, &[st.th, ro.th, so.th]);

    let fits = [
        finalize_fit(z, x, x_mean, c, Variant::Stationary, &st),
        finalize_fit(z, x, x_mean, c, Variant::RateOnly, &ro),
        finalize_fit(z, x, x_mean, c, Variant::ScaleOnly, &so),
        finalize_fit(z, x, x_mean, c, Variant::Full, &fu),
    ];
    Ok((gev, c, fits))
}

/// Fit every pixel of a grid against a smoothed covariate aligned with the
/// grid's year axis. Pixels whose baseline GEV fit fails are skipped with a
/// reason rather than aborting the grid. Runs as a parallel map over pixels;
/// output order matches input order regardless of scheduling.
pub fn fit_grid(grid: &Grid, x: &[f64], thr: &ThresholdSpec) -> Result<GridFit> {
    if x.len() != grid.years.len() {
        return Err(Error::Invalid(format!(
            "covariate length {} != year axis length {}",
            x.len(),
            grid.years.len()
        )));
    }
    let results = par_map(&grid.series, |s| {
        fit_pixel_series(&s.values, x, thr).map(|(gev, c, variants)| PixelFit {
            pixel_id: s.pixel_id,
            lat: s.lat,
            lon: s.lon,
            region: s.region,
            c,
            gev,
            variants,
        })
    });
    let mut pixels = Vec::new();
    let mut skipped = Vec::new();
    for (s, r) in grid.series.iter().zip(results) {
        match r {
            Ok(p) => pixels.push(p),
            Err(e) => skipped.push(SkippedPixel {
                pixel_id: s.pixel_id,
                region: s.region,
                reason: e.to_string(),
            }),
        }
    }
    Ok(GridFit { pixels, skipped })
}
