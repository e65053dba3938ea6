//! Exploratory tools: Lowess smoothing of the covariate, sample
//! autocorrelation with confidence bands, and functional-boxplot outlier
//! screening of the per-pixel annual-maximum curves.

use crate::error::{Error, Result};

/// Locally weighted scatterplot smoothing (classic Cleveland recipe):
/// `r = floor(span·n)` nearest neighbors, tricube distance weights, a local
/// degree-1 weighted fit per point, and `iters` bisquare robustness passes.
///
/// Errors when lengths differ, n < 3, span is outside (0, 1], or x is
/// degenerate (no spread within some window).
pub fn lowess(x: &[f64], y: &[f64], span: f64, iters: usize) -> Result<Vec<f64>> {
    let n = x.len();
    if y.len() != n {
        return Err(Error::Invalid(format!(
            "lowess needs equal lengths, got {n} and {}",
            y.len()
        )));
    }
    if n < 3 {
        return Err(Error::Invalid(format!("lowess needs >= 3 points, got {n}")));
    }
    if !(span > 0.0 && span <= 1.0) {
        return Err(Error::Invalid(format!("lowess span must be in (0,1], got {span}")));
    }
    if x.iter().any(|v| !v.is_finite()) || y.iter().any(|v| !v.is_finite()) {
        return Err(Error::Invalid("lowess inputs must be finite".into()));
    }
    let r = ((span * n as f64 + 1e-7).floor() as usize).clamp(2, n);

    let mut delta = vec![1.0f64; n];
    let mut fit = vec![0.0f64; n];
    let mut dist = vec![0.0f64; n];
    let mut sorted = vec![0.0f64; n];
    for it in 0..=iters {
        for i in 0..n {
            for j in 0..n {
                dist[j] = (x[j] - x[i]).abs();
            }
            sorted.copy_from_slice(&dist);
            sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let hmax = sorted[r - 1];
            if hmax <= 0.0 {
                return Err(Error::Invalid(
                    "lowess: degenerate x (no spread within a window)".into(),
                ));
            }
            // tricube weights vanish at and beyond the window edge
            let (mut sw, mut swx, mut swy, mut swxx) = (0.0, 0.0, 0.0, 0.0);
            let mut w = vec![0.0f64; n];
            for j in 0..n {
                let u = dist[j] / hmax;
                if u < 1.0 {
                    let t = 1.0 - u * u * u;
                    w[j] = t * t * t * delta[j];
                    sw += w[j];
                    swx += w[j] * x[j];
                    swy += w[j] * y[j];
                    swxx += w[j] * x[j] * x[j];
                }
            }
            if sw <= 0.0 {
                fit[i] = y[i];
                continue;
            }
            let xm = swx / sw;
            let ym = swy / sw;
            let (mut sxx, mut sxy) = (0.0, 0.0);
            for j in 0..n {
                if w[j] > 0.0 {
                    sxx += w[j] * (x[j] - xm) * (x[j] - xm);
                    sxy += w[j] * (x[j] - xm) * (y[j] - ym);
                }
            }
            fit[i] = if sxx > 1e-12 * swxx + 1e-300 {
                ym + sxy / sxx * (x[i] - xm)
            } else {
                ym
            };
        }
        if it == iters {
            break;
        }
        let mut abs_res: Vec<f64> = (0..n).map(|i| (y[i] - fit[i]).abs()).collect();
        abs_res.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let s = if n % 2 == 1 {
            abs_res[n / 2]
        } else {
            0.5 * (abs_res[n / 2 - 1] + abs_res[n / 2])
        };
        if s <= 0.0 {
            break;
        }
        for i in 0..n {
            let u = (y[i] - fit[i]) / (6.0 * s);
            delta[i] = if u.abs() < 1.0 {
                let t = 1.0 - u * u;
                t * t
            } else {
                0.0
            };
        }
    }
    Ok(fit)
}

/// Sample autocorrelation at lags 0..=max_lag (biased-denominator
/// estimator) plus the pointwise 95% band half-width 1.96/sqrt(T).
pub fn sample_acf(z: &[f64], max_lag: usize) -> Result<(Vec<f64>, f64)> {
    let t = z.len();
    if t <= max_lag {
        return Err(Error::Invalid(format!(
            "series length {t} must exceed max_lag {max_lag}"
        )));
    }
    let mean = z.iter().sum::<f64>() / t as f64;
    let c0 = z.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / t as f64;
    if c0 <= 0.0 {
        return Err(Error::Invalid("zero-variance series".into()));
    }
    let acf = (0..=max_lag)
        .map(|k| {
            let ck = (k..t)
                .map(|i| (z[i] - mean) * (z[i - k] - mean))
                .sum::<f64>()
                / t as f64;
            ck / c0
        })
        .collect();
    Ok((acf, 1.96 / (t as f64).sqrt()))
}

/// Functional boxplot summary of a curve family (common axis assumed).
#[derive(Debug, Clone, PartialEq)]
pub struct FunctionalBoxplot {
    /// Modified band depth per curve, in input order.
    pub depths: Vec<f64>,
    /// Index of the deepest curve (ties to the lowest index).
    pub median_index: usize,
    /// Pointwise envelope of the ceil(n/2) deepest curves.
    pub central_lo: Vec<f64>,
    pub central_hi: Vec<f64>,
    /// Central band inflated by 1.5x its pointwise height.
    pub fence_lo: Vec<f64>,
    pub fence_hi: Vec<f64>,
    /// Curves leaving the fence at one or more points.
    pub outlier_indices: Vec<usize>,
}

fn choose2(k: usize) -> f64 {
    (k * k.saturating_sub(1)) as f64 / 2.0
}

/// Modified band depth with 2-curve bands: the average over time and over
/// all curve pairs of the indicator that the curve lies inside the pair's
/// envelope. Computed per time point from the ranks: of the C(n,2) pairs,
/// exactly C(below,2) + C(above,2) fail to bracket a value.
pub fn modified_band_depth(curves: &[Vec<f64>]) -> Result<Vec<f64>> {
    let n = curves.len();
    if n < 3 {
        return Err(Error::Invalid(format!("need >= 3 curves, got {n}")));
    }
    let t_len = curves[0].len();
    if t_len == 0 || curves.iter().any(|c| c.len() != t_len) {
        return Err(Error::Invalid("curves must share a nonempty common axis".into()));
    }
    let pairs = choose2(n);
    let mut depth = vec![0.0f64; n];
    let mut order: Vec<usize> = (0..n).collect();
    for t in 0..t_len {
        order.sort_by(|&a, &b| curves[a][t].partial_cmp(&curves[b][t]).unwrap());
        let mut i = 0;
        while i < n {
            // group of curves tied at this value
            let mut j = i + 1;
            while j < n && curves[order[j]][t] == curves[order[i]][t] {
                j += 1;
            }
            let below = i;
            let above = n - j;
            let contained = pairs - choose2(below) - choose2(above);
            for &k in &order[i..j] {
                depth[k] += contained;
            }
            i = j;
        }
    }
    let norm = pairs * t_len as f64;
    for d in &mut depth {
        *d /= norm;
    }
    Ok(depth)
}

/// Build the functional boxplot: median = deepest curve, central band =
/// pointwise envelope of the ceil(n/2) deepest, fences at 1.5x the band
/// height, outliers = curves exiting the fence anywhere.
pub fn functional_boxplot(curves: &[Vec<f64>]) -> Result<FunctionalBoxplot> {
    let depths = modified_band_depth(curves)?;
    let n = curves.len();
    let t_len = curves[0].len();

    let mut by_depth: Vec<usize> = (0..n).collect();
    by_depth.sort_by(|&a, &b| depths[b].partial_cmp(&depths[a]).unwrap().then(a.cmp(&b)));
    let median_index = by_depth[0];
    let central = &by_depth[..n.div_ceil(2)];

    let mut central_lo = vec![f64::INFINITY; t_len];
    let mut central_hi = vec![f64::NEG_INFINITY; t_len];
    for &k in central {
        for t in 0..t_len {
            central_lo[t] = central_lo[t].min(curves[k][t]);
            central_hi[t] = central_hi[t].max(curves[k][t]);
        }
    }
    let mut fence_lo = vec![0.0; t_len];
    let mut fence_hi = vec![0.0; t_len];
    for t in 0..t_len {
        let h = central_hi[t] - central_lo[t];
        fence_lo[t] = central_lo[t] - 1.5 * h;
        fence_hi[t] = central_hi[t] + 1.5 * h;
    }
    let outlier_indices = (0..n)
        .filter(|&k| {
            (0..t_len).any(|t| curves[k][t] < fence_lo[t] || curves[k][t] > fence_hi[t])
        })
        .collect();
    Ok(FunctionalBoxplot {
        depths,
        median_index,
        central_lo,
        central_hi,
        fence_lo,
        fence_hi,
        outlier_indices,
    })
}
