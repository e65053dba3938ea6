//! Gaussian-copula spatial bootstrap for test calibration: probability
//! integral transforms between observed maxima and standard-normal
//! fields, per-year Matérn fits, null-model grid simulation, QQ-curve
//! confidence bands, and the run-length declustering check.

use std::collections::BTreeMap;

use nalgebra::DVector;

use crate::data::Grid;
use crate::error::{Error, Result};
use crate::evd::{pgev_cdf, pgev_quantile, PgevParams};
use crate::fit::{fit_grid, PgevTheta, PixelFit, ThresholdSpec, Variant};
use crate::parallel::{par_map, par_map_indexed};
use crate::rng::{standard_normal, stream, uniform_index};
use crate::select::{pvalue_qq_curve, run_lrts, LrtTest};
use crate::spatial::{
    chol_with_jitter, covariance_matrix, empirical_variogram, fit_variogram_fixed_sill, BinSpec,
    FitMethod, MaternFit,
};
use crate::special::{norm_cdf, norm_quantile};

/// Probabilities are clamped to this interior range before the normal
/// quantile, keeping transformed fields finite.
pub const U_CLAMP: f64 = 1e-12;

/// One year's standard-normal transformed field, with its spatial fit
/// once [`fit_field_materns`] has run.
#[derive(Debug, Clone, PartialEq)]
pub struct CopulaField {
    pub year: i32,
    /// Transformed values, aligned with the owning collection's pixels.
    pub w: Vec<f64>,
    pub matern: Option<MaternFit>,
}

impl CopulaField {
    /// Loose per-year plausibility band for a standard-normal field:
    /// |mean| <= 0.2 and sd in [0.7, 1.3]. Violations flag a suspect
    /// transform; they are reported, never fatal.
    pub fn within_sanity_band(&self) -> bool {
        let n = self.w.len() as f64;
        let mean = self.w.iter().sum::<f64>() / n;
        let var = self.w.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        mean.abs() <= 0.2 && (0.7..=1.3).contains(&var.sqrt())
    }
}

/// Transformed fields for every year, sharing one pixel order.
#[derive(Debug, Clone, PartialEq)]
pub struct CopulaFields {
    pub pixel_ids: Vec<u64>,
    pub sites: Vec<(f64, f64)>,
    /// Null-model parameters per pixel, aligned with `pixel_ids`.
    pub thetas: Vec<PgevTheta>,
    /// Covariate value per year.
    pub x: Vec<f64>,
    pub fields: Vec<CopulaField>,
}

/// Transform observed maxima to standard-normal fields, one per year:
/// w = Phi^{-1}(F(z)) under each pixel's null-model parameters at that
/// year's covariate. A grid pixel without a fitted model is an error.
pub fn to_gaussian(
    grid: &Grid,
    x: &[f64],
    thetas: &BTreeMap<u64, PgevTheta>,
) -> Result<CopulaFields> {
    if x.len() != grid.n_years() {
        return Err(Error::Invalid(format!(
            "{} years of data but {} covariate values",
            grid.n_years(),
            x.len()
        )));
    }
    let mut aligned = Vec::with_capacity(grid.n_pixels());
    for s in &grid.series {
        match thetas.get(&s.pixel_id) {
            Some(t) => aligned.push(t.clone()),
            None => {
                return Err(Error::Invalid(format!(
                    "no fitted model for pixel {}",
                    s.pixel_id
                )))
            }
        }
    }
    let fields = (0..grid.n_years())
        .map(|t| {
            let w = grid
                .series
                .iter()
                .zip(&aligned)
                .map(|(s, th)| {
                    let p = PgevParams::new(
                        th.lambda_at(x[t]),
                        th.sigma_at(x[t]),
                        th.gamma,
                        th.c,
                    )?;
                    let u = pgev_cdf(s.values[t], &p)?.clamp(U_CLAMP, 1.0 - U_CLAMP);
                    norm_quantile(u)
                })
                .collect::<Result<Vec<f64>>>()?;
            Ok(CopulaField {
                year: grid.years[t],
                w,
                matern: None,
            })
        })
        .collect::<Result<Vec<CopulaField>>>()?;
    Ok(CopulaFields {
        pixel_ids: grid.series.iter().map(|s| s.pixel_id).collect(),
        sites: grid.series.iter().map(|s| (s.lat, s.lon)).collect(),
        thetas: aligned,
        x: x.to_vec(),
        fields,
    })
}

/// Inverse transform: z = F^{-1}(Phi(w)) with year-specific parameters.
/// `w` is indexed [year][pixel] and must match `thetas` and `x`.
pub fn from_gaussian(
    w: &[Vec<f64>],
    x: &[f64],
    thetas: &[PgevTheta],
) -> Result<Vec<Vec<f64>>> {
    if w.len() != x.len() {
        return Err(Error::Invalid(format!(
            "{} fields but {} covariate values",
            w.len(),
            x.len()
        )));
    }
    w.iter()
        .zip(x)
        .map(|(row, &xt)| {
            if row.len() != thetas.len() {
                return Err(Error::Invalid(format!(
                    "field has {} pixels but {} models",
                    row.len(),
                    thetas.len()
                )));
            }
            row.iter()
                .zip(thetas)
                .map(|(&wj, th)| {
                    let p = PgevParams::new(
                        th.lambda_at(xt),
                        th.sigma_at(xt),
                        th.gamma,
                        th.c,
                    )?;
                    let u = norm_cdf(wj).clamp(U_CLAMP, 1.0 - U_CLAMP);
                    pgev_quantile(u, &p)
                })
                .collect()
        })
        .collect()
}

/// Fit a weighted-least-squares Matérn model to every year's field
/// (parallel across years). The sill is pinned to the field's sample
/// variance: transformed fields are standard normal by construction, so
/// the variance identifies the sill directly, and leaving it free lets
/// weakly correlated years wander onto a degenerate inflated-sill ridge
/// that would distort the simulated marginals.
pub fn fit_field_materns(cf: &mut CopulaFields) -> Result<()> {
    let sites = cf.sites.clone();
    let fits: Vec<Result<MaternFit>> = par_map(&cf.fields, |f| {
        let v = empirical_variogram(&sites, &f.w, &BinSpec::default())?;
        let n = f.w.len() as f64;
        let mean = f.w.iter().sum::<f64>() / n;
        let var = f.w.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
        fit_variogram_fixed_sill(&v, FitMethod::Wls, var.max(1e-8))
    });
    for (field, fit) in cf.fields.iter_mut().zip(fits) {
        field.matern = Some(fit?);
    }
    Ok(())
}

/// Draw `b` replicates of Gaussian fields: within each replicate, year
/// indices are resampled with replacement and each resampled year
/// produces a fresh zero-mean field with that year's fitted Matérn
/// covariance. Returns values indexed [replicate][year][pixel]. Each
/// replicate draws from its own stream `(seed, label, replicate)`, so
/// results do not depend on scheduling.
pub fn simulate_w_fields(
    cf: &CopulaFields,
    b: usize,
    seed: u64,
    label: &str,
) -> Result<Vec<Vec<Vec<f64>>>> {
    if b == 0 {
        return Err(Error::Invalid("need at least one replicate".into()));
    }
    let t_len = cf.fields.len();
    let n = cf.sites.len();
    // per-year Cholesky factors, computed once
    let factors = cf
        .fields
        .iter()
        .map(|f| {
            let m = f.matern.as_ref().ok_or_else(|| {
                Error::Invalid(format!("year {} has no fitted spatial model", f.year))
            })?;
            let c = covariance_matrix(&cf.sites, &m.params)?;
            Ok(chol_with_jitter(&c, m.params.sigma2)?.0.l().clone_owned())
        })
        .collect::<Result<Vec<_>>>()?;
    let label = label.to_string();
    let reps = par_map_indexed(b, |r| {
        let mut rng = stream(seed, &label, r as u64);
        (0..t_len)
            .map(|_| {
                let tau = uniform_index(&mut rng, t_len);
                let eps = DVector::from_iterator(n, (0..n).map(|_| standard_normal(&mut rng)));
                (&factors[tau] * eps).iter().cloned().collect::<Vec<f64>>()
            })
            .collect::<Vec<Vec<f64>>>()
    });
    Ok(reps)
}

/// Simulate `b` full synthetic grids under the null models stored in the
/// fields: Gaussian fields via [`simulate_w_fields`], back-transformed
/// through each pixel's null parameters at the original year order's
/// covariate values. The template grid supplies pixel metadata.
pub fn simulate_null_grids(
    cf: &CopulaFields,
    template: &Grid,
    b: usize,
    seed: u64,
    label: &str,
) -> Result<Vec<Grid>> {
    if template.n_pixels() != cf.pixel_ids.len()
        || template
            .series
            .iter()
            .zip(&cf.pixel_ids)
            .any(|(s, &id)| s.pixel_id != id)
    {
        return Err(Error::Invalid(
            "template grid does not match the transformed fields".into(),
        ));
    }
    let reps = simulate_w_fields(cf, b, seed, label)?;
    reps.into_iter()
        .map(|w| {
            let z = from_gaussian(&w, &cf.x, &cf.thetas)?;
            let series = template
                .series
                .iter()
                .enumerate()
                .map(|(j, s)| {
                    let mut out = s.clone();
                    out.values = z.iter().map(|row| row[j]).collect();
                    out
                })
                .collect();
            Ok(Grid {
                years: template.years.clone(),
                series,
            })
        })
        .collect()
}

/// Type-7 empirical quantile (linear interpolation between order
/// statistics), matching the convention of common statistical software.
pub fn sample_quantile(values: &[f64], p: f64) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::Invalid("no values to take a quantile of".into()));
    }
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::domain(format!("quantile level must lie in [0,1], got {p}")));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::domain("values must be finite"));
    }
    let mut s = values.to_vec();
    s.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let h = (s.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    if lo + 1 >= s.len() {
        return Ok(s[s.len() - 1]);
    }
    Ok(s[lo] + (h - lo as f64) * (s[lo + 1] - s[lo]))
}

/// Pointwise confidence band across replicate QQ curves: at each rank,
/// the empirical (1-level)/2 and (1+level)/2 quantiles over replicates.
/// Curves must share one length; at least 40 replicates are required.
/// Returns (rank i/n, lo, hi) per rank.
pub fn qq_band(curves: &[Vec<f64>], level: f64) -> Result<Vec<(f64, f64, f64)>> {
    if curves.len() < 40 {
        return Err(Error::Invalid(format!(
            "need at least 40 replicate curves, got {}",
            curves.len()
        )));
    }
    if !(0.0 < level && level < 1.0) {
        return Err(Error::domain(format!("band level must lie in (0,1), got {level}")));
    }
    let n = curves[0].len();
    if n == 0 || curves.iter().any(|c| c.len() != n) {
        return Err(Error::Invalid(
            "replicate curves must share one nonzero length".into(),
        ));
    }
    let lo_p = (1.0 - level) / 2.0;
    let hi_p = (1.0 + level) / 2.0;
    (0..n)
        .map(|i| {
            let col: Vec<f64> = curves.iter().map(|c| c[i]).collect();
            Ok((
                (i + 1) as f64 / n as f64,
                sample_quantile(&col, lo_p)?,
                sample_quantile(&col, hi_p)?,
            ))
        })
        .collect()
}

/// Which restricted model the bootstrap simulates under, and which tests
/// its bands cover.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NullFamily {
    /// Null of the three against-stationarity tests.
    Stationary,
    /// Null of the full-vs-rate-only test.
    RateOnly,
    /// Null of the full-vs-scale-only test.
    ScaleOnly,
}

impl NullFamily {
    pub const ALL: [NullFamily; 3] =
        [NullFamily::Stationary, NullFamily::RateOnly, NullFamily::ScaleOnly];

    pub fn variant(self) -> Variant {
        match self {
            NullFamily::Stationary => Variant::Stationary,
            NullFamily::RateOnly => Variant::RateOnly,
            NullFamily::ScaleOnly => Variant::ScaleOnly,
        }
    }

    pub fn tests(self) -> &'static [LrtTest] {
        match self {
            NullFamily::Stationary => {
                &[LrtTest::T1Lambda, LrtTest::T2Sigma, LrtTest::T3Both]
            }
            NullFamily::RateOnly => &[LrtTest::TaFullVsLambda],
            NullFamily::ScaleOnly => &[LrtTest::TbFullVsSigma],
        }
    }

    /// Random-stream label; one independent stream family per null.
    pub fn label(self) -> &'static str {
        match self {
            NullFamily::Stationary => "bands.stationary",
            NullFamily::RateOnly => "bands.rate_only",
            NullFamily::ScaleOnly => "bands.scale_only",
        }
    }
}

/// Re-grid a sorted p-value curve onto `m` equally spaced ranks by linear
/// interpolation of the empirical quantile function (used when a
/// replicate loses pixels to non-convergence).
fn regrid_sorted(sorted: &[f64], m: usize) -> Vec<f64> {
    let n = sorted.len();
    if n == m {
        return sorted.to_vec();
    }
    (1..=m)
        .map(|i| {
            let r = i as f64 / m as f64;
            let h = r * n as f64 - 1.0; // source index at rank r
            if h <= 0.0 {
                sorted[0]
            } else if h >= (n - 1) as f64 {
                sorted[n - 1]
            } else {
                let lo = h.floor() as usize;
                sorted[lo] + (h - lo as f64) * (sorted[lo + 1] - sorted[lo])
            }
        })
        .collect()
}

/// Confidence bands per test, plus simulation diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct BandReport {
    /// Per test: (rank, lo, hi) rows.
    pub bands: BTreeMap<LrtTest, Vec<(f64, f64, f64)>>,
    /// Pixels included in the simulation (all requested fits converged).
    pub n_pixels: usize,
    /// Years whose transformed field failed the sanity band.
    pub flagged_years: Vec<i32>,
}

/// The full bootstrap loop for one null family: transform the observed
/// grid under the restricted fits, fit per-year spatial models, simulate
/// `b` null grids, push each through the whole pipeline (threshold, four
/// fits, tests), and band the resulting p-value curves.
pub fn simulate_qq_bands(
    grid: &Grid,
    x: &[f64],
    thr: &ThresholdSpec,
    fits: &[PixelFit],
    family: NullFamily,
    b: usize,
    seed: u64,
) -> Result<BandReport> {
    if b < 40 {
        return Err(Error::Invalid(format!(
            "need at least 40 replicates for a band, got {b}"
        )));
    }
    let variant = family.variant();
    // pixels where every fit converged: these define the simulation grid
    let usable: BTreeMap<u64, PgevTheta> = fits
        .iter()
        .filter(|pf| pf.gev.converged && pf.all_converged())
        .map(|pf| (pf.pixel_id, pf.variant(variant).theta.clone()))
        .collect();
    if usable.len() < 2 {
        return Err(Error::Invalid(format!(
            "only {} fully converged pixels; cannot simulate",
            usable.len()
        )));
    }
    let template = Grid {
        years: grid.years.clone(),
        series: grid
            .series
            .iter()
            .filter(|s| usable.contains_key(&s.pixel_id))
            .cloned()
            .collect(),
    };
    let mut cf = to_gaussian(&template, x, &usable)?;
    fit_field_materns(&mut cf)?;
    let flagged_years: Vec<i32> = cf
        .fields
        .iter()
        .filter(|f| !f.within_sanity_band())
        .map(|f| f.year)
        .collect();

    let n_ref = template.n_pixels();
    let label = family.label();
    let grids = simulate_null_grids(&cf, &template, b, seed, label)?;
    let curves: Vec<Result<BTreeMap<LrtTest, Vec<f64>>>> = par_map(&grids, |g| {
        let fit = fit_grid(g, x, thr)?;
        let report = run_lrts(&fit.pixels);
        let mut per_test = BTreeMap::new();
        for &test in family.tests() {
            let p: Vec<f64> = report
                .results
                .iter()
                .filter(|r| r.test == test)
                .map(|r| r.p_value)
                .collect();
            if p.is_empty() {
                return Err(Error::Optim(
                    "a bootstrap replicate had no convergent pixels".into(),
                ));
            }
            let sorted: Vec<f64> = pvalue_qq_curve(&p)?.into_iter().map(|(_, v)| v).collect();
            per_test.insert(test, regrid_sorted(&sorted, n_ref));
        }
        Ok(per_test)
    });
    let mut by_test: BTreeMap<LrtTest, Vec<Vec<f64>>> = BTreeMap::new();
    for c in curves {
        for (test, curve) in c? {
            by_test.entry(test).or_default().push(curve);
        }
    }
    let mut bands = BTreeMap::new();
    for (test, reps) in by_test {
        bands.insert(test, qq_band(&reps, 0.95)?);
    }
    Ok(BandReport {
        bands,
        n_pixels: n_ref,
        flagged_years,
    })
}

/// Result of run-length declustering of a daily series.
#[derive(Debug, Clone, PartialEq)]
pub struct Declustered {
    /// Maximum of each exceedance cluster, in order of occurrence.
    pub cluster_maxima: Vec<f64>,
    /// The series with each cluster collapsed to its maximum:
    /// sub-threshold days plus one value per cluster.
    pub declustered: Vec<f64>,
}

/// Run-length declustering: a cluster opens at a threshold exceedance
/// and stays open until `r` consecutive values fall at or below the
/// threshold; each cluster contributes only its maximum.
pub fn decluster(daily: &[f64], threshold: f64, r: usize) -> Result<Declustered> {
    if r == 0 {
        return Err(Error::Invalid("run length must be at least 1".into()));
    }
    if !threshold.is_finite() || daily.iter().any(|v| !v.is_finite()) {
        return Err(Error::domain("series and threshold must be finite"));
    }
    let mut cluster_maxima = Vec::new();
    let mut declustered = Vec::new();
    let mut open: Option<f64> = None; // running cluster maximum
    let mut below = 0usize;
    for &v in daily {
        match open {
            None => {
                if v > threshold {
                    open = Some(v);
                    below = 0;
                } else {
                    declustered.push(v);
                }
            }
            Some(m) => {
                if v > threshold {
                    open = Some(m.max(v));
                    below = 0;
                } else {
                    below += 1;
                    if below == r {
                        cluster_maxima.push(m);
                        declustered.push(m);
                        open = None;
                        below = 0;
                        // the closing run stays in the series as ordinary
                        // sub-threshold days
                        for _ in 0..r {
                            declustered.push(v);
                        }
                    }
                }
            }
        }
    }
    if let Some(m) = open {
        cluster_maxima.push(m);
        declustered.push(m);
    }
    Ok(Declustered {
        cluster_maxima,
        declustered,
    })
}
