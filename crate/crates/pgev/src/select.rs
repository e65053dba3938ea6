//! Model selection over the fitted variants: likelihood-ratio tests with
//! chi-square p-values, AIC tables with per-region winner counts, and
//! sorted p-value QQ curves.

use std::collections::BTreeMap;

use crate::data::Region;
use crate::error::{Error, Result};
use crate::fit::{PixelFit, Variant};
use crate::special::gamma_q;

/// Chi-square survival function (upper tail) via the regularized upper
/// incomplete gamma: SF(x; df) = Q(df/2, x/2). Absolute error <= 1e-10.
pub fn chisq_sf(x: f64, df: usize) -> Result<f64> {
    if !(x >= 0.0) {
        return Err(Error::domain(format!("chi-square statistic must be >= 0, got {x}")));
    }
    if df == 0 {
        return Err(Error::domain("df must be >= 1"));
    }
    if x == 0.0 {
        return Ok(1.0);
    }
    Ok(gamma_q(df as f64 / 2.0, x / 2.0))
}

/// The five nested comparisons run per pixel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum LrtTest {
    /// Stationary vs RateOnly (rate slope), df 1.
    T1Lambda,
    /// Stationary vs ScaleOnly (scale slope), df 1.
    T2Sigma,
    /// Stationary vs Full (both slopes), df 2.
    T3Both,
    /// RateOnly vs Full, df 1.
    TaFullVsLambda,
    /// ScaleOnly vs Full, df 1.
    TbFullVsSigma,
}

impl LrtTest {
    pub const ALL: [LrtTest; 5] = [
        LrtTest::T1Lambda,
        LrtTest::T2Sigma,
        LrtTest::T3Both,
        LrtTest::TaFullVsLambda,
        LrtTest::TbFullVsSigma,
    ];

    pub fn df(self) -> usize {
        match self {
            LrtTest::T3Both => 2,
            _ => 1,
        }
    }

    /// (restricted, full) variant pair the test compares.
    pub fn variants(self) -> (Variant, Variant) {
        match self {
            LrtTest::T1Lambda => (Variant::Stationary, Variant::RateOnly),
            LrtTest::T2Sigma => (Variant::Stationary, Variant::ScaleOnly),
            LrtTest::T3Both => (Variant::Stationary, Variant::Full),
            LrtTest::TaFullVsLambda => (Variant::RateOnly, Variant::Full),
            LrtTest::TbFullVsSigma => (Variant::ScaleOnly, Variant::Full),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            LrtTest::T1Lambda => "T1_lambda",
            LrtTest::T2Sigma => "T2_sigma",
            LrtTest::T3Both => "T3_both",
            LrtTest::TaFullVsLambda => "Ta_full_vs_lambda",
            LrtTest::TbFullVsSigma => "Tb_full_vs_sigma",
        }
    }
}

impl std::fmt::Display for LrtTest {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One likelihood-ratio test at one pixel.
#[derive(Debug, Clone, PartialEq)]
pub struct LrtResult {
    pub pixel_id: u64,
    pub region: Region,
    pub test: LrtTest,
    pub statistic: f64,
    pub df: usize,
    pub p_value: f64,
}

/// Likelihood-ratio statistic -2(l_restricted - l_full). Roundoff slightly
/// below zero (>= -1e-6) clamps to 0; anything more negative means the fits
/// are inconsistent and is an error.
pub fn lrt_statistic(loglik_restricted: f64, loglik_full: f64) -> Result<f64> {
    let lambda = -2.0 * (loglik_restricted - loglik_full);
    if lambda >= 0.0 {
        Ok(lambda)
    } else if lambda >= -1e-6 {
        Ok(0.0)
    } else {
        Err(Error::Invalid(format!(
            "restricted log-likelihood exceeds full by {:.3e}",
            -lambda / 2.0
        )))
    }
}

/// A pixel left out of the tests, with the reason.
#[derive(Debug, Clone, PartialEq)]
pub struct ExcludedPixel {
    pub pixel_id: u64,
    pub region: Region,
    pub reason: String,
}

/// All per-pixel test results plus the exclusion diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct LrtReport {
    pub results: Vec<LrtResult>,
    pub excluded: Vec<ExcludedPixel>,
}

/// Run the five tests at every pixel whose baseline and variant fits all
/// converged; other pixels are excluded and reported, never imputed.
pub fn run_lrts(fits: &[PixelFit]) -> LrtReport {
    let mut results = Vec::new();
    let mut excluded = Vec::new();
    'pixel: for pf in fits {
        if !pf.gev.converged || !pf.all_converged() {
            let bad: Vec<&str> = Variant::ALL
                .iter()
                .filter(|&&v| !pf.variant(v).converged)
                .map(|v| v.as_str())
                .collect();
            let mut reason = String::from("non-convergent fit");
            if !bad.is_empty() {
                reason = format!("non-convergent fit: {}", bad.join(", "));
            }
            excluded.push(ExcludedPixel {
                pixel_id: pf.pixel_id,
                region: pf.region,
                reason,
            });
            continue;
        }
        let mut pixel_results = Vec::with_capacity(5);
        for test in LrtTest::ALL {
            let (r, f) = test.variants();
            let stat = match lrt_statistic(pf.variant(r).loglik, pf.variant(f).loglik) {
                Ok(s) => s,
                Err(e) => {
                    excluded.push(ExcludedPixel {
                        pixel_id: pf.pixel_id,
                        region: pf.region,
                        reason: format!("{test}: {e}"),
                    });
                    continue 'pixel;
                }
            };
            pixel_results.push(LrtResult {
                pixel_id: pf.pixel_id,
                region: pf.region,
                test,
                statistic: stat,
                df: test.df(),
                p_value: chisq_sf(stat, test.df()).expect("stat >= 0"),
            });
        }
        results.extend(pixel_results);
    }
    LrtReport { results, excluded }
}

/// Akaike information criterion, -2 loglik + 2k.
pub fn aic(loglik: f64, k: usize) -> f64 {
    -2.0 * loglik + 2.0 * k as f64
}

/// Per-pixel AIC values and winners (with and without the Stationary model
/// in the running).
#[derive(Debug, Clone, PartialEq)]
pub struct AicRow {
    pub pixel_id: u64,
    pub region: Region,
    /// Indexed like [`Variant::ALL`].
    pub aic: [f64; 4],
    pub best_with_stationary: Variant,
    pub best_without_stationary: Variant,
}

/// AIC rows plus per-region winner counts. `counts_*[region][variant]`
/// follow [`Region::ALL`] x [`Variant::ALL`] order; in the
/// without-Stationary table the Stationary column is always zero.
#[derive(Debug, Clone, PartialEq)]
pub struct AicTables {
    pub rows: Vec<AicRow>,
    pub counts_with_stationary: BTreeMap<Region, [usize; 4]>,
    pub counts_without_stationary: BTreeMap<Region, [usize; 4]>,
    pub excluded: Vec<ExcludedPixel>,
}

fn best_variant(aics: &[f64; 4], candidates: &[Variant]) -> Variant {
    // strict < keeps the earliest candidate on ties; candidate order is
    // ascending in parameter count, so ties resolve toward fewer parameters
    let mut best = candidates[0];
    let idx = |v: Variant| Variant::ALL.iter().position(|&w| w == v).unwrap();
    for &v in &candidates[1..] {
        if aics[idx(v)] < aics[idx(best)] {
            best = v;
        }
    }
    best
}

/// Build the AIC tables over all fully converged pixels.
pub fn aic_region_tables(fits: &[PixelFit]) -> AicTables {
    let mut rows = Vec::new();
    let mut excluded = Vec::new();
    let mut with_st: BTreeMap<Region, [usize; 4]> = BTreeMap::new();
    let mut without_st: BTreeMap<Region, [usize; 4]> = BTreeMap::new();
    for region in Region::ALL {
        with_st.insert(region, [0; 4]);
        without_st.insert(region, [0; 4]);
    }
    for pf in fits {
        if !pf.gev.converged || !pf.all_converged() {
            excluded.push(ExcludedPixel {
                pixel_id: pf.pixel_id,
                region: pf.region,
                reason: "non-convergent fit".into(),
            });
            continue;
        }
        let mut aics = [0.0; 4];
        for (i, v) in Variant::ALL.iter().enumerate() {
            aics[i] = aic(pf.variant(*v).loglik, v.k());
        }
        let best_with = best_variant(&aics, &Variant::ALL);
        let best_without = best_variant(&aics, &Variant::ALL[1..]);
        let vi = |v: Variant| Variant::ALL.iter().position(|&w| w == v).unwrap();
        with_st.get_mut(&pf.region).unwrap()[vi(best_with)] += 1;
        without_st.get_mut(&pf.region).unwrap()[vi(best_without)] += 1;
        rows.push(AicRow {
            pixel_id: pf.pixel_id,
            region: pf.region,
            aic: aics,
            best_with_stationary: best_with,
            best_without_stationary: best_without,
        });
    }
    AicTables {
        rows,
        counts_with_stationary: with_st,
        counts_without_stationary: without_st,
        excluded,
    }
}

/// Ascending-sorted p-values paired with their normalized ranks i/n,
/// i = 1..n. Errors on empty input.
pub fn pvalue_qq_curve(pvalues: &[f64]) -> Result<Vec<(f64, f64)>> {
    if pvalues.is_empty() {
        return Err(Error::Invalid("no p-values to sort".into()));
    }
    if pvalues.iter().any(|p| !p.is_finite()) {
        return Err(Error::domain("p-values must be finite"));
    }
    let mut sorted = pvalues.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = sorted.len() as f64;
    Ok(sorted
        .into_iter()
        .enumerate()
        .map(|(i, p)| ((i as f64 + 1.0) / n, p))
        .collect())
}
