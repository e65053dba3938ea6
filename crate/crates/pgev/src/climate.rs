//! Frequency/intensity projections under covariate shifts: return levels
//! from the implied GEV, relative rate/scale changes, and exceedance
//! probabilities of today's return level under a shifted covariate.

use crate::error::{Error, Result};
use crate::evd::{pgev_cdf, pgev_to_gev, GevParams, PgevParams, GAMMA_TOL};
use crate::fit::{PgevTheta, PixelFit, Variant};
use crate::select::aic_region_tables;

/// Relative change of a log-linear quantity under a covariate shift:
/// exp(slope * delta_x) - 1.
pub fn relative_change(slope: f64, delta_x: f64) -> f64 {
    (slope * delta_x).exp_m1()
}

/// Level exceeded with probability `q` in one block, i.e. the (1-q)
/// quantile of the GEV: mu + sigma * ((-ln(1-q))^(-gamma) - 1) / gamma,
/// with the Gumbel limit mu - sigma * ln(-ln(1-q)) as gamma -> 0.
pub fn return_level(p: &GevParams, q: f64) -> Result<f64> {
    if !q.is_finite() || q <= 0.0 || q >= 1.0 {
        return Err(Error::domain(format!(
            "exceedance probability must lie in (0,1), got {q}"
        )));
    }
    // -ln(1-q) computed through ln_1p to keep precision for small q
    let y = -(-q).ln_1p();
    let ln_y = y.ln();
    if p.gamma.abs() <= GAMMA_TOL {
        Ok(p.mu - p.sigma * ln_y)
    } else {
        Ok(p.mu + p.sigma * (-p.gamma * ln_y).exp_m1() / p.gamma)
    }
}

/// Scenario outcome at one pixel for one covariate shift.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioRow {
    pub pixel_id: u64,
    pub variant: Variant,
    pub delta_x: f64,
    pub q: f64,
    /// Relative change in the exceedance rate, lambda_high/lambda_low - 1.
    pub delta_lambda: f64,
    /// Relative change in the tail scale, sigma_high/sigma_low - 1.
    pub delta_sigma: f64,
    /// Return level at the baseline covariate.
    pub r_q_low: f64,
    /// Probability of exceeding that level after the shift.
    pub prob_high: f64,
}

/// Covariate shifts to evaluate, shared across pixels.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioSpec {
    /// Baseline covariate value (typically the smoothed covariate of the
    /// final observed year).
    pub x_low: f64,
    /// Shifts delta_x added to the baseline.
    pub delta_x: Vec<f64>,
    /// Baseline exceedance probability defining the return level.
    pub q: f64,
}

impl ScenarioSpec {
    pub const DEFAULT_DELTA_X: [f64; 4] = [0.5, 1.0, 2.0, 3.0];
    pub const DEFAULT_Q: f64 = 0.05;

    pub fn new(x_low: f64) -> Self {
        ScenarioSpec {
            x_low,
            delta_x: Self::DEFAULT_DELTA_X.to_vec(),
            q: Self::DEFAULT_Q,
        }
    }
}

/// Which fitted model feeds the scenario table.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VariantChoice {
    /// Per-pixel lowest-AIC model (ties toward fewer parameters).
    AicSelected,
    /// One fixed model at every pixel.
    Fixed(Variant),
}

/// Baseline return level and shifted exceedance probability for one model.
///
/// The return level solves the implied GEV at `x_low`; the probability is
/// evaluated through the tail representation at `x_low + delta_x`. For a
/// model whose only covariate response is the rate, the result reduces to
/// 1 - (1-q)^(lambda_high/lambda_low).
pub fn scenario_exceedance(
    theta: &PgevTheta,
    x_low: f64,
    delta_x: f64,
    q: f64,
) -> Result<(f64, f64)> {
    if !x_low.is_finite() || !delta_x.is_finite() {
        return Err(Error::domain("covariate values must be finite"));
    }
    let low = PgevParams::new(
        theta.lambda_at(x_low),
        theta.sigma_at(x_low),
        theta.gamma,
        theta.c,
    )?;
    let r_q = return_level(&pgev_to_gev(&low), q)?;
    let x_high = x_low + delta_x;
    let high = PgevParams::new(
        theta.lambda_at(x_high),
        theta.sigma_at(x_high),
        theta.gamma,
        theta.c,
    )?;
    Ok((r_q, 1.0 - pgev_cdf(r_q, &high)?))
}

/// Evaluate every pixel at every covariate shift. With `AicSelected`,
/// pixels with any non-convergent fit are skipped (they carry no AIC
/// winner); with a fixed variant, only that fit has to have converged.
pub fn scenario_table(
    fits: &[PixelFit],
    choice: VariantChoice,
    spec: &ScenarioSpec,
) -> Result<Vec<ScenarioRow>> {
    if spec.delta_x.is_empty() {
        return Err(Error::Invalid("no covariate shifts requested".into()));
    }
    let winners: std::collections::BTreeMap<u64, Variant> = match choice {
        VariantChoice::AicSelected => aic_region_tables(fits)
            .rows
            .iter()
            .map(|r| (r.pixel_id, r.best_with_stationary))
            .collect(),
        VariantChoice::Fixed(v) => fits
            .iter()
            .filter(|pf| pf.variant(v).converged)
            .map(|pf| (pf.pixel_id, v))
            .collect(),
    };
    let mut rows = Vec::new();
    for pf in fits {
        let Some(&variant) = winners.get(&pf.pixel_id) else {
            continue;
        };
        let theta = &pf.variant(variant).theta;
        for &dx in &spec.delta_x {
            let (r_q_low, prob_high) = scenario_exceedance(theta, spec.x_low, dx, spec.q)?;
            rows.push(ScenarioRow {
                pixel_id: pf.pixel_id,
                variant,
                delta_x: dx,
                q: spec.q,
                delta_lambda: relative_change(theta.beta1, dx),
                delta_sigma: relative_change(theta.alpha1, dx),
                r_q_low,
                prob_high,
            });
        }
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evd::{gev_cdf, pgev_sample};
    use crate::rng::{stream, uniform_open01};

    #[test]
    fn relative_change_basics() {
        assert_eq!(relative_change(0.0, 2.5), 0.0);
        assert_eq!(relative_change(0.7, 0.0), 0.0);
        assert!((relative_change(2.0_f64.ln(), 1.0) - 1.0).abs() < 1e-15);
        assert!((relative_change(0.1, 2.0) - 0.2_f64.exp_m1()).abs() < 1e-15);
    }

    #[test]
    fn return_level_reference_value() {
        let p = GevParams::new(0.0, 1.0, 0.1).unwrap();
        let r = return_level(&p, 0.05).unwrap();
        assert!((r - 3.458_415_766_194_411_5).abs() < 1e-12, "{r}");
    }

    #[test]
    fn return_level_at_q_one_minus_inv_e_is_mu() {
        // -ln(1-q) = 1 there, so the level equals mu for every gamma
        let q = 1.0 - (-1.0_f64).exp();
        for gamma in [-0.3, 0.0, 1e-9, 0.2] {
            let p = GevParams::new(7.5, 2.0, gamma).unwrap();
            let r = return_level(&p, q).unwrap();
            assert!((r - 7.5).abs() < 1e-12, "gamma {gamma}: {r}");
        }
    }

    #[test]
    fn return_level_inverts_the_cdf() {
        let mut rng = stream(21, "climate.rl.test", 0);
        for _ in 0..50 {
            let mu = 20.0 * uniform_open01(&mut rng) - 10.0;
            let sigma = 0.5 + 3.0 * uniform_open01(&mut rng);
            let gamma = 0.8 * uniform_open01(&mut rng) - 0.4;
            let q = 0.001 + 0.5 * uniform_open01(&mut rng);
            let p = GevParams::new(mu, sigma, gamma).unwrap();
            let r = return_level(&p, q).unwrap();
            let back = 1.0 - gev_cdf(r, &p).unwrap();
            assert!(
                (back - q).abs() < 1e-10,
                "mu {mu} sigma {sigma} gamma {gamma} q {q}: {back}"
            );
        }
    }

    #[test]
    fn return_level_gumbel_branch_is_continuous() {
        let a = return_level(&GevParams::new(3.0, 2.0, 1e-7).unwrap(), 0.02).unwrap();
        let b = return_level(&GevParams::new(3.0, 2.0, 1e-9).unwrap(), 0.02).unwrap();
        let c = return_level(&GevParams::new(3.0, 2.0, -1e-7).unwrap(), 0.02).unwrap();
        assert!((a - b).abs() < 1e-5);
        assert!((c - b).abs() < 1e-5);
        assert!(return_level(&GevParams::new(0.0, 1.0, 0.1).unwrap(), 0.0).is_err());
        assert!(return_level(&GevParams::new(0.0, 1.0, 0.1).unwrap(), 1.0).is_err());
    }

    fn theta(variant: Variant, b1: f64, a1: f64) -> PgevTheta {
        PgevTheta::new(variant, 3.6525_f64.ln(), b1, 10.0_f64.ln(), a1, 0.1, 50.0)
    }

    #[test]
    fn zero_slopes_leave_q_unchanged() {
        let th = theta(Variant::Stationary, 0.0, 0.0);
        for dx in [0.0, 0.5, 1.0, 3.0] {
            let (_, prob) = scenario_exceedance(&th, 0.3, dx, 0.05).unwrap();
            assert!((prob - 0.05).abs() < 1e-12, "dx {dx}: {prob}");
        }
    }

    #[test]
    fn zero_shift_leaves_q_unchanged() {
        for (b1, a1, v) in [
            (0.4, 0.0, Variant::RateOnly),
            (0.0, 0.3, Variant::ScaleOnly),
            (0.4, 0.3, Variant::Full),
        ] {
            let (_, prob) = scenario_exceedance(&theta(v, b1, a1), 1.2, 0.0, 0.05).unwrap();
            assert!((prob - 0.05).abs() < 1e-12, "{v:?}: {prob}");
        }
    }

    #[test]
    fn rate_only_matches_closed_form() {
        // rate response alone: prob = 1 - (1-q)^(lambda_high/lambda_low)
        let q = 0.05;
        for (b1, dx, x_low) in [(0.4, 1.0, 0.0), (0.4, 1.0, 2.0), (0.25, 2.0, -1.0)] {
            let th = theta(Variant::RateOnly, b1, 0.0);
            let (_, prob) = scenario_exceedance(&th, x_low, dx, q).unwrap();
            let ratio = (b1 * dx).exp();
            let closed = 1.0 - (1.0 - q).powf(ratio);
            assert!((prob - closed).abs() < 1e-10, "{prob} vs {closed}");
        }
        // doubling the rate: 1 - 0.95^2 = 0.0975
        let th = theta(Variant::RateOnly, 2.0_f64.ln(), 0.0);
        let (_, prob) = scenario_exceedance(&th, 0.0, 1.0, q).unwrap();
        assert!((prob - 0.0975).abs() < 1e-10, "{prob}");
        // 50-digit evaluation of the closed form at slope 0.4, dx 1
        let th = theta(Variant::RateOnly, 0.4, 0.0);
        let (_, prob) = scenario_exceedance(&th, 0.0, 1.0, q).unwrap();
        assert!((prob - 0.073_666_171_525_610_0).abs() < 1e-10, "{prob}");
    }

    #[test]
    fn scale_only_matches_monte_carlo() {
        let th = theta(Variant::ScaleOnly, 0.0, 0.3);
        let (r_q, prob) = scenario_exceedance(&th, 0.0, 1.0, 0.05).unwrap();
        let high = PgevParams::new(th.lambda_at(1.0), th.sigma_at(1.0), th.gamma, th.c).unwrap();
        let n = 1_000_000usize;
        let draws = pgev_sample(n, &high, 777);
        let hits = draws.iter().filter(|&&z| z > r_q).count();
        let p_hat = hits as f64 / n as f64;
        let se = (p_hat * (1.0 - p_hat) / n as f64).sqrt();
        assert!(
            (prob - p_hat).abs() < 3.0 * se,
            "analytic {prob}, mc {p_hat} +- {se}"
        );
    }

    #[test]
    fn exceedance_is_monotone_in_shift_for_positive_slopes() {
        for (b1, a1, v) in [
            (0.4, 0.0, Variant::RateOnly),
            (0.0, 0.3, Variant::ScaleOnly),
            (0.3, 0.2, Variant::Full),
        ] {
            let th = theta(v, b1, a1);
            let mut last = 0.0;
            for i in 0..13 {
                let dx = i as f64 * 0.25;
                let (_, prob) = scenario_exceedance(&th, 0.0, dx, 0.05).unwrap();
                assert!(prob >= last - 1e-13, "{v:?} dx {dx}: {prob} < {last}");
                last = prob;
            }
        }
    }

    #[test]
    fn scenario_table_respects_choice_and_shape() {
        use crate::data::Region;
        use crate::evd::pgev_quantile;
        use crate::fit::{fit_grid, ThresholdSpec};

        let truth = theta(Variant::RateOnly, 0.4, 0.0);
        let x: Vec<f64> = (0..120).map(|i| i as f64 / 40.0 - 1.5).collect();
        let series: Vec<crate::data::GridSeries> = (0..4)
            .map(|j| {
                let mut rng = stream(61, "climate.table.test", j as u64);
                let values = x
                    .iter()
                    .map(|&xt| {
                        let p = PgevParams::new(
                            truth.lambda_at(xt),
                            truth.sigma_at(xt),
                            truth.gamma,
                            truth.c,
                        )
                        .unwrap();
                        pgev_quantile(uniform_open01(&mut rng), &p).unwrap()
                    })
                    .collect();
                crate::data::GridSeries {
                    pixel_id: j + 1,
                    lat: 23.0,
                    lon: 121.0 + j as f64 * 0.05,
                    region: Region::North,
                    values,
                }
            })
            .collect();
        let grid = crate::data::Grid {
            years: (0..120).collect(),
            series,
        };
        let fits = fit_grid(&grid, &x, &ThresholdSpec::default()).unwrap();
        assert_eq!(fits.pixels.len(), 4);

        let spec = ScenarioSpec::new(1.5);
        let rows = scenario_table(&fits.pixels, VariantChoice::AicSelected, &spec).unwrap();
        assert_eq!(rows.len(), 4 * spec.delta_x.len());
        for row in &rows {
            let pf = fits.pixels.iter().find(|p| p.pixel_id == row.pixel_id).unwrap();
            let th = &pf.variant(row.variant).theta;
            assert!((row.delta_lambda - relative_change(th.beta1, row.delta_x)).abs() < 1e-15);
            assert!((row.delta_sigma - relative_change(th.alpha1, row.delta_x)).abs() < 1e-15);
            assert!(row.prob_high >= 0.0 && row.prob_high <= 1.0);
        }

        let fixed = scenario_table(&fits.pixels, VariantChoice::Fixed(Variant::Full), &spec).unwrap();
        assert!(fixed.iter().all(|r| r.variant == Variant::Full));
        assert_eq!(fixed.len(), 4 * spec.delta_x.len());

        let empty = ScenarioSpec {
            x_low: 0.0,
            delta_x: vec![],
            q: 0.05,
        };
        assert!(scenario_table(&fits.pixels, VariantChoice::AicSelected, &empty).is_err());
    }
}
