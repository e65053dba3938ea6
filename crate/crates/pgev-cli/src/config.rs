//! Pipeline configuration: JSON file with flat keys, overridable per flag.

use anyhow::{bail, Context, Result};
use pgev::fit::{PgevTheta, ThresholdSpec, Variant};
use pgev::spatial::FitMethod;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

/// Everything the pipeline stages need, with defaults matching the
/// analysis this tool was built for: daily-quantile threshold p = 0.99,
/// covariate shifts {0.5, 1, 2, 3}, baseline exceedance q = 0.05,
/// declustering run length r = 3, and B = 100 bootstrap replicates.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    /// Annual-maximum input CSV (pixel_id,lat,lon,region,year,value).
    /// Defaults to the bundled synthetic dataset in the output directory.
    pub rainfall_csv: Option<PathBuf>,
    /// Covariate input CSV (year,value). Same default rule.
    pub covariate_csv: Option<PathBuf>,

    /// Daily quantile defining the per-pixel threshold.
    pub threshold_p: f64,
    /// Lowess smoother span (fraction of points) for the covariate.
    pub lowess_span: f64,
    /// Lowess robustness iterations.
    pub lowess_iters: usize,
    /// Largest autocorrelation lag reported by the eda stage.
    pub acf_max_lag: usize,

    /// Covariate shifts for the scenario table.
    pub delta_x: Vec<f64>,
    /// Baseline exceedance probability defining the return level.
    pub scenario_q: f64,

    /// Variogram fitting method: "ls", "wls", or "mle".
    pub variogram_method: String,
    /// Kriging target grid spacing in km.
    pub grid_spacing_km: f64,
    /// Keep kriging targets within this many km of a data pixel.
    pub grid_within_km: f64,

    /// Bootstrap replicates for the QQ confidence bands.
    pub bootstrap_b: usize,

    /// Declustering run length (consecutive sub-threshold days that close
    /// a cluster).
    pub decluster_r: usize,
    /// Length of the simulated daily series in the decluster check.
    pub decluster_days: usize,

    /// Synthetic data generator: grid extent and years.
    pub synth_nx: usize,
    pub synth_ny: usize,
    pub synth_years: usize,
    /// Synthetic truth parameters (log rate/scale intercepts and slopes,
    /// tail shape, threshold).
    pub synth_beta0: f64,
    pub synth_beta1: f64,
    pub synth_alpha0: f64,
    pub synth_alpha1: f64,
    pub synth_gamma: f64,
    pub synth_c: f64,
    /// Standard deviation of per-pixel Gaussian jitter on the intercepts.
    pub synth_intercept_sd: f64,
    /// Spatial copula smoothness and range for the synthetic annual
    /// fields; rho 0 draws pixels independently.
    pub synth_nu: f64,
    pub synth_rho_km: f64,

    /// Root seed; all stage randomness derives from it.
    pub seed: u64,
    /// Years dropped at load time from both inputs.
    pub exclude_years: Vec<i32>,
    /// Force one model everywhere in the scenario table instead of the
    /// per-pixel AIC winner: "Stationary", "RateOnly", "ScaleOnly", "Full".
    pub variant: Option<String>,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            rainfall_csv: None,
            covariate_csv: None,
            threshold_p: ThresholdSpec::DEFAULT_P,
            lowess_span: 2.0 / 3.0,
            lowess_iters: 3,
            acf_max_lag: 15,
            delta_x: vec![0.5, 1.0, 2.0, 3.0],
            scenario_q: 0.05,
            variogram_method: "wls".into(),
            grid_spacing_km: 1.0,
            grid_within_km: 5.0,
            bootstrap_b: 100,
            decluster_r: 3,
            decluster_days: 22_265,
            synth_nx: 10,
            synth_ny: 10,
            synth_years: 61,
            synth_beta0: (365.25 * (1.0 - ThresholdSpec::DEFAULT_P)).ln(),
            synth_beta1: 0.0,
            synth_alpha0: 10.0f64.ln(),
            synth_alpha1: 0.0,
            synth_gamma: 0.1,
            synth_c: 50.0,
            synth_intercept_sd: 0.1,
            synth_nu: 1.5,
            synth_rho_km: 25.0,
            seed: 42,
            exclude_years: Vec::new(),
            variant: None,
        }
    }
}

impl Config {
    /// Defaults, or the parsed JSON file when a path is given.
    pub fn load(path: Option<&Path>) -> Result<Config> {
        match path {
            None => Ok(Config::default()),
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .with_context(|| format!("cannot read config file {}", p.display()))?;
                let cfg: Config = serde_json::from_str(&text)
                    .with_context(|| format!("cannot parse config file {}", p.display()))?;
                Ok(cfg)
            }
        }
    }

    /// Command-line flags win over config-file values.
    pub fn apply_overrides(
        &mut self,
        seed: Option<u64>,
        exclude_years: Option<Vec<i32>>,
        variant: Option<String>,
    ) {
        if let Some(s) = seed {
            self.seed = s;
        }
        if let Some(e) = exclude_years {
            self.exclude_years = e;
        }
        if let Some(v) = variant {
            self.variant = Some(v);
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.threshold_p > 0.0 && self.threshold_p < 1.0) {
            bail!("threshold_p must lie in (0,1), got {}", self.threshold_p);
        }
        if !(self.scenario_q > 0.0 && self.scenario_q < 1.0) {
            bail!("scenario_q must lie in (0,1), got {}", self.scenario_q);
        }
        if !(self.lowess_span > 0.0 && self.lowess_span <= 1.0) {
            bail!("lowess_span must lie in (0,1], got {}", self.lowess_span);
        }
        if self.delta_x.is_empty() {
            bail!("delta_x must list at least one covariate shift");
        }
        if !self.delta_x.iter().all(|d| d.is_finite()) {
            bail!("delta_x values must be finite");
        }
        self.fit_method()?;
        self.variant_override()?;
        if self.decluster_r == 0 {
            bail!("decluster_r must be at least 1");
        }
        if !(self.grid_spacing_km > 0.0 && self.grid_within_km > 0.0) {
            bail!("grid_spacing_km and grid_within_km must be positive");
        }
        if self.synth_nx == 0 || self.synth_ny == 0 || self.synth_years == 0 {
            bail!("synth grid extent and year count must be positive");
        }
        Ok(())
    }

    pub fn fit_method(&self) -> Result<FitMethod> {
        match self.variogram_method.as_str() {
            "ls" => Ok(FitMethod::Ls),
            "wls" => Ok(FitMethod::Wls),
            "mle" => Ok(FitMethod::Mle),
            other => bail!("variogram_method must be ls, wls, or mle, got {other:?}"),
        }
    }

    pub fn variant_override(&self) -> Result<Option<Variant>> {
        match &self.variant {
            None => Ok(None),
            Some(s) => Variant::parse(s).map(Some).ok_or_else(|| {
                anyhow::anyhow!(
                    "variant must be Stationary, RateOnly, ScaleOnly, or Full, got {s:?}"
                )
            }),
        }
    }

    pub fn threshold(&self) -> Result<ThresholdSpec> {
        Ok(ThresholdSpec::new(self.threshold_p)?)
    }

    /// Truth parameters for the synthetic generator.
    pub fn synth_base(&self) -> PgevTheta {
        PgevTheta::new(
            Variant::Full,
            self.synth_beta0,
            self.synth_beta1,
            self.synth_alpha0,
            self.synth_alpha1,
            self.synth_gamma,
            self.synth_c,
        )
    }

    /// Input rainfall path: configured, or the bundled synthetic file.
    pub fn rainfall_path(&self, out_dir: &Path) -> PathBuf {
        self.rainfall_csv
            .clone()
            .unwrap_or_else(|| out_dir.join("synthetic_grid.csv"))
    }

    /// Input covariate path: configured, or the bundled synthetic file.
    pub fn covariate_path(&self, out_dir: &Path) -> PathBuf {
        self.covariate_csv
            .clone()
            .unwrap_or_else(|| out_dir.join("synthetic_covariate.csv"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        let cfg = Config::default();
        cfg.validate().unwrap();
        assert_eq!(cfg.threshold_p, 0.99);
        assert_eq!(cfg.delta_x, vec![0.5, 1.0, 2.0, 3.0]);
        assert_eq!(cfg.scenario_q, 0.05);
        assert_eq!(cfg.decluster_r, 3);
        assert_eq!(cfg.bootstrap_b, 100);
        assert_eq!(cfg.fit_method().unwrap(), FitMethod::Wls);
        assert_eq!(cfg.variant_override().unwrap(), None);
    }

    #[test]
    fn json_round_trip_and_unknown_key_rejection() {
        let cfg = Config::default();
        let text = serde_json::to_string(&cfg).unwrap();
        let back: Config = serde_json::from_str(&text).unwrap();
        assert_eq!(back.seed, cfg.seed);
        let bad = r#"{"threshold_p": 0.95, "no_such_key": 1}"#;
        assert!(serde_json::from_str::<Config>(bad).is_err());
        let partial: Config = serde_json::from_str(r#"{"seed": 7}"#).unwrap();
        assert_eq!(partial.seed, 7);
        assert_eq!(partial.threshold_p, 0.99);
    }

    #[test]
    fn invalid_values_are_rejected() {
        let mut cfg = Config::default();
        cfg.scenario_q = 1.5;
        assert!(cfg.validate().is_err());
        let mut cfg = Config::default();
        cfg.variogram_method = "ols".into();
        assert!(cfg.validate().is_err());
        let mut cfg = Config::default();
        cfg.variant = Some("Quadratic".into());
        assert!(cfg.validate().is_err());
        let mut cfg = Config::default();
        cfg.delta_x.clear();
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn overrides_win() {
        let mut cfg = Config::default();
        cfg.apply_overrides(Some(9), Some(vec![2009]), Some("Full".into()));
        assert_eq!(cfg.seed, 9);
        assert_eq!(cfg.exclude_years, vec![2009]);
        assert_eq!(cfg.variant_override().unwrap(), Some(Variant::Full));
    }
}
