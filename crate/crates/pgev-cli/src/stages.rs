//! Pipeline stages. Each stage reads the previous stage's CSV artifacts
//! from the output directory and writes its own, so any stage can be
//! rerun in isolation and a missing upstream file names the stage that
//! produces it. All numeric cells are written with Rust's shortest
//! round-trip float formatting, which makes reruns byte-identical.

use anyhow::{bail, Context, Result};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use pgev::climate::{scenario_table, ScenarioSpec, VariantChoice};
use pgev::copula::{decluster, sample_quantile, simulate_qq_bands, NullFamily};
use pgev::data::{load_covariate, load_grid, write_grid, CovariateSeries, Grid, Region};
use pgev::eda::{functional_boxplot, lowess, sample_acf};
use pgev::evd::GevParams;
use pgev::fit::{fit_grid, GevFit, GridFit, PgevTheta, PixelFit, Variant, VariantFit};
use pgev::rng::derive_seed;
use pgev::select::{aic_region_tables, pvalue_qq_curve, run_lrts, LrtTest};
use pgev::spatial::{
    empirical_variogram, fine_grid, fit_variogram, krige_with_mean, BinSpec, FitMethod,
    MaternParams,
};
use pgev::synth::{synth_daily, synth_grid, write_truths, SynthSpec};

use crate::config::Config;

// ---------------------------------------------------------------------------
// artifact names
// ---------------------------------------------------------------------------

pub const SYNTH_GRID: &str = "synthetic_grid.csv";
pub const SYNTH_COVARIATE: &str = "synthetic_covariate.csv";
pub const SYNTH_TRUTHS: &str = "synthetic_truths.csv";
pub const GRID: &str = "grid.csv";
pub const COVARIATE_SMOOTHED: &str = "covariate_smoothed.csv";
pub const EDA_ACF: &str = "eda_acf.csv";
pub const EDA_FBPLOT: &str = "eda_fbplot.csv";
pub const EDA_OUTLIERS: &str = "eda_outliers.csv";
pub const FITS: &str = "fits.csv";
pub const FITS_GEV: &str = "fits_gev.csv";
pub const FIT_SKIPPED: &str = "fit_skipped.csv";
pub const LRT: &str = "lrt.csv";
pub const AIC: &str = "aic.csv";
pub const AIC_REGION_COUNTS: &str = "aic_region_counts.csv";
pub const QQ_CURVES: &str = "qq_curves.csv";
pub const SELECT_DIAGNOSTICS: &str = "select_diagnostics.csv";
pub const SCENARIOS: &str = "scenarios.csv";
pub const VARIOGRAM: &str = "variogram.csv";
pub const MATERN_FIT: &str = "matern_fit.csv";
pub const KRIGE_BETA1: &str = "krige_beta1.csv";
pub const KRIGE_ALPHA1: &str = "krige_alpha1.csv";
pub const QQ_BANDS: &str = "qq_bands.csv";
pub const DECLUSTER_CHECK: &str = "decluster_check.csv";

/// Everything `run-all` emits, in emission order.
pub const RUN_ALL_OUTPUTS: [&str; 19] = [
    GRID,
    COVARIATE_SMOOTHED,
    EDA_ACF,
    EDA_FBPLOT,
    EDA_OUTLIERS,
    FITS,
    FITS_GEV,
    FIT_SKIPPED,
    LRT,
    AIC,
    AIC_REGION_COUNTS,
    QQ_CURVES,
    SELECT_DIAGNOSTICS,
    SCENARIOS,
    VARIOGRAM,
    MATERN_FIT,
    KRIGE_BETA1,
    KRIGE_ALPHA1,
    QQ_BANDS,
];

// ---------------------------------------------------------------------------
// small CSV helpers
// ---------------------------------------------------------------------------

fn writer(path: &Path) -> Result<csv::Writer<std::fs::File>> {
    csv::Writer::from_path(path).with_context(|| format!("cannot create {}", path.display()))
}

fn require(path: &Path, produced_by: &str) -> Result<()> {
    if !path.exists() {
        bail!(
            "missing {}; run `pgev {produced_by}` first",
            path.display()
        );
    }
    Ok(())
}

fn require_input(path: &Path, role: &str) -> Result<()> {
    if !path.exists() {
        bail!(
            "input {role} CSV not found at {}; set {role}_csv in the config \
             or generate bundled data with `pgev synth`",
            path.display()
        );
    }
    Ok(())
}

struct Table {
    path: PathBuf,
    cols: BTreeMap<String, usize>,
    rows: Vec<csv::StringRecord>,
}

impl Table {
    fn read(path: &Path) -> Result<Table> {
        let mut rdr = csv::Reader::from_path(path)
            .with_context(|| format!("cannot read {}", path.display()))?;
        let cols = rdr
            .headers()
            .with_context(|| format!("cannot read header of {}", path.display()))?
            .iter()
            .enumerate()
            .map(|(i, h)| (h.to_string(), i))
            .collect();
        let rows = rdr
            .records()
            .collect::<std::result::Result<Vec<_>, _>>()
            .with_context(|| format!("cannot parse {}", path.display()))?;
        Ok(Table {
            path: path.to_path_buf(),
            cols,
            rows,
        })
    }

    fn col(&self, name: &str) -> Result<usize> {
        self.cols.get(name).copied().ok_or_else(|| {
            anyhow::anyhow!("{} is missing the column {name:?}", self.path.display())
        })
    }

    fn cell<'a>(&self, row: &'a csv::StringRecord, idx: usize) -> Result<&'a str> {
        row.get(idx)
            .ok_or_else(|| anyhow::anyhow!("short row in {}", self.path.display()))
    }

    fn f64(&self, row: &csv::StringRecord, idx: usize) -> Result<f64> {
        let s = self.cell(row, idx)?;
        s.parse()
            .with_context(|| format!("bad number {s:?} in {}", self.path.display()))
    }

    fn u64(&self, row: &csv::StringRecord, idx: usize) -> Result<u64> {
        let s = self.cell(row, idx)?;
        s.parse()
            .with_context(|| format!("bad integer {s:?} in {}", self.path.display()))
    }

    fn bool(&self, row: &csv::StringRecord, idx: usize) -> Result<bool> {
        let s = self.cell(row, idx)?;
        s.parse()
            .with_context(|| format!("bad boolean {s:?} in {}", self.path.display()))
    }
}

// ---------------------------------------------------------------------------
// shared readers/writers
// ---------------------------------------------------------------------------

fn write_covariate_smoothed(path: &Path, cov: &CovariateSeries) -> Result<()> {
    let sm = cov
        .smoothed
        .as_ref()
        .expect("covariate smoothed before writing");
    let mut w = writer(path)?;
    w.write_record(["year", "raw", "smoothed"])?;
    for i in 0..cov.years.len() {
        w.write_record([
            cov.years[i].to_string(),
            cov.raw[i].to_string(),
            sm[i].to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn read_covariate_smoothed(out_dir: &Path) -> Result<CovariateSeries> {
    let path = out_dir.join(COVARIATE_SMOOTHED);
    require(&path, "ingest")?;
    let t = Table::read(&path)?;
    let (cy, cr, cs) = (t.col("year")?, t.col("raw")?, t.col("smoothed")?);
    let mut years = Vec::new();
    let mut raw = Vec::new();
    let mut smoothed = Vec::new();
    for row in &t.rows {
        years.push(t.u64(row, cy)? as i32);
        raw.push(t.f64(row, cr)?);
        smoothed.push(t.f64(row, cs)?);
    }
    Ok(CovariateSeries {
        years,
        raw,
        smoothed: Some(smoothed),
    })
}

fn read_grid_artifact(out_dir: &Path) -> Result<Grid> {
    let path = out_dir.join(GRID);
    require(&path, "ingest")?;
    Ok(load_grid(&path)?)
}

fn write_fits(out_dir: &Path, fits: &GridFit) -> Result<()> {
    let mut w = writer(&out_dir.join(FITS))?;
    w.write_record([
        "pixel_id", "variant", "beta0", "beta1", "alpha0", "alpha1", "gamma", "c", "loglik",
        "converged", "iterations", "se_beta0", "se_beta1", "se_alpha0", "se_alpha1", "se_gamma",
        "t_beta1", "t_alpha1",
    ])?;
    for pf in &fits.pixels {
        for vf in &pf.variants {
            w.write_record([
                pf.pixel_id.to_string(),
                vf.theta.variant.as_str().to_string(),
                vf.theta.beta0.to_string(),
                vf.theta.beta1.to_string(),
                vf.theta.alpha0.to_string(),
                vf.theta.alpha1.to_string(),
                vf.theta.gamma.to_string(),
                vf.theta.c.to_string(),
                vf.loglik.to_string(),
                vf.converged.to_string(),
                vf.iterations.to_string(),
                vf.se[0].to_string(),
                vf.se[1].to_string(),
                vf.se[2].to_string(),
                vf.se[3].to_string(),
                vf.se[4].to_string(),
                vf.t_beta1.to_string(),
                vf.t_alpha1.to_string(),
            ])?;
        }
    }
    w.flush()?;

    let mut w = writer(&out_dir.join(FITS_GEV))?;
    w.write_record([
        "pixel_id", "lat", "lon", "region", "c", "mu", "sigma", "gamma", "loglik", "converged",
        "se_mu", "se_sigma", "se_gamma",
    ])?;
    for pf in &fits.pixels {
        w.write_record([
            pf.pixel_id.to_string(),
            pf.lat.to_string(),
            pf.lon.to_string(),
            pf.region.as_str().to_string(),
            pf.c.to_string(),
            pf.gev.params.mu.to_string(),
            pf.gev.params.sigma.to_string(),
            pf.gev.params.gamma.to_string(),
            pf.gev.loglik.to_string(),
            pf.gev.converged.to_string(),
            pf.gev.se[0].to_string(),
            pf.gev.se[1].to_string(),
            pf.gev.se[2].to_string(),
        ])?;
    }
    w.flush()?;

    let mut w = writer(&out_dir.join(FIT_SKIPPED))?;
    w.write_record(["pixel_id", "region", "reason"])?;
    for s in &fits.skipped {
        w.write_record([
            s.pixel_id.to_string(),
            s.region.as_str().to_string(),
            s.reason.clone(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Rebuild the per-pixel fit results from `fits.csv` + `fits_gev.csv`.
fn read_fits(out_dir: &Path) -> Result<Vec<PixelFit>> {
    let gev_path = out_dir.join(FITS_GEV);
    let fits_path = out_dir.join(FITS);
    require(&fits_path, "fit")?;
    require(&gev_path, "fit")?;

    struct PixelHead {
        lat: f64,
        lon: f64,
        region: Region,
        c: f64,
        gev: GevFit,
    }

    let t = Table::read(&gev_path)?;
    let (cid, clat, clon, creg, cc) = (
        t.col("pixel_id")?,
        t.col("lat")?,
        t.col("lon")?,
        t.col("region")?,
        t.col("c")?,
    );
    let (cmu, csig, cgam, cll, ccv) = (
        t.col("mu")?,
        t.col("sigma")?,
        t.col("gamma")?,
        t.col("loglik")?,
        t.col("converged")?,
    );
    let (cse0, cse1, cse2) = (t.col("se_mu")?, t.col("se_sigma")?, t.col("se_gamma")?);
    let mut order: Vec<u64> = Vec::new();
    let mut heads: BTreeMap<u64, PixelHead> = BTreeMap::new();
    for row in &t.rows {
        let id = t.u64(row, cid)?;
        let region_s = t.cell(row, creg)?;
        let region = Region::parse(region_s)
            .ok_or_else(|| anyhow::anyhow!("unknown region {region_s:?} in fits_gev.csv"))?;
        let gev = GevFit {
            params: GevParams::new(t.f64(row, cmu)?, t.f64(row, csig)?, t.f64(row, cgam)?)?,
            loglik: t.f64(row, cll)?,
            converged: t.bool(row, ccv)?,
            se: [t.f64(row, cse0)?, t.f64(row, cse1)?, t.f64(row, cse2)?],
        };
        order.push(id);
        heads.insert(
            id,
            PixelHead {
                lat: t.f64(row, clat)?,
                lon: t.f64(row, clon)?,
                region,
                c: t.f64(row, cc)?,
                gev,
            },
        );
    }

    let t = Table::read(&fits_path)?;
    let (cid, cvar) = (t.col("pixel_id")?, t.col("variant")?);
    let (cb0, cb1, ca0, ca1, cg, cc) = (
        t.col("beta0")?,
        t.col("beta1")?,
        t.col("alpha0")?,
        t.col("alpha1")?,
        t.col("gamma")?,
        t.col("c")?,
    );
    let (cll, ccv, cit) = (t.col("loglik")?, t.col("converged")?, t.col("iterations")?);
    let cse: [usize; 5] = [
        t.col("se_beta0")?,
        t.col("se_beta1")?,
        t.col("se_alpha0")?,
        t.col("se_alpha1")?,
        t.col("se_gamma")?,
    ];
    let (ctb, cta) = (t.col("t_beta1")?, t.col("t_alpha1")?);
    let mut variants: BTreeMap<u64, Vec<VariantFit>> = BTreeMap::new();
    for row in &t.rows {
        let id = t.u64(row, cid)?;
        let var_s = t.cell(row, cvar)?;
        let variant = Variant::parse(var_s)
            .ok_or_else(|| anyhow::anyhow!("unknown model variant {var_s:?} in fits.csv"))?;
        let theta = PgevTheta::new(
            variant,
            t.f64(row, cb0)?,
            t.f64(row, cb1)?,
            t.f64(row, ca0)?,
            t.f64(row, ca1)?,
            t.f64(row, cg)?,
            t.f64(row, cc)?,
        );
        let mut se = [0.0; 5];
        for (k, &idx) in cse.iter().enumerate() {
            se[k] = t.f64(row, idx)?;
        }
        let entry = variants.entry(id).or_default();
        let expected = Variant::ALL[entry.len().min(3)];
        if variant != expected {
            bail!(
                "fits.csv rows for pixel {id} are not the four model variants in order \
                 (expected {}, found {})",
                expected.as_str(),
                variant.as_str()
            );
        }
        entry.push(VariantFit {
            theta,
            loglik: t.f64(row, cll)?,
            converged: t.bool(row, ccv)?,
            iterations: t.u64(row, cit)? as usize,
            se,
            t_beta1: t.f64(row, ctb)?,
            t_alpha1: t.f64(row, cta)?,
        });
    }

    let mut pixels = Vec::with_capacity(order.len());
    for id in order {
        let head = heads.remove(&id).expect("head inserted above");
        let vf = variants
            .remove(&id)
            .ok_or_else(|| anyhow::anyhow!("fits.csv has no rows for pixel {id}"))?;
        let vf: [VariantFit; 4] = vf
            .try_into()
            .map_err(|v: Vec<_>| anyhow::anyhow!("pixel {id} has {} fit rows, need 4", v.len()))?;
        pixels.push(PixelFit {
            pixel_id: id,
            lat: head.lat,
            lon: head.lon,
            region: head.region,
            c: head.c,
            gev: head.gev,
            variants: vf,
        });
    }
    if !variants.is_empty() {
        bail!("fits.csv mentions pixels absent from fits_gev.csv");
    }
    Ok(pixels)
}

// ---------------------------------------------------------------------------
// stages
// ---------------------------------------------------------------------------

/// Generate the bundled synthetic dataset: a regular grid with known tail
/// parameters, its covariate, and the ground-truth table.
pub fn synth(cfg: &Config, out_dir: &Path) -> Result<()> {
    let mut spec = SynthSpec::regular(
        cfg.synth_nx,
        cfg.synth_ny,
        cfg.synth_years,
        cfg.synth_base(),
    );
    spec.intercept_sd = cfg.synth_intercept_sd;
    if cfg.synth_rho_km > 0.0 {
        // sill is arbitrary: the generator normalizes to correlations
        spec.spatial = Some(MaternParams::new(1.0, cfg.synth_nu, cfg.synth_rho_km)?);
    }
    let sg = synth_grid(&spec, cfg.seed)?;

    write_grid(&sg.grid, out_dir.join(SYNTH_GRID))?;
    let mut w = writer(&out_dir.join(SYNTH_COVARIATE))?;
    w.write_record(["year", "value"])?;
    for (y, v) in sg.grid.years.iter().zip(&sg.covariate) {
        w.write_record([y.to_string(), v.to_string()])?;
    }
    w.flush()?;
    let truths_path = out_dir.join(SYNTH_TRUTHS);
    let truths_str = truths_path
        .to_str()
        .ok_or_else(|| anyhow::anyhow!("output path is not valid UTF-8"))?;
    write_truths(truths_str, &sg)?;

    println!(
        "synth: {} pixels x {} years -> {}, {}, {}",
        sg.grid.n_pixels(),
        sg.grid.n_years(),
        out_dir.join(SYNTH_GRID).display(),
        out_dir.join(SYNTH_COVARIATE).display(),
        truths_path.display(),
    );
    Ok(())
}

/// Load and validate the inputs, deduplicate overlapping regions, drop
/// excluded years, and smooth the covariate.
pub fn ingest(cfg: &Config, out_dir: &Path) -> Result<()> {
    let rain = cfg.rainfall_path(out_dir);
    let covp = cfg.covariate_path(out_dir);
    require_input(&rain, "rainfall")?;
    require_input(&covp, "covariate")?;

    let grid = load_grid(&rain)?.exclude_years(&cfg.exclude_years);
    if grid.n_pixels() == 0 || grid.n_years() == 0 {
        bail!("no data left after exclusions; check exclude_years");
    }
    let mut cov = load_covariate(&covp)?.exclude_years(&cfg.exclude_years);
    let xs: Vec<f64> = cov.years.iter().map(|&y| y as f64).collect();
    cov.smoothed = Some(lowess(&xs, &cov.raw, cfg.lowess_span, cfg.lowess_iters)?);
    // fail here, not mid-pipeline, if the axes cannot be aligned
    cov.smoothed_for(&grid.years)
        .context("rainfall years are not covered by the covariate")?;

    write_grid(&grid, out_dir.join(GRID))?;
    write_covariate_smoothed(&out_dir.join(COVARIATE_SMOOTHED), &cov)?;
    println!(
        "ingest: {} pixels x {} years ({} excluded years) -> {}, {}",
        grid.n_pixels(),
        grid.n_years(),
        cfg.exclude_years.len(),
        out_dir.join(GRID).display(),
        out_dir.join(COVARIATE_SMOOTHED).display(),
    );
    Ok(())
}

/// Per-pixel autocorrelations and the functional-boxplot outlier screen.
pub fn eda(cfg: &Config, out_dir: &Path) -> Result<()> {
    let grid = read_grid_artifact(out_dir)?;
    let max_lag = cfg.acf_max_lag.min(grid.n_years().saturating_sub(1));

    let mut w = writer(&out_dir.join(EDA_ACF))?;
    w.write_record(["pixel_id", "lag", "acf"])?;
    let mut band = 0.0;
    for s in &grid.series {
        let (acf, half_width) = sample_acf(&s.values, max_lag)?;
        band = half_width;
        for (lag, a) in acf.iter().enumerate() {
            w.write_record([s.pixel_id.to_string(), lag.to_string(), a.to_string()])?;
        }
    }
    w.flush()?;

    let curves: Vec<Vec<f64>> = grid.series.iter().map(|s| s.values.clone()).collect();
    let fb = functional_boxplot(&curves)?;
    let mut w = writer(&out_dir.join(EDA_FBPLOT))?;
    w.write_record(["year", "band_lo", "band_hi", "fence_lo", "fence_hi"])?;
    for (i, y) in grid.years.iter().enumerate() {
        w.write_record([
            y.to_string(),
            fb.central_lo[i].to_string(),
            fb.central_hi[i].to_string(),
            fb.fence_lo[i].to_string(),
            fb.fence_hi[i].to_string(),
        ])?;
    }
    w.flush()?;
    let mut w = writer(&out_dir.join(EDA_OUTLIERS))?;
    w.write_record(["pixel_id"])?;
    for &i in &fb.outlier_indices {
        w.write_record([grid.series[i].pixel_id.to_string()])?;
    }
    w.flush()?;

    println!(
        "eda: acf to lag {max_lag} (95% band +-{band:.5}), median pixel {}, {} outliers -> {}, {}, {}",
        grid.series[fb.median_index].pixel_id,
        fb.outlier_indices.len(),
        out_dir.join(EDA_ACF).display(),
        out_dir.join(EDA_FBPLOT).display(),
        out_dir.join(EDA_OUTLIERS).display(),
    );
    Ok(())
}

/// Fit the stationary GEV baseline and the four tail models at every pixel.
pub fn fit(cfg: &Config, out_dir: &Path) -> Result<()> {
    let grid = read_grid_artifact(out_dir)?;
    let cov = read_covariate_smoothed(out_dir)?;
    let x = cov.smoothed_for(&grid.years)?;
    let thr = cfg.threshold()?;
    let fits = fit_grid(&grid, &x, &thr)?;

    for s in &fits.skipped {
        eprintln!("fit: skipped pixel {} ({}): {}", s.pixel_id, s.region, s.reason);
    }
    let unconverged: usize = fits
        .pixels
        .iter()
        .map(|p| p.variants.iter().filter(|v| !v.converged).count())
        .sum();
    write_fits(out_dir, &fits)?;
    println!(
        "fit: {} pixels fitted, {} skipped, {} unconverged variant fits -> {}, {}, {}",
        fits.pixels.len(),
        fits.skipped.len(),
        unconverged,
        out_dir.join(FITS).display(),
        out_dir.join(FITS_GEV).display(),
        out_dir.join(FIT_SKIPPED).display(),
    );
    Ok(())
}

/// Likelihood-ratio tests, AIC tables, and p-value QQ curves.
pub fn select(_cfg: &Config, out_dir: &Path) -> Result<()> {
    let pixels = read_fits(out_dir)?;
    let report = run_lrts(&pixels);

    let mut w = writer(&out_dir.join(LRT))?;
    w.write_record(["pixel_id", "region", "test", "statistic", "df", "p_value"])?;
    for r in &report.results {
        w.write_record([
            r.pixel_id.to_string(),
            r.region.as_str().to_string(),
            r.test.as_str().to_string(),
            r.statistic.to_string(),
            r.df.to_string(),
            r.p_value.to_string(),
        ])?;
    }
    w.flush()?;

    let tables = aic_region_tables(&pixels);
    let mut w = writer(&out_dir.join(AIC))?;
    w.write_record([
        "pixel_id",
        "region",
        "aic_stationary",
        "aic_rate_only",
        "aic_scale_only",
        "aic_full",
        "best_with_stationary",
        "best_without_stationary",
    ])?;
    for r in &tables.rows {
        w.write_record([
            r.pixel_id.to_string(),
            r.region.as_str().to_string(),
            r.aic[0].to_string(),
            r.aic[1].to_string(),
            r.aic[2].to_string(),
            r.aic[3].to_string(),
            r.best_with_stationary.as_str().to_string(),
            r.best_without_stationary.as_str().to_string(),
        ])?;
    }
    w.flush()?;

    let mut w = writer(&out_dir.join(AIC_REGION_COUNTS))?;
    w.write_record(["region", "table", "stationary", "rate_only", "scale_only", "full"])?;
    for region in Region::ALL {
        for (name, counts) in [
            ("with_stationary", &tables.counts_with_stationary),
            ("without_stationary", &tables.counts_without_stationary),
        ] {
            let c = counts.get(&region).copied().unwrap_or([0; 4]);
            w.write_record([
                region.as_str().to_string(),
                name.to_string(),
                c[0].to_string(),
                c[1].to_string(),
                c[2].to_string(),
                c[3].to_string(),
            ])?;
        }
    }
    w.flush()?;

    let mut w = writer(&out_dir.join(QQ_CURVES))?;
    w.write_record(["test", "rank_frac", "p_sorted"])?;
    for test in LrtTest::ALL {
        let p: Vec<f64> = report
            .results
            .iter()
            .filter(|r| r.test == test)
            .map(|r| r.p_value)
            .collect();
        if p.is_empty() {
            continue;
        }
        for (rank, p_sorted) in pvalue_qq_curve(&p)? {
            w.write_record([
                test.as_str().to_string(),
                rank.to_string(),
                p_sorted.to_string(),
            ])?;
        }
    }
    w.flush()?;

    let mut w = writer(&out_dir.join(SELECT_DIAGNOSTICS))?;
    w.write_record(["source", "pixel_id", "region", "reason"])?;
    for (source, excluded) in [("lrt", &report.excluded), ("aic", &tables.excluded)] {
        for e in excluded {
            w.write_record([
                source.to_string(),
                e.pixel_id.to_string(),
                e.region.as_str().to_string(),
                e.reason.clone(),
            ])?;
        }
    }
    w.flush()?;

    println!(
        "select: {} test results, {} AIC rows, {} lrt-excluded, {} aic-excluded -> {}, {}, {}, {}, {}",
        report.results.len(),
        tables.rows.len(),
        report.excluded.len(),
        tables.excluded.len(),
        out_dir.join(LRT).display(),
        out_dir.join(AIC).display(),
        out_dir.join(AIC_REGION_COUNTS).display(),
        out_dir.join(QQ_CURVES).display(),
        out_dir.join(SELECT_DIAGNOSTICS).display(),
    );
    Ok(())
}

/// Frequency, intensity, and return-level changes under covariate shifts.
pub fn scenarios(cfg: &Config, out_dir: &Path) -> Result<()> {
    let pixels = read_fits(out_dir)?;
    let cov = read_covariate_smoothed(out_dir)?;
    let smoothed = cov.smoothed.as_ref().expect("smoothed written by ingest");
    let x_low = *smoothed
        .last()
        .ok_or_else(|| anyhow::anyhow!("covariate file has no rows"))?;
    let spec = ScenarioSpec {
        x_low,
        delta_x: cfg.delta_x.clone(),
        q: cfg.scenario_q,
    };
    let choice = match cfg.variant_override()? {
        Some(v) => VariantChoice::Fixed(v),
        None => VariantChoice::AicSelected,
    };
    let rows = scenario_table(&pixels, choice, &spec)?;

    let mut w = writer(&out_dir.join(SCENARIOS))?;
    w.write_record([
        "pixel_id",
        "variant",
        "delta_x",
        "q",
        "delta_lambda",
        "delta_sigma",
        "r_q_low",
        "prob_high",
    ])?;
    for r in &rows {
        w.write_record([
            r.pixel_id.to_string(),
            r.variant.as_str().to_string(),
            r.delta_x.to_string(),
            r.q.to_string(),
            r.delta_lambda.to_string(),
            r.delta_sigma.to_string(),
            r.r_q_low.to_string(),
            r.prob_high.to_string(),
        ])?;
    }
    w.flush()?;
    println!(
        "scenarios: baseline x={x_low:.4}, {} rows ({}) -> {}",
        rows.len(),
        match choice {
            VariantChoice::AicSelected => "per-pixel AIC winner".to_string(),
            VariantChoice::Fixed(v) => format!("fixed {}", v.as_str()),
        },
        out_dir.join(SCENARIOS).display(),
    );
    Ok(())
}

/// Variogram fits and kriged maps of the fitted trend slopes.
pub fn krige(cfg: &Config, out_dir: &Path) -> Result<()> {
    let pixels = read_fits(out_dir)?;
    let usable: Vec<&PixelFit> = pixels
        .iter()
        .filter(|p| p.variant(Variant::Full).converged)
        .collect();
    if usable.len() < 5 {
        bail!(
            "only {} pixels with a converged Full fit; need at least 5 to map slopes",
            usable.len()
        );
    }
    let sites: Vec<(f64, f64)> = usable.iter().map(|p| (p.lat, p.lon)).collect();
    let method = cfg.fit_method()?;
    let targets = fine_grid(&sites, cfg.grid_spacing_km, cfg.grid_within_km)?;

    let mut vario_w = writer(&out_dir.join(VARIOGRAM))?;
    vario_w.write_record(["field", "lag_km", "gamma", "pairs"])?;
    let mut fit_w = writer(&out_dir.join(MATERN_FIT))?;
    fit_w.write_record(["field", "method", "sigma2", "nu", "rho", "objective", "converged"])?;

    for (field, file, values) in [
        (
            "beta1",
            KRIGE_BETA1,
            usable
                .iter()
                .map(|p| p.variant(Variant::Full).theta.beta1)
                .collect::<Vec<f64>>(),
        ),
        (
            "alpha1",
            KRIGE_ALPHA1,
            usable
                .iter()
                .map(|p| p.variant(Variant::Full).theta.alpha1)
                .collect::<Vec<f64>>(),
        ),
    ] {
        let v = empirical_variogram(&sites, &values, &BinSpec::default())?;
        for i in 0..v.centers.len() {
            vario_w.write_record([
                field.to_string(),
                v.centers[i].to_string(),
                v.gammas[i].to_string(),
                v.counts[i].to_string(),
            ])?;
        }
        let mean = values.iter().sum::<f64>() / values.len() as f64;
        let centered: Vec<f64> = values.iter().map(|v| v - mean).collect();
        let data = match method {
            FitMethod::Mle => Some((sites.as_slice(), centered.as_slice())),
            _ => None,
        };
        let fit = fit_variogram(&v, method, data)?;
        fit_w.write_record([
            field.to_string(),
            fit.method.as_str().to_string(),
            fit.params.sigma2.to_string(),
            fit.params.nu.to_string(),
            fit.params.rho.to_string(),
            fit.objective.to_string(),
            fit.converged.to_string(),
        ])?;
        if !fit.converged {
            eprintln!("krige: variogram fit for {field} did not converge; mapping anyway");
        }
        let preds = krige_with_mean(&sites, &values, &fit.params, &targets)?;
        let mut w = writer(&out_dir.join(file))?;
        w.write_record(["lat", "lon", "value"])?;
        for (t, p) in targets.iter().zip(&preds) {
            w.write_record([t.0.to_string(), t.1.to_string(), p.to_string()])?;
        }
        w.flush()?;
    }
    vario_w.flush()?;
    fit_w.flush()?;
    println!(
        "krige: {} sites -> {} targets at {} km spacing -> {}, {}, {}, {}",
        sites.len(),
        targets.len(),
        cfg.grid_spacing_km,
        out_dir.join(VARIOGRAM).display(),
        out_dir.join(MATERN_FIT).display(),
        out_dir.join(KRIGE_BETA1).display(),
        out_dir.join(KRIGE_ALPHA1).display(),
    );
    Ok(())
}

/// Bootstrap confidence bands for the p-value QQ curves of all five tests.
pub fn simulate_bands(cfg: &Config, out_dir: &Path) -> Result<()> {
    let grid = read_grid_artifact(out_dir)?;
    let cov = read_covariate_smoothed(out_dir)?;
    let x = cov.smoothed_for(&grid.years)?;
    let pixels = read_fits(out_dir)?;
    let thr = cfg.threshold()?;

    let mut w = writer(&out_dir.join(QQ_BANDS))?;
    w.write_record(["test", "rank_frac", "lo", "hi"])?;
    for family in NullFamily::ALL {
        let report = simulate_qq_bands(
            &grid,
            &x,
            &thr,
            &pixels,
            family,
            cfg.bootstrap_b,
            cfg.seed,
        )?;
        if !report.flagged_years.is_empty() {
            eprintln!(
                "simulate-bands: {} null: transformed fields outside the sanity band in years {:?}",
                family.variant().as_str(),
                report.flagged_years
            );
        }
        for (test, band) in &report.bands {
            for &(rank, lo, hi) in band {
                w.write_record([
                    test.as_str().to_string(),
                    rank.to_string(),
                    lo.to_string(),
                    hi.to_string(),
                ])?;
            }
        }
        println!(
            "simulate-bands: {} null on {} pixels, B={} -> bands for {:?}",
            family.variant().as_str(),
            report.n_pixels,
            cfg.bootstrap_b,
            family.tests().iter().map(|t| t.as_str()).collect::<Vec<_>>(),
        );
    }
    w.flush()?;
    println!("simulate-bands: -> {}", out_dir.join(QQ_BANDS).display());
    Ok(())
}

/// Declustering sanity check: simulate a daily series per pixel consistent
/// with its fitted tail, decluster it, and compare the empirical daily
/// p-quantile of the declustered series against the fitted threshold.
pub fn decluster_check(cfg: &Config, out_dir: &Path) -> Result<()> {
    let pixels = read_fits(out_dir)?;
    let mut w = writer(&out_dir.join(DECLUSTER_CHECK))?;
    w.write_record(["pixel_id", "threshold_c", "sample_qp"])?;
    let mut n = 0usize;
    for pf in &pixels {
        let st = pf.variant(Variant::Stationary);
        if !st.converged {
            eprintln!(
                "decluster-check: skipped pixel {} (stationary fit did not converge)",
                pf.pixel_id
            );
            continue;
        }
        let daily = synth_daily(
            pf.c,
            st.theta.sigma_at(0.0),
            st.theta.gamma,
            cfg.threshold_p,
            cfg.decluster_days,
            derive_seed(cfg.seed, "decluster.daily", pf.pixel_id),
        )?;
        let d = decluster(&daily, pf.c, cfg.decluster_r)?;
        let qp = sample_quantile(&d.declustered, cfg.threshold_p)?;
        w.write_record([pf.pixel_id.to_string(), pf.c.to_string(), qp.to_string()])?;
        n += 1;
    }
    w.flush()?;
    println!(
        "decluster-check: {} pixels, {} simulated days each, r={} -> {}",
        n,
        cfg.decluster_days,
        cfg.decluster_r,
        out_dir.join(DECLUSTER_CHECK).display(),
    );
    Ok(())
}

/// The whole pipeline on one dataset, in stage order.
pub fn run_all(cfg: &Config, out_dir: &Path) -> Result<()> {
    ingest(cfg, out_dir)?;
    eda(cfg, out_dir)?;
    fit(cfg, out_dir)?;
    select(cfg, out_dir)?;
    scenarios(cfg, out_dir)?;
    krige(cfg, out_dir)?;
    simulate_bands(cfg, out_dir)?;
    Ok(())
}
