//! Benchmarks for the two data-parallel hot paths: per-pixel model
//! fitting and bootstrap replicate simulation.
//!
//! Bench names carry the active execution mode, so comparing builds is:
//!
//! ```text
//! cargo bench -p pgev                          # parallel (rayon)
//! cargo bench -p pgev --no-default-features    # sequential fallback
//! ```
//!
//! Results land in separate criterion entries (`.../parallel` vs
//! `.../sequential`) of the same report. Outputs are identical in both
//! modes by construction; only wall time differs.

use criterion::{criterion_group, criterion_main, Criterion};
use std::collections::BTreeMap;
use std::hint::black_box;

use pgev::copula::{fit_field_materns, simulate_null_grids, to_gaussian, CopulaFields};
use pgev::data::Grid;
use pgev::fit::{fit_grid, PgevTheta, ThresholdSpec, Variant};
use pgev::spatial::MaternParams;
use pgev::synth::{default_truth, synth_grid, SynthSpec};

const MODE: &str = if cfg!(feature = "parallel") {
    "parallel"
} else {
    "sequential"
};

fn bench_fit_grid(c: &mut Criterion) {
    let spec = SynthSpec::regular(8, 8, 61, default_truth());
    let sg = synth_grid(&spec, 4242).unwrap();
    let thr = ThresholdSpec::default();
    c.bench_function(&format!("fit_grid_64px_61yr/{MODE}"), |b| {
        b.iter(|| fit_grid(black_box(&sg.grid), &sg.covariate, &thr).unwrap())
    });
}

fn copula_fixture() -> (CopulaFields, Grid) {
    let mut spec = SynthSpec::regular(8, 8, 61, default_truth());
    spec.spatial = Some(MaternParams::new(1.0, 1.5, 15.0).unwrap());
    let sg = synth_grid(&spec, 77).unwrap();
    let thr = ThresholdSpec::default();
    let fits = fit_grid(&sg.grid, &sg.covariate, &thr).unwrap();
    let thetas: BTreeMap<u64, PgevTheta> = fits
        .pixels
        .iter()
        .filter(|p| p.gev.converged && p.all_converged())
        .map(|p| (p.pixel_id, p.variant(Variant::Stationary).theta))
        .collect();
    let template = Grid {
        years: sg.grid.years.clone(),
        series: sg
            .grid
            .series
            .iter()
            .filter(|s| thetas.contains_key(&s.pixel_id))
            .cloned()
            .collect(),
    };
    let mut cf = to_gaussian(&template, &sg.covariate, &thetas).unwrap();
    fit_field_materns(&mut cf).unwrap();
    (cf, template)
}

fn bench_simulate_replicates(c: &mut Criterion) {
    let (cf, template) = copula_fixture();
    c.bench_function(&format!("simulate_null_grids_8reps/{MODE}"), |b| {
        b.iter(|| simulate_null_grids(black_box(&cf), &template, 8, 99, "bench").unwrap())
    });
}

criterion_group! {
    name = benches;
    config = Criterion::default().sample_size(10);
    targets = bench_fit_grid, bench_simulate_replicates
}
criterion_main!(benches);
