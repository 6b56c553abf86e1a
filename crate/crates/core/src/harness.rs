//! Monte Carlo sweeps over (method, K, SNR) and the CSV artifacts they produce.
//!
//! Every realization draws from its own substream keyed on
//! `(seed, realization, K, SNR)`, so all methods at a grid point see the same
//! channels and noise, and results do not depend on the worker count.

use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;

use crate::channel::Scenario;
use crate::config::SystemConfig;
use crate::error::{Result, SimError};
use crate::fusion::{build_weight_table_with, estimate_realization, fuse, EstimationMethod, WeightTable};
use crate::link::{evaluate_se, SinrMode};
use crate::seeding::{realization_rng, Stream};

/// Weight grid resolution used when a sweep has to build its own table.
pub const DEFAULT_W_STEP: f64 = 0.01;

const Z_95: f64 = 1.96;

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub method: EstimationMethod,
    pub k_mm_db: f64,
    pub snr_mm_db: f64,
    pub se_samples: Vec<f64>,
    pub mean_se: f64,
    /// Zero when fewer than two samples exist; see `ci_defined`.
    pub ci95_halfwidth: f64,
    pub ci_defined: bool,
    pub excluded_count: usize,
}

impl SweepResult {
    fn from_samples(method: EstimationMethod, k_mm_db: f64, snr_mm_db: f64, samples: Vec<f64>, excluded: usize) -> Self {
        let (mean, ci, defined) = mean_ci95(&samples);
        SweepResult {
            method,
            k_mm_db,
            snr_mm_db,
            se_samples: samples,
            mean_se: mean,
            ci95_halfwidth: ci,
            ci_defined: defined,
            excluded_count: excluded,
        }
    }
}

/// Mean and normal-approximation 95% half-width, summed in slice order.
pub fn mean_ci95(samples: &[f64]) -> (f64, f64, bool) {
    let n = samples.len();
    if n == 0 {
        return (f64::NAN, 0.0, false);
    }
    let mean = samples.iter().sum::<f64>() / n as f64;
    if n < 2 {
        return (mean, 0.0, false);
    }
    let var = samples.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1) as f64;
    (mean, Z_95 * var.sqrt() / (n as f64).sqrt(), true)
}

/// Options shared by point and sweep runs.
#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub sinr_mode: SinrMode,
}

/// Runs every method on the same `cfg.realizations` realizations of one grid point.
pub fn run_grid_point(
    scenario: &Scenario,
    methods: &[EstimationMethod],
    k_mm_db: f64,
    snr_mm_db: f64,
    weight_table: Option<&WeightTable>,
    opts: &RunOptions,
) -> Result<Vec<SweepResult>> {
    let w = if methods.contains(&EstimationMethod::Weighting) {
        let table = weight_table.ok_or_else(|| SimError::config("weighting method requires a weight table"))?;
        Some(table.get(k_mm_db, snr_mm_db)?)
    } else {
        None
    };
    let cfg = &scenario.cfg;
    let per_realization: Vec<Vec<Option<f64>>> = (0..cfg.realizations)
        .into_par_iter()
        .map(|l| {
            let mut rng = realization_rng(cfg.seed, Stream::Sweep, l as u64, k_mm_db, snr_mm_db);
            let est = estimate_realization(scenario, k_mm_db, snr_mm_db, &mut rng)?;
            let truth = &est.channels.h_mm;
            methods
                .iter()
                .map(|&m| {
                    let weight = if m == EstimationMethod::Weighting { w } else { None };
                    let h_bar = fuse(m, &est.h_hat_s, &est.h_tilde_m, truth, weight)?;
                    match evaluate_se(&h_bar, truth, est.channels.noise_var_mm, cfg.transmit_power, opts.sinr_mode) {
                        Ok(se) => Ok(Some(se)),
                        Err(SimError::SvdNoConvergence { .. }) => Ok(None),
                        Err(e) => Err(e),
                    }
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;

    Ok(methods
        .iter()
        .enumerate()
        .map(|(i, &m)| {
            let samples: Vec<f64> = per_realization.iter().filter_map(|r| r[i]).collect();
            let excluded = per_realization.len() - samples.len();
            SweepResult::from_samples(m, k_mm_db, snr_mm_db, samples, excluded)
        })
        .collect())
}

/// Single-method convenience wrapper around [`run_grid_point`].
pub fn run_point(
    cfg: &SystemConfig,
    method: EstimationMethod,
    k_mm_db: f64,
    snr_mm_db: f64,
    weight_table: Option<&WeightTable>,
) -> Result<SweepResult> {
    let scenario = Scenario::new(cfg)?;
    let mut out = run_grid_point(&scenario, &[method], k_mm_db, snr_mm_db, weight_table, &RunOptions::default())?;
    Ok(out.remove(0))
}

/// Adds the conventional and perfect-CSI baselines if absent and drops duplicates.
pub fn with_baselines(methods: &[EstimationMethod]) -> Vec<EstimationMethod> {
    let mut out = Vec::new();
    for m in [EstimationMethod::Conventional, EstimationMethod::PerfectCsi]
        .into_iter()
        .filter(|b| !methods.contains(b))
        .chain(methods.iter().copied())
    {
        if !out.contains(&m) {
            out.push(m);
        }
    }
    out
}

/// Results for every (method, K, SNR) combination of the config grids, method-major.
pub fn sweep(
    cfg: &SystemConfig,
    methods: &[EstimationMethod],
    weight_table: Option<&WeightTable>,
    opts: &RunOptions,
) -> Result<Vec<SweepResult>> {
    if methods.is_empty() {
        return Err(SimError::config("no estimation methods requested"));
    }
    if cfg.k_factor_mm_db_grid.is_empty() || cfg.snr_mm_db_grid.is_empty() {
        return Err(SimError::config("sweep grids must be nonempty"));
    }
    let methods = with_baselines(methods);
    let scenario = Scenario::new(cfg)?;

    let built;
    let table = match weight_table {
        Some(t) => Some(t),
        None if methods.contains(&EstimationMethod::Weighting) => {
            built = build_weight_table_with(
                &scenario,
                &cfg.k_factor_mm_db_grid,
                &cfg.snr_mm_db_grid,
                DEFAULT_W_STEP,
                cfg.realizations,
            )?;
            Some(&built)
        }
        None => None,
    };

    let mut by_point = Vec::new();
    for &k in &cfg.k_factor_mm_db_grid {
        for &g in &cfg.snr_mm_db_grid {
            by_point.push(run_grid_point(&scenario, &methods, k, g, table, opts)?);
        }
    }
    Ok((0..methods.len())
        .flat_map(|i| by_point.iter().map(move |p| p[i].clone()))
        .collect())
}

pub const SWEEP_CSV_HEADER: &str = "method,k_mm_db,snr_mm_db,mean_se,ci95_halfwidth,n_samples,excluded";

pub fn sweep_csv(results: &[SweepResult]) -> String {
    let mut out = String::from(SWEEP_CSV_HEADER);
    out.push('\n');
    for r in results {
        let _ = writeln!(
            out,
            "{},{:.2},{:.2},{:.4},{:.4},{},{}",
            r.method,
            r.k_mm_db,
            r.snr_mm_db,
            r.mean_se,
            r.ci95_halfwidth,
            r.se_samples.len(),
            r.excluded_count
        );
    }
    out
}

/// Runs the sweep and writes its CSV. Nothing is written if the run fails.
pub fn run_sweep(
    cfg: &SystemConfig,
    methods: &[EstimationMethod],
    weight_table: Option<&WeightTable>,
    opts: &RunOptions,
    output_path: impl AsRef<Path>,
) -> Result<Vec<SweepResult>> {
    let results = sweep(cfg, methods, weight_table, opts)?;
    let path = output_path.as_ref();
    std::fs::write(path, sweep_csv(&results)).map_err(|e| SimError::io(path, e))?;
    Ok(results)
}

/// Builds the table over the config grids with `cfg.realizations` realizations per point and writes it.
pub fn regenerate_weight_table(cfg: &SystemConfig, w_step: f64, output_path: impl AsRef<Path>) -> Result<WeightTable> {
    let scenario = Scenario::new(cfg)?;
    let table = build_weight_table_with(
        &scenario,
        &cfg.k_factor_mm_db_grid,
        &cfg.snr_mm_db_grid,
        w_step,
        cfg.realizations,
    )?;
    table.write_csv(output_path)?;
    Ok(table)
}
