//! Quick invariant checks behind the `validate` subcommand.
//!
//! Each check is small and deterministic; the whole suite runs in seconds.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::channel::{complex_gaussian, rician_amplitudes, Band, ChannelTensor, Scenario, TdlProfile, TdlSynthesizer};
use crate::config::{db_to_linear, SystemConfig};
use crate::error::Result;
use crate::fusion::{fuse, phase_rotate, EstimationMethod};
use crate::link::{compact_svd, svd_precoding};
use crate::training::{band_average_extrapolate, train_band};

#[derive(Debug, Clone, PartialEq)]
pub struct CheckOutcome {
    pub name: &'static str,
    /// Measured error, or 0/1 for exact checks.
    pub value: f64,
    pub tolerance: f64,
    pub passed: bool,
}

impl CheckOutcome {
    fn le(name: &'static str, value: f64, tolerance: f64) -> Self {
        CheckOutcome {
            name,
            value,
            tolerance,
            passed: value <= tolerance,
        }
    }

    fn exact(name: &'static str, ok: bool) -> Self {
        CheckOutcome {
            name,
            value: if ok { 0.0 } else { 1.0 },
            tolerance: 0.0,
            passed: ok,
        }
    }
}

fn random_tensor(rng: &mut ChaCha8Rng, n: usize, m_rx: usize, m_tx: usize) -> ChannelTensor {
    ChannelTensor::from_fn(Band::MmWave, n, m_rx, m_tx, |_, _, _| complex_gaussian(rng, 1.0))
}

/// Draws used by the ensemble power check.
pub const ENSEMBLE_DRAWS: usize = 10_000;

/// Runs every check against `cfg`'s geometry and array sizes.
pub fn run_suite(cfg: &SystemConfig) -> Result<Vec<CheckOutcome>> {
    let scenario = Scenario::new(cfg)?;
    let p = scenario.derived;
    let (m_rx, m_tx) = (cfg.m_rx, cfg.m_tx);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut out = Vec::new();

    // SVD reconstruction, semi-unitarity, power constraint
    let h = random_tensor(&mut rng, 64, m_rx, m_tx);
    let mut rec: f64 = 0.0;
    let mut unit: f64 = 0.0;
    let mut power: f64 = 0.0;
    let pre = svd_precoding(&h, cfg.transmit_power)?;
    for n in 0..h.n_subcarriers() {
        let s = compact_svd(h.view(n)).expect("random matrix SVD converges");
        let sig = DMatrix::from_fn(s.sigma.len(), s.sigma.len(), |i, j| {
            Complex64::new(if i == j { s.sigma[i] } else { 0.0 }, 0.0)
        });
        rec = rec.max((&s.u * sig * s.v.adjoint() - h.matrix(n)).norm() / h.matrix(n).norm());
        let k = pre.streams;
        let eye = DMatrix::<Complex64>::identity(k, k);
        let q = &pre.combiners[n];
        let f = &pre.precoders[n];
        unit = unit
            .max((q.adjoint() * q - &eye).map(|z| z.norm()).max())
            .max((f.adjoint() * f - &eye).map(|z| z.norm()).max());
        let fp = f * Complex64::new(pre.power_per_stream.sqrt(), 0.0);
        power = power.max((fp.norm_squared() - cfg.transmit_power).abs());
    }
    out.push(CheckOutcome::le("svd_reconstruction", rec, 1e-10));
    out.push(CheckOutcome::le("semi_unitarity", unit, 1e-10));
    out.push(CheckOutcome::le("transmit_power_constraint", power, 1e-10));

    // phase rotation keeps magnitudes
    let x = random_tensor(&mut rng, 16, m_rx, m_tx);
    let y = phase_rotate(&x, &scenario.distances, p.lambda_s, p.lambda_m)?;
    let mag = x
        .as_slice()
        .iter()
        .zip(y.as_slice())
        .map(|(a, b)| (a.norm() - b.norm()).abs())
        .fold(0.0, f64::max);
    out.push(CheckOutcome::le("rotation_magnitude", mag, 1e-12));

    // LOS translation: huge K, noiseless training
    let real = scenario.realize(200.0, 0.0, &mut rng);
    let est_s = train_band(&real.h_sub6, 0.0, cfg.transmit_power, &mut rng)?;
    let est_m = train_band(&real.h_mm, 0.0, cfg.transmit_power, &mut rng)?;
    let hat = phase_rotate(
        &band_average_extrapolate(&est_s, p.n_mm),
        &scenario.distances,
        p.lambda_s,
        p.lambda_m,
    )?;
    let translated = fuse(EstimationMethod::Translating, &hat, &est_m, &real.h_mm, None)?;
    let rel = (translated.sq_distance(&real.h_mm)? / real.h_mm.sq_norm()).sqrt();
    out.push(CheckOutcome::le("los_translation_identity", rel, 1e-6));

    // fusion endpoints
    let (a, b, t) = (
        random_tensor(&mut rng, 8, m_rx, m_tx),
        random_tensor(&mut rng, 8, m_rx, m_tx),
        random_tensor(&mut rng, 8, m_rx, m_tx),
    );
    let f = |m, w| fuse(m, &a, &b, &t, w);
    let endpoints = f(EstimationMethod::Weighting, Some(0.0))? == f(EstimationMethod::Conventional, None)?
        && f(EstimationMethod::Weighting, Some(0.5))? == f(EstimationMethod::Averaging, None)?
        && f(EstimationMethod::Weighting, Some(1.0))? == f(EstimationMethod::Translating, None)?;
    out.push(CheckOutcome::exact("fusion_endpoints", endpoints));

    // flat channel, noiseless LS
    let flat = ChannelTensor::replicate(Band::MmWave, &random_tensor(&mut rng, 1, m_rx, m_tx).matrix(0), 4 * m_tx + 3);
    let est = train_band(&flat, 0.0, cfg.transmit_power, &mut rng)?;
    out.push(CheckOutcome::le("flat_ls_recovery", est.sq_distance(&flat)?.sqrt(), 1e-10));

    // Rician amplitudes
    let amp = [-30.0, -20.0, -10.0, 0.0, 10.0, 20.0, 30.0]
        .iter()
        .map(|&db| {
            let (fs, rp) = rician_amplitudes(db_to_linear(db));
            (fs * fs + rp * rp - 1.0).abs()
        })
        .fold(0.0, f64::max);
    out.push(CheckOutcome::le("rician_power_split", amp, 1e-15));

    // SNR relation
    let snr_ok = cfg.snr_mm_db_grid.iter().chain([-5.0, 0.0, 10.0].iter()).all(|&g| {
        let r = scenario.realize(0.0, g, &mut rng);
        r.snr_sub6_linear == p.alpha * p.beta * r.snr_mm_linear
    });
    out.push(CheckOutcome::exact("sub6_snr_relation", snr_ok));

    // ensemble unit power of one entry, on a short subcarrier grid
    let synth = TdlSynthesizer::new(
        &TdlProfile::tdl_a(),
        cfg.mmwave.rms_delay_spread_s,
        4,
        cfg.mmwave.subcarrier_spacing_hz,
    )?;
    let (fs, rp) = rician_amplitudes(db_to_linear(3.0));
    let los = scenario.los_mm[(0, 0)];
    let mut acc = 0.0;
    for _ in 0..ENSEMBLE_DRAWS {
        let h = synth.draw(Band::MmWave, 1, 1, &mut rng);
        acc += (los * fs + h.get(3, 0, 0) * rp).norm_sqr();
    }
    out.push(CheckOutcome::le(
        "ensemble_unit_power",
        (acc / ENSEMBLE_DRAWS as f64 - 1.0).abs(),
        0.05,
    ));

    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn suite_passes_on_defaults() {
        let outcomes = run_suite(&SystemConfig::default()).unwrap();
        assert_eq!(outcomes.len(), 10);
        for o in outcomes {
            assert!(o.passed, "{o:?}");
        }
    }
}
