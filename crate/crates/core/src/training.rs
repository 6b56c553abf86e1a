//! Pilot-aided training for one band: comb pilots, noisy observation,
//! LS estimation at pilot subcarriers and linear interpolation in between.
//!
//! Subcarrier and antenna indices are 0-based here; antenna `t` owns
//! subcarriers `t, t + M_Tx, t + 2 M_Tx, ...`.

use std::f64::consts::FRAC_1_SQRT_2;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;

use crate::channel::{complex_gaussian, Band, ChannelTensor};
use crate::error::{Result, SimError};

#[derive(Debug, Clone, PartialEq)]
pub struct PilotPlan {
    pub n_subcarriers: usize,
    pub m_tx: usize,
    pub pilot_symbols: Vec<Complex64>,
    /// Transmitting antenna of each subcarrier.
    pub owner: Vec<usize>,
}

impl PilotPlan {
    /// Subcarriers carrying pilots of antenna `t`, ascending.
    pub fn pilots_of(&self, t: usize) -> impl Iterator<Item = usize> + '_ {
        (t..self.n_subcarriers).step_by(self.m_tx)
    }
}

/// Comb pilot allocation with 4-QAM symbols of power `transmit_power`.
pub fn make_pilot_plan<R: Rng + ?Sized>(
    n_subcarriers: usize,
    m_tx: usize,
    transmit_power: f64,
    rng: &mut R,
) -> Result<PilotPlan> {
    if m_tx == 0 || n_subcarriers < m_tx {
        return Err(SimError::config(format!(
            "need at least one subcarrier per transmit antenna ({n_subcarriers} subcarriers, {m_tx} antennas)"
        )));
    }
    let amp = transmit_power.sqrt() * FRAC_1_SQRT_2;
    let pilot_symbols = (0..n_subcarriers)
        .map(|_| {
            let re = if rng.random::<bool>() { amp } else { -amp };
            let im = if rng.random::<bool>() { amp } else { -amp };
            Complex64::new(re, im)
        })
        .collect();
    Ok(PilotPlan {
        n_subcarriers,
        m_tx,
        pilot_symbols,
        owner: (0..n_subcarriers).map(|n| n % m_tx).collect(),
    })
}

/// Received training vectors, one `M_Rx` vector per subcarrier.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingObservation {
    pub band: Band,
    pub m_rx: usize,
    pub m_tx: usize,
    /// Subcarrier-major: `y[n * m_rx + r]`.
    pub y: Vec<Complex64>,
}

impl TrainingObservation {
    pub fn n_subcarriers(&self) -> usize {
        self.y.len() / self.m_rx
    }

    pub fn at(&self, n: usize) -> &[Complex64] {
        &self.y[n * self.m_rx..(n + 1) * self.m_rx]
    }
}

/// `y[n] = H[n] phi[n] + w[n]` with only the owner antenna active on each subcarrier.
pub fn observe_training<R: Rng + ?Sized>(
    h: &ChannelTensor,
    plan: &PilotPlan,
    noise_var: f64,
    rng: &mut R,
) -> Result<TrainingObservation> {
    if h.n_subcarriers() != plan.n_subcarriers || h.m_tx() != plan.m_tx {
        return Err(SimError::Dimension(format!(
            "pilot plan is {}x{} (subcarriers x tx) but channel is {}x{}",
            plan.n_subcarriers,
            plan.m_tx,
            h.n_subcarriers(),
            h.m_tx()
        )));
    }
    let m_rx = h.m_rx();
    let mut y = Vec::with_capacity(plan.n_subcarriers * m_rx);
    for n in 0..plan.n_subcarriers {
        let t = plan.owner[n];
        let phi = plan.pilot_symbols[n];
        let col = &h.subcarrier(n)[t * m_rx..(t + 1) * m_rx];
        for &h_rt in col {
            let w = if noise_var > 0.0 {
                complex_gaussian(rng, noise_var)
            } else {
                Complex64::new(0.0, 0.0)
            };
            y.push(h_rt * phi + w);
        }
    }
    Ok(TrainingObservation {
        band: h.band(),
        m_rx,
        m_tx: plan.m_tx,
        y,
    })
}

/// LS estimate at pilot positions, complex linear interpolation between an
/// antenna's pilots, nearest-pilot hold outside its first and last pilot.
pub fn ls_estimate(obs: &TrainingObservation, plan: &PilotPlan) -> Result<ChannelTensor> {
    if obs.n_subcarriers() != plan.n_subcarriers || obs.m_tx != plan.m_tx {
        return Err(SimError::Dimension("observation does not match pilot plan".into()));
    }
    let (n_sc, m_rx, m_tx) = (plan.n_subcarriers, obs.m_rx, plan.m_tx);
    let mut est = ChannelTensor::zeros(obs.band, n_sc, m_rx, m_tx);

    // LS at the pilots
    for n in 0..n_sc {
        let t = plan.owner[n];
        let phi = plan.pilot_symbols[n];
        let y = obs.at(n);
        for r in 0..m_rx {
            est.set(n, r, t, y[r] / phi);
        }
    }

    for t in 0..m_tx {
        let first = t;
        let last = t + (n_sc - 1 - t) / m_tx * m_tx;
        for n in 0..n_sc {
            if n >= first && (n - first) % m_tx == 0 {
                continue;
            }
            if n < first || n > last {
                let src = if n < first { first } else { last };
                for r in 0..m_rx {
                    let v = est.get(src, r, t);
                    est.set(n, r, t, v);
                }
                continue;
            }
            let left = first + (n - first) / m_tx * m_tx;
            let right = left + m_tx;
            let frac = (n - left) as f64 / m_tx as f64;
            for r in 0..m_rx {
                let a = est.get(left, r, t);
                let b = est.get(right, r, t);
                est.set(n, r, t, a + (b - a) * frac);
            }
        }
    }
    Ok(est)
}

/// Averages a sub-6 estimate over its subcarriers and repeats the mean on `n_mm` subcarriers.
pub fn band_average_extrapolate(h_est_sub6: &ChannelTensor, n_mm: usize) -> ChannelTensor {
    let (m_rx, m_tx) = (h_est_sub6.m_rx(), h_est_sub6.m_tx());
    let n = h_est_sub6.n_subcarriers();
    let mut mean = DMatrix::<Complex64>::zeros(m_rx, m_tx);
    for k in 0..n {
        for (acc, v) in mean.as_mut_slice().iter_mut().zip(h_est_sub6.subcarrier(k)) {
            *acc += v;
        }
    }
    if n > 0 {
        mean /= Complex64::new(n as f64, 0.0);
    }
    ChannelTensor::replicate(Band::MmWave, &mean, n_mm)
}

/// Pilot plan, observation and LS estimate in one go.
pub fn train_band<R: Rng + ?Sized>(
    h: &ChannelTensor,
    noise_var: f64,
    transmit_power: f64,
    rng: &mut R,
) -> Result<ChannelTensor> {
    let plan = make_pilot_plan(h.n_subcarriers(), h.m_tx(), transmit_power, rng)?;
    let obs = observe_training(h, &plan, noise_var, rng)?;
    ls_estimate(&obs, &plan)
}
