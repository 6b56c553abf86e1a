//! Frequency-selective Rician channel synthesis for both bands.
//!
//! Each band's channel is a frequency-flat free-space (LOS) term from the
//! array geometry plus a TDL-A Rayleigh term, mixed according to the band's
//! K-factor. Path loss is normalized away; SNR differences between the bands
//! live entirely in the noise variances.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DMatrixView};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::config::{build_distance_matrix, db_to_linear, sub6_k_factor, DerivedParams, DistanceMatrix, SystemConfig};
use crate::error::{Result, SimError};

const TDL_A_TABLE: &str = include_str!("../data/tdl_a.txt");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Band {
    Sub6,
    MmWave,
}

/// A stack of `M_Rx x M_Tx` complex matrices, one per subcarrier.
///
/// Storage is subcarrier-major; each matrix is column-major so a subcarrier
/// slice can be viewed directly as an nalgebra matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelTensor {
    band: Band,
    m_rx: usize,
    m_tx: usize,
    data: Vec<Complex64>,
}

impl ChannelTensor {
    pub fn zeros(band: Band, n_subcarriers: usize, m_rx: usize, m_tx: usize) -> Self {
        ChannelTensor {
            band,
            m_rx,
            m_tx,
            data: vec![Complex64::new(0.0, 0.0); n_subcarriers * m_rx * m_tx],
        }
    }

    pub fn from_fn(
        band: Band,
        n_subcarriers: usize,
        m_rx: usize,
        m_tx: usize,
        mut f: impl FnMut(usize, usize, usize) -> Complex64,
    ) -> Self {
        let mut t = Self::zeros(band, n_subcarriers, m_rx, m_tx);
        for n in 0..n_subcarriers {
            for tx in 0..m_tx {
                for rx in 0..m_rx {
                    t.set(n, rx, tx, f(n, rx, tx));
                }
            }
        }
        t
    }

    /// Repeats one matrix over `n_subcarriers`.
    pub fn replicate(band: Band, m: &DMatrix<Complex64>, n_subcarriers: usize) -> Self {
        let mut data = Vec::with_capacity(n_subcarriers * m.len());
        for _ in 0..n_subcarriers {
            data.extend_from_slice(m.as_slice());
        }
        ChannelTensor {
            band,
            m_rx: m.nrows(),
            m_tx: m.ncols(),
            data,
        }
    }

    pub fn band(&self) -> Band {
        self.band
    }

    pub fn with_band(mut self, band: Band) -> Self {
        self.band = band;
        self
    }

    pub fn n_subcarriers(&self) -> usize {
        self.data.len().checked_div(self.m_rx * self.m_tx).unwrap_or(0)
    }

    pub fn m_rx(&self) -> usize {
        self.m_rx
    }

    pub fn m_tx(&self) -> usize {
        self.m_tx
    }

    pub fn same_shape(&self, other: &ChannelTensor) -> bool {
        self.m_rx == other.m_rx && self.m_tx == other.m_tx && self.data.len() == other.data.len()
    }

    fn offset(&self, n: usize, r: usize, t: usize) -> usize {
        n * self.m_rx * self.m_tx + t * self.m_rx + r
    }

    pub fn get(&self, n: usize, r: usize, t: usize) -> Complex64 {
        self.data[self.offset(n, r, t)]
    }

    pub fn set(&mut self, n: usize, r: usize, t: usize, v: Complex64) {
        let i = self.offset(n, r, t);
        self.data[i] = v;
    }

    /// Column-major entries of subcarrier `n`.
    pub fn subcarrier(&self, n: usize) -> &[Complex64] {
        let per = self.m_rx * self.m_tx;
        &self.data[n * per..(n + 1) * per]
    }

    pub fn subcarrier_mut(&mut self, n: usize) -> &mut [Complex64] {
        let per = self.m_rx * self.m_tx;
        &mut self.data[n * per..(n + 1) * per]
    }

    pub fn view(&self, n: usize) -> DMatrixView<'_, Complex64> {
        DMatrixView::from_slice(self.subcarrier(n), self.m_rx, self.m_tx)
    }

    pub fn matrix(&self, n: usize) -> DMatrix<Complex64> {
        DMatrix::from_column_slice(self.m_rx, self.m_tx, self.subcarrier(n))
    }

    pub fn as_slice(&self) -> &[Complex64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [Complex64] {
        &mut self.data
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }

    /// Multiplies every entry by a real scalar.
    pub fn scaled(&self, s: f64) -> Self {
        let mut out = self.clone();
        out.data.iter_mut().for_each(|z| *z *= s);
        out
    }

    /// Sum over subcarriers of `||self[n] - other[n]||_F^2`.
    pub fn sq_distance(&self, other: &ChannelTensor) -> Result<f64> {
        if !self.same_shape(other) {
            return Err(SimError::Dimension("tensor shapes differ".into()));
        }
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).norm_sqr())
            .sum())
    }

    /// Sum over subcarriers of `||self[n]||_F^2`.
    pub fn sq_norm(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum()
    }
}

/// Draws a circularly-symmetric complex Gaussian with the given variance.
pub fn complex_gaussian<R: Rng + ?Sized>(rng: &mut R, variance: f64) -> Complex64 {
    let s = (0.5 * variance).sqrt();
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(s * re, s * im)
}

/// A tapped-delay-line power delay profile with delays normalized by the RMS delay spread.
#[derive(Debug, Clone, PartialEq)]
pub struct TdlProfile {
    pub normalized_delays: Vec<f64>,
    pub powers_db: Vec<f64>,
}

impl TdlProfile {
    /// The bundled TDL-A table.
    pub fn tdl_a() -> Self {
        Self::parse(TDL_A_TABLE).expect("bundled TDL-A table is well formed")
    }

    /// Parses `delay, power_db` lines; `#` starts a comment. Taps are sorted by delay.
    pub fn parse(text: &str) -> Result<Self> {
        let mut taps = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let mut parts = line.split(',').map(str::trim);
            let (Some(d), Some(p), None) = (parts.next(), parts.next(), parts.next()) else {
                return Err(SimError::Profile(format!("line {}: expected `delay, power_db`", i + 1)));
            };
            let delay: f64 = d
                .parse()
                .map_err(|_| SimError::Profile(format!("line {}: bad delay `{d}`", i + 1)))?;
            let power: f64 = p
                .parse()
                .map_err(|_| SimError::Profile(format!("line {}: bad power `{p}`", i + 1)))?;
            taps.push((delay, power));
        }
        Self::from_taps(taps)
    }

    pub fn from_taps(mut taps: Vec<(f64, f64)>) -> Result<Self> {
        if taps.is_empty() {
            return Err(SimError::Profile("profile has no taps".into()));
        }
        if taps.iter().any(|&(d, p)| !(d.is_finite() && d >= 0.0) || !p.is_finite()) {
            return Err(SimError::Profile("delays must be finite and non-negative".into()));
        }
        taps.sort_by(|a, b| a.0.total_cmp(&b.0));
        Ok(TdlProfile {
            normalized_delays: taps.iter().map(|t| t.0).collect(),
            powers_db: taps.iter().map(|t| t.1).collect(),
        })
    }

    pub fn tap_count(&self) -> usize {
        self.normalized_delays.len()
    }

    /// Linear tap powers scaled to sum to one.
    pub fn normalized_powers(&self) -> Vec<f64> {
        let lin: Vec<f64> = self.powers_db.iter().map(|&p| db_to_linear(p)).collect();
        let total: f64 = lin.iter().sum();
        lin.into_iter().map(|p| p / total).collect()
    }
}

/// Precomputed per-tap subcarrier phasors for one band.
#[derive(Debug, Clone)]
pub struct TdlSynthesizer {
    tap_powers: Vec<f64>,
    n_subcarriers: usize,
    // phasors[n * taps + p] = exp(-j 2 pi n df tau_p)
    phasors: Vec<Complex64>,
}

impl TdlSynthesizer {
    pub fn new(profile: &TdlProfile, ds_seconds: f64, n_subcarriers: usize, delta_f_hz: f64) -> Result<Self> {
        if profile.tap_count() == 0 {
            return Err(SimError::Profile("profile has no taps".into()));
        }
        if !(ds_seconds > 0.0) {
            return Err(SimError::Profile(format!("delay spread must be positive, got {ds_seconds}")));
        }
        let taps = profile.tap_count();
        let mut phasors = Vec::with_capacity(n_subcarriers * taps);
        for n in 0..n_subcarriers {
            for &nd in &profile.normalized_delays {
                let tau = nd * ds_seconds;
                phasors.push(Complex64::from_polar(1.0, -2.0 * PI * n as f64 * delta_f_hz * tau));
            }
        }
        Ok(TdlSynthesizer {
            tap_powers: profile.normalized_powers(),
            n_subcarriers,
            phasors,
        })
    }

    /// Draws one Rayleigh tensor. Gains are drawn entry by entry (column-major), tap by tap.
    pub fn draw<R: Rng + ?Sized>(&self, band: Band, m_rx: usize, m_tx: usize, rng: &mut R) -> ChannelTensor {
        let taps = self.tap_powers.len();
        let entries = m_rx * m_tx;
        let mut gains = Vec::with_capacity(entries * taps);
        for _ in 0..entries {
            for &p in &self.tap_powers {
                gains.push(complex_gaussian(rng, p));
            }
        }
        let mut out = ChannelTensor::zeros(band, self.n_subcarriers, m_rx, m_tx);
        for n in 0..self.n_subcarriers {
            let ph = &self.phasors[n * taps..(n + 1) * taps];
            for (e, slot) in out.subcarrier_mut(n).iter_mut().enumerate() {
                let g = &gains[e * taps..(e + 1) * taps];
                *slot = g.iter().zip(ph).map(|(a, b)| a * b).sum();
            }
        }
        out
    }
}

/// Stochastic TDL component for one band, unit average power per entry.
#[allow(clippy::too_many_arguments)]
pub fn rayleigh_tdl_tensor<R: Rng + ?Sized>(
    profile: &TdlProfile,
    ds_seconds: f64,
    n_subcarriers: usize,
    delta_f_hz: f64,
    band: Band,
    m_rx: usize,
    m_tx: usize,
    rng: &mut R,
) -> Result<ChannelTensor> {
    Ok(TdlSynthesizer::new(profile, ds_seconds, n_subcarriers, delta_f_hz)?.draw(band, m_rx, m_tx, rng))
}

/// Elementwise `exp(-j 2 pi D / lambda)`.
pub fn free_space_channel(d: &DistanceMatrix, lambda: f64) -> DMatrix<Complex64> {
    DMatrix::from_fn(d.m_rx(), d.m_tx(), |r, t| {
        Complex64::from_polar(1.0, -2.0 * PI * d.get(r, t) / lambda)
    })
}

/// LOS and scattered amplitudes `(A_fs, A_rp)` for a linear K-factor.
pub fn rician_amplitudes(k_linear: f64) -> (f64, f64) {
    if k_linear.is_infinite() {
        return (1.0, 0.0);
    }
    ((k_linear / (1.0 + k_linear)).sqrt(), (1.0 / (1.0 + k_linear)).sqrt())
}

/// True channels of both bands plus the noise levels of one realization.
#[derive(Debug, Clone)]
pub struct ChannelRealization {
    pub h_sub6: ChannelTensor,
    pub h_mm: ChannelTensor,
    pub k_mm_linear: f64,
    pub snr_mm_linear: f64,
    pub snr_sub6_linear: f64,
    pub noise_var_sub6: f64,
    pub noise_var_mm: f64,
}

/// Everything about a configuration that does not change between realizations.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub cfg: SystemConfig,
    pub derived: DerivedParams,
    pub distances: DistanceMatrix,
    pub los_sub6: DMatrix<Complex64>,
    pub los_mm: DMatrix<Complex64>,
    synth_sub6: TdlSynthesizer,
    synth_mm: TdlSynthesizer,
}

impl Scenario {
    pub fn new(cfg: &SystemConfig) -> Result<Self> {
        Self::with_profile(cfg, &TdlProfile::tdl_a())
    }

    pub fn with_profile(cfg: &SystemConfig, profile: &TdlProfile) -> Result<Self> {
        let derived = cfg.derived()?;
        let distances = build_distance_matrix(cfg)?;
        Ok(Scenario {
            los_sub6: free_space_channel(&distances, derived.lambda_s),
            los_mm: free_space_channel(&distances, derived.lambda_m),
            synth_sub6: TdlSynthesizer::new(
                profile,
                cfg.sub6.rms_delay_spread_s,
                derived.n_sub6,
                cfg.sub6.subcarrier_spacing_hz,
            )?,
            synth_mm: TdlSynthesizer::new(
                profile,
                cfg.mmwave.rms_delay_spread_s,
                derived.n_mm,
                cfg.mmwave.subcarrier_spacing_hz,
            )?,
            cfg: cfg.clone(),
            derived,
            distances,
        })
    }

    /// Draws both bands' channels. The mmWave Rayleigh part is drawn first, then sub-6.
    pub fn realize<R: Rng + ?Sized>(&self, k_mm_db: f64, snr_mm_db: f64, rng: &mut R) -> ChannelRealization {
        let (m_rx, m_tx) = (self.cfg.m_rx, self.cfg.m_tx);
        let k_mm = db_to_linear(k_mm_db);
        let k_s = sub6_k_factor(k_mm);

        let rp_mm = self.synth_mm.draw(Band::MmWave, m_rx, m_tx, rng);
        let rp_s = self.synth_sub6.draw(Band::Sub6, m_rx, m_tx, rng);

        let snr_mm = db_to_linear(snr_mm_db);
        let snr_s = self.derived.alpha * self.derived.beta * snr_mm;
        ChannelRealization {
            h_mm: mix_rician(&self.los_mm, rp_mm, k_mm),
            h_sub6: mix_rician(&self.los_sub6, rp_s, k_s),
            k_mm_linear: k_mm,
            snr_mm_linear: snr_mm,
            snr_sub6_linear: snr_s,
            noise_var_mm: self.cfg.transmit_power / snr_mm,
            noise_var_sub6: self.cfg.transmit_power / snr_s,
        }
    }
}

fn mix_rician(los: &DMatrix<Complex64>, mut rayleigh: ChannelTensor, k_linear: f64) -> ChannelTensor {
    let (a_fs, a_rp) = rician_amplitudes(k_linear);
    let los = los.as_slice();
    for n in 0..rayleigh.n_subcarriers() {
        for (h, l) in rayleigh.subcarrier_mut(n).iter_mut().zip(los) {
            *h = l * a_fs + *h * a_rp;
        }
    }
    rayleigh
}

/// One-shot realization; builds a [`Scenario`] internally.
pub fn realize_channels<R: Rng + ?Sized>(
    cfg: &SystemConfig,
    k_mm_db: f64,
    snr_mm_db: f64,
    rng: &mut R,
) -> Result<ChannelRealization> {
    Ok(Scenario::new(cfg)?.realize(k_mm_db, snr_mm_db, rng))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn free_space_wraps() {
        let lambda = 0.01176;
        let d = DistanceMatrix::from_matrix(DMatrix::from_row_slice(1, 2, &[lambda, lambda / 2.0]));
        let h = free_space_channel(&d, lambda);
        assert!((h[(0, 0)] - Complex64::new(1.0, 0.0)).norm() < 1e-12);
        assert!((h[(0, 1)] - Complex64::new(-1.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn free_space_phase_matches_direct_evaluation() {
        let cfg = SystemConfig {
            m_tx: 2,
            m_rx: 2,
            element_spacing_m: 0.00588,
            ..SystemConfig::default()
        };
        let d = build_distance_matrix(&cfg).unwrap();
        let lambda = 0.01176;
        let h = free_space_channel(&d, lambda);
        for r in 0..2 {
            for t in 0..2 {
                assert!((h[(r, t)].norm() - 1.0).abs() < 1e-12);
                let phase = -2.0 * PI * d.get(r, t) / lambda;
                let expect = Complex64::new(phase.cos(), phase.sin());
                assert!((h[(r, t)] - expect).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn amplitudes_are_power_complementary() {
        for db in [-40.0, -20.0, -3.0, 0.0, 7.5, 10.0, 30.0, 90.0] {
            let (a, b) = rician_amplitudes(db_to_linear(db));
            assert!((a * a + b * b - 1.0).abs() < 1e-15, "K = {db} dB");
        }
        assert_eq!(rician_amplitudes(0.0), (0.0, 1.0));
        assert_eq!(rician_amplitudes(f64::INFINITY), (1.0, 0.0));
    }

    #[test]
    fn k_mm_10db_gives_equal_sub6_amplitudes() {
        let (a, b) = rician_amplitudes(sub6_k_factor(db_to_linear(10.0)));
        let h = 0.5f64.sqrt();
        assert!((a - h).abs() < 1e-12 && (b - h).abs() < 1e-12);
    }

    #[test]
    fn tdl_a_table_loads_sorted_and_normalized() {
        let p = TdlProfile::tdl_a();
        assert_eq!(p.tap_count(), 23);
        assert!(p.normalized_delays.windows(2).all(|w| w[0] <= w[1]));
        assert_eq!(p.normalized_delays[0], 0.0);
        assert_eq!(p.powers_db[0], -13.4);
        assert!((p.normalized_powers().iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn empty_profile_is_an_error() {
        assert!(TdlProfile::parse("# nothing\n").is_err());
        assert!(TdlProfile::from_taps(vec![]).is_err());
        assert!(TdlProfile::parse("0.1\n").is_err());
    }

    #[test]
    fn single_zero_delay_tap_is_flat() {
        let p = TdlProfile::from_taps(vec![(0.0, 0.0)]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let t = rayleigh_tdl_tensor(&p, 1e-6, 16, 60e3, Band::MmWave, 2, 3, &mut rng).unwrap();
        for n in 1..16 {
            assert_eq!(t.subcarrier(n), t.subcarrier(0));
        }
    }

    #[test]
    fn huge_k_collapses_to_los() {
        let cfg = SystemConfig::default();
        let sc = Scenario::new(&cfg).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let real = sc.realize(90.0, 0.0, &mut rng);
        for n in [0, 100, 1679] {
            let diff = (real.h_mm.matrix(n) - &sc.los_mm).map(|z| z.norm()).max();
            assert!(diff < 1e-4);
        }
    }

    #[test]
    fn zero_k_is_pure_rayleigh() {
        let cfg = SystemConfig::default();
        let sc = Scenario::new(&cfg).unwrap();
        let mut a = ChaCha8Rng::seed_from_u64(5);
        let mut b = ChaCha8Rng::seed_from_u64(5);
        let real = sc.realize(f64::NEG_INFINITY, 0.0, &mut a);
        assert_eq!(real.k_mm_linear, 0.0);
        let rp = sc.synth_mm.draw(Band::MmWave, 4, 4, &mut b);
        assert_eq!(real.h_mm, rp);
    }

    #[test]
    fn noise_levels_follow_band_snr_ratio() {
        let cfg = SystemConfig::default();
        let sc = Scenario::new(&cfg).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for snr in [-15.0, -5.0, 0.0, 12.0] {
            let r = sc.realize(5.0, snr, &mut rng);
            let ab = sc.derived.alpha * sc.derived.beta;
            assert_eq!(r.snr_sub6_linear, ab * r.snr_mm_linear);
            let back = r.noise_var_sub6 * ab;
            assert!((back - r.noise_var_mm).abs() <= 2.0 * f64::EPSILON * r.noise_var_mm);
            assert_eq!(r.noise_var_mm, cfg.transmit_power / db_to_linear(snr));
        }
    }

    #[test]
    fn realization_lengths_follow_bands() {
        let cfg = SystemConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let r = realize_channels(&cfg, 0.0, 0.0, &mut rng).unwrap();
        assert_eq!(r.h_sub6.n_subcarriers(), 168);
        assert_eq!(r.h_mm.n_subcarriers(), 1680);
        assert_eq!(r.h_sub6.band(), Band::Sub6);
        assert!(r.h_mm.is_finite() && r.h_sub6.is_finite());
    }
}
