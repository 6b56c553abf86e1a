//! Out-of-band aided mmWave channel estimation.
//!
//! The band-averaged sub-6 GHz estimate is phase-rotated by
//! `exp(j 2 pi D xi)`, `xi = 1/lambda_s - 1/lambda_m`, which maps its LOS
//! phases onto the mmWave LOS phases. The rotated estimate is then used
//! alone (translating), averaged with the in-band mmWave estimate
//! (averaging), or mixed with it using a per-(K, SNR) weight (weighting).

use std::f64::consts::PI;
use std::fmt;
use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use num_complex::Complex64;
use rand::Rng;
use rayon::prelude::*;

use crate::channel::{ChannelRealization, ChannelTensor, Scenario};
use crate::config::{DistanceMatrix, SystemConfig};
use crate::error::{Result, SimError};
use crate::seeding::{realization_rng, Stream};
use crate::training::{band_average_extrapolate, train_band};

/// Grid values closer than this are the same point.
const GRID_MATCH_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EstimationMethod {
    /// In-band mmWave estimate only.
    Conventional,
    /// True mmWave channel.
    PerfectCsi,
    Translating,
    Averaging,
    Weighting,
}

impl EstimationMethod {
    pub const ALL: [EstimationMethod; 5] = [
        EstimationMethod::Conventional,
        EstimationMethod::PerfectCsi,
        EstimationMethod::Translating,
        EstimationMethod::Averaging,
        EstimationMethod::Weighting,
    ];

    pub fn name(self) -> &'static str {
        match self {
            EstimationMethod::Conventional => "conventional",
            EstimationMethod::PerfectCsi => "perfect_csi",
            EstimationMethod::Translating => "translating",
            EstimationMethod::Averaging => "averaging",
            EstimationMethod::Weighting => "weighting",
        }
    }
}

impl fmt::Display for EstimationMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for EstimationMethod {
    type Err = SimError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().replace('-', "_").as_str() {
            "conventional" => Ok(EstimationMethod::Conventional),
            "perfect_csi" | "perfect" => Ok(EstimationMethod::PerfectCsi),
            "translating" => Ok(EstimationMethod::Translating),
            "averaging" => Ok(EstimationMethod::Averaging),
            "weighting" => Ok(EstimationMethod::Weighting),
            other => Err(SimError::config(format!("unknown estimation method `{other}`"))),
        }
    }
}

/// `xi = 1/lambda_s - 1/lambda_m`, in 1/m.
pub fn rotation_wavenumber(lambda_s: f64, lambda_m: f64) -> f64 {
    1.0 / lambda_s - 1.0 / lambda_m
}

/// Multiplies every subcarrier elementwise by `exp(j 2 pi d_rt xi)`.
pub fn phase_rotate(h: &ChannelTensor, d: &DistanceMatrix, lambda_s: f64, lambda_m: f64) -> Result<ChannelTensor> {
    if h.m_rx() != d.m_rx() || h.m_tx() != d.m_tx() {
        return Err(SimError::Dimension(format!(
            "tensor is {}x{} but distance matrix is {}x{}",
            h.m_rx(),
            h.m_tx(),
            d.m_rx(),
            d.m_tx()
        )));
    }
    let xi = rotation_wavenumber(lambda_s, lambda_m);
    let rot: Vec<Complex64> = if xi == 0.0 {
        vec![Complex64::new(1.0, 0.0); d.m_rx() * d.m_tx()]
    } else {
        // column-major like the tensor's subcarrier slices
        (0..d.m_tx())
            .flat_map(|t| (0..d.m_rx()).map(move |r| (r, t)))
            .map(|(r, t)| Complex64::from_polar(1.0, 2.0 * PI * d.get(r, t) * xi))
            .collect()
    };
    let mut out = h.clone();
    if xi != 0.0 {
        for n in 0..out.n_subcarriers() {
            for (z, e) in out.subcarrier_mut(n).iter_mut().zip(&rot) {
                *z *= e;
            }
        }
    }
    Ok(out)
}

/// `w * a + (1 - w) * b`, entrywise.
pub fn convex_combination(a: &ChannelTensor, b: &ChannelTensor, w: f64) -> ChannelTensor {
    let mut out = b.clone();
    let v = 1.0 - w;
    for (o, x) in out.as_mut_slice().iter_mut().zip(a.as_slice()) {
        *o = x * w + *o * v;
    }
    out
}

/// Builds the mmWave estimate `H_bar` used for precoding.
pub fn fuse(
    method: EstimationMethod,
    h_hat_s: &ChannelTensor,
    h_tilde_m: &ChannelTensor,
    h_true_m: &ChannelTensor,
    w: Option<f64>,
) -> Result<ChannelTensor> {
    if !h_hat_s.same_shape(h_tilde_m) || !h_hat_s.same_shape(h_true_m) {
        return Err(SimError::Dimension("fusion inputs differ in shape".into()));
    }
    Ok(match method {
        EstimationMethod::Conventional => h_tilde_m.clone(),
        EstimationMethod::PerfectCsi => h_true_m.clone(),
        EstimationMethod::Translating => h_hat_s.clone(),
        EstimationMethod::Averaging => {
            let mut out = h_hat_s.clone();
            for (o, x) in out.as_mut_slice().iter_mut().zip(h_tilde_m.as_slice()) {
                *o = (*o + x) * 0.5;
            }
            out
        }
        EstimationMethod::Weighting => {
            let w = w.ok_or(SimError::MissingWeight)?;
            if !(0.0..=1.0).contains(&w) {
                return Err(SimError::WeightOutOfRange(w));
            }
            convex_combination(h_hat_s, h_tilde_m, w)
        }
    })
}

/// Truth and both estimates of one realization, all on the mmWave subcarrier grid.
#[derive(Debug, Clone)]
pub struct RealizationEstimates {
    pub channels: ChannelRealization,
    /// In-band LS estimate.
    pub h_tilde_m: ChannelTensor,
    /// Band-averaged, extrapolated and rotated sub-6 estimate.
    pub h_hat_s: ChannelTensor,
}

/// Draws channels, trains both bands and prepares the rotated sub-6 estimate.
///
/// Random draw order: channels, sub-6 training, mmWave training.
pub fn estimate_realization<R: Rng + ?Sized>(
    scenario: &Scenario,
    k_mm_db: f64,
    snr_mm_db: f64,
    rng: &mut R,
) -> Result<RealizationEstimates> {
    let channels = scenario.realize(k_mm_db, snr_mm_db, rng);
    let p_t = scenario.cfg.transmit_power;
    let h_tilde_s = train_band(&channels.h_sub6, channels.noise_var_sub6, p_t, rng)?;
    let h_tilde_m = train_band(&channels.h_mm, channels.noise_var_mm, p_t, rng)?;
    let flat = band_average_extrapolate(&h_tilde_s, scenario.derived.n_mm);
    let h_hat_s = phase_rotate(
        &flat,
        &scenario.distances,
        scenario.derived.lambda_s,
        scenario.derived.lambda_m,
    )?;
    Ok(RealizationEstimates {
        channels,
        h_tilde_m,
        h_hat_s,
    })
}

/// Per-realization sums that make the weighting error a quadratic in `W`.
///
/// With `a = H - H_hat_s` and `b = H - H_tilde_m`, the error of the weighted
/// estimate is `W a + (1 - W) b`, so its energy is
/// `W^2 Saa + (1 - W)^2 Sbb + 2 W (1 - W) Sab`.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ErrorMoments {
    pub saa: f64,
    pub sbb: f64,
    pub sab: f64,
    /// Number of matrix entries summed per term (subcarriers).
    pub subcarriers: usize,
}

impl ErrorMoments {
    pub fn from_estimates(est: &RealizationEstimates) -> Self {
        let mut m = ErrorMoments {
            subcarriers: est.channels.h_mm.n_subcarriers(),
            ..Default::default()
        };
        let h = est.channels.h_mm.as_slice();
        for ((t, s), c) in h.iter().zip(est.h_hat_s.as_slice()).zip(est.h_tilde_m.as_slice()) {
            let a = t - s;
            let b = t - c;
            m.saa += a.norm_sqr();
            m.sbb += b.norm_sqr();
            m.sab += (a * b.conj()).re;
        }
        m
    }

    pub fn add(&mut self, other: &ErrorMoments) {
        self.saa += other.saa;
        self.sbb += other.sbb;
        self.sab += other.sab;
        self.subcarriers += other.subcarriers;
    }

    /// Mean (per subcarrier) squared Frobenius error of the `W`-weighted estimate.
    pub fn mean_error(&self, w: f64) -> f64 {
        let v = 1.0 - w;
        (w * w * self.saa + v * v * self.sbb + 2.0 * w * v * self.sab) / self.subcarriers as f64
    }
}

/// Candidate weights `0, step, 2 step, ..., 1`.
pub fn weight_candidates(w_step: f64) -> Result<Vec<f64>> {
    if !(w_step > 0.0 && w_step <= 1.0) {
        return Err(SimError::config(format!("w_step must lie in (0, 1], got {w_step}")));
    }
    let steps = (1.0 / w_step).round();
    if ((1.0 / w_step) - steps).abs() > 1e-9 {
        return Err(SimError::config(format!("w_step {w_step} does not divide 1 evenly")));
    }
    let steps = steps as usize;
    Ok((0..=steps).map(|i| i as f64 / steps as f64).collect())
}

/// Accumulated error moments of `l` realizations at one grid point, summed in realization order.
pub fn grid_point_moments(scenario: &Scenario, k_mm_db: f64, snr_mm_db: f64, l: usize) -> Result<ErrorMoments> {
    let seed = scenario.cfg.seed;
    let per: Vec<ErrorMoments> = (0..l)
        .into_par_iter()
        .map(|i| {
            let mut rng = realization_rng(seed, Stream::WeightTable, i as u64, k_mm_db, snr_mm_db);
            estimate_realization(scenario, k_mm_db, snr_mm_db, &mut rng).map(|e| ErrorMoments::from_estimates(&e))
        })
        .collect::<Result<_>>()?;
    let mut total = ErrorMoments::default();
    for m in &per {
        total.add(m);
    }
    Ok(total)
}

/// Grid index of the smallest mean error; ties go to the smaller weight.
pub fn argmin_weight(moments: &ErrorMoments, candidates: &[f64]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (i, &w) in candidates.iter().enumerate() {
        let e = moments.mean_error(w);
        if e < best.1 {
            best = (i, e);
        }
    }
    best
}

/// Lookup table of weighting factors on a (K, SNR) grid, both in dB.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightTable {
    pub k_grid_db: Vec<f64>,
    pub snr_grid_db: Vec<f64>,
    /// `w[k_index][snr_index]`.
    pub w: Vec<Vec<f64>>,
}

fn sorted_grid(grid: &[f64]) -> Vec<f64> {
    let mut g = grid.to_vec();
    g.sort_by(f64::total_cmp);
    g.dedup_by(|a, b| (*a - *b).abs() <= GRID_MATCH_TOL);
    g
}

fn grid_index(grid: &[f64], v: f64) -> Option<usize> {
    grid.iter().position(|&g| (g - v).abs() <= GRID_MATCH_TOL)
}

impl WeightTable {
    pub fn new(k_grid_db: Vec<f64>, snr_grid_db: Vec<f64>, w: Vec<Vec<f64>>) -> Result<Self> {
        if w.len() != k_grid_db.len() || w.iter().any(|row| row.len() != snr_grid_db.len()) {
            return Err(SimError::TableFormat("table body does not match grid sizes".into()));
        }
        if let Some(&bad) = w.iter().flatten().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(SimError::WeightOutOfRange(bad));
        }
        if k_grid_db.windows(2).any(|p| p[0] >= p[1]) || snr_grid_db.windows(2).any(|p| p[0] >= p[1]) {
            return Err(SimError::TableFormat("grids must be strictly increasing".into()));
        }
        Ok(WeightTable {
            k_grid_db,
            snr_grid_db,
            w,
        })
    }

    /// Exact grid lookup; off-grid requests are an error.
    pub fn get(&self, k_db: f64, snr_db: f64) -> Result<f64> {
        match (grid_index(&self.k_grid_db, k_db), grid_index(&self.snr_grid_db, snr_db)) {
            (Some(i), Some(j)) => Ok(self.w[i][j]),
            _ => Err(SimError::OffGrid { k_db, snr_db }),
        }
    }

    /// CSV with the SNR grid as header row and the K grid as first column.
    pub fn to_csv(&self) -> String {
        // enough decimals for the finest weight step, never fewer than two
        let decimals = self
            .w
            .iter()
            .flatten()
            .map(|v| (2..=6).find(|&d| ((v * 10f64.powi(d)).round() / 10f64.powi(d) - v).abs() < 1e-9).unwrap_or(6))
            .max()
            .unwrap_or(2) as usize;
        let mut out = String::from("k_db\\snr_db");
        for g in &self.snr_grid_db {
            let _ = write!(out, ",{g:.2}");
        }
        out.push('\n');
        for (k, row) in self.k_grid_db.iter().zip(&self.w) {
            let _ = write!(out, "{k:.2}");
            for v in row {
                let _ = write!(out, ",{v:.decimals$}");
            }
            out.push('\n');
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines().map(str::trim).filter(|l| !l.is_empty());
        let header = lines.next().ok_or_else(|| SimError::TableFormat("empty table".into()))?;
        let num = |s: &str| -> Result<f64> {
            s.trim()
                .parse()
                .map_err(|_| SimError::TableFormat(format!("`{s}` is not a number")))
        };
        let snr_grid_db = header.split(',').skip(1).map(num).collect::<Result<Vec<_>>>()?;
        let mut k_grid_db = Vec::new();
        let mut w = Vec::new();
        for line in lines {
            let mut cells = line.split(',');
            k_grid_db.push(num(cells.next().unwrap_or(""))?);
            w.push(cells.map(num).collect::<Result<Vec<_>>>()?);
        }
        WeightTable::new(k_grid_db, snr_grid_db, w)
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_csv()).map_err(|e| SimError::io(path, e))
    }

    pub fn read_csv(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| SimError::io(path, e))?;
        Self::from_csv(&text)
    }
}

/// Fills a weight table by minimizing the mean channel estimation error over
/// `l` realizations per grid point. Every candidate is scored on the same realizations.
pub fn build_weight_table(
    cfg: &SystemConfig,
    k_grid_db: &[f64],
    snr_grid_db: &[f64],
    w_step: f64,
    l: usize,
) -> Result<WeightTable> {
    let scenario = Scenario::new(cfg)?;
    build_weight_table_with(&scenario, k_grid_db, snr_grid_db, w_step, l)
}

pub fn build_weight_table_with(
    scenario: &Scenario,
    k_grid_db: &[f64],
    snr_grid_db: &[f64],
    w_step: f64,
    l: usize,
) -> Result<WeightTable> {
    if k_grid_db.is_empty() || snr_grid_db.is_empty() {
        return Err(SimError::config("weight table grids must be nonempty"));
    }
    if l == 0 {
        return Err(SimError::config("weight table needs at least one realization"));
    }
    let candidates = weight_candidates(w_step)?;
    let k_grid = sorted_grid(k_grid_db);
    let snr_grid = sorted_grid(snr_grid_db);
    let mut w = Vec::with_capacity(k_grid.len());
    for &k in &k_grid {
        let mut row = Vec::with_capacity(snr_grid.len());
        for &g in &snr_grid {
            let moments = grid_point_moments(scenario, k, g, l)?;
            row.push(candidates[argmin_weight(&moments, &candidates).0]);
        }
        w.push(row);
    }
    WeightTable::new(k_grid, snr_grid, w)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{complex_gaussian, Band};
    use crate::config::build_distance_matrix;
    use nalgebra::DMatrix;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_tensor(seed: u64, n: usize) -> ChannelTensor {
        let mut g = ChaCha8Rng::seed_from_u64(seed);
        ChannelTensor::from_fn(Band::MmWave, n, 3, 2, |_, _, _| complex_gaussian(&mut g, 1.0))
    }

    #[test]
    fn equal_wavelengths_do_not_rotate() {
        let h = random_tensor(1, 5);
        let d = DistanceMatrix::from_matrix(DMatrix::from_element(3, 2, 10.0));
        assert_eq!(phase_rotate(&h, &d, 0.1, 0.1).unwrap(), h);
    }

    #[test]
    fn table_wavelength_wavenumber() {
        assert!((rotation_wavenumber(0.1176, 0.01176) - (-76.53)).abs() < 0.01);
    }

    #[test]
    fn rotation_maps_sub6_los_onto_mm_los() {
        let cfg = SystemConfig::default();
        let p = cfg.derived().unwrap();
        let d = build_distance_matrix(&cfg).unwrap();
        let los_s = crate::channel::free_space_channel(&d, p.lambda_s);
        let los_m = crate::channel::free_space_channel(&d, p.lambda_m);
        let rotated = phase_rotate(&ChannelTensor::replicate(Band::MmWave, &los_s, 3), &d, p.lambda_s, p.lambda_m).unwrap();
        for n in 0..3 {
            assert!((rotated.matrix(n) - &los_m).map(|z| z.norm()).max() < 1e-10);
        }
    }

    #[test]
    fn rotation_rejects_wrong_shape() {
        let h = random_tensor(1, 2);
        let d = DistanceMatrix::from_matrix(DMatrix::from_element(2, 2, 10.0));
        assert!(matches!(phase_rotate(&h, &d, 0.1, 0.01), Err(SimError::Dimension(_))));
    }

    #[test]
    fn weighting_endpoints_are_bit_identical() {
        let (s, m, t) = (random_tensor(1, 6), random_tensor(2, 6), random_tensor(3, 6));
        let f = |method, w| fuse(method, &s, &m, &t, w).unwrap();
        assert_eq!(f(EstimationMethod::Weighting, Some(1.0)), f(EstimationMethod::Translating, None));
        assert_eq!(f(EstimationMethod::Weighting, Some(0.0)), f(EstimationMethod::Conventional, None));
        assert_eq!(f(EstimationMethod::Weighting, Some(0.5)), f(EstimationMethod::Averaging, None));
        assert_eq!(f(EstimationMethod::PerfectCsi, None), t);
    }

    #[test]
    fn weighting_validates_weight() {
        let (s, m, t) = (random_tensor(1, 2), random_tensor(2, 2), random_tensor(3, 2));
        assert!(matches!(
            fuse(EstimationMethod::Weighting, &s, &m, &t, None),
            Err(SimError::MissingWeight)
        ));
        assert!(matches!(
            fuse(EstimationMethod::Weighting, &s, &m, &t, Some(1.2)),
            Err(SimError::WeightOutOfRange(_))
        ));
        let short = random_tensor(4, 3);
        assert!(fuse(EstimationMethod::Averaging, &s, &short, &t, None).is_err());
    }

    #[test]
    fn method_names_round_trip() {
        for m in EstimationMethod::ALL {
            assert_eq!(m.name().parse::<EstimationMethod>().unwrap(), m);
        }
        assert!("wiener".parse::<EstimationMethod>().is_err());
    }

    #[test]
    fn candidates_cover_unit_interval() {
        let c = weight_candidates(0.01).unwrap();
        assert_eq!(c.len(), 101);
        assert_eq!(c[35], 0.35);
        assert_eq!(*c.last().unwrap(), 1.0);
        assert!(weight_candidates(0.03).is_err());
        assert!(weight_candidates(0.0).is_err());
    }

    #[test]
    fn moments_reproduce_direct_error() {
        let cfg = SystemConfig {
            sub6: crate::config::BandParams {
                bandwidth_hz: 1.2e6,
                ..crate::config::BandParams::sub6_default()
            },
            mmwave: crate::config::BandParams {
                bandwidth_hz: 2.4e6,
                ..crate::config::BandParams::mmwave_default()
            },
            ..SystemConfig::default()
        };
        let sc = Scenario::new(&cfg).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let est = estimate_realization(&sc, 5.0, -5.0, &mut rng).unwrap();
        let m = ErrorMoments::from_estimates(&est);
        for w in [0.0, 0.13, 0.5, 0.77, 1.0] {
            let fused = fuse(EstimationMethod::Weighting, &est.h_hat_s, &est.h_tilde_m, &est.channels.h_mm, Some(w)).unwrap();
            let direct = fused.sq_distance(&est.channels.h_mm).unwrap() / est.h_hat_s.n_subcarriers() as f64;
            assert!((m.mean_error(w) - direct).abs() <= 1e-10 * direct.max(1.0));
        }
    }

    #[test]
    fn table_lookup_is_exact_grid() {
        let t = WeightTable::new(vec![-5.0, 10.0], vec![0.0], vec![vec![0.2], vec![0.9]]).unwrap();
        assert_eq!(t.get(10.0, 0.0).unwrap(), 0.9);
        assert!(matches!(t.get(7.5, 0.0), Err(SimError::OffGrid { .. })));
        assert!(WeightTable::new(vec![0.0], vec![0.0], vec![vec![1.5]]).is_err());
    }

    #[test]
    fn table_csv_layout() {
        let t = WeightTable::new(vec![-20.0, 30.0], vec![-15.0, 20.0], vec![vec![0.83, 1.0], vec![0.0, 0.68]]).unwrap();
        let csv = t.to_csv();
        assert_eq!(csv, "k_db\\snr_db,-15.00,20.00\n-20.00,0.83,1.00\n30.00,0.00,0.68\n");
        assert_eq!(WeightTable::from_csv(&csv).unwrap(), t);
    }
}
