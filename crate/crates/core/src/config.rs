//! Simulation parameters and the shared dual-band array geometry.
//!
//! Defaults reproduce the 2.55 GHz / 25.5 GHz setup with 4x4 arrays at
//! half-wavelength mmWave spacing. Both bands use the same physical element
//! positions, so one [`DistanceMatrix`] serves both.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{Result, SimError};

/// Speed of light in vacuum, m/s.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Largest tolerated deviation of `bandwidth / subcarrier_spacing` from an integer.
const SUBCARRIER_COUNT_TOL: f64 = 1e-6;

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub fn linear_to_db(lin: f64) -> f64 {
    10.0 * lin.log10()
}

/// Radio parameters of one band.
#[derive(Debug, Clone, PartialEq)]
pub struct BandParams {
    pub carrier_frequency_hz: f64,
    pub bandwidth_hz: f64,
    pub subcarrier_spacing_hz: f64,
    pub noise_figure_db: f64,
    pub rms_delay_spread_s: f64,
    /// Kept for documentation; the frequency-domain model never uses it.
    pub cyclic_prefix_s: f64,
}

impl BandParams {
    pub fn sub6_default() -> Self {
        BandParams {
            carrier_frequency_hz: 2.55e9,
            bandwidth_hz: 10.08e6,
            subcarrier_spacing_hz: 60e3,
            noise_figure_db: 3.0,
            rms_delay_spread_s: 1148e-9,
            cyclic_prefix_s: 1.19e-6,
        }
    }

    pub fn mmwave_default() -> Self {
        BandParams {
            carrier_frequency_hz: 25.5e9,
            bandwidth_hz: 100.8e6,
            subcarrier_spacing_hz: 60e3,
            noise_figure_db: 3.0,
            rms_delay_spread_s: 841e-9,
            cyclic_prefix_s: 1.19e-6,
        }
    }

    pub fn wavelength_m(&self) -> f64 {
        SPEED_OF_LIGHT / self.carrier_frequency_hz
    }

    pub fn noise_figure_linear(&self) -> f64 {
        db_to_linear(self.noise_figure_db)
    }

    /// Number of subcarriers, `bandwidth / spacing`, which must be integral.
    pub fn subcarrier_count(&self) -> Result<usize> {
        let ratio = self.bandwidth_hz / self.subcarrier_spacing_hz;
        let rounded = ratio.round();
        if rounded < 1.0 || (ratio - rounded).abs() > SUBCARRIER_COUNT_TOL {
            return Err(SimError::config(format!(
                "bandwidth {} Hz is not a positive integer multiple of subcarrier spacing {} Hz",
                self.bandwidth_hz, self.subcarrier_spacing_hz
            )));
        }
        Ok(rounded as usize)
    }

    fn validate(&self, name: &str) -> Result<()> {
        let positive = [
            ("carrier_frequency_hz", self.carrier_frequency_hz),
            ("bandwidth_hz", self.bandwidth_hz),
            ("subcarrier_spacing_hz", self.subcarrier_spacing_hz),
            ("rms_delay_spread_s", self.rms_delay_spread_s),
            ("cyclic_prefix_s", self.cyclic_prefix_s),
        ];
        for (field, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(SimError::config(format!("{name}.{field} must be positive, got {v}")));
            }
        }
        if !self.noise_figure_db.is_finite() {
            return Err(SimError::config(format!("{name}.noise_figure_db must be finite")));
        }
        self.subcarrier_count()?;
        Ok(())
    }
}

/// Every knob of a simulation run.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemConfig {
    pub sub6: BandParams,
    pub mmwave: BandParams,
    pub m_tx: usize,
    pub m_rx: usize,
    /// Physical element spacing, identical for both arrays.
    pub element_spacing_m: f64,
    /// Boresight separation between transmit and receive arrays.
    pub link_distance_m: f64,
    pub k_factor_mm_db_grid: Vec<f64>,
    pub snr_mm_db_grid: Vec<f64>,
    pub realizations: usize,
    pub seed: u64,
    pub transmit_power: f64,
}

impl Default for SystemConfig {
    fn default() -> Self {
        let mmwave = BandParams::mmwave_default();
        SystemConfig {
            sub6: BandParams::sub6_default(),
            element_spacing_m: 0.5 * mmwave.wavelength_m(),
            mmwave,
            m_tx: 4,
            m_rx: 4,
            link_distance_m: 10.0,
            k_factor_mm_db_grid: (0..=10).map(|i| -20.0 + 5.0 * i as f64).collect(),
            snr_mm_db_grid: vec![-5.0, 0.0, 10.0],
            realizations: 1000,
            seed: 1,
            transmit_power: 1.0,
        }
    }
}

/// Quantities derived from a [`SystemConfig`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DerivedParams {
    /// Squared carrier ratio, mmWave over sub-6.
    pub alpha: f64,
    /// Bandwidth times noise figure ratio, mmWave over sub-6.
    pub beta: f64,
    pub n_sub6: usize,
    pub n_mm: usize,
    pub lambda_s: f64,
    pub lambda_m: f64,
}

impl DerivedParams {
    /// Linear sub-6 SNR for a given linear mmWave SNR.
    pub fn sub6_snr(&self, snr_mm_linear: f64) -> f64 {
        self.alpha * self.beta * snr_mm_linear
    }
}

/// Sub-6 GHz K-factor (linear) paired with a mmWave K-factor (linear).
pub fn sub6_k_factor(k_mm_linear: f64) -> f64 {
    k_mm_linear / 10.0
}

impl SystemConfig {
    pub fn validate(&self) -> Result<()> {
        self.sub6.validate("sub6")?;
        self.mmwave.validate("mmwave")?;
        if self.m_tx == 0 || self.m_rx == 0 {
            return Err(SimError::config("m_tx and m_rx must be at least 1"));
        }
        for (field, v) in [
            ("element_spacing_m", self.element_spacing_m),
            ("link_distance_m", self.link_distance_m),
            ("transmit_power", self.transmit_power),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(SimError::config(format!("{field} must be positive, got {v}")));
            }
        }
        if self.realizations == 0 {
            return Err(SimError::config("realizations must be at least 1"));
        }
        for (field, grid) in [
            ("k_factor_mm_db_grid", &self.k_factor_mm_db_grid),
            ("snr_mm_db_grid", &self.snr_mm_db_grid),
        ] {
            if grid.iter().any(|v| !v.is_finite()) {
                return Err(SimError::config(format!("{field} contains a non-finite value")));
            }
        }
        let ratio = self.mmwave.carrier_frequency_hz / self.sub6.carrier_frequency_hz;
        if ratio <= 1.0 {
            return Err(SimError::config(
                "mmwave carrier frequency must exceed the sub-6 carrier frequency",
            ));
        }
        Ok(())
    }

    pub fn derived(&self) -> Result<DerivedParams> {
        self.validate()?;
        let ratio = self.mmwave.carrier_frequency_hz / self.sub6.carrier_frequency_hz;
        let beta = (self.mmwave.bandwidth_hz * self.mmwave.noise_figure_linear())
            / (self.sub6.bandwidth_hz * self.sub6.noise_figure_linear());
        Ok(DerivedParams {
            alpha: ratio * ratio,
            beta,
            n_sub6: self.sub6.subcarrier_count()?,
            n_mm: self.mmwave.subcarrier_count()?,
            lambda_s: self.sub6.wavelength_m(),
            lambda_m: self.mmwave.wavelength_m(),
        })
    }

    /// Reads a `key = value` file on top of the defaults.
    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| SimError::io(path, e))?;
        let mut cfg = SystemConfig::default();
        cfg.apply_kv_text(&text)?;
        Ok(cfg)
    }

    /// Applies every `key = value` line of `text`. `#` starts a comment.
    pub fn apply_kv_text(&mut self, text: &str) -> Result<()> {
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| SimError::ConfigParse {
                line: idx + 1,
                msg: format!("expected `key = value`, got `{line}`"),
            })?;
            self.set(key.trim(), value.trim()).map_err(|e| match e {
                SimError::Config(msg) => SimError::ConfigParse { line: idx + 1, msg },
                other => other,
            })?;
        }
        Ok(())
    }

    /// Sets one field by its key name.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        if let Some((band, field)) = key.split_once('.') {
            let params = match band {
                "sub6" => &mut self.sub6,
                "mmwave" => &mut self.mmwave,
                _ => return Err(SimError::config(format!("unknown band `{band}` in key `{key}`"))),
            };
            let slot = match field {
                "carrier_frequency_hz" => &mut params.carrier_frequency_hz,
                "bandwidth_hz" => &mut params.bandwidth_hz,
                "subcarrier_spacing_hz" => &mut params.subcarrier_spacing_hz,
                "noise_figure_db" => &mut params.noise_figure_db,
                "rms_delay_spread_s" => &mut params.rms_delay_spread_s,
                "cyclic_prefix_s" => &mut params.cyclic_prefix_s,
                _ => return Err(SimError::config(format!("unknown key `{key}`"))),
            };
            *slot = parse_f64(key, value)?;
            return Ok(());
        }
        match key {
            "m_tx" => self.m_tx = parse_usize(key, value)?,
            "m_rx" => self.m_rx = parse_usize(key, value)?,
            "element_spacing_m" => self.element_spacing_m = parse_f64(key, value)?,
            "link_distance_m" => self.link_distance_m = parse_f64(key, value)?,
            "k_factor_mm_db_grid" => self.k_factor_mm_db_grid = parse_grid(key, value)?,
            "snr_mm_db_grid" => self.snr_mm_db_grid = parse_grid(key, value)?,
            "realizations" => self.realizations = parse_usize(key, value)?,
            "seed" => {
                self.seed = value
                    .parse()
                    .map_err(|_| SimError::config(format!("{key}: `{value}` is not a u64")))?
            }
            "transmit_power" => self.transmit_power = parse_f64(key, value)?,
            _ => return Err(SimError::config(format!("unknown key `{key}`"))),
        }
        Ok(())
    }

    /// Renders the config in the same `key = value` format `apply_kv_text` reads.
    pub fn to_kv_text(&self) -> String {
        let mut out = String::new();
        for (name, b) in [("sub6", &self.sub6), ("mmwave", &self.mmwave)] {
            let _ = writeln!(out, "{name}.carrier_frequency_hz = {}", b.carrier_frequency_hz);
            let _ = writeln!(out, "{name}.bandwidth_hz = {}", b.bandwidth_hz);
            let _ = writeln!(out, "{name}.subcarrier_spacing_hz = {}", b.subcarrier_spacing_hz);
            let _ = writeln!(out, "{name}.noise_figure_db = {}", b.noise_figure_db);
            let _ = writeln!(out, "{name}.rms_delay_spread_s = {}", b.rms_delay_spread_s);
            let _ = writeln!(out, "{name}.cyclic_prefix_s = {}", b.cyclic_prefix_s);
        }
        let grid = |g: &[f64]| g.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(", ");
        let _ = writeln!(out, "m_tx = {}", self.m_tx);
        let _ = writeln!(out, "m_rx = {}", self.m_rx);
        let _ = writeln!(out, "element_spacing_m = {}", self.element_spacing_m);
        let _ = writeln!(out, "link_distance_m = {}", self.link_distance_m);
        let _ = writeln!(out, "k_factor_mm_db_grid = {}", grid(&self.k_factor_mm_db_grid));
        let _ = writeln!(out, "snr_mm_db_grid = {}", grid(&self.snr_mm_db_grid));
        let _ = writeln!(out, "realizations = {}", self.realizations);
        let _ = writeln!(out, "seed = {}", self.seed);
        let _ = writeln!(out, "transmit_power = {}", self.transmit_power);
        out
    }
}

fn parse_f64(key: &str, value: &str) -> Result<f64> {
    value
        .parse()
        .map_err(|_| SimError::config(format!("{key}: `{value}` is not a number")))
}

fn parse_usize(key: &str, value: &str) -> Result<usize> {
    value
        .parse()
        .map_err(|_| SimError::config(format!("{key}: `{value}` is not a non-negative integer")))
}

fn parse_grid(key: &str, value: &str) -> Result<Vec<f64>> {
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| parse_f64(key, s))
        .collect()
}

/// Element-pair distances between the receive and transmit arrays, meters.
///
/// Row `r` is a receive element, column `t` a transmit element.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMatrix(DMatrix<f64>);

impl DistanceMatrix {
    pub fn from_matrix(m: DMatrix<f64>) -> Self {
        DistanceMatrix(m)
    }

    pub fn m_rx(&self) -> usize {
        self.0.nrows()
    }

    pub fn m_tx(&self) -> usize {
        self.0.ncols()
    }

    pub fn get(&self, r: usize, t: usize) -> f64 {
        self.0[(r, t)]
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.0
    }
}

/// Two parallel broadside ULAs facing each other across `link_distance_m`.
pub fn build_distance_matrix(cfg: &SystemConfig) -> Result<DistanceMatrix> {
    if cfg.m_tx == 0 || cfg.m_rx == 0 {
        return Err(SimError::config("m_tx and m_rx must be at least 1"));
    }
    if !(cfg.link_distance_m > 0.0) {
        return Err(SimError::config("link_distance_m must be positive"));
    }
    let d = cfg.link_distance_m;
    let s = cfg.element_spacing_m;
    Ok(DistanceMatrix(DMatrix::from_fn(cfg.m_rx, cfg.m_tx, |r, t| {
        let dx = (r as f64 - t as f64) * s;
        d.hypot(dx)
    })))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_defaults_give_expected_ratios() {
        let p = SystemConfig::default().derived().unwrap();
        assert!((p.alpha - 100.0).abs() < 1e-9);
        assert!((p.beta - 10.0).abs() < 1e-9);
        // integer-division oracle on the table values in Hz
        assert_eq!(p.n_sub6, 10_080_000 / 60_000);
        assert_eq!(p.n_mm, 100_800_000 / 60_000);
        assert_eq!((p.n_sub6, p.n_mm), (168, 1680));
        assert!((p.lambda_s - 0.11757).abs() < 1e-4);
        assert!((p.lambda_m - 0.011757).abs() < 1e-5);
    }

    #[test]
    fn default_spacing_is_half_mm_wavelength() {
        let cfg = SystemConfig::default();
        let p = cfg.derived().unwrap();
        assert!((cfg.element_spacing_m - 0.5 * p.lambda_m).abs() < 1e-15);
        assert!((cfg.element_spacing_m - 0.05 * p.lambda_s).abs() < 1e-12);
        assert!((cfg.element_spacing_m - 0.00588).abs() < 1e-5);
    }

    #[test]
    fn non_integer_subcarrier_count_is_rejected() {
        let mut cfg = SystemConfig::default();
        cfg.sub6.bandwidth_hz = 10.09e6;
        assert!(matches!(cfg.derived(), Err(SimError::Config(_))));
    }

    #[test]
    fn sub6_snr_relation() {
        let p = SystemConfig::default().derived().unwrap();
        let g_m = db_to_linear(-5.0);
        assert_eq!(p.sub6_snr(g_m), p.alpha * p.beta * g_m);
        assert!((linear_to_db(p.sub6_snr(g_m)) - 25.0).abs() < 1e-9);
    }

    #[test]
    fn distance_single_pair() {
        let cfg = SystemConfig {
            m_tx: 1,
            m_rx: 1,
            ..SystemConfig::default()
        };
        let dm = build_distance_matrix(&cfg).unwrap();
        assert_eq!(dm.get(0, 0), cfg.link_distance_m);
    }

    #[test]
    fn distance_two_by_two() {
        let cfg = SystemConfig {
            m_tx: 2,
            m_rx: 2,
            element_spacing_m: 0.00588,
            link_distance_m: 10.0,
            ..SystemConfig::default()
        };
        let dm = build_distance_matrix(&cfg).unwrap();
        let expect = (100.0f64 + 0.00588 * 0.00588).sqrt();
        assert_eq!(dm.get(0, 0), 10.0);
        assert_eq!(dm.get(1, 1), 10.0);
        assert!((dm.get(0, 1) - expect).abs() < 1e-12);
        assert!((dm.get(1, 0) - expect).abs() < 1e-12);
        assert!((dm.get(0, 1) - 10.000_001_728_7).abs() < 1e-9);
    }

    #[test]
    fn kv_parsing_round_trips_and_rejects_garbage() {
        let mut cfg = SystemConfig::default();
        cfg.apply_kv_text(
            "# comment\nm_tx = 2\nsnr_mm_db_grid = -5, 0 ,10 # trailing\nsub6.noise_figure_db = 5\nseed = 42\n",
        )
        .unwrap();
        assert_eq!(cfg.m_tx, 2);
        assert_eq!(cfg.snr_mm_db_grid, vec![-5.0, 0.0, 10.0]);
        assert_eq!(cfg.sub6.noise_figure_db, 5.0);
        assert_eq!(cfg.seed, 42);

        let mut back = SystemConfig::default();
        back.apply_kv_text(&cfg.to_kv_text()).unwrap();
        assert_eq!(back, cfg);

        let err = SystemConfig::default().apply_kv_text("m_tx = 2\nbogus = 1\n");
        assert!(matches!(err, Err(SimError::ConfigParse { line: 2, .. })));
        let err = SystemConfig::default().apply_kv_text("m_tx 2\n");
        assert!(matches!(err, Err(SimError::ConfigParse { line: 1, .. })));
    }
}
