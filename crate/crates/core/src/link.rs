//! SVD precoding on a channel estimate and spectral efficiency against the true channel.

use nalgebra::{DMatrix, DMatrixView};
use num_complex::Complex64;

use crate::channel::ChannelTensor;
use crate::error::{Result, SimError};

const SVD_EPS: f64 = 1e-15;
const SVD_MAX_ITER: usize = 500;

/// How stream SINRs are aggregated into SE.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SinrMode {
    /// One SINR per subcarrier: all stream powers over all interference plus noise.
    #[default]
    Aggregate,
    /// Diagnostic only: sum of per-stream `log2(1 + SINR_mu)`.
    PerStream,
}

/// Per-subcarrier combiner/precoder pair with equal power loading.
#[derive(Debug, Clone)]
pub struct Precoding {
    /// `M_Rx x l_max` left singular vectors.
    pub combiners: Vec<DMatrix<Complex64>>,
    /// `M_Tx x l_max` right singular vectors.
    pub precoders: Vec<DMatrix<Complex64>>,
    /// Descending singular values per subcarrier.
    pub singular_values: Vec<Vec<f64>>,
    pub streams: usize,
    /// `P_T / l_max`, the diagonal of the power loading matrix.
    pub power_per_stream: f64,
}

/// Singular triplets of one matrix, sorted descending, phase-normalized.
#[derive(Debug, Clone)]
pub struct CompactSvd {
    pub u: DMatrix<Complex64>,
    pub sigma: Vec<f64>,
    pub v: DMatrix<Complex64>,
}

/// Compact SVD with each right singular vector's largest entry made real-positive.
pub fn compact_svd(h: DMatrixView<'_, Complex64>) -> Option<CompactSvd> {
    let svd = h.into_owned().try_svd(true, true, SVD_EPS, SVD_MAX_ITER)?;
    let u = svd.u?;
    let v = svd.v_t?.adjoint();
    let k = svd.singular_values.len();

    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));

    let mut out_u = DMatrix::zeros(u.nrows(), k);
    let mut out_v = DMatrix::zeros(v.nrows(), k);
    let mut sigma = Vec::with_capacity(k);
    for (dst, &src) in order.iter().enumerate() {
        let vc = v.column(src);
        let (imax, _) = vc
            .iter()
            .enumerate()
            .fold((0, -1.0), |best, (i, z)| if z.norm() > best.1 { (i, z.norm()) } else { best });
        let pivot = vc[imax];
        let phase = if pivot.norm() > 0.0 {
            (pivot / pivot.norm()).conj()
        } else {
            Complex64::new(1.0, 0.0)
        };
        out_v.set_column(dst, &(vc * phase));
        out_u.set_column(dst, &(u.column(src) * phase));
        sigma.push(svd.singular_values[src]);
    }
    Some(CompactSvd {
        u: out_u,
        sigma,
        v: out_v,
    })
}

/// SVD precoder and combiner for every subcarrier of `h_bar`.
pub fn svd_precoding(h_bar: &ChannelTensor, transmit_power: f64) -> Result<Precoding> {
    let n = h_bar.n_subcarriers();
    if n == 0 {
        return Err(SimError::Dimension("empty channel tensor".into()));
    }
    let streams = h_bar.m_rx().min(h_bar.m_tx());
    let mut p = Precoding {
        combiners: Vec::with_capacity(n),
        precoders: Vec::with_capacity(n),
        singular_values: Vec::with_capacity(n),
        streams,
        power_per_stream: transmit_power / streams as f64,
    };
    for k in 0..n {
        let svd = compact_svd(h_bar.view(k)).ok_or(SimError::SvdNoConvergence { subcarrier: k })?;
        p.combiners.push(svd.u);
        p.precoders.push(svd.v);
        p.singular_values.push(svd.sigma);
    }
    Ok(p)
}

fn gain_matrix(
    q: &DMatrix<Complex64>,
    h: DMatrixView<'_, Complex64>,
    f: &DMatrix<Complex64>,
    power_per_stream: f64,
) -> DMatrix<Complex64> {
    // P^(1/2) is a multiple of the identity under equal loading
    (q.adjoint() * h * f) * Complex64::new(power_per_stream.sqrt(), 0.0)
}

/// `G[n] = Q[n]^H H[n] P^(1/2) F[n]` with precoding from the estimate and `H` the true channel.
pub fn channel_gain(precoding: &Precoding, h_true: &ChannelTensor) -> Result<Vec<DMatrix<Complex64>>> {
    let n = precoding.combiners.len();
    if h_true.n_subcarriers() != n {
        return Err(SimError::Dimension(format!(
            "precoding covers {n} subcarriers, channel has {}",
            h_true.n_subcarriers()
        )));
    }
    if n > 0 && (precoding.combiners[0].nrows() != h_true.m_rx() || precoding.precoders[0].nrows() != h_true.m_tx()) {
        return Err(SimError::Dimension("precoder/combiner size does not match the channel".into()));
    }
    Ok((0..n)
        .map(|k| {
            gain_matrix(
                &precoding.combiners[k],
                h_true.view(k),
                &precoding.precoders[k],
                precoding.power_per_stream,
            )
        })
        .collect())
}

fn subcarrier_rate(g: &DMatrix<Complex64>, combiner: &DMatrix<Complex64>, noise_var: f64, mode: SinrMode) -> f64 {
    let l = g.nrows().min(g.ncols());
    match mode {
        SinrMode::Aggregate => {
            let mut signal = 0.0;
            let mut interference = 0.0;
            for j in 0..g.ncols() {
                for i in 0..g.nrows() {
                    let p = g[(i, j)].norm_sqr();
                    if i == j {
                        signal += p;
                    } else {
                        interference += p;
                    }
                }
            }
            let q_energy: f64 = combiner.iter().map(|z| z.norm_sqr()).sum();
            (signal / (interference + noise_var * q_energy)).ln_1p() / std::f64::consts::LN_2
        }
        SinrMode::PerStream => (0..l)
            .map(|mu| {
                let signal = g[(mu, mu)].norm_sqr();
                let interference: f64 = (0..g.ncols()).filter(|&nu| nu != mu).map(|nu| g[(mu, nu)].norm_sqr()).sum();
                let q_energy: f64 = combiner.column(mu).iter().map(|z| z.norm_sqr()).sum();
                (signal / (interference + noise_var * q_energy)).ln_1p() / std::f64::consts::LN_2
            })
            .sum(),
    }
}

/// Subcarrier-averaged `log2(1 + SINR[n])`, bits/s/Hz.
pub fn spectral_efficiency(gains: &[DMatrix<Complex64>], noise_var: f64, precoding: &Precoding) -> f64 {
    spectral_efficiency_with(gains, noise_var, precoding, SinrMode::Aggregate)
}

pub fn spectral_efficiency_with(
    gains: &[DMatrix<Complex64>],
    noise_var: f64,
    precoding: &Precoding,
    mode: SinrMode,
) -> f64 {
    if gains.is_empty() {
        return 0.0;
    }
    let total: f64 = gains
        .iter()
        .zip(&precoding.combiners)
        .map(|(g, q)| subcarrier_rate(g, q, noise_var, mode))
        .sum();
    total / gains.len() as f64
}

/// Precodes on `h_bar` and scores against `h_true` without keeping the per-subcarrier matrices.
pub fn evaluate_se(
    h_bar: &ChannelTensor,
    h_true: &ChannelTensor,
    noise_var: f64,
    transmit_power: f64,
    mode: SinrMode,
) -> Result<f64> {
    if !h_bar.same_shape(h_true) {
        return Err(SimError::Dimension("estimate and channel differ in shape".into()));
    }
    let n = h_bar.n_subcarriers();
    if n == 0 {
        return Err(SimError::Dimension("empty channel tensor".into()));
    }
    let power = transmit_power / h_bar.m_rx().min(h_bar.m_tx()) as f64;
    let mut total = 0.0;
    for k in 0..n {
        let svd = compact_svd(h_bar.view(k)).ok_or(SimError::SvdNoConvergence { subcarrier: k })?;
        let g = gain_matrix(&svd.u, h_true.view(k), &svd.v, power);
        total += subcarrier_rate(&g, &svd.u, noise_var, mode);
    }
    Ok(total / n as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{complex_gaussian, Band};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    fn random_matrix(seed: u64, r: usize, t: usize) -> DMatrix<Complex64> {
        let mut g = ChaCha8Rng::seed_from_u64(seed);
        DMatrix::from_fn(r, t, |_, _| complex_gaussian(&mut g, 1.0))
    }

    fn identity_error(m: &DMatrix<Complex64>) -> f64 {
        let k = m.ncols();
        (m.adjoint() * m - DMatrix::<Complex64>::identity(k, k)).map(|z| z.norm()).max()
    }

    #[test]
    fn identity_channel() {
        let h = ChannelTensor::replicate(Band::MmWave, &DMatrix::identity(3, 3), 2);
        let p = svd_precoding(&h, 1.0).unwrap();
        for k in 0..2 {
            assert!(p.singular_values[k].iter().all(|s| (s - 1.0).abs() < 1e-12));
            let d = p.combiners[k].adjoint() * h.matrix(k) * &p.precoders[k];
            assert!((d - DMatrix::<Complex64>::identity(3, 3)).map(|z| z.norm()).max() < 1e-12);
        }
    }

    #[test]
    fn scaling_keeps_singular_vectors() {
        let m = random_matrix(4, 4, 4);
        let a = compact_svd(m.as_view()).unwrap();
        let b = compact_svd((&m * c(3.5)).as_view()).unwrap();
        assert!((&a.u - &b.u).map(|z| z.norm()).max() < 1e-10);
        assert!((&a.v - &b.v).map(|z| z.norm()).max() < 1e-10);
        for (x, y) in a.sigma.iter().zip(&b.sigma) {
            assert!((3.5 * x - y).abs() < 1e-10);
        }
    }

    #[test]
    fn reconstruction_and_conventions() {
        for (seed, (r, t)) in [(1u64, (4, 4)), (2, (3, 5)), (3, (5, 2))] {
            let m = random_matrix(seed, r, t);
            let s = compact_svd(m.as_view()).unwrap();
            let sig = DMatrix::from_diagonal(&nalgebra::DVector::from_iterator(s.sigma.len(), s.sigma.iter().map(|&x| c(x))));
            let rec = &s.u * sig * s.v.adjoint();
            assert!((rec - &m).norm() / m.norm() <= 1e-10);
            assert!(s.sigma.windows(2).all(|w| w[0] >= w[1]));
            assert!(identity_error(&s.u) < 1e-10 && identity_error(&s.v) < 1e-10);
            for col in s.v.column_iter() {
                let (i, _) = col.iter().enumerate().fold((0, -1.0), |b, (i, z)| if z.norm() > b.1 { (i, z.norm()) } else { b });
                assert!(col[i].im.abs() < 1e-14 && col[i].re > 0.0);
            }
        }
    }

    #[test]
    fn perfect_csi_gain_is_diagonal() {
        let mut g = ChaCha8Rng::seed_from_u64(7);
        let h = ChannelTensor::from_fn(Band::MmWave, 3, 4, 4, |_, _, _| complex_gaussian(&mut g, 1.0));
        let p = svd_precoding(&h, 2.0).unwrap();
        let gains = channel_gain(&p, &h).unwrap();
        for (k, gm) in gains.iter().enumerate() {
            for i in 0..4 {
                for j in 0..4 {
                    let expect = if i == j { p.singular_values[k][i] * 0.5f64.sqrt() } else { 0.0 };
                    assert!((gm[(i, j)] - c(expect)).norm() < 1e-10);
                }
            }
        }
        let zero = ChannelTensor::zeros(Band::MmWave, 3, 4, 4);
        assert!(channel_gain(&p, &zero).unwrap().iter().all(|g| g.iter().all(|z| z.norm() == 0.0)));
    }

    #[test]
    fn mismatched_gain_matches_direct_product() {
        let est = ChannelTensor::replicate(Band::MmWave, &random_matrix(10, 2, 2), 1);
        let truth = ChannelTensor::replicate(Band::MmWave, &random_matrix(11, 2, 2), 1);
        let p = svd_precoding(&est, 1.0).unwrap();
        let g = &channel_gain(&p, &truth).unwrap()[0];
        let (q, f, h) = (&p.combiners[0], &p.precoders[0], truth.matrix(0));
        let s = 0.5f64.sqrt();
        for mu in 0..2 {
            for nu in 0..2 {
                let mut acc = Complex64::new(0.0, 0.0);
                for r in 0..2 {
                    for t in 0..2 {
                        acc += q[(r, mu)].conj() * h[(r, t)] * f[(t, nu)];
                    }
                }
                assert!((g[(mu, nu)] - acc * s).norm() < 1e-12);
            }
        }
        assert!(g[(0, 1)].norm() > 1e-6, "estimate differs from truth so G has off-diagonal energy");
    }

    #[test]
    fn unity_sinr_gives_one_bit() {
        let noise = 0.2;
        let p = svd_precoding(&ChannelTensor::replicate(Band::MmWave, &DMatrix::identity(2, 2), 4), 1.0).unwrap();
        let diag = (noise * 2.0 / 2.0f64).sqrt();
        let gains = vec![DMatrix::from_diagonal_element(2, 2, c(diag)); 4];
        assert!((spectral_efficiency(&gains, noise, &p) - 1.0).abs() < 1e-12);
        let zeros = vec![DMatrix::zeros(2, 2); 4];
        assert_eq!(spectral_efficiency(&zeros, noise, &p), 0.0);
    }

    #[test]
    fn scalar_link_matches_shannon() {
        let h = Complex64::new(0.7, -0.4);
        let t = ChannelTensor::replicate(Band::MmWave, &DMatrix::from_element(1, 1, h), 5);
        let (p_t, sigma2) = (1.5, 0.3);
        let p = svd_precoding(&t, p_t).unwrap();
        let se = spectral_efficiency(&channel_gain(&p, &t).unwrap(), sigma2, &p);
        let expect = (1.0 + p_t * h.norm_sqr() / sigma2).log2();
        assert!((se - expect).abs() < 1e-12);
        let direct = evaluate_se(&t, &t, sigma2, p_t, SinrMode::Aggregate).unwrap();
        assert!((direct - expect).abs() < 1e-12);
    }

    #[test]
    fn fused_evaluation_matches_three_step_path() {
        let mut g = ChaCha8Rng::seed_from_u64(21);
        let est = ChannelTensor::from_fn(Band::MmWave, 6, 4, 4, |_, _, _| complex_gaussian(&mut g, 1.0));
        let truth = ChannelTensor::from_fn(Band::MmWave, 6, 4, 4, |_, _, _| complex_gaussian(&mut g, 1.0));
        for mode in [SinrMode::Aggregate, SinrMode::PerStream] {
            let p = svd_precoding(&est, 1.0).unwrap();
            let a = spectral_efficiency_with(&channel_gain(&p, &truth).unwrap(), 0.4, &p, mode);
            let b = evaluate_se(&est, &truth, 0.4, 1.0, mode).unwrap();
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn per_stream_differs_from_aggregate_with_multiple_streams() {
        let m = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![c(2.0), c(0.5)]));
        let t = ChannelTensor::replicate(Band::MmWave, &m, 1);
        let agg = evaluate_se(&t, &t, 0.1, 1.0, SinrMode::Aggregate).unwrap();
        let per = evaluate_se(&t, &t, 0.1, 1.0, SinrMode::PerStream).unwrap();
        // aggregate: (4 + 0.25) / 2 / (0.1 * 2); per-stream: 2/0.1 and 0.125/0.1
        assert!((agg - (1.0f64 + 4.25 / 2.0 / 0.2).log2()).abs() < 1e-12);
        assert!((per - ((1.0f64 + 20.0).log2() + (1.0f64 + 1.25).log2())).abs() < 1e-12);
    }
}
