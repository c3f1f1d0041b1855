//! Uplink SINR engines.
//!
//! Exact SINR under the optimal linear (MMSE) receiver, the maximum-ratio
//! baseline, and two deterministic approximations driven by large-scale
//! statistics only:
//!
//! ```text
//! SINR_k = q_k/(1 - q_k),  q_k = rho_u eta_k g_hat_k^H Omega^{-1} g_hat_k,
//! Omega  = rho_u sum_k' eta_k' g_hat_k' g_hat_k'^H + D,
//! D      = diag_m( rho_u sum_k' eta_k'(beta_mk' - gamma_mk') + 1 ).
//! ```
//!
//! `Omega` is never formed densely. `q_k` is computed through the rank-K
//! Woodbury identity: with `Y = D^{-1} G_hat` and the Gram matrix
//! `G = G_hat^H Y`, all K quadratic forms fall out of one K x K Cholesky
//! solve, at cost O(MK^2 + K^3) instead of O(M^3).
//!
//! The two approximations replace `q_k` by fixed points over K scalars with
//! all matrices diagonal, so one iteration touches O(MK) numbers. The first
//! shares one fixed point across devices; the second re-solves it per device
//! with that device's term excluded.

use ndarray::{Array1, Array2, ArrayView1};
use num_complex::Complex64;

use crate::channel::{draw_channel, receive_pilots, PilotSet};
use crate::error::{Error, Result};
use crate::estimator::LmmseEstimator;
use crate::linalg::{cdot, Cholesky};
use crate::netgen::{NetworkConfig, NetworkRealization};
use crate::rng::{self, derive_seed};

/// Uplink power coefficients, one per device, each within the unit budget.
#[derive(Debug, Clone, PartialEq)]
pub struct UlPowerVector(Array1<f64>);

impl UlPowerVector {
    pub fn new(eta: Array1<f64>) -> Result<Self> {
        for (k, &e) in eta.iter().enumerate() {
            if !(0.0..=1.0).contains(&e) || !e.is_finite() {
                return Err(Error::Domain(format!(
                    "eta[{k}] = {e} outside [0, 1]"
                )));
            }
        }
        Ok(Self(eta))
    }

    /// Every device at full power.
    pub fn full(k: usize) -> Self {
        Self(Array1::ones(k))
    }

    pub fn zeros(k: usize) -> Self {
        Self(Array1::zeros(k))
    }

    pub fn k(&self) -> usize {
        self.0.len()
    }

    pub fn eta(&self) -> ArrayView1<'_, f64> {
        self.0.view()
    }

    pub fn sum(&self) -> f64 {
        self.0.sum()
    }
}

/// Diagonal of the estimation-error plus noise covariance `D`.
#[derive(Debug, Clone)]
pub struct DMatrix(Array1<f64>);

impl DMatrix {
    pub fn from_statistics(
        beta: &Array2<f64>,
        gamma: &Array2<f64>,
        eta: &UlPowerVector,
        rho_u: f64,
    ) -> Result<Self> {
        let (m, k) = check_stats(beta, gamma, eta.k(), "DMatrix::from_statistics")?;
        let mut d = Array1::ones(m);
        for mm in 0..m {
            for kk in 0..k {
                let ev = beta[[mm, kk]] - gamma[[mm, kk]];
                if ev < 0.0 {
                    return Err(Error::Domain(format!(
                        "beta < gamma at ({mm}, {kk}): error variance {ev}"
                    )));
                }
                d[mm] += rho_u * eta.eta()[kk] * ev;
            }
        }
        Ok(Self(d))
    }

    pub fn d(&self) -> ArrayView1<'_, f64> {
        self.0.view()
    }

    pub fn m(&self) -> usize {
        self.0.len()
    }
}

/// Converged fixed-point state of a deterministic approximation.
#[derive(Debug, Clone)]
pub struct RmState {
    /// Per-device fixed-point values.
    pub e: Array1<f64>,
    /// Diagonal of the resolvent `T` built from the final `e`.
    pub t_diag: Array1<f64>,
    pub iterations: usize,
    /// Final max-abs change in `e`.
    pub residual: f64,
}

/// Per-device rates and throughputs from a Monte-Carlo run.
#[derive(Debug, Clone)]
pub struct RateReport {
    /// bits/s/Hz per device.
    pub rate: Array1<f64>,
    /// bits/s per device (rate times the pilot-overhead bandwidth factor).
    pub throughput: Array1<f64>,
}

fn check_stats(
    beta: &Array2<f64>,
    gamma: &Array2<f64>,
    k_eta: usize,
    context: &'static str,
) -> Result<(usize, usize)> {
    let (m, k) = beta.dim();
    if gamma.dim() != (m, k) || k_eta != k {
        return Err(Error::Dimension {
            context,
            detail: format!(
                "beta {:?}, gamma {:?}, eta len {k_eta}",
                beta.dim(),
                gamma.dim()
            ),
        });
    }
    Ok((m, k))
}

/// Quadratic forms `g_hat_k^H Omega(w)^{-1} g_hat_k` for every k, where
/// `Omega(w) = sum_k w_k (g_hat_k g_hat_k^H + B_k - Gamma_k) + I`.
///
/// Shared by the exact SINR, the receiver solve, and the power-control
/// d-updates, which all weight the same rank-one system differently.
pub(crate) fn omega_quadforms(
    g_hat: &Array2<Complex64>,
    beta: &Array2<f64>,
    gamma: &Array2<f64>,
    w: ArrayView1<'_, f64>,
) -> Result<Array1<f64>> {
    let (m, k) = check_stats(beta, gamma, w.len(), "omega_quadforms")?;
    if g_hat.dim() != (m, k) {
        return Err(Error::Dimension {
            context: "omega_quadforms",
            detail: format!("g_hat {:?}, beta {:?}", g_hat.dim(), beta.dim()),
        });
    }
    for (kk, &wk) in w.iter().enumerate() {
        if wk < 0.0 || !wk.is_finite() {
            return Err(Error::Domain(format!("weight w[{kk}] = {wk} invalid")));
        }
    }
    // diagonal part of Omega
    let mut d = Array1::<f64>::ones(m);
    for mm in 0..m {
        for kk in 0..k {
            d[mm] += w[kk] * (beta[[mm, kk]] - gamma[[mm, kk]]);
        }
    }
    // G[i][j] = g_hat_i^H D^{-1} g_hat_j
    let mut g = Array2::<Complex64>::zeros((k, k));
    for i in 0..k {
        for j in i..k {
            let mut acc = Complex64::ZERO;
            for mm in 0..m {
                acc += g_hat[[mm, i]].conj() * g_hat[[mm, j]] / d[mm];
            }
            g[[i, j]] = acc;
            g[[j, i]] = acc.conj();
        }
    }
    let support: Vec<usize> = (0..k).filter(|&kk| w[kk] > 0.0).collect();
    let mut q = Array1::<f64>::zeros(k);
    if support.is_empty() {
        for kk in 0..k {
            q[kk] = g[[kk, kk]].re;
        }
        return Ok(q);
    }
    let s = support.len();
    let mut ws = Array2::<Complex64>::zeros((s, s));
    for (a, &i) in support.iter().enumerate() {
        for (b, &j) in support.iter().enumerate() {
            ws[[a, b]] = g[[i, j]];
        }
        ws[[a, a]] += 1.0 / w[i];
    }
    let chol = Cholesky::factor(ws.view())?;
    // columns r_k = G[support, k]
    let mut r = Array2::<Complex64>::zeros((s, k));
    for (a, &i) in support.iter().enumerate() {
        for kk in 0..k {
            r[[a, kk]] = g[[i, kk]];
        }
    }
    let x = chol.solve_matrix(r.view());
    for kk in 0..k {
        let corr = cdot(r.column(kk), x.column(kk));
        debug_assert!(corr.im.abs() <= 1e-8 * corr.re.abs().max(1e-300));
        q[kk] = g[[kk, kk]].re - corr.re;
    }
    Ok(q)
}

/// Optimal linear receiver for device `k`.
pub fn mmse_receiver(
    g_hat: &Array2<Complex64>,
    eta: &UlPowerVector,
    d: &DMatrix,
    rho_u: f64,
    k: usize,
) -> Result<Array1<Complex64>> {
    let (m, n_dev) = g_hat.dim();
    if eta.k() != n_dev || d.m() != m {
        return Err(Error::Dimension {
            context: "mmse_receiver",
            detail: format!(
                "g_hat {:?}, eta len {}, d len {}",
                g_hat.dim(),
                eta.k(),
                d.m()
            ),
        });
    }
    if k >= n_dev {
        return Err(Error::Domain(format!("device index {k} out of range")));
    }
    let scale = (rho_u * eta.eta()[k]).sqrt();
    if scale == 0.0 {
        return Ok(Array1::zeros(m));
    }
    // Omega^{-1} g_k by the same rank-K identity as the quadratic forms
    let w: Vec<f64> = eta.eta().iter().map(|&e| rho_u * e).collect();
    let dv = d.d();
    let support: Vec<usize> = (0..n_dev).filter(|&kk| w[kk] > 0.0).collect();
    let y_k = Array1::from_shape_fn(m, |mm| g_hat[[mm, k]] / dv[mm]);
    let s = support.len();
    let mut g = Array2::<Complex64>::zeros((s, s));
    for (a, &i) in support.iter().enumerate() {
        for (b, &j) in support.iter().enumerate() {
            if b < a {
                continue;
            }
            let mut acc = Complex64::ZERO;
            for mm in 0..m {
                acc += g_hat[[mm, i]].conj() * g_hat[[mm, j]] / dv[mm];
            }
            g[[a, b]] = acc;
            g[[b, a]] = acc.conj();
        }
        g[[a, a]] += 1.0 / w[i];
    }
    let mut r = Array1::<Complex64>::zeros(s);
    for (a, &i) in support.iter().enumerate() {
        r[a] = cdot(g_hat.column(i), y_k.view());
    }
    let chol = Cholesky::factor(g.view())?;
    let coeff = chol.solve(r.view());
    let mut v = y_k;
    for (a, &i) in support.iter().enumerate() {
        for mm in 0..m {
            v[mm] -= g_hat[[mm, i]] * coeff[a] / dv[mm];
        }
    }
    v.mapv_inplace(|z| z * scale);
    Ok(v)
}

/// SINR of device `k` under an arbitrary receiver `v`.
pub fn receiver_sinr(
    v: ArrayView1<'_, Complex64>,
    g_hat: &Array2<Complex64>,
    d: &DMatrix,
    eta: &UlPowerVector,
    rho_u: f64,
    k: usize,
) -> f64 {
    let signal = rho_u * eta.eta()[k] * cdot(v, g_hat.column(k)).norm_sqr();
    let mut interference = 0.0;
    for kk in 0..eta.k() {
        if kk == k {
            continue;
        }
        interference += rho_u * eta.eta()[kk] * cdot(v, g_hat.column(kk)).norm_sqr();
    }
    let noise: f64 = v
        .iter()
        .zip(d.d().iter())
        .map(|(z, &dm)| z.norm_sqr() * dm)
        .sum();
    signal / (interference + noise)
}

/// Exact per-device SINR under the MMSE receiver.
pub fn exact_sinr_mmse(
    g_hat: &Array2<Complex64>,
    gamma: &Array2<f64>,
    beta: &Array2<f64>,
    eta: &UlPowerVector,
    rho_u: f64,
) -> Result<Array1<f64>> {
    let w = Array1::from_iter(eta.eta().iter().map(|&e| rho_u * e));
    let qf = omega_quadforms(g_hat, beta, gamma, w.view())?;
    let mut sinr = Array1::<f64>::zeros(eta.k());
    for kk in 0..eta.k() {
        let q = w[kk] * qf[kk];
        if q >= 1.0 {
            return Err(Error::Conditioning {
                context: "exact_sinr_mmse",
                detail: format!("quadratic form q[{kk}] = {q} >= 1"),
            });
        }
        sinr[kk] = q / (1.0 - q);
    }
    Ok(sinr)
}

/// Per-device SINR when each device is decoded with its own channel estimate
/// as the combiner (maximum-ratio baseline).
pub fn mr_sinr(
    g_hat: &Array2<Complex64>,
    gamma: &Array2<f64>,
    beta: &Array2<f64>,
    eta: &UlPowerVector,
    rho_u: f64,
) -> Result<Array1<f64>> {
    let (_, k) = check_stats(beta, gamma, eta.k(), "mr_sinr")?;
    let d = DMatrix::from_statistics(beta, gamma, eta, rho_u)?;
    let mut sinr = Array1::<f64>::zeros(k);
    for kk in 0..k {
        sinr[kk] = receiver_sinr(g_hat.column(kk), g_hat, &d, eta, rho_u, kk);
    }
    Ok(sinr)
}

/// Fixed point of `e_k = (pw_k/M) tr(Gamma_k T(e))` where
/// `T(e) = diag_m( M / (sum_j pw_j gamma_mj/(1+e_j) + d_m) )` and
/// `d_m = sum_j pw_j (beta_mj - gamma_mj) + 1`.
///
/// `exclude` removes one device from the resolvent sum (its `e` entry is
/// still tracked; it just does not feed back).
pub(crate) fn rm_fixed_point(
    gamma: &Array2<f64>,
    beta: &Array2<f64>,
    pw: ArrayView1<'_, f64>,
    exclude: Option<usize>,
    tol: f64,
    max_iter: usize,
) -> Result<RmState> {
    let (m, k) = check_stats(beta, gamma, pw.len(), "rm_fixed_point")?;
    if tol <= 0.0 {
        return Err(Error::Domain(format!("tolerance {tol} must be positive")));
    }
    let m_f = m as f64;
    let mut d = Array1::<f64>::ones(m);
    for mm in 0..m {
        for kk in 0..k {
            d[mm] += pw[kk] * (beta[[mm, kk]] - gamma[[mm, kk]]);
        }
    }
    let mut e = Array1::<f64>::from_elem(k, m_f);
    let mut t = Array1::<f64>::zeros(m);
    let mut residual = f64::INFINITY;
    for it in 1..=max_iter {
        // weights pw_j / (1 + e_j), excluded device dropped
        let mut wj = Array1::<f64>::zeros(k);
        for j in 0..k {
            if Some(j) == exclude {
                continue;
            }
            wj[j] = pw[j] / (1.0 + e[j]);
        }
        let denom = gamma.dot(&wj); // M-vector sum_j wj_j gamma_mj
        for mm in 0..m {
            t[mm] = m_f / (denom[mm] + d[mm]);
        }
        let traces = gamma.t().dot(&t); // K-vector tr(Gamma_k T)
        let mut new_residual = 0.0f64;
        for kk in 0..k {
            let next = pw[kk] / m_f * traces[kk];
            new_residual = new_residual.max((next - e[kk]).abs());
            e[kk] = next;
        }
        residual = new_residual;
        if residual <= tol {
            return Ok(RmState {
                e,
                t_diag: t,
                iterations: it,
                residual,
            });
        }
    }
    Err(Error::NoConvergence {
        iterations: max_iter,
        residual,
        tol,
    })
}

/// Deterministic SINR approximation with one resolvent shared by all
/// devices. At the fixed point the SINR of device k equals `e_k`.
pub fn rm_ap1(
    gamma: &Array2<f64>,
    beta: &Array2<f64>,
    eta: &UlPowerVector,
    rho_u: f64,
    tol: f64,
    max_iter: usize,
) -> Result<(Array1<f64>, RmState)> {
    let pw = Array1::from_iter(eta.eta().iter().map(|&e| rho_u * e));
    let state = rm_fixed_point(gamma, beta, pw.view(), None, tol, max_iter)?;
    let m_f = beta.nrows() as f64;
    let traces = gamma.t().dot(&state.t_diag);
    let sinr = Array1::from_shape_fn(eta.k(), |kk| pw[kk] / m_f * traces[kk]);
    Ok((sinr, state))
}

/// Deterministic SINR approximation with a per-device resolvent that
/// excludes the device's own term.
pub fn rm_ap2(
    gamma: &Array2<f64>,
    beta: &Array2<f64>,
    eta: &UlPowerVector,
    rho_u: f64,
    tol: f64,
    max_iter: usize,
) -> Result<(Array1<f64>, Vec<RmState>)> {
    let k = eta.k();
    let pw = Array1::from_iter(eta.eta().iter().map(|&e| rho_u * e));
    let m_f = beta.nrows() as f64;
    let mut sinr = Array1::<f64>::zeros(k);
    let mut states = Vec::with_capacity(k);
    for kk in 0..k {
        let state = rm_fixed_point(gamma, beta, pw.view(), Some(kk), tol, max_iter)?;
        let trace = gamma.column(kk).dot(&state.t_diag);
        sinr[kk] = pw[kk] / m_f * trace;
        states.push(state);
    }
    Ok((sinr, states))
}

/// Monte-Carlo per-device achievable rate under the exact MMSE-receiver
/// SINR, averaged over fresh small-scale fading and pilot noise.
pub fn achievable_rate_mc(
    config: &NetworkConfig,
    realization: &NetworkRealization,
    pilots: &PilotSet,
    eta: &UlPowerVector,
    n_draws: usize,
    seed: u64,
) -> Result<RateReport> {
    if n_draws == 0 {
        return Err(Error::Domain("n_draws must be at least 1".into()));
    }
    let snr = config.derived_snr();
    let estimator = LmmseEstimator::new(pilots, &realization.beta, snr.rho_p)?;
    let gamma = estimator.gamma().clone();
    let mut rate = Array1::<f64>::zeros(eta.k());
    for draw in 0..n_draws {
        let ch_seed = derive_seed(seed, rng::stream::CHANNEL, draw as u64);
        let noise_seed = derive_seed(seed, rng::stream::NOISE, draw as u64);
        let draw_ch = draw_channel(&realization.beta, ch_seed)?;
        let received = receive_pilots(pilots, &draw_ch.g, snr.rho_p, noise_seed)?;
        let g_hat = estimator.estimate_g(&received)?;
        let sinr = exact_sinr_mmse(&g_hat, &gamma, &realization.beta, eta, snr.rho_u)?;
        rate.zip_mut_with(&sinr, |r, &s| *r += (1.0 + s).log2());
    }
    rate.mapv_inplace(|r| r / n_draws as f64);
    let factor = config.throughput_factor();
    let throughput = rate.mapv(|r| factor * r);
    Ok(RateReport { rate, throughput })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::generate_pilots;
    use crate::rng::{complex_normal, seed_rng, standard_normal, Rng};
    use approx::assert_relative_eq;
    use ndarray::array;
    use proptest::prelude::*;

    /// Random positive statistics with gamma strictly below beta.
    fn random_instance(m: usize, k: usize, rng: &mut Rng) -> (Array2<Complex64>, Array2<f64>, Array2<f64>) {
        let beta = Array2::from_shape_fn((m, k), |_| 10f64.powf(standard_normal(rng) * 0.5));
        let gamma = Array2::from_shape_fn((m, k), |idx| {
            beta[idx] * (0.3 + 0.6 * (0.5 + 0.5 * standard_normal(rng).tanh()))
        });
        let g_hat = Array2::from_shape_fn((m, k), |idx| {
            complex_normal(rng) * gamma[idx].sqrt()
        });
        (g_hat, gamma, beta)
    }

    fn dense_omega_quadforms(
        g_hat: &Array2<Complex64>,
        beta: &Array2<f64>,
        gamma: &Array2<f64>,
        w: ArrayView1<'_, f64>,
    ) -> Array1<f64> {
        let (m, k) = beta.dim();
        let mut omega = Array2::<Complex64>::zeros((m, m));
        for kk in 0..k {
            let col = g_hat.column(kk);
            for r in 0..m {
                for c in 0..m {
                    omega[[r, c]] += col[r] * col[c].conj() * w[kk];
                }
            }
        }
        for mm in 0..m {
            let mut dm = 1.0;
            for kk in 0..k {
                dm += w[kk] * (beta[[mm, kk]] - gamma[[mm, kk]]);
            }
            omega[[mm, mm]] += Complex64::from(dm);
        }
        let chol = Cholesky::factor(omega.view()).unwrap();
        Array1::from_shape_fn(k, |kk| {
            let x = chol.solve(g_hat.column(kk));
            cdot(g_hat.column(kk), x.view()).re
        })
    }

    #[test]
    fn quadforms_match_dense_solve() {
        let mut rng = seed_rng(11);
        let (g_hat, gamma, beta) = random_instance(8, 3, &mut rng);
        let w = array![2.0, 0.0, 0.5];
        let fast = omega_quadforms(&g_hat, &beta, &gamma, w.view()).unwrap();
        let dense = dense_omega_quadforms(&g_hat, &beta, &gamma, w.view());
        for kk in 0..3 {
            assert_relative_eq!(fast[kk], dense[kk], max_relative = 1e-10);
        }
    }

    #[test]
    fn exact_sinr_scalar_case() {
        // M=1, K=1: SINR = rho eta |g|^2 / (rho eta (beta - gamma) + 1)
        let g = Complex64::new(0.6, -0.3);
        let g_hat = array![[g]];
        let beta = array![[2.0]];
        let gamma = array![[1.5]];
        let eta = UlPowerVector::new(array![0.7]).unwrap();
        let rho = 3.0;
        let sinr = exact_sinr_mmse(&g_hat, &gamma, &beta, &eta, rho).unwrap();
        let expect = rho * 0.7 * g.norm_sqr() / (rho * 0.7 * 0.5 + 1.0);
        assert_relative_eq!(sinr[0], expect, max_relative = 1e-12);
        let mr = mr_sinr(&g_hat, &gamma, &beta, &eta, rho).unwrap();
        assert_relative_eq!(mr[0], expect, max_relative = 1e-12);
    }

    #[test]
    fn zero_power_gives_zero_sinr() {
        let mut rng = seed_rng(3);
        let (g_hat, gamma, beta) = random_instance(4, 2, &mut rng);
        let eta = UlPowerVector::zeros(2);
        let sinr = exact_sinr_mmse(&g_hat, &gamma, &beta, &eta, 10.0).unwrap();
        assert!(sinr.iter().all(|&s| s == 0.0));
        let mr = mr_sinr(&g_hat, &gamma, &beta, &eta, 10.0).unwrap();
        assert!(mr.iter().all(|&s| s == 0.0));
    }

    #[test]
    fn quotient_form_matches_ratio_form() {
        let mut rng = seed_rng(21);
        let (g_hat, gamma, beta) = random_instance(8, 2, &mut rng);
        let eta = UlPowerVector::new(array![0.9, 0.4]).unwrap();
        let rho = 5.0;
        let sinr = exact_sinr_mmse(&g_hat, &gamma, &beta, &eta, rho).unwrap();
        let d = DMatrix::from_statistics(&beta, &gamma, &eta, rho).unwrap();
        for kk in 0..2 {
            let v = mmse_receiver(&g_hat, &eta, &d, rho, kk).unwrap();
            let quotient = receiver_sinr(v.view(), &g_hat, &d, &eta, rho, kk);
            assert_relative_eq!(sinr[kk], quotient, max_relative = 1e-8);
        }
    }

    #[test]
    fn mmse_receiver_scalar_and_zero_cases() {
        let g = Complex64::new(0.3, 0.4);
        let g_hat = array![[g]];
        let beta = array![[1.0]];
        let gamma = array![[0.8]];
        let eta = UlPowerVector::new(array![0.5]).unwrap();
        let rho = 2.0;
        let d = DMatrix::from_statistics(&beta, &gamma, &eta, rho).unwrap();
        let v = mmse_receiver(&g_hat, &eta, &d, rho, 0).unwrap();
        let dm = rho * 0.5 * 0.2 + 1.0;
        let expect = g * ((rho * 0.5f64).sqrt() / (rho * 0.5 * g.norm_sqr() + dm));
        assert_relative_eq!(v[0].re, expect.re, max_relative = 1e-12);
        assert_relative_eq!(v[0].im, expect.im, max_relative = 1e-12);

        let eta0 = UlPowerVector::zeros(1);
        let d0 = DMatrix::from_statistics(&beta, &gamma, &eta0, rho).unwrap();
        let v0 = mmse_receiver(&g_hat, &eta0, &d0, rho, 0).unwrap();
        assert!(v0.iter().all(|z| z.norm() == 0.0));
    }

    #[test]
    fn mmse_dominates_mr() {
        let mut rng = seed_rng(40);
        for _ in 0..20 {
            let (g_hat, gamma, beta) = random_instance(6, 3, &mut rng);
            let eta = UlPowerVector::full(3);
            let exact = exact_sinr_mmse(&g_hat, &gamma, &beta, &eta, 8.0).unwrap();
            let mr = mr_sinr(&g_hat, &gamma, &beta, &eta, 8.0).unwrap();
            for kk in 0..3 {
                assert!(
                    exact[kk] >= mr[kk] * (1.0 - 1e-12),
                    "MR beat MMSE: {} vs {}",
                    mr[kk],
                    exact[kk]
                );
            }
            // strict in generic multi-antenna instances
            assert!(exact.iter().zip(mr.iter()).any(|(e, m)| e > m));
        }
    }

    #[test]
    fn sinr_monotone_in_own_power() {
        let mut rng = seed_rng(55);
        for _ in 0..100 {
            let (g_hat, gamma, beta) = random_instance(6, 3, &mut rng);
            let base = 0.2 + 0.5 * (0.5 + 0.5 * standard_normal(&mut rng).tanh());
            let eta_lo = UlPowerVector::new(array![base * 0.5, 0.6, 0.8]).unwrap();
            let eta_hi = UlPowerVector::new(array![base, 0.6, 0.8]).unwrap();
            let lo = exact_sinr_mmse(&g_hat, &gamma, &beta, &eta_lo, 4.0).unwrap();
            let hi = exact_sinr_mmse(&g_hat, &gamma, &beta, &eta_hi, 4.0).unwrap();
            assert!(hi[0] >= lo[0] * (1.0 - 1e-12));
        }
    }

    #[test]
    fn rm_ap1_zero_power() {
        let gamma = array![[0.5, 0.2], [0.1, 0.3]];
        let beta = array![[1.0, 0.4], [0.2, 0.6]];
        let eta = UlPowerVector::zeros(2);
        let (sinr, state) = rm_ap1(&gamma, &beta, &eta, 7.0, 1e-9, 500).unwrap();
        assert!(sinr.iter().all(|&s| s == 0.0));
        assert!(state.e.iter().all(|&e| e == 0.0));
        assert!(state.t_diag.iter().all(|&t| (t - 2.0).abs() < 1e-12));
    }

    #[test]
    fn rm_ap1_scalar_fixed_point_matches_bisection() {
        // K=1, uniform statistics: e = pw*gamma*M / (pw*gamma/(1+e) + d)
        let m = 32;
        let gamma_v = 0.4;
        let beta_v = 0.55;
        let rho = 6.0;
        let eta = UlPowerVector::new(array![0.8]).unwrap();
        let pw = rho * 0.8;
        let gamma = Array2::from_elem((m, 1), gamma_v);
        let beta = Array2::from_elem((m, 1), beta_v);
        let (sinr, state) = rm_ap1(&gamma, &beta, &eta, rho, 1e-12, 500).unwrap();
        let d = pw * (beta_v - gamma_v) + 1.0;
        let f = |e: f64| pw * gamma_v * m as f64 / (pw * gamma_v / (1.0 + e) + d) - e;
        let (mut lo, mut hi) = (0.0f64, 1e6f64);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if f(mid) > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        assert_relative_eq!(sinr[0], lo, max_relative = 1e-8);
        assert!(state.iterations < 500);
    }

    #[test]
    fn rm_ap2_k1_closed_form() {
        let m = 8;
        let mut rng = seed_rng(60);
        let gamma = Array2::from_shape_fn((m, 1), |_| 0.1 + 0.5 * standard_normal(&mut rng).abs());
        let beta = &gamma * 1.7;
        let rho = 5.0;
        let eta = UlPowerVector::new(array![0.6]).unwrap();
        let pw = rho * 0.6;
        let (sinr, states) = rm_ap2(&gamma, &beta, &eta, rho, 1e-12, 500).unwrap();
        let expect: f64 = gamma
            .column(0)
            .iter()
            .zip(beta.column(0).iter())
            .map(|(&g, &b)| pw * g / (pw * (b - g) + 1.0))
            .sum();
        assert_relative_eq!(sinr[0], expect, max_relative = 1e-10);
        assert_eq!(states.len(), 1);
    }

    #[test]
    fn ap1_ap2_uniform_scalar_equations() {
        // uniform statistics collapse both fixed points to scalar equations:
        // e (c p gamma/(1+e) + D) = p gamma M with c = K for the shared
        // resolvent and c = K-1 for the per-device one, D = pK(beta-gamma)+1
        let m = 24;
        let k = 3;
        let g = 0.3;
        let b = 0.45;
        let gamma = Array2::from_elem((m, k), g);
        let beta = Array2::from_elem((m, k), b);
        let eta = UlPowerVector::full(k);
        let rho = 4.0;
        let p = rho;
        let d = p * k as f64 * (b - g) + 1.0;
        let residual = |e: f64, c: f64| e * (c * p * g / (1.0 + e) + d) - p * g * m as f64;
        let (ap1, _) = rm_ap1(&gamma, &beta, &eta, rho, 1e-13, 2000).unwrap();
        let (ap2, _) = rm_ap2(&gamma, &beta, &eta, rho, 1e-13, 2000).unwrap();
        let scale = p * g * m as f64;
        for kk in 0..k {
            assert!(residual(ap1[kk], k as f64).abs() / scale < 1e-10);
            assert!(residual(ap2[kk], k as f64 - 1.0).abs() / scale < 1e-10);
            // the 1/M expansion AP2 = AP1/(1 - q/M), q = AP1/(1+AP1), must
            // explain most of the AP1-AP2 gap
            let q = ap1[kk] / (1.0 + ap1[kk]);
            let predicted = ap1[kk] / (1.0 - q / m as f64);
            assert!((ap2[kk] - predicted).abs() < 0.2 * (ap2[kk] - ap1[kk]).abs());
        }
    }

    #[test]
    fn ap1_ap2_gap_shrinks_with_m() {
        let rho = 4.0;
        let gap_at = |m: usize| {
            let mut rng = seed_rng(70);
            let gamma = Array2::from_shape_fn((m, 2), |_| 0.2 + 0.3 * standard_normal(&mut rng).abs());
            let beta = &gamma * 1.5;
            let eta = UlPowerVector::full(2);
            let (ap1, _) = rm_ap1(&gamma, &beta, &eta, rho, 1e-12, 2000).unwrap();
            let (ap2, _) = rm_ap2(&gamma, &beta, &eta, rho, 1e-12, 2000).unwrap();
            ((ap2[0] - ap1[0]) / ap2[0]).abs()
        };
        assert!(gap_at(256) < gap_at(16));
    }

    #[test]
    fn ap2_never_below_ap1() {
        let mut rng = seed_rng(71);
        for _ in 0..10 {
            let (_, gamma, beta) = random_instance(12, 4, &mut rng);
            let eta = UlPowerVector::full(4);
            let (ap1, _) = rm_ap1(&gamma, &beta, &eta, 6.0, 1e-11, 1000).unwrap();
            let (ap2, _) = rm_ap2(&gamma, &beta, &eta, 6.0, 1e-11, 1000).unwrap();
            for kk in 0..4 {
                assert!(ap2[kk] >= ap1[kk] * (1.0 - 1e-9));
            }
        }
    }

    #[test]
    fn rate_mc_reproducible_and_scaled() {
        let mut cfg = NetworkConfig::with_dimensions(4, 2, 2, 200.0);
        cfg.tau_c = 4; // tau = tau_c/2
        cfg.seed = 5;
        let realization = crate::netgen::generate_network(&cfg, 5).unwrap();
        let pilots = generate_pilots(2, 2, 6);
        let eta = UlPowerVector::full(2);
        let a = achievable_rate_mc(&cfg, &realization, &pilots, &eta, 3, 9).unwrap();
        let b = achievable_rate_mc(&cfg, &realization, &pilots, &eta, 3, 9).unwrap();
        assert_eq!(a.rate, b.rate);
        for kk in 0..2 {
            assert_relative_eq!(
                a.throughput[kk],
                5e6 * a.rate[kk],
                max_relative = 1e-12
            );
        }
        let zero = achievable_rate_mc(
            &cfg,
            &realization,
            &pilots,
            &UlPowerVector::zeros(2),
            2,
            9,
        )
        .unwrap();
        assert!(zero.rate.iter().all(|&r| r == 0.0));
    }

    #[test]
    fn power_vector_and_dmatrix_validation() {
        assert!(UlPowerVector::new(array![0.0, 1.0]).is_ok());
        assert!(matches!(
            UlPowerVector::new(array![1.2]),
            Err(Error::Domain(_))
        ));
        assert!(matches!(
            UlPowerVector::new(array![-0.1]),
            Err(Error::Domain(_))
        ));
        let beta = array![[1.0]];
        let gamma = array![[1.1]];
        assert!(matches!(
            DMatrix::from_statistics(&beta, &gamma, &UlPowerVector::full(1), 2.0),
            Err(Error::Domain(_))
        ));
        let gamma_ok = array![[0.9]];
        let d = DMatrix::from_statistics(&beta, &gamma_ok, &UlPowerVector::full(1), 2.0).unwrap();
        assert!(d.d()[0] >= 1.0);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn prop_mmse_dominance_and_rm_nonnegative(seed in 0u64..1000, m in 1usize..7, k in 1usize..4) {
            let m = m.max(k);
            let mut rng = seed_rng(seed);
            let (g_hat, gamma, beta) = random_instance(m, k, &mut rng);
            let eta = UlPowerVector::full(k);
            let exact = exact_sinr_mmse(&g_hat, &gamma, &beta, &eta, 5.0).unwrap();
            let mr = mr_sinr(&g_hat, &gamma, &beta, &eta, 5.0).unwrap();
            for kk in 0..k {
                prop_assert!(exact[kk] >= mr[kk] * (1.0 - 1e-10));
            }
            let (ap1, state) = rm_ap1(&gamma, &beta, &eta, 5.0, 1e-9, 500).unwrap();
            prop_assert!(state.e.iter().all(|&e| e >= 0.0));
            prop_assert!(ap1.iter().all(|&s| s >= 0.0));
        }
    }
}
