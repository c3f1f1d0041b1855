//! Per-AP LMMSE channel estimation.
//!
//! AP `m` estimates its channel to device `k` from the received pilot block:
//!
//! ```text
//! g_hat_mk = sqrt(tau rho_p) beta_mk psi_k^H Z_m^{-1} y_m,
//! Z_m      = tau rho_p Psi B_m Psi^H + I_tau,
//! a_mk     = sqrt(tau rho_p) beta_mk Z_m^{-1} psi_k,
//! gamma_mk = sqrt(tau rho_p) beta_mk psi_k^H a_mk = E|g_hat_mk|^2.
//! ```
//!
//! `Z_m` depends only on the pilots and the large-scale coefficients, so the
//! solve is factored once per coherence block ([`LmmseEstimator`]) and each
//! small-scale draw costs just one `A_m^H y_m` product per AP.
//!
//! Two algebraically identical routes are implemented: a direct tau x tau
//! Cholesky of `Z_m`, and (when `K` is much smaller than `tau`) a
//! Woodbury/Gram route that factors a K x K system instead. Both are
//! Cholesky solves of Hermitian positive-definite matrices; no explicit
//! inverses are formed.

use ndarray::{Array1, Array2, ArrayView1};
use num_complex::Complex64;

use crate::channel::{generate_pilots, receive_pilots, PilotSet, ReceivedPilots};
use crate::error::{Error, Result};
use crate::linalg::{cdot, Cholesky};
use crate::netgen::{generate_network, NetworkConfig};
use crate::rng::{self, derive_seed, seed_rng};

/// Channel estimates plus the per-block statistics they were built from.
#[derive(Debug, Clone)]
pub struct EstimationResult {
    /// M x K LMMSE estimates.
    pub g_hat: Array2<Complex64>,
    /// M x K estimate variances `gamma_mk`.
    pub gamma: Array2<f64>,
    /// M x K estimation-error variances `beta_mk - gamma_mk`.
    pub err_var: Array2<f64>,
    /// Per AP `m`: tau x K matrix whose column `k` is `a_mk`.
    pub a: Vec<Array2<Complex64>>,
}

/// Per-AP estimation operators for one coherence block (pilots + beta).
#[derive(Debug, Clone)]
pub struct LmmseEstimator {
    /// Per AP: tau x K matrix `A_m` with columns `a_mk`.
    a: Vec<Array2<Complex64>>,
    gamma: Array2<f64>,
    beta: Array2<f64>,
}

/// Computes `A_m` (columns `a_mk`) and `gamma_m` for one AP.
///
/// `gram` is the pilot Gram matrix `Psi^H Psi`, shared across APs.
fn ap_estimation(
    psi: &Array2<Complex64>,
    gram: &Array2<Complex64>,
    beta_m: ArrayView1<'_, f64>,
    rho_p: f64,
) -> Result<(Array2<Complex64>, Array1<f64>)> {
    let tau = psi.nrows();
    let k = psi.ncols();
    debug_assert_eq!(beta_m.len(), k);
    let trp = tau as f64 * rho_p;
    let scale = trp.sqrt();

    if rho_p == 0.0 {
        return Ok((Array2::zeros((tau, k)), Array1::zeros(k)));
    }

    // x_k = Z_m^{-1} psi_k for all k
    let x: Array2<Complex64> = if 2 * k < tau {
        // Woodbury: Z^{-1} Psi = Psi (I - W^{-1} S), W = S + (trp B)^{-1}
        let mut w = gram.clone();
        for i in 0..k {
            w[[i, i]] += Complex64::new(1.0 / (trp * beta_m[i]), 0.0);
        }
        let chol = Cholesky::factor(w.view())?;
        let u = chol.solve_matrix(gram.view());
        let mut eye_minus_u = -u;
        for i in 0..k {
            eye_minus_u[[i, i]] += 1.0;
        }
        psi.dot(&eye_minus_u)
    } else {
        // direct: factor Z_m = trp Psi B_m Psi^H + I
        let mut z = Array2::<Complex64>::zeros((tau, tau));
        for (j, col) in psi.columns().into_iter().enumerate() {
            let w = trp * beta_m[j];
            for r in 0..tau {
                let cr = col[r] * w;
                for c in 0..=r {
                    z[[r, c]] += cr * col[c].conj();
                }
            }
        }
        for i in 0..tau {
            z[[i, i]] += 1.0;
        }
        let chol = Cholesky::factor(z.view())?;
        chol.solve_matrix(psi.view())
    };

    let mut a = x;
    let mut gamma = Array1::<f64>::zeros(k);
    for (j, mut col) in a.columns_mut().into_iter().enumerate() {
        let b = beta_m[j];
        col.mapv_inplace(|v| v * (scale * b));
        let ip = cdot(psi.column(j), col.view());
        debug_assert!(
            ip.im.abs() <= 1e-10 * ip.re.abs().max(1e-300),
            "gamma not real: {ip}"
        );
        gamma[j] = scale * b * ip.re;
    }
    Ok((a, gamma))
}

impl LmmseEstimator {
    /// Factors the per-AP systems once for a (pilots, beta) block.
    pub fn new(pilots: &PilotSet, beta: &Array2<f64>, rho_p: f64) -> Result<Self> {
        let (m, k) = beta.dim();
        if pilots.k() != k {
            return Err(Error::Dimension {
                context: "LmmseEstimator::new",
                detail: format!("pilots have K={}, beta has K={k}", pilots.k()),
            });
        }
        let gram = {
            let mut s = Array2::<Complex64>::zeros((k, k));
            for i in 0..k {
                for j in 0..k {
                    s[[i, j]] = cdot(pilots.psi.column(i), pilots.psi.column(j));
                }
            }
            s
        };
        let mut a = Vec::with_capacity(m);
        let mut gamma = Array2::<f64>::zeros((m, k));
        for mm in 0..m {
            let (a_m, gamma_m) = ap_estimation(&pilots.psi, &gram, beta.row(mm), rho_p)?;
            gamma.row_mut(mm).assign(&gamma_m);
            a.push(a_m);
        }
        Ok(Self {
            a,
            gamma,
            beta: beta.clone(),
        })
    }

    pub fn gamma(&self) -> &Array2<f64> {
        &self.gamma
    }

    pub fn a(&self) -> &[Array2<Complex64>] {
        &self.a
    }

    pub fn err_var(&self) -> Array2<f64> {
        &self.beta - &self.gamma
    }

    /// Estimates the M x K channel matrix from one received pilot block.
    pub fn estimate_g(&self, received: &ReceivedPilots) -> Result<Array2<Complex64>> {
        let m = self.a.len();
        let k = self.gamma.ncols();
        let tau = self.a.first().map_or(0, |a| a.nrows());
        if received.y.dim() != (tau, m) {
            return Err(Error::Dimension {
                context: "LmmseEstimator::estimate_g",
                detail: format!("received {:?}, expected ({tau}, {m})", received.y.dim()),
            });
        }
        let mut g_hat = Array2::<Complex64>::zeros((m, k));
        for mm in 0..m {
            let y_m = received.y.column(mm);
            for kk in 0..k {
                g_hat[[mm, kk]] = cdot(self.a[mm].column(kk), y_m);
            }
        }
        Ok(g_hat)
    }

    /// Full estimation bundle for one received block.
    pub fn estimate(&self, received: &ReceivedPilots) -> Result<EstimationResult> {
        Ok(EstimationResult {
            g_hat: self.estimate_g(received)?,
            gamma: self.gamma.clone(),
            err_var: self.err_var(),
            a: self.a.clone(),
        })
    }
}

/// Single-AP LMMSE estimate: returns `g_hat_m` (K estimates) and the
/// projection matrix `A_m` whose columns are `a_mk`.
pub fn lmmse_estimate(
    y_m: ArrayView1<'_, Complex64>,
    pilots: &PilotSet,
    beta_m: ArrayView1<'_, f64>,
    rho_p: f64,
) -> Result<(Array1<Complex64>, Array2<Complex64>)> {
    if y_m.len() != pilots.tau() {
        return Err(Error::Dimension {
            context: "lmmse_estimate",
            detail: format!("y has {} rows, pilots have tau={}", y_m.len(), pilots.tau()),
        });
    }
    let gram = pilot_gram(pilots);
    let (a, _) = ap_estimation(&pilots.psi, &gram, beta_m, rho_p)?;
    let g_hat = Array1::from_shape_fn(pilots.k(), |kk| cdot(a.column(kk), y_m));
    Ok((g_hat, a))
}

/// Estimate variances `gamma_m` for one AP.
pub fn gamma_variance(
    pilots: &PilotSet,
    beta_m: ArrayView1<'_, f64>,
    rho_p: f64,
) -> Result<Array1<f64>> {
    let gram = pilot_gram(pilots);
    let (_, gamma) = ap_estimation(&pilots.psi, &gram, beta_m, rho_p)?;
    Ok(gamma)
}

fn pilot_gram(pilots: &PilotSet) -> Array2<Complex64> {
    let k = pilots.k();
    Array2::from_shape_fn((k, k), |(i, j)| {
        cdot(pilots.psi.column(i), pilots.psi.column(j))
    })
}

/// Suboptimal per-pilot-projection estimator (comparison baseline): each
/// device's pilot is correlated with the received block and scaled by the
/// scalar MMSE coefficient. Returns estimates and their variances.
pub fn subopt_estimate(
    y_m: ArrayView1<'_, Complex64>,
    pilots: &PilotSet,
    beta_m: ArrayView1<'_, f64>,
    rho_p: f64,
) -> Result<(Array1<Complex64>, Array1<f64>)> {
    let tau = pilots.tau();
    if y_m.len() != tau {
        return Err(Error::Dimension {
            context: "subopt_estimate",
            detail: format!("y has {} rows, pilots have tau={tau}", y_m.len()),
        });
    }
    let k = pilots.k();
    let trp = tau as f64 * rho_p;
    let scale = trp.sqrt();
    let mut g_hat = Array1::<Complex64>::zeros(k);
    let mut gamma = Array1::<f64>::zeros(k);
    for kk in 0..k {
        let proj = cdot(pilots.psi.column(kk), y_m);
        let mut denom = 1.0;
        for j in 0..k {
            let ip = cdot(pilots.psi.column(j), pilots.psi.column(kk)).norm_sqr();
            denom += trp * beta_m[j] * ip;
        }
        g_hat[kk] = proj * (scale * beta_m[kk] / denom);
        gamma[kk] = trp * beta_m[kk] * beta_m[kk] / denom;
    }
    Ok((g_hat, gamma))
}

/// Mean absolute pairwise estimate covariance at one pilot length.
#[derive(Debug, Clone, Copy)]
pub struct CovarianceProbe {
    pub tau: usize,
    /// Mean over ordered pairs k != l of |Cov(g_hat_k, g_hat_l)| normalized
    /// by sqrt(mean gamma_k * mean gamma_l); `None` when K = 1.
    pub mean_abs_normalized_cov: Option<f64>,
}

/// Empirical covariance of a single AP's estimates. Each pilot length gets
/// one random pilot set, held fixed while channel and noise are redrawn
/// every trial; the estimates are only cross-correlated through pilot
/// non-orthogonality, so the statistic shrinks as the pilots lengthen.
/// Devices reuse the large-scale row of AP 0 from one network drop of
/// `config`.
pub fn estimate_covariance_probe(
    config: &NetworkConfig,
    tau_list: &[usize],
    n_trials: usize,
) -> Result<Vec<CovarianceProbe>> {
    if n_trials < 100 {
        return Err(Error::Statistics(format!(
            "n_trials={n_trials} too small for a covariance estimate; need >= 100"
        )));
    }
    config.validate()?;
    let k = config.k;
    let rho_p = config.derived_snr().rho_p;
    let realization = generate_network(config, config.seed)?;
    let beta_row = realization.beta.row(0).to_owned();
    let beta_mat = beta_row.clone().insert_axis(ndarray::Axis(0)); // 1 x K

    let mut out = Vec::with_capacity(tau_list.len());
    for (ti, &tau) in tau_list.iter().enumerate() {
        let pilots = generate_pilots(
            k,
            tau,
            derive_seed(config.seed, rng::stream::PILOTS, ti as u64),
        );
        let gram = pilot_gram(&pilots);
        let (a, gamma_mean) = ap_estimation(&pilots.psi, &gram, beta_row.view(), rho_p)?;
        let mut mean = Array1::<Complex64>::zeros(k);
        let mut cross = Array2::<Complex64>::zeros((k, k));
        for trial in 0..n_trials {
            let base = derive_seed(config.seed, rng::stream::PROBE, (ti * n_trials + trial) as u64);
            let h = {
                let mut rng = seed_rng(derive_seed(base, rng::stream::CHANNEL, 0));
                Array2::from_shape_fn((1, k), |_| rng::complex_normal(&mut rng))
            };
            let draw = crate::channel::channel_from_h(&beta_mat, h)?;
            let received = receive_pilots(
                &pilots,
                &draw.g,
                rho_p,
                derive_seed(base, rng::stream::NOISE, 0),
            )?;
            let y0 = received.y.column(0);
            let g_hat = Array1::from_shape_fn(k, |kk| cdot(a.column(kk), y0));
            for i in 0..k {
                mean[i] += g_hat[i];
                for j in 0..k {
                    cross[[i, j]] += g_hat[i].conj() * g_hat[j];
                }
            }
        }
        let n = n_trials as f64;
        mean.mapv_inplace(|z| z / n);
        let stat = if k < 2 {
            None
        } else {
            let mut acc = 0.0;
            let mut cnt = 0usize;
            for i in 0..k {
                for j in 0..k {
                    if i == j {
                        continue;
                    }
                    let cov = cross[[i, j]] / n - mean[i].conj() * mean[j];
                    acc += cov.norm() / (gamma_mean[i] * gamma_mean[j]).sqrt();
                    cnt += 1;
                }
            }
            Some(acc / cnt as f64)
        };
        out.push(CovarianceProbe {
            tau,
            mean_abs_normalized_cov: stat,
        });
    }
    Ok(out)
}
