//! Uplink power control.
//!
//! Four fixed-point controllers over the device power coefficients
//! `eta in [0,1]^K`: max-min and target-SINR, each driven either by the
//! exact MMSE-receiver quadratic forms or by the diagonal deterministic
//! approximation. All four share the same skeleton:
//!
//! ```text
//! repeat: metric <- engine response at powers alpha * u / metric
//! then:   eta_k proportional to u_k / metric_k
//! ```
//!
//! where `alpha` tracks the worst weighted metric (max-min) or is pinned by
//! the target SINR (target mode). The update maps are standard interference
//! functions (positive, monotone, scalable), so the iterations converge to
//! unique fixed points whenever the problem is feasible;
//! [`interference_function_probe`] spot-checks those three properties
//! numerically at random points.
//!
//! Rate weights `u` (unit norm) shape the per-device targets and implement
//! device dropping: a weight near zero removes a device's claim on the
//! system and drives its power to zero. Power weights `nu` rescale each
//! device's maximum transmit power.

use ndarray::{Array1, Array2, ArrayView1};
use num_complex::Complex64;

use crate::error::{Error, InfeasibilityReport, Result};
use crate::rng::seed_rng;
use crate::ul_sinr::{omega_quadforms, rm_fixed_point, UlPowerVector};
use rand::Rng as _;

/// Rate and power weighting vectors for the uplink controllers.
#[derive(Debug, Clone)]
pub struct ControlWeights {
    u: Array1<f64>,
    nu: Array1<f64>,
}

impl ControlWeights {
    pub fn new(u: Array1<f64>, nu: Array1<f64>) -> Result<Self> {
        if u.len() != nu.len() {
            return Err(Error::Dimension {
                context: "ControlWeights::new",
                detail: format!("u len {}, nu len {}", u.len(), nu.len()),
            });
        }
        if u.iter().any(|&v| v < 0.0 || !v.is_finite()) {
            return Err(Error::Domain("rate weights must be non-negative".into()));
        }
        if nu.iter().any(|&v| v <= 0.0 || !v.is_finite()) {
            return Err(Error::Domain("power weights must be positive".into()));
        }
        let norm = u.dot(&u).sqrt();
        if (norm - 1.0).abs() > 1e-12 {
            return Err(Error::Domain(format!("rate weight norm {norm} != 1")));
        }
        Ok(Self { u, nu })
    }

    /// Equal rate weights `1/sqrt(K)` and unit power weights.
    pub fn uniform(k: usize) -> Self {
        Self {
            u: Array1::from_elem(k, 1.0 / (k as f64).sqrt()),
            nu: Array1::ones(k),
        }
    }

    pub fn k(&self) -> usize {
        self.u.len()
    }

    pub fn u(&self) -> ArrayView1<'_, f64> {
        self.u.view()
    }

    pub fn nu(&self) -> ArrayView1<'_, f64> {
        self.nu.view()
    }

    /// Effective per-device maximum powers `rho_u * nu_k`.
    fn rho_prime(&self, rho_u: f64) -> Array1<f64> {
        self.nu.mapv(|v| rho_u * v)
    }
}

/// Unit-norm rate weights with the first `k_p` devices assigned the small
/// weight `u_p` and the rest the matching `u_g`.
pub fn build_weights(k: usize, k_p: usize, u_p: f64) -> Result<ControlWeights> {
    let poor: Vec<usize> = (0..k_p).collect();
    weights_with_poor(k, &poor, u_p)
}

/// As [`build_weights`] but with an explicit set of down-weighted devices.
pub fn weights_with_poor(k: usize, poor: &[usize], u_p: f64) -> Result<ControlWeights> {
    let k_p = poor.len();
    if k_p >= k {
        return Err(Error::Domain(format!(
            "cannot down-weight {k_p} of {k} devices"
        )));
    }
    if u_p < 0.0 || !u_p.is_finite() {
        return Err(Error::Domain(format!("u_p = {u_p} must be >= 0")));
    }
    let rem = 1.0 - u_p * u_p * k_p as f64;
    if rem <= 0.0 {
        return Err(Error::Domain(format!(
            "u_p = {u_p} too large for {k_p} down-weighted devices"
        )));
    }
    let u_g = (rem / (k - k_p) as f64).sqrt();
    if k_p > 0 && u_g <= u_p {
        return Err(Error::Domain(format!(
            "u_p = {u_p} does not separate dropped devices (u_g = {u_g})"
        )));
    }
    let mut u = Array1::from_elem(k, u_g);
    for &p in poor {
        if p >= k {
            return Err(Error::Domain(format!("device index {p} out of range")));
        }
        u[p] = u_p;
    }
    ControlWeights::new(u, Array1::ones(k))
}

/// Indices of the `k_p` devices with the largest power coefficients.
pub fn select_poor_by_power(eta: ArrayView1<'_, f64>, k_p: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..eta.len()).collect();
    idx.sort_by(|&a, &b| eta[b].partial_cmp(&eta[a]).unwrap());
    idx.truncate(k_p);
    idx.sort_unstable();
    idx
}

/// Outcome of one power-control run.
#[derive(Debug, Clone)]
pub struct PcResult {
    pub eta: UlPowerVector,
    pub iterations: usize,
    pub converged: bool,
    /// Per-device SINR at `eta` under the engine that produced it.
    pub achieved: Array1<f64>,
    pub alpha_final: f64,
    /// Devices intentionally degraded by a small rate weight.
    pub dropped: Vec<usize>,
}

/// How target-SINR control picks the devices to sacrifice when the target
/// is not reachable for everyone.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DropRule {
    /// Devices whose full-power SINR misses the target.
    BelowTarget,
    /// A fixed count of devices, those demanding the most power.
    LargestPower(usize),
}

fn validate_iteration_params(eps: f64, max_iter: usize) -> Result<()> {
    if eps <= 0.0 || !eps.is_finite() {
        return Err(Error::Domain(format!("eps = {eps} must be positive")));
    }
    if max_iter == 0 {
        return Err(Error::Domain("max_iter must be at least 1".into()));
    }
    Ok(())
}

fn validate_nu(nu: &Array1<f64>) -> Result<()> {
    if nu.iter().any(|&v| v <= 0.0 || !v.is_finite()) {
        return Err(Error::Domain("power weights must be positive".into()));
    }
    Ok(())
}

/// Exact-engine response `d_k = rho'_k g_hat_k^H Omega(w)^{-1} g_hat_k`.
fn exact_response(
    g_hat: &Array2<Complex64>,
    gamma: &Array2<f64>,
    beta: &Array2<f64>,
    rho_prime: &Array1<f64>,
    w: &Array1<f64>,
) -> Result<Array1<f64>> {
    let q = omega_quadforms(g_hat, beta, gamma, w.view())?;
    Ok(Array1::from_shape_fn(q.len(), |k| rho_prime[k] * q[k]))
}

/// Exact per-device SINR at effective powers `eta_k nu_k`.
fn exact_achieved(
    g_hat: &Array2<Complex64>,
    gamma: &Array2<f64>,
    beta: &Array2<f64>,
    nu: &Array1<f64>,
    eta: &UlPowerVector,
    rho_u: f64,
) -> Result<Array1<f64>> {
    let w = Array1::from_shape_fn(eta.k(), |k| rho_u * nu[k] * eta.eta()[k]);
    let qf = omega_quadforms(g_hat, beta, gamma, w.view())?;
    let mut sinr = Array1::zeros(eta.k());
    for k in 0..eta.k() {
        let q = w[k] * qf[k];
        if q >= 1.0 {
            return Err(Error::Conditioning {
                context: "exact_achieved",
                detail: format!("quadratic form q[{k}] = {q} >= 1"),
            });
        }
        sinr[k] = q / (1.0 - q);
    }
    Ok(sinr)
}

/// Deterministic-engine per-device SINR at effective powers `eta_k nu_k`.
fn rm_achieved(
    gamma: &Array2<f64>,
    beta: &Array2<f64>,
    nu: &Array1<f64>,
    eta: &UlPowerVector,
    rho_u: f64,
    eps: f64,
    max_iter: usize,
) -> Result<Array1<f64>> {
    let pw = Array1::from_shape_fn(eta.k(), |k| rho_u * nu[k] * eta.eta()[k]);
    let state = rm_fixed_point(gamma, beta, pw.view(), None, eps, max_iter)?;
    let m_f = beta.nrows() as f64;
    let traces = gamma.t().dot(&state.t_diag);
    Ok(Array1::from_shape_fn(eta.k(), |k| pw[k] / m_f * traces[k]))
}

fn max_abs_diff(a: &Array1<f64>, b: &Array1<f64>) -> f64 {
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0f64, f64::max)
}

fn metric_min(d: &Array1<f64>, u: &Array1<f64>) -> f64 {
    d.iter()
        .zip(u.iter())
        .filter(|(_, &uk)| uk > 0.0)
        .map(|(&dk, &uk)| dk / uk)
        .fold(f64::INFINITY, f64::min)
}

/// Max-min power control driven by the exact MMSE-receiver SINR.
///
/// Iterates the weighted quadratic-form responses to their fixed point and
/// scales powers so every device's response-to-weight ratio equals the
/// worst one; the bottleneck device ends at full power exactly.
pub fn maxmin_exact(
    g_hat: &Array2<Complex64>,
    gamma: &Array2<f64>,
    beta: &Array2<f64>,
    weights: &ControlWeights,
    rho_u: f64,
    eps: f64,
    max_iter: usize,
) -> Result<PcResult> {
    validate_iteration_params(eps, max_iter)?;
    let k = weights.k();
    let rho_prime = weights.rho_prime(rho_u);
    let mut d = exact_response(g_hat, gamma, beta, &rho_prime, &rho_prime)?;
    let mut iterations = 0;
    loop {
        iterations += 1;
        if iterations > max_iter {
            return Err(Error::NoConvergence {
                iterations: max_iter,
                residual: f64::NAN,
                tol: eps,
            });
        }
        let alpha = metric_min(&d, &weights.u);
        let w =
            Array1::from_shape_fn(k, |kk| alpha * rho_prime[kk] * weights.u[kk] / d[kk]);
        let next = exact_response(g_hat, gamma, beta, &rho_prime, &w)?;
        let residual = max_abs_diff(&d, &next);
        d = next;
        if residual <= eps {
            break;
        }
    }
    let alpha = metric_min(&d, &weights.u);
    // alpha u_k / d_k <= 1 holds in reals; min() strips the roundoff ulps
    let eta = UlPowerVector::new(Array1::from_shape_fn(k, |kk| {
        if weights.u[kk] > 0.0 {
            (alpha * weights.u[kk] / d[kk]).min(1.0)
        } else {
            0.0
        }
    }))?;
    let achieved = exact_achieved(g_hat, gamma, beta, &weights.nu, &eta, rho_u)?;
    Ok(PcResult {
        eta,
        iterations,
        converged: true,
        achieved,
        alpha_final: alpha,
        dropped: Vec::new(),
    })
}

fn weighted_trace_min(traces: &Array1<f64>, weights: &ControlWeights) -> f64 {
    traces
        .iter()
        .zip(weights.u.iter().zip(weights.nu.iter()))
        .filter(|(_, (&uk, _))| uk > 0.0)
        .map(|(&tr, (&uk, &nuk))| nuk * tr / uk)
        .fold(f64::INFINITY, f64::min)
}

/// One refresh of the diagonal resolvent at powers `alpha u_k / trace_k`.
///
/// `xi` is the anticipated per-device SINR entering the rank-one
/// correction; `u_eff` carries the rate weights (all ones when they are
/// absorbed elsewhere). Devices with zero weight drop out entirely.
fn rm_resolvent_refresh(
    gamma: &Array2<f64>,
    beta: &Array2<f64>,
    rho_u: f64,
    alpha: f64,
    u_eff: &Array1<f64>,
    xi: &Array1<f64>,
    traces: &Array1<f64>,
) -> Array1<f64> {
    let k = u_eff.len();
    let m_f = beta.nrows() as f64;
    let mut cb = Array1::<f64>::zeros(k);
    let mut cg = Array1::<f64>::zeros(k);
    for kk in 0..k {
        if u_eff[kk] == 0.0 {
            continue;
        }
        let c = alpha * rho_u * u_eff[kk] / traces[kk];
        cb[kk] = c;
        cg[kk] = c * xi[kk] / (1.0 + xi[kk]);
    }
    let den = beta.dot(&cb) - gamma.dot(&cg);
    den.mapv(|v| m_f / (v + 1.0))
}

/// Max-min power control driven by the deterministic SINR approximation.
/// Only large-scale statistics enter; one iteration costs O(MK).
pub fn maxmin_rm(
    gamma: &Array2<f64>,
    beta: &Array2<f64>,
    weights: &ControlWeights,
    rho_u: f64,
    eps: f64,
    max_iter: usize,
) -> Result<PcResult> {
    validate_iteration_params(eps, max_iter)?;
    let k = weights.k();
    let m_f = beta.nrows() as f64;
    let rho_prime = weights.rho_prime(rho_u);
    let init = rm_fixed_point(gamma, beta, rho_prime.view(), None, eps, max_iter)?;
    let mut t = init.t_diag;
    let mut iterations = 0;
    loop {
        iterations += 1;
        if iterations > max_iter {
            return Err(Error::NoConvergence {
                iterations: max_iter,
                residual: f64::NAN,
                tol: eps,
            });
        }
        let traces = gamma.t().dot(&t);
        let alpha = weighted_trace_min(&traces, weights);
        let xi = Array1::from_shape_fn(k, |kk| rho_u * alpha * weights.u[kk] / m_f);
        let next = rm_resolvent_refresh(gamma, beta, rho_u, alpha, &weights.u, &xi, &traces);
        let residual = max_abs_diff(&t, &next);
        t = next;
        if residual <= eps {
            break;
        }
    }
    let traces = gamma.t().dot(&t);
    let alpha = weighted_trace_min(&traces, weights);
    // alpha u_k / (nu_k tr_k) <= 1 holds in reals; min() strips the roundoff ulps
    let eta = UlPowerVector::new(Array1::from_shape_fn(k, |kk| {
        if weights.u[kk] > 0.0 {
            (alpha * weights.u[kk] / (weights.nu[kk] * traces[kk])).min(1.0)
        } else {
            0.0
        }
    }))?;
    let achieved = rm_achieved(gamma, beta, &weights.nu, &eta, rho_u, eps, max_iter)?;
    Ok(PcResult {
        eta,
        iterations,
        converged: true,
        achieved,
        alpha_final: alpha,
        dropped: Vec::new(),
    })
}

/// Iterates the exact-engine response with `alpha` held fixed.
fn iterate_exact_fixed_alpha(
    g_hat: &Array2<Complex64>,
    gamma: &Array2<f64>,
    beta: &Array2<f64>,
    rho_prime: &Array1<f64>,
    u_eff: &Array1<f64>,
    alpha: f64,
    eps: f64,
    max_iter: usize,
) -> Result<(Array1<f64>, usize)> {
    let k = rho_prime.len();
    let mut d = exact_response(g_hat, gamma, beta, rho_prime, rho_prime)?;
    for it in 1..=max_iter {
        let w = Array1::from_shape_fn(k, |kk| alpha * rho_prime[kk] * u_eff[kk] / d[kk]);
        let next = exact_response(g_hat, gamma, beta, rho_prime, &w)?;
        let residual = max_abs_diff(&d, &next);
        d = next;
        if residual <= eps {
            return Ok((d, it));
        }
    }
    Err(Error::NoConvergence {
        iterations: max_iter,
        residual: f64::NAN,
        tol: eps,
    })
}

/// Iterates the diagonal resolvent with `alpha` and `xi` held fixed.
fn iterate_rm_fixed_alpha(
    gamma: &Array2<f64>,
    beta: &Array2<f64>,
    rho_u: f64,
    u_eff: &Array1<f64>,
    xi: &Array1<f64>,
    alpha: f64,
    t0: Array1<f64>,
    eps: f64,
    max_iter: usize,
) -> Result<(Array1<f64>, usize)> {
    let mut t = t0;
    for it in 1..=max_iter {
        let traces = gamma.t().dot(&t);
        let next = rm_resolvent_refresh(gamma, beta, rho_u, alpha, u_eff, xi, &traces);
        let residual = max_abs_diff(&t, &next);
        t = next;
        if residual <= eps {
            return Ok((t, it));
        }
    }
    Err(Error::NoConvergence {
        iterations: max_iter,
        residual: f64::NAN,
        tol: eps,
    })
}

fn budget_violators(eta: &Array1<f64>) -> Vec<usize> {
    eta.iter()
        .enumerate()
        .filter(|(_, &e)| !(0.0..=1.0).contains(&e))
        .map(|(k, _)| k)
        .collect()
}

fn infeasible(eta: Array1<f64>, pass: u8) -> Error {
    let violators = budget_violators(&eta);
    let offending = violators.iter().map(|&k| eta[k]).collect();
    Error::Infeasible(InfeasibilityReport {
        violators,
        eta: offending,
        pass,
    })
}

/// Target-SINR power control under the exact engine.
///
/// A first pass aims the common target at every device. If some power
/// coefficient leaves [0, 1], poor devices are selected per `rule`,
/// down-weighted by `u_p`, and a second pass re-runs; devices that still
/// violate the budget make the instance infeasible.
#[allow(clippy::too_many_arguments)]
pub fn target_exact(
    g_hat: &Array2<Complex64>,
    gamma: &Array2<f64>,
    beta: &Array2<f64>,
    nu: &Array1<f64>,
    rho_u: f64,
    s_t: f64,
    eps: f64,
    max_iter: usize,
    u_p: f64,
    rule: DropRule,
) -> Result<PcResult> {
    validate_iteration_params(eps, max_iter)?;
    validate_nu(nu)?;
    if s_t <= 0.0 || !s_t.is_finite() {
        return Err(Error::Domain(format!("target SINR {s_t} must be positive")));
    }
    let k = nu.len();
    let rho_prime = nu.mapv(|v| rho_u * v);
    let alpha1 = s_t / (1.0 + s_t);

    let ones = Array1::ones(k);
    let (d1, it1) =
        iterate_exact_fixed_alpha(g_hat, gamma, beta, &rho_prime, &ones, alpha1, eps, max_iter)?;
    let eta1 = d1.mapv(|dk| alpha1 / dk);
    if budget_violators(&eta1).is_empty() {
        let eta = UlPowerVector::new(eta1)?;
        let achieved = exact_achieved(g_hat, gamma, beta, nu, &eta, rho_u)?;
        return Ok(PcResult {
            eta,
            iterations: it1,
            converged: true,
            achieved,
            alpha_final: alpha1,
            dropped: Vec::new(),
        });
    }

    let poor = match rule {
        DropRule::BelowTarget => {
            let full = UlPowerVector::full(k);
            let sinr_full = exact_achieved(g_hat, gamma, beta, nu, &full, rho_u)?;
            (0..k).filter(|&kk| sinr_full[kk] < s_t).collect::<Vec<_>>()
        }
        DropRule::LargestPower(k_p) => select_poor_by_power(eta1.view(), k_p),
    };
    if poor.len() >= k {
        return Err(infeasible(eta1, 1));
    }
    let weights = weights_with_poor(k, &poor, u_p)?;
    let u_g = weights
        .u
        .iter()
        .enumerate()
        .find(|(kk, _)| !poor.contains(kk))
        .map(|(_, &ug)| ug)
        .expect("at least one kept device");
    let alpha2 = alpha1 / u_g;
    let u = weights.u.clone();
    let (d2, it2) =
        iterate_exact_fixed_alpha(g_hat, gamma, beta, &rho_prime, &u, alpha2, eps, max_iter)?;
    let eta2 = Array1::from_shape_fn(k, |kk| alpha2 * u[kk] / d2[kk]);
    if !budget_violators(&eta2).is_empty() {
        return Err(infeasible(eta2, 2));
    }
    let eta = UlPowerVector::new(eta2)?;
    let achieved = exact_achieved(g_hat, gamma, beta, nu, &eta, rho_u)?;
    Ok(PcResult {
        eta,
        iterations: it1 + it2,
        converged: true,
        achieved,
        alpha_final: alpha2,
        dropped: poor,
    })
}

/// Target-SINR power control under the deterministic engine. Same two-pass
/// structure as the exact variant, on the O(MK) resolvent iteration.
#[allow(clippy::too_many_arguments)]
pub fn target_rm(
    gamma: &Array2<f64>,
    beta: &Array2<f64>,
    nu: &Array1<f64>,
    rho_u: f64,
    s_t: f64,
    eps: f64,
    max_iter: usize,
    u_p: f64,
    rule: DropRule,
) -> Result<PcResult> {
    validate_iteration_params(eps, max_iter)?;
    validate_nu(nu)?;
    if s_t <= 0.0 || !s_t.is_finite() {
        return Err(Error::Domain(format!("target SINR {s_t} must be positive")));
    }
    let k = nu.len();
    let m_f = beta.nrows() as f64;
    let rho_prime = nu.mapv(|v| rho_u * v);
    let alpha1 = s_t * m_f / rho_u;
    let init = rm_fixed_point(gamma, beta, rho_prime.view(), None, eps, max_iter)?;

    let ones = Array1::ones(k);
    let xi1 = Array1::from_elem(k, s_t);
    let (t1, it1) = iterate_rm_fixed_alpha(
        gamma,
        beta,
        rho_u,
        &ones,
        &xi1,
        alpha1,
        init.t_diag.clone(),
        eps,
        max_iter,
    )?;
    let traces1 = gamma.t().dot(&t1);
    let eta1 = Array1::from_shape_fn(k, |kk| alpha1 / (nu[kk] * traces1[kk]));
    if budget_violators(&eta1).is_empty() {
        let eta = UlPowerVector::new(eta1)?;
        let achieved = rm_achieved(gamma, beta, nu, &eta, rho_u, eps, max_iter)?;
        return Ok(PcResult {
            eta,
            iterations: it1,
            converged: true,
            achieved,
            alpha_final: alpha1,
            dropped: Vec::new(),
        });
    }

    let poor = match rule {
        DropRule::BelowTarget => {
            // full-power SINR under this engine is the init fixed point
            let traces0 = gamma.t().dot(&init.t_diag);
            (0..k)
                .filter(|&kk| rho_prime[kk] / m_f * traces0[kk] < s_t)
                .collect::<Vec<_>>()
        }
        DropRule::LargestPower(k_p) => select_poor_by_power(eta1.view(), k_p),
    };
    if poor.len() >= k {
        return Err(infeasible(eta1, 1));
    }
    let weights = weights_with_poor(k, &poor, u_p)?;
    let u = weights.u.clone();
    let u_g = *u
        .iter()
        .enumerate()
        .find(|(kk, _)| !poor.contains(kk))
        .map(|(_, ug)| ug)
        .expect("at least one kept device");
    let alpha2 = alpha1 / u_g;
    let xi2 = u.mapv(|uk| s_t * uk / u_g);
    let (t2, it2) = iterate_rm_fixed_alpha(
        gamma,
        beta,
        rho_u,
        &u,
        &xi2,
        alpha2,
        init.t_diag.clone(),
        eps,
        max_iter,
    )?;
    let traces2 = gamma.t().dot(&t2);
    let eta2 = Array1::from_shape_fn(k, |kk| {
        if u[kk] > 0.0 {
            alpha2 * u[kk] / (nu[kk] * traces2[kk])
        } else {
            0.0
        }
    });
    if !budget_violators(&eta2).is_empty() {
        return Err(infeasible(eta2, 2));
    }
    let eta = UlPowerVector::new(eta2)?;
    let achieved = rm_achieved(gamma, beta, nu, &eta, rho_u, eps, max_iter)?;
    Ok(PcResult {
        eta,
        iterations: it1 + it2,
        converged: true,
        achieved,
        alpha_final: alpha2,
        dropped: poor,
    })
}

/// Sum rate per unit of radiated power.
pub fn ul_energy_efficiency(
    rates: ArrayView1<'_, f64>,
    eta: &UlPowerVector,
    p_u_mw: f64,
) -> Result<f64> {
    if rates.len() != eta.k() {
        return Err(Error::Dimension {
            context: "ul_energy_efficiency",
            detail: format!("rates len {}, eta len {}", rates.len(), eta.k()),
        });
    }
    if rates.iter().any(|&r| r < 0.0) {
        return Err(Error::Domain("rates must be non-negative".into()));
    }
    let power = p_u_mw * eta.sum();
    if power == 0.0 {
        return Err(Error::Domain(
            "energy efficiency undefined at zero total power".into(),
        ));
    }
    Ok(rates.sum() / power)
}

/// Which update map the interference probe exercises.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IfProperty {
    Positivity,
    Monotonicity,
    Scalability,
}

/// One failed property check with its witness values.
#[derive(Debug, Clone)]
pub struct IfViolation {
    pub property: IfProperty,
    pub point: usize,
    pub component: usize,
    pub lhs: f64,
    pub rhs: f64,
}

/// Result of probing the three standard-interference-function properties.
#[derive(Debug, Clone)]
pub struct IfPropertyReport {
    pub points: usize,
    pub violations: Vec<IfViolation>,
}

impl IfPropertyReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Probe target: the exact d-update (argument dimension K) or the
/// deterministic resolvent update (argument dimension M).
pub enum IfEngine<'a> {
    Exact { g_hat: &'a Array2<Complex64> },
    Rm,
}

/// Evaluates the selected update map at `n_points` random positive points
/// and checks positivity, strict componentwise monotonicity, and strict
/// scalability (`zeta f(x) > f(zeta x)` for `zeta > 1`).
#[allow(clippy::too_many_arguments)]
pub fn interference_function_probe(
    engine: IfEngine<'_>,
    gamma: &Array2<f64>,
    beta: &Array2<f64>,
    weights: &ControlWeights,
    rho_u: f64,
    alpha: f64,
    n_points: usize,
    seed: u64,
) -> Result<IfPropertyReport> {
    if alpha <= 0.0 || !alpha.is_finite() {
        return Err(Error::Domain(format!("alpha = {alpha} must be positive")));
    }
    let (m, k) = beta.dim();
    let m_f = m as f64;
    let rho_prime = weights.rho_prime(rho_u);
    let xi = Array1::from_shape_fn(k, |kk| rho_u * alpha * weights.u()[kk] / m_f);
    let dim = match engine {
        IfEngine::Exact { .. } => k,
        IfEngine::Rm => m,
    };
    let eval = |x: &Array1<f64>| -> Result<Array1<f64>> {
        match engine {
            IfEngine::Exact { g_hat } => {
                let w = Array1::from_shape_fn(k, |kk| {
                    alpha * rho_prime[kk] * weights.u()[kk] / x[kk]
                });
                exact_response(g_hat, gamma, beta, &rho_prime, &w)
            }
            IfEngine::Rm => {
                let traces = gamma.t().dot(x);
                Ok(rm_resolvent_refresh(
                    gamma,
                    beta,
                    rho_u,
                    alpha,
                    &weights.u().to_owned(),
                    &xi,
                    &traces,
                ))
            }
        }
    };

    let mut rng = seed_rng(seed);
    let mut violations = Vec::new();
    let tol = 1e-12;
    let mut record = |property, point, component, lhs: f64, rhs: f64| {
        violations.push(IfViolation {
            property,
            point,
            component,
            lhs,
            rhs,
        });
    };
    for point in 0..n_points {
        let x = Array1::from_shape_fn(dim, |_| 10f64.powf(rng.random_range(-2.0..2.0)));
        let shrink = Array1::from_shape_fn(dim, |_| rng.random_range(0.3..0.95));
        let x_small = &x * &shrink;
        let zeta: f64 = rng.random_range(1.1..8.0);
        let f_x = eval(&x)?;
        let f_small = eval(&x_small)?;
        let f_scaled = eval(&x.mapv(|v| v * zeta))?;
        for c in 0..f_x.len() {
            if !(f_x[c] > 0.0) {
                record(IfProperty::Positivity, point, c, f_x[c], 0.0);
            }
            let margin = tol * f_x[c].abs().max(f_small[c].abs());
            if !(f_x[c] > f_small[c] - margin) {
                record(IfProperty::Monotonicity, point, c, f_x[c], f_small[c]);
            }
            let lhs = zeta * f_x[c];
            let margin = tol * lhs.abs().max(f_scaled[c].abs());
            if !(lhs > f_scaled[c] - margin) {
                record(IfProperty::Scalability, point, c, lhs, f_scaled[c]);
            }
        }
    }
    Ok(IfPropertyReport {
        points: n_points,
        violations,
    })
}
