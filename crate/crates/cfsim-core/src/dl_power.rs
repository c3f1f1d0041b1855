//! Downlink max-min power control.
//!
//! The max-min problem over the orthonormal-pilot SINR is quasi-concave:
//! a target `t` is achievable iff a second-order cone system in the
//! amplitudes `sigma_mk = sqrt(eta_mk)` and per-AP levels `theta_m` is
//! feasible. [`maxmin_bisection`] brackets the optimum by bisecting `t`
//! and solving one feasibility problem per step with an interior-point
//! solver; every verdict is replayed against the cone residuals before it
//! is trusted.
//!
//! Two cheaper controllers reuse the same geometry: [`maxmin_fixed_p`]
//! pins the per-AP powers (making the denominators constants, so a single
//! cone program maximizes the worst coherent amplitude), and
//! [`uniform_power`] spreads a per-AP power across devices with one
//! coefficient per AP.

use ndarray::{Array1, Array2, ArrayView1};
use serde::{Deserialize, Serialize};

use clarabel::algebra::CscMatrix;
use clarabel::solver::{
    DefaultSettings, DefaultSolver, IPSolver, SolverStatus,
    SupportedConeT::{self, NonnegativeConeT, SecondOrderConeT},
};

use crate::dl_sinr::{dl_sinr_orth, DlPowerMatrix};
use crate::error::{Error, Result};

/// One bisection step: the tested target and the feasibility verdict.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct BisectionStep {
    pub t: f64,
    pub feasible: bool,
}

/// Output of [`maxmin_bisection`].
#[derive(Debug, Clone)]
pub struct BisectionResult {
    pub eta: DlPowerMatrix,
    /// Worst-device SINR recomputed at the returned coefficients.
    pub t_star: f64,
    /// Per-AP powers at the optimum.
    pub p_opt: Array1<f64>,
    pub bisection_steps: usize,
    pub feasibility_tol: f64,
    pub trace: Vec<BisectionStep>,
}

/// Output of [`maxmin_fixed_p`].
#[derive(Debug, Clone)]
pub struct FixedPowerResult {
    pub eta: DlPowerMatrix,
    /// Worst-device SINR recomputed at the returned coefficients.
    pub min_sinr: f64,
}

fn validate_stats(gamma: &Array2<f64>, beta: &Array2<f64>, context: &'static str) -> Result<()> {
    if gamma.dim() != beta.dim() {
        return Err(Error::Dimension {
            context,
            detail: format!("gamma {:?}, beta {:?}", gamma.dim(), beta.dim()),
        });
    }
    if gamma.iter().any(|&g| g <= 0.0 || !g.is_finite())
        || beta.iter().any(|&b| b <= 0.0 || !b.is_finite())
    {
        return Err(Error::Domain(
            "large-scale statistics must be strictly positive".into(),
        ));
    }
    Ok(())
}

/// Sparse column-major assembly in cone row order.
struct ConeSystem {
    columns: Vec<Vec<(usize, f64)>>,
    b: Vec<f64>,
    cones: Vec<SupportedConeT<f64>>,
}

impl ConeSystem {
    fn new(n_vars: usize, n_rows: usize) -> Self {
        Self {
            columns: vec![Vec::new(); n_vars],
            b: vec![0.0; n_rows],
            cones: Vec::new(),
        }
    }

    fn push(&mut self, row: usize, col: usize, value: f64) {
        self.columns[col].push((row, value));
    }

    fn matrix(&mut self) -> CscMatrix<f64> {
        let n = self.columns.len();
        let m = self.b.len();
        let mut colptr = Vec::with_capacity(n + 1);
        let mut rowval = Vec::new();
        let mut nzval = Vec::new();
        colptr.push(0);
        for col in &mut self.columns {
            col.sort_unstable_by_key(|&(row, _)| row);
            for &(row, value) in col.iter() {
                rowval.push(row);
                nzval.push(value);
            }
            colptr.push(rowval.len());
        }
        CscMatrix::new(m, n, colptr, rowval, nzval)
    }
}

fn solver_settings() -> DefaultSettings<f64> {
    let mut settings = DefaultSettings::default();
    settings.verbose = false;
    // looser than the replay tolerance: the replay check is the gate that
    // matters, and channel gains spanning many orders of magnitude make
    // tighter interior-point targets stall near the feasibility boundary
    settings.tol_feas = 1e-8;
    settings.tol_gap_abs = 1e-8;
    settings.tol_gap_rel = 1e-8;
    settings.max_iter = 200;
    settings
}

/// Worst relative cone residual of a candidate point, over the per-AP
/// norm cones, the per-AP caps, and the per-device SINR cones.
fn replay_residual(
    sigma: &Array2<f64>,
    theta: &[f64],
    gamma: &Array2<f64>,
    beta: &Array2<f64>,
    rho_d: f64,
    t: f64,
) -> f64 {
    let (m, k) = gamma.dim();
    let mut worst = 0.0f64;
    for mm in 0..m {
        let amp: f64 = (0..k)
            .map(|kk| gamma[[mm, kk]] * sigma[[mm, kk]] * sigma[[mm, kk]])
            .sum::<f64>()
            .sqrt();
        worst = worst.max((amp - theta[mm]) / theta[mm].abs().max(1.0));
        worst = worst.max(theta[mm] - 1.0);
    }
    for kk in 0..k {
        let gain: f64 = (0..m).map(|mm| gamma[[mm, kk]] * sigma[[mm, kk]]).sum();
        let lhs = (rho_d / t).sqrt() * gain;
        let rhs = (1.0
            + rho_d
                * (0..m)
                    .map(|mm| beta[[mm, kk]] * theta[mm] * theta[mm])
                    .sum::<f64>())
        .sqrt();
        worst = worst.max((rhs - lhs) / rhs);
    }
    worst
}

/// Tests whether the worst-device SINR target `t` is achievable, returning
/// an amplitude matrix that certifies feasibility when it is.
///
/// Cone system in power-share amplitudes `w_mk = sqrt(gamma_mk eta_mk)` and
/// per-AP levels `theta_m`, all confined to `[0, 1]` so the interior-point
/// iterations stay well scaled even when `gamma` spans many decades:
/// per AP `||(w_mk)_k|| <= theta_m <= 1`; per device
/// `sqrt(rho_d/t) sum_m sqrt(gamma_mk) w_mk >= ||(1, (sqrt(rho_d beta_mk) theta_m)_m)||`.
/// The certificate is converted back to `sigma_mk = sqrt(eta_mk)` on return.
/// A feasible verdict always carries a point that replays within `feas_tol`.
/// When the solver stalls without a certificate and its iterate does not
/// replay, the target is conservatively reported infeasible.
pub fn socp_feasible(
    t: f64,
    gamma: &Array2<f64>,
    beta: &Array2<f64>,
    rho_d: f64,
    feas_tol: f64,
) -> Result<(bool, Option<Array2<f64>>)> {
    validate_stats(gamma, beta, "socp_feasible")?;
    if t <= 0.0 || !t.is_finite() {
        return Err(Error::Domain(format!("target {t} must be positive")));
    }
    if feas_tol <= 0.0 {
        return Err(Error::Domain("feas_tol must be positive".into()));
    }
    let (m, k) = gamma.dim();
    let n_vars = m * k + m;
    let col_w = |mm: usize, kk: usize| mm * k + kk;
    let col_theta = |mm: usize| m * k + mm;

    let nonneg_rows = m * k + m;
    let ap_base = nonneg_rows;
    let dev_base = ap_base + m * (k + 1);
    let n_rows = dev_base + k * (m + 2);
    let mut sys = ConeSystem::new(n_vars, n_rows);

    // w_mk >= 0
    for mm in 0..m {
        for kk in 0..k {
            sys.push(col_w(mm, kk), col_w(mm, kk), -1.0);
        }
    }
    // theta_m <= 1
    for mm in 0..m {
        sys.push(m * k + mm, col_theta(mm), 1.0);
        sys.b[m * k + mm] = 1.0;
    }
    sys.cones.push(NonnegativeConeT(nonneg_rows));
    // per-AP norm cones
    for mm in 0..m {
        let base = ap_base + mm * (k + 1);
        sys.push(base, col_theta(mm), -1.0);
        for kk in 0..k {
            sys.push(base + 1 + kk, col_w(mm, kk), -1.0);
        }
        sys.cones.push(SecondOrderConeT(k + 1));
    }
    // per-device SINR cones
    let scale = (rho_d / t).sqrt();
    for kk in 0..k {
        let base = dev_base + kk * (m + 2);
        for mm in 0..m {
            sys.push(base, col_w(mm, kk), -scale * gamma[[mm, kk]].sqrt());
        }
        sys.b[base + 1] = 1.0;
        for mm in 0..m {
            sys.push(base + 2 + mm, col_theta(mm), -(rho_d * beta[[mm, kk]]).sqrt());
        }
        sys.cones.push(SecondOrderConeT(m + 2));
    }

    let a = sys.matrix();
    let p = CscMatrix::zeros((n_vars, n_vars));
    let q = vec![0.0; n_vars];
    let mut solver = DefaultSolver::new(&p, &q, &a, &sys.b, &sys.cones, solver_settings())
        .map_err(|e| Error::Solver(format!("setup failed: {e:?}")))?;
    solver.solve();
    let status = solver.solution.status;

    let replay = |x: &[f64]| -> (f64, Array2<f64>) {
        let sigma = Array2::from_shape_fn((m, k), |(mm, kk)| {
            x[col_w(mm, kk)].max(0.0) / gamma[[mm, kk]].sqrt()
        });
        let theta: Vec<f64> = (0..m).map(|mm| x[col_theta(mm)]).collect();
        (
            replay_residual(&sigma, &theta, gamma, beta, rho_d, t),
            sigma,
        )
    };
    match status {
        SolverStatus::Solved => {
            let (residual, sigma) = replay(&solver.solution.x);
            if residual <= feas_tol {
                Ok((true, Some(sigma)))
            } else {
                Err(Error::Solver(format!(
                    "claimed feasible at t = {t} but replay residual {residual} > {feas_tol}"
                )))
            }
        }
        SolverStatus::PrimalInfeasible | SolverStatus::AlmostPrimalInfeasible => Ok((false, None)),
        _ => {
            // reduced accuracy or a stall: the iterate is the only evidence.
            // If it replays feasible we hold a certificate; otherwise treat
            // the point as infeasible, which can only cost optimality slack,
            // never soundness, since every accepted point is replay-checked
            let (residual, sigma) = replay(&solver.solution.x);
            if residual <= feas_tol {
                Ok((true, Some(sigma)))
            } else {
                Ok((false, None))
            }
        }
    }
}

/// Largest worst-device SINR achievable under per-AP unit budgets, found by
/// bisecting the target and solving one cone feasibility problem per step.
pub fn maxmin_bisection(
    gamma: &Array2<f64>,
    beta: &Array2<f64>,
    rho_d: f64,
    rel_tol: f64,
    feas_tol: f64,
) -> Result<BisectionResult> {
    validate_stats(gamma, beta, "maxmin_bisection")?;
    if !(0.0..1.0).contains(&rel_tol) || rel_tol <= 0.0 {
        return Err(Error::Domain(format!("rel_tol {rel_tol} out of (0,1)")));
    }
    let (m, k) = gamma.dim();
    // sqrt(eta_mk) <= 1/sqrt(gamma_mk) per AP and noise >= 1 bound the SINR
    let t_max = (0..k)
        .map(|kk| {
            let amp: f64 = (0..m).map(|mm| gamma[[mm, kk]].sqrt()).sum();
            rho_d * amp * amp
        })
        .fold(0.0f64, f64::max);
    let mut t_lo = 0.0f64;
    let mut t_hi = t_max;
    let mut best: Option<Array2<f64>> = None;
    let mut trace = Vec::new();
    while (t_hi - t_lo) / t_hi > rel_tol {
        let t = 0.5 * (t_lo + t_hi);
        let (feasible, sigma) = socp_feasible(t, gamma, beta, rho_d, feas_tol)?;
        trace.push(BisectionStep { t, feasible });
        if feasible {
            t_lo = t;
            best = sigma;
        } else {
            t_hi = t;
        }
    }
    let eta = match &best {
        Some(sigma) => DlPowerMatrix::new_normalized(sigma.mapv(|s| s * s), gamma)?,
        None => DlPowerMatrix::zeros(m, k),
    };
    let t_star = if best.is_some() {
        dl_sinr_orth(&eta, gamma, beta, rho_d)
            .iter()
            .cloned()
            .fold(f64::INFINITY, f64::min)
    } else {
        0.0
    };
    Ok(BisectionResult {
        p_opt: eta.p().to_owned(),
        eta,
        t_star,
        bisection_steps: trace.len(),
        feasibility_tol: feas_tol,
        trace,
    })
}

/// Max-min over device amplitudes with every per-AP power pinned to `p_m`.
///
/// With the denominators constant, the worst-device amplitude target is
/// maximized by a single cone program over power-share amplitudes
/// `w_mk = sqrt(gamma_mk eta_mk)` and a scalar target `s`:
/// per AP `||(w_mk)_k|| <= sqrt(p_m)`, per device
/// `sum_m sqrt(gamma_mk) w_mk >= s sqrt((1 + rho_d sum_m p_m beta_mk)/rho_d)`.
/// Leftover AP slack is then spent uniformly so the equalities hold.
pub fn maxmin_fixed_p(
    p: ArrayView1<'_, f64>,
    gamma: &Array2<f64>,
    beta: &Array2<f64>,
    rho_d: f64,
    rel_tol: f64,
) -> Result<FixedPowerResult> {
    validate_stats(gamma, beta, "maxmin_fixed_p")?;
    let (m, k) = gamma.dim();
    if p.len() != m {
        return Err(Error::Dimension {
            context: "maxmin_fixed_p",
            detail: format!("p has {} entries for {m} APs", p.len()),
        });
    }
    if p.iter().any(|&pm| !(0.0..=1.0).contains(&pm)) {
        return Err(Error::Domain("per-AP powers must lie in [0, 1]".into()));
    }
    if rel_tol <= 0.0 {
        return Err(Error::Domain("rel_tol must be positive".into()));
    }
    if p.iter().all(|&pm| pm == 0.0) {
        return Ok(FixedPowerResult {
            eta: DlPowerMatrix::zeros(m, k),
            min_sinr: 0.0,
        });
    }

    let n_vars = m * k + 1;
    let col_w = |mm: usize, kk: usize| mm * k + kk;
    let col_s = m * k;
    let nonneg_rows = m * k + k;
    let ap_base = nonneg_rows;
    let n_rows = ap_base + m * (k + 1);
    let mut sys = ConeSystem::new(n_vars, n_rows);

    // w_mk >= 0
    for mm in 0..m {
        for kk in 0..k {
            sys.push(col_w(mm, kk), col_w(mm, kk), -1.0);
        }
    }
    // per-device amplitude rows: sum_m sqrt(gamma_mk) w_mk - c_k s >= 0
    for kk in 0..k {
        let row = m * k + kk;
        let den: f64 = 1.0
            + rho_d
                * (0..m)
                    .map(|mm| p[mm] * beta[[mm, kk]])
                    .sum::<f64>();
        let c_k = (den / rho_d).sqrt();
        for mm in 0..m {
            sys.push(row, col_w(mm, kk), -gamma[[mm, kk]].sqrt());
        }
        sys.push(row, col_s, c_k);
    }
    sys.cones.push(NonnegativeConeT(nonneg_rows));
    // per-AP norm cones with fixed radius sqrt(p_m)
    for mm in 0..m {
        let base = ap_base + mm * (k + 1);
        sys.b[base] = p[mm].sqrt();
        for kk in 0..k {
            sys.push(base + 1 + kk, col_w(mm, kk), -1.0);
        }
        sys.cones.push(SecondOrderConeT(k + 1));
    }

    let a = sys.matrix();
    let pmat = CscMatrix::zeros((n_vars, n_vars));
    let mut q = vec![0.0; n_vars];
    q[col_s] = -1.0;
    let mut solver = DefaultSolver::new(&pmat, &q, &a, &sys.b, &sys.cones, solver_settings())
        .map_err(|e| Error::Solver(format!("setup failed: {e:?}")))?;
    solver.solve();
    match solver.solution.status {
        SolverStatus::Solved | SolverStatus::AlmostSolved => {}
        other => {
            return Err(Error::Solver(format!(
                "fixed-power solve failed: status {other:?}"
            )));
        }
    }
    let x = &solver.solution.x;
    let mut eta = Array2::from_shape_fn((m, k), |(mm, kk)| {
        let w = x[col_w(mm, kk)].max(0.0);
        w * w / gamma[[mm, kk]]
    });
    // spend leftover slack so each AP meets its power equality
    for mm in 0..m {
        let used: f64 = (0..k).map(|kk| gamma[[mm, kk]] * eta[[mm, kk]]).sum();
        if used > 0.0 {
            let scale = p[mm] / used;
            for kk in 0..k {
                eta[[mm, kk]] *= scale;
            }
        } else if p[mm] > 0.0 {
            let gsum: f64 = (0..k).map(|kk| gamma[[mm, kk]]).sum();
            for kk in 0..k {
                eta[[mm, kk]] = p[mm] / gsum;
            }
        }
    }
    let eta = DlPowerMatrix::new_normalized(eta, gamma)?;
    let min_sinr = dl_sinr_orth(&eta, gamma, beta, rho_d)
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min);
    Ok(FixedPowerResult { eta, min_sinr })
}

/// One coefficient per AP: `eta_mk = p_m / sum_k' gamma_mk'`, so the AP
/// radiates exactly `p_m` regardless of the device split.
pub fn uniform_power(p: ArrayView1<'_, f64>, gamma: &Array2<f64>) -> Result<DlPowerMatrix> {
    let (m, k) = gamma.dim();
    if p.len() != m {
        return Err(Error::Dimension {
            context: "uniform_power",
            detail: format!("p has {} entries for {m} APs", p.len()),
        });
    }
    if p.iter().any(|&pm| !(0.0..=1.0).contains(&pm)) {
        return Err(Error::Domain("per-AP powers must lie in [0, 1]".into()));
    }
    if gamma.iter().any(|&g| g <= 0.0 || !g.is_finite()) {
        return Err(Error::Domain(
            "large-scale statistics must be strictly positive".into(),
        ));
    }
    let eta = Array2::from_shape_fn((m, k), |(mm, _)| p[mm] / gamma.row(mm).sum());
    DlPowerMatrix::new(eta, gamma)
}
