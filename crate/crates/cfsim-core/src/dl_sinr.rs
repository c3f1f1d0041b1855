//! Downlink SINR under conjugate beamforming.
//!
//! Each AP transmits to every device through the conjugate of its channel
//! estimate, weighted by a per-AP, per-device power coefficient `eta_mk`.
//! Devices decode coherently off channel statistics alone, which yields
//! closed-form SINRs: a general form for random pilots, built from the
//! estimation projection vectors, and a compact form that is exact when the
//! pilots are orthonormal. The per-AP normalized radiated power is
//! `p_m = sum_k eta_mk gamma_mk` and must respect the unit budget.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use num_complex::Complex64;

use crate::channel::PilotSet;
use crate::error::{Error, Result};
use crate::linalg::cdot;

/// Downlink power coefficients `eta_mk >= 0` together with the per-AP
/// powers they imply. Construction enforces the unit power budget.
#[derive(Debug, Clone)]
pub struct DlPowerMatrix {
    eta: Array2<f64>,
    p: Array1<f64>,
}

const BUDGET_SLACK: f64 = 1e-9;

impl DlPowerMatrix {
    pub fn new(eta: Array2<f64>, gamma: &Array2<f64>) -> Result<Self> {
        if eta.dim() != gamma.dim() {
            return Err(Error::Dimension {
                context: "DlPowerMatrix::new",
                detail: format!("eta {:?}, gamma {:?}", eta.dim(), gamma.dim()),
            });
        }
        if eta.iter().any(|&e| e < 0.0 || !e.is_finite()) {
            return Err(Error::Domain(
                "downlink power coefficients must be non-negative".into(),
            ));
        }
        let p = per_ap_power(eta.view(), gamma.view());
        if let Some((m, &pm)) = p.iter().enumerate().find(|(_, &pm)| pm > 1.0 + BUDGET_SLACK) {
            return Err(Error::Domain(format!(
                "AP {m} exceeds its power budget: p = {pm}"
            )));
        }
        Ok(Self { eta, p })
    }

    /// Rescales over-budget AP rows to exactly 1 before validating; used to
    /// absorb solver residuals without weakening the type invariant.
    pub fn new_normalized(mut eta: Array2<f64>, gamma: &Array2<f64>) -> Result<Self> {
        if eta.dim() != gamma.dim() {
            return Err(Error::Dimension {
                context: "DlPowerMatrix::new_normalized",
                detail: format!("eta {:?}, gamma {:?}", eta.dim(), gamma.dim()),
            });
        }
        let p = per_ap_power(eta.view(), gamma.view());
        for (mut row, &pm) in eta.rows_mut().into_iter().zip(p.iter()) {
            if pm > 1.0 {
                row.mapv_inplace(|e| e / pm);
            }
        }
        Self::new(eta, gamma)
    }

    pub fn zeros(m: usize, k: usize) -> Self {
        Self {
            eta: Array2::zeros((m, k)),
            p: Array1::zeros(m),
        }
    }

    pub fn m(&self) -> usize {
        self.eta.nrows()
    }

    pub fn k(&self) -> usize {
        self.eta.ncols()
    }

    pub fn eta(&self) -> ArrayView2<'_, f64> {
        self.eta.view()
    }

    /// Per-AP normalized powers `p_m = sum_k eta_mk gamma_mk`.
    pub fn p(&self) -> ArrayView1<'_, f64> {
        self.p.view()
    }
}

/// `p_m = sum_k eta_mk gamma_mk` without any budget check.
pub fn per_ap_power(eta: ArrayView2<'_, f64>, gamma: ArrayView2<'_, f64>) -> Array1<f64> {
    (&eta * &gamma).sum_axis(ndarray::Axis(1))
}

/// Downlink SINR closed form for orthonormal pilots:
/// coherent gain `rho_d (sum_m sqrt(eta_mk) gamma_mk)^2` over noise plus the
/// beamforming-uncertainty power `rho_d sum_m beta_mk sum_k' eta_mk' gamma_mk'`.
pub fn dl_sinr_orth(
    eta: &DlPowerMatrix,
    gamma: &Array2<f64>,
    beta: &Array2<f64>,
    rho_d: f64,
) -> Array1<f64> {
    let (m, k) = gamma.dim();
    let ap_load = per_ap_power(eta.eta(), gamma.view());
    Array1::from_shape_fn(k, |kk| {
        let gain: f64 = (0..m)
            .map(|mm| eta.eta()[[mm, kk]].sqrt() * gamma[[mm, kk]])
            .sum();
        let interference: f64 = (0..m).map(|mm| beta[[mm, kk]] * ap_load[mm]).sum();
        rho_d * gain * gain / (1.0 + rho_d * interference)
    })
}

/// Downlink SINR closed form for arbitrary (random) pilots.
///
/// `a` holds the per-AP estimation projection vectors (one tau x K matrix
/// per AP, columns `a_mk`), and `psi` the pilot set that produced them.
/// Beyond the orthonormal form's terms, cross-device interference picks up
/// the projection energy `||a_mk'||^2` and two pilot-contamination terms
/// built from the inner products `psi_j^H a_mk'`.
#[allow(clippy::too_many_arguments)]
pub fn dl_sinr_iot(
    eta: &DlPowerMatrix,
    gamma: &Array2<f64>,
    beta: &Array2<f64>,
    a: &[Array2<Complex64>],
    psi: &PilotSet,
    rho_d: f64,
    rho_p: f64,
    tau: usize,
) -> Result<Array1<f64>> {
    let (m, k) = gamma.dim();
    if a.len() != m {
        return Err(Error::Dimension {
            context: "dl_sinr_iot",
            detail: format!("{} projection matrices for {m} APs", a.len()),
        });
    }
    if psi.k() != k || psi.tau() != tau {
        return Err(Error::Dimension {
            context: "dl_sinr_iot",
            detail: format!(
                "pilot set is {}x{}, expected {tau}x{k}",
                psi.tau(),
                psi.k()
            ),
        });
    }
    // pilot/projection inner products psi_j^H a_mk and projection energies
    let mut pa: Vec<Array2<Complex64>> = Vec::with_capacity(m);
    let mut a_norm = Array2::<f64>::zeros((m, k));
    // sum_j beta_mj |psi_j^H a_mk|^2
    let mut contamination = Array2::<f64>::zeros((m, k));
    for mm in 0..m {
        if a[mm].dim() != (tau, k) {
            return Err(Error::Dimension {
                context: "dl_sinr_iot",
                detail: format!("projection matrix {mm} is {:?}", a[mm].dim()),
            });
        }
        let mut inner = Array2::<Complex64>::zeros((k, k));
        for j in 0..k {
            for kk in 0..k {
                inner[[j, kk]] = cdot(psi.psi.column(j), a[mm].column(kk));
            }
        }
        for kk in 0..k {
            a_norm[[mm, kk]] = a[mm].column(kk).iter().map(|z| z.norm_sqr()).sum();
            contamination[[mm, kk]] = (0..k)
                .map(|j| beta[[mm, j]] * inner[[j, kk]].norm_sqr())
                .sum();
        }
        pa.push(inner);
    }

    let e = eta.eta();
    let mut sinr = Array1::<f64>::zeros(k);
    for kk in 0..k {
        let gain: f64 = (0..m).map(|mm| e[[mm, kk]].sqrt() * gamma[[mm, kk]]).sum();
        let mut den = 1.0 + rho_d * (0..m)
            .map(|mm| e[[mm, kk]] * gamma[[mm, kk]] * beta[[mm, kk]])
            .sum::<f64>();
        for kp in 0..k {
            if kp == kk {
                continue;
            }
            let projection: f64 = (0..m)
                .map(|mm| e[[mm, kp]] * beta[[mm, kk]] * a_norm[[mm, kp]])
                .sum();
            let coherent: Complex64 = (0..m)
                .map(|mm| pa[mm][[kk, kp]] * (e[[mm, kp]].sqrt() * beta[[mm, kk]]))
                .sum();
            let scattered: f64 = (0..m)
                .map(|mm| e[[mm, kp]] * beta[[mm, kk]] * contamination[[mm, kp]])
                .sum();
            den += rho_d
                * (projection + tau as f64 * rho_p * (coherent.norm_sqr() + scattered));
        }
        sinr[kk] = rho_d * gain * gain / den;
    }
    Ok(sinr)
}
