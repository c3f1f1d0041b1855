//! Pilots, small-scale fading, and the received pilot signal.
//!
//! Pilot sequences are random tau-tuples drawn uniformly on the complex unit
//! sphere (Gaussian draw, normalized). The composite channel between AP `m`
//! and device `k` is `g_mk = sqrt(beta_mk) h_mk` with `h_mk ~ CN(0,1)` fresh
//! per coherence block. During training every AP observes
//! `y_m = sqrt(tau rho_p) * Psi * g_m + w_m` with unit-power noise.
//!
//! Deterministic noise/fading injection variants exist so tests can evaluate
//! the analytically known outputs; production paths always draw fresh
//! randomness from explicit seeds.

use ndarray::Array2;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::rng::{complex_normal, seed_rng};

/// Unit-norm pilot sequences; column `k` is device `k`'s pilot.
#[derive(Debug, Clone)]
pub struct PilotSet {
    /// tau x K complex matrix.
    pub psi: Array2<Complex64>,
}

impl PilotSet {
    pub fn tau(&self) -> usize {
        self.psi.nrows()
    }

    pub fn k(&self) -> usize {
        self.psi.ncols()
    }

    /// Orthonormal pilots: the first K columns of the tau x tau identity.
    /// Requires `tau >= k`.
    pub fn orthonormal(k: usize, tau: usize) -> Result<Self> {
        if tau < k {
            return Err(Error::Dimension {
                context: "PilotSet::orthonormal",
                detail: format!("tau={tau} < K={k}"),
            });
        }
        let mut psi = Array2::<Complex64>::zeros((tau, k));
        for i in 0..k {
            psi[[i, i]] = Complex64::new(1.0, 0.0);
        }
        Ok(Self { psi })
    }
}

/// One small-scale fading draw and the composite channel built from it.
#[derive(Debug, Clone)]
pub struct ChannelDraw {
    /// M x K i.i.d. CN(0,1) small-scale coefficients.
    pub h: Array2<Complex64>,
    /// M x K composite channel `g_mk = sqrt(beta_mk) h_mk`.
    pub g: Array2<Complex64>,
}

/// Received pilot block; column `m` is AP `m`'s tau-symbol observation.
#[derive(Debug, Clone)]
pub struct ReceivedPilots {
    /// tau x M complex matrix.
    pub y: Array2<Complex64>,
}

/// Draws `K` random pilots of length `tau`, each uniform on the unit sphere.
pub fn generate_pilots(k: usize, tau: usize, seed: u64) -> PilotSet {
    let mut rng = seed_rng(seed);
    let mut psi = Array2::<Complex64>::zeros((tau, k));
    for mut col in psi.columns_mut() {
        loop {
            for v in col.iter_mut() {
                *v = complex_normal(&mut rng);
            }
            let norm = col.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
            // a zero draw has probability 0; guard anyway
            if norm > 0.0 {
                col.mapv_inplace(|z| z / norm);
                break;
            }
        }
    }
    PilotSet { psi }
}

/// Builds the composite channel from an explicit small-scale matrix.
pub fn channel_from_h(beta: &Array2<f64>, h: Array2<Complex64>) -> Result<ChannelDraw> {
    if beta.dim() != h.dim() {
        return Err(Error::Dimension {
            context: "channel_from_h",
            detail: format!("beta {:?} vs h {:?}", beta.dim(), h.dim()),
        });
    }
    if !beta.iter().all(|&b| b > 0.0) {
        return Err(Error::Domain("beta entries must be positive".into()));
    }
    let mut g = h.clone();
    for ((m, k), v) in g.indexed_iter_mut() {
        *v *= beta[[m, k]].sqrt();
    }
    Ok(ChannelDraw { h, g })
}

/// Draws a fresh small-scale realization for the given large-scale matrix.
pub fn draw_channel(beta: &Array2<f64>, seed: u64) -> Result<ChannelDraw> {
    let mut rng = seed_rng(seed);
    let h = Array2::from_shape_fn(beta.dim(), |_| complex_normal(&mut rng));
    channel_from_h(beta, h)
}

/// Received pilots with an explicit noise matrix (tau x M): the exact linear
/// model `Y = sqrt(tau rho_p) Psi G^T + W`.
pub fn receive_pilots_with_noise(
    pilots: &PilotSet,
    g: &Array2<Complex64>,
    rho_p: f64,
    w: &Array2<Complex64>,
) -> Result<ReceivedPilots> {
    let tau = pilots.tau();
    let (m, k) = g.dim();
    if pilots.k() != k {
        return Err(Error::Dimension {
            context: "receive_pilots",
            detail: format!("pilots have K={}, channel has K={k}", pilots.k()),
        });
    }
    if w.dim() != (tau, m) {
        return Err(Error::Dimension {
            context: "receive_pilots",
            detail: format!("noise is {:?}, expected ({tau}, {m})", w.dim()),
        });
    }
    let scale = (tau as f64 * rho_p).sqrt();
    // Y = scale * Psi * G^T + W
    let mut y = pilots.psi.dot(&g.t());
    y.mapv_inplace(|z| z * scale);
    y += w;
    Ok(ReceivedPilots { y })
}

/// Received pilots with fresh unit-power complex Gaussian noise.
pub fn receive_pilots(
    pilots: &PilotSet,
    g: &Array2<Complex64>,
    rho_p: f64,
    seed: u64,
) -> Result<ReceivedPilots> {
    let mut rng = seed_rng(seed);
    let w = Array2::from_shape_fn((pilots.tau(), g.nrows()), |_| complex_normal(&mut rng));
    receive_pilots_with_noise(pilots, g, rho_p, &w)
}

/// Zero noise matrix shaped for `receive_pilots_with_noise` (test hook).
pub fn zero_noise(tau: usize, m: usize) -> Array2<Complex64> {
    Array2::zeros((tau, m))
}
