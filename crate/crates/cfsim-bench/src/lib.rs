//! Deterministic fixtures for the kernel benchmarks: a generated network
//! with channel estimates ready for the SINR and power-control paths.

use cfsim_core::channel::{draw_channel, generate_pilots, receive_pilots};
use cfsim_core::netgen::generate_network;
use cfsim_core::rng::{derive_seed, stream};
use cfsim_core::{LmmseEstimator, NetworkConfig, NetworkRealization};
use ndarray::Array2;
use num_complex::Complex64;

/// One network realization with everything the kernels consume.
pub struct Instance {
    pub config: NetworkConfig,
    pub net: NetworkRealization,
    pub gamma: Array2<f64>,
    pub g_hat: Array2<Complex64>,
    pub rho_u: f64,
    pub rho_d: f64,
}

/// Builds a realization at the given size; identical arguments give an
/// identical instance.
pub fn instance(m: usize, k: usize, tau: usize, area_side_m: f64, seed: u64) -> Instance {
    let config = NetworkConfig::with_dimensions(m, k, tau, area_side_m);
    let snr = config.derived_snr();
    let net = generate_network(&config, seed).expect("network generation");
    let pilots = generate_pilots(k, tau, derive_seed(seed, stream::PILOTS, 0));
    let est = LmmseEstimator::new(&pilots, &net.beta, snr.rho_p).expect("estimator");
    let draw = draw_channel(&net.beta, derive_seed(seed, stream::CHANNEL, 0)).expect("channel");
    let rx = receive_pilots(
        &pilots,
        &draw.g,
        snr.rho_p,
        derive_seed(seed, stream::NOISE, 0),
    )
    .expect("received pilots");
    let g_hat = est.estimate_g(&rx).expect("estimation");
    let gamma = est.gamma().clone();
    Instance {
        config,
        net,
        gamma,
        g_hat,
        rho_u: snr.rho_u,
        rho_d: snr.rho_d,
    }
}
