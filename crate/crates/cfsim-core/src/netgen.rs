//! Network geometry and large-scale fading.
//!
//! APs and devices are dropped uniformly on a `D x D` square. Large-scale
//! coefficients are `beta = PL * SF`: a three-slope path-loss model with a
//! COST-231 Hata median attenuation, times log-normal shadowing that is
//! either i.i.d. per link or built from two spatially correlated fields
//! (one over APs, one over devices). Distances optionally wrap around the
//! square (toroidal metric) to avoid boundary effects.

use ndarray::{Array1, Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::CholeskyReal;
use crate::rng::{self, derive_seed, seed_rng, standard_normal};

/// A position on the simulation square, meters.
pub type Point = [f64; 2];

/// Three-slope breakpoints, meters.
pub const PL_D0_M: f64 = 10.0;
pub const PL_D1_M: f64 = 50.0;
/// Antenna heights entering the COST-231 Hata attenuation, meters.
pub const AP_HEIGHT_M: f64 = 15.0;
pub const DEVICE_HEIGHT_M: f64 = 1.65;

/// Shadowing model selection.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShadowModel {
    /// Independent N(0,1) per link.
    Iid,
    /// Two correlated fields mixed as `z_mk = sqrt(delta) a_m + sqrt(1-delta) b_k`,
    /// each field with covariance `2^(-distance/decorr_dist_m)`.
    Correlated { delta: f64, decorr_dist_m: f64 },
}

impl Default for ShadowModel {
    fn default() -> Self {
        ShadowModel::Iid
    }
}

fn default_carrier() -> f64 {
    1.9e9
}
fn default_bandwidth() -> f64 {
    20e6
}
fn default_noise_figure() -> f64 {
    9.0
}
fn default_tau_c() -> usize {
    200
}
fn default_p_u() -> f64 {
    20.0
}
fn default_p_d() -> f64 {
    200.0
}
fn default_sigma_sh() -> f64 {
    8.0
}
fn default_true() -> bool {
    true
}

/// Full description of one simulated network. Field names match the
/// JSON configuration schema one-to-one.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkConfig {
    /// Number of APs.
    #[serde(rename = "M")]
    pub m: usize,
    /// Number of active devices.
    #[serde(rename = "K")]
    pub k: usize,
    /// Total device population the active set is drawn from (metadata only).
    #[serde(rename = "K_bar", default)]
    pub k_bar: Option<usize>,
    /// Side of the square area, meters.
    pub area_side_m: f64,
    /// Pilot length in symbols.
    pub tau: usize,
    /// Coherence interval length in symbols.
    #[serde(default = "default_tau_c")]
    pub tau_c: usize,
    #[serde(default = "default_carrier")]
    pub carrier_hz: f64,
    #[serde(default = "default_bandwidth")]
    pub bandwidth_hz: f64,
    #[serde(default = "default_noise_figure")]
    pub noise_figure_db: f64,
    /// UL maximum transmit power per data symbol, milliwatts.
    #[serde(rename = "P_u_mw", default = "default_p_u")]
    pub p_u_mw: f64,
    /// UL maximum transmit power per pilot symbol, milliwatts.
    #[serde(rename = "P_p_mw", default = "default_p_u")]
    pub p_p_mw: f64,
    /// DL maximum transmit power per AP, milliwatts.
    #[serde(rename = "P_d_mw", default = "default_p_d")]
    pub p_d_mw: f64,
    /// Shadowing standard deviation, dB.
    #[serde(default = "default_sigma_sh")]
    pub sigma_sh_db: f64,
    #[serde(default)]
    pub shadow_model: ShadowModel,
    #[serde(default = "default_true")]
    pub wrap_around: bool,
    /// Master RNG seed.
    #[serde(default)]
    pub seed: u64,
}

/// Normalized SNRs: transmit power over noise power.
#[derive(Debug, Clone, Copy)]
pub struct DerivedSnr {
    pub rho_p: f64,
    pub rho_u: f64,
    pub rho_d: f64,
}

impl NetworkConfig {
    /// A valid baseline configuration; callers override what they need.
    pub fn with_dimensions(m: usize, k: usize, tau: usize, area_side_m: f64) -> Self {
        Self {
            m,
            k,
            k_bar: None,
            area_side_m,
            tau,
            tau_c: default_tau_c(),
            carrier_hz: default_carrier(),
            bandwidth_hz: default_bandwidth(),
            noise_figure_db: default_noise_figure(),
            p_u_mw: default_p_u(),
            p_p_mw: default_p_u(),
            p_d_mw: default_p_d(),
            sigma_sh_db: default_sigma_sh(),
            shadow_model: ShadowModel::default(),
            wrap_around: true,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        if self.m < self.k || self.k < 1 {
            return fail(format!("require M >= K >= 1, got M={} K={}", self.m, self.k));
        }
        if let Some(k_bar) = self.k_bar {
            if k_bar < self.k {
                return fail(format!("require K_bar >= K, got K_bar={k_bar} K={}", self.k));
            }
        }
        if self.tau < 1 {
            return fail("require tau >= 1".into());
        }
        if self.tau_c <= self.tau {
            return fail(format!(
                "require tau_c > tau, got tau_c={} tau={}",
                self.tau_c, self.tau
            ));
        }
        if !(self.area_side_m > 0.0) {
            return fail(format!("require area_side_m > 0, got {}", self.area_side_m));
        }
        for (name, p) in [
            ("P_u_mw", self.p_u_mw),
            ("P_p_mw", self.p_p_mw),
            ("P_d_mw", self.p_d_mw),
        ] {
            if !(p > 0.0) {
                return fail(format!("require {name} > 0, got {p}"));
            }
        }
        if !(self.bandwidth_hz > 0.0) || !(self.carrier_hz > 0.0) {
            return fail("require positive carrier_hz and bandwidth_hz".into());
        }
        if self.sigma_sh_db < 0.0 {
            return fail(format!("require sigma_sh_db >= 0, got {}", self.sigma_sh_db));
        }
        if let ShadowModel::Correlated {
            delta,
            decorr_dist_m,
        } = self.shadow_model
        {
            if !(0.0..=1.0).contains(&delta) {
                return fail(format!("require 0 <= delta <= 1, got {delta}"));
            }
            if !(decorr_dist_m > 0.0) {
                return fail(format!("require decorr_dist_m > 0, got {decorr_dist_m}"));
            }
        }
        Ok(())
    }

    /// Thermal noise power in dBm: `-174 + 10 log10(BW) + NF`.
    pub fn noise_power_dbm(&self) -> f64 {
        -174.0 + 10.0 * self.bandwidth_hz.log10() + self.noise_figure_db
    }

    /// Normalized SNRs `rho = P / P_noise` for pilots, UL data and DL data.
    pub fn derived_snr(&self) -> DerivedSnr {
        let noise_dbm = self.noise_power_dbm();
        let lin = |p_mw: f64| 10f64.powf((10.0 * p_mw.log10() - noise_dbm) / 10.0);
        DerivedSnr {
            rho_p: lin(self.p_p_mw),
            rho_u: lin(self.p_u_mw),
            rho_d: lin(self.p_d_mw),
        }
    }

    /// Pre-log throughput factor `BW (tau_c - tau) / (2 tau_c)` in Hz.
    pub fn throughput_factor(&self) -> f64 {
        self.bandwidth_hz * (self.tau_c - self.tau) as f64 / (2.0 * self.tau_c as f64)
    }
}

/// Geometry plus large-scale fading for one network drop.
#[derive(Debug, Clone)]
pub struct NetworkRealization {
    pub ap_positions: Vec<Point>,
    pub dev_positions: Vec<Point>,
    /// M x K large-scale coefficients, linear scale.
    pub beta: Array2<f64>,
}

/// Euclidean distance under the toroidal wrap-around metric.
pub fn wrap_distance(p: Point, q: Point, d: f64) -> f64 {
    let mut s = 0.0;
    for axis in 0..2 {
        let delta = (p[axis] - q[axis]).abs();
        let delta = delta.min(d - delta);
        s += delta * delta;
    }
    s.sqrt()
}

fn euclid_distance(p: Point, q: Point) -> f64 {
    ((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2)).sqrt()
}

/// COST-231 Hata median attenuation in dB for the pinned antenna heights.
pub fn cost231_attenuation_db(carrier_hz: f64) -> f64 {
    let f_mhz = carrier_hz / 1e6;
    let lf = f_mhz.log10();
    46.3 + 33.9 * lf - 13.82 * AP_HEIGHT_M.log10() - (1.1 * lf - 0.7) * DEVICE_HEIGHT_M
        + (1.56 * lf - 0.8)
}

/// Three-slope path loss (linear gain) with explicit attenuation constant.
///
/// Slopes: flat plateau below `d0`, 20 dB/decade between `d0` and `d1`,
/// 35 dB/decade beyond `d1`; continuous at both breakpoints. Distances in
/// the dB formula are in kilometers.
pub fn path_loss_with(d_m: f64, l_db: f64) -> Result<f64> {
    if d_m < 0.0 {
        return Err(Error::Domain(format!("negative distance {d_m}")));
    }
    let d0_km = PL_D0_M / 1000.0;
    let d1_km = PL_D1_M / 1000.0;
    let d_km = d_m / 1000.0;
    let pl_db = if d_m <= PL_D0_M {
        -l_db - 15.0 * d1_km.log10() - 20.0 * d0_km.log10()
    } else if d_m <= PL_D1_M {
        -l_db - 15.0 * d1_km.log10() - 20.0 * d_km.log10()
    } else {
        -l_db - 35.0 * d_km.log10()
    };
    Ok(10f64.powf(pl_db / 10.0))
}

/// Three-slope path loss at the default 1.9 GHz carrier.
pub fn path_loss(d_m: f64) -> Result<f64> {
    path_loss_with(d_m, cost231_attenuation_db(default_carrier()))
}

/// Exponentially decaying field covariance `2^(-dist/decorr)` over `points`.
fn field_covariance(
    points: &[Point],
    decorr_dist_m: f64,
    dist: &dyn Fn(Point, Point) -> f64,
) -> Array2<f64> {
    let n = points.len();
    Array2::from_shape_fn((n, n), |(i, j)| {
        2f64.powf(-dist(points[i], points[j]) / decorr_dist_m)
    })
}

/// Samples one zero-mean unit-variance field with the given covariance.
fn sample_field(cov: ArrayView2<'_, f64>, rng: &mut rng::Rng) -> Result<Array1<f64>> {
    let (chol, _) = CholeskyReal::factor_with_jitter(cov, 1e-10, 5)?;
    let white = Array1::from_shape_fn(cov.nrows(), |_| standard_normal(rng));
    Ok(chol.lower_times(white.view()))
}

/// Per-link shadow gains `SF[m][k] = 10^(sigma_sh z_mk / 10)` with the
/// two-component correlated field construction.
pub fn correlated_shadowing(
    ap_positions: &[Point],
    dev_positions: &[Point],
    sigma_sh_db: f64,
    delta: f64,
    decorr_dist_m: f64,
    wrap_side: Option<f64>,
    seed: u64,
) -> Result<Array2<f64>> {
    if !(0.0..=1.0).contains(&delta) {
        return Err(Error::Domain(format!("delta {delta} outside [0,1]")));
    }
    if !(decorr_dist_m > 0.0) {
        return Err(Error::Domain(format!(
            "decorr_dist_m {decorr_dist_m} must be positive"
        )));
    }
    let dist: Box<dyn Fn(Point, Point) -> f64> = match wrap_side {
        Some(d) => Box::new(move |p, q| wrap_distance(p, q, d)),
        None => Box::new(euclid_distance),
    };
    let mut rng = seed_rng(seed);
    let a = sample_field(
        field_covariance(ap_positions, decorr_dist_m, dist.as_ref()).view(),
        &mut rng,
    )?;
    let b = sample_field(
        field_covariance(dev_positions, decorr_dist_m, dist.as_ref()).view(),
        &mut rng,
    )?;
    let (wa, wb) = (delta.sqrt(), (1.0 - delta).sqrt());
    Ok(Array2::from_shape_fn(
        (ap_positions.len(), dev_positions.len()),
        |(m, k)| 10f64.powf(sigma_sh_db * (wa * a[m] + wb * b[k]) / 10.0),
    ))
}

/// I.i.d. per-link shadow gains.
fn iid_shadowing(m: usize, k: usize, sigma_sh_db: f64, seed: u64) -> Array2<f64> {
    let mut rng = seed_rng(seed);
    Array2::from_shape_fn((m, k), |_| {
        10f64.powf(sigma_sh_db * standard_normal(&mut rng) / 10.0)
    })
}

/// Draws geometry and large-scale fading for one realization.
pub fn generate_network(config: &NetworkConfig, seed: u64) -> Result<NetworkRealization> {
    config.validate()?;
    let d = config.area_side_m;
    let mut geo_rng = seed_rng(derive_seed(seed, rng::stream::GEOMETRY, 0));
    let uniform_point = |rng: &mut rng::Rng| -> Point {
        use rand::Rng as _;
        [rng.random::<f64>() * d, rng.random::<f64>() * d]
    };
    let ap_positions: Vec<Point> = (0..config.m).map(|_| uniform_point(&mut geo_rng)).collect();
    let dev_positions: Vec<Point> = (0..config.k).map(|_| uniform_point(&mut geo_rng)).collect();

    let shadow_seed = derive_seed(seed, rng::stream::SHADOWING, 0);
    let sf = if config.sigma_sh_db == 0.0 {
        Array2::ones((config.m, config.k))
    } else {
        match config.shadow_model {
            ShadowModel::Iid => iid_shadowing(config.m, config.k, config.sigma_sh_db, shadow_seed),
            ShadowModel::Correlated {
                delta,
                decorr_dist_m,
            } => correlated_shadowing(
                &ap_positions,
                &dev_positions,
                config.sigma_sh_db,
                delta,
                decorr_dist_m,
                config.wrap_around.then_some(d),
                shadow_seed,
            )?,
        }
    };

    let l_db = cost231_attenuation_db(config.carrier_hz);
    let mut beta = Array2::<f64>::zeros((config.m, config.k));
    for (m, ap) in ap_positions.iter().enumerate() {
        for (k, dev) in dev_positions.iter().enumerate() {
            let dist = if config.wrap_around {
                wrap_distance(*ap, *dev, d)
            } else {
                euclid_distance(*ap, *dev)
            };
            beta[[m, k]] = path_loss_with(dist, l_db)? * sf[[m, k]];
        }
    }
    Ok(NetworkRealization {
        ap_positions,
        dev_positions,
        beta,
    })
}
