//! Experiment orchestration: seeded Monte-Carlo loops over network drops,
//! per-experiment pipelines, and artifact emission.
//!
//! Every run writes the same four files into the output directory:
//! `rates.csv` (one row per sample), `cdf.csv` (empirical distribution of
//! the sample values), `ee.json` (energy-efficiency scalars, empty when the
//! experiment has none), and `trace.json` (metadata echo plus per-experiment
//! diagnostics). Runs are reproducible: the master seed expands into one
//! seed per realization through a counter-based split, and those seeds are
//! recorded in the metadata. Experiments whose natural per-sample metric is
//! not a rate (the covariance probe, the interference-function checks)
//! reuse the `rate` column for their scalar statistic.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use ndarray::Array1;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::channel::{draw_channel, generate_pilots, receive_pilots, PilotSet};
use crate::dl_power::{maxmin_bisection, maxmin_fixed_p, uniform_power};
use crate::dl_sinr::DlPowerMatrix;
use crate::error::{Error, Result};
use crate::estimator::{estimate_covariance_probe, LmmseEstimator};
use crate::mlp::{top_khat, MlpModel};
use crate::netgen::{generate_network, NetworkConfig, NetworkRealization};
use crate::rng::{derive_seed, stream};
use crate::ul_power::{
    interference_function_probe, maxmin_exact, maxmin_rm, target_exact, target_rm,
    ul_energy_efficiency, ControlWeights, DropRule, IfEngine, PcResult,
};
use crate::ul_sinr::{achievable_rate_mc, exact_sinr_mmse, rm_ap1, rm_ap2, UlPowerVector};

/// The experiment recipes the batch runner knows how to execute.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentId {
    /// Full-power uplink rate distribution under a selectable SINR engine.
    UlRateCdf,
    /// Uplink max-min power control, exact or deterministic engine.
    UlMaxmin,
    /// Uplink target-SINR control with the full-power energy baseline.
    UlTargetEe,
    /// Downlink max-min via cone-feasibility bisection.
    DlMaxmin,
    /// Downlink power prediction by the trained network, then max-min with
    /// the predicted per-AP budgets.
    DlNn,
    /// Fully local downlink control: uniform coefficients under predicted
    /// budgets, with the uniform full-power baseline alongside.
    DlScalable,
    /// Estimate-covariance decay with growing pilot length.
    Theorem1Probe,
    /// Interference-function property checks on random instances.
    IfProperties,
}

impl ExperimentId {
    pub const ALL: [ExperimentId; 8] = [
        ExperimentId::UlRateCdf,
        ExperimentId::UlMaxmin,
        ExperimentId::UlTargetEe,
        ExperimentId::DlMaxmin,
        ExperimentId::DlNn,
        ExperimentId::DlScalable,
        ExperimentId::Theorem1Probe,
        ExperimentId::IfProperties,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            ExperimentId::UlRateCdf => "ul-rate-cdf",
            ExperimentId::UlMaxmin => "ul-maxmin",
            ExperimentId::UlTargetEe => "ul-target-ee",
            ExperimentId::DlMaxmin => "dl-maxmin",
            ExperimentId::DlNn => "dl-nn",
            ExperimentId::DlScalable => "dl-scalable",
            ExperimentId::Theorem1Probe => "theorem1-probe",
            ExperimentId::IfProperties => "if-properties",
        }
    }
}

impl fmt::Display for ExperimentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ExperimentId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .iter()
            .copied()
            .find(|id| id.as_str() == s)
            .ok_or_else(|| {
                Error::Config(format!(
                    "unknown experiment '{s}'; expected one of {}",
                    Self::ALL.map(|id| id.as_str()).join(", ")
                ))
            })
    }
}

/// Uplink rate engine for [`ExperimentId::UlRateCdf`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum UlRateEngine {
    /// Monte-Carlo average of the exact receiver SINR.
    #[default]
    ExactMc,
    /// Deterministic approximation with one shared resolvent.
    RmAp1,
    /// Deterministic approximation with per-device resolvents.
    RmAp2,
}

/// Uplink power-control engine.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum UlPowerEngine {
    MaxminExact,
    #[default]
    MaxminRm,
    TargetExact,
    TargetRm,
    FullPower,
}

/// Downlink row engine for [`ExperimentId::DlScalable`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DlPowerEngine {
    MaxminOpt,
    FixedPNn,
    #[default]
    UniformNn,
    UniformFull,
}

/// How target-SINR control chooses its sacrificial devices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DropKind {
    #[default]
    BelowTarget,
    LargestPower,
}

macro_rules! parse_engine_from_kebab {
    ($($ty:ty),+ $(,)?) => {$(
        impl FromStr for $ty {
            type Err = Error;

            fn from_str(s: &str) -> Result<Self> {
                serde_json::from_value(Value::String(s.to_string())).map_err(|_| {
                    Error::Config(format!(
                        "unknown {} '{s}'",
                        stringify!($ty)
                    ))
                })
            }
        }
    )+};
}

parse_engine_from_kebab!(UlRateEngine, UlPowerEngine, DlPowerEngine, DropKind);

/// Engine switches shared by all experiments; each recipe reads the fields
/// it cares about.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EngineSelection {
    pub ul_rate: UlRateEngine,
    pub ul_power: UlPowerEngine,
    /// Per-device target in bits/s/Hz; the SINR target is `2^r - 1`.
    pub target_rate: f64,
    pub drop: DropKind,
    /// Device count sacrificed under [`DropKind::LargestPower`].
    pub n_drop: usize,
    /// Rate weight handed to sacrificed devices.
    pub u_p: f64,
    pub dl_power: DlPowerEngine,
    pub rel_tol: f64,
    pub feas_tol: f64,
    pub nn_model: Option<PathBuf>,
    /// Strongest-coefficient count fed to the network when training.
    pub khat: usize,
    /// Fixed-point tolerance for iterative engines.
    pub eps: f64,
    pub max_iter: usize,
}

impl Default for EngineSelection {
    fn default() -> Self {
        Self {
            ul_rate: UlRateEngine::default(),
            ul_power: UlPowerEngine::default(),
            target_rate: 0.1,
            drop: DropKind::default(),
            n_drop: 1,
            u_p: 0.0,
            dl_power: DlPowerEngine::default(),
            rel_tol: 1e-3,
            feas_tol: 1e-6,
            nn_model: None,
            khat: 4,
            eps: 1e-9,
            max_iter: 2000,
        }
    }
}

/// A fully specified batch run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub experiment: ExperimentId,
    pub config: NetworkConfig,
    #[serde(default)]
    pub engines: EngineSelection,
    pub n_realizations: usize,
    /// Small-scale draws per realization; probe experiments reuse this as
    /// their trial or point count.
    pub n_small_scale_draws: usize,
    pub out_dir: PathBuf,
    /// Master seed; defaults to the network config seed.
    #[serde(default)]
    pub seed: Option<u64>,
}

impl ExperimentSpec {
    pub fn new(experiment: ExperimentId, config: NetworkConfig, out_dir: impl Into<PathBuf>) -> Self {
        Self {
            experiment,
            config,
            engines: EngineSelection::default(),
            n_realizations: 50,
            n_small_scale_draws: 200,
            out_dir: out_dir.into(),
            seed: None,
        }
    }

    pub fn master_seed(&self) -> u64 {
        self.seed.unwrap_or(self.config.seed)
    }

    pub fn validate(&self) -> Result<()> {
        self.config.validate()?;
        if self.n_realizations == 0 {
            return Err(Error::Empty("realization count"));
        }
        if self.n_small_scale_draws == 0 {
            return Err(Error::Empty("draw count"));
        }
        let e = &self.engines;
        if !(e.target_rate > 0.0 && e.target_rate.is_finite()) {
            return Err(Error::Config(format!(
                "target_rate = {} must be positive",
                e.target_rate
            )));
        }
        if !(0.0..1.0).contains(&e.rel_tol) || e.rel_tol <= 0.0 {
            return Err(Error::Config(format!("rel_tol = {} out of (0,1)", e.rel_tol)));
        }
        if e.feas_tol <= 0.0 || !e.feas_tol.is_finite() {
            return Err(Error::Config(format!("feas_tol = {} must be positive", e.feas_tol)));
        }
        if matches!(
            self.experiment,
            ExperimentId::DlNn | ExperimentId::DlScalable
        ) {
            match &e.nn_model {
                Some(path) if path.is_file() => {}
                Some(path) => {
                    return Err(Error::Config(format!(
                        "model file {} does not exist",
                        path.display()
                    )))
                }
                None => {
                    return Err(Error::Config(format!(
                        "experiment {} needs --nn-model",
                        self.experiment
                    )))
                }
            }
        }
        Ok(())
    }
}

/// One sample row of `rates.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateRow {
    pub device: usize,
    pub realization: usize,
    /// bits/s/Hz, or the experiment's scalar statistic.
    pub rate: f64,
    /// bits/s after the pilot-overhead factor; zero when not a rate.
    pub throughput: f64,
}

/// One point of the empirical CDF.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CdfPoint {
    pub value: f64,
    pub fraction: f64,
}

/// Run provenance echoed into `trace.json`.
#[derive(Debug, Clone, Serialize)]
pub struct RunMetadata {
    pub experiment: ExperimentId,
    pub version: String,
    pub master_seed: u64,
    pub realization_seeds: Vec<u64>,
    pub n_realizations: usize,
    pub n_small_scale_draws: usize,
    pub config: NetworkConfig,
    pub engines: EngineSelection,
}

/// Everything one run produced, as written to disk.
#[derive(Debug, Clone)]
pub struct ReportBundle {
    pub rows: Vec<RateRow>,
    pub cdf: Vec<CdfPoint>,
    /// Named energy-efficiency scalars; all strictly positive.
    pub ee: BTreeMap<String, f64>,
    pub trace: Value,
    pub metadata: RunMetadata,
}

impl ReportBundle {
    /// Writes `rates.csv`, `cdf.csv`, `ee.json`, and `trace.json`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        let mut rates = csv::Writer::from_path(dir.join("rates.csv"))?;
        for row in &self.rows {
            rates.serialize(row)?;
        }
        rates.flush()?;
        let mut cdf = csv::Writer::from_path(dir.join("cdf.csv"))?;
        for point in &self.cdf {
            cdf.serialize(point)?;
        }
        cdf.flush()?;
        fs::write(
            dir.join("ee.json"),
            format!("{}\n", serde_json::to_string_pretty(&self.ee)?),
        )?;
        let trace_file = json!({ "metadata": self.metadata, "trace": self.trace });
        fs::write(
            dir.join("trace.json"),
            format!("{}\n", serde_json::to_string_pretty(&trace_file)?),
        )?;
        Ok(())
    }
}

/// Empirical CDF of the samples: stable sort, fractions `i/N`.
pub fn emit_cdf(samples: &[f64]) -> Result<Vec<CdfPoint>> {
    if samples.is_empty() {
        return Err(Error::Domain("cannot build a CDF from zero samples".into()));
    }
    if samples.iter().any(|v| !v.is_finite()) {
        return Err(Error::Domain("CDF samples must be finite".into()));
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = sorted.len() as f64;
    Ok(sorted
        .into_iter()
        .enumerate()
        .map(|(i, value)| CdfPoint {
            value,
            fraction: (i + 1) as f64 / n,
        })
        .collect())
}

fn rate_from_sinr(sinr: &Array1<f64>) -> Array1<f64> {
    sinr.mapv(|s| (1.0 + s).log2())
}

struct Instance {
    seed: u64,
    net: NetworkRealization,
    pilots: PilotSet,
    est: LmmseEstimator,
}

fn prepare(config: &NetworkConfig, master: u64, index: usize) -> Result<Instance> {
    let seed = derive_seed(master, stream::REALIZATION, index as u64);
    let net = generate_network(config, seed)?;
    let pilots = generate_pilots(config.k, config.tau, derive_seed(seed, stream::PILOTS, 0));
    let est = LmmseEstimator::new(&pilots, &net.beta, config.derived_snr().rho_p)?;
    Ok(Instance {
        seed,
        net,
        pilots,
        est,
    })
}

/// One channel-estimate realization for engines that need instantaneous
/// estimates rather than statistics alone.
fn estimate_once(inst: &Instance, rho_p: f64) -> Result<ndarray::Array2<Complex64>> {
    let draw = draw_channel(&inst.net.beta, derive_seed(inst.seed, stream::CHANNEL, 0))?;
    let received = receive_pilots(
        &inst.pilots,
        &draw.g,
        rho_p,
        derive_seed(inst.seed, stream::NOISE, 0),
    )?;
    inst.est.estimate_g(&received)
}

struct Outcome {
    rows: Vec<RateRow>,
    ee: BTreeMap<String, f64>,
    trace: Value,
    realization_seeds: Vec<u64>,
}

/// Executes the selected experiment and writes its artifact files.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<ReportBundle> {
    spec.validate()?;
    let master = spec.master_seed();
    let outcome = match spec.experiment {
        ExperimentId::UlRateCdf => ul_rate_cdf(spec, master),
        ExperimentId::UlMaxmin => ul_maxmin(spec, master),
        ExperimentId::UlTargetEe => ul_target_ee(spec, master),
        ExperimentId::DlMaxmin => dl_maxmin(spec, master),
        ExperimentId::DlNn => dl_nn(spec, master),
        ExperimentId::DlScalable => dl_scalable(spec, master),
        ExperimentId::Theorem1Probe => theorem1_probe(spec, master),
        ExperimentId::IfProperties => if_properties(spec, master),
    }?;
    let samples: Vec<f64> = outcome.rows.iter().map(|r| r.rate).collect();
    let bundle = ReportBundle {
        cdf: emit_cdf(&samples)?,
        rows: outcome.rows,
        ee: outcome.ee,
        trace: outcome.trace,
        metadata: RunMetadata {
            experiment: spec.experiment,
            version: env!("CARGO_PKG_VERSION").to_string(),
            master_seed: master,
            realization_seeds: outcome.realization_seeds,
            n_realizations: spec.n_realizations,
            n_small_scale_draws: spec.n_small_scale_draws,
            config: spec.config.clone(),
            engines: spec.engines.clone(),
        },
    };
    bundle.write(&spec.out_dir)?;
    Ok(bundle)
}

fn push_rates(
    rows: &mut Vec<RateRow>,
    realization: usize,
    rate: &Array1<f64>,
    factor: f64,
) {
    for (device, &r) in rate.iter().enumerate() {
        rows.push(RateRow {
            device,
            realization,
            rate: r,
            throughput: factor * r,
        });
    }
}

fn ul_rate_cdf(spec: &ExperimentSpec, master: u64) -> Result<Outcome> {
    let cfg = &spec.config;
    let snr = cfg.derived_snr();
    let factor = cfg.throughput_factor();
    let eta = UlPowerVector::full(cfg.k);
    let mut rows = Vec::with_capacity(spec.n_realizations * cfg.k);
    let mut seeds = Vec::with_capacity(spec.n_realizations);
    for i in 0..spec.n_realizations {
        let inst = prepare(cfg, master, i)?;
        seeds.push(inst.seed);
        let rate = match spec.engines.ul_rate {
            UlRateEngine::ExactMc => {
                achievable_rate_mc(
                    cfg,
                    &inst.net,
                    &inst.pilots,
                    &eta,
                    spec.n_small_scale_draws,
                    inst.seed,
                )?
                .rate
            }
            UlRateEngine::RmAp1 => {
                let (sinr, _) = rm_ap1(
                    inst.est.gamma(),
                    &inst.net.beta,
                    &eta,
                    snr.rho_u,
                    spec.engines.eps,
                    spec.engines.max_iter,
                )?;
                rate_from_sinr(&sinr)
            }
            UlRateEngine::RmAp2 => {
                let (sinr, _) = rm_ap2(
                    inst.est.gamma(),
                    &inst.net.beta,
                    &eta,
                    snr.rho_u,
                    spec.engines.eps,
                    spec.engines.max_iter,
                )?;
                rate_from_sinr(&sinr)
            }
        };
        push_rates(&mut rows, i, &rate, factor);
    }
    Ok(Outcome {
        rows,
        ee: BTreeMap::new(),
        trace: json!({ "engine": spec.engines.ul_rate }),
        realization_seeds: seeds,
    })
}

fn ul_maxmin(spec: &ExperimentSpec, master: u64) -> Result<Outcome> {
    let cfg = &spec.config;
    let snr = cfg.derived_snr();
    let factor = cfg.throughput_factor();
    let weights = ControlWeights::uniform(cfg.k);
    let mut rows = Vec::with_capacity(spec.n_realizations * cfg.k);
    let mut seeds = Vec::new();
    let mut traces = Vec::new();
    for i in 0..spec.n_realizations {
        let inst = prepare(cfg, master, i)?;
        seeds.push(inst.seed);
        let pc = match spec.engines.ul_power {
            UlPowerEngine::MaxminExact => {
                let g_hat = estimate_once(&inst, snr.rho_p)?;
                maxmin_exact(
                    &g_hat,
                    inst.est.gamma(),
                    &inst.net.beta,
                    &weights,
                    snr.rho_u,
                    spec.engines.eps,
                    spec.engines.max_iter,
                )?
            }
            UlPowerEngine::MaxminRm => maxmin_rm(
                inst.est.gamma(),
                &inst.net.beta,
                &weights,
                snr.rho_u,
                spec.engines.eps,
                spec.engines.max_iter,
            )?,
            other => {
                return Err(Error::Config(format!(
                    "ul-maxmin needs a max-min engine, got {other:?}"
                )))
            }
        };
        let rate = rate_from_sinr(&pc.achieved);
        push_rates(&mut rows, i, &rate, factor);
        traces.push(json!({
            "seed": inst.seed,
            "iterations": pc.iterations,
            "converged": pc.converged,
            "alpha": pc.alpha_final,
            "eta_max": pc.eta.eta().iter().cloned().fold(f64::MIN, f64::max),
        }));
    }
    Ok(Outcome {
        rows,
        ee: BTreeMap::new(),
        trace: json!({ "engine": spec.engines.ul_power, "realizations": traces }),
        realization_seeds: seeds,
    })
}

fn ul_target_ee(spec: &ExperimentSpec, master: u64) -> Result<Outcome> {
    let cfg = &spec.config;
    let snr = cfg.derived_snr();
    let factor = cfg.throughput_factor();
    let s_t = 2f64.powf(spec.engines.target_rate) - 1.0;
    let nu = Array1::ones(cfg.k);
    let full = UlPowerVector::full(cfg.k);
    let rule = || match spec.engines.drop {
        DropKind::BelowTarget => DropRule::BelowTarget,
        DropKind::LargestPower => DropRule::LargestPower(spec.engines.n_drop),
    };
    let mut rows = Vec::with_capacity(spec.n_realizations * cfg.k);
    let mut seeds = Vec::new();
    let mut traces = Vec::new();
    let mut ee_ctrl_sum = 0.0;
    let mut ee_full_sum = 0.0;
    for i in 0..spec.n_realizations {
        let inst = prepare(cfg, master, i)?;
        seeds.push(inst.seed);
        let exact_engine = matches!(spec.engines.ul_power, UlPowerEngine::TargetExact);
        let (pc, full_sinr): (PcResult, Array1<f64>) = if exact_engine {
            let g_hat = estimate_once(&inst, snr.rho_p)?;
            let pc = target_exact(
                &g_hat,
                inst.est.gamma(),
                &inst.net.beta,
                &nu,
                snr.rho_u,
                s_t,
                spec.engines.eps,
                spec.engines.max_iter,
                spec.engines.u_p,
                rule(),
            )?;
            let full_sinr =
                exact_sinr_mmse(&g_hat, inst.est.gamma(), &inst.net.beta, &full, snr.rho_u)?;
            (pc, full_sinr)
        } else {
            let pc = target_rm(
                inst.est.gamma(),
                &inst.net.beta,
                &nu,
                snr.rho_u,
                s_t,
                spec.engines.eps,
                spec.engines.max_iter,
                spec.engines.u_p,
                rule(),
            )?;
            let (full_sinr, _) = rm_ap1(
                inst.est.gamma(),
                &inst.net.beta,
                &full,
                snr.rho_u,
                spec.engines.eps,
                spec.engines.max_iter,
            )?;
            (pc, full_sinr)
        };
        let rate = rate_from_sinr(&pc.achieved);
        let ee_ctrl = ul_energy_efficiency(rate.view(), &pc.eta, cfg.p_u_mw)?;
        let full_rate = rate_from_sinr(&full_sinr);
        let ee_full = ul_energy_efficiency(full_rate.view(), &full, cfg.p_u_mw)?;
        push_rates(&mut rows, i, &rate, factor);
        ee_ctrl_sum += ee_ctrl;
        ee_full_sum += ee_full;
        traces.push(json!({
            "seed": inst.seed,
            "dropped": pc.dropped,
            "iterations": pc.iterations,
            "ee_controlled": ee_ctrl,
            "ee_full_power": ee_full,
        }));
    }
    let n = spec.n_realizations as f64;
    let mut ee = BTreeMap::new();
    ee.insert("ee_controlled".to_string(), ee_ctrl_sum / n);
    ee.insert("ee_full_power".to_string(), ee_full_sum / n);
    ee.insert("ratio".to_string(), ee_ctrl_sum / ee_full_sum);
    Ok(Outcome {
        rows,
        ee,
        trace: json!({
            "engine": spec.engines.ul_power,
            "sinr_target": s_t,
            "realizations": traces,
        }),
        realization_seeds: seeds,
    })
}

/// Downlink rates are always evaluated under the random-pilot SINR form,
/// whatever engine produced the coefficients.
fn dl_rates(inst: &Instance, eta: &DlPowerMatrix, cfg: &NetworkConfig) -> Result<Array1<f64>> {
    let snr = cfg.derived_snr();
    let sinr = crate::dl_sinr::dl_sinr_iot(
        eta,
        inst.est.gamma(),
        &inst.net.beta,
        inst.est.a(),
        &inst.pilots,
        snr.rho_d,
        snr.rho_p,
        cfg.tau,
    )?;
    Ok(rate_from_sinr(&sinr))
}

/// Sum rate over radiated downlink power, mirroring the uplink definition.
fn dl_energy_efficiency(rates: &Array1<f64>, eta: &DlPowerMatrix, p_d_mw: f64) -> Result<f64> {
    let total_power = eta.p().sum();
    if total_power <= 0.0 {
        return Err(Error::Domain(
            "downlink energy efficiency undefined at zero radiated power".into(),
        ));
    }
    Ok(rates.sum() / (p_d_mw * total_power))
}

fn dl_maxmin(spec: &ExperimentSpec, master: u64) -> Result<Outcome> {
    let cfg = &spec.config;
    let snr = cfg.derived_snr();
    let factor = cfg.throughput_factor();
    let mut rows = Vec::with_capacity(spec.n_realizations * cfg.k);
    let mut seeds = Vec::new();
    let mut traces = Vec::new();
    let mut ee_sum = 0.0;
    for i in 0..spec.n_realizations {
        let inst = prepare(cfg, master, i)?;
        seeds.push(inst.seed);
        let bis = maxmin_bisection(
            inst.est.gamma(),
            &inst.net.beta,
            snr.rho_d,
            spec.engines.rel_tol,
            spec.engines.feas_tol,
        )?;
        let rate = dl_rates(&inst, &bis.eta, cfg)?;
        ee_sum += dl_energy_efficiency(&rate, &bis.eta, cfg.p_d_mw)?;
        push_rates(&mut rows, i, &rate, factor);
        traces.push(json!({
            "seed": inst.seed,
            "t_star": bis.t_star,
            "bisection_steps": bis.bisection_steps,
            "total_power": bis.p_opt.sum(),
            "steps": bis.trace,
        }));
    }
    let mut ee = BTreeMap::new();
    ee.insert("ee_maxmin".to_string(), ee_sum / spec.n_realizations as f64);
    Ok(Outcome {
        rows,
        ee,
        trace: json!({ "realizations": traces }),
        realization_seeds: seeds,
    })
}

fn load_model(spec: &ExperimentSpec) -> Result<MlpModel> {
    let path = spec.engines.nn_model.as_ref().expect("validated");
    MlpModel::from_json(&fs::read_to_string(path)?)
}

fn predict_powers(model: &MlpModel, net: &NetworkRealization) -> Result<Array1<f64>> {
    let m = net.beta.nrows();
    let mut p = Array1::zeros(m);
    for mm in 0..m {
        let strongest = top_khat(net.beta.row(mm), model.khat())?;
        p[mm] = model.forward(strongest.view())?;
    }
    Ok(p)
}

fn dl_nn(spec: &ExperimentSpec, master: u64) -> Result<Outcome> {
    let cfg = &spec.config;
    let snr = cfg.derived_snr();
    let factor = cfg.throughput_factor();
    let model = load_model(spec)?;
    let mut rows = Vec::with_capacity(spec.n_realizations * cfg.k);
    let mut seeds = Vec::new();
    let mut traces = Vec::new();
    let mut ee_sum = 0.0;
    for i in 0..spec.n_realizations {
        let inst = prepare(cfg, master, i)?;
        seeds.push(inst.seed);
        let p_nn = predict_powers(&model, &inst.net)?;
        let fixed = maxmin_fixed_p(
            p_nn.view(),
            inst.est.gamma(),
            &inst.net.beta,
            snr.rho_d,
            spec.engines.rel_tol,
        )?;
        let opt = maxmin_bisection(
            inst.est.gamma(),
            &inst.net.beta,
            snr.rho_d,
            spec.engines.rel_tol,
            spec.engines.feas_tol,
        )?;
        let rate = dl_rates(&inst, &fixed.eta, cfg)?;
        ee_sum += dl_energy_efficiency(&rate, &fixed.eta, cfg.p_d_mw)?;
        push_rates(&mut rows, i, &rate, factor);
        traces.push(json!({
            "seed": inst.seed,
            "min_rate_nn": (1.0 + fixed.min_sinr).log2(),
            "min_rate_opt": (1.0 + opt.t_star).log2(),
            "predicted_total_power": p_nn.sum(),
            "optimal_total_power": opt.p_opt.sum(),
        }));
    }
    let mut ee = BTreeMap::new();
    ee.insert("ee_fixed_p_nn".to_string(), ee_sum / spec.n_realizations as f64);
    Ok(Outcome {
        rows,
        ee,
        trace: json!({ "khat": model.khat(), "realizations": traces }),
        realization_seeds: seeds,
    })
}

fn dl_scalable(spec: &ExperimentSpec, master: u64) -> Result<Outcome> {
    let cfg = &spec.config;
    let factor = cfg.throughput_factor();
    let model = load_model(spec)?;
    let full = Array1::ones(cfg.m);
    let mut rows = Vec::with_capacity(spec.n_realizations * cfg.k);
    let mut seeds = Vec::new();
    let mut traces = Vec::new();
    let mut ee_nn_sum = 0.0;
    let mut ee_full_sum = 0.0;
    for i in 0..spec.n_realizations {
        let inst = prepare(cfg, master, i)?;
        seeds.push(inst.seed);
        let p_nn = predict_powers(&model, &inst.net)?;
        let eta_nn = uniform_power(p_nn.view(), inst.est.gamma())?;
        let eta_full = uniform_power(full.view(), inst.est.gamma())?;
        let rate_nn = dl_rates(&inst, &eta_nn, cfg)?;
        let rate_full = dl_rates(&inst, &eta_full, cfg)?;
        let ee_nn = dl_energy_efficiency(&rate_nn, &eta_nn, cfg.p_d_mw)?;
        let ee_full = dl_energy_efficiency(&rate_full, &eta_full, cfg.p_d_mw)?;
        ee_nn_sum += ee_nn;
        ee_full_sum += ee_full;
        let rate = match spec.engines.dl_power {
            DlPowerEngine::UniformFull => &rate_full,
            _ => &rate_nn,
        };
        push_rates(&mut rows, i, rate, factor);
        traces.push(json!({
            "seed": inst.seed,
            "predicted_total_power": p_nn.sum(),
            "ee_uniform_nn": ee_nn,
            "ee_uniform_full": ee_full,
        }));
    }
    let mut ee = BTreeMap::new();
    let n = spec.n_realizations as f64;
    ee.insert("ee_uniform_nn".to_string(), ee_nn_sum / n);
    ee.insert("ee_uniform_full".to_string(), ee_full_sum / n);
    ee.insert("ratio".to_string(), ee_nn_sum / ee_full_sum);
    Ok(Outcome {
        rows,
        ee,
        trace: json!({ "khat": model.khat(), "realizations": traces }),
        realization_seeds: seeds,
    })
}

fn theorem1_probe(spec: &ExperimentSpec, master: u64) -> Result<Outcome> {
    let mut cfg = spec.config.clone();
    cfg.seed = master;
    let tau_lo = cfg.tau;
    let tau_hi = 8 * tau_lo;
    let probes = estimate_covariance_probe(&cfg, &[tau_lo, tau_hi], spec.n_small_scale_draws)?;
    let rows: Vec<RateRow> = probes
        .iter()
        .map(|p| RateRow {
            device: 0,
            realization: p.tau,
            rate: p.mean_abs_normalized_cov.unwrap_or(0.0),
            throughput: 0.0,
        })
        .collect();
    let detail: Vec<Value> = probes
        .iter()
        .map(|p| json!({ "tau": p.tau, "mean_abs_normalized_cov": p.mean_abs_normalized_cov }))
        .collect();
    let ratio = match (
        probes.first().and_then(|p| p.mean_abs_normalized_cov),
        probes.last().and_then(|p| p.mean_abs_normalized_cov),
    ) {
        (Some(lo), Some(hi)) if lo > 0.0 => Some(hi / lo),
        _ => None,
    };
    Ok(Outcome {
        rows,
        ee: BTreeMap::new(),
        trace: json!({
            "trials": spec.n_small_scale_draws,
            "probes": detail,
            "decay_ratio": ratio,
        }),
        realization_seeds: vec![master],
    })
}

fn if_properties(spec: &ExperimentSpec, master: u64) -> Result<Outcome> {
    let cfg = &spec.config;
    let snr = cfg.derived_snr();
    let weights = ControlWeights::uniform(cfg.k);
    let mut rows = Vec::new();
    let mut seeds = Vec::new();
    let mut traces = Vec::new();
    for i in 0..spec.n_realizations {
        let inst = prepare(cfg, master, i)?;
        seeds.push(inst.seed);
        let g_hat = estimate_once(&inst, snr.rho_p)?;
        let engines: [(&str, IfEngine<'_>); 2] =
            [("exact", IfEngine::Exact { g_hat: &g_hat }), ("rm", IfEngine::Rm)];
        for (device, (name, engine)) in engines.into_iter().enumerate() {
            let report = interference_function_probe(
                engine,
                inst.est.gamma(),
                &inst.net.beta,
                &weights,
                snr.rho_u,
                1.0,
                spec.n_small_scale_draws,
                derive_seed(inst.seed, stream::PROBE, device as u64),
            )?;
            rows.push(RateRow {
                device,
                realization: i,
                rate: if report.passed() { 1.0 } else { 0.0 },
                throughput: 0.0,
            });
            let violations: Vec<Value> = report
                .violations
                .iter()
                .map(|v| {
                    json!({
                        "property": format!("{:?}", v.property),
                        "point": v.point,
                        "component": v.component,
                        "lhs": v.lhs,
                        "rhs": v.rhs,
                    })
                })
                .collect();
            traces.push(json!({
                "seed": inst.seed,
                "engine": name,
                "points": report.points,
                "violations": violations,
            }));
        }
    }
    Ok(Outcome {
        rows,
        ee: BTreeMap::new(),
        trace: json!({ "checks": traces }),
        realization_seeds: seeds,
    })
}
