//! Per-AP power prediction with a small neural network.
//!
//! Solving the downlink max-min problem needs global channel knowledge and
//! a bisection over cone programs. The shortcut: each AP feeds its few
//! strongest large-scale coefficients (in dB, standardized) through a tiny
//! fully connected network that predicts the per-AP normalized power the
//! optimizer would have assigned. The network has three tanh hidden layers
//! of width four and a rectified scalar output, trained with
//! Levenberg-Marquardt on targets from [`crate::dl_power::maxmin_bisection`].
//!
//! Everything an AP needs is local, so the scheme scales with network size:
//! inference cost per AP is independent of how many APs exist.

use ndarray::{Array1, Array2, ArrayView1, Axis};
use serde::{Deserialize, Serialize};

use crate::channel::generate_pilots;
use crate::dl_power::maxmin_bisection;
use crate::error::{Error, Result};
use crate::estimator::LmmseEstimator;
use crate::linalg::CholeskyReal;
use crate::netgen::{generate_network, NetworkConfig};
use crate::rng::{derive_seed, seed_rng, stream};
use rand::seq::SliceRandom;
use rand::Rng as _;

const HIDDEN: usize = 4;
const N_HIDDEN_LAYERS: usize = 3;
const MODEL_VERSION: u32 = 1;

/// One affine layer, row-major weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Layer {
    rows: usize,
    cols: usize,
    w: Vec<f64>,
    b: Vec<f64>,
}

impl Layer {
    fn apply(&self, x: &[f64], out: &mut Vec<f64>) {
        out.clear();
        for r in 0..self.rows {
            let mut s = self.b[r];
            let row = &self.w[r * self.cols..(r + 1) * self.cols];
            for (wi, xi) in row.iter().zip(x.iter()) {
                s += wi * xi;
            }
            out.push(s);
        }
    }

    fn n_params(&self) -> usize {
        self.rows * self.cols + self.rows
    }
}

/// Trained predictor mapping the `khat` strongest large-scale coefficients
/// of an AP to its normalized transmit power.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpModel {
    version: u32,
    khat: usize,
    layers: Vec<Layer>,
    /// Per-feature shift (mean) in the dB domain.
    shift: Vec<f64>,
    /// Per-feature scale (standard deviation) in the dB domain.
    scale: Vec<f64>,
}

/// Supervised samples for [`train_lm`]: per-AP strongest coefficients in dB
/// against the optimizer's per-AP power.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainingSet {
    /// N x khat, each row sorted descending, dB scale.
    pub inputs: Array2<f64>,
    /// N targets in [0, 1].
    pub targets: Array1<f64>,
    /// (realization seed, AP index) per sample.
    pub provenance: Vec<(u64, usize)>,
}

impl TrainingSet {
    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    pub fn khat(&self) -> usize {
        self.inputs.ncols()
    }

    /// Appends the samples of `other`, preserving order. Feature widths
    /// must agree.
    pub fn merge(&mut self, other: &TrainingSet) -> Result<()> {
        if self.khat() != other.khat() {
            return Err(Error::Dimension {
                context: "TrainingSet::merge",
                detail: format!("{} features vs {}", self.khat(), other.khat()),
            });
        }
        self.inputs
            .append(Axis(0), other.inputs.view())
            .map_err(|e| Error::Domain(format!("sample append failed: {e}")))?;
        self.targets
            .append(Axis(0), other.targets.view())
            .map_err(|e| Error::Domain(format!("target append failed: {e}")))?;
        self.provenance.extend_from_slice(&other.provenance);
        Ok(())
    }

    /// Rows reordered by a seeded permutation.
    fn shuffled(self, seed: u64) -> TrainingSet {
        let n = self.len();
        let khat = self.khat();
        let mut order: Vec<usize> = (0..n).collect();
        let mut rng = seed_rng(seed);
        order.shuffle(&mut rng);
        let mut inputs = Array2::<f64>::zeros((n, khat));
        let mut targets = Array1::<f64>::zeros(n);
        let mut provenance = Vec::with_capacity(n);
        for (dst, &src) in order.iter().enumerate() {
            inputs.row_mut(dst).assign(&self.inputs.row(src));
            targets[dst] = self.targets[src];
            provenance.push(self.provenance[src]);
        }
        TrainingSet {
            inputs,
            targets,
            provenance,
        }
    }
}

/// Training diagnostics alongside the fitted model.
#[derive(Debug, Clone)]
pub struct TrainingOutcome {
    pub model: MlpModel,
    pub epochs: usize,
    pub train_rmse: f64,
    /// RMSE on the held-out 10% split; `None` when the set is too small.
    pub validation_rmse: Option<f64>,
    pub final_lambda: f64,
}

fn db(x: f64) -> f64 {
    10.0 * x.max(1e-30).log10()
}

/// The `khat` largest entries of a device-strength row, descending.
pub fn top_khat(beta_row: ArrayView1<'_, f64>, khat: usize) -> Result<Array1<f64>> {
    if khat == 0 || khat > beta_row.len() {
        return Err(Error::Domain(format!(
            "khat = {khat} out of range for {} devices",
            beta_row.len()
        )));
    }
    let mut sorted: Vec<f64> = beta_row.to_vec();
    sorted.sort_by(|a, b| b.partial_cmp(a).unwrap());
    sorted.truncate(khat);
    Ok(Array1::from_vec(sorted))
}

impl MlpModel {
    /// Untrained model with seeded uniform init `U[-1/sqrt(fan_in), 1/sqrt(fan_in)]`.
    /// The output bias starts at 0.5 so the rectifier is live from the start.
    pub fn init(khat: usize, seed: u64) -> Result<Self> {
        if khat == 0 {
            return Err(Error::Domain("khat must be at least 1".into()));
        }
        let mut rng = seed_rng(seed);
        let dims = [khat, HIDDEN, HIDDEN, HIDDEN, 1];
        let mut layers = Vec::with_capacity(dims.len() - 1);
        for win in dims.windows(2) {
            let (cols, rows) = (win[0], win[1]);
            let bound = 1.0 / (cols as f64).sqrt();
            let w = (0..rows * cols)
                .map(|_| rng.random_range(-bound..bound))
                .collect();
            let b = vec![0.0; rows];
            layers.push(Layer { rows, cols, w, b });
        }
        layers.last_mut().unwrap().b[0] = 0.5;
        Ok(Self {
            version: MODEL_VERSION,
            khat,
            layers,
            shift: vec![0.0; khat],
            scale: vec![1.0; khat],
        })
    }

    pub fn khat(&self) -> usize {
        self.khat
    }

    fn n_params(&self) -> usize {
        self.layers.iter().map(Layer::n_params).sum()
    }

    fn set_normalization(&mut self, shift: Vec<f64>, scale: Vec<f64>) {
        self.shift = shift;
        self.scale = scale;
    }

    fn standardize(&self, beta_bar: ArrayView1<'_, f64>) -> Vec<f64> {
        beta_bar
            .iter()
            .enumerate()
            .map(|(j, &x)| (db(x) - self.shift[j]) / self.scale[j])
            .collect()
    }

    fn standardize_db(&self, row_db: ArrayView1<'_, f64>) -> Vec<f64> {
        row_db
            .iter()
            .enumerate()
            .map(|(j, &x)| (x - self.shift[j]) / self.scale[j])
            .collect()
    }

    /// Rectified network output on standardized features, before the
    /// budget clamp. Used by training, where predictions above 1 must
    /// still produce gradient.
    fn raw_output(&self, z: &[f64]) -> f64 {
        let mut cur = z.to_vec();
        let mut next = Vec::new();
        for (li, layer) in self.layers.iter().enumerate() {
            layer.apply(&cur, &mut next);
            if li < N_HIDDEN_LAYERS {
                for v in next.iter_mut() {
                    *v = v.tanh();
                }
            }
            std::mem::swap(&mut cur, &mut next);
        }
        cur[0].max(0.0)
    }

    /// Predicted per-AP power for raw (linear-scale) strongest coefficients.
    pub fn forward(&self, beta_bar: ArrayView1<'_, f64>) -> Result<f64> {
        if beta_bar.len() != self.khat {
            return Err(Error::Dimension {
                context: "MlpModel::forward",
                detail: format!("{} features, model wants {}", beta_bar.len(), self.khat),
            });
        }
        let z = self.standardize(beta_bar);
        Ok(self.raw_output(&z).min(1.0))
    }

    /// Forward pass plus the gradient of the raw (pre-clamp) output with
    /// respect to every parameter, in layer order, weights row-major then
    /// biases per layer.
    fn forward_with_gradient(&self, z: &[f64], grad: &mut [f64]) -> f64 {
        // activations[l] is the input to layer l
        let mut activations: Vec<Vec<f64>> = Vec::with_capacity(self.layers.len() + 1);
        activations.push(z.to_vec());
        let mut cur = z.to_vec();
        let mut next = Vec::new();
        let mut preact_out = 0.0;
        for (li, layer) in self.layers.iter().enumerate() {
            layer.apply(&cur, &mut next);
            if li < N_HIDDEN_LAYERS {
                for v in next.iter_mut() {
                    *v = v.tanh();
                }
            } else {
                preact_out = next[0];
            }
            cur.clone_from(&next);
            activations.push(cur.clone());
        }
        let out = preact_out.max(0.0);
        let out_deriv = if preact_out > 0.0 { 1.0 } else { 0.0 };

        // backward: delta starts at d out / d preact of the last layer
        let mut delta = vec![out_deriv];
        let mut offset = self.n_params();
        for (li, layer) in self.layers.iter().enumerate().rev() {
            offset -= layer.n_params();
            let input = &activations[li];
            // bias and weight gradients
            for r in 0..layer.rows {
                let g = delta[r];
                grad[offset + layer.rows * layer.cols + r] = g;
                let wrow = offset + r * layer.cols;
                for c in 0..layer.cols {
                    grad[wrow + c] = g * input[c];
                }
            }
            if li == 0 {
                break;
            }
            // propagate through weights, then through the previous tanh
            let mut prev = vec![0.0; layer.cols];
            for (r, &d) in delta.iter().enumerate() {
                if d == 0.0 {
                    continue;
                }
                let row = &layer.w[r * layer.cols..(r + 1) * layer.cols];
                for (c, &w) in row.iter().enumerate() {
                    prev[c] += d * w;
                }
            }
            let acts = &activations[li]; // tanh outputs of layer li-1... input to layer li
            for (c, p) in prev.iter_mut().enumerate() {
                *p *= 1.0 - acts[c] * acts[c];
            }
            delta = prev;
        }
        out
    }

    fn params(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.n_params());
        for layer in &self.layers {
            v.extend_from_slice(&layer.w);
            v.extend_from_slice(&layer.b);
        }
        v
    }

    fn set_params(&mut self, v: &[f64]) {
        let mut off = 0;
        for layer in &mut self.layers {
            let nw = layer.rows * layer.cols;
            layer.w.copy_from_slice(&v[off..off + nw]);
            off += nw;
            layer.b.copy_from_slice(&v[off..off + layer.rows]);
            off += layer.rows;
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(json: &str) -> Result<Self> {
        let model: Self = serde_json::from_str(json)?;
        if model.version != MODEL_VERSION {
            return Err(Error::Config(format!(
                "model version {} unsupported (expected {MODEL_VERSION})",
                model.version
            )));
        }
        let dims_ok = model.layers.len() == N_HIDDEN_LAYERS + 1
            && model.layers.iter().skip(1).all(|l| l.rows == HIDDEN || l.rows == 1)
            && model.layers.last().map(|l| l.rows == 1).unwrap_or(false);
        if !dims_ok || model.shift.len() != model.khat || model.scale.len() != model.khat {
            return Err(Error::Config("model file has inconsistent shape".into()));
        }
        Ok(model)
    }
}

/// Gradient-order parameter layout must match [`MlpModel::params`]: per
/// layer, weights row-major then biases. `forward_with_gradient` writes in
/// exactly that order.
fn lm_loss(residuals: &[f64]) -> f64 {
    0.5 * residuals.iter().map(|r| r * r).sum::<f64>()
}

/// Levenberg-Marquardt fit of the per-AP power predictor.
///
/// The sample set is split 90/10 (shuffled by `init_seed`), features are
/// standardized with statistics of the training split, and each epoch
/// solves the damped normal equations `(J^T J + lambda I) step = -J^T r`.
/// Rejected steps raise `lambda` tenfold, accepted ones lower it; training
/// stops at `max_epochs`, a gradient norm below 1e-8, or `lambda` beyond
/// 1e10. The loss over accepted steps never increases.
pub fn train_lm(
    dataset: &TrainingSet,
    init_seed: u64,
    max_epochs: usize,
    lambda0: f64,
) -> Result<TrainingOutcome> {
    if dataset.is_empty() {
        return Err(Error::Empty("training set"));
    }
    if lambda0 <= 0.0 || !lambda0.is_finite() {
        return Err(Error::Training(format!("lambda0 = {lambda0} invalid")));
    }
    if dataset
        .targets
        .iter()
        .any(|&t| !(0.0..=1.0).contains(&t))
    {
        return Err(Error::Training("targets must lie in [0, 1]".into()));
    }
    let n = dataset.len();
    let khat = dataset.khat();
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = seed_rng(derive_seed(init_seed, stream::TRAINING, 0));
    order.shuffle(&mut rng);
    let n_val = n / 10;
    let (val_idx, train_idx) = order.split_at(n_val);

    // standardization constants from the training split
    let mut shift = vec![0.0; khat];
    let mut scale = vec![0.0; khat];
    for &i in train_idx {
        for j in 0..khat {
            shift[j] += dataset.inputs[[i, j]];
        }
    }
    let nt = train_idx.len() as f64;
    for s in shift.iter_mut() {
        *s /= nt;
    }
    for &i in train_idx {
        for j in 0..khat {
            let d = dataset.inputs[[i, j]] - shift[j];
            scale[j] += d * d;
        }
    }
    for s in scale.iter_mut() {
        *s = (*s / nt).sqrt();
        if *s < 1e-9 {
            *s = 1.0;
        }
    }

    let mut model = MlpModel::init(khat, derive_seed(init_seed, stream::TRAINING, 1))?;
    model.set_normalization(shift, scale);
    let features: Vec<Vec<f64>> = train_idx
        .iter()
        .map(|&i| model.standardize_db(dataset.inputs.row(i)))
        .collect();
    let targets: Vec<f64> = train_idx.iter().map(|&i| dataset.targets[i]).collect();

    let n_params = model.n_params();
    let mut lambda = lambda0;
    let mut epochs = 0;
    let mut jac = Array2::<f64>::zeros((features.len(), n_params));
    let mut grad_row = vec![0.0; n_params];

    // residuals and Jacobian at the current parameters
    let mut residuals = vec![0.0; features.len()];
    let mut loss = {
        for (i, z) in features.iter().enumerate() {
            let out = model.forward_with_gradient(z, &mut grad_row);
            residuals[i] = out - targets[i];
            jac.row_mut(i).assign(&Array1::from_vec(grad_row.clone()));
        }
        lm_loss(&residuals)
    };

    'outer: for _ in 0..max_epochs {
        let grad = jac.t().dot(&Array1::from_vec(residuals.clone()));
        let grad_norm = grad.dot(&grad).sqrt();
        if grad_norm < 1e-8 {
            break;
        }
        let jtj = jac.t().dot(&jac);
        loop {
            let mut damped = jtj.clone();
            for d in 0..n_params {
                damped[[d, d]] += lambda;
            }
            let (chol, _) = CholeskyReal::factor_with_jitter(damped.view(), 1e-12, 6)
                .map_err(|e| Error::Training(format!("normal equations singular: {e}")))?;
            let mut step = grad.mapv(|g| -g);
            chol.solve_in_place(&mut step);
            let mut trial = model.clone();
            let mut params = model.params();
            for (p, s) in params.iter_mut().zip(step.iter()) {
                *p += s;
            }
            trial.set_params(&params);
            let trial_residuals: Vec<f64> = features
                .iter()
                .zip(targets.iter())
                .map(|(z, &y)| trial.raw_output(z) - y)
                .collect();
            let trial_loss = lm_loss(&trial_residuals);
            if trial_loss < loss {
                model = trial;
                loss = trial_loss;
                lambda = (lambda / 10.0).max(1e-15);
                epochs += 1;
                for (i, z) in features.iter().enumerate() {
                    let out = model.forward_with_gradient(z, &mut grad_row);
                    residuals[i] = out - targets[i];
                    jac.row_mut(i).assign(&Array1::from_vec(grad_row.clone()));
                }
                break;
            }
            lambda *= 10.0;
            if lambda > 1e10 {
                break 'outer;
            }
        }
    }

    let train_rmse = (2.0 * loss / features.len() as f64).sqrt();
    let validation_rmse = if val_idx.is_empty() {
        None
    } else {
        let sse: f64 = val_idx
            .iter()
            .map(|&i| {
                let z = model.standardize_db(dataset.inputs.row(i));
                let r = model.raw_output(&z).min(1.0) - dataset.targets[i];
                r * r
            })
            .sum();
        Some((sse / val_idx.len() as f64).sqrt())
    };
    Ok(TrainingOutcome {
        model,
        epochs,
        train_rmse,
        validation_rmse,
        final_lambda: lambda,
    })
}

/// Runs [`train_lm`] from several seeded initializations and keeps the fit
/// with the lowest training RMSE. The damped Gauss-Newton steps are local,
/// and an unlucky init can strand the rectified output at zero where the
/// Jacobian vanishes; restarting from fresh weights recovers without
/// hand-picked seeds. With `restarts = 1` this is exactly [`train_lm`].
pub fn train_lm_restarts(
    dataset: &TrainingSet,
    init_seed: u64,
    restarts: usize,
    max_epochs: usize,
    lambda0: f64,
) -> Result<TrainingOutcome> {
    if restarts == 0 {
        return Err(Error::Domain("restarts must be at least 1".into()));
    }
    let mut best: Option<TrainingOutcome> = None;
    for r in 0..restarts {
        let seed = if r == 0 {
            init_seed
        } else {
            derive_seed(init_seed, stream::TRAINING, 2_000_000 + r as u64)
        };
        let outcome = train_lm(dataset, seed, max_epochs, lambda0)?;
        if best
            .as_ref()
            .map(|b| outcome.train_rmse < b.train_rmse)
            .unwrap_or(true)
        {
            best = Some(outcome);
        }
    }
    Ok(best.expect("restarts is at least 1"))
}

/// Generates supervised samples by solving the downlink max-min problem on
/// fresh network drops (wrap-around forced on) and pairing each AP's
/// optimal power with its strongest coefficients. Samples are shuffled
/// deterministically by `seed`.
pub fn build_dataset(
    config: &NetworkConfig,
    n_realizations: usize,
    khat: usize,
    seed: u64,
) -> Result<TrainingSet> {
    config.validate()?;
    if n_realizations == 0 {
        return Err(Error::Empty("realization count"));
    }
    if khat == 0 || khat > config.k {
        return Err(Error::Domain(format!(
            "khat = {khat} out of range for K = {}",
            config.k
        )));
    }
    let mut cfg = config.clone();
    cfg.wrap_around = true;
    let snr = cfg.derived_snr();
    let n_samples = n_realizations * cfg.m;
    let mut inputs = Array2::<f64>::zeros((n_samples, khat));
    let mut targets = Array1::<f64>::zeros(n_samples);
    let mut provenance = Vec::with_capacity(n_samples);

    let mut row = 0;
    for i in 0..n_realizations {
        let rseed = derive_seed(seed, stream::TRAINING, i as u64);
        let net = generate_network(&cfg, rseed)?;
        let pilots = generate_pilots(cfg.k, cfg.tau, derive_seed(rseed, stream::PILOTS, 0));
        let est = LmmseEstimator::new(&pilots, &net.beta, snr.rho_p)?;
        let bis = maxmin_bisection(est.gamma(), &net.beta, snr.rho_d, 1e-3, 1e-6)
            .map_err(|e| Error::Solver(format!("realization seed {rseed}: {e}")))?;
        for m in 0..cfg.m {
            let strongest = top_khat(net.beta.row(m), khat)?;
            for j in 0..khat {
                inputs[[row, j]] = db(strongest[j]);
            }
            targets[row] = bis.p_opt[m].min(1.0);
            provenance.push((rseed, m));
            row += 1;
        }
    }

    let set = TrainingSet {
        inputs,
        targets,
        provenance,
    };
    Ok(set.shuffled(derive_seed(seed, stream::TRAINING, n_realizations as u64)))
}

/// Pools [`build_dataset`] samples over several deployment side lengths at
/// fixed `M` and `K`, then reshuffles. Dense drops are interference
/// limited and tie the optimal powers only loosely to the strongest
/// coefficients; sparse drops are noise limited and tie them tightly.
/// Training on the pool keeps one regime from dominating the fit and lets a
/// single model serve deployments of different density.
pub fn build_dataset_areas(
    config: &NetworkConfig,
    sides_m: &[f64],
    realizations_per_area: usize,
    khat: usize,
    seed: u64,
) -> Result<TrainingSet> {
    if sides_m.is_empty() {
        return Err(Error::Empty("deployment side list"));
    }
    let mut pooled: Option<TrainingSet> = None;
    for (ai, &side) in sides_m.iter().enumerate() {
        let mut cfg = config.clone();
        cfg.area_side_m = side;
        let part = build_dataset(
            &cfg,
            realizations_per_area,
            khat,
            derive_seed(seed, stream::TRAINING, 1_000_000 + ai as u64),
        )?;
        match pooled.as_mut() {
            Some(p) => p.merge(&part)?,
            None => pooled = Some(part),
        }
    }
    let pooled = pooled.expect("side list is non-empty");
    Ok(pooled.shuffled(derive_seed(seed, stream::TRAINING, u64::MAX)))
}
