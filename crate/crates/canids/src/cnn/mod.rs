//! Residual convolutional classifier over stacked wavelet tensors.
//!
//! A deliberately small stand-in for a deep residual backbone: a few
//! two-convolution blocks with shortcut connections (the first block
//! projects channels 1x1), global average pooling and a sigmoid head.
//! Training is plain seeded SGD-with-moments (Adam-style) on binary
//! cross-entropy, single-threaded and bit-reproducible, with early stopping
//! on a temporal validation split.

mod layers;
mod serialize;

pub use serialize::{load_model, save_model};

use ndarray::{Array1, Array2, Array3, ArrayView1, ArrayView2};
use rand::{seq::SliceRandom, Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use crate::error::{Error, Result};
use crate::segment::Label;
use crate::wavelet::ModelInput;
use layers::*;

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct CnnConfig {
    pub residual_blocks: usize,
    pub base_channels: usize,
    /// (height, width) over the (band, coefficient) axes; odd sizes only.
    pub kernel: (usize, usize),
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub early_stop_patience: usize,
    pub validation_fraction: f64,
    pub seed: u64,
}

impl Default for CnnConfig {
    fn default() -> Self {
        CnnConfig {
            residual_blocks: 3,
            base_channels: 16,
            kernel: (3, 3),
            learning_rate: 1e-3,
            batch_size: 32,
            max_epochs: 50,
            early_stop_patience: 5,
            validation_fraction: 0.2,
            seed: 0,
        }
    }
}

impl CnnConfig {
    pub fn validate(&self) -> Result<()> {
        if self.residual_blocks < 1 {
            return Err(Error::Config("residual_blocks must be >= 1".into()));
        }
        if self.base_channels < 1 || self.batch_size < 1 || self.max_epochs < 1 {
            return Err(Error::Config("counts must be >= 1".into()));
        }
        let (kh, kw) = self.kernel;
        if kh % 2 == 0 || kw % 2 == 0 || kh == 0 || kw == 0 {
            return Err(Error::Config("kernel dimensions must be odd".into()));
        }
        if !(self.validation_fraction > 0.0 && self.validation_fraction < 1.0) {
            return Err(Error::Config("validation_fraction must be in (0, 1)".into()));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::Config("learning_rate must be > 0".into()));
        }
        Ok(())
    }
}

/// Name, shape and flat offset of one parameter tensor.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ParamSpec {
    pub name: String,
    pub shape: Vec<usize>,
    pub offset: usize,
}

impl ParamSpec {
    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct EpochStats {
    pub train_loss: f64,
    pub val_loss: f64,
}

/// The classifier: a config snapshot, the flat parameter store with its
/// shape table, and the recorded training history.
#[derive(Debug, Clone, PartialEq)]
pub struct CnnModel {
    pub config: CnnConfig,
    /// (planes, bands, coefficients) accepted by forward.
    pub input_shape: (usize, usize, usize),
    pub specs: Vec<ParamSpec>,
    pub params: Vec<f64>,
    pub training_history: Vec<EpochStats>,
}

fn build_specs(cfg: &CnnConfig, input_planes: usize) -> Vec<ParamSpec> {
    let (kh, kw) = cfg.kernel;
    let c = cfg.base_channels;
    let mut specs = Vec::new();
    let mut offset = 0usize;
    let mut push = |name: String, shape: Vec<usize>, offset: &mut usize| {
        let len: usize = shape.iter().product();
        specs.push(ParamSpec {
            name,
            shape,
            offset: *offset,
        });
        *offset += len;
    };
    let mut c_in = input_planes;
    for b in 0..cfg.residual_blocks {
        push(format!("block{b}.conv1.w"), vec![c, c_in, kh, kw], &mut offset);
        push(format!("block{b}.conv1.b"), vec![c], &mut offset);
        push(format!("block{b}.conv2.w"), vec![c, c, kh, kw], &mut offset);
        push(format!("block{b}.conv2.b"), vec![c], &mut offset);
        if c_in != c {
            push(format!("block{b}.proj.w"), vec![c, c_in, 1, 1], &mut offset);
        }
        c_in = c;
    }
    push("head.w".into(), vec![1, 2 * c], &mut offset);
    push("head.b".into(), vec![1], &mut offset);
    specs
}

/// Initialize parameters from the seeded generator: fan-in-scaled uniform
/// weights (bound sqrt(6/fan_in)), zero biases. Identical (config, seed)
/// pairs produce identical parameter sets.
pub fn init_model(cfg: &CnnConfig, input_shape: (usize, usize, usize)) -> Result<CnnModel> {
    cfg.validate()?;
    let (planes, bands, coeffs) = input_shape;
    if planes == 0 || bands == 0 || coeffs == 0 {
        return Err(Error::Shape("input shape has a zero dimension".into()));
    }
    let specs = build_specs(cfg, planes);
    let total: usize = specs.iter().map(|s| s.len()).sum();
    let mut params = vec![0.0; total];
    let mut rng = ChaCha20Rng::seed_from_u64(cfg.seed);
    for spec in &specs {
        if spec.name.ends_with(".b") {
            continue; // biases start at zero
        }
        let fan_in: usize = spec.shape[1..].iter().product();
        let bound = (6.0 / fan_in as f64).sqrt();
        for v in &mut params[spec.offset..spec.offset + spec.len()] {
            *v = rng.gen_range(-bound..bound);
        }
    }
    Ok(CnnModel {
        config: cfg.clone(),
        input_shape,
        specs,
        params,
        training_history: Vec::new(),
    })
}

impl CnnModel {
    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    fn spec(&self, name: &str) -> &ParamSpec {
        self.specs
            .iter()
            .find(|s| s.name == name)
            .unwrap_or_else(|| panic!("missing parameter {name}"))
    }

    fn tensor<'a>(&self, store: &'a [f64], name: &str) -> (&'a [f64], &ParamSpec) {
        let spec = self.spec(name);
        (&store[spec.offset..spec.offset + spec.len()], spec)
    }

    fn mat<'a>(&self, store: &'a [f64], name: &str) -> ArrayView2<'a, f64> {
        let (slice, spec) = self.tensor(store, name);
        let rows = spec.shape[0];
        ArrayView2::from_shape((rows, spec.len() / rows), slice).unwrap()
    }

    fn vec1<'a>(&self, store: &'a [f64], name: &str) -> ArrayView1<'a, f64> {
        let (slice, _) = self.tensor(store, name);
        ArrayView1::from_shape(slice.len(), slice).unwrap()
    }

    fn has(&self, name: &str) -> bool {
        self.specs.iter().any(|s| s.name == name)
    }

    fn check_input(&self, input: &Array3<f64>) -> Result<()> {
        let got = input.dim();
        let want = self.input_shape;
        if got != want {
            return Err(Error::Shape(format!(
                "input shape {got:?} does not match model {want:?}"
            )));
        }
        Ok(())
    }

    /// Deterministic score in (0, 1).
    pub fn forward(&self, input: &Array3<f64>) -> Result<f64> {
        Ok(sigmoid(self.forward_logit(input, None)?))
    }

    /// Forward pass; when `cache` is given, intermediates are stored for the
    /// backward pass.
    fn forward_logit(&self, input: &Array3<f64>, mut cache: Option<&mut ForwardCache>) -> Result<f64> {
        self.check_input(input)?;
        let (kh, kw) = self.config.kernel;
        let mut x = input.clone();
        for b in 0..self.config.residual_blocks {
            let w1 = self.mat(&self.params, &format!("block{b}.conv1.w"));
            let b1 = self.vec1(&self.params, &format!("block{b}.conv1.b"));
            let w2 = self.mat(&self.params, &format!("block{b}.conv2.w"));
            let b2 = self.vec1(&self.params, &format!("block{b}.conv2.b"));

            let (u, col1) = conv_forward(&x, &w1, &b1, kh, kw);
            let r = relu(&u);
            let (v, col2) = conv_forward(&r, &w2, &b2, kh, kw);

            let proj_name = format!("block{b}.proj.w");
            let (shortcut, colp) = if self.has(&proj_name) {
                let wp = self.mat(&self.params, &proj_name);
                let zero_bias = Array1::zeros(wp.shape()[0]);
                let (s, colp) = conv_forward(&x, &wp, &zero_bias.view(), 1, 1);
                (s, Some(colp))
            } else {
                (x.clone(), None)
            };

            let z = &v + &shortcut;
            let out = relu(&z);
            if let Some(c) = cache.as_deref_mut() {
                c.blocks.push(BlockCache {
                    input: x,
                    col1,
                    u,
                    r,
                    col2,
                    colp,
                    z,
                });
            }
            x = out;
        }
        let avg = global_avg_pool(&x);
        let (max, argmax) = global_max_pool(&x);
        let mut pool = Array1::zeros(avg.len() + max.len());
        pool.slice_mut(ndarray::s![..avg.len()]).assign(&avg);
        pool.slice_mut(ndarray::s![avg.len()..]).assign(&max);
        let w_head = self.mat(&self.params, "head.w");
        let b_head = self.vec1(&self.params, "head.b");
        let logit = w_head.row(0).dot(&pool) + b_head[0];
        if let Some(c) = cache.as_deref_mut() {
            c.final_act = Some(x);
            c.pool = Some(pool);
            c.max_args = Some(argmax);
        }
        Ok(logit)
    }

    /// BCE loss of one example and the gradient with respect to every
    /// parameter, accumulated into `grads` (scaled by `scale`).
    fn backward_into(
        &self,
        input: &Array3<f64>,
        label: Label,
        grads: &mut [f64],
        scale: f64,
    ) -> Result<f64> {
        let mut cache = ForwardCache::default();
        let logit = self.forward_logit(input, Some(&mut cache))?;
        let y = label.as_u8() as f64;
        let loss = softplus(logit) - y * logit;
        let dlogit = (sigmoid(logit) - y) * scale;

        let (kh, kw) = self.config.kernel;
        let pool = cache.pool.as_ref().unwrap();
        let final_act = cache.final_act.as_ref().unwrap();
        let (c_last, h, w) = final_act.dim();

        // head
        {
            let spec_w = self.spec("head.w");
            let spec_b = self.spec("head.b");
            for (i, &p) in pool.iter().enumerate() {
                grads[spec_w.offset + i] += dlogit * p;
            }
            grads[spec_b.offset] += dlogit;
        }
        let w_head = self.mat(&self.params, "head.w").row(0).to_owned();
        let dpool = w_head * dlogit;
        let d_avg = dpool.slice(ndarray::s![..c_last]);
        let d_max = dpool.slice(ndarray::s![c_last..]);
        let argmax = cache.max_args.as_ref().unwrap();
        let mut dx = global_avg_pool_backward(&d_avg, c_last, h, w)
            + global_max_pool_backward(&d_max, argmax, c_last, h, w);

        for b in (0..self.config.residual_blocks).rev() {
            let bc = &cache.blocks[b];
            let dz = relu_backward(&dx, &bc.z);

            // conv2 path (input r)
            let w2 = self.mat(&self.params, &format!("block{b}.conv2.w"));
            let g2 = conv_backward(&dz, &bc.col2, &w2, self.config.base_channels, kh, kw);
            accumulate(grads, self.spec(&format!("block{b}.conv2.w")), g2.dw.as_slice().unwrap());
            accumulate(grads, self.spec(&format!("block{b}.conv2.b")), g2.db.as_slice().unwrap());

            let du = relu_backward(&g2.dx, &bc.u);
            let w1 = self.mat(&self.params, &format!("block{b}.conv1.w"));
            let c_in = bc.input.dim().0;
            let g1 = conv_backward(&du, &bc.col1, &w1, c_in, kh, kw);
            accumulate(grads, self.spec(&format!("block{b}.conv1.w")), g1.dw.as_slice().unwrap());
            accumulate(grads, self.spec(&format!("block{b}.conv1.b")), g1.db.as_slice().unwrap());

            // shortcut path
            let proj_name = format!("block{b}.proj.w");
            let dshort = if self.has(&proj_name) {
                let wp = self.mat(&self.params, &proj_name);
                let gp = conv_backward(&dz, bc.colp.as_ref().unwrap(), &wp, c_in, 1, 1);
                accumulate(grads, self.spec(&proj_name), gp.dw.as_slice().unwrap());
                gp.dx
            } else {
                dz.clone()
            };
            dx = g1.dx + dshort;
        }
        Ok(loss)
    }

    /// Mean BCE loss over a set without touching gradients.
    fn mean_loss(&self, data: &[&ModelInput]) -> Result<f64> {
        let mut total = 0.0;
        for ex in data {
            let logit = self.forward_logit(&ex.planes, None)?;
            total += softplus(logit) - ex.label.as_u8() as f64 * logit;
        }
        Ok(total / data.len() as f64)
    }
}

fn accumulate(grads: &mut [f64], spec: &ParamSpec, contribution: &[f64]) {
    let dst = &mut grads[spec.offset..spec.offset + spec.len()];
    for (d, &c) in dst.iter_mut().zip(contribution) {
        *d += c;
    }
}

#[derive(Default)]
struct ForwardCache {
    blocks: Vec<BlockCache>,
    final_act: Option<Array3<f64>>,
    pool: Option<Array1<f64>>,
    max_args: Option<Vec<usize>>,
}

struct BlockCache {
    input: Array3<f64>,
    col1: Array2<f64>,
    u: Array3<f64>,
    r: Array3<f64>,
    col2: Array2<f64>,
    colp: Option<Array2<f64>>,
    z: Array3<f64>,
}

// r is kept alive through col2; silence the field-never-read lint without
// dropping the activation (its patch matrix aliases it logically).
impl BlockCache {
    #[allow(dead_code)]
    fn relu_activation(&self) -> &Array3<f64> {
        &self.r
    }
}

/// Adam-style moment estimates over the flat parameter store.
struct Moments {
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

impl Moments {
    fn new(n: usize) -> Self {
        Moments {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    fn step(&mut self, params: &mut [f64], grads: &[f64], lr: f64) {
        self.t += 1;
        let bc1 = 1.0 - BETA1.powi(self.t as i32);
        let bc2 = 1.0 - BETA2.powi(self.t as i32);
        for i in 0..params.len() {
            let g = grads[i];
            self.m[i] = BETA1 * self.m[i] + (1.0 - BETA1) * g;
            self.v[i] = BETA2 * self.v[i] + (1.0 - BETA2) * g * g;
            let mhat = self.m[i] / bc1;
            let vhat = self.v[i] / bc2;
            params[i] -= lr * mhat / (vhat.sqrt() + ADAM_EPS);
        }
    }
}

/// Train with early stopping on the validation loss. The validation set is
/// the trailing `validation_fraction` of the provided order (windows overlap
/// in time through stacking, so a shuffled split would leak). Returns the
/// parameters that achieved the best validation loss.
pub fn train(mut model: CnnModel, data: &[ModelInput]) -> Result<CnnModel> {
    let cfg = model.config.clone();
    cfg.validate()?;
    if data.len() < 4 {
        return Err(Error::invalid("training needs at least 4 examples"));
    }
    let n_val = ((data.len() as f64 * cfg.validation_fraction).round() as usize)
        .clamp(1, data.len() - 2);
    let split = data.len() - n_val;
    let train_set: Vec<&ModelInput> = data[..split].iter().collect();
    let val_set: Vec<&ModelInput> = data[split..].iter().collect();

    let positives = train_set.iter().filter(|e| e.label == Label::Attack).count();
    if positives < 2 || train_set.len() - positives < 2 {
        return Err(Error::invalid(format!(
            "training split needs >= 2 examples per class (got {positives} attack / {} total)",
            train_set.len()
        )));
    }

    let mut moments = Moments::new(model.num_params());
    let mut grads = vec![0.0; model.num_params()];
    let mut shuffle_rng = ChaCha20Rng::seed_from_u64(cfg.seed ^ 0x9e37_79b9_7f4a_7c15);
    let mut order: Vec<usize> = (0..train_set.len()).collect();

    let mut best_val = f64::INFINITY;
    let mut best_params = model.params.clone();
    let mut strikes = 0usize;
    model.training_history.clear();

    for epoch in 0..cfg.max_epochs {
        order.shuffle(&mut shuffle_rng);
        let mut epoch_loss = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            grads.iter_mut().for_each(|g| *g = 0.0);
            let scale = 1.0 / batch.len() as f64;
            let mut batch_loss = 0.0;
            for &idx in batch {
                let ex = train_set[idx];
                batch_loss += model.backward_into(&ex.planes, ex.label, &mut grads, scale)?;
            }
            moments.step(&mut model.params, &grads, cfg.learning_rate);
            epoch_loss += batch_loss;
        }
        let train_loss = epoch_loss / train_set.len() as f64;
        let val_loss = model.mean_loss(&val_set)?;
        if !train_loss.is_finite() || !val_loss.is_finite() {
            return Err(Error::Diverged { epoch });
        }
        model.training_history.push(EpochStats { train_loss, val_loss });

        if val_loss < best_val {
            best_val = val_loss;
            best_params.copy_from_slice(&model.params);
            strikes = 0;
        } else {
            strikes += 1;
            if strikes > cfg.early_stop_patience {
                break;
            }
        }
    }
    model.params = best_params;
    Ok(model)
}

/// Hard decision at `cutoff` (flag = 1 iff score >= cutoff).
pub fn predict(model: &CnnModel, input: &ModelInput, cutoff: f64) -> Result<(u8, f64)> {
    let score = model.forward(&input.planes)?;
    Ok((u8::from(score >= cutoff), score))
}

/// Activation pattern of one forward pass: relu masks and pool argmaxes.
/// Central differences are only valid when both probes share it (the loss
/// is piecewise smooth; a mask flip inside the probe interval is a kink).
fn smoothness_signature(cache: &ForwardCache) -> (Vec<bool>, Vec<usize>) {
    let mut masks = Vec::new();
    for b in &cache.blocks {
        masks.extend(b.u.iter().map(|&v| v > 0.0));
        masks.extend(b.z.iter().map(|&v| v > 0.0));
    }
    (masks, cache.max_args.clone().unwrap())
}

/// Compare analytic loss gradients against central finite differences over
/// a random sample of parameters. Returns the maximum relative error;
/// entries where both gradients are below 1e-8 in magnitude count as exact.
/// Coordinates whose probe interval straddles a relu or max-pool kink are
/// skipped: the loss is not differentiable across them and the central
/// difference is invalid there.
pub fn gradient_check(
    model: &CnnModel,
    input: &Array3<f64>,
    label: Label,
    samples: usize,
    seed: u64,
) -> Result<f64> {
    let mut grads = vec![0.0; model.num_params()];
    let mut probe = model.clone();
    probe.backward_into(input, label, &mut grads, 1.0)?;

    let loss_and_signature = |m: &CnnModel| -> Result<(f64, (Vec<bool>, Vec<usize>))> {
        let mut cache = ForwardCache::default();
        let logit = m.forward_logit(input, Some(&mut cache))?;
        Ok((
            softplus(logit) - label.as_u8() as f64 * logit,
            smoothness_signature(&cache),
        ))
    };

    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let n = model.num_params();
    let count = samples.min(n);
    let mut max_rel = 0.0f64;
    let h = 1e-5;
    for _ in 0..count {
        let i = rng.gen_range(0..n);
        let orig = probe.params[i];
        probe.params[i] = orig + h;
        let (up, sig_up) = loss_and_signature(&probe)?;
        probe.params[i] = orig - h;
        let (down, sig_down) = loss_and_signature(&probe)?;
        probe.params[i] = orig;
        if sig_up != sig_down {
            continue;
        }
        let numeric = (up - down) / (2.0 * h);
        let analytic = grads[i];
        let denom = analytic.abs().max(numeric.abs());
        if denom < 1e-8 {
            continue;
        }
        max_rel = max_rel.max((analytic - numeric).abs() / denom);
    }
    Ok(max_rel)
}
