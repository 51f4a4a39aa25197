//! Feedforward networks with just enough machinery to train the codec
//! autoencoders: Xavier init, tanh/linear layers, minibatch gradient
//! descent with momentum, analytic gradients, and post-training weight
//! quantization.
//!
//! Coefficients are stored as f32 (that is what gets shared over the air
//! and persisted); all arithmetic runs in f64 so results are reproducible
//! across optimization levels.

use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::kpi::MultCounter;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Linear,
    Tanh,
}

impl Activation {
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Linear => x,
            Activation::Tanh => x.tanh(),
        }
    }

    /// Derivative expressed through the activation output.
    fn derive_from_output(self, a: f64) -> f64 {
        match self {
            Activation::Linear => 1.0,
            Activation::Tanh => 1.0 - a * a,
        }
    }

    pub fn tag(self) -> u8 {
        match self {
            Activation::Linear => 0,
            Activation::Tanh => 1,
        }
    }

    pub fn from_tag(t: u8) -> Result<Self> {
        match t {
            0 => Ok(Activation::Linear),
            1 => Ok(Activation::Tanh),
            _ => Err(Error::config(format!("unknown activation tag {t}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelRole {
    Encoder,
    Decoder,
}

impl ModelRole {
    pub fn tag(self) -> u8 {
        match self {
            ModelRole::Encoder => 0,
            ModelRole::Decoder => 1,
        }
    }

    pub fn from_tag(t: u8) -> Result<Self> {
        match t {
            0 => Ok(ModelRole::Encoder),
            1 => Ok(ModelRole::Decoder),
            _ => Err(Error::config(format!("unknown model role tag {t}"))),
        }
    }
}

/// One half of an autoencoder (or any plain FNN).
///
/// `weights[l]` holds the layer-l matrix row-major as `n_in x n_out`
/// (`w[i * n_out + j]` connects input i to output j); `biases[l]` has
/// length `n_out`.
#[derive(Debug, Clone, PartialEq)]
pub struct FnnModel {
    pub role: ModelRole,
    pub layer_sizes: Vec<usize>,
    pub acts: Vec<Activation>,
    pub weights: Vec<Vec<f32>>,
    pub biases: Vec<Vec<f32>>,
}

impl FnnModel {
    pub fn n_in(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn n_out(&self) -> usize {
        *self.layer_sizes.last().unwrap()
    }

    pub fn n_layers(&self) -> usize {
        self.layer_sizes.len() - 1
    }

    pub fn num_weights(&self) -> u64 {
        self.layer_sizes.windows(2).map(|w| (w[0] * w[1]) as u64).sum()
    }

    pub fn num_biases(&self) -> u64 {
        self.layer_sizes[1..].iter().map(|&n| n as u64).sum()
    }

    /// Real multiplications of one forward pass (weight products only, the
    /// convention used by the complexity accounting).
    pub fn mults_per_forward(&self) -> u64 {
        self.num_weights()
    }

    pub fn validate(&self) -> Result<()> {
        if self.layer_sizes.len() < 2 {
            return Err(Error::config("a network needs at least an input and an output layer"));
        }
        if self.layer_sizes.iter().any(|&n| n == 0) {
            return Err(Error::config("zero-width layer"));
        }
        let n_layers = self.n_layers();
        if self.acts.len() != n_layers
            || self.weights.len() != n_layers
            || self.biases.len() != n_layers
        {
            return Err(Error::config("layer array lengths disagree with layer_sizes"));
        }
        for l in 0..n_layers {
            let (n_in, n_out) = (self.layer_sizes[l], self.layer_sizes[l + 1]);
            if self.weights[l].len() != n_in * n_out || self.biases[l].len() != n_out {
                return Err(Error::config(format!("layer {l} tensor shape mismatch")));
            }
            if self.weights[l].iter().chain(&self.biases[l]).any(|x| !x.is_finite()) {
                return Err(Error::config(format!("non-finite coefficient in layer {l}")));
            }
        }
        Ok(())
    }

    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>> {
        self.forward_inner(input, None)
    }

    /// [`FnnModel::forward`] charging one multiplication per weight to the
    /// counter.
    pub fn forward_counted(&self, input: &[f64], counter: &mut MultCounter) -> Result<Vec<f64>> {
        self.forward_inner(input, Some(counter))
    }

    fn forward_inner(&self, input: &[f64], counter: Option<&mut MultCounter>) -> Result<Vec<f64>> {
        if input.len() != self.n_in() {
            return Err(Error::config(format!(
                "input length {} does not match N_0 = {}",
                input.len(),
                self.n_in()
            )));
        }
        let mut a: Vec<f64> = input.to_vec();
        for l in 0..self.n_layers() {
            let n_out = self.layer_sizes[l + 1];
            let mut z: Vec<f64> = self.biases[l].iter().map(|&b| b as f64).collect();
            for (i, &x) in a.iter().enumerate() {
                let row = &self.weights[l][i * n_out..(i + 1) * n_out];
                for (j, &w) in row.iter().enumerate() {
                    z[j] += x * w as f64;
                }
            }
            a = z.into_iter().map(|v| self.acts[l].apply(v)).collect();
        }
        if let Some(c) = counter {
            c.add(self.mults_per_forward());
        }
        Ok(a)
    }
}

/// Deterministic Xavier-uniform initialization; biases start at zero.
pub fn init_fnn(
    role: ModelRole,
    layer_sizes: &[usize],
    acts: &[Activation],
    seed: u64,
) -> Result<FnnModel> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    init_fnn_with_rng(role, layer_sizes, acts, &mut rng)
}

fn init_fnn_with_rng(
    role: ModelRole,
    layer_sizes: &[usize],
    acts: &[Activation],
    rng: &mut ChaCha8Rng,
) -> Result<FnnModel> {
    let mut model = FnnModel {
        role,
        layer_sizes: layer_sizes.to_vec(),
        acts: acts.to_vec(),
        weights: Vec::new(),
        biases: Vec::new(),
    };
    if layer_sizes.len() < 2 || layer_sizes.iter().any(|&n| n == 0) {
        return Err(Error::config("invalid layer sizes"));
    }
    if acts.len() != layer_sizes.len() - 1 {
        return Err(Error::config("one activation per layer required"));
    }
    for w in layer_sizes.windows(2) {
        let (n_in, n_out) = (w[0], w[1]);
        let limit = (6.0 / (n_in + n_out) as f64).sqrt();
        let weights: Vec<f32> = (0..n_in * n_out)
            .map(|_| ((rng.random::<f64>() * 2.0 - 1.0) * limit) as f32)
            .collect();
        model.weights.push(weights);
        model.biases.push(vec![0.0f32; n_out]);
    }
    model.validate()?;
    Ok(model)
}

/// Per-tensor gradients in the same layout as the model tensors.
#[derive(Debug, Clone)]
pub struct Grads {
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<Vec<f64>>,
}

/// Batch-mean MSE loss (per-sample squared error divided by the output
/// dimension) and its analytic gradient.
pub fn mse_and_grads(
    model: &FnnModel,
    inputs: &[Vec<f64>],
    targets: &[Vec<f64>],
) -> Result<(f64, Grads)> {
    model.validate()?;
    if inputs.is_empty() || inputs.len() != targets.len() {
        return Err(Error::precondition("batch inputs and targets must be non-empty and paired"));
    }
    let net = NetF64::from_model(model);
    let mut gw: Vec<Vec<f64>> = model.weights.iter().map(|w| vec![0.0; w.len()]).collect();
    let mut gb: Vec<Vec<f64>> = model.biases.iter().map(|b| vec![0.0; b.len()]).collect();
    let loss = net.accumulate_batch(inputs, targets, &mut gw, &mut gb)?;
    Ok((loss, Grads { weights: gw, biases: gb }))
}

/// f64 shadow of a model used by training and gradient evaluation.
struct NetF64 {
    sizes: Vec<usize>,
    acts: Vec<Activation>,
    w: Vec<Vec<f64>>,
    b: Vec<Vec<f64>>,
}

impl NetF64 {
    fn from_model(m: &FnnModel) -> Self {
        NetF64 {
            sizes: m.layer_sizes.clone(),
            acts: m.acts.clone(),
            w: m.weights.iter().map(|w| w.iter().map(|&x| x as f64).collect()).collect(),
            b: m.biases.iter().map(|b| b.iter().map(|&x| x as f64).collect()).collect(),
        }
    }

    fn n_layers(&self) -> usize {
        self.sizes.len() - 1
    }

    /// Forward keeping every layer's activation output.
    fn forward_trace(&self, input: &[f64]) -> Vec<Vec<f64>> {
        let mut trace = Vec::with_capacity(self.n_layers() + 1);
        trace.push(input.to_vec());
        for l in 0..self.n_layers() {
            let n_out = self.sizes[l + 1];
            let prev = trace.last().unwrap();
            let mut z = self.b[l].clone();
            for (i, &x) in prev.iter().enumerate() {
                let row = &self.w[l][i * n_out..(i + 1) * n_out];
                for (j, &wv) in row.iter().enumerate() {
                    z[j] += x * wv;
                }
            }
            trace.push(z.into_iter().map(|v| self.acts[l].apply(v)).collect());
        }
        trace
    }

    /// Accumulate batch-mean loss and gradients into the given buffers.
    fn accumulate_batch(
        &self,
        inputs: &[Vec<f64>],
        targets: &[Vec<f64>],
        gw: &mut [Vec<f64>],
        gb: &mut [Vec<f64>],
    ) -> Result<f64> {
        let n_in = self.sizes[0];
        let n_out = *self.sizes.last().unwrap();
        let scale = 1.0 / inputs.len() as f64;
        let mut loss = 0.0;
        for (x, t) in inputs.iter().zip(targets) {
            if x.len() != n_in || t.len() != n_out {
                return Err(Error::config("sample length does not match network shape"));
            }
            let trace = self.forward_trace(x);
            let out = trace.last().unwrap();
            let mut delta: Vec<f64> = out
                .iter()
                .zip(t)
                .map(|(o, tv)| {
                    let e = o - tv;
                    loss += e * e * scale / n_out as f64;
                    2.0 * e * scale / n_out as f64
                })
                .collect();
            for l in (0..self.n_layers()).rev() {
                let a_out = &trace[l + 1];
                let a_in = &trace[l];
                let n_l = self.sizes[l + 1];
                for (d, &a) in delta.iter_mut().zip(a_out) {
                    *d *= self.acts[l].derive_from_output(a);
                }
                for (j, &d) in delta.iter().enumerate() {
                    gb[l][j] += d;
                }
                for (i, &ai) in a_in.iter().enumerate() {
                    let grow = &mut gw[l][i * n_l..(i + 1) * n_l];
                    for (j, &d) in delta.iter().enumerate() {
                        grow[j] += ai * d;
                    }
                }
                if l > 0 {
                    let mut prev = vec![0.0; self.sizes[l]];
                    for (i, p) in prev.iter_mut().enumerate() {
                        let row = &self.w[l][i * n_l..(i + 1) * n_l];
                        *p = row.iter().zip(&delta).map(|(wv, d)| wv * d).sum();
                    }
                    delta = prev;
                }
            }
        }
        Ok(loss)
    }

    fn split_halves(&self, enc_layers: usize) -> (FnnModel, FnnModel) {
        let to_f32 = |v: &Vec<f64>| v.iter().map(|&x| x as f32).collect::<Vec<f32>>();
        let encoder = FnnModel {
            role: ModelRole::Encoder,
            layer_sizes: self.sizes[..=enc_layers].to_vec(),
            acts: self.acts[..enc_layers].to_vec(),
            weights: self.w[..enc_layers].iter().map(to_f32).collect(),
            biases: self.b[..enc_layers].iter().map(to_f32).collect(),
        };
        let decoder = FnnModel {
            role: ModelRole::Decoder,
            layer_sizes: self.sizes[enc_layers..].to_vec(),
            acts: self.acts[enc_layers..].to_vec(),
            weights: self.w[enc_layers..].iter().map(to_f32).collect(),
            biases: self.b[enc_layers..].iter().map(to_f32).collect(),
        };
        (encoder, decoder)
    }
}

/// Training configuration for one autoencoder. The decoder mirrors the
/// encoder sizes; hidden layers are tanh, the decoder output is linear,
/// and the latent activation is the scheme's choice.
#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub encoder_sizes: Vec<usize>,
    pub latent_act: Activation,
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch: usize,
    pub momentum: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            encoder_sizes: vec![64, 40, 6],
            latent_act: Activation::Linear,
            epochs: 200,
            learning_rate: 1e-3,
            batch: 64,
            momentum: 0.9,
            seed: 0,
        }
    }
}

impl TrainConfig {
    fn validate(&self) -> Result<()> {
        if self.encoder_sizes.len() < 2 || self.encoder_sizes.iter().any(|&n| n == 0) {
            return Err(Error::config("encoder needs at least two non-zero layer sizes"));
        }
        if self.encoder_sizes.last().unwrap() >= &self.encoder_sizes[0] {
            return Err(Error::config("latent width N_L must be smaller than input width N_0"));
        }
        if self.epochs == 0 || self.batch == 0 {
            return Err(Error::config("epochs and batch size must be positive"));
        }
        if !(self.learning_rate > 0.0) || !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::config("invalid learning rate or momentum"));
        }
        Ok(())
    }

    /// Mirror the encoder into the combined autoencoder layout.
    fn combined_sizes(&self) -> Vec<usize> {
        let mut sizes = self.encoder_sizes.clone();
        sizes.extend(self.encoder_sizes.iter().rev().skip(1));
        sizes
    }

    fn combined_acts(&self) -> Vec<Activation> {
        let e = self.encoder_sizes.len() - 1;
        let mut acts = vec![Activation::Tanh; e - 1];
        acts.push(self.latent_act);
        acts.extend(vec![Activation::Tanh; e - 1]);
        acts.push(Activation::Linear);
        acts
    }
}

/// Training output: the two halves plus the epoch loss trace.
#[derive(Debug, Clone)]
pub struct TrainedAutoencoder {
    pub encoder: FnnModel,
    pub decoder: FnnModel,
    pub mse_history: Vec<f64>,
}

/// Train encoder and decoder jointly to reproduce the input at the output.
///
/// Minibatch gradient descent with momentum; the per-epoch loss recorded in
/// `mse_history` is the batch-weighted mean of losses as visited during the
/// epoch. Non-finite loss aborts with a training error.
pub fn train_autoencoder(samples: &[Vec<f64>], cfg: &TrainConfig) -> Result<TrainedAutoencoder> {
    cfg.validate()?;
    let n_0 = cfg.encoder_sizes[0];
    if samples.is_empty() {
        return Err(Error::precondition("empty training set"));
    }
    for s in samples {
        if s.len() != n_0 {
            return Err(Error::config(format!(
                "sample length {} does not match N_0 = {n_0}",
                s.len()
            )));
        }
        if s.iter().any(|x| !x.is_finite()) {
            return Err(Error::training("non-finite training sample"));
        }
    }

    let sizes = cfg.combined_sizes();
    let acts = cfg.combined_acts();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let init = init_fnn_with_rng(ModelRole::Encoder, &sizes, &acts, &mut rng)?;
    let mut net = NetF64::from_model(&init);

    let mut vw: Vec<Vec<f64>> = net.w.iter().map(|w| vec![0.0; w.len()]).collect();
    let mut vb: Vec<Vec<f64>> = net.b.iter().map(|b| vec![0.0; b.len()]).collect();
    let mut gw: Vec<Vec<f64>> = vw.clone();
    let mut gb: Vec<Vec<f64>> = vb.clone();

    let mut order: Vec<usize> = (0..samples.len()).collect();
    let mut history = Vec::with_capacity(cfg.epochs);

    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for chunk in order.chunks(cfg.batch) {
            let inputs: Vec<Vec<f64>> = chunk.iter().map(|&i| samples[i].clone()).collect();
            for g in gw.iter_mut().chain(gb.iter_mut()) {
                g.iter_mut().for_each(|x| *x = 0.0);
            }
            let loss = net.accumulate_batch(&inputs, &inputs, &mut gw, &mut gb)?;
            if !loss.is_finite() {
                return Err(Error::training(format!("loss diverged to {loss}")));
            }
            epoch_loss += loss * chunk.len() as f64;
            for l in 0..net.n_layers() {
                for ((w, v), g) in net.w[l].iter_mut().zip(&mut vw[l]).zip(&gw[l]) {
                    *v = cfg.momentum * *v - cfg.learning_rate * g;
                    *w += *v;
                }
                for ((b, v), g) in net.b[l].iter_mut().zip(&mut vb[l]).zip(&gb[l]) {
                    *v = cfg.momentum * *v - cfg.learning_rate * g;
                    *b += *v;
                }
            }
        }
        history.push(epoch_loss / samples.len() as f64);
    }

    let (encoder, decoder) = net.split_halves(cfg.encoder_sizes.len() - 1);
    encoder.validate()?;
    decoder.validate()?;
    Ok(TrainedAutoencoder { encoder, decoder, mse_history: history })
}

/// Weight-quantized model for over-the-air sharing. Weights become
/// `bits`-wide integers under one symmetric per-tensor scale; biases stay
/// at full width.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantizedModel {
    pub role: ModelRole,
    pub layer_sizes: Vec<usize>,
    pub acts: Vec<Activation>,
    pub bits: u8,
    pub scales: Vec<f32>,
    pub weights: Vec<Vec<i32>>,
    pub biases: Vec<Vec<f32>>,
}

pub fn ptq_quantize(model: &FnnModel, bits: u8) -> Result<QuantizedModel> {
    model.validate()?;
    if !(2..=16).contains(&bits) {
        return Err(Error::config(format!("PTQ bit width {bits} out of range 2..=16")));
    }
    let qmax = (1i32 << (bits - 1)) - 1;
    let mut scales = Vec::with_capacity(model.weights.len());
    let mut qweights = Vec::with_capacity(model.weights.len());
    for w in &model.weights {
        let max_abs = w.iter().fold(0.0f32, |m, &x| m.max(x.abs()));
        let scale = if max_abs > 0.0 { max_abs / qmax as f32 } else { 1.0 };
        scales.push(scale);
        qweights.push(
            w.iter()
                .map(|&x| {
                    let q = (x as f64 / scale as f64).round() as i32;
                    q.clamp(-qmax, qmax)
                })
                .collect(),
        );
    }
    Ok(QuantizedModel {
        role: model.role,
        layer_sizes: model.layer_sizes.clone(),
        acts: model.acts.clone(),
        bits,
        scales,
        weights: qweights,
        biases: model.biases.clone(),
    })
}

pub fn ptq_dequantize(qm: &QuantizedModel) -> Result<FnnModel> {
    let model = FnnModel {
        role: qm.role,
        layer_sizes: qm.layer_sizes.clone(),
        acts: qm.acts.clone(),
        weights: qm
            .weights
            .iter()
            .zip(&qm.scales)
            .map(|(w, &s)| w.iter().map(|&q| (q as f64 * s as f64) as f32).collect())
            .collect(),
        biases: qm.biases.clone(),
    };
    model.validate()?;
    Ok(model)
}

/// How shared coefficients are counted.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Quantization {
    None,
    Ptq(u8),
}

/// Over-the-air size of a model set: full-width weights and biases, or
/// narrow integer weights with full-width biases under PTQ.
pub fn model_sharing_bits(models: &[&FnnModel], quant: Quantization) -> u64 {
    let weights: u64 = models.iter().map(|m| m.num_weights()).sum();
    let biases: u64 = models.iter().map(|m| m.num_biases()).sum();
    match quant {
        Quantization::None => 32 * (weights + biases),
        Quantization::Ptq(bits) => bits as u64 * weights + 32 * biases,
    }
}
