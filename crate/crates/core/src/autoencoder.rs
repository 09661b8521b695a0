//! Single-hidden-layer autoencoders trained by mini-batch SGD, greedy
//! layer-wise stacking with sigmoid binarization between layers, and an
//! oriented-stroke score for learned filters.
//!
//! A layer computes `x -> W2 act(W1 x + b1) + b2`. Rows of `W1` are the
//! filters; the per-example loss is the squared reconstruction error
//! `|x_hat - x|^2`, averaged over examples.

use std::io::{Read, Write};

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::figures::{rasterize, Extent, Figure, RasterImage};
use crate::group::stream_rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Sigmoid,
    Rectifier,
    /// Linear hidden layer; used to check derivatives of the linear parts.
    Identity,
}

impl Activation {
    pub fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Sigmoid => sigmoid(z),
            Activation::Rectifier => z.max(0.0),
            Activation::Identity => z,
        }
    }

    /// Derivative expressed through the pre-activation `z` and output `a`.
    fn slope(self, z: f64, a: f64) -> f64 {
        match self {
            Activation::Sigmoid => a * (1.0 - a),
            Activation::Rectifier => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Identity => 1.0,
        }
    }

    pub fn derivative(self, z: f64) -> f64 {
        self.slope(z, self.apply(z))
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "sigmoid" => Some(Activation::Sigmoid),
            "rectifier" | "relu" => Some(Activation::Rectifier),
            "identity" | "linear" => Some(Activation::Identity),
            _ => None,
        }
    }
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Componentwise activation of a pre-activation vector.
pub fn activation(z: &[f64], kind: Activation) -> Vec<f64> {
    z.iter().map(|&v| kind.apply(v)).collect()
}

/// One autoencoder layer. Matrices are row-major: `encode_weights` is h x d,
/// `decode_weights` is d x h.
#[derive(Debug, Clone, PartialEq)]
pub struct AeParams {
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub encode_weights: Vec<f64>,
    pub encode_bias: Vec<f64>,
    pub decode_weights: Vec<f64>,
    pub decode_bias: Vec<f64>,
    pub activation: Activation,
}

impl AeParams {
    pub fn zeros(input_dim: usize, hidden_dim: usize, activation: Activation) -> Self {
        Self {
            input_dim,
            hidden_dim,
            encode_weights: vec![0.0; hidden_dim * input_dim],
            encode_bias: vec![0.0; hidden_dim],
            decode_weights: vec![0.0; input_dim * hidden_dim],
            decode_bias: vec![0.0; input_dim],
            activation,
        }
    }

    /// Weights i.i.d. uniform in `[-1/sqrt(d), 1/sqrt(d)]`, biases zero.
    pub fn random(input_dim: usize, hidden_dim: usize, activation: Activation, seed: u64) -> Self {
        let mut rng = stream_rng(seed, 0);
        let bound = 1.0 / (input_dim as f64).sqrt();
        let mut draw = |n: usize| (0..n).map(|_| rng.random_range(-bound..=bound)).collect::<Vec<f64>>();
        let encode_weights = draw(hidden_dim * input_dim);
        let decode_weights = draw(input_dim * hidden_dim);
        Self {
            input_dim,
            hidden_dim,
            encode_weights,
            encode_bias: vec![0.0; hidden_dim],
            decode_weights,
            decode_bias: vec![0.0; input_dim],
            activation,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let (d, h) = (self.input_dim, self.hidden_dim);
        for (len, want) in [
            (self.encode_weights.len(), h * d),
            (self.encode_bias.len(), h),
            (self.decode_weights.len(), d * h),
            (self.decode_bias.len(), d),
        ] {
            if len != want {
                return Err(Error::DimensionMismatch { expected: want, got: len });
            }
        }
        if self.values().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("non-finite parameter".into()));
        }
        Ok(())
    }

    fn values(&self) -> impl Iterator<Item = &f64> {
        self.encode_weights.iter().chain(&self.encode_bias).chain(&self.decode_weights).chain(&self.decode_bias)
    }

    /// Encoder row `k` (the k-th learned filter).
    pub fn filter(&self, k: usize) -> &[f64] {
        &self.encode_weights[k * self.input_dim..(k + 1) * self.input_dim]
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.input_dim {
            return Err(Error::DimensionMismatch { expected: self.input_dim, got: x.len() });
        }
        Ok(())
    }

    /// Writes the `AEP1` format: magic, d and h as u32 LE, then the encode
    /// weights, encode bias, decode weights and decode bias as f64 LE.
    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(b"AEP1")?;
        w.write_all(&(self.input_dim as u32).to_le_bytes())?;
        w.write_all(&(self.hidden_dim as u32).to_le_bytes())?;
        for v in self.values() {
            w.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    /// Reads the `AEP1` format. The file carries no activation, so the
    /// layer comes back as a sigmoid layer.
    pub fn read_from<R: Read>(mut r: R) -> Result<Self> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != b"AEP1" {
            return Err(Error::Format(format!("bad magic {magic:?}")));
        }
        let mut word = [0u8; 4];
        r.read_exact(&mut word)?;
        let d = u32::from_le_bytes(word) as usize;
        r.read_exact(&mut word)?;
        let h = u32::from_le_bytes(word) as usize;
        let mut read_vec = |n: usize| -> Result<Vec<f64>> {
            let mut out = Vec::with_capacity(n);
            let mut buf = [0u8; 8];
            for _ in 0..n {
                r.read_exact(&mut buf)?;
                out.push(f64::from_le_bytes(buf));
            }
            Ok(out)
        };
        let encode_weights = read_vec(h * d)?;
        let encode_bias = read_vec(h)?;
        let decode_weights = read_vec(d * h)?;
        let decode_bias = read_vec(d)?;
        let params = Self {
            input_dim: d,
            hidden_dim: h,
            encode_weights,
            encode_bias,
            decode_weights,
            decode_bias,
            activation: Activation::Sigmoid,
        };
        params.validate()?;
        Ok(params)
    }
}

/// `W1 x + b1`: each hidden unit correlates its filter with the input.
pub fn preactivation(params: &AeParams, input: &[f64]) -> Result<Vec<f64>> {
    params.check_input(input)?;
    Ok(preactivation_unchecked(params, input))
}

fn preactivation_unchecked(params: &AeParams, input: &[f64]) -> Vec<f64> {
    (0..params.hidden_dim)
        .map(|k| params.filter(k).iter().zip(input).map(|(w, x)| w * x).sum::<f64>() + params.encode_bias[k])
        .collect()
}

/// Hidden activations `act(W1 x + b1)`.
pub fn encode(params: &AeParams, input: &[f64]) -> Result<Vec<f64>> {
    Ok(activation(&preactivation(params, input)?, params.activation))
}

fn decode(params: &AeParams, hidden: &[f64]) -> Vec<f64> {
    let h = params.hidden_dim;
    (0..params.input_dim)
        .map(|i| {
            let row = &params.decode_weights[i * h..(i + 1) * h];
            row.iter().zip(hidden).map(|(w, a)| w * a).sum::<f64>() + params.decode_bias[i]
        })
        .collect()
}

/// The composite map `x -> W2 act(W1 x + b1) + b2`.
pub fn reconstruct(params: &AeParams, input: &[f64]) -> Result<Vec<f64>> {
    Ok(decode(params, &encode(params, input)?))
}

/// Squared reconstruction error `|x_hat - x|^2` of one example.
pub fn example_loss(params: &AeParams, input: &[f64]) -> Result<f64> {
    let out = reconstruct(params, input)?;
    Ok(out.iter().zip(input).map(|(y, x)| (y - x).powi(2)).sum())
}

/// Mean per-example loss over a dataset.
pub fn dataset_loss(params: &AeParams, data: &[Vec<f64>]) -> Result<f64> {
    let mut total = 0.0;
    for x in data {
        total += example_loss(params, x)?;
    }
    Ok(total / data.len().max(1) as f64)
}

/// Gradient of the mean batch loss, laid out like [`AeParams`].
pub fn gradient(params: &AeParams, batch: &[&[f64]]) -> Result<AeParams> {
    loss_and_gradient(params, batch).map(|(_, g)| g)
}

/// Mean batch loss at `params` together with its gradient.
fn loss_and_gradient(params: &AeParams, batch: &[&[f64]]) -> Result<(f64, AeParams)> {
    let (d, h) = (params.input_dim, params.hidden_dim);
    let mut grad = AeParams::zeros(d, h, params.activation);
    let scale = 1.0 / batch.len().max(1) as f64;
    let mut delta_out = vec![0.0; d];
    let mut delta_hidden = vec![0.0; h];
    let mut loss = 0.0;
    for &x in batch {
        params.check_input(x)?;
        let z = preactivation_unchecked(params, x);
        let a = activation(&z, params.activation);
        let y = decode(params, &a);
        for i in 0..d {
            let r = y[i] - x[i];
            loss += r * r * scale;
            delta_out[i] = 2.0 * r * scale;
        }
        delta_hidden.iter_mut().for_each(|v| *v = 0.0);
        for i in 0..d {
            let di = delta_out[i];
            if di == 0.0 {
                continue;
            }
            let w_row = &params.decode_weights[i * h..(i + 1) * h];
            let g_row = &mut grad.decode_weights[i * h..(i + 1) * h];
            for k in 0..h {
                g_row[k] += di * a[k];
                delta_hidden[k] += di * w_row[k];
            }
            grad.decode_bias[i] += di;
        }
        for k in 0..h {
            let dz = delta_hidden[k] * params.activation.slope(z[k], a[k]);
            if dz == 0.0 {
                continue;
            }
            grad.encode_bias[k] += dz;
            let g_row = &mut grad.encode_weights[k * d..(k + 1) * d];
            for (g, &xi) in g_row.iter_mut().zip(x) {
                *g += dz * xi;
            }
        }
    }
    Ok((loss, grad))
}

fn sgd_step(params: &mut AeParams, grad: &AeParams, lr: f64) {
    let pairs = [
        (&mut params.encode_weights, &grad.encode_weights),
        (&mut params.encode_bias, &grad.encode_bias),
        (&mut params.decode_weights, &grad.decode_weights),
        (&mut params.decode_bias, &grad.decode_bias),
    ];
    for (p, g) in pairs {
        for (pv, gv) in p.iter_mut().zip(g) {
            *pv -= lr * gv;
        }
    }
}

/// Hyperparameters of one layer's training run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LayerSchedule {
    pub hidden: usize,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub activation: Activation,
}

impl Default for LayerSchedule {
    fn default() -> Self {
        Self { hidden: 16, learning_rate: 0.1, epochs: 200, batch_size: 10, seed: 0, activation: Activation::Sigmoid }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainSpec {
    /// Training vectors, all of the same length.
    pub data: Vec<Vec<f64>>,
    pub schedule: LayerSchedule,
}

impl TrainSpec {
    pub fn from_images(images: &[RasterImage], schedule: LayerSchedule) -> Result<Self> {
        let side = images.first().map(|i| i.side()).ok_or_else(|| Error::InvalidInput("empty dataset".into()))?;
        if let Some(bad) = images.iter().find(|i| i.side() != side) {
            return Err(Error::DimensionMismatch { expected: side, got: bad.side() });
        }
        Ok(Self { data: images.iter().map(|i| i.to_vector()).collect(), schedule })
    }

    fn validate(&self) -> Result<usize> {
        let d = self.data.first().map(Vec::len).ok_or_else(|| Error::InvalidInput("empty dataset".into()))?;
        if let Some(bad) = self.data.iter().find(|x| x.len() != d) {
            return Err(Error::DimensionMismatch { expected: d, got: bad.len() });
        }
        let s = &self.schedule;
        if d == 0 || s.hidden == 0 || s.batch_size == 0 || !(s.learning_rate > 0.0) {
            return Err(Error::InvalidInput("need d, hidden, batch_size >= 1 and learning_rate > 0".into()));
        }
        Ok(d)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trained {
    pub params: AeParams,
    /// Dataset loss at initialization, then the mean minibatch loss seen
    /// during each epoch.
    pub loss_curve: Vec<f64>,
    /// Dataset loss of the returned parameters.
    pub final_loss: f64,
}

pub fn train(spec: &TrainSpec) -> Result<Trained> {
    let d = spec.validate()?;
    let s = spec.schedule;
    let mut params = AeParams::random(d, s.hidden, s.activation, s.seed);
    let mut loss_curve = vec![dataset_loss(&params, &spec.data)?];
    let mut order: Vec<usize> = (0..spec.data.len()).collect();
    let mut rng = stream_rng(s.seed, 1);
    for epoch in 1..=s.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for chunk in order.chunks(s.batch_size) {
            let batch: Vec<&[f64]> = chunk.iter().map(|&i| spec.data[i].as_slice()).collect();
            let (batch_loss, grad) = loss_and_gradient(&params, &batch)?;
            total += batch_loss * chunk.len() as f64;
            sgd_step(&mut params, &grad, s.learning_rate);
        }
        let loss = total / order.len() as f64;
        if !loss.is_finite() || params.values().any(|v| !v.is_finite()) {
            return Err(Error::Diverged { epoch, loss });
        }
        loss_curve.push(loss);
    }
    let final_loss = dataset_loss(&params, &spec.data)?;
    Ok(Trained { params, loss_curve, final_loss })
}

/// Worst relative error between backpropagated gradients and central
/// differences (step 1e-5) on a random instance with d <= 12, h <= 4.
pub fn gradient_check(act: Activation, seed: u64) -> f64 {
    let mut rng = stream_rng(seed, 99);
    let d = rng.random_range(2..=12usize);
    let h = rng.random_range(1..=4usize);
    let mut p = AeParams::random(d, h, act, seed);
    for b in p.encode_bias.iter_mut().chain(p.decode_bias.iter_mut()) {
        *b = rng.random_range(-0.5..0.5);
    }
    let data: Vec<Vec<f64>> = (0..3).map(|_| (0..d).map(|_| rng.random_range(0.0..1.0)).collect()).collect();
    let batch: Vec<&[f64]> = data.iter().map(Vec::as_slice).collect();
    let grad = gradient(&p, &batch).expect("dimensions agree");
    let step = 1e-5;
    let mut worst: f64 = 0.0;
    let fields: [fn(&mut AeParams) -> &mut Vec<f64>; 4] =
        [|q| &mut q.encode_weights, |q| &mut q.encode_bias, |q| &mut q.decode_weights, |q| &mut q.decode_bias];
    let gfields = [&grad.encode_weights, &grad.encode_bias, &grad.decode_weights, &grad.decode_bias];
    for (field, g) in fields.iter().zip(gfields) {
        for i in 0..g.len() {
            let mut plus = p.clone();
            field(&mut plus)[i] += step;
            let mut minus = p.clone();
            field(&mut minus)[i] -= step;
            let num = (dataset_loss(&plus, &data).expect("dimensions agree") - dataset_loss(&minus, &data).expect("dimensions agree")) / (2.0 * step);
            let rel = (num - g[i]).abs() / num.abs().max(g[i].abs()).max(1e-6);
            worst = worst.max(rel);
        }
    }
    worst
}

pub fn binarize(values: &[f64], threshold: f64) -> Vec<f64> {
    values.iter().map(|&v| if v >= threshold { 1.0 } else { 0.0 }).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerStack {
    pub layers: Vec<AeParams>,
    pub loss_curves: Vec<Vec<f64>>,
    pub binarize_threshold: f64,
}

impl LayerStack {
    /// Input of layer `k` for a raw input: earlier layers' activations,
    /// binarized between layers.
    pub fn layer_input(&self, raw: &[f64], k: usize) -> Result<Vec<f64>> {
        let mut x = raw.to_vec();
        for layer in &self.layers[..k] {
            x = binarize(&encode(layer, &x)?, self.binarize_threshold);
        }
        Ok(x)
    }
}

/// Greedy layer-wise pretraining: layer 1 learns the raw data, each deeper
/// layer learns the binarized activations of the frozen layer below it.
pub fn stack_pretrain(data: &[Vec<f64>], schedules: &[LayerSchedule], binarize_threshold: f64) -> Result<LayerStack> {
    if !(binarize_threshold > 0.0 && binarize_threshold < 1.0) {
        return Err(Error::InvalidInput(format!("binarize threshold must lie in (0, 1), got {binarize_threshold}")));
    }
    if schedules.is_empty() {
        return Err(Error::InvalidInput("at least one layer required".into()));
    }
    let mut inputs = data.to_vec();
    let mut layers = Vec::new();
    let mut loss_curves = Vec::new();
    for (k, schedule) in schedules.iter().enumerate() {
        if k > 0 {
            let below: &AeParams = &layers[k - 1];
            inputs = inputs
                .iter()
                .map(|x| encode(below, x).map(|a| binarize(&a, binarize_threshold)))
                .collect::<Result<_>>()?;
        }
        let trained = train(&TrainSpec { data: inputs.clone(), schedule: *schedule })?;
        layers.push(trained.params);
        loss_curves.push(trained.loss_curve);
    }
    Ok(LayerStack { layers, loss_curves, binarize_threshold })
}

/// Stroke orientations (degrees) and offsets (pixels) of the template bank.
pub const TEMPLATE_ANGLES_DEG: std::ops::RangeInclusive<u32> = 0..=17;
pub const TEMPLATE_OFFSETS: [f64; 5] = [-4.0, -2.0, 0.0, 2.0, 4.0];

/// A zero-mean, unit-norm copy of `v`; `None` when `v` is constant.
fn normalized(v: &[f64]) -> Option<Vec<f64>> {
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    let centered: Vec<f64> = v.iter().map(|x| x - mean).collect();
    let norm = centered.iter().map(|x| x * x).sum::<f64>().sqrt();
    let scale = v.iter().map(|x| x.abs()).fold(0.0, f64::max);
    (norm > 1e-12 * scale.max(f64::MIN_POSITIVE)).then(|| centered.iter().map(|x| x / norm).collect())
}

/// Binary line strokes across a `side x side` patch: the pixels whose centers
/// lie within half a pixel of a line at angle `deg` passing `offset` pixels
/// from the patch center.
pub fn stroke_template(side: usize, deg: f64, offset: f64) -> Vec<f64> {
    let (s, c) = deg.to_radians().sin_cos();
    let mid = (side as f64 - 1.0) / 2.0;
    let mut out = vec![0.0; side * side];
    for r in 0..side {
        for col in 0..side {
            let x = col as f64 - mid;
            let y = mid - r as f64;
            if (-s * x + c * y - offset).abs() <= 0.5 + 1e-9 {
                out[r * side + col] = 1.0;
            }
        }
    }
    out
}

/// Normalized oriented-stroke templates for 0..170 degrees in 10 degree
/// steps times five offsets.
pub fn stroke_bank(side: usize) -> Vec<Vec<f64>> {
    let mut bank = Vec::new();
    for k in TEMPLATE_ANGLES_DEG {
        for &o in &TEMPLATE_OFFSETS {
            if let Some(t) = normalized(&stroke_template(side, 10.0 * k as f64, o)) {
                bank.push(t);
            }
        }
    }
    bank
}

/// Largest absolute normalized cross-correlation between a filter and the
/// stroke bank. Constant filters score 0.
pub fn edge_score(filter: &[f64], bank: &[Vec<f64>]) -> f64 {
    let Some(f) = normalized(filter) else { return 0.0 };
    bank.iter()
        .map(|t| t.iter().zip(&f).map(|(a, b)| a * b).sum::<f64>().abs())
        .fold(0.0, f64::max)
        .min(1.0)
}

/// Scores of `draws` i.i.d. standard-normal filters.
pub fn random_filter_scores(side: usize, draws: usize, seed: u64) -> Vec<f64> {
    let bank = stroke_bank(side);
    let mut rng = stream_rng(seed, 7);
    (0..draws)
        .map(|_| {
            let f: Vec<f64> = (0..side * side).map(|_| rng.sample(StandardNormal)).collect();
            edge_score(&f, &bank)
        })
        .collect()
}

/// Null distribution of the mean score of `filters` random filters,
/// `draws` times.
pub fn random_filter_mean_null(side: usize, filters: usize, draws: usize, seed: u64) -> Vec<f64> {
    let scores = random_filter_scores(side, filters * draws, seed);
    scores.chunks(filters).map(|c| c.iter().sum::<f64>() / c.len() as f64).collect()
}

/// Empirical quantile by linear interpolation between order statistics.
pub fn quantile(values: &[f64], q: f64) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    if v.is_empty() {
        return f64::NAN;
    }
    let pos = q.clamp(0.0, 1.0) * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    v[lo] + (pos - lo as f64) * (v[hi] - v[lo])
}

/// Synthetic corpus of filled rectangles: random center in the middle half
/// of the image, sides 4..=12 pixels, orientation a multiple of 15 degrees.
pub fn rectangle_corpus(count: usize, side: usize, seed: u64) -> Result<Vec<RasterImage>> {
    let mut rng = stream_rng(seed, 11);
    let n = side as f64;
    let extent = Extent::new([0.0, 0.0], n);
    (0..count)
        .map(|_| {
            let cx = rng.random_range(0.25 * n..0.75 * n);
            let cy = rng.random_range(0.25 * n..0.75 * n);
            let w = rng.random_range(4.0..=12.0) / 2.0;
            let h = rng.random_range(4.0..=12.0) / 2.0;
            let theta = (15 * rng.random_range(0..12u32)) as f64;
            let (s, c) = theta.to_radians().sin_cos();
            let vertices = [[-w, -h], [w, -h], [w, h], [-w, h]]
                .iter()
                .map(|p| [cx + c * p[0] - s * p[1], cy + s * p[0] + c * p[1]])
                .collect();
            let mut img = rasterize(&Figure::Polygon { vertices }, side, extent)?;
            img.set_label("rectangle");
            Ok(img)
        })
        .collect()
}

/// Writes a filter as a min-max normalized PGM.
pub fn write_filter_pgm<W: Write>(w: W, filter: &[f64], side: usize, comment: &str) -> Result<()> {
    crate::figures::write_pgm_normalized(w, side, side, filter, comment)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params_from(encode: &[f64], bias: &[f64], d: usize) -> AeParams {
        let h = bias.len();
        AeParams {
            input_dim: d,
            hidden_dim: h,
            encode_weights: encode.to_vec(),
            encode_bias: bias.to_vec(),
            decode_weights: vec![0.0; d * h],
            decode_bias: vec![0.0; d],
            activation: Activation::Sigmoid,
        }
    }

    #[test]
    fn preactivation_examples() {
        let zero = AeParams::zeros(3, 2, Activation::Sigmoid);
        assert_eq!(preactivation(&zero, &[1.0, -2.0, 3.0]).unwrap(), vec![0.0, 0.0]);
        let input = [0.5, -1.5, 2.0];
        let selfcorr = params_from(&input, &[0.0], 3);
        assert!((preactivation(&selfcorr, &input).unwrap()[0] - 6.5).abs() < 1e-12);
        let p = params_from(&[1.0, 2.0], &[0.5], 2);
        assert!((preactivation(&p, &[3.0, -1.0]).unwrap()[0] - 1.5).abs() < 1e-12);
        assert!(preactivation(&p, &[1.0]).is_err());
    }

    #[test]
    fn activation_examples() {
        assert_eq!(activation(&[0.0], Activation::Sigmoid), vec![0.5]);
        for z in [25.0, 40.0, 800.0] {
            assert!((sigmoid(z) - 1.0).abs() < 1e-9 * 1.0e-1_f64.max(1e-9) + 1e-9);
        }
        assert!((sigmoid(1.0) - 0.7310585786).abs() < 1e-10);
        assert_eq!(activation(&[-2.0, 3.0], Activation::Rectifier), vec![0.0, 3.0]);
        assert!(sigmoid(-800.0) >= 0.0);
    }

    #[test]
    fn reconstruct_zero_params_gives_decode_bias() {
        let mut p = AeParams::zeros(4, 3, Activation::Sigmoid);
        p.decode_bias = vec![0.1, -0.2, 0.3, 0.4];
        assert_eq!(reconstruct(&p, &[1.0, 0.0, 1.0, 1.0]).unwrap(), p.decode_bias);
    }

    #[test]
    fn saturated_identity_reconstructs_binary_input() {
        let d = 5;
        let gain = 25.0;
        let mut p = AeParams::zeros(d, d, Activation::Sigmoid);
        for i in 0..d {
            p.encode_weights[i * d + i] = 2.0 * gain;
            p.encode_bias[i] = -gain;
            p.decode_weights[i * d + i] = 1.0;
        }
        let x = [1.0, 0.0, 0.0, 1.0, 1.0];
        let y = reconstruct(&p, &x).unwrap();
        for (a, b) in y.iter().zip(&x) {
            assert!((a - b).abs() < 1e-6 * 100.0, "{a} vs {b}");
        }
    }

    #[test]
    fn aep1_round_trip() {
        let p = AeParams::random(7, 3, Activation::Sigmoid, 4);
        let mut buf = Vec::new();
        p.write_to(&mut buf).unwrap();
        assert_eq!(&buf[..4], b"AEP1");
        assert_eq!(u32::from_le_bytes(buf[4..8].try_into().unwrap()), 7);
        assert_eq!(u32::from_le_bytes(buf[8..12].try_into().unwrap()), 3);
        assert_eq!(buf.len(), 12 + 8 * (21 + 3 + 21 + 7));
        assert_eq!(AeParams::read_from(buf.as_slice()).unwrap(), p);
        assert!(AeParams::read_from(&b"AEP2\0\0\0\0"[..]).is_err());
    }

    #[test]
    fn zero_epochs_returns_initialization() {
        let data = vec![vec![1.0, 0.0, 1.0], vec![0.0, 1.0, 0.0]];
        let schedule = LayerSchedule { hidden: 2, epochs: 0, seed: 3, ..Default::default() };
        let out = train(&TrainSpec { data: data.clone(), schedule }).unwrap();
        assert_eq!(out.params, AeParams::random(3, 2, Activation::Sigmoid, 3));
        assert_eq!(out.loss_curve.len(), 1);
        assert!((out.loss_curve[0] - dataset_loss(&out.params, &data).unwrap()).abs() < 1e-15);
    }

    #[test]
    fn memorizes_single_image() {
        let img: Vec<f64> = (0..16).map(|i| ((i * 7) % 3 == 0) as u8 as f64).collect();
        let schedule = LayerSchedule { hidden: 2, epochs: 300, batch_size: 1, seed: 1, ..Default::default() };
        let out = train(&TrainSpec { data: vec![img.clone()], schedule }).unwrap();
        let first = out.loss_curve[0];
        let last = *out.loss_curve.last().unwrap();
        assert!(last <= 0.1 * first, "{first} -> {last}");
        assert!(example_loss(&out.params, &img).unwrap() <= last + 1e-12);
    }

    #[test]
    fn divergence_is_reported() {
        let data = vec![vec![50.0; 8]; 4];
        let schedule = LayerSchedule { hidden: 4, epochs: 400, learning_rate: 10.0, ..Default::default() };
        assert!(matches!(train(&TrainSpec { data, schedule }), Err(Error::Diverged { .. })));
    }

    #[test]
    fn empty_or_ragged_dataset_rejected() {
        let s = LayerSchedule::default();
        assert!(train(&TrainSpec { data: vec![], schedule: s }).is_err());
        assert!(train(&TrainSpec { data: vec![vec![1.0], vec![1.0, 0.0]], schedule: s }).is_err());
    }

    #[test]
    fn backprop_matches_central_differences() {
        for seed in 0..20 {
            for act in [Activation::Sigmoid, Activation::Identity] {
                let err = gradient_check(act, seed);
                assert!(err <= 1e-4, "seed {seed} {act:?}: {err}");
            }
        }
    }

    #[test]
    fn binarize_threshold() {
        assert_eq!(binarize(&[0.2, 0.8], 0.5), vec![0.0, 1.0]);
    }

    #[test]
    fn single_layer_stack_equals_train() {
        let data: Vec<Vec<f64>> = (0..6).map(|i| (0..9).map(|j| ((i + j) % 2) as f64).collect()).collect();
        let schedule = LayerSchedule { hidden: 3, epochs: 5, batch_size: 2, seed: 8, ..Default::default() };
        let stack = stack_pretrain(&data, &[schedule], 0.5).unwrap();
        let single = train(&TrainSpec { data, schedule }).unwrap();
        assert_eq!(stack.layers, vec![single.params]);
        assert_eq!(stack.loss_curves, vec![single.loss_curve]);
        assert!(stack_pretrain(&[], &[schedule], 1.5).is_err());
    }

    #[test]
    fn edge_score_examples() {
        let bank = stroke_bank(16);
        assert_eq!(bank.len(), 90);
        let t = stroke_template(16, 40.0, 2.0);
        assert!((edge_score(&t, &bank) - 1.0).abs() < 1e-12);
        assert_eq!(edge_score(&[0.3; 256], &bank), 0.0);
        let neg: Vec<f64> = t.iter().map(|v| -v).collect();
        assert!((edge_score(&neg, &bank) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn quantile_examples() {
        let v = [4.0, 1.0, 3.0, 2.0, 5.0];
        assert_eq!(quantile(&v, 0.5), 3.0);
        assert_eq!(quantile(&v, 1.0), 5.0);
        assert_eq!(quantile(&v, 0.25), 2.0);
    }

    #[test]
    fn rectangles_are_binary_and_nonempty() {
        let imgs = rectangle_corpus(50, 16, 0).unwrap();
        assert_eq!(imgs.len(), 50);
        for img in &imgs {
            assert!(img.count() >= 9, "{}", img.count());
        }
        assert_eq!(imgs, rectangle_corpus(50, 16, 0).unwrap());
    }
}
