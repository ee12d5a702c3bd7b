//! Fully connected classifier with softmax output, Adam training and
//! two-model prediction fusion.

use std::io::{Read, Write};
use std::path::Path;

use ndarray::{linalg::general_mat_mul, Array1, Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const HIDDEN_LAYERS: [usize; 4] = [512, 256, 128, 64];
const MODEL_MAGIC: &[u8; 4] = b"TCML";
pub const MODEL_FORMAT_VERSION: u32 = 1;
const ACTIVATION_RELU: u8 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    /// Learning rate for epochs `1..=switch_epoch`.
    pub lr_initial: f64,
    /// Learning rate afterwards.
    pub lr_final: f64,
    pub switch_epoch: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 100,
            lr_initial: 1e-2,
            lr_final: 1e-3,
            switch_epoch: 50,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            batch_size: 32,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::invalid("epochs and batch size must be positive"));
        }
        if !(self.lr_initial > 0.0 && self.lr_final > 0.0) {
            return Err(Error::invalid("learning rates must be positive"));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) || !(self.epsilon > 0.0) {
            return Err(Error::invalid("Adam constants out of range"));
        }
        Ok(())
    }

    /// Learning rate of the 1-based `epoch`.
    pub fn learning_rate(&self, epoch: usize) -> f64 {
        if epoch <= self.switch_epoch {
            self.lr_initial
        } else {
            self.lr_final
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    /// `[input, hidden..., classes]`.
    pub sizes: Vec<usize>,
    /// Layer `l` maps `sizes[l]` to `sizes[l + 1]`; shape `(in, out)`.
    pub weights: Vec<Array2<f64>>,
    pub biases: Vec<Array1<f64>>,
    pub classes: Vec<String>,
    pub train_config: Option<TrainConfig>,
}

/// Parameter gradients, laid out like the model.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub weights: Vec<Array2<f64>>,
    pub biases: Vec<Array1<f64>>,
}

impl Mlp {
    /// `[input, 512, 256, 128, 64, classes]` with seeded He-uniform weights and zero biases.
    pub fn new(input_dim: usize, classes: Vec<String>, seed: u64) -> Result<Self> {
        let mut sizes = vec![input_dim];
        sizes.extend(HIDDEN_LAYERS);
        sizes.push(classes.len());
        Self::with_layers(sizes, classes, seed)
    }

    pub fn with_layers(sizes: Vec<usize>, classes: Vec<String>, seed: u64) -> Result<Self> {
        if sizes.len() < 2 || sizes.iter().any(|&s| s == 0) {
            return Err(Error::invalid(format!("invalid layer sizes {sizes:?}")));
        }
        if *sizes.last().expect("non-empty") != classes.len() {
            return Err(Error::DimensionMismatch { context: "output layer", expected: classes.len(), got: *sizes.last().unwrap() });
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        for w in sizes.windows(2) {
            let limit = (6.0 / w[0] as f64).sqrt();
            weights.push(Array2::from_shape_fn((w[0], w[1]), |_| rng.gen_range(-limit..limit)));
            biases.push(Array1::zeros(w[1]));
        }
        Ok(Self { sizes, weights, biases, classes, train_config: None })
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn n_classes(&self) -> usize {
        self.classes.len()
    }

    fn check_input(&self, cols: usize) -> Result<()> {
        if cols != self.input_dim() {
            return Err(Error::DimensionMismatch { context: "classifier input", expected: self.input_dim(), got: cols });
        }
        Ok(())
    }

    /// Activations of every layer; the last entry holds the logits.
    fn activations(&self, x: ArrayView2<f64>) -> Vec<Array2<f64>> {
        let mut acts = vec![x.to_owned()];
        let last = self.weights.len() - 1;
        for (l, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            let a = acts.last().expect("non-empty");
            let mut z = Array2::zeros((a.nrows(), w.ncols()));
            general_mat_mul(1.0, a, w, 0.0, &mut z);
            z += b;
            if l < last {
                z.mapv_inplace(|v| v.max(0.0));
            }
            acts.push(z);
        }
        acts
    }

    /// Row-wise class probabilities.
    pub fn forward_batch(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        self.check_input(x.ncols())?;
        let mut logits = self.activations(x).pop().expect("logits");
        softmax_rows(&mut logits);
        Ok(logits)
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        let view = ArrayView2::from_shape((1, x.len()), x).expect("one row");
        Ok(self.forward_batch(view)?.row(0).to_vec())
    }

    /// Mean cross-entropy and its gradients over the rows of `x`.
    pub fn gradients(&self, x: ArrayView2<f64>, labels: &[usize]) -> Result<(f64, Gradients)> {
        self.check_input(x.ncols())?;
        if labels.len() != x.nrows() {
            return Err(Error::DimensionMismatch { context: "labels", expected: x.nrows(), got: labels.len() });
        }
        let mut acts = self.activations(x);
        let mut delta = acts.pop().expect("logits");
        softmax_rows(&mut delta);
        let b = labels.len() as f64;
        let mut loss = 0.0;
        for (r, &y) in labels.iter().enumerate() {
            loss -= delta[(r, y)].max(f64::MIN_POSITIVE).ln();
            delta[(r, y)] -= 1.0;
        }
        delta /= b;
        let n = self.weights.len();
        let mut gw = vec![Array2::zeros((0, 0)); n];
        let mut gb = vec![Array1::zeros(0); n];
        for l in (0..n).rev() {
            let a = &acts[l];
            let mut g = Array2::zeros(self.weights[l].raw_dim());
            general_mat_mul(1.0, &a.t(), &delta, 0.0, &mut g);
            gw[l] = g;
            gb[l] = delta.sum_axis(Axis(0));
            if l > 0 {
                let mut prev = Array2::zeros((delta.nrows(), self.weights[l].nrows()));
                general_mat_mul(1.0, &delta, &self.weights[l].t(), 0.0, &mut prev);
                prev.zip_mut_with(a, |d, &act| {
                    if act <= 0.0 {
                        *d = 0.0;
                    }
                });
                delta = prev;
            }
        }
        Ok((loss / b, Gradients { weights: gw, biases: gb }))
    }

    pub fn predict(&self, x: &[f64]) -> Result<(usize, f64)> {
        let p = self.forward(x)?;
        Ok(argmax(&p))
    }

    pub fn accuracy(&self, x: ArrayView2<f64>, labels: &[usize]) -> Result<f64> {
        let p = self.forward_batch(x)?;
        let hits = p.rows().into_iter().zip(labels).filter(|(r, &y)| argmax(r.as_slice().expect("contiguous")).0 == y).count();
        Ok(hits as f64 / labels.len().max(1) as f64)
    }
}

pub fn argmax(p: &[f64]) -> (usize, f64) {
    let mut best = (0, f64::NEG_INFINITY);
    for (k, &v) in p.iter().enumerate() {
        if v > best.1 {
            best = (k, v);
        }
    }
    best
}

fn softmax_rows(z: &mut Array2<f64>) {
    for mut row in z.rows_mut() {
        let m = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        row.mapv_inplace(|v| (v - m).exp());
        let s = row.sum();
        row /= s;
    }
}

struct Adam {
    m_w: Vec<Array2<f64>>,
    v_w: Vec<Array2<f64>>,
    m_b: Vec<Array1<f64>>,
    v_b: Vec<Array1<f64>>,
    t: i32,
}

impl Adam {
    fn new(model: &Mlp) -> Self {
        Self {
            m_w: model.weights.iter().map(|w| Array2::zeros(w.raw_dim())).collect(),
            v_w: model.weights.iter().map(|w| Array2::zeros(w.raw_dim())).collect(),
            m_b: model.biases.iter().map(|b| Array1::zeros(b.raw_dim())).collect(),
            v_b: model.biases.iter().map(|b| Array1::zeros(b.raw_dim())).collect(),
            t: 0,
        }
    }

    fn step(&mut self, model: &mut Mlp, g: &Gradients, lr: f64, cfg: &TrainConfig) {
        self.t += 1;
        let c1 = 1.0 - cfg.beta1.powi(self.t);
        let c2 = 1.0 - cfg.beta2.powi(self.t);
        let (b1, b2, eps) = (cfg.beta1, cfg.beta2, cfg.epsilon);
        for l in 0..model.weights.len() {
            ndarray::Zip::from(&mut model.weights[l]).and(&mut self.m_w[l]).and(&mut self.v_w[l]).and(&g.weights[l]).for_each(
                |w, m, v, &gr| {
                    *m = b1 * *m + (1.0 - b1) * gr;
                    *v = b2 * *v + (1.0 - b2) * gr * gr;
                    *w -= lr * (*m / c1) / ((*v / c2).sqrt() + eps);
                },
            );
            ndarray::Zip::from(&mut model.biases[l]).and(&mut self.m_b[l]).and(&mut self.v_b[l]).and(&g.biases[l]).for_each(
                |w, m, v, &gr| {
                    *m = b1 * *m + (1.0 - b1) * gr;
                    *v = b2 * *v + (1.0 - b2) * gr * gr;
                    *w -= lr * (*m / c1) / ((*v / c2).sqrt() + eps);
                },
            );
        }
    }
}

/// Mini-batch Adam on the mean cross-entropy. Rows are reshuffled every epoch
/// from a generator seeded by `cfg.seed`. Returns the mean training loss of each epoch.
pub fn train(model: &mut Mlp, x: &Array2<f64>, labels: &[usize], cfg: &TrainConfig) -> Result<Vec<f64>> {
    cfg.validate()?;
    if x.nrows() == 0 {
        return Err(Error::EmptyInput("training set is empty".into()));
    }
    model.check_input(x.ncols())?;
    if labels.len() != x.nrows() {
        return Err(Error::DimensionMismatch { context: "labels", expected: x.nrows(), got: labels.len() });
    }
    if let Some(&bad) = labels.iter().find(|&&y| y >= model.n_classes()) {
        return Err(Error::invalid(format!("label {bad} outside the {}-class table", model.n_classes())));
    }
    let mut seen = vec![false; model.n_classes()];
    for &y in labels {
        seen[y] = true;
    }
    if seen.iter().filter(|&&s| s).count() < 2 {
        return Err(Error::invalid("training set contains a single class"));
    }
    if let Some(k) = seen.iter().position(|s| !s) {
        log::warn!("class {:?} has no training examples", model.classes[k]);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..x.nrows()).collect();
    let mut adam = Adam::new(model);
    let mut history = Vec::with_capacity(cfg.epochs);
    let mut batch = Array2::zeros((0, x.ncols()));
    let mut batch_labels = Vec::new();
    for epoch in 1..=cfg.epochs {
        let lr = cfg.learning_rate(epoch);
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            if batch.nrows() != chunk.len() {
                batch = Array2::zeros((chunk.len(), x.ncols()));
            }
            batch_labels.clear();
            for (r, &i) in chunk.iter().enumerate() {
                batch.row_mut(r).assign(&x.row(i));
                batch_labels.push(labels[i]);
            }
            let (loss, g) = model.gradients(batch.view(), &batch_labels)?;
            total += loss * chunk.len() as f64;
            adam.step(model, &g, lr, cfg);
        }
        history.push(total / x.nrows() as f64);
    }
    model.train_config = Some(cfg.clone());
    Ok(history)
}

/// Largest relative error between analytic gradients `grads` and central
/// differences (step 1e-5) over up to `samples` parameters per layer, plus all biases.
pub fn gradient_check_against(model: &Mlp, x: &[f64], label: usize, grads: &Gradients, samples: usize, seed: u64) -> Result<f64> {
    let view = ArrayView2::from_shape((1, x.len()), x).map_err(|e| Error::invalid(e.to_string()))?;
    let h = 1e-5;
    let loss_at = |m: &Mlp| -> Result<f64> { Ok(m.gradients(view, &[label])?.0) };
    let mut probe = model.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    let rel = |a: f64, n: f64| (a - n).abs() / (a.abs() + n.abs()).max(1e-8);
    for l in 0..model.weights.len() {
        let (r, c) = model.weights[l].dim();
        for _ in 0..samples.min(r * c) {
            let (i, j) = (rng.gen_range(0..r), rng.gen_range(0..c));
            let w0 = model.weights[l][(i, j)];
            probe.weights[l][(i, j)] = w0 + h;
            let up = loss_at(&probe)?;
            probe.weights[l][(i, j)] = w0 - h;
            let down = loss_at(&probe)?;
            probe.weights[l][(i, j)] = w0;
            worst = worst.max(rel(grads.weights[l][(i, j)], (up - down) / (2.0 * h)));
        }
        for k in 0..model.biases[l].len() {
            let b0 = model.biases[l][k];
            probe.biases[l][k] = b0 + h;
            let up = loss_at(&probe)?;
            probe.biases[l][k] = b0 - h;
            let down = loss_at(&probe)?;
            probe.biases[l][k] = b0;
            worst = worst.max(rel(grads.biases[l][k], (up - down) / (2.0 * h)));
        }
    }
    Ok(worst)
}

/// Backpropagation checked against finite differences.
pub fn gradient_check(model: &Mlp, x: &[f64], label: usize) -> Result<f64> {
    let view = ArrayView2::from_shape((1, x.len()), x).map_err(|e| Error::invalid(e.to_string()))?;
    let (_, g) = model.gradients(view, &[label])?;
    gradient_check_against(model, x, label, &g, 64, 7)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Winner {
    Tops,
    Tops2,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Fused {
    pub class: usize,
    pub confidence: f64,
    pub winner: Winner,
}

/// Keeps whichever model is more confident in its own top class; exact ties
/// go to the TOPS2 model.
pub fn fuse_predictions(classes1: &[String], p1: &[f64], classes2: &[String], p2: &[f64]) -> Result<Fused> {
    if classes1 != classes2 {
        return Err(Error::ClassTableMismatch);
    }
    if p1.len() != classes1.len() || p2.len() != classes2.len() {
        return Err(Error::DimensionMismatch { context: "probability vector", expected: classes1.len(), got: p1.len().max(p2.len()) });
    }
    let (c1, q1) = argmax(p1);
    let (c2, q2) = argmax(p2);
    Ok(if q1 > q2 {
        Fused { class: c1, confidence: q1, winner: Winner::Tops }
    } else {
        Fused { class: c2, confidence: q2, winner: Winner::Tops2 }
    })
}

impl Mlp {
    /// Versioned binary: header (layer sizes, activation, class table, training
    /// settings) followed by little-endian f64 weights and biases, layer by layer.
    pub fn write_to(&self, w: &mut impl Write) -> Result<()> {
        w.write_all(MODEL_MAGIC)?;
        w.write_all(&MODEL_FORMAT_VERSION.to_le_bytes())?;
        w.write_all(&[ACTIVATION_RELU])?;
        w.write_all(&(self.sizes.len() as u32).to_le_bytes())?;
        for &s in &self.sizes {
            w.write_all(&(s as u32).to_le_bytes())?;
        }
        for c in &self.classes {
            w.write_all(&(c.len() as u32).to_le_bytes())?;
            w.write_all(c.as_bytes())?;
        }
        let cfg = match &self.train_config {
            Some(c) => serde_json::to_string(c).expect("config serializes"),
            None => String::new(),
        };
        w.write_all(&(cfg.len() as u32).to_le_bytes())?;
        w.write_all(cfg.as_bytes())?;
        for (wt, b) in self.weights.iter().zip(&self.biases) {
            for v in wt.iter().chain(b.iter()) {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn read_from(r: &mut impl Read) -> Result<Self> {
        let mut bytes = Vec::new();
        r.read_to_end(&mut bytes)?;
        let mut cur = Cursor { bytes: &bytes, pos: 0 };
        if cur.take(4)? != MODEL_MAGIC {
            return Err(Error::corrupt("not a model file"));
        }
        let version = cur.u32()?;
        if version != MODEL_FORMAT_VERSION {
            return Err(Error::VersionMismatch { found: version, expected: MODEL_FORMAT_VERSION });
        }
        if cur.take(1)?[0] != ACTIVATION_RELU {
            return Err(Error::corrupt("unknown activation"));
        }
        let n = cur.u32()? as usize;
        if !(2..=64).contains(&n) {
            return Err(Error::corrupt(format!("implausible layer count {n}")));
        }
        let sizes: Vec<usize> = (0..n).map(|_| cur.u32().map(|v| v as usize)).collect::<Result<_>>()?;
        let mut classes = Vec::new();
        for _ in 0..sizes[n - 1] {
            let len = cur.u32()? as usize;
            let s = std::str::from_utf8(cur.take(len)?).map_err(|_| Error::corrupt("class name is not UTF-8"))?;
            classes.push(s.to_string());
        }
        let cfg_len = cur.u32()? as usize;
        let cfg_text = std::str::from_utf8(cur.take(cfg_len)?).map_err(|_| Error::corrupt("settings are not UTF-8"))?;
        let train_config = if cfg_text.is_empty() {
            None
        } else {
            Some(serde_json::from_str(cfg_text).map_err(|e| Error::corrupt(format!("training settings: {e}")))?)
        };
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        for w in sizes.windows(2) {
            let wt: Vec<f64> = (0..w[0] * w[1]).map(|_| cur.f64()).collect::<Result<_>>()?;
            weights.push(Array2::from_shape_vec((w[0], w[1]), wt).expect("sized"));
            let b: Vec<f64> = (0..w[1]).map(|_| cur.f64()).collect::<Result<_>>()?;
            biases.push(Array1::from(b));
        }
        if cur.pos != bytes.len() {
            return Err(Error::corrupt("trailing bytes after model payload"));
        }
        Ok(Self { sizes, weights, biases, classes, train_config })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write_to(&mut f)?;
        f.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Err(Error::MissingFile(path.to_path_buf()));
        }
        Self::read_from(&mut std::io::BufReader::new(std::fs::File::open(path)?))
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::corrupt("model file is truncated"));
        }
        let out = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}
