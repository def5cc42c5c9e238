//! Synthetic shape dataset and a two-layer MLP classifier with hand-written
//! forward and backward passes.

use std::io::{Read, Write};

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};

use crate::error::{Error, Result};
use crate::rng::{Purpose, RngStream};
use crate::types::ImageTensor;

/// First index of the held-out split; training uses `0..train_size`.
pub const EVAL_OFFSET: u64 = 1 << 32;

const SHAPE_NAMES: [&str; 4] = ["square", "disk", "cross", "triangle"];

/// Deterministic dataset of single colored shapes on a noisy background.
#[derive(Debug, Clone, PartialEq)]
pub struct ShapeDataset {
    pub image_size: usize,
    pub num_classes: usize,
    pub channels: usize,
    pub seed: u64,
}

impl ShapeDataset {
    pub fn new(seed: u64) -> Self {
        Self {
            image_size: 32,
            num_classes: 4,
            channels: 3,
            seed,
        }
    }

    pub fn class_name(&self, label: usize) -> &'static str {
        SHAPE_NAMES[label % SHAPE_NAMES.len()]
    }

    pub fn validate(&self) -> Result<()> {
        if !(1..=SHAPE_NAMES.len()).contains(&self.num_classes) {
            return Err(Error::Config(format!(
                "num_classes must lie in 1..=4, got {}",
                self.num_classes
            )));
        }
        if self.image_size < 8 || self.channels == 0 {
            return Err(Error::Config("image_size must be >= 8 and channels >= 1".into()));
        }
        Ok(())
    }

    pub fn label(&self, index: u64) -> usize {
        (index % self.num_classes as u64) as usize
    }

    /// Image and label at `index`; a pure function of `(seed, index)`.
    pub fn generate(&self, index: u64) -> (ImageTensor, usize) {
        let label = self.label(index);
        let s = self.image_size;
        let sf = s as f64;
        let mut rng = RngStream::new(self.seed, Purpose::Dataset, index);

        let mut img = ImageTensor::zeros(self.channels, s, s);
        for v in img.data_mut() {
            *v = 0.1 * rng.uniform();
        }
        let color: Vec<f64> = (0..self.channels).map(|_| 0.6 + 0.4 * rng.uniform()).collect();
        let jitter = sf * 3.0 / 32.0;
        let cx = sf / 2.0 + jitter * (2.0 * rng.uniform() - 1.0);
        let cy = sf / 2.0 + jitter * (2.0 * rng.uniform() - 1.0);
        let area = (0.25 + 0.2 * rng.uniform()) * sf * sf;

        let inside: Box<dyn Fn(f64, f64) -> bool> = match label {
            0 => {
                let half = area.sqrt() / 2.0;
                Box::new(move |x, y| (x - cx).abs() <= half && (y - cy).abs() <= half)
            }
            1 => {
                let r2 = area / std::f64::consts::PI;
                Box::new(move |x, y| (x - cx).powi(2) + (y - cy).powi(2) <= r2)
            }
            2 => {
                // Arms of width 0.4·L: area = L²(0.8 − 0.16).
                let len = (area / 0.64).sqrt();
                let (half_len, half_w) = (len / 2.0, 0.2 * len);
                Box::new(move |x, y| {
                    let (dx, dy) = ((x - cx).abs(), (y - cy).abs());
                    (dx <= half_len && dy <= half_w) || (dy <= half_len && dx <= half_w)
                })
            }
            _ => {
                // Upright isosceles triangle with base = height.
                let side = (2.0 * area).sqrt();
                let top = cy - side / 2.0;
                Box::new(move |x, y| {
                    let t = (y - top) / side;
                    (0.0..=1.0).contains(&t) && (x - cx).abs() <= t * side / 2.0
                })
            }
        };

        for row in 0..s {
            for col in 0..s {
                if inside(col as f64 + 0.5, row as f64 + 0.5) {
                    for (c, &v) in color.iter().enumerate() {
                        img.set(c, row, col, v.clamp(0.0, 1.0));
                    }
                }
            }
        }
        (img, label)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    /// Passes pre-activations through unchanged, making the model linear.
    Identity,
}

impl Activation {
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::Identity => z,
        }
    }

    fn derivative(self, z: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Identity => 1.0,
        }
    }
}

pub const MODEL_FORMAT_VERSION: u32 = 1;
const MODEL_MAGIC: &[u8; 4] = b"PXCM";

/// `input(c·H·W) → hidden → logits` multilayer perceptron.
#[derive(Debug, Clone, PartialEq)]
pub struct ToyClassifier {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub hidden: usize,
    pub num_classes: usize,
    pub activation: Activation,
    /// `hidden × input`, row-major.
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    /// `num_classes × hidden`, row-major.
    pub w2: Vec<f64>,
    pub b2: Vec<f64>,
}

/// Logits and softmax probabilities for one input.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub logits: Vec<f64>,
    pub probs: Vec<f64>,
}

impl Prediction {
    pub fn argmax(&self) -> usize {
        argmax(&self.probs)
    }
}

pub fn argmax(values: &[f64]) -> usize {
    values
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |(bi, bv), (i, &v)| if v > bv { (i, v) } else { (bi, bv) })
        .0
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&l| (l - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

impl ToyClassifier {
    pub fn zeros(channels: usize, height: usize, width: usize, hidden: usize, num_classes: usize) -> Self {
        let input = channels * height * width;
        Self {
            channels,
            height,
            width,
            hidden,
            num_classes,
            activation: Activation::Relu,
            w1: vec![0.0; hidden * input],
            b1: vec![0.0; hidden],
            w2: vec![0.0; num_classes * hidden],
            b2: vec![0.0; num_classes],
        }
    }

    /// He-initialized random model.
    pub fn random(
        channels: usize,
        height: usize,
        width: usize,
        hidden: usize,
        num_classes: usize,
        seed: u64,
    ) -> Self {
        let mut m = Self::zeros(channels, height, width, hidden, num_classes);
        let mut rng = RngStream::new(seed, Purpose::WeightInit, 0);
        let s1 = (2.0 / m.input_dim() as f64).sqrt();
        let s2 = (2.0 / hidden as f64).sqrt();
        m.w1.iter_mut().for_each(|w| *w = s1 * rng.normal());
        m.w2.iter_mut().for_each(|w| *w = s2 * rng.normal());
        m
    }

    /// Linear model `logits = W x + b`. The hidden layer holds `W` and the
    /// output layer is the identity.
    pub fn linear(channels: usize, height: usize, width: usize, weights: Vec<f64>, bias: Vec<f64>) -> Result<Self> {
        let classes = bias.len();
        let input = channels * height * width;
        if weights.len() != classes * input {
            return Err(Error::Shape {
                expected: format!("{classes}x{input} weights"),
                actual: format!("{} values", weights.len()),
            });
        }
        let mut w2 = vec![0.0; classes * classes];
        for c in 0..classes {
            w2[c * classes + c] = 1.0;
        }
        Ok(Self {
            channels,
            height,
            width,
            hidden: classes,
            num_classes: classes,
            activation: Activation::Identity,
            w1: weights,
            b1: bias,
            w2,
            b2: vec![0.0; classes],
        })
    }

    pub fn input_dim(&self) -> usize {
        self.channels * self.height * self.width
    }

    fn w1_view(&self) -> ArrayView2<'_, f64> {
        ArrayView2::from_shape((self.hidden, self.input_dim()), &self.w1).expect("w1 shape")
    }

    fn w2_view(&self) -> ArrayView2<'_, f64> {
        ArrayView2::from_shape((self.num_classes, self.hidden), &self.w2).expect("w2 shape")
    }

    pub fn check_input(&self, x: &ImageTensor) -> Result<()> {
        x.check_shape(self.channels, self.height, self.width)
    }

    fn hidden_pre(&self, x: ArrayView1<'_, f64>) -> Array1<f64> {
        self.w1_view().dot(&x) + ArrayView1::from(&self.b1)
    }

    pub fn forward(&self, x: &ImageTensor) -> Result<Prediction> {
        self.check_input(x)?;
        let z1 = self.hidden_pre(ArrayView1::from(x.data()));
        let a1 = z1.mapv(|z| self.activation.apply(z));
        let logits = self.w2_view().dot(&a1) + ArrayView1::from(&self.b2);
        let logits = logits.to_vec();
        let probs = softmax(&logits);
        Ok(Prediction { logits, probs })
    }

    /// Logits for a batch laid out as `batch × input` rows.
    pub fn logits_batch(&self, inputs: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        if inputs.ncols() != self.input_dim() {
            return Err(Error::Shape {
                expected: format!("{} input columns", self.input_dim()),
                actual: format!("{} columns", inputs.ncols()),
            });
        }
        let (_, logits) = self.forward_rows(inputs);
        Ok(logits)
    }

    /// Returns (hidden pre-activations, logits).
    fn forward_rows(&self, inputs: ArrayView2<'_, f64>) -> (Array2<f64>, Array2<f64>) {
        let z1 = inputs.dot(&self.w1_view().t()) + ArrayView1::from(&self.b1);
        let a1 = z1.mapv(|z| self.activation.apply(z));
        let logits = a1.dot(&self.w2_view().t()) + ArrayView1::from(&self.b2);
        (z1, logits)
    }

    /// Softmax probabilities for a batch of images.
    pub fn probs_batch(&self, images: &[ImageTensor]) -> Result<Vec<Vec<f64>>> {
        for x in images {
            self.check_input(x)?;
        }
        let rows = stack_rows(images, self.input_dim());
        let logits = self.logits_batch(rows.view())?;
        Ok(logits.rows().into_iter().map(|r| softmax(r.as_slice().unwrap_or(&r.to_vec()))).collect())
    }

    /// `∂ logit[class] / ∂ x` by reverse-mode differentiation.
    pub fn grad_input(&self, x: &ImageTensor, class_index: usize) -> Result<ImageTensor> {
        self.check_input(x)?;
        if class_index >= self.num_classes {
            return Err(Error::Domain(format!(
                "class {class_index} out of range for {} classes",
                self.num_classes
            )));
        }
        let z1 = self.hidden_pre(ArrayView1::from(x.data()));
        let w2_row = self.w2_view().row(class_index).to_owned();
        let delta = &w2_row * &z1.mapv(|z| self.activation.derivative(z));
        let grad = self.w1_view().t().dot(&delta);
        ImageTensor::new(self.channels, self.height, self.width, grad.to_vec())
    }

    pub fn save<W: Write>(&self, mut out: W) -> Result<()> {
        out.write_all(MODEL_MAGIC)?;
        out.write_u32::<LittleEndian>(MODEL_FORMAT_VERSION)?;
        for dim in [self.channels, self.height, self.width, self.hidden, self.num_classes] {
            out.write_u32::<LittleEndian>(dim as u32)?;
        }
        out.write_u8(match self.activation {
            Activation::Relu => 0,
            Activation::Identity => 1,
        })?;
        for arr in [&self.w1, &self.b1, &self.w2, &self.b2] {
            for &v in arr.iter() {
                out.write_f64::<LittleEndian>(v)?;
            }
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        self.save(&mut buf).expect("writing to a Vec cannot fail");
        buf
    }

    pub fn load<R: Read>(mut input: R) -> Result<Self> {
        let bad = |msg: &str| Error::ModelFormat(msg.to_string());
        let mut magic = [0u8; 4];
        input.read_exact(&mut magic).map_err(|_| bad("truncated header"))?;
        if &magic != MODEL_MAGIC {
            return Err(bad("bad magic bytes"));
        }
        let version = input.read_u32::<LittleEndian>().map_err(|_| bad("truncated header"))?;
        if version != MODEL_FORMAT_VERSION {
            return Err(Error::ModelFormat(format!("unsupported version {version}")));
        }
        let mut dims = [0usize; 5];
        for d in dims.iter_mut() {
            *d = input.read_u32::<LittleEndian>().map_err(|_| bad("truncated header"))? as usize;
        }
        let [channels, height, width, hidden, num_classes] = dims;
        if dims.contains(&0) {
            return Err(bad("zero dimension"));
        }
        let activation = match input.read_u8().map_err(|_| bad("truncated header"))? {
            0 => Activation::Relu,
            1 => Activation::Identity,
            a => return Err(Error::ModelFormat(format!("unknown activation {a}"))),
        };
        let input_dim = channels * height * width;
        let mut read_vec = |len: usize, name: &str| -> Result<Vec<f64>> {
            let mut v = vec![0.0; len];
            input
                .read_f64_into::<LittleEndian>(&mut v)
                .map_err(|_| Error::ModelFormat(format!("truncated {name}")))?;
            if v.iter().any(|x| !x.is_finite()) {
                return Err(Error::ModelFormat(format!("non-finite value in {name}")));
            }
            Ok(v)
        };
        let w1 = read_vec(hidden * input_dim, "w1")?;
        let b1 = read_vec(hidden, "b1")?;
        let w2 = read_vec(num_classes * hidden, "w2")?;
        let b2 = read_vec(num_classes, "b2")?;
        let mut rest = Vec::new();
        input.read_to_end(&mut rest)?;
        if !rest.is_empty() {
            return Err(Error::ModelFormat(format!("{} trailing bytes", rest.len())));
        }
        Ok(Self {
            channels,
            height,
            width,
            hidden,
            num_classes,
            activation,
            w1,
            b1,
            w2,
            b2,
        })
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        Self::load(bytes)
    }
}

pub(crate) fn stack_rows(images: &[ImageTensor], dim: usize) -> Array2<f64> {
    let mut rows = Array2::zeros((images.len(), dim));
    for (mut row, img) in rows.axis_iter_mut(Axis(0)).zip(images) {
        row.assign(&ArrayView1::from(img.data()));
    }
    rows
}

/// Hyperparameters of [`train_with`].
#[derive(Debug, Clone, PartialEq)]
pub struct TrainOptions {
    pub epochs: usize,
    pub lr: f64,
    pub seed: u64,
    pub train_size: usize,
    pub batch_size: usize,
    pub hidden: usize,
}

impl Default for TrainOptions {
    fn default() -> Self {
        Self {
            epochs: 20,
            lr: 0.05,
            seed: 1,
            train_size: 1000,
            batch_size: 32,
            hidden: 128,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainSummary {
    pub model: ToyClassifier,
    pub initial_loss: f64,
    pub final_loss: f64,
    pub train_accuracy: f64,
}

/// Trains with default batch size, hidden width and training-set size.
pub fn train(dataset: &ShapeDataset, epochs: usize, lr: f64, seed: u64) -> Result<ToyClassifier> {
    let opts = TrainOptions {
        epochs,
        lr,
        seed,
        ..TrainOptions::default()
    };
    Ok(train_with(dataset, &opts)?.model)
}

/// Mini-batch SGD on softmax cross-entropy. Deterministic given the
/// dataset seed and `opts.seed`.
pub fn train_with(dataset: &ShapeDataset, opts: &TrainOptions) -> Result<TrainSummary> {
    dataset.validate()?;
    if opts.epochs == 0 || opts.batch_size == 0 || opts.train_size == 0 || opts.hidden == 0 {
        return Err(Error::Config("epochs, batch_size, train_size and hidden must be >= 1".into()));
    }
    let s = dataset.image_size;
    let mut model = ToyClassifier::random(dataset.channels, s, s, opts.hidden, dataset.num_classes, opts.seed);
    let (images, labels): (Vec<ImageTensor>, Vec<usize>) =
        (0..opts.train_size as u64).map(|i| dataset.generate(i)).unzip();
    let inputs = stack_rows(&images, model.input_dim());

    let initial_loss = mean_loss(&model, inputs.view(), &labels);
    let mut order: Vec<usize> = (0..opts.train_size).collect();
    for epoch in 0..opts.epochs {
        RngStream::new(opts.seed, Purpose::Shuffle, epoch as u64).shuffle(&mut order);
        for batch in order.chunks(opts.batch_size) {
            let x = inputs.select(Axis(0), batch);
            let y: Vec<usize> = batch.iter().map(|&i| labels[i]).collect();
            sgd_step(&mut model, x.view(), &y, opts.lr);
        }
    }
    let final_loss = mean_loss(&model, inputs.view(), &labels);
    let train_accuracy = accuracy_rows(&model, inputs.view(), &labels);
    Ok(TrainSummary {
        model,
        initial_loss,
        final_loss,
        train_accuracy,
    })
}

fn sgd_step(model: &mut ToyClassifier, x: ArrayView2<'_, f64>, labels: &[usize], lr: f64) {
    let batch = x.nrows() as f64;
    let (z1, logits) = model.forward_rows(x);
    let a1 = z1.mapv(|z| model.activation.apply(z));

    let mut dlogits = logits;
    for (mut row, &y) in dlogits.axis_iter_mut(Axis(0)).zip(labels) {
        let p = softmax(&row.to_vec());
        row.iter_mut().zip(p).for_each(|(d, pi)| *d = pi / batch);
        row[y] -= 1.0 / batch;
    }
    let grad_w2 = dlogits.t().dot(&a1);
    let grad_b2 = dlogits.sum_axis(Axis(0));
    let mut dz1 = dlogits.dot(&model.w2_view());
    dz1.zip_mut_with(&z1, |d, &z| *d *= model.activation.derivative(z));
    let grad_w1 = dz1.t().dot(&x);
    let grad_b1 = dz1.sum_axis(Axis(0));

    let update = |params: &mut [f64], grads: &[f64]| {
        params.iter_mut().zip(grads).for_each(|(p, g)| *p -= lr * g);
    };
    update(&mut model.w1, grad_w1.as_slice().expect("contiguous"));
    update(&mut model.b1, grad_b1.as_slice().expect("contiguous"));
    update(&mut model.w2, grad_w2.as_slice().expect("contiguous"));
    update(&mut model.b2, grad_b2.as_slice().expect("contiguous"));
}

fn mean_loss(model: &ToyClassifier, x: ArrayView2<'_, f64>, labels: &[usize]) -> f64 {
    let (_, logits) = model.forward_rows(x);
    let total: f64 = logits
        .rows()
        .into_iter()
        .zip(labels)
        .map(|(row, &y)| -softmax(&row.to_vec())[y].max(1e-300).ln())
        .sum();
    total / labels.len() as f64
}

fn accuracy_rows(model: &ToyClassifier, x: ArrayView2<'_, f64>, labels: &[usize]) -> f64 {
    let (_, logits) = model.forward_rows(x);
    let correct = logits
        .rows()
        .into_iter()
        .zip(labels)
        .filter(|(row, &y)| argmax(&row.to_vec()) == y)
        .count();
    correct as f64 / labels.len() as f64
}

/// Accuracy on `count` held-out images starting at [`EVAL_OFFSET`].
pub fn held_out_accuracy(model: &ToyClassifier, dataset: &ShapeDataset, count: usize) -> Result<f64> {
    let (images, labels): (Vec<ImageTensor>, Vec<usize>) =
        (0..count as u64).map(|i| dataset.generate(EVAL_OFFSET + i)).unzip();
    for x in &images {
        model.check_input(x)?;
    }
    let rows = stack_rows(&images, model.input_dim());
    Ok(accuracy_rows(model, rows.view(), &labels))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dataset_is_deterministic_and_bounded() {
        let ds = ShapeDataset::new(1);
        let (a, la) = ds.generate(0);
        let (b, lb) = ds.generate(0);
        assert_eq!(a, b);
        assert_eq!(la, lb);
        for i in 0..40 {
            let (img, _) = ds.generate(i);
            assert!(img.data().iter().all(|v| (0.0..=1.0).contains(v)));
        }
        assert_ne!(ds.generate(1).0, a);
        assert_ne!(ShapeDataset::new(2).generate(0).0, a);
    }

    #[test]
    fn labels_round_robin() {
        let ds = ShapeDataset::new(1);
        let mut counts = [0usize; 4];
        for i in 0..100 {
            counts[ds.generate(i).1] += 1;
        }
        assert_eq!(counts, [25; 4]);
    }

    #[test]
    fn shape_covers_20_to_60_percent() {
        let ds = ShapeDataset::new(5);
        for i in 0..400 {
            let (img, label) = ds.generate(i);
            // Foreground pixels have channel 0 >= 0.6; background stays <= 0.1.
            let fg = (0..img.num_pixels()).filter(|&p| img.data()[p] >= 0.6).count();
            let frac = fg as f64 / img.num_pixels() as f64;
            assert!((0.2..=0.6).contains(&frac), "index {i} class {label}: {frac}");
        }
    }

    #[test]
    fn zero_model_gives_uniform_probs() {
        let m = ToyClassifier::zeros(3, 4, 4, 8, 4);
        let x = ImageTensor::filled(3, 4, 4, 0.3);
        let p = m.forward(&x).unwrap();
        for &v in &p.probs {
            assert!((v - 0.25).abs() < 1e-15);
        }
        let g = m.grad_input(&x, 2).unwrap();
        assert!(g.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn linear_model_gradient_is_weight_row() {
        let w: Vec<f64> = (0..2 * 12).map(|i| (i as f64 * 0.37).sin()).collect();
        let m = ToyClassifier::linear(3, 2, 2, w.clone(), vec![0.1, -0.2]).unwrap();
        let x = ImageTensor::new(3, 2, 2, (0..12).map(|i| i as f64 / 12.0).collect()).unwrap();
        let g = m.grad_input(&x, 1).unwrap();
        assert_eq!(g.data(), &w[12..]);
    }

    #[test]
    fn probs_sum_to_one_and_shift_invariant() {
        let m = ToyClassifier::random(3, 8, 8, 16, 4, 9);
        let x = ImageTensor::filled(3, 8, 8, 0.5);
        let p = m.forward(&x).unwrap();
        assert!((p.probs.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        let shifted: Vec<f64> = p.logits.iter().map(|l| l + 123.4).collect();
        for (a, b) in softmax(&shifted).iter().zip(&p.probs) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn batch_matches_single_forward() {
        let m = ToyClassifier::random(3, 8, 8, 16, 4, 2);
        let xs: Vec<ImageTensor> = (0..3).map(|i| ImageTensor::filled(3, 8, 8, 0.1 * i as f64)).collect();
        let batch = m.probs_batch(&xs).unwrap();
        for (x, pb) in xs.iter().zip(batch) {
            let p = m.forward(x).unwrap().probs;
            for (a, b) in p.iter().zip(&pb) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let m = ToyClassifier::zeros(3, 4, 4, 8, 4);
        assert!(m.forward(&ImageTensor::zeros(1, 4, 4)).is_err());
        assert!(m.grad_input(&ImageTensor::zeros(3, 4, 4), 4).is_err());
    }

    #[test]
    fn model_file_round_trip_and_validation() {
        let m = ToyClassifier::random(3, 4, 4, 5, 4, 3);
        let bytes = m.to_bytes();
        assert_eq!(ToyClassifier::from_bytes(&bytes).unwrap(), m);
        assert!(ToyClassifier::from_bytes(&bytes[..bytes.len() - 1]).is_err());
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(ToyClassifier::from_bytes(&extra).is_err());
        let mut wrong = bytes;
        wrong[0] = b'X';
        assert!(matches!(ToyClassifier::from_bytes(&wrong), Err(Error::ModelFormat(_))));
    }

    #[test]
    fn short_training_reduces_loss_deterministically() {
        let ds = ShapeDataset::new(1);
        let opts = TrainOptions {
            epochs: 3,
            train_size: 128,
            hidden: 32,
            lr: 0.01,
            ..TrainOptions::default()
        };
        let a = train_with(&ds, &opts).unwrap();
        let b = train_with(&ds, &opts).unwrap();
        assert_eq!(a.model.to_bytes(), b.model.to_bytes());
        assert!(a.final_loss < a.initial_loss);
    }
}
