use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{dense_backward, dense_forward, fill_uniform, init_bound, Activation, Adam, NnError};
use crate::scalar::Scalar;

/// Fully connected feed-forward network with a flat parameter vector.
///
/// Layer `l` maps `widths[l]` to `widths[l + 1]` and owns a row-major
/// weight block followed by its bias.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpModel<T> {
    widths: Vec<usize>,
    activations: Vec<Activation>,
    params: Vec<T>,
    seed: u64,
}

/// Forward-pass record needed for backpropagation.
#[derive(Debug, Clone)]
pub struct MlpCache<T> {
    pre: Vec<Vec<T>>,
    post: Vec<Vec<T>>,
}

impl<T> MlpCache<T> {
    pub fn output(&self) -> &[T] {
        self.post.last().expect("at least the input")
    }
}

impl<T: Scalar> MlpModel<T> {
    pub fn new(widths: &[usize], activations: &[Activation], seed: u64) -> Result<Self, NnError> {
        let mut m = Self::zeros(widths, activations, seed)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for l in 0..m.layer_count() {
            let (w, _) = m.layer_ranges(l);
            let bound = init_bound(widths[l], widths[l + 1], activations[l]);
            fill_uniform(&mut m.params[w], bound, &mut rng);
        }
        Ok(m)
    }

    pub fn zeros(widths: &[usize], activations: &[Activation], seed: u64) -> Result<Self, NnError> {
        if widths.len() < 2 || widths.iter().any(|&w| w == 0) {
            return Err(NnError::Config(format!("invalid layer widths {widths:?}")));
        }
        if activations.len() != widths.len() - 1 {
            return Err(NnError::Config(format!(
                "{} layers need {} activations, got {}",
                widths.len() - 1,
                widths.len() - 1,
                activations.len()
            )));
        }
        let count = widths.windows(2).map(|p| p[0] * p[1] + p[1]).sum();
        Ok(Self {
            widths: widths.to_vec(),
            activations: activations.to_vec(),
            params: vec![T::zero(); count],
            seed,
        })
    }

    pub fn from_params(
        widths: &[usize],
        activations: &[Activation],
        seed: u64,
        params: Vec<T>,
    ) -> Result<Self, NnError> {
        let mut m = Self::zeros(widths, activations, seed)?;
        if params.len() != m.params.len() {
            return Err(NnError::Shape(format!(
                "expected {} parameters, got {}",
                m.params.len(),
                params.len()
            )));
        }
        m.params = params;
        Ok(m)
    }

    pub fn widths(&self) -> &[usize] {
        &self.widths
    }

    pub fn activations(&self) -> &[Activation] {
        &self.activations
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn input_width(&self) -> usize {
        self.widths[0]
    }

    pub fn output_width(&self) -> usize {
        *self.widths.last().expect("non-empty")
    }

    pub fn output_activation(&self) -> Activation {
        *self.activations.last().expect("non-empty")
    }

    pub fn layer_count(&self) -> usize {
        self.widths.len() - 1
    }

    pub fn params(&self) -> &[T] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [T] {
        &mut self.params
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    pub fn is_finite(&self) -> bool {
        self.params.iter().all(|p| p.is_finite())
    }

    /// Parameter ranges (weights, bias) of layer `l`.
    pub fn layer_ranges(&self, l: usize) -> (std::ops::Range<usize>, std::ops::Range<usize>) {
        let mut off = 0;
        for k in 0..l {
            off += self.widths[k] * self.widths[k + 1] + self.widths[k + 1];
        }
        let nw = self.widths[l] * self.widths[l + 1];
        (off..off + nw, off + nw..off + nw + self.widths[l + 1])
    }

    pub fn cast<U: Scalar>(&self) -> MlpModel<U> {
        MlpModel {
            widths: self.widths.clone(),
            activations: self.activations.clone(),
            params: self.params.iter().map(|p| U::of(p.as_f64())).collect(),
            seed: self.seed,
        }
    }

    fn check_input(&self, x: &[T]) -> Result<(), NnError> {
        if x.len() != self.input_width() {
            return Err(NnError::Shape(format!(
                "model expects {} inputs, got {}",
                self.input_width(),
                x.len()
            )));
        }
        Ok(())
    }

    pub fn forward(&self, x: &[T]) -> Result<Vec<T>, NnError> {
        self.check_input(x)?;
        let mut cur = x.to_vec();
        let mut next = Vec::new();
        for l in 0..self.layer_count() {
            let (w, b) = self.layer_ranges(l);
            next.resize(self.widths[l + 1], T::zero());
            dense_forward(&self.params[w], &self.params[b], &cur, &mut next);
            let act = self.activations[l];
            next.iter_mut().for_each(|v| *v = act.apply(*v));
            std::mem::swap(&mut cur, &mut next);
        }
        Ok(cur)
    }

    /// First output unit; the predictors are single-output networks.
    pub fn predict(&self, x: &[T]) -> Result<T, NnError> {
        Ok(self.forward(x)?[0])
    }

    pub fn forward_cached(&self, x: &[T]) -> Result<MlpCache<T>, NnError> {
        self.check_input(x)?;
        let mut pre = Vec::with_capacity(self.layer_count());
        let mut post = Vec::with_capacity(self.layer_count() + 1);
        post.push(x.to_vec());
        for l in 0..self.layer_count() {
            let (w, b) = self.layer_ranges(l);
            let mut z = vec![T::zero(); self.widths[l + 1]];
            dense_forward(&self.params[w], &self.params[b], &post[l], &mut z);
            let act = self.activations[l];
            let a = z.iter().map(|v| act.apply(*v)).collect();
            pre.push(z);
            post.push(a);
        }
        Ok(MlpCache { pre, post })
    }

    /// Accumulates parameter gradients for upstream gradient `d_out` into
    /// `grad` and returns the gradient with respect to the input.
    pub fn backward(&self, cache: &MlpCache<T>, d_out: &[T], grad: &mut [T]) -> Vec<T> {
        debug_assert_eq!(grad.len(), self.params.len());
        let mut delta: Vec<T> = d_out.to_vec();
        for l in (0..self.layer_count()).rev() {
            let act = self.activations[l];
            for (d, (z, a)) in delta.iter_mut().zip(cache.pre[l].iter().zip(&cache.post[l + 1])) {
                *d *= act.derivative(*z, *a);
            }
            let (w, b) = self.layer_ranges(l);
            let mut dx = vec![T::zero(); self.widths[l]];
            let (gw, gb) = grad.split_at_mut(b.start);
            dense_backward(
                &self.params[w.clone()],
                &cache.post[l],
                &delta,
                &mut gw[w],
                &mut gb[..b.len()],
                Some(&mut dx),
            );
            delta = dx;
        }
        delta
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Loss {
    Mse,
    Mae,
}

impl Loss {
    fn value<T: Scalar>(self, y: T, t: T) -> T {
        match self {
            Loss::Mse => (y - t) * (y - t),
            Loss::Mae => (y - t).abs(),
        }
    }

    fn grad<T: Scalar>(self, y: T, t: T) -> T {
        match self {
            Loss::Mse => T::of(2.0) * (y - t),
            Loss::Mae => (y - t).signum(),
        }
    }
}

/// Supervised pairs for single-output regression.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Dataset<T> {
    pub inputs: Vec<Vec<T>>,
    pub targets: Vec<T>,
}

impl<T: Scalar> Dataset<T> {
    pub fn new() -> Self {
        Self {
            inputs: Vec::new(),
            targets: Vec::new(),
        }
    }

    pub fn push(&mut self, x: Vec<T>, y: T) {
        self.inputs.push(x);
        self.targets.push(y);
    }

    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    pub fn width(&self) -> usize {
        self.inputs.first().map_or(0, |x| x.len())
    }

    pub fn feature_means(&self) -> Vec<T> {
        let n = T::of_usize(self.len().max(1));
        let mut m = vec![T::zero(); self.width()];
        for x in &self.inputs {
            for (a, v) in m.iter_mut().zip(x) {
                *a += *v;
            }
        }
        m.iter_mut().for_each(|v| *v /= n);
        m
    }

    pub fn feature_stds(&self) -> Vec<T> {
        let means = self.feature_means();
        let n = T::of_usize(self.len().max(1));
        let mut s = vec![T::zero(); self.width()];
        for x in &self.inputs {
            for ((a, v), m) in s.iter_mut().zip(x).zip(&means) {
                *a += (*v - *m) * (*v - *m);
            }
        }
        s.iter_mut().for_each(|v| *v = (*v / n).sqrt());
        s
    }

    pub fn target_mean(&self) -> T {
        self.targets.iter().copied().sum::<T>() / T::of_usize(self.len().max(1))
    }

    /// Deterministic shuffle then split off the last `fraction` as a
    /// held-out set.
    pub fn split(&self, fraction: f64, seed: u64) -> (Dataset<T>, Dataset<T>) {
        let mut idx: Vec<usize> = (0..self.len()).collect();
        idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let held = ((self.len() as f64) * fraction.clamp(0.0, 1.0)).round() as usize;
        let cut = self.len() - held;
        let pick = |ids: &[usize]| Dataset {
            inputs: ids.iter().map(|&i| self.inputs[i].clone()).collect(),
            targets: ids.iter().map(|&i| self.targets[i]).collect(),
        };
        (pick(&idx[..cut]), pick(&idx[cut..]))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub widths: Vec<usize>,
    pub activations: Vec<Activation>,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub loss: Loss,
    /// Stop after this many epochs without improvement of the monitored
    /// loss (validation loss when a validation split exists).
    pub patience: Option<usize>,
    pub validation_fraction: f64,
    pub seed: u64,
}

impl TrainConfig {
    /// Request predictor: 20-128-64-32-16 rectifier trunk, linear output,
    /// lr 0.001, 15 epochs.
    pub fn taxi() -> Self {
        Self {
            widths: vec![20, 128, 64, 32, 16, 1],
            activations: vec![
                Activation::Relu,
                Activation::Relu,
                Activation::Relu,
                Activation::Relu,
                Activation::Identity,
            ],
            learning_rate: 0.001,
            epochs: 15,
            batch_size: 64,
            loss: Loss::Mse,
            patience: None,
            validation_fraction: 0.0,
            seed: 0,
        }
    }

    /// Fire-risk predictor: 6-512-512 leaky-rectifier trunk, sigmoid
    /// output, Adam at 0.01 on MSE, up to 1000 epochs with patience 100.
    pub fn wildfire() -> Self {
        Self {
            widths: vec![6, 512, 512, 1],
            activations: vec![Activation::LeakyRelu, Activation::LeakyRelu, Activation::Sigmoid],
            learning_rate: 0.01,
            epochs: 1000,
            batch_size: 256,
            loss: Loss::Mse,
            patience: Some(100),
            validation_fraction: 0.1,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome<T> {
    /// Best model seen (lowest monitored loss).
    pub model: MlpModel<T>,
    /// Training-split loss after each epoch.
    pub epoch_losses: Vec<T>,
    pub validation_losses: Vec<T>,
    pub best_epoch: Option<usize>,
    pub stopped_early: bool,
}

pub fn mean_loss<T: Scalar>(model: &MlpModel<T>, data: &Dataset<T>, loss: Loss) -> Result<T, NnError> {
    if data.is_empty() {
        return Err(NnError::EmptyDataset);
    }
    let mut total = T::zero();
    for (x, &t) in data.inputs.iter().zip(&data.targets) {
        total += loss.value(model.predict(x)?, t);
    }
    Ok(total / T::of_usize(data.len()))
}

pub fn train_mlp<T: Scalar>(data: &Dataset<T>, config: &TrainConfig) -> Result<TrainOutcome<T>, NnError> {
    let model = MlpModel::new(&config.widths, &config.activations, config.seed)?;
    fit(model, data, config)
}

/// Mini-batch Adam on an existing model with best-model retention.
pub fn fit<T: Scalar>(
    mut model: MlpModel<T>,
    data: &Dataset<T>,
    config: &TrainConfig,
) -> Result<TrainOutcome<T>, NnError> {
    if data.is_empty() {
        return Err(NnError::EmptyDataset);
    }
    if data.width() != model.input_width() {
        return Err(NnError::Shape(format!(
            "dataset has {} features, model expects {}",
            data.width(),
            model.input_width()
        )));
    }
    if data.targets.iter().any(|t| !t.is_finite()) {
        return Err(NnError::Config("non-finite target".into()));
    }
    let (train, val) = if config.validation_fraction > 0.0 && data.len() >= 10 {
        data.split(config.validation_fraction, config.seed ^ 0x5eed)
    } else {
        (data.clone(), Dataset::new())
    };

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(1));
    let mut opt = Adam::new(model.param_count(), config.learning_rate);
    let mut grad = vec![T::zero(); model.param_count()];
    let mut order: Vec<usize> = (0..train.len()).collect();
    let batch = config.batch_size.max(1);

    let mut out = TrainOutcome {
        model: model.clone(),
        epoch_losses: Vec::new(),
        validation_losses: Vec::new(),
        best_epoch: None,
        stopped_early: false,
    };
    let mut best = T::infinity();
    let mut since_best = 0usize;

    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(batch) {
            grad.iter_mut().for_each(|g| *g = T::zero());
            let scale = T::one() / T::of_usize(chunk.len());
            for &i in chunk {
                let cache = model.forward_cached(&train.inputs[i])?;
                let y = cache.output()[0];
                let d = config.loss.grad(y, train.targets[i]) * scale;
                model.backward(&cache, &[d], &mut grad);
            }
            opt.step(model.params_mut(), &grad);
        }

        let train_loss = mean_loss(&model, &train, config.loss)?;
        if !train_loss.is_finite() || !model.is_finite() {
            return Err(NnError::Diverged { epoch: epoch + 1 });
        }
        out.epoch_losses.push(train_loss);
        let monitored = if val.is_empty() {
            train_loss
        } else {
            let v = mean_loss(&model, &val, config.loss)?;
            out.validation_losses.push(v);
            v
        };
        if monitored < best {
            best = monitored;
            since_best = 0;
            out.best_epoch = Some(epoch + 1);
            out.model = model.clone();
        } else {
            since_best += 1;
            if config.patience.is_some_and(|p| since_best >= p) {
                out.stopped_early = true;
                break;
            }
        }
    }
    Ok(out)
}
