//! Dueling Q-network over per-cell channel maps.
//!
//! A "same"-padded convolution stack turns the `C x H x W` input into
//! feature maps. The trunk sees three things: the maps average-pooled to a
//! fixed `P x P` raster, the feature column under the agent cell, and the
//! agent's normalized coordinates. None of the convolution work depends on
//! where the agent is, so evaluating every relocated agent cell costs one
//! convolution pass plus one trunk pass per cell.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::mlp::{MlpCache, MlpModel};
use super::{fill_uniform, init_bound, Activation, Adam, NnError};
use crate::grid::{CellIndex, GridSpec};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvSpec {
    pub kernel: usize,
    pub filters: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QNetConfig {
    pub input_channels: usize,
    /// Per-channel multiplier applied to the raw maps; empty means 1.
    #[serde(default)]
    pub input_scale: Vec<f64>,
    pub convs: Vec<ConvSpec>,
    pub pool: usize,
    pub trunk: Vec<usize>,
    pub actions: usize,
}

impl QNetConfig {
    /// CPU-sized taxi network for desk grids.
    pub fn taxi_desk() -> Self {
        Self {
            input_channels: 2,
            input_scale: Vec::new(),
            convs: vec![
                ConvSpec { kernel: 3, filters: 8 },
                ConvSpec { kernel: 3, filters: 16 },
                ConvSpec { kernel: 3, filters: 32 },
            ],
            pool: 4,
            trunk: vec![256],
            actions: 25,
        }
    }

    /// Kernels 5/5/3 with 16/32/64 filters, a 12x12 pooled raster and a
    /// 1024-wide trunk.
    pub fn taxi_full() -> Self {
        Self {
            input_channels: 2,
            input_scale: Vec::new(),
            convs: vec![
                ConvSpec { kernel: 5, filters: 16 },
                ConvSpec { kernel: 5, filters: 32 },
                ConvSpec { kernel: 3, filters: 64 },
            ],
            pool: 12,
            trunk: vec![1024],
            actions: 25,
        }
    }

    pub fn wildfire_desk() -> Self {
        Self {
            input_channels: 3,
            input_scale: Vec::new(),
            convs: vec![
                ConvSpec { kernel: 3, filters: 4 },
                ConvSpec { kernel: 3, filters: 8 },
                ConvSpec { kernel: 3, filters: 16 },
            ],
            pool: 2,
            trunk: vec![256, 128],
            actions: 6,
        }
    }

    pub fn wildfire_full() -> Self {
        Self {
            trunk: vec![1024, 512, 256],
            ..Self::wildfire_desk()
        }
    }

    pub fn validate(&self) -> Result<(), NnError> {
        let bad = |m: String| Err(NnError::Config(m));
        if self.input_channels == 0 || self.actions == 0 || self.pool == 0 {
            return bad("channels, actions and pool must be positive".into());
        }
        if self.convs.is_empty() {
            return bad("at least one convolution layer is required".into());
        }
        for c in &self.convs {
            if c.kernel % 2 == 0 || c.filters == 0 {
                return bad(format!("convolution {c:?} needs an odd kernel and filters > 0"));
            }
        }
        if !self.input_scale.is_empty() && self.input_scale.len() != self.input_channels {
            return bad(format!(
                "{} input scales for {} channels",
                self.input_scale.len(),
                self.input_channels
            ));
        }
        if self.trunk.iter().any(|&w| w == 0) {
            return bad("trunk widths must be positive".into());
        }
        Ok(())
    }

    pub fn final_filters(&self) -> usize {
        self.convs.last().map_or(self.input_channels, |c| c.filters)
    }

    pub fn feature_width(&self) -> usize {
        let f = self.final_filters();
        f * self.pool * self.pool + f + 2
    }

    fn conv_param_count(&self) -> usize {
        let mut cin = self.input_channels;
        let mut n = 0;
        for c in &self.convs {
            n += c.filters * cin * c.kernel * c.kernel + c.filters;
            cin = c.filters;
        }
        n
    }

    fn head_shape(&self) -> (Vec<usize>, Vec<Activation>) {
        let mut widths = vec![self.feature_width()];
        widths.extend(&self.trunk);
        widths.push(1 + self.actions);
        let mut acts = vec![Activation::Relu; self.trunk.len()];
        acts.push(Activation::Identity);
        (widths, acts)
    }
}

/// Convolution output shared by every relocation of the agent.
#[derive(Debug, Clone)]
pub struct SharedFeatures<T> {
    spec: GridSpec,
    maps: Vec<T>,
    pooled: Vec<T>,
}

#[derive(Debug, Clone)]
pub struct QNetCache<T> {
    spec: GridSpec,
    agent: CellIndex,
    /// Input to each conv layer followed by the final post-activation maps.
    layers: Vec<Vec<T>>,
    head: MlpCache<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QNet<T> {
    config: QNetConfig,
    seed: u64,
    conv: Vec<T>,
    head: MlpModel<T>,
}

impl<T: Scalar> QNet<T> {
    pub fn new(config: QNetConfig, seed: u64) -> Result<Self, NnError> {
        config.validate()?;
        let (widths, acts) = config.head_shape();
        let head = MlpModel::new(&widths, &acts, seed.wrapping_add(1))?;
        let mut conv = vec![T::zero(); config.conv_param_count()];
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut off = 0;
        let mut cin = config.input_channels;
        for c in &config.convs {
            let nw = c.filters * cin * c.kernel * c.kernel;
            let fan_in = cin * c.kernel * c.kernel;
            fill_uniform(&mut conv[off..off + nw], init_bound(fan_in, 0, Activation::Relu), &mut rng);
            off += nw + c.filters;
            cin = c.filters;
        }
        Ok(Self { config, seed, conv, head })
    }

    pub fn from_params(config: QNetConfig, seed: u64, params: &[T]) -> Result<Self, NnError> {
        let mut net = Self::new(config, seed)?;
        if params.len() != net.param_count() {
            return Err(NnError::Shape(format!(
                "expected {} parameters, got {}",
                net.param_count(),
                params.len()
            )));
        }
        net.set_params(params);
        Ok(net)
    }

    pub fn config(&self) -> &QNetConfig {
        &self.config
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn actions(&self) -> usize {
        self.config.actions
    }

    pub fn param_count(&self) -> usize {
        self.conv.len() + self.head.param_count()
    }

    pub fn params(&self) -> Vec<T> {
        let mut p = self.conv.clone();
        p.extend_from_slice(self.head.params());
        p
    }

    pub fn set_params(&mut self, params: &[T]) {
        let (c, h) = params.split_at(self.conv.len());
        self.conv.copy_from_slice(c);
        self.head.params_mut().copy_from_slice(h);
    }

    pub fn is_finite(&self) -> bool {
        self.conv.iter().all(|p| p.is_finite()) && self.head.is_finite()
    }

    pub fn cast<U: Scalar>(&self) -> QNet<U> {
        QNet {
            config: self.config.clone(),
            seed: self.seed,
            conv: self.conv.iter().map(|p| U::of(p.as_f64())).collect(),
            head: self.head.cast(),
        }
    }

    fn check(&self, maps: &[T], spec: GridSpec) -> Result<(), NnError> {
        let want = self.config.input_channels * spec.len();
        if maps.len() != want {
            return Err(NnError::Shape(format!(
                "expected {} channel values for a {}x{} grid, got {}",
                want,
                spec.width(),
                spec.height(),
                maps.len()
            )));
        }
        Ok(())
    }

    fn conv_layers(&self, maps: &[T], spec: GridSpec) -> Vec<Vec<T>> {
        let mut input = maps.to_vec();
        let n = spec.len();
        for (c, s) in self.config.input_scale.iter().enumerate() {
            let s = T::of(*s);
            input[c * n..(c + 1) * n].iter_mut().for_each(|v| *v *= s);
        }
        let mut layers = vec![input];
        let mut off = 0;
        let mut cin = self.config.input_channels;
        for c in &self.config.convs {
            let nw = c.filters * cin * c.kernel * c.kernel;
            let w = &self.conv[off..off + nw];
            let b = &self.conv[off + nw..off + nw + c.filters];
            let mut out = conv_forward(layers.last().unwrap(), spec, cin, w, b, *c);
            out.iter_mut().for_each(|v| *v = v.max(T::zero()));
            layers.push(out);
            off += nw + c.filters;
            cin = c.filters;
        }
        layers
    }

    pub fn shared_features(&self, maps: &[T], spec: GridSpec) -> Result<SharedFeatures<T>, NnError> {
        self.check(maps, spec)?;
        let last = self.conv_layers(maps, spec).pop().unwrap();
        let pooled = adaptive_pool(&last, spec, self.config.final_filters(), self.config.pool);
        Ok(SharedFeatures {
            spec,
            maps: last,
            pooled,
        })
    }

    fn trunk_input(&self, shared: &SharedFeatures<T>, agent: CellIndex) -> Vec<T> {
        let spec = shared.spec;
        let f = self.config.final_filters();
        let mut x = Vec::with_capacity(self.config.feature_width());
        x.extend_from_slice(&shared.pooled);
        let i = spec.index(agent);
        x.extend((0..f).map(|k| shared.maps[k * spec.len() + i]));
        x.push(T::of_usize(agent.x) / T::of_usize(spec.width() - 1));
        x.push(T::of_usize(agent.y) / T::of_usize(spec.height() - 1));
        x
    }

    fn dueling(&self, out: &[T]) -> Vec<T> {
        let adv = &out[1..];
        let mean = adv.iter().copied().sum::<T>() / T::of_usize(adv.len());
        adv.iter().map(|a| out[0] + *a - mean).collect()
    }

    /// Q-values with the agent placed at `agent`.
    pub fn q_at(&self, shared: &SharedFeatures<T>, agent: CellIndex) -> Vec<T> {
        let out = self
            .head
            .forward(&self.trunk_input(shared, agent))
            .expect("trunk input width is fixed by the config");
        self.dueling(&out)
    }

    pub fn q_values(&self, maps: &[T], spec: GridSpec, agent: CellIndex) -> Result<Vec<T>, NnError> {
        spec.check(agent).map_err(|e| NnError::Shape(e.to_string()))?;
        let shared = self.shared_features(maps, spec)?;
        Ok(self.q_at(&shared, agent))
    }

    /// Q-values for every relocation of the agent, in row-major cell order.
    pub fn q_all_cells(&self, maps: &[T], spec: GridSpec) -> Result<Vec<Vec<T>>, NnError> {
        let shared = self.shared_features(maps, spec)?;
        Ok(spec.cells().map(|c| self.q_at(&shared, c)).collect())
    }

    pub fn forward_cached(
        &self,
        maps: &[T],
        spec: GridSpec,
        agent: CellIndex,
    ) -> Result<(Vec<T>, QNetCache<T>), NnError> {
        self.check(maps, spec)?;
        spec.check(agent).map_err(|e| NnError::Shape(e.to_string()))?;
        let layers = self.conv_layers(maps, spec);
        let last = layers.last().unwrap();
        let shared = SharedFeatures {
            spec,
            maps: last.clone(),
            pooled: adaptive_pool(last, spec, self.config.final_filters(), self.config.pool),
        };
        let head = self.head.forward_cached(&self.trunk_input(&shared, agent))?;
        let q = self.dueling(head.output());
        Ok((
            q,
            QNetCache {
                spec,
                agent,
                layers,
                head,
            },
        ))
    }

    /// Accumulates parameter gradients for upstream `d_q` (one entry per
    /// action) into `grad`, laid out as [`QNet::params`].
    pub fn backward(&self, cache: &QNetCache<T>, d_q: &[T], grad: &mut [T]) {
        let spec = cache.spec;
        let n = spec.len();
        let a = T::of_usize(self.config.actions);
        let total: T = d_q.iter().copied().sum();
        let mut d_out = Vec::with_capacity(d_q.len() + 1);
        d_out.push(total);
        d_out.extend(d_q.iter().map(|g| *g - total / a));

        let (g_conv, g_head) = grad.split_at_mut(self.conv.len());
        let d_feat = self.head.backward(&cache.head, &d_out, g_head);

        let f = self.config.final_filters();
        let p = self.config.pool;
        let mut d_maps = adaptive_pool_backward(&d_feat[..f * p * p], spec, f, p);
        let i = spec.index(cache.agent);
        for k in 0..f {
            d_maps[k * n + i] += d_feat[f * p * p + k];
        }

        // Walk the conv stack backwards.
        let mut offsets = Vec::new();
        let mut off = 0;
        let mut cin = self.config.input_channels;
        for c in &self.config.convs {
            offsets.push((off, cin));
            off += c.filters * cin * c.kernel * c.kernel + c.filters;
            cin = c.filters;
        }
        for (l, c) in self.config.convs.iter().enumerate().rev() {
            let out = &cache.layers[l + 1];
            for (d, o) in d_maps.iter_mut().zip(out) {
                if *o <= T::zero() {
                    *d = T::zero();
                }
            }
            let (off, cin) = offsets[l];
            let nw = c.filters * cin * c.kernel * c.kernel;
            let (gw, gb) = g_conv[off..off + nw + c.filters].split_at_mut(nw);
            let want_dx = l > 0;
            d_maps = conv_backward(
                &cache.layers[l],
                spec,
                cin,
                &self.conv[off..off + nw],
                *c,
                &d_maps,
                gw,
                gb,
                want_dx,
            );
        }
    }
}

fn shift_range(len: usize, d: isize) -> std::ops::Range<usize> {
    let lo = (-d).max(0) as usize;
    let hi = (len as isize - d).clamp(0, len as isize) as usize;
    lo..hi.max(lo)
}

fn conv_forward<T: Scalar>(input: &[T], spec: GridSpec, cin: usize, w: &[T], b: &[T], c: ConvSpec) -> Vec<T> {
    let (wd, ht) = (spec.width(), spec.height());
    let n = spec.len();
    let k = c.kernel;
    let r = (k / 2) as isize;
    let mut out = vec![T::zero(); c.filters * n];
    for f in 0..c.filters {
        let o = &mut out[f * n..(f + 1) * n];
        o.iter_mut().for_each(|v| *v = b[f]);
        for ch in 0..cin {
            let src = &input[ch * n..(ch + 1) * n];
            for ky in 0..k {
                let dy = ky as isize - r;
                for kx in 0..k {
                    let dx = kx as isize - r;
                    let wv = w[((f * cin + ch) * k + ky) * k + kx];
                    if wv == T::zero() {
                        continue;
                    }
                    let xs = shift_range(wd, dx);
                    for y in shift_range(ht, dy) {
                        let sy = (y as isize + dy) as usize;
                        let dst = &mut o[y * wd + xs.start..y * wd + xs.end];
                        let s0 = (sy * wd) as isize + xs.start as isize + dx;
                        let s = &src[s0 as usize..s0 as usize + xs.len()];
                        for (d, v) in dst.iter_mut().zip(s) {
                            *d += wv * *v;
                        }
                    }
                }
            }
        }
    }
    out
}

#[allow(clippy::too_many_arguments)]
fn conv_backward<T: Scalar>(
    input: &[T],
    spec: GridSpec,
    cin: usize,
    w: &[T],
    c: ConvSpec,
    d_out: &[T],
    gw: &mut [T],
    gb: &mut [T],
    want_dx: bool,
) -> Vec<T> {
    let (wd, ht) = (spec.width(), spec.height());
    let n = spec.len();
    let k = c.kernel;
    let r = (k / 2) as isize;
    let mut d_in = if want_dx { vec![T::zero(); cin * n] } else { Vec::new() };
    for f in 0..c.filters {
        let g = &d_out[f * n..(f + 1) * n];
        gb[f] += g.iter().copied().sum();
        for ch in 0..cin {
            let src = &input[ch * n..(ch + 1) * n];
            for ky in 0..k {
                let dy = ky as isize - r;
                for kx in 0..k {
                    let dx = kx as isize - r;
                    let wi = ((f * cin + ch) * k + ky) * k + kx;
                    let wv = w[wi];
                    let xs = shift_range(wd, dx);
                    let mut acc = T::zero();
                    for y in shift_range(ht, dy) {
                        let sy = (y as isize + dy) as usize;
                        let go = &g[y * wd + xs.start..y * wd + xs.end];
                        let s0 = ((sy * wd) as isize + xs.start as isize + dx) as usize;
                        for (gv, v) in go.iter().zip(&src[s0..s0 + xs.len()]) {
                            acc += *gv * *v;
                        }
                        if want_dx {
                            let di = &mut d_in[ch * n + s0..ch * n + s0 + xs.len()];
                            for (d, gv) in di.iter_mut().zip(go) {
                                *d += wv * *gv;
                            }
                        }
                    }
                    gw[wi] += acc;
                }
            }
        }
    }
    d_in
}

fn pool_bounds(len: usize, bins: usize, i: usize) -> (usize, usize) {
    let lo = i * len / bins;
    let hi = ((i + 1) * len).div_ceil(bins);
    (lo, hi.max(lo + 1).min(len))
}

fn adaptive_pool<T: Scalar>(maps: &[T], spec: GridSpec, channels: usize, p: usize) -> Vec<T> {
    let (wd, ht) = (spec.width(), spec.height());
    let n = spec.len();
    let mut out = Vec::with_capacity(channels * p * p);
    for c in 0..channels {
        let m = &maps[c * n..(c + 1) * n];
        for py in 0..p {
            let (y0, y1) = pool_bounds(ht, p, py);
            for px in 0..p {
                let (x0, x1) = pool_bounds(wd, p, px);
                let mut s = T::zero();
                for y in y0..y1 {
                    s += m[y * wd + x0..y * wd + x1].iter().copied().sum::<T>();
                }
                out.push(s / T::of_usize((y1 - y0) * (x1 - x0)));
            }
        }
    }
    out
}

fn adaptive_pool_backward<T: Scalar>(d_pool: &[T], spec: GridSpec, channels: usize, p: usize) -> Vec<T> {
    let (wd, ht) = (spec.width(), spec.height());
    let n = spec.len();
    let mut d = vec![T::zero(); channels * n];
    for c in 0..channels {
        for py in 0..p {
            let (y0, y1) = pool_bounds(ht, p, py);
            for px in 0..p {
                let (x0, x1) = pool_bounds(wd, p, px);
                let g = d_pool[(c * p + py) * p + px] / T::of_usize((y1 - y0) * (x1 - x0));
                for y in y0..y1 {
                    for v in &mut d[c * n + y * wd + x0..c * n + y * wd + x1] {
                        *v += g;
                    }
                }
            }
        }
    }
    d
}

/// Adam state covering every parameter of a [`QNet`].
#[derive(Debug, Clone)]
pub struct QNetAdam<T> {
    inner: Adam<T>,
}

impl<T: Scalar> QNetAdam<T> {
    pub fn new(net: &QNet<T>, lr: f64) -> Self {
        Self {
            inner: Adam::new(net.param_count(), lr),
        }
    }

    pub fn step(&mut self, net: &mut QNet<T>, grad: &[T]) {
        let split = net.conv.len();
        let mut flat = net.params();
        self.inner.step(&mut flat, grad);
        net.conv.copy_from_slice(&flat[..split]);
        net.head.params_mut().copy_from_slice(&flat[split..]);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn tiny() -> QNetConfig {
        QNetConfig {
            input_channels: 2,
            input_scale: vec![0.5, 2.0],
            convs: vec![ConvSpec { kernel: 3, filters: 3 }, ConvSpec { kernel: 3, filters: 2 }],
            pool: 2,
            trunk: vec![5],
            actions: 4,
        }
    }

    fn random_maps(spec: GridSpec, c: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..c * spec.len()).map(|_| rng.random_range(0.0..2.0)).collect()
    }

    #[test]
    fn shapes_and_determinism() {
        let spec = GridSpec::new(5, 4).unwrap();
        let net = QNet::<f64>::new(QNetConfig::taxi_desk(), 3).unwrap();
        let maps = random_maps(spec, 2, 1);
        let a = net.q_values(&maps, spec, CellIndex::new(1, 2)).unwrap();
        let b = net.q_values(&maps, spec, CellIndex::new(1, 2)).unwrap();
        assert_eq!(a.len(), 25);
        assert_eq!(a, b);
        assert!(net.q_values(&maps[1..], spec, CellIndex::new(0, 0)).is_err());
        let wf = QNet::<f64>::new(QNetConfig::wildfire_desk(), 3).unwrap();
        let m3 = random_maps(spec, 3, 2);
        assert_eq!(wf.q_values(&m3, spec, CellIndex::new(0, 0)).unwrap().len(), 6);
    }

    #[test]
    fn all_cells_matches_single_queries() {
        let spec = GridSpec::new(6, 5).unwrap();
        let net = QNet::<f64>::new(tiny(), 9).unwrap();
        let maps = random_maps(spec, 2, 4);
        let all = net.q_all_cells(&maps, spec).unwrap();
        for (c, q) in spec.cells().zip(&all) {
            assert_eq!(&net.q_values(&maps, spec, c).unwrap(), q);
        }
    }

    #[test]
    fn dueling_ignores_constant_advantage_shift() {
        let spec = GridSpec::square(4).unwrap();
        let mut net = QNet::<f64>::new(tiny(), 1).unwrap();
        let maps = random_maps(spec, 2, 5);
        let cell = CellIndex::new(2, 1);
        let before = net.q_values(&maps, spec, cell).unwrap();
        let l = net.head.layer_count() - 1;
        let (_, b) = net.head.layer_ranges(l);
        for i in b.start + 1..b.end {
            net.head.params_mut()[i] += 3.25;
        }
        let after = net.q_values(&maps, spec, cell).unwrap();
        for (x, y) in before.iter().zip(&after) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let spec = GridSpec::new(5, 4).unwrap();
        let net = QNet::<f64>::new(tiny(), 11).unwrap();
        let maps = random_maps(spec, 2, 6);
        let agent = CellIndex::new(3, 2);
        let weights = [0.3, -1.2, 0.7, 2.0];
        let objective = |n: &QNet<f64>| -> f64 {
            n.q_values(&maps, spec, agent)
                .unwrap()
                .iter()
                .zip(&weights)
                .map(|(q, w)| q * w)
                .sum()
        };
        let (_, cache) = net.forward_cached(&maps, spec, agent).unwrap();
        let mut grad = vec![0.0; net.param_count()];
        net.backward(&cache, &weights, &mut grad);

        let base = net.params();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut checked = 0;
        while checked < 25 {
            let i = rng.random_range(0..base.len());
            if grad[i].abs() < 1e-6 {
                continue;
            }
            let h = 1e-5;
            let mut p = base.clone();
            p[i] += h;
            let mut up = net.clone();
            up.set_params(&p);
            p[i] -= 2.0 * h;
            let mut dn = net.clone();
            dn.set_params(&p);
            let fd = (objective(&up) - objective(&dn)) / (2.0 * h);
            let rel = (fd - grad[i]).abs() / fd.abs().max(grad[i].abs());
            assert!(rel < 1e-4, "param {i}: fd {fd} bp {}", grad[i]);
            checked += 1;
        }
    }

    #[test]
    fn pool_covers_small_grids() {
        for (w, h) in [(2, 2), (3, 7), (10, 10)] {
            let spec = GridSpec::new(w, h).unwrap();
            let ones = vec![1.0f64; spec.len()];
            let p = adaptive_pool(&ones, spec, 1, 4);
            assert!(p.iter().all(|v| (*v - 1.0).abs() < 1e-12));
        }
    }

    #[test]
    fn adam_step_moves_parameters() {
        let mut net = QNet::<f64>::new(tiny(), 2).unwrap();
        let before = net.params();
        let mut opt = QNetAdam::new(&net, 0.01);
        let grad = vec![1.0; net.param_count()];
        opt.step(&mut net, &grad);
        assert!(net.params().iter().zip(&before).all(|(a, b)| a < b));
    }
}
